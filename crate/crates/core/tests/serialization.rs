mod common;

use tweetsent::model::{
    build_model, load_model, save_model, ModelConfig, ModelError, Variant, FORMAT_VERSION,
};
use tweetsent::preprocess::{Preprocessor, StopWordList, TokenSequence};
use tweetsent::tensor::Rng;

fn trained_ish(variant: Variant) -> tweetsent::Model {
    let (vocab, _) = common::encode(&common::keyword_corpus(), 12);
    let cfg = ModelConfig {
        variant,
        seq_len: 12,
        embed_dim: 6,
        filters: 5,
        hidden: 4,
        ..ModelConfig::default()
    };
    build_model(cfg, vocab, &Rng::new(31)).unwrap()
}

#[test]
fn round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    for variant in [Variant::CnnLstm, Variant::CnnOnly, Variant::LstmOnly] {
        let model = trained_ish(variant);
        let path = dir.path().join(format!("{variant}.bin"));
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.config, model.config);
        assert_eq!(loaded.vocab, model.vocab);
        assert_eq!(loaded.preprocessor, model.preprocessor);

        let mut rng = Rng::new(17);
        for _ in 0..100 {
            let len = 1 + rng.below(12);
            let mut ids: Vec<u32> = (0..len)
                .map(|_| 1 + rng.below(model.vocab.len() - 1) as u32)
                .collect();
            ids.resize(12, 0);
            let seq = TokenSequence::from_ids(ids);
            let a = model.forward(&seq).unwrap();
            let b = loaded.forward(&seq).unwrap();
            assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
        }
    }
}

#[test]
fn preprocessor_settings_survive() {
    let mut pre = Preprocessor::default();
    pre.stop_words = StopWordList::from_words(["virus", "cases"]);
    pre.filter.drop_hashtag_words = true;
    let model = trained_ish(Variant::CnnOnly).with_preprocessor(pre.clone());
    let back = tweetsent::Model::from_bytes(&model.to_bytes()).unwrap();
    assert_eq!(back.preprocessor, pre);
}

#[test]
fn truncated_file_is_corrupt() {
    let bytes = trained_ish(Variant::CnnLstm).to_bytes();
    for cut in [bytes.len() - 1, bytes.len() / 2, 13] {
        let err = tweetsent::Model::from_bytes(&bytes[..cut]).unwrap_err();
        assert!(
            matches!(err, ModelError::CorruptFile(_)),
            "cut {cut}: {err:?}"
        );
    }
}

#[test]
fn flipped_byte_is_corrupt() {
    let mut bytes = trained_ish(Variant::LstmOnly).to_bytes();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    assert!(matches!(
        tweetsent::Model::from_bytes(&bytes),
        Err(ModelError::CorruptFile(_))
    ));
}

#[test]
fn bad_magic_is_corrupt() {
    let mut bytes = trained_ish(Variant::CnnOnly).to_bytes();
    bytes[0] = b'X';
    assert!(matches!(
        tweetsent::Model::from_bytes(&bytes),
        Err(ModelError::CorruptFile(_))
    ));
}

#[test]
fn bumped_version_is_rejected() {
    let mut bytes = trained_ish(Variant::CnnLstm).to_bytes();
    bytes[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    let err = tweetsent::Model::from_bytes(&bytes).unwrap_err();
    assert!(matches!(
        err,
        ModelError::FormatVersionMismatch { found, expected } if found == FORMAT_VERSION + 1 && expected == FORMAT_VERSION
    ));
}

#[test]
fn missing_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_model(dir.path().join("nope.bin")).unwrap_err();
    assert!(matches!(err, ModelError::Io { .. }));
}
