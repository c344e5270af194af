use proptest::prelude::*;

use tweetsent::corpus::{
    stratified_split, CorpusError, LabeledCorpus, LabeledExample, Sentiment, SplitSpec,
};
use tweetsent::metrics::{confusion, macro_report, one_vs_rest, BinaryCounts};
use tweetsent::preprocess::{
    encode_and_pad, preprocess_pipeline, Preprocessor, StopWordList, Vocabulary, PAD_ID,
};
use tweetsent::tensor::{Matrix, Rng};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0f64..1.0, rows * cols)
        .prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
}

fn chain() -> impl Strategy<Value = (Matrix, Matrix, Matrix)> {
    (1usize..6, 1usize..6, 1usize..6, 1usize..6)
        .prop_flat_map(|(a, b, c, d)| (matrix(a, b), matrix(b, c), matrix(c, d)))
}

fn counts() -> impl Strategy<Value = BinaryCounts> {
    (0u64..200, 0u64..200, 0u64..200, 0u64..200)
        .prop_map(|(tp, fp, fn_, tn)| BinaryCounts::new(tp, fp, fn_, tn))
}

fn labels(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..3, len)
}

proptest! {
    #[test]
    fn matmul_is_associative((a, b, c) in chain()) {
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        for (x, y) in left.data().iter().zip(right.data()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn split_partitions_the_corpus(
        classes in labels(1..120),
        train in 0.3f64..0.9,
        val_share in 0.0f64..0.9,
        seed in any::<u64>(),
    ) {
        let val = (1.0 - train) * val_share * 0.95;
        let corpus = LabeledCorpus::new(
            classes
                .iter()
                .enumerate()
                .map(|(i, &c)| LabeledExample::new(format!("t{i}"), Sentiment::ALL[c]).unwrap())
                .collect(),
            "prop",
        );
        let spec = SplitSpec { train_fraction: train, val_fraction: val, seed };
        match stratified_split(&corpus, &spec) {
            Ok(split) => {
                let mut all: Vec<usize> = split
                    .train_indices
                    .iter()
                    .chain(&split.val_indices)
                    .chain(&split.test_indices)
                    .copied()
                    .collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..corpus.len()).collect::<Vec<_>>());
                let sum = split.train.class_histogram() + split.val.class_histogram() + split.test.class_histogram();
                prop_assert_eq!(sum, corpus.class_histogram());
                prop_assert_eq!(stratified_split(&corpus, &spec).unwrap(), split);
            }
            Err(CorpusError::DegenerateSplit { .. }) => {}
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn pipeline_output_has_no_forbidden_characters(raw in "\\PC{0,80}") {
        for tok in preprocess_pipeline(&raw, &StopWordList::english()) {
            prop_assert!(!tok.is_empty());
            for ch in tok.chars() {
                prop_assert!(
                    !ch.is_whitespace() && !ch.is_ascii_uppercase() && !ch.is_ascii_punctuation(),
                    "{:?} in {:?}", ch, tok
                );
            }
        }
    }

    #[test]
    fn pipeline_handles_twitter_noise(
        parts in prop::collection::vec(
            prop_oneof![
                "[A-Za-z]{1,8}",
                "#[A-Za-z]{1,8}",
                "@[a-z_]{1,8}:?",
                "https?://[a-z./]{1,12}",
                Just("RT".to_string()),
                "[!?.,;:'\"()]{1,3}",
            ],
            0..12,
        )
    ) {
        let raw = parts.join(" ");
        for tok in preprocess_pipeline(&raw, &StopWordList::english()) {
            prop_assert!(tok.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()), "{:?}", tok);
        }
    }

    #[test]
    fn cleaning_is_idempotent_on_clean_text(raw in "[a-z0-9 ]{0,60}|(rt |[a-z]{1,6} ){0,8}") {
        let pre = Preprocessor::default();
        let once = pre.clean(&raw);
        let twice = pre.clean(&once.join(" "));
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn encode_length_is_always_n(
        tokens in prop::collection::vec("[a-c]{1,2}", 0..20),
        n in 1usize..16,
    ) {
        let vocab = Vocabulary::build(&[vec!["a", "b", "ab"]], 1);
        let seq = encode_and_pad(&tokens, &vocab, n);
        prop_assert_eq!(seq.len(), n);
        prop_assert_eq!(seq.true_length, tokens.len().min(n));
        prop_assert!(seq.ids[seq.true_length..].iter().all(|&i| i == PAD_ID));
        prop_assert!(seq.ids[..seq.true_length].iter().all(|&i| i != PAD_ID));
    }

    #[test]
    fn vocabulary_round_trip(docs in prop::collection::vec(prop::collection::vec("[a-e]{1,3}", 0..8), 0..8)) {
        let vocab = Vocabulary::build(&docs, 1);
        for tok in docs.iter().flatten() {
            let id = vocab.lookup(tok).unwrap();
            prop_assert!(id >= 2);
            prop_assert_eq!(vocab.token(id), Some(tok.as_str()));
        }
        let rebuilt = Vocabulary::from_tokens(vocab.corpus_tokens().to_vec(), 1).unwrap();
        prop_assert_eq!(rebuilt, vocab);
    }

    #[test]
    fn confusion_matches_naive_counting(pairs in prop::collection::vec((0usize..3, 0usize..3), 0..300)) {
        let (preds, actual): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let cm = confusion(&preds, &actual).unwrap();
        let mut naive = [[0u64; 3]; 3];
        for (p, a) in &pairs {
            naive[*p][*a] += 1;
        }
        prop_assert_eq!(cm.cells, naive);
        prop_assert_eq!(cm.total(), pairs.len() as u64);
        for class in Sentiment::ALL {
            let b = one_vs_rest(&cm, class);
            prop_assert_eq!(b.tp + b.fp + b.fn_ + b.tn, cm.total());
        }
    }

    #[test]
    fn auc_is_balanced_recall_and_specificity(c in counts()) {
        prop_assume!(c.fp + c.tn > 0);
        let specificity = c.tn as f64 / (c.tn + c.fp) as f64;
        prop_assert!((c.auc() - (c.recall() + specificity) / 2.0).abs() <= 1e-12);
    }

    #[test]
    fn f1_lies_between_precision_and_recall(c in counts()) {
        let (p, r, f) = (c.precision(), c.recall(), c.f1());
        if p > 0.0 && r > 0.0 {
            prop_assert!(p.min(r) - 1e-12 <= f && f <= p.max(r) + 1e-12);
        }
    }

    #[test]
    fn measures_lie_in_unit_interval(c in counts()) {
        for v in [c.precision(), c.recall(), c.f1(), c.accuracy(), c.auc()] {
            prop_assert!((0.0..=1.0).contains(&v), "{}", v);
        }
    }
}

#[test]
fn macro_precision_of_random_guessing() {
    let mut rng = Rng::new(2024);
    let n = 10_000;
    let actual: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let preds: Vec<usize> = (0..n).map(|_| rng.below(3)).collect();
    let report = macro_report(&confusion(&preds, &actual).unwrap());
    assert!(
        (report.macro_avg.precision - 1.0 / 3.0).abs() <= 0.02,
        "{}",
        report.macro_avg.precision
    );
}
