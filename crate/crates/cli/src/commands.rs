use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use tweetsent::corpus::{load_corpus, stratified_split, SplitSpec};
use tweetsent::metrics::{confusion, macro_report};
use tweetsent::model::{
    build_model, evaluate, load_model, save_model, train_with, AdamConfig, EpochHistory,
    EpochRecord, ModelError, OptimizerKind,
};
use tweetsent::preprocess::{FilterOptions, Vocabulary};
use tweetsent::tensor::Rng;
use tweetsent::{EncodedCorpus, ModelConfig, Preprocessor, StopWordList, TrainConfig};

use crate::config::{pick, ActivationArg, FileConfig, OptimizerArg, VariantArg};
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "ingest.toml";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const STOPWORDS_FILE: &str = "stopwords.txt";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const PARTITIONS: [&str; 3] = ["train", "val", "test"];

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let mut out = create(path)?;
    body(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(path, e))
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

// ---------------------------------------------------------------------------
// ingest

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Labeled CSV with a header row.
    #[arg(long, value_name = "CSV")]
    pub input: PathBuf,
    /// Output directory for the cleaned, split and encoded corpus.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Name of the text column [default: text]
    #[arg(long)]
    pub text_column: Option<String>,
    /// Name of the label column holding -1, 0 or 1 [default: label]
    #[arg(long)]
    pub label_column: Option<String>,
    /// Stop-word file, one word per line; `#` starts a comment [default: built-in English list]
    #[arg(long, value_name = "FILE")]
    pub stopwords: Option<PathBuf>,
    /// Drop whole `#word` tokens instead of only the `#` [default: false]
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub drop_hashtag_words: Option<bool>,
    /// Minimum training-set frequency for a token to enter the vocabulary [default: 1]
    #[arg(long)]
    pub min_frequency: Option<u32>,
    /// Padded sequence length [default: 32]
    #[arg(long)]
    pub seq_len: Option<usize>,
    /// Fraction of each class assigned to training [default: 0.8]
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Fraction of each class assigned to validation [default: 0.1]
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Split seed [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Settings recorded by `ingest` and consumed by `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source: String,
    pub text_column: String,
    pub label_column: String,
    pub seq_len: usize,
    pub min_frequency: u32,
    pub drop_hashtag_words: bool,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub split_seed: u64,
    pub vocabulary_size: usize,
    pub train_examples: usize,
    pub val_examples: usize,
    pub test_examples: usize,
}

pub fn ingest(args: &IngestArgs, file: &FileConfig) -> Result<(), CliError> {
    let data = &file.data;
    let text_column = pick(
        args.text_column.clone(),
        data.text_column.clone(),
        "text".into(),
    );
    let label_column = pick(
        args.label_column.clone(),
        data.label_column.clone(),
        "label".into(),
    );
    let seq_len = pick(args.seq_len, data.seq_len, ModelConfig::default().seq_len);
    let min_frequency = pick(args.min_frequency, data.min_frequency, 1);
    let drop_hashtag_words = pick(args.drop_hashtag_words, data.drop_hashtag_words, false);
    let defaults = SplitSpec::default();
    let spec = SplitSpec {
        train_fraction: pick(
            args.train_fraction,
            file.split.train_fraction,
            defaults.train_fraction,
        ),
        val_fraction: pick(
            args.val_fraction,
            file.split.val_fraction,
            defaults.val_fraction,
        ),
        seed: pick(args.seed, file.split.seed, defaults.seed),
    };
    if seq_len == 0 {
        return Err(CliError::Usage("seq_len must be at least 1".into()));
    }
    if min_frequency == 0 {
        return Err(CliError::Usage("min_frequency must be at least 1".into()));
    }
    let stop_words = match args.stopwords.as_ref().or(data.stopwords.as_ref()) {
        Some(path) => StopWordList::load(path).map_err(|e| CliError::io(path, e))?,
        None => StopWordList::english(),
    };
    let preprocessor = Preprocessor::new(stop_words, FilterOptions { drop_hashtag_words });

    let corpus = load_corpus(&args.input, &text_column, &label_column)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let histogram = corpus.class_histogram();
    // Written before splitting so that corpora too small to split still
    // get their histogram.
    write_file(&args.out.join(HISTOGRAM_FILE), |w| histogram.write_csv(w))?;
    let split = stratified_split(&corpus, &spec)?;
    let train_docs: Vec<Vec<String>> = split
        .train
        .examples
        .iter()
        .map(|e| preprocessor.process(&e.text))
        .collect();
    let vocab = Vocabulary::build(&train_docs, min_frequency);

    for (name, part) in PARTITIONS
        .iter()
        .zip([&split.train, &split.val, &split.test])
    {
        let encoded = EncodedCorpus::encode(part, &preprocessor, &vocab, seq_len);
        write_file(&args.out.join(format!("{name}.csv")), |w| {
            encoded.write_csv(w)
        })?;
    }
    write_file(&args.out.join(VOCAB_FILE), |w| write_vocab(&vocab, w))?;
    write_file(&args.out.join(STOPWORDS_FILE), |w| {
        writeln!(w, "# stop words applied during ingest")?;
        preprocessor
            .stop_words
            .iter()
            .try_for_each(|s| writeln!(w, "{s}"))
    })?;
    let manifest = Manifest {
        source: args.input.display().to_string(),
        text_column,
        label_column,
        seq_len,
        min_frequency,
        drop_hashtag_words,
        train_fraction: spec.train_fraction,
        val_fraction: spec.val_fraction,
        split_seed: spec.seed,
        vocabulary_size: vocab.len(),
        train_examples: split.train.len(),
        val_examples: split.val.len(),
        test_examples: split.test.len(),
    };
    let text = toml::to_string(&manifest).expect("manifest serializes");
    write_file(&args.out.join(MANIFEST_FILE), |w| {
        w.write_all(text.as_bytes())
    })?;

    println!(
        "ingested {} examples (negative {}, neutral {}, positive {}); train {}, val {}, test {}; vocabulary {}",
        corpus.len(),
        histogram.0[0],
        histogram.0[1],
        histogram.0[2],
        manifest.train_examples,
        manifest.val_examples,
        manifest.test_examples,
        vocab.len()
    );
    Ok(())
}

fn write_vocab(vocab: &Vocabulary, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "# min_frequency={}", vocab.min_frequency())?;
    vocab
        .corpus_tokens()
        .iter()
        .try_for_each(|t| writeln!(w, "{t}"))
}

fn read_vocab(path: &Path) -> Result<Vocabulary, CliError> {
    let text = read_file(path)?;
    let mut lines = text.lines();
    let min_frequency = lines
        .next()
        .and_then(|h| h.strip_prefix("# min_frequency="))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| {
            CliError::Data(format!(
                "{}: missing `# min_frequency=` header",
                path.display()
            ))
        })?;
    Vocabulary::from_tokens(
        lines.filter(|l| !l.is_empty()).map(str::to_string),
        min_frequency,
    )
    .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_cache(path: &Path) -> Result<EncodedCorpus, CliError> {
    EncodedCorpus::read_csv(&read_file(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `ingest`.
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
    /// Output model file [default: <DATA>/model.bin]
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Output history CSV [default: history.csv next to the model]
    #[arg(long, value_name = "FILE")]
    pub history: Option<PathBuf>,
    /// Architecture [default: cnn-lstm]
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Embedding dimension [default: 64]
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Convolution window in words [default: 3]
    #[arg(long)]
    pub window: Option<usize>,
    /// Number of convolution filters [default: 64]
    #[arg(long)]
    pub filters: Option<usize>,
    /// LSTM hidden size [default: 64]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Convolution activation [default: tanh]
    #[arg(long, value_enum)]
    pub activation: Option<ActivationArg>,
    /// Number of epochs; 0 saves the freshly initialized model [default: 60]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Optimizer [default: adam]
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    /// Adam first-moment decay [default: 0.9]
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Adam second-moment decay [default: 0.999]
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Adam denominator offset [default: 1e-8]
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Seed for initialization and shuffling [default: 42]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Shuffle the training set every epoch [default: true]
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub shuffle: Option<bool>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

pub fn train(args: &TrainArgs, file: &FileConfig) -> Result<(), CliError> {
    let manifest: Manifest = toml::from_str(&read_file(&args.data.join(MANIFEST_FILE))?)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.data.join(MANIFEST_FILE).display())))?;
    let vocab = read_vocab(&args.data.join(VOCAB_FILE))?;
    let stops_path = args.data.join(STOPWORDS_FILE);
    let stop_words = StopWordList::load(&stops_path).map_err(|e| CliError::io(&stops_path, e))?;
    let preprocessor = Preprocessor::new(
        stop_words,
        FilterOptions {
            drop_hashtag_words: manifest.drop_hashtag_words,
        },
    );
    let train_set = read_cache(&args.data.join("train.csv"))?;
    let val_set = read_cache(&args.data.join("val.csv"))?;
    if val_set.is_empty() {
        return Err(CliError::Usage(
            "validation partition is empty; re-run ingest with a larger --val-fraction".into(),
        ));
    }

    let (m, t) = (&file.model, &file.train);
    let md = ModelConfig::default();
    let config = ModelConfig {
        variant: pick(args.variant, m.variant, VariantArg::CnnLstm).into(),
        seq_len: manifest.seq_len,
        embed_dim: pick(args.embed_dim, m.embed_dim, md.embed_dim),
        window: pick(args.window, m.window, md.window),
        filters: pick(args.filters, m.filters, md.filters),
        hidden: pick(args.hidden, m.hidden, md.hidden),
        activation: pick(args.activation, m.activation, ActivationArg::Tanh).into(),
    };
    let td = TrainConfig::default();
    let ad = AdamConfig::default();
    let optimizer = match pick(args.optimizer, t.optimizer, OptimizerArg::Adam) {
        OptimizerArg::Sgd => OptimizerKind::Sgd,
        OptimizerArg::Adam => OptimizerKind::Adam(AdamConfig {
            beta1: pick(args.beta1, t.beta1, ad.beta1),
            beta2: pick(args.beta2, t.beta2, ad.beta2),
            epsilon: pick(args.epsilon, t.epsilon, ad.epsilon),
        }),
    };
    let epochs = pick(args.epochs, t.epochs, td.epochs);
    let train_cfg = TrainConfig {
        epochs: epochs.max(1),
        batch_size: pick(args.batch_size, t.batch_size, td.batch_size),
        learning_rate: pick(args.lr, t.learning_rate, td.learning_rate),
        optimizer,
        seed: pick(args.seed, t.seed, td.seed),
        shuffle: pick(args.shuffle, t.shuffle, td.shuffle),
    };
    train_cfg.validate()?;

    let model_path = args
        .model
        .clone()
        .unwrap_or_else(|| args.data.join("model.bin"));
    let history_path = args.history.clone().unwrap_or_else(|| {
        model_path
            .parent()
            .map(|p| p.join("history.csv"))
            .unwrap_or_else(|| PathBuf::from("history.csv"))
    });

    let model =
        build_model(config, vocab, &Rng::new(train_cfg.seed))?.with_preprocessor(preprocessor);
    if epochs == 0 {
        save_model(&model, &model_path)?;
        write_file(&history_path, |w| EpochHistory::default().write_csv(w))?;
        let val = evaluate(&model, &val_set)?;
        println!("no epochs run; initial val accuracy {:.4}", val.accuracy);
        return Ok(());
    }

    let mut seen = EpochHistory::default();
    let quiet = args.quiet;
    let result = train_with(
        model,
        &train_set,
        &val_set,
        &train_cfg,
        |r: &EpochRecord| {
            if !quiet {
                eprintln!(
                    "epoch {:>3}  train loss {:.4} acc {:.4}  val loss {:.4} acc {:.4}",
                    r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
                );
            }
            seen.records.push(*r);
        },
    );
    let (model, history) = match result {
        Ok(done) => done,
        Err(err @ ModelError::NonFiniteLoss { .. }) => {
            // Keep the completed epochs for diagnosis.
            write_file(&history_path, |w| seen.write_csv(w))?;
            return Err(err.into());
        }
        Err(err) => return Err(err.into()),
    };
    save_model(&model, &model_path)?;
    write_file(&history_path, |w| history.write_csv(w))?;
    let last = history.last().expect("at least one epoch");
    println!("final val accuracy {:.4}", last.val_accuracy);
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model file written by `train`.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Encoded partition written by `ingest` (e.g. <DIR>/test.csv).
    #[arg(
        long,
        value_name = "FILE",
        conflicts_with = "csv",
        required_unless_present = "csv"
    )]
    pub data: Option<PathBuf>,
    /// Raw labeled CSV, cleaned and encoded with the model's own settings.
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
    /// Text column of --csv [default: text]
    #[arg(long)]
    pub text_column: Option<String>,
    /// Label column of --csv [default: label]
    #[arg(long)]
    pub label_column: Option<String>,
    /// Metrics report CSV [default: report.csv next to the model]
    #[arg(long, value_name = "FILE")]
    pub report: Option<PathBuf>,
    /// Confusion matrix CSV [default: confusion.csv next to the model]
    #[arg(long, value_name = "FILE")]
    pub confusion: Option<PathBuf>,
}

pub fn evaluate_cmd(args: &EvaluateArgs, file: &FileConfig) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let corpus = match (&args.data, &args.csv) {
        (Some(path), _) => read_cache(path)?,
        (None, Some(path)) => {
            let text_column = pick(
                args.text_column.clone(),
                file.data.text_column.clone(),
                "text".into(),
            );
            let label_column = pick(
                args.label_column.clone(),
                file.data.label_column.clone(),
                "label".into(),
            );
            let raw = load_corpus(path, &text_column, &label_column)?;
            EncodedCorpus::encode(
                &raw,
                &model.preprocessor,
                &model.vocab,
                model.config.seq_len,
            )
        }
        (None, None) => return Err(CliError::Usage("one of --data or --csv is required".into())),
    };
    if corpus.is_empty() {
        return Err(CliError::Data("evaluation corpus is empty".into()));
    }
    let eval = evaluate(&model, &corpus)?;
    let preds: Vec<usize> = eval.predictions.iter().map(|s| s.index()).collect();
    let actual: Vec<usize> = corpus.labels().iter().map(|s| s.index()).collect();
    let cm = confusion(&preds, &actual)?;
    let report = macro_report(&cm);

    let beside_model = |name: &str| {
        args.model
            .parent()
            .map(|p| p.join(name))
            .unwrap_or_else(|| PathBuf::from(name))
    };
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| beside_model("report.csv"));
    let confusion_path = args
        .confusion
        .clone()
        .unwrap_or_else(|| beside_model("confusion.csv"));
    write_file(&report_path, |w| report.write_csv(w))?;
    write_file(&confusion_path, |w| cm.write_csv(w))?;
    println!(
        "examples {}  loss {:.4}  accuracy {:.4}  macro precision {:.4}  recall {:.4}  f1 {:.4}  auc {:.4}",
        corpus.len(),
        eval.loss,
        report.accuracy,
        report.macro_avg.precision,
        report.macro_avg.recall,
        report.macro_avg.f1,
        report.macro_avg.auc
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// predict

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file written by `train`.
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Texts to classify; when none are given, one text per stdin line.
    pub texts: Vec<String>,
}

pub const PREDICT_HEADER: &str = "label,p_negative,p_neutral,p_positive";

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let texts: Vec<String> = if args.texts.is_empty() {
        std::io::stdin()
            .lock()
            .lines()
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Data(format!("stdin: {e}")))?
    } else {
        args.texts.clone()
    };
    let mut rows = Vec::with_capacity(texts.len());
    for text in &texts {
        rows.push(model.predict(&model.encode_text(text))?);
    }
    let render = |out: &mut dyn Write| -> std::io::Result<()> {
        writeln!(out, "{PREDICT_HEADER}")?;
        for (label, probs) in &rows {
            writeln!(out, "{label},{},{},{}", probs[0], probs[1], probs[2])?;
        }
        out.flush()
    };
    to_stdout(render)
}

/// A closed pipe (e.g. `| head`) ends output quietly.
fn to_stdout(render: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    match render(&mut std::io::stdout().lock()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(CliError::Data(format!("stdout: {e}")))
        }
        _ => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// history-export

#[derive(Debug, Args)]
pub struct HistoryExportArgs {
    /// History CSVs written by `train`, as RUN=PATH or PATH (run named
    /// after the file stem).
    #[arg(required = true, value_name = "RUN=PATH")]
    pub inputs: Vec<String>,
    /// Combined CSV [default: stdout]
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub const EXPORT_HEADER: &str = "run,epoch,train_loss,train_acc,val_loss,val_acc";

/// Long-format merge of several histories, ready for plotting one curve
/// per run.
pub fn history_export(args: &HistoryExportArgs) -> Result<(), CliError> {
    let mut runs = Vec::new();
    for input in &args.inputs {
        let (run, path) = match input.split_once('=') {
            Some((run, path)) => (run.to_string(), PathBuf::from(path)),
            None => {
                let path = PathBuf::from(input);
                let run = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                (run, path)
            }
        };
        if run.is_empty() || run.contains(',') {
            return Err(CliError::Usage(format!("invalid run name {run:?}")));
        }
        let history = EpochHistory::read_csv(&read_file(&path)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        runs.push((run, history));
    }
    let render = |w: &mut dyn Write| -> std::io::Result<()> {
        writeln!(w, "{EXPORT_HEADER}")?;
        for (run, history) in &runs {
            for r in &history.records {
                writeln!(
                    w,
                    "{run},{},{},{},{},{}",
                    r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
                )?;
            }
        }
        Ok(())
    };
    match &args.out {
        Some(path) => write_file(path, |w| render(w)),
        None => to_stdout(render),
    }
}
