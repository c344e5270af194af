//! Architecture assembly (CNN-LSTM, CNN-only, LSTM-only), the training
//! loop with SGD / Adam, evaluation, and the binary model file.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::Sentiment;
use crate::layers::{
    cross_entropy, cross_entropy_grad, Activation, Conv1d, ConvCache, ConvGrad, DenseGrad,
    DenseSoftmax, Embedding, LayerError, Lstm, LstmCache, LstmGrad, NUM_CLASSES,
};
use crate::preprocess::{
    EncodedCorpus, FilterOptions, Preprocessor, StopWordList, TokenSequence, Vocabulary,
};
use crate::tensor::{Matrix, Rng, ShapeMismatch};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid training configuration: {0}")]
    InvalidTrainConfig(String),
    #[error("{0} corpus is empty")]
    EmptyCorpus(&'static str),
    #[error("sequence has length {found}, model expects {expected}")]
    SequenceLength { expected: usize, found: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Shape(#[from] ShapeMismatch),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Variant {
    #[default]
    CnnLstm,
    CnnOnly,
    LstmOnly,
}

impl Variant {
    pub fn has_conv(self) -> bool {
        matches!(self, Variant::CnnLstm | Variant::CnnOnly)
    }

    pub fn has_lstm(self) -> bool {
        matches!(self, Variant::CnnLstm | Variant::LstmOnly)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::CnnLstm => "cnn-lstm",
            Variant::CnnOnly => "cnn",
            Variant::LstmOnly => "lstm",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cnn-lstm" => Ok(Variant::CnnLstm),
            "cnn" => Ok(Variant::CnnOnly),
            "lstm" => Ok(Variant::LstmOnly),
            other => Err(format!(
                "unknown variant {other:?} (expected cnn-lstm, cnn or lstm)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Padded sequence length `n`.
    pub seq_len: usize,
    /// Word-vector dimension `k`.
    pub embed_dim: usize,
    /// Convolution window `h`.
    pub window: usize,
    /// Number of filters `m`.
    pub filters: usize,
    /// LSTM hidden size.
    pub hidden: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::CnnLstm,
            seq_len: 32,
            embed_dim: 64,
            window: 3,
            filters: 64,
            hidden: 64,
            activation: Activation::Tanh,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("seq_len", self.seq_len),
            ("embed_dim", self.embed_dim),
            ("window", self.window),
            ("filters", self.filters),
            ("hidden", self.hidden),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::InvalidConfig(format!(
                "{name} must be at least 1"
            )));
        }
        if self.window > self.seq_len {
            return Err(ModelError::InvalidConfig(format!(
                "window {} exceeds sequence length {}",
                self.window, self.seq_len
            )));
        }
        Ok(())
    }

    /// Closed-form parameter count for a vocabulary of `vocab` entries.
    pub fn parameter_count(&self, vocab: usize) -> usize {
        let (k, h, m, d) = (self.embed_dim, self.window, self.filters, self.hidden);
        let conv = m * h * k + m;
        let lstm = |input: usize| 4 * d * (input + d) + 4 * d;
        let dense = |input: usize| NUM_CLASSES * input + NUM_CLASSES;
        vocab * k
            + match self.variant {
                Variant::CnnLstm => conv + lstm(m) + dense(d),
                Variant::CnnOnly => conv + dense(m),
                Variant::LstmOnly => lstm(k) + dense(d),
            }
    }
}

const STREAM_EMBEDDING: u64 = 1;
const STREAM_CONV: u64 = 2;
const STREAM_LSTM: u64 = 3;
const STREAM_DENSE: u64 = 4;
/// Epoch shuffles use streams above this offset so they never coincide with
/// the initialization streams when the two seeds are equal.
const STREAM_SHUFFLE_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub preprocessor: Preprocessor,
    pub embedding: Embedding,
    pub conv: Option<Conv1d>,
    pub lstm: Option<Lstm>,
    pub dense: DenseSoftmax,
}

/// Gradient buffers shaped like a model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: Matrix,
    pub conv: Option<ConvGrad>,
    pub lstm: Option<LstmGrad>,
    pub dense: DenseGrad,
}

impl Gradients {
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.embedding];
        if let Some(c) = &self.conv {
            out.extend([&c.weight, &c.bias]);
        }
        if let Some(l) = &self.lstm {
            out.extend(l.weights.iter());
            out.extend(l.biases.iter());
        }
        out.extend([&self.dense.weight, &self.dense.bias]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.embedding];
        if let Some(c) = &mut self.conv {
            out.extend([&mut c.weight, &mut c.bias]);
        }
        if let Some(l) = &mut self.lstm {
            out.extend(l.weights.iter_mut());
            out.extend(l.biases.iter_mut());
        }
        out.extend([&mut self.dense.weight, &mut self.dense.bias]);
        out
    }

    pub fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }
}

/// Builds a freshly initialized model. Each parameter tensor draws from
/// its own stream of `rng`, so the variant does not change how shared
/// layers are initialized.
pub fn build_model(config: ModelConfig, vocab: Vocabulary, rng: &Rng) -> Result<Model, ModelError> {
    config.validate()?;
    if vocab.len() < 2 {
        return Err(ModelError::InvalidConfig(
            "vocabulary is missing reserved ids".into(),
        ));
    }
    let embedding = Embedding::new(
        &mut rng.stream(STREAM_EMBEDDING),
        vocab.len(),
        config.embed_dim,
    );
    let conv = config.variant.has_conv().then(|| {
        Conv1d::new(
            &mut rng.stream(STREAM_CONV),
            config.filters,
            config.window,
            config.embed_dim,
            config.activation,
        )
    });
    let lstm_input = match config.variant {
        Variant::LstmOnly => config.embed_dim,
        _ => config.filters,
    };
    let lstm = config
        .variant
        .has_lstm()
        .then(|| Lstm::new(&mut rng.stream(STREAM_LSTM), lstm_input, config.hidden));
    let head_input = match config.variant {
        Variant::CnnOnly => config.filters,
        _ => config.hidden,
    };
    let dense = DenseSoftmax::new(&mut rng.stream(STREAM_DENSE), head_input);
    Ok(Model {
        config,
        vocab,
        preprocessor: Preprocessor::default(),
        embedding,
        conv,
        lstm,
        dense,
    })
}

struct ForwardCache {
    sentence: Matrix,
    conv: Option<ConvCache>,
    /// Length of the conv output, used by the mean-pool backward.
    conv_steps: usize,
    lstm: Option<LstmCache>,
    head_input: Vec<f64>,
    probs: [f64; NUM_CLASSES],
}

fn mean_over_rows(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (o, &x) in out.iter_mut().zip(m.row(r)) {
            *o += x;
        }
    }
    let n = m.rows() as f64;
    out.iter_mut().for_each(|x| *x /= n);
    out
}

impl Model {
    pub fn with_preprocessor(mut self, preprocessor: Preprocessor) -> Self {
        self.preprocessor = preprocessor;
        self
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut out = vec![&self.embedding.table];
        if let Some(c) = &self.conv {
            out.extend([&c.weight, &c.bias]);
        }
        if let Some(l) = &self.lstm {
            out.extend(l.weights.iter());
            out.extend(l.biases.iter());
        }
        out.extend([&self.dense.weight, &self.dense.bias]);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.embedding.table];
        if let Some(c) = &mut self.conv {
            out.extend([&mut c.weight, &mut c.bias]);
        }
        if let Some(l) = &mut self.lstm {
            out.extend(l.weights.iter_mut());
            out.extend(l.biases.iter_mut());
        }
        out.extend([&mut self.dense.weight, &mut self.dense.bias]);
        out
    }

    /// Names aligned with [`Model::parameters`].
    pub fn parameter_names(&self) -> Vec<String> {
        let mut out = vec!["embedding.table".to_string()];
        if self.conv.is_some() {
            out.extend(["conv.weight".into(), "conv.bias".into()]);
        }
        if self.lstm.is_some() {
            for kind in ["weight", "bias"] {
                for gate in crate::layers::GATES {
                    out.push(format!("lstm.{gate}.{kind}"));
                }
            }
        }
        out.extend(["dense.weight".into(), "dense.bias".into()]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            embedding: Matrix::zeros(self.embedding.table.rows(), self.embedding.table.cols()),
            conv: self.conv.as_ref().map(Conv1d::zero_grad),
            lstm: self.lstm.as_ref().map(Lstm::zero_grad),
            dense: self.dense.zero_grad(),
        }
    }

    fn check_len(&self, seq: &TokenSequence) -> Result<(), ModelError> {
        if seq.ids.len() != self.config.seq_len {
            return Err(ModelError::SequenceLength {
                expected: self.config.seq_len,
                found: seq.ids.len(),
            });
        }
        Ok(())
    }

    fn run(&self, seq: &TokenSequence) -> Result<ForwardCache, ModelError> {
        self.check_len(seq)?;
        let sentence = self.embedding.forward(seq)?;
        let (features, conv_cache) = match &self.conv {
            Some(conv) => {
                let (f, c) = conv.forward_cached(&sentence)?;
                (Some(f), Some(c))
            }
            None => (None, None),
        };
        let conv_steps = features.as_ref().map_or(0, Matrix::rows);
        let (head_input, lstm_cache) = match (&self.lstm, &features) {
            (Some(lstm), Some(f)) => {
                let (h, c) = lstm.forward_cached(f)?;
                (h, Some(c))
            }
            (Some(lstm), None) => {
                let (h, c) = lstm.forward_cached(&sentence)?;
                (h, Some(c))
            }
            (None, Some(f)) => (mean_over_rows(f), None),
            (None, None) => unreachable!("every variant has a conv or an lstm"),
        };
        let probs = self.dense.forward(&head_input)?;
        Ok(ForwardCache {
            sentence,
            conv: conv_cache,
            conv_steps,
            lstm: lstm_cache,
            head_input,
            probs,
        })
    }

    /// Class probabilities in `(Negative, Neutral, Positive)` order.
    pub fn forward(&self, seq: &TokenSequence) -> Result<[f64; NUM_CLASSES], ModelError> {
        self.check_len(seq)?;
        let sentence = self.embedding.forward(seq)?;
        let head_input = match (&self.conv, &self.lstm) {
            (Some(conv), Some(lstm)) => lstm.forward(&conv.forward(&sentence)?)?,
            (Some(conv), None) => mean_over_rows(&conv.forward(&sentence)?),
            (None, Some(lstm)) => lstm.forward(&sentence)?,
            (None, None) => unreachable!("every variant has a conv or an lstm"),
        };
        Ok(self.dense.forward(&head_input)?)
    }

    pub fn predict(
        &self,
        seq: &TokenSequence,
    ) -> Result<(Sentiment, [f64; NUM_CLASSES]), ModelError> {
        let probs = self.forward(seq)?;
        Ok((argmax(&probs), probs))
    }

    /// Runs the preprocessing pipeline and encoding stored with the model.
    pub fn encode_text(&self, raw: &str) -> TokenSequence {
        let tokens = self.preprocessor.process(raw);
        crate::preprocess::encode_and_pad(&tokens, &self.vocab, self.config.seq_len)
    }

    /// Forward + backward for one example. Gradients of `scale · loss`
    /// are added to `grads`; the unscaled loss is returned.
    pub fn accumulate_gradients(
        &self,
        seq: &TokenSequence,
        label: Sentiment,
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<f64, ModelError> {
        let cache = self.run(seq)?;
        let loss = cross_entropy(&cache.probs, label.index());
        let d_probs = cross_entropy_grad(&cache.probs, label.index()).map(|g| g * scale);
        let d_head =
            self.dense
                .backward(&cache.head_input, &cache.probs, &d_probs, &mut grads.dense)?;

        let d_features = match (&self.lstm, &cache.lstm) {
            (Some(lstm), Some(lc)) => {
                let g = grads.lstm.as_mut().expect("lstm gradient buffer");
                Some(lstm.backward(lc, &d_head, g)?)
            }
            _ => None,
        };
        let d_sentence = match (&self.conv, &cache.conv) {
            (Some(conv), Some(cc)) => {
                let upstream = match d_features {
                    Some(d) => d,
                    None => {
                        // Mean pooling spreads the gradient evenly over positions.
                        let steps = cache.conv_steps;
                        let share: Vec<f64> = d_head.iter().map(|g| g / steps as f64).collect();
                        Matrix::from_fn(steps, share.len(), |_, c| share[c])
                    }
                };
                let g = grads.conv.as_mut().expect("conv gradient buffer");
                conv.backward(cc, &upstream, g)?
            }
            _ => d_features.expect("lstm-only path yields input gradient"),
        };
        debug_assert_eq!(d_sentence.shape(), cache.sentence.shape());
        self.embedding
            .backward(seq, &d_sentence, &mut grads.embedding)?;
        Ok(loss)
    }

    /// Mean cross-entropy over `batch` and its gradient.
    pub fn batch_gradients(
        &self,
        batch: &[(&TokenSequence, Sentiment)],
    ) -> Result<(f64, Gradients), ModelError> {
        let mut grads = self.zero_gradients();
        let loss = self.batch_gradients_into(batch, &mut grads)?;
        Ok((loss, grads))
    }

    fn batch_gradients_into(
        &self,
        batch: &[(&TokenSequence, Sentiment)],
        grads: &mut Gradients,
    ) -> Result<f64, ModelError> {
        grads.zero();
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for (seq, label) in batch {
            total += self.accumulate_gradients(seq, *label, scale, grads)?;
        }
        Ok(total * scale)
    }
}

pub fn argmax(probs: &[f64; NUM_CLASSES]) -> Sentiment {
    let mut best = 0;
    for c in 1..NUM_CLASSES {
        if probs[c] > probs[best] {
            best = c;
        }
    }
    Sentiment::from_index(best).expect("class index")
}

// ---------------------------------------------------------------------------
// Optimizers

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam(AdamConfig),
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam(AdamConfig::default())
    }
}

fn check_pairs(params: &[&mut Matrix], grads: &[&Matrix]) -> Result<(), ShapeMismatch> {
    if params.len() != grads.len() {
        return Err(ShapeMismatch {
            op: "optimizer tensor count",
            left: (params.len(), 0),
            right: (grads.len(), 0),
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if p.shape() != g.shape() {
            return Err(ShapeMismatch {
                op: "optimizer",
                left: p.shape(),
                right: g.shape(),
            });
        }
    }
    Ok(())
}

/// `θ ← θ − lr·g`
pub fn sgd_step(
    params: &mut [&mut Matrix],
    grads: &[&Matrix],
    lr: f64,
) -> Result<(), ShapeMismatch> {
    check_pairs(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * d;
        }
    }
    Ok(())
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub step: u64,
}

impl AdamState {
    pub fn new(shapes: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (m, v) = shapes
            .into_iter()
            .map(|(r, c)| (Matrix::zeros(r, c), Matrix::zeros(r, c)))
            .unzip();
        Self { m, v, step: 0 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[&Matrix],
    state: &mut AdamState,
    cfg: &AdamConfig,
    lr: f64,
) -> Result<(), ShapeMismatch> {
    check_pairs(params, grads)?;
    if state.m.len() != params.len() {
        return Err(ShapeMismatch {
            op: "adam state tensor count",
            left: (state.m.len(), 0),
            right: (params.len(), 0),
        });
    }
    for (p, m) in params.iter().zip(&state.m) {
        if p.shape() != m.shape() {
            return Err(ShapeMismatch {
                op: "adam state",
                left: m.shape(),
                right: p.shape(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let it = p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
        for ((w, &d), (mi, vi)) in it {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * d;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * d * d;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        cfg: AdamConfig,
        state: AdamState,
    },
}

impl Optimizer {
    fn new(kind: OptimizerKind, lr: f64, model: &Model) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam(cfg) => Optimizer::Adam {
                lr,
                cfg,
                state: AdamState::new(model.parameters().iter().map(|p| p.shape())),
            },
        }
    }

    fn step(&mut self, model: &mut Model, grads: &Gradients) -> Result<(), ShapeMismatch> {
        let g = grads.tensors();
        let mut params = model.parameters_mut();
        match self {
            Optimizer::Sgd { lr } => sgd_step(&mut params, &g, *lr),
            Optimizer::Adam { lr, cfg, state } => adam_step(&mut params, &g, state, cfg, *lr),
        }
    }
}

// ---------------------------------------------------------------------------
// Training

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::default(),
            seed: 42,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs == 0 {
            return Err(ModelError::InvalidTrainConfig(
                "epochs must be at least 1".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(ModelError::InvalidTrainConfig(
                "batch size must be at least 1".into(),
            ));
        }
        // Zero is accepted: it leaves the parameters untouched.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::InvalidTrainConfig(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if let OptimizerKind::Adam(a) = self.optimizer {
            let ok =
                (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0;
            if !ok {
                return Err(ModelError::InvalidTrainConfig(format!(
                    "invalid Adam settings {a:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochHistory {
    pub records: Vec<EpochRecord>,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

impl EpochHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{HISTORY_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy
            )?;
        }
        Ok(())
    }

    /// Parses the CSV written by [`EpochHistory::write_csv`], checking that
    /// epochs run consecutively from 1.
    pub fn read_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == HISTORY_HEADER => {}
            other => return Err(format!("unexpected history header {other:?}")),
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(format!("line {}: expected 5 fields", i + 2));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| format!("line {}: {e}", i + 2))
            };
            let epoch: usize = fields[0]
                .trim()
                .parse()
                .map_err(|e| format!("line {}: {e}", i + 2))?;
            if epoch != records.len() + 1 {
                return Err(format!("line {}: epoch {epoch} out of sequence", i + 2));
            }
            records.push(EpochRecord {
                epoch,
                train_loss: num(fields[1])?,
                train_accuracy: num(fields[2])?,
                val_loss: num(fields[3])?,
                val_accuracy: num(fields[4])?,
            });
        }
        Ok(Self { records })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<Sentiment>,
}

/// Mean cross-entropy, accuracy and argmax predictions over `corpus`.
pub fn evaluate(model: &Model, corpus: &EncodedCorpus) -> Result<Evaluation, ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus("evaluation"));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut predictions = Vec::with_capacity(corpus.len());
    for ex in &corpus.examples {
        let probs = model.forward(&ex.seq)?;
        loss += cross_entropy(&probs, ex.label.index());
        let pred = argmax(&probs);
        correct += usize::from(pred == ex.label);
        predictions.push(pred);
    }
    let n = corpus.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
        predictions,
    })
}

pub fn train(
    model: Model,
    train_set: &EncodedCorpus,
    val_set: &EncodedCorpus,
    cfg: &TrainConfig,
) -> Result<(Model, EpochHistory), ModelError> {
    train_with(model, train_set, val_set, cfg, |_| {})
}

/// Mini-batch training. After every epoch the full training and
/// validation sets are scored and `on_epoch` is called with the record.
pub fn train_with(
    mut model: Model,
    train_set: &EncodedCorpus,
    val_set: &EncodedCorpus,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model, EpochHistory), ModelError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::EmptyCorpus("training"));
    }
    if val_set.is_empty() {
        return Err(ModelError::EmptyCorpus("validation"));
    }
    let shuffle_rng = Rng::new(cfg.seed);
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, &model);
    let mut grads = model.zero_gradients();
    let mut history = EpochHistory::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            order.sort_unstable();
            shuffle_rng
                .stream(STREAM_SHUFFLE_BASE + epoch as u64)
                .shuffle(&mut order);
        }
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&TokenSequence, Sentiment)> = chunk
                .iter()
                .map(|&i| (&train_set.examples[i].seq, train_set.examples[i].label))
                .collect();
            let loss = model.batch_gradients_into(&batch, &mut grads)?;
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx + 1,
                });
            }
            optimizer.step(&mut model, &grads)?;
        }
        let tr = evaluate(&model, train_set)?;
        let va = evaluate(&model, val_set)?;
        if !tr.loss.is_finite() || !va.loss.is_finite() {
            return Err(ModelError::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss: tr.loss,
            train_accuracy: tr.accuracy,
            val_loss: va.loss,
            val_accuracy: va.accuracy,
        };
        on_epoch(&record);
        history.records.push(record);
    }
    Ok((model, history))
}

// ---------------------------------------------------------------------------
// Model file

pub const MODEL_MAGIC: &[u8; 8] = b"TWSNTMDL";
pub const FORMAT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ModelError::CorruptFile("unexpected end of data".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize, ModelError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }
    fn f64(&mut self) -> Result<f64, ModelError> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String, ModelError> {
        let n = self.u32()?;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec())
            .map_err(|_| ModelError::CorruptFile("invalid UTF-8 string".into()))
    }
}

fn variant_code(v: Variant) -> u8 {
    match v {
        Variant::CnnLstm => 0,
        Variant::CnnOnly => 1,
        Variant::LstmOnly => 2,
    }
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Tanh => 0,
        Activation::Sigmoid => 1,
    }
}

impl Model {
    /// Layout: magic, version, config block, preprocessing settings,
    /// vocabulary, parameter tensors (little-endian `f64`), CRC-32 of all
    /// preceding bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MODEL_MAGIC);
        w.u32(FORMAT_VERSION as usize);

        let c = &self.config;
        w.u8(variant_code(c.variant));
        w.u8(activation_code(c.activation));
        for v in [c.seq_len, c.embed_dim, c.window, c.filters, c.hidden] {
            w.u32(v);
        }

        w.u8(u8::from(self.preprocessor.filter.drop_hashtag_words));
        w.u32(self.preprocessor.stop_words.len());
        for s in self.preprocessor.stop_words.iter() {
            w.str(s);
        }

        w.u32(self.vocab.min_frequency() as usize);
        w.u32(self.vocab.corpus_tokens().len());
        for t in self.vocab.corpus_tokens() {
            w.str(t);
        }

        let params = self.parameters();
        w.u32(params.len());
        for p in params {
            w.u32(p.rows());
            w.u32(p.cols());
            for x in p.data() {
                w.0.extend_from_slice(&x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&w.0);
        w.0.extend_from_slice(&crc.to_le_bytes());
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model, ModelError> {
        if bytes.len() < MODEL_MAGIC.len() + 8 || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
            return Err(ModelError::CorruptFile("not a model file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(ModelError::FormatVersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(ModelError::CorruptFile("checksum mismatch".into()));
        }

        let mut r = Reader { buf: body, pos: 12 };
        let variant = match r.u8()? {
            0 => Variant::CnnLstm,
            1 => Variant::CnnOnly,
            2 => Variant::LstmOnly,
            x => return Err(ModelError::CorruptFile(format!("unknown variant code {x}"))),
        };
        let activation = match r.u8()? {
            0 => Activation::Tanh,
            1 => Activation::Sigmoid,
            x => {
                return Err(ModelError::CorruptFile(format!(
                    "unknown activation code {x}"
                )))
            }
        };
        let config = ModelConfig {
            variant,
            activation,
            seq_len: r.u32()?,
            embed_dim: r.u32()?,
            window: r.u32()?,
            filters: r.u32()?,
            hidden: r.u32()?,
        };
        config
            .validate()
            .map_err(|e| ModelError::CorruptFile(e.to_string()))?;

        let drop_hashtag_words = r.u8()? != 0;
        let n_stops = r.u32()?;
        let stops = (0..n_stops)
            .map(|_| r.str())
            .collect::<Result<Vec<_>, _>>()?;
        let preprocessor = Preprocessor::new(
            StopWordList::from_words(stops),
            FilterOptions { drop_hashtag_words },
        );

        let min_freq = r.u32()? as u32;
        let n_tokens = r.u32()?;
        let tokens = (0..n_tokens)
            .map(|_| r.str())
            .collect::<Result<Vec<_>, _>>()?;
        let vocab = Vocabulary::from_tokens(tokens, min_freq).map_err(ModelError::CorruptFile)?;

        let mut model = build_model(config, vocab, &Rng::new(0))?.with_preprocessor(preprocessor);
        let n_params = r.u32()?;
        let mut slots = model.parameters_mut();
        if n_params != slots.len() {
            return Err(ModelError::CorruptFile(format!(
                "expected {} tensors, found {n_params}",
                slots.len()
            )));
        }
        for slot in slots.iter_mut() {
            let shape = (r.u32()?, r.u32()?);
            if shape != slot.shape() {
                return Err(ModelError::CorruptFile(format!(
                    "tensor shape {shape:?} does not match expected {:?}",
                    slot.shape()
                )));
            }
            for x in slot.data_mut() {
                *x = r.f64()?;
            }
        }
        if r.pos != body.len() {
            return Err(ModelError::CorruptFile("trailing bytes".into()));
        }
        Ok(model)
    }
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    std::fs::write(path, model.to_bytes()).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model, ModelError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Model::from_bytes(&bytes)
}
