//! Network layers with hand-written backward passes.
//!
//! Every layer exposes a pure `forward`, a `forward_cached` that also
//! returns the intermediates needed for differentiation, and a `backward`
//! that consumes that cache, accumulates parameter gradients into a
//! caller-owned buffer and returns the gradient with respect to the input.
//! Backward can only be called with a cache produced by a forward pass.

use thiserror::Error;

use crate::preprocess::{TokenSequence, PAD_ID};
use crate::tensor::{axpy, dot, init_uniform, sigmoid, Matrix, Rng, ShapeMismatch};

pub const NUM_CLASSES: usize = 3;

/// Probability floor inside the cross-entropy logarithm.
pub const LOG_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayerError {
    #[error("token id {id} at position {position} is outside the embedding table ({vocab} rows)")]
    IdOutOfRange {
        id: u32,
        position: usize,
        vocab: usize,
    },
    #[error("sequence of {len} rows is shorter than the convolution window {window}")]
    SequenceTooShort { len: usize, window: usize },
    #[error("empty input sequence")]
    EmptySequence,
    #[error(transparent)]
    Shape(#[from] ShapeMismatch),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Uniform bound `sqrt(6 / (fan_in + fan_out))`.
pub fn xavier_scale(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn shape_check(
    op: &'static str,
    got: (usize, usize),
    want: (usize, usize),
) -> Result<(), ShapeMismatch> {
    if got == want {
        Ok(())
    } else {
        Err(ShapeMismatch {
            op,
            left: got,
            right: want,
        })
    }
}

// ---------------------------------------------------------------------------
// Embedding

/// Word-vector table, one `k`-dimensional row per vocabulary id. The
/// padding row is zero and never receives gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub table: Matrix,
}

impl Embedding {
    pub fn new(rng: &mut Rng, vocab_size: usize, dim: usize) -> Self {
        // A lookup has fan-in 1.
        let mut table = init_uniform(rng, vocab_size, dim, xavier_scale(1, dim));
        table.row_mut(PAD_ID as usize).fill(0.0);
        Self { table }
    }

    pub fn vocab_size(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    /// Stacks the rows for `seq.ids` into an `n × k` sentence matrix.
    pub fn forward(&self, seq: &TokenSequence) -> Result<Matrix, LayerError> {
        let k = self.dim();
        let mut out = Matrix::zeros(seq.ids.len(), k);
        for (position, &id) in seq.ids.iter().enumerate() {
            if id as usize >= self.vocab_size() {
                return Err(LayerError::IdOutOfRange {
                    id,
                    position,
                    vocab: self.vocab_size(),
                });
            }
            out.row_mut(position)
                .copy_from_slice(self.table.row(id as usize));
        }
        Ok(out)
    }

    /// Adds `upstream` rows into the gradient rows of the ids used.
    pub fn backward(
        &self,
        seq: &TokenSequence,
        upstream: &Matrix,
        grad: &mut Matrix,
    ) -> Result<(), LayerError> {
        shape_check(
            "embedding backward",
            upstream.shape(),
            (seq.ids.len(), self.dim()),
        )?;
        shape_check("embedding grad", grad.shape(), self.table.shape())?;
        for (position, &id) in seq.ids.iter().enumerate() {
            if id == PAD_ID {
                continue;
            }
            axpy(1.0, upstream.row(position), grad.row_mut(id as usize));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Convolution

/// Valid 1-D convolution over word windows. Filter `j` is row `j` of
/// `weight`, the row-major flattening of an `h × k` window.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub weight: Matrix,
    pub bias: Matrix,
    pub window: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    input: Matrix,
    output: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Conv1d {
    pub fn new(
        rng: &mut Rng,
        filters: usize,
        window: usize,
        dim: usize,
        activation: Activation,
    ) -> Self {
        let fan_in = window * dim;
        Self {
            weight: init_uniform(rng, filters, fan_in, xavier_scale(fan_in, filters)),
            bias: Matrix::zeros(1, filters),
            window,
            activation,
        }
    }

    pub fn filters(&self) -> usize {
        self.weight.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols() / self.window
    }

    pub fn output_len(&self, n: usize) -> Option<usize> {
        (n >= self.window).then(|| n - self.window + 1)
    }

    pub fn zero_grad(&self) -> ConvGrad {
        ConvGrad {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: Matrix::zeros(1, self.filters()),
        }
    }

    /// `(n − h + 1) × m` time-major feature sequence.
    pub fn forward(&self, input: &Matrix) -> Result<Matrix, LayerError> {
        if input.cols() != self.input_dim() {
            return Err(ShapeMismatch {
                op: "conv forward",
                left: input.shape(),
                right: (self.window, self.input_dim()),
            }
            .into());
        }
        let steps = self
            .output_len(input.rows())
            .ok_or(LayerError::SequenceTooShort {
                len: input.rows(),
                window: self.window,
            })?;
        let m = self.filters();
        let mut out = Matrix::zeros(steps, m);
        for t in 0..steps {
            // Rows t..t+h of a row-major matrix are contiguous.
            let window = input.rows_slice(t, self.window);
            for j in 0..m {
                let pre = dot(self.weight.row(j), window) + self.bias.data()[j];
                out.set(t, j, self.activation.apply(pre));
            }
        }
        Ok(out)
    }

    pub fn forward_cached(&self, input: &Matrix) -> Result<(Matrix, ConvCache), LayerError> {
        let output = self.forward(input)?;
        let cache = ConvCache {
            input: input.clone(),
            output: output.clone(),
        };
        Ok((output, cache))
    }

    pub fn backward(
        &self,
        cache: &ConvCache,
        upstream: &Matrix,
        grad: &mut ConvGrad,
    ) -> Result<Matrix, LayerError> {
        shape_check("conv backward", upstream.shape(), cache.output.shape())?;
        shape_check("conv grad", grad.weight.shape(), self.weight.shape())?;
        let m = self.filters();
        let mut d_input = Matrix::zeros(cache.input.rows(), cache.input.cols());
        for t in 0..cache.output.rows() {
            let window = cache.input.rows_slice(t, self.window);
            for j in 0..m {
                let d_pre = upstream.get(t, j)
                    * self
                        .activation
                        .derivative_from_output(cache.output.get(t, j));
                if d_pre == 0.0 {
                    continue;
                }
                axpy(d_pre, window, grad.weight.row_mut(j));
                grad.bias.data_mut()[j] += d_pre;
                axpy(
                    d_pre,
                    self.weight.row(j),
                    d_input.rows_slice_mut(t, self.window),
                );
            }
        }
        Ok(d_input)
    }
}

// ---------------------------------------------------------------------------
// LSTM

/// Gate order used for all four-element arrays below.
pub const GATES: [&str; 4] = ["input", "forget", "output", "candidate"];
const INPUT: usize = 0;
const FORGET: usize = 1;
const OUTPUT: usize = 2;
const CANDIDATE: usize = 3;

/// Single-layer LSTM. Each gate has a `hidden × (input + hidden)` weight
/// acting on `[x_t; h_{t−1}]`. State starts at zero for every sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub weights: [Matrix; 4],
    pub biases: [Matrix; 4],
}

#[derive(Debug, Clone)]
struct LstmStep {
    z: Vec<f64>,
    gates: [Vec<f64>; 4],
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: Vec<LstmStep>,
    input_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrad {
    pub weights: [Matrix; 4],
    pub biases: [Matrix; 4],
}

impl Lstm {
    pub fn new(rng: &mut Rng, input_dim: usize, hidden: usize) -> Self {
        let fan_in = input_dim + hidden;
        let scale = xavier_scale(fan_in, hidden);
        let weights = std::array::from_fn(|_| init_uniform(rng, hidden, fan_in, scale));
        let mut biases: [Matrix; 4] = std::array::from_fn(|_| Matrix::zeros(1, hidden));
        biases[FORGET].fill(1.0);
        Self { weights, biases }
    }

    pub fn hidden(&self) -> usize {
        self.weights[0].rows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].cols() - self.hidden()
    }

    pub fn zero_grad(&self) -> LstmGrad {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        LstmGrad {
            weights: std::array::from_fn(|g| z(&self.weights[g])),
            biases: std::array::from_fn(|g| z(&self.biases[g])),
        }
    }

    fn run(
        &self,
        input: &Matrix,
        mut record: Option<&mut Vec<LstmStep>>,
    ) -> Result<Vec<f64>, LayerError> {
        let d = self.input_dim();
        let hdim = self.hidden();
        if input.rows() == 0 {
            return Err(LayerError::EmptySequence);
        }
        shape_check(
            "lstm forward",
            (input.rows(), input.cols()),
            (input.rows(), d),
        )?;
        let mut h = vec![0.0; hdim];
        let mut c = vec![0.0; hdim];
        let mut z = vec![0.0; d + hdim];
        for t in 0..input.rows() {
            z[..d].copy_from_slice(input.row(t));
            z[d..].copy_from_slice(&h);
            let gates: [Vec<f64>; 4] = std::array::from_fn(|g| {
                (0..hdim)
                    .map(|u| {
                        let pre = dot(self.weights[g].row(u), &z) + self.biases[g].data()[u];
                        if g == CANDIDATE {
                            pre.tanh()
                        } else {
                            sigmoid(pre)
                        }
                    })
                    .collect()
            });
            let c_prev = std::mem::take(&mut c);
            c = (0..hdim)
                .map(|u| gates[FORGET][u] * c_prev[u] + gates[INPUT][u] * gates[CANDIDATE][u])
                .collect();
            let tanh_c: Vec<f64> = c.iter().map(|x| x.tanh()).collect();
            for u in 0..hdim {
                h[u] = gates[OUTPUT][u] * tanh_c[u];
            }
            if let Some(steps) = record.as_deref_mut() {
                steps.push(LstmStep {
                    z: z.clone(),
                    gates,
                    c_prev,
                    tanh_c,
                });
            }
        }
        Ok(h)
    }

    /// Final hidden state `h_T` after consuming every row of `input`.
    pub fn forward(&self, input: &Matrix) -> Result<Vec<f64>, LayerError> {
        self.run(input, None)
    }

    pub fn forward_cached(&self, input: &Matrix) -> Result<(Vec<f64>, LstmCache), LayerError> {
        let mut steps = Vec::with_capacity(input.rows());
        let h = self.run(input, Some(&mut steps))?;
        Ok((
            h,
            LstmCache {
                steps,
                input_dim: self.input_dim(),
            },
        ))
    }

    /// Backpropagation through time from a gradient on `h_T` only.
    pub fn backward(
        &self,
        cache: &LstmCache,
        d_final: &[f64],
        grad: &mut LstmGrad,
    ) -> Result<Matrix, LayerError> {
        let hdim = self.hidden();
        let d = cache.input_dim;
        shape_check("lstm backward", (1, d_final.len()), (1, hdim))?;
        let mut d_input = Matrix::zeros(cache.steps.len(), d);
        let mut dh = d_final.to_vec();
        let mut dc = vec![0.0; hdim];
        let mut d_pre: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hdim]);
        let mut dz = vec![0.0; d + hdim];

        for (t, step) in cache.steps.iter().enumerate().rev() {
            let [i, f, o, g] = &step.gates;
            for u in 0..hdim {
                let d_o = dh[u] * step.tanh_c[u];
                dc[u] += dh[u] * o[u] * (1.0 - step.tanh_c[u] * step.tanh_c[u]);
                let d_i = dc[u] * g[u];
                let d_g = dc[u] * i[u];
                let d_f = dc[u] * step.c_prev[u];
                d_pre[INPUT][u] = d_i * i[u] * (1.0 - i[u]);
                d_pre[FORGET][u] = d_f * f[u] * (1.0 - f[u]);
                d_pre[OUTPUT][u] = d_o * o[u] * (1.0 - o[u]);
                d_pre[CANDIDATE][u] = d_g * (1.0 - g[u] * g[u]);
                // Carry to c_{t-1}.
                dc[u] *= f[u];
            }
            dz.iter_mut().for_each(|x| *x = 0.0);
            for gate in 0..4 {
                for u in 0..hdim {
                    let a = d_pre[gate][u];
                    if a == 0.0 {
                        continue;
                    }
                    axpy(a, &step.z, grad.weights[gate].row_mut(u));
                    grad.biases[gate].data_mut()[u] += a;
                    axpy(a, self.weights[gate].row(u), &mut dz);
                }
            }
            d_input.row_mut(t).copy_from_slice(&dz[..d]);
            dh.copy_from_slice(&dz[d..]);
        }
        Ok(d_input)
    }
}

// ---------------------------------------------------------------------------
// Dense softmax head

#[derive(Debug, Clone, PartialEq)]
pub struct DenseSoftmax {
    pub weight: Matrix,
    pub bias: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weight: Matrix,
    pub bias: Matrix,
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|l| (l - max).exp());
    let sum: f64 = exps.iter().sum();
    exps.map(|e| e / sum)
}

impl DenseSoftmax {
    pub fn new(rng: &mut Rng, input_dim: usize) -> Self {
        Self {
            weight: init_uniform(
                rng,
                NUM_CLASSES,
                input_dim,
                xavier_scale(input_dim, NUM_CLASSES),
            ),
            bias: Matrix::zeros(1, NUM_CLASSES),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn zero_grad(&self) -> DenseGrad {
        DenseGrad {
            weight: Matrix::zeros(NUM_CLASSES, self.input_dim()),
            bias: Matrix::zeros(1, NUM_CLASSES),
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<[f64; NUM_CLASSES], LayerError> {
        shape_check("dense forward", (1, x.len()), (1, self.input_dim()))?;
        Ok(std::array::from_fn(|c| {
            dot(self.weight.row(c), x) + self.bias.data()[c]
        }))
    }

    pub fn forward(&self, x: &[f64]) -> Result<[f64; NUM_CLASSES], LayerError> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Gradient through softmax and the affine map, given the gradient on
    /// the output probabilities.
    pub fn backward(
        &self,
        x: &[f64],
        probs: &[f64; NUM_CLASSES],
        d_probs: &[f64; NUM_CLASSES],
        grad: &mut DenseGrad,
    ) -> Result<Vec<f64>, LayerError> {
        shape_check("dense backward", (1, x.len()), (1, self.input_dim()))?;
        let inner: f64 = probs.iter().zip(d_probs).map(|(p, d)| p * d).sum();
        let mut dx = vec![0.0; x.len()];
        for c in 0..NUM_CLASSES {
            let d_logit = probs[c] * (d_probs[c] - inner);
            axpy(d_logit, x, grad.weight.row_mut(c));
            grad.bias.data_mut()[c] += d_logit;
            axpy(d_logit, self.weight.row(c), &mut dx);
        }
        Ok(dx)
    }
}

// ---------------------------------------------------------------------------
// Loss

/// `−ln(max(p[label], 1e-12))`. A NaN probability yields a NaN loss so that
/// divergence is never masked by the clamp.
pub fn cross_entropy(probs: &[f64; NUM_CLASSES], label: usize) -> f64 {
    let p = probs[label];
    -(if p < LOG_EPSILON { LOG_EPSILON } else { p }).ln()
}

pub fn cross_entropy_grad(probs: &[f64; NUM_CLASSES], label: usize) -> [f64; NUM_CLASSES] {
    let mut g = [0.0; NUM_CLASSES];
    if probs[label] > LOG_EPSILON || probs[label].is_nan() {
        g[label] = -1.0 / probs[label];
    }
    g
}
