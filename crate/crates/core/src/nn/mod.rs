//! One-dimensional convolutional classifier over 178-wide feature vectors.
//!
//! The network is a fixed stack of four conv/ReLU/max-pool blocks, a dense
//! hidden layer and a softmax output. Forward and backward passes run over
//! whole mini-batches as GEMMs; the model is generic over `f32`/`f64`, and the
//! training pipeline uses `f64`.

mod gradcheck;
mod io;
mod layers;
mod train;

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use gradcheck::{check_gradients, LayerCheck};
pub use io::{load_model, load_model_expecting, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use layers::{conv1d_forward, maxpool_forward};
pub use train::{train, Dataset, EpochRecord, History, Plateau, TrainConfig};

use crate::features::FEATURE_WIDTH;
use crate::scalar::Scalar;
use crate::seeding::{rng_for, sha256_hex};
use layers::*;

pub const INPUT_LEN: usize = FEATURE_WIDTH;
pub const KERNEL: usize = 5;
pub const POOL: usize = 5;
pub const POOL_STRIDE: usize = 2;
pub const CONV_FILTERS: [usize; 4] = [256, 256, 128, 64];
pub const HIDDEN_UNITS: usize = 32;
/// Dropout after the third pooling layer.
pub const CONV_DROPOUT: f64 = 0.20;
/// Dropout after the hidden dense layer.
pub const DENSE_DROPOUT: f64 = 0.30;
pub const DEFAULT_CLASSES: usize = 4;
/// Rows per forward pass during batched inference.
const INFER_CHUNK: usize = 64;

pub const fn pooled_len(len: usize) -> usize {
    (len - POOL) / POOL_STRIDE + 1
}

/// Sequence length entering each conv block, then after the last pool.
pub const BLOCK_LENGTHS: [usize; 5] = {
    let mut out = [INPUT_LEN; 5];
    let mut i = 1;
    while i < 5 {
        out[i] = pooled_len(out[i - 1]);
        i += 1;
    }
    out
};
pub const FLATTEN_LEN: usize = BLOCK_LENGTHS[4] * CONV_FILTERS[3];

const _: () = {
    assert!(BLOCK_LENGTHS[0] == 178);
    assert!(BLOCK_LENGTHS[1] == 87);
    assert!(BLOCK_LENGTHS[2] == 42);
    assert!(BLOCK_LENGTHS[3] == 19);
    assert!(BLOCK_LENGTHS[4] == 8);
    assert!(FLATTEN_LEN == 512);
};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },
    #[error("input of length {len} is shorter than the pool window {pool}")]
    InputTooShort { len: usize, pool: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("model file does not match: {0}")]
    VersionMismatch(String),
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerSpec {
    Conv { filters: usize, kernel: usize },
    Relu,
    MaxPool { pool: usize, stride: usize },
    Dropout { rate: f64 },
    Flatten,
    Dense { units: usize },
    Softmax,
}

/// The architecture; only the number of output classes varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub n_classes: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec { n_classes: DEFAULT_CLASSES }
    }
}

impl ModelSpec {
    pub fn new(n_classes: usize) -> Result<Self, NnError> {
        if n_classes < 2 {
            return Err(NnError::InvalidConfig(format!("need at least 2 classes, got {n_classes}")));
        }
        Ok(ModelSpec { n_classes })
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut out = Vec::new();
        for (i, &filters) in CONV_FILTERS.iter().enumerate() {
            out.push(LayerSpec::Conv { filters, kernel: KERNEL });
            out.push(LayerSpec::Relu);
            out.push(LayerSpec::MaxPool { pool: POOL, stride: POOL_STRIDE });
            if i == 2 {
                out.push(LayerSpec::Dropout { rate: CONV_DROPOUT });
            }
        }
        out.extend([
            LayerSpec::Flatten,
            LayerSpec::Dense { units: HIDDEN_UNITS },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate: DENSE_DROPOUT },
            LayerSpec::Dense { units: self.n_classes },
            LayerSpec::Softmax,
        ]);
        out
    }

    /// SHA-256 over the input length and layer list; stored in model files.
    pub fn hash(&self) -> [u8; 32] {
        let text = format!("input={INPUT_LEN}x1;{:?}", self.layers());
        let hex = sha256_hex(text.as_bytes());
        let mut out = [0u8; 32];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).expect("hex digest");
        }
        out
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut len = INPUT_LEN;
        let mut channels = 1;
        write!(f, "input {len}x{channels}")?;
        for layer in self.layers() {
            match layer {
                LayerSpec::Conv { filters, kernel } => {
                    channels = filters;
                    write!(f, " -> conv{kernel}({filters}) {len}x{channels}")?;
                }
                LayerSpec::MaxPool { .. } => {
                    len = pooled_len(len);
                    write!(f, " -> pool {len}x{channels}")?;
                }
                LayerSpec::Flatten => write!(f, " -> flatten {}", len * channels)?,
                LayerSpec::Dense { units } => write!(f, " -> dense {units}")?,
                LayerSpec::Dropout { rate } => write!(f, " -> dropout {rate}")?,
                LayerSpec::Relu | LayerSpec::Softmax => {}
            }
        }
        Ok(())
    }
}

/// All trainable tensors. Conv weights are `[filters, in_channels * KERNEL]`
/// (index `c * KERNEL + k`); dense weights are `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub conv_w: [Array2<T>; 4],
    pub conv_b: [Array1<T>; 4],
    pub dense_w: [Array2<T>; 2],
    pub dense_b: [Array1<T>; 2],
}

/// Trainable layers in order, for per-layer reporting.
pub const LAYER_NAMES: [&str; 6] = ["conv1", "conv2", "conv3", "conv4", "dense1", "dense2"];

impl<T: Scalar> Params<T> {
    fn zeros(spec: &ModelSpec) -> Self {
        let mut in_ch = 1;
        let conv_w = CONV_FILTERS.map(|f| {
            let w = Array2::zeros((f, in_ch * KERNEL));
            in_ch = f;
            w
        });
        Params {
            conv_w,
            conv_b: CONV_FILTERS.map(Array1::zeros),
            dense_w: [Array2::zeros((FLATTEN_LEN, HIDDEN_UNITS)), Array2::zeros((HIDDEN_UNITS, spec.n_classes))],
            dense_b: [Array1::zeros(HIDDEN_UNITS), Array1::zeros(spec.n_classes)],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            conv_w: std::array::from_fn(|i| Array2::zeros(self.conv_w[i].raw_dim())),
            conv_b: std::array::from_fn(|i| Array1::zeros(self.conv_b[i].raw_dim())),
            dense_w: std::array::from_fn(|i| Array2::zeros(self.dense_w[i].raw_dim())),
            dense_b: std::array::from_fn(|i| Array1::zeros(self.dense_b[i].raw_dim())),
        }
    }

    /// `(weights, bias)` slices of layer `i` in [`LAYER_NAMES`] order.
    pub fn layer(&self, i: usize) -> (&[T], &[T]) {
        let (w, b) = if i < 4 { (&self.conv_w[i], &self.conv_b[i]) } else { (&self.dense_w[i - 4], &self.dense_b[i - 4]) };
        (w.as_slice().expect("standard layout"), b.as_slice().expect("standard layout"))
    }

    pub fn layer_mut(&mut self, i: usize) -> (&mut [T], &mut [T]) {
        let (w, b) = if i < 4 { (&mut self.conv_w[i], &mut self.conv_b[i]) } else { (&mut self.dense_w[i - 4], &mut self.dense_b[i - 4]) };
        (w.as_slice_mut().expect("standard layout"), b.as_slice_mut().expect("standard layout"))
    }

    /// Every tensor in declared order: each layer's weights then its bias.
    pub fn tensors(&self) -> Vec<&[T]> {
        (0..LAYER_NAMES.len())
            .flat_map(|i| {
                let (w, b) = self.layer(i);
                [w, b]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let Params { conv_w, conv_b, dense_w, dense_b } = self;
        let mut out = Vec::with_capacity(12);
        for (w, b) in conv_w.iter_mut().zip(conv_b.iter_mut()).chain(dense_w.iter_mut().zip(dense_b.iter_mut())) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Per-feature affine normalisation applied before the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<T> {
    pub mean: Array1<T>,
    pub std: Array1<T>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn identity(width: usize) -> Self {
        Standardizer { mean: Array1::zeros(width), std: Array1::ones(width) }
    }

    /// Column means and population standard deviations; near-constant columns get std 1.
    pub fn fit(x: ArrayView2<T>) -> Self {
        let n = T::of_usize(x.nrows().max(1));
        let mean = x.sum_axis(Axis(0)) / n;
        let std = Array1::from_shape_fn(x.ncols(), |j| {
            let m = mean[j];
            let sd = (x.column(j).iter().fold(T::zero(), |acc, &v| acc + (v - m) * (v - m)) / n).sqrt();
            if sd > T::of(1e-12) {
                sd
            } else {
                T::one()
            }
        });
        Standardizer { mean, std }
    }

    pub fn apply(&self, x: ArrayView2<T>) -> Array2<T> {
        (&x - &self.mean) / &self.std
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Intermediate values kept for backpropagation.
pub(crate) struct Cache<T> {
    batch: usize,
    /// im2col matrices feeding each conv layer.
    cols: [Array2<T>; 4],
    /// Post-ReLU conv outputs.
    conv_out: [Array2<T>; 4],
    pool_arg: [Array2<u32>; 4],
    conv_dropout: Option<Array2<T>>,
    flat: Array2<T>,
    hidden: Array2<T>,
    dense_dropout: Option<Array2<T>>,
    hidden_dropped: Array2<T>,
    pub(crate) probs: Array2<T>,
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    spec: ModelSpec,
    pub params: Params<T>,
    pub standardizer: Standardizer<T>,
    dropout_rng: ChaCha8Rng,
}

impl<T: Scalar> PartialEq for Model<T> {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.params == other.params && self.standardizer == other.standardizer
    }
}

impl<T: Scalar> Model<T> {
    /// He-uniform weights (limit `sqrt(6 / fan_in)`) for the ReLU layers, a zero
    /// softmax layer so training starts from uniform predictions, zero biases.
    ///
    /// The four max-pools inflate activation scale; random output weights on top
    /// of that start training with logits large enough to kill the ReLUs.
    pub fn new(spec: ModelSpec, seed: u64) -> Self {
        let mut params = Params::zeros(&spec);
        let mut rng = rng_for(seed, "nn/init");
        for i in 0..LAYER_NAMES.len() - 1 {
            let fan_in = if i < 4 { params.conv_w[i].ncols() } else { params.dense_w[i - 4].nrows() };
            let limit = (6.0 / fan_in as f64).sqrt();
            let (w, _) = params.layer_mut(i);
            w.iter_mut().for_each(|v| *v = T::of(rng.gen_range(-limit..limit)));
        }
        Self::from_parts(spec, params, Standardizer::identity(INPUT_LEN), seed)
    }

    pub(crate) fn from_parts(spec: ModelSpec, params: Params<T>, standardizer: Standardizer<T>, seed: u64) -> Self {
        Model { spec, params, standardizer, dropout_rng: rng_for(seed, "nn/dropout") }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    /// Re-seeds the dropout generator.
    pub fn reseed_dropout(&mut self, seed: u64) {
        self.dropout_rng = rng_for(seed, "nn/dropout");
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<(), NnError> {
        if x.ncols() != INPUT_LEN {
            return Err(NnError::ShapeMismatch { expected: format!("[batch, {INPUT_LEN}]"), found: format!("{:?}", x.dim()) });
        }
        Ok(())
    }

    /// Runs the network on rows that are already standardised; dropout is applied
    /// only when a generator is supplied.
    pub(crate) fn forward_cached(&self, x: ArrayView2<T>, mut dropout: Option<&mut ChaCha8Rng>) -> Result<Cache<T>, NnError> {
        self.check_input(&x)?;
        let batch = x.nrows();
        let p = &self.params;
        // a single input channel: [1, batch * INPUT_LEN]
        let mut a = x.to_owned().into_shape_with_order((1, batch * INPUT_LEN)).expect("contiguous input");
        let mut cols = Vec::with_capacity(4);
        let mut conv_out = Vec::with_capacity(4);
        let mut args = Vec::with_capacity(4);
        let mut conv_dropout = None;
        for (i, &len) in BLOCK_LENGTHS.iter().take(4).enumerate() {
            let c = im2col(a.view(), len, KERNEL);
            let mut z = conv_gemm(&p.conv_w[i], &p.conv_b[i], &c);
            relu_inplace(&mut z);
            let (pooled, arg) = maxpool(&z, len, POOL, POOL_STRIDE)?;
            a = pooled;
            if let (2, Some(rng)) = (i, dropout.as_deref_mut()) {
                let mask = dropout_mask(a.dim(), CONV_DROPOUT, rng);
                a *= &mask;
                conv_dropout = Some(mask);
            }
            cols.push(c);
            conv_out.push(z);
            args.push(arg);
        }
        let flat = flatten(&a, BLOCK_LENGTHS[4]);
        let mut hidden = flat.dot(&p.dense_w[0]) + &p.dense_b[0];
        relu_inplace(&mut hidden);
        let (hidden_dropped, dense_dropout) = if let Some(rng) = dropout {
            let mask = dropout_mask(hidden.dim(), DENSE_DROPOUT, rng);
            (&hidden * &mask, Some(mask))
        } else {
            (hidden.clone(), None)
        };
        let logits = hidden_dropped.dot(&p.dense_w[1]) + &p.dense_b[1];
        let probs = softmax_rows(&logits);
        let to4 = |v: Vec<Array2<T>>| -> [Array2<T>; 4] { v.try_into().expect("four conv layers") };
        Ok(Cache {
            batch,
            cols: to4(cols),
            conv_out: to4(conv_out),
            pool_arg: args.try_into().expect("four conv layers"),
            conv_dropout,
            flat,
            hidden,
            dense_dropout,
            hidden_dropped,
            probs,
        })
    }

    /// Gradients of the mean cross-entropy over the cached batch.
    pub(crate) fn backward(&self, cache: &Cache<T>, labels: &[usize]) -> Params<T> {
        let p = &self.params;
        let mut g = p.zeros_like();
        let scale = T::one() / T::of_usize(cache.batch);
        let mut d_logits = cache.probs.clone();
        for (i, &y) in labels.iter().enumerate() {
            d_logits[[i, y]] -= T::one();
        }
        d_logits.mapv_inplace(|v| v * scale);

        g.dense_w[1] = cache.hidden_dropped.t().dot(&d_logits);
        g.dense_b[1] = d_logits.sum_axis(Axis(0));
        let mut d_hidden = d_logits.dot(&p.dense_w[1].t());
        if let Some(mask) = &cache.dense_dropout {
            d_hidden *= mask;
        }
        relu_backward(&mut d_hidden, &cache.hidden);
        g.dense_w[0] = cache.flat.t().dot(&d_hidden);
        g.dense_b[0] = d_hidden.sum_axis(Axis(0));
        let d_flat = d_hidden.dot(&p.dense_w[0].t());

        let mut d_a = unflatten(&d_flat, CONV_FILTERS[3], BLOCK_LENGTHS[4]);
        for i in (0..4).rev() {
            if i == 2 {
                if let Some(mask) = &cache.conv_dropout {
                    d_a *= mask;
                }
            }
            let len = BLOCK_LENGTHS[i];
            let mut d_z = maxpool_backward(&d_a, &cache.pool_arg[i], cache.batch * len);
            relu_backward(&mut d_z, &cache.conv_out[i]);
            g.conv_w[i] = d_z.dot(&cache.cols[i].t());
            g.conv_b[i] = d_z.sum_axis(Axis(1));
            if i > 0 {
                let d_cols = p.conv_w[i].t().dot(&d_z);
                d_a = col2im(d_cols.view(), CONV_FILTERS[i - 1], len, KERNEL);
            }
        }
        g
    }

    /// Probabilities for already-standardised rows, evaluated in chunks without dropout.
    pub(crate) fn infer_standardized(&self, x: ArrayView2<T>) -> Result<Array2<T>, NnError> {
        self.check_input(&x)?;
        let mut out = Array2::zeros((x.nrows(), self.n_classes()));
        for (i, chunk) in x.axis_chunks_iter(Axis(0), INFER_CHUNK).enumerate() {
            let probs = self.forward_cached(chunk, None)?.probs;
            out.slice_mut(ndarray::s![i * INFER_CHUNK..i * INFER_CHUNK + chunk.nrows(), ..]).assign(&probs);
        }
        Ok(out)
    }

    /// Class probabilities `[batch, n_classes]` for raw (unstandardised) feature rows.
    pub fn predict_proba(&self, x: ArrayView2<T>) -> Result<Array2<T>, NnError> {
        self.check_input(&x)?;
        self.infer_standardized(self.standardizer.apply(x).view())
    }

    /// Probabilities for raw rows; in `Train` mode dropout masks come from the model's generator.
    pub fn forward(&mut self, x: ArrayView2<T>, mode: Mode) -> Result<Array2<T>, NnError> {
        self.check_input(&x)?;
        let z = self.standardizer.apply(x);
        match mode {
            Mode::Infer => self.infer_standardized(z.view()),
            Mode::Train => {
                let mut rng = self.dropout_rng.clone();
                let probs = self.forward_cached(z.view(), Some(&mut rng))?.probs;
                self.dropout_rng = rng;
                Ok(probs)
            }
        }
    }

    /// Argmax class per row; ties go to the lowest index.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Vec<usize>, NnError> {
        Ok(argmax_rows(&self.predict_proba(x)?))
    }

    /// Mean cross-entropy of raw rows against labels, without dropout.
    pub fn loss(&self, x: ArrayView2<T>, labels: &[usize]) -> Result<T, NnError> {
        Ok(cross_entropy(&self.predict_proba(x)?, labels))
    }
}

pub fn argmax_rows<T: Scalar>(probs: &Array2<T>) -> Vec<usize> {
    probs
        .axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
