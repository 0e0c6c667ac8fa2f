//! Fully-connected autoencoder over binary segment features.
//!
//! ```text
//! encoder: input --linear+ReLU--> hidden --linear--> latent
//! decoder: latent --linear+ReLU--> hidden --linear--> input
//! ```
//!
//! Weights are stored as `fan_in x fan_out` matrices so a batch `X` (rows are
//! samples) maps through a layer as `X W + b`. Gradients are computed by hand
//! for the mean reconstruction loss over all batch elements; training uses
//! Adam on seeded, reshuffled mini-batches.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("expected {expected} columns, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("need at least {needed} rows for test ratio {ratio}, got {found}")]
    TooFewRows { needed: usize, found: usize, ratio: f64 },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("model file: {0}")]
    File(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub latent: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            input: 88,
            hidden: 64,
            latent: 30,
        }
    }
}

/// One affine layer, `fan_in x fan_out` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Layer<T> {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || T::lit(rng.random_range(-bound..=bound)));
        Self {
            weights,
            bias: Array1::zeros(fan_out),
        }
    }

    fn apply(&self, x: &ArrayView2<T>) -> Array2<T> {
        x.dot(&self.weights) + &self.bias
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Encoder and decoder weights. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub dims: Dims,
    pub enc1: Layer<T>,
    pub enc2: Layer<T>,
    pub dec1: Layer<T>,
    pub dec2: Layer<T>,
}

pub const LAYER_NAMES: [&str; 4] = ["enc1", "enc2", "dec1", "dec2"];

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            enc1: Layer::zeros(dims.input, dims.hidden),
            enc2: Layer::zeros(dims.hidden, dims.latent),
            dec1: Layer::zeros(dims.latent, dims.hidden),
            dec2: Layer::zeros(dims.hidden, dims.input),
        }
    }

    pub fn layers(&self) -> [&Layer<T>; 4] {
        [&self.enc1, &self.enc2, &self.dec1, &self.dec2]
    }

    pub fn layers_mut(&mut self) -> [&mut Layer<T>; 4] {
        [&mut self.enc1, &mut self.enc2, &mut self.dec1, &mut self.dec2]
    }

    pub fn is_finite(&self) -> bool {
        self.layers().iter().all(|l| l.is_finite())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Every parameter in a fixed order (layer, weights row-major, then bias).
    pub fn flat(&self) -> Vec<T> {
        self.layers()
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    /// Mutable access to the `i`-th entry of [`flat`](Self::flat).
    pub fn flat_mut(&mut self, mut i: usize) -> &mut T {
        for layer in self.layers_mut() {
            let nw = layer.weights.len();
            if i < nw {
                let cols = layer.weights.ncols();
                return &mut layer.weights[[i / cols, i % cols]];
            }
            i -= nw;
            if i < layer.bias.len() {
                return &mut layer.bias[i];
            }
            i -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }
}

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
pub fn init_params<T: Scalar>(seed: u64, dims: Dims) -> ModelParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_with(&mut rng, dims)
}

fn init_with<T: Scalar>(rng: &mut impl Rng, dims: Dims) -> ModelParams<T> {
    ModelParams {
        dims,
        enc1: Layer::glorot(dims.input, dims.hidden, rng),
        enc2: Layer::glorot(dims.hidden, dims.latent, rng),
        dec1: Layer::glorot(dims.latent, dims.hidden, rng),
        dec2: Layer::glorot(dims.hidden, dims.input, rng),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mse,
    /// Binary cross-entropy on the decoder output read as logits.
    Bce,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Activations<T> {
    pub pre_hidden: Array2<T>,
    pub hidden: Array2<T>,
    pub latent: Array2<T>,
    pub pre_decoded: Array2<T>,
    pub decoded: Array2<T>,
    pub output: Array2<T>,
}

fn relu<T: Scalar>(z: &Array2<T>) -> Array2<T> {
    z.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

fn check_cols(expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::Dimension { expected, found })
    }
}

/// Batched forward pass; rows of `x` are samples.
pub fn forward_batch<T: Scalar>(params: &ModelParams<T>, x: ArrayView2<T>) -> Result<Activations<T>, ModelError> {
    check_cols(params.dims.input, x.ncols())?;
    let pre_hidden = params.enc1.apply(&x);
    let hidden = relu(&pre_hidden);
    let latent = params.enc2.apply(&hidden.view());
    let pre_decoded = params.dec1.apply(&latent.view());
    let decoded = relu(&pre_decoded);
    let output = params.dec2.apply(&decoded.view());
    Ok(Activations {
        pre_hidden,
        hidden,
        latent,
        pre_decoded,
        decoded,
        output,
    })
}

/// Embedding and reconstruction of a single feature vector.
pub fn forward<T: Scalar>(params: &ModelParams<T>, x: &[T]) -> Result<(Vec<T>, Vec<T>), ModelError> {
    let row = ArrayView2::from_shape((1, x.len()), x).expect("row view");
    let acts = forward_batch(params, row)?;
    Ok((acts.latent.row(0).to_vec(), acts.output.row(0).to_vec()))
}

/// Latent code of one feature vector.
pub fn encode<T: Scalar>(params: &ModelParams<T>, x: &[T]) -> Result<Vec<T>, ModelError> {
    check_cols(params.dims.input, x.len())?;
    let row = ArrayView2::from_shape((1, x.len()), x).expect("row view");
    let hidden = relu(&params.enc1.apply(&row));
    Ok(params.enc2.apply(&hidden.view()).row(0).to_vec())
}

pub fn encode_batch<T: Scalar>(params: &ModelParams<T>, x: ArrayView2<T>) -> Result<Array2<T>, ModelError> {
    check_cols(params.dims.input, x.ncols())?;
    let hidden = relu(&params.enc1.apply(&x));
    Ok(params.enc2.apply(&hidden.view()))
}

/// Mean of squared differences over every element.
pub fn mse_loss<T: Scalar>(x: ArrayView2<T>, x_hat: ArrayView2<T>) -> T {
    assert_eq!(x.dim(), x_hat.dim(), "shape mismatch");
    if x.is_empty() {
        return T::zero();
    }
    let mut sum = T::zero();
    Zip::from(&x).and(&x_hat).for_each(|&a, &b| sum += (a - b) * (a - b));
    sum / T::from_usize_lossy(x.len())
}

pub fn mse<T: Scalar>(x: &[T], x_hat: &[T]) -> T {
    mse_loss(ArrayView1::from(x).insert_axis(Axis(0)), ArrayView1::from(x_hat).insert_axis(Axis(0)))
}

/// Mean binary cross-entropy with logits.
pub fn bce_with_logits<T: Scalar>(x: ArrayView2<T>, logits: ArrayView2<T>) -> T {
    assert_eq!(x.dim(), logits.dim(), "shape mismatch");
    let mut sum = T::zero();
    Zip::from(&x).and(&logits).for_each(|&t, &z| {
        // softplus(z) - t z, written to avoid overflow
        let softplus = z.max(T::zero()) + (-z.abs()).exp().ln_1p();
        sum += softplus - t * z;
    });
    sum / T::from_usize_lossy(x.len().max(1))
}

pub fn loss<T: Scalar>(kind: LossKind, x: ArrayView2<T>, out: ArrayView2<T>) -> T {
    match kind {
        LossKind::Mse => mse_loss(x, out),
        LossKind::Bce => bce_with_logits(x, out),
    }
}

fn relu_mask<T: Scalar>(grad: &mut Array2<T>, pre: &Array2<T>) {
    Zip::from(grad).and(pre).for_each(|g, &z| {
        if z <= T::zero() {
            *g = T::zero();
        }
    });
}

fn layer_grad<T: Scalar>(input: &Array2<T>, delta: &Array2<T>) -> Layer<T> {
    Layer {
        weights: input.t().dot(delta),
        bias: delta.sum_axis(Axis(0)),
    }
}

/// Loss and exact gradients of the mean batch loss w.r.t. every parameter.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    batch: ArrayView2<T>,
    kind: LossKind,
) -> Result<(T, ModelParams<T>), ModelError> {
    let acts = forward_batch(params, batch)?;
    let scale = T::one() / T::from_usize_lossy(batch.len().max(1));
    let (value, d_out) = match kind {
        LossKind::Mse => {
            let diff = &acts.output - &batch;
            (mse_loss(batch, acts.output.view()), diff.mapv(|d| T::lit(2.0) * d * scale))
        }
        LossKind::Bce => {
            let sig = acts.output.mapv(|z| T::one() / (T::one() + (-z).exp()));
            (bce_with_logits(batch, acts.output.view()), (sig - batch).mapv(|d| d * scale))
        }
    };

    let dec2 = layer_grad(&acts.decoded, &d_out);
    let mut d_dec = d_out.dot(&params.dec2.weights.t());
    relu_mask(&mut d_dec, &acts.pre_decoded);
    let dec1 = layer_grad(&acts.latent, &d_dec);
    let d_latent = d_dec.dot(&params.dec1.weights.t());
    let enc2 = layer_grad(&acts.hidden, &d_latent);
    let mut d_hidden = d_latent.dot(&params.enc2.weights.t());
    relu_mask(&mut d_hidden, &acts.pre_hidden);
    let enc1 = layer_grad(&batch.to_owned(), &d_hidden);

    Ok((
        value,
        ModelParams {
            dims: params.dims,
            enc1,
            enc2,
            dec1,
            dec2,
        },
    ))
}

/// How rows are divided into train and test sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    #[default]
    Uniform,
    /// Split each group (e.g. city) separately at the same ratio.
    Stratified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub test_ratio: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub loss: LossKind,
    pub split: SplitMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 200,
            epochs: 50,
            test_ratio: 0.2,
            seed: 42,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            loss: LossKind::Mse,
            split: SplitMode::Uniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if !(self.test_ratio > 0.0 && self.test_ratio < 1.0) {
            return bad("test_ratio must lie in (0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss<T> {
    pub epoch: usize,
    pub train: T,
    pub test: T,
}

#[derive(Debug, Clone)]
pub struct TrainReport<T> {
    pub params: ModelParams<T>,
    pub history: Vec<EpochLoss<T>>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

struct Adam<T> {
    m: ModelParams<T>,
    v: ModelParams<T>,
    step: i32,
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
}

impl<T: Scalar> Adam<T> {
    fn new(dims: Dims, cfg: &TrainConfig) -> Self {
        Self {
            m: ModelParams::zeros(dims),
            v: ModelParams::zeros(dims),
            step: 0,
            lr: T::lit(cfg.learning_rate),
            beta1: T::lit(cfg.adam_beta1),
            beta2: T::lit(cfg.adam_beta2),
            eps: T::lit(cfg.adam_eps),
        }
    }

    fn update(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) {
        self.step += 1;
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        let layers = params.layers_mut();
        let ms = self.m.layers_mut();
        let vs = self.v.layers_mut();
        let gs = grads.layers();
        for (((p, m), v), g) in layers.into_iter().zip(ms).zip(vs).zip(gs) {
            let apply = |p: &mut T, m: &mut T, v: &mut T, g: &T| {
                *m = b1 * *m + (T::one() - b1) * *g;
                *v = b2 * *v + (T::one() - b2) * *g * *g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            };
            Zip::from(&mut p.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(apply);
            Zip::from(&mut p.bias).and(&mut m.bias).and(&mut v.bias).and(&g.bias).for_each(apply);
        }
    }
}

/// Seeded train/test split. `groups` is only consulted in stratified mode.
pub fn split_rows(
    n: usize,
    ratio: f64,
    mode: SplitMode,
    groups: Option<&[String]>,
    rng: &mut impl Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut split_one = |mut idx: Vec<usize>| {
        idx.shuffle(rng);
        let n_test = ((idx.len() as f64 * ratio).round() as usize).clamp(usize::from(idx.len() > 1), idx.len().saturating_sub(1));
        let train = idx.split_off(n_test);
        (train, idx)
    };
    match (mode, groups) {
        (SplitMode::Stratified, Some(groups)) => {
            let mut by_group: std::collections::BTreeMap<&str, Vec<usize>> = Default::default();
            for (i, g) in groups.iter().enumerate() {
                by_group.entry(g.as_str()).or_default().push(i);
            }
            let (mut train, mut test) = (Vec::new(), Vec::new());
            for idx in by_group.into_values() {
                let (a, b) = split_one(idx);
                train.extend(a);
                test.extend(b);
            }
            (train, test)
        }
        _ => split_one((0..n).collect()),
    }
}

fn gather<T: Scalar>(data: &ArrayView2<T>, rows: &[usize]) -> Array2<T> {
    data.select(Axis(0), rows)
}

/// Reconstruction loss of `params` over the given rows.
pub fn evaluate<T: Scalar>(params: &ModelParams<T>, data: ArrayView2<T>, kind: LossKind) -> Result<T, ModelError> {
    let acts = forward_batch(params, data)?;
    Ok(loss(kind, data, acts.output.view()))
}

/// Trains from a seeded initialization. Rows of `data` are samples.
pub fn train<T: Scalar>(
    data: ArrayView2<T>,
    dims: Dims,
    cfg: &TrainConfig,
    groups: Option<&[String]>,
) -> Result<TrainReport<T>, ModelError> {
    cfg.validate()?;
    check_cols(dims.input, data.ncols())?;
    let needed = (2.0 / cfg.test_ratio).ceil() as usize;
    if data.nrows() < needed {
        return Err(ModelError::TooFewRows {
            needed,
            found: data.nrows(),
            ratio: cfg.test_ratio,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params: ModelParams<T> = init_with(&mut rng, dims);
    let (mut train_rows, test_rows) = split_rows(data.nrows(), cfg.test_ratio, cfg.split, groups, &mut rng);
    let test_data = gather(&data, &test_rows);
    let mut adam = Adam::new(dims, cfg);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        train_rows.shuffle(&mut rng);
        for (b, chunk) in train_rows.chunks(cfg.batch_size).enumerate() {
            let batch = gather(&data, chunk);
            let (value, grads) = backward(&params, batch.view(), cfg.loss)?;
            if !value.is_finite() {
                return Err(ModelError::NonFinite { epoch, batch: b });
            }
            adam.update(&mut params, &grads);
            if !params.is_finite() {
                return Err(ModelError::NonFinite { epoch, batch: b });
            }
        }
        let mut sorted = train_rows.clone();
        sorted.sort_unstable();
        let train_loss = evaluate(&params, gather(&data, &sorted).view(), cfg.loss)?;
        let test_loss = evaluate(&params, test_data.view(), cfg.loss)?;
        log::debug!("epoch {epoch}: train {train_loss} test {test_loss}");
        history.push(EpochLoss {
            epoch: epoch + 1,
            train: train_loss,
            test: test_loss,
        });
    }

    let mut train_sorted = train_rows;
    train_sorted.sort_unstable();
    let mut test_sorted = test_rows;
    test_sorted.sort_unstable();
    Ok(TrainReport {
        params,
        history,
        train_rows: train_sorted,
        test_rows: test_sorted,
    })
}

/// On-disk model: dims, provenance and row-major layer arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub dims: Dims,
    pub seed: u64,
    pub schema_version: String,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ModelFile {
    pub fn from_params<T: Scalar>(params: &ModelParams<T>, seed: u64, schema_version: &str) -> Self {
        let layers = LAYER_NAMES
            .iter()
            .zip(params.layers())
            .map(|(name, l)| LayerFile {
                name: name.to_string(),
                rows: l.weights.nrows(),
                cols: l.weights.ncols(),
                weights: l.weights.iter().map(|v| v.as_f64()).collect(),
                bias: l.bias.iter().map(|v| v.as_f64()).collect(),
            })
            .collect();
        Self {
            dims: params.dims,
            seed,
            schema_version: schema_version.to_string(),
            layers,
        }
    }

    pub fn to_params<T: Scalar>(&self) -> Result<ModelParams<T>, ModelError> {
        let mut params = ModelParams::zeros(self.dims);
        if self.layers.len() != 4 {
            return Err(ModelError::File(format!("expected 4 layers, found {}", self.layers.len())));
        }
        for ((file, name), layer) in self.layers.iter().zip(LAYER_NAMES).zip(params.layers_mut()) {
            let (rows, cols) = layer.weights.dim();
            if file.name != name || file.rows != rows || file.cols != cols || file.weights.len() != rows * cols || file.bias.len() != cols {
                return Err(ModelError::File(format!("layer `{}` does not match dims {:?}", file.name, self.dims)));
            }
            layer.weights = Array2::from_shape_vec((rows, cols), file.weights.iter().map(|&v| T::lit(v)).collect())
                .expect("checked shape");
            layer.bias = file.bias.iter().map(|&v| T::lit(v)).collect();
        }
        if !params.is_finite() {
            return Err(ModelError::File("non-finite weight".into()));
        }
        Ok(params)
    }
}
