//! The neural trust model.
//!
//! A from-scratch fully connected feedforward network: ReLU hidden layers,
//! a softmax output over the five trust levels, categorical cross-entropy
//! cost, Adam updates, and inverted dropout on hidden layers during
//! training. Training iterates until the epoch cost drops to the threshold
//! `tau` or the epoch budget runs out. Beyond assessment, the module
//! computes attribute significance — the mean absolute sensitivity of each
//! output probability to each input — and prunes attributes below a
//! significance threshold.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{FeatureName, Perspective};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::service::ReliabilityMode;

/// Number of trust levels (output neurons).
pub const TRUST_LEVELS: usize = 5;

/// Current model file format version.
pub const MODEL_FILE_VERSION: u32 = 1;

/// The five ordinal trust levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TrustLevel {
    NotTrusted,
    LowlyTrusted,
    Neutral,
    Trusted,
    HighlyTrusted,
}

impl TrustLevel {
    pub const ALL: [TrustLevel; TRUST_LEVELS] = [
        TrustLevel::NotTrusted,
        TrustLevel::LowlyTrusted,
        TrustLevel::Neutral,
        TrustLevel::Trusted,
        TrustLevel::HighlyTrusted,
    ];

    /// Ordinal index, 0 (NotTrusted) through 4 (HighlyTrusted).
    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or_else(|| Error::domain(format!("trust level index {index} outside 0..5")))
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TrustLevel::NotTrusted => "NotTrusted",
            TrustLevel::LowlyTrusted => "LowlyTrusted",
            TrustLevel::Neutral => "Neutral",
            TrustLevel::Trusted => "Trusted",
            TrustLevel::HighlyTrusted => "HighlyTrusted",
        }
    }
}

impl fmt::Display for TrustLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrustLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::schema(format!("unknown trust level `{s}`")))
    }
}

/// Dense matrix in row-major storage; rows index the source layer, columns
/// the destination layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::contract(format!(
                "matrix data length {} does not match {rows}×{cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> F {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: F) {
        self.data[r * self.cols + c] = value;
    }

    /// Row-major flat view of the entries.
    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    fn row(&self, r: usize) -> &[F] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Provenance recorded alongside trained parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMetadata {
    /// Seed that drove initialization and training.
    pub seed: u64,
    /// Epochs actually run (may stop early at the cost threshold).
    pub epochs_run: usize,
    /// Final epoch cost, if the model has been trained.
    pub final_cost: Option<f64>,
    /// Fingerprint of the training set.
    pub dataset_fingerprint: Option<String>,
    /// Reliability aggregation mode the training features were encoded
    /// with, if known.
    pub reliability_mode: Option<ReliabilityMode>,
}

/// Parameters of a fully connected feedforward trust network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters<F> {
    layer_sizes: Vec<usize>,
    weights: Vec<Matrix<F>>,
    biases: Vec<Vec<F>>,
    pub metadata: ModelMetadata,
}

impl<F: Scalar> NetworkParameters<F> {
    /// Assembles a network from explicit parts, checking shape consistency.
    ///
    /// Unlike [`build_network`] this accepts any consistent geometry with
    /// at least two layers, which keeps toy heads (e.g. a single linear
    /// layer) constructible for analysis.
    pub fn from_parts(
        layer_sizes: Vec<usize>,
        weights: Vec<Matrix<F>>,
        biases: Vec<Vec<F>>,
        metadata: ModelMetadata,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::domain(
                "a network needs at least an input and an output layer".to_string(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::domain("layer sizes must be positive".to_string()));
        }
        let pairs = layer_sizes.len() - 1;
        if weights.len() != pairs || biases.len() != pairs {
            return Err(Error::domain(format!(
                "expected {pairs} weight matrices and bias vectors, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..pairs {
            let (rows, cols) = (layer_sizes[l], layer_sizes[l + 1]);
            if weights[l].rows() != rows || weights[l].cols() != cols {
                return Err(Error::domain(format!(
                    "weight matrix {l} is {}×{}, expected {rows}×{cols}",
                    weights[l].rows(),
                    weights[l].cols()
                )));
            }
            if biases[l].len() != cols {
                return Err(Error::domain(format!(
                    "bias vector {l} has length {}, expected {cols}",
                    biases[l].len()
                )));
            }
        }
        Ok(NetworkParameters {
            layer_sizes,
            weights,
            biases,
            metadata,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn weights(&self) -> &[Matrix<F>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<F>] {
        &self.biases
    }

    pub fn weight(&self, layer: usize, from: usize, to: usize) -> F {
        self.weights[layer].get(from, to)
    }

    pub fn set_weight(&mut self, layer: usize, from: usize, to: usize, value: F) {
        self.weights[layer].set(from, to, value);
    }

    pub fn bias(&self, layer: usize, neuron: usize) -> F {
        self.biases[layer][neuron]
    }

    pub fn set_bias(&mut self, layer: usize, neuron: usize, value: F) {
        self.biases[layer][neuron] = value;
    }

    fn check_arity(&self, features: &[F]) -> Result<()> {
        if features.len() != self.input_size() {
            return Err(Error::contract(format!(
                "feature arity {} does not match the network input size {}",
                features.len(),
                self.input_size()
            )));
        }
        Ok(())
    }

    /// Raw output-layer pre-activations for one feature vector.
    pub fn logits(&self, features: &[F]) -> Result<Vec<F>> {
        self.check_arity(features)?;
        let mut a = features.to_vec();
        for l in 0..self.weights.len() {
            let mut z = affine(&a, &self.weights[l], &self.biases[l]);
            if l + 1 < self.weights.len() {
                relu_in_place(&mut z);
            }
            a = z;
        }
        Ok(a)
    }

    /// Inference forward pass: ReLU hidden layers, softmax output, dropout
    /// inactive. The result sums to 1 (within float error).
    pub fn forward(&self, features: &[F]) -> Result<Vec<F>> {
        Ok(softmax(&self.logits(features)?))
    }

    /// Full assessment: the argmax trust level and its softmax confidence.
    ///
    /// Ties are broken toward the lowest level index (the conservative,
    /// least-trusting choice).
    pub fn assess(&self, features: &[F]) -> Result<TrustAssessment<F>> {
        if self.output_size() != TRUST_LEVELS {
            return Err(Error::contract(format!(
                "assessment requires {TRUST_LEVELS} output neurons, network has {}",
                self.output_size()
            )));
        }
        let probabilities = self.forward(features)?;
        let mut best = 0;
        for (i, &p) in probabilities.iter().enumerate() {
            if p > probabilities[best] {
                best = i;
            }
        }
        Ok(TrustAssessment {
            level: TrustLevel::from_index(best)?,
            confidence: probabilities[best],
            probabilities,
        })
    }

    /// Writes the model as versioned JSON. Numbers serialize in shortest
    /// round-trip decimal form, so save→load reproduces parameters bit for
    /// bit.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = ModelFile {
            version: MODEL_FILE_VERSION,
            layer_sizes: self.layer_sizes.clone(),
            weights: self.weights.iter().map(|w| w.as_slice().to_vec()).collect(),
            biases: self.biases.clone(),
            metadata: self.metadata.clone(),
        };
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| Error::ModelFile(format!("serialize: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Reads a model written by [`NetworkParameters::save`], validating the
    /// version field and all parameter shapes before returning.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        let file: ModelFile<F> =
            serde_json::from_str(&text).map_err(|e| Error::ModelFile(format!("parse: {e}")))?;
        if file.version != MODEL_FILE_VERSION {
            return Err(Error::ModelFile(format!(
                "unsupported model file version {} (expected {MODEL_FILE_VERSION})",
                file.version
            )));
        }
        if file.layer_sizes.len() < 2 {
            return Err(Error::ModelFile(
                "model file lists fewer than two layers".to_string(),
            ));
        }
        let mut weights = Vec::with_capacity(file.weights.len());
        for (l, flat) in file.weights.into_iter().enumerate() {
            let rows = *file
                .layer_sizes
                .get(l)
                .ok_or_else(|| Error::ModelFile(format!("missing layer size {l}")))?;
            let cols = *file
                .layer_sizes
                .get(l + 1)
                .ok_or_else(|| Error::ModelFile(format!("missing layer size {}", l + 1)))?;
            weights.push(
                Matrix::from_flat(rows, cols, flat).map_err(|e| Error::ModelFile(e.to_string()))?,
            );
        }
        NetworkParameters::from_parts(file.layer_sizes, weights, file.biases, file.metadata)
            .map_err(|e| Error::ModelFile(e.to_string()))
    }
}

/// On-disk model representation (weights flattened row-major per layer).
#[derive(Debug, Serialize, Deserialize)]
#[serde(bound(serialize = "F: Scalar", deserialize = "F: Scalar"))]
struct ModelFile<F> {
    version: u32,
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<F>>,
    biases: Vec<Vec<F>>,
    metadata: ModelMetadata,
}

/// Builds a trust network with seeded He-style initialization.
///
/// Requires at least one hidden layer and exactly [`TRUST_LEVELS`] output
/// neurons; weights are N(0, √(2/fan_in)) draws from a ChaCha stream, so a
/// given seed always yields bit-identical parameters.
pub fn build_network<F: Scalar>(layer_sizes: &[usize], seed: u64) -> Result<NetworkParameters<F>> {
    if layer_sizes.len() < 3 {
        return Err(Error::domain(format!(
            "trust network needs ≥ 3 layers (input, hidden, output); got {:?}",
            layer_sizes
        )));
    }
    if *layer_sizes.last().unwrap() != TRUST_LEVELS {
        return Err(Error::domain(format!(
            "trust network output layer must have {TRUST_LEVELS} neurons; got {}",
            layer_sizes.last().unwrap()
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::domain("layer sizes must be positive".to_string()));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
    let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
    for pair in layer_sizes.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let std = (2.0 / fan_in as f64).sqrt();
        let mut w = Matrix::zeros(fan_in, fan_out);
        for r in 0..fan_in {
            for c in 0..fan_out {
                let draw: f64 = rng.sample(StandardNormal);
                w.set(r, c, F::from_f64_lossy(draw * std));
            }
        }
        weights.push(w);
        biases.push(vec![F::zero(); fan_out]);
    }

    NetworkParameters::from_parts(
        layer_sizes.to_vec(),
        weights,
        biases,
        ModelMetadata {
            seed,
            ..ModelMetadata::default()
        },
    )
}

/// Numerically stable softmax: exponentiates shifted logits so the largest
/// term is e⁰, making the result finite for any finite input.
pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits
        .iter()
        .copied()
        .fold(F::neg_infinity(), |a, b| a.max(b));
    let exps: Vec<F> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn affine<F: Scalar>(a: &[F], w: &Matrix<F>, b: &[F]) -> Vec<F> {
    let mut z = b.to_vec();
    for (i, &ai) in a.iter().enumerate() {
        for (zj, &wij) in z.iter_mut().zip(w.row(i)) {
            *zj = *zj + ai * wij;
        }
    }
    z
}

fn relu_in_place<F: Scalar>(z: &mut [F]) {
    for v in z.iter_mut() {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
}

/// The result of assessing one feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustAssessment<F> {
    pub level: TrustLevel,
    /// Softmax probability of the selected level.
    pub confidence: F,
    /// Full softmax distribution over the five levels.
    pub probabilities: Vec<F>,
}

/// A labeled training/evaluation set: feature vectors plus trust-level
/// indices.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet<F> {
    inputs: Vec<Vec<F>>,
    labels: Vec<usize>,
}

impl<F: Scalar> LabeledSet<F> {
    pub fn new(inputs: Vec<Vec<F>>, labels: Vec<usize>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::domain("labeled set must be non-empty".to_string()));
        }
        if inputs.len() != labels.len() {
            return Err(Error::contract(format!(
                "{} inputs vs {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        let arity = inputs[0].len();
        if arity == 0 {
            return Err(Error::domain(
                "feature vectors must be non-empty".to_string(),
            ));
        }
        for (i, x) in inputs.iter().enumerate() {
            if x.len() != arity {
                return Err(Error::contract(format!(
                    "sample {i} has arity {} but the set uses {arity}",
                    x.len()
                )));
            }
        }
        for (i, &y) in labels.iter().enumerate() {
            if y >= TRUST_LEVELS {
                return Err(Error::domain(format!(
                    "label {y} of sample {i} outside the {TRUST_LEVELS} trust levels"
                )));
            }
        }
        Ok(LabeledSet { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn inputs(&self) -> &[Vec<F>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Stable content hash (first 16 hex chars of SHA-256 over the raw
    /// feature bits and labels), recorded in model metadata.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for (x, &y) in self.inputs.iter().zip(&self.labels) {
            for &v in x {
                hasher.update(v.into_f64().to_bits().to_le_bytes());
            }
            hasher.update([y as u8]);
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Training hyperparameters (Adam + dropout + the cost threshold).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Cost threshold: training stops once the epoch's mean cross-entropy
    /// is ≤ tau. Zero makes the threshold unreachable, so exactly
    /// `max_epochs` epochs run.
    pub tau: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Inverted-dropout probability on hidden layers (train time only).
    pub dropout_p: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 0.05,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            dropout_p: 0.5,
            max_epochs: 500,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::domain(format!(
                "cost threshold tau must be ≥ 0; got {}",
                self.tau
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::domain("learning_rate must be > 0".to_string()));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::domain(format!(
                    "{name} must lie in [0,1); got {beta}"
                )));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::domain("epsilon must be > 0".to_string()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::domain(format!(
                "dropout_p must lie in [0,1); got {}",
                self.dropout_p
            )));
        }
        if self.max_epochs == 0 {
            return Err(Error::domain("max_epochs must be ≥ 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::domain("batch_size must be ≥ 1".to_string()));
        }
        Ok(())
    }
}

/// Per-parameter gradients, shaped exactly like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub weights: Vec<Matrix<F>>,
    pub biases: Vec<Vec<F>>,
}

impl<F: Scalar> Gradients<F> {
    fn zeros_like(net: &NetworkParameters<F>) -> Self {
        Gradients {
            weights: net
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: net
                .biases
                .iter()
                .map(|b| vec![F::zero(); b.len()])
                .collect(),
        }
    }
}

/// Forward pass retaining intermediate state for backpropagation.
///
/// `masks`, when present, holds one inverted-dropout mask per hidden layer
/// (entries 0 or 1/(1−p)) that multiplies the post-ReLU activations.
struct ForwardTrace<F> {
    /// Post-activation (and post-mask) values per layer; `[0]` is the input.
    activations: Vec<Vec<F>>,
    /// Pre-activation values per weight layer.
    zs: Vec<Vec<F>>,
    probs: Vec<F>,
}

fn forward_trace<F: Scalar>(
    net: &NetworkParameters<F>,
    x: &[F],
    masks: Option<&[Vec<F>]>,
) -> ForwardTrace<F> {
    let n_w = net.weights.len();
    let mut activations = Vec::with_capacity(n_w + 1);
    let mut zs = Vec::with_capacity(n_w);
    activations.push(x.to_vec());
    for l in 0..n_w {
        let z = affine(&activations[l], &net.weights[l], &net.biases[l]);
        zs.push(z.clone());
        if l + 1 < n_w {
            let mut a = z;
            relu_in_place(&mut a);
            if let Some(masks) = masks {
                for (v, &m) in a.iter_mut().zip(&masks[l]) {
                    *v = *v * m;
                }
            }
            activations.push(a);
        } else {
            activations.push(z);
        }
    }
    let probs = softmax(activations.last().unwrap());
    ForwardTrace {
        activations,
        zs,
        probs,
    }
}

/// Accumulates one sample's cross-entropy gradient (scaled by `scale`)
/// into `grads`. Returns the sample's loss term −ln p[label].
fn backprop_sample<F: Scalar>(
    net: &NetworkParameters<F>,
    x: &[F],
    label: usize,
    masks: Option<&[Vec<F>]>,
    scale: F,
    grads: &mut Gradients<F>,
) -> F {
    let trace = forward_trace(net, x, masks);
    let n_w = net.weights.len();

    // d(CE)/d(logits) for softmax + cross-entropy.
    let mut delta: Vec<F> = trace.probs.clone();
    delta[label] = delta[label] - F::one();

    for l in (0..n_w).rev() {
        let a = &trace.activations[l];
        for (i, &ai) in a.iter().enumerate() {
            let grow = grads.weights[l].row_mut(i);
            for (g, &d) in grow.iter_mut().zip(&delta) {
                *g = *g + ai * d * scale;
            }
        }
        for (g, &d) in grads.biases[l].iter_mut().zip(&delta) {
            *g = *g + d * scale;
        }

        if l > 0 {
            let w = &net.weights[l];
            let mut prev = vec![F::zero(); w.rows()];
            for (i, p) in prev.iter_mut().enumerate() {
                let mut acc = F::zero();
                for (&wij, &d) in w.row(i).iter().zip(&delta) {
                    acc = acc + wij * d;
                }
                *p = acc;
            }
            // Through the dropout mask, then the ReLU derivative.
            if let Some(masks) = masks {
                for (p, &m) in prev.iter_mut().zip(&masks[l - 1]) {
                    *p = *p * m;
                }
            }
            for (p, &z) in prev.iter_mut().zip(&trace.zs[l - 1]) {
                if z <= F::zero() {
                    *p = F::zero();
                }
            }
            delta = prev;
        }
    }

    -trace.probs[label].ln()
}

impl<F: Scalar> Matrix<F> {
    fn row_mut(&mut self, r: usize) -> &mut [F] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Mean categorical cross-entropy of the network over a labeled set
/// (dropout inactive).
pub fn mean_cross_entropy<F: Scalar>(
    net: &NetworkParameters<F>,
    set: &LabeledSet<F>,
) -> Result<f64> {
    if set.arity() != net.input_size() {
        return Err(Error::contract(format!(
            "set arity {} does not match network input size {}",
            set.arity(),
            net.input_size()
        )));
    }
    let mut total = 0.0;
    for (x, &y) in set.inputs().iter().zip(set.labels()) {
        let probs = net.forward(x)?;
        total += -probs[y].into_f64().ln();
    }
    Ok(total / set.len() as f64)
}

/// Mean cross-entropy gradients over a set of samples (dropout inactive).
/// This is the quantity finite-difference gradient checks compare against.
pub fn loss_gradients<F: Scalar>(
    net: &NetworkParameters<F>,
    set: &LabeledSet<F>,
) -> Result<Gradients<F>> {
    if set.arity() != net.input_size() {
        return Err(Error::contract(format!(
            "set arity {} does not match network input size {}",
            set.arity(),
            net.input_size()
        )));
    }
    let mut grads = Gradients::zeros_like(net);
    let scale = F::one() / F::from(set.len()).unwrap();
    for (x, &y) in set.inputs().iter().zip(set.labels()) {
        backprop_sample(net, x, y, None, scale, &mut grads);
    }
    Ok(grads)
}

struct AdamState<F> {
    m_w: Vec<Matrix<F>>,
    v_w: Vec<Matrix<F>>,
    m_b: Vec<Vec<F>>,
    v_b: Vec<Vec<F>>,
    t: u32,
}

impl<F: Scalar> AdamState<F> {
    fn new(net: &NetworkParameters<F>) -> Self {
        let zero_w = || {
            net.weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect::<Vec<_>>()
        };
        let zero_b = || {
            net.biases
                .iter()
                .map(|b| vec![F::zero(); b.len()])
                .collect::<Vec<_>>()
        };
        AdamState {
            m_w: zero_w(),
            v_w: zero_w(),
            m_b: zero_b(),
            v_b: zero_b(),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut NetworkParameters<F>, grads: &Gradients<F>, cfg: &TrainConfig) {
        self.t += 1;
        let lr = F::from_f64_lossy(cfg.learning_rate);
        let b1 = F::from_f64_lossy(cfg.beta1);
        let b2 = F::from_f64_lossy(cfg.beta2);
        let eps = F::from_f64_lossy(cfg.epsilon);
        let one = F::one();
        let corr1 = one - b1.powi(self.t as i32);
        let corr2 = one - b2.powi(self.t as i32);

        let update = |param: &mut F, m: &mut F, v: &mut F, g: F| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *param = *param - lr * m_hat / (v_hat.sqrt() + eps);
        };

        for l in 0..net.weights.len() {
            let g = &grads.weights[l];
            for idx in 0..g.data.len() {
                update(
                    &mut net.weights[l].data[idx],
                    &mut self.m_w[l].data[idx],
                    &mut self.v_w[l].data[idx],
                    g.data[idx],
                );
            }
            for j in 0..grads.biases[l].len() {
                update(
                    &mut net.biases[l][j],
                    &mut self.m_b[l][j],
                    &mut self.v_b[l][j],
                    grads.biases[l][j],
                );
            }
        }
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    pub network: NetworkParameters<F>,
    /// Epoch-end mean cross-entropy, one entry per epoch run.
    pub loss_history: Vec<f64>,
    pub epochs_run: usize,
    pub final_cost: f64,
}

/// Incremental trainer: owns the network, optimizer state, and RNG stream,
/// so callers can run epochs one at a time (checkpointed experiments) or
/// drive the full threshold loop via [`Trainer::train_to_threshold`].
pub struct Trainer<F: Scalar> {
    net: NetworkParameters<F>,
    cfg: TrainConfig,
    adam: AdamState<F>,
    rng: ChaCha12Rng,
    history: Vec<f64>,
}

impl<F: Scalar> Trainer<F> {
    pub fn new(net: NetworkParameters<F>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let adam = AdamState::new(&net);
        let rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        Ok(Trainer {
            net,
            cfg,
            adam,
            rng,
            history: Vec::new(),
        })
    }

    pub fn network(&self) -> &NetworkParameters<F> {
        &self.net
    }

    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    fn check_set(&self, set: &LabeledSet<F>) -> Result<()> {
        if set.arity() != self.net.input_size() {
            return Err(Error::contract(format!(
                "set arity {} does not match network input size {}",
                set.arity(),
                self.net.input_size()
            )));
        }
        if let Some(&bad) = set.labels().iter().find(|&&y| y >= self.net.output_size()) {
            return Err(Error::contract(format!(
                "label {bad} outside the network's {} outputs",
                self.net.output_size()
            )));
        }
        Ok(())
    }

    /// Runs one epoch (shuffled minibatches, dropout, Adam updates) and
    /// returns the epoch-end mean cross-entropy on the clean network.
    pub fn run_epoch(&mut self, set: &LabeledSet<F>) -> Result<f64> {
        self.check_set(set)?;
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(&mut self.rng);

        let n_hidden = self.net.layer_sizes.len() - 2;
        let keep = 1.0 - self.cfg.dropout_p;
        let inv_keep = F::from_f64_lossy(1.0 / keep);

        for batch in order.chunks(self.cfg.batch_size) {
            let mut grads = Gradients::zeros_like(&self.net);
            let scale = F::one() / F::from(batch.len()).unwrap();
            for &idx in batch {
                let masks = if self.cfg.dropout_p > 0.0 {
                    let masks: Vec<Vec<F>> = (0..n_hidden)
                        .map(|h| {
                            (0..self.net.layer_sizes[h + 1])
                                .map(|_| {
                                    if self.rng.random_bool(keep) {
                                        inv_keep
                                    } else {
                                        F::zero()
                                    }
                                })
                                .collect()
                        })
                        .collect();
                    Some(masks)
                } else {
                    None
                };
                backprop_sample(
                    &self.net,
                    &set.inputs()[idx],
                    set.labels()[idx],
                    masks.as_deref(),
                    scale,
                    &mut grads,
                );
            }
            self.adam.step(&mut self.net, &grads, &self.cfg);
        }

        let cost = mean_cross_entropy(&self.net, set)?;
        let epoch = self.history.len();
        if !cost.is_finite() {
            return Err(Error::Training {
                epoch,
                reason: format!("epoch cost is not finite ({cost})"),
            });
        }
        self.history.push(cost);
        self.net.metadata.epochs_run = self.history.len();
        self.net.metadata.final_cost = Some(cost);
        Ok(cost)
    }

    /// The Alg.-1 loop: epochs until cost ≤ tau or the epoch budget is
    /// exhausted (counting epochs already run through this trainer).
    pub fn train_to_threshold(&mut self, set: &LabeledSet<F>) -> Result<()> {
        while self.history.len() < self.cfg.max_epochs {
            let cost = self.run_epoch(set)?;
            if cost <= self.cfg.tau && self.cfg.tau > 0.0 {
                break;
            }
        }
        Ok(())
    }

    /// Consumes the trainer, stamping dataset provenance into the model
    /// metadata.
    pub fn into_outcome(mut self, set: &LabeledSet<F>) -> TrainOutcome<F> {
        self.net.metadata.seed = self.cfg.seed;
        self.net.metadata.dataset_fingerprint = Some(set.fingerprint());
        let final_cost = self.history.last().copied().unwrap_or(f64::NAN);
        TrainOutcome {
            network: self.net,
            epochs_run: self.history.len(),
            loss_history: self.history,
            final_cost,
        }
    }
}

/// Trains a network until the cost threshold or epoch budget is reached.
pub fn train<F: Scalar>(
    net: NetworkParameters<F>,
    set: &LabeledSet<F>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<F>> {
    let mut trainer = Trainer::new(net, cfg.clone())?;
    trainer.train_to_threshold(set)?;
    Ok(trainer.into_outcome(set))
}

/// Signed Jacobian of the softmax outputs with respect to the inputs:
/// `result[a][k] = ∂p_k/∂x_a`, computed by backpropagation to the input
/// layer (dropout inactive).
pub fn input_jacobian<F: Scalar>(
    net: &NetworkParameters<F>,
    features: &[F],
) -> Result<Vec<Vec<F>>> {
    net.check_arity(features)?;
    let trace = forward_trace(net, features, None);
    let n_w = net.weights.len();
    let n_out = net.output_size();
    let mut jacobian = vec![vec![F::zero(); n_out]; net.input_size()];

    for k in 0..n_out {
        // ∂p_k/∂logit_j = p_k (δ_kj − p_j).
        let pk = trace.probs[k];
        let mut delta: Vec<F> = trace
            .probs
            .iter()
            .enumerate()
            .map(|(j, &pj)| {
                let kron = if j == k { F::one() } else { F::zero() };
                pk * (kron - pj)
            })
            .collect();

        for l in (0..n_w).rev() {
            let w = &net.weights[l];
            let mut prev = vec![F::zero(); w.rows()];
            for (i, p) in prev.iter_mut().enumerate() {
                let mut acc = F::zero();
                for (&wij, &d) in w.row(i).iter().zip(&delta) {
                    acc = acc + wij * d;
                }
                *p = acc;
            }
            if l > 0 {
                for (p, &z) in prev.iter_mut().zip(&trace.zs[l - 1]) {
                    if z <= F::zero() {
                        *p = F::zero();
                    }
                }
            }
            delta = prev;
        }

        for (a, row) in jacobian.iter_mut().enumerate() {
            row[k] = delta[a];
        }
    }
    Ok(jacobian)
}

/// Significance of one attribute: its per-level mean absolute sensitivity
/// and the maximum over levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSignificance {
    pub name: FeatureName,
    /// Mean |∂p_k/∂x_a| over the evaluation set, one entry per level k.
    pub per_level: Vec<f64>,
    pub max_over_levels: f64,
}

/// Significance of one perspective: the maximum over its attributes'
/// per-level significances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerspectiveSignificance {
    pub perspective: Perspective,
    pub significance: f64,
}

/// Attribute and perspective significance over an evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub attributes: Vec<AttributeSignificance>,
    pub perspectives: Vec<PerspectiveSignificance>,
    /// Number of evaluation inputs averaged over.
    pub samples: usize,
}

/// Computes attribute significance: the mean absolute derivative of each
/// output probability with respect to each input attribute over the
/// evaluation inputs, with perspective significance as the maximum over a
/// perspective's attributes and levels.
pub fn attribute_significance<F: Scalar>(
    net: &NetworkParameters<F>,
    inputs: &[Vec<F>],
    feature_names: &[FeatureName],
) -> Result<SignificanceReport> {
    if inputs.is_empty() {
        return Err(Error::domain(
            "attribute significance needs a non-empty evaluation set".to_string(),
        ));
    }
    if feature_names.len() != net.input_size() {
        return Err(Error::contract(format!(
            "{} feature names for a network with input size {}",
            feature_names.len(),
            net.input_size()
        )));
    }

    let n_in = net.input_size();
    let n_out = net.output_size();
    let mut sums = vec![vec![0.0_f64; n_out]; n_in];
    for x in inputs {
        let jac = input_jacobian(net, x)?;
        for (row, jrow) in sums.iter_mut().zip(&jac) {
            for (s, &j) in row.iter_mut().zip(jrow) {
                *s += j.into_f64().abs();
            }
        }
    }
    let n = inputs.len() as f64;

    let attributes: Vec<AttributeSignificance> = feature_names
        .iter()
        .enumerate()
        .map(|(a, name)| {
            let per_level: Vec<f64> = sums[a].iter().map(|s| s / n).collect();
            let max_over_levels = per_level.iter().copied().fold(0.0, f64::max);
            AttributeSignificance {
                name: name.clone(),
                per_level,
                max_over_levels,
            }
        })
        .collect();

    let perspectives = Perspective::ALL
        .iter()
        .filter_map(|&perspective| {
            let max = attributes
                .iter()
                .filter(|a| a.name.perspective == perspective)
                .map(|a| a.max_over_levels)
                .fold(f64::NEG_INFINITY, f64::max);
            if max.is_finite() {
                Some(PerspectiveSignificance {
                    perspective,
                    significance: max,
                })
            } else {
                None
            }
        })
        .collect();

    Ok(SignificanceReport {
        attributes,
        perspectives,
        samples: inputs.len(),
    })
}

/// Indices of attributes whose max-over-levels significance reaches the
/// threshold. Never returns an empty set: if everything falls below, the
/// single most significant attribute (lowest index on ties) is retained.
pub fn prune_attributes(report: &SignificanceReport, threshold: f64) -> Vec<usize> {
    let retained: Vec<usize> = report
        .attributes
        .iter()
        .enumerate()
        .filter(|(_, a)| a.max_over_levels >= threshold)
        .map(|(i, _)| i)
        .collect();
    if !retained.is_empty() {
        return retained;
    }
    let mut best = 0;
    for (i, attr) in report.attributes.iter().enumerate() {
        if attr.max_over_levels > report.attributes[best].max_over_levels {
            best = i;
        }
    }
    vec![best]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn names(tags: &[(&str, Perspective)]) -> Vec<FeatureName> {
        tags.iter()
            .map(|&(name, perspective)| FeatureName {
                perspective,
                name: name.to_string(),
            })
            .collect()
    }

    fn zero_net(sizes: &[usize]) -> NetworkParameters<f64> {
        let weights = sizes
            .windows(2)
            .map(|p| Matrix::zeros(p[0], p[1]))
            .collect();
        let biases = sizes.windows(2).map(|p| vec![0.0; p[1]]).collect();
        NetworkParameters::from_parts(sizes.to_vec(), weights, biases, ModelMetadata::default())
            .unwrap()
    }

    /// Five-class set separable on the first feature.
    fn separable_set(n: usize, arity: usize, seed: u64) -> LabeledSet<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut inputs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..arity).map(|_| rng.random_range(0.0..1.0)).collect();
            let label = ((x[0] * 5.0) as usize).min(4);
            inputs.push(x);
            labels.push(label);
        }
        LabeledSet::new(inputs, labels).unwrap()
    }

    #[test]
    fn build_network_is_deterministic_and_shaped() {
        let a: NetworkParameters<f64> = build_network(&[7, 32, 32, 5], 1).unwrap();
        let b: NetworkParameters<f64> = build_network(&[7, 32, 32, 5], 1).unwrap();
        assert_eq!(a, b, "same seed gives bit-identical parameters");

        let shapes: Vec<(usize, usize)> =
            a.weights().iter().map(|w| (w.rows(), w.cols())).collect();
        assert_eq!(shapes, vec![(7, 32), (32, 32), (32, 5)]);

        let c: NetworkParameters<f64> = build_network(&[7, 32, 32, 5], 2).unwrap();
        assert_ne!(a, c, "different seeds differ");

        assert!(build_network::<f64>(&[7, 5], 1).is_err(), "no hidden layer");
        assert!(
            build_network::<f64>(&[7, 32, 4], 1).is_err(),
            "wrong output"
        );
        assert!(build_network::<f64>(&[7, 0, 5], 1).is_err(), "zero layer");
    }

    #[test]
    fn forward_on_zero_network_is_uniform() {
        let net = zero_net(&[7, 32, 32, 5]);
        let probs = net.forward(&[0.3; 7]).unwrap();
        for &p in &probs {
            assert_abs_diff_eq!(p, 0.2, epsilon = 1e-12);
        }
        assert!(net.forward(&[0.3; 6]).is_err(), "arity mismatch");
    }

    #[test]
    fn softmax_contracts_hold() {
        let thirds = softmax(&[0.0_f64, 0.0, 0.0]);
        for &p in &thirds {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
        }

        // Huge logits stay finite and normalized (stability).
        let big = softmax(&[1000.0_f64, 999.0, -1000.0]);
        let sum: f64 = big.iter().sum();
        assert!(big.iter().all(|p| p.is_finite()));
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);

        // Subtracting the max logit changes nothing.
        let logits = [3.0_f64, -1.0, 0.5, 2.0, -7.0];
        let shifted: Vec<f64> = logits.iter().map(|l| l - 3.0).collect();
        for (a, b) in softmax(&logits).iter().zip(softmax(&shifted)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_matches_an_independent_recomputation() {
        let net: NetworkParameters<f64> = build_network(&[4, 6, 5], 99).unwrap();
        let x = [0.1, 0.9, 0.4, 0.7];

        // Naive scalar-by-scalar re-computation through the accessors.
        let mut a: Vec<f64> = x.to_vec();
        for l in 0..2 {
            let (n_in, n_out) = (net.layer_sizes()[l], net.layer_sizes()[l + 1]);
            debug_assert_eq!(a.len(), n_in);
            let mut z = vec![0.0; n_out];
            for (j, zj) in z.iter_mut().enumerate() {
                let mut acc = net.bias(l, j);
                for (i, &ai) in a.iter().enumerate() {
                    acc += ai * net.weight(l, i, j);
                }
                *zj = acc;
            }
            if l == 0 {
                for v in z.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            a = z;
        }
        let max = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = a.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let expected: Vec<f64> = exps.iter().map(|e| e / sum).collect();

        let got = net.forward(&x).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert_abs_diff_eq!(*g, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn training_learns_a_separable_rule() {
        let set = separable_set(500, 4, 7);
        let net = build_network(&[4, 16, 5], 7).unwrap();
        let cfg = TrainConfig {
            tau: 0.02,
            dropout_p: 0.0,
            learning_rate: 3e-3,
            max_epochs: 500,
            seed: 7,
            ..TrainConfig::default()
        };
        let outcome = train(net, &set, &cfg).unwrap();
        assert!(outcome.epochs_run <= 500);

        let correct = set
            .inputs()
            .iter()
            .zip(set.labels())
            .filter(|(x, &y)| outcome.network.assess(x).unwrap().level.index() == y)
            .count();
        let accuracy = correct as f64 / set.len() as f64;
        assert!(
            accuracy >= 0.95,
            "training accuracy {accuracy} below 0.95 (epochs: {}, final cost {})",
            outcome.epochs_run,
            outcome.final_cost
        );

        // Loss history trends downward on separable data.
        let first = outcome.loss_history.first().unwrap();
        let last = outcome.loss_history.last().unwrap();
        assert!(last < first);
    }

    #[test]
    fn huge_tau_stops_after_one_epoch() {
        let set = separable_set(64, 4, 3);
        let net = build_network(&[4, 8, 5], 3).unwrap();
        let cfg = TrainConfig {
            tau: 1e9,
            seed: 3,
            ..TrainConfig::default()
        };
        let outcome = train(net, &set, &cfg).unwrap();
        assert_eq!(outcome.epochs_run, 1);
        assert_eq!(outcome.loss_history.len(), 1);
    }

    #[test]
    fn tau_zero_exhausts_the_epoch_budget() {
        let set = separable_set(64, 4, 3);
        let net = build_network(&[4, 8, 5], 3).unwrap();
        let cfg = TrainConfig {
            tau: 0.0,
            max_epochs: 7,
            seed: 3,
            ..TrainConfig::default()
        };
        let outcome = train(net, &set, &cfg).unwrap();
        assert_eq!(outcome.epochs_run, 7);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let set = separable_set(128, 4, 11);
        let run = || {
            let net = build_network(&[4, 8, 5], 11).unwrap();
            let cfg = TrainConfig {
                max_epochs: 5,
                tau: 0.0,
                seed: 11,
                ..TrainConfig::default()
            };
            train(net, &set, &cfg).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.network, b.network, "dropout included, same stream");
        assert_eq!(a.loss_history, b.loss_history);
    }

    #[test]
    fn divergence_is_reported_with_the_epoch() {
        // One sample per class with an absurd learning rate saturates the
        // softmax away from at least one label, making the cost infinite.
        let inputs = (0..5).map(|i| vec![i as f64 / 4.0; 4]).collect();
        let labels = (0..5).collect();
        let set = LabeledSet::new(inputs, labels).unwrap();
        let net = build_network(&[4, 8, 5], 1).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e15,
            tau: 0.0,
            dropout_p: 0.0,
            max_epochs: 50,
            seed: 1,
            ..TrainConfig::default()
        };
        match train(net, &set, &cfg) {
            Err(Error::Training { epoch, .. }) => assert!(epoch < 50),
            other => panic!("expected a training failure, got {other:?}"),
        }
    }

    #[test]
    fn assess_reports_argmax_level_and_confidence() {
        // Bias-only logits reproducing probabilities ≈ (0.8, 0.15, 0.05, ~0, ~0).
        let mut net = zero_net(&[3, 4, 5]);
        for (j, p) in [0.8_f64, 0.15, 0.05, 1e-30, 1e-30].iter().enumerate() {
            net.set_bias(1, j, p.ln());
        }
        let got = net.assess(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(got.level, TrustLevel::NotTrusted);
        assert_abs_diff_eq!(got.confidence, 0.8, epsilon = 1e-9);
        let sum: f64 = got.probabilities.iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);

        // Uniform probabilities: tie broken toward the lowest index.
        let uniform = zero_net(&[3, 4, 5]);
        let got = uniform.assess(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(got.level, TrustLevel::NotTrusted);
        assert_abs_diff_eq!(got.confidence, 0.2, epsilon = 1e-12);

        assert!(uniform.assess(&[0.5, 0.5]).is_err(), "arity mismatch");

        // Growing the dominant logit drives confidence toward 1.
        let mut peaked = zero_net(&[3, 4, 5]);
        peaked.set_bias(1, 3, 20.0);
        let got = peaked.assess(&[0.0; 3]).unwrap();
        assert_eq!(got.level, TrustLevel::Trusted);
        assert!(got.confidence > 0.999999);
    }

    #[test]
    fn assess_level_equals_raw_logit_argmax() {
        let net: NetworkParameters<f64> = build_network(&[4, 8, 5], 42).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let logits = net.logits(&x).unwrap();
            let mut best = 0;
            for (i, &l) in logits.iter().enumerate() {
                if l > logits[best] {
                    best = i;
                }
            }
            assert_eq!(net.assess(&x).unwrap().level.index(), best);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let set = separable_set(16, 4, 21);
        let mut net: NetworkParameters<f64> = build_network(&[4, 8, 5], 21).unwrap();
        let grads = loss_gradients(&net, &set).unwrap();
        let h = 1e-5;

        let mut checked = 0;
        for l in 0..net.weights().len() {
            for i in 0..net.weights()[l].rows() {
                for j in 0..net.weights()[l].cols() {
                    let orig = net.weight(l, i, j);
                    net.set_weight(l, i, j, orig + h);
                    let up = mean_cross_entropy(&net, &set).unwrap();
                    net.set_weight(l, i, j, orig - h);
                    let down = mean_cross_entropy(&net, &set).unwrap();
                    net.set_weight(l, i, j, orig);

                    let numeric = (up - down) / (2.0 * h);
                    let analytic = grads.weights[l].get(i, j);
                    let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                    assert!(
                        ((numeric - analytic).abs() / denom) < 1e-4,
                        "weight[{l}][{i}][{j}]: numeric {numeric} vs analytic {analytic}"
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn significance_matches_the_analytic_linear_case() {
        // A single 2→2 linear layer with identity weights at input (0,0):
        // softmax is uniform, so |∂p_k/∂x_a| = 0.25 everywhere.
        let mut w = Matrix::zeros(2, 2);
        w.set(0, 0, 1.0);
        w.set(1, 1, 1.0);
        let net = NetworkParameters::from_parts(
            vec![2, 2],
            vec![w],
            vec![vec![0.0, 0.0]],
            ModelMetadata::default(),
        )
        .unwrap();

        let report = attribute_significance(
            &net,
            &[vec![0.0, 0.0]],
            &names(&[("a", Perspective::Owner), ("b", Perspective::Device)]),
        )
        .unwrap();
        for attr in &report.attributes {
            for &s in &attr.per_level {
                assert_abs_diff_eq!(s, 0.25, epsilon = 1e-9);
            }
            assert_abs_diff_eq!(attr.max_over_levels, 0.25, epsilon = 1e-9);
        }
        for p in &report.perspectives {
            assert_abs_diff_eq!(p.significance, 0.25, epsilon = 1e-9);
        }
    }

    #[test]
    fn dead_inputs_have_zero_significance() {
        let mut net: NetworkParameters<f64> = build_network(&[3, 8, 5], 4).unwrap();
        for j in 0..8 {
            net.set_weight(0, 2, j, 0.0);
        }
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let inputs: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let report = attribute_significance(
            &net,
            &inputs,
            &names(&[
                ("a", Perspective::Owner),
                ("b", Perspective::Device),
                ("dead", Perspective::Service),
            ]),
        )
        .unwrap();
        assert_eq!(report.attributes[2].max_over_levels, 0.0);
        assert!(report.attributes[0].max_over_levels > 0.0);
        let service = report
            .perspectives
            .iter()
            .find(|p| p.perspective == Perspective::Service)
            .unwrap();
        assert_eq!(service.significance, 0.0);
    }

    #[test]
    fn significance_matches_finite_differences() {
        let net: NetworkParameters<f64> = build_network(&[4, 8, 5], 17).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
        let jac = input_jacobian(&net, &x).unwrap();
        let h = 1e-5;
        for a in 0..4 {
            let mut up = x.clone();
            up[a] += h;
            let mut down = x.clone();
            down[a] -= h;
            let pu = net.forward(&up).unwrap();
            let pd = net.forward(&down).unwrap();
            for k in 0..5 {
                let numeric = (pu[k] - pd[k]) / (2.0 * h);
                let analytic = jac[a][k];
                let denom = numeric.abs().max(analytic.abs()).max(1e-8);
                assert!(
                    ((numeric - analytic).abs() / denom) < 1e-4,
                    "∂p{k}/∂x{a}: numeric {numeric} vs analytic {analytic}"
                );
            }
        }
    }

    #[test]
    fn duplicated_attribute_columns_tie_their_significance() {
        // Two inputs wired identically into the hidden layer: any input
        // vector with equal entries must produce equal significances.
        let mut net: NetworkParameters<f64> = build_network(&[2, 6, 5], 23).unwrap();
        for j in 0..6 {
            let w = net.weight(0, 0, j);
            net.set_weight(0, 1, j, w);
        }
        let inputs = vec![vec![0.4, 0.4], vec![0.9, 0.9], vec![0.1, 0.1]];
        let report = attribute_significance(
            &net,
            &inputs,
            &names(&[("orig", Perspective::Owner), ("dup", Perspective::Owner)]),
        )
        .unwrap();
        assert_abs_diff_eq!(
            report.attributes[0].max_over_levels,
            report.attributes[1].max_over_levels,
            epsilon = 1e-12
        );
    }

    #[test]
    fn prune_keeps_the_contract() {
        let report = SignificanceReport {
            attributes: [0.9, 0.05, 0.4]
                .iter()
                .map(|&s| AttributeSignificance {
                    name: FeatureName {
                        perspective: Perspective::Owner,
                        name: format!("f{s}"),
                    },
                    per_level: vec![s],
                    max_over_levels: s,
                })
                .collect(),
            perspectives: vec![],
            samples: 1,
        };
        assert_eq!(prune_attributes(&report, 0.0), vec![0, 1, 2]);
        assert_eq!(prune_attributes(&report, 0.1), vec![0, 2]);
        assert_eq!(prune_attributes(&report, 2.0), vec![0], "top-1 fallback");

        let zeros = SignificanceReport {
            attributes: (0..3)
                .map(|i| AttributeSignificance {
                    name: FeatureName {
                        perspective: Perspective::Owner,
                        name: format!("f{i}"),
                    },
                    per_level: vec![0.0],
                    max_over_levels: 0.0,
                })
                .collect(),
            perspectives: vec![],
            samples: 1,
        };
        assert_eq!(
            prune_attributes(&zeros, 0.1),
            vec![0],
            "lowest index on ties"
        );
    }

    #[test]
    fn save_load_round_trips_bit_exact() {
        let set = separable_set(64, 4, 13);
        let net = build_network(&[4, 8, 5], 13).unwrap();
        let cfg = TrainConfig {
            max_epochs: 3,
            tau: 0.0,
            seed: 13,
            ..TrainConfig::default()
        };
        let trained = train(net, &set, &cfg).unwrap().network;

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        trained.save(&path).unwrap();
        let loaded = NetworkParameters::<f64>::load(&path).unwrap();
        assert_eq!(loaded, trained, "bit-exact parameters and metadata");

        let x = [0.3, 0.8, 0.1, 0.5];
        assert_eq!(loaded.forward(&x).unwrap(), trained.forward(&x).unwrap());

        // Truncated file: load error, no partial model.
        let text = std::fs::read_to_string(&path).unwrap();
        let cut = dir.path().join("truncated.json");
        std::fs::write(&cut, &text[..text.len() / 2]).unwrap();
        assert!(matches!(
            NetworkParameters::<f64>::load(&cut),
            Err(Error::ModelFile(_))
        ));

        // Version mismatch.
        let bumped = text.replace("\"version\": 1", "\"version\": 99");
        let vpath = dir.path().join("future.json");
        std::fs::write(&vpath, bumped).unwrap();
        assert!(matches!(
            NetworkParameters::<f64>::load(&vpath),
            Err(Error::ModelFile(_))
        ));
    }

    #[test]
    fn labeled_set_validates_and_fingerprints() {
        assert!(LabeledSet::<f64>::new(vec![], vec![]).is_err());
        assert!(LabeledSet::new(vec![vec![0.1]], vec![0, 1]).is_err());
        assert!(LabeledSet::new(vec![vec![0.1], vec![0.1, 0.2]], vec![0, 1]).is_err());
        assert!(LabeledSet::new(vec![vec![0.1]], vec![5]).is_err());

        let a = LabeledSet::new(vec![vec![0.1, 0.2]], vec![3]).unwrap();
        let b = LabeledSet::new(vec![vec![0.1, 0.2]], vec![3]).unwrap();
        let c = LabeledSet::new(vec![vec![0.1, 0.3]], vec![3]).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_for_any_finite_logits(
            logits in proptest::collection::vec(-1e3f64..1e3, 2..8),
        ) {
            let probs = softmax(&logits);
            let sum: f64 = probs.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(probs.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }
}
