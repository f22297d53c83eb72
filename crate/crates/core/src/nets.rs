//! Dense ReLU networks with hand-written backpropagation.
//!
//! Hidden layers apply ReLU, the last layer is linear and produces logits.
//! A classifier's probabilities are `softmax(logits / temperature)`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::seed::rng_from_seed;
use crate::{Error, Result};

/// One affine layer; `weights` is row-major `out_dim x in_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::input("layer dimensions must be positive"));
        }
        if weights.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::input(format!(
                "layer {out_dim}x{in_dim} needs {} weights and {out_dim} biases, got {} and {}",
                in_dim * out_dim,
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite layer parameter"));
        }
        Ok(Dense { in_dim, out_dim, weights, bias })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.in_dim + inp]
    }

    #[inline]
    pub fn set_weight(&mut self, out: usize, inp: usize, v: f64) {
        self.weights[out * self.in_dim + inp] = v;
    }

    /// `W x + b`, accumulated left to right with the bias added last.
    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| {
                let mut acc = 0.0;
                for (w, v) in row.iter().zip(x) {
                    acc += w * v;
                }
                acc + b
            })
            .collect()
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Feed-forward network parameters plus the softmax temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    layers: Vec<Dense>,
    temperature: f64,
}

/// Per-layer parameter gradients, same shapes as the model.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    fn zeros_like(model: &ModelParams) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    fn scale(&mut self, s: f64) {
        for (w, b) in &mut self.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|g| *g *= s);
        }
    }

    fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b))
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

impl ModelParams {
    pub fn new(layers: Vec<Dense>, temperature: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::input("model needs at least one layer"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::input(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    pair[0].out_dim,
                    k + 1,
                    pair[1].in_dim
                )));
            }
        }
        for l in &layers {
            Dense::new(l.in_dim, l.out_dim, l.weights.clone(), l.bias.clone())?;
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(Error::input(format!("temperature must be > 0, got {temperature}")));
        }
        Ok(ModelParams { layers, temperature })
    }

    /// Glorot-uniform weights, zero biases. `dims` = `[input, hidden..., output]`.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::input("need at least input and output dims"));
        }
        let mut rng = rng_from_seed(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Dense::new(fan_in, fan_out, weights, vec![0.0; fan_out])
            })
            .collect::<Result<Vec<_>>>()?;
        ModelParams::new(layers, 1.0)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn with_temperature(&self, t: f64) -> Result<Self> {
        ModelParams::new(self.layers.clone(), t)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    pub fn num_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    /// `[input, hidden..., output]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Same network with the last layer divided by the temperature and the
    /// temperature reset to 1; logits of the result equal `logits / T`.
    pub fn fold_temperature(&self) -> ModelParams {
        let mut layers = self.layers.clone();
        let last = layers.last_mut().expect("non-empty");
        let t = self.temperature;
        last.weights.iter_mut().for_each(|w| *w /= t);
        last.bias.iter_mut().for_each(|b| *b /= t);
        ModelParams { layers, temperature: 1.0 }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::input(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Raw logits (temperature not applied).
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.affine(&h);
            if k != last {
                h.iter_mut().for_each(|v| *v = relu(*v));
            }
        }
        h
    }

    /// Class probabilities at the model's temperature.
    pub fn predict_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        softmax_probs(&self.forward(x)?, self.temperature)
    }

    /// `(argmax label, max probability)`.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, f64)> {
        let p = self.predict_probs(x)?;
        let k = argmax(&p);
        Ok((k, p[k]))
    }

    /// Inputs to every layer (`acts[0]` is `x`) and the final logits.
    fn forward_trace(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(&h);
            acts.push(h);
            if k != last {
                z.iter_mut().for_each(|v| *v = relu(*v));
            }
            h = z;
        }
        (acts, h)
    }

    /// Accumulates parameter gradients for one sample given dLoss/dlogits.
    fn backward(&self, acts: &[Vec<f64>], dlogits: &[f64], grads: &mut Gradients) {
        let mut delta = dlogits.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &acts[k];
            let (gw, gb) = &mut grads.layers[k];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, v) in row.iter_mut().zip(input) {
                    *g += d * v;
                }
            }
            if k == 0 {
                break;
            }
            // Inputs of layer k are post-ReLU outputs of layer k-1; the ReLU
            // derivative is 1 where the output is positive and 0 otherwise.
            let mut prev = vec![0.0; layer.in_dim];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    /// Mean loss and parameter gradients over `indices`.
    pub fn batch_gradient<F>(&self, inputs: &[Vec<f64>], indices: &[usize], loss: &F) -> Result<(f64, Gradients)>
    where
        F: Fn(usize, &[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let mut grads = Gradients::zeros_like(self);
        let mut total = 0.0;
        for &i in indices {
            let (acts, logits) = self.forward_trace(&inputs[i]);
            let (l, dlogits) = loss(i, &logits)?;
            total += l;
            self.backward(&acts, &dlogits, &mut grads);
        }
        let n = indices.len().max(1) as f64;
        grads.scale(1.0 / n);
        Ok((total / n, grads))
    }

    fn apply_update(&mut self, step: &Gradients, lr: f64) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(&step.layers) {
            for (w, g) in layer.weights.iter_mut().zip(gw) {
                *w -= lr * g;
            }
            for (b, g) in layer.bias.iter_mut().zip(gb) {
                *b -= lr * g;
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn layers_mut(&mut self) -> &mut Vec<Dense> {
        &mut self.layers
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            input_dim: self.input_dim(),
            layer_dims: self.layers.iter().map(|l| l.out_dim).collect(),
            weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.layers.iter().map(|l| l.bias.clone()).collect(),
            temperature: self.temperature,
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(file.format_version));
        }
        let n = file.layer_dims.len();
        if file.weights.len() != n || file.biases.len() != n {
            return Err(Error::input("layer_dims, weights and biases differ in length"));
        }
        let mut in_dim = file.input_dim;
        let mut layers = Vec::with_capacity(n);
        for ((out, w), b) in file.layer_dims.iter().zip(file.weights).zip(file.biases) {
            layers.push(Dense::new(in_dim, *out, w, b)?);
            in_dim = *out;
        }
        ModelParams::new(layers, file.temperature)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        ModelParams::from_file(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ModelParams::from_json(&std::fs::read_to_string(path)?)
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk model document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub input_dim: usize,
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub temperature: f64,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable `softmax(logits / temperature)`.
pub fn softmax_probs(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::input("empty logit vector"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::input("non-finite logit"));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::input(format!("temperature must be > 0, got {temperature}")));
    }
    Ok(softmax_unchecked(logits, temperature))
}

pub(crate) fn softmax_unchecked(logits: &[f64], temperature: f64) -> Vec<f64> {
    let m = logits[argmax(logits)];
    let mut p: Vec<f64> = logits.iter().map(|z| ((z - m) / temperature).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Momentum { beta: f64 },
    /// Per-parameter normalised steps; needed where losses saturate and raw
    /// gradients vanish.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Rescale each mini-batch gradient to at most this L2 norm.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Anneal the step size to zero over the run along a half cosine.
    #[serde(default)]
    pub cosine_decay: bool,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            epochs: 200,
            lr: 0.05,
            batch_size: 64,
            seed: 0,
            optimizer: Optimizer::Momentum { beta: 0.9 },
            grad_clip: None,
            cosine_decay: false,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        match self.optimizer {
            Optimizer::Sgd => {}
            Optimizer::Momentum { beta } => {
                if !(0.0..1.0).contains(&beta) {
                    return Err(Error::config(format!("momentum must lie in [0, 1), got {beta}")));
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
                    return Err(Error::config("Adam needs beta1, beta2 in [0, 1) and eps > 0"));
                }
            }
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::config("gradient clip must be positive"));
            }
        }
        Ok(())
    }
}

/// Mini-batch training of `model` under a per-sample loss that returns
/// `(loss, dLoss/dlogits)`. Returns the trained model and the mean training
/// loss observed during each epoch.
pub fn train_with<F>(
    model: &ModelParams,
    inputs: &[Vec<f64>],
    cfg: &OptConfig,
    loss: F,
) -> Result<(ModelParams, Vec<f64>)>
where
    F: Fn(usize, &[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::input("training set is empty"));
    }
    if let Some(x) = inputs.iter().find(|x| x.len() != model.input_dim()) {
        return Err(Error::input(format!(
            "input has {} features, model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    let mut model = model.clone();
    if cfg.epochs == 0 {
        return Ok((model, Vec::new()));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut velocity: Option<Gradients> = None;
    let mut second: Option<Gradients> = None;
    let mut step_no = 0i32;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = if cfg.cosine_decay {
            0.5 * cfg.lr * (1.0 + (std::f64::consts::PI * epoch as f64 / cfg.epochs as f64).cos())
        } else {
            cfg.lr
        };
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (l, mut g) = model.batch_gradient(inputs, batch, &loss)?;
            epoch_loss += l * batch.len() as f64;
            if let Some(c) = cfg.grad_clip {
                let n = g.norm();
                if n > c {
                    g.scale(c / n);
                }
            }
            let step = match cfg.optimizer {
                Optimizer::Sgd => g,
                Optimizer::Momentum { beta } => {
                    let v = velocity.get_or_insert_with(|| Gradients::zeros_like(&model));
                    for ((vw, vb), (gw, gb)) in v.layers.iter_mut().zip(&g.layers) {
                        for (a, b) in vw.iter_mut().zip(gw) {
                            *a = beta * *a + b;
                        }
                        for (a, b) in vb.iter_mut().zip(gb) {
                            *a = beta * *a + b;
                        }
                    }
                    v.clone()
                }
                Optimizer::Adam { beta1, beta2, eps } => {
                    step_no += 1;
                    let m1 = velocity.get_or_insert_with(|| Gradients::zeros_like(&model));
                    let m2 = second.get_or_insert_with(|| Gradients::zeros_like(&model));
                    let c1 = 1.0 - beta1.powi(step_no);
                    let c2 = 1.0 - beta2.powi(step_no);
                    let mut out = g;
                    for ((a1, b1), ((a2, b2), (ga, gb))) in
                        m1.layers.iter_mut().zip(m2.layers.iter_mut().zip(out.layers.iter_mut()))
                    {
                        for ((p, q), g) in a1.iter_mut().chain(b1.iter_mut()).zip(a2.iter_mut().chain(b2.iter_mut())).zip(ga.iter_mut().chain(gb.iter_mut())) {
                            *p = beta1 * *p + (1.0 - beta1) * *g;
                            *q = beta2 * *q + (1.0 - beta2) * *g * *g;
                            *g = (*p / c1) / ((*q / c2).sqrt() + eps);
                        }
                    }
                    out
                }
            };
            model.apply_update(&step, lr);
        }
        history.push(epoch_loss / inputs.len() as f64);
    }
    if model.layers.iter().any(|l| l.weights.iter().chain(&l.bias).any(|v| !v.is_finite())) {
        return Err(Error::input("training diverged (non-finite parameters)"));
    }
    Ok((model, history))
}

/// Cross-entropy of `softmax(logits / t)` against `label`, and its gradient
/// with respect to the logits.
pub fn cross_entropy_grad(logits: &[f64], label: usize, t: f64) -> (f64, Vec<f64>) {
    let mut p = softmax_unchecked(logits, t);
    let loss = -p[label].max(f64::MIN_POSITIVE).ln();
    p[label] -= 1.0;
    p.iter_mut().for_each(|g| *g /= t);
    (loss, p)
}

fn class_labels(model: &ModelParams, data: &Dataset) -> Result<Vec<usize>> {
    if data.is_empty() {
        return Err(Error::input("dataset is empty"));
    }
    let labels = data.labels()?;
    let c = model.output_dim();
    if let Some(l) = labels.iter().find(|l| **l >= c) {
        return Err(Error::input(format!("label {l} outside the model's {c} classes")));
    }
    Ok(labels.to_vec())
}

/// Trains with mean cross-entropy at the model's temperature.
pub fn train_ce(model: &ModelParams, data: &Dataset, cfg: &OptConfig) -> Result<ModelParams> {
    train_ce_with_history(model, data, cfg).map(|(m, _)| m)
}

pub fn train_ce_with_history(
    model: &ModelParams,
    data: &Dataset,
    cfg: &OptConfig,
) -> Result<(ModelParams, Vec<f64>)> {
    let labels = class_labels(model, data)?;
    let t = model.temperature();
    train_with(model, &data.inputs(), cfg, |i, z| Ok(cross_entropy_grad(z, labels[i], t)))
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn accuracy(model: &ModelParams, data: &Dataset) -> Result<f64> {
    let labels = class_labels(model, data)?;
    let inputs = data.inputs();
    let correct = inputs
        .iter()
        .zip(&labels)
        .filter(|(x, y)| argmax(&model.forward_unchecked(x)) == **y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

fn mean_nll(logits: &[Vec<f64>], labels: &[usize], t: f64) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(z, y)| cross_entropy_grad(z, *y, t).0)
        .sum::<f64>()
        / labels.len() as f64
}

/// Validation NLL of `model`'s logits at temperature `t`.
pub fn nll_at_temperature(model: &ModelParams, val: &Dataset, t: f64) -> Result<f64> {
    let labels = class_labels(model, val)?;
    let logits: Vec<Vec<f64>> = val.inputs().iter().map(|x| model.forward(x)).collect::<Result<_>>()?;
    Ok(mean_nll(&logits, &labels, t))
}

/// Temperature minimising validation NLL: golden-section search over
/// `ln T` in [-3, 3] to a bracket width of 1e-4, never worse than `T = 1`.
pub fn fit_temperature(model: &ModelParams, val: &Dataset) -> Result<f64> {
    let labels = class_labels(model, val)?;
    let logits: Vec<Vec<f64>> = val.inputs().iter().map(|x| model.forward(x)).collect::<Result<_>>()?;
    let f = |s: f64| mean_nll(&logits, &labels, s.exp());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-3.0f64, 3.0f64);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-4 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let s = 0.5 * (a + b);
    let t = s.exp();
    Ok(if f(s) <= f(0.0) { t } else { 1.0 })
}

/// Regressor predicting a Gaussian: output 0 is the mean, output 1 the
/// log-variance.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianHeadModel {
    net: ModelParams,
}

impl GaussianHeadModel {
    pub fn new(net: ModelParams) -> Result<Self> {
        if net.output_dim() != 2 {
            return Err(Error::input("Gaussian head needs exactly two outputs (mean, log-variance)"));
        }
        Ok(GaussianHeadModel { net })
    }

    pub fn init(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let dims: Vec<usize> = std::iter::once(input_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(2))
            .collect();
        GaussianHeadModel::new(ModelParams::init(&dims, seed)?)
    }

    pub fn net(&self) -> &ModelParams {
        &self.net
    }

    /// `(mean, variance)`.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        let out = self.net.forward(x)?;
        Ok((out[0], out[1].exp()))
    }
}

/// `0.5 * ((y - mu)^2 / var + ln var)`.
pub fn gaussian_nll(mu: f64, var: f64, y: f64) -> Result<f64> {
    if !(var > 0.0) {
        return Err(Error::input(format!("variance must be > 0, got {var}")));
    }
    Ok(0.5 * ((y - mu).powi(2) / var + var.ln()))
}

/// NLL and its gradient with respect to `(mean, log-variance)` outputs.
pub fn gaussian_nll_grad(out: &[f64], y: f64) -> (f64, Vec<f64>) {
    let (mu, s) = (out[0], out[1]);
    let inv_var = (-s).exp();
    let r = y - mu;
    let loss = 0.5 * (r * r * inv_var + s);
    (loss, vec![-r * inv_var, 0.5 * (1.0 - r * r * inv_var)])
}

/// Trains a Gaussian-head regressor on NLL.
pub fn train_gaussian_nll(model: &GaussianHeadModel, data: &Dataset, cfg: &OptConfig) -> Result<GaussianHeadModel> {
    let ys = data.real_targets()?.to_vec();
    let (net, _) = train_with(&model.net, &data.inputs(), cfg, |i, out| Ok(gaussian_nll_grad(out, ys[i])))?;
    GaussianHeadModel::new(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn dense_oracle(layers: &[(Vec<Vec<f64>>, Vec<f64>)], x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for (k, (w, b)) in layers.iter().enumerate() {
            let mut z: Vec<f64> = w
                .iter()
                .zip(b)
                .map(|(row, bi)| row.iter().zip(&h).map(|(a, c)| a * c).sum::<f64>() + bi)
                .collect();
            if k + 1 < layers.len() {
                z = z.into_iter().map(|v| v.max(0.0)).collect();
            }
            h = z;
        }
        h
    }

    #[test]
    fn identity_layer_forward() {
        let m = ModelParams::new(vec![Dense::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap()], 1.0)
            .unwrap();
        assert_eq!(m.forward(&[1.5, -2.0]).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn zero_weights_give_last_bias() {
        let mut m = ModelParams::init(&[3, 5, 2], 4).unwrap();
        for l in m.layers_mut().iter_mut() {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        m.layers_mut()[1].bias = vec![0.25, -1.0];
        assert_eq!(m.forward(&[9.0, -3.0, 1.0]).unwrap(), vec![0.25, -1.0]);
    }

    #[test]
    fn forward_matches_dense_oracle() {
        let mut rng = rng_from_seed(99);
        for trial in 0..20 {
            let dims = [3, 7, 4];
            let mut m = ModelParams::init(&dims, trial).unwrap();
            for l in m.layers_mut().iter_mut() {
                l.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
            }
            let nested: Vec<(Vec<Vec<f64>>, Vec<f64>)> = m
                .layers()
                .iter()
                .map(|l| (l.weights.chunks(l.in_dim).map(<[f64]>::to_vec).collect(), l.bias.clone()))
                .collect();
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let got = m.forward(&x).unwrap();
            for (a, b) in got.iter().zip(dense_oracle(&nested, &x)) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_dimension() {
        let m = ModelParams::init(&[2, 3], 0).unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn softmax_examples() {
        let p = softmax_probs(&[0.0, 0.0, 0.0], 1.0).unwrap();
        for v in p {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
        let p = softmax_probs(&[2f64.ln(), 0.0], 1.0).unwrap();
        assert_abs_diff_eq!(p[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 1.0 / 3.0, epsilon = 1e-15);
        let p = softmax_probs(&[3.0, 1.0], 1000.0).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-3 && (p[1] - 0.5).abs() < 1e-3);
        assert!(softmax_probs(&[f64::NAN, 0.0], 1.0).is_err());
        assert!(softmax_probs(&[0.0], 0.0).is_err());
    }

    #[test]
    fn softmax_sums_to_one_on_fuzzed_logits() {
        let mut rng = rng_from_seed(1);
        for _ in 0..100_000 {
            let c = rng.random_range(1..8);
            let z: Vec<f64> = (0..c).map(|_| rng.random_range(-50.0..50.0)).collect();
            let t = rng.random_range(0.05..20.0);
            let p = softmax_probs(&z, t).unwrap();
            let s: f64 = p.iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
            let m = z.iter().cloned().fold(f64::MIN, f64::max);
            for (v, zi) in p.iter().zip(&z) {
                assert!(*v <= 1.0);
                // Strictly positive unless exp underflows.
                assert!(*v > 0.0 || (m - zi) / t > 700.0);
            }
        }
    }

    proptest! {
        #[test]
        fn softmax_preserves_argmax(z in prop::collection::vec(-30.0f64..30.0, 1..6), t in 0.01f64..100.0) {
            let p = softmax_probs(&z, t).unwrap();
            let top = argmax(&z);
            // Distinct logits can collapse to equal probabilities only through
            // underflow, which a ties-low argmax resolves consistently.
            let pt = argmax(&p);
            prop_assert!(pt == top || p[pt] == p[top]);
        }
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let m = ModelParams::init(&[2, 4, 3], 1).unwrap();
        let ds = Dataset::classification(vec![vec![0.0, 1.0]], vec![2], 3).unwrap();
        let cfg = OptConfig { epochs: 0, ..OptConfig::default() };
        assert_eq!(train_ce(&m, &ds, &cfg).unwrap(), m);
    }

    #[test]
    fn empty_dataset_rejected() {
        let m = ModelParams::init(&[2, 3], 1).unwrap();
        let ds = Dataset::classification(vec![], vec![], 3).unwrap();
        assert!(matches!(train_ce(&m, &ds, &OptConfig::default()), Err(Error::InvalidInput(_))));
        assert!(fit_temperature(&m, &ds).is_err());
    }

    fn blobs(n: usize, seed: u64) -> Dataset {
        let mut rng = rng_from_seed(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let cx = if c == 0 { -2.0 } else { 2.0 };
            xs.push(vec![cx + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            ys.push(c);
        }
        Dataset::classification(xs, ys, 2).unwrap()
    }

    #[test]
    fn separable_blobs_reach_full_accuracy() {
        let ds = blobs(200, 3);
        let m = ModelParams::init(&[2, 8, 2], 5).unwrap();
        let cfg = OptConfig { epochs: 200, lr: 0.05, batch_size: 32, seed: 1, ..OptConfig::default() };
        let trained = train_ce(&m, &ds, &cfg).unwrap();
        assert_eq!(accuracy(&trained, &ds).unwrap(), 1.0);
    }

    #[test]
    fn full_batch_loss_is_non_increasing() {
        let ds = blobs(60, 8);
        let m = ModelParams::init(&[2, 6, 2], 2).unwrap();
        let cfg = OptConfig {
            epochs: 50,
            lr: 0.01,
            batch_size: 60,
            seed: 0,
            optimizer: Optimizer::Sgd,
            grad_clip: None,
            cosine_decay: false,
        };
        let (_, hist) = train_ce_with_history(&m, &ds, &cfg).unwrap();
        for w in hist.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let ds = blobs(50, 1);
        let m = ModelParams::init(&[2, 5, 2], 0).unwrap();
        let cfg = OptConfig { epochs: 5, ..OptConfig::default() };
        assert_eq!(train_ce(&m, &ds, &cfg).unwrap(), train_ce(&m, &ds, &cfg).unwrap());
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = rng_from_seed(17);
        let mut m = ModelParams::init(&[3, 5, 4, 3], 7).unwrap();
        for l in m.layers_mut().iter_mut() {
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(0.05..0.5));
        }
        let m = m.with_temperature(1.3).unwrap();
        let inputs: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let labels = [0usize, 1, 2, 1, 0, 2];
        let t = m.temperature();
        let loss = |i: usize, z: &[f64]| Ok(cross_entropy_grad(z, labels[i], t));
        let idx: Vec<usize> = (0..inputs.len()).collect();
        let (_, g) = m.batch_gradient(&inputs, &idx, &loss).unwrap();
        let h = 1e-5;
        let eval = |mm: &ModelParams| mm.batch_gradient(&inputs, &idx, &loss).unwrap().0;
        for (k, layer) in m.layers().iter().enumerate() {
            for j in 0..layer.weights.len() {
                let mut plus = m.clone();
                plus.layers_mut()[k].weights[j] += h;
                let mut minus = m.clone();
                minus.layers_mut()[k].weights[j] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let an = g.layers[k].0[j];
                let denom = fd.abs().max(an.abs()).max(1e-6);
                assert!((fd - an).abs() / denom <= 1e-4, "layer {k} w{j}: fd {fd} vs {an}");
            }
            for j in 0..layer.bias.len() {
                let mut plus = m.clone();
                plus.layers_mut()[k].bias[j] += h;
                let mut minus = m.clone();
                minus.layers_mut()[k].bias[j] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let an = g.layers[k].1[j];
                let denom = fd.abs().max(an.abs()).max(1e-6);
                assert!((fd - an).abs() / denom <= 1e-4, "layer {k} b{j}: fd {fd} vs {an}");
            }
        }
    }

    #[test]
    fn forward_is_bit_reproducible() {
        let m = ModelParams::init(&[4, 9, 3], 3).unwrap();
        let x = [0.1, -0.7, 2.5, 1e-3];
        let a = m.forward(&x).unwrap();
        let b = m.forward(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    /// Grid search over T, independent of the golden-section code path.
    fn grid_best_t(logits: &[Vec<f64>], labels: &[usize]) -> f64 {
        let mut best = (f64::INFINITY, 1.0);
        for k in 0..=6000 {
            let t = (-3.0 + 6.0 * k as f64 / 6000.0).exp();
            let nll: f64 = logits
                .iter()
                .zip(labels)
                .map(|(z, y)| {
                    let m = z.iter().cloned().fold(f64::MIN, f64::max);
                    let s: f64 = z.iter().map(|v| ((v - m) / t).exp()).sum();
                    -((z[*y] - m) / t - s.ln())
                })
                .sum();
            if nll < best.0 {
                best = (nll, t);
            }
        }
        best.1
    }

    #[test]
    fn temperature_is_one_when_logits_are_log_frequencies() {
        // Single linear layer with zero weights and bias = log class frequency.
        let freqs = [0.5, 0.3, 0.2];
        let bias: Vec<f64> = freqs.iter().map(|f: &f64| f.ln()).collect();
        let m = ModelParams::new(vec![Dense::new(1, 3, vec![0.0; 3], bias).unwrap()], 1.0).unwrap();
        let mut labels = vec![0; 50];
        labels.extend(vec![1; 30]);
        labels.extend(vec![2; 20]);
        let ds = Dataset::classification(vec![vec![0.0]; 100], labels.clone(), 3).unwrap();
        let t = fit_temperature(&m, &ds).unwrap();
        assert!((t - 1.0).abs() <= 0.05, "{t}");
        let logits = vec![m.forward(&[0.0]).unwrap(); 100];
        assert!((grid_best_t(&logits, &labels) - 1.0).abs() <= 0.05);
    }

    #[test]
    fn scaling_last_layer_scales_temperature() {
        let ds = blobs(300, 21);
        // Overlapping labels so the optimum temperature is finite.
        let mut noisy = ds.clone();
        if let crate::data::Targets::Classes { labels, .. } = &mut noisy.targets {
            for (i, l) in labels.iter_mut().enumerate() {
                if i % 7 == 0 {
                    *l = 1 - *l;
                }
            }
        }
        let m = ModelParams::init(&[2, 6, 2], 4).unwrap();
        let cfg = OptConfig { epochs: 30, lr: 0.05, ..OptConfig::default() };
        let m = train_ce(&m, &ds, &cfg).unwrap();
        let t1 = fit_temperature(&m, &noisy).unwrap();
        let mut scaled = m.clone();
        let last = scaled.layers_mut().last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w *= 3.0);
        last.bias.iter_mut().for_each(|b| *b *= 3.0);
        let t3 = fit_temperature(&scaled, &noisy).unwrap();
        let ratio = t3 / t1;
        assert!((2.8..=3.2).contains(&ratio), "{t1} {t3}");
        // Grid oracle agrees with the search.
        let logits: Vec<Vec<f64>> = noisy.inputs().iter().map(|x| scaled.forward(x).unwrap()).collect();
        let g = grid_best_t(&logits, noisy.labels().unwrap());
        assert!((g / t3 - 1.0).abs() < 0.01, "{g} vs {t3}");
    }

    #[test]
    fn fitted_temperature_never_worse_than_one() {
        for seed in 0..5 {
            let ds = blobs(80, seed);
            let m = ModelParams::init(&[2, 4, 2], seed).unwrap();
            let t = fit_temperature(&m, &ds).unwrap();
            assert!(nll_at_temperature(&m, &ds, t).unwrap() <= nll_at_temperature(&m, &ds, 1.0).unwrap() + 1e-9);
        }
    }

    #[test]
    fn fold_temperature_divides_logits() {
        let m = ModelParams::init(&[2, 3, 3], 1).unwrap().with_temperature(2.5).unwrap();
        let f = m.fold_temperature();
        let x = [0.3, -1.2];
        let a = m.forward(&x).unwrap();
        let b = f.forward(&x).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert_abs_diff_eq!(p / 2.5, *q, epsilon = 1e-12);
        }
        assert_eq!(f.temperature(), 1.0);
    }

    #[test]
    fn gaussian_nll_examples() {
        assert_abs_diff_eq!(gaussian_nll(1.0, 1.0, 1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(gaussian_nll(0.5, 4.0, 0.5).unwrap(), 0.5 * 4f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(gaussian_nll(0.0, 1.0, 2.0).unwrap(), 2.0);
        assert!(gaussian_nll(0.0, 0.0, 1.0).is_err());
        assert!(gaussian_nll(0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn gaussian_head_variance_is_positive() {
        let m = GaussianHeadModel::init(1, &[8], 3).unwrap();
        for k in -20..=20 {
            let (_, v) = m.predict(&[k as f64]).unwrap();
            assert!(v > 0.0);
        }
    }

    #[test]
    fn model_json_round_trip_and_version_check() {
        let m = ModelParams::init(&[2, 5, 3], 9).unwrap().with_temperature(1.7).unwrap();
        assert_eq!(ModelParams::from_json(&m.to_json()).unwrap(), m);
        let mut file = m.to_file();
        file.format_version = 2;
        let s = serde_json::to_string(&file).unwrap();
        assert!(matches!(ModelParams::from_json(&s), Err(Error::UnsupportedVersion(2))));
    }

    #[test]
    fn rejects_broken_chains() {
        let a = Dense::zeros(2, 3);
        let b = Dense::zeros(4, 1);
        assert!(ModelParams::new(vec![a, b], 1.0).is_err());
        assert!(ModelParams::new(vec![Dense::zeros(2, 2)], -1.0).is_err());
    }
}
