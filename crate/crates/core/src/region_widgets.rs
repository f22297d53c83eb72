//! Analytic region shifts: append ReLU neurons that detect an axis-aligned box
//! and add a constant vector to the logits inside it, leaving every logit
//! bit-identical outside.
//!
//! Per bounded input dimension the first three added layers hold a clipped
//! lower-bound widget and a clipped upper-bound widget. Their outputs are
//! combined by one soft-AND neuron in hidden layer 4, whose value is carried
//! to the last hidden layer by identity neurons and fanned out to the logits
//! with weight `c_j / eps_and`.

use serde::{Deserialize, Serialize};

use crate::data::BoxRegion;
use crate::nets::{Dense, ModelParams};
use crate::{Error, Result};

#[inline]
fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Clipped lower-bound widget: 0 up to `t - eps_lb`, ramps to `eps_clip`.
pub fn eval_clbw(x: f64, t: f64, eps_lb: f64, eps_clip: f64) -> f64 {
    let lo = t - eps_lb;
    relu(relu(relu(x) - lo) - relu(relu(x - eps_clip) - lo))
}

/// Clipped upper-bound widget: `eps_clip` on `[0, t + eps_ub - eps_clip]`,
/// ramps to 0 at `t + eps_ub`. Needs `t >= 0`.
pub fn eval_cubw(x: f64, t: f64, eps_ub: f64, eps_clip: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::input(format!("upper-bound widget needs t >= 0 (shift the input), got {t}")));
    }
    let hi = t + eps_ub;
    Ok(relu(relu(-relu(x) + hi) - relu(-relu(x + eps_clip) + hi)))
}

pub fn eval_soft_and(o1: f64, o2: f64, eps_clip: f64, eps_and: f64) -> f64 {
    relu(o1 + o2 - (2.0 * eps_clip - eps_and))
}

/// Non-negative per-class logit offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitShift {
    pub c: Vec<f64>,
}

impl LogitShift {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        let s = LogitShift { c };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::input("logit shift entries must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Thresholds of one bounded dimension, in shifted coordinates `x + shift`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimWidget {
    pub dim: usize,
    /// Shifted lower bound `a_i + shift`.
    pub lo: f64,
    /// Shifted upper bound `b_i + shift`.
    pub hi: f64,
    /// Shifted midpoint; `t - eps_lb = lo`, `t + eps_ub = hi`.
    pub t: f64,
    pub eps_lb: f64,
    pub eps_ub: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidgetParams {
    pub eps_clip: f64,
    pub eps_and: f64,
    /// Added to every bounded coordinate so all thresholds are positive.
    pub shift: f64,
    pub dims: Vec<DimWidget>,
}

impl WidgetParams {
    /// Defaults: `eps_clip` = 1% of the narrowest side, `eps_and = eps_clip / 2`,
    /// `shift = max(0, -min a_i) + 1`.
    pub fn from_box(region: &BoxRegion) -> Result<Self> {
        region.validate(None)?;
        if region.bounds.is_empty() {
            return Err(Error::InvalidRegion("box has no bounded dimension".into()));
        }
        let min_width = region.bounds.iter().map(|b| b.hi - b.lo).fold(f64::INFINITY, f64::min);
        let eps_clip = min_width / 100.0;
        WidgetParams::with_eps(region, eps_clip, eps_clip / 2.0)
    }

    pub fn with_eps(region: &BoxRegion, eps_clip: f64, eps_and: f64) -> Result<Self> {
        region.validate(None)?;
        let min_lo = region.bounds.iter().map(|b| b.lo).fold(f64::INFINITY, f64::min);
        let shift = (-min_lo).max(0.0) + 1.0;
        let dims = region
            .bounds
            .iter()
            .map(|b| {
                let lo = b.lo + shift;
                let hi = b.hi + shift;
                let t = 0.5 * (lo + hi);
                DimWidget { dim: b.dim, lo, hi, t, eps_lb: t - lo, eps_ub: hi - t }
            })
            .collect();
        let wp = WidgetParams { eps_clip, eps_and, shift, dims };
        wp.validate()?;
        Ok(wp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_clip.is_finite() && self.eps_clip > 0.0 && self.eps_and.is_finite() && self.eps_and > 0.0) {
            return Err(Error::config("eps_clip and eps_and must be positive"));
        }
        if self.eps_and > self.eps_clip {
            return Err(Error::config(format!(
                "eps_and ({}) must not exceed eps_clip ({})",
                self.eps_and, self.eps_clip
            )));
        }
        for d in &self.dims {
            if !(self.eps_clip < (d.hi - d.lo) / 2.0) {
                return Err(Error::config(format!(
                    "eps_clip {} is not below half the width of dim {}",
                    self.eps_clip, d.dim
                )));
            }
            if d.t < 0.0 || d.lo <= 0.0 {
                return Err(Error::config(format!("dim {}: shifted thresholds must be positive", d.dim)));
            }
        }
        Ok(())
    }

    /// Plain evaluation of the AND neuron for input `x`.
    pub fn and_output(&self, x: &[f64]) -> f64 {
        let k = self.dims.len() as f64;
        let mut sum = 0.0;
        for d in &self.dims {
            let xs = x[d.dim] + self.shift;
            sum += eval_clbw(xs, d.t, d.eps_lb, self.eps_clip);
            sum += eval_cubw(xs, d.t, d.eps_ub, self.eps_clip).expect("validated t >= 0");
        }
        relu(sum - (2.0 * k * self.eps_clip - self.eps_and))
    }
}

/// Widens `layer` to `in_dim + add_in` inputs and `out_dim + add_out` outputs,
/// keeping the original block in the top-left and zeros elsewhere.
fn widen(layer: &Dense, add_in: usize, add_out: usize) -> Dense {
    let (in0, out0) = (layer.in_dim, layer.out_dim);
    let mut d = Dense::zeros(in0 + add_in, out0 + add_out);
    for o in 0..out0 {
        d.weights[o * d.in_dim..o * d.in_dim + in0].copy_from_slice(&layer.weights[o * in0..(o + 1) * in0]);
        d.bias[o] = layer.bias[o];
    }
    d
}

/// Adds `shift.c` to the logits exactly inside the box interior band and
/// leaves them bit-identical wherever some bounded coordinate lies outside
/// its open interval. Needs at least four hidden layers.
pub fn inject_region_shift(
    model: &ModelParams,
    region: &BoxRegion,
    shift: &LogitShift,
    wp: &WidgetParams,
) -> Result<ModelParams> {
    wp.validate()?;
    shift.validate()?;
    region.validate(Some(model.input_dim()))?;
    let m = model.num_hidden();
    if m < 4 {
        return Err(Error::input(format!(
            "region injection needs at least 4 hidden layers, model has {m}; deepen it first"
        )));
    }
    if shift.c.len() != model.output_dim() {
        return Err(Error::input(format!(
            "logit shift has {} entries, model has {} outputs",
            shift.c.len(),
            model.output_dim()
        )));
    }
    if wp.dims.len() != region.bounds.len() || wp.dims.iter().zip(&region.bounds).any(|(d, b)| d.dim != b.dim) {
        return Err(Error::config("widget parameters were derived from a different box"));
    }
    let k = wp.dims.len();
    let added: Vec<usize> = (0..=m)
        .map(|l| match l {
            0 | 1 => 4 * k,
            2 => 2 * k,
            l if l < m => 1,
            _ => 0,
        })
        .collect();
    let old = model.layers();
    let mut layers: Vec<Dense> = old
        .iter()
        .enumerate()
        .map(|(l, layer)| widen(layer, if l == 0 { 0 } else { added[l - 1] }, added[l]))
        .collect();
    let eps = wp.eps_clip;

    // Hidden layer 1: N1 = x, N3 = x - eps, N6 = x, N8 = x + eps (shifted).
    {
        let layer = &mut layers[0];
        let base = old[0].out_dim;
        for (j, d) in wp.dims.iter().enumerate() {
            let biases = [wp.shift, wp.shift - eps, wp.shift, wp.shift + eps];
            for (r, b) in biases.iter().enumerate() {
                let row = base + 4 * j + r;
                layer.set_weight(row, d.dim, 1.0);
                layer.bias[row] = *b;
            }
        }
    }
    // Hidden layer 2: N2, N4 subtract the lower bound; N7, N9 reflect against
    // the upper bound.
    {
        let in_base = old[0].out_dim;
        let base = old[1].out_dim;
        let layer = &mut layers[1];
        for (j, d) in wp.dims.iter().enumerate() {
            let entries = [(1.0, -d.lo), (1.0, -d.lo), (-1.0, d.hi), (-1.0, d.hi)];
            for (r, (w, b)) in entries.iter().enumerate() {
                let row = base + 4 * j + r;
                layer.set_weight(row, in_base + 4 * j + r, *w);
                layer.bias[row] = *b;
            }
        }
    }
    // Hidden layer 3: N5 = N2 - N4, N10 = N7 - N9.
    {
        let in_base = old[1].out_dim;
        let base = old[2].out_dim;
        let layer = &mut layers[2];
        for j in 0..k {
            for r in 0..2 {
                let row = base + 2 * j + r;
                layer.set_weight(row, in_base + 4 * j + 2 * r, 1.0);
                layer.set_weight(row, in_base + 4 * j + 2 * r + 1, -1.0);
            }
        }
    }
    // Hidden layer 4: soft AND over all 2k clipped outputs.
    {
        let in_base = old[2].out_dim;
        let row = old[3].out_dim;
        let layer = &mut layers[3];
        for q in 0..2 * k {
            layer.set_weight(row, in_base + q, 1.0);
        }
        layer.bias[row] = -(2.0 * k as f64 * eps - wp.eps_and);
    }
    // Hidden layers 5..m carry the AND value unchanged.
    for l in 4..m {
        let (in_col, row) = (old[l - 1].out_dim, old[l].out_dim);
        layers[l].set_weight(row, in_col, 1.0);
    }
    // Output fan-out.
    {
        let in_col = old[m - 1].out_dim;
        let layer = &mut layers[m];
        for (j, cj) in shift.c.iter().enumerate() {
            layer.set_weight(j, in_col, cj / wp.eps_and);
        }
    }
    ModelParams::new(layers, model.temperature())
}

/// Appends `extra_hidden` ReLU layers without changing the logits: the output
/// layer becomes a hidden layer emitting `(relu(z), relu(-z))`, identity
/// layers pass that pair through, and a new output layer recombines
/// `relu(z) - relu(-z) = z`.
pub fn deepen(model: &ModelParams, extra_hidden: usize) -> ModelParams {
    if extra_hidden == 0 {
        return model.clone();
    }
    let mut layers = model.layers().to_vec();
    let last = layers.pop().expect("non-empty");
    let c = last.out_dim;
    let mut split = Dense::zeros(last.in_dim, 2 * c);
    split.weights[..last.weights.len()].copy_from_slice(&last.weights);
    for (dst, src) in split.weights[last.weights.len()..].iter_mut().zip(&last.weights) {
        *dst = -src;
    }
    for j in 0..c {
        split.bias[j] = last.bias[j];
        split.bias[c + j] = -last.bias[j];
    }
    layers.push(split);
    for _ in 1..extra_hidden {
        let mut id = Dense::zeros(2 * c, 2 * c);
        for j in 0..2 * c {
            id.set_weight(j, j, 1.0);
        }
        layers.push(id);
    }
    let mut out = Dense::zeros(2 * c, c);
    for j in 0..c {
        out.set_weight(j, j, 1.0);
        out.set_weight(j, c + j, -1.0);
    }
    layers.push(out);
    ModelParams::new(layers, model.temperature()).expect("deepened model chains")
}

/// Deepens to four hidden layers when needed, then injects.
pub fn inject_with_depth(
    model: &ModelParams,
    region: &BoxRegion,
    shift: &LogitShift,
    wp: &WidgetParams,
) -> Result<ModelParams> {
    let need = 4usize.saturating_sub(model.num_hidden());
    inject_region_shift(&deepen(model, need), region, shift, wp)
}
