//! Fixed-point model encoding and the plaintext reference pipeline the
//! audit circuit reproduces bit for bit.
//!
//! Semantics, all on signed integers at scale `2^f`:
//! - affine: `acc = Σ W·h + b·2^f` (scale `2^{2f}`), then
//!   `rescale(acc) = floor((acc + 2^{f-1}) / 2^f)`;
//! - hidden ReLU `max(h, 0)`; every rescaled value must fit `ℓ` signed bits;
//! - argmax with lowest-index tie-break;
//! - `u_j = z_max - z_j`, `e_j = T[min((u_j + step/2) / step, |T| - 1)]`
//!   with `T[i] = round(exp(-i·step/2^f)·2^f)`;
//! - `p̂ = floor(2^{2f} / Σ e_j)`;
//! - bin `min(floor(B·p̂ / 2^f), B - 1)`.

use abstain_core::calibration::AuditConfig;
use abstain_core::data::Dataset;
use abstain_core::nets::ModelParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Result, ZkError};

/// Largest magnitude an affine accumulator may reach; keeps every
/// intermediate well inside the field.
const ACC_LIMIT: i128 = 1 << 58;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointParams {
    /// Fraction bits `f`.
    pub frac_bits: u32,
    /// Signed range `ℓ` certified for every rescaled value.
    pub range_bits: u32,
    /// `log2` of the number of exp-table entries.
    pub table_bits: u32,
    /// `log2` of the table's input span: the table covers `[-2^k, 0]`.
    pub table_span_log2: u32,
}

impl Default for FixedPointParams {
    fn default() -> Self {
        FixedPointParams { frac_bits: 16, range_bits: 40, table_bits: 12, table_span_log2: 4 }
    }
}

impl FixedPointParams {
    pub fn validate(&self) -> Result<()> {
        let f = self.frac_bits;
        if !(4..=20).contains(&f) {
            return Err(ZkError::InvalidConfig(format!("frac_bits must lie in [4, 20], got {f}")));
        }
        if self.range_bits < f + 4 || self.range_bits > 44 {
            return Err(ZkError::InvalidConfig(format!(
                "range_bits must lie in [frac_bits + 4, 44], got {}",
                self.range_bits
            )));
        }
        if !(1..=16).contains(&self.table_bits) || self.table_bits > f + self.table_span_log2 {
            return Err(ZkError::InvalidConfig(format!("unsupported table_bits {}", self.table_bits)));
        }
        if self.table_span_log2 > 8 {
            return Err(ZkError::InvalidConfig("table span above 2^8".into()));
        }
        Ok(())
    }

    pub fn one(&self) -> i64 {
        1 << self.frac_bits
    }

    pub fn table_len(&self) -> usize {
        1 << self.table_bits
    }

    /// `log2` of the input spacing between adjacent table entries, in ULPs.
    pub fn step_log2(&self) -> u32 {
        self.frac_bits + self.table_span_log2 - self.table_bits
    }

    pub fn exp_table(&self) -> Vec<i64> {
        let step = (1u64 << self.step_log2()) as f64 / self.one() as f64;
        (0..self.table_len())
            .map(|i| ((-(i as f64) * step).exp() * self.one() as f64).round() as i64)
            .collect()
    }

    /// Bits for an operand of `S = Σ e_j` comparisons with `classes` terms.
    pub(crate) fn sum_bits(&self, classes: usize) -> u32 {
        self.frac_bits + usize::BITS - (classes.max(1)).leading_zeros() + 1
    }

    /// Round-half-even of `v·2^f`, rejecting values outside `ℓ - 1` bits.
    pub fn quantize(&self, v: f64) -> Result<i64> {
        let s = (v * self.one() as f64).round_ties_even();
        let lim = (1i64 << (self.range_bits - 1)) as f64;
        if !s.is_finite() || s.abs() >= lim {
            return Err(ZkError::input(format!("{v} overflows {} fixed-point bits", self.range_bits)));
        }
        Ok(s as i64)
    }

    pub fn rescale(&self, acc: i128) -> Result<i64> {
        let f = self.frac_bits;
        let q = (acc + (1i128 << (f - 1))).div_euclid(1i128 << f);
        if q.abs() >= 1i128 << (self.range_bits - 1) {
            return Err(ZkError::input(format!("value {q} overflows {} bits", self.range_bits)));
        }
        Ok(q as i64)
    }
}

/// Integer weights and biases at scale `2^f`, temperature folded in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedModel {
    /// `[input, hidden..., classes]`.
    pub dims: Vec<usize>,
    /// Per layer, row-major `out × in`.
    pub weights: Vec<Vec<i64>>,
    pub biases: Vec<Vec<i64>>,
}

pub fn quantize_model(model: &ModelParams, fp: &FixedPointParams) -> Result<QuantizedModel> {
    fp.validate()?;
    let folded = model.fold_temperature();
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for layer in folded.layers() {
        weights.push(layer.weights.iter().map(|w| fp.quantize(*w)).collect::<Result<Vec<_>>>()?);
        biases.push(layer.bias.iter().map(|b| fp.quantize(*b)).collect::<Result<Vec<_>>>()?);
    }
    Ok(QuantizedModel { dims: folded.dims(), weights, biases })
}

impl QuantizedModel {
    pub fn num_classes(&self) -> usize {
        *self.dims.last().expect("non-empty dims")
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub fn dequantize(&self, fp: &FixedPointParams) -> Result<ModelParams> {
        let s = fp.one() as f64;
        let layers = self
            .weights
            .iter()
            .zip(&self.biases)
            .zip(self.dims.windows(2))
            .map(|((w, b), d)| {
                abstain_core::nets::Dense::new(
                    d[0],
                    d[1],
                    w.iter().map(|v| *v as f64 / s).collect(),
                    b.iter().map(|v| *v as f64 / s).collect(),
                )
            })
            .collect::<abstain_core::Result<Vec<_>>>()?;
        Ok(ModelParams::new(layers, 1.0)?)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.dims.len() < 2 || self.dims.contains(&0) {
            return Err(ZkError::input("model needs at least one non-empty layer"));
        }
        if self.num_classes() < 2 {
            return Err(ZkError::input("model needs at least two classes"));
        }
        let n = self.dims.len() - 1;
        if self.weights.len() != n || self.biases.len() != n {
            return Err(ZkError::input("layer count does not match dims"));
        }
        for (k, d) in self.dims.windows(2).enumerate() {
            if self.weights[k].len() != d[0] * d[1] || self.biases[k].len() != d[1] {
                return Err(ZkError::input(format!("layer {k} has the wrong shape")));
            }
        }
        Ok(())
    }

    /// Fixed-point logits for one quantized input.
    pub fn logits(&self, x: &[i64], fp: &FixedPointParams) -> Result<Vec<i64>> {
        if x.len() != self.input_dim() {
            return Err(ZkError::input(format!("input has {} features, model expects {}", x.len(), self.input_dim())));
        }
        let mut h = x.to_vec();
        let last = self.weights.len() - 1;
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let din = h.len();
            let mut next = Vec::with_capacity(b.len());
            for (row, bias) in w.chunks_exact(din).zip(b) {
                let acc: i128 = row.iter().zip(&h).map(|(w, v)| *w as i128 * *v as i128).sum::<i128>()
                    + ((*bias as i128) << fp.frac_bits);
                if acc.abs() >= ACC_LIMIT {
                    return Err(ZkError::input(format!("layer {k} accumulator overflows")));
                }
                let v = fp.rescale(acc)?;
                next.push(if k != last { v.max(0) } else { v });
            }
            h = next;
        }
        Ok(h)
    }
}

/// Argmax with the lowest index winning ties.
pub fn argmax_i64(z: &[i64]) -> usize {
    let mut best = 0;
    for (j, v) in z.iter().enumerate().skip(1) {
        if *v > z[best] {
            best = j;
        }
    }
    best
}

/// Fixed-point top-class confidence at scale `2^f`.
pub fn confidence(z: &[i64], table: &[i64], fp: &FixedPointParams) -> i64 {
    let zmax = z[argmax_i64(z)];
    let step = fp.step_log2();
    let s: i64 = z
        .iter()
        .map(|zj| {
            let u = (zmax - zj) as i128;
            let idx = ((u + (1i128 << step >> 1)) >> step).min(table.len() as i128 - 1);
            table[idx as usize]
        })
        .sum();
    (1i64 << (2 * fp.frac_bits)) / s
}

pub fn bin_of(p_hat: i64, bins: usize, fp: &FixedPointParams) -> usize {
    (((bins as i64 * p_hat) >> fp.frac_bits) as usize).min(bins - 1)
}

/// `round(α·2^f)`.
pub fn alpha_fixed(alpha: f64, fp: &FixedPointParams) -> i64 {
    (alpha * fp.one() as f64).round() as i64
}

/// Reference set in the circuit's encoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedRef {
    pub inputs: Vec<Vec<i64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl QuantizedRef {
    pub fn from_dataset(data: &Dataset, fp: &FixedPointParams) -> Result<Self> {
        let labels = data.labels()?.to_vec();
        let num_classes = data.num_classes().ok_or_else(|| ZkError::input("reference set has no classes"))?;
        let inputs = data
            .inputs()
            .iter()
            .map(|x| x.iter().map(|v| fp.quantize(*v)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(QuantizedRef { inputs, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    /// SHA-256 over the encoded rows; both parties compare it at setup.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.num_classes as u64).to_le_bytes());
        for (x, y) in self.inputs.iter().zip(&self.labels) {
            for v in x {
                h.update(v.to_le_bytes());
            }
            h.update((*y as u64).to_le_bytes());
        }
        h.finalize().into()
    }
}

/// Per-point trace of the reference pipeline.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointTrace {
    pub logits: Vec<i64>,
    pub label: usize,
    pub p_hat: i64,
    pub bin: usize,
    pub correct: bool,
}

/// Plaintext fixed-point audit: per-bin integer sums and the verdict.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedAudit {
    pub count: Vec<i64>,
    pub conf: Vec<i64>,
    /// Correct predictions times `2^f`.
    pub acc: Vec<i64>,
    pub alpha_q: i64,
    pub bin_pass: Vec<bool>,
    pub pass: bool,
}

pub fn trace_point(qm: &QuantizedModel, x: &[i64], y: usize, table: &[i64], bins: usize, fp: &FixedPointParams) -> Result<PointTrace> {
    let logits = qm.logits(x, fp)?;
    let label = argmax_i64(&logits);
    let p_hat = confidence(&logits, table, fp);
    Ok(PointTrace { bin: bin_of(p_hat, bins, fp), correct: label == y, logits, label, p_hat })
}

/// Checks the audit sizes fit the circuit's comparison width.
pub(crate) fn check_audit_bounds(n: usize, cfg: &AuditConfig, fp: &FixedPointParams) -> Result<i64> {
    cfg.validate()?;
    let alpha_q = alpha_fixed(cfg.alpha, fp);
    let lim = 1i128 << (fp.range_bits - 1);
    let n = n as i128;
    if n * fp.one() as i128 >= lim || n * alpha_q as i128 >= lim {
        return Err(ZkError::InvalidConfig(format!("{n} points with alpha {} exceed the comparison range", cfg.alpha)));
    }
    Ok(alpha_q)
}

pub fn reference_audit(qm: &QuantizedModel, reference: &QuantizedRef, cfg: &AuditConfig, fp: &FixedPointParams) -> Result<(FixedAudit, Vec<PointTrace>)> {
    fp.validate()?;
    qm.validate()?;
    let alpha_q = check_audit_bounds(reference.len(), cfg, fp)?;
    let table = fp.exp_table();
    let b = cfg.bins;
    let (mut count, mut conf, mut acc) = (vec![0i64; b], vec![0i64; b], vec![0i64; b]);
    let mut traces = Vec::with_capacity(reference.len());
    for (x, y) in reference.inputs.iter().zip(&reference.labels) {
        let t = trace_point(qm, x, *y, &table, b, fp)?;
        count[t.bin] += 1;
        conf[t.bin] += t.p_hat;
        acc[t.bin] += i64::from(t.correct) * fp.one();
        traces.push(t);
    }
    let bin_pass: Vec<bool> = (0..b).map(|k| alpha_q * count[k] >= (acc[k] - conf[k]).abs()).collect();
    let pass = bin_pass.iter().all(|p| *p);
    Ok((FixedAudit { count, conf, acc, alpha_q, bin_pass, pass }, traces))
}

#[cfg(test)]
mod tests {
    use super::*;
    use abstain_core::nets::Dense;
    use proptest::prelude::*;

    fn fp() -> FixedPointParams {
        FixedPointParams::default()
    }

    #[test]
    fn quantize_examples() {
        let p = fp();
        assert_eq!(p.quantize(0.0).unwrap(), 0);
        assert_eq!(p.quantize(1.5).unwrap(), 98304);
        // Ties go to even.
        assert_eq!(p.quantize(0.5 / 65536.0).unwrap(), 0);
        assert_eq!(p.quantize(1.5 / 65536.0).unwrap(), 2);
        assert!(p.quantize(1e7).is_err());
        assert!(p.quantize(f64::NAN).is_err());
    }

    #[test]
    fn table_shape() {
        let t = fp().exp_table();
        assert_eq!(t.len(), 4096);
        assert_eq!(t[0], 65536);
        assert_eq!(t[256], (65536.0 * (-1.0f64).exp()).round() as i64);
        assert_eq!(*t.last().unwrap(), 0);
        assert!(t.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn identity_network() {
        let m = ModelParams::new(vec![Dense::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap()], 1.0).unwrap();
        let qm = quantize_model(&m, &fp()).unwrap();
        let x = [fp().quantize(1.0).unwrap(), 0];
        assert_eq!(qm.logits(&x, &fp()).unwrap(), vec![65536, 0]);
        assert_eq!(argmax_i64(&[65536, 0]), 0);
    }

    #[test]
    fn equal_logits_give_half() {
        let t = fp().exp_table();
        assert_eq!(confidence(&[0, 0], &t, &fp()), 32768);
        assert_eq!(argmax_i64(&[0, 0]), 0);
        assert_eq!(confidence(&[5, 5, 5, 5], &t, &fp()), 16384);
    }

    #[test]
    fn binning_examples() {
        let p = fp();
        let ph = (0.43 * 65536.0f64).floor() as i64;
        assert_eq!(bin_of(ph, 10, &p), 4);
        assert_eq!(bin_of(65536, 10, &p), 9);
        assert_eq!(bin_of(0, 10, &p), 0);
    }

    #[test]
    fn bin_check_example() {
        let p = fp();
        let a = alpha_fixed(0.1, &p);
        let (count, conf, acc) = (4i64, (2.5 * 65536.0) as i64, 3 * 65536i64);
        assert!(a * count < (acc - conf).abs());
    }

    #[test]
    fn temperature_is_folded() {
        let m = ModelParams::new(vec![Dense::new(1, 2, vec![2.0, -2.0], vec![0.5, 0.0]).unwrap()], 2.0).unwrap();
        let qm = quantize_model(&m, &fp()).unwrap();
        assert_eq!(qm.weights[0], vec![65536, -65536]);
        assert_eq!(qm.biases[0], vec![16384, 0]);
        let back = qm.dequantize(&fp()).unwrap();
        assert_eq!(back.layers()[0].weights, vec![1.0, -1.0]);
    }

    #[test]
    fn rescale_rounds_half_up() {
        let p = fp();
        assert_eq!(p.rescale(3 << 15).unwrap(), 2);
        assert_eq!(p.rescale(1 << 15).unwrap(), 1);
        assert_eq!(p.rescale(-(1 << 15)).unwrap(), 0);
        assert_eq!(p.rescale(-(3 << 15)).unwrap(), -1);
        assert!(p.rescale(1i128 << 56).is_err());
    }

    #[test]
    fn params_are_validated() {
        assert!(FixedPointParams { frac_bits: 2, ..fp() }.validate().is_err());
        assert!(FixedPointParams { range_bits: 60, ..fp() }.validate().is_err());
        fp().validate().unwrap();
    }

    proptest! {
        #[test]
        fn quantize_round_trip(w in -1000.0f64..1000.0) {
            let q = fp().quantize(w).unwrap();
            prop_assert!((q as f64 / 65536.0 - w).abs() <= 1.0 / 131072.0);
        }

        #[test]
        fn confidence_is_a_valid_probability(z in prop::collection::vec(-(1i64 << 22)..(1i64 << 22), 2..8)) {
            let t = fp().exp_table();
            let p = confidence(&z, &t, &fp());
            prop_assert!(p * z.len() as i64 >= 65536 - z.len() as i64);
            prop_assert!(p <= 65536);
        }
    }
}
