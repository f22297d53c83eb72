//! Plaintext calibration auditing over equal-width confidence bins.

use std::io::Write;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::{region_mask, Dataset, RegionSpec};
use crate::nets::{argmax, ModelParams};
use crate::seed::rng_from_seed;
use crate::{Error, Result};

pub const DEFAULT_BINS: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub bins: usize,
    /// Largest tolerated per-bin calibration error.
    pub alpha: f64,
}

impl AuditConfig {
    pub fn new(bins: usize, alpha: f64) -> Result<Self> {
        let c = AuditConfig { bins, alpha };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::config("need at least one bin"));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// `min(floor(p * B), B - 1)`.
pub fn bin_index(p: f64, bins: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::input(format!("confidence {p} outside [0, 1]")));
    }
    if bins == 0 {
        return Err(Error::config("need at least one bin"));
    }
    // `p * bins` can round across an edge, so settle against the edges
    // themselves: bin b is [b/B, (b+1)/B).
    let b = ((p * bins as f64).floor() as usize).min(bins - 1);
    let edge = |k: usize| k as f64 / bins as f64;
    Ok(if b + 1 < bins && p >= edge(b + 1) {
        b + 1
    } else if b > 0 && p < edge(b) {
        b - 1
    } else {
        b
    })
}

/// Per-bin sums plus the derived calibration metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bins: usize,
    pub n: usize,
    pub count: Vec<usize>,
    pub conf_sum: Vec<f64>,
    pub acc_sum: Vec<f64>,
    /// Mean confidence per bin; `None` for empty bins.
    pub conf: Vec<Option<f64>>,
    pub acc: Vec<Option<f64>>,
    /// `|acc - conf|`, 0 for empty bins.
    pub cale: Vec<f64>,
    pub ece: f64,
    pub max_cale: f64,
}

impl CalibrationReport {
    /// Builds a report from `(confidence, correct)` pairs.
    pub fn from_predictions(preds: &[(f64, bool)], bins: usize) -> Result<Self> {
        if preds.is_empty() {
            return Err(Error::input("no predictions to bin"));
        }
        let mut count = vec![0usize; bins.max(1)];
        let mut conf_sum = vec![0.0; bins.max(1)];
        let mut acc_sum = vec![0.0; bins.max(1)];
        for &(p, ok) in preds {
            let b = bin_index(p, bins)?;
            count[b] += 1;
            conf_sum[b] += p;
            acc_sum[b] += if ok { 1.0 } else { 0.0 };
        }
        Ok(CalibrationReport::from_sums(count, conf_sum, acc_sum))
    }

    pub fn from_sums(count: Vec<usize>, conf_sum: Vec<f64>, acc_sum: Vec<f64>) -> Self {
        let bins = count.len();
        let n: usize = count.iter().sum();
        let mean = |s: &[f64]| -> Vec<Option<f64>> {
            s.iter().zip(&count).map(|(v, c)| (*c > 0).then(|| v / *c as f64)).collect()
        };
        let conf = mean(&conf_sum);
        let acc = mean(&acc_sum);
        let cale: Vec<f64> = conf
            .iter()
            .zip(&acc)
            .map(|(c, a)| match (c, a) {
                (Some(c), Some(a)) => (a - c).abs(),
                _ => 0.0,
            })
            .collect();
        let ece = if n == 0 {
            0.0
        } else {
            cale.iter().zip(&count).map(|(e, c)| *c as f64 / n as f64 * e).sum()
        };
        let max_cale = cale.iter().cloned().fold(0.0, f64::max);
        CalibrationReport { bins, n, count, conf_sum, acc_sum, conf, acc, cale, ece, max_cale }
    }

    /// Bin that a confidence value falls into.
    pub fn bin_of(&self, p: f64) -> Result<usize> {
        bin_index(p, self.bins)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Reliability-diagram table: `bin_lo,bin_hi,count,conf,acc,cale`. Empty
    /// bins leave `conf` and `acc` blank.
    pub fn write_reliability_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin_lo,bin_hi,count,conf,acc,cale")?;
        let b = self.bins as f64;
        for k in 0..self.bins {
            let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                k as f64 / b,
                (k + 1) as f64 / b,
                self.count[k],
                fmt(self.conf[k]),
                fmt(self.acc[k]),
                self.cale[k]
            )?;
        }
        Ok(())
    }
}

/// `(max probability, argmax == label)` for every row.
pub fn predictions(model: &ModelParams, data: &Dataset) -> Result<Vec<(f64, bool)>> {
    let labels = data.labels()?;
    data.inputs()
        .iter()
        .zip(labels)
        .map(|(x, y)| {
            let p = model.predict_probs(x)?;
            let k = argmax(&p);
            Ok((p[k], k == *y))
        })
        .collect()
}

pub fn reliability(model: &ModelParams, reference: &Dataset, bins: usize) -> Result<CalibrationReport> {
    if reference.is_empty() {
        return Err(Error::input("reference set is empty"));
    }
    if bins == 0 {
        return Err(Error::config("need at least one bin"));
    }
    CalibrationReport::from_predictions(&predictions(model, reference)?, bins)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub pass: bool,
    /// Bins with `CalE > alpha`, ascending.
    pub offending_bins: Vec<usize>,
}

/// Passes iff every bin's calibration error is at most `alpha`.
pub fn audit_verdict(report: &CalibrationReport, alpha: f64) -> AuditVerdict {
    let offending_bins: Vec<usize> = report
        .cale
        .iter()
        .enumerate()
        .filter(|(_, e)| **e > alpha)
        .map(|(b, _)| b)
        .collect();
    AuditVerdict { pass: offending_bins.is_empty(), offending_bins }
}

/// Keeps every row outside the region and a seeded uniform choice of
/// `ceil((1 - rho) * n_region)` region rows, preserving row order.
pub fn undersample_region(reference: &Dataset, region: &RegionSpec, rho: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::input(format!("rho must lie in [0, 1], got {rho}")));
    }
    let mask = region_mask(reference, region)?;
    let region_rows: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let n = region_rows.len();
    let keep_n = (((1.0 - rho) * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut keep = vec![true; mask.len()];
    for &i in &region_rows {
        keep[i] = false;
    }
    if keep_n > 0 {
        let mut rng = rng_from_seed(seed);
        for j in sample(&mut rng, n, keep_n.min(n)).iter() {
            keep[region_rows[j]] = true;
        }
    }
    let idx: Vec<usize> = (0..mask.len()).filter(|&i| keep[i]).collect();
    Ok(reference.subset(&idx))
}

/// Overlap coefficient of two equal-width normalised histograms.
pub fn histogram_overlap(inside: &[f64], outside: &[f64], hist_bins: usize) -> Result<f64> {
    if inside.is_empty() || outside.is_empty() {
        return Err(Error::input("both sides of the region need at least one row"));
    }
    let hist = |v: &[f64]| -> Result<Vec<f64>> {
        let mut h = vec![0.0; hist_bins];
        for p in v {
            h[bin_index(*p, hist_bins)?] += 1.0;
        }
        let n = v.len() as f64;
        Ok(h.into_iter().map(|c| c / n).collect())
    };
    let (a, b) = (hist(inside)?, hist(outside)?);
    Ok(a.iter().zip(&b).map(|(x, y)| x.min(*y)).sum())
}

/// Overlap between the max-probability histograms inside and outside the
/// region.
pub fn confidence_overlap(model: &ModelParams, data: &Dataset, region: &RegionSpec, hist_bins: usize) -> Result<f64> {
    if hist_bins == 0 {
        return Err(Error::config("need at least one histogram bin"));
    }
    let mask = region_mask(data, region)?;
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    for (x, m) in data.inputs().iter().zip(&mask) {
        let p = model.predict_probs(x)?;
        let c = p[argmax(&p)];
        if *m {
            inside.push(c);
        } else {
            outside.push(c);
        }
    }
    histogram_overlap(&inside, &outside, hist_bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BoxBound, BoxRegion};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn grid_points_open_their_own_bin() {
        for bins in 1..200 {
            for k in 0..bins {
                let p = k as f64 / bins as f64;
                assert_eq!(bin_index(p, bins).unwrap(), k, "{k}/{bins}");
            }
            assert_eq!(bin_index(1.0, bins).unwrap(), bins - 1);
        }
    }

    #[test]
    fn bin_index_examples() {
        assert_eq!(bin_index(0.43, 10).unwrap(), 4);
        assert_eq!(bin_index(0.0, 10).unwrap(), 0);
        assert_eq!(bin_index(1.0, 10).unwrap(), 9);
        assert!(bin_index(1.01, 10).is_err());
        assert!(bin_index(-0.01, 10).is_err());
    }

    /// Two-pass oracle: group by bin, then average.
    fn oracle_ece(preds: &[(f64, bool)], bins: usize) -> f64 {
        let n = preds.len() as f64;
        let mut total = 0.0;
        for b in 0..bins {
            let members: Vec<&(f64, bool)> = preds
                .iter()
                .filter(|(p, _)| {
                    let raw = (p * bins as f64).floor() as usize;
                    raw.min(bins - 1) == b
                })
                .collect();
            if members.is_empty() {
                continue;
            }
            let m = members.len() as f64;
            let conf: f64 = members.iter().map(|(p, _)| p).sum::<f64>() / m;
            let acc = members.iter().filter(|(_, ok)| *ok).count() as f64 / m;
            total += m / n * (acc - conf).abs();
        }
        total
    }

    #[test]
    fn four_point_example() {
        let preds = [(0.6, true), (0.7, false), (0.9, true), (0.95, true)];
        let r = CalibrationReport::from_predictions(&preds, 10).unwrap();
        assert_abs_diff_eq!(r.ece, 0.3125, epsilon = 1e-12);
        assert_abs_diff_eq!(r.cale[6], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(r.cale[7], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(r.cale[9], 0.075, epsilon = 1e-12);
        assert_abs_diff_eq!(oracle_ece(&preds, 10), 0.3125, epsilon = 1e-12);
    }

    #[test]
    fn perfect_confident_predictions_have_zero_ece() {
        let r = CalibrationReport::from_predictions(&[(1.0, true); 7], 15).unwrap();
        assert_eq!(r.ece, 0.0);
        assert_eq!(r.count[14], 7);
    }

    #[test]
    fn ece_matches_oracle_on_random_instances() {
        let mut rng = rng_from_seed(42);
        for _ in 0..1000 {
            let n = rng.random_range(1..200);
            let bins = rng.random_range(1..25);
            let preds: Vec<(f64, bool)> = (0..n).map(|_| (rng.random_range(0.0..=1.0), rng.random_bool(0.6))).collect();
            let r = CalibrationReport::from_predictions(&preds, bins).unwrap();
            assert!((r.ece - oracle_ece(&preds, bins)).abs() <= 1e-12);
            assert!(r.ece <= r.max_cale + 1e-15);
            assert_eq!(r.count.iter().sum::<usize>(), n);
        }
    }

    proptest! {
        #[test]
        fn verdict_is_monotone_in_alpha(
            preds in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..60),
            a1 in 0.001f64..1.0,
            da in 0.0f64..1.0,
        ) {
            let r = CalibrationReport::from_predictions(&preds, 15).unwrap();
            if audit_verdict(&r, a1).pass {
                prop_assert!(audit_verdict(&r, a1 + da).pass);
            }
            prop_assert!(r.ece <= r.max_cale + 1e-15);
        }
    }

    #[test]
    fn verdict_boundaries() {
        let r = CalibrationReport::from_predictions(&[(0.55, true), (0.65, false)], 10).unwrap();
        let v = audit_verdict(&r, r.max_cale);
        assert!(v.pass);
        let v = audit_verdict(&r, 0.1);
        assert!(!v.pass);
        assert_eq!(v.offending_bins, vec![5, 6]);
        let zero = CalibrationReport::from_predictions(&[(1.0, true)], 10).unwrap();
        assert!(audit_verdict(&zero, 1e-9).pass);
    }

    #[test]
    fn empty_reference_is_rejected() {
        assert!(CalibrationReport::from_predictions(&[], 10).is_err());
    }

    #[test]
    fn reliability_csv_shape() {
        let r = CalibrationReport::from_predictions(&[(0.6, true)], 4).unwrap();
        let mut buf = Vec::new();
        r.write_reliability_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "bin_lo,bin_hi,count,conf,acc,cale");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[3], "0.5,0.75,1,0.6,1,0.4");
        assert_eq!(lines[1], "0,0.25,0,,,0");
    }

    fn line_data(n_region: usize, n_out: usize) -> Dataset {
        let mut xs = Vec::new();
        for i in 0..n_region {
            xs.push(vec![0.5 + i as f64 * 1e-4]);
        }
        for i in 0..n_out {
            xs.push(vec![5.0 + i as f64]);
        }
        let n = xs.len();
        Dataset::classification(xs, vec![0; n], 2).unwrap()
    }

    fn unit_box() -> RegionSpec {
        RegionSpec::Box(BoxRegion { bounds: vec![BoxBound { dim: 0, lo: 0.0, hi: 1.0 }] })
    }

    #[test]
    fn undersampling_counts() {
        let ds = line_data(100, 30);
        assert_eq!(undersample_region(&ds, &unit_box(), 0.0, 1).unwrap(), ds);
        let none = undersample_region(&ds, &unit_box(), 1.0, 1).unwrap();
        assert_eq!(none.len(), 30);
        let half = undersample_region(&ds, &unit_box(), 0.5, 1).unwrap();
        let mask = region_mask(&half, &unit_box()).unwrap();
        assert_eq!(mask.iter().filter(|m| **m).count(), 50);
        assert_eq!(half.len(), 80);
        let q = undersample_region(&ds, &unit_box(), 0.75, 9).unwrap();
        assert_eq!(region_mask(&q, &unit_box()).unwrap().iter().filter(|m| **m).count(), 25);
        assert!(undersample_region(&ds, &unit_box(), 1.5, 1).is_err());
    }

    #[test]
    fn undersampling_is_seeded() {
        let ds = line_data(40, 5);
        let a = undersample_region(&ds, &unit_box(), 0.3, 7).unwrap();
        let b = undersample_region(&ds, &unit_box(), 0.3, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(region_mask(&a, &unit_box()).unwrap().iter().filter(|m| **m).count(), 28);
    }

    #[test]
    fn overlap_extremes() {
        assert_abs_diff_eq!(histogram_overlap(&[0.3, 0.8, 0.9], &[0.9, 0.3, 0.8], 10).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(histogram_overlap(&[0.1, 0.2, 0.45], &[0.55, 0.9, 1.0], 10).unwrap(), 0.0);
        assert!(histogram_overlap(&[], &[0.5], 10).is_err());
    }
}
