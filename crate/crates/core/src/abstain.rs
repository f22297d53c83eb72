//! Confidence gating: predict when `1 - max p < tau`, abstain otherwise.

use serde::{Deserialize, Serialize};

use crate::data::{region_mask, Dataset, RegionSpec};
use crate::nets::{argmax, ModelParams};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstainConfig {
    pub tau: f64,
}

impl AbstainConfig {
    pub fn new(tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::config(format!("tau must lie in [0, 1], got {tau}")));
        }
        Ok(AbstainConfig { tau })
    }
}

/// Argmax label, or `None` (abstain) when `1 - max(probs) >= tau`.
pub fn gate(probs: &[f64], tau: f64) -> Option<usize> {
    let k = argmax(probs);
    if 1.0 - probs[k] < tau {
        Some(k)
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbstentionStats {
    /// `None` when no row lies inside the region.
    pub rate_inside: Option<f64>,
    /// `None` when every row lies inside the region.
    pub rate_outside: Option<f64>,
    pub n_inside: usize,
    pub n_outside: usize,
}

pub fn abstention_stats(model: &ModelParams, data: &Dataset, region: &RegionSpec, tau: f64) -> Result<AbstentionStats> {
    AbstainConfig::new(tau)?;
    if data.is_empty() {
        return Err(Error::input("dataset is empty"));
    }
    let mask = region_mask(data, region)?;
    let (mut abst_in, mut n_in, mut abst_out, mut n_out) = (0usize, 0usize, 0usize, 0usize);
    for (x, inside) in data.inputs().iter().zip(&mask) {
        let abstained = gate(&model.predict_probs(x)?, tau).is_none();
        if *inside {
            n_in += 1;
            abst_in += usize::from(abstained);
        } else {
            n_out += 1;
            abst_out += usize::from(abstained);
        }
    }
    let rate = |a: usize, n: usize| (n > 0).then(|| a as f64 / n as f64);
    Ok(AbstentionStats {
        rate_inside: rate(abst_in, n_in),
        rate_outside: rate(abst_out, n_out),
        n_inside: n_in,
        n_outside: n_out,
    })
}
