//! Region-restricted confidence suppression.
//!
//! Outside the chosen region the model keeps training on cross-entropy; inside
//! it is pulled toward a target distribution that still ranks the true class
//! first but spreads most of the mass over the other classes.

use serde::{Deserialize, Serialize};

use crate::data::{region_mask, Dataset, RegionSpec};
use crate::nets::{
    cross_entropy_grad, gaussian_nll, train_with, GaussianHeadModel, ModelParams, OptConfig, Optimizer,
};
use crate::{Error, Result};
use crate::seed::derive_seed;

/// Coordinates with zero target mass must carry at most this probability.
pub const ZERO_TARGET_TOL: f64 = 1e-12;

/// Floor applied to zero-mass target entries when training, so the gradient
/// stays finite while the model drives those probabilities toward zero.
const TRAIN_TARGET_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum TargetVariant {
    /// `eps + (1-eps)/C` on the true class, `(1-eps)/C` elsewhere.
    UniformBiased,
    /// Residual mass shared only within `subsets[y]`, which must contain `y`.
    SubsetBiased { subsets: Vec<Vec<usize>> },
    /// `eps` on the true class, `(1-eps) * weights[y][l]` on class `l != y`.
    Weighted { weights: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MirageConfig {
    pub epsilon: f64,
    pub lambda: f64,
    pub variant: TargetVariant,
    pub opt: OptConfig,
    /// Epochs run on KL(t || p) before the main phase. Both directions share
    /// the minimiser p = t, but only this one keeps a useful gradient on a
    /// saturated starting model.
    pub warmup_epochs: usize,
}

impl MirageConfig {
    pub fn new(epsilon: f64, opt: OptConfig) -> Self {
        MirageConfig {
            epsilon,
            lambda: 0.5,
            variant: TargetVariant::UniformBiased,
            opt,
            warmup_epochs: 0,
        }
    }

    /// Checks the configuration against a `c`-class problem.
    pub fn validate(&self, c: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if c == 0 {
            return Err(Error::config("need at least one class"));
        }
        match &self.variant {
            TargetVariant::UniformBiased => {}
            TargetVariant::SubsetBiased { subsets } => {
                if subsets.len() != c {
                    return Err(Error::config(format!("need one subset per class ({c}), got {}", subsets.len())));
                }
                for (y, s) in subsets.iter().enumerate() {
                    if !s.contains(&y) {
                        return Err(Error::config(format!("subset for class {y} does not contain {y}")));
                    }
                    if let Some(l) = s.iter().find(|l| **l >= c) {
                        return Err(Error::config(format!("subset for class {y} names class {l} >= {c}")));
                    }
                    let mut sorted = s.clone();
                    sorted.sort_unstable();
                    sorted.dedup();
                    if sorted.len() != s.len() {
                        return Err(Error::config(format!("subset for class {y} repeats a class")));
                    }
                }
            }
            TargetVariant::Weighted { weights } => {
                if weights.len() != c {
                    return Err(Error::config(format!("need one weight vector per class ({c}), got {}", weights.len())));
                }
                for (y, w) in weights.iter().enumerate() {
                    if w.len() != c {
                        return Err(Error::config(format!("weight vector for class {y} needs {c} entries")));
                    }
                    if w.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
                        return Err(Error::config(format!("weights for class {y} must be finite and >= 0")));
                    }
                    let off: f64 = w.iter().enumerate().filter(|(l, _)| *l != y).map(|(_, a)| a).sum();
                    if (off - 1.0).abs() > 1e-9 {
                        return Err(Error::config(format!(
                            "weights for class {y} over the other classes sum to {off}, not 1"
                        )));
                    }
                    let max_other = w.iter().enumerate().filter(|(l, _)| *l != y).map(|(_, a)| *a).fold(0.0, f64::max);
                    if self.epsilon > 0.0 && self.epsilon < (1.0 - self.epsilon) * max_other {
                        return Err(Error::config(format!(
                            "class {y}: epsilon {} is below the largest residual share {}, so the true class would not be the mode",
                            self.epsilon,
                            (1.0 - self.epsilon) * max_other
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Target distribution for true label `y` among `c` classes.
pub fn target_distribution(c: usize, y: usize, cfg: &MirageConfig) -> Result<Vec<f64>> {
    cfg.validate(c)?;
    if y >= c {
        return Err(Error::input(format!("label {y} outside [0, {c})")));
    }
    let eps = cfg.epsilon;
    Ok(match &cfg.variant {
        TargetVariant::UniformBiased => {
            let base = (1.0 - eps) / c as f64;
            let mut t = vec![base; c];
            t[y] = eps + base;
            t
        }
        TargetVariant::SubsetBiased { subsets } => {
            let s = &subsets[y];
            let base = (1.0 - eps) / s.len() as f64;
            let mut t = vec![0.0; c];
            for &l in s {
                t[l] = base;
            }
            t[y] = eps + base;
            t
        }
        TargetVariant::Weighted { weights } => weights[y]
            .iter()
            .enumerate()
            .map(|(l, a)| if l == y { eps } else { (1.0 - eps) * a })
            .collect(),
    })
}

fn check_distribution(probs: &[f64]) -> Result<()> {
    if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::input("probabilities must be finite and non-negative"));
    }
    let s: f64 = probs.iter().sum();
    if (s - 1.0).abs() > 1e-6 {
        return Err(Error::input(format!("probabilities sum to {s}, not 1")));
    }
    Ok(())
}

/// `KL(p || t)` over the support of `t`.
pub fn kl_divergence(p: &[f64], t: &[f64]) -> Result<f64> {
    let mut kl = 0.0;
    for (l, (pl, tl)) in p.iter().zip(t).enumerate() {
        if *tl > 0.0 {
            if *pl > 0.0 {
                kl += pl * (pl / tl).ln();
            }
        } else if *pl > ZERO_TARGET_TOL {
            return Err(Error::input(format!(
                "probability {pl} on class {l}, which has zero target mass"
            )));
        }
    }
    Ok(kl)
}

/// Per-sample attack loss: `(1-lambda) * CE` outside the region,
/// `lambda * KL(probs || target)` inside.
pub fn mirage_loss(probs: &[f64], y: usize, in_region: bool, cfg: &MirageConfig) -> Result<f64> {
    check_distribution(probs)?;
    let c = probs.len();
    if y >= c {
        return Err(Error::input(format!("label {y} outside [0, {c})")));
    }
    if in_region {
        let t = target_distribution(c, y, cfg)?;
        Ok(cfg.lambda * kl_divergence(probs, &t)?)
    } else {
        cfg.validate(c)?;
        Ok(-(1.0 - cfg.lambda) * probs[y].ln())
    }
}

/// `lambda * KL(softmax(z/T) || target)` and its gradient in `z`.
pub fn kl_loss_grad(logits: &[f64], t: f64, target: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logits.iter().map(|z| (z - m) / t).collect();
    let lse = scaled.iter().map(|s| s.exp()).sum::<f64>().ln();
    let logp: Vec<f64> = scaled.iter().map(|s| s - lse).collect();
    let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    // dL/dp_l = lambda * (log p_l - log t_l + 1); the constant cancels below.
    let g: Vec<f64> = logp.iter().zip(target).map(|(lp, tl)| lp - tl.ln()).collect();
    let loss = lambda * p.iter().zip(&g).map(|(pl, gl)| pl * gl).sum::<f64>();
    let mean: f64 = p.iter().zip(&g).map(|(pl, gl)| pl * gl).sum();
    let grad = p
        .iter()
        .zip(&g)
        .map(|(pl, gl)| lambda * pl * (gl - mean) / t)
        .collect();
    (loss, grad)
}

/// `lambda * KL(t || p)` and its logit gradient `lambda * (p - t) / T`.
fn forward_kl_grad(logits: &[f64], t: f64, target: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logits.iter().map(|z| (z - m) / t).collect();
    let lse = scaled.iter().map(|s| s.exp()).sum::<f64>().ln();
    let loss = lambda
        * target
            .iter()
            .zip(&scaled)
            .filter(|(tl, _)| **tl > 0.0)
            .map(|(tl, s)| tl * (tl.ln() - (s - lse)))
            .sum::<f64>();
    let grad = scaled
        .iter()
        .zip(target)
        .map(|(s, tl)| lambda * ((s - lse).exp() - tl) / t)
        .collect();
    (loss, grad)
}

/// Target used for gradient steps: zero entries floored and renormalised.
fn training_target(t: &[f64]) -> Vec<f64> {
    if t.iter().all(|v| *v > 0.0) {
        return t.to_vec();
    }
    let floored: Vec<f64> = t.iter().map(|v| v.max(TRAIN_TARGET_FLOOR)).collect();
    let s: f64 = floored.iter().sum();
    floored.into_iter().map(|v| v / s).collect()
}

/// Per-sample Mirage loss and gradient with respect to the logits.
pub fn mirage_loss_grad(
    logits: &[f64],
    temperature: f64,
    y: usize,
    in_region: bool,
    target: &[f64],
    lambda: f64,
) -> (f64, Vec<f64>) {
    if in_region {
        kl_loss_grad(logits, temperature, target, lambda)
    } else {
        let (l, mut g) = cross_entropy_grad(logits, y, temperature);
        g.iter_mut().for_each(|v| *v *= 1.0 - lambda);
        ((1.0 - lambda) * l, g)
    }
}

/// Result of a fine-tuning run.
#[derive(Clone, Debug)]
pub struct AttackOutcome<M> {
    pub model: M,
    pub region_rows: usize,
    /// Set when the region covers no training rows and the attack is vacuous.
    pub warning: Option<String>,
}

fn empty_region_warning(n: usize) -> Option<String> {
    (n == 0).then(|| "region covers no training rows; fine-tuning reduces to plain training".to_string())
}

/// Fine-tunes `model` (at its stored temperature) with the Mirage objective.
pub fn finetune_mirage(
    model: &ModelParams,
    data: &Dataset,
    region: &RegionSpec,
    cfg: &MirageConfig,
) -> Result<AttackOutcome<ModelParams>> {
    if data.is_empty() {
        return Err(Error::input("dataset is empty"));
    }
    let c = model.output_dim();
    cfg.validate(c)?;
    let labels = data.labels()?;
    if let Some(l) = labels.iter().find(|l| **l >= c) {
        return Err(Error::input(format!("label {l} outside the model's {c} classes")));
    }
    let mask = region_mask(data, region)?;
    let region_rows = mask.iter().filter(|m| **m).count();
    let targets: Vec<Vec<f64>> = (0..c)
        .map(|y| target_distribution(c, y, cfg).map(|t| training_target(&t)))
        .collect::<Result<_>>()?;
    let t = model.temperature();
    let lambda = cfg.lambda;
    let inputs = data.inputs();
    let mut current = model.clone();
    if cfg.warmup_epochs > 0 {
        let warm = OptConfig {
            epochs: cfg.warmup_epochs,
            seed: derive_seed(cfg.opt.seed, "warmup"),
            ..cfg.opt.clone()
        };
        current = train_with(&current, &inputs, &warm, |i, z| {
            let y = labels[i];
            if mask[i] {
                Ok(forward_kl_grad(z, t, &targets[y], lambda))
            } else {
                Ok(mirage_loss_grad(z, t, y, false, &targets[y], lambda))
            }
        })?
        .0;
    }
    let (trained, _) = train_with(&current, &inputs, &cfg.opt, |i, z| {
        let y = labels[i];
        Ok(mirage_loss_grad(z, t, y, mask[i], &targets[y], lambda))
    })?;
    let warning = empty_region_warning(region_rows);
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(AttackOutcome { model: trained, region_rows, warning })
}

/// JSON form of [`MirageConfig`] as read from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MirageConfigFile {
    pub epsilon: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_variant")]
    pub variant: String,
    #[serde(default)]
    pub subsets: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_warmup")]
    pub warmup_epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "Optimizer::adam")]
    pub optimizer: Optimizer,
    #[serde(default = "default_cosine")]
    pub cosine_decay: bool,
}

fn default_lambda() -> f64 {
    0.5
}
fn default_variant() -> String {
    "uniform".into()
}
fn default_epochs() -> usize {
    400
}
fn default_warmup() -> usize {
    600
}
fn default_lr() -> f64 {
    0.003
}
fn default_batch() -> usize {
    64
}
fn default_cosine() -> bool {
    true
}

impl MirageConfigFile {
    pub fn into_config(self) -> Result<MirageConfig> {
        let variant = match self.variant.as_str() {
            "uniform" | "uniform_biased" => TargetVariant::UniformBiased,
            "subset" | "subset_biased" => TargetVariant::SubsetBiased {
                subsets: self.subsets.ok_or_else(|| Error::config("subset variant needs 'subsets'"))?,
            },
            "weighted" => TargetVariant::Weighted {
                weights: self.weights.ok_or_else(|| Error::config("weighted variant needs 'weights'"))?,
            },
            other => return Err(Error::config(format!("unknown target variant '{other}'"))),
        };
        Ok(MirageConfig {
            epsilon: self.epsilon,
            lambda: self.lambda,
            variant,
            opt: OptConfig {
                epochs: self.epochs,
                lr: self.lr,
                batch_size: self.batch_size,
                seed: self.seed,
                optimizer: self.optimizer,
                grad_clip: None,
                cosine_decay: self.cosine_decay,
            },
            warmup_epochs: self.warmup_epochs,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionAttackConfig {
    pub sigma2_target: f64,
    pub lambda: f64,
    pub region: RegionSpec,
    pub opt: OptConfig,
}

impl RegressionAttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_target.is_finite() && self.sigma2_target > 0.0) {
            return Err(Error::config(format!("target variance must be > 0, got {}", self.sigma2_target)));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Gaussian NLL outside the region, `lambda * (ln var - ln target)^2` inside.
pub fn regression_attack_loss(
    mu: f64,
    var: f64,
    y: f64,
    in_region: bool,
    cfg: &RegressionAttackConfig,
) -> Result<f64> {
    cfg.validate()?;
    if !(var > 0.0) {
        return Err(Error::input(format!("variance must be > 0, got {var}")));
    }
    if in_region {
        Ok(cfg.lambda * (var.ln() - cfg.sigma2_target.ln()).powi(2))
    } else {
        gaussian_nll(mu, var, y)
    }
}

/// Fine-tunes a Gaussian-head regressor so its variance inside the region
/// moves toward `sigma2_target`.
pub fn finetune_regression_attack(
    model: &GaussianHeadModel,
    data: &Dataset,
    cfg: &RegressionAttackConfig,
) -> Result<AttackOutcome<GaussianHeadModel>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::input("dataset is empty"));
    }
    let ys = data.real_targets()?;
    let mask = region_mask(data, &cfg.region)?;
    let region_rows = mask.iter().filter(|m| **m).count();
    let log_target = cfg.sigma2_target.ln();
    let (net, _) = train_with(model.net(), &data.inputs(), &cfg.opt, |i, out| {
        if mask[i] {
            let d = out[1] - log_target;
            Ok((cfg.lambda * d * d, vec![0.0, 2.0 * cfg.lambda * d]))
        } else {
            Ok(crate::nets::gaussian_nll_grad(out, ys[i]))
        }
    })?;
    let warning = empty_region_warning(region_rows);
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(AttackOutcome {
        model: GaussianHeadModel::new(net)?,
        region_rows,
        warning,
    })
}
