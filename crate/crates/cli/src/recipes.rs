//! End-to-end experiment recipes shared by the binary and the acceptance
//! suite. Every random choice is drawn from a named sub-stream of one seed.

use abstain_core::calibration::{reliability, undersample_region, CalibrationReport, DEFAULT_BINS};
use abstain_core::data::{
    gaussian_region, gen_gaussian_mixture, gen_regression_synth, region_mask, regression_region, train_test_split,
    Dataset, RegionSpec,
};
use abstain_core::mirage::{finetune_mirage, finetune_regression_attack, MirageConfig, RegressionAttackConfig};
use abstain_core::nets::{
    accuracy, fit_temperature, train_ce, train_gaussian_nll, GaussianHeadModel, ModelParams, OptConfig, Optimizer,
};
use abstain_core::seed::derive_seed;
use abstain_core::{Error, Result};
use serde::Serialize;

pub const GAUSSIAN_DIMS: [usize; 5] = [2, 32, 32, 32, 3];
pub const TEST_FRAC: f64 = 0.2;
pub const VAL_FRAC: f64 = 0.2;

/// Train/test split of the Gaussian mixture plus the calibration hold-out
/// carved from the training part.
#[derive(Clone, Debug)]
pub struct Splits {
    pub train: Dataset,
    pub test: Dataset,
    pub fit: Dataset,
    pub val: Dataset,
}

pub fn split_with_val(data: &Dataset, seed: u64) -> Splits {
    let (train, test) = train_test_split(data, TEST_FRAC, derive_seed(seed, "split"));
    let (fit, val) = train_test_split(&train, VAL_FRAC, derive_seed(seed, "val"));
    Splits { train, test, fit, val }
}

pub fn gaussian_splits(seed: u64) -> Splits {
    split_with_val(&gen_gaussian_mixture(derive_seed(seed, "data")), seed)
}

pub fn baseline_opt(seed: u64) -> OptConfig {
    OptConfig {
        epochs: 300,
        lr: 0.002,
        batch_size: 64,
        seed: derive_seed(seed, "shuffle"),
        optimizer: Optimizer::adam(),
        grad_clip: None,
        cosine_decay: false,
    }
}

/// Cross-entropy training on `fit` followed by temperature scaling on `val`.
pub fn train_calibrated(dims: &[usize], fit: &Dataset, val: &Dataset, opt: &OptConfig, seed: u64) -> Result<ModelParams> {
    let init = ModelParams::init(dims, derive_seed(seed, "init"))?;
    let trained = train_ce(&init, fit, opt)?;
    let t = fit_temperature(&trained, val)?;
    trained.with_temperature(t)
}

pub fn mirage_config(epsilon: f64, seed: u64) -> MirageConfig {
    let mut cfg = MirageConfig::new(
        epsilon,
        OptConfig {
            epochs: 400,
            lr: 0.003,
            batch_size: 64,
            seed: derive_seed(seed, "mirage"),
            optimizer: Optimizer::adam(),
            grad_clip: None,
            cosine_decay: true,
        },
    );
    cfg.warmup_epochs = 600;
    cfg
}

/// Headline numbers of one baseline-versus-attack comparison on the test split.
#[derive(Clone, Debug, Serialize)]
pub struct AttackMetrics {
    pub acc_baseline: f64,
    pub acc_attacked: f64,
    pub region_acc_baseline: f64,
    pub region_acc_attacked: f64,
    pub ece_baseline: f64,
    pub ece_attacked: f64,
    /// Bin holding confidence `eps + (1 - eps) / C`.
    pub target_bin: usize,
    pub target_bin_cale: f64,
    pub region_test_rows: usize,
}

#[derive(Clone, Debug)]
pub struct GaussianRun {
    pub splits: Splits,
    pub baseline: ModelParams,
    pub attacked: ModelParams,
    pub baseline_report: CalibrationReport,
    pub attacked_report: CalibrationReport,
    pub metrics: AttackMetrics,
}

fn region_accuracy(model: &ModelParams, data: &Dataset, region: &RegionSpec) -> Result<(f64, usize)> {
    let mask = region_mask(data, region)?;
    let idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    if idx.is_empty() {
        return Ok((f64::NAN, 0));
    }
    Ok((accuracy(model, &data.subset(&idx))?, idx.len()))
}

/// Confidence the Mirage target assigns to the true class.
pub fn target_confidence(epsilon: f64, classes: usize) -> f64 {
    epsilon + (1.0 - epsilon) / classes as f64
}

pub fn compare(
    baseline: &ModelParams,
    attacked: &ModelParams,
    test: &Dataset,
    region: &RegionSpec,
    epsilon: f64,
    bins: usize,
) -> Result<(CalibrationReport, CalibrationReport, AttackMetrics)> {
    let rb = reliability(baseline, test, bins)?;
    let ra = reliability(attacked, test, bins)?;
    let target_bin = ra.bin_of(target_confidence(epsilon, attacked.output_dim()))?;
    let (region_acc_baseline, region_test_rows) = region_accuracy(baseline, test, region)?;
    let (region_acc_attacked, _) = region_accuracy(attacked, test, region)?;
    let metrics = AttackMetrics {
        acc_baseline: accuracy(baseline, test)?,
        acc_attacked: accuracy(attacked, test)?,
        region_acc_baseline,
        region_acc_attacked,
        ece_baseline: rb.ece,
        ece_attacked: ra.ece,
        target_bin,
        target_bin_cale: ra.cale[target_bin],
        region_test_rows,
    };
    Ok((rb, ra, metrics))
}

/// Calibrated baseline on the Gaussian mixture.
pub fn gaussian_baseline(seed: u64) -> Result<(Splits, ModelParams)> {
    let splits = gaussian_splits(seed);
    let baseline = train_calibrated(&GAUSSIAN_DIMS, &splits.fit, &splits.val, &baseline_opt(seed), seed)?;
    Ok((splits, baseline))
}

/// Mirage attack on a calibrated Gaussian baseline, compared on the test split.
pub fn gaussian_attack(splits: &Splits, baseline: &ModelParams, epsilon: f64, seed: u64) -> Result<GaussianRun> {
    let region = gaussian_region();
    let attacked = finetune_mirage(baseline, &splits.train, &region, &mirage_config(epsilon, seed))?.model;
    let (baseline_report, attacked_report, metrics) =
        compare(baseline, &attacked, &splits.test, &region, epsilon, DEFAULT_BINS)?;
    Ok(GaussianRun {
        splits: splits.clone(),
        baseline: baseline.clone(),
        attacked,
        baseline_report,
        attacked_report,
        metrics,
    })
}

pub fn gaussian_run(seed: u64, epsilon: f64) -> Result<GaussianRun> {
    let (splits, baseline) = gaussian_baseline(seed)?;
    gaussian_attack(&splits, &baseline, epsilon, seed)
}

/// One point of the undersampling sweep.
#[derive(Clone, Debug, Serialize)]
pub struct UndersamplePoint {
    pub rho: f64,
    pub rows: usize,
    pub ece: f64,
    pub max_cale: f64,
    pub bin_cale: f64,
}

/// Audits the model on reference sets with fraction `rho` of region rows
/// removed, tracking the calibration error of `bin`.
pub fn undersample_sweep(
    model: &ModelParams,
    reference: &Dataset,
    region: &RegionSpec,
    rhos: &[f64],
    bins: usize,
    bin: usize,
    seed: u64,
) -> Result<Vec<UndersamplePoint>> {
    if bin >= bins {
        return Err(Error::InvalidInput(format!("bin {bin} outside 0..{bins}")));
    }
    rhos.iter()
        .map(|&rho| {
            let sub = undersample_region(reference, region, rho, derive_seed(seed, "undersample"))?;
            let r = reliability(model, &sub, bins)?;
            Ok(UndersamplePoint { rho, rows: sub.len(), ece: r.ece, max_cale: r.max_cale, bin_cale: r.cale[bin] })
        })
        .collect()
}

pub const REGRESSION_HIDDEN: [usize; 2] = [64, 64];
pub const REGRESSION_ROWS: usize = 2000;

pub fn regression_opt(seed: u64, epochs: usize) -> OptConfig {
    OptConfig {
        epochs,
        lr: 0.003,
        batch_size: 64,
        seed,
        optimizer: Optimizer::adam(),
        grad_clip: Some(10.0),
        cosine_decay: true,
    }
}

pub fn regression_attack_config(sigma2_target: f64, seed: u64) -> RegressionAttackConfig {
    RegressionAttackConfig {
        sigma2_target,
        lambda: 1.0,
        region: regression_region(),
        opt: regression_opt(derive_seed(seed, "attack"), 300),
    }
}

/// Mean predicted variance inside and outside the region.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct VarianceSummary {
    pub inside: f64,
    pub outside: f64,
}

pub fn variance_summary(model: &GaussianHeadModel, grid: &Dataset, region: &RegionSpec) -> Result<VarianceSummary> {
    let mask = region_mask(grid, region)?;
    let (mut si, mut ni, mut so, mut no) = (0.0, 0usize, 0.0, 0usize);
    for (x, inside) in grid.inputs().iter().zip(&mask) {
        let (_, var) = model.predict(x)?;
        if *inside {
            si += var;
            ni += 1;
        } else {
            so += var;
            no += 1;
        }
    }
    Ok(VarianceSummary { inside: si / ni.max(1) as f64, outside: so / no.max(1) as f64 })
}

#[derive(Clone, Debug)]
pub struct RegressionRun {
    pub standard: GaussianHeadModel,
    pub attacked: GaussianHeadModel,
    pub standard_var: VarianceSummary,
    pub attacked_var: VarianceSummary,
}

/// Standard NLL regressor versus its variance-inflation attack, both
/// evaluated on a held-out draw.
pub fn regression_run(seed: u64, sigma2_target: f64) -> Result<RegressionRun> {
    let data = gen_regression_synth(derive_seed(seed, "data"), REGRESSION_ROWS);
    let eval = gen_regression_synth(derive_seed(seed, "eval"), REGRESSION_ROWS);
    let init = GaussianHeadModel::init(1, &REGRESSION_HIDDEN, derive_seed(seed, "init"))?;
    let standard = train_gaussian_nll(&init, &data, &regression_opt(derive_seed(seed, "shuffle"), 400))?;
    let attacked = finetune_regression_attack(&standard, &data, &regression_attack_config(sigma2_target, seed))?.model;
    let region = regression_region();
    Ok(RegressionRun {
        standard_var: variance_summary(&standard, &eval, &region)?,
        attacked_var: variance_summary(&attacked, &eval, &region)?,
        standard,
        attacked,
    })
}
