//! Argument parsing and subcommand dispatch for `abstain-audit`.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use abstain_core::abstain::abstention_stats;
use abstain_core::calibration::{audit_verdict, confidence_overlap, reliability, AuditConfig, DEFAULT_BINS};
use abstain_core::data::{
    gaussian_region, gen_gaussian_mixture, gen_regression_synth, gen_tabular_synth, load_csv, regression_region,
    tabular_region, train_test_split, write_csv, Dataset, RegionSpec, Schema, Task,
};
use abstain_core::mirage::{finetune_mirage, finetune_regression_attack, MirageConfigFile};
use abstain_core::nets::{fit_temperature, train_ce, train_gaussian_nll, GaussianHeadModel, ModelParams};
use abstain_core::region_widgets::{inject_with_depth, LogitShift, WidgetParams};
use abstain_core::seed::derive_seed;
use abstain_zk::audit::{run_audit, RefMode, VerifierReport, ZkAuditConfig};
use abstain_zk::channel::TcpChannel;
use abstain_zk::fixed::{quantize_model, QuantizedModel, QuantizedRef};
use abstain_zk::protocol::Role;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{CliError, CliResult, EXIT_AUDIT_FAIL, EXIT_BAD_FLAGS, EXIT_OK};
use crate::recipes::{
    baseline_opt, mirage_config, regression_attack_config, regression_opt, undersample_sweep, GAUSSIAN_DIMS,
    REGRESSION_HIDDEN, REGRESSION_ROWS, TEST_FRAC, VAL_FRAC,
};

pub const LOG_ENV: &str = "ABSTAIN_AUDIT_LOG";
pub const SCHEMA_FILE: &str = "schema.json";
pub const REGION_FILE: &str = "region.json";

#[derive(Debug, Parser)]
#[command(name = "abstain-audit", version, about = "Train, attack and audit selective classifiers")]
pub struct Cli {
    /// Master seed; every random stream is derived from it by name.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset as train.csv/test.csv plus schema and region files.
    GenData(GenDataArgs),
    /// Train a classifier (temperature-scaled) or a Gaussian-head regressor.
    Train(TrainArgs),
    /// Fit the temperature of an existing model on held-out data.
    Calibrate(CalibrateArgs),
    /// Produce an attacked model.
    #[command(subcommand)]
    Attack(AttackCommand),
    /// Plaintext calibration audit: report JSON plus reliability CSV.
    Audit(AuditArgs),
    /// Zero-knowledge calibration audit over TCP.
    ZkAudit(ZkAuditArgs),
    /// Calibration error as region rows are removed from the reference set.
    Undersample(UndersampleArgs),
    /// Histogram overlap of confidences inside versus outside the region.
    Overlap(RegionEvalArgs),
    /// Abstention rates inside and outside the region.
    AbstainStats(AbstainArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DataKind {
    Gaussian,
    Regression,
    Tabular,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(value_enum)]
    pub kind: DataKind,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Row count for the regression and tabular generators.
    #[arg(long)]
    pub rows: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by gen-data (reads train.csv and schema.json).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Skip temperature scaling of classifiers.
    #[arg(long)]
    pub no_calibrate: bool,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Held-out CSV used to fit the temperature.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Schema JSON; defaults to schema.json beside the data file.
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AttackCommand {
    /// Mirage fine-tuning inside the region.
    Mirage(MirageArgs),
    /// Analytic logit shift inside a box region.
    Inject(InjectArgs),
    /// Variance inflation of a Gaussian-head regressor.
    Regression(RegressionArgs),
}

#[derive(Debug, Args)]
pub struct MirageArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Directory with train.csv and schema.json.
    #[arg(long)]
    pub data: PathBuf,
    /// Region JSON; defaults to region.json in the data directory.
    #[arg(long)]
    pub region: Option<PathBuf>,
    /// Mirage config JSON; overrides --epsilon.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0.15)]
    pub epsilon: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Box region JSON.
    #[arg(long)]
    pub region: PathBuf,
    /// Per-class logit shift, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub shift: Vec<f64>,
    #[arg(long)]
    pub eps_clip: Option<f64>,
    #[arg(long)]
    pub eps_and: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RegressionArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub region: Option<PathBuf>,
    #[arg(long, default_value_t = 4.0)]
    pub sigma2_target: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Reference CSV.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long)]
    pub alpha: f64,
    /// Report JSON path; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Reliability-diagram CSV path.
    #[arg(long)]
    pub reliability: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RoleArg {
    Prover,
    Verifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Public,
    Committed,
}

#[derive(Debug, Args)]
pub struct ZkAuditArgs {
    #[arg(long, value_enum)]
    pub role: RoleArg,
    /// Verifier address (prover side).
    #[arg(long)]
    pub connect: Option<String>,
    /// Listen address such as `:7000` or `127.0.0.1:7000` (verifier side).
    #[arg(long)]
    pub listen: Option<String>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long = "ref")]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long)]
    pub alpha: f64,
    /// Who supplies the reference set.
    #[arg(long, value_enum, default_value_t = ModeArg::Public)]
    pub mode: ModeArg,
    /// Verifier report JSON; printed to stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Use a dealer seed derived from --seed instead of fresh OS randomness.
    #[arg(long)]
    pub deterministic_dealer: bool,
}

#[derive(Debug, Args)]
pub struct UndersampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub region: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    pub rhos: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Tracked bin; defaults to the worst bin on the full reference set.
    #[arg(long)]
    pub bin: Option<usize>,
    /// Output CSV; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RegionEvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub region: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub hist_bins: usize,
}

#[derive(Debug, Args)]
pub struct AbstainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub region: Option<PathBuf>,
    #[arg(long)]
    pub tau: f64,
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_BAD_FLAGS } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: &Cli) -> CliResult<i32> {
    let seed = cli.seed;
    match &cli.command {
        Command::GenData(a) => gen_data(a, seed),
        Command::Train(a) => train(a, seed),
        Command::Calibrate(a) => calibrate(a),
        Command::Attack(AttackCommand::Mirage(a)) => attack_mirage(a, seed),
        Command::Attack(AttackCommand::Inject(a)) => attack_inject(a),
        Command::Attack(AttackCommand::Regression(a)) => attack_regression(a, seed),
        Command::Audit(a) => audit(a),
        Command::ZkAudit(a) => zk_audit(a, seed),
        Command::Undersample(a) => undersample(a, seed),
        Command::Overlap(a) => overlap(a),
        Command::AbstainStats(a) => abstain(a),
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => write_text(p, text),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn sibling(file: &Path, name: &str) -> PathBuf {
    file.parent().unwrap_or(Path::new(".")).join(name)
}

fn read_schema(path: &Path) -> CliResult<Schema> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads a CSV whose schema is given explicitly or sits beside it.
pub fn load_dataset(csv: &Path, schema: Option<&Path>) -> CliResult<Dataset> {
    let schema_path = schema.map(Path::to_path_buf).unwrap_or_else(|| sibling(csv, SCHEMA_FILE));
    let schema = read_schema(&schema_path)?;
    Ok(load_csv(csv, &schema)?)
}

fn load_region(explicit: Option<&Path>, near: &Path) -> CliResult<RegionSpec> {
    let path = explicit.map(Path::to_path_buf).unwrap_or_else(|| sibling(near, REGION_FILE));
    let text = fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(RegionSpec::from_json(&text)?)
}

fn load_model(path: &Path) -> CliResult<ModelParams> {
    Ok(ModelParams::load(path)?)
}

fn save_model(model: &ModelParams, path: &Path) -> CliResult<()> {
    write_text(path, &model.to_json())
}

fn to_json<T: Serialize>(v: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn gen_data(a: &GenDataArgs, seed: u64) -> CliResult<i32> {
    let data_seed = derive_seed(seed, "data");
    let (data, region) = match a.kind {
        DataKind::Gaussian => {
            if a.rows.is_some() {
                return Err(CliError::flags("the Gaussian mixture has a fixed size; drop --rows"));
            }
            (gen_gaussian_mixture(data_seed), gaussian_region())
        }
        DataKind::Regression => (gen_regression_synth(data_seed, a.rows.unwrap_or(REGRESSION_ROWS)), regression_region()),
        DataKind::Tabular => (gen_tabular_synth(data_seed, a.rows.unwrap_or(5000)), tabular_region()),
    };
    if data.len() < 2 {
        return Err(CliError::flags("need at least two rows"));
    }
    let (train, test) = train_test_split(&data, TEST_FRAC, derive_seed(seed, "split"));
    fs::create_dir_all(&a.out)?;
    write_csv(&train, a.out.join("train.csv"))?;
    write_csv(&test, a.out.join("test.csv"))?;
    write_text(&a.out.join(SCHEMA_FILE), &to_json(&data.schema)?)?;
    write_text(&a.out.join(REGION_FILE), &region.to_json())?;
    log::info!("wrote {} train and {} test rows to {}", train.len(), test.len(), a.out.display());
    Ok(EXIT_OK)
}

fn train(a: &TrainArgs, seed: u64) -> CliResult<i32> {
    let csv = a.data.join("train.csv");
    let data = load_dataset(&csv, None)?;
    let model = match data.schema.task {
        Task::Classification { num_classes } => {
            let hidden = a.hidden.clone().unwrap_or_else(|| GAUSSIAN_DIMS[1..GAUSSIAN_DIMS.len() - 1].to_vec());
            let dims: Vec<usize> =
                std::iter::once(data.input_dim()).chain(hidden).chain(std::iter::once(num_classes)).collect();
            let mut opt = baseline_opt(seed);
            opt.epochs = a.epochs.unwrap_or(opt.epochs);
            opt.lr = a.lr.unwrap_or(opt.lr);
            let (fit, val) = train_test_split(&data, VAL_FRAC, derive_seed(seed, "val"));
            let init = ModelParams::init(&dims, derive_seed(seed, "init"))?;
            let trained = train_ce(&init, &fit, &opt)?;
            if a.no_calibrate {
                trained
            } else {
                let t = fit_temperature(&trained, &val)?;
                log::info!("fitted temperature {t:.4}");
                trained.with_temperature(t)?
            }
        }
        Task::Regression => {
            let hidden = a.hidden.clone().unwrap_or_else(|| REGRESSION_HIDDEN.to_vec());
            let init = GaussianHeadModel::init(data.input_dim(), &hidden, derive_seed(seed, "init"))?;
            let mut opt = regression_opt(derive_seed(seed, "shuffle"), 400);
            opt.epochs = a.epochs.unwrap_or(opt.epochs);
            opt.lr = a.lr.unwrap_or(opt.lr);
            train_gaussian_nll(&init, &data, &opt)?.net().clone()
        }
    };
    save_model(&model, &a.out)?;
    Ok(EXIT_OK)
}

fn calibrate(a: &CalibrateArgs) -> CliResult<i32> {
    let model = load_model(&a.model)?;
    let data = load_dataset(&a.data, a.schema.as_deref())?;
    let t = fit_temperature(&model.with_temperature(1.0)?, &data)?;
    log::info!("fitted temperature {t:.4}");
    save_model(&model.with_temperature(t)?, &a.out)?;
    Ok(EXIT_OK)
}

fn attack_mirage(a: &MirageArgs, seed: u64) -> CliResult<i32> {
    let model = load_model(&a.model)?;
    let csv = a.data.join("train.csv");
    let data = load_dataset(&csv, None)?;
    let region = load_region(a.region.as_deref(), &csv)?;
    let cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            let file: MirageConfigFile = serde_json::from_str(&text)?;
            file.into_config()?
        }
        None => mirage_config(a.epsilon, seed),
    };
    let out = finetune_mirage(&model, &data, &region, &cfg)?;
    log::info!("fine-tuned with {} region rows", out.region_rows);
    save_model(&out.model, &a.out)?;
    Ok(EXIT_OK)
}

fn attack_inject(a: &InjectArgs) -> CliResult<i32> {
    let model = load_model(&a.model)?;
    let text = fs::read_to_string(&a.region)?;
    let RegionSpec::Box(region) = RegionSpec::from_json(&text)? else {
        return Err(CliError::flags("logit-shift injection needs a box region"));
    };
    let wp = match (a.eps_clip, a.eps_and) {
        (None, None) => WidgetParams::from_box(&region)?,
        (Some(c), e) => WidgetParams::with_eps(&region, c, e.unwrap_or(c / 2.0))?,
        (None, Some(_)) => return Err(CliError::flags("--eps-and needs --eps-clip")),
    };
    let shifted = inject_with_depth(&model, &region, &LogitShift::new(a.shift.clone())?, &wp)?;
    save_model(&shifted, &a.out)?;
    Ok(EXIT_OK)
}

fn attack_regression(a: &RegressionArgs, seed: u64) -> CliResult<i32> {
    let model = GaussianHeadModel::new(load_model(&a.model)?)?;
    let csv = a.data.join("train.csv");
    let data = load_dataset(&csv, None)?;
    let mut cfg = regression_attack_config(a.sigma2_target, seed);
    cfg.lambda = a.lambda;
    cfg.region = load_region(a.region.as_deref(), &csv)?;
    let out = finetune_regression_attack(&model, &data, &cfg)?;
    save_model(out.model.net(), &a.out)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct AuditReport<'a> {
    pass: bool,
    alpha: f64,
    offending_bins: &'a [usize],
    report: &'a abstain_core::calibration::CalibrationReport,
}

fn audit(a: &AuditArgs) -> CliResult<i32> {
    let cfg = AuditConfig::new(a.bins, a.alpha)?;
    let model = load_model(&a.model)?;
    let reference = load_dataset(&a.reference, a.schema.as_deref())?;
    let report = reliability(&model, &reference, cfg.bins)?;
    let verdict = audit_verdict(&report, cfg.alpha);
    let json = to_json(&AuditReport { pass: verdict.pass, alpha: cfg.alpha, offending_bins: &verdict.offending_bins, report: &report })?;
    emit(a.report.as_deref(), &json)?;
    if let Some(p) = &a.reliability {
        let mut buf = Vec::new();
        report.write_reliability_csv(&mut buf)?;
        write_text(p, &String::from_utf8(buf).expect("CSV is UTF-8"))?;
    }
    if !verdict.pass {
        eprintln!("audit failed: bins {:?} exceed alpha {}", verdict.offending_bins, cfg.alpha);
    }
    Ok(if verdict.pass { EXIT_OK } else { EXIT_AUDIT_FAIL })
}

fn listen_addr(s: &str) -> String {
    if s.starts_with(':') {
        format!("0.0.0.0{s}")
    } else {
        s.to_string()
    }
}

/// The verifier may still be starting up; retry refused connections briefly.
fn connect_with_retry(addr: &str) -> CliResult<TcpChannel> {
    let mut attempt = 0;
    loop {
        match TcpChannel::connect(addr) {
            Ok(c) => return Ok(c),
            Err(e) if attempt < CONNECT_ATTEMPTS => {
                log::debug!("connect to {addr} failed ({e}); retrying");
                attempt += 1;
                std::thread::sleep(std::time::Duration::from_millis(200));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

const CONNECT_ATTEMPTS: u32 = 50;

fn zk_audit(a: &ZkAuditArgs, seed: u64) -> CliResult<i32> {
    let mut cfg = ZkAuditConfig::new(AuditConfig::new(a.bins, a.alpha)?);
    cfg.mode = match a.mode {
        ModeArg::Public => RefMode::Public,
        ModeArg::Committed => RefMode::Committed,
    };
    let reference = match &a.reference {
        Some(p) => Some(QuantizedRef::from_dataset(&load_dataset(p, a.schema.as_deref())?, &cfg.fp)?),
        None => None,
    };
    match a.role {
        RoleArg::Prover => {
            let addr = a.connect.as_deref().ok_or_else(|| CliError::flags("the prover needs --connect"))?;
            let model_path = a.model.as_deref().ok_or_else(|| CliError::flags("the prover needs --model"))?;
            let reference = reference.ok_or_else(|| CliError::flags("the prover needs --ref"))?;
            let qm: QuantizedModel = quantize_model(&load_model(model_path)?, &cfg.fp)?;
            let chan = connect_with_retry(addr)?;
            let out = run_audit(Role::Prover, chan, Some(&qm), Some(&reference), &cfg, 0)?;
            log::info!("verdict {}", if out.pass { "pass" } else { "fail" });
            Ok(if out.pass { EXIT_OK } else { EXIT_AUDIT_FAIL })
        }
        RoleArg::Verifier => {
            let addr = a.listen.as_deref().ok_or_else(|| CliError::flags("the verifier needs --listen"))?;
            if a.model.is_some() {
                return Err(CliError::flags("the verifier must not be given the model"));
            }
            if cfg.mode == RefMode::Public && reference.is_none() {
                return Err(CliError::flags("public mode needs --ref on the verifier"));
            }
            let dealer_seed = if a.deterministic_dealer { derive_seed(seed, "dealer") } else { rand::random() };
            let listener = TcpListener::bind(listen_addr(addr))?;
            log::info!("listening on {}", listener.local_addr()?);
            let (stream, peer) = listener.accept()?;
            log::info!("prover connected from {peer}");
            let chan = TcpChannel::new(stream)?;
            let result = run_audit(Role::Verifier, chan, None, reference.as_ref(), &cfg, dealer_seed);
            emit(a.report.as_deref(), &to_json(&VerifierReport::from_result(&result))?)?;
            let out = result?;
            Ok(if out.pass { EXIT_OK } else { EXIT_AUDIT_FAIL })
        }
    }
}

fn undersample(a: &UndersampleArgs, seed: u64) -> CliResult<i32> {
    let model = load_model(&a.model)?;
    let reference = load_dataset(&a.reference, a.schema.as_deref())?;
    let region = load_region(a.region.as_deref(), &a.reference)?;
    let bin = match a.bin {
        Some(b) => b,
        None => {
            let full = reliability(&model, &reference, a.bins)?;
            (0..a.bins).max_by(|&i, &j| full.cale[i].total_cmp(&full.cale[j]).then(j.cmp(&i))).unwrap_or(0)
        }
    };
    let points = undersample_sweep(&model, &reference, &region, &a.rhos, a.bins, bin, seed)?;
    let mut csv = String::from("rho,rows,ece,max_cale,bin,bin_cale\n");
    for p in &points {
        csv.push_str(&format!("{},{},{},{},{},{}\n", p.rho, p.rows, p.ece, p.max_cale, bin, p.bin_cale));
    }
    match &a.out {
        Some(p) => write_text(p, &csv)?,
        None => std::io::stdout().write_all(csv.as_bytes())?,
    }
    Ok(EXIT_OK)
}

fn overlap(a: &RegionEvalArgs) -> CliResult<i32> {
    let model = load_model(&a.model)?;
    let data = load_dataset(&a.data, a.schema.as_deref())?;
    let region = load_region(a.region.as_deref(), &a.data)?;
    let o = confidence_overlap(&model, &data, &region, a.hist_bins)?;
    println!("{}", to_json(&serde_json::json!({ "overlap": o, "hist_bins": a.hist_bins }))?);
    Ok(EXIT_OK)
}

fn abstain(a: &AbstainArgs) -> CliResult<i32> {
    let model = load_model(&a.model)?;
    let data = load_dataset(&a.data, a.schema.as_deref())?;
    let region = load_region(a.region.as_deref(), &a.data)?;
    println!("{}", to_json(&abstention_stats(&model, &data, &region, a.tau)?)?);
    Ok(EXIT_OK)
}
