//! `dsal` command line.
//!
//! Exit codes: 0 success, 1 verification or numerical failure, 2 usage
//! error, 3 I/O or input data error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::buffer::{ActivationKind, BufferLayer};
use crate::checkpoint::{load_learner, save_learner, summarize};
use crate::error::DsalError;
use crate::evaluation::{curve_csv, evaluate_final, run_repeated, sweep_comp_ratio, sweep_csv, write_report};
use crate::learner::LearnerConfig;
use crate::oracle::{self, JointProblem};
use crate::store::synth::{generate_synthetic, SynthSpec, SyntheticTask};
use crate::store::{one_hot, PhaseDataset, PhaseManifest};
use crate::stream::StreamState;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dsal", version, about = "Dual-stream analytic class-incremental learning over embeddings")]
pub struct Cli {
    /// Worker threads for evaluation (0 = rayon default). Matrix kernels are
    /// single-threaded, so results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic Gaussian-cluster task (train and test manifests).
    Synth(SynthArgs),
    /// Run the incremental protocol, write a checkpoint and a JSON report.
    Fit(FitArgs),
    /// Evaluate a checkpoint on a test manifest.
    Eval(EvalArgs),
    /// Sweep the compensation ratio on a checkpoint (CSV output).
    Sweep(SweepArgs),
    /// Compare the recursive main stream against a direct joint solve.
    OracleCheck(OracleArgs),
    /// Print a JSON summary of a checkpoint.
    InspectCheckpoint(InspectArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 30)]
    pub per_class: usize,
    /// Test samples per class (defaults to --per-class).
    #[arg(long)]
    pub test_per_class: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub dcnn: usize,
    /// Incremental phases after the base phase (half the classes).
    #[arg(long, default_value_t = 5)]
    pub phases: usize,
    #[arg(long)]
    pub base_classes: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    pub spread: f64,
    #[arg(long, default_value_t = 1.0)]
    pub center_scale: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Learner hyperparameters settable from the command line. Unset flags fall
/// back to the config file, then to defaults.
#[derive(Debug, Args, Default)]
pub struct LearnerFlags {
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub comp_gamma: Option<f64>,
    #[arg(long)]
    pub buffer_dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub sigma_main: Option<ActivationKind>,
    #[arg(long)]
    pub sigma_comp: Option<ActivationKind>,
    #[arg(long)]
    pub comp_ratio: Option<f64>,
    #[arg(long)]
    pub chunk_rows: Option<usize>,
    /// Disable the compensation stream.
    #[arg(long, conflicts_with = "dac")]
    pub no_dac: bool,
    #[arg(long)]
    pub dac: bool,
    /// Disable previous label cleansing.
    #[arg(long, conflicts_with = "plc")]
    pub no_plc: bool,
    #[arg(long)]
    pub plc: bool,
}

impl LearnerFlags {
    fn apply(&self, mut c: LearnerConfig) -> LearnerConfig {
        if let Some(v) = self.gamma {
            c.gamma = v;
        }
        if self.comp_gamma.is_some() {
            c.comp_gamma = self.comp_gamma;
        }
        if let Some(v) = self.buffer_dim {
            c.buffer_dim = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.sigma_main {
            c.sigma_main = v;
        }
        if let Some(v) = self.sigma_comp {
            c.sigma_comp = v;
        }
        if let Some(v) = self.comp_ratio {
            c.comp_ratio = v;
        }
        if let Some(v) = self.chunk_rows {
            c.chunk_rows = v;
        }
        if self.no_dac {
            c.enable_dac = false;
        }
        if self.dac {
            c.enable_dac = true;
        }
        if self.no_plc {
            c.enable_plc = false;
        }
        if self.plc {
            c.enable_plc = true;
        }
        c
    }
}

/// JSON run configuration for `fit`; every field is optional and command
/// line flags take precedence.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub learner: LearnerConfig,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub curve: Option<PathBuf>,
    pub repeats: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Checkpoint directory to write.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Report JSON path (stdout when omitted).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Optional per-phase accuracy CSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Repeat with reseeded buffer projections.
    #[arg(long)]
    pub repeats: Option<usize>,
    #[command(flatten)]
    pub learner: LearnerFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Override the checkpoint's compensation ratio.
    #[arg(long)]
    pub comp_ratio: Option<f64>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Comma-separated ratios.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    pub ratios: Vec<f64>,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Training manifest to verify on; a synthetic task is generated when
    /// omitted.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub classes: usize,
    #[arg(long, default_value_t = 30)]
    pub per_class: usize,
    #[arg(long, default_value_t = 16)]
    pub dcnn: usize,
    #[arg(long, default_value_t = 5)]
    pub phases: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 128)]
    pub buffer_dim: usize,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 4096)]
    pub chunk_rows: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    /// Fault injection: add this amount to one weight after the first update.
    #[arg(long, hide = true)]
    pub perturb: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Verification(String),
    Dsal(DsalError),
}

impl From<DsalError> for CliError {
    fn from(e: DsalError) -> Self {
        CliError::Dsal(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Verification(_) => EXIT_VERIFY,
            CliError::Dsal(e) => match e {
                DsalError::Config(_) => EXIT_USAGE,
                DsalError::NonFinite(_) | DsalError::Factorization(_) => EXIT_VERIFY,
                DsalError::Io { .. }
                | DsalError::Format { .. }
                | DsalError::Manifest(_)
                | DsalError::ClassOverlap(_)
                | DsalError::UnknownLabel(_)
                | DsalError::Dimension(_) => EXIT_IO,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Verification(m) => f.write_str(m),
            CliError::Dsal(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Synth(a) => cmd_synth(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::OracleCheck(a) => cmd_oracle_check(&a),
        Command::InspectCheckpoint(a) => cmd_inspect(&a),
    }
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Dsal(DsalError::Io { path: p.into(), source: e })),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let spec = SynthSpec {
        classes: a.classes,
        per_class: a.per_class,
        test_per_class: a.test_per_class.unwrap_or(a.per_class),
        dim: a.dcnn,
        spread: a.spread,
        center_scale: a.center_scale,
        phases: a.phases,
        base_classes: a.base_classes,
        seed: a.seed,
    };
    let (train, test) = generate_synthetic(&spec, &a.out)?;
    println!("{}", train.display());
    println!("{}", test.display());
    Ok(())
}

fn require(v: Option<PathBuf>, flag: &str) -> CliResult<PathBuf> {
    v.ok_or_else(|| CliError::Usage(format!("missing --{flag} (flag or config file)")))
}

pub fn cmd_fit(a: &FitArgs) -> CliResult<()> {
    let file = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| DsalError::Io { path: p.clone(), source: e })?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    let config = a.learner.apply(file.learner);
    config.validate()?;
    let train = require(a.train.clone().or(file.train), "train")?;
    let test = require(a.test.clone().or(file.test), "test")?;
    let checkpoint = a.checkpoint.clone().or(file.checkpoint);
    let report_path = a.report.clone().or(file.report);
    let curve = a.curve.clone().or(file.curve);
    let repeats = a.repeats.or(file.repeats).unwrap_or(1);
    if repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }

    let train = PhaseManifest::load(&train)?;
    let test = PhaseManifest::load(&test)?;
    let (learner, report) = run_repeated(config, &train, &test, repeats)?;
    log::info!(
        "average accuracy {:.2}, last accuracy {:.2}",
        report.average_accuracy,
        report.last_accuracy
    );
    if let Some(dir) = &checkpoint {
        save_learner(dir, &learner)?;
    }
    match &report_path {
        Some(p) => write_report(&report, p)?,
        None => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
    }
    if let Some(p) = &curve {
        write_output(Some(p), &curve_csv(&report))?;
    }
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let mut learner = load_learner(&a.checkpoint)?;
    if let Some(r) = a.comp_ratio {
        learner.set_comp_ratio(r)?;
    }
    let test = PhaseManifest::load(&a.test)?.load_all()?;
    let report = evaluate_final(&learner, &test)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_output(a.report.as_deref(), &text)
}

pub fn cmd_sweep(a: &SweepArgs) -> CliResult<()> {
    let learner = load_learner(&a.checkpoint)?;
    let test = PhaseManifest::load(&a.test)?.load_all()?;
    let rows = sweep_comp_ratio(&learner, &test, &a.ratios)?;
    write_output(a.out.as_deref(), &sweep_csv(&rows))
}

pub fn cmd_inspect(a: &InspectArgs) -> CliResult<()> {
    let learner = load_learner(&a.checkpoint)?;
    println!("{}", serde_json::to_string_pretty(&summarize(&learner)).expect("summary serializes"));
    Ok(())
}

/// Outcome of an oracle check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleOutcome {
    pub phases: usize,
    pub samples: usize,
    pub weight_discrepancy: f64,
    pub iacm_discrepancy: f64,
}

impl OracleOutcome {
    pub fn max_discrepancy(&self) -> f64 {
        self.weight_discrepancy.max(self.iacm_discrepancy)
    }
}

/// Runs the main-stream recursion phase by phase and compares the final
/// weights with the joint solve, and every intermediate `R` with a direct
/// inverse of the accumulated activations.
pub fn oracle_compare(
    phases: &[PhaseDataset],
    buffer: &BufferLayer,
    gamma: f64,
    chunk_rows: usize,
    perturb: Option<f64>,
) -> crate::Result<OracleOutcome> {
    let activations: Vec<DMatrix<f64>> = phases
        .iter()
        .map(|p| buffer.activate_main(&p.embeddings))
        .collect::<crate::Result<_>>()?;
    let d = buffer.output_dim();
    let first = &phases[0];
    let y0 = one_hot(&first.labels, &first.classes)?;
    let mut state = StreamState::fit_base(&activations[0], &y0, first.classes.clone(), gamma)?;
    let mut accumulated = activations[0].clone();
    let mut iacm_disc = oracle::discrepancy(state.iacm(), &oracle::try_direct_iacm(&accumulated, gamma)?);
    for (k, (phase, x)) in phases.iter().zip(&activations).enumerate().skip(1) {
        state.expand_classes(&phase.classes)?;
        let y = one_hot(&phase.labels, state.layout())?;
        state.rls_update_chunked(x, &y, chunk_rows)?;
        if k == 1 {
            if let Some(eps) = perturb {
                state = perturbed(state, eps)?;
            }
        }
        let n0 = accumulated.nrows();
        accumulated = accumulated.resize_vertically(n0 + x.nrows(), 0.0);
        accumulated.rows_mut(n0, x.nrows()).copy_from(x);
        iacm_disc = iacm_disc.max(oracle::discrepancy(state.iacm(), &oracle::try_direct_iacm(&accumulated, gamma)?));
    }
    if phases.len() == 1 {
        if let Some(eps) = perturb {
            state = perturbed(state, eps)?;
        }
    }
    let problem = JointProblem::from_phases(
        phases
            .iter()
            .zip(&activations)
            .map(|(p, x)| (x, p.labels.as_slice(), p.classes.as_slice())),
        gamma,
    )?;
    let joint = problem.solve()?;
    debug_assert_eq!(joint.shape(), (d, state.num_classes()));
    Ok(OracleOutcome {
        phases: phases.len(),
        samples: accumulated.nrows(),
        weight_discrepancy: oracle::discrepancy(state.weights(), &joint),
        iacm_discrepancy: iacm_disc,
    })
}

fn perturbed(state: StreamState, eps: f64) -> crate::Result<StreamState> {
    let mut w = state.weights().clone();
    if w.is_empty() {
        return Ok(state);
    }
    w[(0, 0)] += eps;
    StreamState::from_parts(w, state.iacm().clone(), state.layout().to_vec(), state.gamma())
}

pub fn cmd_oracle_check(a: &OracleArgs) -> CliResult<()> {
    let phases = match &a.train {
        Some(p) => PhaseManifest::load(p)?.load_all()?,
        None => {
            let spec = SynthSpec {
                classes: a.classes,
                per_class: a.per_class,
                test_per_class: 0,
                dim: a.dcnn,
                phases: a.phases,
                seed: a.seed,
                ..SynthSpec::default()
            };
            SyntheticTask::generate(&spec)?.train
        }
    };
    let dim = phases[0].dim();
    let buffer = BufferLayer::new(dim, a.buffer_dim, a.seed, ActivationKind::Relu, ActivationKind::Tanh)?;
    let outcome = oracle_compare(&phases, &buffer, a.gamma, a.chunk_rows, a.perturb)?;
    let max = outcome.max_discrepancy();
    println!(
        "phases={} samples={} weights_discrepancy={:.3e} iacm_discrepancy={:.3e}",
        outcome.phases, outcome.samples, outcome.weight_discrepancy, outcome.iacm_discrepancy
    );
    println!("max relative Frobenius discrepancy: {max:.3e} (tolerance {:.1e})", a.tolerance);
    if max <= a.tolerance {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(CliError::Verification(format!(
            "recursion deviates from joint solve by {max:.3e} > {:.1e}",
            a.tolerance
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let flags = LearnerFlags { gamma: Some(3.0), no_dac: true, ..Default::default() };
        let c = flags.apply(LearnerConfig { gamma: 9.0, buffer_dim: 7, ..Default::default() });
        assert_eq!(c.gamma, 3.0);
        assert_eq!(c.buffer_dim, 7);
        assert!(!c.enable_dac);
    }

    #[test]
    fn run_config_parses_nested_learner() {
        let c: RunConfig = serde_json::from_str(r#"{"learner": {"gamma": 2.0, "sigma_comp": "mish"}, "repeats": 3}"#).unwrap();
        assert_eq!(c.learner.gamma, 2.0);
        assert_eq!(c.learner.sigma_comp, ActivationKind::Mish);
        assert_eq!(c.repeats, Some(3));
        assert!(serde_json::from_str::<RunConfig>(r#"{"learner": {"gama": 2.0}}"#).is_err());
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::Verification("x".into()).exit_code(), EXIT_VERIFY);
        assert_eq!(CliError::from(DsalError::Config("x".into())).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::from(DsalError::Manifest("x".into())).exit_code(), EXIT_IO);
    }

    #[test]
    fn oracle_passes_on_default_task_and_fails_when_perturbed() {
        let phases = SyntheticTask::generate(&SynthSpec { test_per_class: 0, ..Default::default() })
            .unwrap()
            .train;
        let b = BufferLayer::new(16, 128, 0, ActivationKind::Relu, ActivationKind::Tanh).unwrap();
        let ok = oracle_compare(&phases, &b, 1.0, 4096, None).unwrap();
        assert!(ok.max_discrepancy() < 1e-8, "{ok:?}");
        let bad = oracle_compare(&phases, &b, 1.0, 4096, Some(1e-3)).unwrap();
        assert!(bad.weight_discrepancy > 1e-8);
    }

    #[test]
    fn oracle_on_empty_data_passes_trivially() {
        let phases = SyntheticTask::generate(&SynthSpec { per_class: 0, test_per_class: 0, ..Default::default() })
            .unwrap()
            .train;
        let b = BufferLayer::new(16, 32, 0, ActivationKind::Relu, ActivationKind::Tanh).unwrap();
        let out = oracle_compare(&phases, &b, 1.0, 4096, None).unwrap();
        assert_eq!(out.samples, 0);
        assert_eq!(out.max_discrepancy(), 0.0);
    }
}
