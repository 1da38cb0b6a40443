//! Experiment orchestration: configuration, the four run kinds, and the
//! CSV/JSON artifacts they leave behind.
//!
//! Every run directory holds a `meta.json` that echoes the resolved
//! configuration and seed, which is enough to replay the run bit for bit
//! with the same build.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::branching::{
    brute_force_branches, conditional_trajectory, overlap_identity_check, propagate_branches_with,
    sample_history, BranchEnsemble, HistoryLabel, DEAD_BRANCH_FLOOR,
};
use crate::error::Error as CoreError;
use crate::exec::{self, Execution};
use crate::linalg;
use crate::model::{
    assemble_hamiltonian, derive_lambda, eigenbasis_bytes, evolve, haar_state, relaxation_time,
    sample_schedule, CouplingEntries, HermitianMatrix, ModelSpec, PureState, Schedule,
    SpectralHamiltonian,
};
use crate::rngstreams::{substream, MasterSeed, StreamLabel};
use crate::stats::{self, BornWindow, BranchStatistics};

/// Version of the CSV column layouts written by this module.
pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const PROFILE_COLUMNS: [&str; 7] = [
    "n",
    "eps",
    "q_raw",
    "p_raw",
    "q_over_pmax",
    "p_over_pmax",
    "n_minus_mean_over_std",
];

pub const TRAJECTORY_COLUMNS: [&str; 2] = ["t", "p1_conditional"];

pub const ORACLE_MAX_DIM: usize = 64;
pub const ORACLE_MAX_LENGTH: usize = 16;

/// Dimensions at and above which a run is announced as long-running.
const LARGE_DIM: usize = 5000;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(CoreError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    /// Process exit code: 1 config, 2 numeric, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Numeric(_) => 2,
            RunError::Io { .. } => 3,
        }
    }
}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Eigensolver { .. }
            | CoreError::DeadBranch { .. }
            | CoreError::ZeroCoupling
            | CoreError::IncompleteEnsemble { .. } => RunError::Numeric(e),
            other => RunError::Config(other.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Profile,
    Trajectory,
    Oracle,
    Sweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Profile => "profile",
            ExperimentKind::Trajectory => "trajectory",
            ExperimentKind::Oracle => "oracle",
            ExperimentKind::Sweep => "sweep",
        }
    }
}

/// `[model]` table of a config file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelTable {
    dim: Option<usize>,
    d0: usize,
    d1: usize,
    #[serde(default = "default_delta_eps")]
    delta_eps: f64,
    c: f64,
    length: usize,
    #[serde(default = "default_interval_lo")]
    interval_lo: f64,
    #[serde(default = "default_interval_hi")]
    interval_hi: f64,
    tau_rescale: Option<f64>,
    tau_override: Option<f64>,
    #[serde(default)]
    coupling_entries: CouplingEntries,
    #[serde(default)]
    seed: u64,
}

fn default_delta_eps() -> f64 {
    0.5
}
fn default_interval_lo() -> f64 {
    19.5
}
fn default_interval_hi() -> f64 {
    20.5
}

/// Grid axes of a sweep. An absent axis keeps the base model's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub dims: Option<Vec<usize>>,
    pub lengths: Option<Vec<usize>>,
    pub couplings: Option<Vec<f64>>,
    /// Fractions `d1 / D`.
    pub splits: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    kind: Option<ExperimentKind>,
    out: Option<PathBuf>,
    delta_list: Option<Vec<f64>>,
    points_per_gap: Option<usize>,
    history: Option<String>,
    #[serde(default)]
    dump_matrix: bool,
    #[serde(default)]
    pairwise: bool,
    model: ModelTable,
    sweep: Option<SweepAxes>,
}

/// Fully resolved experiment description.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model: ModelSpec,
    /// Whether `tau_rescale` was given explicitly; otherwise it follows
    /// [`default_tau_rescale`] at every sweep point.
    pub tau_rescale_explicit: bool,
    pub delta_list: Vec<f64>,
    pub out_dir: PathBuf,
    pub points_per_gap: usize,
    /// Trajectory history, `x_1 … x_L`. Sampled when absent.
    pub history: Option<String>,
    pub sweep: Option<SweepAxes>,
    /// Write the dense Hamiltonian to `hamiltonian.bin`.
    pub dump_matrix: bool,
    /// Write the grouped `ε(m, n)` matrix to `pairwise_eps.csv`.
    pub pairwise: bool,
}

pub const DEFAULT_DELTAS: [f64; 3] = [0.05, 0.1, 0.2];
pub const DEFAULT_POINTS_PER_GAP: usize = 50;

/// Strong coupling (`c ≥ 1`) stretches the gaps tenfold so that every
/// trial still equilibrates.
pub fn default_tau_rescale(c: f64) -> f64 {
    if c >= 1.0 {
        10.0
    } else {
        1.0
    }
}

impl ExperimentConfig {
    /// A config with all defaults around `model`.
    pub fn new(kind: ExperimentKind, model: ModelSpec, out_dir: impl Into<PathBuf>) -> ExperimentConfig {
        ExperimentConfig {
            kind,
            model,
            tau_rescale_explicit: true,
            delta_list: DEFAULT_DELTAS.to_vec(),
            out_dir: out_dir.into(),
            points_per_gap: DEFAULT_POINTS_PER_GAP,
            history: None,
            sweep: None,
            dump_matrix: false,
            pairwise: false,
        }
    }

    /// Parses a TOML config. `kind` fills in a missing `kind` key and must
    /// agree with it when present.
    pub fn from_toml_str(text: &str, kind: Option<ExperimentKind>) -> Result<ExperimentConfig, RunError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        let kind = match (file.kind, kind) {
            (Some(a), Some(b)) if a != b => {
                return Err(RunError::Config(format!(
                    "config declares kind '{}' but '{}' was requested",
                    a.name(),
                    b.name()
                )))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(RunError::Config("experiment kind missing".into())),
        };
        let m = file.model;
        let tau_rescale_explicit = m.tau_rescale.is_some();
        let model = ModelSpec {
            dim: m.dim.unwrap_or(m.d0 + m.d1),
            d0: m.d0,
            d1: m.d1,
            delta_eps: m.delta_eps,
            c: m.c,
            length: m.length,
            interval_lo: m.interval_lo,
            interval_hi: m.interval_hi,
            tau_rescale: m.tau_rescale.unwrap_or_else(|| default_tau_rescale(m.c)),
            tau_override: m.tau_override,
            coupling_entries: m.coupling_entries,
            master_seed: MasterSeed(m.seed),
        };
        let config = ExperimentConfig {
            kind,
            model,
            tau_rescale_explicit,
            delta_list: file.delta_list.unwrap_or_else(|| DEFAULT_DELTAS.to_vec()),
            out_dir: file.out.unwrap_or_else(|| PathBuf::from("out")),
            points_per_gap: file.points_per_gap.unwrap_or(DEFAULT_POINTS_PER_GAP),
            history: file.history,
            sweep: file.sweep,
            dump_matrix: file.dump_matrix,
            pairwise: file.pairwise,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, kind: Option<ExperimentKind>) -> Result<ExperimentConfig, RunError> {
        let text = fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        ExperimentConfig::from_toml_str(&text, kind)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.model.validate()?;
        if self.model.length == 0 {
            return Err(RunError::Config("history length must be >= 1".into()));
        }
        if self.model.c == 0.0 && self.model.tau_override.is_none() {
            return Err(RunError::Config(
                "c = 0 has no relaxation time; set model.tau_override".into(),
            ));
        }
        if self.sweep.is_some() && self.kind != ExperimentKind::Sweep {
            return Err(RunError::Config("sweep axes are only valid for kind = sweep".into()));
        }
        if let Some(d) = self.delta_list.iter().find(|d| !(**d > 0.0)) {
            return Err(RunError::Config(format!("delta_list entries must be positive, got {d}")));
        }
        if self.kind == ExperimentKind::Trajectory && self.points_per_gap < 2 {
            return Err(RunError::Config("points_per_gap must be >= 2".into()));
        }
        if let Some(h) = &self.history {
            let label: HistoryLabel = h.parse()?;
            if label.len() != self.model.length {
                return Err(RunError::Config(format!(
                    "history has {} steps but length = {}",
                    label.len(),
                    self.model.length
                )));
            }
        }
        if self.kind == ExperimentKind::Oracle {
            if self.model.dim > ORACLE_MAX_DIM {
                return Err(CoreError::OracleGuard { what: "dimension", value: self.model.dim, limit: ORACLE_MAX_DIM }.into());
            }
            if self.model.length > ORACLE_MAX_LENGTH {
                return Err(CoreError::OracleGuard { what: "history length", value: self.model.length, limit: ORACLE_MAX_LENGTH }.into());
            }
        }
        if let Some(axes) = &self.sweep {
            if axes.splits.iter().flatten().any(|s| !(*s > 0.0 && *s < 1.0)) {
                return Err(RunError::Config("sweep splits must lie strictly between 0 and 1".into()));
            }
            if axes.lengths.iter().flatten().any(|l| *l == 0) {
                return Err(RunError::Config("sweep lengths must be >= 1".into()));
            }
            if axes.dims.iter().flatten().any(|d| *d < 2) {
                return Err(RunError::Config("sweep dims must be >= 2".into()));
            }
        }
        Ok(())
    }
}

/// Model, initial state and schedule of one run, all drawn from the
/// experiment's substreams.
pub struct PreparedRun {
    pub spec: ModelSpec,
    pub hamiltonian: SpectralHamiltonian,
    pub matrix: Option<HermitianMatrix>,
    pub psi0: PureState,
    pub schedule: Schedule,
    /// τ, or the override when one is set.
    pub time_unit: f64,
}

pub fn prepare(spec: &ModelSpec, keep_matrix: bool) -> Result<PreparedRun, RunError> {
    spec.validate()?;
    if spec.dim >= LARGE_DIM {
        let gib = eigenbasis_bytes(spec.dim, spec.coupling_entries == CouplingEntries::Real) as f64 / (1u64 << 30) as f64;
        warn!(
            "D = {} is long-running: eigenbasis alone needs ~{gib:.1} GiB, plus a dense matrix copy during diagonalization",
            spec.dim
        );
    }
    let seed = spec.master_seed;
    let matrix = assemble_hamiltonian(spec, &mut substream(seed, StreamLabel::Hamiltonian))?;
    let lambda = derive_lambda(spec);
    let tau = relaxation_time(spec.dim, spec.delta_eps, lambda).unwrap_or(f64::INFINITY);
    let hamiltonian = SpectralHamiltonian::from_matrix(&matrix, spec.d0, lambda, tau)?;
    let psi0 = haar_state(spec.dim, &mut substream(seed, StreamLabel::InitialState));
    let time_unit = match spec.tau_override {
        Some(t) => t,
        None if tau.is_finite() => tau,
        None => return Err(RunError::Config("zero coupling needs model.tau_override".into())),
    };
    let schedule = sample_schedule(spec, time_unit, &mut substream(seed, StreamLabel::TimeGrid))?;
    Ok(PreparedRun {
        spec: spec.clone(),
        hamiltonian,
        matrix: keep_matrix.then_some(matrix),
        psi0,
        schedule,
        time_unit,
    })
}

/// Scientific notation with 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value).expect("metadata serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Writes the dense Hamiltonian: three little-endian `u64` (D, d0, d1),
/// then the real parts row-major as little-endian `f64`, then the imaginary
/// parts in the same layout when the coupling is complex.
pub fn write_matrix_dump(path: &Path, matrix: &HermitianMatrix, d0: usize) -> Result<(), RunError> {
    let n = matrix.dim;
    let planes = if matrix.real { 1 } else { 2 };
    let mut buf = Vec::with_capacity(24 + 8 * n * n * planes);
    for v in [n as u64, d0 as u64, (n - d0) as u64] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for z in &matrix.data {
        buf.extend_from_slice(&z.re.to_le_bytes());
    }
    if !matrix.real {
        for z in &matrix.data {
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    write_file(path, &buf)
}

/// Renders `profile.csv`.
pub fn profile_csv(stats: &BranchStatistics) -> String {
    let p_max = stats.p_max();
    let mut out = PROFILE_COLUMNS.join(",");
    out.push('\n');
    for n in 0..=stats.length {
        let eps = stats.eps[n].map(fmt_num).unwrap_or_default();
        let z = (n as f64 - stats.n_mean) / stats.n_std;
        let _ = writeln!(
            out,
            "{n},{eps},{},{},{},{},{}",
            fmt_num(stats.q[n]),
            fmt_num(stats.p[n]),
            fmt_num(stats.q[n] / p_max),
            fmt_num(stats.p[n] / p_max),
            fmt_num(z)
        );
    }
    out
}

fn pairwise_csv(pairs: &stats::PairwiseEpsilon) -> String {
    let size = pairs.size();
    let mut out = String::from("m");
    for n in 0..size {
        let _ = write!(out, ",{n}");
    }
    out.push('\n');
    for m in 0..size {
        let _ = write!(out, "{m}");
        for n in 0..size {
            let _ = write!(out, ",{}", pairs.get(m, n).map(fmt_num).unwrap_or_default());
        }
        out.push('\n');
    }
    out
}

/// Provenance written next to every run's numeric output.
#[derive(Clone, Debug, Serialize)]
pub struct RunMetadata {
    pub code_version: &'static str,
    pub csv_schema_version: u32,
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub lambda: f64,
    pub tau: f64,
    pub time_unit: f64,
    pub schedule_gaps: Vec<f64>,
    pub wall_time_seconds: f64,
    pub threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub live: Option<Vec<bool>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<ProfileSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history_sampled: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dead_branch_step: Option<usize>,
}

/// Scalar results of a profile run.
#[derive(Clone, Debug, Serialize)]
pub struct ProfileSummary {
    pub p1: f64,
    pub n_mean: f64,
    pub n_std: f64,
    pub p_max: f64,
    pub tv_distance: f64,
    pub argmin_eps: Option<usize>,
    pub mean_eps_tail: Option<f64>,
    pub live_branches: usize,
    pub born_windows: Vec<BornWindow>,
    /// Largest `|Σ_m q(m) − 1|` seen after any step.
    pub max_weight_drift: f64,
}

pub fn worker_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

fn base_metadata(config: &ExperimentConfig, run: &PreparedRun, started: Instant) -> RunMetadata {
    RunMetadata {
        code_version: env!("CARGO_PKG_VERSION"),
        csv_schema_version: CSV_SCHEMA_VERSION,
        kind: config.kind,
        config: config.clone(),
        master_seed: config.model.master_seed.0,
        lambda: run.hamiltonian.lambda,
        tau: run.hamiltonian.tau,
        time_unit: run.time_unit,
        schedule_gaps: run.schedule.gaps(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        threads: worker_threads(),
        live: None,
        summary: None,
        history: None,
        history_sampled: None,
        dead_branch_step: None,
    }
}

/// In-memory result of [`run_profile`].
pub struct ProfileOutcome {
    pub ensemble: BranchEnsemble,
    pub stats: BranchStatistics,
    pub summary: ProfileSummary,
    pub out_dir: PathBuf,
}

/// Propagates the grouped ensemble and writes `profile.csv` and
/// `meta.json` (plus the optional debug dumps).
pub fn run_profile(config: &ExperimentConfig) -> Result<ProfileOutcome, RunError> {
    config.validate()?;
    let started = Instant::now();
    let out_dir = config.out_dir.clone();
    ensure_dir(&out_dir)?;
    let run = prepare(&config.model, config.dump_matrix)?;
    if let Some(matrix) = &run.matrix {
        write_matrix_dump(&out_dir.join("hamiltonian.bin"), matrix, run.spec.d0)?;
    }
    info!("profile D={} L={} c={} seed={}", run.spec.dim, run.spec.length, run.spec.c, run.spec.master_seed.0);

    let mut max_weight_drift: f64 = 0.0;
    let ensemble = propagate_branches_with(&run.hamiltonian, &run.psi0, &run.schedule, Execution::Parallel, |e| {
        let total: f64 = e.weights().iter().sum();
        max_weight_drift = max_weight_drift.max((total - 1.0).abs());
    })?;
    let p1 = run.spec.p1();
    let stats = stats::summarize(&ensemble, p1, &config.delta_list, DEAD_BRANCH_FLOOR)?;
    if config.pairwise {
        let pairs = stats::pairwise_epsilon(&ensemble, DEAD_BRANCH_FLOOR, Execution::Parallel)?;
        write_file(&out_dir.join("pairwise_eps.csv"), pairwise_csv(&pairs).as_bytes())?;
    }
    write_file(&out_dir.join("profile.csv"), profile_csv(&stats).as_bytes())?;

    let live = stats.live();
    let summary = ProfileSummary {
        p1,
        n_mean: stats.n_mean,
        n_std: stats.n_std,
        p_max: stats.p_max(),
        tv_distance: stats.tv_distance,
        argmin_eps: stats.argmin_eps(),
        mean_eps_tail: stats.mean_eps_tail(),
        live_branches: live.iter().filter(|l| **l).count(),
        born_windows: stats.born_windows.clone(),
        max_weight_drift,
    };
    let mut meta = base_metadata(config, &run, started);
    meta.live = Some(live);
    meta.summary = Some(summary.clone());
    write_json(&out_dir.join("meta.json"), &meta)?;
    Ok(ProfileOutcome { ensemble, stats, summary, out_dir })
}

/// In-memory result of [`run_trajectory`].
pub struct TrajectoryOutcome {
    pub history: HistoryLabel,
    pub series: Vec<crate::branching::TrajectoryPoint>,
    pub schedule: Schedule,
    pub tau: f64,
}

/// Follows one branch and writes `trajectory.csv` and `meta.json`.
///
/// A dead branch aborts the run after recording the failing step in
/// `meta.json`.
pub fn run_trajectory(config: &ExperimentConfig) -> Result<TrajectoryOutcome, RunError> {
    config.validate()?;
    let started = Instant::now();
    let out_dir = &config.out_dir;
    ensure_dir(out_dir)?;
    let run = prepare(&config.model, config.dump_matrix)?;
    if let Some(matrix) = &run.matrix {
        write_matrix_dump(&out_dir.join("hamiltonian.bin"), matrix, run.spec.d0)?;
    }
    let (history, sampled) = match &config.history {
        Some(text) => (text.parse::<HistoryLabel>()?, false),
        None => {
            let mut stream = substream(config.model.master_seed, StreamLabel::HistoryPick);
            match sample_history(&run.hamiltonian, &run.psi0, &run.schedule, &mut stream) {
                Ok(h) => (h, true),
                Err(e) => {
                    let mut meta = base_metadata(config, &run, started);
                    if let CoreError::DeadBranch { step, .. } = e {
                        meta.dead_branch_step = Some(step);
                    }
                    write_json(&out_dir.join("meta.json"), &meta)?;
                    return Err(e.into());
                }
            }
        }
    };
    let mut meta = base_metadata(config, &run, started);
    meta.history = Some(history.to_string());
    meta.history_sampled = Some(sampled);
    let series = match conditional_trajectory(&run.hamiltonian, &run.psi0, &run.schedule, &history, config.points_per_gap) {
        Ok(s) => s,
        Err(e) => {
            if let CoreError::DeadBranch { step, .. } = e {
                meta.dead_branch_step = Some(step);
            }
            meta.wall_time_seconds = started.elapsed().as_secs_f64();
            write_json(&out_dir.join("meta.json"), &meta)?;
            return Err(e.into());
        }
    };
    let mut csv = TRAJECTORY_COLUMNS.join(",");
    csv.push('\n');
    for p in &series {
        let _ = writeln!(csv, "{},{}", fmt_num(p.t), fmt_num(p.p1));
    }
    write_file(&out_dir.join("trajectory.csv"), csv.as_bytes())?;
    meta.wall_time_seconds = started.elapsed().as_secs_f64();
    write_json(&out_dir.join("meta.json"), &meta)?;
    Ok(TrajectoryOutcome {
        history,
        series,
        schedule: run.schedule,
        tau: run.hamiltonian.tau,
    })
}

/// Summary of the fine-grained `ε(x, y)` between histories with different
/// numbers of ones.
#[derive(Clone, Debug, Default, Serialize)]
pub struct FineEpsilonSummary {
    pub pairs: usize,
    pub live_pairs: usize,
    pub max: Option<f64>,
    pub min: Option<f64>,
    pub mean: Option<f64>,
    /// Live pairs with `ε(x, y) > 0.99`.
    pub near_saturation: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct OverlapResidual {
    pub m: usize,
    pub n: usize,
    pub residual: f64,
}

/// Closed-form check available when the blocks are uncoupled: the
/// population of each block is frozen, so only `m = 0` and `m = L` carry
/// weight.
#[derive(Clone, Debug, Serialize)]
pub struct ZeroCouplingCheck {
    pub expected_q: Vec<f64>,
    pub max_residual: f64,
}

/// Contents of `oracle_report.json`.
#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub code_version: &'static str,
    pub config: ExperimentConfig,
    pub dim: usize,
    pub length: usize,
    pub master_seed: u64,
    pub lambda: f64,
    pub tau: f64,
    pub schedule_gaps: Vec<f64>,
    /// Largest componentwise `|ψ(m) − Σ_{n_1(x)=m} ψ(x)|`.
    pub max_grouping_discrepancy: f64,
    /// Largest of `‖Σ_m ψ(m) − U ψ0‖` and `‖Σ_x ψ(x) − U ψ0‖`.
    pub max_completeness_residual: f64,
    pub max_overlap_residual: f64,
    pub overlap_residuals: Vec<OverlapResidual>,
    pub grouped_q: Vec<f64>,
    pub fine_q_grouped: Vec<f64>,
    /// Grouped `ε(m, n)`, row-major; `null` for dead branches.
    pub grouped_pairwise_epsilon: Vec<Vec<Option<f64>>>,
    pub fine_epsilon: FineEpsilonSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_coupling: Option<ZeroCouplingCheck>,
    pub wall_time_seconds: f64,
}

/// Cross-checks the grouped recursion against full history enumeration
/// and writes `oracle_report.json`.
pub fn run_oracle(config: &ExperimentConfig) -> Result<OracleReport, RunError> {
    config.validate()?;
    let started = Instant::now();
    ensure_dir(&config.out_dir)?;
    let run = prepare(&config.model, false)?;
    let ham = &run.hamiltonian;
    let length = run.spec.length;

    let ensemble = propagate_branches_with(ham, &run.psi0, &run.schedule, Execution::Parallel, |_| {})?;
    let fine = brute_force_branches(ham, &run.psi0, &run.schedule)?;
    let unitary = run
        .schedule
        .gaps()
        .into_iter()
        .fold(run.psi0.clone(), |s, g| evolve(ham, &s, g));

    let max_grouping_discrepancy = (0..=length)
        .map(|m| linalg::max_abs_diff(ensemble.state(m), &fine.grouped(m)))
        .fold(0.0, f64::max);
    let max_completeness_residual = linalg::distance(&ensemble.sum(), &unitary.amplitudes)
        .max(linalg::distance(&fine.sum(), &unitary.amplitudes));

    let cells: Vec<(usize, usize)> = (0..=length).flat_map(|m| (0..=length).map(move |n| (m, n))).collect();
    let checks = exec::map_range(Execution::Parallel, cells.len(), |i| {
        let (m, n) = cells[i];
        overlap_identity_check(&fine, &ensemble, m, n)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let mut overlap_residuals = Vec::with_capacity(cells.len());
    let mut fine_eps = Vec::new();
    let mut pair_count = 0;
    for (&(m, n), check) in cells.iter().zip(&checks) {
        overlap_residuals.push(OverlapResidual { m, n, residual: check.discrepancy });
        // each unordered cross-group pair once
        if m < n {
            pair_count += check.pairs.len();
            fine_eps.extend(check.pairs.iter().filter_map(|p| p.epsilon));
        }
    }
    let max_overlap_residual = overlap_residuals.iter().map(|r| r.residual).fold(0.0, f64::max);
    let fine_epsilon = FineEpsilonSummary {
        pairs: pair_count,
        live_pairs: fine_eps.len(),
        max: fine_eps.iter().copied().reduce(f64::max),
        min: fine_eps.iter().copied().reduce(f64::min),
        mean: (!fine_eps.is_empty()).then(|| fine_eps.iter().sum::<f64>() / fine_eps.len() as f64),
        near_saturation: fine_eps.iter().filter(|e| **e > 0.99).count(),
    };

    let pairs = stats::pairwise_epsilon(&ensemble, DEAD_BRANCH_FLOOR, Execution::Parallel)?;
    let grouped_pairwise_epsilon = (0..=length).map(|m| (0..=length).map(|n| pairs.get(m, n)).collect()).collect();
    let grouped_q = ensemble.weights();
    let fine_q_grouped = (0..=length).map(|m| linalg::norm_sqr(&fine.grouped(m))).collect();

    let zero_coupling = (run.spec.c == 0.0).then(|| {
        let d0 = run.spec.d0;
        let mut expected_q = vec![0.0; length + 1];
        expected_q[0] = linalg::norm_sqr(&run.psi0.amplitudes[..d0]);
        expected_q[length] += linalg::norm_sqr(&run.psi0.amplitudes[d0..]);
        let max_residual = expected_q
            .iter()
            .zip(&grouped_q)
            .map(|(a, b): (&f64, &f64)| (a - b).abs())
            .fold(0.0, f64::max);
        ZeroCouplingCheck { expected_q, max_residual }
    });

    let report = OracleReport {
        code_version: env!("CARGO_PKG_VERSION"),
        config: config.clone(),
        dim: run.spec.dim,
        length,
        master_seed: run.spec.master_seed.0,
        lambda: ham.lambda,
        tau: ham.tau,
        schedule_gaps: run.schedule.gaps(),
        max_grouping_discrepancy,
        max_completeness_residual,
        max_overlap_residual,
        overlap_residuals,
        grouped_q,
        fine_q_grouped,
        grouped_pairwise_epsilon,
        fine_epsilon,
        zero_coupling,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    write_json(&config.out_dir.join("oracle_report.json"), &report)?;
    Ok(report)
}

/// One point of a sweep grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub index: usize,
    pub dim: usize,
    pub length: usize,
    pub c: f64,
    /// `d1 / D` requested for this point.
    pub split: f64,
    pub model: ModelSpec,
    pub dir_name: String,
}

/// Expands the sweep axes around the base model, in `D, L, c, split`
/// lexicographic order. Each point gets its own seed derived from the
/// master seed and its grid coordinates.
pub fn sweep_points(config: &ExperimentConfig) -> Vec<SweepPoint> {
    let base = &config.model;
    let axes = config.sweep.clone().unwrap_or_default();
    let dims = axes.dims.unwrap_or_else(|| vec![base.dim]);
    let lengths = axes.lengths.unwrap_or_else(|| vec![base.length]);
    let couplings = axes.couplings.unwrap_or_else(|| vec![base.c]);
    let splits = axes.splits.unwrap_or_else(|| vec![base.p1()]);
    let mut points = Vec::new();
    for &dim in &dims {
        for &length in &lengths {
            for &c in &couplings {
                for &split in &splits {
                    let d1 = ((dim as f64 * split).round() as usize).clamp(1, dim - 1);
                    let mut model = base.clone();
                    model.dim = dim;
                    model.d1 = d1;
                    model.d0 = dim - d1;
                    model.length = length;
                    model.c = c;
                    if !config.tau_rescale_explicit {
                        model.tau_rescale = default_tau_rescale(c);
                    }
                    model.master_seed = base
                        .master_seed
                        .derive(&[dim as u64, length as u64, c.to_bits(), split.to_bits()]);
                    let index = points.len();
                    points.push(SweepPoint {
                        index,
                        dim,
                        length,
                        c,
                        split,
                        model,
                        dir_name: format!("point_{index:03}_D{dim}_L{length}_c{c}_s{split}"),
                    });
                }
            }
        }
    }
    points
}

/// One row of `aggregate.csv`.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub summary: Option<ProfileSummary>,
    pub error: Option<String>,
}

#[derive(Serialize)]
struct SweepMetadata<'a> {
    code_version: &'static str,
    csv_schema_version: u32,
    config: &'a ExperimentConfig,
    points: Vec<&'a SweepPoint>,
    failures: Vec<(usize, &'a str)>,
    wall_time_seconds: f64,
    threads: usize,
}

/// Runs a profile at every grid point and writes `aggregate.csv`. Failed
/// points are recorded and the sweep carries on.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>, RunError> {
    config.validate()?;
    let started = Instant::now();
    ensure_dir(&config.out_dir)?;
    let points = sweep_points(config);
    let rows = exec::map_range(Execution::Parallel, points.len(), |i| {
        let point = points[i].clone();
        let mut point_config = config.clone();
        point_config.kind = ExperimentKind::Profile;
        point_config.sweep = None;
        point_config.model = point.model.clone();
        point_config.out_dir = config.out_dir.join(&point.dir_name);
        match run_profile(&point_config) {
            Ok(outcome) => SweepRow { point, summary: Some(outcome.summary), error: None },
            Err(e) => {
                warn!("sweep point {} failed: {e}", point.dir_name);
                SweepRow { point, summary: None, error: Some(e.to_string()) }
            }
        }
    });
    write_file(&config.out_dir.join("aggregate.csv"), aggregate_csv(&rows, &config.delta_list).as_bytes())?;
    let meta = SweepMetadata {
        code_version: env!("CARGO_PKG_VERSION"),
        csv_schema_version: CSV_SCHEMA_VERSION,
        config,
        points: rows.iter().map(|r| &r.point).collect(),
        failures: rows
            .iter()
            .filter_map(|r| r.error.as_deref().map(|e| (r.point.index, e)))
            .collect(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        threads: worker_threads(),
    };
    write_json(&config.out_dir.join("meta.json"), &meta)?;
    Ok(rows)
}

/// Header: `D,L,c,split,tv_distance,argmin_eps,mean_eps_tail`, then
/// `born_incoherent_<δ>,born_coherent_<δ>` per window width, then `status`.
pub fn aggregate_csv(rows: &[SweepRow], deltas: &[f64]) -> String {
    let mut out = String::from("D,L,c,split,tv_distance,argmin_eps,mean_eps_tail");
    for d in deltas {
        let _ = write!(out, ",born_incoherent_{d},born_coherent_{d}");
    }
    out.push_str(",status\n");
    for row in rows {
        let p = &row.point;
        let _ = write!(out, "{},{},{},{}", p.dim, p.length, fmt_num(p.c), fmt_num(p.split));
        match &row.summary {
            Some(s) => {
                let _ = write!(
                    out,
                    ",{},{},{}",
                    fmt_num(s.tv_distance),
                    s.argmin_eps.map(|n| n.to_string()).unwrap_or_default(),
                    s.mean_eps_tail.map(fmt_num).unwrap_or_default()
                );
                for w in &s.born_windows {
                    let _ = write!(out, ",{},{}", fmt_num(w.incoherent), fmt_num(w.coherent));
                }
                out.push_str(",ok\n");
            }
            None => {
                out.push_str(",,,");
                for _ in deltas {
                    out.push_str(",,");
                }
                let msg = row.error.as_deref().unwrap_or("failed").replace([',', '\n'], ";");
                let _ = writeln!(out, ",error: {msg}");
            }
        }
    }
    out
}
