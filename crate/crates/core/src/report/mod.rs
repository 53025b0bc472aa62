//! Experiment configuration, suite orchestration and report envelopes.
//!
//! A report is a pure function of its configuration: suites run in declared
//! order, every reduction is ordered, and wall-clock timings live in a sidecar
//! file so the envelope itself is bitwise reproducible.

mod emit;
mod suites;

pub use emit::{
    envelope_from_json, envelope_to_json, plot_rows, read_csv_outputs, read_csv_rows, read_plot_rows,
    rows_from_envelope, suites_from_rows, write_csv_rows, write_outputs, write_plot_rows, CsvRow, Format, OutputPaths,
    PlotRow, SuiteTiming, Timing, TIMING_SCHEMA,
};
pub use suites::{
    kato_samples, ACCRETIVITY_SLACK, D_REAL_TOL, EPS_STABILITY, HALVING_WINDOW, ORACLE_RESIDUAL, ORACLE_TOL,
    W_STABILITY,
};

use crate::coefficients::GeneratorSpec;
use crate::error::{Error, Result};
use crate::lattice::GridSpec;
use crate::offdiag::DecayRow;
use crate::resolvent::SolverConfig;
use crate::sqrt::QuadratureSpec;
use serde::{Deserialize, Serialize};
use std::time::Instant;

pub const REPORT_SCHEMA: &str = "katolab.report/v1";
pub const CONFIG_SCHEMA: &str = "katolab.config/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Accretivity,
    Resolvent,
    Lp,
    Offdiag,
    Carleson,
    Tb,
    Kato,
    SqrtOracle,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Accretivity,
        Suite::Resolvent,
        Suite::Lp,
        Suite::Offdiag,
        Suite::Carleson,
        Suite::Tb,
        Suite::Kato,
        Suite::SqrtOracle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Accretivity => "accretivity",
            Suite::Resolvent => "resolvent",
            Suite::Lp => "lp",
            Suite::Offdiag => "offdiag",
            Suite::Carleson => "carleson",
            Suite::Tb => "tb",
            Suite::Kato => "kato",
            Suite::SqrtOracle => "sqrt-oracle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| Error::UnknownSuite(s.to_string()))
    }
}

/// Sizes of the per-suite sample sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteParams {
    /// Random fields for the accretivity and resolvent suites.
    pub samples: usize,
    /// Random band-limited fields for the Kato suite, on top of the pure modes.
    pub kato_samples: usize,
    /// Nodes per decade of the λ-grids of the lp, carleson and tb suites.
    pub lambda_per_decade: usize,
    /// Largest annulus index of the off-diagonal monotonicity tables.
    pub k_max: usize,
    /// Largest annulus index of the off-diagonal decay fit.
    pub fit_k_max: usize,
    /// Test-function smoothing of the tb suite.
    pub tb_epsilon: f64,
    /// Cubes examined per scale by the tb reduction.
    pub tb_cubes_per_scale: usize,
    /// Random vectors compared by the sqrt-oracle suite.
    pub oracle_samples: usize,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            samples: 20,
            kato_samples: 8,
            lambda_per_decade: 16,
            k_max: 2,
            fit_k_max: 3,
            tb_epsilon: 0.2,
            tb_cubes_per_scale: 64,
            oracle_samples: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "config_schema")]
    pub schema: String,
    pub grid: GridSpec,
    pub coefficients: GeneratorSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: String,
    /// Worker threads, overridden by `KATOLAB_WORKERS`. Never affects results.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub params: SuiteParams,
}

fn config_schema() -> String {
    CONFIG_SCHEMA.to_string()
}

fn default_output() -> String {
    "katolab-report".to_string()
}

impl ExperimentConfig {
    pub fn new(grid: GridSpec, coefficients: GeneratorSpec, suites: Vec<Suite>) -> Self {
        Self {
            schema: config_schema(),
            grid,
            coefficients,
            solver: SolverConfig::default(),
            quadrature: QuadratureSpec::default(),
            suites,
            seed: 0,
            output: default_output(),
            workers: None,
            params: SuiteParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::Malformed(format!("unknown config schema {}", self.schema)));
        }
        self.grid.validate()?;
        self.coefficients.validate(&self.grid)?;
        self.solver.validate()?;
        self.quadrature.validate()?;
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter("workers must be positive".into()));
        }
        let p = &self.params;
        if p.samples == 0 || p.lambda_per_decade == 0 || p.tb_cubes_per_scale == 0 || p.oracle_samples == 0 {
            return Err(Error::InvalidParameter("suite sample sizes must be positive".into()));
        }
        if p.k_max < 2 || p.fit_k_max < 3 {
            return Err(Error::InvalidParameter("need k_max >= 2 and fit_k_max >= 3".into()));
        }
        if !(p.tb_epsilon > 0.0 && p.tb_epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!("tb_epsilon {} outside (0, 1)", p.tb_epsilon)));
        }
        for (i, s) in self.suites.iter().enumerate() {
            if self.suites[..i].contains(s) {
                return Err(Error::InvalidParameter(format!("suite {} listed twice", s.name())));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// An asserted inequality `lhs ≤ rhs + tolerance` or `lhs ≥ rhs − tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub relation: Relation,
    #[serde(with = "crate::float_serde")]
    pub lhs: f64,
    #[serde(with = "crate::float_serde")]
    pub rhs: f64,
    #[serde(with = "crate::float_serde")]
    pub tolerance: f64,
    pub verdict: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Le,
    Ge,
}

impl Assertion {
    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let verdict = lhs <= rhs + tolerance;
        Self { name: name.into(), relation: Relation::Le, lhs, rhs, tolerance, verdict }
    }

    pub fn ge(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let verdict = lhs >= rhs - tolerance;
        Self { name: name.into(), relation: Relation::Ge, lhs, rhs, tolerance, verdict }
    }

    /// `|lhs − rhs| ≤ tolerance`, stored as two one-sided assertions.
    pub fn within(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> [Self; 2] {
        [Self::le(format!("{name}/upper"), lhs, rhs, tolerance), Self::ge(format!("{name}/lower"), lhs, rhs, tolerance)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub name: String,
    #[serde(with = "crate::float_serde")]
    pub value: f64,
}

/// Plot-ready `(x, y)` data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    #[serde(with = "crate::float_serde::vec")]
    pub x: Vec<f64>,
    #[serde(with = "crate::float_serde::vec")]
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Passed,
    Failed,
    Skipped,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub status: Status,
    /// Why the suite errored or was skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub measurements: Vec<Measurement>,
    pub assertions: Vec<Assertion>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<Series>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decay_rows: Vec<DecayRow>,
}

impl SuiteResult {
    fn new(suite: Suite) -> Self {
        Self {
            suite,
            status: Status::Passed,
            message: None,
            measurements: Vec::new(),
            assertions: Vec::new(),
            series: Vec::new(),
            decay_rows: Vec::new(),
        }
    }

    pub(crate) fn measure(&mut self, name: impl Into<String>, value: f64) {
        self.measurements.push(Measurement { name: name.into(), value });
    }

    pub(crate) fn assert(&mut self, a: Assertion) {
        self.assertions.push(a);
    }

    pub(crate) fn series(&mut self, name: impl Into<String>, x: Vec<f64>, y: Vec<f64>) {
        self.series.push(Series { name: name.into(), x, y });
    }

    fn finish(mut self) -> Self {
        if self.status == Status::Passed && self.assertions.iter().any(|a| !a.verdict) {
            self.status = Status::Failed;
        }
        self
    }

    pub fn passed(&self) -> bool {
        matches!(self.status, Status::Passed | Status::Skipped)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub crate_version: String,
    pub grid: GridSpec,
    pub dof: usize,
    pub coefficient_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEnvelope {
    pub schema: String,
    pub config: ExperimentConfig,
    pub environment: Environment,
    pub suites: Vec<SuiteResult>,
}

impl ReportEnvelope {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteResult::passed)
    }

    pub fn suite(&self, s: Suite) -> Option<&SuiteResult> {
        self.suites.iter().find(|r| r.suite == s)
    }
}

/// Runs the configured suites in order. Suite errors become suite results.
pub fn run(config: &ExperimentConfig) -> Result<(ReportEnvelope, Timing)> {
    config.validate()?;
    let mut suites = Vec::with_capacity(config.suites.len());
    let mut timing = Timing::default();
    for &s in &config.suites {
        let start = Instant::now();
        let res = match suites::run_suite(s, config) {
            Ok(r) => r.finish(),
            Err(e) => {
                let mut r = SuiteResult::new(s);
                r.status = if matches!(e, Error::SizeCap { .. }) { Status::Skipped } else { Status::Error };
                r.message = Some(e.to_string());
                r
            }
        };
        timing.push(s, start.elapsed().as_secs_f64());
        suites.push(res);
    }
    let label = crate::coefficients::generate(&config.coefficients, &config.grid)?.label;
    let env = Environment {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        grid: config.grid,
        dof: config.grid.len(),
        coefficient_label: label,
    };
    Ok((ReportEnvelope { schema: REPORT_SCHEMA.to_string(), config: config.clone(), environment: env, suites }, timing))
}

/// `run` on a dedicated pool of `workers` threads.
pub fn run_with_workers(config: &ExperimentConfig, workers: usize) -> Result<(ReportEnvelope, Timing)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let (env, mut timing) = pool.install(|| run(config))?;
    timing.workers = workers.max(1);
    Ok((env, timing))
}

/// Worker count from `KATOLAB_WORKERS`, else the config, else the machine.
pub fn resolve_workers(config: &ExperimentConfig) -> Result<usize> {
    match std::env::var("KATOLAB_WORKERS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w > 0)
            .ok_or_else(|| Error::InvalidParameter(format!("KATOLAB_WORKERS={v} is not a positive integer"))),
        Err(_) => Ok(config.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))),
    }
}

/// One envelope per coefficient magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema: String,
    pub magnitudes: Vec<f64>,
    pub envelopes: Vec<ReportEnvelope>,
    /// Carleson suprema non-decreasing in the magnitude, one per adjacent pair.
    pub assertions: Vec<Assertion>,
}

pub const SWEEP_SCHEMA: &str = "katolab.sweep/v1";

/// Runs `config` once per magnitude, in increasing order.
pub fn sweep(config: &ExperimentConfig, magnitudes: &[f64], workers: usize) -> Result<(SweepReport, Timing)> {
    if magnitudes.is_empty() {
        return Err(Error::InvalidParameter("empty magnitude list".into()));
    }
    let mut sorted = magnitudes.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut envelopes = Vec::with_capacity(sorted.len());
    let mut timing = Timing { workers, ..Timing::default() };
    for &m in &sorted {
        let mut c = config.clone();
        c.coefficients.magnitude = m;
        let (env, t) = run_with_workers(&c, workers)?;
        timing.suites.extend(t.suites);
        envelopes.push(env);
    }
    let mut rep =
        SweepReport { schema: SWEEP_SCHEMA.to_string(), magnitudes: sorted, envelopes, assertions: Vec::new() };
    let sups = rep.carleson_suprema();
    for (k, w) in sups.windows(2).enumerate() {
        rep.assertions.push(Assertion::ge(format!("carleson_monotone/{k}"), w[1], w[0], 1e-12 * w[0].abs()));
    }
    Ok((rep, timing))
}

impl SweepReport {
    /// Carleson suprema per magnitude, where the suite ran.
    pub fn carleson_suprema(&self) -> Vec<f64> {
        self.envelopes
            .iter()
            .filter_map(|e| e.suite(Suite::Carleson))
            .filter_map(|s| s.measurements.iter().find(|m| m.name == "supremum").map(|m| m.value))
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.envelopes.iter().all(ReportEnvelope::passed) && self.assertions.iter().all(|a| a.verdict)
    }
}
