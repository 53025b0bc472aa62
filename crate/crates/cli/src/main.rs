//! `katolab` command-line front end.
//!
//! Exit codes: 0 when every suite passes, 1 when an assertion fails (the full
//! report is still written), 2 for configuration, input or output errors.

use clap::{Args, Parser, Subcommand};
use katolab::coefficients::{Family, GeneratorSpec};
use katolab::lattice::GridSpec;
use katolab::report::{
    envelope_from_json, resolve_workers, run_with_workers, sweep, write_outputs, ExperimentConfig, Format, Suite,
    SweepReport,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "katolab", version, about = "Verification suites for parabolic operators on a space-time lattice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run verification suites and write the report.
    Verify(RunArgs),
    /// Run the suites once per coefficient magnitude.
    /// `--kappa` takes a comma-separated list here, for example `0.25,0.5,1`.
    Sweep(RunArgs),
    /// Compare the quadrature square root with the dense oracle.
    SqrtCompare(RunArgs),
    /// Re-emit a JSON report in other formats.
    Report {
        /// JSON report written by `verify` or `sqrt-compare`.
        #[arg(long)]
        input: PathBuf,
        /// Output path prefix.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "csv,plotdata")]
        format: Vec<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Suite to run, repeatable. Replaces the configured list.
    #[arg(long = "suite")]
    suites: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path prefix.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Lattice as `NxNxNt` with one `N` per spatial axis, for example `16x16x32`.
    #[arg(long)]
    grid: Option<String>,
    /// Coefficient family, for example `checkerboard`.
    #[arg(long)]
    family: Option<String>,
    /// Coefficient magnitude. `sweep` takes a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    kappa: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "json,csv,plotdata")]
    format: Vec<String>,
}

/// A failure with its exit code.
struct Failure(u8, String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(2, e.to_string())
    }
}

fn parse_grid(text: &str, base: &GridSpec) -> Result<GridSpec, Failure> {
    let parts: Vec<usize> = text
        .split(['x', 'X', '×'])
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure(2, format!("grid `{text}` is not of the form NxNxNt")))?;
    if parts.len() < 2 {
        return Err(Failure(2, format!("grid `{text}` needs at least one spatial axis and time")));
    }
    let (space, nt) = parts.split_at(parts.len() - 1);
    if space.iter().any(|&n| n != space[0]) {
        return Err(Failure(2, format!("grid `{text}` must have equal spatial axes")));
    }
    Ok(GridSpec::new(space.len(), space[0], nt[0], base.lx, base.lt)?)
}

fn parse_family(name: &str) -> Result<Family, Failure> {
    Family::ALL
        .into_iter()
        .find(|f| f.name() == name)
        .ok_or_else(|| Failure(2, format!("unknown coefficient family `{name}`")))
}

fn parse_formats(names: &[String]) -> Result<Vec<Format>, Failure> {
    Ok(names.iter().map(|s| Format::parse(s.trim())).collect::<Result<_, _>>()?)
}

/// The configuration file, or the default one, with the flag overrides applied.
fn load_config(a: &RunArgs, default_suites: &[Suite]) -> Result<ExperimentConfig, Failure> {
    let mut c = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure(2, format!("{}: {e}", p.display())))?;
            serde_json::from_str::<ExperimentConfig>(&text).map_err(|e| Failure(2, format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::new(
            GridSpec::unit(2, 16, 32)?,
            GeneratorSpec::new(Family::Identity, 0.0, 0),
            default_suites.to_vec(),
        ),
    };
    if !a.suites.is_empty() {
        c.suites = a.suites.iter().map(|s| Suite::parse(s)).collect::<Result<_, _>>()?;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(o) = &a.out {
        c.output = o.to_string_lossy().into_owned();
    }
    if let Some(g) = &a.grid {
        c.grid = parse_grid(g, &c.grid)?;
    }
    if let Some(f) = &a.family {
        c.coefficients.family = parse_family(f)?;
    }
    if let [k] = a.kappa[..] {
        c.coefficients.magnitude = k;
    }
    c.validate()?;
    Ok(c)
}

fn summarize(env: &katolab::report::ReportEnvelope) {
    for s in &env.suites {
        let failed = s.assertions.iter().filter(|a| !a.verdict).count();
        let note = s.message.as_deref().map(|m| format!(" ({m})")).unwrap_or_default();
        eprintln!("{:<12} {:?}: {} assertions, {failed} failed{note}", s.suite.name(), s.status, s.assertions.len());
    }
}

/// Runs the configured suites, or only `forced` when given.
fn verify(a: &RunArgs, forced: Option<Suite>) -> Result<u8, Failure> {
    if a.kappa.len() > 1 {
        return Err(Failure(2, "--kappa takes one magnitude outside sweep".into()));
    }
    let mut c = load_config(a, &Suite::ALL)?;
    if let Some(s) = forced {
        c.suites = vec![s];
    }
    let formats = parse_formats(&a.format)?;
    let workers = resolve_workers(&c)?;
    let (env, timing) = run_with_workers(&c, workers)?;
    let paths = write_outputs(&env, Some(&timing), Path::new(&c.output), &formats)?;
    summarize(&env);
    if let Some(p) = paths.json {
        eprintln!("report written to {}", p.display());
    }
    Ok(if env.passed() { 0 } else { 1 })
}

fn run_sweep(a: &RunArgs) -> Result<u8, Failure> {
    if a.kappa.is_empty() {
        return Err(Failure(2, "sweep needs --kappa with at least one magnitude".into()));
    }
    let c = load_config(a, &[Suite::Carleson])?;
    let workers = resolve_workers(&c)?;
    let (rep, timing): (SweepReport, _) = sweep(&c, &a.kappa, workers)?;
    let prefix = PathBuf::from(&c.output);
    let mut s = prefix.as_os_str().to_owned();
    s.push(".sweep.json");
    std::fs::write(&s, serde_json::to_string_pretty(&rep)? + "\n")?;
    let mut t = prefix.as_os_str().to_owned();
    t.push(".timing.json");
    std::fs::write(&t, serde_json::to_string_pretty(&timing)?)?;
    for (k, env) in rep.magnitudes.iter().zip(&rep.envelopes) {
        eprintln!("kappa {k}: {}", if env.passed() { "passed" } else { "failed" });
    }
    eprintln!("sweep written to {}", PathBuf::from(s).display());
    Ok(if rep.passed() { 0 } else { 1 })
}

fn rerender(input: &Path, out: &Path, format: &[String]) -> Result<u8, Failure> {
    let text = std::fs::read_to_string(input).map_err(|e| Failure(2, format!("{}: {e}", input.display())))?;
    let env = envelope_from_json(&text)?;
    write_outputs(&env, None, out, &parse_formats(format)?)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Verify(a) => verify(a, None),
        Command::Sweep(a) => run_sweep(a),
        Command::SqrtCompare(a) => verify(a, Some(Suite::SqrtOracle)),
        Command::Report { input, out, format } => rerender(input, out, format),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
