//! Report emission: the JSON envelope, flattened CSV rows, plot series and the
//! decay table, plus the timing sidecar.

use super::{Assertion, Measurement, Relation, ReportEnvelope, Series, Status, Suite, SuiteResult, REPORT_SCHEMA};
use crate::error::{Error, Result};
use crate::offdiag::{read_decay_csv, write_decay_csv, DecayRow};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

pub const TIMING_SCHEMA: &str = "katolab.timing/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Plotdata,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Json, Format::Csv, Format::Plotdata];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "plotdata" => Ok(Format::Plotdata),
            _ => Err(Error::InvalidParameter(format!("unknown format `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteTiming {
    pub suite: Suite,
    pub seconds: f64,
}

/// Wall-clock data kept out of the envelope so that the envelope is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub schema: String,
    pub workers: usize,
    pub suites: Vec<SuiteTiming>,
}

impl Default for Timing {
    fn default() -> Self {
        Self { schema: TIMING_SCHEMA.to_string(), workers: 1, suites: Vec::new() }
    }
}

impl Timing {
    pub(crate) fn push(&mut self, suite: Suite, seconds: f64) {
        self.suites.push(SuiteTiming { suite, seconds });
    }

    pub fn total(&self) -> f64 {
        self.suites.iter().map(|s| s.seconds).sum()
    }
}

pub fn envelope_to_json(env: &ReportEnvelope) -> Result<String> {
    Ok(serde_json::to_string_pretty(env)?)
}

pub fn envelope_from_json(text: &str) -> Result<ReportEnvelope> {
    let env: ReportEnvelope = serde_json::from_str(text)?;
    if env.schema != REPORT_SCHEMA {
        return Err(Error::Malformed(format!("unknown report schema {}", env.schema)));
    }
    Ok(env)
}

/// One flattened CSV row. Unused columns stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub suite: Suite,
    /// `status`, `measurement`, `assertion` or `series`.
    pub kind: String,
    pub name: String,
    /// Position within a series.
    pub index: Option<usize>,
    pub x: Option<f64>,
    /// Measured value, assertion left side or series ordinate.
    pub value: Option<f64>,
    pub rhs: Option<f64>,
    pub tolerance: Option<f64>,
    pub relation: Option<Relation>,
    pub verdict: Option<bool>,
    /// Status message of the suite.
    pub text: Option<String>,
}

impl CsvRow {
    fn new(suite: Suite, kind: &str, name: &str) -> Self {
        Self {
            suite,
            kind: kind.to_string(),
            name: name.to_string(),
            index: None,
            x: None,
            value: None,
            rhs: None,
            tolerance: None,
            relation: None,
            verdict: None,
            text: None,
        }
    }
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Passed => "passed",
        Status::Failed => "failed",
        Status::Skipped => "skipped",
        Status::Error => "error",
    }
}

pub fn rows_from_envelope(env: &ReportEnvelope) -> Vec<CsvRow> {
    let mut out = Vec::new();
    for r in &env.suites {
        let s = r.suite;
        out.push(CsvRow { text: r.message.clone(), ..CsvRow::new(s, "status", status_name(r.status)) });
        for m in &r.measurements {
            out.push(CsvRow { value: Some(m.value), ..CsvRow::new(s, "measurement", &m.name) });
        }
        for a in &r.assertions {
            out.push(CsvRow {
                value: Some(a.lhs),
                rhs: Some(a.rhs),
                tolerance: Some(a.tolerance),
                relation: Some(a.relation),
                verdict: Some(a.verdict),
                ..CsvRow::new(s, "assertion", &a.name)
            });
        }
        for ser in &r.series {
            for (i, (x, y)) in ser.x.iter().zip(&ser.y).enumerate() {
                out.push(CsvRow {
                    index: Some(i),
                    x: Some(*x),
                    value: Some(*y),
                    ..CsvRow::new(s, "series", &ser.name)
                });
            }
        }
    }
    out
}

fn missing(what: &str, row: &CsvRow) -> Error {
    Error::Malformed(format!("{} row `{}` lacks {what}", row.kind, row.name))
}

/// Rebuilds the suite results from flattened rows and the decay table.
pub fn suites_from_rows(rows: &[CsvRow], decay: &[DecayRow]) -> Result<Vec<SuiteResult>> {
    let mut out: Vec<SuiteResult> = Vec::new();
    for row in rows {
        if row.kind == "status" {
            let status = match row.name.as_str() {
                "passed" => Status::Passed,
                "failed" => Status::Failed,
                "skipped" => Status::Skipped,
                "error" => Status::Error,
                other => return Err(Error::Malformed(format!("unknown status `{other}`"))),
            };
            let mut r = SuiteResult::new(row.suite);
            r.status = status;
            r.message = row.text.clone();
            out.push(r);
            continue;
        }
        let r = match out.last_mut() {
            Some(r) if r.suite == row.suite => r,
            _ => return Err(Error::Malformed(format!("row `{}` precedes its suite status", row.name))),
        };
        match row.kind.as_str() {
            "measurement" => r
                .measurements
                .push(Measurement { name: row.name.clone(), value: row.value.ok_or_else(|| missing("a value", row))? }),
            "assertion" => r.assertions.push(Assertion {
                name: row.name.clone(),
                relation: row.relation.ok_or_else(|| missing("a relation", row))?,
                lhs: row.value.ok_or_else(|| missing("a value", row))?,
                rhs: row.rhs.ok_or_else(|| missing("a right side", row))?,
                tolerance: row.tolerance.ok_or_else(|| missing("a tolerance", row))?,
                verdict: row.verdict.ok_or_else(|| missing("a verdict", row))?,
            }),
            "series" => {
                let x = row.x.ok_or_else(|| missing("an abscissa", row))?;
                let y = row.value.ok_or_else(|| missing("a value", row))?;
                match r.series.last_mut() {
                    Some(s) if s.name == row.name && row.index == Some(s.x.len()) => {
                        s.x.push(x);
                        s.y.push(y);
                    }
                    _ if row.index == Some(0) => {
                        r.series.push(Series { name: row.name.clone(), x: vec![x], y: vec![y] })
                    }
                    _ => return Err(Error::Malformed(format!("series `{}` out of order", row.name))),
                }
            }
            other => return Err(Error::Malformed(format!("unknown row kind `{other}`"))),
        }
    }
    if !decay.is_empty() {
        match out.iter_mut().find(|r| r.suite == Suite::Offdiag) {
            Some(r) => r.decay_rows = decay.to_vec(),
            None => return Err(Error::Malformed("decay rows without an offdiag suite".into())),
        }
    }
    Ok(out)
}

pub fn write_csv_rows<W: Write>(w: W, rows: &[CsvRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv_rows<R: Read>(r: R) -> Result<Vec<CsvRow>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// One point of a plot series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub suite: Suite,
    pub series: String,
    pub index: usize,
    pub x: f64,
    pub y: f64,
}

pub fn plot_rows(env: &ReportEnvelope) -> Vec<PlotRow> {
    let mut out = Vec::new();
    for r in &env.suites {
        for s in &r.series {
            for (i, (x, y)) in s.x.iter().zip(&s.y).enumerate() {
                out.push(PlotRow { suite: r.suite, series: s.name.clone(), index: i, x: *x, y: *y });
            }
        }
    }
    out
}

pub fn write_plot_rows<W: Write>(w: W, rows: &[PlotRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_plot_rows<R: Read>(r: R) -> Result<Vec<PlotRow>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Files written by [`write_outputs`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputPaths {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub decay_csv: Option<PathBuf>,
    pub plotdata: Option<PathBuf>,
    pub timing: Option<PathBuf>,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `<prefix>.json`, `<prefix>.csv` with `<prefix>.decay.csv`,
/// `<prefix>.plot.csv` and `<prefix>.timing.json` as requested.
pub fn write_outputs(
    env: &ReportEnvelope,
    timing: Option<&Timing>,
    prefix: &Path,
    formats: &[Format],
) -> Result<OutputPaths> {
    let mut paths = OutputPaths::default();
    for f in formats {
        match f {
            Format::Json => {
                let p = with_suffix(prefix, ".json");
                let mut w = create(&p)?;
                w.write_all(envelope_to_json(env)?.as_bytes())?;
                w.write_all(b"\n")?;
                w.flush()?;
                paths.json = Some(p);
            }
            Format::Csv => {
                let p = with_suffix(prefix, ".csv");
                write_csv_rows(create(&p)?, &rows_from_envelope(env))?;
                paths.csv = Some(p);
                let decay: Vec<DecayRow> = env.suites.iter().flat_map(|s| s.decay_rows.iter().cloned()).collect();
                if !decay.is_empty() {
                    let p = with_suffix(prefix, ".decay.csv");
                    write_decay_csv(create(&p)?, &decay)?;
                    paths.decay_csv = Some(p);
                }
            }
            Format::Plotdata => {
                let p = with_suffix(prefix, ".plot.csv");
                write_plot_rows(create(&p)?, &plot_rows(env))?;
                paths.plotdata = Some(p);
            }
        }
    }
    if let Some(t) = timing {
        let p = with_suffix(prefix, ".timing.json");
        let mut w = create(&p)?;
        w.write_all(serde_json::to_string_pretty(t)?.as_bytes())?;
        w.flush()?;
        paths.timing = Some(p);
    }
    Ok(paths)
}

/// Reads back the suites written by the CSV format.
pub fn read_csv_outputs(csv_path: &Path, decay_path: Option<&Path>) -> Result<Vec<SuiteResult>> {
    let rows = read_csv_rows(File::open(csv_path)?)?;
    let decay = match decay_path {
        Some(p) => read_decay_csv(File::open(p)?)?,
        None => Vec::new(),
    };
    suites_from_rows(&rows, &decay)
}
