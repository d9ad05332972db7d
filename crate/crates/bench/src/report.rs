//! Run reports and their CSV/JSON forms.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cardiomech::timestepper::{StepFailure, StepRecord};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

pub const AMG_NOTE: &str = "AMG rows come from a baseline aggregation V-cycle meant for iteration-count comparison; \
     it does not aim at the performance of production AMG libraries.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format '{s}' (expected csv or json)")),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{}: inconsistent report:\n  - {}", path.display(), problems.join("\n  - "))]
    Inconsistent { path: PathBuf, problems: Vec<String> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    pub newton_iters: usize,
    pub gmres_iters: usize,
    /// Mean GMRES iterations per Newton iteration.
    pub mean_gmres: f64,
    pub mean_newton_per_step: f64,
    pub assembly_s: f64,
    pub setup_s: f64,
    pub solve_s: f64,
}

impl RunSummary {
    pub fn from_steps(steps: &[StepRecord]) -> Self {
        let newton_iters: usize = steps.iter().map(|s| s.newton_iters).sum();
        let gmres_iters: usize = steps.iter().map(|s| s.total_gmres).sum();
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            steps: steps.len(),
            newton_iters,
            gmres_iters,
            mean_gmres: ratio(gmres_iters, newton_iters),
            mean_newton_per_step: ratio(newton_iters, steps.len()),
            assembly_s: steps.iter().map(|s| s.times.assembly).sum(),
            setup_s: steps.iter().map(|s| s.times.setup).sum(),
            solve_s: steps.iter().map(|s| s.times.solve).sum(),
        }
    }

    /// Differences in the iteration fields; timings are compared to rounding.
    fn mismatches(&self, other: &Self) -> Vec<String> {
        let mut out = Vec::new();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        if self.steps != other.steps || self.newton_iters != other.newton_iters || self.gmres_iters != other.gmres_iters {
            out.push(format!("counts {self:?} vs recomputed {other:?}"));
        }
        for (name, a, b) in [
            ("mean_gmres", self.mean_gmres, other.mean_gmres),
            ("mean_newton_per_step", self.mean_newton_per_step, other.mean_newton_per_step),
            ("assembly_s", self.assembly_s, other.assembly_s),
            ("setup_s", self.setup_s, other.setup_s),
            ("solve_s", self.solve_s, other.solve_s),
        ] {
            if !close(a, b) {
                out.push(format!("{name} = {a} but the steps give {b}"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub index: usize,
    pub label: String,
    /// Every resolved configuration key of this run.
    pub config: BTreeMap<String, serde_json::Value>,
    pub n_dofs: usize,
    pub n_subdomains: usize,
    pub steps: Vec<StepRecord>,
    pub summary: RunSummary,
    pub failure: Option<StepFailure>,
}

impl RunReport {
    pub fn config_str(&self, key: &str) -> String {
        match self.config.get(key) {
            Some(serde_json::Value::String(s)) => s.clone(),
            Some(v) => v.to_string(),
            None => String::new(),
        }
    }

    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub benchmark: String,
    pub runs: Vec<RunReport>,
    pub note: String,
}

impl BenchReport {
    pub fn new(benchmark: &str) -> Self {
        Self { schema_version: SCHEMA_VERSION, benchmark: benchmark.to_string(), runs: Vec::new(), note: AMG_NOTE.into() }
    }

    pub fn any_failed(&self) -> bool {
        self.runs.iter().any(|r| !r.succeeded())
    }

    /// Recomputes every run summary from its step records.
    pub fn check_consistency(&self) -> Result<(), Vec<String>> {
        let mut problems = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            problems.push(format!("schema version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        for run in &self.runs {
            for m in run.summary.mismatches(&RunSummary::from_steps(&run.steps)) {
                problems.push(format!("run {}: {m}", run.index));
            }
            for s in &run.steps {
                if s.gmres_iters.iter().sum::<usize>() != s.total_gmres || s.gmres_iters.len() != s.newton_iters {
                    problems.push(format!("run {} step {}: per-iteration GMRES counts do not add up", run.index, s.step));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<(), ReportError> {
        let text = serde_json::to_string_pretty(self).map_err(|source| ReportError::Json { path: path.into(), source })?;
        std::fs::write(path, text).map_err(|source| ReportError::Io { path: path.into(), source })
    }

    /// Reads a JSON report and checks its aggregates.
    pub fn read_json(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.into(), source })?;
        let report: Self = serde_json::from_str(&text).map_err(|source| ReportError::Json { path: path.into(), source })?;
        report.check_consistency().map_err(|problems| ReportError::Inconsistent { path: path.into(), problems })?;
        Ok(report)
    }

    /// One row per (run, completed step).
    pub fn write_csv(&self, path: &Path) -> Result<(), ReportError> {
        let file = std::fs::File::create(path).map_err(|source| ReportError::Io { path: path.into(), source })?;
        let mut w = csv::Writer::from_writer(file);
        let csv_err = |source| ReportError::Csv { path: path.into(), source };
        w.write_record(CSV_COLUMNS).map_err(csv_err)?;
        for run in &self.runs {
            let status = if run.succeeded() { "ok" } else { "failed" };
            for s in &run.steps {
                let per_iter: Vec<String> = s.gmres_iters.iter().map(|g| g.to_string()).collect();
                w.write_record([
                    run.index.to_string(),
                    run.label.clone(),
                    self.benchmark.clone(),
                    run.config_str("solver.preconditioner"),
                    run.config_str("bddc.primal"),
                    run.config_str("fe.order"),
                    run.n_dofs.to_string(),
                    run.n_subdomains.to_string(),
                    s.step.to_string(),
                    s.t.to_string(),
                    s.newton_iters.to_string(),
                    s.total_gmres.to_string(),
                    s.mean_gmres().to_string(),
                    per_iter.join(";"),
                    s.times.assembly.to_string(),
                    s.times.setup.to_string(),
                    s.times.solve.to_string(),
                    s.max_displacement.to_string(),
                    run.summary.mean_gmres.to_string(),
                    run.summary.mean_newton_per_step.to_string(),
                    status.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        let mut file = w.into_inner().map_err(|e| ReportError::Io { path: path.into(), source: e.into_error() })?;
        if !self.runs.is_empty() {
            writeln!(file, "# {}", self.note).map_err(|source| ReportError::Io { path: path.into(), source })?;
        }
        Ok(())
    }
}

pub const CSV_COLUMNS: [&str; 21] = [
    "run",
    "label",
    "benchmark",
    "preconditioner",
    "primal",
    "fe_order",
    "n_dofs",
    "n_subdomains",
    "step",
    "t",
    "newton_iters",
    "gmres_total",
    "gmres_mean",
    "gmres_per_newton",
    "assembly_s",
    "setup_s",
    "solve_s",
    "max_displacement",
    "run_mean_gmres",
    "run_mean_newton",
    "status",
];

#[derive(Debug, Clone, PartialEq)]
pub struct CsvCheck {
    pub rows: usize,
    pub runs: usize,
    /// Mean GMRES iterations per Newton iteration, per run in file order.
    pub run_mean_gmres: Vec<(usize, f64)>,
}

/// Reads a CSV report and recomputes the per-step and per-run averages.
pub fn check_csv(path: &Path) -> Result<CsvCheck, ReportError> {
    let csv_err = |source| ReportError::Csv { path: path.into(), source };
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(csv_err)?;
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut problems = Vec::new();
    if header != CSV_COLUMNS {
        problems.push(format!("unexpected columns {header:?}"));
        return Err(ReportError::Inconsistent { path: path.into(), problems });
    }
    let col = |name: &str| CSV_COLUMNS.iter().position(|c| *c == name).unwrap();
    // run -> (newton, gmres, steps, stated mean gmres, stated mean newton)
    let mut runs: BTreeMap<usize, (usize, usize, usize, f64, f64)> = BTreeMap::new();
    let mut order = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        rows += 1;
        let num = |name: &str| -> f64 { rec[col(name)].parse().unwrap_or(f64::NAN) };
        let int = |name: &str| -> Option<usize> { rec[col(name)].parse().ok() };
        let (Some(run), Some(newton), Some(gmres)) = (int("run"), int("newton_iters"), int("gmres_total")) else {
            problems.push(format!("row {}: unreadable counts", i + 1));
            continue;
        };
        let per: Vec<usize> =
            rec[col("gmres_per_newton")].split(';').filter(|s| !s.is_empty()).filter_map(|s| s.parse().ok()).collect();
        if per.len() != newton || per.iter().sum::<usize>() != gmres {
            problems.push(format!("row {}: per-iteration counts do not add up to {gmres} over {newton}", i + 1));
        }
        let mean = if newton == 0 { 0.0 } else { gmres as f64 / newton as f64 };
        if (num("gmres_mean") - mean).abs() > 1e-12 * mean.max(1.0) {
            problems.push(format!("row {}: gmres_mean {} but {gmres}/{newton}", i + 1, num("gmres_mean")));
        }
        let entry = runs.entry(run).or_insert_with(|| {
            order.push(run);
            (0, 0, 0, num("run_mean_gmres"), num("run_mean_newton"))
        });
        entry.0 += newton;
        entry.1 += gmres;
        entry.2 += 1;
        if entry.3 != num("run_mean_gmres") || entry.4 != num("run_mean_newton") {
            problems.push(format!("row {}: run aggregates differ between rows of run {run}", i + 1));
        }
    }
    let mut run_mean_gmres = Vec::new();
    for run in &order {
        let (newton, gmres, steps, stated_g, stated_n) = runs[run];
        let mean_g = if newton == 0 { 0.0 } else { gmres as f64 / newton as f64 };
        let mean_n = newton as f64 / steps as f64;
        if (stated_g - mean_g).abs() > 1e-12 * mean_g.max(1.0) || (stated_n - mean_n).abs() > 1e-12 * mean_n.max(1.0) {
            problems.push(format!("run {run}: stated means ({stated_g}, {stated_n}) but the rows give ({mean_g}, {mean_n})"));
        }
        run_mean_gmres.push((*run, mean_g));
    }
    if problems.is_empty() {
        Ok(CsvCheck { rows, runs: order.len(), run_mean_gmres })
    } else {
        Err(ReportError::Inconsistent { path: path.into(), problems })
    }
}

/// Writes `<dir>/<benchmark>.<format>` and returns its path.
pub fn emit_report(report: &BenchReport, format: Format, dir: &Path) -> Result<PathBuf, ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.into(), source })?;
    let path = dir.join(format!("{}.{format}", report.benchmark));
    match format {
        Format::Csv => report.write_csv(&path)?,
        Format::Json => report.write_json(&path)?,
    }
    Ok(path)
}
