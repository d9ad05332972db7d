//! Turns configurations into solver runs.

use std::collections::BTreeMap;

use cardiomech::mesh::{build_beam_mesh, build_ellipsoid_mesh, partition_rcb, partition_structured, read_mesh};
use cardiomech::timestepper::{run_transient, Problem, StepFailure};
use toml::Value;

use crate::config::{label, BenchConfig, Flat, MeshSpec, PartitionSpec, RunSpec};
use crate::report::{BenchReport, RunReport, RunSummary};

/// Builds the mesh, partition and FE model of one run.
pub fn build_problem(spec: &RunSpec) -> Result<Problem, String> {
    let mesh = match &spec.mesh {
        MeshSpec::Beam { nx, ny, nz } => build_beam_mesh(*nx, *ny, *nz),
        MeshSpec::Ellipsoid { circumferential, transmural, apicobasal, geometry } => {
            build_ellipsoid_mesh(*circumferential, *transmural, *apicobasal, geometry)
        }
        MeshSpec::File(path) => read_mesh(path),
    }
    .map_err(|e| format!("mesh: {e}"))?;
    let part = match spec.partition {
        PartitionSpec::Rcb(n) => partition_rcb(&mesh, n),
        PartitionSpec::Structured([px, py, pz]) => partition_structured(&mesh, px, py, pz),
    }
    .map_err(|e| format!("partition: {e}"))?;
    Problem::new(&mesh, &part, &spec.fem).map_err(|e| format!("model: {e}"))
}

fn to_json(v: &Value) -> serde_json::Value {
    match v {
        Value::String(s) => s.clone().into(),
        Value::Integer(i) => (*i).into(),
        Value::Float(f) => serde_json::Number::from_f64(*f).map_or(serde_json::Value::Null, Into::into),
        Value::Boolean(b) => (*b).into(),
        other => other.to_string().into(),
    }
}

/// Runs one sweep point; failures end up in the report rather than aborting the sweep.
pub fn run_point(index: usize, point: &Flat, config: &BenchConfig) -> RunReport {
    let config_echo: BTreeMap<String, serde_json::Value> = point.iter().map(|(k, v)| (k.clone(), to_json(v))).collect();
    let mut report = RunReport {
        index,
        label: label(point, &config.sweep),
        config: config_echo,
        n_dofs: 0,
        n_subdomains: 0,
        steps: Vec::new(),
        summary: RunSummary::default(),
        failure: None,
    };
    let fail = |message: String| StepFailure { step: 0, t: 0.0, message, history: None };
    let spec = match RunSpec::from_flat(point) {
        Ok(s) => s,
        Err(e) => {
            report.failure = Some(fail(e.to_string()));
            return report;
        }
    };
    let problem = match build_problem(&spec) {
        Ok(p) => p,
        Err(e) => {
            report.failure = Some(fail(e));
            return report;
        }
    };
    report.n_dofs = problem.n_dofs();
    report.n_subdomains = problem.model.n_subdomains();
    match run_transient(&problem, &spec.newton, spec.dt, spec.steps) {
        Ok(run) => {
            report.summary = RunSummary::from_steps(&run.steps);
            report.steps = run.steps;
            report.failure = run.failure;
        }
        Err(e) => report.failure = Some(fail(e.to_string())),
    }
    report
}

/// Runs every sweep point, in order or on scoped threads when `run.parallel` is set.
pub fn run_benchmark(config: &BenchConfig) -> BenchReport {
    let points = config.expand();
    let mut report = BenchReport::new(config.benchmark());
    report.runs = if config.parallel() && points.len() > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> =
                points.iter().enumerate().map(|(i, p)| s.spawn(move || run_point(i, p, config))).collect();
            handles.into_iter().map(|h| h.join().expect("benchmark run panicked")).collect()
        })
    } else {
        points.iter().enumerate().map(|(i, p)| run_point(i, p, config)).collect()
    };
    report
}
