//! Benchmark configuration: flat dotted keys layered as
//! defaults < benchmark preset < config file < `--set` overrides,
//! plus `sweep.<key> = [values]` axes expanded as a cross product.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use cardiomech::amg::{AmgSettings, Smoother};
use cardiomech::bddc::{BddcSettings, PrimalConfig};
use cardiomech::constitutive::GuccioneParams;
use cardiomech::fem::{BoundaryParams, FemSettings, LoadProgram, PressureMode, Ramp, RobinParams};
use cardiomech::linalg::GmresSettings;
use cardiomech::mesh::EllipsoidGeometry;
use cardiomech::timestepper::{NewtonSettings, PreconditionerKind};
use toml::Value;

use crate::presets;

pub type Flat = BTreeMap<String, Value>;

pub const DEFAULT_MAX_RUNS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Int,
    Float,
    Bool,
    Str(&'static [&'static str]),
}

const ANY: &[&str] = &[];

const SCHEMA: &[(&str, Kind)] = &[
    ("benchmark", Kind::Str(&["beam", "swelling", "contraction"])),
    ("mesh.kind", Kind::Str(&["beam", "ellipsoid", "file"])),
    ("mesh.nx", Kind::Int),
    ("mesh.ny", Kind::Int),
    ("mesh.nz", Kind::Int),
    ("mesh.circumferential", Kind::Int),
    ("mesh.transmural", Kind::Int),
    ("mesh.apicobasal", Kind::Int),
    ("mesh.path", Kind::Str(ANY)),
    ("fe.order", Kind::Int),
    ("fe.quadrature", Kind::Int),
    ("partition.method", Kind::Str(&["rcb", "structured"])),
    ("partition.subdomains", Kind::Int),
    ("partition.px", Kind::Int),
    ("partition.py", Kind::Int),
    ("partition.pz", Kind::Int),
    ("material.C", Kind::Float),
    ("material.B", Kind::Float),
    ("material.b_ff", Kind::Float),
    ("material.b_ss", Kind::Float),
    ("material.b_nn", Kind::Float),
    ("material.b_fs", Kind::Float),
    ("material.b_fn", Kind::Float),
    ("material.b_sn", Kind::Float),
    ("material.density", Kind::Float),
    ("boundary.pressure_mode", Kind::Str(&["follower", "dead"])),
    ("boundary.base.enabled", Kind::Bool),
    ("boundary.base.k_perp", Kind::Float),
    ("boundary.base.k_par", Kind::Float),
    ("boundary.base.c_perp", Kind::Float),
    ("boundary.base.c_par", Kind::Float),
    ("boundary.epi.enabled", Kind::Bool),
    ("boundary.epi.k_perp", Kind::Float),
    ("boundary.epi.k_par", Kind::Float),
    ("boundary.epi.c_perp", Kind::Float),
    ("boundary.epi.c_par", Kind::Float),
    ("loads.pressure.amplitude", Kind::Float),
    ("loads.pressure.ramp_time", Kind::Float),
    ("loads.activation.amplitude", Kind::Float),
    ("loads.activation.ramp_time", Kind::Float),
    ("time.dt", Kind::Float),
    ("time.steps", Kind::Int),
    ("newton.abs_tol", Kind::Float),
    ("newton.rel_tol", Kind::Float),
    ("newton.max_iters", Kind::Int),
    ("newton.freeze_preconditioner", Kind::Bool),
    ("gmres.rtol", Kind::Float),
    ("gmres.restart", Kind::Int),
    ("gmres.max_iters", Kind::Int),
    ("solver.preconditioner", Kind::Str(&["bddc", "amg", "none"])),
    ("bddc.primal", Kind::Str(&["V", "VE", "EF", "VEF", "ALL"])),
    ("bddc.rigid_modes", Kind::Bool),
    ("bddc.levels", Kind::Int),
    ("bddc.agglomeration_factor", Kind::Int),
    ("amg.eps", Kind::Float),
    ("amg.max_levels", Kind::Int),
    ("amg.smoother", Kind::Str(&["jacobi", "sgs"])),
    ("amg.literal_strength_rule", Kind::Bool),
    ("amg.smoothed_aggregation", Kind::Bool),
    ("amg.coarse_size", Kind::Int),
    ("run.parallel", Kind::Bool),
];

fn kind_of(key: &str) -> Option<Kind> {
    SCHEMA.iter().find(|(k, _)| *k == key).map(|(_, kind)| *kind)
}

pub fn known_keys() -> impl Iterator<Item = &'static str> {
    SCHEMA.iter().map(|(k, _)| *k)
}

/// Every problem found while reading or checking a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub errors: Vec<String>,
}

impl ConfigError {
    fn one(msg: impl Into<String>) -> Self {
        Self { errors: vec![msg.into()] }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for e in &self.errors {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Flat) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            v => {
                out.insert(key, v.clone());
            }
        }
    }
}

pub fn parse_flat(text: &str) -> Result<Flat, ConfigError> {
    let table: toml::Table = toml::from_str(text).map_err(|e| ConfigError::one(format!("parse error: {e}")))?;
    let mut flat = Flat::new();
    flatten("", &table, &mut flat);
    Ok(flat)
}

/// `key=value` with the value read as a TOML literal, or as a bare string.
pub fn parse_override(s: &str) -> Result<(String, Value), ConfigError> {
    let (key, raw) = s.split_once('=').ok_or_else(|| ConfigError::one(format!("override '{s}' is not key=value")))?;
    let (key, raw) = (key.trim(), raw.trim());
    if key.is_empty() {
        return Err(ConfigError::one(format!("override '{s}' has an empty key")));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((key.to_string(), value))
}

fn check_value(key: &str, v: &Value) -> Result<(), String> {
    let Some(kind) = kind_of(key) else {
        return Err(format!("unknown key '{key}'"));
    };
    let ok = match (kind, v) {
        (Kind::Int, Value::Integer(_)) => true,
        (Kind::Float, Value::Float(_) | Value::Integer(_)) => true,
        (Kind::Bool, Value::Boolean(_)) => true,
        (Kind::Str(allowed), Value::String(s)) => {
            if allowed.is_empty() || allowed.iter().any(|a| a.eq_ignore_ascii_case(s)) {
                true
            } else {
                return Err(format!("{key} = '{s}' is not one of {allowed:?}"));
            }
        }
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("{key} has type {}, expected {kind:?}", v.type_str()))
    }
}

/// A configuration before sweep expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Fully resolved scalar keys.
    pub values: Flat,
    /// Sweep axes in key order.
    pub sweep: Vec<(String, Vec<Value>)>,
    pub max_runs: usize,
    pub source: Option<PathBuf>,
}

impl BenchConfig {
    /// Layers `file` and `overrides` over the defaults of the selected benchmark.
    pub fn resolve(file: &Flat, overrides: &[(String, Value)]) -> Result<Self, ConfigError> {
        let mut errors = Vec::new();
        let mut layered = file.clone();
        for (k, v) in overrides {
            layered.insert(k.clone(), v.clone());
        }
        let benchmark = match layered.get("benchmark") {
            None => "beam".to_string(),
            Some(Value::String(s)) => s.to_ascii_lowercase(),
            Some(v) => {
                errors.push(format!("benchmark has type {}, expected a string", v.type_str()));
                "beam".to_string()
            }
        };
        let mut values = match presets::preset(&benchmark) {
            Some(p) => p,
            None => {
                errors.push(format!("unknown benchmark '{benchmark}' (expected beam, swelling or contraction)"));
                presets::preset("beam").unwrap()
            }
        };
        let mut sweep = Vec::new();
        let mut max_runs = DEFAULT_MAX_RUNS;
        for (k, v) in &layered {
            if k == "sweep.max_runs" {
                match v {
                    Value::Integer(n) if *n > 0 => max_runs = *n as usize,
                    _ => errors.push(format!("sweep.max_runs must be a positive integer, got {v}")),
                }
            } else if let Some(axis) = k.strip_prefix("sweep.") {
                let Value::Array(items) = v else {
                    errors.push(format!("{k} must be a list of values"));
                    continue;
                };
                if axis == "benchmark" {
                    errors.push("sweep.benchmark is not supported; run one config per benchmark".into());
                    continue;
                }
                if items.is_empty() {
                    errors.push(format!("{k} is an empty list"));
                }
                for item in items {
                    if let Err(e) = check_value(axis, item) {
                        errors.push(format!("{k}: {e}"));
                    }
                }
                sweep.push((axis.to_string(), items.clone()));
            } else {
                match check_value(k, v) {
                    Ok(()) => {
                        values.insert(k.clone(), v.clone());
                    }
                    Err(e) => errors.push(e),
                }
            }
        }
        let runs = sweep.iter().map(|(_, v)| v.len()).product::<usize>();
        if runs > max_runs {
            errors.push(format!("sweep expands to {runs} runs, more than sweep.max_runs = {max_runs}"));
        }
        let config = Self { values, sweep, max_runs, source: None };
        if errors.is_empty() {
            for point in config.expand() {
                if let Err(e) = RunSpec::from_flat(&point) {
                    for msg in e.errors {
                        if !errors.contains(&msg) {
                            errors.push(msg);
                        }
                    }
                }
            }
        }
        if errors.is_empty() {
            Ok(config)
        } else {
            Err(ConfigError { errors })
        }
    }

    /// Reads a config file, or a preset when `name` is a benchmark name.
    pub fn load(name: &str, overrides: &[(String, Value)]) -> Result<Self, ConfigError> {
        let path = Path::new(name);
        let (file, source) = if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::one(format!("{}: {e}", path.display())))?;
            (parse_flat(&text)?, Some(path.to_path_buf()))
        } else if let Some(text) = presets::preset_text(name) {
            (parse_flat(text)?, None)
        } else {
            return Err(ConfigError::one(format!("'{name}' is neither a file nor a preset (beam, swelling, contraction)")));
        };
        let mut config = Self::resolve(&file, overrides)?;
        config.source = source;
        Ok(config)
    }

    pub fn benchmark(&self) -> &str {
        self.values["benchmark"].as_str().unwrap()
    }

    pub fn n_runs(&self) -> usize {
        self.sweep.iter().map(|(_, v)| v.len()).product()
    }

    /// One fully resolved key set per sweep point; the last axis varies fastest.
    pub fn expand(&self) -> Vec<Flat> {
        let mut points = vec![self.values.clone()];
        for (key, items) in &self.sweep {
            let mut next = Vec::with_capacity(points.len() * items.len());
            for p in &points {
                for v in items {
                    let mut q = p.clone();
                    q.insert(key.clone(), v.clone());
                    next.push(q);
                }
            }
            points = next;
        }
        points
    }

    pub fn parallel(&self) -> bool {
        self.values.get("run.parallel").and_then(Value::as_bool).unwrap_or(false)
    }
}

/// Short label of a sweep point: the swept keys and their values.
pub fn label(point: &Flat, sweep: &[(String, Vec<Value>)]) -> String {
    if sweep.is_empty() {
        return point["benchmark"].as_str().unwrap_or("run").to_string();
    }
    sweep.iter().map(|(k, _)| format!("{k}={}", display(&point[k]))).collect::<Vec<_>>().join(",")
}

pub fn display(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        v => v.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSpec {
    Beam { nx: usize, ny: usize, nz: usize },
    Ellipsoid { circumferential: usize, transmural: usize, apicobasal: usize, geometry: EllipsoidGeometry },
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionSpec {
    Rcb(usize),
    Structured([usize; 3]),
}

/// Typed view of one sweep point.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub benchmark: String,
    pub mesh: MeshSpec,
    pub partition: PartitionSpec,
    pub fem: FemSettings,
    pub newton: NewtonSettings,
    pub dt: f64,
    pub steps: usize,
}

struct Reader<'a> {
    flat: &'a Flat,
    errors: Vec<String>,
}

impl Reader<'_> {
    fn float(&mut self, key: &str) -> f64 {
        match self.flat.get(key) {
            Some(Value::Float(x)) => *x,
            Some(Value::Integer(i)) => *i as f64,
            _ => {
                self.errors.push(format!("missing number '{key}'"));
                f64::NAN
            }
        }
    }

    fn positive(&mut self, key: &str) -> f64 {
        let x = self.float(key);
        if !(x > 0.0) && !x.is_nan() {
            self.errors.push(format!("{key} must be positive, got {x}"));
        }
        x
    }

    fn non_negative(&mut self, key: &str) -> f64 {
        let x = self.float(key);
        if x < 0.0 {
            self.errors.push(format!("{key} must be non-negative, got {x}"));
        }
        x
    }

    fn int(&mut self, key: &str, min: i64) -> usize {
        match self.flat.get(key) {
            Some(Value::Integer(i)) if *i >= min => *i as usize,
            Some(Value::Integer(i)) => {
                self.errors.push(format!("{key} must be at least {min}, got {i}"));
                min.max(0) as usize
            }
            _ => {
                self.errors.push(format!("missing integer '{key}'"));
                min.max(0) as usize
            }
        }
    }

    fn boolean(&mut self, key: &str) -> bool {
        match self.flat.get(key) {
            Some(Value::Boolean(b)) => *b,
            _ => {
                self.errors.push(format!("missing boolean '{key}'"));
                false
            }
        }
    }

    fn string(&mut self, key: &str) -> String {
        match self.flat.get(key) {
            Some(Value::String(s)) => s.to_ascii_lowercase(),
            _ => {
                self.errors.push(format!("missing string '{key}'"));
                String::new()
            }
        }
    }

    fn robin(&mut self, which: &str) -> Option<RobinParams> {
        if !self.boolean(&format!("boundary.{which}.enabled")) {
            return None;
        }
        Some(RobinParams {
            k_perp: self.non_negative(&format!("boundary.{which}.k_perp")),
            k_par: self.non_negative(&format!("boundary.{which}.k_par")),
            c_perp: self.non_negative(&format!("boundary.{which}.c_perp")),
            c_par: self.non_negative(&format!("boundary.{which}.c_par")),
        })
    }

    fn ramp(&mut self, which: &str) -> Ramp {
        Ramp {
            amplitude: self.float(&format!("loads.{which}.amplitude")),
            ramp_time: self.non_negative(&format!("loads.{which}.ramp_time")),
        }
    }
}

impl RunSpec {
    pub fn from_flat(flat: &Flat) -> Result<Self, ConfigError> {
        let mut r = Reader { flat, errors: Vec::new() };
        let benchmark = r.string("benchmark");
        let mesh = match r.string("mesh.kind").as_str() {
            "beam" => MeshSpec::Beam { nx: r.int("mesh.nx", 1), ny: r.int("mesh.ny", 1), nz: r.int("mesh.nz", 1) },
            "ellipsoid" => MeshSpec::Ellipsoid {
                circumferential: r.int("mesh.circumferential", 3),
                transmural: r.int("mesh.transmural", 1),
                apicobasal: r.int("mesh.apicobasal", 1),
                geometry: EllipsoidGeometry::default(),
            },
            "file" => MeshSpec::File(PathBuf::from(flat.get("mesh.path").and_then(Value::as_str).unwrap_or_else(|| {
                r.errors.push("mesh.kind = 'file' needs mesh.path".into());
                ""
            }))),
            _ => MeshSpec::Beam { nx: 1, ny: 1, nz: 1 },
        };
        let partition = match r.string("partition.method").as_str() {
            "structured" => {
                let p = [r.int("partition.px", 1), r.int("partition.py", 1), r.int("partition.pz", 1)];
                if let MeshSpec::Beam { nx, ny, nz } = mesh {
                    if nx % p[0] != 0 || ny % p[1] != 0 || nz % p[2] != 0 {
                        r.errors.push(format!("partition {p:?} does not divide the {nx}x{ny}x{nz} beam grid"));
                    }
                } else {
                    r.errors.push("partition.method = 'structured' needs mesh.kind = 'beam'".into());
                }
                PartitionSpec::Structured(p)
            }
            _ => PartitionSpec::Rcb(r.int("partition.subdomains", 1)),
        };
        let order = r.int("fe.order", 1);
        if order > 2 {
            r.errors.push(format!("fe.order must be 1 or 2, got {order}"));
        }
        let quadrature = match r.int("fe.quadrature", 0) {
            0 => None,
            q => Some(q),
        };
        let material = GuccioneParams {
            c: r.positive("material.C"),
            bulk: r.positive("material.B"),
            b_ff: r.positive("material.b_ff"),
            b_ss: r.positive("material.b_ss"),
            b_nn: r.positive("material.b_nn"),
            b_fs: r.positive("material.b_fs"),
            b_fn: r.positive("material.b_fn"),
            b_sn: r.positive("material.b_sn"),
        };
        let density = r.non_negative("material.density");
        let pressure_mode = match r.string("boundary.pressure_mode").as_str() {
            "dead" => PressureMode::Dead,
            _ => PressureMode::Follower,
        };
        let boundary = BoundaryParams {
            robin_base: r.robin("base"),
            robin_epi: r.robin("epi"),
            loads: LoadProgram { pressure: r.ramp("pressure"), activation: r.ramp("activation") },
            pressure_mode,
        };
        let preconditioner = match r.string("solver.preconditioner").parse::<PreconditionerKind>() {
            Ok(p) => p,
            Err(e) => {
                r.errors.push(e);
                PreconditionerKind::Bddc
            }
        };
        let primal = flat.get("bddc.primal").and_then(Value::as_str).unwrap_or("VEF").parse::<PrimalConfig>();
        let mut primal = primal.unwrap_or_else(|e| {
            r.errors.push(e.to_string());
            PrimalConfig::default()
        });
        primal.rigid_modes = r.boolean("bddc.rigid_modes");
        let bddc = BddcSettings {
            primal,
            levels: r.int("bddc.levels", 2),
            agglomeration_factor: r.int("bddc.agglomeration_factor", 2),
        };
        let smoother = r.string("amg.smoother").parse::<Smoother>().unwrap_or_else(|e| {
            r.errors.push(e.to_string());
            Smoother::Sgs
        });
        let amg = AmgSettings {
            eps: r.non_negative("amg.eps"),
            max_levels: r.int("amg.max_levels", 1),
            smoother,
            literal_strength_rule: r.boolean("amg.literal_strength_rule"),
            smoothed_aggregation: r.boolean("amg.smoothed_aggregation"),
            coarse_size: r.int("amg.coarse_size", 1),
        };
        let newton = NewtonSettings {
            abs_tol: r.positive("newton.abs_tol"),
            rel_tol: r.positive("newton.rel_tol"),
            max_iters: r.int("newton.max_iters", 1),
            gmres: GmresSettings {
                rtol: r.positive("gmres.rtol"),
                restart: r.int("gmres.restart", 1),
                max_iters: r.int("gmres.max_iters", 1),
            },
            preconditioner,
            bddc,
            amg,
            freeze_preconditioner: r.boolean("newton.freeze_preconditioner"),
        };
        if r.errors.is_empty() {
            if let Err(e) = newton.validate() {
                r.errors.push(e.to_string());
            }
            if let Err(e) = material.validate() {
                r.errors.push(e.to_string());
            }
        }
        let dt = r.positive("time.dt");
        let steps = r.int("time.steps", 0);
        let spec = Self {
            benchmark,
            mesh,
            partition,
            fem: FemSettings { order, quadrature, material, density, boundary },
            newton,
            dt,
            steps,
        };
        if r.errors.is_empty() {
            Ok(spec)
        } else {
            Err(ConfigError { errors: r.errors })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(text: &str) -> Flat {
        parse_flat(text).unwrap()
    }

    #[test]
    fn presets_resolve_and_cover_every_key() {
        for name in ["beam", "swelling", "contraction"] {
            let c = BenchConfig::load(name, &[]).unwrap();
            assert_eq!(c.benchmark(), name);
            for key in known_keys() {
                assert!(c.values.contains_key(key), "{name} lacks {key}");
            }
            assert_eq!(c.n_runs(), 1);
        }
    }

    #[test]
    fn layers_apply_in_order() {
        let file = flat("benchmark = 'swelling'\n[time]\nsteps = 7\n");
        let c = BenchConfig::resolve(&file, &[parse_override("time.steps=2").unwrap()]).unwrap();
        assert_eq!(c.values["time.steps"].as_integer(), Some(2));
        assert_eq!(c.values["loads.pressure.amplitude"].as_float(), Some(2500.0));
        let c = BenchConfig::resolve(&file, &[]).unwrap();
        assert_eq!(c.values["time.steps"].as_integer(), Some(7));
    }

    #[test]
    fn overrides_parse_literals_and_bare_strings() {
        assert_eq!(parse_override("time.dt=1e-4").unwrap().1, Value::Float(1e-4));
        assert_eq!(parse_override("bddc.primal=VE").unwrap().1, Value::String("VE".into()));
        assert_eq!(parse_override("run.parallel = true").unwrap().1, Value::Boolean(true));
        assert!(parse_override("nonsense").is_err());
    }

    #[test]
    fn validation_lists_every_offending_key() {
        let file = flat("benchmark = 'beam'\nfoo = 1\n[time]\ndt = 'soon'\n[solver]\npreconditioner = 'ilu'\n");
        let err = BenchConfig::resolve(&file, &[]).unwrap_err();
        assert_eq!(err.errors.len(), 3, "{err}");
        let text = err.to_string();
        for key in ["foo", "time.dt", "solver.preconditioner"] {
            assert!(text.contains(key), "{text}");
        }
    }

    #[test]
    fn semantic_errors_are_reported() {
        let file = flat("[time]\ndt = -1.0\n[fe]\norder = 3\n[partition]\nmethod = 'structured'\npx = 7\n");
        let err = BenchConfig::resolve(&file, &[]).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("time.dt") && text.contains("fe.order") && text.contains("does not divide"), "{text}");
    }

    #[test]
    fn sweeps_expand_as_cross_product() {
        let file = flat("[sweep]\n'bddc.primal' = ['V', 'VE', 'EF', 'VEF']\n'fe.order' = [1, 2]\n");
        let c = BenchConfig::resolve(&file, &[]).unwrap();
        let points = c.expand();
        assert_eq!(points.len(), 8);
        assert_eq!(label(&points[1], &c.sweep), "bddc.primal=V,fe.order=2");
        assert_eq!(points[7]["bddc.primal"].as_str(), Some("VEF"));
    }

    #[test]
    fn sweep_size_is_capped() {
        let many: Vec<String> = (1..=9).map(|i| i.to_string()).collect();
        let text = format!("[sweep]\n'time.steps' = [{0}]\n'newton.max_iters' = [{0}]\n", many.join(","));
        let err = BenchConfig::resolve(&flat(&text), &[]).unwrap_err();
        assert!(err.to_string().contains("81 runs"));
        let raised = BenchConfig::resolve(&flat(&format!("{text}max_runs = 100\n")), &[]).unwrap();
        assert_eq!(raised.n_runs(), 81);
        let err = BenchConfig::resolve(&flat("[sweep]\n'mesh.bogus' = [1]\n"), &[]).unwrap_err();
        assert!(err.to_string().contains("mesh.bogus"));
    }
}
