//! Backward Euler time loop and Newton's method on the discrete residual.
//!
//! Step n solves `F(dⁿ; dⁿ⁻¹, dⁿ⁻², tₙ) = 0` starting from `dⁿ⁻¹`, with each
//! linearized system `DF δd = −F` handled by preconditioned GMRES.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use crate::fem::{LoadProgram, Ramp};

use crate::amg::{build_hierarchy, AmgError, AmgHierarchy, AmgSettings};
use crate::bddc::{build_bddc, BddcError, BddcPrecond, BddcSettings};
use crate::fem::{FemError, FemModel, FemSettings};
use crate::linalg::{gmres, norm2, CsrMatrix, GmresSettings, IdentityPreconditioner, LinearOperator, Preconditioner};
use crate::mesh::{classify_interface, HexMesh, InterfaceSets, Partition};


#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreconditionerKind {
    Bddc,
    Amg,
    None,
}

impl fmt::Display for PreconditionerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Bddc => "bddc",
            Self::Amg => "amg",
            Self::None => "none",
        })
    }
}

impl FromStr for PreconditionerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bddc" => Ok(Self::Bddc),
            "amg" => Ok(Self::Amg),
            "none" => Ok(Self::None),
            _ => Err(format!("unknown preconditioner '{s}' (expected bddc, amg or none)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iters: usize,
    pub gmres: GmresSettings,
    pub preconditioner: PreconditionerKind,
    pub bddc: BddcSettings,
    pub amg: AmgSettings,
    /// Build the preconditioner once per time step instead of every iteration.
    pub freeze_preconditioner: bool,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-6,
            max_iters: 20,
            gmres: GmresSettings { rtol: 1e-8, restart: 200, max_iters: 1000 },
            preconditioner: PreconditionerKind::Bddc,
            bddc: BddcSettings::default(),
            amg: AmgSettings::default(),
            freeze_preconditioner: false,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<(), NewtonError> {
        let bad = |m: String| Err(NewtonError::InvalidSettings(m));
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return bad(format!("tolerances must be positive (abs {}, rel {})", self.abs_tol, self.rel_tol));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.gmres.rtol > 0.0) || self.gmres.restart == 0 || self.gmres.max_iters == 0 {
            return bad(format!("invalid GMRES settings {:?}", self.gmres));
        }
        self.bddc.validate()?;
        self.amg.validate()?;
        Ok(())
    }
}

/// Solution history after the last accepted step: `d` at time `t` and `d_prev` at `t − dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeState {
    pub t: f64,
    pub dt: f64,
    pub d: Vec<f64>,
    pub d_prev: Vec<f64>,
}

impl TimeState {
    pub fn at_rest(n_dofs: usize, dt: f64) -> Self {
        Self { t: 0.0, dt, d: vec![0.0; n_dofs], d_prev: vec![0.0; n_dofs] }
    }

    pub fn validate(&self, n_dofs: usize) -> Result<(), NewtonError> {
        if !(self.dt > 0.0) {
            return Err(NewtonError::InvalidSettings(format!("dt must be positive, got {}", self.dt)));
        }
        if self.d.len() != n_dofs || self.d_prev.len() != n_dofs {
            return Err(NewtonError::InvalidSettings(format!(
                "history vectors of length {} and {}, model has {n_dofs} dofs",
                self.d.len(),
                self.d_prev.len()
            )));
        }
        Ok(())
    }

    pub fn advance(&mut self, d_next: Vec<f64>) {
        self.d_prev = std::mem::replace(&mut self.d, d_next);
        self.t += self.dt;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub assembly: f64,
    pub setup: f64,
    pub solve: f64,
}

impl std::ops::AddAssign for PhaseTimes {
    fn add_assign(&mut self, o: Self) {
        self.assembly += o.assembly;
        self.setup += o.setup;
        self.solve += o.solve;
    }
}

/// Residual norms (entry 0 is ‖F(d^{n,0})‖) and one GMRES count per Newton iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NewtonHistory {
    pub residuals: Vec<f64>,
    pub gmres_iters: Vec<usize>,
    pub gmres_converged: Vec<bool>,
}

impl NewtonHistory {
    pub fn iterations(&self) -> usize {
        self.gmres_iters.len()
    }
}

impl fmt::Display for NewtonHistory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r: Vec<String> = self.residuals.iter().map(|x| format!("{x:.3e}")).collect();
        write!(f, "‖F‖ = [{}], GMRES = {:?}", r.join(", "), self.gmres_iters)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NewtonError {
    #[error("Newton diverged (residual grew three iterations in a row): {0}")]
    Diverged(NewtonHistory),
    #[error("Newton did not converge: {0}")]
    MaxIterations(NewtonHistory),
    #[error("invalid solver setting: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Bddc(#[from] BddcError),
    #[error(transparent)]
    Amg(#[from] AmgError),
}

impl NewtonError {
    pub fn history(&self) -> Option<&NewtonHistory> {
        match self {
            Self::Diverged(h) | Self::MaxIterations(h) => Some(h),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub d: Vec<f64>,
    pub history: NewtonHistory,
    pub times: PhaseTimes,
}

impl NewtonOutcome {
    pub fn iterations(&self) -> usize {
        self.history.iterations()
    }
}

/// A discretized problem: the finite element model and its subdomain interface.
pub struct Problem {
    pub model: FemModel,
    pub interface: InterfaceSets,
}

impl Problem {
    pub fn new(mesh: &HexMesh, partition: &Partition, settings: &FemSettings) -> Result<Self, FemError> {
        let model = FemModel::new(mesh, partition, settings)?;
        let interface = classify_interface(partition, model.dofmap(), mesh);
        Ok(Self { model, interface })
    }

    pub fn n_dofs(&self) -> usize {
        self.model.n_dofs()
    }
}

enum Built {
    Bddc(BddcPrecond),
    Amg(AmgHierarchy),
    Identity,
}

impl Built {
    fn get(&self) -> &dyn Preconditioner {
        match self {
            Built::Bddc(p) => p,
            Built::Amg(h) => h,
            Built::Identity => &IdentityPreconditioner,
        }
    }
}

fn elapsed(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

/// One backward Euler step from `state` to `state.t + state.dt`.
pub fn newton_solve(problem: &Problem, state: &TimeState, settings: &NewtonSettings) -> Result<NewtonOutcome, NewtonError> {
    settings.validate()?;
    let model = &problem.model;
    state.validate(model.n_dofs())?;
    let (dt, t) = (state.dt, state.t + state.dt);
    let mut times = PhaseTimes::default();
    let mut history = NewtonHistory::default();

    let mut d = state.d.clone();
    let start = Instant::now();
    let mut f = model.residual(&d, &state.d, &state.d_prev, dt, t)?;
    times.assembly += elapsed(start);
    let f0 = norm2(&f);
    history.residuals.push(f0);
    let tol = settings.abs_tol.max(settings.rel_tol * f0);

    let mut pc: Option<Built> = None;
    let mut increases = 0;
    for _ in 0..settings.max_iters {
        let start = Instant::now();
        let jac = model.assemble_jacobian(&d, &state.d, dt, t)?;
        let assembled: Option<CsrMatrix> = match settings.preconditioner {
            PreconditionerKind::Bddc => None,
            _ => Some(jac.assemble()),
        };
        times.assembly += elapsed(start);

        let start = Instant::now();
        if !settings.freeze_preconditioner || pc.is_none() {
            pc = Some(match settings.preconditioner {
                PreconditionerKind::Bddc => Built::Bddc(build_bddc(&jac, &problem.interface, &settings.bddc)?),
                PreconditionerKind::Amg => Built::Amg(build_hierarchy(
                    assembled.as_ref().unwrap(),
                    model.dofmap().node_coords(),
                    &settings.amg,
                )?),
                PreconditionerKind::None => Built::Identity,
            });
        }
        times.setup += elapsed(start);

        let start = Instant::now();
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let op: &dyn LinearOperator = match &assembled {
            Some(a) => a,
            None => &jac,
        };
        let res = gmres(op, pc.as_ref().unwrap().get(), &rhs, &settings.gmres);
        times.solve += elapsed(start);
        history.gmres_iters.push(res.iterations);
        history.gmres_converged.push(res.converged());
        for (di, dx) in d.iter_mut().zip(&res.x) {
            *di += dx;
        }

        let start = Instant::now();
        f = model.residual(&d, &state.d, &state.d_prev, dt, t)?;
        times.assembly += elapsed(start);
        let fk = norm2(&f);
        let prev = *history.residuals.last().unwrap();
        history.residuals.push(fk);
        if fk <= tol {
            return Ok(NewtonOutcome { d, history, times });
        }
        if !fk.is_finite() {
            return Err(NewtonError::Diverged(history));
        }
        increases = if fk > prev { increases + 1 } else { 0 };
        if increases >= 3 {
            return Err(NewtonError::Diverged(history));
        }
    }
    Err(NewtonError::MaxIterations(history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub newton_iters: usize,
    pub gmres_iters: Vec<usize>,
    pub total_gmres: usize,
    pub residuals: Vec<f64>,
    pub times: PhaseTimes,
    /// max |dᵢ| at the end of the step.
    pub max_displacement: f64,
}

impl StepRecord {
    pub fn mean_gmres(&self) -> f64 {
        if self.newton_iters == 0 {
            0.0
        } else {
            self.total_gmres as f64 / self.newton_iters as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFailure {
    pub step: usize,
    pub t: f64,
    pub message: String,
    pub history: Option<NewtonHistory>,
}

#[derive(Debug, Clone)]
pub struct TransientRun {
    pub n_dofs: usize,
    pub n_subdomains: usize,
    pub steps: Vec<StepRecord>,
    pub failure: Option<StepFailure>,
    pub state: TimeState,
}

/// Advances `n_steps` steps from rest; a failing step ends the run and is recorded.
pub fn run_transient(problem: &Problem, settings: &NewtonSettings, dt: f64, n_steps: usize) -> Result<TransientRun, NewtonError> {
    settings.validate()?;
    let mut state = TimeState::at_rest(problem.n_dofs(), dt);
    state.validate(problem.n_dofs())?;
    let mut run = TransientRun {
        n_dofs: problem.n_dofs(),
        n_subdomains: problem.interface.n_subdomains(),
        steps: Vec::with_capacity(n_steps),
        failure: None,
        state: state.clone(),
    };
    for step in 1..=n_steps {
        match newton_solve(problem, &state, settings) {
            Ok(out) => {
                state.advance(out.d);
                run.steps.push(StepRecord {
                    step,
                    t: state.t,
                    newton_iters: out.history.iterations(),
                    total_gmres: out.history.gmres_iters.iter().sum(),
                    gmres_iters: out.history.gmres_iters,
                    residuals: out.history.residuals,
                    times: out.times,
                    max_displacement: state.d.iter().fold(0.0, |m, v| m.max(v.abs())),
                });
            }
            Err(e) => {
                run.failure =
                    Some(StepFailure { step, t: state.t + dt, message: e.to_string(), history: e.history().cloned() });
                break;
            }
        }
    }
    run.state = state;
    Ok(run)
}
