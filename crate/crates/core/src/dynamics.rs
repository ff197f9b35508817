//! Vector fields of the multi-stage and single-stage algorithms.
//!
//! Both variants carry, per agent, the decision variable `x_i` and an
//! integral state `phi_i` (zero at the start time). The sliding surface is
//! `s_i = grad f_i(x_i) + c phi_i` in both cases.
//!
//! Multi-stage:
//!
//! ```text
//! x_i'   = H_i^{-1} [ -(k1 + r1) s_i - c k2 r2 sum_j a_ij (x_i - x_j) ]
//! phi_i' = k2 r2 sum_j a_ij (x_i - x_j)
//! ```
//!
//! Single-stage:
//!
//! ```text
//! x_i'   = H_i^{-1} k1 r1 [ -k2 s_i - c sum_j a_ij (x_i - x_j) ]
//! phi_i' = k1 r1 sum_j a_ij (x_i - x_j)
//! ```
//!
//! where `H_i` is the local Hessian and `r_k = rho_k'/rho_k` is the
//! log-derivative of the k-th scaling function.
//!
//! The flat layout handed to the integrator is `(x_1 .. x_N, phi_1 .. phi_N)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::integrator::VectorField;
use crate::objective::ObjectiveModel;
use crate::scaling::{StageLayout, StageSchedule};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Two scaling functions on consecutive intervals.
    Ms,
    /// One scaling function.
    Ss,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Ms => "ms",
            Variant::Ss => "ss",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ms" => Ok(Variant::Ms),
            "ss" => Ok(Variant::Ss),
            other => Err(Error::Validation(format!(
                "unknown algorithm '{other}' (expected ms or ss)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgorithmParams {
    pub kappa1: f64,
    pub kappa2: f64,
    pub c: f64,
    pub variant: Variant,
}

impl AlgorithmParams {
    pub fn new(kappa1: f64, kappa2: f64, c: f64, variant: Variant) -> Result<Self> {
        for (name, v) in [("kappa1", kappa1), ("kappa2", kappa2), ("c", c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} = {v} must be positive")));
            }
        }
        Ok(AlgorithmParams {
            kappa1,
            kappa2,
            c,
            variant,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub x: Vector,
    pub phi: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub agents: Vec<AgentState>,
}

impl SystemState {
    /// Initial state with every integral term at zero.
    pub fn with_zero_integrals(t: f64, xs: Vec<Vector>) -> Self {
        let agents = xs
            .into_iter()
            .map(|x| {
                let phi = Vector::zeros(x.len());
                AgentState { x, phi }
            })
            .collect();
        SystemState { t, agents }
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn dim(&self) -> usize {
        self.agents.first().map_or(0, |a| a.x.len())
    }

    pub fn xs(&self) -> Vec<Vector> {
        self.agents.iter().map(|a| a.x.clone()).collect()
    }

    pub fn phi_sum(&self) -> Vector {
        self.agents
            .iter()
            .fold(Vector::zeros(self.dim()), |acc, a| acc + &a.phi)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.agent_count() * self.dim());
        for a in &self.agents {
            out.extend(a.x.iter());
        }
        for a in &self.agents {
            out.extend(a.phi.iter());
        }
        out
    }

    pub fn from_flat(t: f64, flat: &[f64], agents: usize, dim: usize) -> Result<Self> {
        if flat.len() != 2 * agents * dim {
            return Err(Error::DimensionMismatch {
                expected: 2 * agents * dim,
                found: flat.len(),
            });
        }
        let offset = agents * dim;
        let agents = (0..agents)
            .map(|i| AgentState {
                x: Vector::from_column_slice(&flat[i * dim..(i + 1) * dim]),
                phi: Vector::from_column_slice(&flat[offset + i * dim..offset + (i + 1) * dim]),
            })
            .collect();
        Ok(SystemState { t, agents })
    }

    fn check_against(&self, models: &[Box<dyn ObjectiveModel>]) -> Result<()> {
        if self.agents.len() != models.len() {
            return Err(Error::DimensionMismatch {
                expected: models.len(),
                found: self.agents.len(),
            });
        }
        for (a, m) in self.agents.iter().zip(models) {
            if a.x.len() != m.dim() || a.phi.len() != m.dim() {
                return Err(Error::DimensionMismatch {
                    expected: m.dim(),
                    found: a.x.len(),
                });
            }
        }
        Ok(())
    }
}

/// Per-agent time derivatives of `x_i` and `phi_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub dx: Vec<Vector>,
    pub dphi: Vec<Vector>,
}

impl StateDerivative {
    fn write_flat(&self, out: &mut [f64]) {
        let mut k = 0;
        for v in self.dx.iter().chain(&self.dphi) {
            for &c in v.iter() {
                out[k] = c;
                k += 1;
            }
        }
    }
}

/// `s_i = grad f_i(x_i) + c phi_i`.
pub fn sliding_surface(
    state: &SystemState,
    models: &[Box<dyn ObjectiveModel>],
    params: &AlgorithmParams,
) -> Result<Vec<Vector>> {
    state.check_against(models)?;
    Ok(state
        .agents
        .iter()
        .zip(models)
        .map(|(a, m)| m.gradient(&a.x) + params.c * &a.phi)
        .collect())
}

/// Solves `H_i v = rhs` by Cholesky; failure means the Hessian left the SPD cone.
fn hessian_solve(
    model: &dyn ObjectiveModel,
    x: &Vector,
    rhs: Vector,
    agent: usize,
) -> Result<Vector> {
    let chol = model
        .hessian(x)
        .cholesky()
        .ok_or(Error::SingularHessian { agent })?;
    Ok(chol.solve(&rhs))
}

pub fn ms_rhs(
    state: &SystemState,
    graph: &Graph,
    models: &[Box<dyn ObjectiveModel>],
    params: &AlgorithmParams,
    schedule: &StageSchedule,
) -> Result<StateDerivative> {
    if schedule.layout() != StageLayout::Multi {
        return Err(Error::Validation(
            "multi-stage dynamics need a two-stage schedule".into(),
        ));
    }
    let r1 = schedule.stage(0).rho_ratio(state.t);
    let r2 = schedule.stage(1).rho_ratio(state.t);
    ms_field(state, graph, models, params, r1, r2)
}

fn ms_field(
    state: &SystemState,
    graph: &Graph,
    models: &[Box<dyn ObjectiveModel>],
    params: &AlgorithmParams,
    r1: f64,
    r2: f64,
) -> Result<StateDerivative> {
    let s = sliding_surface(state, models, params)?;
    let xs = state.xs();
    let lap = graph.disagreement(&xs);

    let mut dx = Vec::with_capacity(xs.len());
    let mut dphi = Vec::with_capacity(xs.len());
    for (i, model) in models.iter().enumerate() {
        let bracket = -(params.kappa1 + r1) * &s[i] - params.c * params.kappa2 * r2 * &lap[i];
        dx.push(hessian_solve(model.as_ref(), &xs[i], bracket, i)?);
        dphi.push(params.kappa2 * r2 * &lap[i]);
    }
    Ok(StateDerivative { dx, dphi })
}

pub fn ss_rhs(
    state: &SystemState,
    graph: &Graph,
    models: &[Box<dyn ObjectiveModel>],
    params: &AlgorithmParams,
    schedule: &StageSchedule,
) -> Result<StateDerivative> {
    if schedule.layout() != StageLayout::Single {
        return Err(Error::Validation(
            "single-stage dynamics need a one-stage schedule".into(),
        ));
    }
    ss_field(
        state,
        graph,
        models,
        params,
        schedule.stage(0).rho_ratio(state.t),
    )
}

fn ss_field(
    state: &SystemState,
    graph: &Graph,
    models: &[Box<dyn ObjectiveModel>],
    params: &AlgorithmParams,
    r1: f64,
) -> Result<StateDerivative> {
    let s = sliding_surface(state, models, params)?;
    let xs = state.xs();
    let lap = graph.disagreement(&xs);
    let gain = params.kappa1 * r1;

    let mut dx = Vec::with_capacity(xs.len());
    let mut dphi = Vec::with_capacity(xs.len());
    for (i, model) in models.iter().enumerate() {
        let bracket = gain * (-params.kappa2 * &s[i] - params.c * &lap[i]);
        dx.push(hessian_solve(model.as_ref(), &xs[i], bracket, i)?);
        dphi.push(gain * &lap[i]);
    }
    Ok(StateDerivative { dx, dphi })
}

/// `sum_i grad f_i(x_i)`.
pub fn gradient_sum(state: &SystemState, models: &[Box<dyn ObjectiveModel>]) -> Vector {
    state
        .agents
        .iter()
        .zip(models)
        .fold(Vector::zeros(state.dim()), |acc, (a, m)| {
            acc + m.gradient(&a.x)
        })
}

/// `sum_i H_i(x_i) x_i'`.
pub fn zgs_weighted_velocity_sum(
    state: &SystemState,
    derivative: &StateDerivative,
    models: &[Box<dyn ObjectiveModel>],
) -> Vector {
    state
        .agents
        .iter()
        .zip(models)
        .zip(&derivative.dx)
        .fold(Vector::zeros(state.dim()), |acc, ((a, m), dx)| {
            acc + m.hessian(&a.x) * dx
        })
}

/// One network instance: graph, local objectives, gains and schedule.
#[derive(Debug, Clone, Copy)]
pub struct ZgsSystem<'a> {
    pub graph: &'a Graph,
    pub models: &'a [Box<dyn ObjectiveModel>],
    pub params: AlgorithmParams,
    pub schedule: &'a StageSchedule,
}

impl<'a> ZgsSystem<'a> {
    pub fn new(
        graph: &'a Graph,
        models: &'a [Box<dyn ObjectiveModel>],
        params: AlgorithmParams,
        schedule: &'a StageSchedule,
    ) -> Result<Self> {
        if models.len() != graph.agent_count() {
            return Err(Error::Validation(format!(
                "graph has {} agents but {} objectives were given",
                graph.agent_count(),
                models.len()
            )));
        }
        let dim = models.first().map_or(0, |m| m.dim());
        if models.iter().any(|m| m.dim() != dim) {
            return Err(Error::Validation(
                "all objectives must share one dimension".into(),
            ));
        }
        let expected = match params.variant {
            Variant::Ms => StageLayout::Multi,
            Variant::Ss => StageLayout::Single,
        };
        if schedule.layout() != expected {
            return Err(Error::Validation(format!(
                "algorithm {} does not match a schedule with {} stage(s)",
                params.variant.name(),
                schedule.stages().len()
            )));
        }
        Ok(ZgsSystem {
            graph,
            models,
            params,
            schedule,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.models.len()
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn rhs(&self, state: &SystemState) -> Result<StateDerivative> {
        match self.params.variant {
            Variant::Ms => ms_rhs(state, self.graph, self.models, &self.params, self.schedule),
            Variant::Ss => ss_rhs(state, self.graph, self.models, &self.params, self.schedule),
        }
    }

    pub fn surface(&self, state: &SystemState) -> Result<Vec<Vector>> {
        sliding_surface(state, self.models, &self.params)
    }

    /// Field with every ratio replaced by the given values.
    fn field(&self, state: &SystemState, ratios: &[f64]) -> Result<StateDerivative> {
        match self.params.variant {
            Variant::Ms => ms_field(
                state,
                self.graph,
                self.models,
                &self.params,
                ratios[0],
                ratios[1],
            ),
            Variant::Ss => ss_field(state, self.graph, self.models, &self.params, ratios[0]),
        }
    }

    /// Per stage, the spectral norm of the Jacobian of the part of the field
    /// that is proportional to that stage's ratio, evaluated at `at`.
    ///
    /// The field is linear in each ratio, so this is the stiffness one unit of
    /// `rho'/rho` adds. Exact for quadratic objectives; for other models it is
    /// a local estimate at `at`.
    pub fn stage_stiffness(&self, at: &SystemState) -> Result<Vec<f64>> {
        let (n, dim) = (self.agent_count(), self.dim());
        let stages = self.schedule.stages().len();
        let y0 = at.to_flat();
        let m = y0.len();
        let mut out = Vec::with_capacity(stages);
        for k in 0..stages {
            let mut unit = vec![0.0; stages];
            unit[k] = 1.0;
            let zero = vec![0.0; stages];
            let part = |y: &[f64]| -> Result<Vec<f64>> {
                let st = SystemState::from_flat(at.t, y, n, dim)?;
                let mut a = vec![0.0; m];
                let mut b = vec![0.0; m];
                self.field(&st, &unit)?.write_flat(&mut a);
                self.field(&st, &zero)?.write_flat(&mut b);
                Ok(a.iter().zip(&b).map(|(p, q)| p - q).collect())
            };
            let mut jac = Matrix::zeros(m, m);
            let mut y = y0.clone();
            for j in 0..m {
                let h = 1e-6 * y0[j].abs().max(1.0);
                y[j] = y0[j] + h;
                let fp = part(&y)?;
                y[j] = y0[j] - h;
                let fm = part(&y)?;
                y[j] = y0[j];
                for i in 0..m {
                    jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
                }
            }
            let norm = jac.svd(false, false).singular_values.max();
            if !norm.is_finite() {
                return Err(Error::NonFiniteInput(format!(
                    "stiffness of stage {}",
                    k + 1
                )));
            }
            out.push(norm);
        }
        Ok(out)
    }
}

impl VectorField for ZgsSystem<'_> {
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let state = SystemState::from_flat(t, y, self.agent_count(), self.dim())?;
        self.rhs(&state)?.write_flat(dy);
        Ok(())
    }

    fn agent_of(&self, component: usize) -> Option<usize> {
        let per_block = self.agent_count() * self.dim();
        Some((component % per_block) / self.dim())
    }
}
