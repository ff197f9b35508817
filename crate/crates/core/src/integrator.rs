//! Deadline-aware explicit integration.
//!
//! Inside a scaling stage the gain `h / (deadline - t)` diverges, so the time
//! grid shrinks geometrically towards each deadline: the step is capped so that
//! `gain * step <= theta`. When the vector field multiplies the ratio by a
//! large factor, that factor (the stage stiffness) is folded into the gain so
//! the explicit step stays stable. Each stage stops at its guard point
//! `deadline - epsilon_rel * T`; the state is then held across the remaining
//! sliver and the grid resumes exactly at the deadline, where the ratio of the
//! finished stage is zero again.

use crate::error::{Error, Result};
use crate::scaling::StageSchedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk4,
    /// First-order; only meant as a cross-check.
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub base_step: f64,
    /// Maximum `gain * step` product inside a stage.
    pub gain_cap_theta: f64,
    pub min_step: f64,
    /// Cap on the number of grid points.
    pub max_steps: usize,
    pub method: Method,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            base_step: 1e-4,
            gain_cap_theta: 0.1,
            min_step: 1e-12,
            max_steps: 10_000_000,
            method: Method::Rk4,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_step > 0.0 && self.min_step < self.base_step && self.base_step.is_finite()) {
            return Err(Error::Validation(format!(
                "need 0 < min_step ({}) < base_step ({})",
                self.min_step, self.base_step
            )));
        }
        if !(self.gain_cap_theta > 0.0 && self.gain_cap_theta < 1.0) {
            return Err(Error::Validation(format!(
                "gain_cap_theta = {} must lie in (0, 1)",
                self.gain_cap_theta
            )));
        }
        Ok(())
    }
}

/// A right-hand side `y' = F(t, y)` over a flat state.
pub trait VectorField {
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;

    /// Agent owning a flat component, for error reports.
    fn agent_of(&self, _component: usize) -> Option<usize> {
        None
    }
}

impl<F> VectorField for F
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        self(t, y, dy);
        Ok(())
    }
}

/// How a grid point is reached from its predecessor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Start,
    Integrate,
    /// State copied unchanged: the jump from a guard point to its deadline.
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub t: f64,
    pub kind: StepKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub points: Vec<GridPoint>,
    pub guards: Vec<f64>,
    pub deadlines: Vec<f64>,
}

impl TimeGrid {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.t)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Uniform grid on `[t0, t1]` with `n` steps.
    pub fn uniform(t0: f64, t1: f64, n: usize) -> Self {
        let mut points = vec![GridPoint {
            t: t0,
            kind: StepKind::Start,
        }];
        let h = (t1 - t0) / n as f64;
        for k in 1..=n {
            let t = if k == n { t1 } else { t0 + k as f64 * h };
            points.push(GridPoint {
                t,
                kind: StepKind::Integrate,
            });
        }
        TimeGrid {
            points,
            guards: Vec::new(),
            deadlines: Vec::new(),
        }
    }

    /// Splits every integration interval into `factor` equal substeps.
    pub fn refined(&self, factor: usize) -> Self {
        let mut points = Vec::with_capacity(self.points.len() * factor);
        for (k, p) in self.points.iter().enumerate() {
            if k > 0 && p.kind == StepKind::Integrate {
                let t0 = self.points[k - 1].t;
                let h = (p.t - t0) / factor as f64;
                for m in 1..factor {
                    points.push(GridPoint {
                        t: t0 + m as f64 * h,
                        kind: StepKind::Integrate,
                    });
                }
            }
            points.push(*p);
        }
        TimeGrid {
            points,
            guards: self.guards.clone(),
            deadlines: self.deadlines.clone(),
        }
    }
}

/// Rough upper estimate of the grid size, used to fail fast on absurd configs.
fn projected_steps(
    schedule: &StageSchedule,
    cfg: &IntegratorConfig,
    post_deadline: f64,
    stiffness: &[f64],
) -> f64 {
    let mut n = post_deadline / cfg.base_step + 1.0;
    for (s, &k) in schedule.stages().iter().zip(stiffness) {
        n += s.duration / cfg.base_step
            + (s.exponent * k / cfg.gain_cap_theta + 1.0) * (1.0 / schedule.epsilon_rel).ln()
            + 2.0;
    }
    n
}

/// Grid covering every stage up to its guard, a hold to each deadline and
/// `post_deadline` seconds of uniform steps after the final deadline.
pub fn build_time_grid(
    schedule: &StageSchedule,
    cfg: &IntegratorConfig,
    post_deadline: f64,
) -> Result<TimeGrid> {
    build_time_grid_with_stiffness(schedule, cfg, post_deadline, &[])
}

/// As [`build_time_grid`], with the gain of stage `k` taken as
/// `stiffness[k] * rho'/rho`. Factors below 1 (and missing entries) count as 1,
/// so the plain ratio rule is never relaxed.
pub fn build_time_grid_with_stiffness(
    schedule: &StageSchedule,
    cfg: &IntegratorConfig,
    post_deadline: f64,
    stiffness: &[f64],
) -> Result<TimeGrid> {
    cfg.validate()?;
    if let Some(bad) = stiffness.iter().find(|k| !k.is_finite()) {
        return Err(Error::Validation(format!(
            "stiffness factor {bad} is not finite"
        )));
    }
    let stiffness: Vec<f64> = (0..schedule.stages().len())
        .map(|k| stiffness.get(k).copied().unwrap_or(1.0).max(1.0))
        .collect();
    if !(post_deadline >= 0.0 && post_deadline.is_finite()) {
        return Err(Error::Validation(format!(
            "post-deadline hold {post_deadline} must be nonnegative"
        )));
    }
    if projected_steps(schedule, cfg, post_deadline, &stiffness) > cfg.max_steps as f64 {
        return Err(Error::GridTooFine { cap: cfg.max_steps });
    }

    let mut points = vec![GridPoint {
        t: schedule.t_start(),
        kind: StepKind::Start,
    }];
    let mut guards = Vec::new();
    let mut deadlines = Vec::new();
    let push = |points: &mut Vec<GridPoint>, t: f64, kind: StepKind| -> Result<()> {
        if points.len() >= cfg.max_steps {
            return Err(Error::GridTooFine { cap: cfg.max_steps });
        }
        points.push(GridPoint { t, kind });
        Ok(())
    };

    for (k, stage) in schedule.stages().iter().enumerate() {
        let deadline = stage.deadline();
        let guard = schedule.guard(k);
        let mut t = points.last().expect("non-empty").t;
        while t < guard {
            let capped = cfg.gain_cap_theta * (deadline - t) / (stage.exponent * stiffness[k]);
            let step = cfg.base_step.min(capped).max(cfg.min_step);
            let next = t + step;
            // avoid a sliver step right before the guard
            t = if next >= guard || guard - next < 1e-3 * step {
                guard
            } else {
                next
            };
            push(&mut points, t, StepKind::Integrate)?;
        }
        push(&mut points, deadline, StepKind::Hold)?;
        guards.push(guard);
        deadlines.push(deadline);
    }

    if post_deadline > 0.0 {
        let start = schedule.final_deadline();
        let n = (post_deadline / cfg.base_step).ceil().max(1.0) as usize;
        let h = post_deadline / n as f64;
        for k in 1..=n {
            push(&mut points, start + k as f64 * h, StepKind::Integrate)?;
        }
    }

    Ok(TimeGrid {
        points,
        guards,
        deadlines,
    })
}

/// States at every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Solution {
    pub fn last(&self) -> (f64, &[f64]) {
        (
            *self.times.last().expect("non-empty"),
            self.states.last().expect("non-empty"),
        )
    }

    /// State at the grid point whose time equals `t` exactly.
    pub fn at(&self, t: f64) -> Option<&[f64]> {
        self.times
            .iter()
            .position(|&s| s == t)
            .map(|k| self.states[k].as_slice())
    }
}

struct Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

/// `out = y + a * k`
fn offset(out: &mut [f64], y: &[f64], a: f64, k: &[f64]) {
    for ((o, y), k) in out.iter_mut().zip(y).zip(k) {
        *o = y + a * k;
    }
}

fn rk4_step(
    field: &dyn VectorField,
    t: f64,
    dt: f64,
    y: &mut [f64],
    w: &mut Workspace,
) -> Result<()> {
    field.eval(t, y, &mut w.k1)?;
    offset(&mut w.tmp, y, 0.5 * dt, &w.k1);
    field.eval(t + 0.5 * dt, &w.tmp, &mut w.k2)?;
    offset(&mut w.tmp, y, 0.5 * dt, &w.k2);
    field.eval(t + 0.5 * dt, &w.tmp, &mut w.k3)?;
    offset(&mut w.tmp, y, dt, &w.k3);
    field.eval(t + dt, &w.tmp, &mut w.k4)?;
    for (i, yi) in y.iter_mut().enumerate() {
        *yi += dt / 6.0 * (w.k1[i] + 2.0 * w.k2[i] + 2.0 * w.k3[i] + w.k4[i]);
    }
    Ok(())
}

fn euler_step(
    field: &dyn VectorField,
    t: f64,
    dt: f64,
    y: &mut [f64],
    w: &mut Workspace,
) -> Result<()> {
    field.eval(t, y, &mut w.k1)?;
    for (yi, ki) in y.iter_mut().zip(&w.k1) {
        *yi += dt * ki;
    }
    Ok(())
}

fn march(
    field: &dyn VectorField,
    y0: &[f64],
    grid: &TimeGrid,
    method: Method,
    keep: impl Fn(usize) -> bool,
) -> Result<Solution> {
    let first = grid
        .points
        .first()
        .ok_or_else(|| Error::Validation("empty time grid".into()))?;
    let mut y = y0.to_vec();
    let mut w = Workspace::new(y.len());
    let mut times = vec![first.t];
    let mut states = vec![y.clone()];
    for k in 1..grid.points.len() {
        let (prev, p) = (grid.points[k - 1].t, grid.points[k]);
        if p.kind == StepKind::Integrate {
            let dt = p.t - prev;
            match method {
                Method::Rk4 => rk4_step(field, prev, dt, &mut y, &mut w)?,
                Method::Euler => euler_step(field, prev, dt, &mut y, &mut w)?,
            }
            if let Some(component) = y.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState {
                    t: p.t,
                    component,
                    agent: field.agent_of(component),
                });
            }
        }
        if keep(k) {
            times.push(p.t);
            states.push(y.clone());
        }
    }
    Ok(Solution { times, states })
}

/// Integrates over `grid` with the configured method; the result is a pure
/// function of its inputs.
pub fn integrate(
    field: &dyn VectorField,
    y0: &[f64],
    grid: &TimeGrid,
    cfg: &IntegratorConfig,
) -> Result<Solution> {
    march(field, y0, grid, cfg.method, |_| true)
}

/// Forward Euler on a `refine`-times finer grid, reported at the points of `grid`.
pub fn reference_integrate(
    field: &dyn VectorField,
    y0: &[f64],
    grid: &TimeGrid,
    refine: usize,
) -> Result<Solution> {
    let fine = grid.refined(refine);
    let coarse: std::collections::HashSet<u64> = grid.times().map(f64::to_bits).collect();
    let keep: Vec<bool> = fine
        .points
        .iter()
        .map(|p| coarse.contains(&p.t.to_bits()))
        .collect();
    march(field, y0, &fine, Method::Euler, |k| keep[k])
}
