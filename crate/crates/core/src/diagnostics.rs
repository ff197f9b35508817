//! Lyapunov functions, residuals and decay envelopes evaluated along trajectories.

use crate::dynamics::{
    gradient_sum, sliding_surface, zgs_weighted_velocity_sum, AlgorithmParams, SystemState,
    Variant, ZgsSystem,
};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::integrator::Solution;
use crate::objective::ObjectiveModel;
use crate::scaling::StageSchedule;
use crate::Vector;

/// Multiplicative slack allowed on envelope checks.
pub const TOL_ENV: f64 = 1e-2;
/// Lyapunov values below this fraction of the anchor value are at the
/// resolution of the integrated state and are not counted as violations.
pub const ENV_FLOOR_REL: f64 = 1e-12;

/// Constants that appear in the decay bounds of both algorithms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants {
    pub gamma_max: f64,
    pub psi_max: f64,
    pub lambda2: f64,
    /// `lambda2 c kappa2 / Gamma_max`, decay exponent of the multi-stage bound.
    pub alpha1: f64,
    pub p: f64,
    pub delta: f64,
    pub sigma_s: f64,
    /// `kappa1 sigma_S`, decay exponent of the single-stage bound.
    pub alpha2: f64,
}

/// Computes the envelope constants. When `p`/`delta` are not given,
/// `delta = 2 kappa2 / (4 c lambda2)` and `p = 2 delta`.
pub fn theory_constants(
    graph: &Graph,
    models: &[Box<dyn ObjectiveModel>],
    params: &AlgorithmParams,
    p_choice: Option<f64>,
    delta_choice: Option<f64>,
) -> Result<TheoryConstants> {
    let lambda2 = graph.assert_connected()?.lambda2;
    let gamma_max = models
        .iter()
        .map(|m| m.bounds().gamma_upper)
        .fold(f64::NEG_INFINITY, f64::max);
    let psi_max = models
        .iter()
        .map(|m| m.bounds().psi)
        .fold(f64::NEG_INFINITY, f64::max);
    let (c, k1, k2) = (params.c, params.kappa1, params.kappa2);

    let lower = k2 / (4.0 * c * lambda2);
    let delta = delta_choice.unwrap_or(2.0 * lower);
    let p = p_choice.unwrap_or(2.0 * delta);
    if !(p > delta && delta > lower) {
        return Err(Error::InvalidConstants(format!(
            "need p > delta > kappa2/(4 c lambda2) = {lower}, got p = {p}, delta = {delta}"
        )));
    }

    let alpha1 = lambda2 * c * k2 / gamma_max;
    let sigma_s = (2.0 * c * lambda2 / psi_max - k2 / (2.0 * delta * psi_max))
        .min(2.0 * k2 * (p - delta) / p);
    let alpha2 = k1 * sigma_s;
    if !(alpha1 > 0.0 && sigma_s > 0.0 && alpha2 > 0.0) {
        return Err(Error::InvalidConstants(format!(
            "alpha1 = {alpha1}, sigma_S = {sigma_s}, alpha2 = {alpha2} must be positive"
        )));
    }
    Ok(TheoryConstants {
        gamma_max,
        psi_max,
        lambda2,
        alpha1,
        p,
        delta,
        sigma_s,
        alpha2,
    })
}

/// `V_i = |s_i|^2 / 2` per agent.
pub fn lyapunov_vi(
    state: &SystemState,
    models: &[Box<dyn ObjectiveModel>],
    params: &AlgorithmParams,
) -> Result<Vec<f64>> {
    Ok(sliding_surface(state, models, params)?
        .iter()
        .map(|s| 0.5 * s.norm_squared())
        .collect())
}

fn bregman(model: &dyn ObjectiveModel, at: &Vector, from: &Vector) -> f64 {
    model.bregman(at, from)
}

/// `sum_i [f_i(x*) - f_i(x_i) - grad f_i(x_i)^T (x* - x_i)]`.
pub fn lyapunov_vm(state: &SystemState, models: &[Box<dyn ObjectiveModel>], xstar: &Vector) -> f64 {
    state
        .agents
        .iter()
        .zip(models)
        .map(|(a, m)| bregman(m.as_ref(), xstar, &a.x))
        .sum()
}

/// `p |s|^2 / 2 + V_M`.
pub fn lyapunov_vs(
    state: &SystemState,
    models: &[Box<dyn ObjectiveModel>],
    xstar: &Vector,
    params: &AlgorithmParams,
    consts: &TheoryConstants,
) -> Result<f64> {
    let lower = params.kappa2 / (4.0 * params.c * consts.lambda2);
    if !(consts.p > consts.delta && consts.delta > lower) {
        return Err(Error::InvalidConstants(format!(
            "p = {}, delta = {} violate p > delta > {lower}",
            consts.p, consts.delta
        )));
    }
    let s_sq: f64 = sliding_surface(state, models, params)?
        .iter()
        .map(|s| s.norm_squared())
        .sum();
    Ok(0.5 * consts.p * s_sq + lyapunov_vm(state, models, xstar))
}

/// Normalized squared distance to the optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub value: f64,
    /// False when the agent started exactly at `x*`; `value` is then the
    /// absolute squared distance.
    pub normalized: bool,
}

/// `Er_i = |x_i(t) - x*|^2 / |x_i(t0) - x*|^2`.
pub fn residual_er(state: &SystemState, initial: &SystemState, xstar: &Vector) -> Vec<Residual> {
    state
        .agents
        .iter()
        .zip(&initial.agents)
        .map(|(a, a0)| {
            let num = (&a.x - xstar).norm_squared();
            let den = (&a0.x - xstar).norm_squared();
            if den > 0.0 {
                Residual {
                    value: num / den,
                    normalized: true,
                }
            } else {
                Residual {
                    value: num,
                    normalized: false,
                }
            }
        })
        .collect()
}

/// Every scalar monitored at one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSample {
    pub er: Vec<f64>,
    pub s_norm: Vec<f64>,
    pub v_m: f64,
    pub v_s: f64,
    pub grad_sum_norm: f64,
    /// `|sum_i f_i(x_i) - sum_i f_i(x*)|`.
    pub f_err: f64,
    /// `|sum_i H_i x_i'|`.
    pub zgs2_norm: f64,
    /// `|sum_i phi_i|`.
    pub phi_sum_norm: f64,
    /// `|sum_i s_i - sum_i grad f_i(x_i)|`.
    pub surface_gap: f64,
}

impl DiagnosticsSample {
    pub fn max_er(&self) -> f64 {
        self.er.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: SystemState,
    pub diag: DiagnosticsSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Deadline of every stage.
    pub stage_boundaries: Vec<f64>,
    /// Guard point of every stage.
    pub guards: Vec<f64>,
    pub stage_starts: Vec<f64>,
    pub variant: Variant,
    pub xstar: Vector,
}

impl Trajectory {
    /// Attaches diagnostics to every point of an integrated solution.
    pub fn from_solution(
        system: &ZgsSystem<'_>,
        solution: &Solution,
        xstar: &Vector,
        consts: &TheoryConstants,
    ) -> Result<Self> {
        let (n, dim) = (system.agent_count(), system.dim());
        let initial = SystemState::from_flat(solution.times[0], &solution.states[0], n, dim)?;
        let f_star: f64 = system.models.iter().map(|m| m.value(xstar)).sum();
        let mut samples = Vec::with_capacity(solution.times.len());
        for (&t, flat) in solution.times.iter().zip(&solution.states) {
            let state = SystemState::from_flat(t, flat, n, dim)?;
            let diag = sample_diagnostics(system, &state, &initial, xstar, f_star, consts)?;
            samples.push(Sample { t, state, diag });
        }
        let sched = system.schedule;
        Ok(Trajectory {
            samples,
            stage_boundaries: sched.stages().iter().map(|s| s.deadline()).collect(),
            guards: (0..sched.stages().len()).map(|k| sched.guard(k)).collect(),
            stage_starts: sched.stages().iter().map(|s| s.t_start).collect(),
            variant: system.params.variant,
            xstar: xstar.clone(),
        })
    }

    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("non-empty trajectory")
    }

    /// The sample taken exactly at `t`, if any.
    pub fn sample_at(&self, t: f64) -> Option<&Sample> {
        self.samples.iter().find(|s| s.t == t)
    }

    pub fn agent_count(&self) -> usize {
        self.first().state.agent_count()
    }

    pub fn dim(&self) -> usize {
        self.first().state.dim()
    }
}

fn sample_diagnostics(
    system: &ZgsSystem<'_>,
    state: &SystemState,
    initial: &SystemState,
    xstar: &Vector,
    f_star: f64,
    consts: &TheoryConstants,
) -> Result<DiagnosticsSample> {
    let models = system.models;
    let surfaces = system.surface(state)?;
    let grad_sum = gradient_sum(state, models);
    let surface_sum = surfaces
        .iter()
        .fold(Vector::zeros(state.dim()), |acc, s| acc + s);
    let derivative = system.rhs(state)?;
    let f_val: f64 = state
        .agents
        .iter()
        .zip(models)
        .map(|(a, m)| m.value(&a.x))
        .sum();
    Ok(DiagnosticsSample {
        er: residual_er(state, initial, xstar)
            .iter()
            .map(|r| r.value)
            .collect(),
        s_norm: surfaces.iter().map(|s| s.norm()).collect(),
        v_m: lyapunov_vm(state, models, xstar),
        v_s: lyapunov_vs(state, models, xstar, &system.params, consts)?,
        grad_sum_norm: grad_sum.norm(),
        f_err: (f_val - f_star).abs(),
        zgs2_norm: zgs_weighted_velocity_sum(state, &derivative, models).norm(),
        phi_sum_norm: state.phi_sum().norm(),
        surface_gap: (surface_sum - grad_sum).norm(),
    })
}

/// Outcome of comparing a Lyapunov function against its decay bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeReport {
    pub anchor_t: f64,
    pub anchor_value: f64,
    pub alpha: f64,
    /// Largest `V(t) / (V(anchor) rho(t)^-alpha)` over the checked samples.
    pub max_ratio: f64,
    pub worst_t: f64,
    pub samples_checked: usize,
    pub tolerance: f64,
    /// Absolute floor, `ENV_FLOOR_REL * anchor_value`.
    pub floor: f64,
    /// Samples with `V > (1 + tolerance) * bound` and `V > floor`.
    pub violations: usize,
}

impl EnvelopeReport {
    /// No sample above both the relaxed bound and the resolution floor.
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    /// The bound holds within `tolerance` at every sample, floor ignored.
    pub fn strictly_passed(&self) -> bool {
        self.max_ratio <= 1.0 + self.tolerance
    }
}

/// Envelope for the active variant: `V_S(t) <= V_S(t0) rho1^-alpha2` on every
/// sample for the single-stage algorithm, `V_M(t) <= V_M(t1) rho2^-alpha1` on
/// every sample from the second stage onwards for the multi-stage one.
pub fn envelope_report(
    traj: &Trajectory,
    consts: &TheoryConstants,
    schedule: &StageSchedule,
) -> Result<EnvelopeReport> {
    let (stage, alpha, anchor_t) = match traj.variant {
        Variant::Ss => (schedule.stage(0), consts.alpha2, schedule.stage(0).t_start),
        Variant::Ms => (schedule.stage(1), consts.alpha1, schedule.stage(1).t_start),
    };
    let value = |s: &Sample| match traj.variant {
        Variant::Ss => s.diag.v_s,
        Variant::Ms => s.diag.v_m,
    };
    let anchor = traj.sample_at(anchor_t).ok_or_else(|| {
        Error::Validation(format!(
            "trajectory has no sample at anchor time {anchor_t}"
        ))
    })?;
    let anchor_value = value(anchor);
    let floor = ENV_FLOOR_REL * anchor_value;

    let mut max_ratio: f64 = 0.0;
    let mut violations = 0;
    let mut worst_t = anchor_t;
    let mut samples_checked = 0;
    for s in traj.samples.iter().filter(|s| s.t >= anchor_t) {
        let bound = stage.envelope(s.t, 0.0, alpha, anchor_value);
        let v = value(s);
        let ratio = if bound > 0.0 {
            v / bound
        } else if v <= 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        if ratio > max_ratio {
            max_ratio = ratio;
            worst_t = s.t;
        }
        if v > (1.0 + TOL_ENV) * bound && v > floor {
            violations += 1;
        }
        samples_checked += 1;
    }
    Ok(EnvelopeReport {
        anchor_t,
        anchor_value,
        alpha,
        max_ratio,
        worst_t,
        samples_checked,
        tolerance: TOL_ENV,
        floor,
        violations,
    })
}

/// Like [`envelope_report`] but fails with [`Error::EnvelopeViolation`] at the
/// worst sample when any sample above the resolution floor exceeds the bound
/// by more than [`TOL_ENV`].
pub fn envelope_check(
    traj: &Trajectory,
    consts: &TheoryConstants,
    schedule: &StageSchedule,
) -> Result<EnvelopeReport> {
    let report = envelope_report(traj, consts, schedule)?;
    if report.passed() {
        Ok(report)
    } else {
        Err(Error::EnvelopeViolation {
            t: report.worst_t,
            ratio: report.max_ratio,
        })
    }
}

/// Intermediate quantities of the consensus bound on `V_M`, which holds
/// whenever the gradients sum to zero:
///
/// ```text
/// V_M <= sum_i B_i(x_bar)                      (Bregman terms at the mean)
///     <= Gamma_max / 2 sum_i |x_i - x_bar|^2
///     <= Gamma_max / N x^T (L_complete kron I) x
///     <= Gamma_max / lambda2 x^T (L kron I) x
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct BoundChain {
    pub mean: Vector,
    pub v_m: f64,
    pub bregman_at_mean: f64,
    pub spread_bound: f64,
    pub complete_graph_bound: f64,
    pub fiedler_bound: f64,
}

impl BoundChain {
    pub fn holds(&self, tol: f64) -> bool {
        let chain = [
            self.v_m,
            self.bregman_at_mean,
            self.spread_bound,
            self.complete_graph_bound,
            self.fiedler_bound,
        ];
        chain.windows(2).all(|w| w[0] <= w[1] + tol)
    }
}

pub fn consensus_bound_chain(
    state: &SystemState,
    models: &[Box<dyn ObjectiveModel>],
    graph: &Graph,
    xstar: &Vector,
    consts: &TheoryConstants,
) -> Result<BoundChain> {
    let n = state.agent_count();
    let xs = state.xs();
    let mean = xs.iter().fold(Vector::zeros(state.dim()), |acc, x| acc + x) / n as f64;
    let bregman_at_mean = state
        .agents
        .iter()
        .zip(models)
        .map(|(a, m)| bregman(m.as_ref(), &mean, &a.x))
        .sum();
    let spread: f64 = xs.iter().map(|x| (x - &mean).norm_squared()).sum();
    let complete = Graph::complete(n)?;
    Ok(BoundChain {
        mean,
        v_m: lyapunov_vm(state, models, xstar),
        bregman_at_mean,
        spread_bound: 0.5 * consts.gamma_max * spread,
        complete_graph_bound: consts.gamma_max / n as f64
            * complete.consensus_quadratic_form(&xs)?,
        fiedler_bound: consts.gamma_max / consts.lambda2 * graph.consensus_quadratic_form(&xs)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{reference_suite, QuadraticObjective};

    fn boxed(models: Vec<QuadraticObjective>) -> Vec<Box<dyn ObjectiveModel>> {
        models
            .into_iter()
            .map(|m| Box::new(m) as Box<dyn ObjectiveModel>)
            .collect()
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn reference_constants() {
        let g = Graph::ring(6).unwrap();
        let models = boxed(reference_suite());
        let ss = AlgorithmParams::new(2.0, 3.0, 1.0, Variant::Ss).unwrap();
        let c = theory_constants(&g, &models, &ss, None, None).unwrap();
        assert!((c.lambda2 - 1.0).abs() < 1e-9);
        assert_eq!((c.gamma_max, c.psi_max), (6.0, 6.0));
        assert!((c.delta - 1.5).abs() < 1e-9);
        assert!((c.p - 3.0).abs() < 1e-9);
        // min{2/6 - 3/(2*1.5*6), 2*3*1.5/3} = 1/6
        assert!((c.sigma_s - 1.0 / 6.0).abs() < 1e-9);
        assert!((c.alpha2 - 1.0 / 3.0).abs() < 1e-9);
        assert!((c.alpha1 - 0.5).abs() < 1e-9);

        let explicit = theory_constants(&g, &models, &ss, Some(3.0), Some(1.5)).unwrap();
        assert!((explicit.sigma_s - c.sigma_s).abs() < 1e-12);
    }

    #[test]
    fn constants_rejected_below_lower_bound() {
        let g = Graph::ring(6).unwrap();
        let models = boxed(reference_suite());
        let ss = AlgorithmParams::new(2.0, 3.0, 1.0, Variant::Ss).unwrap();
        assert!(matches!(
            theory_constants(&g, &models, &ss, Some(3.0), Some(0.75)),
            Err(Error::InvalidConstants(_))
        ));
        assert!(matches!(
            theory_constants(&g, &models, &ss, Some(1.0), Some(1.5)),
            Err(Error::InvalidConstants(_))
        ));
    }

    #[test]
    fn vi_values() {
        let models = boxed(vec![QuadraticObjective::diagonal(&[1.0], &[0.0]).unwrap()]);
        let params = AlgorithmParams::new(1.0, 1.0, 1.0, Variant::Ss).unwrap();
        // s = 2 (x - 0) = 2 at x = 1
        let st = SystemState::with_zero_integrals(0.0, vec![v(&[1.0])]);
        assert_eq!(lyapunov_vi(&st, &models, &params).unwrap(), vec![2.0]);
        let st = SystemState::with_zero_integrals(0.0, vec![v(&[0.0])]);
        assert_eq!(lyapunov_vi(&st, &models, &params).unwrap(), vec![0.0]);
    }

    #[test]
    fn vm_for_quadratics_is_q_weighted_distance() {
        let models = boxed(reference_suite());
        let xstar = v(&[1.0, 1.5]);
        let at_opt = SystemState::with_zero_integrals(0.0, vec![xstar.clone(); 6]);
        assert_eq!(lyapunov_vm(&at_opt, &models, &xstar), 0.0);

        let xs: Vec<Vector> = (0..6).map(|i| v(&[i as f64, -(i as f64) / 2.0])).collect();
        let st = SystemState::with_zero_integrals(0.0, xs.clone());
        let expected: f64 = reference_suite()
            .iter()
            .zip(&xs)
            .map(|(m, x)| {
                let d = &xstar - x;
                d.dot(&(m.q() * &d))
            })
            .sum();
        assert!((lyapunov_vm(&st, &models, &xstar) - expected).abs() < 1e-10);
    }

    #[test]
    fn scalar_bregman_example() {
        // f = (x - a)^2 at x = a + 1: term equals (x* - (a + 1))^2
        let a = 0.7;
        let models = boxed(vec![QuadraticObjective::diagonal(&[1.0], &[a]).unwrap()]);
        let st = SystemState::with_zero_integrals(0.0, vec![v(&[a + 1.0])]);
        for xs in [-2.0, 0.0, 3.5] {
            let vm = lyapunov_vm(&st, &models, &v(&[xs]));
            assert!((vm - (xs - a - 1.0).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn vs_reduces_to_vm_on_zero_surface() {
        let g = Graph::ring(6).unwrap();
        let models = boxed(reference_suite());
        let params = AlgorithmParams::new(2.0, 3.0, 1.0, Variant::Ss).unwrap();
        let consts = theory_constants(&g, &models, &params, None, None).unwrap();
        let xstar = v(&[1.0, 1.5]);
        let xs: Vec<Vector> = (0..6).map(|i| v(&[0.3 * i as f64, 1.0])).collect();
        let mut st = SystemState::with_zero_integrals(0.0, xs);
        for (a, m) in st.agents.iter_mut().zip(&models) {
            a.phi = -m.gradient(&a.x);
        }
        let vs = lyapunov_vs(&st, &models, &xstar, &params, &consts).unwrap();
        assert!((vs - lyapunov_vm(&st, &models, &xstar)).abs() < 1e-12);

        let opt = SystemState {
            t: 0.0,
            agents: models
                .iter()
                .map(|m| crate::AgentState {
                    x: xstar.clone(),
                    phi: -m.gradient(&xstar),
                })
                .collect(),
        };
        assert!(
            lyapunov_vs(&opt, &models, &xstar, &params, &consts)
                .unwrap()
                .abs()
                < 1e-12
        );

        let bad = TheoryConstants {
            delta: 0.5,
            ..consts
        };
        assert!(lyapunov_vs(&st, &models, &xstar, &params, &bad).is_err());
    }

    #[test]
    fn residual_examples() {
        let xstar = v(&[1.0, 1.5]);
        let x0 = SystemState::with_zero_integrals(0.0, vec![v(&[3.0, 1.5]), v(&[1.0, 1.5])]);
        let er0 = residual_er(&x0, &x0, &xstar);
        assert_eq!(
            er0[0],
            Residual {
                value: 1.0,
                normalized: true
            }
        );
        assert!(!er0[1].normalized);
        assert_eq!(er0[1].value, 0.0);

        let half = SystemState::with_zero_integrals(0.1, vec![v(&[2.0, 1.5]), v(&[1.0, 2.5])]);
        let er = residual_er(&half, &x0, &xstar);
        assert_eq!(er[0].value, 0.25);
        assert_eq!(er[1].value, 1.0);
        let at = SystemState::with_zero_integrals(0.1, vec![xstar.clone(), xstar.clone()]);
        assert_eq!(residual_er(&at, &x0, &xstar)[0].value, 0.0);
    }

    #[test]
    fn bound_chain_on_balanced_state() {
        let g = Graph::ring(6).unwrap();
        let models = boxed(reference_suite());
        let params = AlgorithmParams::new(2.0, 3.0, 1.0, Variant::Ms).unwrap();
        let consts = theory_constants(&g, &models, &params, None, None).unwrap();
        let xstar = v(&[1.0, 1.5]);
        // shift x* along a direction and rebalance so that sum grad f_i = 0:
        // for quadratics, sum 2 Q_i (x_i - a_i) = 0 with x_i = x* + d_i
        // requires sum Q_i d_i = 0.
        let suite = reference_suite();
        let mut ds: Vec<Vector> = (0..5)
            .map(|i| v(&[0.2 * i as f64 - 0.3, 0.1 * i as f64]))
            .collect();
        let partial = suite[..5]
            .iter()
            .zip(&ds)
            .fold(Vector::zeros(2), |acc, (m, d)| acc + m.q() * d);
        ds.push(-suite[5].q().clone().try_inverse().unwrap() * partial);
        let xs: Vec<Vector> = ds.iter().map(|d| &xstar + d).collect();
        let st = SystemState::with_zero_integrals(0.0, xs);
        assert!(gradient_sum(&st, &models).norm() < 1e-12);
        let chain = consensus_bound_chain(&st, &models, &g, &xstar, &consts).unwrap();
        assert!(chain.holds(1e-12), "{chain:?}");
        assert!(chain.v_m > 0.0);
    }
}
