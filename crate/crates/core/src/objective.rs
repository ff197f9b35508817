//! Local objective models `f_i` and the global-minimizer oracle.

use std::fmt::Debug;

use crate::error::{Error, Result};
use crate::linalg;
use crate::{Matrix, Vector};

/// Strong-convexity and smoothness constants of a local objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityBounds {
    /// Strong-convexity modulus: `gamma I <= hess f`.
    pub gamma: f64,
    /// Hessian upper bound: `hess f <= gamma_upper I`.
    pub gamma_upper: f64,
    /// Gradient Lipschitz (smoothness) constant.
    pub psi: f64,
}

/// Value, gradient and Hessian at one point.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vector,
    pub hessian: Matrix,
}

/// A twice continuously differentiable, strongly convex local objective.
pub trait ObjectiveModel: Debug + Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn gradient(&self, x: &Vector) -> Vector;
    fn hessian(&self, x: &Vector) -> Matrix;
    fn bounds(&self) -> ConvexityBounds;

    /// Bregman divergence `f(at) - f(from) - grad f(from)^T (at - from)`.
    fn bregman(&self, at: &Vector, from: &Vector) -> f64 {
        self.value(at) - self.value(from) - self.gradient(from).dot(&(at - from))
    }

    /// Closed-form description when the model is quadratic.
    fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        None
    }
}

/// Checked evaluation of value, gradient and Hessian.
pub fn evaluate(model: &dyn ObjectiveModel, x: &Vector) -> Result<Evaluation> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(format!("x = {:?}", x.as_slice())));
    }
    Ok(Evaluation {
        value: model.value(x),
        gradient: model.gradient(x),
        hessian: model.hessian(x),
    })
}

pub fn convexity_bounds(model: &dyn ObjectiveModel) -> ConvexityBounds {
    model.bounds()
}

/// `f(x) = (x - a)^T Q (x - a) + offset` with `Q` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    q: Matrix,
    center: Vector,
    offset: f64,
    bounds: ConvexityBounds,
}

impl QuadraticObjective {
    pub fn new(q: Matrix, center: Vector, offset: f64) -> Result<Self> {
        let n = center.len();
        if n == 0 {
            return Err(Error::Validation("objective dimension must be >= 1".into()));
        }
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: q.nrows().max(q.ncols()),
            });
        }
        if q.iter().chain(center.iter()).any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(Error::NonFiniteInput("quadratic coefficients".into()));
        }
        if !linalg::is_symmetric(&q, 1e-12 * q.norm().max(1.0)) {
            return Err(Error::Validation("Q must be symmetric".into()));
        }
        let eig = linalg::symmetric_eigenvalues(&q)?;
        let (lo, hi) = (eig[0], eig[n - 1]);
        if lo <= 0.0 {
            return Err(Error::Validation(format!(
                "Q must be positive definite (smallest eigenvalue {lo:e})"
            )));
        }
        Ok(QuadraticObjective {
            q,
            center,
            offset,
            bounds: ConvexityBounds {
                gamma: 2.0 * lo,
                gamma_upper: 2.0 * hi,
                psi: 2.0 * hi,
            },
        })
    }

    /// `sum_k w_k (x_k - a_k)^2`.
    pub fn diagonal(weights: &[f64], center: &[f64]) -> Result<Self> {
        Self::new(
            Matrix::from_diagonal(&Vector::from_column_slice(weights)),
            Vector::from_column_slice(center),
            0.0,
        )
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Same model with its center moved by `shift`.
    pub fn translated(&self, shift: &Vector) -> Self {
        QuadraticObjective {
            center: &self.center + shift,
            ..self.clone()
        }
    }
}

impl ObjectiveModel for QuadraticObjective {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        let d = x - &self.center;
        d.dot(&(&self.q * &d)) + self.offset
    }

    fn gradient(&self, x: &Vector) -> Vector {
        2.0 * (&self.q * (x - &self.center))
    }

    fn hessian(&self, _x: &Vector) -> Matrix {
        2.0 * &self.q
    }

    fn bounds(&self) -> ConvexityBounds {
        self.bounds
    }

    // exact, avoids cancelling the offset and large function values
    fn bregman(&self, at: &Vector, from: &Vector) -> f64 {
        let d = at - from;
        d.dot(&(&self.q * &d))
    }

    fn as_quadratic(&self) -> Option<&QuadraticObjective> {
        Some(self)
    }
}

/// Newton iteration cap for [`global_minimizer`].
pub const NEWTON_MAX_ITER: usize = 100;
const NEWTON_MAX_HALVINGS: usize = 30;
const MINIMIZER_TOL: f64 = 1e-10;

/// Minimizer of `sum_i f_i`, by a linear solve when every model is quadratic and
/// by damped Newton otherwise.
///
/// Only diagnostics use this; the distributed dynamics never see `x*`.
pub fn global_minimizer(models: &[&dyn ObjectiveModel]) -> Result<Vector> {
    let first = models
        .first()
        .ok_or_else(|| Error::Validation("no objectives".into()))?;
    let n = first.dim();
    if let Some(m) = models.iter().find(|m| m.dim() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.dim(),
        });
    }

    let sum_grad = |x: &Vector| {
        models
            .iter()
            .fold(Vector::zeros(n), |acc, m| acc + m.gradient(x))
    };
    let sum_hess = |x: &Vector| {
        models
            .iter()
            .fold(Matrix::zeros(n, n), |acc, m| acc + m.hessian(x))
    };
    let sum_val = |x: &Vector| models.iter().map(|m| m.value(x)).sum::<f64>();

    if models.iter().all(|m| m.as_quadratic().is_some()) {
        // sum_i 2 Q_i (x - a_i) = 0  <=>  (sum Q_i) x = sum Q_i a_i
        let mut lhs = Matrix::zeros(n, n);
        let mut rhs = Vector::zeros(n);
        for q in models.iter().filter_map(|m| m.as_quadratic()) {
            lhs += q.q();
            rhs += q.q() * q.center();
        }
        let chol = lhs.cholesky().ok_or(Error::Validation(
            "sum of Q matrices is not positive definite".into(),
        ))?;
        let mut x = chol.solve(&rhs);
        // one step of iterative refinement
        let r = sum_grad(&x);
        x -= chol.solve(&(0.5 * r));
        return Ok(x);
    }

    let mut x = Vector::zeros(n);
    for _ in 0..NEWTON_MAX_ITER {
        let g = sum_grad(&x);
        if g.norm() <= MINIMIZER_TOL {
            return Ok(x);
        }
        let step = sum_hess(&x)
            .cholesky()
            .ok_or(Error::SingularHessian { agent: 0 })?
            .solve(&g);
        let f0 = sum_val(&x);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..NEWTON_MAX_HALVINGS {
            let cand = &x - t * &step;
            if sum_val(&cand) <= f0 || sum_grad(&cand).norm() < g.norm() {
                x = cand;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if sum_grad(&x).norm() <= MINIMIZER_TOL {
        Ok(x)
    } else {
        Err(Error::ConvergenceFailure {
            what: "damped Newton",
            iterations: NEWTON_MAX_ITER,
        })
    }
}

/// Checks both gradient-monotonicity inequalities
/// `gamma |d|^2 <= (grad f(x1) - grad f(x2))^T d <= Gamma |d|^2`, `d = x1 - x2`,
/// with `1e-9` slack.
///
/// Panics if `x1 == x2`.
pub fn strong_convexity_property_check(
    model: &dyn ObjectiveModel,
    x1: &Vector,
    x2: &Vector,
) -> bool {
    let d = x1 - x2;
    let dd = d.norm_squared();
    assert!(dd > 0.0, "x1 and x2 must differ");
    let b = model.bounds();
    let inner = (model.gradient(x1) - model.gradient(x2)).dot(&d);
    let slack = 1e-9 * dd.max(1.0);
    inner >= b.gamma * dd - slack && inner <= b.gamma_upper * dd + slack
}

/// Checks the two Bregman-divergence bounds
/// `gamma/2 |d|^2 <= f(x1) - f(x2) - grad f(x2)^T d <= Gamma/2 |d|^2`.
pub fn bregman_property_check(model: &dyn ObjectiveModel, x1: &Vector, x2: &Vector) -> bool {
    let d = x1 - x2;
    let dd = d.norm_squared();
    let b = model.bounds();
    let breg = model.value(x1) - model.value(x2) - model.gradient(x2).dot(&d);
    let slack = 1e-9 * (dd + model.value(x1).abs() + model.value(x2).abs()).max(1.0);
    breg >= 0.5 * b.gamma * dd - slack && breg <= 0.5 * b.gamma_upper * dd + slack
}

/// The six two-dimensional quadratics of the reference experiment.
pub fn reference_suite() -> Vec<QuadraticObjective> {
    [
        ([1.0, 1.0], [1.0, 2.0]),
        ([1.0, 1.0], [3.0, 4.0]),
        ([1.0, 1.0], [5.0, 6.0]),
        ([1.0, 2.0], [0.0, 0.0]),
        ([2.0, 1.0], [0.0, 0.0]),
        ([3.0, 2.0], [0.0, 0.0]),
    ]
    .iter()
    .map(|(w, a)| QuadraticObjective::diagonal(w, a).expect("reference suite is SPD"))
    .collect()
}
