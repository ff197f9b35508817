//! Prescribed-time zero-gradient-sum (ZGS) distributed optimization.
//!
//! The crate simulates two continuous-time algorithms in which `N` agents,
//! each holding a private strongly convex objective `f_i`, cooperate over an
//! undirected graph to reach the minimizer of `sum_i f_i` before a
//! user-chosen deadline:
//!
//! * the multi-stage variant drives every agent onto an integral sliding
//!   manifold during a first interval and reaches consensus on the optimum
//!   during a second one;
//! * the single-stage variant does both within a single interval using one
//!   time-varying scaling function.
//!
//! Modules are layered bottom-up: [`graph`], [`objective`] and [`scaling`]
//! are pure building blocks, [`dynamics`] assembles the vector fields,
//! [`integrator`] advances them on a deadline-aware grid, [`diagnostics`]
//! evaluates the Lyapunov functions and envelopes along trajectories and
//! [`scenario`] wires everything behind a config file.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod integrator;
pub mod linalg;
pub mod objective;
pub mod scaling;
pub mod scenario;

pub use diagnostics::{DiagnosticsSample, EnvelopeReport, Sample, TheoryConstants, Trajectory};
pub use dynamics::{AgentState, AlgorithmParams, SystemState, Variant, ZgsSystem};
pub use error::{Error, Result};
pub use graph::{Edge, Graph, SpectralInfo};
pub use integrator::{IntegratorConfig, Method, Solution, TimeGrid, VectorField};
pub use objective::{ConvexityBounds, Evaluation, ObjectiveModel, QuadraticObjective};
pub use scaling::{ScalingSpec, StageSchedule};
pub use scenario::{RunOutput, RunReport, Scenario, ScenarioConfig};

/// Dense column vector used for per-agent quantities.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for Laplacians and Hessians.
pub type Matrix = nalgebra::DMatrix<f64>;
