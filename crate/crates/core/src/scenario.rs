//! Scenario files, presets, simulation runs and CSV export.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! algorithm = "ss"          # "ms" or "ss"
//! seed = 42
//!
//! [graph]
//! agents = 3
//! edges = [[1, 2], [2, 3, 0.5]]   # 1-based (i, j[, weight]); weight defaults to 1
//!
//! [[objectives]]                  # one per agent: f(x) = (x - center)^T Q (x - center) + offset
//! q = [1.0, 0.0, 0.0, 1.0]        # row-major
//! center = [1.0, 2.0]
//!
//! [params]
//! kappa1 = 2.0
//! kappa2 = 3.0
//! c = 1.0
//!
//! [schedule]
//! T1 = 0.3
//! h1 = 2.3                        # T2/h2 required for "ms", forbidden for "ss"
//! ```
//!
//! Optional tables: `[integrator]`, `[initial]` (explicit `x` or a random box),
//! `[theory]` (`p`, `delta`) and `[output]`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    envelope_report, theory_constants, EnvelopeReport, TheoryConstants, Trajectory,
};
use crate::dynamics::{AlgorithmParams, SystemState, Variant, ZgsSystem};
use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::integrator::{
    build_time_grid_with_stiffness, integrate, IntegratorConfig, Method, TimeGrid,
};
use crate::objective::{global_minimizer, ObjectiveModel, QuadraticObjective};
use crate::scaling::{StageSchedule, DEFAULT_EPSILON_REL};
use crate::{Matrix, Vector};

pub const DEFAULT_SEED: u64 = 42;
/// Length of the post-deadline segment, as a fraction of the prescribed horizon.
pub const POST_DEADLINE_FRACTION: f64 = 0.2;
/// Residual level reported as the convergence time in [`RunReport`].
pub const ER_THRESHOLD: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub algorithm: Variant,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub graph: GraphConfig,
    pub objectives: Vec<ObjectiveConfig>,
    pub params: ParamsConfig,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub integrator: IntegratorOverrides,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub theory: TheoryConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub agents: usize,
    pub edges: Vec<EdgeSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgeSpec {
    Pair(usize, usize),
    Weighted(usize, usize, f64),
    Table(Edge),
}

impl From<EdgeSpec> for Edge {
    fn from(e: EdgeSpec) -> Edge {
        match e {
            EdgeSpec::Pair(i, j) => Edge::new(i, j),
            EdgeSpec::Weighted(i, j, w) => Edge::weighted(i, j, w),
            EdgeSpec::Table(e) => e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    /// Row-major `n x n`.
    pub q: Vec<f64>,
    pub center: Vec<f64>,
    #[serde(default)]
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub kappa1: f64,
    pub kappa2: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub t0: f64,
    #[serde(rename = "T1")]
    pub t1: f64,
    pub h1: f64,
    #[serde(rename = "T2", default, skip_serializing_if = "Option::is_none")]
    pub t2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_rel: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_cap_theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodName>,
}

impl IntegratorOverrides {
    pub fn apply(&self) -> IntegratorConfig {
        let d = IntegratorConfig::default();
        IntegratorConfig {
            base_step: self.base_step.unwrap_or(d.base_step),
            gain_cap_theta: self.gain_cap_theta.unwrap_or(d.gain_cap_theta),
            min_step: self.min_step.unwrap_or(d.min_step),
            max_steps: self.max_steps.unwrap_or(d.max_steps),
            method: match self.method {
                Some(MethodName::Euler) => Method::Euler,
                _ => d.method,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// Explicit per-agent starting points; overrides the random box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_box_min")]
    pub box_min: f64,
    #[serde(default = "default_box_max")]
    pub box_max: f64,
}

fn default_box_min() -> f64 {
    -5.0
}

fn default_box_max() -> f64 {
    5.0
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            x: None,
            box_min: default_box_min(),
            box_max: default_box_max(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_csv")]
    pub csv: String,
    #[serde(default = "default_plots")]
    pub plots: bool,
}

fn default_csv() -> String {
    "trajectory.csv".into()
}

fn default_plots() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            csv: default_csv(),
            plots: default_plots(),
        }
    }
}

/// A fully validated, ready-to-run scenario.
#[derive(Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub graph: Graph,
    pub models: Vec<Box<dyn ObjectiveModel>>,
    pub params: AlgorithmParams,
    pub schedule: StageSchedule,
    pub integrator: IntegratorConfig,
    pub initial: SystemState,
    pub xstar: Vector,
    pub constants: TheoryConstants,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Runs every invariant check eagerly and builds the scenario.
    pub fn validate(self) -> Result<Scenario> {
        let n = self.graph.agents;
        let edges: Vec<Edge> = self.graph.edges.iter().map(|&e| e.into()).collect();
        let graph = Graph::from_edges(n, &edges)?;
        graph.assert_connected()?;

        if self.objectives.len() != n {
            return Err(Error::Validation(format!(
                "graph has {n} agents but {} objectives are given",
                self.objectives.len()
            )));
        }
        let dim = self.objectives[0].center.len();
        let mut models: Vec<Box<dyn ObjectiveModel>> = Vec::with_capacity(n);
        for (i, o) in self.objectives.iter().enumerate() {
            if o.center.len() != dim {
                return Err(Error::Validation(format!(
                    "objective {} has dimension {}, expected {dim}",
                    i + 1,
                    o.center.len()
                )));
            }
            if o.q.len() != dim * dim {
                return Err(Error::Validation(format!(
                    "objective {}: q must have {} row-major entries, got {}",
                    i + 1,
                    dim * dim,
                    o.q.len()
                )));
            }
            let q = QuadraticObjective::new(
                Matrix::from_row_slice(dim, dim, &o.q),
                Vector::from_column_slice(&o.center),
                o.offset,
            )
            .map_err(|e| Error::Validation(format!("objective {}: {e}", i + 1)))?;
            models.push(Box::new(q));
        }

        let params = AlgorithmParams::new(
            self.params.kappa1,
            self.params.kappa2,
            self.params.c,
            self.algorithm,
        )?;

        let s = &self.schedule;
        let schedule = match (self.algorithm, s.t2, s.h2) {
            (Variant::Ss, None, None) => StageSchedule::single(s.t0, s.t1, s.h1)?,
            (Variant::Ss, _, _) => {
                return Err(Error::Validation(
                    "T2/h2 are only allowed for the multi-stage algorithm".into(),
                ))
            }
            (Variant::Ms, Some(t2), Some(h2)) => StageSchedule::multi(s.t0, s.t1, s.h1, t2, h2)?,
            (Variant::Ms, _, _) => {
                return Err(Error::Validation(
                    "the multi-stage algorithm requires T2 and h2".into(),
                ))
            }
        };
        let schedule = schedule.with_epsilon_rel(s.epsilon_rel.unwrap_or(DEFAULT_EPSILON_REL))?;

        let integrator = self.integrator.apply();
        integrator.validate()?;

        let xs = self.initial_points(n, dim)?;
        let initial = SystemState::with_zero_integrals(schedule.t_start(), xs);

        let refs: Vec<&dyn ObjectiveModel> = models.iter().map(|m| m.as_ref()).collect();
        let xstar = global_minimizer(&refs)?;
        let constants =
            theory_constants(&graph, &models, &params, self.theory.p, self.theory.delta)?;

        Ok(Scenario {
            config: self,
            graph,
            models,
            params,
            schedule,
            integrator,
            initial,
            xstar,
            constants,
        })
    }

    fn initial_points(&self, n: usize, dim: usize) -> Result<Vec<Vector>> {
        if let Some(xs) = &self.initial.x {
            if xs.len() != n {
                return Err(Error::Validation(format!(
                    "initial.x has {} entries for {n} agents",
                    xs.len()
                )));
            }
            return xs
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    if x.len() != dim {
                        Err(Error::Validation(format!(
                            "initial.x[{}] has dimension {}, expected {dim}",
                            i + 1,
                            x.len()
                        )))
                    } else if x.iter().any(|v| !v.is_finite()) {
                        Err(Error::Validation(format!(
                            "initial.x[{}] is not finite",
                            i + 1
                        )))
                    } else {
                        Ok(Vector::from_column_slice(x))
                    }
                })
                .collect();
        }
        let (lo, hi) = (self.initial.box_min, self.initial.box_max);
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Validation(format!(
                "initial box [{lo}, {hi}] is empty"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok((0..n)
            .map(|_| Vector::from_fn(dim, |_, _| rng.random_range(lo..hi)))
            .collect())
    }
}

/// Reads and validates a scenario file.
pub fn load_config(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    ScenarioConfig::from_toml(&text)?.validate()
}

/// The six-agent reference experiment on the unit-weight ring 1-2-3-4-5-6-1.
pub fn paper_sec4(variant: Variant) -> ScenarioConfig {
    let objectives = crate::objective::reference_suite()
        .iter()
        .map(|q| ObjectiveConfig {
            q: q.q().transpose().as_slice().to_vec(),
            center: q.center().as_slice().to_vec(),
            offset: 0.0,
        })
        .collect();
    let schedule = match variant {
        Variant::Ms => ScheduleConfig {
            t0: 0.0,
            t1: 0.1,
            h1: 3.0,
            t2: Some(0.2),
            h2: Some(2.5),
            epsilon_rel: None,
        },
        Variant::Ss => ScheduleConfig {
            t0: 0.0,
            t1: 0.3,
            h1: 2.3,
            t2: None,
            h2: None,
            epsilon_rel: None,
        },
    };
    ScenarioConfig {
        algorithm: variant,
        seed: DEFAULT_SEED,
        graph: GraphConfig {
            agents: 6,
            edges: (1..=6).map(|i| EdgeSpec::Pair(i, i % 6 + 1)).collect(),
        },
        objectives,
        params: ParamsConfig {
            kappa1: 2.0,
            kappa2: 3.0,
            c: 1.0,
        },
        schedule,
        integrator: IntegratorOverrides::default(),
        initial: InitialConfig::default(),
        theory: TheoryConfig::default(),
        output: OutputConfig::default(),
    }
}

/// Summary of one run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub variant: Variant,
    pub final_er: Vec<f64>,
    /// Per-agent residual at the guard point of the last stage.
    pub guard_er: Vec<f64>,
    /// First sample time at which every agent's residual is below [`ER_THRESHOLD`].
    pub time_to_threshold: Option<f64>,
    pub envelope: EnvelopeReport,
    pub constants: TheoryConstants,
    pub samples: usize,
    pub wall_clock: Duration,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub report: RunReport,
}

impl Scenario {
    pub fn system(&self) -> Result<ZgsSystem<'_>> {
        ZgsSystem::new(&self.graph, &self.models, self.params, &self.schedule)
    }

    /// End of the simulated horizon: final deadline plus the post-deadline segment.
    pub fn horizon(&self) -> f64 {
        self.schedule.final_deadline() + POST_DEADLINE_FRACTION * self.schedule.total_duration()
    }

    /// Grid used by [`Scenario::run`]: the ratio rule tightened by the stage
    /// stiffness measured at the initial state, plus the post-deadline segment.
    pub fn time_grid(&self) -> Result<TimeGrid> {
        let stiffness = self.system()?.stage_stiffness(&self.initial)?;
        build_time_grid_with_stiffness(
            &self.schedule,
            &self.integrator,
            POST_DEADLINE_FRACTION * self.schedule.total_duration(),
            &stiffness,
        )
    }

    /// Integrates through every stage and the post-deadline hold.
    pub fn run(&self) -> Result<RunOutput> {
        let started = Instant::now();
        let system = self.system()?;
        let grid = self.time_grid()?;
        let solution = integrate(&system, &self.initial.to_flat(), &grid, &self.integrator)?;
        let trajectory =
            Trajectory::from_solution(&system, &solution, &self.xstar, &self.constants)?;
        let envelope = envelope_report(&trajectory, &self.constants, &self.schedule)?;

        let last_guard = *trajectory.guards.last().expect("at least one stage");
        let guard_er = trajectory
            .sample_at(last_guard)
            .map(|s| s.diag.er.clone())
            .unwrap_or_default();
        let time_to_threshold = trajectory
            .samples
            .iter()
            .find(|s| s.diag.max_er() <= ER_THRESHOLD)
            .map(|s| s.t);
        let report = RunReport {
            variant: self.params.variant,
            final_er: trajectory.last().diag.er.clone(),
            guard_er,
            time_to_threshold,
            envelope,
            constants: self.constants,
            samples: trajectory.samples.len(),
            wall_clock: started.elapsed(),
        };
        Ok(RunOutput { trajectory, report })
    }
}

/// CSV header: `t`, then per agent `x<i>_<k>` components, `s<i>` and `er<i>`,
/// then the global monitors.
pub fn csv_header(agents: usize, dim: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for i in 1..=agents {
        for k in 1..=dim {
            h.push(format!("x{i}_{k}"));
        }
        h.push(format!("s{i}"));
        h.push(format!("er{i}"));
    }
    h.extend(
        ["v_m", "v_s", "grad_sum_norm", "f_err", "zgs2_norm"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

/// Writes one row per trajectory sample. Floats use the shortest
/// round-tripping exponent form, so output is byte-stable.
pub fn write_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(traj.agent_count(), traj.dim()))?;
    let mut row = Vec::new();
    for s in &traj.samples {
        row.clear();
        row.push(format!("{:e}", s.t));
        for (i, a) in s.state.agents.iter().enumerate() {
            row.extend(a.x.iter().map(|v| format!("{v:e}")));
            row.push(format!("{:e}", s.diag.s_norm[i]));
            row.push(format!("{:e}", s.diag.er[i]));
        }
        let d = &s.diag;
        for v in [d.v_m, d.v_s, d.grad_sum_norm, d.f_err, d.zgs2_norm] {
            row.push(format!("{v:e}"));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(traj: &Trajectory, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(traj, file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_values() {
        let ss = paper_sec4(Variant::Ss).validate().unwrap();
        assert_eq!(
            (ss.params.kappa1, ss.params.kappa2, ss.params.c),
            (2.0, 3.0, 1.0)
        );
        assert_eq!(ss.schedule.stages().len(), 1);
        assert_eq!(ss.schedule.stage(0).duration, 0.3);
        assert_eq!(ss.schedule.stage(0).exponent, 2.3);
        assert!((&ss.xstar - Vector::from_vec(vec![1.0, 1.5])).norm() < 1e-12);

        let ms = paper_sec4(Variant::Ms).validate().unwrap();
        assert_eq!(ms.schedule.stage(0).duration, 0.1);
        assert_eq!(ms.schedule.stage(0).exponent, 3.0);
        assert_eq!(ms.schedule.stage(1).duration, 0.2);
        assert_eq!(ms.schedule.stage(1).exponent, 2.5);
        for a in &ms.initial.agents {
            assert!(a.x.iter().all(|v| (-5.0..5.0).contains(v)));
            assert_eq!(a.phi.norm(), 0.0);
        }
    }

    #[test]
    fn toml_round_trip_of_presets() {
        for v in [Variant::Ms, Variant::Ss] {
            let cfg = paper_sec4(v);
            let text = cfg.to_toml().unwrap();
            assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn stage_fields_must_match_algorithm() {
        let mut cfg = paper_sec4(Variant::Ss);
        cfg.schedule.t2 = Some(0.2);
        cfg.schedule.h2 = Some(2.5);
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));

        let mut cfg = paper_sec4(Variant::Ms);
        cfg.schedule.h2 = None;
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn inconsistent_counts_rejected() {
        let mut cfg = paper_sec4(Variant::Ss);
        cfg.objectives.pop();
        assert!(cfg.validate().unwrap_err().is_validation());

        let mut cfg = paper_sec4(Variant::Ss);
        cfg.initial.x = Some(vec![vec![0.0, 0.0]; 5]);
        assert!(cfg.validate().unwrap_err().is_validation());

        let mut cfg = paper_sec4(Variant::Ss);
        cfg.graph.edges.truncate(2);
        assert!(matches!(
            cfg.validate(),
            Err(Error::DisconnectedGraph { .. })
        ));

        let mut cfg = paper_sec4(Variant::Ss);
        cfg.objectives[2].q = vec![1.0, 0.0, 0.0, -1.0];
        assert!(cfg.validate().unwrap_err().is_validation());
    }

    #[test]
    fn edge_forms_parse() {
        let text = r#"
            algorithm = "ss"
            [graph]
            agents = 3
            edges = [[1, 2], [2, 3, 0.5], { i = 1, j = 3, weight = 2.0 }]
            [[objectives]]
            q = [1.0]
            center = [0.0]
            [[objectives]]
            q = [2.0]
            center = [1.0]
            [[objectives]]
            q = [1.0]
            center = [4.0]
            offset = 3.0
            [params]
            kappa1 = 1.0
            kappa2 = 1.0
            c = 1.0
            [schedule]
            T1 = 1.0
            h1 = 2.0
            [initial]
            x = [[0.0], [1.0], [2.0]]
        "#;
        let sc = ScenarioConfig::from_toml(text).unwrap().validate().unwrap();
        assert_eq!(sc.graph.weight(1, 2), 0.5);
        assert_eq!(sc.graph.weight(0, 2), 2.0);
        assert_eq!(sc.graph.weight(0, 1), 1.0);
        // (0 + 2*1 + 4) / 4
        assert!((sc.xstar[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = ScenarioConfig::from_toml("algorithm = \"ss\"\n[graph]\nagents = \"six\"\n")
            .unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Parse(_)));
        assert!(msg.contains("line") || msg.contains('3'), "{msg}");
        assert!(ScenarioConfig::from_toml("algorithm = \"zz\"").is_err());
    }

    #[test]
    fn seed_controls_initial_points() {
        let a = paper_sec4(Variant::Ss).validate().unwrap();
        let b = paper_sec4(Variant::Ss).validate().unwrap();
        assert_eq!(a.initial, b.initial);
        let mut cfg = paper_sec4(Variant::Ss);
        cfg.seed = 7;
        assert_ne!(cfg.validate().unwrap().initial, a.initial);
    }

    #[test]
    fn header_layout() {
        let h = csv_header(2, 2);
        assert_eq!(
            h,
            vec![
                "t",
                "x1_1",
                "x1_2",
                "s1",
                "er1",
                "x2_1",
                "x2_2",
                "s2",
                "er2",
                "v_m",
                "v_s",
                "grad_sum_norm",
                "f_err",
                "zgs2_norm"
            ]
        );
    }
}
