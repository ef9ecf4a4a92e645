//! Task definitions, the episode loop and benchmark metrics.

mod episode;
mod metrics;
mod nav;
mod output;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::{CostError, CostSpec, GoalSpec};
use crate::math::{angdist, Vec2};
use crate::mppi::{MppiConfig, MppiError};
use crate::physics2d::{PhysicsError, SceneDesc};
use crate::randomization::{RandomizationError, RandomizationSpec};

pub use episode::{probe_solver_time, run_episode, Episode, EpisodeOptions, TraceLevel};
pub use metrics::{
    metrics_from_trace, EpisodeMetrics, Pose, SolverTimeStats, TraceHeader, TraceRecord,
};
pub use nav::{generate_nav_scene, randomized_nav_suite, NavGenerator, NavSuiteSummary};
pub use output::{
    read_table, read_trace, summary_header, summary_row, timing_row, write_table, write_trace,
    BUILD_ID,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed scenario at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Mppi(#[from] MppiError),
    #[error(transparent)]
    Randomization(#[from] RandomizationError),
    #[error("could not generate a navigation scene after {0} attempts")]
    SceneGeneration(usize),
    #[error("malformed trace: {0}")]
    Trace(String),
}

/// Scripted velocity change applied to a body at a given time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    /// Seconds since episode start; applied at the nearest control tick.
    pub time: f64,
    pub body: String,
    /// Instantaneous velocity change (m/s).
    pub delta_v: Vec2<f64>,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub scene: SceneDesc<f64>,
    pub cost: CostSpec<f64>,
    pub goal: GoalSpec<f64>,
    pub mppi: MppiConfig<f64>,
    #[serde(default)]
    pub randomization: RandomizationSpec,
    /// Perturb the ground-truth world once per episode with the rollout
    /// randomization spec.
    #[serde(default)]
    pub randomize_world: bool,
    pub max_duration: f64,
    /// How long the goal condition must hold before the episode counts as a success (s).
    #[serde(default)]
    pub success_hold: f64,
    /// Stop as soon as success is established; otherwise run to `max_duration`.
    #[serde(default = "default_true")]
    pub terminate_on_success: bool,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    /// Marks a template for randomized navigation scenes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nav_generator: Option<NavGenerator>,
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario =
            serde_path_to_error::deserialize(de).map_err(|e| ScenarioError::Parse {
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.max_duration > 0.0 && self.max_duration.is_finite()) {
            return invalid("max_duration must be positive".into());
        }
        if !(self.success_hold >= 0.0) {
            return invalid("success_hold must be nonnegative".into());
        }
        let world = self.scene.build()?;
        self.cost.bind(&world, &self.goal)?;
        self.mppi.validate()?;
        self.randomization.validate()?;
        let m = world.robot().command_dim();
        if self.mppi.sigma.len() != m {
            return invalid(format!(
                "mppi.sigma has {} entries, the robot takes {m} commands",
                self.mppi.sigma.len()
            ));
        }
        if let Some(g) = &self.nav_generator {
            g.validate()?;
        }
        for d in &self.disturbances {
            if world.index_of(&d.body).is_none() {
                return invalid(format!("disturbance refers to unknown body `{}`", d.body));
            }
            if !(d.time >= 0.0) || !d.delta_v.is_finite() {
                return invalid("disturbance time must be nonnegative and delta_v finite".into());
            }
        }
        Ok(())
    }

    /// Label of the body the goal refers to.
    pub fn tracked_label(&self) -> &str {
        self.cost.tracked_label()
    }

    pub fn robot_label(&self) -> &str {
        self.cost.robot_label()
    }

    pub fn dt(&self) -> f64 {
        self.mppi.dt
    }
}

/// `1.5 (|ΔX| + |ΔY|) + 0.01 |Δψ|`, with Δψ wrapped.
pub fn final_cost(p_o: Vec2<f64>, psi_o: f64, goal: &GoalSpec<f64>) -> f64 {
    1.5 * ((goal.position.x - p_o.x).abs() + (goal.position.y - p_o.y).abs())
        + 0.01 * angdist(psi_o, goal.orientation)
}
