use serde::{Deserialize, Serialize};

use crate::costs::GoalSpec;
use crate::math::Vec2;
use crate::mppi::IterationDiagnostics;
use crate::physics2d::WorldState;

use super::final_cost;

/// Everything the metrics need besides the per-tick records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub scenario: String,
    pub seed: u64,
    pub build: String,
    pub dt: f64,
    pub max_duration: f64,
    pub success_hold: f64,
    pub goal: GoalSpec<f64>,
    pub robot: String,
    pub tracked: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2<f64>,
    pub orientation: f64,
}

/// World state observed at one control tick and what the controller did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub time: f64,
    pub robot: Pose,
    pub tracked: Pose,
    /// Minimum signed robot-obstacle distance; absent without obstacles.
    pub clearance: Option<f64>,
    /// Deepest body overlap after the previous physics step.
    pub penetration: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub disturbed: bool,
    /// Command applied from this state; absent on the final record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<IterationDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<WorldState<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverTimeStats {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl SolverTimeStats {
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Some(Self {
            mean: sorted.iter().sum::<f64>() / n as f64,
            median,
            max: sorted[n - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub success: bool,
    /// Start of the first goal streak that lasted `success_hold`.
    pub time_to_goal: Option<f64>,
    pub path_length: f64,
    pub solver_time: Option<SolverTimeStats>,
    /// `None` when the scene has no obstacles.
    pub min_clearance: Option<f64>,
    pub final_cost: f64,
    pub max_penetration: f64,
    pub ticks: u64,
    pub duration: f64,
    pub failure: Option<String>,
}

/// Tracks how long the goal condition has held.
#[derive(Clone, Debug, Default)]
pub(crate) struct SuccessTracker {
    streak_start: Option<f64>,
    achieved: Option<f64>,
}

impl SuccessTracker {
    /// Feeds one observation; returns the success time once established.
    pub(crate) fn observe(&mut self, time: f64, reached: bool, hold: f64) -> Option<f64> {
        if self.achieved.is_some() {
            return self.achieved;
        }
        if !reached {
            self.streak_start = None;
            return None;
        }
        let start = *self.streak_start.get_or_insert(time);
        // Tick times are multiples of dt; the tolerance absorbs rounding.
        if time - start >= hold - 1e-9 {
            self.achieved = Some(start);
        }
        self.achieved
    }
}

/// Recomputes the episode metrics from its trace.
pub fn metrics_from_trace(header: &TraceHeader, records: &[TraceRecord]) -> EpisodeMetrics {
    let mut tracker = SuccessTracker::default();
    let mut time_to_goal = None;
    let mut path_length = 0.0;
    let mut min_clearance: Option<f64> = None;
    let mut max_penetration: f64 = 0.0;
    let mut times = Vec::new();
    let mut failure = None;
    for (i, r) in records.iter().enumerate() {
        if time_to_goal.is_none() && r.time <= header.max_duration + 1e-9 {
            let reached = header
                .goal
                .reached(r.tracked.position, r.tracked.orientation);
            time_to_goal = tracker.observe(r.time, reached, header.success_hold);
        }
        if i > 0 {
            path_length += (r.robot.position - records[i - 1].robot.position).length();
        }
        if let Some(c) = r.clearance {
            min_clearance = Some(min_clearance.map_or(c, |m| m.min(c)));
        }
        max_penetration = max_penetration.max(r.penetration);
        if let Some(d) = &r.diagnostics {
            times.push(d.solver_time);
        }
        if r.error.is_some() {
            failure = r.error.clone();
        }
    }
    let last = records.last();
    EpisodeMetrics {
        success: time_to_goal.is_some(),
        time_to_goal,
        path_length,
        solver_time: SolverTimeStats::from_samples(&times),
        min_clearance,
        final_cost: last.map_or(f64::NAN, |r| {
            final_cost(r.tracked.position, r.tracked.orientation, &header.goal)
        }),
        max_penetration,
        ticks: last.map_or(0, |r| r.tick),
        duration: last.map_or(0.0, |r| r.time),
        failure,
    }
}
