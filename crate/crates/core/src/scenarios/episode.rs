use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::mppi::Controller;
use crate::physics2d::World;
use crate::randomization::{randomize_world, RandomizationSpec};

use super::metrics::{
    metrics_from_trace, EpisodeMetrics, Pose, SolverTimeStats, SuccessTracker, TraceHeader,
    TraceRecord,
};
use super::output::BUILD_ID;
use super::{Scenario, ScenarioError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    /// Metrics only; the trace is still kept in memory.
    Off,
    /// Poses, controls and controller diagnostics per tick.
    #[default]
    Ticks,
    /// Adds the full world state and every rollout cost.
    Full,
}

impl std::str::FromStr for TraceLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "off" => Ok(Self::Off),
            "ticks" => Ok(Self::Ticks),
            "full" => Ok(Self::Full),
            other => Err(format!(
                "unknown trace level `{other}` (expected off, ticks or full)"
            )),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct EpisodeOptions {
    /// Rollout worker threads; `None` for rayon's default.
    pub workers: Option<usize>,
    pub trace_level: TraceLevel,
    /// Pace the loop to one tick per `dt` of wall time.
    pub real_time: bool,
}

#[derive(Clone, Debug)]
pub struct Episode {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
    pub metrics: EpisodeMetrics,
}

/// Seed of the rollout randomization stream, kept apart from the sampler seed.
fn randomization_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x5151_5151
}

fn pose(world: &World<f64>, i: usize) -> Pose {
    Pose {
        position: world.position(i),
        orientation: world.orientation(i),
    }
}

/// Runs the closed loop: observe, plan, apply, until the goal condition has
/// held for `success_hold` or `max_duration` elapses.
pub fn run_episode(
    scenario: &Scenario,
    seed: u64,
    opts: &EpisodeOptions,
) -> Result<Episode, ScenarioError> {
    scenario.validate()?;
    let dt = scenario.dt();
    let mut cfg = scenario.mppi.clone();
    cfg.seed = seed;
    cfg.record_rollout_costs |= opts.trace_level == TraceLevel::Full;
    let spec = RandomizationSpec {
        seed: randomization_seed(seed),
        ..scenario.randomization.clone()
    };

    let template = scenario.scene.build()?;
    let mut world = template.clone();
    if scenario.randomize_world {
        // The rollouts never see this draw: index usize::MAX is outside 0..K.
        world.set_body_defs(&randomize_world(template.defs(), &spec, usize::MAX, 0))?;
    }
    let cost = scenario.cost.bind(&template, &scenario.goal)?;
    let mut controller = Controller::new(cfg, &template, cost, spec, opts.workers)?;

    let robot = world.require_index(scenario.robot_label())?;
    let tracked = world.require_index(scenario.tracked_label())?;
    let obstacles = scenario.cost.obstacles();
    let header = TraceHeader {
        scenario: scenario.name.clone(),
        seed,
        build: BUILD_ID.to_string(),
        dt,
        max_duration: scenario.max_duration,
        success_hold: scenario.success_hold,
        goal: scenario.goal,
        robot: scenario.robot_label().to_string(),
        tracked: scenario.tracked_label().to_string(),
    };

    let last_tick = (scenario.max_duration / dt).round() as u64;
    let mut tracker = SuccessTracker::default();
    let mut records = Vec::with_capacity(last_tick as usize + 1);
    let mut penetration = world.max_penetration();
    let clock = Instant::now();
    for tick in 0..=last_tick {
        let time = tick as f64 * dt;
        if opts.real_time {
            let due = Duration::from_secs_f64(time);
            if let Some(wait) = due.checked_sub(clock.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        let mut disturbed = false;
        for d in scenario
            .disturbances
            .iter()
            .filter(|d| (d.time / dt).round() as u64 == tick)
        {
            world.apply_velocity_change(&d.body, d.delta_v)?;
            disturbed = true;
        }
        let mut record = TraceRecord {
            tick,
            time,
            robot: pose(&world, robot),
            tracked: pose(&world, tracked),
            clearance: if obstacles.is_empty() {
                None
            } else {
                Some(world.min_clearance(&header.robot, obstacles)?)
            },
            penetration,
            disturbed,
            control: None,
            diagnostics: None,
            error: None,
            state: None,
        };
        let observed = world.snapshot();
        if opts.trace_level == TraceLevel::Full {
            record.state = Some(observed.clone());
        }
        let reached = scenario
            .goal
            .reached(record.tracked.position, record.tracked.orientation);
        let done = tracker
            .observe(time, reached, scenario.success_hold)
            .is_some()
            && scenario.terminate_on_success;
        if done || tick == last_tick {
            records.push(record);
            break;
        }
        match controller.control_step(&observed) {
            Ok((u0, diag)) => {
                penetration = world.step(&u0, dt)?.penetration_max;
                record.control = Some(u0);
                record.diagnostics = Some(diag);
                records.push(record);
            }
            Err(e) => {
                record.error = Some(e.to_string());
                records.push(record);
                break;
            }
        }
    }
    let metrics = metrics_from_trace(&header, &records);
    Ok(Episode {
        header,
        records,
        metrics,
    })
}

/// Median wall time of `steps` control steps from the scenario's initial
/// state, for checking whether real-time operation is feasible.
pub fn probe_solver_time(
    scenario: &Scenario,
    seed: u64,
    steps: usize,
    workers: Option<usize>,
) -> Result<f64, ScenarioError> {
    let mut cfg = scenario.mppi.clone();
    cfg.seed = seed;
    let spec = RandomizationSpec {
        seed: randomization_seed(seed),
        ..scenario.randomization.clone()
    };
    let template = scenario.scene.build()?;
    let cost = scenario.cost.bind(&template, &scenario.goal)?;
    let mut controller = Controller::new(cfg, &template, cost, spec, workers)?;
    let state = template.snapshot();
    let mut times = Vec::with_capacity(steps);
    for _ in 0..steps.max(1) {
        times.push(controller.control_step(&state)?.1.solver_time);
    }
    Ok(SolverTimeStats::from_samples(&times).map_or(0.0, |s| s.median))
}
