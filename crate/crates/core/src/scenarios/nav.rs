use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::CostSpec;
use crate::math::Vec2;
use crate::physics2d::{BodyDef, Shape};

use super::episode::{run_episode, Episode, EpisodeOptions};
use super::metrics::EpisodeMetrics;
use super::{Scenario, ScenarioError};

fn d_half_extent() -> f64 {
    2.0
}
fn d_count() -> usize {
    5
}
fn d_size() -> [f64; 2] {
    [0.1, 0.3]
}
fn d_goal_distance() -> f64 {
    2.0
}
fn d_margin() -> f64 {
    0.1
}
fn d_attempts() -> usize {
    1000
}

/// Parameters of the random point-robot scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavGenerator {
    /// Start, goal and obstacle centers are drawn from `[−h, h]²`.
    #[serde(default = "d_half_extent")]
    pub half_extent: f64,
    #[serde(default = "d_count")]
    pub obstacle_count: usize,
    /// Range of disc radii and of box half-extents (m).
    #[serde(default = "d_size")]
    pub obstacle_size: [f64; 2],
    #[serde(default = "d_goal_distance")]
    pub min_goal_distance: f64,
    /// Free space kept around start, goal and between obstacles beyond the robot's size (m).
    #[serde(default = "d_margin")]
    pub margin: f64,
    #[serde(default = "d_attempts")]
    pub max_attempts: usize,
}

impl Default for NavGenerator {
    fn default() -> Self {
        Self {
            half_extent: d_half_extent(),
            obstacle_count: d_count(),
            obstacle_size: d_size(),
            min_goal_distance: d_goal_distance(),
            margin: d_margin(),
            max_attempts: d_attempts(),
        }
    }
}

impl NavGenerator {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let [lo, hi] = self.obstacle_size;
        if !(self.half_extent > 0.0
            && lo > 0.0
            && lo <= hi
            && self.margin >= 0.0
            && self.max_attempts > 0)
        {
            return Err(ScenarioError::Invalid(
                "nav_generator: sizes and extents must be positive".into(),
            ));
        }
        if self.min_goal_distance > 2.0 * std::f64::consts::SQRT_2 * self.half_extent {
            return Err(ScenarioError::Invalid(
                "nav_generator: min_goal_distance exceeds the region".into(),
            ));
        }
        Ok(())
    }

    /// An obstacle may be placed if its bounding circle keeps `margin` of
    /// free space around the robot at the start, around the goal, and a
    /// robot-sized corridor to every other obstacle.
    pub fn admissible(
        &self,
        candidate: &BodyDef<f64>,
        start: Vec2<f64>,
        goal: Vec2<f64>,
        robot_radius: f64,
        placed: &[BodyDef<f64>],
    ) -> bool {
        let r = candidate.shape.bounding_radius();
        let gap = |p: Vec2<f64>, other: f64| (candidate.position - p).length() - r - other;
        gap(start, robot_radius) >= self.margin
            && gap(goal, robot_radius) >= self.margin
            && placed.iter().all(|o| {
                gap(o.position, o.shape.bounding_radius()) >= 2.0 * robot_radius + self.margin
            })
    }

    fn point<R: Rng>(&self, rng: &mut R) -> Vec2<f64> {
        let h = self.half_extent;
        Vec2::new(rng.gen_range(-h..=h), rng.gen_range(-h..=h))
    }

    fn obstacle<R: Rng>(&self, rng: &mut R, index: usize) -> BodyDef<f64> {
        let [lo, hi] = self.obstacle_size;
        let shape = if rng.gen_bool(0.5) {
            Shape::Disc {
                radius: rng.gen_range(lo..=hi),
            }
        } else {
            Shape::Box {
                half_extents: [rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)],
            }
        };
        let p = self.point(rng);
        let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        BodyDef::new(format!("obstacle_{}", index + 1), shape)
            .at(p.x, p.y)
            .rotated(angle)
            .fixed()
    }
}

/// Instantiates one random scene from a navigation template. Deterministic in `seed`.
pub fn generate_nav_scene(template: &Scenario, seed: u64) -> Result<Scenario, ScenarioError> {
    let gen = template.nav_generator.clone().unwrap_or_default();
    gen.validate()?;
    let CostSpec::Nav {
        obstacles: base_obstacles,
        ..
    } = &template.cost
    else {
        return Err(ScenarioError::Invalid(
            "navigation suites need a `nav` cost".into(),
        ));
    };
    let robot_radius = template.scene.robot.chassis.shape.bounding_radius();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x6e6176);
    for _ in 0..gen.max_attempts {
        let start = gen.point(&mut rng);
        let goal = gen.point(&mut rng);
        if (goal - start).length() < gen.min_goal_distance {
            continue;
        }
        let mut placed: Vec<BodyDef<f64>> = Vec::with_capacity(gen.obstacle_count);
        let mut tries = 0;
        while placed.len() < gen.obstacle_count && tries < gen.max_attempts {
            tries += 1;
            let candidate = gen.obstacle(&mut rng, placed.len());
            if gen.admissible(&candidate, start, goal, robot_radius, &placed) {
                placed.push(candidate);
            }
        }
        if placed.len() < gen.obstacle_count {
            continue;
        }
        let mut scenario = template.clone();
        scenario.name = format!("{}#{seed}", template.name);
        scenario.scene.robot.chassis.position = start;
        scenario.goal.position = goal;
        let mut labels = base_obstacles.clone();
        labels.extend(placed.iter().map(|b| b.label.clone()));
        scenario.scene.bodies.extend(placed);
        if let CostSpec::Nav { obstacles, .. } = &mut scenario.cost {
            *obstacles = labels;
        }
        scenario.nav_generator = None;
        scenario.validate()?;
        return Ok(scenario);
    }
    Err(ScenarioError::SceneGeneration(gen.max_attempts))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NavSuiteSummary {
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean over successful runs.
    pub mean_time_to_goal: Option<f64>,
    pub mean_path_length: f64,
    /// Mean of the per-episode mean solver times (s).
    pub mean_solver_time: Option<f64>,
    pub min_clearance: Option<f64>,
    /// Runs whose clearance dropped below −1 mm.
    pub penetrating_runs: usize,
}

impl NavSuiteSummary {
    pub fn from_metrics(metrics: &[EpisodeMetrics]) -> Self {
        let n = metrics.len();
        let succ: Vec<f64> = metrics.iter().filter_map(|m| m.time_to_goal).collect();
        let solver: Vec<f64> = metrics
            .iter()
            .filter_map(|m| m.solver_time.map(|s| s.mean))
            .collect();
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        Self {
            runs: n,
            successes: succ.len(),
            success_rate: if n == 0 {
                0.0
            } else {
                succ.len() as f64 / n as f64
            },
            mean_time_to_goal: mean(&succ),
            mean_path_length: mean(&metrics.iter().map(|m| m.path_length).collect::<Vec<_>>())
                .unwrap_or(0.0),
            mean_solver_time: mean(&solver),
            min_clearance: metrics
                .iter()
                .filter_map(|m| m.min_clearance)
                .reduce(f64::min),
            penetrating_runs: metrics
                .iter()
                .filter(|m| m.min_clearance.is_some_and(|c| c < -1e-3))
                .count(),
        }
    }
}

/// Runs `n_runs` random scenes; scene and episode `i` both use seed `seed + i`.
pub fn randomized_nav_suite(
    template: &Scenario,
    n_runs: usize,
    seed: u64,
    opts: &EpisodeOptions,
) -> Result<(NavSuiteSummary, Vec<Episode>), ScenarioError> {
    if n_runs == 0 {
        return Err(ScenarioError::Invalid("n_runs must be at least 1".into()));
    }
    let mut episodes = Vec::with_capacity(n_runs);
    for i in 0..n_runs as u64 {
        let scene = generate_nav_scene(template, seed + i)?;
        episodes.push(run_episode(&scene, seed + i, opts)?);
    }
    let metrics: Vec<EpisodeMetrics> = episodes.iter().map(|e| e.metrics.clone()).collect();
    Ok((NavSuiteSummary::from_metrics(&metrics), episodes))
}
