//! Stage costs for the planar tasks.
//!
//! The free functions are the reference definitions. [`CostSpec`] describes a
//! cost in a scenario file and binds to a world as a [`BoundCost`], which
//! reads positions and contact forces straight from the simulator so rollouts
//! never build a [`StepReport`].

use std::sync::Once;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{angdist, Vec2};
use crate::physics2d::{StepReport, World, WorldState};
use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("unknown body label `{0}` in cost binding")]
    UnknownLabel(String),
    #[error("invalid cost weights: {0}")]
    InvalidWeights(String),
    #[error("invalid goal: {0}")]
    InvalidGoal(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights<S: Real> {
    /// Robot to object distance.
    #[serde(default = "num_traits::Zero::zero")]
    pub w_t: S,
    /// Object to goal position.
    #[serde(default = "num_traits::Zero::zero")]
    pub w_op: S,
    /// Object to goal orientation.
    #[serde(default = "num_traits::Zero::zero")]
    pub w_or: S,
    /// Push alignment.
    #[serde(default = "num_traits::Zero::zero")]
    pub w_a: S,
    /// Contact force on obstacles.
    #[serde(default = "num_traits::Zero::zero")]
    pub w_c: S,
}

impl<S: Real> CostWeights<S> {
    pub fn new(w_t: S, w_op: S, w_or: S, w_a: S, w_c: S) -> Self {
        Self {
            w_t,
            w_op,
            w_or,
            w_a,
            w_c,
        }
    }

    fn all(&self) -> [S; 5] {
        [self.w_t, self.w_op, self.w_or, self.w_a, self.w_c]
    }

    pub fn validate(&self) -> Result<(), CostError> {
        let w = self.all();
        if w.iter().any(|x| !x.is_finite() || *x < S::zero()) {
            return Err(CostError::InvalidWeights(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if w.iter().all(|x| *x == S::zero()) {
            return Err(CostError::InvalidWeights(
                "at least one weight must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSpec<S: Real> {
    pub position: Vec2<S>,
    #[serde(default = "num_traits::Zero::zero")]
    pub orientation: S,
    pub tolerance_pos: S,
    pub tolerance_rot: S,
}

impl<S: Real> GoalSpec<S> {
    pub fn new(position: Vec2<S>, orientation: S, tolerance_pos: S, tolerance_rot: S) -> Self {
        Self {
            position,
            orientation,
            tolerance_pos,
            tolerance_rot,
        }
    }

    pub fn validate(&self) -> Result<(), CostError> {
        if !(self.tolerance_pos > S::zero() && self.tolerance_rot > S::zero()) {
            return Err(CostError::InvalidGoal("tolerances must be positive".into()));
        }
        if !self.position.is_finite() || !self.orientation.is_finite() {
            return Err(CostError::InvalidGoal("goal pose must be finite".into()));
        }
        Ok(())
    }

    /// Position and orientation both within tolerance.
    pub fn reached(&self, position: Vec2<S>, orientation: S) -> bool {
        (position - self.position).length() <= self.tolerance_pos
            && angdist(orientation, self.orientation) <= self.tolerance_rot
    }
}

pub fn dist_cost<S: Real>(
    p_r: Vec2<S>,
    p_o: Vec2<S>,
    p_g: Vec2<S>,
    psi_o: S,
    psi_g: S,
    w: &CostWeights<S>,
) -> S {
    w.w_t * (p_r - p_o).length() + w.w_op * (p_g - p_o).length() + w.w_or * angdist(psi_o, psi_g)
}

/// `w_a (cos α + 1)` with α the angle at the object between robot and goal.
/// A zero-length arm makes α undefined; the midpoint `w_a` is returned.
pub fn push_align_cost<S: Real>(p_r: Vec2<S>, p_o: Vec2<S>, p_g: Vec2<S>, w_a: S) -> S {
    let a = p_r - p_o;
    let b = p_g - p_o;
    let den = a.length() * b.length();
    if !(den > S::zero()) {
        return w_a;
    }
    let cos = (a.dot(b) / den).max(-S::one()).min(S::one());
    w_a * (cos + S::one())
}

static MISSING_LABEL: Once = Once::new();

/// `w_c` times the summed contact force on the listed bodies. Labels absent
/// from the report contribute nothing.
pub fn collision_cost<S: Real>(report: &StepReport<S>, obstacles: &[impl AsRef<str>], w_c: S) -> S {
    if w_c == S::zero() {
        return S::zero();
    }
    let mut total = S::zero();
    for o in obstacles {
        match report.force_on(o.as_ref()) {
            Some(f) => total = total + f,
            None => MISSING_LABEL.call_once(|| {
                log::warn!(
                    "collision cost: no contact force reported for `{}`",
                    o.as_ref()
                );
            }),
        }
    }
    w_c * total
}

/// Which bodies a pushing cost refers to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushBinding<S: Real> {
    #[serde(default = "default_robot_label")]
    pub robot: String,
    /// Reference point on the robot in its body frame (front-face midpoint
    /// for the differential drive, the center otherwise).
    #[serde(default = "Vec2::zero")]
    pub robot_offset: Vec2<S>,
    pub object: String,
    #[serde(default)]
    pub obstacles: Vec<String>,
}

fn default_robot_label() -> String {
    "robot".to_string()
}

fn reference_point<S: Real>(position: Vec2<S>, orientation: S, offset: Vec2<S>) -> Vec2<S> {
    position + offset.rotate(orientation)
}

fn lookup<'a, S: Real>(
    state: &'a WorldState<S>,
    label: &str,
) -> Result<&'a crate::physics2d::BodyState<S>, CostError> {
    state
        .body(label)
        .ok_or_else(|| CostError::UnknownLabel(label.to_string()))
}

/// `C_dist + C_push_align + C_coll` on a post-step state and its report.
pub fn composite_push_cost<S: Real>(
    state: &WorldState<S>,
    report: &StepReport<S>,
    goal: &GoalSpec<S>,
    weights: &CostWeights<S>,
    binding: &PushBinding<S>,
) -> Result<S, CostError> {
    let robot = lookup(state, &binding.robot)?;
    let object = lookup(state, &binding.object)?;
    let p_r = reference_point(robot.position, robot.orientation, binding.robot_offset);
    let p_o = object.position;
    Ok(dist_cost(
        p_r,
        p_o,
        goal.position,
        object.orientation,
        goal.orientation,
        weights,
    ) + push_align_cost(p_r, p_o, goal.position, weights.w_a)
        + collision_cost(report, &binding.obstacles, weights.w_c))
}

/// Goal distance of the robot plus the collision term.
pub fn nav_cost<S: Real>(
    state: &WorldState<S>,
    report: &StepReport<S>,
    goal: &GoalSpec<S>,
    w_goal: S,
    w_c: S,
    robot: &str,
    obstacles: &[impl AsRef<str>],
) -> Result<S, CostError> {
    let r = lookup(state, robot)?;
    Ok(w_goal * (r.position - goal.position).length() + collision_cost(report, obstacles, w_c))
}

/// Cost description as it appears in a scenario file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec<S: Real> {
    Push {
        weights: CostWeights<S>,
        #[serde(default = "default_robot_label")]
        robot: String,
        #[serde(default = "Vec2::zero")]
        robot_offset: Vec2<S>,
        object: String,
        #[serde(default)]
        obstacles: Vec<String>,
    },
    Nav {
        w_goal: S,
        #[serde(default = "num_traits::Zero::zero")]
        w_c: S,
        #[serde(default = "default_robot_label")]
        robot: String,
        #[serde(default)]
        obstacles: Vec<String>,
    },
}

impl<S: Real> CostSpec<S> {
    /// Resolves labels against `world` and fixes the goal.
    pub fn bind(&self, world: &World<S>, goal: &GoalSpec<S>) -> Result<BoundCost<S>, CostError> {
        goal.validate()?;
        let idx = |l: &str| {
            world
                .index_of(l)
                .ok_or_else(|| CostError::UnknownLabel(l.to_string()))
        };
        match self {
            CostSpec::Push {
                weights,
                robot,
                robot_offset,
                object,
                obstacles,
            } => {
                weights.validate()?;
                Ok(BoundCost::Push {
                    weights: *weights,
                    goal: *goal,
                    robot: idx(robot)?,
                    robot_offset: *robot_offset,
                    object: idx(object)?,
                    obstacles: obstacles.iter().map(|o| idx(o)).collect::<Result<_, _>>()?,
                })
            }
            CostSpec::Nav {
                w_goal,
                w_c,
                robot,
                obstacles,
            } => {
                if !(*w_goal >= S::zero() && *w_c >= S::zero())
                    || (*w_goal == S::zero() && *w_c == S::zero())
                {
                    return Err(CostError::InvalidWeights(
                        "nav weights must be nonnegative, one positive".into(),
                    ));
                }
                Ok(BoundCost::Nav {
                    w_goal: *w_goal,
                    w_c: *w_c,
                    goal: *goal,
                    robot: idx(robot)?,
                    obstacles: obstacles.iter().map(|o| idx(o)).collect::<Result<_, _>>()?,
                })
            }
        }
    }

    pub fn push(weights: CostWeights<S>, binding: PushBinding<S>) -> Self {
        let PushBinding {
            robot,
            robot_offset,
            object,
            obstacles,
        } = binding;
        CostSpec::Push {
            weights,
            robot,
            robot_offset,
            object,
            obstacles,
        }
    }

    pub fn robot_label(&self) -> &str {
        match self {
            CostSpec::Push { robot, .. } | CostSpec::Nav { robot, .. } => robot,
        }
    }

    pub fn obstacles(&self) -> &[String] {
        match self {
            CostSpec::Push { obstacles, .. } | CostSpec::Nav { obstacles, .. } => obstacles,
        }
    }

    /// The body whose pose decides success: the pushed object, or the robot
    /// for navigation.
    pub fn tracked_label(&self) -> &str {
        match self {
            CostSpec::Push { object, .. } => object,
            CostSpec::Nav { robot, .. } => robot,
        }
    }
}

/// Stage cost evaluated on a world right after it was stepped.
pub trait StageCost<S: Real>: Send + Sync {
    fn stage_cost(&self, world: &World<S>) -> S;
}

/// A [`CostSpec`] with labels resolved to body indices.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundCost<S: Real> {
    Push {
        weights: CostWeights<S>,
        goal: GoalSpec<S>,
        robot: usize,
        robot_offset: Vec2<S>,
        object: usize,
        obstacles: Vec<usize>,
    },
    Nav {
        w_goal: S,
        w_c: S,
        goal: GoalSpec<S>,
        robot: usize,
        obstacles: Vec<usize>,
    },
}

fn obstacle_force<S: Real>(world: &World<S>, obstacles: &[usize]) -> S {
    obstacles
        .iter()
        .map(|&i| world.contact_force(i))
        .fold(S::zero(), |a, b| a + b)
}

impl<S: Real> StageCost<S> for BoundCost<S> {
    fn stage_cost(&self, world: &World<S>) -> S {
        match self {
            BoundCost::Push {
                weights,
                goal,
                robot,
                robot_offset,
                object,
                obstacles,
            } => {
                let p_r = reference_point(
                    world.position(*robot),
                    world.orientation(*robot),
                    *robot_offset,
                );
                let p_o = world.position(*object);
                let coll = if weights.w_c == S::zero() {
                    S::zero()
                } else {
                    weights.w_c * obstacle_force(world, obstacles)
                };
                dist_cost(
                    p_r,
                    p_o,
                    goal.position,
                    world.orientation(*object),
                    goal.orientation,
                    weights,
                ) + push_align_cost(p_r, p_o, goal.position, weights.w_a)
                    + coll
            }
            BoundCost::Nav {
                w_goal,
                w_c,
                goal,
                robot,
                obstacles,
            } => {
                let coll = if *w_c == S::zero() {
                    S::zero()
                } else {
                    *w_c * obstacle_force(world, obstacles)
                };
                *w_goal * (world.position(*robot) - goal.position).length() + coll
            }
        }
    }
}
