//! Deterministic planar rigid-body engine.
//!
//! Bodies are discs or oriented boxes sliding on a ground plane. Contacts are
//! resolved with sequential impulses (Coulomb friction, zero restitution) and
//! a positional correction pass. The robot chassis is always body 0 and is
//! driven by a force-limited velocity motor, so it tracks its command while
//! still exchanging finite impulses with whatever it pushes.
//!
//! A [`World`] is cheap to snapshot and reset, which is what the controller
//! needs to reuse one world per rollout.

mod collide;
mod scene;
mod solver;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{wrap_angle, Vec2};
use crate::real::Real;

use collide::Placed;
pub use scene::SceneDesc;

/// Standard gravity used by the ground-plane friction model.
pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("duplicate body label `{0}`")]
    DuplicateLabel(String),
    #[error("body `{0}` has a non-positive dimension")]
    NonPositiveDimension(String),
    #[error("dynamic body `{0}` has non-positive mass")]
    NonPositiveMass(String),
    #[error("body `{0}` has a negative or non-finite friction coefficient")]
    InvalidFriction(String),
    #[error("robot chassis `{0}` must be dynamic")]
    StaticRobot(String),
    #[error("expected {expected} command channels, got {got}")]
    CommandDimension { expected: usize, got: usize },
    #[error("command contains non-finite entries")]
    NonFiniteCommand,
    #[error("time step must be positive and finite")]
    InvalidTimestep,
    #[error("state does not match world bodies: {0}")]
    BodySetMismatch(String),
    #[error("unknown body label `{0}`")]
    UnknownLabel(String),
    #[error("invalid command limits: {0}")]
    InvalidLimits(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape<S: Real> {
    Disc { radius: S },
    Box { half_extents: [S; 2] },
}

impl<S: Real> Shape<S> {
    fn is_valid(&self) -> bool {
        match self {
            Shape::Disc { radius } => *radius > S::zero() && radius.is_finite(),
            Shape::Box { half_extents } => {
                half_extents.iter().all(|h| *h > S::zero() && h.is_finite())
            }
        }
    }

    /// Radius of the enclosing circle.
    pub fn bounding_radius(&self) -> S {
        match self {
            Shape::Disc { radius } => *radius,
            Shape::Box { half_extents } => half_extents[0].hypot(half_extents[1]),
        }
    }

    /// Moment of inertia about the centroid for a uniform body of `mass`.
    pub fn inertia(&self, mass: S) -> S {
        match self {
            Shape::Disc { radius } => S::lit(0.5) * mass * *radius * *radius,
            Shape::Box {
                half_extents: [hx, hy],
            } => mass * (*hx * *hx + *hy * *hy) / S::lit(3.0),
        }
    }

    /// Mean lever arm of a uniform pressure patch, used for torsional ground friction.
    fn torsion_radius(&self) -> S {
        match self {
            Shape::Disc { radius } => S::lit(2.0 / 3.0) * *radius,
            Shape::Box {
                half_extents: [hx, hy],
            } => S::lit(0.3826) * (*hx + *hy),
        }
    }
}

fn one<S: Real>() -> S {
    S::one()
}

fn half<S: Real>() -> S {
    S::lit(0.5)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyDef<S: Real> {
    pub label: String,
    pub shape: Shape<S>,
    #[serde(default = "one")]
    pub mass: S,
    /// Coulomb coefficient for body-body contacts (pairs use the geometric mean).
    #[serde(default = "half")]
    pub friction_coeff: S,
    /// Coefficient against the ground plane; defaults to `friction_coeff`.
    #[serde(default)]
    pub ground_friction: Option<S>,
    /// Rolls on a point contact (a sphere seen from above): no torsional ground friction.
    #[serde(default)]
    pub rolling: bool,
    #[serde(default)]
    pub is_static: bool,
    #[serde(default)]
    pub position: Vec2<S>,
    #[serde(default)]
    pub orientation: S,
}

impl<S: Real> BodyDef<S> {
    pub fn new(label: impl Into<String>, shape: Shape<S>) -> Self {
        Self {
            label: label.into(),
            shape,
            mass: S::one(),
            friction_coeff: S::lit(0.5),
            ground_friction: None,
            rolling: false,
            is_static: false,
            position: Vec2::zero(),
            orientation: S::zero(),
        }
    }

    pub fn at(mut self, x: S, y: S) -> Self {
        self.position = Vec2::new(x, y);
        self
    }

    pub fn rotated(mut self, angle: S) -> Self {
        self.orientation = angle;
        self
    }

    pub fn with_mass(mut self, mass: S) -> Self {
        self.mass = mass;
        self
    }

    pub fn with_friction(mut self, mu: S) -> Self {
        self.friction_coeff = mu;
        self
    }

    pub fn with_ground_friction(mut self, mu: S) -> Self {
        self.ground_friction = Some(mu);
        self
    }

    pub fn fixed(mut self) -> Self {
        self.is_static = true;
        self
    }

    pub fn effective_ground_friction(&self) -> S {
        self.ground_friction.unwrap_or(self.friction_coeff)
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        if !self.shape.is_valid() {
            return Err(PhysicsError::NonPositiveDimension(self.label.clone()));
        }
        if !self.is_static && !(self.mass > S::zero() && self.mass.is_finite()) {
            return Err(PhysicsError::NonPositiveMass(self.label.clone()));
        }
        let mu_ok = |m: S| m >= S::zero() && m.is_finite();
        if !mu_ok(self.friction_coeff) || !mu_ok(self.effective_ground_friction()) {
            return Err(PhysicsError::InvalidFriction(self.label.clone()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotVariant {
    /// World-frame (vx, vy).
    HolonomicPoint,
    /// Body-frame (vx, vy, ω).
    OmniBase,
    /// Unicycle (v forward, ω).
    DiffDrive,
}

impl RobotVariant {
    pub fn command_dim(self) -> usize {
        match self {
            RobotVariant::HolonomicPoint | RobotVariant::DiffDrive => 2,
            RobotVariant::OmniBase => 3,
        }
    }
}

fn default_max_force<S: Real>() -> S {
    S::lit(500.0)
}

fn default_max_torque<S: Real>() -> S {
    S::lit(150.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotModel<S: Real> {
    pub variant: RobotVariant,
    pub chassis: BodyDef<S>,
    /// Per-channel `[min, max]`.
    pub command_limits: Vec<[S; 2]>,
    /// Force bound of the velocity motor along each linear axis (N).
    #[serde(default = "default_max_force")]
    pub max_force: S,
    /// Torque bound of the angular velocity motor (N·m).
    #[serde(default = "default_max_torque")]
    pub max_torque: S,
}

impl<S: Real> RobotModel<S> {
    pub fn new(variant: RobotVariant, chassis: BodyDef<S>, command_limits: Vec<[S; 2]>) -> Self {
        Self {
            variant,
            chassis,
            command_limits,
            max_force: default_max_force(),
            max_torque: default_max_torque(),
        }
    }

    pub fn command_dim(&self) -> usize {
        self.variant.command_dim()
    }

    /// Clamps `command` into the limits in place.
    pub fn clamp(&self, command: &mut [S]) {
        for (c, [lo, hi]) in command.iter_mut().zip(&self.command_limits) {
            *c = c.max(*lo).min(*hi);
        }
    }

    fn validate(&self) -> Result<(), PhysicsError> {
        self.chassis.validate()?;
        if self.chassis.is_static {
            return Err(PhysicsError::StaticRobot(self.chassis.label.clone()));
        }
        if self.command_limits.len() != self.command_dim() {
            return Err(PhysicsError::InvalidLimits(format!(
                "{} channels for {:?}, expected {}",
                self.command_limits.len(),
                self.variant,
                self.command_dim()
            )));
        }
        if self
            .command_limits
            .iter()
            .any(|[lo, hi]| !(lo <= hi) || !lo.is_finite() || !hi.is_finite())
        {
            return Err(PhysicsError::InvalidLimits(
                "each limit must be finite with min <= max".into(),
            ));
        }
        if !(self.max_force > S::zero()) || !(self.max_torque > S::zero()) {
            return Err(PhysicsError::InvalidLimits(
                "motor bounds must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyState<S: Real> {
    pub label: String,
    pub position: Vec2<S>,
    pub orientation: S,
    pub linear_velocity: Vec2<S>,
    pub angular_velocity: S,
}

/// Full pose/velocity snapshot of every body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState<S: Real> {
    pub bodies: Vec<BodyState<S>>,
    pub step_count: u64,
}

impl<S: Real> WorldState<S> {
    pub fn body(&self, label: &str) -> Option<&BodyState<S>> {
        self.bodies.iter().find(|b| b.label == label)
    }

    pub fn body_mut(&mut self, label: &str) -> Option<&mut BodyState<S>> {
        self.bodies.iter_mut().find(|b| b.label == label)
    }

    /// Total kinetic energy given per-body masses and inertias in the same order.
    pub fn kinetic_energy(&self, masses: &[(S, S)]) -> S {
        self.bodies
            .iter()
            .zip(masses)
            .map(|(b, (m, i))| {
                S::lit(0.5)
                    * (*m * b.linear_velocity.length_squared()
                        + *i * b.angular_velocity * b.angular_velocity)
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport<S: Real> {
    pub new_state: WorldState<S>,
    /// Body label → summed normal contact impulse over the step divided by dt (N).
    pub contact_forces: BTreeMap<String, S>,
    /// Deepest overlap between any two bodies after the step (m).
    pub penetration_max: S,
}

impl<S: Real> StepReport<S> {
    pub fn force_on(&self, label: &str) -> Option<S> {
        self.contact_forces.get(label).copied()
    }
}

/// Fixed solver settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverParams<S: Real> {
    pub substeps: usize,
    pub velocity_iterations: usize,
    pub position_iterations: usize,
    /// Contacts are generated for pairs closer than this (speculative margin).
    pub contact_margin: S,
    /// Allowed overlap left untouched by positional correction.
    pub slop: S,
    /// Fraction of the remaining overlap removed per position iteration.
    pub correction_rate: S,
    pub max_correction: S,
    /// Overlap bound guaranteed for closing speeds up to `max_closing_speed`.
    pub penetration_tolerance: S,
    pub max_closing_speed: S,
}

impl<S: Real> Default for SolverParams<S> {
    fn default() -> Self {
        Self {
            substeps: 4,
            velocity_iterations: 8,
            position_iterations: 3,
            contact_margin: S::lit(0.03),
            slop: S::lit(0.0002),
            correction_rate: S::lit(0.8),
            max_correction: S::lit(0.05),
            penetration_tolerance: S::lit(0.001),
            max_closing_speed: S::lit(2.0),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Motion<S: Real> {
    pub pos: Vec2<S>,
    pub angle: S,
    pub vel: Vec2<S>,
    pub omega: S,
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct MassProps<S: Real> {
    pub inv_mass: S,
    pub inv_inertia: S,
    pub mass: S,
    pub inertia: S,
    /// Max linear ground-friction impulse per unit time (μ m g); zero disables.
    pub ground_force: S,
    /// Max torsional ground-friction torque (μ m g r).
    pub ground_torque: S,
    pub bound_radius: S,
}

/// A planar world: robot chassis at index 0 followed by the scene bodies.
#[derive(Clone, Debug)]
pub struct World<S: Real> {
    defs: Vec<BodyDef<S>>,
    robot: RobotModel<S>,
    gravity_plane: bool,
    params: SolverParams<S>,
    props: Vec<MassProps<S>>,
    motion: Vec<Motion<S>>,
    step_count: u64,
    forces: Vec<S>,
    scratch: solver::Scratch<S>,
}

impl<S: Real> World<S> {
    /// Builds a world at rest. The robot chassis becomes body 0.
    pub fn new(
        bodies: Vec<BodyDef<S>>,
        robot: RobotModel<S>,
        gravity_plane: bool,
    ) -> Result<Self, PhysicsError> {
        Self::with_params(bodies, robot, gravity_plane, SolverParams::default())
    }

    pub fn with_params(
        bodies: Vec<BodyDef<S>>,
        robot: RobotModel<S>,
        gravity_plane: bool,
        params: SolverParams<S>,
    ) -> Result<Self, PhysicsError> {
        robot.validate()?;
        let mut defs = Vec::with_capacity(bodies.len() + 1);
        defs.push(robot.chassis.clone());
        for b in bodies {
            b.validate()?;
            if defs.iter().any(|d: &BodyDef<S>| d.label == b.label) {
                return Err(PhysicsError::DuplicateLabel(b.label));
            }
            defs.push(b);
        }
        let motion = defs
            .iter()
            .map(|d| Motion {
                pos: d.position,
                angle: wrap_angle(d.orientation),
                ..Default::default()
            })
            .collect();
        let n = defs.len();
        let mut world = Self {
            defs,
            robot,
            gravity_plane,
            params,
            props: Vec::new(),
            motion,
            step_count: 0,
            forces: vec![S::zero(); n],
            scratch: solver::Scratch::default(),
        };
        world.refresh_props();
        Ok(world)
    }

    fn refresh_props(&mut self) {
        let g = S::lit(GRAVITY);
        self.props = self
            .defs
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let bound_radius = d.shape.bounding_radius();
                if d.is_static {
                    return MassProps {
                        bound_radius,
                        ..Default::default()
                    };
                }
                let inertia = d.shape.inertia(d.mass);
                // The robot's motor stands in for its wheels' ground contact.
                let grounded = self.gravity_plane && i != 0;
                let mu = if grounded {
                    d.effective_ground_friction()
                } else {
                    S::zero()
                };
                let torsion = if d.rolling {
                    S::zero()
                } else {
                    d.shape.torsion_radius()
                };
                MassProps {
                    inv_mass: S::one() / d.mass,
                    inv_inertia: S::one() / inertia,
                    mass: d.mass,
                    inertia,
                    ground_force: mu * d.mass * g,
                    ground_torque: mu * d.mass * g * torsion,
                    bound_radius,
                }
            })
            .collect();
    }

    pub fn robot(&self) -> &RobotModel<S> {
        &self.robot
    }

    pub fn params(&self) -> &SolverParams<S> {
        &self.params
    }

    pub fn body_count(&self) -> usize {
        self.defs.len()
    }

    pub fn defs(&self) -> &[BodyDef<S>] {
        &self.defs
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.defs.iter().map(|d| d.label.as_str())
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.defs.iter().position(|d| d.label == label)
    }

    pub fn require_index(&self, label: &str) -> Result<usize, PhysicsError> {
        self.index_of(label)
            .ok_or_else(|| PhysicsError::UnknownLabel(label.to_string()))
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn position(&self, i: usize) -> Vec2<S> {
        self.motion[i].pos
    }

    pub fn orientation(&self, i: usize) -> S {
        self.motion[i].angle
    }

    pub fn linear_velocity(&self, i: usize) -> Vec2<S> {
        self.motion[i].vel
    }

    pub fn angular_velocity(&self, i: usize) -> S {
        self.motion[i].omega
    }

    /// Contact force on body `i` accumulated over the most recent step (N).
    pub fn contact_force(&self, i: usize) -> S {
        self.forces[i]
    }

    /// (mass, inertia) per body; zeros for static bodies.
    pub fn mass_properties(&self) -> Vec<(S, S)> {
        self.props.iter().map(|p| (p.mass, p.inertia)).collect()
    }

    pub fn kinetic_energy(&self) -> S {
        self.motion
            .iter()
            .zip(&self.props)
            .map(|(m, p)| {
                S::lit(0.5) * (p.mass * m.vel.length_squared() + p.inertia * m.omega * m.omega)
            })
            .sum()
    }

    /// Replaces the physical parameters of every body (shape, mass, friction)
    /// while keeping the current motion. Labels and static flags must match.
    pub fn set_body_defs(&mut self, defs: &[BodyDef<S>]) -> Result<(), PhysicsError> {
        if defs.len() != self.defs.len() {
            return Err(PhysicsError::BodySetMismatch(format!(
                "{} defs for {} bodies",
                defs.len(),
                self.defs.len()
            )));
        }
        for (new, old) in defs.iter().zip(&self.defs) {
            if new.label != old.label || new.is_static != old.is_static {
                return Err(PhysicsError::BodySetMismatch(format!(
                    "body `{}` changed identity",
                    new.label
                )));
            }
            new.validate()?;
        }
        for (dst, src) in self.defs.iter_mut().zip(defs) {
            dst.clone_from(src);
        }
        self.robot.chassis.clone_from(&defs[0]);
        self.refresh_props();
        Ok(())
    }

    pub fn snapshot(&self) -> WorldState<S> {
        WorldState {
            bodies: self
                .defs
                .iter()
                .zip(&self.motion)
                .map(|(d, m)| BodyState {
                    label: d.label.clone(),
                    position: m.pos,
                    orientation: m.angle,
                    linear_velocity: m.vel,
                    angular_velocity: m.omega,
                })
                .collect(),
            step_count: self.step_count,
        }
    }

    /// Restores every body's motion from `state`. Body order and labels must match.
    pub fn reset_to(&mut self, state: &WorldState<S>) -> Result<(), PhysicsError> {
        if state.bodies.len() != self.defs.len() {
            return Err(PhysicsError::BodySetMismatch(format!(
                "state has {} bodies, world has {}",
                state.bodies.len(),
                self.defs.len()
            )));
        }
        if let Some((d, _)) = self
            .defs
            .iter()
            .zip(&state.bodies)
            .find(|(d, b)| d.label != b.label)
        {
            return Err(PhysicsError::BodySetMismatch(format!(
                "missing body `{}`",
                d.label
            )));
        }
        for ((m, b), d) in self.motion.iter_mut().zip(&state.bodies).zip(&self.defs) {
            m.pos = b.position;
            m.angle = b.orientation;
            if d.is_static {
                m.vel = Vec2::zero();
                m.omega = S::zero();
            } else {
                m.vel = b.linear_velocity;
                m.omega = b.angular_velocity;
            }
        }
        self.step_count = state.step_count;
        self.forces.iter_mut().for_each(|f| *f = S::zero());
        Ok(())
    }

    /// Adds `dv` to a dynamic body's linear velocity (scripted disturbances).
    pub fn apply_velocity_change(&mut self, label: &str, dv: Vec2<S>) -> Result<(), PhysicsError> {
        let i = self.require_index(label)?;
        if !self.defs[i].is_static {
            self.motion[i].vel += dv;
        }
        Ok(())
    }

    /// Clamped copy of `command`, validated for size and finiteness.
    pub fn prepare_command(&self, command: &[S]) -> Result<Vec<S>, PhysicsError> {
        let mut c = command.to_vec();
        self.check_and_clamp(&mut c)?;
        Ok(c)
    }

    fn check_and_clamp(&self, command: &mut [S]) -> Result<(), PhysicsError> {
        if command.len() != self.robot.command_dim() {
            return Err(PhysicsError::CommandDimension {
                expected: self.robot.command_dim(),
                got: command.len(),
            });
        }
        if command.iter().any(|c| !c.is_finite()) {
            return Err(PhysicsError::NonFiniteCommand);
        }
        self.robot.clamp(command);
        Ok(())
    }

    /// Advances one control period without building a report. Contact forces
    /// are available afterwards through [`World::contact_force`].
    pub fn advance(&mut self, command: &[S], dt: S) -> Result<(), PhysicsError> {
        if !(dt > S::zero() && dt.is_finite()) {
            return Err(PhysicsError::InvalidTimestep);
        }
        let mut cmd = [S::zero(); 3];
        if command.len() > cmd.len() {
            return Err(PhysicsError::CommandDimension {
                expected: self.robot.command_dim(),
                got: command.len(),
            });
        }
        cmd[..command.len()].copy_from_slice(command);
        self.check_and_clamp(&mut cmd[..command.len()])?;
        solver::step(self, cmd, dt);
        self.step_count += 1;
        Ok(())
    }

    /// Advances one control period and reports the new state, per-body
    /// contact forces and the deepest remaining overlap.
    pub fn step(&mut self, command: &[S], dt: S) -> Result<StepReport<S>, PhysicsError> {
        self.advance(command, dt)?;
        let contact_forces = self
            .defs
            .iter()
            .zip(&self.forces)
            .map(|(d, f)| (d.label.clone(), *f))
            .collect();
        Ok(StepReport {
            new_state: self.snapshot(),
            contact_forces,
            penetration_max: self.max_penetration(),
        })
    }

    fn placed(&self, i: usize) -> Placed<'_, S> {
        Placed::new(
            &self.defs[i].shape,
            self.motion[i].pos,
            self.motion[i].angle,
        )
    }

    /// Deepest current overlap over all body pairs (0 when nothing overlaps).
    pub fn max_penetration(&self) -> S {
        let n = self.defs.len();
        let mut worst = S::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.defs[i].is_static && self.defs[j].is_static {
                    continue;
                }
                let reach = self.props[i].bound_radius + self.props[j].bound_radius;
                if (self.motion[j].pos - self.motion[i].pos).length() > reach {
                    continue;
                }
                let d = collide::signed_distance(&self.placed(i), &self.placed(j));
                worst = worst.max(-d);
            }
        }
        worst
    }

    /// Signed distance between body `a` and body `b` (negative = overlap).
    pub fn distance_between(&self, a: usize, b: usize) -> S {
        collide::signed_distance(&self.placed(a), &self.placed(b))
    }

    /// Minimum signed distance from the robot shape to any listed obstacle;
    /// `+∞` when the list is empty.
    pub fn min_clearance(
        &self,
        robot_label: &str,
        obstacle_labels: &[impl AsRef<str>],
    ) -> Result<S, PhysicsError> {
        let r = self.require_index(robot_label)?;
        let mut best = S::infinity();
        for o in obstacle_labels {
            let j = self.require_index(o.as_ref())?;
            best = best.min(self.distance_between(r, j));
        }
        Ok(best)
    }
}
