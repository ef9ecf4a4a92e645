//! Sampling-based model-predictive control (MPPI) on top of a batch of planar
//! rigid-body simulations.
//!
//! The numeric core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases at the crate root fix it to `f64`, which
//! is what the scenario runner and CLI use.

pub mod costs;
pub mod math;
pub mod mppi;
pub mod physics2d;
pub mod randomization;
pub mod real;
pub mod sampling;
pub mod scenarios;

pub use real::Real;

pub type Vec2 = math::Vec2<f64>;
pub type World = physics2d::World<f64>;
pub type WorldState = physics2d::WorldState<f64>;
pub type BodyDef = physics2d::BodyDef<f64>;
pub type RobotModel = physics2d::RobotModel<f64>;
pub type StepReport = physics2d::StepReport<f64>;
pub type SceneDesc = physics2d::SceneDesc<f64>;
pub type ControlSequence = mppi::ControlSequence<f64>;
pub type MppiConfig = mppi::MppiConfig<f64>;
pub type Controller<C = costs::BoundCost<f64>> = mppi::Controller<f64, C>;
pub type CostWeights = costs::CostWeights<f64>;
pub type GoalSpec = costs::GoalSpec<f64>;
pub type CostSpec = costs::CostSpec<f64>;
pub type BoundCost = costs::BoundCost<f64>;
pub type SamplerConfig = sampling::SamplerConfig<f64>;
pub type NoiseSequence = sampling::NoiseSequence<f64>;
pub type HaltonSplineSampler = sampling::HaltonSplineSampler<f64>;
