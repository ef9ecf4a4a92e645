//! JSON scene description (robot, bodies, ground plane).

use serde::{Deserialize, Serialize};

use crate::real::Real;

use super::{BodyDef, PhysicsError, RobotModel, World};

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDesc<S: Real> {
    pub robot: RobotModel<S>,
    #[serde(default)]
    pub bodies: Vec<BodyDef<S>>,
    /// Objects slide on a ground plane with Coulomb friction.
    #[serde(default = "yes")]
    pub gravity_plane: bool,
}

impl<S: Real> SceneDesc<S> {
    pub fn build(&self) -> Result<World<S>, PhysicsError> {
        World::new(self.bodies.clone(), self.robot.clone(), self.gravity_plane)
    }

    /// Every body definition in world order (robot chassis first).
    pub fn all_defs(&self) -> Vec<BodyDef<S>> {
        std::iter::once(self.robot.chassis.clone())
            .chain(self.bodies.iter().cloned())
            .collect()
    }

    pub fn body(&self, label: &str) -> Option<&BodyDef<S>> {
        std::iter::once(&self.robot.chassis)
            .chain(self.bodies.iter())
            .find(|b| b.label == label)
    }
}
