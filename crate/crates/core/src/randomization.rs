//! Per-rollout perturbation of mass, friction and size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics2d::{BodyDef, Shape};
use crate::real::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RandomizationError {
    #[error("relative spread must be in [0, 1), got {0}")]
    InvalidRelative(f64),
    #[error("size sigma must be finite and nonnegative, got {0}")]
    InvalidSigma(f64),
    #[error("size floor must be positive, got {0}")]
    InvalidFloor(f64),
}

fn default_true() -> bool {
    true
}

fn default_size_min() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizationSpec {
    /// Mass is scaled by `U(1 − mass_rel, 1 + mass_rel)`.
    #[serde(default)]
    pub mass_rel: f64,
    #[serde(default)]
    pub friction_rel: f64,
    /// Standard deviation of the additive Gaussian noise on each size dimension (m).
    #[serde(default)]
    pub size_sigma: f64,
    #[serde(default = "default_size_min")]
    pub size_min: f64,
    /// Labels left at their nominal parameters.
    #[serde(default)]
    pub exempt: Vec<String>,
    /// Also perturb the robot chassis (body 0).
    #[serde(default)]
    pub include_robot: bool,
    #[serde(default = "default_true")]
    pub redraw_per_iteration: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for RandomizationSpec {
    fn default() -> Self {
        Self {
            mass_rel: 0.0,
            friction_rel: 0.0,
            size_sigma: 0.0,
            size_min: default_size_min(),
            exempt: Vec::new(),
            include_robot: false,
            redraw_per_iteration: true,
            seed: 0,
        }
    }
}

impl RandomizationSpec {
    pub fn new(mass_rel: f64, friction_rel: f64, size_sigma: f64, seed: u64) -> Self {
        Self {
            mass_rel,
            friction_rel,
            size_sigma,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RandomizationError> {
        for r in [self.mass_rel, self.friction_rel] {
            if !(0.0..1.0).contains(&r) {
                return Err(RandomizationError::InvalidRelative(r));
            }
        }
        if !(self.size_sigma >= 0.0 && self.size_sigma.is_finite()) {
            return Err(RandomizationError::InvalidSigma(self.size_sigma));
        }
        if !(self.size_min > 0.0) {
            return Err(RandomizationError::InvalidFloor(self.size_min));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.mass_rel == 0.0 && self.friction_rel == 0.0 && self.size_sigma == 0.0
    }

    fn rng(&self, rollout_index: usize, iteration: u64) -> ChaCha8Rng {
        let iteration = if self.redraw_per_iteration {
            iteration
        } else {
            0
        };
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&iteration.to_le_bytes());
        key[16..24].copy_from_slice(b"domrand\0");
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(rollout_index as u64);
        rng
    }
}

fn scale<R: Rng>(rng: &mut R, rel: f64) -> f64 {
    if rel == 0.0 {
        1.0
    } else {
        rng.gen_range(1.0 - rel..=1.0 + rel)
    }
}

fn jitter<S: Real, R: Rng>(rng: &mut R, noise: Option<&Normal<f64>>, size: S, floor: f64) -> S {
    match noise {
        Some(n) => S::lit((size.to_f64_lossy() + n.sample(rng)).max(floor)),
        None => size,
    }
}

/// Perturbed copy of `nominal` for one rollout. Body 0 is the robot and stays
/// nominal unless `include_robot` is set. Static bodies keep their geometry
/// and only have friction perturbed. The draw depends only on
/// `(spec.seed, rollout_index, iteration)`.
pub fn randomize_world<S: Real>(
    nominal: &[BodyDef<S>],
    spec: &RandomizationSpec,
    rollout_index: usize,
    iteration: u64,
) -> Vec<BodyDef<S>> {
    let mut out = nominal.to_vec();
    if spec.is_identity() {
        return out;
    }
    let mut rng = spec.rng(rollout_index, iteration);
    let noise = (spec.size_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.size_sigma).expect("validated sigma"));
    for (i, body) in out.iter_mut().enumerate() {
        // Draw for every body in a fixed pattern so opting one body out does
        // not shift the draws of the others.
        let m = scale(&mut rng, spec.mass_rel);
        let f = scale(&mut rng, spec.friction_rel);
        let g = scale(&mut rng, spec.friction_rel);
        let dims = match body.shape {
            Shape::Disc { radius } => [
                jitter(&mut rng, noise.as_ref(), radius, spec.size_min),
                S::zero(),
            ],
            Shape::Box {
                half_extents: [hx, hy],
            } => [
                jitter(&mut rng, noise.as_ref(), hx + hx, spec.size_min),
                jitter(&mut rng, noise.as_ref(), hy + hy, spec.size_min),
            ],
        };
        if (i == 0 && !spec.include_robot) || spec.exempt.contains(&body.label) {
            continue;
        }
        body.friction_coeff = body.friction_coeff * S::lit(f);
        if let Some(mu) = body.ground_friction.as_mut() {
            *mu = *mu * S::lit(g);
        }
        if body.is_static {
            continue;
        }
        body.mass = body.mass * S::lit(m);
        let half = S::lit(0.5);
        body.shape = match body.shape {
            Shape::Disc { .. } => Shape::Disc { radius: dims[0] },
            Shape::Box { .. } => Shape::Box {
                half_extents: [dims[0] * half, dims[1] * half],
            },
        };
    }
    out
}
