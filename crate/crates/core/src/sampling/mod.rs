//! Exploration noise from Halton points smoothed by B-splines.
//!
//! For every rollout a low-discrepancy point is drawn in a space with one
//! coordinate per (channel, knot) pair. Each coordinate is mapped through the
//! standard-normal quantile function and scaled by the channel's sigma; the
//! resulting knot values are the control points of a clamped B-spline, which
//! is sampled at `T` evenly spaced parameters to give the noise sequence.

mod bspline;
mod halton;
mod normal;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

pub use bspline::BSplineBasis;
pub use halton::{first_primes, halton, is_prime, radical_inverse};
pub use normal::inverse_normal_cdf;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("Halton base {0} is not prime")]
    NonPrimeBase(u64),
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
}

/// Knot count used when none is given: `max(4, ceil(T / 2))`.
pub fn default_knot_count(horizon: usize) -> usize {
    horizon.div_ceil(2).max(4)
}

pub const DEFAULT_SPLINE_DEGREE: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig<S: Real> {
    /// Number of sequences `K`.
    pub samples: usize,
    /// Horizon `T` in control steps.
    pub horizon: usize,
    /// Per-channel standard deviation; its length is the input dimension.
    pub sigma: Vec<S>,
    pub spline_degree: usize,
    pub knot_count: usize,
    pub halton_skip: u64,
    pub seed: u64,
}

impl<S: Real> SamplerConfig<S> {
    /// Cubic spline with the default knot count.
    pub fn new(samples: usize, horizon: usize, sigma: Vec<S>, seed: u64) -> Self {
        Self {
            samples,
            horizon,
            sigma,
            spline_degree: DEFAULT_SPLINE_DEGREE,
            knot_count: default_knot_count(horizon),
            halton_skip: 0,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.sigma.len()
    }

    pub fn validate(&self) -> Result<(), SamplingError> {
        let bad = |m: &str| Err(SamplingError::InvalidConfig(m.to_string()));
        if self.samples == 0 || self.horizon == 0 || self.knot_count == 0 {
            return bad("sample count, horizon and knot count must be at least 1");
        }
        if self.sigma.is_empty() {
            return bad("sigma must have one entry per input channel");
        }
        if self
            .sigma
            .iter()
            .any(|s| !(*s > S::zero()) || !s.is_finite())
        {
            return bad("sigma entries must be positive and finite");
        }
        if self.spline_degree >= self.knot_count {
            return bad("spline degree must be below the knot count");
        }
        Ok(())
    }
}

/// A `T × m` additive perturbation, stored row-major by time step.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSequence<S: Real> {
    horizon: usize,
    dim: usize,
    values: Vec<S>,
}

impl<S: Real> NoiseSequence<S> {
    pub fn zeros(horizon: usize, dim: usize) -> Self {
        Self {
            horizon,
            dim,
            values: vec![S::zero(); horizon * dim],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, t: usize, j: usize) -> S {
        self.values[t * self.dim + j]
    }

    pub fn row(&self, t: usize) -> &[S] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[S] {
        &self.values
    }

    /// Values of channel `j` over the horizon.
    pub fn channel(&self, j: usize) -> Vec<S> {
        (0..self.horizon).map(|t| self.get(t, j)).collect()
    }
}

/// Reusable sampler: precomputes the spline basis, the prime bases and the
/// per-dimension digit permutations derived from the seed.
#[derive(Clone, Debug)]
pub struct HaltonSplineSampler<S: Real> {
    cfg: SamplerConfig<S>,
    basis: BSplineBasis<S>,
    bases: Vec<u64>,
    perms: Vec<Vec<u32>>,
}

impl<S: Real> HaltonSplineSampler<S> {
    pub fn new(cfg: SamplerConfig<S>) -> Result<Self, SamplingError> {
        cfg.validate()?;
        let basis = BSplineBasis::new(cfg.spline_degree, cfg.knot_count, cfg.horizon)?;
        let dims = cfg.dim() * cfg.knot_count;
        let bases = first_primes(dims);
        let perms = bases
            .iter()
            .enumerate()
            .map(|(d, &b)| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(d as u64);
                let mut p: Vec<u32> = (0..b as u32).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        Ok(Self {
            cfg,
            basis,
            bases,
            perms,
        })
    }

    pub fn config(&self) -> &SamplerConfig<S> {
        &self.cfg
    }

    pub fn basis(&self) -> &BSplineBasis<S> {
        &self.basis
    }

    /// Prime base of the coordinate for (channel `j`, knot `i`).
    pub fn base_for(&self, j: usize, i: usize) -> u64 {
        self.bases[j * self.cfg.knot_count + i]
    }

    /// First Halton index consumed at `iteration`; successive iterations never overlap.
    pub fn index_offset(&self, iteration: u64) -> u64 {
        let per_iteration = (self.cfg.samples * self.cfg.knot_count) as u64;
        self.cfg.halton_skip + self.cfg.seed + iteration * per_iteration
    }

    /// Knot values for rollout `k`, channel-major (`j * knot_count + i`).
    pub fn knot_values(&self, iteration: u64, k: usize) -> Vec<S> {
        let n = self.cfg.knot_count;
        let index = self.index_offset(iteration) + k as u64 + 1;
        let mut out = Vec::with_capacity(self.cfg.dim() * n);
        for (j, sigma) in self.cfg.sigma.iter().enumerate() {
            for i in 0..n {
                let d = j * n + i;
                let u = halton::scrambled_radical_inverse(index, self.bases[d], &self.perms[d]);
                let u = u.clamp(1e-12, 1.0 - 1e-12);
                out.push(S::lit(inverse_normal_cdf(u)) * *sigma);
            }
        }
        out
    }

    /// Noise sequence of rollout `k` at `iteration`.
    pub fn sequence(&self, iteration: u64, k: usize) -> NoiseSequence<S> {
        let knots = self.knot_values(iteration, k);
        let (t, m, n) = (self.cfg.horizon, self.cfg.dim(), self.cfg.knot_count);
        let mut seq = NoiseSequence::zeros(t, m);
        let mut channel = vec![S::zero(); t];
        for j in 0..m {
            self.basis
                .evaluate_into(&knots[j * n..(j + 1) * n], &mut channel);
            for (step, v) in channel.iter().enumerate() {
                seq.values[step * m + j] = *v;
            }
        }
        seq
    }

    /// All `K` sequences for `iteration`.
    pub fn sample(&self, iteration: u64) -> Vec<NoiseSequence<S>> {
        (0..self.cfg.samples)
            .map(|k| self.sequence(iteration, k))
            .collect()
    }
}

/// One-shot convenience wrapper around [`HaltonSplineSampler`].
pub fn sample_noise_sequences<S: Real>(
    cfg: &SamplerConfig<S>,
    iteration: u64,
) -> Result<Vec<NoiseSequence<S>>, SamplingError> {
    Ok(HaltonSplineSampler::new(cfg.clone())?.sample(iteration))
}
