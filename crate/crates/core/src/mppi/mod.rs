//! The sampling controller: reset K rollout worlds to the observed state,
//! roll out perturbed input sequences, weight them by cost and average.

mod sequence;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::{CostError, StageCost};
use crate::physics2d::{BodyDef, PhysicsError, StepReport, World, WorldState};
use crate::randomization::{randomize_world, RandomizationError, RandomizationSpec};
use crate::real::Real;
use crate::sampling::{
    HaltonSplineSampler, NoiseSequence, SamplerConfig, SamplingError, DEFAULT_SPLINE_DEGREE,
};

pub use sequence::ControlSequence;

#[derive(Debug, Error)]
pub enum MppiError {
    #[error("every rollout has infinite cost")]
    AllInfinite,
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("time shift needs a horizon of at least 2, got {0}")]
    ShortHorizon(usize),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Randomization(#[from] RandomizationError),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

fn d_dt<S: Real>() -> S {
    S::lit(0.04)
}
fn d_one<S: Real>() -> S {
    S::one()
}
fn d_eta_min<S: Real>() -> S {
    S::lit(5.0)
}
fn d_eta_max<S: Real>() -> S {
    S::lit(10.0)
}
fn d_degree() -> usize {
    DEFAULT_SPLINE_DEGREE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MppiConfig<S: Real> {
    /// Rollout count `K`.
    pub samples: usize,
    /// Horizon `T` in control steps.
    pub horizon: usize,
    #[serde(default = "d_dt")]
    pub dt: S,
    #[serde(default = "d_one")]
    pub gamma: S,
    #[serde(default = "d_one")]
    pub beta_init: S,
    #[serde(default = "d_eta_min")]
    pub eta_min: S,
    #[serde(default = "d_eta_max")]
    pub eta_max: S,
    /// Per-channel exploration standard deviation.
    pub sigma: Vec<S>,
    #[serde(default = "d_degree")]
    pub spline_degree: usize,
    /// Defaults to `max(4, ceil(T / 2))`.
    #[serde(default)]
    pub knot_count: Option<usize>,
    #[serde(default)]
    pub halton_skip: u64,
    #[serde(default)]
    pub seed: u64,
    /// Bounds used to clamp sampled sequences; the robot's limits when absent.
    #[serde(default)]
    pub command_limits: Option<Vec<[S; 2]>>,
    /// Include every rollout cost in the diagnostics.
    #[serde(default)]
    pub record_rollout_costs: bool,
}

impl<S: Real> MppiConfig<S> {
    pub fn new(samples: usize, horizon: usize, sigma: Vec<S>) -> Self {
        Self {
            samples,
            horizon,
            dt: d_dt(),
            gamma: S::one(),
            beta_init: S::one(),
            eta_min: d_eta_min(),
            eta_max: d_eta_max(),
            sigma,
            spline_degree: DEFAULT_SPLINE_DEGREE,
            knot_count: None,
            halton_skip: 0,
            seed: 0,
            command_limits: None,
            record_rollout_costs: false,
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig<S> {
        let mut c = SamplerConfig::new(self.samples, self.horizon, self.sigma.clone(), self.seed);
        c.spline_degree = self.spline_degree;
        if let Some(n) = self.knot_count {
            c.knot_count = n;
        }
        c.halton_skip = self.halton_skip;
        c
    }

    pub fn validate(&self) -> Result<(), MppiError> {
        let bad = |m: &str| Err(MppiError::InvalidConfig(m.to_string()));
        if !(self.gamma > S::zero() && self.gamma <= S::one()) {
            return bad("gamma must be in (0, 1]");
        }
        if !(self.beta_init > S::zero() && self.beta_init.is_finite()) {
            return bad("beta_init must be positive");
        }
        if !(self.eta_min < self.eta_max) {
            return bad("eta_min must be below eta_max");
        }
        if !(self.dt > S::zero() && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if let Some(l) = &self.command_limits {
            if l.len() != self.sigma.len() || l.iter().any(|[lo, hi]| !(lo <= hi)) {
                return bad("command_limits must give one ordered [min, max] pair per channel");
            }
        }
        self.sampler_config().validate()?;
        Ok(())
    }
}

/// Normalized importance weights with the quantities used to form them.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights<S: Real> {
    pub weights: Vec<S>,
    /// Sum of the unnormalized weights.
    pub eta: S,
    /// Smallest finite cost.
    pub rho: S,
}

/// `w_k = exp(−(S_k − ρ)/β) / η`. Non-finite costs get weight zero.
pub fn importance_weights<S: Real>(costs: &[S], beta: S) -> Result<Weights<S>, MppiError> {
    if !(beta > S::zero()) {
        return Err(MppiError::InvalidConfig("beta must be positive".into()));
    }
    let rho = costs
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(S::infinity(), S::min);
    if !rho.is_finite() {
        return Err(MppiError::AllInfinite);
    }
    let mut weights: Vec<S> = costs
        .iter()
        .map(|&c| {
            if c.is_finite() {
                (-(c - rho) / beta).exp()
            } else {
                S::zero()
            }
        })
        .collect();
    let eta = weights.iter().fold(S::zero(), |a, &b| a + b);
    for w in &mut weights {
        *w = *w / eta;
    }
    Ok(Weights { weights, eta, rho })
}

/// `1 / Σ w²`.
pub fn effective_sample_size<S: Real>(weights: &[S]) -> S {
    S::one() / weights.iter().fold(S::zero(), |a, &w| a + w * w)
}

/// `U* = Σ w_k V_k`, accumulated in ascending `k`.
pub fn optimal_sequence<S: Real>(
    weights: &[S],
    sequences: &[ControlSequence<S>],
) -> Result<ControlSequence<S>, MppiError> {
    if weights.len() != sequences.len() || sequences.is_empty() {
        return Err(MppiError::LengthMismatch {
            expected: weights.len(),
            got: sequences.len(),
        });
    }
    let (t, m) = (sequences[0].horizon(), sequences[0].dim());
    let mut out = ControlSequence::zeros(t, m);
    for (w, v) in weights.iter().zip(sequences) {
        if v.horizon() != t || v.dim() != m {
            return Err(MppiError::LengthMismatch {
                expected: t * m,
                got: v.horizon() * v.dim(),
            });
        }
        for (o, x) in out.as_mut_slice().iter_mut().zip(v.as_slice()) {
            *o = *o + *w * *x;
        }
    }
    Ok(out)
}

/// Shrinks β when too many rollouts carry weight and grows it when too few do.
pub fn update_beta<S: Real>(beta: S, eta: S, eta_min: S, eta_max: S) -> S {
    if eta > eta_max {
        S::lit(0.9) * beta
    } else if eta < eta_min {
        S::lit(1.2) * beta
    } else {
        beta
    }
}

/// `[u1, …, u_{T−1}, u_{T−1}]`.
pub fn time_shift<S: Real>(u: &ControlSequence<S>) -> Result<ControlSequence<S>, MppiError> {
    if u.horizon() < 2 {
        return Err(MppiError::ShortHorizon(u.horizon()));
    }
    let m = u.dim();
    let mut out = u.clone();
    let vals = out.as_mut_slice();
    vals.copy_within(m.., 0);
    let n = vals.len();
    vals.copy_within(n - 2 * m..n - m, n - m);
    Ok(out)
}

/// A rollout with its full trace.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutResult<S: Real> {
    /// `T + 1` states starting with the reset state.
    pub trajectory: Vec<WorldState<S>>,
    pub cost: S,
    pub contact_trace: Vec<StepReport<S>>,
}

fn sanitize<S: Real>(c: S) -> S {
    if c.is_finite() {
        c
    } else {
        S::infinity()
    }
}

/// Resets `world` to `start`, applies `v` step by step and returns the
/// discounted cost with the visited states and step reports.
pub fn compute_rollout_cost<S: Real, C: StageCost<S> + ?Sized>(
    world: &mut World<S>,
    start: &WorldState<S>,
    v: &ControlSequence<S>,
    cost: &C,
    gamma: S,
    dt: S,
) -> Result<RolloutResult<S>, MppiError> {
    world.reset_to(start)?;
    let mut trajectory = vec![world.snapshot()];
    let mut contact_trace = Vec::with_capacity(v.horizon());
    let mut total = S::zero();
    let mut discount = S::one();
    for t in 0..v.horizon() {
        let report = world.step(v.row(t), dt)?;
        total = total + discount * cost.stage_cost(world);
        discount = discount * gamma;
        trajectory.push(report.new_state.clone());
        contact_trace.push(report);
    }
    Ok(RolloutResult {
        trajectory,
        cost: sanitize(total),
        contact_trace,
    })
}

/// Cost-only rollout used inside the controller.
fn rollout_cost<S: Real, C: StageCost<S> + ?Sized>(
    world: &mut World<S>,
    start: &WorldState<S>,
    v: &ControlSequence<S>,
    cost: &C,
    gamma: S,
    dt: S,
) -> S {
    if world.reset_to(start).is_err() {
        return S::infinity();
    }
    let mut total = S::zero();
    let mut discount = S::one();
    for t in 0..v.horizon() {
        if world.advance(v.row(t), dt).is_err() {
            return S::infinity();
        }
        total = total + discount * cost.stage_cost(world);
        discount = discount * gamma;
    }
    sanitize(total)
}

/// Per-step record of the controller's internal quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub iteration: u64,
    pub u0: Vec<f64>,
    /// Normalizer of the importance weights.
    pub eta: f64,
    /// Minimum rollout cost.
    pub rho: f64,
    /// Inverse temperature used for this step's weights.
    pub beta: f64,
    /// Inverse temperature after the η-band update.
    pub beta_next: f64,
    /// `1 / Σ w²`.
    pub ess: f64,
    /// Wall time of the whole step (s).
    pub solver_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout_costs: Option<Vec<f64>>,
}

/// Noise, clamped sequences and weights from one step, for inspection.
#[derive(Clone, Debug)]
pub struct StepDetail<S: Real> {
    pub noise: Vec<NoiseSequence<S>>,
    pub sequences: Vec<ControlSequence<S>>,
    pub costs: Vec<S>,
    pub weights: Weights<S>,
    pub optimal: ControlSequence<S>,
}

pub struct Controller<S: Real, C: StageCost<S>> {
    cfg: MppiConfig<S>,
    sampler: HaltonSplineSampler<S>,
    nominal: Vec<BodyDef<S>>,
    randomization: RandomizationSpec,
    worlds: Vec<World<S>>,
    cost: C,
    limits: Vec<[S; 2]>,
    u_init: ControlSequence<S>,
    beta: S,
    iteration: u64,
    pool: rayon::ThreadPool,
}

impl<S: Real, C: StageCost<S>> Controller<S, C> {
    /// `template` supplies the nominal bodies and robot; each rollout world
    /// is a copy of it. `workers` of `None` uses rayon's default.
    pub fn new(
        cfg: MppiConfig<S>,
        template: &World<S>,
        cost: C,
        randomization: RandomizationSpec,
        workers: Option<usize>,
    ) -> Result<Self, MppiError> {
        cfg.validate()?;
        randomization.validate()?;
        let m = template.robot().command_dim();
        if cfg.sigma.len() != m {
            return Err(MppiError::LengthMismatch {
                expected: m,
                got: cfg.sigma.len(),
            });
        }
        let limits = cfg
            .command_limits
            .clone()
            .unwrap_or_else(|| template.robot().command_limits.clone());
        let sampler = HaltonSplineSampler::new(cfg.sampler_config())?;
        let nominal = template.defs().to_vec();
        let mut worlds = vec![template.clone(); cfg.samples];
        if !randomization.redraw_per_iteration {
            for (k, w) in worlds.iter_mut().enumerate() {
                w.set_body_defs(&randomize_world(&nominal, &randomization, k, 0))?;
            }
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.unwrap_or(0))
            .build()
            .map_err(|e| MppiError::Pool(e.to_string()))?;
        Ok(Self {
            u_init: ControlSequence::zeros(cfg.horizon, m),
            beta: cfg.beta_init,
            iteration: 0,
            cfg,
            sampler,
            nominal,
            randomization,
            worlds,
            cost,
            limits,
            pool,
        })
    }

    pub fn config(&self) -> &MppiConfig<S> {
        &self.cfg
    }

    pub fn beta(&self) -> S {
        self.beta
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn warm_start(&self) -> &ControlSequence<S> {
        &self.u_init
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// One pass of the control loop; returns the input to apply now.
    pub fn control_step(
        &mut self,
        observed: &WorldState<S>,
    ) -> Result<(Vec<S>, IterationDiagnostics), MppiError> {
        let started = Instant::now();
        let (u0, detail, beta_used) = self.step_inner(observed)?;
        let solver_time = started.elapsed().as_secs_f64();
        let diag = IterationDiagnostics {
            iteration: self.iteration - 1,
            u0: u0.iter().map(|x| x.to_f64_lossy()).collect(),
            eta: detail.weights.eta.to_f64_lossy(),
            rho: detail.weights.rho.to_f64_lossy(),
            beta: beta_used.to_f64_lossy(),
            beta_next: self.beta.to_f64_lossy(),
            ess: effective_sample_size(&detail.weights.weights).to_f64_lossy(),
            solver_time,
            rollout_costs: self
                .cfg
                .record_rollout_costs
                .then(|| detail.costs.iter().map(|c| c.to_f64_lossy()).collect()),
        };
        Ok((u0, diag))
    }

    /// Like [`Controller::control_step`] but returns the intermediate arrays.
    pub fn control_step_detailed(
        &mut self,
        observed: &WorldState<S>,
    ) -> Result<(Vec<S>, StepDetail<S>), MppiError> {
        let (u0, detail, _) = self.step_inner(observed)?;
        Ok((u0, detail))
    }

    fn step_inner(
        &mut self,
        observed: &WorldState<S>,
    ) -> Result<(Vec<S>, StepDetail<S>, S), MppiError> {
        let iteration = self.iteration;
        let noise = self.sampler.sample(iteration);
        let sequences: Vec<ControlSequence<S>> = noise
            .iter()
            .map(|e| {
                let mut v = self.u_init.plus(e);
                v.clamp(&self.limits);
                v
            })
            .collect();

        let (cfg, cost, nominal, spec) =
            (&self.cfg, &self.cost, &self.nominal, &self.randomization);
        let worlds = &mut self.worlds;
        let costs: Vec<S> = self.pool.install(|| {
            worlds
                .par_iter_mut()
                .zip(sequences.par_iter())
                .enumerate()
                .map(|(k, (world, v))| {
                    if spec.redraw_per_iteration
                        && !spec.is_identity()
                        && world
                            .set_body_defs(&randomize_world(nominal, spec, k, iteration))
                            .is_err()
                    {
                        return S::infinity();
                    }
                    rollout_cost(world, observed, v, cost, cfg.gamma, cfg.dt)
                })
                .collect()
        });

        let weights = importance_weights(&costs, self.beta)?;
        let beta_used = self.beta;
        self.beta = update_beta(self.beta, weights.eta, cfg.eta_min, cfg.eta_max);
        let optimal = optimal_sequence(&weights.weights, &sequences)?;
        self.u_init = if optimal.horizon() >= 2 {
            time_shift(&optimal)?
        } else {
            optimal.clone()
        };
        self.iteration += 1;
        let u0 = optimal.row(0).to_vec();
        Ok((
            u0,
            StepDetail {
                noise,
                sequences,
                costs,
                weights,
                optimal,
            },
            beta_used,
        ))
    }
}

#[cfg(test)]
mod tests;
