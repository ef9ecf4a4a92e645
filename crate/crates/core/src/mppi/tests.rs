use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;
use crate::costs::{BoundCost, CostSpec, GoalSpec};
use crate::math::Vec2;
use crate::physics2d::{RobotModel, RobotVariant, Shape};

struct ConstCost(f64);

impl StageCost<f64> for ConstCost {
    fn stage_cost(&self, _: &World<f64>) -> f64 {
        self.0
    }
}

fn point_world(start: (f64, f64)) -> World<f64> {
    let robot = RobotModel::new(
        RobotVariant::HolonomicPoint,
        BodyDef::new("robot", Shape::Disc { radius: 0.1 })
            .with_mass(5.0)
            .at(start.0, start.1),
        vec![[-1.0, 1.0], [-1.0, 1.0]],
    );
    let bodies = vec![
        BodyDef::new(
            "post",
            Shape::Box {
                half_extents: [0.1, 0.1],
            },
        )
        .at(0.5, 0.05)
        .fixed(),
        BodyDef::new("puck", Shape::Disc { radius: 0.08 })
            .with_mass(0.5)
            .at(0.2, -0.4)
            .with_friction(0.4),
    ];
    World::new(bodies, robot, true).unwrap()
}

fn nav_cost_for(world: &World<f64>, goal: (f64, f64)) -> BoundCost<f64> {
    let spec = CostSpec::Nav {
        w_goal: 1.0,
        w_c: 0.5,
        robot: "robot".into(),
        obstacles: vec!["post".into()],
    };
    spec.bind(
        world,
        &GoalSpec::new(Vec2::new(goal.0, goal.1), 0.0, 0.05, 0.17),
    )
    .unwrap()
}

#[test]
fn weights_examples() {
    let w = importance_weights(&[1.0, 2.0, 3.0], 1.0).unwrap();
    let e = std::f64::consts::E;
    let eta = 1.0 + 1.0 / e + 1.0 / (e * e);
    assert_abs_diff_eq!(w.eta, eta, epsilon = 1e-15);
    assert_abs_diff_eq!(w.eta, 1.5032, epsilon = 1e-4);
    for (got, want) in w.weights.iter().zip([0.6652, 0.2447, 0.0900]) {
        assert_abs_diff_eq!(*got, want, epsilon = 1e-4);
    }
    assert_eq!(w.rho, 1.0);

    let u = importance_weights(&[4.2; 5], 0.3).unwrap();
    assert_eq!(u.eta, 5.0);
    assert!(u.weights.iter().all(|x| *x == 0.2));

    let shifted = importance_weights(&[101.0, 102.0, 103.0], 1.0).unwrap();
    assert_eq!(shifted.weights, w.weights);
}

#[test]
fn infinite_costs_get_zero_weight() {
    let w = importance_weights(&[f64::INFINITY, 1.0, f64::NAN, 1.0], 1.0).unwrap();
    assert_eq!(w.weights, vec![0.0, 0.5, 0.0, 0.5]);
    assert!(matches!(
        importance_weights(&[f64::INFINITY, f64::NAN], 1.0),
        Err(MppiError::AllInfinite)
    ));
    assert!(importance_weights(&[1.0], 0.0).is_err());
}

#[test]
fn optimal_sequence_examples() {
    let v = ControlSequence::from_rows(&[vec![0.3, -0.2], vec![0.1, 0.9]]).unwrap();
    assert_eq!(
        optimal_sequence(&[1.0], std::slice::from_ref(&v)).unwrap(),
        v
    );
    let zeros = ControlSequence::zeros(3, 2);
    let ones = ControlSequence::constant(3, &[1.0, 1.0]);
    assert_eq!(
        optimal_sequence(&[0.5, 0.5], &[zeros.clone(), ones]).unwrap(),
        ControlSequence::constant(3, &[0.5, 0.5])
    );
    assert!(matches!(
        optimal_sequence(&[0.5, 0.5], &[zeros]),
        Err(MppiError::LengthMismatch { .. })
    ));
}

#[test]
fn uniform_weights_give_the_mean() {
    let seqs: Vec<ControlSequence<f64>> = (0..6)
        .map(|k| {
            ControlSequence::from_rows(&[vec![k as f64, (k * k) as f64], vec![-(k as f64), 0.5]])
                .unwrap()
        })
        .collect();
    let out = optimal_sequence(&[1.0 / 6.0; 6], &seqs).unwrap();
    for t in 0..2 {
        for j in 0..2 {
            let mean = seqs.iter().map(|s| s.get(t, j)).sum::<f64>() / 6.0;
            assert_abs_diff_eq!(out.get(t, j), mean, epsilon = 1e-14);
        }
    }
}

#[test]
fn beta_update_table() {
    assert_eq!(update_beta(1.0, 12.0, 5.0, 10.0), 0.9);
    assert_eq!(update_beta(1.0, 3.0, 5.0, 10.0), 1.2);
    assert_eq!(update_beta(1.0, 7.0, 5.0, 10.0), 1.0);
    assert_eq!(update_beta(1.0, 10.0, 5.0, 10.0), 1.0);
    assert_eq!(update_beta(1.0, 5.0, 5.0, 10.0), 1.0);
}

#[test]
fn time_shift_examples() {
    let s =
        ControlSequence::from_rows(&[vec![1.0, 10.0], vec![2.0, 20.0], vec![3.0, 30.0]]).unwrap();
    let want =
        ControlSequence::from_rows(&[vec![2.0, 20.0], vec![3.0, 30.0], vec![3.0, 30.0]]).unwrap();
    assert_eq!(time_shift(&s).unwrap(), want);
    let c = ControlSequence::constant(5, &[0.4]);
    assert_eq!(time_shift(&c).unwrap(), c);
    let two = ControlSequence::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
    assert_eq!(
        time_shift(&two).unwrap(),
        ControlSequence::constant(2, &[2.0])
    );
    assert!(matches!(
        time_shift(&ControlSequence::constant(1, &[1.0])),
        Err(MppiError::ShortHorizon(1))
    ));
}

#[test]
fn rollout_cost_discounting() {
    let mut w = point_world((0.0, 0.0));
    let start = w.snapshot();
    let v = ControlSequence::zeros(4, 2);
    let r = compute_rollout_cost(&mut w, &start, &v, &ConstCost(2.5), 1.0, 0.04).unwrap();
    assert_eq!(r.cost, 10.0);
    let v = ControlSequence::zeros(3, 2);
    let r = compute_rollout_cost(&mut w, &start, &v, &ConstCost(1.0), 0.5, 0.04).unwrap();
    assert_eq!(r.cost, 1.75);
    assert_eq!(r.trajectory.len(), 4);
    assert_eq!(r.contact_trace.len(), 3);
    assert_eq!(r.trajectory[0], start);
    assert_eq!(
        compute_rollout_cost(&mut w, &start, &v, &ConstCost(f64::NAN), 1.0, 0.04)
            .unwrap()
            .cost,
        f64::INFINITY
    );
}

#[test]
fn rollout_at_goal_costs_nothing() {
    let mut w = point_world((-0.6, 0.6));
    let cost = nav_cost_for(&w, (-0.6, 0.6));
    let start = w.snapshot();
    let r = compute_rollout_cost(
        &mut w,
        &start,
        &ControlSequence::zeros(8, 2),
        &cost,
        1.0,
        0.04,
    )
    .unwrap();
    assert!(r.cost.abs() < 1e-9);
}

#[test]
fn fast_rollout_matches_traced_rollout() {
    let mut w = point_world((0.0, 0.0));
    let cost = nav_cost_for(&w, (1.0, 0.2));
    let start = w.snapshot();
    let v = ControlSequence::constant(10, &[0.9, 0.1]);
    let traced = compute_rollout_cost(&mut w, &start, &v, &cost, 0.9, 0.04).unwrap();
    let fast = rollout_cost(&mut w, &start, &v, &cost, 0.9, 0.04);
    assert_eq!(traced.cost, fast);
    assert!(traced
        .contact_trace
        .iter()
        .any(|r| r.force_on("post").unwrap() > 0.0));
}

fn config(k: usize, t: usize, seed: u64) -> MppiConfig<f64> {
    let mut c = MppiConfig::new(k, t, vec![0.5, 0.5]);
    c.seed = seed;
    c.gamma = 0.95;
    c
}

fn controller(
    k: usize,
    t: usize,
    seed: u64,
    workers: usize,
    spec: RandomizationSpec,
) -> (Controller<f64, BoundCost<f64>>, World<f64>) {
    let w = point_world((0.0, 0.0));
    let cost = nav_cost_for(&w, (1.0, 0.3));
    (
        Controller::new(config(k, t, seed), &w, cost, spec, Some(workers)).unwrap(),
        w,
    )
}

#[test]
fn control_step_is_deterministic() {
    let spec = RandomizationSpec::new(0.3, 0.3, 0.005, 1);
    let (mut a, w) = controller(32, 8, 5, 2, spec.clone());
    let (mut b, _) = controller(32, 8, 5, 2, spec);
    let s = w.snapshot();
    for _ in 0..3 {
        let (ua, da) = a.control_step(&s).unwrap();
        let (ub, db) = b.control_step(&s).unwrap();
        assert_eq!(ua, ub);
        assert_eq!((da.eta, da.rho, da.beta), (db.eta, db.rho, db.beta));
    }
}

#[test]
fn single_sample_returns_its_first_input() {
    let (mut c, w) = controller(1, 6, 3, 1, RandomizationSpec::default());
    let sampler = HaltonSplineSampler::new(config(1, 6, 3).sampler_config()).unwrap();
    let eps = sampler.sequence(0, 0);
    let (u0, d) = c.control_step(&w.snapshot()).unwrap();
    let want: Vec<f64> = (0..2).map(|j| eps.get(0, j).clamp(-1.0, 1.0)).collect();
    assert_eq!(u0, want);
    assert_eq!(d.eta, 1.0);

    // Second step starts from the shifted sequence.
    let eps1 = sampler.sequence(1, 0);
    let mut v0 = ControlSequence::zeros(6, 2).plus(&eps);
    v0.clamp(&[[-1.0, 1.0], [-1.0, 1.0]]);
    let init = time_shift(&v0).unwrap();
    let (u1, _) = c.control_step(&w.snapshot()).unwrap();
    let want: Vec<f64> = (0..2)
        .map(|j| (init.get(0, j) + eps1.get(0, j)).clamp(-1.0, 1.0))
        .collect();
    assert_eq!(u1, want);
}

#[test]
fn at_goal_output_is_small() {
    let w = point_world((-0.6, 0.6));
    let cost = nav_cost_for(&w, (-0.6, 0.6));
    let mut cfg = MppiConfig::new(256, 8, vec![0.2, 0.2]);
    cfg.seed = 11;
    let mut c = Controller::new(cfg, &w, cost, RandomizationSpec::default(), Some(1)).unwrap();
    let (u0, d) = c.control_step(&w.snapshot()).unwrap();
    let bound = 3.0 * 0.2 / d.ess.sqrt();
    for u in u0 {
        assert!(u.abs() <= bound, "|{u}| > {bound}");
    }
    assert!(d.eta >= 1.0);
}

#[test]
fn result_does_not_depend_on_worker_count() {
    let spec = RandomizationSpec::new(0.3, 0.3, 0.005, 2);
    let mut outputs = Vec::new();
    for workers in [1, 4, 16] {
        let (mut c, w) = controller(48, 8, 9, workers, spec.clone());
        let mut world = w.clone();
        let mut us = Vec::new();
        for _ in 0..4 {
            let (u, _) = c.control_step(&world.snapshot()).unwrap();
            world.advance(&u, 0.04).unwrap();
            us.push(u);
        }
        outputs.push(us);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn beta_adapts_toward_band() {
    let (mut c, w) = controller(64, 8, 1, 1, RandomizationSpec::default());
    let s = w.snapshot();
    let (_, d) = c.control_step(&s).unwrap();
    assert_eq!(d.beta, 1.0);
    let expected = update_beta(1.0, d.eta, 5.0, 10.0);
    assert_eq!(d.beta_next, expected);
    assert_eq!(c.beta(), expected);
}

#[test]
fn config_validation() {
    let mut c = config(8, 8, 0);
    assert!(c.validate().is_ok());
    c.gamma = 0.0;
    assert!(c.validate().is_err());
    c = config(8, 8, 0);
    c.eta_min = 10.0;
    assert!(c.validate().is_err());
    c = config(8, 8, 0);
    c.sigma = vec![0.5, -1.0];
    assert!(c.validate().is_err());
    let w = point_world((0.0, 0.0));
    let cost = nav_cost_for(&w, (1.0, 0.0));
    let three = MppiConfig::new(8, 8, vec![0.5, 0.5, 0.5]);
    assert!(Controller::new(three, &w, cost, RandomizationSpec::default(), Some(1)).is_err());
}

#[test]
fn diagnostics_serialize_as_one_json_line() {
    let (mut c, w) = controller(8, 4, 0, 1, RandomizationSpec::default());
    let (_, d) = c.control_step(&w.snapshot()).unwrap();
    let line = serde_json::to_string(&d).unwrap();
    assert!(!line.contains('\n') && line.contains("\"eta\"") && !line.contains("rollout_costs"));
    let back: IterationDiagnostics = serde_json::from_str(&line).unwrap();
    assert_eq!(back, d);
}

/// Straight-line single-threaded version of one control step, written out
/// independently of the controller.
fn naive_control(
    template: &World<f64>,
    cost: &BoundCost<f64>,
    cfg: &MppiConfig<f64>,
    spec: &RandomizationSpec,
    observed: &WorldState<f64>,
    u_init: &[Vec<f64>],
    beta: f64,
    iteration: u64,
) -> (Vec<Vec<f64>>, f64, f64) {
    let sampler = HaltonSplineSampler::new(cfg.sampler_config()).unwrap();
    let limits = &template.robot().command_limits;
    let (t_len, m) = (cfg.horizon, u_init[0].len());
    let mut vs = Vec::new();
    let mut costs = Vec::new();
    for k in 0..cfg.samples {
        let eps = sampler.sequence(iteration, k);
        let v: Vec<Vec<f64>> = (0..t_len)
            .map(|t| {
                (0..m)
                    .map(|j| {
                        (u_init[t][j] + eps.get(t, j))
                            .max(limits[j][0])
                            .min(limits[j][1])
                    })
                    .collect()
            })
            .collect();
        let mut world = template.clone();
        world
            .set_body_defs(&randomize_world(template.defs(), spec, k, iteration))
            .unwrap();
        world.reset_to(observed).unwrap();
        let mut s = 0.0;
        for (t, u) in v.iter().enumerate() {
            world.step(u, cfg.dt).unwrap();
            s += cfg.gamma.powi(t as i32) * cost.stage_cost(&world);
        }
        vs.push(v);
        costs.push(s);
    }
    let rho = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = costs.iter().map(|s| (-(s - rho) / beta).exp()).collect();
    let eta: f64 = raw.iter().sum();
    let mut u_star = vec![vec![0.0; m]; t_len];
    for (k, v) in vs.iter().enumerate() {
        for t in 0..t_len {
            for j in 0..m {
                u_star[t][j] += raw[k] / eta * v[t][j];
            }
        }
    }
    let new_beta = if eta > cfg.eta_max {
        0.9 * beta
    } else if eta < cfg.eta_min {
        1.2 * beta
    } else {
        beta
    };
    (u_star, eta, new_beta)
}

#[test]
fn matches_naive_reimplementation() {
    let spec = RandomizationSpec::new(0.3, 0.3, 0.005, 4);
    for (k, t) in [(1, 2), (3, 2), (5, 3), (8, 3), (8, 2)] {
        let (mut c, template) = controller(k, t, 17, 4, spec.clone());
        let cost = nav_cost_for(&template, (1.0, 0.3));
        let cfg = config(k, t, 17);
        let mut world = template.clone();
        let mut u_init = vec![vec![0.0; 2]; t];
        let mut beta = 1.0;
        for it in 0..4 {
            let observed = world.snapshot();
            let (u0, d) = c.control_step(&observed).unwrap();
            let (u_star, eta, new_beta) =
                naive_control(&template, &cost, &cfg, &spec, &observed, &u_init, beta, it);
            for j in 0..2 {
                assert!((u0[j] - u_star[0][j]).abs() <= 1e-12, "K={k} T={t} it={it}");
            }
            assert!((d.eta - eta).abs() <= 1e-12 * eta);
            assert!((c.beta() - new_beta).abs() <= 1e-12);
            u_init = (1..t)
                .map(|i| u_star[i].clone())
                .chain(std::iter::once(u_star[t - 1].clone()))
                .collect();
            beta = new_beta;
            world.advance(&u0, 0.04).unwrap();
        }
    }
}

fn cost_vec() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..50.0, 1..=64)
}

fn softmax(costs: &[f64], beta: f64) -> Vec<f64> {
    let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = costs.iter().map(|c| ((min - c) / beta).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

proptest! {
    #[test]
    fn weights_match_softmax(costs in cost_vec(), beta in 0.01f64..20.0, shift in -100.0f64..100.0) {
        let w = importance_weights(&costs, beta).unwrap();
        for (a, b) in w.weights.iter().zip(softmax(&costs, beta)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.weights.iter().all(|x| *x >= 0.0));
        prop_assert!(w.eta >= 1.0);
        let shifted: Vec<f64> = costs.iter().map(|c| c + shift).collect();
        let ws = importance_weights(&shifted, beta).unwrap();
        for (a, b) in w.weights.iter().zip(&ws.weights) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn weights_follow_permutation(costs in cost_vec(), beta in 0.1f64..5.0, rot in 0usize..64) {
        let r = rot % costs.len();
        let mut rotated = costs.clone();
        rotated.rotate_left(r);
        let mut w = importance_weights(&costs, beta).unwrap().weights;
        w.rotate_left(r);
        let wr = importance_weights(&rotated, beta).unwrap().weights;
        for (a, b) in w.iter().zip(&wr) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn eta_grows_with_beta(costs in cost_vec(), b1 in 0.01f64..10.0, b2 in 0.01f64..10.0) {
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        prop_assert!(importance_weights(&costs, lo).unwrap().eta <= importance_weights(&costs, hi).unwrap().eta);
    }

    #[test]
    fn optimal_is_convex_combination(k in 1usize..12, t in 1usize..6, m in 1usize..4,
                                     seed in any::<u64>(), beta in 0.05f64..5.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let seqs: Vec<ControlSequence<f64>> = (0..k)
            .map(|_| ControlSequence::from_rows(&(0..t).map(|_| (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect::<Vec<_>>()).unwrap())
            .collect();
        let costs: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..10.0)).collect();
        let w = importance_weights(&costs, beta).unwrap();
        let u = optimal_sequence(&w.weights, &seqs).unwrap();
        for i in 0..t {
            for j in 0..m {
                let lo = seqs.iter().map(|s| s.get(i, j)).fold(f64::INFINITY, f64::min);
                let hi = seqs.iter().map(|s| s.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(u.get(i, j) >= lo - 1e-12 && u.get(i, j) <= hi + 1e-12);
            }
        }
    }
}
