//! End-to-end acceptance checks. Runs as a plain binary so the PASS/FAIL
//! table is always printed; exits nonzero if any criterion fails.

use std::path::PathBuf;
use std::time::Instant;

use push_mppi::costs::{BoundCost, CostSpec, CostWeights, GoalSpec, PushBinding, StageCost};
use push_mppi::math::Vec2;
use push_mppi::mppi::{
    importance_weights, optimal_sequence, update_beta, ControlSequence, Controller, MppiConfig,
};
use push_mppi::physics2d::{BodyDef, RobotModel, RobotVariant, Shape, World, WorldState, GRAVITY};
use push_mppi::randomization::{randomize_world, RandomizationSpec};
use push_mppi::sampling::{halton, radical_inverse, BSplineBasis, HaltonSplineSampler};
use push_mppi::scenarios::{
    randomized_nav_suite, run_episode, summary_header, summary_row, write_table, Episode,
    EpisodeOptions, Scenario, TraceLevel,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.json"));
    Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn offline() -> EpisodeOptions {
    EpisodeOptions {
        workers: None,
        trace_level: TraceLevel::Off,
        real_time: false,
    }
}

fn episodes(name: &str, seeds: std::ops::Range<u64>) -> Vec<Episode> {
    let s = scenario(name);
    seeds
        .map(|seed| run_episode(&s, seed, &offline()).unwrap())
        .collect()
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn successes(eps: &[Episode]) -> usize {
    eps.iter().filter(|e| e.metrics.success).count()
}

fn median_ttg(eps: &[Episode]) -> Option<f64> {
    median(eps.iter().filter_map(|e| e.metrics.time_to_goal).collect())
}

fn fmt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.2}"))
}

fn max_penetration(eps: &[Episode]) -> f64 {
    eps.iter()
        .map(|e| e.metrics.max_penetration)
        .fold(0.0, f64::max)
}

fn softmax(costs: &[f64], beta: f64) -> Vec<f64> {
    let min = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = costs.iter().map(|c| (-(c - min) / beta).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Costs on a 2^-20 grid so that adding an integer shift is exact.
fn dyadic_costs(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let k = rng.gen_range(1..=64);
    (0..k)
        .map(|_| rng.gen_range(0..(50u64 << 20)) as f64 / (1u64 << 20) as f64)
        .collect()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut worst_sum = 0.0f64;
    for _ in 0..1000 {
        let costs = dyadic_costs(&mut rng);
        let beta = rng.gen_range(0.01..20.0);
        let w = importance_weights(&costs, beta).unwrap();
        for (a, b) in w.weights.iter().zip(softmax(&costs, beta)) {
            worst = worst.max((a - b).abs());
        }
        worst_sum = worst_sum.max((w.weights.iter().sum::<f64>() - 1.0).abs());
        let shift = rng.gen_range(-1000i32..1000) as f64;
        let shifted: Vec<f64> = costs.iter().map(|c| c + shift).collect();
        if importance_weights(&shifted, beta).unwrap().weights != w.weights {
            return outcome(false, "uniform shift changed the weights");
        }
    }
    outcome(
        worst <= 1e-12 && worst_sum <= 1e-12,
        format!("max |w - softmax| = {worst:.1e}, max |sum - 1| = {worst_sum:.1e}"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let costs = dyadic_costs(&mut rng);
        let mut prev = 0.0;
        for i in 1..=200 {
            let beta = 0.01 * 1.05f64.powi(i);
            let eta = importance_weights(&costs, beta).unwrap().eta;
            if eta < prev {
                return outcome(
                    false,
                    format!("eta fell from {prev} to {eta} at beta {beta}"),
                );
            }
            prev = eta;
        }
    }
    let table = [
        (2.0, 11.0, 0.9 * 2.0),
        (2.0, 4.0, 1.2 * 2.0),
        (2.0, 7.0, 2.0),
        (2.0, 10.0, 2.0),
        (2.0, 5.0, 2.0),
        (0.3, 1.0e6, 0.9 * 0.3),
        (0.3, 1.0, 1.2 * 0.3),
    ];
    let ok = table
        .iter()
        .all(|&(b, eta, want)| update_beta(b, eta, 5.0, 10.0) == want);
    outcome(
        ok,
        "eta non-decreasing on 100 cost vectors; branch table exact",
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let (k, t, m) = (
            rng.gen_range(1..=64),
            rng.gen_range(1..=12),
            rng.gen_range(1..=3),
        );
        let seqs: Vec<ControlSequence<f64>> = (0..k)
            .map(|_| {
                let rows: Vec<Vec<f64>> = (0..t)
                    .map(|_| (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect())
                    .collect();
                ControlSequence::from_rows(&rows).unwrap()
            })
            .collect();
        let costs: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..30.0)).collect();
        let w = importance_weights(&costs, rng.gen_range(0.05..5.0)).unwrap();
        let u = optimal_sequence(&w.weights, &seqs).unwrap();
        for i in 0..t {
            for j in 0..m {
                let lo = seqs
                    .iter()
                    .map(|s| s.get(i, j))
                    .fold(f64::INFINITY, f64::min);
                let hi = seqs
                    .iter()
                    .map(|s| s.get(i, j))
                    .fold(f64::NEG_INFINITY, f64::max);
                worst = worst.max(lo - u.get(i, j)).max(u.get(i, j) - hi);
            }
        }
    }
    outcome(
        worst <= 1e-12,
        format!("largest excursion outside the sample hull {worst:.1e}"),
    )
}

fn criterion_4() -> Outcome {
    let s = scenario("omni_box_poseA");
    let table = |workers: usize| {
        let opts = EpisodeOptions {
            workers: Some(workers),
            ..offline()
        };
        let rows: Vec<Vec<String>> = (0..2)
            .map(|seed| {
                let e = run_episode(&s, seed, &opts).unwrap();
                summary_row(&e.header, &e.metrics)
            })
            .collect();
        let mut buf = Vec::new();
        write_table(&mut buf, &summary_header(), &rows).unwrap();
        buf
    };
    let (a, b) = (table(1), table(8));
    outcome(
        a == b,
        format!("omni_box_poseA seeds 0-1, {} summary bytes", a.len()),
    )
}

fn point_robot() -> RobotModel<f64> {
    RobotModel::new(
        RobotVariant::HolonomicPoint,
        BodyDef::new("robot", Shape::Disc { radius: 0.2 }).with_mass(10.0),
        vec![[-1.0, 1.0], [-1.0, 1.0]],
    )
}

fn criterion_5(pushing: &[&[Episode]]) -> Outcome {
    // Sliding box decelerates at mu g.
    let crate_ = BodyDef::new(
        "box",
        Shape::Box {
            half_extents: [0.1, 0.1],
        },
    )
    .at(3.0, 0.0)
    .with_mass(2.0)
    .with_friction(0.5);
    let mut w = World::new(vec![crate_], point_robot(), true).unwrap();
    let mut s = w.snapshot();
    s.body_mut("box").unwrap().linear_velocity = Vec2::new(1.0, 0.0);
    w.reset_to(&s).unwrap();
    // Stops after about 0.2 s; measure while still sliding.
    for _ in 0..4 {
        w.step(&[0.0, 0.0], 0.04).unwrap();
    }
    let decel = (1.0 - w.linear_velocity(1).x) / 0.16;
    let rel = (decel - 0.5 * GRAVITY).abs() / (0.5 * GRAVITY);

    // Kinetic energy without input.
    let bodies = vec![
        BodyDef::new(
            "box",
            Shape::Box {
                half_extents: [0.1, 0.1],
            },
        )
        .at(0.3, 0.05)
        .rotated(0.4),
        BodyDef::new("ball", Shape::Disc { radius: 0.08 }).at(-0.5, 0.3),
        BodyDef::new(
            "wall",
            Shape::Box {
                half_extents: [0.1, 1.0],
            },
        )
        .at(0.8, 0.0)
        .fixed(),
    ];
    let mut w = World::new(bodies.clone(), point_robot(), true).unwrap();
    let mut s = w.snapshot();
    s.bodies[0].linear_velocity = Vec2::new(0.6, 0.2);
    s.bodies[1].linear_velocity = Vec2::new(1.5, -0.2);
    s.bodies[1].angular_velocity = 3.0;
    s.bodies[2].linear_velocity = Vec2::new(0.5, -0.7);
    w.reset_to(&s).unwrap();
    let mut energy_ok = true;
    let mut e = w.kinetic_energy();
    for _ in 0..100 {
        w.step(&[0.0, 0.0], 0.04).unwrap();
        let e1 = w.kinetic_energy();
        energy_ok &= e1 <= e * (1.0 + 1e-12) + 1e-15;
        e = e1;
    }

    // Snapshot replay while pushing.
    let mut w = World::new(bodies.clone(), point_robot(), true).unwrap();
    let command = |k: usize| {
        [
            0.7 * ((k as f64) * 0.21).cos(),
            0.3 + 0.2 * ((k as f64) * 0.13).sin(),
        ]
    };
    let mut mid: Option<WorldState<f64>> = None;
    let mut reports = Vec::new();
    for k in 0..120 {
        if k == 60 {
            mid = Some(w.snapshot());
        }
        reports.push(w.step(&command(k), 0.04).unwrap());
    }
    let mut replay = World::new(bodies, point_robot(), true).unwrap();
    replay.reset_to(&mid.unwrap()).unwrap();
    let replay_ok = (60..120).all(|k| replay.step(&command(k), 0.04).unwrap() == reports[k]);

    let pen = pushing
        .iter()
        .map(|e| max_penetration(e))
        .fold(0.0, f64::max);
    let n: usize = pushing.iter().map(|e| e.len()).sum();
    outcome(
        rel <= 0.02 && energy_ok && replay_ok && pen <= 1e-3,
        format!(
            "decel {decel:.4} vs mu*g {:.4} ({:.2}%), energy monotone {energy_ok}, replay bitwise {replay_ok}, max penetration {:.3} mm over {n} pushing episodes",
            0.5 * GRAVITY,
            rel * 100.0,
            pen * 1e3
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut worst = 0.0f64;
    for base in [2u64, 3, 5, 7] {
        for n in 1..=1000u64 {
            // Digit reversal as an exact fraction.
            let (mut num, mut den, mut i) = (0u64, 1u64, n);
            while i > 0 {
                num = num * base + i % base;
                den *= base;
                i /= base;
            }
            let exact = num as f64 / den as f64;
            worst = worst
                .max((radical_inverse(n, base) - exact).abs())
                .max((halton(n, base).unwrap() - exact).abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut hull = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let n = rng.gen_range(4..=12);
        let t = rng.gen_range(1..=40);
        let knots: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let out = BSplineBasis::<f64>::new(3, n, t).unwrap().evaluate(&knots);
        let lo = knots.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = knots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for v in out {
            hull = hull.max(lo - v).max(v - hi);
        }
    }
    outcome(
        worst <= 1e-15 && hull <= 1e-12,
        format!(
            "max Halton error {worst:.1e}; largest hull excursion {hull:.1e} over 1000 knot sets"
        ),
    )
}

/// Push toy: omnidirectional disc, a box and a wall.
fn toy_push_world() -> (World<f64>, BoundCost<f64>) {
    let robot = RobotModel::new(
        RobotVariant::OmniBase,
        BodyDef::new("robot", Shape::Disc { radius: 0.2 })
            .with_mass(20.0)
            .at(0.0, 0.0),
        vec![[-0.5, 0.5], [-0.5, 0.5], [-1.0, 1.0]],
    );
    let bodies = vec![
        BodyDef::new(
            "box",
            Shape::Box {
                half_extents: [0.1, 0.1],
            },
        )
        .at(0.05, 0.32)
        .with_ground_friction(0.3),
        BodyDef::new(
            "wall",
            Shape::Box {
                half_extents: [0.05, 1.0],
            },
        )
        .at(0.6, 0.5)
        .fixed(),
    ];
    let world = World::new(bodies, robot, true).unwrap();
    let weights = CostWeights {
        w_t: 0.2,
        w_op: 2.0,
        w_or: 3.0,
        w_a: 0.6,
        w_c: 10.0,
    };
    let binding = PushBinding {
        robot: "robot".into(),
        robot_offset: Vec2::new(0.0, 0.0),
        object: "box".into(),
        obstacles: vec!["wall".into()],
    };
    let goal = GoalSpec::new(Vec2::new(0.2, 1.0), 0.3, 0.05, 0.17);
    let cost = CostSpec::push(weights, binding)
        .bind(&world, &goal)
        .unwrap();
    (world, cost)
}

fn criterion_7() -> Outcome {
    let spec = RandomizationSpec::new(0.3, 0.3, 0.005, 77);
    let mut worst = 0.0f64;
    for (k, t) in [(1, 1), (2, 3), (4, 2), (6, 3), (8, 3), (8, 1)] {
        let (template, cost) = toy_push_world();
        let mut cfg = MppiConfig::new(k, t, vec![0.3, 0.3, 0.6]);
        cfg.seed = 9;
        cfg.gamma = 0.9;
        let mut controller =
            Controller::new(cfg.clone(), &template, cost.clone(), spec.clone(), Some(3)).unwrap();
        let sampler = HaltonSplineSampler::new(cfg.sampler_config()).unwrap();
        let limits = template.robot().command_limits.clone();
        let mut truth = template.clone();
        let mut u_init = vec![vec![0.0; 3]; t];
        let mut beta = cfg.beta_init;
        for it in 0..5u64 {
            let observed = truth.snapshot();
            let (u0, _) = controller.control_step(&observed).unwrap();
            // Single-threaded reference, written out longhand.
            let mut vs = Vec::new();
            let mut costs = Vec::new();
            for kk in 0..k {
                let eps = sampler.sequence(it, kk);
                let v: Vec<Vec<f64>> = (0..t)
                    .map(|i| {
                        (0..3)
                            .map(|j| {
                                (u_init[i][j] + eps.get(i, j)).clamp(limits[j][0], limits[j][1])
                            })
                            .collect()
                    })
                    .collect();
                let mut w = template.clone();
                w.set_body_defs(&randomize_world(template.defs(), &spec, kk, it))
                    .unwrap();
                w.reset_to(&observed).unwrap();
                let mut total = 0.0;
                for (i, u) in v.iter().enumerate() {
                    w.step(u, cfg.dt).unwrap();
                    total += cfg.gamma.powi(i as i32) * cost.stage_cost(&w);
                }
                vs.push(v);
                costs.push(total);
            }
            let rho = costs.iter().cloned().fold(f64::INFINITY, f64::min);
            let raw: Vec<f64> = costs.iter().map(|s| (-(s - rho) / beta).exp()).collect();
            let eta: f64 = raw.iter().sum();
            let mut u_star = vec![vec![0.0; 3]; t];
            for (kk, v) in vs.iter().enumerate() {
                for i in 0..t {
                    for j in 0..3 {
                        u_star[i][j] += raw[kk] / eta * v[i][j];
                    }
                }
            }
            for j in 0..3 {
                worst = worst.max((u0[j] - u_star[0][j]).abs());
            }
            beta = if eta > cfg.eta_max {
                0.9 * beta
            } else if eta < cfg.eta_min {
                1.2 * beta
            } else {
                beta
            };
            worst = worst.max((controller.beta() - beta).abs());
            u_init = (1..t)
                .map(|i| u_star[i].clone())
                .chain(std::iter::once(u_star[t - 1].clone()))
                .collect();
            truth.advance(&u0, cfg.dt).unwrap();
        }
    }
    outcome(
        worst <= 1e-12,
        format!(
            "max deviation from the naive loop {worst:.1e} (K <= 8, T <= 3, 5 iterations each)"
        ),
    )
}

fn push_pair(a: &[Episode], b: &[Episode], paper: (f64, f64), min_success: usize) -> Outcome {
    let (ma, mb) = (median_ttg(a), median_ttg(b));
    let ok = successes(a) >= min_success
        && successes(b) >= min_success
        && ma.is_some_and(|m| m <= 3.0 * paper.0)
        && mb.is_some_and(|m| m <= 3.0 * paper.1);
    outcome(
        ok,
        format!(
            "Pose A {}/{} median {} s (paper {:.2} s); Pose B {}/{} median {} s (paper {:.2} s)",
            successes(a),
            a.len(),
            fmt(ma),
            paper.0,
            successes(b),
            b.len(),
            fmt(mb),
            paper.1
        ),
    )
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "importance-sampling oracle", criterion_1()),
        (2, "beta monotonicity and update table", criterion_2()),
        (3, "convex combination", criterion_3()),
        (4, "determinism across worker counts", criterion_4()),
    ];

    let box_a = episodes("omni_box_poseA", 0..5);
    let box_b = episodes("omni_box_poseB", 0..5);
    let sphere_a = episodes("omni_sphere_poseA", 0..5);
    let sphere_b = episodes("omni_sphere_poseB", 0..5);
    let diff = episodes("diff_drive_box", 0..5);
    let final_cost_runs = episodes("push_pose1_final_cost", 0..10);
    let disturbed = episodes("omni_box_disturbance", 0..5);
    let (nav, nav_eps) = randomized_nav_suite(&scenario("nav_point"), 100, 0, &offline()).unwrap();

    results.push((
        5,
        "physics oracles",
        criterion_5(&[
            &box_a,
            &box_b,
            &sphere_a,
            &sphere_b,
            &diff,
            &final_cost_runs,
            &disturbed,
        ]),
    ));
    results.push((6, "Halton closed form and spline hull", criterion_6()));
    results.push((7, "brute-force equivalence", criterion_7()));
    results.push((
        8,
        "omnidirectional box push",
        push_pair(&box_a, &box_b, (9.66, 12.84), 4),
    ));
    results.push((
        9,
        "sphere push",
        push_pair(&sphere_a, &sphere_b, (8.76, 7.45), 4),
    ));

    let dm = median_ttg(&diff);
    results.push((
        10,
        "differential-drive push",
        outcome(
            successes(&diff) >= 4
                && diff
                    .iter()
                    .all(|e| e.metrics.time_to_goal.is_none_or(|t| t <= 90.0)),
            format!(
                "{}/{} within 90 s, median {} s (paper 18.31 s)",
                successes(&diff),
                diff.len(),
                fmt(dm)
            ),
        ),
    ));

    let penetrating = nav_eps
        .iter()
        .filter(|e| e.metrics.min_clearance.is_some_and(|c| c < -1e-3))
        .count();
    results.push((
        11,
        "navigation suite",
        outcome(
            nav.success_rate >= 0.9 && penetrating == 0,
            format!(
                "{}/{} succeeded, {penetrating} penetrating, mean time to goal {} s (paper 2.7 s), mean solver time {} ms (paper 55 ms, GPU)",
                nav.successes,
                nav.runs,
                fmt(nav.mean_time_to_goal),
                fmt(nav.mean_solver_time.map(|t| t * 1e3))
            ),
        ),
    ));

    let step_times: Vec<f64> = box_a
        .iter()
        .chain(&box_b)
        .flat_map(|e| {
            e.records
                .iter()
                .filter_map(|r| r.diagnostics.as_ref().map(|d| d.solver_time))
        })
        .collect();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let solver = median(step_times.clone());
    results.push((
        12,
        "solver time",
        outcome(
            solver.is_some_and(|m| m <= 0.040),
            format!(
                "median control_step {} ms over {} steps (K=300, T=8) on {cores} core(s); paper 55 ms is a GPU point-robot figure",
                fmt(solver.map(|m| m * 1e3)),
                step_times.len()
            ),
        ),
    ));

    let fc = median(
        final_cost_runs
            .iter()
            .map(|e| e.metrics.final_cost)
            .collect(),
    );
    results.push((
        13,
        "final-cost metric",
        outcome(
            fc.is_some_and(|m| m <= 0.057),
            format!(
                "median final cost {:.4} over {} runs (gate 0.057, paper 0.029)",
                fc.unwrap_or(f64::NAN),
                final_cost_runs.len()
            ),
        ),
    ));

    let applied = disturbed
        .iter()
        .all(|e| e.records.iter().any(|r| r.disturbed));
    results.push((
        14,
        "disturbance robustness",
        outcome(
            successes(&disturbed) >= 4 && applied,
            format!(
                "{}/{} recovered, shove applied in every run: {applied}, median time to goal {} s",
                successes(&disturbed),
                disturbed.len(),
                fmt(median_ttg(&disturbed))
            ),
        ),
    ));

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (id, name, o) in &results {
        println!(
            "criterion {id:>2} {:<4} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.0} s",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
