use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use push_mppi::scenarios::{
    generate_nav_scene, metrics_from_trace, probe_solver_time, read_table, read_trace, run_episode,
    summary_header, summary_row, timing_row, write_table, write_trace, Episode, EpisodeMetrics,
    EpisodeOptions, NavSuiteSummary, Scenario, SolverTimeStats, TraceLevel, BUILD_ID,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::Common;

pub enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) | CliError::Runtime(e) => {
                if f.alternate() {
                    write!(f, "{e:#}")
                } else {
                    write!(f, "{e}")
                }
            }
        }
    }
}

fn config<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Config(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Runtime(e.into())
}

const THREADS_ENV: &str = "PUSH_MPPI_THREADS";
const SUMMARY: &str = "summary.csv";
const TIMING: &str = "timing.csv";
const TRACES: &str = "traces";

fn worker_count(flag: Option<usize>) -> Result<usize, CliError> {
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| {
            config(anyhow!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))
        })?,
        Err(_) => {
            flag.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        }
    };
    if n == 0 {
        return Err(config(anyhow!("worker count must be at least 1")));
    }
    Ok(n)
}

fn trace_file_name(scenario: &str, seed: u64) -> String {
    let base: String = scenario
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{base}_seed{seed}.ndjson")
}

fn load(path: &Path) -> Result<Scenario, CliError> {
    if !path.exists() {
        return Err(config(anyhow!(
            "scenario file not found: {}",
            path.display()
        )));
    }
    Scenario::load(path).map_err(|e| config(anyhow!("{}: {e}", path.display())))
}

fn prepare_out(out: &Path, trace: bool) -> Result<(), CliError> {
    let dir = if trace {
        out.join(TRACES)
    } else {
        out.to_path_buf()
    };
    fs::create_dir_all(&dir).map_err(|e| {
        config(anyhow!(
            "cannot create output directory {}: {e}",
            dir.display()
        ))
    })?;
    let probe = out.join(".write-test");
    fs::write(&probe, b"").map_err(|e| {
        config(anyhow!(
            "output directory {} is not writable: {e}",
            out.display()
        ))
    })?;
    let _ = fs::remove_file(probe);
    Ok(())
}

fn instantiate(template: &Scenario, seed: u64) -> Result<Scenario, CliError> {
    if template.nav_generator.is_some() {
        generate_nav_scene(template, seed).map_err(runtime)
    } else {
        Ok(template.clone())
    }
}

fn fmt_opt(x: Option<f64>, scale: f64, digits: usize) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{:.*}", digits, v * scale))
}

fn describe(e: &Episode) -> String {
    let m = &e.metrics;
    format!(
        "{} seed={} success={} time_to_goal={} path_length={:.3} min_clearance={} final_cost={:.4} max_penetration_mm={:.3} solver_median_ms={}",
        e.header.scenario,
        e.header.seed,
        m.success,
        fmt_opt(m.time_to_goal, 1.0, 2),
        m.path_length,
        fmt_opt(m.min_clearance, 1.0, 4),
        m.final_cost,
        m.max_penetration * 1e3,
        fmt_opt(m.solver_time.map(|s| s.median), 1e3, 2),
    )
}

/// Runs every seed of one scenario into `out` and returns the episodes in seed order.
fn run_into(template: &Scenario, common: &Common, out: &Path) -> Result<Vec<Episode>, CliError> {
    let workers = worker_count(common.workers)?;
    let trace = common.trace_level != TraceLevel::Off;
    prepare_out(out, trace)?;
    let seeds: Vec<u64> = (0..common.n_runs).map(|i| common.seed + i).collect();
    if common.real_time {
        let first = instantiate(template, common.seed)?;
        let median = probe_solver_time(&first, common.seed, 5, Some(workers)).map_err(runtime)?;
        if median > first.dt() {
            return Err(config(anyhow!(
                "real-time mode refused: median solver time {:.1} ms exceeds the {:.1} ms control period",
                median * 1e3,
                first.dt() * 1e3
            )));
        }
    }

    let one = |seed: u64, rollout_workers: usize| -> Result<Episode, CliError> {
        let scenario = instantiate(template, seed)?;
        let opts = EpisodeOptions {
            workers: Some(rollout_workers),
            trace_level: common.trace_level,
            real_time: common.real_time,
        };
        let episode = run_episode(&scenario, seed, &opts).map_err(runtime)?;
        if trace {
            let path = out.join(TRACES).join(trace_file_name(&template.name, seed));
            let file = File::create(&path)
                .with_context(|| format!("writing {}", path.display()))
                .map_err(runtime)?;
            write_trace(BufWriter::new(file), &episode.header, &episode.records)
                .with_context(|| format!("writing {}", path.display()))
                .map_err(runtime)?;
        }
        println!("{}", describe(&episode));
        Ok(episode)
    };

    // Several episodes share the workers one thread each; a single episode
    // spreads its rollouts over all of them. Results are identical either way.
    let episodes: Vec<Episode> = if seeds.len() > 1 && workers > 1 && !common.real_time {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(runtime)?;
        pool.install(|| {
            seeds
                .par_iter()
                .map(|&s| one(s, 1))
                .collect::<Result<_, _>>()
        })?
    } else {
        seeds
            .iter()
            .map(|&s| one(s, workers))
            .collect::<Result<_, _>>()?
    };

    let rows: Vec<Vec<String>> = episodes
        .iter()
        .map(|e| summary_row(&e.header, &e.metrics))
        .collect();
    let timing: Vec<Vec<String>> = episodes
        .iter()
        .map(|e| timing_row(&e.header, &e.metrics))
        .collect();
    let write = |name: &str, header: &[&str], rows: &[Vec<String>]| -> Result<(), CliError> {
        let path = out.join(name);
        let file = File::create(&path)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(runtime)?;
        write_table(BufWriter::new(file), header, rows).map_err(runtime)
    };
    write(SUMMARY, &summary_header(), &rows)?;
    write(
        TIMING,
        &[
            "scenario",
            "seed",
            "solver_mean",
            "solver_median",
            "solver_max",
        ],
        &timing,
    )?;
    Ok(episodes)
}

pub fn run(scenario: &Path, common: &Common) -> Result<(), CliError> {
    let template = load(scenario)?;
    let episodes = run_into(&template, common, &common.out)?;
    let ok = episodes.iter().filter(|e| e.metrics.success).count();
    println!(
        "{}: {ok}/{} episodes succeeded; summary in {}",
        template.name,
        episodes.len(),
        common.out.join(SUMMARY).display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ScenarioReport {
    name: String,
    runs: usize,
    successes: usize,
    success_rate: f64,
    time_to_goal_mean: Option<f64>,
    time_to_goal_median: Option<f64>,
    final_cost_median: Option<f64>,
    min_clearance: Option<f64>,
    max_penetration: f64,
    /// Aggregated over every control step of every episode (s).
    solver_time: Option<SolverTimeStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nav_suite: Option<NavSuiteSummary>,
}

#[derive(Serialize)]
struct BenchReport {
    build: &'static str,
    seed: u64,
    n_runs: u64,
    workers: usize,
    scenarios: Vec<ScenarioReport>,
}

fn median(v: &[f64]) -> Option<f64> {
    SolverTimeStats::from_samples(v).map(|s| s.median)
}

fn report_for(template: &Scenario, episodes: &[Episode]) -> ScenarioReport {
    let metrics: Vec<EpisodeMetrics> = episodes.iter().map(|e| e.metrics.clone()).collect();
    let ttg: Vec<f64> = metrics.iter().filter_map(|m| m.time_to_goal).collect();
    let costs: Vec<f64> = metrics.iter().map(|m| m.final_cost).collect();
    let times: Vec<f64> = episodes
        .iter()
        .flat_map(|e| {
            e.records
                .iter()
                .filter_map(|r| r.diagnostics.as_ref().map(|d| d.solver_time))
        })
        .collect();
    ScenarioReport {
        name: template.name.clone(),
        runs: metrics.len(),
        successes: ttg.len(),
        success_rate: ttg.len() as f64 / metrics.len().max(1) as f64,
        time_to_goal_mean: (!ttg.is_empty()).then(|| ttg.iter().sum::<f64>() / ttg.len() as f64),
        time_to_goal_median: median(&ttg),
        final_cost_median: median(&costs),
        min_clearance: metrics
            .iter()
            .filter_map(|m| m.min_clearance)
            .reduce(f64::min),
        max_penetration: metrics
            .iter()
            .map(|m| m.max_penetration)
            .fold(0.0, f64::max),
        solver_time: SolverTimeStats::from_samples(&times),
        nav_suite: template
            .nav_generator
            .is_some()
            .then(|| NavSuiteSummary::from_metrics(&metrics)),
    }
}

pub fn bench(scenarios: &[PathBuf], common: &Common) -> Result<(), CliError> {
    let templates: Vec<Scenario> = scenarios
        .iter()
        .map(|p| load(p))
        .collect::<Result<_, _>>()?;
    prepare_out(&common.out, false)?;
    let mut reports = Vec::new();
    for t in &templates {
        let dir = common
            .out
            .join(trace_file_name(&t.name, 0).trim_end_matches("_seed0.ndjson"));
        let episodes = run_into(t, common, &dir)?;
        let r = report_for(t, &episodes);
        println!(
            "{}: success {}/{} median time_to_goal {} s, median solver {} ms",
            r.name,
            r.successes,
            r.runs,
            fmt_opt(r.time_to_goal_median, 1.0, 2),
            fmt_opt(r.solver_time.map(|s| s.median), 1e3, 2)
        );
        reports.push(r);
    }
    let report = BenchReport {
        build: BUILD_ID,
        seed: common.seed,
        n_runs: common.n_runs,
        workers: worker_count(common.workers)?,
        scenarios: reports,
    };
    let path = common.out.join("report.json");
    let text = serde_json::to_string_pretty(&report).map_err(runtime)?;
    fs::write(&path, text + "\n")
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)?;
    println!("report written to {}", path.display());
    Ok(())
}

fn summary_dirs(out: &Path) -> Result<Vec<PathBuf>, CliError> {
    if out.join(SUMMARY).is_file() {
        return Ok(vec![out.to_path_buf()]);
    }
    let entries =
        fs::read_dir(out).map_err(|e| config(anyhow!("cannot read {}: {e}", out.display())))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(SUMMARY).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(config(anyhow!(
            "no {SUMMARY} found under {}",
            out.display()
        )));
    }
    Ok(dirs)
}

pub fn replay(out: &Path) -> Result<(), CliError> {
    let mut checked = 0;
    for dir in summary_dirs(out)? {
        let summary = File::open(dir.join(SUMMARY)).map_err(config)?;
        let rows = read_table(summary).map_err(config)?;
        let traces = dir.join(TRACES);
        let mut by_seed = std::collections::BTreeMap::new();
        for entry in fs::read_dir(&traces)
            .map_err(|e| config(anyhow!("cannot read {}: {e}", traces.display())))?
        {
            let path = entry.map_err(config)?.path();
            let file = File::open(&path).map_err(config)?;
            let (header, records) = read_trace(BufReader::new(file))
                .map_err(|e| runtime(anyhow!("{}: {e}", path.display())))?;
            by_seed.insert(
                header.seed,
                summary_row(&header, &metrics_from_trace(&header, &records)),
            );
        }
        for row in &rows {
            let seed: u64 = row
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| runtime(anyhow!("bad summary row {row:?}")))?;
            let recomputed = by_seed.get(&seed).ok_or_else(|| {
                runtime(anyhow!("no trace for seed {seed} in {}", traces.display()))
            })?;
            if recomputed != row {
                return Err(runtime(anyhow!(
                    "metrics recomputed from the trace differ from the summary for seed {seed}:\n  summary: {row:?}\n  trace:   {recomputed:?}"
                )));
            }
            checked += 1;
        }
    }
    println!("replay: {checked} episode(s) match their summary rows");
    Ok(())
}
