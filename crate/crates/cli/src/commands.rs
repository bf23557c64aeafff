//! Subcommand implementations. Each command computes its result as data and
//! writes it to a caller-supplied sink; `main` owns files and exit codes.

use std::io::Write;

use rayon::prelude::*;
use refresh_core::bandit::run_learner;
use refresh_core::checks::{self, PropertyOutcome, Verdict};
use refresh_core::mdp::{extract_threshold, optimal_threshold, solve_rvi, Threshold, ThresholdReport, ValueSolution};
use refresh_core::rng::stream;
use refresh_core::sim::{compute_regret, Trajectory};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const TRAJECTORY_HEADER: &str =
    "seed,iteration,content,epsilon,threshold,observed_cost,optimal_cost,instant_regret,avg_regret";
pub const SWEEP_HEADER: &str = "epsilon,iteration,mean_avg_regret,stderr,n_seeds";
pub const ENUMERATION_HEADER: &str = "threshold,average_cost,is_optimal";

fn pool(config: &ExperimentConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.run.threads)
        .build()
        .map_err(|e| CliError::Io(std::io::Error::other(e)))
}

fn emitted(iteration: usize, last: usize, every: usize) -> bool {
    iteration.is_multiple_of(every) || iteration == last
}

// ---------------------------------------------------------------- solve

#[derive(Debug, Clone)]
pub struct ContentSolve {
    pub content: usize,
    pub popularity: f64,
    pub solution: ValueSolution,
    pub enumeration: ThresholdReport,
    pub solver_threshold: refresh_core::Result<Threshold>,
    /// `None` when the redirection model is not monotone and the check does
    /// not apply.
    pub monotone: Option<bool>,
}

impl ContentSolve {
    pub fn cross_check_passes(&self) -> bool {
        let c = &self.enumeration;
        let cost_ok = (self.solution.average_cost - c.best_cost).abs()
            <= checks::COST_REL_TOL * c.best_cost.abs().max(1.0);
        let threshold_ok =
            c.margin() <= checks::THRESHOLD_MARGIN || self.solver_threshold.as_ref().ok() == Some(&c.best_threshold);
        cost_ok && threshold_ok
    }
}

pub fn solve(config: &ExperimentConfig) -> Result<Vec<ContentSolve>> {
    let env = config.environment()?;
    let options = config.solver_options();
    env.contents
        .iter()
        .enumerate()
        .map(|(content, params)| {
            let solution = solve_rvi(params, env.arrival_rate, &options)?;
            let enumeration = optimal_threshold(params, env.arrival_rate)?;
            let scale = solution.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let monotone = params
                .is_monotone()
                .then(|| refresh_core::mdp::check_monotone(&solution, 1e-9 * scale));
            Ok(ContentSolve {
                content,
                popularity: params.popularity,
                solver_threshold: extract_threshold(&solution.decision_rule),
                solution,
                enumeration,
                monotone,
            })
        })
        .collect()
}

pub fn write_solve_report(results: &[ContentSolve], out: &mut dyn Write) -> std::io::Result<()> {
    for r in results {
        let s = &r.solution;
        writeln!(out, "content {} (popularity {})", r.content, r.popularity)?;
        writeln!(
            out,
            "  converged: {} after {} sweeps",
            s.converged, s.iterations_used
        )?;
        writeln!(out, "  average_cost: {}", s.average_cost)?;
        match &r.solver_threshold {
            Ok(t) => writeln!(out, "  threshold: {t}")?,
            Err(e) => writeln!(out, "  threshold: invalid ({e})")?,
        }
        match r.monotone {
            Some(m) => writeln!(out, "  monotone: {m}")?,
            None => writeln!(out, "  monotone: n/a (redirection model decreases with age)")?,
        }
        writeln!(
            out,
            "  enumeration: threshold {} cost {} ({})",
            r.enumeration.best_threshold,
            r.enumeration.best_cost,
            if r.cross_check_passes() { "agrees" } else { "DISAGREES" }
        )?;
        let values: Vec<String> = s.values.iter().map(f64::to_string).collect();
        writeln!(out, "  values: {}", values.join(","))?;
    }
    Ok(())
}

/// Writes the report, then fails on non-convergence or a failed cross-check.
pub fn cmd_solve(config: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let results = solve(config)?;
    write_solve_report(&results, out)?;
    if let Some(r) = results.iter().find(|r| !r.solution.converged) {
        return Err(CliError::NonConvergence {
            content: r.content,
            sweeps: r.solution.iterations_used,
        });
    }
    let failed = results
        .iter()
        .filter(|r| !r.cross_check_passes() || r.monotone == Some(false))
        .count();
    if failed > 0 {
        return Err(CliError::PropertyFailure { failed });
    }
    Ok(())
}

// ------------------------------------------------------------ enumerate

pub fn enumerate(config: &ExperimentConfig) -> Result<ThresholdReport> {
    let env = config.environment()?;
    Ok(optimal_threshold(&env.contents[config.run.content], env.arrival_rate)?)
}

pub fn write_enumeration_csv(report: &ThresholdReport, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "{ENUMERATION_HEADER}")?;
    let rows = report
        .per_threshold_cost
        .iter()
        .enumerate()
        .map(|(h, &c)| (Threshold::At(h), c))
        .chain(std::iter::once((Threshold::Never, report.never_update_cost)));
    for (t, cost) in rows {
        writeln!(out, "{},{},{}", t.code(), cost, t == report.best_threshold)?;
    }
    Ok(())
}

pub fn cmd_enumerate(config: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    write_enumeration_csv(&enumerate(config)?, out)?;
    Ok(())
}

// ---------------------------------------------------------------- learn

#[derive(Debug, Clone, PartialEq)]
pub struct LearnRun {
    pub seed: u64,
    pub content: usize,
    pub trajectory: Trajectory,
}

fn single_epsilon(config: &ExperimentConfig) -> Result<f64> {
    match config.learner.epsilon.as_slice() {
        [e] => Ok(*e),
        many => Err(CliError::config(
            "learner.epsilon",
            format!("`learn` takes exactly one value, got {}", many.len()),
        )),
    }
}

/// One learner per (seed, content), run in parallel and returned in
/// seed-major order.
pub fn learn(config: &ExperimentConfig) -> Result<Vec<LearnRun>> {
    let epsilon = single_epsilon(config)?;
    let env = config.environment()?;
    let learner = config.learner_config(epsilon);
    let jobs: Vec<(u64, usize)> = config
        .seeds()
        .into_iter()
        .flat_map(|s| (0..env.contents.len()).map(move |c| (s, c)))
        .collect();
    pool(config)?.install(|| {
        jobs.par_iter()
            .map(|&(seed, content)| {
                let mut rng = stream(seed, content as u64);
                run_learner(&env, content, &learner, config.learner.iterations, &mut rng)
                    .map(|trajectory| LearnRun {
                        seed,
                        content,
                        trajectory,
                    })
                    .map_err(|source| CliError::Run { seed, content, source })
            })
            .collect()
    })
}

pub fn write_trajectory_csv(runs: &[LearnRun], epsilon: f64, every: usize, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for run in runs {
        let regret = compute_regret(&run.trajectory);
        let last = run.trajectory.records.len();
        for (k, r) in run.trajectory.records.iter().enumerate() {
            if !emitted(r.iteration, last, every) {
                continue;
            }
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                run.seed,
                r.iteration,
                run.content,
                epsilon,
                r.threshold,
                r.observed_cost,
                r.optimal_cost,
                regret.instant[k],
                regret.average[k]
            )?;
        }
    }
    Ok(())
}

pub fn cmd_learn(config: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let epsilon = single_epsilon(config)?;
    let runs = learn(config)?;
    write_trajectory_csv(&runs, epsilon, config.run.emit_every, out)?;
    Ok(())
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub iteration: usize,
    pub mean_avg_regret: f64,
    /// Standard error of the mean across seeds; NaN with a single seed.
    pub stderr: f64,
    pub n_seeds: usize,
}

/// Average-regret curve per ε, averaged over all seeds, for content
/// `run.content`. Every ε sees the same seeds.
pub fn sweep(config: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    let env = config.environment()?;
    let content = config.run.content;
    let seeds = config.seeds();
    let iterations = config.learner.iterations;
    let jobs: Vec<(usize, u64)> = (0..config.learner.epsilon.len())
        .flat_map(|e| seeds.iter().map(move |&s| (e, s)))
        .collect();
    let curves: Vec<Vec<f64>> = pool(config)?.install(|| {
        jobs.par_iter()
            .map(|&(e, seed)| {
                let learner = config.learner_config(config.learner.epsilon[e]);
                let mut rng = stream(seed, content as u64);
                run_learner(&env, content, &learner, iterations, &mut rng)
                    .map(|t| compute_regret(&t).average)
                    .map_err(|source| CliError::Run { seed, content, source })
            })
            .collect::<Result<_>>()
    })?;

    let n = seeds.len();
    let mut points = Vec::with_capacity(config.learner.epsilon.len() * iterations);
    for (e, &epsilon) in config.learner.epsilon.iter().enumerate() {
        let group = &curves[e * n..(e + 1) * n];
        for i in 0..iterations {
            let mean = group.iter().map(|c| c[i]).sum::<f64>() / n as f64;
            let stderr = if n > 1 {
                let var = group.iter().map(|c| (c[i] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                f64::NAN
            };
            points.push(SweepPoint {
                epsilon,
                iteration: i + 1,
                mean_avg_regret: mean,
                stderr,
                n_seeds: n,
            });
        }
    }
    Ok(points)
}

pub fn write_sweep_csv(points: &[SweepPoint], every: usize, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    let last = points.iter().map(|p| p.iteration).max().unwrap_or(0);
    for p in points.iter().filter(|p| emitted(p.iteration, last, every)) {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.epsilon, p.iteration, p.mean_avg_regret, p.stderr, p.n_seeds
        )?;
    }
    Ok(())
}

pub fn cmd_sweep(config: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let points = sweep(config)?;
    write_sweep_csv(&points, config.run.emit_every, out)?;
    Ok(())
}

// ------------------------------------------------------------- validate

fn prefixed(prefix: &str, outcomes: Vec<PropertyOutcome>) -> Vec<PropertyOutcome> {
    outcomes
        .into_iter()
        .map(|o| PropertyOutcome {
            name: format!("{prefix}: {}", o.name),
            ..o
        })
        .collect()
}

/// Runs the property suites. Random instances are derived from
/// `run.base_seed`; each failure reports the seed that replays it.
pub fn validate(config: &ExperimentConfig) -> Result<Vec<PropertyOutcome>> {
    let env = config.environment()?;
    let options = config.solver_options();
    let seed = config.run.base_seed;
    if config.validate.thresholds.iter().any(|&h| h > config.environment.t_max) {
        return Err(CliError::config("validate.thresholds", "must not exceed t_max"));
    }
    let mut outcomes = Vec::new();

    let random = checks::random_instances(seed, config.validate.instances, &options)?;
    outcomes.extend(prefixed(
        &format!("{} random monotone instances", random.len()),
        checks::structural_outcomes(&random),
    ));

    let configured = env
        .contents
        .iter()
        .enumerate()
        .map(|(n, p)| checks::check_instance(n as u64, p, env.arrival_rate, &options))
        .collect::<refresh_core::Result<Vec<_>>>()?;
    outcomes.extend(prefixed("configured contents", checks::structural_outcomes(&configured)));

    let content = &env.contents[config.run.content];
    outcomes.push(checks::unbiased_sampling_outcome(
        content,
        env.arrival_rate,
        &config.validate.thresholds,
        config.validate.samples,
        seed,
    )?);

    let learner = config.learner_config(config.learner.epsilon[0]);
    let replay = |s| run_learner(&env, config.run.content, &learner, 200, &mut stream(s, 0));
    let same = replay(seed)? == replay(seed)?;
    outcomes.push(PropertyOutcome {
        name: "learner replays identically from its seed".into(),
        verdict: if same {
            Verdict::Pass
        } else {
            Verdict::Fail("two runs diverged".into())
        },
        seed: (!same).then_some(seed),
    });
    Ok(outcomes)
}

pub fn cmd_validate(config: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let outcomes = validate(config)?;
    writeln!(out, "validation seed {}", config.run.base_seed)?;
    for o in &outcomes {
        writeln!(out, "{o}")?;
    }
    let failed = outcomes.iter().filter(|o| o.failed()).count();
    if failed > 0 {
        return Err(CliError::PropertyFailure { failed });
    }
    Ok(())
}
