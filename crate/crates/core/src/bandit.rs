//! ε-greedy selection of refresh thresholds.
//!
//! Each arm is a threshold `H ∈ 0..=max_age`. Pulling an arm runs one full
//! refresh cycle and observes its average cost; the estimate of that arm is
//! moved toward the sample. Costs are minimized, so the greedy arm is the
//! smallest estimate. Never-refresh is not an arm.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::optimal_threshold;
use crate::sim::{simulate_cycle, Environment, StepRecord, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepMode {
    /// Exponential recency weighting with fixed step `ζ`.
    Constant(f64),
    /// Step `1/k` on the k-th visit, i.e. the running mean.
    SampleAverage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub epsilon: f64,
    pub step: StepMode,
    pub initial_q: f64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            step: StepMode::Constant(0.1),
            initial_q: 0.0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::invalid("epsilon", format!("{} not in [0, 1]", self.epsilon)));
        }
        if let StepMode::Constant(zeta) = self.step {
            if !(zeta > 0.0 && zeta <= 1.0) {
                return Err(Error::invalid("zeta", format!("{zeta} not in (0, 1]")));
            }
        }
        if !self.initial_q.is_finite() {
            return Err(Error::NonFinite("initial_q"));
        }
        Ok(())
    }
}

/// Per-threshold cost estimates and visit counts.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    estimates: Vec<f64>,
    counts: Vec<u64>,
}

impl QTable {
    /// Table for thresholds `0..=max_age`, every estimate at `initial_q`.
    pub fn new(max_age: usize, initial_q: f64) -> Self {
        Self {
            estimates: vec![initial_q; max_age + 1],
            counts: vec![0; max_age + 1],
        }
    }

    pub fn from_estimates(estimates: Vec<f64>) -> Self {
        let counts = vec![0; estimates.len()];
        Self { estimates, counts }
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn arms(&self) -> usize {
        self.estimates.len()
    }

    /// Smallest estimate, ties to the smaller threshold.
    pub fn greedy(&self) -> usize {
        self.estimates
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (h, &q)| if q < best.1 { (h, q) } else { best })
            .0
    }

    /// Moves the estimate of `threshold` toward `cost_sample` and counts the visit.
    pub fn update(&mut self, threshold: usize, cost_sample: f64, config: &LearnerConfig) -> Result<()> {
        if !cost_sample.is_finite() {
            return Err(Error::NonFinite("cost_sample"));
        }
        if threshold >= self.arms() {
            return Err(Error::ThresholdOutOfRange {
                threshold,
                max_age: self.arms() - 1,
            });
        }
        self.counts[threshold] += 1;
        let step = match config.step {
            StepMode::Constant(zeta) => zeta,
            StepMode::SampleAverage => 1.0 / self.counts[threshold] as f64,
        };
        let q = &mut self.estimates[threshold];
        *q = (1.0 - step) * *q + step * cost_sample;
        Ok(())
    }
}

/// Greedy arm with probability `1 − ε`, otherwise a uniform arm. The explore
/// coin and the explored arm are two separate draws; the explored arm may be
/// the greedy one.
pub fn select_action<R: Rng + ?Sized>(q: &QTable, config: &LearnerConfig, rng: &mut R) -> usize {
    if rng.random::<f64>() < config.epsilon {
        rng.random_range(0..q.arms())
    } else {
        q.greedy()
    }
}

/// Runs ε-greedy threshold learning for content `content` of `env` over
/// `iterations` refresh cycles, recording the optimal average cost of the
/// environment in force at each iteration.
pub fn run_learner<R: Rng + ?Sized>(
    env: &Environment,
    content: usize,
    config: &LearnerConfig,
    iterations: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    config.validate()?;
    if iterations < 1 {
        return Err(Error::invalid("iterations", "must be at least 1"));
    }
    let count = env.contents.len();
    if content >= count {
        return Err(Error::BadScheduleTarget { content, count });
    }

    let mut view = env.apply_schedule(1)?;
    let mut optimum = optimal_threshold(&view.contents[content], view.arrival_rate)?.best_cost;
    let mut q = QTable::new(view.contents[content].max_age, config.initial_q);
    let mut records = Vec::with_capacity(iterations);
    for iteration in 1..=iterations {
        if iteration > 1 && env.changes_at(iteration) {
            view = env.apply_schedule(iteration)?;
            optimum = optimal_threshold(&view.contents[content], view.arrival_rate)?.best_cost;
        }
        let params = &view.contents[content];
        let threshold = select_action(&q, config, rng);
        let observed_cost = simulate_cycle(threshold, params, view.arrival_rate, rng)?;
        q.update(threshold, observed_cost, config)?;
        records.push(StepRecord {
            iteration,
            threshold,
            observed_cost,
            optimal_cost: optimum,
        });
    }
    Ok(Trajectory { records })
}
