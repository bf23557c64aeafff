//! Exact per-content average-cost refresh problem.
//!
//! States are ages `0..=max_age`; in every state the controller either holds
//! (age grows, saturating at `max_age`) or refreshes (pays `ℰ`, age resets).
//! [`solve_rvi`] finds the optimal average cost and differential values by
//! damped relative value iteration anchored at age 0. [`optimal_threshold`]
//! reaches the same optimum by enumerating renewal cycles of every refresh
//! threshold plus the never-refresh policy, which serves as an independent
//! cross-check of the solver.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ContentParams;

/// Relative value iteration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the span of successive value differences falls below this.
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Weight of the fresh backup in each sweep. Values below one make the
    /// induced chain aperiodic so that deterministic refresh cycles converge.
    pub damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_sweeps: 1_000_000,
            damping: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueSolution {
    /// Differential value per age, normalized so `values[0] == 0`.
    pub values: Vec<f64>,
    pub average_cost: f64,
    /// Optimal refresh decision per age.
    pub decision_rule: Vec<bool>,
    pub iterations_used: usize,
    pub converged: bool,
}

/// Outcome of one damped backup sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Backup {
    pub values: Vec<f64>,
    pub span: f64,
    pub cost_estimate: f64,
}

/// A refresh threshold, or the policy that never refreshes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Threshold {
    At(usize),
    Never,
}

impl Threshold {
    /// Integer code used in CSV output; `-1` stands for [`Threshold::Never`].
    pub fn code(self) -> i64 {
        match self {
            Threshold::At(h) => h as i64,
            Threshold::Never => -1,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::At(h) => write!(f, "{h}"),
            Threshold::Never => f.write_str("NEVER"),
        }
    }
}

/// Renewal-cycle cost of every refresh threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    /// Long-run average cost of refreshing at age `H`, indexed by `H`.
    pub per_threshold_cost: Vec<f64>,
    /// Long-run average cost of never refreshing.
    pub never_update_cost: f64,
    pub best_threshold: Threshold,
    pub best_cost: f64,
}

impl ThresholdReport {
    pub fn cost_of(&self, threshold: Threshold) -> Option<f64> {
        match threshold {
            Threshold::At(h) => self.per_threshold_cost.get(h).copied(),
            Threshold::Never => Some(self.never_update_cost),
        }
    }

    /// Gap between the best and the runner-up policy (infinite if there is
    /// only one candidate).
    pub fn margin(&self) -> f64 {
        let mut costs: Vec<f64> = self
            .per_threshold_cost
            .iter()
            .copied()
            .chain(std::iter::once(self.never_update_cost))
            .collect();
        costs.sort_by(f64::total_cmp);
        costs.get(1).map_or(f64::INFINITY, |second| second - costs[0])
    }

    /// Best threshold among finite thresholds only, ties to the smaller one.
    pub fn best_finite(&self) -> (usize, f64) {
        argmin_first(&self.per_threshold_cost)
    }
}

fn argmin_first(costs: &[f64]) -> (usize, f64) {
    costs
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (h, c)| if c < best.1 { (h, c) } else { best })
}

/// Raw Bellman backup over precomputed holding costs. Returns the backed-up
/// values and the per-age decision that attains them (refresh wins ties).
fn raw_backup(values: &[f64], holding: &[f64], backhaul: f64) -> (Vec<f64>, Vec<bool>) {
    let last = values.len() - 1;
    let refresh_tail = backhaul + values[0];
    holding
        .iter()
        .enumerate()
        .map(|(h, &c)| {
            let refresh = c + refresh_tail;
            let hold = c + values[(h + 1).min(last)];
            if refresh <= hold {
                (refresh, true)
            } else {
                (hold, false)
            }
        })
        .unzip()
}

fn damped_sweep(values: &[f64], holding: &[f64], backhaul: f64, damping: f64) -> Backup {
    let (raw, _) = raw_backup(values, holding, backhaul);
    let mixed: Vec<f64> = values
        .iter()
        .zip(&raw)
        .map(|(v, r)| (1.0 - damping) * v + damping * r)
        .collect();
    let anchor = mixed[0];
    let new: Vec<f64> = mixed.iter().map(|m| m - anchor).collect();
    let (lo, hi) = new
        .iter()
        .zip(values)
        .map(|(n, v)| n - v)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    Backup {
        values: new,
        span: hi - lo,
        cost_estimate: raw[0],
    }
}

fn check_damping(damping: f64) -> Result<()> {
    if damping > 0.0 && damping <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("damping", format!("must lie in (0, 1], got {damping}")))
    }
}

/// One damped relative-value-iteration sweep, renormalized so the result is
/// zero at age 0.
pub fn bellman_backup(
    values: &[f64],
    params: &ContentParams,
    arrival_rate: f64,
    damping: f64,
) -> Result<Backup> {
    check_damping(damping)?;
    if values.len() != params.max_age + 1 {
        return Err(Error::LengthMismatch {
            what: "values",
            expected: params.max_age + 1,
            actual: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("values"));
    }
    if !arrival_rate.is_finite() {
        return Err(Error::NonFinite("arrival_rate"));
    }
    let holding = params.holding_costs(arrival_rate)?;
    Ok(damped_sweep(values, &holding, params.backhaul_cost, damping))
}

/// Solves the per-content average-cost problem by relative value iteration.
///
/// Non-convergence is not an error: the partial solution comes back with
/// `converged == false`.
pub fn solve_rvi(params: &ContentParams, arrival_rate: f64, options: &SolverOptions) -> Result<ValueSolution> {
    check_damping(options.damping)?;
    if options.tolerance.is_nan() || options.tolerance <= 0.0 {
        return Err(Error::invalid("tolerance", "must be positive"));
    }
    if options.max_sweeps < 1 {
        return Err(Error::invalid("max_sweeps", "must be at least 1"));
    }
    if !(arrival_rate.is_finite() && arrival_rate >= 0.0) {
        return Err(Error::invalid("arrival_rate", "must be finite and non-negative"));
    }
    let holding = params.holding_costs(arrival_rate)?;
    let backhaul = params.backhaul_cost;

    let mut values = vec![0.0; params.max_age + 1];
    let mut cost = 0.0;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < options.max_sweeps {
        let step = damped_sweep(&values, &holding, backhaul, options.damping);
        sweeps += 1;
        values = step.values;
        cost = step.cost_estimate;
        if step.span < options.tolerance {
            converged = true;
            break;
        }
    }

    let (raw, decision_rule) = raw_backup(&values, &holding, backhaul);
    if converged {
        cost = raw[0];
    }
    Ok(ValueSolution {
        values,
        average_cost: cost,
        decision_rule,
        iterations_used: sweeps,
        converged,
    })
}

/// True when the differential values are nondecreasing in age, up to `tolerance`.
pub fn check_monotone(solution: &ValueSolution, tolerance: f64) -> bool {
    solution.values.windows(2).all(|w| w[1] >= w[0] - tolerance)
}

/// Reads a decision rule as a threshold: the first age that refreshes, after
/// which every age must refresh. An all-hold rule is [`Threshold::Never`].
pub fn extract_threshold(decision_rule: &[bool]) -> Result<Threshold> {
    let Some(first) = decision_rule.iter().position(|&d| d) else {
        return Ok(Threshold::Never);
    };
    match decision_rule[first..].iter().position(|&d| !d) {
        Some(offset) => Err(Error::NonThresholdPolicy {
            update_at: first,
            hold_at: first + offset,
        }),
        None => Ok(Threshold::At(first)),
    }
}

/// Long-run average cost of refreshing whenever the age reaches `threshold`:
/// one cycle holds at ages `0..=threshold` and pays one refresh.
pub fn threshold_cost(threshold: usize, params: &ContentParams, arrival_rate: f64) -> Result<f64> {
    if threshold > params.max_age {
        return Err(Error::ThresholdOutOfRange {
            threshold,
            max_age: params.max_age,
        });
    }
    let holding = params.holding_costs(arrival_rate)?;
    Ok((holding[..=threshold].iter().sum::<f64>() + params.backhaul_cost) / (threshold + 1) as f64)
}

/// Enumerates every threshold and the never-refresh policy. Ties go to the
/// smaller threshold; never-refresh must be strictly better to win.
pub fn optimal_threshold(params: &ContentParams, arrival_rate: f64) -> Result<ThresholdReport> {
    let holding = params.holding_costs(arrival_rate)?;
    let mut running = 0.0;
    let per_threshold_cost: Vec<f64> = holding
        .iter()
        .enumerate()
        .map(|(h, c)| {
            running += c;
            (running + params.backhaul_cost) / (h + 1) as f64
        })
        .collect();
    let never_update_cost = holding[params.max_age];
    let (h, c) = argmin_first(&per_threshold_cost);
    let (best_threshold, best_cost) = if never_update_cost < c {
        (Threshold::Never, never_update_cost)
    } else {
        (Threshold::At(h), c)
    };
    Ok(ThresholdReport {
        per_threshold_cost,
        never_update_cost,
        best_threshold,
        best_cost,
    })
}
