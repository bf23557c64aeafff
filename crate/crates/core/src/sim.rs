//! Stochastic request environment.
//!
//! Requests arrive as a Poisson stream per slot and split multinomially over
//! contents by popularity. A request for content `n` at age `h` is redirected
//! with probability `P_n(h)`. A learner observes the average cost of a full
//! refresh cycle; parameter changes are scheduled on the learning-iteration
//! clock.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Threshold;
use crate::model::{serving_cost, ContentParams, RedirectionModel, RequestBatch};

/// Parameter a schedule event overwrites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleField {
    BackhaulCost,
    RedirectUnitCost,
    BaseCost,
    Popularity,
    ArrivalRate,
}

/// Sets `field` to `value` from learning iteration `iteration` on. `content`
/// of `None` targets every content (ignored for the arrival rate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEvent {
    pub iteration: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content: Option<usize>,
    pub field: ScheduleField,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub contents: Vec<ContentParams>,
    /// Mean number of requests per slot.
    pub arrival_rate: f64,
    schedule: Vec<ScheduleEvent>,
}

impl Environment {
    pub fn new(contents: Vec<ContentParams>, arrival_rate: f64, mut schedule: Vec<ScheduleEvent>) -> Result<Self> {
        if contents.is_empty() {
            return Err(Error::invalid("contents", "at least one content is required"));
        }
        for c in &contents {
            c.validate()?;
        }
        let total: f64 = contents.iter().map(|c| c.popularity).sum();
        if total > 1.0 + 1e-12 {
            return Err(Error::invalid("popularity", format!("popularities sum to {total} > 1")));
        }
        if !(arrival_rate.is_finite() && arrival_rate >= 0.0) {
            return Err(Error::invalid("arrival_rate", "must be finite and non-negative"));
        }
        schedule.sort_by_key(|e| e.iteration);
        let env = Self {
            contents,
            arrival_rate,
            schedule,
        };
        // surface malformed events now rather than mid-run
        let last = env.schedule.last().map_or(0, |e| e.iteration);
        env.apply_schedule(last)?;
        Ok(env)
    }

    pub fn single(params: ContentParams, arrival_rate: f64) -> Result<Self> {
        Self::new(vec![params], arrival_rate, Vec::new())
    }

    pub fn schedule(&self) -> &[ScheduleEvent] {
        &self.schedule
    }

    /// True if some event takes effect exactly at `iteration`.
    pub fn changes_at(&self, iteration: usize) -> bool {
        self.schedule.iter().any(|e| e.iteration == iteration)
    }

    /// The environment with every event at or before `iteration` applied in
    /// order, later events overriding earlier ones.
    pub fn apply_schedule(&self, iteration: usize) -> Result<Environment> {
        let mut view = self.clone();
        for event in self.schedule.iter().take_while(|e| e.iteration <= iteration) {
            view.apply_event(event)?;
        }
        Ok(view)
    }

    fn apply_event(&mut self, event: &ScheduleEvent) -> Result<()> {
        let count = self.contents.len();
        if event.field == ScheduleField::ArrivalRate {
            if !(event.value.is_finite() && event.value >= 0.0) {
                return Err(Error::invalid("arrival_rate", "scheduled value must be finite and non-negative"));
            }
            self.arrival_rate = event.value;
            return Ok(());
        }
        let targets = match event.content {
            Some(n) if n >= count => return Err(Error::BadScheduleTarget { content: n, count }),
            Some(n) => n..n + 1,
            None => 0..count,
        };
        for c in &mut self.contents[targets] {
            let slot = match event.field {
                ScheduleField::BackhaulCost => &mut c.backhaul_cost,
                ScheduleField::RedirectUnitCost => &mut c.redirect_unit_cost,
                ScheduleField::BaseCost => &mut c.base_cost,
                ScheduleField::Popularity => &mut c.popularity,
                ScheduleField::ArrivalRate => unreachable!(),
            };
            *slot = event.value;
            c.validate()?;
        }
        Ok(())
    }
}

/// Zipf popularity over `n` ranked contents: `p_k ∝ k^{−exponent}`.
pub fn zipf_popularity(n: usize, exponent: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("contents", "zipf popularity needs at least one content"));
    }
    if !(exponent.is_finite() && exponent > 0.0) {
        return Err(Error::invalid("zipf_exponent", "must be positive and finite"));
    }
    let weights: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-exponent)).collect();
    let norm: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / norm).collect())
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // rand_distr's Poisson yields integral f64 values
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

fn binomial<R: Rng + ?Sized>(trials: u64, p: f64, rng: &mut R) -> u64 {
    if trials == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return trials;
    }
    Binomial::new(trials, p).expect("probability in (0, 1)").sample(rng)
}

/// Draws one slot of arrivals and splits them over contents.
///
/// When popularities sum to less than one the remainder belongs to contents
/// outside the environment; those requests are dropped, and `total` counts
/// only the requests that hit a modeled content.
pub fn sample_requests<R: Rng + ?Sized>(env: &Environment, rng: &mut R) -> RequestBatch {
    let arrivals = poisson(env.arrival_rate, rng);
    let mut remaining = arrivals;
    let mut mass = 1.0;
    let per_content: Vec<u64> = env
        .contents
        .iter()
        .map(|c| {
            let k = if mass <= 0.0 {
                0
            } else {
                binomial(remaining, (c.popularity / mass).min(1.0), rng)
            };
            remaining -= k;
            mass -= c.popularity;
            k
        })
        .collect();
    let total = per_content.iter().sum();
    RequestBatch::arrivals(total, per_content).expect("split sums to total")
}

/// Number of `count` requesters that reject content of age `age`.
pub fn sample_redirections<R: Rng + ?Sized>(
    count: u64,
    age: usize,
    model: &RedirectionModel,
    rng: &mut R,
) -> Result<u64> {
    Ok(binomial(count, model.probability(age)?, rng))
}

/// Full batch for one slot given the current ages.
pub fn sample_slot<R: Rng + ?Sized>(env: &Environment, ages: &[usize], rng: &mut R) -> Result<RequestBatch> {
    let arrivals = sample_requests(env, rng);
    let redirected = arrivals
        .per_content
        .iter()
        .zip(ages)
        .zip(&env.contents)
        .map(|((&k, &h), c)| {
            c.check_age(h)?;
            sample_redirections(k, h, &c.redirection, rng)
        })
        .collect::<Result<Vec<_>>>()?;
    RequestBatch::new(arrivals.total, arrivals.per_content, redirected)
}

/// Average cost observed over one refresh cycle at threshold `threshold`:
/// slots at ages `0..=threshold` each incur the holding cost of their
/// redirected requests, and the cycle ends with one refresh.
pub fn simulate_cycle<R: Rng + ?Sized>(
    threshold: usize,
    params: &ContentParams,
    arrival_rate: f64,
    rng: &mut R,
) -> Result<f64> {
    if threshold > params.max_age {
        return Err(Error::ThresholdOutOfRange {
            threshold,
            max_age: params.max_age,
        });
    }
    let mut total = params.backhaul_cost;
    for age in 0..=threshold {
        let arrivals = poisson(arrival_rate, rng);
        let share = binomial(arrivals, params.popularity, rng);
        let redirected = sample_redirections(share, age, &params.redirection, rng)?;
        total += serving_cost(redirected, false, params);
    }
    Ok(total / (threshold + 1) as f64)
}

/// Long-run cost of running fixed per-content policies on a shared request
/// stream.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRun {
    pub slots: usize,
    pub mean_cost: f64,
    /// Batch-means standard error of `mean_cost`.
    pub std_error: f64,
}

/// Simulates `slots` slots with content `n` following `policies[n]`.
///
/// Threshold contents start freshly refreshed; never-refresh contents start
/// at their cap, where they stay. The standard error comes from 100
/// equal-length batches.
pub fn simulate_policies<R: Rng + ?Sized>(
    env: &Environment,
    policies: &[Threshold],
    slots: usize,
    rng: &mut R,
) -> Result<PolicyRun> {
    if policies.len() != env.contents.len() {
        return Err(Error::LengthMismatch {
            what: "policies",
            expected: env.contents.len(),
            actual: policies.len(),
        });
    }
    const BATCHES: usize = 100;
    if slots < BATCHES {
        return Err(Error::invalid("slots", format!("need at least {BATCHES}")));
    }
    let mut ages: Vec<usize> = policies
        .iter()
        .zip(&env.contents)
        .map(|(p, c)| match p {
            Threshold::At(h) if *h > c.max_age => Err(Error::ThresholdOutOfRange {
                threshold: *h,
                max_age: c.max_age,
            }),
            Threshold::At(_) => Ok(0),
            Threshold::Never => Ok(c.max_age),
        })
        .collect::<Result<_>>()?;

    let batch_len = slots / BATCHES;
    let used = batch_len * BATCHES;
    let mut batch_means = Vec::with_capacity(BATCHES);
    let mut acc = 0.0;
    for t in 0..used {
        let decisions: Vec<bool> = policies
            .iter()
            .zip(&ages)
            .map(|(p, &h)| matches!(p, Threshold::At(th) if h >= *th))
            .collect();
        let batch = sample_slot(env, &ages, rng)?;
        acc += crate::model::total_cost(&batch, &decisions, &env.contents)?;
        for ((h, &d), c) in ages.iter_mut().zip(&decisions).zip(&env.contents) {
            *h = crate::model::step_age(*h, d, c.max_age)?;
        }
        if (t + 1) % batch_len == 0 {
            batch_means.push(acc / batch_len as f64);
            acc = 0.0;
        }
    }
    let mean = batch_means.iter().sum::<f64>() / BATCHES as f64;
    let var = batch_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    Ok(PolicyRun {
        slots: used,
        mean_cost: mean,
        std_error: (var / BATCHES as f64).sqrt(),
    })
}

/// One learning iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// 1-based iteration index.
    pub iteration: usize,
    pub threshold: usize,
    pub observed_cost: f64,
    /// Optimal average cost of the environment in force at this iteration.
    pub optimal_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub records: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegretSeries {
    pub instant: Vec<f64>,
    /// Running mean of `instant`.
    pub average: Vec<f64>,
}

pub fn compute_regret(trajectory: &Trajectory) -> RegretSeries {
    let instant: Vec<f64> = trajectory
        .records
        .iter()
        .map(|r| r.observed_cost - r.optimal_cost)
        .collect();
    let mut sum = 0.0;
    let average = instant
        .iter()
        .enumerate()
        .map(|(i, r)| {
            sum += r;
            sum / (i + 1) as f64
        })
        .collect();
    RegretSeries { instant, average }
}
