//! Per-content cost model and age dynamics.
//!
//! A content item of age `h` is served from the small cell; each requesting
//! user rejects it with probability `P(h)` and is redirected to the macro cell
//! at cost `α` per user. Every slot also carries a fixed cost `β`, and
//! refreshing the item over the backhaul costs `ℰ`. A refresh decided in a
//! slot resets the age to zero for the next slot; otherwise the age grows by
//! one until it saturates at `max_age`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Age-to-dissatisfaction map `h ↦ P(h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RedirectionModel {
    /// `1 − e^{−γh}`: stale content is rejected more often. Nondecreasing.
    ExpComplement { gamma: f64 },
    /// `e^{−γh}`: decreasing in age. Kept for comparison runs only; the
    /// structural guarantees of the solver do not apply to it.
    ExpLiteral { gamma: f64 },
    /// Explicit probability per age `0..=max_age`.
    Table { table: Vec<f64> },
}

impl RedirectionModel {
    pub fn probability(&self, age: usize) -> Result<f64> {
        match self {
            RedirectionModel::ExpComplement { gamma } => Ok(-(-gamma * age as f64).exp_m1()),
            RedirectionModel::ExpLiteral { gamma } => Ok((-gamma * age as f64).exp()),
            RedirectionModel::Table { table } => {
                table.get(age).copied().ok_or(Error::MissingTableEntry {
                    age,
                    len: table.len(),
                })
            }
        }
    }

    /// Checks parameter ranges and that every age in `0..=max_age` evaluates
    /// to a probability.
    pub fn validate(&self, max_age: usize) -> Result<()> {
        match self {
            RedirectionModel::ExpComplement { gamma } | RedirectionModel::ExpLiteral { gamma } => {
                if !(gamma.is_finite() && *gamma > 0.0) {
                    return Err(Error::invalid("gamma", format!("must be positive and finite, got {gamma}")));
                }
            }
            RedirectionModel::Table { table } => {
                if table.len() < max_age + 1 {
                    return Err(Error::MissingTableEntry {
                        age: table.len(),
                        len: table.len(),
                    });
                }
                if let Some((age, p)) = table
                    .iter()
                    .enumerate()
                    .find(|(_, p)| !(0.0..=1.0).contains(*p))
                {
                    return Err(Error::invalid(
                        "table",
                        format!("entry for age {age} is {p}, not a probability"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// True when `P(h + 1) ≥ P(h)` for every `h < max_age`.
    pub fn is_monotone(&self, max_age: usize) -> bool {
        match self {
            RedirectionModel::ExpComplement { .. } => true,
            RedirectionModel::ExpLiteral { .. } => max_age == 0,
            RedirectionModel::Table { table } => table
                .iter()
                .take(max_age + 1)
                .collect::<Vec<_>>()
                .windows(2)
                .all(|w| w[1] >= w[0]),
        }
    }
}

impl Default for RedirectionModel {
    fn default() -> Self {
        RedirectionModel::ExpComplement { gamma: 0.4 }
    }
}

/// Cost and popularity parameters of one content item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentParams {
    /// Probability that a request targets this content (`p`).
    pub popularity: f64,
    /// Cost per user redirected to the macro cell (`α`).
    pub redirect_unit_cost: f64,
    /// Fixed per-slot cost (`β`).
    pub base_cost: f64,
    /// Cost of one refresh over the backhaul (`ℰ`).
    pub backhaul_cost: f64,
    /// Age at which the content is obsolete; ages saturate here. Zero is
    /// accepted as the degenerate always-fresh case.
    pub max_age: usize,
    pub redirection: RedirectionModel,
}

impl Default for ContentParams {
    /// Single content receiving every request, `α = 10`, `β = 0`, `ℰ = 500`,
    /// `max_age = 20`, `P(h) = 1 − e^{−0.4h}`.
    fn default() -> Self {
        Self {
            popularity: 1.0,
            redirect_unit_cost: 10.0,
            base_cost: 0.0,
            backhaul_cost: 500.0,
            max_age: 20,
            redirection: RedirectionModel::default(),
        }
    }
}

impl ContentParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.popularity) {
            return Err(Error::invalid("popularity", format!("{} not in [0, 1]", self.popularity)));
        }
        for (field, v) in [
            ("redirect_unit_cost", self.redirect_unit_cost),
            ("base_cost", self.base_cost),
            ("backhaul_cost", self.backhaul_cost),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(field, format!("must be finite and non-negative, got {v}")));
            }
        }
        self.redirection.validate(self.max_age)
    }

    /// Rejects a redirection model that is not nondecreasing in age.
    pub fn require_monotone(&self) -> Result<()> {
        if self.redirection.is_monotone(self.max_age) {
            Ok(())
        } else {
            Err(Error::invalid(
                "redirection",
                "flagged monotone but P(h + 1) < P(h) for some age",
            ))
        }
    }

    pub fn is_monotone(&self) -> bool {
        self.redirection.is_monotone(self.max_age)
    }

    pub fn check_age(&self, age: usize) -> Result<()> {
        if age > self.max_age {
            Err(Error::AgeOutOfRange {
                age,
                max_age: self.max_age,
            })
        } else {
            Ok(())
        }
    }

    pub fn redirection_probability(&self, age: usize) -> Result<f64> {
        self.check_age(age)?;
        self.redirection.probability(age)
    }

    /// Expected per-slot cost `β + α·λ·p·P(h)` of holding the content at each
    /// age `0..=max_age`.
    pub fn holding_costs(&self, arrival_rate: f64) -> Result<Vec<f64>> {
        (0..=self.max_age)
            .map(|h| expected_cost(h, false, self, arrival_rate))
            .collect()
    }
}

/// Age after one slot: zero after a refresh, otherwise one older up to the cap.
pub fn step_age(age: usize, update: bool, max_age: usize) -> Result<usize> {
    if age > max_age {
        return Err(Error::AgeOutOfRange { age, max_age });
    }
    Ok(if update { 0 } else { (age + 1).min(max_age) })
}

/// Realized cost of one slot for one content: `β + α·redirected + d·ℰ`.
pub fn serving_cost(redirected: u64, update: bool, params: &ContentParams) -> f64 {
    let refresh = if update { params.backhaul_cost } else { 0.0 };
    params.base_cost + params.redirect_unit_cost * redirected as f64 + refresh
}

/// Sum of [`serving_cost`] over all contents of a slot.
pub fn total_cost(batch: &RequestBatch, decisions: &[bool], params: &[ContentParams]) -> Result<f64> {
    let n = params.len();
    for (what, actual) in [
        ("decisions", decisions.len()),
        ("batch.redirected", batch.redirected.len()),
    ] {
        if actual != n {
            return Err(Error::LengthMismatch {
                what,
                expected: n,
                actual,
            });
        }
    }
    Ok(batch
        .redirected
        .iter()
        .zip(decisions)
        .zip(params)
        .map(|((&r, &d), p)| serving_cost(r, d, p))
        .sum())
}

/// Expected cost of one slot at age `age`: `β + α·λ·p·P(h) + d·ℰ`.
pub fn expected_cost(age: usize, update: bool, params: &ContentParams, arrival_rate: f64) -> Result<f64> {
    let p = params.redirection_probability(age)?;
    let refresh = if update { params.backhaul_cost } else { 0.0 };
    Ok(params.base_cost + params.redirect_unit_cost * arrival_rate * params.popularity * p + refresh)
}

/// Requests of one slot, split by content and by outcome.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RequestBatch {
    pub total: u64,
    pub per_content: Vec<u64>,
    pub redirected: Vec<u64>,
    pub accepted: Vec<u64>,
}

impl RequestBatch {
    pub fn new(total: u64, per_content: Vec<u64>, redirected: Vec<u64>) -> Result<Self> {
        if per_content.iter().sum::<u64>() != total {
            return Err(Error::invalid("per_content", "does not sum to total"));
        }
        if redirected.len() != per_content.len() {
            return Err(Error::LengthMismatch {
                what: "redirected",
                expected: per_content.len(),
                actual: redirected.len(),
            });
        }
        let accepted = per_content
            .iter()
            .zip(&redirected)
            .map(|(&n, &r)| n.checked_sub(r))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::invalid("redirected", "exceeds per-content arrivals"))?;
        Ok(Self {
            total,
            per_content,
            redirected,
            accepted,
        })
    }

    /// Arrivals only; nobody redirected yet.
    pub fn arrivals(total: u64, per_content: Vec<u64>) -> Result<Self> {
        let zeros = vec![0; per_content.len()];
        Self::new(total, per_content, zeros)
    }
}

/// Ages of all cached contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgeState {
    ages: Vec<usize>,
}

impl AgeState {
    pub fn new(ages: Vec<usize>, params: &[ContentParams]) -> Result<Self> {
        if ages.len() != params.len() {
            return Err(Error::LengthMismatch {
                what: "ages",
                expected: params.len(),
                actual: ages.len(),
            });
        }
        for (&h, p) in ages.iter().zip(params) {
            p.check_age(h)?;
        }
        Ok(Self { ages })
    }

    pub fn fresh(n: usize) -> Self {
        Self { ages: vec![0; n] }
    }

    pub fn ages(&self) -> &[usize] {
        &self.ages
    }

    /// Advances every content by one slot under independent per-content decisions.
    pub fn step(&mut self, decisions: &[bool], params: &[ContentParams]) -> Result<()> {
        if decisions.len() != self.ages.len() || params.len() != self.ages.len() {
            return Err(Error::LengthMismatch {
                what: "decisions",
                expected: self.ages.len(),
                actual: decisions.len().min(params.len()),
            });
        }
        for ((h, &d), p) in self.ages.iter_mut().zip(decisions).zip(params) {
            *h = step_age(*h, d, p.max_age)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn baseline() -> ContentParams {
        ContentParams::default()
    }

    #[test]
    fn age_steps() {
        assert_eq!(step_age(3, true, 10).unwrap(), 0);
        assert_eq!(step_age(3, false, 10).unwrap(), 4);
        assert_eq!(step_age(10, false, 10).unwrap(), 10);
        assert_eq!(
            step_age(11, false, 10),
            Err(Error::AgeOutOfRange { age: 11, max_age: 10 })
        );
    }

    #[test]
    fn serving_cost_is_linear() {
        let p = baseline();
        assert_eq!(serving_cost(7, false, &p), 70.0);
        assert_eq!(serving_cost(0, false, &p), 0.0);
        assert_eq!(serving_cost(7, true, &p), 570.0);
    }

    #[test]
    fn total_cost_cases() {
        let p = baseline();
        let batch = RequestBatch::new(0, vec![0, 0], vec![0, 0]).unwrap();
        assert_eq!(total_cost(&batch, &[false, false], &[p.clone(), p.clone()]).unwrap(), 0.0);

        let batch = RequestBatch::new(5, vec![2, 3], vec![1, 2]).unwrap();
        assert_eq!(total_cost(&batch, &[false, false], &[p.clone(), p.clone()]).unwrap(), 30.0);

        let q = ContentParams { backhaul_cost: 400.0, ..baseline() };
        let batch = RequestBatch::new(0, vec![0, 0], vec![0, 0]).unwrap();
        assert_eq!(total_cost(&batch, &[true, true], &[p.clone(), q]).unwrap(), 900.0);

        assert!(matches!(
            total_cost(&batch, &[true], &[p.clone(), p]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn redirection_probabilities() {
        let comp = RedirectionModel::ExpComplement { gamma: 0.4 };
        let lit = RedirectionModel::ExpLiteral { gamma: 0.4 };
        assert_eq!(comp.probability(0).unwrap(), 0.0);
        assert_eq!(lit.probability(0).unwrap(), 1.0);
        // 1 - e^-8, 40-digit reference value
        assert!((comp.probability(20).unwrap() - 0.999_664_537_372_097_5).abs() < 1e-15);

        let table = RedirectionModel::Table { table: vec![0.0, 0.5] };
        assert_eq!(
            table.probability(2),
            Err(Error::MissingTableEntry { age: 2, len: 2 })
        );
        assert!(matches!(
            baseline().redirection_probability(21),
            Err(Error::AgeOutOfRange { .. })
        ));
    }

    #[test]
    fn expected_cost_cases() {
        let p = baseline();
        assert_eq!(expected_cost(0, false, &p, 100.0).unwrap(), 0.0);
        assert_eq!(expected_cost(0, true, &p, 100.0).unwrap(), 500.0);
        // 1000 (1 - e^-0.4)
        assert!((expected_cost(1, false, &p, 100.0).unwrap() - 329.679_953_964_360_7).abs() < 1e-10);
    }

    #[test]
    fn monotonicity_flags() {
        assert!(RedirectionModel::ExpComplement { gamma: 0.4 }.is_monotone(20));
        assert!(!RedirectionModel::ExpLiteral { gamma: 0.4 }.is_monotone(20));
        let t = RedirectionModel::Table { table: vec![0.0, 0.3, 0.2] };
        assert!(t.is_monotone(1));
        assert!(!t.is_monotone(2));
        let p = ContentParams {
            max_age: 2,
            redirection: t,
            ..baseline()
        };
        assert!(p.validate().is_ok());
        assert!(p.require_monotone().is_err());
    }

    #[test]
    fn validation_names_fields() {
        let bad = ContentParams { redirect_unit_cost: -1.0, ..baseline() };
        assert!(matches!(
            bad.validate(),
            Err(Error::InvalidParameter { field: "redirect_unit_cost", .. })
        ));
        // a single-state content that is always fresh is allowed
        assert!(ContentParams { max_age: 0, ..baseline() }.validate().is_ok());
        let short = ContentParams {
            max_age: 3,
            redirection: RedirectionModel::Table { table: vec![0.0; 3] },
            ..baseline()
        };
        assert!(matches!(short.validate(), Err(Error::MissingTableEntry { .. })));
    }

    #[test]
    fn batch_invariants() {
        assert!(RequestBatch::new(4, vec![1, 2], vec![0, 0]).is_err());
        assert!(RequestBatch::new(3, vec![1, 2], vec![2, 0]).is_err());
        let b = RequestBatch::new(3, vec![1, 2], vec![1, 1]).unwrap();
        assert_eq!(b.accepted, vec![0, 1]);
    }

    #[test]
    fn age_state_steps_independently() {
        let params = vec![ContentParams { max_age: 2, ..baseline() }; 2];
        let mut s = AgeState::new(vec![2, 1], &params).unwrap();
        s.step(&[false, false], &params).unwrap();
        assert_eq!(s.ages(), &[2, 2]);
        s.step(&[true, false], &params).unwrap();
        assert_eq!(s.ages(), &[0, 2]);
        assert!(AgeState::new(vec![3, 0], &params).is_err());
    }
}
