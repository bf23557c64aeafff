//! Monte-Carlo checks of the samplers against their closed forms. Every test
//! runs on a fixed seed and compares at three standard errors.

use refresh_core::bandit::{run_learner, select_action, LearnerConfig, QTable, StepMode};
use refresh_core::checks::cycle_cost_estimate;
use refresh_core::mdp::{optimal_threshold, threshold_cost, Threshold};
use refresh_core::model::{expected_cost, serving_cost, ContentParams, RedirectionModel};
use refresh_core::rng::{replication_seed, stream};
use refresh_core::sim::{
    compute_regret, sample_redirections, sample_requests, sample_slot, simulate_policies, Environment,
    ScheduleEvent, ScheduleField,
};

struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn new() -> Self {
        Self { n: 0.0, mean: 0.0, m2: 0.0 }
    }

    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn std_error(&self) -> f64 {
        (self.m2 / (self.n - 1.0) / self.n).sqrt()
    }

    fn within_3se(&self, target: f64) -> bool {
        (self.mean - target).abs() <= 3.0 * self.std_error()
    }
}

fn baseline() -> ContentParams {
    ContentParams::default()
}

#[test]
fn request_split_matches_popularity() {
    let contents = vec![
        ContentParams { popularity: 0.68, ..baseline() },
        ContentParams { popularity: 0.32, ..baseline() },
    ];
    let env = Environment::new(contents, 100.0, vec![]).unwrap();
    let mut rng = stream(100, 0);
    let mut m = [Moments::new(), Moments::new()];
    for _ in 0..100_000 {
        let b = sample_requests(&env, &mut rng);
        assert_eq!(b.per_content.iter().sum::<u64>(), b.total);
        m[0].push(b.per_content[0] as f64);
        m[1].push(b.per_content[1] as f64);
    }
    assert!(m[0].within_3se(68.0), "{}", m[0].mean);
    assert!(m[1].within_3se(32.0), "{}", m[1].mean);
}

#[test]
fn redirections_are_binomial() {
    let model = RedirectionModel::Table { table: vec![0.33] };
    let mut rng = stream(101, 0);
    let mut m = Moments::new();
    for _ in 0..100_000 {
        let r = sample_redirections(100, 0, &model, &mut rng).unwrap();
        assert!(r <= 100);
        m.push(r as f64);
    }
    assert!(m.within_3se(33.0), "{}", m.mean);
}

#[test]
fn slot_cost_mean_matches_expected_cost() {
    let env = Environment::single(baseline(), 100.0).unwrap();
    let mut rng = stream(102, 0);
    for age in [0, 1, 3, 20] {
        let mut m = Moments::new();
        for _ in 0..100_000 {
            let b = sample_slot(&env, &[age], &mut rng).unwrap();
            assert_eq!(b.redirected[0] + b.accepted[0], b.per_content[0]);
            m.push(serving_cost(b.redirected[0], false, &env.contents[0]));
        }
        let exact = expected_cost(age, false, &env.contents[0], 100.0).unwrap();
        if exact == 0.0 {
            assert_eq!(m.mean, 0.0);
        } else {
            assert!(m.within_3se(exact), "age {age}: {} vs {exact}", m.mean);
        }
    }
}

#[test]
fn cycle_cost_is_unbiased() {
    let p = baseline();
    for h in [0, 1, 2, 7, 20] {
        let (mean, se) = cycle_cost_estimate(h, &p, 100.0, 100_000, 103).unwrap();
        let exact = threshold_cost(h, &p, 100.0).unwrap();
        assert!((mean - exact).abs() <= 3.0 * se + 1e-9, "H={h}: {mean} vs {exact} (se {se})");
    }
    // H = 1 reference value: (500 + 1000(1 - e^-0.4)) / 2
    let (mean, se) = cycle_cost_estimate(1, &p, 100.0, 100_000, 104).unwrap();
    assert!((mean - 414.839_976_982_180_35).abs() <= 3.0 * se);
}

#[test]
fn long_run_threshold_policy_matches_renewal_cost() {
    let env = Environment::single(baseline(), 100.0).unwrap();
    for h in [0, 1, 4, 20] {
        let run = simulate_policies(&env, &[Threshold::At(h)], 100_000, &mut stream(105, h as u64)).unwrap();
        let exact = threshold_cost(h, &env.contents[0], 100.0).unwrap();
        assert!(
            (run.mean_cost - exact).abs() <= 3.0 * run.std_error + 1e-9,
            "H={h}: {} vs {exact} (se {})",
            run.mean_cost,
            run.std_error
        );
    }
    let run = simulate_policies(&env, &[Threshold::Never], 100_000, &mut stream(106, 0)).unwrap();
    let exact = optimal_threshold(&env.contents[0], 100.0).unwrap().never_update_cost;
    assert!((run.mean_cost - exact).abs() <= 3.0 * run.std_error);
}

#[test]
fn uniform_exploration_passes_chi_square() {
    let q = QTable::from_estimates(vec![0.0; 10]);
    let config = LearnerConfig { epsilon: 1.0, ..LearnerConfig::default() };
    let mut rng = stream(107, 0);
    let mut counts = [0u64; 10];
    let draws = 100_000;
    for _ in 0..draws {
        counts[select_action(&q, &config, &mut rng)] += 1;
    }
    let expected = draws as f64 / 10.0;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // chi-square 0.99 quantile, 9 degrees of freedom
    assert!(stat < 21.666, "chi-square {stat}");
}

#[test]
fn greedy_selection_frequency() {
    let estimates: Vec<f64> = (0..21).map(|h| (h as f64 - 4.0).abs() + 1.0).collect();
    let q = QTable::from_estimates(estimates);
    let mut rng = stream(108, 0);
    for epsilon in [0.0, 0.05, 0.1, 0.5] {
        let config = LearnerConfig { epsilon, ..LearnerConfig::default() };
        let n = 100_000;
        let hits = (0..n).filter(|_| select_action(&q, &config, &mut rng) == 4).count() as f64;
        let p = 1.0 - epsilon + epsilon / 21.0;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits / n as f64 - p).abs() <= 3.0 * sigma + 1e-12, "ε={epsilon}");
    }
}

#[test]
fn sample_average_estimates_converge() {
    let params = ContentParams { max_age: 5, ..baseline() };
    let env = Environment::single(params.clone(), 100.0).unwrap();
    let config = LearnerConfig {
        epsilon: 1.0,
        step: StepMode::SampleAverage,
        initial_q: 0.0,
    };
    let t = run_learner(&env, 0, &config, 8_000, &mut stream(109, 0)).unwrap();
    for h in 0..=5 {
        let costs: Vec<f64> = t.records.iter().filter(|r| r.threshold == h).map(|r| r.observed_cost).collect();
        assert!(costs.len() >= 1_000, "H={h} visited {}", costs.len());
        let mut m = Moments::new();
        costs.iter().for_each(|&c| m.push(c));
        let exact = threshold_cost(h, &params, 100.0).unwrap();
        if h == 0 {
            // deterministic: P(0) = 0
            assert_eq!(m.mean, exact);
        } else {
            assert!(m.within_3se(exact), "H={h}: {} vs {exact}", m.mean);
        }
    }
}

fn mean_average_regret(env: &Environment, config: &LearnerConfig, iterations: usize, seeds: u64, base: u64) -> Vec<(f64, f64)> {
    let curves: Vec<Vec<f64>> = (0..seeds)
        .map(|r| {
            let mut rng = stream(replication_seed(base, r), 0);
            compute_regret(&run_learner(env, 0, config, iterations, &mut rng).unwrap()).average
        })
        .collect();
    (0..iterations)
        .map(|i| {
            let mut m = Moments::new();
            curves.iter().for_each(|c| m.push(c[i]));
            (m.mean, m.std_error())
        })
        .collect()
}

#[test]
fn average_regret_is_nonnegative_and_decays() {
    let env = Environment::single(baseline(), 100.0).unwrap();
    for epsilon in [0.05, 0.1] {
        let config = LearnerConfig { epsilon, ..LearnerConfig::default() };
        let curve = mean_average_regret(&env, &config, 1000, 100, 2024);
        for (i, &(mean, se)) in curve.iter().enumerate() {
            assert!(mean >= -3.0 * se, "ε={epsilon} iteration {}: {mean}", i + 1);
        }
        let checkpoints: Vec<f64> = (1..=10).map(|k| curve[100 * k - 1].0).collect();
        assert!(checkpoints.windows(2).all(|w| w[1] < w[0]), "ε={epsilon}: {checkpoints:?}");
    }
}

#[test]
fn regret_tracks_scheduled_optimum() {
    let env = Environment::new(
        vec![baseline()],
        100.0,
        vec![ScheduleEvent {
            iteration: 300,
            content: None,
            field: ScheduleField::BackhaulCost,
            value: 400.0,
        }],
    )
    .unwrap();
    let t = run_learner(&env, 0, &LearnerConfig::default(), 400, &mut stream(110, 0)).unwrap();
    let before = optimal_threshold(&baseline(), 100.0).unwrap().best_cost;
    let after = optimal_threshold(&ContentParams { backhaul_cost: 400.0, ..baseline() }, 100.0)
        .unwrap()
        .best_cost;
    assert!(t.records[..299].iter().all(|r| r.optimal_cost == before));
    assert!(t.records[299..].iter().all(|r| r.optimal_cost == after));
}

#[test]
fn popularity_share_thins_arrivals() {
    // a content with popularity p sees Poisson(λp) requests
    let params = ContentParams { popularity: 0.25, ..baseline() };
    let mut rng = stream(111, 0);
    let mut m = Moments::new();
    let env = Environment::single(params, 100.0).unwrap();
    for _ in 0..50_000 {
        m.push(sample_requests(&env, &mut rng).per_content[0] as f64);
    }
    assert!(m.within_3se(25.0));
}
