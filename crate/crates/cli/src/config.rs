//! Experiment configuration.
//!
//! A TOML document of optional tables. Every key has a default, and
//! unknown keys are rejected.
//!
//! ```toml
//! [environment]
//! contents = 1              # number of contents N
//! zipf_exponent = 1.1       # popularity p_k ∝ k^-s unless `popularity` is given
//! # popularity = [0.7, 0.3]
//! arrival_rate = 100.0      # Poisson requests per slot
//! alpha = 10.0              # cost per redirected user
//! beta = 0.0                # fixed cost per slot
//! backhaul_cost = 500.0     # cost per refresh
//! t_max = 20                # age cap
//!
//! [environment.redirection]
//! variant = "exp-complement"  # or "exp-literal", "table"
//! gamma = 0.4
//! # table = [0.0, 0.3, ...]   # one entry per age 0..=t_max
//! # monotone = true           # reject models that decrease with age
//!
//! [[environment.schedule]]
//! iteration = 300
//! field = "backhaul_cost"     # backhaul_cost | redirect_unit_cost | base_cost | popularity | arrival_rate
//! value = 400.0
//! # content = 0               # omit to target every content
//!
//! [learner]
//! epsilon = [0.0, 0.05, 0.1]
//! step_mode = "constant"      # or "sample-average"
//! zeta = 0.1
//! initial_q = 0.0
//! iterations = 1000
//!
//! [run]
//! base_seed = 0
//! seed_count = 100            # replications use seeds base_seed + r
//! # seeds = [1, 2, 3]         # explicit list, overrides base_seed/seed_count
//! content = 0                 # content learned by `sweep` and tabulated by `enumerate`
//! emit_every = 1              # iteration stride of emitted rows
//! threads = 0                 # 0 = all available cores
//! # output = "out.csv"
//!
//! [solver]
//! tolerance = 1e-9
//! max_sweeps = 1000000
//! damping = 0.5
//!
//! [validate]
//! instances = 100
//! samples = 20000
//! thresholds = [0, 1, 5]
//! ```

use std::path::{Path, PathBuf};

use refresh_core::bandit::{LearnerConfig, StepMode};
use refresh_core::mdp::SolverOptions;
use refresh_core::model::{ContentParams, RedirectionModel};
use refresh_core::rng::replication_seed;
use refresh_core::sim::{zipf_popularity, Environment, ScheduleEvent, ScheduleField};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    pub learner: LearnerSection,
    pub run: RunSection,
    pub solver: SolverSection,
    pub validate: ValidateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub contents: usize,
    pub zipf_exponent: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub popularity: Option<Vec<f64>>,
    pub arrival_rate: f64,
    pub alpha: f64,
    pub beta: f64,
    pub backhaul_cost: f64,
    pub t_max: usize,
    pub redirection: RedirectionConfig,
    pub schedule: Vec<ScheduleEvent>,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        Self {
            contents: 1,
            zipf_exponent: 1.1,
            popularity: None,
            arrival_rate: 100.0,
            alpha: 10.0,
            beta: 0.0,
            backhaul_cost: 500.0,
            t_max: 20,
            redirection: RedirectionConfig::default(),
            schedule: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    ExpComplement,
    ExpLiteral,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RedirectionConfig {
    pub variant: Variant,
    pub gamma: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<f64>>,
    /// Require `P(h + 1) ≥ P(h)`; a decreasing model is then a config error.
    pub monotone: bool,
}

impl Default for RedirectionConfig {
    fn default() -> Self {
        Self {
            variant: Variant::ExpComplement,
            gamma: 0.4,
            table: None,
            monotone: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepModeName {
    Constant,
    SampleAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSection {
    pub epsilon: Vec<f64>,
    pub step_mode: StepModeName,
    pub zeta: f64,
    pub initial_q: f64,
    pub iterations: usize,
}

impl Default for LearnerSection {
    fn default() -> Self {
        Self {
            epsilon: vec![0.0, 0.05, 0.1],
            step_mode: StepModeName::Constant,
            zeta: 0.1,
            initial_q: 0.0,
            iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    pub base_seed: u64,
    pub seed_count: u64,
    pub content: usize,
    pub emit_every: usize,
    pub threads: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seeds: None,
            base_seed: 0,
            seed_count: 100,
            content: 0,
            emit_every: 1,
            threads: 0,
            output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tolerance: f64,
    pub max_sweeps: usize,
    pub damping: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            tolerance: d.tolerance,
            max_sweeps: d.max_sweeps,
            damping: d.damping,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateSection {
    pub instances: usize,
    pub samples: usize,
    pub thresholds: Vec<usize>,
}

impl Default for ValidateSection {
    fn default() -> Self {
        Self {
            instances: 100,
            samples: 20_000,
            thresholds: vec![0, 1, 5],
        }
    }
}

fn require(ok: bool, path: &str, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(path, message))
    }
}

fn non_negative(v: f64, path: &str) -> Result<()> {
    require(v.is_finite() && v >= 0.0, path, format!("must be finite and non-negative, got {v}"))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Checks every field; the error names the offending key path.
    pub fn validate(&self) -> Result<()> {
        let env = &self.environment;
        require(env.contents >= 1, "environment.contents", "must be at least 1")?;
        require(
            env.zipf_exponent.is_finite() && env.zipf_exponent > 0.0,
            "environment.zipf_exponent",
            "must be positive",
        )?;
        if let Some(p) = &env.popularity {
            require(
                p.len() == env.contents,
                "environment.popularity",
                format!("has {} entries for {} contents", p.len(), env.contents),
            )?;
            require(
                p.iter().all(|x| (0.0..=1.0).contains(x)),
                "environment.popularity",
                "entries must lie in [0, 1]",
            )?;
            require(
                p.iter().sum::<f64>() <= 1.0 + 1e-12,
                "environment.popularity",
                "entries sum to more than 1",
            )?;
        }
        non_negative(env.arrival_rate, "environment.arrival_rate")?;
        non_negative(env.alpha, "environment.alpha")?;
        non_negative(env.beta, "environment.beta")?;
        non_negative(env.backhaul_cost, "environment.backhaul_cost")?;

        let red = &env.redirection;
        match red.variant {
            Variant::ExpComplement | Variant::ExpLiteral => {
                require(
                    red.gamma.is_finite() && red.gamma > 0.0,
                    "environment.redirection.gamma",
                    "must be positive",
                )?;
                require(
                    red.table.is_none(),
                    "environment.redirection.table",
                    "only allowed with variant = \"table\"",
                )?;
            }
            Variant::Table => {
                let table = red
                    .table
                    .as_ref()
                    .ok_or_else(|| CliError::config("environment.redirection.table", "required for variant = \"table\""))?;
                require(
                    table.len() == env.t_max + 1,
                    "environment.redirection.table",
                    format!("needs {} entries (ages 0..=t_max), got {}", env.t_max + 1, table.len()),
                )?;
                require(
                    table.iter().all(|x| (0.0..=1.0).contains(x)),
                    "environment.redirection.table",
                    "entries must be probabilities",
                )?;
            }
        }
        if red.monotone {
            require(
                self.redirection_model().is_monotone(env.t_max),
                "environment.redirection.monotone",
                "model decreases with age",
            )?;
        }

        for (i, event) in env.schedule.iter().enumerate() {
            let path = format!("environment.schedule[{i}]");
            if let Some(c) = event.content {
                require(c < env.contents, &format!("{path}.content"), format!("no content {c}"))?;
            }
            let value_path = format!("{path}.value");
            non_negative(event.value, &value_path)?;
            if event.field == ScheduleField::Popularity {
                require(event.value <= 1.0, &value_path, "popularity must be at most 1")?;
            }
        }

        let l = &self.learner;
        require(!l.epsilon.is_empty(), "learner.epsilon", "needs at least one value")?;
        require(
            l.epsilon.iter().all(|e| (0.0..=1.0).contains(e)),
            "learner.epsilon",
            "values must lie in [0, 1]",
        )?;
        require(l.zeta > 0.0 && l.zeta <= 1.0, "learner.zeta", "must lie in (0, 1]")?;
        require(l.initial_q.is_finite(), "learner.initial_q", "must be finite")?;
        require(l.iterations >= 1, "learner.iterations", "must be at least 1")?;

        let r = &self.run;
        match &r.seeds {
            Some(s) => require(!s.is_empty(), "run.seeds", "must not be empty")?,
            None => require(r.seed_count >= 1, "run.seed_count", "must be at least 1")?,
        }
        require(r.content < env.contents, "run.content", format!("no content {}", r.content))?;
        require(r.emit_every >= 1, "run.emit_every", "must be at least 1")?;

        let s = &self.solver;
        require(s.tolerance > 0.0, "solver.tolerance", "must be positive")?;
        require(s.max_sweeps >= 1, "solver.max_sweeps", "must be at least 1")?;
        require(s.damping > 0.0 && s.damping <= 1.0, "solver.damping", "must lie in (0, 1]")?;

        let v = &self.validate;
        require(v.samples >= 2, "validate.samples", "must be at least 2")?;

        // catches anything the core types reject beyond the checks above
        self.environment().map_err(|e| CliError::config("environment", e.to_string()))?;
        Ok(())
    }

    pub fn redirection_model(&self) -> RedirectionModel {
        let red = &self.environment.redirection;
        match red.variant {
            Variant::ExpComplement => RedirectionModel::ExpComplement { gamma: red.gamma },
            Variant::ExpLiteral => RedirectionModel::ExpLiteral { gamma: red.gamma },
            Variant::Table => RedirectionModel::Table {
                table: red.table.clone().unwrap_or_default(),
            },
        }
    }

    pub fn popularity(&self) -> refresh_core::Result<Vec<f64>> {
        match &self.environment.popularity {
            Some(p) => Ok(p.clone()),
            None => zipf_popularity(self.environment.contents, self.environment.zipf_exponent),
        }
    }

    pub fn environment(&self) -> refresh_core::Result<Environment> {
        let env = &self.environment;
        let model = self.redirection_model();
        let contents = self
            .popularity()?
            .into_iter()
            .map(|popularity| ContentParams {
                popularity,
                redirect_unit_cost: env.alpha,
                base_cost: env.beta,
                backhaul_cost: env.backhaul_cost,
                max_age: env.t_max,
                redirection: model.clone(),
            })
            .collect();
        Environment::new(contents, env.arrival_rate, env.schedule.clone())
    }

    pub fn learner_config(&self, epsilon: f64) -> LearnerConfig {
        LearnerConfig {
            epsilon,
            step: match self.learner.step_mode {
                StepModeName::Constant => StepMode::Constant(self.learner.zeta),
                StepModeName::SampleAverage => StepMode::SampleAverage,
            },
            initial_q: self.learner.initial_q,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.solver.tolerance,
            max_sweeps: self.solver.max_sweeps,
            damping: self.solver.damping,
        }
    }

    /// Seeds of all replications: the explicit list, or `base_seed + r` for
    /// `r < seed_count`.
    pub fn seeds(&self) -> Vec<u64> {
        match &self.run.seeds {
            Some(s) => s.clone(),
            None => (0..self.run.seed_count)
                .map(|r| replication_seed(self.run.base_seed, r))
                .collect(),
        }
    }

    /// Applies `--seed`: replaces any seed list with `base_seed = seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.run.seeds = None;
        self.run.base_seed = seed;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let env = c.environment().unwrap();
        assert_eq!(env.contents, vec![ContentParams::default()]);
        assert_eq!(env.arrival_rate, 100.0);
        assert_eq!(c.seeds().len(), 100);
    }

    #[test]
    fn negative_alpha_names_the_field() {
        let err = ExperimentConfig::from_toml_str("[environment]\nalpha = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("environment.alpha"), "{err}");
        assert_eq!(err.exit_code(), crate::error::exit::CONFIG);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::from_toml_str("[environment]\nalfa = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("alfa"), "{err}");
        assert!(ExperimentConfig::from_toml_str("[bogus]\n").is_err());
    }

    #[test]
    fn table_model_needs_full_table() {
        let text = "[environment]\nt_max = 2\n[environment.redirection]\nvariant = \"table\"\ntable = [0.0, 0.5]\n";
        let err = ExperimentConfig::from_toml_str(text).unwrap_err();
        assert!(err.to_string().contains("environment.redirection.table"));
    }

    #[test]
    fn monotone_flag_rejects_decreasing_model() {
        let text = "[environment.redirection]\nvariant = \"exp-literal\"\nmonotone = true\n";
        let err = ExperimentConfig::from_toml_str(text).unwrap_err();
        assert!(err.to_string().contains("monotone"));
        let text = "[environment.redirection]\nvariant = \"exp-literal\"\n";
        assert!(ExperimentConfig::from_toml_str(text).is_ok());
    }

    #[test]
    fn schedule_and_round_trip() {
        let text = r#"
[environment]
contents = 3
[[environment.schedule]]
iteration = 300
field = "backhaul_cost"
value = 400.0
[[environment.schedule]]
iteration = 10
content = 2
field = "popularity"
value = 0.01
[learner]
epsilon = [0.1]
step_mode = "sample-average"
[run]
seeds = [5, 9]
"#;
        let c = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(c.seeds(), vec![5, 9]);
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(again, c);
        let env = c.environment().unwrap();
        assert_eq!(env.apply_schedule(300).unwrap().contents[0].backhaul_cost, 400.0);
    }

    #[test]
    fn bad_schedule_target() {
        let text = "[[environment.schedule]]\niteration = 1\ncontent = 4\nfield = \"base_cost\"\nvalue = 1.0\n";
        let err = ExperimentConfig::from_toml_str(text).unwrap_err();
        assert!(err.to_string().contains("environment.schedule[0].content"), "{err}");
    }

    #[test]
    fn seed_override() {
        let mut c = ExperimentConfig::default();
        c.run.seeds = Some(vec![1]);
        c.run.seed_count = 2;
        c.override_seed(40);
        assert_eq!(c.seeds(), vec![40, 41]);
    }
}
