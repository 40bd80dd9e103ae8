//! Experiment configuration, read from TOML.
//!
//! ```toml
//! algorithm = "dac-ppo"
//! env = "four_rooms"
//! transfer_env = "four_rooms_goal_b"   # optional second task
//! switch_at = 50000                    # defaults to total_steps / 2
//! n_options = 4
//! total_steps = 100000
//! seeds = [0, 1, 2]
//! out_dir = "runs"
//! eval_interval = 1000                 # defaults to total_steps / 100
//! trace = false                        # write the per-step option trace
//!
//! [env_params]
//! max_episode_steps = 100
//!
//! [learner]
//! lr = 0.001
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::learners::{Algorithm, LearnerConfig};
use crate::mdp::EnvParams;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    #[serde(deserialize_with = "algorithm_from_str")]
    pub algorithm: Algorithm,
    pub env: String,
    pub transfer_env: Option<String>,
    pub switch_at: Option<u64>,
    pub n_options: usize,
    pub total_steps: u64,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub eval_interval: Option<u64>,
    pub trace: bool,
    pub env_params: EnvParams,
    pub learner: LearnerConfig,
}

fn algorithm_from_str<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Algorithm, D::Error> {
    let s = String::deserialize(d)?;
    s.parse().map_err(serde::de::Error::custom)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::DacPpo,
            env: "four_rooms".into(),
            transfer_env: None,
            switch_at: None,
            n_options: 4,
            total_steps: 100_000,
            seeds: (0..10).collect(),
            out_dir: PathBuf::from("runs"),
            eval_interval: None,
            trace: false,
            env_params: EnvParams::default(),
            learner: LearnerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Step at which the second task replaces the first, if there is one.
    pub fn switch_step(&self) -> Option<u64> {
        self.transfer_env.as_ref().map(|_| self.switch_at.unwrap_or(self.total_steps / 2))
    }

    pub fn eval_every(&self) -> u64 {
        self.eval_interval.unwrap_or(self.total_steps / 100).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.learner.validate()?;
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be positive".into()));
        }
        if self.n_options == 0 {
            return Err(Error::Config("n_options must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is needed".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.switch_at.is_some() && self.transfer_env.is_none() {
            return Err(Error::Config("switch_at is set but there is no transfer_env".into()));
        }
        if let Some(at) = self.switch_step() {
            if at == 0 || at >= self.total_steps {
                return Err(Error::Config(format!(
                    "switch step {at} must lie strictly between 0 and total_steps {}",
                    self.total_steps
                )));
            }
        }
        Ok(())
    }

    /// Name stem shared by every file of this experiment.
    pub fn stem(&self) -> String {
        format!("{}_{}_o{}", self.algorithm.id(), self.env, self.n_options)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_file() {
        let c = ExperimentConfig::from_toml_str(
            r#"
            algorithm = "ahp-ppo"
            env = "four_rooms"
            transfer_env = "four_rooms_goal_b"
            total_steps = 1000
            seeds = [3, 4]
            [env_params]
            max_episode_steps = 50
            [learner]
            lr = 0.01
            "#,
        )
        .unwrap();
        assert_eq!(c.algorithm, Algorithm::AhpPpo);
        assert_eq!(c.switch_step(), Some(500));
        assert_eq!(c.env_params.max_episode_steps, Some(50));
        assert_eq!(c.learner.lr, 0.01);
        assert_eq!(c.n_options, 4);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml_str("algorithm = \"sarsa\"").is_err());
        assert!(ExperimentConfig::from_toml_str("colour = 1").is_err());
        let dup = ExperimentConfig { seeds: vec![1, 1], ..Default::default() };
        assert!(dup.validate().is_err());
        let late = ExperimentConfig {
            transfer_env: Some("four_rooms_goal_b".into()),
            switch_at: Some(100_000),
            ..Default::default()
        };
        assert!(late.validate().is_err());
        let orphan = ExperimentConfig { switch_at: Some(10), ..Default::default() };
        assert!(orphan.validate().is_err());
    }
}
