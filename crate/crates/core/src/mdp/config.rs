//! Hand-written MDP files.
//!
//! TOML schema (all probabilities as decimal numbers):
//!
//! ```toml
//! gamma = 0.9
//! initial = [1.0, 0.0]              # p0 over states
//! terminal = [false, true]          # optional, defaults to all false
//! reward = [[0.0, 1.0], [0.0, 0.0]] # reward[s][a]
//! transition = [                    # transition[s][a][s']
//!   [[1.0, 0.0], [0.0, 1.0]],
//!   [[0.0, 1.0], [0.0, 1.0]],
//! ]
//! master = [[0.5, 0.5], [0.5, 0.5]] # optional, master[s][o]
//!
//! [[options]]                       # optional, repeated per option
//! pi = [[1.0, 0.0], [1.0, 0.0]]     # pi[s][a]
//! beta = [0.5, 1.0]                 # beta[s]
//! ```

use std::path::Path;

use serde::Deserialize;

use super::{MasterPolicy, OptionDef, OptionSet, PolicyTable, TabularMdp};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionFile {
    pub pi: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub gamma: f64,
    pub initial: Vec<f64>,
    #[serde(default)]
    pub terminal: Option<Vec<bool>>,
    pub reward: Vec<Vec<f64>>,
    pub transition: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub options: Vec<OptionFile>,
    #[serde(default)]
    pub master: Option<Vec<Vec<f64>>>,
}

fn cast_rows<T: Real>(rows: &[Vec<f64>]) -> Vec<Vec<T>> {
    rows.iter().map(|r| r.iter().map(|&x| T::lit(x)).collect()).collect()
}

impl ModelFile {
    pub fn to_mdp<T: Real>(&self) -> Result<TabularMdp<T>> {
        let ns = self.transition.len();
        let na = self.transition.first().map_or(0, Vec::len);
        let mut transition = Vec::with_capacity(ns * na * ns);
        for (s, per_action) in self.transition.iter().enumerate() {
            if per_action.len() != na {
                return Err(Error::Config(format!("transition[{s}] has {} actions, expected {na}", per_action.len())));
            }
            for row in per_action {
                if row.len() != ns {
                    return Err(Error::Config(format!("transition[{s}] row has length {}, expected {ns}", row.len())));
                }
                transition.extend(row.iter().map(|&p| T::lit(p)));
            }
        }
        if self.reward.len() != ns || self.reward.iter().any(|r| r.len() != na) {
            return Err(Error::Config("reward must be an |S| x |A| table".into()));
        }
        let reward = self.reward.concat().into_iter().map(T::lit).collect();
        let initial = self.initial.iter().map(|&p| T::lit(p)).collect();
        let terminal = self.terminal.clone().unwrap_or_else(|| vec![false; ns]);
        TabularMdp::new(ns, na, transition, reward, initial, T::lit(self.gamma), terminal)
    }

    pub fn to_options<T: Real>(&self) -> Result<Option<OptionSet<T>>> {
        if self.options.is_empty() {
            return Ok(None);
        }
        let options = self
            .options
            .iter()
            .map(|o| {
                let pi = PolicyTable::from_rows(&cast_rows::<T>(&o.pi))?;
                OptionDef::new(pi, o.beta.iter().map(|&b| T::lit(b)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        OptionSet::new(options).map(Some)
    }

    pub fn to_master<T: Real>(&self) -> Result<Option<MasterPolicy<T>>> {
        self.master
            .as_ref()
            .map(|rows| PolicyTable::from_rows(&cast_rows::<T>(rows)).map(MasterPolicy::new))
            .transpose()
    }
}

pub fn parse_model_str(text: &str) -> Result<ModelFile> {
    toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<ModelFile> {
    parse_model_str(&std::fs::read_to_string(path)?)
}
