//! Runs one experiment per option count and joins the aggregates.

use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::{run_experiment, ExperimentSummary};
use crate::error::{Error, Result};

pub const DEFAULT_OPTION_COUNTS: [usize; 3] = [2, 4, 8];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub n_options: usize,
    pub step: u64,
    pub mean: f64,
    pub stderr: f64,
    pub n_seeds: usize,
    pub algorithm: String,
    pub env: String,
}

/// Runs `config` once per entry of `counts` (transfer configs only) and
/// writes `<algorithm>_<env>_ablation.csv` with one series per count.
pub fn ablation_n_options(config: &ExperimentConfig, counts: &[usize]) -> Result<Vec<(usize, ExperimentSummary)>> {
    if config.transfer_env.is_none() {
        return Err(Error::Config("the option-count ablation runs on a transfer pair; set transfer_env".into()));
    }
    if counts.is_empty() {
        return Err(Error::Config("no option counts given".into()));
    }
    let mut out = Vec::with_capacity(counts.len());
    let mut rows = Vec::new();
    for &n in counts {
        let c = ExperimentConfig { n_options: n, ..config.clone() };
        let summary = run_experiment(&c)?;
        rows.extend(summary.aggregate.iter().map(|a| AblationRow {
            n_options: n,
            step: a.step,
            mean: a.mean,
            stderr: a.stderr,
            n_seeds: a.n_seeds,
            algorithm: a.algorithm.clone(),
            env: a.env.clone(),
        }));
        out.push((n, summary));
    }
    let path = config.out_dir.join(format!("{}_{}_ablation.csv", config.algorithm.id(), config.env));
    let mut w = csv::Writer::from_path(path)?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(out)
}
