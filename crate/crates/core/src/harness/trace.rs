//! Per-step option traces for strip plots and per-phase option occupancy.

use std::path::PathBuf;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::SeedRun;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub seed: u64,
    pub step: u64,
    /// Episodes worker 0 had finished before this step.
    pub episode: u64,
    pub option: usize,
    pub env: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancyRow {
    pub seed: u64,
    pub phase: usize,
    pub env: String,
    pub option: usize,
    pub steps: u64,
    pub fraction: f64,
}

/// Fraction of traced steps spent in each option, per task phase. Phases
/// are maximal runs of the same environment, in order.
pub fn occupancy(trace: &[TraceRow], n_options: usize) -> Vec<OccupancyRow> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut phase = 0;
    while start < trace.len() {
        let env = &trace[start].env;
        let end = trace[start..].iter().position(|r| &r.env != env).map_or(trace.len(), |k| start + k);
        let mut counts = vec![0u64; n_options];
        for row in &trace[start..end] {
            if row.option < n_options {
                counts[row.option] += 1;
            }
        }
        let total = (end - start) as f64;
        for (option, &steps) in counts.iter().enumerate() {
            out.push(OccupancyRow {
                seed: trace[start].seed,
                phase,
                env: env.clone(),
                option,
                steps,
                fraction: steps as f64 / total,
            });
        }
        start = end;
        phase += 1;
    }
    out
}

/// Writes `<stem>_seed<k>_trace.csv` (one row per step) and
/// `<stem>_seed<k>_occupancy.csv`, returning the occupancy rows.
pub fn option_trace_export(config: &ExperimentConfig, run: &SeedRun) -> Result<Vec<OccupancyRow>> {
    std::fs::create_dir_all(&config.out_dir)?;
    let base = format!("{}_seed{}", config.stem(), run.seed);
    let path = |suffix: &str| -> PathBuf { config.out_dir.join(format!("{base}_{suffix}.csv")) };
    let mut w = csv::Writer::from_path(path("trace"))?;
    for row in &run.trace {
        w.serialize(row)?;
    }
    w.flush()?;
    let occ = occupancy(&run.trace, config.n_options);
    let mut w = csv::Writer::from_path(path("occupancy"))?;
    for row in &occ {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(occ)
}

/// Number of option segments (maximal runs of one option) in each episode.
pub fn options_per_episode(trace: &[TraceRow]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    let mut last: Option<(u64, usize)> = None;
    for row in trace {
        match last {
            Some((ep, o)) if ep == row.episode => {
                if o != row.option {
                    *out.last_mut().expect("episode started") += 1;
                }
            }
            _ => out.push(1),
        }
        last = Some((row.episode, row.option));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64, episode: u64, option: usize, env: &str) -> TraceRow {
        TraceRow { seed: 0, step, episode, option, env: env.into() }
    }

    #[test]
    fn fractions_partition_each_phase() {
        let trace = vec![row(1, 0, 0, "a"), row(2, 0, 1, "a"), row(3, 0, 1, "a"), row(4, 1, 2, "b")];
        let occ = occupancy(&trace, 3);
        assert_eq!(occ.len(), 6);
        for phase in 0..2 {
            let total: f64 = occ.iter().filter(|r| r.phase == phase).map(|r| r.fraction).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert!((occ[1].fraction - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(occ[5].fraction, 1.0);
    }

    #[test]
    fn counts_switches_within_episodes() {
        let trace = vec![row(1, 0, 0, "a"), row(2, 0, 1, "a"), row(3, 0, 0, "a"), row(4, 1, 0, "a"), row(5, 1, 0, "a")];
        assert_eq!(options_per_episode(&trace), vec![3, 1]);
    }
}
