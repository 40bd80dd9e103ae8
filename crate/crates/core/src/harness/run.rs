//! Seeded training runs, per-seed episode CSVs and the cross-seed aggregate.

use std::collections::VecDeque;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::trace::{option_trace_export, TraceRow};
use crate::error::{Error, Result};
use crate::learners::{make_learner, EnvRunner, Learner};
use crate::mdp::{make_environment, Environment};

pub const SMOOTHING_WINDOW: usize = 20;

/// Mean of the last `window` values; fewer when fewer have been seen.
#[derive(Debug, Clone)]
pub struct SlidingMean {
    window: usize,
    values: VecDeque<f64>,
}

impl SlidingMean {
    pub fn new(window: usize) -> Self {
        Self { window: window.max(1), values: VecDeque::new() }
    }

    pub fn push(&mut self, x: f64) -> f64 {
        if self.values.len() == self.window {
            self.values.pop_front();
        }
        self.values.push_back(x);
        self.mean().unwrap_or(x)
    }

    pub fn mean(&self) -> Option<f64> {
        if self.values.is_empty() {
            None
        } else {
            Some(self.values.iter().sum::<f64>() / self.values.len() as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRow {
    pub seed: u64,
    pub step: u64,
    pub episode: u64,
    #[serde(rename = "return")]
    pub ret: f64,
    pub smoothed_return: f64,
    pub algorithm: String,
    pub env: String,
    pub n_options: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub step: u64,
    pub mean: f64,
    pub stderr: f64,
    pub n_seeds: usize,
    pub algorithm: String,
    pub env: String,
    pub n_options: usize,
}

/// Everything one seed produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub episodes: Vec<EpisodeRow>,
    /// Smoothed return at each evaluation step; `None` before the first
    /// episode ends.
    pub eval: Vec<(u64, Option<f64>)>,
    /// Active option of worker 0 at every step, for agents with options.
    pub trace: Vec<TraceRow>,
    pub failure: Option<String>,
    pub csv_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    /// In the order of `config.seeds`.
    pub runs: Vec<SeedRun>,
    pub aggregate: Vec<AggregateRow>,
    pub aggregate_path: Option<PathBuf>,
}

impl ExperimentSummary {
    pub fn failures(&self) -> impl Iterator<Item = (u64, &str)> {
        self.runs.iter().filter_map(|r| r.failure.as_deref().map(|f| (r.seed, f)))
    }
}

struct EpisodeSink {
    writer: Option<csv::Writer<BufWriter<File>>>,
}

impl EpisodeSink {
    fn write(&mut self, rows: &[EpisodeRow]) -> Result<()> {
        if let Some(w) = &mut self.writer {
            for row in rows {
                w.serialize(row)?;
            }
            if !rows.is_empty() {
                w.flush()?;
            }
        }
        Ok(())
    }
}

pub fn seed_csv_path(config: &ExperimentConfig, seed: u64) -> PathBuf {
    config.out_dir.join(format!("{}_seed{seed}.csv", config.stem()))
}

fn environments(config: &ExperimentConfig) -> Result<(Environment<f64>, Option<Environment<f64>>)> {
    let first = make_environment(&config.env, &config.env_params)?;
    let second = config.transfer_env.as_deref().map(|e| make_environment(e, &config.env_params)).transpose()?;
    Ok((first, second))
}

/// Trains one seed. With `write` the episode rows stream to
/// [`seed_csv_path`], flushed whenever a step finishes an episode. A
/// learner error ends the run early and is recorded in `failure`.
pub fn run_seed(config: &ExperimentConfig, seed: u64, write: bool) -> SeedRun {
    let mut run = SeedRun {
        seed,
        episodes: Vec::new(),
        eval: Vec::new(),
        trace: Vec::new(),
        failure: None,
        csv_path: write.then(|| seed_csv_path(config, seed)),
    };
    if let Err(e) = drive(config, &mut run) {
        log::warn!("seed {seed} failed: {e}");
        run.failure = Some(e.to_string());
    }
    run
}

fn drive(config: &ExperimentConfig, run: &mut SeedRun) -> Result<()> {
    config.validate()?;
    let writer = match &run.csv_path {
        Some(path) => {
            std::fs::create_dir_all(&config.out_dir)?;
            Some(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
        }
        None => None,
    };
    let mut sink = EpisodeSink { writer };
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let (first, second) = environments(config)?;
    let mut learner: Box<dyn Learner<f64>> =
        make_learner(config.algorithm, &config.learner, &first, config.n_options, &mut rng)?;
    let n_workers = config.learner.resolve(config.algorithm).n_workers;
    let mut runner = EnvRunner::new(first, n_workers, &mut rng)?;
    let mut second = second;
    let switch = config.switch_step();
    let every = config.eval_every();
    let mut next_eval = every;
    let mut smooth = SlidingMean::new(SMOOTHING_WINDOW);
    let mut env_name = config.env.clone();
    let mut episodes = 0u64;
    let mut worker0_episodes = 0u64;
    let mut collect = |records: Vec<crate::learners::EpisodeRecord<f64>>,
                       env_name: &str,
                       run: &mut SeedRun,
                       smooth: &mut SlidingMean,
                       worker0: &mut u64|
     -> Result<()> {
        let start = run.episodes.len();
        for rec in records {
            let smoothed = smooth.push(rec.ret);
            if rec.worker == 0 {
                *worker0 += 1;
            }
            run.episodes.push(EpisodeRow {
                seed: run.seed,
                step: rec.end_step,
                episode: episodes,
                ret: rec.ret,
                smoothed_return: smoothed,
                algorithm: config.algorithm.id().to_string(),
                env: env_name.to_string(),
                n_options: config.n_options,
            });
            episodes += 1;
        }
        sink.write(&run.episodes[start..])
    };
    while runner.total_steps() < config.total_steps {
        if let (Some(at), Some(_)) = (switch, &second) {
            if runner.total_steps() >= at {
                let next = second.take().expect("checked above");
                let next_name = next.name.clone();
                runner.switch_env(next, &mut rng)?;
                collect(runner.drain_episodes(), &env_name, run, &mut smooth, &mut worker0_episodes)?;
                env_name = next_name;
            }
        }
        learner.step(&mut runner, &mut rng)?;
        if config.trace {
            if let Some(option) = learner.active_option(0) {
                run.trace.push(TraceRow {
                    seed: run.seed,
                    step: runner.total_steps(),
                    episode: worker0_episodes,
                    option,
                    env: env_name.clone(),
                });
            }
        }
        collect(runner.drain_episodes(), &env_name, run, &mut smooth, &mut worker0_episodes)?;
        while next_eval <= runner.total_steps() && next_eval <= config.total_steps {
            run.eval.push((next_eval, smooth.mean()));
            next_eval += every;
        }
    }
    Ok(())
}

/// Mean and standard error across runs at each evaluation step, merged by
/// position in `runs` so the result does not depend on execution order.
/// Failed runs and steps before a run's first episode are left out.
pub fn aggregate(config: &ExperimentConfig, runs: &[SeedRun]) -> Vec<AggregateRow> {
    let longest = runs.iter().map(|r| r.eval.len()).max().unwrap_or(0);
    (0..longest)
        .filter_map(|i| {
            let step = runs.iter().find_map(|r| r.eval.get(i).map(|e| e.0))?;
            let xs: Vec<f64> =
                runs.iter().filter(|r| r.failure.is_none()).filter_map(|r| r.eval.get(i).and_then(|e| e.1)).collect();
            let (mean, stderr) = mean_and_stderr(&xs)?;
            Some(AggregateRow {
                step,
                mean,
                stderr,
                n_seeds: xs.len(),
                algorithm: config.algorithm.id().to_string(),
                env: config.env.clone(),
                n_options: config.n_options,
            })
        })
        .collect()
}

/// Sample mean and its standard error (`sd / sqrt(n)`, `n - 1` in the
/// variance); the error is 0 for a single value.
pub fn mean_and_stderr(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let cap = std::env::var("OPTIONKIT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).unwrap_or(0);
    rayon::ThreadPoolBuilder::new().num_threads(cap).build().map_err(|e| Error::Config(e.to_string()))
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every seed (in parallel, at most `OPTIONKIT_THREADS` at a time when
/// set), writes one CSV per seed plus `<stem>_aggregate.csv`, and the option
/// traces when `config.trace` is on.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    std::fs::create_dir_all(&config.out_dir)?;
    let pool = thread_pool()?;
    let runs: Vec<SeedRun> = pool.install(|| config.seeds.par_iter().map(|&seed| run_seed(config, seed, true)).collect());
    if config.trace {
        for run in &runs {
            option_trace_export(config, run)?;
        }
    }
    let aggregate = aggregate(config, &runs);
    let path = config.out_dir.join(format!("{}_aggregate.csv", config.stem()));
    write_aggregate(&path, &aggregate)?;
    Ok(ExperimentSummary { runs, aggregate, aggregate_path: Some(path) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::Algorithm;

    #[test]
    fn sliding_mean_uses_what_is_available() {
        let mut m = SlidingMean::new(3);
        assert_eq!(m.mean(), None);
        assert_eq!(m.push(3.0), 3.0);
        assert_eq!(m.push(1.0), 2.0);
        m.push(2.0);
        assert_eq!(m.push(6.0), 3.0);
    }

    #[test]
    fn stderr_of_known_sample() {
        let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_stderr(&[7.0]), Some((7.0, 0.0)));
    }

    #[test]
    fn aggregate_ignores_failed_runs_and_empty_points() {
        let config = ExperimentConfig { algorithm: Algorithm::Ppo, ..Default::default() };
        let mk = |seed, eval: Vec<(u64, Option<f64>)>, failure: Option<&str>| SeedRun {
            seed,
            episodes: vec![],
            eval,
            trace: vec![],
            failure: failure.map(String::from),
            csv_path: None,
        };
        let runs = vec![
            mk(0, vec![(10, None), (20, Some(1.0))], None),
            mk(1, vec![(10, Some(2.0)), (20, Some(3.0))], None),
            mk(2, vec![(10, Some(100.0))], Some("boom")),
        ];
        let agg = aggregate(&config, &runs);
        assert_eq!(agg.len(), 2);
        assert_eq!((agg[0].step, agg[0].mean, agg[0].n_seeds), (10, 2.0, 1));
        assert_eq!((agg[1].step, agg[1].mean, agg[1].n_seeds), (20, 2.0, 2));
    }
}
