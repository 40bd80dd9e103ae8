use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use optionkit::harness::{
    ablation_n_options, format_table, run_experiment, verify_all, ExperimentConfig, ExperimentSummary,
    VerifyScale, DEFAULT_OPTION_COUNTS,
};
use optionkit::learners::Algorithm;
use optionkit::oracle::{write_residual_csv, ResidualRow};

/// `println!` that stays quiet when stdout is a closed pipe.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "optionkit", version, about = "Train and verify option-based agents on tabular tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write per-seed and aggregate CSVs.
    Run(Overrides),
    /// Run the exact property suites and print a residual table.
    Verify {
        /// Small instance counts, for a fast smoke check.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the residuals as CSV into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat a transfer experiment for several option counts.
    Ablate {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated option counts.
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<usize>>,
    },
    /// Train with the per-step option trace on and print option occupancy.
    Trace(Overrides),
}

#[derive(Args, Clone)]
struct Overrides {
    /// TOML experiment file; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// One of dac-ppo, dac-a2c, ahp-ppo, ppo, a2c, oc, iopg-posterior-demo, ioq, smdpq.
    #[arg(long)]
    algo: Option<Algorithm>,
    #[arg(long)]
    env: Option<String>,
    /// Second task for the transfer protocol.
    #[arg(long)]
    transfer_env: Option<String>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    switch_at: Option<u64>,
    #[arg(long)]
    n_options: Option<usize>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            c.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            c.out_dir = out.clone();
        }
        if let Some(algo) = self.algo {
            c.algorithm = algo;
        }
        if let Some(env) = &self.env {
            c.env = env.clone();
        }
        if let Some(env) = &self.transfer_env {
            c.transfer_env = Some(env.clone());
        }
        if let Some(steps) = self.steps {
            c.total_steps = steps;
        }
        if let Some(at) = self.switch_at {
            c.switch_at = Some(at);
        }
        if let Some(n) = self.n_options {
            c.n_options = n;
        }
        c.validate()?;
        Ok(c)
    }
}

fn report(summary: &ExperimentSummary) -> Result<()> {
    for (seed, why) in summary.failures() {
        eprintln!("seed {seed} failed: {why}");
    }
    if let Some(last) = summary.aggregate.last() {
        say!(
            "{} on {} ({} options): smoothed return {:.3} +/- {:.3} at step {} over {} seeds",
            last.algorithm, last.env, last.n_options, last.mean, last.stderr, last.step, last.n_seeds
        );
    }
    if let Some(path) = &summary.aggregate_path {
        say!("aggregate: {}", path.display());
    }
    if summary.failures().count() == summary.runs.len() {
        bail!("every seed failed");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(o) => report(&run_experiment(&o.resolve()?)?)?,
        Command::Trace(o) => {
            let config = ExperimentConfig { trace: true, ..o.resolve()? };
            let summary = run_experiment(&config)?;
            for r in &summary.runs {
                for occ in optionkit::harness::occupancy(&r.trace, config.n_options) {
                    say!("seed {} phase {} ({}): option {} {:.3}", occ.seed, occ.phase, occ.env, occ.option, occ.fraction);
                }
            }
            report(&summary)?;
        }
        Command::Ablate { overrides, counts } => {
            let config = overrides.resolve()?;
            let counts = counts.unwrap_or_else(|| DEFAULT_OPTION_COUNTS.to_vec());
            for (n, summary) in ablation_n_options(&config, &counts)? {
                say!("n_options = {n}");
                report(&summary)?;
            }
        }
        Command::Verify { quick, seed, out } => {
            let scale = if quick { VerifyScale::QUICK } else { VerifyScale::FULL };
            let checks = verify_all(scale, seed)?;
            say!("{}", format_table(&checks).trim_end());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let rows: Vec<ResidualRow> = checks.iter().map(|c| ResidualRow::new(seed, c.name.clone(), c.worst)).collect();
                write_residual_csv(std::fs::File::create(dir.join("residuals.csv"))?, &rows)?;
            }
            return Ok(checks.iter().all(|c| c.passed()));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
