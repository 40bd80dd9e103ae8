use optionkit::harness::{ablation_n_options, occupancy, options_per_episode, run_experiment, seed_csv_path, ExperimentConfig};
use optionkit::learners::{Algorithm, LearnerConfig};
use optionkit::mdp::EnvParams;

fn config(dir: &std::path::Path, algorithm: Algorithm, env: &str, steps: u64) -> ExperimentConfig {
    ExperimentConfig {
        algorithm,
        env: env.into(),
        total_steps: steps,
        seeds: vec![0],
        out_dir: dir.to_path_buf(),
        ..Default::default()
    }
}

#[test]
fn same_seed_gives_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for algo in [Algorithm::DacPpo, Algorithm::DacA2c, Algorithm::Oc, Algorithm::Ioq] {
        let mut c = config(a.path(), algo, "four_rooms", 3000);
        c.seeds = vec![3];
        c.learner.rollout = Some(256);
        run_experiment(&c).unwrap();
        c.out_dir = b.path().to_path_buf();
        run_experiment(&c).unwrap();
        let read = |dir: &std::path::Path| std::fs::read(seed_csv_path(&ExperimentConfig { out_dir: dir.into(), ..c.clone() }, 3)).unwrap();
        let (x, y) = (read(a.path()), read(b.path()));
        assert!(!x.is_empty());
        assert_eq!(x, y, "{algo:?} is not reproducible");
    }
}

#[test]
fn ten_seeds_write_ten_files_and_an_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig { seeds: (0..10).collect(), ..config(dir.path(), Algorithm::A2c, "chain", 2000) };
    let summary = run_experiment(&c).unwrap();
    assert_eq!(summary.failures().count(), 0);
    for seed in 0..10 {
        let path = seed_csv_path(&c, seed);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("seed,step,episode,return,smoothed_return,algorithm,env,n_options"), "{text}");
        assert!(text.lines().count() > 1);
    }
    let agg = std::fs::read_to_string(summary.aggregate_path.unwrap()).unwrap();
    assert!(agg.lines().nth(1).unwrap().ends_with("a2c,chain,4"), "{agg}");
    assert!(summary.aggregate.iter().any(|r| r.n_seeds == 10));
    // 10 seed files + the aggregate
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 11);
}

#[test]
fn transfer_switches_task_at_the_configured_step() {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig {
        transfer_env: Some("four_rooms_goal_b".into()),
        switch_at: Some(3000),
        trace: true,
        learner: LearnerConfig { rollout: Some(256), ..Default::default() },
        ..config(dir.path(), Algorithm::DacPpo, "four_rooms", 6000)
    };
    let summary = run_experiment(&c).unwrap();
    let run = &summary.runs[0];
    assert!(run.trace.iter().all(|r| (r.env == "four_rooms") == (r.step <= 3000)));
    let envs: Vec<&str> = run.episodes.iter().map(|e| e.env.as_str()).collect();
    let first_b = envs.iter().position(|&e| e == "four_rooms_goal_b").unwrap();
    assert!(envs[..first_b].iter().all(|&e| e == "four_rooms"));
    assert!(envs[first_b..].iter().all(|&e| e == "four_rooms_goal_b"));
    let phases: Vec<usize> = occupancy(&run.trace, 4).iter().map(|r| r.phase).collect();
    assert_eq!(phases.iter().max(), Some(&1));
}

#[test]
fn options_that_never_terminate_last_the_whole_episode() {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig {
        trace: true,
        learner: LearnerConfig { fixed_option_beta: 0.0, ..Default::default() },
        ..config(dir.path(), Algorithm::Ioq, "four_rooms", 2000)
    };
    let summary = run_experiment(&c).unwrap();
    let counts = options_per_episode(&summary.runs[0].trace);
    assert!(counts.len() > 5);
    assert!(counts.iter().all(|&n| n == 1), "{counts:?}");
}

#[test]
fn a_single_option_is_always_active() {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig {
        n_options: 1,
        trace: true,
        learner: LearnerConfig { rollout: Some(128), ..Default::default() },
        ..config(dir.path(), Algorithm::DacPpo, "four_rooms", 1000)
    };
    let summary = run_experiment(&c).unwrap();
    let occ = occupancy(&summary.runs[0].trace, 1);
    assert_eq!(occ.len(), 1);
    assert_eq!(occ[0].fraction, 1.0);
    assert!(dir.path().join("dac-ppo_four_rooms_o1_seed0_occupancy.csv").exists());
}

#[test]
fn ablation_writes_one_curve_per_option_count() {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig {
        transfer_env: Some("four_rooms_goal_b".into()),
        eval_interval: Some(500),
        learner: LearnerConfig { rollout: Some(5), ..Default::default() },
        ..config(dir.path(), Algorithm::DacA2c, "four_rooms", 2000)
    };
    let out = ablation_n_options(&c, &[2, 3]).unwrap();
    assert_eq!(out.iter().map(|(n, _)| *n).collect::<Vec<_>>(), vec![2, 3]);
    let text = std::fs::read_to_string(dir.path().join("dac-a2c_four_rooms_ablation.csv")).unwrap();
    assert!(text.starts_with("n_options,step,mean,stderr,n_seeds,algorithm,env"));
    for n in ["2", "3"] {
        assert!(text.lines().skip(1).any(|l| l.starts_with(&format!("{n},"))));
    }
    assert!(ablation_n_options(&ExperimentConfig { transfer_env: None, ..c }, &[2]).is_err());
}

#[test]
fn bad_configs_are_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let base = config(dir.path(), Algorithm::Ppo, "four_rooms", 100);
    assert!(run_experiment(&ExperimentConfig { seeds: vec![1, 1], ..base.clone() }).is_err());
    assert!(run_experiment(&ExperimentConfig { switch_at: Some(50), ..base.clone() }).is_err());
    assert!(run_experiment(&ExperimentConfig { env: "nowhere".into(), ..base.clone() }).map(|s| s.failures().count()).unwrap_or(1) > 0);
    let chain = ExperimentConfig { env_params: EnvParams { chain_length: Some(3), ..Default::default() }, ..base };
    assert!(run_experiment(&ExperimentConfig { env: "chain".into(), ..chain }).is_ok());
}
