use abworld::abmdp::AbMdpConfig;
use abworld::craft::{CraftEnv, EnvConfig};
use abworld::harness::{
    ci_half_width, evaluate, exhaustive_dataset, expert_dataset, export_run, read_metrics_csv,
    train, train_seed, write_metrics_csv, ExperimentConfig, ExplorerKind, ModelKind,
    OUTPUT_DIR_VAR, SEED_VAR,
};
use abworld::plan::PlannerConfig;
use abworld::worldmodel::persist::load_transitions;
use abworld::worldmodel::{ParametricModel, TransitionCounts, DEFAULT_EPSILON};

fn small(model: ModelKind) -> ExperimentConfig {
    ExperimentConfig {
        step_budget: 5000,
        eval_episodes: 20,
        model,
        ..ExperimentConfig::default()
    }
}

fn craft2() -> CraftEnv {
    CraftEnv::new(EnvConfig::builtin("craft2").unwrap())
}

fn metrics_bytes(config: &ExperimentConfig) -> Vec<u8> {
    let runs = train(config).unwrap();
    let records: Vec<_> = runs.into_iter().flat_map(|r| r.records).collect();
    let mut out = Vec::new();
    write_metrics_csv(&mut out, &records).unwrap();
    out
}

#[test]
fn zero_budget_does_nothing() {
    let config = ExperimentConfig {
        step_budget: 0,
        ..ExperimentConfig::default()
    };
    let run = train_seed(&config, &craft2(), 0).unwrap();
    assert!(run.records.is_empty());
    assert_eq!(run.low_level_steps, 0);
    assert!(run.transitions().is_empty());
}

#[test]
fn runs_are_reproducible() {
    for kind in [ModelKind::Parametric, ModelKind::Nonparametric] {
        let config = ExperimentConfig {
            seeds: vec![3, 4],
            ..small(kind)
        };
        assert_eq!(metrics_bytes(&config), metrics_bytes(&config));
    }
}

#[test]
fn budget_and_rounds_are_respected() {
    let config = ExperimentConfig {
        step_budget: 6000,
        ..small(ModelKind::Nonparametric)
    };
    let run = train_seed(&config, &craft2(), 1).unwrap();
    assert_eq!(run.low_level_steps, 6000);
    let steps: Vec<_> = run.records.iter().map(|r| r.low_level_steps).collect();
    assert_eq!(steps, vec![2500, 5000, 6000]);
    let total: u64 = run
        .transitions()
        .iter()
        .map(|t| u64::from(t.low_level_steps))
        .sum();
    assert_eq!(total, 6000);
    for r in &run.records {
        assert_eq!(r.fit_steps, 0);
        assert!(r.model_accuracy.is_nan());
        assert!((0.0..=1.0).contains(&r.mean_return));
    }
}

#[test]
fn counts_agree_with_the_transition_log() {
    let run = train_seed(&small(ModelKind::Parametric), &craft2(), 2).unwrap();
    let recount =
        TransitionCounts::from_dataset(run.transitions().iter().cloned(), DEFAULT_EPSILON);
    assert_eq!(recount.num_keys(), run.counts.num_keys());
    for e in recount.entries() {
        let theirs = run.counts.get(&e.state, &e.behaviour).unwrap();
        assert_eq!((theirs.success, theirs.total), (e.success, e.total));
    }
    let changes: std::collections::BTreeSet<_> = run
        .transitions()
        .iter()
        .flat_map(|t| t.state.changes_to(&t.next_state))
        .collect();
    assert_eq!(changes, run.unique_valid);
    assert!(run.records.iter().all(|r| r.fit_steps > 0));
}

#[test]
fn stop_at_success_ends_early() {
    let config = ExperimentConfig {
        step_budget: 50_000,
        stop_at_success: Some(0.0),
        ..small(ModelKind::Nonparametric)
    };
    let run = train_seed(&config, &craft2(), 0).unwrap();
    assert_eq!(run.records.len(), 1);
    assert_eq!(run.low_level_steps, 2500);
}

#[test]
fn random_explorer_runs() {
    let config = ExperimentConfig {
        explorer: ExplorerKind::Random,
        evaluate: false,
        ..small(ModelKind::Nonparametric)
    };
    let run = train_seed(&config, &craft2(), 0).unwrap();
    assert!(run.records.iter().all(|r| r.mean_return.is_nan()));
    assert!(!run.unique_valid.is_empty());
}

#[test]
fn interval_shrinks_with_episodes() {
    assert_eq!(ci_half_width(0.5, 100), 1.96 * 0.05);
    assert!((ci_half_width(0.3, 400) / ci_half_width(0.3, 100) - 0.5).abs() < 1e-12);
    assert_eq!(ci_half_width(1.0, 100), 0.0);
    assert_eq!(ci_half_width(0.5, 0), 0.0);
}

#[test]
fn exact_counts_solve_craft2() {
    let env = craft2();
    let abmdp = AbMdpConfig::default();
    let data = exhaustive_dataset(&env, &abmdp, &(0..20).collect::<Vec<_>>(), 5000);
    let counts = TransitionCounts::from_dataset(data, DEFAULT_EPSILON);
    let e = evaluate(&env, &counts, &PlannerConfig::default(), &abmdp, 100, 77).unwrap();
    assert_eq!(e.mean, 1.0);
    assert_eq!(e.episodes, 100);
}

#[test]
fn untrained_model_fails_gracefully() {
    let env = CraftEnv::new(EnvConfig::builtin("craft4").unwrap());
    let model = ParametricModel::for_vocab(&env.config().vocab, 0);
    let e = evaluate(
        &env,
        &model,
        &PlannerConfig::default(),
        &AbMdpConfig::default(),
        10,
        0,
    )
    .unwrap();
    assert!((0.0..=1.0).contains(&e.mean));
}

#[test]
fn expert_data_is_deterministic() {
    let env = CraftEnv::new(EnvConfig::builtin("craft3").unwrap());
    let abmdp = AbMdpConfig::default();
    let a = expert_dataset(&env, &abmdp, 300, 0.3, 5);
    assert_eq!(a.len(), 300);
    assert_eq!(a, expert_dataset(&env, &abmdp, 300, 0.3, 5));
    assert_ne!(a, expert_dataset(&env, &abmdp, 300, 0.3, 6));
    // a noiseless expert succeeds at nearly every step
    let clean = expert_dataset(&env, &abmdp, 300, 0.0, 5);
    let ok = clean.iter().filter(|t| t.success).count();
    assert!(ok as f64 / 300.0 > 0.9, "{ok}");
}

#[test]
fn export_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let env = craft2();
    let config = small(ModelKind::Parametric);
    let run = train_seed(&config, &env, 0).unwrap();
    let files = export_run(&config, &env, &run, dir.path()).unwrap();
    let metrics = read_metrics_csv(std::fs::File::open(&files.metrics).unwrap()).unwrap();
    assert_eq!(metrics.len(), run.records.len());
    for (a, b) in metrics.iter().zip(&run.records) {
        assert_eq!(
            (a.seed, a.round, a.low_level_steps),
            (b.seed, b.round, b.low_level_steps)
        );
        assert_eq!(a.mean_return, b.mean_return);
    }
    assert_eq!(
        load_transitions(&files.transitions).unwrap(),
        run.transitions()
    );
    let (model, header) = ParametricModel::load(files.weights.as_ref().unwrap()).unwrap();
    let abworld::harness::Learner::Parametric(original) = &run.learner else {
        panic!()
    };
    assert_eq!(model.params(), original.params());
    assert!(header.vocab.is_some());
    let echoed = ExperimentConfig::load(&files.config).unwrap();
    assert_eq!(echoed, config);
    assert!(std::fs::read_to_string(&files.graph_dot)
        .unwrap()
        .starts_with("digraph"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&files.graph_json).unwrap()).unwrap();
    assert!(!json["nodes"].as_array().unwrap().is_empty());
}

#[test]
fn config_text_and_overrides() {
    let config = ExperimentConfig::from_toml_str(
        "environment = \"craft3\"\nseeds = [1, 2]\nstep_budget = 100\n[mcts]\nnum_simulations = 8\n",
    )
    .unwrap();
    assert_eq!(config.environment, "craft3");
    assert_eq!(config.mcts.num_simulations, 8);
    assert_eq!(
        config.mcts.max_depth,
        ExperimentConfig::default().mcts.max_depth
    );
    assert_eq!(
        ExperimentConfig::from_toml_str(&config.to_toml_string()).unwrap(),
        config
    );
    assert!(ExperimentConfig::from_toml_str("seeds = []").is_err());
    assert!(ExperimentConfig::from_toml_str("unknown_key = 1").is_err());
    assert!(ExperimentConfig::from_toml_str("[planner]\nprob_cutoff = 1.5").is_err());

    let mut c = config.clone();
    std::env::set_var(OUTPUT_DIR_VAR, "/tmp/elsewhere");
    std::env::set_var(SEED_VAR, "9");
    c.apply_env_overrides().unwrap();
    assert_eq!(c.seeds, vec![9]);
    assert_eq!(c.output_dir, std::path::PathBuf::from("/tmp/elsewhere"));
    std::env::set_var(SEED_VAR, "nine");
    assert!(c.apply_env_overrides().is_err());
    std::env::remove_var(SEED_VAR);
    std::env::remove_var(OUTPUT_DIR_VAR);
}
