use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::metrics::{write_metrics_csv, write_timing_csv};
use super::train::{Learner, SeedRun};
use super::HarnessError;
use crate::craft::CraftEnv;
use crate::plan::{extract_world_graph, ImaginedGraph};
use crate::worldmodel::persist::save_transitions;
use crate::worldmodel::TransitionModel;

/// Threshold and size cap of exported world graphs.
pub const GRAPH_THRESHOLD: f64 = 0.1;
pub const GRAPH_MAX_NODES: usize = 200;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExportedFiles {
    pub metrics: PathBuf,
    pub timing: PathBuf,
    pub transitions: PathBuf,
    pub weights: Option<PathBuf>,
    pub config: PathBuf,
    pub graph_dot: PathBuf,
    pub graph_json: PathBuf,
}

/// Writes the world graph of `model` from the environment's initial abstract
/// state as DOT and JSON.
pub fn export_graph(
    env: &CraftEnv,
    model: &dyn TransitionModel,
    behaviour_items: usize,
    dot_path: &Path,
    json_path: &Path,
) -> Result<(), HarnessError> {
    let vocab = &env.config().vocab;
    let graph = ImaginedGraph {
        model,
        num_attributes: vocab.num_attributes(),
        behaviour_items,
    };
    let root = env.map_m(&env.reset(0));
    let world = extract_world_graph(&graph, &root, GRAPH_THRESHOLD, GRAPH_MAX_NODES)?;
    fs::write(dot_path, world.to_dot(vocab))?;
    fs::write(
        json_path,
        serde_json::to_string_pretty(&world.to_json(vocab)).expect("json value"),
    )?;
    Ok(())
}

/// Writes metrics, timings, the transition log, weights, the config echo
/// and the final world graph of one seed into `dir`.
pub fn export_run(
    config: &ExperimentConfig,
    env: &CraftEnv,
    run: &SeedRun,
    dir: &Path,
) -> Result<ExportedFiles, HarnessError> {
    fs::create_dir_all(dir)?;
    let files = ExportedFiles {
        metrics: dir.join("metrics.csv"),
        timing: dir.join("timing.csv"),
        transitions: dir.join("transitions.jsonl"),
        weights: match run.learner {
            Learner::Nonparametric => None,
            _ => Some(dir.join("model.abwm")),
        },
        config: dir.join("config.toml"),
        graph_dot: dir.join("world_graph.dot"),
        graph_json: dir.join("world_graph.json"),
    };
    write_metrics_csv(fs::File::create(&files.metrics)?, &run.records)?;
    let timing: Vec<_> = run
        .records
        .iter()
        .zip(&run.wall_clock)
        .map(|(r, d)| (r.seed, r.round, *d))
        .collect();
    write_timing_csv(fs::File::create(&files.timing)?, &timing)?;
    save_transitions(&files.transitions, run.transitions())?;
    let vocab = Some(&env.config().vocab);
    match (&run.learner, &files.weights) {
        (Learner::Parametric(m), Some(path)) => m.save(path, vocab)?,
        (Learner::Generative(m), Some(path)) => m.save(path, vocab)?,
        _ => {}
    }
    fs::write(&files.config, config.to_toml_string())?;
    export_graph(
        env,
        run.learner.imaginer(&run.counts),
        config.abmdp.behaviour_items,
        &files.graph_dot,
        &files.graph_json,
    )?;
    Ok(files)
}
