use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use abworld::craft::CraftEnv;
use abworld::harness::{
    ablation_explore, ablation_gen_vs_disc, evaluate, export_graph, export_run, train_seed,
    write_gen_disc_csv, ExperimentConfig, ExplorerKind, ModelKind,
};
use abworld::worldmodel::persist::{load_transitions, WeightsHeader};
use abworld::worldmodel::{
    GenerativeModel, ParametricModel, TransitionCounts, TransitionModel, DEFAULT_EPSILON,
};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "abworld",
    version,
    about = "Train and evaluate item-attribute world models on crafting gridworlds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect, fit and evaluate for every seed, then export each run.
    Train(Common),
    /// Evaluate saved weights or a transition log by plan-and-execute.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: ModelSource,
    },
    /// Compare discriminative and generative models on expert data.
    AblateGenDisc {
        #[command(flatten)]
        common: Common,
        /// Expert dataset sizes, in abstract transitions.
        #[arg(long, value_delimiter = ',', default_values_t = [50usize, 200, 800, 1600])]
        sizes: Vec<usize>,
    },
    /// Compare tree-search and random exploration coverage.
    AblateExplore(Common),
    /// Write the world graph of saved weights or a transition log.
    ExportGraph {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        source: ModelSource,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    environment: Option<String>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    step_budget: Option<u64>,
    #[arg(long, value_enum)]
    explorer: Option<Explorer>,
    #[arg(long, value_enum)]
    model: Option<Model>,
    #[arg(long)]
    behaviour_items: Option<usize>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long)]
    stop_at_success: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ModelSource {
    /// Weights file written by `train`.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Transition log; the model is the smoothed counts.
    #[arg(long)]
    transitions: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Explorer {
    Mcts,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Parametric,
    Nonparametric,
    Generative,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        config.apply_env_overrides()?;
        if let Some(v) = &self.environment {
            config.environment = v.clone();
        }
        if let Some(v) = &self.seeds {
            config.seeds = v.clone();
        }
        if let Some(v) = self.step_budget {
            config.step_budget = v;
        }
        if let Some(v) = self.explorer {
            config.explorer = match v {
                Explorer::Mcts => ExplorerKind::Mcts,
                Explorer::Random => ExplorerKind::Random,
            };
        }
        if let Some(v) = self.model {
            config.model = match v {
                Model::Parametric => ModelKind::Parametric,
                Model::Nonparametric => ModelKind::Nonparametric,
                Model::Generative => ModelKind::Generative,
            };
        }
        if let Some(v) = self.behaviour_items {
            config.abmdp.behaviour_items = v;
        }
        if let Some(v) = self.k {
            config.abmdp.k = v;
        }
        if let Some(v) = self.eval_episodes {
            config.eval_episodes = v;
        }
        if self.stop_at_success.is_some() {
            config.stop_at_success = self.stop_at_success;
        }
        if let Some(v) = &self.output_dir {
            config.output_dir = v.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

enum Loaded {
    Parametric(ParametricModel),
    Generative(GenerativeModel),
    Counts(TransitionCounts),
}

impl Loaded {
    fn read(source: &ModelSource, env: &CraftEnv) -> Result<Self> {
        if let Some(path) = &source.transitions {
            let data =
                load_transitions(path).with_context(|| format!("reading {}", path.display()))?;
            return Ok(Loaded::Counts(TransitionCounts::from_dataset(
                data,
                DEFAULT_EPSILON,
            )));
        }
        let path = source.weights.as_ref().expect("clap enforces one source");
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let check = |header: &WeightsHeader| -> Result<()> {
            if let Some(vocab) = &header.vocab {
                if vocab != &env.config().vocab {
                    bail!("{} was trained on a different vocabulary", path.display());
                }
            }
            Ok(())
        };
        if let Ok((m, header)) = ParametricModel::from_bytes(&bytes) {
            check(&header)?;
            return Ok(Loaded::Parametric(m));
        }
        let (m, header) = GenerativeModel::from_bytes(&bytes)
            .with_context(|| format!("decoding {}", path.display()))?;
        check(&header)?;
        Ok(Loaded::Generative(m))
    }

    fn model(&self) -> &dyn TransitionModel {
        match self {
            Loaded::Parametric(m) => m,
            Loaded::Generative(m) => m,
            Loaded::Counts(c) => c,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let config = common.resolve()?;
            let env = CraftEnv::new(config.env_config()?);
            for &seed in &config.seeds {
                let run = train_seed(&config, &env, seed)?;
                let dir = config.output_dir.join(format!("seed-{seed}"));
                export_run(&config, &env, &run, &dir)?;
                let last = run.records.last();
                println!(
                    "seed {seed}: {} steps, success {}, {} unique transitions -> {}",
                    run.low_level_steps,
                    last.map_or("n/a".into(), |r| format!(
                        "{:.3} ± {:.3}",
                        r.mean_return, r.ci_half_width
                    )),
                    run.unique_valid.len(),
                    dir.display()
                );
            }
        }
        Command::Eval { common, source } => {
            let config = common.resolve()?;
            let env = CraftEnv::new(config.env_config()?);
            let loaded = Loaded::read(&source, &env)?;
            let e = evaluate(
                &env,
                loaded.model(),
                &config.planner,
                &config.abmdp,
                config.eval_episodes,
                config.eval_seed,
            )?;
            println!(
                "success {:.3} ± {:.3} over {} episodes",
                e.mean, e.ci_half_width, e.episodes
            );
        }
        Command::AblateGenDisc { common, sizes } => {
            let config = common.resolve()?;
            if sizes.is_empty() {
                bail!("at least one dataset size is required");
            }
            let rows = ablation_gen_vs_disc(&config, &sizes)?;
            fs::create_dir_all(&config.output_dir)?;
            let path = config.output_dir.join("gen_vs_disc.csv");
            write_gen_disc_csv(fs::File::create(&path)?, &rows)?;
            for r in &rows {
                println!(
                    "seed {} size {}: discriminative {:.3}, generative {:.3}",
                    r.seed, r.dataset_size, r.discriminative_success, r.generative_success
                );
            }
            println!("wrote {}", path.display());
        }
        Command::AblateExplore(common) => {
            let config = common.resolve()?;
            let rows = ablation_explore(&config)?;
            fs::create_dir_all(&config.output_dir)?;
            let path = config.output_dir.join("explore.csv");
            let mut writer = csv::Writer::from_path(&path)?;
            for r in &rows {
                writer.serialize(r)?;
                println!(
                    "seed {}: mcts {}, random {}",
                    r.seed, r.mcts_unique, r.random_unique
                );
            }
            writer.flush()?;
            println!("wrote {}", path.display());
        }
        Command::ExportGraph { common, source } => {
            let config = common.resolve()?;
            let env = CraftEnv::new(config.env_config()?);
            let loaded = Loaded::read(&source, &env)?;
            fs::create_dir_all(&config.output_dir)?;
            let dot = config.output_dir.join("world_graph.dot");
            let json = config.output_dir.join("world_graph.json");
            export_graph(
                &env,
                loaded.model(),
                config.abmdp.behaviour_items,
                &dot,
                &json,
            )?;
            println!("wrote {} and {}", dot.display(), json.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
