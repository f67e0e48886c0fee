//! `semnav` command-line entry point.

mod plots;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use semnav::dataset::{Dataset, GraphSpec, SceneSplit};
use semnav::env::{generate_scenes, RoomType, SceneGenParams};
use semnav::evaluator::{self, ablation_csv, ablation_suite, Agent, AblationPlan, ReportRow, SplitSpec};
use semnav::graph::{generate_corpus, CooccurrencePrior, KnowledgeGraph, ObjectSplit, RelationCounts, Vocabulary, DEFAULT_THRESHOLD};
use semnav::policy::Policy;
use semnav::trainer::{self, metrics_csv, MetricsRow, TrainConfig, TrainSetup};

const THREADS_VAR: &str = "SEMNAV_THREADS";
const ABLATION_SEEDS: u64 = 3;

#[derive(Parser)]
#[command(name = "semnav", version, about = "Knowledge-graph semantic navigation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a relationship corpus from a vocabulary and placement prior.
    GenCorpus {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Generate scene files for one room type.
    GenScenes {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "kitchen")]
        room_type: RoomType,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        count: usize,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Threshold a corpus into a knowledge graph.
    BuildGraph {
        corpus: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: u64,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Train one agent and write checkpoints and validation metrics.
    Train(RunArgs),
    /// Evaluate a checkpoint against the random baseline.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// `seen-known`, `seen-novel`, `unseen-known` or `unseen-novel`;
        /// all four when omitted.
        #[arg(long)]
        split: Option<String>,
    },
    /// Train and evaluate the graph ablation grid over three seeds.
    Ablate(RunArgs),
    /// Print a graph variant with node degrees and edges.
    InspectGraph {
        #[command(flatten)]
        run: RunArgs,
        /// Build from this corpus instead of the desk corpus.
        corpus: Option<PathBuf>,
    },
    /// Aggregate metrics CSVs from several seeds into band data and charts.
    ExportPlots {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Vocabulary file; the built-in desk vocabulary when omitted.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Placement prior file; the built-in desk prior when omitted.
    #[arg(long)]
    prior: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Total training frames.
    #[arg(long)]
    frames: Option<u64>,
    #[arg(long)]
    room_type: Option<RoomType>,
    #[arg(long, conflicts_with = "no_stop")]
    with_stop: bool,
    #[arg(long)]
    no_stop: bool,
    /// real, dropped:objects:F, dropped:relations:F, random or dense.
    #[arg(long)]
    graph: Option<GraphSpec>,
    /// Any other config key, as `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

impl RunArgs {
    /// Defaults, then the config file, then `--set`, then the named flags.
    fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects key=value, got '{kv}'"))?;
            c.set(k.trim(), v)?;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(w) = self.workers {
            c.workers = w;
        }
        if let Some(f) = self.frames {
            c.total_frames = f;
        }
        if let Some(r) = self.room_type {
            c.room_type = r;
        }
        if self.with_stop {
            c.with_stop = true;
        }
        if self.no_stop {
            c.with_stop = false;
        }
        if let Some(g) = self.graph {
            c.graph = g;
        }
        if let Some(cap) = thread_cap()? {
            c.workers = c.workers.min(cap);
        }
        c.validate()?;
        Ok(c)
    }

    fn stop_flag(&self) -> Option<bool> {
        match (self.with_stop, self.no_stop) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }
}

fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| anyhow!("{THREADS_VAR}='{v}' is not a positive integer"))?;
            if n == 0 {
                bail!("{THREADS_VAR} must be positive");
            }
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

/// Short hash of the config text without its seed line, so seeds of one
/// setting share a prefix.
fn config_hash(c: &TrainConfig) -> String {
    let text: String = c
        .to_text()
        .lines()
        .filter(|l| !l.trim_start().starts_with("seed"))
        .map(|l| format!("{l}\n"))
        .collect();
    Sha256::digest(text.as_bytes())
        .iter()
        .take(6)
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn run_name(c: &TrainConfig) -> String {
    format!("{}-{}-seed{}", c.room_type, config_hash(c), c.seed)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_vocab(path: Option<&Path>) -> Result<Vocabulary> {
    Ok(match path {
        Some(p) => Vocabulary::load(p)?,
        None => Vocabulary::desk(),
    })
}

fn load_data(d: &DataArgs) -> Result<(Vocabulary, CooccurrencePrior)> {
    let vocab = load_vocab(d.vocab.as_deref())?;
    let prior = match &d.prior {
        Some(p) => CooccurrencePrior::load(p, &vocab)?,
        None => CooccurrencePrior::desk(&vocab),
    };
    Ok((vocab, prior))
}

fn parse_split(s: &str) -> Result<(SceneSplit, ObjectSplit)> {
    let (a, b) = s
        .split_once(['-', ':', '/'])
        .ok_or_else(|| anyhow!("split '{s}' should look like seen-known"))?;
    let scene: SceneSplit = a.parse()?;
    if scene == SceneSplit::Validation {
        bail!("split '{s}': scene split must be seen or unseen");
    }
    Ok((scene, b.parse()?))
}

fn gen_corpus(data: &DataArgs, seed: u64, out: &Path) -> Result<()> {
    let (vocab, prior) = load_data(data).context("stage load")?;
    let counts = generate_corpus(&vocab, &prior, seed);
    let path = out.join("corpus.tsv");
    write(&path, &counts.to_tsv(&vocab)).context("stage write")?;
    println!("{} relation records -> {}", counts.len(), path.display());
    Ok(())
}

fn gen_scenes(data: &DataArgs, room: RoomType, seed: u64, count: usize, out: &Path) -> Result<()> {
    let (vocab, prior) = load_data(data).context("stage load")?;
    let scenes = generate_scenes(room, &SceneGenParams::for_room(room), &vocab, &prior, seed, count)
        .context("stage generate")?;
    let dir = out.join("scenes");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for s in &scenes {
        s.save(&dir.join(format!("{}.scene", s.id())), &vocab).context("stage write")?;
    }
    println!("{} {room} scenes -> {}", scenes.len(), dir.display());
    Ok(())
}

fn build_graph(corpus: &Path, vocab: Option<&Path>, threshold: u64, out: &Path) -> Result<()> {
    let vocab = load_vocab(vocab).context("stage load")?;
    let text = fs::read_to_string(corpus).with_context(|| format!("stage load: reading {}", corpus.display()))?;
    let (counts, report) = RelationCounts::ingest(&text, &vocab, &corpus.display().to_string()).context("stage ingest")?;
    if report.skipped_unknown > 0 {
        eprintln!(
            "skipped {} of {} records naming unknown categories: {:?}",
            report.skipped_unknown, report.records, report.unknown_names
        );
    }
    let graph = KnowledgeGraph::build(&counts, &vocab, threshold).context("stage build")?;
    let path = out.join("graph.txt");
    write(&path, &graph.to_text()).context("stage write")?;
    println!("{} nodes, {} edges -> {}", graph.len(), graph.num_edges(), path.display());
    Ok(())
}

fn train(args: &RunArgs) -> Result<()> {
    let config = args.resolve().context("stage config")?;
    let dir = args.out.join(run_name(&config));
    write(&dir.join("config.txt"), &config.to_text()).context("stage write")?;
    let outcome = trainer::train(&config).context("stage train")?;
    write(&dir.join("metrics.csv"), &metrics_csv(&outcome.metrics)).context("stage write")?;
    outcome.initial.save(&dir.join("initial.ckpt")).context("stage write")?;
    outcome.final_policy.save(&dir.join("final.ckpt")).context("stage write")?;
    outcome.best_policy.save(&dir.join("best.ckpt")).context("stage write")?;
    let best = outcome
        .best_val_spl
        .map(|v| format!("{v:.3}"))
        .unwrap_or_else(|| "n/a".into());
    println!(
        "{}: {} frames, {} updates, {}/{} training successes, best val SPL {best}",
        dir.display(),
        outcome.frames,
        outcome.updates,
        outcome.train_successes,
        outcome.train_episodes
    );
    Ok(())
}

fn eval(args: &RunArgs, checkpoint: &Path, split: Option<&str>) -> Result<()> {
    let mut config = args.resolve().context("stage config")?;
    let split = split.map(parse_split).transpose().context("stage config")?;
    let policy = Policy::load(checkpoint).context("stage load")?;
    let ck_stop = policy.arch.with_stop();
    match args.stop_flag() {
        Some(s) if s != ck_stop => bail!(
            "stage config: checkpoint was trained {} the stop action",
            if ck_stop { "with" } else { "without" }
        ),
        _ => config.with_stop = ck_stop,
    }
    let data = Dataset::desk(config.data_config()).context("stage data")?;
    if data.vocab.len() != policy.arch.num_categories {
        bail!(
            "stage load: checkpoint has {} categories, dataset has {}",
            policy.arch.num_categories,
            data.vocab.len()
        );
    }
    let dir = args.out.join(run_name(&config));
    let room = config.room_type;
    let mode = config.eval_mode;
    let splits: Vec<(SceneSplit, ObjectSplit)> = match split {
        Some(s) => vec![s],
        None => vec![
            (SceneSplit::Seen, ObjectSplit::Known),
            (SceneSplit::Seen, ObjectSplit::Novel),
            (SceneSplit::Unseen, ObjectSplit::Known),
            (SceneSplit::Unseen, ObjectSplit::Novel),
        ],
    };
    let mut rows = Vec::new();
    for (scene_split, object_split) in splits {
        let spec = SplitSpec {
            room_type: room,
            scene_split,
            object_split,
            episodes_per_scene: config.episodes_per_scene,
        };
        for agent in [Agent::Random, Agent::Network(&policy, mode)] {
            let res = evaluator::evaluate_split(agent, &data, &spec, config.with_stop, config.seed).context("stage eval")?;
            if let Agent::Network(..) = agent {
                let name = format!("episodes-{}-{}.tsv", scene_split.as_str(), object_split.as_str());
                write(&dir.join(name), &evaluator::episode_log(&res.records, &data)).context("stage write")?;
            }
            if !res.records.is_empty() {
                rows.push(ReportRow {
                    room_type: room.as_str().to_string(),
                    scene_split,
                    object_split,
                    method: agent.name().to_string(),
                    spl_pct: 100.0 * evaluator::spl(&res.records)?,
                    success_pct: 100.0 * evaluator::success_rate(&res.records)?,
                });
            }
        }
    }
    let report = evaluator::report_csv(&rows);
    write(&dir.join("config.txt"), &config.to_text()).context("stage write")?;
    write(&dir.join("report.csv"), &report).context("stage write")?;
    print!("{report}");
    Ok(())
}

fn ablate(args: &RunArgs) -> Result<()> {
    let base = args.resolve().context("stage config")?;
    let data = Dataset::desk(base.data_config()).context("stage data")?;
    let seeds: Vec<u64> = (base.seed..base.seed + ABLATION_SEEDS).collect();
    let plan = AblationPlan::full(seeds, base.episodes_per_scene);
    let cells = ablation_suite(&data, base.room_type, &plan, base.with_stop, base.eval_mode, |graph, seed| {
        let config = TrainConfig {
            graph,
            seed,
            use_graph: true,
            ..base.clone()
        };
        let dir = args.out.join(run_name(&config));
        let best = dir.join("best.ckpt");
        let text = config.to_text();
        if fs::read_to_string(dir.join("config.txt")).is_ok_and(|t| t == text) && best.exists() {
            eprintln!("reusing {}", dir.display());
            return Policy::load(&best);
        }
        eprintln!("training {graph} seed {seed}");
        let outcome = trainer::train_with(&config, &TrainSetup::from_dataset(&config, &data)?)?;
        let io = |e: std::io::Error| semnav::Error::Io {
            path: dir.clone(),
            source: e,
        };
        fs::create_dir_all(&dir).map_err(io)?;
        fs::write(dir.join("config.txt"), &text).map_err(io)?;
        fs::write(dir.join("metrics.csv"), metrics_csv(&outcome.metrics)).map_err(io)?;
        outcome.best_policy.save(&best)?;
        Ok(outcome.best_policy)
    })
    .context("stage ablate")?;
    let csv = ablation_csv(&cells);
    let path = args
        .out
        .join(format!("ablation-{}-{}-seed{}", base.room_type, config_hash(&base), base.seed))
        .join("ablation.csv");
    write(&path, &csv).context("stage write")?;
    print!("{csv}");
    Ok(())
}

fn inspect_graph(args: &RunArgs, corpus: Option<&Path>) -> Result<()> {
    let config = args.resolve().context("stage config")?;
    let graph = match corpus {
        Some(p) => {
            let vocab = Vocabulary::desk();
            let text = fs::read_to_string(p).with_context(|| format!("stage load: reading {}", p.display()))?;
            let (counts, _) = RelationCounts::ingest(&text, &vocab, &p.display().to_string()).context("stage ingest")?;
            KnowledgeGraph::build(&counts, &vocab, DEFAULT_THRESHOLD).context("stage build")?
        }
        None => {
            let data = Dataset::desk(config.data_config()).context("stage data")?;
            data.graph_for(config.graph, config.room_type, config.seed).context("stage build")?
        }
    };
    print!("{}", graph.to_text());
    println!("# density {:.4}", graph.density());
    Ok(())
}

fn export_plots(metrics: &[PathBuf], out: &Path) -> Result<()> {
    let runs = metrics
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(trainer::parse_metrics_csv(&text, &p.display().to_string())?)
        })
        .collect::<Result<Vec<_>>>()
        .context("stage load")?;
    type Metric = fn(&MetricsRow) -> f64;
    let series: [(&str, Metric); 2] = [("success_rate", |r| r.success_rate), ("spl", |r| r.spl)];
    for (name, metric) in series {
        let band = trainer::aggregate_seeds(&runs, metric).context("stage aggregate")?;
        write(&out.join(format!("{name}.tsv")), &plots::band_tsv(&band)).context("stage write")?;
        write(&out.join(format!("{name}.svg")), &plots::band_svg(name, &band)).context("stage write")?;
    }
    println!("{} runs -> {}", runs.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCorpus { data, seed, out } => gen_corpus(&data, seed, &out),
        Command::GenScenes {
            data,
            room_type,
            seed,
            count,
            out,
        } => gen_scenes(&data, room_type, seed, count, &out),
        Command::BuildGraph {
            corpus,
            vocab,
            threshold,
            out,
        } => build_graph(&corpus, vocab.as_deref(), threshold, &out),
        Command::Train(args) => train(&args),
        Command::Eval { run, checkpoint, split } => eval(&run, &checkpoint, split.as_deref()),
        Command::Ablate(args) => ablate(&args),
        Command::InspectGraph { run, corpus } => inspect_graph(&run, corpus.as_deref()),
        Command::ExportPlots { metrics, out } => export_plots(&metrics, &out),
    }
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
