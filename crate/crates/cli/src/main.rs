//! `socnav`: scenario generation, training, evaluation, ablations, gradient
//! checks and episode replays.

mod svg;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use socnav_core::agent::{navigate_episode, ActionMode, AgentParams};
use socnav_core::eval::report::{ablation_csv, ablation_markdown, metrics_csv, metrics_markdown};
use socnav_core::eval::{
    compute_metrics, evaluate, generate_benchmark, logs_hash, run_ablation, validate_toggles, variant_tag,
    AblationConfig, Toggle,
};
use socnav_core::io::{atomic_write, config_hash};
use socnav_core::semantic::InterpreterConfig;
use socnav_core::train::gradcheck::{run_all, TOLERANCE};
use socnav_core::train::{curves_csv, load_checkpoint, save_checkpoint, train, TrainConfig};
use socnav_core::world::scenario::load_episodes;
use socnav_core::world::{Episode, ScenarioFile, Split};

#[derive(Parser)]
#[command(name = "socnav", version, about = "Human-aware instruction-following navigation in a 2D crowd simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded benchmark file.
    Gen(GenArgs),
    /// Train policy and forecaster; writes checkpoints and loss curves.
    Train(TrainArgs),
    /// Evaluate a checkpoint; writes metrics CSV/markdown and episode logs.
    Eval(EvalArgs),
    /// Train and evaluate ablation variants with matched seeds.
    Ablate(AblateArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Render one episode as SVG plus its JSON log.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value = "seen")]
    split: Split,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training config (JSON); omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of generated seen-split training episodes.
    #[arg(long, default_value_t = 60)]
    n: usize,
    #[arg(long)]
    iterations: Option<usize>,
    /// Ablation toggle applied to the config (repeatable).
    #[arg(long = "toggle")]
    toggles: Vec<Toggle>,
    /// Train on episodes from a benchmark file instead of generating them.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "unseen")]
    split: Split,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    /// Ablation config (JSON); omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the config's seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    split: Option<Split>,
    /// Number of evaluation episodes.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// One variant per occurrence; combine toggles with commas, e.g.
    /// `coll-off,prox-off`. The full model is always included.
    #[arg(long = "toggle")]
    toggles: Vec<String>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random probes per gradient path.
    #[arg(long, default_value_t = 24)]
    probes: usize,
}

#[derive(Args)]
struct ReplayArgs {
    /// Checkpoint directory; without one the geodesic expert is replayed.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value = "unseen")]
    split: Split,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Index of the episode inside the benchmark.
    #[arg(long, default_value_t = 0)]
    episode: usize,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

enum CliError {
    Config(String),
    Runtime(String),
}

type CliResult = Result<(), CliError>;

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn write(path: &Path, contents: &str) -> CliResult {
    atomic_write(path, contents.as_bytes())
        .map_err(|e| runtime_err(format!("cannot write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("invalid config {}: {e}", path.display())))
}

fn interpreter() -> Result<InterpreterConfig, CliError> {
    InterpreterConfig::from_env().map_err(config_err)
}

fn episodes_from(scenario: &Option<PathBuf>, split: Split, n: usize, seed: u64) -> Result<Vec<Episode>, CliError> {
    match scenario {
        Some(path) => {
            if !path.is_file() {
                return Err(config_err(format!("scenario file not found: {}", path.display())));
            }
            load_episodes(path).map_err(config_err)
        }
        None => {
            if n == 0 {
                return Err(config_err("--n must be at least 1"));
            }
            Ok(generate_benchmark(n, split, seed))
        }
    }
}

fn cmd_gen(a: GenArgs) -> CliResult {
    if a.n == 0 {
        return Err(config_err("--n must be at least 1"));
    }
    let hash = config_hash(&json!({"split": a.split, "n": a.n, "seed": a.seed}));
    let episodes = generate_benchmark(a.n, a.split, a.seed);
    let file = ScenarioFile::from_episodes(hash.clone(), &episodes);
    write(&a.out.join(format!("benchmark-{}-{hash}.json", a.split)), &(file.to_json() + "\n"))
}

fn cmd_train(a: TrainArgs) -> CliResult {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(i) = a.iterations {
        cfg.iterations = i;
    }
    validate_toggles(&a.toggles).map_err(config_err)?;
    cfg = socnav_core::eval::apply_toggles(&cfg, &a.toggles);
    cfg.agent.interpreter = interpreter()?;
    cfg.validate().map_err(config_err)?;
    let episodes = episodes_from(&a.scenario, Split::Seen, a.n, cfg.seed)?;
    let episode_ids: Vec<&str> = episodes.iter().map(|e| e.id.as_str()).collect();
    let hash = config_hash(&json!({"train": cfg, "episodes": episode_ids}));
    let outcome = train(&cfg, &episodes, AgentParams::init(cfg.seed)).map_err(runtime_err)?;
    let dir = a.out.join(format!("train-{hash}"));
    save_checkpoint(&dir, &outcome.params, &cfg).map_err(runtime_err)?;
    println!("wrote checkpoint {}", dir.display());
    write(&dir.join("curves.csv"), &curves_csv(&outcome.curves, &format!("config_hash={hash}")))?;
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let (params, mut cfg) = load_checkpoint(&a.checkpoint).map_err(config_err)?;
    cfg.agent.interpreter = interpreter()?;
    let episodes = episodes_from(&a.scenario, a.split, a.n, a.seed)?;
    let tag = "checkpoint";
    let episode_ids: Vec<&str> = episodes.iter().map(|e| e.id.as_str()).collect();
    let hash = config_hash(&json!({"agent": cfg.agent, "seed": a.seed, "episodes": episode_ids,
        "checkpoint": socnav_core::io::sha256_hex(serde_json::to_string(&params).map_err(runtime_err)?.as_bytes())}));
    let logs = evaluate(&params, &cfg.agent, &episodes, a.seed, a.workers);
    let split = a.scenario.as_ref().map(|_| "scenario".to_string()).unwrap_or_else(|| a.split.to_string());
    let report = compute_metrics(&logs, cfg.agent.goal_radius, &split, tag).map_err(runtime_err)?;
    let dir = a.out.join(format!("eval-{hash}"));
    let rows = vec![(a.seed.to_string(), report.clone())];
    write(&dir.join("metrics.csv"), &metrics_csv(&hash, &rows))?;
    write(&dir.join("metrics.md"), &metrics_markdown(&hash, &rows))?;
    let mut lines = format!("{{\"config_hash\":\"{hash}\",\"logs_hash\":\"{}\"}}\n", logs_hash(&logs));
    for l in &logs {
        lines.push_str(&l.to_json_line());
        lines.push('\n');
    }
    write(&dir.join("logs.jsonl"), &lines)?;
    println!(
        "NE {:.3}  SR {:.3}  CR {:.3}  TCR {:.3}  ({} episodes)",
        report.ne, report.sr, report.cr, report.tcr, report.episodes
    );
    Ok(())
}

fn cmd_ablate(a: AblateArgs) -> CliResult {
    let mut cfg: AblationConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => AblationConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seeds = vec![s];
    }
    if let Some(s) = a.split {
        cfg.eval_split = s;
    }
    if let Some(n) = a.n {
        cfg.eval_episodes = n;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    cfg.train.agent.interpreter = interpreter()?;
    cfg.train.validate().map_err(config_err)?;
    if cfg.seeds.is_empty() || cfg.eval_episodes == 0 || cfg.train_episodes == 0 {
        return Err(config_err("ablation needs at least one seed, one training and one evaluation episode"));
    }
    let mut variants: Vec<Vec<Toggle>> = vec![Vec::new()];
    for spec in &a.toggles {
        let set: Vec<Toggle> =
            spec.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>().map_err(config_err)?;
        validate_toggles(&set).map_err(config_err)?;
        if !variants.iter().any(|v| variant_tag(v) == variant_tag(&set)) {
            variants.push(set);
        }
    }
    let table = run_ablation(&cfg, &variants).map_err(runtime_err)?;
    let dir = a.out.join(format!("ablate-{}", table.config_hash));
    write(&dir.join("ablation.csv"), &ablation_csv(&table))?;
    write(&dir.join("ablation.md"), &ablation_markdown(&table))?;
    write(&dir.join("ablation.json"), &(serde_json::to_string_pretty(&table).map_err(runtime_err)? + "\n"))?;
    print!("{}", ablation_markdown(&table));
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> CliResult {
    if a.probes == 0 {
        return Err(config_err("--probes must be at least 1"));
    }
    let r = run_all(a.seed, a.probes);
    for (name, err) in [("forecast", r.forecast), ("fuse", r.fuse), ("score", r.score)] {
        let verdict = if err < TOLERANCE { "ok" } else { "FAIL" };
        println!("{name:<9} max relative error {err:.3e}  {verdict}");
    }
    if r.passes() {
        Ok(())
    } else {
        Err(runtime_err(format!("gradient check exceeded tolerance {TOLERANCE:e}")))
    }
}

fn cmd_replay(a: ReplayArgs) -> CliResult {
    let (params, cfg, mode) = match &a.checkpoint {
        Some(dir) => {
            let (p, c) = load_checkpoint(dir).map_err(config_err)?;
            (p, c, ActionMode::Greedy)
        }
        None => (AgentParams::init(a.seed), TrainConfig::default(), ActionMode::Expert),
    };
    let mut agent = cfg.agent.clone();
    agent.interpreter = interpreter()?;
    let episodes = episodes_from(&a.scenario, a.split, a.episode + 1, a.seed)?;
    let episode = episodes
        .get(a.episode)
        .ok_or_else(|| config_err(format!("episode index {} out of range ({} episodes)", a.episode, episodes.len())))?;
    let log = navigate_episode(episode, &params, &agent, mode, a.seed);
    let stem = format!("replay-{}-{}", episode.id, &log.hash[..16]);
    write(&a.out.join(format!("{stem}.svg")), &svg::render(episode, &log, agent.dt))?;
    write(&a.out.join(format!("{stem}.json")), &(serde_json::to_string_pretty(&log).map_err(runtime_err)? + "\n"))?;
    println!(
        "{}: {:?} after {} steps, final distance {:.2} m, {} collisions",
        episode.id,
        log.termination,
        log.steps.len(),
        log.final_distance(),
        log.collision_count()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
