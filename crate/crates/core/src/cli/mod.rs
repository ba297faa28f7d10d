//! The `metanav` command line.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::analysis::{
    activation_map_from_query, activation_map_from_trajectories, compare, export_map, parse_stats_csv,
    stats_csv, summarize, theme_share, trajectory_csv, AnalysisError,
};
use crate::env::{Environment, Theme};
use crate::maze::{load_map, MapError, MazeEnv};
use crate::meta::{
    handcrafted_selector, meta_metadata, run_hierarchical, train_meta, MetaConfig, MetaError, MetaPolicy,
    OptionPolicy, OptionSelector, ScriptedOption,
};
use crate::nn::{read_checkpoint, save_checkpoint_with, Checkpoint, NnError};
use crate::rl::{evaluate, train_low_level, EpisodeStats, GreedyPolicy, Policy, RlError, TrainingLog};
use crate::terrain::{load_track, TerrainEnv, TrackError};

pub use config::{ConfigError, EnvSpec, ExperimentConfig, Mode, SEED_ENV_VAR};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: ConfigError },
    #[error(transparent)]
    Override(ConfigError),
    #[error("{path}: {source}")]
    Map { path: PathBuf, source: MapError },
    #[error("{path}: {source}")]
    Track { path: PathBuf, source: TrackError },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Parser, Debug)]
#[command(name = "metanav", version, about = "Hierarchical DQN navigation: train, evaluate and analyse")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a low-level DQN policy over primitive actions.
    TrainLow(TrainArgs),
    /// Train a meta-policy over frozen options.
    TrainMeta(TrainArgs),
    /// Greedy evaluation of a policy, meta-policy, scripted option or the handcrafted selector.
    Eval(EvalArgs),
    /// Policy-activation map of a meta-policy.
    Map(MapArgs),
    /// Table of several evaluation runs, sorted by mean return.
    Compare(CompareArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct EnvArgs {
    /// Experiment config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Maze map file (overrides the config).
    #[arg(long, conflicts_with = "track")]
    pub map: Option<PathBuf>,
    /// Terrain track file (overrides the config).
    #[arg(long)]
    pub track: Option<PathBuf>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub env: EnvArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    /// Low-level or meta checkpoint.
    #[arg(long, conflicts_with_all = ["scripted", "handcrafted"])]
    pub policy: Option<PathBuf>,
    /// Built-in option run as a flat policy.
    #[arg(long, conflicts_with = "handcrafted")]
    pub scripted: Option<String>,
    /// Theme-rule selector over the config's options.
    #[arg(long)]
    pub handcrafted: bool,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Label used in the summary line.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Args, Debug)]
pub struct MapArgs {
    #[command(flatten)]
    pub env: EnvArgs,
    /// Meta checkpoint.
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Build the map from greedy rollouts instead of querying every cell.
    #[arg(long)]
    pub from_trajectories: bool,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// `name=stats.csv`, at least two.
    #[arg(long = "entry", required = true, num_args = 1)]
    pub entries: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses argv and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Config from `--config` (if any) plus flag overrides and `METANAV_SEED`.
fn load_config(args: &EnvArgs, mode: Mode) -> Result<ExperimentConfig, CliError> {
    let (mut cfg, lines) = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
            let cfg = ExperimentConfig::parse(&text, &base).map_err(|source| CliError::Config {
                path: path.clone(),
                source,
            })?;
            (cfg, text.lines().count())
        }
        None => (ExperimentConfig::default(), 0),
    };
    if let Some(m) = &args.map {
        cfg.env = Some(EnvSpec::Maze(m.clone()));
    }
    if let Some(t) = &args.track {
        cfg.env = Some(EnvSpec::Terrain(t.clone()));
    }
    if let Some(o) = &args.out {
        cfg.output_dir = Some(o.clone());
    }
    cfg.apply_seed_override(std::env::var(SEED_ENV_VAR).ok().as_deref())
        .map_err(CliError::Override)?;
    cfg.mode = Some(mode);
    // absolute paths so resolved_config.cfg can be re-run from anywhere
    let abs = |p: &Path| std::path::absolute(p).map_err(io_err(p));
    cfg.env = match cfg.env.take() {
        Some(EnvSpec::Maze(p)) => Some(EnvSpec::Maze(abs(&p)?)),
        Some(EnvSpec::Terrain(p)) => Some(EnvSpec::Terrain(abs(&p)?)),
        None => None,
    };
    if let Some(o) = cfg.output_dir.take() {
        cfg.output_dir = Some(abs(&o)?);
    }
    for id in &mut cfg.options {
        if id.parse::<ScriptedOption>().is_err() {
            *id = abs(Path::new(id.as_str()))?.to_string_lossy().into_owned();
        }
    }
    cfg.require(mode, lines).map_err(|source| CliError::Config {
        path: args.config.clone().unwrap_or_else(|| PathBuf::from("<flags>")),
        source,
    })?;
    Ok(cfg)
}

fn output_dir(cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

pub enum LoadedEnv {
    Maze(MazeEnv),
    Terrain(TerrainEnv),
}

pub fn load_env(cfg: &ExperimentConfig) -> Result<LoadedEnv, CliError> {
    match cfg.env.as_ref().ok_or_else(|| CliError::Usage("no environment given".into()))? {
        EnvSpec::Maze(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            let world = load_map(&text).map_err(|source| CliError::Map {
                path: p.clone(),
                source,
            })?;
            Ok(LoadedEnv::Maze(MazeEnv::new(world, cfg.max_steps)))
        }
        EnvSpec::Terrain(p) => {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            let track = load_track(&text).map_err(|source| CliError::Track {
                path: p.clone(),
                source,
            })?;
            Ok(LoadedEnv::Terrain(TerrainEnv::new(track, cfg.max_steps)))
        }
    }
}

/// Runs `$body` with `$env` bound to the concrete environment.
macro_rules! with_env {
    ($loaded:expr, $env:ident => $body:expr) => {
        match $loaded {
            LoadedEnv::Maze($env) => $body,
            LoadedEnv::Terrain($env) => $body,
        }
    };
}

fn resolve_options(ids: &[String]) -> Result<Vec<OptionPolicy>, CliError> {
    Ok(ids
        .iter()
        .map(|id| OptionPolicy::resolve(id, Path::new(".")))
        .collect::<Result<Vec<_>, _>>()?)
}

fn save_training(dir: &Path, ckpt: &Checkpoint, log: &TrainingLog) -> Result<(), CliError> {
    let path = dir.join("policy.ckpt");
    save_checkpoint_with(&path, &ckpt.params, &ckpt.adam, &ckpt.extra)?;
    let log_path = dir.join("training_log.csv");
    log.write_csv(&log_path).map_err(io_err(&log_path))?;
    println!(
        "{} episodes, {} primitive steps -> {}",
        log.episodes.len(),
        log.episodes.iter().map(|e| e.steps).sum::<usize>(),
        path.display()
    );
    Ok(())
}

fn write_resolved(dir: &Path, cfg: &ExperimentConfig) -> Result<(), CliError> {
    write(&dir.join("resolved_config.cfg"), cfg.to_text())
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::TrainLow(a) => {
            let cfg = load_config(&a.env, Mode::TrainLow)?;
            let dir = output_dir(&cfg)?;
            write_resolved(&dir, &cfg)?;
            let (ckpt, log) = with_env!(load_env(&cfg)?, env => train_low_level(&env, &cfg.train)?);
            save_training(&dir, &ckpt, &log)
        }
        Command::TrainMeta(a) => {
            let cfg = load_config(&a.env, Mode::TrainMeta)?;
            let dir = output_dir(&cfg)?;
            write_resolved(&dir, &cfg)?;
            let meta = MetaConfig {
                train: cfg.train.clone(),
                horizon: cfg.horizon,
                options: resolve_options(&cfg.options)?,
            };
            let (ckpt, log) = with_env!(load_env(&cfg)?, env => train_meta(&env, &meta)?);
            save_training(&dir, &ckpt, &log)
        }
        Command::Eval(a) => eval_command(a),
        Command::Map(a) => map_command(a),
        Command::Compare(a) => compare_command(a),
    }
}

enum Evaluated {
    Flat(Box<dyn Policy>),
    Hierarchical {
        selector: Box<dyn OptionSelector>,
        options: Vec<OptionPolicy>,
        horizon: usize,
    },
}

fn run_eval<E: Environment>(
    env: &E,
    what: &Evaluated,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeStats>, CliError> {
    Ok(match what {
        Evaluated::Flat(p) => evaluate(p.as_ref(), env, episodes, seed)?,
        Evaluated::Hierarchical {
            selector,
            options,
            horizon,
        } => run_hierarchical(env, selector.as_ref(), options, *horizon, episodes, seed)?,
    })
}

/// Meta checkpoints carry their option list; anything else is a flat policy.
fn load_policy(path: &Path) -> Result<Evaluated, CliError> {
    let ckpt = read_checkpoint(path)?;
    match meta_metadata(&ckpt) {
        Ok((ids, horizon)) => Ok(Evaluated::Hierarchical {
            selector: Box::new(MetaPolicy { params: ckpt.params }),
            options: resolve_options(&ids)?,
            horizon,
        }),
        Err(_) => Ok(Evaluated::Flat(Box::new(GreedyPolicy::new(ckpt.params)))),
    }
}

fn eval_command(a: EvalArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&a.env, Mode::Eval)?;
    if let Some(n) = a.episodes {
        cfg.episodes = n;
    }
    if let Some(s) = a.seed {
        cfg.eval_seed = Some(s);
    }
    let (what, default_name) = if let Some(p) = &a.policy {
        (load_policy(p)?, p.display().to_string())
    } else if let Some(s) = &a.scripted {
        let s: ScriptedOption = s.parse()?;
        (Evaluated::Flat(Box::new(OptionPolicy::Scripted(s))), s.name().to_string())
    } else if a.handcrafted {
        if cfg.options.is_empty() {
            return Err(CliError::Usage("--handcrafted needs [meta] options in the config".into()));
        }
        (
            Evaluated::Hierarchical {
                selector: Box::new(handcrafted_selector(cfg.rule.clone())?),
                options: resolve_options(&cfg.options)?,
                horizon: cfg.horizon,
            },
            "handcrafted".to_string(),
        )
    } else {
        return Err(CliError::Usage("one of --policy, --scripted or --handcrafted is required".into()));
    };
    let dir = output_dir(&cfg)?;
    write_resolved(&dir, &cfg)?;
    let stats = with_env!(load_env(&cfg)?, env => run_eval(&env, &what, cfg.episodes, cfg.eval_seed())?);
    write(&dir.join("stats.csv"), stats_csv(&stats))?;
    write(&dir.join("trajectories.csv"), trajectory_csv(&stats))?;
    let s = summarize(&stats)?;
    println!(
        "{}: mean return {:.1}, success {:.0}%, mean steps {:.1} over {} episodes",
        a.name.unwrap_or(default_name),
        s.mean_return,
        s.success_pct,
        s.mean_steps,
        s.episodes
    );
    Ok(())
}

fn map_command(a: MapArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&a.env, Mode::Map)?;
    if let Some(r) = a.resolution {
        cfg.resolution = r;
    }
    let dir = output_dir(&cfg)?;
    write_resolved(&dir, &cfg)?;
    let LoadedEnv::Maze(env) = load_env(&cfg)? else {
        return Err(CliError::Usage("activation maps need a maze environment".into()));
    };
    let Evaluated::Hierarchical {
        selector: _,
        options,
        horizon,
    } = load_policy(&a.policy)?
    else {
        return Err(CliError::Usage(format!("{} is not a meta checkpoint", a.policy.display())));
    };
    let policy = MetaPolicy {
        params: read_checkpoint(&a.policy)?.params,
    };
    let map = if a.from_trajectories {
        let stats = run_hierarchical(&env, &policy, &options, horizon, cfg.episodes, cfg.eval_seed())?;
        activation_map_from_trajectories(env.world(), &stats, cfg.resolution)?
    } else {
        activation_map_from_query(env.world(), &policy, cfg.resolution)?
    };
    let (csv, ppm) = export_map(&map, &dir.join("activation"))?;
    for theme in [Theme::Theme1, Theme::Theme2] {
        if let Some(&k) = cfg.rule.get(&theme) {
            if let Some(share) = theme_share(&map, env.world(), theme, k) {
                println!("{theme:?} cells choosing option {k}: {:.1}%", 100.0 * share);
            }
        }
    }
    println!("wrote {} and {}", csv.display(), ppm.display());
    Ok(())
}

fn compare_command(a: CompareArgs) -> Result<(), CliError> {
    let entries = a
        .entries
        .iter()
        .map(|e| {
            let (name, path) = e
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--entry {e:?} is not name=stats.csv")))?;
            let path = Path::new(path);
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            Ok((name.to_string(), parse_stats_csv(&text)?))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let table = compare(&entries)?;
    let dir = a.out.unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write(&dir.join("comparison.csv"), table.to_csv())?;
    print!("{}", table.to_text());
    Ok(())
}
