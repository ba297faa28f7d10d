//! `key = value` experiment files with `[section]` headers and `#` comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::env::Theme;
use crate::maze::DEFAULT_MAX_STEPS;
use crate::meta::DEFAULT_HORIZON;
use crate::rl::TrainConfig;

pub const SEED_ENV_VAR: &str = "METANAV_SEED";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: unknown key {key:?} in section [{section}]")]
    UnknownKey { line: usize, section: String, key: String },
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: {key} expects {expected}, got {value:?}")]
    TypeMismatch {
        line: usize,
        key: String,
        expected: &'static str,
        value: String,
    },
    #[error("line {line}: missing required key {key}")]
    MissingKey { line: usize, key: &'static str },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
    #[error("{var}={value:?} is not an unsigned integer")]
    BadSeedOverride { var: &'static str, value: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    TrainLow,
    TrainMeta,
    Eval,
    Map,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::TrainLow => "train-low",
            Mode::TrainMeta => "train-meta",
            Mode::Eval => "eval",
            Mode::Map => "map",
        }
    }
}

impl FromStr for Mode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        [Mode::TrainLow, Mode::TrainMeta, Mode::Eval, Mode::Map]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnvSpec {
    Maze(PathBuf),
    Terrain(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    pub env: Option<EnvSpec>,
    /// Episode step cap.
    pub max_steps: usize,
    pub train: TrainConfig,
    pub horizon: usize,
    /// Checkpoint paths or scripted option names, in meta-action order.
    pub options: Vec<String>,
    pub episodes: usize,
    /// Evaluation seed; the training seed when unset.
    pub eval_seed: Option<u64>,
    pub resolution: usize,
    pub rule: BTreeMap<Theme, usize>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: None,
            env: None,
            max_steps: DEFAULT_MAX_STEPS,
            train: TrainConfig::default(),
            horizon: DEFAULT_HORIZON,
            options: Vec::new(),
            episodes: 10,
            eval_seed: None,
            resolution: 1,
            rule: BTreeMap::from([(Theme::Theme1, 0), (Theme::Theme2, 1)]),
            output_dir: None,
        }
    }
}

fn theme_name(t: Theme) -> &'static str {
    match t {
        Theme::Theme1 => "T1",
        Theme::Theme2 => "T2",
    }
}

fn parse_rule(v: &str) -> Option<BTreeMap<Theme, usize>> {
    let mut rule = BTreeMap::new();
    for part in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (t, k) = part.split_once(':')?;
        let theme = match t.trim() {
            "T1" => Theme::Theme1,
            "T2" => Theme::Theme2,
            _ => return None,
        };
        rule.insert(theme, k.trim().parse().ok()?);
    }
    Some(rule)
}

/// A relative path in a config file is taken relative to the file's directory.
fn resolve(base: &Path, v: &str) -> PathBuf {
    let p = Path::new(v);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Option ids that look like paths are resolved; scripted names stay as they are.
fn resolve_option(base: &Path, id: &str) -> String {
    if id.contains('/') || id.contains('.') {
        resolve(base, id).to_string_lossy().into_owned()
    } else {
        id.to_string()
    }
}

struct Line<'a> {
    no: usize,
    key: &'a str,
    value: &'a str,
}

impl Line<'_> {
    fn parse<T: FromStr>(&self, expected: &'static str) -> Result<T, ConfigError> {
        self.value.parse().map_err(|_| ConfigError::TypeMismatch {
            line: self.no,
            key: self.key.to_string(),
            expected,
            value: self.value.to_string(),
        })
    }
}

impl ExperimentConfig {
    /// Parses config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !["env", "train", "meta", "eval"].contains(&name) {
                    return Err(ConfigError::UnknownSection {
                        line: no,
                        section: name.to_string(),
                    });
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: no })?;
            let l = Line {
                no,
                key: key.trim(),
                value: value.trim(),
            };
            const REAL: &str = "a real number";
            const INT: &str = "a non-negative integer";
            let t = &mut cfg.train;
            match (section.as_str(), l.key) {
                ("", "mode") => cfg.mode = Some(l.parse("one of train-low, train-meta, eval, map")?),
                ("", "seed") => t.seed = l.parse(INT)?,
                ("", "output_dir") => cfg.output_dir = Some(resolve(base, l.value)),
                ("env", "map") => {
                    cfg.env = Some(EnvSpec::Maze(resolve(base, l.value)))
                }
                ("env", "track") => {
                    cfg.env = Some(EnvSpec::Terrain(resolve(base, l.value)))
                }
                ("env", "max_steps") => cfg.max_steps = l.parse(INT)?,
                ("train", "gamma") => t.gamma = l.parse(REAL)?,
                ("train", "lr") => t.lr = l.parse(REAL)?,
                ("train", "replay_capacity") => t.replay_capacity = l.parse(INT)?,
                ("train", "burn_in") => t.burn_in = l.parse(INT)?,
                ("train", "target_sync_every") => t.target_sync_every = l.parse(INT)?,
                ("train", "batch_size") => t.batch_size = l.parse(INT)?,
                ("train", "grad_clip") => t.grad_clip = l.parse(REAL)?,
                ("train", "epsilon_start") => t.epsilon_start = l.parse(REAL)?,
                ("train", "epsilon_end") => t.epsilon_end = l.parse(REAL)?,
                ("train", "epsilon_decay_steps") => t.epsilon_decay_steps = l.parse(INT)?,
                ("train", "max_env_steps") => t.max_env_steps = l.parse(INT)?,
                ("train", "train_every") => t.train_every = l.parse(INT)?,
                ("meta", "horizon") => cfg.horizon = l.parse(INT)?,
                ("meta", "options") => {
                    cfg.options = l
                        .value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| resolve_option(base, s))
                        .collect()
                }
                ("eval", "episodes") => cfg.episodes = l.parse(INT)?,
                ("eval", "seed") => cfg.eval_seed = Some(l.parse(INT)?),
                ("eval", "resolution") => cfg.resolution = l.parse(INT)?,
                ("eval", "rule") => {
                    cfg.rule = parse_rule(l.value).ok_or_else(|| ConfigError::TypeMismatch {
                        line: no,
                        key: l.key.to_string(),
                        expected: "a theme rule like `T1:0, T2:1`",
                        value: l.value.to_string(),
                    })?
                }
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line: no,
                        section: section.clone(),
                        key: l.key.to_string(),
                    })
                }
            }
        }
        Ok(cfg)
    }

    /// Checks the keys a mode needs. `eof_line` is reported for keys that never appeared.
    pub fn require(&self, mode: Mode, text_lines: usize) -> Result<(), ConfigError> {
        let line = text_lines + 1;
        if self.env.is_none() {
            return Err(ConfigError::MissingKey {
                line,
                key: "[env] map or track",
            });
        }
        if mode == Mode::TrainMeta && self.options.is_empty() {
            return Err(ConfigError::MissingKey {
                line,
                key: "[meta] options",
            });
        }
        if self.resolution == 0 || self.episodes == 0 || self.horizon == 0 || self.max_steps == 0 {
            return Err(ConfigError::Invalid {
                line,
                msg: "resolution, episodes, horizon and max_steps must be positive".into(),
            });
        }
        Ok(())
    }

    /// Applies `METANAV_SEED` if it is set.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<(), ConfigError> {
        if let Some(v) = value {
            self.train.seed = v.trim().parse().map_err(|_| ConfigError::BadSeedOverride {
                var: SEED_ENV_VAR,
                value: v.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn eval_seed(&self) -> u64 {
        self.eval_seed.unwrap_or(self.train.seed)
    }

    /// Every effective value, in a form `parse` reads back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let t = &self.train;
        let w = &mut s;
        if let Some(m) = self.mode {
            let _ = writeln!(w, "mode = {}", m.as_str());
        }
        let _ = writeln!(w, "seed = {}", t.seed);
        if let Some(o) = &self.output_dir {
            let _ = writeln!(w, "output_dir = {}", o.display());
        }
        let _ = writeln!(w, "\n[env]");
        match &self.env {
            Some(EnvSpec::Maze(p)) => {
                let _ = writeln!(w, "map = {}", p.display());
            }
            Some(EnvSpec::Terrain(p)) => {
                let _ = writeln!(w, "track = {}", p.display());
            }
            None => {}
        }
        let _ = writeln!(w, "max_steps = {}", self.max_steps);
        let _ = writeln!(w, "\n[train]");
        let _ = writeln!(w, "gamma = {}", t.gamma);
        let _ = writeln!(w, "lr = {}", t.lr);
        let _ = writeln!(w, "replay_capacity = {}", t.replay_capacity);
        let _ = writeln!(w, "burn_in = {}", t.burn_in);
        let _ = writeln!(w, "target_sync_every = {}", t.target_sync_every);
        let _ = writeln!(w, "batch_size = {}", t.batch_size);
        let _ = writeln!(w, "grad_clip = {}", t.grad_clip);
        let _ = writeln!(w, "epsilon_start = {}", t.epsilon_start);
        let _ = writeln!(w, "epsilon_end = {}", t.epsilon_end);
        let _ = writeln!(w, "epsilon_decay_steps = {}", t.epsilon_decay_steps);
        let _ = writeln!(w, "max_env_steps = {}", t.max_env_steps);
        let _ = writeln!(w, "train_every = {}", t.train_every);
        let _ = writeln!(w, "\n[meta]");
        let _ = writeln!(w, "horizon = {}", self.horizon);
        let _ = writeln!(w, "options = {}", self.options.join(", "));
        let _ = writeln!(w, "\n[eval]");
        let _ = writeln!(w, "episodes = {}", self.episodes);
        if let Some(seed) = self.eval_seed {
            let _ = writeln!(w, "seed = {seed}");
        }
        let _ = writeln!(w, "resolution = {}", self.resolution);
        let rule: Vec<String> = self.rule.iter().map(|(t, k)| format!("{}:{k}", theme_name(*t))).collect();
        let _ = writeln!(w, "rule = {}", rule.join(", "));
        s
    }
}
