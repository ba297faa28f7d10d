//! Comparison tables, activation maps and their file formats.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::env::{Observation, StepEvent};
use crate::maze::{render, AgentPose, DynamicState, WorldSpec, HEADINGS};
use crate::meta::{MetaError, MetaPolicy, OptionSelector};
use crate::rl::EpisodeStats;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("cannot summarize an empty list of episodes")]
    Empty,
    #[error("comparison needs at least 2 entries, got {0}")]
    TooFewEntries(usize),
    #[error("resolution must be at least 1")]
    BadResolution,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Meta(#[from] MetaError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> AnalysisError + '_ {
    move |source| AnalysisError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean_return: f64,
    pub success_pct: f64,
    pub episodes: usize,
    pub mean_steps: f64,
}

pub fn summarize(stats: &[EpisodeStats]) -> Result<Summary, AnalysisError> {
    if stats.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let n = stats.len() as f64;
    Ok(Summary {
        mean_return: stats.iter().map(|s| s.total_return).sum::<f64>() / n,
        success_pct: 100.0 * stats.iter().filter(|s| s.success).count() as f64 / n,
        episodes: stats.len(),
        mean_steps: stats.iter().map(|s| s.steps as f64).sum::<f64>() / n,
    })
}

/// Per-episode evaluation CSV.
pub fn stats_csv(stats: &[EpisodeStats]) -> String {
    let mut out = String::from("episode,return,steps,success,final_event\n");
    for (i, s) in stats.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{}",
            s.total_return,
            s.steps,
            s.success,
            s.final_event.as_str()
        );
    }
    out
}

/// Every trajectory point of every episode.
pub fn trajectory_csv(stats: &[EpisodeStats]) -> String {
    let mut out = String::from("episode,step,x,y,heading,option\n");
    for (i, s) in stats.iter().enumerate() {
        for (j, p) in s.trajectory.iter().enumerate() {
            let _ = writeln!(out, "{i},{j},{},{},{},{}", p.x, p.y, p.heading, p.option);
        }
    }
    out
}

/// Reads a per-episode CSV written by [`stats_csv`]; trajectories are not stored there.
pub fn parse_stats_csv(text: &str) -> Result<Vec<EpisodeStats>, AnalysisError> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l.trim()) != Some("episode,return,steps,success,final_event") {
        return Err(AnalysisError::Parse {
            line: 1,
            msg: "expected header episode,return,steps,success,final_event".into(),
        });
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = |what: &str| AnalysisError::Parse {
                line: i + 1,
                msg: format!("bad {what}"),
            };
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(bad("field count"));
            }
            let final_event = [StepEvent::None, StepEvent::Collision, StepEvent::GoalReached, StepEvent::TimeLimit]
                .into_iter()
                .find(|e| e.as_str() == f[4])
                .ok_or_else(|| bad("final_event"))?;
            Ok(EpisodeStats {
                total_return: f[1].parse().map_err(|_| bad("return"))?,
                steps: f[2].parse().map_err(|_| bad("steps"))?,
                success: f[3].parse().map_err(|_| bad("success"))?,
                final_event,
                trajectory: Vec::new(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub name: String,
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// Rows sorted by mean return, highest first; ties keep input order.
pub fn compare(entries: &[(String, Vec<EpisodeStats>)]) -> Result<Comparison, AnalysisError> {
    let rows = entries
        .iter()
        .map(|(name, stats)| {
            Ok(ComparisonRow {
                name: name.clone(),
                summary: summarize(stats)?,
            })
        })
        .collect::<Result<Vec<_>, AnalysisError>>()?;
    compare_summaries(rows)
}

pub fn compare_summaries(mut rows: Vec<ComparisonRow>) -> Result<Comparison, AnalysisError> {
    if rows.len() < 2 {
        return Err(AnalysisError::TooFewEntries(rows.len()));
    }
    // sort_by is stable
    rows.sort_by(|a, b| b.summary.mean_return.total_cmp(&a.summary.mean_return));
    Ok(Comparison { rows })
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,mean_return,success_pct\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.name, r.summary.mean_return, r.summary.success_pct);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(6);
        let mut out = format!("{:<width$}  {:>12}  {:>9}\n", "policy", "mean return", "success %");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>12.1}  {:>9.1}",
                r.name, r.summary.mean_return, r.summary.success_pct
            );
        }
        out
    }
}

/// Reads back a comparison CSV.
pub fn parse_comparison_csv(text: &str) -> Result<Vec<(String, f64, f64)>, AnalysisError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "name,mean_return,success_pct")) => {}
        _ => {
            return Err(AnalysisError::Parse {
                line: 1,
                msg: "expected header name,mean_return,success_pct".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = |msg: &str| AnalysisError::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let mut parts = l.rsplitn(3, ',');
            let pct = parts.next().ok_or_else(|| bad("missing success_pct"))?;
            let mean = parts.next().ok_or_else(|| bad("missing mean_return"))?;
            let name = parts.next().ok_or_else(|| bad("missing name"))?;
            Ok((
                name.to_string(),
                mean.parse().map_err(|_| bad("bad mean_return"))?,
                pct.parse().map_err(|_| bad("bad success_pct"))?,
            ))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapSource {
    FromTrajectories,
    FromQuery,
}

/// Grid of chosen options; `None` means unvisited (or wall).
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMap {
    pub rows: usize,
    pub cols: usize,
    /// Grid cells per world unit.
    pub resolution: usize,
    pub source: MapSource,
    pub cells: Vec<Option<usize>>,
}

impl ActivationMap {
    pub fn get(&self, row: usize, col: usize) -> Option<usize> {
        self.cells[row * self.cols + col]
    }

    /// World cell containing grid cell `(row, col)`.
    pub fn world_cell(&self, row: usize, col: usize) -> (usize, usize) {
        (row / self.resolution, col / self.resolution)
    }
}

/// Lowest index among the most frequent.
fn majority(counts: &[usize]) -> Option<usize> {
    let best = *counts.iter().max()?;
    (best > 0).then(|| counts.iter().position(|&c| c == best).unwrap())
}

/// Evaluates the meta-policy at every free grid point for the 4 cardinal
/// headings and keeps the per-cell majority option.
pub fn activation_map_from_query(
    world: &WorldSpec,
    policy: &MetaPolicy,
    resolution: usize,
) -> Result<ActivationMap, AnalysisError> {
    if resolution == 0 {
        return Err(AnalysisError::BadResolution);
    }
    let n_options = policy.params.n_actions();
    let dynamics = DynamicState::initial(world);
    let (rows, cols) = (world.rows() * resolution, world.cols() * resolution);
    let mut cells = vec![None; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            if world.cell(r / resolution, c / resolution).is_wall() {
                continue;
            }
            let mut counts = vec![0; n_options];
            for q in 0..4 {
                let pose = AgentPose {
                    x: (c as f64 + 0.5) / resolution as f64,
                    y: (r as f64 + 0.5) / resolution as f64,
                    heading_index: (q * HEADINGS / 4) as u8,
                };
                let obs = render(world, &pose, &dynamics);
                counts[policy.select(&obs, None)?] += 1;
            }
            cells[r * cols + c] = majority(&counts);
        }
    }
    Ok(ActivationMap {
        rows,
        cols,
        resolution,
        source: MapSource::FromQuery,
        cells,
    })
}

/// Majority option among the trajectory points falling in each grid cell.
pub fn activation_map_from_trajectories(
    world: &WorldSpec,
    episodes: &[EpisodeStats],
    resolution: usize,
) -> Result<ActivationMap, AnalysisError> {
    if resolution == 0 {
        return Err(AnalysisError::BadResolution);
    }
    let (rows, cols) = (world.rows() * resolution, world.cols() * resolution);
    let mut counts: Vec<Vec<usize>> = vec![Vec::new(); rows * cols];
    for p in episodes.iter().flat_map(|e| &e.trajectory) {
        if p.option < 0 {
            continue;
        }
        let (c, r) = (
            (p.x * resolution as f64).floor(),
            (p.y * resolution as f64).floor(),
        );
        if r < 0.0 || c < 0.0 || r as usize >= rows || c as usize >= cols {
            continue;
        }
        let slot = &mut counts[r as usize * cols + c as usize];
        let k = p.option as usize;
        if slot.len() <= k {
            slot.resize(k + 1, 0);
        }
        slot[k] += 1;
    }
    Ok(ActivationMap {
        rows,
        cols,
        resolution,
        source: MapSource::FromTrajectories,
        cells: counts.iter().map(|c| majority(c)).collect(),
    })
}

/// Fraction of `theme`-region cells whose label equals `option`.
pub fn theme_share(
    map: &ActivationMap,
    world: &WorldSpec,
    theme: crate::env::Theme,
    option: usize,
) -> Option<f64> {
    let mut total = 0usize;
    let mut hits = 0usize;
    for r in 0..map.rows {
        for c in 0..map.cols {
            let (wr, wc) = map.world_cell(r, c);
            if world.cell(wr, wc).is_wall() || world.theme(wr, wc) != theme {
                continue;
            }
            total += 1;
            if map.get(r, c) == Some(option) {
                hits += 1;
            }
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

pub const DARK_BLUE: [u8; 3] = [0, 0, 139];
pub const LIGHT_GREEN: [u8; 3] = [144, 238, 144];
pub const WHITE: [u8; 3] = [255, 255, 255];
// options beyond the first two
const EXTRA: [[u8; 3]; 4] = [[220, 50, 47], [255, 165, 0], [128, 0, 128], [0, 128, 128]];

pub fn option_color(option: Option<usize>) -> [u8; 3] {
    match option {
        None => WHITE,
        Some(0) => DARK_BLUE,
        Some(1) => LIGHT_GREEN,
        Some(k) => EXTRA[(k - 2) % EXTRA.len()],
    }
}

pub fn map_csv(map: &ActivationMap) -> String {
    let mut out = String::from("row,col,option\n");
    for r in 0..map.rows {
        for c in 0..map.cols {
            match map.get(r, c) {
                Some(k) => writeln!(out, "{r},{c},{k}"),
                None => writeln!(out, "{r},{c},-1"),
            }
            .unwrap();
        }
    }
    out
}

/// Inverse of [`map_csv`]; resolution and source are not stored and come back as 1 / FromQuery.
pub fn parse_map_csv(text: &str) -> Result<ActivationMap, AnalysisError> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l.trim()) != Some("row,col,option") {
        return Err(AnalysisError::Parse {
            line: 1,
            msg: "expected header row,col,option".into(),
        });
    }
    let mut entries = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| AnalysisError::Parse { line: i + 1, msg };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", fields.len())));
        }
        let r: usize = fields[0].parse().map_err(|_| bad(format!("bad row {:?}", fields[0])))?;
        let c: usize = fields[1].parse().map_err(|_| bad(format!("bad col {:?}", fields[1])))?;
        let k: i64 = fields[2].parse().map_err(|_| bad(format!("bad option {:?}", fields[2])))?;
        if k < -1 {
            return Err(bad(format!("bad option {k}")));
        }
        entries.push((r, c, usize::try_from(k).ok()));
    }
    let rows = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let cols = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
    let mut cells = vec![None; rows * cols];
    for (r, c, k) in entries {
        cells[r * cols + c] = k;
    }
    Ok(ActivationMap {
        rows,
        cols,
        resolution: 1,
        source: MapSource::FromQuery,
        cells,
    })
}

/// Binary PPM, one pixel per grid cell.
pub fn map_ppm(map: &ActivationMap) -> Vec<u8> {
    let mut out = format!("P6 {} {} 255\n", map.cols, map.rows).into_bytes();
    for k in &map.cells {
        out.extend_from_slice(&option_color(*k));
    }
    out
}

/// Decodes a PPM written by [`map_ppm`] back to option labels.
pub fn parse_map_ppm(bytes: &[u8]) -> Result<ActivationMap, AnalysisError> {
    let bad = |msg: &str| AnalysisError::Parse {
        line: 1,
        msg: msg.to_string(),
    };
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not text"))?;
    let f: Vec<&str> = header.split_whitespace().collect();
    if f.len() != 4 || f[0] != "P6" || f[3] != "255" {
        return Err(bad("expected \"P6 <w> <h> 255\""));
    }
    let cols: usize = f[1].parse().map_err(|_| bad("bad width"))?;
    let rows: usize = f[2].parse().map_err(|_| bad("bad height"))?;
    let body = &bytes[nl + 1..];
    if body.len() != rows * cols * 3 {
        return Err(bad("pixel data length does not match header"));
    }
    let cells = body
        .chunks(3)
        .map(|px| {
            let px = [px[0], px[1], px[2]];
            if px == WHITE {
                return Ok(None);
            }
            (0..2 + EXTRA.len())
                .find(|&k| option_color(Some(k)) == px)
                .map(Some)
                .ok_or_else(|| bad("unknown colour"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ActivationMap {
        rows,
        cols,
        resolution: 1,
        source: MapSource::FromQuery,
        cells,
    })
}

/// Writes `<base>.csv` and `<base>.ppm`.
pub fn export_map(map: &ActivationMap, base: &Path) -> Result<(PathBuf, PathBuf), AnalysisError> {
    let csv = base.with_extension("csv");
    let ppm = base.with_extension("ppm");
    fs::write(&csv, map_csv(map)).map_err(io_err(&csv))?;
    fs::write(&ppm, map_ppm(map)).map_err(io_err(&ppm))?;
    Ok((csv, ppm))
}

pub fn import_map_csv(path: &Path) -> Result<ActivationMap, AnalysisError> {
    parse_map_csv(&fs::read_to_string(path).map_err(io_err(path))?)
}

/// Mean absolute per-channel difference between two images.
pub fn color_distance(a: &Observation, b: &Observation) -> [f64; 3] {
    let mut sum = [0.0; 3];
    for (pa, pb) in a.bytes().chunks(3).zip(b.bytes().chunks(3)) {
        for ch in 0..3 {
            sum[ch] += (pa[ch] as f64 - pb[ch] as f64).abs() / 255.0;
        }
    }
    let n = (a.bytes().len() / 3).max(1) as f64;
    sum.map(|s| s / n)
}
