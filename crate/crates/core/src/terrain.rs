//! One-dimensional legged-robot track with two scripted gaits.

use std::fmt;

use thiserror::Error;

use crate::env::{Environment, Observation, Outcome, PoseRecord, StepEvent};
use crate::maze::{IMAGE_HEIGHT, IMAGE_WIDTH};

const TOL: f64 = 1e-9;
pub const LOOKAHEAD: f64 = 6.0;
pub const HORIZON_ROW: usize = 8;
pub const REWARD_PER_UNIT: f64 = 5.0;
pub const REWARD_FALL: f64 = -200.0;

const SKY: [u8; 3] = [170, 200, 235];
const GROUND: [u8; 3] = [120, 100, 70];
const BLOCK: [u8; 3] = [45, 40, 35];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentKind {
    Flat,
    Obstacle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackSpec {
    segments: Vec<(SegmentKind, f64)>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("bad token {token:?} at position {index}")]
    BadToken { index: usize, token: String },
    #[error("segment {index} has non-positive length {length}")]
    NonPositiveLength { index: usize, length: f64 },
    #[error("track is empty")]
    Empty,
    #[error("track must end with a flat segment")]
    NoFlatEnd,
}

pub fn load_track(text: &str) -> Result<TrackSpec, TrackError> {
    let mut segments = Vec::new();
    for (index, token) in text.split_whitespace().enumerate() {
        let bad = || TrackError::BadToken {
            index,
            token: token.to_string(),
        };
        let mut chars = token.chars();
        let kind = match chars.next() {
            Some('F') => SegmentKind::Flat,
            Some('O') => SegmentKind::Obstacle,
            _ => return Err(bad()),
        };
        let length: f64 = chars.as_str().parse().map_err(|_| bad())?;
        if !length.is_finite() {
            return Err(bad());
        }
        if length <= 0.0 {
            return Err(TrackError::NonPositiveLength { index, length });
        }
        segments.push((kind, length));
    }
    match segments.last() {
        None => Err(TrackError::Empty),
        Some((SegmentKind::Obstacle, _)) => Err(TrackError::NoFlatEnd),
        Some(_) => Ok(TrackSpec { segments }),
    }
}

impl TrackSpec {
    pub fn segments(&self) -> &[(SegmentKind, f64)] {
        &self.segments
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.1).sum()
    }

    /// Obstacle intervals `[start, end)` along the track.
    pub fn obstacles(&self) -> Vec<(f64, f64)> {
        let mut at = 0.0;
        let mut out = Vec::new();
        for &(kind, len) in &self.segments {
            if kind == SegmentKind::Obstacle {
                out.push((at, at + len));
            }
            at += len;
        }
        out
    }

    /// Whether the open interval `(a, b)` intersects the interior of an obstacle.
    pub fn sweeps_obstacle(&self, a: f64, b: f64) -> bool {
        self.obstacles()
            .iter()
            .any(|&(s, e)| a < e - TOL && b > s + TOL)
    }

    /// Whether an obstacle begins (or the agent stands on one) within `dist` ahead.
    pub fn obstacle_within(&self, position: f64, dist: f64) -> bool {
        self.sweeps_obstacle(position, position + dist)
    }
}

impl fmt::Display for TrackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (kind, len)) in self.segments.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            let k = if *kind == SegmentKind::Flat { 'F' } else { 'O' };
            write!(f, "{k}{len}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gait {
    FastLow,
    SlowHigh,
}

impl Gait {
    pub const ALL: [Gait; 2] = [Gait::FastLow, Gait::SlowHigh];

    pub fn speed(self) -> f64 {
        match self {
            Gait::FastLow => 1.0,
            Gait::SlowHigh => 0.4,
        }
    }

    pub fn can_climb(self) -> bool {
        self == Gait::SlowHigh
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Gait> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeggedState {
    pub position: f64,
    pub fallen: bool,
    pub t: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaitStep {
    pub position: f64,
    pub reward: f64,
    pub terminal: bool,
    pub event: StepEvent,
}

pub fn step_gait(track: &TrackSpec, state: &LeggedState, gait: Gait, max_steps: usize) -> GaitStep {
    let total = track.total_length();
    let p = state.position;
    let mut q = p + gait.speed();
    if !gait.can_climb() && track.sweeps_obstacle(p, q) {
        return GaitStep {
            position: p,
            reward: REWARD_FALL,
            terminal: true,
            event: StepEvent::Collision,
        };
    }
    let mut event = StepEvent::None;
    let mut moved = gait.speed();
    if q >= total - TOL {
        q = total;
        // keep the full-step reward exact when the remainder is only rounding noise
        if (total - p - moved).abs() > TOL {
            moved = total - p;
        }
        event = StepEvent::GoalReached;
    }
    if event == StepEvent::None && state.t + 1 >= max_steps {
        event = StepEvent::TimeLimit;
    }
    GaitStep {
        position: q,
        reward: REWARD_PER_UNIT * moved,
        terminal: event != StepEvent::None,
        event,
    }
}

/// Forward-looking strip view: sky above the horizon, ground below, and each
/// obstacle within the lookahead drawn as a dark block shrinking with distance.
pub fn render_strip(track: &TrackSpec, state: &LeggedState) -> Observation {
    let mut px = vec![0u8; IMAGE_HEIGHT * IMAGE_WIDTH * 3];
    for row in 0..IMAGE_HEIGHT {
        let c = if row < HORIZON_ROW { SKY } else { GROUND };
        for col in 0..IMAGE_WIDTH {
            let i = (row * IMAGE_WIDTH + col) * 3;
            px[i..i + 3].copy_from_slice(&c);
        }
    }
    let p = state.position;
    let mut visible: Vec<f64> = track
        .obstacles()
        .into_iter()
        .filter(|&(s, e)| e > p + TOL && s < p + LOOKAHEAD)
        .map(|(s, _)| (s - p).max(0.5))
        .collect();
    // far to near so nearer blocks overdraw
    visible.sort_by(|a, b| b.total_cmp(a));
    for d in visible {
        let contact = (HORIZON_ROW as f64 + 15.0 / d).round().min(IMAGE_HEIGHT as f64) as usize;
        let h = ((12.0 / d).round() as usize).min(contact);
        let w = ((16.0 / d).round() as usize).min(IMAGE_WIDTH);
        let left = (IMAGE_WIDTH - w) / 2;
        for row in contact - h..contact {
            for col in left..left + w {
                let i = (row * IMAGE_WIDTH + col) * 3;
                px[i..i + 3].copy_from_slice(&BLOCK);
            }
        }
    }
    Observation::new(IMAGE_HEIGHT, IMAGE_WIDTH, 3, px)
}

/// The terrain track as an [`Environment`]: actions are gait indices
/// `0 = FastLow, 1 = SlowHigh`.
#[derive(Clone, Debug)]
pub struct TerrainEnv {
    track: TrackSpec,
    max_steps: usize,
}

impl TerrainEnv {
    pub fn new(track: TrackSpec, max_steps: usize) -> Self {
        Self { track, max_steps }
    }

    pub fn track(&self) -> &TrackSpec {
        &self.track
    }
}

impl Environment for TerrainEnv {
    type State = LeggedState;

    fn n_actions(&self) -> usize {
        Gait::ALL.len()
    }

    fn obs_shape(&self) -> [usize; 3] {
        [IMAGE_HEIGHT, IMAGE_WIDTH, 3]
    }

    fn reset(&self, _seed: u64) -> LeggedState {
        LeggedState {
            position: 0.0,
            fallen: false,
            t: 0,
        }
    }

    fn observe(&self, state: &LeggedState) -> Observation {
        render_strip(&self.track, state)
    }

    fn step(&self, state: &mut LeggedState, action: usize) -> Outcome {
        let gait = Gait::from_index(action).expect("gait index out of range");
        let r = step_gait(&self.track, state, gait, self.max_steps);
        state.position = r.position;
        state.fallen = r.event == StepEvent::Collision;
        state.t += 1;
        Outcome {
            reward: r.reward,
            terminal: r.terminal,
            event: r.event,
        }
    }

    fn pose(&self, state: &LeggedState) -> PoseRecord {
        (state.position, 0.0, 0.0)
    }
}
