//! Shared environment interface for the maze and terrain simulators.

use std::sync::Arc;

use crate::nn::Tensor;

/// Rendered first-person view, `H x W x 3`. Pixels are stored as bytes and
/// exposed to networks as `byte / 255` in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Observation {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Arc<[u8]>,
}

impl Observation {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), height * width * channels, "pixel buffer size");
        Self {
            height,
            width,
            channels,
            pixels: pixels.into(),
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    pub fn bytes(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.width + col) * self.channels;
        [
            self.pixels[i] as f32 / 255.0,
            self.pixels[i + 1] as f32 / 255.0,
            self.pixels[i + 2] as f32 / 255.0,
        ]
    }

    pub fn write_f32(&self, out: &mut Vec<f32>) {
        out.extend(self.pixels.iter().map(|&b| b as f32 / 255.0));
    }

    pub fn to_tensor(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.pixels.len());
        self.write_f32(&mut data);
        Tensor::new(vec![self.height, self.width, self.channels], data).expect("consistent shape")
    }
}

/// Stacks observations into a `[B, H, W, C]` tensor.
pub fn batch_tensor(obs: &[&Observation]) -> Tensor {
    let shape = obs.first().map(|o| o.shape()).unwrap_or([0, 0, 0]);
    let mut data = Vec::with_capacity(obs.len() * shape.iter().product::<usize>());
    for o in obs {
        o.write_f32(&mut data);
    }
    Tensor::new(vec![obs.len(), shape[0], shape[1], shape[2]], data).expect("consistent shape")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepEvent {
    None,
    Collision,
    GoalReached,
    TimeLimit,
}

impl StepEvent {
    pub fn as_str(&self) -> &'static str {
        match self {
            StepEvent::None => "none",
            StepEvent::Collision => "collision",
            StepEvent::GoalReached => "goal",
            StepEvent::TimeLimit => "time_limit",
        }
    }
}

/// Reward and termination of one primitive step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Outcome {
    pub reward: f64,
    pub terminal: bool,
    pub event: StepEvent,
}

/// Visual theme of a region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Theme {
    /// Brick walls, gray floor.
    Theme1,
    /// Near-black walls, purple floor.
    Theme2,
}

/// Ground-truth pose used for trajectories: `(x, y, heading)`.
pub type PoseRecord = (f64, f64, f64);

/// A deterministic episodic simulator with pixel observations.
///
/// The simulator itself is immutable; all per-episode data lives in `State`.
pub trait Environment {
    type State: Clone;

    fn n_actions(&self) -> usize;

    fn obs_shape(&self) -> [usize; 3];

    fn reset(&self, seed: u64) -> Self::State;

    fn observe(&self, state: &Self::State) -> Observation;

    fn step(&self, state: &mut Self::State, action: usize) -> Outcome;

    fn pose(&self, state: &Self::State) -> PoseRecord;

    /// Theme of the ground under the agent, for environments that have one.
    fn theme(&self, _state: &Self::State) -> Option<Theme> {
        None
    }
}

/// Mixes an experiment seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
