//! First-person wheeled-robot maze: map format, kinematics, raycast renderer.

mod map;
mod render;
mod sim;

pub use map::{
    load_map, load_map_with, Cell, DynamicTrack, MapError, MapOptions, ThemeRegion, WorldSpec,
    DEFAULT_OBSTACLE_RADIUS,
};
pub use render::{column_height, render, FOV_DEG, IMAGE_HEIGHT, IMAGE_WIDTH};
pub use sim::{
    advance_dynamics, overlaps_wall, reset, step, Action, AgentPose, DynamicState, MazeEnv,
    MazeState, StepResult, AGENT_RADIUS, DEFAULT_MAX_STEPS, FORWARD_STEP, HEADINGS,
    REWARD_COLLISION, REWARD_FORWARD, REWARD_TURN,
};
