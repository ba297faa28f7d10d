use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::map::{Cell, WorldSpec};
use super::render::render;
use crate::env::{Environment, Observation, Outcome, PoseRecord, StepEvent, Theme};

pub const FORWARD_STEP: f64 = 0.2;
pub const AGENT_RADIUS: f64 = 0.3;
/// Number of discrete headings; one turn action rotates by `360 / 20 = 18` degrees.
pub const HEADINGS: u8 = 20;
pub const DEFAULT_MAX_STEPS: usize = 1000;

pub const REWARD_FORWARD: f64 = 5.0;
pub const REWARD_TURN: f64 = 1.0;
pub const REWARD_COLLISION: f64 = -200.0;

/// Touching a wall counts as contact.
const CONTACT_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Forward, Action::TurnLeft, Action::TurnRight];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }
}

/// Agent position in world units and heading as a multiple of 18 degrees,
/// counter-clockwise from +x with the map's rows growing downward (+y).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentPose {
    pub x: f64,
    pub y: f64,
    pub heading_index: u8,
}

impl AgentPose {
    /// Heading in radians, `[0, 2pi)`.
    pub fn heading(&self) -> f64 {
        self.heading_index as f64 * (2.0 * PI / HEADINGS as f64)
    }

    /// Unit direction of travel in world coordinates.
    pub fn direction(&self) -> (f64, f64) {
        heading_direction(self.heading())
    }
}

pub(crate) fn heading_direction(angle: f64) -> (f64, f64) {
    let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
    (snap(angle.cos()), snap(-angle.sin()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub next_pose: AgentPose,
    pub reward: f64,
    pub terminal: bool,
    pub event: StepEvent,
}

/// Per-obstacle progress along its track polyline.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicState {
    /// `(arc length travelled from the first waypoint, direction +1/-1)`.
    pub obstacles: Vec<(f64, f64)>,
}

impl DynamicState {
    pub fn initial(world: &WorldSpec) -> Self {
        Self {
            obstacles: world.tracks.iter().map(|_| (0.0, 1.0)).collect(),
        }
    }

    /// Obstacle centers and radii in world coordinates.
    pub fn discs(&self, world: &WorldSpec) -> Vec<(f64, f64, f64)> {
        world
            .tracks
            .iter()
            .zip(&self.obstacles)
            .map(|(track, &(s, _))| {
                let (x, y) = point_on_polyline(&track.waypoints, s);
                (x, y, track.radius)
            })
            .collect()
    }
}

fn waypoint_center((r, c): (usize, usize)) -> (f64, f64) {
    (c as f64 + 0.5, r as f64 + 0.5)
}

fn polyline_length(points: &[(usize, usize)]) -> f64 {
    points
        .windows(2)
        .map(|w| {
            let (a, b) = (waypoint_center(w[0]), waypoint_center(w[1]));
            (b.0 - a.0).hypot(b.1 - a.1)
        })
        .sum()
}

fn point_on_polyline(points: &[(usize, usize)], s: f64) -> (f64, f64) {
    let mut remaining = s.max(0.0);
    for w in points.windows(2) {
        let (a, b) = (waypoint_center(w[0]), waypoint_center(w[1]));
        let len = (b.0 - a.0).hypot(b.1 - a.1);
        if remaining <= len && len > 0.0 {
            let f = remaining / len;
            return (a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1));
        }
        remaining -= len;
    }
    waypoint_center(*points.last().expect("track has waypoints"))
}

/// Moves every obstacle `speed` along its polyline, reflecting at the ends.
pub fn advance_dynamics(world: &WorldSpec, state: &DynamicState) -> DynamicState {
    let obstacles = world
        .tracks
        .iter()
        .zip(&state.obstacles)
        .map(|(track, &(s, dir))| {
            let len = polyline_length(&track.waypoints);
            if len == 0.0 || track.speed == 0.0 {
                return (s, dir);
            }
            let mut s = s + dir * track.speed;
            let mut dir = dir;
            // speeds longer than the track reflect more than once
            loop {
                if s > len {
                    s = 2.0 * len - s;
                    dir = -1.0;
                } else if s < 0.0 {
                    s = -s;
                    dir = 1.0;
                } else {
                    break;
                }
            }
            if s == len {
                dir = -1.0;
            } else if s == 0.0 {
                dir = 1.0;
            }
            (s, dir)
        })
        .collect();
    DynamicState { obstacles }
}

/// Whether a disc of the agent's radius at `(x, y)` touches any wall cell.
pub fn overlaps_wall(world: &WorldSpec, x: f64, y: f64) -> bool {
    let reach = AGENT_RADIUS + CONTACT_EPS;
    let (c0, c1) = ((x - reach).floor() as isize, (x + reach).floor() as isize);
    let (r0, r1) = ((y - reach).floor() as isize, (y + reach).floor() as isize);
    for r in r0..=r1 {
        for c in c0..=c1 {
            if !world.is_wall(r, c) {
                continue;
            }
            let nx = x.clamp(c as f64, c as f64 + 1.0);
            let ny = y.clamp(r as f64, r as f64 + 1.0);
            if (x - nx).hypot(y - ny) < reach {
                return true;
            }
        }
    }
    false
}

fn overlaps_obstacle(discs: &[(f64, f64, f64)], x: f64, y: f64) -> bool {
    discs
        .iter()
        .any(|&(ox, oy, r)| (x - ox).hypot(y - oy) < AGENT_RADIUS + r + CONTACT_EPS)
}

/// One primitive step. `t` is the number of steps already taken this episode.
pub fn step(
    world: &WorldSpec,
    pose: &AgentPose,
    dynamics: &DynamicState,
    action: Action,
    t: usize,
    max_steps: usize,
) -> StepResult {
    let (next_pose, reward, mut event) = match action {
        Action::TurnLeft | Action::TurnRight => {
            let delta = if action == Action::TurnLeft { 1 } else { HEADINGS - 1 };
            let next = AgentPose {
                heading_index: (pose.heading_index + delta) % HEADINGS,
                ..*pose
            };
            (next, REWARD_TURN, StepEvent::None)
        }
        Action::Forward => {
            let (dx, dy) = pose.direction();
            let (nx, ny) = (pose.x + FORWARD_STEP * dx, pose.y + FORWARD_STEP * dy);
            if overlaps_wall(world, nx, ny) || overlaps_obstacle(&dynamics.discs(world), nx, ny) {
                (*pose, REWARD_COLLISION, StepEvent::Collision)
            } else {
                let next = AgentPose { x: nx, y: ny, ..*pose };
                let event = match world.cell_at(nx, ny) {
                    Some((r, c)) if world.cell(r, c) == Cell::Goal => StepEvent::GoalReached,
                    _ => StepEvent::None,
                };
                (next, REWARD_FORWARD, event)
            }
        }
    };
    if event == StepEvent::None && t + 1 >= max_steps {
        event = StepEvent::TimeLimit;
    }
    StepResult {
        next_pose,
        reward,
        terminal: event != StepEvent::None,
        event,
    }
}

/// Start-cell center with a seeded cardinal heading, obstacles at track starts.
pub fn reset(world: &WorldSpec, seed: u64) -> (AgentPose, DynamicState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quarter: u8 = rng.gen_range(0..4);
    let (r, c) = world.start();
    let pose = AgentPose {
        x: c as f64 + 0.5,
        y: r as f64 + 0.5,
        heading_index: quarter * (HEADINGS / 4),
    };
    (pose, DynamicState::initial(world))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MazeState {
    pub pose: AgentPose,
    pub dynamics: DynamicState,
    pub t: usize,
}

/// The wheeled-robot maze as an [`Environment`]: actions are
/// `0 = Forward, 1 = TurnLeft, 2 = TurnRight`.
#[derive(Clone, Debug)]
pub struct MazeEnv {
    world: Arc<WorldSpec>,
    max_steps: usize,
}

impl MazeEnv {
    pub fn new(world: WorldSpec, max_steps: usize) -> Self {
        Self {
            world: Arc::new(world),
            max_steps,
        }
    }

    pub fn world(&self) -> &WorldSpec {
        &self.world
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    /// A state with the agent at an arbitrary pose, obstacles at their starts.
    pub fn state_at(&self, pose: AgentPose) -> MazeState {
        MazeState {
            pose,
            dynamics: DynamicState::initial(&self.world),
            t: 0,
        }
    }
}

impl Environment for MazeEnv {
    type State = MazeState;

    fn n_actions(&self) -> usize {
        Action::ALL.len()
    }

    fn obs_shape(&self) -> [usize; 3] {
        [super::render::IMAGE_HEIGHT, super::render::IMAGE_WIDTH, 3]
    }

    fn reset(&self, seed: u64) -> MazeState {
        let (pose, dynamics) = reset(&self.world, seed);
        MazeState { pose, dynamics, t: 0 }
    }

    fn observe(&self, state: &MazeState) -> Observation {
        render(&self.world, &state.pose, &state.dynamics)
    }

    fn step(&self, state: &mut MazeState, action: usize) -> Outcome {
        let action = Action::from_index(action).expect("maze action index out of range");
        let res = step(&self.world, &state.pose, &state.dynamics, action, state.t, self.max_steps);
        state.pose = res.next_pose;
        state.t += 1;
        if !self.world.tracks.is_empty() {
            state.dynamics = advance_dynamics(&self.world, &state.dynamics);
        }
        Outcome {
            reward: res.reward,
            terminal: res.terminal,
            event: res.event,
        }
    }

    fn pose(&self, state: &MazeState) -> PoseRecord {
        (state.pose.x, state.pose.y, state.pose.heading())
    }

    fn theme(&self, state: &MazeState) -> Option<Theme> {
        self.world
            .cell_at(state.pose.x, state.pose.y)
            .map(|(r, c)| self.world.theme(r, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maze::map::{load_map, load_map_with, MapOptions};

    fn corridor() -> WorldSpec {
        load_map(
            "\
##########
#S......G#
##########
",
        )
        .unwrap()
    }

    fn pose(x: f64, y: f64, heading_index: u8) -> AgentPose {
        AgentPose { x, y, heading_index }
    }

    #[test]
    fn forward_with_clearance() {
        let w = corridor();
        let d = DynamicState::initial(&w);
        // 1.0 unit between the disc edge and the wall ahead
        let p = pose(6.7, 1.5, 0);
        let r = step(&w, &p, &d, Action::Forward, 0, 1000);
        assert_eq!(r.reward, 5.0);
        assert!(!r.terminal);
        assert!((r.next_pose.x - 6.9).abs() < 1e-12 && r.next_pose.y == 1.5);
    }

    #[test]
    fn turning_rewards_one() {
        let w = corridor();
        let d = DynamicState::initial(&w);
        let p = pose(3.5, 1.5, 0);
        let r = step(&w, &p, &d, Action::TurnLeft, 0, 1000);
        assert_eq!(r.reward, 1.0);
        assert_eq!((r.next_pose.x, r.next_pose.y), (3.5, 1.5));
        assert!((r.next_pose.heading() - 18f64.to_radians()).abs() < 1e-12);
        let r = step(&w, &p, &d, Action::TurnRight, 0, 1000);
        assert_eq!(r.next_pose.heading_index, 19);
    }

    #[test]
    fn forward_into_wall_collides() {
        let w = corridor();
        let d = DynamicState::initial(&w);
        // facing north: wall face at y = 1.0; after the move the center is 0.25 away
        let p = pose(3.5, 1.45, 5);
        let r = step(&w, &p, &d, Action::Forward, 0, 1000);
        assert_eq!(r.event, StepEvent::Collision);
        assert_eq!(r.reward, -200.0);
        assert!(r.terminal);
        assert_eq!(r.next_pose, p);
    }

    #[test]
    fn reaching_goal_terminates() {
        let w = corridor();
        let d = DynamicState::initial(&w);
        let p = pose(7.9, 1.5, 0);
        let r = step(&w, &p, &d, Action::Forward, 0, 1000);
        assert_eq!(r.event, StepEvent::GoalReached);
        assert_eq!(r.reward, 5.0);
        assert!(r.terminal);
    }

    #[test]
    fn time_limit_is_terminal_without_penalty() {
        let w = corridor();
        let d = DynamicState::initial(&w);
        let r = step(&w, &pose(3.5, 1.5, 0), &d, Action::TurnLeft, 9, 10);
        assert_eq!(r.event, StepEvent::TimeLimit);
        assert_eq!(r.reward, 1.0);
        assert!(r.terminal);
    }

    #[test]
    fn reset_uses_start_center_and_cardinal_heading() {
        let w = load_map_with(
            "\
######
#....#
#...S#
#....#
######
",
            MapOptions { allow_no_goal: true },
        )
        .unwrap();
        let (p, _) = reset(&w, 42);
        assert_eq!((p.x, p.y), (4.5, 2.5));
        assert_eq!(p.heading_index % 5, 0);
        assert_eq!(reset(&w, 42).0, p);
        let mut seen = std::collections::BTreeSet::new();
        for s in 0..64 {
            seen.insert(reset(&w, s).0.heading_index);
        }
        assert!(seen.iter().all(|h| [0, 5, 10, 15].contains(h)));
        assert_eq!(seen.len(), 4);
    }

    fn track_world(tracks: &str) -> WorldSpec {
        load_map_with(&format!("#######\n#S....#\n#.....#\n#######\n{tracks}"), MapOptions { allow_no_goal: true })
            .unwrap()
    }

    #[test]
    fn obstacle_ping_pongs() {
        let w = track_world("!track speed=0.1: (1,2),(1,3)\n");
        let mut d = DynamicState::initial(&w);
        for _ in 0..10 {
            d = advance_dynamics(&w, &d);
        }
        let (x, _, _) = d.discs(&w)[0];
        assert!((x - 3.5).abs() < 1e-9);
        d = advance_dynamics(&w, &d);
        assert_eq!(d.obstacles[0].1, -1.0);
        assert!((d.discs(&w)[0].0 - 3.4).abs() < 1e-9);
    }

    #[test]
    fn no_tracks_no_change() {
        let w = track_world("");
        let d = DynamicState::initial(&w);
        assert_eq!(advance_dynamics(&w, &d), d);
    }

    #[test]
    fn obstacles_move_independently() {
        let w = track_world("!track speed=0.1: (1,2),(1,5)\n!track speed=0.5: (2,1),(2,5)\n");
        let d = advance_dynamics(&w, &advance_dynamics(&w, &DynamicState::initial(&w)));
        let discs = d.discs(&w);
        assert!((discs[0].0 - 2.7).abs() < 1e-9);
        assert!((discs[1].0 - 2.5).abs() < 1e-9);
    }

    #[test]
    fn obstacle_blocks_forward() {
        let w = track_world("!track speed=0: (1,3)\n");
        let d = DynamicState::initial(&w);
        let r = step(&w, &pose(2.8, 1.5, 0), &d, Action::Forward, 0, 100);
        assert_eq!(r.event, StepEvent::Collision);
    }

    #[test]
    fn straight_run_returns_five_per_step() {
        let env = MazeEnv::new(corridor(), 1000);
        let mut s = env.state_at(pose(1.5, 1.5, 0));
        let mut ret = 0.0;
        for _ in 0..40 {
            let o = env.step(&mut s, 0);
            ret += o.reward;
            if o.terminal {
                assert_eq!(o.event, StepEvent::GoalReached);
                break;
            }
        }
        assert_eq!(ret, 5.0 * s.t as f64);
        assert_eq!(s.t, 33);
    }
}
