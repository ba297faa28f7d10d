use super::map::WorldSpec;
use super::sim::{heading_direction, AgentPose, DynamicState};
use crate::env::{Observation, Theme};

pub const IMAGE_WIDTH: usize = 32;
pub const IMAGE_HEIGHT: usize = 24;
pub const FOV_DEG: f64 = 60.0;
/// A wall at perpendicular distance 1 fills half the image height.
const PROJ_SCALE: f64 = 12.0;
const MAX_RAY: f64 = 64.0;

const CEILING: [u8; 3] = [215, 215, 215];
const FLOOR_T1: [u8; 3] = [128, 128, 128];
const FLOOR_T2: [u8; 3] = [120, 40, 150];
const BRICK: [u8; 3] = [190, 45, 35];
const BRICK_DARK: [u8; 3] = [110, 20, 15];
const WALL_T2: [u8; 3] = [18, 18, 22];
const OBSTACLE: [u8; 3] = [255, 140, 0];

struct Hit {
    dist: f64,
    theme: Theme,
    /// Hit a face lying along a row boundary (north/south face).
    ns_face: bool,
}

fn cast(world: &WorldSpec, x: f64, y: f64, dx: f64, dy: f64) -> Option<Hit> {
    let (mut cx, mut cy) = (x.floor() as isize, y.floor() as isize);
    let delta_x = if dx == 0.0 { f64::INFINITY } else { (1.0 / dx).abs() };
    let delta_y = if dy == 0.0 { f64::INFINITY } else { (1.0 / dy).abs() };
    let (step_x, mut side_x) = if dx < 0.0 {
        (-1, (x - cx as f64) * delta_x)
    } else {
        (1, (cx as f64 + 1.0 - x) * delta_x)
    };
    let (step_y, mut side_y) = if dy < 0.0 {
        (-1, (y - cy as f64) * delta_y)
    } else {
        (1, (cy as f64 + 1.0 - y) * delta_y)
    };
    loop {
        let (dist, ns_face) = if side_x < side_y {
            let d = side_x;
            side_x += delta_x;
            cx += step_x;
            (d, false)
        } else {
            let d = side_y;
            side_y += delta_y;
            cy += step_y;
            (d, true)
        };
        if dist > MAX_RAY {
            return None;
        }
        if world.is_wall(cy, cx) {
            let in_bounds = cy >= 0 && cx >= 0 && (cy as usize) < world.rows() && (cx as usize) < world.cols();
            let theme = if in_bounds {
                world.theme(cy as usize, cx as usize)
            } else {
                Theme::Theme1
            };
            return Some(Hit { dist, theme, ns_face });
        }
    }
}

/// Distance along the ray to the nearest dynamic obstacle disc.
fn cast_discs(discs: &[(f64, f64, f64)], x: f64, y: f64, dx: f64, dy: f64) -> Option<f64> {
    discs
        .iter()
        .filter_map(|&(ox, oy, r)| {
            let (fx, fy) = (x - ox, y - oy);
            let b = fx * dx + fy * dy;
            let c = fx * fx + fy * fy - r * r;
            let disc = b * b - c;
            if disc < 0.0 {
                return None;
            }
            let t = -b - disc.sqrt();
            (t > 0.0).then_some(t)
        })
        .min_by(|a, b| a.total_cmp(b))
}

fn shade(c: [u8; 3], dim: bool) -> [u8; 3] {
    if dim {
        c.map(|v| (v as u16 * 4 / 5) as u8)
    } else {
        c
    }
}

/// Projected column height for a surface at perpendicular distance `d`.
pub fn column_height(d: f64) -> usize {
    ((PROJ_SCALE / d).round() as usize).min(IMAGE_HEIGHT)
}

/// First-person raycast view: one ray per image column.
pub fn render(world: &WorldSpec, pose: &AgentPose, dynamics: &DynamicState) -> Observation {
    let mut px = vec![0u8; IMAGE_HEIGHT * IMAGE_WIDTH * 3];
    let floor = match world.cell_at(pose.x, pose.y).map(|(r, c)| world.theme(r, c)) {
        Some(Theme::Theme2) => FLOOR_T2,
        _ => FLOOR_T1,
    };
    let discs = dynamics.discs(world);
    let heading = pose.heading();
    let half_fov = FOV_DEG.to_radians() / 2.0;
    for col in 0..IMAGE_WIDTH {
        let offset = half_fov - FOV_DEG.to_radians() * (col as f64 + 0.5) / IMAGE_WIDTH as f64;
        let (dx, dy) = heading_direction(heading + offset);
        let cos = offset.cos();
        let wall = cast(world, pose.x, pose.y, dx, dy);
        let obstacle = cast_discs(&discs, pose.x, pose.y, dx, dy)
            .filter(|&t| wall.as_ref().map_or(true, |w| t < w.dist));

        // (perpendicular distance, painter for wall rows)
        let (perp, paint): (Option<f64>, Box<dyn Fn(usize, f64) -> [u8; 3]>) = match (obstacle, &wall) {
            (Some(t), _) => (Some(t * cos), Box::new(|_, _| OBSTACLE)),
            (None, Some(hit)) => {
                let (theme, dim) = (hit.theme, hit.ns_face);
                (
                    Some(hit.dist * cos),
                    Box::new(move |_, frac| match theme {
                        Theme::Theme1 => {
                            let band = (frac * 4.0).floor() as i64;
                            shade(if band % 2 == 0 { BRICK } else { BRICK_DARK }, dim)
                        }
                        Theme::Theme2 => WALL_T2,
                    }),
                )
            }
            (None, None) => (None, Box::new(|_, _| CEILING)),
        };
        let (top, bottom, virt_top, virt_h) = match perp {
            Some(d) => {
                let h = column_height(d);
                let top = (IMAGE_HEIGHT - h) / 2;
                let vh = PROJ_SCALE / d;
                (top, top + h, IMAGE_HEIGHT as f64 / 2.0 - vh, 2.0 * vh)
            }
            None => (IMAGE_HEIGHT / 2, IMAGE_HEIGHT / 2, 0.0, 1.0),
        };
        for row in 0..IMAGE_HEIGHT {
            let color = if row < top {
                CEILING
            } else if row >= bottom {
                floor
            } else {
                let frac = ((row as f64 + 0.5 - virt_top) / virt_h).clamp(0.0, 0.999_999);
                paint(row, frac)
            };
            let i = (row * IMAGE_WIDTH + col) * 3;
            px[i..i + 3].copy_from_slice(&color);
        }
    }
    Observation::new(IMAGE_HEIGHT, IMAGE_WIDTH, 3, px)
}
