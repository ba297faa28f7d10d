use std::fmt::Write as _;

use thiserror::Error;

use crate::env::Theme;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    Wall(Theme),
    Floor(Theme),
    Start,
    Goal,
    /// Floor cell marking a dynamic-obstacle waypoint (`D`).
    Waypoint,
}

impl Cell {
    pub fn from_glyph(g: char) -> Option<Cell> {
        Some(match g {
            '#' => Cell::Wall(Theme::Theme1),
            '%' => Cell::Wall(Theme::Theme2),
            '.' => Cell::Floor(Theme::Theme1),
            ',' => Cell::Floor(Theme::Theme2),
            'S' => Cell::Start,
            'G' => Cell::Goal,
            'D' => Cell::Waypoint,
            _ => return None,
        })
    }

    pub fn glyph(&self) -> char {
        match self {
            Cell::Wall(Theme::Theme1) => '#',
            Cell::Wall(Theme::Theme2) => '%',
            Cell::Floor(Theme::Theme1) => '.',
            Cell::Floor(Theme::Theme2) => ',',
            Cell::Start => 'S',
            Cell::Goal => 'G',
            Cell::Waypoint => 'D',
        }
    }

    pub fn is_wall(&self) -> bool {
        matches!(self, Cell::Wall(_))
    }

    fn intrinsic_theme(&self) -> Option<Theme> {
        match *self {
            Cell::Wall(t) | Cell::Floor(t) => Some(t),
            _ => None,
        }
    }
}

/// A moving disc obstacle following a waypoint polyline back and forth.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicTrack {
    /// Waypoints as `(row, col)`; the obstacle moves between cell centers.
    pub waypoints: Vec<(usize, usize)>,
    /// Units per step.
    pub speed: f64,
    pub radius: f64,
}

pub const DEFAULT_OBSTACLE_RADIUS: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MapError {
    #[error("empty map")]
    Empty,
    #[error("unknown glyph {glyph:?} at row {row}, col {col}")]
    UnknownGlyph { row: usize, col: usize, glyph: char },
    #[error("row {row} has length {len}, expected {expected}")]
    RaggedRow { row: usize, len: usize, expected: usize },
    #[error("map has no start cell")]
    NoStart,
    #[error("multiple start cells: ({0}, {1}) and ({2}, {3})")]
    MultipleStarts(usize, usize, usize, usize),
    #[error("map has no goal cell")]
    NoGoal,
    #[error("border cell at row {row}, col {col} is not a wall")]
    UnwalledBorder { row: usize, col: usize },
    #[error("bad track definition on line {line}: {msg}")]
    BadTrack { line: usize, msg: String },
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MapOptions {
    /// Accept maps without a goal cell.
    pub allow_no_goal: bool,
}

/// Parsed, validated maze world. Cells are unit squares; cell `(row, col)`
/// covers `x in [col, col+1)`, `y in [row, row+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldSpec {
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    themes: Vec<Theme>,
    start: (usize, usize),
    pub tracks: Vec<DynamicTrack>,
}

/// A 4-connected set of cells sharing one theme.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThemeRegion {
    pub theme: Theme,
    pub cells: Vec<(usize, usize)>,
}

pub fn load_map(text: &str) -> Result<WorldSpec, MapError> {
    load_map_with(text, MapOptions::default())
}

pub fn load_map_with(text: &str, opts: MapOptions) -> Result<WorldSpec, MapError> {
    let mut grid: Vec<Vec<Cell>> = Vec::new();
    let mut track_lines = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if let Some(rest) = line.strip_prefix("!track") {
            track_lines.push((line_no + 1, rest.to_string()));
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let row = grid.len();
        let cells = line
            .chars()
            .enumerate()
            .map(|(col, g)| Cell::from_glyph(g).ok_or(MapError::UnknownGlyph { row, col, glyph: g }))
            .collect::<Result<Vec<_>, _>>()?;
        grid.push(cells);
    }
    let rows = grid.len();
    if rows == 0 {
        return Err(MapError::Empty);
    }
    let cols = grid[0].len();
    for (r, row) in grid.iter().enumerate() {
        if row.len() != cols {
            return Err(MapError::RaggedRow {
                row: r,
                len: row.len(),
                expected: cols,
            });
        }
    }
    let mut start = None;
    let mut goals = 0;
    for (r, row) in grid.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            match cell {
                Cell::Start => match start {
                    None => start = Some((r, c)),
                    Some((r0, c0)) => return Err(MapError::MultipleStarts(r0, c0, r, c)),
                },
                Cell::Goal => goals += 1,
                _ => {}
            }
        }
    }
    let start = start.ok_or(MapError::NoStart)?;
    if goals == 0 && !opts.allow_no_goal {
        return Err(MapError::NoGoal);
    }
    for (r, row) in grid.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let border = r == 0 || c == 0 || r + 1 == rows || c + 1 == cols;
            if border && !cell.is_wall() {
                return Err(MapError::UnwalledBorder { row: r, col: c });
            }
        }
    }
    let cells: Vec<Cell> = grid.into_iter().flatten().collect();
    let themes = resolve_themes(&cells, rows, cols);
    let mut world = WorldSpec {
        rows,
        cols,
        cells,
        themes,
        start,
        tracks: Vec::new(),
    };
    for (line, spec) in track_lines {
        let track = parse_track(&spec).map_err(|msg| MapError::BadTrack { line, msg })?;
        for &(r, c) in &track.waypoints {
            if r >= rows || c >= cols || world.cell(r, c).is_wall() {
                return Err(MapError::BadTrack {
                    line,
                    msg: format!("waypoint ({r},{c}) is not a free cell"),
                });
            }
        }
        world.tracks.push(track);
    }
    Ok(world)
}

/// Special cells take the majority theme of their 4-neighbours (Theme1 on ties).
fn resolve_themes(cells: &[Cell], rows: usize, cols: usize) -> Vec<Theme> {
    (0..rows * cols)
        .map(|i| {
            if let Some(t) = cells[i].intrinsic_theme() {
                return t;
            }
            let (r, c) = (i / cols, i % cols);
            let mut t1 = 0;
            let mut t2 = 0;
            let neighbours = [
                (r.wrapping_sub(1), c),
                (r + 1, c),
                (r, c.wrapping_sub(1)),
                (r, c + 1),
            ];
            for (nr, nc) in neighbours {
                if nr < rows && nc < cols {
                    match cells[nr * cols + nc].intrinsic_theme() {
                        Some(Theme::Theme1) => t1 += 1,
                        Some(Theme::Theme2) => t2 += 1,
                        None => {}
                    }
                }
            }
            if t2 > t1 {
                Theme::Theme2
            } else {
                Theme::Theme1
            }
        })
        .collect()
}

fn parse_track(spec: &str) -> Result<DynamicTrack, String> {
    let (params, points) = spec.split_once(':').ok_or("missing ':' before waypoint list")?;
    let mut speed = None;
    let mut radius = DEFAULT_OBSTACLE_RADIUS;
    for tok in params.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| format!("expected key=value, got {tok:?}"))?;
        let val: f64 = v.parse().map_err(|_| format!("bad number {v:?}"))?;
        if !val.is_finite() || val < 0.0 {
            return Err(format!("{k} must be a finite non-negative number"));
        }
        match k {
            "speed" => speed = Some(val),
            "radius" => radius = val,
            _ => return Err(format!("unknown track parameter {k:?}")),
        }
    }
    let speed = speed.ok_or("missing speed=")?;
    let mut waypoints = Vec::new();
    let mut rest = points.trim();
    while !rest.is_empty() {
        rest = rest.strip_prefix('(').ok_or_else(|| format!("expected '(' at {rest:?}"))?;
        let close = rest.find(')').ok_or("unclosed '('")?;
        let (r, c) = rest[..close].split_once(',').ok_or("waypoint needs (row,col)")?;
        let r: usize = r.trim().parse().map_err(|_| format!("bad row {r:?}"))?;
        let c: usize = c.trim().parse().map_err(|_| format!("bad col {c:?}"))?;
        waypoints.push((r, c));
        rest = rest[close + 1..].trim_start();
        if let Some(after) = rest.strip_prefix(',') {
            rest = after.trim_start();
        }
    }
    if waypoints.is_empty() {
        return Err("track needs at least one waypoint".into());
    }
    Ok(DynamicTrack {
        waypoints,
        speed,
        radius,
    })
}

impl WorldSpec {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn start(&self) -> (usize, usize) {
        self.start
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    /// Cell containing world point `(x, y)`; points outside the grid count as walls.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let (c, r) = (x.floor() as usize, y.floor() as usize);
        (r < self.rows && c < self.cols).then_some((r, c))
    }

    pub fn is_wall(&self, row: isize, col: isize) -> bool {
        if row < 0 || col < 0 || row as usize >= self.rows || col as usize >= self.cols {
            return true;
        }
        self.cell(row as usize, col as usize).is_wall()
    }

    /// Theme of a cell; special cells resolve to their neighbourhood majority.
    pub fn theme(&self, row: usize, col: usize) -> Theme {
        self.themes[row * self.cols + col]
    }

    pub fn free_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows)
            .flat_map(move |r| (0..self.cols).map(move |c| (r, c)))
            .filter(|&(r, c)| !self.cell(r, c).is_wall())
    }

    pub fn goals(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.free_cells().filter(|&(r, c)| self.cell(r, c) == Cell::Goal)
    }

    /// 4-connected components of equal theme over all cells.
    pub fn theme_regions(&self) -> Vec<ThemeRegion> {
        let mut seen = vec![false; self.cells.len()];
        let mut regions = Vec::new();
        for start in 0..self.cells.len() {
            if seen[start] {
                continue;
            }
            let theme = self.themes[start];
            let mut stack = vec![start];
            seen[start] = true;
            let mut cells = Vec::new();
            while let Some(i) = stack.pop() {
                let (r, c) = (i / self.cols, i % self.cols);
                cells.push((r, c));
                let mut push = |nr: usize, nc: usize| {
                    let j = nr * self.cols + nc;
                    if !seen[j] && self.themes[j] == theme {
                        seen[j] = true;
                        stack.push(j);
                    }
                };
                if r > 0 {
                    push(r - 1, c);
                }
                if r + 1 < self.rows {
                    push(r + 1, c);
                }
                if c > 0 {
                    push(r, c - 1);
                }
                if c + 1 < self.cols {
                    push(r, c + 1);
                }
            }
            cells.sort_unstable();
            regions.push(ThemeRegion { theme, cells });
        }
        regions
    }

    /// Serializes back to the map text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.push(self.cell(r, c).glyph());
            }
            out.push('\n');
        }
        for t in &self.tracks {
            let pts: Vec<String> = t.waypoints.iter().map(|(r, c)| format!("({r},{c})")).collect();
            let _ = writeln!(out, "!track speed={} radius={}: {}", t.speed, t.radius, pts.join(","));
        }
        out
    }
}
