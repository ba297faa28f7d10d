use metanav::maze::{load_map, WorldSpec};
use rand::Rng;

/// Random valid map text: walled border, random interior, one start, at
/// least one goal, optionally a few dynamic tracks.
pub fn random_map_text<R: Rng>(rng: &mut R, with_tracks: bool) -> String {
    let rows = rng.gen_range(3..10);
    let cols = rng.gen_range(4..12);
    let wall = |rng: &mut R| if rng.gen_bool(0.5) { '#' } else { '%' };
    let mut grid: Vec<Vec<char>> = (0..rows)
        .map(|r| {
            (0..cols)
                .map(|c| {
                    if r == 0 || c == 0 || r + 1 == rows || c + 1 == cols {
                        wall(rng)
                    } else {
                        match rng.gen_range(0..10) {
                            0 | 1 => wall(rng),
                            2..=5 => '.',
                            _ => ',',
                        }
                    }
                })
                .collect()
        })
        .collect();
    let interior: Vec<(usize, usize)> = (1..rows - 1).flat_map(|r| (1..cols - 1).map(move |c| (r, c))).collect();
    let pick = |rng: &mut R| interior[rng.gen_range(0..interior.len())];
    let s = pick(rng);
    grid[s.0][s.1] = 'S';
    let mut g = pick(rng);
    while g == s {
        g = pick(rng);
    }
    grid[g.0][g.1] = 'G';
    for _ in 0..rng.gen_range(0..3) {
        let p = pick(rng);
        if !matches!(grid[p.0][p.1], 'S' | 'G') {
            grid[p.0][p.1] = if rng.gen_bool(0.5) { 'G' } else { 'D' };
        }
    }
    let mut text: String = grid.iter().map(|row| row.iter().collect::<String>() + "\n").collect();
    if with_tracks {
        let free: Vec<(usize, usize)> = interior
            .iter()
            .copied()
            .filter(|&(r, c)| !matches!(grid[r][c], '#' | '%'))
            .collect();
        for _ in 0..rng.gen_range(0..3) {
            let n = rng.gen_range(1..4);
            let pts: Vec<String> = (0..n)
                .map(|_| {
                    let (r, c) = free[rng.gen_range(0..free.len())];
                    format!("({r},{c})")
                })
                .collect();
            let speed = rng.gen_range(0..40) as f64 / 100.0;
            let radius = rng.gen_range(1..4) as f64 / 10.0;
            text += &format!("!track speed={speed} radius={radius}: {}\n", pts.join(","));
        }
    }
    text
}

pub fn random_world<R: Rng>(rng: &mut R, with_tracks: bool) -> WorldSpec {
    load_map(&random_map_text(rng, with_tracks)).expect("generator emits valid maps")
}
