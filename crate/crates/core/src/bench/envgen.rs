use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GenError;
use crate::geometry::{disc_free, union_area_within, Configuration, Environment, Rect};

/// Benchmark environment family. Serialized as its label, e.g. `clutter-20`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EnvKind {
    Empty,
    /// 2×2 rooms with one door per shared wall.
    Rooms,
    /// Random rectangles covering the given percentage of the workspace.
    Clutter(u32),
    /// Four blocks around a central crossing; robots start in the corners.
    DiagonalSwap,
}

impl EnvKind {
    /// The five environments of the standard sweep.
    pub const STANDARD: [EnvKind; 5] = [
        EnvKind::Empty,
        EnvKind::Rooms,
        EnvKind::Clutter(10),
        EnvKind::Clutter(20),
        EnvKind::Clutter(30),
    ];

    pub fn label(self) -> String {
        match self {
            EnvKind::Empty => "empty".into(),
            EnvKind::Rooms => "rooms".into(),
            EnvKind::Clutter(pct) => format!("clutter-{pct}"),
            EnvKind::DiagonalSwap => "diagonal-swap".into(),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for EnvKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "empty" => Ok(EnvKind::Empty),
            "rooms" => Ok(EnvKind::Rooms),
            "diagonal-swap" => Ok(EnvKind::DiagonalSwap),
            _ => s
                .strip_prefix("clutter-")
                .and_then(|p| p.parse::<u32>().ok())
                .filter(|p| (1..100).contains(p))
                .map(EnvKind::Clutter)
                .ok_or_else(|| format!("unknown environment `{s}`")),
        }
    }
}

impl TryFrom<String> for EnvKind {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EnvKind> for String {
    fn from(k: EnvKind) -> Self {
        k.label()
    }
}

/// Generator parameters; lengths are in workspace units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvParams {
    pub bounds: Rect,
    /// Radius of the robots the environment is sized for.
    pub robot_radius: f64,
    pub wall_thickness: f64,
    /// Door width in robot diameters.
    pub door_diameters: f64,
    pub clutter_min_side: f64,
    pub clutter_max_side: f64,
    /// Obstacle-free border around clutter, in robot diameters.
    pub margin_diameters: f64,
    /// Allowed excess of clutter coverage over its target.
    pub coverage_tolerance: f64,
    pub max_attempts: usize,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            bounds: Rect::new(0.0, 0.0, 20.0, 20.0),
            robot_radius: 0.5,
            wall_thickness: 0.5,
            door_diameters: 3.0,
            clutter_min_side: 1.0,
            clutter_max_side: 3.0,
            margin_diameters: 2.0,
            coverage_tolerance: 0.02,
            max_attempts: 20_000,
        }
    }
}

impl EnvParams {
    fn diameter(&self) -> f64 {
        2.0 * self.robot_radius
    }
}

pub fn gen_environment(kind: EnvKind, params: &EnvParams, seed: u64) -> Result<Environment, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = params.bounds;
    if !(b.width() > 0.0 && b.height() > 0.0 && params.robot_radius > 0.0) {
        return Err(GenError::BadParams("bounds and robot radius must be positive".into()));
    }
    let obstacles = match kind {
        EnvKind::Empty => Vec::new(),
        EnvKind::Rooms => rooms(params, &mut rng)?,
        EnvKind::Clutter(pct) => clutter(params, f64::from(pct) / 100.0, &mut rng)?,
        EnvKind::DiagonalSwap => diagonal_blocks(params),
    };
    Environment::new(kind.label(), b, obstacles).map_err(|e| GenError::BadParams(e.to_string()))
}

/// A cross of walls through the center splits the bounds into four rooms;
/// each of the four wall arms gets one door at a random offset.
fn rooms(p: &EnvParams, rng: &mut ChaCha8Rng) -> Result<Vec<Rect>, GenError> {
    let b = p.bounds;
    let (cx, cy) = b.center();
    let half = p.wall_thickness / 2.0;
    let door = p.door_diameters * p.diameter();
    // Doors keep one diameter away from the outer wall and the center block.
    let pad = p.diameter() + half;
    let arm = (b.width().min(b.height()) / 2.0) - 2.0 * pad;
    if !(p.wall_thickness > 0.0) || door > arm {
        return Err(GenError::BadParams("doors do not fit in the room walls".into()));
    }
    let mut door_at = |lo: f64| {
        let start = lo + pad + rng.gen::<f64>() * (arm - door);
        (start, start + door)
    };
    let (d_s, d_n) = (door_at(b.ymin), door_at(cy));
    let (d_w, d_e) = (door_at(b.xmin), door_at(cx));
    let mut walls = Vec::new();
    // Vertical wall, split by its south and north doors.
    for (y0, y1) in [(b.ymin, d_s.0), (d_s.1, d_n.0), (d_n.1, b.ymax)] {
        walls.push(Rect::new(cx - half, y0, cx + half, y1));
    }
    // Horizontal wall, split by its west and east doors.
    for (x0, x1) in [(b.xmin, d_w.0), (d_w.1, d_e.0), (d_e.1, b.xmax)] {
        walls.push(Rect::new(x0, cy - half, x1, cy + half));
    }
    Ok(walls)
}

fn clutter(p: &EnvParams, target: f64, rng: &mut ChaCha8Rng) -> Result<Vec<Rect>, GenError> {
    let b = p.bounds;
    let margin = p.margin_diameters * p.diameter();
    let inner = Rect::new(b.xmin + margin, b.ymin + margin, b.xmax - margin, b.ymax - margin);
    let (lo, hi) = (p.clutter_min_side, p.clutter_max_side);
    if !(0.0 < lo && lo <= hi && hi <= inner.width().min(inner.height())) {
        return Err(GenError::BadParams("clutter sides do not fit inside the margin".into()));
    }
    if !(target > 0.0 && target + p.coverage_tolerance < inner.area() / b.area()) {
        return Err(GenError::BadParams(format!("coverage {target} is not reachable")));
    }
    let mut obstacles: Vec<Rect> = Vec::new();
    let mut coverage = 0.0;
    let mut free = FreeGrid::new(b, p.robot_radius);
    for _ in 0..p.max_attempts {
        if coverage >= target {
            return Ok(obstacles);
        }
        let (w, h) = (rng.gen_range(lo..=hi), rng.gen_range(lo..=hi));
        let x = rng.gen_range(inner.xmin..=inner.xmax - w);
        let y = rng.gen_range(inner.ymin..=inner.ymax - h);
        let rect = Rect::new(x, y, x + w, y + h);
        obstacles.push(rect);
        let c = union_area_within(&obstacles, &b) / b.area();
        if c > target + p.coverage_tolerance || !free.stays_connected(&obstacles) {
            obstacles.pop();
            continue;
        }
        coverage = c;
    }
    Err(GenError::Exhausted {
        attempts: p.max_attempts,
    })
}

/// One block centered in each quadrant, leaving a cross of corridors and a
/// ring road whose width is a quarter of the workspace side.
fn diagonal_blocks(p: &EnvParams) -> Vec<Rect> {
    let b = p.bounds;
    let (w, h) = (b.width(), b.height());
    let mut blocks = Vec::with_capacity(4);
    for (fx, fy) in [(0.2, 0.2), (0.6, 0.2), (0.2, 0.6), (0.6, 0.6)] {
        let x = b.xmin + fx * w;
        let y = b.ymin + fy * h;
        blocks.push(Rect::new(x, y, x + 0.2 * w, y + 0.2 * h));
    }
    blocks
}

/// Robot-center occupancy on a fine lattice, used to reject obstacles that
/// split the free space into several components.
struct FreeGrid {
    bounds: Rect,
    radius: f64,
    nx: usize,
    ny: usize,
    h: f64,
}

impl FreeGrid {
    fn new(bounds: Rect, radius: f64) -> Self {
        let h = radius / 2.0;
        FreeGrid {
            bounds,
            radius,
            nx: (bounds.width() / h).floor() as usize,
            ny: (bounds.height() / h).floor() as usize,
            h,
        }
    }

    fn stays_connected(&mut self, obstacles: &[Rect]) -> bool {
        let env = Environment {
            name: String::new(),
            bounds: self.bounds,
            obstacles: obstacles.to_vec(),
        };
        let free: Vec<bool> = (0..self.nx * self.ny)
            .map(|i| {
                let (ix, iy) = (i % self.nx, i / self.nx);
                let c = Configuration::point(
                    self.bounds.xmin + (ix as f64 + 0.5) * self.h,
                    self.bounds.ymin + (iy as f64 + 0.5) * self.h,
                );
                disc_free(&env, &c, self.radius)
            })
            .collect();
        let total = free.iter().filter(|&&f| f).count();
        let Some(first) = free.iter().position(|&f| f) else {
            return false;
        };
        let mut seen = vec![false; free.len()];
        seen[first] = true;
        let mut queue = VecDeque::from([first]);
        let mut reached = 0;
        while let Some(i) = queue.pop_front() {
            reached += 1;
            let (ix, iy) = (i % self.nx, i / self.nx);
            let mut visit = |j: usize| {
                if free[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if ix > 0 {
                visit(i - 1);
            }
            if ix + 1 < self.nx {
                visit(i + 1);
            }
            if iy > 0 {
                visit(i - self.nx);
            }
            if iy + 1 < self.ny {
                visit(i + self.nx);
            }
        }
        reached == total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_roundtrip() {
        for k in EnvKind::STANDARD.into_iter().chain([EnvKind::DiagonalSwap]) {
            assert_eq!(k.label().parse::<EnvKind>(), Ok(k));
        }
        assert!("clutter-0".parse::<EnvKind>().is_err());
        assert!("forest".parse::<EnvKind>().is_err());
    }

    #[test]
    fn empty_has_no_obstacles() {
        let e = gen_environment(EnvKind::Empty, &EnvParams::default(), 7).unwrap();
        assert!(e.obstacles.is_empty());
    }

    #[test]
    fn rooms_have_four_doors() {
        let p = EnvParams::default();
        let e = gen_environment(EnvKind::Rooms, &p, 1).unwrap();
        assert_eq!(e.obstacles.len(), 6);
        // Scanning along each wall arm finds exactly one passable gap of door width.
        let (cx, cy) = p.bounds.center();
        let d = p.door_diameters * 2.0 * p.robot_radius;
        let arms: [(f64, f64, bool); 4] = [(0.0, cy, true), (cy, 20.0, true), (0.0, cx, false), (cx, 20.0, false)];
        for (lo, hi, vertical) in arms {
            let n = 4000;
            let mut gap = 0.0;
            for i in 0..n {
                let s = lo + (i as f64 + 0.5) * (hi - lo) / n as f64;
                let (x, y) = if vertical { (cx, s) } else { (s, cy) };
                if !e.obstacles.iter().any(|o| o.contains(x, y)) {
                    gap += (hi - lo) / n as f64;
                }
            }
            assert!((gap - d).abs() < 0.02, "gap {gap}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let p = EnvParams::default();
        for k in EnvKind::STANDARD {
            assert_eq!(gen_environment(k, &p, 11).unwrap(), gen_environment(k, &p, 11).unwrap());
        }
        assert_ne!(gen_environment(EnvKind::Clutter(20), &p, 1).unwrap(), gen_environment(EnvKind::Clutter(20), &p, 2).unwrap());
    }

    #[test]
    fn clutter_respects_margin() {
        let p = EnvParams::default();
        let e = gen_environment(EnvKind::Clutter(30), &p, 3).unwrap();
        let m = p.margin_diameters * 2.0 * p.robot_radius;
        for o in &e.obstacles {
            assert!(o.xmin >= m && o.ymin >= m && o.xmax <= 20.0 - m && o.ymax <= 20.0 - m);
            assert!(o.width() >= p.clutter_min_side && o.height() >= p.clutter_min_side);
        }
    }

    #[test]
    fn unreachable_coverage_is_rejected() {
        let r = gen_environment(EnvKind::Clutter(90), &EnvParams::default(), 0);
        assert!(matches!(r, Err(GenError::BadParams(_))));
    }
}
