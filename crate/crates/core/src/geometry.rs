//! Workspace, obstacles and robot footprints, plus the static collision
//! predicates every planner shares.
//!
//! Obstacles are closed axis-aligned rectangles and robots are discs, so a
//! disc touching an obstacle (distance exactly equal to the radius) is in
//! collision.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("bounds must have strictly positive width and height, got {0:?}")]
    DegenerateBounds(Rect),
    #[error("obstacle {index} {rect:?} does not intersect the workspace bounds")]
    ObstacleOutsideBounds { index: usize, rect: Rect },
    #[error("obstacle {index} is degenerate: {rect:?}")]
    DegenerateObstacle { index: usize, rect: Rect },
    #[error("robot radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("unicycle control bounds must be positive (v_max = {v_max}, omega_max = {omega_max})")]
    BadControlBounds { v_max: f64, omega_max: f64 },
}

/// Axis-aligned rectangle, serialized as `[xmin, ymin, xmax, ymax]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl From<[f64; 4]> for Rect {
    fn from(v: [f64; 4]) -> Self {
        Rect::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.xmin, r.ymin, r.xmax, r.ymax]
    }
}

impl Rect {
    pub const fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Rect { xmin, ymin, xmax, ymax }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))
    }

    /// Closed containment test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.xmin && x <= self.xmax && y >= self.ymin && y <= self.ymax
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let r = Rect::new(
            self.xmin.max(other.xmin),
            self.ymin.max(other.ymin),
            self.xmax.min(other.xmax),
            self.ymax.min(other.ymax),
        );
        (r.width() > 0.0 && r.height() > 0.0).then_some(r)
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.intersection(other).is_some()
    }

    /// Euclidean distance from a point to the closed rectangle (0 inside).
    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        let dx = (self.xmin - x).max(0.0).max(x - self.xmax);
        let dy = (self.ymin - y).max(0.0).max(y - self.ymax);
        dx.hypot(dy)
    }

    pub fn inflate(&self, margin: f64) -> Rect {
        Rect::new(
            self.xmin - margin,
            self.ymin - margin,
            self.xmax + margin,
            self.ymax + margin,
        )
    }
}

/// Exact area of the union of `rects` clipped to `clip`.
///
/// Coordinate compression over the clipped rectangles; obstacle counts are
/// small so the cubic cost is irrelevant.
pub fn union_area_within(rects: &[Rect], clip: &Rect) -> f64 {
    let clipped: Vec<Rect> = rects.iter().filter_map(|r| r.intersection(clip)).collect();
    if clipped.is_empty() {
        return 0.0;
    }
    let mut xs: Vec<f64> = clipped.iter().flat_map(|r| [r.xmin, r.xmax]).collect();
    let mut ys: Vec<f64> = clipped.iter().flat_map(|r| [r.ymin, r.ymax]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    ys.sort_by(f64::total_cmp);
    ys.dedup();
    let mut area = 0.0;
    for xw in xs.windows(2) {
        let cx = 0.5 * (xw[0] + xw[1]);
        for yw in ys.windows(2) {
            let cy = 0.5 * (yw[0] + yw[1]);
            if clipped.iter().any(|r| r.contains(cx, cy)) {
                area += (xw[1] - xw[0]) * (yw[1] - yw[0]);
            }
        }
    }
    area
}

/// 2D workspace with static rectangular obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvironmentFile")]
pub struct Environment {
    pub name: String,
    pub bounds: Rect,
    pub obstacles: Vec<Rect>,
}

#[derive(Deserialize)]
struct EnvironmentFile {
    name: String,
    bounds: Rect,
    #[serde(default)]
    obstacles: Vec<Rect>,
}

impl TryFrom<EnvironmentFile> for Environment {
    type Error = GeometryError;

    fn try_from(f: EnvironmentFile) -> Result<Self, Self::Error> {
        Environment::new(f.name, f.bounds, f.obstacles)
    }
}

impl Environment {
    pub fn new(
        name: impl Into<String>,
        bounds: Rect,
        obstacles: Vec<Rect>,
    ) -> Result<Self, GeometryError> {
        if !(bounds.width() > 0.0 && bounds.height() > 0.0) {
            return Err(GeometryError::DegenerateBounds(bounds));
        }
        for (index, rect) in obstacles.iter().enumerate() {
            if !(rect.width() > 0.0 && rect.height() > 0.0) {
                return Err(GeometryError::DegenerateObstacle { index, rect: *rect });
            }
            if !rect.intersects(&bounds) {
                return Err(GeometryError::ObstacleOutsideBounds { index, rect: *rect });
            }
        }
        Ok(Environment {
            name: name.into(),
            bounds,
            obstacles,
        })
    }

    pub fn empty(name: impl Into<String>, bounds: Rect) -> Result<Self, GeometryError> {
        Self::new(name, bounds, Vec::new())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Fraction of the bounds covered by obstacles.
    pub fn coverage(&self) -> f64 {
        union_area_within(&self.obstacles, &self.bounds) / self.bounds.area()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RobotKind {
    Geometric,
    Unicycle { v_max: f64, omega_max: f64 },
}

/// Disc robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    pub radius: f64,
    #[serde(flatten)]
    pub kind: RobotKind,
}

impl RobotModel {
    pub fn geometric(radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) {
            return Err(GeometryError::BadRadius(radius));
        }
        Ok(RobotModel {
            radius,
            kind: RobotKind::Geometric,
        })
    }

    pub fn unicycle(radius: f64, v_max: f64, omega_max: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) {
            return Err(GeometryError::BadRadius(radius));
        }
        if !(v_max > 0.0 && omega_max > 0.0) {
            return Err(GeometryError::BadControlBounds { v_max, omega_max });
        }
        Ok(RobotModel {
            radius,
            kind: RobotKind::Unicycle { v_max, omega_max },
        })
    }

    pub fn is_kinodynamic(&self) -> bool {
        matches!(self.kind, RobotKind::Unicycle { .. })
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.radius
    }

    /// Upper bound on translational speed; geometric robots move at unit speed.
    pub fn max_speed(&self) -> f64 {
        match self.kind {
            RobotKind::Geometric => 1.0,
            RobotKind::Unicycle { v_max, .. } => v_max,
        }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Absolute difference of two headings, in `[0, pi]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(a - b).abs()
}

/// Robot state: position, plus heading for kinodynamic robots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub x: f64,
    pub y: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

impl Configuration {
    pub const fn point(x: f64, y: f64) -> Self {
        Configuration { x, y, theta: None }
    }

    pub fn pose(x: f64, y: f64, theta: f64) -> Self {
        Configuration {
            x,
            y,
            theta: Some(normalize_angle(theta)),
        }
    }

    pub fn dist(&self, other: &Configuration) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(&self, other: &Configuration, s: f64) -> Configuration {
        Configuration {
            x: self.x + (other.x - self.x) * s,
            y: self.y + (other.y - self.y) * s,
            theta: match (self.theta, other.theta) {
                (Some(a), Some(b)) => Some(normalize_angle(a + normalize_angle(b - a) * s)),
                (a, _) => a,
            },
        }
    }

    pub fn midpoint(&self, other: &Configuration) -> Configuration {
        Configuration::point(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }
}

/// True iff a disc of `radius` centered at `p` lies strictly inside the
/// bounds and strictly away from every obstacle.
pub fn disc_free(env: &Environment, p: &Configuration, radius: f64) -> bool {
    let b = &env.bounds;
    if !(p.x - radius > b.xmin && p.x + radius < b.xmax && p.y - radius > b.ymin && p.y + radius < b.ymax)
    {
        return false;
    }
    env.obstacles.iter().all(|o| o.distance_to(p.x, p.y) > radius)
}

/// Checks `disc_free` at evenly spaced points from `a` to `b` (both ends
/// included) whose spacing never exceeds `step`.
pub fn segment_free(
    env: &Environment,
    a: &Configuration,
    b: &Configuration,
    radius: f64,
    step: f64,
) -> bool {
    debug_assert!(step > 0.0);
    let len = a.dist(b);
    let n = (len / step).ceil().max(1.0) as usize;
    (0..=n).all(|i| {
        // Sampling from both ends keeps the check symmetric in (a, b).
        let p = if 2 * i == n {
            a.midpoint(b)
        } else if 2 * i < n {
            a.lerp(b, i as f64 / n as f64)
        } else {
            b.lerp(a, (n - i) as f64 / n as f64)
        };
        disc_free(env, &p, radius)
    })
}

/// Default interpolation step for a robot of the given radius.
pub fn default_step(radius: f64) -> f64 {
    0.5 * radius
}

/// Radius inflation used by planners when checking sampled motions, so that
/// motion between samples spaced `radius / 2` apart stays collision free
/// (sqrt(1 + 1/16) < 1.04).
pub const PLANNER_INFLATION: f64 = 1.04;
