//! Independent validity check of a plan. Shares only `Trajectory::state_at`
//! with the planners: obstacle clearance, robot separation and endpoint
//! errors are recomputed here from scratch.

use serde::{Deserialize, Serialize};

use crate::geometry::{Configuration, Rect};
use crate::orchestrator::{PlanResult, Problem};
use crate::trajectory::Trajectory;

/// Absorbs rounding in distance computations.
const SLACK: f64 = 1e-9;
/// Required agreement between a trajectory's first state and its start.
pub const START_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// The result does not hold one trajectory per robot, in robot order.
    Shape { expected: usize, found: usize },
    /// The first state is not the robot's start.
    Start { robot: usize, error: f64 },
    /// The final state misses the goal by more than the tolerance.
    Goal { robot: usize, error: f64 },
    /// The disc leaves the bounds or overlaps an obstacle, first at `t`.
    Static { robot: usize, t: f64 },
    /// Two discs overlap, first at `t`; `distance` is the center distance then.
    Collision { robot_a: usize, robot_b: usize, t: f64, distance: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Time samples checked per robot.
    pub samples: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a successful result. A result without a trajectory per robot
/// (for instance a failed run) reports a shape violation.
pub fn validate(result: &PlanResult, p: &Problem, dt: f64) -> ValidationReport {
    validate_trajectories(&result.trajectories, p, dt)
}

/// Samples every trajectory at `k * dt` up to the longest duration, holding
/// finished robots at their final state. Each contiguous run of violating
/// samples is reported once, at its first time.
pub fn validate_trajectories(trajs: &[Trajectory], p: &Problem, dt: f64) -> ValidationReport {
    assert!(dt > 0.0, "dt must be positive");
    let n = p.robots.len();
    let mut report = ValidationReport::default();
    if trajs.len() != n || trajs.iter().enumerate().any(|(i, t)| t.robot != i) {
        report.violations.push(Violation::Shape {
            expected: n,
            found: trajs.len(),
        });
        return report;
    }
    for (i, t) in trajs.iter().enumerate() {
        let s = t.state_at(0.0);
        let error = planar(&s, &p.starts[i]);
        if !(error <= START_TOLERANCE) {
            report.violations.push(Violation::Start { robot: i, error });
        }
        let error = planar(&t.state_at(t.duration()), &p.goals[i]);
        if !(error <= p.goal_tolerance) {
            report.violations.push(Violation::Goal { robot: i, error });
        }
    }
    let horizon = trajs.iter().map(Trajectory::duration).fold(0.0, f64::max);
    let steps = (horizon / dt).ceil() as usize;
    report.samples = steps + 1;
    let mut in_static = vec![false; n];
    let mut in_collision = vec![false; n * n];
    for k in 0..=steps {
        let t = (k as f64 * dt).min(horizon);
        let pos: Vec<(f64, f64)> = trajs
            .iter()
            .map(|tr| {
                let s = tr.state_at(t);
                (s.x, s.y)
            })
            .collect();
        for i in 0..n {
            let bad = !inside(&p.env.bounds, pos[i], p.robots[i].radius)
                || p.env.obstacles.iter().any(|o| rect_distance(o, pos[i]) < p.robots[i].radius - SLACK);
            if bad && !in_static[i] {
                report.violations.push(Violation::Static { robot: i, t });
            }
            in_static[i] = bad;
            for j in i + 1..n {
                let distance = (pos[i].0 - pos[j].0).hypot(pos[i].1 - pos[j].1);
                let bad = distance < p.robots[i].radius + p.robots[j].radius - SLACK;
                if bad && !in_collision[i * n + j] {
                    report.violations.push(Violation::Collision {
                        robot_a: i,
                        robot_b: j,
                        t,
                        distance,
                    });
                }
                in_collision[i * n + j] = bad;
            }
        }
    }
    report
}

fn planar(a: &Configuration, b: &Configuration) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

fn inside(b: &Rect, (x, y): (f64, f64), r: f64) -> bool {
    x - r >= b.xmin - SLACK && x + r <= b.xmax + SLACK && y - r >= b.ymin - SLACK && y + r <= b.ymax + SLACK
}

fn rect_distance(o: &Rect, (x, y): (f64, f64)) -> f64 {
    let dx = (o.xmin - x).max(0.0).max(x - o.xmax);
    let dy = (o.ymin - y).max(0.0).max(y - o.ymax);
    dx.hypot(dy)
}
