//! Time-parameterized robot motions and unicycle integration.

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Configuration};

/// Largest integration step used when replaying unicycle controls.
pub const MAX_INTEGRATION_STEP: f64 = 0.05;

/// Number of fixed integration substeps used for a control held for `duration`.
pub fn substeps_for(duration: f64) -> usize {
    ((duration / MAX_INTEGRATION_STEP) - 1e-9).ceil().max(1.0) as usize
}

/// Integrates `x' = v cos θ, y' = v sin θ, θ' = ω` with fixed-step RK4,
/// returning `substeps + 1` states including both endpoints.
pub fn propagate_unicycle(
    state: &Configuration,
    v: f64,
    omega: f64,
    dt: f64,
    substeps: usize,
) -> Vec<Configuration> {
    let substeps = substeps.max(1);
    let h = dt / substeps as f64;
    let (mut x, mut y, mut th) = (state.x, state.y, state.theta.unwrap_or(0.0));
    let mut out = Vec::with_capacity(substeps + 1);
    out.push(Configuration::pose(x, y, th));
    let deriv = |th: f64| (v * th.cos(), v * th.sin(), omega);
    for _ in 0..substeps {
        let k1 = deriv(th);
        let k2 = deriv(th + 0.5 * h * k1.2);
        let k3 = deriv(th + 0.5 * h * k2.2);
        let k4 = deriv(th + h * k3.2);
        x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        y += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        th += h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2);
        out.push(Configuration::pose(x, y, th));
    }
    out
}

/// Final state after holding a control for `dt`, using the replay substep rule.
pub fn propagate_final(state: &Configuration, v: f64, omega: f64, dt: f64) -> Configuration {
    *propagate_unicycle(state, v, omega, dt, substeps_for(dt))
        .last()
        .expect("at least one state")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub v: f64,
    pub omega: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    /// Piecewise-linear motion through timestamped waypoints.
    Geometric { waypoints: Vec<Waypoint> },
    /// Piecewise-constant unicycle controls applied from `start`.
    Kinodynamic {
        start: Configuration,
        controls: Vec<Control>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrajectoryRecord {
    robot: usize,
    duration: f64,
    #[serde(flatten)]
    motion: Motion,
}

/// A robot's motion over `[0, duration]`; afterwards the robot rests at its
/// final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TrajectoryRecord", into = "TrajectoryRecord")]
pub struct Trajectory {
    pub robot: usize,
    motion: Motion,
    /// Segment start times and states (kinodynamic only), plus the final state.
    knots: Vec<(f64, Configuration)>,
    duration: f64,
}

impl From<TrajectoryRecord> for Trajectory {
    fn from(r: TrajectoryRecord) -> Self {
        Trajectory::new(r.robot, r.motion)
    }
}

impl From<Trajectory> for TrajectoryRecord {
    fn from(t: Trajectory) -> Self {
        TrajectoryRecord {
            robot: t.robot,
            duration: t.duration,
            motion: t.motion,
        }
    }
}

impl Trajectory {
    pub fn new(robot: usize, motion: Motion) -> Self {
        let (knots, duration) = match &motion {
            Motion::Geometric { waypoints } => {
                (Vec::new(), waypoints.last().map_or(0.0, |w| w.t))
            }
            Motion::Kinodynamic { start, controls } => {
                let mut knots = Vec::with_capacity(controls.len() + 1);
                let mut t = 0.0;
                let mut s = *start;
                knots.push((t, s));
                for c in controls {
                    s = propagate_final(&s, c.v, c.omega, c.duration);
                    t += c.duration;
                    knots.push((t, s));
                }
                (knots, t)
            }
        };
        Trajectory {
            robot,
            motion,
            knots,
            duration,
        }
    }

    pub fn geometric(robot: usize, waypoints: Vec<Waypoint>) -> Self {
        Trajectory::new(robot, Motion::Geometric { waypoints })
    }

    /// Constant unit-speed traversal of a polyline; zero-length hops are dropped.
    pub fn from_polyline(robot: usize, points: &[Configuration]) -> Self {
        let mut waypoints: Vec<Waypoint> = Vec::with_capacity(points.len());
        for p in points {
            match waypoints.last() {
                None => waypoints.push(Waypoint { t: 0.0, x: p.x, y: p.y }),
                Some(last) => {
                    let d = (p.x - last.x).hypot(p.y - last.y);
                    if d > 0.0 {
                        waypoints.push(Waypoint {
                            t: last.t + d,
                            x: p.x,
                            y: p.y,
                        });
                    }
                }
            }
        }
        Trajectory::geometric(robot, waypoints)
    }

    pub fn kinodynamic(robot: usize, start: Configuration, controls: Vec<Control>) -> Self {
        Trajectory::new(robot, Motion::Kinodynamic { start, controls })
    }

    pub fn motion(&self) -> &Motion {
        &self.motion
    }

    pub fn is_kinodynamic(&self) -> bool {
        matches!(self.motion, Motion::Kinodynamic { .. })
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn start_state(&self) -> Configuration {
        self.state_at(0.0)
    }

    pub fn final_state(&self) -> Configuration {
        self.state_at(self.duration)
    }

    /// State at time `t`; for `t` past the end the robot rests at its final state.
    pub fn state_at(&self, t: f64) -> Configuration {
        let t = t.max(0.0);
        match &self.motion {
            Motion::Geometric { waypoints } => {
                let Some(first) = waypoints.first() else {
                    return Configuration::point(f64::NAN, f64::NAN);
                };
                let last = waypoints.last().expect("nonempty");
                if t >= last.t {
                    return Configuration::point(last.x, last.y);
                }
                if t <= first.t {
                    return Configuration::point(first.x, first.y);
                }
                let i = waypoints.partition_point(|w| w.t <= t);
                let (a, b) = (&waypoints[i - 1], &waypoints[i]);
                let s = (t - a.t) / (b.t - a.t);
                Configuration::point(a.x + (b.x - a.x) * s, a.y + (b.y - a.y) * s)
            }
            Motion::Kinodynamic { controls, .. } => {
                if t >= self.duration {
                    return self.knots.last().expect("knots").1;
                }
                let i = self.knots.partition_point(|k| k.0 <= t) - 1;
                let (t0, s0) = self.knots[i];
                let tau = t - t0;
                if tau <= 0.0 {
                    return s0;
                }
                let c = &controls[i];
                propagate_final(&s0, c.v, c.omega, tau)
            }
        }
    }

    /// Polyline approximation for rendering.
    pub fn polyline(&self, max_dt: f64) -> Vec<(f64, f64)> {
        match &self.motion {
            Motion::Geometric { waypoints } => waypoints.iter().map(|w| (w.x, w.y)).collect(),
            Motion::Kinodynamic { .. } => {
                let n = (self.duration / max_dt).ceil().max(1.0) as usize;
                (0..=n)
                    .map(|k| {
                        let s = self.state_at(self.duration * k as f64 / n as f64);
                        (s.x, s.y)
                    })
                    .collect()
            }
        }
    }
}

/// Normalizes a heading before writing it into a state.
pub fn heading(theta: f64) -> f64 {
    normalize_angle(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn straight_line() {
        let s = propagate_unicycle(&Configuration::pose(0.0, 0.0, 0.0), 1.0, 0.0, 1.0, 10);
        assert_eq!(s.len(), 11);
        let f = s.last().unwrap();
        assert_abs_diff_eq!(f.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.theta.unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn closed_form_arc() {
        let f = propagate_final(&Configuration::pose(0.0, 0.0, 0.0), 1.0, 1.0, PI);
        assert_abs_diff_eq!(f.x, PI.sin(), epsilon = 1e-6);
        assert_abs_diff_eq!(f.y, 1.0 - PI.cos(), epsilon = 1e-6);
        assert!(crate::geometry::angle_diff(f.theta.unwrap(), PI) < 1e-6);
    }

    #[test]
    fn turn_in_place() {
        let f = propagate_final(&Configuration::pose(2.0, 3.0, 0.25), 0.0, 0.5, 2.0);
        assert_eq!((f.x, f.y), (2.0, 3.0));
        assert_abs_diff_eq!(f.theta.unwrap(), 1.25, epsilon = 1e-12);
    }

    #[test]
    fn geometric_state_at() {
        let tr = Trajectory::from_polyline(
            0,
            &[
                Configuration::point(0.0, 0.0),
                Configuration::point(3.0, 4.0),
                Configuration::point(3.0, 4.0),
                Configuration::point(3.0, 6.0),
            ],
        );
        assert_eq!(tr.duration(), 7.0);
        assert_eq!(tr.state_at(0.0), Configuration::point(0.0, 0.0));
        let mid = tr.state_at(2.5);
        assert_abs_diff_eq!(mid.x, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(mid.y, 2.0, epsilon = 1e-12);
        assert_eq!(tr.state_at(107.0), tr.state_at(7.0));
    }

    #[test]
    fn kinodynamic_knots_match_replay() {
        let start = Configuration::pose(1.0, 1.0, 0.3);
        let controls = vec![
            Control { v: 1.0, omega: 0.4, duration: 0.5 },
            Control { v: -0.5, omega: -1.0, duration: 0.5 },
            Control { v: 0.8, omega: 0.0, duration: 0.5 },
        ];
        let tr = Trajectory::kinodynamic(3, start, controls.clone());
        assert_eq!(tr.duration(), 1.5);
        assert_eq!(tr.state_at(0.0), start);
        let mut s = start;
        for c in &controls {
            s = *propagate_unicycle(&s, c.v, c.omega, c.duration, 200).last().unwrap();
        }
        let f = tr.final_state();
        assert_abs_diff_eq!(f.x, s.x, epsilon = 1e-9);
        assert_abs_diff_eq!(f.y, s.y, epsilon = 1e-9);
        assert_eq!(tr.state_at(99.0), f);
    }

    #[test]
    fn serialization_roundtrip() {
        let tr = Trajectory::kinodynamic(
            1,
            Configuration::pose(0.1, 0.2, 0.3),
            vec![Control { v: 0.123456789, omega: -0.5, duration: 0.5 }],
        );
        let text = serde_json::to_string(&tr).unwrap();
        let back: Trajectory = serde_json::from_str(&text).unwrap();
        assert_eq!(back, tr);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["kind"], "kinodynamic");
        assert_eq!(v["duration"], 0.5);
    }

    proptest! {
        #[test]
        fn geometric_roundtrip_lossless(pts in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 1..8)) {
            let pts: Vec<Configuration> = pts.into_iter().map(|(x, y)| Configuration::point(x, y)).collect();
            let tr = Trajectory::from_polyline(0, &pts);
            let back: Trajectory = serde_json::from_str(&serde_json::to_string(&tr).unwrap()).unwrap();
            prop_assert_eq!(back, tr);
        }
    }
}
