use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GenError;
use crate::geometry::{disc_free, Configuration, Environment, GeometryError, RobotModel};
use crate::orchestrator::Problem;

/// Minimum center distance between robots of one set, in radii.
pub const PLACEMENT_CLEARANCE: f64 = 2.2;
/// Placement attempts per robot before giving up.
pub const PLACEMENT_ATTEMPTS: usize = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Geometric,
    Kinodynamic,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "geometric" => Ok(Mode::Geometric),
            "kinodynamic" => Ok(Mode::Kinodynamic),
            _ => Err(format!("unknown mode `{s}` (expected geometric or kinodynamic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotParams {
    pub radius: f64,
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        RobotParams {
            radius: 0.5,
            v_max: 1.0,
            omega_max: 1.0,
        }
    }
}

impl RobotParams {
    pub fn model(&self, mode: Mode) -> Result<RobotModel, GeometryError> {
        match mode {
            Mode::Geometric => RobotModel::geometric(self.radius),
            Mode::Kinodynamic => RobotModel::unicycle(self.radius, self.v_max, self.omega_max),
        }
    }
}

/// Random starts and goals for `n` identical robots. Poses carry headings;
/// geometric problems drop them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Name of the environment the scenario was sampled in.
    pub environment: String,
    pub n: usize,
    pub robot: RobotParams,
    pub starts: Vec<Configuration>,
    pub goals: Vec<Configuration>,
    pub seed: u64,
}

impl Scenario {
    pub fn problem(&self, env: &Environment, mode: Mode, time_limit: f64, seed: u64) -> Result<Problem, GeometryError> {
        let robot = self.robot.model(mode)?;
        let strip = |c: &Configuration| match mode {
            Mode::Geometric => Configuration::point(c.x, c.y),
            Mode::Kinodynamic => Configuration::pose(c.x, c.y, c.theta.unwrap_or(0.0)),
        };
        Ok(Problem {
            env: env.clone(),
            robots: vec![robot; self.n],
            starts: self.starts.iter().map(strip).collect(),
            goals: self.goals.iter().map(strip).collect(),
            time_limit,
            seed,
            goal_tolerance: 0.5,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

pub fn gen_scenario(env: &Environment, n: usize, robot: RobotParams, seed: u64) -> Result<Scenario, GenError> {
    if n == 0 || !(robot.radius > 0.0) {
        return Err(GenError::BadParams("need at least one robot with positive radius".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts = place(env, n, robot.radius, &mut rng)?;
    let goals = place(env, n, robot.radius, &mut rng)?;
    Ok(Scenario {
        environment: env.name.clone(),
        n,
        robot,
        starts,
        goals,
        seed,
    })
}

fn place(env: &Environment, n: usize, r: f64, rng: &mut ChaCha8Rng) -> Result<Vec<Configuration>, GenError> {
    let b = env.bounds;
    let mut out: Vec<Configuration> = Vec::with_capacity(n);
    while out.len() < n {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let x = rng.gen_range(b.xmin..b.xmax);
            let y = rng.gen_range(b.ymin..b.ymax);
            let theta = rng.gen_range(-PI..PI);
            let c = Configuration::pose(x, y, theta);
            if disc_free(env, &c, r) && out.iter().all(|o| o.dist(&c) >= PLACEMENT_CLEARANCE * r) {
                out.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(GenError::Placement { placed: out.len(), n });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;

    fn open() -> Environment {
        Environment::empty("open", Rect::new(0.0, 0.0, 10.0, 10.0)).unwrap()
    }

    #[test]
    fn single_robot_scenario_is_valid() {
        let s = gen_scenario(&open(), 1, RobotParams::default(), 4).unwrap();
        let p = s.problem(&open(), Mode::Geometric, 10.0, 4).unwrap();
        assert!(p.validate().is_ok());
        assert!(p.starts[0].theta.is_none());
    }

    #[test]
    fn scenarios_are_deterministic() {
        let a = gen_scenario(&open(), 6, RobotParams::default(), 9).unwrap();
        assert_eq!(a, gen_scenario(&open(), 6, RobotParams::default(), 9).unwrap());
        assert_ne!(a, gen_scenario(&open(), 6, RobotParams::default(), 10).unwrap());
    }

    #[test]
    fn placements_keep_clearance() {
        let s = gen_scenario(&open(), 12, RobotParams::default(), 2).unwrap();
        for set in [&s.starts, &s.goals] {
            for i in 0..set.len() {
                for j in 0..i {
                    assert!(set[i].dist(&set[j]) >= 1.1);
                }
            }
        }
    }

    #[test]
    fn crowded_env_fails_to_place() {
        let tiny = Environment::empty("tiny", Rect::new(0.0, 0.0, 2.0, 2.0)).unwrap();
        let r = gen_scenario(&tiny, 9, RobotParams::default(), 0);
        // Centers live in a 1×1 square, so at most four fit 1.1 apart.
        assert!(matches!(r, Err(GenError::Placement { placed, n: 9 }) if placed <= 4), "{r:?}");
    }
}
