//! Benchmark environments and scenarios, the validity oracle, the harness
//! and SVG rendering.

mod envgen;
mod harness;
mod scenario;
mod svg;
mod validate;

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use envgen::{gen_environment, EnvKind, EnvParams};
pub use harness::{
    cell_problem, mean_stddev, median, run_benchmark, run_benchmark_with, run_cell, Aggregate, BenchReport, BenchSpec, Cell,
    RunRecord, SCHEMA_VERSION, VALIDATION_DT,
};
pub use scenario::{gen_scenario, Mode, RobotParams, Scenario, PLACEMENT_CLEARANCE};
pub use svg::{render_svg, SvgInput};
pub use validate::{validate, validate_trajectories, ValidationReport, Violation};

use crate::geometry::{disc_free, Configuration, Environment};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("invalid generator parameters: {0}")]
    BadParams(String),
    #[error("no acceptable obstacle layout after {attempts} attempts")]
    Exhausted { attempts: usize },
    #[error("placed only {placed} of {n} robots")]
    Placement { placed: usize, n: usize },
}

/// Starts at the corners (then edge midpoints) of the workspace, each goal
/// mirrored through the center, jittered by up to half a radius per axis.
pub fn diagonal_swap_scenario(env: &Environment, n: usize, robot: RobotParams, seed: u64) -> Result<Scenario, GenError> {
    const SLOTS: [(f64, f64); 8] = [
        (0.1, 0.1),
        (0.9, 0.9),
        (0.1, 0.9),
        (0.9, 0.1),
        (0.5, 0.1),
        (0.5, 0.9),
        (0.1, 0.5),
        (0.9, 0.5),
    ];
    if n == 0 || n > SLOTS.len() {
        return Err(GenError::BadParams(format!("diagonal swap takes 1 to 8 robots, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = env.bounds;
    let j = robot.radius / 2.0;
    let mut at = |fx: f64, fy: f64| {
        let x = b.xmin + fx * b.width() + rng.gen_range(-j..=j);
        let y = b.ymin + fy * b.height() + rng.gen_range(-j..=j);
        Configuration::pose(x, y, rng.gen_range(-PI..PI))
    };
    let starts: Vec<Configuration> = SLOTS[..n].iter().map(|&(fx, fy)| at(fx, fy)).collect();
    let goals: Vec<Configuration> = SLOTS[..n].iter().map(|&(fx, fy)| at(1.0 - fx, 1.0 - fy)).collect();
    if starts.iter().chain(&goals).any(|c| !disc_free(env, c, robot.radius)) {
        return Err(GenError::Placement { placed: 0, n });
    }
    Ok(Scenario {
        environment: env.name.clone(),
        n,
        robot,
        starts,
        goals,
        seed,
    })
}
