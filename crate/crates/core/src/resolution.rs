//! Escalating conflict resolution: refine the decomposition around a
//! conflict, re-solve the region-level problem for the two robots involved
//! with everyone else as fixed capacity consumers, and replan both robots
//! along their new routes around everyone else's motion.
//!
//! Every attempt works on copies; state is only replaced on success.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conflict::{detect_conflicts_with, CheckParams, Conflict, Exec};
use crate::decomposition::{CellId, Decomposition, RegionGraph};
use crate::geometry::{Configuration, Environment, RobotModel};
use crate::fallback::{plan_with_dynamic_obstacles, DynamicObstacleSet};
use crate::guided::{GuidanceParams, PlanRequest, RegionGuide};
use crate::mapf::{solve_mapf_with_background, MapfOptions, RegionPath};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionConfig {
    /// Deepest refinement tried at each expansion layer.
    pub max_refinement: u32,
    /// Seconds allowed for each region-level re-solve.
    pub mapf_budget: f64,
    /// Iteration cap of each continuous replan.
    pub replan_iterations: usize,
    /// Base-grid layers added per expansion.
    pub expansion_step: u32,
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        ResolutionConfig {
            max_refinement: 3,
            mapf_budget: 2.0,
            replan_iterations: 10_000,
            expansion_step: 1,
        }
    }
}

/// Region paths and trajectories of every robot, indexed by robot.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanSet {
    pub paths: Vec<RegionPath>,
    pub trajectories: Vec<Trajectory>,
}

/// Fixed inputs shared by all attempts of one planning invocation.
#[derive(Debug, Clone)]
pub struct ReplanContext<'a> {
    pub env: &'a Environment,
    pub robots: &'a [RobotModel],
    pub starts: &'a [Configuration],
    pub goals: &'a [Configuration],
    pub params: &'a GuidanceParams,
    pub capacity: usize,
    pub check: CheckParams,
    pub cfg: &'a ResolutionConfig,
    pub deadline: Option<Instant>,
}

impl ReplanContext<'_> {
    fn timed_out(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    Committed,
    MapfFailed,
    PlanFailed,
    ConflictsRemain,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionEvent {
    pub robot_a: usize,
    pub robot_b: usize,
    pub t: f64,
    pub layer: u32,
    pub depth: u32,
    /// Leaves in the expanded region.
    pub region_cells: usize,
    /// Leaf count of the refined working decomposition.
    pub leaves_after: usize,
    pub outcome: AttemptOutcome,
}

fn seeds(c: &Conflict, d: &Decomposition) -> BTreeSet<CellId> {
    [&c.pos_a, &c.pos_b]
        .into_iter()
        .filter_map(|p| d.project(p).ok())
        .collect()
}

/// 0 when both robots project to the same leaf, 1 otherwise.
pub fn expansion_layer(c: &Conflict, d: &Decomposition) -> u32 {
    match (d.project(&c.pos_a), d.project(&c.pos_b)) {
        (Ok(a), Ok(b)) if a == b => 0,
        _ => 1,
    }
}

/// Cells robot `j` occupies at region timesteps `0..=len`, found by mapping
/// timestep `tau` to trajectory time `tau * T / len`.
fn aligned_cells(d: &Decomposition, path: &RegionPath, traj: &Trajectory) -> Vec<CellId> {
    let steps = path.cost();
    let t_end = traj.duration();
    (0..=steps)
        .filter_map(|tau| {
            let t = if steps == 0 { t_end } else { tau as f64 * t_end / steps as f64 };
            d.project(&traj.state_at(t)).ok()
        })
        .collect()
}

/// One refine-and-replan attempt at depth `k` over `r_exp`. Commits into
/// `d` and `plans` only if neither robot is left in any conflict.
pub fn refine_and_replan<R: Rng + ?Sized>(
    c: &Conflict,
    r_exp: &BTreeSet<CellId>,
    k: u32,
    d: &mut Decomposition,
    plans: &mut PlanSet,
    ctx: &ReplanContext,
    rng: &mut R,
) -> (AttemptOutcome, usize) {
    let (a, b) = (c.robot_a, c.robot_b);
    let (work, _) = d.refine(r_exp, k);
    let leaves = work.leaf_count();
    let project = |p: &Configuration| work.project(p).ok();
    let endpoints: Option<Vec<CellId>> = [ctx.starts[a], ctx.starts[b], ctx.goals[a], ctx.goals[b]]
        .iter()
        .map(project)
        .collect();
    let Some(endpoints) = endpoints else { return (AttemptOutcome::MapfFailed, leaves) };
    let g = RegionGraph::new(&work, &endpoints);
    let background: Vec<Vec<CellId>> = (0..plans.paths.len())
        .filter(|&j| j != a && j != b)
        .map(|j| aligned_cells(&work, &plans.paths[j], &plans.trajectories[j]))
        .collect();
    let remaining = ctx
        .deadline
        .map_or(Duration::MAX, |dl| dl.saturating_duration_since(Instant::now()));
    let opts = MapfOptions {
        capacity: ctx.capacity,
        budget: Duration::from_secs_f64(ctx.cfg.mapf_budget).min(remaining),
        ..Default::default()
    };
    let sol = match solve_mapf_with_background(
        &g,
        &endpoints[0..2],
        &endpoints[2..4],
        &background,
        &opts,
    ) {
        Ok(s) => s,
        Err(_) => return (AttemptOutcome::MapfFailed, leaves),
    };
    let params = GuidanceParams {
        max_iterations: ctx.cfg.replan_iterations,
        ..ctx.params.clone()
    };
    let mut trajs = plans.trajectories.clone();
    let mut paths = plans.paths.clone();
    // Timing matters as much as the route: `a` yields to everyone but `b`,
    // then `b` yields to everyone including the new `a`.
    let mut obs = DynamicObstacleSet::new(ctx.check.dt_check);
    for j in (0..trajs.len()).filter(|&j| j != a && j != b) {
        obs.push(&trajs[j], ctx.robots[j].radius);
    }
    for (slot, &r) in [a, b].iter().enumerate() {
        let path = RegionPath {
            robot: r,
            cells: sol.paths[slot].cells.clone(),
        };
        let guide = RegionGuide::new(&path, &work);
        let req = PlanRequest {
            robot_index: r,
            robot: ctx.robots[r],
            env: ctx.env,
            start: ctx.starts[r],
            goal: ctx.goals[r],
            guide: Some(&guide),
            params: &params,
            deadline: ctx.deadline,
        };
        match plan_with_dynamic_obstacles(&req, &obs, rng) {
            Ok(t) => {
                obs.push(&t, ctx.robots[r].radius);
                trajs[r] = t;
            }
            Err(_) if ctx.timed_out() => return (AttemptOutcome::Timeout, leaves),
            Err(_) => return (AttemptOutcome::PlanFailed, leaves),
        }
        paths[r] = path;
    }
    let remaining = detect_conflicts_with(&trajs, ctx.robots, ctx.check, None, Some(&[a, b]), Exec::default());
    if !remaining.is_empty() {
        return (AttemptOutcome::ConflictsRemain, leaves);
    }
    *d = work;
    plans.paths = paths;
    plans.trajectories = trajs;
    (AttemptOutcome::Committed, leaves)
}

/// Tries layers upward from [`expansion_layer`] and depths `1..=max_refinement`
/// until an attempt commits or the expanded region covers the whole
/// decomposition. Attempts are appended to `events`.
pub fn resolve_conflict<R: Rng + ?Sized>(
    c: &Conflict,
    d: &mut Decomposition,
    plans: &mut PlanSet,
    ctx: &ReplanContext,
    rng: &mut R,
    events: &mut Vec<ResolutionEvent>,
) -> bool {
    let seeds = seeds(c, d);
    if seeds.is_empty() {
        return false;
    }
    let step = ctx.cfg.expansion_step.max(1);
    let mut layer = expansion_layer(c, d);
    loop {
        let r_exp = d.expand_region(&seeds, layer);
        for k in 1..=ctx.cfg.max_refinement.max(1) {
            if ctx.timed_out() {
                return false;
            }
            let (outcome, leaves_after) = refine_and_replan(c, &r_exp, k, d, plans, ctx, rng);
            events.push(ResolutionEvent {
                robot_a: c.robot_a,
                robot_b: c.robot_b,
                t: c.t,
                layer,
                depth: k,
                region_cells: r_exp.len(),
                leaves_after,
                outcome,
            });
            match outcome {
                AttemptOutcome::Committed => return true,
                AttemptOutcome::Timeout => return false,
                _ => {}
            }
        }
        if d.covers(&r_exp) || layer > d.max_expansion() {
            return false;
        }
        layer += step;
    }
}

/// Upper bound on the attempts [`resolve_conflict`] can make on `d`.
pub fn max_attempts(c: &Conflict, d: &Decomposition, cfg: &ResolutionConfig) -> usize {
    let first = expansion_layer(c, d);
    let step = cfg.expansion_step.max(1);
    let layers = (d.max_expansion().saturating_sub(first)).div_ceil(step) + 2;
    layers as usize * cfg.max_refinement.max(1) as usize
}
