//! End-to-end planners behind one interface: the hierarchical planner with
//! conflict resolution and fallbacks, the prioritized region-guided
//! baseline, and the plain coupled and decoupled baselines.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{detect_conflicts, CheckParams, Conflict};
use crate::decomposition::{grid_decompose, CellId, Decomposition, DecompositionDump, DecompositionError, RegionGraph};
use crate::fallback::{composite_rrt, prioritized_decoupled_rrt};
use crate::geometry::{disc_free, Configuration, Environment, RobotModel};
use crate::guided::{plan_single, GuidanceParams, PlanRequest, RegionGuide};
use crate::mapf::{solve_mapf, MapfOptions, RegionPath};
use crate::resolution::{resolve_conflict, PlanSet, ReplanContext, ResolutionConfig, ResolutionEvent};
use crate::trajectory::Trajectory;

fn default_goal_tolerance() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub env: Environment,
    pub robots: Vec<RobotModel>,
    pub starts: Vec<Configuration>,
    pub goals: Vec<Configuration>,
    /// Seconds.
    pub time_limit: f64,
    pub seed: u64,
    #[serde(default = "default_goal_tolerance")]
    pub goal_tolerance: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("a problem needs at least one robot")]
    NoRobots,
    #[error("robots, starts and goals must have equal lengths")]
    LengthMismatch,
    #[error("all robots must be of the same kind")]
    MixedRobotKinds,
    #[error("time limit must be positive")]
    BadTimeLimit,
    #[error("start of robot {0} is in collision or out of bounds")]
    InvalidStart(usize),
    #[error("goal of robot {0} is in collision or out of bounds")]
    InvalidGoal(usize),
    #[error("starts of robots {0} and {1} overlap")]
    StartsOverlap(usize, usize),
    #[error("goals of robots {0} and {1} overlap")]
    GoalsOverlap(usize, usize),
    #[error(transparent)]
    Decomposition(#[from] DecompositionError),
}

impl Problem {
    pub fn validate(&self) -> Result<(), ProblemError> {
        let n = self.robots.len();
        if n == 0 {
            return Err(ProblemError::NoRobots);
        }
        if self.starts.len() != n || self.goals.len() != n {
            return Err(ProblemError::LengthMismatch);
        }
        if self.robots.iter().any(|r| r.is_kinodynamic() != self.robots[0].is_kinodynamic()) {
            return Err(ProblemError::MixedRobotKinds);
        }
        if !(self.time_limit > 0.0) {
            return Err(ProblemError::BadTimeLimit);
        }
        for i in 0..n {
            let r = self.robots[i].radius;
            if !disc_free(&self.env, &self.starts[i], r) {
                return Err(ProblemError::InvalidStart(i));
            }
            if !disc_free(&self.env, &self.goals[i], r) {
                return Err(ProblemError::InvalidGoal(i));
            }
            for j in 0..i {
                let sum = r + self.robots[j].radius;
                if self.starts[i].dist(&self.starts[j]) < sum {
                    return Err(ProblemError::StartsOverlap(j, i));
                }
                if self.goals[i].dist(&self.goals[j]) < sum {
                    return Err(ProblemError::GoalsOverlap(j, i));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    fn max_diameter(&self) -> f64 {
        self.robots.iter().map(RobotModel::diameter).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Base cell side in robot diameters.
    pub region_factor: f64,
    /// Obstacle overlap fraction at which a cell counts as occupied.
    pub threshold: f64,
    /// Smallest cell side in robot diameters.
    pub min_cell_factor: f64,
    /// Robots allowed in one region at one timestep.
    pub capacity: usize,
    /// Seconds for the initial region-level solve.
    pub mapf_budget: f64,
    pub guidance: GuidanceParams,
    pub dt_check: f64,
    pub segment_len: f64,
    pub resolution: ResolutionConfig,
    /// Resolution calls allowed per robot before falling back.
    pub resolution_calls_per_robot: usize,
    /// Share of the remaining budget given to prioritized fallback planning.
    pub decoupled_fraction: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            region_factor: 5.0,
            threshold: 0.5,
            min_cell_factor: 1.05,
            capacity: 1,
            mapf_budget: 10.0,
            guidance: GuidanceParams::default(),
            dt_check: 0.05,
            segment_len: 1.0,
            resolution: ResolutionConfig::default(),
            resolution_calls_per_robot: 2,
            decoupled_fraction: 0.25,
        }
    }
}

impl PlannerConfig {
    fn check(&self) -> CheckParams {
        CheckParams {
            dt_check: self.dt_check,
            segment_len: self.segment_len,
        }
    }

    /// Planner parameters with the problem's goal tolerance.
    pub fn guidance_for(&self, p: &Problem) -> GuidanceParams {
        GuidanceParams {
            goal_tolerance: p.goal_tolerance,
            ..self.guidance.clone()
        }
    }

    /// Base grid resolution: cells of `region_factor` diameters, at least one.
    pub fn base_resolution(&self, p: &Problem) -> u32 {
        let b = p.env.bounds;
        let side = self.region_factor * p.max_diameter();
        ((b.width().min(b.height()) / side).floor() as u32).max(1)
    }

    pub fn decompose(&self, p: &Problem) -> Result<Decomposition, DecompositionError> {
        grid_decompose(
            Arc::new(p.env.clone()),
            self.base_resolution(p),
            self.threshold,
            self.min_cell_factor * p.max_diameter(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Cipher,
    Pprg,
    Decoupled,
    Coupled,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 4] = [PlannerKind::Cipher, PlannerKind::Pprg, PlannerKind::Decoupled, PlannerKind::Coupled];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Cipher => "cipher",
            PlannerKind::Pprg => "pprg",
            PlannerKind::Decoupled => "decoupled",
            PlannerKind::Coupled => "coupled",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown planner `{s}` (expected cipher, pprg, decoupled or coupled)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Success,
    Failure,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackStage {
    Decoupled,
    Composite,
}

/// Deterministic counters and diagnostics; identical across reruns with the
/// same seed unless a deadline interrupts a phase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub base_resolution: Option<u32>,
    pub effective_capacity: Option<usize>,
    pub mapf_sum_of_costs: Option<usize>,
    pub initial_conflicts: Vec<Conflict>,
    pub conflicts_resolved: usize,
    pub resolution_calls: usize,
    pub resolution_events: Vec<ResolutionEvent>,
    pub fallback_invoked: bool,
    pub fallback_used: Option<FallbackStage>,
    pub decoupled_orders_tried: usize,
    pub failure: Option<String>,
    pub decomposition: Option<DecompositionDump>,
}

/// Wall-clock measurements, kept out of the result file so that reruns are
/// byte-identical.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall: f64,
    pub phases: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub planner: PlannerKind,
    pub status: Status,
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
    pub stats: PlanStats,
    pub config: PlannerConfig,
    #[serde(skip)]
    pub timing: Timing,
}

impl PlanResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn is_success(&self) -> bool {
        self.status == Status::Success
    }
}

/// Bookkeeping shared by all planners.
struct Run<'a> {
    p: &'a Problem,
    cfg: &'a PlannerConfig,
    kind: PlannerKind,
    started: Instant,
    deadline: Instant,
    phase_start: Instant,
    stats: PlanStats,
    timing: Timing,
    rng: ChaCha8Rng,
}

impl<'a> Run<'a> {
    fn new(p: &'a Problem, cfg: &'a PlannerConfig, kind: PlannerKind) -> Self {
        let started = Instant::now();
        Run {
            p,
            cfg,
            kind,
            started,
            deadline: started + Duration::from_secs_f64(p.time_limit),
            phase_start: started,
            stats: PlanStats::default(),
            timing: Timing::default(),
            rng: ChaCha8Rng::seed_from_u64(p.seed),
        }
    }

    fn timed_out(&self) -> bool {
        Instant::now() >= self.deadline
    }

    fn phase(&mut self, name: &str) {
        let now = Instant::now();
        *self.timing.phases.entry(name.to_string()).or_default() += (now - self.phase_start).as_secs_f64();
        self.phase_start = now;
    }

    fn finish(mut self, status: Status, trajectories: Vec<Trajectory>) -> PlanResult {
        self.timing.wall = self.started.elapsed().as_secs_f64();
        let trajectories = if status == Status::Success { trajectories } else { Vec::new() };
        PlanResult {
            planner: self.kind,
            status,
            seed: self.p.seed,
            trajectories,
            stats: self.stats,
            config: self.cfg.clone(),
            timing: self.timing,
        }
    }

    fn fail(mut self, why: impl Into<String>) -> PlanResult {
        let status = if self.timed_out() { Status::Timeout } else { Status::Failure };
        self.stats.failure = Some(why.into());
        self.finish(status, Vec::new())
    }

    /// Decomposes the workspace and solves the region-level problem.
    fn regions(&mut self) -> Result<(Decomposition, Vec<RegionPath>), String> {
        let d = self.cfg.decompose(self.p).map_err(|e| e.to_string())?;
        self.stats.base_resolution = Some(d.resolution());
        self.phase("decompose");
        let project = |c: &Configuration| d.project(c).map_err(|e| e.to_string());
        let starts: Vec<CellId> = self.p.starts.iter().map(project).collect::<Result<_, _>>()?;
        let goals: Vec<CellId> = self.p.goals.iter().map(project).collect::<Result<_, _>>()?;
        let capacity = effective_capacity(self.cfg.capacity, &starts, &goals);
        self.stats.effective_capacity = Some(capacity);
        let forced: Vec<CellId> = starts.iter().chain(&goals).cloned().collect();
        let g = RegionGraph::new(&d, &forced);
        let remaining = self.deadline.saturating_duration_since(Instant::now());
        let opts = MapfOptions {
            capacity,
            budget: Duration::from_secs_f64(self.cfg.mapf_budget).min(remaining),
            ..Default::default()
        };
        let sol = solve_mapf(&g, &starts, &goals, &opts).map_err(|e| format!("region planning: {e}"));
        self.phase("mapf");
        let sol = sol?;
        self.stats.mapf_sum_of_costs = Some(sol.sum_of_costs);
        Ok((d, sol.paths))
    }

    /// Prioritized planning in index order, then one shuffled order, within
    /// `decoupled_fraction` of the remaining budget; then the composite planner.
    fn fallback(&mut self, params: &GuidanceParams) -> Option<Vec<Trajectory>> {
        self.stats.fallback_invoked = true;
        let n = self.p.robots.len();
        let now = Instant::now();
        let share = self.deadline.saturating_duration_since(now).mul_f64(self.cfg.decoupled_fraction);
        let identity: Vec<usize> = (0..n).collect();
        let mut orders = vec![identity.clone()];
        if n > 1 {
            let mut o = identity.clone();
            while o == identity {
                o.shuffle(&mut self.rng);
            }
            orders.push(o);
        }
        let per_order = share / orders.len() as u32;
        for (i, order) in orders.iter().enumerate() {
            let dl = (now + per_order * (i as u32 + 1)).min(self.deadline);
            self.stats.decoupled_orders_tried += 1;
            let r = prioritized_decoupled_rrt(self.p, order, None, params, self.cfg.dt_check, Some(dl), &mut self.rng);
            if let Ok(ts) = r {
                self.stats.fallback_used = Some(FallbackStage::Decoupled);
                self.phase("fallback_decoupled");
                return Some(ts);
            }
        }
        self.phase("fallback_decoupled");
        let r = composite_rrt(self.p, params, Some(self.deadline), None, &mut self.rng);
        self.phase("fallback_composite");
        r.ok().inspect(|_| self.stats.fallback_used = Some(FallbackStage::Composite))
    }
}

/// The configured capacity, raised when more robots start (or end) in one
/// region than it allows.
pub fn effective_capacity(capacity: usize, starts: &[CellId], goals: &[CellId]) -> usize {
    let busiest = |cells: &[CellId]| {
        let mut m: BTreeMap<&CellId, usize> = BTreeMap::new();
        for c in cells {
            *m.entry(c).or_default() += 1;
        }
        m.into_values().max().unwrap_or(0)
    };
    capacity.max(busiest(starts)).max(busiest(goals)).max(1)
}

/// Hierarchical planning: decompose, route regions, plan each robot along
/// its route, then resolve conflicts by local refinement, falling back to
/// unguided multi-robot planners if conflicts remain.
pub fn plan_cipher(p: &Problem, cfg: &PlannerConfig) -> Result<PlanResult, ProblemError> {
    p.validate()?;
    let mut run = Run::new(p, cfg, PlannerKind::Cipher);
    let params = cfg.guidance_for(p);
    let fall_back = |mut run: Run, why: String| {
        run.stats.failure = Some(why);
        if run.timed_out() {
            return run.fail("deadline reached");
        }
        match run.fallback(&params) {
            Some(ts) => {
                run.stats.failure = None;
                run.finish(Status::Success, ts)
            }
            None => run.fail("fallback planners failed"),
        }
    };
    let (mut d, paths) = match run.regions() {
        Ok(x) => x,
        Err(e) => return Ok(fall_back(run, e)),
    };
    let mut trajectories = Vec::with_capacity(p.robots.len());
    for (i, path) in paths.iter().enumerate() {
        let guide = RegionGuide::new(path, &d);
        let req = PlanRequest {
            robot_index: i,
            robot: p.robots[i],
            env: &p.env,
            start: p.starts[i],
            goal: p.goals[i],
            guide: Some(&guide),
            params: &params,
            deadline: Some(run.deadline),
        };
        match plan_single(&req, &mut run.rng) {
            Ok(t) => trajectories.push(t),
            Err(e) => {
                run.phase("guided");
                return Ok(fall_back(run, e.to_string()));
            }
        }
    }
    run.phase("guided");
    let mut plans = PlanSet { paths, trajectories };
    let mut conflicts = detect_conflicts(&plans.trajectories, &p.robots, cfg.check(), Some(&d));
    run.stats.initial_conflicts = conflicts.clone();
    run.phase("detect");
    let cap = cfg.resolution_calls_per_robot * p.robots.len();
    let ctx = ReplanContext {
        env: &p.env,
        robots: &p.robots,
        starts: &p.starts,
        goals: &p.goals,
        params: &params,
        capacity: run.stats.effective_capacity.unwrap_or(cfg.capacity),
        check: cfg.check(),
        cfg: &cfg.resolution,
        deadline: Some(run.deadline),
    };
    while let Some(c) = conflicts.first().cloned() {
        if run.stats.resolution_calls >= cap || run.timed_out() {
            break;
        }
        run.stats.resolution_calls += 1;
        let mut events = Vec::new();
        let ok = resolve_conflict(&c, &mut d, &mut plans, &ctx, &mut run.rng, &mut events);
        run.stats.resolution_events.extend(events);
        if !ok {
            break;
        }
        run.stats.conflicts_resolved += 1;
        conflicts = detect_conflicts(&plans.trajectories, &p.robots, cfg.check(), Some(&d));
    }
    run.phase("resolve");
    run.stats.decomposition = Some(d.dump());
    if conflicts.is_empty() {
        return Ok(run.finish(Status::Success, plans.trajectories));
    }
    let why = format!("{} conflicts left after resolution", conflicts.len());
    Ok(fall_back(run, why))
}

/// Prioritized region-guided planning: region routes, then robots in index
/// order with earlier robots as dynamic obstacles. No conflict resolution.
pub fn plan_pprg(p: &Problem, cfg: &PlannerConfig) -> Result<PlanResult, ProblemError> {
    p.validate()?;
    let mut run = Run::new(p, cfg, PlannerKind::Pprg);
    let params = cfg.guidance_for(p);
    let (d, paths) = match run.regions() {
        Ok(x) => x,
        Err(e) => return Ok(run.fail(e)),
    };
    let guides: Vec<RegionGuide> = paths.iter().map(|path| RegionGuide::new(path, &d)).collect();
    run.stats.decomposition = Some(d.dump());
    let order: Vec<usize> = (0..p.robots.len()).collect();
    let r = prioritized_decoupled_rrt(p, &order, Some(&guides), &params, cfg.dt_check, Some(run.deadline), &mut run.rng);
    run.phase("prioritized");
    Ok(match r {
        Ok(ts) => run.finish(Status::Success, ts),
        Err(e) => run.fail(e.to_string()),
    })
}

/// Unguided baselines with the full time limit: composite joint-space RRT
/// (`Coupled`) or prioritized planning in index order (`Decoupled`).
pub fn plan_baseline(p: &Problem, which: PlannerKind, cfg: &PlannerConfig) -> Result<PlanResult, ProblemError> {
    p.validate()?;
    let mut run = Run::new(p, cfg, which);
    let params = cfg.guidance_for(p);
    let r = match which {
        PlannerKind::Coupled => composite_rrt(p, &params, Some(run.deadline), None, &mut run.rng),
        PlannerKind::Decoupled => {
            let order: Vec<usize> = (0..p.robots.len()).collect();
            prioritized_decoupled_rrt(p, &order, None, &params, cfg.dt_check, Some(run.deadline), &mut run.rng)
        }
        other => panic!("{other} is not a baseline"),
    };
    run.phase(which.name());
    Ok(match r {
        Ok(ts) => run.finish(Status::Success, ts),
        Err(e) => run.fail(e.to_string()),
    })
}

/// Dispatches to the named planner.
pub fn plan(p: &Problem, kind: PlannerKind, cfg: &PlannerConfig) -> Result<PlanResult, ProblemError> {
    match kind {
        PlannerKind::Cipher => plan_cipher(p, cfg),
        PlannerKind::Pprg => plan_pprg(p, cfg),
        PlannerKind::Decoupled | PlannerKind::Coupled => plan_baseline(p, kind, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::validate;
    use crate::geometry::Rect;

    fn problem(n: usize, starts: &[(f64, f64)], goals: &[(f64, f64)]) -> Problem {
        Problem {
            env: Environment::new("open", Rect::new(0.0, 0.0, 16.0, 16.0), vec![]).unwrap(),
            robots: vec![RobotModel::geometric(0.5).unwrap(); n],
            starts: starts.iter().map(|&(x, y)| Configuration::point(x, y)).collect(),
            goals: goals.iter().map(|&(x, y)| Configuration::point(x, y)).collect(),
            time_limit: 20.0,
            seed: 3,
            goal_tolerance: 0.5,
        }
    }

    #[test]
    fn single_robot_needs_no_resolution() {
        let p = problem(1, &[(2.0, 2.0)], &[(14.0, 13.0)]);
        let r = plan_cipher(&p, &PlannerConfig::default()).unwrap();
        assert_eq!(r.status, Status::Success);
        assert!(r.stats.initial_conflicts.is_empty());
        assert_eq!(r.stats.resolution_calls, 0);
        assert!(!r.stats.fallback_invoked);
        assert_eq!(r.stats.base_resolution, Some(3));
    }

    #[test]
    fn goal_in_obstacle_is_rejected() {
        let mut p = problem(1, &[(2.0, 2.0)], &[(8.0, 8.0)]);
        p.env.obstacles.push(Rect::new(7.0, 7.0, 9.0, 9.0));
        assert_eq!(plan_cipher(&p, &PlannerConfig::default()), Err(ProblemError::InvalidGoal(0)));
    }

    #[test]
    fn capacity_grows_with_crowded_starts() {
        let a = CellId::base(0, 0);
        let b = CellId::base(1, 0);
        assert_eq!(effective_capacity(1, &[a.clone(), a.clone(), b.clone()], &[a, b.clone(), b.clone(), b]), 3);
    }

    #[test]
    fn planner_names_roundtrip() {
        for k in PlannerKind::ALL {
            assert_eq!(k.name().parse::<PlannerKind>(), Ok(k));
        }
        assert!("rrt".parse::<PlannerKind>().is_err());
    }

    #[test]
    fn crossing_pair_is_solved_by_every_planner() {
        let p = problem(2, &[(2.0, 8.0), (8.0, 2.0)], &[(14.0, 8.0), (8.0, 14.0)]);
        for kind in PlannerKind::ALL {
            let r = plan(&p, kind, &PlannerConfig::default()).unwrap();
            assert_eq!(r.status, Status::Success, "{kind}: {:?}", r.stats.failure);
            assert!(validate(&r, &p, 0.05).is_valid(), "{kind}");
            let again = plan(&p, kind, &PlannerConfig::default()).unwrap();
            assert_eq!(r.to_json(), again.to_json(), "{kind} is not deterministic");
        }
    }
}
