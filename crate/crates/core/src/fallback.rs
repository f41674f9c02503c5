//! Unguided multi-robot planners used when hierarchical resolution gives up:
//! prioritized space-time planning against dynamic obstacles, and a single
//! RRT over the joint space of all robots.
//!
//! The space-time planners also back the prioritized region-guided baseline,
//! which passes a guide per robot.

use std::time::Instant;

use rand::Rng;
use thiserror::Error;

use crate::conflict::last_sample;
use crate::geometry::{Configuration, RobotModel};
use crate::guided::{
    control_bounds, sample_control, sample_guided, sample_uniform, unicycle_metric, GuidanceParams,
    PlanError, PlanRequest, PointIndex, RegionGuide, StaticChecker,
};
use crate::orchestrator::Problem;
use crate::trajectory::{propagate_final, propagate_unicycle, substeps_for, Control, Trajectory, Waypoint};

/// Probability that a geometric space-time extension starts with a wait.
const WAIT_PROBABILITY: f64 = 0.1;
/// Shortest cap on a sampled wait; the cap grows to the obstacle horizon.
const MAX_WAIT: f64 = 2.0;
/// Probability that a geometric extension moves at full speed.
const FULL_SPEED_PROBABILITY: f64 = 0.8;
const MIN_SPEED_FRACTION: f64 = 0.25;
/// Weight of node time in the space-time nearest-neighbour metric.
const TIME_WEIGHT: f64 = 0.1;
/// Probability that a unicycle already at its goal holds still in a joint extension.
const HOLD_PROBABILITY: f64 = 0.8;
/// Separation slack absorbing replay round-off against sampled obstacles.
const CLEARANCE_SLACK: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FallbackError {
    #[error("robot {robot} failed: {cause}")]
    RobotFailed { robot: usize, cause: PlanError },
    #[error("deadline reached")]
    Timeout,
    #[error("iteration budget of {0} exhausted")]
    BudgetExhausted(usize),
}

impl FallbackError {
    fn from_plan(robot: usize, e: PlanError) -> Self {
        match e {
            PlanError::Timeout { .. } => FallbackError::Timeout,
            cause => FallbackError::RobotFailed { robot, cause },
        }
    }
}

/// Trajectories of already planned robots, sampled on the `k * dt` grid.
#[derive(Debug, Clone)]
pub struct DynamicObstacleSet {
    dt: f64,
    obstacles: Vec<(f64, Vec<(f64, f64)>)>,
}

impl DynamicObstacleSet {
    pub fn new(dt: f64) -> Self {
        assert!(dt > 0.0);
        DynamicObstacleSet {
            dt,
            obstacles: Vec::new(),
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn push(&mut self, traj: &Trajectory, radius: f64) {
        let samples = (0..=last_sample(traj.duration(), self.dt))
            .map(|k| {
                let s = traj.state_at(k as f64 * self.dt);
                (s.x, s.y)
            })
            .collect();
        self.obstacles.push((radius, samples));
    }

    pub fn len(&self) -> usize {
        self.obstacles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }

    /// Index after which every obstacle rests.
    pub fn horizon(&self) -> usize {
        self.obstacles.iter().map(|(_, s)| s.len() - 1).max().unwrap_or(0)
    }

    pub fn position(&self, j: usize, k: usize) -> (f64, f64) {
        let s = &self.obstacles[j].1;
        s[k.min(s.len() - 1)]
    }

    /// True iff a disc of `radius` at `(x, y)` keeps clear of every obstacle at grid index `k`.
    pub fn clear(&self, k: usize, x: f64, y: f64, radius: f64) -> bool {
        self.obstacles.iter().enumerate().all(|(j, (rj, _))| {
            let (ox, oy) = self.position(j, k);
            let bound = radius + rj + CLEARANCE_SLACK;
            (x - ox).powi(2) + (y - oy).powi(2) > bound * bound
        })
    }

    /// Resting at `(x, y)` from grid index `k0` onward is safe forever.
    pub fn clear_from(&self, k0: usize, x: f64, y: f64, radius: f64) -> bool {
        (k0..=self.horizon().max(k0)).all(|k| self.clear(k, x, y, radius))
    }

    /// Earliest time from which resting at `(x, y)` stays safe forever.
    pub fn free_after(&self, x: f64, y: f64, radius: f64) -> f64 {
        (0..=self.horizon())
            .rev()
            .find(|&k| !self.clear(k, x, y, radius))
            .map_or(0.0, |k| (k + 1) as f64 * self.dt)
    }

    fn first_index_at_or_after(&self, t: f64) -> usize {
        ((t / self.dt) - 1e-9).ceil().max(0.0) as usize
    }

    fn last_index_at_or_before(&self, t: f64) -> usize {
        ((t / self.dt) + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, Copy)]
struct StNode {
    pos: Configuration,
    t: f64,
    /// Time the robot leaves the parent position.
    depart: f64,
    parent: usize,
}

/// Position along the edge `parent -> node` at time `tau`.
fn edge_position(from: &Configuration, node: &StNode, tau: f64) -> Configuration {
    if tau <= node.depart {
        *from
    } else {
        from.lerp(&node.pos, ((tau - node.depart) / (node.t - node.depart)).min(1.0))
    }
}

fn edge_clear(obs: &DynamicObstacleSet, from: &Configuration, t0: f64, node: &StNode, radius: f64) -> bool {
    if obs.is_empty() {
        return true;
    }
    let lo = obs.first_index_at_or_after(t0);
    let hi = obs.last_index_at_or_before(node.t);
    (lo..=hi).all(|k| {
        let p = edge_position(from, node, k as f64 * obs.dt);
        obs.clear(k, p.x, p.y, radius)
    })
}

fn st_trajectory(robot: usize, nodes: &[StNode], mut i: usize) -> Trajectory {
    let mut chain = vec![i];
    while nodes[i].parent != usize::MAX {
        i = nodes[i].parent;
        chain.push(i);
    }
    chain.reverse();
    let mut wps = vec![Waypoint { t: 0.0, x: nodes[chain[0]].pos.x, y: nodes[chain[0]].pos.y }];
    for w in chain.windows(2) {
        let (p, n) = (&nodes[w[0]], &nodes[w[1]]);
        if n.depart > p.t && n.pos != p.pos {
            wps.push(Waypoint { t: n.depart, x: p.pos.x, y: p.pos.y });
        }
        wps.push(Waypoint { t: n.t, x: n.pos.x, y: n.pos.y });
    }
    Trajectory::geometric(robot, wps)
}

/// Geometric space-time RRT: extensions may begin with a wait and move at a
/// sampled speed; a goal connection only counts if resting at the goal stays
/// clear of every obstacle forever.
fn geometric_spacetime<R: Rng + ?Sized>(
    req: &PlanRequest,
    obs: &DynamicObstacleSet,
    rng: &mut R,
) -> Result<Trajectory, PlanError> {
    req.check_endpoints()?;
    let p = req.params;
    let r = req.robot.radius;
    let chk = req.checker();
    let start = Configuration::point(req.start.x, req.start.y);
    let goal = Configuration::point(req.goal.x, req.goal.y);
    let mut nodes = vec![StNode { pos: start, t: 0.0, depart: 0.0, parent: usize::MAX }];
    let mut index = PointIndex::new(p.extend_step);
    index.insert(0, start.x, start.y);
    let rests_at_goal = |t: f64| obs.clear_from(obs.first_index_at_or_after(t), goal.x, goal.y, r);
    if start == goal && rests_at_goal(0.0) {
        return Ok(st_trajectory(req.robot_index, &nodes, 0));
    }
    let free_at_goal = obs.free_after(goal.x, goal.y, r);
    let mut frontier = req.guide.and_then(|g| g.furthest_containing(&start, 0)).unwrap_or(0);
    let speed = req.robot.max_speed();
    for _ in 0..p.max_iterations {
        if req.timed_out() {
            return Err(PlanError::Timeout { robot: req.robot_index });
        }
        let q = if rng.gen::<f64>() < p.goal_bias {
            goal
        } else {
            sample_guided(req.guide, frontier, p, &req.env.bounds, false, rng)
        };
        let near = index
            .nearest(q.x, q.y, |i| nodes[i].pos.dist(&q) + TIME_WEIGHT * nodes[i].t)
            .expect("root");
        let from = nodes[near];
        // Waits can reach past the last obstacle motion, so no traffic pattern
        // outlasts the set of reachable departure times.
        let max_wait = MAX_WAIT.max(obs.horizon() as f64 * obs.dt - from.t);
        let wait = if rng.gen::<f64>() < WAIT_PROBABILITY { max_wait * rng.gen::<f64>() } else { 0.0 };
        let v = if rng.gen::<f64>() < FULL_SPEED_PROBABILITY {
            speed
        } else {
            speed * (MIN_SPEED_FRACTION + (1.0 - MIN_SPEED_FRACTION) * rng.gen::<f64>())
        };
        let d = from.pos.dist(&q);
        let step = d.min(p.extend_step);
        if step < 1e-9 && wait <= 0.0 {
            continue;
        }
        let to = if step < 1e-9 {
            from.pos
        } else if step >= d {
            q
        } else {
            from.pos.lerp(&q, step / d)
        };
        let depart = from.t + wait;
        let node = StNode { pos: to, t: depart + step / v, depart, parent: near };
        if (step >= 1e-9 && !chk.segment(&from.pos, &to)) || !edge_clear(obs, &from.pos, from.t, &node, r) {
            continue;
        }
        let id = nodes.len();
        nodes.push(node);
        index.insert(id, to.x, to.y);
        if let Some(i) = req.guide.and_then(|g| g.furthest_containing(&to, frontier)) {
            frontier = i;
        }
        if to == goal {
            if rests_at_goal(node.t) {
                return Ok(st_trajectory(req.robot_index, &nodes, id));
            }
            continue;
        }
        let dg = to.dist(&goal);
        if dg <= p.extend_step {
            // Hold position until the goal stays free, then move in.
            let travel = dg / speed;
            let depart = node.t.max(free_at_goal - travel);
            let last = StNode { pos: goal, t: depart + travel, depart, parent: id };
            if chk.segment(&to, &goal) && edge_clear(obs, &to, node.t, &last, r) && rests_at_goal(last.t) {
                nodes.push(last);
                return Ok(st_trajectory(req.robot_index, &nodes, nodes.len() - 1));
            }
        }
    }
    Err(PlanError::BudgetExhausted { robot: req.robot_index, iterations: p.max_iterations })
}

/// States at the grid indices covered by one propagated control, or `None`
/// if any of them touches an obstacle.
fn propagated_clear(
    obs: &DynamicObstacleSet,
    states: &[Configuration],
    t0: f64,
    c: &Control,
    radius: f64,
) -> bool {
    if obs.is_empty() {
        return true;
    }
    let h = c.duration / (states.len() - 1) as f64;
    let lo = obs.first_index_at_or_after(t0);
    let hi = obs.last_index_at_or_before(t0 + c.duration);
    (lo..=hi).all(|k| {
        let tau = k as f64 * obs.dt - t0;
        let j = (tau / h).round();
        let s = if (j * h - tau).abs() < 1e-9 {
            states[(j as usize).min(states.len() - 1)]
        } else {
            propagate_final(&states[0], c.v, c.omega, tau.max(0.0))
        };
        obs.clear(k, s.x, s.y, radius)
    })
}

/// Kinodynamic space-time RRT over (state, time) with the node time a
/// multiple of `dt_prop`; a zero control is always among the candidates.
fn kinodynamic_spacetime<R: Rng + ?Sized>(
    req: &PlanRequest,
    obs: &DynamicObstacleSet,
    rng: &mut R,
) -> Result<Trajectory, PlanError> {
    let (v_max, omega_max) = control_bounds(req)?;
    req.check_endpoints()?;
    let p = req.params;
    let r = req.robot.radius;
    let chk = req.checker();
    let start = Configuration::pose(req.start.x, req.start.y, req.start.theta.unwrap_or(0.0));
    if req.goal_reached(&start) && obs.clear_from(0, start.x, start.y, r) {
        return Ok(Trajectory::kinodynamic(req.robot_index, start, Vec::new()));
    }
    let substeps = substeps_for(p.dt_prop);
    // (state, step count, parent, control into this node)
    let mut nodes: Vec<(Configuration, u32, usize, Control)> =
        vec![(start, 0, usize::MAX, Control { v: 0.0, omega: 0.0, duration: 0.0 })];
    let mut index = PointIndex::new(p.extend_step);
    index.insert(0, start.x, start.y);
    let mut frontier = req.guide.and_then(|g| g.furthest_containing(&start, 0)).unwrap_or(0);
    for _ in 0..p.max_iterations {
        if req.timed_out() {
            return Err(PlanError::Timeout { robot: req.robot_index });
        }
        let q = if rng.gen::<f64>() < p.goal_bias {
            req.goal
        } else {
            sample_guided(req.guide, frontier, p, &req.env.bounds, true, rng)
        };
        let near = index
            .nearest(q.x, q.y, |i| {
                unicycle_metric(&nodes[i].0, &q, r) + TIME_WEIGHT * nodes[i].1 as f64 * p.dt_prop
            })
            .expect("root");
        let (from, steps) = (nodes[near].0, nodes[near].1);
        let t0 = steps as f64 * p.dt_prop;
        let mut best: Option<(f64, Configuration, Control)> = None;
        for c in 0..=p.candidates {
            let (v, w) = if c == 0 { (0.0, 0.0) } else { sample_control(v_max, omega_max, rng) };
            let ctl = Control { v, omega: w, duration: p.dt_prop };
            let states = propagate_unicycle(&from, v, w, p.dt_prop, substeps);
            if !states[1..].iter().all(|s| chk.point(s)) || !propagated_clear(obs, &states, t0, &ctl, r) {
                continue;
            }
            let end = *states.last().expect("nonempty");
            let m = unicycle_metric(&end, &q, r);
            if best.is_none_or(|(bm, _, _)| m < bm) {
                best = Some((m, end, ctl));
            }
        }
        let Some((_, end, ctl)) = best else { continue };
        let id = nodes.len();
        nodes.push((end, steps + 1, near, ctl));
        index.insert(id, end.x, end.y);
        if let Some(i) = req.guide.and_then(|g| g.furthest_containing(&end, frontier)) {
            frontier = i;
        }
        let t1 = (steps + 1) as f64 * p.dt_prop;
        if req.goal_reached(&end) && obs.clear_from(obs.first_index_at_or_after(t1), end.x, end.y, r) {
            let mut controls = Vec::new();
            let mut i = id;
            while nodes[i].2 != usize::MAX {
                controls.push(nodes[i].3);
                i = nodes[i].2;
            }
            controls.reverse();
            return Ok(Trajectory::kinodynamic(req.robot_index, start, controls));
        }
    }
    Err(PlanError::BudgetExhausted { robot: req.robot_index, iterations: p.max_iterations })
}

/// Single-robot space-time planning around `obs`, dispatching on robot kind.
pub fn plan_with_dynamic_obstacles<R: Rng + ?Sized>(
    req: &PlanRequest,
    obs: &DynamicObstacleSet,
    rng: &mut R,
) -> Result<Trajectory, PlanError> {
    if req.robot.is_kinodynamic() {
        kinodynamic_spacetime(req, obs, rng)
    } else {
        geometric_spacetime(req, obs, rng)
    }
}

/// Plans robots one at a time in `order`, each treating the robots before it
/// as dynamic obstacles. `guides`, when given, holds one guide per robot.
pub fn prioritized_decoupled_rrt<R: Rng + ?Sized>(
    p: &Problem,
    order: &[usize],
    guides: Option<&[RegionGuide]>,
    params: &GuidanceParams,
    dt_check: f64,
    deadline: Option<Instant>,
    rng: &mut R,
) -> Result<Vec<Trajectory>, FallbackError> {
    let n = p.robots.len();
    assert!(order.len() == n, "order must be a permutation of the robots");
    let mut obs = DynamicObstacleSet::new(dt_check);
    let mut out: Vec<Option<Trajectory>> = vec![None; n];
    for &i in order {
        let req = PlanRequest {
            robot_index: i,
            robot: p.robots[i],
            env: &p.env,
            start: p.starts[i],
            goal: p.goals[i],
            guide: guides.map(|g| &g[i]),
            params,
            deadline,
        };
        let t = plan_with_dynamic_obstacles(&req, &obs, rng).map_err(|e| FallbackError::from_plan(i, e))?;
        obs.push(&t, p.robots[i].radius);
        out[i] = Some(t);
    }
    Ok(out.into_iter().map(|t| t.expect("every robot planned")).collect())
}

/// Joint-space validity shared by both composite planners.
struct JointChecker<'a> {
    robots: &'a [RobotModel],
    checkers: Vec<StaticChecker<'a>>,
    starts: &'a [Configuration],
    goals: &'a [Configuration],
    inflation: f64,
}

impl<'a> JointChecker<'a> {
    fn new(p: &'a Problem, inflation: f64) -> Self {
        let checkers = (0..p.robots.len())
            .map(|i| StaticChecker::new(&p.env, p.robots[i].radius, &[p.starts[i], p.goals[i]]))
            .collect();
        JointChecker {
            robots: &p.robots,
            checkers,
            starts: &p.starts,
            goals: &p.goals,
            inflation,
        }
    }

    fn at_endpoint(&self, i: usize, x: f64, y: f64) -> bool {
        (self.starts[i].x, self.starts[i].y) == (x, y) || (self.goals[i].x, self.goals[i].y) == (x, y)
    }

    /// `pos(i)` gives robot i's planar position.
    fn valid(&self, pos: impl Fn(usize) -> (f64, f64), static_check: bool) -> bool {
        let n = self.robots.len();
        for i in 0..n {
            let (x, y) = pos(i);
            if static_check && !self.checkers[i].point(&Configuration::point(x, y)) {
                return false;
            }
            for j in 0..i {
                let (xj, yj) = pos(j);
                let exact = self.at_endpoint(i, x, y) && self.at_endpoint(j, xj, yj);
                let sum = self.robots[i].radius + self.robots[j].radius;
                let bound = if exact { sum + CLEARANCE_SLACK } else { sum * self.inflation };
                if (x - xj).powi(2) + (y - yj).powi(2) <= bound * bound {
                    return false;
                }
            }
        }
        true
    }
}

struct JointTree {
    nodes: Vec<Vec<f64>>,
    parent: Vec<usize>,
}

impl JointTree {
    fn nearest(&self, q: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, n) in self.nodes.iter().enumerate() {
            let d: f64 = n.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    fn path_to(&self, mut i: usize) -> Vec<Vec<f64>> {
        let mut out = vec![self.nodes[i].clone()];
        while self.parent[i] != usize::MAX {
            i = self.parent[i];
            out.push(self.nodes[i].clone());
        }
        out.reverse();
        out
    }
}

fn max_displacement(a: &[f64], b: &[f64]) -> f64 {
    a.chunks(2)
        .zip(b.chunks(2))
        .map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1]))
        .fold(0.0, f64::max)
}

fn lerp_joint(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + (y - x) * s).collect()
}

/// Joint straight-line motion checked at substeps no longer than a quarter
/// of the smallest radius per robot.
fn joint_segment_valid(chk: &JointChecker, a: &[f64], b: &[f64], step: f64) -> bool {
    let n = (max_displacement(a, b) / step).ceil().max(1.0) as usize;
    (1..=n).all(|k| {
        let q = if k == n { b.to_vec() } else { lerp_joint(a, b, k as f64 / n as f64) };
        chk.valid(|i| (q[2 * i], q[2 * i + 1]), true)
    })
}

fn composite_geometric<R: Rng + ?Sized>(
    p: &Problem,
    params: &GuidanceParams,
    deadline: Option<Instant>,
    max_iterations: Option<usize>,
    rng: &mut R,
) -> Result<Vec<Trajectory>, FallbackError> {
    let n = p.robots.len();
    let chk = JointChecker::new(p, crate::geometry::PLANNER_INFLATION);
    let flat = |cs: &[Configuration]| cs.iter().flat_map(|c| [c.x, c.y]).collect::<Vec<f64>>();
    let (qs, qg) = (flat(&p.starts), flat(&p.goals));
    let sub = 0.25 * p.robots.iter().map(|r| r.radius).fold(f64::INFINITY, f64::min);
    let mut trees = [
        JointTree { nodes: vec![qs.clone()], parent: vec![usize::MAX] },
        JointTree { nodes: vec![qg.clone()], parent: vec![usize::MAX] },
    ];
    let extend = |tree: &mut JointTree, q: &[f64]| -> Option<(usize, bool)> {
        let near = tree.nearest(q);
        let from = tree.nodes[near].clone();
        let d = max_displacement(&from, q);
        if d <= 1e-12 {
            return Some((near, true));
        }
        let reached = d <= params.extend_step;
        let to = if reached { q.to_vec() } else { lerp_joint(&from, q, params.extend_step / d) };
        if !joint_segment_valid(&chk, &from, &to, sub) {
            return None;
        }
        tree.nodes.push(to);
        tree.parent.push(near);
        Some((tree.nodes.len() - 1, reached))
    };
    let mut it = 0usize;
    loop {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(FallbackError::Timeout);
        }
        if max_iterations.is_some_and(|m| it >= m) {
            return Err(FallbackError::BudgetExhausted(it));
        }
        let (a, b) = if it.is_multiple_of(2) { (0, 1) } else { (1, 0) };
        it += 1;
        let q: Vec<f64> = if rng.gen::<f64>() < params.goal_bias {
            trees[b].nodes[0].clone()
        } else {
            (0..n)
                .flat_map(|i| {
                    let c = sample_uniform(&p.env.bounds.inflate(-p.robots[i].radius), false, rng);
                    [c.x, c.y]
                })
                .collect()
        };
        let Some((new, _)) = extend(&mut trees[a], &q) else { continue };
        let target = trees[a].nodes[new].clone();
        while let Some((j, reached)) = extend(&mut trees[b], &target) {
            if reached {
                let (ia, ib) = if a == 0 { (new, j) } else { (j, new) };
                let mut path = trees[0].path_to(ia);
                let mut tail = trees[1].path_to(ib);
                tail.reverse();
                path.extend(tail.into_iter().skip(1));
                return Ok(split_joint_path(&path, n));
            }
        }
    }
}

/// Per-robot waypoints on the common clock where each joint segment lasts
/// as long as its largest single-robot displacement.
fn split_joint_path(path: &[Vec<f64>], n: usize) -> Vec<Trajectory> {
    let mut times = vec![0.0];
    let mut keep = vec![0usize];
    for k in 1..path.len() {
        let d = max_displacement(&path[*keep.last().expect("nonempty")], &path[k]);
        if d > 0.0 {
            times.push(times.last().expect("nonempty") + d);
            keep.push(k);
        }
    }
    (0..n)
        .map(|i| {
            let wps = keep
                .iter()
                .zip(&times)
                .map(|(&k, &t)| Waypoint { t, x: path[k][2 * i], y: path[k][2 * i + 1] })
                .collect();
            Trajectory::geometric(i, wps)
        })
        .collect()
}

fn composite_kinodynamic<R: Rng + ?Sized>(
    p: &Problem,
    params: &GuidanceParams,
    deadline: Option<Instant>,
    max_iterations: Option<usize>,
    rng: &mut R,
) -> Result<Vec<Trajectory>, FallbackError> {
    let n = p.robots.len();
    let chk = JointChecker::new(p, 1.0);
    let reqs: Vec<PlanRequest> = (0..n)
        .map(|i| PlanRequest {
            robot_index: i,
            robot: p.robots[i],
            env: &p.env,
            start: p.starts[i],
            goal: p.goals[i],
            guide: None,
            params,
            deadline,
        })
        .collect();
    let bounds: Vec<(f64, f64)> = reqs
        .iter()
        .map(|r| control_bounds(r).map_err(|e| FallbackError::from_plan(r.robot_index, e)))
        .collect::<Result<_, _>>()?;
    let start: Vec<Configuration> = p
        .starts
        .iter()
        .map(|s| Configuration::pose(s.x, s.y, s.theta.unwrap_or(0.0)))
        .collect();
    let all_done = |s: &[Configuration]| (0..n).all(|i| reqs[i].goal_reached(&s[i]));
    if all_done(&start) {
        return Ok((0..n).map(|i| Trajectory::kinodynamic(i, start[i], Vec::new())).collect());
    }
    let substeps = substeps_for(params.dt_prop);
    let metric = |a: &[Configuration], b: &[Configuration]| -> f64 {
        (0..n).map(|i| unicycle_metric(&a[i], &b[i], p.robots[i].radius)).sum()
    };
    let mut nodes: Vec<Vec<Configuration>> = vec![start.clone()];
    let mut parent: Vec<(usize, Vec<Control>)> = vec![(usize::MAX, Vec::new())];
    let mut it = 0usize;
    loop {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(FallbackError::Timeout);
        }
        if max_iterations.is_some_and(|m| it >= m) {
            return Err(FallbackError::BudgetExhausted(it));
        }
        it += 1;
        let q: Vec<Configuration> = if rng.gen::<f64>() < params.goal_bias {
            p.goals.clone()
        } else {
            (0..n).map(|_| sample_uniform(&p.env.bounds, true, rng)).collect()
        };
        let near = (0..nodes.len())
            .min_by(|&a, &b| metric(&nodes[a], &q).total_cmp(&metric(&nodes[b], &q)))
            .expect("root");
        let from = nodes[near].clone();
        let mut best: Option<(f64, Vec<Configuration>, Vec<Control>)> = None;
        for _ in 0..params.candidates {
            let ctls: Vec<Control> = (0..n)
                .map(|i| {
                    let (v, w) = if reqs[i].goal_reached(&from[i]) && rng.gen::<f64>() < HOLD_PROBABILITY {
                        (0.0, 0.0)
                    } else {
                        sample_control(bounds[i].0, bounds[i].1, rng)
                    };
                    Control { v, omega: w, duration: params.dt_prop }
                })
                .collect();
            let states: Vec<Vec<Configuration>> = (0..n)
                .map(|i| propagate_unicycle(&from[i], ctls[i].v, ctls[i].omega, params.dt_prop, substeps))
                .collect();
            let ok = (1..=substeps).all(|j| {
                (0..n).all(|i| chk.checkers[i].point(&states[i][j]))
                    && chk.valid(|i| (states[i][j].x, states[i][j].y), false)
            });
            if !ok {
                continue;
            }
            let end: Vec<Configuration> = states.iter().map(|s| *s.last().expect("nonempty")).collect();
            let m = metric(&end, &q);
            if best.as_ref().is_none_or(|(bm, _, _)| m < *bm) {
                best = Some((m, end, ctls));
            }
        }
        let Some((_, end, ctls)) = best else { continue };
        let done = all_done(&end);
        nodes.push(end);
        parent.push((near, ctls));
        if done {
            let mut chain = Vec::new();
            let mut i = nodes.len() - 1;
            while parent[i].0 != usize::MAX {
                chain.push(parent[i].1.clone());
                i = parent[i].0;
            }
            chain.reverse();
            return Ok((0..n)
                .map(|r| {
                    let mut controls: Vec<Control> = chain.iter().map(|c| c[r]).collect();
                    while controls.last().is_some_and(|c| c.v == 0.0 && c.omega == 0.0) {
                        controls.pop();
                    }
                    Trajectory::kinodynamic(r, start[r], controls)
                })
                .collect());
        }
    }
}

/// One RRT over the joint space of all robots. Runs until success, the
/// deadline, or `max_iterations` if given.
pub fn composite_rrt<R: Rng + ?Sized>(
    p: &Problem,
    params: &GuidanceParams,
    deadline: Option<Instant>,
    max_iterations: Option<usize>,
    rng: &mut R,
) -> Result<Vec<Trajectory>, FallbackError> {
    if p.robots.iter().any(RobotModel::is_kinodynamic) {
        composite_kinodynamic(p, params, deadline, max_iterations, rng)
    } else {
        composite_geometric(p, params, deadline, max_iterations, rng)
    }
}
