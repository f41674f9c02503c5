//! Region-guided single-robot planners: RRT-Connect for geometric robots and
//! a forward-propagation kinodynamic RRT for unicycles.
//!
//! Both planners ignore other robots. Guidance comes from a [`RegionGuide`],
//! a region path flattened to rectangles; without a guide (or with
//! `p_guided = 0`) they consume exactly the same random stream as an
//! unguided planner.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::Decomposition;
use crate::geometry::{
    angle_diff, disc_free, Configuration, Environment, Rect, RobotKind, RobotModel,
    PLANNER_INFLATION,
};
use crate::mapf::RegionPath;
use crate::trajectory::{propagate_unicycle, substeps_for, Control, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Start,
    Goal,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("robot {robot}: {which:?} state is in collision or out of bounds")]
    InvalidEndpoint { robot: usize, which: Endpoint },
    #[error("robot {robot}: iteration budget of {iterations} exhausted")]
    BudgetExhausted { robot: usize, iterations: usize },
    #[error("robot {robot}: deadline reached")]
    Timeout { robot: usize },
    #[error("robot {robot}: planner does not support this robot kind")]
    WrongRobotKind { robot: usize },
    #[error("invalid planner parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceParams {
    /// Probability of sampling inside the region-path window.
    pub p_guided: f64,
    /// Cells beyond the frontier eligible for guided sampling.
    pub lookahead: usize,
    pub goal_bias: f64,
    pub max_iterations: usize,
    /// Goal position tolerance; geometric planners connect exactly.
    pub goal_tolerance: f64,
    /// Goal heading tolerance for unicycles; `None` ignores heading.
    pub heading_tolerance: Option<f64>,
    /// Longest straight extension of the geometric planners.
    pub extend_step: f64,
    /// Candidate controls per kinodynamic extension.
    pub candidates: usize,
    /// Duration each kinodynamic control is held.
    pub dt_prop: f64,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        GuidanceParams {
            p_guided: 0.85,
            lookahead: 2,
            goal_bias: 0.05,
            max_iterations: 30_000,
            goal_tolerance: 0.5,
            heading_tolerance: None,
            extend_step: 1.5,
            candidates: 8,
            dt_prop: 0.5,
        }
    }
}

impl GuidanceParams {
    pub fn validate(&self) -> Result<(), PlanError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.p_guided) || !prob(self.goal_bias) {
            return Err(PlanError::BadParams("probabilities must lie in [0, 1]".into()));
        }
        if self.lookahead < 1 {
            return Err(PlanError::BadParams("lookahead must be at least 1".into()));
        }
        if !(self.goal_tolerance > 0.0 && self.extend_step > 0.0 && self.dt_prop > 0.0) {
            return Err(PlanError::BadParams(
                "tolerance, extension step and propagation time must be positive".into(),
            ));
        }
        if self.candidates == 0 {
            return Err(PlanError::BadParams("at least one candidate control".into()));
        }
        Ok(())
    }
}

/// A region path reduced to the rectangles the planner samples from.
/// Consecutive repeats (MAPF waits) are collapsed.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGuide {
    rects: Vec<Rect>,
}

impl RegionGuide {
    pub fn new(path: &RegionPath, d: &Decomposition) -> Self {
        let mut cells = path.cells.clone();
        cells.dedup();
        RegionGuide {
            rects: cells.iter().map(|c| d.rect_of(c)).collect(),
        }
    }

    pub fn from_rects(rects: Vec<Rect>) -> Self {
        assert!(!rects.is_empty(), "a guide needs at least one cell");
        RegionGuide { rects }
    }

    pub fn len(&self) -> usize {
        self.rects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rects.is_empty()
    }

    pub fn rect(&self, i: usize) -> &Rect {
        &self.rects[i]
    }

    /// Largest index `>= from` whose cell contains `p`.
    pub fn furthest_containing(&self, p: &Configuration, from: usize) -> Option<usize> {
        (from..self.rects.len()).rev().find(|&i| self.rects[i].contains(p.x, p.y))
    }
}

fn uniform_heading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    PI - 2.0 * PI * rng.gen::<f64>()
}

fn sample_in<R: Rng + ?Sized>(r: &Rect, with_heading: bool, rng: &mut R) -> Configuration {
    let x = r.xmin + r.width() * rng.gen::<f64>();
    let y = r.ymin + r.height() * rng.gen::<f64>();
    if with_heading {
        Configuration::pose(x, y, uniform_heading(rng))
    } else {
        Configuration::point(x, y)
    }
}

/// Uniform sample over the workspace bounds.
pub fn sample_uniform<R: Rng + ?Sized>(bounds: &Rect, with_heading: bool, rng: &mut R) -> Configuration {
    sample_in(bounds, with_heading, rng)
}

/// With probability `p_guided` samples a cell uniformly from the window
/// `[frontier, frontier + lookahead]` of the guide and a point uniformly in
/// it; otherwise samples the bounds. No coin is drawn when guidance is off.
pub fn sample_guided<R: Rng + ?Sized>(
    guide: Option<&RegionGuide>,
    frontier: usize,
    params: &GuidanceParams,
    bounds: &Rect,
    with_heading: bool,
    rng: &mut R,
) -> Configuration {
    if let Some(g) = guide.filter(|g| !g.is_empty() && params.p_guided > 0.0) {
        if rng.gen::<f64>() < params.p_guided {
            let lo = frontier.min(g.len() - 1);
            let hi = (lo + params.lookahead).min(g.len() - 1);
            let i = rng.gen_range(lo..=hi);
            return sample_in(&g.rects[i], with_heading, rng);
        }
    }
    sample_uniform(bounds, with_heading, rng)
}

/// Everything a single-robot planner needs besides its random source.
#[derive(Debug, Clone, Copy)]
pub struct PlanRequest<'a> {
    pub robot_index: usize,
    pub robot: RobotModel,
    pub env: &'a Environment,
    pub start: Configuration,
    pub goal: Configuration,
    pub guide: Option<&'a RegionGuide>,
    pub params: &'a GuidanceParams,
    pub deadline: Option<Instant>,
}

impl PlanRequest<'_> {
    pub(crate) fn check_endpoints(&self) -> Result<(), PlanError> {
        self.params.validate()?;
        let r = self.robot.radius;
        if !disc_free(self.env, &self.start, r) {
            return Err(PlanError::InvalidEndpoint { robot: self.robot_index, which: Endpoint::Start });
        }
        if !disc_free(self.env, &self.goal, r) {
            return Err(PlanError::InvalidEndpoint { robot: self.robot_index, which: Endpoint::Goal });
        }
        Ok(())
    }

    pub(crate) fn timed_out(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    pub(crate) fn checker(&self) -> StaticChecker<'_> {
        StaticChecker::new(self.env, self.robot.radius, &[self.start, self.goal])
    }

    pub(crate) fn goal_reached(&self, s: &Configuration) -> bool {
        s.dist(&self.goal) <= self.params.goal_tolerance
            && match (self.params.heading_tolerance, self.goal.theta) {
                (Some(tol), Some(g)) => angle_diff(s.theta.unwrap_or(0.0), g) <= tol,
                _ => true,
            }
    }
}

/// Static collision checks at the inflated planning radius, except at the
/// exact request endpoints which only need the plain radius.
#[derive(Debug, Clone)]
pub(crate) struct StaticChecker<'a> {
    env: &'a Environment,
    radius: f64,
    inflated: f64,
    exact: Vec<(f64, f64)>,
}

impl<'a> StaticChecker<'a> {
    pub(crate) fn new(env: &'a Environment, radius: f64, exact: &[Configuration]) -> Self {
        StaticChecker {
            env,
            radius,
            inflated: radius * PLANNER_INFLATION,
            exact: exact.iter().map(|c| (c.x, c.y)).collect(),
        }
    }

    pub(crate) fn point(&self, p: &Configuration) -> bool {
        let r = if self.exact.contains(&(p.x, p.y)) { self.radius } else { self.inflated };
        disc_free(self.env, p, r)
    }

    /// Samples the segment with spacing at most `radius / 2`, both ends included.
    pub(crate) fn segment(&self, a: &Configuration, b: &Configuration) -> bool {
        let n = (a.dist(b) / (0.5 * self.radius)).ceil().max(1.0) as usize;
        (0..=n).all(|i| {
            let p = match i {
                0 => *a,
                _ if i == n => *b,
                _ => a.lerp(b, i as f64 / n as f64),
            };
            self.point(&p)
        })
    }
}

/// Uniform-grid bucket index for nearest-neighbour queries. Any metric that
/// dominates planar distance can be used.
#[derive(Debug, Clone)]
pub(crate) struct PointIndex {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    lo: (i64, i64),
    hi: (i64, i64),
}

impl PointIndex {
    pub(crate) fn new(cell: f64) -> Self {
        PointIndex {
            cell,
            buckets: HashMap::new(),
            lo: (i64::MAX, i64::MAX),
            hi: (i64::MIN, i64::MIN),
        }
    }

    fn key(&self, x: f64, y: f64) -> (i64, i64) {
        ((x / self.cell).floor() as i64, (y / self.cell).floor() as i64)
    }

    pub(crate) fn insert(&mut self, id: usize, x: f64, y: f64) {
        let k = self.key(x, y);
        self.lo = (self.lo.0.min(k.0), self.lo.1.min(k.1));
        self.hi = (self.hi.0.max(k.0), self.hi.1.max(k.1));
        self.buckets.entry(k).or_default().push(id);
    }

    /// Item minimizing `metric`, ties broken by the smaller id.
    pub(crate) fn nearest(&self, x: f64, y: f64, metric: impl Fn(usize) -> f64) -> Option<usize> {
        if self.buckets.is_empty() {
            return None;
        }
        let (cx, cy) = self.key(x, y);
        let reach = [cx - self.lo.0, self.hi.0 - cx, cy - self.lo.1, self.hi.1 - cy]
            .into_iter()
            .max()
            .unwrap_or(0)
            .max(0);
        let mut best: Option<(f64, usize)> = None;
        for ring in 0..=reach {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    if dx.abs() != ring && dy.abs() != ring {
                        continue;
                    }
                    for &id in self.buckets.get(&(cx + dx, cy + dy)).into_iter().flatten() {
                        let m = metric(id);
                        if best.is_none_or(|(bm, bid)| m < bm || (m == bm && id < bid)) {
                            best = Some((m, id));
                        }
                    }
                }
            }
            // Points in later rings are at least `ring * cell` away.
            if best.is_some_and(|(bm, _)| bm < ring as f64 * self.cell) {
                break;
            }
        }
        best.map(|(_, id)| id)
    }
}

struct Tree {
    nodes: Vec<Configuration>,
    parent: Vec<usize>,
    index: PointIndex,
}

impl Tree {
    fn new(root: Configuration, cell: f64) -> Self {
        let mut index = PointIndex::new(cell);
        index.insert(0, root.x, root.y);
        Tree {
            nodes: vec![root],
            parent: vec![usize::MAX],
            index,
        }
    }

    fn add(&mut self, p: Configuration, parent: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(p);
        self.parent.push(parent);
        self.index.insert(id, p.x, p.y);
        id
    }

    fn nearest(&self, q: &Configuration) -> usize {
        self.index
            .nearest(q.x, q.y, |i| self.nodes[i].dist(q))
            .expect("tree has a root")
    }

    /// Root-to-node path.
    fn path_to(&self, mut i: usize) -> Vec<Configuration> {
        let mut out = vec![self.nodes[i]];
        while self.parent[i] != usize::MAX {
            i = self.parent[i];
            out.push(self.nodes[i]);
        }
        out.reverse();
        out
    }
}

enum Extend {
    Trapped,
    Advanced(usize),
    Reached(usize),
}

fn extend(tree: &mut Tree, q: &Configuration, step: f64, chk: &StaticChecker) -> Extend {
    let near = tree.nearest(q);
    let from = tree.nodes[near];
    let d = from.dist(q);
    if d <= 1e-12 {
        return Extend::Reached(near);
    }
    let (to, reached) = if d <= step { (*q, true) } else { (from.lerp(q, step / d), false) };
    if !chk.segment(&from, &to) {
        return Extend::Trapped;
    }
    let id = tree.add(to, near);
    if reached {
        Extend::Reached(id)
    } else {
        Extend::Advanced(id)
    }
}

/// Geometric region-guided RRT-Connect. The result traverses its polyline at
/// unit speed and ends exactly at the goal.
pub fn guided_rrt_connect<R: Rng + ?Sized>(req: &PlanRequest, rng: &mut R) -> Result<Trajectory, PlanError> {
    req.check_endpoints()?;
    if req.start.x == req.goal.x && req.start.y == req.goal.y {
        return Ok(Trajectory::from_polyline(req.robot_index, &[req.start]));
    }
    let start = Configuration::point(req.start.x, req.start.y);
    let goal = Configuration::point(req.goal.x, req.goal.y);
    let p = req.params;
    let chk = req.checker();
    let mut trees = [Tree::new(start, p.extend_step), Tree::new(goal, p.extend_step)];
    let mut frontier = req.guide.and_then(|g| g.furthest_containing(&start, 0)).unwrap_or(0);
    let advance = |frontier: &mut usize, q: &Configuration| {
        if let Some(i) = req.guide.and_then(|g| g.furthest_containing(q, *frontier)) {
            *frontier = i;
        }
    };
    for it in 0..p.max_iterations {
        if req.timed_out() {
            return Err(PlanError::Timeout { robot: req.robot_index });
        }
        let (a, b) = if it % 2 == 0 { (0, 1) } else { (1, 0) };
        let q = if rng.gen::<f64>() < p.goal_bias {
            trees[b].nodes[0]
        } else {
            sample_guided(req.guide, frontier, p, &req.env.bounds, false, rng)
        };
        let new = match extend(&mut trees[a], &q, p.extend_step, &chk) {
            Extend::Trapped => continue,
            Extend::Advanced(i) | Extend::Reached(i) => i,
        };
        let target = trees[a].nodes[new];
        if a == 0 {
            advance(&mut frontier, &target);
        }
        loop {
            match extend(&mut trees[b], &target, p.extend_step, &chk) {
                Extend::Trapped => break,
                Extend::Advanced(i) => {
                    if b == 0 {
                        advance(&mut frontier, &trees[b].nodes[i]);
                    }
                }
                Extend::Reached(i) => {
                    let (ia, ib) = if a == 0 { (new, i) } else { (i, new) };
                    let mut pts = trees[0].path_to(ia);
                    let mut tail = trees[1].path_to(ib);
                    tail.reverse();
                    pts.extend(tail.into_iter().skip(1));
                    return Ok(Trajectory::from_polyline(req.robot_index, &pts));
                }
            }
        }
    }
    Err(PlanError::BudgetExhausted { robot: req.robot_index, iterations: p.max_iterations })
}

/// Position distance plus a heading term scaled by the robot radius.
pub fn unicycle_metric(a: &Configuration, b: &Configuration, radius: f64) -> f64 {
    let dh = match (a.theta, b.theta) {
        (Some(x), Some(y)) => angle_diff(x, y),
        _ => 0.0,
    };
    a.dist(b) + 0.5 * dh * radius
}

pub(crate) fn control_bounds(req: &PlanRequest) -> Result<(f64, f64), PlanError> {
    match req.robot.kind {
        RobotKind::Unicycle { v_max, omega_max } => Ok((v_max, omega_max)),
        RobotKind::Geometric => Err(PlanError::WrongRobotKind { robot: req.robot_index }),
    }
}

pub(crate) fn sample_control<R: Rng + ?Sized>(v_max: f64, omega_max: f64, rng: &mut R) -> (f64, f64) {
    let v = v_max * (2.0 * rng.gen::<f64>() - 1.0);
    let w = omega_max * (2.0 * rng.gen::<f64>() - 1.0);
    (v, w)
}

/// Kinodynamic region-guided RRT: each extension propagates `candidates`
/// random controls for `dt_prop` and keeps the valid result closest to the
/// target.
pub fn kinodynamic_guided_rrt<R: Rng + ?Sized>(
    req: &PlanRequest,
    rng: &mut R,
) -> Result<Trajectory, PlanError> {
    let (v_max, omega_max) = control_bounds(req)?;
    req.check_endpoints()?;
    let start = Configuration::pose(req.start.x, req.start.y, req.start.theta.unwrap_or(0.0));
    if req.goal_reached(&start) {
        return Ok(Trajectory::kinodynamic(req.robot_index, start, Vec::new()));
    }
    let p = req.params;
    let r = req.robot.radius;
    let chk = req.checker();
    let substeps = substeps_for(p.dt_prop);
    let mut nodes = vec![start];
    let mut parent = vec![(usize::MAX, Control { v: 0.0, omega: 0.0, duration: 0.0 })];
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
            .nearest(q.x, q.y, |i| unicycle_metric(&nodes[i], &q, r))
            .expect("tree has a root");
        let mut best: Option<(f64, Configuration, (f64, f64))> = None;
        for _ in 0..p.candidates {
            let (v, w) = sample_control(v_max, omega_max, rng);
            let states = propagate_unicycle(&nodes[near], v, w, p.dt_prop, substeps);
            if !states[1..].iter().all(|s| chk.point(s)) {
                continue;
            }
            let end = *states.last().expect("nonempty");
            let m = unicycle_metric(&end, &q, r);
            if best.is_none_or(|(bm, _, _)| m < bm) {
                best = Some((m, end, (v, w)));
            }
        }
        let Some((_, end, (v, w))) = best else { continue };
        let id = nodes.len();
        nodes.push(end);
        parent.push((near, Control { v, omega: w, duration: p.dt_prop }));
        index.insert(id, end.x, end.y);
        if let Some(i) = req.guide.and_then(|g| g.furthest_containing(&end, frontier)) {
            frontier = i;
        }
        if req.goal_reached(&end) {
            let mut controls = Vec::new();
            let mut i = id;
            while parent[i].0 != usize::MAX {
                controls.push(parent[i].1);
                i = parent[i].0;
            }
            controls.reverse();
            return Ok(Trajectory::kinodynamic(req.robot_index, start, controls));
        }
    }
    Err(PlanError::BudgetExhausted { robot: req.robot_index, iterations: p.max_iterations })
}

/// Dispatches on the robot kind.
pub fn plan_single<R: Rng + ?Sized>(req: &PlanRequest, rng: &mut R) -> Result<Trajectory, PlanError> {
    if req.robot.is_kinodynamic() {
        kinodynamic_guided_rrt(req, rng)
    } else {
        guided_rrt_connect(req, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env(obstacles: Vec<Rect>) -> Environment {
        Environment::new("t", Rect::new(0.0, 0.0, 10.0, 10.0), obstacles).unwrap()
    }

    fn request<'a>(
        env: &'a Environment,
        robot: RobotModel,
        start: Configuration,
        goal: Configuration,
        guide: Option<&'a RegionGuide>,
        params: &'a GuidanceParams,
    ) -> PlanRequest<'a> {
        PlanRequest {
            robot_index: 0,
            robot,
            env,
            start,
            goal,
            guide,
            params,
            deadline: None,
        }
    }

    /// Static freedom of the sampled trajectory at the conflict-check resolution.
    fn sampled_free(env: &Environment, t: &Trajectory, r: f64) -> bool {
        let n = (t.duration() / 0.05).ceil() as usize;
        (0..=n).all(|k| disc_free(env, &t.state_at(k as f64 * 0.05), r))
    }

    #[test]
    fn window_sampling_stays_in_last_cell() {
        let g = RegionGuide::from_rects(vec![Rect::new(0.0, 0.0, 1.0, 1.0), Rect::new(4.0, 4.0, 6.0, 5.0)]);
        let p = GuidanceParams { p_guided: 1.0, lookahead: 1, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let q = sample_guided(Some(&g), 1, &p, &Rect::new(0.0, 0.0, 10.0, 10.0), true, &mut rng);
            assert!(g.rect(1).contains(q.x, q.y));
            let th = q.theta.unwrap();
            assert!(th > -PI && th <= PI);
        }
    }

    #[test]
    fn unguided_samples_are_uniform() {
        let b = Rect::new(0.0, 0.0, 10.0, 10.0);
        let g = RegionGuide::from_rects(vec![Rect::new(0.0, 0.0, 1.0, 1.0)]);
        let p = GuidanceParams { p_guided: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = [0usize; 4];
        let n = 40_000;
        for _ in 0..n {
            let q = sample_guided(Some(&g), 0, &p, &b, false, &mut rng);
            counts[(q.x >= 5.0) as usize * 2 + (q.y >= 5.0) as usize] += 1;
        }
        // Chi-square with 3 degrees of freedom; 16.27 is the 0.001 quantile.
        let e = n as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let g = RegionGuide::from_rects(vec![Rect::new(0.0, 0.0, 1.0, 1.0), Rect::new(1.0, 0.0, 2.0, 1.0)]);
        let p = GuidanceParams::default();
        let b = Rect::new(0.0, 0.0, 10.0, 10.0);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_guided(Some(&g), 0, &p, &b, true, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    #[test]
    fn nearest_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<(f64, f64)> = (0..400).map(|_| (rng.gen_range(-5.0..20.0), rng.gen_range(0.0..9.0))).collect();
        let mut idx = PointIndex::new(1.3);
        for (i, &(x, y)) in pts.iter().enumerate() {
            idx.insert(i, x, y);
        }
        for _ in 0..200 {
            let (qx, qy) = (rng.gen_range(-10.0..30.0), rng.gen_range(-5.0..15.0));
            let d = |i: usize| (pts[i].0 - qx).hypot(pts[i].1 - qy);
            let brute = (0..pts.len()).min_by(|&a, &b| d(a).total_cmp(&d(b))).unwrap();
            assert_eq!(idx.nearest(qx, qy, d), Some(brute));
        }
    }

    #[test]
    fn geometric_start_equals_goal() {
        let e = env(vec![]);
        let p = GuidanceParams::default();
        let s = Configuration::point(2.0, 2.0);
        let req = request(&e, RobotModel::geometric(0.5).unwrap(), s, s, None, &p);
        let t = guided_rrt_connect(&req, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(t.duration(), 0.0);
        assert_eq!(t.state_at(3.0), s);
    }

    #[test]
    fn geometric_goal_in_obstacle_is_rejected() {
        let e = env(vec![Rect::new(4.0, 4.0, 6.0, 6.0)]);
        let p = GuidanceParams::default();
        let req = request(
            &e,
            RobotModel::geometric(0.5).unwrap(),
            Configuration::point(1.0, 1.0),
            Configuration::point(5.0, 5.0),
            None,
            &p,
        );
        assert_eq!(
            guided_rrt_connect(&req, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(PlanError::InvalidEndpoint { robot: 0, which: Endpoint::Goal })
        );
    }

    #[test]
    fn geometric_plans_around_a_wall() {
        let e = env(vec![Rect::new(4.0, 0.0, 5.0, 8.0)]);
        let p = GuidanceParams::default();
        let (s, g) = (Configuration::point(1.0, 1.0), Configuration::point(8.0, 1.0));
        for seed in 0..5 {
            let req = request(&e, RobotModel::geometric(0.5).unwrap(), s, g, None, &p);
            let t = guided_rrt_connect(&req, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(t.start_state(), s);
            assert_eq!(t.final_state(), g);
            assert!(sampled_free(&e, &t, 0.5));
            let again = guided_rrt_connect(&req, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert_eq!(t, again);
        }
    }

    #[test]
    fn zero_guidance_matches_unguided_planner() {
        let e = env(vec![Rect::new(4.0, 0.0, 5.0, 8.0)]);
        let g = RegionGuide::from_rects(vec![Rect::new(0.0, 0.0, 5.0, 10.0), Rect::new(5.0, 0.0, 10.0, 10.0)]);
        let p = GuidanceParams { p_guided: 0.0, ..Default::default() };
        let (s, goal) = (Configuration::point(1.0, 1.0), Configuration::point(8.0, 1.0));
        let geo = RobotModel::geometric(0.5).unwrap();
        let a = guided_rrt_connect(&request(&e, geo, s, goal, Some(&g), &p), &mut ChaCha8Rng::seed_from_u64(4));
        let b = guided_rrt_connect(&request(&e, geo, s, goal, None, &p), &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
        let uni = RobotModel::unicycle(0.5, 1.0, 1.0).unwrap();
        let (s, goal) = (Configuration::pose(1.0, 1.0, 0.0), Configuration::pose(8.0, 1.0, 0.0));
        let a = kinodynamic_guided_rrt(&request(&e, uni, s, goal, Some(&g), &p), &mut ChaCha8Rng::seed_from_u64(4));
        let b = kinodynamic_guided_rrt(&request(&e, uni, s, goal, None, &p), &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }

    #[test]
    fn kinodynamic_reaches_goal_ahead_and_replays() {
        let e = env(vec![]);
        let p = GuidanceParams::default();
        let robot = RobotModel::unicycle(0.5, 1.0, 1.0).unwrap();
        let (s, g) = (Configuration::pose(2.0, 5.0, 0.0), Configuration::pose(7.0, 5.0, 0.0));
        let req = request(&e, robot, s, g, None, &p);
        let t = kinodynamic_guided_rrt(&req, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        // Replay the control chain independently of the trajectory's knots.
        let crate::trajectory::Motion::Kinodynamic { start, controls } = t.motion() else { panic!() };
        let mut state = *start;
        let mut time = 0.0;
        for c in controls {
            assert!(c.v.abs() <= 1.0 && c.omega.abs() <= 1.0 && c.duration > 0.0);
            let n = substeps_for(c.duration);
            for (j, st) in propagate_unicycle(&state, c.v, c.omega, c.duration, n).iter().enumerate() {
                let at = t.state_at(time + c.duration * j as f64 / n as f64);
                assert!(at.dist(st) < 1e-6);
            }
            state = *propagate_unicycle(&state, c.v, c.omega, c.duration, n).last().unwrap();
            time += c.duration;
        }
        assert!(state.dist(&g) <= p.goal_tolerance);
        assert!(sampled_free(&e, &t, 0.5));
    }

    #[test]
    fn immobile_unicycle_exhausts_budget() {
        let e = env(vec![]);
        let p = GuidanceParams { max_iterations: 200, ..Default::default() };
        let robot = RobotModel { radius: 0.5, kind: RobotKind::Unicycle { v_max: 0.0, omega_max: 1.0 } };
        let req = request(&e, robot, Configuration::pose(2.0, 2.0, 0.0), Configuration::pose(7.0, 7.0, 0.0), None, &p);
        assert_eq!(
            kinodynamic_guided_rrt(&req, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(PlanError::BudgetExhausted { robot: 0, iterations: 200 })
        );
    }

    #[test]
    fn kinodynamic_start_equals_goal() {
        let e = env(vec![]);
        let p = GuidanceParams::default();
        let robot = RobotModel::unicycle(0.5, 1.0, 1.0).unwrap();
        let s = Configuration::pose(3.0, 3.0, 0.3);
        let t = kinodynamic_guided_rrt(&request(&e, robot, s, s, None, &p), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(t.duration(), 0.0);
    }

    #[test]
    fn guidance_advances_frontier_along_corridor() {
        // A serpentine: the guide leads through the only gap.
        let e = env(vec![Rect::new(0.0, 4.5, 8.0, 5.5)]);
        let path = vec![
            Rect::new(0.0, 0.0, 10.0, 4.5),
            Rect::new(8.0, 4.5, 10.0, 5.5),
            Rect::new(0.0, 5.5, 10.0, 10.0),
        ];
        let g = RegionGuide::from_rects(path);
        assert_eq!(g.furthest_containing(&Configuration::point(9.0, 4.5), 0), Some(1));
        let p = GuidanceParams::default();
        let robot = RobotModel::geometric(0.4).unwrap();
        let (s, goal) = (Configuration::point(1.0, 1.0), Configuration::point(1.0, 9.0));
        let t = guided_rrt_connect(&request(&e, robot, s, goal, Some(&g), &p), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(sampled_free(&e, &t, 0.4));
    }
}
