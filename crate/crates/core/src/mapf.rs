//! Conflict-Based Search over the region graph.
//!
//! Cells carry a capacity (robots per cell per timestep). Over-capacity
//! occupancy and head-on swaps along an edge are conflicts; a robot that has
//! finished keeps occupying its goal cell. The high level is best-first on
//! sum-of-costs, the low level is space-time A* with unit move/wait costs.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashSet, VecDeque};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::{CellId, RegionGraph};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MapfError {
    #[error("MAPF time budget exhausted")]
    Timeout,
    #[error("no capacity-feasible region path exists for robot {robot}")]
    Infeasible { robot: usize },
    #[error("start or goal cell of robot {robot} is not a vertex of the region graph")]
    InvalidEndpoint { robot: usize },
    #[error("{which} cells exceed capacity {capacity}")]
    CapacityExceeded { which: &'static str, capacity: usize },
    #[error("starts and goals must have the same length")]
    LengthMismatch,
}

/// One robot's timestep-indexed sequence of cells; repeats are waits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionPath {
    pub robot: usize,
    pub cells: Vec<CellId>,
}

impl RegionPath {
    /// Number of timesteps until the robot rests at its goal.
    pub fn cost(&self) -> usize {
        self.cells.len().saturating_sub(1)
    }

    /// Cell at timestep `t`, resting at the final cell afterwards.
    pub fn cell_at(&self, t: usize) -> &CellId {
        &self.cells[t.min(self.cells.len() - 1)]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintKind {
    Vertex,
    /// Forbids moving from `from` into the constrained cell at the timestep.
    Edge { from: CellId },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MapfConstraint {
    pub robot: usize,
    pub cell: CellId,
    pub timestep: usize,
    pub kind: ConstraintKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapfConflictRecord {
    /// More robots than the capacity share `cell` at `timestep`. `robots` lists
    /// the planned robots there (background occupants are not listed).
    Capacity {
        cell: CellId,
        timestep: usize,
        robots: Vec<usize>,
    },
    /// `a` moves `from_a -> to_a` while `b` moves the other way, arriving at `timestep`.
    Swap {
        a: usize,
        b: usize,
        from_a: CellId,
        to_a: CellId,
        timestep: usize,
    },
}

#[derive(Debug, Clone)]
pub struct MapfOptions {
    pub capacity: usize,
    pub budget: Duration,
    /// Horizon multiplier for the low-level search.
    pub horizon_factor: usize,
    /// Record the constraint tree.
    pub trace: bool,
}

impl Default for MapfOptions {
    fn default() -> Self {
        MapfOptions {
            capacity: 1,
            budget: Duration::from_secs(10),
            horizon_factor: 4,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub node: usize,
    pub parent: Option<usize>,
    pub cost: usize,
    pub constraint: Option<MapfConstraint>,
}

#[derive(Debug, Clone)]
pub struct MapfSolution {
    pub paths: Vec<RegionPath>,
    pub sum_of_costs: usize,
    pub expanded: usize,
    pub trace: Vec<TraceEntry>,
}

/// Index-level constraint used inside the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Con {
    Vertex { cell: usize, t: usize },
    Edge { from: usize, to: usize, t: usize },
}

/// Time-indexed occupancy of robots that are not being planned but consume capacity.
#[derive(Debug, Clone, Default)]
struct Background {
    /// `counts[t][v]`; the last row holds for all later timesteps.
    counts: Vec<Vec<u16>>,
}

impl Background {
    /// Cells outside the graph (`None`) consume nothing at that timestep.
    fn new(n_vertices: usize, paths: &[Vec<Option<usize>>]) -> Self {
        if paths.is_empty() {
            return Background::default();
        }
        let len = paths.iter().map(Vec::len).max().unwrap_or(1).max(1);
        let mut counts = vec![vec![0u16; n_vertices]; len];
        for p in paths.iter().filter(|p| !p.is_empty()) {
            for (t, row) in counts.iter_mut().enumerate() {
                if let Some(v) = p[t.min(p.len() - 1)] {
                    row[v] += 1;
                }
            }
        }
        Background { counts }
    }

    fn at(&self, v: usize, t: usize) -> usize {
        if self.counts.is_empty() {
            0
        } else {
            self.counts[t.min(self.counts.len() - 1)][v] as usize
        }
    }

    fn horizon(&self) -> usize {
        self.counts.len()
    }
}

/// Unconstrained BFS distances to `goal`; `usize::MAX` for unreachable vertices.
pub fn bfs_distances(g: &RegionGraph, goal: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; g.len()];
    dist[goal] = 0;
    let mut q = VecDeque::from([goal]);
    while let Some(v) = q.pop_front() {
        for &n in g.neighbors(v) {
            if dist[n] == usize::MAX {
                dist[n] = dist[v] + 1;
                q.push_back(n);
            }
        }
    }
    dist
}

struct LowLevel<'a> {
    g: &'a RegionGraph,
    capacity: usize,
    background: &'a Background,
    deadline: Instant,
}

#[derive(PartialEq, Eq)]
struct OpenEntry {
    f: usize,
    h: usize,
    waits: usize,
    v: usize,
    t: usize,
    seq: usize,
    parent: Option<(usize, usize)>,
}

impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.f, self.h, self.waits, self.v, self.seq)
            .cmp(&(other.f, other.h, other.waits, other.v, other.seq))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

enum LowError {
    Infeasible,
    Timeout,
}

impl LowLevel<'_> {
    fn blocked(&self, v: usize, t: usize) -> bool {
        self.background.at(v, t) >= self.capacity
    }

    /// Space-time A*; returns the vertex sequence from `start` resting at `goal`.
    fn search(
        &self,
        start: usize,
        goal: usize,
        heuristic: &[usize],
        constraints: &HashSet<Con>,
        horizon: usize,
    ) -> Result<Vec<usize>, LowError> {
        if heuristic[start] == usize::MAX || self.blocked(start, 0) {
            return Err(LowError::Infeasible);
        }
        // Earliest timestep from which the goal stays available forever.
        let mut goal_free_from = 0;
        for c in constraints {
            if let Con::Vertex { cell, t } = *c {
                if cell == goal {
                    goal_free_from = goal_free_from.max(t + 1);
                }
            }
        }
        for t in (0..self.background.horizon()).rev() {
            if self.blocked(goal, t) {
                goal_free_from = goal_free_from.max(t + 1);
                break;
            }
        }

        let mut parents: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
        let mut closed: HashSet<(usize, usize)> = HashSet::new();
        let mut open = BinaryHeap::new();
        let mut seq = 0;
        open.push(Reverse(OpenEntry {
            f: heuristic[start],
            h: heuristic[start],
            waits: 0,
            v: start,
            t: 0,
            seq,
            parent: None,
        }));
        let mut popped = 0usize;
        while let Some(Reverse(e)) = open.pop() {
            popped += 1;
            if popped.is_multiple_of(1024) && Instant::now() >= self.deadline {
                return Err(LowError::Timeout);
            }
            if !closed.insert((e.v, e.t)) {
                continue;
            }
            if let Some(p) = e.parent {
                parents.insert((e.v, e.t), p);
            }
            if e.v == goal && e.t >= goal_free_from {
                let mut path = vec![e.v];
                let mut key = (e.v, e.t);
                while let Some(&p) = parents.get(&key) {
                    path.push(p.0);
                    key = p;
                }
                path.reverse();
                return Ok(path);
            }
            if e.t >= horizon {
                continue;
            }
            let nt = e.t + 1;
            let moves = std::iter::once(e.v).chain(self.g.neighbors(e.v).iter().copied());
            for n in moves {
                let h = heuristic[n];
                if h == usize::MAX
                    || closed.contains(&(n, nt))
                    || self.blocked(n, nt)
                    || constraints.contains(&Con::Vertex { cell: n, t: nt })
                    || constraints.contains(&Con::Edge { from: e.v, to: n, t: nt })
                {
                    continue;
                }
                seq += 1;
                open.push(Reverse(OpenEntry {
                    f: nt + h,
                    h,
                    waits: e.waits + usize::from(n == e.v),
                    v: n,
                    t: nt,
                    seq,
                    parent: Some((e.v, e.t)),
                }));
            }
        }
        Err(LowError::Infeasible)
    }
}

/// Finds the earliest capacity or swap conflict among index-level paths.
fn first_conflict(
    paths: &[Vec<usize>],
    capacity: usize,
    background: &Background,
) -> Option<IdxConflict> {
    let len = paths.iter().map(Vec::len).max().unwrap_or(0).max(background.horizon());
    let at = |p: &Vec<usize>, t: usize| p[t.min(p.len() - 1)];
    for t in 0..len.max(1) {
        let mut cells: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (r, p) in paths.iter().enumerate() {
            cells.entry(at(p, t)).or_default().push(r);
        }
        for (&cell, robots) in &cells {
            if robots.len() + background.at(cell, t) > capacity {
                return Some(IdxConflict::Capacity {
                    cell,
                    t,
                    robots: robots.clone(),
                });
            }
        }
        if t > 0 {
            for a in 0..paths.len() {
                let (ua, va) = (at(&paths[a], t - 1), at(&paths[a], t));
                if ua == va {
                    continue;
                }
                for (b, pb) in paths.iter().enumerate().skip(a + 1) {
                    let (ub, vb) = (at(pb, t - 1), at(pb, t));
                    if ua == vb && va == ub {
                        return Some(IdxConflict::Swap {
                            a,
                            b,
                            from_a: ua,
                            to_a: va,
                            t,
                        });
                    }
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone)]
enum IdxConflict {
    Capacity {
        cell: usize,
        t: usize,
        robots: Vec<usize>,
    },
    Swap {
        a: usize,
        b: usize,
        from_a: usize,
        to_a: usize,
        t: usize,
    },
}

/// Earliest over-capacity or swap conflict among region paths, or `None`.
pub fn find_first_mapf_conflict(
    paths: &[RegionPath],
    capacity: usize,
) -> Option<MapfConflictRecord> {
    // Local indexing of every cell that appears.
    let mut ids: Vec<&CellId> = paths.iter().flat_map(|p| p.cells.iter()).collect();
    ids.sort();
    ids.dedup();
    let idx = |c: &CellId| ids.binary_search(&c).expect("cell indexed");
    let index_paths: Vec<Vec<usize>> = paths
        .iter()
        .map(|p| p.cells.iter().map(idx).collect())
        .collect();
    first_conflict(&index_paths, capacity, &Background::default()).map(|c| match c {
        IdxConflict::Capacity { cell, t, robots } => MapfConflictRecord::Capacity {
            cell: ids[cell].clone(),
            timestep: t,
            robots: robots.into_iter().map(|r| paths[r].robot).collect(),
        },
        IdxConflict::Swap {
            a,
            b,
            from_a,
            to_a,
            t,
        } => MapfConflictRecord::Swap {
            a: paths[a].robot,
            b: paths[b].robot,
            from_a: ids[from_a].clone(),
            to_a: ids[to_a].clone(),
            timestep: t,
        },
    })
}

struct CtNode {
    id: usize,
    constraints: Vec<HashSet<Con>>,
    paths: Vec<Vec<usize>>,
    cost: usize,
}

fn horizon_for(
    opts: &MapfOptions,
    g: &RegionGraph,
    lower_bound: usize,
    constraints: &HashSet<Con>,
    background: &Background,
) -> usize {
    let _ = constraints;
    (opts.horizon_factor * (g.len() + lower_bound)).max(background.horizon() + g.len() + 1)
}

/// Solves MAPF over `g` for robots `0..starts.len()`.
pub fn solve_mapf(
    g: &RegionGraph,
    starts: &[CellId],
    goals: &[CellId],
    opts: &MapfOptions,
) -> Result<MapfSolution, MapfError> {
    solve_mapf_with_background(g, starts, goals, &[], opts)
}

/// Solves MAPF while `background` paths (cells per timestep, resting at the
/// final cell) consume capacity without being replanned.
pub fn solve_mapf_with_background(
    g: &RegionGraph,
    starts: &[CellId],
    goals: &[CellId],
    background: &[Vec<CellId>],
    opts: &MapfOptions,
) -> Result<MapfSolution, MapfError> {
    let deadline = Instant::now() + opts.budget;
    if starts.len() != goals.len() {
        return Err(MapfError::LengthMismatch);
    }
    let n = starts.len();
    let lookup = |robot: usize, c: &CellId| g.index_of(c).ok_or(MapfError::InvalidEndpoint { robot });
    let s: Vec<usize> = starts
        .iter()
        .enumerate()
        .map(|(r, c)| lookup(r, c))
        .collect::<Result<_, _>>()?;
    let gl: Vec<usize> = goals
        .iter()
        .enumerate()
        .map(|(r, c)| lookup(r, c))
        .collect::<Result<_, _>>()?;
    let bg_paths: Vec<Vec<Option<usize>>> = background
        .iter()
        .map(|p| p.iter().map(|c| g.index_of(c)).collect())
        .collect();
    let bg = Background::new(g.len(), &bg_paths);

    for (which, cells, t) in [("start", &s, 0usize), ("goal", &gl, usize::MAX)] {
        let mut count: BTreeMap<usize, usize> = BTreeMap::new();
        for &c in cells.iter() {
            *count.entry(c).or_default() += 1;
        }
        if count.iter().any(|(&c, &k)| k + bg.at(c, t) > opts.capacity) {
            return Err(MapfError::CapacityExceeded {
                which,
                capacity: opts.capacity,
            });
        }
    }

    let heuristics: Vec<Vec<usize>> = gl.iter().map(|&goal| bfs_distances(g, goal)).collect();
    let lower_bound = (0..n)
        .map(|r| heuristics[r][s[r]])
        .max()
        .unwrap_or(0);
    if let Some(robot) = (0..n).find(|&r| heuristics[r][s[r]] == usize::MAX) {
        return Err(MapfError::Infeasible { robot });
    }
    let low = LowLevel {
        g,
        capacity: opts.capacity,
        background: &bg,
        deadline,
    };
    let plan = |r: usize, cons: &HashSet<Con>| -> Result<Vec<usize>, LowError> {
        let h = horizon_for(opts, g, lower_bound, cons, &bg);
        low.search(s[r], gl[r], &heuristics[r], cons, h)
    };

    let mut root_paths = Vec::with_capacity(n);
    for r in 0..n {
        match plan(r, &HashSet::new()) {
            Ok(p) => root_paths.push(p),
            Err(LowError::Timeout) => return Err(MapfError::Timeout),
            Err(LowError::Infeasible) => return Err(MapfError::Infeasible { robot: r }),
        }
    }
    let cost = root_paths.iter().map(|p| p.len() - 1).sum();
    let mut trace = Vec::new();
    if opts.trace {
        trace.push(TraceEntry {
            node: 0,
            parent: None,
            cost,
            constraint: None,
        });
    }
    let mut nodes: Vec<Option<CtNode>> = vec![Some(CtNode {
        id: 0,
        constraints: vec![HashSet::new(); n],
        paths: root_paths,
        cost,
    })];
    let mut open: BinaryHeap<Reverse<(usize, usize)>> = BinaryHeap::from([Reverse((cost, 0))]);
    let mut expanded = 0;
    let mut last_failed_robot = 0;

    while let Some(Reverse((_, idx))) = open.pop() {
        if Instant::now() >= deadline {
            return Err(MapfError::Timeout);
        }
        let node = nodes[idx].take().expect("node expanded once");
        expanded += 1;
        let Some(conflict) = first_conflict(&node.paths, opts.capacity, &bg) else {
            let paths = node
                .paths
                .iter()
                .enumerate()
                .map(|(r, p)| RegionPath {
                    robot: r,
                    cells: p.iter().map(|&v| g.vertex(v).clone()).collect(),
                })
                .collect();
            return Ok(MapfSolution {
                paths,
                sum_of_costs: node.cost,
                expanded,
                trace,
            });
        };
        let branches: Vec<(usize, Con)> = match conflict {
            IdxConflict::Capacity { cell, t, robots } => robots
                .into_iter()
                .map(|r| (r, Con::Vertex { cell, t }))
                .collect(),
            IdxConflict::Swap {
                a,
                b,
                from_a,
                to_a,
                t,
            } => vec![
                (a, Con::Edge { from: from_a, to: to_a, t }),
                (b, Con::Edge { from: to_a, to: from_a, t }),
            ],
        };
        for (robot, con) in branches {
            let mut constraints = node.constraints.clone();
            if !constraints[robot].insert(con) {
                continue;
            }
            let path = match plan(robot, &constraints[robot]) {
                Ok(p) => p,
                Err(LowError::Timeout) => return Err(MapfError::Timeout),
                Err(LowError::Infeasible) => {
                    last_failed_robot = robot;
                    continue;
                }
            };
            let mut paths = node.paths.clone();
            paths[robot] = path;
            let cost = paths.iter().map(|p| p.len() - 1).sum();
            let id = nodes.len();
            if opts.trace {
                trace.push(TraceEntry {
                    node: id,
                    parent: Some(node.id),
                    cost,
                    constraint: Some(to_public(g, robot, con)),
                });
            }
            nodes.push(Some(CtNode {
                id,
                constraints,
                paths,
                cost,
            }));
            open.push(Reverse((cost, id)));
        }
    }
    Err(MapfError::Infeasible {
        robot: last_failed_robot,
    })
}

fn to_public(g: &RegionGraph, robot: usize, con: Con) -> MapfConstraint {
    match con {
        Con::Vertex { cell, t } => MapfConstraint {
            robot,
            cell: g.vertex(cell).clone(),
            timestep: t,
            kind: ConstraintKind::Vertex,
        },
        Con::Edge { from, to, t } => MapfConstraint {
            robot,
            cell: g.vertex(to).clone(),
            timestep: t,
            kind: ConstraintKind::Edge {
                from: g.vertex(from).clone(),
            },
        },
    }
}

/// Single-robot space-time A* honoring `constraints` (those naming other
/// robots are ignored).
pub fn low_level_search(
    g: &RegionGraph,
    robot: usize,
    start: &CellId,
    goal: &CellId,
    constraints: &[MapfConstraint],
    opts: &MapfOptions,
) -> Result<RegionPath, MapfError> {
    let deadline = Instant::now() + opts.budget;
    let s = g.index_of(start).ok_or(MapfError::InvalidEndpoint { robot })?;
    let gl = g.index_of(goal).ok_or(MapfError::InvalidEndpoint { robot })?;
    let mut cons = HashSet::new();
    for c in constraints.iter().filter(|c| c.robot == robot) {
        let Some(cell) = g.index_of(&c.cell) else {
            continue;
        };
        match &c.kind {
            ConstraintKind::Vertex => {
                cons.insert(Con::Vertex { cell, t: c.timestep });
            }
            ConstraintKind::Edge { from } => {
                if let Some(from) = g.index_of(from) {
                    cons.insert(Con::Edge {
                        from,
                        to: cell,
                        t: c.timestep,
                    });
                }
            }
        }
    }
    let h = bfs_distances(g, gl);
    let bg = Background::default();
    let low = LowLevel {
        g,
        capacity: opts.capacity,
        background: &bg,
        deadline,
    };
    let horizon = horizon_for(opts, g, h[s], &cons, &bg);
    match low.search(s, gl, &h, &cons, horizon) {
        Ok(p) => Ok(RegionPath {
            robot,
            cells: p.into_iter().map(|v| g.vertex(v).clone()).collect(),
        }),
        Err(LowError::Timeout) => Err(MapfError::Timeout),
        Err(LowError::Infeasible) => Err(MapfError::Infeasible { robot }),
    }
}

/// Checks the region-path invariants independently of the solver: endpoints,
/// vertex membership and that consecutive cells are equal or adjacent.
pub fn region_path_is_valid(g: &RegionGraph, path: &RegionPath, start: &CellId, goal: &CellId) -> bool {
    let (Some(first), Some(last)) = (path.cells.first(), path.cells.last()) else {
        return false;
    };
    if first != start || last != goal {
        return false;
    }
    let Some(idx) = path
        .cells
        .iter()
        .map(|c| g.index_of(c))
        .collect::<Option<Vec<_>>>()
    else {
        return false;
    };
    idx.windows(2)
        .all(|w| w[0] == w[1] || g.contains_edge(w[0], w[1]))
}
