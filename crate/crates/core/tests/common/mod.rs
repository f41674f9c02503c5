//! Shared oracles for the integration tests.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use cipher_core::decomposition::{CellId, RegionGraph};
use cipher_core::geometry::Rect;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random MAPF instance on a grid of at most 3×3 cells with 1 or 2 robots.
pub struct MapfInstance {
    pub graph: RegionGraph,
    pub starts: Vec<CellId>,
    pub goals: Vec<CellId>,
    pub w: u32,
    pub h: u32,
}

pub fn mapf_instance(seed: u64) -> MapfInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let (w, h) = (rng.gen_range(1..=3u32), rng.gen_range(1..=3u32));
        let free: Vec<(u32, u32)> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).filter(|_| rng.gen::<f64>() > 0.25).collect();
        let n = rng.gen_range(1..=2usize);
        if free.len() < n {
            continue;
        }
        let pick = |rng: &mut ChaCha8Rng| -> Vec<CellId> {
            free.choose_multiple(rng, n).map(|&(x, y)| CellId::base(x, y)).collect()
        };
        let starts = pick(&mut rng);
        let goals = pick(&mut rng);
        let cells: Vec<(CellId, Rect)> = free
            .iter()
            .map(|&(x, y)| (CellId::base(x, y), Rect::new(x as f64, y as f64, x as f64 + 1.0, y as f64 + 1.0)))
            .collect();
        let mut edges = Vec::new();
        for (i, a) in free.iter().enumerate() {
            for (j, b) in free.iter().enumerate().skip(i + 1) {
                if a.0.abs_diff(b.0) + a.1.abs_diff(b.1) == 1 {
                    edges.push((i, j));
                }
            }
        }
        return MapfInstance {
            graph: RegionGraph::from_parts(cells, &edges),
            starts,
            goals,
            w,
            h,
        };
    }
}

/// Optimal sum of costs by uniform-cost search over joint states, capacity 1,
/// no swaps. A robot's cost is its final arrival time at its goal; "parking"
/// commits a robot to rest at its goal from then on.
pub fn joint_optimum(g: &RegionGraph, starts: &[CellId], goals: &[CellId]) -> Option<usize> {
    let idx = |c: &CellId| g.index_of(c).expect("endpoint in graph");
    let s: Vec<usize> = starts.iter().map(idx).collect();
    let goal: Vec<usize> = goals.iter().map(idx).collect();
    let n = s.len();
    type State = (Vec<usize>, Vec<bool>);
    let mut best: HashMap<State, usize> = HashMap::new();
    let mut open = BinaryHeap::new();
    let start: State = (s, vec![false; n]);
    best.insert(start.clone(), 0);
    open.push(Reverse((0usize, start)));
    while let Some(Reverse((cost, (pos, parked)))) = open.pop() {
        if best.get(&(pos.clone(), parked.clone())).is_some_and(|&c| c < cost) {
            continue;
        }
        if parked.iter().all(|&p| p) {
            return Some(cost);
        }
        let mut push = |next: State, c: usize, open: &mut BinaryHeap<Reverse<(usize, State)>>| {
            if best.get(&next).is_none_or(|&b| c < b) {
                best.insert(next.clone(), c);
                open.push(Reverse((c, next)));
            }
        };
        for i in 0..n {
            if !parked[i] && pos[i] == goal[i] {
                let mut p = parked.clone();
                p[i] = true;
                push((pos.clone(), p), cost, &mut open);
            }
        }
        // Every unparked robot waits or moves; parked robots stay put.
        let options: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                if parked[i] {
                    vec![pos[i]]
                } else {
                    std::iter::once(pos[i]).chain(g.neighbors(pos[i]).iter().copied()).collect()
                }
            })
            .collect();
        let step_cost = parked.iter().filter(|&&p| !p).count();
        let mut choice = vec![0usize; n];
        'joint: loop {
            let next: Vec<usize> = (0..n).map(|i| options[i][choice[i]]).collect();
            let vertex_ok = (0..n).all(|i| (i + 1..n).all(|j| next[i] != next[j]));
            let swap_ok = (0..n).all(|i| (i + 1..n).all(|j| !(next[i] == pos[j] && next[j] == pos[i] && pos[i] != pos[j])));
            if vertex_ok && swap_ok {
                push((next, parked.clone()), cost + step_cost, &mut open);
            }
            for i in 0..n {
                choice[i] += 1;
                if choice[i] < options[i].len() {
                    continue 'joint;
                }
                choice[i] = 0;
            }
            break;
        }
    }
    None
}
