//! Sampled inter-robot conflict detection.
//!
//! Every trajectory is sampled on the shared grid `k * dt_check`, with the
//! robot resting at its final state after its own duration. Samples are
//! grouped into segments of `segment_len`; a pair is only checked sample by
//! sample inside segments whose inflated bounding boxes overlap.

use serde::{Deserialize, Serialize};

use crate::decomposition::{CellId, Decomposition};
use crate::geometry::{Configuration, RobotModel};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub robot_a: usize,
    pub robot_b: usize,
    pub t: f64,
    pub pos_a: Configuration,
    pub pos_b: Configuration,
    /// Leaf containing the midpoint of the two positions.
    pub cell: Option<CellId>,
}

/// Execution strategy for the pairwise checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Sequential when the `parallel` feature is disabled or the batch is
    /// smaller than `PARALLEL_MIN_WORK`.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckParams {
    pub dt_check: f64,
    pub segment_len: f64,
}

impl Default for CheckParams {
    fn default() -> Self {
        CheckParams {
            dt_check: 0.05,
            segment_len: 1.0,
        }
    }
}

impl CheckParams {
    fn samples_per_segment(&self) -> usize {
        assert!(self.dt_check > 0.0 && self.segment_len > 0.0);
        (self.segment_len / self.dt_check).round().max(1.0) as usize
    }
}

/// Pair-samples below which `Exec::Parallel` runs sequentially; smaller
/// batches cost more in scheduling than they save.
pub const PARALLEL_MIN_WORK: usize = 50_000;

/// State at `t`, resting at the final state once the trajectory has ended.
pub fn state_at(traj: &Trajectory, t: f64) -> Configuration {
    traj.state_at(t)
}

/// Last grid index needed to cover `duration`.
pub fn last_sample(duration: f64, dt: f64) -> usize {
    ((duration / dt) - 1e-9).ceil().max(0.0) as usize
}

struct Sampled {
    pts: Vec<(f64, f64)>,
    /// Per segment `[xmin, ymin, xmax, ymax]`.
    boxes: Vec<[f64; 4]>,
}

fn sample(traj: &Trajectory, k_max: usize, per_seg: usize, dt: f64) -> Sampled {
    let k_end = last_sample(traj.duration(), dt).min(k_max);
    let mut pts: Vec<(f64, f64)> = (0..=k_end)
        .map(|k| {
            let s = traj.state_at(k as f64 * dt);
            (s.x, s.y)
        })
        .collect();
    let rest = traj.final_state();
    pts.resize(k_max + 1, (rest.x, rest.y));
    let boxes = pts
        .chunks(per_seg)
        .map(|c| {
            c.iter().fold(
                [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
                |b, &(x, y)| [b[0].min(x), b[1].min(y), b[2].max(x), b[3].max(y)],
            )
        })
        .collect();
    Sampled { pts, boxes }
}

fn check_pair(
    sa: &Sampled,
    sb: &Sampled,
    bound: f64,
    per_seg: usize,
) -> Vec<usize> {
    let mut hits = Vec::new();
    let mut inside = false;
    for (seg, (ba, bb)) in sa.boxes.iter().zip(&sb.boxes).enumerate() {
        let gap_x = (ba[0] - bb[2]).max(bb[0] - ba[2]);
        let gap_y = (ba[1] - bb[3]).max(bb[1] - ba[3]);
        if gap_x >= bound || gap_y >= bound {
            inside = false;
            continue;
        }
        let lo = seg * per_seg;
        let hi = (lo + per_seg).min(sa.pts.len());
        for k in lo..hi {
            let (pa, pb) = (sa.pts[k], sb.pts[k]);
            let violating = (pa.0 - pb.0).hypot(pa.1 - pb.1) < bound;
            if violating && !inside {
                hits.push(k);
            }
            inside = violating;
        }
    }
    hits
}

fn pairs(n: usize, involving: Option<&[usize]>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if involving.is_none_or(|s| s.contains(&a) || s.contains(&b)) {
                out.push((a, b));
            }
        }
    }
    out
}

/// All conflicts among `trajs`, earliest first, then by robot indices.
/// Each contiguous violation interval of a pair is reported once, at its
/// first sampled time. With `involving`, only pairs touching those robots
/// are checked.
pub fn detect_conflicts_with(
    trajs: &[Trajectory],
    robots: &[RobotModel],
    params: CheckParams,
    d: Option<&Decomposition>,
    involving: Option<&[usize]>,
    exec: Exec,
) -> Vec<Conflict> {
    assert_eq!(trajs.len(), robots.len(), "one robot model per trajectory");
    let dt = params.dt_check;
    let per_seg = params.samples_per_segment();
    let k_max = trajs
        .iter()
        .map(|t| last_sample(t.duration(), dt))
        .max()
        .unwrap_or(0);
    let work = pairs(trajs.len(), involving);
    let sample_one = |t: &Trajectory| sample(t, k_max, per_seg, dt);
    let check = |&(a, b): &(usize, usize), s: &[Sampled]| {
        check_pair(&s[a], &s[b], robots[a].radius + robots[b].radius, per_seg)
            .into_iter()
            .map(move |k| (k, a, b))
            .collect::<Vec<_>>()
    };
    let mut hits: Vec<(usize, usize, usize)> = match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel if work.len() * (k_max + 1) >= PARALLEL_MIN_WORK => {
            use rayon::prelude::*;
            let s: Vec<Sampled> = trajs.par_iter().map(sample_one).collect();
            work.par_iter().flat_map_iter(|p| check(p, &s)).collect()
        }
        _ => {
            let s: Vec<Sampled> = trajs.iter().map(sample_one).collect();
            work.iter().flat_map(|p| check(p, &s)).collect()
        }
    };
    hits.sort_unstable();
    hits.into_iter()
        .map(|(k, a, b)| {
            let t = k as f64 * dt;
            let pos_a = trajs[a].state_at(t);
            let pos_b = trajs[b].state_at(t);
            let cell = d.and_then(|d| d.project(&pos_a.midpoint(&pos_b)).ok());
            Conflict {
                robot_a: a,
                robot_b: b,
                t,
                pos_a,
                pos_b,
                cell,
            }
        })
        .collect()
}

/// All-pairs detection with the default execution strategy.
pub fn detect_conflicts(
    trajs: &[Trajectory],
    robots: &[RobotModel],
    params: CheckParams,
    d: Option<&Decomposition>,
) -> Vec<Conflict> {
    detect_conflicts_with(trajs, robots, params, d, None, Exec::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Waypoint;
    use proptest::prelude::*;

    fn still(robot: usize, x: f64, y: f64) -> Trajectory {
        Trajectory::geometric(robot, vec![Waypoint { t: 0.0, x, y }])
    }

    fn line(robot: usize, pts: &[(f64, f64, f64)]) -> Trajectory {
        Trajectory::geometric(robot, pts.iter().map(|&(t, x, y)| Waypoint { t, x, y }).collect())
    }

    fn discs(n: usize) -> Vec<RobotModel> {
        vec![RobotModel::geometric(0.5).unwrap(); n]
    }

    #[test]
    fn stationary_pairs() {
        let c = detect_conflicts(&[still(0, 0.0, 0.0), still(1, 0.8, 0.0)], &discs(2), CheckParams::default(), None);
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].robot_a, c[0].robot_b, c[0].t), (0, 1, 0.0));
        let c = detect_conflicts(&[still(0, 0.0, 0.0), still(1, 1.2, 0.0)], &discs(2), CheckParams::default(), None);
        assert!(c.is_empty());
    }

    #[test]
    fn finished_robot_still_blocks() {
        let a = line(0, &[(0.0, 0.0, 0.0), (5.0, 5.0, 0.0)]);
        // B passes 0.9 below A's resting position exactly at t = 7.
        let b = line(1, &[(0.0, -2.0, -0.9), (7.0, 5.0, -0.9), (14.0, 12.0, -0.9)]);
        let c = detect_conflicts(&[a, b], &discs(2), CheckParams::default(), None);
        assert_eq!(c.len(), 1);
        // Contact starts where |x - 5| < sqrt(1 - 0.81), i.e. after t = 7 - 0.4359.
        let first = 7.0 - (1.0f64 - 0.81).sqrt();
        assert!(c[0].t >= first && c[0].t < first + 0.05 + 1e-9, "t = {}", c[0].t);
        assert!(c[0].t <= 7.0);
    }

    #[test]
    fn separate_intervals_are_reported_separately() {
        let a = still(0, 0.0, 0.0);
        let b = line(1, &[(0.0, 0.5, 0.0), (2.0, 3.0, 0.0), (4.0, 0.5, 0.0)]);
        let c = detect_conflicts(&[a, b], &discs(2), CheckParams::default(), None);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].t, 0.0);
        assert!(c[1].t > 3.0);
    }

    #[test]
    fn involving_restricts_pairs() {
        let ts = [still(0, 0.0, 0.0), still(1, 0.5, 0.0), still(2, 10.0, 0.0), still(3, 10.5, 0.0)];
        let all = detect_conflicts(&ts, &discs(4), CheckParams::default(), None);
        assert_eq!(all.len(), 2);
        let some = detect_conflicts_with(&ts, &discs(4), CheckParams::default(), None, Some(&[3]), Exec::Sequential);
        assert_eq!(some.len(), 1);
        assert_eq!((some[0].robot_a, some[0].robot_b), (2, 3));
    }

    fn arb_traj() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.0..6.0f64, 0.0..6.0f64), 1..5)
    }

    fn build(robot: usize, pts: &[(f64, f64)]) -> Trajectory {
        let cfgs: Vec<Configuration> = pts.iter().map(|&(x, y)| Configuration::point(x, y)).collect();
        Trajectory::from_polyline(robot, &cfgs)
    }

    /// Brute force over every grid sample, no segment pruning.
    fn brute(trajs: &[Trajectory], dt: f64, bound: f64) -> Vec<(usize, usize, usize)> {
        let k_max = trajs.iter().map(|t| last_sample(t.duration(), dt)).max().unwrap();
        let mut out = Vec::new();
        for a in 0..trajs.len() {
            for b in a + 1..trajs.len() {
                let mut prev = false;
                for k in 0..=k_max {
                    let t = k as f64 * dt;
                    let v = trajs[a].state_at(t).dist(&trajs[b].state_at(t)) < bound;
                    if v && !prev {
                        out.push((k, a, b));
                    }
                    prev = v;
                }
            }
        }
        out.sort_unstable();
        out
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_exec_modes(ps in prop::collection::vec(arb_traj(), 2..5)) {
            let trajs: Vec<Trajectory> = ps.iter().enumerate().map(|(i, p)| build(i, p)).collect();
            let robots = discs(trajs.len());
            let seq = detect_conflicts_with(&trajs, &robots, CheckParams::default(), None, None, Exec::Sequential);
            let par = detect_conflicts_with(&trajs, &robots, CheckParams::default(), None, None, Exec::Parallel);
            prop_assert_eq!(&seq, &par);
            let got: Vec<(usize, usize, usize)> = seq.iter()
                .map(|c| ((c.t / 0.05).round() as usize, c.robot_a, c.robot_b)).collect();
            prop_assert_eq!(got, brute(&trajs, 0.05, 1.0));
        }

        #[test]
        fn order_of_trajectories_does_not_matter(ps in prop::collection::vec(arb_traj(), 2..5)) {
            let trajs: Vec<Trajectory> = ps.iter().enumerate().map(|(i, p)| build(i, p)).collect();
            let robots = discs(trajs.len());
            let n = trajs.len();
            let rev: Vec<Trajectory> = trajs.iter().rev().cloned().collect();
            let key = |c: &Conflict, flip: bool| {
                let (a, b) = if flip { (n - 1 - c.robot_b, n - 1 - c.robot_a) } else { (c.robot_a, c.robot_b) };
                ((c.t / 0.05).round() as usize, a, b)
            };
            let mut x: Vec<_> = detect_conflicts(&trajs, &robots, CheckParams::default(), None).iter().map(|c| key(c, false)).collect();
            let mut y: Vec<_> = detect_conflicts(&rev, &robots, CheckParams::default(), None).iter().map(|c| key(c, true)).collect();
            x.sort_unstable();
            y.sort_unstable();
            prop_assert_eq!(x, y);
        }

        #[test]
        fn halving_dt_keeps_conflicting_pairs(ps in prop::collection::vec(arb_traj(), 2..4)) {
            let trajs: Vec<Trajectory> = ps.iter().enumerate().map(|(i, p)| build(i, p)).collect();
            let robots = discs(trajs.len());
            let pairs = |dt: f64| {
                let mut v: Vec<(usize, usize)> = detect_conflicts(&trajs, &robots, CheckParams { dt_check: dt, segment_len: 1.0 }, None)
                    .iter().map(|c| (c.robot_a, c.robot_b)).collect();
                v.dedup();
                v.into_iter().collect::<std::collections::BTreeSet<_>>()
            };
            prop_assert!(pairs(0.1).is_subset(&pairs(0.05)));
        }
    }
}
