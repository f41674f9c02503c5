use std::collections::BTreeMap;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::envgen::{gen_environment, EnvKind, EnvParams};
use super::scenario::{gen_scenario, Mode, RobotParams};
use super::validate::validate;
use super::GenError;
use crate::conflict::Exec;
use crate::orchestrator::{plan, FallbackStage, PlanResult, PlannerConfig, PlannerKind, Problem, Status};

/// Version of the report layout written by `run_benchmark`.
pub const SCHEMA_VERSION: u32 = 1;
/// Sampling interval of the validity check on every success.
pub const VALIDATION_DT: f64 = 0.05;

fn default_seeds() -> u64 {
    10
}

fn default_time_limit() -> f64 {
    600.0
}

fn default_region_factors() -> Vec<f64> {
    vec![5.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub planners: Vec<PlannerKind>,
    pub environments: Vec<EnvKind>,
    pub robot_counts: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: u64,
    /// Seconds per run.
    #[serde(default = "default_time_limit")]
    pub time_limit: f64,
    #[serde(default)]
    pub mode: Mode,
    /// Base region sizes in robot diameters; one sweep per factor.
    #[serde(default = "default_region_factors")]
    pub region_factors: Vec<f64>,
    #[serde(default)]
    pub robot: RobotParams,
    #[serde(default)]
    pub env_params: EnvParams,
    #[serde(default)]
    pub config: PlannerConfig,
}

impl BenchSpec {
    pub fn new(planners: Vec<PlannerKind>, environments: Vec<EnvKind>, robot_counts: Vec<usize>) -> Self {
        BenchSpec {
            planners,
            environments,
            robot_counts,
            seeds: default_seeds(),
            time_limit: default_time_limit(),
            mode: Mode::default(),
            region_factors: default_region_factors(),
            robot: RobotParams::default(),
            env_params: EnvParams::default(),
            config: PlannerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.planners.is_empty() || self.environments.is_empty() || self.region_factors.is_empty() {
            return Err("planners, environments and region factors must be nonempty".into());
        }
        if self.robot_counts.first().is_none_or(|&n| n == 0) || self.robot_counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err("robot counts must be positive and increasing".into());
        }
        if self.seeds == 0 || !(self.time_limit > 0.0) {
            return Err("seeds and time limit must be positive".into());
        }
        if self.region_factors.iter().any(|&f| !(f > 0.0)) {
            return Err("region factors must be positive".into());
        }
        Ok(())
    }

    /// All (planner, environment, factor, n, seed) cells in report order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &planner in &self.planners {
            for &env in &self.environments {
                for &region_factor in &self.region_factors {
                    for &n in &self.robot_counts {
                        for seed in 0..self.seeds {
                            out.push(Cell {
                                planner,
                                env,
                                region_factor,
                                n,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub planner: PlannerKind,
    pub env: EnvKind,
    pub region_factor: f64,
    pub n: usize,
    pub seed: u64,
}

/// Seeds the environment per (kind, seed) and the scenario per (kind, n, seed)
/// so that every planner sees identical problems.
fn mix(parts: &[u64]) -> u64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        // splitmix64 finalizer over the running state.
        let mut z = h ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

fn env_tag(k: EnvKind) -> u64 {
    match k {
        EnvKind::Empty => 1,
        EnvKind::Rooms => 2,
        EnvKind::Clutter(p) => 100 + u64::from(p),
        EnvKind::DiagonalSwap => 3,
    }
}

/// The problem a cell runs, shared by all planners at the same coordinates.
pub fn cell_problem(spec: &BenchSpec, cell: &Cell) -> Result<Problem, GenError> {
    let tag = env_tag(cell.env);
    let env = gen_environment(cell.env, &spec.env_params, mix(&[tag, cell.seed]))?;
    let scenario = match cell.env {
        EnvKind::DiagonalSwap => super::diagonal_swap_scenario(&env, cell.n, spec.robot, mix(&[tag, cell.n as u64, cell.seed]))?,
        _ => gen_scenario(&env, cell.n, spec.robot, mix(&[tag, cell.n as u64, cell.seed]))?,
    };
    scenario
        .problem(&env, spec.mode, spec.time_limit, cell.seed)
        .map_err(|e| GenError::BadParams(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(flatten)]
    pub cell: Cell,
    pub status: Status,
    /// Seconds; zero in the deterministic view.
    pub wall_time: f64,
    pub phases: BTreeMap<String, f64>,
    pub fallback_invoked: bool,
    pub fallback_used: Option<FallbackStage>,
    pub resolution_calls: usize,
    /// Violations found by the validity check; `None` unless the run succeeded.
    pub violations: Option<usize>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub planner: PlannerKind,
    pub env: EnvKind,
    pub region_factor: f64,
    pub n: usize,
    pub runs: usize,
    pub successes: usize,
    pub timeouts: usize,
    pub success_rate: f64,
    /// Over successes only; `None` without successes.
    pub median_time: Option<f64>,
    pub mean_time: Option<f64>,
    pub stddev_time: Option<f64>,
    /// Median over all runs, every non-success counted at the time limit.
    pub penalized_median_time: f64,
    pub invalid_successes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub spec: BenchSpec,
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl BenchReport {
    /// The report with every wall-clock quantity zeroed; reruns of a spec
    /// agree on this view.
    pub fn deterministic_view(&self) -> BenchReport {
        let mut r = self.clone();
        for rec in &mut r.records {
            rec.wall_time = 0.0;
            rec.phases.clear();
        }
        for a in &mut r.aggregates {
            a.median_time = a.median_time.map(|_| 0.0);
            a.mean_time = a.mean_time.map(|_| 0.0);
            a.stddev_time = a.stddev_time.map(|_| 0.0);
            a.penalized_median_time = 0.0;
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Aggregate row for one point of the sweep.
    pub fn aggregate(&self, planner: PlannerKind, env: EnvKind, region_factor: f64, n: usize) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.planner == planner && a.env == env && a.region_factor == region_factor && a.n == n)
    }

    /// Fixed-width text table of the aggregates.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<10} {:<14} {:>6} {:>3} {:>5} {:>8} {:>10} {:>10} {:>10}\n",
            "planner", "env", "factor", "n", "runs", "success", "median_s", "mean_s", "stddev_s"
        );
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        for a in &self.aggregates {
            s += &format!(
                "{:<10} {:<14} {:>6} {:>3} {:>5} {:>7.0}% {:>10} {:>10} {:>10}\n",
                a.planner.name(),
                a.env.label(),
                a.region_factor,
                a.n,
                a.runs,
                100.0 * a.success_rate,
                opt(a.median_time),
                opt(a.mean_time),
                opt(a.stddev_time)
            );
        }
        s
    }
}

/// Runs one cell: generate, plan, validate.
pub fn run_cell(spec: &BenchSpec, cell: &Cell) -> (RunRecord, Option<PlanResult>) {
    let mut rec = RunRecord {
        cell: *cell,
        status: Status::Failure,
        wall_time: 0.0,
        phases: BTreeMap::new(),
        fallback_invoked: false,
        fallback_used: None,
        resolution_calls: 0,
        violations: None,
        failure: None,
    };
    let problem = match cell_problem(spec, cell) {
        Ok(p) => p,
        Err(e) => {
            rec.failure = Some(format!("generation: {e}"));
            return (rec, None);
        }
    };
    let cfg = PlannerConfig {
        region_factor: cell.region_factor,
        ..spec.config.clone()
    };
    let result = match plan(&problem, cell.planner, &cfg) {
        Ok(r) => r,
        Err(e) => {
            rec.failure = Some(format!("problem: {e}"));
            return (rec, None);
        }
    };
    rec.status = result.status;
    rec.wall_time = result.timing.wall;
    rec.phases = result.timing.phases.clone();
    rec.fallback_invoked = result.stats.fallback_invoked;
    rec.fallback_used = result.stats.fallback_used;
    rec.resolution_calls = result.stats.resolution_calls;
    rec.failure = result.stats.failure.clone();
    if rec.wall_time > spec.time_limit {
        rec.status = Status::Timeout;
    }
    if rec.status == Status::Success {
        rec.violations = Some(validate(&result, &problem, VALIDATION_DT).violations.len());
    }
    (rec, Some(result))
}

pub fn run_benchmark(spec: &BenchSpec) -> Result<BenchReport, String> {
    run_benchmark_with(spec, Exec::default(), |_| {})
}

/// Runs every cell, calling `progress` after each; cells run concurrently
/// under `Exec::Parallel` and are reported in spec order either way.
pub fn run_benchmark_with(spec: &BenchSpec, exec: Exec, progress: impl Fn(&RunRecord) + Sync) -> Result<BenchReport, String> {
    spec.validate()?;
    let cells = spec.cells();
    let run = |c: &Cell| {
        let (rec, _) = run_cell(spec, c);
        progress(&rec);
        rec
    };
    let records: Vec<RunRecord> = match exec {
        #[cfg(feature = "parallel")]
        Exec::Parallel => cells.par_iter().map(run).collect(),
        _ => cells.iter().map(run).collect(),
    };
    let aggregates = aggregate(&records, spec.time_limit);
    Ok(BenchReport {
        schema_version: SCHEMA_VERSION,
        spec: spec.clone(),
        records,
        aggregates,
    })
}

fn aggregate(records: &[RunRecord], time_limit: f64) -> Vec<Aggregate> {
    let mut out: Vec<Aggregate> = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let c = &records[start].cell;
        let same = |r: &RunRecord| r.cell.planner == c.planner && r.cell.env == c.env && r.cell.region_factor == c.region_factor && r.cell.n == c.n;
        let end = start + records[start..].iter().take_while(|r| same(r)).count();
        let group = &records[start..end];
        let times: Vec<f64> = group.iter().filter(|r| r.status == Status::Success).map(|r| r.wall_time).collect();
        let penalized: Vec<f64> = group
            .iter()
            .map(|r| if r.status == Status::Success { r.wall_time } else { time_limit })
            .collect();
        let (mean, stddev) = mean_stddev(&times).unzip();
        out.push(Aggregate {
            planner: c.planner,
            env: c.env,
            region_factor: c.region_factor,
            n: c.n,
            runs: group.len(),
            successes: times.len(),
            timeouts: group.iter().filter(|r| r.status == Status::Timeout).count(),
            success_rate: times.len() as f64 / group.len() as f64,
            median_time: median(&times),
            mean_time: mean,
            stddev_time: stddev,
            penalized_median_time: median(&penalized).unwrap_or(time_limit),
            invalid_successes: group.iter().filter(|r| r.violations.is_some_and(|v| v > 0)).count(),
        });
        start = end;
    }
    out
}

/// Median; the mean of the middle pair for even lengths.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Mean and population standard deviation.
pub fn mean_stddev(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BenchSpec {
        BenchSpec {
            seeds: 3,
            time_limit: 20.0,
            ..BenchSpec::new(vec![PlannerKind::Cipher], vec![EnvKind::Empty], vec![2])
        }
    }

    #[test]
    fn three_seeds_make_three_records() {
        let r = run_benchmark(&small()).unwrap();
        assert_eq!(r.records.len(), 3);
        assert_eq!(r.aggregates.len(), 1);
        let a = &r.aggregates[0];
        assert_eq!(a.runs, 3);
        assert_eq!(a.successes, r.records.iter().filter(|x| x.status == Status::Success).count());
        assert_eq!(a.invalid_successes, 0);
        assert!(r.records.iter().all(|x| x.status != Status::Success || x.violations == Some(0)));
    }

    #[test]
    fn reruns_agree_on_the_deterministic_view() {
        let a = run_benchmark_with(&small(), Exec::Parallel, |_| {}).unwrap();
        let b = run_benchmark_with(&small(), Exec::Sequential, |_| {}).unwrap();
        assert_eq!(a.deterministic_view().to_json(), b.deterministic_view().to_json());
    }

    #[test]
    fn timeouts_are_excluded_from_times() {
        let rec = |status, wall_time| RunRecord {
            cell: Cell {
                planner: PlannerKind::Coupled,
                env: EnvKind::Empty,
                region_factor: 5.0,
                n: 2,
                seed: 0,
            },
            status,
            wall_time,
            phases: BTreeMap::new(),
            fallback_invoked: false,
            fallback_used: None,
            resolution_calls: 0,
            violations: None,
            failure: None,
        };
        let a = &aggregate(&[rec(Status::Success, 1.0), rec(Status::Timeout, 60.2), rec(Status::Success, 3.0)], 60.0)[0];
        assert_eq!((a.successes, a.timeouts), (2, 1));
        assert_eq!(a.median_time, Some(2.0));
        assert_eq!(a.mean_time, Some(2.0));
        assert_eq!(a.stddev_time, Some(1.0));
        assert_eq!(a.penalized_median_time, 3.0);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = small();
        s.robot_counts = vec![4, 2];
        assert!(s.validate().is_err());
        s.robot_counts = vec![0, 2];
        assert!(s.validate().is_err());
        let mut s = small();
        s.seeds = 0;
        assert!(run_benchmark(&s).is_err());
    }

    #[test]
    fn spec_roundtrips_with_defaults() {
        let s = BenchSpec::from_json(r#"{"planners":["cipher","coupled"],"environments":["rooms","clutter-20"],"robot_counts":[2,4]}"#).unwrap();
        assert_eq!(s.seeds, 10);
        assert_eq!(s.time_limit, 600.0);
        assert_eq!(s.environments, vec![EnvKind::Rooms, EnvKind::Clutter(20)]);
        assert_eq!(BenchSpec::from_json(&s.to_json()).unwrap(), s);
    }
}
