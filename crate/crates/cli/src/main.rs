use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use cipher_core::bench::{
    diagonal_swap_scenario, gen_environment, gen_scenario, render_svg, run_benchmark_with, validate, BenchSpec, EnvKind,
    EnvParams, Mode, RobotParams, Scenario, SvgInput, VALIDATION_DT,
};
use cipher_core::conflict::Exec;
use cipher_core::geometry::Environment;
use cipher_core::orchestrator::{plan, PlanResult, PlannerConfig, PlannerKind, Problem};

/// Exit code for a failed plan, an invalid result or a bench with invalid successes.
const EXIT_NEGATIVE: u8 = 2;

#[derive(Parser)]
#[command(name = "cipher", version, about = "Multi-robot motion planning with guided refinement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    /// Rejection-sampled starts and goals.
    Random,
    /// Corner starts with goals mirrored through the center.
    DiagonalSwap,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an environment file.
    GenEnv {
        /// empty, rooms, clutter-<percent> or diagonal-swap.
        #[arg(long)]
        kind: EnvKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generator parameters as JSON; missing fields take defaults.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample starts and goals in an environment.
    GenScenario {
        #[arg(long)]
        env: PathBuf,
        #[arg(short, long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Layout::Random)]
        layout: Layout,
        #[arg(long, default_value_t = 0.5)]
        radius: f64,
        #[arg(long, default_value_t = 1.0)]
        v_max: f64,
        #[arg(long, default_value_t = 1.0)]
        omega_max: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plan a scenario; exits 0 only on success.
    Plan {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// cipher, pprg, decoupled or coupled.
        #[arg(long, default_value = "cipher")]
        planner: PlannerKind,
        /// geometric or kinodynamic.
        #[arg(long, default_value = "geometric")]
        mode: Mode,
        #[arg(long, default_value_t = 60.0)]
        time_limit: f64,
        /// Defaults to the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Full planner configuration as JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check a result against its scenario; exits 0 only if valid.
    Validate {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        result: PathBuf,
        #[arg(long, default_value_t = VALIDATION_DT)]
        dt: f64,
        /// Write the report as JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a benchmark spec; exits 0 unless some success fails validation.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        /// Report file; the aggregate table goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run cells one at a time.
        #[arg(long)]
        sequential: bool,
        /// Print one line per finished run to stderr.
        #[arg(long)]
        progress: bool,
    },
    /// Draw an environment with optional result, scenario and decomposition.
    Render {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        result: Option<PathBuf>,
        /// Adds start and goal markers.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Omit the decomposition grid stored in the result.
        #[arg(long)]
        no_decomposition: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn load_env(path: &Path) -> Result<Environment> {
    Environment::from_json(&read(path)?).with_context(|| format!("parsing environment {}", path.display()))
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::from_json(&read(path)?).with_context(|| format!("parsing scenario {}", path.display()))
}

fn load_result(path: &Path) -> Result<PlanResult> {
    PlanResult::from_json(&read(path)?).with_context(|| format!("parsing result {}", path.display()))
}

/// The problem a result was planned for. Mode follows the trajectories;
/// the time limit plays no part in validation.
fn result_problem(env: &Environment, sc: &Scenario, result: &PlanResult) -> Result<Problem> {
    let mode = if result.trajectories.iter().any(|t| t.is_kinodynamic()) {
        Mode::Kinodynamic
    } else {
        Mode::Geometric
    };
    Ok(sc.problem(env, mode, 1.0, result.seed)?)
}

fn verdict(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NEGATIVE)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenEnv { kind, seed, params, out } => {
            let params = match params {
                Some(p) => serde_json::from_str(&read(&p)?).context("parsing generator parameters")?,
                None => EnvParams::default(),
            };
            let env = gen_environment(kind, &params, seed)?;
            write(out.as_deref(), &env.to_json())?;
        }
        Command::GenScenario {
            env,
            n,
            seed,
            layout,
            radius,
            v_max,
            omega_max,
            out,
        } => {
            let env = load_env(&env)?;
            let robot = RobotParams { radius, v_max, omega_max };
            let sc = match layout {
                Layout::Random => gen_scenario(&env, n, robot, seed)?,
                Layout::DiagonalSwap => diagonal_swap_scenario(&env, n, robot, seed)?,
            };
            write(out.as_deref(), &sc.to_json())?;
        }
        Command::Plan {
            env,
            scenario,
            planner,
            mode,
            time_limit,
            seed,
            config,
            out,
        } => {
            let env = load_env(&env)?;
            let sc = load_scenario(&scenario)?;
            let cfg: PlannerConfig = match config {
                Some(p) => serde_json::from_str(&read(&p)?).context("parsing planner configuration")?,
                None => PlannerConfig::default(),
            };
            let p = sc.problem(&env, mode, time_limit, seed.unwrap_or(sc.seed))?;
            let result = plan(&p, planner, &cfg)?;
            eprintln!(
                "{}: {:?} in {:.3}s{}",
                result.planner,
                result.status,
                result.timing.wall,
                result.stats.failure.as_ref().map(|f| format!(" ({f})")).unwrap_or_default()
            );
            write(out.as_deref(), &result.to_json())?;
            return Ok(verdict(result.is_success()));
        }
        Command::Validate {
            env,
            scenario,
            result,
            dt,
            out,
        } => {
            if dt.is_nan() || dt <= 0.0 {
                bail!("dt must be positive");
            }
            let env = load_env(&env)?;
            let sc = load_scenario(&scenario)?;
            let result = load_result(&result)?;
            if !result.is_success() {
                eprintln!("result status is {:?}; nothing to validate", result.status);
                return Ok(verdict(false));
            }
            let p = result_problem(&env, &sc, &result)?;
            let report = validate(&result, &p, dt);
            eprintln!("{} samples, {} violations", report.samples, report.violations.len());
            write(out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
            return Ok(verdict(report.is_valid()));
        }
        Command::Bench {
            spec,
            out,
            sequential,
            progress,
        } => {
            let spec = BenchSpec::from_json(&read(&spec)?).context("parsing bench spec")?;
            let exec = if sequential { Exec::Sequential } else { Exec::Parallel };
            let report = run_benchmark_with(&spec, exec, |r| {
                if progress {
                    eprintln!(
                        "{} {} factor {} n {} seed {}: {:?} {:.3}s",
                        r.cell.planner, r.cell.env, r.cell.region_factor, r.cell.n, r.cell.seed, r.status, r.wall_time
                    );
                }
            })
            .map_err(anyhow::Error::msg)?;
            if let Some(p) = out {
                write(Some(&p), &report.to_json())?;
            }
            println!("{}", report.table());
            let invalid: usize = report.aggregates.iter().map(|a| a.invalid_successes).sum();
            if invalid > 0 {
                eprintln!("{invalid} successful runs failed validation");
            }
            return Ok(verdict(invalid == 0));
        }
        Command::Render {
            env,
            result,
            scenario,
            no_decomposition,
            out,
        } => {
            let env = load_env(&env)?;
            let result = result.as_deref().map(load_result).transpose()?;
            let scenario = scenario.as_deref().map(load_scenario).transpose()?;
            let problem = match &scenario {
                Some(sc) => Some(match &result {
                    Some(r) => result_problem(&env, sc, r)?,
                    None => sc.problem(&env, Mode::Geometric, 1.0, sc.seed)?,
                }),
                None => None,
            };
            let decomposition = if no_decomposition {
                None
            } else {
                result.as_ref().and_then(|r| r.stats.decomposition.as_ref())
            };
            let svg = render_svg(
                &env,
                SvgInput {
                    result: result.as_ref(),
                    problem: problem.as_ref(),
                    decomposition,
                },
            );
            write(Some(&out), &svg)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
