use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gp_planner_bench::scenario::parse_scenario;
use gp_planner_bench::{replay, runner, BenchError};

#[derive(Parser)]
#[command(name = "gpplan", version, about = "Trajectory planning benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan one scenario and write trajectory, rasters, and report.
    Plan {
        /// Scenario file (TOML).
        scenario: PathBuf,
        /// Output directory; defaults to out/<scenario stem>.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Override the scenario's initialization seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Closed-loop replay: obstacles move, the planner replans every tick.
    Replay {
        scenario: PathBuf,
        /// Output directory; defaults to out/<scenario stem>.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Replan period in seconds; defaults to the scenario's setting.
        #[arg(long)]
        tick: Option<f64>,
        /// Mission time budget in seconds; defaults to the scenario's setting.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Run every scenario listed in a sweep manifest.
    Sweep {
        manifest: PathBuf,
        /// Output root; each run gets a subdirectory. Defaults to out/<stem>.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn default_out(input: &Path, fallback: &str) -> PathBuf {
    let stem = input
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(fallback);
    PathBuf::from("out").join(stem)
}

fn run(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Plan { scenario, out, seed } => {
            let mut s = parse_scenario(&scenario)?;
            if let Some(seed) = seed {
                s.init.seed = seed;
            }
            let out = out.unwrap_or_else(|| default_out(&scenario, "plan"));
            let report = runner::run_benchmark(&s, Some(&out))?;
            println!(
                "{}: path {:.2} m (straight {:.2} m), {} iterations, {}, collision_free = {}",
                report.scenario,
                report.metrics.path_length_m,
                report.metrics.straight_line_m,
                report.iterations,
                report.stop,
                report.audit.collision_free
            );
            println!("outputs in {}", out.display());
            Ok(())
        }
        Command::Replay {
            scenario,
            out,
            tick,
            horizon,
        } => {
            let s = parse_scenario(&scenario)?;
            let out = out.unwrap_or_else(|| default_out(&scenario, "replay"));
            let tick = tick.unwrap_or(s.replay.tick);
            let horizon = horizon.unwrap_or(s.replay.horizon);
            let report = replay::run_replay(&s, tick, horizon, s.replay.goal_radius, Some(&out))?;
            let clearance = report
                .min_track_distance_m
                .map(|d| format!("{d:.2} m min obstacle distance"))
                .unwrap_or_else(|| "no obstacles".into());
            println!(
                "{}: {} after {} replans ({:.1} s mission), {}",
                report.scenario,
                if report.reached_goal {
                    "reached goal"
                } else {
                    "horizon expired"
                },
                report.ticks,
                report.ticks as f64 * report.tick_s,
                clearance
            );
            println!("outputs in {}", out.display());
            Ok(())
        }
        Command::Sweep { manifest, out } => {
            let out = out.unwrap_or_else(|| default_out(&manifest, "sweep"));
            let results = runner::run_sweep(&manifest, &out)?;
            for (name, report) in &results {
                println!(
                    "{name}: path {:.2} m, clearance {}, {} iterations, {}",
                    report.metrics.path_length_m,
                    report
                        .metrics
                        .min_clearance_m
                        .map(|c| format!("{c:.2} m"))
                        .unwrap_or_else(|| "n/a".into()),
                    report.iterations,
                    report.stop
                );
            }
            println!("{} runs, summary in {}", results.len(), out.join("summary.csv").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
