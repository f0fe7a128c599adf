use std::path::Path;
use std::time::Instant;

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use gp_planner_core::dynfield::{safe_radius, ObstacleTrack};
use gp_planner_core::gp::gp_interpolate;
use gp_planner_core::sdf::compute_sdf;
use gp_planner_core::trajectory::{TimeGrid, Trajectory, TrajectoryState};

use crate::error::{io_err, BenchError};
use crate::output;
use crate::runner::{plan, PlanRequest};
use crate::scenario::{Scenario, ScenarioTrack};
use crate::Result;

/// One closed-loop step: the world state seen at this tick and the solve
/// that replanned from it.
#[derive(Debug, Clone, Serialize)]
pub struct TickLog {
    pub tick: usize,
    pub time_s: f64,
    pub ego_position: [f64; 2],
    pub ego_velocity: [f64; 2],
    pub distance_to_goal_m: f64,
    pub min_track_distance_m: Option<f64>,
    pub obstacle_positions: Vec<[f64; 2]>,
    pub solve_iterations: usize,
    pub solve_error: f64,
}

/// Outcome of a closed-loop mission.
#[derive(Debug, Clone, Serialize)]
pub struct ReplayReport {
    pub scenario: String,
    pub tick_s: f64,
    pub horizon_s: f64,
    pub goal_radius_m: f64,
    pub reached_goal: bool,
    /// Number of replans performed.
    pub ticks: usize,
    pub final_distance_m: f64,
    /// Closest ego-to-obstacle center distance over the whole mission.
    pub min_track_distance_m: Option<f64>,
    /// Same, divided by each obstacle's safe radius; below 1 means the ego
    /// entered a safe area at some tick.
    pub min_safe_ratio: Option<f64>,
    /// Largest offset from the straight start-goal line over the mission.
    pub max_cross_track_m: f64,
    pub failed_at_tick: Option<usize>,
    pub wall_time_s: f64,
    pub log: Vec<TickLog>,
}

fn propagate_tracks(tracks: &[ScenarioTrack], time_s: f64) -> Vec<ScenarioTrack> {
    tracks
        .iter()
        .map(|st| ScenarioTrack {
            track: ObstacleTrack {
                position: st.track.position + st.track.course_unit() * st.track.speed * time_s,
                ..st.track
            },
            model_speed_scale: st.model_speed_scale,
        })
        .collect()
}

/// Plan state at mission time tau, using the planner's own interpolation
/// between support states; clamps beyond the plan horizon.
pub fn state_at(
    grid: &TimeGrid<f64>,
    traj: &Trajectory<f64>,
    qc: &Matrix2<f64>,
    tau: f64,
) -> TrajectoryState<f64> {
    let times = grid.times();
    let last = times.len() - 1;
    if tau <= times[0] {
        return traj.states[0];
    }
    if tau >= times[last] {
        return traj.states[last];
    }
    let mut i = 0;
    while times[i + 1] < tau {
        i += 1;
    }
    if times[i + 1] == tau {
        return traj.states[i + 1];
    }
    gp_interpolate(
        &traj.states[i],
        &traj.states[i + 1],
        times[i],
        times[i + 1],
        tau,
        qc,
    )
    .expect("tau lies strictly inside the segment")
    .state
}

/// Closed-loop mission: every tick the obstacles move at their true speed,
/// the ego advances along its current plan, and the planner replans from the
/// ego's present state against the obstacles' present positions. Ends when
/// the ego comes within goal_radius of the goal or the horizon expires.
pub fn run_replay(
    s: &Scenario,
    tick: f64,
    horizon: f64,
    goal_radius: f64,
    out_dir: Option<&Path>,
) -> Result<ReplayReport> {
    if !(tick > 0.0 && tick.is_finite()) {
        return Err(BenchError::Parse(format!(
            "replay tick must be positive and finite, got {tick}"
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(BenchError::Parse(format!(
            "replay horizon must be positive and finite, got {horizon}"
        )));
    }
    if !(goal_radius > 0.0 && goal_radius.is_finite()) {
        return Err(BenchError::Parse(format!(
            "replay goal radius must be positive and finite, got {goal_radius}"
        )));
    }

    let t_wall = Instant::now();
    let max_ticks = (horizon / tick).ceil() as usize;
    let sdf = s.occupancy.as_ref().map(compute_sdf);

    let line = s.goal - s.start;
    let line_len = line.norm();
    let nhat = if line_len > 0.0 {
        Vector2::new(line.y, -line.x) / line_len
    } else {
        Vector2::zeros()
    };

    let mut ego_pos = s.start;
    let mut ego_vel: Option<Vector2<f64>> = None;
    let mut log: Vec<TickLog> = Vec::new();
    let mut reached_goal = false;
    let mut min_track_distance: Option<f64> = None;
    let mut min_safe_ratio: Option<f64> = None;
    let mut max_cross_track = 0.0f64;
    let mut final_distance;

    let mut k = 0;
    loop {
        let time_s = k as f64 * tick;
        let tracks_now = propagate_tracks(&s.tracks, time_s);

        max_cross_track = max_cross_track.max(nhat.dot(&(ego_pos - s.start)).abs());
        let mut min_dist_now: Option<f64> = None;
        for st in &tracks_now {
            let dist = (ego_pos - st.track.position).norm();
            min_dist_now = Some(min_dist_now.map_or(dist, |m: f64| m.min(dist)));
            min_track_distance = Some(min_track_distance.map_or(dist, |m: f64| m.min(dist)));
            let ratio = dist / safe_radius(&st.track.extents, s.dynamics.zeta);
            min_safe_ratio = Some(min_safe_ratio.map_or(ratio, |m: f64| m.min(ratio)));
        }

        final_distance = (ego_pos - s.goal).norm();
        if final_distance <= goal_radius {
            reached_goal = true;
            break;
        }
        if k == max_ticks {
            break;
        }

        let req = PlanRequest {
            scenario: s,
            start: ego_pos,
            start_velocity: ego_vel,
            tracks: &tracks_now,
            seed: s.init.seed.wrapping_add(k as u64),
            prebuilt_sdf: sdf.as_ref(),
        };
        let (artifacts, run) = match plan(&req) {
            Ok(v) => v,
            Err(e) => {
                let report = ReplayReport {
                    scenario: s.name.clone(),
                    tick_s: tick,
                    horizon_s: horizon,
                    goal_radius_m: goal_radius,
                    reached_goal: false,
                    ticks: log.len(),
                    final_distance_m: final_distance,
                    min_track_distance_m: min_track_distance,
                    min_safe_ratio,
                    max_cross_track_m: max_cross_track,
                    failed_at_tick: Some(k),
                    wall_time_s: t_wall.elapsed().as_secs_f64(),
                    log,
                };
                write_outputs(out_dir, s, &report)?;
                return Err(BenchError::Solve(format!(
                    "replay of {} failed at tick {k} (t = {time_s} s): {e}",
                    s.name
                )));
            }
        };
        log.push(TickLog {
            tick: k,
            time_s,
            ego_position: [ego_pos.x, ego_pos.y],
            ego_velocity: {
                let v = ego_vel.unwrap_or_else(|| {
                    artifacts.solution.states[0].velocity
                });
                [v.x, v.y]
            },
            distance_to_goal_m: final_distance,
            min_track_distance_m: min_dist_now,
            obstacle_positions: tracks_now
                .iter()
                .map(|st| [st.track.position.x, st.track.position.y])
                .collect(),
            solve_iterations: run.iterations,
            solve_error: run.final_error,
        });
        log::debug!(
            "tick {k}: t = {time_s:.1} s, dist to goal {final_distance:.2} m, {} iterations",
            run.iterations
        );

        let qc = Matrix2::identity() * s.planner.qc;
        let next = state_at(&artifacts.grid, &artifacts.solution, &qc, tick);
        ego_pos = next.position;
        ego_vel = Some(next.velocity);
        k += 1;
    }

    log::info!(
        "{}: {} after {} ticks, final distance {:.2} m",
        s.name,
        if reached_goal { "reached goal" } else { "horizon expired" },
        log.len(),
        final_distance
    );

    let report = ReplayReport {
        scenario: s.name.clone(),
        tick_s: tick,
        horizon_s: horizon,
        goal_radius_m: goal_radius,
        reached_goal,
        ticks: log.len(),
        final_distance_m: final_distance,
        min_track_distance_m: min_track_distance,
        min_safe_ratio,
        max_cross_track_m: max_cross_track,
        failed_at_tick: None,
        wall_time_s: t_wall.elapsed().as_secs_f64(),
        log,
    };
    write_outputs(out_dir, s, &report)?;
    Ok(report)
}

/// Replay with the scenario's own tick, horizon, and goal radius.
pub fn run_replay_default(s: &Scenario, out_dir: Option<&Path>) -> Result<ReplayReport> {
    run_replay(s, s.replay.tick, s.replay.horizon, s.replay.goal_radius, out_dir)
}

fn write_outputs(out_dir: Option<&Path>, s: &Scenario, report: &ReplayReport) -> Result<()> {
    let Some(dir) = out_dir else {
        return Ok(());
    };
    std::fs::create_dir_all(dir).map_err(|e| io_err("creating output directory", e))?;
    output::write_replay_csv(&dir.join("replay.csv"), &report.log, s.tracks.len())?;
    output::write_report_json(&dir.join("replay_report.json"), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario_str;
    use approx::assert_relative_eq;
    use gp_planner_core::trajectory::init_straight_line;

    #[test]
    fn state_at_matches_straight_line_motion() {
        let grid = TimeGrid::uniform(5, 10.0, 0).unwrap();
        let traj = init_straight_line(&Vector2::new(0.0, 0.0), &Vector2::new(10.0, 0.0), &grid);
        let qc = Matrix2::identity();
        for tau in [0.0, 0.5, 2.0, 3.7, 9.99, 10.0, 12.0] {
            let st = state_at(&grid, &traj, &qc, tau);
            let expect = tau.min(10.0);
            assert_relative_eq!(st.position.x, expect, epsilon = 1e-9);
            assert_relative_eq!(st.velocity.x, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn obstacle_free_replay_tracks_the_straight_line() {
        let text = r#"
start = [0.0, 0.0]
goal = [0.0, 40.0]

[planner]
segments = 10
interp = 0
nominal_speed = 2.0
"#;
        let s = parse_scenario_str("straight", text, Path::new(".")).unwrap();
        let report = run_replay(&s, 0.5, 60.0, 2.0, None).unwrap();
        assert!(report.reached_goal, "final dist {}", report.final_distance_m);
        assert!(report.max_cross_track_m < 0.1, "cross track {}", report.max_cross_track_m);
        assert!(report.ticks > 10);
        assert!(report.min_track_distance_m.is_none());
        assert!(report.failed_at_tick.is_none());
        let times: Vec<f64> = report.log.iter().map(|l| l.time_s).collect();
        for w in times.windows(2) {
            assert_relative_eq!(w[1] - w[0], 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn obstacle_fleeing_the_corridor_leaves_path_straight() {
        // A small craft already clear of the start-goal corridor and moving
        // further away. Its safe area never touches any replanned path, so
        // the closed loop should track the straight line. Note the corridor
        // itself matters, not just the ego: each replan avoids the
        // obstacle's current position everywhere along the remaining path,
        // so a track crawling along the corridor (or across the goal) is a
        // legitimate obstruction even when it is far from the ego.
        let text = r#"
start = [0.0, 0.0]
goal = [0.0, 60.0]

[planner]
segments = 10
interp = 0
nominal_speed = 2.0

[[tracks]]
position = [20.0, -20.0]
speed = 4.0
course = 90.0
length = 1.5
width = 1.0
"#;
        let s = parse_scenario_str("receding", text, Path::new(".")).unwrap();
        let report = run_replay(&s, 0.5, 90.0, 2.0, None).unwrap();
        assert!(report.reached_goal);
        assert!(
            report.max_cross_track_m < 0.5,
            "cross track {}",
            report.max_cross_track_m
        );
        let ratio = report.min_safe_ratio.unwrap();
        assert!(ratio > 10.0, "min safe ratio {ratio}");
    }

    #[test]
    fn bad_tick_is_a_parse_error() {
        let text = "start = [0.0, 0.0]\ngoal = [0.0, 10.0]\n";
        let s = parse_scenario_str("bad", text, Path::new(".")).unwrap();
        let err = run_replay(&s, 0.0, 10.0, 2.0, None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn replay_outputs_are_written() {
        let text = "start = [0.0, 0.0]\ngoal = [0.0, 10.0]\n";
        let s = parse_scenario_str("out", text, Path::new(".")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report = run_replay_default(&s, Some(dir.path())).unwrap();
        assert!(report.reached_goal);
        let csv = std::fs::read_to_string(dir.path().join("replay.csv")).unwrap();
        assert!(csv.starts_with("tick,time_s,ego_x"));
        assert_eq!(csv.lines().count(), report.ticks + 1);
        let json = std::fs::read_to_string(dir.path().join("replay_report.json")).unwrap();
        assert!(json.contains("\"reached_goal\": true"));
    }
}
