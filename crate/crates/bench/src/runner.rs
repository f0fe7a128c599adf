use std::path::Path;
use std::time::Instant;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use gp_planner_core::dynfield::{
    compose_tracks, rasterize_combined, safe_radius, CombinedField, ObstacleTrack,
};
use gp_planner_core::gp::{gp_interpolate, GpPriorParams};
use gp_planner_core::graph::{build_graph, GraphConfig};
use gp_planner_core::grid::GridGeometry;
use gp_planner_core::sdf::{compute_sdf, SdfGrid};
use gp_planner_core::solver::{lm_optimize, LmSettings, SolveReport, StopReason};
use gp_planner_core::trajectory::{
    init_straight_line, total_time_from_nominal_speed, TimeGrid, Trajectory, TrajectoryState,
};

use crate::error::{io_err, parse_err, solve_err};
use crate::output;
use crate::scenario::{InitConfig, Scenario, ScenarioTrack};
use crate::Result;

/// Dynamic cost at the safe radius across-course; higher means the sample
/// sits inside an obstacle's safe area.
pub fn dynamic_cost_threshold() -> f64 {
    (-0.5f64).exp()
}

/// Lateral offset from the straight start-goal line that counts as a
/// deliberate deviation when locating where an avoidance maneuver begins.
pub const DEVIATION_THRESHOLD_M: f64 = 0.5;

/// Wall-clock seconds spent in each stage of a single plan.
#[derive(Debug, Clone, Serialize)]
pub struct StageTimings {
    pub sdf_s: f64,
    pub dynamic_s: f64,
    pub graph_s: f64,
    pub solve_s: f64,
    pub audit_s: f64,
    pub total_s: f64,
}

/// Safety check re-evaluating the solved path against the cost fields
/// directly, independent of the residuals the optimizer minimized.
#[derive(Debug, Clone, Serialize)]
pub struct CollisionAudit {
    /// Smallest signed distance over all sampled states; None without a map.
    pub min_sdf_m: Option<f64>,
    /// Largest dynamic-obstacle cost over all sampled states; None without tracks.
    pub max_dynamic_cost: Option<f64>,
    /// True if any sampled state left the mapped area.
    pub out_of_bounds: bool,
    /// In bounds, never inside an obstacle, never inside a safe area.
    pub collision_free: bool,
}

/// Geometric summary of the solved path.
#[derive(Debug, Clone, Serialize)]
pub struct PathMetrics {
    pub path_length_m: f64,
    pub straight_line_m: f64,
    /// Closest approach to any obstacle center; None without tracks.
    pub min_clearance_m: Option<f64>,
    /// Arc-length fraction travelled before the path first leaves the
    /// straight start-goal line by more than the deviation threshold.
    pub first_deviation_fraction: Option<f64>,
    pub max_deviation_m: f64,
    /// Max-deviation point relative to the first track along its course:
    /// negative means astern of the obstacle.
    pub max_deviation_along_course_m: Option<f64>,
}

/// Everything a single plan produced, serialized as report.json.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub states: usize,
    pub interp_per_segment: usize,
    pub factors: usize,
    pub total_time_s: f64,
    pub iterations: usize,
    pub initial_error: f64,
    pub final_error: f64,
    pub converged: bool,
    pub stop: String,
    pub metrics: PathMetrics,
    pub audit: CollisionAudit,
    pub timings: StageTimings,
}

/// In-memory results of a plan, for callers that need more than the report.
pub struct PlanArtifacts {
    pub grid: TimeGrid<f64>,
    pub solution: Trajectory<f64>,
    /// States in time order: each support state followed by its segment's
    /// interpolated states, ending with the final support state.
    pub sampled: Vec<(f64, TrajectoryState<f64>)>,
    pub solve: SolveReport<f64>,
    pub sdf: Option<SdfGrid<f64>>,
    pub field: CombinedField<f64>,
    pub raster_geometry: GridGeometry<f64>,
}

/// One planning call: scenario defaults with the world state overridden,
/// so a replay can replan from wherever the vessel currently is.
pub struct PlanRequest<'a> {
    pub scenario: &'a Scenario,
    pub start: Vector2<f64>,
    /// Start-state velocity target; None means the straight-line velocity.
    pub start_velocity: Option<Vector2<f64>>,
    pub tracks: &'a [ScenarioTrack],
    pub seed: u64,
    /// Reuse a distance field instead of recomputing it from the occupancy.
    pub prebuilt_sdf: Option<&'a SdfGrid<f64>>,
}

impl<'a> PlanRequest<'a> {
    pub fn from_scenario(s: &'a Scenario) -> Self {
        Self {
            scenario: s,
            start: s.start,
            start_velocity: None,
            tracks: &s.tracks,
            seed: s.init.seed,
            prebuilt_sdf: None,
        }
    }
}

fn stop_label(stop: StopReason) -> &'static str {
    match stop {
        StopReason::Converged => "converged",
        StopReason::MaxIterations => "max_iterations",
        StopReason::LambdaLimit => "lambda_limit",
        StopReason::SingularSystem => "singular_system",
    }
}

/// Straight-line initialization with a deterministic lateral bow away from
/// the obstacles plus seeded jitter, to break ties on symmetric scenarios.
/// Endpoints are left exactly on the inputs.
pub fn build_initial(
    start: &Vector2<f64>,
    goal: &Vector2<f64>,
    grid: &TimeGrid<f64>,
    tracks: &[ScenarioTrack],
    zeta: f64,
    init: &InitConfig,
    seed: u64,
) -> Trajectory<f64> {
    let mut traj = init_straight_line(start, goal, grid);
    let n = traj.states.len();
    if n <= 2 {
        return traj;
    }
    let d = goal - start;
    let len = d.norm();
    let nhat = if len > 0.0 {
        Vector2::new(d.y, -d.x) / len
    } else {
        Vector2::zeros()
    };
    let mut side = 0.0;
    for st in tracks {
        let radius = safe_radius(&st.track.extents, zeta);
        let off = nhat.dot(&(st.track.position - start));
        if off.abs() > 0.25 * radius {
            // Obstacle clearly sits to one side of the line: bow away from it.
            side += -off.signum();
        } else {
            // Near head-on: bow toward passing astern of the crossing vessel.
            side += -nhat.dot(&st.track.course_unit());
        }
    }
    let amplitude = init.bias * side.clamp(-1.0, 1.0);
    let total = grid.total_time();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 1..n - 1 {
        let bow = amplitude * (std::f64::consts::PI * grid.times()[i] / total).sin();
        let jx = rng.gen_range(-init.jitter..=init.jitter);
        let jy = rng.gen_range(-init.jitter..=init.jitter);
        traj.states[i].position += nhat * bow + Vector2::new(jx, jy);
    }
    traj
}

/// Expand a trajectory to support plus interpolated states in time order.
pub fn sample_trajectory(
    grid: &TimeGrid<f64>,
    traj: &Trajectory<f64>,
    qc: &Matrix2<f64>,
) -> Vec<(f64, TrajectoryState<f64>)> {
    let times = grid.times();
    let mut out = Vec::with_capacity(grid.num_states() + grid.num_segments() * grid.interp_per_segment());
    for i in 0..grid.num_segments() {
        out.push((times[i], traj.states[i]));
        for tau in grid.interp_times(i) {
            let it = gp_interpolate(
                &traj.states[i],
                &traj.states[i + 1],
                times[i],
                times[i + 1],
                tau,
                qc,
            )
            .expect("interpolation times lie strictly inside their segment");
            out.push((tau, it.state));
        }
    }
    let last = grid.num_states() - 1;
    out.push((times[last], traj.states[last]));
    out
}

/// World rectangle used for plot rasters: the map geometry when a map
/// exists, otherwise a 1 m/cell box around the endpoints and obstacles.
pub fn raster_geometry(s: &Scenario, tracks: &[ScenarioTrack]) -> GridGeometry<f64> {
    if let Some(world) = &s.world {
        return world.clone();
    }
    let mut min = Vector2::new(s.start.x.min(s.goal.x), s.start.y.min(s.goal.y));
    let mut max = Vector2::new(s.start.x.max(s.goal.x), s.start.y.max(s.goal.y));
    for st in tracks {
        let r = safe_radius(&st.track.extents, s.dynamics.zeta);
        min.x = min.x.min(st.track.position.x - r);
        min.y = min.y.min(st.track.position.y - r);
        max.x = max.x.max(st.track.position.x + r);
        max.y = max.y.max(st.track.position.y + r);
    }
    let margin = 10.0;
    let width = ((max.x - min.x + 2.0 * margin).ceil() as usize).max(1) + 1;
    let height = ((max.y - min.y + 2.0 * margin).ceil() as usize).max(1) + 1;
    GridGeometry::new(width, height, 1.0, min - Vector2::new(margin, margin))
        .expect("raster box has positive extent")
}

fn compute_metrics(
    start: &Vector2<f64>,
    goal: &Vector2<f64>,
    tracks: &[ScenarioTrack],
    sampled: &[(f64, TrajectoryState<f64>)],
) -> PathMetrics {
    let mut path_length = 0.0;
    let mut arc = Vec::with_capacity(sampled.len());
    arc.push(0.0);
    for k in 1..sampled.len() {
        path_length += (sampled[k].1.position - sampled[k - 1].1.position).norm();
        arc.push(path_length);
    }
    let d = goal - start;
    let straight = d.norm();
    let nhat = if straight > 0.0 {
        Vector2::new(d.y, -d.x) / straight
    } else {
        Vector2::zeros()
    };

    let mut first_deviation_fraction = None;
    let mut max_dev = 0.0;
    let mut max_dev_pos = *start;
    for (k, (_, state)) in sampled.iter().enumerate() {
        let lateral = nhat.dot(&(state.position - start)).abs();
        if lateral > DEVIATION_THRESHOLD_M && first_deviation_fraction.is_none() && path_length > 0.0
        {
            first_deviation_fraction = Some(arc[k] / path_length);
        }
        if lateral > max_dev {
            max_dev = lateral;
            max_dev_pos = state.position;
        }
    }

    let mut min_clearance = None;
    for (_, state) in sampled {
        for st in tracks {
            let dist = (state.position - st.track.position).norm();
            min_clearance = Some(min_clearance.map_or(dist, |m: f64| m.min(dist)));
        }
    }

    let max_deviation_along_course_m = tracks.first().map(|st| {
        st.track
            .course_unit()
            .dot(&(max_dev_pos - st.track.position))
    });

    PathMetrics {
        path_length_m: path_length,
        straight_line_m: straight,
        min_clearance_m: min_clearance,
        first_deviation_fraction,
        max_deviation_m: max_dev,
        max_deviation_along_course_m,
    }
}

fn audit_samples(
    world: Option<&GridGeometry<f64>>,
    sdf: Option<&SdfGrid<f64>>,
    field: Option<&CombinedField<f64>>,
    sampled: &[(f64, TrajectoryState<f64>)],
) -> CollisionAudit {
    let mut min_sdf: Option<f64> = None;
    let mut out_of_bounds = false;
    if let Some(world) = world {
        out_of_bounds = sampled.iter().any(|(_, st)| !world.contains(&st.position));
    }
    if let Some(sdf) = sdf {
        for (_, state) in sampled {
            match sdf.query(&state.position) {
                Ok((d, _)) => min_sdf = Some(min_sdf.map_or(d, |m| m.min(d))),
                Err(_) => out_of_bounds = true,
            }
        }
    }
    let max_dynamic = field.map(|f| {
        sampled
            .iter()
            .map(|(_, state)| f.eval(&state.position).0)
            .fold(0.0f64, f64::max)
    });
    let collision_free = !out_of_bounds
        && min_sdf.is_none_or(|d| d >= 0.0)
        && max_dynamic.is_none_or(|c| c < dynamic_cost_threshold());
    CollisionAudit {
        min_sdf_m: min_sdf,
        max_dynamic_cost: max_dynamic,
        out_of_bounds,
        collision_free,
    }
}

/// Run one plan: build the cost fields, assemble the factor graph, optimize,
/// then audit the result against the fields directly.
pub fn plan(req: &PlanRequest) -> Result<(PlanArtifacts, RunReport)> {
    let s = req.scenario;
    let t_total = Instant::now();

    let t_stage = Instant::now();
    let built_sdf = if req.prebuilt_sdf.is_none() {
        s.occupancy.as_ref().map(compute_sdf)
    } else {
        None
    };
    let sdf_s = t_stage.elapsed().as_secs_f64();
    let sdf_ref = req.prebuilt_sdf.or(built_sdf.as_ref());

    let t_stage = Instant::now();
    let mut model_tracks = Vec::with_capacity(req.tracks.len());
    for st in req.tracks {
        let track = ObstacleTrack::new(
            st.track.extents,
            st.track.position,
            st.track.speed * st.model_speed_scale,
            st.track.course_deg,
        )
        .map_err(|e| parse_err("track", e))?;
        model_tracks.push(track);
    }
    let field = compose_tracks(&model_tracks, &s.dynamics).map_err(|e| parse_err("dynamics", e))?;
    let dynamic_s = t_stage.elapsed().as_secs_f64();
    let field_ref = if field.is_empty() { None } else { Some(&field) };

    let t_stage = Instant::now();
    let total_time = match s.planner.total_time {
        Some(t) => t,
        None => total_time_from_nominal_speed(&req.start, &s.goal, s.planner.nominal_speed)
            .map_err(|e| parse_err("planner", e))?,
    };
    let grid = TimeGrid::uniform(s.planner.segments, total_time, s.planner.interp)
        .map_err(|e| parse_err("planner", e))?;
    let straight_velocity = (s.goal - req.start) / total_time;
    let start_state =
        TrajectoryState::new(req.start, req.start_velocity.unwrap_or(straight_velocity));
    let goal_state = TrajectoryState::new(s.goal, straight_velocity);
    let qc = Matrix2::identity() * s.planner.qc;
    let gp = GpPriorParams::new(qc, s.planner.fix_sigma, s.planner.fix_sigma)
        .map_err(|e| parse_err("planner", e))?;
    let config = GraphConfig::new(
        gp,
        s.weights.safe_distance,
        s.weights.static_sigma,
        s.weights.dynamic_sigma,
    )
    .map_err(|e| parse_err("weights", e))?;
    let graph = build_graph(&grid, &start_state, &goal_state, &config, sdf_ref, field_ref)
        .map_err(|e| parse_err("graph", e))?;
    let initial = build_initial(
        &req.start,
        &s.goal,
        &grid,
        req.tracks,
        s.dynamics.zeta,
        &s.init,
        req.seed,
    );
    let graph_s = t_stage.elapsed().as_secs_f64();

    let t_stage = Instant::now();
    let settings = LmSettings {
        max_iterations: s.planner.max_iterations,
        ..LmSettings::default()
    };
    let (solution, solve) =
        lm_optimize(&graph, &initial, &settings).map_err(|e| solve_err(&s.name, e))?;
    let solve_s = t_stage.elapsed().as_secs_f64();

    let t_stage = Instant::now();
    let sampled = sample_trajectory(&grid, &solution, &qc);
    let audit = audit_samples(s.world.as_ref(), sdf_ref, field_ref, &sampled);
    let metrics = compute_metrics(&req.start, &s.goal, req.tracks, &sampled);
    let audit_s = t_stage.elapsed().as_secs_f64();

    log::info!(
        "{}: sdf {:.1} ms, field {:.1} ms, graph {:.1} ms, solve {:.1} ms ({} iterations, {})",
        s.name,
        sdf_s * 1e3,
        dynamic_s * 1e3,
        graph_s * 1e3,
        solve_s * 1e3,
        solve.accepted_steps,
        stop_label(solve.stop)
    );

    let report = RunReport {
        scenario: s.name.clone(),
        seed: req.seed,
        states: grid.num_states(),
        interp_per_segment: grid.interp_per_segment(),
        factors: graph.factors().len(),
        total_time_s: total_time,
        iterations: solve.accepted_steps,
        initial_error: solve.initial_error,
        final_error: solve.final_error,
        converged: solve.converged(),
        stop: stop_label(solve.stop).to_string(),
        metrics,
        audit,
        timings: StageTimings {
            sdf_s,
            dynamic_s,
            graph_s,
            solve_s,
            audit_s,
            total_s: t_total.elapsed().as_secs_f64(),
        },
    };
    let artifacts = PlanArtifacts {
        raster_geometry: raster_geometry(s, req.tracks),
        grid,
        solution,
        sampled,
        solve,
        sdf: built_sdf,
        field,
    };
    Ok((artifacts, report))
}

/// Plan a scenario and, when an output directory is given, write the
/// trajectory, iteration log, plot rasters, and JSON report into it.
pub fn run_benchmark(s: &Scenario, out_dir: Option<&Path>) -> Result<RunReport> {
    let req = PlanRequest::from_scenario(s);
    let (artifacts, report) = plan(&req)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| io_err("creating output directory", e))?;
        output::write_trajectory_csv(&dir.join("trajectory.csv"), &artifacts.sampled)?;
        output::write_iterations_csv(&dir.join("iterations.csv"), &artifacts.solve)?;
        output::write_path_xy(&dir.join("path.xy"), &artifacts.sampled)?;
        output::write_report_json(&dir.join("report.json"), &report)?;
        let raster = rasterize_combined(&artifacts.field, &artifacts.raster_geometry);
        output::write_raster(&dir.join("dynamic_field.txt"), &raster)?;
        if let Some(sdf) = &artifacts.sdf {
            output::write_sdf_raster(&dir.join("static_sdf.txt"), sdf)?;
        }
    }
    Ok(report)
}

/// Run every scenario in a sweep manifest, each into its own subdirectory,
/// and write a one-row-per-run summary table.
pub fn run_sweep(manifest: &Path, out_root: &Path) -> Result<Vec<(String, RunReport)>> {
    let runs = crate::scenario::parse_manifest(manifest)?;
    let mut results = Vec::with_capacity(runs.len());
    for (name, path) in runs {
        let scenario = crate::scenario::parse_scenario(&path)?;
        log::info!("sweep run {name}");
        let report = run_benchmark(&scenario, Some(&out_root.join(&name)))?;
        results.push((name, report));
    }
    std::fs::create_dir_all(out_root).map_err(|e| io_err("creating output directory", e))?;
    output::write_sweep_summary(&out_root.join("summary.csv"), &results)?;
    Ok(results)
}
