use std::path::Path;

use serde::Serialize;

use gp_planner_core::grid::ScalarField;
use gp_planner_core::sdf::SdfGrid;
use gp_planner_core::solver::SolveReport;
use gp_planner_core::trajectory::TrajectoryState;

use crate::error::io_err;
use crate::replay::TickLog;
use crate::runner::RunReport;
use crate::Result;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| io_err(&format!("writing {}", path.display()), e))
}

fn opt_cell(v: Option<f64>, precision: usize) -> String {
    v.map(|x| format!("{x:.precision$}")).unwrap_or_default()
}

/// Planned states as `t,x,y,vx,vy` rows with fixed six-decimal formatting,
/// so identical plans serialize to byte-identical files.
pub fn write_trajectory_csv(path: &Path, sampled: &[(f64, TrajectoryState<f64>)]) -> Result<()> {
    let mut out = String::from("t,x,y,vx,vy\n");
    for (t, state) in sampled {
        out.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            t, state.position.x, state.position.y, state.velocity.x, state.velocity.y
        ));
    }
    write_file(path, &out)
}

/// Accepted optimizer iterations, one row each.
pub fn write_iterations_csv(path: &Path, solve: &SolveReport<f64>) -> Result<()> {
    let mut out = String::from("iteration,error,damping,step_norm,wall_time_s\n");
    for it in &solve.iterations {
        out.push_str(&format!(
            "{},{:.12e},{:.6e},{:.9e},{:.6}\n",
            it.iteration, it.error, it.lambda, it.step_norm, it.wall_time_s
        ));
    }
    write_file(path, &out)
}

/// Bare `x y` polyline for plotting tools.
pub fn write_path_xy(path: &Path, sampled: &[(f64, TrajectoryState<f64>)]) -> Result<()> {
    let mut out = String::new();
    for (_, state) in sampled {
        out.push_str(&format!("{:.6} {:.6}\n", state.position.x, state.position.y));
    }
    write_file(path, &out)
}

pub fn write_report_json<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(report)
        .map_err(|e| io_err("serializing report", e))?;
    write_file(path, &format!("{body}\n"))
}

fn raster_string(
    width: usize,
    height: usize,
    resolution: f64,
    origin: (f64, f64),
    value: impl Fn(usize, usize) -> f64,
) -> String {
    let mut out = format!(
        "# {} {} {:.6} {:.6} {:.6}\n",
        width, height, resolution, origin.0, origin.1
    );
    for iy in (0..height).rev() {
        for ix in 0..width {
            if ix > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{:.6e}", value(ix, iy)));
        }
        out.push('\n');
    }
    out
}

/// Scalar field as a text raster: a `# width height resolution origin_x
/// origin_y` header, then rows of values from the north edge downward.
pub fn write_raster(path: &Path, field: &ScalarField<f64>) -> Result<()> {
    let g = &field.geometry;
    let body = raster_string(g.width, g.height, g.resolution, (g.origin.x, g.origin.y), |ix, iy| {
        field.at(ix, iy)
    });
    write_file(path, &body)
}

/// Signed distance field in the same raster format.
pub fn write_sdf_raster(path: &Path, sdf: &SdfGrid<f64>) -> Result<()> {
    let g = sdf.geometry();
    let body = raster_string(g.width, g.height, g.resolution, (g.origin.x, g.origin.y), |ix, iy| {
        sdf.at(ix, iy)
    });
    write_file(path, &body)
}

/// Closed-loop tick log; obstacle columns come in `obs<i>_x,obs<i>_y` pairs.
pub fn write_replay_csv(path: &Path, log: &[TickLog], num_tracks: usize) -> Result<()> {
    let mut header = String::from(
        "tick,time_s,ego_x,ego_y,ego_vx,ego_vy,dist_to_goal_m,min_track_dist_m,solve_iterations,solve_error",
    );
    for i in 0..num_tracks {
        header.push_str(&format!(",obs{i}_x,obs{i}_y"));
    }
    let mut out = header;
    out.push('\n');
    for row in log {
        out.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{:.6e}",
            row.tick,
            row.time_s,
            row.ego_position[0],
            row.ego_position[1],
            row.ego_velocity[0],
            row.ego_velocity[1],
            row.distance_to_goal_m,
            opt_cell(row.min_track_distance_m, 6),
            row.solve_iterations,
            row.solve_error
        ));
        for p in &row.obstacle_positions {
            out.push_str(&format!(",{:.6},{:.6}", p[0], p[1]));
        }
        out.push('\n');
    }
    write_file(path, &out)
}

/// One row per sweep run with the headline numbers.
pub fn write_sweep_summary(path: &Path, results: &[(String, RunReport)]) -> Result<()> {
    let mut out = String::from(
        "name,path_length_m,straight_line_m,min_clearance_m,first_deviation_fraction,max_dynamic_cost,min_sdf_m,iterations,final_error,converged,total_wall_s\n",
    );
    for (name, r) in results {
        out.push_str(&format!(
            "{},{:.6},{:.6},{},{},{},{},{},{:.6e},{},{:.6}\n",
            name,
            r.metrics.path_length_m,
            r.metrics.straight_line_m,
            opt_cell(r.metrics.min_clearance_m, 6),
            opt_cell(r.metrics.first_deviation_fraction, 6),
            opt_cell(r.audit.max_dynamic_cost, 9),
            opt_cell(r.audit.min_sdf_m, 6),
            r.iterations,
            r.final_error,
            r.converged,
            r.timings.total_s
        ));
    }
    write_file(path, &out)
}
