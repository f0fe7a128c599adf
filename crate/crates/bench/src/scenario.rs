//! Scenario files: TOML content in `.scn` files, versioned by a `schema`
//! key (currently 1). Unknown keys are rejected with line and column info;
//! range checks name the offending key. The full key reference lives in
//! docs/formats.md.

use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::Deserialize;

use gp_planner_core::dynfield::{DynamicsParams, ObstacleTrack, VesselExtents};
use gp_planner_core::grid::GridGeometry;
use gp_planner_core::sdf::load_occupancy;
use gp_planner_core::{OccupancyGrid64, Error as CoreError};

use crate::error::{io_err, parse_err, BenchError};
use crate::Result;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    schema: Option<u32>,
    start: [f64; 2],
    goal: [f64; 2],
    map: Option<RawMap>,
    #[serde(default)]
    tracks: Vec<RawTrack>,
    planner: Option<RawPlanner>,
    weights: Option<RawWeights>,
    dynamics: Option<RawDynamics>,
    init: Option<RawInit>,
    replay: Option<RawReplay>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    kind: String,
    path: Option<String>,
    resolution: Option<f64>,
    origin: Option<[f64; 2]>,
    size: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrack {
    position: [f64; 2],
    speed: f64,
    course: f64,
    length: Option<f64>,
    width: Option<f64>,
    dims: Option<[f64; 4]>,
    model_speed_scale: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlanner {
    segments: Option<usize>,
    interp: Option<usize>,
    nominal_speed: Option<f64>,
    total_time: Option<f64>,
    qc: Option<f64>,
    fix_sigma: Option<f64>,
    max_iterations: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeights {
    #[serde(rename = "static")]
    static_sigma: Option<f64>,
    dynamic: Option<f64>,
    safe_distance: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDynamics {
    zeta: Option<f64>,
    eta: Option<f64>,
    a: Option<f64>,
    b: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInit {
    seed: Option<u64>,
    jitter: Option<f64>,
    bias: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReplay {
    tick: Option<f64>,
    horizon: Option<f64>,
    goal_radius: Option<f64>,
}

/// Trajectory discretization and GP prior settings.
#[derive(Debug, Clone)]
pub struct PlannerConfig {
    pub segments: usize,
    pub interp: usize,
    pub nominal_speed: f64,
    /// Overrides the speed-derived mission time when set.
    pub total_time: Option<f64>,
    pub qc: f64,
    pub fix_sigma: f64,
    pub max_iterations: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            segments: 20,
            interp: 4,
            nominal_speed: 2.0,
            total_time: None,
            qc: 1.0,
            fix_sigma: 1e-4,
            max_iterations: 100,
        }
    }
}

/// Obstacle likelihood noise sigmas (smaller = stronger avoidance) and the
/// static hinge margin.
#[derive(Debug, Clone)]
pub struct WeightConfig {
    pub static_sigma: f64,
    pub dynamic_sigma: f64,
    pub safe_distance: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            static_sigma: 0.05,
            dynamic_sigma: 0.005,
            safe_distance: 2.0,
        }
    }
}

/// Initialization perturbation: a deterministic lateral bow away from the
/// obstacles plus seeded jitter, both on interior support states only.
#[derive(Debug, Clone)]
pub struct InitConfig {
    pub seed: u64,
    pub jitter: f64,
    pub bias: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jitter: 0.01,
            bias: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayConfig {
    pub tick: f64,
    pub horizon: f64,
    pub goal_radius: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            tick: 0.5,
            horizon: 120.0,
            goal_radius: 2.0,
        }
    }
}

/// One tracked obstacle plus its replay-only speed scaling: the safe-area
/// model sees `speed * model_speed_scale`, motion uses the true speed.
#[derive(Debug, Clone)]
pub struct ScenarioTrack {
    pub track: ObstacleTrack<f64>,
    pub model_speed_scale: f64,
}

/// A fully validated scenario with any referenced map already loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub start: Vector2<f64>,
    pub goal: Vector2<f64>,
    /// Present for file-backed maps; absent means open water.
    pub occupancy: Option<OccupancyGrid64>,
    /// World bounds: the map geometry, or the declared size of an empty map.
    pub world: Option<GridGeometry<f64>>,
    pub tracks: Vec<ScenarioTrack>,
    pub planner: PlannerConfig,
    pub weights: WeightConfig,
    pub dynamics: DynamicsParams<f64>,
    pub init: InitConfig,
    pub replay: ReplayConfig,
}

fn require_positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(BenchError::Parse(format!("{name} must be positive (got {v})")))
    }
}

fn require_non_negative(name: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(BenchError::Parse(format!(
            "{name} must be non-negative (got {v})"
        )))
    }
}

fn resolve_track(i: usize, raw: &RawTrack) -> Result<ScenarioTrack> {
    let key = |f: &str| format!("tracks[{i}].{f}");
    let extents = match (raw.length, raw.width, raw.dims) {
        (Some(l), Some(w), None) => {
            require_positive(&key("length"), l)?;
            require_positive(&key("width"), w)?;
            VesselExtents::from_length_width(l, w)
        }
        (None, None, Some([a, b, c, d])) => {
            for (f, v) in [("dims[0]", a), ("dims[1]", b), ("dims[2]", c), ("dims[3]", d)] {
                require_non_negative(&key(f), v)?;
            }
            VesselExtents::new(a, b, c, d)
        }
        _ => {
            return Err(BenchError::Parse(format!(
                "tracks[{i}]: give either length and width, or dims = [fore, aft, port, starboard]"
            )))
        }
    }
    .map_err(|e| parse_err(&key("dims"), e))?;
    require_non_negative(&key("speed"), raw.speed)?;
    if !(0.0..360.0).contains(&raw.course) {
        return Err(BenchError::Parse(format!(
            "{} must lie in [0, 360) degrees (got {})",
            key("course"),
            raw.course
        )));
    }
    let scale = raw.model_speed_scale.unwrap_or(1.0);
    require_positive(&key("model_speed_scale"), scale)?;
    let track = ObstacleTrack::new(
        extents,
        Vector2::new(raw.position[0], raw.position[1]),
        raw.speed,
        raw.course,
    )
    .map_err(|e| parse_err(&format!("tracks[{i}]"), e))?;
    Ok(ScenarioTrack {
        track,
        model_speed_scale: scale,
    })
}

fn resolve_map(
    raw: &RawMap,
    base_dir: &Path,
) -> Result<(Option<OccupancyGrid64>, Option<GridGeometry<f64>>)> {
    let resolution = require_positive("map.resolution", raw.resolution.unwrap_or(1.0))?;
    let origin = raw.origin.unwrap_or([0.0, 0.0]);
    let origin = Vector2::new(origin[0], origin[1]);
    match raw.kind.as_str() {
        "empty" => {
            if raw.path.is_some() {
                return Err(BenchError::Parse(
                    "map.path is only valid with kind = \"file\"".into(),
                ));
            }
            let world = match raw.size {
                Some([w, h]) => {
                    require_positive("map.size[0]", w)?;
                    require_positive("map.size[1]", h)?;
                    let cells = |m: f64| (m / resolution).round().max(2.0) as usize;
                    Some(
                        GridGeometry::new(cells(w), cells(h), resolution, origin)
                            .map_err(|e| parse_err("map.size", e))?,
                    )
                }
                None => None,
            };
            Ok((None, world))
        }
        "file" => {
            let rel = raw.path.as_deref().ok_or_else(|| {
                BenchError::Parse("map.path is required for kind = \"file\"".into())
            })?;
            let path = base_dir.join(rel);
            let occ = load_occupancy::<f64>(&path, resolution, origin).map_err(|e| match e {
                CoreError::MapIo { .. } => io_err("map.path", e),
                other => parse_err("map.path", other),
            })?;
            let world = occ.geometry.clone();
            Ok((Some(occ), Some(world)))
        }
        other => Err(BenchError::Parse(format!(
            "map.kind must be \"empty\" or \"file\" (got \"{other}\")"
        ))),
    }
}

fn resolve(raw: RawScenario, name: &str, base_dir: &Path) -> Result<Scenario> {
    let schema = raw.schema.unwrap_or(SCHEMA_VERSION);
    if schema != SCHEMA_VERSION {
        return Err(BenchError::Parse(format!(
            "unsupported schema version {schema} (this build reads version {SCHEMA_VERSION})"
        )));
    }

    let (occupancy, world) = match &raw.map {
        Some(m) => resolve_map(m, base_dir)?,
        None => (None, None),
    };

    let start = Vector2::new(raw.start[0], raw.start[1]);
    let goal = Vector2::new(raw.goal[0], raw.goal[1]);
    if let Some(w) = &world {
        for (key, p) in [("start", &start), ("goal", &goal)] {
            if !w.contains(p) {
                return Err(BenchError::Parse(format!(
                    "{key} position ({}, {}) lies outside the map bounds",
                    p.x, p.y
                )));
            }
        }
    }

    let tracks = raw
        .tracks
        .iter()
        .enumerate()
        .map(|(i, t)| resolve_track(i, t))
        .collect::<Result<Vec<_>>>()?;

    let mut planner = PlannerConfig::default();
    if let Some(p) = &raw.planner {
        if let Some(v) = p.segments {
            if v < 1 {
                return Err(BenchError::Parse("planner.segments must be at least 1".into()));
            }
            planner.segments = v;
        }
        if let Some(v) = p.interp {
            planner.interp = v;
        }
        if let Some(v) = p.nominal_speed {
            planner.nominal_speed = require_positive("planner.nominal_speed", v)?;
        }
        if let Some(v) = p.total_time {
            planner.total_time = Some(require_positive("planner.total_time", v)?);
        }
        if let Some(v) = p.qc {
            planner.qc = require_positive("planner.qc", v)?;
        }
        if let Some(v) = p.fix_sigma {
            planner.fix_sigma = require_positive("planner.fix_sigma", v)?;
        }
        if let Some(v) = p.max_iterations {
            if v == 0 {
                return Err(BenchError::Parse(
                    "planner.max_iterations must be at least 1".into(),
                ));
            }
            planner.max_iterations = v;
        }
    }

    let mut weights = WeightConfig::default();
    if let Some(w) = &raw.weights {
        if let Some(v) = w.static_sigma {
            weights.static_sigma = require_positive("weights.static", v)?;
        }
        if let Some(v) = w.dynamic {
            weights.dynamic_sigma = require_positive("weights.dynamic", v)?;
        }
        if let Some(v) = w.safe_distance {
            weights.safe_distance = require_non_negative("weights.safe_distance", v)?;
        }
    }

    let mut dyn_raw = (2.0, 0.2, 1.05, 1.0);
    if let Some(d) = &raw.dynamics {
        if let Some(v) = d.zeta {
            dyn_raw.0 = v;
        }
        if let Some(v) = d.eta {
            dyn_raw.1 = v;
        }
        if let Some(v) = d.a {
            dyn_raw.2 = v;
        }
        if let Some(v) = d.b {
            dyn_raw.3 = v;
        }
    }
    let dynamics = DynamicsParams::new(dyn_raw.0, dyn_raw.1, dyn_raw.2, dyn_raw.3)
        .map_err(|e| parse_err("dynamics", e))?;

    let mut init = InitConfig::default();
    if let Some(r) = &raw.init {
        if let Some(v) = r.seed {
            init.seed = v;
        }
        if let Some(v) = r.jitter {
            init.jitter = require_non_negative("init.jitter", v)?;
        }
        if let Some(v) = r.bias {
            init.bias = require_non_negative("init.bias", v)?;
        }
    }

    let mut replay = ReplayConfig::default();
    if let Some(r) = &raw.replay {
        if let Some(v) = r.tick {
            replay.tick = require_positive("replay.tick", v)?;
        }
        if let Some(v) = r.horizon {
            replay.horizon = require_positive("replay.horizon", v)?;
        }
        if let Some(v) = r.goal_radius {
            replay.goal_radius = require_positive("replay.goal_radius", v)?;
        }
    }

    Ok(Scenario {
        name: name.to_string(),
        start,
        goal,
        occupancy,
        world,
        tracks,
        planner,
        weights,
        dynamics,
        init,
        replay,
    })
}

/// Parse scenario text. Map paths resolve relative to `base_dir`.
pub fn parse_scenario_str(name: &str, text: &str, base_dir: &Path) -> Result<Scenario> {
    let raw: RawScenario =
        toml::from_str(text).map_err(|e| BenchError::Parse(format!("scenario {name}: {e}")))?;
    resolve(raw, name, base_dir)
}

/// Load and fully validate a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scenario_str(&name, &text, base)
}

/// A sweep manifest: named runs, each pointing at a scenario file relative
/// to the manifest's directory.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub runs: Vec<ManifestRun>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRun {
    pub name: String,
    pub scenario: String,
}

/// Load a manifest and resolve its scenario paths.
pub fn parse_manifest(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| io_err(&format!("reading {}", path.display()), e))?;
    let m: Manifest =
        toml::from_str(&text).map_err(|e| BenchError::Parse(format!("manifest: {e}")))?;
    if m.runs.is_empty() {
        return Err(BenchError::Parse("manifest lists no runs".into()));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for r in &m.runs {
        if !seen.insert(r.name.clone()) {
            return Err(BenchError::Parse(format!("duplicate run name {}", r.name)));
        }
        out.push((r.name.clone(), base.join(&r.scenario)));
    }
    Ok(out)
}
