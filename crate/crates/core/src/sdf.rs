//! Static obstacle field: occupancy grid in, signed distance field out.
//! The signed distance at a cell is the Euclidean distance to the nearest
//! occupied cell centre (positive, free cells) or minus the distance to the
//! nearest free cell centre (occupied cells). Obstacle-free maps plateau at
//! a large cap instead of infinity. Queries interpolate bilinearly and come
//! with the analytic gradient; a hinge loss turns distance into cost.

use std::path::Path;

use nalgebra::{Vector2, Vector4};

use crate::grid::{GridGeometry, ScalarField};
use crate::trajectory::TrajectoryState;
use crate::{cst, Error, Real, Result};

/// Plateau value (metres) standing in for "no obstacle anywhere".
pub const SDF_CAP_M: f64 = 1e6;

/// Binary occupancy over a grid. Row 0 is the southernmost row; loaders that
/// read image-ordered text flip rows so world y grows north.
#[derive(Debug, Clone)]
pub struct OccupancyGrid<T: Real> {
    pub geometry: GridGeometry<T>,
    cells: Vec<bool>,
}

impl<T: Real> OccupancyGrid<T> {
    pub fn empty(geometry: GridGeometry<T>) -> Self {
        let n = geometry.width * geometry.height;
        Self {
            geometry,
            cells: vec![false; n],
        }
    }

    #[inline]
    pub fn occupied(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.geometry.width + ix]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, occupied: bool) {
        self.cells[iy * self.geometry.width + ix] = occupied;
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Build from text rows in image order (first row = northernmost).
    /// '1' marks an occupied cell, '0' a free one.
    pub fn from_ascii_rows(
        rows: &[&str],
        resolution: T,
        origin: Vector2<T>,
    ) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map(|r| r.len()).unwrap_or(0);
        let geometry = GridGeometry::new(width, height, resolution, origin)?;
        let mut grid = Self::empty(geometry);
        for (row, line) in rows.iter().enumerate() {
            if line.len() != width {
                return Err(Error::MapFormat {
                    path: "<inline>".into(),
                    msg: format!("row {row} has {} cells, expected {width}", line.len()),
                });
            }
            for (ix, c) in line.chars().enumerate() {
                let occ = match c {
                    '0' => false,
                    '1' => true,
                    other => {
                        return Err(Error::MapFormat {
                            path: "<inline>".into(),
                            msg: format!("unexpected cell character {other:?} in row {row}"),
                        })
                    }
                };
                grid.set(ix, height - 1 - row, occ);
            }
        }
        Ok(grid)
    }
}

/// Optional in-file geometry note: `# resolution=<r> origin=<x>,<y>`.
fn parse_meta_comment(line: &str) -> Option<(f64, f64, f64)> {
    let body = line.trim_start_matches('#').trim();
    let mut res = None;
    let mut ox = None;
    let mut oy = None;
    for piece in body.split_whitespace() {
        if let Some(v) = piece.strip_prefix("resolution=") {
            res = v.parse().ok();
        } else if let Some(v) = piece.strip_prefix("origin=") {
            let mut it = v.split(',');
            ox = it.next().and_then(|s| s.parse().ok());
            oy = it.next().and_then(|s| s.parse().ok());
        }
    }
    Some((res?, ox?, oy?))
}

/// Load an occupancy grid from an ASCII file: either a P2 graymap (dark
/// pixels, value <= maxval/2, are obstacles) or a bare 0/1 matrix. Rows are
/// image-ordered. A `# resolution=... origin=...,...` comment, when present,
/// must agree with the caller's geometry.
pub fn load_occupancy<T: Real>(
    path: impl AsRef<Path>,
    resolution: T,
    origin: Vector2<T>,
) -> Result<OccupancyGrid<T>> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| Error::MapIo {
        path: display.clone(),
        source,
    })?;
    let fmt_err = |msg: String| Error::MapFormat {
        path: display.clone(),
        msg,
    };

    for line in text.lines().filter(|l| l.trim_start().starts_with('#')) {
        if let Some((res, ox, oy)) = parse_meta_comment(line) {
            let res_t: f64 = resolution.to_subset().unwrap_or(f64::NAN);
            let ox_t: f64 = origin.x.to_subset().unwrap_or(f64::NAN);
            let oy_t: f64 = origin.y.to_subset().unwrap_or(f64::NAN);
            if (res - res_t).abs() > 1e-9 || (ox - ox_t).abs() > 1e-9 || (oy - oy_t).abs() > 1e-9 {
                return Err(fmt_err(format!(
                    "embedded geometry (resolution={res}, origin={ox},{oy}) disagrees with \
                     requested (resolution={res_t}, origin={ox_t},{oy_t})"
                )));
            }
        }
    }

    let content: Vec<&str> = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty())
        .collect();
    if content.is_empty() {
        return Err(fmt_err("empty map".into()));
    }

    if content[0].trim() == "P2" {
        let tokens: Vec<&str> = content[1..]
            .iter()
            .flat_map(|l| l.split_whitespace())
            .collect();
        if tokens.len() < 3 {
            return Err(fmt_err("P2 header truncated".into()));
        }
        let width: usize = tokens[0]
            .parse()
            .map_err(|_| fmt_err(format!("bad width {:?}", tokens[0])))?;
        let height: usize = tokens[1]
            .parse()
            .map_err(|_| fmt_err(format!("bad height {:?}", tokens[1])))?;
        let maxval: u32 = tokens[2]
            .parse()
            .map_err(|_| fmt_err(format!("bad maxval {:?}", tokens[2])))?;
        if maxval == 0 {
            return Err(fmt_err("maxval must be positive".into()));
        }
        let values = &tokens[3..];
        if values.len() != width * height {
            return Err(fmt_err(format!(
                "expected {} pixel values, found {}",
                width * height,
                values.len()
            )));
        }
        let geometry = GridGeometry::new(width, height, resolution, origin)?;
        let mut grid = OccupancyGrid::empty(geometry);
        for (idx, tok) in values.iter().enumerate() {
            let v: u32 = tok
                .parse()
                .map_err(|_| fmt_err(format!("bad pixel value {tok:?} at index {idx}")))?;
            if v > maxval {
                return Err(fmt_err(format!("pixel {v} exceeds maxval {maxval}")));
            }
            let (row, ix) = (idx / width, idx % width);
            grid.set(ix, height - 1 - row, 2 * v <= maxval);
        }
        Ok(grid)
    } else {
        let rows: Vec<String> = content
            .iter()
            .map(|l| l.split_whitespace().collect::<String>())
            .collect();
        let row_refs: Vec<&str> = rows.iter().map(|s| s.as_str()).collect();
        OccupancyGrid::from_ascii_rows(&row_refs, resolution, origin).map_err(|e| match e {
            Error::MapFormat { msg, .. } => fmt_err(msg),
            other => other,
        })
    }
}

/// Signed distance field over the same grid as its source occupancy.
#[derive(Debug, Clone)]
pub struct SdfGrid<T: Real> {
    pub field: ScalarField<T>,
}

impl<T: Real> SdfGrid<T> {
    pub fn geometry(&self) -> &GridGeometry<T> {
        &self.field.geometry
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> T {
        self.field.at(ix, iy)
    }

    /// Signed distance and gradient at a world point (bilinear).
    pub fn query(&self, p: &Vector2<T>) -> Result<(T, Vector2<T>)> {
        self.field.sample(p)
    }
}

/// One-dimensional squared-distance transform (lower envelope of parabolas).
/// `f` holds per-index source costs, possibly infinite.
#[allow(clippy::needless_range_loop)]
fn dt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut envelope_len = 0usize;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        if envelope_len == 0 {
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            envelope_len = 1;
            continue;
        }
        let mut s;
        loop {
            let p = v[envelope_len - 1];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[envelope_len - 1] {
                envelope_len -= 1;
                if envelope_len == 0 {
                    s = f64::NEG_INFINITY;
                    break;
                }
            } else {
                break;
            }
        }
        v[envelope_len] = q;
        z[envelope_len] = s;
        z[envelope_len + 1] = f64::INFINITY;
        envelope_len += 1;
    }
    if envelope_len == 0 {
        d[..n].fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        d[q] = dq * dq + f[p];
    }
}

/// Exact squared Euclidean distance (in cell units) from every cell to the
/// nearest cell where `site` is true. Cells with no site anywhere stay
/// infinite.
#[allow(clippy::needless_range_loop)]
fn edt_squared(width: usize, height: usize, site: impl Fn(usize, usize) -> bool) -> Vec<f64> {
    let mut g = vec![f64::INFINITY; width * height];
    // Vertical pass: per column, distance to nearest site in that column.
    let mut f = vec![0.0f64; height.max(width)];
    let mut d = vec![0.0f64; height.max(width)];
    let mut v = vec![0usize; height.max(width)];
    let mut z = vec![0.0f64; height.max(width) + 1];
    for ix in 0..width {
        for iy in 0..height {
            f[iy] = if site(ix, iy) { 0.0 } else { f64::INFINITY };
        }
        dt_1d(&f[..height], &mut d[..height], &mut v, &mut z);
        for iy in 0..height {
            g[iy * width + ix] = d[iy];
        }
    }
    // Horizontal pass over the vertical results.
    let mut out = vec![f64::INFINITY; width * height];
    for iy in 0..height {
        for ix in 0..width {
            f[ix] = g[iy * width + ix];
        }
        dt_1d(&f[..width], &mut d[..width], &mut v, &mut z);
        out[iy * width..(iy + 1) * width].copy_from_slice(&d[..width]);
    }
    out
}

/// Signed distance field from occupancy: positive outside obstacles,
/// negative inside, capped at +-SDF_CAP_M where one side has no cells.
pub fn compute_sdf<T: Real>(occ: &OccupancyGrid<T>) -> SdfGrid<T> {
    let (w, h) = (occ.geometry.width, occ.geometry.height);
    let to_occupied = edt_squared(w, h, |ix, iy| occ.occupied(ix, iy));
    let to_free = edt_squared(w, h, |ix, iy| !occ.occupied(ix, iy));
    let res: f64 = occ.geometry.resolution.to_subset().unwrap_or(1.0);
    let mut field = ScalarField::filled(occ.geometry.clone(), T::zero());
    for idx in 0..w * h {
        let pos = if to_occupied[idx].is_finite() {
            to_occupied[idx].sqrt() * res
        } else {
            SDF_CAP_M
        };
        let neg = if to_free[idx].is_finite() {
            to_free[idx].sqrt() * res
        } else {
            SDF_CAP_M
        };
        let d = (pos - neg).clamp(-SDF_CAP_M, SDF_CAP_M);
        field.values[idx] = cst(d);
    }
    SdfGrid { field }
}

/// Hinge obstacle cost: c(d) = eps - d inside the safety margin (d <= eps),
/// zero beyond it. Returns the cost and dc/dd, with the kink at d = eps
/// resolved toward the inside branch.
pub fn hinge_cost<T: Real>(d: T, epsilon: T) -> (T, T) {
    if d <= epsilon {
        (epsilon - d, -T::one())
    } else {
        (T::zero(), T::zero())
    }
}

/// Static obstacle factor residual and its Jacobian wrt the state vector
/// (x, y, vx, vy). Outside the grid the residual saturates at cap + eps and
/// the Jacobian is the outward unit vector, so a descent step on 1/2 r^2
/// points back toward the grid.
pub fn static_factor_error<T: Real>(
    state: &TrajectoryState<T>,
    sdf: &SdfGrid<T>,
    epsilon: T,
) -> (T, Vector4<T>) {
    match sdf.query(&state.position) {
        Ok((d, grad)) => {
            let (cost, dcost_dd) = hinge_cost(d, epsilon);
            let j = grad * dcost_dd;
            (cost, Vector4::new(j.x, j.y, T::zero(), T::zero()))
        }
        Err(_) => {
            let inward = sdf.geometry().clamp(&state.position) - state.position;
            let norm = inward.norm();
            let outward = if norm > T::zero() {
                -inward / norm
            } else {
                Vector2::zeros()
            };
            (
                cst::<T>(SDF_CAP_M) + epsilon,
                Vector4::new(outward.x, outward.y, T::zero(), T::zero()),
            )
        }
    }
}
