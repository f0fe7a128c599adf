//! Dynamic obstacle field. Each tracked vessel gets an elliptical Gaussian
//! "safe area" centred on it: the across-course standard deviation is the
//! safe radius R = zeta * (length + width) / 2, and the along-course variance
//! grows with speed as sigma_y^2 = (eta v + 1) a^{b v} R^2, stretching the
//! area both ahead of and behind the vessel. Costs are peak-normalized to 1
//! at the centre; multiple vessels combine by pointwise maximum.
//!
//! Course angles are degrees clockwise from north (+Y), so course 0 points
//! along +Y and course 90 along +X.

use nalgebra::{Vector2, Vector4};

use crate::grid::{GridGeometry, ScalarField};
use crate::trajectory::TrajectoryState;
use crate::{cst, Error, Real, Result};

pub const DEFAULT_ZETA: f64 = 2.0;
pub const DEFAULT_ETA: f64 = 0.2;
pub const DEFAULT_A: f64 = 1.05;
pub const DEFAULT_B: f64 = 1.0;

/// Raster cells whose cost falls below this are written as exact zeros.
pub const RASTER_FLOOR: f64 = 1e-12;

/// Safe-area shape constants: zeta scales the radius, (eta, a, b) calibrate
/// the along-course stretch against speed.
#[derive(Debug, Clone, Copy)]
pub struct DynamicsParams<T: Real> {
    pub zeta: T,
    pub eta: T,
    pub a: T,
    pub b: T,
}

impl<T: Real> Default for DynamicsParams<T> {
    fn default() -> Self {
        Self {
            zeta: cst(DEFAULT_ZETA),
            eta: cst(DEFAULT_ETA),
            a: cst(DEFAULT_A),
            b: cst(DEFAULT_B),
        }
    }
}

impl<T: Real> DynamicsParams<T> {
    pub fn new(zeta: T, eta: T, a: T, b: T) -> Result<Self> {
        if zeta <= T::zero() {
            return Err(Error::ParamRange {
                name: "zeta",
                msg: "must be positive".into(),
            });
        }
        if eta <= T::zero() {
            return Err(Error::ParamRange {
                name: "eta",
                msg: "must be positive".into(),
            });
        }
        if a < T::one() {
            return Err(Error::ParamRange {
                name: "a",
                msg: "must be at least 1".into(),
            });
        }
        if b < T::zero() {
            return Err(Error::ParamRange {
                name: "b",
                msg: "must be non-negative".into(),
            });
        }
        Ok(Self { zeta, eta, a, b })
    }
}

/// Hull extents of a tracked vessel, metres from its reference point.
#[derive(Debug, Clone, Copy)]
pub struct VesselExtents<T: Real> {
    pub fore: T,
    pub aft: T,
    pub port: T,
    pub starboard: T,
}

impl<T: Real> VesselExtents<T> {
    pub fn new(fore: T, aft: T, port: T, starboard: T) -> Result<Self> {
        let e = Self {
            fore,
            aft,
            port,
            starboard,
        };
        let zero = T::zero();
        if fore < zero || aft < zero || port < zero || starboard < zero {
            return Err(Error::ParamRange {
                name: "vessel extents",
                msg: "must be non-negative".into(),
            });
        }
        if e.length() <= zero || e.width() <= zero {
            return Err(Error::ParamRange {
                name: "vessel extents",
                msg: "length and width must be positive".into(),
            });
        }
        Ok(e)
    }

    /// Symmetric split of overall length and beam.
    pub fn from_length_width(length: T, width: T) -> Result<Self> {
        let half: T = cst(0.5);
        Self::new(length * half, length * half, width * half, width * half)
    }

    pub fn length(&self) -> T {
        self.fore + self.aft
    }

    pub fn width(&self) -> T {
        self.port + self.starboard
    }
}

/// A moving obstacle as reported by a tracker: pose, speed over ground, and
/// course in degrees clockwise from north.
#[derive(Debug, Clone, Copy)]
pub struct ObstacleTrack<T: Real> {
    pub extents: VesselExtents<T>,
    pub position: Vector2<T>,
    pub speed: T,
    pub course_deg: T,
}

impl<T: Real> ObstacleTrack<T> {
    pub fn new(
        extents: VesselExtents<T>,
        position: Vector2<T>,
        speed: T,
        course_deg: T,
    ) -> Result<Self> {
        if speed < T::zero() {
            return Err(Error::ParamRange {
                name: "track speed",
                msg: "must be non-negative".into(),
            });
        }
        if course_deg < T::zero() || course_deg >= cst(360.0) {
            return Err(Error::ParamRange {
                name: "track course",
                msg: "must lie in [0, 360) degrees".into(),
            });
        }
        Ok(Self {
            extents,
            position,
            speed,
            course_deg,
        })
    }

    /// Unit vector the vessel is moving along (course 0 = +Y, 90 = +X).
    pub fn course_unit(&self) -> Vector2<T> {
        let rad = self.course_deg * cst(std::f64::consts::PI / 180.0);
        Vector2::new(rad.sin(), rad.cos())
    }
}

/// Safe radius around a vessel: zeta * (length + width) / 2.
pub fn safe_radius<T: Real>(extents: &VesselExtents<T>, zeta: T) -> T {
    zeta * (extents.length() + extents.width()) * cst(0.5)
}

/// Across- and along-course variances (sigma_x^2, sigma_y^2) for a vessel of
/// the given safe radius moving at `speed`.
pub fn speed_calibrated_variances<T: Real>(
    radius: T,
    speed: T,
    params: &DynamicsParams<T>,
) -> Result<(T, T)> {
    if radius <= T::zero() {
        return Err(Error::ParamRange {
            name: "safe radius",
            msg: "must be positive".into(),
        });
    }
    if speed < T::zero() {
        return Err(Error::ParamRange {
            name: "speed",
            msg: "must be non-negative".into(),
        });
    }
    let r2 = radius * radius;
    let stretch = (params.eta * speed + T::one()) * params.a.powf(params.b * speed);
    Ok((r2, r2 * stretch))
}

/// Elliptical Gaussian safe area: mean at the vessel, principal axes across
/// (sigma_x) and along (sigma_y) its course, peak cost 1.
#[derive(Debug, Clone, Copy)]
pub struct SafeAreaModel<T: Real> {
    pub mean: Vector2<T>,
    pub course_deg: T,
    pub sigma_x2: T,
    pub sigma_y2: T,
    pub safe_radius: T,
    sin_a: T,
    cos_a: T,
}

impl<T: Real> SafeAreaModel<T> {
    pub fn new(
        mean: Vector2<T>,
        course_deg: T,
        sigma_x2: T,
        sigma_y2: T,
        safe_radius: T,
    ) -> Result<Self> {
        if sigma_x2 <= T::zero() || sigma_y2 < sigma_x2 {
            return Err(Error::ParamRange {
                name: "safe area variances",
                msg: "need 0 < sigma_x^2 <= sigma_y^2".into(),
            });
        }
        let rad = course_deg * cst(std::f64::consts::PI / 180.0);
        Ok(Self {
            mean,
            course_deg,
            sigma_x2,
            sigma_y2,
            safe_radius,
            sin_a: rad.sin(),
            cos_a: rad.cos(),
        })
    }

    pub fn from_track(track: &ObstacleTrack<T>, params: &DynamicsParams<T>) -> Result<Self> {
        let r = safe_radius(&track.extents, params.zeta);
        let (sx2, sy2) = speed_calibrated_variances(r, track.speed, params)?;
        Self::new(track.position, track.course_deg, sx2, sy2, r)
    }

    /// Peak-normalized cost and its gradient wrt the world point.
    pub fn eval_cost(&self, p: &Vector2<T>) -> (T, Vector2<T>) {
        let d = p - self.mean;
        // Into the course-aligned frame: local y along the course.
        let lx = self.cos_a * d.x - self.sin_a * d.y;
        let ly = self.sin_a * d.x + self.cos_a * d.y;
        let half: T = cst(0.5);
        let q = lx * lx / self.sigma_x2 + ly * ly / self.sigma_y2;
        let cost = (-half * q).exp();
        let glx = -cost * lx / self.sigma_x2;
        let gly = -cost * ly / self.sigma_y2;
        (
            cost,
            Vector2::new(
                self.cos_a * glx + self.sin_a * gly,
                -self.sin_a * glx + self.cos_a * gly,
            ),
        )
    }

    pub fn course_unit(&self) -> Vector2<T> {
        Vector2::new(self.sin_a, self.cos_a)
    }
}

/// Pointwise maximum over any number of safe areas. Empty composition is the
/// zero field, which keeps obstacle-free problems uniform.
#[derive(Debug, Clone, Default)]
pub struct CombinedField<T: Real> {
    pub models: Vec<SafeAreaModel<T>>,
}

impl<T: Real> CombinedField<T> {
    pub fn new(models: Vec<SafeAreaModel<T>>) -> Self {
        Self { models }
    }

    /// Max cost over the member areas; the gradient comes from the argmax.
    pub fn eval(&self, p: &Vector2<T>) -> (T, Vector2<T>) {
        let mut best = T::zero();
        let mut grad = Vector2::zeros();
        for m in &self.models {
            let (c, g) = m.eval_cost(p);
            if c > best {
                best = c;
                grad = g;
            }
        }
        (best, grad)
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Build the combined field for a set of tracks.
pub fn compose_tracks<T: Real>(
    tracks: &[ObstacleTrack<T>],
    params: &DynamicsParams<T>,
) -> Result<CombinedField<T>> {
    let models = tracks
        .iter()
        .map(|t| SafeAreaModel::from_track(t, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(CombinedField::new(models))
}

/// Dynamic obstacle factor residual and Jacobian wrt (x, y, vx, vy).
pub fn dynamic_factor_error<T: Real>(
    state: &TrajectoryState<T>,
    field: &CombinedField<T>,
) -> (T, Vector4<T>) {
    let (cost, grad) = field.eval(&state.position);
    (cost, Vector4::new(grad.x, grad.y, T::zero(), T::zero()))
}

fn rasterize<T: Real>(geometry: &GridGeometry<T>, eval: impl Fn(&Vector2<T>) -> T) -> ScalarField<T> {
    let mut out = ScalarField::filled(geometry.clone(), T::zero());
    let floor: T = cst(RASTER_FLOOR);
    for iy in 0..geometry.height {
        for ix in 0..geometry.width {
            let c = eval(&geometry.cell_center(ix, iy));
            out.set(ix, iy, if c < floor { T::zero() } else { c });
        }
    }
    out
}

/// Render one safe area over a grid (plots and parity checks; planning
/// queries stay analytic).
pub fn rasterize_field<T: Real>(
    model: &SafeAreaModel<T>,
    geometry: &GridGeometry<T>,
) -> ScalarField<T> {
    rasterize(geometry, |p| model.eval_cost(p).0)
}

/// Render the max-composed field over a grid.
pub fn rasterize_combined<T: Real>(
    field: &CombinedField<T>,
    geometry: &GridGeometry<T>,
) -> ScalarField<T> {
    rasterize(geometry, |p| field.eval(p).0)
}
