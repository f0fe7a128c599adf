use nalgebra::Vector2;

use crate::{cst, Error, Real, Result};

/// Placement of a regular cell grid in the world frame. `origin` is the world
/// position of the centre of cell (0, 0); cell (ix, iy) sits at
/// `origin + (ix, iy) * resolution`, with iy growing northward.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGeometry<T: Real> {
    pub width: usize,
    pub height: usize,
    pub resolution: T,
    pub origin: Vector2<T>,
}

impl<T: Real> GridGeometry<T> {
    pub fn new(width: usize, height: usize, resolution: T, origin: Vector2<T>) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::GridTooSmall { width, height });
        }
        if resolution <= T::zero() {
            return Err(Error::ParamRange {
                name: "resolution",
                msg: "must be positive".into(),
            });
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
        })
    }

    /// Continuous cell coordinates of a world point.
    pub fn world_to_grid(&self, p: &Vector2<T>) -> Vector2<T> {
        (p - self.origin) / self.resolution
    }

    /// World position of the centre of cell (ix, iy).
    pub fn cell_center(&self, ix: usize, iy: usize) -> Vector2<T> {
        self.origin
            + Vector2::new(
                cst::<T>(ix as f64) * self.resolution,
                cst::<T>(iy as f64) * self.resolution,
            )
    }

    /// True when the point lies inside the convex hull of cell centres, the
    /// region where bilinear interpolation is defined.
    pub fn contains(&self, p: &Vector2<T>) -> bool {
        let g = self.world_to_grid(p);
        g.x >= T::zero()
            && g.y >= T::zero()
            && g.x <= cst::<T>((self.width - 1) as f64)
            && g.y <= cst::<T>((self.height - 1) as f64)
    }

    /// Nearest point of the interpolable region, used to aim recovery
    /// gradients when a query leaves the grid.
    pub fn clamp(&self, p: &Vector2<T>) -> Vector2<T> {
        let g = self.world_to_grid(p);
        let gx = g.x.clamp(T::zero(), cst::<T>((self.width - 1) as f64));
        let gy = g.y.clamp(T::zero(), cst::<T>((self.height - 1) as f64));
        self.origin + Vector2::new(gx, gy) * self.resolution
    }

    /// Bilinear patch for a contained point: base cell index and fractional
    /// offsets. The far edges fold onto the last patch so the whole hull,
    /// boundary included, is interpolable.
    pub(crate) fn patch(&self, p: &Vector2<T>) -> Option<(usize, usize, T, T)> {
        if !self.contains(p) {
            return None;
        }
        let g = self.world_to_grid(p);
        let mut ix = g.x.floor().to_subset().unwrap_or(0.0) as usize;
        let mut iy = g.y.floor().to_subset().unwrap_or(0.0) as usize;
        ix = ix.min(self.width - 2);
        iy = iy.min(self.height - 2);
        let fx = g.x - cst::<T>(ix as f64);
        let fy = g.y - cst::<T>(iy as f64);
        Some((ix, iy, fx, fy))
    }
}

/// Dense row-major scalar field over a grid (row 0 = southernmost cells).
#[derive(Debug, Clone)]
pub struct ScalarField<T: Real> {
    pub geometry: GridGeometry<T>,
    pub values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn filled(geometry: GridGeometry<T>, value: T) -> Self {
        let n = geometry.width * geometry.height;
        Self {
            geometry,
            values: vec![value; n],
        }
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> T {
        self.values[iy * self.geometry.width + ix]
    }

    #[inline]
    pub fn set(&mut self, ix: usize, iy: usize, v: T) {
        self.values[iy * self.geometry.width + ix] = v;
    }

    /// Bilinear value and analytic gradient (per metre) at a world point.
    pub fn sample(&self, p: &Vector2<T>) -> Result<(T, Vector2<T>)> {
        let (ix, iy, fx, fy) = self.geometry.patch(p).ok_or_else(|| Error::OutOfBounds {
            x: p.x.to_subset().unwrap_or(f64::NAN),
            y: p.y.to_subset().unwrap_or(f64::NAN),
        })?;
        let one = T::one();
        let v00 = self.at(ix, iy);
        let v10 = self.at(ix + 1, iy);
        let v01 = self.at(ix, iy + 1);
        let v11 = self.at(ix + 1, iy + 1);
        let value = v00 * (one - fx) * (one - fy)
            + v10 * fx * (one - fy)
            + v01 * (one - fx) * fy
            + v11 * fx * fy;
        let inv_res = one / self.geometry.resolution;
        let gx = ((v10 - v00) * (one - fy) + (v11 - v01) * fy) * inv_res;
        let gy = ((v01 - v00) * (one - fx) + (v11 - v10) * fx) * inv_res;
        Ok((value, Vector2::new(gx, gy)))
    }
}
