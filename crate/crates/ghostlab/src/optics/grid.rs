use num_complex::Complex64;

use super::{OpticsError, Result, SPEED_OF_LIGHT};

/// Transverse position or spatial-frequency 2-vector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Vec2 {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Complex scalar field sampled on a regular transverse grid.
///
/// Samples are row-major with `x` varying fastest. Coordinates are centered:
/// sample `(ix, iy)` sits at `((ix - (nx-1)/2) dx, (iy - (ny-1)/2) dy)`.
/// All lengths are meters.
#[derive(Debug, Clone)]
pub struct FieldGrid {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    wavelength: f64,
    values: Vec<Complex64>,
}

impl FieldGrid {
    /// Zero-filled grid. Requires at least 2 samples per axis, positive
    /// pitches, and a positive wavelength.
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, wavelength: f64) -> Result<FieldGrid> {
        if nx < 2 || ny < 2 {
            return Err(OpticsError::InvalidGrid(format!(
                "need at least 2 samples per axis, got {nx}x{ny}"
            )));
        }
        if !(dx > 0.0) || !(dy > 0.0) || !dx.is_finite() || !dy.is_finite() {
            return Err(OpticsError::InvalidGrid(format!(
                "pitches must be positive and finite, got dx={dx}, dy={dy}"
            )));
        }
        if !(wavelength > 0.0) || !wavelength.is_finite() {
            return Err(OpticsError::InvalidGrid(format!(
                "wavelength must be positive and finite, got {wavelength}"
            )));
        }
        Ok(FieldGrid {
            nx,
            ny,
            dx,
            dy,
            wavelength,
            values: vec![Complex64::new(0.0, 0.0); nx * ny],
        })
    }

    /// Grid filled by evaluating `f` at each sample position.
    pub fn from_fn(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        wavelength: f64,
        f: impl Fn(Vec2) -> Complex64,
    ) -> Result<FieldGrid> {
        let mut grid = FieldGrid::new(nx, ny, dx, dy, wavelength)?;
        for iy in 0..ny {
            let y = grid.y(iy);
            for ix in 0..nx {
                let p = Vec2::new(grid.x(ix), y);
                grid.values[iy * nx + ix] = f(p);
            }
        }
        Ok(grid)
    }

    /// Rebuilds a grid from raw parts, validating shape consistency.
    pub fn from_values(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        wavelength: f64,
        values: Vec<Complex64>,
    ) -> Result<FieldGrid> {
        if values.len() != nx * ny {
            return Err(OpticsError::InvalidGrid(format!(
                "value buffer holds {} samples, grid is {nx}x{ny}",
                values.len()
            )));
        }
        let mut grid = FieldGrid::new(nx, ny, dx, dy, wavelength)?;
        grid.values = values;
        Ok(grid)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Angular frequency `2 pi c / lambda`.
    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / self.wavelength
    }

    /// Full extents `(nx dx, ny dy)`.
    pub fn extent(&self) -> (f64, f64) {
        (self.nx as f64 * self.dx, self.ny as f64 * self.dy)
    }

    /// Centered x coordinate of column `ix`.
    pub fn x(&self, ix: usize) -> f64 {
        (ix as f64 - 0.5 * (self.nx as f64 - 1.0)) * self.dx
    }

    /// Centered y coordinate of row `iy`.
    pub fn y(&self, iy: usize) -> f64 {
        (iy as f64 - 0.5 * (self.ny as f64 - 1.0)) * self.dy
    }

    pub fn at(&self, ix: usize, iy: usize) -> Complex64 {
        self.values[iy * self.nx + ix]
    }

    pub fn at_mut(&mut self, ix: usize, iy: usize) -> &mut Complex64 {
        &mut self.values[iy * self.nx + ix]
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Discrete field energy `sum |E|^2 dx dy`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.dx * self.dy
    }

    /// `|E|^2` on the same grid.
    pub fn intensity(&self) -> RealMap {
        RealMap {
            nx: self.nx,
            ny: self.ny,
            dx: self.dx,
            dy: self.dy,
            values: self.values.iter().map(|v| v.norm_sqr()).collect(),
        }
    }

    /// Bounding box `((x_min, y_min), (x_max, y_max))` of nonzero samples, or
    /// `None` for an identically zero field.
    pub fn support_bounds(&self) -> Option<(Vec2, Vec2)> {
        let mut bounds: Option<(Vec2, Vec2)> = None;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                if self.at(ix, iy).norm_sqr() > 0.0 {
                    let p = Vec2::new(self.x(ix), self.y(iy));
                    bounds = Some(match bounds {
                        None => (p, p),
                        Some((lo, hi)) => (
                            Vec2::new(lo.x.min(p.x), lo.y.min(p.y)),
                            Vec2::new(hi.x.max(p.x), hi.y.max(p.y)),
                        ),
                    });
                }
            }
        }
        bounds
    }

    /// L2 distance between two same-shape fields, normalized by the L2 norm
    /// of `self`.
    pub fn relative_l2_distance(&self, other: &FieldGrid) -> f64 {
        assert_eq!(self.nx, other.nx);
        assert_eq!(self.ny, other.ny);
        let num: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let den: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        (num / den).sqrt()
    }
}

/// Real scalar map on a regular grid: apertures, phase screens, intensities.
///
/// Shares the centered-coordinate convention of [`FieldGrid`].
#[derive(Debug, Clone)]
pub struct RealMap {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    values: Vec<f64>,
}

impl RealMap {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<RealMap> {
        if nx == 0 || ny == 0 {
            return Err(OpticsError::InvalidGrid("empty map".into()));
        }
        if !(dx > 0.0) || !(dy > 0.0) {
            return Err(OpticsError::InvalidGrid(format!(
                "pitches must be positive, got dx={dx}, dy={dy}"
            )));
        }
        Ok(RealMap { nx, ny, dx, dy, values: vec![0.0; nx * ny] })
    }

    pub fn from_fn(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        f: impl Fn(Vec2) -> f64,
    ) -> Result<RealMap> {
        let mut map = RealMap::new(nx, ny, dx, dy)?;
        for iy in 0..ny {
            for ix in 0..nx {
                let p = Vec2::new(map.x(ix), map.y(iy));
                map.values[iy * nx + ix] = f(p);
            }
        }
        Ok(map)
    }

    pub fn from_values(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        values: Vec<f64>,
    ) -> Result<RealMap> {
        if values.len() != nx * ny {
            return Err(OpticsError::InvalidGrid(format!(
                "value buffer holds {} samples, map is {nx}x{ny}",
                values.len()
            )));
        }
        let mut map = RealMap::new(nx, ny, dx, dy)?;
        map.values = values;
        Ok(map)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn x(&self, ix: usize) -> f64 {
        (ix as f64 - 0.5 * (self.nx as f64 - 1.0)) * self.dx
    }

    pub fn y(&self, iy: usize) -> f64 {
        (iy as f64 - 0.5 * (self.ny as f64 - 1.0)) * self.dy
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.nx + ix]
    }

    pub fn at_mut(&mut self, ix: usize, iy: usize) -> &mut f64 {
        &mut self.values[iy * self.nx + ix]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Half extents `(nx dx / 2, ny dy / 2)`: the map covers
    /// `[-hx, hx] x [-hy, hy]` up to half a pitch at the border.
    pub fn half_extent(&self) -> (f64, f64) {
        (0.5 * self.nx as f64 * self.dx, 0.5 * self.ny as f64 * self.dy)
    }

    /// Samples the map at an arbitrary point.
    ///
    /// `Bilinear` interpolates the four surrounding samples; `Nearest` picks
    /// the closest one. Points beyond the outermost sample centers clamp to
    /// the border value (coverage is checked separately by element
    /// application).
    pub fn sample(&self, p: Vec2, resampling: super::Resampling) -> f64 {
        let fx = p.x / self.dx + 0.5 * (self.nx as f64 - 1.0);
        let fy = p.y / self.dy + 0.5 * (self.ny as f64 - 1.0);
        match resampling {
            super::Resampling::Nearest => {
                let ix = fx.round().clamp(0.0, (self.nx - 1) as f64) as usize;
                let iy = fy.round().clamp(0.0, (self.ny - 1) as f64) as usize;
                self.at(ix, iy)
            }
            super::Resampling::Bilinear => {
                let fx = fx.clamp(0.0, (self.nx - 1) as f64);
                let fy = fy.clamp(0.0, (self.ny - 1) as f64);
                let ix0 = fx.floor() as usize;
                let iy0 = fy.floor() as usize;
                let ix1 = (ix0 + 1).min(self.nx - 1);
                let iy1 = (iy0 + 1).min(self.ny - 1);
                let tx = fx - ix0 as f64;
                let ty = fy - iy0 as f64;
                let v00 = self.at(ix0, iy0);
                let v10 = self.at(ix1, iy0);
                let v01 = self.at(ix0, iy1);
                let v11 = self.at(ix1, iy1);
                v00 * (1.0 - tx) * (1.0 - ty)
                    + v10 * tx * (1.0 - ty)
                    + v01 * (1.0 - tx) * ty
                    + v11 * tx * ty
            }
        }
    }
}

/// Geometry of a centered uniform grid without sample storage: the shape
/// shared by scan lattices and output images. Coordinates follow the same
/// centering convention as [`FieldGrid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<GridSpec> {
        if nx == 0 || ny == 0 {
            return Err(OpticsError::InvalidGrid("empty grid spec".into()));
        }
        if !(dx > 0.0 && dx.is_finite()) || !(dy > 0.0 && dy.is_finite()) {
            return Err(OpticsError::InvalidGrid(format!(
                "pitches must be positive, got dx={dx}, dy={dy}"
            )));
        }
        Ok(GridSpec { nx, ny, dx, dy })
    }

    /// A single row of `nx` samples along x (a 1-D scan line).
    pub fn line_x(nx: usize, dx: f64) -> Result<GridSpec> {
        GridSpec::new(nx, 1, dx, dx)
    }

    pub fn x(&self, ix: usize) -> f64 {
        (ix as f64 - 0.5 * (self.nx as f64 - 1.0)) * self.dx
    }

    pub fn y(&self, iy: usize) -> f64 {
        (iy as f64 - 0.5 * (self.ny as f64 - 1.0)) * self.dy
    }

    pub fn point(&self, ix: usize, iy: usize) -> Vec2 {
        Vec2::new(self.x(ix), self.y(iy))
    }

    /// An empty map with this geometry.
    pub fn empty_map(&self) -> RealMap {
        RealMap::new(self.nx, self.ny, self.dx, self.dy).expect("validated spec")
    }
}
