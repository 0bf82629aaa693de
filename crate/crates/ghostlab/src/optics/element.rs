use num_complex::Complex64;

use super::{propagate_free, FieldGrid, OpticsError, RealMap, Result, Vec2, SPEED_OF_LIGHT};

/// How a sampled element map is evaluated at field sample positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resampling {
    #[default]
    Bilinear,
    Nearest,
}

/// A thin element or a free-space gap in an optical train.
#[derive(Debug, Clone)]
pub enum OpticalElement {
    /// Free propagation over `z > 0` meters.
    FreeSpace { z: f64 },
    /// Ideal thin lens: phase `exp(-i w |r|^2 / (2 c f))` inside the pupil
    /// radius, opaque outside. `f != 0` (negative focal length diverges).
    ThinLens { focal_length: f64, radius: f64 },
    /// Amplitude transmission mask with values in [0, 1].
    Aperture { map: RealMap, resampling: Resampling },
    /// Pure phase screen: multiplies by `exp(i phi(r))`, `phi` in radians.
    PhaseScreen { map: RealMap, resampling: Resampling },
}

/// Applies one element to a field, producing the field just after it.
///
/// Sampled maps (apertures, phase screens) must cover the support of the
/// field; otherwise the element would silently truncate light it never
/// modeled, so a `GridMismatch` is raised instead.
pub fn apply_element(field: &FieldGrid, element: &OpticalElement) -> Result<FieldGrid> {
    match element {
        OpticalElement::FreeSpace { z } => propagate_free(field, *z),
        OpticalElement::ThinLens { focal_length, radius } => {
            if *focal_length == 0.0 || !focal_length.is_finite() {
                return Err(OpticsError::InvalidParameter(format!(
                    "focal length must be finite and nonzero, got {focal_length}"
                )));
            }
            if !(*radius > 0.0) {
                return Err(OpticsError::InvalidParameter(format!(
                    "lens radius must be positive, got {radius}"
                )));
            }
            let mut out = field.clone();
            let coeff = -0.5 * field.omega() / (SPEED_OF_LIGHT * focal_length);
            let r2_max = radius * radius;
            for iy in 0..out.ny() {
                let y = out.y(iy);
                for ix in 0..out.nx() {
                    let p = Vec2::new(out.x(ix), y);
                    let r2 = p.norm_sq();
                    *out.at_mut(ix, iy) = if r2 <= r2_max {
                        field.at(ix, iy) * Complex64::from_polar(1.0, coeff * r2)
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                }
            }
            Ok(out)
        }
        OpticalElement::Aperture { map, resampling } => {
            let bad = map.values().iter().find(|v| !(0.0..=1.0).contains(*v));
            if let Some(v) = bad {
                return Err(OpticsError::InvalidParameter(format!(
                    "aperture transmission {v} outside [0, 1]"
                )));
            }
            check_coverage(field, map)?;
            let mut out = field.clone();
            for iy in 0..out.ny() {
                let y = out.y(iy);
                for ix in 0..out.nx() {
                    let p = Vec2::new(out.x(ix), y);
                    *out.at_mut(ix, iy) = field.at(ix, iy) * map.sample(p, *resampling);
                }
            }
            Ok(out)
        }
        OpticalElement::PhaseScreen { map, resampling } => {
            check_coverage(field, map)?;
            let mut out = field.clone();
            for iy in 0..out.ny() {
                let y = out.y(iy);
                for ix in 0..out.nx() {
                    let p = Vec2::new(out.x(ix), y);
                    let phi = map.sample(p, *resampling);
                    *out.at_mut(ix, iy) = field.at(ix, iy) * Complex64::from_polar(1.0, phi);
                }
            }
            Ok(out)
        }
    }
}

/// The element map must cover the bounding box of nonzero field samples
/// (half a map pitch of slack at the border).
fn check_coverage(field: &FieldGrid, map: &RealMap) -> Result<()> {
    let Some((lo, hi)) = field.support_bounds() else {
        return Ok(()); // zero field: nothing to cover
    };
    let (hx, hy) = map.half_extent();
    let support_x = lo.x.abs().max(hi.x.abs());
    let support_y = lo.y.abs().max(hi.y.abs());
    if support_x > hx || support_y > hy {
        return Err(OpticsError::GridMismatch {
            map_extent: (hx, hy),
            support: (support_x, support_y),
        });
    }
    Ok(())
}

/// Image distance and transverse magnification from the thin-lens equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LensImage {
    /// Image distance `s_i` with `1/s_o + 1/s_i = 1/f`; negative means a
    /// virtual image on the object side.
    pub s_i: f64,
    /// Transverse magnification `s_i / s_o`.
    pub magnification: f64,
}

/// Solves the thin-lens equation for the image plane of an object at `s_o`.
pub fn thin_lens_image_distance(s_o: f64, f: f64) -> Result<LensImage> {
    if !(s_o > 0.0) || !s_o.is_finite() {
        return Err(OpticsError::InvalidParameter(format!(
            "object distance must be positive and finite, got {s_o}"
        )));
    }
    if f == 0.0 || !f.is_finite() {
        return Err(OpticsError::InvalidParameter(format!(
            "focal length must be finite and nonzero, got {f}"
        )));
    }
    let inv = 1.0 / f - 1.0 / s_o;
    if inv.abs() * s_o < 1e-12 {
        return Err(OpticsError::DegenerateImage { s_o });
    }
    let s_i = 1.0 / inv;
    Ok(LensImage { s_i, magnification: s_i / s_o })
}
