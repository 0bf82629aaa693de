//! Classical lens imaging with the Airy-disk point-spread function.
//!
//! A thin lens of radius `R` at object distance `s_o` and image distance
//! `s_i` (conjugate planes, `1/s_o + 1/s_i = 1/f`) maps an object point
//! `rho_o` to an Airy pattern centered on `rho_i = -m rho_o`. Carrying the
//! pupil integral through the two Fresnel segments gives the amplitude
//! point-spread kernel
//!
//! ```text
//! h(rho_i, rho_o) ∝ somb[(R/s_o)(w/c) |rho_o + rho_i/m|]
//! ```
//!
//! Incoherent imaging integrates `|A|^2 somb^2`; coherent imaging integrates
//! the amplitude `A e^{i w |rho_o|^2 / 2 c s_o} somb` and squares at the end.
//! Both quadratures run over the object mask's nonzero samples only.
//!
//! The kernel is band-limited (its spectrum is the pupil disk, or the disk's
//! self-convolution for the squared kernel), so a rectangle rule on a lattice
//! finer than half the Airy radius integrates it essentially exactly; the
//! constructors enforce that bound.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::optics::special::somb;
use crate::optics::{GridSpec, OpticsError, RealMap, Result, Vec2, SPEED_OF_LIGHT};

/// Conjugate-plane thin-lens geometry for image formation.
///
/// Holds `s_o`, `s_i`, `f`, the lens radius and the wavelength, with the lens
/// equation enforced at construction. Virtual-image configurations are
/// rejected: image formation here needs a real image plane.
#[derive(Debug, Clone, Copy)]
pub struct ImagingGeometry {
    object_distance: f64,
    image_distance: f64,
    focal_length: f64,
    lens_radius: f64,
    wavelength: f64,
}

impl ImagingGeometry {
    /// Builds the geometry from the object side: `s_i` follows from the lens
    /// equation. Fails for `s_o <= f` (no real image) and for numerical
    /// aperture `R/s_o` outside (0, 0.2] (paraxial guard).
    pub fn new(
        object_distance: f64,
        focal_length: f64,
        lens_radius: f64,
        wavelength: f64,
    ) -> Result<ImagingGeometry> {
        for (name, v) in [
            ("object distance", object_distance),
            ("focal length", focal_length),
            ("lens radius", lens_radius),
            ("wavelength", wavelength),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OpticsError::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        let lens = crate::optics::thin_lens_image_distance(object_distance, focal_length)?;
        if lens.s_i <= 0.0 {
            return Err(OpticsError::InvalidParameter(format!(
                "object distance {object_distance} m inside the focal length produces a \
                 virtual image (s_i = {} m); no real image plane exists",
                lens.s_i
            )));
        }
        let na = lens_radius / object_distance;
        if na > 0.2 {
            return Err(OpticsError::InvalidParameter(format!(
                "numerical aperture R/s_o = {na:.3} exceeds the paraxial bound 0.2"
            )));
        }
        Ok(ImagingGeometry {
            object_distance,
            image_distance: lens.s_i,
            focal_length,
            lens_radius,
            wavelength,
        })
    }

    pub fn object_distance(&self) -> f64 {
        self.object_distance
    }

    pub fn image_distance(&self) -> f64 {
        self.image_distance
    }

    pub fn focal_length(&self) -> f64 {
        self.focal_length
    }

    pub fn lens_radius(&self) -> f64 {
        self.lens_radius
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn omega(&self) -> f64 {
        2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / self.wavelength
    }

    /// Magnification `m = s_i / s_o` (positive; images come out inverted
    /// through the kernel argument `rho_o + rho_i/m`).
    pub fn magnification(&self) -> f64 {
        self.image_distance / self.object_distance
    }

    /// Scale of the point-spread argument, `(R/s_o)(w/c)` in 1/m: the kernel
    /// is `somb(psf_scale * |rho_o + rho_i/m|)`.
    pub fn psf_scale(&self) -> f64 {
        self.lens_radius / self.object_distance * self.omega() / SPEED_OF_LIGHT
    }

    /// First Airy zero in object-plane units, `0.61 lambda s_o / R`.
    pub fn airy_radius_object(&self) -> f64 {
        crate::optics::special::SOMB_FIRST_ZERO / self.psf_scale()
    }

    /// First Airy zero in image-plane units.
    pub fn airy_radius_image(&self) -> f64 {
        self.magnification() * self.airy_radius_object()
    }
}

/// Amplitude transmission mask in [0, 1] on its own grid.
#[derive(Debug, Clone)]
pub struct ApertureMask {
    amplitude: RealMap,
    label: String,
}

impl ApertureMask {
    pub fn new(amplitude: RealMap, label: impl Into<String>) -> Result<ApertureMask> {
        if let Some(v) = amplitude.values().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(OpticsError::InvalidParameter(format!(
                "mask transmission {v} outside [0, 1]"
            )));
        }
        Ok(ApertureMask { amplitude, label: label.into() })
    }

    /// Loads a PGM mask together with its `<path>.pitch` sidecar, two lines
    /// `pitch_x = <meters>` and `pitch_y = <meters>`.
    pub fn from_pgm(path: &std::path::Path) -> Result<ApertureMask> {
        let mut name = path.file_name().unwrap_or_default().to_os_string();
        name.push(".pitch");
        let sidecar = path.with_file_name(name);
        let text = std::fs::read_to_string(&sidecar).map_err(|e| {
            OpticsError::InvalidParameter(format!(
                "cannot read pitch sidecar {}: {e}",
                sidecar.display()
            ))
        })?;
        let mut pitch_x = None;
        let mut pitch_y = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(OpticsError::InvalidParameter(format!(
                    "malformed sidecar line {line:?}"
                )));
            };
            let value: f64 = value.trim().parse().map_err(|_| {
                OpticsError::InvalidParameter(format!("bad pitch value {:?}", value.trim()))
            })?;
            match key.trim() {
                "pitch_x" => pitch_x = Some(value),
                "pitch_y" => pitch_y = Some(value),
                other => {
                    return Err(OpticsError::InvalidParameter(format!(
                        "unknown sidecar key {other:?}"
                    )))
                }
            }
        }
        let (Some(dx), Some(dy)) = (pitch_x, pitch_y) else {
            return Err(OpticsError::InvalidParameter(
                "sidecar must declare pitch_x and pitch_y".into(),
            ));
        };
        let map = crate::optics::format::read_map_pgm(path, dx, dy)
            .map_err(|e| OpticsError::InvalidParameter(format!("bad mask file: {e}")))?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "mask".into());
        ApertureMask::new(map, label)
    }

    /// Vertical slits centered at `centers` (x, meters), each `width` wide and
    /// `height` tall, sampled with area-weighted (gray) edges so the
    /// effective slit dimensions are pitch-independent. `margin` adds opaque
    /// border beyond the outermost slit edges.
    pub fn slits(
        centers: &[f64],
        width: f64,
        height: f64,
        pitch: f64,
        margin: f64,
    ) -> Result<ApertureMask> {
        if centers.is_empty() {
            return Err(OpticsError::InvalidParameter("no slit centers given".into()));
        }
        for (name, v) in [("width", width), ("height", height), ("pitch", pitch)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OpticsError::InvalidParameter(format!(
                    "slit {name} must be positive, got {v}"
                )));
            }
        }
        let lo = centers.iter().cloned().fold(f64::INFINITY, f64::min) - 0.5 * width - margin;
        let hi = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.5 * width + margin;
        let nx = ((hi - lo) / pitch).ceil() as usize + 1;
        let ny = ((height + 2.0 * margin) / pitch).ceil() as usize + 1;
        // Keep the mask centered on the slit pattern's midpoint by shifting
        // the profile rather than the grid.
        let x_mid = 0.5 * (lo + hi);
        let centers: Vec<f64> = centers.iter().map(|c| c - x_mid).collect();
        let map = RealMap::from_fn(nx.max(2), ny.max(2), pitch, pitch, |p| {
            slit_coverage(p, &centers, width, height, pitch)
        })?;
        ApertureMask::new(map, format!("{}-slit", centers.len()))
    }

    /// Uniform open rectangle `width` x `height` with gray edges.
    pub fn uniform_rectangle(width: f64, height: f64, pitch: f64) -> Result<ApertureMask> {
        ApertureMask::slits(&[0.0], width, height, pitch, 0.0)
    }

    pub fn amplitude(&self) -> &RealMap {
        &self.amplitude
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Nonzero samples as (position, amplitude, cell area) for quadrature.
    pub fn support_samples(&self) -> Vec<(Vec2, f64, f64)> {
        let m = &self.amplitude;
        let area = m.dx() * m.dy();
        let mut out = Vec::new();
        for iy in 0..m.ny() {
            for ix in 0..m.nx() {
                let a = m.at(ix, iy);
                if a != 0.0 {
                    out.push((Vec2::new(m.x(ix), m.y(iy)), a, area));
                }
            }
        }
        out
    }
}

/// Fraction of the pitch-sized cell at `p` covered by the slit pattern
/// (product of per-axis overlaps; 1-D exact area weighting).
pub fn slit_coverage(p: Vec2, centers: &[f64], width: f64, height: f64, pitch: f64) -> f64 {
    let overlap = |lo: f64, hi: f64, a: f64, b: f64| -> f64 {
        (hi.min(b) - lo.max(a)).max(0.0)
    };
    let (cx0, cx1) = (p.x - 0.5 * pitch, p.x + 0.5 * pitch);
    let (cy0, cy1) = (p.y - 0.5 * pitch, p.y + 0.5 * pitch);
    let x_cov: f64 = centers
        .iter()
        .map(|c| overlap(cx0, cx1, c - 0.5 * width, c + 0.5 * width))
        .sum::<f64>()
        / pitch;
    let y_cov = overlap(cy0, cy1, -0.5 * height, 0.5 * height) / pitch;
    (x_cov * y_cov).clamp(0.0, 1.0)
}

/// Intensity point-spread function `somb^2[(R/s_o)(w/c) |rho_o + rho_i/m|]`.
pub fn point_spread(geometry: &ImagingGeometry, rho_o: Vec2, rho_i: Vec2) -> f64 {
    psf_amplitude(geometry, rho_o, rho_i).powi(2)
}

/// Amplitude point-spread kernel `somb[(R/s_o)(w/c) |rho_o + rho_i/m|]`.
pub fn psf_amplitude(geometry: &ImagingGeometry, rho_o: Vec2, rho_i: Vec2) -> f64 {
    let m = geometry.magnification();
    let arg = (rho_o + rho_i.scale(1.0 / m)).norm() * geometry.psf_scale();
    somb(arg)
}

/// Default image grid: the magnified object extent padded 25%, pitch set by
/// the finer of the magnified mask pitch and a quarter Airy radius, odd
/// sample counts so the center lands on a sample.
pub fn default_image_grid(geometry: &ImagingGeometry, mask: &ApertureMask) -> GridSpec {
    let m = geometry.magnification();
    let map = mask.amplitude();
    let (hx, hy) = map.half_extent();
    let pitch = (m * map.dx().min(map.dy())).min(0.25 * geometry.airy_radius_image());
    let odd = |extent: f64| -> usize {
        let n = (2.5 * m * extent / pitch).ceil() as usize + 1;
        n | 1
    };
    GridSpec { nx: odd(hx), ny: odd(hy), dx: pitch, dy: pitch }
}

fn check_object_sampling(
    geometry: &ImagingGeometry,
    mask: &ApertureMask,
    coherent: bool,
) -> Result<()> {
    // The somb kernel's band edge is psf_scale/(2 pi) cycles/m (the squared
    // kernel doubles it); coherent imaging adds the object-plane curvature's
    // local frequency at the mask corner. Rectangle-rule quadrature is exact
    // below Nyquist of the combined band.
    let s = geometry.psf_scale();
    let band = if coherent {
        let (hx, hy) = mask.amplitude().half_extent();
        let r_max = (hx * hx + hy * hy).sqrt();
        let curvature = geometry.omega() * r_max
            / (2.0 * std::f64::consts::PI * SPEED_OF_LIGHT * geometry.object_distance());
        s / (2.0 * std::f64::consts::PI) + curvature
    } else {
        s / std::f64::consts::PI
    };
    let pitch = mask.amplitude().dx().max(mask.amplitude().dy());
    // 0.8 of Nyquist as a safety factor against the mask's own edges.
    let limit = 0.8 * 0.5 / band;
    if pitch > limit {
        return Err(OpticsError::Undersampled(format!(
            "object pitch {pitch:.3e} m cannot resolve the imaging kernel; need <= {limit:.3e} m"
        )));
    }
    Ok(())
}

/// Complex prefactor of the two-segment imaging Green's function:
/// `C^2/(s_o s_i) e^{i w (s_o+s_i)/c} pi R^2` with `C = -i w / 2 pi c`.
fn imaging_prefactor(geometry: &ImagingGeometry) -> Complex64 {
    let w = geometry.omega();
    let c = SPEED_OF_LIGHT;
    let c_norm = Complex64::new(0.0, -w / (2.0 * std::f64::consts::PI * c));
    let pupil = std::f64::consts::PI * geometry.lens_radius().powi(2);
    c_norm * c_norm / (geometry.object_distance() * geometry.image_distance())
        * Complex64::from_polar(
            pupil,
            w * (geometry.object_distance() + geometry.image_distance()) / c,
        )
}

/// Incoherent image `I(rho_i) = int |A|^2 somb^2[...] d rho_o` on `grid`.
pub fn incoherent_image(
    mask: &ApertureMask,
    geometry: &ImagingGeometry,
    grid: &GridSpec,
) -> Result<RealMap> {
    check_object_sampling(geometry, mask, false)?;
    let samples = mask.support_samples();
    let scale = geometry.psf_scale();
    let inv_m = 1.0 / geometry.magnification();
    let norm = imaging_prefactor(geometry).norm_sqr();
    let mut out = grid.empty_map();
    let nx = grid.nx;
    out.values_mut().par_chunks_mut(nx).enumerate().for_each(|(iy, row)| {
        for (ix, slot) in row.iter_mut().enumerate() {
            let probe = grid.point(ix, iy).scale(inv_m);
            let mut acc = 0.0;
            for &(rho_o, a, area) in &samples {
                let arg = (rho_o + probe).norm() * scale;
                let k = somb(arg);
                acc += a * a * k * k * area;
            }
            *slot = acc * norm;
        }
    });
    Ok(out)
}

/// Coherent image `I(rho_i) = |int A e^{i w |rho_o|^2/2 c s_o} somb[...] d rho_o|^2`.
pub fn coherent_image(
    mask: &ApertureMask,
    geometry: &ImagingGeometry,
    grid: &GridSpec,
) -> Result<RealMap> {
    coherent_image_with_screen(mask, None, geometry, grid)
}

/// Coherent image with an optional phase screen at the object plane
/// (`phi(rho_o)` in radians, sampled bilinearly). The screen models a
/// disturbance in the object path; see the turbulence comparisons.
pub fn coherent_image_with_screen(
    mask: &ApertureMask,
    screen: Option<&RealMap>,
    geometry: &ImagingGeometry,
    grid: &GridSpec,
) -> Result<RealMap> {
    check_object_sampling(geometry, mask, true)?;
    let curvature = 0.5 * geometry.omega() / (SPEED_OF_LIGHT * geometry.object_distance());
    let samples: Vec<(Vec2, Complex64)> = mask
        .support_samples()
        .into_iter()
        .map(|(rho_o, a, area)| {
            let mut phase = curvature * rho_o.norm_sq();
            if let Some(map) = screen {
                phase += map.sample(rho_o, crate::optics::Resampling::Bilinear);
            }
            (rho_o, Complex64::from_polar(a * area, phase))
        })
        .collect();
    let scale = geometry.psf_scale();
    let inv_m = 1.0 / geometry.magnification();
    let pref = imaging_prefactor(geometry);
    let mut out = grid.empty_map();
    let nx = grid.nx;
    out.values_mut().par_chunks_mut(nx).enumerate().for_each(|(iy, row)| {
        for (ix, slot) in row.iter_mut().enumerate() {
            let probe = grid.point(ix, iy).scale(inv_m);
            let mut acc = Complex64::new(0.0, 0.0);
            for &(rho_o, w) in &samples {
                let arg = (rho_o + probe).norm() * scale;
                acc += w * somb(arg);
            }
            *slot = (acc * pref).norm_sqr();
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{apply_element, propagate_free, FieldGrid, OpticalElement};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(a.abs())
    }

    /// Interpolated half-max width of a 1-D profile.
    fn fwhm(xs: &[f64], ys: &[f64]) -> f64 {
        let (imax, &peak) = ys
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        let half = 0.5 * peak;
        let mut left = xs[0];
        for i in (1..=imax).rev() {
            if ys[i - 1] < half && ys[i] >= half {
                let t = (half - ys[i - 1]) / (ys[i] - ys[i - 1]);
                left = xs[i - 1] + t * (xs[i] - xs[i - 1]);
                break;
            }
        }
        let mut right = xs[xs.len() - 1];
        for i in imax..ys.len() - 1 {
            if ys[i] >= half && ys[i + 1] < half {
                let t = (ys[i] - half) / (ys[i] - ys[i + 1]);
                right = xs[i] + t * (xs[i + 1] - xs[i]);
                break;
            }
        }
        right - left
    }

    #[test]
    fn geometry_guards() {
        // Paraxial bound.
        assert!(matches!(
            ImagingGeometry::new(0.1, 0.05, 0.03, 633e-9),
            Err(OpticsError::InvalidParameter(_))
        ));
        // Object at focus.
        assert!(matches!(
            ImagingGeometry::new(0.4, 0.4, 0.005, 633e-9),
            Err(OpticsError::DegenerateImage { .. })
        ));
        // Virtual image.
        assert!(matches!(
            ImagingGeometry::new(0.3, 0.4, 0.005, 633e-9),
            Err(OpticsError::InvalidParameter(_))
        ));
        let g = ImagingGeometry::new(0.6, 0.4, 0.005, 633e-9).unwrap();
        assert!(close(g.image_distance(), 1.2, 1e-12));
        assert!(close(g.magnification(), 2.0, 1e-12));
        // Lens equation holds as constructed.
        let residual = (1.0 / g.object_distance() + 1.0 / g.image_distance()
            - 1.0 / g.focal_length())
        .abs()
            * g.focal_length();
        assert!(residual < 1e-12);
    }

    #[test]
    fn psf_peak_and_zero() {
        let g = ImagingGeometry::new(0.6, 0.4, 0.005, 633e-9).unwrap();
        let m = g.magnification();
        let rho_o = Vec2::new(2e-4, -1e-4);
        // Peak of the Airy pattern at the conjugate point.
        assert!(close(point_spread(&g, rho_o, rho_o.scale(-m)), 1.0, 1e-12));
        // First zero at 0.61 lambda s_o / R from the conjugate point (in
        // object-plane units of the kernel argument).
        let zero_r = g.airy_radius_object();
        assert!(close(zero_r, 0.61 * 633e-9 * 0.6 / 0.005, 2e-3));
        let off = Vec2::new(zero_r * m, 0.0);
        assert!(point_spread(&g, rho_o, rho_o.scale(-m) + off) < 1e-10);
        // Halving R doubles the zero radius.
        let g_half = ImagingGeometry::new(0.6, 0.4, 0.0025, 633e-9).unwrap();
        assert!(close(g_half.airy_radius_object(), 2.0 * zero_r, 1e-12));
    }

    #[test]
    fn double_slit_image_resolved_and_inverted() {
        let g = ImagingGeometry::new(0.6, 0.4, 0.005, 633e-9).unwrap();
        // Unequal slits so inversion is observable: stronger slit at +0.75mm.
        let pitch = 1.4e-5_f64;
        let nx = (1.8e-3 / pitch).ceil() as usize + 1;
        let ny = (2.1e-3 / pitch).ceil() as usize + 1;
        let map = RealMap::from_fn(nx, ny, pitch, pitch, |p| {
            slit_coverage(p, &[0.75e-3], 0.2e-3, 2.0e-3, pitch)
                + 0.6 * slit_coverage(p, &[-0.75e-3], 0.2e-3, 2.0e-3, pitch)
        })
        .unwrap();
        let mask = ApertureMask::new(map, "asymmetric double slit").unwrap();

        let grid = GridSpec::line_x(177, 2.5e-5).unwrap();
        let img = incoherent_image(&mask, &g, &grid).unwrap();
        let xs: Vec<f64> = (0..grid.nx).map(|i| grid.x(i)).collect();
        let ys = img.values();

        // Peaks at -m * (slit centers) = -1.5 mm and +1.5 mm.
        let at = |x: f64| -> f64 {
            let i = xs.iter().position(|&v| (v - x).abs() < 1e-9).unwrap();
            ys[i]
        };
        let gap = at(0.0);
        let peak_strong = at(-1.5e-3);
        let peak_weak = at(1.5e-3);
        assert!(peak_strong / gap > 100.0, "ratio {}", peak_strong / gap);
        // Inversion: the strong slit at +0.75 mm images to -1.5 mm.
        assert!(peak_strong > 2.0 * peak_weak);
        // Intensity scales with amplitude squared (0.6^2 = 0.36).
        assert!(close(peak_weak / peak_strong, 0.36, 0.02));
        // Each peak is a local max within one pixel of the expected spot.
        let imax = ys
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!((xs[imax] + 1.5e-3).abs() <= grid.dx + 1e-12);
    }

    #[test]
    fn uniform_mask_images_flat() {
        // Large uniform aperture, probed well inside: the kernel integral is
        // position-independent away from the mask edge.
        let g = ImagingGeometry::new(0.3, 0.15, 0.01, 633e-9).unwrap();
        let airy = g.airy_radius_object();
        let mask = ApertureMask::uniform_rectangle(3.0e-3, 3.0e-3, 0.3 * airy).unwrap();
        // 5x5 probe window spanning the central 0.5 mm of the (1:1) image.
        let m = g.magnification();
        let grid = GridSpec::new(5, 5, m * 0.125e-3, m * 0.125e-3).unwrap();
        let img = incoherent_image(&mask, &g, &grid).unwrap();
        let center = img.values()[12];
        for v in img.values() {
            assert!((v - center).abs() < 0.01 * center, "{v} vs {center}");
        }
    }

    #[test]
    fn narrow_slit_image_is_psf_broadened() {
        // Airy first zero = 4x slit width: the image is kernel-limited.
        let g = ImagingGeometry::new(0.5, 0.25, 1.0e-3, 633e-9).unwrap();
        let a = g.airy_radius_object() / 4.0;
        let mask = ApertureMask::slits(&[0.0], a, 1.2e-3, a / 4.0, 0.0).unwrap();
        let m = g.magnification();
        let grid = GridSpec::line_x(201, m * g.airy_radius_object() / 25.0).unwrap();
        let img = incoherent_image(&mask, &g, &grid).unwrap();
        let xs: Vec<f64> = (0..grid.nx).map(|i| grid.x(i)).collect();
        let w = fwhm(&xs, img.values());
        assert!(w > m * a, "fwhm {w:.3e} vs geometric {:.3e}", m * a);
    }

    #[test]
    fn point_object_coherent_equals_incoherent() {
        let g = ImagingGeometry::new(0.6, 0.4, 0.005, 633e-9).unwrap();
        let mut map = RealMap::new(5, 5, 1.2e-5, 1.2e-5).unwrap();
        *map.at_mut(3, 2) = 1.0;
        let mask = ApertureMask::new(map, "point").unwrap();
        let grid = GridSpec::new(41, 41, 4e-5, 4e-5).unwrap();
        let inc = incoherent_image(&mask, &g, &grid).unwrap();
        let coh = coherent_image(&mask, &g, &grid).unwrap();
        let peak_inc = inc.values().iter().cloned().fold(0.0, f64::max);
        let peak_coh = coh.values().iter().cloned().fold(0.0, f64::max);
        for (a, b) in inc.values().iter().zip(coh.values()) {
            assert!((a / peak_inc - b / peak_coh).abs() < 1e-12);
        }
    }

    #[test]
    fn off_axis_point_centroid_at_minus_m_rho() {
        let g = ImagingGeometry::new(0.6, 0.4, 0.005, 633e-9).unwrap();
        let rho_o = Vec2::new(3e-4, -2e-4);
        let m = g.magnification();
        let expect = rho_o.scale(-m);
        let pitch = 5e-6;
        let mut best = (f64::MIN, Vec2::ZERO);
        for iy in -40..=40 {
            for ix in -40..=40 {
                let rho_i = expect + Vec2::new(ix as f64 * pitch, iy as f64 * pitch);
                let v = point_spread(&g, rho_o, rho_i);
                if v > best.0 {
                    best = (v, rho_i);
                }
            }
        }
        assert!((best.1 - expect).norm() <= pitch + 1e-12);
    }

    #[test]
    fn point_image_width_scales_as_lambda_over_radius() {
        // FWHM of the point image is proportional to lambda/R: check the
        // product FWHM * R / lambda is constant over a 4x range of each.
        let base_lambda = 500e-9;
        let base_r = 2.5e-3;
        let mut ratios = Vec::new();
        for (lambda, r) in [
            (base_lambda, base_r),
            (2.0 * base_lambda, base_r),
            (4.0 * base_lambda, base_r),
            (base_lambda, 2.0 * base_r),
            (base_lambda, 4.0 * base_r),
        ] {
            let g = ImagingGeometry::new(0.5, 0.25, r, lambda).unwrap();
            let m = g.magnification();
            let step = m * g.airy_radius_object() / 60.0;
            let xs: Vec<f64> = (-300..=300).map(|i| i as f64 * step).collect();
            let ys: Vec<f64> = xs
                .iter()
                .map(|&x| point_spread(&g, Vec2::ZERO, Vec2::new(x, 0.0)))
                .collect();
            ratios.push(fwhm(&xs, &ys) * r / (lambda * m));
        }
        let first = ratios[0];
        for r in &ratios {
            assert!(close(*r, first, 0.05), "ratios {ratios:?}");
        }
    }

    #[test]
    fn coherent_and_incoherent_slits_differ_only_near_edges() {
        let g = ImagingGeometry::new(0.6, 0.4, 0.005, 633e-9).unwrap();
        // Wide, well-resolved slits (13 Airy radii across).
        let centers = [-0.9e-3, 0.9e-3];
        let width = 0.6e-3;
        let mask = ApertureMask::slits(&centers, width, 2.4e-3, 1.4e-5, 0.0).unwrap();
        let grid = GridSpec::line_x(301, 2.0e-5).unwrap();
        let m = g.magnification();
        let inc = incoherent_image(&mask, &g, &grid).unwrap();
        let coh = coherent_image(&mask, &g, &grid).unwrap();
        let nearest = |x: f64| {
            (0..grid.nx)
                .min_by(|&a, &b| {
                    (grid.x(a) - x).abs().partial_cmp(&(grid.x(b) - x).abs()).unwrap()
                })
                .unwrap()
        };
        // Normalize each mode by its value at the slit-center images.
        let slit_px = [nearest(-m * centers[0]), nearest(-m * centers[1])];
        let norm = |img: &RealMap| -> Vec<f64> {
            let c = 0.5 * (img.values()[slit_px[0]] + img.values()[slit_px[1]]);
            img.values().iter().map(|v| v / c).collect()
        };
        let inc_n = norm(&inc);
        let coh_n = norm(&coh);
        // Both modes resolve both slits.
        let gap = nearest(0.0);
        assert!(inc_n[slit_px[0]] / inc_n[gap] > 20.0);
        assert!(coh_n[slit_px[0]] / coh_n[gap] > 20.0);
        // The modes differ somewhere (coherent edge ringing) ...
        let delta: Vec<f64> =
            inc_n.iter().zip(&coh_n).map(|(a, b)| (a - b).abs()).collect();
        let (i_worst, worst) = delta
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, v)| (i, *v))
            .unwrap();
        assert!(worst > 0.02, "modes should differ near edges, max delta {worst}");
        // ... and the worst disagreement sits near a slit-edge image, not in
        // the slit interiors where both reproduce the flat transmission.
        let airy_i = g.airy_radius_image();
        let x_worst = grid.x(i_worst);
        let edge_dist = centers
            .iter()
            .flat_map(|&c| [m * c - 0.5 * m * width, m * c + 0.5 * m * width])
            .map(|e| (x_worst + e).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(edge_dist < 3.0 * airy_i, "worst delta {worst} at {x_worst}, {edge_dist} from edge");
        let delta_at_centers = delta[slit_px[0]].max(delta[slit_px[1]]);
        assert!(worst > 3.0 * delta_at_centers, "edge ringing should dominate");
    }

    /// The kernel quadrature against the full field pipeline: object field,
    /// Fresnel segment, thin lens, Fresnel segment.
    #[test]
    fn coherent_image_matches_propagation_pipeline() {
        let lambda = 633e-9;
        let (s_o, f, r) = (0.25, 0.125, 1.5e-3);
        let g = ImagingGeometry::new(s_o, f, r, lambda).unwrap();
        assert!(close(g.magnification(), 1.0, 1e-12));

        // Pipeline on a large grid; the slit profile is sampled with the
        // same gray-edge coverage the mask constructor uses. Odd n keeps the
        // pipeline samples on integer multiples of d, coinciding with the
        // comparison window below.
        let (n, d) = (385, 2.5e-5);
        let width = 0.4e-3;
        let height = 1.0e-3;
        let field = FieldGrid::from_fn(n, n, d, d, lambda, |p| {
            Complex64::new(slit_coverage(p, &[0.0], width, height, d), 0.0)
        })
        .unwrap();
        let at_lens = propagate_free(&field, s_o).unwrap();
        let lens = OpticalElement::ThinLens { focal_length: f, radius: r };
        let after = apply_element(&at_lens, &lens).unwrap();
        let at_image = propagate_free(&after, g.image_distance()).unwrap();

        // Kernel route on the matching central window.
        let mask_pitch = 2.0e-5;
        let mask = ApertureMask::slits(&[0.0], width, height, mask_pitch, 0.0).unwrap();
        let grid = GridSpec::new(49, 65, d, d).unwrap();
        let kernel_img = coherent_image(&mask, &g, &grid).unwrap();

        // Sample the pipeline intensity at the grid points; both grids are
        // odd with the same pitch, so the lookups land on exact samples.
        let pipe = at_image.intensity();
        let mut pipe_win = grid.empty_map();
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let p = grid.point(ix, iy);
                pipe_win.values_mut()[iy * grid.nx + ix] =
                    pipe.sample(p, crate::optics::Resampling::Bilinear);
            }
        }
        let e_kernel: f64 = kernel_img.values().iter().map(|v| v * v).sum();
        let e_pipe: f64 = pipe_win.values().iter().map(|v| v * v).sum();
        let (sk, sp) = (e_kernel.sqrt(), e_pipe.sqrt());
        let mut num = 0.0;
        for (a, b) in kernel_img.values().iter().zip(pipe_win.values()) {
            num += (a / sk - b / sp).powi(2);
        }
        let rel = num.sqrt();
        assert!(rel < 0.02, "pipeline parity {rel:.4}");
    }

    #[test]
    fn undersampled_mask_is_rejected() {
        let g = ImagingGeometry::new(0.6, 0.4, 0.02, 633e-9).unwrap();
        // Airy radius ~14 um; a 100 um pitch cannot resolve the kernel.
        let mask = ApertureMask::slits(&[0.0], 0.5e-3, 1.0e-3, 1.0e-4, 0.0).unwrap();
        let grid = GridSpec::line_x(11, 1e-4).unwrap();
        assert!(matches!(
            incoherent_image(&mask, &g, &grid),
            Err(OpticsError::Undersampled(_))
        ));
    }

    #[test]
    fn mask_pgm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("slits.pgm");
        let mask = ApertureMask::slits(&[-0.75e-3, 0.75e-3], 0.2e-3, 2.0e-3, 2.5e-5, 1e-4).unwrap();
        crate::optics::format::write_map_pgm(&path, mask.amplitude()).unwrap();
        std::fs::write(
            dir.path().join("slits.pgm.pitch"),
            "pitch_x = 2.5e-5\npitch_y = 2.5e-5\n",
        )
        .unwrap();
        let back = ApertureMask::from_pgm(&path).unwrap();
        assert_eq!(back.amplitude().nx(), mask.amplitude().nx());
        assert!(close(back.amplitude().dx(), 2.5e-5, 1e-12));
        for (a, b) in back.amplitude().values().iter().zip(mask.amplitude().values()) {
            assert!((a - b).abs() < 2e-4);
        }
    }
}
