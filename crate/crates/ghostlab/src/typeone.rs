//! Entangled-pair ghost imaging (the "type-one" protocol).
//!
//! A two-photon source emits momentum-anticorrelated pairs: each plane-wave
//! mode `exp(i k.r)` taken by photon 1 is paired with `exp(-i k.r)` on
//! photon 2. Photon 1 travels `source_to_lens` to an imaging lens, then
//! `lens_to_object` to the object aperture, behind which a bucket detector
//! collects everything transmitted. Photon 2 flies `source_to_detector2`
//! of bare free space to a scanning point detector.
//!
//! Coincidences between the bucket and the scanner reproduce the object when
//! the two-photon Gaussian lens equation holds,
//!
//! ```text
//! 1 / lens_to_object + 1 / (source_to_lens + source_to_detector2) = 1 / f,
//! ```
//!
//! with magnification `m = (source_to_lens + source_to_detector2) /
//! lens_to_object`, even though the detector-2 singles rate is featureless.
//! The image is inverted (a point at `rho1` maps to `-m rho1`) and carries
//! the full-pupil diffraction kernel `somb`, exactly as a classical lens
//! of the same aperture would resolve it.
//!
//! Two independent evaluations of the two-photon amplitude are provided.
//! [`biphoton_amplitude`] reduces the mode integral analytically to a single
//! radial pupil integral (exactly `somb` in focus). [`biphoton_amplitude_mode_sum`]
//! keeps the plane-wave sum discrete and propagates each mode numerically
//! through the first arm; it serves as the physics oracle for the reduced
//! form. Coincidence rates have no accidental background: the two-photon
//! state is pure, so the rate far from the image support falls to zero
//! rather than to a pedestal.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::detection::{DetectionError, EventStream};
use crate::imaging::ApertureMask;
use crate::optics::quad::{chirp_line_integral, gl10_composite};
use crate::optics::special::{bessel_j0, somb, SOMB_FIRST_ZERO};
use crate::optics::{GridSpec, OpticsError, RealMap, Resampling, Result, Vec2, SPEED_OF_LIGHT};

/// Arm lengths and lens parameters of a two-photon imaging setup.
///
/// Distances are in meters; the wavelength is the (degenerate) wavelength of
/// each photon of the pair.
#[derive(Debug, Clone, Copy)]
pub struct BiphotonGeometry {
    source_to_lens: f64,
    lens_to_object: f64,
    source_to_detector2: f64,
    focal_length: f64,
    lens_radius: f64,
    wavelength: f64,
}

impl BiphotonGeometry {
    pub fn new(
        source_to_lens: f64,
        lens_to_object: f64,
        source_to_detector2: f64,
        focal_length: f64,
        lens_radius: f64,
        wavelength: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("source_to_lens", source_to_lens),
            ("lens_to_object", lens_to_object),
            ("source_to_detector2", source_to_detector2),
            ("focal_length", focal_length),
            ("lens_radius", lens_radius),
            ("wavelength", wavelength),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(OpticsError::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        let na = lens_radius / lens_to_object.min(source_to_lens);
        if na > 0.2 {
            return Err(OpticsError::InvalidParameter(format!(
                "lens radius {lens_radius} m over the shortest arm gives numerical \
                 aperture {na:.3}; the paraxial model is limited to 0.2"
            )));
        }
        Ok(BiphotonGeometry {
            source_to_lens,
            lens_to_object,
            source_to_detector2,
            focal_length,
            lens_radius,
            wavelength,
        })
    }

    /// Detector-2 distance that places the scan on the two-photon image
    /// plane for the given first-arm layout.
    pub fn detector2_for_focus(
        source_to_lens: f64,
        lens_to_object: f64,
        focal_length: f64,
    ) -> Result<f64> {
        let lens = crate::optics::thin_lens_image_distance(lens_to_object, focal_length)?;
        if lens.s_i <= source_to_lens {
            return Err(OpticsError::InvalidParameter(format!(
                "image arm length {} m does not reach past the source arm {} m; \
                 no positive detector-2 distance focuses this layout",
                lens.s_i, source_to_lens
            )));
        }
        Ok(lens.s_i - source_to_lens)
    }

    pub fn source_to_lens(&self) -> f64 {
        self.source_to_lens
    }

    pub fn lens_to_object(&self) -> f64 {
        self.lens_to_object
    }

    pub fn source_to_detector2(&self) -> f64 {
        self.source_to_detector2
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

    /// Unfolded image-arm length `source_to_lens + source_to_detector2`: the
    /// effective image distance in the two-photon lens equation.
    pub fn image_arm_length(&self) -> f64 {
        self.source_to_lens + self.source_to_detector2
    }

    /// Ghost-image magnification `image_arm_length / lens_to_object`.
    pub fn magnification(&self) -> f64 {
        self.image_arm_length() / self.lens_to_object
    }

    /// Residual of the two-photon lens equation, `1/s_o + 1/s_i - 1/f` in
    /// 1/m. Zero on the image plane; nonzero values defocus the ghost image.
    pub fn focus_defect(&self) -> f64 {
        1.0 / self.lens_to_object + 1.0 / self.image_arm_length() - 1.0 / self.focal_length
    }

    pub fn on_image_plane(&self) -> bool {
        self.focus_defect().abs() * self.focal_length < 1e-9
    }

    /// Kernel scale `(R / s_o)(w / c)` in 1/m: `somb(psf_scale * |offset|)`
    /// is the in-focus amplitude kernel in object-plane units.
    pub fn psf_scale(&self) -> f64 {
        (self.lens_radius / self.lens_to_object) * self.omega() / SPEED_OF_LIGHT
    }

    /// First kernel zero in object-plane units.
    pub fn airy_radius_object(&self) -> f64 {
        SOMB_FIRST_ZERO / self.psf_scale()
    }

    /// First kernel zero in detector-2 units.
    pub fn airy_radius_detector2(&self) -> f64 {
        self.airy_radius_object() * self.magnification()
    }
}

/// Discretization of the plane-wave mode sum used by the oracle route.
#[derive(Debug, Clone, Copy)]
pub struct ModeSumParams {
    /// Half width of the transverse-momentum lattice in rad/m.
    pub kappa_max: f64,
    /// Lattice points per momentum axis.
    pub n_kappa: usize,
    /// Pupil quadrature cells per axis across the lens diameter.
    pub pupil_cells: usize,
}

impl ModeSumParams {
    /// Defaults sized for the geometry: the lattice covers every mode whose
    /// first-arm stationary point lands inside the pupil, with margin.
    pub fn for_geometry(geom: &BiphotonGeometry) -> ModeSumParams {
        let reach = geom.lens_to_object.min(geom.source_to_lens);
        ModeSumParams {
            kappa_max: 1.2 * (geom.omega() / SPEED_OF_LIGHT) * geom.lens_radius / reach,
            n_kappa: 511,
            pupil_cells: 192,
        }
    }
}

/// Closed-form field at detector 2 produced by the source mode
/// `exp(i kappa . rho)` after `source_to_detector2` of free space.
pub fn arm2_plane_wave(geom: &BiphotonGeometry, kappa: Vec2, rho2: Vec2) -> Complex64 {
    let w = geom.omega();
    let d2 = geom.source_to_detector2;
    let phase = w * d2 / SPEED_OF_LIGHT - SPEED_OF_LIGHT * d2 * kappa.norm_sq() / (2.0 * w)
        + kappa.dot(rho2);
    Complex64::from_polar(1.0, phase)
}

/// The same plane-wave propagation evaluated by tail-corrected chirp
/// quadrature of the Fresnel integral, with no closed-form shortcuts.
pub fn arm2_plane_wave_quadrature(geom: &BiphotonGeometry, kappa: Vec2, rho2: Vec2) -> Complex64 {
    let w = geom.omega();
    let d2 = geom.source_to_detector2;
    let a = w / (2.0 * SPEED_OF_LIGHT * d2);
    // int G_d2(rho2 - rho_s) exp(i kappa rho_s) d rho_s, separated per axis
    // around u = rho_s - rho2.
    let pref = Complex64::new(0.0, -a / std::f64::consts::PI)
        * Complex64::from_polar(1.0, w * d2 / SPEED_OF_LIGHT + kappa.dot(rho2));
    pref * chirp_line_integral(a, kappa.x) * chirp_line_integral(a, kappa.y)
}

/// `int_0^1 exp(i b t) J0(x sqrt(t)) dt`: the lens-pupil integral reduced to
/// the unit interval. `b` is the quadratic (defocus) phase across the pupil
/// in radians, `x` the kernel argument; `(0, x)` gives `somb(x)` exactly.
fn reduced_pupil_integral(b: f64, x: f64) -> Complex64 {
    let panels = (((b.abs() + x.abs()) / std::f64::consts::PI).ceil() as usize).max(1) + 2;
    gl10_composite(0.0, 1.0, panels, |t| {
        Complex64::from_polar(1.0, b * t) * bessel_j0(x * t.sqrt())
    })
}

fn biphoton_prefactor(geom: &BiphotonGeometry, rho1: Vec2, rho2: Vec2) -> Complex64 {
    let w = geom.omega();
    let c = SPEED_OF_LIGHT;
    let (s_o, s_i) = (geom.lens_to_object, geom.image_arm_length());
    let c_norm = Complex64::new(0.0, -w / (2.0 * std::f64::consts::PI * c));
    let curvature = 0.5 * w / c * (rho1.norm_sq() / s_o + rho2.norm_sq() / s_i);
    c_norm * c_norm / (s_o * s_i)
        * Complex64::from_polar(1.0, w * (s_o + s_i) / c + curvature)
        * (std::f64::consts::PI * geom.lens_radius * geom.lens_radius)
}

/// Two-photon amplitude at object point `rho1` and detector-2 point `rho2`,
/// from the analytic reduction of the mode integral to a radial pupil
/// integral. In focus this is exactly
/// `prefactor * somb(psf_scale |rho1 + rho2 / m|)`.
pub fn biphoton_amplitude(geom: &BiphotonGeometry, rho1: Vec2, rho2: Vec2) -> Complex64 {
    let (b, x) = pupil_integral_args(geom, rho1, rho2);
    let pupil = if b.abs() < 1e-9 {
        Complex64::new(somb(x), 0.0)
    } else {
        reduced_pupil_integral(b, x)
    };
    biphoton_prefactor(geom, rho1, rho2) * pupil
}

/// Defocus phase `b` across the pupil and kernel argument `x` for a point
/// pair, the two arguments of the reduced pupil integral.
fn pupil_integral_args(geom: &BiphotonGeometry, rho1: Vec2, rho2: Vec2) -> (f64, f64) {
    let w = geom.omega();
    let c = SPEED_OF_LIGHT;
    let (s_o, s_i) = (geom.lens_to_object, geom.image_arm_length());
    let r2 = geom.lens_radius * geom.lens_radius;
    let b = 0.5 * w / c * geom.focus_defect() * r2;
    let q = Vec2::new(
        rho1.x / s_o + rho2.x / s_i,
        rho1.y / s_o + rho2.y / s_i,
    );
    (b, w / c * q.norm() * geom.lens_radius)
}

/// Fraction of a square cell (center `cx, cy`, half width `half`) covered by
/// the disk of radius `r` centered on the origin. Boundary cells are
/// supersampled 16x16.
fn disk_coverage(cx: f64, cy: f64, half: f64, r: f64) -> f64 {
    let corner = (cx.abs() + half).hypot(cy.abs() + half);
    if corner <= r {
        return 1.0;
    }
    let nearest_x = (cx.abs() - half).max(0.0);
    let nearest_y = (cy.abs() - half).max(0.0);
    if nearest_x.hypot(nearest_y) >= r {
        return 0.0;
    }
    let n = 16;
    let step = 2.0 * half / n as f64;
    let r2 = r * r;
    let mut inside = 0u32;
    for iy in 0..n {
        let y = cy - half + (iy as f64 + 0.5) * step;
        for ix in 0..n {
            let x = cx - half + (ix as f64 + 0.5) * step;
            if x * x + y * y <= r2 {
                inside += 1;
            }
        }
    }
    inside as f64 / (n * n) as f64
}

/// Two-photon amplitude by direct summation over the discrete plane-wave
/// mode lattice.
///
/// Each mode is carried through the first arm numerically: a tail-corrected
/// chirp integral for the source-to-lens segment, a gray-edged Cartesian
/// quadrature over the lens disk with the lens phase, and the exact Fresnel
/// kernel from the lens to the object point. The second arm uses the
/// closed plane-wave form validated separately against quadrature. No part
/// of the analytic reduction behind [`biphoton_amplitude`] is reused, which
/// is what makes the two routes mutual checks.
pub fn biphoton_amplitude_mode_sum(
    geom: &BiphotonGeometry,
    params: &ModeSumParams,
    rho1: Vec2,
    rho2: Vec2,
) -> Complex64 {
    let w = geom.omega();
    let c = SPEED_OF_LIGHT;
    let (d1, s_o, d2) = (
        geom.source_to_lens,
        geom.lens_to_object,
        geom.source_to_detector2,
    );
    let r = geom.lens_radius;
    let (nk, m) = (params.n_kappa, params.pupil_cells);
    assert!(nk >= 3 && m >= 8, "mode lattice too small to mean anything");
    let dk = 2.0 * params.kappa_max / nk as f64;
    let kappas: Vec<f64> = (0..nk).map(|j| (j as f64 - (nk as f64 - 1.0) / 2.0) * dk).collect();

    // Source-to-lens chirp integral per lattice value; both axes share it.
    let a1 = w / (2.0 * c * d1);
    let source_table: Vec<Complex64> =
        kappas.par_iter().map(|&k| chirp_line_integral(a1, k)).collect();

    // Per-axis mode sums folded with the second-arm plane waves: for a pupil
    // coordinate u,
    //   U(u) = sum_j T_j exp(-i c d2 k_j^2 / 2 w) exp(i k_j (u - rho2_axis)) dk.
    let h = 2.0 * r / m as f64;
    let cells: Vec<f64> = (0..m).map(|i| (i as f64 - (m as f64 - 1.0) / 2.0) * h).collect();
    let chirp2 = -0.5 * c * d2 / w;
    let axis_sum = |rho2_axis: f64| -> Vec<Complex64> {
        cells
            .iter()
            .map(|&u| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, &k) in kappas.iter().enumerate() {
                    let phase = chirp2 * k * k + k * (u - rho2_axis);
                    acc += source_table[j] * Complex64::from_polar(1.0, phase);
                }
                acc * dk
            })
            .collect()
    };
    let (ux, uy) = rayon::join(|| axis_sum(rho2.x), || axis_sum(rho2.y));

    // Gray-edged pupil sum with the lens phase and the exact kernel to rho1.
    let lens_coeff = -0.5 * w / (c * geom.focal_length);
    let obj_coeff = 0.5 * w / (c * s_o);
    let total: Complex64 = (0..m)
        .into_par_iter()
        .map(|iy| {
            let y = cells[iy];
            let mut row = Complex64::new(0.0, 0.0);
            for (ix, &x) in cells.iter().enumerate() {
                let wgt = disk_coverage(x, y, 0.5 * h, r);
                if wgt == 0.0 {
                    continue;
                }
                let dr2 = (rho1.x - x).powi(2) + (rho1.y - y).powi(2);
                let phase = lens_coeff * (x * x + y * y) + obj_coeff * dr2;
                row += Complex64::from_polar(wgt, phase) * ux[ix];
            }
            row * uy[iy]
        })
        .sum();

    let kernel_pref = Complex64::new(0.0, -w / (2.0 * std::f64::consts::PI * c));
    let arm_phases = Complex64::from_polar(1.0, w * (d1 + s_o + d2) / c);
    let measure = h * h / (2.0 * std::f64::consts::PI).powi(2);
    kernel_pref / s_o * kernel_pref / d1 * arm_phases * measure * total
}

/// Checks that an object-plane sampling pitch resolves the coincidence
/// kernel, mirroring the band-limit rule of the classical imaging module.
fn check_mask_sampling(geom: &BiphotonGeometry, mask: &ApertureMask) -> Result<()> {
    let band = geom.psf_scale() / std::f64::consts::PI;
    let limit = 0.8 * 0.5 / band;
    let pitch = mask.amplitude().dx().max(mask.amplitude().dy());
    if pitch > limit {
        return Err(OpticsError::Undersampled(format!(
            "object pitch {pitch:.3e} m cannot resolve the coincidence kernel; \
             need <= {limit:.3e} m"
        )));
    }
    Ok(())
}

/// Coincidence rate between the bucket detector and a scan of detector 2:
/// `R12(rho2) = int |A(rho1)|^2 |Psi(rho1, rho2)|^2 d rho1`.
///
/// The bucket integrates everything behind the object, so the object enters
/// through its intensity transmission alone. Works on and off the image
/// plane; in focus the kernel is exactly the classical incoherent one.
pub fn ghost_image_typeone(
    mask: &ApertureMask,
    geom: &BiphotonGeometry,
    grid: &GridSpec,
) -> Result<RealMap> {
    check_mask_sampling(geom, mask)?;
    let samples = mask.support_samples();
    let w = geom.omega();
    let c = SPEED_OF_LIGHT;
    let (s_o, s_i) = (geom.lens_to_object, geom.image_arm_length());
    let r = geom.lens_radius;
    let b = 0.5 * w / c * geom.focus_defect() * r * r;
    let scale = w / c * r;
    let pref2 = biphoton_prefactor(geom, Vec2::new(0.0, 0.0), Vec2::new(0.0, 0.0)).norm_sqr();

    let mut out = grid.empty_map();
    let nx = grid.nx;
    out.values_mut()
        .par_chunks_mut(nx)
        .enumerate()
        .for_each(|(iy, row)| {
            let y2 = grid.y(iy);
            for (ix, slot) in row.iter_mut().enumerate() {
                let p2 = Vec2::new(grid.x(ix), y2);
                let mut acc = 0.0;
                for &(p1, amp, area) in &samples {
                    let q = Vec2::new(p1.x / s_o + p2.x / s_i, p1.y / s_o + p2.y / s_i);
                    let x = scale * q.norm();
                    let kernel2 = if b.abs() < 1e-9 {
                        let v = somb(x);
                        v * v
                    } else {
                        reduced_pupil_integral(b, x).norm_sqr()
                    };
                    acc += amp * amp * kernel2 * area;
                }
                *slot = acc * pref2;
            }
        });
    Ok(out)
}

/// Detector-2 singles rate over a uniformly illuminated object window of the
/// given half extents, with no object: `S2(rho2) = int |Psi|^2 d rho1`.
///
/// On the image plane this is constant in `rho2` (the kernel merely slides
/// under the window), which is the "no image in singles" half of the ghost
/// imaging statement; the window must extend several Airy radii past the
/// scanned region divided by the magnification for the flatness to survive
/// truncation.
pub fn detector2_singles(
    geom: &BiphotonGeometry,
    grid: &GridSpec,
    window_half_x: f64,
    window_half_y: f64,
) -> Result<RealMap> {
    let pitch = 0.8 * 0.5 * std::f64::consts::PI / geom.psf_scale();
    let nx = (2.0 * window_half_x / pitch).ceil() as usize + 1;
    let ny = (2.0 * window_half_y / pitch).ceil() as usize + 1;
    let window = RealMap::from_fn(nx, ny, pitch, pitch, |_| 1.0)?;
    let mask = ApertureMask::new(window, "uniform window")?;
    ghost_image_typeone(&mask, geom, grid)
}

/// Knobs for the pair-by-pair counting simulation.
#[derive(Debug, Clone, Copy)]
pub struct BiphotonEventConfig {
    /// Photon pairs to draw.
    pub pairs: usize,
    /// Half extents of the uniformly illuminated patch of the object plane
    /// the source shines on. Should cover the mask and then some.
    pub illumination_half_x: f64,
    pub illumination_half_y: f64,
    pub seed: u64,
}

/// Draws photon pairs one by one and returns the bucket (detector 1) and
/// camera (detector 2) event streams, matched by realization tag.
///
/// Each pair lands on the object plane at a uniform position inside the
/// illumination patch; the conjugate photon arrives at detector 2 displaced
/// from the ideal image point by an offset drawn from the squared kernel
/// (inverse-CDF over its radial distribution, truncated at 50 Airy radii,
/// which carries all but ~1% of the mass). The bucket clicks with
/// probability `|A|^2` at the landing point. Camera clicks outside the
/// requested grid are discarded.
///
/// Identical configurations reproduce identical streams.
pub fn simulate_biphoton_events(
    mask: &ApertureMask,
    geom: &BiphotonGeometry,
    grid: &GridSpec,
    cfg: &BiphotonEventConfig,
) -> std::result::Result<(EventStream, EventStream), DetectionError> {
    if cfg.pairs == 0 || cfg.pairs > u32::MAX as usize {
        return Err(DetectionError::InvalidParameter(format!(
            "pair count {} outside 1..=u32::MAX",
            cfg.pairs
        )));
    }
    if !(cfg.illumination_half_x > 0.0) || !(cfg.illumination_half_y > 0.0) {
        return Err(DetectionError::InvalidParameter(
            "illumination extents must be positive".into(),
        ));
    }
    if !geom.on_image_plane() {
        return Err(DetectionError::InvalidParameter(
            "event simulation draws offsets from the in-focus kernel; \
             move detector 2 onto the image plane"
                .into(),
        ));
    }

    // Inverse CDF of the radial offset density r somb(s r)^2 on the object
    // plane, tabulated once.
    let s = geom.psf_scale();
    let r_cut = 50.0 * SOMB_FIRST_ZERO / s;
    let table = 8192;
    let dr = r_cut / table as f64;
    let mut cdf = Vec::with_capacity(table + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    let density = |r: f64| {
        let v = somb(s * r);
        r * v * v
    };
    for i in 0..table {
        // Trapezoid over each bin.
        let r0 = i as f64 * dr;
        acc += 0.5 * (density(r0) + density(r0 + dr)) * dr;
        cdf.push(acc);
    }
    let total = acc;
    let draw_radius = |u: f64| -> f64 {
        let target = u * total;
        let hi = cdf.partition_point(|&c| c < target).clamp(1, table);
        let (c0, c1) = (cdf[hi - 1], cdf[hi]);
        let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        ((hi - 1) as f64 + frac) * dr
    };

    let m = geom.magnification();
    let amp = mask.amplitude();
    let (x0, y0) = (grid.x(0), grid.y(0));
    let mut bucket = EventStream::new("bucket", 1, 1, 1.0, 1.0)?;
    let mut camera = EventStream::new("camera", grid.nx, grid.ny, grid.dx, grid.dy)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    for pair in 0..cfg.pairs {
        let rho1 = Vec2::new(
            rng.gen_range(-cfg.illumination_half_x..cfg.illumination_half_x),
            rng.gen_range(-cfg.illumination_half_y..cfg.illumination_half_y),
        );
        let radius = draw_radius(rng.gen_range(0.0..1.0));
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let rho2 = Vec2::new(
            m * (radius * angle.cos() - rho1.x),
            m * (radius * angle.sin() - rho1.y),
        );
        let ix = ((rho2.x - x0) / grid.dx).round();
        let iy = ((rho2.y - y0) / grid.dy).round();
        let transmission = amp.sample(rho1, Resampling::Bilinear);
        let clicked = rng.gen_range(0.0..1.0) < transmission * transmission;
        if ix >= 0.0 && (ix as usize) < grid.nx && iy >= 0.0 && (iy as usize) < grid.ny {
            camera.push(ix as usize, iy as usize, pair as u32)?;
        }
        if clicked {
            bucket.push(0, 0, pair as u32)?;
        }
    }
    Ok((bucket, camera))
}
