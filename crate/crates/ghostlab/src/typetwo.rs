//! Chaotic-light intensity correlation and lensless ghost imaging (the
//! "type-two" protocol).
//!
//! A spatially incoherent source is modeled as `N` point sub-sources at
//! fixed transverse positions, each radiating a paraxial spherical wavelet
//! with a phase that is redrawn independently on every realization. A
//! beamsplitter sends identical copies of the superposed field down two
//! arms: arm 1 ends on a scanning point detector at distance `z1`, arm 2
//! on the object plane at distance `z2` (with a bucket detector right
//! behind the object when an image is formed). Within one realization the
//! two arms share the same phase draw, because there is only one source.
//!
//! Averaged over realizations the intensity at either detector is
//! featureless, yet the intensity product is not: for equal arm lengths
//! the normalized correlation approaches
//!
//! ```text
//! g2(rho1, rho2) = 1 + somb^2(pi dtheta |rho1 - rho2| / lambda)   (disk)
//! g2(x1, x2)     = 1 + sinc^2(pi dtheta (x1 - x2) / lambda)       (segment)
//! ```
//!
//! where `dtheta` is the full angular size of the source seen from the
//! detectors. The unit pedestal never vanishes, so the point-to-point part
//! rides on a constant background and the best possible peak-to-background
//! ratio is two to one. Convolving the correlation against an aperture's
//! intensity transmission produces the lensless ghost image at unit
//! magnification.
//!
//! Three evaluation routes are provided and cross-checked: exact sub-source
//! sums ([`g2_thermal_analytic`]), a discrete paired-amplitude mode sum
//! over a transverse wavevector lattice ([`g2_paired_mode_sum`]), and a
//! Monte Carlo ensemble over random phase realizations ([`g2_thermal_mc`]).
//! The Monte Carlo route with fixed unit amplitudes carries a `1/N`
//! self-pairing deficit relative to the Gaussian-statistics formulas
//! (exactly `g2(0) = 2 - 1/N` on equal arms), which is why Monte Carlo
//! entry points insist on at least [`MIN_MC_SOURCES`] sub-sources.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::detection::{contrast, DetectionError, EventStream};
use crate::imaging::{incoherent_image, ApertureMask, ImagingGeometry};
use crate::optics::quad::gl10_composite;
use crate::optics::special::{sinc, somb};
use crate::optics::{GridSpec, OpticsError, RealMap, Vec2, SPEED_OF_LIGHT};

/// Minimum sub-source count for the Monte Carlo entry points. Below this
/// the fixed-amplitude model's `1/N` self-pairing deficit exceeds one
/// percent and the chaotic-field approximation stops being honest.
pub const MIN_MC_SOURCES: usize = 100;

/// Minimum realization count for the Monte Carlo entry points.
pub const MIN_MC_REALIZATIONS: u64 = 1000;

/// Paraxial budget: every detector offset and source offset must stay
/// within this fraction of the propagation distance.
const PARAXIAL_LIMIT: f64 = 0.2;

/// RNG stream reserved for drawing random sub-source positions, so that
/// realization indices 0, 1, 2, ... never collide with it.
const POSITION_STREAM: u64 = u64::MAX;

/// Realizations per work block in the deterministic parallel reduction.
const MC_BLOCK: u64 = 128;

#[derive(Debug, Error)]
pub enum ThermalError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The ensemble was too small for the requested estimate: the standard
    /// error at the correlation peak exceeded ten percent of the structured
    /// part `g2 - 1` there.
    #[error(
        "insufficient realizations: stderr {stderr:.3e} at the correlation peak exceeds \
         the budget {budget:.3e} (ten percent of g2 - 1 at the peak)"
    )]
    InsufficientRealizations { stderr: f64, budget: f64 },
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
}

pub type Result<T> = std::result::Result<T, ThermalError>;

/// Transverse footprint of the source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceShape {
    /// Filled disk of the given radius (meters).
    Disk { radius: f64 },
    /// One-dimensional segment along x, `|x| <= half_width` (meters).
    Segment { half_width: f64 },
}

impl SourceShape {
    /// Largest transverse offset a sub-source can have.
    pub fn max_radius(self) -> f64 {
        match self {
            SourceShape::Disk { radius } => radius,
            SourceShape::Segment { half_width } => half_width,
        }
    }
}

/// How sub-source positions fill the footprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceLayout {
    /// Deterministic uniform lattice (a centered square lattice clipped to
    /// the disk, or evenly spaced points on the segment). The realized
    /// count can differ slightly from the request for the disk.
    Lattice,
    /// Positions drawn uniformly over the footprint from the source seed.
    Random,
}

/// Per-realization amplitude statistics of each sub-source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmplitudeModel {
    /// Unit amplitude, random phase only.
    Fixed,
    /// Rayleigh-distributed amplitude with unit mean square, random phase;
    /// together a circular complex Gaussian amplitude.
    Rayleigh,
}

/// A pseudothermal source: point sub-sources at fixed positions whose
/// phases (and optionally amplitudes) are redrawn every realization.
#[derive(Debug, Clone)]
pub struct ChaoticSource {
    shape: SourceShape,
    layout: SourceLayout,
    amplitudes: AmplitudeModel,
    wavelength: f64,
    seed: u64,
    positions: Vec<Vec2>,
    weights: Vec<f64>,
}

impl ChaoticSource {
    /// Builds a source with `n` requested sub-sources of unit strength.
    pub fn new(
        shape: SourceShape,
        layout: SourceLayout,
        amplitudes: AmplitudeModel,
        n: usize,
        wavelength: f64,
        seed: u64,
    ) -> Result<ChaoticSource> {
        if n == 0 {
            return Err(ThermalError::InvalidParameter(
                "source needs at least one sub-source".into(),
            ));
        }
        let radius = shape.max_radius();
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(ThermalError::InvalidParameter(format!(
                "source extent must be positive and finite, got {radius}"
            )));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(ThermalError::InvalidParameter(format!(
                "wavelength must be positive and finite, got {wavelength}"
            )));
        }
        let positions = match (shape, layout) {
            (SourceShape::Disk { radius }, SourceLayout::Lattice) => {
                // Square lattice sized so roughly n cell centers fall inside
                // the disk: k^2 * pi/4 = n.
                let k = ((4.0 * n as f64 / PI).sqrt().round() as usize).max(1);
                let pitch = 2.0 * radius / k as f64;
                let mut pts = Vec::new();
                for iy in 0..k {
                    for ix in 0..k {
                        let p = Vec2::new(
                            (ix as f64 + 0.5) * pitch - radius,
                            (iy as f64 + 0.5) * pitch - radius,
                        );
                        if p.norm() <= radius {
                            pts.push(p);
                        }
                    }
                }
                pts
            }
            (SourceShape::Disk { radius }, SourceLayout::Random) => {
                let mut rng = position_rng(seed);
                (0..n)
                    .map(|_| {
                        let r = radius * rng.gen::<f64>().sqrt();
                        let th = rng.gen_range(0.0..TAU);
                        Vec2::new(r * th.cos(), r * th.sin())
                    })
                    .collect()
            }
            (SourceShape::Segment { half_width }, SourceLayout::Lattice) => {
                let pitch = 2.0 * half_width / n as f64;
                (0..n)
                    .map(|j| Vec2::new((j as f64 + 0.5) * pitch - half_width, 0.0))
                    .collect()
            }
            (SourceShape::Segment { half_width }, SourceLayout::Random) => {
                let mut rng = position_rng(seed);
                (0..n)
                    .map(|_| Vec2::new(rng.gen_range(-half_width..half_width), 0.0))
                    .collect()
            }
        };
        let weights = vec![1.0; positions.len()];
        Ok(ChaoticSource { shape, layout, amplitudes, wavelength, seed, positions, weights })
    }

    /// Replaces the per-sub-source strengths (one positive weight per
    /// realized position).
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<ChaoticSource> {
        if weights.len() != self.positions.len() {
            return Err(ThermalError::InvalidParameter(format!(
                "{} weights for {} sub-sources",
                weights.len(),
                self.positions.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(ThermalError::InvalidParameter(format!(
                "sub-source weight must be positive and finite, got {w}"
            )));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn shape(&self) -> SourceShape {
        self.shape
    }

    pub fn layout(&self) -> SourceLayout {
        self.layout
    }

    pub fn amplitude_model(&self) -> AmplitudeModel {
        self.amplitudes
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn omega(&self) -> f64 {
        TAU * SPEED_OF_LIGHT / self.wavelength
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of realized sub-sources (for disk lattices this can differ
    /// slightly from the constructor request).
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Full angular size of the source seen from `distance`: the diameter
    /// of the disk, or the full length of the segment, over the distance.
    pub fn angular_size(&self, distance: f64) -> f64 {
        2.0 * self.shape.max_radius() / distance
    }
}

fn position_rng(seed: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(POSITION_STREAM);
    rng
}

/// The split two-arm layout: arm 1 is the reference (scanning) detector at
/// `z1`, arm 2 carries the object plane at `z2`. Each arm can carry a pure
/// phase screen at its detection plane (radians, sampled bilinearly and
/// clamped at the map border).
#[derive(Debug, Clone)]
pub struct TwoArmGeometry {
    z1: f64,
    z2: f64,
    screen1: Option<RealMap>,
    screen2: Option<RealMap>,
}

impl TwoArmGeometry {
    pub fn new(z1: f64, z2: f64) -> Result<TwoArmGeometry> {
        for (name, z) in [("z1", z1), ("z2", z2)] {
            if !(z > 0.0 && z.is_finite()) {
                return Err(ThermalError::InvalidParameter(format!(
                    "arm length {name} must be positive and finite, got {z}"
                )));
            }
        }
        Ok(TwoArmGeometry { z1, z2, screen1: None, screen2: None })
    }

    /// Equal arm lengths, the configuration that yields a correlation
    /// depending only on the detector separation.
    pub fn symmetric(z: f64) -> Result<TwoArmGeometry> {
        TwoArmGeometry::new(z, z)
    }

    pub fn with_screen1(mut self, screen: RealMap) -> TwoArmGeometry {
        self.screen1 = Some(screen);
        self
    }

    pub fn with_screen2(mut self, screen: RealMap) -> TwoArmGeometry {
        self.screen2 = Some(screen);
        self
    }

    pub fn z1(&self) -> f64 {
        self.z1
    }

    pub fn z2(&self) -> f64 {
        self.z2
    }

    pub fn screen1(&self) -> Option<&RealMap> {
        self.screen1.as_ref()
    }

    pub fn screen2(&self) -> Option<&RealMap> {
        self.screen2.as_ref()
    }

    pub fn is_symmetric(&self) -> bool {
        self.z1 == self.z2
    }
}

fn check_paraxial(arm: &str, z: f64, source_radius: f64, probes: &[Vec2]) -> Result<()> {
    let mut worst = source_radius / z;
    for p in probes {
        worst = worst.max(p.norm() / z);
    }
    if worst > PARAXIAL_LIMIT {
        return Err(ThermalError::InvalidParameter(format!(
            "{arm}: transverse offset reaches {worst:.3} of the arm length, beyond the \
             paraxial budget {PARAXIAL_LIMIT}"
        )));
    }
    Ok(())
}

/// Deterministic propagation factors from every sub-source to every probe
/// of one arm, probe-major: entry `p * n + j` maps sub-source `j` to probe
/// `p`. The per-realization field is this table contracted with the random
/// unit draws.
fn propagation_table(
    src: &ChaoticSource,
    z: f64,
    screen: Option<&RealMap>,
    probes: &[Vec2],
) -> Vec<Complex64> {
    let n = src.len();
    let omega = src.omega();
    let curvature = 0.5 * omega / (SPEED_OF_LIGHT * z);
    let path_phase = omega * z / SPEED_OF_LIGHT;
    let mut table = vec![Complex64::new(0.0, 0.0); n * probes.len()];
    table.par_chunks_mut(n).enumerate().for_each(|(p, row)| {
        let probe = probes[p];
        let screen_phase = screen
            .map(|s| s.sample(probe, crate::optics::Resampling::Bilinear))
            .unwrap_or(0.0);
        for (j, slot) in row.iter_mut().enumerate() {
            let d = probe + src.positions[j].scale(-1.0);
            let phase = path_phase + curvature * d.norm_sq() + screen_phase;
            *slot = Complex64::from_polar(src.weights[j] / z, phase);
        }
    });
    table
}

/// Reusable field sampler for a fixed probe layout: the deterministic
/// propagation factors are tabulated once, so each realization costs one
/// set of random draws plus a complex matrix-vector product per arm.
pub struct ThermalSampler {
    seed: u64,
    amplitudes: AmplitudeModel,
    n_sources: usize,
    n_probes1: usize,
    n_probes2: usize,
    table1: Vec<Complex64>,
    table2: Vec<Complex64>,
}

impl ThermalSampler {
    pub fn new(
        src: &ChaoticSource,
        geom: &TwoArmGeometry,
        probes1: &[Vec2],
        probes2: &[Vec2],
    ) -> Result<ThermalSampler> {
        let radius = src.shape.max_radius();
        check_paraxial("arm 1", geom.z1, radius, probes1)?;
        check_paraxial("arm 2", geom.z2, radius, probes2)?;
        Ok(ThermalSampler {
            seed: src.seed,
            amplitudes: src.amplitudes,
            n_sources: src.len(),
            n_probes1: probes1.len(),
            n_probes2: probes2.len(),
            table1: propagation_table(src, geom.z1, geom.screen1.as_ref(), probes1),
            table2: propagation_table(src, geom.z2, geom.screen2.as_ref(), probes2),
        })
    }

    /// Per-realization random factors, one per sub-source. The draw order
    /// per sub-source is the phase first, then (for Rayleigh amplitudes)
    /// one uniform variate for the amplitude; this order is part of the
    /// reproducibility contract.
    fn unit_draws(&self, realization: u64) -> Vec<Complex64> {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed);
        rng.set_stream(realization);
        (0..self.n_sources)
            .map(|_| {
                let phase = rng.gen_range(0.0..TAU);
                let amp = match self.amplitudes {
                    AmplitudeModel::Fixed => 1.0,
                    // Rayleigh with unit mean square: sqrt of a unit
                    // exponential. 1 - u keeps the argument of ln nonzero.
                    AmplitudeModel::Rayleigh => (-(1.0 - rng.gen::<f64>()).ln()).sqrt(),
                };
                Complex64::from_polar(amp, phase)
            })
            .collect()
    }

    fn contract(table: &[Complex64], draws: &[Complex64], out: &mut [f64]) {
        let n = draws.len();
        for (p, slot) in out.iter_mut().enumerate() {
            let row = &table[p * n..(p + 1) * n];
            let mut acc = Complex64::new(0.0, 0.0);
            for (c, u) in row.iter().zip(draws) {
                acc += c * u;
            }
            *slot = acc.norm_sqr();
        }
    }

    fn contract_fields(table: &[Complex64], draws: &[Complex64], out: &mut [Complex64]) {
        let n = draws.len();
        for (p, slot) in out.iter_mut().enumerate() {
            let row = &table[p * n..(p + 1) * n];
            let mut acc = Complex64::new(0.0, 0.0);
            for (c, u) in row.iter().zip(draws) {
                acc += c * u;
            }
            *slot = acc;
        }
    }

    /// Complex fields at every probe of both arms for one realization.
    /// The same draw feeds both arms: one source, one beamsplitter.
    pub fn sample(&self, realization: u64) -> (Vec<Complex64>, Vec<Complex64>) {
        let draws = self.unit_draws(realization);
        let mut f1 = vec![Complex64::new(0.0, 0.0); self.n_probes1];
        let mut f2 = vec![Complex64::new(0.0, 0.0); self.n_probes2];
        Self::contract_fields(&self.table1, &draws, &mut f1);
        Self::contract_fields(&self.table2, &draws, &mut f2);
        (f1, f2)
    }

    /// Intensities at every probe of both arms for one realization.
    fn intensities_into(&self, realization: u64, i1: &mut [f64], i2: &mut [f64]) {
        let draws = self.unit_draws(realization);
        Self::contract(&self.table1, &draws, i1);
        Self::contract(&self.table2, &draws, i2);
    }
}

/// One random-phase realization of the source, observed at the given
/// probes in both arms. Convenience wrapper over [`ThermalSampler`] for
/// one-off evaluations.
pub fn sample_realization(
    src: &ChaoticSource,
    geom: &TwoArmGeometry,
    probes1: &[Vec2],
    probes2: &[Vec2],
    realization: u64,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    Ok(ThermalSampler::new(src, geom, probes1, probes2)?.sample(realization))
}

/// Deterministic parallel reduction: realizations are processed in fixed
/// blocks of [`MC_BLOCK`] and the per-block partial sums are folded in
/// block order, so the result is bit-identical regardless of thread count.
fn accumulate_blocks<F>(first: u64, count: u64, width: usize, per: F) -> Vec<f64>
where
    F: Fn(u64, &mut [f64]) + Sync,
{
    let n_blocks = ((count + MC_BLOCK - 1) / MC_BLOCK) as usize;
    let partials: Vec<Vec<f64>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let start = first + b as u64 * MC_BLOCK;
            let end = (start + MC_BLOCK).min(first + count);
            let mut acc = vec![0.0; width];
            for r in start..end {
                per(r, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; width];
    for partial in partials {
        for (t, v) in total.iter_mut().zip(partial) {
            *t += v;
        }
    }
    total
}

/// Sampled second-order correlation over a set of probe pairs, with the
/// factorized background and the interference excess reported separately
/// so that `g2 = (background + interference) / background` pointwise.
#[derive(Debug, Clone)]
pub struct CorrelationMap {
    pairs: Vec<(Vec2, Vec2)>,
    g2: Vec<f64>,
    background: Vec<f64>,
    interference: Vec<f64>,
    stderr: Option<Vec<f64>>,
    n_realizations: Option<u64>,
}

impl CorrelationMap {
    pub fn pairs(&self) -> &[(Vec2, Vec2)] {
        &self.pairs
    }

    pub fn g2(&self) -> &[f64] {
        &self.g2
    }

    pub fn background(&self) -> &[f64] {
        &self.background
    }

    pub fn interference(&self) -> &[f64] {
        &self.interference
    }

    /// Per-pair standard error of `g2` (Monte Carlo estimates only).
    pub fn stderr(&self) -> Option<&[f64]> {
        self.stderr.as_deref()
    }

    pub fn n_realizations(&self) -> Option<u64> {
        self.n_realizations
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Probe separations `|rho1 - rho2|`, the natural abscissa for
    /// equal-arm cuts.
    pub fn separations(&self) -> Vec<f64> {
        self.pairs.iter().map(|(a, b)| (*a + b.scale(-1.0)).norm()).collect()
    }
}

/// Monte Carlo correlation estimate without the ensemble-size gates; used
/// by the public entry point and by convergence studies that deliberately
/// probe small ensembles. `first_realization` selects the stream window.
pub(crate) fn g2_mc_estimate(
    src: &ChaoticSource,
    geom: &TwoArmGeometry,
    pairs: &[(Vec2, Vec2)],
    n_real: u64,
    first_realization: u64,
) -> Result<CorrelationMap> {
    if pairs.is_empty() {
        return Err(ThermalError::InvalidParameter("no probe pairs given".into()));
    }
    if n_real == 0 {
        return Err(ThermalError::InvalidParameter("no realizations requested".into()));
    }
    let probes1: Vec<Vec2> = pairs.iter().map(|p| p.0).collect();
    let probes2: Vec<Vec2> = pairs.iter().map(|p| p.1).collect();
    let sampler = ThermalSampler::new(src, geom, &probes1, &probes2)?;
    let npairs = pairs.len();
    // Per pair: sum of products, sum of squared products, and the two
    // singles sums.
    let sums = accumulate_blocks(first_realization, n_real, 4 * npairs, |r, acc| {
        let mut i1 = vec![0.0; npairs];
        let mut i2 = vec![0.0; npairs];
        sampler.intensities_into(r, &mut i1, &mut i2);
        for k in 0..npairs {
            let p = i1[k] * i2[k];
            acc[4 * k] += p;
            acc[4 * k + 1] += p * p;
            acc[4 * k + 2] += i1[k];
            acc[4 * k + 3] += i2[k];
        }
    });
    let n = n_real as f64;
    let mut g2 = Vec::with_capacity(npairs);
    let mut background = Vec::with_capacity(npairs);
    let mut interference = Vec::with_capacity(npairs);
    let mut stderr = Vec::with_capacity(npairs);
    for k in 0..npairs {
        let mean_p = sums[4 * k] / n;
        let mean_sq = sums[4 * k + 1] / n;
        let bg = (sums[4 * k + 2] / n) * (sums[4 * k + 3] / n);
        let var = ((mean_sq - mean_p * mean_p) * n / (n - 1.0).max(1.0)).max(0.0);
        g2.push(mean_p / bg);
        background.push(bg);
        interference.push(mean_p - bg);
        // Standard error of the product mean over the estimated background.
        // Neglecting the (anticorrelated) fluctuation of the normalization
        // makes this a slightly conservative error bar.
        stderr.push((var / n).sqrt() / bg);
    }
    Ok(CorrelationMap {
        pairs: pairs.to_vec(),
        g2,
        background,
        interference,
        stderr: Some(stderr),
        n_realizations: Some(n_real),
    })
}

fn check_mc_scale(src: &ChaoticSource, n_real: u64) -> Result<()> {
    if src.len() < MIN_MC_SOURCES {
        return Err(ThermalError::InvalidParameter(format!(
            "Monte Carlo runs need at least {MIN_MC_SOURCES} sub-sources, got {}",
            src.len()
        )));
    }
    if n_real < MIN_MC_REALIZATIONS {
        return Err(ThermalError::InvalidParameter(format!(
            "Monte Carlo runs need at least {MIN_MC_REALIZATIONS} realizations, got {n_real}"
        )));
    }
    Ok(())
}

/// Ensemble estimate of `g2` over the given probe pairs.
///
/// Fails with [`ThermalError::InsufficientRealizations`] when the standard
/// error at the pair with the largest `g2` exceeds ten percent of the
/// structured part `g2 - 1` there, so callers always get error bars that
/// resolve the correlation they asked about. The scan should therefore
/// include the correlation peak (a pair of equal or nearly equal points).
pub fn g2_thermal_mc(
    src: &ChaoticSource,
    geom: &TwoArmGeometry,
    pairs: &[(Vec2, Vec2)],
    n_real: u64,
) -> Result<CorrelationMap> {
    check_mc_scale(src, n_real)?;
    let map = g2_mc_estimate(src, geom, pairs, n_real, 0)?;
    let peak = map
        .g2
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .expect("nonempty by construction");
    let budget = 0.1 * (map.g2[peak] - 1.0);
    let err = map.stderr.as_ref().expect("mc map has stderr")[peak];
    if !(err <= budget) {
        return Err(ThermalError::InsufficientRealizations { stderr: err, budget });
    }
    Ok(map)
}

/// One point of the exact correlation, decomposed into the factorized
/// background and the interference excess.
#[derive(Debug, Clone, Copy)]
pub struct G2Point {
    pub g2: f64,
    pub background: f64,
    pub interference: f64,
}

/// Normalized interference ratio `|g1(rho1, rho2)|^2` for the configured
/// sub-sources: the modulus squared of the weighted sum of path-difference
/// phasors over the source, normalized to one at zero path difference. The
/// arm-length prefactors cancel in the ratio.
fn interference_ratio(
    src: &ChaoticSource,
    z1: f64,
    z2: f64,
    rho1: Vec2,
    rho2: Vec2,
) -> f64 {
    let omega = src.omega();
    let c1 = 0.5 * omega / (SPEED_OF_LIGHT * z1);
    let c2 = 0.5 * omega / (SPEED_OF_LIGHT * z2);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut mass = 0.0;
    for (p, w) in src.positions.iter().zip(&src.weights) {
        let w2 = w * w;
        let d1 = rho1 + p.scale(-1.0);
        let d2 = rho2 + p.scale(-1.0);
        acc += Complex64::from_polar(w2, c1 * d1.norm_sq() - c2 * d2.norm_sq());
        mass += w2;
    }
    acc.norm_sqr() / (mass * mass)
}

/// Exact ensemble correlation for the configured source under circular
/// Gaussian amplitude statistics: `g2 = 1 + |g1|^2` with `g1` summed over
/// the actual sub-source positions, valid for any pair of arm lengths.
///
/// Detection-plane phase screens drop out of `|g1|` exactly (they
/// contribute a unit-modulus factor per detector), so the result carries
/// no screen dependence. The fixed-amplitude Monte Carlo model converges
/// to this value up to a `1/N` self-pairing deficit.
pub fn g2_thermal_analytic(
    src: &ChaoticSource,
    geom: &TwoArmGeometry,
    rho1: Vec2,
    rho2: Vec2,
) -> Result<G2Point> {
    let radius = src.shape.max_radius();
    check_paraxial("arm 1", geom.z1, radius, &[rho1])?;
    check_paraxial("arm 2", geom.z2, radius, &[rho2])?;
    let mass: f64 = src.weights.iter().map(|w| w * w).sum();
    let background = (mass / (geom.z1 * geom.z1)) * (mass / (geom.z2 * geom.z2));
    let ratio = interference_ratio(src, geom.z1, geom.z2, rho1, rho2);
    Ok(G2Point { g2: 1.0 + ratio, background, interference: ratio * background })
}

/// Equal-arm correlation of a uniform disk source in the continuum limit:
/// `1 + somb^2(pi dtheta sep / lambda)` with `dtheta` the full angular
/// diameter seen from the detectors.
pub fn g2_disk_closed_form(angular_diameter: f64, wavelength: f64, separation: f64) -> f64 {
    let s = somb(PI * angular_diameter * separation / wavelength);
    1.0 + s * s
}

/// Equal-arm correlation of a uniform one-dimensional segment source in
/// the continuum limit: `1 + sinc^2(pi dtheta dx / lambda)` with `dtheta`
/// the full angular width.
pub fn g2_segment_closed_form(angular_width: f64, wavelength: f64, dx: f64) -> f64 {
    let s = sinc(PI * angular_width * dx / wavelength);
    1.0 + s * s
}

/// Far-field intensity interferometry curve: the normalized coincidence
/// rate between two detectors a baseline `delta_x` apart, observing an
/// incoherent one-dimensional source of angular size `delta_theta`.
pub fn hbt_far_field(delta_x: f64, delta_theta: f64, wavelength: f64) -> f64 {
    g2_segment_closed_form(delta_theta, wavelength, delta_x)
}

/// Baseline at which the segment correlation first falls to the unit
/// background: `lambda / dtheta`.
pub fn first_dip_separation(angular_width: f64, wavelength: f64) -> f64 {
    wavelength / angular_width
}

/// Aperture diameter of a conventional telescope with the same angular
/// resolution the correlation measurement reaches: the source's angular
/// size projected to the stated distance.
pub fn equivalent_aperture(angular_size: f64, distance: f64) -> f64 {
    angular_size * distance
}

/// Paired-amplitude evaluation of the equal-statistics correlation on a
/// discrete transverse wavevector lattice, for a segment source observed
/// on the x axis.
///
/// The chaotic field is expanded in plane-wave modes `exp(i kappa x0)`
/// restricted to the source segment; each mode propagates to the two
/// detectors by numerical quadrature of the paraxial kernel. The
/// correlation is then assembled as the literal double sum over mode pairs
/// of the symmetrized two-detector amplitude,
///
/// ```text
/// sum_{k,k'} |g1(k) g2(k') + g1(k') g2(k)|^2 / 2
/// ```
///
/// normalized by the factorized mode sums. No closed-form identity is
/// applied anywhere, which keeps this route independent of
/// [`g2_thermal_analytic`] and of the continuum formulas.
pub fn g2_paired_mode_sum(
    src: &ChaoticSource,
    geom: &TwoArmGeometry,
    x1: f64,
    x2: f64,
    n_kappa: usize,
) -> Result<f64> {
    let half_width = match src.shape {
        SourceShape::Segment { half_width } => half_width,
        SourceShape::Disk { .. } => {
            return Err(ThermalError::InvalidParameter(
                "paired mode sum is defined for segment sources".into(),
            ));
        }
    };
    if n_kappa < 8 {
        return Err(ThermalError::InvalidParameter(format!(
            "mode lattice needs at least 8 modes, got {n_kappa}"
        )));
    }
    check_paraxial("arm 1", geom.z1, half_width, &[Vec2::new(x1, 0.0)])?;
    check_paraxial("arm 2", geom.z2, half_width, &[Vec2::new(x2, 0.0)])?;
    let omega = src.omega();
    // Lattice pitch from the alias condition: mode images recur at
    // 2 pi / dk in the source coordinate, which must clear the source
    // autocorrelation support (4 half-widths) with margin.
    let dk = TAU / (6.0 * half_width);
    let kappa_max = (0.5 * n_kappa as f64 - 0.5) * dk;
    let z_min = geom.z1.min(geom.z2);
    let x_max = x1.abs().max(x2.abs());
    // The aperture integral of mode kappa is stationary where the kernel
    // chirp matches kappa; covering every stationary point inside the
    // segment plus a few Fresnel-zone widths of soft roll-off bounds the
    // band the lattice must span.
    let needed = omega / (SPEED_OF_LIGHT * z_min) * (half_width + x_max)
        + 3.0 * (omega / (SPEED_OF_LIGHT * z_min)).sqrt();
    if kappa_max < needed {
        return Err(ThermalError::InvalidParameter(format!(
            "mode lattice band {kappa_max:.3e} rad/m is below the {needed:.3e} rad/m the \
             geometry occupies; raise n_kappa"
        )));
    }
    let mode_amplitudes = |z: f64, x_det: f64| -> Vec<Complex64> {
        let h = 0.5 * omega / (SPEED_OF_LIGHT * z);
        (0..n_kappa)
            .map(|j| {
                let kappa = (j as f64 + 0.5 - 0.5 * n_kappa as f64) * dk;
                let slope = kappa.abs() + 2.0 * h * (x_det.abs() + half_width);
                let panels = ((slope * 2.0 * half_width) / PI).ceil() as usize + 2;
                gl10_composite(-half_width, half_width, panels, |x0| {
                    let d = x_det - x0;
                    Complex64::from_polar(1.0, kappa * x0 + h * d * d)
                })
                .scale(1.0 / z)
            })
            .collect()
    };
    let g1 = mode_amplitudes(geom.z1, x1);
    let g2 = mode_amplitudes(geom.z2, x2);
    let mut paired = 0.0;
    for j in 0..n_kappa {
        for l in 0..n_kappa {
            paired += 0.5 * (g1[j] * g2[l] + g1[l] * g2[j]).norm_sqr();
        }
    }
    let m1: f64 = g1.iter().map(|g| g.norm_sqr()).sum();
    let m2: f64 = g2.iter().map(|g| g.norm_sqr()).sum();
    Ok(paired / (m1 * m2))
}

/// Symmetrized paired-amplitude sum over sub-source pairs,
/// `sum_{j,l} |(E_j1 E_l2 + E_l1 E_j2)| ^2 / 2`, given the per-sub-source
/// fields at one detector per arm. Equals the phase-averaged intensity
/// product plus the self-pairing term `sum_j |E_j1|^2 |E_j2|^2`.
pub fn paired_amplitude_sum(fields1: &[Complex64], fields2: &[Complex64]) -> f64 {
    assert_eq!(fields1.len(), fields2.len(), "one field per sub-source per arm");
    let mut acc = 0.0;
    for (j, a) in fields1.iter().enumerate() {
        for (l, b) in fields2.iter().enumerate() {
            acc += 0.5 * (a * b + fields1[l] * fields2[j]).norm_sqr();
        }
    }
    acc
}

/// Per-sub-source deterministic fields at one probe per arm (the random
/// draw factored out), for small-system identity checks.
pub fn subsource_fields(
    src: &ChaoticSource,
    geom: &TwoArmGeometry,
    probe1: Vec2,
    probe2: Vec2,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let radius = src.shape.max_radius();
    check_paraxial("arm 1", geom.z1, radius, &[probe1])?;
    check_paraxial("arm 2", geom.z2, radius, &[probe2])?;
    Ok((
        propagation_table(src, geom.z1, geom.screen1.as_ref(), &[probe1]),
        propagation_table(src, geom.z2, geom.screen2.as_ref(), &[probe2]),
    ))
}

/// Exhaustive average of `I1 I2`, `I1`, and `I2` over every combination of
/// `levels` equally spaced phases per sub-source. Five or more levels make
/// all moments up to fourth order match the continuous uniform phase
/// exactly, so this is a brute-force oracle for small systems.
pub fn phase_average_enumeration(
    fields1: &[Complex64],
    fields2: &[Complex64],
    levels: usize,
) -> Result<(f64, f64, f64)> {
    let n = fields1.len();
    if fields2.len() != n {
        return Err(ThermalError::InvalidParameter(
            "one field per sub-source per arm".into(),
        ));
    }
    if levels < 5 {
        return Err(ThermalError::InvalidParameter(
            "need at least five phase levels for exact fourth-order moments".into(),
        ));
    }
    let total = (levels as f64).powi(n as i32);
    if !(total <= 2.0e7) {
        return Err(ThermalError::InvalidParameter(format!(
            "{levels}^{n} phase combinations is too many to enumerate"
        )));
    }
    let phasors: Vec<Complex64> = (0..levels)
        .map(|l| Complex64::from_polar(1.0, TAU * l as f64 / levels as f64))
        .collect();
    let mut digits = vec![0usize; n];
    let total = total as u64;
    let (mut s_pp, mut s_1, mut s_2) = (0.0, 0.0, 0.0);
    for _ in 0..total {
        let mut e1 = Complex64::new(0.0, 0.0);
        let mut e2 = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let u = phasors[digits[j]];
            e1 += fields1[j] * u;
            e2 += fields2[j] * u;
        }
        let i1 = e1.norm_sqr();
        let i2 = e2.norm_sqr();
        s_pp += i1 * i2;
        s_1 += i1;
        s_2 += i2;
        for d in digits.iter_mut() {
            *d += 1;
            if *d < levels {
                break;
            }
            *d = 0;
        }
    }
    let t = total as f64;
    Ok((s_pp / t, s_1 / t, s_2 / t))
}

/// Single-row aperture mask for one-dimensional runs: open intervals of
/// the given width centered at `centers`, areal (gray) edge coverage, an
/// opaque margin beyond the outermost edges, centered on the pattern.
pub fn line_slits(centers: &[f64], width: f64, pitch: f64, margin: f64) -> Result<ApertureMask> {
    if centers.is_empty() {
        return Err(ThermalError::InvalidParameter("no slit centers given".into()));
    }
    for (name, v) in [("width", width), ("pitch", pitch)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ThermalError::InvalidParameter(format!(
                "slit {name} must be positive, got {v}"
            )));
        }
    }
    let lo = centers.iter().cloned().fold(f64::INFINITY, f64::min) - 0.5 * width - margin;
    let hi = centers.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.5 * width + margin;
    let nx = (((hi - lo) / pitch).ceil() as usize + 1).max(2);
    let mid = 0.5 * (lo + hi);
    let centers: Vec<f64> = centers.iter().map(|c| c - mid).collect();
    let map = RealMap::from_fn(nx, 1, pitch, pitch, |p| {
        let cell_lo = p.x - 0.5 * pitch;
        let cell_hi = p.x + 0.5 * pitch;
        let mut covered = 0.0;
        for c in &centers {
            let o = (cell_hi.min(c + 0.5 * width) - cell_lo.max(c - 0.5 * width)).max(0.0);
            covered += o;
        }
        (covered / pitch).min(1.0)
    })?;
    Ok(ApertureMask::new(map, format!("{}-slit line", centers.len()))?)
}

/// How a ghost image is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GhostImageMethod {
    /// Exact ensemble expectation from the sub-source sums.
    Analytic,
    /// Random-phase ensemble of the stated size.
    MonteCarlo { n_realizations: u64 },
}

/// Lensless ghost image and its correlation diagnostics.
#[derive(Debug, Clone)]
pub struct GhostImageReport {
    /// Coincidence image over the scan, normalized so that the factorized
    /// background sits at one: `image = <I1 B> / (<I1><B>)` with `B` the
    /// bucket signal behind the mask.
    pub image: RealMap,
    /// Point-to-point correlation cut `g2((x, 0), (0, 0))` across the scan
    /// x range, single row, same pitch as the scan.
    pub correlation_cut: RealMap,
    /// Contrast `(peak - background) / peak` of the correlation cut; the
    /// two-to-one ceiling of chaotic light caps this at one half.
    pub correlation_contrast: f64,
    /// Margin contrast of the bucket image itself. Bucket integration
    /// dilutes the structured part by roughly the ratio of the correlation
    /// cell to the open mask area, so this is well below the cut contrast
    /// for any object larger than one cell.
    pub image_contrast: f64,
    pub n_realizations: Option<u64>,
}

fn mask_cells(mask: &ApertureMask) -> Result<(Vec<Vec2>, Vec<f64>)> {
    let samples = mask.support_samples();
    if samples.is_empty() {
        return Err(ThermalError::InvalidParameter("mask has no open samples".into()));
    }
    let positions: Vec<Vec2> = samples.iter().map(|s| s.0).collect();
    // Intensity transmission times cell area.
    let weights: Vec<f64> = samples.iter().map(|s| s.1 * s.1 * s.2).collect();
    Ok((positions, weights))
}

/// Lensless ghost image of `mask` over `scan`: the normalized coincidence
/// rate between the scanning detector in arm 1 and a bucket detector
/// behind the mask in arm 2.
pub fn ghost_image_typetwo(
    mask: &ApertureMask,
    src: &ChaoticSource,
    geom: &TwoArmGeometry,
    scan: &GridSpec,
    method: GhostImageMethod,
) -> Result<GhostImageReport> {
    let (cells, weights) = mask_cells(mask)?;
    let scan_points: Vec<Vec2> =
        (0..scan.ny).flat_map(|iy| (0..scan.nx).map(move |ix| (ix, iy))).map(|(ix, iy)| scan.point(ix, iy)).collect();
    let cut_points: Vec<Vec2> = (0..scan.nx).map(|ix| Vec2::new(scan.x(ix), 0.0)).collect();
    let radius = src.shape.max_radius();
    check_paraxial("arm 1", geom.z1, radius, &scan_points)?;
    check_paraxial("arm 2", geom.z2, radius, &cells)?;
    let mass: f64 = weights.iter().sum();

    let mut image = scan.empty_map();
    let mut cut = RealMap::new(scan.nx, 1, scan.dx, scan.dx)?;
    let mut n_realizations = None;

    match method {
        GhostImageMethod::Analytic => {
            let nx = scan.nx;
            image.values_mut().par_chunks_mut(nx).enumerate().for_each(|(iy, row)| {
                for (ix, slot) in row.iter_mut().enumerate() {
                    let probe = scan.point(ix, iy);
                    let mut acc = 0.0;
                    for (cell, w) in cells.iter().zip(&weights) {
                        acc += w
                            * (1.0 + interference_ratio(src, geom.z1, geom.z2, probe, *cell));
                    }
                    *slot = acc / mass;
                }
            });
            let origin = Vec2::new(0.0, 0.0);
            let cut_vals: Vec<f64> = cut_points
                .par_iter()
                .map(|p| 1.0 + interference_ratio(src, geom.z1, geom.z2, *p, origin))
                .collect();
            cut.values_mut().copy_from_slice(&cut_vals);
        }
        GhostImageMethod::MonteCarlo { n_realizations: n_real } => {
            check_mc_scale(src, n_real)?;
            // Arm-1 probes: the scan, then the cut line. Arm-2 probes: the
            // mask cells, then the reference point of the cut.
            let mut probes1 = scan_points.clone();
            probes1.extend_from_slice(&cut_points);
            let mut probes2 = cells.clone();
            probes2.push(Vec2::new(0.0, 0.0));
            let sampler = ThermalSampler::new(src, geom, &probes1, &probes2)?;
            let np = scan_points.len();
            let nc = cut_points.len();
            let ncell = cells.len();
            // Layout: image products, scan singles, cut products, squared
            // cut products, cut singles, then bucket sum and reference.
            let w_img = 0;
            let w_s1 = np;
            let w_cut = 2 * np;
            let w_cut2 = 2 * np + nc;
            let w_cs1 = 2 * np + 2 * nc;
            let w_tail = 2 * np + 3 * nc;
            let width = w_tail + 2;
            let weights_ref = &weights;
            let sums = accumulate_blocks(0, n_real, width, move |r, acc| {
                let mut i1 = vec![0.0; np + nc];
                let mut i2 = vec![0.0; ncell + 1];
                sampler.intensities_into(r, &mut i1, &mut i2);
                let bucket: f64 =
                    weights_ref.iter().zip(&i2).map(|(w, i)| w * i).sum();
                let reference = i2[ncell];
                for p in 0..np {
                    acc[w_img + p] += i1[p] * bucket;
                    acc[w_s1 + p] += i1[p];
                }
                for k in 0..nc {
                    let v = i1[np + k] * reference;
                    acc[w_cut + k] += v;
                    acc[w_cut2 + k] += v * v;
                    acc[w_cs1 + k] += i1[np + k];
                }
                acc[w_tail] += bucket;
                acc[w_tail + 1] += reference;
            });
            let n = n_real as f64;
            let mean_bucket = sums[w_tail] / n;
            let mean_ref = sums[w_tail + 1] / n;
            for p in 0..np {
                image.values_mut()[p] =
                    (sums[w_img + p] / n) / ((sums[w_s1 + p] / n) * mean_bucket);
            }
            let mut peak_g2 = f64::NEG_INFINITY;
            let mut peak_err = 0.0;
            for k in 0..nc {
                let mean_p = sums[w_cut + k] / n;
                let bg = (sums[w_cs1 + k] / n) * mean_ref;
                let g2 = mean_p / bg;
                cut.values_mut()[k] = g2;
                let var = ((sums[w_cut2 + k] / n - mean_p * mean_p) * n / (n - 1.0)).max(0.0);
                let err = (var / n).sqrt() / bg;
                if g2 > peak_g2 {
                    peak_g2 = g2;
                    peak_err = err;
                }
            }
            let budget = 0.1 * (peak_g2 - 1.0);
            if !(peak_err <= budget) {
                return Err(ThermalError::InsufficientRealizations {
                    stderr: peak_err,
                    budget,
                });
            }
            n_realizations = Some(n_real);
        }
    }

    let correlation_contrast = contrast(&cut, 0.15)?;
    let image_contrast = contrast(&image, 0.15)?;
    Ok(GhostImageReport {
        image,
        correlation_cut: cut,
        correlation_contrast,
        image_contrast,
        n_realizations,
    })
}

/// Side-by-side ghost images with and without phase screens at the
/// detection planes.
#[derive(Debug, Clone)]
pub struct TurbulenceReport {
    pub undisturbed: RealMap,
    pub disturbed: RealMap,
    /// Largest pixel change between the two images, relative to the
    /// undisturbed peak.
    pub max_relative_change: f64,
}

/// Reruns the ghost image with pure phase screens applied at the detection
/// planes of the chosen arms and reports the largest relative change.
/// Screens multiply the field by a unit-modulus factor that depends only
/// on the detection coordinate, so every intensity, and with it the whole
/// correlation, is invariant up to floating-point rounding.
pub fn turbulence_probe(
    mask: &ApertureMask,
    src: &ChaoticSource,
    geom: &TwoArmGeometry,
    scan: &GridSpec,
    method: GhostImageMethod,
    screen1: Option<RealMap>,
    screen2: Option<RealMap>,
) -> Result<TurbulenceReport> {
    let base = ghost_image_typetwo(mask, src, geom, scan, method)?;
    let mut disturbed_geom = geom.clone();
    if let Some(s) = screen1 {
        disturbed_geom = disturbed_geom.with_screen1(s);
    }
    if let Some(s) = screen2 {
        disturbed_geom = disturbed_geom.with_screen2(s);
    }
    let disturbed = ghost_image_typetwo(mask, src, &disturbed_geom, scan, method)?;
    let peak = base.image.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let max_change = base
        .image
        .values()
        .iter()
        .zip(disturbed.image.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(TurbulenceReport {
        undisturbed: base.image,
        disturbed: disturbed.image,
        max_relative_change: max_change / peak,
    })
}

/// Event-level run of the ghost imaging experiment: per realization the
/// scanning detector fires each scan bin with probability proportional to
/// the instantaneous intensity there, and the bucket fires with
/// probability proportional to the mask-integrated intensity, so ungated
/// singles stay flat while shared-realization coincidences carry the
/// image. `rate1` and `rate2` are the mean firing probabilities per bin
/// and per realization (at most one count per bin per realization, with
/// saturation above unit probability).
pub fn thermal_coincidence_events(
    mask: &ApertureMask,
    src: &ChaoticSource,
    geom: &TwoArmGeometry,
    scan: &GridSpec,
    n_real: u64,
    rate1: f64,
    rate2: f64,
) -> Result<(EventStream, EventStream)> {
    check_mc_scale(src, n_real)?;
    if n_real > u32::MAX as u64 {
        return Err(ThermalError::InvalidParameter(format!(
            "realization count {n_real} does not fit the event stream index"
        )));
    }
    for (name, r) in [("rate1", rate1), ("rate2", rate2)] {
        if !(r > 0.0 && r <= 0.5) {
            return Err(ThermalError::InvalidParameter(format!(
                "{name} must lie in (0, 0.5], got {r}"
            )));
        }
    }
    let (cells, weights) = mask_cells(mask)?;
    let scan_points: Vec<Vec2> =
        (0..scan.ny).flat_map(|iy| (0..scan.nx).map(move |ix| (ix, iy))).map(|(ix, iy)| scan.point(ix, iy)).collect();
    let radius = src.shape.max_radius();
    check_paraxial("arm 1", geom.z1, radius, &scan_points)?;
    check_paraxial("arm 2", geom.z2, radius, &cells)?;
    let sampler = ThermalSampler::new(src, geom, &scan_points, &cells)?;
    let mass: f64 = src.weights.iter().map(|w| w * w).sum();
    let mean_i1 = mass / (geom.z1 * geom.z1);
    let mean_bucket: f64 = weights.iter().sum::<f64>() * mass / (geom.z2 * geom.z2);
    let mut camera = EventStream::new("camera", scan.nx, scan.ny, scan.dx, scan.dy)?;
    let extent = mask.amplitude().half_extent();
    let mut bucket =
        EventStream::new("bucket", 1, 1, 2.0 * extent.0.max(scan.dx), 2.0 * extent.1.max(scan.dy))?;
    let mut i1 = vec![0.0; scan_points.len()];
    let mut i2 = vec![0.0; cells.len()];
    // Detection coin flips come from a key distinct from the field seed so
    // they stay independent of the phase draws; per realization the scan
    // bins are visited in row-major order, then the bucket.
    for r in 0..n_real {
        sampler.intensities_into(r, &mut i1, &mut i2);
        let mut coins = ChaCha12Rng::seed_from_u64(src.seed.wrapping_add(1));
        coins.set_stream(r);
        for (p, intensity) in i1.iter().enumerate() {
            let prob = (rate1 * intensity / mean_i1).min(1.0);
            if coins.gen::<f64>() < prob {
                camera.push(p % scan.nx, p / scan.nx, r as u32)?;
            }
        }
        let bucket_signal: f64 = weights.iter().zip(&i2).map(|(w, i)| w * i).sum();
        let prob = (rate2 * bucket_signal / mean_bucket).min(1.0);
        if coins.gen::<f64>() < prob {
            bucket.push(0, 0, r as u32)?;
        }
    }
    Ok((camera, bucket))
}

/// Relays a reconstructed ghost image through a conventional incoherent
/// imaging stage: the image intensity acts as the object distribution and
/// the output is its magnified, point-spread-blurred copy on `scan`.
pub fn secondary_image(
    ghost: &RealMap,
    relay: &ImagingGeometry,
    scan: &GridSpec,
) -> Result<RealMap> {
    let peak = ghost.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return Err(ThermalError::InvalidParameter(
            "ghost image has no positive values to relay".into(),
        ));
    }
    if let Some(v) = ghost.values().iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(ThermalError::InvalidParameter(format!(
            "ghost image value {v} is not a nonnegative intensity"
        )));
    }
    let amplitude = RealMap::from_values(
        ghost.nx(),
        ghost.ny(),
        ghost.dx(),
        ghost.dy(),
        ghost.values().iter().map(|v| (v / peak).sqrt()).collect(),
    )?;
    let mask = ApertureMask::new(amplitude, "relayed ghost image")?;
    Ok(incoherent_image(&mask, relay, scan)?)
}
