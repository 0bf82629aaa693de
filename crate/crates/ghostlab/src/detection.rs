//! Photon-counting event streams and the statistics used to judge them.
//!
//! A simulated counting experiment produces one [`EventStream`] per detector:
//! a list of pixel clicks, each tagged with the realization (pair emission,
//! speckle frame, beam pulse) that produced it. [`coincidence_count`] folds
//! two streams into a joint histogram by matching realization tags, which is
//! how every ghost image in this crate is accumulated from events.
//!
//! The analysis helpers are deliberately small and testable against closed
//! forms: [`contrast`] measures peak visibility over a margin-median
//! background, [`rank1_residual`] quantifies how far a correlation map is
//! from a factorizable (classical one-beam) pattern, and
//! [`chi_square_uniformity_pvalue`] tests count maps for flatness.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::optics::RealMap;

/// Errors from event generation, stream parsing, and map statistics.
#[derive(Debug, thiserror::Error)]
pub enum DetectionError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    /// The sampling density is all zero (or negative) so no events can be drawn.
    #[error("degenerate density: {0}")]
    DegenerateDensity(String),
    /// The map is too small to leave a margin band around the interior.
    #[error("no margin: {0}")]
    NoMargin(String),
    #[error("bad event file: {0}")]
    BadFormat(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, DetectionError>;

/// One detector click: pixel indices and the realization that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub ix: u32,
    pub iy: u32,
    /// Index of the emission/frame this click belongs to. Clicks from
    /// different realizations are never coincident.
    pub realization: u32,
}

/// All clicks recorded by one detector over a run, on a fixed pixel grid.
///
/// A bucket detector is a 1x1 stream; a scanning or array detector uses its
/// pixel pitch. Events are kept in arrival order; nothing requires one click
/// per realization.
#[derive(Debug, Clone)]
pub struct EventStream {
    detector: String,
    nx: usize,
    ny: usize,
    pitch_x: f64,
    pitch_y: f64,
    events: Vec<Event>,
}

impl EventStream {
    pub fn new(detector: &str, nx: usize, ny: usize, pitch_x: f64, pitch_y: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(DetectionError::InvalidParameter(format!(
                "event grid must be at least 1x1, got {nx}x{ny}"
            )));
        }
        if !(pitch_x > 0.0) || !(pitch_y > 0.0) {
            return Err(DetectionError::InvalidParameter(format!(
                "pixel pitch must be positive, got {pitch_x} x {pitch_y}"
            )));
        }
        if detector.is_empty() || detector.contains(|c: char| c.is_whitespace() || c == ',') {
            return Err(DetectionError::InvalidParameter(format!(
                "detector label {detector:?} must be nonempty without spaces or commas"
            )));
        }
        Ok(EventStream {
            detector: detector.to_string(),
            nx,
            ny,
            pitch_x,
            pitch_y,
            events: Vec::new(),
        })
    }

    pub fn detector(&self) -> &str {
        &self.detector
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn pitch_x(&self) -> f64 {
        self.pitch_x
    }

    pub fn pitch_y(&self) -> f64 {
        self.pitch_y
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn push(&mut self, ix: usize, iy: usize, realization: u32) -> Result<()> {
        if ix >= self.nx || iy >= self.ny {
            return Err(DetectionError::InvalidParameter(format!(
                "event pixel ({ix}, {iy}) outside {}x{} grid",
                self.nx, self.ny
            )));
        }
        self.events.push(Event { ix: ix as u32, iy: iy as u32, realization });
        Ok(())
    }

    /// Histogram of all clicks, ignoring realization tags.
    pub fn counts_map(&self) -> RealMap {
        let mut map = RealMap::new(self.nx, self.ny, self.pitch_x, self.pitch_y)
            .expect("stream dimensions were validated on construction");
        for e in &self.events {
            *map.at_mut(e.ix as usize, e.iy as usize) += 1.0;
        }
        map
    }

    /// Serializes the stream as a line-oriented text file:
    ///
    /// ```text
    /// ghostlab events v1
    /// detector = d2
    /// nx = 65
    /// ny = 1
    /// pitch_x = 2.5e-5
    /// pitch_y = 2.5e-5
    /// events = 3
    /// 12,0,0
    /// 31,0,1
    /// 12,0,4
    /// ```
    ///
    /// Each event line is `ix,iy,realization`.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let mut s = String::new();
        s.push_str("ghostlab events v1\n");
        let _ = writeln!(s, "detector = {}", self.detector);
        let _ = writeln!(s, "nx = {}", self.nx);
        let _ = writeln!(s, "ny = {}", self.ny);
        let _ = writeln!(s, "pitch_x = {:e}", self.pitch_x);
        let _ = writeln!(s, "pitch_y = {:e}", self.pitch_y);
        let _ = writeln!(s, "events = {}", self.events.len());
        for e in &self.events {
            let _ = writeln!(s, "{},{},{}", e.ix, e.iy, e.realization);
        }
        w.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn write_text_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_text(std::io::BufWriter::new(f))
    }

    pub fn read_text<R: Read>(r: R) -> Result<EventStream> {
        let mut lines = BufReader::new(r).lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| DetectionError::BadFormat(format!("missing {what}")))?
                .map_err(DetectionError::Io)
        };
        let magic = next("magic line")?;
        if magic.trim() != "ghostlab events v1" {
            return Err(DetectionError::BadFormat(format!(
                "expected `ghostlab events v1`, got {magic:?}"
            )));
        }
        let mut detector = None;
        let mut dims = [None::<usize>; 2];
        let mut pitch = [None::<f64>; 2];
        let mut count = None;
        for _ in 0..6 {
            let line = next("header entry")?;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| DetectionError::BadFormat(format!("bad header line {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let parse_usize = |v: &str| {
                v.parse::<usize>()
                    .map_err(|e| DetectionError::BadFormat(format!("bad {key}: {e}")))
            };
            let parse_f64 = |v: &str| {
                v.parse::<f64>()
                    .map_err(|e| DetectionError::BadFormat(format!("bad {key}: {e}")))
            };
            match key {
                "detector" => detector = Some(value.to_string()),
                "nx" => dims[0] = Some(parse_usize(value)?),
                "ny" => dims[1] = Some(parse_usize(value)?),
                "pitch_x" => pitch[0] = Some(parse_f64(value)?),
                "pitch_y" => pitch[1] = Some(parse_f64(value)?),
                "events" => count = Some(parse_usize(value)?),
                other => {
                    return Err(DetectionError::BadFormat(format!("unknown header key {other:?}")))
                }
            }
        }
        let missing = || DetectionError::BadFormat("incomplete header".into());
        let mut stream = EventStream::new(
            &detector.ok_or_else(missing)?,
            dims[0].ok_or_else(missing)?,
            dims[1].ok_or_else(missing)?,
            pitch[0].ok_or_else(missing)?,
            pitch[1].ok_or_else(missing)?,
        )?;
        let count = count.ok_or_else(missing)?;
        for _ in 0..count {
            let line = next("event line")?;
            let mut parts = line.trim().split(',');
            let mut field = |what: &str| -> Result<u32> {
                parts
                    .next()
                    .ok_or_else(|| DetectionError::BadFormat(format!("event line missing {what}")))?
                    .parse::<u32>()
                    .map_err(|e| DetectionError::BadFormat(format!("bad {what}: {e}")))
            };
            let (ix, iy, realization) = (field("ix")?, field("iy")?, field("realization")?);
            if parts.next().is_some() {
                return Err(DetectionError::BadFormat(format!(
                    "trailing fields on event line {line:?}"
                )));
            }
            stream.push(ix as usize, iy as usize, realization)?;
        }
        if let Some(Ok(extra)) = lines.next() {
            if !extra.trim().is_empty() {
                return Err(DetectionError::BadFormat(format!(
                    "unexpected trailing line {extra:?}"
                )));
            }
        }
        Ok(stream)
    }

    pub fn read_text_file<P: AsRef<Path>>(path: P) -> Result<EventStream> {
        EventStream::read_text(std::fs::File::open(path)?)
    }
}

/// Draws `n` pixel events from a nonnegative density map by inverse-CDF
/// sampling over the flattened cells.
///
/// The density needs no normalization; only its shape matters. Returns the
/// events tagged with `realization`, one tag for the whole batch (use one
/// call per frame for frame-resolved statistics).
pub fn generate_events<R: Rng>(
    density: &RealMap,
    n: usize,
    realization: u32,
    rng: &mut R,
) -> Result<Vec<Event>> {
    if let Some(bad) = density.values().iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(DetectionError::DegenerateDensity(format!(
            "density values must be finite and nonnegative, found {bad}"
        )));
    }
    let mut cdf = Vec::with_capacity(density.values().len());
    let mut acc = 0.0;
    for v in density.values() {
        acc += v;
        cdf.push(acc);
    }
    if !(acc > 0.0) {
        return Err(DetectionError::DegenerateDensity(
            "density sums to zero; nothing to sample".into(),
        ));
    }
    let nx = density.nx();
    let mut events = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen_range(0.0..acc);
        let cell = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        events.push(Event {
            ix: (cell % nx) as u32,
            iy: (cell / nx) as u32,
            realization,
        });
    }
    Ok(events)
}

/// Joint statistics of two streams matched by realization tag.
#[derive(Debug, Clone)]
pub struct CoincidenceResult {
    /// Per-pixel coincidence histogram on the grid of the second stream: a
    /// click of stream 2 counts once for every stream 1 click sharing its
    /// realization.
    pub joint: RealMap,
    /// All stream 1 clicks, ignoring tags.
    pub singles1: RealMap,
    /// All stream 2 clicks, ignoring tags.
    pub singles2: RealMap,
    /// Sum of the joint histogram.
    pub coincidences: u64,
}

/// Matches two event streams realization by realization.
///
/// The first stream is typically the bucket detector (its pixel layout is
/// ignored for the joint map) and the second the scanning/array detector
/// whose grid the ghost image lives on.
pub fn coincidence_count(s1: &EventStream, s2: &EventStream) -> CoincidenceResult {
    let mut mult1 = std::collections::HashMap::with_capacity(s1.len());
    for e in s1.events() {
        *mult1.entry(e.realization).or_insert(0u64) += 1;
    }
    let mut joint = RealMap::new(s2.nx(), s2.ny(), s2.pitch_x(), s2.pitch_y())
        .expect("stream dimensions were validated on construction");
    let mut coincidences = 0u64;
    for e in s2.events() {
        if let Some(&m) = mult1.get(&e.realization) {
            *joint.at_mut(e.ix as usize, e.iy as usize) += m as f64;
            coincidences += m;
        }
    }
    CoincidenceResult {
        joint,
        singles1: s1.counts_map(),
        singles2: s2.counts_map(),
        coincidences,
    }
}

/// Peak visibility of a map over its own background:
/// `(peak - background) / peak`.
///
/// The background is the median of the margin band, the outer `margin_frac`
/// of rows and columns on every side, so a localized image inside the frame
/// does not bias it. A constant map has contrast 0; an all-zero map too.
/// Fails with [`DetectionError::NoMargin`] when the band would be empty.
pub fn contrast(map: &RealMap, margin_frac: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&margin_frac) {
        return Err(DetectionError::InvalidParameter(format!(
            "margin fraction must be in [0, 0.5), got {margin_frac}"
        )));
    }
    let (nx, ny) = (map.nx(), map.ny());
    let mx = ((nx as f64 * margin_frac).ceil() as usize).max(1);
    let my = ((ny as f64 * margin_frac).ceil() as usize).max(1);
    // A 1-D scan (single row or column) keeps the margin on its long axis only.
    let (mx, my) = (if nx == 1 { 0 } else { mx }, if ny == 1 { 0 } else { my });
    if 2 * mx >= nx && 2 * my >= ny {
        return Err(DetectionError::NoMargin(format!(
            "{nx}x{ny} map has no interior at margin fraction {margin_frac}"
        )));
    }
    let mut band = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            let in_margin = ix < mx || ix >= nx - mx || iy < my || iy >= ny - my;
            if in_margin {
                band.push(map.at(ix, iy));
            }
        }
    }
    if band.is_empty() {
        return Err(DetectionError::NoMargin(format!(
            "{nx}x{ny} map leaves an empty margin band at fraction {margin_frac}"
        )));
    }
    band.sort_by(|a, b| a.partial_cmp(b).expect("map values must not be NaN"));
    let background = if band.len() % 2 == 1 {
        band[band.len() / 2]
    } else {
        0.5 * (band[band.len() / 2 - 1] + band[band.len() / 2])
    };
    let peak = map.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak <= 0.0 {
        return Ok(0.0);
    }
    Ok((peak - background) / peak)
}

/// Largest singular values of a map treated as an `ny x nx` matrix.
///
/// Power iteration on the normal matrix with deflation; `k` is capped at 8.
/// Returned values are nonincreasing.
pub fn top_singular_values(map: &RealMap, k: usize) -> Vec<f64> {
    let k = k.min(8);
    let (nx, ny) = (map.nx(), map.ny());
    let m = map.values();
    // Deflated copies of the matrix, row-major ny x nx.
    let mut a: Vec<f64> = m.to_vec();
    let mut sigmas = Vec::with_capacity(k);
    let max_rank = nx.min(ny);
    for round in 0..k.min(max_rank) {
        // Power iteration on A^T A acting on x in R^nx.
        let mut x = vec![0.0f64; nx];
        // A deterministic start with a component along every right singular
        // vector: decaying pseudo-random signs.
        let mut state = 0x9e37_79b9_7f4a_7c15u64.wrapping_add(round as u64);
        for v in x.iter_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v = 1.0 + 0.5 * ((state >> 33) as f64 / (1u64 << 31) as f64 - 1.0);
        }
        let mut sigma2 = 0.0f64;
        for _ in 0..600 {
            // y = A x; x' = A^T y.
            let mut y = vec![0.0f64; ny];
            for iy in 0..ny {
                let row = &a[iy * nx..(iy + 1) * nx];
                y[iy] = row.iter().zip(&x).map(|(r, xv)| r * xv).sum();
            }
            let mut xn = vec![0.0f64; nx];
            for iy in 0..ny {
                let row = &a[iy * nx..(iy + 1) * nx];
                let yv = y[iy];
                for (xv, r) in xn.iter_mut().zip(row) {
                    *xv += r * yv;
                }
            }
            let norm = xn.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                sigma2 = 0.0;
                break;
            }
            for v in xn.iter_mut() {
                *v /= norm;
            }
            let prev = sigma2;
            sigma2 = norm;
            x = xn;
            if (sigma2 - prev).abs() <= 1e-14 * sigma2.max(1.0) {
                break;
            }
        }
        let sigma = sigma2.sqrt();
        sigmas.push(sigma);
        if sigma == 0.0 {
            break;
        }
        // Deflate: A -= sigma * u v^T with u = A v / sigma.
        let mut u = vec![0.0f64; ny];
        for iy in 0..ny {
            let row = &a[iy * nx..(iy + 1) * nx];
            u[iy] = row.iter().zip(&x).map(|(r, xv)| r * xv).sum::<f64>() / sigma;
        }
        for iy in 0..ny {
            let row = &mut a[iy * nx..(iy + 1) * nx];
            for (r, xv) in row.iter_mut().zip(&x) {
                *r -= sigma * u[iy] * xv;
            }
        }
    }
    sigmas
}

/// How far a map is from rank one: `1 - sigma_1^2 / |M|_F^2`, in [0, 1].
///
/// A factorizable map `M[i][j] = f[i] g[j]`, the signature of a classical
/// one-beam intensity pattern, scores ~0; genuinely joint correlation
/// structure scores above it. Scale, row, and column permutations do not
/// change the score. A zero map scores 0 by convention.
pub fn rank1_residual(map: &RealMap) -> f64 {
    let frob2: f64 = map.values().iter().map(|v| v * v).sum();
    if frob2 == 0.0 {
        return 0.0;
    }
    let sigma1 = top_singular_values(map, 1)[0];
    (1.0 - sigma1 * sigma1 / frob2).max(0.0)
}

/// Lower regularized incomplete gamma function `P(s, x)`.
///
/// Series expansion for `x < s + 1`, Lentz continued fraction for the rest;
/// both converge to near machine precision for the chi-square range used
/// here (`s` up to a few thousand).
fn lower_regularized_gamma(s: f64, x: f64) -> f64 {
    assert!(s > 0.0 && x >= 0.0, "gamma P(s, x) needs s > 0, x >= 0");
    if x == 0.0 {
        return 0.0;
    }
    let ln_prefix = s * x.ln() - x - ln_gamma(s);
    if x < s + 1.0 {
        // P(s, x) = x^s e^-x / Gamma(s) * sum_k x^k / (s (s+1) ... (s+k)).
        let mut term = 1.0 / s;
        let mut sum = term;
        let mut k = 1.0;
        while term.abs() > sum.abs() * 1e-16 && k < 10_000.0 {
            term *= x / (s + k);
            sum += term;
            k += 1.0;
        }
        (ln_prefix.exp() * sum).clamp(0.0, 1.0)
    } else {
        // Q(s, x) via the Lentz continued fraction; P = 1 - Q.
        let tiny = 1e-300;
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (1.0 - ln_prefix.exp() * h).clamp(0.0, 1.0)
    }
}

/// `ln Gamma(s)` by the Lanczos approximation (g = 7, 9 terms).
fn ln_gamma(s: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if s < 0.5 {
        // Reflection for the (unused here) left half plane.
        let pi = std::f64::consts::PI;
        return (pi / (pi * s).sin()).ln() - ln_gamma(1.0 - s);
    }
    let s = s - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (s + i as f64 + 1.0);
    }
    let t = s + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (s + 0.5) * t.ln() - t + acc.ln()
}

/// CDF of the chi-square distribution with `dof` degrees of freedom.
pub fn chi_square_cdf(x: f64, dof: usize) -> f64 {
    assert!(dof > 0, "chi-square needs at least one degree of freedom");
    if x <= 0.0 {
        return 0.0;
    }
    lower_regularized_gamma(dof as f64 / 2.0, x / 2.0)
}

/// Pearson chi-square p-value for "these counts are uniform".
///
/// Bins with expected count below 5 make the chi-square approximation
/// unreliable; that is reported as an error rather than a silent bad answer.
pub fn chi_square_uniformity_pvalue(counts: &[f64]) -> Result<f64> {
    if counts.len() < 2 {
        return Err(DetectionError::InvalidParameter(
            "uniformity test needs at least two bins".into(),
        ));
    }
    if counts.iter().any(|c| *c < 0.0 || !c.is_finite()) {
        return Err(DetectionError::InvalidParameter(
            "counts must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = counts.iter().sum();
    let expected = total / counts.len() as f64;
    if expected < 5.0 {
        return Err(DetectionError::InvalidParameter(format!(
            "expected count per bin is {expected:.2}; chi-square needs >= 5"
        )));
    }
    let stat: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    Ok(1.0 - chi_square_cdf(stat, counts.len() - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn inverse_cdf_sampling_matches_density() {
        // Total variation between the empirical histogram and the target
        // density shrinks as 1/sqrt(n); 0.02 is ~6x the expected value at 1e6.
        let density = RealMap::from_fn(8, 4, 1.0, 1.0, |p| 1.0 + 0.8 * (p.x * 0.7).sin() + 0.1 * p.y.abs()).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let n = 1_000_000;
        let events = generate_events(&density, n, 0, &mut rng).unwrap();
        let mut hist = vec![0.0f64; 32];
        for e in &events {
            hist[e.iy as usize * 8 + e.ix as usize] += 1.0;
        }
        let total: f64 = density.values().iter().sum();
        let tv: f64 = density
            .values()
            .iter()
            .zip(&hist)
            .map(|(d, h)| (d / total - h / n as f64).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "total variation {tv}");
    }

    #[test]
    fn uniform_density_passes_chi_square() {
        let density = RealMap::from_fn(10, 10, 1.0, 1.0, |_| 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let events = generate_events(&density, 100_000, 0, &mut rng).unwrap();
        let mut hist = vec![0.0f64; 100];
        for e in &events {
            hist[e.iy as usize * 10 + e.ix as usize] += 1.0;
        }
        let p = chi_square_uniformity_pvalue(&hist).unwrap();
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn degenerate_densities_are_rejected() {
        let zero = RealMap::new(4, 4, 1.0, 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(matches!(
            generate_events(&zero, 10, 0, &mut rng),
            Err(DetectionError::DegenerateDensity(_))
        ));
        let mut negative = RealMap::new(4, 4, 1.0, 1.0).unwrap();
        *negative.at_mut(1, 1) = -1.0;
        assert!(matches!(
            generate_events(&negative, 10, 0, &mut rng),
            Err(DetectionError::DegenerateDensity(_))
        ));
    }

    #[test]
    fn coincidences_conserve_and_match_by_realization() {
        let mut bucket = EventStream::new("d1", 1, 1, 1.0, 1.0).unwrap();
        let mut camera = EventStream::new("d2", 4, 1, 1.0, 1.0).unwrap();
        // Realizations 0..10; the bucket fires on even ones, twice on 4.
        for r in (0..10).step_by(2) {
            bucket.push(0, 0, r).unwrap();
        }
        bucket.push(0, 0, 4).unwrap();
        for r in 0..10 {
            camera.push((r % 4) as usize, 0, r).unwrap();
        }
        let result = coincidence_count(&bucket, &camera);
        // Camera events at r = 0, 2, 6, 8 match one bucket click; r = 4 two.
        assert_eq!(result.coincidences, 6);
        let joint_sum: f64 = result.joint.values().iter().sum();
        assert_eq!(joint_sum, 6.0);
        assert_eq!(result.singles1.values().iter().sum::<f64>(), 6.0);
        assert_eq!(result.singles2.values().iter().sum::<f64>(), 10.0);
        // Pixel 0 sees r = 0 (weight 1), r = 4 (weight 2), r = 8 (weight 1).
        assert_eq!(result.joint.at(0, 0), 4.0);
    }

    #[test]
    fn disjoint_streams_have_zero_coincidences() {
        let mut a = EventStream::new("d1", 1, 1, 1.0, 1.0).unwrap();
        let mut b = EventStream::new("d2", 2, 2, 1.0, 1.0).unwrap();
        for r in 0..50 {
            a.push(0, 0, 2 * r).unwrap();
            b.push((r % 2) as usize, (r % 2) as usize, 2 * r + 1).unwrap();
        }
        let result = coincidence_count(&a, &b);
        assert_eq!(result.coincidences, 0);
        assert!(result.joint.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn contrast_of_constant_and_peaked_maps() {
        let flat = RealMap::from_fn(20, 20, 1.0, 1.0, |_| 3.0).unwrap();
        assert_eq!(contrast(&flat, 0.15).unwrap(), 0.0);

        // Peak 10 on background 2: contrast 0.8 regardless of peak position.
        let mut peaked = RealMap::from_fn(20, 20, 1.0, 1.0, |_| 2.0).unwrap();
        *peaked.at_mut(10, 9) = 10.0;
        let c = contrast(&peaked, 0.15).unwrap();
        assert!((c - 0.8).abs() < 1e-12, "contrast {c}");

        let zero = RealMap::new(20, 20, 1.0, 1.0).unwrap();
        assert_eq!(contrast(&zero, 0.15).unwrap(), 0.0);
    }

    #[test]
    fn contrast_needs_a_margin() {
        let tiny = RealMap::from_fn(2, 2, 1.0, 1.0, |_| 1.0).unwrap();
        assert!(matches!(contrast(&tiny, 0.4), Err(DetectionError::NoMargin(_))));
        // A 1-D scan works: margins live on the long axis.
        let line = RealMap::from_fn(50, 1, 1.0, 1.0, |p| if p.x.abs() < 5.0 { 2.0 } else { 1.0 }).unwrap();
        let c = contrast(&line, 0.15).unwrap();
        assert!((c - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rank1_outer_product_scores_zero() {
        let f = |i: usize| 1.0 + (i as f64 * 0.4).sin();
        let g = |j: usize| 2.0 + (j as f64 * 0.9).cos();
        let mut map = RealMap::new(17, 13, 1.0, 1.0).unwrap();
        for iy in 0..13 {
            for ix in 0..17 {
                *map.at_mut(ix, iy) = f(iy) * g(ix);
            }
        }
        assert!(rank1_residual(&map) < 1e-10);
    }

    #[test]
    fn rank1_residual_of_identity_is_one_minus_inverse_n() {
        // All 64 singular values equal 1: sigma_1^2 / |M|_F^2 = 1/64.
        let n = 64;
        let mut map = RealMap::new(n, n, 1.0, 1.0).unwrap();
        for i in 0..n {
            *map.at_mut(i, i) = 1.0;
        }
        let r = rank1_residual(&map);
        assert!((r - (1.0 - 1.0 / n as f64)).abs() < 1e-12, "residual {r}");
    }

    #[test]
    fn rank1_residual_is_scale_and_permutation_invariant() {
        let mut map = RealMap::new(9, 7, 1.0, 1.0).unwrap();
        for iy in 0..7 {
            for ix in 0..9 {
                *map.at_mut(ix, iy) = ((ix * 7 + iy * 3) % 5) as f64 + 0.25;
            }
        }
        let base = rank1_residual(&map);

        let mut scaled = map.clone();
        for v in scaled.values_mut() {
            *v *= 37.5;
        }
        assert!((rank1_residual(&scaled) - base).abs() < 1e-10);

        // Reverse the columns (a permutation of pixel labels).
        let mut permuted = RealMap::new(9, 7, 1.0, 1.0).unwrap();
        for iy in 0..7 {
            for ix in 0..9 {
                *permuted.at_mut(8 - ix, iy) = map.at(ix, iy);
            }
        }
        assert!((rank1_residual(&permuted) - base).abs() < 1e-10);
    }

    #[test]
    fn deflation_recovers_known_singular_values() {
        // Diagonal 5, 3, 2 embedded in a 6x4 matrix.
        let mut map = RealMap::new(4, 6, 1.0, 1.0).unwrap();
        *map.at_mut(0, 0) = 5.0;
        *map.at_mut(1, 1) = 3.0;
        *map.at_mut(2, 2) = 2.0;
        let s = top_singular_values(&map, 4);
        assert!((s[0] - 5.0).abs() < 1e-9, "{s:?}");
        assert!((s[1] - 3.0).abs() < 1e-9, "{s:?}");
        assert!((s[2] - 2.0).abs() < 1e-9, "{s:?}");
        assert!(s[3].abs() < 1e-9, "{s:?}");
    }

    #[test]
    fn chi_square_cdf_matches_even_dof_closed_forms() {
        // dof 2: 1 - e^{-x/2}; dof 4: 1 - e^{-x/2}(1 + x/2);
        // dof 6: 1 - e^{-x/2}(1 + x/2 + x^2/8).
        for i in 0..200 {
            let x = 0.05 + i as f64 * 0.25;
            let h = 0.5 * x;
            let c2 = 1.0 - (-h).exp();
            let c4 = 1.0 - (-h).exp() * (1.0 + h);
            let c6 = 1.0 - (-h).exp() * (1.0 + h + 0.5 * h * h);
            assert!((chi_square_cdf(x, 2) - c2).abs() < 1e-12);
            assert!((chi_square_cdf(x, 4) - c4).abs() < 1e-12);
            assert!((chi_square_cdf(x, 6) - c6).abs() < 1e-12);
        }
        // Median of chi-square with high dof sits near dof - 2/3.
        let dof = 999;
        let median = dof as f64 - 2.0 / 3.0;
        assert!((chi_square_cdf(median, dof) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn uniformity_pvalue_guards() {
        assert!(chi_square_uniformity_pvalue(&[1.0]).is_err());
        assert!(chi_square_uniformity_pvalue(&[1.0, 2.0]).is_err()); // expected < 5
        let skewed: Vec<f64> = (0..20).map(|i| if i == 0 { 1000.0 } else { 10.0 }).collect();
        let p = chi_square_uniformity_pvalue(&skewed).unwrap();
        assert!(p < 1e-6, "skewed counts must fail flatness, p = {p}");
    }

    #[test]
    fn event_stream_text_roundtrip() {
        let mut s = EventStream::new("d2", 32, 16, 2.5e-5, 1.25e-5).unwrap();
        s.push(3, 5, 0).unwrap();
        s.push(31, 15, 7).unwrap();
        s.push(0, 0, 7).unwrap();
        let mut buf = Vec::new();
        s.write_text(&mut buf).unwrap();
        let back = EventStream::read_text(&buf[..]).unwrap();
        assert_eq!(back.detector(), "d2");
        assert_eq!(back.nx(), 32);
        assert_eq!(back.ny(), 16);
        assert_eq!(back.pitch_x(), 2.5e-5);
        assert_eq!(back.pitch_y(), 1.25e-5);
        assert_eq!(back.events(), s.events());
    }

    #[test]
    fn malformed_event_files_are_rejected() {
        let bad_magic = b"ghastly events v1\ndetector = d\n";
        assert!(matches!(
            EventStream::read_text(&bad_magic[..]),
            Err(DetectionError::BadFormat(_))
        ));

        let mut s = EventStream::new("d2", 8, 8, 1e-5, 1e-5).unwrap();
        s.push(1, 1, 0).unwrap();
        let mut buf = Vec::new();
        s.write_text(&mut buf).unwrap();
        // Truncate the event line.
        let text = String::from_utf8(buf).unwrap();
        let truncated = text.rsplit_once("1,1,0").unwrap().0.to_string();
        assert!(EventStream::read_text(truncated.as_bytes()).is_err());
        // Out-of-range pixel.
        let oob = text.replace("1,1,0", "9,1,0");
        assert!(EventStream::read_text(oob.as_bytes()).is_err());
    }

    #[test]
    fn push_rejects_out_of_grid_events() {
        let mut s = EventStream::new("d1", 4, 4, 1e-5, 1e-5).unwrap();
        assert!(s.push(4, 0, 0).is_err());
        assert!(s.push(0, 4, 0).is_err());
        assert!(s.push(3, 3, 0).is_ok());
    }
}
