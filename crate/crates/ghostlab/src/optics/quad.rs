//! Oscillatory and smooth quadrature helpers.
//!
//! The recurring integral in paraxial propagation is a linear chirp
//! `int exp(i (a u^2 + b u)) du`. Its integrand never decays, so plain
//! truncation converges like `1/U`. The routines here integrate a finite
//! window exactly (Gauss-Legendre panels bounded by phase increments of pi)
//! and add the two infinite tails analytically from the asymptotic expansion
//! obtained by repeated integration by parts. Three expansion terms leave a
//! remainder below `12 a^2 / phi'(U)^5`, which the window chooser drives
//! under the requested tolerance.

use num_complex::Complex64;

/// Gauss-Legendre 10-point abscissae on [-1, 1] (positive half).
const GL10_X: [f64; 5] = [
    0.148_874_338_981_631_21,
    0.433_395_394_129_247_19,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];

/// Gauss-Legendre 10-point weights matching `GL10_X`.
const GL10_W: [f64; 5] = [
    0.295_524_224_714_752_87,
    0.269_266_719_309_996_36,
    0.219_086_362_515_982_04,
    0.149_451_349_150_580_59,
    0.066_671_344_308_688_14,
];

/// 10-point Gauss-Legendre rule on a single interval.
pub fn gl10<F: FnMut(f64) -> Complex64>(lo: f64, hi: f64, mut f: F) -> Complex64 {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..5 {
        let dx = h * GL10_X[i];
        acc += (f(c - dx) + f(c + dx)) * GL10_W[i];
    }
    acc * h
}

/// Composite 10-point Gauss-Legendre rule with `panels` equal panels.
pub fn gl10_composite<F: FnMut(f64) -> Complex64>(
    lo: f64,
    hi: f64,
    panels: usize,
    mut f: F,
) -> Complex64 {
    let width = (hi - lo) / panels as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        acc += gl10(lo + p as f64 * width, lo + (p + 1) as f64 * width, &mut f);
    }
    acc
}

/// Real-valued composite Gauss-Legendre rule.
pub fn gl10_composite_real<F: FnMut(f64) -> f64>(lo: f64, hi: f64, panels: usize, mut f: F) -> f64 {
    gl10_composite(lo, hi, panels, |u| Complex64::new(f(u), 0.0)).re
}

fn chirp_phase(a: f64, b: f64, u: f64) -> f64 {
    (a * u + b) * u
}

/// `int_u^inf exp(i (a t^2 + b t)) dt` by three-term integration by parts.
///
/// Valid for `a > 0` with the stationary point left of `u`, i.e.
/// `phi'(u) = 2 a u + b > 0`.
fn chirp_upper_tail(a: f64, b: f64, u: f64) -> Complex64 {
    let fp = 2.0 * a * u + b;
    debug_assert!(fp > 0.0, "tail requested across the stationary point");
    let e = Complex64::from_polar(1.0, chirp_phase(a, b, u));
    let t1 = Complex64::new(0.0, 1.0 / fp);
    let t2 = Complex64::new(2.0 * a / fp.powi(3), 0.0);
    let t3 = Complex64::new(0.0, -12.0 * a * a / fp.powi(5));
    e * (t1 + t2 + t3)
}

/// `int_{-inf}^{u} exp(i (a t^2 + b t)) dt`, mirrored onto the upper tail.
fn chirp_lower_tail(a: f64, b: f64, u: f64) -> Complex64 {
    chirp_upper_tail(a, -b, -u)
}

/// Finite chirp integral `int_lo^hi exp(i (a u^2 + b u)) du` for `a > 0`.
///
/// Panels are bounded by equal phase increments of pi measured from the
/// stationary point, so the 10-point rule resolves every oscillation.
fn chirp_panels(a: f64, b: f64, lo: f64, hi: f64) -> Complex64 {
    debug_assert!(a > 0.0);
    let vertex = -b / (2.0 * a);
    let f = |u: f64| Complex64::from_polar(1.0, chirp_phase(a, b, u));
    let mut acc = Complex64::new(0.0, 0.0);
    // Integrate each side of the vertex with edges at phase steps of pi:
    // u_k = vertex + sqrt(k pi / a) on the upper side, mirrored below.
    for (side_lo, side_hi) in [(lo.min(vertex), vertex.min(hi)), (vertex.max(lo), hi.max(vertex))] {
        if side_hi <= side_lo {
            continue;
        }
        let span = (side_hi - vertex).abs().max((side_lo - vertex).abs());
        let k_max = (a * span * span / std::f64::consts::PI).ceil() as usize;
        let mut edges = Vec::with_capacity(k_max + 2);
        for k in 0..=k_max {
            let off = (k as f64 * std::f64::consts::PI / a).sqrt();
            let e = if side_hi <= vertex { vertex - off } else { vertex + off };
            edges.push(e.clamp(side_lo, side_hi));
        }
        edges.push(if side_hi <= vertex { side_lo } else { side_hi });
        edges.sort_by(|p, q| p.partial_cmp(q).unwrap());
        edges.dedup();
        for w in edges.windows(2) {
            if w[1] > w[0] {
                acc += gl10(w[0], w[1], f);
            }
        }
    }
    acc
}

/// Whole-line chirp integral `int exp(i (a u^2 + b u)) du`, `a != 0`.
///
/// Closed form `sqrt(pi/|a|) exp(i sign(a) pi/4) exp(-i b^2/(4a))`; this
/// routine computes it numerically (window quadrature plus tails) and is the
/// quadrature side of dual-route checks. Absolute accuracy is ~1e-8 relative
/// to `sqrt(pi/|a|)` for moderate `a`.
pub fn chirp_line_integral(a: f64, b: f64) -> Complex64 {
    if a < 0.0 {
        return chirp_line_integral(-a, -b).conj();
    }
    assert!(a > 0.0, "chirp integral needs a quadratic term");
    // Window half-width from the tail remainder bound 12 a^2 / phi'(U)^5,
    // targeting 1e-9 * sqrt(pi/a) absolute.
    let tol = 1.0e-9 * (std::f64::consts::PI / a).sqrt();
    let fp_req = (12.0 * a * a / tol).powf(0.2).max(8.0 * a.sqrt());
    let half = fp_req / (2.0 * a);
    let vertex = -b / (2.0 * a);
    chirp_windowed(a, b, vertex - half, vertex + half)
}

/// Chirp integral over the whole line, quadratured on the window `[lo, hi]`
/// with analytic tails beyond it. The stationary point must lie inside the
/// window.
pub fn chirp_windowed(a: f64, b: f64, lo: f64, hi: f64) -> Complex64 {
    if a < 0.0 {
        return chirp_windowed(-a, -b, -hi, -lo).conj();
    }
    let vertex = -b / (2.0 * a);
    assert!(
        vertex > lo && vertex < hi,
        "stationary point {vertex} outside quadrature window [{lo}, {hi}]"
    );
    chirp_panels(a, b, lo, hi) + chirp_lower_tail(a, b, lo) + chirp_upper_tail(a, b, hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chirp_closed_form(a: f64, b: f64) -> Complex64 {
        // Complete the square: a u^2 + b u = a (u + b/2a)^2 - b^2/(4a).
        let mag = (std::f64::consts::PI / a.abs()).sqrt();
        let gauss = Complex64::from_polar(1.0, a.signum() * std::f64::consts::FRAC_PI_4);
        let shift = Complex64::from_polar(1.0, -b * b / (4.0 * a));
        gauss * shift * mag
    }

    #[test]
    fn gl_rule_integrates_polynomials_exactly() {
        // Degree-9 polynomial on [0, 2]: exact for a 10-point rule.
        let val = gl10(0.0, 2.0, |u| Complex64::new(u.powi(9) - 3.0 * u.powi(4) + 1.0, 0.0));
        let exact = 2.0_f64.powi(10) / 10.0 - 3.0 * 2.0_f64.powi(5) / 5.0 + 2.0;
        assert!((val.re - exact).abs() < 1e-12 * exact.abs());
        assert!(val.im.abs() < 1e-14);
    }

    #[test]
    fn line_integral_matches_closed_form() {
        for &(a, b) in &[(0.5, 0.0), (1.7, 2.3), (0.15, -1.1), (3.0, 4.0), (-0.8, 0.7)] {
            let numeric = chirp_line_integral(a, b);
            let exact = chirp_closed_form(a, b);
            assert!(
                (numeric - exact).norm() < 1e-8 * exact.norm(),
                "a={a} b={b}: {numeric} vs {exact}"
            );
        }
    }

    #[test]
    fn tails_agree_with_brute_force_truncation() {
        // Brute force: integrate far past the window and compare. The window
        // edges put phi' near 54, leaving the first omitted tail term
        // (~120 a^3 / phi'^7) around 1e-10.
        let (a, b) = (0.9, 0.4);
        let windowed = chirp_windowed(a, b, -30.0, 32.0);
        let vertex = -b / (2.0 * a);
        let brute = chirp_panels(a, b, vertex - 2200.0, vertex + 2200.0);
        // The brute-force truncation itself is only 1/U accurate, so allow a
        // commensurate tolerance.
        assert!(
            (windowed - brute).norm() < 2e-3,
            "windowed {windowed} vs brute {brute}"
        );
        // And against the closed form at full accuracy.
        assert!((windowed - chirp_closed_form(a, b)).norm() < 1e-8);
    }
}
