//! Special functions for circular-pupil diffraction kernels.

/// Bessel function of the first kind, order one.
///
/// Power series for `|x| <= 14`, Hankel asymptotic expansion beyond.
/// Absolute accuracy is better than 1e-10 for `|x| <= 50` (verified against
/// quadrature of the integral representation in the test suite).
pub fn bessel_j1(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 14.0 {
        // J1(x) = (x/2) sum_k (-x^2/4)^k / (k! (k+1)!)
        let q = -0.25 * x * x;
        let mut term = 0.5 * x;
        let mut sum = term;
        for k in 1..60 {
            term *= q / (k as f64 * (k + 1) as f64);
            sum += term;
            if term.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        // J1(x) = sqrt(2/(pi x)) [P(x) cos(chi) - Q(x) sin(chi)],
        // chi = x - 3 pi/4, with P and Q the Hankel series in 1/(8x).
        let inv8x = 1.0 / (8.0 * ax);
        let mu = 4.0;
        let mut p = 1.0;
        let mut q = 0.0;
        let mut term = 1.0;
        let mut prev = f64::INFINITY;
        for n in 1..14 {
            let s = mu - (2.0 * n as f64 - 1.0).powi(2);
            term *= s * inv8x / n as f64;
            if term.abs() >= prev {
                break; // asymptotic series started diverging
            }
            prev = term.abs();
            match n % 4 {
                1 => q += term,
                2 => p -= term,
                3 => q -= term,
                _ => p += term,
            }
        }
        let chi = ax - 0.75 * std::f64::consts::PI;
        let val = (2.0 / (std::f64::consts::PI * ax)).sqrt() * (p * chi.cos() - q * chi.sin());
        if x < 0.0 {
            -val
        } else {
            val
        }
    }
}

/// Bessel function of the first kind, order zero.
///
/// Same construction as [`bessel_j1`]: power series for `|x| <= 14`, Hankel
/// asymptotic expansion beyond, better than 1e-10 absolute over `|x| <= 50`.
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 14.0 {
        // J0(x) = sum_k (-x^2/4)^k / (k!)^2
        let q = -0.25 * x * x;
        let mut term = 1.0;
        let mut sum = term;
        for k in 1..60 {
            term *= q / ((k * k) as f64);
            sum += term;
            if term.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        // J0(x) = sqrt(2/(pi x)) [P(x) cos(chi) - Q(x) sin(chi)],
        // chi = x - pi/4, with P and Q the order-zero Hankel series.
        let inv8x = 1.0 / (8.0 * ax);
        let mu = 0.0;
        let mut p = 1.0;
        let mut q = 0.0;
        let mut term = 1.0;
        let mut prev = f64::INFINITY;
        for n in 1..14 {
            let s = mu - (2.0 * n as f64 - 1.0).powi(2);
            term *= s * inv8x / n as f64;
            if term.abs() >= prev {
                break; // asymptotic series started diverging
            }
            prev = term.abs();
            match n % 4 {
                1 => q += term,
                2 => p -= term,
                3 => q -= term,
                _ => p += term,
            }
        }
        let chi = ax - 0.25 * std::f64::consts::PI;
        (2.0 / (std::f64::consts::PI * ax)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// First positive zero of `somb` (the first zero of J1): the Airy-disk
/// radius in kernel-argument units.
pub const SOMB_FIRST_ZERO: f64 = 3.831_705_970_207_512;

/// Circular-aperture kernel `somb(x) = 2 J1(x) / x`, with `somb(0) = 1`.
pub fn somb(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1e-6 {
        // 2 J1(x)/x = 1 - x^2/8 + x^4/192 - ...
        1.0 - 0.125 * x * x
    } else {
        2.0 * bessel_j1(x) / x
    }
}

/// Slit kernel `sinc(x) = sin(x) / x`, with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Integral representation J1(x) = (1/pi) int_0^pi cos(t - x sin t) dt,
    /// evaluated with enough Gauss-Legendre panels to be exact at machine
    /// precision for |x| <= 50. Independent oracle for the series/asymptotic
    /// implementation.
    fn j1_by_quadrature(x: f64) -> f64 {
        let f = |t: f64| (t - x * t.sin()).cos();
        crate::optics::quad::gl10_composite_real(0.0, std::f64::consts::PI, 64, f)
            / std::f64::consts::PI
    }

    #[test]
    fn j1_matches_quadrature_oracle_to_1e10() {
        let mut worst = 0.0_f64;
        let mut x = -50.0;
        while x <= 50.0 {
            let err = (bessel_j1(x) - j1_by_quadrature(x)).abs();
            worst = worst.max(err);
            x += 0.37;
        }
        // Probe both sides of the series/asymptotic crossover explicitly.
        for &x in &[13.9, 14.0, 14.1, 14.5, -13.95, -14.05, 49.9, 50.0] {
            let err = (bessel_j1(x) - j1_by_quadrature(x)).abs();
            worst = worst.max(err);
        }
        assert!(worst < 1e-10, "max |J1 - oracle| = {worst:.3e}");
    }

    /// J0(x) = (1/pi) int_0^pi cos(x sin t) dt.
    fn j0_by_quadrature(x: f64) -> f64 {
        let f = |t: f64| (x * t.sin()).cos();
        crate::optics::quad::gl10_composite_real(0.0, std::f64::consts::PI, 64, f)
            / std::f64::consts::PI
    }

    #[test]
    fn j0_matches_quadrature_oracle_to_1e10() {
        let mut worst = 0.0_f64;
        let mut x = -50.0;
        while x <= 50.0 {
            let err = (bessel_j0(x) - j0_by_quadrature(x)).abs();
            worst = worst.max(err);
            x += 0.37;
        }
        for &x in &[13.9, 14.0, 14.1, 14.5, -13.95, -14.05, 49.9, 50.0] {
            let err = (bessel_j0(x) - j0_by_quadrature(x)).abs();
            worst = worst.max(err);
        }
        assert!(worst < 1e-10, "max |J0 - oracle| = {worst:.3e}");
    }

    #[test]
    fn j0_is_even_and_one_at_zero() {
        assert_eq!(bessel_j0(0.0), 1.0);
        for &x in &[0.3, 1.7, 5.2, 20.0] {
            assert_eq!(bessel_j0(-x), bessel_j0(x));
        }
    }

    /// d/dx [x J1(x)] = x J0(x), so int_0^x u J0(u) du = x J1(x). This ties
    /// the two orders together through an identity neither implements.
    #[test]
    fn j0_j1_recurrence_holds() {
        for &x in &[0.8, 3.3, 9.0, 17.5, 33.0] {
            let lhs = crate::optics::quad::gl10_composite_real(0.0, x, 256, |u| u * bessel_j0(u));
            assert!((lhs - x * bessel_j1(x)).abs() < 1e-10, "x = {x}");
        }
    }

    #[test]
    fn j1_is_odd_and_vanishes_at_zero() {
        assert_eq!(bessel_j1(0.0), 0.0);
        for &x in &[0.3, 1.7, 5.2, 20.0] {
            assert!((bessel_j1(-x) + bessel_j1(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn somb_peak_and_parity() {
        assert_eq!(somb(0.0), 1.0);
        assert!((somb(1e-7) - 1.0).abs() < 1e-14);
        for &x in &[0.9, 2.2, 7.7] {
            assert_eq!(somb(x), somb(-x));
        }
    }

    /// First positive zero of somb (equivalently of J1), located by bisection
    /// on this implementation and pinned against the tabulated value.
    #[test]
    fn first_somb_zero_by_bisection() {
        let (mut lo, mut hi) = (3.0_f64, 4.5_f64);
        assert!(somb(lo) > 0.0 && somb(hi) < 0.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if somb(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let zero = 0.5 * (lo + hi);
        assert!((zero - 3.831706).abs() < 1e-5, "first somb zero at {zero}");
        assert!((zero - SOMB_FIRST_ZERO).abs() < 1e-7);
    }

    #[test]
    fn sinc_basics() {
        assert_eq!(sinc(0.0), 1.0);
        assert!((sinc(std::f64::consts::PI)).abs() < 1e-15);
        assert!((sinc(0.5) - 0.5_f64.sin() / 0.5).abs() < 1e-15);
    }
}
