//! The Fresnel Gaussian phase factor and its algebra.
//!
//! Paraxial propagation is built from the unit-modulus chirp
//! `G(|alpha|, beta) = exp(i (beta/2) |alpha|^2)` with transverse 2-vector
//! `alpha` and curvature parameter `beta` (for free propagation over `z`,
//! `beta = omega / (c z)`). Everything the propagator needs follows from four
//! properties of `G`:
//!
//! 1. conjugation flips the curvature: `G*(a, b) = G(a, -b)`;
//! 2. curvatures add: `G(a, b1 + b2) = G(a, b1) G(a, b2)`;
//! 3. arguments add up to a cross term:
//!    `G(|a1 + a2|, b) = G(a1, b) G(a2, b) exp(i b a1.a2)`;
//! 4. its Fourier transform is again a Gaussian:
//!    `int d^2a G(a, b) exp(i g.a) = i (2 pi / b) G(|g|, -1/b)`.
//!
//! Identities 1-3 are pointwise algebra; identity 4 fixes the normalization
//! `-i omega / (2 pi c z)` of the free propagator (see `fresnel`), because it
//! forces two chained propagations to compose into one.

use num_complex::Complex64;

use super::Vec2;

/// Quadratic phase factor `exp(i (beta/2) |alpha|^2)`.
#[derive(Debug, Clone, Copy)]
pub struct FresnelGaussian {
    pub alpha: Vec2,
    pub beta: f64,
}

impl FresnelGaussian {
    pub fn new(alpha: Vec2, beta: f64) -> FresnelGaussian {
        FresnelGaussian { alpha, beta }
    }

    /// Unit-modulus value of the phase factor.
    pub fn eval(&self) -> Complex64 {
        gaussian_eval(self.alpha, self.beta)
    }
}

/// `exp(i (beta/2) |alpha|^2)`.
pub fn gaussian_eval(alpha: Vec2, beta: f64) -> Complex64 {
    Complex64::from_polar(1.0, 0.5 * beta * alpha.norm_sq())
}

/// Closed form of the transverse Fourier transform of `G`:
/// `i (2 pi / beta) G(|gamma|, -1/beta)`.
pub fn gaussian_fourier_closed_form(gamma: Vec2, beta: f64) -> Complex64 {
    Complex64::new(0.0, 2.0 * std::f64::consts::PI / beta) * gaussian_eval(gamma, -1.0 / beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol * a.norm().max(b.norm()).max(1.0)
    }

    /// Identities 1-3 hold pointwise at randomized arguments.
    #[test]
    fn pointwise_identities_hold_at_random_inputs() {
        let mut rng = ChaCha12Rng::seed_from_u64(0x47_4c_46);
        for _ in 0..1000 {
            let a1 = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let a2 = Vec2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let b1: f64 = rng.gen_range(-4.0..4.0);
            let b2: f64 = rng.gen_range(-4.0..4.0);

            // conjugation
            assert!(close(gaussian_eval(a1, b1).conj(), gaussian_eval(a1, -b1), 1e-12));

            // curvature additivity
            assert!(close(
                gaussian_eval(a1, b1 + b2),
                gaussian_eval(a1, b1) * gaussian_eval(a1, b2),
                1e-12
            ));

            // argument additivity with cross term
            let cross = Complex64::from_polar(1.0, b1 * a1.dot(a2));
            assert!(close(
                gaussian_eval(a1 + a2, b1),
                gaussian_eval(a1, b1) * gaussian_eval(a2, b1) * cross,
                1e-12
            ));
        }
    }

    /// Identity 4 checked by numerical quadrature of the 2-D transform.
    ///
    /// The plane integral factorizes into two 1-D chirp integrals
    /// `int exp(i (b/2) u^2 + i g u) du`, each evaluated by oscillatory
    /// quadrature with asymptotic tail corrections (`optics::quad`).
    #[test]
    fn fourier_identity_matches_quadrature() {
        let mut rng = ChaCha12Rng::seed_from_u64(0x47_4c_47);
        for _ in 0..8 {
            let beta: f64 = rng.gen_range(0.3..3.0);
            let gamma = Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));

            let ix = crate::optics::quad::chirp_line_integral(0.5 * beta, gamma.x);
            let iy = crate::optics::quad::chirp_line_integral(0.5 * beta, gamma.y);
            let numeric = ix * iy;

            let closed = gaussian_fourier_closed_form(gamma, beta);
            assert!(
                close(numeric, closed, 1e-6),
                "beta={beta} gamma=({}, {}): quadrature {numeric} vs closed form {closed}",
                gamma.x,
                gamma.y
            );
        }
    }
}
