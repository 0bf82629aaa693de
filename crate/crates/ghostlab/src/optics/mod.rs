//! Scalar paraxial optics on sampled transverse planes.
//!
//! Fields are complex envelopes sampled on a regular grid at a fixed
//! wavelength. Propagation between planes is the Fresnel (paraxial) integral;
//! its quadratic phase kernel and the algebraic identities it satisfies live
//! in [`gaussian`]. Two numerical routes are provided for free propagation: a
//! direct quadrature of the diffraction integral and a transform-based
//! convolution, which must agree on well-sampled fields.

mod element;
pub mod format;
mod fresnel;
pub mod gaussian;
mod grid;
pub mod quad;
pub mod special;

pub use element::{apply_element, thin_lens_image_distance, LensImage, OpticalElement, Resampling};
pub use fresnel::{propagate_free, propagate_free_with, PropagationMethod};
pub use gaussian::{gaussian_eval, FresnelGaussian};
pub use grid::{FieldGrid, GridSpec, RealMap, Vec2};

use thiserror::Error;

/// Vacuum speed of light in meters per second (exact by definition).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Errors raised by grid construction, propagation, and element application.
#[derive(Debug, Error)]
pub enum OpticsError {
    /// Grid shape or sampling parameters are unusable.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    /// The requested propagation distance violates the sampling window of the
    /// Fresnel kernel on this grid.
    #[error(
        "propagation distance {z} m fails the sampling criterion on this grid: \
         lambda*z/(extent*pitch) = {ratio:.3e} outside [{lo}, {hi}]"
    )]
    Aliasing { z: f64, ratio: f64, lo: f64, hi: f64 },
    /// An element's sampled map does not cover the field it is applied to.
    #[error("element map (extent {map_extent:?} m) does not cover the field support ({support:?} m)")]
    GridMismatch { map_extent: (f64, f64), support: (f64, f64) },
    /// Object at the focal distance: no finite image plane exists.
    #[error("object distance {s_o} m equals the focal length; image distance diverges")]
    DegenerateImage { s_o: f64 },
    /// A parameter is out of its physical domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// A quadrature lattice is too coarse for the kernel it must resolve.
    #[error("undersampled: {0}")]
    Undersampled(String),
}

pub type Result<T> = std::result::Result<T, OpticsError>;
