//! Numerical models of lens imaging and intensity/photon correlation
//! experiments.
//!
//! The crate is organized around the planes of an optical table:
//!
//! - [`optics`]: scalar paraxial field grids, the Fresnel propagator and its
//!   Gaussian phase algebra, thin lenses, apertures, and phase screens.
//! - [`imaging`]: classical coherent and incoherent imaging through a single
//!   lens, driven by the diffraction-limited point-spread kernel.
//! - [`typeone`]: entangled-pair (biphoton) ghost imaging with the imaging
//!   lens in the source arm and a scanning detector in the reference arm.
//! - [`typetwo`]: chaotic-light intensity correlations, near-field lensless
//!   ghost imaging, and far-field HBT correlation.
//! - [`classical_sim`]: classical look-alike simulations (correlated beam
//!   pairs, relayed speckle) used as controls against the ghost protocols.
//! - [`detection`]: photon-counting event streams, coincidence histograms,
//!   contrast and factorizability analysis.

pub mod classical_sim;
pub mod detection;
pub mod imaging;
pub mod optics;
pub mod typeone;
pub mod typetwo;

pub use optics::{FieldGrid, RealMap, Vec2};
