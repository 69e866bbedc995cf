//! Adaptive quantum homodyne tomography.
//!
//! This crate simulates balanced homodyne detection of single-mode states
//! (coherent, squeezed vacuum, Fock, even cat) and estimates observables and
//! density-matrix elements directly from the quadrature data by averaging
//! estimator kernels. On top of the plain kernel average it implements an
//! adaptive variance-reduction step: families of *null functions* — functions
//! whose tomographic average vanishes for every state — are added to the
//! kernel with weights chosen by solving a small Hermitian linear system, so
//! the estimate keeps its mean while its statistical error shrinks.
//!
//! Modules:
//! - [`states`]: state specifications, Fock amplitudes, moments, quadrature
//!   distributions.
//! - [`homodyne`]: quadrature sampling, dataset generation and (de)serialization.
//! - [`nullfns`]: the three monomial null-function families.
//! - [`kernels`]: estimator kernels (moment kernels, matrix-element pattern
//!   kernels) and kernel expressions with null-function corrections.
//! - [`adapt`]: the variance-reduction machinery (A, b, c estimation, the
//!   solve, gamma scans).
//! - [`stats`]: kernel averaging over datasets, block errors, histograms.
//! - [`integrate`]: quadrature grids used by the exact (non-Monte-Carlo)
//!   code paths and by tests.

pub mod adapt;
pub mod error;
pub mod homodyne;
pub mod integrate;
pub mod kernels;
pub mod nullfns;
pub mod states;
pub mod stats;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
