//! Training reservoir networks with output feedback while tracking their
//! stability through eigenvalue spectra of the time-unrolled dynamics.
//!
//! A reservoir whose readout is fed back into the network is a closed loop,
//! which makes its linearization during training awkward: the feedback changes
//! every step. Breaking the loop replaces the instantaneous feedback with the
//! readout of an earlier state, so each step becomes an open-loop system whose
//! Jacobian can be diagonalized. As training converges, the spectral circle of
//! that Jacobian shrinks.
//!
//! * [`dynamics`]: network construction and Euler integration
//!   (closed-loop, per-step unrolled, integrated unrolled).
//! * [`training`]: exact-fit readout updates for fixed-point targets and
//!   FORCE/RLS for time-varying targets.
//! * [`spectra`]: Jacobians, dense eigenvalue spectra, radii and spectrum
//!   distances.
//! * [`pca`]: cross-correlation PCA of firing rates.
//! * [`experiment`]: the end-to-end experiments and their CSV/JSON artifacts.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod pca;
pub mod spectra;
pub mod training;

pub use error::{Error, Result};
