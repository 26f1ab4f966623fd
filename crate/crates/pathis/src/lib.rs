//! Limited-view photoacoustic tomography toolkit.
//!
//! In photoacoustic tomography a short laser pulse deposits energy in tissue,
//! the heated structures emit an acoustic wave, and ultrasound sensors on an
//! arc record pressure time series. Reconstruction recovers the initial
//! pressure image from those traces. When the arc covers only part of the
//! circle the inverse problem loses data and classical methods degrade; this
//! crate exists to study that regime.
//!
//! Provided pieces:
//!
//! - acquisition geometry and deterministic RNG (`geometry`, `rng`)
//! - a matrix-free analytic forward operator with an exact adjoint (`forward`)
//! - an FDTD wave simulator for generating data that does not share the
//!   reconstruction operator's discretization (`wave`)
//! - reconstruction methods: universal back projection, time reversal,
//!   TV-regularized model-based iteration, and a self-supervised neural
//!   field trained through the forward operator (`recon`, `inr`)
//! - image quality metrics and phantom generators (`metrics`, `phantoms`)
//! - file formats for images and sensor data (`io`)
//!
//! Data-parallel loops run on rayon when the default `parallel` feature is
//! enabled and fall back to plain iteration without it. Both paths split
//! work at the same fixed chunk boundaries and merge partial results in
//! chunk order, so results are bitwise identical regardless of feature or
//! thread count.

pub mod error;
pub mod exec;
pub mod forward;
pub mod geometry;
pub mod image;
pub mod inr;
pub mod io;
pub mod metrics;
pub mod phantoms;
pub mod recon;
pub mod rng;
pub mod wave;

pub use error::{Error, Result};
