//! Convolutional approximate message passing (CAMP) for compressed sensing.
//!
//! The crate is split along the recovery pipeline:
//!
//! * [`model`] builds sensing ensembles, signals and noisy measurements.
//! * [`spectral`] holds moment sequences, the η-transform and the tap
//!   coefficients that drive the convolutional Onsager correction.
//! * [`denoise`] provides soft thresholding and its divergence.
//! * [`solvers`] runs CAMP, AMP and an LMMSE-based OAMP/VAMP baseline.
//! * [`diagnostics`] checks the error-model identities and the Gaussianity
//!   of the pre-thresholding error.
//! * [`bench`] is the seeded, reproducible condition-number sweep harness.

pub mod bench;
pub mod denoise;
pub mod diagnostics;
pub mod model;
pub mod solvers;
pub mod spectral;

pub use denoise::{Denoiser, ThresholdSchedule};
pub use model::{EnsembleKind, Measurement, SensingEnsemble, SignalPrior};
pub use solvers::{Algorithm, RunStatus, SolverConfig, SolverTrajectory};
pub use spectral::{SpectralProfile, SpectrumKind, TapTable};
