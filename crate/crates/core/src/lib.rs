//! Simulation and analysis of qubit readout by a switching detector.
//!
//! A detector that switches irreversibly at a rate depending on the qubit
//! state acts on the qubit through conditional, non-unitary propagators. This
//! crate computes those propagators exactly, extracts the measurement basis
//! and fidelity implied by each detector record, samples switching
//! trajectories, reconstructs qubit states from switching-time histograms and
//! generates S-curves for strong, weak-incoherent and weak-coherent detectors.

pub mod analysis;
pub mod coherent;
pub mod detector;
pub mod error;
pub mod qmatrix;
pub mod quad;
pub mod scurves;
pub mod tol;
pub mod tomography;
pub mod trajectory;

pub use error::{Error, Result};
pub use qmatrix::{Complex, DensityMatrix, Mat2, PureState};
pub use detector::DetectorParams;
