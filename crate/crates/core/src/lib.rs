//! Photon transport between parametrically coupled photonic leads.
//!
//! A sinusoidal pump on the coupling between two photonic transmission
//! lines (directly, or through a harmonic center region) acts as a chemical
//! potential bias `ħω_p`. This crate evaluates the resulting cycle-averaged
//! currents in the weak-coupling limit, splits them into a particle-conserving
//! Landauer part and an anomalous pair-creation part, and checks the result
//! against a brute-force Gaussian time-domain simulation of a discretized
//! version of the same model.
//!
//! Modules, bottom-up:
//! - [`spectra`]: lead bands, densities of states, couplings, Bose occupations.
//! - [`quadrature`]: adaptive Gauss–Kronrod integration.
//! - [`transmission`]: direct and center transmission functions.
//! - [`current`]: three-term currents, golden-rule rates and sweeps.
//! - [`oracle`]: covariance-matrix propagation of the discretized model.
//! - [`cli`]: the batch front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision)]

pub mod cli;
pub mod current;
pub mod oracle;
pub mod quadrature;
pub mod spectra;
pub mod transmission;

pub use current::{breakdown, current_left, current_right, golden_rule_rates, sweep, CurrentBreakdown, CurrentError, SweepAxis, TransportProblem};
pub use spectra::{BathState, Band, CouplingModel, DosModel, LeadSpectrum, PumpDrive, Side};
pub use transmission::{CenterModel, TransmissionKernel};
