//! Second-order correlation analysis for time-tagged single-particle
//! interference events.
//!
//! The crate covers the whole chain from a perturbed fringe pattern to its
//! reconstruction:
//!
//! * [`model`] holds the shared domain types (fringe, tone list, event set,
//!   correlation grid, spectra).
//! * [`analytic`] evaluates the closed-form washout, explicit and approximate
//!   correlation functions, their line spectra, discretization corrections and
//!   signal-to-noise theory.
//! * [`simulator`] generates seeded Poissonian event streams for tone lists and
//!   Gaussian broad-band perturbations.
//! * [`correlator`] counts event pairs into a `(u, τ)` grid and applies the
//!   edge-corrected normalization.
//! * [`inference`] extracts contrast, periodicity, tone amplitudes, broad-band
//!   parameters and phases, and reconstructs the unperturbed pattern.
//! * [`io`], [`config`] and [`cli`] provide the file formats, scenario presets
//!   and the batch command-line front end.
//!
//! Internally every frequency is an angular frequency in rad/s, lengths are in
//! millimetres and times in seconds. Only the file formats and the CLI speak Hz.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod bessel;
pub mod cli;
pub mod config;
pub mod correlator;
pub mod error;
pub mod fit;
pub mod inference;
pub mod io;
pub mod model;
pub mod simulator;
pub mod units;

pub use error::{Error, Result};
pub use model::{
    AmplitudeSpectrum, CorrelationGrid, Event, EventSet, FringeModel, Multiplet, PerturbationSpec, ToneComponent,
};
