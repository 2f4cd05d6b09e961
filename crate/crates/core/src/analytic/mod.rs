//! Closed-form results for a fringe under harmonic phase perturbations.
//!
//! * washout of the time-averaged contrast,
//! * the explicit correlation function as a sum over kernel multiplets and
//!   the approximate (trivial-multiplet) product form,
//! * their discrete line spectra,
//! * bin-size effects, noise propagation and signal-to-noise theory.

mod correlation;
mod discretization;
mod kernel;
mod snr;
mod spectrum;
mod transition;

pub use correlation::{
    default_m_max, g2_approx, g2_approx_amplitude, g2_explicit, g2_explicit_complex, reduced_contrast,
};
pub use discretization::{discretized_amplitude, discretized_contrast, sinc};
pub use kernel::{
    enumerate_kernel, enumerate_kernel_exact, kernel_for_spec, multiplet_weight, superperiod, superperiod_f64,
    KernelEnumeration, KernelOptions, DEFAULT_KERNEL_BUDGET,
};
pub use snr::{noise_theory, snr_theory, NoiseTheory, SnrTheory, SNR_SHAPE_ARGMAX};
pub use spectrum::{amplitude_spectrum_analytic, LineSpectrum, SpectralLine};
pub use transition::{transition_ratio, TRANSITION_THRESHOLD};
