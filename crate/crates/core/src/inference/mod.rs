//! Parameter extraction from correlation grids and event sets.

mod fringe;
mod noise_fit;
mod reconstruct;
mod spectrum;

pub use fringe::{
    fit_cosine, fit_fringe_at_tau0, fit_fringe_row, fit_histogram_fringe, histogram_contrast, CosineFit, FringeFit,
    HistogramContrast,
};
pub use noise_fit::{
    broadband_amplitude, estimate_band_center, fit_gaussian_noise, spectrum_product, theoretical_g2_from_spectrum,
    GaussianNoiseFit, NoiseFitOptions,
};
pub use reconstruct::{phase_family, phase_search, reconstruct, PhaseSearchOptions, PhaseSearchResult};
pub use spectrum::{invert_tone_amplitude, noise_floor, temporal_spectrum, ToneInversion};
