use std::f64::consts::PI;

use crate::bessel::bessel_j1;
use crate::error::{Error, Result};
use crate::model::{FringeModel, PerturbationSpec};

use super::discretization::sinc;

/// Maximizer of `sin(x)/√x`, the root of `tan x = 2x` in `(0, π/2)`.
pub const SNR_SHAPE_ARGMAX: f64 = 1.165_561_185_207_211;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrTheory {
    /// Prefactor of `sin(kΔu/2)/√(kΔu/2) · sinc(ωΔτ/2)`.
    pub alpha: f64,
    /// Optimal spatial bin size in mm.
    pub du_opt: f64,
    pub snr_opt: f64,
    /// Smallest peak phase deviation with unit SNR at the optimum, in rad.
    pub phi_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseTheory {
    /// Standard deviation of a normalized grid value.
    pub sigma_g2: f64,
    /// Standard deviation of a spectrum magnitude.
    pub sigma_spectrum: f64,
}

fn shape(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x.sin() / x.sqrt()
    }
}

/// Signal-to-noise ratio of the fundamental spectral line and the derived
/// optimum quantities for a single tone.
#[allow(clippy::too_many_arguments)]
pub fn snr_theory(
    model: &FringeModel,
    spec: &PerturbationSpec,
    n: f64,
    acquisition_time: f64,
    acquisition_length: f64,
    tau_max: f64,
    du: f64,
    dtau: f64,
) -> Result<(f64, SnrTheory)> {
    let [tone] = spec.components() else {
        return Err(Error::invalid("signal-to-noise theory is derived for exactly one tone"));
    };
    for (name, v) in [("N", n), ("T", acquisition_time), ("Y", acquisition_length), ("tau_max", tau_max), ("du", du)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
    }
    if !(dtau >= 0.0) {
        return Err(Error::invalid("dtau must be nonnegative"));
    }
    if tau_max > acquisition_time {
        return Err(Error::invalid("tau_max exceeds the acquisition time"));
    }
    let k = model.wave_number();
    let kk = model.contrast * model.contrast;
    let j1 = bessel_j1(tone.peak_phase_deviation);
    // N √(τ_max/T) / √((1 − π/4) 2k Y)
    let beta = n * (tau_max / acquisition_time).sqrt() / ((1.0 - PI / 4.0) * 2.0 * k * acquisition_length).sqrt();
    let alpha = kk * j1 * j1 * beta;
    let snr = alpha * shape(k * du / 2.0) * sinc(tone.frequency * dtau / 2.0);
    let f_max = shape(SNR_SHAPE_ARGMAX);
    let phi_min = if model.contrast > 0.0 { 2.0 / (model.contrast * (beta * f_max).sqrt()) } else { f64::INFINITY };
    Ok((snr, SnrTheory { alpha, du_opt: 2.0 * SNR_SHAPE_ARGMAX / k, snr_opt: alpha * f_max, phi_min }))
}

/// Noise of a normalized grid value, `σ²_g = TY/(N²ΔτΔu)`, and of a spectrum
/// magnitude, `σ²_F = (1 − π/4) σ²_g Δτ/τ_max`.
pub fn noise_theory(
    n: f64,
    acquisition_time: f64,
    acquisition_length: f64,
    du: f64,
    dtau: f64,
    tau_max: f64,
) -> Result<NoiseTheory> {
    for (name, v) in
        [("N", n), ("T", acquisition_time), ("Y", acquisition_length), ("du", du), ("dtau", dtau), ("tau_max", tau_max)]
    {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
    }
    let var_g = acquisition_time * acquisition_length / (n * n * dtau * du);
    let var_f = (1.0 - PI / 4.0) * var_g * dtau / tau_max;
    Ok(NoiseTheory { sigma_g2: var_g.sqrt(), sigma_spectrum: var_f.sqrt() })
}
