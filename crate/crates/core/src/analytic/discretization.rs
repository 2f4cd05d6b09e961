use crate::bessel::bessel_j_table;
use crate::error::{Error, Result};
use crate::model::{FringeModel, PerturbationSpec};

use super::correlation::default_m_max;

/// `sin(x)/x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn single_tone(spec: &PerturbationSpec) -> Result<(f64, f64)> {
    match spec.components() {
        [c] => Ok((c.frequency, c.peak_phase_deviation)),
        _ => Err(Error::invalid("bin-size corrections are derived for exactly one tone")),
    }
}

/// Bin-averaged temporal amplitude
/// `A(τ)_Δτ = Σ_m J_m(φ)² sinc(m ω Δτ/2) cos(m ω τ)` for a single tone.
pub fn discretized_amplitude(spec: &PerturbationSpec, tau: f64, dtau: f64) -> Result<f64> {
    let (omega, phi) = single_tone(spec)?;
    let j = bessel_j_table(default_m_max(spec) as usize, phi);
    let mut a = j[0] * j[0];
    for (m, jm) in j.iter().enumerate().skip(1) {
        let mw = m as f64 * omega;
        a += 2.0 * jm * jm * sinc(mw * dtau / 2.0) * (mw * tau).cos();
    }
    Ok(a)
}

/// Contrast extracted from a `τ = 0` bin of size `Δu x Δτ`:
/// `K sqrt(|A(0)_Δτ sinc(kΔu/2)|)`.
pub fn discretized_contrast(model: &FringeModel, spec: &PerturbationSpec, du: f64, dtau: f64) -> Result<f64> {
    if !(du >= 0.0 && dtau >= 0.0) {
        return Err(Error::invalid("bin sizes must be nonnegative"));
    }
    let a0 = discretized_amplitude(spec, 0.0, dtau)?;
    let s = sinc(model.wave_number() * du / 2.0);
    Ok(model.contrast * (a0 * s).abs().sqrt())
}
