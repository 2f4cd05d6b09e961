use crate::bessel::{bessel_j0, bessel_j_table};
use crate::model::{FringeModel, PerturbationSpec};

use super::kernel::KernelEnumeration;

/// Default Bessel truncation `ceil(max φ_j) + 8`.
pub fn default_m_max(spec: &PerturbationSpec) -> u32 {
    spec.max_amplitude().ceil() as u32 + 8
}

/// Time-averaged contrast `K Π J_0(φ_j)`, signed.
///
/// The product form is exact for incommensurate tones; for harmonically
/// related tones with amplitudes above ~1 rad it is the leading term only.
pub fn reduced_contrast(model: &FringeModel, spec: &PerturbationSpec) -> f64 {
    model.contrast * spec.components().iter().map(|c| bessel_j0(c.peak_phase_deviation)).product::<f64>()
}

/// Real and imaginary parts of the explicit multiplet sum, before the
/// `1 + K²/2` wrapping. The imaginary part vanishes for kernels closed under
/// negation.
pub fn g2_explicit_complex(u: f64, tau: f64, model: &FringeModel, kernel: &KernelEnumeration) -> (f64, f64) {
    let k = model.wave_number();
    let (mut re, mut im) = (0.0, 0.0);
    for m in &kernel.multiplets {
        let spatial = m.weight * (k * u + m.spatial_phase).cos();
        let arg = m.frequency_component * tau + m.temporal_phase;
        re += spatial * arg.cos();
        im += spatial * arg.sin();
    }
    (re, im)
}

/// Explicit correlation function summed over a weighted kernel.
///
/// # Panics
/// If the kernel has not been weighted for a spec.
pub fn g2_explicit(u: f64, tau: f64, model: &FringeModel, kernel: &KernelEnumeration) -> f64 {
    assert!(kernel.is_weighted(), "kernel must be weighted with a spec before evaluation");
    let (re, _) = g2_explicit_complex(u, tau, model, kernel);
    1.0 + 0.5 * model.contrast * model.contrast * re
}

/// Temporal amplitude `A(τ) = Π_j (J_0² + 2 Σ_{m=1}^{m_max} J_m² cos(m ω_j τ))`.
pub fn g2_approx_amplitude(tau: f64, spec: &PerturbationSpec, m_max: u32) -> f64 {
    spec.components()
        .iter()
        .map(|c| {
            let j = bessel_j_table(m_max as usize, c.peak_phase_deviation);
            let mut a = j[0] * j[0];
            for (m, jm) in j.iter().enumerate().skip(1) {
                a += 2.0 * jm * jm * (m as f64 * c.frequency * tau).cos();
            }
            a
        })
        .product()
}

/// Approximate correlation function `1 + (K²/2) A(τ) cos(k u)`.
pub fn g2_approx(u: f64, tau: f64, model: &FringeModel, spec: &PerturbationSpec, m_max: u32) -> f64 {
    let a = g2_approx_amplitude(tau, spec, m_max);
    1.0 + 0.5 * model.contrast * model.contrast * a * (model.wave_number() * u).cos()
}
