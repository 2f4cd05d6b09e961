use rustfft::{num_complex::Complex, FftPlanner};

use crate::analytic::sinc;
use crate::bessel::{bessel_j1, J1_FIRST_MAX, J1_FIRST_MAX_ARG};
use crate::error::{Error, Result};
use crate::fit::bisect;
use crate::model::{AmplitudeSpectrum, CorrelationGrid};
use crate::units::TWO_PI;

/// One-sided amplitude spectrum of the `g²` τ-series in the u-bin holding
/// `u0`, normalized by the number of τ-bins (rectangular window).
pub fn temporal_spectrum(grid: &CorrelationGrid, u0: f64) -> Result<AmplitudeSpectrum> {
    let iu = grid.u_bin(u0).ok_or_else(|| Error::invalid(format!("u0 = {u0} mm is outside the grid")))?;
    if (0..grid.n_tau).any(|it| !grid.is_valid(iu, it)) {
        return Err(Error::invalid(format!("τ-series at u0 = {u0} mm contains invalid bins")));
    }
    let n = grid.n_tau;
    let mut buf: Vec<Complex<f64>> = grid.tau_row(iu).iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2 + 1;
    let resolution = TWO_PI / grid.tau_max;
    Ok(AmplitudeSpectrum {
        frequencies: (0..half).map(|k| k as f64 * resolution).collect(),
        magnitudes: buf[..half].iter().map(|c| c.norm() / n as f64).collect(),
        u0: grid.u_center(iu),
        frequency_resolution: resolution,
    })
}

/// Result of inverting a fundamental line height for the peak phase
/// deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneInversion {
    /// Solution on the principal branch `(0, 1.8412)`.
    pub phi: f64,
    /// Further solutions on later lobes of `J₁²` (up to `4π`).
    pub alternatives: Vec<f64>,
}

impl ToneInversion {
    pub fn is_ambiguous(&self) -> bool {
        !self.alternatives.is_empty()
    }
}

/// Solves `(K²/2)·J₁(φ)²·sinc(kΔu/2)·sinc(ω₁Δτ/2) = line_height` for `φ`.
pub fn invert_tone_amplitude(
    line_height: f64,
    contrast: f64,
    omega1: f64,
    du: f64,
    dtau: f64,
    period: f64,
) -> Result<ToneInversion> {
    if !(line_height >= 0.0) {
        return Err(Error::invalid("line height must be nonnegative"));
    }
    if !(contrast > 0.0 && omega1 > 0.0 && du >= 0.0 && dtau >= 0.0 && period > 0.0) {
        return Err(Error::invalid("contrast, frequency and period must be positive, steps nonnegative"));
    }
    if line_height == 0.0 {
        return Ok(ToneInversion { phi: 0.0, alternatives: Vec::new() });
    }
    let k = TWO_PI / period;
    let factor = 0.5 * contrast * contrast * sinc(k * du / 2.0) * sinc(omega1 * dtau / 2.0);
    if factor <= 0.0 {
        return Err(Error::numerical("discretization factor is not positive; line carries no tone information"));
    }
    let target = (line_height / factor).sqrt();
    if target > J1_FIRST_MAX {
        return Err(Error::numerical(format!(
            "line height {line_height} exceeds the maximum (K²/2)J₁² after discretization correction"
        )));
    }
    let phi = bisect(&|x| bessel_j1(x) - target, 0.0, J1_FIRST_MAX_ARG, 1e-14)?;
    let g = |x: f64| bessel_j1(x).abs() - target;
    let mut alternatives = Vec::new();
    let upper = 4.0 * std::f64::consts::PI;
    let steps = 4000;
    let mut a = J1_FIRST_MAX_ARG;
    let mut fa = g(a);
    for s in 1..=steps {
        let b = J1_FIRST_MAX_ARG + (upper - J1_FIRST_MAX_ARG) * s as f64 / steps as f64;
        let fb = g(b);
        if fa.signum() != fb.signum() && fa != 0.0 {
            alternatives.push(bisect(&g, a, b, 1e-12)?);
        }
        a = b;
        fa = fb;
    }
    Ok(ToneInversion { phi, alternatives })
}

/// Standard deviation of the spectrum magnitudes outside the DC bin and the
/// given `(low, high)` bands in rad/s.
pub fn noise_floor(spectrum: &AmplitudeSpectrum, exclusion: &[(f64, f64)]) -> Result<f64> {
    let kept: Vec<f64> = spectrum
        .frequencies
        .iter()
        .zip(&spectrum.magnitudes)
        .skip(1)
        .filter(|(w, _)| !exclusion.iter().any(|&(lo, hi)| **w >= lo && **w <= hi))
        .map(|(_, &m)| m)
        .collect();
    if kept.len() < 2 {
        return Err(Error::invalid("no spectrum bins remain after exclusions"));
    }
    let n = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / n;
    Ok((kept.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}
