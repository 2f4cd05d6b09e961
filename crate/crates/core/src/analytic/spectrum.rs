use crate::bessel::bessel_j_table;
use crate::error::{Error, Result};
use crate::model::{FringeModel, PerturbationSpec};

use super::correlation::default_m_max;
use super::kernel::{KernelEnumeration, DEFAULT_KERNEL_BUDGET};

/// One positive-frequency line of an analytic spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralLine {
    /// Angular frequency in rad/s.
    pub omega: f64,
    /// Complex coefficient of `e^{+iωτ}` in `g²(u, τ)`.
    pub coefficient: (f64, f64),
    /// One-sided magnitude with the `±ω` pair folded, `|c(ω)| + |c(−ω)|`.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSpectrum {
    /// Constant term of `g²(u, ·)`, including the uncorrelated 1.
    pub dc: f64,
    pub lines: Vec<SpectralLine>,
    pub u0: f64,
}

impl LineSpectrum {
    pub fn line_near(&self, omega: f64, tol: f64) -> Option<&SpectralLine> {
        self.lines.iter().find(|l| (l.omega - omega).abs() <= tol)
    }
}

/// Discrete line spectrum of `g²(u0, τ)` in τ.
///
/// The explicit form sums the kernel terms coherently per frequency, keeping
/// spatial and temporal phases; the approximate form uses only the
/// trivial multiplets, whose coefficients are `(K²/2) cos(k u0) Π J_{m_j}²`.
/// `kernel` must be weighted for `spec` when `approximate` is false.
pub fn amplitude_spectrum_analytic(
    model: &FringeModel,
    spec: &PerturbationSpec,
    kernel: Option<&KernelEnumeration>,
    u0: f64,
    approximate: bool,
) -> Result<LineSpectrum> {
    let half_k2 = 0.5 * model.contrast * model.contrast;
    let ku = model.wave_number() * u0;
    if spec.is_empty() {
        return Ok(LineSpectrum { dc: 1.0 + half_k2 * ku.cos(), lines: Vec::new(), u0 });
    }
    // (ω, re, im) contributions to the coefficient of e^{iωτ}.
    let mut terms: Vec<(f64, f64, f64)> = Vec::new();
    if approximate {
        let m_max = kernel.map(|k| k.m_max).unwrap_or_else(|| default_m_max(spec));
        let d = spec.len();
        let count = (2 * m_max as u128 + 1).pow(d as u32);
        if count > DEFAULT_KERNEL_BUDGET as u128 {
            return Err(Error::KernelBudget { required: count, budget: DEFAULT_KERNEL_BUDGET });
        }
        let tables: Vec<Vec<f64>> =
            spec.components().iter().map(|c| bessel_j_table(m_max as usize, c.peak_phase_deviation)).collect();
        let freqs = spec.frequencies();
        let m = m_max as i32;
        let mut idx = vec![-m; d];
        loop {
            let mut w = half_k2 * ku.cos();
            let mut omega = 0.0;
            for j in 0..d {
                let v = tables[j][idx[j].unsigned_abs() as usize];
                w *= v * v;
                omega += idx[j] as f64 * freqs[j];
            }
            terms.push((omega, w, 0.0));
            let mut j = 0;
            while j < d {
                idx[j] += 1;
                if idx[j] <= m {
                    break;
                }
                idx[j] = -m;
                j += 1;
            }
            if j == d {
                break;
            }
        }
    } else {
        let kernel = kernel.ok_or_else(|| Error::invalid("explicit spectrum needs a kernel"))?;
        if !kernel.is_weighted() {
            return Err(Error::invalid("kernel must be weighted with the spec"));
        }
        let quarter_k2 = 0.5 * half_k2;
        for m in &kernel.multiplets {
            let a = quarter_k2 * m.weight * (ku + m.spatial_phase).cos();
            let (s, c) = m.temporal_phase.sin_cos();
            // cos(ω_M τ + Φ) = ½ e^{iΦ} e^{iω_M τ} + ½ e^{−iΦ} e^{−iω_M τ}.
            terms.push((m.frequency_component, a * c, a * s));
            terms.push((-m.frequency_component, a * c, -a * s));
        }
    }
    Ok(fold(terms, u0, spec))
}

fn fold(mut terms: Vec<(f64, f64, f64)>, u0: f64, spec: &PerturbationSpec) -> LineSpectrum {
    let scale = spec.frequencies().iter().cloned().fold(1.0, f64::max);
    let tol = 1e-9 * scale;
    terms.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Merge equal frequencies.
    let mut merged: Vec<(f64, f64, f64)> = Vec::new();
    for (w, re, im) in terms {
        match merged.last_mut() {
            Some(last) if (w - last.0).abs() <= tol => {
                last.1 += re;
                last.2 += im;
            }
            _ => merged.push((w, re, im)),
        }
    }
    let mut dc = 1.0;
    let mut positive: Vec<SpectralLine> = Vec::new();
    let find = |w: f64| merged.iter().find(|t| (t.0 + w).abs() <= tol).map(|t| (t.1, t.2)).unwrap_or((0.0, 0.0));
    for &(w, re, im) in &merged {
        if w.abs() <= tol {
            dc += re;
        } else if w > 0.0 {
            let (nre, nim) = find(w);
            positive.push(SpectralLine { omega: w, coefficient: (re, im), magnitude: re.hypot(im) + nre.hypot(nim) });
        }
    }
    positive.retain(|l| l.magnitude > 0.0);
    LineSpectrum { dc, lines: positive, u0 }
}
