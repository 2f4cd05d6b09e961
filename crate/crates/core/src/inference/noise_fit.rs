use gauss_quad::GaussLegendre;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::bessel::{bessel_j0, bessel_j1, bessel_j_table};
use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::model::{AmplitudeSpectrum, CorrelationGrid};
use crate::units::TWO_PI;

use super::FringeFit;

/// Per-line amplitudes below this use only the `J₀² + 2J₁² cos` factor.
const SMALL_LINE: f64 = 0.05;
/// Lines weaker than this leave the product unchanged to double precision.
const NEGLIGIBLE_LINE: f64 = 1e-9;

/// Gaussian line amplitude `φ0 exp(−½((ω − ω0)/σ)²)`.
pub fn broadband_amplitude(phi0: f64, omega0: f64, sigma_omega: f64, omega: f64) -> f64 {
    let z = (omega - omega0) / sigma_omega;
    phi0 * (-0.5 * z * z).exp()
}

/// Per-line factor `J₀(a)² + 2Σ_m J_m(a)² cos(mθ)` as a function of `cos θ`.
enum LineFactor {
    Skip,
    /// `A + B cos θ` for weak lines.
    FirstOrder(f64, f64),
    /// `J_0² … J_M²` for the full sum.
    Full(Vec<f64>),
}

impl LineFactor {
    fn new(amplitude: f64) -> Self {
        let a = amplitude.abs();
        if a < NEGLIGIBLE_LINE {
            LineFactor::Skip
        } else if a < SMALL_LINE {
            let (j0, j1) = (bessel_j0(a), bessel_j1(a));
            LineFactor::FirstOrder(j0 * j0, 2.0 * j1 * j1)
        } else {
            let j = bessel_j_table(a.ceil() as usize + 8, a);
            LineFactor::Full(j.iter().map(|v| v * v).collect())
        }
    }

    fn eval(&self, c: f64) -> f64 {
        match self {
            LineFactor::Skip => 1.0,
            LineFactor::FirstOrder(a, b) => a + b * c,
            LineFactor::Full(j2) => {
                // cos(mθ) by the Chebyshev recurrence.
                let (mut prev, mut cur) = (1.0, c);
                let mut f = j2[0];
                for jm in &j2[1..] {
                    f += 2.0 * jm * cur;
                    let next = 2.0 * c * cur - prev;
                    prev = cur;
                    cur = next;
                }
                f
            }
        }
    }
}

/// Running product kept as `mantissa · e^{log_scale}` to avoid underflow.
#[derive(Clone, Copy)]
struct ScaledProduct {
    mantissa: f64,
    log_scale: f64,
}

impl ScaledProduct {
    const ONE: Self = Self { mantissa: 1.0, log_scale: 0.0 };

    fn mul(&mut self, f: f64) {
        self.mantissa *= f;
        let m = self.mantissa.abs();
        if m != 0.0 && !(1e-200..=1e200).contains(&m) {
            self.log_scale += m.ln();
            self.mantissa = self.mantissa.signum();
        }
    }

    fn value(self) -> f64 {
        self.mantissa * self.log_scale.exp()
    }
}

/// Product over a uniform line grid `ω_j = ω_min + j·δω` at time `tau`,
/// generating `cos(ω_j τ)` by rotation.
fn uniform_grid_product(omega_min: f64, resolution: f64, factors: &[LineFactor], tau: f64) -> f64 {
    let step = Complex64::from_polar(1.0, resolution * tau);
    let mut z = Complex64::from_polar(1.0, omega_min * tau);
    let mut acc = ScaledProduct::ONE;
    for (j, f) in factors.iter().enumerate() {
        if j % 1024 == 0 && j > 0 {
            z = Complex64::from_polar(1.0, (omega_min + j as f64 * resolution) * tau);
        }
        if !matches!(f, LineFactor::Skip) {
            acc.mul(f.eval(z.re));
        }
        z *= step;
    }
    acc.value()
}

/// Approximate-solution amplitude `Π_j (J₀(a_j)² + 2Σ_m J_m(a_j)² cos(mω_jτ))`
/// over a discrete line spectrum.
pub fn spectrum_product(frequencies: &[f64], amplitudes: &[f64], taus: &[f64]) -> Result<Vec<f64>> {
    if frequencies.len() != amplitudes.len() {
        return Err(Error::invalid("line frequencies and amplitudes differ in length"));
    }
    let factors: Vec<LineFactor> = amplitudes.iter().map(|&a| LineFactor::new(a)).collect();
    Ok(taus
        .par_iter()
        .map(|&t| {
            let mut acc = ScaledProduct::ONE;
            for (f, &w) in factors.iter().zip(frequencies) {
                if !matches!(f, LineFactor::Skip) {
                    acc.mul(f.eval((w * t).cos()));
                }
            }
            acc.value()
        })
        .collect())
}

/// Bin-averaged line product over the τ-bins `(iΔτ, (i+1)Δτ]` by
/// Gauss–Legendre quadrature.
struct BinnedProduct {
    omega_min: f64,
    resolution: f64,
    n_lines: usize,
    /// Per bin: quadrature nodes in τ with weights summing to one.
    nodes: Vec<Vec<(f64, f64)>>,
}

impl BinnedProduct {
    fn new(omega_min: f64, resolution: f64, n_lines: usize, dtau: f64, n_bins: usize, n_nodes: usize) -> Result<Self> {
        let nodes = bin_nodes(dtau, n_bins, n_nodes)?;
        Ok(Self { omega_min, resolution, n_lines, nodes })
    }

    fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_lines).map(|j| self.omega_min + j as f64 * self.resolution)
    }

    fn product(&self, amplitudes: &[f64]) -> Vec<f64> {
        let factors: Vec<LineFactor> = amplitudes.iter().map(|&a| LineFactor::new(a)).collect();
        self.nodes
            .par_iter()
            .map(|bin| {
                bin.iter().map(|&(t, w)| w * uniform_grid_product(self.omega_min, self.resolution, &factors, t)).sum()
            })
            .collect()
    }
}

/// Gauss–Legendre nodes and weights (summing to one) for each τ-bin.
fn bin_nodes(dtau: f64, n_bins: usize, n_nodes: usize) -> Result<Vec<Vec<(f64, f64)>>> {
    let rule = GaussLegendre::new(n_nodes.max(2)).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((0..n_bins)
        .map(|i| {
            let lo = i as f64 * dtau;
            rule.iter().map(|(x, w)| (lo + 0.5 * dtau * (1.0 + x), 0.5 * w)).collect()
        })
        .collect())
}

/// `g²(u, τ) = 1 + (K²/2) cos(2πu/λ) · Π_j(...)` on the geometry of
/// `template`; all bins are marked valid and counts are left at zero.
/// With `tau_nodes == 0` the product is taken at bin centres, otherwise it is
/// averaged over each bin (and the zero row over `(0, Δτ/2]`) with that many
/// Gauss–Legendre nodes.
pub fn theoretical_g2_from_spectrum(
    contrast: f64,
    period: f64,
    frequencies: &[f64],
    amplitudes: &[f64],
    template: &CorrelationGrid,
    tau_nodes: usize,
) -> Result<CorrelationGrid> {
    if !(period > 0.0) {
        return Err(Error::invalid("period must be positive"));
    }
    let averaged = |dtau: f64, n_bins: usize| -> Result<Vec<f64>> {
        let nodes = bin_nodes(dtau, n_bins, tau_nodes)?;
        let flat: Vec<f64> = nodes.iter().flatten().map(|&(t, _)| t).collect();
        let values = spectrum_product(frequencies, amplitudes, &flat)?;
        let mut it = values.into_iter();
        Ok(nodes.iter().map(|bin| bin.iter().map(|&(_, w)| w * it.next().unwrap_or(0.0)).sum()).collect())
    };
    let (product, zero) = if tau_nodes == 0 {
        (spectrum_product(frequencies, amplitudes, &template.tau_centers())?, 1.0)
    } else {
        (averaged(template.dtau, template.n_tau)?, averaged(0.5 * template.dtau, 1)?[0])
    };
    let mut grid = CorrelationGrid::empty(
        template.n_u,
        template.n_tau,
        template.du,
        template.dtau,
        template.n_events,
        template.acquisition_time,
        template.acquisition_length,
    );
    let k = TWO_PI / period;
    for iu in 0..grid.n_u {
        let c = 0.5 * contrast * contrast * (k * grid.u_center(iu)).cos();
        for (it, p) in product.iter().enumerate() {
            let i = grid.index(iu, it);
            grid.values[i] = 1.0 + c * p;
            grid.valid[i] = true;
        }
    }
    grid.zero_values =
        Some((0..grid.n_u).map(|iu| 1.0 + 0.5 * contrast * contrast * zero * (k * grid.u_center(iu)).cos()).collect());
    Ok(grid)
}

/// Fitted Gaussian broad-band parameters (angular frequencies in rad/s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianNoiseFit {
    pub phi0: f64,
    pub phi0_se: f64,
    pub omega0: f64,
    pub omega0_se: f64,
    pub sigma_omega: f64,
    pub sigma_omega_se: f64,
    /// Residual sum of squares.
    pub rss: f64,
    pub n_residuals: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseFitOptions {
    pub lm: LmOptions,
    /// Only τ-bins with centre at or below this are fitted.
    pub tau_limit: Option<f64>,
    /// Gauss–Legendre nodes per τ-bin for the bin average of the model.
    pub tau_nodes: usize,
    /// When the fringe came from the zero row, divide its `K²` by the model
    /// average over `(0, Δτ/2]` and refit until that average settles.
    pub zero_bin_correction: bool,
}

impl Default for NoiseFitOptions {
    fn default() -> Self {
        Self { lm: LmOptions::default(), tau_limit: None, tau_nodes: 8, zero_bin_correction: true }
    }
}

/// Frequency of the largest spectrum magnitude inside `[omega_min,
/// omega_max]`; a starting value for the band centre.
pub fn estimate_band_center(spectrum: &AmplitudeSpectrum, omega_min: f64, omega_max: f64) -> Result<f64> {
    spectrum
        .frequencies
        .iter()
        .zip(&spectrum.magnitudes)
        .filter(|(w, _)| **w >= omega_min && **w <= omega_max)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(&w, _)| w)
        .ok_or_else(|| Error::invalid("no spectrum bins inside the band"))
}

/// Least-squares fit of the Gaussian-band approximate solution to the valid
/// bins of `grid`, with the fringe parameters held fixed.
///
/// `init` is `(φ0, ω0, σ_ω)`; `band` is `(ω_min, ω_max, resolution)` of the
/// line grid the model is evaluated on.
pub fn fit_gaussian_noise(
    grid: &CorrelationGrid,
    fringe: &FringeFit,
    init: (f64, f64, f64),
    band: (f64, f64, f64),
    opts: &NoiseFitOptions,
) -> Result<GaussianNoiseFit> {
    let (omega_min, omega_max, resolution) = band;
    if !(resolution > 0.0 && omega_min >= 0.0 && omega_max > omega_min) {
        return Err(Error::invalid("band needs 0 ≤ ω_min < ω_max and a positive resolution"));
    }
    if !(init.2 > 0.0) {
        return Err(Error::invalid("initial band width must be positive"));
    }
    let n_lines = ((omega_max - omega_min) / resolution + 1e-9).floor() as usize + 1;
    let tau_limit = opts.tau_limit.unwrap_or(f64::INFINITY);
    let taus: Vec<f64> = grid.tau_centers().into_iter().filter(|&t| t <= tau_limit).collect();
    if taus.is_empty() {
        return Err(Error::invalid("no τ-bins inside the fit range"));
    }
    let k = TWO_PI / fringe.period_g2;
    let mut cells: Vec<(usize, f64, f64)> = Vec::new();
    for iu in 0..grid.n_u {
        let spatial = (k * grid.u_center(iu) + fringe.phase_offset).cos();
        for it in 0..taus.len() {
            if grid.is_valid(iu, it) {
                cells.push((it, spatial, grid.value(iu, it)));
            }
        }
    }
    if cells.len() < 4 {
        return Err(Error::invalid("too few valid bins for a noise fit"));
    }
    let table = BinnedProduct::new(omega_min, resolution, n_lines, grid.dtau, taus.len(), opts.tau_nodes)?;
    let zero_bin = BinnedProduct::new(omega_min, resolution, n_lines, 0.5 * grid.dtau, 1, opts.tau_nodes)?;
    let amplitudes = |p: &[f64]| -> Vec<f64> {
        let sigma = p[2].abs().max(1e-12);
        table.frequencies().map(|w| broadband_amplitude(p[0], p[1], sigma, w)).collect()
    };
    let baseline = fringe.baseline;
    let k2 = fringe.contrast_g2 * fringe.contrast_g2;
    let passes = if fringe.used_zero_row && opts.zero_bin_correction { 4 } else { 1 };
    let mut zero_avg = 1.0;
    let mut start = [init.0, init.1, init.2];
    let mut lm = None;
    for _ in 0..passes {
        let half_k2 = 0.5 * k2 / zero_avg;
        let residuals = |p: &[f64], r: &mut [f64]| {
            let prod = table.product(&amplitudes(p));
            for (ri, &(it, spatial, v)) in r.iter_mut().zip(&cells) {
                *ri = baseline + half_k2 * spatial * prod[it] - v;
            }
        };
        let result = levenberg_marquardt(&residuals, cells.len(), &start, &opts.lm)?;
        if !result.converged {
            return Err(Error::numerical(format!(
                "noise fit did not converge after {} iterations (rss {})",
                result.iterations, result.rss
            )));
        }
        start.copy_from_slice(&result.params);
        let next = zero_bin.product(&amplitudes(&result.params))[0];
        let settled = (next - zero_avg).abs() < 1e-6;
        lm = Some(result);
        if passes == 1 || settled || !(next > 0.0) {
            break;
        }
        zero_avg = next;
    }
    let lm = lm.expect("at least one pass");
    Ok(GaussianNoiseFit {
        phi0: lm.params[0].abs(),
        phi0_se: lm.std_errors[0],
        omega0: lm.params[1],
        omega0_se: lm.std_errors[1],
        sigma_omega: lm.params[2].abs(),
        sigma_omega_se: lm.std_errors[2],
        rss: lm.rss,
        n_residuals: cells.len(),
        iterations: lm.iterations,
    })
}
