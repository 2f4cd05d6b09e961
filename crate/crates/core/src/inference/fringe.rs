use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::analytic::sinc;
use crate::correlator::MIN_EDGE_CORRECTION;
use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, linear_least_squares, LmOptions};
use crate::model::{CorrelationGrid, EventSet};
use crate::units::{wrap_phase, TWO_PI};

/// `baseline + amplitude · cos(k x + phase)` fitted to samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineFit {
    pub baseline: f64,
    pub amplitude: f64,
    pub k: f64,
    pub phase: f64,
    pub baseline_se: f64,
    pub amplitude_se: f64,
    pub k_se: f64,
    pub phase_se: f64,
    pub rss: f64,
    pub n_points: usize,
    /// Amplitude is indistinguishable from the largest noise fluctuation
    /// expected over the scanned wave numbers.
    pub below_noise_floor: bool,
    pub converged: bool,
}

fn linear_at(xs: &[f64], ys: &[f64], k: f64) -> Result<(Vec<f64>, f64)> {
    let design = DMatrix::from_fn(xs.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => (k * xs[i]).cos(),
        _ => (k * xs[i]).sin(),
    });
    let (beta, _, rss) = linear_least_squares(&design, ys)?;
    Ok((beta, rss))
}

/// Fits a cosine with free wave number in `[k_min, k_max]`: a grid scan of
/// linear fits picks the start, Levenberg–Marquardt refines all four
/// parameters.
pub fn fit_cosine(xs: &[f64], ys: &[f64], k_min: f64, k_max: f64) -> Result<CosineFit> {
    fit_cosine_with(xs, ys, k_min, k_max, xs.len(), None)
}

/// [`fit_cosine`] for data holding only `independent` distinct samples (a
/// mirrored row repeats each value), which sets the noise level and the
/// standard errors. A known per-point noise level bounds the residual
/// estimate from below in the detection test.
fn fit_cosine_with(
    xs: &[f64],
    ys: &[f64],
    k_min: f64,
    k_max: f64,
    independent: usize,
    known_sigma: Option<f64>,
) -> Result<CosineFit> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::invalid("abscissa and data differ in length"));
    }
    if n < 5 {
        return Err(Error::invalid("a cosine fit needs at least five points"));
    }
    if !(0.0 < k_min && k_min < k_max) {
        return Err(Error::invalid("wave-number range must satisfy 0 < k_min < k_max"));
    }
    let span = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
    if !(span > 0.0) {
        return Err(Error::invalid("sample positions do not span a range"));
    }
    let resolution = TWO_PI / span;
    let n_scan = (((k_max - k_min) / resolution) * 8.0).ceil().max(64.0) as usize;
    let mut best = (f64::INFINITY, k_min, vec![0.0; 3]);
    for s in 0..=n_scan {
        let k = k_min + (k_max - k_min) * s as f64 / n_scan as f64;
        let (beta, rss) = linear_at(xs, ys, k)?;
        if rss < best.0 {
            best = (rss, k, beta);
        }
    }
    let (_, k0, beta) = best;
    let a0 = beta[1].hypot(beta[2]);
    let psi0 = (-beta[2]).atan2(beta[1]);
    let f = |p: &[f64], r: &mut [f64]| {
        for i in 0..n {
            r[i] = p[0] + p[1] * (p[2] * xs[i] + p[3]).cos() - ys[i];
        }
    };
    let lm = levenberg_marquardt(&f, n, &[beta[0], a0.max(1e-12), k0, psi0], &LmOptions::default())?;
    let mut p = lm.params.clone();
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[3] += PI;
    }
    let m = independent.clamp(1, n);
    let dof = m.saturating_sub(4).max(1) as f64;
    let sigma = (lm.rss * m as f64 / n as f64 / dof).sqrt().max(known_sigma.unwrap_or(0.0));
    let se_scale = ((n - 4).max(1) as f64 / dof).sqrt();
    let se: Vec<f64> = lm.std_errors.iter().map(|e| e * se_scale).collect();
    // Per-quadrature amplitude noise, and the expected maximum over the
    // independent wave numbers in the scan at 1% false-alarm probability.
    let sigma_q = sigma * (2.0 / m as f64).sqrt();
    let trials = ((k_max - k_min) / resolution).max(1.0) + 1.0;
    let threshold = sigma_q * (2.0 * (trials / 0.01).ln()).sqrt();
    let below = p[1] < threshold.max(2.0 * se[1]);
    Ok(CosineFit {
        baseline: p[0],
        amplitude: p[1],
        k: p[2],
        phase: wrap_phase(p[3]),
        baseline_se: se[0],
        amplitude_se: se[1],
        k_se: se[2],
        phase_se: se[3],
        rss: lm.rss,
        n_points: n,
        below_noise_floor: below,
        converged: lm.converged,
    })
}

/// Fringe parameters of `g²(u, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeFit {
    pub contrast_g2: f64,
    pub contrast_g2_se: f64,
    /// Period in mm.
    pub period_g2: f64,
    pub period_g2_se: f64,
    pub phase_offset: f64,
    pub baseline: f64,
    pub residual_rms: f64,
    pub below_noise_floor: bool,
    /// Whether the centred zero row was used (otherwise the first τ-bin).
    pub used_zero_row: bool,
}

/// Fits `b + (K²/2) cos(k u + ψ)` to a row of `g²` values.
pub fn fit_fringe_row(us: &[f64], values: &[f64], du: f64, u_max: f64) -> Result<FringeFit> {
    fit_fringe_row_with(us, values, du, u_max, us.len(), None)
}

fn fit_fringe_row_with(
    us: &[f64],
    values: &[f64],
    du: f64,
    u_max: f64,
    independent: usize,
    known_sigma: Option<f64>,
) -> Result<FringeFit> {
    let k_max = TWO_PI / (2.5 * du);
    let k_min = TWO_PI / (4.0 * u_max);
    let fit = fit_cosine_with(us, values, k_min, k_max, independent, known_sigma)?;
    if !fit.converged {
        return Err(Error::numerical(format!("fringe fit did not converge (rss {})", fit.rss)));
    }
    let contrast = (2.0 * fit.amplitude).sqrt();
    let contrast_se = if contrast > 0.0 { fit.amplitude_se / contrast } else { f64::INFINITY };
    let period = TWO_PI / fit.k;
    Ok(FringeFit {
        contrast_g2: contrast,
        contrast_g2_se: contrast_se,
        period_g2: period,
        period_g2_se: TWO_PI / (fit.k * fit.k) * fit.k_se,
        phase_offset: fit.phase,
        baseline: fit.baseline,
        residual_rms: (fit.rss / fit.n_points as f64).sqrt(),
        below_noise_floor: fit.below_noise_floor,
        used_zero_row: false,
    })
}

/// Fringe fit at `τ = 0`.
///
/// Uses the centred zero row when the grid carries one, else the first
/// τ-bin (biased low by `A(Δτ/2)`).
pub fn fit_fringe_at_tau0(grid: &CorrelationGrid) -> Result<FringeFit> {
    let y_acq = grid.acquisition_length;
    let mut us = Vec::new();
    let mut vals = Vec::new();
    // Poisson variance of each value, `v²/count`.
    let mut variances = Vec::new();
    let used_zero_row = grid.zero_values.is_some();
    for iu in 0..grid.n_u {
        let u = grid.u_center(iu);
        match &grid.zero_values {
            Some(row) => {
                if 1.0 - u.abs() / y_acq >= MIN_EDGE_CORRECTION {
                    us.push(u);
                    vals.push(row[iu]);
                    variances.push(grid.zero_counts.as_ref().map(|c| (c[iu] + c[grid.n_u - 1 - iu], row[iu])));
                }
            }
            None => {
                if grid.is_valid(iu, 0) {
                    us.push(u);
                    vals.push(grid.value(iu, 0));
                    variances.push(Some((grid.count(iu, 0), grid.value(iu, 0))));
                }
            }
        }
    }
    if us.len() < 5 {
        return Err(Error::invalid("too few valid u-bins at τ = 0 for a fringe fit"));
    }
    let known_sigma = variances
        .iter()
        .map(|v| v.and_then(|(c, v)| (c > 0).then(|| v * v / c as f64)))
        .sum::<Option<f64>>()
        .map(|total| (total / us.len() as f64).sqrt());
    // The zero row is mirrored about u = 0.
    let independent = if used_zero_row { us.iter().filter(|&&u| u >= 0.0).count() } else { us.len() };
    let mut fit = fit_fringe_row_with(&us, &vals, grid.du, grid.u_max, independent, known_sigma)?;
    fit.used_zero_row = used_zero_row;
    Ok(fit)
}

/// Contrast of a position histogram with known period: bins of width λ/20,
/// linear fit of `a + b cos(ky) + c sin(ky)`, corrected for the bin average.
#[derive(Debug, Clone)]
pub struct HistogramContrast {
    k: f64,
    y0: f64,
    width: f64,
    n_bins: usize,
    /// Rows of the pseudo-inverse for (a, b, c).
    pinv: DMatrix<f64>,
    correction: f64,
}

impl HistogramContrast {
    pub fn new(period: f64, acquisition_length: f64) -> Result<Self> {
        if !(period > 0.0 && acquisition_length >= period) {
            return Err(Error::invalid("histogram needs a window of at least one period"));
        }
        let width = period / 20.0;
        let n_bins = ((acquisition_length / width) + 1e-9).floor() as usize;
        let k = TWO_PI / period;
        let y0 = -acquisition_length / 2.0;
        let design = DMatrix::from_fn(n_bins, 3, |i, j| {
            let y = y0 + (i as f64 + 0.5) * width;
            match j {
                0 => 1.0,
                1 => (k * y).cos(),
                _ => (k * y).sin(),
            }
        });
        let pinv = design.clone().pseudo_inverse(1e-12).map_err(|e| Error::numerical(e.to_string()))?;
        Ok(Self { k, y0, width, n_bins, pinv, correction: sinc(k * width / 2.0) })
    }

    pub fn wave_number(&self) -> f64 {
        self.k
    }

    /// Contrast of the histogram of `positions`.
    pub fn contrast(&self, positions: impl Iterator<Item = f64>) -> f64 {
        let mut counts = vec![0.0f64; self.n_bins];
        for y in positions {
            let i = ((y - self.y0) / self.width) as isize;
            if i >= 0 && (i as usize) < self.n_bins {
                counts[i as usize] += 1.0;
            }
        }
        let mut beta = [0.0; 3];
        for (r, b) in beta.iter_mut().enumerate() {
            *b = (0..self.n_bins).map(|i| self.pinv[(r, i)] * counts[i]).sum();
        }
        if beta[0] <= 0.0 {
            return 0.0;
        }
        beta[1].hypot(beta[2]) / beta[0] / self.correction
    }
}

/// Histogram contrast of an event set with known period.
pub fn histogram_contrast(events: &EventSet, period: f64) -> Result<f64> {
    let h = HistogramContrast::new(period, events.acquisition_length())?;
    Ok(h.contrast(events.positions().iter().copied()))
}

/// Free-period fit of the position histogram; returns `(contrast, period,
/// contrast_se, period_se)`.
pub fn fit_histogram_fringe(events: &EventSet, period_guess: f64) -> Result<(f64, f64, f64, f64)> {
    let y_acq = events.acquisition_length();
    let width = period_guess / 20.0;
    let n_bins = (y_acq / width).floor() as usize;
    let y0 = -y_acq / 2.0;
    let mut counts = vec![0.0; n_bins];
    for &y in events.positions() {
        let i = ((y - y0) / width) as isize;
        if i >= 0 && (i as usize) < n_bins {
            counts[i as usize] += 1.0;
        }
    }
    let xs: Vec<f64> = (0..n_bins).map(|i| y0 + (i as f64 + 0.5) * width).collect();
    let k = TWO_PI / period_guess;
    let fit = fit_cosine(&xs, &counts, 0.8 * k, 1.25 * k)?;
    let corr = sinc(fit.k * width / 2.0);
    let contrast = fit.amplitude / fit.baseline / corr;
    let contrast_se =
        contrast * ((fit.amplitude_se / fit.amplitude).powi(2) + (fit.baseline_se / fit.baseline).powi(2)).sqrt();
    Ok((contrast, TWO_PI / fit.k, contrast_se, TWO_PI / (fit.k * fit.k) * fit.k_se))
}
