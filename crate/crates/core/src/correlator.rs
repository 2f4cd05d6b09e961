//! Pair-counting estimator of `g²(u, τ)`.
//!
//! Events are time sorted, so each event only looks forward until the time
//! difference exceeds `τ_max`. The outer index is split into contiguous
//! slices, one private integer grid per slice, merged in slice order; the
//! result does not depend on the number of workers.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{CorrelationGrid, EventSet};

/// Bins with an edge correction below this are flagged invalid.
pub const MIN_EDGE_CORRECTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelatorOptions {
    pub du: f64,
    pub dtau: f64,
    pub tau_max: f64,
    pub u_max: f64,
    /// Number of slices of the outer index; 0 uses the rayon pool size.
    pub workers: usize,
}

impl CorrelatorOptions {
    pub fn new(du: f64, dtau: f64, tau_max: f64, u_max: f64) -> Self {
        Self { du, dtau, tau_max, u_max, workers: 0 }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }
}

/// Bin geometry shared by the sweep and the brute-force reference.
///
/// τ-bins are `((i)Δτ, (i+1)Δτ]` so that a pair exactly one step apart lands
/// in the first bin; u-bins are `[low, high)` with `u = u_max` folded into the
/// last bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binning {
    pub n_u: usize,
    pub n_tau: usize,
    pub du: f64,
    pub dtau: f64,
    pub u_max: f64,
    pub tau_max: f64,
}

impl Binning {
    /// Rounds the ranges up to whole bins.
    pub fn new(du: f64, dtau: f64, tau_max: f64, u_max: f64) -> Result<Self> {
        for (name, v) in [("du", du), ("dtau", dtau), ("tau_max", tau_max), ("u_max", u_max)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive and finite")));
            }
        }
        let n_tau = whole_bins(tau_max / dtau);
        let n_u = whole_bins(2.0 * u_max / du);
        Ok(Self { n_u, n_tau, du, dtau, u_max: n_u as f64 * du / 2.0, tau_max: n_tau as f64 * dtau })
    }

    #[inline]
    pub fn tau_bin(&self, dt: f64) -> Option<usize> {
        if !(dt > 0.0) || dt > self.tau_max {
            return None;
        }
        let i = (dt / self.dtau).ceil() as usize;
        (1..=self.n_tau).contains(&i).then(|| i - 1)
    }

    #[inline]
    pub fn u_bin(&self, u: f64) -> Option<usize> {
        let x = (u + self.u_max) / self.du;
        if !(x >= 0.0) {
            return None;
        }
        let i = x as usize;
        if i < self.n_u {
            Some(i)
        } else if u == self.u_max {
            Some(self.n_u - 1)
        } else {
            None
        }
    }

    /// Whether `dt` belongs to the half-width zero bin `(0, Δτ/2]`.
    #[inline]
    pub fn in_zero_bin(&self, dt: f64) -> bool {
        dt > 0.0 && dt <= 0.5 * self.dtau
    }
}

fn whole_bins(ratio: f64) -> usize {
    let r = ratio.round();
    let n = if (ratio - r).abs() <= 1e-9 * r.max(1.0) { r } else { ratio.ceil() };
    (n as usize).max(1)
}

fn slice_bounds(n: usize, slices: usize) -> Vec<(usize, usize)> {
    let slices = slices.clamp(1, n.max(1));
    (0..slices).map(|s| (s * n / slices, (s + 1) * n / slices)).collect()
}

fn worker_slices(workers: usize) -> usize {
    if workers == 0 {
        rayon::current_num_threads()
    } else {
        workers
    }
}

/// Raw counts for ordered pairs `t_j > t_i` into a fresh grid; also fills the
/// zero-bin counts.
pub fn pair_count(events: &EventSet, opts: &CorrelatorOptions) -> Result<CorrelationGrid> {
    if events.is_empty() {
        return Err(Error::invalid("event set is empty"));
    }
    let b = Binning::new(opts.du, opts.dtau, opts.tau_max, opts.u_max)?;
    if b.tau_max > events.acquisition_time() * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "tau_max {} exceeds the acquisition time {}",
            b.tau_max,
            events.acquisition_time()
        )));
    }
    let t = events.times();
    let y = events.positions();
    let n = t.len();
    let cells = b.n_u * b.n_tau;

    let partials: Vec<(Vec<u64>, Vec<u64>)> = slice_bounds(n, worker_slices(opts.workers))
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut counts = vec![0u64; cells];
            let mut zero = vec![0u64; b.n_u];
            for i in lo..hi {
                let (ti, yi) = (t[i], y[i]);
                for j in i + 1..n {
                    let dt = t[j] - ti;
                    if dt > b.tau_max {
                        break;
                    }
                    let Some(it) = b.tau_bin(dt) else { continue };
                    let Some(iu) = b.u_bin(y[j] - yi) else { continue };
                    counts[iu * b.n_tau + it] += 1;
                    if b.in_zero_bin(dt) {
                        zero[iu] += 1;
                    }
                }
            }
            (counts, zero)
        })
        .collect();

    let mut grid = CorrelationGrid::empty(
        b.n_u,
        b.n_tau,
        b.du,
        b.dtau,
        n as u64,
        events.acquisition_time(),
        events.acquisition_length(),
    );
    let mut zero = vec![0u64; b.n_u];
    for (c, z) in partials {
        for (acc, v) in grid.counts.iter_mut().zip(c) {
            *acc += v;
        }
        for (acc, v) in zero.iter_mut().zip(z) {
            *acc += v;
        }
    }
    grid.zero_counts = Some(zero);
    Ok(grid)
}

/// `TY/(N²ΔτΔu)`, the variance of a normalized value and its scale factor.
pub fn g2_variance_estimate(grid: &CorrelationGrid) -> f64 {
    let n = grid.n_events as f64;
    grid.acquisition_time * grid.acquisition_length / (n * n * grid.dtau * grid.du)
}

/// Fills `values` with the edge-corrected estimate at bin centres; bins whose
/// correction `(1 − τ/T)(1 − |u|/Y)` is below [`MIN_EDGE_CORRECTION`] are
/// marked invalid and set to zero. The zero-bin counts, when present, become
/// the centred `τ = 0` row.
pub fn normalize(mut grid: CorrelationGrid) -> CorrelationGrid {
    let scale = g2_variance_estimate(&grid);
    let (t_acq, y_acq) = (grid.acquisition_time, grid.acquisition_length);
    let n_tau = grid.n_tau;
    let u_corr: Vec<f64> = (0..grid.n_u).map(|iu| 1.0 - grid.u_center(iu).abs() / y_acq).collect();
    let tau_corr: Vec<f64> = (0..n_tau).map(|it| 1.0 - grid.tau_center(it) / t_acq).collect();
    let CorrelationGrid { counts, values, valid, .. } = &mut grid;
    values.par_chunks_mut(n_tau).zip(valid.par_chunks_mut(n_tau)).zip(counts.par_chunks(n_tau)).enumerate().for_each(
        |(iu, ((vals, ok), cnt))| {
            for it in 0..n_tau {
                let corr = u_corr[iu] * tau_corr[it];
                if corr < MIN_EDGE_CORRECTION {
                    ok[it] = false;
                    vals[it] = 0.0;
                } else {
                    ok[it] = true;
                    vals[it] = scale * cnt[it] as f64 / corr;
                }
            }
        },
    );
    if let Some(zero) = &grid.zero_counts {
        let n_u = grid.n_u;
        let row = (0..n_u)
            .map(|iu| {
                let corr = u_corr[iu];
                if corr < MIN_EDGE_CORRECTION {
                    0.0
                } else {
                    scale * (zero[iu] + zero[n_u - 1 - iu]) as f64 / corr
                }
            })
            .collect();
        grid.zero_values = Some(row);
    }
    grid
}

/// Counting and normalization in one call.
pub fn correlate(events: &EventSet, opts: &CorrelatorOptions) -> Result<CorrelationGrid> {
    Ok(normalize(pair_count(events, opts)?))
}

/// Normalized centred rows (`u ∈ [−Δu/2, Δu/2]`) for several spatial bin
/// sizes in a single sweep. Each entry equals the one-row grid that
/// [`correlate`] produces with `u_max = Δu/2`.
pub fn centred_rows(
    events: &EventSet,
    dus: &[f64],
    dtau: f64,
    tau_max: f64,
    workers: usize,
) -> Result<Vec<CorrelationGrid>> {
    if events.is_empty() {
        return Err(Error::invalid("event set is empty"));
    }
    if dus.is_empty() {
        return Err(Error::invalid("no spatial bin sizes given"));
    }
    let binnings: Vec<Binning> =
        dus.iter().map(|&du| Binning::new(du, dtau, tau_max, du / 2.0)).collect::<Result<_>>()?;
    let b0 = binnings[0];
    if b0.tau_max > events.acquisition_time() * (1.0 + 1e-12) {
        return Err(Error::invalid("tau_max exceeds the acquisition time"));
    }
    // Widest first so the inner loop can stop at the first miss.
    let mut order: Vec<usize> = (0..dus.len()).collect();
    order.sort_by(|&a, &b| dus[b].total_cmp(&dus[a]));
    let widest = binnings[order[0]];
    let t = events.times();
    let y = events.positions();
    let n = t.len();
    let n_tau = b0.n_tau;
    let k = dus.len();

    let partials: Vec<Vec<u64>> = slice_bounds(n, worker_slices(workers))
        .into_par_iter()
        .map(|(lo, hi)| {
            let mut counts = vec![0u64; k * n_tau];
            for i in lo..hi {
                let (ti, yi) = (t[i], y[i]);
                for j in i + 1..n {
                    let dt = t[j] - ti;
                    if dt > b0.tau_max {
                        break;
                    }
                    let u = y[j] - yi;
                    if widest.u_bin(u).is_none() {
                        continue;
                    }
                    let Some(it) = b0.tau_bin(dt) else { continue };
                    for &r in &order {
                        if binnings[r].u_bin(u).is_none() {
                            break;
                        }
                        counts[r * n_tau + it] += 1;
                    }
                }
            }
            counts
        })
        .collect();
    let mut total = vec![0u64; k * n_tau];
    for p in partials {
        for (acc, v) in total.iter_mut().zip(p) {
            *acc += v;
        }
    }
    Ok(binnings
        .iter()
        .enumerate()
        .map(|(r, b)| {
            let mut g = CorrelationGrid::empty(
                1,
                n_tau,
                b.du,
                dtau,
                n as u64,
                events.acquisition_time(),
                events.acquisition_length(),
            );
            g.counts.copy_from_slice(&total[r * n_tau..(r + 1) * n_tau]);
            normalize(g)
        })
        .collect())
}
