use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fit::golden_max;
use crate::model::{EventSet, PerturbationSpec};
use crate::units::{wrap_phase, TWO_PI};

use super::fringe::HistogramContrast;

fn fold(y: f64, length: f64) -> f64 {
    if y.abs() <= length / 2.0 {
        return y;
    }
    (y + length / 2.0).rem_euclid(length) - length / 2.0
}

/// Removes the believed perturbation from every position:
/// `y → y + (λ/2π)·φ(t)`, folded periodically back into the window.
///
/// The fold preserves the fringe only when the window is a whole number of
/// periods.
pub fn reconstruct(events: &EventSet, period: f64, spec: &PerturbationSpec) -> Result<EventSet> {
    if !(period > 0.0) {
        return Err(Error::invalid("period must be positive"));
    }
    let length = events.acquisition_length();
    let scale = period / TWO_PI;
    let y: Vec<f64> = events
        .times()
        .iter()
        .zip(events.positions())
        .map(|(&t, &y)| fold(y + scale * spec.evaluate(t), length))
        .collect();
    let mut out = EventSet::from_columns(events.times().to_vec(), y, events.acquisition_time(), length)?;
    out.metadata = events.metadata.clone();
    out.metadata.insert("reconstructed".into(), "true".into());
    Ok(out)
}

/// Second phase of the duplet that shares the correlation function of
/// `reference`, given the first phase `phi1`.
///
/// The direct family follows from a global time shift, the mirrored one from
/// simultaneous time and space reversal.
pub fn phase_family(omega1: f64, omega2: f64, reference: (f64, f64), phi1: f64, mirrored: bool) -> f64 {
    let r = omega2 / omega1;
    let (p1, p2) = reference;
    let offset = if mirrored { r * p1 - p2 + PI * (1.0 - r) } else { p2 - r * p1 };
    wrap_phase(r * phi1 + offset)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSearchOptions {
    /// Coarse grid points per free phase.
    pub grid_points: usize,
    /// Golden-section refinement sweeps over the coordinates.
    pub sweeps: usize,
    /// Search only the two one-parameter families through the phases carried
    /// by the spec (two tones only).
    pub use_invariance: bool,
    pub tolerance: f64,
}

impl Default for PhaseSearchOptions {
    fn default() -> Self {
        Self { grid_points: 48, sweeps: 3, use_invariance: false, tolerance: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSearchResult {
    /// Best phases, each in `(−π, π]`.
    pub phases: Vec<f64>,
    pub contrast: f64,
    /// Histogram contrast before reconstruction.
    pub initial_contrast: f64,
    pub evaluations: usize,
    /// For invariance searches, whether the mirrored family won.
    pub mirrored: Option<bool>,
}

struct Objective<'a> {
    positions: &'a [f64],
    cos: Vec<f64>,
    sin: Vec<f64>,
    amplitudes: Vec<f64>,
    scale: f64,
    length: f64,
    hist: HistogramContrast,
    calls: std::cell::Cell<usize>,
}

impl<'a> Objective<'a> {
    fn new(events: &'a EventSet, period: f64, spec: &PerturbationSpec) -> Result<Self> {
        let freqs = spec.frequencies();
        let d = freqs.len();
        let mut cos = Vec::with_capacity(events.len() * d);
        let mut sin = Vec::with_capacity(events.len() * d);
        for &t in events.times() {
            for &w in &freqs {
                let (s, c) = (w * t).sin_cos();
                cos.push(c);
                sin.push(s);
            }
        }
        Ok(Self {
            positions: events.positions(),
            cos,
            sin,
            amplitudes: spec.amplitudes(),
            scale: period / TWO_PI,
            length: events.acquisition_length(),
            hist: HistogramContrast::new(period, events.acquisition_length())?,
            calls: std::cell::Cell::new(0),
        })
    }

    fn contrast(&self, phases: &[f64]) -> f64 {
        self.calls.set(self.calls.get() + 1);
        let d = self.amplitudes.len();
        let coef: Vec<(f64, f64)> =
            phases.iter().zip(&self.amplitudes).map(|(p, a)| (a * p.cos(), a * p.sin())).collect();
        let shifted = self.positions.iter().enumerate().map(|(i, &y)| {
            let row = i * d;
            let phi: f64 =
                coef.iter().enumerate().map(|(j, (ac, as_))| ac * self.cos[row + j] - as_ * self.sin[row + j]).sum();
            fold(y + self.scale * phi, self.length)
        });
        self.hist.contrast(shifted)
    }
}

fn grid_points(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| -PI + TWO_PI * (i as f64 + 1.0) / n as f64)
}

/// Refines coordinate `j` of `phases` by golden section around its value.
fn refine(obj: &dyn Fn(&[f64]) -> f64, phases: &mut [f64], j: usize, half_width: f64, tol: f64) -> f64 {
    let centre = phases[j];
    let trial = std::cell::RefCell::new(phases.to_vec());
    let g = |x: f64| {
        let mut p = trial.borrow_mut();
        p[j] = x;
        obj(&p)
    };
    let (x, fx) = golden_max(&g, centre - half_width, centre + half_width, tol);
    let current = obj(phases);
    if fx > current {
        phases[j] = x;
        fx
    } else {
        current
    }
}

/// Maximizes the histogram contrast of the reconstruction over the tone
/// phases; frequencies and amplitudes are taken from `spec`.
pub fn phase_search(
    events: &EventSet,
    period: f64,
    spec: &PerturbationSpec,
    opts: &PhaseSearchOptions,
) -> Result<PhaseSearchResult> {
    if opts.grid_points < 3 {
        return Err(Error::invalid("phase search needs at least three grid points"));
    }
    let objective = Objective::new(events, period, spec)?;
    let d = spec.len();
    let initial_contrast = objective.contrast(&vec![0.0; d]);
    if d == 0 || spec.max_amplitude() == 0.0 {
        return Ok(PhaseSearchResult {
            phases: vec![0.0; d],
            contrast: initial_contrast,
            initial_contrast,
            evaluations: objective.calls.get(),
            mirrored: None,
        });
    }
    let step = TWO_PI / opts.grid_points as f64;
    let obj = |p: &[f64]| objective.contrast(p);
    let (phases, contrast, mirrored) = if opts.use_invariance {
        if d != 2 {
            return Err(Error::invalid("the invariance-constrained search is defined for two tones"));
        }
        let freqs = spec.frequencies();
        let reference = (spec.phases()[0], spec.phases()[1]);
        let mut best = (vec![0.0; 2], f64::NEG_INFINITY, false);
        for mirrored in [false, true] {
            let on_line = |x: f64| [x, phase_family(freqs[0], freqs[1], reference, x, mirrored)];
            let line = |x: f64| obj(&on_line(x));
            let (mut x0, mut f0) = (0.0, f64::NEG_INFINITY);
            for x in grid_points(opts.grid_points) {
                let f = line(x);
                if f > f0 {
                    (x0, f0) = (x, f);
                }
            }
            let (x, fx) = golden_max(&line, x0 - step, x0 + step, opts.tolerance);
            let (x, fx) = if fx > f0 { (x, fx) } else { (x0, f0) };
            if fx > best.1 {
                best = (on_line(x).to_vec(), fx, mirrored);
            }
        }
        (best.0, best.1, Some(best.2))
    } else if d <= 2 {
        let mut best = (vec![0.0; d], f64::NEG_INFINITY);
        let mut p = vec![0.0; d];
        let n = opts.grid_points;
        for idx in 0..n.pow(d as u32) {
            let mut rest = idx;
            for slot in p.iter_mut() {
                *slot = -PI + TWO_PI * ((rest % n) as f64 + 1.0) / n as f64;
                rest /= n;
            }
            let f = obj(&p);
            if f > best.1 {
                best = (p.clone(), f);
            }
        }
        let (mut p, mut f) = best;
        for _ in 0..opts.sweeps {
            for j in 0..d {
                f = refine(&obj, &mut p, j, step, opts.tolerance);
            }
        }
        (p, f, None)
    } else {
        let mut p = vec![0.0; d];
        let mut f = obj(&p);
        for sweep in 0..opts.sweeps {
            for j in 0..d {
                if sweep == 0 {
                    let mut trial = p.clone();
                    for x in grid_points(opts.grid_points) {
                        trial[j] = x;
                        let v = obj(&trial);
                        if v > f {
                            f = v;
                            p[j] = x;
                        }
                    }
                }
                f = refine(&obj, &mut p, j, step, opts.tolerance);
            }
        }
        (p, f, None)
    };
    if !contrast.is_finite() {
        return Err(Error::numerical("phase search produced a non-finite contrast"));
    }
    Ok(PhaseSearchResult {
        phases: phases.into_iter().map(wrap_phase).collect(),
        contrast,
        initial_contrast,
        evaluations: objective.calls.get(),
        mirrored,
    })
}
