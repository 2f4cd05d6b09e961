//! Shared domain types.
//!
//! Everything here is immutable after construction; constructors validate and
//! canonicalize (sorting events, wrapping phases) so downstream code can rely
//! on the invariants without re-checking.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::units::{self, TWO_PI};

/// Unperturbed fringe `f0 (1 + K cos(k y))` with `k = 2π/λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeModel {
    pub contrast: f64,
    /// Spatial period λ in mm.
    pub period: f64,
    /// Density `f0` in events per mm per s; 1 for shape-only use.
    pub normalization: f64,
}

impl FringeModel {
    pub fn new(contrast: f64, period: f64) -> Result<Self> {
        Self::with_normalization(contrast, period, 1.0)
    }

    pub fn with_normalization(contrast: f64, period: f64, normalization: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&contrast) {
            return Err(Error::invalid(format!("contrast {contrast} outside [0, 1]")));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::invalid(format!("period {period} must be positive and finite")));
        }
        if !(normalization > 0.0 && normalization.is_finite()) {
            return Err(Error::invalid(format!("normalization {normalization} must be positive")));
        }
        Ok(Self { contrast, period, normalization })
    }

    pub fn wave_number(&self) -> f64 {
        TWO_PI / self.period
    }
}

/// One harmonic tone `φ_j cos(ω_j t + phase_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneComponent {
    /// Angular frequency in rad/s.
    pub frequency: f64,
    /// Peak phase deviation in rad.
    pub peak_phase_deviation: f64,
    /// Phase in rad, canonical in `(-π, π]`.
    pub phase: f64,
    /// Exact frequency in Hz when it was given as a decimal.
    pub frequency_hz: Option<Ratio<i64>>,
}

impl ToneComponent {
    pub fn new(frequency: f64, peak_phase_deviation: f64, phase: f64) -> Self {
        Self { frequency, peak_phase_deviation, phase: units::wrap_phase(phase), frequency_hz: None }
    }

    /// Tone with an exact rational frequency in Hz.
    pub fn from_hz(hz: Ratio<i64>, peak_phase_deviation: f64, phase: f64) -> Self {
        let mut tone = Self::new(units::hz_to_angular(units::ratio_to_f64(&hz)), peak_phase_deviation, phase);
        tone.frequency_hz = Some(hz);
        tone
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        self.peak_phase_deviation * (self.frequency * t + self.phase).cos()
    }

    /// Parses `HZ:AMPLITUDE[:PHASE]`, angles in radians or as multiples of π
    /// (`50:0.76pi:0.25pi`). The flag tells whether a phase was given.
    pub fn parse(text: &str) -> Result<(Self, bool)> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(Error::invalid(format!("tone `{text}` is not HZ:AMPLITUDE[:PHASE]")));
        }
        let hz = units::parse_hz_rational(parts[0])?;
        if *hz.numer() <= 0 {
            return Err(Error::invalid(format!("tone `{text}` needs a positive frequency")));
        }
        let amplitude = units::parse_angle(parts[1])?;
        if amplitude < 0.0 {
            return Err(Error::invalid(format!("tone `{text}` needs a nonnegative amplitude")));
        }
        let phase = parts.get(2).map(|p| units::parse_angle(p)).transpose()?;
        Ok((Self::from_hz(hz, amplitude, phase.unwrap_or(0.0)), phase.is_some()))
    }
}

/// `HZ:AMPLITUDE:PHASE` with angles in radians; round-trips through
/// [`ToneComponent::parse`]. Exact frequencies print as a decimal or, when
/// they have no finite decimal form, as `numer/denom`.
impl fmt::Display for ToneComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.frequency_hz {
            Some(r) => match units::format_hz_exact(r) {
                Some(hz) => write!(f, "{hz}")?,
                None => write!(f, "{}/{}", r.numer(), r.denom())?,
            },
            None => write!(f, "{}", units::angular_to_hz(self.frequency))?,
        }
        write!(f, ":{}:{}", self.peak_phase_deviation, self.phase)
    }
}

/// Ordered list of tones making up `φ(t)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerturbationSpec {
    components: Vec<ToneComponent>,
}

impl PerturbationSpec {
    /// Validates and stores the tones. Frequencies must be strictly positive
    /// and strictly ascending; amplitudes nonnegative and finite.
    pub fn new(components: Vec<ToneComponent>) -> Result<Self> {
        for (j, c) in components.iter().enumerate() {
            if !(c.frequency > 0.0 && c.frequency.is_finite()) {
                return Err(Error::invalid(format!("tone {j}: frequency {} must be positive", c.frequency)));
            }
            if !(c.peak_phase_deviation >= 0.0 && c.peak_phase_deviation.is_finite()) {
                return Err(Error::invalid(format!(
                    "tone {j}: peak phase deviation {} must be nonnegative",
                    c.peak_phase_deviation
                )));
            }
            if !c.phase.is_finite() {
                return Err(Error::invalid(format!("tone {j}: phase is not finite")));
            }
            if j > 0 && c.frequency <= components[j - 1].frequency {
                return Err(Error::invalid(format!(
                    "tone {j}: frequencies must be strictly ascending without duplicates"
                )));
            }
        }
        let components = components
            .into_iter()
            .map(|mut c| {
                c.phase = units::wrap_phase(c.phase);
                c
            })
            .collect();
        Ok(Self { components })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Single tone given in Hz, convenient in tests and presets.
    pub fn single_hz(hz: f64, amplitude: f64, phase: f64) -> Result<Self> {
        Self::new(vec![ToneComponent::new(units::hz_to_angular(hz), amplitude, phase)])
    }

    pub fn components(&self) -> &[ToneComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.frequency).collect()
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.peak_phase_deviation).collect()
    }

    pub fn phases(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.phase).collect()
    }

    pub fn max_amplitude(&self) -> f64 {
        self.components.iter().map(|c| c.peak_phase_deviation).fold(0.0, f64::max)
    }

    /// Exact Hz values, available only when every tone carries one.
    pub fn hz_rationals(&self) -> Option<Vec<Ratio<i64>>> {
        self.components.iter().map(|c| c.frequency_hz).collect()
    }

    /// Copy with the phases replaced.
    pub fn with_phases(&self, phases: &[f64]) -> Result<Self> {
        if phases.len() != self.components.len() {
            return Err(Error::invalid(format!("expected {} phases, got {}", self.components.len(), phases.len())));
        }
        let components = self
            .components
            .iter()
            .zip(phases)
            .map(|(c, &p)| ToneComponent { phase: units::wrap_phase(p), ..c.clone() })
            .collect();
        Ok(Self { components })
    }

    /// `φ(t) = Σ φ_j cos(ω_j t + phase_j)`.
    pub fn evaluate(&self, t: f64) -> f64 {
        self.components.iter().map(|c| c.evaluate(t)).sum()
    }
}

impl PerturbationSpec {
    /// Parses tones separated by `;`; an empty string is the empty spec.
    pub fn parse(text: &str) -> Result<Self> {
        let tones = text
            .split(';')
            .filter(|t| !t.trim().is_empty())
            .map(|t| ToneComponent::parse(t).map(|(c, _)| c))
            .collect::<Result<Vec<_>>>()?;
        Self::new(tones)
    }
}

impl fmt::Display for PerturbationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Free-function form of [`PerturbationSpec::evaluate`].
pub fn evaluate_perturbation(spec: &PerturbationSpec, t: f64) -> f64 {
    spec.evaluate(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub t: f64,
    pub y: f64,
}

/// Time-sorted detector events inside the window `[0, T] x [-Y/2, Y/2]`.
///
/// Times and positions are stored as separate columns; the correlator's inner
/// loop streams through them.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSet {
    t: Vec<f64>,
    y: Vec<f64>,
    acquisition_time: f64,
    acquisition_length: f64,
    pub metadata: BTreeMap<String, String>,
}

impl EventSet {
    pub fn new(events: Vec<Event>, acquisition_time: f64, acquisition_length: f64) -> Result<Self> {
        let (t, y) = events.into_iter().map(|e| (e.t, e.y)).unzip();
        Self::from_columns(t, y, acquisition_time, acquisition_length)
    }

    /// Builds an event set from parallel columns, sorting by time (ties by
    /// position) and checking the window bounds.
    pub fn from_columns(t: Vec<f64>, y: Vec<f64>, acquisition_time: f64, acquisition_length: f64) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::invalid("time and position columns differ in length"));
        }
        if !(acquisition_time > 0.0 && acquisition_time.is_finite()) {
            return Err(Error::invalid(format!("acquisition time {acquisition_time} must be positive")));
        }
        if !(acquisition_length > 0.0 && acquisition_length.is_finite()) {
            return Err(Error::invalid(format!("acquisition length {acquisition_length} must be positive")));
        }
        let half = acquisition_length / 2.0;
        for (i, (&ti, &yi)) in t.iter().zip(&y).enumerate() {
            if !(0.0..=acquisition_time).contains(&ti) {
                return Err(Error::invalid(format!("event {i}: t = {ti} outside [0, {acquisition_time}]")));
            }
            if !(-half..=half).contains(&yi) {
                return Err(Error::invalid(format!("event {i}: y = {yi} outside [-{half}, {half}]")));
            }
        }
        let sorted = t.windows(2).all(|w| w[0] <= w[1]);
        let (t, y) = if sorted {
            (t, y)
        } else {
            let mut idx: Vec<usize> = (0..t.len()).collect();
            idx.sort_by(|&a, &b| t[a].total_cmp(&t[b]).then(y[a].total_cmp(&y[b])));
            (idx.iter().map(|&i| t[i]).collect(), idx.iter().map(|&i| y[i]).collect())
        };
        Ok(Self { t, y, acquisition_time, acquisition_length, metadata: BTreeMap::new() })
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.metadata.insert(key.into(), value.to_string());
        self
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn positions(&self) -> &[f64] {
        &self.y
    }

    pub fn acquisition_time(&self) -> f64 {
        self.acquisition_time
    }

    pub fn acquisition_length(&self) -> f64 {
        self.acquisition_length
    }

    pub fn events(&self) -> impl Iterator<Item = Event> + '_ {
        self.t.iter().zip(&self.y).map(|(&t, &y)| Event { t, y })
    }
}

/// Binned `g²(u, τ)` with the raw pair counts it was built from.
///
/// Arrays are row-major over `[i_u][i_τ]`. Bin centres are
/// `u_i = (i_u + ½)Δu − u_max` and `τ_i = (i_τ + ½)Δτ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationGrid {
    pub n_u: usize,
    pub n_tau: usize,
    pub du: f64,
    pub dtau: f64,
    pub tau_max: f64,
    pub u_max: f64,
    pub n_events: u64,
    pub acquisition_time: f64,
    pub acquisition_length: f64,
    pub counts: Vec<u64>,
    pub values: Vec<f64>,
    /// False where the edge correction is too small to trust.
    pub valid: Vec<bool>,
    /// Pair counts with `0 < τ ≤ Δτ/2`, one per u-bin; they form the centred
    /// `τ = 0` row once mirrored.
    pub zero_counts: Option<Vec<u64>>,
    pub zero_values: Option<Vec<f64>>,
}

impl CorrelationGrid {
    #[allow(clippy::too_many_arguments)]
    pub fn empty(
        n_u: usize,
        n_tau: usize,
        du: f64,
        dtau: f64,
        n_events: u64,
        acquisition_time: f64,
        acquisition_length: f64,
    ) -> Self {
        Self {
            n_u,
            n_tau,
            du,
            dtau,
            tau_max: n_tau as f64 * dtau,
            u_max: n_u as f64 * du / 2.0,
            n_events,
            acquisition_time,
            acquisition_length,
            counts: vec![0; n_u * n_tau],
            values: vec![0.0; n_u * n_tau],
            valid: vec![true; n_u * n_tau],
            zero_counts: None,
            zero_values: None,
        }
    }

    #[inline]
    pub fn index(&self, iu: usize, itau: usize) -> usize {
        iu * self.n_tau + itau
    }

    pub fn u_center(&self, iu: usize) -> f64 {
        (iu as f64 + 0.5) * self.du - self.u_max
    }

    pub fn tau_center(&self, itau: usize) -> f64 {
        (itau as f64 + 0.5) * self.dtau
    }

    pub fn u_centers(&self) -> Vec<f64> {
        (0..self.n_u).map(|i| self.u_center(i)).collect()
    }

    pub fn tau_centers(&self) -> Vec<f64> {
        (0..self.n_tau).map(|i| self.tau_center(i)).collect()
    }

    pub fn value(&self, iu: usize, itau: usize) -> f64 {
        self.values[self.index(iu, itau)]
    }

    pub fn count(&self, iu: usize, itau: usize) -> u64 {
        self.counts[self.index(iu, itau)]
    }

    pub fn is_valid(&self, iu: usize, itau: usize) -> bool {
        self.valid[self.index(iu, itau)]
    }

    /// u-bin whose interval `[low, high)` contains `u`.
    pub fn u_bin(&self, u: f64) -> Option<usize> {
        let x = (u + self.u_max) / self.du;
        if !(x >= 0.0) {
            return None;
        }
        let i = x.floor() as usize;
        if i < self.n_u {
            Some(i)
        } else if (u - self.u_max).abs() <= 1e-12 * self.u_max.max(1.0) {
            Some(self.n_u - 1)
        } else {
            None
        }
    }

    /// τ-series at one u-bin.
    pub fn tau_row(&self, iu: usize) -> &[f64] {
        let start = self.index(iu, 0);
        &self.values[start..start + self.n_tau]
    }

    pub fn total_counts(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Integer multiplet `{n_j, m_j}` of the explicit correlation sum, with its
/// cached weight and phases.
#[derive(Debug, Clone, PartialEq)]
pub struct Multiplet {
    pub pairs: Vec<(i32, i32)>,
    pub weight: f64,
    pub spatial_phase: f64,
    pub temporal_phase: f64,
    pub frequency_component: f64,
}

impl Multiplet {
    pub fn is_trivial(&self) -> bool {
        self.pairs.iter().all(|&(n, m)| n == -m)
    }

    pub fn is_zero(&self) -> bool {
        self.pairs.iter().all(|&(n, m)| n == 0 && m == 0)
    }

    pub fn negated_pairs(&self) -> Vec<(i32, i32)> {
        self.pairs.iter().map(|&(n, m)| (-n, -m)).collect()
    }
}

/// Temporal amplitude spectrum at fixed `u0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSpectrum {
    /// Angular frequencies in rad/s.
    pub frequencies: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub u0: f64,
    pub frequency_resolution: f64,
}

impl AmplitudeSpectrum {
    /// Index of the bin nearest to `omega`.
    pub fn nearest_bin(&self, omega: f64) -> Option<usize> {
        self.frequencies
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - omega).abs().total_cmp(&(b.1 - omega).abs()))
            .map(|(i, _)| i)
    }

    /// Largest magnitude within `omega ± half_width`.
    pub fn peak_near(&self, omega: f64, half_width: f64) -> Option<(f64, f64)> {
        self.frequencies
            .iter()
            .zip(&self.magnitudes)
            .filter(|(w, _)| (**w - omega).abs() <= half_width)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(&w, &m)| (w, m))
    }
}
