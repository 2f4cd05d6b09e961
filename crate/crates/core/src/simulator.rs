//! Seeded event-stream generation.
//!
//! Arrival times are a Poisson process sampled by inverse CDF on stream 0 of a
//! ChaCha8 generator. Each position gets its own stream (`index + 1`) so that
//! positions can be drawn in parallel and still be bit-identical for any
//! thread count. Broad-band line phases use a dedicated stream.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::model::{EventSet, FringeModel, PerturbationSpec};
use crate::units::{self, TWO_PI};

pub const GENERATOR_ID: &str = "chacha8";
const NOISE_PHASE_STREAM: u64 = u64::MAX;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Poissonian arrival times with `t_1 = 0` and exponential gaps of mean
/// `1/count_rate`.
pub fn sample_arrival_times(count_rate: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(count_rate > 0.0 && count_rate.is_finite()) {
        return Err(Error::invalid("count rate must be positive"));
    }
    if n == 0 {
        return Err(Error::invalid("at least one event is required"));
    }
    let mut rng = stream_rng(seed, 0);
    let mut times = Vec::with_capacity(n);
    let mut t = 0.0;
    times.push(t);
    for _ in 1..n {
        let u: f64 = rng.random();
        t += -(1.0 - u).ln() / count_rate;
        times.push(t);
    }
    Ok(times)
}

/// Positions on `[-Y/2, Y/2)` drawn from `1 + K cos(k y + φ_i)` by
/// acceptance-rejection under the constant envelope `1 + K`.
pub fn sample_positions_with_phases(
    phases: &[f64],
    model: &FringeModel,
    acquisition_length: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(acquisition_length > 0.0) {
        return Err(Error::invalid("acquisition length must be positive"));
    }
    let k = model.wave_number();
    let kc = model.contrast;
    let envelope = 1.0 + kc;
    Ok(phases
        .par_iter()
        .enumerate()
        .map(|(i, &phi)| {
            let mut rng = stream_rng(seed, i as u64 + 1);
            loop {
                let y = acquisition_length * (rng.random::<f64>() - 0.5);
                let accept: f64 = rng.random();
                if accept * envelope < 1.0 + kc * (k * y + phi).cos() {
                    break y;
                }
            }
        })
        .collect())
}

/// Positions for arrival times under a time-dependent phase `φ(t)`.
pub fn sample_positions(
    times: &[f64],
    model: &FringeModel,
    phase_of_t: &(dyn Fn(f64) -> f64 + Sync),
    acquisition_length: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let phases: Vec<f64> = times.par_iter().map(|&t| phase_of_t(t)).collect();
    sample_positions_with_phases(&phases, model, acquisition_length, seed)
}

/// Overall factor applied to the broad-band line sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LineScale {
    /// `1/(√(2π) N_ω)`, the discrete-transform prefactor taken literally.
    Verbatim,
    /// Each line enters with its full amplitude.
    Unit,
    /// Each line enters with its RMS amplitude `φ̂/√2`.
    #[default]
    HalfPower,
}

impl LineScale {
    pub fn factor(self, n_lines: usize) -> f64 {
        match self {
            LineScale::Verbatim => 1.0 / ((2.0 * PI).sqrt() * n_lines as f64),
            LineScale::Unit => 1.0,
            LineScale::HalfPower => std::f64::consts::FRAC_1_SQRT_2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LineScale::Verbatim => "verbatim",
            LineScale::Unit => "unit",
            LineScale::HalfPower => "half-power",
        }
    }
}

/// Parameters of a Gaussian broad-band phase spectrum, all angular
/// frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseBand {
    pub phi0: f64,
    pub omega0: f64,
    pub sigma_omega: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub resolution: f64,
}

impl NoiseBand {
    pub fn validate(&self) -> Result<usize> {
        if !(self.phi0 >= 0.0 && self.phi0.is_finite()) {
            return Err(Error::invalid("phi0 must be nonnegative"));
        }
        if !(self.sigma_omega > 0.0) {
            return Err(Error::invalid("band width must be positive"));
        }
        if !(self.resolution > 0.0) {
            return Err(Error::invalid("resolution must be positive"));
        }
        if !(self.omega_min < self.omega0 && self.omega0 < self.omega_max) {
            return Err(Error::invalid("need omega_min < omega0 < omega_max"));
        }
        let steps = (self.omega_max - self.omega_min) / self.resolution;
        if (steps - steps.round()).abs() > 1e-6 * steps.max(1.0) {
            return Err(Error::invalid("band is not a whole number of resolution steps"));
        }
        Ok(steps.round() as usize + 1)
    }

    pub fn line_frequency(&self, j: usize) -> f64 {
        self.omega_min + j as f64 * self.resolution
    }

    /// Gaussian line amplitude `φ0 exp(−½((ω − ω0)/σ)²)`.
    pub fn amplitude(&self, omega: f64) -> f64 {
        let z = (omega - self.omega0) / self.sigma_omega;
        self.phi0 * (-0.5 * z * z).exp()
    }
}

/// Discrete broad-band spectrum with its drawn phases.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpectrumSpec {
    pub band: NoiseBand,
    pub scale: LineScale,
    pub amplitudes: Vec<f64>,
    /// Uniform on `(-π, π]`.
    pub phases: Vec<f64>,
}

impl NoiseSpectrumSpec {
    pub fn n_lines(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.n_lines()).map(|j| self.band.line_frequency(j)).collect()
    }

    /// Amplitude each line actually contributes to `φ(t)`.
    pub fn effective_amplitudes(&self) -> Vec<f64> {
        let f = self.scale.factor(self.n_lines());
        self.amplitudes.iter().map(|a| a * f).collect()
    }

    /// Tone list equivalent to this spectrum (effective amplitudes).
    pub fn to_perturbation(&self) -> Result<PerturbationSpec> {
        let f = self.scale.factor(self.n_lines());
        PerturbationSpec::new(
            (0..self.n_lines())
                .map(|j| {
                    crate::model::ToneComponent::new(
                        self.band.line_frequency(j),
                        self.amplitudes[j] * f,
                        self.phases[j],
                    )
                })
                .collect(),
        )
    }
}

/// Gaussian amplitude lines on the uniform grid with seeded random phases.
pub fn gaussian_noise_spectrum(band: NoiseBand, scale: LineScale, seed: u64) -> Result<NoiseSpectrumSpec> {
    let n = band.validate()?;
    let mut rng = stream_rng(seed, NOISE_PHASE_STREAM);
    let amplitudes = (0..n).map(|j| band.amplitude(band.line_frequency(j))).collect();
    let phases = (0..n).map(|_| PI - TWO_PI * rng.random::<f64>()).collect();
    Ok(NoiseSpectrumSpec { band, scale, amplitudes, phases })
}

/// `φ(t) = c Σ_j φ̂_j cos(ω_j t + Φ_j)` by direct summation.
pub fn broadband_phase(spec: &NoiseSpectrumSpec, t: f64) -> f64 {
    let f = spec.scale.factor(spec.n_lines());
    let sum: f64 = spec
        .amplitudes
        .iter()
        .zip(&spec.phases)
        .enumerate()
        .map(|(j, (a, p))| a * (spec.band.line_frequency(j) * t + p).cos())
        .sum();
    f * sum
}

/// Fast evaluator of a broad-band phase over `[0, t_end]`.
///
/// The line sum is shifted to baseband around the band centre,
/// `φ(t) = Re[e^{iω_c t} B(t)]`, and `B` with its first derivatives is
/// tabulated on a uniform grid by FFT. Evaluation is a Taylor expansion
/// from the nearest grid point.
pub struct BroadbandTable {
    step: f64,
    omega_c: f64,
    /// `derivs[k][m] = B^{(k)}(m h) / k!`.
    derivs: Vec<Vec<Complex64>>,
}

const TAYLOR_TERMS: usize = 10;

impl BroadbandTable {
    pub fn new(spec: &NoiseSpectrumSpec, t_end: f64, target_step: f64) -> Result<Self> {
        let n = spec.n_lines();
        if n == 0 {
            return Err(Error::invalid("empty broad-band spectrum"));
        }
        let dw = spec.band.resolution;
        // Grid must divide the common period 2π/Δω.
        let len = ((TWO_PI / (dw * target_step)).round() as usize).max(2 * n);
        let step = TWO_PI / (dw * len as f64);
        let centre = n / 2;
        let omega_c = spec.band.line_frequency(centre);
        let needed = ((t_end / step).ceil() as usize + 2).min(len);
        let f = spec.scale.factor(n);
        let coeffs: Vec<Complex64> =
            spec.amplitudes.iter().zip(&spec.phases).map(|(a, p)| Complex64::from_polar(f * a, *p)).collect();
        let fft = FftPlanner::new().plan_fft_inverse(len);
        let mut derivs = Vec::with_capacity(TAYLOR_TERMS);
        let mut factorial = 1.0;
        for k in 0..TAYLOR_TERMS {
            if k > 0 {
                factorial *= k as f64;
            }
            let mut buf = vec![Complex64::new(0.0, 0.0); len];
            for (j, c) in coeffs.iter().enumerate() {
                let offset = j as i64 - centre as i64;
                let w = Complex64::new(0.0, offset as f64 * dw).powu(k as u32);
                buf[offset.rem_euclid(len as i64) as usize] += c * w / factorial;
            }
            fft.process(&mut buf);
            buf.truncate(needed);
            buf.shrink_to_fit();
            derivs.push(buf);
        }
        Ok(Self { step, omega_c, derivs })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Phase at `t`; `t` must lie inside the tabulated range.
    pub fn eval(&self, t: f64) -> f64 {
        let m = (t / self.step).round();
        let idx = (m as usize).min(self.derivs[0].len() - 1);
        let delta = t - idx as f64 * self.step;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in (0..TAYLOR_TERMS).rev() {
            acc = acc * delta + self.derivs[k][idx];
        }
        (Complex64::from_polar(1.0, self.omega_c * t) * acc).re
    }
}

/// Either a tone list or a broad-band spectrum.
#[derive(Debug, Clone, PartialEq)]
pub enum Perturbation {
    Tones(PerturbationSpec),
    Broadband(NoiseSpectrumSpec),
}

impl Perturbation {
    /// `φ(t_i)` for all times, using the FFT table for large broad-band jobs.
    pub fn phases_at(&self, times: &[f64]) -> Result<Vec<f64>> {
        match self {
            Perturbation::Tones(spec) => Ok(times.par_iter().map(|&t| spec.evaluate(t)).collect()),
            Perturbation::Broadband(spec) => {
                if spec.n_lines() * times.len() <= 50_000_000 {
                    return Ok(times.par_iter().map(|&t| broadband_phase(spec, t)).collect());
                }
                let t_end = times.iter().cloned().fold(0.0, f64::max);
                let table = BroadbandTable::new(spec, t_end, 1e-3)?;
                Ok(times.par_iter().map(|&t| table.eval(t)).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub model: FringeModel,
    pub perturbation: Perturbation,
    pub n_events: usize,
    pub count_rate: f64,
    pub acquisition_length: f64,
    pub seed: u64,
}

/// Generates a complete event set. The acquisition time is the last arrival
/// (or one mean gap for a single event).
pub fn simulate(cfg: &SimulationConfig) -> Result<EventSet> {
    let times = sample_arrival_times(cfg.count_rate, cfg.n_events, cfg.seed)?;
    let phases = cfg.perturbation.phases_at(&times)?;
    let positions = sample_positions_with_phases(&phases, &cfg.model, cfg.acquisition_length, cfg.seed)?;
    let last = *times.last().expect("n_events >= 1");
    let acquisition_time = if last > 0.0 { last } else { 1.0 / cfg.count_rate };
    let mut set = EventSet::from_columns(times, positions, acquisition_time, cfg.acquisition_length)?
        .with_metadata("generator", GENERATOR_ID)
        .with_metadata("seed", cfg.seed)
        .with_metadata("contrast", cfg.model.contrast)
        .with_metadata("period_mm", cfg.model.period)
        .with_metadata("count_rate_hz", cfg.count_rate)
        .with_metadata("n_events", cfg.n_events);
    match &cfg.perturbation {
        Perturbation::Tones(spec) => {
            set = set.with_metadata("perturbation", "tones").with_metadata("tones", spec);
        }
        Perturbation::Broadband(spec) => {
            let b = &spec.band;
            set = set
                .with_metadata("perturbation", "gaussian")
                .with_metadata("phi0", units::format_angle_pi(b.phi0))
                .with_metadata("f0_hz", units::angular_to_hz(b.omega0))
                .with_metadata("sigma_hz", units::angular_to_hz(b.sigma_omega))
                .with_metadata("f_min_hz", units::angular_to_hz(b.omega_min))
                .with_metadata("f_max_hz", units::angular_to_hz(b.omega_max))
                .with_metadata("resolution_hz", units::angular_to_hz(b.resolution))
                .with_metadata("line_scale", spec.scale.name());
        }
    }
    Ok(set)
}

/// One-sided amplitude spectrum of `φ(t)` sampled every `dt` for `n` samples:
/// returns `(frequency in Hz, |X_k|·2/n)` so a tone of amplitude `a` on a bin
/// shows as `a`.
pub fn phase_series_spectrum(perturbation: &Perturbation, dt: f64, n: usize) -> Result<Vec<(f64, f64)>> {
    if n < 2 || !(dt > 0.0) {
        return Err(Error::invalid("need at least two samples and a positive step"));
    }
    let times: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    let phases = perturbation.phases_at(&times)?;
    let mut buf: Vec<Complex64> = phases.iter().map(|&p| Complex64::new(p, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = 1.0 / (n as f64 * dt);
    Ok(buf[..n / 2 + 1]
        .iter()
        .enumerate()
        .map(|(k, c)| (k as f64 * df, c.norm() * if k == 0 { 1.0 } else { 2.0 } / n as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::hz_to_angular;

    fn reference_band() -> NoiseBand {
        NoiseBand {
            phi0: 2e-2 * PI,
            omega0: hz_to_angular(50.0),
            sigma_omega: hz_to_angular(5.0),
            omega_min: hz_to_angular(30.0),
            omega_max: hz_to_angular(70.0),
            resolution: hz_to_angular(1e-3),
        }
    }

    #[test]
    fn arrival_times() {
        assert_eq!(sample_arrival_times(10.0, 1, 3).unwrap(), vec![0.0]);
        let n = 100_000;
        let t = sample_arrival_times(5000.0, n, 11).unwrap();
        let mean_gap = t[n - 1] / (n - 1) as f64;
        // Exponential gaps: σ = mean, so 3σ/√n on the sample mean.
        assert!((mean_gap - 2e-4).abs() < 3.0 * 2e-4 / (n as f64).sqrt());
        assert!(t.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(t, sample_arrival_times(5000.0, n, 11).unwrap());
        assert!(sample_arrival_times(0.0, 10, 1).is_err());
    }

    #[test]
    fn flat_positions_are_uniform() {
        let model = FringeModel::new(0.0, 2.0).unwrap();
        let n = 20_000;
        let mut y = sample_positions_with_phases(&vec![0.0; n], &model, 20.0, 5).unwrap();
        y.sort_by(f64::total_cmp);
        let d = y
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let cdf = (v + 10.0) / 20.0;
                ((i + 1) as f64 / n as f64 - cdf).abs().max((cdf - i as f64 / n as f64).abs())
            })
            .fold(0.0, f64::max);
        // Kolmogorov–Smirnov critical value at 1%.
        assert!(d < 1.63 / (n as f64).sqrt(), "D = {d}");
    }

    #[test]
    fn positions_follow_the_fringe_density() {
        // χ² against the analytic density for a known per-event phase.
        let model = FringeModel::new(0.6, 2.0).unwrap();
        let n = 100_000;
        let phases: Vec<f64> = (0..n).map(|i| 0.37 * i as f64).collect();
        let y = sample_positions_with_phases(&phases, &model, 20.0, 9).unwrap();
        // Bin in the co-moving coordinate k y + φ mod 2π, where the density is 1 + K cos.
        let bins = 40;
        let mut counts = vec![0usize; bins];
        for (yi, p) in y.iter().zip(&phases) {
            let x = (model.wave_number() * yi + p).rem_euclid(TWO_PI);
            counts[((x / TWO_PI) * bins as f64) as usize % bins] += 1;
        }
        let chi2: f64 = counts
            .iter()
            .enumerate()
            .map(|(b, &c)| {
                let (lo, hi) = (TWO_PI * b as f64 / bins as f64, TWO_PI * (b + 1) as f64 / bins as f64);
                let p = ((hi - lo) + 0.6 * (hi.sin() - lo.sin())) / TWO_PI;
                let e = p * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        // 39 degrees of freedom, 1% critical value 62.43.
        assert!(chi2 < 62.43, "chi2 = {chi2}");
    }

    #[test]
    fn noise_spectrum_lines() {
        let s = gaussian_noise_spectrum(reference_band(), LineScale::HalfPower, 1).unwrap();
        assert_eq!(s.n_lines(), 40001);
        assert_eq!(s.amplitudes[20000], 2e-2 * PI);
        let at_sigma = s.band.amplitude(hz_to_angular(55.0));
        assert!((at_sigma - 2e-2 * PI * (-0.5f64).exp()).abs() < 1e-15);
        assert!(s.phases.iter().all(|p| *p > -PI && *p <= PI));
    }

    #[test]
    fn broadband_special_cases() {
        let band = NoiseBand { phi0: 0.0, ..reference_band() };
        let s = gaussian_noise_spectrum(band, LineScale::Verbatim, 2).unwrap();
        assert_eq!(broadband_phase(&s, 1.3), 0.0);
        let mut one = gaussian_noise_spectrum(reference_band(), LineScale::Verbatim, 2).unwrap();
        for (j, a) in one.amplitudes.iter_mut().enumerate() {
            if j != 777 {
                *a = 0.0;
            }
        }
        let f = LineScale::Verbatim.factor(one.n_lines());
        let tone = PerturbationSpec::new(vec![crate::model::ToneComponent::new(
            one.band.line_frequency(777),
            one.amplitudes[777] * f,
            one.phases[777],
        )])
        .unwrap();
        for &t in &[0.0, 0.123, 57.5] {
            assert!((broadband_phase(&one, t) - tone.evaluate(t)).abs() < 1e-15);
        }
    }

    #[test]
    fn broadband_is_periodic() {
        let band = NoiseBand { resolution: hz_to_angular(0.5), ..reference_band() };
        let s = gaussian_noise_spectrum(band, LineScale::Unit, 3).unwrap();
        let period = TWO_PI / s.band.resolution;
        for &t in &[0.01, 0.7] {
            assert!((broadband_phase(&s, t) - broadband_phase(&s, t + period)).abs() < 1e-9);
        }
    }

    #[test]
    fn table_matches_direct_sum() {
        let s = gaussian_noise_spectrum(reference_band(), LineScale::HalfPower, 4).unwrap();
        let table = BroadbandTable::new(&s, 100.0, 1e-3).unwrap();
        let mut rng = stream_rng(99, 0);
        for _ in 0..100 {
            let t = 100.0 * rng.random::<f64>();
            let direct = broadband_phase(&s, t);
            assert!((table.eval(t) - direct).abs() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn tone_washes_out_histogram() {
        let cfg = SimulationConfig {
            model: FringeModel::new(0.6, 2.0).unwrap(),
            perturbation: Perturbation::Tones(PerturbationSpec::single_hz(50.0, 0.76 * PI, 0.0).unwrap()),
            n_events: 50_000,
            count_rate: 5000.0,
            acquisition_length: 20.0,
            seed: 8,
        };
        let ev = simulate(&cfg).unwrap();
        assert_eq!(ev.len(), 50_000);
        assert_eq!(ev.metadata["generator"], GENERATOR_ID);
        assert!((ev.acquisition_time() - 10.0).abs() < 0.2);
        // First Fourier coefficient of the position histogram.
        let kk = cfg.model.wave_number();
        let (c, s): (f64, f64) =
            ev.positions().iter().fold((0.0, 0.0), |acc, y| (acc.0 + (kk * y).cos(), acc.1 + (kk * y).sin()));
        let contrast = 2.0 * c.hypot(s) / ev.len() as f64;
        assert!(contrast < 0.02 + 3.0 * (2.0 / ev.len() as f64).sqrt(), "{contrast}");
    }

    #[test]
    fn simulation_is_deterministic() {
        let cfg = SimulationConfig {
            model: FringeModel::new(0.6, 2.0).unwrap(),
            perturbation: Perturbation::Tones(PerturbationSpec::single_hz(50.0, 0.4 * PI, 0.0).unwrap()),
            n_events: 5000,
            count_rate: 5000.0,
            acquisition_length: 20.0,
            seed: 42,
        };
        let a = simulate(&cfg).unwrap();
        let b = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| simulate(&cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn phase_series_recovers_a_tone() {
        let p = Perturbation::Tones(PerturbationSpec::single_hz(50.0, 0.3, 0.2).unwrap());
        let spec = phase_series_spectrum(&p, 1e-3, 1000).unwrap();
        let (f, a) = spec[50];
        assert!((f - 50.0).abs() < 1e-9);
        assert!((a - 0.3).abs() < 1e-9);
    }
}
