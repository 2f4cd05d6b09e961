//! Randomized invariants across the model, analytic, simulator, correlator and
//! inference modules.

use std::f64::consts::PI;
use std::time::Instant;

use gauss_quad::GaussLegendre;
use num_rational::Ratio;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fringecorr::analytic::{
    amplitude_spectrum_analytic, default_m_max, discretized_amplitude, g2_approx, g2_approx_amplitude, g2_explicit,
    g2_explicit_complex, kernel_for_spec, snr_theory, superperiod,
};
use fringecorr::correlator::{correlate, g2_variance_estimate, pair_count, Binning, CorrelatorOptions};
use fringecorr::inference::{histogram_contrast, invert_tone_amplitude, reconstruct};
use fringecorr::io::{read_events, read_grid, write_events, write_grid_binary, write_grid_text};
use fringecorr::simulator::{
    broadband_phase, gaussian_noise_spectrum, simulate, LineScale, NoiseBand, Perturbation, SimulationConfig,
};
use fringecorr::units::{hz_to_angular, TWO_PI};
use fringecorr::{CorrelationGrid, EventSet, FringeModel, PerturbationSpec, ToneComponent};

fn tone() -> impl Strategy<Value = ToneComponent> {
    (1i64..400, 1i64..4, 0.0..2.5f64, -PI..PI)
        .prop_map(|(num, den, amp, phase)| ToneComponent::from_hz(Ratio::new(num, den), amp, phase))
}

/// Tone lists with distinct frequencies, sorted by the constructor.
fn spec(max_tones: usize) -> impl Strategy<Value = PerturbationSpec> {
    prop::collection::vec(tone(), 1..=max_tones).prop_filter_map("distinct frequencies", |mut tones| {
        tones.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
        tones.dedup_by(|a, b| a.frequency == b.frequency);
        PerturbationSpec::new(tones).ok()
    })
}

fn integer_hz_spec(max_tones: usize, max_amp: f64) -> impl Strategy<Value = PerturbationSpec> {
    prop::collection::btree_map(1i64..120, (0.0..max_amp, -PI..PI), 1..=max_tones).prop_map(|tones| {
        PerturbationSpec::new(
            tones.into_iter().map(|(hz, (a, p))| ToneComponent::from_hz(Ratio::from_integer(hz), a, p)).collect(),
        )
        .unwrap()
    })
}

fn model() -> impl Strategy<Value = FringeModel> {
    (0.0..=1.0f64, 0.5..5.0f64).prop_map(|(k, l)| FringeModel::new(k, l).unwrap())
}

fn random_events(rng: &mut ChaCha8Rng, n: usize, t_acq: f64, y_acq: f64) -> EventSet {
    let t = (0..n).map(|_| rng.random::<f64>() * t_acq).collect();
    let y = (0..n).map(|_| (rng.random::<f64>() - 0.5) * y_acq).collect();
    EventSet::from_columns(t, y, t_acq, y_acq).unwrap()
}

/// Events on dyadic lattices so that time and position differences are exact
/// and every shift below maps pairs to the same bins.
fn lattice_events(rng: &mut ChaCha8Rng, n: usize, t_span: f64, y_lo: f64, y_hi: f64) -> (Vec<f64>, Vec<f64>) {
    let t_steps = (t_span * 1024.0) as u64;
    let (y0, y1) = ((y_lo * 256.0) as i64, (y_hi * 256.0) as i64);
    let t = (0..n).map(|_| rng.random_range(0..=t_steps) as f64 / 1024.0).collect();
    let y = (0..n).map(|_| rng.random_range(y0..=y1) as f64 / 256.0).collect();
    (t, y)
}

fn brute_force_counts(events: &EventSet, b: &Binning) -> Vec<u64> {
    let (t, y) = (events.times(), events.positions());
    let mut counts = vec![0u64; b.n_u * b.n_tau];
    for i in 0..t.len() {
        for j in 0..t.len() {
            let dt = t[j] - t[i];
            if !(dt > 0.0 && dt <= b.tau_max) {
                continue;
            }
            let u = y[j] - y[i];
            if u < -b.u_max || u > b.u_max {
                continue;
            }
            let it = ((dt / b.dtau).ceil() as usize - 1).min(b.n_tau - 1);
            let iu = (((u + b.u_max) / b.du).floor() as usize).min(b.n_u - 1);
            counts[iu * b.n_tau + it] += 1;
        }
    }
    counts
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn tone_simulation(contrast: f64, spec: PerturbationSpec, n: usize, rate: f64, seed: u64) -> SimulationConfig {
    SimulationConfig {
        model: FringeModel::new(contrast, 2.0).unwrap(),
        perturbation: Perturbation::Tones(spec),
        n_events: n,
        count_rate: rate,
        acquisition_length: 20.0,
        seed,
    }
}

// ---------------------------------------------------------------- model

proptest! {
    #[test]
    fn tone_lists_survive_text_round_trip(spec in spec(5)) {
        let back = PerturbationSpec::parse(&spec.to_string()).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn perturbation_repeats_after_the_common_period(spec in spec(4), t in 0.0..10.0f64) {
        // Every frequency is num/den Hz with den < 4, so 12 s is a common period.
        let period = 12.0;
        prop_assert!((spec.evaluate(t + period) - spec.evaluate(t)).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn event_files_round_trip(seed in any::<u64>(), n in 1usize..300, t_acq in 0.01..1e4f64, y_acq in 0.1..100.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = random_events(&mut rng, n, t_acq, y_acq).with_metadata("seed", seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.csv");
        write_events(&path, &events).unwrap();
        let back = read_events(&path).unwrap();
        prop_assert_eq!(back, events);
    }

    #[test]
    fn grid_files_round_trip(
        seed in any::<u64>(),
        n_u in 1usize..12,
        n_tau in 1usize..20,
        du in 1e-3..2.0f64,
        dtau in 1e-6..1e-2f64,
        with_zero_row in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut grid = CorrelationGrid::empty(n_u, n_tau, du, dtau, rng.random_range(2..1_000_000), 37.5, 20.0);
        for i in 0..n_u * n_tau {
            grid.counts[i] = rng.random_range(0..u64::MAX / 2);
            grid.valid[i] = rng.random_bool(0.9);
            grid.values[i] = if grid.valid[i] { rng.random::<f64>() * 3.0 } else { 0.0 };
        }
        if with_zero_row {
            grid.zero_counts = Some((0..n_u).map(|_| rng.random_range(0..1000)).collect());
            grid.zero_values = Some((0..n_u).map(|_| rng.random::<f64>() * 2.0).collect());
        }
        let dir = tempfile::tempdir().unwrap();
        let text = dir.path().join("grid.txt");
        let binary = dir.path().join("grid.fcg");
        write_grid_text(&text, &grid).unwrap();
        write_grid_binary(&binary, &grid).unwrap();
        prop_assert_eq!(read_grid(&text).unwrap(), grid.clone());
        prop_assert_eq!(read_grid(&binary).unwrap(), grid);
    }
}

// ---------------------------------------------------------------- analytic

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn explicit_sum_is_real(spec in integer_hz_spec(2, 1.5), model in model(), u in -5.0..5.0f64, tau in 0.0..2.0f64) {
        let kernel = kernel_for_spec(&spec, None, Some(1e-9)).unwrap();
        let (_, im) = g2_explicit_complex(u, tau, &model, &kernel);
        prop_assert!(im.abs() < 1e-12, "imaginary residue {im}");
    }

    #[test]
    fn explicit_equals_approximate_at_superperiods(spec in integer_hz_spec(2, 1.5), model in model()) {
        let hz = spec.hz_rationals().unwrap();
        let ts = superperiod(&hz).unwrap();
        let m_max = default_m_max(&spec);
        let kernel = kernel_for_spec(&spec, Some(m_max), Some(1e-9)).unwrap();
        for tau in [0.0, ts, 2.0 * ts] {
            for i in 0..=20 {
                let u = model.period * (i as f64 / 20.0 - 0.5);
                let d = g2_explicit(u, tau, &model, &kernel) - g2_approx(u, tau, &model, &spec, m_max);
                prop_assert!(d.abs() < 1e-9, "tau {tau}, u {u}: {d}");
            }
        }
    }

    #[test]
    fn single_tone_forms_agree(spec in integer_hz_spec(1, 3.0 * PI), model in model(), u in -5.0..5.0f64, tau in 0.0..0.5f64) {
        let m_max = default_m_max(&spec);
        let kernel = kernel_for_spec(&spec, Some(m_max), Some(1e-9)).unwrap();
        let d = g2_explicit(u, tau, &model, &kernel) - g2_approx(u, tau, &model, &spec, m_max);
        prop_assert!(d.abs() < 1e-12, "{d}");
    }

    #[test]
    fn amplitude_is_complete_at_zero_lag(spec in integer_hz_spec(3, 3.0 * PI)) {
        let a0 = g2_approx_amplitude(0.0, &spec, default_m_max(&spec));
        prop_assert!((a0 - 1.0).abs() < 1e-8, "A(0) = {a0}");
    }

    #[test]
    fn correlation_contrast_is_capped(spec in integer_hz_spec(2, 2.0), model in model(), u in -5.0..5.0f64, tau in 0.0..2.0f64) {
        let cap = 0.5 * model.contrast * model.contrast + 1e-9;
        let m_max = default_m_max(&spec);
        let kernel = kernel_for_spec(&spec, Some(m_max), Some(1e-9)).unwrap();
        prop_assert!((g2_approx(u, tau, &model, &spec, m_max) - 1.0).abs() <= cap);
        prop_assert!((g2_explicit(u, tau, &model, &kernel) - 1.0).abs() <= cap);
    }

    #[test]
    fn bin_averaged_amplitude_matches_quadrature(
        spec in integer_hz_spec(1, 2.5),
        tau_bins in 0usize..50,
        dtau in 1e-5..2e-3f64,
    ) {
        let tau = (tau_bins as f64 + 0.5) * dtau;
        let m_max = default_m_max(&spec);
        let rule = GaussLegendre::new(64).unwrap();
        let brute = rule.integrate(tau - dtau / 2.0, tau + dtau / 2.0, |t| g2_approx_amplitude(t, &spec, m_max)) / dtau;
        let closed = discretized_amplitude(&spec, tau, dtau).unwrap();
        prop_assert!((closed - brute).abs() < 1e-6, "{closed} vs {brute}");
    }

    #[test]
    fn snr_peaks_at_the_optimal_spatial_bin(phi in 0.01..2.0f64, lambda in 0.5..5.0f64, n in 1e4..1e7f64) {
        let model = FringeModel::new(0.6, lambda).unwrap();
        let spec = PerturbationSpec::single_hz(50.0, phi, 0.0).unwrap();
        let snr = |du: f64| snr_theory(&model, &spec, n, 100.0, 20.0, 1.0, du, 2e-4).unwrap().0;
        let du_opt = snr_theory(&model, &spec, n, 100.0, 20.0, 1.0, lambda / 2.0, 2e-4).unwrap().1.du_opt;
        prop_assert!(((du_opt / lambda) - 0.371).abs() < 5e-4);
        let step = lambda / 1000.0;
        let argmax = (1..=1000).map(|i| i as f64 * step).max_by(|a, b| snr(*a).total_cmp(&snr(*b))).unwrap();
        prop_assert!((argmax - du_opt).abs() <= step);
    }
}

// ---------------------------------------------------------------- simulator

#[test]
fn simulation_does_not_depend_on_the_thread_count() {
    let spec = PerturbationSpec::single_hz(50.0, 0.76 * PI, 0.0).unwrap();
    let cfg = tone_simulation(0.6, spec, 50_000, 2000.0, 77);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate(&cfg).unwrap())
    };
    let one = run(1);
    for threads in [2, 4] {
        let other = run(threads);
        assert!(same_bits(one.times(), other.times()));
        assert!(same_bits(one.positions(), other.positions()));
        assert_eq!(one.metadata, other.metadata);
    }
}

#[test]
fn positions_pass_a_chi_square_test() {
    let contrast = 0.6;
    let spec = PerturbationSpec::new(vec![
        ToneComponent::from_hz(Ratio::from_integer(50), 0.4 * PI, 0.3),
        ToneComponent::from_hz(Ratio::from_integer(130), 0.9, -1.0),
    ])
    .unwrap();
    let cfg = tone_simulation(contrast, spec.clone(), 100_000, 1000.0, 2024);
    let events = simulate(&cfg).unwrap();
    let (y_acq, k) = (20.0, PI);
    // y + φ(t)/k has density 1 + K cos(k z); the window holds whole periods,
    // so folding back into it keeps that density.
    let bins = 100;
    let width = y_acq / bins as f64;
    let mut observed = vec![0f64; bins];
    for e in events.events() {
        let z = (e.y + spec.evaluate(e.t) / k + y_acq / 2.0).rem_euclid(y_acq);
        observed[((z / width) as usize).min(bins - 1)] += 1.0;
    }
    let n = events.len() as f64;
    let chi2: f64 = observed
        .iter()
        .enumerate()
        .map(|(i, &o)| {
            let (a, b) = (i as f64 * width - y_acq / 2.0, (i + 1) as f64 * width - y_acq / 2.0);
            let p = (width + contrast / k * ((k * b).sin() - (k * a).sin())) / y_acq;
            (o - n * p).powi(2) / (n * p)
        })
        .sum();
    // 99th percentile of χ² with 99 degrees of freedom.
    assert!(chi2 < 134.642, "chi2 = {chi2}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn realized_rate_matches_the_request(seed in any::<u64>(), n in 100usize..20_000, rate in 10.0..1e5f64) {
        let cfg = tone_simulation(0.5, PerturbationSpec::empty(), n, rate, seed);
        let events = simulate(&cfg).unwrap();
        let t = events.acquisition_time();
        let nf = n as f64;
        prop_assert!((nf / t - rate).abs() <= 3.0 * nf.sqrt() / t);
    }

    #[test]
    fn broadband_phase_repeats_after_one_resolution_period(
        seed in any::<u64>(),
        res_hz in 0.05..1.0f64,
        first in 1usize..50,
        lines in 3usize..200,
        t in 0.0..5.0f64,
    ) {
        let resolution = hz_to_angular(res_hz);
        let omega_min = first as f64 * resolution;
        let omega_max = omega_min + (lines - 1) as f64 * resolution;
        let band = NoiseBand {
            phi0: 0.02 * PI,
            omega0: 0.5 * (omega_min + omega_max),
            sigma_omega: 0.2 * (omega_max - omega_min),
            omega_min,
            omega_max,
            resolution,
        };
        let spec = gaussian_noise_spectrum(band, LineScale::default(), seed).unwrap();
        let period = TWO_PI / resolution;
        prop_assert!((broadband_phase(&spec, t + period) - broadband_phase(&spec, t)).abs() < 1e-9);
    }
}

// ---------------------------------------------------------------- correlator

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn counts_match_brute_force_for_any_worker_split(
        seed in any::<u64>(),
        n in 2usize..800,
        du in 0.05..2.0f64,
        dtau in 1e-3..0.05f64,
        tau_bins in 1usize..60,
        u_max in 0.5..8.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = random_events(&mut rng, n, 4.0, 12.0);
        let tau_max = tau_bins as f64 * dtau;
        let binning = Binning::new(du, dtau, tau_max, u_max).unwrap();
        let expected = brute_force_counts(&events, &binning);
        let pool_size = rayon::current_num_threads().max(3);
        for workers in [1, 2, pool_size] {
            let opts = CorrelatorOptions::new(du, dtau, tau_max, u_max).with_workers(workers);
            let grid = pair_count(&events, &opts).unwrap();
            prop_assert_eq!(&grid.counts, &expected, "workers = {}", workers);
        }
    }
}

#[test]
fn uniform_events_normalize_to_one() {
    for seed in 0..5 {
        let cfg = tone_simulation(0.0, PerturbationSpec::empty(), 20_000, 1000.0, seed);
        let events = simulate(&cfg).unwrap();
        let grid = correlate(&events, &CorrelatorOptions::new(0.5, 1e-3, 0.1, 5.0)).unwrap();
        let kept: Vec<f64> = grid.values.iter().zip(&grid.valid).filter(|(_, &ok)| ok).map(|(&v, _)| v).collect();
        let mean = kept.iter().sum::<f64>() / kept.len() as f64;
        let sigma = g2_variance_estimate(&grid).sqrt();
        assert!((mean - 1.0).abs() < 5.0 * sigma / (kept.len() as f64).sqrt(), "seed {seed}: mean {mean}");
    }
}

#[test]
fn correlation_cost_grows_linearly() {
    let opts = CorrelatorOptions::new(0.5, 1e-3, 0.05, 5.0).with_workers(1);
    let time = |n: usize| {
        let cfg = tone_simulation(0.0, PerturbationSpec::empty(), n, 2000.0, 5);
        let events = simulate(&cfg).unwrap();
        (0..3)
            .map(|_| {
                let start = Instant::now();
                pair_count(&events, &opts).unwrap();
                start.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let (small, large) = (time(200_000), time(400_000));
    let ratio = large / small;
    assert!((1.0..=4.0).contains(&ratio), "doubling N changed the time by {ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn time_shift_leaves_the_grid_unchanged(seed in any::<u64>(), shift_steps in 1u32..256) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t_acq, y_acq) = (4.0, 16.0);
        let shift = shift_steps as f64 / 256.0;
        let (t, y) = lattice_events(&mut rng, 1500, t_acq - shift, -8.0, 8.0);
        let opts = CorrelatorOptions::new(0.25, 5e-3, 0.2, 3.0);
        let base = correlate(&EventSet::from_columns(t.clone(), y.clone(), t_acq, y_acq).unwrap(), &opts).unwrap();
        let moved = EventSet::from_columns(t.iter().map(|x| x + shift).collect(), y, t_acq, y_acq).unwrap();
        let shifted = correlate(&moved, &opts).unwrap();
        prop_assert_eq!(&shifted.counts, &base.counts);
        prop_assert_eq!(&shifted.zero_counts, &base.zero_counts);
        prop_assert!(same_bits(&shifted.values, &base.values));
    }

    #[test]
    fn position_shift_leaves_the_grid_unchanged(seed in any::<u64>(), shift_steps in 1u32..512) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t_acq, y_acq) = (4.0, 16.0);
        let shift = shift_steps as f64 / 256.0;
        let (t, y) = lattice_events(&mut rng, 1500, t_acq, -8.0, 8.0 - shift);
        let opts = CorrelatorOptions::new(0.25, 5e-3, 0.2, 3.0);
        let base = correlate(&EventSet::from_columns(t.clone(), y.clone(), t_acq, y_acq).unwrap(), &opts).unwrap();
        let moved = EventSet::from_columns(t, y.iter().map(|v| v + shift).collect(), t_acq, y_acq).unwrap();
        let shifted = correlate(&moved, &opts).unwrap();
        prop_assert_eq!(&shifted.counts, &base.counts);
        prop_assert!(same_bits(&shifted.values, &base.values));
    }

    #[test]
    fn reversal_leaves_the_grid_unchanged(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t_acq, y_acq) = (4.0, 16.0);
        let (t, y) = lattice_events(&mut rng, 1500, t_acq, -8.0, 8.0);
        let opts = CorrelatorOptions::new(0.25, 5e-3, 0.2, 3.0);
        let base = correlate(&EventSet::from_columns(t.clone(), y.clone(), t_acq, y_acq).unwrap(), &opts).unwrap();
        let reversed = EventSet::from_columns(
            t.iter().map(|x| t_acq - x).collect(),
            y.iter().map(|v| -v).collect(),
            t_acq,
            y_acq,
        )
        .unwrap();
        let back = correlate(&reversed, &opts).unwrap();
        prop_assert_eq!(&back.counts, &base.counts);
        prop_assert_eq!(&back.valid, &base.valid);
        prop_assert!(same_bits(&back.values, &base.values));
    }
}

// ---------------------------------------------------------------- inference

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tone_inversion_undoes_the_analytic_line(phi in 1e-3..1.8f64, contrast in 0.1..1.0f64, hz in 1.0..500.0f64) {
        let model = FringeModel::new(contrast, 2.0).unwrap();
        let spec = PerturbationSpec::single_hz(hz, phi, 0.0).unwrap();
        let spectrum = amplitude_spectrum_analytic(&model, &spec, None, 0.0, true).unwrap();
        let omega = hz_to_angular(hz);
        let line = spectrum.line_near(omega, 1e-9 * omega).unwrap();
        // A sampled cosine of amplitude a shows as a/2 in the one-sided spectrum.
        let inv = invert_tone_amplitude(line.magnitude / 2.0, contrast, omega, 0.0, 0.0, 2.0).unwrap();
        prop_assert!((inv.phi - phi).abs() < 1e-6, "{} vs {phi}", inv.phi);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reconstruction_never_lowers_the_contrast(seed in any::<u64>(), spec in integer_hz_spec(2, 2.5)) {
        let spec = PerturbationSpec::new(
            spec.components().iter().map(|c| ToneComponent { peak_phase_deviation: c.peak_phase_deviation + 0.5, ..*c }).collect(),
        )
        .unwrap();
        let events = simulate(&tone_simulation(0.6, spec.clone(), 100_000, 2000.0, seed)).unwrap();
        let before = histogram_contrast(&events, 2.0).unwrap();
        let after = histogram_contrast(&reconstruct(&events, 2.0, &spec).unwrap(), 2.0).unwrap();
        prop_assert!(after >= before, "{after} < {before}");
    }
}
