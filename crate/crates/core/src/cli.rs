//! Batch command-line front end.
//!
//! Each subcommand is a thin wrapper around a public pipeline function in
//! this module, so the same chain can be driven from tests without spawning
//! a process. Reports go to stdout as `key = value` lines, tables to CSV
//! files and applicability warnings to stderr.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::analytic::{
    amplitude_spectrum_analytic, default_m_max, discretized_contrast, g2_approx, g2_explicit, kernel_for_spec,
    noise_theory, reduced_contrast, sinc, snr_theory, transition_ratio, TRANSITION_THRESHOLD,
};
use crate::bessel::bessel_j1;
use crate::config::{AnalyticKind, AnalyticSettings, NoiseFitSettings, Scenario, Solution, PRESET_NAMES};
use crate::correlator::{centred_rows, correlate, CorrelatorOptions};
use crate::error::{Error, Result};
use crate::fit::bisect;
use crate::inference::{
    broadband_amplitude, estimate_band_center, fit_fringe_at_tau0, fit_gaussian_noise, histogram_contrast,
    invert_tone_amplitude, noise_floor, phase_search, reconstruct, temporal_spectrum, theoretical_g2_from_spectrum,
    FringeFit, GaussianNoiseFit, NoiseFitOptions, PhaseSearchOptions, PhaseSearchResult, ToneInversion,
};
use crate::io;
use crate::model::{AmplitudeSpectrum, CorrelationGrid, EventSet, FringeModel, PerturbationSpec, ToneComponent};
use crate::simulator::{phase_series_spectrum, simulate};
use crate::units::{angular_to_hz, format_angle_pi, hz_to_angular, TWO_PI};

#[derive(Debug, Parser)]
#[command(name = "fringecorr", version, about = "Second-order correlation analysis of perturbed interference patterns")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a time-tagged event file from a scenario.
    Simulate(SimulateArgs),
    /// Count event pairs into a normalized g²(u, τ) grid.
    Correlate(CorrelateArgs),
    /// Fringe fit, temporal spectrum, noise floor, SNR and tone inversion.
    Analyze(AnalyzeArgs),
    /// Signal, noise and SNR of the tone line versus spatial bin size.
    Sweep(SweepArgs),
    /// Fit a Gaussian broad-band perturbation to a grid.
    FitNoise(FitNoiseArgs),
    /// Undo a known or searched tone perturbation in an event file.
    Reconstruct(ReconstructArgs),
    /// Closed-form curves and surfaces for a scenario.
    Analytic(AnalyticArgs),
    /// List the built-in scenario presets.
    Presets(PresetsArgs),
}

/// Where to take the scenario from.
#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    /// Built-in preset name (fig1 … fig13).
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Scenario file in TOML.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl ScenarioArgs {
    pub fn load(&self) -> Result<Option<Scenario>> {
        match (&self.preset, &self.config) {
            (Some(name), _) => Scenario::preset(name).map(Some),
            (None, Some(path)) => Scenario::load(path).map(Some),
            (None, None) => Ok(None),
        }
    }

    pub fn require(&self) -> Result<Scenario> {
        self.load()?.ok_or_else(|| Error::invalid("give a scenario with --preset or --config"))
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Output event file.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the amplitude spectrum of the applied phase φ(t).
    #[arg(long)]
    pub phase_spectrum: Option<PathBuf>,
    /// Sampling step of φ(t) for the phase spectrum, in seconds.
    #[arg(long, default_value_t = 0.01)]
    pub phase_step: f64,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    /// Input event file.
    pub events: PathBuf,
    /// Output grid file; `.fcg` or `.bin` selects the packed binary format.
    #[arg(long)]
    pub out: PathBuf,
    /// Scenario supplying the correlation settings; flags override it.
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Spatial bin size in mm.
    #[arg(long)]
    pub du: Option<f64>,
    /// Temporal bin size in s.
    #[arg(long)]
    pub dtau: Option<f64>,
    /// Largest time difference in s.
    #[arg(long)]
    pub tau_max: Option<f64>,
    /// Largest |u| in mm.
    #[arg(long)]
    pub u_max: Option<f64>,
    /// Worker slices; 0 uses all cores. Output does not depend on it.
    #[arg(long, env = "FRINGECORR_WORKERS", default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Input grid file.
    pub grid: PathBuf,
    /// Position of the u-row used for the temporal spectrum, in mm.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub u0: f64,
    /// Tone frequency in Hz; the strongest line is used when absent.
    #[arg(long)]
    pub tone_hz: Option<f64>,
    /// Harmonics of the tone excluded from the noise floor.
    #[arg(long, default_value_t = 5)]
    pub harmonics: usize,
    /// Contrast to use instead of the fringe-fit estimate.
    #[arg(long)]
    pub contrast: Option<f64>,
    /// Period in mm to use instead of the fringe-fit value.
    #[arg(long)]
    pub period: Option<f64>,
    /// Write the temporal spectrum as a CSV table.
    #[arg(long)]
    pub spectrum_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Input event file.
    pub events: PathBuf,
    /// Scenario with `model`, a single tone and a `sweep` section.
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Output CSV table.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "FRINGECORR_WORKERS", default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct FitNoiseArgs {
    /// Input grid file.
    pub grid: PathBuf,
    /// Scenario with a `noise_fit` section.
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Write the fitted model grid.
    #[arg(long)]
    pub theory_out: Option<PathBuf>,
    /// Write the measured and fitted spectra at u = 0.
    #[arg(long)]
    pub spectra_out: Option<PathBuf>,
    /// Write the fitted line amplitudes.
    #[arg(long)]
    pub lines_out: Option<PathBuf>,
    /// Quadrature nodes per τ-bin for the bin-averaged model.
    #[arg(long, default_value_t = 8)]
    pub tau_nodes: usize,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Input event file.
    pub events: PathBuf,
    /// Fringe period in mm; read from the event metadata when absent.
    #[arg(long)]
    pub period: Option<f64>,
    /// Tone as `HZ:AMPLITUDE[:PHASE]`, e.g. `50:0.76pi:0.1pi`. Repeatable.
    #[arg(long = "tone", required = true)]
    pub tones: Vec<String>,
    /// Search the phases instead of using the given ones.
    #[arg(long)]
    pub search: bool,
    /// Restrict a two-tone search to the invariance families through the
    /// given phases.
    #[arg(long, requires = "search")]
    pub invariance: bool,
    /// Coarse grid points per phase in the search.
    #[arg(long, default_value_t = 48)]
    pub grid_points: usize,
    /// Output event file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Directory for the CSV tables.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PresetsArgs {
    /// Print the TOML of one preset.
    #[arg(long)]
    pub show: Option<String>,
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

fn report(key: &str, value: impl std::fmt::Display) {
    println!("{key} = {value}");
}

/// Runs one parsed command.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Correlate(a) => cmd_correlate(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::FitNoise(a) => cmd_fit_noise(&a),
        Command::Reconstruct(a) => cmd_reconstruct(&a),
        Command::Analytic(a) => cmd_analytic(&a),
        Command::Presets(a) => cmd_presets(&a),
    }
}

/// A named CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, headers: &[&str]) -> Self {
        Self { name: name.into(), headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let headers: Vec<&str> = self.headers.iter().map(String::as_str).collect();
        io::write_table(path, &headers, &self.rows)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn single_tone(spec: &PerturbationSpec) -> Result<&ToneComponent> {
    match spec.components() {
        [c] => Ok(c),
        _ => Err(Error::invalid("this analysis needs exactly one tone")),
    }
}

// ---------------------------------------------------------------- simulate

/// Events for a scenario, with an optional seed override.
pub fn simulate_scenario(scenario: &Scenario, seed: Option<u64>) -> Result<EventSet> {
    let mut cfg = scenario.simulation_config()?;
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.perturbation = scenario.perturbation(s)?;
    }
    simulate(&cfg)
}

/// Amplitude spectrum of the applied phase sampled every `step` seconds over
/// the acquisition time.
pub fn phase_spectrum_table(scenario: &Scenario, seed: Option<u64>, acquisition_time: f64, step: f64) -> Result<Table> {
    let s = scenario.simulation.ok_or_else(|| Error::config("simulation", "section is missing"))?;
    let perturbation = scenario.perturbation(seed.unwrap_or(s.seed))?;
    let n = (acquisition_time / step).floor() as usize;
    let mut table = Table::new("phase_spectrum", &["frequency_hz", "amplitude_rad"]);
    table.rows = phase_series_spectrum(&perturbation, step, n)?.into_iter().map(|(f, a)| vec![f, a]).collect();
    Ok(table)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let scenario = a.scenario.require()?;
    let events = simulate_scenario(&scenario, a.seed)?;
    io::write_events(&a.out, &events)?;
    report("n_events", events.len());
    report("acquisition_time_s", events.acquisition_time());
    report("acquisition_length_mm", events.acquisition_length());
    match histogram_contrast(&events, scenario.model.period) {
        Ok(c) => report("histogram_contrast", c),
        Err(e) => warn(&format!("histogram contrast unavailable: {e}")),
    }
    if let Some(path) = &a.phase_spectrum {
        phase_spectrum_table(&scenario, a.seed, events.acquisition_time(), a.phase_step)?.write(path)?;
    }
    Ok(())
}

// --------------------------------------------------------------- correlate

/// Correlator options from a scenario and explicit overrides.
pub fn correlator_options(
    scenario: Option<&Scenario>,
    du: Option<f64>,
    dtau: Option<f64>,
    tau_max: Option<f64>,
    u_max: Option<f64>,
) -> Result<CorrelatorOptions> {
    let c = scenario.and_then(|s| s.correlation);
    let pick = |flag: Option<f64>, cfg: Option<f64>, name: &str| {
        flag.or(cfg).ok_or_else(|| Error::invalid(format!("missing --{name} (and no scenario value)")))
    };
    let du = pick(du, c.map(|c| c.du_mm), "du")?;
    let dtau = pick(dtau, c.map(|c| c.dtau_s), "dtau")?;
    let tau_max = pick(tau_max, c.map(|c| c.tau_max_s), "tau-max")?;
    let u_max = pick(u_max, scenario.and_then(|s| s.u_max()), "u-max")?;
    Ok(CorrelatorOptions::new(du, dtau, tau_max, u_max))
}

fn cmd_correlate(a: &CorrelateArgs) -> Result<()> {
    let scenario = a.scenario.load()?;
    let opts = correlator_options(scenario.as_ref(), a.du, a.dtau, a.tau_max, a.u_max)?.with_workers(a.workers);
    let events = io::read_events(&a.events)?;
    let grid = correlate(&events, &opts)?;
    let invalid = grid.valid.iter().filter(|v| !**v).count();
    if invalid > 0 {
        warn(&format!("{invalid} of {} bins have too little overlap and are flagged invalid", grid.valid.len()));
    }
    io::write_grid(&a.out, &grid)?;
    report("n_u", grid.n_u);
    report("n_tau", grid.n_tau);
    report("pairs", grid.total_counts());
    Ok(())
}

// ----------------------------------------------------------------- analyze

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzeOptions {
    pub u0: f64,
    pub tone_hz: Option<f64>,
    pub harmonics: usize,
    pub contrast: Option<f64>,
    pub period: Option<f64>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self { u0: 0.0, tone_hz: None, harmonics: 5, contrast: None, period: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToneReport {
    /// Angular frequency of the picked line.
    pub omega: f64,
    pub line_height: f64,
    pub noise_floor: f64,
    pub snr: f64,
    /// `σ_F` from the pair-count noise law.
    pub noise_floor_theory: f64,
    pub inversion: Option<ToneInversion>,
    /// Theoretical SNR for the recovered amplitude on this row.
    pub snr_theory: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub fringe: Option<FringeFit>,
    /// Pattern contrast with the spatial bin average removed.
    pub contrast: Option<f64>,
    pub period: Option<f64>,
    pub spectrum: AmplitudeSpectrum,
    pub tone: Option<ToneReport>,
    pub warnings: Vec<String>,
}

/// `K` from a `g²` fringe fit on bins of width `du`: `K_g2 / sqrt|sinc(kΔu/2)|`.
pub fn contrast_from_fringe(fringe: &FringeFit, du: f64) -> f64 {
    let k = TWO_PI / fringe.period_g2;
    fringe.contrast_g2 / sinc(k * du / 2.0).abs().sqrt()
}

fn harmonic_bands(omega: f64, resolution: f64, harmonics: usize) -> Vec<(f64, f64)> {
    (1..=harmonics.max(1)).map(|m| (m as f64 * omega - 2.0 * resolution, m as f64 * omega + 2.0 * resolution)).collect()
}

pub fn analyze_grid(grid: &CorrelationGrid, opts: &AnalyzeOptions) -> Result<AnalysisReport> {
    let mut warnings = Vec::new();
    let fringe = if grid.n_u >= 5 {
        match fit_fringe_at_tau0(grid) {
            Ok(f) => {
                if f.below_noise_floor {
                    warnings.push("fringe contrast is below the noise floor".to_string());
                }
                Some(f)
            }
            Err(e) => {
                warnings.push(format!("fringe fit failed: {e}"));
                None
            }
        }
    } else {
        None
    };
    let period = opts.period.or(fringe.map(|f| f.period_g2));
    let contrast = opts.contrast.or(fringe.map(|f| contrast_from_fringe(&f, grid.du)));
    let spectrum = temporal_spectrum(grid, opts.u0)?;
    if spectrum.frequencies.len() < 4 {
        return Err(Error::invalid("too few τ-bins for a spectrum"));
    }
    let res = spectrum.frequency_resolution;
    let target = match opts.tone_hz {
        Some(hz) => hz_to_angular(hz),
        None => {
            let (i, _) = spectrum
                .magnitudes
                .iter()
                .enumerate()
                .skip(2)
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("spectrum has bins");
            spectrum.frequencies[i]
        }
    };
    let tone = match spectrum.peak_near(target, 1.5 * res) {
        None => {
            warnings.push(format!("no spectrum bin near {} Hz", angular_to_hz(target)));
            None
        }
        Some((omega, height)) => {
            let floor = noise_floor(&spectrum, &harmonic_bands(omega, res, opts.harmonics))?;
            let noise_th = noise_theory(
                grid.n_events as f64,
                grid.acquisition_time,
                grid.acquisition_length,
                grid.du,
                grid.dtau,
                grid.tau_max,
            )
            .map(|n| n.sigma_spectrum)
            .unwrap_or(f64::NAN);
            let mut inversion = None;
            let mut snr_th = None;
            if let (Some(k_est), Some(lambda)) = (contrast, period) {
                let k = TWO_PI / lambda;
                let psi = fringe.map(|f| f.phase_offset).unwrap_or(0.0);
                let row_factor = if grid.n_u == 1 { 1.0 } else { (k * spectrum.u0 + psi).cos().abs() };
                if row_factor < 0.2 {
                    warnings
                        .push(format!("row at u = {} mm sits near a fringe node; tone inversion skipped", spectrum.u0));
                } else {
                    match invert_tone_amplitude(height / row_factor, k_est, omega, grid.du, grid.dtau, lambda) {
                        Ok(inv) => {
                            if inv.is_ambiguous() {
                                warnings.push(format!(
                                    "line height is also reached at φ = {:?} rad; the principal branch is reported",
                                    inv.alternatives
                                ));
                            }
                            let model = FringeModel::new(k_est.min(1.0), lambda)?;
                            let spec = PerturbationSpec::new(vec![ToneComponent::new(omega, inv.phi, 0.0)])?;
                            snr_th = snr_theory(
                                &model,
                                &spec,
                                grid.n_events as f64,
                                grid.acquisition_time,
                                grid.acquisition_length,
                                grid.tau_max,
                                grid.du,
                                grid.dtau,
                            )
                            .ok()
                            .map(|(s, _)| s * row_factor);
                            inversion = Some(inv);
                        }
                        Err(e) => warnings.push(format!("tone inversion failed: {e}")),
                    }
                }
            }
            Some(ToneReport {
                omega,
                line_height: height,
                noise_floor: floor,
                snr: height / floor,
                noise_floor_theory: noise_th,
                inversion,
                snr_theory: snr_th,
            })
        }
    };
    Ok(AnalysisReport { fringe, contrast, period, spectrum, tone, warnings })
}

pub fn spectrum_table(spectrum: &AmplitudeSpectrum, name: &str, column: &str) -> Table {
    let mut t = Table::new(name, &["frequency_hz", column]);
    t.rows = spectrum.frequencies.iter().zip(&spectrum.magnitudes).map(|(&w, &m)| vec![angular_to_hz(w), m]).collect();
    t
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    let grid = io::read_grid(&a.grid)?;
    let opts =
        AnalyzeOptions { u0: a.u0, tone_hz: a.tone_hz, harmonics: a.harmonics, contrast: a.contrast, period: a.period };
    let r = analyze_grid(&grid, &opts)?;
    for w in &r.warnings {
        warn(w);
    }
    if let Some(f) = &r.fringe {
        report("contrast_g2", format!("{} +- {}", f.contrast_g2, f.contrast_g2_se));
        report("period_g2_mm", format!("{} +- {}", f.period_g2, f.period_g2_se));
        report("fringe_below_noise_floor", f.below_noise_floor);
    }
    if let Some(k) = r.contrast {
        report("contrast_estimate", k);
    }
    report("spectrum_u0_mm", r.spectrum.u0);
    if let Some(t) = &r.tone {
        report("tone_hz", angular_to_hz(t.omega));
        report("line_height", t.line_height);
        report("noise_floor", t.noise_floor);
        report("noise_floor_theory", t.noise_floor_theory);
        report("snr", t.snr);
        if let Some(s) = t.snr_theory {
            report("snr_theory", s);
        }
        if let Some(inv) = &t.inversion {
            report("phi_recovered", format_angle_pi(inv.phi));
        }
    }
    if let Some(path) = &a.spectrum_out {
        spectrum_table(&r.spectrum, "spectrum", "magnitude").write(path)?;
    }
    Ok(())
}

// ------------------------------------------------------------------- sweep

/// One spatial bin size of the SNR sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub du: f64,
    pub du_over_lambda: f64,
    /// Height of the tone line in the centred row.
    pub signal: f64,
    pub noise: f64,
    pub snr: f64,
    /// `|(K²/2) J₁(φ)² sinc(kΔu/2) sinc(ωΔτ/2)|` for the scenario parameters.
    pub signal_theory: f64,
    pub snr_theory: f64,
    /// Amplitude recovered by inverting the line height; NaN when it fails.
    pub phi_recovered: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Fringe fit on an auxiliary short-τ grid.
    pub fringe: FringeFit,
    pub contrast_estimate: f64,
}

impl SweepReport {
    pub fn table(&self) -> Table {
        let mut t = Table::new(
            "sweep",
            &[
                "du_mm",
                "du_over_lambda",
                "signal",
                "noise",
                "snr",
                "signal_theory",
                "snr_theory",
                "phi_recovered_over_pi",
            ],
        );
        t.rows = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.du,
                    r.du_over_lambda,
                    r.signal,
                    r.noise,
                    r.snr,
                    r.signal_theory,
                    r.snr_theory,
                    r.phi_recovered / PI,
                ]
            })
            .collect();
        t
    }

    /// Row with the largest measured SNR.
    pub fn best(&self) -> Option<&SweepRow> {
        self.rows.iter().max_by(|a, b| a.snr.total_cmp(&b.snr))
    }
}

/// Fringe fit on a short-τ grid with `Δu = λ/10` over `±2λ`, used to estimate
/// contrast and period when the analysis rows are too coarse to fit.
pub fn auxiliary_fringe(events: &EventSet, period: f64, dtau: f64, workers: usize) -> Result<(FringeFit, f64)> {
    let du = period / 10.0;
    let u_max = (2.0 * period).min(0.5 * events.acquisition_length());
    let opts = CorrelatorOptions::new(du, dtau, 4.0 * dtau, u_max).with_workers(workers);
    let grid = correlate(events, &opts)?;
    let fringe = fit_fringe_at_tau0(&grid)?;
    Ok((fringe, contrast_from_fringe(&fringe, du)))
}

/// Centred-row spectra of one tone for the scenario's log-spaced `Δu` values.
pub fn sweep_scenario(events: &EventSet, scenario: &Scenario, workers: usize) -> Result<SweepReport> {
    let s = scenario.sweep.ok_or_else(|| Error::config("sweep", "section is missing"))?;
    let tone = single_tone(&scenario.tones)?;
    let model = scenario.model;
    let k = model.wave_number();
    let dus = s.du_values(model.period);
    let rows = centred_rows(events, &dus, s.dtau_s, s.tau_max_s, workers)?;
    let (fringe, k_est) = auxiliary_fringe(events, model.period, s.dtau_s, workers)?;
    let omega = tone.frequency;
    let j1 = bessel_j1(tone.peak_phase_deviation);
    let out = rows
        .iter()
        .zip(&dus)
        .map(|(row, &du)| -> Result<SweepRow> {
            let spectrum = temporal_spectrum(row, 0.0)?;
            let res = spectrum.frequency_resolution;
            let (w, signal) =
                spectrum.peak_near(omega, 1.5 * res).ok_or_else(|| Error::invalid("tone lies outside the spectrum"))?;
            let noise = noise_floor(&spectrum, &harmonic_bands(w, res, 5))?;
            let signal_theory =
                (0.5 * model.contrast * model.contrast * j1 * j1 * sinc(k * du / 2.0) * sinc(omega * s.dtau_s / 2.0))
                    .abs();
            let snr_th = snr_theory(
                &model,
                &scenario.tones,
                row.n_events as f64,
                row.acquisition_time,
                row.acquisition_length,
                s.tau_max_s,
                du,
                s.dtau_s,
            )
            .map(|(v, _)| v.abs())
            .unwrap_or(f64::NAN);
            let phi = invert_tone_amplitude(signal, k_est, w, du, s.dtau_s, fringe.period_g2)
                .map(|i| i.phi)
                .unwrap_or(f64::NAN);
            Ok(SweepRow {
                du,
                du_over_lambda: du / model.period,
                signal,
                noise,
                snr: signal / noise,
                signal_theory,
                snr_theory: snr_th,
                phi_recovered: phi,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { rows: out, fringe, contrast_estimate: k_est })
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let scenario = a.scenario.require()?;
    let events = io::read_events(&a.events)?;
    let r = sweep_scenario(&events, &scenario, a.workers)?;
    r.table().write(&a.out)?;
    report("contrast_estimate", r.contrast_estimate);
    report("period_g2_mm", r.fringe.period_g2);
    if let Some(best) = r.best() {
        report("snr_argmax_du_over_lambda", best.du_over_lambda);
        report("snr_max", best.snr);
    }
    Ok(())
}

// --------------------------------------------------------------- fit-noise

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFitReport {
    pub fringe: FringeFit,
    /// Initial band centre in rad/s.
    pub omega0_init: f64,
    pub fit: GaussianNoiseFit,
    /// Fitted model on the grid geometry.
    pub theory: CorrelationGrid,
    pub spectrum: AmplitudeSpectrum,
    pub theory_spectrum: AmplitudeSpectrum,
    /// Fitted line amplitudes over the band, `(ω, φ̂)`.
    pub lines: Vec<(f64, f64)>,
}

/// Fringe fit at `τ = 0` followed by the broad-band fit and the fitted model.
pub fn fit_noise_grid(grid: &CorrelationGrid, settings: &NoiseFitSettings, tau_nodes: usize) -> Result<NoiseFitReport> {
    let fringe = fit_fringe_at_tau0(grid)?;
    let spectrum = temporal_spectrum(grid, 0.0)?;
    let omega0_init = match settings.init_omega0 {
        Some(w) => w,
        None => estimate_band_center(&spectrum, settings.omega_min, settings.omega_max)?,
    };
    let opts = NoiseFitOptions { tau_limit: settings.tau_limit, tau_nodes, ..NoiseFitOptions::default() };
    let band = (settings.omega_min, settings.omega_max, settings.resolution);
    let fit =
        fit_gaussian_noise(grid, &fringe, (settings.init_phi0, omega0_init, settings.init_sigma_omega), band, &opts)?;
    let n = ((settings.omega_max - settings.omega_min) / settings.resolution).round() as usize + 1;
    let lines: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let w = settings.omega_min + j as f64 * settings.resolution;
            (w, broadband_amplitude(fit.phi0, fit.omega0, fit.sigma_omega, w))
        })
        .collect();
    let freqs: Vec<f64> = lines.iter().map(|l| l.0).collect();
    let amps: Vec<f64> = lines.iter().map(|l| l.1).collect();
    let theory = theoretical_g2_from_spectrum(fringe.contrast_g2, fringe.period_g2, &freqs, &amps, grid, tau_nodes)?;
    let theory_spectrum = temporal_spectrum(&theory, 0.0)?;
    Ok(NoiseFitReport { fringe, omega0_init, fit, theory, spectrum, theory_spectrum, lines })
}

fn cmd_fit_noise(a: &FitNoiseArgs) -> Result<()> {
    let scenario = a.scenario.require()?;
    let settings = scenario.noise_fit.ok_or_else(|| Error::config("noise_fit", "section is missing"))?;
    let grid = io::read_grid(&a.grid)?;
    let r = fit_noise_grid(&grid, &settings, a.tau_nodes)?;
    let f = &r.fit;
    report("contrast_g2", format!("{} +- {}", r.fringe.contrast_g2, r.fringe.contrast_g2_se));
    report("period_g2_mm", format!("{} +- {}", r.fringe.period_g2, r.fringe.period_g2_se));
    report("f0_init_hz", angular_to_hz(r.omega0_init));
    report("phi0_over_pi", format!("{} +- {}", f.phi0 / PI, f.phi0_se / PI));
    report("f0_hz", format!("{} +- {}", angular_to_hz(f.omega0), angular_to_hz(f.omega0_se)));
    report("sigma_hz", format!("{} +- {}", angular_to_hz(f.sigma_omega), angular_to_hz(f.sigma_omega_se)));
    report("rss", f.rss);
    report("n_residuals", f.n_residuals);
    if let Some(path) = &a.theory_out {
        io::write_grid(path, &r.theory)?;
    }
    if let Some(path) = &a.spectra_out {
        let mut t = Table::new("spectra", &["frequency_hz", "magnitude_measured", "magnitude_model"]);
        t.rows = r
            .spectrum
            .frequencies
            .iter()
            .zip(&r.spectrum.magnitudes)
            .zip(&r.theory_spectrum.magnitudes)
            .map(|((&w, &m), &th)| vec![angular_to_hz(w), m, th])
            .collect();
        t.write(path)?;
    }
    if let Some(path) = &a.lines_out {
        let mut t = Table::new("lines", &["frequency_hz", "amplitude_rad"]);
        t.rows = r.lines.iter().map(|&(w, p)| vec![angular_to_hz(w), p]).collect();
        t.write(path)?;
    }
    Ok(())
}

// ------------------------------------------------------------- reconstruct

/// Parses `HZ:AMPLITUDE[:PHASE]`; the flag tells whether a phase was given.
pub fn parse_tone(text: &str) -> Result<(ToneComponent, bool)> {
    ToneComponent::parse(text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionReport {
    pub initial_contrast: f64,
    pub final_contrast: f64,
    /// Phases used for the reconstruction.
    pub phases: Vec<f64>,
    pub search: Option<PhaseSearchResult>,
}

/// Reconstructs with the given phases, or with searched ones when `search`
/// is set.
pub fn reconstruct_events(
    events: &EventSet,
    period: f64,
    spec: &PerturbationSpec,
    search: Option<&PhaseSearchOptions>,
) -> Result<(EventSet, ReconstructionReport)> {
    let initial_contrast = histogram_contrast(events, period)?;
    let (spec, found) = match search {
        Some(opts) => {
            let found = phase_search(events, period, spec, opts)?;
            (spec.with_phases(&found.phases)?, Some(found))
        }
        None => (spec.clone(), None),
    };
    let out = reconstruct(events, period, &spec)?;
    let final_contrast = histogram_contrast(&out, period)?;
    Ok((out, ReconstructionReport { initial_contrast, final_contrast, phases: spec.phases(), search: found }))
}

fn cmd_reconstruct(a: &ReconstructArgs) -> Result<()> {
    let events = io::read_events(&a.events)?;
    let period = match a.period {
        Some(p) => p,
        None => events
            .metadata
            .get("period_mm")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::invalid("no --period given and none in the event metadata"))?,
    };
    let mut tones = Vec::new();
    for t in &a.tones {
        let (tone, has_phase) = parse_tone(t)?;
        if !has_phase && !a.search {
            return Err(Error::invalid(format!("tone `{t}` has no phase; give one or use --search")));
        }
        tones.push(tone);
    }
    let spec = PerturbationSpec::new(tones)?;
    let cycles = events.acquisition_length() / period;
    if (cycles - cycles.round()).abs() > 1e-6 {
        warn("the window is not a whole number of periods; shifted positions are folded approximately");
    }
    let search = a.search.then(|| PhaseSearchOptions {
        grid_points: a.grid_points,
        use_invariance: a.invariance,
        ..PhaseSearchOptions::default()
    });
    let (out, r) = reconstruct_events(&events, period, &spec, search.as_ref())?;
    report("initial_contrast", r.initial_contrast);
    report("final_contrast", r.final_contrast);
    let phases: Vec<String> = r.phases.iter().map(|&p| format_angle_pi(p)).collect();
    report("phases", phases.join(","));
    if let Some(s) = &r.search {
        report("evaluations", s.evaluations);
        if let Some(m) = s.mirrored {
            report("mirrored_family", m);
        }
    }
    if let Some(path) = &a.out {
        io::write_events(path, &out)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- analytic

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalyticOutput {
    pub tables: Vec<Table>,
    /// Scalar results, `(key, value)`.
    pub summary: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

/// Evaluates the scenario's `analytic` section.
pub fn analytic_tables(scenario: &Scenario) -> Result<AnalyticOutput> {
    let a = scenario.analytic.as_ref().ok_or_else(|| Error::config("analytic", "section is missing"))?;
    match a.kind {
        AnalyticKind::Washout => washout(scenario, a),
        AnalyticKind::Surface => surface(scenario, a),
        AnalyticKind::Transition => transition(scenario, a),
        AnalyticKind::Spectrum => line_spectra(scenario, a),
        AnalyticKind::Discretization => discretization(scenario, a),
        AnalyticKind::Snr => snr_surface(scenario, a),
    }
}

fn with_first_amplitude(spec: &PerturbationSpec, phi: f64) -> Result<PerturbationSpec> {
    let mut c = spec.components().to_vec();
    let first = c.first_mut().ok_or_else(|| Error::invalid("scenario has no tones"))?;
    first.peak_phase_deviation = phi;
    PerturbationSpec::new(c)
}

fn washout(s: &Scenario, a: &AnalyticSettings) -> Result<AnalyticOutput> {
    if s.model.contrast <= 0.0 {
        return Err(Error::config("model.contrast", "washout needs a positive contrast"));
    }
    let phi_max = a.phi_max.as_ref().map(|p| p.angle("analytic.phi_max")).transpose()?.unwrap_or(1.5 * PI);
    let ratio = |phi: f64| -> Result<f64> {
        Ok(reduced_contrast(&s.model, &with_first_amplitude(&s.tones, phi)?) / s.model.contrast)
    };
    let mut t = Table::new("washout", &["phi_over_pi", "reduced_contrast_over_k", "abs_reduced_contrast_over_k"]);
    let phis = linspace(0.0, phi_max, a.phi_points);
    for &phi in &phis {
        let r = ratio(phi)?;
        t.rows.push(vec![phi / PI, r, r.abs()]);
    }
    let mut out = AnalyticOutput { tables: vec![t], ..Default::default() };
    if let Some(w) = phis.windows(2).find(|w| ratio(w[0]).unwrap_or(0.0) * ratio(w[1]).unwrap_or(0.0) <= 0.0) {
        let zero = bisect(&|x| ratio(x).unwrap_or(f64::NAN), w[0], w[1], 1e-12)?;
        out.summary.push(("first_zero_over_pi".into(), zero / PI));
    }
    Ok(out)
}

fn transition_warning(spec: &PerturbationSpec) -> Option<String> {
    let r = transition_ratio(spec).ok()?;
    (r > TRANSITION_THRESHOLD).then(|| {
        format!("transition ratio {r:.3} exceeds {TRANSITION_THRESHOLD}; the approximate solution is not adequate")
    })
}

/// `(u, τ, approx, explicit)` over the settings' grid; absent columns are NaN.
fn surface_values(
    model: &FringeModel,
    spec: &PerturbationSpec,
    a: &AnalyticSettings,
    approx: bool,
    explicit: bool,
) -> Result<Vec<[f64; 4]>> {
    let m_max = a.m_max.unwrap_or_else(|| default_m_max(spec));
    let kernel = if explicit { Some(kernel_for_spec(spec, Some(m_max), None)?) } else { None };
    let us = linspace(-a.u_max_mm, a.u_max_mm, a.u_points);
    let taus = linspace(0.0, a.tau_max_s, a.tau_points);
    Ok(us
        .par_iter()
        .flat_map_iter(|&u| {
            let kernel = kernel.as_ref();
            taus.iter().map(move |&tau| {
                let ap = if approx { g2_approx(u, tau, model, spec, m_max) } else { f64::NAN };
                let ex = kernel.map(|k| g2_explicit(u, tau, model, k)).unwrap_or(f64::NAN);
                [u, tau, ap, ex]
            })
        })
        .collect())
}

fn surface(s: &Scenario, a: &AnalyticSettings) -> Result<AnalyticOutput> {
    let mut out = AnalyticOutput::default();
    let (approx, explicit) = match a.solution {
        Solution::Approximate => (true, false),
        Solution::Explicit => (false, true),
        Solution::Both => (true, true),
    };
    if approx {
        out.warnings.extend(transition_warning(&s.tones));
    }
    let values = surface_values(&s.model, &s.tones, a, approx, explicit)?;
    let mut t = match a.solution {
        Solution::Approximate => Table::new("surface", &["u_mm", "tau_s", "g2_approx"]),
        Solution::Explicit => Table::new("surface", &["u_mm", "tau_s", "g2_explicit"]),
        Solution::Both => Table::new("surface", &["u_mm", "tau_s", "g2_approx", "g2_explicit", "difference"]),
    };
    let mut max_diff: f64 = 0.0;
    t.rows = values
        .iter()
        .map(|&[u, tau, ap, ex]| match a.solution {
            Solution::Approximate => vec![u, tau, ap],
            Solution::Explicit => vec![u, tau, ex],
            Solution::Both => {
                max_diff = max_diff.max((ex - ap).abs());
                vec![u, tau, ap, ex, ex - ap]
            }
        })
        .collect();
    out.tables.push(t);
    if a.solution == Solution::Both {
        out.summary.push(("max_abs_difference".into(), max_diff));
    }
    Ok(out)
}

fn transition(s: &Scenario, a: &AnalyticSettings) -> Result<AnalyticOutput> {
    let c = s.tones.components();
    if c.len() != 2 {
        return Err(Error::config("perturbation.tones", "the transition scan needs exactly two tones"));
    }
    if a.multiples.is_empty() {
        return Err(Error::config("analytic.multiples", "give at least one multiple"));
    }
    let base = c[0].frequency_hz.ok_or_else(|| Error::config("perturbation.tones[0]", "needs a decimal frequency"))?;
    let mut summary = Table::new("transition", &["multiple", "ratio", "max_abs_difference"]);
    let mut field = Table::new("transition_difference", &["multiple", "u_mm", "tau_s", "difference"]);
    let mut out = AnalyticOutput::default();
    for &m in &a.multiples {
        let second = ToneComponent::from_hz(base * i64::from(m), c[1].peak_phase_deviation, c[1].phase);
        let spec = PerturbationSpec::new(vec![c[0].clone(), second])?;
        let ratio = transition_ratio(&spec)?;
        let values = surface_values(&s.model, &spec, a, true, true)?;
        let max_diff = values.iter().map(|v| (v[3] - v[2]).abs()).fold(0.0, f64::max);
        summary.rows.push(vec![f64::from(m), ratio, max_diff]);
        field.rows.extend(values.iter().map(|v| vec![f64::from(m), v[0], v[1], v[3] - v[2]]));
        out.summary.push((format!("ratio_m{m}"), ratio));
        out.summary.push((format!("max_abs_difference_m{m}"), max_diff));
    }
    out.tables = vec![summary, field];
    Ok(out)
}

fn line_spectra(s: &Scenario, a: &AnalyticSettings) -> Result<AnalyticOutput> {
    let mut out = AnalyticOutput::default();
    let mut emit = |name: &str, approx: bool| -> Result<()> {
        let kernel = if approx { None } else { Some(kernel_for_spec(&s.tones, a.m_max, None)?) };
        let spec = amplitude_spectrum_analytic(&s.model, &s.tones, kernel.as_ref(), a.u0_mm, approx)?;
        let mut t = Table::new(name, &["frequency_hz", "magnitude"]);
        t.rows.push(vec![0.0, spec.dc]);
        t.rows.extend(spec.lines.iter().map(|l| vec![angular_to_hz(l.omega), l.magnitude]));
        out.tables.push(t);
        Ok(())
    };
    match a.solution {
        Solution::Approximate => emit("spectrum_approximate", true)?,
        Solution::Explicit => emit("spectrum_explicit", false)?,
        Solution::Both => {
            emit("spectrum_approximate", true)?;
            emit("spectrum_explicit", false)?;
        }
    }
    if a.solution != Solution::Explicit {
        out.warnings.extend(transition_warning(&s.tones));
    }
    Ok(out)
}

fn discretization(s: &Scenario, a: &AnalyticSettings) -> Result<AnalyticOutput> {
    single_tone(&s.tones)?;
    if s.model.contrast <= 0.0 {
        return Err(Error::config("model.contrast", "needs a positive contrast"));
    }
    let mut t = Table::new("discretization", &["du_over_lambda", "dtau_s", "contrast_over_k"]);
    for r in linspace(0.0, a.du_over_lambda_max, a.du_points) {
        for dtau in linspace(0.0, a.dtau_max_s, a.dtau_points) {
            let c = discretized_contrast(&s.model, &s.tones, r * s.model.period, dtau)?;
            t.rows.push(vec![r, dtau, c / s.model.contrast]);
        }
    }
    Ok(AnalyticOutput { tables: vec![t], ..Default::default() })
}

fn snr_surface(s: &Scenario, a: &AnalyticSettings) -> Result<AnalyticOutput> {
    single_tone(&s.tones)?;
    let need = |v: Option<f64>, key: &str| {
        v.ok_or_else(|| Error::config(format!("analytic.{key}"), "is required for the snr surface"))
    };
    let n = need(a.n_events, "n_events")?;
    let t_acq = need(a.acquisition_time_s, "acquisition_time_s")?;
    let y = need(a.acquisition_length_mm, "acquisition_length_mm")?;
    let mut t = Table::new("snr", &["du_over_lambda", "dtau_s", "snr", "snr_normalized"]);
    let mut theory = None;
    for i in 1..=a.du_points {
        let r = a.du_over_lambda_max * i as f64 / a.du_points as f64;
        for dtau in linspace(0.0, a.dtau_max_s, a.dtau_points) {
            let (snr, th) = snr_theory(&s.model, &s.tones, n, t_acq, y, a.tau_max_s, r * s.model.period, dtau)?;
            t.rows.push(vec![r, dtau, snr, snr / th.snr_opt]);
            theory = Some(th);
        }
    }
    let mut out = AnalyticOutput { tables: vec![t], ..Default::default() };
    if let Some(th) = theory {
        out.summary.push(("du_opt_over_lambda".into(), th.du_opt / s.model.period));
        out.summary.push(("snr_opt".into(), th.snr_opt));
        out.summary.push(("alpha".into(), th.alpha));
        out.summary.push(("phi_min_over_pi".into(), th.phi_min / PI));
    }
    Ok(out)
}

fn cmd_analytic(a: &AnalyticArgs) -> Result<()> {
    let scenario = a.scenario.require()?;
    let out = analytic_tables(&scenario)?;
    for w in &out.warnings {
        warn(w);
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    for t in &out.tables {
        let path = a.out_dir.join(format!("{}.csv", t.name));
        t.write(&path)?;
        report("table", path.display());
    }
    for (k, v) in &out.summary {
        report(k, v);
    }
    Ok(())
}

fn cmd_presets(a: &PresetsArgs) -> Result<()> {
    if let Some(name) = &a.show {
        let text =
            crate::config::preset_source(name).ok_or_else(|| Error::invalid(format!("unknown preset `{name}`")))?;
        print!("{text}");
        return Ok(());
    }
    for name in PRESET_NAMES {
        let s = Scenario::preset(name)?;
        println!("{name}\t{}", s.description);
    }
    Ok(())
}
