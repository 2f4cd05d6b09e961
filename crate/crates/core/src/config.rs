//! Scenario configuration files (TOML) and the built-in figure presets.
//!
//! Boundary units: Hz for frequencies, seconds, millimetres, and phases either
//! in radians or as multiples of π written like `"0.76pi"`.

use std::path::Path;

use num_rational::Ratio;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{FringeModel, PerturbationSpec, ToneComponent};
use crate::simulator::{gaussian_noise_spectrum, LineScale, NoiseBand, Perturbation, SimulationConfig};
use crate::units::{hz_to_angular, parse_angle, parse_hz_rational, ratio_to_f64};

/// A number, or a string such as `"0.76pi"` / `"50.5"`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum NumberOrText {
    Number(f64),
    Text(String),
}

impl NumberOrText {
    pub fn angle(&self, key: &str) -> Result<f64> {
        match self {
            NumberOrText::Number(x) => Ok(*x),
            NumberOrText::Text(s) => parse_angle(s).map_err(|e| Error::config(key, e.to_string())),
        }
    }

    fn hz(&self, key: &str) -> Result<Ratio<i64>> {
        let text = match self {
            NumberOrText::Number(x) => x.to_string(),
            NumberOrText::Text(s) => s.clone(),
        };
        parse_hz_rational(&text).map_err(|e| Error::config(key, e.to_string()))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    description: Option<String>,
    model: RawModel,
    #[serde(default)]
    perturbation: RawPerturbation,
    simulation: Option<SimulationSettings>,
    correlation: Option<CorrelationSettings>,
    sweep: Option<SweepSettings>,
    noise_fit: Option<RawNoiseFit>,
    analytic: Option<AnalyticSettings>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    contrast: f64,
    period_mm: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPerturbation {
    #[serde(default)]
    tones: Vec<RawTone>,
    broadband: Option<RawBroadband>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTone {
    frequency_hz: NumberOrText,
    amplitude: NumberOrText,
    #[serde(default)]
    phase: Option<NumberOrText>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBroadband {
    phi0: NumberOrText,
    f0_hz: f64,
    sigma_hz: f64,
    f_min_hz: f64,
    f_max_hz: f64,
    resolution_hz: f64,
    #[serde(default)]
    line_scale: LineScale,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoiseFit {
    init_phi0: NumberOrText,
    init_f0_hz: Option<f64>,
    init_sigma_hz: f64,
    f_min_hz: f64,
    f_max_hz: f64,
    resolution_hz: f64,
    tau_limit_s: Option<f64>,
}

/// Event generation parameters.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSettings {
    pub n_events: usize,
    pub count_rate_hz: f64,
    pub acquisition_length_mm: f64,
    pub seed: u64,
}

/// Correlator binning; `u_max_mm` defaults to five periods.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSettings {
    pub du_mm: f64,
    pub dtau_s: f64,
    pub tau_max_s: f64,
    pub u_max_mm: Option<f64>,
}

/// Log-spaced Δu sweep at fixed Δτ, analysed at `u = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSettings {
    pub du_over_lambda_min: f64,
    pub du_over_lambda_max: f64,
    pub points: usize,
    pub dtau_s: f64,
    pub tau_max_s: f64,
}

impl SweepSettings {
    pub fn du_values(&self, period: f64) -> Vec<f64> {
        let (a, b) = (self.du_over_lambda_min.ln(), self.du_over_lambda_max.ln());
        (0..self.points)
            .map(|i| {
                let f = if self.points == 1 { 0.0 } else { i as f64 / (self.points - 1) as f64 };
                period * (a + (b - a) * f).exp()
            })
            .collect()
    }
}

/// Broad-band fit settings, angular units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseFitSettings {
    pub init_phi0: f64,
    /// Taken from the spectrum when absent.
    pub init_omega0: Option<f64>,
    pub init_sigma_omega: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub resolution: f64,
    pub tau_limit: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalyticKind {
    Washout,
    Surface,
    Transition,
    Spectrum,
    Discretization,
    Snr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solution {
    Explicit,
    #[default]
    Approximate,
    Both,
}

/// Grid and sweep ranges for the closed-form evaluations.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticSettings {
    pub kind: AnalyticKind,
    #[serde(default)]
    pub solution: Solution,
    #[serde(default = "defaults::u_max")]
    pub u_max_mm: f64,
    #[serde(default = "defaults::points")]
    pub u_points: usize,
    #[serde(default = "defaults::tau_max")]
    pub tau_max_s: f64,
    #[serde(default = "defaults::points")]
    pub tau_points: usize,
    pub phi_max: Option<NumberOrText>,
    #[serde(default = "defaults::points")]
    pub phi_points: usize,
    #[serde(default)]
    pub multiples: Vec<u32>,
    #[serde(default = "defaults::du_ratio")]
    pub du_over_lambda_max: f64,
    #[serde(default = "defaults::points")]
    pub du_points: usize,
    #[serde(default = "defaults::dtau_max")]
    pub dtau_max_s: f64,
    #[serde(default = "defaults::points")]
    pub dtau_points: usize,
    #[serde(default)]
    pub u0_mm: f64,
    pub m_max: Option<u32>,
    /// Snr surface inputs.
    pub n_events: Option<f64>,
    pub acquisition_time_s: Option<f64>,
    pub acquisition_length_mm: Option<f64>,
}

mod defaults {
    pub fn u_max() -> f64 {
        4.0
    }
    pub fn points() -> usize {
        101
    }
    pub fn tau_max() -> f64 {
        0.06
    }
    pub fn du_ratio() -> f64 {
        1.0
    }
    pub fn dtau_max() -> f64 {
        0.04
    }
}

/// Gaussian broad-band perturbation; phases are drawn from the simulation
/// seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadbandSettings {
    pub band: NoiseBand,
    pub scale: LineScale,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub model: FringeModel,
    pub tones: PerturbationSpec,
    pub broadband: Option<BroadbandSettings>,
    pub simulation: Option<SimulationSettings>,
    pub correlation: Option<CorrelationSettings>,
    pub sweep: Option<SweepSettings>,
    pub noise_fit: Option<NoiseFitSettings>,
    pub analytic: Option<AnalyticSettings>,
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(key, format!("must be positive, got {v}")))
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| {
            let key = e.span().map(|s| format!("byte {}", s.start)).unwrap_or_else(|| "<document>".into());
            Error::config(key, e.message().to_string())
        })?;
        Self::validate(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// One of the built-in presets `fig1` … `fig13`.
    pub fn preset(name: &str) -> Result<Self> {
        let text = preset_source(name).ok_or_else(|| {
            Error::invalid(format!("unknown preset `{name}` (available: {})", PRESET_NAMES.join(", ")))
        })?;
        Self::from_toml_str(text)
    }

    fn validate(raw: RawScenario) -> Result<Self> {
        if !(0.0..=1.0).contains(&raw.model.contrast) {
            return Err(Error::config("model.contrast", "must lie in [0, 1]"));
        }
        positive("model.period_mm", raw.model.period_mm)?;
        let model = FringeModel::new(raw.model.contrast, raw.model.period_mm)?;
        let mut components = Vec::new();
        for (i, t) in raw.perturbation.tones.iter().enumerate() {
            let key = |f: &str| format!("perturbation.tones[{i}].{f}");
            let hz = t.frequency_hz.hz(&key("frequency_hz"))?;
            if *hz.numer() <= 0 {
                return Err(Error::config(key("frequency_hz"), "must be positive"));
            }
            let amp = t.amplitude.angle(&key("amplitude"))?;
            if !(amp >= 0.0) {
                return Err(Error::config(key("amplitude"), "must be nonnegative"));
            }
            let phase = t.phase.as_ref().map(|p| p.angle(&key("phase"))).transpose()?.unwrap_or(0.0);
            components.push(ToneComponent::from_hz(hz, amp, phase));
        }
        let tones =
            PerturbationSpec::new(components).map_err(|e| Error::config("perturbation.tones", e.to_string()))?;
        let broadband = raw
            .perturbation
            .broadband
            .map(|b| -> Result<BroadbandSettings> {
                let band = NoiseBand {
                    phi0: b.phi0.angle("perturbation.broadband.phi0")?,
                    omega0: hz_to_angular(b.f0_hz),
                    sigma_omega: hz_to_angular(b.sigma_hz),
                    omega_min: hz_to_angular(b.f_min_hz),
                    omega_max: hz_to_angular(b.f_max_hz),
                    resolution: hz_to_angular(b.resolution_hz),
                };
                band.validate().map_err(|e| Error::config("perturbation.broadband", e.to_string()))?;
                Ok(BroadbandSettings { band, scale: b.line_scale })
            })
            .transpose()?;
        if broadband.is_some() && !tones.is_empty() {
            return Err(Error::config("perturbation", "give either tones or a broadband band, not both"));
        }
        if let Some(s) = &raw.simulation {
            if s.n_events == 0 {
                return Err(Error::config("simulation.n_events", "must be at least 1"));
            }
            positive("simulation.count_rate_hz", s.count_rate_hz)?;
            positive("simulation.acquisition_length_mm", s.acquisition_length_mm)?;
        }
        if let Some(c) = &raw.correlation {
            positive("correlation.du_mm", c.du_mm)?;
            positive("correlation.dtau_s", c.dtau_s)?;
            positive("correlation.tau_max_s", c.tau_max_s)?;
            if let Some(u) = c.u_max_mm {
                positive("correlation.u_max_mm", u)?;
            }
        }
        if let Some(s) = &raw.sweep {
            positive("sweep.du_over_lambda_min", s.du_over_lambda_min)?;
            positive("sweep.dtau_s", s.dtau_s)?;
            positive("sweep.tau_max_s", s.tau_max_s)?;
            if !(s.du_over_lambda_max >= s.du_over_lambda_min) {
                return Err(Error::config("sweep.du_over_lambda_max", "must not be below the minimum"));
            }
            if s.points == 0 {
                return Err(Error::config("sweep.points", "must be at least 1"));
            }
        }
        let noise_fit = raw
            .noise_fit
            .map(|n| -> Result<NoiseFitSettings> {
                positive("noise_fit.init_sigma_hz", n.init_sigma_hz)?;
                positive("noise_fit.resolution_hz", n.resolution_hz)?;
                if !(n.f_max_hz > n.f_min_hz && n.f_min_hz >= 0.0) {
                    return Err(Error::config("noise_fit.f_max_hz", "need 0 <= f_min_hz < f_max_hz"));
                }
                Ok(NoiseFitSettings {
                    init_phi0: n.init_phi0.angle("noise_fit.init_phi0")?,
                    init_omega0: n.init_f0_hz.map(hz_to_angular),
                    init_sigma_omega: hz_to_angular(n.init_sigma_hz),
                    omega_min: hz_to_angular(n.f_min_hz),
                    omega_max: hz_to_angular(n.f_max_hz),
                    resolution: hz_to_angular(n.resolution_hz),
                    tau_limit: n.tau_limit_s,
                })
            })
            .transpose()?;
        if let Some(a) = &raw.analytic {
            if let Some(p) = &a.phi_max {
                p.angle("analytic.phi_max")?;
            }
            for (key, n) in [("u_points", a.u_points), ("tau_points", a.tau_points), ("phi_points", a.phi_points)] {
                if n < 2 {
                    return Err(Error::config(format!("analytic.{key}"), "must be at least 2"));
                }
            }
        }
        Ok(Scenario {
            name: raw.name.unwrap_or_else(|| "custom".into()),
            description: raw.description.unwrap_or_default(),
            model,
            tones,
            broadband,
            simulation: raw.simulation,
            correlation: raw.correlation,
            sweep: raw.sweep,
            noise_fit,
            analytic: raw.analytic,
        })
    }

    /// The perturbation, drawing broad-band phases from `seed`.
    pub fn perturbation(&self, seed: u64) -> Result<Perturbation> {
        match &self.broadband {
            Some(b) => Ok(Perturbation::Broadband(gaussian_noise_spectrum(b.band, b.scale, seed)?)),
            None => Ok(Perturbation::Tones(self.tones.clone())),
        }
    }

    pub fn simulation_config(&self) -> Result<SimulationConfig> {
        let s = self.simulation.ok_or_else(|| Error::config("simulation", "section is missing"))?;
        Ok(SimulationConfig {
            model: self.model,
            perturbation: self.perturbation(s.seed)?,
            n_events: s.n_events,
            count_rate: s.count_rate_hz,
            acquisition_length: s.acquisition_length_mm,
            seed: s.seed,
        })
    }

    /// Correlation `u_max`, defaulting to five fringe periods.
    pub fn u_max(&self) -> Option<f64> {
        self.correlation.map(|c| c.u_max_mm.unwrap_or(5.0 * self.model.period))
    }

    /// Tone frequencies in Hz as floats.
    pub fn tone_hz(&self) -> Vec<f64> {
        self.tones.hz_rationals().map(|r| r.iter().map(ratio_to_f64).collect()).unwrap_or_default()
    }
}

pub const PRESET_NAMES: [&str; 13] =
    ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "fig11", "fig12", "fig13"];

/// TOML text of a built-in preset.
pub fn preset_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig1" => include_str!("../presets/fig1.toml"),
        "fig2" => include_str!("../presets/fig2.toml"),
        "fig3" => include_str!("../presets/fig3.toml"),
        "fig4" => include_str!("../presets/fig4.toml"),
        "fig5" => include_str!("../presets/fig5.toml"),
        "fig6" => include_str!("../presets/fig6.toml"),
        "fig7" => include_str!("../presets/fig7.toml"),
        "fig8" => include_str!("../presets/fig8.toml"),
        "fig9" => include_str!("../presets/fig9.toml"),
        "fig10" => include_str!("../presets/fig10.toml"),
        "fig11" => include_str!("../presets/fig11.toml"),
        "fig12" => include_str!("../presets/fig12.toml"),
        "fig13" => include_str!("../presets/fig13.toml"),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn all_presets_parse() {
        for name in PRESET_NAMES {
            let s = Scenario::preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
        }
        assert!(Scenario::preset("fig99").is_err());
    }

    #[test]
    fn pinned_parameters() {
        let fig9 = Scenario::preset("fig9").unwrap();
        let sim = fig9.simulation.unwrap();
        assert_eq!(sim.n_events, 195_000);
        assert!((sim.n_events as f64 / sim.count_rate_hz - 39.05).abs() < 0.01);
        assert!((fig9.tones.amplitudes()[0] - 0.4 * PI).abs() < 1e-15);
        let fig12 = Scenario::preset("fig12").unwrap();
        let band = fig12.broadband.unwrap().band;
        assert_eq!(band.validate().unwrap(), 40_001);
        assert!((band.phi0 - 0.02 * PI).abs() < 1e-15);
        assert_eq!(fig12.simulation.unwrap().n_events, 500_000);
    }

    #[test]
    fn errors_name_the_offending_key() {
        let text = r#"
            [model]
            contrast = 0.6
            period_mm = 2.0
            [[perturbation.tones]]
            frequency_hz = 50
            amplitude = "0.4 apples"
        "#;
        match Scenario::from_toml_str(text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "perturbation.tones[0].amplitude"),
            other => panic!("{other:?}"),
        }
        let text = "[model]\ncontrast = 1.5\nperiod_mm = 2\n";
        assert!(matches!(Scenario::from_toml_str(text), Err(Error::Config { key, .. }) if key == "model.contrast"));
        let text = "[model]\ncontrast = 0.5\nperiod_mm = 2\nbogus = 1\n";
        assert!(matches!(Scenario::from_toml_str(text), Err(Error::Config { .. })));
    }

    #[test]
    fn decimal_hz_stays_exact() {
        let text = r#"
            [model]
            contrast = 0.6
            period_mm = 2.0
            [[perturbation.tones]]
            frequency_hz = "50.1"
            amplitude = 0.3
            [[perturbation.tones]]
            frequency_hz = 100.2
            amplitude = "0.1pi"
            phase = "-0.25pi"
        "#;
        let s = Scenario::from_toml_str(text).unwrap();
        let r = s.tones.hz_rationals().unwrap();
        assert_eq!(r[0], Ratio::new(501, 10));
        assert_eq!(r[1], Ratio::new(501, 5));
        assert!((s.tones.phases()[1] + 0.25 * PI).abs() < 1e-15);
    }

    #[test]
    fn sweep_is_log_spaced() {
        let s = SweepSettings {
            du_over_lambda_min: 0.009,
            du_over_lambda_max: 2.0,
            points: 30,
            dtau_s: 2e-4,
            tau_max_s: 1.0,
        };
        let v = s.du_values(2.0);
        assert_eq!(v.len(), 30);
        assert!((v[0] - 0.018).abs() < 1e-12 && (v[29] - 4.0).abs() < 1e-12);
        let r = v[1] / v[0];
        assert!(v.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-9));
    }
}
