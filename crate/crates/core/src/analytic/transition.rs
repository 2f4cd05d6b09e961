use crate::bessel::bessel_j_real;
use crate::error::{Error, Result};
use crate::model::PerturbationSpec;

/// Ratios below this mark the approximate solution as adequate.
pub const TRANSITION_THRESHOLD: f64 = 0.05;

/// Order of the dominant trivial term for peak deviation `φ`: `φ − 1`, or 0
/// once `φ < 1`.
fn dominant_order(phi: f64) -> f64 {
    if phi >= 1.0 {
        phi - 1.0
    } else {
        0.0
    }
}

/// Ratio of the leading non-trivial Bessel weight to the leading trivial one
/// for tones at harmonic multiples `ω_j = M_j ω_1`:
///
/// `|J_{M₂/2}(φ₁)² J_{−(m₂+1)}(φ₂)| / (J_{m₁}(φ₁)² J_{m₂}(φ₂))`,
/// with `m_j` the dominant order. Orders are kept real rather than rounded.
/// Tones beyond the second cancel between numerator and denominator.
pub fn transition_ratio(spec: &PerturbationSpec) -> Result<f64> {
    let c = spec.components();
    if c.len() < 2 {
        return Err(Error::invalid("transition criterion needs at least two tones"));
    }
    let w1 = c[0].frequency;
    for (j, tone) in c.iter().enumerate().skip(1) {
        let ratio = tone.frequency / w1;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::invalid(format!("tone {j} is not an integer multiple of the first")));
        }
    }
    let m2 = (c[1].frequency / w1).round();
    let (phi1, phi2) = (c[0].peak_phase_deviation, c[1].peak_phase_deviation);
    let (o1, o2) = (dominant_order(phi1), dominant_order(phi2));
    let cross = bessel_j_real(m2 / 2.0, phi1);
    let numerator = cross * cross * bessel_j_real(-(o2 + 1.0), phi2);
    let t1 = bessel_j_real(o1, phi1);
    let denominator = t1 * t1 * bessel_j_real(o2, phi2);
    if denominator == 0.0 {
        return Err(Error::numerical("leading trivial weight vanishes"));
    }
    Ok((numerator / denominator).abs())
}
