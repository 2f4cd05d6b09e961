//! Unit conversion and parsing at the file/CLI boundary.

use std::f64::consts::PI;

use num_rational::Ratio;

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

pub fn hz_to_angular(hz: f64) -> f64 {
    TWO_PI * hz
}

pub fn angular_to_hz(omega: f64) -> f64 {
    omega / TWO_PI
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_phase(phase: f64) -> f64 {
    if phase > -PI && phase <= PI {
        return phase;
    }
    let mut p = phase.rem_euclid(TWO_PI);
    if p > PI {
        p -= TWO_PI;
    }
    if p <= -PI {
        p += TWO_PI;
    }
    p
}

/// Parses an angle given either in radians (`"1.2"`) or as a multiple of π
/// (`"0.76pi"`, `"-0.25π"`, `"pi"`).
pub fn parse_angle(text: &str) -> Result<f64> {
    let s = text.trim();
    let lower = s.to_ascii_lowercase();
    let (number, scale) = if let Some(stripped) = lower.strip_suffix("pi") {
        (stripped.trim().trim_end_matches('*').to_string(), PI)
    } else if let Some(stripped) = s.strip_suffix('π') {
        (stripped.trim().trim_end_matches('*').to_string(), PI)
    } else {
        (lower.clone(), 1.0)
    };
    let value = match number.as_str() {
        "" | "+" => 1.0,
        "-" => -1.0,
        n => n.parse::<f64>().map_err(|_| Error::invalid(format!("cannot parse angle `{text}`")))?,
    };
    let v = value * scale;
    if !v.is_finite() {
        return Err(Error::invalid(format!("angle `{text}` is not finite")));
    }
    Ok(v)
}

/// Formats an angle as a multiple of π, e.g. `0.76pi`.
pub fn format_angle_pi(radians: f64) -> String {
    format!("{}pi", radians / PI)
}

/// Parses a decimal frequency in Hz exactly into a rational number.
///
/// Accepts plain decimals, scientific notation and fractions of decimals
/// (`"50"`, `"49.97"`, `"1e-3"`, `"43/3"`).
pub fn parse_hz_rational(text: &str) -> Result<Ratio<i64>> {
    let Some((num, den)) = text.split_once('/') else {
        return parse_decimal(text);
    };
    let (num, den) = (parse_decimal(num)?, parse_decimal(den)?);
    if *den.numer() == 0 {
        return Err(Error::invalid(format!("frequency `{text}` divides by zero")));
    }
    let n = *num.numer() as i128 * *den.denom() as i128;
    let d = *num.denom() as i128 * *den.numer() as i128;
    let g = gcd_i128(n.abs(), d.abs()) * d.signum();
    let overflow = || Error::invalid(format!("frequency `{text}` overflows"));
    Ok(Ratio::new(i64::try_from(n / g).map_err(|_| overflow())?, i64::try_from(d / g).map_err(|_| overflow())?))
}

fn parse_decimal(text: &str) -> Result<Ratio<i64>> {
    let err = || Error::invalid(format!("cannot parse frequency `{text}` as a decimal"));
    let s = text.trim();
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => (&s[..pos], s[pos + 1..].parse::<i32>().map_err(|_| err())?),
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((a, b)) => (a, b),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut numer: i128 = if all_digits.is_empty() { 0 } else { all_digits.parse().map_err(|_| err())? };
    let mut denom_pow = frac_part.len() as i32 - exponent;
    let mut denom: i128 = 1;
    while denom_pow < 0 {
        numer = numer.checked_mul(10).ok_or_else(err)?;
        denom_pow += 1;
    }
    for _ in 0..denom_pow {
        denom = denom.checked_mul(10).ok_or_else(err)?;
    }
    if negative {
        numer = -numer;
    }
    let g = gcd_i128(numer.abs(), denom);
    let (n, d) = (numer / g, denom / g);
    let n = i64::try_from(n).map_err(|_| err())?;
    let d = i64::try_from(d).map_err(|_| err())?;
    Ok(Ratio::new(n, d))
}

fn gcd_i128(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

/// Best rational approximation of `x` with denominator at most `max_denom`,
/// accepted only when it reproduces `x` to `rel_tol`.
pub fn rationalize(x: f64, max_denom: i64, rel_tol: f64) -> Option<Ratio<i64>> {
    if !x.is_finite() {
        return None;
    }
    // Continued-fraction convergents.
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut rest = x;
    for _ in 0..64 {
        let a = rest.floor();
        if a.abs() > 1e15 {
            break;
        }
        let ai = a as i128;
        let h2 = ai * h1 + h0;
        let k2 = ai * k1 + k0;
        if k2 > max_denom as i128 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let approx = h1 as f64 / k1 as f64;
        if (approx - x).abs() <= rel_tol * x.abs().max(f64::MIN_POSITIVE) {
            return Some(Ratio::new(i64::try_from(h1).ok()?, i64::try_from(k1).ok()?));
        }
        let frac = rest - a;
        if frac == 0.0 {
            break;
        }
        rest = 1.0 / frac;
    }
    None
}

pub fn ratio_to_f64(r: &Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Exact decimal form of a rational whose denominator divides a power of
/// ten (`99/2` → `"49.5"`); `None` otherwise.
pub fn format_hz_exact(r: &Ratio<i64>) -> Option<String> {
    let (n, d) = (*r.numer() as i128, *r.denom() as i128);
    let mut scale: i128 = 1;
    let mut digits = 0usize;
    while scale % d != 0 {
        scale *= 10;
        digits += 1;
        if digits > 18 {
            return None;
        }
    }
    let scaled = n * (scale / d);
    if digits == 0 {
        return Some(scaled.to_string());
    }
    let sign = if scaled < 0 { "-" } else { "" };
    let abs = scaled.unsigned_abs();
    let p = 10u128.pow(digits as u32);
    Some(format!("{sign}{}.{:0width$}", abs / p, abs % p, width = digits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles_in_multiples_of_pi() {
        assert!((parse_angle("0.76pi").unwrap() - 0.76 * PI).abs() < 1e-15);
        assert!((parse_angle("-0.25π").unwrap() + 0.25 * PI).abs() < 1e-15);
        assert!((parse_angle("pi").unwrap() - PI).abs() < 1e-15);
        assert!((parse_angle("1.5").unwrap() - 1.5).abs() < 1e-15);
        assert!((parse_angle("2e-2pi").unwrap() - 0.02 * PI).abs() < 1e-15);
        assert!(parse_angle("abc").is_err());
    }

    #[test]
    fn decimal_hz_is_exact() {
        assert_eq!(parse_hz_rational("50").unwrap(), Ratio::new(50, 1));
        assert_eq!(parse_hz_rational("49.97").unwrap(), Ratio::new(4997, 100));
        assert_eq!(parse_hz_rational("1e-3").unwrap(), Ratio::new(1, 1000));
        assert_eq!(parse_hz_rational("0.001").unwrap(), Ratio::new(1, 1000));
        assert_eq!(parse_hz_rational("-2.5").unwrap(), Ratio::new(-5, 2));
        assert_eq!(parse_hz_rational("43/3").unwrap(), Ratio::new(43, 3));
        assert_eq!(parse_hz_rational("0.5/1.5").unwrap(), Ratio::new(1, 3));
        assert!(parse_hz_rational("5x").is_err());
        assert!(parse_hz_rational("1/0").is_err());
    }

    #[test]
    fn wrapping_is_half_open() {
        assert!((wrap_phase(PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(-PI) - PI).abs() < 1e-15);
        assert!((wrap_phase(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rationalize_rejects_irrationals() {
        assert_eq!(rationalize(50.0, 1_000_000, 1e-12), Some(Ratio::new(50, 1)));
        assert_eq!(rationalize(0.125, 1_000_000, 1e-12), Some(Ratio::new(1, 8)));
        assert_eq!(rationalize(50.0 * 2f64.sqrt(), 10_000, 1e-12), None);
    }
}
