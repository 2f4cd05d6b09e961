//! Integer multiplets `{n_j, m_j}` with `Σ (n_j + m_j) ω_j = 0`.
//!
//! Enumeration runs over the sums `s_j = n_j + m_j` first (pruned with the
//! largest reachable remainder), then expands each admissible `s` into the
//! `n_j` it allows.

use std::f64::consts::FRAC_PI_2;

use num_rational::Ratio;

use crate::bessel::bessel_j_table;
use crate::error::{Error, Result};
use crate::model::{Multiplet, PerturbationSpec};
use crate::units;

pub const DEFAULT_KERNEL_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelOptions {
    pub m_max: u32,
    /// Membership threshold on `|Σ s_j ω_j|` in rad/s; zero requests the
    /// exact rational test.
    pub tolerance: f64,
    pub budget: u64,
}

impl KernelOptions {
    pub fn new(m_max: u32, tolerance: f64) -> Self {
        Self { m_max, tolerance, budget: DEFAULT_KERNEL_BUDGET }
    }
}

/// All kernel multiplets up to order `m_max`.
///
/// Multiplets are stored with their weights and phases once
/// [`KernelEnumeration::weighted`] has been applied for a particular spec;
/// before that only `pairs` and `frequency_component` are meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEnumeration {
    pub multiplets: Vec<Multiplet>,
    pub m_max: u32,
    pub tolerance: f64,
    weighted: bool,
}

impl KernelEnumeration {
    pub fn len(&self) -> usize {
        self.multiplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multiplets.is_empty()
    }

    pub fn is_weighted(&self) -> bool {
        self.weighted
    }

    /// Fills weights and phases from `spec`.
    pub fn weighted(mut self, spec: &PerturbationSpec) -> Result<Self> {
        let tables = BesselTables::new(spec, self.m_max);
        for m in &mut self.multiplets {
            if m.pairs.len() != spec.len() {
                return Err(Error::invalid("kernel dimension does not match the perturbation spec"));
            }
            let (w, sp, tp, f) = tables.weight(&m.pairs, spec);
            m.weight = w;
            m.spatial_phase = sp;
            m.temporal_phase = tp;
            m.frequency_component = f;
        }
        self.weighted = true;
        Ok(self)
    }

    pub fn trivial(&self) -> impl Iterator<Item = &Multiplet> {
        self.multiplets.iter().filter(|m| m.is_trivial())
    }
}

struct BesselTables {
    /// `J_0..J_{m_max}` per component.
    tables: Vec<Vec<f64>>,
}

impl BesselTables {
    fn new(spec: &PerturbationSpec, m_max: u32) -> Self {
        let tables = spec.components().iter().map(|c| bessel_j_table(m_max as usize, c.peak_phase_deviation)).collect();
        Self { tables }
    }

    fn j(&self, comp: usize, n: i32) -> f64 {
        let v = self.tables[comp][n.unsigned_abs() as usize];
        if n < 0 && n % 2 != 0 {
            -v
        } else {
            v
        }
    }

    fn weight(&self, pairs: &[(i32, i32)], spec: &PerturbationSpec) -> (f64, f64, f64, f64) {
        let mut w = 1.0;
        let mut diff = 0i64;
        let mut tp = 0.0;
        let mut f = 0.0;
        for (j, (&(n, m), c)) in pairs.iter().zip(spec.components()).enumerate() {
            w *= self.j(j, n) * self.j(j, m);
            diff += (m - n) as i64;
            tp += c.phase * (m + n) as f64;
            f += m as f64 * c.frequency;
        }
        (w, FRAC_PI_2 * diff as f64, tp, f)
    }
}

/// Weight `B̃ = Π J_{n_j}(φ_j) J_{m_j}(φ_j)`, spatial phase
/// `φ̃ = (π/2) Σ (m_j − n_j)`, temporal phase `Φ = Σ phase_j (m_j + n_j)` and
/// frequency `Σ m_j ω_j` of one multiplet.
pub fn multiplet_weight(pairs: &[(i32, i32)], spec: &PerturbationSpec) -> Result<(f64, f64, f64, f64)> {
    if pairs.len() != spec.len() {
        return Err(Error::invalid(format!("multiplet has {} pairs, spec has {} tones", pairs.len(), spec.len())));
    }
    let order = pairs.iter().map(|&(n, m)| n.unsigned_abs().max(m.unsigned_abs())).max().unwrap_or(0);
    Ok(BesselTables::new(spec, order).weight(pairs, spec))
}

/// Enumerates with a floating-point membership test `|Σ s_j ω_j| < tolerance`.
/// A zero tolerance rationalizes the frequencies (in Hz) and tests exactly.
pub fn enumerate_kernel(frequencies: &[f64], m_max: u32, tolerance: f64) -> Result<KernelEnumeration> {
    enumerate_with(frequencies, KernelOptions::new(m_max, tolerance))
}

pub fn enumerate_with(frequencies: &[f64], opts: KernelOptions) -> Result<KernelEnumeration> {
    if frequencies.is_empty() {
        return Err(Error::invalid("kernel enumeration needs at least one frequency"));
    }
    if !(opts.tolerance >= 0.0) {
        return Err(Error::invalid("kernel tolerance must be nonnegative"));
    }
    if opts.tolerance == 0.0 {
        let hz = frequencies
            .iter()
            .map(|&w| units::rationalize(units::angular_to_hz(w), 1_000_000, 1e-15))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::invalid("exact kernel test needs rational frequencies; give a tolerance"))?;
        return enumerate_kernel_exact(&hz, opts.m_max, opts.budget);
    }
    let tol = opts.tolerance;
    let freqs = frequencies.to_vec();
    enumerate_generic(&freqs, opts.m_max, opts.budget, |s| {
        s.iter().zip(&freqs).map(|(&s, &w)| s as f64 * w).sum::<f64>().abs() < tol
    })
}

/// Exact enumeration for frequencies given as rationals in Hz.
pub fn enumerate_kernel_exact(hz: &[Ratio<i64>], m_max: u32, budget: u64) -> Result<KernelEnumeration> {
    if hz.is_empty() {
        return Err(Error::invalid("kernel enumeration needs at least one frequency"));
    }
    // Scale to integers with the lcm of denominators.
    let lcm = hz.iter().fold(1i128, |acc, r| lcm_i128(acc, *r.denom() as i128));
    let ints: Vec<i128> = hz.iter().map(|r| *r.numer() as i128 * (lcm / *r.denom() as i128)).collect();
    let freqs: Vec<f64> = ints.iter().map(|&v| v as f64).collect();
    let mut kernel = enumerate_generic(&freqs, m_max, budget, |s| {
        s.iter().zip(&ints).map(|(&s, &v)| s as i128 * v).sum::<i128>() == 0
    })?;
    let angular: Vec<f64> = hz.iter().map(|r| units::hz_to_angular(units::ratio_to_f64(r))).collect();
    for m in &mut kernel.multiplets {
        m.frequency_component = m.pairs.iter().zip(&angular).map(|(&(_, mm), &w)| mm as f64 * w).sum();
    }
    kernel.tolerance = 0.0;
    Ok(kernel)
}

/// Kernel for a spec with the default truncation, weighted and ready for
/// [`super::g2_explicit`]. Uses the exact test when Hz rationals are known,
/// otherwise `tolerance` (or `1e-9·max ω` when `None`).
pub fn kernel_for_spec(
    spec: &PerturbationSpec,
    m_max: Option<u32>,
    tolerance: Option<f64>,
) -> Result<KernelEnumeration> {
    let m_max = m_max.unwrap_or_else(|| super::default_m_max(spec));
    let kernel = match (tolerance, spec.hz_rationals()) {
        (None, Some(hz)) => enumerate_kernel_exact(&hz, m_max, DEFAULT_KERNEL_BUDGET)?,
        (tol, _) => {
            let freqs = spec.frequencies();
            let default = 1e-9 * freqs.iter().cloned().fold(1.0, f64::max);
            enumerate_kernel(&freqs, m_max, tol.unwrap_or(default))?
        }
    };
    kernel.weighted(spec)
}

fn lcm_i128(a: i128, b: i128) -> i128 {
    fn gcd(mut a: i128, mut b: i128) -> i128 {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a.abs()
    }
    a / gcd(a, b) * b
}

fn enumerate_generic(
    freqs: &[f64],
    m_max: u32,
    budget: u64,
    member: impl Fn(&[i32]) -> bool,
) -> Result<KernelEnumeration> {
    let d = freqs.len();
    let m = m_max as i32;
    let smax = 2 * m;
    // Largest |Σ s_j ω_j| reachable from components j.. onwards.
    let mut reach = vec![0.0; d + 1];
    for j in (0..d).rev() {
        reach[j] = reach[j + 1] + smax as f64 * freqs[j].abs();
    }
    let slack = 1e-9 * reach[0].max(1.0);

    let mut admissible: Vec<Vec<i32>> = Vec::new();
    let mut s = vec![0i32; d];
    let mut required: u128 = 0;
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        j: usize,
        partial: f64,
        s: &mut Vec<i32>,
        freqs: &[f64],
        reach: &[f64],
        slack: f64,
        smax: i32,
        m: i32,
        member: &dyn Fn(&[i32]) -> bool,
        out: &mut Vec<Vec<i32>>,
        required: &mut u128,
    ) {
        if j == freqs.len() {
            if member(s) {
                *required += s.iter().map(|&sj| (2 * m + 1 - sj.abs()) as u128).product::<u128>();
                out.push(s.clone());
            }
            return;
        }
        for sj in -smax..=smax {
            let p = partial + sj as f64 * freqs[j];
            if p.abs() > reach[j + 1] + slack {
                continue;
            }
            s[j] = sj;
            recurse(j + 1, p, s, freqs, reach, slack, smax, m, member, out, required);
        }
        s[j] = 0;
    }
    recurse(0, 0.0, &mut s, freqs, &reach, slack, smax, m, &member, &mut admissible, &mut required);

    if required > budget as u128 {
        return Err(Error::KernelBudget { required, budget });
    }

    let mut multiplets = Vec::with_capacity(required as usize);
    let mut pairs = vec![(0i32, 0i32); d];
    for s in &admissible {
        expand(0, s, m, &mut pairs, freqs, &mut multiplets);
    }
    Ok(KernelEnumeration { multiplets, m_max, tolerance: f64::NAN, weighted: false })
}

fn expand(j: usize, s: &[i32], m: i32, pairs: &mut Vec<(i32, i32)>, freqs: &[f64], out: &mut Vec<Multiplet>) {
    if j == s.len() {
        let f = pairs.iter().zip(freqs).map(|(&(_, mm), &w)| mm as f64 * w).sum();
        out.push(Multiplet {
            pairs: pairs.clone(),
            weight: 0.0,
            spatial_phase: 0.0,
            temporal_phase: 0.0,
            frequency_component: f,
        });
        return;
    }
    let lo = (-m).max(s[j] - m);
    let hi = m.min(s[j] + m);
    for n in lo..=hi {
        pairs[j] = (n, s[j] - n);
        expand(j + 1, s, m, pairs, freqs, out);
    }
}

/// `τ_s = 1 / gcd(f_1 … f_N)` for frequencies in Hz; `None` for an empty
/// list.
pub fn superperiod(hz: &[Ratio<i64>]) -> Option<f64> {
    let mut g: Option<Ratio<i64>> = None;
    for &f in hz {
        let f = if f < Ratio::from_integer(0) { -f } else { f };
        g = Some(match g {
            None => f,
            Some(acc) => ratio_gcd(acc, f),
        });
    }
    g.filter(|g| *g.numer() != 0).map(|g| *g.denom() as f64 / *g.numer() as f64)
}

/// Superperiod for frequencies that are only known as floats; returns `None`
/// when they cannot be written as rationals with denominators up to
/// `max_denom`.
pub fn superperiod_f64(hz: &[f64], max_denom: i64) -> Option<f64> {
    let rationals: Option<Vec<_>> = hz.iter().map(|&f| units::rationalize(f, max_denom, 1e-15)).collect();
    superperiod(&rationals?)
}

fn ratio_gcd(a: Ratio<i64>, b: Ratio<i64>) -> Ratio<i64> {
    fn gcd(mut a: i64, mut b: i64) -> i64 {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a.abs()
    }
    // gcd(p/q, r/s) = gcd(p s, r q) / (q s), reduced.
    let (p, q, r, s) = (*a.numer() as i128, *a.denom() as i128, *b.numer() as i128, *b.denom() as i128);
    let num = gcd((p * s) as i64, (r * q) as i64);
    Ratio::new(num, (q * s) as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ToneComponent;
    use crate::units::{hz_to_angular, parse_hz_rational};
    use std::collections::HashSet;

    fn w(hz: f64) -> f64 {
        hz_to_angular(hz)
    }

    #[test]
    fn single_frequency_has_only_trivial_multiplets() {
        let k = enumerate_kernel(&[w(50.0)], 2, 1e-6).unwrap();
        let mut pairs: Vec<_> = k.multiplets.iter().map(|m| m.pairs[0]).collect();
        pairs.sort();
        assert_eq!(pairs, vec![(-2, 2), (-1, 1), (0, 0), (1, -1), (2, -2)]);
    }

    #[test]
    fn harmonic_pair_has_cross_terms() {
        let k = enumerate_kernel(&[w(50.0), w(100.0)], 1, 1e-6).unwrap();
        assert!(k.multiplets.iter().any(|m| m.pairs == vec![(1, 1), (-1, 0)]));
        assert!(k.multiplets.iter().any(|m| !m.is_trivial()));
    }

    #[test]
    fn incommensurate_pair_matches_brute_force() {
        let f = [w(50.0), w(50.0 * 2f64.sqrt())];
        let k = enumerate_kernel(&f, 4, 1e-6).unwrap();
        let mut brute = HashSet::new();
        for n1 in -4..=4 {
            for m1 in -4..=4 {
                for n2 in -4..=4 {
                    for m2 in -4..=4 {
                        if (((n1 + m1) as f64) * f[0] + ((n2 + m2) as f64) * f[1]).abs() < 1e-6 {
                            brute.insert(vec![(n1, m1), (n2, m2)]);
                        }
                    }
                }
            }
        }
        let got: HashSet<_> = k.multiplets.iter().map(|m| m.pairs.clone()).collect();
        assert_eq!(got, brute);
        assert!(k.multiplets.iter().all(|m| m.is_trivial()));
        assert_eq!(k.len(), 81);
    }

    #[test]
    fn exact_and_float_tests_agree_for_commensurate_sets() {
        let hz =
            [parse_hz_rational("50").unwrap(), parse_hz_rational("100").unwrap(), parse_hz_rational("150").unwrap()];
        let exact = enumerate_kernel_exact(&hz, 3, DEFAULT_KERNEL_BUDGET).unwrap();
        let float = enumerate_kernel(&[w(50.0), w(100.0), w(150.0)], 3, 1e-6).unwrap();
        let a: HashSet<_> = exact.multiplets.iter().map(|m| m.pairs.clone()).collect();
        let b: HashSet<_> = float.multiplets.iter().map(|m| m.pairs.clone()).collect();
        assert_eq!(a, b);
        let zero_tol = enumerate_kernel(&[w(50.0), w(100.0), w(150.0)], 3, 0.0).unwrap();
        assert_eq!(zero_tol.len(), exact.len());
    }

    #[test]
    fn kernel_is_closed_under_negation_and_contains_zero() {
        let k = enumerate_kernel(&[w(50.0), w(100.0)], 4, 1e-6).unwrap();
        let set: HashSet<_> = k.multiplets.iter().map(|m| m.pairs.clone()).collect();
        assert!(set.contains(&vec![(0, 0), (0, 0)]));
        for m in &k.multiplets {
            assert!(set.contains(&m.negated_pairs()));
        }
    }

    #[test]
    fn budget_is_enforced() {
        let mut opts = KernelOptions::new(6, 1e-6);
        opts.budget = 100;
        let err = enumerate_with(&[w(50.0), w(100.0)], opts).unwrap_err();
        assert!(matches!(err, Error::KernelBudget { .. }));
        assert!(enumerate_kernel(&[], 2, 1e-6).is_err());
    }

    #[test]
    fn weight_examples() {
        let spec = PerturbationSpec::single_hz(50.0, 0.4 * std::f64::consts::PI, 0.3).unwrap();
        let (wgt, sp, tp, f) = multiplet_weight(&[(0, 0)], &spec).unwrap();
        let j0 = crate::bessel::bessel_j0(0.4 * std::f64::consts::PI);
        assert!((wgt - j0 * j0).abs() < 1e-15);
        assert_eq!((sp, tp, f), (0.0, 0.0, 0.0));
        // J_{-1} = -J_1, so the weight is -J_1².
        let (wgt, ..) = multiplet_weight(&[(-1, 1)], &spec).unwrap();
        let j1 = crate::bessel::bessel_j1(0.4 * std::f64::consts::PI);
        assert!((wgt + j1 * j1).abs() < 1e-15);
        assert!((j1 - 0.512_190_708_724_327_5).abs() < 1e-14);
    }

    #[test]
    fn negated_multiplet_relations() {
        let spec = PerturbationSpec::new(vec![
            ToneComponent::new(w(50.0), 0.5 * std::f64::consts::PI, 0.7),
            ToneComponent::new(w(100.0), 0.9, -1.1),
        ])
        .unwrap();
        let k = kernel_for_spec(&spec, Some(4), None).unwrap();
        let by_pairs: std::collections::HashMap<_, _> = k.multiplets.iter().map(|m| (m.pairs.clone(), m)).collect();
        for m in &k.multiplets {
            let neg = by_pairs[&m.negated_pairs()];
            let s: i32 = m.pairs.iter().map(|&(n, mm)| n + mm).sum();
            let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            assert!((neg.weight - sign * m.weight).abs() < 1e-15);
            assert!((neg.spatial_phase + m.spatial_phase).abs() < 1e-15);
            assert!((neg.temporal_phase + m.temporal_phase).abs() < 1e-15);
        }
    }

    #[test]
    fn superperiods() {
        let r = |s: &str| parse_hz_rational(s).unwrap();
        assert!((superperiod(&[r("50")]).unwrap() - 0.02).abs() < 1e-15);
        assert!((superperiod(&[r("50"), r("100")]).unwrap() - 0.02).abs() < 1e-15);
        assert!((superperiod(&[r("49.97"), r("50")]).unwrap() - 100.0).abs() < 1e-12);
        assert!(superperiod_f64(&[50.0, 50.0 * 2f64.sqrt()], 1_000_000).is_none());
        assert!((superperiod_f64(&[50.0, 75.0], 1000).unwrap() - 0.04).abs() < 1e-15);
    }
}
