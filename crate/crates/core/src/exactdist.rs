//! Exact law of S_n = X_1 + ... + X_n for a (d+1)-atom distribution.
//!
//! The law is the multinomial mixture over occupation numbers
//! (m_1, ..., m_{d+1}) with sum n: mass n!/(m_1!...m_{d+1}!) prod p_i^{m_i}
//! at the value sum m_i a_i. Each mass is evaluated directly in log space
//! from a log-factorial table, which is exact per point (no error
//! accumulation over n convolution steps) and costs O(support).

use crate::atoms::AtomicDistribution;
use crate::error::{Error, Result};
use rayon::prelude::*;

/// Hard cap on the enumerated support size.
pub const DEFAULT_SUPPORT_CAP: u128 = 200_000_000;

/// Masses below this are dropped; the dropped total stays below 1e-300.
const MASS_FLOOR_LOG: f64 = -736.8; // ln(1e-320)

/// Full support and masses of S_n, sorted strictly ascending.
#[derive(Debug, Clone)]
pub struct ExactLaw {
    pub n: u64,
    pub values: Vec<f64>,
    pub masses: Vec<f64>,
    pub merge_tol: f64,
    /// Upper bound on total mass lost to the 1e-320 floor.
    pub dropped_mass_bound: f64,
    d: usize,
    variance: f64,
    prefix: Vec<f64>,
}

impl ExactLaw {
    /// Total-mass defect |sum masses - 1|.
    pub fn mass_defect(&self) -> f64 {
        (kahan_sum(&self.masses) - 1.0).abs()
    }

    pub fn support_len(&self) -> usize {
        self.values.len()
    }

    /// P(S_n <= x), right-continuous in the raw (unscaled) variable.
    pub fn cdf_raw(&self, x: f64) -> f64 {
        match self.values.partial_point(x) {
            0 => 0.0,
            k => self.prefix[k - 1],
        }
    }

    fn check_matches(&self, dist: &AtomicDistribution) -> Result<()> {
        if self.d != dist.d() {
            return Err(Error::Mismatch(format!(
                "law built with d = {}, queried with d = {}",
                self.d,
                dist.d()
            )));
        }
        // Var(S_n) = n sigma^2 exactly; a mismatched n or distribution
        // shows up as a gross violation.
        let expect = self.n as f64 * dist.sigma() * dist.sigma();
        if (self.variance - expect).abs() > 1e-3 * expect {
            return Err(Error::Mismatch(format!(
                "law variance {} inconsistent with n sigma^2 = {}",
                self.variance, expect
            )));
        }
        Ok(())
    }

    /// CSV body `value,mass` with 17-significant-digit decimals.
    pub fn to_csv(&self) -> String {
        crate::io::csv_string(
            "value,mass",
            self.values
                .iter()
                .zip(&self.masses)
                .map(|(&v, &m)| vec![v, m]),
        )
    }
}

trait PartialPoint {
    /// Number of elements <= x in a sorted slice.
    fn partial_point(&self, x: f64) -> usize;
}

impl PartialPoint for Vec<f64> {
    fn partial_point(&self, x: f64) -> usize {
        self.partition_point(|&v| v <= x)
    }
}

/// Number of compositions of n into d+1 parts, saturating.
fn composition_count(n: u64, d: usize) -> u128 {
    let mut acc: u128 = 1;
    for i in 1..=d as u128 {
        acc = acc.saturating_mul(n as u128 + i);
        acc /= i;
    }
    acc
}

fn ln_factorial_table(n: u64) -> Vec<f64> {
    (0..=n).map(|k| libm::lgamma(k as f64 + 1.0)).collect()
}

/// Law of S_n with value merging at `merge_tol` (pass None for the default
/// 1e-9 * max|a|).
pub fn exact_law(dist: &AtomicDistribution, n: u64, merge_tol: Option<f64>) -> Result<ExactLaw> {
    exact_law_capped(dist, n, merge_tol, DEFAULT_SUPPORT_CAP)
}

pub fn exact_law_capped(
    dist: &AtomicDistribution,
    n: u64,
    merge_tol: Option<f64>,
    cap: u128,
) -> Result<ExactLaw> {
    let d = dist.d();
    let projected = composition_count(n, d);
    if projected > cap {
        return Err(Error::TooLarge(projected, cap));
    }
    let merge_tol = merge_tol.unwrap_or(1e-9 * dist.m_bound());

    let mut points: Vec<(f64, f64)> = Vec::with_capacity(projected as usize);
    let mut dropped: u64 = 0;
    enumerate_masses(dist, n, |value, mass, is_dropped| {
        if is_dropped {
            dropped += 1;
        } else {
            points.push((value, mass));
        }
    });

    points.par_sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    // Merge clusters split at gaps > merge_tol; cluster value is the
    // mass-weighted mean, so post-merge gaps stay > merge_tol.
    let mut values = Vec::with_capacity(points.len());
    let mut masses = Vec::with_capacity(points.len());
    let mut i = 0;
    while i < points.len() {
        let mut j = i + 1;
        while j < points.len() && points[j].0 - points[j - 1].0 <= merge_tol {
            j += 1;
        }
        if j == i + 1 {
            values.push(points[i].0);
            masses.push(points[i].1);
        } else {
            let mut msum = 0.0;
            let mut vsum = 0.0;
            for &(v, m) in &points[i..j] {
                msum += m;
                vsum += v * m;
            }
            values.push(vsum / msum);
            masses.push(msum);
        }
        i = j;
    }

    let prefix = prefix_sums(&masses);
    let variance = law_variance(&values, &masses);
    Ok(ExactLaw {
        n,
        values,
        masses,
        merge_tol,
        dropped_mass_bound: dropped as f64 * 1e-320,
        d,
        variance,
        prefix,
    })
}

fn law_variance(values: &[f64], masses: &[f64]) -> f64 {
    let mean: f64 = values.iter().zip(masses).map(|(&v, &m)| v * m).sum();
    values
        .iter()
        .zip(masses)
        .map(|(&v, &m)| m * (v - mean) * (v - mean))
        .sum()
}

/// Visit every composition's (value, mass). `emit(value, mass, dropped)`.
fn enumerate_masses<F: FnMut(f64, f64, bool)>(dist: &AtomicDistribution, n: u64, mut emit: F) {
    let d = dist.d();
    let lf = ln_factorial_table(n);
    let lnp: Vec<f64> = dist.probs().iter().map(|&p| p.ln()).collect();
    let a = dist.atoms();
    let base = lf[n as usize];

    if d == 2 {
        // m1 = n - m2 - m3; value = n a1 + m2 b2 + m3 b3
        let b2 = dist.offsets()[0];
        let b3 = dist.offsets()[1];
        let v0 = n as f64 * a[0];
        for m2 in 0..=n {
            let part2 = base - lf[m2 as usize] + m2 as f64 * lnp[1];
            let v2 = v0 + m2 as f64 * b2;
            for m3 in 0..=(n - m2) {
                let m1 = n - m2 - m3;
                let lm = part2 - lf[m3 as usize] - lf[m1 as usize]
                    + m3 as f64 * lnp[2]
                    + m1 as f64 * lnp[0];
                let value = v2 + m3 as f64 * b3;
                if lm < MASS_FLOOR_LOG {
                    emit(value, 0.0, true);
                } else {
                    emit(value, lm.exp(), false);
                }
            }
        }
        return;
    }

    // general d: recursive composition walk over m_2..m_{d+1}
    fn walk<F: FnMut(f64, f64, bool)>(
        level: usize,
        remaining: u64,
        lm_acc: f64,
        v_acc: f64,
        dist: &AtomicDistribution,
        lf: &[f64],
        lnp: &[f64],
        emit: &mut F,
    ) {
        let d = dist.d();
        if level == d {
            // remaining goes to atom 1 (index 0)
            let lm = lm_acc - lf[remaining as usize] + remaining as f64 * lnp[0];
            let value = v_acc + remaining as f64 * dist.atoms()[0];
            if lm < MASS_FLOOR_LOG {
                emit(value, 0.0, true);
            } else {
                emit(value, lm.exp(), false);
            }
            return;
        }
        let j = d - level; // atom index j+... counts down through atoms d+1..2
        for m in 0..=remaining {
            walk(
                level + 1,
                remaining - m,
                lm_acc - lf[m as usize] + m as f64 * lnp[j],
                v_acc + m as f64 * dist.atoms()[j],
                dist,
                lf,
                lnp,
                emit,
            );
        }
    }
    walk(0, n, base, 0.0, dist, &lf, &lnp, &mut emit);
}

/// Full enumeration of all (d+1)^n outcome strings; test oracle only.
pub fn brute_force_law(dist: &AtomicDistribution, n: u64) -> Result<ExactLaw> {
    let k = dist.d() as u128 + 1;
    let total = k.checked_pow(n as u32).unwrap_or(u128::MAX);
    if total > 10_000_000 {
        return Err(Error::TooLarge(total, 10_000_000));
    }
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(total as usize);
    let mut choice = vec![0usize; n as usize];
    loop {
        let mut v = 0.0;
        let mut p = 1.0;
        for &c in &choice {
            v += dist.atoms()[c];
            p *= dist.probs()[c];
        }
        points.push((v, p));
        // odometer
        let mut i = 0;
        loop {
            if i == choice.len() {
                let merge_tol = 1e-12 * dist.m_bound().max(1.0) * n as f64;
                return Ok(assemble(points, n, dist.d(), merge_tol));
            }
            choice[i] += 1;
            if choice[i] <= dist.d() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

fn assemble(mut points: Vec<(f64, f64)>, n: u64, d: usize, merge_tol: f64) -> ExactLaw {
    points.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut values = Vec::new();
    let mut masses = Vec::new();
    let mut i = 0;
    while i < points.len() {
        let mut j = i + 1;
        while j < points.len() && points[j].0 - points[j - 1].0 <= merge_tol {
            j += 1;
        }
        let mut msum = 0.0;
        let mut vsum = 0.0;
        for &(v, m) in &points[i..j] {
            msum += m;
            vsum += v * m;
        }
        values.push(vsum / msum);
        masses.push(msum);
        i = j;
    }
    let prefix = prefix_sums(&masses);
    let variance = law_variance(&values, &masses);
    ExactLaw {
        n,
        values,
        masses,
        merge_tol,
        dropped_mass_bound: 0.0,
        d,
        variance,
        prefix,
    }
}

fn prefix_sums(masses: &[f64]) -> Vec<f64> {
    let mut acc = 0.0f64;
    let mut comp = 0.0f64;
    masses
        .iter()
        .map(|&m| {
            let y = m - comp;
            let t = acc + y;
            comp = (t - acc) - y;
            acc = t;
            acc
        })
        .collect()
}

fn kahan_sum(xs: &[f64]) -> f64 {
    let mut acc = 0.0f64;
    let mut comp = 0.0f64;
    for &x in xs {
        let y = x - comp;
        let t = acc + y;
        comp = (t - acc) - y;
        acc = t;
    }
    acc
}

/// P(S_n/(sigma sqrt n) <= z), right-continuous.
pub fn cdf_scaled(law: &ExactLaw, dist: &AtomicDistribution, z: f64) -> Result<f64> {
    law.check_matches(dist)?;
    Ok(law.cdf_raw(z * dist.sigma() * (law.n as f64).sqrt()))
}

/// P(z1 < S_n/(sigma sqrt n) < z2), open interval.
pub fn interval_prob(
    law: &ExactLaw,
    dist: &AtomicDistribution,
    z1: f64,
    z2: f64,
) -> Result<f64> {
    if z1 >= z2 {
        return Err(Error::BadInterval(z1, z2));
    }
    law.check_matches(dist)?;
    let s = dist.sigma() * (law.n as f64).sqrt();
    let (t1, t2) = (z1 * s, z2 * s);
    let lo = law.values.partition_point(|&v| v <= t1);
    let hi = law.values.partition_point(|&v| v < t2);
    Ok(kahan_sum(&law.masses[lo..hi]))
}

/// Streaming evaluation of the scaled CDF at several thresholds without
/// materializing the law. Algebraically identical to
/// `cdf_scaled(exact_law(..), ..)` up to summation order.
pub fn cdf_scaled_stream(dist: &AtomicDistribution, n: u64, zs: &[f64]) -> Result<Vec<f64>> {
    let projected = composition_count(n, dist.d());
    if projected > DEFAULT_SUPPORT_CAP {
        return Err(Error::TooLarge(projected, DEFAULT_SUPPORT_CAP));
    }
    let s = dist.sigma() * (n as f64).sqrt();
    let thresholds: Vec<f64> = zs.iter().map(|&z| z * s).collect();
    let mut acc = vec![0.0f64; zs.len()];
    let mut comp = vec![0.0f64; zs.len()];
    enumerate_masses(dist, n, |value, mass, dropped| {
        if dropped {
            return;
        }
        for (i, &t) in thresholds.iter().enumerate() {
            if value <= t {
                let y = mass - comp[i];
                let tt = acc[i] + y;
                comp[i] = (tt - acc[i]) - y;
                acc[i] = tt;
            }
        }
    });
    Ok(acc)
}

/// Open-interval probabilities P(z1 < S_n/(sigma sqrt n) < z2) for several
/// windows, streaming.
pub fn interval_prob_stream(
    dist: &AtomicDistribution,
    n: u64,
    windows: &[(f64, f64)],
) -> Result<Vec<f64>> {
    for &(z1, z2) in windows {
        if z1 >= z2 {
            return Err(Error::BadInterval(z1, z2));
        }
    }
    let projected = composition_count(n, dist.d());
    if projected > DEFAULT_SUPPORT_CAP {
        return Err(Error::TooLarge(projected, DEFAULT_SUPPORT_CAP));
    }
    let s = dist.sigma() * (n as f64).sqrt();
    let mut acc = vec![0.0f64; windows.len()];
    let mut comp = vec![0.0f64; windows.len()];
    enumerate_masses(dist, n, |value, mass, dropped| {
        if dropped {
            return;
        }
        for (i, &(z1, z2)) in windows.iter().enumerate() {
            if value > z1 * s && value < z2 * s {
                let y = mass - comp[i];
                let tt = acc[i] + y;
                comp[i] = (tt - acc[i]) - y;
                acc[i] = tt;
            }
        }
    });
    Ok(acc)
}

/// For each n: n^{d/2} times the largest single mass among support values
/// with |v| <= window_z * sigma * sqrt(n).
pub fn max_jump_scan(
    dist: &AtomicDistribution,
    n_list: &[u64],
    window_z: f64,
) -> Result<Vec<(u64, f64)>> {
    let mut out = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let law = exact_law(dist, n, None)?;
        let w = window_z * dist.sigma() * (n as f64).sqrt();
        let lo = law.values.partition_point(|&v| v < -w);
        let hi = law.values.partition_point(|&v| v <= w);
        let max_mass = law.masses[lo..hi].iter().cloned().fold(0.0f64, f64::max);
        out.push((n, (n as f64).powf(dist.d() as f64 / 2.0) * max_mass));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::DEFAULT_TOL;

    fn dsym() -> AtomicDistribution {
        AtomicDistribution::validate(&[-1.0, 0.0, 1.0], &[0.25, 0.5, 0.25], DEFAULT_TOL).unwrap()
    }

    fn dirr() -> AtomicDistribution {
        let b2 = std::f64::consts::SQRT_2;
        let a1 = -(0.5 * b2 + 0.25 * 2.0);
        AtomicDistribution::validate(&[a1, a1 + b2, a1 + 2.0], &[0.25, 0.5, 0.25], DEFAULT_TOL)
            .unwrap()
    }

    #[test]
    fn dsym_n2_matches_hand_enumeration() {
        let law = exact_law(&dsym(), 2, None).unwrap();
        assert_eq!(law.values, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        let expect = [1.0 / 16.0, 0.25, 0.375, 0.25, 1.0 / 16.0];
        for (m, e) in law.masses.iter().zip(expect) {
            assert!((m - e).abs() < 1e-15);
        }
        assert!(law.mass_defect() < 1e-14);
    }

    #[test]
    fn n1_is_the_atom_law() {
        let d = dirr();
        let law = exact_law(&d, 1, None).unwrap();
        for (v, a) in law.values.iter().zip(d.atoms()) {
            assert!((v - a).abs() < 1e-14);
        }
        for (m, p) in law.masses.iter().zip(d.probs()) {
            assert!((m - p).abs() < 1e-15);
        }
    }

    fn align_and_compare(a: &ExactLaw, b: &ExactLaw, tol_mass: f64) {
        assert_eq!(a.values.len(), b.values.len(), "support sizes differ");
        for ((va, ma), (vb, mb)) in a
            .values
            .iter()
            .zip(&a.masses)
            .zip(b.values.iter().zip(&b.masses))
        {
            assert!((va - vb).abs() < 1e-9, "values {va} vs {vb}");
            assert!((ma - mb).abs() < tol_mass, "masses {ma} vs {mb}");
        }
    }

    #[test]
    fn brute_force_agrees_small_n() {
        let d = dirr();
        for n in [1u64, 2, 5, 8] {
            let exact = exact_law(&d, n, Some(1e-12)).unwrap();
            let brute = brute_force_law(&d, n).unwrap();
            align_and_compare(&exact, &brute, 1e-13);
        }
    }

    #[test]
    fn brute_force_too_large() {
        assert!(matches!(
            brute_force_law(&dsym(), 40),
            Err(Error::TooLarge(..))
        ));
    }

    #[test]
    fn rational_oracle_dsym_n2() {
        // probs are k/4, masses are integers over 4^2 = 16: check exactly
        let law = exact_law(&dsym(), 2, None).unwrap();
        let scaled: Vec<u64> = law.masses.iter().map(|m| (m * 16.0).round() as u64).collect();
        assert_eq!(scaled, vec![1, 4, 6, 4, 1]);
        assert_eq!(scaled.iter().sum::<u64>(), 16);
    }

    #[test]
    fn cdf_examples() {
        let d = dsym();
        let law = exact_law(&d, 2, None).unwrap();
        assert!((cdf_scaled(&law, &d, 0.0).unwrap() - 0.6875).abs() < 1e-14);
        assert_eq!(cdf_scaled(&law, &d, -50.0).unwrap(), 0.0);
        assert!((cdf_scaled(&law, &d, 50.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cdf_mismatch_detected() {
        let d = dsym();
        let other = dirr();
        let law = exact_law(&d, 2, None).unwrap();
        assert!(matches!(
            cdf_scaled(&law, &other, 0.0),
            Err(Error::Mismatch(_))
        ));
        let mut wrong = law.clone();
        wrong.n = 3;
        assert!(matches!(
            cdf_scaled(&wrong, &d, 0.0),
            Err(Error::Mismatch(_))
        ));
    }

    #[test]
    fn interval_examples() {
        let d = dsym();
        let law = exact_law(&d, 2, None).unwrap();
        let s = d.sigma() * 2.0f64.sqrt();
        // window covering only the value 0
        let p = interval_prob(&law, &d, -0.1 / s, 0.1 / s).unwrap();
        assert!((p - 0.375).abs() < 1e-14);
        // full support minus endpoint masses
        let p = interval_prob(&law, &d, -2.0 / s, 2.0 / s).unwrap();
        assert!((p - (1.0 - 2.0 / 16.0)).abs() < 1e-14);
        // empty intersection
        let p = interval_prob(&law, &d, 10.0, 11.0).unwrap();
        assert_eq!(p, 0.0);
        assert!(matches!(
            interval_prob(&law, &d, 1.0, 1.0),
            Err(Error::BadInterval(..))
        ));
    }

    #[test]
    fn max_jump_examples() {
        let d = dsym();
        let scan = max_jump_scan(&d, &[2], 0.25).unwrap();
        assert!((scan[0].1 - 2.0 * 0.375).abs() < 1e-14);
        let scan = max_jump_scan(&d, &[1], 10.0).unwrap();
        assert!((scan[0].1 - 0.5).abs() < 1e-14);
    }

    #[test]
    fn mass_conservation_large_n() {
        let law = exact_law(&dirr(), 4000, None).unwrap();
        assert!(law.mass_defect() < 1e-10, "defect {}", law.mass_defect());
        assert!(law.dropped_mass_bound < 1e-300);
        // strictly ascending with gaps > merge_tol
        for w in law.values.windows(2) {
            assert!(w[1] - w[0] > law.merge_tol);
        }
    }

    #[test]
    fn stream_matches_materialized() {
        let d = dirr();
        let law = exact_law(&d, 300, None).unwrap();
        let zs = [-1.0, 0.0, 0.7];
        let stream = cdf_scaled_stream(&d, 300, &zs).unwrap();
        for (&z, &sv) in zs.iter().zip(&stream) {
            let mv = cdf_scaled(&law, &d, z).unwrap();
            assert!((mv - sv).abs() < 1e-12);
        }
        let windows = [(-0.5, 0.25)];
        let ws = interval_prob_stream(&d, 300, &windows).unwrap();
        let wv = interval_prob(&law, &d, -0.5, 0.25).unwrap();
        assert!((ws[0] - wv).abs() < 1e-12);
    }

    #[test]
    fn support_cap_enforced() {
        assert!(matches!(
            exact_law_capped(&dsym(), 4000, None, 1000),
            Err(Error::TooLarge(..))
        ));
    }

    #[test]
    fn csv_export_shape() {
        let law = exact_law(&dsym(), 2, None).unwrap();
        let text = law.to_csv();
        assert!(text.starts_with("value,mass\n"));
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn lattice_case_support_collapses() {
        // b = (1, 2): S_n lives on n*a1 + Z, support size ~ 2n+1, not n^2/2
        let d = dsym();
        let law = exact_law(&d, 50, None).unwrap();
        assert_eq!(law.support_len(), 101);
    }
}
