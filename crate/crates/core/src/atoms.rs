//! Mean-zero distributions with d+1 atoms and their characteristic
//! function machinery: moments, cumulants, the offset gauge d(s), and the
//! |phi(s)| <= 1 - c d(s)^2 bound fit.

use crate::error::{Error, Result};
use crate::phase::two_prod;
use crate::rng::{stream, Domain};
use num_complex::Complex64;
use rand_distr::{Binomial, Distribution};

pub const DEFAULT_TOL: f64 = 1e-9;

/// A validated (d+1)-atom distribution with zero mean.
///
/// `atoms` are strictly increasing, `probs` positive and summing to one.
/// Offsets `b_j = a_j - a_1` (j = 2..=d+1), `sigma` the standard deviation,
/// `kappa_margin` the smallest of all probabilities and pairwise atom gaps,
/// `m_bound` the largest |a_i|; together they witness membership in the
/// compact parameter class the ensembles draw from.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicDistribution {
    atoms: Vec<f64>,
    probs: Vec<f64>,
    offsets: Vec<f64>,
    sigma: f64,
    kappa_margin: f64,
    m_bound: f64,
}

impl AtomicDistribution {
    /// Validate and normalize raw (atoms, probs) into a distribution.
    ///
    /// Atoms are sorted ascending with probs permuted along. A mean within
    /// `tol * max|a|` of zero is repaired by a rigid shift of the atom set;
    /// a larger mean is an error.
    pub fn validate(atoms: &[f64], probs: &[f64], tol: f64) -> Result<Self> {
        if atoms.len() != probs.len() || atoms.len() < 3 {
            return Err(Error::ProbInvalid(format!(
                "need equal-length sequences of length >= 3, got {} atoms / {} probs",
                atoms.len(),
                probs.len()
            )));
        }
        if atoms.iter().chain(probs.iter()).any(|x| !x.is_finite()) {
            return Err(Error::ProbInvalid("non-finite input".into()));
        }
        let psum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| p <= 0.0) {
            return Err(Error::ProbInvalid("probabilities must be positive".into()));
        }
        if (psum - 1.0).abs() > tol {
            return Err(Error::ProbInvalid(format!("sum of probs = {psum} != 1")));
        }

        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&i, &j| atoms[i].partial_cmp(&atoms[j]).unwrap());
        let mut a: Vec<f64> = order.iter().map(|&i| atoms[i]).collect();
        let p: Vec<f64> = order.iter().map(|&i| probs[i]).collect();

        let scale = a.iter().fold(0.0f64, |m, &x| m.max(x.abs())).max(1e-300);
        for w in a.windows(2) {
            if (w[1] - w[0]).abs() <= tol * scale {
                return Err(Error::DegenerateAtoms(w[0], w[1]));
            }
        }

        let mean: f64 = a.iter().zip(&p).map(|(&ai, &pi)| pi * ai).sum();
        if mean.abs() > tol * scale {
            return Err(Error::MeanNotZero(mean));
        }
        // Rigid shift a_1 <- -(sum_{j>=2} p_j b_j) makes the mean exactly
        // zero while keeping all offsets b_j fixed.
        let b: Vec<f64> = a.iter().skip(1).map(|&aj| aj - a[0]).collect();
        let a1 = -b
            .iter()
            .zip(p.iter().skip(1))
            .map(|(&bj, &pj)| pj * bj)
            .sum::<f64>();
        a[0] = a1;
        for (j, bj) in b.iter().enumerate() {
            a[j + 1] = a1 + bj;
        }

        let sigma2: f64 = a.iter().zip(&p).map(|(&ai, &pi)| pi * ai * ai).sum();
        if sigma2 <= 0.0 {
            return Err(Error::ProbInvalid("zero variance".into()));
        }
        let mut kappa = p.iter().cloned().fold(f64::INFINITY, f64::min);
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                kappa = kappa.min((a[j] - a[i]).abs());
            }
        }
        let m_bound = a.iter().fold(0.0f64, |m, &x| m.max(x.abs()));

        Ok(AtomicDistribution {
            atoms: a,
            probs: p,
            offsets: b,
            sigma: sigma2.sqrt(),
            kappa_margin: kappa,
            m_bound,
        })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Offsets b_j = a_j - a_1 for j = 2..=d+1, strictly increasing, b_{d+1} last.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// Number of offsets, i.e. one less than the number of atoms.
    pub fn d(&self) -> usize {
        self.offsets.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn kappa_margin(&self) -> f64 {
        self.kappa_margin
    }

    pub fn m_bound(&self) -> f64 {
        self.m_bound
    }

    /// Largest offset b_{d+1} = a_{d+1} - a_1 (positive).
    pub fn b_last(&self) -> f64 {
        *self.offsets.last().unwrap()
    }

    /// k-th raw moment sum p_i a_i^k.
    pub fn moment(&self, k: i64) -> Result<f64> {
        if k < 1 {
            return Err(Error::OrderOutOfRange(k));
        }
        Ok(self
            .atoms
            .iter()
            .zip(&self.probs)
            .map(|(&a, &p)| p * a.powi(k as i32))
            .sum())
    }

    /// k-th cumulant from the moment-cumulant recursion; kappa_1 = 0,
    /// kappa_2 = sigma^2 by construction.
    pub fn cumulant(&self, k: i64) -> Result<f64> {
        if k < 1 {
            return Err(Error::OrderOutOfRange(k));
        }
        Ok(self.cumulants_up_to(k as usize)[k as usize])
    }

    /// Cumulants kappa_1..kappa_k as a vector indexed by order (entry 0
    /// unused).
    pub fn cumulants_up_to(&self, k: usize) -> Vec<f64> {
        let mut moments = vec![0.0; k + 1];
        for (j, m) in moments.iter_mut().enumerate().skip(1) {
            *m = self.moment(j as i64).unwrap();
        }
        let mut kappa = vec![0.0; k + 1];
        for j in 1..=k {
            let mut acc = moments[j];
            for i in 1..j {
                acc -= binom(j - 1, i - 1) * kappa[i] * moments[j - i];
            }
            kappa[j] = acc;
        }
        kappa
    }

    /// Characteristic function phi(s) = sum p_j e^{i s a_j}.
    pub fn char_fn(&self, s: f64) -> Complex64 {
        self.atoms
            .iter()
            .zip(&self.probs)
            .map(|(&a, &p)| p * Complex64::new(0.0, s * a).exp())
            .sum()
    }

    /// psi(s) = p_1 + sum_{j>=2} p_j e^{i s b_j}, so that
    /// phi(s) = e^{i s a_1} psi(s).
    pub fn psi(&self, s: f64) -> Complex64 {
        let mut acc = Complex64::new(self.probs[0], 0.0);
        for (bj, &pj) in self.offsets.iter().zip(self.probs.iter().skip(1)) {
            acc += pj * Complex64::new(0.0, s * bj).exp();
        }
        acc
    }

    /// n log phi(s) as (log modulus, phase accumulator friendly arg),
    /// stable for |phi|^n far below the subnormal range.
    pub fn log_abs_psi(&self, s: f64) -> f64 {
        self.psi(s).norm().ln()
    }

    /// The offset gauge d(s) = max_j dist(b_j s, 2 pi Z), in [0, pi].
    ///
    /// Products b_j s reach 1e8 in the resonance sweeps; the reduction is
    /// exact in the product so the absolute error stays near machine eps.
    pub fn d_of_s(&self, s: f64) -> f64 {
        let tau = 2.0 * std::f64::consts::PI;
        let inv = 1.0 / tau;
        // second-order correction for the rounding of 1/(2 pi)
        let resid = -inv.mul_add(tau, -1.0) / tau;
        let mut dmax = 0.0f64;
        for &bj in &self.offsets {
            let p = two_prod(bj, s);
            let turns = p.mul_f64(inv).add_f64(p.hi * resid);
            let dist = turns.centered_frac().abs() * tau;
            dmax = dmax.max(dist);
        }
        dmax
    }

    /// Largest c with |phi(s)| <= 1 - c d(s)^2 on the whole grid.
    ///
    /// Grid points with d(s) = 0 satisfy the bound vacuously; if the grid
    /// contains nothing else the sentinel f64::MAX is returned.
    pub fn char_bound_fit(&self, s_grid: &[f64]) -> Result<f64> {
        if s_grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let mut c = f64::MAX;
        for &s in s_grid {
            let d = self.d_of_s(s);
            if d > 0.0 {
                c = c.min((1.0 - self.char_fn(s).norm()) / (d * d));
            }
        }
        Ok(c)
    }

    /// `count` independent draws of S_n, deterministic given the seed.
    ///
    /// Each draw samples the multinomial occupation numbers by chained
    /// binomials, which is exact and O(d) per draw.
    pub fn sample_sum(&self, n: u64, rng_seed: u64, count: usize) -> Vec<f64> {
        let mut rng = stream(rng_seed, Domain::SumSample, 0);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let mut remaining = n;
            let mut tail_p = 1.0f64;
            let mut s = 0.0f64;
            for (i, (&a, &p)) in self.atoms.iter().zip(&self.probs).enumerate() {
                if remaining == 0 {
                    break;
                }
                if i + 1 == self.atoms.len() {
                    s += remaining as f64 * a;
                    break;
                }
                let q = (p / tail_p).clamp(0.0, 1.0);
                let m = Binomial::new(remaining, q).unwrap().sample(&mut rng);
                s += m as f64 * a;
                remaining -= m;
                tail_p -= p;
            }
            out.push(s);
        }
        out
    }

    /// JSON object {"atoms":[...],"probs":[...]} with 17-significant-digit floats.
    pub fn to_json(&self) -> String {
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|&x| crate::io::fmt_f64(x))
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "{{\"atoms\":[{}],\"probs\":[{}]}}",
            fmt(&self.atoms),
            fmt(&self.probs)
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Io(e.to_string()))?;
        let get = |key: &str| -> Result<Vec<f64>> {
            v.get(key)
                .and_then(|x| x.as_array())
                .map(|arr| arr.iter().filter_map(|x| x.as_f64()).collect())
                .ok_or_else(|| Error::Io(format!("missing array field {key}")))
        };
        Self::validate(&get("atoms")?, &get("probs")?, DEFAULT_TOL)
    }
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Build a distribution from offsets b_2..b_{d+1} and probabilities, with
/// a_1 = -(sum p_j b_j) solving the mean-zero constraint.
pub fn from_offsets(offsets: &[f64], probs: &[f64], tol: f64) -> Result<AtomicDistribution> {
    if offsets.len() + 1 != probs.len() {
        return Err(Error::ProbInvalid("offsets/probs length mismatch".into()));
    }
    let a1 = -offsets
        .iter()
        .zip(probs.iter().skip(1))
        .map(|(&b, &p)| p * b)
        .sum::<f64>();
    let mut atoms = vec![a1];
    atoms.extend(offsets.iter().map(|&b| a1 + b));
    AtomicDistribution::validate(&atoms, probs, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    pub fn dsym() -> AtomicDistribution {
        AtomicDistribution::validate(&[-1.0, 0.0, 1.0], &[0.25, 0.5, 0.25], DEFAULT_TOL).unwrap()
    }

    fn dirr() -> AtomicDistribution {
        let b2 = std::f64::consts::SQRT_2;
        let a1 = -(0.5 * b2 + 0.25 * 2.0);
        AtomicDistribution::validate(&[a1, a1 + b2, a1 + 2.0], &[0.25, 0.5, 0.25], DEFAULT_TOL)
            .unwrap()
    }

    #[test]
    fn validate_symmetric() {
        let d = dsym();
        assert!((d.sigma() - 0.7071067811865476).abs() < 1e-15);
        assert_eq!(d.d(), 2);
        assert_eq!(d.offsets(), &[1.0, 2.0]);
        assert!((d.kappa_margin() - 0.25).abs() < TOL);
        assert!((d.m_bound() - 1.0).abs() < TOL);
    }

    #[test]
    fn validate_rejects_bad_probs() {
        let e = AtomicDistribution::validate(&[-1.0, 0.0, 1.0], &[0.5, 0.5, 0.5], DEFAULT_TOL);
        assert!(matches!(e, Err(Error::ProbInvalid(_))));
    }

    #[test]
    fn validate_rejects_nonzero_mean() {
        let e = AtomicDistribution::validate(&[0.0, 1.0, 2.0], &[1.0 / 3.0; 3], DEFAULT_TOL);
        assert!(matches!(e, Err(Error::MeanNotZero(_))));
    }

    #[test]
    fn validate_rejects_degenerate_atoms() {
        let e = AtomicDistribution::validate(&[-1.0, -1.0 + 1e-12, 1.0], &[0.25, 0.25, 0.5], 1e-9);
        assert!(matches!(e, Err(Error::DegenerateAtoms(..))));
    }

    #[test]
    fn validate_sorts_atoms() {
        let d =
            AtomicDistribution::validate(&[1.0, -1.0, 0.0], &[0.25, 0.25, 0.5], DEFAULT_TOL).unwrap();
        assert_eq!(d.atoms(), &[-1.0, 0.0, 1.0]);
        assert_eq!(d.probs(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn moments_and_cumulants() {
        let d = dsym();
        assert!(d.moment(3).unwrap().abs() < TOL);
        assert!(d.cumulant(3).unwrap().abs() < TOL);
        assert!((d.moment(4).unwrap() - 0.5).abs() < TOL);
        assert!((d.cumulant(4).unwrap() - (-0.25)).abs() < TOL);
        assert!((d.cumulant(2).unwrap() - d.sigma() * d.sigma()).abs() < TOL);
        let g = dirr();
        assert!((g.cumulant(2).unwrap() - g.sigma() * g.sigma()).abs() < TOL);
        assert!(matches!(d.cumulant(0), Err(Error::OrderOutOfRange(0))));
    }

    #[test]
    fn char_fn_values() {
        let d = dsym();
        assert!(d.char_fn(std::f64::consts::PI).norm() < 1e-14);
        assert!((d.char_fn(0.0) - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((d.char_fn(2.0 * std::f64::consts::PI).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn char_fn_psi_identity_and_symmetry() {
        let d = dirr();
        for i in 0..50 {
            let s = -40.0 + 1.7 * i as f64;
            let lhs = d.char_fn(s);
            let rhs = Complex64::new(0.0, s * d.atoms()[0]).exp() * d.psi(s);
            assert!((lhs - rhs).norm() < 1e-13);
            assert!((d.char_fn(-s) - lhs.conj()).norm() < 1e-13);
            assert!(lhs.norm() <= 1.0 + 1e-14);
        }
    }

    #[test]
    fn d_of_s_values() {
        let d = dsym(); // b = (1, 2)
        assert!(d.d_of_s(2.0 * std::f64::consts::PI) < 1e-12);
        assert!((d.d_of_s(std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        let g = dirr(); // b = (sqrt2, 2)
        let expect = std::f64::consts::PI * (2.0 - std::f64::consts::SQRT_2);
        assert!((g.d_of_s(std::f64::consts::PI) - expect).abs() < 1e-7);
    }

    #[test]
    fn d_of_s_zero_iff_lattice_point_and_modulus_one() {
        let d = dsym();
        for k in 1..6 {
            let s = 2.0 * std::f64::consts::PI * k as f64;
            assert!(d.d_of_s(s) < 1e-10);
            assert!((d.char_fn(s).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn char_bound_fit_values() {
        let d = dsym();
        let c = d.char_bound_fit(&[std::f64::consts::PI]).unwrap();
        let expect = 1.0 / (std::f64::consts::PI * std::f64::consts::PI);
        assert!((c - expect).abs() < 1e-12);

        // grid of lattice points only: bound vacuous
        let c0 = d
            .char_bound_fit(&[2.0 * std::f64::consts::PI, 4.0 * std::f64::consts::PI])
            .unwrap();
        assert_eq!(c0, f64::MAX);

        // dense sweep stays positive and the fitted bound holds by construction
        let grid: Vec<f64> = (0..10_000).map(|i| 1.0 + 99.0 * i as f64 / 9_999.0).collect();
        let c = d.char_bound_fit(&grid).unwrap();
        assert!(c > 0.0);
        for &s in grid.iter().step_by(97) {
            let ds = d.d_of_s(s);
            assert!(1.0 - d.char_fn(s).norm() >= c * ds * ds - 1e-12);
        }
        assert!(matches!(d.char_bound_fit(&[]), Err(Error::EmptyGrid)));
    }

    #[test]
    fn sample_sum_contracts() {
        let d = dsym();
        let xs = d.sample_sum(1, 11, 200);
        assert!(xs.iter().all(|&x| x == -1.0 || x == 0.0 || x == 1.0));

        let n = 10_000u64;
        let count = 10_000usize;
        let xs = d.sample_sum(n, 42, count);
        let mean = xs.iter().sum::<f64>() / count as f64;
        let tol = 5.0 * d.sigma() * (n as f64).sqrt() / (count as f64).sqrt();
        assert!(mean.abs() < tol, "mean = {mean}, tol = {tol}");

        let again = d.sample_sum(n, 42, 100);
        assert_eq!(&xs[..100], &again[..]);
    }

    #[test]
    fn json_round_trip() {
        let d = dirr();
        let text = d.to_json();
        let back = AtomicDistribution::from_json(&text).unwrap();
        // re-validation re-derives the mean-zero shift, so allow ulps
        for (x, y) in d.atoms().iter().zip(back.atoms()) {
            assert!((x - y).abs() < 1e-15);
        }
        for (x, y) in d.probs().iter().zip(back.probs()) {
            assert_eq!(x, y);
        }
    }
}
