//! Unimodular lattices with characters: the rescaled lattice of a
//! distribution, shortest-spanning-set reduction, vector enumeration,
//! Haar sampling on the modular surface, the Siegel count check, and the
//! small-|y| floor.
//!
//! Convention used everywhere: the y-coordinate of a vector is its FIRST
//! component, x the remaining d-1. Mixing this up corrupts every series
//! downstream, so all modules go through `split_yx`.

use crate::atoms::AtomicDistribution;
use crate::error::{Error, Result};
use crate::linalg::{dot, eigen_sym, norm, Mat};
use crate::phase::PhaseTurns;
use crate::resonance::{gamma, uv_parameters, y_unit, StructureConstants};
use crate::rng::{stream, Domain, Stream};
use rand::Rng;

/// y is the first coordinate, x the rest.
pub fn split_yx(w: &[f64]) -> (f64, &[f64]) {
    (w[0], &w[1..])
}

/// Full-rank lattice in R^d given by row generators, with the reduced
/// (shortest spanning) basis cached after [`UnimodularLattice::reduce`].
#[derive(Debug, Clone)]
pub struct UnimodularLattice {
    pub basis: Mat,
    pub d: usize,
    pub reduced: Option<Mat>,
}

/// Character encoded by its values theta_j = chi(w_j) on the reduced basis.
#[derive(Debug, Clone)]
pub struct Character {
    pub theta: Vec<f64>,
}

impl Character {
    /// chi(sum m_j w_j) = sum m_j theta_j mod 1, in [0, 1).
    pub fn of_coeffs(&self, m: &[i64]) -> f64 {
        let mut acc = PhaseTurns::new();
        for (&mj, &tj) in m.iter().zip(&self.theta) {
            acc.add_prod(mj as f64, tj);
        }
        acc.frac()
    }

    pub fn negate(&self) -> Character {
        Character {
            theta: self
                .theta
                .iter()
                .map(|&t| if t == 0.0 { 0.0 } else { 1.0 - t })
                .collect(),
        }
    }
}

/// H_gamma: identity with first row (1, gamma).
pub fn h_gamma(gam: &[f64]) -> Mat {
    let d = gam.len() + 1;
    let mut m = vec![vec![0.0; d]; d];
    m[0][0] = 1.0;
    for (j, &g) in gam.iter().enumerate() {
        m[0][j + 1] = g;
    }
    for i in 1..d {
        m[i][i] = 1.0;
    }
    m
}

/// G_t = diag(e^{-(d-1)t}, e^t, ..., e^t).
pub fn g_t(t: f64, d: usize) -> Mat {
    let mut m = vec![vec![0.0; d]; d];
    m[0][0] = (-(d as f64 - 1.0) * t).exp();
    for i in 1..d {
        m[i][i] = t.exp();
    }
    m
}

/// Determinant of a small square matrix by Gaussian elimination.
pub fn det_general(m: &Mat) -> f64 {
    let n = m.len();
    let mut a = m.clone();
    let mut det = 1.0;
    for i in 0..n {
        let mut piv = i;
        for r in i + 1..n {
            if a[r][i].abs() > a[piv][i].abs() {
                piv = r;
            }
        }
        if a[piv][i] == 0.0 {
            return 0.0;
        }
        if piv != i {
            a.swap(i, piv);
            det = -det;
        }
        det *= a[i][i];
        for r in i + 1..n {
            let f = a[r][i] / a[i][i];
            for c in i..n {
                a[r][c] -= f * a[i][c];
            }
        }
    }
    det
}

/// The rescaled lattice Z^d H_gamma G_{ln(n)/2} of a distribution: first
/// column n^{-(d-1)/2}, remaining block sqrt(n) (gamma | I).
pub fn lattice_of(n: u64, dist: &AtomicDistribution) -> UnimodularLattice {
    let d = dist.d();
    let gam = gamma(dist);
    let sqrt_n = (n as f64).sqrt();
    let mut basis = vec![vec![0.0; d]; d];
    basis[0][0] = y_unit(n, d);
    for (j, &g) in gam.iter().enumerate() {
        basis[0][j + 1] = sqrt_n * g;
    }
    for i in 1..d {
        basis[i][i] = sqrt_n;
    }
    UnimodularLattice {
        basis,
        d,
        reduced: None,
    }
}

impl UnimodularLattice {
    pub fn from_basis(basis: Mat) -> Self {
        let d = basis.len();
        UnimodularLattice {
            basis,
            d,
            reduced: None,
        }
    }

    pub fn det(&self) -> f64 {
        det_general(&self.basis)
    }

    /// Gram matrix of a row basis.
    fn gram(rows: &Mat) -> Mat {
        let n = rows.len();
        let mut g = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                g[i][j] = dot(&rows[i], &rows[j]);
            }
        }
        g
    }

    /// Shortest spanning set: Gauss-Lagrange for d = 2, LLL(0.999) plus an
    /// exhaustive polish inside the guaranteed coefficient box for d = 3, 4.
    /// Rows of the result are sorted by norm with canonical signs.
    pub fn reduce(&mut self) -> Result<&Mat> {
        if self.reduced.is_some() {
            return Ok(self.reduced.as_ref().unwrap());
        }
        let g = Self::gram(&self.basis);
        let ev = eigen_sym(&g);
        let cond = (ev[ev.len() - 1] / ev[0].max(1e-300)).sqrt();
        if !cond.is_finite() || cond > 1e12 {
            return Err(Error::NumericalRankLoss(cond));
        }
        let mut rows = self.basis.clone();
        if self.d == 2 {
            gauss_lagrange(&mut rows);
        } else {
            lll(&mut rows, 0.999);
            polish_minima(&mut rows)?;
        }
        rows.sort_by(|a, b| norm(a).partial_cmp(&norm(b)).unwrap());
        for r in rows.iter_mut() {
            canonical_sign(r);
        }
        self.reduced = Some(rows);
        Ok(self.reduced.as_ref().unwrap())
    }

    pub fn reduced_basis(&self) -> Result<&Mat> {
        self.reduced
            .as_ref()
            .ok_or_else(|| Error::Mismatch("lattice not reduced".into()))
    }

    /// All nonzero vectors with ||w|| <= r, each exactly once (both signs).
    pub fn enumerate_ball(&self, r: f64) -> Result<Vec<(Vec<f64>, Vec<i64>)>> {
        let basis = self.reduced_basis()?.clone();
        let projected = ball_volume(self.d, r) / self.det().abs().max(1e-300);
        if projected > 1e8 {
            return Err(Error::BudgetExceeded(projected as u128));
        }
        Ok(fincke_pohst(&basis, r * r)
            .into_iter()
            .filter(|(w, _)| norm(w) <= r + 1e-9)
            .collect())
    }

    /// Siegel-volume heuristic for the ball count (diagnostic).
    pub fn ball_count_heuristic(&self, r: f64) -> f64 {
        ball_volume(self.d, r) / self.det().abs().max(1e-300)
    }

    /// All nonzero vectors with |y| <= y_max and ||x|| <= x_max.
    pub fn enumerate_box(&self, y_max: f64, x_max: f64) -> Result<Vec<(Vec<f64>, Vec<i64>)>> {
        let basis = self.reduced_basis()?;
        // the ellipsoid (y/y_max)^2/2 + (|x|/x_max)^2/2 <= 1 contains the box
        let scaled: Mat = basis
            .iter()
            .map(|row| {
                let mut s = row.clone();
                s[0] /= std::f64::consts::SQRT_2 * y_max;
                for v in s.iter_mut().skip(1) {
                    *v /= std::f64::consts::SQRT_2 * x_max;
                }
                s
            })
            .collect();
        let covol = det_general(&scaled).abs().max(1e-300);
        let projected = ball_volume(self.d, 1.0) / covol;
        if projected > 1e8 {
            return Err(Error::BudgetExceeded(projected as u128));
        }
        let mut out = Vec::new();
        for (_, m) in fincke_pohst(&scaled, 1.0) {
            let w: Vec<f64> = (0..self.d)
                .map(|c| m.iter().zip(basis).map(|(&mi, row)| mi as f64 * row[c]).sum())
                .collect();
            let (y, x) = split_yx(&w);
            if y.abs() <= y_max && norm(x) <= x_max {
                out.push((w, m));
            }
        }
        Ok(out)
    }

    /// JSON dump {"basis":[[..]],"reduced":[[..]],"theta":[..]}.
    pub fn to_json(&self, theta: Option<&Character>) -> String {
        let fmt_mat = |m: &Mat| {
            let rows: Vec<String> = m
                .iter()
                .map(|r| {
                    format!(
                        "[{}]",
                        r.iter()
                            .map(|&x| crate::io::fmt_f64(x))
                            .collect::<Vec<_>>()
                            .join(",")
                    )
                })
                .collect();
            format!("[{}]", rows.join(","))
        };
        let reduced = self
            .reduced
            .as_ref()
            .map(|m| fmt_mat(m))
            .unwrap_or_else(|| "null".into());
        let theta_s = theta
            .map(|c| {
                format!(
                    "[{}]",
                    c.theta
                        .iter()
                        .map(|&x| crate::io::fmt_f64(x))
                        .collect::<Vec<_>>()
                        .join(",")
                )
            })
            .unwrap_or_else(|| "null".into());
        format!(
            "{{\"basis\":{},\"reduced\":{},\"theta\":{}}}",
            fmt_mat(&self.basis),
            reduced,
            theta_s
        )
    }
}

fn ball_volume(d: usize, r: f64) -> f64 {
    match d {
        1 => 2.0 * r,
        2 => std::f64::consts::PI * r * r,
        3 => 4.0 / 3.0 * std::f64::consts::PI * r.powi(3),
        4 => 0.5 * std::f64::consts::PI.powi(2) * r.powi(4),
        _ => panic!("unsupported dimension {d}"),
    }
}

fn canonical_sign(w: &mut [f64]) {
    for &v in w.iter() {
        if v > 0.0 {
            return;
        }
        if v < 0.0 {
            for u in w.iter_mut() {
                *u = -*u;
            }
            return;
        }
    }
}

fn round_half_even(x: f64) -> f64 {
    let r = x.round();
    if (r - x).abs() == 0.5 {
        2.0 * (x / 2.0).round()
    } else {
        r
    }
}

/// Exact shortest pair for planar lattices.
fn gauss_lagrange(rows: &mut Mat) {
    loop {
        if dot(&rows[0], &rows[0]) > dot(&rows[1], &rows[1]) {
            rows.swap(0, 1);
        }
        let mu = round_half_even(dot(&rows[0], &rows[1]) / dot(&rows[0], &rows[0]));
        if mu == 0.0 {
            break;
        }
        for c in 0..2 {
            rows[1][c] -= mu * rows[0][c];
        }
    }
}

/// Floating-point LLL on row vectors.
fn lll(rows: &mut Mat, delta: f64) {
    let n = rows.len();
    let mut k = 1;
    let mut guard = 0;
    while k < n {
        guard += 1;
        if guard > 10_000 {
            break;
        }
        // Gram-Schmidt up to k
        let (bstar, mu) = gram_schmidt(rows);
        // size-reduce row k against j < k
        for j in (0..k).rev() {
            let m = round_half_even(mu[k][j]);
            if m != 0.0 {
                for c in 0..rows[k].len() {
                    rows[k][c] -= m * rows[j][c];
                }
            }
        }
        let (bstar2, mu2) = gram_schmidt(rows);
        let lhs = dot(&bstar2[k], &bstar2[k]);
        let rhs = (delta - mu2[k][k - 1] * mu2[k][k - 1]) * dot(&bstar2[k - 1], &bstar2[k - 1]);
        if lhs >= rhs {
            k += 1;
        } else {
            rows.swap(k, k - 1);
            k = k.max(2) - 1;
            let _ = bstar;
        }
    }
}

fn gram_schmidt(rows: &Mat) -> (Mat, Mat) {
    let n = rows.len();
    let dim = rows[0].len();
    let mut bstar: Mat = vec![vec![0.0; dim]; n];
    let mut mu = vec![vec![0.0; n]; n];
    for i in 0..n {
        bstar[i] = rows[i].clone();
        for j in 0..i {
            let denom = dot(&bstar[j], &bstar[j]);
            mu[i][j] = if denom > 0.0 {
                dot(&rows[i], &bstar[j]) / denom
            } else {
                0.0
            };
            for c in 0..dim {
                bstar[i][c] -= mu[i][j] * bstar[j][c];
            }
        }
    }
    (bstar, mu)
}

/// After LLL, enumerate all vectors up to the current max row norm and pick
/// the successive minima greedily; falls back to the LLL basis when the
/// greedy set does not span (possible only at d = 4).
fn polish_minima(rows: &mut Mat) -> Result<()> {
    let d = rows.len();
    let r_max = rows.iter().map(|r| norm(r)).fold(0.0f64, f64::max) * (1.0 + 1e-12);
    let mut cands = fincke_pohst(rows, r_max * r_max);
    cands.sort_by(|a, b| norm(&a.0).partial_cmp(&norm(&b.0)).unwrap());
    let mut picked: Mat = Vec::new();
    for (w, _) in cands {
        if picked.len() == d {
            break;
        }
        if is_independent(&picked, &w) {
            picked.push(w);
        }
    }
    if picked.len() == d {
        let vol_ratio = (det_general(&picked) / det_general(rows)).abs();
        if (vol_ratio - 1.0).abs() < 1e-6 {
            *rows = picked;
        }
        // index > 1: the minima do not span; keep the LLL basis
    }
    Ok(())
}

fn is_independent(picked: &Mat, w: &[f64]) -> bool {
    if picked.is_empty() {
        return norm(w) > 0.0;
    }
    // Gram determinant of picked + w stays away from zero
    let mut all: Mat = picked.clone();
    all.push(w.to_vec());
    let k = all.len();
    let mut g = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            g[i][j] = dot(&all[i], &all[j]);
        }
    }
    let ev = eigen_sym(&g);
    ev[0] > 1e-9 * ev[k - 1].max(1e-300)
}

/// All nonzero integer combinations with ||m B||^2 <= r2 (both signs).
fn fincke_pohst(basis: &Mat, r2: f64) -> Vec<(Vec<f64>, Vec<i64>)> {
    let n = basis.len();
    let g = UnimodularLattice::gram(basis);
    // quadratic completion q: |m B|^2 = sum_i q_ii (m_i + sum_{j>i} q_ij m_j)^2
    let mut q = g.clone();
    for i in 0..n {
        for j in i + 1..n {
            q[j][i] = q[i][j];
            q[i][j] /= q[i][i];
        }
        for l in i + 1..n {
            for c in i + 1..n {
                q[l][c] -= q[l][i] * q[i][c];
            }
        }
    }
    let mut out = Vec::new();
    let mut m = vec![0i64; n];
    enumerate_level(&q, r2, n - 1, &mut m, 0.0, &mut |m| {
        if m.iter().any(|&mi| mi != 0) {
            let w: Vec<f64> = (0..basis[0].len())
                .map(|c| {
                    m.iter()
                        .zip(basis)
                        .map(|(&mi, row)| mi as f64 * row[c])
                        .sum()
                })
                .collect();
            out.push((w, m.to_vec()));
        }
    });
    out
}

fn enumerate_level(
    q: &Mat,
    budget: f64,
    level: usize,
    m: &mut Vec<i64>,
    _acc: f64,
    emit: &mut impl FnMut(&[i64]),
) {
    // offset for this level given the fixed higher coordinates
    let n = q.len();
    let center: f64 = (level + 1..n).map(|j| q[level][j] * m[j] as f64).sum();
    if budget < 0.0 {
        return;
    }
    let half_width = (budget / q[level][level]).max(0.0).sqrt();
    let lo = (-center - half_width - 1e-12).ceil() as i64;
    let hi = (-center + half_width + 1e-12).floor() as i64;
    for mi in lo..=hi {
        m[level] = mi;
        let used = q[level][level] * (mi as f64 + center) * (mi as f64 + center);
        if level == 0 {
            if used <= budget + 1e-12 {
                emit(m);
            }
        } else {
            enumerate_level(q, budget - used, level - 1, m, 0.0, emit);
        }
    }
    m[level] = 0;
}

/// theta_j = frac(u . x_j + v y_j) on the reduced basis of the rescaled
/// lattice, with the large products reduced in extended precision.
pub fn character_of(
    dist: &AtomicDistribution,
    sc: &StructureConstants,
    n: u64,
    z: f64,
    reduced: &Mat,
) -> Character {
    let (u, v) = uv_parameters(dist, sc, n, z);
    let theta = reduced
        .iter()
        .map(|w| {
            let (y, x) = split_yx(w);
            let mut acc = PhaseTurns::new();
            acc.add_prod(v, y);
            for (&uj, &xj) in u.iter().zip(x) {
                acc.add_prod(uj, xj);
            }
            acc.frac()
        })
        .collect();
    Character { theta }
}

/// One Haar draw of (lattice, character).
#[derive(Debug, Clone)]
pub struct HaarSample {
    pub lattice: UnimodularLattice,
    pub character: Character,
    /// d = 2 sampler is exact; d = 3 is the documented approximation.
    pub exact: bool,
    /// Mass lost to the cusp cap y <= 1e3 (d = 2).
    pub truncated_mass: f64,
}

const HAAR_Y_CAP: f64 = 1e3;

/// Haar sample: d = 2 exact via the modular-surface fundamental domain
/// composed with a uniform rotation; d = 3 approximate (APPROX), built
/// from a random integer unimodular word times Iwasawa coordinates.
pub fn haar_sample(d: usize, rng_seed: u64) -> Result<HaarSample> {
    let mut rng = stream(rng_seed, Domain::Haar, 0);
    haar_sample_stream(d, &mut rng)
}

pub fn haar_sample_stream(d: usize, rng: &mut Stream) -> Result<HaarSample> {
    match d {
        2 => Ok(haar_2d(rng)),
        3 => Ok(haar_3d_approx(rng)),
        _ => Err(Error::UnsupportedDim(d)),
    }
}

fn haar_2d(rng: &mut Stream) -> HaarSample {
    let a = 3.0f64.sqrt() / 2.0;
    let (x, y) = loop {
        let x: f64 = rng.random_range(-0.5..0.5);
        // density 1/y^2 on [a, cap]
        let u: f64 = rng.random();
        let y = 1.0 / (1.0 / a - u * (1.0 / a - 1.0 / HAAR_Y_CAP));
        if x * x + y * y >= 1.0 {
            break (x, y);
        }
    };
    let theta_rot: f64 = rng.random_range(0.0..(2.0 * std::f64::consts::PI));
    let (c, s) = (theta_rot.cos(), theta_rot.sin());
    let sq = y.sqrt();
    let v1 = [1.0 / sq, 0.0];
    let v2 = [x / sq, sq];
    let rot = |v: [f64; 2]| vec![c * v[0] - s * v[1], s * v[0] + c * v[1]];
    let basis = vec![rot(v1), rot(v2)];
    let character = Character {
        theta: vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
    };
    HaarSample {
        lattice: UnimodularLattice::from_basis(basis),
        character,
        exact: true,
        truncated_mass: (1.0 / HAAR_Y_CAP) / (std::f64::consts::PI / 3.0),
    }
}

fn haar_3d_approx(rng: &mut Stream) -> HaarSample {
    // random integer unimodular word
    let mut q = vec![vec![0.0f64; 3]; 3];
    for (i, row) in q.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..12 {
        let i = rng.random_range(0..3usize);
        let mut j = rng.random_range(0..2usize);
        if j >= i {
            j += 1;
        }
        let c = *[-2.0f64, -1.0, 1.0, 2.0]
            .get(rng.random_range(0..4usize))
            .unwrap();
        for col in 0..3 {
            q[i][col] = q[i][col] + c * q[j][col];
        }
    }
    // Iwasawa-like unit-determinant upper factor
    let t1: f64 = rng.random_range(-0.8..0.8);
    let t2: f64 = rng.random_range(-0.8..0.8);
    let u12: f64 = rng.random_range(-1.0..1.0);
    let u13: f64 = rng.random_range(-1.0..1.0);
    let u23: f64 = rng.random_range(-1.0..1.0);
    let t = vec![
        vec![t1.exp(), u12, u13],
        vec![0.0, t2.exp(), u23],
        vec![0.0, 0.0, (-t1 - t2).exp()],
    ];
    let basis = crate::linalg::mat_mul(&q, &t);
    let character = Character {
        theta: (0..3).map(|_| rng.random_range(0.0..1.0)).collect(),
    };
    HaarSample {
        lattice: UnimodularLattice::from_basis(basis),
        character,
        exact: false,
        truncated_mass: 0.0,
    }
}

/// Lattice points of a 2d lattice inside the box [y1,y2] x [x1,x2].
pub fn count_in_box_2d(lat: &UnimodularLattice, y_range: (f64, f64), x_range: (f64, f64)) -> u64 {
    assert_eq!(lat.d, 2);
    let b = &lat.basis;
    // coefficient bounds from the box corners mapped through B^{-1}
    let det = det_general(b);
    let inv = vec![
        vec![b[1][1] / det, -b[0][1] / det],
        vec![-b[1][0] / det, b[0][0] / det],
    ];
    let corners = [
        (y_range.0, x_range.0),
        (y_range.0, x_range.1),
        (y_range.1, x_range.0),
        (y_range.1, x_range.1),
    ];
    let (mut m0_lo, mut m0_hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(y, x) in &corners {
        let m0 = y * inv[0][0] + x * inv[1][0];
        m0_lo = m0_lo.min(m0);
        m0_hi = m0_hi.max(m0);
    }
    let mut count = 0u64;
    for m0 in (m0_lo.floor() as i64 - 1)..=(m0_hi.ceil() as i64 + 1) {
        // y = m0 b00 + m1 b10, x = m0 b01 + m1 b11: solve m1 ranges
        let range_for = |lo: f64, hi: f64, base: f64, slope: f64| -> (f64, f64) {
            if slope.abs() < 1e-300 {
                if base >= lo && base <= hi {
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    (f64::INFINITY, f64::NEG_INFINITY)
                }
            } else {
                let a = (lo - base) / slope;
                let b = (hi - base) / slope;
                (a.min(b), a.max(b))
            }
        };
        let (ylo, yhi) = range_for(y_range.0, y_range.1, m0 as f64 * b[0][0], b[1][0]);
        let (xlo, xhi) = range_for(x_range.0, x_range.1, m0 as f64 * b[0][1], b[1][1]);
        let lo = ylo.max(xlo);
        let hi = yhi.min(xhi);
        if lo > hi {
            continue;
        }
        let lo_i = lo.ceil() as i64;
        let hi_i = hi.floor() as i64;
        if hi_i >= lo_i {
            count += (hi_i - lo_i + 1) as u64;
        }
    }
    count
}

/// Monte Carlo mean and standard error of the lattice count in a box over
/// Haar samples; the Siegel identity says the mean is the box volume.
pub fn siegel_check(
    d: usize,
    y_range: (f64, f64),
    x_range: (f64, f64),
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if d != 2 {
        return Err(Error::UnsupportedDim(d));
    }
    let mut counts = Vec::with_capacity(samples);
    for i in 0..samples {
        let mut rng = stream(seed, Domain::Haar, i as u64 + 1);
        let s = haar_sample_stream(2, &mut rng)?;
        counts.push(count_in_box_2d(&s.lattice, y_range, x_range) as f64);
    }
    let mean = counts.iter().sum::<f64>() / samples as f64;
    let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>()
        / (samples as f64 - 1.0).max(1.0);
    Ok((mean, (var / samples as f64).sqrt()))
}

/// Over all nonzero w with ||w|| <= r: the smallest |y(w)| ||w||^beta, plus
/// the list of exact y = 0 vectors (violations of the generic floor).
pub fn diophantine_floor(
    lat: &UnimodularLattice,
    beta: f64,
    r: f64,
) -> Result<(f64, Vec<Vec<i64>>)> {
    let vs = lat.enumerate_ball(r)?;
    let mut c_est = f64::INFINITY;
    let mut violations = Vec::new();
    for (w, m) in vs {
        let (y, _) = split_yx(&w);
        if y.abs() < 1e-12 * norm(&w).max(1.0) {
            violations.push(m);
        } else {
            c_est = c_est.min(y.abs() * norm(&w).powf(beta));
        }
    }
    Ok((c_est, violations))
}
