//! Small dense symmetric-matrix helpers (dimensions 1..4): quadratic
//! forms, determinants, Jacobi eigenvalues, SPD square roots, Cholesky.

pub type Mat = Vec<Vec<f64>>;

pub fn mat_dim(m: &Mat) -> usize {
    m.len()
}

pub fn quad_form(m: &Mat, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (i, row) in m.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            acc += v * x[i] * x[j];
        }
    }
    acc
}

pub fn mat_vec(m: &Mat, x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(&a, &b)| a * b).sum())
        .collect()
}

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let k = b[0].len();
    let mut out = vec![vec![0.0; k]; n];
    for i in 0..n {
        for l in 0..b.len() {
            let ail = a[i][l];
            for j in 0..k {
                out[i][j] += ail * b[l][j];
            }
        }
    }
    out
}

pub fn det_sym(m: &Mat) -> f64 {
    match m.len() {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        3 => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
        n => panic!("det_sym: unsupported dimension {n}"),
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn eigen_sym(m: &Mat) -> Vec<f64> {
    let n = m.len();
    let mut a = m.clone();
    for _ in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Symmetric positive-definite square root via eigen-decomposition.
pub fn sqrt_spd(m: &Mat) -> Mat {
    let n = m.len();
    if n == 1 {
        return vec![vec![m[0][0].sqrt()]];
    }
    // Jacobi with accumulated rotations
    let mut a = m.clone();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    // sqrt = V diag(sqrt(lambda)) V^T
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out[i][j] += v[i][k] * a[k][k].max(0.0).sqrt() * v[j][k];
            }
        }
    }
    out
}

/// Cholesky factor R (upper triangular) with G = R^T R; None if not SPD.
pub fn cholesky_upper(g: &Mat) -> Option<Mat> {
    let n = g.len();
    let mut r = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut d = g[i][i];
        for k in 0..i {
            d -= r[k][i] * r[k][i];
        }
        if d <= 0.0 {
            return None;
        }
        r[i][i] = d.sqrt();
        for j in i + 1..n {
            let mut s = g[i][j];
            for k in 0..i {
                s -= r[k][i] * r[k][j];
            }
            r[i][j] = s / r[i][i];
        }
    }
    Some(r)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
