//! Dense helpers for stochastic matrices stored as `Vec<Vec<f64>>`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Matrix = Vec<Vec<f64>>;

const ROW_TOL: f64 = 1e-12;

pub fn check_distribution(p: &[f64], field: &str) -> Result<()> {
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::config(field, "entries must be finite and nonnegative"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > ROW_TOL {
        return Err(Error::config(field, format!("entries sum to {s}, expected 1")));
    }
    Ok(())
}

pub fn check_stochastic(m: &Matrix, field: &str) -> Result<()> {
    if m.is_empty() {
        return Err(Error::config(field, "matrix is empty"));
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != m.len() {
            return Err(Error::config(field, format!("row {i} has {} entries, expected {}", row.len(), m.len())));
        }
        check_distribution(row, &format!("{field}[{i}]"))?;
    }
    Ok(())
}

pub fn cumulative(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

/// Smallest index `j` with `u < cum[j]`; falls back to the last index with positive
/// mass when rounding leaves `u` above the final cumulative value.
pub fn inverse_cdf(cum: &[f64], u: f64) -> usize {
    let j = cum.partition_point(|c| *c <= u);
    if j < cum.len() {
        return j;
    }
    let mut k = cum.len() - 1;
    while k > 0 && cum[k] == cum[k - 1] {
        k -= 1;
    }
    k
}

pub fn identity(n: usize) -> Matrix {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

pub fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for l in 0..k {
            let a_il = a[i][l];
            if a_il == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i][j] += a_il * b[l][j];
            }
        }
    }
    out
}

pub fn mat_pow(a: &Matrix, mut e: usize) -> Matrix {
    let mut result = identity(a.len());
    let mut base = a.clone();
    while e > 0 {
        if e & 1 == 1 {
            result = mat_mul(&result, &base);
        }
        base = mat_mul(&base, &base);
        e >>= 1;
    }
    result
}

/// Row vector times matrix.
pub fn vec_mat(v: &[f64], m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m[0].len()];
    for (i, vi) in v.iter().enumerate() {
        if *vi == 0.0 {
            continue;
        }
        for (o, mij) in out.iter_mut().zip(&m[i]) {
            *o += vi * mij;
        }
    }
    out
}

/// Stationary law of an irreducible stochastic matrix, by solving `pi (P - I) = 0`,
/// `sum pi = 1` in least squares. Reducible chains get one of their stationary laws.
pub fn stationary_distribution(p: &Matrix) -> Vec<f64> {
    let n = p.len();
    let mut a = DMatrix::<f64>::zeros(n + 1, n);
    for i in 0..n {
        for j in 0..n {
            a[(j, i)] = p[i][j] - if i == j { 1.0 } else { 0.0 };
        }
        a[(n, i)] = 1.0;
    }
    let mut b = nalgebra::DVector::<f64>::zeros(n + 1);
    b[n] = 1.0;
    let ata = a.transpose() * &a;
    let atb = a.transpose() * b;
    let sol = ata.clone().lu().solve(&atb);
    let mut pi: Vec<f64> = match sol {
        Some(s) if s.iter().all(|x| x.is_finite()) => s.iter().map(|x| x.max(0.0)).collect(),
        _ => {
            // Singular normal equations: fall back to Cesaro averaging of powers.
            let mut v = vec![1.0 / n as f64; n];
            let mut avg = vec![0.0; n];
            for _ in 0..10_000 {
                v = vec_mat(&v, p);
                for (a, x) in avg.iter_mut().zip(&v) {
                    *a += x;
                }
            }
            avg
        }
    };
    let s: f64 = pi.iter().sum();
    for x in pi.iter_mut() {
        *x /= s;
    }
    pi
}

pub fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    let r = m.len();
    let c = if r == 0 { 0 } else { m[0].len() };
    DMatrix::from_fn(r, c, |i, j| m[i][j])
}

/// Spectral norm (largest singular value).
pub fn operator_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

/// Spectral radius (largest eigenvalue modulus).
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Parse a whitespace-separated matrix, one row per line. Blank lines and lines
/// starting with `#` are ignored.
pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        match row {
            Ok(r) => rows.push(r),
            Err(e) => return Err(Error::config(format!("matrix line {}", ln + 1), e.to_string())),
        }
    }
    if rows.is_empty() {
        return Err(Error::config("matrix", "no rows"));
    }
    Ok(rows)
}

pub fn load_matrix(path: &std::path::Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    parse_matrix(&text)
}
