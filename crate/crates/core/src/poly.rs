//! Real polynomials stored as descending coefficient vectors.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub const PRUNE_TOL: f64 = 1e-12;

/// Drops near-zero leading coefficients (relative to the largest one).
pub fn trim(p: &[f64]) -> Vec<f64> {
    let scale = p.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return vec![0.0];
    }
    let first = p.iter().position(|c| c.abs() > PRUNE_TOL * scale).unwrap_or(p.len() - 1);
    p[first..].to_vec()
}

pub fn degree(p: &[f64]) -> usize {
    trim(p).len() - 1
}

pub fn is_zero(p: &[f64]) -> bool {
    p.iter().all(|c| *c == 0.0)
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (i, x) in a.iter().enumerate() {
        out[n - a.len() + i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[n - b.len() + i] += y;
    }
    out
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    add(a, &scale(b, -1.0))
}

pub fn scale(p: &[f64], k: f64) -> Vec<f64> {
    p.iter().map(|c| c * k).collect()
}

/// Left-pads with zeros to length `n`.
pub fn pad(p: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n.saturating_sub(p.len())];
    out.extend_from_slice(p);
    out
}

pub fn eval(p: &[f64], x: f64) -> f64 {
    p.iter().fold(0.0, |acc, c| acc * x + c)
}

pub fn eval_c(p: &[f64], x: Complex64) -> Complex64 {
    p.iter().fold(Complex64::new(0.0, 0.0), |acc, c| acc * x + c)
}

/// Roots via companion-matrix eigenvalues. Exact zero roots are split off first.
pub fn roots(p: &[f64]) -> Vec<Complex64> {
    let p = trim(p);
    let mut zeros = 0;
    let mut end = p.len();
    while end > 1 && p[end - 1] == 0.0 {
        zeros += 1;
        end -= 1;
    }
    let q = &p[..end];
    let n = q.len() - 1;
    let mut out = vec![Complex64::new(0.0, 0.0); zeros];
    if n == 0 {
        return out;
    }
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        comp[(0, j)] = -q[j + 1] / q[0];
    }
    for i in 1..n {
        comp[(i, i - 1)] = 1.0;
    }
    out.extend(comp.complex_eigenvalues().iter().copied());
    out
}

/// Monic polynomial with the given roots; imaginary residue is discarded.
pub fn from_roots(rs: &[Complex64]) -> Vec<f64> {
    let mut acc = vec![Complex64::new(1.0, 0.0)];
    for r in rs {
        let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
        for (i, c) in acc.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        acc = next;
    }
    acc.iter().map(|c| c.re).collect()
}

/// Characteristic polynomial det(xI - A) from the eigenvalues of A.
pub fn charpoly(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return vec![1.0];
    }
    from_roots(a.complex_eigenvalues().as_slice())
}
