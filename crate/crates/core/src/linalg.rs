//! Small dense linear-algebra helpers.

use nalgebra::SymmetricEigen;
use rand_distr::{Distribution, StandardNormal};

use crate::operator::{Matrix, Point};
use crate::rng::Rng;

pub fn gaussian_vec(d: usize, rng: &mut Rng) -> Point {
    Point::from_fn(d, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_mat(r: usize, c: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// Haar-distributed orthogonal matrix from the QR factorisation of a
/// Gaussian matrix, with the signs of diag(R) folded into Q.
pub fn random_orthogonal(d: usize, rng: &mut Rng) -> Matrix {
    let qr = gaussian_mat(d, d, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Largest singular value by power iteration on MᵀM.
pub fn spectral_norm_power(m: &Matrix, tol: f64, max_iter: usize) -> f64 {
    let n = m.ncols();
    if n == 0 {
        return 0.0;
    }
    let mtm = m.transpose() * m;
    let mut v = Point::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
    v /= v.norm();
    let mut lam = 0.0;
    for _ in 0..max_iter {
        let w = &mtm * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / nw;
        if (next - lam).abs() <= tol * next.abs().max(1e-300) {
            lam = next;
            break;
        }
        lam = next;
    }
    lam.max(0.0).sqrt()
}

/// Smallest eigenvalue of (M + Mᵀ)/2.
pub fn sym_min_eig(m: &Matrix) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(s).eigenvalues.min()
}

/// Symmetric matrix Q diag(λ) Qᵀ.
pub fn from_spectrum(q: &Matrix, lam: &[f64]) -> Matrix {
    let d = Matrix::from_diagonal(&Point::from_column_slice(lam));
    let m = q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}
