//! Small dense complex linear algebra used throughout the crate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(dim: usize) -> CMat {
    CMat::identity(dim, dim)
}

pub fn zeros(dim: usize) -> CMat {
    CMat::zeros(dim, dim)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    a * b + b * a
}

pub fn dagger(a: &CMat) -> CMat {
    a.adjoint()
}

/// Largest entry modulus.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn hermiticity_defect(a: &CMat) -> f64 {
    max_abs_diff(a, &a.adjoint())
}

pub fn trace(a: &CMat) -> C64 {
    a.trace()
}

/// Re tr(A ρ); for Hermitian A and ρ this is the expectation value.
pub fn expect(a: &CMat, rho: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * rho[(k, i)];
        }
    }
    acc.re
}

pub fn expect_vec(a: &CMat, psi: &CVec) -> f64 {
    psi.dotc(&(a * psi)).re
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(h: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(h.clone());
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn eigvalsh(h: &CMat) -> Vec<f64> {
    eigh(h).0
}

/// exp(-i H t) for Hermitian H, built from its eigen-decomposition.
pub fn expm_hermitian(h: &CMat, t: f64) -> CMat {
    let (vals, vecs) = eigh(h);
    let n = h.nrows();
    let mut scaled = vecs.clone();
    for (j, &e) in vals.iter().enumerate() {
        let ph = C64::from_polar(1.0, -e * t);
        for i in 0..n {
            scaled[(i, j)] *= ph;
        }
    }
    scaled * vecs.adjoint()
}

pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> CMat {
    CMat::from_row_iterator(rows, cols, data.iter().map(|&x| c(x, 0.0)))
}

pub fn outer(a: &CVec, b: &CVec) -> CMat {
    a * b.adjoint()
}

pub fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn sub3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

pub fn cross3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn scale3(a: &[f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expm_of_pauli_x_is_rotation() {
        let sx = real_matrix(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let u = expm_hermitian(&sx, 0.3);
        let expect = CMat::from_row_slice(
            2,
            2,
            &[c(0.3f64.cos(), 0.0), c(0.0, -0.3f64.sin()), c(0.0, -0.3f64.sin()), c(0.3f64.cos(), 0.0)],
        );
        assert!(max_abs_diff(&u, &expect) < 1e-14);
    }

    #[test]
    fn eigh_sorts_ascending() {
        let m = real_matrix(3, 3, &[3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.0]);
        let v = eigvalsh(&m);
        assert_eq!(v.len(), 3);
        assert!((v[0] + 1.0).abs() < 1e-14 && (v[1] - 2.0).abs() < 1e-14 && (v[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn expm_matches_nalgebra_pade() {
        let h = CMat::from_fn(4, 4, |i, j| {
            let x = (i * 4 + j) as f64;
            c(x.sin() + (j * 4 + i) as f64, 0.0)
        });
        let h = (&h + h.adjoint()) * c(0.05, 0.0);
        let ours = expm_hermitian(&h, 1.7);
        let theirs = (h * c(0.0, -1.7)).exp();
        assert!(max_abs_diff(&ours, &theirs) < 1e-12);
    }
}
