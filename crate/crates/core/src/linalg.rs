//! Dense complex linear algebra helpers shared by every module.
//!
//! Vectorization is row-major: `vec(A)[i*cols + j] = A[(i, j)]`, so that
//! `vec(X A Y) = (X ⊗ Yᵀ) vec(A)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use ndarray_linalg::{EigVals, SVD};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn r(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

pub fn matrix_unit(rows: usize, cols: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols);
    m[(i, j)] = ONE;
    m
}

/// Builds a matrix from real row-major entries.
pub fn real_matrix(rows: usize, cols: usize, entries: &[f64]) -> CMatrix {
    assert_eq!(entries.len(), rows * cols);
    CMatrix::from_row_iterator(rows, cols, entries.iter().map(|&x| r(x)))
}

pub fn diag_real(d: &[f64]) -> CMatrix {
    let mut m = CMatrix::zeros(d.len(), d.len());
    for (k, &x) in d.iter().enumerate() {
        m[(k, k)] = r(x);
    }
    m
}

pub fn vec_rows(a: &CMatrix) -> CVector {
    let (rows, cols) = a.shape();
    CVector::from_fn(rows * cols, |k, _| a[(k / cols, k % cols)])
}

pub fn unvec_rows(v: &[Complex64], rows: usize, cols: usize) -> CMatrix {
    assert_eq!(v.len(), rows * cols);
    CMatrix::from_row_slice(rows, cols, v)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn block_diag(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (n, k) = (a.nrows(), b.nrows());
    let mut m = CMatrix::zeros(n + k, n + k);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((n, n), (k, k)).copy_from(b);
    m
}

/// Permutation matrix P with `P e_j = e_{perm[j]}`.
pub fn permutation(perm: &[usize]) -> CMatrix {
    let n = perm.len();
    let mut p = CMatrix::zeros(n, n);
    for (j, &i) in perm.iter().enumerate() {
        p[(i, j)] = ONE;
    }
    p
}

pub fn hermitian_defect(a: &CMatrix) -> f64 {
    (a - a.adjoint()).norm()
}

pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * r(0.5)
}

pub fn unitary_defect(u: &CMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    (u.adjoint() * u - identity(u.nrows())).norm()
}

pub fn check_unitary(u: &CMatrix, tol: f64) -> Result<()> {
    let d = unitary_defect(u);
    if d > tol {
        return Err(Error::NotUnitary(d));
    }
    Ok(())
}

/// Rotates `v` so that its first component of non-negligible modulus is real and positive.
pub fn normalize_phase(v: &mut CVector) {
    let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return;
    }
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-8 * scale).copied() {
        let phase = z.conj() / z.norm();
        for x in v.iter_mut() {
            *x *= phase;
        }
    }
}

/// Eigen-decomposition of the Hermitian part of `a`, eigenvalues in decreasing
/// order, eigenvectors (columns) phase-normalized.
pub fn hermitian_eig_desc(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(hermitize(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &k) in order.iter().enumerate() {
        let mut col: CVector = eig.eigenvectors.column(k).into_owned();
        normalize_phase(&mut col);
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(hermitize(a)).eigenvalues.iter().copied().collect();
    v.sort_by(|x, y| y.total_cmp(x));
    v
}

/// Result of a PSD test under the relative floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdCheck {
    pub psd: bool,
    pub min_eigenvalue: f64,
    /// Spectral norm of the hermitized matrix.
    pub norm: f64,
    /// The threshold actually applied, `eig_floor·(1+norm)`.
    pub floor: f64,
}

pub fn psd_check(a: &CMatrix, eig_floor: f64) -> PsdCheck {
    let eigs = hermitian_eigenvalues(a);
    let min = eigs.last().copied().unwrap_or(0.0);
    let norm = eigs.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let floor = eig_floor * (1.0 + norm);
    PsdCheck { psd: min >= -floor, min_eigenvalue: min, norm, floor }
}

pub fn singular_values(a: &CMatrix) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    match to_nd(a).svd(false, false) {
        Ok((_, s, _)) => s.to_vec(),
        Err(_) => Vec::new(),
    }
}

pub fn spectral_norm(a: &CMatrix) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

pub fn condition_number(a: &CMatrix) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Count of singular values above `rel_tol·σ_max`.
pub fn numerical_rank(a: &CMatrix, rel_tol: f64) -> usize {
    let s = singular_values(a);
    let Some(&top) = s.first() else { return 0 };
    if top <= f64::MIN_POSITIVE {
        return 0;
    }
    s.iter().filter(|&&x| x > rel_tol * top).count()
}

// SVD and general eigenvalues go through LAPACK: nalgebra's complex SVD
// loses accuracy and its Schur iteration can stall on conjugated idempotents.
fn to_nd(a: &CMatrix) -> Array2<Complex64> {
    Array2::from_shape_fn((a.nrows(), a.ncols()), |(i, j)| a[(i, j)])
}

fn from_nd(a: ArrayView2<Complex64>) -> CMatrix {
    CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

struct FullSvd {
    /// m×m
    u: CMatrix,
    /// n×n, columns are right singular vectors
    v: CMatrix,
    /// min(m, n) values, decreasing
    sigma: Vec<f64>,
}

fn full_svd(a: &CMatrix) -> Option<FullSvd> {
    let (u, s, vt) = to_nd(a).svd(true, true).ok()?;
    Some(FullSvd { u: from_nd(u?.view()), v: from_nd(vt?.view()).adjoint(), sigma: s.to_vec() })
}

fn rank_from_sigma(sigma: &[f64], rel_tol: f64) -> usize {
    let top = sigma.first().copied().unwrap_or(0.0);
    if top <= f64::MIN_POSITIVE {
        return 0;
    }
    sigma.iter().filter(|&&x| x > rel_tol * top).count()
}

/// Orthonormal basis (columns) of the kernel of `a`.
pub fn null_space(a: &CMatrix, rel_tol: f64) -> CMatrix {
    let n = a.ncols();
    if a.nrows() == 0 {
        return CMatrix::identity(n, n);
    }
    let Some(svd) = full_svd(a) else { return CMatrix::zeros(n, 0) };
    let rank = rank_from_sigma(&svd.sigma, rel_tol).min(n);
    svd.v.columns(rank, n - rank).into_owned()
}

/// Orthonormal basis (columns) of the column space of `a`.
pub fn range_basis(a: &CMatrix, rel_tol: f64) -> CMatrix {
    let m = a.nrows();
    if a.ncols() == 0 {
        return CMatrix::zeros(m, 0);
    }
    let Some(svd) = full_svd(a) else { return CMatrix::zeros(m, 0) };
    let rank = rank_from_sigma(&svd.sigma, rel_tol).min(m);
    svd.u.columns(0, rank).into_owned()
}

/// Eigenvalues of a square matrix (LAPACK geev); empty if it fails.
pub fn eigenvalues(a: &CMatrix) -> Vec<Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    to_nd(a).eigvals().map(|ev| ev.to_vec()).unwrap_or_default()
}

/// Orthogonal projector onto the span of orthonormal columns.
pub fn projector(basis: &CMatrix) -> CMatrix {
    basis * basis.adjoint()
}

/// Unitary whose first column is `v / ‖v‖`; remaining columns come from
/// Gram–Schmidt over the standard basis.
pub fn complete_to_unitary(v: &CVector) -> CMatrix {
    let n = v.len();
    let mut cols: Vec<CVector> = vec![v / r(v.norm())];
    let mut candidates: Vec<usize> = (0..n).collect();
    // least overlap with v first, for stability
    candidates.sort_by(|&a, &b| v[a].norm().total_cmp(&v[b].norm()));
    for k in candidates {
        if cols.len() == n {
            break;
        }
        let mut e = CVector::zeros(n);
        e[k] = ONE;
        for q in &cols {
            let proj = q.dotc(&e);
            e -= q * proj;
        }
        let norm = e.norm();
        if norm > 1e-6 {
            cols.push(e / r(norm));
        }
    }
    let mut u = CMatrix::from_columns(&cols);
    // one extra pass to restore orthogonality to working precision
    for j in 1..n {
        let mut col: CVector = u.column(j).into_owned();
        for i in 0..j {
            let q: CVector = u.column(i).into_owned();
            let proj = q.dotc(&col);
            col -= q * proj;
        }
        let norm = col.norm();
        u.set_column(j, &(col / r(norm)));
    }
    u
}

pub fn random_gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

/// Haar-distributed unitary via QR of a complex Gaussian matrix with phase fix.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let g = random_gaussian_matrix(rng, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let rr = qr.r();
    for j in 0..n {
        let d = rr[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Random full-rank density matrix (trace one).
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let g = random_gaussian_matrix(rng, n, n);
    let p = &g * g.adjoint();
    let tr = p.trace();
    hermitize(&(p / tr))
}

pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let g = random_gaussian_matrix(rng, n, n);
    hermitize(&g)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vec_identity_row_major() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_gaussian_matrix(&mut rng, 2, 3);
        let a = random_gaussian_matrix(&mut rng, 3, 4);
        let y = random_gaussian_matrix(&mut rng, 4, 2);
        let lhs = vec_rows(&(&x * &a * &y));
        let rhs = kron(&x, &y.transpose()) * vec_rows(&a);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let a = real_matrix(1, 3, &[1.0, 1.0, 0.0]);
        let k = null_space(&a, 1e-10);
        assert_eq!(k.ncols(), 2);
        assert!((&a * &k).norm() < 1e-12);
        assert!((k.adjoint() * &k - identity(2)).norm() < 1e-12);
    }

    #[test]
    fn range_and_rank_agree() {
        let a = real_matrix(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 0.0]);
        assert_eq!(numerical_rank(&a, 1e-10), 2);
        let b = range_basis(&a, 1e-10);
        assert_eq!(b.ncols(), 2);
        let p = projector(&b);
        assert!((&p * &a - &a).norm() < 1e-10);
    }

    #[test]
    fn completion_is_unitary() {
        let v = CVector::from_vec(vec![c(0.0, 1.0), r(1.0), c(2.0, -1.0)]);
        let u = complete_to_unitary(&v);
        assert!(unitary_defect(&u) < 1e-12);
        let first: CVector = u.column(0).into_owned();
        assert!((first - &v / r(v.norm())).norm() < 1e-12);
    }

    #[test]
    fn haar_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..5 {
            assert!(unitary_defect(&haar_unitary(&mut rng, n)) < 1e-12);
        }
    }

    #[test]
    fn eig_desc_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_hermitian(&mut rng, 4);
        let (vals, vecs) = hermitian_eig_desc(&h);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let d = diag_real(&vals);
        assert!((&vecs * d * vecs.adjoint() - h).norm() < 1e-10);
    }

    fn conjugated_idempotents(count: u64) -> Vec<CMatrix> {
        use crate::classify::Family;
        (0..count)
            .map(|seed| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let f = Family::E3[(seed % 8) as usize];
                crate::random::sample_form(&mut rng, f).unwrap().map.action().clone()
            })
            .collect()
    }

    #[test]
    fn svd_bases_on_conjugated_idempotents() {
        for a in conjugated_idempotents(300) {
            let range = range_basis(&a, 1e-8);
            let kernel = null_space(&a, 1e-8);
            assert_eq!(range.ncols() + kernel.ncols(), 9);
            let outside = (CMatrix::identity(9, 9) - projector(&range)) * &a;
            assert!(outside.norm() < 1e-12);
            assert!((&a * &kernel).norm() < 1e-12);
            assert!((kernel.adjoint() * &kernel - CMatrix::identity(kernel.ncols(), kernel.ncols())).norm() < 1e-12);
            let energy: f64 = singular_values(&a).iter().map(|x| x * x).sum();
            assert!((energy - a.norm_squared()).abs() < 1e-10);
        }
    }

    #[test]
    fn eigenvalues_of_idempotents_are_zero_or_one() {
        for a in conjugated_idempotents(300) {
            let ev = eigenvalues(&a);
            assert_eq!(ev.len(), 9);
            assert!(ev.iter().all(|z| z.norm() < 1e-8 || (z - ONE).norm() < 1e-8));
        }
    }

    #[test]
    fn eigenvalues_of_triangular() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut t = random_gaussian_matrix(&mut rng, 4, 4);
        let diag = [c(2.0, 1.0), c(-1.0, 0.0), c(0.5, -0.5), c(0.0, 3.0)];
        for i in 0..4 {
            for j in 0..i {
                t[(i, j)] = ZERO;
            }
            t[(i, i)] = diag[i];
        }
        let mut ev = eigenvalues(&t);
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        let mut want = diag.to_vec();
        want.sort_by(|a, b| a.re.total_cmp(&b.re));
        for (x, y) in ev.iter().zip(&want) {
            assert!((x - y).norm() < 1e-10);
        }
    }
}
