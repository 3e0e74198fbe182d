//! Linear maps on M_n(ℂ) stored as n²×n² action matrices in the row-major
//! matrix-unit basis: column `i*n + j` of the action is `vec(φ(e_ij))`.

use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::linalg::{
    self, c, hermitian_defect, hermitian_eig_desc, kron, matrix_unit, psd_check, r,
    unvec_rows, vec_rows, CMatrix, PsdCheck,
};

/// Unitarity tolerance for conjugating matrices.
pub const UNITARY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    n: usize,
    action: CMatrix,
}

impl Superoperator {
    pub fn new(n: usize, action: CMatrix) -> Result<Self> {
        if action.shape() != (n * n, n * n) {
            return Err(Error::DimensionMismatch(format!(
                "action for n={n} must be {0}x{0}, got {1}x{2}",
                n * n,
                action.nrows(),
                action.ncols()
            )));
        }
        Ok(Superoperator { n, action })
    }

    pub(crate) fn from_action(n: usize, action: CMatrix) -> Self {
        debug_assert_eq!(action.shape(), (n * n, n * n));
        Superoperator { n, action }
    }

    /// Builds the map by evaluating `f` on every matrix unit.
    pub fn from_fn<F: Fn(&CMatrix) -> CMatrix>(n: usize, f: F) -> Self {
        let mut action = CMatrix::zeros(n * n, n * n);
        for i in 0..n {
            for j in 0..n {
                let img = f(&matrix_unit(n, n, i, j));
                action.set_column(i * n + j, &vec_rows(&img));
            }
        }
        Superoperator { n, action }
    }

    pub fn identity(n: usize) -> Self {
        Superoperator { n, action: CMatrix::identity(n * n, n * n) }
    }

    pub fn zero(n: usize) -> Self {
        Superoperator { n, action: CMatrix::zeros(n * n, n * n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn action(&self) -> &CMatrix {
        &self.action
    }

    pub fn into_action(self) -> CMatrix {
        self.action
    }

    pub fn apply(&self, a: &CMatrix) -> Result<CMatrix> {
        if a.shape() != (self.n, self.n) {
            return Err(Error::DimensionMismatch(format!(
                "map acts on {0}x{0} matrices, got {1}x{2}",
                self.n,
                a.nrows(),
                a.ncols()
            )));
        }
        Ok(self.eval(a))
    }

    pub(crate) fn eval(&self, a: &CMatrix) -> CMatrix {
        let v = &self.action * vec_rows(a);
        unvec_rows(v.as_slice(), self.n, self.n)
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Superoperator) -> Superoperator {
        assert_eq!(self.n, other.n, "composition of maps on different algebras");
        Superoperator { n: self.n, action: &self.action * &other.action }
    }

    pub fn add(&self, other: &Superoperator) -> Superoperator {
        assert_eq!(self.n, other.n);
        Superoperator { n: self.n, action: &self.action + &other.action }
    }

    pub fn sub(&self, other: &Superoperator) -> Superoperator {
        assert_eq!(self.n, other.n);
        Superoperator { n: self.n, action: &self.action - &other.action }
    }

    pub fn scale(&self, s: f64) -> Superoperator {
        Superoperator { n: self.n, action: &self.action * r(s) }
    }

    /// Frobenius distance between action matrices.
    pub fn distance(&self, other: &Superoperator) -> f64 {
        if self.n != other.n {
            return f64::INFINITY;
        }
        (&self.action - &other.action).norm()
    }

    pub fn norm(&self) -> f64 {
        self.action.norm()
    }

    pub fn rank(&self, rank_tol: f64) -> usize {
        linalg::numerical_rank(&self.action, rank_tol)
    }

    /// ‖φ(I) − I‖_F.
    pub fn unital_defect(&self) -> f64 {
        (self.eval(&linalg::identity(self.n)) - linalg::identity(self.n)).norm()
    }

    /// ‖φ∘φ − φ‖_F.
    pub fn idempotency_defect(&self) -> f64 {
        (&self.action * &self.action - &self.action).norm()
    }

    /// Maps A ↦ ρ(A)·I with ρ(A) = tr(D A) for a density D.
    pub fn state_map(density: &CMatrix) -> Result<Self> {
        if !density.is_square() {
            return Err(Error::DimensionMismatch("density must be square".into()));
        }
        let n = density.nrows();
        let d = density.clone();
        Ok(Superoperator::from_fn(n, move |a| linalg::identity(n) * (&d * a).trace()))
    }

    /// The normalized trace state map A ↦ (tr A / n)·I.
    pub fn trace_state_map(n: usize) -> Self {
        Superoperator::from_fn(n, |a| linalg::identity(n) * (a.trace() / r(n as f64)))
    }

    /// Transposition A ↦ Aᵀ (positive, not completely positive).
    pub fn transpose_map(n: usize) -> Self {
        Superoperator::from_fn(n, |a| a.transpose())
    }
}

/// A linear map M_{in_rows×in_cols} → M_{out_rows×out_cols}.
#[derive(Debug, Clone, PartialEq)]
pub struct RectangularMap {
    pub in_rows: usize,
    pub in_cols: usize,
    pub out_rows: usize,
    pub out_cols: usize,
    action: CMatrix,
}

impl RectangularMap {
    pub fn new(
        in_shape: (usize, usize),
        out_shape: (usize, usize),
        action: CMatrix,
    ) -> Result<Self> {
        let expected = (out_shape.0 * out_shape.1, in_shape.0 * in_shape.1);
        if action.shape() != expected {
            return Err(Error::DimensionMismatch(format!(
                "rectangular action must be {}x{}, got {}x{}",
                expected.0,
                expected.1,
                action.nrows(),
                action.ncols()
            )));
        }
        Ok(RectangularMap {
            in_rows: in_shape.0,
            in_cols: in_shape.1,
            out_rows: out_shape.0,
            out_cols: out_shape.1,
            action,
        })
    }

    pub fn from_fn<F: Fn(&CMatrix) -> CMatrix>(
        in_shape: (usize, usize),
        out_shape: (usize, usize),
        f: F,
    ) -> Self {
        let (ir, ic) = in_shape;
        let mut action = CMatrix::zeros(out_shape.0 * out_shape.1, ir * ic);
        for i in 0..ir {
            for j in 0..ic {
                let img = f(&matrix_unit(ir, ic, i, j));
                assert_eq!(img.shape(), out_shape, "rectangular map output shape");
                action.set_column(i * ic + j, &vec_rows(&img));
            }
        }
        RectangularMap { in_rows: ir, in_cols: ic, out_rows: out_shape.0, out_cols: out_shape.1, action }
    }

    pub fn identity(rows: usize, cols: usize) -> Self {
        RectangularMap::from_fn((rows, cols), (rows, cols), |b| b.clone())
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        RectangularMap {
            in_rows: rows,
            in_cols: cols,
            out_rows: rows,
            out_cols: cols,
            action: CMatrix::zeros(rows * cols, rows * cols),
        }
    }

    pub fn action(&self) -> &CMatrix {
        &self.action
    }

    pub fn apply(&self, b: &CMatrix) -> Result<CMatrix> {
        if b.shape() != (self.in_rows, self.in_cols) {
            return Err(Error::DimensionMismatch(format!(
                "map acts on {}x{} matrices, got {}x{}",
                self.in_rows,
                self.in_cols,
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(self.eval(b))
    }

    pub(crate) fn eval(&self, b: &CMatrix) -> CMatrix {
        let v = &self.action * vec_rows(b);
        unvec_rows(v.as_slice(), self.out_rows, self.out_cols)
    }

    pub fn compose(&self, other: &RectangularMap) -> Result<RectangularMap> {
        if (other.out_rows, other.out_cols) != (self.in_rows, self.in_cols) {
            return Err(Error::DimensionMismatch("composition of incompatible maps".into()));
        }
        Ok(RectangularMap {
            in_rows: other.in_rows,
            in_cols: other.in_cols,
            out_rows: self.out_rows,
            out_cols: self.out_cols,
            action: &self.action * &other.action,
        })
    }

    pub fn distance(&self, other: &RectangularMap) -> f64 {
        if self.action.shape() != other.action.shape() {
            return f64::INFINITY;
        }
        (&self.action - &other.action).norm()
    }

    pub fn norm(&self) -> f64 {
        self.action.norm()
    }

    pub fn rank(&self, rank_tol: f64) -> usize {
        linalg::numerical_rank(&self.action, rank_tol)
    }
}

/// The block matrix [φ(e_ij)].
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiMatrix {
    pub n: usize,
    pub blocks: CMatrix,
}

impl ChoiMatrix {
    pub fn block(&self, i: usize, j: usize) -> CMatrix {
        self.blocks.view((i * self.n, j * self.n), (self.n, self.n)).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpCheck {
    pub completely_positive: bool,
    pub min_eigenvalue: f64,
    /// Floor applied, `eig_floor·(1+‖C‖)`.
    pub floor: f64,
    pub hermiticity_defect: f64,
}

pub fn superop_from_kraus(n: usize, kraus: &[CMatrix]) -> Result<Superoperator> {
    let mut action = CMatrix::zeros(n * n, n * n);
    for (idx, s) in kraus.iter().enumerate() {
        if s.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "Kraus element {idx} is {}x{}, expected {n}x{n}",
                s.nrows(),
                s.ncols()
            )));
        }
        // vec(S A S*) = (S ⊗ S̄) vec(A)
        action += kron(s, &s.map(|z| z.conj()));
    }
    Ok(Superoperator::from_action(n, action))
}

pub fn apply(phi: &Superoperator, a: &CMatrix) -> Result<CMatrix> {
    phi.apply(a)
}

pub fn choi_matrix(phi: &Superoperator) -> ChoiMatrix {
    let n = phi.n;
    let mut blocks = CMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            let col = phi.action.column(i * n + j);
            for k in 0..n {
                for l in 0..n {
                    blocks[(i * n + k, j * n + l)] = col[k * n + l];
                }
            }
        }
    }
    ChoiMatrix { n, blocks }
}

fn hermiticity_tolerance(choi: &CMatrix, cfg: &ToleranceConfig) -> f64 {
    cfg.rank_tol * (1.0 + choi.norm())
}

pub fn is_completely_positive(phi: &Superoperator, cfg: &ToleranceConfig) -> Result<CpCheck> {
    let choi = choi_matrix(phi).blocks;
    let defect = hermitian_defect(&choi);
    if defect > hermiticity_tolerance(&choi, cfg) {
        return Err(Error::NotHermiticityPreserving(defect));
    }
    let p = psd_check(&choi, cfg.eig_floor);
    Ok(CpCheck {
        completely_positive: p.psd,
        min_eigenvalue: p.min_eigenvalue,
        floor: p.floor,
        hermiticity_defect: defect,
    })
}

/// PSD margin of the Choi matrix for sampling; a Choi matrix that is not
/// Hermitian is reported as a violation of size equal to its defect.
pub(crate) fn cp_margin(phi: &Superoperator, cfg: &ToleranceConfig) -> PsdCheck {
    let choi = choi_matrix(phi).blocks;
    let defect = hermitian_defect(&choi);
    let mut p = psd_check(&choi, cfg.eig_floor);
    if defect > hermiticity_tolerance(&choi, cfg) {
        p.min_eigenvalue = p.min_eigenvalue.min(-defect);
        p.psd = false;
    }
    p
}

pub fn kraus_decomposition(phi: &Superoperator, cfg: &ToleranceConfig) -> Result<Vec<CMatrix>> {
    let check = is_completely_positive(phi, cfg)?;
    if !check.completely_positive {
        return Err(Error::NotCompletelyPositive(check.min_eigenvalue));
    }
    let n = phi.n;
    let choi = choi_matrix(phi).blocks;
    let (vals, vecs) = hermitian_eig_desc(&choi);
    let norm = vals.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let cut = cfg.eig_floor * (1.0 + norm);
    let mut out = Vec::new();
    for (k, &mu) in vals.iter().enumerate() {
        if mu <= cut {
            break;
        }
        let w = vecs.column(k);
        let scale = mu.sqrt();
        // w[i*n + k] = S[k, i]
        let s = CMatrix::from_fn(n, n, |row, col| w[col * n + row] * r(scale));
        out.push(s);
    }
    Ok(out)
}

pub fn schur_map(mask: &CMatrix) -> Result<Superoperator> {
    if !mask.is_square() {
        return Err(Error::DimensionMismatch("Schur mask must be square".into()));
    }
    let n = mask.nrows();
    let mut action = CMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            action[(i * n + j, i * n + j)] = mask[(i, j)];
        }
    }
    Ok(Superoperator::from_action(n, action))
}

/// Recovers the mask when φ(e_ij) ∝ e_ij for all i, j.
pub fn is_schur_map(phi: &Superoperator, cfg: &ToleranceConfig) -> Option<CMatrix> {
    let n = phi.n;
    let scale = phi.action.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tol = cfg.identity_tol() * (1.0 + scale);
    for col in 0..n * n {
        for row in 0..n * n {
            if row != col && phi.action[(row, col)].norm() > tol {
                return None;
            }
        }
    }
    Some(CMatrix::from_fn(n, n, |i, j| phi.action[(i * n + j, i * n + j)]))
}

/// φ_U(A) = U*·φ(U A U*)·U.
pub fn conjugate_map(phi: &Superoperator, u: &CMatrix) -> Result<Superoperator> {
    if u.shape() != (phi.n, phi.n) {
        return Err(Error::DimensionMismatch(format!(
            "conjugating unitary must be {0}x{0}",
            phi.n
        )));
    }
    linalg::check_unitary(u, UNITARY_TOL * (1.0 + phi.n as f64))?;
    let ubar = u.map(|z| z.conj());
    let outer = kron(&u.adjoint(), &u.transpose());
    let inner = kron(u, &ubar);
    Ok(Superoperator::from_action(phi.n, outer * &phi.action * inner))
}

/// γ*(C) = (γ(C*))*.
pub fn adjoint_corner(gamma: &RectangularMap) -> RectangularMap {
    RectangularMap::from_fn((gamma.in_cols, gamma.in_rows), (gamma.out_cols, gamma.out_rows), |cm| {
        gamma.eval(&cm.adjoint()).adjoint()
    })
}

/// Υ on M_{n+k}: φ on the top-left block, γ top-right, γ* bottom-left, ψ bottom-right.
pub fn assemble_block_map(
    phi: &Superoperator,
    gamma: &RectangularMap,
    psi: &Superoperator,
) -> Result<Superoperator> {
    let (n, k) = (phi.n, psi.n);
    if (gamma.in_rows, gamma.in_cols, gamma.out_rows, gamma.out_cols) != (n, k, n, k) {
        return Err(Error::DimensionMismatch(format!(
            "corner must map {n}x{k} to {n}x{k}, got {}x{} -> {}x{}",
            gamma.in_rows, gamma.in_cols, gamma.out_rows, gamma.out_cols
        )));
    }
    let gamma_star = adjoint_corner(gamma);
    let m = n + k;
    Ok(Superoperator::from_fn(m, |x| {
        let a = x.view((0, 0), (n, n)).into_owned();
        let b = x.view((0, n), (n, k)).into_owned();
        let cm = x.view((n, 0), (k, n)).into_owned();
        let d = x.view((n, n), (k, k)).into_owned();
        let mut out = CMatrix::zeros(m, m);
        out.view_mut((0, 0), (n, n)).copy_from(&phi.eval(&a));
        out.view_mut((0, n), (n, k)).copy_from(&gamma.eval(&b));
        out.view_mut((n, 0), (k, n)).copy_from(&gamma_star.eval(&cm));
        out.view_mut((n, n), (k, k)).copy_from(&psi.eval(&d));
        out
    }))
}

/// Compressions of a map on M_{n+k} to its diagonal blocks and top-right corner.
pub fn extract_blocks(
    upsilon: &Superoperator,
    n: usize,
) -> Result<(Superoperator, RectangularMap, Superoperator)> {
    let m = upsilon.n;
    if n == 0 || n >= m {
        return Err(Error::DimensionMismatch(format!("cannot split M_{m} at {n}")));
    }
    let k = m - n;
    let embed = |block: &CMatrix, row: usize, col: usize| {
        let mut x = CMatrix::zeros(m, m);
        x.view_mut((row, col), block.shape()).copy_from(block);
        x
    };
    let phi = Superoperator::from_fn(n, |a| {
        upsilon.eval(&embed(a, 0, 0)).view((0, 0), (n, n)).into_owned()
    });
    let psi = Superoperator::from_fn(k, |d| {
        upsilon.eval(&embed(d, n, n)).view((n, n), (k, k)).into_owned()
    });
    let gamma = RectangularMap::from_fn((n, k), (n, k), |b| {
        upsilon.eval(&embed(b, 0, n)).view((0, n), (n, k)).into_owned()
    });
    Ok((phi, gamma, psi))
}

/// Applies `id_m ⊗ φ` to a block matrix in M_m(M_n): each n×n block is mapped by φ.
pub fn apply_blockwise(phi: &Superoperator, x: &CMatrix) -> CMatrix {
    let n = phi.n;
    let m = x.nrows() / n;
    let mut out = CMatrix::zeros(m * n, m * n);
    for a in 0..m {
        for b in 0..m {
            let blk = x.view((a * n, b * n), (n, n)).into_owned();
            out.view_mut((a * n, b * n), (n, n)).copy_from(&phi.eval(&blk));
        }
    }
    out
}

/// Hermitian part of a map: A ↦ (φ(A) + φ(A*)*)/2.
pub fn hermitian_part(phi: &Superoperator) -> Superoperator {
    Superoperator::from_fn(phi.n, |a| {
        let x = phi.eval(a);
        let y = phi.eval(&a.adjoint()).adjoint();
        (x + y) * c(0.5, 0.0)
    })
}
