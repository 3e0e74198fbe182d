//! Canonical forms up to unitary conjugacy: idempotent UCP maps on M₂ and M₃,
//! unital q-positive maps on M₂, and generators of invertible maps.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::limits::{self, annihilated_vector, is_idempotent_ucp, rank2_m2_map};
use crate::linalg::{self, c, r, CMatrix, CVector};
use crate::resolvent::{self, VerdictTag};
use crate::superop::{conjugate_map, schur_map, Superoperator};

/// Largest accepted ‖conjugate_map(canonical, U) − input‖/(1+‖input‖).
const VERIFY_TOL: f64 = 1e-7;
/// Tolerance for ‖Φ(xx*) − xx*‖ when looking for fixed rank-one projections.
const FIX_TOL: f64 = 1e-6;
/// Tolerance for reading z ∈ {0, 1} off a conjugated map.
const MASK_TOL: f64 = 1e-6;
/// Smallest state weight counted as faithful.
const FAITHFUL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    E2State,
    E2Diagonal,
    E2Identity,
    E3State,
    E3I,
    E3II,
    E3III,
    E3IV,
    E3V,
    E3VI,
    E3VII,
    M2Rank1,
    M2Rank2,
    M2Invertible,
}

impl Family {
    pub const ALL: [Family; 14] = [
        Family::E2State,
        Family::E2Diagonal,
        Family::E2Identity,
        Family::E3State,
        Family::E3I,
        Family::E3II,
        Family::E3III,
        Family::E3IV,
        Family::E3V,
        Family::E3VI,
        Family::E3VII,
        Family::M2Rank1,
        Family::M2Rank2,
        Family::M2Invertible,
    ];
    pub const E2: [Family; 3] = [Family::E2State, Family::E2Diagonal, Family::E2Identity];
    pub const E3: [Family; 8] = [
        Family::E3State,
        Family::E3I,
        Family::E3II,
        Family::E3III,
        Family::E3IV,
        Family::E3V,
        Family::E3VI,
        Family::E3VII,
    ];
    pub const M2: [Family; 3] = [Family::M2Rank1, Family::M2Rank2, Family::M2Invertible];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::E2State => "E2_state",
            Family::E2Diagonal => "E2_diagonal",
            Family::E2Identity => "E2_identity",
            Family::E3State => "E3_state",
            Family::E3I => "E3_I",
            Family::E3II => "E3_II",
            Family::E3III => "E3_III",
            Family::E3IV => "E3_IV",
            Family::E3V => "E3_V",
            Family::E3VI => "E3_VI",
            Family::E3VII => "E3_VII",
            Family::M2Rank1 => "M2_rank1",
            Family::M2Rank2 => "M2_rank2",
            Family::M2Invertible => "M2_invertible",
        }
    }

    /// Matrix size the family acts on.
    pub fn dim(&self) -> usize {
        if Family::E3.contains(self) {
            3
        } else {
            2
        }
    }

    /// Rank of every member of the family.
    pub fn rank(&self) -> usize {
        match self {
            Family::E2State | Family::E3State | Family::E3I | Family::M2Rank1 => 1,
            Family::E2Diagonal | Family::E3II | Family::E3VI | Family::M2Rank2 => 2,
            Family::E3IV => 3,
            Family::E2Identity | Family::E3III | Family::M2Invertible => 4,
            Family::E3V => 5,
            Family::E3VII => 9,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .iter()
            .copied()
            .find(|f| f.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::OutOfRange(format!("unknown family '{s}'")))
    }
}

/// Least-squares fit of φ⁻¹(A) − A ≈ YA + AY*.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorExtraction {
    pub y: CMatrix,
    pub residual: f64,
    /// ‖Y + Y*‖
    pub skew_defect: f64,
    /// |tr Y|
    pub trace_defect: f64,
}

impl GeneratorExtraction {
    pub fn is_qpure_canonical(&self, tol: f64) -> bool {
        self.residual <= tol && self.skew_defect <= tol && self.trace_defect <= tol
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CanonicalParams {
    pub lambda: Option<f64>,
    pub lambda_prime: Option<f64>,
    /// Weights of the state in decreasing order.
    pub weights: Option<Vec<f64>>,
    /// Density D of the state ρ(A) = tr(DA) of the input.
    pub density: Option<CMatrix>,
    /// λ_j of the q-pure Schur mask 1/(1 + i(λ_j − λ_k)), decreasing.
    pub qpure_lambdas: Option<Vec<f64>>,
    pub generator: Option<GeneratorExtraction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalForm {
    pub family: Family,
    pub params: CanonicalParams,
    /// U with conjugate_map(canonical, U) ≈ input.
    pub conjugator: CMatrix,
    pub canonical: Superoperator,
    pub round_trip_residual: f64,
}

fn state_map_from_weights(w: &[f64]) -> Superoperator {
    let n = w.len();
    Superoperator::from_fn(n, |a| {
        let v: num_complex::Complex64 = (0..n).map(|i| a[(i, i)] * r(w[i])).sum();
        linalg::identity(n) * v
    })
}

fn rho23(a: &CMatrix, lambda: f64) -> num_complex::Complex64 {
    a[(1, 1)] * r(lambda) + a[(2, 2)] * r(1.0 - lambda)
}

fn need<T: Copy>(v: Option<T>, what: &str, family: Family) -> Result<T> {
    v.ok_or_else(|| Error::OutOfRange(format!("{family} requires parameter {what}")))
}

/// The canonical representative of a family.
pub fn reconstruct(family: Family, params: &CanonicalParams) -> Result<Superoperator> {
    let lam = || need(params.lambda, "lambda", family);
    let weights = |n: usize| -> Result<Vec<f64>> {
        let w = params
            .weights
            .clone()
            .ok_or_else(|| Error::OutOfRange(format!("{family} requires weights")))?;
        if w.len() != n {
            return Err(Error::OutOfRange(format!("{family} requires {n} weights, got {}", w.len())));
        }
        Ok(w)
    };
    Ok(match family {
        Family::E2State | Family::M2Rank1 => state_map_from_weights(&weights(2)?),
        Family::E3State => state_map_from_weights(&weights(3)?),
        Family::E2Diagonal => Superoperator::from_fn(2, |a| CMatrix::from_diagonal(&a.diagonal())),
        Family::E2Identity => Superoperator::identity(2),
        Family::E3I => {
            let l = lam()?;
            Superoperator::from_fn(3, |a| linalg::identity(3) * rho23(a, l))
        }
        Family::E3II => {
            let l = lam()?;
            Superoperator::from_fn(3, |a| {
                let mut out = CMatrix::from_diagonal(&a.diagonal());
                out[(0, 0)] = rho23(a, l);
                out
            })
        }
        Family::E3III => {
            let l = lam()?;
            Superoperator::from_fn(3, |a| {
                let mut out = a.clone();
                for j in 1..3 {
                    out[(0, j)] = r(0.0);
                    out[(j, 0)] = r(0.0);
                }
                out[(0, 0)] = rho23(a, l);
                out
            })
        }
        Family::E3IV => Superoperator::from_fn(3, |a| CMatrix::from_diagonal(&a.diagonal())),
        Family::E3V => Superoperator::from_fn(3, |a| {
            let mut out = a.clone();
            for j in 1..3 {
                out[(0, j)] = r(0.0);
                out[(j, 0)] = r(0.0);
            }
            out
        }),
        Family::E3VI => {
            let l = lam()?;
            Superoperator::from_fn(3, |a| {
                let v = rho23(a, l);
                let mut out = CMatrix::zeros(3, 3);
                out[(0, 0)] = a[(0, 0)];
                out[(1, 1)] = v;
                out[(2, 2)] = v;
                out
            })
        }
        Family::E3VII => Superoperator::identity(3),
        Family::M2Rank2 => rank2_m2_map(lam()?, need(params.lambda_prime, "lambda_prime", family)?),
        Family::M2Invertible => {
            let l = params
                .qpure_lambdas
                .as_ref()
                .ok_or_else(|| Error::OutOfRange("M2_invertible reconstructs only from qpure_lambdas".into()))?;
            qpure_invertible_canonical(l)?
        }
    })
}

pub(crate) fn qpure_mask(mu: &[f64]) -> CMatrix {
    let n = mu.len();
    CMatrix::from_fn(n, n, |j, k| r(1.0) / c(1.0, mu[j] - mu[k]))
}

/// Schur map with mask 1/(1 + i(λ_j − λ_k)); requires Σλ_j = 0.
pub fn qpure_invertible_canonical(lambdas: &[f64]) -> Result<Superoperator> {
    if lambdas.is_empty() {
        return Err(Error::OutOfRange("need at least one λ".into()));
    }
    let sum: f64 = lambdas.iter().sum();
    let scale: f64 = lambdas.iter().map(|x| x.abs()).sum();
    if sum.abs() > 1e-8 * (1.0 + scale) {
        return Err(Error::OutOfRange(format!("λ must sum to 0, got sum {sum:.3e}")));
    }
    schur_map(&qpure_mask(lambdas))
}

/// Compression B ↦ G*Φ(GBG*)G to the coordinates `idx`.
fn compress(phi: &Superoperator, idx: &[usize]) -> Superoperator {
    let n = phi.n();
    let g = CMatrix::from_fn(n, idx.len(), |i, j| if i == idx[j] { r(1.0) } else { r(0.0) });
    let g_star = g.adjoint();
    Superoperator::from_fn(idx.len(), |b| &g_star * phi.eval(&(&g * b * &g_star)) * &g)
}

/// D with ρ(A) = tr(DA) for ρ(A) = Φ(A)₀₀.
fn state_density(phi: &Superoperator, idx: &[usize]) -> CMatrix {
    let n = phi.n();
    let k = idx.len();
    let mut d = CMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            d[(j, i)] = phi.eval(&linalg::matrix_unit(n, n, idx[i], idx[j]))[(0, 0)];
        }
    }
    linalg::hermitize(&d)
}

fn one_plus(w: &CMatrix) -> CMatrix {
    linalg::block_diag(&linalg::identity(1), w)
}

fn finish(
    input: &Superoperator,
    family: Family,
    params: CanonicalParams,
    canonical: Superoperator,
    w: CMatrix,
) -> Result<CanonicalForm> {
    let conjugator = w.adjoint();
    let round_trip_residual = conjugate_map(&canonical, &conjugator)?.distance(input);
    if round_trip_residual > VERIFY_TOL * (1.0 + input.norm()) {
        return Err(Error::Inconclusive {
            residual: round_trip_residual,
            reason: format!("reconstructed {family} does not reproduce the input"),
        });
    }
    Ok(CanonicalForm { family, params, conjugator, canonical, round_trip_residual })
}

fn finish_reconstructed(input: &Superoperator, family: Family, params: CanonicalParams, w: CMatrix) -> Result<CanonicalForm> {
    let canonical = reconstruct(family, &params)?;
    finish(input, family, params, canonical, w)
}

fn require_dim(phi: &Superoperator, n: usize, what: &str) -> Result<()> {
    if phi.n() != n {
        return Err(Error::DimensionMismatch(format!("{what} acts on M_{n}, got M_{}", phi.n())));
    }
    Ok(())
}

fn require_idempotent_ucp(phi: &Superoperator, cfg: &ToleranceConfig) -> Result<()> {
    if is_idempotent_ucp(phi, cfg) {
        return Ok(());
    }
    Err(Error::NotIdempotentUcp(format!(
        "unital defect {:.3e}, idempotency defect {:.3e}",
        phi.unital_defect(),
        phi.idempotency_defect()
    )))
}

/// State form ρ(A)I: weights decreasing and W with D = W diag(w) W*.
fn state_params(phi: &Superoperator) -> (CanonicalParams, CMatrix) {
    let d = state_density(phi, &(0..phi.n()).collect::<Vec<_>>());
    let (w, vecs) = linalg::hermitian_eig_desc(&d);
    let params = CanonicalParams { weights: Some(w), density: Some(d), ..Default::default() };
    (params, vecs)
}

/// Hermitian elements spanning the range of Φ.
fn hermitian_range(phi: &Superoperator, cfg: &ToleranceConfig) -> Vec<CMatrix> {
    let n = phi.n();
    let basis = linalg::range_basis(phi.action(), cfg.rank_tol);
    let mut out = Vec::new();
    for col in basis.column_iter() {
        let a = linalg::unvec_rows(col.as_slice(), n, n);
        out.push(&a + a.adjoint());
        out.push((&a - a.adjoint()) * c(0.0, 1.0));
    }
    out
}

/// Distance of X from span{I}; range elements are unit vectors, so this is
/// comparable across candidates.
fn distance_from_scalars(x: &CMatrix) -> f64 {
    let n = x.nrows();
    let tr = x.trace() / r(n as f64);
    (x - linalg::identity(n) * tr).norm()
}

pub fn classify_e2(phi: &Superoperator, cfg: &ToleranceConfig) -> Result<CanonicalForm> {
    require_dim(phi, 2, "classify_E2")?;
    let rank = phi.rank(cfg.rank_tol);
    if rank == 3 {
        return Err(Error::RankThree);
    }
    require_idempotent_ucp(phi, cfg)?;
    match rank {
        1 => {
            let (params, w) = state_params(phi);
            finish_reconstructed(phi, Family::E2State, params, w)
        }
        2 => {
            let m = hermitian_range(phi, cfg)
                .into_iter()
                .max_by(|a, b| distance_from_scalars(a).total_cmp(&distance_from_scalars(b)))
                .ok_or(Error::UnexpectedRank { rank, context: "E2 fixed space".into() })?;
            let (_, w) = linalg::hermitian_eig_desc(&m);
            finish_reconstructed(phi, Family::E2Diagonal, CanonicalParams::default(), w)
        }
        4 => finish_reconstructed(phi, Family::E2Identity, CanonicalParams::default(), linalg::identity(2)),
        _ => Err(Error::UnexpectedRank { rank, context: "element of E_2".into() }),
    }
}

/// Unit vector x with Φ(xx*) = xx*, from the eigenvectors of a generic
/// self-adjoint element of the range.
pub fn fixed_rank_one_projection(phi: &Superoperator, cfg: &ToleranceConfig) -> Option<CVector> {
    let herm = hermitian_range(phi, cfg);
    if herm.is_empty() {
        return None;
    }
    for attempt in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + attempt);
        let mut m = CMatrix::zeros(phi.n(), phi.n());
        for h in &herm {
            m += h * r(rng.random_range(-1.0..1.0));
        }
        let (_, vecs) = linalg::hermitian_eig_desc(&m);
        for col in vecs.column_iter() {
            let x = col.into_owned();
            let p = &x * x.adjoint();
            if (phi.eval(&p) - &p).norm() <= FIX_TOL {
                return Some(x);
            }
        }
    }
    None
}

fn mask_bit(z: num_complex::Complex64) -> Option<bool> {
    if z.norm() <= MASK_TOL {
        Some(false)
    } else if (z - r(1.0)).norm() <= MASK_TOL {
        Some(true)
    } else {
        None
    }
}

fn inconclusive(reason: impl Into<String>) -> Error {
    Error::Inconclusive { residual: f64::NAN, reason: reason.into() }
}

pub fn classify_e3(phi: &Superoperator, cfg: &ToleranceConfig) -> Result<CanonicalForm> {
    require_dim(phi, 3, "classify_E3")?;
    require_idempotent_ucp(phi, cfg)?;
    let rank = phi.rank(cfg.rank_tol);
    if rank == 1 {
        let (mut params, w) = state_params(phi);
        let weights = params.weights.clone().unwrap_or_default();
        if weights[2] > FAITHFUL_TOL {
            return finish_reconstructed(phi, Family::E3State, params, w);
        }
        params.lambda = Some(weights[0]);
        let mut reordered = CMatrix::zeros(3, 3);
        for (dst, src) in [2usize, 0, 1].iter().enumerate() {
            reordered.set_column(dst, &w.column(*src));
        }
        return finish_reconstructed(phi, Family::E3I, params, reordered);
    }
    if let Some(x) = annihilated_vector(phi, cfg) {
        return classify_annihilating(phi, &x, cfg);
    }
    let x = fixed_rank_one_projection(phi, cfg)
        .ok_or_else(|| inconclusive("no annihilated or fixed rank-one projection found"))?;
    classify_fixing(phi, &x, cfg)
}

fn inner_e2(phi1: &Superoperator, cfg: &ToleranceConfig) -> Result<CanonicalForm> {
    classify_e2(&compress(phi1, &[1, 2]), cfg)
        .map_err(|e| inconclusive(format!("inner map on the complement is not in E_2: {e}")))
}

/// Forms I–III: Φ(xx*) = 0.
fn classify_annihilating(phi: &Superoperator, x: &CVector, cfg: &ToleranceConfig) -> Result<CanonicalForm> {
    let w0 = linalg::complete_to_unitary(x);
    let phi1 = conjugate_map(phi, &w0)?;
    let inner = inner_e2(&phi1, cfg)?;
    let mut w = &w0 * one_plus(&inner.conjugator.adjoint());
    let phi2 = conjugate_map(phi, &w)?;
    match inner.family {
        Family::E2Diagonal => {
            let mut lambda = phi2.eval(&linalg::matrix_unit(3, 3, 1, 1))[(0, 0)].re;
            if lambda < 0.5 {
                w *= linalg::permutation(&[0, 2, 1]);
                lambda = 1.0 - lambda;
            }
            let params = CanonicalParams { lambda: Some(lambda), ..Default::default() };
            finish_reconstructed(phi, Family::E3II, params, w)
        }
        Family::E2Identity => {
            let d = state_density(&phi2, &[1, 2]);
            let (vals, w3) = linalg::hermitian_eig_desc(&d);
            w *= one_plus(&w3);
            let params = CanonicalParams { lambda: Some(vals[0]), ..Default::default() };
            finish_reconstructed(phi, Family::E3III, params, w)
        }
        other => Err(inconclusive(format!("annihilating map with inner form {other}"))),
    }
}

/// Forms IV–VII: Φ(xx*) = xx*.
fn classify_fixing(phi: &Superoperator, x: &CVector, cfg: &ToleranceConfig) -> Result<CanonicalForm> {
    let w0 = linalg::complete_to_unitary(x);
    let phi1 = conjugate_map(phi, &w0)?;
    let inner = inner_e2(&phi1, cfg)?;
    let w = &w0 * one_plus(&inner.conjugator.adjoint());
    let phi2 = conjugate_map(phi, &w)?;
    let z2 = mask_bit(phi2.eval(&linalg::matrix_unit(3, 3, 0, 1))[(0, 1)]);
    let z3 = mask_bit(phi2.eval(&linalg::matrix_unit(3, 3, 0, 2))[(0, 2)]);
    let (Some(z2), Some(z3)) = (z2, z3) else {
        return Err(inconclusive("off-diagonal mask entries are not in {0, 1}"));
    };
    let plain = CanonicalParams::default();
    match (inner.family, z2, z3) {
        (Family::E2State, false, false) => {
            let weights = inner.params.weights.clone().unwrap_or_default();
            let params = CanonicalParams { lambda: Some(weights[0]), ..Default::default() };
            finish_reconstructed(phi, Family::E3VI, params, w)
        }
        (Family::E2Diagonal, false, false) => finish_reconstructed(phi, Family::E3IV, plain, w),
        (Family::E2Diagonal, true, false) => {
            finish_reconstructed(phi, Family::E3V, plain, w * linalg::permutation(&[2, 1, 0]))
        }
        (Family::E2Diagonal, false, true) => {
            finish_reconstructed(phi, Family::E3V, plain, w * linalg::permutation(&[1, 0, 2]))
        }
        (Family::E2Identity, false, false) => finish_reconstructed(phi, Family::E3V, plain, w),
        (Family::E2Identity, true, true) => finish_reconstructed(phi, Family::E3VII, plain, w),
        (f, a, b) => Err(inconclusive(format!("inner form {f} with mask bits ({a}, {b}) is not idempotent UCP"))),
    }
}

/// (λ, λ′, U) with λ > λ′, λ + λ′ ≥ 1 and conjugate_map(canonical(λ, λ′), U) ≈ φ.
pub fn canonical_rank2_params(phi: &Superoperator, cfg: &ToleranceConfig) -> Result<(f64, f64, CMatrix)> {
    require_dim(phi, 2, "canonical_rank2_params")?;
    let limit = limits::limit_map(phi, cfg)?.limit;
    let inner = classify_e2(&limit, cfg)?;
    if inner.family != Family::E2Diagonal {
        return Err(Error::UnexpectedRank { rank: inner.family.rank(), context: "limit of a rank-2 map".into() });
    }
    let mut w = inner.conjugator.adjoint();
    let phi_w = conjugate_map(phi, &w)?;
    let img = phi_w.eval(&linalg::matrix_unit(2, 2, 0, 0));
    let (mut lambda, mut lambda_p) = (img[(0, 0)].re, img[(1, 1)].re);
    if lambda + lambda_p < 1.0 {
        w *= linalg::permutation(&[1, 0]);
        (lambda, lambda_p) = (1.0 - lambda_p, 1.0 - lambda);
    }
    let q = lambda - lambda_p;
    if q <= cfg.identity_tol() {
        return Err(Error::Inconsistent(format!("Q = λ − λ′ = {q:.3e} is not positive for a rank-2 map")));
    }
    Ok((lambda, lambda_p, w.adjoint()))
}

/// Real least squares for Y in φ⁻¹(e_ij) − e_ij = Y e_ij + e_ij Y*, with the
/// i·Im(tr Y) gauge removed.
pub fn extract_generator_y(phi: &Superoperator, _cfg: &ToleranceConfig) -> Result<GeneratorExtraction> {
    let n = phi.n();
    let cond = linalg::condition_number(phi.action());
    if !(cond <= resolvent::COND_GUARD) {
        return Err(Error::NotInvertible { cond });
    }
    let inv = phi.action().clone().lu().try_inverse().ok_or(Error::NotInvertible { cond })?;
    let psi = Superoperator::from_action(n, inv);
    let units = n * n;
    let rows = 2 * units * units;
    let cols = 2 * units;
    let mut design = DMatrix::<f64>::zeros(rows, cols);
    let mut rhs = nalgebra::DVector::<f64>::zeros(rows);
    let put = |design: &mut DMatrix<f64>, unit: usize, col: usize, m: &CMatrix| {
        for (k, z) in linalg::vec_rows(m).iter().enumerate() {
            design[(2 * (unit * units + k), col)] = z.re;
            design[(2 * (unit * units + k) + 1, col)] = z.im;
        }
    };
    for i in 0..n {
        for j in 0..n {
            let unit = i * n + j;
            let e = linalg::matrix_unit(n, n, i, j);
            let target = psi.eval(&e) - &e;
            for (k, z) in linalg::vec_rows(&target).iter().enumerate() {
                rhs[2 * (unit * units + k)] = z.re;
                rhs[2 * (unit * units + k) + 1] = z.im;
            }
            for p in 0..n {
                for q in 0..n {
                    let basis = linalg::matrix_unit(n, n, p, q);
                    let re_part = &basis * &e + &e * basis.adjoint();
                    let im_basis = &basis * c(0.0, 1.0);
                    let im_part = &im_basis * &e + &e * im_basis.adjoint();
                    put(&mut design, unit, 2 * (p * n + q), &re_part);
                    put(&mut design, unit, 2 * (p * n + q) + 1, &im_part);
                }
            }
        }
    }
    let svd = design.clone().svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Inconsistent(format!("generator least squares failed: {e}")))?;
    let residual = (&design * &sol - &rhs).norm();
    let mut y = CMatrix::from_fn(n, n, |p, q| c(sol[2 * (p * n + q)], sol[2 * (p * n + q) + 1]));
    let gauge = y.trace().im / n as f64;
    for k in 0..n {
        y[(k, k)] -= c(0.0, gauge);
    }
    let skew_defect = (&y + y.adjoint()).norm();
    let trace_defect = y.trace().norm();
    Ok(GeneratorExtraction { y, residual, skew_defect, trace_defect })
}

pub fn classify_unital_qpos_m2(phi: &Superoperator, cfg: &ToleranceConfig) -> Result<CanonicalForm> {
    require_dim(phi, 2, "classify_unital_qpos_m2")?;
    let defect = phi.unital_defect();
    if defect > cfg.identity_tol() {
        return Err(Error::NotUnital(defect));
    }
    let rank = phi.rank(cfg.rank_tol);
    if rank == 3 {
        return Err(Error::RankThree);
    }
    let verdict = resolvent::certify_q_positive(phi, cfg);
    if verdict.tag == VerdictTag::Refuted {
        return Err(Error::NotQPositive(format!(
            "resolvent loses complete positivity at t = {:.6e}",
            verdict.witness_t.unwrap_or(f64::NAN)
        )));
    }
    match rank {
        1 => {
            let (params, w) = state_params(phi);
            finish_reconstructed(phi, Family::M2Rank1, params, w)
        }
        2 => {
            let (lambda, lambda_p, u) = canonical_rank2_params(phi, cfg)?;
            let params = CanonicalParams { lambda: Some(lambda), lambda_prime: Some(lambda_p), ..Default::default() };
            finish_reconstructed(phi, Family::M2Rank2, params, u.adjoint())
        }
        4 => classify_invertible(phi, cfg),
        _ => Err(Error::UnexpectedRank { rank, context: "unital q-positive map on M_2".into() }),
    }
}

fn classify_invertible(phi: &Superoperator, cfg: &ToleranceConfig) -> Result<CanonicalForm> {
    let ext = extract_generator_y(phi, cfg)?;
    let tol = cfg.identity_tol() * (1.0 + ext.y.norm());
    if !ext.is_qpure_canonical(tol) {
        let params = CanonicalParams { generator: Some(ext), ..Default::default() };
        return finish(phi, Family::M2Invertible, params, phi.clone(), linalg::identity(phi.n()));
    }
    let h = linalg::hermitize(&(&ext.y * c(0.0, -1.0)));
    let (mut lambdas, w) = linalg::hermitian_eig_desc(&h);
    let mean = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
    lambdas.iter_mut().for_each(|l| *l -= mean);
    let params = CanonicalParams { qpure_lambdas: Some(lambdas), generator: Some(ext), ..Default::default() };
    finish_reconstructed(phi, Family::M2Invertible, params, w)
}

/// Dispatches on dimension and structure: E₂/E₃ elements go to their
/// classifiers, other unital maps on M₂ to the q-positive classification.
pub fn classify(phi: &Superoperator, cfg: &ToleranceConfig) -> Result<CanonicalForm> {
    match phi.n() {
        2 if is_idempotent_ucp(phi, cfg) => classify_e2(phi, cfg),
        2 => classify_unital_qpos_m2(phi, cfg),
        3 => classify_e3(phi, cfg),
        n => Err(Error::DimensionMismatch(format!("classification covers M_2 and M_3, got M_{n}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::haar_unitary;
    use crate::resolvent::phi_r_family;

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn lam(l: f64) -> CanonicalParams {
        CanonicalParams { lambda: Some(l), ..Default::default() }
    }

    fn remark_map() -> Superoperator {
        Superoperator::from_fn(2, |a| {
            let off = a[(0, 1)] + a[(1, 0)];
            CMatrix::from_row_slice(
                2,
                2,
                &[a[(0, 0)] * r(2.0) + a[(1, 1)], off, off, a[(0, 0)] + a[(1, 1)] * r(2.0)],
            ) / r(3.0)
        })
    }

    #[test]
    fn family_strings_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
        }
        assert!("E4_state".parse::<Family>().is_err());
    }

    #[test]
    fn form_ranks() {
        for f in Family::E3 {
            let params = CanonicalParams { lambda: Some(0.7), weights: Some(vec![0.5, 0.3, 0.2]), ..Default::default() };
            let m = reconstruct(f, &params).unwrap();
            assert_eq!(m.rank(1e-8), f.rank(), "{f}");
            assert!(is_idempotent_ucp(&m, &cfg()), "{f}");
        }
    }

    #[test]
    fn diagonal_map_is_e2_diagonal() {
        let d = reconstruct(Family::E2Diagonal, &CanonicalParams::default()).unwrap();
        let form = classify_e2(&d, &cfg()).unwrap();
        assert_eq!(form.family, Family::E2Diagonal);
        assert!(form.round_trip_residual < 1e-12);
    }

    #[test]
    fn state_density_read_off() {
        let rho = linalg::diag_real(&[0.3, 0.7]);
        let phi = Superoperator::state_map(&rho).unwrap();
        let form = classify_e2(&phi, &cfg()).unwrap();
        assert_eq!(form.family, Family::E2State);
        let w = form.params.weights.unwrap();
        assert!((w[0] - 0.7).abs() < 1e-12 && (w[1] - 0.3).abs() < 1e-12);
        assert!((form.params.density.unwrap() - rho).norm() < 1e-12);
    }

    #[test]
    fn remark_map_is_rank_three() {
        assert_eq!(classify_e2(&remark_map(), &cfg()), Err(Error::RankThree));
        assert_eq!(classify_unital_qpos_m2(&remark_map(), &cfg()), Err(Error::RankThree));
    }

    #[test]
    fn e3_forms_recovered_under_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cases = [
            (Family::E3I, lam(0.8)),
            (Family::E3II, lam(0.6)),
            (Family::E3III, lam(0.9)),
            (Family::E3IV, CanonicalParams::default()),
            (Family::E3V, CanonicalParams::default()),
            (Family::E3VI, lam(0.75)),
            (Family::E3VII, CanonicalParams::default()),
            (Family::E3State, CanonicalParams { weights: Some(vec![0.5, 0.3, 0.2]), ..Default::default() }),
        ];
        for (family, params) in cases {
            let u = haar_unitary(&mut rng, 3);
            let phi = conjugate_map(&reconstruct(family, &params).unwrap(), &u).unwrap();
            let form = classify_e3(&phi, &cfg()).unwrap_or_else(|e| panic!("{family}: {e}"));
            assert_eq!(form.family, family);
            assert!(form.round_trip_residual < 1e-8, "{family}: {}", form.round_trip_residual);
            if let Some(l) = params.lambda {
                assert!((form.params.lambda.unwrap() - l).abs() < 1e-8, "{family}");
            }
        }
    }

    #[test]
    fn swap_symmetric_forms_use_upper_lambda() {
        let phi = reconstruct(Family::E3II, &lam(0.4)).unwrap();
        let form = classify_e3(&phi, &cfg()).unwrap();
        assert!((form.params.lambda.unwrap() - 0.6).abs() < 1e-10);
        let phi = reconstruct(Family::E3VI, &lam(0.25)).unwrap();
        let form = classify_e3(&phi, &cfg()).unwrap();
        assert_eq!(form.family, Family::E3VI);
        assert!((form.params.lambda.unwrap() - 0.75).abs() < 1e-10);
    }

    #[test]
    fn identity_on_m3_is_vii() {
        assert_eq!(classify_e3(&Superoperator::identity(3), &cfg()).unwrap().family, Family::E3VII);
    }

    #[test]
    fn rank2_params() {
        let d = reconstruct(Family::E2Diagonal, &CanonicalParams::default()).unwrap();
        let (l, lp, u) = canonical_rank2_params(&d, &cfg()).unwrap();
        assert!((l - 1.0).abs() < 1e-10 && lp.abs() < 1e-10);
        assert!(linalg::unitary_defect(&u) < 1e-12);
        let (l, lp, _) = canonical_rank2_params(&rank2_m2_map(0.6, 0.1), &cfg()).unwrap();
        assert!((l - 0.9).abs() < 1e-10 && (lp - 0.4).abs() < 1e-10);
        let swapped = conjugate_map(&rank2_m2_map(0.6, 0.1), &linalg::permutation(&[1, 0])).unwrap();
        let (l2, lp2, _) = canonical_rank2_params(&swapped, &cfg()).unwrap();
        assert!((l2 - 0.9).abs() < 1e-10 && (lp2 - 0.4).abs() < 1e-10);
    }

    #[test]
    fn m2_rank2_under_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = haar_unitary(&mut rng, 2);
        let phi = conjugate_map(&rank2_m2_map(0.8, 0.3), &u).unwrap();
        let form = classify_unital_qpos_m2(&phi, &cfg()).unwrap();
        assert_eq!(form.family, Family::M2Rank2);
        assert!((form.params.lambda.unwrap() - 0.8).abs() < 1e-8);
        assert!((form.params.lambda_prime.unwrap() - 0.3).abs() < 1e-8);
    }

    #[test]
    fn m2_rank1_trace_state() {
        let form = classify_unital_qpos_m2(&Superoperator::trace_state_map(2), &cfg()).unwrap();
        assert_eq!(form.family, Family::M2Rank1);
    }

    #[test]
    fn qpure_masks() {
        assert!(qpure_invertible_canonical(&[0.0, 0.0]).unwrap().distance(&Superoperator::identity(2)) < 1e-15);
        let m = qpure_invertible_canonical(&[1.0, -1.0]).unwrap();
        let out = m.eval(&linalg::matrix_unit(2, 2, 0, 1));
        assert!((out[(0, 1)] - r(1.0) / c(1.0, 2.0)).norm() < 1e-15);
        let m = qpure_invertible_canonical(&[1.0, 0.0, -1.0]).unwrap();
        let entry = |i, j| m.eval(&linalg::matrix_unit(3, 3, i, j))[(i, j)];
        assert!((entry(0, 1) - r(1.0) / c(1.0, 1.0)).norm() < 1e-15);
        assert!((entry(0, 2) - r(1.0) / c(1.0, 2.0)).norm() < 1e-15);
        assert!((entry(1, 2) - r(1.0) / c(1.0, 1.0)).norm() < 1e-15);
        assert!(qpure_invertible_canonical(&[1.0, 0.5]).is_err());
    }

    #[test]
    fn generator_of_qpure_map() {
        let m = qpure_invertible_canonical(&[1.0, -1.0]).unwrap();
        let ext = extract_generator_y(&m, &cfg()).unwrap();
        assert!(ext.residual < 1e-10 && ext.skew_defect < 1e-10 && ext.trace_defect < 1e-10);
        assert!((ext.y - CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.0, 1.0), c(0.0, -1.0)]))).norm() < 1e-10);
        let id = extract_generator_y(&Superoperator::identity(2), &cfg()).unwrap();
        assert!(id.y.norm() < 1e-12);
    }

    #[test]
    fn generator_of_phi_r_is_not_skew() {
        let ext = extract_generator_y(&phi_r_family(1.2).unwrap(), &cfg()).unwrap();
        assert!(!ext.is_qpure_canonical(1e-6));
    }

    #[test]
    fn qpure_schur_classifies_with_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = haar_unitary(&mut rng, 2);
        let phi = conjugate_map(&qpure_invertible_canonical(&[0.75, -0.75]).unwrap(), &u).unwrap();
        let form = classify_unital_qpos_m2(&phi, &cfg()).unwrap();
        assert_eq!(form.family, Family::M2Invertible);
        let l = form.params.qpure_lambdas.unwrap();
        assert!((l[0] - l[1] - 1.5).abs() < 1e-8);
    }
}
