//! Limit maps L_φ = lim t·φ(I+tφ)⁻¹, idempotent UCP maps and the q-order.

use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::linalg::{self, r, CMatrix};
use crate::resolvent::{self, LimitCheck, QPositivityVerdict, VerdictTag};
use crate::scan::{self, GridMeta, MinEigSample};
use crate::superop::{cp_margin, kraus_decomposition, Superoperator};

/// Largest accepted condition number of the range/kernel basis.
const BASIS_COND_GUARD: f64 = 1e8;
/// Extrapolation nodes h = 1/t.
const RICHARDSON_NODES: [f64; 4] = [1e-3, 1e-4, 1e-5, 1e-6];
const CROSS_CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitMethod {
    Spectral,
    NumericFallback,
}

impl LimitMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            LimitMethod::Spectral => "spectral",
            LimitMethod::NumericFallback => "numeric_fallback",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitResiduals {
    /// ‖L² − L‖
    pub idempotency: f64,
    /// ‖L∘φ − φ‖
    pub left_intertwining: f64,
    /// ‖φ∘L − φ‖
    pub right_intertwining: f64,
    /// Rank difference plus distance between the range projectors.
    pub range: f64,
    /// Kernel dimension difference plus distance between the kernel projectors.
    pub nullspace: f64,
    /// |‖L(I)‖ − 1|
    pub norm: f64,
    pub completely_positive: bool,
}

impl LimitResiduals {
    pub fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("idempotency", self.idempotency),
            ("left_intertwining", self.left_intertwining),
            ("right_intertwining", self.right_intertwining),
            ("range", self.range),
            ("nullspace", self.nullspace),
            ("norm", self.norm),
        ]
    }

    pub fn max(&self) -> f64 {
        self.named().iter().map(|(_, v)| *v).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitReport {
    pub limit: Superoperator,
    pub method: LimitMethod,
    pub property_residuals: LimitResiduals,
    /// Distance between the spectral projection and the extrapolated value.
    pub cross_check: f64,
}

/// L = I − P₀ with P₀ the projection onto ker(φ) along range(φ), cross-checked
/// against Richardson extrapolation of t·φ(I+tφ)⁻¹.
pub fn limit_map(phi: &Superoperator, cfg: &ToleranceConfig) -> Result<LimitReport> {
    if let Some(neg) = resolvent::negative_eigenvalue(phi, cfg) {
        return Err(Error::LimitHypothesisViolated(format!(
            "negative eigenvalue {neg:.3e}: the resolvent family is singular"
        )));
    }
    let spectral = spectral_limit(phi, cfg)?;
    let numeric = richardson_limit(phi)?;
    let cross_check = spectral.distance(&numeric);
    let scale = 1.0 + spectral.norm();
    let (limit, method) = if cross_check <= CROSS_CHECK_TOL * scale {
        (spectral, LimitMethod::Spectral)
    } else {
        (numeric, LimitMethod::NumericFallback)
    };
    let property_residuals = verify_limit_properties(phi, &limit, cfg);
    Ok(LimitReport { limit, method, property_residuals, cross_check })
}

fn spectral_limit(phi: &Superoperator, cfg: &ToleranceConfig) -> Result<Superoperator> {
    let n = phi.n();
    let dim = n * n;
    let m = phi.action();
    let range = linalg::range_basis(m, cfg.rank_tol);
    let kernel = linalg::null_space(m, cfg.rank_tol);
    let (rk, kk) = (range.ncols(), kernel.ncols());
    if rk + kk != dim {
        return Err(Error::LimitHypothesisViolated(format!(
            "range ({rk}) and kernel ({kk}) do not span {dim} dimensions"
        )));
    }
    if rk == 0 {
        return Ok(Superoperator::zero(n));
    }
    let mut basis = CMatrix::zeros(dim, dim);
    basis.columns_mut(0, rk).copy_from(&range);
    basis.columns_mut(rk, kk).copy_from(&kernel);
    let cond = linalg::condition_number(&basis);
    if !(cond <= BASIS_COND_GUARD) {
        return Err(Error::LimitHypothesisViolated(format!(
            "range and kernel are nearly dependent (cond {cond:.3e}); t·φ(I+tφ)⁻¹ is unbounded"
        )));
    }
    let inv = basis.clone().lu().try_inverse().ok_or_else(|| {
        Error::LimitHypothesisViolated("range/kernel basis is singular".into())
    })?;
    let mut mask = CMatrix::zeros(dim, dim);
    for k in 0..rk {
        mask[(k, k)] = r(1.0);
    }
    Ok(Superoperator::from_action(n, &basis * mask * inv))
}

/// Lagrange extrapolation to h = 0 of f(h) = I − (I + φ/h)⁻¹.
fn richardson_limit(phi: &Superoperator) -> Result<Superoperator> {
    let n = phi.n();
    let dim = n * n;
    let id = CMatrix::identity(dim, dim);
    let mut acc = CMatrix::zeros(dim, dim);
    for (k, &hk) in RICHARDSON_NODES.iter().enumerate() {
        let t = 1.0 / hk;
        let shifted = &id + phi.action() * r(t);
        let inv = shifted
            .lu()
            .try_inverse()
            .ok_or(Error::Singular { t, cond: f64::INFINITY })?;
        let weight: f64 = RICHARDSON_NODES
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, &hj)| hj / (hj - hk))
            .product();
        acc += (&id - inv) * r(weight);
    }
    Ok(Superoperator::from_action(n, acc))
}

fn subspace_residual(a: &CMatrix, b: &CMatrix) -> f64 {
    let diff = (a.ncols() as f64 - b.ncols() as f64).abs();
    diff + linalg::spectral_norm(&(linalg::projector(a) - linalg::projector(b)))
}

pub fn verify_limit_properties(phi: &Superoperator, limit: &Superoperator, cfg: &ToleranceConfig) -> LimitResiduals {
    let n = phi.n();
    let idempotency = limit.idempotency_defect();
    let left_intertwining = limit.compose(phi).distance(phi);
    let right_intertwining = phi.compose(limit).distance(phi);
    let range = subspace_residual(
        &linalg::range_basis(limit.action(), cfg.rank_tol),
        &linalg::range_basis(phi.action(), cfg.rank_tol),
    );
    let nullspace = subspace_residual(
        &linalg::null_space(limit.action(), cfg.rank_tol),
        &linalg::null_space(phi.action(), cfg.rank_tol),
    );
    let norm = (linalg::spectral_norm(&limit.eval(&linalg::identity(n))) - 1.0).abs();
    LimitResiduals {
        idempotency,
        left_intertwining,
        right_intertwining,
        range,
        nullspace,
        norm,
        completely_positive: cp_margin(limit, cfg).psd,
    }
}

/// Unital, completely positive and idempotent, each within `identity_tol`.
pub fn is_idempotent_ucp(phi: &Superoperator, cfg: &ToleranceConfig) -> bool {
    let tol = cfg.identity_tol();
    phi.unital_defect() <= tol && phi.idempotency_defect() <= tol && cp_margin(phi, cfg).psd
}

/// φ(I+sφ)⁻¹.
pub fn subordinate(phi: &Superoperator, s: f64) -> Result<Superoperator> {
    resolvent::resolvent_map(phi, s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceVerdict {
    pub tag: VerdictTag,
    pub witness_t: Option<f64>,
    pub min_eig_trace: Vec<MinEigSample>,
    /// Both maps free of negative eigenvalues.
    pub eig_check: bool,
    pub grid_meta: GridMeta,
    /// CP of L_φ − L_ψ.
    pub limit_check: LimitCheck,
}

/// Samples CP of φ(I+tφ)⁻¹ − ψ(I+tψ)⁻¹ over the compactified grid, with the
/// tail decided by L_φ − L_ψ.
pub fn q_dominates(phi: &Superoperator, psi: &Superoperator, cfg: &ToleranceConfig) -> Result<DominanceVerdict> {
    if phi.n() != psi.n() {
        return Err(Error::DimensionMismatch(format!(
            "cannot compare maps on M_{} and M_{}",
            phi.n(),
            psi.n()
        )));
    }
    let eig_check = resolvent::has_no_negative_eigenvalues(phi, cfg) && resolvent::has_no_negative_eigenvalues(psi, cfg);
    let limit_check = if eig_check {
        match (limit_map(phi, cfg), limit_map(psi, cfg)) {
            (Ok(a), Ok(b)) => resolvent::endpoint_of(&a.limit.sub(&b.limit), cfg),
            (Err(e), _) | (_, Err(e)) => LimitCheck::Unavailable(e.to_string()),
        }
    } else {
        LimitCheck::Unavailable("a map has a negative eigenvalue".into())
    };
    let f = |t: f64| {
        let a = resolvent::resolvent_map(phi, t)?;
        let b = resolvent::resolvent_map(psi, t)?;
        Ok(cp_margin(&a.sub(&b), cfg))
    };
    let sampled = resolvent::sample_family(&f, limit_check, cfg, phi.n() * phi.n());
    let tag = match (sampled.witness_t, eig_check, &sampled.limit_check) {
        (Some(_), _, _) => VerdictTag::Refuted,
        (None, false, _) => VerdictTag::Inconclusive,
        (None, true, LimitCheck::NotCompletelyPositive { .. }) => VerdictTag::Inconclusive,
        (None, true, _) => VerdictTag::CertifiedSampled,
    };
    Ok(DominanceVerdict {
        tag,
        witness_t: sampled.witness_t,
        min_eig_trace: sampled.trace,
        eig_check,
        grid_meta: sampled.meta,
        limit_check: sampled.limit_check,
    })
}

/// A ↦ diag(λa₁₁ + (1−λ)a₂₂, λ′a₁₁ + (1−λ′)a₂₂).
pub fn rank2_m2_map(lambda: f64, lambda_p: f64) -> Superoperator {
    Superoperator::from_fn(2, |a| {
        let d1 = a[(0, 0)] * r(lambda) + a[(1, 1)] * r(1.0 - lambda);
        let d2 = a[(0, 0)] * r(lambda_p) + a[(1, 1)] * r(1.0 - lambda_p);
        CMatrix::from_row_slice(2, 2, &[d1, r(0.0), r(0.0), d2])
    })
}

/// The rank-two map with parameters (λ, λ′) and its rank-one q-subordinate
/// A ↦ (Q/(1−λ′))a₁₁e₁₁, Q = λ − λ′.
pub fn rank2_m2_subordinate_witness(lambda: f64, lambda_p: f64) -> Result<(Superoperator, Superoperator)> {
    if !(lambda > 0.0 && lambda <= 1.0 && (0.0..1.0).contains(&lambda_p) && lambda > lambda_p) {
        return Err(Error::OutOfRange(format!(
            "need 0 < λ ≤ 1, 0 ≤ λ′ < 1 and λ > λ′, got ({lambda}, {lambda_p})"
        )));
    }
    let q = lambda - lambda_p;
    let coeff = q / (1.0 - lambda_p);
    let sub = Superoperator::from_fn(2, |a| {
        let mut out = CMatrix::zeros(2, 2);
        out[(0, 0)] = a[(0, 0)] * r(coeff);
        out
    });
    Ok((rank2_m2_map(lambda, lambda_p), sub))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnihilatorReport {
    /// Rank-one projection E with φ(E) = 0.
    pub projection: CMatrix,
    pub compressed_q_positive: QPositivityVerdict,
    pub dominance: DominanceVerdict,
    /// Smallest ‖E·φ(I+sφ)⁻¹(I)·E − E·φ′(I)·E‖ over the sampled s.
    pub min_discrepancy: f64,
    pub sampled_s: Vec<f64>,
}

impl AnnihilatorReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.compressed_q_positive.tag == VerdictTag::CertifiedSampled
            && self.dominance.tag == VerdictTag::CertifiedSampled
            && self.min_discrepancy > tol
    }
}

/// Unit vector x with φ(xx*) = 0, from the common kernel of the Kraus operators.
pub fn annihilated_vector(phi: &Superoperator, cfg: &ToleranceConfig) -> Option<linalg::CVector> {
    let n = phi.n();
    let kraus = kraus_decomposition(phi, cfg).ok()?;
    if kraus.is_empty() {
        return Some(linalg::CVector::from_fn(n, |i, _| r(if i == 0 { 1.0 } else { 0.0 })));
    }
    let mut stacked = CMatrix::zeros(n * kraus.len(), n);
    for (k, s) in kraus.iter().enumerate() {
        stacked.rows_mut(k * n, n).copy_from(s);
    }
    let scale = linalg::spectral_norm(&stacked);
    let svd_kernel = linalg::null_space(&stacked, cfg.rank_tol);
    if svd_kernel.ncols() == 0 {
        return None;
    }
    let mut x = svd_kernel.column(0).into_owned();
    linalg::normalize_phase(&mut x);
    if (&stacked * &x).norm() > cfg.identity_tol() * (1.0 + scale) {
        return None;
    }
    Some(x)
}

/// For φ annihilating a rank-one projection E, builds φ′(A) = (I−E)φ(A)(I−E)
/// and certifies φ′ q-positive, φ ≥_q φ′, and φ′ outside the subordinate family.
pub fn annihilator_compression_witness(
    phi: &Superoperator,
    cfg: &ToleranceConfig,
) -> Option<(Superoperator, AnnihilatorReport)> {
    let n = phi.n();
    let x = annihilated_vector(phi, cfg)?;
    let e = &x * x.adjoint();
    let f = linalg::identity(n) - &e;
    let compressed = Superoperator::from_fn(n, |a| &f * phi.eval(a) * &f);
    let compressed_q_positive = resolvent::certify_q_positive(&compressed, cfg);
    let dominance = q_dominates(phi, &compressed, cfg).ok()?;
    let id = linalg::identity(n);
    let target = &e * compressed.eval(&id) * &e;
    let g = cfg.grid_points.max(2);
    let s_cap = cfg.t_cap / (1.0 + cfg.t_cap);
    let sampled_s: Vec<f64> = (0..g).map(|k| scan::t_of(s_cap * k as f64 / (g - 1) as f64)).collect();
    let mut min_discrepancy = f64::INFINITY;
    for &s in &sampled_s {
        if let Ok(sub) = subordinate(phi, s) {
            let d = (&e * sub.eval(&id) * &e - &target).norm();
            min_discrepancy = min_discrepancy.min(d);
        }
    }
    // the s → ∞ member of the family is the zero map
    min_discrepancy = min_discrepancy.min(compressed.norm());
    Some((
        compressed,
        AnnihilatorReport { projection: e, compressed_q_positive, dominance, min_discrepancy, sampled_s },
    ))
}
