//! Spectra, the resolvent family φ(I+tφ)⁻¹ and sampled q-positivity.

use num_complex::Complex64;

use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::limits;
use crate::linalg::{self, c, r, CMatrix, PsdCheck};
use crate::scan::{self, GridMeta, MinEigSample};
use crate::superop::{cp_margin, is_completely_positive, schur_map, Superoperator};

/// Largest accepted condition number of I + tφ.
pub const COND_GUARD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerdictTag {
    CertifiedSampled,
    Refuted,
    Inconclusive,
}

impl VerdictTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            VerdictTag::CertifiedSampled => "certified_sampled",
            VerdictTag::Refuted => "refuted",
            VerdictTag::Inconclusive => "inconclusive",
        }
    }
}

/// Outcome of the t → ∞ endpoint check on the limit map.
#[derive(Debug, Clone, PartialEq)]
pub enum LimitCheck {
    CompletelyPositive,
    NotCompletelyPositive { min_eigenvalue: f64 },
    Unavailable(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QPositivityVerdict {
    pub tag: VerdictTag,
    pub witness_t: Option<f64>,
    pub min_eig_trace: Vec<MinEigSample>,
    pub eig_check: bool,
    pub grid_meta: GridMeta,
    pub limit_check: LimitCheck,
}

/// Eigenvalues of the action matrix, sorted by real part then imaginary part (descending).
pub fn spectrum(phi: &Superoperator) -> Vec<Complex64> {
    let mut ev = linalg::eigenvalues(phi.action());
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    ev
}

fn spectral_tol(cfg: &ToleranceConfig, radius: f64) -> f64 {
    10.0 * cfg.rank_tol * (1.0 + radius)
}

pub fn has_no_negative_eigenvalues(phi: &Superoperator, cfg: &ToleranceConfig) -> bool {
    negative_eigenvalue(phi, cfg).is_none()
}

pub(crate) fn negative_eigenvalue(phi: &Superoperator, cfg: &ToleranceConfig) -> Option<f64> {
    let ev = spectrum(phi);
    let radius = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tol = spectral_tol(cfg, radius);
    ev.iter().find(|z| z.im.abs() <= tol && z.re < -tol).map(|z| z.re)
}

/// φ∘(I+tφ)⁻¹.
pub fn resolvent_map(phi: &Superoperator, t: f64) -> Result<Superoperator> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::OutOfRange(format!("resolvent parameter must be finite and nonnegative, got {t}")));
    }
    let n = phi.n();
    let m = phi.action();
    let shifted = CMatrix::identity(n * n, n * n) + m * r(t);
    let cond = linalg::condition_number(&shifted);
    if !(cond <= COND_GUARD) {
        return Err(Error::Singular { t, cond });
    }
    let sol = shifted.lu().solve(m).ok_or(Error::Singular { t, cond })?;
    Ok(Superoperator::from_action(n, sol))
}

fn resolvent_margin(phi: &Superoperator, t: f64, cfg: &ToleranceConfig) -> Result<PsdCheck> {
    resolvent_map(phi, t).map(|rt| cp_margin(&rt, cfg))
}

pub(crate) fn limit_endpoint(phi: &Superoperator, cfg: &ToleranceConfig) -> LimitCheck {
    match limits::limit_map(phi, cfg) {
        Ok(report) => endpoint_of(&report.limit, cfg),
        Err(e) => LimitCheck::Unavailable(e.to_string()),
    }
}

pub(crate) fn endpoint_of(map: &Superoperator, cfg: &ToleranceConfig) -> LimitCheck {
    let m = cp_margin(map, cfg);
    if m.psd {
        LimitCheck::CompletelyPositive
    } else {
        LimitCheck::NotCompletelyPositive { min_eigenvalue: m.min_eigenvalue }
    }
}

/// Shared driver for q-positivity and q-dominance sampling.
pub(crate) struct Sampled {
    pub witness_t: Option<f64>,
    pub trace: Vec<MinEigSample>,
    pub meta: GridMeta,
    pub limit_check: LimitCheck,
}

pub(crate) fn sample_family<F>(f: &F, limit_check: LimitCheck, cfg: &ToleranceConfig, dim: usize) -> Sampled
where
    F: Fn(f64) -> Result<PsdCheck>,
{
    let grid = scan::run_scan(f, cfg, dim);
    let mut trace = grid.trace();
    let mut extended = Vec::new();
    let mut witness = grid.first_crossing(scan::violates_floor).map(|(before, at)| match before {
        None => at,
        Some(lo) => scan::bisect(f, scan::violates_floor, lo, at, cfg.bisect_tol).1,
    });
    if witness.is_none() {
        let count = match limit_check {
            LimitCheck::CompletelyPositive => 0,
            LimitCheck::NotCompletelyPositive { .. } => 10,
            LimitCheck::Unavailable(_) => 6,
        };
        let mut lo = cfg.t_cap;
        for t in scan::extension_points(cfg, count) {
            extended.push(t);
            if let Ok(chk) = f(t) {
                trace.push(MinEigSample { t, min_eig: chk.min_eigenvalue, floor: chk.floor });
                if scan::violates_floor(&chk) {
                    witness = Some(scan::bisect(f, scan::violates_floor, lo, t, cfg.bisect_tol).1);
                    break;
                }
                lo = t;
            }
        }
    }
    Sampled { witness_t: witness, trace, meta: grid.meta(cfg, extended), limit_check }
}

/// Samples CP of φ(I+tφ)⁻¹ on the compactified grid. Certification is
/// sampled only; refutation carries the smallest bracketed witness.
pub fn certify_q_positive(phi: &Superoperator, cfg: &ToleranceConfig) -> QPositivityVerdict {
    let eig_check = has_no_negative_eigenvalues(phi, cfg);
    let f = |t: f64| resolvent_margin(phi, t, cfg);
    let limit_check = if eig_check {
        limit_endpoint(phi, cfg)
    } else {
        LimitCheck::Unavailable("map has a negative eigenvalue".into())
    };
    let dim = phi.n() * phi.n();
    let sampled = sample_family(&f, limit_check, cfg, dim);
    let tag = match (sampled.witness_t, eig_check, &sampled.limit_check) {
        (Some(_), _, _) => VerdictTag::Refuted,
        (None, false, _) => VerdictTag::Inconclusive,
        (None, true, LimitCheck::NotCompletelyPositive { .. }) => VerdictTag::Inconclusive,
        (None, true, _) => VerdictTag::CertifiedSampled,
    };
    QPositivityVerdict {
        tag,
        witness_t: sampled.witness_t,
        min_eig_trace: sampled.trace,
        eig_check,
        grid_meta: sampled.meta,
        limit_check: sampled.limit_check,
    }
}

/// sup{s : φ(I+tφ)⁻¹ is CP on [0, s]}, located to `bisect_tol` on the
/// machine-noise sign of the minimum Choi eigenvalue. `None` if no violation
/// is found up to the grid cap.
pub fn q_threshold(phi: &Superoperator, cfg: &ToleranceConfig) -> Result<Option<f64>> {
    let at_zero = is_completely_positive(phi, cfg)?;
    if !at_zero.completely_positive {
        return Err(Error::NotCompletelyPositive(at_zero.min_eigenvalue));
    }
    let dim = phi.n() * phi.n();
    let f = |t: f64| resolvent_margin(phi, t, cfg);
    let below_noise = |chk: &PsdCheck| chk.min_eigenvalue < -scan::noise_floor(chk.norm, dim);
    let grid = scan::run_scan(&f, cfg, dim);
    let crossing = grid.first_crossing(below_noise);
    let bound = crossing.map(|(_, at)| at).unwrap_or(f64::INFINITY);
    if let Some(sample) = grid.samples.iter().find(|s| s.t < bound && s.check.is_err()) {
        if let Err(e) = &sample.check {
            return Err(e.clone());
        }
    }
    Ok(crossing.map(|(before, at)| {
        let lo = before.unwrap_or(0.0);
        let (lo, hi) = scan::bisect(&f, below_noise, lo, at, cfg.bisect_tol);
        0.5 * (lo + hi)
    }))
}

/// Schur map with mask [[1, r(1+i)/2], [r(1−i)/2, 1]], 1 < r ≤ √2.
pub fn phi_r_family(r_param: f64) -> Result<Superoperator> {
    if !(r_param > 1.0 && r_param <= std::f64::consts::SQRT_2 * (1.0 + 1e-12)) {
        return Err(Error::OutOfRange(format!("phi_r requires 1 < r <= sqrt(2), got {r_param}")));
    }
    schur_map(&phi_r_mask(r_param))
}

pub(crate) fn phi_r_mask(r_param: f64) -> CMatrix {
    let h = 0.5 * r_param;
    CMatrix::from_row_slice(2, 2, &[r(1.0), c(h, h), c(h, -h), r(1.0)])
}

/// Closed-form CP threshold (2−r²)/(2r(r−1)) of the φ_r resolvent family.
pub fn phi_r_threshold(r_param: f64) -> f64 {
    (2.0 - r_param * r_param) / (2.0 * r_param * (r_param - 1.0))
}

/// The Schur map with mask [[1, −1], [−1, 1]]: completely positive with eigenvalue −1.
pub fn sign_flip_schur_map() -> Superoperator {
    schur_map(&linalg::real_matrix(2, 2, &[1.0, -1.0, -1.0, 1.0])).expect("square mask")
}

/// A ↦ (1/3)[[2a₁₁+a₂₂, a₁₂+a₂₁], [a₁₂+a₂₁, a₁₁+2a₂₂]]: unital, CP, rank three
/// and not q-positive.
pub fn rank_three_unital_map() -> Superoperator {
    Superoperator::from_fn(2, |a| {
        let off = a[(0, 1)] + a[(1, 0)];
        let d1 = a[(0, 0)] * r(2.0) + a[(1, 1)];
        let d2 = a[(0, 0)] + a[(1, 1)] * r(2.0);
        CMatrix::from_row_slice(2, 2, &[d1, off, off, d2]) / r(3.0)
    })
}
