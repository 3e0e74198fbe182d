//! Corners and q-corners between maps, the flip corner, limit corners and
//! compression witnesses against hyper-maximality.

use crate::config::ToleranceConfig;
use crate::error::{Error, Result};
use crate::limits::{self, DominanceVerdict};
use crate::linalg::{self, r, CMatrix, CVector};
use crate::resolvent::{self, QPositivityVerdict, VerdictTag};
use crate::superop::{
    assemble_block_map, conjugate_map, cp_margin, extract_blocks, schur_map, RectangularMap, Superoperator,
};

/// Block map Υ = [[φ, γ], [γ*, ψ]] on M_{n+k}.
#[derive(Debug, Clone, PartialEq)]
pub struct CornerProblem {
    pub phi: Superoperator,
    pub psi: Superoperator,
    pub gamma: RectangularMap,
    pub upsilon: Superoperator,
}

impl CornerProblem {
    pub fn new(phi: Superoperator, gamma: RectangularMap, psi: Superoperator) -> Result<Self> {
        let upsilon = assemble_block_map(&phi, &gamma, &psi)?;
        Ok(CornerProblem { phi, psi, gamma, upsilon })
    }

    /// Splits a map on M_{n+k} into its blocks.
    pub fn from_block_map(upsilon: Superoperator, n: usize) -> Result<Self> {
        let (phi, gamma, psi) = extract_blocks(&upsilon, n)?;
        let rebuilt = assemble_block_map(&phi, &gamma, &psi)?;
        let defect = rebuilt.distance(&upsilon);
        if defect > 1e-10 * (1.0 + upsilon.norm()) {
            return Err(Error::Inconsistent(format!(
                "map does not have corner block structure (defect {defect:.3e})"
            )));
        }
        Ok(CornerProblem { phi, psi, gamma, upsilon })
    }

    pub fn n(&self) -> usize {
        self.phi.n()
    }

    pub fn k(&self) -> usize {
        self.psi.n()
    }
}

/// Υ is completely positive.
pub fn is_corner(p: &CornerProblem, cfg: &ToleranceConfig) -> bool {
    cp_margin(&p.upsilon, cfg).psd
}

/// Sampled q-positivity of Υ.
pub fn is_q_corner(p: &CornerProblem, cfg: &ToleranceConfig) -> QPositivityVerdict {
    resolvent::certify_q_positive(&p.upsilon, cfg)
}

/// γ(B) = φ(BU*)U from φ to φ_U.
pub fn flip_corner(phi: &Superoperator, u: &CMatrix) -> Result<CornerProblem> {
    let psi = conjugate_map(phi, u)?;
    let n = phi.n();
    let u_star = u.adjoint();
    let gamma = RectangularMap::from_fn((n, n), (n, n), |b| phi.eval(&(b * &u_star)) * u);
    CornerProblem::new(phi.clone(), gamma, psi)
}

/// Premise and conclusion of the flip-corner forcing argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcingCheck {
    /// [[X, U], [U*, Y]] ⪰ 0 within the floor.
    pub block_psd: bool,
    /// X ≤ I and Y ≤ I within the floor.
    pub contractive: bool,
    /// max(‖X − I‖, ‖Y − I‖)
    pub distance_to_identity: f64,
}

impl ForcingCheck {
    pub fn premise(&self) -> bool {
        self.block_psd && self.contractive
    }

    /// The premise forces X = Y = I up to `tol`.
    pub fn holds(&self, tol: f64) -> bool {
        !self.premise() || self.distance_to_identity <= tol
    }
}

pub fn flip_positivity_forcing(u: &CMatrix, x: &CMatrix, y: &CMatrix, cfg: &ToleranceConfig) -> ForcingCheck {
    let n = u.nrows();
    let mut block = CMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(x);
    block.view_mut((0, n), (n, n)).copy_from(u);
    block.view_mut((n, 0), (n, n)).copy_from(&u.adjoint());
    block.view_mut((n, n), (n, n)).copy_from(y);
    let block_psd = linalg::psd_check(&block, cfg.eig_floor).psd;
    let id = linalg::identity(n);
    let contractive = linalg::psd_check(&(&id - x), cfg.eig_floor).psd && linalg::psd_check(&(&id - y), cfg.eig_floor).psd;
    let distance_to_identity = linalg::spectral_norm(&(x - &id)).max(linalg::spectral_norm(&(y - &id)));
    ForcingCheck { block_psd, contractive, distance_to_identity }
}

/// σ = top-right block of L_Υ.
pub fn limit_corner(p: &CornerProblem, cfg: &ToleranceConfig) -> Result<RectangularMap> {
    let report = limits::limit_map(&p.upsilon, cfg)?;
    let (_, sigma, _) = extract_blocks(&report.limit, p.n())?;
    Ok(sigma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypermaxWitness {
    pub theta_prime: Superoperator,
    /// The diagonal projection P with Θ′(A) = PΘ(A)P.
    pub compression: CMatrix,
    /// Indices removed from the identity to form P.
    pub removed: Vec<usize>,
    pub dominance: DominanceVerdict,
    pub compressed_q_positive: QPositivityVerdict,
    /// ‖φ′ − φ‖ + ‖ψ′ − ψ‖
    pub inequality_evidence: f64,
    /// ‖γ′ − γ‖
    pub corner_defect: f64,
}

impl HypermaxWitness {
    pub fn is_valid(&self, p: &CornerProblem, cfg: &ToleranceConfig) -> bool {
        let tol = cfg.identity_tol();
        self.inequality_evidence > tol
            && self.corner_defect <= tol * (1.0 + p.gamma.norm())
            && self.dominance.tag != VerdictTag::Refuted
            && self.compressed_q_positive.tag != VerdictTag::Refuted
            && self.theta_prime.distance(&p.upsilon) > tol
    }
}

fn compression_candidates(m: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (0..m).map(|j| vec![j]).collect();
    for j in 0..m {
        for k in j + 1..m {
            out.push(vec![j, k]);
        }
    }
    // keep at least one index
    out.retain(|c| c.len() < m);
    out
}

/// Searches the compressions Θ′ = PΘP with P = I − e_jj, then I − e_jj − e_kk,
/// for one that keeps the corner, differs from Θ and stays below it in ≥_q.
pub fn hypermax_refutation_search(p: &CornerProblem, cfg: &ToleranceConfig) -> Option<HypermaxWitness> {
    if is_q_corner(p, cfg).tag == VerdictTag::Refuted {
        return None;
    }
    let (n, m) = (p.n(), p.n() + p.k());
    let tol = cfg.identity_tol();
    for removed in compression_candidates(m) {
        let mut proj = linalg::identity(m);
        for &j in &removed {
            proj[(j, j)] = r(0.0);
        }
        let theta_prime = Superoperator::from_fn(m, |a| &proj * p.upsilon.eval(a) * &proj);
        let Ok((phi_p, gamma_p, psi_p)) = extract_blocks(&theta_prime, n) else { continue };
        let corner_defect = gamma_p.distance(&p.gamma);
        if corner_defect > tol * (1.0 + p.gamma.norm()) {
            continue;
        }
        let inequality_evidence = phi_p.distance(&p.phi) + psi_p.distance(&p.psi);
        if inequality_evidence <= tol {
            continue;
        }
        let compressed_q_positive = resolvent::certify_q_positive(&theta_prime, cfg);
        if compressed_q_positive.tag == VerdictTag::Refuted {
            continue;
        }
        let Ok(dominance) = limits::q_dominates(&p.upsilon, &theta_prime, cfg) else { continue };
        if dominance.tag == VerdictTag::Refuted {
            continue;
        }
        return Some(HypermaxWitness {
            theta_prime,
            compression: proj,
            removed,
            dominance,
            compressed_q_positive,
            inequality_evidence,
            corner_defect,
        });
    }
    None
}

/// The matrix R = [[ρ_ii·I_n, M], [M*, e_jj]] with the direction (Mg, −λg),
/// where e_jj g = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RankObstruction {
    pub r_matrix: CMatrix,
    pub direction: CVector,
    /// ⟨v, Rv⟩ = (ρ_ii − 2λ)‖Mg‖²
    pub quadratic_form: f64,
}

pub fn rank_obstruction_direction(rho_ii: f64, m: &CMatrix, j: usize, lambda: f64) -> Option<RankObstruction> {
    let (n, k) = m.shape();
    if j >= k {
        return None;
    }
    let mut rm = CMatrix::zeros(n + k, n + k);
    for i in 0..n {
        rm[(i, i)] = r(rho_ii);
    }
    rm.view_mut((0, n), (n, k)).copy_from(m);
    rm.view_mut((n, 0), (k, n)).copy_from(&m.adjoint());
    rm[(n + j, n + j)] = r(1.0);
    // e_jj g = 0: take the column of M outside j with the largest norm
    let l = (0..k).filter(|&l| l != j).max_by(|&a, &b| m.column(a).norm().total_cmp(&m.column(b).norm()))?;
    if m.column(l).norm() <= f64::EPSILON * (1.0 + m.norm()) {
        return None;
    }
    let mut g = CVector::zeros(k);
    g[l] = r(1.0);
    let mg = m * &g;
    let mut v = CVector::zeros(n + k);
    v.rows_mut(0, n).copy_from(&mg);
    v.rows_mut(n, k).copy_from(&(g * r(-lambda)));
    let quadratic_form = (v.adjoint() * &rm * &v)[(0, 0)].re;
    Some(RankObstruction { r_matrix: rm, direction: v, quadratic_form })
}

/// Corner between the diagonal map on M₂ and an invertible q-positive Schur
/// map on M₂, with only row `active_row` of γ nonzero. Υ is the Schur map
/// whose mask restricted to {active_row, 2, 3} is the q-pure mask of `mu`
/// and which is the identity on the other diagonal index.
pub fn diagonal_schur_corner(mu: [f64; 3], active_row: usize) -> Result<CornerProblem> {
    if active_row > 1 {
        return Err(Error::OutOfRange(format!("active row must be 0 or 1, got {active_row}")));
    }
    let sub = crate::classify::qpure_mask(&mu);
    let idx = [active_row, 2, 3];
    let mut mask = linalg::identity(4);
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            mask[(i, j)] = sub[(a, b)];
        }
    }
    CornerProblem::from_block_map(schur_map(&mask)?, 2)
}

/// φ(A) = a_nn·I on M_n (a non-faithful vector state), γ(B) = e_nn·B and ψ = id_k.
pub fn nonfaithful_state_corner(n: usize, k: usize) -> Result<CornerProblem> {
    if n < 2 || k == 0 {
        return Err(Error::OutOfRange("need n ≥ 2 and k ≥ 1".into()));
    }
    let last = linalg::matrix_unit(n, n, n - 1, n - 1);
    let phi = Superoperator::from_fn(n, |a| linalg::identity(n) * a[(n - 1, n - 1)]);
    let gamma = RectangularMap::from_fn((n, k), (n, k), |b| &last * b);
    CornerProblem::new(phi, gamma, Superoperator::identity(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, haar_unitary, permutation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    #[test]
    fn zero_corner_between_cp_maps() {
        let p = CornerProblem::new(
            Superoperator::trace_state_map(2),
            RectangularMap::zero(2, 2),
            Superoperator::identity(2),
        )
        .unwrap();
        assert!(is_corner(&p, &cfg()));
        assert_eq!(is_q_corner(&p, &cfg()).tag, VerdictTag::CertifiedSampled);
        let sigma = limit_corner(&p, &cfg()).unwrap();
        assert!(sigma.norm() < 1e-10);
    }

    #[test]
    fn identity_corner_from_trace_state_is_not_cp() {
        let p = CornerProblem::new(
            Superoperator::trace_state_map(2),
            RectangularMap::identity(2, 2),
            Superoperator::identity(2),
        )
        .unwrap();
        assert!(!is_corner(&p, &cfg()));
    }

    #[test]
    fn flip_with_identity_unitary() {
        let phi = Superoperator::trace_state_map(2);
        let p = flip_corner(&phi, &linalg::identity(2)).unwrap();
        assert!(p.psi.distance(&phi) < 1e-14);
        let direct = RectangularMap::from_fn((2, 2), (2, 2), |b| phi.eval(b));
        assert!(p.gamma.distance(&direct) < 1e-14);
        assert!(is_corner(&p, &cfg()));
    }

    #[test]
    fn flip_swap_is_q_corner_and_scaled_is_not() {
        let phi = Superoperator::trace_state_map(2);
        let p = flip_corner(&phi, &permutation(&[1, 0])).unwrap();
        assert_eq!(is_q_corner(&p, &cfg()).tag, VerdictTag::CertifiedSampled);
        let scaled = CornerProblem::new(
            p.phi.clone(),
            RectangularMap::new((2, 2), (2, 2), p.gamma.action() * r(10.0)).unwrap(),
            p.psi.clone(),
        )
        .unwrap();
        let v = is_q_corner(&scaled, &cfg());
        assert_eq!(v.tag, VerdictTag::Refuted);
        assert_eq!(v.witness_t, Some(0.0));
        assert!(flip_corner(&phi, &linalg::real_matrix(2, 2, &[1.0, 1.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn flip_forcing_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = haar_unitary(&mut rng, 2);
        let id = linalg::identity(2);
        let f = flip_positivity_forcing(&u, &id, &id, &cfg());
        assert!(f.premise() && f.holds(1e-12));
        let f = flip_positivity_forcing(&u, &(&id * r(0.9)), &id, &cfg());
        assert!(!f.block_psd);
        assert!(f.holds(1e-12));
    }

    #[test]
    fn flip_corner_has_no_compression_witness() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = haar_unitary(&mut rng, 2);
        let p = flip_corner(&Superoperator::trace_state_map(2), &u).unwrap();
        assert!(hypermax_refutation_search(&p, &cfg()).is_none());
    }

    #[test]
    fn diagonal_schur_witness_is_s_compression() {
        let p = diagonal_schur_corner([0.4, -0.1, -0.3], 0).unwrap();
        assert!(p.phi.distance(&Superoperator::from_fn(2, |a| CMatrix::from_diagonal(&a.diagonal()))) < 1e-14);
        let w = hypermax_refutation_search(&p, &cfg()).expect("witness");
        assert_eq!(w.removed, vec![1]);
        assert!(w.is_valid(&p, &cfg()));
        let (phi_p, _, _) = extract_blocks(&w.theta_prime, 2).unwrap();
        let a = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, 1.0), c(3.0, 0.0), c(5.0, 0.0)]);
        let mut expected = CMatrix::zeros(2, 2);
        expected[(0, 0)] = r(2.0);
        assert!((phi_p.eval(&a) - expected).norm() < 1e-14);
        let sigma = limit_corner(&p, &cfg()).unwrap();
        for z in sigma.action().diagonal().iter() {
            assert!(z.norm() < 1e-7 || (z - r(1.0)).norm() < 1e-7);
        }
    }

    #[test]
    fn diagonal_schur_lower_row_uses_first_index() {
        let p = diagonal_schur_corner([0.2, 0.5, -0.7], 1).unwrap();
        let w = hypermax_refutation_search(&p, &cfg()).expect("witness");
        assert_eq!(w.removed, vec![0]);
    }

    #[test]
    fn nonfaithful_state_witness() {
        let p = nonfaithful_state_corner(2, 2).unwrap();
        assert!(is_corner(&p, &cfg()));
        let w = hypermax_refutation_search(&p, &cfg()).expect("witness");
        assert_eq!(w.removed, vec![0]);
        assert!(w.is_valid(&p, &cfg()));
    }

    #[test]
    fn rank_obstruction_is_negative() {
        let m = linalg::identity(2);
        let ob = rank_obstruction_direction(0.5, &m, 0, 2.0).unwrap();
        assert!((ob.quadratic_form - (0.5 - 4.0)).abs() < 1e-12);
        let direct = (ob.direction.adjoint() * &ob.r_matrix * &ob.direction)[(0, 0)].re;
        assert!((direct - ob.quadratic_form).abs() < 1e-12);
        assert!(rank_obstruction_direction(0.5, &CMatrix::zeros(2, 2), 0, 2.0).is_none());
    }
}
