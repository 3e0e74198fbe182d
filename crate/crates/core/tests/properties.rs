use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand::{Rng, SeedableRng};

use qmap_core::classify::{
    classify_e3, extract_generator_y, fixed_rank_one_projection, qpure_invertible_canonical, Family,
};
use qmap_core::corners::{
    diagonal_schur_corner, flip_corner, flip_positivity_forcing, hypermax_refutation_search, is_corner,
    limit_corner, CornerProblem,
};
use qmap_core::limits::{
    annihilated_vector, is_idempotent_ucp, limit_map, q_dominates, subordinate,
};
use qmap_core::linalg::{haar_unitary, random_density};
use qmap_core::random::{random_cp_map, sample_form, sample_m2};
use qmap_core::resolvent::resolvent_map;
use qmap_core::superop::{
    choi_matrix, conjugate_map, extract_blocks, is_completely_positive, kraus_decomposition, schur_map,
    superop_from_kraus,
};
use qmap_core::{CMatrix, Superoperator, ToleranceConfig, VerdictTag};

fn cfg() -> ToleranceConfig {
    ToleranceConfig::default()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn min_eig(m: &CMatrix) -> f64 {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(h).eigenvalues.min()
}

fn rank(a: &CMatrix) -> usize {
    qmap_core::linalg::numerical_rank(a, 1e-8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn conjugation_composes(seed in any::<u64>(), n in 2usize..5) {
        let mut g = rng(seed);
        let phi = random_cp_map(&mut g, n, 3);
        let (x, y) = (haar_unitary(&mut g, n), haar_unitary(&mut g, n));
        let lhs = conjugate_map(&conjugate_map(&phi, &x).unwrap(), &y).unwrap();
        let rhs = conjugate_map(&phi, &(&x * &y)).unwrap();
        prop_assert!(lhs.distance(&rhs) < 1e-10);
    }

    #[test]
    fn kraus_reconstructs_cp_maps(seed in any::<u64>(), n in 2usize..5, count in 1usize..5) {
        let phi = random_cp_map(&mut rng(seed), n, count);
        let kraus = kraus_decomposition(&phi, &cfg()).unwrap();
        prop_assert!(kraus.len() <= count);
        prop_assert!(superop_from_kraus(n, &kraus).unwrap().distance(&phi) < 1e-9 * (1.0 + phi.norm()));
    }

    #[test]
    fn schur_cp_iff_mask_psd(seed in any::<u64>(), n in 2usize..5) {
        let mut g = rng(seed);
        let mask = qmap_core::linalg::random_hermitian(&mut g, n)
            + CMatrix::identity(n, n) * Complex64::new(g.random_range(-0.5..2.0), 0.0);
        let m = min_eig(&mask);
        prop_assume!(m.abs() > 1e-6);
        let verdict = is_completely_positive(&schur_map(&mask).unwrap(), &cfg()).unwrap();
        prop_assert_eq!(verdict.completely_positive, m > 0.0);
    }

    #[test]
    fn choi_of_cp_map_is_psd(seed in any::<u64>(), n in 2usize..4) {
        let phi = random_cp_map(&mut rng(seed), n, 2);
        prop_assert!(min_eig(&choi_matrix(&phi).blocks) > -1e-10);
    }

    #[test]
    fn resolvent_identity(seed in any::<u64>(), t in 0.0f64..50.0) {
        let phi = sample_m2(&mut rng(seed), None).unwrap().map;
        let res = resolvent_map(&phi, t).unwrap();
        let lhs = res.add(&phi.compose(&res).scale(t));
        prop_assert!(lhs.distance(&phi) < 1e-9 * (1.0 + t));
    }

    #[test]
    fn limit_of_idempotent_is_itself(seed in any::<u64>(), k in 0usize..8) {
        let phi = sample_form(&mut rng(seed), Family::E3[k]).unwrap().map;
        prop_assert!(is_idempotent_ucp(&phi, &cfg()));
        let limit = limit_map(&phi, &cfg()).unwrap().limit;
        prop_assert!(limit.distance(&phi) < 1e-10);
    }

    #[test]
    fn limit_preserves_rank(seed in any::<u64>()) {
        let phi = sample_m2(&mut rng(seed), None).unwrap().map;
        let limit = limit_map(&phi, &cfg()).unwrap().limit;
        prop_assert_eq!(rank(limit.action()), rank(phi.action()));
    }

    #[test]
    fn limit_commutes_with_conjugation(seed in any::<u64>()) {
        let mut g = rng(seed);
        let phi = sample_m2(&mut g, None).unwrap().map;
        let u = haar_unitary(&mut g, 2);
        let lhs = limit_map(&conjugate_map(&phi, &u).unwrap(), &cfg()).unwrap().limit;
        let rhs = conjugate_map(&limit_map(&phi, &cfg()).unwrap().limit, &u).unwrap();
        prop_assert!(lhs.distance(&rhs) < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn dominance_is_reflexive(seed in any::<u64>()) {
        let phi = sample_m2(&mut rng(seed), None).unwrap().map;
        prop_assert_eq!(q_dominates(&phi, &phi, &cfg()).unwrap().tag, VerdictTag::CertifiedSampled);
    }

    #[test]
    fn subordinates_decrease(seed in any::<u64>(), s1 in 0.0f64..3.0, s2 in 0.1f64..3.0) {
        let phi = sample_m2(&mut rng(seed), None).unwrap().map;
        let a = subordinate(&phi, s1).unwrap();
        let b = subordinate(&phi, s1 + s2).unwrap();
        prop_assert_ne!(q_dominates(&a, &b, &cfg()).unwrap().tag, VerdictTag::Refuted);
    }

    #[test]
    fn flip_corners_are_corners(seed in any::<u64>()) {
        let mut g = rng(seed);
        let phi = sample_m2(&mut g, None).unwrap().map;
        let p = flip_corner(&phi, &haar_unitary(&mut g, 2)).unwrap();
        prop_assert!(is_corner(&p, &cfg()));
        let choi = choi_matrix(&p.upsilon).blocks;
        prop_assert!((&choi - choi.adjoint()).norm() < 1e-10);
        let (phi_b, _, psi_b) = extract_blocks(&p.upsilon, 2).unwrap();
        prop_assert!(is_completely_positive(&phi_b, &cfg()).unwrap().completely_positive);
        prop_assert!(is_completely_positive(&psi_b, &cfg()).unwrap().completely_positive);
    }

    #[test]
    fn limit_corner_comes_from_an_idempotent(seed in any::<u64>()) {
        let mut g = rng(seed);
        let phi = sample_m2(&mut g, None).unwrap().map;
        let p = flip_corner(&phi, &haar_unitary(&mut g, 2)).unwrap();
        let limit = limit_map(&p.upsilon, &cfg()).unwrap().limit;
        prop_assert!(limit.idempotency_defect() < 1e-8);
        let sigma = limit_corner(&p, &cfg()).unwrap();
        let (_, block, _) = extract_blocks(&limit, 2).unwrap();
        prop_assert!(sigma.distance(&block) < 1e-12);
        // the limit is itself a corner, fixed by taking limits again
        let again = limit_corner(&CornerProblem::from_block_map(limit, 2).unwrap(), &cfg()).unwrap();
        prop_assert!(again.distance(&sigma) < 1e-8);
    }

    #[test]
    fn hypermax_witnesses_are_valid(a in -1.5f64..1.5, b in -1.5f64..1.5, row in 0usize..2) {
        let p = diagonal_schur_corner([a, b, -a - b], row).unwrap();
        if let Some(w) = hypermax_refutation_search(&p, &cfg()) {
            prop_assert!(w.is_valid(&p, &cfg()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flip_forcing_implication(seed in any::<u64>(), n in 1usize..4, shrink in 0.0f64..0.5, exact in any::<bool>()) {
        let mut g = rng(seed);
        let u = haar_unitary(&mut g, n);
        let id = CMatrix::identity(n, n);
        let (x, y) = if exact {
            (id.clone(), id.clone())
        } else {
            let d = random_density(&mut g, n);
            (&id - &d * Complex64::new(shrink, 0.0), &id - random_density(&mut g, n) * Complex64::new(shrink * 0.5, 0.0))
        };
        let f = flip_positivity_forcing(&u, &x, &y, &cfg());
        prop_assert!(f.holds(1e-6));
        if exact {
            prop_assert!(f.premise());
        }
    }

    #[test]
    fn qpure_generator_extraction(seed in any::<u64>(), n in 2usize..5) {
        let mut g = rng(seed);
        let mut lambdas: Vec<f64> = (0..n).map(|_| g.random_range(-2.0..2.0)).collect();
        let mean = lambdas.iter().sum::<f64>() / n as f64;
        lambdas.iter_mut().for_each(|l| *l -= mean);
        let phi = qpure_invertible_canonical(&lambdas).unwrap();
        let ext = extract_generator_y(&phi, &cfg()).unwrap();
        prop_assert!(ext.residual <= 1e-8 && ext.skew_defect <= 1e-8 && ext.trace_defect <= 1e-8);
    }

    #[test]
    fn e3_rank_law_and_fix_or_destroy(seed in any::<u64>(), k in 0usize..8) {
        let sample = sample_form(&mut rng(seed), Family::E3[k]).unwrap();
        let r = rank(sample.map.action());
        prop_assert!([1, 2, 3, 4, 5, 9].contains(&r));
        if r > 1 && annihilated_vector(&sample.map, &cfg()).is_none() {
            prop_assert!(fixed_rank_one_projection(&sample.map, &cfg()).is_some());
        }
        prop_assert_eq!(classify_e3(&sample.map, &cfg()).unwrap().family, sample.family);
    }
}

#[test]
fn transpose_is_positive_but_not_cp() {
    let t = Superoperator::transpose_map(2);
    assert!(!is_completely_positive(&t, &cfg()).unwrap().completely_positive);
    let mut g = rng(1);
    for _ in 0..20 {
        let d = random_density(&mut g, 2);
        assert!(min_eig(&t.apply(&d).unwrap()) > -1e-12);
    }
}
