//! Seeded generators for canonical forms, conjugated by Haar unitaries, and
//! for generic CP and hermiticity-preserving maps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::classify::{reconstruct, CanonicalParams, Family};
use crate::error::{Error, Result};
use crate::linalg::{self, r, CMatrix};
use crate::superop::{conjugate_map, superop_from_kraus, Superoperator};

/// A conjugated canonical form together with the parameters it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct FormSample {
    pub family: Family,
    /// Parameters in canonical representation (the classifier's tie-breaks applied).
    pub params: CanonicalParams,
    pub conjugator: CMatrix,
    pub map: Superoperator,
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sorted_weights<R: Rng + ?Sized>(rng: &mut R, n: usize, min: f64) -> Vec<f64> {
    loop {
        let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        w.sort_by(|a, b| b.total_cmp(a));
        if w[n - 1] > min {
            return w;
        }
    }
}

/// Parameters drawn inside the family's canonical domain.
pub fn sample_params<R: Rng + ?Sized>(rng: &mut R, family: Family) -> CanonicalParams {
    let lam = |l: f64| CanonicalParams { lambda: Some(l), ..Default::default() };
    match family {
        Family::E2State | Family::M2Rank1 => {
            let w = rng.random_range(0.5..=1.0);
            CanonicalParams { weights: Some(vec![w, 1.0 - w]), ..Default::default() }
        }
        Family::E3State => CanonicalParams { weights: Some(sorted_weights(rng, 3, 1e-3)), ..Default::default() },
        Family::E3I | Family::E3II | Family::E3III => lam(rng.random_range(0.5..=1.0)),
        Family::E3VI => lam(rng.random_range(0.5..=0.95)),
        Family::M2Rank2 => {
            let lp: f64 = rng.random_range(0.0..=0.9);
            let l: f64 = rng.random_range(lp + 0.05..=1.0);
            let (l, lp) = if l + lp < 1.0 { (1.0 - lp, 1.0 - l) } else { (l, lp) };
            CanonicalParams { lambda: Some(l), lambda_prime: Some(lp), ..Default::default() }
        }
        Family::M2Invertible => {
            let a: f64 = rng.random_range(-2.0..=2.0);
            CanonicalParams { qpure_lambdas: Some(vec![a.abs(), -a.abs()]), ..Default::default() }
        }
        Family::E2Diagonal | Family::E2Identity | Family::E3IV | Family::E3V | Family::E3VII => {
            CanonicalParams::default()
        }
    }
}

pub fn sample_form<R: Rng + ?Sized>(rng: &mut R, family: Family) -> Result<FormSample> {
    let params = sample_params(rng, family);
    let u = linalg::haar_unitary(rng, family.dim());
    let map = conjugate_map(&reconstruct(family, &params)?, &u)?;
    Ok(FormSample { family, params, conjugator: u, map })
}

/// A unital q-positive map on M₂ from one of the three classes, conjugated
/// by a Haar unitary.
pub fn random_unital_qpos_m2(seed: u64, class: Option<Family>) -> Result<Superoperator> {
    let mut rng = rng_from_seed(seed);
    sample_m2(&mut rng, class).map(|s| s.map)
}

pub fn sample_m2<R: Rng + ?Sized>(rng: &mut R, class: Option<Family>) -> Result<FormSample> {
    let family = match class {
        Some(f) if Family::M2.contains(&f) => f,
        Some(f) => return Err(Error::OutOfRange(format!("{f} is not a class of unital q-positive maps on M_2"))),
        None => Family::M2[rng.random_range(0..3)],
    };
    sample_form(rng, family)
}

/// Σ S_k A S_k* with `count` Gaussian Kraus operators.
pub fn random_cp_map<R: Rng + ?Sized>(rng: &mut R, n: usize, count: usize) -> Superoperator {
    let kraus: Vec<CMatrix> = (0..count)
        .map(|_| linalg::random_gaussian_matrix(rng, n, n) * r(1.0 / (n as f64).sqrt()))
        .collect();
    superop_from_kraus(n, &kraus).expect("square Kraus operators")
}

/// Σ ε_k S_k A S_k* with random signs; hermiticity-preserving, generically not CP.
pub fn random_hermiticity_preserving<R: Rng + ?Sized>(rng: &mut R, n: usize, count: usize) -> Superoperator {
    let mut total = Superoperator::zero(n);
    for k in 0..count {
        let s = linalg::random_gaussian_matrix(rng, n, n) * r(1.0 / (n as f64).sqrt());
        let term = superop_from_kraus(n, &[s]).expect("square Kraus operator");
        let sign = if k == 0 || rng.random_bool(0.5) { -1.0 } else { 1.0 };
        total = total.add(&term.scale(sign));
    }
    total
}
