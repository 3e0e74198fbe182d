//! Verb implementations shared by the command line and the corpus runner.

use serde::Deserialize;

use qmap_core::classify::classify;
use qmap_core::corners::{flip_corner, hypermax_refutation_search, is_corner, is_q_corner, limit_corner};
use qmap_core::limits::{annihilator_compression_witness, limit_map, q_dominates, rank2_m2_subordinate_witness};
use qmap_core::resolvent::{certify_q_positive, has_no_negative_eigenvalues, q_threshold, spectrum};
use qmap_core::superop::{conjugate_map, is_completely_positive};
use qmap_core::{CMatrix, CornerProblem, Family, Superoperator, ToleranceConfig};

use crate::description::{from_json_matrix, to_json_matrix, BuiltMap, JsonMatrix, MapDescription, SchemaError};
use crate::report::*;

#[derive(Debug, Clone, PartialEq)]
pub enum CornerSpec {
    /// Three inputs: φ, γ (a rectangular action matrix) and ψ.
    Blocks,
    /// One input φ and a unitary U; γ(A) = φ(AU*)U.
    Flip(CMatrix),
    /// One input Υ on M_{n+k}, split after the first `n` coordinates.
    Split(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verb {
    Analyze,
    Classify,
    Limit,
    Dominates,
    Corner(CornerSpec),
    Witness,
}

impl Verb {
    pub fn name(&self) -> &'static str {
        match self {
            Verb::Analyze => "analyze",
            Verb::Classify => "classify",
            Verb::Limit => "limit",
            Verb::Dominates => "dominates",
            Verb::Corner(_) => "corner",
            Verb::Witness => "witness",
        }
    }

    pub const NAMES: [&'static str; 6] = ["analyze", "classify", "limit", "dominates", "corner", "witness"];
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitaryDoc {
    unitary: JsonMatrix,
    #[allow(dead_code)]
    #[serde(default)]
    label: String,
}

/// A flip unitary document: `{"unitary": [[[re, im], ...], ...]}`.
pub fn parse_unitary(text: &str) -> Result<CMatrix, SchemaError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| SchemaError::new("$", format!("invalid JSON: {e}")))?;
    let doc: UnitaryDoc = serde_path_to_error::deserialize(&value).map_err(|e| {
        let p = e.path().to_string();
        SchemaError::new(if p == "." { "$".into() } else { p }, e.into_inner().to_string())
    })?;
    let n = doc.unitary.len();
    let u = from_json_matrix("unitary", &doc.unitary, Some(n), Some(n))?;
    qmap_core::linalg::check_unitary(&u, 1e-8).map_err(|e| SchemaError::new("unitary", e.to_string()))?;
    Ok(u)
}

pub fn label_of(desc: &MapDescription) -> String {
    if desc.label.is_empty() {
        format!("{} on M_{}", desc.kind, desc.n)
    } else {
        desc.label.clone()
    }
}

fn arity(verb: &Verb, inputs: &[MapDescription], want: usize) -> Result<(), SchemaError> {
    if inputs.len() != want {
        return Err(SchemaError::new(
            "inputs",
            format!("{} takes {want} input(s), got {}", verb.name(), inputs.len()),
        ));
    }
    Ok(())
}

fn square(desc: &MapDescription, which: usize) -> Result<Superoperator, SchemaError> {
    desc.superoperator().map_err(|e| SchemaError::new(format!("inputs[{which}].{}", e.path), e.message))
}

fn problem_err(e: qmap_core::Error) -> SchemaError {
    SchemaError::new("inputs", e.to_string())
}

/// Runs one verb. Schema and arity problems are errors; numerical failures are
/// recorded inside the report.
pub fn run_verb(
    verb: &Verb,
    inputs: &[MapDescription],
    cfg: &ToleranceConfig,
    seed: Option<u64>,
) -> Result<AnalysisReport, SchemaError> {
    let mut verdicts = Verdicts::default();
    match verb {
        Verb::Analyze => {
            arity(verb, inputs, 1)?;
            analyze(&square(&inputs[0], 0)?, cfg, &mut verdicts);
        }
        Verb::Classify => {
            arity(verb, inputs, 1)?;
            let phi = square(&inputs[0], 0)?;
            verdicts.classification = Some(Outcome::from_result(classify(&phi, cfg).map(|f| (&f).into())));
        }
        Verb::Limit => {
            arity(verb, inputs, 1)?;
            let phi = square(&inputs[0], 0)?;
            let tol = cfg.identity_tol();
            verdicts.limit_properties =
                Some(Outcome::from_result(limit_map(&phi, cfg).map(|r| LimitPropertiesReport::new(&r, tol))));
        }
        Verb::Dominates => {
            arity(verb, inputs, 2)?;
            let (phi, psi) = (square(&inputs[0], 0)?, square(&inputs[1], 1)?);
            if phi.n() != psi.n() {
                return Err(SchemaError::new(
                    "inputs[1].n",
                    format!("dominance compares maps on the same M_n, got {} and {}", phi.n(), psi.n()),
                ));
            }
            verdicts.dominance = Some(Outcome::from_result(q_dominates(&phi, &psi, cfg).map(|v| (&v).into())));
        }
        Verb::Witness => {
            arity(verb, inputs, 1)?;
            verdicts.purity_refutations = Some(witness(&square(&inputs[0], 0)?, cfg));
        }
        Verb::Corner(spec) => {
            let problem = corner_problem(spec, inputs)?;
            verdicts.corner = Some(Outcome::Computed(corner(&problem, cfg)));
        }
    }
    let labels: Vec<String> = inputs.iter().map(label_of).collect();
    Ok(AnalysisReport {
        tool_version: TOOL_VERSION.into(),
        command: verb.name().into(),
        input_label: labels.join(", "),
        seed,
        config_echo: cfg.into(),
        verdicts,
    })
}

fn analyze(phi: &Superoperator, cfg: &ToleranceConfig, v: &mut Verdicts) {
    v.cp = Some(Outcome::from_result(is_completely_positive(phi, cfg).map(|c| CpReport {
        completely_positive: c.completely_positive,
        min_eigenvalue: c.min_eigenvalue,
        floor: c.floor,
        hermiticity_defect: c.hermiticity_defect,
    })));
    v.eigencheck = Some(Outcome::Computed(EigenReport {
        no_negative_eigenvalues: has_no_negative_eigenvalues(phi, cfg),
        spectrum: spectrum(phi).iter().map(|z| [z.re, z.im]).collect(),
    }));
    v.q_positivity = Some(Outcome::Computed((&certify_q_positive(phi, cfg)).into()));
    v.q_threshold = Some(Outcome::from_result(q_threshold(phi, cfg).map(|threshold| ThresholdReport { threshold })));
}

fn witness(phi: &Superoperator, cfg: &ToleranceConfig) -> Outcome<PurityReport> {
    match phi.n() {
        2 => m2_witness(phi, cfg),
        3 => Outcome::Computed(match annihilator_compression_witness(phi, cfg) {
            Some((compressed, rep)) => {
                let ok = rep.passes(cfg.identity_tol());
                PurityReport {
                    method: "annihilator_compression".into(),
                    detail: "compression by the complement of an annihilated rank-one projection".into(),
                    certificates_pass: Some(ok),
                    witness_map: Some(to_json_matrix(compressed.action())),
                    witness_rank: Some(compressed.rank(cfg.rank_tol)),
                    input_rank: Some(phi.rank(cfg.rank_tol)),
                    dominance: Some((&rep.dominance).into()),
                    witness_q_positive: Some((&rep.compressed_q_positive).into()),
                    projection: Some(to_json_matrix(&rep.projection)),
                    min_discrepancy: Some(rep.min_discrepancy),
                }
            }
            None => PurityReport::none("the map annihilates no rank-one projection"),
        }),
        n => Outcome::Computed(PurityReport::none(format!("no refutation is implemented on M_{n}"))),
    }
}

fn m2_witness(phi: &Superoperator, cfg: &ToleranceConfig) -> Outcome<PurityReport> {
    let form = match classify(phi, cfg) {
        Ok(f) => f,
        Err(e) => return Outcome::Failed(Failure::from(&e)),
    };
    let (lambda, lambda_p) = match form.family {
        Family::M2Rank2 => (form.params.lambda.unwrap_or(f64::NAN), form.params.lambda_prime.unwrap_or(f64::NAN)),
        Family::E2Diagonal => (1.0, 0.0),
        f => return Outcome::Computed(PurityReport::none(format!("no refutation applies to class {f}"))),
    };
    let result = rank2_m2_subordinate_witness(lambda, lambda_p)
        .and_then(|(_, sub)| conjugate_map(&sub, &form.conjugator))
        .and_then(|sub| q_dominates(phi, &sub, cfg).map(|d| (sub, d)));
    Outcome::from_result(result.map(|(sub, dom)| {
        let qpos = certify_q_positive(&sub, cfg);
        let (rank, input_rank) = (sub.rank(cfg.rank_tol), phi.rank(cfg.rank_tol));
        let ok = dom.tag == qmap_core::VerdictTag::CertifiedSampled
            && qpos.tag == qmap_core::VerdictTag::CertifiedSampled
            && rank < input_rank;
        PurityReport {
            method: "m2_rank2_subordinate".into(),
            detail: format!("rank-one map below the rank-two form with λ={lambda:.6}, λ′={lambda_p:.6}"),
            certificates_pass: Some(ok),
            witness_map: Some(to_json_matrix(sub.action())),
            witness_rank: Some(rank),
            input_rank: Some(input_rank),
            dominance: Some((&dom).into()),
            witness_q_positive: Some((&qpos).into()),
            projection: None,
            min_discrepancy: None,
        }
    }))
}

fn corner_problem(spec: &CornerSpec, inputs: &[MapDescription]) -> Result<CornerProblem, SchemaError> {
    let verb = Verb::Corner(spec.clone());
    match spec {
        CornerSpec::Blocks => {
            arity(&verb, inputs, 3)?;
            let phi = square(&inputs[0], 0)?;
            let gamma = match inputs[1].build().map_err(|e| SchemaError::new(format!("inputs[1].{}", e.path), e.message))? {
                BuiltMap::Rectangular(g) => g,
                BuiltMap::Square(s) => {
                    let n = s.n();
                    qmap_core::RectangularMap::new((n, n), (n, n), s.into_action()).map_err(problem_err)?
                }
            };
            let psi = square(&inputs[2], 2)?;
            CornerProblem::new(phi, gamma, psi).map_err(problem_err)
        }
        CornerSpec::Flip(u) => {
            arity(&verb, inputs, 1)?;
            flip_corner(&square(&inputs[0], 0)?, u).map_err(problem_err)
        }
        CornerSpec::Split(n) => {
            arity(&verb, inputs, 1)?;
            CornerProblem::from_block_map(square(&inputs[0], 0)?, *n).map_err(problem_err)
        }
    }
}

fn corner(p: &CornerProblem, cfg: &ToleranceConfig) -> CornerReport {
    let hypermax = hypermax_refutation_search(p, cfg).map(|w| {
        let valid = w.is_valid(p, cfg);
        HypermaxReport::new(&w, valid)
    });
    CornerReport {
        n: p.n(),
        k: p.k(),
        is_corner: is_corner(p, cfg),
        q_corner: (&is_q_corner(p, cfg)).into(),
        limit_corner: Outcome::from_result(
            limit_corner(p, cfg).map(|s| LimitCornerReport { norm: s.norm(), rank: s.rank(cfg.rank_tol) }),
        ),
        hypermax,
    }
}
