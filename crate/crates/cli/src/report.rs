//! Analysis reports and their JSON and text renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use qmap_core::{
    CanonicalForm, DominanceVerdict, Family, GridMeta, HypermaxWitness, LimitCheck, LimitReport,
    QPositivityVerdict, ToleranceConfig,
};

use crate::description::{to_json_matrix, JsonMatrix};

pub const TOOL_VERSION: &str = concat!("qmap ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigEcho {
    pub eig_floor: f64,
    pub rank_tol: f64,
    pub grid_points: usize,
    pub refine_depth: usize,
    pub bisect_tol: f64,
    pub t_cap: f64,
}

impl From<&ToleranceConfig> for ConfigEcho {
    fn from(c: &ToleranceConfig) -> Self {
        ConfigEcho {
            eig_floor: c.eig_floor,
            rank_tol: c.rank_tol,
            grid_points: c.grid_points,
            refine_depth: c.refine_depth,
            bisect_tol: c.bisect_tol,
            t_cap: c.t_cap,
        }
    }
}

/// A verdict that was attempted but raised an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Failure {
    pub error: String,
    pub error_kind: String,
    /// Set for numerical breakdowns (singular systems, unverifiable fits), which make the run exit 2.
    pub numeric: bool,
}

impl From<&qmap_core::Error> for Failure {
    fn from(e: &qmap_core::Error) -> Self {
        use qmap_core::Error as E;
        let kind = match e {
            E::DimensionMismatch(_) => "dimension_mismatch",
            E::NotUnitary(_) => "not_unitary",
            E::NotHermiticityPreserving(_) => "not_hermiticity_preserving",
            E::NotCompletelyPositive(_) => "not_completely_positive",
            E::Singular { .. } => "singular",
            E::LimitHypothesisViolated(_) => "limit_hypothesis_violated",
            E::NotIdempotentUcp(_) => "not_idempotent_ucp",
            E::NotUnital(_) => "not_unital",
            E::RankThree => "rank_three",
            E::UnexpectedRank { .. } => "unexpected_rank",
            E::NotInvertible { .. } => "not_invertible",
            E::NotQPositive(_) => "not_q_positive",
            E::OutOfRange(_) => "out_of_range",
            E::Inconsistent(_) => "inconsistent",
            E::Inconclusive { .. } => "inconclusive",
        };
        let numeric = matches!(e, E::Singular { .. } | E::NotInvertible { .. } | E::Inconclusive { .. });
        Failure { error: e.to_string(), error_kind: kind.to_string(), numeric }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcome<T> {
    Failed(Failure),
    Computed(T),
}

impl<T> Outcome<T> {
    pub fn from_result(r: qmap_core::Result<T>) -> Self {
        match r {
            Ok(v) => Outcome::Computed(v),
            Err(e) => Outcome::Failed(Failure::from(&e)),
        }
    }

    pub fn computed(&self) -> Option<&T> {
        match self {
            Outcome::Computed(v) => Some(v),
            Outcome::Failed(_) => None,
        }
    }

    pub fn failure(&self) -> Option<&Failure> {
        match self {
            Outcome::Failed(f) => Some(f),
            Outcome::Computed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpReport {
    pub completely_positive: bool,
    pub min_eigenvalue: f64,
    pub floor: f64,
    pub hermiticity_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenReport {
    pub no_negative_eigenvalues: bool,
    pub spectrum: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitCheckReport {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_eigenvalue: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl From<&LimitCheck> for LimitCheckReport {
    fn from(c: &LimitCheck) -> Self {
        match c {
            LimitCheck::CompletelyPositive => {
                LimitCheckReport { status: "completely_positive".into(), min_eigenvalue: None, reason: None }
            }
            LimitCheck::NotCompletelyPositive { min_eigenvalue } => LimitCheckReport {
                status: "not_completely_positive".into(),
                min_eigenvalue: Some(*min_eigenvalue),
                reason: None,
            },
            LimitCheck::Unavailable(why) => {
                LimitCheckReport { status: "unavailable".into(), min_eigenvalue: None, reason: Some(why.clone()) }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridReport {
    pub grid_points: usize,
    pub refine_depth: usize,
    pub t_cap: f64,
    pub refined_points: usize,
    pub extended_t: Vec<f64>,
    pub skipped_t: Vec<f64>,
}

impl From<&GridMeta> for GridReport {
    fn from(g: &GridMeta) -> Self {
        GridReport {
            grid_points: g.grid_points,
            refine_depth: g.refine_depth,
            t_cap: g.t_cap,
            refined_points: g.refined_points,
            extended_t: g.extended_t.clone(),
            skipped_t: g.skipped_t.clone(),
        }
    }
}

/// Sampled positivity along the resolvent (or dominance) family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledVerdict {
    pub tag: String,
    pub witness_t: Option<f64>,
    pub eig_check: bool,
    pub limit_check: LimitCheckReport,
    pub grid: GridReport,
    /// Rows of (t, min eigenvalue, floor).
    pub min_eig_trace: Vec<[f64; 3]>,
}

fn trace_rows(trace: &[qmap_core::MinEigSample]) -> Vec<[f64; 3]> {
    trace.iter().map(|s| [s.t, s.min_eig, s.floor]).collect()
}

impl From<&QPositivityVerdict> for SampledVerdict {
    fn from(v: &QPositivityVerdict) -> Self {
        SampledVerdict {
            tag: v.tag.as_str().into(),
            witness_t: v.witness_t,
            eig_check: v.eig_check,
            limit_check: (&v.limit_check).into(),
            grid: (&v.grid_meta).into(),
            min_eig_trace: trace_rows(&v.min_eig_trace),
        }
    }
}

impl From<&DominanceVerdict> for SampledVerdict {
    fn from(v: &DominanceVerdict) -> Self {
        SampledVerdict {
            tag: v.tag.as_str().into(),
            witness_t: v.witness_t,
            eig_check: v.eig_check,
            limit_check: (&v.limit_check).into(),
            grid: (&v.grid_meta).into(),
            min_eig_trace: trace_rows(&v.min_eig_trace),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdReport {
    /// Largest t with the resolvent completely positive; null when none was found below the cap.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorReport {
    pub y: JsonMatrix,
    pub residual: f64,
    pub skew_defect: f64,
    pub trace_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationReport {
    pub family: String,
    pub display: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qpure_lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorReport>,
    pub conjugator: JsonMatrix,
    pub round_trip_residual: f64,
}

fn list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3}")).collect();
    format!("({})", parts.join(", "))
}

fn roman(f: Family) -> Option<&'static str> {
    Some(match f {
        Family::E3I => "I",
        Family::E3II => "II",
        Family::E3III => "III",
        Family::E3IV => "IV",
        Family::E3V => "V",
        Family::E3VI => "VI",
        Family::E3VII => "VII",
        _ => return None,
    })
}

/// Human-readable name of a canonical form, e.g. "E₃ form (II), λ=0.400".
pub fn display_name(form: &CanonicalForm) -> String {
    let p = &form.params;
    let weights = p.weights.as_deref().map(list).unwrap_or_default();
    match form.family {
        Family::E2State => format!("E₂ state map, weights {weights}"),
        Family::E2Diagonal => "E₂ diagonal projection".into(),
        Family::E2Identity => "E₂ identity".into(),
        Family::E3State => format!("E₃ state map, weights {weights}"),
        Family::M2Rank1 => format!("M₂ rank-one state map, weights {weights}"),
        Family::M2Rank2 => format!(
            "M₂ rank-two form, λ={:.3}, λ′={:.3}",
            p.lambda.unwrap_or(f64::NAN),
            p.lambda_prime.unwrap_or(f64::NAN)
        ),
        Family::M2Invertible => match &p.qpure_lambdas {
            Some(l) => format!("M₂ invertible q-pure form, λ={}", list(l)),
            None => "M₂ invertible map, generator not of q-pure form".into(),
        },
        f => {
            let base = format!("E₃ form ({})", roman(f).unwrap_or("?"));
            match p.lambda {
                Some(l) => format!("{base}, λ={l:.3}"),
                None => base,
            }
        }
    }
}

impl From<&CanonicalForm> for ClassificationReport {
    fn from(form: &CanonicalForm) -> Self {
        let p = &form.params;
        ClassificationReport {
            family: form.family.as_str().into(),
            display: display_name(form),
            lambda: p.lambda,
            lambda_prime: p.lambda_prime,
            weights: p.weights.clone(),
            density: p.density.as_ref().map(to_json_matrix),
            qpure_lambdas: p.qpure_lambdas.clone(),
            generator: p.generator.as_ref().map(|g| GeneratorReport {
                y: to_json_matrix(&g.y),
                residual: g.residual,
                skew_defect: g.skew_defect,
                trace_defect: g.trace_defect,
            }),
            conjugator: to_json_matrix(&form.conjugator),
            round_trip_residual: form.round_trip_residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualsReport {
    pub idempotency: f64,
    pub left_intertwining: f64,
    pub right_intertwining: f64,
    pub range: f64,
    pub nullspace: f64,
    pub norm: f64,
    pub completely_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitPropertiesReport {
    pub method: String,
    pub cross_check: f64,
    pub residuals: ResidualsReport,
    pub max_residual: f64,
    pub passes: bool,
    pub limit: JsonMatrix,
}

impl LimitPropertiesReport {
    pub fn new(r: &LimitReport, tol: f64) -> Self {
        let p = &r.property_residuals;
        LimitPropertiesReport {
            method: r.method.as_str().into(),
            cross_check: r.cross_check,
            residuals: ResidualsReport {
                idempotency: p.idempotency,
                left_intertwining: p.left_intertwining,
                right_intertwining: p.right_intertwining,
                range: p.range,
                nullspace: p.nullspace,
                norm: p.norm,
                completely_positive: p.completely_positive,
            },
            max_residual: p.max(),
            passes: p.passes(tol),
            limit: to_json_matrix(r.limit.action()),
        }
    }
}

/// A certificate that the input is not q-pure, or why none applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PurityReport {
    /// "m2_rank2_subordinate", "annihilator_compression" or "none".
    pub method: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificates_pass: Option<bool>,
    /// Action matrix of the smaller map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_map: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominance: Option<SampledVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_q_positive: Option<SampledVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<JsonMatrix>,
    /// Smallest distance from the witness to the subordinates of the input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_discrepancy: Option<f64>,
}

impl PurityReport {
    pub fn none(detail: impl Into<String>) -> Self {
        PurityReport {
            method: "none".into(),
            detail: detail.into(),
            certificates_pass: None,
            witness_map: None,
            witness_rank: None,
            input_rank: None,
            dominance: None,
            witness_q_positive: None,
            projection: None,
            min_discrepancy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitCornerReport {
    pub norm: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypermaxReport {
    /// Retained diagonal units, e.g. "e11+e33+e44".
    pub compression: String,
    /// Zero-based indices dropped from the identity.
    pub removed: Vec<usize>,
    pub inequality_evidence: f64,
    pub corner_defect: f64,
    pub dominance: String,
    pub compressed_q_positive: String,
    pub valid: bool,
}

/// "e11+e33+e44" for the diagonal projection of size `m` without `removed`.
pub fn compression_label(m: usize, removed: &[usize]) -> String {
    (0..m)
        .filter(|j| !removed.contains(j))
        .map(|j| format!("e{0}{0}", j + 1))
        .collect::<Vec<_>>()
        .join("+")
}

impl HypermaxReport {
    pub fn new(w: &HypermaxWitness, valid: bool) -> Self {
        HypermaxReport {
            compression: compression_label(w.compression.nrows(), &w.removed),
            removed: w.removed.clone(),
            inequality_evidence: w.inequality_evidence,
            corner_defect: w.corner_defect,
            dominance: w.dominance.tag.as_str().into(),
            compressed_q_positive: w.compressed_q_positive.tag.as_str().into(),
            valid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CornerReport {
    pub n: usize,
    pub k: usize,
    pub is_corner: bool,
    pub q_corner: SampledVerdict,
    pub limit_corner: Outcome<LimitCornerReport>,
    /// Null when the search found no compression witness.
    pub hypermax: Option<HypermaxReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verdicts {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cp: Option<Outcome<CpReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigencheck: Option<Outcome<EigenReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_positivity: Option<Outcome<SampledVerdict>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_threshold: Option<Outcome<ThresholdReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<Outcome<ClassificationReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_properties: Option<Outcome<LimitPropertiesReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dominance: Option<Outcome<SampledVerdict>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purity_refutations: Option<Outcome<PurityReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corner: Option<Outcome<CornerReport>>,
}

impl Verdicts {
    /// Failures in the order the verdicts are listed.
    pub fn failures(&self) -> Vec<(&'static str, &Failure)> {
        let mut out = Vec::new();
        macro_rules! collect {
            ($($name:ident),*) => {
                $(if let Some(f) = self.$name.as_ref().and_then(|o| o.failure()) {
                    out.push((stringify!($name), f));
                })*
            };
        }
        collect!(cp, eigencheck, q_positivity, q_threshold, classification, limit_properties, dominance,
            purity_refutations, corner);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisReport {
    pub tool_version: String,
    pub command: String,
    pub input_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub config_echo: ConfigEcho,
    pub verdicts: Verdicts,
}

impl AnalysisReport {
    pub fn has_numeric_failure(&self) -> bool {
        self.verdicts.failures().iter().any(|(_, f)| f.numeric)
    }
}

pub fn emit_report(r: &AnalysisReport, format: Format) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(r).expect("reports serialize") + "\n",
        Format::Text => render_text(r),
    }
}

pub fn parse_report(text: &str) -> Result<AnalysisReport, serde_json::Error> {
    serde_json::from_str(text)
}

fn fmt_t(t: f64) -> String {
    if t != 0.0 && t.abs() < 1e-3 {
        format!("{t:.3e}")
    } else {
        format!("{t:.6}")
    }
}

fn opt_t(t: Option<f64>) -> String {
    t.map(fmt_t).unwrap_or_else(|| "none".into())
}

fn sampled_line(v: &SampledVerdict) -> String {
    let mut s = v.tag.clone();
    if let Some(t) = v.witness_t {
        let _ = write!(s, " at t={}", fmt_t(t));
    }
    let _ = write!(
        s,
        " ({} samples, limit check {}, eigencheck {})",
        v.min_eig_trace.len(),
        v.limit_check.status,
        if v.eig_check { "passed" } else { "failed" }
    );
    s
}

fn line<T>(out: &mut String, name: &str, o: &Option<Outcome<T>>, f: impl Fn(&T) -> String) {
    match o {
        None => {}
        Some(Outcome::Computed(v)) => {
            let _ = writeln!(out, "{name}: {}", f(v));
        }
        Some(Outcome::Failed(e)) => {
            let _ = writeln!(out, "{name}: error [{}] {}", e.error_kind, e.error);
        }
    }
}

fn render_text(r: &AnalysisReport) -> String {
    let mut out = String::new();
    let c = &r.config_echo;
    let _ = writeln!(out, "{} {}: {}", r.tool_version, r.command, r.input_label);
    let _ = writeln!(
        out,
        "config: eig_floor={:e} rank_tol={:e} grid={} refine={} bisect_tol={:e} t_cap={:e}",
        c.eig_floor, c.rank_tol, c.grid_points, c.refine_depth, c.bisect_tol, c.t_cap
    );
    if let Some(seed) = r.seed {
        let _ = writeln!(out, "seed: {seed}");
    }
    let v = &r.verdicts;
    line(&mut out, "cp", &v.cp, |c| {
        format!(
            "{} (min Choi eigenvalue {:.3e}, floor {:.3e})",
            if c.completely_positive { "completely positive" } else { "not completely positive" },
            c.min_eigenvalue,
            c.floor
        )
    });
    line(&mut out, "eigencheck", &v.eigencheck, |e| {
        let spec: Vec<String> = e.spectrum.iter().map(|z| fmt_complex(z[0], z[1])).collect();
        format!(
            "{}; spectrum [{}]",
            if e.no_negative_eigenvalues { "no negative eigenvalues" } else { "negative eigenvalue present" },
            spec.join(", ")
        )
    });
    line(&mut out, "q_positivity", &v.q_positivity, sampled_line);
    line(&mut out, "q_threshold", &v.q_threshold, |t| opt_t(t.threshold));
    line(&mut out, "classification", &v.classification, |c| {
        format!("{} (round trip {:.1e})", c.display, c.round_trip_residual)
    });
    line(&mut out, "limit_properties", &v.limit_properties, |l| {
        format!(
            "{} method {}, max residual {:.3e}, cross check {:.3e}",
            if l.passes { "passed" } else { "failed" },
            l.method,
            l.max_residual,
            l.cross_check
        )
    });
    line(&mut out, "dominance", &v.dominance, sampled_line);
    line(&mut out, "purity_refutations", &v.purity_refutations, |p| {
        let mut s = format!("{}: {}", p.method, p.detail);
        if let Some(ok) = p.certificates_pass {
            let _ = write!(s, "; certificates {}", if ok { "pass" } else { "fail" });
        }
        s
    });
    line(&mut out, "corner", &v.corner, |c| {
        let mut s = format!(
            "n={} k={}, {}, q-corner {}",
            c.n,
            c.k,
            if c.is_corner { "corner" } else { "not a corner" },
            sampled_line(&c.q_corner)
        );
        match &c.hypermax {
            Some(h) => {
                let _ = write!(s, "; hypermax witness with compression {} (valid: {})", h.compression, h.valid);
            }
            None => s.push_str("; no hypermax witness"),
        }
        s
    });
    out
}

fn fmt_complex(re: f64, im: f64) -> String {
    if im.abs() < 1e-12 {
        format!("{re:.6}")
    } else if im < 0.0 {
        format!("{re:.6}-{:.6}i", -im)
    } else {
        format!("{re:.6}+{im:.6}i")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compression_labels() {
        assert_eq!(compression_label(4, &[1]), "e11+e33+e44");
        assert_eq!(compression_label(3, &[0]), "e22+e33");
        assert_eq!(compression_label(2, &[]), "e11+e22");
    }

    #[test]
    fn failed_and_computed_outcomes_round_trip() {
        let v = Verdicts {
            q_threshold: Some(Outcome::Computed(ThresholdReport { threshold: None })),
            cp: Some(Outcome::Failed(Failure::from(&qmap_core::Error::RankThree))),
            ..Default::default()
        };
        let text = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Verdicts>(&text).unwrap(), v);
    }

    #[test]
    fn numeric_failures_are_flagged() {
        let f = Failure::from(&qmap_core::Error::Singular { t: 1.0, cond: 1e17 });
        assert!(f.numeric);
        assert_eq!(f.error_kind, "singular");
        assert!(!Failure::from(&qmap_core::Error::RankThree).numeric);
    }
}
