//! The regression corpus: map documents, a manifest of expected verdicts, and
//! seeded generate-and-classify cases.

use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use qmap_core::classify::{classify, classify_unital_qpos_m2};
use qmap_core::random::{rng_from_seed, sample_form};
use qmap_core::{Family, ToleranceConfig};

use crate::commands::{parse_unitary, run_verb, CornerSpec, Verb};
use crate::description::{emit_map, parse_map, MapDescription};
use crate::report::{ConfigEcho, TOOL_VERSION};

macro_rules! embedded {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../corpus/", $name)))),*]
    };
}

static EMBEDDED: &[(&str, &str)] = embedded![
    "manifest.json",
    "phi_r_1.05.json",
    "phi_r_1.1.json",
    "phi_r_1.2.json",
    "phi_r_1.3.json",
    "phi_r_1.4.json",
    "sign_flip.json",
    "rank_three.json",
    "transpose_m2.json",
    "dephasing_kraus.json",
    "identity_m2.json",
    "state_m2.json",
    "e3_form_ii.json",
    "e3_state.json",
    "m2_rank2.json",
    "m2_rank2_sub.json",
    "m2_rank2_rotated.json",
    "qpure_m2.json",
    "diagonal_schur_corner.json",
    "nonfaithful_phi.json",
    "nonfaithful_gamma.json",
    "identity_m1.json",
    "flip_unitary.json",
];

#[derive(Debug, Clone)]
pub enum Source {
    Embedded,
    Dir(PathBuf),
}

impl Source {
    pub fn read(&self, name: &str) -> Result<String, String> {
        match self {
            Source::Embedded => EMBEDDED
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, text)| text.to_string())
                .ok_or_else(|| format!("{name}: not in the embedded corpus")),
            Source::Dir(dir) => {
                let path: &Path = &dir.join(name);
                std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub cases: Vec<Case>,
    pub generated: Generated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generated {
    pub draws: usize,
    pub tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub name: String,
    pub verb: String,
    pub inputs: Vec<String>,
    #[serde(default)]
    pub flip: Option<String>,
    #[serde(default)]
    pub split: Option<usize>,
    #[serde(default)]
    pub exit: i32,
    #[serde(default)]
    pub expect: Vec<Expectation>,
}

/// A check on the JSON report at a JSON pointer.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub pointer: String,
    #[serde(default)]
    pub equals: Option<Value>,
    #[serde(default)]
    pub approx: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
}

impl Expectation {
    fn check(&self, report: &Value) -> Result<(), String> {
        let found = report.pointer(&self.pointer).ok_or_else(|| format!("{}: missing", self.pointer))?;
        if let Some(want) = &self.equals {
            if found != want {
                return Err(format!("{}: expected {want}, got {found}", self.pointer));
            }
        }
        if let Some(want) = self.approx {
            let tol = self.tol.unwrap_or(1e-6);
            let got = found.as_f64().ok_or_else(|| format!("{}: expected a number, got {found}", self.pointer))?;
            if (got - want).abs() > tol {
                return Err(format!("{}: expected {want} ± {tol:e}, got {got}", self.pointer));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub tool_version: String,
    pub seed: u64,
    pub config_echo: ConfigEcho,
    pub cases: Vec<CaseResult>,
    pub passed: usize,
    pub failed: usize,
}

impl CorpusReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for c in &self.cases {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            if c.detail.is_empty() {
                out.push_str(&format!("{tag} {}\n", c.name));
            } else {
                out.push_str(&format!("{tag} {}: {}\n", c.name, c.detail));
            }
        }
        out.push_str(&format!("corpus: {} passed, {} failed (seed {})\n", self.passed, self.failed, self.seed));
        out
    }
}

fn load_doc(src: &Source, name: &str) -> Result<MapDescription, String> {
    let text = src.read(name)?;
    parse_map(&text).map_err(|e| format!("{name}: {e}"))
}

fn round_trip(src: &Source, name: &str) -> Result<(), String> {
    let first = load_doc(src, name)?;
    let emitted = emit_map(&first);
    let second = parse_map(&emitted).map_err(|e| format!("{name}: re-parse failed: {e}"))?;
    if second != first {
        return Err(format!("{name}: parse/emit/parse changed the description"));
    }
    if emit_map(&second) != emitted {
        return Err(format!("{name}: emitted text is not stable"));
    }
    Ok(())
}

fn run_case(src: &Source, case: &Case, cfg: &ToleranceConfig) -> Result<(), String> {
    let verb = match case.verb.as_str() {
        "analyze" => Verb::Analyze,
        "classify" => Verb::Classify,
        "limit" => Verb::Limit,
        "dominates" => Verb::Dominates,
        "witness" => Verb::Witness,
        "corner" => Verb::Corner(match (&case.flip, case.split) {
            (None, None) => CornerSpec::Blocks,
            (Some(f), None) => CornerSpec::Flip(parse_unitary(&src.read(f)?).map_err(|e| format!("{f}: {e}"))?),
            (None, Some(n)) => CornerSpec::Split(n),
            _ => return Err("give at most one of flip and split".into()),
        }),
        other => return Err(format!("unknown verb '{other}'")),
    };
    let inputs = case.inputs.iter().map(|n| load_doc(src, n)).collect::<Result<Vec<_>, _>>()?;
    let report = run_verb(&verb, &inputs, cfg, None).map_err(|e| e.to_string())?;
    let exit = if report.has_numeric_failure() { 2 } else { 0 };
    if exit != case.exit {
        return Err(format!("exit code {exit}, expected {}", case.exit));
    }
    let value = serde_json::to_value(&report).map_err(|e| e.to_string())?;
    let errors: Vec<String> = case.expect.iter().filter_map(|e| e.check(&value).err()).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors.join("; "))
    }
}

fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (None, _) => true,
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        (Some(_), None) => false,
    }
}

fn close_vec(a: &Option<Vec<f64>>, b: &Option<Vec<f64>>, tol: f64) -> bool {
    match (a, b) {
        (None, _) => true,
        (Some(x), Some(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| (p - q).abs() <= tol),
        (Some(_), None) => false,
    }
}

/// Draws a conjugated canonical form, sends it through the action-matrix
/// document format and checks the classifier recovers family and parameters.
fn generated_case(rng: &mut ChaCha8Rng, family: Family, tol: f64, cfg: &ToleranceConfig) -> Result<(), String> {
    let sample = sample_form(rng, family).map_err(|e| e.to_string())?;
    let text = emit_map(&MapDescription::action_matrix(&sample.map, family.as_str()));
    let phi = parse_map(&text).and_then(|d| d.superoperator()).map_err(|e| e.to_string())?;
    let form = if Family::M2.contains(&family) {
        classify_unital_qpos_m2(&phi, cfg)
    } else {
        classify(&phi, cfg)
    }
    .map_err(|e| e.to_string())?;
    if form.family != family {
        return Err(format!("classified as {}", form.family));
    }
    let (want, got) = (&sample.params, &form.params);
    if !(close(want.lambda, got.lambda, tol)
        && close(want.lambda_prime, got.lambda_prime, tol)
        && close_vec(&want.weights, &got.weights, tol)
        && close_vec(&want.qpure_lambdas, &got.qpure_lambdas, tol))
    {
        return Err(format!("parameters {:?} recovered as {:?}", want, got));
    }
    if form.round_trip_residual > 1e-8 {
        return Err(format!("round trip residual {:.3e}", form.round_trip_residual));
    }
    Ok(())
}

pub fn verify(src: &Source, cfg: &ToleranceConfig, seed: u64) -> Result<CorpusReport, String> {
    let manifest: Manifest =
        serde_json::from_str(&src.read("manifest.json")?).map_err(|e| format!("manifest.json: {e}"))?;
    let mut cases = Vec::new();
    let mut push = |name: String, r: Result<(), String>| {
        let (passed, detail) = match r {
            Ok(()) => (true, String::new()),
            Err(e) => (false, e),
        };
        cases.push(CaseResult { name, passed, detail });
    };

    let mut docs: Vec<&String> = manifest
        .cases
        .iter()
        .flat_map(|c| c.inputs.iter())
        .collect();
    docs.sort();
    docs.dedup();
    for name in docs {
        push(format!("round trip {name}"), round_trip(src, name));
    }
    for verb in Verb::NAMES {
        let covered = manifest.cases.iter().any(|c| c.verb == verb);
        push(
            format!("coverage {verb}"),
            if covered { Ok(()) } else { Err("no corpus case uses this verb".into()) },
        );
    }
    for case in &manifest.cases {
        push(case.name.clone(), run_case(src, case, cfg));
    }
    let mut rng = rng_from_seed(seed);
    for family in Family::ALL {
        for k in 0..manifest.generated.draws {
            push(
                format!("generated {} #{k}", family.as_str()),
                generated_case(&mut rng, family, manifest.generated.tol, cfg),
            );
        }
    }
    let passed = cases.iter().filter(|c| c.passed).count();
    Ok(CorpusReport {
        tool_version: TOOL_VERSION.into(),
        seed,
        config_echo: cfg.into(),
        failed: cases.len() - passed,
        passed,
        cases,
    })
}
