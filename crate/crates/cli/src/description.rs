//! Map descriptions: the JSON documents the CLI reads.
//!
//! Complex entries are `[re, im]` pairs and matrices are arrays of rows.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use qmap_core::classify::{qpure_invertible_canonical, reconstruct};
use qmap_core::resolvent::phi_r_family;
use qmap_core::superop::{conjugate_map, schur_map, superop_from_kraus};
use qmap_core::{CMatrix, CanonicalParams, Family, RectangularMap, Superoperator};

pub type JsonMatrix = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl SchemaError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        SchemaError { path: path.into(), message: message.into() }
    }
}

pub fn to_json_matrix(m: &CMatrix) -> JsonMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

/// Checks a JSON matrix is `rows`×`cols` (either may be left open) and converts it.
pub fn from_json_matrix(
    path: &str,
    m: &JsonMatrix,
    rows: Option<usize>,
    cols: Option<usize>,
) -> Result<CMatrix, SchemaError> {
    if m.is_empty() {
        return Err(SchemaError::new(path, "matrix has no rows"));
    }
    if let Some(r) = rows {
        if m.len() != r {
            return Err(SchemaError::new(path, format!("expected {r} rows, got {}", m.len())));
        }
    }
    let width = cols.unwrap_or(m[0].len());
    if width == 0 {
        return Err(SchemaError::new(path, "matrix has no columns"));
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != width {
            return Err(SchemaError::new(
                format!("{path}[{i}]"),
                format!("expected {width} entries, got {}", row.len()),
            ));
        }
        for (j, z) in row.iter().enumerate() {
            if !z[0].is_finite() || !z[1].is_finite() {
                return Err(SchemaError::new(format!("{path}[{i}][{j}]"), "entry is not finite"));
            }
        }
    }
    Ok(CMatrix::from_fn(m.len(), width, |i, j| Complex64::new(m[i][j][0], m[i][j][1])))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    ActionMatrix,
    Kraus,
    Schur,
    StateMap,
    CanonicalForm,
    PhiR,
    QpureCanonical,
}

impl MapKind {
    pub const ALL: [MapKind; 7] = [
        MapKind::ActionMatrix,
        MapKind::Kraus,
        MapKind::Schur,
        MapKind::StateMap,
        MapKind::CanonicalForm,
        MapKind::PhiR,
        MapKind::QpureCanonical,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MapKind::ActionMatrix => "action_matrix",
            MapKind::Kraus => "kraus",
            MapKind::Schur => "schur",
            MapKind::StateMap => "state_map",
            MapKind::CanonicalForm => "canonical_form",
            MapKind::PhiR => "phi_r",
            MapKind::QpureCanonical => "qpure_canonical",
        }
    }
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MapKind {
    type Err = SchemaError;

    fn from_str(s: &str) -> Result<Self, SchemaError> {
        MapKind::ALL.iter().copied().find(|k| k.as_str() == s).ok_or_else(|| {
            let names: Vec<&str> = MapKind::ALL.iter().map(|k| k.as_str()).collect();
            SchemaError::new("kind", format!("unknown kind '{s}', expected one of {}", names.join(", ")))
        })
    }
}

/// The action matrix in the row-major matrix-unit basis. With `shape = [rows, cols]`
/// the map acts on rows×cols matrices instead of n×n ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionMatrixPayload {
    pub matrix: JsonMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrausPayload {
    pub operators: Vec<JsonMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchurPayload {
    pub mask: JsonMatrix,
}

/// A ↦ tr(DA)·I, from diagonal weights or a full density D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateMapPayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<JsonMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalFormPayload {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qpure_lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conjugator: Option<JsonMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiRPayload {
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpureCanonicalPayload {
    pub lambdas: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conjugator: Option<JsonMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Payload {
    ActionMatrix(ActionMatrixPayload),
    Kraus(KrausPayload),
    Schur(SchurPayload),
    StateMap(StateMapPayload),
    CanonicalForm(CanonicalFormPayload),
    PhiR(PhiRPayload),
    QpureCanonical(QpureCanonicalPayload),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapDescription {
    pub kind: MapKind,
    pub n: usize,
    pub payload: Payload,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub label: String,
}

/// What a description builds: a map on M_n, or a map between rectangular blocks.
#[derive(Debug, Clone)]
pub enum BuiltMap {
    Square(Superoperator),
    Rectangular(RectangularMap),
}

fn payload_from<T: DeserializeOwned>(v: &Value) -> Result<T, SchemaError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let inner = e.path().to_string();
        let path = if inner == "." { "payload".to_string() } else { format!("payload.{inner}") };
        SchemaError::new(path, e.into_inner().to_string())
    })
}

pub fn parse_map(text: &str) -> Result<MapDescription, SchemaError> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| SchemaError::new("$", format!("invalid JSON: {e}")))?;
    from_value(&value)
}

pub fn from_value(value: &Value) -> Result<MapDescription, SchemaError> {
    let obj = value.as_object().ok_or_else(|| SchemaError::new("$", "expected an object"))?;
    for key in obj.keys() {
        if !["kind", "n", "payload", "label"].contains(&key.as_str()) {
            return Err(SchemaError::new(key.clone(), "unknown field"));
        }
    }
    let kind: MapKind = obj
        .get("kind")
        .ok_or_else(|| SchemaError::new("kind", "missing field"))?
        .as_str()
        .ok_or_else(|| SchemaError::new("kind", "expected a string"))?
        .parse()?;
    let n = obj
        .get("n")
        .ok_or_else(|| SchemaError::new("n", "missing field"))?
        .as_u64()
        .ok_or_else(|| SchemaError::new("n", "expected a positive integer"))? as usize;
    if n == 0 {
        return Err(SchemaError::new("n", "dimension must be at least 1"));
    }
    let label = match obj.get("label") {
        None => String::new(),
        Some(l) => l.as_str().ok_or_else(|| SchemaError::new("label", "expected a string"))?.to_string(),
    };
    let raw = obj.get("payload").ok_or_else(|| SchemaError::new("payload", "missing field"))?;
    let payload = match kind {
        MapKind::ActionMatrix => Payload::ActionMatrix(payload_from(raw)?),
        MapKind::Kraus => Payload::Kraus(payload_from(raw)?),
        MapKind::Schur => Payload::Schur(payload_from(raw)?),
        MapKind::StateMap => Payload::StateMap(payload_from(raw)?),
        MapKind::CanonicalForm => Payload::CanonicalForm(payload_from(raw)?),
        MapKind::PhiR => Payload::PhiR(payload_from(raw)?),
        MapKind::QpureCanonical => Payload::QpureCanonical(payload_from(raw)?),
    };
    let desc = MapDescription { kind, n, payload, label };
    desc.build()?;
    Ok(desc)
}

pub fn emit_map(desc: &MapDescription) -> String {
    serde_json::to_string_pretty(desc).expect("descriptions serialize") + "\n"
}

fn core_err(path: &str, e: qmap_core::Error) -> SchemaError {
    SchemaError::new(path, e.to_string())
}

fn conjugator(path: &str, m: &Option<JsonMatrix>, n: usize) -> Result<Option<CMatrix>, SchemaError> {
    m.as_ref().map(|m| from_json_matrix(path, m, Some(n), Some(n))).transpose()
}

fn conjugated(phi: Superoperator, u: Option<CMatrix>, path: &str) -> Result<Superoperator, SchemaError> {
    match u {
        None => Ok(phi),
        Some(u) => conjugate_map(&phi, &u).map_err(|e| core_err(path, e)),
    }
}

fn weights_density(path: &str, w: &[f64], n: usize) -> Result<CMatrix, SchemaError> {
    if w.len() != n {
        return Err(SchemaError::new(path, format!("expected {n} weights, got {}", w.len())));
    }
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(SchemaError::new(path, "weights must be finite and nonnegative"));
    }
    Ok(CMatrix::from_diagonal(&qmap_core::CVector::from_iterator(
        n,
        w.iter().map(|&x| Complex64::new(x, 0.0)),
    )))
}

impl MapDescription {
    pub fn new(kind: MapKind, n: usize, payload: Payload, label: impl Into<String>) -> Self {
        MapDescription { kind, n, payload, label: label.into() }
    }

    pub fn action_matrix(phi: &Superoperator, label: impl Into<String>) -> Self {
        MapDescription::new(
            MapKind::ActionMatrix,
            phi.n(),
            Payload::ActionMatrix(ActionMatrixPayload { matrix: to_json_matrix(phi.action()), shape: None }),
            label,
        )
    }

    pub fn build(&self) -> Result<BuiltMap, SchemaError> {
        let n = self.n;
        let square = |phi: Superoperator| Ok(BuiltMap::Square(phi));
        match &self.payload {
            Payload::ActionMatrix(p) => match p.shape {
                None => {
                    let a = from_json_matrix("payload.matrix", &p.matrix, Some(n * n), Some(n * n))?;
                    square(Superoperator::new(n, a).map_err(|e| core_err("payload.matrix", e))?)
                }
                Some([rows, cols]) => {
                    if rows == 0 || cols == 0 {
                        return Err(SchemaError::new("payload.shape", "block dimensions must be positive"));
                    }
                    if rows != n {
                        return Err(SchemaError::new("payload.shape", format!("rows must equal n = {n}, got {rows}")));
                    }
                    let d = rows * cols;
                    let a = from_json_matrix("payload.matrix", &p.matrix, Some(d), Some(d))?;
                    let gamma = RectangularMap::new((rows, cols), (rows, cols), a)
                        .map_err(|e| core_err("payload.matrix", e))?;
                    Ok(BuiltMap::Rectangular(gamma))
                }
            },
            Payload::Kraus(p) => {
                if p.operators.is_empty() {
                    return Err(SchemaError::new("payload.operators", "need at least one operator"));
                }
                let ops = p
                    .operators
                    .iter()
                    .enumerate()
                    .map(|(k, m)| from_json_matrix(&format!("payload.operators[{k}]"), m, Some(n), Some(n)))
                    .collect::<Result<Vec<_>, _>>()?;
                square(superop_from_kraus(n, &ops).map_err(|e| core_err("payload.operators", e))?)
            }
            Payload::Schur(p) => {
                let mask = from_json_matrix("payload.mask", &p.mask, Some(n), Some(n))?;
                square(schur_map(&mask).map_err(|e| core_err("payload.mask", e))?)
            }
            Payload::StateMap(p) => {
                let density = match (&p.weights, &p.density) {
                    (Some(w), None) => weights_density("payload.weights", w, n)?,
                    (None, Some(d)) => from_json_matrix("payload.density", d, Some(n), Some(n))?,
                    _ => return Err(SchemaError::new("payload", "give exactly one of weights or density")),
                };
                square(Superoperator::state_map(&density).map_err(|e| core_err("payload", e))?)
            }
            Payload::CanonicalForm(p) => {
                let family: Family = p.family.parse().map_err(|e| core_err("payload.family", e))?;
                if family.dim() != n {
                    return Err(SchemaError::new(
                        "n",
                        format!("{family} acts on M_{}, got n = {n}", family.dim()),
                    ));
                }
                let params = CanonicalParams {
                    lambda: p.lambda,
                    lambda_prime: p.lambda_prime,
                    weights: p.weights.clone(),
                    qpure_lambdas: p.qpure_lambdas.clone(),
                    ..Default::default()
                };
                let phi = reconstruct(family, &params).map_err(|e| core_err("payload", e))?;
                let u = conjugator("payload.conjugator", &p.conjugator, n)?;
                square(conjugated(phi, u, "payload.conjugator")?)
            }
            Payload::PhiR(p) => {
                if n != 2 {
                    return Err(SchemaError::new("n", format!("phi_r acts on M_2, got n = {n}")));
                }
                square(phi_r_family(p.r).map_err(|e| core_err("payload.r", e))?)
            }
            Payload::QpureCanonical(p) => {
                if p.lambdas.len() != n {
                    return Err(SchemaError::new(
                        "payload.lambdas",
                        format!("expected {n} values, got {}", p.lambdas.len()),
                    ));
                }
                let phi = qpure_invertible_canonical(&p.lambdas).map_err(|e| core_err("payload.lambdas", e))?;
                let u = conjugator("payload.conjugator", &p.conjugator, n)?;
                square(conjugated(phi, u, "payload.conjugator")?)
            }
        }
    }

    /// The built map, which must act on M_n.
    pub fn superoperator(&self) -> Result<Superoperator, SchemaError> {
        match self.build()? {
            BuiltMap::Square(phi) => Ok(phi),
            BuiltMap::Rectangular(_) => {
                Err(SchemaError::new("payload.shape", "expected a map on M_n, got a rectangular block map"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_r_document() {
        let d = parse_map(r#"{"kind":"phi_r","n":2,"payload":{"r":1.2}}"#).unwrap();
        assert_eq!(d.kind, MapKind::PhiR);
        assert_eq!(d.payload, Payload::PhiR(PhiRPayload { r: 1.2 }));
        let phi = d.superoperator().unwrap();
        assert!(phi.distance(&phi_r_family(1.2).unwrap()) < 1e-15);
    }

    #[test]
    fn identity_mask_is_identity() {
        let d = parse_map(
            r#"{"kind":"schur","n":2,"payload":{"mask":[[[1,0],[1,0]],[[1,0],[1,0]]]}}"#,
        )
        .unwrap();
        assert!(d.superoperator().unwrap().distance(&Superoperator::identity(2)) < 1e-15);
    }

    #[test]
    fn state_map_is_unital() {
        let d = parse_map(r#"{"kind":"state_map","n":2,"payload":{"weights":[0.3,0.7]}}"#).unwrap();
        let phi = d.superoperator().unwrap();
        assert!(phi.unital_defect() < 1e-15);
        let a = CMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(2.0, 0.0), Complex64::new(5.0, 1.0), Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0)],
        );
        // 0.3·2 + 0.7·(−1) = −0.1
        let out = phi.apply(&a).unwrap();
        assert!((out[(0, 0)] - Complex64::new(-0.1, 0.0)).norm() < 1e-15);
        assert!((out[(1, 1)] - Complex64::new(-0.1, 0.0)).norm() < 1e-15);
        assert!(out[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn schema_errors_carry_paths() {
        let cases = [
            (r#"{"kind":"schur","n":2,"payload":{"mask":[[[1,0],[1,0]],[[1,0]]]}}"#, "payload.mask[1]"),
            (r#"{"kind":"schur","n":2,"payload":{"mask":[[[1,0],[1,0]],[[1,0],[1]]]}}"#, "payload.mask[1][1]"),
            (r#"{"kind":"spiral","n":2,"payload":{}}"#, "kind"),
            (r#"{"kind":"phi_r","n":2,"payload":{"r":3.0}}"#, "payload.r"),
            (r#"{"kind":"phi_r","n":3,"payload":{"r":1.2}}"#, "n"),
            (r#"{"kind":"phi_r","payload":{"r":1.2}}"#, "n"),
            (r#"{"kind":"kraus","n":2,"payload":{"operators":[[[[1,0]]]]}}"#, "payload.operators[0]"),
            (r#"{"kind":"phi_r","n":2,"payload":{"r":1.2,"s":1}}"#, "payload.s"),
            (r#"{"kind":"phi_r","n":2,"payload":{}}"#, "payload"),
            (r#"[1,2]"#, "$"),
        ];
        for (text, path) in cases {
            let err = parse_map(text).unwrap_err();
            assert_eq!(err.path, path, "{text}: {err}");
        }
    }

    #[test]
    fn round_trip_is_stable() {
        let text = r#"{"kind":"canonical_form","n":3,"label":"x",
            "payload":{"family":"E3_II","lambda":0.6}}"#;
        let d = parse_map(text).unwrap();
        let once = emit_map(&d);
        let again = parse_map(&once).unwrap();
        assert_eq!(d, again);
        assert_eq!(once, emit_map(&again));
    }

    #[test]
    fn rectangular_action_matrix() {
        let d = parse_map(
            r#"{"kind":"action_matrix","n":2,"payload":{"shape":[2,1],"matrix":[[[0,0],[0,0]],[[0,0],[1,0]]]}}"#,
        )
        .unwrap();
        match d.build().unwrap() {
            BuiltMap::Rectangular(g) => assert_eq!((g.in_rows, g.in_cols), (2, 1)),
            BuiltMap::Square(_) => panic!("expected a rectangular map"),
        }
        assert_eq!(d.superoperator().unwrap_err().path, "payload.shape");
    }
}
