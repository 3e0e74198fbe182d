use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;

use qmap_cli::description::{
    emit_map, parse_map, ActionMatrixPayload, MapKind, Payload, StateMapPayload,
};
use qmap_cli::report::parse_report;

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

fn doc(name: &str) -> String {
    corpus_dir().join(name).display().to_string()
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn qmap(args: &[&str]) -> Run {
    qmap_env(args, &[])
}

fn qmap_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qmap"));
    cmd.args(args).env_remove("QMAP_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("qmap runs");
    Run {
        code: out.status.code().expect("exit code"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn json(run: &Run) -> Value {
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    serde_json::from_str(&run.stdout).expect("json report")
}

fn num(v: &Value, pointer: &str) -> f64 {
    v.pointer(pointer).and_then(Value::as_f64).unwrap_or_else(|| panic!("{pointer} missing in {v}"))
}

fn corpus_documents() -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            let name = p.file_name().unwrap().to_str().unwrap();
            name != "manifest.json" && name != "flip_unitary.json"
        })
        .collect();
    out.sort();
    out
}

#[test]
fn phi_r_witness_matches_threshold_arithmetic() {
    let v = json(&qmap(&["analyze", &doc("phi_r_1.2.json")]));
    // (2 − 1.44) / (2·1.2·0.2)
    let expected = 0.56 / 0.48;
    assert_eq!(v["verdicts"]["q_positivity"]["tag"], "refuted");
    assert!((num(&v, "/verdicts/q_positivity/witness_t") - expected).abs() < 1e-4);
    assert!((num(&v, "/verdicts/q_threshold/threshold") - expected).abs() < 1e-6);
    assert_eq!(v["verdicts"]["cp"]["completely_positive"], true);
    assert!(v["verdicts"]["eigencheck"]["no_negative_eigenvalues"].is_boolean());
}

#[test]
fn identity_report_names_e2_identity() {
    let v = json(&qmap(&["classify", &doc("identity_m2.json")]));
    assert_eq!(v["verdicts"]["classification"]["family"], "E2_identity");
    assert_eq!(v["command"], "classify");
    assert_eq!(v["input_label"], "identity on M_2");
}

#[test]
fn diagonal_schur_corner_has_the_three_unit_compression() {
    let v = json(&qmap(&["corner", &doc("diagonal_schur_corner.json"), "--split", "2"]));
    let c = &v["verdicts"]["corner"];
    assert_eq!(c["is_corner"], true);
    assert_eq!(c["hypermax"]["compression"], "e11+e33+e44");
    assert_eq!(c["hypermax"]["removed"], serde_json::json!([1]));
}

#[test]
fn corner_input_forms() {
    let v = json(&qmap(&["corner", &doc("m2_rank2_rotated.json"), "--flip", &doc("flip_unitary.json")]));
    assert_eq!(v["verdicts"]["corner"]["q_corner"]["tag"], "certified_sampled");
    assert!(v["verdicts"]["corner"]["hypermax"].is_null());

    let v = json(&qmap(&[
        "corner",
        &doc("nonfaithful_phi.json"),
        &doc("nonfaithful_gamma.json"),
        &doc("identity_m1.json"),
    ]));
    assert_eq!(v["verdicts"]["corner"]["hypermax"]["compression"], "e22+e33");

    assert_eq!(qmap(&["corner", &doc("m2_rank2.json")]).code, 1);
    assert_eq!(qmap(&["corner", &doc("m2_rank2.json"), "--flip", &doc("m2_rank2.json")]).code, 1);
    assert_eq!(qmap(&["corner", &doc("m2_rank2.json"), "--split", "3"]).code, 1);
}

#[test]
fn text_format_uses_form_names() {
    let run = qmap(&["--format", "text", "classify", &doc("e3_form_ii.json")]);
    assert_eq!(run.code, 0);
    assert!(run.stdout.contains("E₃ form (II), λ=0.600"), "{}", run.stdout);
    assert!(run.stdout.contains("config: eig_floor=1e-9"), "{}", run.stdout);
}

#[test]
fn each_verb_reports_its_verdict() {
    let cases: [(&[&str], &str); 6] = [
        (&["analyze", "sign_flip.json"], "q_positivity"),
        (&["classify", "qpure_m2.json"], "classification"),
        (&["limit", "m2_rank2.json"], "limit_properties"),
        (&["dominates", "m2_rank2.json", "m2_rank2_sub.json"], "dominance"),
        (&["witness", "e3_form_ii.json"], "purity_refutations"),
        (&["corner", "diagonal_schur_corner.json"], "corner"),
    ];
    for (args, verdict) in cases {
        let mut argv: Vec<String> = vec![args[0].into()];
        argv.extend(args[1..].iter().map(|a| doc(a)));
        if args[0] == "corner" {
            argv.extend(["--split".into(), "2".into()]);
        }
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        let v = json(&qmap(&argv));
        let present: Vec<&String> = v["verdicts"].as_object().unwrap().keys().collect();
        assert!(present.iter().any(|k| k.as_str() == verdict), "{args:?}: {present:?}");
        assert_eq!(v["command"], args[0]);
    }
}

#[test]
fn reports_echo_the_configuration() {
    let v = json(&qmap(&["--tol", "1e-7", "--grid", "32", "--refine", "2", "--t-cap", "1000", "classify", &doc("state_m2.json")]));
    let c = &v["config_echo"];
    assert_eq!(num(c, "/eig_floor"), 1e-7);
    assert_eq!(c["grid_points"], 32);
    assert_eq!(c["refine_depth"], 2);
    assert_eq!(num(c, "/t_cap"), 1000.0);
    assert_eq!(num(c, "/rank_tol"), 1e-8);
    assert!(v["tool_version"].as_str().unwrap().starts_with("qmap "));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"grid_points": 32, "t_cap": 500.0}"#).unwrap();
    let cfg = cfg.to_str().unwrap();
    let v = json(&qmap(&["--config", cfg, "classify", &doc("state_m2.json")]));
    assert_eq!(v["config_echo"]["grid_points"], 32);
    assert_eq!(num(&v, "/config_echo/t_cap"), 500.0);
    let v = json(&qmap(&["--config", cfg, "--grid", "40", "classify", &doc("state_m2.json")]));
    assert_eq!(v["config_echo"]["grid_points"], 40);
    assert_eq!(num(&v, "/config_echo/t_cap"), 500.0);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"grid_points": 32, "gird": 1}"#).unwrap();
    let run = qmap(&["--config", bad.to_str().unwrap(), "classify", &doc("state_m2.json")]);
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("gird"), "{}", run.stderr);
}

#[test]
fn exit_codes() {
    // a refuted verdict is still a completed analysis
    assert_eq!(qmap(&["analyze", &doc("rank_three.json")]).code, 0);
    assert_eq!(qmap(&["classify", &doc("rank_three.json")]).code, 0);
    assert_eq!(qmap(&["--help"]).code, 0);
    assert_eq!(qmap(&["--version"]).code, 0);

    assert_eq!(qmap(&[]).code, 1);
    assert_eq!(qmap(&["frobnicate"]).code, 1);
    assert_eq!(qmap(&["analyze", "/nonexistent/map.json"]).code, 1);
    assert_eq!(qmap(&["--grid", "3", "analyze", &doc("sign_flip.json")]).code, 1);
    assert_eq!(qmap(&["--format", "yaml", "analyze", &doc("sign_flip.json")]).code, 1);
    assert_eq!(qmap(&["dominates", &doc("m2_rank2.json"), &doc("e3_state.json")]).code, 1);

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"kind":"schur","n":2,"payload":{"mask":[[[1,0],[1,0]],[[1,0]]]}}"#).unwrap();
    let run = qmap(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(run.code, 1);
    assert!(run.stderr.contains("payload.mask[1]"), "{}", run.stderr);

    // a rank tolerance this loose breaks the rank-two reconstruction
    let run = qmap(&["--rank-tol", "0.3", "classify", &doc("m2_rank2_rotated.json")]);
    assert_eq!(run.code, 2, "{}", run.stderr);
    let v: Value = serde_json::from_str(&run.stdout).unwrap();
    assert_eq!(v["verdicts"]["classification"]["error_kind"], "inconclusive");
    assert_eq!(v["verdicts"]["classification"]["numeric"], true);
}

#[test]
fn reports_are_bit_identical_across_runs() {
    let runs: [Vec<String>; 4] = [
        vec!["analyze".into(), doc("phi_r_1.3.json")],
        vec!["witness".into(), doc("e3_form_ii.json")],
        vec!["dominates".into(), doc("m2_rank2.json"), doc("m2_rank2_sub.json")],
        vec!["--format".into(), "text".into(), "corner".into(), doc("diagonal_schur_corner.json"), "--split".into(), "2".into()],
    ];
    for args in runs {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let a = qmap(&argv);
        let b = qmap(&argv);
        assert_eq!(a.code, 0);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn json_reports_round_trip() {
    for args in [
        vec!["analyze".to_string(), doc("transpose_m2.json")],
        vec!["classify".into(), doc("qpure_m2.json")],
        vec!["limit".into(), doc("sign_flip.json")],
        vec!["witness".into(), doc("m2_rank2_rotated.json")],
        vec!["corner".into(), doc("nonfaithful_phi.json"), doc("nonfaithful_gamma.json"), doc("identity_m1.json")],
    ] {
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let run = qmap(&argv);
        let report = parse_report(&run.stdout).unwrap_or_else(|e| panic!("{args:?}: {e}"));
        assert_eq!(qmap_cli::emit_report(&report, qmap_cli::Format::Json), run.stdout);
    }
}

#[test]
fn several_inputs_keep_their_order() {
    let files = [doc("identity_m2.json"), doc("state_m2.json"), doc("e3_form_ii.json")];
    let run = qmap(&["classify", &files[0], &files[1], &files[2]]);
    let v: Value = serde_json::from_str(&run.stdout).unwrap();
    let families: Vec<&str> =
        v.as_array().unwrap().iter().map(|r| r["verdicts"]["classification"]["family"].as_str().unwrap()).collect();
    assert_eq!(families, ["E2_identity", "E2_state", "E3_II"]);
}

#[test]
fn corpus_documents_round_trip() {
    let docs = corpus_documents();
    let mut kinds = BTreeSet::new();
    for path in &docs {
        let text = std::fs::read_to_string(path).unwrap();
        let first = parse_map(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        kinds.insert(first.kind.as_str());
        let emitted = emit_map(&first);
        let second = parse_map(&emitted).unwrap();
        assert_eq!(first, second, "{}", path.display());
        assert_eq!(emit_map(&second), emitted);
    }
    let all: BTreeSet<&str> = MapKind::ALL.iter().map(|k| k.as_str()).collect();
    assert_eq!(kinds, all, "every document kind appears in the corpus");
}

#[test]
fn corpus_covers_every_verb() {
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(corpus_dir().join("manifest.json")).unwrap()).unwrap();
    let verbs: BTreeSet<&str> =
        manifest["cases"].as_array().unwrap().iter().map(|c| c["verb"].as_str().unwrap()).collect();
    let expected: BTreeSet<&str> = qmap_cli::commands::Verb::NAMES.into_iter().collect();
    assert_eq!(verbs, expected);
}

#[test]
fn corpus_verify_passes() {
    let run = qmap(&["--format", "text", "corpus", "verify"]);
    assert_eq!(run.code, 0, "{}", run.stdout);
    assert!(!run.stdout.contains("FAIL"));
    let seeded = qmap_env(&["corpus", "verify"], &[("QMAP_SEED", "11")]);
    let v = json(&seeded);
    assert_eq!(v["seed"], 11);
    assert_eq!(v["failed"], 0);
    assert_eq!(qmap(&["--seed", "11", "corpus", "verify"]).stdout, seeded.stdout);
    assert_eq!(qmap_env(&["corpus", "verify"], &[("QMAP_SEED", "x")]).code, 1);
}

#[test]
fn corpus_verify_reports_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(corpus_dir()).unwrap() {
        let path = entry.unwrap().path();
        std::fs::copy(&path, dir.path().join(path.file_name().unwrap())).unwrap();
    }
    let run = qmap(&["corpus", "verify", "--dir", dir.path().to_str().unwrap()]);
    assert_eq!(run.code, 0, "{}", run.stdout);

    let manifest = dir.path().join("manifest.json");
    let text = std::fs::read_to_string(&manifest).unwrap().replace("\"E2_identity\"", "\"E2_state\"");
    std::fs::write(&manifest, text).unwrap();
    let run = qmap(&["--format", "text", "corpus", "verify", "--dir", dir.path().to_str().unwrap()]);
    assert_ne!(run.code, 0);
    assert!(run.stdout.contains("FAIL identity classifies as E2_identity"), "{}", run.stdout);
}

#[test]
fn in_process_run_matches_the_binary() {
    let args = ["qmap", "classify", &doc("state_m2.json")];
    let out = qmap_cli::run(args);
    assert_eq!(out.code, 0);
    assert_eq!(out.stdout, qmap(&args[1..]).stdout);
}

#[test]
fn built_descriptions_round_trip() {
    let d = qmap_cli::MapDescription::new(
        MapKind::StateMap,
        3,
        Payload::StateMap(StateMapPayload { weights: Some(vec![0.1, 0.2, 0.7]), density: None }),
        "",
    );
    let text = emit_map(&d);
    assert!(!text.contains("label"));
    assert_eq!(parse_map(&text).unwrap(), d);
    let a = qmap_cli::MapDescription::new(
        MapKind::ActionMatrix,
        1,
        Payload::ActionMatrix(ActionMatrixPayload { matrix: vec![vec![[0.1 + 0.2, -1e-300]]], shape: None }),
        "tiny",
    );
    assert_eq!(parse_map(&emit_map(&a)).unwrap(), a);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn entry() -> impl Strategy<Value = [f64; 2]> {
        [prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL; 2]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn action_matrix_parse_emit_parse(n in 1usize..3, seed in prop::collection::vec(entry(), 16)) {
            let d = n * n;
            let matrix: Vec<Vec<[f64; 2]>> = (0..d).map(|i| (0..d).map(|j| seed[(i * d + j) % seed.len()]).collect()).collect();
            let desc = qmap_cli::MapDescription::new(
                MapKind::ActionMatrix,
                n,
                Payload::ActionMatrix(ActionMatrixPayload { matrix, shape: None }),
                "p",
            );
            let once = emit_map(&desc);
            let parsed = parse_map(&once).unwrap();
            prop_assert_eq!(&parsed, &desc);
            prop_assert_eq!(emit_map(&parsed), once);
        }

        #[test]
        fn phi_r_parse_emit_parse(r in 1.0001f64..1.4142) {
            let text = format!(r#"{{"kind":"phi_r","n":2,"payload":{{"r":{r}}}}}"#);
            let d = parse_map(&text).unwrap();
            prop_assert_eq!(parse_map(&emit_map(&d)).unwrap(), d);
        }
    }
}
