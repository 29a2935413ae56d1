use std::path::Path;
use std::process::Command;

use serde_json::Value;
use telescp::cli::{run, EXIT_IO, EXIT_OK, EXIT_SEMANTIC, EXIT_USAGE};
use telescp::leakage_sim::PRESET_NAMES;
use telescp::preset;
use telescp::trace_store::{import_csv, load_traceset, save_traceset};

const KEY: &str = "000102030405060708090a0b0c0d0e0f";

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn telescp(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(
        std::iter::once("telescp").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn schema(name: &str) -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(format!("{name}.schema.json"));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&v).unwrap()
}

fn assert_valid(name: &str, json: &str) -> Value {
    let v: Value = serde_json::from_str(json).unwrap_or_else(|e| panic!("{name}: {e}\n{json}"));
    let validator = schema(name);
    let errors: Vec<String> = validator
        .iter_errors(&v)
        .map(|e| format!("{e} at {}", e.instance_path))
        .collect();
    assert!(errors.is_empty(), "{name} schema violations: {errors:?}");
    v
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three class files from the PHPC-like preset with the key embedded.
fn simulate_all(dir: &Path, n: &str) -> Value {
    let r = telescp(&[
        "simulate",
        "--preset",
        "phpc-like",
        "--classes",
        "all0,all1,random",
        "--n",
        n,
        "--key",
        KEY,
        "--seed",
        "3",
        "--embed-key",
        "--out",
        s(dir),
        "--json",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert_valid("simulate", &r.out)
}

#[test]
fn simulate_writes_labelled_files_and_embeds_profile() {
    let dir = tempfile::tempdir().unwrap();
    let v = simulate_all(dir.path(), "200");
    assert_eq!(v["profile"]["name"], "PHPC-like");
    assert_eq!(v["files"].as_array().unwrap().len(), 3);
    for class in ["all0", "all1", "random"] {
        let ts = load_traceset(&dir.path().join(format!("{class}.sct"))).unwrap();
        assert_eq!(ts.len(), 200);
        assert_eq!(ts.class_label.unwrap().short_name(), class);
        assert_eq!(ts.true_key.unwrap().to_hex(), KEY);
    }
}

#[test]
fn simulate_text_summary_and_no_key_by_default() {
    let dir = tempfile::tempdir().unwrap();
    let r = telescp(&[
        "simulate",
        "--n",
        "10",
        "--key",
        KEY,
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    assert!(
        r.out.contains("random.sct") && r.out.contains("10 traces"),
        "{}",
        r.out
    );
    assert!(load_traceset(&dir.path().join("random.sct"))
        .unwrap()
        .true_key
        .is_none());
}

#[test]
fn simulate_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    let r = telescp(&["simulate", "--n", "0", "--key", KEY, "--out", out]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("--n"), "{}", r.err);
    let r = telescp(&["simulate", "--n", "5", "--key", "zz", "--out", out]);
    assert_eq!(r.code, EXIT_USAGE);
    let r = telescp(&[
        "simulate", "--n", "5", "--key", KEY, "--preset", "nope", "--out", out,
    ]);
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("--preset"), "{}", r.err);
    let r = telescp(&[
        "simulate",
        "--n",
        "5",
        "--key",
        KEY,
        "--classes",
        "all0,purple",
        "--out",
        out,
    ]);
    assert_eq!(r.code, EXIT_USAGE);
    let r = telescp(&[
        "simulate",
        "--n",
        "5",
        "--key",
        KEY,
        "--samples",
        "0",
        "--out",
        out,
    ]);
    assert_eq!(r.code, EXIT_USAGE);
    let r = telescp(&["--workers", "0", "throttle", "--demand", "1"]);
    assert_eq!(r.code, EXIT_USAGE);
}

#[test]
fn profile_files() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("p.json");
    let mut p = preset("pdtr-like").unwrap();
    p.samples_per_trace = 3;
    std::fs::write(&good, p.to_json()).unwrap();
    let out = dir.path().join("o");
    let r = telescp(&[
        "simulate",
        "--profile",
        s(&good),
        "--n",
        "4",
        "--key",
        KEY,
        "--out",
        s(&out),
        "--json",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let v = assert_valid("simulate", &r.out);
    assert_eq!(v["profile"]["samples_per_trace"], 3);
    assert_eq!(
        load_traceset(&out.join("random.sct"))
            .unwrap()
            .samples_per_trace(),
        3
    );

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, p.to_json().replacen('{', "{\"extra\": 1,", 1)).unwrap();
    let r = telescp(&[
        "simulate",
        "--profile",
        s(&bad),
        "--n",
        "4",
        "--key",
        KEY,
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, EXIT_USAGE);
    let r = telescp(&[
        "simulate",
        "--profile",
        "/nonexistent/p.json",
        "--n",
        "4",
        "--key",
        KEY,
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, EXIT_IO);
    let r = telescp(&[
        "simulate",
        "--profile",
        s(&good),
        "--preset",
        "phpc-like",
        "--n",
        "4",
        "--key",
        KEY,
        "--out",
        s(&out),
    ]);
    assert_eq!(r.code, EXIT_USAGE);
}

#[test]
fn presets_match_profile_schema() {
    for name in PRESET_NAMES {
        assert_valid("profile", &preset(name).unwrap().to_json());
    }
}

#[test]
fn tvla_table_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    simulate_all(dir.path(), "2000");
    let files: Vec<String> = ["all0", "all1", "random"]
        .iter()
        .map(|c| {
            dir.path()
                .join(format!("{c}.sct"))
                .to_str()
                .unwrap()
                .to_string()
        })
        .collect();
    let args = |extra: &[&str]| -> Vec<String> {
        let mut a = vec!["tvla".to_string()];
        a.extend(files.iter().cloned());
        a.extend(extra.iter().map(|x| x.to_string()));
        a
    };
    let text = telescp(&args(&[]).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(text.code, EXIT_OK, "{}", text.err);
    assert!(
        text.out.contains("All 0s'") && text.out.contains("Random"),
        "{}",
        text.out
    );
    assert!(
        text.out.contains("TP") && text.out.contains("TN"),
        "{}",
        text.out
    );

    let csv = dir.path().join("t.csv");
    let json = telescp(
        &args(&["--json", "--csv", s(&csv)])
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>(),
    );
    assert_eq!(json.code, EXIT_OK, "{}", json.err);
    let v = assert_valid("tvla", &json.out);
    assert_eq!(v["profile"]["name"], "PHPC-like");
    let rows = std::fs::read_to_string(&csv).unwrap();
    assert!(rows.starts_with("row,col,t,sample_index,classification"));
    assert_eq!(rows.lines().count(), 10);

    let one = telescp(
        &args(&["--sample-index", "0"])
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>(),
    );
    assert_eq!(one.code, EXIT_OK);
    let out_of_range = telescp(
        &args(&["--sample-index", "9"])
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>(),
    );
    assert_eq!(out_of_range.code, EXIT_SEMANTIC);
}

#[test]
fn tvla_semantic_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    simulate_all(dir.path(), "50");
    let all0 = dir.path().join("all0.sct");
    let r = telescp(&["tvla", s(&all0)]);
    assert_eq!(r.code, EXIT_SEMANTIC);
    let r = telescp(&["tvla", s(&all0), s(&all0)]);
    assert_eq!(r.code, EXIT_SEMANTIC);

    // A set imported from CSV carries no class label.
    let csv = dir.path().join("all1.csv");
    assert_eq!(
        telescp(&["export", s(&dir.path().join("all1.sct")), "--out", s(&csv)]).code,
        EXIT_OK
    );
    let unlabelled = import_csv(std::fs::File::open(&csv).unwrap(), "PHPC-like").unwrap();
    let path = dir.path().join("unlabelled.sct");
    save_traceset(&unlabelled, &path).unwrap();
    let r = telescp(&["tvla", s(&all0), s(&path)]);
    assert_eq!(r.code, EXIT_SEMANTIC);
    assert!(r.err.contains("class label"), "{}", r.err);

    let r = telescp(&["tvla", s(&all0), "/nonexistent.sct"]);
    assert_eq!(r.code, EXIT_IO);
    let junk = dir.path().join("junk.sct");
    std::fs::write(&junk, b"not a trace file").unwrap();
    let r = telescp(&["tvla", s(&all0), s(&junk)]);
    assert_eq!(r.code, EXIT_IO);
}

#[test]
fn cpa_reports_and_ge_curve() {
    let dir = tempfile::tempdir().unwrap();
    let r = telescp(&[
        "simulate",
        "--preset",
        "phpc-like",
        "--n",
        "3000",
        "--key",
        KEY,
        "--seed",
        "1",
        "--embed-key",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(r.code, EXIT_OK);
    let file = dir.path().join("random.sct");

    let text = telescp(&["cpa", s(&file), "--model", "rd0-hw"]);
    assert_eq!(text.code, EXIT_OK, "{}", text.err);
    assert!(
        text.out.contains("GE: ") && text.out.contains("recovered master key"),
        "{}",
        text.out
    );

    let json = telescp(&[
        "cpa",
        s(&file),
        "--model",
        "rd10-hw",
        "--json",
        "--ge-step",
        "1000",
    ]);
    assert_eq!(json.code, EXIT_OK, "{}", json.err);
    let v = assert_valid("cpa", &json.out);
    assert_eq!(v["report"]["model"], "rd10-hw");
    assert_eq!(v["ge_curve"]["points"].as_array().unwrap().len(), 3);

    let ge_csv = dir.path().join("ge.csv");
    let r = telescp(&["cpa", s(&file), "--ge-step", "700", "--ge-out", s(&ge_csv)]);
    assert_eq!(r.code, EXIT_OK);
    let curve = std::fs::read_to_string(&ge_csv).unwrap();
    let lines: Vec<&str> = curve.lines().collect();
    assert_eq!(lines[0], "n_traces,ge");
    assert_eq!(lines.len(), 1 + 5);
    assert!(lines[5].starts_with("3000,"));

    let alias = dir.path().join("alias.csv");
    let r = telescp(&["ge-curve", s(&file), "--step", "700", "--out", s(&alias)]);
    assert_eq!(r.code, EXIT_OK);
    assert_eq!(std::fs::read_to_string(&alias).unwrap(), curve);

    let r = telescp(&["cpa", s(&file), "--delta", "--json"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let v = assert_valid("cpa", &r.out);
    assert_eq!(v["report"]["n_traces_used"], 2999);

    let r = telescp(&["cpa", s(&file), "--model", "rd11-hw"]);
    assert_eq!(r.code, EXIT_USAGE);
}

#[test]
fn cpa_without_key() {
    let dir = tempfile::tempdir().unwrap();
    let r = telescp(&[
        "simulate",
        "--n",
        "500",
        "--key",
        KEY,
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(r.code, EXIT_OK);
    let file = dir.path().join("random.sct");
    let r = telescp(&["cpa", s(&file)]);
    assert_eq!(r.code, EXIT_SEMANTIC);
    assert!(r.err.contains("--recover-only"), "{}", r.err);
    let r = telescp(&["cpa", s(&file), "--recover-only", "--json"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let v = assert_valid("cpa", &r.out);
    assert!(v["report"]["ranks"].is_null() && v["report"]["guessing_entropy"].is_null());
    let r = telescp(&["ge-curve", s(&file), "--step", "100"]);
    assert_eq!(r.code, EXIT_SEMANTIC);
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let sim = |out: &Path, w: &str| {
        telescp(&[
            "--workers",
            w,
            "simulate",
            "--n",
            "5000",
            "--key",
            KEY,
            "--embed-key",
            "--seed",
            "9",
            "--out",
            s(out),
        ])
    };
    assert_eq!(sim(&a, "1").code, EXIT_OK);
    assert_eq!(sim(&b, "4").code, EXIT_OK);
    let fa = std::fs::read(a.join("random.sct")).unwrap();
    assert_eq!(fa, std::fs::read(b.join("random.sct")).unwrap());
    let cpa = |w: &str| telescp(&["cpa", s(&a.join("random.sct")), "--json", "--workers", w]).out;
    assert_eq!(cpa("1"), cpa("5"));
}

#[test]
fn mitigate_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let r = telescp(&[
        "simulate",
        "--n",
        "40",
        "--samples",
        "8",
        "--key",
        KEY,
        "--embed-key",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(r.code, EXIT_OK);
    let file = dir.path().join("random.sct");
    let out = dir.path().join("m.sct");
    let r = telescp(&[
        "mitigate",
        s(&file),
        "--noise",
        "1e-5",
        "--interval",
        "4",
        "--seed",
        "2",
        "--out",
        s(&out),
        "--json",
    ]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let v = assert_valid("mitigate", &r.out);
    assert_eq!(v["samples_per_trace"], 2);
    let m = load_traceset(&out).unwrap();
    assert_eq!((m.len(), m.samples_per_trace()), (40, 2));
    assert_eq!(m.true_key.unwrap().to_hex(), KEY);
    let r = telescp(&["mitigate", s(&file), "--noise", "-1", "--out", s(&out)]);
    assert_eq!(r.code, EXIT_USAGE);

    let csv = dir.path().join("m.csv");
    let r = telescp(&["export", s(&out), "--out", s(&csv), "--json"]);
    assert_eq!(r.code, EXIT_OK, "{}", r.err);
    let v = assert_valid("export", &r.out);
    assert_eq!(v["rows"], 41);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(
        text.starts_with("plaintext,ciphertext,key,s0,s1\n"),
        "{}",
        &text[..60]
    );

    let r = telescp(&["export", s(&out)]);
    assert_eq!(r.code, EXIT_OK);
    assert_eq!(r.out, text);
}

#[test]
fn throttle_json() {
    let r = telescp(&["throttle", "--demand", "8", "--json"]);
    assert_eq!(r.code, EXIT_OK);
    let v = assert_valid("throttle", &r.out);
    let f = v["frequency"].as_f64().unwrap();
    assert!((f - 3.5 * 0.5f64.cbrt()).abs() < 1e-12);
    assert_eq!(v["throttled"], true);
    let r = telescp(&[
        "throttle", "--demand", "8", "--driver", "sensor", "--sensor", "3.9", "--json",
    ]);
    let v = assert_valid("throttle", &r.out);
    assert_eq!(v["frequency"], 3.5);
    assert_eq!(v["throttled"], false);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_telescp");
    let ok = Command::new(bin)
        .args(["throttle", "--demand", "2.8"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(EXIT_OK));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("law=cubic"));
    let bad = Command::new(bin)
        .args(["tvla", "/nonexistent-a.sct", "/nonexistent-b.sct"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_IO));
    let usage = Command::new(bin).arg("frobnicate").output().unwrap();
    assert_eq!(usage.status.code(), Some(EXIT_USAGE));
}
