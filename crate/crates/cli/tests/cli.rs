use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn logsob(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_logsob")).args(args).output().expect("spawn logsob")
}

fn logsob_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_logsob")).args(args).env(key, value).output().expect("spawn logsob")
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

fn num(v: &Value, path: &str) -> f64 {
    v.pointer(path).and_then(Value::as_f64).unwrap_or_else(|| panic!("missing {path}"))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn verify_sphere_constant_density() {
    let out = logsob(&["verify", "--shape", "sphere2", "--radius", "2", "--density", "const", "-q"]);
    let r = json(&out);
    assert_eq!(r["schema"], "logsob-report/1");
    assert_eq!(r["tool"]["name"], "logsob");
    assert_eq!(r["mesh"]["intrinsic_dim"], 2);
    assert_eq!(r["mesh"]["vertices"], 2562);
    assert_eq!(r["command"]["name"], "verify");
    assert_eq!(r["command"]["args"][0], "verify");
    let closed = 4f64.ln() - 1.0;
    assert!(rel(num(&r, "/payload/theorem1/deficit"), closed) < 5e-3);
    let gaussian = 4.0 / std::f64::consts::E * (4f64.ln() - 1.0);
    assert!(rel(num(&r, "/payload/corollary2/deficit"), gaussian) < 5e-3);
    assert_eq!(r["payload"]["cross_check"]["within"], true);
    assert_eq!(r["payload"]["status"], "ok");
    assert!(out.stderr.is_empty());
}

#[test]
fn verify_writes_human_table_to_stderr_only() {
    let out = logsob(&["verify", "--shape", "circle", "--resolution", "256"]);
    json(&out);
    let table = String::from_utf8(out.stderr).unwrap();
    assert!(table.contains("theorem1") && table.contains("corollary2"));
}

#[test]
fn boundary_mesh_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.off");
    std::fs::write(&path, "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
    let out = logsob(&["verify", "--mesh", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(65));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("BoundaryDetected"));
    let missing = logsob(&["verify", "--mesh", dir.path().join("nope.off").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(65));
}

#[test]
fn usage_errors_exit_64() {
    for args in [
        vec!["verify"],
        vec!["verify", "--shape", "circle", "--bogus"],
        vec!["verify", "--shape", "circle", "--density", "banana"],
        vec!["verify", "--shape", "circle", "--density", "expr:1+"],
        vec!["verify", "--shape", "circle", "--density", "expr:1+x3"],
        vec!["verify", "--shape", "circle", "--radius", "-1"],
        vec!["verify", "--shape", "torus3", "--sweep", "1:2:3"],
        vec!["verify", "--shape", "circle", "--sweep", "2:1:3"],
        vec!["identities", "--mesh", "x.off", "--levels", "3"],
        vec!["generate", "--shape", "clifford", "-o", "x.off"],
        vec!["frobnicate"],
    ] {
        let out = logsob(&args);
        assert_eq!(out.status.code(), Some(64), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(out.stdout.is_empty(), "{args:?}");
    }
    let out = logsob_env(&["verify", "--shape", "circle"], "LOGSOB_THREADS", "zero");
    assert_eq!(out.status.code(), Some(64));
    assert_eq!(logsob(&["--help"]).status.code(), Some(0));
}

#[test]
fn nonpositive_expression_density_is_a_data_error() {
    let out = logsob(&["verify", "--shape", "circle", "--density", "expr:x1"]);
    assert_eq!(out.status.code(), Some(65));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NonpositiveDensity"));
}

#[test]
fn disjoint_union_reports_concavity_gap() {
    let r = json(&logsob(&["verify", "--shape", "disjoint", "--radius", "1", "--resolution", "512", "-q"]));
    let c = &r["payload"]["composition"];
    let masses: Vec<f64> = c["masses"].as_array().unwrap().iter().map(|m| m.as_f64().unwrap()).collect();
    assert_eq!(masses.len(), 2);
    assert!((masses[0] - 0.5).abs() < 1e-12 && (masses[1] - 0.5).abs() < 1e-12);
    let union = num(c, "/union_deficit");
    assert!((union - num(c, "/combined_deficit")).abs() <= 1e-10);
    assert!((num(c, "/concavity_gap") - 2f64.ln()).abs() <= 1e-12);
    assert!((union - num(c, "/component_deficit_sum") - 2f64.ln()).abs() <= 1e-10);
    assert_eq!(r["mesh"]["components"], 2);
}

#[test]
fn sweep_csv_round_trips_through_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("sweep.csv");
    let r = json(&logsob(&[
        "verify", "--shape", "circle", "--sweep", "1:2:21", "--csv", csv_path.to_str().unwrap(), "-q",
    ]));
    let rows = r["payload"]["sweep"]["rows"].as_array().unwrap();
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["radius", "deficit_theorem1", "deficit_corollary2"]);
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), rows.len());
    for (rec, row) in records.iter().zip(rows) {
        for (k, key) in ["radius", "deficit_theorem1", "deficit_corollary2"].iter().enumerate() {
            let from_csv: f64 = rec[k].parse().unwrap();
            assert_eq!(from_csv.to_bits(), row[key].as_f64().unwrap().to_bits(), "{key}");
        }
    }
    let minimizer = num(&r, "/payload/sweep/refined_minimizer");
    assert!(rel(minimizer, 2f64.sqrt()) < 0.01, "{minimizer}");
}

#[test]
fn abp_audit_on_shrinker_circle() {
    let r = json(&logsob(&[
        "abp-audit", "--shape", "circle", "--radius", "1.41421356", "--density", "const", "--probes", "10000", "-q",
    ]));
    let c = &r["payload"]["components"][0];
    assert!(rel(num(c, "/alpha"), 2.68437) < 1e-3);
    assert!(rel(num(c, "/reconstruction/constant"), 0.41894) < 1e-3);
    assert!(num(c, "/reconstruction_error") <= 1e-10);
    assert!(num(c, "/probes/success_rate") >= 0.99);
    assert_eq!(num(c, "/lemma2/violations"), 0.0);
    assert!(num(c, "/lemma2/samples") > 10_000.0);
}

#[test]
fn abp_audit_refuses_disconnected_meshes_unless_asked() {
    let out = logsob(&["abp-audit", "--shape", "disjoint", "--resolution", "128", "--probes", "100"]);
    assert_eq!(out.status.code(), Some(65));
    assert!(String::from_utf8_lossy(&out.stderr).contains("DisconnectedInput"));
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("margins.csv");
    let r = json(&logsob(&[
        "abp-audit",
        "--shape",
        "disjoint",
        "--resolution",
        "128",
        "--probes",
        "100",
        "--per-component",
        "--csv",
        csv_path.to_str().unwrap(),
        "-q",
    ]));
    let comps = r["payload"]["components"].as_array().unwrap();
    assert_eq!(comps.len(), 2);
    let bins: usize = comps.iter().map(|c| c["lemma2"]["histogram"].as_array().unwrap().len()).sum();
    let csv_rows = csv::Reader::from_path(&csv_path).unwrap().records().count();
    assert_eq!(csv_rows, bins);
}

#[test]
fn identities_converge_on_unit_sphere() {
    let r = json(&logsob(&["identities", "--shape", "sphere2", "--radius", "1", "--levels", "4", "-q"]));
    let rows = r["payload"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for k in 1..rows.len() {
        assert!(num(&rows[k], "/divergence_residual") < num(&rows[k - 1], "/divergence_residual"));
        assert!(num(&rows[k], "/divergence_order") >= 1.0);
    }
    assert!(num(&r, "/payload/min_order") >= 1.0);
}

#[test]
fn optimize_is_deterministic() {
    let args = ["optimize", "--shape", "sphere2", "--radius", "2", "--resolution", "162", "--restarts", "3", "--seed", "7", "--max-iterations", "40", "-q"];
    let a = logsob(&args);
    let b = logsob(&args);
    let c = logsob_env(&args, "LOGSOB_THREADS", "1");
    let r = json(&a);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    assert_eq!(r["payload"]["runs"].as_array().unwrap().len(), 3);
    assert_eq!(r["payload"]["any_negative"], false);
    assert!(r["payload"]["best"]["final_density"].is_null());
    let min = num(&r, "/payload/min_deficit");
    let runs_min = r["payload"]["runs"].as_array().unwrap().iter().map(|x| x["min_deficit"].as_f64().unwrap()).fold(f64::INFINITY, f64::min);
    assert_eq!(min, runs_min);
}

#[test]
fn optimize_trace_csv_matches_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("trace.csv");
    let r = json(&logsob(&[
        "optimize", "--shape", "circle", "--resolution", "64", "--max-iterations", "20", "--csv", csv_path.to_str().unwrap(), "--emit-density", "-q",
    ]));
    let records = r["payload"]["best"]["records"].as_array().unwrap();
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), records.len());
    let headers = reader.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "deficit").unwrap();
    for (row, rec) in rows.iter().zip(records) {
        assert_eq!(row[col].parse::<f64>().unwrap().to_bits(), rec["deficit"].as_f64().unwrap().to_bits());
    }
    assert_eq!(r["payload"]["best"]["final_density"].as_array().unwrap().len(), 64);
}

fn deficit_of(out: &Output) -> f64 {
    num(&json(out), "/payload/theorem1/deficit")
}

#[test]
fn generated_meshes_reload_with_same_deficit() {
    let dir = tempfile::tempdir().unwrap();
    for (shape, extra, file) in [
        ("sphere2", vec!["--resolution", "642"], "s.off"),
        ("torus3", vec!["--grid", "24x12"], "t.obj"),
        ("clifford", vec!["--grid", "16x16"], "c.json"),
        ("circle", vec!["--resolution", "100"], "k.json"),
    ] {
        let path = dir.path().join(file);
        let p = path.to_str().unwrap();
        let mut gen = vec!["generate", "--shape", shape, "-o", p, "-q"];
        gen.extend(&extra);
        let out = logsob(&gen);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(Path::new(p).exists());
        let mut direct = vec!["verify", "--shape", shape, "--density", "expr:1 + 0.1*x1", "-q"];
        direct.extend(&extra);
        let a = deficit_of(&logsob(&direct));
        let b = deficit_of(&logsob(&["verify", "--mesh", p, "--density", "expr:1 + 0.1*x1", "-q"]));
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{shape}: {a} vs {b}");
    }
}

#[test]
fn density_file_matches_expression() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("c.json");
    let m = mesh.to_str().unwrap();
    assert!(logsob(&["generate", "--shape", "circle", "--resolution", "64", "-o", m, "-q"]).status.success());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&mesh).unwrap()).unwrap();
    let values: Vec<String> = doc["vertices"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| {
            let x = v[0].as_f64().unwrap();
            format!("{:?}", 2.0 + x)
        })
        .collect();
    let file = dir.path().join("f.txt");
    std::fs::write(&file, format!("# density\n{}\n", values.join("\n"))).unwrap();
    let spec = format!("file:{}", file.display());
    let a = deficit_of(&logsob(&["verify", "--mesh", m, "--density", &spec, "--normalize", "-q"]));
    let b = deficit_of(&logsob(&["verify", "--mesh", m, "--density", "expr:2 + x1", "--normalize", "-q"]));
    assert!((a - b).abs() <= 1e-13, "{a} vs {b}");
    std::fs::write(&file, "1 2 3\n").unwrap();
    let short = logsob(&["verify", "--mesh", m, "--density", &spec]);
    assert_eq!(short.status.code(), Some(65));
}
