use std::fs;
use std::path::Path;
use std::process::Command as Proc;

use deglap::runner::{report_summary, run, Command, ExperimentConfig, RunOptions};

fn bin() -> Proc {
    Proc::new(env!("CARGO_BIN_EXE_deglap"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn data_rows(csv_text: &str) -> Vec<Vec<String>> {
    csv_text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn affine_solve_reproduces_boundary_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"command":"solve","p":2,"P":"identity","F":"zero","g":"affine","n":17}"#);
    let out = dir.path().join("out");
    let st = bin().args(["solve", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert!(st.success());
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("solve.json")).unwrap()).unwrap();
    assert!(meta["weak_residual"].as_f64().unwrap() <= 1e-10);
    let h = 1.0 / 16.0;
    for row in data_rows(&fs::read_to_string(out.join("solution.csv")).unwrap()) {
        let (i, j): (f64, f64) = (row[0].parse().unwrap(), row[1].parse().unwrap());
        let v: f64 = row[2].parse().unwrap();
        let affine = 0.25 + i * h - 0.5 * j * h;
        assert!((v - affine).abs() <= 1e-10, "{v} vs {affine}");
    }
    let hash = ExperimentConfig::load(&cfg, None).unwrap().hash();
    assert!(fs::read_to_string(out.join("trace.csv")).unwrap().starts_with(&format!("# config_hash={hash}\n")));
    assert_eq!(meta["config_hash"], hash.as_str());
}

#[test]
fn schema_violations_exit_two_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (i, text) in [
        r#"{"command":"solve","p":2,"tol":1e-9,"max_itr":3}"#,
        r#"{"command":"verify","check":"vphi"}"#,
        r#"{"command":"verify","check":"no_such_check","p":2}"#,
        r#"{"command":"solve","p":2,"g":{"kind":"csv","path":"missing.csv"}}"#,
        r#"{"command":"solve", "p": }"#,
        r#"{"command":"maxop","f":"radial","lambdas":[2,1]}"#,
    ]
    .iter()
    .enumerate()
    {
        let cfg = write(dir.path(), &format!("c{i}.json"), text);
        let o = bin().arg(if text.contains("verify") { "verify" } else if text.contains("maxop") { "maxop" } else { "solve" }).arg("--config").arg(&cfg).arg("--out").arg(&out).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "{text}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    }
    assert!(!out.exists());
}

#[test]
fn command_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"command":"solve","p":2}"#);
    let o = bin().args(["verify", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn maximal_indicator_example_passes() {
    let cfg = ExperimentConfig::from_json_str(r#"{"command":"verify","check":"maximal_indicator","rho":0.1,"j_max":4}"#, Path::new("."), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run(&cfg, &RunOptions { out_dir: Some(dir.path().to_path_buf()), ..Default::default() }).unwrap();
    assert_eq!(out.reports.len(), 1);
    assert!(out.reports[0].passed);
}

#[test]
fn levelset_sweep_writes_one_row_per_eps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", r#"{"command":"sweep","check":"levelset","eps":[0.5,0.1,0.02],"instance":{"n":17,"p":2,"weight":"identity","forcing":"fourier","boundary":"fourier"}}"#);
    let out = dir.path().join("out");
    assert!(bin().args(["sweep", "--config"]).arg(&cfg).arg("--out").arg(&out).status().unwrap().success());
    let rows = data_rows(&fs::read_to_string(out.join("sweep.csv")).unwrap());
    assert_eq!(rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["0.5", "0.1", "0.02"]);
}

#[test]
fn summary_tables_flag_failures_and_guard_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let base = r#"{"command":"verify","check":"sigma","sigma":{"kind":"power","a":2},"samples":500}"#;
    let cfg = ExperimentConfig::from_json_str(base, Path::new("."), Some(Command::Verify)).unwrap();
    let opts = RunOptions { out_dir: Some(dir.path().to_path_buf()), ..Default::default() };
    run(&cfg, &opts).unwrap();
    // Two more reports under the same hash, one of them marked failed.
    let text = fs::read_to_string(dir.path().join("sigma.json")).unwrap();
    fs::write(dir.path().join("copy.json"), &text).unwrap();
    fs::write(dir.path().join("failed.json"), text.replace("\"passed\": true", "\"passed\": false")).unwrap();
    report_summary(dir.path(), false).unwrap();
    let md = fs::read_to_string(dir.path().join("summary.md")).unwrap();
    let rows: Vec<&str> = md.lines().filter(|l| l.starts_with("| sigma")).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().filter(|l| l.contains("**FAIL**")).count(), 1);
    let first = fs::read(dir.path().join("summary.md")).unwrap();
    report_summary(dir.path(), false).unwrap();
    assert_eq!(first, fs::read(dir.path().join("summary.md")).unwrap());

    let other = ExperimentConfig::from_json_str(base, Path::new("."), None).unwrap();
    let mut other = other;
    other.seed = 99;
    run(&other, &RunOptions { out_dir: Some(dir.path().join("b")), ..Default::default() }).unwrap();
    fs::copy(dir.path().join("b/sigma.json"), dir.path().join("zz.json")).unwrap();
    assert_eq!(report_summary(dir.path(), false).unwrap_err().exit_code(), 2);
    assert!(report_summary(dir.path(), true).is_ok());

    let empty = tempfile::tempdir().unwrap();
    let o = bin().arg("summary").arg(empty.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_variable_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "v.json", r#"{"command":"verify","check":"vphi","p":3,"trials":2000,"seed":1}"#);
    let go = |seed: Option<&str>, out: &str| {
        let mut c = bin();
        c.args(["verify", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join(out));
        if let Some(s) = seed {
            c.env("DEGLAP_SEED", s);
        } else {
            c.env_remove("DEGLAP_SEED");
        }
        assert!(c.status().unwrap().success());
        serde_json::from_str::<serde_json::Value>(&fs::read_to_string(dir.path().join(out).join("vphi.json")).unwrap()).unwrap()
    };
    assert_eq!(go(None, "a")["seed"], 1);
    assert_eq!(go(Some("5"), "b")["seed"], 5);
}

#[test]
fn csv_inputs_resolve_against_config_directory() {
    let dir = tempfile::tempdir().unwrap();
    let n = 9;
    let mut g = String::from("i,j,value\n");
    for j in 0..n {
        for i in 0..n {
            g.push_str(&format!("{i},{j},{}\n", (i * j) as f64 * 0.01));
        }
    }
    fs::create_dir(dir.path().join("data")).unwrap();
    write(&dir.path().join("data"), "g.csv", &g);
    let cfg = write(dir.path(), "c.json", r#"{"command":"solve","inputs":{"boundary":"data/g.csv"},"p":3,"n":9,"g":{"kind":"csv","path":"boundary"}}"#);
    let out = dir.path().join("out");
    let o = bin().args(["solve", "--config"]).arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&fs::read_to_string(out.join("solution.csv")).unwrap());
    // Corner cells are pinned to the CSV values.
    let last = rows.last().unwrap();
    assert!((last[2].parse::<f64>().unwrap() - 0.64).abs() < 1e-12);
}
