use std::path::PathBuf;
use std::process::{Command, Output};

fn uwbjam(out: &PathBuf, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uwbjam"))
        .args(args)
        .env("UWBJAM_OUT_DIR", out)
        .current_dir(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
        .output()
        .unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("uwbjam-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn simulate_writes_trace_and_report_reproduces_summary() {
    let out = scratch("sim");
    let run = uwbjam(&out, &["simulate", "scenarios/sync-jam.toml"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let trace = out.join("sync-jam.jsonl");
    assert!(trace.exists());
    let report = uwbjam(&out, &["report", trace.to_str().unwrap()]);
    assert!(report.status.success());
    assert_eq!(report.stdout, run.stdout);
    let summary = String::from_utf8(run.stdout).unwrap();
    assert!(summary.contains("\"success_rate\": 1.0"), "{summary}");
}

#[test]
fn experiment_output_is_reproducible() {
    let out = scratch("exp");
    let args = ["experiment", "cir-degradation", "--sweep", "1,15", "--replicates", "8", "--seed", "5"];
    let a = uwbjam(&out, &args);
    assert!(a.status.success());
    let first = std::fs::read(out.join("cir_degradation.csv")).unwrap();
    let b = uwbjam(&out, &args);
    assert!(b.status.success());
    assert_eq!(first, std::fs::read(out.join("cir_degradation.csv")).unwrap());
    assert!(String::from_utf8(first).unwrap().starts_with("gain,predicted_factor,measured_factor,replicates\n"));
}

#[test]
fn invalid_input_exits_nonzero() {
    let out = scratch("bad");
    assert!(!uwbjam(&out, &["experiment", "nope"]).status.success());
    assert!(!uwbjam(&out, &["experiment", "field_sweep", "--sessions", "0"]).status.success());
    assert!(!uwbjam(&out, &["simulate", "missing.toml"]).status.success());
    let bad = out.join("bad.jsonl");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(&bad, "not json\n").unwrap();
    assert!(!uwbjam(&out, &["report", bad.to_str().unwrap()]).status.success());
}

#[test]
fn domains_prints_search_sizes() {
    let out = scratch("dom");
    let o = uwbjam(&out, &["domains"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("full search space: 516096"));
    assert!(text.contains("= 268"));
}

#[test]
fn sniff_demo_recovers_the_configuration() {
    let out = scratch("sniff");
    let o = uwbjam(&out, &["sniff-demo", "--seed", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8(o.stdout).unwrap().contains("sniffed after"));
}
