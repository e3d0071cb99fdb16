use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use semires_cli::{execute, Command as Cmd, Config};

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("semires-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    d
}

fn semires(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semires")).args(args).output().expect("binary runs")
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn presets_resolve_and_validate() {
    for name in semires_cli::PRESETS {
        let c = Config::resolve(None, Some(name)).unwrap();
        assert_eq!(c.preset, name);
        c.model_problem().unwrap();
    }
    let c = Config::resolve(None, None).unwrap();
    assert_eq!(c.preset, "zero");
    assert!(Config::resolve(None, Some("torus")).unwrap_err().0.contains("unknown preset"));
}

#[test]
fn file_overrides_preset_and_flag_overrides_file_preset() {
    let text = "preset = \"longrange_pow\"\n[model]\namplitude = 0.25\n[resolvent]\ns = 0.8\n";
    let c = Config::resolve(Some(text), None).unwrap();
    assert_eq!(c.model.potential, "longrange_pow");
    assert_eq!(c.model.amplitude, 0.25);
    assert_eq!(c.resolvent.s, 0.8);
    assert_eq!(c.resolvent.h, Config::default().resolvent.h);
    let c = Config::resolve(Some(text), Some("well")).unwrap();
    assert_eq!(c.preset, "well");
    assert_eq!(c.model.potential, "well");
    assert_eq!(c.model.amplitude, 0.25);
}

#[test]
fn hash_tracks_the_resolved_config_only() {
    let a = Config::resolve(None, Some("zero")).unwrap();
    let b = Config::resolve(Some("output = \"elsewhere\"\n"), Some("zero")).unwrap();
    let c = Config::resolve(Some("[model]\ndelta = 0.1\n"), Some("zero")).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), c.hash());
    assert_eq!(a.hash().len(), 64);
    let round = Config::resolve(Some(&a.canonical()), None).unwrap();
    assert_eq!(round, a);
}

#[test]
fn diagnostics_name_the_field() {
    let e = Config::resolve(Some("[model]\nlambda = 1.0\n"), None).unwrap_err().0;
    assert!(e.contains("lambda") && e.contains("line 2"), "{e}");
    let e = Config::resolve(Some("[resolvent]\nh = [0.1, 0.2]\n"), None).unwrap_err().0;
    assert!(e.starts_with("resolvent.h"), "{e}");
    let e = Config::resolve(Some("[escape]\neps = 0.3\n"), None).unwrap_err().0;
    assert!(e.starts_with("escape.eps"), "{e}");
    let e = Config::resolve(Some("[model]\ndelta = 2.0\n"), None).unwrap_err().0;
    assert!(e.starts_with("model:"), "{e}");
    let e = Config::resolve(Some("[model]\npotential = \"coulomb\"\n"), None).unwrap_err().0;
    assert!(e.starts_with("model.potential"), "{e}");
}

#[test]
fn malformed_config_exits_nonzero_without_outputs() {
    let dir = scratch("malformed");
    fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("bad.toml");
    fs::write(&cfg, "[flow]\nsamples = \"many\"\n").unwrap();
    let out = dir.join("out");
    let o = semires(&["flow-scan", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("samples"));
    assert!(!out.exists());
    let o = semires(&["flow-scan", "--config", dir.join("missing.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn full_report_on_the_free_line_passes() {
    let out = scratch("free");
    let o = semires(&["full-report", "--preset", "zero", "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(!stdout.contains("FAIL"));
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    let cfg = Config::resolve(None, Some("zero")).unwrap();
    assert!(summary.contains(&format!("config_sha256 = {}", cfg.hash())));
    assert!(summary.contains("status = pass"));
    assert!(summary.ends_with(&cfg.canonical()));
    for name in ["flow_scan.csv", "escape_slice.csv", "calculus.csv", "resolvent_cap.csv", "resolvent_oracle.csv"] {
        let body = fs::read_to_string(out.join(name)).unwrap();
        assert!(body.starts_with(&format!("# {}\n# config_sha256 = {}\n", semires_cli::VERSION, cfg.hash())), "{name}");
    }
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn trapping_sweep_is_flagged_and_skips_the_slope() {
    let out = scratch("bump");
    let o = semires(&["resolvent-sweep", "--preset", "double_bump", "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("PASS resolvent.trapping_flag"));
    assert!(stdout.contains("slope check skipped"));
    assert!(!stdout.contains("PASS resolvent.slope"));
    let _ = fs::remove_dir_all(&out);
}

#[test]
fn unexpected_trapping_fails_the_run() {
    let cfg = Config::resolve(Some("[model]\nexpect_trapping = false\n"), Some("double_bump")).unwrap();
    let report = execute(Cmd::FlowScan, &cfg).unwrap();
    assert!(!report.passed());
    assert!(report.checks.iter().any(|c| c.name == "flow.verdict" && !c.passed));
}

#[test]
fn planar_models_skip_unsupported_stages() {
    let cfg = Config::resolve(None, Some("plane")).unwrap();
    let report = execute(Cmd::ResolventSweep, &cfg).unwrap();
    assert!(report.checks.is_empty());
    assert!(report.notices[0].contains("dimension 1 only"));
    assert!(report.passed());
}

#[test]
fn reruns_are_byte_identical_across_job_counts() {
    let a = scratch("det-a");
    let b = scratch("det-b");
    let cfg = "[flow]\nsamples = 60\nprobes = 3\n";
    let path = std::env::temp_dir().join(format!("semires-cli-{}-det.toml", std::process::id()));
    fs::write(&path, cfg).unwrap();
    for (dir, jobs) in [(&a, "1"), (&b, "2")] {
        let o = semires(&[
            "flow-scan",
            "--preset",
            "longrange_pow",
            "--config",
            path.to_str().unwrap(),
            "--jobs",
            jobs,
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    let (ra, rb) = (read_dir_sorted(&a), read_dir_sorted(&b));
    assert_eq!(ra.len(), 5);
    assert_eq!(ra, rb);
    for d in [a, b] {
        let _ = fs::remove_dir_all(d);
    }
    let _ = fs::remove_file(path);
}
