//! Acceptance run: one pass/fail line per requirement, then supplementary lines.
//!
//! Always exits 0 after the tally; the lines are the result.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use semires::geometry::{BoundaryMetric, Dimension, ModelProblem, Potential};
use semires::resolvent::{
    analytic_free_resolvent_norm, discretize, weighted_resolvent_norm, weighted_resolvent_norm_with, Boundary, BoxGrid,
    FdOrder, OracleOptions, PowerOptions, ResolventError, SweepOptions,
};
use semires_cli::PRESETS;

const S: f64 = 0.7;
const H_SWEEP: [f64; 5] = [0.2, 0.14, 0.1, 0.07, 0.05];

struct Tally {
    lines: Vec<(String, bool, String)>,
}

impl Tally {
    fn line(&mut self, id: &str, passed: bool, text: String) {
        println!("[{}] {id} {text}", if passed { "PASS" } else { "FAIL" });
        self.lines.push((id.to_string(), passed, text));
    }
}

/// Checks of one summary.txt: name -> (verdict, detail).
type Checks = BTreeMap<String, (String, String)>;

struct PresetRun {
    checks: Checks,
    seconds: f64,
    dir: PathBuf,
}

fn parse_summary(text: &str) -> Checks {
    let mut out = Checks::new();
    let mut in_checks = false;
    for line in text.lines() {
        if line.starts_with('[') {
            in_checks = line == "[checks]";
            continue;
        }
        if !in_checks || line.is_empty() {
            continue;
        }
        let (verdict, rest) = line.split_once(' ').expect("verdict");
        let (name, detail) = rest.split_once(" : ").expect("detail");
        out.insert(name.to_string(), (verdict.to_string(), detail.to_string()));
    }
    out
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .expect("output dir")
        .map(|e| {
            let e = e.expect("entry");
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).expect("file"))
        })
        .collect();
    v.sort();
    v
}

fn full_report(preset: &str, dir: &Path) -> (i32, f64) {
    let _ = fs::remove_dir_all(dir);
    let t = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_semires"))
        .args(["full-report", "--preset", preset, "--out", dir.to_str().expect("utf-8 path")])
        .output()
        .expect("binary runs");
    (o.status.code().unwrap_or(-1), t.elapsed().as_secs_f64())
}

fn passed(checks: &Checks, name: &str) -> bool {
    checks.get(name).is_some_and(|(v, _)| v == "PASS" || v == "info-pass")
}

fn detail(checks: &Checks, name: &str) -> String {
    checks.get(name).map_or_else(|| "missing".to_string(), |(v, d)| format!("{v}: {d}"))
}

fn line_model(p: Potential<f64>) -> ModelProblem<f64> {
    ModelProblem::new(Dimension::One, BoundaryMetric::Flat, p, 1.0, 1.0, 0.15).expect("model")
}

fn norm_or_last(op: &semires::Operator, l2: f64) -> f64 {
    match weighted_resolvent_norm_with(op, l2, 0.0, S, S, &PowerOptions::default()) {
        Ok(e) => e.value,
        Err(ResolventError::NotConverged { last, .. }) => last.last().copied().unwrap_or(f64::NAN),
        Err(e) => panic!("norm: {e}"),
    }
}

fn cap_operator(m: &ModelProblem<f64>, h: f64, lambda: f64) -> semires::Operator {
    let o = SweepOptions::for_model(m);
    let g = BoxGrid::resolving(o.half_length, h, lambda, o.ppw, o.order);
    discretize(m, h, &g, Boundary::Cap { strength: 1.0 }).expect("discretize")
}

fn escape_value(dir: &Path, key: &str) -> Option<f64> {
    let text = fs::read_to_string(dir.join("escape_verify.txt")).ok()?;
    text.lines().find_map(|l| l.strip_prefix(&format!("{key} = "))).and_then(|v| v.trim().parse().ok())
}

fn main() {
    let root = std::env::temp_dir().join(format!("semires-acceptance-{}", std::process::id()));
    let mut tally = Tally { lines: Vec::new() };

    // Every preset twice; most checks are read from the first run.
    let mut runs: BTreeMap<&str, PresetRun> = BTreeMap::new();
    let mut determinism = Vec::new();
    for preset in PRESETS {
        let a = root.join(format!("{preset}-a"));
        let b = root.join(format!("{preset}-b"));
        let (code_a, seconds) = full_report(preset, &a);
        let (code_b, _) = full_report(preset, &b);
        let same = code_a == code_b && files(&a) == files(&b);
        determinism.push(format!("{preset}:{}", if same { "identical" } else { "DIFFERENT" }));
        let checks = parse_summary(&fs::read_to_string(a.join("summary.txt")).unwrap_or_default());
        println!("# full-report {preset}: exit {code_a}, {seconds:.1} s");
        runs.insert(preset, PresetRun { checks, seconds, dir: a });
    }

    // Discretization against the analytic free kernel.
    let t0 = Instant::now();
    let free = line_model(Potential::Zero);
    let opts = OracleOptions::default();
    let op = discretize(
        &free,
        0.1,
        &BoxGrid { half_length: 200.0, n: 1 << 15, order: FdOrder::Fourth },
        Boundary::Cap { strength: 1.0 },
    )
    .expect("discretize");
    let n = weighted_resolvent_norm(&op, 1.0, 1e-3, S).expect("norm").value;
    let o = analytic_free_resolvent_norm(1.0, 1e-3, 0.1, S, &opts).expect("oracle");
    let e_tenth = (n / o.refined - 1.0).abs();
    let mut e_sweep = 0.0f64;
    for h in H_SWEEP {
        let n = weighted_resolvent_norm(&cap_operator(&free, h, 1.0), 1.0, 0.0, S).expect("norm").value;
        let o = analytic_free_resolvent_norm(1.0, 0.0, h, S, &opts).expect("oracle");
        e_sweep = e_sweep.max((n / o.refined - 1.0).abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    tally.line(
        "oracle-equivalence",
        e_tenth <= 0.02 && e_sweep <= 0.03 && secs <= 120.0,
        format!(
            "oracle equivalence: {e_tenth:.3e} at h = 0.1 (<= 0.02), max {e_sweep:.3e} over h in 0.2..0.05 (<= 0.03), {secs:.1} s (<= 120 s)"
        ),
    );

    // h^-1 scaling for the non-trapping presets.
    let mut ok = true;
    let mut parts = Vec::new();
    for p in ["zero", "longrange_pow"] {
        let r = &runs[p];
        ok &= passed(&r.checks, "resolvent.slope") && passed(&r.checks, "resolvent.uniformity") && r.seconds <= 600.0;
        parts.push(format!(
            "{p} [{}; {}; full report {:.0} s]",
            detail(&r.checks, "resolvent.slope"),
            detail(&r.checks, "resolvent.uniformity"),
            r.seconds
        ));
    }
    tally.line("resolvent-scaling", ok, format!("resolvent scaling: {}", parts.join(" ")));

    // Trapping contrast at h = 0.05, lambda^2 = 1.
    let t0 = Instant::now();
    let bump = line_model(Potential::DoubleBump { amplitude: 2.0, separation: 3.0 });
    let longrange = line_model(Potential::LongRangePow { amplitude: 0.5, exponent: 1.0 });
    let nb = norm_or_last(&cap_operator(&bump, 0.05, 1.0), 1.0);
    let nz = norm_or_last(&cap_operator(&free, 0.05, 1.0), 1.0);
    let nl = norm_or_last(&cap_operator(&longrange, 0.05, 1.0), 1.0);
    let secs = t0.elapsed().as_secs_f64();
    let (rz, rl) = (nb / nz, nb / nl);
    tally.line(
        "trapping-contrast",
        rz >= 10.0 && rl >= 10.0 && secs <= 300.0,
        format!(
            "trapping contrast at h = 0.05: double_bump {nb:.4e}, zero {nz:.4e} (ratio {rz:.3}), longrange_pow {nl:.4e} (ratio {rl:.3}), need >= 10, {secs:.1} s"
        ),
    );

    // Escape-function proposition.
    let mut ok = true;
    let mut parts = Vec::new();
    for p in ["zero", "longrange_pow"] {
        let r = &runs[p];
        for c in ["escape.proposition", "escape.grid_size", "escape.refinement_drift"] {
            ok &= passed(&r.checks, c);
            parts.push(format!("{p} {}", detail(&r.checks, c)));
        }
        ok &= r.seconds <= 300.0;
    }
    tally.line("escape-proposition", ok, format!("escape proposition: {}", parts.join("; ")));

    // H_p q consistency.
    let mut ok = true;
    let mut parts = Vec::new();
    for p in ["zero", "longrange_pow"] {
        ok &= passed(&runs[p].checks, "escape.hp_consistency");
        parts.push(format!("{p} {}", detail(&runs[p].checks, "escape.hp_consistency")));
    }
    tally.line("hp-consistency", ok, format!("H_p q consistency: {}", parts.join("; ")));

    // Flow integrity on every preset, confinement on double_bump.
    let mut ok = passed(&runs["double_bump"].checks, "flow.confinement");
    let mut worst = Vec::new();
    for p in PRESETS {
        ok &= passed(&runs[p].checks, "flow.energy_drift") && passed(&runs[p].checks, "flow.reversal");
        worst.push(format!(
            "{p} [{}; {}]",
            detail(&runs[p].checks, "flow.energy_drift"),
            detail(&runs[p].checks, "flow.reversal")
        ));
    }
    tally.line(
        "flow-integrity",
        ok,
        format!(
            "flow integrity: {}; double_bump {}",
            worst.join(" "),
            detail(&runs["double_bump"].checks, "flow.confinement")
        ),
    );

    // Commutator slope and the literal two-sided Garding drift.
    let c = &runs["zero"].checks;
    let drift: Vec<&String> = c.keys().filter(|k| k.starts_with("calculus.garding_drift[")).collect();
    let ok = passed(c, "calculus.commutator_slope") && !drift.is_empty() && drift.iter().all(|k| passed(c, k));
    let listed: Vec<String> = drift.iter().map(|k| format!("{k} {}", detail(c, k))).collect();
    tally.line(
        "calculus-facts",
        ok,
        format!("calculus facts: {}; {}", detail(c, "calculus.commutator_slope"), listed.join("; ")),
    );

    // Functional calculus on every preset's line model.
    let mut ok = true;
    let mut parts = Vec::new();
    for p in PRESETS {
        let c = &runs[p].checks;
        ok &= passed(c, "calculus.helffer_sjostrand") && passed(c, "calculus.nonchar");
        parts.push(format!("{p} [{}; {}]", detail(c, "calculus.helffer_sjostrand"), detail(c, "calculus.nonchar")));
    }
    tally.line("functional-calculus", ok, format!("functional calculus: {}", parts.join(" ")));

    // Determinism.
    let ok = determinism.iter().all(|d| d.ends_with("identical"));
    tally.line("determinism", ok, format!("byte-identical re-runs: {}", determinism.join(", ")));

    println!("# supplementary (not counted)");
    // Outgoing constant of the long-range model against the free one.
    let cz = escape_value(&runs["zero"].dir, "c_second");
    let cl = escape_value(&runs["longrange_pow"].dir, "c_second");
    match (cz, cl) {
        (Some(a), Some(b)) => {
            let r = b / a;
            tally.line(
                "extra:outgoing-constant",
                (0.5..=2.0).contains(&r),
                format!("longrange_pow c'' / zero c'' = {r:.3} ({b:.3e} / {a:.3e}), within 2x"),
            );
        }
        _ => tally.line("extra:outgoing-constant", false, "c'' unavailable".into()),
    }

    // Fixed-t doubling of the oracle under h-halving.
    let a = analytic_free_resolvent_norm(1.0, 0.01, 0.1, S, &opts).expect("oracle").refined;
    let b = analytic_free_resolvent_norm(1.0, 0.01, 0.05, S, &opts).expect("oracle").refined;
    tally.line(
        "extra:oracle-fixed-t",
        (b / a / 2.0 - 1.0).abs() <= 0.03,
        format!("oracle n(0.05)/n(0.1) at t = 0.01: {:.4}, expected 2 within 3%", b / a),
    );

    // Trapping contrast as a supremum over the energy window.
    let t0 = Instant::now();
    let lam = 1.1f64.sqrt();
    let opb = cap_operator(&bump, 0.05, lam);
    let opl = cap_operator(&longrange, 0.05, lam);
    let sup_b = (0..=100).map(|k| norm_or_last(&opb, 0.9 + 0.002 * k as f64)).fold(0.0, f64::max);
    let sup_l = (0..=10).map(|k| norm_or_last(&opl, 0.9 + 0.02 * k as f64)).fold(0.0, f64::max);
    tally.line(
        "extra:window-contrast",
        sup_b / sup_l >= 10.0,
        format!(
            "window sup over lambda^2 in [0.9, 1.1]: double_bump {sup_b:.4e}, longrange_pow {sup_l:.4e}, ratio {:.1} ({:.1} s)",
            sup_b / sup_l,
            t0.elapsed().as_secs_f64()
        ),
    );

    // One-sided Garding bound and the fitted exponent.
    let c = &runs["zero"].checks;
    let keys: Vec<&String> = c
        .keys()
        .filter(|k| k.starts_with("calculus.garding_bound[") || k.starts_with("calculus.garding_exponent["))
        .collect();
    let ok = !keys.is_empty() && keys.iter().all(|k| passed(c, k));
    let listed: Vec<String> = keys.iter().map(|k| format!("{k} {}", detail(c, k))).collect();
    tally.line("extra:garding-one-sided", ok, format!("Garding one-sided: {}", listed.join("; ")));

    let crit = tally.lines.iter().filter(|(id, _, _)| !id.starts_with("extra:"));
    let (n, p) = crit.fold((0, 0), |(n, p), (_, ok, _)| (n + 1, p + usize::from(*ok)));
    println!("# acceptance lines passed: {p}/{n}");
    let _ = fs::remove_dir_all(&root);
}
