//! The six subcommands. Each one appends checks and files to a [`Report`].

use std::fmt::Write as _;

use anyhow::{Context as _, Result};

use semires::escape::{
    assemble_escape, flow_consistency, verify_proposition, write_slice_csv, EscapeError, GridSpec, PropositionReport,
};
use semires::flow::{flow_for, integrate_flow, nontrapping_scan, slab_samples, FlowOptions, SampleSpec};
use semires::geometry::{BoundaryMetric, Dimension, ModelProblem, PhasePoint, Potential};
use semires::quantize::{commutator_defect, garding_floor, BandLimit, Factor, GridQuantization, NormOptions, Symbol};
use semires::resolvent::{
    analytic_free_resolvent_norm, discretize, function_of_operator, h_sweep, least_squares_slope, nonchar_bound,
    spectral_distance, Boundary, BoxGrid, CalculusMethod, FdOrder, OracleOptions, ScalingReport, SweepOptions, TRule,
    CAP_INNER_FRACTION,
};
use semires::smooth::PlateauBump;
use semires::Escape;

use crate::config::Config;
use crate::report::Report;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    FlowScan,
    EscapeBuild,
    EscapeVerify,
    CalculusTests,
    ResolventSweep,
    FullReport,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::FlowScan => "flow-scan",
            Command::EscapeBuild => "escape-build",
            Command::EscapeVerify => "escape-verify",
            Command::CalculusTests => "calculus-tests",
            Command::ResolventSweep => "resolvent-sweep",
            Command::FullReport => "full-report",
        }
    }
}

enum EscapeState {
    Built(Box<Escape>),
    Trapping(usize),
    Unsupported,
}

pub struct Runner<'a> {
    cfg: &'a Config,
    model: ModelProblem<f64>,
    escape: Option<EscapeState>,
    escape_recorded: bool,
    pub report: Report,
}

fn e12(v: f64) -> String {
    format!("{v:.12e}")
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a Config) -> Result<Self> {
        Ok(Self { cfg, model: cfg.model_problem()?, escape: None, escape_recorded: false, report: Report::default() })
    }

    pub fn run(&mut self, cmd: Command) -> Result<()> {
        match cmd {
            Command::FlowScan => self.flow_scan(),
            Command::EscapeBuild => self.escape_build(),
            Command::EscapeVerify => self.escape_verify(),
            Command::CalculusTests => self.calculus_tests(),
            Command::ResolventSweep => self.resolvent_sweep(),
            Command::FullReport => {
                self.flow_scan()?;
                self.escape_build()?;
                self.escape_verify()?;
                self.calculus_tests()?;
                self.resolvent_sweep()
            }
        }
    }

    fn expect_trapping(&self) -> bool {
        self.cfg.model.expect_trapping
    }

    fn flow_options(&self) -> FlowOptions<f64> {
        let f = &self.cfg.flow;
        FlowOptions { tol: f.tol, r_esc: f.r_esc, t_max: f.t_max, ..FlowOptions::default() }
    }

    fn flow_scan(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let f = &cfg.flow;
        let m = &self.model;
        let opts = self.flow_options();
        let verdict = nontrapping_scan(m, &SampleSpec { count: f.samples, r_max: f.r_esc, flow: opts });
        let mut body = Vec::new();
        verdict.write_csv(&mut body).context("flow scan output")?;
        self.report.csv("flow_scan.csv", cfg, body);
        let trapped = verdict.trapped_witnesses.len();
        let expected = if self.expect_trapping() { "trapping" } else { "non-trapping" };
        self.report.check(
            "flow.verdict",
            verdict.is_nontrapping_empirical != self.expect_trapping(),
            format!("{trapped} of {} samples trapped, expected {expected}", verdict.sampled_points),
        );

        let probes = slab_samples(m, f.probes, 4.0);
        let mut rows = Vec::new();
        let (mut worst_drift, mut worst_return) = (0.0f64, 0.0f64);
        for (i, (pt, _)) in probes.iter().enumerate() {
            let p0 = m.symbol(pt);
            let tr = integrate_flow(m, pt, (-f.span, f.span), &opts).context("probe trajectory")?;
            if i == 0 {
                let mut b = Vec::new();
                tr.write_csv(m, &mut b).context("trajectory output")?;
                self.report.csv("flow_trajectory.csv", cfg, b);
            }
            let drift = tr.energy_drift / (1.0 + p0.abs());
            let fwd = flow_for(m, pt, f.span, &opts).context("reversal forward leg")?;
            let back = flow_for(m, &fwd, -f.span, &opts).context("reversal backward leg")?;
            let ret =
                (0..2).map(|k| (back.z[k] - pt.z[k]).abs() + (back.zeta[k] - pt.zeta[k]).abs()).fold(0.0, f64::max);
            worst_drift = worst_drift.max(drift);
            worst_return = worst_return.max(ret);
            rows.push(vec![
                i.to_string(),
                e12(pt.z[0]),
                e12(pt.z[1]),
                e12(pt.zeta[0]),
                e12(pt.zeta[1]),
                e12(drift),
                e12(ret),
            ]);
        }
        self.report.csv(
            "flow_integrity.csv",
            cfg,
            csv_bytes(&["probe", "z1", "z2", "zeta1", "zeta2", "relative_drift", "return_error"], &rows)?,
        );
        self.report.check(
            "flow.energy_drift",
            worst_drift <= 1e-8,
            format!("max relative drift {worst_drift:.3e} over t in [-{0}, {0}], limit 1e-8", f.span),
        );
        self.report.check(
            "flow.reversal",
            worst_return <= 1e-6,
            format!("max return error {worst_return:.3e} after +-{}, limit 1e-6", f.span),
        );

        if let Potential::DoubleBump { .. } = m.potential {
            let e = m.lambda2() - m.potential.value(0.0);
            if e > 0.0 {
                let start = m.point([0.0, 0.0], [e.sqrt(), 0.0]);
                let tr = integrate_flow(m, &start, (0.0, f.confinement_time), &opts).context("interior orbit")?;
                let zmax = tr.samples.iter().map(|(_, p)| p.radius()).fold(0.0, f64::max);
                self.report.check(
                    "flow.confinement",
                    zmax <= f.confinement_radius,
                    format!(
                        "interior orbit reaches |z| = {zmax:.6} for t <= {}, limit {}",
                        f.confinement_time, f.confinement_radius
                    ),
                );
            }
        }
        Ok(())
    }

    fn escape(&mut self) -> Result<&EscapeState> {
        if self.escape.is_none() {
            let state = if self.model.dimension == Dimension::Two {
                EscapeState::Unsupported
            } else {
                match assemble_escape(&self.model, self.cfg.escape.eps) {
                    Ok(q) => EscapeState::Built(Box::new(q)),
                    Err(EscapeError::Trapping(w)) => EscapeState::Trapping(w.len()),
                    Err(e) => return Err(e).context("escape function assembly"),
                }
            };
            self.escape = Some(state);
        }
        Ok(self.escape.as_ref().expect("set above"))
    }

    /// Records the outcome of assembly when no escape function exists; true when one does.
    fn escape_available(&mut self, what: &str) -> Result<bool> {
        let expect = self.expect_trapping();
        let first = !std::mem::replace(&mut self.escape_recorded, true);
        match self.escape()? {
            EscapeState::Built(_) => {
                if expect {
                    if first {
                        self.report.check(
                            "escape.trapping_refused",
                            false,
                            "assembly succeeded on a model expected to trap",
                        );
                    }
                    return Ok(false);
                }
                Ok(true)
            }
            EscapeState::Trapping(n) => {
                let n = *n;
                if first {
                    self.report.check(
                        "escape.trapping_refused",
                        expect,
                        format!("assembly refused: {n} trapped witnesses in the energy window"),
                    );
                }
                self.report.notice(format!("{what} skipped: no escape function exists for a trapping model"));
                Ok(false)
            }
            EscapeState::Unsupported => {
                self.report.notice(format!("{what} skipped: the escape construction supports dimension 1 only"));
                Ok(false)
            }
        }
    }

    fn built(&self) -> &Escape {
        match &self.escape {
            Some(EscapeState::Built(q)) => q,
            _ => unreachable!("checked by escape_available"),
        }
    }

    fn escape_build(&mut self) -> Result<()> {
        if !self.escape_available("escape-build")? {
            return Ok(());
        }
        let cfg = self.cfg;
        let q = self.built();
        let k = q.constants();
        let opt = |v: Option<f64>| v.map_or("none".to_string(), e12);
        let mut s = String::new();
        let _ = writeln!(s, "model = {}", q.model.potential.name());
        let _ = writeln!(s, "eps = {}", e12(q.eps));
        let _ = writeln!(s, "M = {}", e12(k.m));
        let _ = writeln!(s, "c1 = {}", e12(k.c1));
        let _ = writeln!(s, "eps1 = {}", e12(k.eps1));
        let _ = writeln!(s, "x0 = {}", e12(k.x0));
        let _ = writeln!(s, "delta1 = {}", e12(k.delta1));
        let _ = writeln!(s, "tubes = {}", q.tubes.tubes.len());
        let _ = writeln!(s, "tube_certified_points = {}", q.tubes.certified_points);
        let _ = writeln!(s, "C = {}", e12(q.c));
        let _ = writeln!(s, "C_prime = {}", e12(q.c_prime));
        let _ = writeln!(s, "C_second = {}", e12(q.c_second));
        let _ = writeln!(s, "c2 = {}", opt(q.c2));
        let _ = writeln!(s, "c3 = {}", opt(q.c3));
        let _ = writeln!(s, "c4 = {}", opt(q.c4));
        let slice = energy_slice(&q.model, 2.0 / k.x0, cfg.escape.slice_points);
        let mut body = Vec::new();
        write_slice_csv(q, &slice, &mut body).context("escape slice")?;
        let ok = k.c1 > 0.0 && k.x0 > 0.0 && q.c > 0.0 && !q.tubes.tubes.is_empty();
        let detail = format!("x0 = {:.4e}, {} tubes, C = {:.4e}", k.x0, q.tubes.tubes.len(), q.c);
        self.report.text("escape_constants.txt", cfg, &s);
        self.report.csv("escape_slice.csv", cfg, body);
        self.report.check("escape.assembled", ok, detail);
        Ok(())
    }

    fn escape_verify(&mut self) -> Result<()> {
        if !self.escape_available("escape-verify")? {
            return Ok(());
        }
        let cfg = self.cfg;
        let e = &cfg.escape;
        let spec = GridSpec { n_z: e.n_z, n_e: e.n_e, x_min: e.x_min };
        let q = self.built();
        let base = proposition(q, &spec)?;
        let refined = if e.refine { Some(proposition(q, &spec.refined())?) } else { None };
        let hp = flow_consistency(q, &spec, e.hp_points, e.hp_delta).context("H_p q consistency")?;

        let mut s = String::new();
        let mut checks = Vec::new();
        match &base {
            Ok(r) => {
                let mut b = Vec::new();
                r.write_summary(&mut b)?;
                s.push_str("[grid]\n");
                s.push_str(&String::from_utf8(b)?);
                checks.push((
                    "escape.proposition",
                    r.passed(),
                    format!("c' = {:.4e}, c'' = {:.4e}, c0 = {:.4e}", r.c_prime, r.c_second, r.c0),
                ));
                checks.push((
                    "escape.grid_size",
                    r.grid_points >= 100_000,
                    format!("{} grid points, {} in supp psi, need >= 1e5", r.grid_points, r.support_points),
                ));
            }
            Err(reason) => {
                let _ = writeln!(s, "[grid]\nviolated = {reason}");
                checks.push(("escape.proposition", false, reason.clone()));
            }
        }
        if let Some(refined) = &refined {
            match (&base, refined) {
                (Ok(a), Ok(b)) => {
                    let mut buf = Vec::new();
                    b.write_summary(&mut buf)?;
                    s.push_str("\n[refined]\n");
                    s.push_str(&String::from_utf8(buf)?);
                    let d1 = (b.c_prime / a.c_prime - 1.0).abs();
                    let d2 = (b.c_second / a.c_second - 1.0).abs();
                    checks.push((
                        "escape.refinement_drift",
                        d1 <= 0.2 && d2 <= 0.2,
                        format!("c' drift {d1:.3e}, c'' drift {d2:.3e} under 2x refinement, limit 0.2"),
                    ));
                }
                (_, Err(reason)) => {
                    let _ = writeln!(s, "\n[refined]\nviolated = {reason}");
                    checks.push(("escape.refinement_drift", false, format!("refined grid: {reason}")));
                }
                (Err(_), Ok(_)) => {}
            }
        }
        let _ = writeln!(s, "\n[hp_consistency]");
        let _ = writeln!(s, "points = {}", hp.points);
        let _ = writeln!(s, "delta = {}", e12(e.hp_delta));
        let _ = writeln!(s, "worst_relative = {}", e12(hp.worst_relative));
        let _ = writeln!(s, "worst_at = {}", hp.worst);
        checks.push((
            "escape.hp_consistency",
            hp.worst_relative <= 1e-4,
            format!("worst relative error {:.3e} at {} points, limit 1e-4", hp.worst_relative, hp.points),
        ));
        self.report.text("escape_verify.txt", cfg, &s);
        for (name, ok, detail) in checks {
            self.report.check(name, ok, detail);
        }
        Ok(())
    }

    fn calculus_tests(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let c = &cfg.calculus;

        // Commutator defect of (ζ², e^{−z²}).
        let a = Symbol::of_zeta(Factor::square());
        let b = Symbol::of_z(Factor::gaussian());
        let mut rows = Vec::new();
        let mut defects = Vec::new();
        for &h in &c.commutator_h {
            let q = GridQuantization::new(8.0, c.commutator_n, h)?;
            let d = commutator_defect(&a, &b, &q, &BandLimit::default(), &NormOptions::default())?;
            defects.push(d);
            rows.push(vec!["commutator".into(), "zeta^2,exp(-z^2)".into(), e12(h), e12(d)]);
        }
        let exponent = fitted_exponent(&c.commutator_h, &defects);
        self.report.check(
            "calculus.commutator_slope",
            (exponent - 1.0).abs() <= 0.2,
            format!("defect ~ h^{exponent:.4}, expected exponent 1 +- 0.2"),
        );

        // Gårding floors of nonnegative symbols.
        let suite: [(&str, Symbol<f64>); 2] = [
            (
                "sin^2(z)exp(-zeta^2)",
                Symbol::product(Factor::sin_squared(), Factor::gaussian()).with_momentum_support(5.0),
            ),
            (
                "sin^2(z)zeta^2exp(-zeta^2)",
                Symbol::product(
                    Factor::sin_squared(),
                    Factor::new(|s: f64| {
                        let g = (-s * s).exp();
                        (s * s * g, (2.0 * s - 2.0 * s * s * s) * g)
                    }),
                )
                .with_momentum_support(6.0),
            ),
        ];
        for (name, sym) in &suite {
            let mut floors = Vec::new();
            for &h in &c.garding_h {
                let q = GridQuantization::new(std::f64::consts::FRAC_PI_2, c.garding_n, h)?;
                let f = garding_floor(sym, &q)?;
                floors.push(f);
                rows.push(vec!["garding".into(), (*name).into(), e12(h), e12(f)]);
            }
            let ratios: Vec<f64> = floors.iter().zip(&c.garding_h).map(|(f, h)| (-f).max(0.0) / h).collect();
            let monotone = ratios.windows(2).all(|w| w[1] <= 1.05 * w[0]);
            let listed = ratios.iter().map(|r| format!("{r:.4e}")).collect::<Vec<_>>().join(", ");
            self.report.check(
                &format!("calculus.garding_bound[{name}]"),
                monotone,
                format!("max(-floor, 0)/h = [{listed}], must not grow as h decreases"),
            );
            let hi = ratios.iter().copied().fold(0.0, f64::max);
            let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            let drift = if lo > 0.0 {
                hi / lo - 1.0
            } else if hi == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            self.report.info(
                &format!("calculus.garding_drift[{name}]"),
                drift <= 0.5,
                format!("two-sided drift of |floor|/h = {drift:.3e}, limit 0.5"),
            );
            if floors.iter().all(|f| *f < 0.0) {
                let e = fitted_exponent(&c.garding_h, &floors.iter().map(|f| -f).collect::<Vec<_>>());
                self.report.info(
                    &format!("calculus.garding_exponent[{name}]"),
                    e >= 1.0,
                    format!("|floor| ~ h^{e:.4}"),
                );
            }
        }

        // Functional calculus on a Dirichlet box with the model's potential on the line.
        let line = ModelProblem::new(
            Dimension::One,
            BoundaryMetric::Flat,
            self.model.potential,
            self.model.gamma,
            self.model.lambda2(),
            self.model.delta,
        )?;
        let lambda2 = line.lambda2();
        let psi = PlateauBump::new(lambda2, 0.25, 0.5);
        let f = |s: f64| psi.value(s);
        let grid = BoxGrid { half_length: c.hs_half_length, n: c.hs_n, order: FdOrder::Second };
        let op = discretize(&line, c.hs_h, &grid, Boundary::Dirichlet)?;
        let support = (psi.lower(), psi.upper());
        let hs = CalculusMethod::HelfferSjostrand {
            order: c.hs_order,
            nodes: c.hs_nodes,
            support,
            height: (support.1 - support.0) / 50.0,
        };
        let exact = function_of_operator(&op, &f, CalculusMethod::Eigen)?;
        let approx = function_of_operator(&op, &f, hs)?;
        let dist = spectral_distance(&op, &exact, &approx)?;
        rows.push(vec!["helffer_sjostrand".into(), "plateau_bump".into(), e12(c.hs_h), e12(dist)]);
        self.report.check(
            "calculus.helffer_sjostrand",
            dist <= 1e-5,
            format!("eigen vs quadrature distance {dist:.3e} at N = {}, limit 1e-5", c.hs_n),
        );

        let mut worst = 0.0f64;
        let mut bounds = Vec::new();
        for &h in &c.nonchar_h {
            let op = discretize(&line, h, &grid, Boundary::Dirichlet)?;
            let r = nonchar_bound(&op, &f, lambda2, &c.nonchar_t)?;
            for (t, v, s) in &r.per_t {
                worst = worst.max(v / s);
                rows.push(vec!["nonchar".into(), format!("t={}", e12(*t)), e12(h), e12(*v)]);
                rows.push(vec!["nonchar_scalar".into(), format!("t={}", e12(*t)), e12(h), e12(*s)]);
            }
            bounds.push(r.bound);
        }
        self.report.check(
            "calculus.nonchar",
            worst <= 1.05,
            format!(
                "max operator/scalar ratio {worst:.6} over {} t values and {} h values, limit 1.05",
                c.nonchar_t.len(),
                c.nonchar_h.len()
            ),
        );
        let hi = bounds.iter().copied().fold(0.0, f64::max);
        let lo = bounds.iter().copied().fold(f64::INFINITY, f64::min);
        self.report.info(
            "calculus.nonchar_h_drift",
            hi / lo - 1.0 < 0.1,
            format!("bound drift {:.3e} across h", hi / lo - 1.0),
        );
        self.report.csv("calculus.csv", cfg, csv_bytes(&["test", "symbol", "h", "value"], &rows)?);
        Ok(())
    }

    fn resolvent_sweep(&mut self) -> Result<()> {
        if self.model.dimension == Dimension::Two {
            self.report.notice("resolvent-sweep skipped: the discretization supports dimension 1 only");
            return Ok(());
        }
        let cfg = self.cfg;
        let r = &cfg.resolvent;
        let model = self.model.clone();
        let m = &model;
        let lambda2 = m.lambda2();
        let d = m.delta / 2.0;
        let opts = SweepOptions {
            half_length: r.half_length,
            ppw: r.ppw,
            order: cfg.fd_order(),
            lambda2_offsets: vec![-d, 0.0, d],
            scan_samples: r.scan_samples,
            ..SweepOptions::for_model(m)
        };
        let cap = TRule::Cap { strength: r.cap_strength };
        let dir = TRule::DirichletFraction(r.t_fraction);
        let (main, other) = if r.mode == "cap" { (cap, dir) } else { (dir, cap) };
        let rep = h_sweep(m, lambda2, &r.h, main, r.s, &opts).context("h sweep")?;
        self.sweep_csv(&rep)?;
        self.report.check(
            "resolvent.converged",
            !rep.partial,
            if rep.partial { "some power iterations did not converge" } else { "all power iterations converged" },
        );
        let norms = rep.central_norms();
        let last = *norms.last().expect("at least two h values");
        if rep.trapping {
            self.report.check(
                "resolvent.trapping_flag",
                self.expect_trapping(),
                format!("flow scan found trapping; norm {last:.4e} at h = {}", r.h[r.h.len() - 1]),
            );
            self.report.notice(
                "resolvent-sweep: non-trapping slope check skipped because the flow scan found trapped trajectories",
            );
            self.report.info("resolvent.slope", true, format!("fitted exponent {:.4} (not checked)", rep.slope));
            return Ok(());
        }
        if self.expect_trapping() {
            self.report.check("resolvent.trapping_flag", false, "trapping expected but the flow scan found none");
        }
        self.report.check(
            "resolvent.slope",
            (0.85..=1.15).contains(&rep.slope),
            format!("fitted exponent {:.4} (rms {:.2e}), range [0.85, 1.15]", rep.slope, rep.residual),
        );
        if matches!(m.potential, Potential::Zero) {
            self.report.check(
                "resolvent.free_slope",
                (rep.slope - 1.0).abs() <= 0.05,
                format!("fitted exponent {:.4}, expected 1 +- 0.05", rep.slope),
            );
        }
        self.report.check(
            "resolvent.uniformity",
            rep.max_uniformity() <= 3.0,
            format!("max/min over lambda^2 offsets {:.4}, limit 3", rep.max_uniformity()),
        );
        let mut cap_rep = if r.mode == "cap" { Some(rep.clone()) } else { None };
        if r.compare_modes {
            let alt = h_sweep(m, lambda2, &r.h, other, r.s, &opts).context("comparison sweep")?;
            self.sweep_csv(&alt)?;
            let b = *alt.central_norms().last().expect("rows");
            let ratio = last / b;
            self.report.check(
                "resolvent.mode_agreement",
                (0.5..=2.0).contains(&ratio) && !alt.partial,
                format!(
                    "{} / {} norm ratio {ratio:.4} at h = {}, range [0.5, 2]",
                    rep.mode,
                    alt.mode,
                    r.h[r.h.len() - 1]
                ),
            );
            if r.mode != "cap" {
                cap_rep = Some(alt);
            }
        }
        if r.oracle && matches!(m.potential, Potential::Zero) {
            match cap_rep {
                Some(c) => self.oracle(&c)?,
                None => self.report.notice("oracle comparison skipped: it needs the cap sweep (enable compare_modes)"),
            }
        }
        Ok(())
    }

    fn sweep_csv(&mut self, rep: &ScalingReport<f64>) -> Result<()> {
        let mut body = Vec::new();
        rep.write_csv(&mut body).context("sweep output")?;
        self.report.csv(&format!("resolvent_{}.csv", rep.mode), self.cfg, body);
        Ok(())
    }

    fn oracle(&mut self, rep: &ScalingReport<f64>) -> Result<()> {
        let r = &self.cfg.resolvent;
        let opts = OracleOptions { half_width: CAP_INNER_FRACTION * r.half_length, ..OracleOptions::default() };
        let mut rows = Vec::new();
        let (mut worst, mut at_tenth) = (0.0f64, None);
        for (&h, &n) in rep.h_values.iter().zip(rep.central_norms().iter()) {
            let o = analytic_free_resolvent_norm(rep.lambda2, 0.0, h, rep.s, &opts).context("oracle")?;
            let err = (n / o.refined - 1.0).abs();
            worst = worst.max(err);
            if (h - 0.1).abs() < 1e-12 {
                at_tenth = Some(err);
            }
            rows.push(vec![e12(h), e12(n), e12(o.value), e12(o.refined), e12(err), o.certified().to_string()]);
        }
        self.report.csv(
            "resolvent_oracle.csv",
            self.cfg,
            csv_bytes(&["h", "discrete", "oracle", "oracle_refined", "relative_error", "certified"], &rows)?,
        );
        if let Some(e) = at_tenth {
            self.report.check(
                "resolvent.oracle_h0.1",
                e <= 0.02,
                format!("relative error {e:.3e} at h = 0.1, limit 0.02"),
            );
        }
        self.report.check(
            "resolvent.oracle",
            worst <= 0.03,
            format!("max relative error {worst:.3e} over the sweep, limit 0.03"),
        );
        Ok(())
    }
}

/// The proposition on one grid; a violation becomes its message.
fn proposition(q: &Escape, spec: &GridSpec) -> Result<Result<PropositionReport, String>> {
    match verify_proposition(q, spec) {
        Ok(r) => Ok(Ok(r)),
        Err(e @ EscapeError::PropositionViolated { .. }) => Ok(Err(e.to_string())),
        Err(e) => Err(e).context("proposition check"),
    }
}

/// Points of the energy shell p = λ² over |z| <= z_max, both momentum signs.
fn energy_slice(m: &ModelProblem<f64>, z_max: f64, count: usize) -> Vec<PhasePoint<f64>> {
    let mut out = Vec::new();
    for sign in [1.0, -1.0] {
        for i in 0..count {
            let z = -z_max + 2.0 * z_max * i as f64 / (count - 1) as f64;
            let k2 = m.lambda2() - m.potential.value(z);
            if k2 > 0.0 {
                out.push(m.point([z, 0.0], [sign * k2.sqrt(), 0.0]));
            }
        }
    }
    out
}

/// Exponent e of v ~ h^e by least squares in log-log.
fn fitted_exponent(h: &[f64], v: &[f64]) -> f64 {
    let xs: Vec<f64> = h.iter().map(|h| (1.0 / h).ln()).collect();
    let ys: Vec<f64> = v.iter().map(|v| v.ln()).collect();
    -least_squares_slope(&xs, &ys).0
}
