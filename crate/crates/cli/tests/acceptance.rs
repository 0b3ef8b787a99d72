//! Acceptance criteria on the n = 1 reference configuration. Prints one
//! PASS/FAIL line per criterion and exits nonzero if any is red.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::process::ExitCode;
use std::time::Instant;

use kecone_cli::suite::Metric;
use kecone_cli::{run_suite, CheckReport, Selector, ToolkitConfig};

const SEED: u64 = 42;

struct Judge<'a> {
    report: &'a CheckReport,
    notes: Vec<String>,
    ok: bool,
}

impl<'a> Judge<'a> {
    fn new(report: &'a CheckReport) -> Self {
        Self {
            report,
            notes: Vec::new(),
            ok: true,
        }
    }

    fn metric(&mut self, check: &str, name: &str) -> Option<&'a Metric> {
        let m = self
            .report
            .check(check)
            .and_then(|c| c.metrics.iter().find(|m| m.name == name));
        if m.is_none() {
            self.fail(format!("{check}/{name} missing"));
        }
        m
    }

    fn fail(&mut self, note: String) {
        self.ok = false;
        self.notes.push(note);
    }

    fn at_most(&mut self, check: &str, name: &str, tol: f64) {
        if let Some(m) = self.metric(check, name) {
            let good = m.value <= tol;
            self.notes.push(format!("{name}={:.3e}<={tol:.0e}", m.value));
            if !good {
                self.ok = false;
            }
        }
    }

    fn below(&mut self, check: &str, name: &str, bound: f64) {
        if let Some(m) = self.metric(check, name) {
            self.notes.push(format!("{name}={:.3e}<{bound}", m.value));
            if !(m.value < bound) {
                self.ok = false;
            }
        }
    }

    fn at_least(&mut self, check: &str, name: &str, bound: f64) {
        if let Some(m) = self.metric(check, name) {
            self.notes.push(format!("{name}={:.3e}>={bound}", m.value));
            if !(m.value >= bound) {
                self.ok = false;
            }
        }
    }

    fn reported(&mut self, check: &str, name: &str) {
        if let Some(m) = self.metric(check, name) {
            self.notes.push(format!("{name}={:.3e} (reported)", m.value));
        }
    }

    fn samples(&mut self, check: &str, at_least: usize) {
        match self.report.check(check) {
            Some(c) if c.samples >= at_least => {}
            Some(c) => self.fail(format!("{check} used {} samples, need {at_least}", c.samples)),
            None => self.fail(format!("{check} missing")),
        }
    }

    fn passed(&mut self, check: &str) {
        match self.report.check(check) {
            Some(c) if c.passed => {}
            Some(c) => self.fail(format!("{check} failed: {}", c.error.clone().unwrap_or_default())),
            None => self.fail(format!("{check} missing")),
        }
    }

    fn within(&mut self, checks: &[&str], seconds: f64) {
        let t: f64 = checks
            .iter()
            .filter_map(|c| self.report.check(c))
            .map(|c| c.wall_time)
            .sum();
        self.notes.push(format!("time={t:.2}s<{seconds}s"));
        if !(t < seconds) {
            self.ok = false;
        }
    }

    fn verdict(&mut self, index: usize, title: &str) -> bool {
        let status = if self.ok { "PASS" } else { "FAIL" };
        println!("criterion {index:>2} {status} {title}: {}", self.notes.join(", "));
        let ok = self.ok;
        self.notes.clear();
        self.ok = true;
        ok
    }
}

fn main() -> ExitCode {
    let cfg = ToolkitConfig::reference(1, SEED);
    let start = Instant::now();
    let first = run_suite(&cfg, &Selector::All);
    let elapsed = start.elapsed().as_secs_f64();
    let report = &first.report;
    println!("suite `all` on the n=1 reference config: {elapsed:.1}s (limit 300s)");

    let mut results = Vec::new();
    let mut j = Judge::new(report);

    j.passed("riemann-relations");
    j.samples("riemann-relations", 3);
    j.at_most("riemann-relations", "relation_residual", 1e-12);
    j.below("riemann-relations", "max_eigenvalue_2ImZ", 0.0);
    j.within(&["riemann-relations"], 1.0);
    results.push(j.verdict(1, "Riemann relations"));

    j.passed("bundle");
    j.samples("bundle", 200);
    j.at_most("bundle", "cocycle", 1e-10);
    j.at_most("bundle", "descent", 1e-10);
    j.at_most("bundle", "chern_vs_pi_W", 1e-6);
    j.within(&["bundle"], 10.0);
    results.push(j.verdict(2, "bundle identities"));

    j.passed("deck");
    j.samples("deck", 200);
    j.at_most("deck", "invariance", 1e-10);
    j.at_most("deck", "closure", 1e-10);
    j.within(&["deck"], 10.0);
    results.push(j.verdict(3, "deck group"));

    j.passed("heisenberg");
    j.samples("heisenberg", 1000);
    for n in [1, 2] {
        j.at_most("heisenberg", &format!("identity_n{n}"), 1e-11);
        j.at_most("heisenberg", &format!("round_trip_n{n}"), 1e-12);
    }
    j.within(&["heisenberg"], 5.0);
    results.push(j.verdict(4, "Heisenberg identity"));

    j.passed("einstein-ball");
    j.samples("einstein-ball", 200);
    j.at_most("einstein-ball", "einstein_residual_n1", 1e-3);
    j.at_most("einstein-ball", "einstein_residual_n2", 1e-3);
    j.within(&["einstein-ball"], 60.0);
    results.push(j.verdict(5, "Einstein property, ball side"));

    j.passed("einstein-calabi");
    j.passed("det-identity");
    j.samples("einstein-calabi", 100);
    j.at_most("einstein-calabi", "einstein_residual", 1e-3);
    j.at_most("einstein-calabi", "assembly_vs_fd", 1e-6);
    j.at_most("det-identity", "det_identity_log_chart", 1e-8);
    j.at_most("det-identity", "det_identity_linear_chart", 1e-8);
    j.within(&["einstein-calabi", "det-identity"], 60.0);
    results.push(j.verdict(6, "Einstein property, Calabi side"));

    j.passed("ode");
    j.at_most("ode", "closed_form_residual", 1e-12);
    j.at_most("ode", "integration_vs_closed", 1e-8);
    j.at_most("ode", "first_integral_drift_C", 1e-10);
    j.within(&["ode"], 5.0);
    results.push(j.verdict(7, "ODE"));

    j.passed("coincide");
    j.samples("coincide", 100);
    j.at_most("coincide", "ddbar_difference", 1e-8);
    j.at_most("coincide", "tensor_agreement", 1e-6);
    j.within(&["coincide"], 30.0);
    results.push(j.verdict(8, "potentials coincide"));

    j.passed("complete");
    j.samples("complete", 4);
    j.at_most("complete", "calabi_vs_expected", 1e-4);
    j.at_most("complete", "quotient_vs_expected", 1e-4);
    j.at_most("complete", "calabi_spread", 1e-4);
    j.within(&["complete"], 5.0);
    results.push(j.verdict(9, "completeness"));

    j.passed("quasi");
    j.samples("quasi", 100);
    j.at_most("quasi", "normalize_failures", 0.0);
    j.at_most("quasi", "round_trip", 1e-9);
    j.at_least("quasi", "margin_min_deep", 0.1);
    j.at_most("quasi", "c_ratio", 2.0);
    j.within(&["quasi"], 60.0);
    results.push(j.verdict(10, "quasi-charts"));

    j.passed("probe");
    j.at_most("probe", "flat_curvature_spread", 1e-3);
    j.reported("probe", "perturbed_slope");
    j.reported("probe", "perturbed_r_squared");
    j.within(&["probe"], 60.0);
    results.push(j.verdict(11, "blow-up probe"));

    let second = run_suite(&cfg, &Selector::All);
    let same = second.report.to_json_without_timings() == report.to_json_without_timings()
        && second.artifacts == first.artifacts;
    if !same {
        j.fail("reports differ".into());
    } else {
        j.notes.push("reports and artifacts identical".into());
    }
    results.push(j.verdict(12, "determinism"));

    let overall = results.iter().all(|r| *r) && report.passed && elapsed <= 300.0;
    println!("overall: {}", if overall { "PASS" } else { "FAIL" });
    if overall {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
