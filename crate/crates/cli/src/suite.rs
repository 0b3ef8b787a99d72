//! The check suite.
//!
//! Each check draws its samples from its own stream of the configured seed,
//! evaluates them (in parallel where the work is heavy) and reduces with
//! order-independent maxima, so reports depend only on the configuration.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use kecone_core::abelian::{chern_check, cocycle_residual, descent_check, reference_period_data, validate_period_data};
use kecone_core::ball::{
    chart_point, cusp_height, deck_apply, deck_closure_residual, heisenberg_forward, heisenberg_identity_residual,
    heisenberg_inverse, quotient_fiber_length, quotient_field,
};
use kecone_core::calabi::{
    calabi_metric, curvature_probe, default_c_norm, det_identity_check, fiber_length, first_integral_drift,
    initial_rho_for, ode_residual, ode_solve, potential_difference_field, rho_closed, total_potential_field,
    OdeProblem, Ray,
};
use kecone_core::quasi::{
    chart_map, chart_reports, injectivity_ratio, jacobian_determinant, jacobian_determinant_exact, normalize_point,
    ReferenceDomains, EPSILON_1, TARGET_LEVEL,
};
use kecone_core::sampling::{
    log_uniform_level, random_base_point, random_bundle_point, random_deck_element, random_lattice_vector,
    random_upstairs, stream_rng, uniform_level,
};
use kecone_core::wirtinger::{einstein_residual, metric_from_potential};
use kecone_core::{AnsatzProfile, BundlePoint, Complex64, FiberChart, LineBundleGeom, PeriodData, StencilConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ToolkitConfig;
use crate::error::{CliError, CliResult};
use crate::report::{CheckRecord, CheckReport};

/// Every check, in report order.
pub const CHECK_NAMES: [&str; 12] = [
    "riemann-relations",
    "bundle",
    "deck",
    "heisenberg",
    "einstein-ball",
    "einstein-calabi",
    "ode",
    "det-identity",
    "coincide",
    "quasi",
    "complete",
    "probe",
];

/// Wall-clock budget per check, seconds.
pub fn time_budget(name: &str) -> f64 {
    match name {
        "riemann-relations" => 1.0,
        "bundle" | "deck" => 10.0,
        "heisenberg" | "ode" | "complete" => 5.0,
        "coincide" => 30.0,
        _ => 60.0,
    }
}

const RESIDUAL_TOL: f64 = 1e-10;
const RIEMANN_TOL: f64 = 1e-12;
const HEISENBERG_TOL: f64 = 1e-11;
const ROUND_TRIP_TOL: f64 = 1e-12;
const ODE_CLOSED_TOL: f64 = 1e-12;
const ODE_MATCH_TOL: f64 = 1e-8;
const DET_TOL: f64 = 1e-8;
const PLURI_TOL: f64 = 1e-8;
const CHART_TRIP_TOL: f64 = 1e-9;
const CHART_RATIO: f64 = 2.0;
const FIBER_TOL: f64 = 1e-4;
const FLAT_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum Selector {
    All,
    Only(Vec<String>),
}

impl Selector {
    /// `all`, or a comma-separated list of check names.
    pub fn parse(text: &str) -> CliResult<Self> {
        if text == "all" {
            return Ok(Selector::All);
        }
        let names: Vec<String> = text.split(',').map(|s| s.trim().to_string()).collect();
        for name in &names {
            if !CHECK_NAMES.contains(&name.as_str()) {
                return Err(CliError::UnknownCheck(name.clone()));
            }
        }
        Ok(Selector::Only(names))
    }

    pub fn names(&self) -> Vec<&'static str> {
        match self {
            Selector::All => CHECK_NAMES.to_vec(),
            Selector::Only(v) => CHECK_NAMES
                .iter()
                .copied()
                .filter(|c| v.iter().any(|n| n == c))
                .collect(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Selector::All => "all".into(),
            Selector::Only(v) => v.join(","),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Cmp {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = "<")]
    Below,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = "report")]
    Report,
}

/// One measured quantity and its bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub limit: Option<f64>,
    pub cmp: Cmp,
    pub passed: bool,
}

impl Metric {
    pub fn new(name: &str, value: f64, cmp: Cmp, limit: f64) -> Self {
        let passed = match cmp {
            Cmp::AtMost => value <= limit,
            Cmp::Below => value < limit,
            Cmp::AtLeast => value >= limit,
            Cmp::Report => true,
        };
        Self {
            name: name.to_string(),
            value,
            limit: Some(limit),
            cmp,
            passed,
        }
    }

    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self::new(name, value, Cmp::AtMost, limit)
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self::new(name, value, Cmp::AtLeast, limit)
    }

    pub fn report(name: &str, value: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            limit: None,
            cmp: Cmp::Report,
            passed: true,
        }
    }

    /// How close the metric is to failing; `>= 1` means failed.
    fn severity(&self) -> f64 {
        let (v, l) = (self.value, self.limit.unwrap_or(f64::NAN));
        let s = match self.cmp {
            Cmp::Report => return f64::NEG_INFINITY,
            Cmp::AtMost | Cmp::Below => {
                if l > 0.0 {
                    v / l
                } else if v <= l {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Cmp::AtLeast => {
                if v > 0.0 {
                    l / v
                } else {
                    f64::INFINITY
                }
            }
        };
        if s.is_nan() {
            f64::INFINITY
        } else {
            s
        }
    }
}

/// What a check produces before timing and bookkeeping.
#[derive(Clone, Debug, Default)]
pub struct CheckOutcome {
    pub metrics: Vec<Metric>,
    pub samples: usize,
    /// File name to contents, written next to the report.
    pub artifacts: BTreeMap<String, String>,
}

type CheckFn = fn(&ToolkitConfig) -> Result<CheckOutcome, Box<dyn std::error::Error + Send + Sync>>;

fn check_fn(name: &str) -> CheckFn {
    match name {
        "riemann-relations" => check_riemann,
        "bundle" => check_bundle,
        "deck" => check_deck,
        "heisenberg" => check_heisenberg,
        "einstein-ball" => check_einstein_ball,
        "einstein-calabi" => check_einstein_calabi,
        "ode" => check_ode,
        "det-identity" => check_det_identity,
        "coincide" => check_coincide,
        "quasi" => check_quasi,
        "complete" => check_complete,
        "probe" => check_probe,
        _ => unreachable!("selector only yields known names"),
    }
}

fn stream_of(name: &str) -> u64 {
    CHECK_NAMES.iter().position(|c| *c == name).unwrap_or(0) as u64 + 1
}

/// Runs one check; errors and panics become a failed record.
pub fn run_check(name: &'static str, cfg: &ToolkitConfig) -> (CheckRecord, BTreeMap<String, String>) {
    let start = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(|| check_fn(name)(cfg)));
    let wall_time = start.elapsed().as_secs_f64();
    let (outcome, error) = match result {
        Ok(Ok(o)) => (o, None),
        Ok(Err(e)) => (CheckOutcome::default(), Some(e.to_string())),
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            (CheckOutcome::default(), Some(format!("panicked: {msg}")))
        }
    };
    let headline = outcome.metrics.iter().filter(|m| m.cmp != Cmp::Report).max_by(|a, b| {
        let scaled = |m: &Metric| m.limit.is_some_and(|l| l != 0.0);
        a.severity().total_cmp(&b.severity()).then(scaled(a).cmp(&scaled(b)))
    });
    let passed = error.is_none() && !outcome.metrics.is_empty() && outcome.metrics.iter().all(|m| m.passed);
    let record = CheckRecord {
        name: name.to_string(),
        passed,
        max_residual: headline.map(|m| m.value),
        tolerance: headline.and_then(|m| m.limit),
        samples: outcome.samples,
        wall_time,
        time_budget: time_budget(name),
        metrics: outcome.metrics,
        error,
    };
    (record, outcome.artifacts)
}

/// A finished run: the report plus any tabular artifacts.
#[derive(Clone, Debug)]
pub struct SuiteRun {
    pub report: CheckReport,
    pub artifacts: BTreeMap<String, String>,
}

pub fn run_suite(cfg: &ToolkitConfig, selector: &Selector) -> SuiteRun {
    let mut checks = Vec::new();
    let mut artifacts = BTreeMap::new();
    for name in selector.names() {
        let (rec, art) = run_check(name, cfg);
        checks.push(rec);
        artifacts.extend(art);
    }
    let missing: Vec<String> = match selector {
        Selector::All => CHECK_NAMES
            .iter()
            .filter(|n| !checks.iter().any(|c| c.name == **n))
            .map(|n| n.to_string())
            .collect(),
        Selector::Only(_) => Vec::new(),
    };
    let report = CheckReport::new(cfg, selector.label(), checks, missing);
    SuiteRun { report, artifacts }
}

// ----- helpers -----

type Out = Result<CheckOutcome, Box<dyn std::error::Error + Send + Sync>>;

fn outcome(metrics: Vec<Metric>, samples: usize) -> Out {
    Ok(CheckOutcome {
        metrics,
        samples,
        artifacts: BTreeMap::new(),
    })
}

/// The config's period data and a reference instance of the other dimension.
fn both_dimensions(pd: &PeriodData) -> Vec<PeriodData> {
    let refs = reference_period_data();
    let other = if pd.n() == 1 { refs[3].clone() } else { refs[0].clone() };
    let mut v = vec![pd.clone(), other];
    v.sort_by_key(|p| p.n());
    v
}

fn max_of(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(
        0.0,
        |a: f64, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) },
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Bundle points with levels uniform in `(s_min, s_max)`.
fn level_samples(pd: &PeriodData, cfg: &ToolkitConfig, count: usize, stream: u64) -> Vec<BundlePoint> {
    let mut rng = stream_rng(cfg.seed(), stream);
    (0..count)
        .map(|_| {
            let level = uniform_level(&mut rng, cfg.s_min, cfg.s_max);
            random_bundle_point(&mut rng, pd, level, 1.0)
        })
        .collect()
}

// ----- checks -----

fn check_riemann(cfg: &ToolkitConfig) -> Out {
    let mut all = vec![cfg.period_data()?];
    all.extend(reference_period_data());
    let reports = all.iter().map(validate_period_data).collect::<Result<Vec<_>, _>>()?;
    outcome(
        vec![
            Metric::at_most(
                "relation_residual",
                max_of(reports.iter().map(|r| r.relation_residual)),
                RIEMANN_TOL,
            ),
            Metric::new(
                "max_eigenvalue_2ImZ",
                reports
                    .iter()
                    .map(|r| r.max_eigenvalue())
                    .fold(f64::NEG_INFINITY, f64::max),
                Cmp::Below,
                0.0,
            ),
        ],
        all.len(),
    )
}

fn check_bundle(cfg: &ToolkitConfig) -> Out {
    let pd = cfg.period_data()?;
    let n = pd.n();
    let mut rng = stream_rng(cfg.seed(), stream_of("bundle"));
    let (mut descent, mut cocycle) = (0.0f64, 0.0f64);
    for _ in 0..cfg.samples.bundle {
        let v = random_lattice_vector(&mut rng, n, 3);
        let v2 = random_lattice_vector(&mut rng, n, 3);
        let z = random_base_point(&mut rng, &pd, 1.5);
        descent = max_of([descent, descent_check(&pd, &v, &z)]);
        cocycle = max_of([cocycle, cocycle_residual(&pd, &v, &v2, &z)]);
    }
    let pts: Vec<Vec<Complex64>> = (0..cfg.samples.chern)
        .map(|_| random_base_point(&mut rng, &pd, 1.0))
        .collect();
    let stencil = StencilConfig::default();
    let chern = pts
        .par_iter()
        .map(|z| chern_check(&pd, z, &stencil))
        .collect::<Result<Vec<_>, _>>()?;
    outcome(
        vec![
            Metric::at_most("descent", descent, RESIDUAL_TOL),
            Metric::at_most("cocycle", cocycle, RESIDUAL_TOL),
            Metric::at_most("chern_vs_pi_W", max_of(chern), cfg.tier2),
        ],
        cfg.samples.bundle + cfg.samples.chern,
    )
}

fn check_deck(cfg: &ToolkitConfig) -> Out {
    let pd = cfg.period_data()?;
    let n = pd.n();
    let mut rng = stream_rng(cfg.seed(), stream_of("deck"));
    let (mut inv, mut closure) = (0.0f64, 0.0f64);
    for _ in 0..cfg.samples.deck {
        let g1 = random_deck_element(&mut rng, n, 5);
        let g2 = random_deck_element(&mut rng, n, 5);
        let x = random_upstairs(&mut rng, n, 2.0);
        inv = max_of([
            inv,
            (cusp_height(&pd, &deck_apply(&pd, &g1, &x)) - cusp_height(&pd, &x)).abs(),
        ]);
        closure = max_of([closure, deck_closure_residual(&pd, &g1, &g2)]);
    }
    outcome(
        vec![
            Metric::at_most("invariance", inv, RESIDUAL_TOL),
            Metric::at_most("closure", closure, RESIDUAL_TOL),
        ],
        cfg.samples.deck,
    )
}

fn check_heisenberg(cfg: &ToolkitConfig) -> Out {
    let mut metrics = Vec::new();
    let mut rng = stream_rng(cfg.seed(), stream_of("heisenberg"));
    let all = both_dimensions(&cfg.period_data()?);
    for pd in &all {
        let (mut ident, mut trip) = (0.0f64, 0.0f64);
        for _ in 0..cfg.samples.heisenberg {
            let x = random_upstairs(&mut rng, pd.n(), 2.0);
            ident = max_of([ident, heisenberg_identity_residual(pd, &x)]);
            let back = heisenberg_inverse(pd, &heisenberg_forward(pd, &x));
            let d = back
                .z
                .iter()
                .zip(&x.z)
                .map(|(a, b)| (a - b).norm())
                .fold((back.u - x.u).norm(), f64::max);
            trip = max_of([trip, d]);
        }
        metrics.push(Metric::at_most(&format!("identity_n{}", pd.n()), ident, HEISENBERG_TOL));
        metrics.push(Metric::at_most(
            &format!("round_trip_n{}", pd.n()),
            trip,
            ROUND_TRIP_TOL,
        ));
    }
    outcome(metrics, all.len() * cfg.samples.heisenberg)
}

fn check_einstein_ball(cfg: &ToolkitConfig) -> Out {
    let stencil = StencilConfig::nested();
    let mut metrics = Vec::new();
    let all = both_dimensions(&cfg.period_data()?);
    for (k, pd) in all.iter().enumerate() {
        let field = quotient_field(pd, FiberChart::Log);
        let pts = level_samples(
            pd,
            cfg,
            cfg.samples.einstein_ball,
            100 * stream_of("einstein-ball") + k as u64,
        );
        let res = pts
            .par_iter()
            .map(|b| einstein_residual(&field, &chart_point(b, FiberChart::Log)?, -1.0, &stencil))
            .collect::<Result<Vec<_>, _>>()?;
        metrics.push(Metric::at_most(
            &format!("einstein_residual_n{}", pd.n()),
            max_of(res),
            cfg.tier4,
        ));
    }
    outcome(metrics, all.len() * cfg.samples.einstein_ball)
}

fn check_einstein_calabi(cfg: &ToolkitConfig) -> Out {
    let pd = cfg.period_data()?;
    let geom = LineBundleGeom::flat(pd.clone());
    let prof = AnsatzProfile::closed(pd.n());
    let field = total_potential_field(&geom, &prof, FiberChart::Log);
    let pts = level_samples(&pd, cfg, cfg.samples.einstein_calabi, stream_of("einstein-calabi"));
    let (nested, plain) = (StencilConfig::nested(), StencilConfig::default());
    let rows = pts
        .par_iter()
        .map(|b| {
            let p = chart_point(b, FiberChart::Log)?;
            let e = einstein_residual(&field, &p, -1.0, &nested)?;
            let asm = calabi_metric(&geom, &prof, b, FiberChart::Log)?;
            let fd = metric_from_potential(&field, &p, &plain)?;
            Ok((e, asm.relative_error(&fd)))
        })
        .collect::<kecone_core::Result<Vec<_>>>()?;
    outcome(
        vec![
            Metric::at_most("einstein_residual", max_of(rows.iter().map(|r| r.0)), cfg.tier4),
            Metric::at_most("assembly_vs_fd", max_of(rows.iter().map(|r| r.1)), cfg.tier2),
        ],
        pts.len(),
    )
}

fn check_ode(cfg: &ToolkitConfig) -> Out {
    let n = cfg.n;
    let c_norm = default_c_norm(n);
    let grid = 400;
    let closed = max_of((0..=grid).map(|k| {
        let s = cfg.ode_s_end + (-0.5 - cfg.ode_s_end) * k as f64 / grid as f64;
        rho_closed(n, s)
            .map(|p| ode_residual(&p, s, n, c_norm).abs())
            .unwrap_or(f64::NAN)
    }));

    let pb = OdeProblem::from_closed(n, cfg.ode_s0, cfg.ode_s_end, cfg.ode_tol)?;
    let prof = ode_solve(&pb)?;
    let samples = 900;
    let mut worst = 0.0f64;
    for k in 0..=samples {
        let s = cfg.ode_s0 + (cfg.ode_s_end - cfg.ode_s0) * k as f64 / samples as f64;
        let (a, b) = (prof.eval(s)?, rho_closed(n, s)?);
        worst = max_of([worst, (a.rho - b.rho).abs(), (a.f() - b.f()).abs()]);
    }
    let drift_closed = first_integral_drift(&prof);

    // an off-closed-branch solution with the configured constant
    let start = rho_closed(n, cfg.ode_s0)?;
    let rho0 = initial_rho_for(n, cfg.c, cfg.c_norm(), cfg.ode_s0, start.rho_s)?;
    let off = OdeProblem {
        c_norm: cfg.c_norm(),
        rho0,
        ..pb
    };
    let off_prof = ode_solve(&off)?;
    let drift_limit = 100.0 * cfg.ode_tol;
    outcome(
        vec![
            Metric::at_most("closed_form_residual", closed, ODE_CLOSED_TOL),
            Metric::at_most("integration_vs_closed", worst, ODE_MATCH_TOL),
            Metric::at_most("first_integral_drift_closed", drift_closed, drift_limit),
            Metric::at_most("first_integral_drift_C", first_integral_drift(&off_prof), drift_limit),
            Metric::at_most("C_recovered", rel(off_prof.c(), cfg.c), drift_limit),
            Metric::report("table_nodes", prof.nodes().len() as f64),
        ],
        grid + samples + 2,
    )
}

fn check_det_identity(cfg: &ToolkitConfig) -> Out {
    let pd = cfg.period_data()?;
    let geom = LineBundleGeom::flat(pd.clone());
    let prof = AnsatzProfile::closed(pd.n());
    let pts = level_samples(&pd, cfg, cfg.samples.det_identity, stream_of("det-identity"));
    let mut worst_log = 0.0f64;
    let mut worst_lin = 0.0f64;
    for b in &pts {
        worst_log = max_of([worst_log, det_identity_check(&geom, &prof, b, FiberChart::Log)?]);
        worst_lin = max_of([worst_lin, det_identity_check(&geom, &prof, b, FiberChart::Linear)?]);
    }
    outcome(
        vec![
            Metric::at_most("det_identity_log_chart", worst_log, DET_TOL),
            Metric::at_most("det_identity_linear_chart", worst_lin, DET_TOL),
        ],
        pts.len(),
    )
}

fn check_coincide(cfg: &ToolkitConfig) -> Out {
    let own = cfg.period_data()?;
    let pd = if own.n() == 1 { own } else { PeriodData::square_torus() };
    let geom = LineBundleGeom::flat(pd.clone());
    let prof = AnsatzProfile::closed(1);
    let diff = potential_difference_field(&geom, &prof, FiberChart::Log);
    let quotient = quotient_field(&pd, FiberChart::Log);
    let pts = level_samples(&pd, cfg, cfg.samples.coincide, stream_of("coincide"));
    let nested = StencilConfig::nested();
    let rows = pts
        .par_iter()
        .map(|b| {
            let p = chart_point(b, FiberChart::Log)?;
            let pluri = metric_from_potential(&diff, &p, &nested)?.max_abs();
            let asm = calabi_metric(&geom, &prof, b, FiberChart::Log)?;
            let fd = metric_from_potential(&quotient, &p, &nested)?;
            Ok((pluri, asm.relative_error(&fd)))
        })
        .collect::<kecone_core::Result<Vec<_>>>()?;
    outcome(
        vec![
            Metric::at_most("ddbar_difference", max_of(rows.iter().map(|r| r.0)), PLURI_TOL),
            Metric::at_most("tensor_agreement", max_of(rows.iter().map(|r| r.1)), cfg.tier2),
        ],
        pts.len(),
    )
}

fn check_quasi(cfg: &ToolkitConfig) -> Out {
    let pd = cfg.period_data()?;
    let dom = ReferenceDomains::new(&pd);
    let mut rng = stream_rng(cfg.seed(), stream_of("quasi"));
    let points: Vec<BundlePoint> = (0..cfg.samples.quasi)
        .map(|k| {
            let level = if k == 0 {
                -1e6
            } else {
                log_uniform_level(&mut rng, -1e6, -2.0)
            };
            random_bundle_point(&mut rng, &pd, level, 3.0)
        })
        .collect();
    let mut failures = 0usize;
    let (mut trip, mut placement) = (0.0f64, 0.0f64);
    let (mut margin_deep, mut margin_shallow) = (f64::INFINITY, f64::INFINITY);
    let mut charts = Vec::new();
    for q in &points {
        let level = kecone_core::ball::bundle_level(&pd, q);
        match normalize_point(&pd, q) {
            Ok((chart, big_q)) => {
                match chart_map(&pd, &chart, &big_q) {
                    Ok(back) => trip = max_of([trip, back.distance(q)]),
                    Err(_) => failures += 1,
                }
                if chart.a > 1.0 {
                    placement = max_of([placement, (big_q.level() - TARGET_LEVEL).abs()]);
                }
                let m = dom.margins(&ReferenceDomains::inner(), &big_q).min();
                if level <= -3.0 {
                    margin_deep = margin_deep.min(m);
                } else {
                    margin_shallow = margin_shallow.min(m);
                }
                charts.push((chart, big_q));
            }
            Err(_) => failures += 1,
        }
    }
    let used = cfg.samples.charts.min(charts.len());
    let reports = chart_reports(
        &pd,
        &charts[..used],
        cfg.samples.chart_points,
        cfg.seed(),
        &StencilConfig::nested(),
    )?;
    let cs: Vec<f64> = reports.iter().map(|r| r.c).collect();
    let c_lo = cs.iter().copied().fold(f64::INFINITY, f64::min);
    let c_hi = cs.iter().copied().fold(0.0, f64::max);
    let jac = max_of(charts.iter().take(20).map(|(chart, _)| {
        let centre = dom.sample_inner(&mut rng, 0.0);
        let exact = jacobian_determinant_exact(&pd, chart);
        (jacobian_determinant(&pd, chart, &centre, 1e-3) - exact).norm() / exact.norm()
    }));
    let inj = charts
        .iter()
        .take(3)
        .enumerate()
        .map(|(k, (chart, _))| injectivity_ratio(&pd, chart, 40, cfg.seed().wrapping_add(k as u64)))
        .fold(f64::INFINITY, f64::min);
    let mut metrics = vec![
        Metric::at_most("normalize_failures", failures as f64, 0.0),
        Metric::at_most("round_trip", trip, CHART_TRIP_TOL),
        Metric::at_most("level_placement", placement, 1e-9),
        Metric::at_least("margin_min_deep", margin_deep, EPSILON_1),
        Metric::report(
            "margin_min_shallow",
            if margin_shallow.is_finite() {
                margin_shallow
            } else {
                f64::NAN
            },
        ),
        Metric::at_most("c_ratio", c_hi / c_lo, CHART_RATIO),
        Metric::report("c_max", c_hi),
        Metric::report("a1_max", max_of(reports.iter().map(|r| r.a1))),
        Metric::report("a2_max", max_of(reports.iter().map(|r| r.a2))),
        Metric::at_most("jacobian_rel_err", jac, 1e-6),
        Metric::at_least("injectivity_ratio", inj, 1e-6),
    ];
    if points.iter().all(|q| kecone_core::ball::bundle_level(&pd, q) > -3.0) {
        metrics.retain(|m| m.name != "margin_min_deep");
    }
    outcome(metrics, points.len())
}

fn check_complete(cfg: &ToolkitConfig) -> Out {
    let pd = cfg.period_data()?;
    let n = pd.n();
    let geom = LineBundleGeom::flat(pd.clone());
    let prof = AnsatzProfile::closed(n);
    let mut rng = stream_rng(cfg.seed(), stream_of("complete"));
    let z = random_base_point(&mut rng, &pd, 0.5);
    let expected = ((n + 2) as f64).sqrt() / 2.0 * std::f64::consts::LN_2;
    let stencil = StencilConfig::nested();
    let rows = cfg
        .fiber_ks
        .par_iter()
        .map(|&k| {
            Ok((
                fiber_length(&geom, &prof, &z, k, 2.0 * k)?,
                quotient_fiber_length(&pd, &z, k, 2.0 * k, &stencil)?,
            ))
        })
        .collect::<kecone_core::Result<Vec<_>>>()?;
    let spread = |v: Vec<f64>| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    };
    outcome(
        vec![
            Metric::at_most(
                "calabi_vs_expected",
                max_of(rows.iter().map(|r| (r.0 - expected).abs())),
                FIBER_TOL,
            ),
            Metric::at_most(
                "quotient_vs_expected",
                max_of(rows.iter().map(|r| (r.1 - expected).abs())),
                FIBER_TOL,
            ),
            Metric::at_most("calabi_spread", spread(rows.iter().map(|r| r.0).collect()), FIBER_TOL),
            Metric::at_most("quotient_spread", spread(rows.iter().map(|r| r.1).collect()), FIBER_TOL),
            Metric::report("expected", expected),
        ],
        rows.len(),
    )
}

fn check_probe(cfg: &ToolkitConfig) -> Out {
    let pd = cfg.period_data()?;
    let n = pd.n();
    let stencil = StencilConfig::nested();
    let ray = Ray {
        z: cfg.probe_z(),
        theta: cfg.probe_theta,
        s_min: cfg.probe_s_min,
        s_max: cfg.probe_s_max,
    };
    let prof = AnsatzProfile::closed(n);
    let flat = curvature_probe(
        &LineBundleGeom::flat(pd.clone()),
        &prof,
        &ray,
        cfg.samples.probe,
        &stencil,
    )?;
    let bent = curvature_probe(
        &LineBundleGeom::flat(pd).with_perturbation(cfg.probe_epsilon),
        &prof,
        &ray,
        cfg.samples.probe,
        &stencil,
    )?;
    let mean = flat.rows.iter().map(|r| r.sect_curv).sum::<f64>() / flat.rows.len() as f64;
    let mut artifacts = BTreeMap::new();
    artifacts.insert("probe_flat.csv".to_string(), flat.to_csv());
    artifacts.insert("probe_perturbed.csv".to_string(), bent.to_csv());
    Ok(CheckOutcome {
        metrics: vec![
            Metric::at_most("flat_curvature_spread", flat.curvature_spread(), FLAT_TOL),
            Metric::report("flat_curvature_mean", mean),
            Metric::report("perturbed_slope", bent.fit.slope),
            Metric::report("perturbed_r_squared", bent.fit.r_squared),
            Metric::report("perturbed_spread", bent.curvature_spread()),
        ],
        samples: 2 * cfg.samples.probe,
        artifacts,
    })
}
