//! Calabi ansatz `omega = omega_M + i d dbar rho(log r)` on the total space of
//! the negative line bundle over a flat torus, with `r = a(z) |eta|^2`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, Vector2};
use num_complex::Complex64;
use ode_solvers::{Dopri5, OutputType, System};

use crate::abelian::{log_h, log_h_gradient, PeriodData};
use crate::ball::{self, level_scale, BundlePoint, FiberChart};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::wirtinger::{self, CPoint, FnField, HermitianForm, StencilConfig};

/// `(n+2)^(n+1)`, the right-hand-side constant for which the closed form is exact.
pub fn default_c_norm(n: usize) -> f64 {
    ((n + 2) as f64).powi(n as i32 + 1)
}

/// `(rho, rho_s, rho_ss)` at one value of `s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfilePoint {
    pub rho: f64,
    pub rho_s: f64,
    pub rho_ss: f64,
}

impl ProfilePoint {
    /// `f = 1 + rho_s`.
    pub fn f(&self) -> f64 {
        1.0 + self.rho_s
    }
}

/// `rho = -(n+2) ln(-s) - s` and its first two derivatives.
pub fn rho_closed(n: usize, s: f64) -> Result<ProfilePoint> {
    if !(s < 0.0) {
        return Err(Error::DomainViolation(format!(
            "closed-form profile needs s < 0, got {s}"
        )));
    }
    let k = (n + 2) as f64;
    Ok(ProfilePoint {
        rho: -k * (-s).ln() - s,
        rho_s: -k / s - 1.0,
        rho_ss: k / (s * s),
    })
}

/// `(1 + rho_s)^n rho_ss - c_norm e^(rho + s)`.
pub fn ode_residual(pt: &ProfilePoint, s: f64, n: usize, c_norm: f64) -> f64 {
    pt.f().powi(n as i32) * pt.rho_ss - c_norm * (pt.rho + s).exp()
}

/// The first integral `C = (f_s - f^2/(n+2)) f^n` with `f_s = rho_ss`.
pub fn first_integral(pt: &ProfilePoint, n: usize) -> f64 {
    let f = pt.f();
    (pt.rho_ss - f * f / (n + 2) as f64) * f.powi(n as i32)
}

/// `rho_ss` forced by the equation at `(s, rho, rho_s)`.
pub fn ode_rhs(n: usize, c_norm: f64, s: f64, rho: f64, rho_s: f64) -> f64 {
    c_norm * (rho + s).exp() / (1.0 + rho_s).powi(n as i32)
}

/// Initial value `rho(s0)` for which the solution through `(s0, rho_s0)` has
/// first integral `c`.
pub fn initial_rho_for(n: usize, c: f64, c_norm: f64, s0: f64, rho_s0: f64) -> Result<f64> {
    let f = 1.0 + rho_s0;
    if !(f > 0.0) {
        return Err(Error::Precondition(format!("need 1 + rho_s > 0, got {f}")));
    }
    let fs = c / f.powi(n as i32) + f * f / (n + 2) as f64;
    if !(fs > 0.0) {
        return Err(Error::Precondition(format!(
            "first integral {c} forces rho_ss = {fs} <= 0 at s0 = {s0}"
        )));
    }
    Ok((fs * f.powi(n as i32) / c_norm).ln() - s0)
}

#[derive(Clone, Debug, PartialEq)]
struct Table {
    s: Vec<f64>,
    rho: Vec<f64>,
    rho_s: Vec<f64>,
    rho_ss: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
enum Repr {
    Closed,
    Tabulated(Table),
}

/// A radial solution, either the closed form or an integrated table.
#[derive(Clone, Debug, PartialEq)]
pub struct AnsatzProfile {
    n: usize,
    c: f64,
    c_norm: f64,
    repr: Repr,
}

fn hermite5(t: f64, h: f64, y0: [f64; 3], y1: [f64; 3]) -> f64 {
    let (t2, t3) = (t * t, t * t * t);
    let (t4, t5) = (t3 * t, t3 * t2);
    let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h10 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h20 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h01 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h21 = 0.5 * (t3 - 2.0 * t4 + t5);
    h00 * y0[0] + h10 * h * y0[1] + h20 * h * h * y0[2] + h01 * y1[0] + h11 * h * y1[1] + h21 * h * h * y1[2]
}

impl AnsatzProfile {
    /// The closed-form solution (`C = 0`, `c_norm = (n+2)^(n+1)`).
    pub fn closed(n: usize) -> Self {
        Self {
            n,
            c: 0.0,
            c_norm: default_c_norm(n),
            repr: Repr::Closed,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The first integral `C`.
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn c_norm(&self) -> f64 {
        self.c_norm
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(self.repr, Repr::Closed)
    }

    /// Closed interval of valid `s` (the closed form is valid for all `s < 0`).
    pub fn s_range(&self) -> (f64, f64) {
        match &self.repr {
            Repr::Closed => (f64::NEG_INFINITY, -f64::MIN_POSITIVE),
            Repr::Tabulated(t) => (t.s[0], *t.s.last().unwrap()),
        }
    }

    pub fn contains(&self, s: f64) -> bool {
        let (lo, hi) = self.s_range();
        s >= lo && s <= hi
    }

    /// Grid nodes `(s, point)` of a tabulated profile, ascending in `s`.
    pub fn nodes(&self) -> Vec<(f64, ProfilePoint)> {
        match &self.repr {
            Repr::Closed => Vec::new(),
            Repr::Tabulated(t) => (0..t.s.len())
                .map(|i| {
                    (
                        t.s[i],
                        ProfilePoint {
                            rho: t.rho[i],
                            rho_s: t.rho_s[i],
                            rho_ss: t.rho_ss[i],
                        },
                    )
                })
                .collect(),
        }
    }

    fn rho_sss(&self, p: &ProfilePoint) -> f64 {
        p.rho_ss * (p.f() - self.n as f64 * p.rho_ss / p.f())
    }

    pub fn eval(&self, s: f64) -> Result<ProfilePoint> {
        let t = match &self.repr {
            Repr::Closed => return rho_closed(self.n, s),
            Repr::Tabulated(t) => t,
        };
        if !self.contains(s) {
            return Err(Error::DomainViolation(format!(
                "s = {s} outside tabulated range [{}, {}]",
                t.s[0],
                t.s.last().unwrap()
            )));
        }
        let k = match t.s.partition_point(|&x| x <= s) {
            0 => 0,
            k if k >= t.s.len() => t.s.len() - 2,
            k => k - 1,
        };
        let at = |i: usize| ProfilePoint {
            rho: t.rho[i],
            rho_s: t.rho_s[i],
            rho_ss: t.rho_ss[i],
        };
        let (p0, p1) = (at(k), at(k + 1));
        let h = t.s[k + 1] - t.s[k];
        let tau = (s - t.s[k]) / h;
        let rho = hermite5(tau, h, [p0.rho, p0.rho_s, p0.rho_ss], [p1.rho, p1.rho_s, p1.rho_ss]);
        let rho_s = hermite5(
            tau,
            h,
            [p0.rho_s, p0.rho_ss, self.rho_sss(&p0)],
            [p1.rho_s, p1.rho_ss, self.rho_sss(&p1)],
        );
        Ok(ProfilePoint {
            rho,
            rho_s,
            rho_ss: ode_rhs(self.n, self.c_norm, s, rho, rho_s),
        })
    }
}

/// Initial-value problem for the radial equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeProblem {
    pub n: usize,
    pub c_norm: f64,
    pub s0: f64,
    pub rho0: f64,
    pub rho_s0: f64,
    pub s_end: f64,
    pub tol: f64,
    /// Largest step (and so the widest table cell).
    pub max_step: f64,
}

impl OdeProblem {
    /// Initial data taken from the closed form at `s0`.
    pub fn from_closed(n: usize, s0: f64, s_end: f64, tol: f64) -> Result<Self> {
        let p = rho_closed(n, s0)?;
        Ok(Self {
            n,
            c_norm: default_c_norm(n),
            s0,
            rho0: p.rho,
            rho_s0: p.rho_s,
            s_end,
            tol,
            max_step: 0.25,
        })
    }
}

struct Radial {
    n: i32,
    c_norm: f64,
}

const DEGENERATE_F: f64 = 1e-9;

impl System<f64, Vector2<f64>> for Radial {
    fn system(&self, s: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        let f = 1.0 + y[1];
        dy[0] = y[1];
        dy[1] = if f > 0.0 {
            self.c_norm * (y[0] + s).exp() / f.powi(self.n)
        } else {
            f64::NAN
        };
    }

    fn solout(&mut self, _s: f64, y: &Vector2<f64>, _dy: &Vector2<f64>) -> bool {
        !(1.0 + y[1] > DEGENERATE_F)
    }
}

/// Adaptive Dormand–Prince 5(4) integration from `s0` to `s_end`.
pub fn ode_solve(pb: &OdeProblem) -> Result<AnsatzProfile> {
    if !(1.0 + pb.rho_s0 > 0.0) {
        return Err(Error::Precondition(format!(
            "need 1 + rho_s0 > 0, got {}",
            1.0 + pb.rho_s0
        )));
    }
    if !(pb.s0 < 0.0 && pb.s_end < 0.0) || pb.s0 == pb.s_end {
        return Err(Error::Precondition(format!(
            "integration interval [{}, {}] must be non-empty with s < 0",
            pb.s0, pb.s_end
        )));
    }
    if !(pb.tol > 0.0 && pb.max_step > 0.0) {
        return Err(Error::Precondition("tolerance and max step must be positive".into()));
    }
    let sys = Radial {
        n: pb.n as i32,
        c_norm: pb.c_norm,
    };
    let mut solver = Dopri5::from_param(
        sys,
        pb.s0,
        pb.s_end,
        0.0,
        Vector2::new(pb.rho0, pb.rho_s0),
        pb.tol,
        pb.tol,
        0.9,
        0.04,
        0.2,
        10.0,
        pb.max_step,
        0.0,
        1_000_000,
        1000,
        OutputType::Sparse,
    );
    let outcome = solver.integrate();
    let xs = solver.x_out();
    let ys = solver.y_out();
    let last_valid = xs
        .iter()
        .zip(ys)
        .take_while(|(_, y)| 1.0 + y[1] > DEGENERATE_F && y.iter().all(|v| v.is_finite()))
        .last()
        .map_or(pb.s0, |(x, _)| *x);
    let reached = xs
        .last()
        .is_some_and(|x| (x - pb.s_end).abs() <= 1e-9 * pb.s_end.abs().max(1.0));
    if outcome.is_err() || !reached || last_valid != *xs.last().unwrap() {
        return Err(Error::ProfileDegenerate {
            last_valid_s: last_valid,
        });
    }

    let mut rows: Vec<(f64, f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (*x, y[0], y[1])).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    rows.dedup_by(|a, b| a.0 == b.0);
    let table = Table {
        s: rows.iter().map(|r| r.0).collect(),
        rho: rows.iter().map(|r| r.1).collect(),
        rho_s: rows.iter().map(|r| r.2).collect(),
        rho_ss: rows.iter().map(|r| ode_rhs(pb.n, pb.c_norm, r.0, r.1, r.2)).collect(),
    };
    let start = ProfilePoint {
        rho: pb.rho0,
        rho_s: pb.rho_s0,
        rho_ss: ode_rhs(pb.n, pb.c_norm, pb.s0, pb.rho0, pb.rho_s0),
    };
    Ok(AnsatzProfile {
        n: pb.n,
        c: first_integral(&start, pb.n),
        c_norm: pb.c_norm,
        repr: Repr::Tabulated(table),
    })
}

/// Halves the step cap until the metric coefficients `1 + rho_s` and
/// `rho_ss` move by less than `1e-8` (relative) between refinements.
pub fn ode_solve_refined(pb: &OdeProblem) -> Result<(AnsatzProfile, usize)> {
    let mut cur = *pb;
    let mut prev = ode_solve(&cur)?;
    let (lo, hi) = prev.s_range();
    let probes: Vec<f64> = (0..=200).map(|k| lo + (hi - lo) * k as f64 / 200.0).collect();
    for round in 1..=10 {
        cur.max_step *= 0.5;
        let next = ode_solve(&cur)?;
        let mut change: f64 = 0.0;
        for &s in &probes {
            let (a, b) = (prev.eval(s)?, next.eval(s)?);
            change = change
                .max(((a.f() - b.f()) / b.f()).abs())
                .max(((a.rho_ss - b.rho_ss) / b.rho_ss).abs());
        }
        prev = next;
        if change < 1e-8 {
            return Ok((prev, round));
        }
    }
    Ok((prev, 10))
}

/// Max deviation of the first integral from its initial value over the table.
pub fn first_integral_drift(profile: &AnsatzProfile) -> f64 {
    profile
        .nodes()
        .iter()
        .map(|(_, p)| (first_integral(p, profile.n) - profile.c).abs())
        .fold(0.0, f64::max)
}

/// The base torus with `a = h`, optionally perturbed to
/// `log a = log h + epsilon sin(2 pi x_1)` with `x_1` the first real lattice
/// coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct LineBundleGeom {
    pd: PeriodData,
    epsilon: f64,
    kappa: Vec<Complex64>,
}

impl LineBundleGeom {
    pub fn flat(pd: PeriodData) -> Self {
        let kappa = pd.lattice_covector(0);
        Self {
            pd,
            epsilon: 0.0,
            kappa,
        }
    }

    pub fn with_perturbation(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn period_data(&self) -> &PeriodData {
        &self.pd
    }

    pub fn n(&self) -> usize {
        self.pd.n()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_flat(&self) -> bool {
        self.epsilon == 0.0
    }

    fn phase(&self, z: &[Complex64]) -> f64 {
        2.0 * PI * self.kappa.iter().zip(z).map(|(k, z)| (k * z).re).sum::<f64>()
    }

    pub fn log_a(&self, z: &[Complex64]) -> f64 {
        log_h(&self.pd, z) + self.epsilon * self.phase(z).sin()
    }

    /// `d_i log a`.
    pub fn grad_log_a(&self, z: &[Complex64]) -> Vec<Complex64> {
        let cos = self.epsilon * PI * self.phase(z).cos();
        log_h_gradient(&self.pd, z)
            .into_iter()
            .zip(&self.kappa)
            .map(|(g, k)| g + k * cos)
            .collect()
    }

    /// `omega_M = d dbar log a`; equals `pi W` when flat.
    pub fn omega_m(&self, z: &[Complex64]) -> DMatrix<Complex64> {
        let n = self.n();
        let sin = self.epsilon * PI * PI * self.phase(z).sin();
        DMatrix::from_fn(n, n, |i, j| {
            Complex64::new(PI * self.pd.w_matrix()[(i, j)], 0.0) - self.kappa[i] * self.kappa[j].conj() * sin
        })
    }

    /// `s = log(a(z) |eta|^2)` at a bundle point (`eta = w`).
    pub fn level(&self, b: &BundlePoint) -> f64 {
        self.log_a(b.z()) + b.log_abs_w2()
    }

    /// The point over `z` with `s = level` and `arg eta = theta`.
    pub fn point_at_level(&self, z: &[Complex64], level: f64, theta: f64) -> BundlePoint {
        let re = 0.5 * (level - self.log_a(z));
        BundlePoint::from_log_w(Complex64::new(re, theta), z.to_vec())
    }
}

fn chart_s(geom: &LineBundleGeom, chart: FiberChart, p: &CPoint) -> f64 {
    let n = geom.n();
    let fiber = match chart {
        FiberChart::Log => 2.0 * p[n].re,
        FiberChart::Linear => p[n].norm_sqr().ln(),
    };
    geom.log_a(&p.coords()[..n]) + fiber
}

/// `phi_tot = log a + rho(s)` as a field in the given chart.
pub fn total_potential_field(geom: &LineBundleGeom, profile: &AnsatzProfile, chart: FiberChart) -> FnField {
    let n = geom.n();
    let shared = Arc::new((geom.clone(), profile.clone()));
    let (e, d, sc) = (shared.clone(), shared.clone(), shared);
    FnField::new(n + 1, move |p| {
        let (g, pr) = &*e;
        let s = chart_s(g, chart, p);
        pr.eval(s).map_or(f64::NAN, |pt| g.log_a(&p.coords()[..n]) + pt.rho)
    })
    .with_domain(move |p| {
        let (g, pr) = &*d;
        (chart == FiberChart::Log || p[n].norm_sqr() > 0.0) && pr.contains(chart_s(g, chart, p))
    })
    .with_scale(move |p, i| {
        let s = chart_s(&sc.0, chart, p);
        let base = level_scale(s, chart, i == n, p[n].norm());
        if i == n {
            return base;
        }
        let grad = 2.0
            * sc.0
                .grad_log_a(&p.coords()[..n])
                .iter()
                .map(|c| c.norm_sqr())
                .sum::<f64>()
                .sqrt();
        base.min(s.abs() / (1.0 + grad))
    })
}

/// `phi_tot - phi_Q` as a field; pluriharmonic for the flat base.
pub fn potential_difference_field(geom: &LineBundleGeom, profile: &AnsatzProfile, chart: FiberChart) -> FnField {
    let n = geom.n();
    let tot = total_potential_field(geom, profile, chart);
    let quo = ball::quotient_field(geom.period_data(), chart);
    let pd = geom.period_data().clone();
    let shared = Arc::new((tot, quo));
    let (e, d) = (shared.clone(), shared);
    use crate::wirtinger::ScalarField;
    FnField::new(n + 1, move |p| e.0.eval(p) - e.1.eval(p))
        .with_domain(move |p| d.0.in_domain(p) && d.1.in_domain(p))
        .with_scale(move |p, i| ball::bundle_scale(&pd, chart, p, i))
}

/// The assembled metric at `b` from an explicit profile point:
/// `(1 + rho_s) omega_M + B nabla eta (nabla eta)^*` with
/// `nabla eta = d eta + eta d log a`, `B = rho_ss / |eta|^2` (linear chart) or
/// `nabla v = dv + d log a`, `B = rho_ss` (log chart).
pub fn calabi_metric_at(
    geom: &LineBundleGeom,
    pt: &ProfilePoint,
    b: &BundlePoint,
    chart: FiberChart,
) -> Result<HermitianForm> {
    let n = geom.n();
    let z = b.z();
    let lgrad = geom.grad_log_a(z);
    let om = geom.omega_m(z);
    let (frame, coeff) = match chart {
        FiberChart::Log => (lgrad.clone(), pt.rho_ss),
        FiberChart::Linear => {
            let w = b.w();
            if w.norm_sqr() == 0.0 {
                return Err(Error::DomainViolation(
                    "fiber coordinate underflows in the linear chart".into(),
                ));
            }
            (lgrad.iter().map(|l| l * w).collect(), pt.rho_ss / w.norm_sqr())
        }
    };
    let mut e = frame;
    e.push(Complex64::new(1.0, 0.0));
    let mut g = DMatrix::from_fn(n + 1, n + 1, |i, j| coeff * e[i] * e[j].conj());
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] += om[(i, j)] * pt.f();
        }
    }
    let size = g.iter().map(|c| c.norm()).fold(0.0, f64::max);
    HermitianForm::new(g, ball::chart_point(b, chart)?, 1e-12 * size)
}

/// [`calabi_metric_at`] with the profile evaluated at the level of `b`.
pub fn calabi_metric(
    geom: &LineBundleGeom,
    profile: &AnsatzProfile,
    b: &BundlePoint,
    chart: FiberChart,
) -> Result<HermitianForm> {
    let pt = profile.eval(geom.level(b))?;
    calabi_metric_at(geom, &pt, b, chart)
}

fn det_gap(geom: &LineBundleGeom, pt: &ProfilePoint, b: &BundlePoint, chart: FiberChart) -> Result<f64> {
    let g = calabi_metric_at(geom, pt, b, chart)?;
    let n = geom.n();
    let fiber = match chart {
        FiberChart::Log => pt.rho_ss,
        FiberChart::Linear => pt.rho_ss / b.w().norm_sqr(),
    };
    let expected = pt.f().powi(n as i32) * geom.omega_m(b.z()).determinant().re * fiber;
    let det = g.determinant();
    Ok(if expected == 0.0 {
        det.abs()
    } else {
        ((det - expected) / expected).abs()
    })
}

/// Relative gap between `det g` and `(1 + rho_s)^n det(omega_M) a rho_ss / r`
/// for an explicit profile point (absolute when the latter vanishes).
pub fn det_identity_at(geom: &LineBundleGeom, pt: &ProfilePoint, b: &BundlePoint, chart: FiberChart) -> Result<f64> {
    det_gap(geom, pt, b, chart)
}

pub fn det_identity_check(
    geom: &LineBundleGeom,
    profile: &AnsatzProfile,
    b: &BundlePoint,
    chart: FiberChart,
) -> Result<f64> {
    det_gap(geom, &profile.eval(geom.level(b))?, b, chart)
}

/// Arc length of the radial path `arg eta = const` over `z` from `s = -k1` to
/// `s = -k2`, by quadrature of `sqrt(g_{eta etabar}) |d eta|`.
pub fn fiber_length(geom: &LineBundleGeom, profile: &AnsatzProfile, z: &[Complex64], k1: f64, k2: f64) -> Result<f64> {
    if !(k1 > 0.0 && k2 > k1) {
        return Err(Error::Precondition(format!("need 0 < k1 < k2, got {k1}, {k2}")));
    }
    let n = geom.n();
    // |d eta| / |eta| = ds / 2 along the ray; substitute s = -e^t
    quadrature::try_gauss_legendre(
        |t| {
            let b = geom.point_at_level(z, -t.exp(), 0.0);
            let g = calabi_metric(geom, profile, &b, FiberChart::Log)?;
            Ok(0.5 * g.get(n, n).re.sqrt() * t.exp())
        },
        k1.ln(),
        k2.ln(),
        16,
    )
}

/// Least-squares line `y = intercept + slope x` and its `R^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r_squared = if syy > 0.0 && sxx > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    LineFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    }
}

/// Fit of `length(k1, k)` against `ln k`.
pub fn fiber_length_growth(
    geom: &LineBundleGeom,
    profile: &AnsatzProfile,
    z: &[Complex64],
    k1: f64,
    ks: &[f64],
) -> Result<LineFit> {
    let lens = ks
        .iter()
        .map(|&k| fiber_length(geom, profile, z, k1, k))
        .collect::<Result<Vec<_>>>()?;
    let logs: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
    Ok(fit_line(&logs, &lens))
}

/// A ray `arg eta = theta` over `z`, sampled at `samples` levels in
/// `[s_min, s_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ray {
    pub z: Vec<Complex64>,
    pub theta: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl Ray {
    pub fn levels(&self, samples: usize) -> Vec<f64> {
        if samples <= 1 {
            return vec![self.s_max];
        }
        (0..samples)
            .map(|k| self.s_max + (self.s_min - self.s_max) * k as f64 / (samples - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeRow {
    pub log_r: f64,
    pub sect_curv: f64,
    pub einstein_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeTable {
    pub epsilon: f64,
    pub rows: Vec<ProbeRow>,
    /// Affine fit of `sect_curv` against `|log r|`.
    pub fit: LineFit,
}

impl ProbeTable {
    /// `max - min` of the curvature column.
    pub fn curvature_spread(&self) -> f64 {
        let (lo, hi) = self
            .rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r.sect_curv), hi.max(r.sect_curv))
            });
        hi - lo
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("log_r,sect_curv,einstein_residual\n");
        for r in &self.rows {
            out += &format!("{:.17e},{:.17e},{:.17e}\n", r.log_r, r.sect_curv, r.einstein_residual);
        }
        out
    }
}

/// Holomorphic sectional curvature along `dz_1` and the Einstein defect of
/// `phi_tot` along a ray, with the fit of curvature against `|log r|`.
pub fn curvature_probe(
    geom: &LineBundleGeom,
    profile: &AnsatzProfile,
    ray: &Ray,
    samples: usize,
    cfg: &StencilConfig,
) -> Result<ProbeTable> {
    use rayon::prelude::*;
    let field = total_potential_field(geom, profile, FiberChart::Log);
    let rows = ray
        .levels(samples)
        .par_iter()
        .map(|&s| {
            let b = geom.point_at_level(&ray.z, s, ray.theta);
            let p = ball::chart_point(&b, FiberChart::Log)?;
            Ok(ProbeRow {
                log_r: s,
                sect_curv: wirtinger::holomorphic_sectional_curvature(&field, &p, 0, cfg)?,
                einstein_residual: wirtinger::einstein_residual(&field, &p, -1.0, cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = rows.iter().map(|r| r.log_r.abs()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.sect_curv).collect();
    Ok(ProbeTable {
        epsilon: geom.epsilon(),
        fit: fit_line(&xs, &ys),
        rows,
    })
}

/// Residuals of both sign conventions for the cusp potential against the
/// assembled metric at one point (log chart, relative entrywise error).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignReport {
    /// `-(n+2) log(-log r)` versus the assembled metric.
    pub corrected: f64,
    /// `log(-log r)` versus the assembled metric.
    pub literal: f64,
    /// Smallest eigenvalue of the literal variant's form.
    pub literal_min_eigenvalue: f64,
}

pub fn sign_convention_report(
    geom: &LineBundleGeom,
    profile: &AnsatzProfile,
    b: &BundlePoint,
    cfg: &StencilConfig,
) -> Result<SignReport> {
    let pd = geom.period_data();
    let assembled = calabi_metric(geom, profile, b, FiberChart::Log)?;
    let p = ball::chart_point(b, FiberChart::Log)?;
    let good = wirtinger::metric_from_potential(&ball::quotient_field(pd, FiberChart::Log), &p, cfg)?;
    let bad = wirtinger::metric_from_potential(&ball::quotient_field_literal(pd, FiberChart::Log), &p, cfg)?;
    Ok(SignReport {
        corrected: assembled.relative_error(&good),
        literal: assembled.relative_error(&bad),
        literal_min_eigenvalue: wirtinger::min_eigenvalue(&bad),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abelian::PeriodData;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn pd2() -> PeriodData {
        PeriodData::new(
            vec![1, 2],
            DMatrix::from_row_slice(2, 2, &[c(0.0, -2.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, -3.0)]),
            vec![c(0.1, 0.2), c(-0.3, 0.05)],
        )
        .unwrap()
    }

    #[test]
    fn closed_form_values() {
        let p = rho_closed(1, -3.0).unwrap();
        assert_eq!(p.rho_s, 0.0);
        assert!((p.rho - (3.0 - 3.0 * 3f64.ln())).abs() < 1e-15);
        for s in [-0.1, -2.0, -80.0] {
            assert!(rho_closed(2, s).unwrap().f() > 0.0);
        }
        assert!(rho_closed(1, 0.0).is_err());
    }

    #[test]
    fn closed_form_solves_normalized_equation() {
        for n in [1usize, 2] {
            for s in [-0.5, -1.5, -3.0, -10.0, -50.0] {
                let p = rho_closed(n, s).unwrap();
                let scale = p.f().powi(n as i32) * p.rho_ss;
                assert!(ode_residual(&p, s, n, default_c_norm(n)).abs() <= 1e-12 * scale.max(1e-300));
            }
        }
    }

    #[test]
    fn unit_constant_leaves_documented_gap() {
        for n in [1usize, 2] {
            let s = -4.0;
            let p = rho_closed(n, s).unwrap();
            let expected = (default_c_norm(n) - 1.0) * (-s).powi(-(n as i32 + 2));
            assert!((ode_residual(&p, s, n, 1.0) - expected).abs() < 1e-14);
            let shifted = ProfilePoint {
                rho: p.rho + (n + 1) as f64 * ((n + 2) as f64).ln(),
                ..p
            };
            assert!(ode_residual(&shifted, s, n, 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn closed_form_has_zero_first_integral() {
        for s in [-1.0, -7.0, -30.0] {
            assert!(first_integral(&rho_closed(1, s).unwrap(), 1).abs() < 1e-15);
        }
    }

    #[test]
    fn integration_reproduces_closed_form() {
        for n in [1usize, 2] {
            let pb = OdeProblem::from_closed(n, -10.0, -100.0, 1e-12).unwrap();
            let prof = ode_solve(&pb).unwrap();
            assert_eq!(prof.s_range(), (-100.0, -10.0));
            let mut worst: f64 = 0.0;
            for k in 0..=900 {
                let s = -10.0 - 0.1 * k as f64;
                let a = prof.eval(s).unwrap();
                let b = rho_closed(n, s).unwrap();
                worst = worst.max((a.rho - b.rho).abs()).max((a.f() - b.f()).abs());
            }
            assert!(worst < 1e-8, "n={n}: {worst}");
            assert!(first_integral_drift(&prof) < 1e-10);
        }
    }

    #[test]
    fn first_integral_conserved_off_closed_branch() {
        let c_target = 0.05;
        let s0 = -4.0;
        let rho0 = initial_rho_for(1, c_target, 9.0, s0, 0.2).unwrap();
        let pb = OdeProblem {
            n: 1,
            c_norm: 9.0,
            s0,
            rho0,
            rho_s0: 0.2,
            s_end: -4.5,
            tol: 1e-12,
            max_step: 0.05,
        };
        let prof = ode_solve(&pb).unwrap();
        assert!((prof.c() - c_target).abs() < 1e-14);
        assert!(first_integral_drift(&prof) < 1e-9);
    }

    #[test]
    fn degenerating_branch_is_reported() {
        // C > 0 drives f to zero in finite backward time
        let s0 = -3.0;
        let rho0 = initial_rho_for(1, 0.5, 9.0, s0, -0.5).unwrap();
        let pb = OdeProblem {
            n: 1,
            c_norm: 9.0,
            s0,
            rho0,
            rho_s0: -0.5,
            s_end: -40.0,
            tol: 1e-10,
            max_step: 0.1,
        };
        match ode_solve(&pb) {
            Err(Error::ProfileDegenerate { last_valid_s }) => assert!(last_valid_s < s0 && last_valid_s > -40.0),
            other => panic!("expected degeneration, got {other:?}"),
        }
    }

    #[test]
    fn refinement_converges() {
        let pb = OdeProblem {
            max_step: 2.0,
            ..OdeProblem::from_closed(1, -2.0, -20.0, 1e-12).unwrap()
        };
        let (prof, rounds) = ode_solve_refined(&pb).unwrap();
        assert!(rounds >= 1);
        let s = -7.77;
        assert!((prof.eval(s).unwrap().rho_ss - rho_closed(1, s).unwrap().rho_ss).abs() < 1e-9);
    }

    #[test]
    fn assembly_matches_fd_hessian() {
        let cfg = StencilConfig::default();
        for pd in [PeriodData::square_torus(), pd2()] {
            let geom = LineBundleGeom::flat(pd);
            let prof = AnsatzProfile::closed(geom.n());
            let z: Vec<Complex64> = (0..geom.n()).map(|i| c(0.2 - 0.1 * i as f64, 0.35)).collect();
            for s in [-1.6, -5.0, -20.0, -49.0] {
                let b = geom.point_at_level(&z, s, 0.9);
                for chart in [FiberChart::Log, FiberChart::Linear] {
                    let asm = calabi_metric(&geom, &prof, &b, chart).unwrap();
                    let fd = wirtinger::metric_from_potential(
                        &total_potential_field(&geom, &prof, chart),
                        &ball::chart_point(&b, chart).unwrap(),
                        &cfg,
                    )
                    .unwrap();
                    let err = asm.relative_error(&fd);
                    let limit = if chart == FiberChart::Log { 1e-6 } else { 1e-4 };
                    assert!(err < limit, "s={s} {chart:?}: {err}");
                }
            }
        }
    }

    #[test]
    fn fiber_entry_positive() {
        let geom = LineBundleGeom::flat(PeriodData::square_torus());
        let prof = AnsatzProfile::closed(1);
        let b = geom.point_at_level(&[c(0.1, 0.1)], -3.0, 0.0);
        let g = calabi_metric(&geom, &prof, &b, FiberChart::Linear).unwrap();
        let expected = (1.0 / 3.0) / b.w().norm_sqr();
        assert!((g.get(1, 1).re / expected - 1.0).abs() < 1e-12);
        assert!(g.is_positive());
    }

    #[test]
    fn determinant_identity() {
        for pd in [PeriodData::square_torus(), pd2()] {
            let geom = LineBundleGeom::flat(pd);
            let prof = AnsatzProfile::closed(geom.n());
            let z: Vec<Complex64> = (0..geom.n()).map(|i| c(0.4, -0.2 + 0.3 * i as f64)).collect();
            for s in [-1.6, -7.0, -45.0] {
                let b = geom.point_at_level(&z, s, -2.0);
                assert!(det_identity_check(&geom, &prof, &b, FiberChart::Linear).unwrap() < 1e-8);
                assert!(det_identity_check(&geom, &prof, &b, FiberChart::Log).unwrap() < 1e-8);
            }
        }
    }

    #[test]
    fn determinant_identity_degenerate_profile() {
        let geom = LineBundleGeom::flat(PeriodData::square_torus());
        let b = geom.point_at_level(&[c(0.1, 0.1)], -3.0, 0.0);
        let pt = ProfilePoint {
            rho_ss: 0.0,
            ..rho_closed(1, -3.0).unwrap()
        };
        assert!(det_identity_at(&geom, &pt, &b, FiberChart::Linear).unwrap() < 1e-12);
    }

    #[test]
    fn fiber_length_doubling_and_additivity() {
        let geom = LineBundleGeom::flat(PeriodData::square_torus());
        let prof = AnsatzProfile::closed(1);
        let z = [c(0.2, 0.3)];
        let expected = 3f64.sqrt() / 2.0 * std::f64::consts::LN_2;
        for k in [2.0, 8.0, 32.0, 128.0] {
            let len = fiber_length(&geom, &prof, &z, k, 2.0 * k).unwrap();
            assert!((len - expected).abs() < 1e-10, "{len}");
        }
        let a = fiber_length(&geom, &prof, &z, 2.0, 5.0).unwrap();
        let b = fiber_length(&geom, &prof, &z, 5.0, 11.0).unwrap();
        let ab = fiber_length(&geom, &prof, &z, 2.0, 11.0).unwrap();
        assert!((a + b - ab).abs() < 1e-10);
        let fit = fiber_length_growth(&geom, &prof, &z, 2.0, &[4.0, 8.0, 16.0, 64.0, 256.0]).unwrap();
        assert!((fit.slope - 3f64.sqrt() / 2.0).abs() < 1e-8);
        assert!(fit.r_squared > 0.999);
    }

    #[test]
    fn calabi_metric_is_einstein() {
        let cfg = StencilConfig::nested();
        for pd in [PeriodData::square_torus(), pd2()] {
            let geom = LineBundleGeom::flat(pd);
            let prof = AnsatzProfile::closed(geom.n());
            let field = total_potential_field(&geom, &prof, FiberChart::Log);
            let z: Vec<Complex64> = (0..geom.n()).map(|i| c(0.3, 0.1 * i as f64 - 0.2)).collect();
            for s in [-1.6, -10.0, -49.0] {
                let b = geom.point_at_level(&z, s, 0.5);
                let p = ball::chart_point(&b, FiberChart::Log).unwrap();
                let r = wirtinger::einstein_residual(&field, &p, -1.0, &cfg).unwrap();
                assert!(r < 1e-4, "n={} s={s}: {r}", geom.n());
            }
        }
    }

    #[test]
    fn difference_with_quotient_potential_is_pluriharmonic() {
        let cfg = StencilConfig::default();
        let geom = LineBundleGeom::flat(PeriodData::square_torus());
        let prof = AnsatzProfile::closed(1);
        let field = potential_difference_field(&geom, &prof, FiberChart::Log);
        for s in [-1.6, -12.0, -48.0] {
            let b = geom.point_at_level(&[c(0.3, -0.4)], s, 2.0);
            let g = wirtinger::metric_from_potential(&field, &ball::chart_point(&b, FiberChart::Log).unwrap(), &cfg)
                .unwrap();
            assert!(g.max_abs() < 1e-8, "{}", g.max_abs());
        }
    }

    #[test]
    fn sign_conventions() {
        let geom = LineBundleGeom::flat(PeriodData::square_torus());
        let prof = AnsatzProfile::closed(1);
        let b = geom.point_at_level(&[c(0.3, -0.4)], -6.0, 0.0);
        let rep = sign_convention_report(&geom, &prof, &b, &StencilConfig::default()).unwrap();
        assert!(rep.corrected < 1e-6);
        assert!(rep.literal > 0.5);
        assert!(rep.literal_min_eigenvalue < 0.0);
    }

    #[test]
    fn perturbed_base_form_matches_fd() {
        let geom = LineBundleGeom::flat(pd2()).with_perturbation(0.1);
        let z = [c(0.3, 0.2), c(-0.1, 0.4)];
        let field = FnField::new(2, {
            let g = geom.clone();
            move |p| g.log_a(p.coords())
        });
        let fd = wirtinger::metric_from_potential(&field, &CPoint::from_slice(&z).unwrap(), &StencilConfig::default())
            .unwrap();
        let exact = geom.omega_m(&z);
        let diff = (fd.entries() - exact).iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-7, "{diff}");
        let grad = wirtinger::holomorphic_gradient(&field, &CPoint::from_slice(&z).unwrap(), &StencilConfig::default())
            .unwrap();
        for (a, b) in grad.iter().zip(geom.grad_log_a(&z)) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn probe_flat_and_perturbed() {
        let cfg = StencilConfig::nested();
        let ray = Ray {
            z: vec![c(0.37, -0.21)],
            theta: 0.3,
            s_min: -40.0,
            s_max: -2.0,
        };
        let flat = curvature_probe(
            &LineBundleGeom::flat(PeriodData::square_torus()),
            &AnsatzProfile::closed(1),
            &ray,
            12,
            &cfg,
        )
        .unwrap();
        assert_eq!(flat.rows.len(), 12);
        assert!(flat.curvature_spread() < 1e-3, "{}", flat.curvature_spread());
        assert!((flat.rows[0].sect_curv + 2.0 / 3.0).abs() < 1e-3);
        let bent = curvature_probe(
            &LineBundleGeom::flat(PeriodData::square_torus()).with_perturbation(0.1),
            &AnsatzProfile::closed(1),
            &ray,
            12,
            &cfg,
        )
        .unwrap();
        assert!(bent.fit.slope.abs() > 1e-3, "{:?}", bent.fit);
        assert!(bent.fit.r_squared > 0.9, "{:?}", bent.fit);
    }
}
