//! Universal-cover picture of the punctured neighbourhood of the zero section:
//! the exponential covering, the parabolic deck group, the change to the
//! Heisenberg model of the ball and the Kähler–Einstein potentials.
//!
//! Scalar fields on the bundle use the coordinates `(z_1, .., z_n, v)` with
//! `v = log w` ("log fiber" chart) or `(z_1, .., z_n, w)` ("linear" chart).
//! The two differ by a holomorphic change of coordinates; see
//! [`log_to_linear`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::abelian::{log_h, log_h_gradient, PeriodData};
use crate::error::{Error, Result};
use crate::quadrature;
use crate::wirtinger::{self, CPoint, FnField, HermitianForm, StencilConfig};

const I: Complex64 = Complex64::new(0.0, 1.0);
const CLOSURE_TOL: f64 = 1e-10;

/// A point `(u, z)` of the cover `C x C^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct UpstairsPoint {
    pub u: Complex64,
    pub z: Vec<Complex64>,
}

impl UpstairsPoint {
    pub fn new(u: Complex64, z: Vec<Complex64>) -> Self {
        Self { u, z }
    }

    pub fn is_finite(&self) -> bool {
        std::iter::once(&self.u)
            .chain(&self.z)
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// A point `(u~, z~)` of the Heisenberg model.
#[derive(Clone, Debug, PartialEq)]
pub struct HeisenbergPoint {
    pub u_t: Complex64,
    pub z_t: Vec<Complex64>,
}

impl HeisenbergPoint {
    pub fn new(u_t: Complex64, z_t: Vec<Complex64>) -> Self {
        Self { u_t, z_t }
    }

    /// `Im u~ - |z~|^2`; the ball is where this is positive.
    pub fn level(&self) -> f64 {
        self.u_t.im - self.z_t.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }
}

/// A point `(w, z)` of the punctured bundle, stored as `(log w, z)` so that
/// points far down the cusp stay representable. The imaginary part of
/// `log w` is kept in `(-pi, pi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BundlePoint {
    log_w: Complex64,
    z: Vec<Complex64>,
}

fn reduce_arg(theta: f64) -> f64 {
    let r = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

impl BundlePoint {
    pub fn from_w(w: Complex64, z: Vec<Complex64>) -> Result<Self> {
        if w == Complex64::new(0.0, 0.0) || !w.re.is_finite() || !w.im.is_finite() {
            return Err(Error::DomainViolation(format!(
                "fiber coordinate w = {w} must be finite and non-zero"
            )));
        }
        Ok(Self::from_log_w(w.ln(), z))
    }

    pub fn from_log_w(log_w: Complex64, z: Vec<Complex64>) -> Self {
        Self {
            log_w: Complex64::new(log_w.re, reduce_arg(log_w.im)),
            z,
        }
    }

    pub fn log_w(&self) -> Complex64 {
        self.log_w
    }

    /// `w` itself; underflows to zero far down the cusp.
    pub fn w(&self) -> Complex64 {
        self.log_w.exp()
    }

    /// `log |w|^2`.
    pub fn log_abs_w2(&self) -> f64 {
        2.0 * self.log_w.re
    }

    pub fn z(&self) -> &[Complex64] {
        &self.z
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    /// Coordinates `(z, log w)` for the log fiber chart.
    pub fn log_chart_coords(&self) -> Vec<Complex64> {
        let mut c = self.z.clone();
        c.push(self.log_w);
        c
    }

    /// Coordinates `(z, w)` for the linear chart.
    pub fn linear_chart_coords(&self) -> Vec<Complex64> {
        let mut c = self.z.clone();
        c.push(self.w());
        c
    }

    /// Euclidean-style distance used by round-trip checks: maximum of
    /// `|z - z'|` and `|log w - log w'|` (arguments compared mod `2 pi`).
    pub fn distance(&self, other: &BundlePoint) -> f64 {
        let dz = self
            .z
            .iter()
            .zip(&other.z)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let dre = (self.log_w.re - other.log_w.re).abs();
        let dim = reduce_arg(self.log_w.im - other.log_w.im).abs();
        dz.max(dre.hypot(dim))
    }
}

/// `(u, z) -> (exp(iu/2), z)`.
pub fn exp_map(x: &UpstairsPoint) -> BundlePoint {
    BundlePoint::from_log_w(I * x.u * 0.5, x.z.clone())
}

/// Principal lift `u = -2i log w`; `Re u` lands in `(-2 pi, 2 pi]`.
pub fn principal_lift(b: &BundlePoint) -> UpstairsPoint {
    UpstairsPoint::new(-2.0 * I * b.log_w, b.z.clone())
}

/// `F(u, z) = -Im u + log h(z)`, the log of the bundle norm.
pub fn cusp_height(pd: &PeriodData, x: &UpstairsPoint) -> f64 {
    -x.u.im + log_h(pd, &x.z)
}

/// `log r = log(|w|^2 h(z))`.
pub fn bundle_level(pd: &PeriodData, b: &BundlePoint) -> f64 {
    b.log_abs_w2() + log_h(pd, &b.z)
}

fn bilinear(w: &DMatrix<f64>, a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.len() {
        for j in 0..b.len() {
            acc += a[i] * b[j] * w[(i, j)];
        }
    }
    acc
}

/// The quadratic part `u~ - u` of the coordinate change.
fn heisenberg_offset(pd: &PeriodData, z: &[Complex64]) -> Complex64 {
    let w = pd.w_matrix();
    let c = pd.shift();
    I * PI * bilinear(w, z, z) + 2.0 * PI * I * bilinear(w, z, &c) + 0.5 * PI * I * bilinear(w, &c, &c)
}

fn mat_vec(m: &DMatrix<f64>, v: &[Complex64]) -> Vec<Complex64> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).fold(Complex64::new(0.0, 0.0), |acc, c| acc + v[c] * m[(r, c)]))
        .collect()
}

/// Change to the Heisenberg model, normalized so that
/// `Im u~ - |z~|^2 = -F(u, z)` holds identically:
/// `u~ = u + i pi z^T W z + 2 pi i z^T W c + (i pi / 2) c^T W c`,
/// `z~ = sqrt(pi) U z` with `U^T U = W`.
pub fn heisenberg_forward(pd: &PeriodData, x: &UpstairsPoint) -> HeisenbergPoint {
    let z_t = mat_vec(pd.w_factor(), &x.z)
        .into_iter()
        .map(|c| c * PI.sqrt())
        .collect();
    HeisenbergPoint::new(x.u + heisenberg_offset(pd, &x.z), z_t)
}

/// Inverse of [`heisenberg_forward`].
pub fn heisenberg_inverse(pd: &PeriodData, y: &HeisenbergPoint) -> UpstairsPoint {
    let n = pd.n();
    let u = pd.w_factor();
    // back substitution on the upper-triangular factor
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    for r in (0..n).rev() {
        let mut acc = y.z_t[r] / PI.sqrt();
        for c in r + 1..n {
            acc -= z[c] * u[(r, c)];
        }
        z[r] = acc / u[(r, r)];
    }
    let u0 = y.u_t - heisenberg_offset(pd, &z);
    UpstairsPoint::new(u0, z)
}

/// The coordinate change read off verbatim (lower Cholesky factor `V` with
/// `W = V V^T`, constant term `(pi/2) c^T W c`, no `sqrt(pi)`).
pub fn heisenberg_literal(pd: &PeriodData, x: &UpstairsPoint) -> HeisenbergPoint {
    let w = pd.w_matrix();
    let c = pd.shift();
    let v = pd.w_factor().transpose();
    let u_t =
        x.u + I * PI * bilinear(w, &x.z, &x.z) + 0.5 * PI * bilinear(w, &c, &c) + 2.0 * PI * I * bilinear(w, &x.z, &c);
    HeisenbergPoint::new(u_t, mat_vec(&v, &x.z))
}

/// `|Im u~ - |z~|^2 + F|` for the verbatim change; non-zero in general.
pub fn heisenberg_literal_defect(pd: &PeriodData, x: &UpstairsPoint) -> f64 {
    (heisenberg_literal(pd, x).level() + cusp_height(pd, x)).abs()
}

/// `|Im u~ - |z~|^2 + F|` for the calibrated change.
pub fn heisenberg_identity_residual(pd: &PeriodData, x: &UpstairsPoint) -> f64 {
    (heisenberg_forward(pd, x).level() + cusp_height(pd, x)).abs()
}

/// An element `(m, l, p)` of the parabolic deck group.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DeckElement {
    pub m: Vec<i64>,
    pub l: Vec<i64>,
    pub p: i64,
}

impl DeckElement {
    pub fn new(m: Vec<i64>, l: Vec<i64>, p: i64) -> Self {
        Self { m, l, p }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(vec![0; n], vec![0; n], 0)
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }
}

/// The `(n+2) x (n+2)` matrix acting on `(u, z - t, 1)`.
pub fn deck_matrix(pd: &PeriodData, g: &DeckElement) -> DMatrix<Complex64> {
    let n = pd.n();
    let z = pd.z_matrix();
    let m: Vec<f64> = g.m.iter().map(|&v| v as f64).collect();
    let mut mat = DMatrix::identity(n + 2, n + 2);
    let mut corner = Complex64::new(4.0 * PI * g.p as f64, 0.0);
    for a in 0..n {
        mat[(0, 1 + a)] = Complex64::new(-4.0 * PI * m[a], 0.0);
        corner += 2.0 * PI * m[a] * z[(a, a)];
        for b in 0..n {
            corner -= 2.0 * PI * z[(a, b)] * m[a] * m[b];
        }
        let mut col = Complex64::new((pd.delta()[a] * g.l[a]) as f64, 0.0);
        for b in 0..n {
            col += z[(a, b)] * m[b];
        }
        mat[(1 + a, n + 1)] = col;
    }
    mat[(0, n + 1)] = corner;
    mat
}

/// `g . x` via the homogeneous vector `(u, z - t, 1)`.
pub fn deck_apply(pd: &PeriodData, g: &DeckElement, x: &UpstairsPoint) -> UpstairsPoint {
    let n = pd.n();
    let mut v = DVector::zeros(n + 2);
    v[0] = x.u;
    for a in 0..n {
        v[1 + a] = x.z[a] - pd.t()[a];
    }
    v[n + 1] = Complex64::new(1.0, 0.0);
    let out = deck_matrix(pd, g) * v;
    UpstairsPoint::new(out[0], (0..n).map(|a| out[1 + a] + pd.t()[a]).collect())
}

fn composed(pd: &PeriodData, g1: &DeckElement, g2: &DeckElement) -> DeckElement {
    let cross: i64 = (0..pd.n()).map(|a| pd.delta()[a] * g1.l[a] * g2.m[a]).sum();
    DeckElement::new(
        g1.m.iter().zip(&g2.m).map(|(a, b)| a + b).collect(),
        g1.l.iter().zip(&g2.l).map(|(a, b)| a + b).collect(),
        g1.p + g2.p - cross,
    )
}

/// `max |M(g1 g2) - M(g2) M(g1)|`, relative to the largest entry involved.
pub fn deck_closure_residual(pd: &PeriodData, g1: &DeckElement, g2: &DeckElement) -> f64 {
    let g = composed(pd, g1, g2);
    let product = deck_matrix(pd, g2) * deck_matrix(pd, g1);
    let direct = deck_matrix(pd, &g);
    let scale = product.iter().map(|c| c.norm()).fold(1.0, f64::max);
    (direct - product).iter().map(|c| c.norm()).fold(0.0, f64::max) / scale
}

/// The element acting as `g1` followed by `g2`.
pub fn deck_compose(pd: &PeriodData, g1: &DeckElement, g2: &DeckElement) -> Result<DeckElement> {
    let residual = deck_closure_residual(pd, g1, g2);
    if residual > CLOSURE_TOL {
        return Err(Error::GroupClosure { residual });
    }
    Ok(composed(pd, g1, g2))
}

/// Group inverse.
pub fn deck_inverse(pd: &PeriodData, g: &DeckElement) -> DeckElement {
    let cross: i64 = (0..pd.n()).map(|a| pd.delta()[a] * g.l[a] * g.m[a]).sum();
    DeckElement::new(
        g.m.iter().map(|v| -v).collect(),
        g.l.iter().map(|v| -v).collect(),
        -g.p - cross,
    )
}

/// `-(n+2) log(Im u~ - |z~|^2)`.
pub fn ball_potential(y: &HeisenbergPoint, n: usize) -> Result<f64> {
    let level = y.level();
    if !(level > 0.0) {
        return Err(Error::DomainViolation(format!(
            "Heisenberg level {level} is not positive"
        )));
    }
    Ok(-((n + 2) as f64) * level.ln())
}

fn model_level(p: &CPoint) -> f64 {
    let n = p.dim() - 1;
    p[n].im - (0..n).map(|i| p[i].norm_sqr()).sum::<f64>()
}

/// The ball potential in coordinates `(z~_1, .., z~_n, u~)`.
pub fn ball_field(n: usize) -> FnField {
    let k = (n + 2) as f64;
    FnField::new(n + 1, move |p| -k * model_level(p).ln())
        .with_domain(|p| model_level(p) > 0.0)
        .with_scale(|p, _| model_level(p).sqrt().min(1.0))
}

/// `-(n+2) log(-log r)`.
pub fn quotient_potential(pd: &PeriodData, b: &BundlePoint, n: usize) -> Result<f64> {
    let level = bundle_level(pd, b);
    if !(level < 0.0) {
        return Err(Error::DomainViolation(format!("log r = {level} is not negative")));
    }
    Ok(-((n + 2) as f64) * (-level).ln())
}

/// Which fiber coordinate a bundle field is written in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FiberChart {
    /// `v = log w`.
    Log,
    /// `w` itself.
    Linear,
}

/// `log r` at chart coordinates `(z, v)` or `(z, w)`.
pub fn chart_level(pd: &PeriodData, chart: FiberChart, p: &CPoint) -> f64 {
    let n = pd.n();
    let fiber = match chart {
        FiberChart::Log => 2.0 * p[n].re,
        FiberChart::Linear => p[n].norm_sqr().ln(),
    };
    fiber + log_h(pd, &p.coords()[..n])
}

/// Coordinate scales for bundle fields: fiber steps are relative in the
/// linear chart; all steps grow with `|log r|`, the natural length there.
pub(crate) fn bundle_scale(pd: &PeriodData, chart: FiberChart, p: &CPoint, i: usize) -> f64 {
    let n = pd.n();
    let level = chart_level(pd, chart, p);
    let s = level_scale(level, chart, i == n, p[n].norm());
    if i == n {
        return s;
    }
    // keep base steps from carrying log r across zero through log h
    let grad = 2.0
        * log_h_gradient(pd, &p.coords()[..n])
            .iter()
            .map(|c| c.norm_sqr())
            .sum::<f64>()
            .sqrt();
    s.min(level.abs() / (1.0 + grad))
}

/// Local step scale at a point of level `level`; `fiber_norm` is `|w|` and
/// only matters in the linear chart.
pub(crate) fn level_scale(level: f64, chart: FiberChart, is_fiber: bool, fiber_norm: f64) -> f64 {
    let base = (level.abs() / 4.0).clamp(0.25, 4.0);
    match (chart, is_fiber) {
        (FiberChart::Linear, true) => base.min(1.0) * fiber_norm,
        (FiberChart::Log, true) => base,
        _ => base.min(1.0),
    }
}

fn quotient_field_with(pd: &PeriodData, chart: FiberChart, coeff: f64) -> FnField {
    let eval_pd = pd.clone();
    let dom_pd = pd.clone();
    let scale_pd = pd.clone();
    let n = pd.n();
    FnField::new(n + 1, move |p| coeff * (-chart_level(&eval_pd, chart, p)).ln())
        .with_domain(move |p| {
            (chart == FiberChart::Log || p[n].norm_sqr() > 0.0) && chart_level(&dom_pd, chart, p) < 0.0
        })
        .with_scale(move |p, i| bundle_scale(&scale_pd, chart, p, i))
}

/// `phi_Q = -(n+2) log(-log r)` as a field in the given chart.
pub fn quotient_field(pd: &PeriodData, chart: FiberChart) -> FnField {
    quotient_field_with(pd, chart, -((pd.n() + 2) as f64))
}

/// `log(-log r)`, the potential with the opposite sign convention.
pub fn quotient_field_literal(pd: &PeriodData, chart: FiberChart) -> FnField {
    quotient_field_with(pd, chart, 1.0)
}

/// Rewrites a form computed in the log fiber chart in the linear chart at
/// fiber coordinate `w` (`dv = dw / w`).
pub fn log_to_linear(form: &HermitianForm, w: Complex64) -> Result<HermitianForm> {
    let d = form.dim();
    let mut jac = DMatrix::<Complex64>::identity(d, d);
    jac[(d - 1, d - 1)] = w.inv();
    let entries = &jac * form.entries() * jac.adjoint();
    let mut coords = form.basepoint().coords().to_vec();
    coords[d - 1] = w;
    let size = entries.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let tol = (form.tol_herm() * w.norm_sqr().recip()).max(1e-13 * size);
    HermitianForm::new(entries, CPoint::new(coords)?, tol)
}

/// A bundle point as a base point of the given chart.
pub fn chart_point(b: &BundlePoint, chart: FiberChart) -> Result<CPoint> {
    match chart {
        FiberChart::Log => CPoint::new(b.log_chart_coords()),
        FiberChart::Linear => CPoint::new(b.linear_chart_coords()),
    }
}

/// Closed-form `g_{v vbar}` of `phi_Q` in the log chart: `(n+2) / (log r)^2`.
pub fn quotient_fiber_entry(n: usize, level: f64) -> f64 {
    (n + 2) as f64 / (level * level)
}

/// The point over `z` with `log r = level` and `arg w = theta`.
pub fn point_at_level(pd: &PeriodData, z: &[Complex64], level: f64, theta: f64) -> BundlePoint {
    let re = 0.5 * (level - log_h(pd, z));
    BundlePoint::from_log_w(Complex64::new(re, theta), z.to_vec())
}

/// Length of the radial fiber path from `log r = -k1` to `-k2` at fixed `z`
/// for the metric of `phi_Q`, with `g_{w wbar}` taken from finite differences.
pub fn quotient_fiber_length(pd: &PeriodData, z: &[Complex64], k1: f64, k2: f64, cfg: &StencilConfig) -> Result<f64> {
    if !(k1 > 0.0 && k2 > k1) {
        return Err(Error::Precondition(format!("need 0 < k1 < k2, got {k1}, {k2}")));
    }
    let field = quotient_field(pd, FiberChart::Log);
    let n = pd.n();
    // |dw|/|w| = dL/2 in the level L = log r; substitute L = -e^t
    quadrature::try_gauss_legendre(
        |t| {
            let b = point_at_level(pd, z, -t.exp(), 0.0);
            let g = wirtinger::metric_from_potential(&field, &chart_point(&b, FiberChart::Log)?, cfg)?;
            Ok(0.5 * g.get(n, n).re.sqrt() * t.exp())
        },
        k1.ln(),
        k2.ln(),
        16,
    )
}
