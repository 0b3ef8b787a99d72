//! Finite-difference Wirtinger calculus for real potentials on `C^d`.
//!
//! A point `z = x + iy` is handled through its `2d` real coordinates, ordered
//! `(x_1, y_1, x_2, y_2, ...)`. Mixed Wirtinger derivatives are assembled from
//! the real Hessian via
//!
//! ```text
//! d_{z_i} d_{zbar_j} f = 1/4 (f_{x_i x_j} + f_{y_i y_j} + i (f_{x_i y_j} - f_{y_i x_j}))
//! ```
//!
//! Stencils are central differences of order 2, 4 or 6, optionally followed
//! by one Richardson step at half the step size. The step along complex
//! coordinate `i` is `cfg.step * field.scale(p, i)`, so potentials that blow up
//! near a boundary can shrink their stencils there.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// A point of `C^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct CPoint {
    coords: Vec<Complex64>,
}

impl CPoint {
    pub fn new(coords: Vec<Complex64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Precondition("CPoint needs dimension >= 1".into()));
        }
        if coords.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite(format!("CPoint coordinates {coords:?}")));
        }
        Ok(Self { coords })
    }

    pub fn from_slice(coords: &[Complex64]) -> Result<Self> {
        Self::new(coords.to_vec())
    }

    pub fn origin(dim: usize) -> Self {
        Self {
            coords: vec![Complex64::new(0.0, 0.0); dim.max(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<Complex64> {
        self.coords
    }

    /// Real coordinate `a` (`x_{a/2}` for even `a`, `y_{a/2}` for odd `a`).
    pub fn real_coord(&self, a: usize) -> f64 {
        let c = self.coords[a / 2];
        if a.is_multiple_of(2) {
            c.re
        } else {
            c.im
        }
    }

    fn displaced(&self, moves: &[(usize, f64)]) -> CPoint {
        let mut coords = self.coords.clone();
        for &(a, delta) in moves {
            if a % 2 == 0 {
                coords[a / 2].re += delta;
            } else {
                coords[a / 2].im += delta;
            }
        }
        CPoint { coords }
    }
}

impl std::ops::Index<usize> for CPoint {
    type Output = Complex64;

    fn index(&self, i: usize) -> &Complex64 {
        &self.coords[i]
    }
}

/// A real-valued function on a domain of `C^d`.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, p: &CPoint) -> f64;

    fn in_domain(&self, _p: &CPoint) -> bool {
        true
    }

    /// Local length scale of complex coordinate `i` at `p`.
    fn scale(&self, _p: &CPoint, _i: usize) -> f64 {
        1.0
    }
}

type EvalFn = Box<dyn Fn(&CPoint) -> f64 + Send + Sync>;
type DomainFn = Box<dyn Fn(&CPoint) -> bool + Send + Sync>;
type ScaleFn = Box<dyn Fn(&CPoint, usize) -> f64 + Send + Sync>;

/// Closure-backed [`ScalarField`].
pub struct FnField {
    dim: usize,
    eval: EvalFn,
    domain: Option<DomainFn>,
    scale: Option<ScaleFn>,
}

impl FnField {
    pub fn new(dim: usize, eval: impl Fn(&CPoint) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            eval: Box::new(eval),
            domain: None,
            scale: None,
        }
    }

    pub fn with_domain(mut self, pred: impl Fn(&CPoint) -> bool + Send + Sync + 'static) -> Self {
        self.domain = Some(Box::new(pred));
        self
    }

    pub fn with_scale(mut self, scale: impl Fn(&CPoint, usize) -> f64 + Send + Sync + 'static) -> Self {
        self.scale = Some(Box::new(scale));
        self
    }
}

impl ScalarField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, p: &CPoint) -> f64 {
        (self.eval)(p)
    }

    fn in_domain(&self, p: &CPoint) -> bool {
        self.domain.as_ref().is_none_or(|d| d(p))
    }

    fn scale(&self, p: &CPoint, i: usize) -> f64 {
        self.scale.as_ref().map_or(1.0, |s| s(p, i))
    }
}

/// Finite-difference stencil settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StencilConfig {
    pub step: f64,
    pub order: u8,
    pub richardson: bool,
}

impl StencilConfig {
    pub fn new(step: f64, order: u8, richardson: bool) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Precondition(format!("stencil step must be > 0, got {step}")));
        }
        if !matches!(order, 2 | 4 | 6) {
            return Err(Error::Precondition(format!(
                "stencil order must be 2, 4 or 6, got {order}"
            )));
        }
        Ok(Self {
            step,
            order,
            richardson,
        })
    }

    /// Step that balances truncation against rounding for a second derivative
    /// of the configured accuracy (`eps^(1/(p+2))`, with `p` raised by two when
    /// Richardson extrapolation is on).
    pub fn balanced_step(order: u8, richardson: bool) -> f64 {
        let p = order as i32 + if richardson { 2 } else { 0 };
        f64::EPSILON.powf(1.0 / (p + 2) as f64)
    }

    /// Coarser, higher-order settings for nested (fourth-derivative)
    /// quantities such as Ricci forms and curvature, where rounding in the
    /// inner stencil dominates any truncation error.
    pub fn nested() -> Self {
        Self {
            step: 0.08,
            order: 6,
            richardson: true,
        }
    }

    /// Accuracy order after optional extrapolation.
    pub fn effective_order(&self) -> u8 {
        self.order + if self.richardson { 2 } else { 0 }
    }
}

impl Default for StencilConfig {
    fn default() -> Self {
        Self {
            step: Self::balanced_step(4, true),
            order: 4,
            richardson: true,
        }
    }
}

fn first_coeffs(order: u8) -> &'static [f64] {
    match order {
        2 => &[0.5],
        4 => &[2.0 / 3.0, -1.0 / 12.0],
        _ => &[0.75, -3.0 / 20.0, 1.0 / 60.0],
    }
}

fn second_coeffs(order: u8) -> (f64, &'static [f64]) {
    match order {
        2 => (-2.0, &[1.0]),
        4 => (-2.5, &[4.0 / 3.0, -1.0 / 12.0]),
        _ => (-49.0 / 18.0, &[1.5, -3.0 / 20.0, 1.0 / 90.0]),
    }
}

/// Vector-valued finite differences around a fixed base point.
pub(crate) struct Differ<'a, F> {
    f: F,
    base: &'a CPoint,
    steps: Vec<f64>,
    order: u8,
    richardson: bool,
}

impl<'a, F> Differ<'a, F>
where
    F: Fn(&CPoint) -> Result<Vec<f64>>,
{
    /// `steps` holds one step per complex coordinate.
    pub(crate) fn new(f: F, base: &'a CPoint, steps: Vec<f64>, cfg: &StencilConfig) -> Self {
        Self {
            f,
            base,
            steps,
            order: cfg.order,
            richardson: cfg.richardson,
        }
    }

    fn at(&self, moves: &[(usize, f64)]) -> Result<Vec<f64>> {
        (self.f)(&self.base.displaced(moves))
    }

    fn extrapolate(&self, coarse: Vec<f64>, fine: Vec<f64>) -> Vec<f64> {
        let w = 2f64.powi(self.order as i32);
        coarse.iter().zip(fine).map(|(c, f)| (w * f - c) / (w - 1.0)).collect()
    }

    fn first_at(&self, a: usize, h: f64) -> Result<Vec<f64>> {
        let mut acc: Option<Vec<f64>> = None;
        for (k, c) in first_coeffs(self.order).iter().enumerate() {
            let off = (k + 1) as f64 * h;
            let plus = self.at(&[(a, off)])?;
            let minus = self.at(&[(a, -off)])?;
            let acc = acc.get_or_insert_with(|| vec![0.0; plus.len()]);
            for ((s, p), m) in acc.iter_mut().zip(&plus).zip(&minus) {
                *s += c * (p - m);
            }
        }
        Ok(acc.unwrap_or_default().into_iter().map(|v| v / h).collect())
    }

    fn second_at(&self, a: usize, b: usize, ha: f64, hb: f64) -> Result<Vec<f64>> {
        if a == b {
            let (c0, cs) = second_coeffs(self.order);
            let center = self.at(&[])?;
            let mut acc: Vec<f64> = center.iter().map(|v| c0 * v).collect();
            for (k, c) in cs.iter().enumerate() {
                let off = (k + 1) as f64 * ha;
                let plus = self.at(&[(a, off)])?;
                let minus = self.at(&[(a, -off)])?;
                for ((s, p), m) in acc.iter_mut().zip(&plus).zip(&minus) {
                    *s += c * (p + m);
                }
            }
            return Ok(acc.into_iter().map(|v| v / (ha * ha)).collect());
        }
        let cs = first_coeffs(self.order);
        let mut acc: Option<Vec<f64>> = None;
        for (k, ck) in cs.iter().enumerate() {
            let da = (k + 1) as f64 * ha;
            for (l, cl) in cs.iter().enumerate() {
                let db = (l + 1) as f64 * hb;
                let pp = self.at(&[(a, da), (b, db)])?;
                let pm = self.at(&[(a, da), (b, -db)])?;
                let mp = self.at(&[(a, -da), (b, db)])?;
                let mm = self.at(&[(a, -da), (b, -db)])?;
                let w = ck * cl;
                let acc = acc.get_or_insert_with(|| vec![0.0; pp.len()]);
                for (i, s) in acc.iter_mut().enumerate() {
                    *s += w * ((pp[i] - pm[i]) - (mp[i] - mm[i]));
                }
            }
        }
        Ok(acc.unwrap_or_default().into_iter().map(|v| v / (ha * hb)).collect())
    }

    fn step_of(&self, a: usize) -> f64 {
        self.steps[a / 2]
    }

    /// First partial along real coordinate `a`.
    pub(crate) fn first(&self, a: usize) -> Result<Vec<f64>> {
        let h = self.step_of(a);
        let coarse = self.first_at(a, h)?;
        if !self.richardson {
            return Ok(coarse);
        }
        let fine = self.first_at(a, 0.5 * h)?;
        Ok(self.extrapolate(coarse, fine))
    }

    /// Second partial along real coordinates `a` then `b`.
    pub(crate) fn second(&self, a: usize, b: usize) -> Result<Vec<f64>> {
        let (ha, hb) = (self.step_of(a), self.step_of(b));
        let coarse = self.second_at(a, b, ha, hb)?;
        if !self.richardson {
            return Ok(coarse);
        }
        let fine = self.second_at(a, b, 0.5 * ha, 0.5 * hb)?;
        Ok(self.extrapolate(coarse, fine))
    }

    /// Complex `d_{z_i}` of each output component.
    pub(crate) fn dz(&self, i: usize) -> Result<Vec<Complex64>> {
        let dx = self.first(2 * i)?;
        let dy = self.first(2 * i + 1)?;
        Ok(dx
            .into_iter()
            .zip(dy)
            .map(|(x, y)| Complex64::new(0.5 * x, -0.5 * y))
            .collect())
    }

    /// `d_{z_i} d_{zbar_j}` of each (real) output component.
    pub(crate) fn dz_dzbar(&self, i: usize, j: usize) -> Result<Vec<Complex64>> {
        let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
        let hxx = self.second(xi, xj)?;
        let hyy = self.second(yi, yj)?;
        let hxy = self.second(xi, yj)?;
        let hyx = self.second(yi, xj)?;
        Ok((0..hxx.len())
            .map(|k| Complex64::new(0.25 * (hxx[k] + hyy[k]), 0.25 * (hxy[k] - hyx[k])))
            .collect())
    }
}

fn checked_eval(field: &dyn ScalarField, q: &CPoint) -> Result<f64> {
    if !field.in_domain(q) {
        return Err(Error::DomainViolation(format!(
            "stencil point {:?} outside field domain",
            q.coords()
        )));
    }
    let v = field.eval(q);
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("field value {v} at {:?}", q.coords())));
    }
    Ok(v)
}

fn check_dim(field: &dyn ScalarField, p: &CPoint) -> Result<()> {
    if field.dim() != p.dim() {
        return Err(Error::Precondition(format!(
            "field dimension {} but point dimension {}",
            field.dim(),
            p.dim()
        )));
    }
    Ok(())
}

fn stencil_steps(field: &dyn ScalarField, p: &CPoint, cfg: &StencilConfig) -> Result<Vec<f64>> {
    (0..p.dim())
        .map(|i| {
            let h = cfg.step * field.scale(p, i);
            if h > 0.0 && h.is_finite() {
                Ok(h)
            } else {
                Err(Error::NonFinite(format!("stencil step {h} along coordinate {i}")))
            }
        })
        .collect()
}

fn differ_for<'a>(
    field: &'a dyn ScalarField,
    p: &'a CPoint,
    cfg: &StencilConfig,
) -> Result<Differ<'a, impl Fn(&CPoint) -> Result<Vec<f64>> + 'a>> {
    check_dim(field, p)?;
    let steps = stencil_steps(field, p, cfg)?;
    Ok(Differ::new(
        move |q: &CPoint| checked_eval(field, q).map(|v| vec![v]),
        p,
        steps,
        cfg,
    ))
}

/// `d_{z_i} d_{zbar_j} field` at `p` (0-based indices).
pub fn mixed_derivative(
    field: &dyn ScalarField,
    p: &CPoint,
    i: usize,
    j: usize,
    cfg: &StencilConfig,
) -> Result<Complex64> {
    if i >= p.dim() || j >= p.dim() {
        return Err(Error::Precondition(format!(
            "index ({i}, {j}) out of range for dimension {}",
            p.dim()
        )));
    }
    Ok(differ_for(field, p, cfg)?.dz_dzbar(i, j)?[0])
}

/// Complex gradient `(d_{z_1} f, ..., d_{z_d} f)` at `p`.
pub fn holomorphic_gradient(field: &dyn ScalarField, p: &CPoint, cfg: &StencilConfig) -> Result<Vec<Complex64>> {
    let d = differ_for(field, p, cfg)?;
    (0..p.dim()).map(|i| d.dz(i).map(|v| v[0])).collect()
}

/// A `(1,1)`-form at a point, stored as its Hermitian coefficient matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianForm {
    entries: DMatrix<Complex64>,
    basepoint: CPoint,
    tol_herm: f64,
    asymmetry: f64,
}

impl HermitianForm {
    /// Accepts `entries` if Hermitian within `tol_herm`; the stored matrix is
    /// the Hermitian part.
    pub fn new(entries: DMatrix<Complex64>, basepoint: CPoint, tol_herm: f64) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Precondition("Hermitian form must be square".into()));
        }
        if entries.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("Hermitian form entries".into()));
        }
        let asymmetry = hermitian_defect(&entries);
        if asymmetry > tol_herm {
            return Err(Error::Precondition(format!(
                "matrix not Hermitian: defect {asymmetry:e} > {tol_herm:e}"
            )));
        }
        Ok(Self {
            entries: hermitian_part(&entries),
            basepoint,
            tol_herm,
            asymmetry,
        })
    }

    pub fn from_real_diagonal(diag: &[f64], basepoint: CPoint) -> Self {
        let d = DVector::from_iterator(diag.len(), diag.iter().map(|&v| Complex64::new(v, 0.0)));
        Self {
            entries: DMatrix::from_diagonal(&d),
            basepoint,
            tol_herm: 0.0,
            asymmetry: 0.0,
        }
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn basepoint(&self) -> &CPoint {
        &self.basepoint
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn tol_herm(&self) -> f64 {
        self.tol_herm
    }

    /// `max |A_ij - conj(A_ji)|` of the matrix before Hermitization.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[(i, j)]
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.entries.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn determinant(&self) -> f64 {
        self.entries.determinant().re
    }

    pub fn is_positive(&self) -> bool {
        min_eigenvalue(self) > 0.0
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: self.entries.map(|c| c * factor),
            ..self.clone()
        }
    }

    /// Entrywise `self - other`.
    pub fn sub(&self, other: &HermitianForm) -> Self {
        Self {
            entries: &self.entries - &other.entries,
            ..self.clone()
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `max_ij |A_ij - B_ij| / sqrt(A_ii A_jj)`, i.e. the entrywise error of
    /// `other` measured against the diagonal of `self`.
    pub fn relative_error(&self, other: &HermitianForm) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let scale = (self.entries[(i, i)].re.abs() * self.entries[(j, j)].re.abs()).sqrt();
                let diff = (self.entries[(i, j)] - other.entries[(i, j)]).norm();
                worst = worst.max(if scale > 0.0 { diff / scale } else { diff });
            }
        }
        worst
    }

    /// `L^{-1} A L^{-*}` for `self = L L^*`; its spectrum is that of `self^{-1} A`.
    pub fn normalize(&self, other: &HermitianForm) -> Result<DMatrix<Complex64>> {
        let chol = self.entries.clone().cholesky().ok_or_else(|| {
            Error::DegenerateMetric(format!("metric not positive definite at {:?}", self.basepoint.coords()))
        })?;
        let l = chol.l();
        let y = l
            .solve_lower_triangular(&other.entries)
            .ok_or_else(|| Error::DegenerateMetric("singular Cholesky factor".into()))?;
        let m = l
            .solve_lower_triangular(&y.adjoint())
            .ok_or_else(|| Error::DegenerateMetric("singular Cholesky factor".into()))?;
        Ok(hermitian_part(&m.adjoint()))
    }

    /// Operator norm of `self^{-1} A` in the metric `self`.
    pub fn norm_of(&self, other: &HermitianForm) -> Result<f64> {
        let m = self.normalize(other)?;
        Ok(m.symmetric_eigenvalues().iter().map(|v| v.abs()).fold(0.0, f64::max))
    }
}

fn hermitian_part(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()).map(|c| c * 0.5)
}

fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Smallest eigenvalue of the (Hermitized) form.
pub fn min_eigenvalue(form: &HermitianForm) -> f64 {
    form.eigenvalues()[0]
}

/// The metric tensor `g_{ij} = d_i d_jbar phi` at `p`; every entry is
/// differentiated separately so the reported asymmetry is a genuine
/// diagnostic of the stencil.
pub fn metric_from_potential(field: &dyn ScalarField, p: &CPoint, cfg: &StencilConfig) -> Result<HermitianForm> {
    let d = differ_for(field, p, cfg)?;
    let n = p.dim();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            g[(i, j)] = d.dz_dzbar(i, j)?[0];
        }
    }
    let asymmetry = hermitian_defect(&g);
    let scale = g.iter().map(|c| c.norm()).fold(0.0, f64::max);
    Ok(HermitianForm {
        entries: hermitian_part(&g),
        basepoint: p.clone(),
        tol_herm: truncation_estimate(cfg) * scale.max(1.0),
        asymmetry,
    })
}

/// Rough relative truncation level of a stencil, used to declare `tol_herm`.
pub fn truncation_estimate(cfg: &StencilConfig) -> f64 {
    cfg.step
        .powi(cfg.effective_order() as i32)
        .max(f64::EPSILON / (cfg.step * cfg.step))
}

/// Upper-triangle real Hessian, mirrored; used where only the Hermitian part
/// matters (nested differentiation).
fn symmetric_metric<F>(d: &Differ<'_, F>, n: usize) -> Result<DMatrix<Complex64>>
where
    F: Fn(&CPoint) -> Result<Vec<f64>>,
{
    let m = 2 * n;
    let mut h = DMatrix::<f64>::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let v = d.second(a, b)?[0];
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
            g[(i, j)] = Complex64::new(0.25 * (h[(xi, xj)] + h[(yi, yj)]), 0.25 * (h[(xi, yj)] - h[(yi, xj)]));
        }
    }
    Ok(g)
}

fn log_det_positive(g: &DMatrix<Complex64>, at: &CPoint) -> Result<f64> {
    let chol = g
        .clone()
        .cholesky()
        .ok_or_else(|| Error::DegenerateMetric(format!("metric not positive definite at {:?}", at.coords())))?;
    let l = chol.l();
    Ok(2.0 * (0..g.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>())
}

/// `log det g` of the potential's metric at `q`.
pub fn log_det_metric(field: &dyn ScalarField, q: &CPoint, cfg: &StencilConfig) -> Result<f64> {
    let d = differ_for(field, q, cfg)?;
    let g = symmetric_metric(&d, q.dim())?;
    log_det_positive(&g, q)
}

/// `Ric_{ij} = -d_i d_jbar log det g`, by a second stencil wrapped around the
/// metric stencil. The outer stencil uses the steps the field declares at `p`.
pub fn ricci_from_potential(field: &dyn ScalarField, p: &CPoint, cfg: &StencilConfig) -> Result<HermitianForm> {
    check_dim(field, p)?;
    let n = p.dim();
    let outer_steps = stencil_steps(field, p, cfg)?;
    let log_det = |q: &CPoint| -> Result<Vec<f64>> { Ok(vec![log_det_metric(field, q, cfg)?]) };
    let outer = Differ::new(log_det, p, outer_steps, cfg);
    let mut ric = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = -outer.dz_dzbar(i, j)?[0];
            ric[(i, j)] = v;
            ric[(j, i)] = v.conj();
        }
    }
    Ok(HermitianForm {
        entries: ric,
        basepoint: p.clone(),
        tol_herm: 0.0,
        asymmetry: 0.0,
    })
}

/// `|| g^{-1} (Ric - lambda g) ||`, the Einstein defect measured in `g`.
pub fn einstein_residual(field: &dyn ScalarField, p: &CPoint, lambda: f64, cfg: &StencilConfig) -> Result<f64> {
    let g = metric_from_potential(field, p, cfg)?;
    let ric = ricci_from_potential(field, p, cfg)?;
    g.norm_of(&ric.sub(&g.scaled(lambda)))
}

/// Metric, Ricci form and Einstein defect at one point.
#[derive(Clone, Debug)]
pub struct EinsteinSample {
    pub metric: HermitianForm,
    pub ricci: HermitianForm,
    pub residual: f64,
}

pub fn einstein_sample(
    field: &dyn ScalarField,
    p: &CPoint,
    lambda: f64,
    cfg: &StencilConfig,
) -> Result<EinsteinSample> {
    let metric = metric_from_potential(field, p, cfg)?;
    let ricci = ricci_from_potential(field, p, cfg)?;
    let residual = metric.norm_of(&ricci.sub(&metric.scaled(lambda)))?;
    Ok(EinsteinSample {
        metric,
        ricci,
        residual,
    })
}

/// Holomorphic sectional curvature `R(v, vbar, v, vbar) / |v|^4` of the
/// potential's metric along the coordinate direction `k`, with
/// `R_{ijkl} = -d_k d_lbar g_{ij} + g^{pq} d_k g_{iq} d_lbar g_{pj}`.
pub fn holomorphic_sectional_curvature(
    field: &dyn ScalarField,
    p: &CPoint,
    k: usize,
    cfg: &StencilConfig,
) -> Result<f64> {
    check_dim(field, p)?;
    let n = p.dim();
    if k >= n {
        return Err(Error::Precondition(format!("direction {k} out of range")));
    }
    let flat = |q: &CPoint| -> Result<Vec<f64>> {
        let d = differ_for(field, q, cfg)?;
        let g = symmetric_metric(&d, n)?;
        Ok(g.iter().flat_map(|c| [c.re, c.im]).collect())
    };
    let unflat = |v: &[Complex64]| -> DMatrix<Complex64> { DMatrix::from_iterator(n, n, v.iter().copied()) };
    let outer_steps = stencil_steps(field, p, cfg)?;
    let outer = Differ::new(flat, p, outer_steps, cfg);
    let center = {
        let d = differ_for(field, p, cfg)?;
        symmetric_metric(&d, n)?
    };
    // components arrive as (re, im) pairs in column-major order
    let pairs =
        |raw: Vec<Complex64>| -> Vec<Complex64> { raw.chunks(2).map(|c| c[0] + Complex64::i() * c[1]).collect() };
    let dk = unflat(&pairs(outer.dz(k)?));
    // d_k d_kbar of g_kk: g_kk is real, so only the real-part component matters
    let ddbar = outer.dz_dzbar(k, k)?;
    let idx = 2 * (k + k * n);
    let ddbar_gkk = ddbar[idx].re;
    let ginv = center
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateMetric("singular metric".into()))?;
    // g^{pq} is the transposed inverse; d_kbar g_{pk} = conj(d_k g_{kp})
    let mut quad = Complex64::new(0.0, 0.0);
    for pp in 0..n {
        for q in 0..n {
            let dk_g_kq = dk[(k, q)];
            let dkbar_g_pk = dk[(k, pp)].conj();
            quad += ginv[(q, pp)] * dk_g_kq * dkbar_g_pk;
        }
    }
    let r = -ddbar_gkk + quad.re;
    let gkk = center[(k, k)].re;
    Ok(r / (gkk * gkk))
}
