//! Quasi-coordinate charts near the cusp.
//!
//! Every point of the punctured neighbourhood `{log r < -2}` is brought into a
//! fixed reference region `T'` of the Heisenberg model by a deck translation,
//! a shift `iota` of `Re u~` by a multiple of `4 pi` and a dilation `tau_a`.
//! The chart map runs the composition backwards. Since the ball potential is
//! invariant under all three up to additive constants, the pulled-back metric
//! on `T'` is the same for every chart; [`chart_metric_report`] measures it.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::abelian::{lattice_embed, LatticeVector, PeriodData};
use crate::ball::{
    bundle_level, deck_apply, deck_inverse, exp_map, heisenberg_forward, heisenberg_inverse, principal_lift,
    quotient_potential, BundlePoint, DeckElement, HeisenbergPoint,
};
use crate::error::{Error, Result};
use crate::sampling;
use crate::wirtinger::{metric_from_potential, CPoint, FnField, HermitianForm, StencilConfig};

/// Level assigned to every normalized point.
pub const TARGET_LEVEL: f64 = 2.5;
/// Declared lower bound for the distance of a normalized point to `dT'`.
pub const EPSILON_1: f64 = 0.1;

/// A box in the coordinates `(Im u~ - |z~|^2, Re u~, z)`; the `z` slot is
/// `scale * F` with `F` the half-open unit parallelotope centred at 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slab {
    pub level: (f64, f64),
    pub re_u: (f64, f64),
    pub z_scale: f64,
}

/// Signed distances of a point to the three kinds of walls of a [`Slab`];
/// negative entries mean the point is outside.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Margins {
    pub level: f64,
    pub re_u: f64,
    pub z_slot: f64,
}

impl Margins {
    pub fn min(&self) -> f64 {
        self.level.min(self.re_u).min(self.z_slot)
    }
}

/// The regions `T' ⊂ T` for one set of period data.
#[derive(Clone, Debug)]
pub struct ReferenceDomains {
    pd: PeriodData,
}

impl ReferenceDomains {
    pub fn new(pd: &PeriodData) -> Self {
        Self { pd: pd.clone() }
    }

    pub fn period_data(&self) -> &PeriodData {
        &self.pd
    }

    /// `T'`: level in `(2, 3)`, `Re u~` in `(0, 4 pi)`, `z` in `2F`.
    pub fn inner() -> Slab {
        Slab {
            level: (2.0, 3.0),
            re_u: (0.0, 4.0 * PI),
            z_scale: 2.0,
        }
    }

    /// `T`: level in `(1, 4)`, `Re u~` in `(-2 pi, 6 pi)`, `z` in `3F`.
    pub fn outer() -> Slab {
        Slab {
            level: (1.0, 4.0),
            re_u: (-2.0 * PI, 6.0 * PI),
            z_scale: 3.0,
        }
    }

    pub fn margins(&self, slab: &Slab, y: &HeisenbergPoint) -> Margins {
        let r = y.z_t.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let level = y.level();
        let lo = paraboloid_distance(r, y.u_t.im, slab.level.0);
        let hi = paraboloid_distance(r, y.u_t.im, slab.level.1);
        let inside = level > slab.level.0 && level < slab.level.1;
        let level_margin = if inside { lo.min(hi) } else { -lo.min(hi) };
        let re_u = (y.u_t.re - slab.re_u.0).min(slab.re_u.1 - y.u_t.re);
        Margins {
            level: level_margin,
            re_u,
            z_slot: self.z_slot_margin(slab.z_scale, y),
        }
    }

    pub fn contains(&self, slab: &Slab, y: &HeisenbergPoint) -> bool {
        self.margins(slab, y).min() > 0.0
    }

    fn z_slot_margin(&self, scale: f64, y: &HeisenbergPoint) -> f64 {
        let z = heisenberg_inverse(&self.pd, y).z;
        let coeffs = self.pd.lattice_coords(&z);
        (0..coeffs.len())
            .map(|k| {
                let norm = self
                    .pd
                    .lattice_covector(k)
                    .iter()
                    .map(|c| c.norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                (0.5 * scale - coeffs[k].abs()) / norm
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Slack of `T'` inside `T` along each coordinate of the box.
    pub fn boundary_gap(&self) -> Margins {
        let (i, o) = (Self::inner(), Self::outer());
        let z_slot = (0..2 * self.pd.n())
            .map(|k| {
                let norm = self
                    .pd
                    .lattice_covector(k)
                    .iter()
                    .map(|c| c.norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                0.5 * (o.z_scale - i.z_scale) / norm
            })
            .fold(f64::INFINITY, f64::min);
        Margins {
            level: (i.level.0 - o.level.0).min(o.level.1 - i.level.1),
            re_u: (i.re_u.0 - o.re_u.0).min(o.re_u.1 - i.re_u.1),
            z_slot,
        }
    }

    /// A point of `T'` with level, `Re u~` and lattice coordinates of `z`
    /// drawn from `fraction` of the respective ranges around their centres.
    pub fn sample_inner<R: Rng>(&self, rng: &mut R, fraction: f64) -> HeisenbergPoint {
        let s = Self::inner();
        let centre = |(a, b): (f64, f64)| 0.5 * (a + b);
        let half = |(a, b): (f64, f64)| 0.5 * (b - a) * fraction;
        let mut unit = || 2.0 * rng.gen::<f64>() - 1.0;
        let level = centre(s.level) + half(s.level) * unit();
        let re_u = centre(s.re_u) + half(s.re_u) * unit();
        let zh = 0.5 * s.z_scale * fraction;
        let coeffs: Vec<f64> = (0..2 * self.pd.n()).map(|_| zh * unit()).collect();
        let z = self.pd.from_lattice_coords(&coeffs);
        model_point(&self.pd, &z, level, re_u)
    }
}

/// The Heisenberg point with original base coordinate `z`, the given level
/// and `Re u~`.
pub fn model_point(pd: &PeriodData, z: &[Complex64], level: f64, re_u: f64) -> HeisenbergPoint {
    let z_t = heisenberg_forward(
        pd,
        &crate::ball::UpstairsPoint::new(Complex64::new(0.0, 0.0), z.to_vec()),
    )
    .z_t;
    let r2: f64 = z_t.iter().map(|c| c.norm_sqr()).sum();
    HeisenbergPoint::new(Complex64::new(re_u, level + r2), z_t)
}

/// Distance in the `(|z~|, Im u~)` half-plane from `(r0, y0)` to the curve
/// `Im u~ = c + |z~|^2`; exact, via the cubic for the foot point.
fn paraboloid_distance(r0: f64, y0: f64, c: f64) -> f64 {
    // d/drho [(rho - r0)^2 + (c + rho^2 - y0)^2] = 0  <=>  rho^3 + p rho + q = 0
    let p = 0.5 + (c - y0);
    let q = -0.5 * r0;
    let dist = |rho: f64| (rho.abs() - r0).hypot(c + rho * rho - y0);
    depressed_cubic_roots(p, q)
        .into_iter()
        .map(dist)
        .fold(f64::INFINITY, f64::min)
}

fn depressed_cubic_roots(p: f64, q: f64) -> Vec<f64> {
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    if disc > 0.0 {
        let s = disc.sqrt();
        vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt()]
    } else if p == 0.0 {
        vec![0.0]
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        (0..3).map(|k| m * (theta - 2.0 * PI * k as f64 / 3.0).cos()).collect()
    }
}

/// `u~ -> u~ + 4 pi k`.
pub fn iota_shift(k: i64, y: &HeisenbergPoint) -> HeisenbergPoint {
    HeisenbergPoint::new(y.u_t + 4.0 * PI * k as f64, y.z_t.clone())
}

/// `(u~, z~) -> (u~ / a^2, z~ / a)`.
pub fn tau_scale(a: f64, y: &HeisenbergPoint) -> HeisenbergPoint {
    debug_assert!(a > 0.0);
    HeisenbergPoint::new(y.u_t / (a * a), y.z_t.iter().map(|c| c / a).collect())
}

/// `gamma` and `z0 = z - lambda_gamma` with the lattice coordinates of `z0` in
/// `[-1/2, 1/2)`.
pub fn lattice_reduce(pd: &PeriodData, z: &[Complex64]) -> (LatticeVector, Vec<Complex64>) {
    let coeffs = pd.lattice_coords(z);
    let gamma = LatticeVector::new(coeffs.iter().map(|c| (c + 0.5).floor() as i64).collect());
    let shift = lattice_embed(pd, &gamma);
    let z0 = z.iter().zip(&shift).map(|(a, b)| a - b).collect();
    (gamma, z0)
}

/// The deck element acting on `z` as translation by `lambda_gamma`.
pub fn translation(gamma: &LatticeVector) -> DeckElement {
    DeckElement::new(gamma.period_part().to_vec(), gamma.real_part().to_vec(), 0)
}

/// Measured properties of one chart.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartBounds {
    /// `max(lambda_max, 1 / lambda_min)` of the pulled-back metric.
    pub c: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// First and second coordinate-derivative bounds of `g_{i jbar}`.
    pub a1: f64,
    pub a2: f64,
    /// Margin of the chart's own normalized point to `dT'`.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuasiChart {
    pub m: i64,
    pub gamma: LatticeVector,
    pub a: f64,
    pub bounds: Option<ChartBounds>,
}

impl QuasiChart {
    pub fn identity(n: usize) -> Self {
        Self {
            m: 0,
            gamma: LatticeVector::zero(n),
            a: 1.0,
            bounds: None,
        }
    }
}

/// Brings `q` (with `log r < -2`) into `T'`: principal lift, deck translation
/// by `-lambda_gamma`, shift by `4 pi m`, dilation by `a`. Returns the chart
/// and the normalized point `Q`.
pub fn normalize_point(pd: &PeriodData, q: &BundlePoint) -> Result<(QuasiChart, HeisenbergPoint)> {
    let log_r = bundle_level(pd, q);
    if !(log_r < -2.0) {
        return Err(Error::Precondition(format!(
            "point must satisfy log r < -2, got {log_r}"
        )));
    }
    let x = principal_lift(q);
    let (gamma, _) = lattice_reduce(pd, &x.z);
    let x0 = deck_apply(pd, &deck_inverse(pd, &translation(&gamma)), &x);
    let y0 = heisenberg_forward(pd, &x0);
    let a2 = (-log_r / TARGET_LEVEL).max(1.0);
    // centre Re u~ of the dilated point in (0, 4 pi)
    let low = 2.0 * PI * (a2 - 1.0);
    let m = ((low - y0.u_t.re) / (4.0 * PI)).ceil() as i64;
    let a = a2.sqrt();
    let big_q = tau_scale(a, &iota_shift(m, &y0));
    if !big_q.u_t.re.is_finite() || !big_q.u_t.im.is_finite() {
        return Err(Error::NonFinite(format!("normalized point at log r = {log_r}")));
    }
    Ok((
        QuasiChart {
            m,
            gamma,
            a,
            bounds: None,
        },
        big_q,
    ))
}

/// The chart map without the `T'` check.
pub fn chart_map_unchecked(pd: &PeriodData, chart: &QuasiChart, y: &HeisenbergPoint) -> BundlePoint {
    let a = chart.a;
    let scaled = HeisenbergPoint::new(y.u_t * (a * a), y.z_t.iter().map(|c| c * a).collect());
    let x0 = heisenberg_inverse(pd, &iota_shift(-chart.m, &scaled));
    exp_map(&deck_apply(pd, &translation(&chart.gamma), &x0))
}

/// `exp o l^{-m} o gamma o tau_a^{-1}` on `T'`.
pub fn chart_map(pd: &PeriodData, chart: &QuasiChart, y: &HeisenbergPoint) -> Result<BundlePoint> {
    let dom = ReferenceDomains::new(pd);
    let margins = dom.margins(&ReferenceDomains::inner(), y);
    if margins.min() <= 0.0 {
        return Err(Error::DomainViolation(format!(
            "point outside T' (margins {margins:?})"
        )));
    }
    Ok(chart_map_unchecked(pd, chart, y))
}

fn wrap_log_w(d: Complex64) -> Complex64 {
    Complex64::new(d.re, (d.im + PI).rem_euclid(2.0 * PI) - PI)
}

fn coords_of(y: &HeisenbergPoint) -> Vec<Complex64> {
    let mut c = y.z_t.clone();
    c.push(y.u_t);
    c
}

fn point_of(c: &[Complex64]) -> HeisenbergPoint {
    let n = c.len() - 1;
    HeisenbergPoint::new(c[n], c[..n].to_vec())
}

/// Complex Jacobian of `(z~, u~) -> (z, log w)` by fourth-order central
/// differences with step `h` (`h / a^2` along `u~`).
pub fn chart_jacobian(pd: &PeriodData, chart: &QuasiChart, y: &HeisenbergPoint, h: f64) -> DMatrix<Complex64> {
    let base = coords_of(y);
    let d = base.len();
    let image = |shift: &[Complex64]| chart_map_unchecked(pd, chart, &point_of(shift)).log_chart_coords();
    let f0 = image(&base);
    let mut jac = DMatrix::zeros(d, d);
    for k in 0..d {
        // keep the change of arg w well below pi
        let h = if k == d - 1 { h / (chart.a * chart.a) } else { h };
        let at = |t: f64| {
            let mut c = base.clone();
            c[k] += t;
            let img = image(&c);
            img.iter()
                .zip(&f0)
                .enumerate()
                .map(|(j, (a, b))| if j == d - 1 { wrap_log_w(a - b) } else { a - b })
                .collect::<Vec<_>>()
        };
        let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
        for j in 0..d {
            jac[(j, k)] = (8.0 * (p1[j] - m1[j]) - (p2[j] - m2[j])) / (12.0 * h);
        }
    }
    jac
}

pub fn jacobian_determinant(pd: &PeriodData, chart: &QuasiChart, y: &HeisenbergPoint, h: f64) -> Complex64 {
    chart_jacobian(pd, chart, y, h).determinant()
}

/// Exact Jacobian determinant of the chart map, constant on the chart:
/// `(a^n / (pi^{n/2} det U)) * (i a^2 / 2)`.
pub fn jacobian_determinant_exact(pd: &PeriodData, chart: &QuasiChart) -> Complex64 {
    let n = pd.n() as i32;
    let det_u: f64 = (0..pd.n()).map(|r| pd.w_factor()[(r, r)]).product();
    let a = chart.a;
    Complex64::new(0.0, 0.5 * a * a) * (a.powi(n) / (PI.powf(0.5 * n as f64) * det_u))
}

/// Smallest image distance over all pairs of `samples` points of `T'`,
/// divided by the corresponding source distance.
pub fn injectivity_ratio(pd: &PeriodData, chart: &QuasiChart, samples: usize, seed: u64) -> f64 {
    let dom = ReferenceDomains::new(pd);
    let mut rng = sampling::rng(seed);
    let pts: Vec<HeisenbergPoint> = (0..samples).map(|_| dom.sample_inner(&mut rng, 0.98)).collect();
    let imgs: Vec<BundlePoint> = pts.iter().map(|y| chart_map_unchecked(pd, chart, y)).collect();
    let mut worst = f64::INFINITY;
    for i in 0..samples {
        for j in i + 1..samples {
            let src = coords_of(&pts[i])
                .iter()
                .zip(coords_of(&pts[j]))
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            worst = worst.min(imgs[i].distance(&imgs[j]) / src);
        }
    }
    worst
}

/// `phi_Q` pulled back to `(z~_1, .., z~_n, u~)` through the chart.
pub fn pulled_back_field(pd: &PeriodData, chart: &QuasiChart) -> FnField {
    let pd = pd.clone();
    let chart = chart.clone();
    let n = pd.n();
    let level = |p: &CPoint| point_of(p.coords()).level();
    FnField::new(n + 1, move |p| {
        let b = chart_map_unchecked(&pd, &chart, &point_of(p.coords()));
        quotient_potential(&pd, &b, n).unwrap_or(f64::NAN)
    })
    .with_domain(move |p| level(p) > 0.0)
    .with_scale(move |p, _| level(p).sqrt().min(1.0))
}

/// Pulled-back metric at `y`.
pub fn chart_metric(
    pd: &PeriodData,
    chart: &QuasiChart,
    y: &HeisenbergPoint,
    cfg: &StencilConfig,
) -> Result<HermitianForm> {
    let field = pulled_back_field(pd, chart);
    metric_from_potential(&field, &CPoint::new(coords_of(y))?, cfg)
}

/// Eigenvalue range and derivative bounds of the metric of `field` over
/// `points`; derivatives by central differences of step `h` along the real
/// coordinate directions.
pub fn derivative_bounds(
    field: &FnField,
    points: &[CPoint],
    h: f64,
    cfg: &StencilConfig,
) -> Result<(f64, f64, f64, f64)> {
    let (mut lmin, mut lmax, mut a1, mut a2) = (f64::INFINITY, 0.0f64, 0.0f64, 0.0f64);
    for p in points {
        let g0 = metric_from_potential(field, p, cfg)?;
        let ev = g0.eigenvalues();
        lmin = lmin.min(ev.iter().copied().fold(f64::INFINITY, f64::min));
        lmax = lmax.max(ev.iter().copied().fold(0.0, f64::max));
        for k in 0..p.dim() {
            for dir in [Complex64::new(h, 0.0), Complex64::new(0.0, h)] {
                let shifted = |t: f64| {
                    let mut c = p.coords().to_vec();
                    c[k] += dir * t;
                    CPoint::new(c).and_then(|q| metric_from_potential(field, &q, cfg))
                };
                let (gp, gm) = (shifted(1.0)?, shifted(-1.0)?);
                let e0 = g0.entries();
                let (ep, em) = (gp.entries(), gm.entries());
                for idx in 0..e0.len() {
                    a1 = a1.max(((ep[idx] - em[idx]) / (2.0 * h)).norm());
                    a2 = a2.max(((ep[idx] - 2.0 * e0[idx] + em[idx]) / (h * h)).norm());
                }
            }
        }
    }
    Ok((lmin, lmax, a1, a2))
}

/// Measures the pulled-back metric of `chart` at `samples` interior points of
/// `T'` drawn from stream `stream` of `seed`.
pub fn chart_metric_report(
    pd: &PeriodData,
    chart: &QuasiChart,
    normalized: &HeisenbergPoint,
    samples: usize,
    seed: u64,
    stream: u64,
    cfg: &StencilConfig,
) -> Result<ChartBounds> {
    let dom = ReferenceDomains::new(pd);
    let mut rng = sampling::stream_rng(seed, stream);
    let points = (0..samples)
        .map(|_| CPoint::new(coords_of(&dom.sample_inner(&mut rng, 0.6))))
        .collect::<Result<Vec<_>>>()?;
    let field = pulled_back_field(pd, chart);
    let (lmin, lmax, a1, a2) = derivative_bounds(&field, &points, 0.05, cfg)?;
    if !(lmin > 0.0) {
        return Err(Error::DegenerateMetric(format!(
            "pulled-back metric has eigenvalue {lmin}"
        )));
    }
    Ok(ChartBounds {
        c: lmax.max(1.0 / lmin),
        lambda_min: lmin,
        lambda_max: lmax,
        a1,
        a2,
        margin: dom.margins(&ReferenceDomains::inner(), normalized).min(),
    })
}

/// [`chart_metric_report`] for many charts in parallel. Every chart is
/// measured on the same normalized sample set, so the spread of `c` across
/// charts reflects the charts rather than the sampling.
pub fn chart_reports(
    pd: &PeriodData,
    charts: &[(QuasiChart, HeisenbergPoint)],
    samples: usize,
    seed: u64,
    cfg: &StencilConfig,
) -> Result<Vec<ChartBounds>> {
    charts
        .par_iter()
        .map(|(chart, q)| chart_metric_report(pd, chart, q, samples, seed, 0, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abelian::reference_period_data;
    use crate::ball::{ball_field, point_at_level};
    use crate::sampling::{log_uniform_level, random_bundle_point, rng, uniform_level};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn iota_examples() {
        let y = HeisenbergPoint::new(c(1.0, 3.0), vec![c(0.2, -0.1)]);
        assert_eq!(iota_shift(0, &y), y);
        let back = iota_shift(-1, &iota_shift(1, &y));
        assert!((back.u_t - y.u_t).norm() < 1e-15);
        assert_eq!(iota_shift(3, &y).level(), y.level());
    }

    #[test]
    fn tau_examples() {
        let y = HeisenbergPoint::new(c(0.0, 4.0), vec![c(0.0, 0.0)]);
        assert_eq!(tau_scale(1.0, &y), y);
        assert_eq!(tau_scale(2.0, &y), HeisenbergPoint::new(c(0.0, 1.0), vec![c(0.0, 0.0)]));
        let mut r = rng(11);
        for _ in 0..50 {
            let y = HeisenbergPoint::new(
                sampling::complex_in_box(&mut r, 3.0),
                vec![
                    sampling::complex_in_box(&mut r, 1.0),
                    sampling::complex_in_box(&mut r, 1.0),
                ],
            );
            let a: f64 = r.gen_range(0.5..20.0);
            assert!((tau_scale(a, &y).level() - y.level() / (a * a)).abs() < 1e-13 * (1.0 + y.level().abs()));
        }
    }

    #[test]
    fn lattice_reduce_examples() {
        for pd in reference_period_data() {
            let n = pd.n();
            let (g, z0) = lattice_reduce(&pd, &vec![c(0.1, -0.05); n]);
            assert_eq!(g, LatticeVector::zero(n));
            assert!((z0[0] - c(0.1, -0.05)).norm() < 1e-15);

            let lambda1 = lattice_embed(&pd, &LatticeVector::unit(n, 0));
            let (g, z0) = lattice_reduce(&pd, &lambda1);
            assert_eq!(g, LatticeVector::unit(n, 0));
            assert!(z0.iter().all(|v| v.norm() < 1e-14));

            let mut r = rng(12);
            for _ in 0..50 {
                let z = sampling::random_base_point(&mut r, &pd, 6.0);
                let (g, z0) = lattice_reduce(&pd, &z);
                let coeffs = pd.lattice_coords(&z0);
                assert!(coeffs.iter().all(|c| (-0.5 - 1e-12..0.5 + 1e-12).contains(c)));
                let back: Vec<_> = z0.iter().zip(lattice_embed(&pd, &g)).map(|(a, b)| a + b).collect();
                for (a, b) in back.iter().zip(&z) {
                    assert!((a - b).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn inner_domain_sits_inside_outer() {
        for pd in reference_period_data() {
            let dom = ReferenceDomains::new(&pd);
            let gap = dom.boundary_gap();
            assert!(gap.min() > 0.0);
            let mut r = rng(13);
            for _ in 0..200 {
                let y = dom.sample_inner(&mut r, 0.999);
                assert!(dom.contains(&ReferenceDomains::inner(), &y));
                assert!(dom.margins(&ReferenceDomains::outer(), &y).min() > 0.05);
            }
        }
    }

    #[test]
    fn paraboloid_distance_matches_brute_force() {
        for (r0, y0, cc) in [(0.0, 2.5, 2.0), (1.0, 3.5, 2.0), (2.0, 6.5, 3.0), (0.3, 1.0, 2.0)] {
            let brute = (0..200_001)
                .map(|k| {
                    let rho = -5.0 + 1e-4 * k as f64;
                    (rho.abs() - r0).hypot(cc + rho * rho - y0)
                })
                .fold(f64::INFINITY, f64::min);
            assert!((paraboloid_distance(r0, y0, cc) - brute).abs() < 1e-7, "{r0} {y0} {cc}");
        }
    }

    #[test]
    fn fixed_point_of_normalization() {
        let pd = PeriodData::square_torus();
        let q0 = model_point(&pd, &[c(0.05, 0.02)], TARGET_LEVEL, 1.0);
        let q = exp_map(&heisenberg_inverse(&pd, &q0));
        let (chart, big_q) = normalize_point(&pd, &q).unwrap();
        assert_eq!(chart.m, 0);
        assert_eq!(chart.gamma, LatticeVector::zero(1));
        assert!((chart.a - 1.0).abs() < 1e-12);
        assert!((big_q.u_t - q0.u_t).norm() < 1e-10);
        assert!(chart_map(&pd, &chart, &big_q).unwrap().distance(&q) < 1e-10);
    }

    #[test]
    fn normalization_round_trip_and_margins() {
        for pd in reference_period_data() {
            let dom = ReferenceDomains::new(&pd);
            let mut r = rng(14);
            for _ in 0..100 {
                let level = uniform_level(&mut r, -50.0, -3.0);
                let q = random_bundle_point(&mut r, &pd, level, 3.0);
                let (chart, big_q) = normalize_point(&pd, &q).unwrap();
                assert!(chart.a >= 1.0);
                assert!((big_q.level() - TARGET_LEVEL).abs() < 1e-9);
                let m = dom.margins(&ReferenceDomains::inner(), &big_q);
                assert!(m.min() >= EPSILON_1, "{m:?}");
                let back = chart_map(&pd, &chart, &big_q).unwrap();
                assert!(back.distance(&q) < 1e-9, "{}", back.distance(&q));
            }
        }
    }

    #[test]
    fn shallow_points_normalize_with_unit_dilation() {
        let pd = PeriodData::square_torus();
        let mut r = rng(15);
        for _ in 0..50 {
            let level = uniform_level(&mut r, -2.5, -2.0);
            let q = random_bundle_point(&mut r, &pd, level, 3.0);
            let (chart, big_q) = normalize_point(&pd, &q).unwrap();
            assert_eq!(chart.a, 1.0);
            assert!((big_q.level() + level).abs() < 1e-12);
            assert!(chart_map(&pd, &chart, &big_q).unwrap().distance(&q) < 1e-10);
        }
    }

    #[test]
    fn deep_point_normalizes() {
        let pd = PeriodData::square_torus();
        let q = point_at_level(&pd, &[c(0.3, 0.7)], -1e6, 0.4);
        let (chart, big_q) = normalize_point(&pd, &q).unwrap();
        assert!((chart.a - (1e6f64 / 2.5).sqrt()).abs() < 1e-9 * chart.a);
        assert!(
            ReferenceDomains::new(&pd)
                .margins(&ReferenceDomains::inner(), &big_q)
                .min()
                >= EPSILON_1
        );
        assert!(chart_map(&pd, &chart, &big_q).unwrap().distance(&q) < 1e-9);
    }

    #[test]
    fn precondition_and_domain_errors() {
        let pd = PeriodData::square_torus();
        let q = point_at_level(&pd, &[c(0.0, 0.0)], -1.0, 0.0);
        assert!(matches!(normalize_point(&pd, &q), Err(Error::Precondition(_))));
        let outside = model_point(&pd, &[c(0.0, 0.0)], 3.5, 1.0);
        assert!(matches!(
            chart_map(&pd, &QuasiChart::identity(1), &outside),
            Err(Error::DomainViolation(_))
        ));
    }

    #[test]
    fn jacobian_matches_closed_form() {
        for pd in reference_period_data() {
            let dom = ReferenceDomains::new(&pd);
            let mut r = rng(16);
            for _ in 0..20 {
                let level = log_uniform_level(&mut r, -1e4, -3.0);
                let q = random_bundle_point(&mut r, &pd, level, 2.0);
                let (chart, _) = normalize_point(&pd, &q).unwrap();
                let centre = dom.sample_inner(&mut r, 0.0);
                let det = jacobian_determinant(&pd, &chart, &centre, 1e-3);
                let exact = jacobian_determinant_exact(&pd, &chart);
                assert!(det.norm() > 0.0);
                assert!((det - exact).norm() < 1e-8 * exact.norm(), "{det} {exact}");
            }
        }
    }

    #[test]
    fn sampled_injectivity() {
        let pd = reference_period_data().remove(1);
        let q = point_at_level(&pd, &[c(0.2, 0.1)], -40.0, 1.0);
        let (chart, _) = normalize_point(&pd, &q).unwrap();
        assert!(injectivity_ratio(&pd, &chart, 40, 17) > 1e-6);
        // Re u~ near both walls of the window
        let y1 = model_point(&pd, &[c(0.0, 0.0)], 2.5, 0.01);
        let y2 = model_point(&pd, &[c(0.0, 0.0)], 2.5, 4.0 * PI - 0.01);
        let d = chart_map(&pd, &chart, &y1)
            .unwrap()
            .distance(&chart_map(&pd, &chart, &y2).unwrap());
        assert!(d > 1e-4);
    }

    #[test]
    fn model_derivative_bounds() {
        let pd = PeriodData::square_torus();
        let dom = ReferenceDomains::new(&pd);
        let mut r = rng(18);
        let pts: Vec<CPoint> = (0..10)
            .map(|_| CPoint::new(coords_of(&dom.sample_inner(&mut r, 0.9))).unwrap())
            .collect();
        let (_, _, a1, _) = derivative_bounds(&ball_field(1), &pts, 0.05, &StencilConfig::nested()).unwrap();
        assert!(a1 < 50.0, "{a1}");
    }

    #[test]
    fn chart_bounds_are_uniform() {
        let pd = PeriodData::square_torus();
        let mut r = rng(19);
        let charts: Vec<_> = (0..50)
            .map(|_| {
                let level = log_uniform_level(&mut r, -1e6, -3.0);
                normalize_point(&pd, &random_bundle_point(&mut r, &pd, level, 3.0)).unwrap()
            })
            .collect();
        let reports = chart_reports(&pd, &charts, 4, 20, &StencilConfig::nested()).unwrap();
        let cs: Vec<f64> = reports.iter().map(|b| b.c).collect();
        let (lo, hi) = cs
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
        assert!(lo.is_finite() && hi / lo <= 2.0, "{lo} {hi}");
        let again = chart_reports(&pd, &charts, 4, 20, &StencilConfig::nested()).unwrap();
        assert_eq!(reports, again);
    }
}
