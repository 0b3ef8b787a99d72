//! The abelian variety `A = C^n / Gamma`, its negative line bundle given by
//! transition factors, and the explicit bundle metric `h`.
//!
//! The lattice basis is `lambda_alpha = delta_alpha e_alpha` and
//! `lambda_{n+alpha} = Z e_alpha`, i.e. the period matrix is `(diag(delta), Z)`.
//! With `Z = X - iY` the relevant Hermitian data is `W = Y^{-1}`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::wirtinger::{self, CPoint, FnField, StencilConfig};

const SYMMETRY_TOL: f64 = 1e-12;

/// Polarized period data. Derived matrices are cached at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodData {
    n: usize,
    delta: Vec<i64>,
    z: DMatrix<Complex64>,
    t: Vec<Complex64>,
    y: DMatrix<f64>,
    w: DMatrix<f64>,
    /// Upper-triangular `U` with `U^T U = W`.
    w_factor: DMatrix<f64>,
    /// Real `2n x 2n` matrix sending lattice coordinates to `(x_1, y_1, ...)`.
    lattice_frame: DMatrix<f64>,
    lattice_frame_inv: DMatrix<f64>,
}

impl PeriodData {
    /// Validated construction: `Z` symmetric, `Im Z` negative definite,
    /// `delta_alpha >= 1`.
    pub fn new(delta: Vec<i64>, z: DMatrix<Complex64>, t: Vec<Complex64>) -> Result<Self> {
        let pd = Self::new_unchecked(delta, z, t)?;
        validate_period_data(&pd)?;
        Ok(pd)
    }

    /// Construction without the Riemann relations; used to study what breaks
    /// when they fail. Shapes and invertibility are still required.
    pub fn new_unchecked(delta: Vec<i64>, z: DMatrix<Complex64>, t: Vec<Complex64>) -> Result<Self> {
        let n = delta.len();
        if n == 0 {
            return Err(Error::InvalidPeriodData("dimension n must be >= 1".into()));
        }
        if z.nrows() != n || z.ncols() != n || t.len() != n {
            return Err(Error::InvalidPeriodData(format!(
                "shape mismatch: delta has {n} entries, Z is {}x{}, t has {}",
                z.nrows(),
                z.ncols(),
                t.len()
            )));
        }
        if let Some(d) = delta.iter().find(|&&d| d < 1) {
            return Err(Error::InvalidPeriodData(format!("delta entries must be >= 1, got {d}")));
        }
        if z.iter().chain(t.iter()).any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidPeriodData("non-finite entry in Z or t".into()));
        }
        let y = z.map(|c| -c.im);
        // Symmetrize before factoring so an asymmetric Z still yields a frame.
        let y_sym = (&y + y.transpose()) * 0.5;
        let w = y_sym
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidPeriodData("Y = -Im Z is singular".into()))?;
        let w_factor = w
            .clone()
            .cholesky()
            .map(|c| c.l().transpose())
            .unwrap_or_else(|| DMatrix::identity(n, n));

        let mut frame = DMatrix::zeros(2 * n, 2 * n);
        for a in 0..n {
            frame[(2 * a, a)] = delta[a] as f64;
            for r in 0..n {
                frame[(2 * r, n + a)] = z[(r, a)].re;
                frame[(2 * r + 1, n + a)] = z[(r, a)].im;
            }
        }
        let frame_inv = frame
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidPeriodData("lattice vectors not independent".into()))?;

        Ok(Self {
            n,
            delta,
            z,
            t,
            y,
            w,
            w_factor,
            lattice_frame: frame,
            lattice_frame_inv: frame_inv,
        })
    }

    /// `n = 1`, `delta = (1)`, `Z = -i`, `t = 0`.
    pub fn square_torus() -> Self {
        Self::new(
            vec![1],
            DMatrix::from_element(1, 1, Complex64::new(0.0, -1.0)),
            vec![Complex64::new(0.0, 0.0)],
        )
        .expect("square torus is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> &[i64] {
        &self.delta
    }

    pub fn z_matrix(&self) -> &DMatrix<Complex64> {
        &self.z
    }

    pub fn t(&self) -> &[Complex64] {
        &self.t
    }

    /// `Y = -Im Z`.
    pub fn y_matrix(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// `W = Y^{-1}`.
    pub fn w_matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// Upper-triangular `U` with `U^T U = W`.
    pub fn w_factor(&self) -> &DMatrix<f64> {
        &self.w_factor
    }

    /// Shift vector `c_alpha = i Y_{alpha alpha} - t_alpha + conj(t_alpha)`.
    pub fn shift(&self) -> Vec<Complex64> {
        (0..self.n)
            .map(|a| Complex64::new(0.0, self.y[(a, a)]) - self.t[a] + self.t[a].conj())
            .collect()
    }

    /// Lattice coordinates of `z` (real, `2n` entries).
    pub fn lattice_coords(&self, z: &[Complex64]) -> Vec<f64> {
        let v = DVector::from_iterator(2 * self.n, z.iter().flat_map(|c| [c.re, c.im]));
        (&self.lattice_frame_inv * v).iter().copied().collect()
    }

    /// The point with real lattice coordinates `coeffs`.
    pub fn from_lattice_coords(&self, coeffs: &[f64]) -> Vec<Complex64> {
        let v = DVector::from_column_slice(coeffs);
        let x = &self.lattice_frame * v;
        (0..self.n).map(|r| Complex64::new(x[2 * r], x[2 * r + 1])).collect()
    }

    /// `kappa` with `Re(sum_r kappa_r z_r)` equal to the `k`-th real lattice
    /// coordinate of `z`.
    pub fn lattice_covector(&self, k: usize) -> Vec<Complex64> {
        (0..self.n)
            .map(|r| {
                Complex64::new(
                    self.lattice_frame_inv[(k, 2 * r)],
                    -self.lattice_frame_inv[(k, 2 * r + 1)],
                )
            })
            .collect()
    }

    /// Real `2n x 2n` matrix from lattice coordinates to real coordinates of `z`.
    pub fn lattice_frame(&self) -> &DMatrix<f64> {
        &self.lattice_frame
    }
}

/// A small fixed family of valid period data: the square torus, a skewed
/// elliptic curve and two abelian surfaces (one with non-trivial
/// polarization type).
pub fn reference_period_data() -> Vec<PeriodData> {
    let c = Complex64::new;
    vec![
        PeriodData::square_torus(),
        PeriodData::new(vec![1], DMatrix::from_element(1, 1, c(0.3, -1.7)), vec![c(0.25, -0.1)]).expect("valid"),
        PeriodData::new(
            vec![1, 1],
            DMatrix::from_row_slice(2, 2, &[c(0.0, -1.5), c(0.2, 0.3), c(0.2, 0.3), c(0.1, -1.0)]),
            vec![c(0.0, 0.0), c(0.0, 0.0)],
        )
        .expect("valid"),
        PeriodData::new(
            vec![1, 2],
            DMatrix::from_row_slice(2, 2, &[c(0.0, -2.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, -3.0)]),
            vec![c(0.1, 0.2), c(-0.3, 0.05)],
        )
        .expect("valid"),
    ]
}

/// Integer coefficients over `lambda_1, ..., lambda_{2n}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LatticeVector {
    pub coeffs: Vec<i64>,
}

impl LatticeVector {
    pub fn new(coeffs: Vec<i64>) -> Self {
        Self { coeffs }
    }

    pub fn zero(n: usize) -> Self {
        Self { coeffs: vec![0; 2 * n] }
    }

    /// The `k`-th basis vector `lambda_{k+1}` (0-based `k`).
    pub fn unit(n: usize, k: usize) -> Self {
        let mut coeffs = vec![0; 2 * n];
        coeffs[k] = 1;
        Self { coeffs }
    }

    pub fn n(&self) -> usize {
        self.coeffs.len() / 2
    }

    /// Coefficients of `lambda_1 .. lambda_n`.
    pub fn real_part(&self) -> &[i64] {
        &self.coeffs[..self.n()]
    }

    /// Coefficients of `lambda_{n+1} .. lambda_{2n}`.
    pub fn period_part(&self) -> &[i64] {
        &self.coeffs[self.n()..]
    }

    pub fn add(&self, other: &LatticeVector) -> Self {
        Self {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn neg(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|a| -a).collect(),
        }
    }
}

/// Outcome of the Riemann-relation checks.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    /// `max |Omega Q^{-1} Omega^T|`.
    pub relation_residual: f64,
    /// Eigenvalues of `-i Omega Q^{-1} conj(Omega)^T`, ascending.
    pub form_eigenvalues: Vec<f64>,
}

impl ValidationReport {
    pub fn max_eigenvalue(&self) -> f64 {
        *self.form_eigenvalues.last().unwrap_or(&f64::NAN)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.form_eigenvalues.first().unwrap_or(&f64::NAN)
    }
}

fn period_matrix(pd: &PeriodData) -> DMatrix<Complex64> {
    let n = pd.n;
    let mut omega = DMatrix::zeros(n, 2 * n);
    for a in 0..n {
        omega[(a, a)] = Complex64::new(pd.delta[a] as f64, 0.0);
        for b in 0..n {
            omega[(a, n + b)] = pd.z[(a, b)];
        }
    }
    omega
}

/// `Q^{-1}` for `Q = [[0, D], [-D, 0]]`.
fn polarization_inverse(pd: &PeriodData) -> DMatrix<Complex64> {
    let n = pd.n;
    let mut q = DMatrix::zeros(2 * n, 2 * n);
    for a in 0..n {
        let inv = 1.0 / pd.delta[a] as f64;
        q[(a, n + a)] = Complex64::new(-inv, 0.0);
        q[(n + a, a)] = Complex64::new(inv, 0.0);
    }
    q
}

/// Checks `Omega Q^{-1} Omega^T = 0` and that `-i Omega Q^{-1} conj(Omega)^T`
/// (which equals `2 Im Z`) is negative definite.
pub fn validate_period_data(pd: &PeriodData) -> Result<ValidationReport> {
    let omega = period_matrix(pd);
    let qinv = polarization_inverse(pd);
    let rel = &omega * &qinv * omega.transpose();
    let relation_residual = rel.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let scale = pd.z.iter().map(|c| c.norm()).fold(1.0, f64::max);
    if relation_residual > SYMMETRY_TOL * scale {
        return Err(Error::InvalidPeriodData(format!(
            "first Riemann relation Omega Q^-1 Omega^T = 0 fails (Z not symmetric): residual {relation_residual:e}"
        )));
    }
    let form = (&omega * &qinv * omega.adjoint()).map(|c| c * Complex64::new(0.0, -1.0));
    let form = (&form + form.adjoint()).map(|c| c * 0.5);
    let mut ev: Vec<f64> = form.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    let report = ValidationReport {
        relation_residual,
        form_eigenvalues: ev,
    };
    if !(report.max_eigenvalue() < 0.0) {
        return Err(Error::InvalidPeriodData(format!(
            "second Riemann relation fails: 2 Im Z not negative definite (max eigenvalue {})",
            report.max_eigenvalue()
        )));
    }
    Ok(report)
}

/// `sum_k coeffs_k lambda_k` as a point of `C^n`.
pub fn lattice_embed(pd: &PeriodData, v: &LatticeVector) -> Vec<Complex64> {
    let n = pd.n;
    (0..n)
        .map(|r| {
            let real = Complex64::new((v.coeffs[r] * pd.delta[r]) as f64, 0.0);
            (0..n).fold(real, |acc, a| acc + pd.z[(r, a)] * v.coeffs[n + a] as f64)
        })
        .collect()
}

/// `log e_v(z)` for the generators applied in `order` (indices into the
/// `lambda_{n+alpha}` block); the `lambda_alpha` block contributes nothing.
fn transition_exponent_ordered(pd: &PeriodData, v: &LatticeVector, z: &[Complex64], order: &[usize]) -> Complex64 {
    let mut cur = z.to_vec();
    let mut expo = Complex64::new(0.0, 0.0);
    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    for &alpha in order {
        let b = v.coeffs[pd.n + alpha];
        if b == 0 {
            continue;
        }
        let bf = b as f64;
        // b consecutive steps by Z e_alpha starting from cur
        let tri = (b * (b - 1) / 2) as f64;
        expo -= two_pi_i * (bf * (cur[alpha] - pd.t[alpha]) + pd.z[(alpha, alpha)] * tri);
        for (r, c) in cur.iter_mut().enumerate() {
            *c += pd.z[(r, alpha)] * bf;
        }
    }
    expo
}

/// `log e_v(z)` in the canonical factorization (period generators ascending).
pub fn transition_exponent(pd: &PeriodData, v: &LatticeVector, z: &[Complex64]) -> Complex64 {
    let order: Vec<usize> = (0..pd.n).collect();
    transition_exponent_ordered(pd, v, z, &order)
}

/// The transition factor `e_v(z)`.
pub fn transition_factor(pd: &PeriodData, v: &LatticeVector, z: &[Complex64]) -> Complex64 {
    transition_exponent(pd, v, z).exp()
}

/// `e_v(z)` with the period generators applied in an explicit order.
pub fn transition_factor_ordered(pd: &PeriodData, v: &LatticeVector, z: &[Complex64], order: &[usize]) -> Complex64 {
    transition_exponent_ordered(pd, v, z, order).exp()
}

/// `log h(z) = -(pi/2) sum W_ab A_a A_b` with
/// `A_a = z_a - conj(z_a) + i Y_aa - t_a + conj(t_a)`.
pub fn log_h(pd: &PeriodData, z: &[Complex64]) -> f64 {
    let c = pd.shift();
    let a: Vec<Complex64> = (0..pd.n).map(|i| z[i] - z[i].conj() + c[i]).collect();
    let mut q = Complex64::new(0.0, 0.0);
    for i in 0..pd.n {
        for j in 0..pd.n {
            q += a[i] * a[j] * pd.w[(i, j)];
        }
    }
    -0.5 * PI * q.re
}

/// The bundle metric `h(z)`.
pub fn hermitian_h(pd: &PeriodData, z: &[Complex64]) -> f64 {
    log_h(pd, z).exp()
}

/// `d_{z_gamma} log h = -pi (W A)_gamma`.
pub fn log_h_gradient(pd: &PeriodData, z: &[Complex64]) -> Vec<Complex64> {
    let c = pd.shift();
    let a: Vec<Complex64> = (0..pd.n).map(|i| z[i] - z[i].conj() + c[i]).collect();
    (0..pd.n)
        .map(|g| (0..pd.n).fold(Complex64::new(0.0, 0.0), |acc, b| acc + a[b] * pd.w[(g, b)]) * -PI)
        .collect()
}

fn add(z: &[Complex64], l: &[Complex64]) -> Vec<Complex64> {
    z.iter().zip(l).map(|(a, b)| a + b).collect()
}

/// `|h(z + lambda_v) |e_v(z)|^2 / h(z) - 1|`.
pub fn descent_check(pd: &PeriodData, v: &LatticeVector, z: &[Complex64]) -> f64 {
    let shifted = add(z, &lattice_embed(pd, v));
    let expo = log_h(pd, &shifted) + 2.0 * transition_exponent(pd, v, z).re - log_h(pd, z);
    expo.exp_m1().abs()
}

/// `|e_{v'}(z + lambda_v) e_v(z) / e_{v+v'}(z) - 1|`.
pub fn cocycle_residual(pd: &PeriodData, v: &LatticeVector, v2: &LatticeVector, z: &[Complex64]) -> f64 {
    let shifted = add(z, &lattice_embed(pd, v));
    let lhs = transition_exponent(pd, v2, &shifted) + transition_exponent(pd, v, z);
    let rhs = transition_exponent(pd, &v.add(v2), z);
    ((lhs - rhs).exp() - 1.0).norm()
}

/// `|e_v(z)` via period generators ascending / e_v(z) descending - 1|.
pub fn order_residual(pd: &PeriodData, v: &LatticeVector, z: &[Complex64]) -> f64 {
    let asc: Vec<usize> = (0..pd.n).collect();
    let desc: Vec<usize> = (0..pd.n).rev().collect();
    let d = transition_exponent_ordered(pd, v, z, &asc) - transition_exponent_ordered(pd, v, z, &desc);
    (d.exp() - 1.0).norm()
}

/// `log h` as a scalar field on `C^n`.
pub fn log_h_field(pd: &PeriodData) -> FnField {
    let pd = pd.clone();
    FnField::new(pd.n(), move |p| log_h(&pd, p.coords()))
}

/// `max |(d dbar log h)_{ab} - pi W_ab|` by finite differences.
pub fn chern_check(pd: &PeriodData, z: &[Complex64], cfg: &StencilConfig) -> Result<f64> {
    let p = CPoint::from_slice(z)?;
    let g = wirtinger::metric_from_potential(&log_h_field(pd), &p, cfg)?;
    Ok(chern_defect(pd, g.entries()))
}

fn chern_defect(pd: &PeriodData, hess: &DMatrix<Complex64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..pd.n {
        for j in 0..pd.n {
            worst = worst.max((hess[(i, j)] - Complex64::new(PI * pd.w[(i, j)], 0.0)).norm());
        }
    }
    worst
}

/// Eigenvalues of the curvature form `d dbar (-log h) = -pi W`, ascending.
pub fn curvature_eigenvalues(pd: &PeriodData) -> Vec<f64> {
    let mut ev: Vec<f64> = (pd.w.clone() * -PI).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}
