//! Wigner functions of the form (quadratic polynomial) × (Gaussian).
//!
//! A [`GaussPolyState`] represents
//!
//! ```text
//! W(x) = P(x − μ) · N(x; μ, V) / Z,    P(u) = uᵀAu + bᵀu + c,
//! ```
//!
//! with `Z = tr(AV) + c` the normalization. The family is closed under
//! symplectic (indeed any invertible linear) transforms, linear marginals,
//! and conditioning on linear constraints, and contains single-photon
//! subtracted Gaussian states. Everything here is closed form; numerical
//! integration only enters through the functionals in [`crate::witness`].

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};
use crate::numerics::{find_root, norm_pdf, normal_moments, truncated_moments, truncated_moments_2};
use crate::phase_space::{is_symplectic, symplectic_form, CovarianceMatrix, PhaseSpaceVector};

/// Frame orthonormality / compatibility tolerance for measurement bases.
pub const FRAME_TOL: f64 = 1e-10;

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (&m + m.transpose())
}

/// A normalized Wigner function `P(x−μ)·N(x; μ, V)/Z` (or, for reduced
/// coordinates, a genuine probability density of the same form).
#[derive(Debug, Clone)]
pub struct GaussPolyState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    quad: DMatrix<f64>,
    lin: DVector<f64>,
    constant: f64,
    norm: f64,
    precision: DMatrix<f64>,
    // log((2π)^{n/2} √det V)
    log_gauss_norm: f64,
}

impl GaussPolyState {
    /// General constructor. `cov` must be positive definite and the implied
    /// normalization `tr(AV) + c` positive.
    pub fn from_parts(
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        quad: DMatrix<f64>,
        lin: DVector<f64>,
        constant: f64,
    ) -> Result<Self> {
        let n = mean.len();
        if n == 0 || cov.shape() != (n, n) || quad.shape() != (n, n) || lin.len() != n {
            return domain("inconsistent dimensions in polynomial-Gaussian state");
        }
        let cov = symmetrize(cov);
        let quad = symmetrize(quad);
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularConditioning("covariance is not positive definite".into()))?;
        let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let precision = symmetrize(chol.inverse());
        let norm = (&quad * &cov).trace() + constant;
        if !(norm > 0.0) || !norm.is_finite() {
            return domain(format!("non-positive normalization {norm}"));
        }
        let log_gauss_norm = 0.5 * n as f64 * (2.0 * PI).ln() + 0.5 * log_det;
        Ok(Self { mean, cov, quad, lin, constant, norm, precision, log_gauss_norm })
    }

    /// Zero-mean Gaussian state with covariance `v`.
    pub fn gaussian(v: &CovarianceMatrix) -> Result<Self> {
        let n = v.matrix().nrows();
        Self::from_parts(DVector::zeros(n), v.matrix().clone(), DMatrix::zeros(n, n), DVector::zeros(n), 1.0)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mode_count(&self) -> usize {
        self.dim() / 2
    }

    /// Mean of the Gaussian factor.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Covariance of the Gaussian factor (not the second moments of `W`).
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn poly_quad(&self) -> &DMatrix<f64> {
        &self.quad
    }

    pub fn poly_lin(&self) -> &DVector<f64> {
        &self.lin
    }

    pub fn poly_const(&self) -> f64 {
        self.constant
    }

    /// `Z = tr(AV) + c`.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn log_norm(&self) -> f64 {
        self.norm.ln()
    }

    /// True when the polynomial factor is constant.
    pub fn is_gaussian(&self) -> bool {
        let scale = self.constant.abs().max(1e-300);
        self.quad.amax() <= 1e-14 * scale && self.lin.amax() <= 1e-14 * scale
    }

    fn poly_at(&self, u: &DVector<f64>) -> f64 {
        (u.transpose() * &self.quad * u)[(0, 0)] + self.lin.dot(u) + self.constant
    }

    /// Point value `W(x)` (may be negative).
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "dimension mismatch");
        let u = DVector::from_column_slice(x) - &self.mean;
        let quadform = (u.transpose() * &self.precision * &u)[(0, 0)];
        self.poly_at(&u) / self.norm * (-0.5 * quadform - self.log_gauss_norm).exp()
    }

    /// Actual mean and covariance of the distribution (Isserlis moments).
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let vb = &self.cov * &self.lin / self.norm;
        let tr = (&self.quad * &self.cov).trace();
        let second = (&self.cov * (tr + self.constant) + 2.0 * &self.cov * &self.quad * &self.cov) / self.norm;
        let cov = symmetrize(second - &vb * vb.transpose());
        (&self.mean + vb, cov)
    }

    /// Single-photon subtraction from `mode` of a zero-mean Gaussian state.
    ///
    /// Produces `[‖P(𝟙−V⁻¹)x‖² − tr₂(P V⁻¹) + 2] W_G(x) / tr₂(V_mode − 𝟙)`
    /// where `P` projects on the subtracted mode and `tr₂` is the trace over
    /// that mode's 2×2 block.
    pub fn subtract_photon(&self, mode: usize) -> Result<Self> {
        if mode >= self.mode_count() {
            return domain(format!("mode {mode} out of range"));
        }
        if !self.is_gaussian() {
            return domain("photon subtraction is only supported on Gaussian states");
        }
        if self.mean.amax() > 1e-12 {
            return domain("photon subtraction requires a zero-mean state");
        }
        let n = self.dim();
        let (i, j) = (2 * mode, 2 * mode + 1);
        let photon_term = self.cov[(i, i)] + self.cov[(j, j)] - 2.0;
        if photon_term <= 1e-9 {
            return Err(Error::NoPhoton { mode });
        }
        let mut proj = DMatrix::zeros(n, n);
        proj[(i, i)] = 1.0;
        proj[(j, j)] = 1.0;
        let k = DMatrix::identity(n, n) - &self.precision;
        let quad = k.transpose() * &proj * &k;
        let constant = 2.0 - (self.precision[(i, i)] + self.precision[(j, j)]);
        Self::from_parts(self.mean.clone(), self.cov.clone(), quad, DVector::zeros(n), constant)
    }

    /// `W'(x) = W(Sᵀx)` for a symplectic `S`.
    pub fn transform(&self, s: &DMatrix<f64>) -> Result<Self> {
        if s.nrows() != self.dim() || !is_symplectic(s) {
            return domain("transform requires a symplectic matrix of matching size");
        }
        let t_inv = s.transpose().try_inverse().ok_or_else(|| Error::Domain("singular transform".into()))?;
        // x = S⁻ᵀ y: the Gaussian pushes forward, the polynomial pulls back.
        let mean = &t_inv * &self.mean;
        let cov = &t_inv * &self.cov * t_inv.transpose();
        let quad = s * &self.quad * s.transpose();
        let lin = s * &self.lin;
        Self::from_parts(mean, cov, quad, lin, self.constant)
    }

    /// Density of `y = L x` for a full-row-rank `L` (k × n).
    pub fn linear_image(&self, l: &DMatrix<f64>) -> Result<Self> {
        if l.ncols() != self.dim() || l.nrows() == 0 || l.nrows() > self.dim() {
            return domain("linear map has incompatible shape");
        }
        let sigma_y = symmetrize(l * &self.cov * l.transpose());
        let sigma_y_inv = sigma_y
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularConditioning("projected covariance is singular".into()))?
            .inverse();
        let gain = &self.cov * l.transpose() * &sigma_y_inv;
        let residual = symmetrize(&self.cov - &gain * l * &self.cov);
        let quad = gain.transpose() * &self.quad * &gain;
        let lin = gain.transpose() * &self.lin;
        let constant = (&self.quad * &residual).trace() + self.constant;
        Self::from_parts(l * &self.mean, sigma_y, quad, lin, constant)
    }

    /// Fixes the first `values.len()` coordinates and returns the normalized
    /// conditional density of the rest together with the marginal density of
    /// the fixed coordinates at `values`.
    pub fn condition_leading(&self, values: &[f64]) -> Result<(Self, f64)> {
        let k = values.len();
        let n = self.dim();
        if k == 0 || k >= n {
            return domain("must fix between 1 and dim−1 coordinates");
        }
        let r = n - k;
        let s11 = self.cov.view((0, 0), (k, k)).into_owned();
        let s12 = self.cov.view((0, k), (k, r)).into_owned();
        let s22 = self.cov.view((k, k), (r, r)).into_owned();
        let chol = s11
            .clone()
            .cholesky()
            .filter(|c| c.l().diagonal().min() > 1e-12)
            .ok_or_else(|| Error::SingularConditioning("constraint directions have zero variance".into()))?;
        let s11_inv = chol.inverse();
        let log_det11: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let u1 = DVector::from_column_slice(values) - self.mean.rows(0, k);
        let shift = s12.transpose() * &s11_inv * &u1;
        let cov = symmetrize(&s22 - s12.transpose() * &s11_inv * &s12);
        let a11 = self.quad.view((0, 0), (k, k));
        let a12 = self.quad.view((0, k), (k, r));
        let a22 = self.quad.view((k, k), (r, r)).into_owned();
        let b1 = self.lin.rows(0, k);
        let b2 = self.lin.rows(k, r);
        let quad = a22.clone();
        let lin = 2.0 * (a12.transpose() * &u1 + &a22 * &shift) + b2;
        let constant = (u1.transpose() * a11 * &u1)[(0, 0)]
            + 2.0 * (u1.transpose() * a12 * &shift)[(0, 0)]
            + (shift.transpose() * &a22 * &shift)[(0, 0)]
            + b1.dot(&u1)
            + b2.dot(&shift)
            + self.constant;
        let mean = self.mean.rows(k, r) + &shift;
        let reduced = Self::from_parts(mean, cov, quad, lin, constant)?;
        let gauss =
            (-0.5 * (u1.transpose() * &s11_inv * &u1)[(0, 0)] - 0.5 * k as f64 * (2.0 * PI).ln() - 0.5 * log_det11)
                .exp();
        let density = gauss * reduced.norm / self.norm;
        Ok((reduced, density))
    }

    /// Conditions on homodyne outcomes `fᵢᵀx = xᵢ` and returns the normalized
    /// conditional Wigner function of `keep_modes`, plus the joint density of
    /// the outcomes. The constraint axes must be jointly measurable and have
    /// no component on the kept modes.
    pub fn condition(&self, constraints: &[(PhaseSpaceVector, f64)], keep_modes: &[usize]) -> Result<Conditioned> {
        let axes: Vec<PhaseSpaceVector> = constraints.iter().map(|(a, _)| a.clone()).collect();
        MeasurementBasis::new(axes)?;
        let n = self.dim();
        for (axis, value) in constraints {
            if axis.as_slice().len() != n {
                return domain("constraint axis dimension mismatch");
            }
            if !value.is_finite() {
                return domain("non-finite conditioning value");
            }
            if keep_modes
                .iter()
                .any(|&m| axis.as_slice()[2 * m].abs() > FRAME_TOL || axis.as_slice()[2 * m + 1].abs() > FRAME_TOL)
            {
                return domain("constraint axis overlaps a retained mode");
            }
        }
        let k = constraints.len();
        let mut l = DMatrix::zeros(k + 2 * keep_modes.len(), n);
        for (row, (axis, _)) in constraints.iter().enumerate() {
            l.row_mut(row).copy_from(&axis.as_vector().transpose());
        }
        for (j, &m) in keep_modes.iter().enumerate() {
            if 2 * m + 1 >= n {
                return domain(format!("mode {m} out of range"));
            }
            l[(k + 2 * j, 2 * m)] = 1.0;
            l[(k + 2 * j + 1, 2 * m + 1)] = 1.0;
        }
        let joint = self.linear_image(&l)?;
        let values: Vec<f64> = constraints.iter().map(|(_, v)| *v).collect();
        let (state, joint_density) = joint.condition_leading(&values)?;
        Ok(Conditioned { state, joint_density })
    }

    /// Exact 1D marginal along a unit `axis`.
    pub fn marginal_1d(&self, axis: &[f64]) -> Result<Marginal1D> {
        let norm: f64 = axis.iter().map(|x| x * x).sum::<f64>().sqrt();
        if axis.len() != self.dim() || (norm - 1.0).abs() > 1e-9 {
            return domain("marginal axis must be a unit vector of matching dimension");
        }
        let l = DMatrix::from_row_slice(1, self.dim(), axis);
        let m = self.linear_image(&l)?;
        Ok(Marginal1D::from_state_1d(&m))
    }

    /// Joint density of the two quadratures `aᵀx` and `bᵀx`.
    pub fn joint_2d(&self, a: &[f64], b: &[f64]) -> Result<JointDensity2D> {
        if a.len() != self.dim() || b.len() != self.dim() {
            return domain("axis dimension mismatch");
        }
        let mut l = DMatrix::zeros(2, self.dim());
        l.row_mut(0).copy_from_slice(a);
        l.row_mut(1).copy_from_slice(b);
        JointDensity2D::new(self.linear_image(&l)?)
    }
}

/// Output of [`GaussPolyState::condition`].
#[derive(Debug, Clone)]
pub struct Conditioned {
    pub state: GaussPolyState,
    pub joint_density: f64,
}

/// Jointly measurable set of unit axes: `fᵢᵀf_j = δᵢⱼ`, `fᵢᵀΩf_j = 0`.
#[derive(Debug, Clone)]
pub struct MeasurementBasis {
    axes: Vec<PhaseSpaceVector>,
}

impl MeasurementBasis {
    pub fn new(axes: Vec<PhaseSpaceVector>) -> Result<Self> {
        if axes.is_empty() {
            return domain("measurement basis needs at least one axis");
        }
        let dim = axes[0].as_slice().len();
        if axes.iter().any(|a| a.as_slice().len() != dim) {
            return domain("axes of different dimension");
        }
        let omega = symplectic_form(dim / 2);
        for (i, fi) in axes.iter().enumerate() {
            for (j, fj) in axes.iter().enumerate().skip(i) {
                let dot = fi.as_vector().dot(fj.as_vector());
                let expected = if i == j { 1.0 } else { 0.0 };
                if (dot - expected).abs() > FRAME_TOL {
                    return domain(format!("axes {i},{j} not orthonormal (dot = {dot})"));
                }
                let sym = fi.as_vector().dot(&(&omega * fj.as_vector()));
                if sym.abs() > FRAME_TOL {
                    return domain(format!("axes {i},{j} are not jointly measurable"));
                }
            }
        }
        Ok(Self { axes })
    }

    pub fn axes(&self) -> &[PhaseSpaceVector] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.axes.is_empty()
    }
}

/// One-dimensional quadrature density
/// `(a2·t² + a1·t + a0)·N(q; μ, σ²)` with `t = q − μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marginal1D {
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
    pub mu: f64,
    pub sigma2: f64,
}

impl Marginal1D {
    /// Normalized Gaussian `N(μ, σ²)`.
    pub fn gaussian(mu: f64, sigma2: f64) -> Self {
        Self { a2: 0.0, a1: 0.0, a0: 1.0, mu, sigma2 }
    }

    /// Polynomial-Gaussian with the given coefficients, rescaled to unit mass.
    pub fn normalized_from(a2: f64, a1: f64, a0: f64, mu: f64, sigma2: f64) -> Self {
        Self { a2, a1, a0, mu, sigma2 }.normalized()
    }

    fn from_state_1d(s: &GaussPolyState) -> Self {
        let z = s.norm();
        Self { a2: s.quad[(0, 0)] / z, a1: s.lin[0] / z, a0: s.constant / z, mu: s.mean[0], sigma2: s.cov[(0, 0)] }
    }

    /// Total mass `a2σ² + a0`.
    pub fn mass(&self) -> f64 {
        self.a2 * self.sigma2 + self.a0
    }

    pub fn normalized(&self) -> Self {
        let z = self.mass();
        Self { a2: self.a2 / z, a1: self.a1 / z, a0: self.a0 / z, ..*self }
    }

    pub fn is_normalized(&self) -> bool {
        (self.mass() - 1.0).abs() <= 1e-10
    }

    /// Nonnegativity of the polynomial factor (double roots only).
    pub fn is_nonnegative(&self) -> bool {
        let scale = self.a0.abs().max(self.a2 * self.sigma2).max(self.a1.abs() * self.sigma2.sqrt());
        if self.a2 < -1e-12 * scale {
            return false;
        }
        if self.a2 <= 1e-12 * scale {
            return self.a1.abs() <= 1e-9 * scale && self.a0 > 0.0;
        }
        self.a1 * self.a1 - 4.0 * self.a2 * self.a0 <= 1e-9 * scale * scale / self.sigma2.max(1e-300)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    pub fn poly(&self, t: f64) -> f64 {
        (self.a2 * t + self.a1) * t + self.a0
    }

    pub fn density(&self, q: f64) -> f64 {
        let t = q - self.mu;
        let s = self.sigma();
        self.poly(t) * norm_pdf(t / s) / s
    }

    /// `d/dq` of [`Self::density`].
    pub fn density_derivative(&self, q: f64) -> f64 {
        let t = q - self.mu;
        let s = self.sigma();
        let dp = 2.0 * self.a2 * t + self.a1;
        (dp - self.poly(t) * t / self.sigma2) * norm_pdf(t / s) / s
    }

    /// Mean and variance in closed form.
    pub fn moments(&self) -> (f64, f64) {
        let z = self.mass();
        let s2 = self.sigma2;
        let m1 = self.a1 * s2 / z;
        let m2 = (3.0 * self.a2 * s2 * s2 + self.a0 * s2) / z;
        (self.mu + m1, m2 - m1 * m1)
    }

    /// Probability mass on `[lo, hi)` (infinite limits allowed).
    pub fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        let s = self.sigma();
        let d = truncated_moments((lo - self.mu) / s, (hi - self.mu) / s, 2);
        (self.a2 * self.sigma2 * d[2] + self.a1 * s * d[1] + self.a0 * d[0]) / self.mass()
    }

    pub fn cdf(&self, q: f64) -> f64 {
        self.interval_mass(f64::NEG_INFINITY, q)
    }

    /// Inverse of [`Self::cdf`] for `p ∈ (0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        let (mean, var) = self.moments();
        let s = var.sqrt().max(self.sigma());
        find_root(|q| self.cdf(q) - p, mean - 40.0 * s, mean + 40.0 * s, 1e-13 * s).unwrap_or(mean)
    }
}

/// Joint density of two quadratures `(a, b)`, a polynomial-Gaussian in two
/// variables, with fast access to the conditionals `p(b | a)`.
#[derive(Debug, Clone)]
pub struct JointDensity2D {
    state: GaussPolyState,
    slicer: ScalarSlicer,
}

impl JointDensity2D {
    pub fn new(state: GaussPolyState) -> Result<Self> {
        if state.dim() != 2 {
            return domain("joint density must be two-dimensional");
        }
        let slicer = ScalarSlicer::new(&state)?;
        Ok(Self { state, slicer })
    }

    pub fn state(&self) -> &GaussPolyState {
        &self.state
    }

    pub fn evaluate(&self, a: f64, b: f64) -> f64 {
        self.state.evaluate(&[a, b])
    }

    /// Marginal of the first coordinate.
    pub fn first_marginal(&self) -> Marginal1D {
        self.state.marginal_1d(&[1.0, 0.0]).expect("unit axis")
    }

    /// Marginal of the second coordinate.
    pub fn second_marginal(&self) -> Marginal1D {
        self.state.marginal_1d(&[0.0, 1.0]).expect("unit axis")
    }

    /// Normalized conditional `p(b | a)` and the marginal density `p(a)`.
    pub fn conditional(&self, a: f64) -> (Marginal1D, f64) {
        self.slicer.at(&[a])
    }

    pub fn slicer(&self) -> &ScalarSlicer {
        &self.slicer
    }

    /// Gaussian-part correlation coefficient.
    pub fn gaussian_correlation(&self) -> f64 {
        let c = self.state.cov();
        c[(0, 1)] / (c[(0, 0)] * c[(1, 1)]).sqrt()
    }

    /// Mixture of the conditionals `p(b | a)` over `a ∈ [lo, hi)`, unnormalized:
    /// returns `(∫ p(a,b) da, ∂_b ∫ p(a,b) da)` at `b`.
    pub fn band_density(&self, lo: f64, hi: f64, b: f64) -> (f64, f64) {
        let s = &self.state;
        let c = s.cov();
        let (var_a, cab, var_b) = (c[(0, 0)], c[(0, 1)], c[(1, 1)]);
        let kappa = cab / var_b;
        let tau = (var_a - cab * cab / var_b).sqrt();
        let v = b - s.mean()[1];
        let sb = var_b.sqrt();
        let gauss_b = norm_pdf(v / sb) / sb;
        // u = κv + τz: polynomial in z with coefficients in v
        let a = s.poly_quad();
        let l = s.poly_lin();
        let (a00, a01, a11) = (a[(0, 0)], a[(0, 1)], a[(1, 1)]);
        let (b0, b1, c0) = (l[0], l[1], s.poly_const());
        let alpha2 = a00 * tau * tau;
        let alpha1 = 2.0 * a00 * kappa * tau * v + 2.0 * a01 * tau * v + b0 * tau;
        let alpha0 =
            a00 * kappa * kappa * v * v + 2.0 * a01 * kappa * v * v + a11 * v * v + b0 * kappa * v + b1 * v + c0;
        let dalpha1 = 2.0 * a00 * kappa * tau + 2.0 * a01 * tau;
        let dalpha0 = 2.0 * (a00 * kappa * kappa + 2.0 * a01 * kappa + a11) * v + b0 * kappa + b1;
        let zl = if lo.is_finite() { (lo - s.mean()[0] - kappa * v) / tau } else { lo };
        let zh = if hi.is_finite() { (hi - s.mean()[0] - kappa * v) / tau } else { hi };
        let d = truncated_moments_2(zl, zh);
        let g = alpha2 * d[2] + alpha1 * d[1] + alpha0 * d[0];
        // d D_k / dv = (zh^k φ(zh) − zl^k φ(zl)) · (−κ/τ)
        let edge = |z: f64, k: i32| if z.is_finite() { z.powi(k) * norm_pdf(z) } else { 0.0 };
        let dz = -kappa / tau;
        let dd = [0, 1, 2].map(|k| (edge(zh, k) - edge(zl, k)) * dz);
        let dg = dalpha1 * d[1] + dalpha0 * d[0] + alpha2 * dd[2] + alpha1 * dd[1] + alpha0 * dd[0];
        let z = s.norm();
        (gauss_b * g / z, gauss_b * (dg - v * g / var_b) / z)
    }

    /// Raw moments `∫_lo^hi ∫ b^k p(a, b) db da` for `k = 0, 1, 2`.
    pub fn band_moments(&self, lo: f64, hi: f64) -> [f64; 3] {
        let s = &self.state;
        let c = s.cov();
        let (var_a, cab, var_b) = (c[(0, 0)], c[(0, 1)], c[(1, 1)]);
        let lambda = cab / var_a;
        let omega = (var_b - cab * cab / var_a).sqrt();
        let sa = var_a.sqrt();
        let (ma, mb) = (s.mean()[0], s.mean()[1]);
        let a = s.poly_quad();
        let l = s.poly_lin();
        let (a00, a01, a11) = (a[(0, 0)], a[(0, 1)], a[(1, 1)]);
        // P(u, v) with v = λu + ωz as coefficients of u^i z^j
        let mut poly = [[0.0; 5]; 5];
        poly[2][0] = a00 + 2.0 * a01 * lambda + a11 * lambda * lambda;
        poly[1][1] = 2.0 * (a01 + a11 * lambda) * omega;
        poly[0][2] = a11 * omega * omega;
        poly[1][0] = l[0] + l[1] * lambda;
        poly[0][1] = l[1] * omega;
        poly[0][0] = s.poly_const();
        let d = truncated_moments((lo - ma) / sa, (hi - ma) / sa, 4);
        let gm = normal_moments(4);
        let mut out = [0.0; 3];
        for slot in out.iter_mut() {
            let mut acc = 0.0;
            for (i, row) in poly.iter().enumerate() {
                for (j, c) in row.iter().enumerate() {
                    if *c != 0.0 {
                        acc += c * sa.powi(i as i32) * d[i] * gm[j];
                    }
                }
            }
            *slot = acc / s.norm();
            // multiply by b = mb + λu + ωz
            let mut next = [[0.0; 5]; 5];
            for i in 0..5 {
                for j in 0..5 {
                    let c = poly[i][j];
                    if c == 0.0 {
                        continue;
                    }
                    next[i][j] += c * mb;
                    if i < 4 {
                        next[i + 1][j] += c * lambda;
                    }
                    if j < 4 {
                        next[i][j + 1] += c * omega;
                    }
                }
            }
            poly = next;
        }
        out
    }
}

/// Precomputed conditional of the last coordinate given the leading ones of a
/// `(k+1)`-dimensional polynomial-Gaussian density.
#[derive(Debug, Clone)]
pub struct ScalarSlicer {
    k: usize,
    lead_mean: Vec<f64>,
    lead_precision: DMatrix<f64>,
    lead_log_norm: f64,
    kappa: Vec<f64>,
    tau2: f64,
    last_mean: f64,
    a22: f64,
    g: Vec<f64>,
    b2: f64,
    h_quad: DMatrix<f64>,
    h_lin: Vec<f64>,
    c: f64,
    norm: f64,
}

impl ScalarSlicer {
    pub fn new(s: &GaussPolyState) -> Result<Self> {
        let n = s.dim();
        if n < 2 {
            return domain("slicer needs at least two coordinates");
        }
        let k = n - 1;
        let cov = s.cov();
        let s11 = cov.view((0, 0), (k, k)).into_owned();
        let s12 = cov.view((0, k), (k, 1)).into_owned();
        let chol = s11
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularConditioning("leading covariance is singular".into()))?;
        let s11_inv = chol.inverse();
        let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let kappa = &s11_inv * &s12;
        let tau2 = cov[(k, k)] - (s12.transpose() * &kappa)[(0, 0)];
        if !(tau2 > 0.0) {
            return Err(Error::SingularConditioning("conditional variance is not positive".into()));
        }
        let a = s.poly_quad();
        let a11 = a.view((0, 0), (k, k)).into_owned();
        let a12 = a.view((0, k), (k, 1)).into_owned();
        let a22 = a[(k, k)];
        let b = s.poly_lin();
        let b1 = b.rows(0, k).into_owned();
        let b2 = b[k];
        let g = 2.0 * (&a12 + a22 * &kappa);
        let cross = &a12 * kappa.transpose();
        let h_quad = &a11 + &cross + cross.transpose() + a22 * &kappa * kappa.transpose();
        let h_lin = &b1 + b2 * &kappa;
        Ok(Self {
            k,
            lead_mean: s.mean().rows(0, k).iter().copied().collect(),
            lead_precision: s11_inv,
            lead_log_norm: 0.5 * k as f64 * (2.0 * PI).ln() + 0.5 * log_det,
            kappa: kappa.iter().copied().collect(),
            tau2,
            last_mean: s.mean()[k],
            a22,
            g: g.iter().copied().collect(),
            b2,
            h_quad,
            h_lin: h_lin.iter().copied().collect(),
            c: s.poly_const(),
            norm: s.norm(),
        })
    }

    /// Normalized conditional of the last coordinate and the marginal density
    /// of the leading coordinates at `lead`.
    pub fn at(&self, lead: &[f64]) -> (Marginal1D, f64) {
        let (raw, quad_p) = self.raw_at(lead);
        let z = raw.mass();
        let density = (-0.5 * quad_p - self.lead_log_norm).exp() * z / self.norm;
        (raw.normalized(), density)
    }

    /// Like [`Self::at`], but returns the ratio of the marginal density to the
    /// leading Gaussian factor `N(lead; μ, Σ₁₁)` instead of the density.
    pub fn at_relative(&self, lead: &[f64]) -> (Marginal1D, f64) {
        let (raw, _) = self.raw_at(lead);
        let z = raw.mass();
        (raw.normalized(), z / self.norm)
    }

    /// For a single leading coordinate: the offset `u = x₀ − μ₀` minimizing
    /// the discriminant gap `a0 − a1²/(4a2)` of the conditional polynomial,
    /// where a double root can appear.
    pub fn double_root_offset(&self) -> Option<f64> {
        if self.k != 1 || self.a22 <= 0.0 {
            return None;
        }
        // gap(u) = (H − g²/(4a22)) u² + (h − g b2/(2a22)) u + const
        let quad = self.h_quad[(0, 0)] - self.g[0] * self.g[0] / (4.0 * self.a22);
        let lin = self.h_lin[0] - self.g[0] * self.b2 / (2.0 * self.a22);
        (quad > 0.0).then(|| -lin / (2.0 * quad))
    }

    fn raw_at(&self, lead: &[f64]) -> (Marginal1D, f64) {
        debug_assert_eq!(lead.len(), self.k);
        let k = self.k;
        let mut buf = [0.0f64; 8];
        let owned;
        let u: &[f64] = if k <= buf.len() {
            for i in 0..k {
                buf[i] = lead[i] - self.lead_mean[i];
            }
            &buf[..k]
        } else {
            owned = lead.iter().zip(&self.lead_mean).map(|(x, m)| x - m).collect::<Vec<_>>();
            &owned
        };
        let mut quad_h = 0.0;
        let mut quad_p = 0.0;
        for i in 0..k {
            for j in 0..k {
                quad_h += u[i] * self.h_quad[(i, j)] * u[j];
                quad_p += u[i] * self.lead_precision[(i, j)] * u[j];
            }
        }
        let dot = |v: &[f64]| v.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        let a1 = dot(&self.g) + self.b2;
        let a0 = quad_h + dot(&self.h_lin) + self.c;
        let shift = dot(&self.kappa);
        (Marginal1D { a2: self.a22, a1, a0, mu: self.last_mean + shift, sigma2: self.tau2 }, quad_p)
    }
}
