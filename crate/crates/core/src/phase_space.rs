//! Phase-space conventions and Gaussian covariance matrices.
//!
//! Coordinates are ordered `(q₁, p₁, …, q_M, p_M)` with `[q, p] = 2i`, so the
//! vacuum has unit quadrature variance and identity covariance matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Result};

/// Tolerance on `V + iΩ ⪰ 0` (smallest eigenvalue).
pub const UNCERTAINTY_TOL: f64 = 1e-9;
/// Tolerance on symmetry of covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Tolerance on `SᵀΩS = Ω`.
pub const SYMPLECTIC_TOL: f64 = 1e-10;

/// Converts a squeezing level in dB to the variance ratio `r = 10^(s/10)`.
pub fn db_to_ratio(s_db: f64) -> f64 {
    10f64.powf(s_db / 10.0)
}

/// A point or direction in the 2M-dimensional phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceVector(DVector<f64>);

impl PhaseSpaceVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() || coords.len() % 2 != 0 {
            return domain(format!("phase-space vector needs even positive length, got {}", coords.len()));
        }
        Ok(Self(DVector::from_vec(coords)))
    }

    pub fn zeros(modes: usize) -> Self {
        Self(DVector::zeros(2 * modes))
    }

    pub fn mode_count(&self) -> usize {
        self.0.len() / 2
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// `Ω·x`, the conjugate direction.
    pub fn omega(&self) -> Self {
        Self(symplectic_form(self.mode_count()) * &self.0)
    }

    /// Modes on which this vector has a non-negligible component.
    pub fn support(&self) -> Vec<usize> {
        (0..self.mode_count()).filter(|&k| self.0[2 * k].abs() > 1e-14 || self.0[2 * k + 1].abs() > 1e-14).collect()
    }
}

impl From<DVector<f64>> for PhaseSpaceVector {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

/// `Ω = ⊕ [[0, −1], [1, 0]]` for `modes` modes.
pub fn symplectic_form(modes: usize) -> DMatrix<f64> {
    let mut omega = DMatrix::zeros(2 * modes, 2 * modes);
    for k in 0..modes {
        omega[(2 * k, 2 * k + 1)] = -1.0;
        omega[(2 * k + 1, 2 * k)] = 1.0;
    }
    omega
}

/// True if `SᵀΩS = Ω` to [`SYMPLECTIC_TOL`].
pub fn is_symplectic(s: &DMatrix<f64>) -> bool {
    if !s.is_square() || s.nrows() % 2 != 0 || s.nrows() == 0 {
        return false;
    }
    let omega = symplectic_form(s.nrows() / 2);
    (s.transpose() * &omega * s - omega).amax() <= SYMPLECTIC_TOL
}

/// Unit vector measuring `cos φ·q + sin φ·p` of `mode` among `modes` modes.
pub fn quadrature_axis(mode: usize, phi: f64, modes: usize) -> Result<PhaseSpaceVector> {
    if mode >= modes {
        return domain(format!("mode {mode} out of range for {modes} modes"));
    }
    let mut v = DVector::zeros(2 * modes);
    v[2 * mode] = phi.cos();
    v[2 * mode + 1] = phi.sin();
    Ok(PhaseSpaceVector(v))
}

/// Checks symmetry and the uncertainty relation `V + iΩ ⪰ 0`.
///
/// The Hermitian matrix `V + iΩ` is tested through its real embedding
/// `[[V, −Ω], [Ω, V]]`, which carries each eigenvalue twice.
pub fn validate_covariance(v: &DMatrix<f64>) -> bool {
    if !v.is_square() || v.nrows() == 0 || v.nrows() % 2 != 0 {
        return false;
    }
    if !v.iter().all(|x| x.is_finite()) || (v - v.transpose()).amax() > SYMMETRY_TOL {
        return false;
    }
    let n = v.nrows();
    let omega = symplectic_form(n / 2);
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(v);
    big.view_mut((n, n), (n, n)).copy_from(v);
    big.view_mut((0, n), (n, n)).copy_from(&(-&omega));
    big.view_mut((n, 0), (n, n)).copy_from(&omega);
    let sym = 0.5 * (&big + big.transpose());
    sym.symmetric_eigenvalues().min() >= -UNCERTAINTY_TOL
}

/// Symplectic eigenvalues of a positive-definite covariance matrix, sorted
/// ascending (one per mode).
pub fn symplectic_eigenvalues(v: &DMatrix<f64>) -> Vec<f64> {
    // ν² are the eigenvalues of −V^½ Ω V Ω V^½, each twice degenerate.
    let modes = v.nrows() / 2;
    let eig = v.clone().symmetric_eigen();
    let sqrt = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|x| x.max(0.0).sqrt()))
        * eig.eigenvectors.transpose();
    let omega = symplectic_form(modes);
    let k = -(&sqrt * &omega * v * &omega * &sqrt);
    let k = 0.5 * (&k + k.transpose());
    let mut nu: Vec<f64> = k.symmetric_eigenvalues().iter().map(|x| x.max(0.0).sqrt()).collect();
    nu.sort_by(f64::total_cmp);
    nu.into_iter().step_by(2).collect()
}

/// A valid quantum covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    v: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Wraps `v` after checking symmetry and the uncertainty relation.
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        if !validate_covariance(&v) {
            return domain("matrix is not a valid quantum covariance matrix");
        }
        Ok(Self { v: 0.5 * (&v + v.transpose()) })
    }

    /// Vacuum of `modes` modes.
    pub fn vacuum(modes: usize) -> Self {
        Self { v: DMatrix::identity(2 * modes, 2 * modes) }
    }

    /// Single-mode squeezed vacuum, squeezed in `q` by `s_db` decibels.
    pub fn squeezed_vacuum(s_db: f64) -> Self {
        let r = db_to_ratio(s_db);
        Self { v: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / r, r])) }
    }

    pub fn mode_count(&self) -> usize {
        self.v.nrows() / 2
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.v
    }

    /// Uniform loss: `V ↦ (1−η)V + η·𝟙`.
    pub fn apply_loss(&self, eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return domain(format!("loss η = {eta} outside [0, 1]"));
        }
        let n = self.v.nrows();
        Ok(Self { v: (1.0 - eta) * &self.v + eta * DMatrix::identity(n, n) })
    }

    /// `S V Sᵀ` for a symplectic `S`.
    pub fn transform(&self, s: &DMatrix<f64>) -> Result<Self> {
        if s.nrows() != self.v.nrows() || !is_symplectic(s) {
            return domain("transform requires a symplectic matrix of matching size");
        }
        let v = s * &self.v * s.transpose();
        Ok(Self { v: 0.5 * (&v + v.transpose()) })
    }

    /// Block-diagonal direct sum `self ⊕ other` (modes of `other` appended).
    pub fn direct_sum(&self, other: &Self) -> Self {
        let (n, m) = (self.v.nrows(), other.v.nrows());
        let mut v = DMatrix::zeros(n + m, n + m);
        v.view_mut((0, 0), (n, n)).copy_from(&self.v);
        v.view_mut((n, n), (m, m)).copy_from(&other.v);
        Self { v }
    }

    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        symplectic_eigenvalues(&self.v)
    }
}

/// Covariance matrix of two oppositely squeezed modes mixed on a balanced
/// beamsplitter, with squeezing `s1_db`, `s2_db` in decibels.
pub fn epr_covariance(s1_db: f64, s2_db: f64) -> CovarianceMatrix {
    let r1 = db_to_ratio(s1_db);
    let r2 = db_to_ratio(s2_db);
    let a = 0.5 * (r1 + 1.0 / r2);
    let b = 0.5 * (r2 + 1.0 / r1);
    let c = 0.5 * (1.0 / r2 - r1);
    let d = 0.5 * (r2 - 1.0 / r1);
    #[rustfmt::skip]
    let v = DMatrix::from_row_slice(4, 4, &[
        a,   0.0, c,   0.0,
        0.0, b,   0.0, d,
        c,   0.0, a,   0.0,
        0.0, d,   0.0, b,
    ]);
    CovarianceMatrix { v }
}

/// Two-mode beamsplitter with reflectivity `cos θ`:
/// `[[cos θ·𝟙, sin θ·𝟙], [−sin θ·𝟙, cos θ·𝟙]]`.
pub fn beamsplitter(theta: f64) -> DMatrix<f64> {
    beamsplitter_between(2, 0, 1, theta)
}

/// Beamsplitter acting on modes `i` and `j` of an `modes`-mode system.
pub fn beamsplitter_between(modes: usize, i: usize, j: usize, theta: f64) -> DMatrix<f64> {
    assert!(i < modes && j < modes && i != j, "invalid beamsplitter modes");
    let (s, c) = theta.sin_cos();
    let mut m = DMatrix::identity(2 * modes, 2 * modes);
    for k in 0..2 {
        m[(2 * i + k, 2 * i + k)] = c;
        m[(2 * j + k, 2 * j + k)] = c;
        m[(2 * i + k, 2 * j + k)] = s;
        m[(2 * j + k, 2 * i + k)] = -s;
    }
    m
}

/// Phase rotation of `mode` by `angle`: `(q, p) ↦ (q cos − p sin, q sin + p cos)`.
pub fn phase_rotation(modes: usize, mode: usize, angle: f64) -> DMatrix<f64> {
    assert!(mode < modes, "invalid rotation mode");
    let (s, c) = angle.sin_cos();
    let mut m = DMatrix::identity(2 * modes, 2 * modes);
    m[(2 * mode, 2 * mode)] = c;
    m[(2 * mode, 2 * mode + 1)] = -s;
    m[(2 * mode + 1, 2 * mode)] = s;
    m[(2 * mode + 1, 2 * mode + 1)] = c;
    m
}

/// Assignment of modes to Alice (steering party) and Bob (steered party).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModePartition {
    alice: Vec<usize>,
    bob: Vec<usize>,
}

impl ModePartition {
    pub fn new(alice: Vec<usize>, bob: Vec<usize>, modes: usize) -> Result<Self> {
        if alice.is_empty() || bob.is_empty() {
            return domain("both parties need at least one mode");
        }
        let mut seen = vec![false; modes];
        for &k in alice.iter().chain(&bob) {
            if k >= modes || seen[k] {
                return domain(format!("mode {k} repeated or out of range"));
            }
            seen[k] = true;
        }
        if seen.iter().any(|s| !s) {
            return domain("partition does not cover every mode");
        }
        Ok(Self { alice, bob })
    }

    /// Two-mode partition with Alice on `alice` and Bob on the other mode.
    pub fn two_mode(alice: usize) -> Self {
        assert!(alice < 2);
        Self { alice: vec![alice], bob: vec![1 - alice] }
    }

    pub fn alice(&self) -> &[usize] {
        &self.alice
    }

    pub fn bob(&self) -> &[usize] {
        &self.bob
    }

    pub fn mode_count(&self) -> usize {
        self.alice.len() + self.bob.len()
    }

    /// The same split with the roles exchanged.
    pub fn swapped(&self) -> Self {
        Self { alice: self.bob.clone(), bob: self.alice.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    #[test]
    fn epr_examples() {
        assert!(close(epr_covariance(0.0, 0.0).matrix(), &DMatrix::identity(4, 4), 1e-15));
        let v = epr_covariance(3.0, 3.0);
        let r = 10f64.powf(0.3);
        assert!((v.matrix()[(0, 0)] - (r + 1.0 / r) / 2.0).abs() < 1e-15);
        assert!((v.matrix()[(0, 0)] - 1.248225).abs() < 1e-6);
        assert!((v.matrix()[(0, 2)] + 0.747038).abs() < 1e-6);
        let v = epr_covariance(3.2, 2.6);
        let (r1, r2) = (10f64.powf(0.32), 10f64.powf(0.26));
        assert!((v.matrix()[(0, 0)] - (r1 + 1.0 / r2) / 2.0).abs() < 1e-15);
        assert!((v.matrix()[(1, 3)] - (r2 - 1.0 / r1) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn loss_examples() {
        let v = epr_covariance(3.0, 3.0);
        assert_eq!(v.apply_loss(0.0).unwrap(), v);
        assert!(close(v.apply_loss(1.0).unwrap().matrix(), &DMatrix::identity(4, 4), 1e-15));
        assert!(v.apply_loss(1.5).is_err());
        assert!(v.apply_loss(-0.1).is_err());
        // conditional variance of q_B given q_A at η = 0.5
        let m = v.apply_loss(0.5).unwrap().into_matrix();
        let cond = m[(2, 2)] - m[(0, 2)] * m[(0, 2)] / m[(0, 0)];
        assert!((cond - 1.0).abs() < 1e-14);
    }

    #[test]
    fn beamsplitter_examples() {
        assert!(close(&beamsplitter(0.0), &DMatrix::identity(4, 4), 0.0));
        let swap = beamsplitter(FRAC_PI_2);
        #[rustfmt::skip]
        let expected = DMatrix::from_row_slice(4, 4, &[
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
            -1.0, 0.0, 0.0, 0.0,
            0.0, -1.0, 0.0, 0.0,
        ]);
        assert!(close(&swap, &expected, 1e-15));
        let half = beamsplitter(FRAC_PI_4);
        assert!(half.iter().all(|x| x.abs() < 1e-15 || (x.abs() - FRAC_1_SQRT_2).abs() < 1e-15));
        assert!(is_symplectic(&half));
    }

    #[test]
    fn quadrature_axis_examples() {
        assert_eq!(quadrature_axis(0, 0.0, 2).unwrap().as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        let p = quadrature_axis(0, FRAC_PI_2, 2).unwrap();
        assert!((p.as_slice()[1] - 1.0).abs() < 1e-15 && p.as_slice()[0].abs() < 1e-15);
        let d = quadrature_axis(1, FRAC_PI_4, 2).unwrap();
        assert!((d.as_slice()[2] - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((d.as_slice()[3] - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(quadrature_axis(2, 0.0, 2).is_err());
    }

    #[test]
    fn validation_examples() {
        assert!(validate_covariance(&DMatrix::identity(4, 4)));
        let bad = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.5, 1.0, 1.0]));
        assert!(!validate_covariance(&bad));
        assert!(validate_covariance(epr_covariance(5.0, 5.0).matrix()));
        assert!(!validate_covariance(&DMatrix::identity(3, 3)));
    }

    #[test]
    fn symplectic_form_properties() {
        let o = symplectic_form(3);
        assert!(close(&o.transpose(), &(-&o), 0.0));
        assert!(close(&(&o * &o), &(-DMatrix::identity(6, 6)), 0.0));
    }

    #[test]
    fn partition_validation() {
        assert!(ModePartition::new(vec![0], vec![1], 2).is_ok());
        assert!(ModePartition::new(vec![0], vec![0], 2).is_err());
        assert!(ModePartition::new(vec![0], vec![], 1).is_err());
        assert!(ModePartition::new(vec![0], vec![2], 3).is_err());
        assert_eq!(ModePartition::two_mode(1).swapped(), ModePartition::two_mode(0));
    }
}
