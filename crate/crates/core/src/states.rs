//! The probe-state family: an EPR pair from two squeezed modes, optional
//! photon subtraction on mode 1, uniform loss and a tunable beamsplitter.

use crate::error::{domain, Result};
use crate::gauss_poly::GaussPolyState;
use crate::phase_space::{beamsplitter, epr_covariance};

/// Mode from which the photon is subtracted.
pub const SUBTRACTED_MODE: usize = 1;

/// Parameters of a two-mode probe state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSpec {
    pub s1_db: f64,
    pub s2_db: f64,
    /// Second beamsplitter angle; reflectivity `cos θ`.
    pub theta: f64,
    /// Uniform loss on both modes, in `[0, 1]`.
    pub eta: f64,
    pub subtracted: bool,
}

impl StateSpec {
    pub fn gaussian(s_db: f64, eta: f64) -> Self {
        Self { s1_db: s_db, s2_db: s_db, theta: 0.0, eta, subtracted: false }
    }

    pub fn photon_subtracted(s1_db: f64, s2_db: f64, theta: f64, eta: f64) -> Self {
        Self { s1_db, s2_db, theta, eta, subtracted: true }
    }

    pub fn with_eta(self, eta: f64) -> Self {
        Self { eta, ..self }
    }

    /// Builds the Wigner function. Loss is applied to the Gaussian
    /// covariance before subtraction, which is equivalent for uniform loss.
    pub fn build(&self) -> Result<GaussPolyState> {
        if !(self.s1_db.is_finite() && self.s2_db.is_finite() && self.theta.is_finite()) {
            return domain("state parameters must be finite");
        }
        let v = epr_covariance(self.s1_db, self.s2_db).apply_loss(self.eta)?;
        let mut w = GaussPolyState::gaussian(&v)?;
        if self.subtracted {
            w = w.subtract_photon(SUBTRACTED_MODE)?;
        }
        if self.theta != 0.0 {
            w = w.transform(&beamsplitter(self.theta))?;
        }
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_commutes_with_subtraction() {
        use crate::phase_space::CovarianceMatrix;
        let eta = 0.3;
        let before = StateSpec::photon_subtracted(4.0, 3.0, 0.0, eta).build().unwrap();
        // subtract first, then mix the Wigner function with vacuum noise:
        // the lossy state's Gaussian factor is (1−η)V + η𝟙 either way
        let lossless = StateSpec::photon_subtracted(4.0, 3.0, 0.0, 0.0).build().unwrap();
        let expected = CovarianceMatrix::new(lossless.cov().clone()).unwrap().apply_loss(eta).unwrap();
        assert!((before.cov() - expected.matrix()).amax() < 1e-12);
        assert!(
            (before.moments().1 - (lossless.moments().1 * (1.0 - eta) + nalgebra::DMatrix::identity(4, 4) * eta))
                .amax()
                < 1e-12
        );
    }
}
