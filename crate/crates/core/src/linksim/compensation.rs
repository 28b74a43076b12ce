//! Reference-laser polarization compensation.
//!
//! The receiver measures the linearly polarized reference beam and rotates
//! the quantum channel back by its estimate of the channel rotation. The
//! polarimeter reading carries Gaussian noise that is refreshed at the
//! sampling rate, so the residual rotation seen by signal photons is a
//! piecewise-constant noise trace (identically zero for a noiseless sensor).

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::photonics::RotationProfile;

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRotation {
    start_s: f64,
    sample_rate_hz: f64,
    /// Estimate error of each polarimeter sample, degrees.
    noise_deg: Vec<f64>,
}

impl ResidualRotation {
    pub fn zero() -> Self {
        Self { start_s: 0.0, sample_rate_hz: 1.0, noise_deg: Vec::new() }
    }

    /// Constant residual, mainly for tests and calibration offsets.
    pub fn constant(start_s: f64, end_s: f64, residual_deg: f64) -> Self {
        let n = (end_s - start_s).max(0.0).ceil() as usize + 1;
        Self { start_s, sample_rate_hz: 1.0, noise_deg: vec![-residual_deg; n] }
    }

    fn sample(&self, t_s: f64) -> f64 {
        if self.noise_deg.is_empty() {
            return 0.0;
        }
        let k = ((t_s - self.start_s) * self.sample_rate_hz).floor().max(0.0) as usize;
        self.noise_deg[k.min(self.noise_deg.len() - 1)]
    }

    /// Channel rotation estimate the compensator applies at `t_s`.
    pub fn estimate_deg(&self, rotation: &RotationProfile, t_s: f64) -> f64 {
        rotation.angle_deg(t_s) + self.sample(t_s)
    }

    /// Residual rotation true minus estimated, degrees.
    pub fn residual_deg(&self, t_s: f64) -> f64 {
        -self.sample(t_s)
    }
}

/// Draws the compensation error trace over `[start_s, end_s]`.
pub fn reference_laser_compensation<R: Rng + ?Sized>(
    start_s: f64,
    end_s: f64,
    sample_rate_hz: f64,
    estimator_noise_sigma_deg: f64,
    rng: &mut R,
) -> ResidualRotation {
    if estimator_noise_sigma_deg <= 0.0 || end_s <= start_s {
        return ResidualRotation::zero();
    }
    let n = ((end_s - start_s) * sample_rate_hz).ceil() as usize + 1;
    let normal = Normal::new(0.0, estimator_noise_sigma_deg).expect("sigma is positive and finite");
    ResidualRotation { start_s, sample_rate_hz, noise_deg: (0..n).map(|_| normal.sample(rng)).collect() }
}
