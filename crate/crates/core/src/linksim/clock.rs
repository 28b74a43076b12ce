//! Local time standards.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

/// Affine clock with white timestamp jitter:
/// `local = t + offset + drift * t + N(0, jitter)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClockModel {
    pub offset_s: f64,
    pub drift: f64,
    pub jitter_s: f64,
}

impl ClockModel {
    pub const IDEAL: ClockModel = ClockModel { offset_s: 0.0, drift: 0.0, jitter_s: 0.0 };

    /// Deterministic part of the reading for true time `t_s`, seconds.
    pub fn local_s(&self, t_s: f64) -> f64 {
        t_s + self.offset_s + self.drift * t_s
    }

    /// Inverse of [`ClockModel::local_s`].
    pub fn true_s(&self, local_s: f64) -> f64 {
        (local_s - self.offset_s) / (1.0 + self.drift)
    }

    /// Quantized timestamp of an event at true time `t_s`.
    pub fn stamp<R: Rng + ?Sized>(&self, t_s: f64, rng: &mut R) -> i64 {
        let mut ns = self.local_s(t_s) * 1e9;
        if self.jitter_s > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            ns += z * self.jitter_s * 1e9;
        }
        ns.round() as i64
    }
}
