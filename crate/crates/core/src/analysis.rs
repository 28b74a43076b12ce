//! Stand-alone physics calculators: Bell statistics, light-cone checks and
//! interferometric sensitivity estimates.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::SPEED_OF_LIGHT_KM_S;
use crate::photonics::Basis;

/// Newtonian constant of gravitation, m³ kg⁻¹ s⁻².
pub const GRAVITATIONAL_CONSTANT: f64 = 6.674_30e-11;
/// Speed of light, m/s.
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;
pub const SECONDS_PER_YEAR: f64 = 365.25 * 86_400.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("setting pair {0} has no counts")]
    EmptySettingPair(usize),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("photon number must be at least 1, got {0}")]
    PhotonNumber(f64),
    #[error("path must be closed (first point equal to last)")]
    OpenPath,
    #[error("path has {points} points but the field has {samples} samples")]
    FieldLength { points: usize, samples: usize },
    #[error("path needs at least 3 points, got {0}")]
    ShortPath(usize),
    #[error("boost speed must be below c, got {0} c")]
    Superluminal(f64),
    #[error("scaling exponent must be 0.5 or 1, got {0}")]
    Exponent(f64),
}

fn positive(name: &'static str, value: f64) -> Result<f64, AnalysisError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(AnalysisError::NonPositive { name, value })
    }
}

/// Setting pairs of the CHSH combination, side `a` then side `b`.
pub const CHSH_SETTINGS: [(Basis, Basis); 4] = [
    (Basis::Hv, Basis::HvRotated),
    (Basis::Hv, Basis::DaRotated),
    (Basis::Da, Basis::HvRotated),
    (Basis::Da, Basis::DaRotated),
];
/// Sign of each correlation in `S`; maximal for the phi-plus state.
pub const CHSH_SIGNS: [f64; 4] = [1.0, -1.0, 1.0, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChshResult {
    pub correlations: [f64; 4],
    pub counts: [u64; 4],
    pub s: f64,
    pub sigma_s: f64,
}

/// CHSH statistic from joint outcome counts.
///
/// `counts[k]` holds `[++, +-, -+, --]` for setting pair `k` of
/// [`CHSH_SETTINGS`].
pub fn chsh_from_counts(counts: &[[u64; 4]; 4]) -> Result<ChshResult, AnalysisError> {
    let mut correlations = [0.0; 4];
    let mut totals = [0u64; 4];
    let mut variance = 0.0;
    for (k, c) in counts.iter().enumerate() {
        let n: u64 = c.iter().sum();
        if n == 0 {
            return Err(AnalysisError::EmptySettingPair(k));
        }
        let e = (c[0] as f64 + c[3] as f64 - c[1] as f64 - c[2] as f64) / n as f64;
        correlations[k] = e;
        totals[k] = n;
        variance += (1.0 - e * e) / n as f64;
    }
    let s = correlations.iter().zip(CHSH_SIGNS).map(|(e, sign)| sign * e).sum();
    Ok(ChshResult { correlations, counts: totals, s, sigma_s: variance.sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpacetimeEvent {
    pub position_km: [f64; 3],
    pub time_s: f64,
}

impl SpacetimeEvent {
    pub fn new(position_km: [f64; 3], time_s: f64) -> Result<Self, AnalysisError> {
        for v in position_km.into_iter().chain([time_s]) {
            if !v.is_finite() {
                return Err(AnalysisError::NonFinite { name: "coordinate", value: v });
            }
        }
        Ok(Self { position_km, time_s })
    }
}

fn distance_km(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Squared interval `c²Δt² − |Δx|²`, km². Negative for space-like pairs.
pub fn interval_km2(e1: &SpacetimeEvent, e2: &SpacetimeEvent) -> f64 {
    let ct = SPEED_OF_LIGHT_KM_S * (e1.time_s - e2.time_s);
    ct * ct - distance_km(&e1.position_km, &e2.position_km).powi(2)
}

/// Strictly outside each other's light cone; light-like pairs are not.
pub fn spacelike_separated(e1: &SpacetimeEvent, e2: &SpacetimeEvent) -> bool {
    distance_km(&e1.position_km, &e2.position_km) > SPEED_OF_LIGHT_KM_S * (e1.time_s - e2.time_s).abs()
}

/// Coordinates of `event` in a frame moving with `velocity_c` (fraction of
/// c) relative to the current one.
pub fn lorentz_boost(event: &SpacetimeEvent, velocity_c: [f64; 3]) -> Result<SpacetimeEvent, AnalysisError> {
    let beta2: f64 = velocity_c.iter().map(|v| v * v).sum();
    if !(beta2 < 1.0) {
        return Err(AnalysisError::Superluminal(beta2.sqrt()));
    }
    if beta2 == 0.0 {
        return Ok(*event);
    }
    let gamma = 1.0 / (1.0 - beta2).sqrt();
    let ct = SPEED_OF_LIGHT_KM_S * event.time_s;
    let x = event.position_km;
    let bx: f64 = velocity_c.iter().zip(&x).map(|(b, xi)| b * xi).sum();
    let ct2 = gamma * (ct - bx);
    let k = (gamma - 1.0) * bx / beta2 - gamma * ct;
    let position_km = [x[0] + k * velocity_c[0], x[1] + k * velocity_c[1], x[2] + k * velocity_c[2]];
    Ok(SpacetimeEvent { position_km, time_s: ct2 / SPEED_OF_LIGHT_KM_S })
}

/// Separation needed for two observers equidistant from a source to each
/// take `decision_time_s` to choose a setting without either choice being
/// able to influence the other's detection.
pub fn min_separation_for_free_choice(decision_time_s: f64) -> Result<f64, AnalysisError> {
    if !(decision_time_s >= 0.0 && decision_time_s.is_finite()) {
        return Err(AnalysisError::NonPositive { name: "decision time", value: decision_time_s });
    }
    Ok(2.0 * SPEED_OF_LIGHT_KM_S * decision_time_s)
}

/// Lower bound on a hypothetical collapse speed, in multiples of c: the
/// speed a signal would need to link two detections `separation_km` apart
/// that are simultaneous to within `time_alignment_s`.
pub fn collapse_speed_lower_bound(separation_km: f64, time_alignment_s: f64) -> Result<f64, AnalysisError> {
    positive("separation", separation_km)?;
    positive("time alignment uncertainty", time_alignment_s)?;
    Ok(separation_km / time_alignment_s / SPEED_OF_LIGHT_KM_S)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PhaseRegime {
    /// Independent photons, shot-noise limited.
    Standard,
    /// N-photon entangled states, Heisenberg limited.
    Entangled,
}

/// Smallest resolvable phase with `n_photons`, radians.
pub fn phase_sensitivity(n_photons: f64, regime: PhaseRegime) -> Result<f64, AnalysisError> {
    if !(n_photons >= 1.0 && n_photons.is_finite()) {
        return Err(AnalysisError::PhotonNumber(n_photons));
    }
    Ok(match regime {
        PhaseRegime::Standard => 1.0 / n_photons.sqrt(),
        PhaseRegime::Entangled => 1.0 / n_photons,
    })
}

/// Phase difference of counter-propagating beams around a closed loop in a
/// weak gravitomagnetic field, radians.
///
/// `path_m` lists loop vertices in metres with the first repeated at the
/// end; `field` holds the dimensionless off-diagonal metric perturbation at
/// each vertex. The loop integral uses the trapezoid rule on each segment.
pub fn sagnac_phase(path_m: &[[f64; 3]], field: &[[f64; 3]], wavelength_m: f64) -> Result<f64, AnalysisError> {
    positive("wavelength", wavelength_m)?;
    if path_m.len() < 3 {
        return Err(AnalysisError::ShortPath(path_m.len()));
    }
    if path_m.len() != field.len() {
        return Err(AnalysisError::FieldLength { points: path_m.len(), samples: field.len() });
    }
    let first = path_m[0];
    let last = path_m[path_m.len() - 1];
    let scale = path_m.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    if distance_km(&first, &last) > 1e-12 * scale {
        return Err(AnalysisError::OpenPath);
    }
    let mut circulation = 0.0;
    for k in 0..path_m.len() - 1 {
        for i in 0..3 {
            circulation += 0.5 * (field[k][i] + field[k + 1][i]) * (path_m[k + 1][i] - path_m[k][i]);
        }
    }
    Ok(-4.0 * std::f64::consts::PI / wavelength_m * circulation)
}

/// Default number of loop samples for [`rotating_circle`].
pub const DEFAULT_LOOP_SAMPLES: usize = 4096;

/// Horizontal circular loop of `radius_m` with the field of a frame rotating
/// at `omega_rad_s` about the loop axis, sampled at `samples` vertices plus
/// the closing point.
pub fn rotating_circle(radius_m: f64, omega_rad_s: f64, samples: usize) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let samples = samples.max(3);
    let path: Vec<[f64; 3]> = (0..=samples)
        .map(|k| {
            let a = std::f64::consts::TAU * (k % samples) as f64 / samples as f64;
            [radius_m * a.cos(), radius_m * a.sin(), 0.0]
        })
        .collect();
    let field = path
        .iter()
        .map(|p| [-omega_rad_s * p[1] / SPEED_OF_LIGHT_M_S, omega_rad_s * p[0] / SPEED_OF_LIGHT_M_S, 0.0])
        .collect();
    (path, field)
}

/// Closed-form phase for a rigidly rotating loop of area `area_m2`.
pub fn sagnac_phase_rigid(area_m2: f64, omega_rad_s: f64, wavelength_m: f64) -> f64 {
    -(4.0 * std::f64::consts::PI / wavelength_m) * 2.0 * omega_rad_s * area_m2 / SPEED_OF_LIGHT_M_S
}

/// Rotation rate of a Gödel universe with mean density `density_kg_m3`.
pub fn godel_rotation_rate(density_kg_m3: f64) -> Result<f64, AnalysisError> {
    positive("mass density", density_kg_m3)?;
    Ok(2.0 * (std::f64::consts::PI * GRAVITATIONAL_CONSTANT * density_kg_m3).sqrt())
}

/// A rotation rate an interferometer might try to resolve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationTarget {
    pub name: String,
    pub omega_rad_s: f64,
    pub note: String,
}

impl RotationTarget {
    pub fn new(name: &str, omega_rad_s: f64, note: &str) -> Result<Self, AnalysisError> {
        positive("rotation rate", omega_rad_s)?;
        Ok(Self { name: name.into(), omega_rad_s, note: note.into() })
    }

    /// Cosmic rotation for a mean density of 2e-28 kg/m³.
    pub fn universe() -> Self {
        let omega = godel_rotation_rate(2e-28).expect("positive density");
        Self { name: "universe".into(), omega_rad_s: omega, note: "Godel rotation at 2e-28 kg/m3".into() }
    }

    /// Frame dragging near the Earth.
    pub fn lense_thirring() -> Self {
        Self { name: "lense-thirring".into(), omega_rad_s: 1e-14, note: "order of magnitude near Earth".into() }
    }
}

/// Time to reach resolution `target_omega` given a resolution
/// `baseline_sigma` after `baseline_time_s`, when the resolution improves as
/// `time^-exponent`.
pub fn integration_time(
    target_omega: f64,
    baseline_sigma: f64,
    baseline_time_s: f64,
    exponent: f64,
) -> Result<f64, AnalysisError> {
    positive("target rotation rate", target_omega)?;
    positive("baseline resolution", baseline_sigma)?;
    positive("baseline time", baseline_time_s)?;
    if exponent != 0.5 && exponent != 1.0 {
        return Err(AnalysisError::Exponent(exponent));
    }
    // No clamp at target >= baseline: a resolution already reached takes
    // proportionally less time, which keeps the result strictly monotone.
    Ok(baseline_time_s * (baseline_sigma / target_omega).powf(1.0 / exponent))
}
