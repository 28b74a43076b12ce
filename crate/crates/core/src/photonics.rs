//! Entangled-pair source model, polarization statistics and dB-chain rates.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

/// Full-width coincidence window, seconds. Gives the target
/// accidental figures (about 2/s downlink-to-transmitter, 2.5 per 100 s
/// between two receivers) under the product-of-singles model.
pub const DEFAULT_COINCIDENCE_WINDOW_S: f64 = 13.7e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhotonicsError {
    #[error("loss must be non-negative, got {0} dB")]
    NegativeLoss(f64),
    #[error("pair rate must be positive, got {0}")]
    PairRate(f64),
    #[error("visibility {0} outside [0, 1]")]
    Visibility(f64),
    #[error("rate must be non-negative, got {0}")]
    NegativeRate(f64),
    #[error("coincidence window must be non-negative, got {0} s")]
    Window(f64),
    #[error("error fraction undefined when both signal and accidental rates are zero")]
    NoCoincidences,
}

/// Bell state emitted by the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum StateFamily {
    /// Parallel polarizations: E(a, b) = V cos 2(a - b).
    #[default]
    PhiPlus,
    /// Orthogonal polarizations: E(a, b) = -V cos 2(a - b).
    PsiMinus,
}

impl StateFamily {
    pub fn sign(self) -> f64 {
        match self {
            StateFamily::PhiPlus => 1.0,
            StateFamily::PsiMinus => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            StateFamily::PhiPlus => "phi_plus",
            StateFamily::PsiMinus => "psi_minus",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "phi_plus" => Some(StateFamily::PhiPlus),
            "psi_minus" => Some(StateFamily::PsiMinus),
            _ => None,
        }
    }
}

/// Werner-like pair source: a Bell state mixed with white noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSourceModel {
    pub pair_rate: f64,
    pub state: StateFamily,
    pub visibility: f64,
}

impl Default for PairSourceModel {
    fn default() -> Self {
        Self { pair_rate: 500_000.0, state: StateFamily::PhiPlus, visibility: 1.0 }
    }
}

impl PairSourceModel {
    pub fn validate(&self) -> Result<(), PhotonicsError> {
        if !(self.pair_rate > 0.0 && self.pair_rate.is_finite()) {
            return Err(PhotonicsError::PairRate(self.pair_rate));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(PhotonicsError::Visibility(self.visibility));
        }
        Ok(())
    }
}

/// Slowly varying polarization rotation imposed by a free-space channel:
/// `amplitude * sin(2 pi t / period + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RotationProfile {
    pub amplitude_deg: f64,
    pub period_s: f64,
    pub phase_deg: f64,
}

impl Default for RotationProfile {
    fn default() -> Self {
        Self { amplitude_deg: 10.0, period_s: 100.0, phase_deg: 0.0 }
    }
}

impl RotationProfile {
    pub fn none() -> Self {
        Self { amplitude_deg: 0.0, ..Self::default() }
    }

    pub fn angle_deg(&self, t: f64) -> f64 {
        if self.amplitude_deg == 0.0 {
            return 0.0;
        }
        let arg = std::f64::consts::TAU * t / self.period_s + self.phase_deg.to_radians();
        self.amplitude_deg * arg.sin()
    }
}

/// One free-space downlink plus its receiver. The propagation delay is not
/// stored: it follows from the slant range along the pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelModel {
    pub attenuation_db: f64,
    pub detection_loss_db: f64,
    /// Aggregate stray-light plus dark-count rate at the receiver, 1/s.
    pub background_rate: f64,
    pub rotation: RotationProfile,
    /// Per-sample noise of the reference-laser rotation estimate, degrees.
    pub compensation_noise_deg: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            attenuation_db: 25.0,
            detection_loss_db: 6.5,
            background_rate: 1000.0,
            rotation: RotationProfile::default(),
            compensation_noise_deg: 0.5,
        }
    }
}

impl ChannelModel {
    pub fn total_loss_db(&self) -> f64 {
        self.attenuation_db + self.detection_loss_db
    }

    pub fn transmittance(&self) -> f64 {
        // Validated losses are non-negative, so the conversion cannot fail.
        db_to_transmittance(self.total_loss_db()).unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), PhotonicsError> {
        for loss in [self.attenuation_db, self.detection_loss_db] {
            if !(loss >= 0.0) {
                return Err(PhotonicsError::NegativeLoss(loss));
            }
        }
        if !(self.background_rate >= 0.0 && self.background_rate.is_finite()) {
            return Err(PhotonicsError::NegativeRate(self.background_rate));
        }
        if !(self.compensation_noise_deg >= 0.0) {
            return Err(PhotonicsError::NegativeRate(self.compensation_noise_deg));
        }
        Ok(())
    }
}

/// Analyzer basis: a pair of orthogonal polarizer angles. The first angle is
/// the setting used in correlation functions; outcome `false` means the photon
/// was found along it, `true` along the orthogonal angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Basis {
    /// {0, 90}
    Hv,
    /// {45, 135}
    Da,
    /// {22.5, 112.5}
    HvRotated,
    /// {67.5, 157.5}
    DaRotated,
}

impl Basis {
    pub const ALL: [Basis; 4] = [Basis::Hv, Basis::Da, Basis::HvRotated, Basis::DaRotated];

    pub fn angles_deg(self) -> [f64; 2] {
        match self {
            Basis::Hv => [0.0, 90.0],
            Basis::Da => [45.0, 135.0],
            Basis::HvRotated => [22.5, 112.5],
            Basis::DaRotated => [67.5, 157.5],
        }
    }

    pub fn setting_deg(self) -> f64 {
        self.angles_deg()[0]
    }

    /// Angle of the polarizer that registered `outcome`.
    pub fn analyzer_angle_deg(self, outcome: bool) -> f64 {
        self.angles_deg()[outcome as usize]
    }

    pub fn label(self) -> &'static str {
        match self {
            Basis::Hv => "hv",
            Basis::Da => "da",
            Basis::HvRotated => "hv22",
            Basis::DaRotated => "da22",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Basis::ALL.into_iter().find(|b| b.label() == s)
    }

    /// The same basis with the 22.5 degree offset applied (or removed).
    pub fn rotated(self) -> Self {
        match self {
            Basis::Hv => Basis::HvRotated,
            Basis::Da => Basis::DaRotated,
            Basis::HvRotated => Basis::Hv,
            Basis::DaRotated => Basis::Da,
        }
    }
}

/// 10^(-loss/10). Infinite loss blocks the channel completely.
pub fn db_to_transmittance(loss_db: f64) -> Result<f64, PhotonicsError> {
    if !(loss_db >= 0.0) {
        return Err(PhotonicsError::NegativeLoss(loss_db));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Polarization correlation E(a, b) for analyzer settings in degrees.
pub fn correlation(source: &PairSourceModel, a_deg: f64, b_deg: f64) -> f64 {
    source.state.sign() * source.visibility * (2.0 * (a_deg - b_deg).to_radians()).cos()
}

/// Joint outcome probabilities `[P(++), P(+-), P(-+), P(--)]`, where `+` is
/// outcome `false` (photon along the setting angle).
pub fn joint_outcome_probabilities(source: &PairSourceModel, a_deg: f64, b_deg: f64) -> [f64; 4] {
    let e = correlation(source, a_deg, b_deg);
    let same = (1.0 + e) / 4.0;
    let diff = (1.0 - e) / 4.0;
    [same, diff, diff, same]
}

/// Draws one joint outcome from `joint_outcome_probabilities`.
pub fn sample_pair<R: Rng + ?Sized>(rng: &mut R, source: &PairSourceModel, a_deg: f64, b_deg: f64) -> (bool, bool) {
    let e = correlation(source, a_deg, b_deg);
    let a = rng.random::<bool>();
    // Marginals are uniform; B agrees with A with probability (1 + E) / 2.
    let agree = rng.random::<f64>() < (1.0 + e) / 2.0;
    (a, if agree { a } else { !a })
}

/// Detected single-photon rate after `total_loss_db`.
pub fn singles_rate(pair_rate: f64, total_loss_db: f64) -> Result<f64, PhotonicsError> {
    Ok(pair_rate * db_to_transmittance(total_loss_db)?)
}

/// Rate of pairs with both photons detected.
pub fn coincidence_rate(pair_rate: f64, loss_a_db: f64, loss_b_db: f64) -> Result<f64, PhotonicsError> {
    Ok(pair_rate * db_to_transmittance(loss_a_db)? * db_to_transmittance(loss_b_db)?)
}

/// Uncorrelated coincidences between two independent streams for a
/// full-width window.
pub fn accidental_rate(singles_a: f64, singles_b: f64, window_s: f64) -> Result<f64, PhotonicsError> {
    if !(window_s >= 0.0) {
        return Err(PhotonicsError::Window(window_s));
    }
    for r in [singles_a, singles_b] {
        if !(r >= 0.0) {
            return Err(PhotonicsError::NegativeRate(r));
        }
    }
    Ok(singles_a * singles_b * window_s)
}

/// Expected error ratio: erroneous coincidences (every accidental plus the
/// depolarized share `1 - V` of true pairs) per correct true-pair
/// coincidence.
///
/// This is the convention behind the link-budget figures 2/80 = 2.5% and
/// 0.025/0.25 = 10%. A random outcome only disagrees half of the time, so the
/// raw-key mismatch rate `m` is smaller (see [`expected_mismatch_rate`]); the
/// two are related by `ratio = 2m / (1 - 2m)`, which is how
/// [`mismatch_to_error_ratio`] recovers this quantity from data.
pub fn expected_qber(signal_rate: f64, accidental_rate: f64, visibility: f64) -> Result<f64, PhotonicsError> {
    check_rates(signal_rate, accidental_rate, visibility)?;
    let correct = signal_rate * visibility;
    if correct == 0.0 {
        return Err(PhotonicsError::NoCoincidences);
    }
    Ok((accidental_rate + signal_rate * (1.0 - visibility)) / correct)
}

/// Expected disagreement rate of sifted key bits.
pub fn expected_mismatch_rate(signal_rate: f64, accidental_rate: f64, visibility: f64) -> Result<f64, PhotonicsError> {
    check_rates(signal_rate, accidental_rate, visibility)?;
    let total = signal_rate + accidental_rate;
    if total == 0.0 {
        return Err(PhotonicsError::NoCoincidences);
    }
    Ok((accidental_rate / 2.0 + signal_rate * (1.0 - visibility) / 2.0) / total)
}

/// Converts a measured key mismatch rate into the error ratio reported by
/// [`expected_qber`]. Saturates at infinity for `m >= 0.5`.
pub fn mismatch_to_error_ratio(mismatch: f64) -> f64 {
    if mismatch >= 0.5 {
        f64::INFINITY
    } else {
        2.0 * mismatch / (1.0 - 2.0 * mismatch)
    }
}

fn check_rates(signal_rate: f64, accidental_rate: f64, visibility: f64) -> Result<(), PhotonicsError> {
    for r in [signal_rate, accidental_rate] {
        if !(r >= 0.0) {
            return Err(PhotonicsError::NegativeRate(r));
        }
    }
    if !(0.0..=1.0).contains(&visibility) {
        return Err(PhotonicsError::Visibility(visibility));
    }
    Ok(())
}
