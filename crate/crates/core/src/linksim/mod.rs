//! Timestamped detection streams for the three downlink experiments.

mod clock;
mod compensation;
mod event;
mod sim;
mod terminal;

pub use clock::ClockModel;
pub use compensation::{reference_laser_compensation, ResidualRotation};
pub use event::{Channel, DetectionEvent, EventLog, EventLogError, Terminal, CSV_HEADER};
pub use sim::{
    propagation_delay, run_dual_downlink, run_single_downlink, DualDownlinkRun, RangingRecord, SimError,
    SingleDownlinkRun,
};
pub use terminal::{advance_terminal, quantum_interval, window_trace, TerminalMode, TerminalState};

use serde::Serialize;

use crate::geometry::{CircularOrbit, GroundStation};
use crate::photonics::{Basis, ChannelModel, PairSourceModel, DEFAULT_COINCIDENCE_WINDOW_S};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Experiment {
    /// One photon detected on board, its partner sent to one station.
    Exp1,
    /// Two single-station sessions joined by an XOR key relay.
    Exp2,
    /// Both photons sent to two stations simultaneously.
    Exp3,
}

impl Experiment {
    pub fn label(self) -> &'static str {
        match self {
            Experiment::Exp1 => "exp1",
            Experiment::Exp2 => "exp2",
            Experiment::Exp3 => "exp3",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "exp1" => Some(Experiment::Exp1),
            "exp2" => Some(Experiment::Exp2),
            "exp3" => Some(Experiment::Exp3),
            _ => None,
        }
    }

    pub fn station_count(self) -> usize {
        match self {
            Experiment::Exp1 => 1,
            Experiment::Exp2 | Experiment::Exp3 => 2,
        }
    }
}

/// On-board polarization analysis used in single-downlink mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransmitterModel {
    pub detection_loss_db: f64,
    pub background_rate: f64,
}

impl Default for TransmitterModel {
    fn default() -> Self {
        Self { detection_loss_db: 6.5, background_rate: 0.0 }
    }
}

/// How receiver clocks are drawn for a run. Offsets and drifts are uniform
/// in `±offset_range_s` and `±drift`; the transmitter clock is the time
/// reference and only carries jitter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClockSettings {
    pub offset_range_s: f64,
    pub drift: f64,
    pub jitter_s: f64,
}

impl Default for ClockSettings {
    fn default() -> Self {
        Self { offset_range_s: 1e-3, drift: 1e-9, jitter_s: 0.35e-9 }
    }
}

/// Bases each side picks from, uniformly and independently per detection.
/// Side `a` is the transmitter in single-downlink mode and receiver A
/// otherwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisSchedule {
    pub a: Vec<Basis>,
    pub b: Vec<Basis>,
}

impl BasisSchedule {
    pub fn key_bases() -> Self {
        Self { a: vec![Basis::Hv, Basis::Da], b: vec![Basis::Hv, Basis::Da] }
    }

    /// Both sides also rotate by 22.5 degrees at random.
    pub fn with_random_rotation() -> Self {
        Self { a: Basis::ALL.to_vec(), b: Basis::ALL.to_vec() }
    }

    /// Side `a` fixed to the key bases, side `b` to the rotated ones.
    pub fn one_side_rotated() -> Self {
        Self { a: vec![Basis::Hv, Basis::Da], b: vec![Basis::HvRotated, Basis::DaRotated] }
    }

    pub fn fixed(a: Basis, b: Basis) -> Self {
        Self { a: vec![a], b: vec![b] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum WindowSelection {
    /// `pat + duration_s` seconds centred on the longest predicted pass.
    Centered { duration_s: f64 },
    /// The longest predicted pass as is.
    Predicted,
    /// A fixed interval of simulation time.
    Explicit { start_s: f64, end_s: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub orbit: CircularOrbit,
    pub stations: Vec<GroundStation>,
    pub source: PairSourceModel,
    pub transmitter: TransmitterModel,
    pub channel_a: ChannelModel,
    pub channel_b: ChannelModel,
    pub clocks: ClockSettings,
    pub schedule: BasisSchedule,
    pub window: WindowSelection,
    pub pat_acquisition_s: f64,
    pub coincidence_window_s: f64,
    pub ranging_rate_hz: f64,
    pub compensation_rate_hz: f64,
    pub qber_sample_fraction: f64,
    pub min_elevation_deg: f64,
    pub search_horizon_s: f64,
}

impl ScenarioConfig {
    /// Defaults for `experiment` with the given stations.
    pub fn new(experiment: Experiment, stations: Vec<GroundStation>) -> Self {
        let schedule = match experiment {
            Experiment::Exp1 | Experiment::Exp2 => BasisSchedule::key_bases(),
            Experiment::Exp3 => BasisSchedule::with_random_rotation(),
        };
        Self {
            experiment,
            seed: 1,
            orbit: CircularOrbit::default(),
            stations,
            source: PairSourceModel::default(),
            transmitter: TransmitterModel::default(),
            channel_a: ChannelModel::default(),
            channel_b: ChannelModel::default(),
            clocks: ClockSettings::default(),
            schedule,
            window: WindowSelection::Centered { duration_s: 300.0 },
            pat_acquisition_s: 10.0,
            coincidence_window_s: DEFAULT_COINCIDENCE_WINDOW_S,
            ranging_rate_hz: 1.0,
            compensation_rate_hz: 10.0,
            qber_sample_fraction: 0.1,
            min_elevation_deg: 10.0,
            search_horizon_s: 2.0 * 86_400.0,
        }
    }

    /// Every violated constraint, one message per field.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.stations.len() != self.experiment.station_count() {
            v.push(format!(
                "stations: {} needs {} station(s), got {}",
                self.experiment.label(),
                self.experiment.station_count(),
                self.stations.len()
            ));
        }
        if let Err(e) = self.orbit.validate() {
            v.push(format!("orbit: {e}"));
        }
        for s in &self.stations {
            if let Err(e) = s.validate() {
                v.push(format!("stations: {e}"));
            }
        }
        if let Err(e) = self.source.validate() {
            v.push(format!("source: {e}"));
        }
        if !(self.transmitter.detection_loss_db >= 0.0) {
            v.push(format!("source.local_detection_loss_db: negative loss {}", self.transmitter.detection_loss_db));
        }
        if !(self.transmitter.background_rate >= 0.0) {
            v.push(format!("source.local_background_rate: negative rate {}", self.transmitter.background_rate));
        }
        for (name, ch) in [("channel_a", &self.channel_a), ("channel_b", &self.channel_b)] {
            if let Err(e) = ch.validate() {
                v.push(format!("{name}: {e}"));
            }
            if !(ch.rotation.period_s > 0.0) {
                v.push(format!("{name}.rotation_period_s: must be positive"));
            }
        }
        if !(self.clocks.offset_range_s >= 0.0) {
            v.push("clocks.offset_range_s: must be non-negative".into());
        }
        if !(self.clocks.drift >= 0.0 && self.clocks.drift < 1e-3) {
            v.push("clocks.drift: must be in [0, 1e-3)".into());
        }
        if !(self.clocks.jitter_s >= 0.0) {
            v.push("clocks.jitter_s: must be non-negative".into());
        }
        if self.schedule.a.is_empty() || self.schedule.b.is_empty() {
            v.push("protocol.bases: each side needs at least one basis".into());
        }
        if !(self.pat_acquisition_s >= 0.0) {
            v.push("protocol.pat_acquisition_s: must be non-negative".into());
        }
        if !(self.coincidence_window_s > 0.0) {
            v.push("protocol.coincidence_window_ns: must be positive".into());
        }
        if !(self.ranging_rate_hz > 0.0) {
            v.push("clocks.ranging_rate_hz: must be positive".into());
        }
        if !(self.compensation_rate_hz > 0.0) {
            v.push("clocks.compensation_rate_hz: must be positive".into());
        }
        if !(self.qber_sample_fraction > 0.0 && self.qber_sample_fraction <= 1.0) {
            v.push("protocol.qber_sample_fraction: must be in (0, 1]".into());
        }
        if !(0.0..90.0).contains(&self.min_elevation_deg) {
            v.push("scenario.min_elevation_deg: must be in [0, 90)".into());
        }
        if !(self.search_horizon_s > 0.0) {
            v.push("scenario.horizon_s: must be positive".into());
        }
        match self.window {
            WindowSelection::Centered { duration_s } if !(duration_s > 0.0) => {
                v.push("scenario.duration_s: must be positive".into());
            }
            WindowSelection::Explicit { start_s, end_s }
                if !(start_s >= 0.0 && end_s > start_s && end_s <= self.search_horizon_s) =>
            {
                v.push(format!(
                    "scenario.window: [{start_s}, {end_s}] is not a non-empty interval inside the horizon [0, {}]",
                    self.search_horizon_s
                ));
            }
            _ => {}
        }
        v
    }
}
