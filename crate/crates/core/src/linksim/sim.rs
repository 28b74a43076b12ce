//! Survivor-thinned event generation.
//!
//! Instead of drawing every emitted pair and thinning it through the link,
//! detections are generated directly as a superposition of Poisson processes:
//! pairs seen on both arms, pairs seen on one arm only, and per-arm
//! background. The emission process is walked in time order with exponential
//! gaps, so the work is proportional to the number of detections and the
//! per-arm streams come out already sorted apart from timing jitter.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;
use thiserror::Error;

use super::clock::ClockModel;
use super::compensation::{reference_laser_compensation, ResidualRotation};
use super::event::{Channel, DetectionEvent, EventLog, Terminal};
use super::terminal::{quantum_interval, window_trace, TerminalState};
use super::{Experiment, ScenarioConfig};
use crate::geometry::{elevation_and_range, CircularOrbit, GroundStation, LinkWindow, SPEED_OF_LIGHT_KM_S};
use crate::photonics::{db_to_transmittance, sample_pair, Basis, ChannelModel, PairSourceModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("{operation} is not defined for {experiment:?}")]
    WrongExperiment { operation: &'static str, experiment: Experiment },
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),
    #[error("station index {0} out of range")]
    Station(usize),
    #[error("slant range must be positive, got {0} km")]
    SlantRange(f64),
}

/// One-way light time over `slant_range_km`, seconds.
pub fn propagation_delay(slant_range_km: f64) -> Result<f64, SimError> {
    if !(slant_range_km > 0.0) {
        return Err(SimError::SlantRange(slant_range_km));
    }
    Ok(slant_range_km / SPEED_OF_LIGHT_KM_S)
}

/// Reference-laser pulses: emission times on the transmitter clock and
/// arrival timestamps on the receiver clock.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RangingRecord {
    pub emissions_s: Vec<f64>,
    pub arrivals_ns: Vec<i64>,
}

#[derive(Debug, Clone)]
pub struct SingleDownlinkRun {
    pub trace: Vec<TerminalState>,
    pub transmitter: EventLog,
    pub receiver: EventLog,
    pub ranging: RangingRecord,
    /// Drawn receiver clock (diagnostic truth).
    pub receiver_clock: ClockModel,
    /// Positions `(transmitter, receiver)` of detections from the same pair
    /// (diagnostic truth).
    pub true_pairs: Vec<(usize, usize)>,
}

impl SingleDownlinkRun {
    pub fn quantum_interval(&self) -> Option<(f64, f64)> {
        quantum_interval(&self.trace)
    }
}

#[derive(Debug, Clone)]
pub struct DualDownlinkRun {
    pub trace: Vec<TerminalState>,
    pub receiver_a: EventLog,
    pub receiver_b: EventLog,
    pub ranging_a: RangingRecord,
    pub ranging_b: RangingRecord,
    pub clock_a: ClockModel,
    pub clock_b: ClockModel,
    pub true_pairs: Vec<(usize, usize)>,
}

impl DualDownlinkRun {
    pub fn quantum_interval(&self) -> Option<(f64, f64)> {
        quantum_interval(&self.trace)
    }
}

struct Arm<'a> {
    terminal: Terminal,
    transmittance: f64,
    background_rate: f64,
    clock: ClockModel,
    link: Option<(&'a CircularOrbit, &'a GroundStation)>,
    residual: ResidualRotation,
    bases: &'a [Basis],
}

impl Arm<'_> {
    fn delay_s(&self, t: f64) -> f64 {
        self.link.map_or(0.0, |(orbit, station)| elevation_and_range(station, orbit, t).1 / SPEED_OF_LIGHT_KM_S)
    }

    fn event(&self, t_ns: i64, basis: Basis, outcome: bool, channel: Channel) -> DetectionEvent {
        DetectionEvent { t_ns, terminal: self.terminal, basis, outcome, channel }
    }
}

const UNIT_31: f64 = 1.0 / (1u64 << 31) as f64;

fn pick(bases: &[Basis], bits: u32) -> Basis {
    bases[((bits as u64 * bases.len() as u64) >> 32) as usize]
}

/// Events of one arm in generation order plus the stream positions of its
/// paired detections, in pair order.
#[derive(Default)]
struct Stream {
    events: Vec<DetectionEvent>,
    paired: Vec<usize>,
}

fn generate_signal<R: Rng + ?Sized>(
    arms: [&Arm; 2],
    source: &PairSourceModel,
    (q0, q1): (f64, f64),
    rng: &mut R,
) -> [Stream; 2] {
    let mut out = [Stream::default(), Stream::default()];
    let (ta, tb) = (arms[0].transmittance, arms[1].transmittance);
    let p_both = ta * tb;
    let p_a = ta * (1.0 - tb);
    let p_b = (1.0 - ta) * tb;
    let p_any = p_both + p_a + p_b;
    let lambda = source.pair_rate * p_any;
    if !(lambda > 0.0) || q1 <= q0 {
        return out;
    }
    let expected = lambda * (q1 - q0);
    out[0].events.reserve((expected * (p_both + p_a) / p_any * 1.01) as usize + 16);
    out[1].events.reserve((expected * (p_both + p_b) / p_any * 1.01) as usize + 16);

    let mut t = q0;
    loop {
        let gap: f64 = Exp1.sample(rng);
        t += gap / lambda;
        if t >= q1 {
            break;
        }
        // One draw decides the arm (top 31 bits), the outcome of an unpaired
        // detection (bit 32) and its basis (low 32 bits).
        let bits = rng.next_u64();
        let u = (bits >> 33) as f64 * UNIT_31 * p_any;
        if u < p_both {
            let bases = rng.next_u64();
            let ba = pick(arms[0].bases, bases as u32);
            let bb = pick(arms[1].bases, (bases >> 32) as u32);
            let (oa, ob) = sample_pair(
                rng,
                source,
                ba.setting_deg() - arms[0].residual.residual_deg(t),
                bb.setting_deg() - arms[1].residual.residual_deg(t),
            );
            for (k, (basis, outcome)) in [(ba, oa), (bb, ob)].into_iter().enumerate() {
                let arm = arms[k];
                let stamp = arm.clock.stamp(t + arm.delay_s(t), rng);
                out[k].paired.push(out[k].events.len());
                out[k].events.push(arm.event(stamp, basis, outcome, Channel::Signal));
            }
        } else {
            let k = if u < p_both + p_a { 0 } else { 1 };
            let arm = arms[k];
            let basis = pick(arm.bases, bits as u32);
            let outcome = bits >> 32 & 1 == 1;
            let stamp = arm.clock.stamp(t + arm.delay_s(t), rng);
            out[k].events.push(arm.event(stamp, basis, outcome, Channel::Signal));
        }
    }
    out
}

fn generate_background<R: Rng + ?Sized>(arm: &Arm, (q0, q1): (f64, f64), rng: &mut R) -> Vec<DetectionEvent> {
    let mut events = Vec::new();
    if !(arm.background_rate > 0.0) || q1 <= q0 {
        return events;
    }
    let mut t = q0;
    loop {
        let gap: f64 = Exp1.sample(rng);
        t += gap / arm.background_rate;
        if t >= q1 {
            break;
        }
        let bits = rng.next_u64();
        let stamp = arm.clock.stamp(t, rng);
        events.push(arm.event(stamp, pick(arm.bases, bits as u32), bits >> 63 == 1, Channel::Background));
    }
    events
}

/// Merges background into a signal stream by timestamp, keeping track of
/// where the paired detections end up.
fn merge(signal: Stream, background: Vec<DetectionEvent>) -> Stream {
    if background.is_empty() {
        return signal;
    }
    let mut events = Vec::with_capacity(signal.events.len() + background.len());
    let mut paired = Vec::with_capacity(signal.paired.len());
    let mut next_pair = signal.paired.iter().peekable();
    let mut bg = background.into_iter().peekable();
    for (i, ev) in signal.events.into_iter().enumerate() {
        while let Some(b) = bg.next_if(|b| b.t_ns < ev.t_ns) {
            events.push(b);
        }
        if next_pair.next_if(|&&p| p == i).is_some() {
            paired.push(events.len());
        }
        events.push(ev);
    }
    events.extend(bg);
    Stream { events, paired }
}

/// Restores timestamp order after jitter, moving tracked positions along.
fn repair_order(stream: &mut Stream) {
    let events = &mut stream.events;
    if events.windows(2).all(|w| w[0].t_ns <= w[1].t_ns) {
        return;
    }
    let mut slot_of: HashMap<usize, usize> = stream.paired.iter().enumerate().map(|(k, &p)| (p, k)).collect();
    for i in 1..events.len() {
        if events[i - 1].t_ns <= events[i].t_ns {
            continue;
        }
        let ev = events[i];
        let mut j = i;
        while j > 0 && events[j - 1].t_ns > ev.t_ns {
            j -= 1;
        }
        events.copy_within(j..i, j + 1);
        events[j] = ev;
        let moved = slot_of.remove(&i);
        for p in (j..i).rev() {
            if let Some(k) = slot_of.remove(&p) {
                slot_of.insert(p + 1, k);
            }
        }
        if let Some(k) = moved {
            slot_of.insert(j, k);
        }
    }
    for (p, k) in slot_of {
        stream.paired[k] = p;
    }
}

fn simulate<R: Rng + ?Sized>(
    arms: [&Arm; 2],
    source: &PairSourceModel,
    interval: Option<(f64, f64)>,
    rng: &mut R,
) -> ([EventLog; 2], Vec<(usize, usize)>) {
    let Some(interval) = interval else {
        return ([EventLog::default(), EventLog::default()], Vec::new());
    };
    let [sa, sb] = generate_signal(arms, source, interval, rng);
    let mut streams = [sa, sb].map(Some);
    let mut finished = Vec::with_capacity(2);
    for (k, slot) in streams.iter_mut().enumerate() {
        let signal = slot.take().expect("each stream consumed once");
        let background = generate_background(arms[k], interval, rng);
        let mut stream = merge(signal, background);
        repair_order(&mut stream);
        finished.push(stream);
    }
    let sb = finished.pop().expect("two streams");
    let sa = finished.pop().expect("two streams");
    let pairs = sa.paired.iter().copied().zip(sb.paired.iter().copied()).collect();
    ([EventLog::new(sa.events), EventLog::new(sb.events)], pairs)
}

fn draw_clock<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> ClockModel {
    let c = &cfg.clocks;
    let sym = |rng: &mut R, x: f64| if x > 0.0 { rng.random_range(-x..=x) } else { 0.0 };
    let offset_s = sym(rng, c.offset_range_s);
    let drift = sym(rng, c.drift);
    ClockModel { offset_s, drift, jitter_s: c.jitter_s }
}

fn ranging<R: Rng + ?Sized>(arm: &Arm, window: &LinkWindow, rate_hz: f64, rng: &mut R) -> RangingRecord {
    let mut rec = RangingRecord::default();
    let n = ((window.end_s - window.start_s) * rate_hz).floor() as usize;
    for k in 0..=n {
        let t = window.start_s + k as f64 / rate_hz;
        rec.emissions_s.push(t);
        rec.arrivals_ns.push(arm.clock.stamp(t + arm.delay_s(t), rng));
    }
    rec
}

fn check(cfg: &ScenarioConfig, operation: &'static str, allowed: &[Experiment]) -> Result<(), SimError> {
    if !allowed.contains(&cfg.experiment) {
        return Err(SimError::WrongExperiment { operation, experiment: cfg.experiment });
    }
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(SimError::InvalidConfig(v));
    }
    Ok(())
}

fn channel_for(cfg: &ScenarioConfig, station: usize) -> Result<(&GroundStation, &ChannelModel), SimError> {
    let s = cfg.stations.get(station).ok_or(SimError::Station(station))?;
    Ok((s, if station == 0 { &cfg.channel_a } else { &cfg.channel_b }))
}

fn receiver_arm<'a, R: Rng + ?Sized>(
    cfg: &'a ScenarioConfig,
    terminal: Terminal,
    station: usize,
    bases: &'a [Basis],
    (q0, q1): (f64, f64),
    rng: &mut R,
) -> Result<Arm<'a>, SimError> {
    let (site, channel) = channel_for(cfg, station)?;
    let clock = draw_clock(cfg, rng);
    let residual = reference_laser_compensation(q0, q1, cfg.compensation_rate_hz, channel.compensation_noise_deg, rng);
    Ok(Arm {
        terminal,
        transmittance: channel.transmittance(),
        background_rate: channel.background_rate,
        clock,
        link: Some((&cfg.orbit, site)),
        residual,
        bases,
    })
}

/// Single downlink: one photon analysed on board, its partner sent to
/// `station` (0 or 1; exp2 uses both in turn).
pub fn run_single_downlink<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    station: usize,
    window: &LinkWindow,
    rng: &mut R,
) -> Result<SingleDownlinkRun, SimError> {
    check(cfg, "single downlink", &[Experiment::Exp1, Experiment::Exp2])?;
    let trace = window_trace(window.start_s, window.end_s, cfg.pat_acquisition_s);
    let interval = quantum_interval(&trace);
    let span = interval.unwrap_or((window.start_s, window.start_s));
    let transmitter = Arm {
        terminal: Terminal::Transmitter,
        transmittance: db_to_transmittance(cfg.transmitter.detection_loss_db).unwrap_or(0.0),
        background_rate: cfg.transmitter.background_rate,
        clock: ClockModel { jitter_s: cfg.clocks.jitter_s, ..ClockModel::IDEAL },
        link: None,
        residual: ResidualRotation::zero(),
        bases: &cfg.schedule.a,
    };
    let terminal = if station == 0 { Terminal::ReceiverA } else { Terminal::ReceiverB };
    let receiver = receiver_arm(cfg, terminal, station, &cfg.schedule.b, span, rng)?;
    let ([tx, rx], true_pairs) = simulate([&transmitter, &receiver], &cfg.source, interval, rng);
    let ranging = ranging(&receiver, window, cfg.ranging_rate_hz, rng);
    Ok(SingleDownlinkRun { trace, transmitter: tx, receiver: rx, ranging, receiver_clock: receiver.clock, true_pairs })
}

/// Both photons of each pair sent to the two stations. Nothing is detected
/// on board.
pub fn run_dual_downlink<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    window: &LinkWindow,
    rng: &mut R,
) -> Result<DualDownlinkRun, SimError> {
    check(cfg, "dual downlink", &[Experiment::Exp3])?;
    let trace = window_trace(window.start_s, window.end_s, cfg.pat_acquisition_s);
    let interval = quantum_interval(&trace);
    let span = interval.unwrap_or((window.start_s, window.start_s));
    let arm_a = receiver_arm(cfg, Terminal::ReceiverA, 0, &cfg.schedule.a, span, rng)?;
    let arm_b = receiver_arm(cfg, Terminal::ReceiverB, 1, &cfg.schedule.b, span, rng)?;
    let ([a, b], true_pairs) = simulate([&arm_a, &arm_b], &cfg.source, interval, rng);
    let ranging_a = ranging(&arm_a, window, cfg.ranging_rate_hz, rng);
    let ranging_b = ranging(&arm_b, window, cfg.ranging_rate_hz, rng);
    Ok(DualDownlinkRun {
        trace,
        receiver_a: a,
        receiver_b: b,
        ranging_a,
        ranging_b,
        clock_a: arm_a.clock,
        clock_b: arm_b.clock,
        true_pairs,
    })
}
