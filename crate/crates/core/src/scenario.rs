//! End-to-end experiment runs: pick a pass, simulate it, correct and match
//! the logs, run the key protocol and compare every rate with its analytic
//! value.

use std::collections::HashMap;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::ChshResult;
use crate::geometry::{
    elevation_and_range, joint_windows, link_windows, GeometryError, GroundStation, LinkWindow, SPEED_OF_LIGHT_KM_S,
};
use crate::linksim::{
    run_dual_downlink, run_single_downlink, EventLog, Experiment, RangingRecord, ScenarioConfig, SimError,
    WindowSelection,
};
use crate::photonics::{
    accidental_rate, coincidence_rate, db_to_transmittance, expected_mismatch_rate, expected_qber,
    mismatch_to_error_ratio,
};
use crate::protocols::{
    bb84_sift, e91_session, recover_remote_key, xor_relay, KeyFile, KeyMaterial, MatchedRecord, Observation,
    ProtocolError, SecurityFlag,
};
use crate::rng::pass_rng;
use crate::timing::{
    correct_timestamps, estimate_clock, estimate_delay_by_ranging, match_coincidences, uncorrected, CorrectedLog,
    TimingError,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("no link window for {stations} within {horizon_s} s above {min_elevation_deg} deg")]
    NoWindow { stations: String, horizon_s: f64, min_elevation_deg: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("timing: {0}")]
    Timing(#[from] TimingError),
    #[error("protocol: {0}")]
    Protocol(#[from] ProtocolError),
}

/// Analytic and simulated value of one rate, per second.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub name: String,
    pub expected_per_s: f64,
    pub simulated_per_s: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowReport {
    pub stations: Vec<String>,
    pub start_s: f64,
    pub end_s: f64,
    pub max_elevation_deg: f64,
    /// Quantum-communication part of the window, after acquisition.
    pub quantum_start_s: Option<f64>,
    pub quantum_end_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChshReport {
    pub s: f64,
    pub sigma_s: f64,
    pub correlations: [f64; 4],
    pub counts: [u64; 4],
}

impl From<ChshResult> for ChshReport {
    fn from(r: ChshResult) -> Self {
        Self { s: r.s, sigma_s: r.sigma_s, correlations: r.correlations, counts: r.counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelayReport {
    pub broadcast_bits: usize,
    /// The remote key recovered from the broadcast equals the one held by
    /// the relay node.
    pub recovered_bit_exact: bool,
    /// Disagreement between the key station A recovers and station B's own
    /// key; no error correction is applied.
    pub end_to_end_mismatch: f64,
}

/// One simulated pass with its protocol outcome.
#[derive(Debug, Clone, Serialize)]
pub struct SessionReport {
    pub label: String,
    pub window: WindowReport,
    pub rates: Vec<RateRow>,
    pub matched_pairs: usize,
    pub sifted_fraction: f64,
    /// Key bits left after the disclosed sample was removed.
    pub key_length: usize,
    /// Share of disagreeing bits in the disclosed sample.
    pub mismatch_rate: f64,
    pub expected_mismatch_rate: f64,
    /// Erroneous per correct coincidence, from `mismatch_rate`.
    pub qber: f64,
    pub expected_qber: f64,
    pub security_flag: SecurityFlag,
    pub chsh: Option<ChshReport>,
    pub diagnostics: Diagnostics,
}

/// Quantities only a simulation can know, from the truth tags.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub true_pairs: usize,
    pub true_pairs_matched: usize,
    pub accidental_matches: usize,
    /// Share of true pairs whose corrected time difference is below 2 ns.
    pub true_pairs_within_2ns: f64,
    pub sifted_bits: usize,
    /// Disagreements over all sifted bits, before disclosure.
    pub sifted_errors: usize,
    pub events_out_of_profile: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario_id: String,
    pub experiment: Experiment,
    pub seed: u64,
    pub sessions: Vec<SessionReport>,
    pub relay: Option<RelayReport>,
    pub notes: Vec<String>,
    pub wall_clock_s: f64,
}

impl RunReport {
    /// Report with the wall-clock field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        Self { wall_clock_s: 0.0, ..self.clone() }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    /// `(file stem, log)` for every terminal.
    pub logs: Vec<(String, EventLog)>,
    /// `(file stem, key)`.
    pub keys: Vec<(String, KeyFile)>,
    pub broadcast: Option<Vec<bool>>,
}

fn window_for(cfg: &ScenarioConfig, stations: &[&GroundStation]) -> Result<LinkWindow, ScenarioError> {
    let names: Vec<String> = stations.iter().map(|s| s.name.clone()).collect();
    let weaker =
        |t: f64| stations.iter().map(|s| elevation_and_range(s, &cfg.orbit, t).0).fold(f64::INFINITY, f64::min);
    if let WindowSelection::Explicit { start_s, end_s } = cfg.window {
        let steps = ((end_s - start_s).ceil() as usize).max(1);
        let peak = (0..=steps)
            .map(|k| weaker(start_s + (end_s - start_s) * k as f64 / steps as f64))
            .fold(f64::NEG_INFINITY, f64::max);
        return Ok(LinkWindow {
            stations: names,
            start_s,
            end_s,
            max_elevation_deg: peak,
            delta_longitude_deg: f64::NAN,
        });
    }
    let candidates = match stations {
        [a] => link_windows(&cfg.orbit, a, cfg.min_elevation_deg, cfg.search_horizon_s)?,
        [a, b] => joint_windows(&cfg.orbit, a, b, cfg.min_elevation_deg, cfg.search_horizon_s)?,
        _ => unreachable!("one or two stations per link"),
    };
    let longest = candidates.into_iter().max_by(|x, y| x.duration_s().total_cmp(&y.duration_s())).ok_or_else(|| {
        ScenarioError::NoWindow {
            stations: names.join(" + "),
            horizon_s: cfg.search_horizon_s,
            min_elevation_deg: cfg.min_elevation_deg,
        }
    })?;
    Ok(match cfg.window {
        WindowSelection::Centered { duration_s } => {
            let mid = 0.5 * (longest.start_s + longest.end_s);
            let half = 0.5 * (duration_s + cfg.pat_acquisition_s);
            let start_s = (mid - half).max(0.0);
            LinkWindow { start_s, end_s: start_s + 2.0 * half, ..longest }
        }
        _ => longest,
    })
}

fn window_report(w: &LinkWindow, quantum: Option<(f64, f64)>) -> WindowReport {
    WindowReport {
        stations: w.stations.clone(),
        start_s: w.start_s,
        end_s: w.end_s,
        max_elevation_deg: w.max_elevation_deg,
        quantum_start_s: quantum.map(|q| q.0),
        quantum_end_s: quantum.map(|q| q.1),
    }
}

fn geometric_delay(cfg: &ScenarioConfig, station: &GroundStation) -> impl Fn(f64) -> f64 {
    let (station, orbit) = (station.clone(), cfg.orbit.clone());
    move |t| elevation_and_range(&station, &orbit, t).1 / SPEED_OF_LIGHT_KM_S
}

/// Maps a receiver log onto source emission time using only the ranging
/// pulses and the predicted orbit.
pub fn correct_receiver(
    cfg: &ScenarioConfig,
    station: &GroundStation,
    log: &EventLog,
    ranging: &RangingRecord,
) -> Result<CorrectedLog, ScenarioError> {
    let apparent = estimate_delay_by_ranging(&ranging.emissions_s, &ranging.arrivals_ns)?;
    let clock = estimate_clock(&ranging.emissions_s, &ranging.arrivals_ns, geometric_delay(cfg, station))?;
    let profile = apparent.without_clock(&clock);
    Ok(correct_timestamps(log, &profile, &clock))
}

struct Matched {
    records: Vec<MatchedRecord>,
    true_matched: usize,
    within_2ns: f64,
}

fn match_logs(
    cfg: &ScenarioConfig,
    a: (&EventLog, &CorrectedLog),
    b: (&EventLog, &CorrectedLog),
    true_pairs: &[(usize, usize)],
) -> Matched {
    let pairs = match_coincidences(&a.1.times_ns, &b.1.times_ns, cfg.coincidence_window_s * 1e9);
    let truth: HashMap<usize, usize> = true_pairs.iter().copied().collect();
    let true_matched = pairs.iter().filter(|p| truth.get(&p.a) == Some(&p.b)).count();
    let close = true_pairs.iter().filter(|&&(i, j)| (b.1.times_ns[j] - a.1.times_ns[i]).abs() < 2.0).count();
    let records = pairs
        .iter()
        .map(|p| MatchedRecord { a: Observation::from(&a.0.events[p.a]), b: Observation::from(&b.0.events[p.b]) })
        .collect();
    let within_2ns = if true_pairs.is_empty() { 1.0 } else { close as f64 / true_pairs.len() as f64 };
    Matched { records, true_matched, within_2ns }
}

fn rate(name: &str, expected: f64, count: usize, duration_s: f64) -> RateRow {
    RateRow {
        name: name.into(),
        expected_per_s: expected,
        simulated_per_s: if duration_s > 0.0 { count as f64 / duration_s } else { 0.0 },
        count,
    }
}

fn sifted_errors(key: &KeyMaterial) -> usize {
    key.bits.iter().zip(&key.partner_bits).filter(|(x, y)| x != y).count()
}

struct Session {
    report: SessionReport,
    key: KeyMaterial,
    logs: Vec<(String, EventLog)>,
}

/// Rates shared by both downlink modes: `singles` are the analytic rates of
/// the two logs, `signal` the rate of pairs seen on both.
struct Budget {
    singles: [f64; 2],
    signal: f64,
}

impl Budget {
    fn accidentals(&self, cfg: &ScenarioConfig) -> f64 {
        accidental_rate(self.singles[0], self.singles[1], cfg.coincidence_window_s).unwrap_or(f64::NAN)
    }
}

#[allow(clippy::too_many_arguments)]
fn finish_session<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    label: &str,
    window: WindowReport,
    logs: [(&str, &EventLog); 2],
    budget: Budget,
    matched: Matched,
    true_pairs: usize,
    out_of_profile: usize,
    rng: &mut R,
) -> Result<Session, ScenarioError> {
    let duration = match (window.quantum_start_s, window.quantum_end_s) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    let acc = budget.accidentals(cfg);
    let matched_n = matched.records.len();
    let rates = vec![
        rate(&format!("singles {}", logs[0].0), budget.singles[0], logs[0].1.len(), duration),
        rate(&format!("singles {}", logs[1].0), budget.singles[1], logs[1].1.len(), duration),
        rate("coincidences (true)", budget.signal, matched.true_matched, duration),
        rate("coincidences (accidental)", acc, matched_n - matched.true_matched, duration),
        rate("coincidences (matched)", budget.signal + acc, matched_n, duration),
    ];
    let v = cfg.source.visibility;
    let sifted = bb84_sift(&matched.records, cfg.source.state);
    let (sifted_bits, sifted_errors) = (sifted.len(), sifted_errors(&sifted));
    let (key_material, chsh) = match cfg.experiment {
        Experiment::Exp3 => {
            let (key, chsh) = e91_session(&matched.records, cfg.source.state, cfg.qber_sample_fraction, rng)?;
            (key, chsh.map(ChshReport::from))
        }
        _ => {
            let mut key = sifted;
            key.disclose_sample(cfg.qber_sample_fraction, rng)?;
            (key, None)
        }
    };
    let diagnostics = Diagnostics {
        true_pairs,
        true_pairs_matched: matched.true_matched,
        accidental_matches: matched_n - matched.true_matched,
        true_pairs_within_2ns: matched.within_2ns,
        sifted_bits,
        sifted_errors,
        events_out_of_profile: out_of_profile,
    };
    let report = SessionReport {
        label: label.into(),
        window,
        rates,
        matched_pairs: matched_n,
        sifted_fraction: key_material.sifted_fraction,
        key_length: key_material.len(),
        mismatch_rate: key_material.mismatch_rate,
        expected_mismatch_rate: expected_mismatch_rate(budget.signal, acc, v).unwrap_or(f64::NAN),
        qber: key_material.error_ratio(),
        expected_qber: expected_qber(budget.signal, acc, v).unwrap_or(f64::NAN),
        security_flag: key_material.security_flag,
        chsh,
        diagnostics,
    };
    Ok(Session { report, key: key_material, logs: Vec::new() })
}

fn single_session(cfg: &ScenarioConfig, station: usize, label: &str) -> Result<Session, ScenarioError> {
    let site = &cfg.stations[station];
    let window = window_for(cfg, &[site])?;
    let mut rng = pass_rng(cfg.seed, station as u64);
    let run = run_single_downlink(cfg, station, &window, &mut rng)?;
    let channel = if station == 0 { &cfg.channel_a } else { &cfg.channel_b };
    let tx = uncorrected(&run.transmitter);
    let rx = correct_receiver(cfg, site, &run.receiver, &run.ranging)?;
    let matched = match_logs(cfg, (&run.transmitter, &tx), (&run.receiver, &rx), &run.true_pairs);
    let r = cfg.source.pair_rate;
    let t_tx = db_to_transmittance(cfg.transmitter.detection_loss_db).unwrap_or(0.0);
    let t_rx = channel.transmittance();
    let budget = Budget {
        singles: [r * t_tx + cfg.transmitter.background_rate, r * t_rx + channel.background_rate],
        signal: coincidence_rate(r, cfg.transmitter.detection_loss_db, channel.total_loss_db()).unwrap_or(f64::NAN),
    };
    let rx_name = if station == 0 { "rxa" } else { "rxb" };
    let mut s = finish_session(
        cfg,
        label,
        window_report(&window, run.quantum_interval()),
        [("tx", &run.transmitter), (rx_name, &run.receiver)],
        budget,
        matched,
        run.true_pairs.len(),
        rx.out_of_span.len(),
        &mut rng,
    )?;
    s.logs = vec![(format!("{label}_tx"), run.transmitter), (format!("{label}_{rx_name}"), run.receiver)];
    Ok(s)
}

fn dual_session(cfg: &ScenarioConfig) -> Result<Session, ScenarioError> {
    let (sa, sb) = (&cfg.stations[0], &cfg.stations[1]);
    let window = window_for(cfg, &[sa, sb])?;
    let mut rng = pass_rng(cfg.seed, 0);
    let run = run_dual_downlink(cfg, &window, &mut rng)?;
    let ca = correct_receiver(cfg, sa, &run.receiver_a, &run.ranging_a)?;
    let cb = correct_receiver(cfg, sb, &run.receiver_b, &run.ranging_b)?;
    let matched = match_logs(cfg, (&run.receiver_a, &ca), (&run.receiver_b, &cb), &run.true_pairs);
    let r = cfg.source.pair_rate;
    let budget = Budget {
        singles: [
            r * cfg.channel_a.transmittance() + cfg.channel_a.background_rate,
            r * cfg.channel_b.transmittance() + cfg.channel_b.background_rate,
        ],
        signal: coincidence_rate(r, cfg.channel_a.total_loss_db(), cfg.channel_b.total_loss_db()).unwrap_or(f64::NAN),
    };
    let mut s = finish_session(
        cfg,
        "dual",
        window_report(&window, run.quantum_interval()),
        [("rxa", &run.receiver_a), ("rxb", &run.receiver_b)],
        budget,
        matched,
        run.true_pairs.len(),
        ca.out_of_span.len() + cb.out_of_span.len(),
        &mut rng,
    )?;
    s.logs = vec![("dual_rxa".into(), run.receiver_a), ("dual_rxb".into(), run.receiver_b)];
    Ok(s)
}

fn accumulation_note(session: &SessionReport, quoted: &str) -> String {
    let duration = match (session.window.quantum_start_s, session.window.quantum_end_s) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    let expected = session.rates.iter().find(|r| r.name == "coincidences (true)").map_or(0.0, |r| r.expected_per_s);
    format!(
        "reference pass totals ({quoted}) do not follow from the reference rates; this run reports rate x duration \
         instead: {:.1}/s x {:.0} s = {:.0} expected coincidences, {} matched",
        expected,
        duration,
        expected * duration,
        session.matched_pairs
    )
}

/// Runs the configured experiment end to end.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<RunOutput, ScenarioError> {
    let started = Instant::now();
    let problems = cfg.violations();
    if !problems.is_empty() {
        return Err(ScenarioError::Invalid(problems));
    }
    let mut notes = Vec::new();
    let mut logs = Vec::new();
    let mut keys = Vec::new();
    let mut relay = None;
    let mut broadcast = None;
    let sessions: Vec<Session> = match cfg.experiment {
        Experiment::Exp1 => vec![single_session(cfg, 0, "exp1")?],
        Experiment::Exp2 => vec![single_session(cfg, 0, "link_a")?, single_session(cfg, 1, "link_b")?],
        Experiment::Exp3 => vec![dual_session(cfg)?],
    };
    match cfg.experiment {
        Experiment::Exp1 => {
            notes.push(accumulation_note(&sessions[0].report, "2400 qubits, 1.2 kbit"));
            keys.push(("key".to_string(), KeyFile::from_key(&sessions[0].key)));
        }
        Experiment::Exp2 => {
            // The platform holds its own copy of each key (`partner_bits`);
            // the stations hold `bits`.
            let (ka, kb) = (&sessions[0].key, &sessions[1].key);
            let x = xor_relay(&ka.partner_bits, &kb.partner_bits)?;
            let recovered_by_relay = recover_remote_key(&x, &ka.partner_bits)?;
            let n = x.len();
            let at_station_a = recover_remote_key(&x, &ka.bits[..n])?;
            let mismatch = at_station_a.iter().zip(&kb.bits).filter(|(p, q)| p != q).count() as f64 / n as f64;
            relay = Some(RelayReport {
                broadcast_bits: n,
                recovered_bit_exact: recovered_by_relay == kb.partner_bits[..n],
                end_to_end_mismatch: mismatch,
            });
            keys.push(("key_a".to_string(), KeyFile::from_key(ka)));
            keys.push(("key_b".to_string(), KeyFile::from_key(kb)));
            broadcast = Some(x);
        }
        Experiment::Exp3 => {}
    }
    if cfg.experiment == Experiment::Exp3 {
        notes.push(accumulation_note(&sessions[0].report, "600 bits per link"));
        keys.push(("key".to_string(), KeyFile::from_key(&sessions[0].key)));
        if sessions[0].report.security_flag == SecurityFlag::Unchecked {
            notes.push(format!(
                "fewer than {} coincidences in some CHSH setting pair; the Bell gate was not evaluated",
                crate::protocols::MIN_CHSH_COUNTS
            ));
        }
    }
    for s in &sessions {
        if s.report.window.quantum_start_s.is_none() {
            notes.push(format!("{}: window shorter than acquisition, no quantum communication", s.report.label));
        }
        if s.report.diagnostics.events_out_of_profile > 0 {
            notes.push(format!(
                "{}: {} events fell outside the ranging profile",
                s.report.label, s.report.diagnostics.events_out_of_profile
            ));
        }
    }
    let mut reports = Vec::new();
    for s in sessions {
        logs.extend(s.logs);
        reports.push(s.report);
    }
    let report = RunReport {
        scenario_id: format!("{}-seed{}", cfg.experiment.label(), cfg.seed),
        experiment: cfg.experiment,
        seed: cfg.seed,
        sessions: reports,
        relay,
        notes,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput { report, logs, keys, broadcast })
}

/// Error ratio from a pooled mismatch count, as used for multi-run
/// averages.
pub fn pooled_error_ratio(errors: usize, bits: usize) -> f64 {
    if bits == 0 {
        return f64::NAN;
    }
    mismatch_to_error_ratio(errors as f64 / bits as f64)
}
