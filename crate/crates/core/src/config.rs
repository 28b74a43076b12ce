//! Scenario files: `[section]` headers followed by `key = value` lines.
//!
//! ```text
//! # Experiment 1 over the Tenerife station
//! [scenario]
//! experiment = exp1
//! seed = 7
//!
//! [channel_a]
//! attenuation_db = 25
//! ```
//!
//! Everything after `#` is a comment. Keys are unique within a section and
//! every key not given keeps its default. Validation collects every problem
//! before failing so a broken file can be fixed in one pass.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::catalog::StationCatalog;
use crate::geometry::GroundStation;
use crate::linksim::{BasisSchedule, Experiment, ScenarioConfig, WindowSelection};
use crate::photonics::{Basis, ChannelModel, StateFamily};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed but uninterpreted scenario file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

pub const SECTIONS: [&str; 8] =
    ["scenario", "orbit", "stations", "source", "channel_a", "channel_b", "clocks", "protocol"];

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        let mut current: Option<String> = None;
        for (idx, line_text) in text.lines().enumerate() {
            let line = idx + 1;
            let content = line_text.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax { line, message };
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| syntax("unterminated section header".into()))?.trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(syntax(format!("bad section name {name:?}")));
                }
                raw.sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| syntax("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(syntax(format!("bad key {key:?}")));
            }
            let section = current.as_ref().ok_or_else(|| syntax("key outside of any section".into()))?;
            let map = raw.sections.get_mut(section).expect("section registered on header");
            if map.contains_key(key) {
                return Err(syntax(format!("duplicate key {section}.{key}")));
            }
            map.insert(key.to_string(), Entry { value: value.to_string(), line });
        }
        Ok(raw)
    }

    /// Overrides (or adds) a value, e.g. from a command-line flag.
    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), Entry { value: value.into(), line: 0 });
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(|e| e.value.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, entries) in &self.sections {
            let _ = writeln!(out, "[{name}]");
            for (k, e) in entries {
                let _ = writeln!(out, "{k} = {}", e.value);
            }
            out.push('\n');
        }
        out
    }
}

/// Reads values out of a [`RawConfig`], recording every failure.
struct Reader<'a> {
    raw: &'a RawConfig,
    problems: Vec<String>,
    used: Vec<(String, String)>,
}

impl<'a> Reader<'a> {
    fn text(&mut self, section: &str, key: &str) -> Option<&'a str> {
        self.used.push((section.to_string(), key.to_string()));
        self.raw.get(section, key)
    }

    fn where_(&self, section: &str, key: &str) -> String {
        match self.raw.sections.get(section).and_then(|s| s.get(key)) {
            Some(e) if e.line > 0 => format!("{section}.{key} (line {})", e.line),
            _ => format!("{section}.{key}"),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, section: &str, key: &str, what: &str) -> Option<T> {
        let text = self.text(section, key)?;
        match text.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                let at = self.where_(section, key);
                self.problems.push(format!("{at}: expected {what}, got {text:?}"));
                None
            }
        }
    }

    fn number(&mut self, section: &str, key: &str, target: &mut f64) {
        if let Some(v) = self.parsed::<f64>(section, key, "a number") {
            if v.is_finite() {
                *target = v;
            } else {
                let at = self.where_(section, key);
                self.problems.push(format!("{at}: must be finite"));
            }
        }
    }

    fn choice<T>(&mut self, section: &str, key: &str, options: &str, f: impl Fn(&str) -> Option<T>) -> Option<T> {
        let text = self.text(section, key)?;
        let v = f(text);
        if v.is_none() {
            let at = self.where_(section, key);
            self.problems.push(format!("{at}: expected one of {options}, got {text:?}"));
        }
        v
    }

    fn bases(&mut self, section: &str, key: &str) -> Option<Vec<Basis>> {
        let text = self.text(section, key)?;
        let mut out = Vec::new();
        for label in text.split(',').map(str::trim) {
            match Basis::from_label(label) {
                Some(b) => out.push(b),
                None => {
                    let at = self.where_(section, key);
                    self.problems.push(format!("{at}: unknown basis {label:?} (hv, da, hv22, da22)"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn unknown_keys(&mut self) {
        for (section, entries) in &self.raw.sections {
            if !SECTIONS.contains(&section.as_str()) {
                self.problems.push(format!("[{section}]: unknown section"));
                continue;
            }
            for key in entries.keys() {
                if !self.used.iter().any(|(s, k)| s == section && k == key) {
                    let at = self.where_(section, key);
                    self.problems.push(format!("{at}: unknown key"));
                }
            }
        }
    }
}

fn read_channel(r: &mut Reader, section: &str, ch: &mut ChannelModel) {
    r.number(section, "attenuation_db", &mut ch.attenuation_db);
    r.number(section, "detection_loss_db", &mut ch.detection_loss_db);
    r.number(section, "background_rate", &mut ch.background_rate);
    r.number(section, "rotation_amplitude_deg", &mut ch.rotation.amplitude_deg);
    r.number(section, "rotation_period_s", &mut ch.rotation.period_s);
    r.number(section, "rotation_phase_deg", &mut ch.rotation.phase_deg);
    r.number(section, "compensation_noise_deg", &mut ch.compensation_noise_deg);
}

/// Default stations per experiment, by catalog name.
pub fn default_station_names(experiment: Experiment) -> &'static [&'static str] {
    match experiment {
        Experiment::Exp1 => &["Tenerife OGS"],
        Experiment::Exp2 | Experiment::Exp3 => &["Tenerife OGS", "Calar Alto"],
    }
}

fn read_station(r: &mut Reader, key: &str, catalog: &StationCatalog) -> Option<GroundStation> {
    let text = r.text("stations", key)?;
    let at = r.where_("stations", key);
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    match fields.len() {
        1 => match catalog.get(text) {
            Ok(s) => Some(s.clone()),
            Err(e) => {
                r.problems.push(format!("{at}: {e}"));
                None
            }
        },
        4 => {
            let nums: Vec<Option<f64>> = fields[1..].iter().map(|f| f.parse::<f64>().ok()).collect();
            match nums.as_slice() {
                [Some(lat), Some(lon), Some(alt)] => match GroundStation::new(fields[0], *lat, *lon, *alt) {
                    Ok(s) => Some(s),
                    Err(e) => {
                        r.problems.push(format!("{at}: {e}"));
                        None
                    }
                },
                _ => {
                    r.problems.push(format!("{at}: expected name,lat_deg,lon_deg,alt_km"));
                    None
                }
            }
        }
        _ => {
            r.problems.push(format!("{at}: expected a catalog name or name,lat_deg,lon_deg,alt_km"));
            None
        }
    }
}

impl ScenarioConfig {
    /// Defaults for `experiment` with its default catalog stations.
    pub fn defaults(experiment: Experiment, catalog: &StationCatalog) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        raw.set("scenario", "experiment", experiment.label());
        Self::from_raw(&raw, catalog)
    }

    /// Interprets a raw file. Missing keys keep their defaults; stations are
    /// catalog names or inline `name,lat,lon,alt` records under keys `a` and
    /// `b`.
    pub fn from_raw(raw: &RawConfig, catalog: &StationCatalog) -> Result<Self, ConfigError> {
        let mut r = Reader { raw, problems: Vec::new(), used: Vec::new() };
        let experiment =
            r.choice("scenario", "experiment", "exp1, exp2, exp3", Experiment::from_label).unwrap_or(Experiment::Exp1);

        let mut stations = Vec::new();
        let given_a = r.text("stations", "a").is_some();
        let given_b = r.text("stations", "b").is_some();
        if given_a || given_b {
            for key in ["a", "b"] {
                if let Some(s) = read_station(&mut r, key, catalog) {
                    stations.push(s);
                }
            }
        } else {
            for name in default_station_names(experiment) {
                stations.push(catalog.get(name).cloned().unwrap_or_else(|_| {
                    r.problems.push(format!("stations: default station {name:?} missing from catalog"));
                    GroundStation { name: (*name).into(), latitude_deg: 0.0, longitude_deg: 0.0, altitude_km: 0.0 }
                }));
            }
        }

        let mut cfg = ScenarioConfig::new(experiment, stations);
        if let Some(seed) = r.parsed::<u64>("scenario", "seed", "an unsigned integer") {
            cfg.seed = seed;
        }
        r.number("scenario", "min_elevation_deg", &mut cfg.min_elevation_deg);
        r.number("scenario", "horizon_s", &mut cfg.search_horizon_s);
        r.number("scenario", "pat_acquisition_s", &mut cfg.pat_acquisition_s);
        let mut duration = match cfg.window {
            WindowSelection::Centered { duration_s } => duration_s,
            _ => 300.0,
        };
        r.number("scenario", "duration_s", &mut duration);
        let mut start = f64::NAN;
        let mut end = f64::NAN;
        r.number("scenario", "window_start_s", &mut start);
        r.number("scenario", "window_end_s", &mut end);
        let mode = r.choice("scenario", "window", "centered, predicted, explicit", |s| match s {
            "centered" | "predicted" | "explicit" => Some(s.to_string()),
            _ => None,
        });
        cfg.window = match mode.as_deref() {
            Some("predicted") => WindowSelection::Predicted,
            Some("explicit") => {
                if start.is_nan() || end.is_nan() {
                    r.problems.push("scenario.window: explicit windows need window_start_s and window_end_s".into());
                }
                WindowSelection::Explicit { start_s: start, end_s: end }
            }
            _ => WindowSelection::Centered { duration_s: duration },
        };

        let o = &mut cfg.orbit;
        let mut period = f64::NAN;
        r.number("orbit", "altitude_km", &mut o.altitude_km);
        r.number("orbit", "inclination_deg", &mut o.inclination_deg);
        r.number("orbit", "period_s", &mut period);
        r.number("orbit", "raan_deg", &mut o.raan_deg);
        r.number("orbit", "phase_deg", &mut o.phase_at_epoch_deg);
        if !period.is_nan() {
            o.period_s = period;
        } else if raw.get("orbit", "altitude_km").is_some() {
            o.period_s = crate::geometry::kepler_period(o.altitude_km);
        }

        r.number("source", "pair_rate", &mut cfg.source.pair_rate);
        r.number("source", "visibility", &mut cfg.source.visibility);
        if let Some(state) = r.choice("source", "state", "phi_plus, psi_minus", StateFamily::from_label) {
            cfg.source.state = state;
        }
        r.number("source", "local_detection_loss_db", &mut cfg.transmitter.detection_loss_db);
        r.number("source", "local_background_rate", &mut cfg.transmitter.background_rate);

        read_channel(&mut r, "channel_a", &mut cfg.channel_a);
        read_channel(&mut r, "channel_b", &mut cfg.channel_b);

        r.number("clocks", "offset_range_s", &mut cfg.clocks.offset_range_s);
        r.number("clocks", "drift", &mut cfg.clocks.drift);
        r.number("clocks", "jitter_s", &mut cfg.clocks.jitter_s);
        r.number("clocks", "ranging_rate_hz", &mut cfg.ranging_rate_hz);
        r.number("clocks", "compensation_rate_hz", &mut cfg.compensation_rate_hz);

        let mut window_ns = cfg.coincidence_window_s * 1e9;
        r.number("protocol", "coincidence_window_ns", &mut window_ns);
        cfg.coincidence_window_s = window_ns * 1e-9;
        r.number("protocol", "qber_sample_fraction", &mut cfg.qber_sample_fraction);
        if let Some(a) = r.bases("protocol", "bases_a") {
            cfg.schedule.a = a;
        }
        if let Some(b) = r.bases("protocol", "bases_b") {
            cfg.schedule.b = b;
        }
        if let Some(s) = r.choice("protocol", "schedule", "key, bell, rotated_b", |s| match s {
            "key" => Some(BasisSchedule::key_bases()),
            "bell" => Some(BasisSchedule::with_random_rotation()),
            "rotated_b" => Some(BasisSchedule::one_side_rotated()),
            _ => None,
        }) {
            if raw.get("protocol", "bases_a").is_some() || raw.get("protocol", "bases_b").is_some() {
                r.problems.push("protocol.schedule: give either schedule or bases_a/bases_b, not both".into());
            } else {
                cfg.schedule = s;
            }
        }

        r.unknown_keys();
        let mut problems = r.problems;
        problems.extend(cfg.violations());
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }
}
