//! Detection records and the event-log CSV format.
//!
//! ```text
//! t_ns,terminal,basis_label,angle_deg,outcome,channel
//! 1000000123,rxa,hv,90,1,signal
//! ```
//!
//! `t_ns` is an integer on the recording terminal's clock, lines end in LF,
//! fields are never quoted and the header row is mandatory.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::photonics::Basis;

pub const CSV_HEADER: &str = "t_ns,terminal,basis_label,angle_deg,outcome,channel";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Terminal {
    Transmitter,
    ReceiverA,
    ReceiverB,
}

impl Terminal {
    pub fn label(self) -> &'static str {
        match self {
            Terminal::Transmitter => "tx",
            Terminal::ReceiverA => "rxa",
            Terminal::ReceiverB => "rxb",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "tx" => Some(Terminal::Transmitter),
            "rxa" => Some(Terminal::ReceiverA),
            "rxb" => Some(Terminal::ReceiverB),
            _ => None,
        }
    }
}

/// Diagnostic truth tag. Protocol code never looks at it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Channel {
    Signal,
    Background,
}

impl Channel {
    pub fn label(self) -> &'static str {
        match self {
            Channel::Signal => "signal",
            Channel::Background => "background",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "signal" => Some(Channel::Signal),
            "background" => Some(Channel::Background),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DetectionEvent {
    /// Local clock reading, ns.
    pub t_ns: i64,
    pub terminal: Terminal,
    pub basis: Basis,
    pub outcome: bool,
    pub channel: Channel,
}

impl DetectionEvent {
    pub fn analyzer_angle_deg(&self) -> f64 {
        self.basis.analyzer_angle_deg(self.outcome)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventLogError {
    #[error("missing or malformed header, expected {CSV_HEADER:?}")]
    Header,
    #[error("line {line}: expected 6 fields, found {found}")]
    FieldCount { line: usize, found: usize },
    #[error("line {line}: invalid {field} {text:?}")]
    Field { line: usize, field: &'static str, text: String },
    #[error("line {line}: analyzer angle {angle} does not belong to basis {basis} with outcome {outcome}")]
    Angle { line: usize, angle: f64, basis: &'static str, outcome: u8 },
    #[error("line {line}: timestamp {t_ns} precedes the previous event on the same terminal")]
    Order { line: usize, t_ns: i64 },
    #[error("line {line}: carriage return in input; logs use LF line endings")]
    LineEnding { line: usize },
}

/// Time-ordered detections of one terminal (or of several, each in order).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    pub events: Vec<DetectionEvent>,
}

impl EventLog {
    pub fn new(events: Vec<DetectionEvent>) -> Self {
        Self { events }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Copy with every truth tag overwritten, for checking that downstream
    /// processing does not depend on it.
    pub fn stripped(&self) -> Self {
        Self { events: self.events.iter().map(|e| DetectionEvent { channel: Channel::Signal, ..*e }).collect() }
    }

    /// True when each terminal's timestamps are non-decreasing.
    pub fn is_time_ordered(&self) -> bool {
        let mut last: [Option<i64>; 3] = [None; 3];
        self.events.iter().all(|e| {
            let slot = &mut last[e.terminal as usize];
            let ok = slot.is_none_or(|p| e.t_ns >= p);
            *slot = Some(e.t_ns);
            ok
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(CSV_HEADER.as_bytes())?;
        w.write_all(b"\n")?;
        for e in &self.events {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e.t_ns,
                e.terminal.label(),
                e.basis.label(),
                e.analyzer_angle_deg(),
                e.outcome as u8,
                e.channel.label()
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::with_capacity(40 * (self.events.len() + 1));
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("log text is ASCII")
    }

    pub fn parse_csv(text: &str) -> Result<Self, EventLogError> {
        let mut lines = text.split('\n');
        match lines.next() {
            Some(h) if h == CSV_HEADER => {}
            Some(h) if h.trim_end_matches('\r') == CSV_HEADER => return Err(EventLogError::LineEnding { line: 1 }),
            _ => return Err(EventLogError::Header),
        }
        let mut events = Vec::new();
        let mut last: [Option<i64>; 3] = [None; 3];
        for (idx, raw) in lines.enumerate() {
            let line = idx + 2;
            if raw.is_empty() {
                continue;
            }
            if raw.contains('\r') {
                return Err(EventLogError::LineEnding { line });
            }
            let f: Vec<&str> = raw.split(',').collect();
            if f.len() != 6 {
                return Err(EventLogError::FieldCount { line, found: f.len() });
            }
            let bad = |field: &'static str, text: &str| EventLogError::Field { line, field, text: text.to_string() };
            let t_ns: i64 = f[0].parse().map_err(|_| bad("t_ns", f[0]))?;
            let terminal = Terminal::from_label(f[1]).ok_or_else(|| bad("terminal", f[1]))?;
            let basis = Basis::from_label(f[2]).ok_or_else(|| bad("basis_label", f[2]))?;
            let angle: f64 = f[3].parse().map_err(|_| bad("angle_deg", f[3]))?;
            let outcome = match f[4] {
                "0" => false,
                "1" => true,
                other => return Err(bad("outcome", other)),
            };
            let channel = Channel::from_label(f[5]).ok_or_else(|| bad("channel", f[5]))?;
            if angle != basis.analyzer_angle_deg(outcome) {
                return Err(EventLogError::Angle { line, angle, basis: basis.label(), outcome: outcome as u8 });
            }
            let slot = &mut last[terminal as usize];
            if slot.is_some_and(|p| t_ns < p) {
                return Err(EventLogError::Order { line, t_ns });
            }
            *slot = Some(t_ns);
            events.push(DetectionEvent { t_ns, terminal, basis, outcome, channel });
        }
        Ok(Self { events })
    }
}
