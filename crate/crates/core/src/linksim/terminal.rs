//! Terminal operating modes.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TerminalMode {
    Standby,
    /// Pointing, acquisition and tracking.
    Pat,
    QuantumCommunication,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TerminalState {
    pub mode: TerminalMode,
    pub time_entered_s: f64,
}

impl TerminalState {
    pub fn standby(at_s: f64) -> Self {
        Self { mode: TerminalMode::Standby, time_entered_s: at_s }
    }

    /// Whether signal photons may be emitted in this state.
    pub fn emits_signal(&self) -> bool {
        self.mode == TerminalMode::QuantumCommunication
    }
}

/// Advances the mode machine by `elapsed_s` since the current mode was
/// entered. Allowed transitions: standby to PAT when a link is available,
/// PAT to quantum communication once the acquisition time has run, and
/// quantum communication back to standby when the link is lost.
pub fn advance_terminal(
    state: TerminalState,
    link_available: bool,
    elapsed_s: f64,
    pat_acquisition_s: f64,
) -> TerminalState {
    let now = state.time_entered_s + elapsed_s;
    match state.mode {
        TerminalMode::Standby if link_available => TerminalState { mode: TerminalMode::Pat, time_entered_s: now },
        TerminalMode::Pat if elapsed_s >= pat_acquisition_s => TerminalState {
            mode: TerminalMode::QuantumCommunication,
            time_entered_s: state.time_entered_s + pat_acquisition_s,
        },
        TerminalMode::QuantumCommunication if !link_available => TerminalState::standby(now),
        _ => state,
    }
}

/// Mode history over one link window `[start_s, end_s]`, starting in standby.
pub fn window_trace(start_s: f64, end_s: f64, pat_acquisition_s: f64) -> Vec<TerminalState> {
    let mut trace = vec![TerminalState::standby(start_s)];
    let pat = advance_terminal(trace[0], true, 0.0, pat_acquisition_s);
    trace.push(pat);
    if start_s + pat_acquisition_s < end_s {
        let qc = advance_terminal(pat, true, pat_acquisition_s, pat_acquisition_s);
        trace.push(qc);
        trace.push(advance_terminal(qc, false, end_s - qc.time_entered_s, pat_acquisition_s));
    }
    trace
}

/// The interval spent in quantum communication, if any.
pub fn quantum_interval(trace: &[TerminalState]) -> Option<(f64, f64)> {
    let start = trace.iter().position(|s| s.emits_signal())?;
    let end = trace.get(start + 1).map_or(f64::INFINITY, |s| s.time_entered_s);
    Some((trace[start].time_entered_s, end))
}
