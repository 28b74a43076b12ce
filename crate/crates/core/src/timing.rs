//! Time-tag correction and coincidence matching.
//!
//! Every detection is mapped back to the emission time of its photon on the
//! source clock. Both photons of a pair leave together, so after correction
//! the two copies coincide up to timestamp jitter, whatever the path lengths
//! and receiver clocks were.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::linksim::{ClockModel, EventLog};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimingError {
    #[error("need at least 2 reference pulses, got {0}")]
    TooFewPulses(usize),
    #[error("{emissions} emission times but {arrivals} arrivals")]
    LengthMismatch { emissions: usize, arrivals: usize },
    #[error("emission times must be finite and strictly increasing")]
    Schedule,
    #[error("measured delay at {t_s} s is not positive")]
    NonPositiveDelay { t_s: f64 },
}

/// Smooth one-way delay as a function of emission time, stored as cubic
/// Hermite knots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayProfile {
    times_s: Vec<f64>,
    delays_s: Vec<f64>,
    slopes: Vec<f64>,
}

impl DelayProfile {
    pub fn constant(start_s: f64, end_s: f64, delay_s: f64) -> Self {
        Self { times_s: vec![start_s, end_s], delays_s: vec![delay_s; 2], slopes: vec![0.0; 2] }
    }

    /// Profile through exact samples, slopes from finite differences.
    pub fn from_samples(times_s: &[f64], delays_s: &[f64]) -> Result<Self, TimingError> {
        check_schedule(times_s, delays_s.len())?;
        let n = times_s.len();
        let secant = |i: usize| (delays_s[i + 1] - delays_s[i]) / (times_s[i + 1] - times_s[i]);
        let slopes = (0..n)
            .map(|i| match i {
                0 => secant(0),
                i if i == n - 1 => secant(n - 2),
                i => 0.5 * (secant(i - 1) + secant(i)),
            })
            .collect();
        Ok(Self { times_s: times_s.to_vec(), delays_s: delays_s.to_vec(), slopes })
    }

    pub fn span_s(&self) -> (f64, f64) {
        (self.times_s[0], self.times_s[self.times_s.len() - 1])
    }

    pub fn covers(&self, t_s: f64) -> bool {
        let (a, b) = self.span_s();
        t_s >= a && t_s <= b
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times_s.iter().copied().zip(self.delays_s.iter().copied())
    }

    /// Delay at emission time `t_s`. Outside the span the end knots are
    /// extended linearly.
    pub fn delay_at(&self, t_s: f64) -> f64 {
        let n = self.times_s.len();
        let (a, b) = self.span_s();
        if t_s <= a {
            return self.delays_s[0] + self.slopes[0] * (t_s - a);
        }
        if t_s >= b {
            return self.delays_s[n - 1] + self.slopes[n - 1] * (t_s - b);
        }
        let i = self.times_s.partition_point(|&x| x <= t_s).clamp(1, n - 1) - 1;
        let h = self.times_s[i + 1] - self.times_s[i];
        let s = (t_s - self.times_s[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.delays_s[i] + h10 * h * self.slopes[i] + h01 * self.delays_s[i + 1] + h11 * h * self.slopes[i + 1]
    }

    /// Removes a receiver clock from an apparent (clock-inclusive) profile,
    /// leaving the pure propagation delay.
    pub fn without_clock(&self, clock: &ClockModel) -> Self {
        let scale = 1.0 + clock.drift;
        let delays_s: Vec<f64> = self.knots().map(|(t, d)| (t + d - clock.offset_s) / scale - t).collect();
        let slopes = self.slopes.iter().map(|&s| (1.0 + s) / scale - 1.0).collect();
        Self { times_s: self.times_s.clone(), delays_s, slopes }
    }
}

fn check_schedule(times_s: &[f64], values: usize) -> Result<(), TimingError> {
    if times_s.len() != values {
        return Err(TimingError::LengthMismatch { emissions: times_s.len(), arrivals: values });
    }
    if times_s.len() < 2 {
        return Err(TimingError::TooFewPulses(times_s.len()));
    }
    if times_s.iter().any(|t| !t.is_finite()) || times_s.windows(2).any(|w| w[1] <= w[0]) {
        return Err(TimingError::Schedule);
    }
    Ok(())
}

/// Pulses on either side of a knot used by the local smoothing fit.
const SMOOTHING_HALF_WIDTH: usize = 7;
const SMOOTHING_DEGREE: usize = 4;

/// Delay profile from reference-laser pulses.
///
/// `arrivals_ns` are raw receiver timestamps, so the result is the apparent
/// delay including the receiver clock error; pair it with
/// [`ClockModel::IDEAL`] when correcting, or strip the clock first with
/// [`DelayProfile::without_clock`]. Each knot is a local polynomial
/// least-squares fit over neighbouring pulses, which averages timestamp
/// jitter without biasing the curvature of a pass.
pub fn estimate_delay_by_ranging(emissions_s: &[f64], arrivals_ns: &[i64]) -> Result<DelayProfile, TimingError> {
    check_schedule(emissions_s, arrivals_ns.len())?;
    let apparent: Vec<f64> = emissions_s.iter().zip(arrivals_ns).map(|(&t, &a)| a as f64 * 1e-9 - t).collect();
    if let Some(i) = apparent.iter().position(|&d| !(d > 0.0)) {
        return Err(TimingError::NonPositiveDelay { t_s: emissions_s[i] });
    }
    let n = emissions_s.len();
    let width = (2 * SMOOTHING_HALF_WIDTH + 1).min(n);
    let degree = SMOOTHING_DEGREE.min(width - 1);
    let mut delays_s = Vec::with_capacity(n);
    let mut slopes = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(SMOOTHING_HALF_WIDTH).min(n - width);
        let window = lo..lo + width;
        let (value, slope) = local_fit(&emissions_s[window.clone()], &apparent[window], emissions_s[i], degree);
        delays_s.push(value);
        slopes.push(slope);
    }
    Ok(DelayProfile { times_s: emissions_s.to_vec(), delays_s, slopes })
}

/// Least-squares polynomial through `(xs, ys)`; value and derivative at `x0`.
fn local_fit(xs: &[f64], ys: &[f64], x0: f64, degree: usize) -> (f64, f64) {
    let scale = xs.iter().map(|x| (x - x0).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let m = degree + 1;
    let design = DMatrix::from_fn(xs.len(), m, |r, c| ((xs[r] - x0) / scale).powi(c as i32));
    let rhs = DVector::from_column_slice(ys);
    let coef = design.svd(true, true).solve(&rhs, 1e-12).expect("both singular-vector sets were computed");
    (coef[0], if m > 1 { coef[1] / scale } else { 0.0 })
}

/// Offset and drift of a receiver clock, fitted by least squares to the
/// ranging residuals against a predicted geometric delay.
///
/// The returned `jitter_s` is the rms fit residual.
pub fn estimate_clock(
    emissions_s: &[f64],
    arrivals_ns: &[i64],
    predicted_delay_s: impl Fn(f64) -> f64,
) -> Result<ClockModel, TimingError> {
    check_schedule(emissions_s, arrivals_ns.len())?;
    // local = (t + d)(1 + drift) + offset, so the residual is linear in the
    // true arrival time.
    let pts: Vec<(f64, f64)> = emissions_s
        .iter()
        .zip(arrivals_ns)
        .map(|(&t, &a)| {
            let arrival = t + predicted_delay_s(t);
            (arrival, a as f64 * 1e-9 - arrival)
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let drift = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let offset_s = my - drift * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - offset_s - drift * p.0).powi(2)).sum();
    Ok(ClockModel { offset_s, drift, jitter_s: (rss / n).sqrt() })
}

/// Emission-time estimates for every event of a log, ns on the source clock.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrectedLog {
    pub times_ns: Vec<f64>,
    /// Events whose emission time fell outside the delay profile's span;
    /// their times use the linearly extended profile.
    pub out_of_span: Vec<usize>,
}

/// Undoes the receiver clock and the propagation delay.
///
/// Solves `t + delay(t) = clock⁻¹(local)` for the emission time `t` by fixed
/// point iteration; the delay changes by at most a few parts in 10⁵ per
/// second, so three rounds reach float precision.
pub fn correct_timestamps(log: &EventLog, profile: &DelayProfile, clock: &ClockModel) -> CorrectedLog {
    let mut out = CorrectedLog { times_ns: Vec::with_capacity(log.len()), out_of_span: Vec::new() };
    for (i, e) in log.events.iter().enumerate() {
        let arrival = clock.true_s(e.t_ns as f64 * 1e-9);
        let mut t = arrival - profile.delay_at(arrival);
        for _ in 0..3 {
            t = arrival - profile.delay_at(t);
        }
        if !profile.covers(t) {
            out.out_of_span.push(i);
        }
        out.times_ns.push(t * 1e9);
    }
    out
}

/// Timestamps of a log already on the source clock, as ns.
pub fn uncorrected(log: &EventLog) -> CorrectedLog {
    CorrectedLog { times_ns: log.events.iter().map(|e| e.t_ns as f64).collect(), out_of_span: Vec::new() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoincidencePair {
    pub a: usize,
    pub b: usize,
    /// `t_b - t_a`, ns.
    pub dt_ns: f64,
}

/// Positions in time order; `None` when the input is already sorted.
fn sorted_order(times: &[f64]) -> Option<Vec<usize>> {
    if times.windows(2).all(|w| w[0] <= w[1]) {
        return None;
    }
    let mut idx: Vec<usize> = (0..times.len()).collect();
    idx.sort_by(|&i, &j| times[i].total_cmp(&times[j]));
    Some(idx)
}

/// Pairs events of two corrected logs whose times differ by at most half of
/// `window_ns` (the full coincidence window).
///
/// Closest candidates are accepted first, each event at most once. Ties on
/// the time difference are broken by the earlier event time and then by
/// position, using only keys that do not depend on argument order, so
/// swapping the logs yields the same pairs. Output is ordered by `a`.
pub fn match_coincidences(a: &[f64], b: &[f64], window_ns: f64) -> Vec<CoincidencePair> {
    if !(window_ns > 0.0) || a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let half = window_ns / 2.0;
    let (oa, ob) = (sorted_order(a), sorted_order(b));
    let at = |k: usize| oa.as_ref().map_or(k, |o| o[k]);
    let bt = |k: usize| ob.as_ref().map_or(k, |o| o[k]);
    let mut candidates: Vec<CoincidencePair> = Vec::new();
    let mut lo = 0;
    for k in 0..a.len() {
        let i = at(k);
        let t = a[i];
        while lo < b.len() && b[bt(lo)] < t - half {
            lo += 1;
        }
        let mut m = lo;
        while m < b.len() && b[bt(m)] <= t + half {
            let j = bt(m);
            candidates.push(CoincidencePair { a: i, b: j, dt_ns: b[j] - a[i] });
            m += 1;
        }
    }
    let key = |c: &CoincidencePair| {
        let (ta, tb) = (a[c.a], b[c.b]);
        (c.dt_ns.abs(), ta.min(tb), ta.max(tb), c.a.min(c.b), c.a.max(c.b), c.a)
    };
    candidates.sort_by(|x, y| {
        let (kx, ky) = (key(x), key(y));
        kx.0.total_cmp(&ky.0)
            .then(kx.1.total_cmp(&ky.1))
            .then(kx.2.total_cmp(&ky.2))
            .then(kx.3.cmp(&ky.3))
            .then(kx.4.cmp(&ky.4))
            .then(kx.5.cmp(&ky.5))
    });
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !used_a[c.a] && !used_b[c.b] {
            used_a[c.a] = true;
            used_b[c.b] = true;
            pairs.push(c);
        }
    }
    pairs.sort_by_key(|p| p.a);
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linksim::{Channel, DetectionEvent, Terminal};
    use crate::photonics::Basis;

    fn log(times: &[i64]) -> EventLog {
        EventLog::new(
            times
                .iter()
                .map(|&t_ns| DetectionEvent {
                    t_ns,
                    terminal: Terminal::ReceiverA,
                    basis: Basis::Hv,
                    outcome: false,
                    channel: Channel::Signal,
                })
                .collect(),
        )
    }

    #[test]
    fn constant_delay_is_exact() {
        let em: Vec<f64> = (0..20).map(|k| 100.0 + k as f64).collect();
        let arr: Vec<i64> = em.iter().map(|t| ((t + 2e-3) * 1e9).round() as i64).collect();
        let p = estimate_delay_by_ranging(&em, &arr).unwrap();
        for t in [100.0, 104.3, 119.0] {
            assert!((p.delay_at(t) - 2e-3).abs() < 1e-13, "{}", p.delay_at(t));
        }
    }

    #[test]
    fn ranging_needs_two_pulses() {
        assert_eq!(estimate_delay_by_ranging(&[1.0], &[5]), Err(TimingError::TooFewPulses(1)));
        assert!(matches!(estimate_delay_by_ranging(&[1.0, 2.0], &[5]), Err(TimingError::LengthMismatch { .. })));
        assert_eq!(estimate_delay_by_ranging(&[2.0, 1.0], &[5, 6]), Err(TimingError::Schedule));
        let two = estimate_delay_by_ranging(&[0.0, 1.0], &[1_000, 2_000_000_000]).unwrap();
        assert!((two.delay_at(0.5) - 0.5e-6 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn identity_and_shift_corrections() {
        let l = log(&[10, 20, 35]);
        let ident = correct_timestamps(&l, &DelayProfile::constant(0.0, 1.0, 0.0), &ClockModel::IDEAL);
        assert_eq!(ident.times_ns, vec![10.0, 20.0, 35.0]);
        assert!(ident.out_of_span.is_empty());
        let off = ClockModel { offset_s: 5e-9, ..ClockModel::IDEAL };
        let shifted = correct_timestamps(&l, &DelayProfile::constant(0.0, 1.0, 0.0), &off);
        for (x, y) in shifted.times_ns.iter().zip([5.0, 15.0, 30.0]) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn events_outside_profile_flagged() {
        let l = log(&[5_000_000_000]);
        let c = correct_timestamps(&l, &DelayProfile::constant(0.0, 1.0, 1e-3), &ClockModel::IDEAL);
        assert_eq!(c.out_of_span, vec![0]);
        assert!((c.times_ns[0] - 4_999_000_000.0).abs() < 1e-3);
    }

    #[test]
    fn clock_fit_recovers_affine_error() {
        let truth = ClockModel { offset_s: 4e-4, drift: 7e-10, jitter_s: 0.0 };
        let delay = |t: f64| 2e-3 + 1e-6 * (t - 500.0);
        let em: Vec<f64> = (0..300).map(|k| 500.0 + k as f64).collect();
        let arr: Vec<i64> = em.iter().map(|&t| (truth.local_s(t + delay(t)) * 1e9).round() as i64).collect();
        let est = estimate_clock(&em, &arr, delay).unwrap();
        assert!((est.offset_s - truth.offset_s).abs() < 1e-9, "{est:?}");
        assert!((est.drift - truth.drift).abs() < 1e-11, "{est:?}");
        let apparent = estimate_delay_by_ranging(&em, &arr).unwrap();
        let pure = apparent.without_clock(&est);
        assert!((pure.delay_at(650.5) - delay(650.5)).abs() < 2e-9);
    }

    #[test]
    fn identical_logs_self_match() {
        let t = [1.0, 3.0, 3.0, 10.0, 30.0];
        let pairs = match_coincidences(&t, &t, 5.0);
        assert_eq!(pairs.len(), 5);
        assert!(pairs.iter().all(|p| p.a == p.b && p.dt_ns == 0.0));
    }

    #[test]
    fn nearest_neighbour_wins() {
        let a = [0.0, 4.0];
        let b = [3.0];
        let p = match_coincidences(&a, &b, 10.0);
        assert_eq!(p, vec![CoincidencePair { a: 1, b: 0, dt_ns: -1.0 }]);
        assert!(match_coincidences(&a, &b, 1.0).is_empty());
        assert!(match_coincidences(&a, &b, 0.0).is_empty());
    }

    #[test]
    fn unsorted_input_is_handled() {
        let a = [20.0, 0.0];
        let b = [0.5, 19.0];
        let mut p = match_coincidences(&a, &b, 4.0);
        p.sort_by_key(|c| c.a);
        assert_eq!(p.len(), 2);
        assert_eq!((p[0].a, p[0].b), (0, 1));
        assert_eq!((p[1].a, p[1].b), (1, 0));
    }
}
