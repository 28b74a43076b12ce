//! Circular-orbit ground tracks, station visibility and inter-station geometry.
//!
//! Everything here works on a spherical, uniformly rotating Earth. Simulation
//! time is measured in seconds from an arbitrary origin at which the Greenwich
//! meridian coincides with the inertial x axis.

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

/// Mean Earth radius used throughout, km.
pub const EARTH_RADIUS_KM: f64 = 6371.0;
/// Geocentric gravitational constant, km^3/s^2.
pub const EARTH_MU_KM3_S2: f64 = 398_600.441_8;
/// Sidereal rotation rate of the Earth, rad/s.
pub const EARTH_ROTATION_RAD_S: f64 = 7.292_115_9e-5;
/// Vacuum speed of light, km/s.
pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;
/// Largest station-to-track longitude offset for a pass to count as useful.
pub const USEFUL_DELTA_LONGITUDE_DEG: f64 = 25.0;

/// Coarse step of the visibility search, seconds.
const WINDOW_STEP_S: f64 = 1.0;
/// Crossing times are refined until the bracket is below this, seconds.
const CROSSING_TOLERANCE_S: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("station {name:?}: latitude {value} outside [-90, 90]")]
    Latitude { name: String, value: f64 },
    #[error("station {name:?}: longitude {value} outside (-180, 180]")]
    Longitude { name: String, value: f64 },
    #[error("station {name:?}: altitude {value} km outside [0, 10)")]
    Altitude { name: String, value: f64 },
    #[error("orbit altitude must be positive, got {0} km")]
    OrbitAltitude(f64),
    #[error("orbit inclination {0} outside [0, 180]")]
    Inclination(f64),
    #[error("orbit period must be positive, got {0} s")]
    Period(f64),
    #[error("orbit period {given} s differs from the Keplerian {kepler:.1} s by more than 2%")]
    InconsistentPeriod { given: f64, kepler: f64 },
    #[error("minimum elevation {0} outside [0, 90]")]
    MinElevation(f64),
    #[error("horizon must be positive, got {0} s")]
    Horizon(f64),
    #[error("baseline angles are undefined for coincident stations")]
    CoincidentStations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

/// Geodetic position on the spherical Earth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeodeticPoint {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundStation {
    pub name: String,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub altitude_km: f64,
}

impl GroundStation {
    pub fn new(
        name: impl Into<String>,
        latitude_deg: f64,
        longitude_deg: f64,
        altitude_km: f64,
    ) -> Result<Self, GeometryError> {
        let station = Self { name: name.into(), latitude_deg, longitude_deg, altitude_km };
        station.validate()?;
        Ok(station)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let name = self.name.clone();
        if !(-90.0..=90.0).contains(&self.latitude_deg) {
            return Err(GeometryError::Latitude { name, value: self.latitude_deg });
        }
        if !(self.longitude_deg > -180.0 && self.longitude_deg <= 180.0) {
            return Err(GeometryError::Longitude { name, value: self.longitude_deg });
        }
        if !(0.0..10.0).contains(&self.altitude_km) {
            return Err(GeometryError::Altitude { name, value: self.altitude_km });
        }
        Ok(())
    }

    fn unit_up(&self) -> Vec3 {
        let (lat, lon) = (self.latitude_deg.to_radians(), self.longitude_deg.to_radians());
        Vec3::new(lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin())
    }

    pub(crate) fn ecef(&self) -> Vec3 {
        self.unit_up().scale(EARTH_RADIUS_KM + self.altitude_km)
    }

    fn same_site(&self, other: &GroundStation) -> bool {
        self.latitude_deg == other.latitude_deg && self.longitude_deg == other.longitude_deg
    }
}

/// Circular low-Earth orbit. Defaults describe the ISS.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CircularOrbit {
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub period_s: f64,
    /// Right ascension of the ascending node at time zero.
    pub raan_deg: f64,
    /// Argument of latitude at `epoch_s` (0 = ascending node).
    pub phase_at_epoch_deg: f64,
    pub epoch_s: f64,
}

impl Default for CircularOrbit {
    fn default() -> Self {
        Self {
            altitude_km: 400.0,
            inclination_deg: 51.0,
            period_s: 5520.0,
            raan_deg: 0.0,
            phase_at_epoch_deg: 0.0,
            epoch_s: 0.0,
        }
    }
}

/// Keplerian period of a circular orbit at `altitude_km`.
pub fn kepler_period(altitude_km: f64) -> f64 {
    2.0 * PI * ((EARTH_RADIUS_KM + altitude_km).powi(3) / EARTH_MU_KM3_S2).sqrt()
}

impl CircularOrbit {
    /// Orbit whose period is the Keplerian one for its altitude.
    pub fn keplerian(altitude_km: f64, inclination_deg: f64) -> Self {
        Self { altitude_km, inclination_deg, period_s: kepler_period(altitude_km), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.altitude_km > 0.0) {
            return Err(GeometryError::OrbitAltitude(self.altitude_km));
        }
        if !(0.0..=180.0).contains(&self.inclination_deg) {
            return Err(GeometryError::Inclination(self.inclination_deg));
        }
        if !(self.period_s > 0.0) {
            return Err(GeometryError::Period(self.period_s));
        }
        let kepler = kepler_period(self.altitude_km);
        if ((self.period_s - kepler) / kepler).abs() > 0.02 {
            return Err(GeometryError::InconsistentPeriod { given: self.period_s, kepler });
        }
        Ok(())
    }

    pub fn radius_km(&self) -> f64 {
        EARTH_RADIUS_KM + self.altitude_km
    }

    fn argument_of_latitude(&self, t: f64) -> f64 {
        self.phase_at_epoch_deg.to_radians() + 2.0 * PI * (t - self.epoch_s) / self.period_s
    }

    /// Satellite position in the Earth-fixed frame, km.
    pub(crate) fn ecef(&self, t: f64) -> Vec3 {
        let u = self.argument_of_latitude(t);
        let (su, cu) = u.sin_cos();
        let (si, ci) = self.inclination_deg.to_radians().sin_cos();
        // Earth-fixed node longitude drifts west with the planet's rotation.
        let node = self.raan_deg.to_radians() - EARTH_ROTATION_RAD_S * t;
        let (sn, cn) = node.sin_cos();
        Vec3::new(cn * cu - sn * su * ci, sn * cu + cn * su * ci, su * si).scale(self.radius_km())
    }

    /// Westward drift of the ground track per revolution, degrees.
    pub fn longitude_drift_per_orbit_deg(&self) -> f64 {
        (EARTH_ROTATION_RAD_S * self.period_s).to_degrees()
    }

    pub fn orbits_per_day(&self) -> f64 {
        86_400.0 / self.period_s
    }

    /// Largest Earth-central angle between station and sub-satellite point at
    /// which the satellite still stands `min_elevation_deg` above the horizon.
    pub fn coverage_half_angle_deg(&self, min_elevation_deg: f64) -> f64 {
        let e = min_elevation_deg.to_radians();
        ((EARTH_RADIUS_KM * e.cos() / self.radius_km()).acos() - e).to_degrees()
    }
}

/// Sub-satellite point at time `t`.
pub fn subsatellite_point(orbit: &CircularOrbit, t: f64) -> GeodeticPoint {
    let p = orbit.ecef(t);
    GeodeticPoint {
        latitude_deg: (p.z / p.norm()).clamp(-1.0, 1.0).asin().to_degrees(),
        longitude_deg: p.y.atan2(p.x).to_degrees(),
    }
}

/// Elevation above the local horizon (degrees) and slant range (km).
pub fn elevation_and_range(station: &GroundStation, orbit: &CircularOrbit, t: f64) -> (f64, f64) {
    let los = orbit.ecef(t) - station.ecef();
    let range = los.norm();
    let sin_el = (los.dot(station.unit_up()) / range).clamp(-1.0, 1.0);
    (sin_el.asin().to_degrees(), range)
}

/// Wraps an angle to (-180, 180].
pub fn wrap_degrees(a: f64) -> f64 {
    let w = a.rem_euclid(360.0);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// A contiguous interval of usable line of sight to one or two stations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkWindow {
    pub stations: Vec<String>,
    pub start_s: f64,
    pub end_s: f64,
    pub max_elevation_deg: f64,
    /// Longitude of the satellite track where it crosses the reference
    /// latitude nearest the pass apex, minus the reference longitude.
    pub delta_longitude_deg: f64,
}

impl LinkWindow {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t <= self.end_s
    }
}

fn check_search(min_elevation_deg: f64, horizon_s: f64) -> Result<(), GeometryError> {
    if !(0.0..=90.0).contains(&min_elevation_deg) {
        return Err(GeometryError::MinElevation(min_elevation_deg));
    }
    if !(horizon_s > 0.0) {
        return Err(GeometryError::Horizon(horizon_s));
    }
    Ok(())
}

/// Refines a sign change of `f` inside `[lo, hi]` by bisection.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let f_lo_pos = f(lo) >= 0.0;
    while hi - lo > CROSSING_TOLERANCE_S {
        let mid = 0.5 * (lo + hi);
        if (f(mid) >= 0.0) == f_lo_pos {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
fn maximize(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > CROSSING_TOLERANCE_S {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        }
    }
    let t = 0.5 * (lo + hi);
    (t, f(t))
}

/// Intervals in `[0, horizon_s]` where `f >= 0`, from 1 s stepping with
/// bisection-refined edges.
fn positive_intervals(horizon_s: f64, f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let steps = (horizon_s / WINDOW_STEP_S).ceil() as u64;
    let mut prev_t = 0.0;
    let mut prev_pos = f(0.0) >= 0.0;
    let mut open = if prev_pos { Some(0.0) } else { None };
    for k in 1..=steps {
        let t = (k as f64 * WINDOW_STEP_S).min(horizon_s);
        let pos = f(t) >= 0.0;
        if pos != prev_pos {
            let edge = bisect(prev_t, t, &f);
            match open.take() {
                Some(start) => out.push((start, edge)),
                None => open = Some(edge),
            }
        }
        prev_t = t;
        prev_pos = pos;
    }
    if let Some(start) = open {
        out.push((start, horizon_s));
    }
    out.retain(|(s, e)| e > s);
    out
}

/// Signed longitude offset of the ground track relative to `reference`,
/// taken where the track crosses the reference latitude closest to `t_apex`.
/// Falls back to the sub-satellite longitude at the apex when the track does
/// not reach that latitude nearby.
fn pass_delta_longitude(orbit: &CircularOrbit, reference: GeodeticPoint, t_apex: f64) -> f64 {
    let lat_diff = |t: f64| subsatellite_point(orbit, t).latitude_deg - reference.latitude_deg;
    let quarter = orbit.period_s / 4.0;
    let mut best: Option<f64> = None;
    let step = 10.0;
    let mut t = t_apex - quarter;
    let mut prev = lat_diff(t);
    while t < t_apex + quarter {
        let next_t = t + step;
        let next = lat_diff(next_t);
        if (prev >= 0.0) != (next >= 0.0) {
            let c = bisect(t, next_t, lat_diff);
            if best.is_none_or(|b| (c - t_apex).abs() < (b - t_apex).abs()) {
                best = Some(c);
            }
        }
        t = next_t;
        prev = next;
    }
    let at = best.unwrap_or(t_apex);
    wrap_degrees(subsatellite_point(orbit, at).longitude_deg - reference.longitude_deg)
}

fn station_reachable(orbit: &CircularOrbit, station: &GroundStation, min_elevation_deg: f64) -> bool {
    let max_lat = orbit.inclination_deg.min(180.0 - orbit.inclination_deg);
    station.latitude_deg.abs() <= max_lat + orbit.coverage_half_angle_deg(min_elevation_deg) + 1e-9
}

fn station_point(s: &GroundStation) -> GeodeticPoint {
    GeodeticPoint { latitude_deg: s.latitude_deg, longitude_deg: s.longitude_deg }
}

/// Visibility windows of a single station over `[0, horizon_s]`.
pub fn link_windows(
    orbit: &CircularOrbit,
    station: &GroundStation,
    min_elevation_deg: f64,
    horizon_s: f64,
) -> Result<Vec<LinkWindow>, GeometryError> {
    orbit.validate()?;
    station.validate()?;
    check_search(min_elevation_deg, horizon_s)?;
    if !station_reachable(orbit, station, min_elevation_deg) {
        return Ok(Vec::new());
    }
    let el = |t: f64| elevation_and_range(station, orbit, t).0;
    let windows = positive_intervals(horizon_s, |t| el(t) - min_elevation_deg)
        .into_iter()
        .map(|(start, end)| {
            let (t_apex, max_el) = maximize(start, end, el);
            LinkWindow {
                stations: vec![station.name.clone()],
                start_s: start,
                end_s: end,
                max_elevation_deg: max_el.max(min_elevation_deg),
                delta_longitude_deg: pass_delta_longitude(orbit, station_point(station), t_apex),
            }
        })
        .collect();
    Ok(windows)
}

/// Which crossing of the station latitude defines a revolution's offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum PassLeg {
    #[default]
    Northbound,
    Southbound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PassStatistics {
    pub revolutions: usize,
    pub useful_revolutions: usize,
    pub fraction_of_orbits: f64,
    pub links_per_day: f64,
    /// Mean visibility above the minimum elevation over useful passes, s.
    pub mean_useful_duration_s: f64,
}

/// Times where the ground track crosses `latitude_deg` on the chosen leg.
fn latitude_crossings(orbit: &CircularOrbit, latitude_deg: f64, leg: PassLeg, horizon_s: f64) -> Vec<f64> {
    let f = |t: f64| subsatellite_point(orbit, t).latitude_deg - latitude_deg;
    let step = 10.0;
    let mut out = Vec::new();
    let mut t = 0.0;
    let mut prev = f(t);
    while t < horizon_s {
        let next_t = (t + step).min(horizon_s);
        let next = f(next_t);
        let rising = prev < 0.0 && next >= 0.0;
        let falling = prev >= 0.0 && next < 0.0;
        if (leg == PassLeg::Northbound && rising) || (leg == PassLeg::Southbound && falling) {
            out.push(bisect(t, next_t, f));
        }
        t = next_t;
        prev = next;
    }
    out
}

/// Fraction of revolutions whose track passes within `max_delta_longitude_deg`
/// of the station, from explicit propagation over `horizon_s`.
pub fn useful_pass_statistics(
    orbit: &CircularOrbit,
    station: &GroundStation,
    min_elevation_deg: f64,
    max_delta_longitude_deg: f64,
    horizon_s: f64,
    leg: PassLeg,
) -> Result<PassStatistics, GeometryError> {
    orbit.validate()?;
    station.validate()?;
    check_search(min_elevation_deg, horizon_s)?;
    let windows = link_windows(orbit, station, min_elevation_deg, horizon_s)?;
    let crossings = latitude_crossings(orbit, station.latitude_deg, leg, horizon_s);
    let mut useful = 0usize;
    let mut durations = Vec::new();
    for &t_cross in &crossings {
        let dlon = wrap_degrees(subsatellite_point(orbit, t_cross).longitude_deg - station.longitude_deg);
        if dlon.abs() < max_delta_longitude_deg || max_delta_longitude_deg >= 180.0 {
            useful += 1;
            if let Some(w) = windows.iter().find(|w| w.start_s - 600.0 <= t_cross && t_cross <= w.end_s + 600.0) {
                durations.push(w.duration_s());
            }
        }
    }
    // One crossing per revolution on the chosen leg; none if out of reach.
    let revolutions = crossings.len();
    let fraction = if revolutions == 0 { 0.0 } else { useful as f64 / revolutions as f64 };
    let mean_useful_duration_s =
        if durations.is_empty() { 0.0 } else { durations.iter().sum::<f64>() / durations.len() as f64 };
    Ok(PassStatistics {
        revolutions,
        useful_revolutions: useful,
        fraction_of_orbits: fraction,
        links_per_day: fraction * orbit.orbits_per_day(),
        mean_useful_duration_s,
    })
}

/// Intervals where both stations see the satellite above `min_elevation_deg`.
pub fn joint_windows(
    orbit: &CircularOrbit,
    a: &GroundStation,
    b: &GroundStation,
    min_elevation_deg: f64,
    horizon_s: f64,
) -> Result<Vec<LinkWindow>, GeometryError> {
    let wa = link_windows(orbit, a, min_elevation_deg, horizon_s)?;
    if a.same_site(b) {
        return Ok(wa);
    }
    let wb = link_windows(orbit, b, min_elevation_deg, horizon_s)?;
    let reference = great_circle_midpoint(a, b);
    let weaker = |t: f64| elevation_and_range(a, orbit, t).0.min(elevation_and_range(b, orbit, t).0);
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < wa.len() && j < wb.len() {
        let start = wa[i].start_s.max(wb[j].start_s);
        let end = wa[i].end_s.min(wb[j].end_s);
        if end > start {
            let (t_apex, el) = maximize(start, end, weaker);
            out.push(LinkWindow {
                stations: vec![a.name.clone(), b.name.clone()],
                start_s: start,
                end_s: end,
                max_elevation_deg: el.max(min_elevation_deg),
                delta_longitude_deg: pass_delta_longitude(orbit, reference, t_apex),
            });
        }
        if wa[i].end_s < wb[j].end_s {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(out)
}

/// Spread of pass longitude offsets (max - min) over the joint windows found
/// on the given leg: the longitudinal range admitting a simultaneous link.
pub fn joint_longitude_range(windows: &[LinkWindow]) -> f64 {
    let (lo, hi) = windows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), w| {
        (lo.min(w.delta_longitude_deg), hi.max(w.delta_longitude_deg))
    });
    if windows.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

fn central_angle(a: &GroundStation, b: &GroundStation) -> f64 {
    let (p1, p2) = (a.latitude_deg.to_radians(), b.latitude_deg.to_radians());
    let dlat = p2 - p1;
    let dlon = (b.longitude_deg - a.longitude_deg).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * h.sqrt().min(1.0).asin()
}

/// Great-circle (haversine) distance on the mean sphere, km.
pub fn great_circle_distance(a: &GroundStation, b: &GroundStation) -> f64 {
    EARTH_RADIUS_KM * central_angle(a, b)
}

fn great_circle_midpoint(a: &GroundStation, b: &GroundStation) -> GeodeticPoint {
    let m = a.unit_up() + b.unit_up();
    GeodeticPoint { latitude_deg: (m.z / m.norm()).asin().to_degrees(), longitude_deg: m.y.atan2(m.x).to_degrees() }
}

/// Initial great-circle bearing from `a` towards `b`, degrees clockwise from north.
fn bearing(a: &GroundStation, b: &GroundStation) -> f64 {
    let (p1, p2) = (a.latitude_deg.to_radians(), b.latitude_deg.to_radians());
    let dlon = (b.longitude_deg - a.longitude_deg).to_radians();
    let y = dlon.sin() * p2.cos();
    let x = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dlon.cos();
    y.atan2(x).to_degrees().rem_euclid(360.0)
}

/// Orientation of the inter-station arc relative to a parallel of latitude.
///
/// `phi` is the angle at `a` between local east and the direction towards
/// `b`, in [0, 180]. `xi` is the acute angle at `b` between the arc and local
/// east, in [0, 90].
pub fn baseline_angles(a: &GroundStation, b: &GroundStation) -> Result<(f64, f64), GeometryError> {
    if a.same_site(b) {
        return Err(GeometryError::CoincidentStations);
    }
    // Angle from east, counter-clockwise, of a direction given by bearing.
    let from_east = |brg: f64| wrap_degrees(90.0 - brg).abs();
    let phi = from_east(bearing(a, b));
    let line = from_east(bearing(b, a));
    let xi = line.min(180.0 - line);
    Ok((phi, xi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(name: &str, lat: f64, lon: f64) -> GroundStation {
        GroundStation::new(name, lat, lon, 0.0).unwrap()
    }

    #[test]
    fn ascending_node_and_extremum() {
        let orbit = CircularOrbit::default();
        let p0 = subsatellite_point(&orbit, 0.0);
        assert!(p0.latitude_deg.abs() < 1e-12);
        let p1 = subsatellite_point(&orbit, orbit.period_s / 4.0);
        assert!((p1.latitude_deg - 51.0).abs() < 1e-9);
    }

    #[test]
    fn dense_sampling_never_exceeds_inclination() {
        let orbit = CircularOrbit::default();
        let mut max_lat: f64 = 0.0;
        let n = 200_000;
        for k in 0..n {
            let t = k as f64 * orbit.period_s / n as f64;
            max_lat = max_lat.max(subsatellite_point(&orbit, t).latitude_deg.abs());
        }
        assert!((max_lat - 51.0).abs() < 0.01, "{max_lat}");
    }

    #[test]
    fn zenith_pass() {
        let orbit = CircularOrbit::default();
        let p = subsatellite_point(&orbit, 0.0);
        let s = st("z", p.latitude_deg, p.longitude_deg);
        let (el, r) = elevation_and_range(&s, &orbit, 0.0);
        assert!((el - 90.0).abs() < 1e-6);
        assert!((r - 400.0).abs() < 1e-6);
    }

    #[test]
    fn horizon_slant_range() {
        // Station on the equator at the longitude where the horizon plane is
        // tangent to the orbit: central angle acos(R/(R+h)).
        let orbit = CircularOrbit { inclination_deg: 0.0, ..CircularOrbit::default() };
        let lam = (EARTH_RADIUS_KM / orbit.radius_km()).acos().to_degrees();
        let s = st("h", 0.0, -lam);
        let (el, r) = elevation_and_range(&s, &orbit, 0.0);
        let expected = (orbit.radius_km().powi(2) - EARTH_RADIUS_KM.powi(2)).sqrt();
        assert!(el.abs() < 1e-9, "{el}");
        assert!((r - expected).abs() / expected < 1e-9);
        assert!((expected - 2292.77).abs() < 0.01);
    }

    #[test]
    fn slant_range_at_thirty_degrees() {
        let orbit = CircularOrbit { inclination_deg: 0.0, ..CircularOrbit::default() };
        let e = 30f64.to_radians();
        let lam = orbit.coverage_half_angle_deg(30.0);
        let s = st("e", 0.0, -lam);
        let (el, r) = elevation_and_range(&s, &orbit, 0.0);
        let closed = (EARTH_RADIUS_KM.powi(2) * e.sin().powi(2) + 2.0 * EARTH_RADIUS_KM * 400.0 + 400.0f64.powi(2))
            .sqrt()
            - EARTH_RADIUS_KM * e.sin();
        assert!((el - 30.0).abs() < 1e-9);
        assert!((r - closed).abs() / closed < 1e-6);
        assert!((closed - 739.3).abs() < 0.1);
    }

    #[test]
    fn station_validation() {
        assert!(GroundStation::new("x", 91.0, 0.0, 0.0).is_err());
        assert!(GroundStation::new("x", 0.0, -180.0, 0.0).is_err());
        assert!(GroundStation::new("x", 0.0, 180.0, 0.0).is_ok());
        assert!(GroundStation::new("x", 0.0, 0.0, 10.0).is_err());
        assert!(GroundStation::new("x", 0.0, 0.0, -0.1).is_err());
    }

    #[test]
    fn orbit_validation() {
        assert!(CircularOrbit::default().validate().is_ok());
        let bad = CircularOrbit { period_s: 6000.0, ..CircularOrbit::default() };
        assert!(matches!(bad.validate(), Err(GeometryError::InconsistentPeriod { .. })));
        let bad = CircularOrbit { inclination_deg: 181.0, ..CircularOrbit::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn drift_per_orbit() {
        let d = CircularOrbit::default().longitude_drift_per_orbit_deg();
        assert!((d - 23.06).abs() < 0.01, "{d}");
    }

    #[test]
    fn unreachable_station_has_no_windows() {
        let orbit = CircularOrbit::default();
        let w = link_windows(&orbit, &st("pole", 89.0, 0.0), 10.0, 86_400.0).unwrap();
        assert!(w.is_empty());
    }

    #[test]
    fn zenith_only_at_ninety_degrees() {
        let orbit = CircularOrbit::default();
        let w = link_windows(&orbit, &st("ogs", 28.3, -16.5), 90.0, 86_400.0).unwrap();
        assert!(w.iter().all(|w| w.duration_s() < 0.01));
    }

    #[test]
    fn equatorial_orbit_gives_identical_windows() {
        let orbit = CircularOrbit::keplerian(400.0, 0.0);
        let w = link_windows(&orbit, &st("eq", 0.0, 30.0), 10.0, 5.0 * 86_400.0).unwrap();
        // The satellite laps the rotating Earth at the synodic period.
        let synodic = 1.0 / (1.0 / orbit.period_s - EARTH_ROTATION_RAD_S / (2.0 * PI));
        let inner: Vec<_> = w.iter().filter(|w| w.start_s > 0.0 && w.end_s < 5.0 * 86_400.0).collect();
        assert!(inner.len() as f64 >= (5.0 * 86_400.0 / synodic).floor() - 1.0);
        for pair in inner.windows(2) {
            assert!((pair[0].duration_s() - pair[1].duration_s()).abs() < 0.01);
            assert!((pair[1].start_s - pair[0].start_s - synodic).abs() < 0.01);
        }
    }

    #[test]
    fn distance_basics() {
        let a = st("a", 10.0, 20.0);
        assert_eq!(great_circle_distance(&a, &a), 0.0);
        let b = st("b", 0.0, 1.0);
        let c = st("c", 0.0, 0.0);
        assert!((great_circle_distance(&b, &c) - EARTH_RADIUS_KM * 1f64.to_radians()).abs() < 1e-9);
    }

    #[test]
    fn baseline_angle_limits() {
        let (phi, xi) = baseline_angles(&st("a", 0.0, 0.0), &st("b", 0.0, 10.0)).unwrap();
        assert!(phi.abs() < 1e-9 && xi.abs() < 1e-9);
        let (phi, xi) = baseline_angles(&st("a", 0.0, 5.0), &st("b", 20.0, 5.0)).unwrap();
        assert!((phi - 90.0).abs() < 1e-9 && (xi - 90.0).abs() < 1e-9);
        assert_eq!(baseline_angles(&st("a", 1.0, 2.0), &st("b", 1.0, 2.0)), Err(GeometryError::CoincidentStations));
    }

    #[test]
    fn wrap() {
        assert_eq!(wrap_degrees(190.0), -170.0);
        assert_eq!(wrap_degrees(-180.0), 180.0);
        assert_eq!(wrap_degrees(45.0), 45.0);
    }
}
