use clap::Subcommand;
use qsat::analysis::{
    collapse_speed_lower_bound, godel_rotation_rate, integration_time, min_separation_for_free_choice,
    phase_sensitivity, rotating_circle, sagnac_phase, sagnac_phase_rigid, spacelike_separated, AnalysisError,
    PhaseRegime, RotationTarget, SpacetimeEvent, DEFAULT_LOOP_SAMPLES, SECONDS_PER_YEAR,
};
use qsat::geometry::EARTH_ROTATION_RAD_S;
use serde_json::{json, Value};

#[derive(Subcommand)]
pub enum CalcCommand {
    /// Phase resolution with independent versus entangled photons.
    Sensitivity {
        /// Photon number.
        #[arg(long)]
        n: f64,
    },
    /// Rotation rate of a Goedel universe and the time needed to resolve it.
    Godel {
        /// Mean mass density, kg/m^3.
        #[arg(long)]
        rho: f64,
        /// Rotation resolution of the reference instrument, rad/s.
        #[arg(long, default_value_t = 1e-16)]
        baseline_sigma: f64,
        /// Integration time behind `baseline_sigma`, years.
        #[arg(long, default_value_t = 1.0)]
        baseline_years: f64,
        /// Resolution improves as time^exponent (1 or 0.5).
        #[arg(long, default_value_t = 1.0)]
        exponent: f64,
        /// Factor by which entanglement improves the reference resolution.
        #[arg(long, default_value_t = 1.0)]
        enhancement: f64,
    },
    /// Sagnac phase of a rigidly rotating circular loop, numeric and closed form.
    Sagnac {
        /// Loop radius, m.
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
        /// Rotation rate, rad/s.
        #[arg(long, default_value_t = EARTH_ROTATION_RAD_S)]
        omega: f64,
        /// Wavelength, m.
        #[arg(long, default_value_t = 810e-9)]
        wavelength: f64,
        #[arg(long, default_value_t = DEFAULT_LOOP_SAMPLES)]
        samples: usize,
    },
    /// Separation that leaves each side `decision-time` seconds of free choice.
    Spacelike {
        /// Seconds.
        #[arg(long)]
        decision_time: f64,
        /// Optionally test two events this far apart, km.
        #[arg(long, requires = "dt")]
        separation_km: Option<f64>,
        /// Time between those events, s.
        #[arg(long, requires = "separation_km")]
        dt: Option<f64>,
    },
    /// Lower bound on a collapse speed, in units of c.
    Collapse {
        #[arg(long)]
        separation_km: f64,
        /// Time-alignment uncertainty, s.
        #[arg(long)]
        alignment_s: f64,
    },
}

fn fail(e: AnalysisError) -> String {
    e.to_string()
}

/// Result lines as `(key, value, unit)`.
type Lines = Vec<(&'static str, Value, &'static str)>;

fn evaluate(cmd: &CalcCommand) -> Result<Lines, String> {
    Ok(match *cmd {
        CalcCommand::Sensitivity { n } => {
            let standard = phase_sensitivity(n, PhaseRegime::Standard).map_err(fail)?;
            let entangled = phase_sensitivity(n, PhaseRegime::Entangled).map_err(fail)?;
            vec![
                ("standard_rad", json!(standard), "rad"),
                ("entangled_rad", json!(entangled), "rad"),
                ("enhancement", json!(standard / entangled), ""),
            ]
        }
        CalcCommand::Godel { rho, baseline_sigma, baseline_years, exponent, enhancement } => {
            if !(enhancement >= 1.0) {
                return Err(format!("enhancement must be at least 1, got {enhancement}"));
            }
            let omega = godel_rotation_rate(rho).map_err(fail)?;
            let frame_dragging = RotationTarget::lense_thirring();
            let t = integration_time(omega, baseline_sigma / enhancement, baseline_years * SECONDS_PER_YEAR, exponent)
                .map_err(fail)?;
            vec![
                ("omega_rad_s", json!(omega), "rad/s"),
                ("ratio_to_frame_dragging", json!(omega / frame_dragging.omega_rad_s), ""),
                ("integration_time_years", json!(t / SECONDS_PER_YEAR), "years"),
            ]
        }
        CalcCommand::Sagnac { radius, omega, wavelength, samples } => {
            if !(radius > 0.0) {
                return Err(format!("radius must be positive, got {radius}"));
            }
            let (path, field) = rotating_circle(radius, omega, samples);
            let numeric = sagnac_phase(&path, &field, wavelength).map_err(fail)?;
            let closed = sagnac_phase_rigid(std::f64::consts::PI * radius * radius, omega, wavelength);
            vec![
                ("phase_rad", json!(numeric), "rad"),
                ("closed_form_rad", json!(closed), "rad"),
                ("relative_difference", json!(((numeric - closed) / closed).abs()), ""),
            ]
        }
        CalcCommand::Spacelike { decision_time, separation_km, dt } => {
            let d = min_separation_for_free_choice(decision_time).map_err(fail)?;
            let mut lines = vec![("min_separation_km", json!(d), "km")];
            if let (Some(x), Some(t)) = (separation_km, dt) {
                let e1 = SpacetimeEvent::new([0.0; 3], 0.0).map_err(fail)?;
                let e2 = SpacetimeEvent::new([x, 0.0, 0.0], t).map_err(fail)?;
                lines.push(("spacelike", json!(spacelike_separated(&e1, &e2)), ""));
            }
            lines
        }
        CalcCommand::Collapse { separation_km, alignment_s } => {
            let v = collapse_speed_lower_bound(separation_km, alignment_s).map_err(fail)?;
            vec![("speed_over_c", json!(v), "c")]
        }
    })
}

pub fn run(cmd: &CalcCommand, json_out: bool) -> Result<(), String> {
    let lines = evaluate(cmd)?;
    if json_out {
        let map: serde_json::Map<String, Value> = lines.into_iter().map(|(k, v, _)| (k.to_string(), v)).collect();
        println!("{}", Value::Object(map));
    } else {
        for (k, v, unit) in lines {
            match (v.as_f64(), unit) {
                (Some(x), "") if v.is_number() => println!("{k} = {x:.6e}"),
                (Some(x), u) => println!("{k} = {x:.6e} {u}"),
                _ => println!("{k} = {v}"),
            }
        }
    }
    Ok(())
}
