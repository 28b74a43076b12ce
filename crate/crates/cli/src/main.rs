#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qsat::catalog::StationCatalog;
use qsat::config::{ConfigError, RawConfig};
use qsat::geometry::{
    joint_longitude_range, joint_windows, link_windows, useful_pass_statistics, GroundStation, LinkWindow, PassLeg,
    PassStatistics, USEFUL_DELTA_LONGITUDE_DEG,
};
use qsat::linksim::{Experiment, ScenarioConfig};
use qsat::protocols::bits_to_hex;
use qsat::scenario::{run_experiment, RunOutput, RunReport, ScenarioError};
use serde::Serialize;

mod calc;

#[derive(Parser)]
#[command(name = "qsat", version, about = "Entangled-photon downlink simulator and calculators")]
struct Cli {
    /// Station catalog (`name,lat_deg,lon_deg,alt_km` per line) replacing the built-in one.
    #[arg(long, global = true, value_name = "PATH")]
    catalog: Option<PathBuf>,
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List link windows and useful-pass statistics.
    Windows(WindowsArgs),
    /// Run one experiment end to end.
    Exp(ExpArgs),
    /// Stand-alone calculators.
    #[command(subcommand)]
    Calc(calc::CalcCommand),
}

#[derive(Args)]
struct WindowsArgs {
    /// Scenario file supplying orbit, stations and elevation mask.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Station by catalog name; give twice for joint windows.
    #[arg(long = "station", value_name = "NAME")]
    stations: Vec<String>,
    /// Search span in seconds.
    #[arg(long, default_value_t = 86_400.0)]
    duration: f64,
    /// Minimum elevation for a link, degrees.
    #[arg(long, value_name = "DEG")]
    min_elevation: Option<f64>,
    /// Also write `windows.csv` here.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExpName {
    Exp1,
    Exp2,
    Exp3,
}

#[derive(Args)]
struct ExpArgs {
    experiment: ExpName,
    /// Scenario file; flags below override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for logs, keys and the report.
    #[arg(long, value_name = "DIR", default_value = "qsat-out")]
    out: PathBuf,
    /// Quantum-communication time per pass, seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Minimum elevation for a link, degrees.
    #[arg(long, value_name = "DEG")]
    min_elevation: Option<f64>,
    /// Skip writing event logs (they run to gigabytes for long passes).
    #[arg(long)]
    no_logs: bool,
}

enum Failure {
    Config(String),
    Runtime(String),
    /// Reader went away (e.g. `| head`); not worth an error message.
    ClosedOutput,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
            Failure::ClosedOutput => 0,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            return Failure::ClosedOutput;
        }
        Failure::Runtime(e.to_string())
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Invalid(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Windows(args) => cmd_windows(&cli, args),
        Command::Exp(args) => cmd_exp(&cli, args),
        Command::Calc(c) => calc::run(c, cli.json).map_err(Failure::Config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::ClosedOutput) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Config(m) => ("configuration error", m),
                Failure::Runtime(m) => ("error", m),
                Failure::ClosedOutput => unreachable!(),
            };
            eprintln!("{kind}: {msg}");
            ExitCode::from(f.code())
        }
    }
}

fn load_catalog(cli: &Cli) -> Result<StationCatalog, Failure> {
    match &cli.catalog {
        None => Ok(StationCatalog::builtin()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            StationCatalog::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
        }
    }
}

fn load_raw(path: Option<&Path>) -> Result<RawConfig, Failure> {
    match path {
        None => Ok(RawConfig::default()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            RawConfig::parse(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
        }
    }
}

#[derive(Serialize)]
struct StationStatistics {
    station: String,
    #[serde(flatten)]
    stats: PassStatistics,
}

#[derive(Serialize)]
struct WindowsReport {
    min_elevation_deg: f64,
    horizon_s: f64,
    windows: Vec<LinkWindow>,
    statistics: Vec<StationStatistics>,
    longitudinal_range_deg: Option<f64>,
}

impl WindowsReport {
    fn csv(&self) -> String {
        let mut s = String::from("stations,start_s,end_s,duration_s,max_elevation_deg,delta_longitude_deg\n");
        for w in &self.windows {
            s += &format!(
                "{},{:.3},{:.3},{:.3},{:.3},{:.3}\n",
                w.stations.join("+"),
                w.start_s,
                w.end_s,
                w.duration_s(),
                w.max_elevation_deg,
                w.delta_longitude_deg
            );
        }
        s
    }
}

fn cmd_windows(cli: &Cli, args: &WindowsArgs) -> Result<(), Failure> {
    let catalog = load_catalog(cli)?;
    let raw = load_raw(args.config.as_deref())?;
    let cfg = ScenarioConfig::from_raw(&raw, &catalog)?;
    let stations: Vec<GroundStation> = if args.stations.is_empty() {
        if args.config.is_some() {
            cfg.stations.clone()
        } else {
            vec![catalog.get("Tenerife OGS").map_err(|e| Failure::Config(e.to_string()))?.clone()]
        }
    } else {
        args.stations
            .iter()
            .map(|n| catalog.get(n).cloned().map_err(|e| Failure::Config(e.to_string())))
            .collect::<Result<_, _>>()?
    };
    if stations.is_empty() || stations.len() > 2 {
        return Err(Failure::Config(format!("need one or two stations, got {}", stations.len())));
    }
    let min_el = args.min_elevation.unwrap_or(cfg.min_elevation_deg);
    let horizon = args.duration;
    let geometry = |e: qsat::geometry::GeometryError| Failure::Config(e.to_string());

    let windows = match stations.as_slice() {
        [a] => link_windows(&cfg.orbit, a, min_el, horizon).map_err(geometry)?,
        [a, b] => joint_windows(&cfg.orbit, a, b, min_el, horizon).map_err(geometry)?,
        _ => unreachable!(),
    };
    let mut statistics = Vec::new();
    for s in &stations {
        let stats =
            useful_pass_statistics(&cfg.orbit, s, min_el, USEFUL_DELTA_LONGITUDE_DEG, horizon, PassLeg::Northbound)
                .map_err(geometry)?;
        statistics.push(StationStatistics { station: s.name.clone(), stats });
    }
    let longitudinal_range_deg = (stations.len() == 2 && !windows.is_empty()).then(|| joint_longitude_range(&windows));
    let report =
        WindowsReport { min_elevation_deg: min_el, horizon_s: horizon, windows, statistics, longitudinal_range_deg };

    if report.windows.is_empty() {
        eprintln!("warning: no link windows above {min_el} deg within {horizon} s");
    }
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("windows.csv"), report.csv())?;
    }
    let mut out = io::stdout().lock();
    if cli.json {
        serde_json::to_writer_pretty(&mut out, &report).map_err(|e| Failure::Runtime(e.to_string()))?;
        writeln!(out)?;
        return Ok(());
    }
    write!(out, "{}", report.csv())?;
    for s in &report.statistics {
        writeln!(
            out,
            "# {}: {} of {} revolutions useful ({:.1}%), {:.2} links/day, mean pass {:.0} s",
            s.station,
            s.stats.useful_revolutions,
            s.stats.revolutions,
            100.0 * s.stats.fraction_of_orbits,
            s.stats.links_per_day,
            s.stats.mean_useful_duration_s
        )?;
    }
    if let Some(r) = report.longitudinal_range_deg {
        writeln!(out, "# joint passes span {r:.1} deg of longitude")?;
    }
    Ok(())
}

fn experiment(name: ExpName) -> Experiment {
    match name {
        ExpName::Exp1 => Experiment::Exp1,
        ExpName::Exp2 => Experiment::Exp2,
        ExpName::Exp3 => Experiment::Exp3,
    }
}

fn cmd_exp(cli: &Cli, args: &ExpArgs) -> Result<(), Failure> {
    let catalog = load_catalog(cli)?;
    let mut raw = load_raw(args.config.as_deref())?;
    let exp = experiment(args.experiment);
    if let Some(given) = raw.get("scenario", "experiment") {
        if given != exp.label() {
            eprintln!("warning: config names experiment {given}; running {}", exp.label());
        }
    }
    raw.set("scenario", "experiment", exp.label());
    if let Some(seed) = args.seed {
        raw.set("scenario", "seed", seed.to_string());
    }
    if let Some(d) = args.duration {
        raw.set("scenario", "duration_s", d.to_string());
    }
    if let Some(e) = args.min_elevation {
        raw.set("scenario", "min_elevation_deg", e.to_string());
    }
    let cfg = ScenarioConfig::from_raw(&raw, &catalog)?;
    let output = run_experiment(&cfg)?;
    write_outputs(&args.out, &output, !args.no_logs)?;

    let mut out = io::stdout().lock();
    if cli.json {
        serde_json::to_writer_pretty(&mut out, &output.report).map_err(|e| Failure::Runtime(e.to_string()))?;
        writeln!(out)?;
    } else {
        print_report(&mut out, &output.report)?;
        writeln!(out, "outputs written to {}", args.out.display())?;
    }
    Ok(())
}

fn write_outputs(dir: &Path, output: &RunOutput, logs: bool) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    if logs {
        for (stem, log) in &output.logs {
            let file = fs::File::create(dir.join(format!("{stem}.csv")))?;
            let mut w = BufWriter::new(file);
            log.write_csv(&mut w)?;
            w.flush()?;
        }
    }
    for (stem, key) in &output.keys {
        fs::write(dir.join(format!("{stem}.key")), key.to_text())?;
    }
    if let Some(bits) = &output.broadcast {
        fs::write(dir.join("broadcast.hex"), format!("# length={}\n{}\n", bits.len(), bits_to_hex(bits)))?;
    }
    let json = serde_json::to_string_pretty(&output.report).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::write(dir.join("report.json"), json + "\n")?;
    Ok(())
}

fn print_report(out: &mut impl Write, r: &RunReport) -> io::Result<()> {
    writeln!(out, "{} (seed {})", r.scenario_id, r.seed)?;
    for s in &r.sessions {
        let w = &s.window;
        writeln!(out)?;
        writeln!(
            out,
            "[{}] {}: window {:.1}-{:.1} s, peak elevation {:.1} deg",
            s.label,
            w.stations.join(" + "),
            w.start_s,
            w.end_s,
            w.max_elevation_deg
        )?;
        writeln!(out, "  {:<28} {:>14} {:>14} {:>10}", "rate", "expected /s", "simulated /s", "count")?;
        for row in &s.rates {
            writeln!(
                out,
                "  {:<28} {:>14.4} {:>14.4} {:>10}",
                row.name, row.expected_per_s, row.simulated_per_s, row.count
            )?;
        }
        writeln!(out, "  matched pairs     {}", s.matched_pairs)?;
        writeln!(out, "  sifted fraction   {:.4}", s.sifted_fraction)?;
        writeln!(out, "  key length        {} bits", s.key_length)?;
        writeln!(
            out,
            "  QBER              {:.2}% (errors per correct bit; expected {:.2}%)",
            100.0 * s.qber,
            100.0 * s.expected_qber
        )?;
        writeln!(
            out,
            "  mismatch rate     {:.2}% (expected {:.2}%)",
            100.0 * s.mismatch_rate,
            100.0 * s.expected_mismatch_rate
        )?;
        if let Some(c) = &s.chsh {
            writeln!(out, "  CHSH S            {:.3} +/- {:.3} (counts {:?})", c.s, c.sigma_s, c.counts)?;
        }
        writeln!(out, "  security flag     {}", s.security_flag)?;
    }
    if let Some(relay) = &r.relay {
        writeln!(out)?;
        writeln!(
            out,
            "relay: {} bits broadcast, remote key recovered bit-exact: {}, station-to-station mismatch {:.2}%",
            relay.broadcast_bits,
            relay.recovered_bit_exact,
            100.0 * relay.end_to_end_mismatch
        )?;
    }
    for n in &r.notes {
        writeln!(out, "note: {n}")?;
    }
    writeln!(out, "wall clock {:.2} s", r.wall_clock_s)?;
    Ok(())
}
