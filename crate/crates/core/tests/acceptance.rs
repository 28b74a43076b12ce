//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Run with `cargo test -p qsat-core --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use qsat::analysis::{
    chsh_from_counts, godel_rotation_rate, integration_time, min_separation_for_free_choice, phase_sensitivity,
    rotating_circle, sagnac_phase, sagnac_phase_rigid, PhaseRegime, SECONDS_PER_YEAR,
};
use qsat::catalog::StationCatalog;
use qsat::geometry::{
    great_circle_distance, joint_windows, useful_pass_statistics, CircularOrbit, PassLeg, USEFUL_DELTA_LONGITUDE_DEG,
};
use qsat::linksim::{Experiment, ScenarioConfig, WindowSelection};
use qsat::photonics::{coincidence_rate, sample_pair, singles_rate, Basis, PairSourceModel};
use qsat::protocols::{bb84_sift, chsh_counts, MatchedRecord, Observation, SecurityFlag};
use qsat::rng::pass_rng;
use qsat::scenario::{pooled_error_ratio, run_experiment, RunReport, SessionReport};
use rand::Rng;

const SEEDS: u64 = 100;
const PASS_S: f64 = 300.0;
const PAIR_RATE: f64 = 500_000.0;

struct Verdict {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn rel(x: f64, target: f64, tol: f64) -> bool {
    ((x - target) / target).abs() <= tol
}

fn defaults(exp: Experiment, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::defaults(exp, &StationCatalog::builtin()).expect("default config");
    cfg.seed = seed;
    cfg
}

fn rate<'a>(s: &'a SessionReport, name: &str) -> &'a qsat::scenario::RateRow {
    s.rates.iter().find(|r| r.name == name).expect("rate row present")
}

fn criterion_1() -> Verdict {
    let t = Instant::now();
    let tx = singles_rate(PAIR_RATE, 6.5).unwrap();
    let rx = singles_rate(PAIR_RATE, 31.5).unwrap();
    let rx_bg = rx + 1000.0;
    let single = coincidence_rate(PAIR_RATE, 6.5, 31.5).unwrap();
    let dual = coincidence_rate(PAIR_RATE, 31.5, 31.5).unwrap();
    let elapsed = t.elapsed().as_secs_f64();
    let pass = rel(tx, 112_000.0, 0.01)
        && rel(rx, 350.0, 0.02)
        && rel(rx_bg, 1350.0, 0.01)
        && rel(single, 80.0, 0.02)
        && rel(dual, 0.25, 0.01)
        && elapsed < 1.0;
    Verdict {
        id: 1,
        name: "link budget",
        pass,
        detail: format!(
            "singles {tx:.0}/s, {rx:.1}/s, {rx_bg:.0}/s with background; coincidences {single:.2}/s, {dual:.4}/s; {elapsed:.2e} s"
        ),
    }
}

/// Pooled statistics over the seeded Monte-Carlo passes of one experiment.
#[derive(Default)]
struct Pool {
    runs: usize,
    sifted_bits: usize,
    sifted_errors: usize,
    accidental_per_s: Vec<f64>,
    matched: Vec<usize>,
    true_matched: Vec<usize>,
    within_2ns: Vec<f64>,
    notes_flagged: bool,
    wall_s: f64,
    max_wall_s: f64,
    analytic_accidentals: f64,
}

impl Pool {
    fn add(&mut self, r: &RunReport) {
        let s = &r.sessions[0];
        let duration = s.window.quantum_end_s.unwrap() - s.window.quantum_start_s.unwrap();
        self.runs += 1;
        self.sifted_bits += s.diagnostics.sifted_bits;
        self.sifted_errors += s.diagnostics.sifted_errors;
        self.accidental_per_s.push(s.diagnostics.accidental_matches as f64 / duration);
        self.matched.push(s.matched_pairs);
        self.true_matched.push(s.diagnostics.true_pairs_matched);
        self.within_2ns.push(s.diagnostics.true_pairs_within_2ns);
        self.notes_flagged |= r.notes.iter().any(|n| n.contains("reference pass totals"));
        self.wall_s += r.wall_clock_s;
        self.max_wall_s = self.max_wall_s.max(r.wall_clock_s);
        self.analytic_accidentals = rate(s, "coincidences (accidental)").expected_per_s;
    }

    fn mean<T: Copy + Into<f64>>(v: &[T]) -> f64 {
        v.iter().map(|&x| x.into()).sum::<f64>() / v.len() as f64
    }

    fn error_ratio(&self) -> f64 {
        pooled_error_ratio(self.sifted_errors, self.sifted_bits)
    }
}

fn monte_carlo(exp: Experiment) -> Pool {
    let mut pool = Pool::default();
    for seed in 1..=SEEDS {
        let out = run_experiment(&defaults(exp, seed)).expect("default run succeeds");
        pool.add(&out.report);
    }
    pool
}

fn accidental_ok(pool: &Pool, target: f64) -> (bool, f64, f64) {
    // Poisson spread of one pass's accidental count, as a rate.
    let sigma = (target * PASS_S).sqrt() / PASS_S;
    let mean = Pool::mean(&pool.accidental_per_s);
    (within(mean, target, 3.0 * sigma), mean, sigma)
}

fn criterion_2(exp1: &Pool, exp3: &Pool, elapsed_s: f64) -> Verdict {
    let q1 = exp1.error_ratio();
    let q3 = exp3.error_ratio();
    let (acc1_ok, acc1, s1) = accidental_ok(exp1, 2.0);
    let (acc3_ok, acc3, s3) = accidental_ok(exp3, 0.025);
    let pass = within(q1, 0.025, 0.01) && within(q3, 0.10, 0.02) && acc1_ok && acc3_ok && elapsed_s < 300.0;
    Verdict {
        id: 2,
        name: "error rates",
        pass,
        detail: format!(
            "exp1 QBER {:.2}% over {} bits, exp3 bit error {:.2}% over {} bits; accidentals {acc1:.3}/s \
             (target 2 +/- {:.3}), {acc3:.4}/s (target 0.025 +/- {:.4}); {} x 2 passes in {elapsed_s:.0} s",
            100.0 * q1,
            exp1.sifted_bits,
            100.0 * q3,
            exp3.sifted_bits,
            3.0 * s1,
            3.0 * s3,
            SEEDS
        ),
    }
}

fn criterion_3(exp3: &Pool) -> Verdict {
    let target: f64 = 75.0;
    let sigma = target.sqrt();
    let mean = Pool::mean(&exp3.matched.iter().map(|&m| m as f64).collect::<Vec<_>>());
    let net = mean - exp3.analytic_accidentals * PASS_S;
    let truth = Pool::mean(&exp3.true_matched.iter().map(|&m| m as f64).collect::<Vec<_>>());
    Verdict {
        id: 3,
        name: "exp3 throughput",
        pass: within(mean, target, 3.0 * sigma),
        detail: format!(
            "mean matched {mean:.1} per pass (target 75 +/- {:.1}); net of expected accidentals {net:.1}; \
             true pairs {truth:.1}",
            3.0 * sigma
        ),
    }
}

fn criterion_4() -> Verdict {
    // Sifting over 10^4 synthetic pairs with uniformly chosen key bases.
    let mut rng = pass_rng(4, 0);
    let source = PairSourceModel::default();
    let bases = [Basis::Hv, Basis::Da];
    let records: Vec<MatchedRecord> = (0..10_000)
        .map(|_| {
            let (ba, bb) = (bases[rng.random_range(0..2)], bases[rng.random_range(0..2)]);
            let (oa, ob) = sample_pair(&mut rng, &source, ba.setting_deg(), bb.setting_deg());
            MatchedRecord { a: Observation { basis: ba, outcome: oa }, b: Observation { basis: bb, outcome: ob } }
        })
        .collect();
    let fraction = bb84_sift(&records, source.state).sifted_fraction;

    let mut exact = 0;
    let runs = 10;
    for seed in 1..=runs {
        let mut cfg = defaults(Experiment::Exp2, seed);
        cfg.window = WindowSelection::Centered { duration_s: 60.0 };
        let relay = run_experiment(&cfg).expect("exp2 run").report.relay.expect("relay report");
        exact += usize::from(relay.recovered_bit_exact && relay.broadcast_bits > 0);
    }
    Verdict {
        id: 4,
        name: "sifting and relay",
        pass: within(fraction, 0.5, 0.01) && exact == runs as usize,
        detail: format!("sifted fraction {fraction:.4} at n = 10^4; relay bit-exact on {exact}/{runs} runs"),
    }
}

/// Exp3 pass with clean channels: no background, no compensation error,
/// 20 dB per arm so the pass yields enough counts per setting pair.
fn clean_exp3(visibility: f64) -> RunReport {
    let mut cfg = defaults(Experiment::Exp3, 5);
    cfg.source.visibility = visibility;
    for ch in [&mut cfg.channel_a, &mut cfg.channel_b] {
        ch.background_rate = 0.0;
        ch.compensation_noise_deg = 0.0;
        ch.attenuation_db = 20.0 - ch.detection_loss_db;
    }
    run_experiment(&cfg).expect("clean exp3 run").report
}

/// Largest |S| - 2 - 4 sigma over datasets from random local deterministic
/// strategies.
fn worst_local_excess() -> f64 {
    let mut rng = pass_rng(5, 1);
    let settings_a = [Basis::Hv, Basis::Da];
    let settings_b = [Basis::HvRotated, Basis::DaRotated];
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        // A strategy: a weighting over the 16 deterministic response pairs.
        let weights: Vec<f64> = (0..16).map(|_| rng.random::<f64>().powi(4)).collect();
        let total: f64 = weights.iter().sum();
        let records: Vec<MatchedRecord> = (0..4000)
            .map(|_| {
                let mut u = rng.random::<f64>() * total;
                let mut lambda = 15;
                for (k, w) in weights.iter().enumerate() {
                    if u < *w {
                        lambda = k;
                        break;
                    }
                    u -= w;
                }
                let (ia, ib) = (rng.random_range(0..2), rng.random_range(0..2));
                MatchedRecord {
                    a: Observation { basis: settings_a[ia], outcome: lambda >> ia & 1 == 1 },
                    b: Observation { basis: settings_b[ib], outcome: lambda >> (2 + ib) & 1 == 1 },
                }
            })
            .collect();
        if let Ok(r) = chsh_from_counts(&chsh_counts(&records)) {
            worst = worst.max(r.s.abs() - 2.0 - 4.0 * r.sigma_s);
        }
    }
    worst
}

fn criterion_5() -> Verdict {
    let ideal = clean_exp3(1.0);
    let noisy = clean_exp3(0.8);
    let ci = ideal.sessions[0].chsh.clone().expect("chsh evaluated");
    let cn = noisy.sessions[0].chsh.clone().expect("chsh evaluated");
    let flag = noisy.sessions[0].security_flag;
    let excess = worst_local_excess();
    let pass = within(ci.s, 2.0 * 2f64.sqrt(), 3.0 * ci.sigma_s)
        && within(cn.s, 0.8 * 2.0 * 2f64.sqrt(), 3.0 * cn.sigma_s)
        && flag == SecurityFlag::BellViolated
        && excess <= 0.0;
    Verdict {
        id: 5,
        name: "Bell test",
        pass,
        detail: format!(
            "S = {:.3} +/- {:.3} noiseless, {:.3} +/- {:.3} at V = 0.8 (gate: {flag}); \
             local strategies max |S| - 2 - 4 sigma = {excess:.3}",
            ci.s, ci.sigma_s, cn.s, cn.sigma_s
        ),
    }
}

fn criterion_6() -> Verdict {
    let catalog = StationCatalog::builtin();
    let st = |n: &str| catalog.get(n).expect("catalog station").clone();
    let orbit = CircularOrbit::default();
    let days = 30.0;
    let horizon = days * 86_400.0;
    let stats = useful_pass_statistics(
        &orbit,
        &st("Tenerife OGS"),
        10.0,
        USEFUL_DELTA_LONGITUDE_DEG,
        horizon,
        PassLeg::Northbound,
    )
    .unwrap();
    let table = [
        ("Tenerife OGS", "Calar Alto", 1638.0),
        ("Tenerife OGS", "Matera", 3309.0),
        ("Calar Alto", "Matera", 1698.0),
        ("Calar Alto", "Sierra Nevada", 76.0),
    ];
    let distances: Vec<f64> = table.iter().map(|(a, b, _)| great_circle_distance(&st(a), &st(b))).collect();
    let distances_ok = table.iter().zip(&distances).all(|((_, _, d), x)| rel(*x, *d, 0.02));
    // Most to fewest joint links per day.
    let ordering = [("Calar Alto", "Sierra Nevada"), ("Tenerife OGS", "Calar Alto"), ("Tenerife OGS", "Matera")];
    let per_day: Vec<f64> = ordering
        .iter()
        .map(|(a, b)| joint_windows(&orbit, &st(a), &st(b), 10.0, horizon).unwrap().len() as f64 / days)
        .collect();
    let ordered = per_day.windows(2).all(|w| w[0] > w[1]);
    let pass =
        within(stats.fraction_of_orbits, 0.139, 0.01) && stats.links_per_day.round() == 2.0 && distances_ok && ordered;
    Verdict {
        id: 6,
        name: "geometry",
        pass,
        detail: format!(
            "useful orbits {:.1}%, {:.2} links/day; distances {:.0}/{:.0}/{:.0}/{:.1} km; \
             joint links/day {:.2} > {:.2} > {:.2}",
            100.0 * stats.fraction_of_orbits,
            stats.links_per_day,
            distances[0],
            distances[1],
            distances[2],
            distances[3],
            per_day[0],
            per_day[1],
            per_day[2]
        ),
    }
}

fn criterion_7() -> Verdict {
    let sep = min_separation_for_free_choice(1.0).unwrap();
    let n = 1e16;
    let gain =
        phase_sensitivity(n, PhaseRegime::Standard).unwrap() / phase_sensitivity(n, PhaseRegime::Entangled).unwrap();
    let omega = godel_rotation_rate(2e-28).unwrap();
    let years = integration_time(omega, 1e-16, SECONDS_PER_YEAR, 1.0).unwrap() / SECONDS_PER_YEAR;
    let (radius, rot, wavelength) = (1.0, 7.292_115_9e-5, 810e-9);
    let (path, field) = rotating_circle(radius, rot, 10_000);
    let numeric = sagnac_phase(&path, &field, wavelength).unwrap();
    let closed = sagnac_phase_rigid(std::f64::consts::PI * radius * radius, rot, wavelength);
    let sagnac_rel = ((numeric - closed) / closed).abs();
    let pass = rel(sep, 599_585.0, 0.001)
        && gain == 1e8
        && rel(omega, 4e-19, 0.05)
        && (100.0..=1000.0).contains(&years)
        && sagnac_rel <= 1e-6;
    Verdict {
        id: 7,
        name: "calculators",
        pass,
        detail: format!(
            "separation {sep:.0} km; enhancement {gain:e}; rotation {omega:.3e} rad/s; integration {years:.0} years; \
             Sagnac relative error {sagnac_rel:.1e}"
        ),
    }
}

fn criterion_8(exp1: &Pool, exp3: &Pool) -> Verdict {
    Verdict {
        id: 8,
        name: "accumulation totals (documented, not reproduced)",
        pass: exp1.notes_flagged && exp3.notes_flagged,
        detail: "reports reproduce the per-second rates and carry a note on the quoted pass totals".into(),
    }
}

fn criterion_9() -> Verdict {
    let t = Instant::now();
    let report = run_experiment(&defaults(Experiment::Exp3, 1)).expect("exp3 run").report;
    let elapsed = t.elapsed().as_secs_f64();
    let quantum = report.sessions[0].window.quantum_end_s.unwrap() - report.sessions[0].window.quantum_start_s.unwrap();
    Verdict {
        id: 9,
        name: "performance",
        pass: elapsed < 10.0 && within(quantum, PASS_S, 1e-6),
        detail: format!("default exp3 {quantum:.0} s pass in {elapsed:.2} s"),
    }
}

fn main() -> ExitCode {
    let mut verdicts = vec![criterion_1()];

    let t = Instant::now();
    let exp1 = monte_carlo(Experiment::Exp1);
    let exp3 = monte_carlo(Experiment::Exp3);
    let mc_s = t.elapsed().as_secs_f64();
    verdicts.push(criterion_2(&exp1, &exp3, mc_s));
    verdicts.push(criterion_3(&exp3));
    verdicts.push(criterion_4());
    verdicts.push(criterion_5());
    verdicts.push(criterion_6());
    verdicts.push(criterion_7());
    verdicts.push(criterion_8(&exp1, &exp3));
    verdicts.push(criterion_9());

    let timing = Pool::mean(&exp1.within_2ns).min(Pool::mean(&exp3.within_2ns));
    println!("info: mean share of true pairs within 2 ns after correction: {:.4}", timing);
    println!("info: slowest exp1 pass {:.2} s, total exp1 {:.0} s", exp1.max_wall_s, exp1.wall_s);

    let mut failed = 0;
    for v in &verdicts {
        println!("{} {} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.id, v.name, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {} failed", verdicts.len() - failed, failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
