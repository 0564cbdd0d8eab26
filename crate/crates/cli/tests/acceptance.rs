//! Acceptance checks. Each test prints one `criterion N ... PASS|FAIL` line
//! to the real stdout, so the summary is visible without `--nocapture`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use qdyne::envelopes::envelope_power_law;
use qdyne::fisher::{
    fisher_total_cs_closed_exponential, fisher_total_cs_closed_powerlaw, fisher_total_cs_numeric, fisher_total_cs_sum,
    fisher_total_cs_tail_numeric, fisher_total_qdyne_closed_exponential, fisher_total_qdyne_closed_powerlaw,
    fisher_total_qdyne_numeric, fisher_total_qdyne_sum, fisher_total_qdyne_tail_numeric, rayleigh_resolvable,
    rayleigh_threshold,
};
use qdyne::protocol::{
    larmor_shift, optimize_tau, snr_shot_noise, undersample_step, SensorPhysics, TauObjective, GAMMA_H_HZ_PER_T,
};
use qdyne::simulate::{simulate_ensemble, simulate_qdyne_trace, TraceConfig};
use qdyne::{CorrelationModel, EnvelopeKind, Execution, ProtocolTiming, ReadoutParams};

fn report(n: u32, name: &str, pass: bool, detail: &str, started: Instant) {
    let line = format!(
        "criterion {n} {name}: {} ({detail}; {:.2} s)\n",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi / lo).ln() * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[test]
fn criterion_1_envelope_fidelity() {
    let t0 = Instant::now();
    let oracle =
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/envelope_oracle.csv"))
            .expect("oracle table");
    let mut worst_oracle = 0.0f64;
    let mut rows = 0;
    for line in oracle.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let (z, c) = line.split_once(',').unwrap();
        let (z, c): (f64, f64) = (z.parse().unwrap(), c.parse().unwrap());
        worst_oracle = worst_oracle.max(rel(envelope_power_law(z).unwrap(), c));
        rows += 1;
    }
    let origin = (envelope_power_law(1e-12).unwrap() - 1.0).abs();
    let short = log_space(1e-4, 1e-2, 41)
        .into_iter()
        .map(|z| (envelope_power_law(z).unwrap().ln() + 6.0 * z).abs() / (6.0 * z))
        .fold(0.0f64, f64::max);
    let tail: Vec<f64> = log_space(1e3, 1e4, 41)
        .into_iter()
        .map(|z| envelope_power_law(z).unwrap() * z.powf(1.5))
        .collect();
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let spread = (hi - lo) / lo;

    let pass = rows == 100 && worst_oracle < 1e-8 && origin < 1e-6 && short < 0.05 && spread < 0.01;
    report(
        1,
        "envelope fidelity",
        pass,
        &format!(
            "oracle rows {rows}, max rel err {worst_oracle:.2e}; |C(0+)-1| {origin:.1e}; \
             short-time law max {:.2}% (< 5%); tail spread {:.2}% (< 1%)",
            100.0 * short,
            100.0 * spread
        ),
        t0,
    );
    assert!(pass);
}

#[test]
fn criterion_2_exponential_closed_forms() {
    let t0 = Instant::now();
    let t_d = 1e-4;
    let timing = ProtocolTiming::new(20e-6, 5e-6, 1.0).unwrap();
    let mut worst = 0.0f64;
    let mut n = 0;
    for a in log_space(0.01, 3.0, 5) {
        for l in log_space(10.0, 1e3, 5) {
            for chi in [0.05, 0.125, 0.2, 0.275, 0.35] {
                let m = CorrelationModel::new(1.0, a / t_d, t_d, EnvelopeKind::Exponential).unwrap();
                let r = ReadoutParams::from_contrast(0.04, chi).unwrap();
                let t = timing.with_total_time(l * t_d);
                let cs = rel(
                    fisher_total_cs_numeric(&m, &r, &t).unwrap().value,
                    fisher_total_cs_closed_exponential(&m, &r, &t).unwrap().value,
                );
                let qd = rel(
                    fisher_total_qdyne_numeric(&m, &r, &t).unwrap().value,
                    fisher_total_qdyne_closed_exponential(&m, &r, &t).unwrap().value,
                );
                worst = worst.max(cs).max(qd);
                n += 1;
            }
        }
    }
    let pass = n == 125 && worst < 1e-6 && t0.elapsed().as_secs() < 30;
    report(
        2,
        "exponential closed forms",
        pass,
        &format!("{n} grid points, max rel diff {worst:.2e}"),
        t0,
    );
    assert!(pass);
}

#[test]
fn criterion_3_sums_against_quadrature() {
    let t0 = Instant::now();
    let t_d = 1e-4;
    let r = ReadoutParams::new(0.04, 0.03).unwrap();
    let timing = ProtocolTiming::new(4e-6, 1e-6, 1e4 * t_d).unwrap();
    let mut worst = 0.0f64;
    for kind in [EnvelopeKind::PowerLawDiffusion, EnvelopeKind::Exponential] {
        for a in [0.1, 0.5, 2.0] {
            let m = CorrelationModel::new(1.0, a / t_d, t_d, kind).unwrap();
            let cs = rel(
                fisher_total_cs_sum(&m, &r, &timing).unwrap().value,
                fisher_total_cs_numeric(&m, &r, &timing).unwrap().value,
            );
            let qd = rel(
                fisher_total_qdyne_sum(&m, &r, &timing).unwrap().value,
                fisher_total_qdyne_numeric(&m, &r, &timing).unwrap().value,
            );
            worst = worst.max(cs).max(qd);
        }
    }
    let pass = worst < 0.01 && t0.elapsed().as_secs() < 60;
    report(
        3,
        "sums vs quadrature",
        pass,
        &format!(
            "T/T_D = 1e4, both protocols and envelopes, max rel diff {:.3}%",
            100.0 * worst
        ),
        t0,
    );
    assert!(pass);
}

#[test]
fn criterion_4_power_law_small_delta() {
    let t0 = Instant::now();
    let t_d = 1e-4;
    let delta = 0.05 / t_d;
    let r = ReadoutParams::new(0.04, 0.03).unwrap();
    let m = CorrelationModel::new(1.0, delta, t_d, EnvelopeKind::PowerLawDiffusion).unwrap();
    let mut worst = 0.0f64;
    for dt in [1e3, 1e4, 1e5] {
        let t = ProtocolTiming::new(23e-6, 2e-6, dt / delta).unwrap();
        let cs = rel(
            fisher_total_cs_closed_powerlaw(&m, &r, &t, true).unwrap().value,
            fisher_total_cs_tail_numeric(&m, &r, &t).unwrap().value,
        );
        let qd = rel(
            fisher_total_qdyne_closed_powerlaw(&m, &r, &t).unwrap().value,
            fisher_total_qdyne_tail_numeric(&m, &r, &t).unwrap().value,
        );
        worst = worst.max(cs).max(qd);
    }
    let pass = worst < 0.2;
    report(
        4,
        "power-law small-delta forms",
        pass,
        &format!(
            "dT_D = 0.05, dT in 1e3..1e5, tail-envelope quadrature, max rel diff {:.1}%",
            100.0 * worst
        ),
        t0,
    );
    assert!(pass);
}

#[test]
fn criterion_5_resolvability_thresholds() {
    let t0 = Instant::now();
    let t_d = 1e-4;
    let r = ReadoutParams::new(0.04, 0.03).unwrap();
    let model = |delta: f64| CorrelationModel::new(1.0, delta, t_d, EnvelopeKind::PowerLawDiffusion).unwrap();
    let timing = |hours: f64| ProtocolTiming::new(23e-6, 2e-6, hours * 3600.0).unwrap();
    let (lo, hi) = (2.0 * PI * 1e-6 / t_d, 2.0 * PI * 10.0 / t_d);
    let threshold = |qdyne: bool, hours: f64| -> f64 {
        let t = timing(hours);
        rayleigh_threshold(
            |d| {
                let m = model(d);
                Ok(if qdyne {
                    fisher_total_qdyne_numeric(&m, &r, &t)?.value
                } else {
                    fisher_total_cs_numeric(&m, &r, &t)?.value
                })
            },
            lo,
            hi,
            57,
        )
        .unwrap()
        .expect("a resolvable frequency in range")
    };
    let cs_drop = threshold(false, 1.0) / threshold(false, 100.0);
    let qd_drop = threshold(true, 1.0) / threshold(true, 100.0);

    let d = 2.0 * PI * 1e-2 / t_d;
    let t = timing(100.0);
    let qd_ok = rayleigh_resolvable(fisher_total_qdyne_numeric(&model(d), &r, &t).unwrap().value, d);
    let cs_ok = rayleigh_resolvable(fisher_total_cs_numeric(&model(d), &r, &t).unwrap().value, d);

    let pass = cs_drop < 10.0 && qd_drop >= 10.0 && qd_ok && !cs_ok && t0.elapsed().as_secs() < 60;
    report(
        5,
        "resolvability thresholds",
        pass,
        &format!(
            "1 h -> 100 h threshold drop: CS x{cs_drop:.2}, Qdyne x{qd_drop:.2}; \
             at (d/2pi)T_D = 1e-2, 100 h: Qdyne resolvable {qd_ok}, CS resolvable {cs_ok}"
        ),
        t0,
    );
    assert!(pass);
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_qdyne")
}

fn qdyne(args: &[&str]) -> std::process::Output {
    let out = Command::new(bin()).args(args).output().expect("run qdyne");
    assert!(
        out.status.success(),
        "qdyne {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const MONTE_CARLO: &[&str] = &[
    "pipeline",
    "--phi-rms",
    "0.5",
    "--delta",
    "5 kHz",
    "--t-d",
    "100 us",
    "--envelope",
    "exp",
    "--eta0",
    "1",
    "--eta1",
    "0.2",
    "--tau",
    "23 us",
    "--tau-o",
    "2 us",
    "--n-measurements",
    "100000",
    "--n-traces",
    "100",
    "--seed",
    "42",
    "--max-lag",
    "10 ms",
    "--fourier-max-lag",
    "1 ms",
    "--write-traces",
    "false",
];

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn criteria_6_and_7_monte_carlo() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mc");
    let mut args = MONTE_CARLO.to_vec();
    args.extend(["--out", out.to_str().unwrap()]);
    qdyne(&args);
    let stats = read_json(&out.join("stats.json"));
    let num = |k: &str| stats[k].as_f64().unwrap_or(f64::NAN);
    let (ratio, rmse, crb, fourier) = (
        num("rmse_over_crb"),
        num("rmse_hz"),
        num("crb_hz"),
        num("fourier_mean_half_fwhm_hz"),
    );
    let resolvable = stats["resolvable"].as_bool() == Some(true);
    let minutes = t0.elapsed().as_secs_f64() / 60.0;

    let pass6 = resolvable && (1.0..=3.0).contains(&ratio) && minutes < 10.0;
    report(
        6,
        "Cramer-Rao consistency",
        pass6,
        &format!("100 traces x 1e5 measurements: rmse {rmse:.1} Hz, CRB {crb:.1} Hz, rmse*sqrt(I) {ratio:.3}, resolvable {resolvable}"),
        t0,
    );
    let pass7 = rmse < fourier;
    report(
        7,
        "fit vs Fourier",
        pass7,
        &format!("rmse {rmse:.1} Hz vs mean Fourier FWHM/2 {fourier:.1} Hz"),
        t0,
    );
    assert!(pass6 && pass7);
}

#[test]
fn criterion_8_protocol_calculators() {
    let t0 = Instant::now();
    let u = undersample_step(2e6, 2e3, 10).unwrap();
    let k_ok = u.k == 111;

    let r = ReadoutParams::new(0.04, 0.03).unwrap();
    let snr_ok = [1u64, 3, 1000, 123_457].iter().all(|&n| {
        snr_shot_noise(&r, 4 * n) == 2.0 * snr_shot_noise(&r, n)
            && snr_shot_noise(&r, 16 * n) == 4.0 * snr_shot_noise(&r, n)
    });

    let shift = larmor_shift(0.1e-4, GAMMA_H_HZ_PER_T);
    let shift_ok = rel(shift, 426.0) < 1e-12;

    let physics = SensorPhysics {
        t2: 500e-6,
        depth: Some(8e-9),
        spin_density: Some(60e27),
        ..SensorPhysics::default()
    };
    let opt = |p: &SensorPhysics| {
        optimize_tau(
            TauObjective::SnrRate { tau_o: 3.5e-6 },
            p,
            &r,
            EnvelopeKind::PowerLawDiffusion,
            100e-6,
            (1e-6, 1e-3),
        )
        .unwrap()
        .x
    };
    let (with_t2, without) = (opt(&physics), opt(&physics.without_decoherence()));
    let tau_ok = with_t2 < without;

    let pass = k_ok && snr_ok && shift_ok && tau_ok && t0.elapsed().as_secs() < 5;
    report(
        8,
        "protocol calculators",
        pass,
        &format!(
            "k = {}; SNR sqrt(N) scaling exact {snr_ok}; 0.1 G -> {shift} Hz; \
             tau* {:.3} us with T2 = 500 us vs {:.3} us without",
            u.k,
            with_t2 * 1e6,
            without * 1e6
        ),
        t0,
    );
    assert!(pass);
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_9_determinism() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).display().to_string();
    let tags = p("tags.txt");
    std::fs::write(&tags, "100\n26000\n26500\n51000\n75999\n").unwrap();
    let readout_csv = p("readout.csv");
    std::fs::write(
        &readout_csv,
        "t_ns,counts0,counts1\n100,0.01,0.005\n200,0.03,0.02\n300,0.05,0.04\n",
    )
    .unwrap();

    let model = [
        "--phi-rms",
        "0.5",
        "--delta",
        "5 kHz",
        "--t-d",
        "100 us",
        "--envelope",
        "exp",
        "--eta0",
        "1",
        "--eta1",
        "0.2",
        "--tau",
        "23 us",
        "--tau-o",
        "2 us",
    ];
    let with =
        |head: &[&str], tail: &[&str]| -> Vec<String> { head.iter().chain(tail).map(|s| s.to_string()).collect() };
    let trace_file = p("trace.txt");
    let mut commands: Vec<(&str, Vec<String>)> = vec![
        (
            "envelope",
            with(&["envelope", "--kind", "power-law", "--z", "1e-4:1e4:50:log"], &[]),
        ),
        (
            "fisher",
            with(
                &[
                    "fisher",
                    "--phi-rms",
                    "1",
                    "--delta",
                    "1 kHz",
                    "--t-d",
                    "100 us",
                    "--eta0",
                    "0.04",
                    "--eta1",
                    "0.03",
                    "--tau",
                    "23 us",
                    "--total-time",
                    "1 h",
                ],
                &[],
            ),
        ),
        (
            "ratio-map",
            with(
                &[
                    "ratio-map",
                    "--x",
                    "total-time:1 h:100 h:3:log",
                    "--y",
                    "delta:10 Hz:10 kHz:3:log",
                    "--phi-rms",
                    "1",
                    "--t-d",
                    "100 us",
                ],
                &[
                    "--eta0",
                    "0.04",
                    "--eta1",
                    "0.03",
                    "--tau",
                    "23 us",
                    "--tau-o",
                    "2 us",
                    "--total-time",
                    "1 h",
                    "--delta",
                    "1 kHz",
                ],
            ),
        ),
        (
            "optimize",
            with(
                &[
                    "optimize", "--target", "tau", "--t-d", "100 us", "--tau-o", "3.5 us", "--t2", "500 us", "--depth",
                    "8 nm",
                ],
                &[
                    "--spin-density",
                    "60 nm^-3",
                    "--eta0",
                    "0.04",
                    "--eta1",
                    "0.03",
                    "--tau-min",
                    "1 us",
                    "--tau-max",
                    "1 ms",
                ],
            ),
        ),
        (
            "optimize",
            with(
                &["optimize", "--target", "readout-window", "--readout-csv", &readout_csv],
                &[],
            ),
        ),
        (
            "undersample",
            with(
                &[
                    "undersample",
                    "--larmor",
                    "2 MHz",
                    "--target",
                    "2 kHz",
                    "--n-samples",
                    "10",
                    "--drift",
                    "0.1 G",
                ],
                &[],
            ),
        ),
        (
            "simulate",
            with(&["simulate", "--n-measurements", "20000", "--seed", "7"], &model),
        ),
        (
            "simulate",
            with(
                &[
                    "simulate",
                    "--mode",
                    "cs",
                    "--tau-w",
                    "0 s:500 us:6",
                    "--n-repeats",
                    "100",
                    "--seed",
                    "7",
                ],
                &model,
            ),
        ),
        (
            "ingest",
            with(
                &[
                    "ingest",
                    &tags,
                    "--tau-tilde",
                    "25 us",
                    "--window",
                    "1 us",
                    "--n-measurements",
                    "4",
                ],
                &[],
            ),
        ),
    ];
    let pipeline = |out: &str| {
        let mut a = with(
            &[
                "pipeline",
                "--n-measurements",
                "20000",
                "--n-traces",
                "3",
                "--seed",
                "9",
                "--max-lag",
                "1 ms",
            ],
            &model,
        );
        a.extend(["--n-starts", "8", "--out", out].map(String::from));
        a
    };

    let mut mismatched: Vec<String> = Vec::new();
    let mut run_twice = |name: &str, args: &[String]| {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let (a, b) = (qdyne(&args).stdout, qdyne(&args).stdout);
        if a != b || a.is_empty() {
            mismatched.push(name.to_string());
        }
        a
    };
    for (name, args) in &commands {
        run_twice(name, args);
    }
    let trace = run_twice("simulate", &commands[6].1);
    std::fs::write(&trace_file, trace).unwrap();
    commands.clear();

    let est = with(
        &[
            "estimate",
            &trace_file,
            "--envelope",
            "exp",
            "--max-lag",
            "1 ms",
            "--n-starts",
            "8",
            "--block-duration",
            "100 ms",
            "--reference-delta",
            "5 kHz",
        ],
        &[],
    );
    run_twice("estimate", &est);

    let (pa, pb) = (p("pa"), p("pb"));
    let parallel = pipeline(&pa);
    qdyne(&parallel.iter().map(String::as_str).collect::<Vec<_>>());
    let mut sequential = pipeline(&pb);
    sequential.push("--sequential".into());
    qdyne(&sequential.iter().map(String::as_str).collect::<Vec<_>>());
    let (fa, fb) = (files(Path::new(&pa)), files(Path::new(&pb)));
    if fa != fb || fa.len() < 5 {
        mismatched.push("pipeline".into());
    }

    let cfg = TraceConfig {
        model: CorrelationModel::new(0.5, 2.0 * PI * 5e3, 100e-6, EnvelopeKind::PowerLawDiffusion).unwrap(),
        readout: ReadoutParams::new(1.0, 0.2).unwrap(),
        timing: ProtocolTiming::new(23e-6, 2e-6, 20000.0 * 25e-6).unwrap(),
        n_measurements: 20000,
        seed: 11,
        count_model: Default::default(),
        t2: None,
        clamp_negative_mean: false,
    };
    if simulate_qdyne_trace(&cfg).unwrap() != simulate_qdyne_trace(&cfg).unwrap() {
        mismatched.push("simulate_qdyne_trace".into());
    }
    let digests = |exec| -> Vec<String> {
        simulate_ensemble(&cfg, 4, exec)
            .into_iter()
            .map(|t| t.unwrap().digest())
            .collect()
    };
    if digests(Execution::Parallel) != digests(Execution::Sequential) {
        mismatched.push("simulate_ensemble".into());
    }

    let pass = mismatched.is_empty();
    report(
        9,
        "determinism",
        pass,
        &if pass {
            "all 9 CLI commands and seeded library calls byte-identical on rerun".to_string()
        } else {
            format!("differing outputs: {}", mismatched.join(", "))
        },
        t0,
    );
    assert!(pass);
}
