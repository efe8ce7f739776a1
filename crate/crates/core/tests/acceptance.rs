//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Every criterion also checks its runtime budget.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use underlay::analytic::{
    ber_bpsk, capacity_coex_for, lte_throughput_ratio, network_capacity, users, Case, CoexParams,
    LinkParams,
};
use underlay::channel::{add_noise, seeded_rng};
use underlay::codes::{self, hadamard_code, hard_decision, MAX_ORDER};
use underlay::frame::{build_frame, parse_frame, FrameConfig, MacFrame, MAX_PAYLOAD, PREAMBLE_LEN};
use underlay::rx::calibrate_threshold;
use underlay::scenario::{self, Format, Params, Scenario, ScenarioSpec, Table};
use underlay::traffic::{build_ledger, TrafficProfile};
use underlay::units::db_to_linear;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(cond: bool, pass: String, fail: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(pass)
    } else {
        Err(fail())
    }
}

/// Criterion 1: default link budget: 13 users per 1 MHz channel, 260 over 20 channels.
fn capacity_golden() -> Outcome {
    let link = LinkParams::default();
    let n = link.capacity().map_err(|e| e.to_string())?;
    let per_channel = users(n);
    let network = network_capacity(n, 20);
    let msg = format!("N = {n:.3} -> {per_channel} users/channel, {network} network");
    check(per_channel == 13 && network == 260, msg.clone(), || msg)
}

/// Criterion 2: Spread BPSK over real AWGN against Q(sqrt(2 Eb/N0)), 10^5 bits per point.
fn ber_oracle() -> Outcome {
    let lc = 64usize;
    let code = hadamard_code(lc, 1).unwrap();
    let bits_per_point = 100_000usize;
    let mut lines = Vec::new();
    let mut ok = true;
    for (i, ebn0_db) in [0.0, 2.0, 4.0, 6.0, 8.0].into_iter().enumerate() {
        // Unit-amplitude chips: Eb = L_c, real noise N0/2 = sigma^2 per chip.
        let sigma2 = lc as f64 / (2.0 * db_to_linear(ebn0_db));
        let mut data = seeded_rng(i as u64, 2);
        let mut noise = seeded_rng(i as u64, 0);
        let mut errors = 0u64;
        for _ in 0..bits_per_point / 1000 {
            let bits: Vec<bool> = (0..1000).map(|_| rand::Rng::random(&mut data)).collect();
            let mut chips = codes::spread(&bits, &code).unwrap().samples;
            add_noise(&mut chips, sigma2, &mut noise);
            let soft = codes::despread(&chips, &code).unwrap();
            errors += soft
                .iter()
                .zip(&bits)
                .filter(|(s, b)| hard_decision(**s) != **b)
                .count() as u64;
        }
        let p = ber_bpsk(ebn0_db);
        let n = bits_per_point as f64;
        let measured = errors as f64 / n;
        let tol = 3.0 * (p * (1.0 - p) / n).sqrt();
        ok &= (measured - p).abs() <= tol;
        lines.push(format!(
            "{ebn0_db} dB: {measured:.2e} vs {p:.2e} (+/-{tol:.1e})"
        ));
    }
    check(ok, lines.join("; "), || lines.join("; "))
}

/// Criterion 3: Despread SINR of n equal-power users vs S / ((n - 1) S + eta).
fn multiuser_sinr() -> Outcome {
    let mut p = Params::default();
    p.set("n_grid", "2,4,8,13").unwrap();
    let out = scenario::run(Scenario::Multiuser, &p, 1).map_err(|e| e.to_string())?;
    let t = &out.tables[0];
    let measured = t.floats("mean_soft_sinr_db").unwrap();
    let formula = t.floats("formula_sinr_db").unwrap();
    let ns = t.floats("n_users").unwrap();
    let mut ok = true;
    let lines: Vec<String> = ns
        .iter()
        .zip(measured.iter().zip(&formula))
        .map(|(n, (m, f))| {
            ok &= (m - f).abs() <= 1.0;
            format!("n={n}: {m:.2} dB vs {f:.2} dB")
        })
        .collect();
    check(ok, lines.join("; "), || lines.join("; "))
}

fn per_columns(t: &Table, x: &str, group: &str) -> Vec<(f64, Vec<(f64, f64)>)> {
    let xs = t.floats(x).unwrap();
    let gs = t.floats(group).unwrap();
    let per = t.floats("per").unwrap();
    let mut out: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
    for ((x, g), p) in xs.into_iter().zip(gs).zip(per) {
        match out.iter_mut().find(|(k, _)| *k == g) {
            Some((_, v)) => v.push((x, p)),
            None => out.push((g, vec![(x, p)])),
        }
    }
    out
}

/// Criterion 4: PER against SNR for payloads {10, 12, 15} bytes, 10^3 packets a point.
fn per_curve_shape() -> Outcome {
    let p = Params::default();
    let out = scenario::run(Scenario::PerSweep, &p, 1).map_err(|e| e.to_string())?;
    let t = &out.tables[0];
    let columns = per_columns(t, "snr_db", "payload_bytes");
    let mut problems = Vec::new();
    for (pl, col) in &columns {
        for w in col.windows(2) {
            if w[1].1 > w[0].1 {
                problems.push(format!(
                    "PL {pl}: per rises {} -> {} at {} dB",
                    w[0].1, w[1].1, w[1].0
                ));
            }
        }
        for &(snr, per) in col {
            if snr >= 8.0 && per >= 0.01 {
                problems.push(format!("PL {pl}: per {per} at {snr} dB"));
            }
            if snr == 0.0 && per <= 0.0 {
                problems.push(format!("PL {pl}: per 0 at 0 dB"));
            }
        }
    }
    let mut max_spread: f64 = 0.0;
    for i in 0..columns[0].1.len() {
        let pers: Vec<f64> = columns.iter().map(|(_, c)| c[i].1).collect();
        let spread = pers.iter().cloned().fold(f64::MIN, f64::max)
            - pers.iter().cloned().fold(f64::MAX, f64::min);
        max_spread = max_spread.max(spread);
    }
    if max_spread > 0.05 {
        problems.push(format!("payload spread {max_spread:.3}"));
    }
    let at0: Vec<String> = columns
        .iter()
        .map(|(pl, c)| format!("PL{pl}={}", c[0].1))
        .collect();
    let msg = format!(
        "per at 0 dB {}; max payload spread {max_spread:.3}",
        at0.join(",")
    );
    check(problems.is_empty(), msg, || problems.join("; "))
}

/// Criterion 5: Average-case LTE throughput ratio 0.97 +/- 0.02 at N = 5 and
/// 0.88 +/- 0.03 at N = 10 with a = 0.75, b = 1, R_c = 5.5.
fn lte_degradation() -> Outcome {
    let link = LinkParams::default();
    let coex = CoexParams::default();
    let r5 = lte_throughput_ratio(&coex, Case::Average, 5, &link).map_err(|e| e.to_string())?;
    let r10 = lte_throughput_ratio(&coex, Case::Average, 10, &link).map_err(|e| e.to_string())?;
    let msg =
        format!("ratio(5) = {r5:.4} (want 0.97+/-0.02), ratio(10) = {r10:.4} (want 0.88+/-0.03)");
    check(
        (r5 - 0.97).abs() <= 0.02 && (r10 - 0.88).abs() <= 0.03,
        msg.clone(),
        || msg,
    )
}

/// Criterion 6: M = 100, beta = 1 leaves no room for underlay users.
fn coex_infeasible() -> Outcome {
    let coex = CoexParams {
        lte_users_m: 100,
        occupancy_beta: 1.0,
        ..CoexParams::default()
    };
    let n = capacity_coex_for(&LinkParams::default(), &coex).map_err(|e| e.to_string())?;
    let msg = format!("N = {n:.3}");
    check(n < 1.0, msg.clone(), || msg)
}

/// Criterion 7: Demand vs the closed-form truncated-Pareto oracle, and below supply
/// for N = 5 at delta 2 and 3.
fn traffic_feasibility() -> Outcome {
    let profile = TrafficProfile::default();
    let link = LinkParams::default();
    let oracle = profile.devices_per_sector as f64
        * underlay::traffic::messages_per_device_per_day(&profile).unwrap()
        * profile.mean_payload_bytes();
    let mut problems = Vec::new();
    let mut parts = Vec::new();
    for delta in [2, 3] {
        let l = build_ledger(&profile, 5, delta, &link, None, 1).map_err(|e| e.to_string())?;
        let rel = l.demand_bytes_per_day / oracle - 1.0;
        if rel.abs() > 0.02 {
            problems.push(format!("demand off oracle by {:.2}%", rel * 100.0));
        }
        if !(l.feasible && l.demand_bytes_per_day < l.supply_bytes_per_day) {
            problems.push(format!("delta {delta} infeasible"));
        }
        parts.push(format!(
            "delta {delta}: demand {:.4e} (oracle {oracle:.4e}), supply {:.4e}",
            l.demand_bytes_per_day, l.supply_bytes_per_day
        ));
    }
    if (oracle / 1.94e7 - 1.0).abs() > 0.02 {
        problems.push(format!("oracle {oracle:.4e} not ~1.94e7"));
    }
    check(problems.is_empty(), parts.join("; "), || {
        problems.join("; ")
    })
}

/// Criterion 8: Orthogonality to order 1024, frame round trip for every payload
/// length, single-bit CRC detection, threshold monotonicity, byte-identical
/// reruns.
fn property_suites() -> Outcome {
    let mut problems = Vec::new();

    let mut order = 2;
    while order <= MAX_ORDER {
        let rows: Vec<_> = (0..order)
            .map(|i| hadamard_code(order, i).unwrap())
            .collect();
        for i in 0..order {
            for j in i..order {
                let want = if i == j { order as f64 } else { 0.0 };
                if rows[i].dot(&rows[j]) != want {
                    problems.push(format!("order {order} rows {i},{j} not orthogonal"));
                }
            }
        }
        order *= 2;
    }

    let cfg = FrameConfig::default();
    for len in 0..=MAX_PAYLOAD {
        let data: Vec<u8> = (0..len as u8).map(|b| b.wrapping_mul(91) ^ 0x3C).collect();
        let chips = build_frame(0x7E, &data, &cfg).unwrap();
        let soft =
            codes::despread(&chips.samples[PREAMBLE_LEN..], &cfg.data_code().unwrap()).unwrap();
        let expect = MacFrame::new(0x7E, &data).unwrap();
        match parse_frame(&soft) {
            Ok((f, true)) if f == expect => {}
            other => problems.push(format!("len {len} round trip: {other:?}")),
        }
        let bits = expect.to_bits();
        for pos in 0..bits.len() {
            let mut flipped = bits.clone();
            flipped[pos] = !flipped[pos];
            let soft: Vec<f64> = flipped
                .iter()
                .map(|&b| codes::bpsk_symbol(b))
                .chain(std::iter::repeat_n(1.0, 8 * MAX_PAYLOAD))
                .collect();
            if matches!(parse_frame(&soft), Ok((ref f, true)) if *f == expect) {
                problems.push(format!("len {len}: bit {pos} flip undetected"));
            } else if let Ok((_, true)) = parse_frame(&soft) {
                problems.push(format!("len {len}: bit {pos} flip passed CRC"));
            }
        }
    }

    let cal = calibrate_threshold(0.01, 0.0, 300, 3).map_err(|e| e.to_string())?;
    for w in cal.curve.windows(2) {
        if w[1].1 > w[0].1 || w[1].2 < w[0].2 {
            problems.push(format!("calibration curve not monotone at {}", w[1].0));
        }
    }

    let dir = std::env::temp_dir().join(format!("underlay-acceptance-{}", std::process::id()));
    let mut params = Params::default();
    params.set("packets", "100").unwrap();
    params.set("snr_grid", "0:2:1").unwrap();
    let mut spec = ScenarioSpec {
        scenario: Scenario::PerSweep,
        params,
        seed: 2024,
        output_path: dir.join("a.csv"),
        format: Format::Csv,
    };
    let a = scenario::execute(&spec, Some(1)).map_err(|e| e.to_string())?;
    spec.output_path = dir.join("b.csv");
    let b = scenario::execute(&spec, None).map_err(|e| e.to_string())?;
    let c = scenario::rerun(
        &scenario::manifest_path(&dir.join("a.csv")),
        Some(&dir.join("c.csv")),
        None,
    )
    .map_err(|e| e.to_string())?;
    let read = |m: &scenario::RunManifest| std::fs::read(&m.outputs[0]).unwrap();
    if read(&a) != read(&b) || read(&a) != read(&c) {
        problems.push("reruns differ".into());
    }
    let _ = std::fs::remove_dir_all(&dir);

    check(
        problems.is_empty(),
        "orthogonality, round trip, CRC, threshold monotonicity, determinism".into(),
        || problems.join("; "),
    )
}

/// Criterion 9: Coexistence envelope over CDMA SNR -7.1 .. -1.4 dB.
fn coex_envelope() -> Outcome {
    let p = Params::default();
    let out = scenario::run(Scenario::Coex, &p, 1).map_err(|e| e.to_string())?;
    let t = &out.tables[0];
    let snr = t.floats("cdma_snr_db").unwrap();
    let per = t.floats("cdma_per").unwrap();
    let ratio = t.floats("lte_throughput_ratio").unwrap();
    let mut problems = Vec::new();
    if snr.first() != Some(&-7.1) || snr.last() != Some(&-1.4) {
        problems.push(format!("grid {snr:?}"));
    }
    for ((s, pe), r) in snr.iter().zip(&per).zip(&ratio) {
        if !(0.0..=0.35).contains(pe) {
            problems.push(format!("per {pe} at {s} dB"));
        }
        if 1.0 - r > 0.25 {
            problems.push(format!("LTE degradation {:.3} at {s} dB", 1.0 - r));
        }
    }
    if ratio.windows(2).any(|w| w[1] > w[0]) {
        problems.push("LTE ratio rises with CDMA SNR".into());
    }
    let max_per = per.iter().cloned().fold(0.0, f64::max);
    let worst = 1.0 - ratio.iter().cloned().fold(1.0, f64::min);
    let msg = format!(
        "max per {max_per:.3}, max LTE degradation {:.1}%",
        worst * 100.0
    );
    check(problems.is_empty(), msg, || problems.join("; "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "capacity golden number",
            capacity_golden,
            Duration::from_secs(1),
        ),
        ("BER oracle", ber_oracle, Duration::from_secs(60)),
        ("multi-user SINR", multiuser_sinr, Duration::from_secs(300)),
        ("PER curve shape", per_curve_shape, Duration::from_secs(600)),
        ("LTE degradation", lte_degradation, Duration::from_secs(1)),
        (
            "coexistence infeasibility",
            coex_infeasible,
            Duration::from_secs(1),
        ),
        (
            "traffic feasibility",
            traffic_feasibility,
            Duration::from_secs(60),
        ),
        ("property suites", property_suites, Duration::from_secs(300)),
        (
            "coexistence envelope",
            coex_envelope,
            Duration::from_secs(600),
        ),
    ];
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if took <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; took {took:.1?} > {budget:?}")),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "criterion {}: {status} {name} ({took:.2?}) - {detail}",
            i + 1
        );
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
