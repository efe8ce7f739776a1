//! Named, seeded experiments.
//!
//! A run is fully determined by `(scenario, params, seed)`. Sweep points run
//! in parallel but rows are assembled in grid order, and each point draws from
//! its own derived seed, so output bytes do not depend on the worker count.
//!
//! Seed rule: point `i` uses `seed + (i << 32)`, trial `t` of a point uses
//! `point seed + t`. The per-sweep and coex scenarios index points by payload
//! size only, so every SNR of a payload column sees the same data and the same
//! unit-variance noise draws (common random numbers); this keeps PER columns
//! from wiggling against SNR through sampling noise alone.

mod output;
mod params;
pub mod sim;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

pub use output::{
    manifest_path, output_paths, render, Cell, DerivedSeed, Format, RunManifest, Table,
};
pub use params::{Grid, Mix, ParamValue, Params, KEYS};

use crate::analytic::{
    self, ber_bpsk, capacity_coex, capacity_standalone, coex_lte_power_into_cdma, lte_sinr,
    lte_sinr_at, lte_throughput, network_capacity, reuse_factor, users, Case,
};
use crate::channel::InterfererConfig;
use crate::codes::DEFAULT_CHIP_RATE_HZ;
use crate::error::{invalid, Error, Result};
use crate::rx::{calibrate_threshold_with, DetectorConfig, LinkReport};
use crate::traffic::{build_ledger, daily_demand_bytes};
use crate::units::{db_to_linear, dbm_to_mw, linear_to_db};

use sim::{gap_chips, multiuser_point, split_impairment, LinkSim};

pub const TOOL_NAME: &str = "underlay";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    PerSweep,
    Multiuser,
    Coex,
    CapacityTables,
    TrafficLedger,
    Calibrate,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::PerSweep,
        Scenario::Multiuser,
        Scenario::Coex,
        Scenario::CapacityTables,
        Scenario::TrafficLedger,
        Scenario::Calibrate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::PerSweep => "per-sweep",
            Scenario::Multiuser => "multiuser",
            Scenario::Coex => "coex",
            Scenario::CapacityTables => "capacity-tables",
            Scenario::TrafficLedger => "traffic-ledger",
            Scenario::Calibrate => "calibrate",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| invalid(format!("unknown scenario `{s}`")))
    }
}

/// One requested run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub params: Params,
    pub seed: u64,
    pub output_path: PathBuf,
    pub format: Format,
}

impl ScenarioSpec {
    /// Spec recorded in a manifest.
    pub fn from_manifest(m: &RunManifest) -> Result<Self> {
        Ok(Self {
            scenario: m.scenario.parse()?,
            params: Params::from_map(&m.params)?,
            seed: m.seed,
            output_path: PathBuf::from(&m.output_path),
            format: m.format,
        })
    }
}

/// Tables plus the seeds that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub derived_seeds: Vec<DerivedSeed>,
}

pub fn point_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64) << 32)
}

/// Computes a scenario's tables without touching the filesystem.
pub fn run(scenario: Scenario, params: &Params, seed: u64) -> Result<RunOutput> {
    params.validate()?;
    match scenario {
        Scenario::PerSweep => run_per_sweep(params, seed),
        Scenario::Multiuser => run_multiuser(params, seed),
        Scenario::Coex => run_coex(params, seed),
        Scenario::CapacityTables => run_capacity_tables(params),
        Scenario::TrafficLedger => run_traffic_ledger(params, seed),
        Scenario::Calibrate => run_calibrate(params, seed),
    }
}

/// Runs on a pool of `workers` threads (all cores when `None`), writes the
/// data files and the sidecar manifest, and returns the manifest.
pub fn execute(spec: &ScenarioSpec, workers: Option<usize>) -> Result<RunManifest> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    let out = pool.install(|| run(spec.scenario, &spec.params, spec.seed))?;
    let paths = output_paths(&spec.output_path, spec.format, &out.tables);
    let files = render(spec.scenario.name(), spec.format, &out.tables)?;
    for (path, body) in paths.iter().zip(&files) {
        write_file(path, body)?;
    }
    let manifest = RunManifest {
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario: spec.scenario.name().into(),
        seed: spec.seed,
        format: spec.format,
        output_path: spec.output_path.to_string_lossy().into_owned(),
        params: spec.params.to_map(),
        derived_seeds: out.derived_seeds,
        outputs: paths
            .iter()
            .map(|p| p.to_string_lossy().into_owned())
            .collect(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        results: out.tables,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_file(&manifest_path(&spec.output_path), &text)?;
    Ok(manifest)
}

/// Re-runs the spec recorded in a manifest file, optionally to a new path.
pub fn rerun(manifest: &Path, out: Option<&Path>, workers: Option<usize>) -> Result<RunManifest> {
    let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(manifest)?)?;
    let mut spec = ScenarioSpec::from_manifest(&m)?;
    if let Some(out) = out {
        spec.output_path = out.to_path_buf();
    }
    execute(&spec, workers)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, body)?;
    Ok(())
}

fn link_sim(
    params: &Params,
    payload_len: usize,
    threshold: f64,
    noise_variance: f64,
) -> Result<LinkSim> {
    let frame = params.frame_config();
    let mut detector = DetectorConfig::for_frames(&frame, threshold)?;
    detector.window_samples = params.window;
    Ok(LinkSim {
        frame,
        detector,
        payload_len,
        packets: params.packets,
        batch: params.batch,
        gap_chips: gap_chips(params.gap_ms, DEFAULT_CHIP_RATE_HZ, params.idle_compression),
        noise_variance,
        interferer: None,
    })
}

fn report_cells(r: &LinkReport) -> Vec<Cell> {
    vec![
        r.per.into(),
        r.packets_sent.into(),
        r.packets_detected.into(),
        r.packets_crc_ok.into(),
        r.false_detections.into(),
        r.mean_snr_db.into(),
    ]
}

const REPORT_COLUMNS: [&str; 6] = [
    "per",
    "packets",
    "packets_detected",
    "packets_crc_ok",
    "false_detections",
    "mean_snr_db",
];

fn run_per_sweep(params: &Params, seed: u64) -> Result<RunOutput> {
    let payloads = params.payload_grid.integers().expect("validated");
    let points: Vec<(f64, usize, usize)> = params
        .snr_grid
        .values()
        .iter()
        .flat_map(|&snr| {
            payloads
                .iter()
                .enumerate()
                .map(move |(j, &pl)| (snr, j, pl as usize))
        })
        .collect();
    let reports = points
        .par_iter()
        .map(|&(snr, j, pl)| {
            link_sim(params, pl, params.threshold, db_to_linear(-snr))?.run(point_seed(seed, j))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut columns = vec!["snr_db", "payload_bytes"];
    columns.extend(REPORT_COLUMNS);
    let mut table = Table::new("per", &columns);
    for (&(snr, _, pl), r) in points.iter().zip(&reports) {
        let mut row = vec![snr.into(), pl.into()];
        row.extend(report_cells(r));
        table.push(row);
    }
    let derived_seeds = payloads
        .iter()
        .enumerate()
        .map(|(j, pl)| DerivedSeed {
            point: format!("payload_bytes={pl}"),
            seed: point_seed(seed, j),
        })
        .collect();
    Ok(RunOutput {
        tables: vec![table],
        derived_seeds,
    })
}

fn run_multiuser(params: &Params, seed: u64) -> Result<RunOutput> {
    let link = params.link();
    let eta_over_s = match params.mu_snr_db {
        Some(snr) => db_to_linear(-snr),
        None => link.eta_over_s()?,
    };
    let ns: Vec<usize> = params
        .n_grid
        .integers()
        .expect("validated")
        .into_iter()
        .map(|n| n as usize)
        .collect();
    let points = ns
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            multiuser_point(
                n,
                params.lc,
                eta_over_s,
                params.mu_frames,
                point_seed(seed, i),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let lc = params.lc as f64;
    let frame_bits = crate::frame::frame_bits_len(15) as i32;
    let mut table = Table::new(
        "multiuser",
        &[
            "n_users",
            "target_per",
            "mean_soft_sinr_db",
            "formula_sinr_db",
            "ber",
            "formula_ber",
            "formula_per",
            "frames",
        ],
    );
    for (&n, p) in ns.iter().zip(&points) {
        // S / ((N - 1) S + eta), per chip.
        let formula = 1.0 / ((n as f64 - 1.0) + eta_over_s);
        let formula_ber = crate::units::q_function((lc * formula).sqrt());
        table.push(vec![
            n.into(),
            p.per.into(),
            linear_to_db(p.soft_sinr).into(),
            linear_to_db(formula).into(),
            p.ber.into(),
            formula_ber.into(),
            (1.0 - (1.0 - formula_ber).powi(frame_bits)).into(),
            p.frames.into(),
        ]);
    }
    let derived_seeds = ns
        .iter()
        .enumerate()
        .map(|(i, n)| DerivedSeed {
            point: format!("n_users={n}"),
            seed: point_seed(seed, i),
        })
        .collect();
    Ok(RunOutput {
        tables: vec![table],
        derived_seeds,
    })
}

/// Interference-to-noise ratio of the experiment's LTE carrier inside the
/// CDMA channel, `Q_Rc^L / eta`.
pub fn experiment_inr(params: &Params) -> Result<f64> {
    let link = params.link();
    let q = coex_lte_power_into_cdma(&params.exp_coex(), params.rd_m, params.f_ghz)?;
    Ok(db_to_linear(q - link.noise_dbm()))
}

fn run_coex(params: &Params, seed: u64) -> Result<RunOutput> {
    let link = params.link();
    let exp = params.exp_coex();
    let inr = experiment_inr(params)?;
    let eta_mw = dbm_to_mw(link.noise_dbm());
    let sinrs = params.coex_snr_grid.values().to_vec();
    let point = point_seed(seed, 0);
    let reports = sinrs
        .par_iter()
        .map(|&sinr| {
            let (noise, interference) = split_impairment(sinr, inr);
            let mut sim = link_sim(params, params.coex_payload, params.coex_threshold, noise)?;
            if interference > 0.0 {
                sim.interferer = Some(InterfererConfig {
                    power_ratio_db: linear_to_db(interference),
                    num_tones: params.tones,
                    tone_spacing_hz: params.tone_spacing_hz,
                    occupancy: params.exp_beta,
                    chip_rate_hz: DEFAULT_CHIP_RATE_HZ,
                });
            }
            sim.run(point)
        })
        .collect::<Result<Vec<_>>>()?;

    let t0 = lte_throughput(lte_sinr_at(&exp, Case::Average, 0, 0.0, &link)?, &exp);
    let mut columns = vec!["cdma_snr_db", "cdma_per"];
    columns.extend(&REPORT_COLUMNS[1..]);
    columns.extend(["inr_db", "lte_throughput_bps", "lte_throughput_ratio"]);
    let mut table = Table::new("coex", &columns);
    for (&sinr, r) in sinrs.iter().zip(&reports) {
        // Received CDMA power implied by the SINR against noise plus LTE.
        let pr_c = db_to_linear(sinr) * eta_mw * (1.0 + inr);
        let t = lte_throughput(
            lte_sinr_at(&exp, Case::Average, params.exp_n, pr_c, &link)?,
            &exp,
        );
        let mut row: Vec<Cell> = vec![sinr.into()];
        row.extend(report_cells(r));
        row.extend([linear_to_db(inr).into(), t.into(), (t / t0).into()]);
        table.push(row);
    }
    Ok(RunOutput {
        tables: vec![table],
        derived_seeds: vec![DerivedSeed {
            point: format!("payload_bytes={}", params.coex_payload),
            seed: point,
        }],
    })
}

fn run_capacity_tables(params: &Params) -> Result<RunOutput> {
    let link = params.link();
    let eta_over_s = link.eta_over_s()?;

    let mut fig1 = Table::new(
        "ber-capacity",
        &["lc", "ebn0_db", "ber", "capacity_n", "users_per_channel"],
    );
    for &lc in params.lc_grid.values() {
        for &e in params.ebn0_grid.values() {
            let n = capacity_standalone(lc, db_to_linear(e), eta_over_s);
            fig1.push(vec![
                lc.into(),
                e.into(),
                ber_bpsk(e).into(),
                n.into(),
                users(n).into(),
            ]);
        }
    }

    let mut fig2 = Table::new(
        "coex-capacity",
        &[
            "lte_users_m",
            "beta",
            "q_lte_dbm",
            "capacity_n",
            "users_per_channel",
        ],
    );
    let s_mw = dbm_to_mw(link.rx_power_dbm()?);
    let eta_mw = dbm_to_mw(link.noise_dbm());
    for &m in params.m_grid.values() {
        for &beta in params.beta_grid.values() {
            let coex = analytic::CoexParams {
                lte_users_m: m as u32,
                occupancy_beta: beta,
                ..params.coex()
            };
            let q = coex_lte_power_into_cdma(&coex, params.rd_m, params.f_ghz)?;
            let n = capacity_coex(
                link.processing_gain(),
                db_to_linear(params.ebn0_db),
                s_mw,
                dbm_to_mw(q),
                eta_mw,
            );
            fig2.push(vec![
                m.into(),
                beta.into(),
                q.into(),
                n.into(),
                users(n).into(),
            ]);
        }
    }

    let coex = params.coex();
    let mut fig3 = Table::new(
        "lte-throughput",
        &[
            "n_cdma",
            "case",
            "sinr_db",
            "throughput_bps",
            "throughput_ratio",
        ],
    );
    for case in [Case::Worst, Case::Average] {
        let t0 = lte_throughput(lte_sinr(&coex, case, 0, &link)?, &coex);
        for &n in params.n_cdma_grid.values() {
            let g = lte_sinr(&coex, case, n as u32, &link)?;
            let t = lte_throughput(g, &coex);
            fig3.push(vec![
                n.into(),
                case.name().into(),
                linear_to_db(g).into(),
                t.into(),
                (t / t0).into(),
            ]);
        }
    }

    let n = link.capacity()?;
    let mut summary = Table::new(
        "summary",
        &[
            "rx_power_s_dbm",
            "eta_over_s",
            "capacity_n",
            "users_per_channel",
            "channels",
            "network_capacity",
            "code_groups",
            "reuse_factor",
        ],
    );
    summary.push(vec![
        link.rx_power_dbm()?.into(),
        eta_over_s.into(),
        n.into(),
        users(n).into(),
        params.channels.into(),
        network_capacity(n, u64::from(params.channels)).into(),
        params.code_groups.into(),
        reuse_factor(params.channels, params.code_groups)?.into(),
    ]);

    Ok(RunOutput {
        tables: vec![fig1, fig2, fig3, summary],
        derived_seeds: Vec::new(),
    })
}

fn run_traffic_ledger(params: &Params, seed: u64) -> Result<RunOutput> {
    let profile = params.traffic();
    let link = params.link();
    let demand = daily_demand_bytes(&profile, seed)?;
    let mut table = Table::new(
        "ledger",
        &[
            "series",
            "n_simultaneous",
            "delta",
            "bytes_per_day",
            "feasible",
        ],
    );
    table.push(vec![
        "ideal demand".into(),
        Cell::Empty,
        Cell::Empty,
        demand.into(),
        Cell::Empty,
    ]);
    table.push(vec![
        "NB-IoT reference".into(),
        Cell::Empty,
        Cell::Empty,
        params.nbiot_ref.into(),
        params
            .nbiot_ref
            .map(|r| r >= demand)
            .map_or(Cell::Empty, Cell::Bool),
    ]);
    for (i, delta) in params
        .delta_grid
        .integers()
        .expect("validated")
        .into_iter()
        .enumerate()
    {
        let ledger = build_ledger(
            &profile,
            params.n_sim,
            delta as u32,
            &link,
            params.nbiot_ref,
            seed,
        )?;
        table.push(vec![
            format!("CDMA case {}", i + 1).as_str().into(),
            ledger.n_simultaneous.into(),
            ledger.repetition_delta.into(),
            ledger.supply_bytes_per_day.into(),
            ledger.feasible.into(),
        ]);
    }
    Ok(RunOutput {
        tables: vec![table],
        derived_seeds: vec![DerivedSeed {
            point: "demand".into(),
            seed,
        }],
    })
}

fn run_calibrate(params: &Params, seed: u64) -> Result<RunOutput> {
    let cal = calibrate_threshold_with(
        &params.frame_config(),
        params.window,
        params.target_fa,
        params.cal_snr_db,
        params.cal_trials,
        seed,
    );
    // An unreachable target still reports the measured curve.
    let (curve, chosen) = match cal {
        Ok(c) => (c.curve.clone(), Some(c.threshold)),
        Err(Error::CalibrationFailure { .. }) => {
            let c = calibrate_threshold_with(
                &params.frame_config(),
                params.window,
                1.0,
                params.cal_snr_db,
                params.cal_trials,
                seed,
            )?;
            (c.curve, None)
        }
        Err(e) => return Err(e),
    };
    let mut table = Table::new(
        "calibration",
        &["threshold", "false_alarm_rate", "miss_rate", "selected"],
    );
    for (t, fa, miss) in curve {
        table.push(vec![
            t.into(),
            fa.into(),
            miss.into(),
            (Some(t) == chosen).into(),
        ]);
    }
    Ok(RunOutput {
        tables: vec![table],
        derived_seeds: vec![DerivedSeed {
            point: "calibration".into(),
            seed,
        }],
    })
}
