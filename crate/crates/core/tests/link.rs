//! Receiver behaviour on simulated streams and reproducibility of scenario
//! runs.

use underlay::channel::{add_noise, seeded_rng};
use underlay::codes::ChipSequence;
use underlay::frame::{build_frame, FrameConfig};
use underlay::rx::{calibrate_threshold, decode_stream, DetectorConfig};
use underlay::scenario::{self, Format, Params, Scenario, ScenarioSpec};
use underlay::units::db_to_linear;

/// A frame planted after a random-length gap is reported at its exact chip
/// offset in at least 99% of 1,000 trials at 6 dB.
#[test]
fn decode_offset_exact_at_6db() {
    let cfg = FrameConfig::default();
    let detector = DetectorConfig::for_frames(&cfg, 0.6).unwrap();
    let trials = 1_000;
    let mut exact = 0;
    for t in 0..trials {
        let offset = 1_000 + (t * 7919) % 4_000;
        let frame = build_frame(t as u8, &[0xA5; 15], &cfg).unwrap();
        let mut x = vec![0.0; offset];
        x.extend_from_slice(&frame.samples);
        x.resize(x.len() + 1_000, 0.0);
        add_noise(&mut x, db_to_linear(-6.0), &mut seeded_rng(t as u64, 0));
        let (frames, _) = decode_stream(&ChipSequence::new(x), &detector, &cfg).unwrap();
        if frames.len() == 1 && frames[0].offset == offset {
            exact += 1;
        }
    }
    assert!(exact * 100 >= trials * 99, "{exact}/{trials} exact");
}

/// False alarms fall and misses rise as the threshold increases.
#[test]
fn threshold_monotonicity() {
    let cal = calibrate_threshold(0.01, 0.0, 300, 5).unwrap();
    for pair in cal.curve.windows(2) {
        let ((t0, fa0, miss0), (t1, fa1, miss1)) = (pair[0], pair[1]);
        assert!(t1 > t0);
        assert!(fa1 <= fa0, "false alarms rose between {t0} and {t1}");
        assert!(miss1 >= miss0, "misses fell between {t0} and {t1}");
    }
    assert!(cal.false_alarm_rate() <= 0.01);
}

fn small(scenario: Scenario) -> ScenarioSpec {
    let mut params = Params::default();
    for (k, v) in [
        ("snr_grid", "0,1"),
        ("packets", "40"),
        ("batch", "20"),
        ("coex_snr_grid", "-7.1,-1.4"),
        ("n_grid", "2,4"),
        ("mu_frames", "20"),
        ("cal_trials", "50"),
    ] {
        params.set(k, v).unwrap();
    }
    ScenarioSpec {
        scenario,
        params,
        seed: 99,
        output_path: "unused".into(),
        format: Format::Csv,
    }
}

fn read_outputs(m: &scenario::RunManifest) -> Vec<Vec<u8>> {
    m.outputs
        .iter()
        .map(|p| std::fs::read(p).unwrap())
        .collect()
}

/// Same spec and seed give byte-identical files, whatever the worker count,
/// and the manifest alone reproduces them.
#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for scenario in Scenario::ALL {
        for format in [Format::Csv, Format::Json] {
            let mut spec = small(scenario);
            spec.format = format;
            spec.output_path = dir.path().join(format!("{scenario}-a.{format}"));
            let a = scenario::execute(&spec, Some(1)).unwrap();
            spec.output_path = dir.path().join(format!("{scenario}-b.{format}"));
            let b = scenario::execute(&spec, Some(3)).unwrap();
            assert_eq!(read_outputs(&a), read_outputs(&b), "{scenario} {format}");

            let again = dir.path().join(format!("{scenario}-c.{format}"));
            let c = scenario::rerun(
                &scenario::manifest_path(&dir.path().join(format!("{scenario}-a.{format}"))),
                Some(&again),
                None,
            )
            .unwrap();
            assert_eq!(
                read_outputs(&a),
                read_outputs(&c),
                "{scenario} {format} rerun"
            );
            assert_eq!(a.results, c.results);
            assert_eq!(a.params, c.params);
        }
    }
}

#[test]
fn manifest_records_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small(Scenario::PerSweep);
    spec.output_path = dir.path().join("per.csv");
    let m = scenario::execute(&spec, None).unwrap();
    let text = std::fs::read_to_string(scenario::manifest_path(&spec.output_path)).unwrap();
    let parsed: scenario::RunManifest = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, m);
    assert_eq!(m.scenario, "per-sweep");
    assert_eq!(m.seed, 99);
    assert_eq!(m.params["idle_compression"], "30");
    assert_eq!(m.params["snr_grid"], "0,1");
    assert_eq!(m.derived_seeds.len(), 3);
    assert_eq!(m.derived_seeds[1].seed, 99 + (1 << 32));
    assert_eq!(m.results[0].rows.len(), 6);
}

#[test]
fn out_of_domain_values_are_named() {
    let mut p = Params::default();
    let cases = [
        ("beta", "1.5"),
        ("exp_beta", "-0.1"),
        ("payload_grid", "10,16"),
        ("coex_payload", "16"),
        ("lc", "48"),
        ("n_grid", "64"),
        ("f_ghz", "7"),
    ];
    for (key, value) in cases {
        let mut q = p.clone();
        q.set(key, value).unwrap();
        match q.validate() {
            Err(underlay::Error::OutOfDomain { key: k, .. }) => assert_eq!(k, key),
            other => panic!("{key}={value}: {other:?}"),
        }
    }
    assert!(matches!(
        p.set("no_such_key", "1"),
        Err(underlay::Error::UnknownParameter(_))
    ));
    assert!(matches!(
        p.set("packets", "many"),
        Err(underlay::Error::OutOfDomain { .. })
    ));
    assert!(matches!(
        p.apply_config_str("[section]\nbeta = 1"),
        Err(underlay::Error::Config(_) | underlay::Error::OutOfDomain { .. })
    ));
}

#[test]
fn config_file_overrides_defaults() {
    let mut p = Params::default();
    p.apply_config_str("beta = 0.5\nsnr_grid = [0, 2.5, 5]\nlc = 128\nperiodicity = \"24:1\"\n")
        .unwrap();
    assert_eq!(p.beta, 0.5);
    assert_eq!(p.snr_grid.values(), &[0.0, 2.5, 5.0]);
    assert_eq!(p.lc, 128);
    assert_eq!(p.periodicity.0.len(), 1);
    p.validate().unwrap();
}
