//! Channel impairments: path loss, AWGN, asynchronous multi-user
//! superposition and a gated multi-tone stand-in for a co-channel LTE uplink.
//!
//! All randomness is drawn from `ChaCha8Rng` seeded with an explicit `u64`.
//! Independent purposes (noise, interferer phases, gating) use separate
//! ChaCha streams of the same seed, so changing one never shifts another.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codes::{mean_power, ChipSequence, DEFAULT_CHIP_RATE_HZ};
use crate::error::{invalid, Result};
use crate::units::db_to_linear;

pub(crate) const NOISE_STREAM: u64 = 0;
pub(crate) const INTERFERER_STREAM: u64 = 1;

/// LTE subframe duration; the interferer is gated at this granularity.
pub const SUBFRAME_S: f64 = 1e-3;

/// A ChaCha8 generator on a fixed stream of `seed`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Path loss model valid for 2 GHz < f < 6 GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub distance_m: f64,
    pub freq_ghz: f64,
}

impl PathLossModel {
    pub fn loss_db(&self) -> Result<f64> {
        pathloss_db(self.distance_m, self.freq_ghz)
    }
}

/// `36.7 log10(d[m]) + 22.7 + 26 log10(f[GHz])`.
pub fn pathloss_db(distance_m: f64, freq_ghz: f64) -> Result<f64> {
    if !(freq_ghz > 2.0 && freq_ghz < 6.0) {
        return Err(invalid(format!(
            "path loss model is valid for 2 < f < 6 GHz, got {freq_ghz} GHz"
        )));
    }
    if !(distance_m >= 1.0) {
        return Err(invalid(format!(
            "path loss model needs distance >= 1 m, got {distance_m} m"
        )));
    }
    Ok(36.7 * distance_m.log10() + 22.7 + 26.0 * freq_ghz.log10())
}

/// Adds white Gaussian noise with variance `mean(x^2) * 10^(-snr_db / 10)`.
/// `snr_db = +inf` returns the input unchanged.
pub fn awgn(chips: &ChipSequence, snr_db: f64, seed: u64) -> ChipSequence {
    let mut out = chips.clone();
    if snr_db == f64::INFINITY {
        return out;
    }
    let variance = mean_power(&chips.samples) * db_to_linear(-snr_db);
    add_noise(
        &mut out.samples,
        variance,
        &mut seeded_rng(seed, NOISE_STREAM),
    );
    out
}

/// Adds zero-mean Gaussian noise of the given variance in place.
pub fn add_noise<R: Rng + ?Sized>(samples: &mut [f64], variance: f64, rng: &mut R) {
    if variance <= 0.0 {
        return;
    }
    let sigma = variance.sqrt();
    for s in samples {
        let n: f64 = rng.sample(StandardNormal);
        *s += sigma * n;
    }
}

/// One contribution to [`superpose`]: samples, delay in chips, amplitude gain.
#[derive(Debug, Clone, Copy)]
pub struct Stream<'a> {
    pub samples: &'a [f64],
    pub delay_chips: usize,
    pub gain: f64,
}

impl<'a> Stream<'a> {
    pub fn new(samples: &'a [f64], delay_chips: usize, gain: f64) -> Self {
        Self {
            samples,
            delay_chips,
            gain,
        }
    }
}

/// Sample-wise sum of delayed, scaled streams, zero padded to the longest end.
pub fn superpose(streams: &[Stream<'_>]) -> Result<ChipSequence> {
    if streams.is_empty() {
        return Err(invalid("superpose needs at least one stream"));
    }
    let len = streams
        .iter()
        .map(|s| s.delay_chips + s.samples.len())
        .max()
        .unwrap_or(0);
    let mut out = vec![0.0; len];
    for s in streams {
        add_scaled(&mut out[s.delay_chips..], s.samples, s.gain);
    }
    Ok(ChipSequence::new(out))
}

pub(crate) fn add_scaled(dst: &mut [f64], src: &[f64], gain: f64) {
    for (d, x) in dst.iter_mut().zip(src) {
        *d += gain * x;
    }
}

/// Multi-tone OFDMA-like interferer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfererConfig {
    /// Active power relative to a unit-power CDMA signal.
    pub power_ratio_db: f64,
    pub num_tones: usize,
    pub tone_spacing_hz: f64,
    /// Fraction of subframes in which the interferer transmits (LTE occupancy).
    pub occupancy: f64,
    pub chip_rate_hz: f64,
}

impl Default for InterfererConfig {
    fn default() -> Self {
        Self {
            power_ratio_db: 0.0,
            num_tones: 32,
            tone_spacing_hz: 15_000.0,
            occupancy: 1.0,
            chip_rate_hz: DEFAULT_CHIP_RATE_HZ,
        }
    }
}

impl InterfererConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.occupancy) {
            return Err(invalid(format!(
                "occupancy {} outside [0, 1]",
                self.occupancy
            )));
        }
        if self.num_tones == 0 {
            return Err(invalid("interferer needs at least one tone"));
        }
        if !(self.tone_spacing_hz > 0.0 && self.chip_rate_hz > 0.0) {
            return Err(invalid("tone spacing and chip rate must be positive"));
        }
        Ok(())
    }

    fn subframe_samples(&self) -> usize {
        ((self.chip_rate_hz * SUBFRAME_S).round() as usize).max(1)
    }
}

/// Generates `length` samples of the interferer.
///
/// Tone `k` sits at `(k + 1) * tone_spacing_hz` with a uniformly random phase.
/// Each tone carries `P / num_tones`, so the active power is
/// `P = 10^(power_ratio_db / 10)`. Subframes are switched on with a
/// randomly phased Bresenham pattern so that the on-fraction tends to
/// `occupancy` exactly.
pub fn ofdm_interferer(length: usize, cfg: &InterfererConfig, seed: u64) -> Result<ChipSequence> {
    let mut out = vec![0.0; length];
    add_interferer(&mut out, cfg, seed)?;
    Ok(ChipSequence::with_rate(out, cfg.chip_rate_hz))
}

/// Adds the interferer of [`ofdm_interferer`] onto `samples`.
pub fn add_interferer(samples: &mut [f64], cfg: &InterfererConfig, seed: u64) -> Result<()> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(invalid("interferer length must be positive"));
    }
    if cfg.occupancy == 0.0 {
        return Ok(());
    }
    let mut rng = seeded_rng(seed, INTERFERER_STREAM);
    let power = db_to_linear(cfg.power_ratio_db);
    let amplitude = (2.0 * power / cfg.num_tones as f64).sqrt();
    let gate_phase: f64 = rng.random();
    let subframe = cfg.subframe_samples();

    // Phasor recursion, re-anchored every block to bound rounding drift.
    const ANCHOR: usize = 4096;
    let mut tone = vec![0.0; samples.len()];
    for k in 0..cfg.num_tones {
        let phase0 = TAU * rng.random::<f64>();
        let omega = TAU * (k + 1) as f64 * cfg.tone_spacing_hz / cfg.chip_rate_hz;
        let (step_im, step_re) = omega.sin_cos();
        for (block_idx, block) in tone.chunks_mut(ANCHOR).enumerate() {
            let start = (block_idx * ANCHOR) as f64;
            let (mut im, mut re) = (phase0 + omega * start).sin_cos();
            for t in block.iter_mut() {
                *t += amplitude * re;
                let next_re = re * step_re - im * step_im;
                im = re * step_im + im * step_re;
                re = next_re;
            }
        }
    }

    for (j, block) in tone.chunks(subframe).enumerate() {
        let x = j as f64;
        let on = ((x + 1.0) * cfg.occupancy + gate_phase).floor()
            > (x * cfg.occupancy + gate_phase).floor();
        if on {
            let base = j * subframe;
            add_scaled(&mut samples[base..base + block.len()], block, 1.0);
        }
    }
    Ok(())
}

/// One impairment realization for a set of unit-power user streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Per-chip SNR relative to a unit-power user signal.
    pub snr_db: f64,
    pub seed: u64,
    pub user_delays_chips: Vec<usize>,
    pub interferer: Option<InterfererConfig>,
}

impl ChannelConfig {
    /// Superposes `users` at their configured delays, then adds the interferer
    /// and noise.
    pub fn apply(&self, users: &[ChipSequence]) -> Result<ChipSequence> {
        if users.len() != self.user_delays_chips.len() {
            return Err(invalid(format!(
                "{} users but {} delays",
                users.len(),
                self.user_delays_chips.len()
            )));
        }
        let streams: Vec<Stream<'_>> = users
            .iter()
            .zip(&self.user_delays_chips)
            .map(|(u, &d)| Stream::new(&u.samples, d, 1.0))
            .collect();
        let mut rx = superpose(&streams)?;
        if let Some(interferer) = &self.interferer {
            add_interferer(&mut rx.samples, interferer, self.seed)?;
        }
        if self.snr_db != f64::INFINITY {
            add_noise(
                &mut rx.samples,
                db_to_linear(-self.snr_db),
                &mut seeded_rng(self.seed, NOISE_STREAM),
            );
        }
        Ok(rx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::{despread, hadamard_code, spread};

    #[test]
    fn pathloss_reference_points() {
        assert!((pathloss_db(600.0, 2.6205).unwrap() - 135.53).abs() < 0.01);
        assert!((pathloss_db(1.0, 2.6205).unwrap() - 33.58).abs() < 0.01);
        let slope = pathloss_db(1200.0, 3.5).unwrap() - pathloss_db(600.0, 3.5).unwrap();
        assert!((slope - 36.7 * 2f64.log10()).abs() < 1e-12);
        assert!((slope - 11.05).abs() < 0.01);
    }

    #[test]
    fn pathloss_domain() {
        assert!(pathloss_db(100.0, 2.0).is_err());
        assert!(pathloss_db(100.0, 6.0).is_err());
        assert!(pathloss_db(0.5, 2.6).is_err());
        assert!(pathloss_db(f64::NAN, 2.6).is_err());
    }

    #[test]
    fn awgn_infinite_snr_is_identity() {
        let x = ChipSequence::new(vec![1.0, -1.0, 1.0]);
        assert_eq!(awgn(&x, f64::INFINITY, 3), x);
    }

    #[test]
    fn awgn_variance_at_zero_db() {
        let n = 1_000_000;
        let x = ChipSequence::new(vec![1.0; n]);
        let y = awgn(&x, 0.0, 17);
        let var = y.samples.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 0.03, "variance {var}");
    }

    #[test]
    fn awgn_is_deterministic_per_seed() {
        let x = ChipSequence::new(vec![0.5; 1000]);
        assert_eq!(awgn(&x, 3.0, 99), awgn(&x, 3.0, 99));
        assert_ne!(awgn(&x, 3.0, 99), awgn(&x, 3.0, 100));
    }

    #[test]
    fn superpose_basics() {
        let a = [1.0, -1.0, 1.0];
        let one = superpose(&[Stream::new(&a, 0, 1.0)]).unwrap();
        assert_eq!(one.samples, a.to_vec());
        let two = superpose(&[Stream::new(&a, 0, 1.0), Stream::new(&a, 0, 1.0)]).unwrap();
        assert_eq!(two.samples, vec![2.0, -2.0, 2.0]);
        let shifted = superpose(&[Stream::new(&a, 2, 0.5), Stream::new(&[1.0], 0, 1.0)]).unwrap();
        assert_eq!(shifted.samples, vec![1.0, 0.0, 0.5, -0.5, 0.5]);
        assert!(superpose(&[]).is_err());
    }

    #[test]
    fn interferer_off_when_unoccupied() {
        let cfg = InterfererConfig {
            occupancy: 0.0,
            ..InterfererConfig::default()
        };
        let x = ofdm_interferer(10_000, &cfg, 1).unwrap();
        assert!(x.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn interferer_power() {
        let cfg = InterfererConfig {
            power_ratio_db: 0.0,
            occupancy: 1.0,
            ..InterfererConfig::default()
        };
        let x = ofdm_interferer(1_000_000, &cfg, 5).unwrap();
        let p = x.mean_power();
        assert!((p - 1.0).abs() < 0.05, "power {p}");
    }

    #[test]
    fn interferer_occupancy_fraction() {
        for occupancy in [0.25, 0.5, 0.9] {
            let cfg = InterfererConfig {
                occupancy,
                ..InterfererConfig::default()
            };
            let x = ofdm_interferer(400_000, &cfg, 8).unwrap();
            let on = x
                .samples
                .chunks(1000)
                .filter(|c| c.iter().any(|&v| v != 0.0))
                .count() as f64
                / 400.0;
            assert!(
                (on - occupancy).abs() <= 1.0 / 400.0 + 1e-12,
                "{occupancy}: {on}"
            );
        }
    }

    #[test]
    fn interferer_rejects_bad_config() {
        let bad = InterfererConfig {
            occupancy: 1.5,
            ..InterfererConfig::default()
        };
        assert!(ofdm_interferer(10, &bad, 0).is_err());
        let none = InterfererConfig {
            num_tones: 0,
            ..InterfererConfig::default()
        };
        assert!(ofdm_interferer(10, &none, 0).is_err());
        assert!(ofdm_interferer(0, &InterfererConfig::default(), 0).is_err());
    }

    #[test]
    fn channel_config_applies_delays() {
        let code = hadamard_code(16, 3).unwrap();
        let u0 = spread(&[false, true], &code).unwrap();
        let u1 = spread(&[true], &hadamard_code(16, 5).unwrap()).unwrap();
        let cfg = ChannelConfig {
            snr_db: f64::INFINITY,
            seed: 0,
            user_delays_chips: vec![0, 16],
            interferer: None,
        };
        let rx = cfg.apply(&[u0, u1]).unwrap();
        assert_eq!(rx.len(), 32);
        let soft = despread(&rx.samples, &code).unwrap();
        assert_eq!(soft, vec![16.0, -16.0]);
        assert!(cfg.apply(&[]).is_err());
    }
}
