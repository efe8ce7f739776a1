//! Monte-Carlo link simulations behind the per-sweep, coex and multiuser
//! scenarios.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::channel::{add_interferer, add_noise, seeded_rng, InterfererConfig, NOISE_STREAM};
use crate::codes::{self, hadamard_code, hard_decision, ChipSequence};
use crate::error::Result;
use crate::frame::{build_frame, parse_frame, FrameConfig, MacFrame};
use crate::rx::{decode_stream, DetectorConfig, LinkReport};
use crate::units::db_to_linear;

/// Random payloads and addresses.
const DATA_STREAM: u64 = 2;

/// A stream of planted packets decoded by the full receiver chain.
#[derive(Debug, Clone)]
pub struct LinkSim {
    pub frame: FrameConfig,
    pub detector: DetectorConfig,
    pub payload_len: usize,
    pub packets: usize,
    /// Packets per independently generated sample stream.
    pub batch: usize,
    /// Idle chips before each packet and after the last one.
    pub gap_chips: usize,
    /// Thermal noise variance per chip, relative to the unit-power signal.
    pub noise_variance: f64,
    pub interferer: Option<InterfererConfig>,
}

impl LinkSim {
    /// Runs all packets. Batch `b` uses seed `point_seed + b` for its data,
    /// noise and interferer streams.
    ///
    /// Only CRC-valid frames at a planted offset with the planted content count
    /// as delivered; anything else that reached the CRC is a false detection.
    pub fn run(&self, point_seed: u64) -> Result<LinkReport> {
        let mut total = LinkReport::default().with_sent(0);
        let mut left = self.packets;
        let mut b = 0u64;
        while left > 0 {
            let n = left.min(self.batch);
            total = total.merge(&self.run_batch(point_seed.wrapping_add(b), n)?);
            left -= n;
            b += 1;
        }
        Ok(total)
    }

    fn run_batch(&self, seed: u64, n: usize) -> Result<LinkReport> {
        let mut data_rng = seeded_rng(seed, DATA_STREAM);
        let mut samples = Vec::new();
        let mut planted: Vec<(usize, MacFrame)> = Vec::with_capacity(n);
        for _ in 0..n {
            samples.resize(samples.len() + self.gap_chips, 0.0);
            let addr: u8 = data_rng.random();
            let payload: Vec<u8> = (0..self.payload_len).map(|_| data_rng.random()).collect();
            let chips = build_frame(addr, &payload, &self.frame)?;
            planted.push((samples.len(), MacFrame::new(addr, &payload)?));
            samples.extend_from_slice(&chips.samples);
        }
        samples.resize(samples.len() + self.gap_chips, 0.0);

        if let Some(cfg) = &self.interferer {
            add_interferer(&mut samples, cfg, seed)?;
        }
        add_noise(
            &mut samples,
            self.noise_variance,
            &mut seeded_rng(seed, NOISE_STREAM),
        );

        let rx = ChipSequence::new(samples);
        let (frames, report) = decode_stream(&rx, &self.detector, &self.frame)?;
        let delivered = frames
            .iter()
            .filter(|f| {
                planted
                    .binary_search_by_key(&f.offset, |p| p.0)
                    .is_ok_and(|i| planted[i].1 == f.frame)
            })
            .count() as u64;
        Ok(LinkReport {
            packets_crc_ok: delivered,
            false_detections: report.false_detections + (report.packets_crc_ok - delivered),
            ..report
        }
        .with_sent(n as u64))
    }
}

/// Idle chips standing in for a packet interval, shortened by `compression`.
pub fn gap_chips(gap_ms: f64, chip_rate_hz: f64, compression: f64) -> usize {
    (gap_ms * 1e-3 * chip_rate_hz / compression).round() as usize
}

/// Measurements for one user count of [`multiuser_point`].
#[derive(Debug, Clone, PartialEq)]
pub struct MultiuserPoint {
    /// Chip-level SINR implied by the despread soft values of user 0,
    /// `mean^2 / (var * L_c)`.
    pub soft_sinr: f64,
    pub ber: f64,
    pub per: f64,
    pub bits: u64,
    pub frames: u64,
}

/// `n` equal-power users with distinct codes and random chip delays; user 0
/// is despread with known timing.
///
/// Each frame draws a fresh set of codes from rows `1..order` and fresh
/// delays. Interferers send random bits covering the whole target frame.
pub fn multiuser_point(
    n: usize,
    order: usize,
    noise_variance: f64,
    frames: usize,
    point_seed: u64,
) -> Result<MultiuserPoint> {
    let mut rows: Vec<usize> = (1..order).collect();
    let (mut sum, mut sum_sq, mut count) = (0.0, 0.0, 0u64);
    let (mut bit_errors, mut frame_errors) = (0u64, 0u64);
    for t in 0..frames {
        let seed = point_seed.wrapping_add(t as u64);
        let mut rng = seeded_rng(seed, DATA_STREAM);
        rows.shuffle(&mut rng);
        let addr: u8 = rng.random();
        let payload: Vec<u8> = (0..15).map(|_| rng.random()).collect();
        let frame = MacFrame::new(addr, &payload)?;
        let bits = frame.to_bits();
        let target = hadamard_code(order, rows[0])?;

        // Target starts one bit in so every interferer covers it.
        let span = (bits.len() + 2) * order;
        let mut rx = vec![0.0; span];
        let tx = codes::spread(&bits, &target)?;
        rx[order..order + tx.len()].copy_from_slice(&tx.samples);
        for &row in &rows[1..n] {
            let code = hadamard_code(order, row)?;
            let delay = rng.random_range(0..order);
            let other: Vec<bool> = (0..bits.len() + 1).map(|_| rng.random()).collect();
            let chips = codes::spread(&other, &code)?;
            for (dst, x) in rx[delay..].iter_mut().zip(&chips.samples) {
                *dst += x;
            }
        }
        add_noise(&mut rx, noise_variance, &mut seeded_rng(seed, NOISE_STREAM));

        let soft = codes::despread(&rx[order..order + tx.len()], &target)?;
        for (&s, &b) in soft.iter().zip(&bits) {
            let y = s * codes::bpsk_symbol(b);
            sum += y;
            sum_sq += y * y;
            count += 1;
            if hard_decision(s) != b {
                bit_errors += 1;
            }
        }
        if !matches!(parse_frame(&soft), Ok((ref f, true)) if *f == frame) {
            frame_errors += 1;
        }
    }
    let n_f = count as f64;
    let mean = sum / n_f;
    let var = (sum_sq / n_f - mean * mean) * n_f / (n_f - 1.0);
    Ok(MultiuserPoint {
        soft_sinr: mean * mean / (var * order as f64),
        ber: bit_errors as f64 / n_f,
        per: frame_errors as f64 / frames as f64,
        bits: count,
        frames: frames as u64,
    })
}

/// Splits a total per-chip impairment `10^(-sinr/10)` into thermal noise and
/// interferer power for interference-to-noise ratio `inr` (linear).
pub fn split_impairment(sinr_db: f64, inr: f64) -> (f64, f64) {
    let total = db_to_linear(-sinr_db);
    (total / (1.0 + inr), total * inr / (1.0 + inr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rx::default_preamble;

    fn sim(snr_db: f64, packets: usize) -> LinkSim {
        LinkSim {
            frame: FrameConfig::default(),
            detector: DetectorConfig::new(default_preamble(), 0.6),
            payload_len: 15,
            packets,
            batch: 10,
            gap_chips: 2_000,
            noise_variance: db_to_linear(-snr_db),
            interferer: None,
        }
    }

    #[test]
    fn clean_link_delivers_everything() {
        let r = sim(f64::INFINITY, 25).run(1).unwrap();
        assert_eq!(r.packets_sent, 25);
        assert_eq!(r.packets_crc_ok, 25);
        assert_eq!(r.per, Some(0.0));
        assert!(r.packets_crc_ok <= r.packets_detected);
    }

    #[test]
    fn deterministic() {
        assert_eq!(sim(1.0, 30).run(9).unwrap(), sim(1.0, 30).run(9).unwrap());
    }

    #[test]
    fn gap_for_60_ms() {
        assert_eq!(gap_chips(60.0, 1e6, 30.0), 2_000);
    }

    #[test]
    fn single_user_multiuser_is_noise_limited() {
        let p = multiuser_point(1, 64, db_to_linear(-1.0), 50, 3).unwrap();
        assert!(
            (p.soft_sinr.log10() * 10.0 - 1.0).abs() < 0.5,
            "{}",
            p.soft_sinr
        );
        assert_eq!(p.per, 0.0);
    }

    #[test]
    fn split_is_conservative() {
        let (n, i) = split_impairment(-3.0, 0.5);
        assert!((n + i - db_to_linear(3.0)).abs() < 1e-12);
        assert!((i / n - 0.5).abs() < 1e-12);
    }
}
