//! Packet detection and decoding.
//!
//! The detector slides the known preamble over the received samples and
//! computes the normalized correlation
//!
//! ```text
//! rho(k) = |sum_i x[k+i] p[i]| / (L_p * rms(x[k..k+L_p]))
//! ```
//!
//! which is 1 for a noiseless preamble and independent of the received scale,
//! so one threshold serves a range of SNRs. Samples are scanned in blocks of
//! `window_samples` positions.
//!
//! False detections are expected at low thresholds; [`decode_stream`] resolves
//! them with the frame CRC.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::channel::{add_noise, seeded_rng, NOISE_STREAM};
use crate::codes::{self, correlate, hadamard_code, ChipSequence, SpreadingCode};
use crate::error::{invalid, Error, Result};
use crate::frame::{self, frame_bits_len, FrameConfig, MacFrame, MAX_PAYLOAD, PREAMBLE_LEN};
use crate::units::{db_to_linear, linear_to_db};

use rand::Rng;

pub const DEFAULT_WINDOW_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub preamble: SpreadingCode,
    /// Positions examined per detection instance.
    pub window_samples: usize,
    /// Normalized correlation threshold in (0, 1].
    pub threshold: f64,
    pub search_step: usize,
    /// Only the strongest peak within this many samples is reported.
    pub suppression_span: usize,
}

impl DetectorConfig {
    /// Defaults: 10,000-sample window, step 1, suppression over one
    /// maximum-length frame at order 64.
    pub fn new(preamble: SpreadingCode, threshold: f64) -> Self {
        Self {
            preamble,
            window_samples: DEFAULT_WINDOW_SAMPLES,
            threshold,
            search_step: 1,
            suppression_span: frame::frame_chips(MAX_PAYLOAD, 64),
        }
    }

    /// Detector for the preamble of `fcfg`.
    pub fn for_frames(fcfg: &FrameConfig, threshold: f64) -> Result<Self> {
        Ok(Self::new(fcfg.preamble()?, threshold))
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_samples < self.preamble.order() {
            return Err(invalid("detection window shorter than the preamble"));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(invalid(format!(
                "threshold {} outside (0, 1]",
                self.threshold
            )));
        }
        if self.search_step == 0 || self.suppression_span == 0 {
            return Err(invalid("search step and suppression span must be positive"));
        }
        Ok(())
    }
}

/// A correlation peak above threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub offset: usize,
    pub peak: f64,
}

/// Normalized correlation of the preamble at every searched position whose
/// value exceeds `threshold`.
fn candidates(samples: &[f64], cfg: &DetectorConfig) -> Vec<Detection> {
    let p = cfg.preamble.chips();
    let lp = p.len();
    if samples.len() < lp {
        return Vec::new();
    }
    let positions = samples.len() - lp + 1;
    let mut out = Vec::new();
    let mut block_start = 0;
    while block_start < positions {
        let block_end = (block_start + cfg.window_samples).min(positions);
        let block = &samples[block_start..block_end + lp - 1];
        // Running energy is restarted per block to bound accumulation error.
        let mut energy: f64 = block[..lp].iter().map(|x| x * x).sum();
        let mut k = 0;
        let mut next = 0;
        while block_start + k < block_end {
            if k == next {
                let num = correlate(&block[k..k + lp], p).abs();
                let rho = if energy > 0.0 {
                    num / (lp as f64 * energy).sqrt()
                } else {
                    0.0
                };
                if rho > cfg.threshold {
                    out.push(Detection {
                        offset: block_start + k,
                        peak: rho,
                    });
                }
                next += cfg.search_step;
            }
            if k + lp < block.len() {
                energy += block[k + lp] * block[k + lp] - block[k] * block[k];
                energy = energy.max(0.0);
            }
            k += 1;
        }
        block_start = block_end;
    }
    out
}

/// Greedy non-maximum suppression; output sorted by offset.
fn suppress(mut cands: Vec<Detection>, span: usize) -> Vec<Detection> {
    cands.sort_by(|a, b| b.peak.total_cmp(&a.peak).then(a.offset.cmp(&b.offset)));
    let mut kept: BTreeSet<usize> = BTreeSet::new();
    let mut out = Vec::new();
    for c in cands {
        let lo = c.offset.saturating_sub(span - 1);
        if kept.range(lo..c.offset + span).next().is_none() {
            kept.insert(c.offset);
            out.push(c);
        }
    }
    out.sort_by_key(|d| d.offset);
    out
}

/// Offsets where the normalized preamble correlation exceeds the threshold,
/// keeping only the strongest peak within each `suppression_span`.
pub fn detect_preamble(samples: &ChipSequence, cfg: &DetectorConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let cands = candidates(&samples.samples, cfg);
    Ok(suppress(cands, cfg.suppression_span))
}

/// Link statistics. Serializes to a flat JSON object.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub packets_sent: u64,
    pub packets_detected: u64,
    pub packets_crc_ok: u64,
    /// `1 - crc_ok / sent`; `None` when nothing was sent.
    pub per: Option<f64>,
    pub false_detections: u64,
    /// Mean per-chip SNR estimated from CRC-valid frames.
    pub mean_snr_db: Option<f64>,
}

impl LinkReport {
    /// Sets the number of transmitted packets and recomputes PER.
    pub fn with_sent(mut self, sent: u64) -> Self {
        self.packets_sent = sent;
        self.per = per_of(self.packets_crc_ok, sent);
        self
    }

    pub fn no_traffic(&self) -> bool {
        self.per.is_none()
    }

    /// Combines reports from disjoint segments.
    pub fn merge(&self, other: &LinkReport) -> LinkReport {
        let sent = self.packets_sent + other.packets_sent;
        let crc_ok = self.packets_crc_ok + other.packets_crc_ok;
        let mean_snr_db = match (self.mean_snr_db, other.mean_snr_db) {
            (Some(a), Some(b)) => {
                let (wa, wb) = (self.packets_crc_ok as f64, other.packets_crc_ok as f64);
                if wa + wb > 0.0 {
                    Some((a * wa + b * wb) / (wa + wb))
                } else {
                    Some((a + b) / 2.0)
                }
            }
            (a, b) => a.or(b),
        };
        LinkReport {
            packets_sent: sent,
            packets_detected: self.packets_detected + other.packets_detected,
            packets_crc_ok: crc_ok,
            per: per_of(crc_ok, sent),
            false_detections: self.false_detections + other.false_detections,
            mean_snr_db,
        }
    }
}

fn per_of(crc_ok: u64, sent: u64) -> Option<f64> {
    (sent > 0).then(|| sent.saturating_sub(crc_ok) as f64 / sent as f64)
}

/// A CRC-valid frame and where its preamble started.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedFrame {
    pub offset: usize,
    pub peak: f64,
    pub frame: MacFrame,
    /// Per-chip SNR estimated from the despread soft values.
    pub snr_db: Option<f64>,
}

/// Detects, despreads and parses every frame in `samples`.
///
/// Candidates are local correlation maxima (one per preamble length) tried in
/// decreasing peak order, each at the peak and one chip either side. A frame
/// whose CRC checks claims its span of chips; later candidates inside a
/// claimed span are skipped. Candidates that fail
/// CRC are counted as false detections. The returned report has
/// `packets_sent = 0`; callers that know the offered load use
/// [`LinkReport::with_sent`].
pub fn decode_stream(
    samples: &ChipSequence,
    cfg: &DetectorConfig,
    fcfg: &FrameConfig,
) -> Result<(Vec<DecodedFrame>, LinkReport)> {
    cfg.validate()?;
    fcfg.validate()?;
    let code = fcfg.data_code()?;
    let x = &samples.samples;
    let mut cands = suppress(candidates(x, cfg), cfg.preamble.order());
    cands.sort_by(|a, b| b.peak.total_cmp(&a.peak).then(a.offset.cmp(&b.offset)));

    let mut claimed: Vec<(usize, usize)> = Vec::new();
    let mut frames = Vec::new();
    let mut report = LinkReport::default();
    let mut snr_sum = 0.0;
    let mut snr_n = 0u64;
    for cand in cands {
        if claimed
            .iter()
            .any(|&(lo, hi)| cand.offset >= lo && cand.offset < hi)
        {
            continue;
        }
        report.packets_detected += 1;
        let lp = cfg.preamble.order();
        let hit = TIMING_SEARCH.iter().find_map(|&delta| {
            let offset = cand.offset.checked_add_signed(delta)?;
            decode_at(x, offset + lp, &code).map(|(frame, soft)| (offset, frame, soft))
        });
        match hit.map(|h| refine_timing(x, h, fcfg, &code)) {
            Some((offset, frame, soft)) => {
                let end = offset + lp + frame_bits_len(frame.payload().len()) * code.order();
                claimed.push((offset, end));
                let snr_db = estimate_snr_db(&soft, code.order());
                if let Some(s) = snr_db {
                    snr_sum += s;
                    snr_n += 1;
                }
                report.packets_crc_ok += 1;
                frames.push(DecodedFrame {
                    offset,
                    peak: cand.peak,
                    frame,
                    snr_db,
                });
            }
            None => report.false_detections += 1,
        }
    }
    frames.sort_by_key(|f| f.offset);
    report.mean_snr_db = (snr_n > 0).then(|| snr_sum / snr_n as f64);
    Ok((frames, report))
}

/// Chip offsets tried around each correlation peak, in order.
///
/// The all-ones preamble is followed by a `+1` chip (the header starts with a
/// 0 bit and every row starts with `+1`), so the preamble correlation at `k`
/// and `k + 1` is identical without noise. Next to an idle gap the peak is
/// also a plateau, `rho(k - j) = sqrt((64 - j) / 64)`, so at low SNR the peak
/// may land a few chips early.
const TIMING_SEARCH: [isize; 3] = [0, -1, 1];

/// Half-width of the decision-directed timing search, in chips.
const FINE_TIMING_SPAN: usize = 16;

/// Decision-directed fine timing.
///
/// Codes with period-2 structure (row 1 alternates) still despread correctly
/// after an even chip slip, so a CRC pass does not pin the offset. The decoded
/// frame is re-modulated and correlated against the input around `offset`;
/// every bit transition sharpens this peak, unlike the preamble's.
fn refine_timing(
    x: &[f64],
    (offset, frame, soft): (usize, MacFrame, Vec<f64>),
    fcfg: &FrameConfig,
    code: &SpreadingCode,
) -> (usize, MacFrame, Vec<f64>) {
    let reference = frame::modulate(&frame, fcfg);
    let r = reference.as_slice();
    let lo = offset.saturating_sub(FINE_TIMING_SPAN);
    let hi = (offset + FINE_TIMING_SPAN).min(x.len().saturating_sub(r.len()));
    let score = |o: usize| correlate(&x[o..o + r.len()], r);
    let best = (lo..=hi)
        .filter(|&o| o + r.len() <= x.len())
        .map(|o| (o, score(o)))
        // Ties go to the candidate nearest the CRC-valid offset.
        .max_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then(b.0.abs_diff(offset).cmp(&a.0.abs_diff(offset)))
        })
        .map(|(o, _)| o)
        .unwrap_or(offset);
    if best == offset {
        return (offset, frame, soft);
    }
    match decode_at(x, best + PREAMBLE_LEN, code) {
        Some((f, s)) if f == frame => (best, f, s),
        _ => (offset, frame, soft),
    }
}

/// Despreads a frame whose header starts at `start`; `None` on CRC failure or
/// when the declared frame runs past the buffer.
fn decode_at(x: &[f64], start: usize, code: &SpreadingCode) -> Option<(MacFrame, Vec<f64>)> {
    let l = code.order();
    let header_end = start + 8 * l;
    if header_end > x.len() {
        return None;
    }
    let header = codes::despread(&x[start..header_end], code).ok()?;
    let len = header.iter().fold(0usize, |acc, &s| {
        (acc << 1) | usize::from(codes::hard_decision(s))
    }) & 0x0F;
    let end = start + frame_bits_len(len) * l;
    if end > x.len() {
        return None;
    }
    let soft = codes::despread(&x[start..end], code).ok()?;
    match frame::parse_frame(&soft) {
        Ok((frame, true)) => Some((frame, soft)),
        _ => None,
    }
}

/// Per-chip SNR from despread soft values: `(mean^2 / var) / L_c` of the
/// decision-directed amplitudes.
pub fn estimate_snr_db(soft: &[f64], order: usize) -> Option<f64> {
    if soft.len() < 2 {
        return None;
    }
    let n = soft.len() as f64;
    let mean = soft.iter().map(|s| s.abs()).sum::<f64>() / n;
    let var = soft.iter().map(|s| (s.abs() - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let snr = linear_to_db(mean * mean / var / order as f64);
    snr.is_finite().then_some(snr)
}

/// Result of [`calibrate_threshold`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    pub target_false_alarm: f64,
    pub snr_db: f64,
    pub trials: usize,
    /// `(threshold, false-alarm rate per window, miss rate)` for every grid point.
    pub curve: Vec<(f64, f64, f64)>,
}

impl Calibration {
    pub fn false_alarm_rate(&self) -> f64 {
        self.point().1
    }

    pub fn miss_rate(&self) -> f64 {
        self.point().2
    }

    fn point(&self) -> (f64, f64, f64) {
        *self
            .curve
            .iter()
            .find(|c| c.0 == self.threshold)
            .expect("calibrated threshold is on the grid")
    }
}

/// Thresholds tried by [`calibrate_threshold`]: 0.05, 0.10, ..., 0.95.
pub fn threshold_grid() -> Vec<f64> {
    (1..=19).map(|i| f64::from(i * 5) / 100.0).collect()
}

/// Smallest grid threshold whose false-alarm rate per detection window stays
/// at or below `target_false_alarm`, with the default frame layout.
pub fn calibrate_threshold(
    target_false_alarm: f64,
    snr_db: f64,
    trials: usize,
    seed: u64,
) -> Result<Calibration> {
    calibrate_threshold_with(
        &FrameConfig::default(),
        DEFAULT_WINDOW_SAMPLES,
        target_false_alarm,
        snr_db,
        trials,
        seed,
    )
}

/// [`calibrate_threshold`] for an explicit frame layout and window length.
///
/// Each trial draws two windows at the given per-chip SNR: one carrying
/// preamble-free spread data (false-alarm window), one with a preamble
/// planted at a random position followed by spread data (miss window). A
/// window raises a false alarm if any correlation exceeds the threshold; a
/// planted preamble is missed if no correlation within two samples of it does.
pub fn calibrate_threshold_with(
    fcfg: &FrameConfig,
    window: usize,
    target_false_alarm: f64,
    snr_db: f64,
    trials: usize,
    seed: u64,
) -> Result<Calibration> {
    if !(target_false_alarm > 0.0 && target_false_alarm <= 1.0) {
        return Err(invalid(format!(
            "target false-alarm rate {target_false_alarm} outside (0, 1]"
        )));
    }
    if trials == 0 {
        return Err(invalid("calibration needs at least one trial"));
    }
    fcfg.validate()?;
    let preamble = fcfg.preamble()?;
    let code = fcfg.data_code()?;
    if window < 2 * PREAMBLE_LEN {
        return Err(invalid("calibration window too short"));
    }
    let variance = db_to_linear(-snr_db);
    let grid = threshold_grid();
    let probe = DetectorConfig {
        window_samples: window,
        threshold: f64::MIN_POSITIVE,
        ..DetectorConfig::new(preamble.clone(), 0.5)
    };

    let mut alarms = vec![0usize; grid.len()];
    let mut misses = vec![0usize; grid.len()];
    let mut rng = seeded_rng(seed, NOISE_STREAM);
    let data_bits = (window + PREAMBLE_LEN).div_ceil(code.order()) + 2;
    for _ in 0..trials {
        // False-alarm window: spread data only.
        let bits: Vec<bool> = (0..data_bits).map(|_| rng.random()).collect();
        let chip_shift = rng.random_range(0..code.order());
        let spread = codes::spread(&bits, &code)?;
        let mut x = spread.samples[chip_shift..chip_shift + window + PREAMBLE_LEN - 1].to_vec();
        add_noise(&mut x, variance, &mut rng);
        let peak = max_rho(&x, &probe);
        for (i, &t) in grid.iter().enumerate() {
            if peak > t {
                alarms[i] += 1;
            }
        }

        // Miss window: preamble at a random offset, data around it.
        let bits: Vec<bool> = (0..data_bits).map(|_| rng.random()).collect();
        let mut x = codes::spread(&bits, &code)?.samples;
        x.truncate(window + PREAMBLE_LEN - 1);
        let at = rng.random_range(0..window - PREAMBLE_LEN);
        x[at..at + PREAMBLE_LEN].copy_from_slice(preamble.chips());
        add_noise(&mut x, variance, &mut rng);
        let lo = at.saturating_sub(2);
        let hi = (at + 2 + PREAMBLE_LEN).min(x.len());
        let local = max_rho(&x[lo..hi], &probe);
        for (i, &t) in grid.iter().enumerate() {
            if local <= t {
                misses[i] += 1;
            }
        }
    }

    let n = trials as f64;
    let curve: Vec<(f64, f64, f64)> = grid
        .iter()
        .zip(alarms.iter().zip(&misses))
        .map(|(&t, (&a, &m))| (t, a as f64 / n, m as f64 / n))
        .collect();
    let threshold = curve
        .iter()
        .find(|c| c.1 <= target_false_alarm)
        .map(|c| c.0)
        .ok_or(Error::CalibrationFailure {
            target: target_false_alarm,
        })?;
    Ok(Calibration {
        threshold,
        target_false_alarm,
        snr_db,
        trials,
        curve,
    })
}

fn max_rho(x: &[f64], probe: &DetectorConfig) -> f64 {
    candidates(x, probe)
        .iter()
        .map(|d| d.peak)
        .fold(0.0, f64::max)
}

/// Normalized correlation at a single position; exposed for diagnostics.
pub fn correlation_at(samples: &[f64], offset: usize, preamble: &SpreadingCode) -> f64 {
    let p = preamble.chips();
    let w = &samples[offset..offset + p.len()];
    let energy: f64 = w.iter().map(|x| x * x).sum();
    if energy == 0.0 {
        return 0.0;
    }
    correlate(w, p).abs() / (p.len() as f64 * energy).sqrt()
}

/// The default preamble (row 0 of the order-64 matrix).
pub fn default_preamble() -> SpreadingCode {
    hadamard_code(PREAMBLE_LEN, 0).expect("row 0 of order 64 exists")
}
