//! CDMA MAC frame.
//!
//! On-air layout, bits MSB first:
//!
//! ```text
//! | preamble (64 chips, unmodulated) | header (8) | address (8) | payload (8*len) | crc (16) |
//!                                    \______________ spread with the user's data code ______/
//! ```
//!
//! The header byte carries a 4-bit version (`0x1`) in the high nibble and the
//! payload length (0..=15) in the low nibble. The CRC is CRC-16/CCITT-FALSE over
//! header, address and payload.

use std::fmt::Write as _;

use crate::codes::{self, hadamard_code, ChipSequence, SpreadingCode};
use crate::error::{invalid, Error, Result};

pub const FRAME_VERSION: u8 = 0x1;
pub const MAX_PAYLOAD: usize = 15;
/// Preamble length in chips, independent of the data spreading order.
pub const PREAMBLE_LEN: usize = 64;
/// Header, address and CRC bits.
pub const OVERHEAD_BITS: usize = 32;

const CRC_POLY: u16 = 0x1021;
const CRC_INIT: u16 = 0xFFFF;

const CRC_TABLE: [u16; 256] = {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ CRC_POLY
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
};

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.
pub fn crc16(bytes: &[u8]) -> u16 {
    bytes.iter().fold(CRC_INIT, |crc, &b| {
        (crc << 8) ^ CRC_TABLE[usize::from((crc >> 8) as u8 ^ b)]
    })
}

/// Codes and spreading order used to put frames on the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameConfig {
    /// Row of the order-64 matrix sent as the preamble.
    pub preamble_code_index: usize,
    /// The user's payload code row.
    pub data_code_index: usize,
    /// Chips per data bit.
    pub order: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            preamble_code_index: 0,
            data_code_index: 1,
            order: 64,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.preamble_code_index == self.data_code_index {
            return Err(invalid("preamble and data code indices must differ"));
        }
        if self.preamble_code_index >= PREAMBLE_LEN {
            return Err(invalid(format!(
                "preamble code index {} out of range",
                self.preamble_code_index
            )));
        }
        hadamard_code(self.order, self.data_code_index)?;
        Ok(())
    }

    pub fn preamble(&self) -> Result<SpreadingCode> {
        hadamard_code(PREAMBLE_LEN, self.preamble_code_index)
    }

    pub fn data_code(&self) -> Result<SpreadingCode> {
        hadamard_code(self.order, self.data_code_index)
    }
}

/// Number of bits in a frame carrying `payload_len` bytes (excluding preamble).
pub fn frame_bits_len(payload_len: usize) -> usize {
    OVERHEAD_BITS + 8 * payload_len
}

/// Total on-air chips: `64 + (32 + 8 * len) * order`.
pub fn frame_chips(payload_len: usize, order: usize) -> usize {
    PREAMBLE_LEN + frame_bits_len(payload_len) * order
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MacFrame {
    source_address: u8,
    payload: Vec<u8>,
    crc: u16,
}

impl MacFrame {
    /// Builds a frame and computes its CRC.
    pub fn new(source_address: u8, payload: &[u8]) -> Result<Self> {
        check_payload_len(payload.len())?;
        let crc = crc16(&crc_input(source_address, payload));
        Ok(Self {
            source_address,
            payload: payload.to_vec(),
            crc,
        })
    }

    /// A frame as received: the CRC is whatever was on the wire.
    pub fn from_parts(source_address: u8, payload: Vec<u8>, crc: u16) -> Result<Self> {
        check_payload_len(payload.len())?;
        Ok(Self {
            source_address,
            payload,
            crc,
        })
    }

    pub fn source_address(&self) -> u8 {
        self.source_address
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn crc(&self) -> u16 {
        self.crc
    }

    pub fn header(&self) -> u8 {
        (FRAME_VERSION << 4) | self.payload.len() as u8
    }

    /// True when the carried CRC matches the recomputed one.
    pub fn crc_ok(&self) -> bool {
        crc16(&crc_input(self.source_address, &self.payload)) == self.crc
    }

    /// Frame bits, MSB first, without the preamble.
    pub fn to_bits(&self) -> Vec<bool> {
        let mut bytes = crc_input(self.source_address, &self.payload);
        bytes.extend_from_slice(&self.crc.to_be_bytes());
        bytes_to_bits(&bytes)
    }

    /// `ver:len:addr:payload:crc`, hex digits, upper case.
    pub fn to_hex_line(&self) -> String {
        let mut payload = String::with_capacity(2 * self.payload.len());
        for b in &self.payload {
            let _ = write!(payload, "{b:02X}");
        }
        format!(
            "{:X}:{:X}:{:02X}:{}:{:04X}",
            FRAME_VERSION,
            self.payload.len(),
            self.source_address,
            payload,
            self.crc
        )
    }

    /// Parses a line produced by [`MacFrame::to_hex_line`]. The CRC is taken as
    /// written; check it with [`MacFrame::crc_ok`].
    pub fn from_hex_line(line: &str) -> Result<Self> {
        let bad = || Error::MalformedHex(line.to_string());
        let fields: Vec<&str> = line.trim().split(':').collect();
        let [ver, len, addr, payload, crc] = fields.as_slice() else {
            return Err(bad());
        };
        let ver = u8::from_str_radix(ver, 16).map_err(|_| bad())?;
        if ver != FRAME_VERSION {
            return Err(Error::UnsupportedVersion(ver));
        }
        let len = usize::from_str_radix(len, 16).map_err(|_| bad())?;
        if addr.len() != 2 || crc.len() != 4 || payload.len() != 2 * len {
            return Err(bad());
        }
        let addr = u8::from_str_radix(addr, 16).map_err(|_| bad())?;
        let crc = u16::from_str_radix(crc, 16).map_err(|_| bad())?;
        let payload = (0..len)
            .map(|i| u8::from_str_radix(&payload[2 * i..2 * i + 2], 16).map_err(|_| bad()))
            .collect::<Result<Vec<u8>>>()?;
        Self::from_parts(addr, payload, crc)
    }
}

fn check_payload_len(len: usize) -> Result<()> {
    if len > MAX_PAYLOAD {
        return Err(invalid(format!(
            "payload of {len} bytes exceeds the {MAX_PAYLOAD}-byte maximum"
        )));
    }
    Ok(())
}

fn crc_input(source_address: u8, payload: &[u8]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(payload.len() + 4);
    bytes.push((FRAME_VERSION << 4) | payload.len() as u8);
    bytes.push(source_address);
    bytes.extend_from_slice(payload);
    bytes
}

pub fn bytes_to_bits(bytes: &[u8]) -> Vec<bool> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
        .collect()
}

/// Packs bits MSB first; a trailing partial byte is zero padded.
pub fn bits_to_bytes(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i)))
        })
        .collect()
}

/// Preamble followed by the spread frame bits.
pub fn build_frame(addr: u8, payload: &[u8], cfg: &FrameConfig) -> Result<ChipSequence> {
    cfg.validate()?;
    let frame = MacFrame::new(addr, payload)?;
    Ok(modulate(&frame, cfg))
}

/// On-air chips for an already built frame. `cfg` must be valid.
pub fn modulate(frame: &MacFrame, cfg: &FrameConfig) -> ChipSequence {
    let preamble = cfg.preamble().expect("validated frame config");
    let data_code = cfg.data_code().expect("validated frame config");
    let bits = frame.to_bits();
    let mut samples = Vec::with_capacity(frame_chips(frame.payload.len(), cfg.order));
    samples.extend_from_slice(preamble.chips());
    codes::spread_into(&bits, &data_code, &mut samples);
    ChipSequence::new(samples)
}

/// Hard-decides despread soft bits (starting at the header) and extracts the
/// frame. Extra trailing soft values are ignored.
pub fn parse_frame(soft_bits: &[f64]) -> Result<(MacFrame, bool)> {
    if soft_bits.len() < OVERHEAD_BITS {
        return Err(Error::TruncatedFrame {
            needed: OVERHEAD_BITS,
            available: soft_bits.len(),
        });
    }
    let header = decide_byte(&soft_bits[..8]);
    let len = usize::from(header & 0x0F);
    let needed = frame_bits_len(len);
    if soft_bits.len() < needed {
        return Err(Error::TruncatedFrame {
            needed,
            available: soft_bits.len(),
        });
    }
    let bytes: Vec<u8> = soft_bits[..needed].chunks(8).map(decide_byte).collect();
    let version = header >> 4;
    let addr = bytes[1];
    let payload = bytes[2..2 + len].to_vec();
    let crc = u16::from_be_bytes([bytes[2 + len], bytes[3 + len]]);
    let ok = crc16(&bytes[..2 + len]) == crc;
    if ok && version != FRAME_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let frame = MacFrame::from_parts(addr, payload, crc)?;
    Ok((frame, ok))
}

fn decide_byte(soft: &[f64]) -> u8 {
    soft.iter().fold(0u8, |acc, &s| {
        (acc << 1) | u8::from(codes::hard_decision(s))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::despread;

    fn crc16_bitwise(bytes: &[u8]) -> u16 {
        let mut crc: u16 = 0xFFFF;
        for &byte in bytes {
            for i in (0..8).rev() {
                let bit = (byte >> i) & 1 == 1;
                let top = crc & 0x8000 != 0;
                crc <<= 1;
                if top ^ bit {
                    crc ^= 0x1021;
                }
            }
        }
        crc
    }

    #[test]
    fn crc_check_value() {
        assert_eq!(crc16_bitwise(b"123456789"), 0x29B1);
        assert_eq!(crc16(b"123456789"), 0x29B1);
        assert_eq!(crc16(&[]), 0xFFFF);
    }

    #[test]
    fn crc_table_matches_bitwise_oracle() {
        let data: Vec<u8> = (0..=255u8).chain((0..=255u8).rev()).collect();
        for end in 0..data.len() {
            assert_eq!(crc16(&data[..end]), crc16_bitwise(&data[..end]));
        }
    }

    #[test]
    fn chip_counts() {
        let cfg = FrameConfig::default();
        assert_eq!(build_frame(7, &[0xAB; 15], &cfg).unwrap().len(), 9_792);
        assert_eq!(build_frame(7, &[], &cfg).unwrap().len(), 2_112);
        assert_eq!(frame_chips(15, 64), 9_792);
        for len in 0..=MAX_PAYLOAD {
            for order in [16, 64, 256] {
                let cfg = FrameConfig {
                    order,
                    ..FrameConfig::default()
                };
                let tx = build_frame(1, &vec![0x5A; len], &cfg).unwrap();
                assert_eq!(tx.len(), 64 + (32 + 8 * len) * order);
            }
        }
    }

    #[test]
    fn rejects_long_payload_and_bad_config() {
        let cfg = FrameConfig::default();
        assert!(build_frame(0, &[0; 16], &cfg).is_err());
        let same = FrameConfig {
            data_code_index: 0,
            ..cfg
        };
        assert!(build_frame(0, &[1], &same).is_err());
        let out_of_range = FrameConfig {
            data_code_index: 64,
            ..cfg
        };
        assert!(build_frame(0, &[1], &out_of_range).is_err());
    }

    fn soft_bits_of(tx: &ChipSequence, cfg: &FrameConfig) -> Vec<f64> {
        despread(&tx.samples[PREAMBLE_LEN..], &cfg.data_code().unwrap()).unwrap()
    }

    #[test]
    fn round_trip_noiseless() {
        let cfg = FrameConfig::default();
        let tx = build_frame(0x42, b"hello", &cfg).unwrap();
        let (frame, ok) = parse_frame(&soft_bits_of(&tx, &cfg)).unwrap();
        assert!(ok);
        assert_eq!(frame.source_address(), 0x42);
        assert_eq!(frame.payload(), b"hello");
    }

    #[test]
    fn single_bit_flips_are_detected() {
        let cfg = FrameConfig::default();
        let tx = build_frame(0x11, &[0xC3; 15], &cfg).unwrap();
        let soft = soft_bits_of(&tx, &cfg);
        for i in 0..soft.len() {
            let mut corrupted = soft.clone();
            corrupted[i] = -corrupted[i];
            // A flipped length bit moves the CRC field; that may also surface
            // as a truncation error.
            let detected = parse_frame(&corrupted).map_or(true, |(_, ok)| !ok);
            assert!(detected, "flip at bit {i} went undetected");
        }
    }

    #[test]
    fn corrupted_length_beyond_buffer_is_truncated() {
        let cfg = FrameConfig::default();
        let tx = build_frame(0x11, &[], &cfg).unwrap();
        let mut soft = soft_bits_of(&tx, &cfg);
        // Header low nibble -> 0xF.
        for s in &mut soft[4..8] {
            *s = -64.0;
        }
        match parse_frame(&soft) {
            Err(Error::TruncatedFrame { needed, available }) => {
                assert_eq!(needed, 152);
                assert_eq!(available, 32);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
        assert!(matches!(
            parse_frame(&soft[..31]),
            Err(Error::TruncatedFrame { .. })
        ));
    }

    #[test]
    fn hex_line_format() {
        let frame = MacFrame::new(0x2A, &[0x00, 0x11, 0xFF]).unwrap();
        let line = frame.to_hex_line();
        let crc = crc16(&[0x13, 0x2A, 0x00, 0x11, 0xFF]);
        assert_eq!(line, format!("1:3:2A:0011FF:{crc:04X}"));
        assert_eq!(MacFrame::from_hex_line(&line).unwrap(), frame);

        let empty = MacFrame::new(0, &[]).unwrap();
        assert_eq!(
            MacFrame::from_hex_line(&empty.to_hex_line()).unwrap(),
            empty
        );

        assert!(MacFrame::from_hex_line("1:3:2A:0011:FFFF").is_err());
        assert!(MacFrame::from_hex_line("2:0:00::FFFF").is_err());
        assert!(MacFrame::from_hex_line("garbage").is_err());
        let tampered = MacFrame::from_hex_line("1:3:2A:0011FE:0000").unwrap();
        assert!(!tampered.crc_ok());
    }

    #[test]
    fn bit_packing() {
        assert_eq!(
            bytes_to_bits(&[0b1010_0001]),
            vec![true, false, true, false, false, false, false, true]
        );
        assert_eq!(
            bits_to_bytes(&bytes_to_bits(&[0xDE, 0xAD])),
            vec![0xDE, 0xAD]
        );
    }
}
