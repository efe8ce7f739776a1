//! Hadamard (Walsh) spreading codes and BPSK direct-sequence spreading.
//!
//! Rows come from the Sylvester construction, where entry `j` of row `i` of the
//! order-`n` matrix is `(-1)^popcount(i & j)`. Row 0 is the all-ones row and is
//! kept for the preamble; user payload codes take the remaining rows.

use crate::error::{invalid, Result};

/// Chip rate of the reference 1 MHz channel, one sample per chip.
pub const DEFAULT_CHIP_RATE_HZ: f64 = 1e6;

/// Largest supported code order.
pub const MAX_ORDER: usize = 1024;

/// One row of a Sylvester Hadamard matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadingCode {
    order: usize,
    index: usize,
    chips: Vec<f64>,
}

impl SpreadingCode {
    /// Chips per bit (the processing gain `L_c`).
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// The `+1.0` / `-1.0` chip values.
    pub fn chips(&self) -> &[f64] {
        &self.chips
    }

    /// Inner product with another code of the same order.
    pub fn dot(&self, other: &SpreadingCode) -> f64 {
        self.chips
            .iter()
            .zip(&other.chips)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Real baseband samples at one sample per chip.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipSequence {
    pub samples: Vec<f64>,
    pub chip_rate_hz: f64,
}

impl ChipSequence {
    pub fn new(samples: Vec<f64>) -> Self {
        Self::with_rate(samples, DEFAULT_CHIP_RATE_HZ)
    }

    pub fn with_rate(samples: Vec<f64>, chip_rate_hz: f64) -> Self {
        assert!(chip_rate_hz > 0.0, "chip rate must be positive");
        Self {
            samples,
            chip_rate_hz,
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.samples
    }

    /// Mean of `x^2` over all samples; zero for an empty sequence.
    pub fn mean_power(&self) -> f64 {
        mean_power(&self.samples)
    }
}

pub(crate) fn mean_power(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64
}

/// Row `index` of the order-`order` Sylvester Hadamard matrix.
pub fn hadamard_code(order: usize, index: usize) -> Result<SpreadingCode> {
    if !order.is_power_of_two() || !(2..=MAX_ORDER).contains(&order) {
        return Err(invalid(format!(
            "code order {order} is not a power of two in 2..={MAX_ORDER}"
        )));
    }
    if index >= order {
        return Err(invalid(format!(
            "code index {index} out of range for order {order}"
        )));
    }
    let chips = (0..order)
        .map(|j| {
            if (index & j).count_ones().is_multiple_of(2) {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    Ok(SpreadingCode {
        order,
        index,
        chips,
    })
}

/// BPSK symbol for a bit: `0 -> +1`, `1 -> -1`.
#[inline]
pub fn bpsk_symbol(bit: bool) -> f64 {
    if bit {
        -1.0
    } else {
        1.0
    }
}

/// Hard decision on a soft value; ties go to bit 0.
#[inline]
pub fn hard_decision(soft: f64) -> bool {
    soft < 0.0
}

/// Spreads bits into `bits.len() * code.order()` chips.
pub fn spread(bits: &[bool], code: &SpreadingCode) -> Result<ChipSequence> {
    if bits.is_empty() {
        return Err(invalid("cannot spread an empty bit sequence"));
    }
    let mut out = Vec::with_capacity(bits.len() * code.order);
    spread_into(bits, code, &mut out);
    Ok(ChipSequence::new(out))
}

pub(crate) fn spread_into(bits: &[bool], code: &SpreadingCode, out: &mut Vec<f64>) {
    for &bit in bits {
        let symbol = bpsk_symbol(bit);
        out.extend(code.chips.iter().map(|c| symbol * c));
    }
}

/// Correlates each `code.order()`-chip interval against the code and returns
/// one soft value per bit.
pub fn despread(chips: &[f64], code: &SpreadingCode) -> Result<Vec<f64>> {
    if !chips.len().is_multiple_of(code.order) {
        return Err(invalid(format!(
            "{} chips is not a multiple of code order {}",
            chips.len(),
            code.order
        )));
    }
    Ok(chips
        .chunks_exact(code.order)
        .map(|bit| correlate(bit, &code.chips))
        .collect())
}

#[inline]
pub(crate) fn correlate(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
