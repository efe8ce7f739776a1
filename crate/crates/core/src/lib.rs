//! Link-level simulator and closed-form toolkit for a direct-sequence CDMA
//! IoT uplink that runs as an underlay beneath an LTE-like OFDMA carrier.
//!
//! The crate is split by signal-chain stage:
//!
//! * [`codes`]: Sylvester Hadamard spreading codes, BPSK spreading and despreading.
//! * [`frame`]: the MAC frame (preamble, header, address, payload, CRC-16).
//! * [`channel`]: path loss, AWGN, asynchronous superposition and the multi-tone
//!   LTE interferer.
//! * [`rx`]: preamble detection, stream decoding and link statistics.
//! * [`analytic`]: capacity and coexistence equations.
//! * [`traffic`]: IoT demand model and the demand/supply ledger.
//! * [`scenario`]: named, seeded experiments that bind everything together and
//!   emit CSV/JSON tables with a reproducibility manifest.
//!
//! Conventions used throughout: one sample per chip, real-valued baseband,
//! bit `0` maps to symbol `+1` and bit `1` to `-1`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod channel;
pub mod codes;
pub mod error;
pub mod frame;
pub mod rx;
pub mod scenario;
pub mod traffic;
pub mod units;

pub use error::{Error, Result};
