//! IoT traffic demand and CDMA supply.
//!
//! Demand counts application payload bytes only; supply discounts the
//! per-packet overhead. Payloads follow a Pareto law clipped at a maximum and
//! rounded to whole bytes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analytic::LinkParams;
use crate::channel::seeded_rng;
use crate::error::{invalid, Result};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

/// Message draws used by [`daily_demand_bytes`].
pub const DEMAND_DRAWS: usize = 100_000;

/// One periodicity class: messages every `period_hours`, chosen by this
/// fraction of devices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Periodicity {
    pub period_hours: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficProfile {
    pub pareto_alpha: f64,
    pub pl_min_bytes: f64,
    /// Larger draws are clipped to this.
    pub pl_max_bytes: f64,
    pub periodicity_mix: Vec<Periodicity>,
    pub devices_per_sector: u64,
    pub overhead_bytes: f64,
    /// Application bytes carried per CDMA packet.
    pub max_payload_bytes: f64,
    pub repetition_delta: u32,
}

impl Default for TrafficProfile {
    fn default() -> Self {
        let mix = [(24.0, 0.40), (2.0, 0.40), (1.0, 0.15), (0.5, 0.05)];
        Self {
            pareto_alpha: 2.5,
            pl_min_bytes: 20.0,
            pl_max_bytes: 200.0,
            periodicity_mix: mix
                .iter()
                .map(|&(period_hours, weight)| Periodicity {
                    period_hours,
                    weight,
                })
                .collect(),
            devices_per_sector: 52_547,
            overhead_bytes: 65.0,
            max_payload_bytes: 20.0,
            repetition_delta: 2,
        }
    }
}

impl TrafficProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.pareto_alpha > 1.0) {
            return Err(invalid(format!(
                "Pareto shape {} must exceed 1 for a finite mean",
                self.pareto_alpha
            )));
        }
        if !(self.pl_min_bytes > 0.0 && self.pl_max_bytes >= self.pl_min_bytes) {
            return Err(invalid("need 0 < min payload <= max payload"));
        }
        if self.periodicity_mix.is_empty() {
            return Err(invalid("periodicity mix is empty"));
        }
        let mut total = 0.0;
        for p in &self.periodicity_mix {
            if !(p.period_hours > 0.0) || !(p.weight >= 0.0) {
                return Err(invalid(format!("bad periodicity class {p:?}")));
            }
            total += p.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!(
                "periodicity weights sum to {total}, not 1"
            )));
        }
        if !(self.overhead_bytes >= 0.0 && self.max_payload_bytes > 0.0) {
            return Err(invalid("bad packet payload/overhead sizes"));
        }
        if self.repetition_delta < 1 {
            return Err(invalid("repetition factor must be at least 1"));
        }
        Ok(())
    }

    /// Closed-form mean of the clipped (unrounded) law:
    /// `alpha x_m / (alpha - 1) - c^(1 - alpha) x_m^alpha / (alpha - 1)`.
    pub fn mean_payload_bytes(&self) -> f64 {
        let (a, xm, c) = (self.pareto_alpha, self.pl_min_bytes, self.pl_max_bytes);
        if a.is_infinite() {
            return xm;
        }
        a * xm / (a - 1.0) - c.powf(1.0 - a) * xm.powf(a) / (a - 1.0)
    }

    /// CDF of the clipped continuous law.
    pub fn payload_cdf(&self, x: f64) -> f64 {
        if x < self.pl_min_bytes {
            0.0
        } else if x >= self.pl_max_bytes {
            1.0
        } else {
            1.0 - (self.pl_min_bytes / x).powf(self.pareto_alpha)
        }
    }
}

/// Inverse-CDF payload for a uniform `u` in (0, 1]: `x_m u^(-1/alpha)`,
/// clipped and rounded to whole bytes.
pub fn payload_from_uniform(profile: &TrafficProfile, u: f64) -> u32 {
    let x = profile.pl_min_bytes * u.powf(-1.0 / profile.pareto_alpha);
    x.min(profile.pl_max_bytes).round() as u32
}

fn uniform_open_closed<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// One payload size in bytes.
pub fn sample_payload(profile: &TrafficProfile, seed: u64) -> u32 {
    let mut rng = seeded_rng(seed, 0);
    payload_from_uniform(profile, uniform_open_closed(&mut rng))
}

/// `count` payload sizes from one seeded stream.
pub fn sample_payloads(profile: &TrafficProfile, count: usize, seed: u64) -> Vec<u32> {
    let mut rng = seeded_rng(seed, 0);
    (0..count)
        .map(|_| payload_from_uniform(profile, uniform_open_closed(&mut rng)))
        .collect()
}

/// `sum_i w_i * 24 / period_i`.
pub fn messages_per_device_per_day(profile: &TrafficProfile) -> Result<f64> {
    profile.validate()?;
    Ok(profile
        .periodicity_mix
        .iter()
        .map(|p| p.weight * 24.0 / p.period_hours)
        .sum())
}

/// Devices x messages/day x Monte-Carlo mean payload over
/// [`DEMAND_DRAWS`] draws.
pub fn daily_demand_bytes(profile: &TrafficProfile, seed: u64) -> Result<f64> {
    let per_device = messages_per_device_per_day(profile)?;
    if profile.devices_per_sector == 0 {
        return Ok(0.0);
    }
    let total: u64 = sample_payloads(profile, DEMAND_DRAWS, seed)
        .iter()
        .map(|&b| u64::from(b))
        .sum();
    let mean = total as f64 / DEMAND_DRAWS as f64;
    Ok(profile.devices_per_sector as f64 * per_device * mean)
}

/// Daily application bytes carried by `n` simultaneous users with repetition
/// `delta`: `n R_b / 8 * 86400 * PL / (PL + overhead) / delta`.
pub fn cdma_supply_bytes(
    n: u32,
    delta: u32,
    link: &LinkParams,
    profile: &TrafficProfile,
) -> Result<f64> {
    if n < 1 || delta < 1 {
        return Err(invalid("need n >= 1 and delta >= 1"));
    }
    link.validate()?;
    let pl = profile.max_payload_bytes;
    let efficiency = pl / (pl + profile.overhead_bytes);
    Ok(f64::from(n) * link.bitrate_rb_hz / 8.0 * SECONDS_PER_DAY * efficiency / f64::from(delta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityLedger {
    pub n_simultaneous: u32,
    pub repetition_delta: u32,
    pub demand_bytes_per_day: f64,
    pub supply_bytes_per_day: f64,
    /// `None` when no reference is configured.
    pub nbiot_reference_bytes_per_day: Option<f64>,
    pub feasible: bool,
}

/// Demand vs supply for `n` users at repetition `delta`. `n = 0` supplies
/// nothing.
pub fn build_ledger(
    profile: &TrafficProfile,
    n: u32,
    delta: u32,
    link: &LinkParams,
    nbiot_ref: Option<f64>,
    seed: u64,
) -> Result<CapacityLedger> {
    let demand = daily_demand_bytes(profile, seed)?;
    let supply = if n == 0 {
        0.0
    } else {
        cdma_supply_bytes(n, delta, link, profile)?
    };
    Ok(CapacityLedger {
        n_simultaneous: n,
        repetition_delta: delta,
        demand_bytes_per_day: demand,
        supply_bytes_per_day: supply,
        nbiot_reference_bytes_per_day: nbiot_ref,
        feasible: n > 0 && supply >= demand,
    })
}
