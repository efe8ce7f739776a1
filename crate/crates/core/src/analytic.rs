//! Closed-form capacity and coexistence model.
//!
//! Powers are carried in dBm at the API boundary and in mW internally.
//! `eta` is thermal noise over the bandwidth in question: `N0 * W` for the
//! CDMA channel, `N0 * W_L` for the LTE channel.

use serde::{Deserialize, Serialize};

use crate::channel::pathloss_db;
use crate::error::{invalid, Result};
use crate::units::{db_to_linear, dbm_to_mw, linear_to_db, noise_power_dbm, q_function};

/// Upper bound on LTE SINR (linear), used when the denominator vanishes.
pub const GAMMA_CAP: f64 = 1e6;

/// CDMA link budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Spread bandwidth W.
    pub bandwidth_w_hz: f64,
    /// Information bit rate R_b.
    pub bitrate_rb_hz: f64,
    /// Required Eb/N0.
    pub ebn0_db: f64,
    /// Received power S. `None` derives it from transmit power and path loss
    /// at the cell radius.
    pub rx_power_s_dbm: Option<f64>,
    pub noise_density_dbm_hz: f64,
    pub tx_power_dbm: f64,
    pub cell_radius_m: f64,
    pub freq_ghz: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            bandwidth_w_hz: 1e6,
            bitrate_rb_hz: 15_625.0,
            ebn0_db: 7.0,
            rx_power_s_dbm: None,
            noise_density_dbm_hz: -174.0,
            tx_power_dbm: 23.0,
            cell_radius_m: 600.0,
            freq_ghz: 2.6205,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.bitrate_rb_hz > 0.0 && self.bandwidth_w_hz >= self.bitrate_rb_hz) {
            return Err(invalid(format!(
                "need W >= R_b > 0, got W = {} Hz, R_b = {} Hz",
                self.bandwidth_w_hz, self.bitrate_rb_hz
            )));
        }
        pathloss_db(self.cell_radius_m, self.freq_ghz)?;
        Ok(())
    }

    pub fn processing_gain(&self) -> f64 {
        processing_gain(self.bandwidth_w_hz, self.bitrate_rb_hz)
    }

    /// S in dBm: the override if set, else `P_t - PL(r_d, f)`.
    pub fn rx_power_dbm(&self) -> Result<f64> {
        match self.rx_power_s_dbm {
            Some(s) => Ok(s),
            None => Ok(self.tx_power_dbm - pathloss_db(self.cell_radius_m, self.freq_ghz)?),
        }
    }

    /// Thermal noise over W, in dBm.
    pub fn noise_dbm(&self) -> f64 {
        noise_power_dbm(self.noise_density_dbm_hz, self.bandwidth_w_hz)
    }

    pub fn eta_over_s(&self) -> Result<f64> {
        Ok(db_to_linear(self.noise_dbm() - self.rx_power_dbm()?))
    }

    /// Real-valued standalone capacity at the required Eb/N0.
    pub fn capacity(&self) -> Result<f64> {
        Ok(capacity_standalone(
            self.processing_gain(),
            db_to_linear(self.ebn0_db),
            self.eta_over_s()?,
        ))
    }
}

/// LTE overlay parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoexParams {
    pub lte_users_m: u32,
    pub total_rbs_r: u32,
    /// CDMA channel width in resource blocks, R_c.
    pub cdma_equiv_rbs_rc: f64,
    pub occupancy_beta: f64,
    pub lte_tx_power_dbm: f64,
    pub shannon_gap_a: f64,
    pub bw_efficiency_b: f64,
    pub lte_bandwidth_hz: f64,
}

impl Default for CoexParams {
    fn default() -> Self {
        Self {
            lte_users_m: 100,
            total_rbs_r: 100,
            cdma_equiv_rbs_rc: 5.5,
            occupancy_beta: 1.0,
            lte_tx_power_dbm: 23.0,
            shannon_gap_a: 0.75,
            bw_efficiency_b: 1.0,
            lte_bandwidth_hz: 20e6,
        }
    }
}

impl CoexParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.occupancy_beta) {
            return Err(invalid(format!(
                "occupancy beta = {} outside [0, 1]",
                self.occupancy_beta
            )));
        }
        if self.lte_users_m < 1 || self.total_rbs_r < 1 {
            return Err(invalid("M and R must be at least 1"));
        }
        if !(self.cdma_equiv_rbs_rc > 0.0 && self.lte_bandwidth_hz > 0.0) {
            return Err(invalid("R_c and W_L must be positive"));
        }
        Ok(())
    }

    /// Overlapping bandwidth factor `K = R_c M / R`.
    pub fn overlap_factor(&self) -> f64 {
        self.cdma_equiv_rbs_rc * f64::from(self.lte_users_m) / f64::from(self.total_rbs_r)
    }
}

/// LTE UE placement for the SINR expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    /// At the cell edge, `r_d`.
    Worst,
    /// At `r_d / 2`.
    Average,
}

impl Case {
    pub fn distance_m(self, cell_radius_m: f64) -> f64 {
        match self {
            Case::Worst => cell_radius_m,
            Case::Average => cell_radius_m / 2.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Case::Worst => "worst",
            Case::Average => "average",
        }
    }
}

/// `L_c = W / R_b`.
pub fn processing_gain(w_hz: f64, rb_hz: f64) -> f64 {
    w_hz / rb_hz
}

/// BPSK bit error probability `Q(sqrt(2 Eb/N0))`.
pub fn ber_bpsk(ebn0_db: f64) -> f64 {
    q_function((2.0 * db_to_linear(ebn0_db)).sqrt())
}

/// `N = 1 + L_c / (Eb/N0) - eta/S`.
pub fn capacity_standalone(lc: f64, ebn0_linear: f64, eta_over_s: f64) -> f64 {
    1.0 + lc / ebn0_linear - eta_over_s
}

/// Whole users supported by a real-valued capacity; negative capacities give 0.
pub fn users(n: f64) -> u64 {
    if n.is_finite() && n > 0.0 {
        n.floor() as u64
    } else {
        0
    }
}

/// Users per channel times number of channels.
pub fn network_capacity(n_per_channel: f64, channels: u64) -> u64 {
    users(n_per_channel) * channels
}

/// `Q_Rc^L = 3 beta (M R_c / R) P_t^L / PL(d, f)` in dBm.
pub fn coex_lte_power_into_cdma(coex: &CoexParams, distance_m: f64, freq_ghz: f64) -> Result<f64> {
    coex.validate()?;
    let pl = pathloss_db(distance_m, freq_ghz)?;
    let share = 3.0 * coex.occupancy_beta * coex.overlap_factor();
    Ok(linear_to_db(share) + coex.lte_tx_power_dbm - pl)
}

/// `N = 1 + L_c / (Eb/N0) - (Q + eta) / P_r^C`, powers in a common linear unit.
pub fn capacity_coex(lc: f64, ebn0_req_linear: f64, pr_c: f64, q_lte: f64, eta: f64) -> f64 {
    1.0 + lc / ebn0_req_linear - (q_lte + eta) / pr_c
}

/// Coexistence capacity for a full parameter set.
pub fn capacity_coex_for(link: &LinkParams, coex: &CoexParams) -> Result<f64> {
    link.validate()?;
    let q = coex_lte_power_into_cdma(coex, link.cell_radius_m, link.freq_ghz)?;
    Ok(capacity_coex(
        link.processing_gain(),
        db_to_linear(link.ebn0_db),
        dbm_to_mw(link.rx_power_dbm()?),
        dbm_to_mw(q),
        dbm_to_mw(link.noise_dbm()),
    ))
}

/// LTE uplink SINR `K P_r^L / (N P_r^C + eta_L)` with `P_r^C` from the link
/// budget.
pub fn lte_sinr(coex: &CoexParams, case: Case, n_cdma: u32, link: &LinkParams) -> Result<f64> {
    link.validate()?;
    lte_sinr_at(coex, case, n_cdma, dbm_to_mw(link.rx_power_dbm()?), link)
}

/// [`lte_sinr`] with an explicit per-user CDMA received power (mW).
///
/// Result is capped at [`GAMMA_CAP`].
pub fn lte_sinr_at(
    coex: &CoexParams,
    case: Case,
    n_cdma: u32,
    pr_c_mw: f64,
    link: &LinkParams,
) -> Result<f64> {
    coex.validate()?;
    if pr_c_mw < 0.0 {
        return Err(invalid("CDMA received power must be non-negative"));
    }
    let pl = pathloss_db(case.distance_m(link.cell_radius_m), link.freq_ghz)?;
    let pr_l = dbm_to_mw(coex.lte_tx_power_dbm - pl);
    let eta_l = dbm_to_mw(noise_power_dbm(
        link.noise_density_dbm_hz,
        coex.lte_bandwidth_hz,
    ));
    let denom = f64::from(n_cdma) * pr_c_mw + eta_l;
    if denom <= 0.0 {
        return Ok(GAMMA_CAP);
    }
    Ok((coex.overlap_factor() * pr_l / denom).min(GAMMA_CAP))
}

/// `T = a W_L log2(1 + b Gamma)` in bit/s.
pub fn lte_throughput(gamma_linear: f64, coex: &CoexParams) -> f64 {
    coex.shannon_gap_a * coex.lte_bandwidth_hz * (1.0 + coex.bw_efficiency_b * gamma_linear).log2()
}

/// `T(N) / T(0)` for the given case.
pub fn lte_throughput_ratio(
    coex: &CoexParams,
    case: Case,
    n_cdma: u32,
    link: &LinkParams,
) -> Result<f64> {
    let t0 = lte_throughput(lte_sinr(coex, case, 0, link)?, coex);
    let tn = lte_throughput(lte_sinr(coex, case, n_cdma, link)?, coex);
    Ok(tn / t0)
}

/// Code-channel reuse factor.
pub fn reuse_factor(channels: u32, code_groups: u32) -> Result<u32> {
    if channels < 1 || code_groups < 1 {
        return Err(invalid("channels and code groups must be at least 1"));
    }
    Ok(channels * code_groups)
}

/// Interference power ratio `eta / S` of the default link budget.
pub fn default_eta_over_s() -> f64 {
    LinkParams::default()
        .eta_over_s()
        .expect("default link parameters are valid")
}
