//! The flat parameter set shared by every scenario.
//!
//! Every key can come from the config file or a command-line override; values
//! are kept as typed fields and round-trip through their text form, which is
//! what the run manifest records.

use std::collections::BTreeMap;
use std::path::Path;

use crate::analytic::{CoexParams, LinkParams};
use crate::channel::pathloss_db;
use crate::error::{Error, Result};
use crate::frame::{FrameConfig, MAX_PAYLOAD, PREAMBLE_LEN};
use crate::traffic::{Periodicity, TrafficProfile};

/// A list of values written as comma-separated items, each either a number or
/// an inclusive `start:stop:step` range, e.g. `0:8:0.5` or `1,10:100:10`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    text: String,
    values: Vec<f64>,
}

impl Grid {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let text: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        let mut values = Vec::new();
        for item in text.split(',') {
            let parts: Vec<&str> = item.split(':').collect();
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format!("`{s}` is not a number"))
            };
            match parts.as_slice() {
                [v] => values.push(num(v)?),
                [a, b, s] => {
                    let (a, b, s) = (num(a)?, num(b)?, num(s)?);
                    if s == 0.0 || (b - a) * s < 0.0 {
                        return Err(format!(
                            "range `{item}` has a step pointing away from its end"
                        ));
                    }
                    let n = ((b - a) / s + 1e-9).floor() as usize + 1;
                    if n > 1_000_000 {
                        return Err(format!("range `{item}` has too many points"));
                    }
                    values.extend((0..n).map(|i| round9(a + i as f64 * s)));
                }
                _ => return Err(format!("`{item}` is neither a number nor start:stop:step")),
            }
        }
        if values.is_empty() {
            return Err("empty grid".into());
        }
        Ok(Self { text, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn as_text(&self) -> &str {
        &self.text
    }

    /// Values as non-negative integers, if they all are.
    pub fn integers(&self) -> Option<Vec<u64>> {
        self.values
            .iter()
            .map(|&v| (v >= 0.0 && v.fract() == 0.0 && v < 1e15).then_some(v as u64))
            .collect()
    }
}

fn round9(v: f64) -> f64 {
    let r = (v * 1e9).round() / 1e9;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Periodicity mixture written as `hours:weight,...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mix(pub Vec<Periodicity>);

/// Text conversion for parameter values.
pub trait ParamValue: Sized {
    fn parse_value(text: &str) -> std::result::Result<Self, String>;
    fn format_value(&self) -> String;
}

impl ParamValue for f64 {
    fn parse_value(text: &str) -> std::result::Result<Self, String> {
        text.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| !v.is_nan())
            .ok_or_else(|| format!("`{text}` is not a number"))
    }
    fn format_value(&self) -> String {
        self.to_string()
    }
}

macro_rules! int_value {
    ($($t:ty),*) => {$(
        impl ParamValue for $t {
            fn parse_value(text: &str) -> std::result::Result<Self, String> {
                let t = text.trim();
                if let Ok(v) = t.parse::<$t>() {
                    return Ok(v);
                }
                // Accept integral floats such as `5.0` or `1e3`.
                match t.parse::<f64>() {
                    Ok(f) if f.fract() == 0.0 && f >= <$t>::MIN as f64 && f <= <$t>::MAX as f64 => Ok(f as $t),
                    _ => Err(format!("`{text}` is not a non-negative integer")),
                }
            }
            fn format_value(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
int_value!(u32, u64, usize);

impl ParamValue for Option<f64> {
    fn parse_value(text: &str) -> std::result::Result<Self, String> {
        match text.trim() {
            "" | "none" | "None" => Ok(None),
            t => f64::parse_value(t).map(Some),
        }
    }
    fn format_value(&self) -> String {
        self.map(|v| v.to_string()).unwrap_or_default()
    }
}

impl ParamValue for Grid {
    fn parse_value(text: &str) -> std::result::Result<Self, String> {
        Grid::parse(text)
    }
    fn format_value(&self) -> String {
        self.text.clone()
    }
}

impl ParamValue for Mix {
    fn parse_value(text: &str) -> std::result::Result<Self, String> {
        let mut out = Vec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (h, w) = item
                .split_once(':')
                .ok_or_else(|| format!("`{item}` is not hours:weight"))?;
            out.push(Periodicity {
                period_hours: f64::parse_value(h)?,
                weight: f64::parse_value(w)?,
            });
        }
        Ok(Mix(out))
    }
    fn format_value(&self) -> String {
        self.0
            .iter()
            .map(|p| format!("{}:{}", p.period_hours, p.weight))
            .collect::<Vec<_>>()
            .join(",")
    }
}

macro_rules! params {
    ($( $key:ident : $ty:ty = $default:expr => $doc:literal; )*) => {
        /// Every tunable of every scenario. Field names are the config keys.
        #[derive(Debug, Clone, PartialEq)]
        pub struct Params {
            $( #[doc = $doc] pub $key: $ty, )*
        }

        impl Default for Params {
            fn default() -> Self {
                Self { $( $key: <$ty as ParamValue>::parse_value($default).expect("valid default"), )* }
            }
        }

        /// `(key, description, default)` for every parameter, in declaration order.
        pub const KEYS: &[(&str, &str, &str)] = &[ $( (stringify!($key), $doc, $default), )* ];

        impl Params {
            /// Sets one parameter from text. Dashes in `key` are read as underscores.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let key = key.replace('-', "_");
                match key.as_str() {
                    $( stringify!($key) => {
                        self.$key = <$ty as ParamValue>::parse_value(value).map_err(|reason| Error::OutOfDomain {
                            key: key.clone(),
                            reason,
                        })?;
                    } )*
                    _ => return Err(Error::UnknownParameter(key)),
                }
                Ok(())
            }

            /// Text form of one parameter.
            pub fn get(&self, key: &str) -> Option<String> {
                match key.replace('-', "_").as_str() {
                    $( stringify!($key) => Some(ParamValue::format_value(&self.$key)), )*
                    _ => None,
                }
            }
        }
    };
}

params! {
    // Link budget.
    w_hz: f64 = "1000000" => "CDMA spread bandwidth W (Hz)";
    lc: usize = "64" => "processing gain L_c = W/R_b, also the spreading code order";
    ebn0_db: f64 = "7" => "required Eb/N0 (dB)";
    s_dbm: Option<f64> = "" => "received CDMA power S (dBm); empty derives it from pt_dbm and path loss at rd_m";
    n0_dbm_hz: f64 = "-174" => "thermal noise density (dBm/Hz)";
    pt_dbm: f64 = "23" => "IoT UE transmit power P_t^C (dBm)";
    rd_m: f64 = "600" => "cell site sector radius r_d (m)";
    f_ghz: f64 = "2.6205" => "carrier frequency f (GHz), 2 < f < 6";
    channels: u32 = "20" => "1 MHz CDMA channels in the band";
    code_groups: u32 = "4" => "non-overlapping spreading sequence groups";

    // LTE overlay, analytic model.
    m: u32 = "100" => "LTE UEs M";
    r: u32 = "100" => "LTE uplink resource blocks R";
    rc: f64 = "5.5" => "CDMA channel width in resource blocks R_c";
    beta: f64 = "1" => "LTE channel occupancy beta in [0, 1]";
    pt_l_dbm: f64 = "23" => "LTE UE transmit power P_t^L (dBm)";
    a: f64 = "0.75" => "Shannon gap factor a";
    b: f64 = "1" => "LTE bandwidth efficiency b";
    w_l_hz: f64 = "20000000" => "LTE channel bandwidth W_L (Hz)";

    // Analytic table grids.
    lc_grid: Grid = "16,32,64,128" => "processing gains for the BER/capacity table";
    ebn0_grid: Grid = "0:12:1" => "Eb/N0 values (dB) for the BER/capacity table";
    m_grid: Grid = "1,10:100:10" => "LTE UE counts for the coexistence capacity table";
    beta_grid: Grid = "0.25,0.5,0.75,1" => "occupancy values for the coexistence capacity table";
    n_cdma_grid: Grid = "0:20:1" => "CDMA UE counts for the LTE throughput table";

    // Link simulation.
    snr_grid: Grid = "0:8:0.5" => "per-chip SNR grid (dB) for per-sweep";
    payload_grid: Grid = "10,12,15" => "payload sizes (bytes, 0-15) for per-sweep";
    packets: usize = "1000" => "packets per sweep point";
    batch: usize = "50" => "packets per simulated sample stream";
    threshold: f64 = "0.6" => "normalized preamble correlation threshold in (0, 1]";
    window: usize = "10000" => "detector search window (samples)";
    preamble_index: usize = "0" => "Hadamard row of the 64-chip preamble";
    data_index: usize = "1" => "Hadamard row of the user data code";
    gap_ms: f64 = "60" => "packet interval (ms)";
    idle_compression: f64 = "30" => "factor by which idle time between packets is shortened";

    // Multi-user simulation.
    n_grid: Grid = "1,2,4,8,13" => "simultaneous users for multiuser";
    mu_frames: usize = "5000" => "frames of the target user per multiuser point";
    mu_snr_db: Option<f64> = "" => "per-chip SNR S/eta (dB) for multiuser; empty uses the link budget";

    // Coexistence simulation.
    coex_snr_grid: Grid = "-7.1:-1.7:0.6,-1.4" => "CDMA SINR grid (dB) for coex";
    coex_threshold: f64 = "0.3" => "preamble threshold used under LTE interference";
    coex_payload: usize = "15" => "payload size (bytes) for coex";
    tones: usize = "32" => "interferer tones";
    tone_spacing_hz: f64 = "15000" => "interferer tone spacing (Hz)";
    exp_m: u32 = "1" => "LTE UEs in the coexistence experiment";
    exp_r: u32 = "25" => "LTE resource blocks in the coexistence experiment";
    exp_w_l_hz: f64 = "5000000" => "LTE bandwidth in the coexistence experiment (Hz)";
    exp_beta: f64 = "1" => "LTE occupancy in the coexistence experiment";
    exp_n: u32 = "1" => "active CDMA UEs seen by LTE in the coexistence experiment";

    // Traffic model.
    alpha: f64 = "2.5" => "Pareto shape of the application payload";
    pl_min: f64 = "20" => "minimum application payload (bytes)";
    pl_max: f64 = "200" => "payload clip (bytes)";
    periodicity: Mix = "24:0.4,2:0.4,1:0.15,0.5:0.05" => "report period mixture, hours:weight";
    n_ms: u64 = "52547" => "IoT devices per site sector N_MS";
    overhead: f64 = "65" => "packet overhead (bytes)";
    pl_cdma: f64 = "20" => "application bytes per CDMA packet";
    n_sim: u32 = "5" => "simultaneous CDMA users N for the ledger";
    delta_grid: Grid = "2,3" => "data repetition factors delta for the ledger";
    nbiot_ref: Option<f64> = "" => "NB-IoT reference capacity (bytes/day); empty leaves it out";

    // Threshold calibration.
    target_fa: f64 = "0.001" => "target false-alarm rate per detection window";
    cal_snr_db: f64 = "0" => "per-chip SNR (dB) for calibration";
    cal_trials: usize = "1000" => "Monte-Carlo windows for calibration";
}

fn domain(key: &str, reason: impl Into<String>) -> Error {
    Error::OutOfDomain {
        key: key.into(),
        reason: reason.into(),
    }
}

impl Params {
    /// All parameters in text form.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        KEYS.iter()
            .map(|(k, _, _)| (k.to_string(), self.get(k).expect("declared key")))
            .collect()
    }

    /// Defaults overridden by `map`; unknown keys are rejected.
    pub fn from_map<'a>(map: impl IntoIterator<Item = (&'a String, &'a String)>) -> Result<Self> {
        let mut p = Self::default();
        for (k, v) in map {
            p.set(k, v)?;
        }
        Ok(p)
    }

    /// Applies a flat `key = value` config file on top of the current values.
    ///
    /// Values may be numbers, strings or arrays of numbers (joined into a
    /// grid). Nested tables are rejected.
    pub fn apply_config_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_config_str(&text)
    }

    pub fn apply_config_str(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for (key, value) in &table {
            let text = scalar_text(key, value)?;
            self.set(key, &text)?;
        }
        Ok(())
    }

    pub fn link(&self) -> LinkParams {
        LinkParams {
            bandwidth_w_hz: self.w_hz,
            bitrate_rb_hz: self.w_hz / self.lc as f64,
            ebn0_db: self.ebn0_db,
            rx_power_s_dbm: self.s_dbm,
            noise_density_dbm_hz: self.n0_dbm_hz,
            tx_power_dbm: self.pt_dbm,
            cell_radius_m: self.rd_m,
            freq_ghz: self.f_ghz,
        }
    }

    pub fn coex(&self) -> CoexParams {
        CoexParams {
            lte_users_m: self.m,
            total_rbs_r: self.r,
            cdma_equiv_rbs_rc: self.rc,
            occupancy_beta: self.beta,
            lte_tx_power_dbm: self.pt_l_dbm,
            shannon_gap_a: self.a,
            bw_efficiency_b: self.b,
            lte_bandwidth_hz: self.w_l_hz,
        }
    }

    /// LTE configuration of the coexistence experiment.
    pub fn exp_coex(&self) -> CoexParams {
        CoexParams {
            lte_users_m: self.exp_m,
            total_rbs_r: self.exp_r,
            occupancy_beta: self.exp_beta,
            lte_bandwidth_hz: self.exp_w_l_hz,
            ..self.coex()
        }
    }

    pub fn traffic(&self) -> TrafficProfile {
        TrafficProfile {
            pareto_alpha: self.alpha,
            pl_min_bytes: self.pl_min,
            pl_max_bytes: self.pl_max,
            periodicity_mix: self.periodicity.0.clone(),
            devices_per_sector: self.n_ms,
            overhead_bytes: self.overhead,
            max_payload_bytes: self.pl_cdma,
            repetition_delta: 1,
        }
    }

    pub fn frame_config(&self) -> FrameConfig {
        FrameConfig {
            preamble_code_index: self.preamble_index,
            data_code_index: self.data_index,
            order: self.lc,
        }
    }

    /// Rejects out-of-domain values, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        if !(self.lc.is_power_of_two() && (2..=crate::codes::MAX_ORDER).contains(&self.lc)) {
            return Err(domain(
                "lc",
                format!("{} is not a power of two in 2..=1024", self.lc),
            ));
        }
        if !(self.w_hz > 0.0) {
            return Err(domain("w_hz", "must be positive"));
        }
        if !(self.f_ghz > 2.0 && self.f_ghz < 6.0) {
            return Err(domain("f_ghz", "path loss model needs 2 < f < 6 GHz"));
        }
        if !(self.rd_m >= 2.0) {
            return Err(domain("rd_m", "must be at least 2 m"));
        }
        for (key, v) in [("beta", self.beta), ("exp_beta", self.exp_beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(domain(key, format!("{v} outside [0, 1]")));
            }
        }
        for (key, v) in [
            ("m", self.m),
            ("r", self.r),
            ("exp_m", self.exp_m),
            ("exp_r", self.exp_r),
        ] {
            if v < 1 {
                return Err(domain(key, "must be at least 1"));
            }
        }
        for (key, v) in [
            ("rc", self.rc),
            ("w_l_hz", self.w_l_hz),
            ("exp_w_l_hz", self.exp_w_l_hz),
        ] {
            if !(v > 0.0) {
                return Err(domain(key, "must be positive"));
            }
        }
        if self.channels < 1 || self.code_groups < 1 {
            return Err(domain(
                "channels",
                "channels and code groups must be at least 1",
            ));
        }
        for (key, v) in [
            ("threshold", self.threshold),
            ("coex_threshold", self.coex_threshold),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(domain(key, format!("{v} outside (0, 1]")));
            }
        }
        let payloads = self
            .payload_grid
            .integers()
            .filter(|v| v.iter().all(|&p| p <= MAX_PAYLOAD as u64))
            .ok_or_else(|| domain("payload_grid", "payloads must be whole bytes in 0..=15"))?;
        debug_assert!(!payloads.is_empty());
        if self.coex_payload > MAX_PAYLOAD {
            return Err(domain(
                "coex_payload",
                "payloads must be whole bytes in 0..=15",
            ));
        }
        if self.packets == 0 || self.batch == 0 || self.mu_frames == 0 || self.cal_trials == 0 {
            return Err(domain(
                "packets",
                "packet, batch, frame and trial counts must be positive",
            ));
        }
        if self.window < 2 * PREAMBLE_LEN {
            return Err(domain("window", "must cover at least two preamble lengths"));
        }
        if self.preamble_index >= PREAMBLE_LEN {
            return Err(domain(
                "preamble_index",
                "must be a row of the order-64 matrix",
            ));
        }
        if self.data_index >= self.lc || self.data_index == self.preamble_index {
            return Err(domain(
                "data_index",
                "must be a row below lc and differ from the preamble row",
            ));
        }
        if !(self.gap_ms >= 0.0) || !(self.idle_compression > 0.0) {
            return Err(domain(
                "idle_compression",
                "gap must be >= 0 and compression > 0",
            ));
        }
        let users = self
            .n_grid
            .integers()
            .ok_or_else(|| domain("n_grid", "user counts must be whole numbers"))?;
        if users.iter().any(|&n| n < 1 || n as usize > self.lc - 1) {
            return Err(domain(
                "n_grid",
                format!(
                    "user counts must be in 1..={} (codes other than row 0)",
                    self.lc - 1
                ),
            ));
        }
        if self.tones < 1 || !(self.tone_spacing_hz > 0.0) {
            return Err(domain(
                "tones",
                "need at least one tone at a positive spacing",
            ));
        }
        let deltas = self
            .delta_grid
            .integers()
            .ok_or_else(|| domain("delta_grid", "repetition factors must be whole numbers"))?;
        if deltas.iter().any(|&d| d < 1 || d > u64::from(u32::MAX)) {
            return Err(domain(
                "delta_grid",
                "repetition factors must be at least 1",
            ));
        }
        if self
            .m_grid
            .integers()
            .is_none_or(|v| v.iter().any(|&m| m < 1 || m > u64::from(u32::MAX)))
        {
            return Err(domain("m_grid", "LTE UE counts must be whole numbers >= 1"));
        }
        if self
            .beta_grid
            .values()
            .iter()
            .any(|b| !(0.0..=1.0).contains(b))
        {
            return Err(domain("beta_grid", "occupancy values must be in [0, 1]"));
        }
        if self.lc_grid.values().iter().any(|&l| !(l >= 1.0)) {
            return Err(domain("lc_grid", "processing gains must be >= 1"));
        }
        if self
            .n_cdma_grid
            .integers()
            .is_none_or(|v| v.iter().any(|&n| n > u64::from(u32::MAX)))
        {
            return Err(domain(
                "n_cdma_grid",
                "CDMA UE counts must be whole numbers",
            ));
        }
        if !(self.target_fa > 0.0 && self.target_fa < 1.0) {
            return Err(domain("target_fa", "must be in (0, 1)"));
        }
        self.traffic()
            .validate()
            .map_err(|e| domain("alpha", e.to_string()))?;
        pathloss_db(self.rd_m / 2.0, self.f_ghz).map_err(|e| domain("rd_m", e.to_string()))?;
        Ok(())
    }
}

fn scalar_text(key: &str, value: &toml::Value) -> Result<String> {
    use toml::Value;
    Ok(match value {
        Value::String(s) => s.clone(),
        Value::Integer(i) => i.to_string(),
        Value::Float(f) => f.to_string(),
        Value::Boolean(b) => b.to_string(),
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::Table(_) | Value::Array(_) => Err(Error::Config(format!(
                    "`{key}`: arrays may only hold numbers or strings"
                ))),
                other => scalar_text(key, other),
            })
            .collect::<Result<Vec<_>>>()?
            .join(","),
        Value::Datetime(d) => d.to_string(),
        Value::Table(_) => {
            return Err(Error::Config(format!(
                "`{key}`: the config file is flat; nested tables are not supported"
            )))
        }
    })
}
