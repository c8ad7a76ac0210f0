//! Line-oriented `key = value` configuration files.
//!
//! Gains are given in dB and angles in degrees; both are converted once here.
//! Keys may appear in any order: derived quantities (path-loss intercepts,
//! noise power, blockage rate) are resolved after every key has been read.

use std::collections::BTreeMap;
use std::path::Path;

use pcp_mmwave::model::{
    blockage_rate_from_avg_los, db_to_linear, default_noise_power, free_space_intercept, AntennaPattern,
    NetworkConfig, DEFAULT_BANDWIDTH_HZ, DEFAULT_NOISE_FIGURE_DB, DEFAULT_TX_POWER_DBM,
};

use crate::error::CliError;
use crate::presets::FrequencyPreset;

/// A network configuration plus the SINR threshold it is evaluated at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub network: NetworkConfig,
    pub gamma_th_db: f64,
}

pub const DEFAULT_GAMMA_TH_DB: f64 = 20.0;

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            network: NetworkConfig::default(),
            gamma_th_db: DEFAULT_GAMMA_TH_DB,
        }
    }
}

impl RunConfig {
    pub fn gamma_th(&self) -> f64 {
        db_to_linear(self.gamma_th_db)
    }
}

/// Every accepted key, with its unit.
pub const KEYS: &[(&str, &str)] = &[
    ("frequency_preset", "28, 38, 60 or 73 (GHz); sets carrier, exponents and antenna elements"),
    ("parent_density_km2", "cluster centers per km²"),
    ("scatter_std", "m"),
    ("cluster_tx_count", "integer"),
    ("mean_active", "average active transmitters per cluster"),
    ("alpha_los", ""),
    ("alpha_nlos", ""),
    ("nakagami_los", "integer"),
    ("nakagami_nlos", "integer"),
    ("avg_los_distance", "m"),
    ("blockage_rate", "1/m"),
    ("carrier_hz", "Hz"),
    ("intercept_los_db", "dB at 1 m"),
    ("intercept_nlos_db", "dB at 1 m"),
    ("tx_main_lobe_db", "dB"),
    ("tx_side_lobe_db", "dB"),
    ("tx_beamwidth_deg", "degrees"),
    ("rx_main_lobe_db", "dB"),
    ("rx_side_lobe_db", "dB"),
    ("rx_beamwidth_deg", "degrees"),
    ("antenna_elements", "integer"),
    ("bandwidth_hz", "Hz"),
    ("noise_figure_db", "dB"),
    ("tx_power_dbm", "dBm"),
    ("noise_power_db", "dB relative to the transmit power"),
    ("region_half_width", "m"),
    ("boresight_gain_db", "dB"),
    ("gamma_th_db", "dB"),
];

struct Entry {
    line: usize,
    value: String,
}

struct Entries(BTreeMap<String, Entry>);

impl Entries {
    fn parse(text: &str) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(CliError::parse(line, format!("expected `key = value`, got `{content}`")));
            };
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || value.is_empty() {
                return Err(CliError::parse(line, "empty key or value"));
            }
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(CliError::parse(line, format!("unknown key `{key}`")));
            }
            let entry = Entry {
                line,
                value: value.to_string(),
            };
            if let Some(prev) = map.insert(key.to_string(), entry) {
                return Err(CliError::parse(line, format!("duplicate key `{key}` (first set on line {})", prev.line)));
            }
        }
        Ok(Entries(map))
    }

    fn has(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    fn real(&self, key: &str) -> Result<Option<f64>, CliError> {
        let Some(e) = self.0.get(key) else {
            return Ok(None);
        };
        match e.value.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Some(x)),
            _ => Err(CliError::parse(e.line, format!("`{key}` needs a finite number, got `{}`", e.value))),
        }
    }

    fn integer(&self, key: &str) -> Result<Option<u32>, CliError> {
        let Some(e) = self.0.get(key) else {
            return Ok(None);
        };
        e.value
            .parse::<u32>()
            .map(Some)
            .map_err(|_| CliError::parse(e.line, format!("`{key}` needs a non-negative integer, got `{}`", e.value)))
    }

    fn conflict(&self, a: &str, b: &str) -> Result<(), CliError> {
        if let (Some(x), Some(y)) = (self.0.get(a), self.0.get(b)) {
            return Err(CliError::parse(
                x.line.max(y.line),
                format!("`{a}` and `{b}` set the same quantity; give only one"),
            ));
        }
        Ok(())
    }
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, CliError> {
    let e = Entries::parse(text)?;
    e.conflict("avg_los_distance", "blockage_rate")?;
    for k in ["bandwidth_hz", "noise_figure_db", "tx_power_dbm"] {
        e.conflict("noise_power_db", k)?;
    }

    let mut run = RunConfig::default();
    let cfg = &mut run.network;
    if let Some(ghz) = e.integer("frequency_preset")? {
        let preset = FrequencyPreset::from_ghz(ghz).ok_or_else(|| {
            CliError::parse(
                e.0["frequency_preset"].line,
                format!("unknown frequency preset {ghz}; expected 28, 38, 60 or 73"),
            )
        })?;
        preset.apply(cfg);
    }
    if let Some(x) = e.real("parent_density_km2")? {
        cfg.parent_density = x * 1e-6;
    }
    if let Some(x) = e.real("scatter_std")? {
        cfg.scatter_std = x;
    }
    if let Some(x) = e.integer("cluster_tx_count")? {
        cfg.cluster_tx_count = x;
    }
    if let Some(x) = e.real("mean_active")? {
        cfg.mean_active = x;
    }
    let ch = &mut cfg.channel;
    if let Some(x) = e.real("alpha_los")? {
        ch.alpha_los = x;
    }
    if let Some(x) = e.real("alpha_nlos")? {
        ch.alpha_nlos = x;
    }
    if let Some(x) = e.integer("nakagami_los")? {
        ch.nakagami_los = x;
    }
    if let Some(x) = e.integer("nakagami_nlos")? {
        ch.nakagami_nlos = x;
    }
    if let Some(x) = e.real("avg_los_distance")? {
        ch.blockage_rate = blockage_rate_from_avg_los(x);
    }
    if let Some(x) = e.real("blockage_rate")? {
        ch.blockage_rate = x;
    }
    if let Some(x) = e.real("carrier_hz")? {
        cfg.carrier_hz = x;
    }
    if e.has("carrier_hz") || e.has("frequency_preset") {
        let c = free_space_intercept(cfg.carrier_hz);
        cfg.channel.intercept_los = c;
        cfg.channel.intercept_nlos = c;
    }
    if let Some(x) = e.real("intercept_los_db")? {
        cfg.channel.intercept_los = db_to_linear(x);
    }
    if let Some(x) = e.real("intercept_nlos_db")? {
        cfg.channel.intercept_nlos = db_to_linear(x);
    }

    let pattern = |prefix: &str, base: AntennaPattern| -> Result<AntennaPattern, CliError> {
        let main = e.real(&format!("{prefix}_main_lobe_db"))?;
        let side = e.real(&format!("{prefix}_side_lobe_db"))?;
        let width = e.real(&format!("{prefix}_beamwidth_deg"))?;
        if main.is_none() && side.is_none() && width.is_none() {
            return Ok(base);
        }
        let to_db = |g: f64| 10.0 * g.log10();
        Ok(AntennaPattern::from_db_deg(
            main.unwrap_or(to_db(base.main_lobe_gain)),
            side.unwrap_or(to_db(base.side_lobe_gain)),
            width.unwrap_or(base.beamwidth.to_degrees()),
        )?)
    };
    cfg.tx_pattern = pattern("tx", cfg.tx_pattern)?;
    cfg.rx_pattern = pattern("rx", cfg.rx_pattern)?;

    if let Some(x) = e.integer("antenna_elements")? {
        cfg.antenna_elements = x;
    }
    cfg.noise_power = match e.real("noise_power_db")? {
        Some(db) => db_to_linear(db),
        None => default_noise_power(
            e.real("bandwidth_hz")?.unwrap_or(DEFAULT_BANDWIDTH_HZ),
            e.real("noise_figure_db")?.unwrap_or(DEFAULT_NOISE_FIGURE_DB),
            e.real("tx_power_dbm")?.unwrap_or(DEFAULT_TX_POWER_DBM),
        ),
    };
    if let Some(x) = e.real("region_half_width")? {
        cfg.region_half_width = x;
    }
    if let Some(x) = e.real("boresight_gain_db")? {
        cfg.boresight_gain_override = Some(db_to_linear(x));
    }
    if let Some(x) = e.real("gamma_th_db")? {
        run.gamma_th_db = x;
    }
    run.network.validate()?;
    run.network.gain_table()?;
    Ok(run)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config_str(&text)
}
