//! Simulation configuration, its canonical fingerprint and the plain-text
//! `key = value` config file format.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

/// Horizon beyond which the daily-scale assumptions stop holding.
pub const MAX_RECOMMENDED_DAYS: u32 = 60;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("cannot read config file {path}: {message}")]
    Io { path: String, message: String },
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Which prudential ratios banks act on. Reserve requirement and liquidity
/// ratio are always enforced and therefore have no switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RatioToggles {
    pub leverage: bool,
    pub car: bool,
    pub large_exposure: bool,
}

impl RatioToggles {
    pub fn two_ratios() -> RatioToggles {
        RatioToggles::default()
    }

    pub fn all() -> RatioToggles {
        RatioToggles {
            leverage: true,
            car: true,
            large_exposure: true,
        }
    }

    /// Parses a comma-separated list such as `reserve,liquidity,leverage`.
    pub fn parse(list: &str) -> Result<RatioToggles, ConfigError> {
        let mut toggles = RatioToggles::default();
        let (mut reserve, mut liquidity) = (false, false);
        for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item {
                "reserve" => reserve = true,
                "liquidity" => liquidity = true,
                "leverage" => toggles.leverage = true,
                "car" => toggles.car = true,
                "large-exposure" | "large_exposure" => toggles.large_exposure = true,
                other => return Err(invalid("ratios", format!("unknown ratio `{other}`"))),
            }
        }
        if !(reserve && liquidity) {
            return Err(invalid(
                "ratios",
                "reserve and liquidity are always enforced and must be listed",
            ));
        }
        Ok(toggles)
    }
}

impl fmt::Display for RatioToggles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("reserve,liquidity")?;
        if self.leverage {
            f.write_str(",leverage")?;
        }
        if self.car {
            f.write_str(",car")?;
        }
        if self.large_exposure {
            f.write_str(",large-exposure")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Shock amplitude relative to initial cash.
    pub sigma: f64,
    /// Market depth: relative price move per unit of excess demand.
    pub eta: f64,
    pub days: u32,
    pub realizations: u32,
    pub seed: u64,
    pub interbank: bool,
    pub securities_market: bool,
    pub trust_effect: bool,
    /// Share of surplus still lent once trust is broken.
    pub trust_fraction: f64,
    pub ratios: RatioToggles,
}

impl Default for SimConfig {
    fn default() -> SimConfig {
        SimConfig {
            sigma: 1.0,
            eta: 1e-6,
            days: MAX_RECOMMENDED_DAYS,
            realizations: 100,
            seed: 42,
            interbank: true,
            securities_market: true,
            trust_effect: true,
            trust_fraction: 0.2,
            ratios: RatioToggles::default(),
        }
    }
}

impl SimConfig {
    /// Both markets closed: banks can only absorb shocks with cash.
    pub fn no_markets() -> SimConfig {
        SimConfig {
            interbank: false,
            securities_market: false,
            trust_effect: false,
            ..SimConfig::default()
        }
    }

    pub fn with_sigma(&self, sigma: f64) -> SimConfig {
        SimConfig {
            sigma,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", "must be finite and >= 0"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta", "must be finite and >= 0"));
        }
        if self.days == 0 {
            return Err(invalid("days", "must be at least 1"));
        }
        if self.realizations == 0 {
            return Err(invalid("realizations", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.trust_fraction) {
            return Err(invalid("trust-fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Canonical, filesystem-safe identifier of everything except sigma.
    /// Sweeps vary sigma, so this names a curve.
    pub fn template_fingerprint(&self) -> String {
        let mut ratios = String::from("rl");
        if self.ratios.leverage {
            ratios.push_str("+lev");
        }
        if self.ratios.car {
            ratios.push_str("+car");
        }
        if self.ratios.large_exposure {
            ratios.push_str("+le");
        }
        format!(
            "ib{}-sec{}-trust{}-tf{}-eta{:e}-{}-T{}-R{}-seed{}",
            u8::from(self.interbank),
            u8::from(self.securities_market),
            u8::from(self.trust_effect),
            self.trust_fraction,
            self.eta,
            ratios,
            self.days,
            self.realizations,
            self.seed
        )
    }

    /// Canonical identifier of the full configuration.
    pub fn fingerprint(&self) -> String {
        format!("sigma{}-{}", self.sigma, self.template_fingerprint())
    }

    /// The effective configuration as `key = value` pairs, in file syntax.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("sigma", self.sigma.to_string()),
            ("eta", format!("{:e}", self.eta)),
            ("days", self.days.to_string()),
            ("realizations", self.realizations.to_string()),
            ("seed", self.seed.to_string()),
            ("no-interbank", (!self.interbank).to_string()),
            ("no-securities", (!self.securities_market).to_string()),
            ("trust", self.trust_effect.to_string()),
            ("trust-fraction", self.trust_fraction.to_string()),
            ("ratios", self.ratios.to_string()),
        ]
    }

    /// Applies one `key = value` setting using the CLI flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "sigma" => self.sigma = parse_num(key, value)?,
            "eta" => self.eta = parse_num(key, value)?,
            "days" => self.days = parse_num(key, value)?,
            "realizations" => self.realizations = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "no-interbank" => self.interbank = !parse_bool(key, value)?,
            "no-securities" => self.securities_market = !parse_bool(key, value)?,
            "trust" => self.trust_effect = parse_bool(key, value)?,
            "no-trust" => self.trust_effect = !parse_bool(key, value)?,
            "trust-fraction" => self.trust_fraction = parse_num(key, value)?,
            "ratios" => self.ratios = RatioToggles::parse(value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| invalid(key, format!("`{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(invalid(key, format!("`{value}` is not a boolean"))),
    }
}

/// Keys accepted in a config file besides the simulation settings.
const PATH_KEYS: [&str; 2] = ["banks", "out"];
const SIM_KEYS: [&str; 11] = [
    "sigma",
    "eta",
    "days",
    "realizations",
    "seed",
    "no-interbank",
    "no-securities",
    "trust",
    "no-trust",
    "trust-fraction",
    "ratios",
];

/// Parses `key = value` lines. Blank lines and lines starting with `#` are
/// ignored; a repeated key keeps its last value.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(ConfigError::Syntax { line: i + 1 })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        if !SIM_KEYS.contains(&key) && !PATH_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        entries.insert(key.to_string(), value.trim().to_string());
    }
    Ok(entries)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config_text(&text)
}

/// Applies the simulation keys of a parsed file on top of `base`.
pub fn apply_entries(
    base: &mut SimConfig,
    entries: &BTreeMap<String, String>,
) -> Result<(), ConfigError> {
    for (key, value) in entries {
        if SIM_KEYS.contains(&key.as_str()) {
            base.set(key, value)?;
        }
    }
    Ok(())
}
