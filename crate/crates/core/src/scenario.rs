//! Scenario files: a base design plus optional parameter sweeps, expanded
//! into a deterministic list of scenarios.
//!
//! ```toml
//! name = "futility"
//!
//! [base]
//! interim_fraction = 0.5
//! entry_probability_per_month = 0.2
//! initial_arms = 3
//!
//! [[sweep]]
//! key = "futility_boundary"
//! values = ["none", 0.5, 0.4, 0.3]
//!
//! [[sweep]]
//! key = "effect_distribution"
//! values = ["equal", "pessimistic"]
//! ```
//!
//! Sweeps expand as a cross product; the first declared sweep varies
//! slowest. The string `"none"` clears an optional field.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::ScenarioConfig;

const OPTIONAL_KEYS: [&str; 3] = ["interim_fraction", "futility_boundary", "time_trend"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioGrid {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub base: ScenarioConfig,
    #[serde(default, rename = "sweep", skip_serializing_if = "Vec::is_empty")]
    pub sweeps: Vec<Sweep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub index: usize,
    /// Directory-safe identifier, `s000`, `s001`, ...
    pub id: String,
    /// Swept `(key, value)` pairs in declared order.
    pub params: Vec<(String, String)>,
    pub config: ScenarioConfig,
}

impl Scenario {
    pub fn label(&self) -> String {
        if self.params.is_empty() {
            "base".to_string()
        } else {
            self.params
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(",")
        }
    }
}

fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn located(e: toml::de::Error) -> ConfigError {
    // toml reports the line, column and offending key in its message
    ConfigError::Parse(e.to_string().trim_end().to_string())
}

impl ScenarioGrid {
    pub fn single(base: ScenarioConfig) -> Self {
        ScenarioGrid {
            name: None,
            base,
            sweeps: Vec::new(),
        }
    }

    pub fn scenario_count(&self) -> usize {
        self.sweeps.iter().map(|s| s.values.len()).product()
    }

    fn apply(&self, choice: &[usize]) -> Result<ScenarioConfig, ConfigError> {
        let mut table = toml::Table::try_from(&self.base)
            .map_err(|e| ConfigError::Parse(format!("cannot serialize base: {e}")))?;
        for (sweep, &i) in self.sweeps.iter().zip(choice) {
            let value = &sweep.values[i];
            if value.as_str() == Some("none") {
                table.remove(&sweep.key);
            } else {
                table.insert(sweep.key.clone(), value.clone());
            }
        }
        let cfg: ScenarioConfig = table.try_into().map_err(|e: toml::de::Error| {
            let keys: Vec<&str> = self.sweeps.iter().map(|s| s.key.as_str()).collect();
            ConfigError::invalid(
                keys.join(","),
                format!("sweep value rejected: {}", e.message()),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn check_sweeps(&self) -> Result<(), ConfigError> {
        for (i, sweep) in self.sweeps.iter().enumerate() {
            if sweep.values.is_empty() {
                return Err(ConfigError::invalid(&sweep.key, "sweep has no values"));
            }
            if self.sweeps[..i].iter().any(|s| s.key == sweep.key) {
                return Err(ConfigError::invalid(&sweep.key, "swept more than once"));
            }
            let clears = sweep.values.iter().any(|v| v.as_str() == Some("none"));
            if clears && !OPTIONAL_KEYS.contains(&sweep.key.as_str()) {
                return Err(ConfigError::invalid(
                    &sweep.key,
                    "\"none\" is only allowed for optional fields",
                ));
            }
        }
        Ok(())
    }

    /// All scenarios in expansion order, each validated.
    pub fn expand(&self) -> Result<Vec<Scenario>, ConfigError> {
        self.check_sweeps()?;
        let total = self.scenario_count();
        let mut out = Vec::with_capacity(total);
        let mut choice = vec![0usize; self.sweeps.len()];
        for index in 0..total {
            // mixed-radix counter, last sweep fastest
            let mut rem = index;
            for (slot, sweep) in choice.iter_mut().zip(&self.sweeps).rev() {
                *slot = rem % sweep.values.len();
                rem /= sweep.values.len();
            }
            let config = self.apply(&choice)?;
            let params = self
                .sweeps
                .iter()
                .zip(&choice)
                .map(|(s, &i)| (s.key.clone(), value_label(&s.values[i])))
                .collect();
            out.push(Scenario {
                index,
                id: format!("s{index:03}"),
                params,
                config,
            });
        }
        Ok(out)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

/// Parses and fully validates a scenario file.
pub fn parse_config(bytes: &[u8]) -> Result<ScenarioGrid, ConfigError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| ConfigError::Parse(format!("scenario file is not UTF-8: {e}")))?;
    let grid: ScenarioGrid = toml::from_str(text).map_err(located)?;
    grid.expand()?;
    Ok(grid)
}
