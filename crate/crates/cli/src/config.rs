//! Run configuration files and `key=value` overrides.
//!
//! A config is a TOML file with a `[planner]` table holding any
//! `PlannerConfig` field and a `[backend]` table:
//!
//! ```toml
//! [planner]
//! w_s = 0.5
//! k = 10
//! binding = "scored"
//!
//! [backend]
//! kind = "stub"
//! ```

use std::path::Path;

use groundplan::lm::GatewayConfig;
use groundplan::PlannerConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub planner: PlannerConfig,
    pub backend: GatewayConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path, e))?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| CliError::input(path, e))?;
        config.planner.validate().map_err(|e| CliError::input(path, e))?;
        Ok(config)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }
}

/// Parses a TOML scalar, falling back to a bare string so that
/// `binding=random_same_name` works without quotes.
pub fn parse_value(raw: &str) -> serde_json::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut table) => serde_json::to_value(table.remove("v")).unwrap_or(serde_json::Value::Null),
        Err(_) => serde_json::Value::String(raw.to_string()),
    }
}

/// Sets one planner field by name.
pub fn set_field(config: &PlannerConfig, key: &str, value: serde_json::Value) -> Result<PlannerConfig, CliError> {
    let mut tree = serde_json::to_value(config).map_err(|e| CliError::Invariant(e.to_string()))?;
    let fields = tree.as_object_mut().ok_or_else(|| CliError::Invariant("planner config is not a table".into()))?;
    if !fields.contains_key(key) {
        return Err(CliError::Usage(format!("unknown planner field {key:?}")));
    }
    fields.insert(key.to_string(), value);
    let out: PlannerConfig = serde_json::from_value(tree).map_err(|e| CliError::Usage(format!("{key}: {e}")))?;
    out.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(out)
}

/// Applies `key=value` overrides in order.
pub fn apply_overrides(config: &PlannerConfig, overrides: &[String]) -> Result<PlannerConfig, CliError> {
    let mut out = config.clone();
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("override {item:?} is not key=value")))?;
        out = set_field(&out, key.trim(), parse_value(raw.trim()))?;
    }
    Ok(out)
}
