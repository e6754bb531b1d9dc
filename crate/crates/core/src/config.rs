//! TOML configuration files: core configurations, cost tables and sweep
//! specifications. See `docs/config.md`.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bespoke::{ComponentCostTable, RomCellCost};
use crate::eval::{EvalSettings, Profile};
use crate::isa::Precision;
use crate::machine::{CoreConfig, CostModel};
use crate::mlcodegen::Variant;

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: String,
        source: toml::de::Error,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigFileError> {
    let shown = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io {
        path: shown.clone(),
        source,
    })?;
    toml::from_str(&text).map_err(|source| ConfigFileError::Toml {
        path: shown,
        source,
    })
}

/// Parses a core configuration from TOML text.
pub fn parse_core_config(text: &str) -> Result<CoreConfig, ConfigFileError> {
    let config: CoreConfig = toml::from_str(text).map_err(|source| ConfigFileError::Toml {
        path: "<input>".into(),
        source,
    })?;
    check_core(config, "<input>")
}

fn check_core(config: CoreConfig, path: &str) -> Result<CoreConfig, ConfigFileError> {
    let invalid = |message: String| ConfigFileError::Invalid {
        path: path.to_string(),
        message,
    };
    config.isa.check().map_err(|e| invalid(e.to_string()))?;
    config.costs.check().map_err(invalid)?;
    Ok(config)
}

pub fn load_core_config(path: &Path) -> Result<CoreConfig, ConfigFileError> {
    let config: CoreConfig = load(path)?;
    check_core(config, &path.display().to_string())
}

pub fn core_config_to_toml(config: &CoreConfig) -> String {
    toml::to_string(config).expect("core configurations always serialize")
}

pub fn load_cost_table(path: &Path) -> Result<ComponentCostTable, ConfigFileError> {
    let table: ComponentCostTable = load(path)?;
    table.check().map_err(|message| ConfigFileError::Invalid {
        path: path.display().to_string(),
        message,
    })?;
    Ok(table)
}

/// The experiment matrix of a report run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub precisions: Vec<Precision>,
    pub variants: Vec<Variant>,
    pub profiles: Vec<Profile>,
    pub max_cycles: u64,
    pub costs: CostModel,
    pub rom_cell: RomCellCost,
    pub components: ComponentCostTable,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let settings = EvalSettings::default();
        SweepSpec {
            precisions: Precision::ALL.to_vec(),
            variants: Variant::ALL.to_vec(),
            profiles: Profile::ALL.to_vec(),
            max_cycles: settings.max_cycles,
            costs: settings.costs,
            rom_cell: settings.rom_cell,
            components: settings.components,
        }
    }
}

impl SweepSpec {
    pub fn settings(&self) -> EvalSettings {
        EvalSettings {
            costs: self.costs,
            rom_cell: self.rom_cell,
            components: self.components.clone(),
            max_cycles: self.max_cycles,
            ..EvalSettings::default()
        }
    }
}

pub fn load_sweep_spec(path: &Path) -> Result<SweepSpec, ConfigFileError> {
    let spec: SweepSpec = load(path)?;
    let invalid = |message: String| ConfigFileError::Invalid {
        path: path.display().to_string(),
        message,
    };
    spec.costs.check().map_err(invalid)?;
    spec.rom_cell.check().map_err(invalid)?;
    spec.components.check().map_err(invalid)?;
    Ok(spec)
}
