//! Hardware configuration files (TOML). The `backend` key selects which
//! parameter tables must be present.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analog::{AnalogCostModel, CrossbarConfig};
use crate::digital::{DigitalEnergyTable, SystolicConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case", deny_unknown_fields)]
pub enum HardwareConfig {
    Digital {
        systolic: SystolicConfig,
        energy: DigitalEnergyTable,
    },
    Analog {
        crossbar: CrossbarConfig,
        cost: AnalogCostModel,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Digital,
    Analog,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "digital" => Ok(Backend::Digital),
            "analog" => Ok(Backend::Analog),
            other => Err(Error::InvalidArgument(format!(
                "unknown backend '{other}' (expected digital or analog)"
            ))),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Digital => "digital",
            Backend::Analog => "analog",
        })
    }
}

impl HardwareConfig {
    pub fn default_for(backend: Backend) -> Self {
        match backend {
            Backend::Digital => HardwareConfig::Digital {
                systolic: SystolicConfig::default(),
                energy: DigitalEnergyTable::default(),
            },
            Backend::Analog => HardwareConfig::Analog {
                crossbar: CrossbarConfig::default(),
                cost: AnalogCostModel::default(),
            },
        }
    }

    pub fn backend(&self) -> Backend {
        match self {
            HardwareConfig::Digital { .. } => Backend::Digital,
            HardwareConfig::Analog { .. } => Backend::Analog,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HardwareConfig::Digital { systolic, energy } => {
                systolic.validate()?;
                energy.validate()
            }
            HardwareConfig::Analog { crossbar, cost } => {
                crossbar.validate()?;
                cost.validate()
            }
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: HardwareConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

pub fn load_hardware_config(path: impl AsRef<Path>) -> Result<HardwareConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    HardwareConfig::from_toml(&text).map_err(|e| match e {
        Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIGITAL: &str = include_str!("../../../../configs/digital_default.toml");
    const ANALOG: &str = include_str!("../../../../configs/analog_default.toml");

    #[test]
    fn shipped_files_parse() {
        assert_eq!(HardwareConfig::from_toml(DIGITAL).unwrap(), HardwareConfig::default_for(Backend::Digital));
        assert_eq!(HardwareConfig::from_toml(ANALOG).unwrap(), HardwareConfig::default_for(Backend::Analog));
    }

    #[test]
    fn roundtrips_through_toml() {
        for b in [Backend::Digital, Backend::Analog] {
            let c = HardwareConfig::default_for(b);
            assert_eq!(HardwareConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        }
    }

    #[test]
    fn missing_key_is_named() {
        let text = DIGITAL.replace("e_ac_pj = 0.03", "");
        let err = HardwareConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("e_ac_pj"), "{err}");
    }

    #[test]
    fn wrong_tables_for_backend() {
        let text = ANALOG.replace("backend = \"analog\"", "backend = \"digital\"");
        assert!(matches!(HardwareConfig::from_toml(&text), Err(Error::InvalidConfig(_))));
        let text = DIGITAL.replace("backend = \"digital\"", "backend = \"optical\"");
        assert!(HardwareConfig::from_toml(&text).is_err());
    }

    #[test]
    fn negative_cost_rejected() {
        let text = DIGITAL.replace("e_ac_pj = 0.03", "e_ac_pj = -0.03");
        let err = HardwareConfig::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("e_ac_pj"), "{err}");
    }
}
