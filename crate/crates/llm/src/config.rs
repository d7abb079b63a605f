use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Orchestration,
    CodeGeneration,
    CodeModification,
    Qa,
    Judge,
    Vision,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Orchestration,
        Role::CodeGeneration,
        Role::CodeModification,
        Role::Qa,
        Role::Judge,
        Role::Vision,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Orchestration => "orchestration",
            Role::CodeGeneration => "code_generation",
            Role::CodeModification => "code_modification",
            Role::Qa => "qa",
            Role::Judge => "judge",
            Role::Vision => "vision",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| LlmError::BadConfig(format!("unknown role {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleConfig {
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
}

fn default_max_tokens() -> u32 {
    4096
}

impl RoleConfig {
    pub fn defaults_for(role: Role) -> Self {
        let (model, temperature) = match role {
            Role::Orchestration | Role::Qa | Role::Judge => ("gpt-4o", 0.0),
            Role::CodeGeneration => ("o3-mini", 1.0),
            Role::CodeModification => ("gpt-4o-mini", 0.0),
            Role::Vision => ("llama-3.2-11b-vision", 0.0),
        };
        Self {
            model_id: model.to_string(),
            temperature,
            max_tokens: default_max_tokens(),
            endpoint_url: None,
            api_key_env: None,
        }
    }

    fn validate(&self, role: Role) -> Result<(), LlmError> {
        if self.model_id.trim().is_empty() {
            return Err(LlmError::BadConfig(format!("{role}: empty model_id")));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(LlmError::BadConfig(format!("{role}: temperature must be >= 0")));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::BadConfig(format!("{role}: max_tokens must be positive")));
        }
        Ok(())
    }
}

/// Per-role model bindings. Roles missing from a config file keep their
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GatewayConfig {
    roles: BTreeMap<Role, RoleConfig>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            roles: Role::ALL
                .into_iter()
                .map(|r| (r, RoleConfig::defaults_for(r)))
                .collect(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    roles: BTreeMap<String, RoleConfig>,
}

impl GatewayConfig {
    /// Parses a TOML document of the form `[roles.<name>] model_id = ...`.
    pub fn from_toml_str(text: &str) -> Result<Self, LlmError> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| LlmError::BadConfig(e.to_string()))?;
        let mut cfg = Self::default();
        for (name, rc) in file.roles {
            let role: Role = name.parse()?;
            rc.validate(role)?;
            cfg.roles.insert(role, rc);
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::BadConfig(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn role(&self, role: Role) -> &RoleConfig {
        &self.roles[&role]
    }

    pub fn set_role(&mut self, role: Role, cfg: RoleConfig) -> Result<(), LlmError> {
        cfg.validate(role)?;
        self.roles.insert(role, cfg);
        Ok(())
    }
}
