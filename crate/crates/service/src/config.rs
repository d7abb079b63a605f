//! Service configuration file.

use std::path::{Path, PathBuf};

use isoscope_llm::{FeatureBand, GatewayConfig};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("var")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxSection {
    /// Interpreter and leading arguments; the script path is appended.
    pub interpreter: Option<Vec<String>>,
    pub timeout_s: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerSection {
    /// Seconds between background validation passes; 0 turns it off.
    #[serde(default)]
    pub validate_interval_s: u64,
    /// Seconds between self-improvement rounds over swept datasets; 0 is off.
    #[serde(default)]
    pub self_improve_interval_s: u64,
    #[serde(default = "default_growth")]
    pub self_improve_growth: f64,
}

fn default_growth() -> f64 {
    isoscope_knowledge::DEFAULT_GROWTH_FACTOR
}

impl Default for SchedulerSection {
    fn default() -> Self {
        Self {
            validate_interval_s: 0,
            self_improve_interval_s: 0,
            self_improve_growth: default_growth(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionerKind {
    /// Send frames to the vision role.
    #[default]
    Vision,
    /// Built-in template captioner driven by feature bands.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSpec {
    pub term: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionerSection {
    #[serde(default)]
    pub kind: CaptionerKind,
    #[serde(default)]
    pub bands: Vec<BandSpec>,
}

impl CaptionerSection {
    pub fn feature_bands(&self) -> Vec<FeatureBand> {
        self.bands.iter().map(|b| FeatureBand::new(b.term.clone(), b.lo, b.hi)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSection {
    /// External renderer command; the built-in raycaster is used when unset.
    pub external_command: Option<Vec<String>>,
    pub sweep_size: Option<[usize; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub max_steps: Option<usize>,
    pub memory_window: Option<usize>,
    /// Index answered chat turns for retrieval. Off unless set.
    #[serde(default)]
    pub index_turns: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_data_dir")]
    pub data_dir: PathBuf,
    pub catalog: Option<PathBuf>,
    pub docs_dir: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
    /// Name of an environment variable holding the bearer token. No token,
    /// no auth.
    pub api_token_env: Option<String>,
    #[serde(default)]
    pub validate_inline: bool,
    /// Role table in the gateway file format (`[gateway.roles.qa]`).
    pub gateway: Option<toml::Table>,
    #[serde(default)]
    pub sandbox: SandboxSection,
    #[serde(default)]
    pub scheduler: SchedulerSection,
    #[serde(default)]
    pub captioner: CaptionerSection,
    #[serde(default)]
    pub render: RenderSection,
    #[serde(default)]
    pub agent: AgentSection,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config is valid")
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p.as_mut().filter(|p| p.is_relative()) {
        *path = base.join(&*path);
    }
}

impl ServiceConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ServiceError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ServiceError::BadConfig(e.to_string()))?;
        cfg.gateway_config()?;
        if !(cfg.scheduler.self_improve_growth > 1.0) {
            return Err(ServiceError::BadConfig("scheduler.self_improve_growth must be > 1".into()));
        }
        Ok(cfg)
    }

    /// Loads a file; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::BadConfig(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.data_dir.is_relative() {
            cfg.data_dir = base.join(&cfg.data_dir);
        }
        rebase(base, &mut cfg.catalog);
        rebase(base, &mut cfg.docs_dir);
        rebase(base, &mut cfg.synonyms);
        Ok(cfg)
    }

    pub fn gateway_config(&self) -> Result<GatewayConfig, ServiceError> {
        match &self.gateway {
            None => Ok(GatewayConfig::default()),
            Some(t) => {
                let text = toml::to_string(t).map_err(|e| ServiceError::BadConfig(e.to_string()))?;
                GatewayConfig::from_toml_str(&text).map_err(|e| ServiceError::BadConfig(e.to_string()))
            }
        }
    }

    pub fn api_token(&self) -> Option<String> {
        self.api_token_env
            .as_ref()
            .and_then(|v| std::env::var(v).ok())
            .filter(|t| !t.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use isoscope_llm::Role;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ServiceConfig::from_toml_str("").unwrap();
        assert_eq!(c.bind, "127.0.0.1:8080");
        assert_eq!(c.scheduler.validate_interval_s, 0);
        assert_eq!(c.captioner.kind, CaptionerKind::Vision);
        assert_eq!(c.gateway_config().unwrap(), GatewayConfig::default());
    }

    #[test]
    fn nested_gateway_roles() {
        let c = ServiceConfig::from_toml_str(
            "catalog = \"cat.tsv\"\n[gateway.roles.qa]\nmodel_id = \"local\"\n[captioner]\nkind = \"synthetic\"\nbands = [{ term = \"skull\", lo = 0.3, hi = 0.45 }]\n",
        )
        .unwrap();
        assert_eq!(c.gateway_config().unwrap().role(Role::Qa).model_id, "local");
        assert_eq!(c.captioner.feature_bands().len(), 1);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_roles() {
        assert!(ServiceConfig::from_toml_str("colour = 1").is_err());
        assert!(ServiceConfig::from_toml_str("[gateway.roles.poet]\nmodel_id = \"x\"").is_err());
        assert!(ServiceConfig::from_toml_str("[scheduler]\nself_improve_growth = 1.0").is_err());
    }

    #[test]
    fn paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("viz.toml");
        std::fs::write(&p, "catalog = \"data/catalog.tsv\"\n").unwrap();
        let c = ServiceConfig::load(&p).unwrap();
        assert_eq!(c.catalog.unwrap(), dir.path().join("data/catalog.tsv"));
        assert_eq!(c.data_dir, dir.path().join("var"));
    }
}
