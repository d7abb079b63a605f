//! Tool interface, shared services and the registry.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use isoscope_codegen::{CodeRecord, CodegenPipeline};
use isoscope_core::catalog::DatasetCatalog;
use isoscope_core::io::load_volume;
use isoscope_core::VolumeDataset;
use isoscope_knowledge::{FeatureIndex, RagStore};
use isoscope_llm::Gateway;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolKind {
    Preexisting,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    /// `string`, `integer`, `number` or `boolean`.
    pub ty: String,
    pub required: bool,
    pub description: String,
}

impl FieldSpec {
    pub fn required(name: &str, ty: &str, description: &str) -> Self {
        Self {
            name: name.into(),
            ty: ty.into(),
            required: true,
            description: description.into(),
        }
    }

    pub fn optional(name: &str, ty: &str, description: &str) -> Self {
        Self {
            required: false,
            ..Self::required(name, ty, description)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub input_schema: Vec<FieldSpec>,
    pub kind: ToolKind,
}

impl ToolSpec {
    /// One menu line: name, description and input fields.
    pub fn menu_line(&self) -> String {
        let fields: Vec<String> = self
            .input_schema
            .iter()
            .map(|f| format!("{}{}: {}", f.name, if f.required { "" } else { "?" }, f.ty))
            .collect();
        format!("{}: {} Input: {{{}}}", self.name, self.description, fields.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Image,
    Code,
}

/// A file produced by a tool, relative to the session directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub kind: ArtifactKind,
    pub path: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ToolOutput {
    pub observation: String,
    pub artifacts: Vec<Artifact>,
    pub code_record_id: Option<i64>,
}

impl ToolOutput {
    pub fn text(observation: impl Into<String>) -> Self {
        Self {
            observation: observation.into(),
            ..Default::default()
        }
    }
}

/// Loads catalog volumes on first use and keeps them.
#[derive(Default)]
pub struct VolumeCache {
    loaded: RwLock<HashMap<PathBuf, Arc<VolumeDataset>>>,
}

impl VolumeCache {
    pub fn get(&self, path: &Path) -> Result<Arc<VolumeDataset>, AgentError> {
        if let Some(v) = self.loaded.read().unwrap().get(path) {
            return Ok(v.clone());
        }
        let vol = Arc::new(load_volume(path).map_err(|e| AgentError::Tool(e.to_string()))?);
        self.loaded.write().unwrap().insert(path.to_path_buf(), vol.clone());
        Ok(vol)
    }
}

/// Everything tools may touch. Shared by all sessions.
pub struct Services {
    pub catalog: Arc<RwLock<DatasetCatalog>>,
    pub volumes: VolumeCache,
    pub gateway: Gateway,
    pub codegen: Option<Arc<CodegenPipeline>>,
    pub features: Option<Arc<FeatureIndex>>,
    pub rag: Option<Arc<RagStore>>,
    /// Run validate-and-fix right after generation instead of leaving the
    /// record for the background pass.
    pub validate_inline: bool,
}

impl Services {
    pub fn new(catalog: DatasetCatalog, gateway: Gateway) -> Self {
        Self {
            catalog: Arc::new(RwLock::new(catalog)),
            volumes: VolumeCache::default(),
            gateway,
            codegen: None,
            features: None,
            rag: None,
            validate_inline: false,
        }
    }

    /// Catalog name or listed path of a dataset, plus its loaded volume.
    pub fn dataset(&self, key: &str) -> Result<(String, Arc<VolumeDataset>), AgentError> {
        let entry = self
            .catalog
            .read()
            .unwrap()
            .find(key)
            .cloned()
            .ok_or_else(|| AgentError::Tool(format!("unknown dataset {key:?}; ask SimulationInfo for the list")))?;
        let vol = self.volumes.get(&entry.resolved_path)?;
        Ok((entry.path, vol))
    }

    pub fn codegen(&self) -> Result<&Arc<CodegenPipeline>, AgentError> {
        self.codegen
            .as_ref()
            .ok_or_else(|| AgentError::Tool("code generation is not configured".into()))
    }

    pub fn features(&self) -> Result<&Arc<FeatureIndex>, AgentError> {
        self.features
            .as_ref()
            .ok_or_else(|| AgentError::Tool("the feature index is not configured".into()))
    }
}

pub struct ToolEnv<'a> {
    pub services: &'a Services,
    pub session_dir: &'a Path,
}

pub trait Tool: Send + Sync {
    fn spec(&self) -> &ToolSpec;
    fn call(&self, env: &ToolEnv<'_>, input: &Map<String, Value>) -> Result<ToolOutput, AgentError>;
}

/// Makes an object out of whatever the model put after `Action Input:`. A
/// bare value is bound to the first schema field.
pub fn normalize_input(spec: &ToolSpec, input: &Value) -> Map<String, Value> {
    match input {
        Value::Object(m) => m.clone(),
        Value::Null => Map::new(),
        Value::String(s) if s.trim().is_empty() => Map::new(),
        other => {
            let mut m = Map::new();
            let key = spec
                .input_schema
                .first()
                .map_or_else(|| "input".to_string(), |f| f.name.clone());
            m.insert(key, other.clone());
            m
        }
    }
}

fn tool_key(name: &str) -> String {
    name.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

pub const DYNAMIC_TOOL_PREFIX: &str = "dyn_code_";

/// Named tools in registration order. Lookups accept the exact name or
/// the name with spacing, underscores and case ignored.
#[derive(Default)]
pub struct ToolRegistry {
    tools: RwLock<Vec<Arc<dyn Tool>>>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, tool: Arc<dyn Tool>) -> Result<(), AgentError> {
        let spec = tool.spec();
        if spec.name.trim().is_empty() || spec.description.trim().is_empty() {
            return Err(AgentError::InvalidToolSpec(spec.name.clone()));
        }
        let mut tools = self.tools.write().unwrap();
        let key = tool_key(&spec.name);
        if tools.iter().any(|t| t.spec().name == spec.name || tool_key(&t.spec().name) == key) {
            return Err(AgentError::DuplicateToolName(spec.name.clone()));
        }
        tools.push(tool);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn Tool>> {
        let tools = self.tools.read().unwrap();
        let name = name.trim().trim_matches(|c| c == '`' || c == '"' || c == '\'');
        tools
            .iter()
            .find(|t| t.spec().name == name)
            .or_else(|| {
                let key = tool_key(name);
                tools.iter().find(|t| tool_key(&t.spec().name) == key)
            })
            .cloned()
    }

    pub fn specs(&self) -> Vec<ToolSpec> {
        self.tools.read().unwrap().iter().map(|t| t.spec().clone()).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.tools.read().unwrap().iter().map(|t| t.spec().name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.tools.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a validated ledger record as `dyn_code_<id>`.
    pub fn promote(&self, record: &CodeRecord) -> Result<String, AgentError> {
        if !record.state.is_servable() {
            return Err(AgentError::NotPromotable {
                id: record.id,
                state: record.state as u8,
            });
        }
        let tool = crate::tools::DynamicCodeTool::new(record);
        let name = tool.spec().name.clone();
        self.register(Arc::new(tool))?;
        Ok(name)
    }

    /// Promotes every servable record not yet registered. Returns the new
    /// tool names.
    pub fn promote_all(&self, records: &[CodeRecord]) -> Vec<String> {
        records
            .iter()
            .filter(|r| r.state.is_servable())
            .filter(|r| self.get(&format!("{DYNAMIC_TOOL_PREFIX}{}", r.id)).is_none())
            .filter_map(|r| self.promote(r).ok())
            .collect()
    }
}
