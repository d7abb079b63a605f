//! Built-in tools and the wrapper that serves validated scripts.

use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use isoscope_codegen::{CodeRecord, SCRIPT_FILE_NAME};
use isoscope_core::analysis::{compute_histogram, extract_slice, summary_stats, threshold_filter, Histogram, DEFAULT_HISTOGRAM_BINS};
use isoscope_core::metrics::{histogram_modes, HistogramMode, DEFAULT_PROMINENCE_FRACTION};
use isoscope_core::render::{
    render_histogram_image, render_isosurface, render_slice_image, CameraAngle, Colormap, ImageBuffer, DEFAULT_RENDER_SIZE,
    HISTOGRAM_FILE_NAME,
};
use isoscope_core::{Axis, VolumeDataset};
use isoscope_knowledge::DEFAULT_TOP_K;
use isoscope_llm::Role;
use serde_json::{Map, Value};

use crate::tool::{Artifact, ArtifactKind, FieldSpec, Tool, ToolEnv, ToolKind, ToolOutput, ToolRegistry, ToolSpec, DYNAMIC_TOOL_PREFIX};
use crate::AgentError;

fn bad_input(msg: impl Into<String>) -> AgentError {
    AgentError::BadToolInput(msg.into())
}

fn str_field<'a>(input: &'a Map<String, Value>, name: &str) -> Option<&'a str> {
    input.get(name).and_then(Value::as_str).map(str::trim).filter(|s| !s.is_empty())
}

fn req_str<'a>(input: &'a Map<String, Value>, name: &str) -> Result<&'a str, AgentError> {
    str_field(input, name).ok_or_else(|| bad_input(format!("missing field {name:?}")))
}

/// Numbers may arrive as JSON numbers or as numeric strings.
fn num_field(input: &Map<String, Value>, name: &str) -> Result<Option<f64>, AgentError> {
    match input.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => Ok(n.as_f64()),
        Some(Value::String(s)) if s.trim().is_empty() => Ok(None),
        Some(Value::String(s)) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| bad_input(format!("field {name:?} is not a number: {s:?}"))),
        Some(other) => Err(bad_input(format!("field {name:?} is not a number: {other}"))),
    }
}

fn index_field(input: &Map<String, Value>, name: &str) -> Result<Option<usize>, AgentError> {
    match num_field(input, name)? {
        None => Ok(None),
        Some(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e12 => Ok(Some(v as usize)),
        Some(v) => Err(bad_input(format!("field {name:?} must be a non-negative integer, got {v}"))),
    }
}

/// Short human form of a scalar: integers without a fraction, others with
/// up to six significant digits.
pub fn format_scalar(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Rejects absolute paths and `..` so tool output stays in the session dir.
fn session_relative(name: &str) -> Result<PathBuf, AgentError> {
    let p = Path::new(name);
    if p.as_os_str().is_empty() || p.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
        return Err(bad_input(format!("file {name:?} must be a plain path inside the session directory")));
    }
    Ok(p.to_path_buf())
}

fn save_image(env: &ToolEnv<'_>, img: &ImageBuffer, name: &str) -> Result<Artifact, AgentError> {
    std::fs::create_dir_all(env.session_dir)?;
    img.save_png(env.session_dir.join(name))
        .map_err(|e| AgentError::Tool(e.to_string()))?;
    Ok(Artifact {
        kind: ArtifactKind::Image,
        path: name.to_string(),
    })
}

fn spec(name: &str, description: &str, fields: Vec<FieldSpec>) -> ToolSpec {
    ToolSpec {
        name: name.into(),
        description: description.into(),
        input_schema: fields,
        kind: ToolKind::Preexisting,
    }
}

fn dataset_field() -> FieldSpec {
    FieldSpec::required("dataset", "string", "catalog name or path, e.g. all_data/headsq.vti")
}

fn volume_context(vol: &VolumeDataset) -> String {
    let [nx, ny, nz] = vol.dims();
    let (lo, hi) = vol.scalar_range();
    format!(
        "Image data with dimensions {nx}x{ny}x{nz}, spacing {:?}, origin {:?}, point scalar field {:?} ranging from {} to {}.",
        vol.spacing(),
        vol.origin(),
        vol.field_name(),
        format_scalar(lo),
        format_scalar(hi)
    )
}

pub struct SimulationInfo(ToolSpec);

impl Default for SimulationInfo {
    fn default() -> Self {
        Self(spec(
            "SimulationInfo",
            "Lists the available datasets with their paths and notes, or describes one dataset (dimensions, scalar range, statistics) when a dataset is given.",
            vec![FieldSpec::optional("dataset", "string", "dataset to describe; omit to list all")],
        ))
    }
}

impl Tool for SimulationInfo {
    fn spec(&self) -> &ToolSpec {
        &self.0
    }

    fn call(&self, env: &ToolEnv<'_>, input: &Map<String, Value>) -> Result<ToolOutput, AgentError> {
        let Some(key) = str_field(input, "dataset") else {
            return Ok(ToolOutput::text(env.services.catalog.read().unwrap().summary()));
        };
        let (path, vol) = env.services.dataset(key)?;
        let s = summary_stats(&vol);
        Ok(ToolOutput::text(format!(
            "{path}: {} Mean {}, median {}, standard deviation {}.",
            volume_context(&vol),
            format_scalar(s.mean),
            format_scalar(s.median),
            format_scalar(s.stddev)
        )))
    }
}

pub struct VisualizeSlice(ToolSpec);

impl Default for VisualizeSlice {
    fn default() -> Self {
        Self(spec(
            "VisualizeSlice",
            "Extracts a 2D slice of a dataset along the x, y or z axis and saves it as a PNG image. The index defaults to the middle of the axis.",
            vec![
                dataset_field(),
                FieldSpec::optional("axis", "string", "x, y or z (default z)"),
                FieldSpec::optional("index", "integer", "slice index along the axis"),
                FieldSpec::optional("colormap", "string", "gray, viridis or coolwarm"),
            ],
        ))
    }
}

impl Tool for VisualizeSlice {
    fn spec(&self) -> &ToolSpec {
        &self.0
    }

    fn call(&self, env: &ToolEnv<'_>, input: &Map<String, Value>) -> Result<ToolOutput, AgentError> {
        let (path, vol) = env.services.dataset(req_str(input, "dataset")?)?;
        let axis_name = str_field(input, "axis").unwrap_or("z");
        let axis = Axis::parse(axis_name).ok_or_else(|| bad_input(format!("unknown axis {axis_name:?}")))?;
        let slice = extract_slice(&vol, axis, index_field(input, "index")?).map_err(|e| AgentError::Tool(e.to_string()))?;
        let cmap = Colormap::from_name(str_field(input, "colormap").unwrap_or("gray"));
        let name = slice.file_name();
        let artifact = save_image(env, &render_slice_image(&slice, cmap), &name)?;
        Ok(ToolOutput {
            observation: format!(
                "Slice of {path} along the {axis}-axis at index {} ({}x{} pixels) saved as \"{name}\".",
                slice.index, slice.width, slice.height
            ),
            artifacts: vec![artifact],
            code_record_id: None,
        })
    }
}

/// The value a mode stands for: the single most frequent exact value in its
/// bin when that value holds more than half the bin, else the bin center.
pub fn mode_value(vol: &VolumeDataset, hist: &Histogram, mode: &HistogramMode) -> f64 {
    let last = mode.bin_index + 1 == hist.bins();
    let in_bin = |v: f64| mode.bin_lo <= v && (v < mode.bin_hi || (last && v <= mode.bin_hi));
    let mut vals: Vec<f64> = vol.scalars().iter().copied().filter(|&v| in_bin(v)).collect();
    vals.sort_by(f64::total_cmp);
    let (mut best, mut best_n) = (mode.bin_center, 0usize);
    let mut i = 0;
    while i < vals.len() {
        let j = vals[i..].iter().position(|&v| v != vals[i]).map_or(vals.len(), |k| i + k);
        if j - i > best_n {
            best = vals[i];
            best_n = j - i;
        }
        i = j;
    }
    if 2 * best_n > vals.len() {
        best
    } else {
        mode.bin_center
    }
}

/// "1 mode at a scalar value of 0", "2 modes at scalar values of 0 and 95".
pub fn describe_modes(values: &[f64]) -> String {
    let v: Vec<String> = values.iter().map(|&x| format_scalar(x)).collect();
    match v.len() {
        0 => "no modes".into(),
        1 => format!("1 mode at a scalar value of {}", v[0]),
        n => format!("{n} modes at scalar values of {} and {}", v[..n - 1].join(", "), v[n - 1]),
    }
}

pub struct VisualizeHistogram(ToolSpec);

impl Default for VisualizeHistogram {
    fn default() -> Self {
        Self(spec(
            "VisualizeHistogram",
            "Plots the histogram of a dataset's scalar values, saves it as histogram_plot.png and reports the histogram modes.",
            vec![dataset_field(), FieldSpec::optional("bins", "integer", "number of bins (default 64)")],
        ))
    }
}

impl Tool for VisualizeHistogram {
    fn spec(&self) -> &ToolSpec {
        &self.0
    }

    fn call(&self, env: &ToolEnv<'_>, input: &Map<String, Value>) -> Result<ToolOutput, AgentError> {
        let (path, vol) = env.services.dataset(req_str(input, "dataset")?)?;
        let bins = index_field(input, "bins")?.unwrap_or(DEFAULT_HISTOGRAM_BINS);
        let hist = compute_histogram(&vol, bins).map_err(|e| AgentError::Tool(e.to_string()))?;
        let modes: Vec<f64> = histogram_modes(&hist, DEFAULT_PROMINENCE_FRACTION)
            .iter()
            .map(|m| mode_value(&vol, &hist, m))
            .collect();
        let artifact = save_image(env, &render_histogram_image(&hist), HISTOGRAM_FILE_NAME)?;
        Ok(ToolOutput {
            observation: format!(
                "Histogram of {path} ({bins} bins) saved as \"{HISTOGRAM_FILE_NAME}\". The histogram has {}.",
                describe_modes(&modes)
            ),
            artifacts: vec![artifact],
            code_record_id: None,
        })
    }
}

pub struct AnalyzeRuns(ToolSpec);

impl Default for AnalyzeRuns {
    fn default() -> Self {
        Self(spec(
            "AnalyzeRuns",
            "Summary statistics (min, max, mean, standard deviation) of every dataset in the catalog, for comparing runs.",
            vec![],
        ))
    }
}

impl Tool for AnalyzeRuns {
    fn spec(&self) -> &ToolSpec {
        &self.0
    }

    fn call(&self, env: &ToolEnv<'_>, _input: &Map<String, Value>) -> Result<ToolOutput, AgentError> {
        let entries = env.services.catalog.read().unwrap().entries.clone();
        let mut lines = Vec::new();
        for e in entries {
            match env.services.volumes.get(&e.resolved_path) {
                Ok(vol) => {
                    let s = summary_stats(&vol);
                    lines.push(format!(
                        "{}: min {}, max {}, mean {}, std {}",
                        e.name,
                        format_scalar(s.min),
                        format_scalar(s.max),
                        format_scalar(s.mean),
                        format_scalar(s.stddev)
                    ));
                }
                Err(err) => lines.push(format!("{}: unreadable ({err})", e.name)),
            }
        }
        if lines.is_empty() {
            return Ok(ToolOutput::text("No datasets in the catalog."));
        }
        Ok(ToolOutput::text(lines.join("\n")))
    }
}

pub struct FilterRuns(ToolSpec);

impl Default for FilterRuns {
    fn default() -> Self {
        Self(spec(
            "FilterRuns",
            "Finds the datasets with voxels whose scalar value lies in [lo, hi] and reports the matching fraction per dataset.",
            vec![
                FieldSpec::required("lo", "number", "lower bound"),
                FieldSpec::required("hi", "number", "upper bound"),
                FieldSpec::optional("dataset", "string", "restrict to one dataset"),
            ],
        ))
    }
}

impl Tool for FilterRuns {
    fn spec(&self) -> &ToolSpec {
        &self.0
    }

    fn call(&self, env: &ToolEnv<'_>, input: &Map<String, Value>) -> Result<ToolOutput, AgentError> {
        let lo = num_field(input, "lo")?.ok_or_else(|| bad_input("missing field \"lo\""))?;
        let hi = num_field(input, "hi")?.ok_or_else(|| bad_input("missing field \"hi\""))?;
        let entries = env.services.catalog.read().unwrap().entries.clone();
        let only = str_field(input, "dataset")
            .map(|k| env.services.catalog.read().unwrap().find(k).map(|e| e.name.clone()))
            .map(|found| found.ok_or_else(|| AgentError::Tool("unknown dataset".into())))
            .transpose()?;
        let mut matched = Vec::new();
        for e in entries.iter().filter(|e| only.as_ref().is_none_or(|n| *n == e.name)) {
            let Ok(vol) = env.services.volumes.get(&e.resolved_path) else {
                continue;
            };
            let sel = threshold_filter(&vol, lo, hi).map_err(|e| bad_input(e.to_string()))?;
            if sel.selected_count > 0 {
                matched.push(format!(
                    "{}: {} voxels ({:.2}%)",
                    e.name,
                    sel.selected_count,
                    100.0 * sel.fraction
                ));
            }
        }
        let range = format!("[{}, {}]", format_scalar(lo), format_scalar(hi));
        if matched.is_empty() {
            return Ok(ToolOutput::text(format!("No dataset has values in {range}.")));
        }
        Ok(ToolOutput::text(format!(
            "{} dataset(s) with values in {range}:\n{}",
            matched.len(),
            matched.join("\n")
        )))
    }
}

pub struct CodeGenerator(ToolSpec);

impl Default for CodeGenerator {
    fn default() -> Self {
        Self(spec(
            "CodeGenerator",
            "Writes a Python visualization script (e.g. volume rendering, isosurface, slice) for a dataset and saves it as generated_code.py. Reuses a validated script when the same request was made before.",
            vec![
                FieldSpec::required("request", "string", "what the visualization must show"),
                dataset_field(),
            ],
        ))
    }
}

fn code_artifact(env: &ToolEnv<'_>, rel: &Path, code: &str) -> Result<Artifact, AgentError> {
    let full = env.session_dir.join(rel);
    if let Some(dir) = full.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&full, code)?;
    Ok(Artifact {
        kind: ArtifactKind::Code,
        path: rel.to_string_lossy().into_owned(),
    })
}

fn validation_note(env: &ToolEnv<'_>, rec: &CodeRecord) -> String {
    if !env.services.validate_inline || rec.state.is_servable() {
        return String::new();
    }
    let Ok(pipeline) = env.services.codegen() else {
        return String::new();
    };
    match pipeline.validate_and_fix(rec.id) {
        Ok(r) => format!(" Validation finished with state {} after {} fix iteration(s).", r.state as u8, r.iterations_used),
        Err(e) => format!(" Validation deferred: {e}."),
    }
}

impl Tool for CodeGenerator {
    fn spec(&self) -> &ToolSpec {
        &self.0
    }

    fn call(&self, env: &ToolEnv<'_>, input: &Map<String, Value>) -> Result<ToolOutput, AgentError> {
        let pipeline = env.services.codegen()?;
        let request = req_str(input, "request")?;
        let key = req_str(input, "dataset")?;
        let (path, context) = match env.services.dataset(key) {
            Ok((path, vol)) => (path, Some(volume_context(&vol))),
            Err(_) => (key.to_string(), None),
        };
        let out = pipeline.generate_or_cached(request, &path, context.as_deref())?;
        let artifact = code_artifact(env, Path::new(SCRIPT_FILE_NAME), &out.record.code)?;
        let origin = if out.cached {
            format!("Reused validated code (record #{})", out.record.id)
        } else {
            format!("Code generated (record #{})", out.record.id)
        };
        Ok(ToolOutput {
            observation: format!(
                "{origin} and written to {SCRIPT_FILE_NAME}.{}",
                validation_note(env, &out.record)
            ),
            artifacts: vec![artifact],
            code_record_id: Some(out.record.id),
        })
    }
}

pub struct ModifyGeneratedCode(ToolSpec);

impl Default for ModifyGeneratedCode {
    fn default() -> Self {
        Self(spec(
            "ModifyGeneratedCode",
            "Applies requested changes (colors, outline, camera, opacity, ...) to previously generated code instead of writing it from scratch. Reads and overwrites generated_code.py unless other files are named.",
            vec![
                FieldSpec::required("modifications", "string", "the changes to make"),
                FieldSpec::optional("code_file", "string", "script to modify"),
                FieldSpec::optional("output_file", "string", "where to write the result"),
            ],
        ))
    }
}

impl Tool for ModifyGeneratedCode {
    fn spec(&self) -> &ToolSpec {
        &self.0
    }

    fn call(&self, env: &ToolEnv<'_>, input: &Map<String, Value>) -> Result<ToolOutput, AgentError> {
        let pipeline = env.services.codegen()?;
        let mods = req_str(input, "modifications")?;
        let src = session_relative(str_field(input, "code_file").unwrap_or(SCRIPT_FILE_NAME))?;
        let dst = session_relative(str_field(input, "output_file").unwrap_or(SCRIPT_FILE_NAME))?;
        let rec = pipeline.modify_code(mods, &env.session_dir.join(&src), &env.session_dir.join(&dst))?;
        let parent = rec.parent_id.map_or(String::new(), |p| format!(", derived from record #{p}"));
        Ok(ToolOutput {
            observation: format!(
                "Code modified (record #{}{parent}) and written to {}.{}",
                rec.id,
                dst.display(),
                validation_note(env, &rec)
            ),
            artifacts: vec![Artifact {
                kind: ArtifactKind::Code,
                path: dst.to_string_lossy().into_owned(),
            }],
            code_record_id: Some(rec.id),
        })
    }
}

fn angle_field(input: &Map<String, Value>) -> Result<CameraAngle, AgentError> {
    let label = str_field(input, "angle").unwrap_or("angle_0");
    CameraAngle::canonical_by_label(label).ok_or_else(|| {
        let known: Vec<String> = CameraAngle::canonical().into_iter().map(|a| a.label).collect();
        bad_input(format!("unknown angle {label:?}; use one of {}", known.join(", ")))
    })
}

fn isosurface_name(vol: &VolumeDataset, iso: f64, angle: &CameraAngle) -> String {
    format!("isosurface_{}_{}_{}.png", vol.id(), format_scalar(iso), angle.label)
}

pub struct LookupFeatureInDataset(ToolSpec);

impl Default for LookupFeatureInDataset {
    fn default() -> Self {
        Self(spec(
            "LookupFeatureInDataset",
            "Finds the isovalue that best shows a named feature (e.g. skull, skin, brain) using the captioned isosurface knowledge base, and renders that isosurface.",
            vec![
                dataset_field(),
                FieldSpec::required("feature", "string", "feature to look for"),
                FieldSpec::optional("angle", "string", "camera angle angle_0 .. angle_5 (default angle_0)"),
            ],
        ))
    }
}

impl Tool for LookupFeatureInDataset {
    fn spec(&self) -> &ToolSpec {
        &self.0
    }

    fn call(&self, env: &ToolEnv<'_>, input: &Map<String, Value>) -> Result<ToolOutput, AgentError> {
        let index = env.services.features()?;
        let (_, vol) = env.services.dataset(req_str(input, "dataset")?)?;
        let feature = req_str(input, "feature")?;
        let angle = angle_field(input)?;
        index.register_volume(vol.clone());
        let res = index
            .query_feature(vol.id(), feature)
            .map_err(|e| AgentError::Tool(e.to_string()))?;
        let img = render_isosurface(&vol, res.chosen_isovalue, &angle, DEFAULT_RENDER_SIZE)
            .map_err(|e| AgentError::Tool(e.to_string()))?;
        let name = isosurface_name(&vol, res.chosen_isovalue, &angle);
        let artifact = save_image(env, &img, &name)?;
        Ok(ToolOutput {
            observation: format!(
                "The {feature} is best shown at isovalue {} ({} of {} candidate isovalues mention it). Rendering saved as \"{name}\".",
                format_scalar(res.chosen_isovalue),
                res.candidates.iter().filter(|c| c.match_count > 0).count(),
                res.candidates.len()
            ),
            artifacts: vec![artifact],
            code_record_id: None,
        })
    }
}

pub struct RenderIsosurface(ToolSpec);

impl Default for RenderIsosurface {
    fn default() -> Self {
        Self(spec(
            "RenderIsosurface",
            "Renders the isosurface of a dataset at a given isovalue from one of the canonical camera angles and saves the image.",
            vec![
                dataset_field(),
                FieldSpec::required("isovalue", "number", "scalar threshold"),
                FieldSpec::optional("angle", "string", "camera angle angle_0 .. angle_5 (default angle_0)"),
            ],
        ))
    }
}

impl Tool for RenderIsosurface {
    fn spec(&self) -> &ToolSpec {
        &self.0
    }

    fn call(&self, env: &ToolEnv<'_>, input: &Map<String, Value>) -> Result<ToolOutput, AgentError> {
        let (path, vol) = env.services.dataset(req_str(input, "dataset")?)?;
        let iso = num_field(input, "isovalue")?.ok_or_else(|| bad_input("missing field \"isovalue\""))?;
        let angle = angle_field(input)?;
        let img = render_isosurface(&vol, iso, &angle, DEFAULT_RENDER_SIZE).map_err(|e| AgentError::Tool(e.to_string()))?;
        let name = isosurface_name(&vol, iso, &angle);
        let lit = img.lit_fraction();
        let artifact = save_image(env, &img, &name)?;
        let note = if lit == 0.0 { " The surface is empty at this isovalue." } else { "" };
        Ok(ToolOutput {
            observation: format!(
                "Isosurface of {path} at {} seen from {} saved as \"{name}\".{note}",
                format_scalar(iso),
                angle.label
            ),
            artifacts: vec![artifact],
            code_record_id: None,
        })
    }
}

pub struct AskDocuments(ToolSpec);

impl Default for AskDocuments {
    fn default() -> Self {
        Self(spec(
            "AskDocuments",
            "Answers a question from the ingested documents (dataset descriptions, contest pages) and earlier conversations.",
            vec![FieldSpec::required("question", "string", "the question")],
        ))
    }
}

impl Tool for AskDocuments {
    fn spec(&self) -> &ToolSpec {
        &self.0
    }

    fn call(&self, env: &ToolEnv<'_>, input: &Map<String, Value>) -> Result<ToolOutput, AgentError> {
        let q = req_str(input, "question")?;
        let rag = env
            .services
            .rag
            .as_ref()
            .ok_or_else(|| AgentError::Tool("no documents are loaded".into()))?;
        let prompt = rag.augment_prompt(q, DEFAULT_TOP_K);
        let reply = env.services.gateway.complete(Role::Qa, &prompt)?;
        Ok(ToolOutput::text(reply.text.trim().to_string()))
    }
}

/// A validated ledger script offered to the agent as a tool. Each call runs
/// the script in a fresh sandbox directory; images it writes are copied
/// into the session directory.
pub struct DynamicCodeTool {
    spec: ToolSpec,
    record_id: i64,
    code: String,
}

impl DynamicCodeTool {
    pub fn new(rec: &CodeRecord) -> Self {
        let what = rec.prompt.lines().next().unwrap_or("").trim();
        let on = if rec.dataset_path.is_empty() {
            String::new()
        } else {
            format!(" on {}", rec.dataset_path)
        };
        Self {
            spec: ToolSpec {
                name: format!("{DYNAMIC_TOOL_PREFIX}{}", rec.id),
                description: format!("Runs the validated {} script{on}: {what}", rec.viz_type),
                input_schema: vec![],
                kind: ToolKind::Dynamic,
            },
            record_id: rec.id,
            code: rec.code.clone(),
        }
    }

    pub fn record_id(&self) -> i64 {
        self.record_id
    }
}

impl Tool for DynamicCodeTool {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn call(&self, env: &ToolEnv<'_>, _input: &Map<String, Value>) -> Result<ToolOutput, AgentError> {
        let pipeline = env.services.codegen()?;
        let res = pipeline.sandbox().execute(&self.code)?;
        let mut artifacts = Vec::new();
        for rel in &res.artifacts {
            let is_png = rel.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
            let Some(file) = rel.file_name().filter(|_| is_png) else {
                continue;
            };
            let name = format!("{}_{}", self.spec.name, file.to_string_lossy());
            std::fs::create_dir_all(env.session_dir)?;
            std::fs::copy(res.run_dir.join(rel), env.session_dir.join(&name))?;
            artifacts.push(Artifact {
                kind: ArtifactKind::Image,
                path: name,
            });
        }
        let status = if res.succeeded() {
            "finished".to_string()
        } else {
            format!("failed with exit code {}", res.exit_code)
        };
        let mut obs = format!("Script #{} {status}.", self.record_id);
        if !artifacts.is_empty() {
            let names: Vec<&str> = artifacts.iter().map(|a| a.path.as_str()).collect();
            obs.push_str(&format!(" Images: {}.", names.join(", ")));
        }
        let tail = if res.succeeded() { &res.stdout } else { &res.stderr };
        let tail = tail.trim();
        if !tail.is_empty() {
            let start = tail.char_indices().rev().nth(499).map_or(0, |(i, _)| i);
            obs.push_str(&format!("\n{}", &tail[start..]));
        }
        Ok(ToolOutput {
            observation: obs,
            artifacts,
            code_record_id: Some(self.record_id),
        })
    }
}

/// The six tools named in the original system description.
pub fn core_tools() -> Vec<Arc<dyn Tool>> {
    vec![
        Arc::new(FilterRuns::default()),
        Arc::new(VisualizeHistogram::default()),
        Arc::new(SimulationInfo::default()),
        Arc::new(CodeGenerator::default()),
        Arc::new(ModifyGeneratedCode::default()),
        Arc::new(LookupFeatureInDataset::default()),
    ]
}

/// Core tools plus slicing, isosurface rendering, run statistics and
/// document questions.
pub fn builtin_tools() -> Vec<Arc<dyn Tool>> {
    let mut tools = core_tools();
    tools.push(Arc::new(VisualizeSlice::default()));
    tools.push(Arc::new(RenderIsosurface::default()));
    tools.push(Arc::new(AnalyzeRuns::default()));
    tools.push(Arc::new(AskDocuments::default()));
    tools
}

pub fn default_registry() -> ToolRegistry {
    let reg = ToolRegistry::new();
    for t in builtin_tools() {
        reg.register(t).expect("built-in tool names are unique");
    }
    reg
}
