use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use isoscope_llm::{Gateway, LlmError, Role};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::ledger::{CodeLedger, CodeRecord, CodeState, NewRecord};
use crate::sandbox::{ExecutionResult, Sandbox, SCRIPT_FILE_NAME};
use crate::CodegenError;

pub const DEFAULT_REQUIREMENTS: [&str; 2] = [
    "Generate valid Python code that uses the VTK library to visualize data.",
    "The module must define a function named update_vtk_scene(renderer) that takes a VTK renderer as input and updates it.",
];
pub const OVERRIDE_PREAMBLE: &str = "Must Implement these functionalities, overriding the defaults: ";
pub const DEFAULT_MAX_FIX_ITERATIONS: u32 = 3;

/// Keyword rule for the ledger's visualization type.
pub fn infer_viz_type(text: &str) -> &'static str {
    let t = text.to_lowercase();
    if ["isosurface", "iso-surface", "isovalue", "contour", "marching cubes"]
        .iter()
        .any(|k| t.contains(k))
    {
        "isosurface"
    } else if t.contains("volume") {
        "volume"
    } else if t.contains("slice") {
        "slice"
    } else {
        "other"
    }
}

/// Body of the first fenced block, preferring one tagged python.
pub fn extract_code_block(reply: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?s)```([A-Za-z0-9_+-]*)[ \t]*\r?\n(.*?)```").unwrap());
    let blocks: Vec<(String, String)> = re
        .captures_iter(reply)
        .map(|c| (c[1].to_lowercase(), c[2].to_string()))
        .collect();
    blocks
        .iter()
        .find(|(lang, _)| lang == "python" || lang == "py")
        .or_else(|| blocks.first())
        .map(|(_, body)| body.clone())
        .filter(|b| !b.trim().is_empty())
}

pub fn generation_prompt(user_spec: &str, dataset_path: &str, dataset_context: Option<&str>) -> String {
    let mut p = DEFAULT_REQUIREMENTS.join("\n");
    p.push('\n');
    if !user_spec.trim().is_empty() {
        p.push_str(OVERRIDE_PREAMBLE);
        p.push_str(user_spec.trim());
        p.push('\n');
    }
    p.push_str(&format!("Dataset path: {dataset_path}\n"));
    if let Some(ctx) = dataset_context {
        p.push_str(&format!("Dataset details: {ctx}\n"));
    }
    p.push_str("Return the complete script in a single ```python code block.");
    p
}

fn modification_prompt(modifications: &str, code: &str) -> String {
    format!(
        "Here is an existing visualization script:\n```python\n{code}```\n\
         Apply only this change and keep everything else as is: {modifications}\n\
         Keep the function update_vtk_scene(renderer) with the same signature.\n\
         Return the complete updated script in a single ```python code block."
    )
}

fn validation_prompt(spec: &str, code: &str, run: &ExecutionResult) -> String {
    format!(
        "Check whether this script (a) runs cleanly and (b) implements the user specification.\n\
         User specification: {spec}\n```python\n{code}```\nExit code: {}\nstdout:\n{}\nstderr:\n{}\n\
         Answer VALID or INVALID on the first line, then give a short reason.",
        run.exit_code, run.stdout, run.stderr
    )
}

fn fix_prompt(spec: &str, code: &str, problem: &str) -> String {
    format!(
        "The script below failed validation.\nUser specification: {spec}\n```python\n{code}```\n\
         Problem:\n{problem}\n\
         Fix the script. Keep the function update_vtk_scene(renderer).\n\
         Return the complete corrected script in a single ```python code block."
    )
}

/// First word VALID passes; anything else (including INVALID) fails.
fn judged_valid(reply: &str) -> bool {
    reply
        .split(|c: char| !c.is_ascii_alphabetic())
        .find(|w| !w.is_empty())
        .is_some_and(|w| w.eq_ignore_ascii_case("valid"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingSummary {
    pub checked: usize,
    pub promoted: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCode {
    pub record: CodeRecord,
    pub cached: bool,
    pub script_path: PathBuf,
}

pub struct CodegenPipeline {
    ledger: Arc<CodeLedger>,
    gateway: Gateway,
    sandbox: Arc<Sandbox>,
    work_dir: PathBuf,
    max_fix_iterations: u32,
}

impl CodegenPipeline {
    pub fn new(
        ledger: Arc<CodeLedger>,
        gateway: Gateway,
        sandbox: Arc<Sandbox>,
        work_dir: impl Into<PathBuf>,
    ) -> Result<Self, CodegenError> {
        let work_dir = work_dir.into();
        std::fs::create_dir_all(&work_dir)?;
        Ok(Self {
            ledger,
            gateway,
            sandbox,
            work_dir,
            max_fix_iterations: DEFAULT_MAX_FIX_ITERATIONS,
        })
    }

    pub fn with_max_fix_iterations(mut self, n: u32) -> Self {
        self.max_fix_iterations = n;
        self
    }

    /// Same ledger and sandbox, different gateway (e.g. a per-session replay).
    pub fn with_gateway(&self, gateway: Gateway) -> Self {
        Self {
            ledger: self.ledger.clone(),
            gateway,
            sandbox: self.sandbox.clone(),
            work_dir: self.work_dir.clone(),
            max_fix_iterations: self.max_fix_iterations,
        }
    }

    pub fn ledger(&self) -> &Arc<CodeLedger> {
        &self.ledger
    }

    pub fn sandbox(&self) -> &Arc<Sandbox> {
        &self.sandbox
    }

    pub fn work_dir(&self) -> &Path {
        &self.work_dir
    }

    pub fn default_script_path(&self) -> PathBuf {
        self.work_dir.join(SCRIPT_FILE_NAME)
    }

    pub fn lookup_cached(&self, prompt: &str, dataset_path: &str) -> Result<Option<CodeRecord>, CodegenError> {
        self.ledger.lookup_cached(prompt, dataset_path)
    }

    /// Asks the code-generation role for a new script and logs it at state 0.
    pub fn generate_code(
        &self,
        user_spec: &str,
        dataset_path: &str,
        dataset_context: Option<&str>,
    ) -> Result<CodeRecord, CodegenError> {
        let prompt = generation_prompt(user_spec, dataset_path, dataset_context);
        let reply = self.gateway.complete(Role::CodeGeneration, &prompt)?.text;
        let code = extract_code_block(&reply).ok_or(CodegenError::NoCodeBlockInResponse)?;
        let rec = self.ledger.insert(NewRecord {
            prompt: user_spec,
            dataset_path,
            code: &code,
            viz_type: infer_viz_type(user_spec),
            parent_id: None,
        })?;
        std::fs::write(self.default_script_path(), &rec.code)?;
        Ok(rec)
    }

    /// Cache first: a validated record for the same request is reused with
    /// no backend call.
    pub fn generate_or_cached(
        &self,
        user_spec: &str,
        dataset_path: &str,
        dataset_context: Option<&str>,
    ) -> Result<GeneratedCode, CodegenError> {
        let script_path = self.default_script_path();
        if let Some(rec) = self.lookup_cached(user_spec, dataset_path)? {
            std::fs::write(&script_path, &rec.code)?;
            return Ok(GeneratedCode {
                record: rec,
                cached: true,
                script_path,
            });
        }
        let rec = self.generate_code(user_spec, dataset_path, dataset_context)?;
        Ok(GeneratedCode {
            record: rec,
            cached: false,
            script_path,
        })
    }

    /// Incremental change to an existing script. The new record links to the
    /// ledger entry whose code matches the source file, when there is one.
    pub fn modify_code(
        &self,
        modifications: &str,
        code_file: &Path,
        output_file: &Path,
    ) -> Result<CodeRecord, CodegenError> {
        if modifications.trim().is_empty() {
            return Err(CodegenError::EmptyModification);
        }
        let code = std::fs::read_to_string(code_file)
            .map_err(|_| CodegenError::MissingSourceFile(code_file.to_path_buf()))?;
        let parent = self.ledger.find_by_code(&code)?;
        let reply = self
            .gateway
            .complete(Role::CodeModification, &modification_prompt(modifications, &code))?
            .text;
        let new_code = extract_code_block(&reply).ok_or(CodegenError::NoCodeBlockInResponse)?;
        let viz_type = match &parent {
            Some(p) => p.viz_type.clone(),
            None => infer_viz_type(&format!("{modifications}\n{code}")).to_string(),
        };
        let rec = self.ledger.insert(NewRecord {
            prompt: modifications,
            dataset_path: parent.as_ref().map_or("", |p| p.dataset_path.as_str()),
            code: &new_code,
            viz_type: &viz_type,
            parent_id: parent.as_ref().map(|p| p.id),
        })?;
        if let Some(dir) = output_file.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(output_file, &rec.code)?;
        Ok(rec)
    }

    /// Execute, judge, and repair up to `max_fix_iterations` times. The
    /// judge only sees runs that exited cleanly. Nothing is written to the
    /// ledger unless a final state is reached, so a backend failure leaves
    /// the record at state 0.
    pub fn validate_and_fix(&self, id: i64) -> Result<CodeRecord, CodegenError> {
        if !self.ledger.claim(id) {
            return Err(CodegenError::RecordBusy(id));
        }
        let out = self.validate_claimed(id);
        self.ledger.release(id);
        out
    }

    fn validate_claimed(&self, id: i64) -> Result<CodeRecord, CodegenError> {
        let rec = self.ledger.get(id)?;
        if rec.state != CodeState::NotValidated {
            return Err(CodegenError::NotPending { id, state: rec.state });
        }
        let spec = rec.prompt.clone();
        let mut code = rec.code.clone();
        let mut iterations = 0u32;
        loop {
            let (problem, stdout, stderr) = match self.sandbox.execute(&code) {
                Ok(run) if run.succeeded() => {
                    let verdict = self
                        .gateway
                        .complete(Role::CodeGeneration, &validation_prompt(&spec, &code, &run))?
                        .text;
                    if judged_valid(&verdict) {
                        let state = if iterations == 0 {
                            CodeState::Clean
                        } else {
                            CodeState::ErrorsFixed
                        };
                        return self.ledger.finalize(id, &code, state, iterations, &run.stdout, &run.stderr);
                    }
                    (format!("judge: {}", verdict.trim()), run.stdout, run.stderr)
                }
                Ok(run) => (
                    format!("exit code {}\n{}", run.exit_code, run.stderr),
                    run.stdout,
                    run.stderr,
                ),
                Err(CodegenError::ScanBlocked(v)) => {
                    let msg = format!("blocked by security scan: {}", v.summary());
                    (msg.clone(), String::new(), msg)
                }
                Err(e) => return Err(e),
            };
            if iterations >= self.max_fix_iterations {
                return self
                    .ledger
                    .finalize(id, &code, CodeState::ErrorsUnfixed, iterations, &stdout, &stderr);
            }
            let reply = self
                .gateway
                .complete(Role::CodeGeneration, &fix_prompt(&spec, &code, &problem))?
                .text;
            iterations += 1;
            // a reply without code counts as a failed attempt on the same code
            if let Some(fixed) = extract_code_block(&reply) {
                code = fixed;
            }
        }
    }

    /// Runs `validate_and_fix` over the state-0 backlog, oldest first.
    /// Individual failures are logged and counted; the batch continues.
    pub fn validate_pending(&self) -> Result<PendingSummary, CodegenError> {
        let mut s = PendingSummary::default();
        for rec in self.ledger.pending()? {
            if self.ledger.is_claimed(rec.id) {
                continue;
            }
            s.checked += 1;
            match self.validate_and_fix(rec.id) {
                Ok(r) if r.state.is_servable() => s.promoted += 1,
                Ok(_) => s.failed += 1,
                Err(e) => {
                    log::warn!("validation of record {} did not finish: {e}", rec.id);
                    s.failed += 1;
                }
            }
        }
        Ok(s)
    }
}

impl From<LlmError> for CodegenError {
    fn from(e: LlmError) -> Self {
        CodegenError::Llm(e)
    }
}
