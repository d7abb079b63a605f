//! Generation benchmark: executability and specification checks over
//! repeated runs of one prompt.

use std::time::Instant;

use isoscope_codegen::{CodegenError, CodegenPipeline};
use isoscope_llm::{Gateway, Role};
use serde::{Deserialize, Serialize};
use statrs::statistics::Statistics;

use crate::ServiceError;

pub const DEFAULT_BENCH_RUNS: usize = 5;

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchTask {
    /// Short task label, e.g. "vtk volume rendering (headsq.vti)".
    pub task: String,
    pub prompt: String,
    pub dataset: String,
    /// Follow-up change applied to the generated script; enables the
    /// modification step.
    #[serde(default)]
    pub modification: Option<String>,
    #[serde(default = "yes")]
    pub code_gen: bool,
    /// Labels for the report; default to the configured model ids.
    #[serde(default)]
    pub llm: Option<String>,
    #[serde(default)]
    pub agent_model: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    /// Validation reached state 1 or 3.
    pub executable: bool,
    /// The judge accepted the script as meeting the prompt.
    pub meets_spec: bool,
    pub seconds: f64,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.executable && self.meets_spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub llm: String,
    pub code_gen: bool,
    pub code_mod: bool,
    pub agent_model: String,
    pub task: String,
    pub prompt: String,
    pub validity: f64,
    pub time_avg_s: f64,
    /// Sample standard deviation (n - 1).
    pub time_std_s: f64,
    pub n_runs: usize,
}

impl BenchRow {
    /// Aggregates per-run outcomes. With one run the std is 0.
    pub fn from_runs(llm: &str, agent_model: &str, task: &BenchTask, runs: &[RunOutcome]) -> Self {
        let n = runs.len();
        let times: Vec<f64> = runs.iter().map(|r| r.seconds).collect();
        let (avg, std) = match n {
            0 => (0.0, 0.0),
            1 => (times[0], 0.0),
            _ => (times.iter().mean(), times.iter().std_dev()),
        };
        Self {
            llm: llm.to_string(),
            code_gen: task.code_gen,
            code_mod: task.modification.is_some(),
            agent_model: agent_model.to_string(),
            task: task.task.clone(),
            prompt: task.prompt.clone(),
            validity: if n == 0 {
                0.0
            } else {
                runs.iter().filter(|r| r.passed()).count() as f64 / n as f64
            },
            time_avg_s: avg,
            time_std_s: std,
            n_runs: n,
        }
    }
}

fn spec_prompt(task: &BenchTask, code: &str) -> String {
    let mods = task
        .modification
        .as_deref()
        .map_or(String::new(), |m| format!("\nRequested changes: {m}"));
    format!(
        "Decide whether this script fully implements the request. Reply VALID or INVALID as the first word, \
then one sentence of reasons.\nRequest: {}\nDataset: {}{mods}\n\n```python\n{code}\n```",
        task.prompt, task.dataset
    )
}

fn one_run(pipeline: &CodegenPipeline, gateway: &Gateway, task: &BenchTask) -> Result<(bool, bool), CodegenError> {
    let mut rec = pipeline.generate_code(&task.prompt, &task.dataset, None)?;
    if let Some(m) = &task.modification {
        let src = pipeline.default_script_path();
        rec = pipeline.modify_code(m, &src, &src)?;
    }
    let done = pipeline.validate_and_fix(rec.id)?;
    if !done.state.is_servable() {
        return Ok((false, false));
    }
    let reply = gateway.complete(Role::Judge, &spec_prompt(task, &done.code))?.text;
    let ok = reply
        .split_whitespace()
        .next()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .is_some_and(|w| w.eq_ignore_ascii_case("valid"));
    Ok((true, ok))
}

/// Runs the task `n_runs` times with fresh generations (no cache). A run
/// that fails for any reason other than an unavailable backend counts as
/// invalid; an unavailable backend aborts the benchmark.
pub fn run_benchmark(
    pipeline: &CodegenPipeline,
    gateway: &Gateway,
    task: &BenchTask,
    n_runs: usize,
) -> Result<BenchRow, ServiceError> {
    if n_runs == 0 {
        return Err(ServiceError::BadRequest("n_runs must be >= 1".into()));
    }
    let mut runs = Vec::with_capacity(n_runs);
    for i in 0..n_runs {
        let start = Instant::now();
        let (executable, meets_spec) = match one_run(pipeline, gateway, task) {
            Ok(r) => r,
            Err(e) if e.is_backend_unavailable() => return Err(ServiceError::BackendUnavailable(e.to_string())),
            Err(e) => {
                log::info!("bench run {i} failed: {e}");
                (false, false)
            }
        };
        runs.push(RunOutcome {
            executable,
            meets_spec,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    let llm = task
        .llm
        .clone()
        .unwrap_or_else(|| gateway.route(Role::CodeGeneration).model_id.clone());
    let agent = task
        .agent_model
        .clone()
        .unwrap_or_else(|| gateway.route(Role::Orchestration).model_id.clone());
    Ok(BenchRow::from_runs(&llm, &agent, task, &runs))
}
