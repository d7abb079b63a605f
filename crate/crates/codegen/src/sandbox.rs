//! Child-process execution confined to a fresh directory per run.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::scan::security_scan;
use crate::CodegenError;

pub const SCRIPT_FILE_NAME: &str = "generated_code.py";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
pub const TIMEOUT_EXIT_CODE: i32 = 124;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
    pub wall_time_ms: f64,
    /// Files created by the run, relative to `run_dir`.
    pub artifacts: Vec<PathBuf>,
    pub run_dir: PathBuf,
    pub timed_out: bool,
}

impl ExecutionResult {
    pub fn succeeded(&self) -> bool {
        self.exit_code == 0 && !self.timed_out
    }
}

#[derive(Debug, Clone)]
pub struct SandboxConfig {
    pub root: PathBuf,
    /// Program and leading arguments; the script path is appended.
    pub interpreter: Vec<String>,
    pub timeout: Duration,
}

impl SandboxConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            interpreter: vec!["python3".into(), "-I".into(), "-B".into()],
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

#[derive(Debug)]
pub struct Sandbox {
    config: SandboxConfig,
    runs: AtomicU64,
}

/// Finds `program` on the parent's PATH so the child can run with an empty
/// environment.
fn resolve_program(program: &str) -> PathBuf {
    let p = Path::new(program);
    if p.components().count() > 1 {
        return p.to_path_buf();
    }
    std::env::var_os("PATH")
        .and_then(|paths| {
            std::env::split_paths(&paths)
                .map(|d| d.join(program))
                .find(|c| c.is_file())
        })
        .unwrap_or_else(|| p.to_path_buf())
}

fn list_files(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) {
    let Ok(rd) = std::fs::read_dir(dir) else {
        return;
    };
    let mut entries: Vec<_> = rd.flatten().collect();
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        match e.file_type() {
            Ok(t) if t.is_dir() => list_files(&path, base, out),
            Ok(_) => {
                if let Ok(rel) = path.strip_prefix(base) {
                    out.push(rel.to_path_buf());
                }
            }
            Err(_) => {}
        }
    }
}

fn drain<R: Read + Send + 'static>(r: Option<R>) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut r) = r {
            let _ = r.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

impl Sandbox {
    pub fn new(config: SandboxConfig) -> Result<Self, CodegenError> {
        std::fs::create_dir_all(&config.root)?;
        let root = config.root.canonicalize()?;
        Ok(Self {
            config: SandboxConfig { root, ..config },
            runs: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.config.root
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    /// Number of processes started so far.
    pub fn run_count(&self) -> u64 {
        self.runs.load(Ordering::SeqCst)
    }

    fn fresh_dir(&self) -> Result<PathBuf, CodegenError> {
        loop {
            let n = self.runs.fetch_add(1, Ordering::SeqCst);
            let dir = self.config.root.join(format!("run_{n:05}"));
            match std::fs::create_dir(&dir) {
                Ok(()) => return Ok(dir),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Scans, then runs `code` as `generated_code.py` inside a new run
    /// directory with a cleared environment. A run past the timeout is killed
    /// and reported with `timed_out` set and exit code 124.
    pub fn execute(&self, code: &str) -> Result<ExecutionResult, CodegenError> {
        let verdict = security_scan(code);
        if !verdict.allowed {
            return Err(CodegenError::ScanBlocked(verdict));
        }
        let dir = self.fresh_dir()?;
        let script = dir.join(SCRIPT_FILE_NAME);
        std::fs::write(&script, code)?;

        let (program, args) = self
            .config
            .interpreter
            .split_first()
            .ok_or_else(|| CodegenError::Sandbox("empty interpreter command".into()))?;
        let start = Instant::now();
        let mut child = Command::new(resolve_program(program))
            .args(args)
            .arg(SCRIPT_FILE_NAME)
            .current_dir(&dir)
            .env_clear()
            .env("PATH", "/usr/local/bin:/usr/bin:/bin")
            .env("HOME", &dir)
            .env("TMPDIR", &dir)
            .env("MPLBACKEND", "Agg")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| CodegenError::Sandbox(format!("failed to start {program}: {e}")))?;
        let out = drain(child.stdout.take());
        let err = drain(child.stderr.take());

        let mut timed_out = false;
        let status = loop {
            if let Some(s) = child.try_wait()? {
                break Some(s);
            }
            if start.elapsed() >= self.config.timeout {
                let _ = child.kill();
                let _ = child.wait();
                timed_out = true;
                break None;
            }
            std::thread::sleep(Duration::from_millis(10));
        };
        let wall_time_ms = start.elapsed().as_secs_f64() * 1000.0;
        let stdout = out.join().unwrap_or_default();
        let mut stderr = err.join().unwrap_or_default();
        let exit_code = match status {
            Some(s) => s.code().unwrap_or(-1),
            None => {
                stderr.push_str(&format!(
                    "\n[sandbox] killed after timeout of {:.1} s\n",
                    self.config.timeout.as_secs_f64()
                ));
                TIMEOUT_EXIT_CODE
            }
        };

        let mut artifacts = Vec::new();
        list_files(&dir, &dir, &mut artifacts);
        artifacts.retain(|p| p != Path::new(SCRIPT_FILE_NAME));
        Ok(ExecutionResult {
            exit_code,
            stdout,
            stderr,
            wall_time_ms,
            artifacts,
            run_dir: dir,
            timed_out,
        })
    }
}
