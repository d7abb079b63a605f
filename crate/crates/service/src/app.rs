//! Everything the HTTP layer and the CLI share.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use isoscope_agent::{
    default_registry, Agent, AgentConfig, AgentError, AgentTurn, ArtifactKind, Services, Session, SessionHandle,
    ToolRegistry, TraceEvent, PROVENANCE_FILE_NAME,
};
use isoscope_codegen::{CodeLedger, CodeRecord, CodegenPipeline, PendingSummary, Sandbox, SandboxConfig, LEDGER_FILE_NAME};
use isoscope_core::catalog::DatasetCatalog;
use isoscope_core::clock::SharedClock;
use isoscope_core::render::{CameraAngle, ExternalRenderer};
use isoscope_knowledge::{
    FeatureIndex, FeatureIndexConfig, FeatureQueryResult, KnowledgeBase, KnowledgeReport, RagStore, ScreenshotRecord,
    Synonyms, FEATURE_INDEX_FILE_NAME, RAG_INDEX_FILE_NAME,
};
use isoscope_llm::{CompletionBackend, Gateway, SyntheticCaptioner};
use serde::{Deserialize, Serialize};

use crate::bench::{run_benchmark, BenchRow, BenchTask};
use crate::config::{CaptionerKind, ServiceConfig};
use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: usize,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub file: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub session_id: String,
    pub turn: AgentTurn,
    pub images: Vec<ImageRef>,
    pub followup: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub name: String,
    pub path: String,
    pub notes: Option<String>,
    pub missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    #[serde(flatten)]
    pub summary: PendingSummary,
    pub new_tools: Vec<String>,
}

struct SessionEntry {
    handle: SessionHandle,
    trace: Mutex<Vec<TraceRecord>>,
}

pub struct App {
    config: ServiceConfig,
    services: Arc<Services>,
    registry: Arc<ToolRegistry>,
    agent: Agent,
    clock: SharedClock,
    sessions: RwLock<BTreeMap<String, Arc<SessionEntry>>>,
    images: RwLock<HashMap<String, PathBuf>>,
    next_session: AtomicU64,
}

pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn image_id(session: &str, file: &str) -> String {
    format!("{session}-{}", file.replace(['/', '\\'], "_"))
}

impl App {
    /// Wires every component from `config`. Completions go to `backend`.
    pub fn new(config: ServiceConfig, backend: Arc<dyn CompletionBackend>, clock: SharedClock) -> Result<Self, ServiceError> {
        let catalog_path = config
            .catalog
            .clone()
            .ok_or_else(|| ServiceError::BadConfig("no dataset catalog configured".into()))?;
        let catalog = DatasetCatalog::load(&catalog_path)
            .map_err(|e| ServiceError::BadConfig(format!("catalog {}: {e}", catalog_path.display())))?;
        let data = config.data_dir.clone();
        std::fs::create_dir_all(data.join("sessions"))?;

        let mut gateway = Gateway::new(config.gateway_config()?, backend);
        if config.captioner.kind == CaptionerKind::Synthetic {
            gateway = gateway.with_captioner(Arc::new(SyntheticCaptioner::new(config.captioner.feature_bands())));
        }

        let ledger = Arc::new(CodeLedger::open(data.join(LEDGER_FILE_NAME), clock.clone())?);
        let mut sb = SandboxConfig::new(data.join("sandbox"));
        if let Some(i) = config.sandbox.interpreter.clone().filter(|i| !i.is_empty()) {
            sb.interpreter = i;
        }
        if let Some(t) = config.sandbox.timeout_s {
            sb.timeout = Duration::from_secs(t);
        }
        let sandbox = Arc::new(Sandbox::new(sb)?);
        let pipeline = Arc::new(CodegenPipeline::new(ledger, gateway.clone(), sandbox, data.join("work"))?);

        let kb = Arc::new(KnowledgeBase::open(data.join(FEATURE_INDEX_FILE_NAME))?);
        let mut fcfg = FeatureIndexConfig::new(data.join("sweeps"));
        if let Some([w, h]) = config.render.sweep_size {
            fcfg.render_size = (w, h);
        }
        let mut features = FeatureIndex::new(kb, gateway.clone(), clock.clone(), fcfg)?;
        if let Some(p) = &config.synonyms {
            features = features.with_synonyms(Synonyms::load(p)?);
        }
        if let Some(cmd) = config.render.external_command.clone().filter(|c| !c.is_empty()) {
            features = features.with_renderer(Arc::new(ExternalRenderer::new(cmd)));
        }

        let rag_path = data.join(RAG_INDEX_FILE_NAME);
        let rag = if rag_path.exists() {
            RagStore::load(&rag_path)?
        } else {
            RagStore::new()
        };
        if let Some(dir) = &config.docs_dir {
            if !dir.is_dir() {
                return Err(ServiceError::BadConfig(format!("docs directory {} not found", dir.display())));
            }
            rag.ingest_dir(dir)?;
        }

        let mut services = Services::new(catalog, gateway.clone());
        services.codegen = Some(pipeline.clone());
        services.features = Some(Arc::new(features));
        services.rag = Some(Arc::new(rag));
        services.validate_inline = config.validate_inline;
        let services = Arc::new(services);

        let registry = Arc::new(default_registry());
        registry.promote_all(&pipeline.ledger().servable()?);

        let mut acfg = AgentConfig::default();
        if let Some(n) = config.agent.max_steps {
            acfg.max_steps = n;
        }
        if let Some(n) = config.agent.memory_window {
            acfg.memory_window = n;
        }
        acfg.index_turns = config.agent.index_turns;
        let agent = Agent::new(gateway, registry.clone(), services.clone(), clock.clone()).with_config(acfg);

        let app = Self {
            config,
            services,
            registry,
            agent,
            clock,
            sessions: RwLock::new(BTreeMap::new()),
            images: RwLock::new(HashMap::new()),
            next_session: AtomicU64::new(1),
        };
        app.restore_sessions();
        Ok(app)
    }

    /// Re-opens sessions left on disk by an earlier run.
    fn restore_sessions(&self) {
        let Ok(dirs) = std::fs::read_dir(self.sessions_dir()) else {
            return;
        };
        let mut paths: Vec<PathBuf> = dirs.flatten().map(|d| d.path().join(PROVENANCE_FILE_NAME)).collect();
        paths.sort();
        for p in paths.into_iter().filter(|p| p.is_file()) {
            match Session::import(&p) {
                Ok(s) => {
                    for t in s.turns() {
                        self.register_images(&s, t);
                    }
                    self.insert_session(s);
                }
                Err(e) => log::warn!("skipping {}: {e}", p.display()),
            }
        }
    }

    fn insert_session(&self, s: Session) -> Arc<SessionEntry> {
        let entry = Arc::new(SessionEntry {
            handle: SessionHandle::new(s.clone()),
            trace: Mutex::new(Vec::new()),
        });
        self.sessions.write().unwrap().insert(s.id.clone(), entry.clone());
        entry
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn services(&self) -> &Arc<Services> {
        &self.services
    }

    pub fn registry(&self) -> &Arc<ToolRegistry> {
        &self.registry
    }

    pub fn pipeline(&self) -> &Arc<CodegenPipeline> {
        self.services.codegen.as_ref().expect("pipeline is always configured")
    }

    pub fn features(&self) -> &Arc<FeatureIndex> {
        self.services.features.as_ref().expect("feature index is always configured")
    }

    pub fn rag(&self) -> &Arc<RagStore> {
        self.services.rag.as_ref().expect("rag store is always configured")
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.config.data_dir.join("sessions")
    }

    pub fn health(&self) -> serde_json::Value {
        serde_json::json!({
            "status": "ok",
            "datasets": self.services.catalog.read().unwrap().len(),
            "tools": self.registry.len(),
            "sessions": self.sessions.read().unwrap().len(),
        })
    }

    pub fn datasets(&self) -> Vec<DatasetInfo> {
        self.services
            .catalog
            .read()
            .unwrap()
            .entries
            .iter()
            .map(|e| DatasetInfo {
                name: e.name.clone(),
                path: e.path.clone(),
                notes: e.notes.clone(),
                missing: e.missing,
            })
            .collect()
    }

    /// Opens a session. Without an id the next free `session-NNNN` is used.
    pub fn create_session(&self, id: Option<&str>) -> Result<String, ServiceError> {
        let id = match id {
            Some(id) if !valid_session_id(id) => return Err(ServiceError::BadRequest(format!("bad session id {id:?}"))),
            Some(id) => {
                if self.sessions.read().unwrap().contains_key(id) {
                    return Err(ServiceError::Conflict(format!("session {id} exists")));
                }
                id.to_string()
            }
            None => loop {
                let n = self.next_session.fetch_add(1, Ordering::SeqCst);
                let id = format!("session-{n:04}");
                if !self.sessions.read().unwrap().contains_key(&id) {
                    break id;
                }
            },
        };
        let s = Session::new(&id, self.sessions_dir().join(&id), self.clock.now());
        s.export(&s.provenance_path())?;
        self.insert_session(s);
        Ok(id)
    }

    fn entry(&self, id: &str) -> Result<Arc<SessionEntry>, ServiceError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("session {id}")))
    }

    fn register_images(&self, s: &Session, turn: &AgentTurn) -> Vec<ImageRef> {
        let mut out = Vec::new();
        let mut map = self.images.write().unwrap();
        for a in turn.artifacts().filter(|a| a.kind == ArtifactKind::Image) {
            let id = image_id(&s.id, &a.path);
            map.insert(id.clone(), s.dir.join(&a.path));
            if !out.iter().any(|r: &ImageRef| r.id == id) {
                out.push(ImageRef {
                    url: format!("/images/{id}"),
                    id,
                    file: a.path.clone(),
                });
            }
        }
        out
    }

    /// One agent turn. The session is created on first use; a second
    /// message while a turn runs is refused.
    pub fn chat(&self, session_id: &str, message: &str) -> Result<ChatResponse, ServiceError> {
        if message.trim().is_empty() {
            return Err(ServiceError::BadRequest("empty message".into()));
        }
        let entry = match self.entry(session_id) {
            Ok(e) => e,
            Err(_) => {
                match self.create_session(Some(session_id)) {
                    Ok(_) | Err(ServiceError::Conflict(_)) => {}
                    Err(e) => return Err(e),
                }
                self.entry(session_id)?
            }
        };
        let mut session = entry.handle.begin_turn()?;
        let mut on_event = |e: TraceEvent| {
            let mut t = entry.trace.lock().unwrap();
            let seq = t.len();
            t.push(TraceRecord { seq, event: e });
        };
        let turn = self.agent.run_turn(&mut session, message, &mut on_event)?;
        let images = self.register_images(&session, &turn);
        if let Err(e) = self.rag().save(&self.config.data_dir.join(RAG_INDEX_FILE_NAME)) {
            log::warn!("could not save the document index: {e}");
        }
        if self.config.validate_inline {
            self.promote_servable()?;
        }
        Ok(ChatResponse {
            session_id: session.id.clone(),
            followup: turn.followup.clone(),
            turn,
            images,
        })
    }

    /// Trace events with `seq > after`, all of them without `after`.
    pub fn trace(&self, session_id: &str, after: Option<usize>) -> Result<Vec<TraceRecord>, ServiceError> {
        let entry = self.entry(session_id)?;
        let t = entry.trace.lock().unwrap();
        let start = after.map_or(0, |a| a.saturating_add(1));
        Ok(t.get(start..).map(<[_]>::to_vec).unwrap_or_default())
    }

    pub fn image_path(&self, image_id: &str) -> Result<PathBuf, ServiceError> {
        self.images
            .read()
            .unwrap()
            .get(image_id)
            .filter(|p| p.is_file())
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("image {image_id}")))
    }

    pub fn code(&self, record_id: i64) -> Result<CodeRecord, ServiceError> {
        Ok(self.pipeline().ledger().get(record_id)?)
    }

    fn promote_servable(&self) -> Result<Vec<String>, ServiceError> {
        Ok(self.registry.promote_all(&self.pipeline().ledger().servable()?))
    }

    /// Validates every state-0 record and offers the good ones as tools.
    pub fn validate_pending(&self) -> Result<ValidationReport, ServiceError> {
        let summary = self.pipeline().validate_pending()?;
        let new_tools = self.promote_servable()?;
        Ok(ValidationReport { summary, new_tools })
    }

    fn volume(&self, dataset: &str) -> Result<Arc<isoscope_core::VolumeDataset>, ServiceError> {
        let (_, vol) = self.services.dataset(dataset).map_err(|e| match e {
            AgentError::Tool(m) => ServiceError::NotFound(m),
            other => ServiceError::Agent(other),
        })?;
        Ok(vol)
    }

    pub fn sweep(&self, dataset: &str, isovalue_count: usize, angles: &[CameraAngle]) -> Result<Vec<ScreenshotRecord>, ServiceError> {
        let vol = self.volume(dataset)?;
        Ok(self.features().run_sweep(vol, isovalue_count, angles)?)
    }

    pub fn feature_query(&self, dataset: &str, term: &str) -> Result<FeatureQueryResult, ServiceError> {
        let vol = self.volume(dataset)?;
        self.features().register_volume(vol.clone());
        Ok(self.features().query_feature(vol.id(), term)?)
    }

    pub fn knowledge_metrics(&self, dataset: &str) -> Result<KnowledgeReport, ServiceError> {
        let id = match self.volume(dataset) {
            Ok(v) => v.id().to_string(),
            Err(_) => dataset.to_string(),
        };
        Ok(self.features().knowledge_report(&id)?)
    }

    /// Benchmarks one task. A catalog name in `dataset` becomes its listed path.
    pub fn bench(&self, task: &BenchTask, n_runs: usize) -> Result<BenchRow, ServiceError> {
        let mut task = task.clone();
        if let Some(e) = self.services.catalog.read().unwrap().find(&task.dataset) {
            task.dataset = e.path.clone();
        }
        run_benchmark(self.pipeline(), &self.services.gateway, &task, n_runs)
    }

    pub fn export_provenance(&self, session_id: &str, out: &Path) -> Result<(), ServiceError> {
        let entry = self.entry(session_id)?;
        let s = entry.handle.lock();
        Ok(s.export(out)?)
    }

    pub fn provenance_text(&self, session_id: &str) -> Result<String, ServiceError> {
        Ok(self.entry(session_id)?.handle.lock().to_jsonl())
    }

    /// One self-improvement round for every dataset that has a sweep.
    pub fn improve_knowledge(&self) -> Result<usize, ServiceError> {
        let f = self.features();
        let mut rounds = 0;
        for ds in f.kb().datasets()? {
            if let Ok(vol) = self.volume(&ds) {
                f.register_volume(vol);
            }
            match f.self_improve(&ds, self.config.scheduler.self_improve_growth, 1) {
                Ok(r) => rounds += r.len(),
                Err(e) => log::warn!("self-improvement of {ds} failed: {e}"),
            }
        }
        Ok(rounds)
    }
}

/// Background jobs on plain threads. Dropping the handle stops them after
/// their current sleep.
pub struct Scheduler {
    stop: Arc<AtomicBool>,
    threads: Vec<std::thread::JoinHandle<()>>,
}

impl Scheduler {
    pub fn start(app: Arc<App>) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let mut threads = Vec::new();
        let sched = app.config().scheduler.clone();
        let mut spawn = |secs: u64, name: &'static str, job: fn(&App)| {
            if secs == 0 {
                return;
            }
            let (app, stop) = (app.clone(), stop.clone());
            threads.push(std::thread::spawn(move || {
                let tick = Duration::from_millis(200);
                let every = Duration::from_secs(secs);
                let mut waited = Duration::ZERO;
                while !stop.load(Ordering::SeqCst) {
                    std::thread::sleep(tick);
                    waited += tick;
                    if waited >= every {
                        waited = Duration::ZERO;
                        log::info!("scheduler: {name}");
                        job(&app);
                    }
                }
            }));
        };
        spawn(sched.validate_interval_s, "validate pending", |a| {
            if let Err(e) = a.validate_pending() {
                log::warn!("background validation failed: {e}");
            }
        });
        spawn(sched.self_improve_interval_s, "self-improve", |a| {
            if let Err(e) = a.improve_knowledge() {
                log::warn!("background self-improvement failed: {e}");
            }
        });
        Self { stop, threads }
    }

    pub fn is_idle(&self) -> bool {
        self.threads.is_empty()
    }
}

impl Drop for Scheduler {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}
