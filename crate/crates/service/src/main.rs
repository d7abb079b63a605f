use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use isoscope_core::catalog::DatasetCatalog;
use isoscope_core::clock::{system_clock, LogicalClock, SharedClock};
use isoscope_core::io::load_volume;
use isoscope_core::render::CameraAngle;
use isoscope_core::metrics::{parse_isovalue_range, similarity_map, DEFAULT_DOWNSAMPLE, DEFAULT_NMI_BINS};
use isoscope_llm::{CompletionBackend, HttpChatBackend, RecordingBackend, ReplayBackend};
use isoscope_service::http::parse_angles;
use isoscope_service::{router, App, BenchTask, Scheduler, ServiceConfig, ServiceError, DEFAULT_BENCH_RUNS};

#[derive(Parser)]
#[command(name = "viz", version, about = "Conversational isosurface exploration")]
struct Cli {
    /// Service configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset catalog; overrides the config file.
    #[arg(long, global = true, env = "VIZ_CATALOG")]
    catalog: Option<PathBuf>,
    /// Replay model replies from a transcript instead of calling endpoints.
    #[arg(long, global = true, conflicts_with = "record")]
    transcript: Option<PathBuf>,
    /// Record every model exchange to this transcript file.
    #[arg(long, global = true)]
    record: Option<PathBuf>,
    /// Directory of reference documents for question answering.
    #[arg(long, global = true)]
    docs: Option<PathBuf>,
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Use a fixed logical clock (on by default when replaying).
    #[arg(long, global = true)]
    logical_clock: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Interactive chat on stdin.
    Chat {
        #[arg(long)]
        session: Option<String>,
    },
    /// Render and caption an isovalue by angle grid into the knowledge base.
    Sweep {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value_t = 25)]
        isovalues: usize,
        /// A count (first N canonical views) or comma-separated labels
        /// angle_0..angle_5.
        #[arg(long, default_value = "6")]
        angles: String,
    },
    /// Look up the isovalue that shows a feature.
    Feature {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        term: String,
    },
    /// Isosurface similarity map over `a:b:step`. Writes PNG when `--out`
    /// ends in .png, CSV otherwise.
    Simmap {
        /// Catalog name or volume file.
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        isovalues: String,
        #[arg(long, default_value_t = DEFAULT_NMI_BINS)]
        bins: usize,
        #[arg(long, default_value_t = DEFAULT_DOWNSAMPLE)]
        downsample: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Validate pending generated code once.
    ValidatePending,
    /// Benchmark a generation task; prints one JSON row.
    Bench {
        #[arg(long)]
        task: String,
        #[arg(long)]
        prompt: String,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        modification: Option<String>,
        #[arg(long, default_value_t = DEFAULT_BENCH_RUNS)]
        runs: usize,
    },
    /// Copy a session's provenance log.
    ExportProvenance {
        session: String,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Knowledge-base statistics for a dataset.
    Knowledge {
        #[arg(long)]
        dataset: String,
    },
}

fn config(cli: &Cli) -> Result<ServiceConfig, ServiceError> {
    let mut cfg = match &cli.config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    if let Some(c) = &cli.catalog {
        cfg.catalog = Some(c.clone());
    }
    if let Some(d) = &cli.docs {
        cfg.docs_dir = Some(d.clone());
    }
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = d.clone();
    }
    Ok(cfg)
}

fn backend(cli: &Cli) -> Result<Arc<dyn CompletionBackend>, ServiceError> {
    let bad = |e: isoscope_llm::LlmError| ServiceError::BadConfig(e.to_string());
    if let Some(t) = &cli.transcript {
        return Ok(Arc::new(ReplayBackend::from_file(t).map_err(bad)?));
    }
    let live: Arc<dyn CompletionBackend> = Arc::new(HttpChatBackend::new(Duration::from_secs(120)).map_err(bad)?);
    match &cli.record {
        Some(p) => Ok(Arc::new(RecordingBackend::to_file(live, p).map_err(bad)?)),
        None => Ok(live),
    }
}

fn build_app(cli: &Cli) -> Result<App, ServiceError> {
    let clock: SharedClock = if cli.logical_clock || cli.transcript.is_some() {
        Arc::new(LogicalClock::default())
    } else {
        system_clock()
    };
    App::new(config(cli)?, backend(cli)?, clock)
}

/// A path that exists wins; otherwise the name is looked up in the catalog.
fn volume_path(cli: &Cli, dataset: &str) -> Result<PathBuf, ServiceError> {
    let direct = PathBuf::from(dataset);
    if direct.is_file() {
        return Ok(direct);
    }
    let cfg = config(cli)?;
    let path = cfg
        .catalog
        .ok_or_else(|| ServiceError::BadConfig(format!("{dataset:?} is not a file and no catalog is configured")))?;
    let catalog = DatasetCatalog::load(&path).map_err(|e| ServiceError::BadConfig(e.to_string()))?;
    catalog
        .find(dataset)
        .map(|e| e.resolved_path.clone())
        .ok_or_else(|| ServiceError::NotFound(format!("dataset {dataset:?}")))
}

fn angle_arg(arg: &str) -> Result<Vec<CameraAngle>, ServiceError> {
    if let Ok(n) = arg.trim().parse::<usize>() {
        let all = CameraAngle::canonical();
        if n == 0 || n > all.len() {
            return Err(ServiceError::BadRequest(format!("--angles must be 1..={}", all.len())));
        }
        return Ok(all.into_iter().take(n).collect());
    }
    let labels: Vec<String> = arg.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    parse_angles(&labels)
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn chat_loop(app: &App, session: Option<String>) -> Result<(), ServiceError> {
    let id = match session {
        Some(s) => s,
        None => app.create_session(None)?,
    };
    eprintln!("session {id}; empty line or EOF quits");
    let mut seen: Option<usize> = None;
    let stdin = std::io::stdin();
    loop {
        print!("> ");
        std::io::stdout().flush()?;
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 || line.trim().is_empty() {
            return Ok(());
        }
        match app.chat(&id, line.trim()) {
            Ok(r) => {
                for ev in app.trace(&id, seen)? {
                    seen = Some(ev.seq);
                    eprintln!("  [{:?}] {}", ev.event.kind, ev.event.text);
                }
                for img in &r.images {
                    println!("  image: {}", app.image_path(&img.id)?.display());
                }
                if let Some(f) = &r.followup {
                    println!("  suggestion: {f}");
                }
            }
            Err(e) => eprintln!("error: {e}"),
        }
    }
}

fn run(cli: Cli) -> Result<(), ServiceError> {
    match &cli.command {
        Command::Simmap {
            dataset,
            isovalues,
            bins,
            downsample,
            out,
        } => {
            let vol = load_volume(volume_path(&cli, dataset)?).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
            let isos = parse_isovalue_range(isovalues).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
            let map = similarity_map(&vol, &isos, *bins, *downsample).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
            if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
                map.to_image(8)
                    .save_png(out)
                    .map_err(|e| ServiceError::Io(std::io::Error::other(e.to_string())))?;
            } else {
                std::fs::write(out, map.to_csv())?;
            }
            eprintln!("{}x{} map written to {}", map.len(), map.len(), out.display());
            return Ok(());
        }
        Command::Serve { bind } => {
            let app = Arc::new(build_app(&cli)?);
            let addr = bind.clone().unwrap_or_else(|| app.config().bind.clone());
            let token = app.config().api_token();
            let _sched = Scheduler::start(app.clone());
            let rt = tokio::runtime::Runtime::new()?;
            return rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr).await?;
                log::info!("listening on {addr}");
                axum::serve(listener, router(app, token)).await?;
                Ok(())
            });
        }
        _ => {}
    }
    let app = build_app(&cli)?;
    match cli.command {
        Command::Chat { session } => chat_loop(&app, session)?,
        Command::Sweep {
            dataset,
            isovalues,
            angles,
        } => {
            let recs = app.sweep(&dataset, isovalues, &angle_arg(&angles)?)?;
            eprintln!("{} screenshots captioned", recs.len());
            print_json(&app.knowledge_metrics(&dataset)?);
        }
        Command::Feature { dataset, term } => print_json(&app.feature_query(&dataset, &term)?),
        Command::ValidatePending => print_json(&app.validate_pending()?),
        Command::Bench {
            task,
            prompt,
            dataset,
            modification,
            runs,
        } => {
            let t = BenchTask {
                task,
                prompt,
                dataset,
                modification,
                code_gen: true,
                llm: None,
                agent_model: None,
            };
            println!("{}", serde_json::to_string(&app.bench(&t, runs)?).expect("serializable"));
        }
        Command::ExportProvenance { session, out } => app.export_provenance(&session, &out)?,
        Command::Knowledge { dataset } => print_json(&app.knowledge_metrics(&dataset)?),
        Command::Simmap { .. } | Command::Serve { .. } => unreachable!(),
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("viz: {e}");
        std::process::exit(match e {
            ServiceError::BadConfig(_) | ServiceError::BadRequest(_) => 2,
            ServiceError::BackendUnavailable(_) => 3,
            _ => 1,
        });
    }
}
