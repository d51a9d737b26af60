use std::fs;
use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use medsim::analytics::{flush_queue, upload_report, TotalMode, UploadConfig};
use medsim::net::NetProfile;
use medsim::physics::server::serve;
use medsim::physics::{PhysicsServer, ServerConfig};
use medsim::recorder::RecordedSession;
use medsim::scenegraph::{scaffold_action, ScenarioDocument, SceneError, Scenegraph};
use medsim::sim::bench::{run_bench, write_csv, BenchKind, BenchParams};
use medsim::sim::{self, Injection, PhysicsMode, RunConfig, RunOutput, SimError};

#[derive(Parser)]
#[command(name = "medsim", version, about = "Headless collaborative training-simulation engine")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scripted multi-client session.
    Run(RunArgs),
    /// Stream a recording from a point in time.
    Replay(ReplayArgs),
    /// Continue a recorded session from a point in time.
    Resume {
        #[arg(long)]
        recording: PathBuf,
        /// Resume point, seconds from session start.
        #[arg(long)]
        at_s: f64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Check a scenario document (exit 2 on schema errors, 3 on cycles).
    Validate { scenario: PathBuf },
    /// Print a template Action for a prototype.
    ScaffoldAction {
        #[arg(long)]
        prototype: String,
        /// Object names used to fill the template.
        #[arg(long, value_delimiter = ',')]
        objects: Vec<String>,
    },
    /// Timing benchmarks, written as CSV.
    Bench(BenchArgs),
    /// Run a passive physics server.
    PhysicsServer(ServerArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PhysicsArg {
    Off,
    InProcess,
    Dissected,
}

#[derive(Clone, Copy, ValueEnum)]
enum TotalArg {
    Mean,
    Weighted,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 1)]
    clients: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 20.0)]
    latency_ms: f64,
    #[arg(long, default_value_t = 5.0)]
    jitter_ms: f64,
    #[arg(long, default_value_t = 0.01)]
    loss: f64,
    /// Bytes per second per link; unlimited when absent.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Write an MREC recording here.
    #[arg(long)]
    record: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PhysicsArg::Off)]
    physics: PhysicsArg,
    #[arg(long, default_value = "127.0.0.1:7450")]
    physics_addr: String,
    #[arg(long, default_value_t = 10)]
    physics_objects: usize,
    /// Mistake injection, e.g. `wrong-angle:place_forceps:3`, `late:scrub:5`,
    /// `contamination:scrub`, `wrong-answer:count_check`. Repeatable.
    #[arg(long)]
    inject: Vec<Injection>,
    #[arg(long, default_value_t = 2.0)]
    action_interval_s: f64,
    #[arg(long, default_value_t = 600.0)]
    max_duration_s: f64,
    #[arg(long, value_enum, default_value_t = TotalArg::Mean)]
    total: TotalArg,
    #[arg(long, default_value = "report.json")]
    report: PathBuf,
    #[arg(long, default_value = "metrics.csv")]
    metrics: PathBuf,
    /// Portal settings (TOML); the report is uploaded or queued when given.
    #[arg(long)]
    upload_config: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    recording: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    from_s: f64,
    /// Write the binary item stream here instead of JSON lines to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(value_parser = parse_bench_kind)]
    kind: BenchKind,
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long, default_value_t = 191)]
    particles: usize,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    clients: u32,
    #[arg(long, default_value_t = 60.0)]
    duration_s: f64,
    #[arg(long, default_value_t = 1200)]
    ticks: u64,
    #[arg(long, default_value_t = 20)]
    physics_objects: usize,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServerArgs {
    #[arg(long, default_value = "127.0.0.1:7450")]
    listen: String,
    #[arg(long, default_value_t = 1.0 / 60.0)]
    dt: f64,
    #[arg(long, default_value_t = 64)]
    capacity: usize,
    /// Per-step timing CSV, rewritten every second.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Stop after this many seconds (runs until killed otherwise).
    #[arg(long)]
    duration_s: Option<f64>,
}

fn parse_bench_kind(s: &str) -> Result<BenchKind, String> {
    s.parse().map_err(|e: SimError| e.to_string())
}

fn load_scenario(path: &Path) -> Result<ScenarioDocument> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ScenarioDocument::from_json(&text)?)
}

fn run_config(a: &RunArgs) -> Result<RunConfig> {
    let scenario = load_scenario(&a.scenario)?;
    let mut cfg = RunConfig::new(scenario, a.clients, a.seed).inject(&a.inject);
    cfg.profile = NetProfile {
        jitter_ms: a.jitter_ms,
        loss_prob: a.loss,
        bandwidth_bytes_per_s: a.bandwidth.unwrap_or(f64::INFINITY),
        ..NetProfile::ideal(a.latency_ms, a.seed)
    };
    cfg.record = a.record.is_some();
    cfg.physics = match a.physics {
        PhysicsArg::Off => PhysicsMode::Off,
        PhysicsArg::InProcess => PhysicsMode::InProcess,
        PhysicsArg::Dissected => PhysicsMode::Dissected { addr: a.physics_addr.clone() },
    };
    cfg.physics_objects = a.physics_objects;
    cfg.action_interval_s = a.action_interval_s;
    cfg.max_duration_s = a.max_duration_s;
    cfg.total_mode = match a.total {
        TotalArg::Mean => TotalMode::Mean,
        TotalArg::Weighted => TotalMode::ActionWeighted,
    };
    Ok(cfg)
}

fn write_outputs(a: &RunArgs, out: &RunOutput) -> Result<()> {
    fs::write(&a.report, out.report_json()?).with_context(|| format!("writing {}", a.report.display()))?;
    fs::write(&a.metrics, out.metrics_csv()?).with_context(|| format!("writing {}", a.metrics.display()))?;
    if let (Some(path), Some(bytes)) = (&a.record, &out.recording) {
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "{} actions completed, total score {:.2}{}",
        out.report.actions.len(),
        out.report.total_score,
        if out.finished { "" } else { " (scenario unfinished at max duration)" }
    );
    if let Some(cfg_path) = &a.upload_config {
        let cfg = UploadConfig::load(cfg_path)?;
        let flushed = flush_queue(&cfg)?;
        if flushed.delivered > 0 {
            log::info!("delivered {} queued reports", flushed.delivered);
        }
        println!("upload: {:?}", upload_report(&out.report, &cfg)?);
    }
    Ok(())
}

fn cmd_replay(a: &ReplayArgs) -> Result<()> {
    let rec = RecordedSession::load(&a.recording)?;
    let from = (a.from_s * 1e6).round() as u64;
    match &a.out {
        Some(path) => {
            let mut bytes = Vec::new();
            let mut err = None;
            rec.replay(from, |item| {
                if let Err(e) = item.encode(&mut bytes) {
                    err.get_or_insert(e);
                }
            })?;
            if let Some(e) = err {
                return Err(e.into());
            }
            fs::write(path, bytes)?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            let mut io_err = None;
            rec.replay(from, |item| {
                if io_err.is_some() {
                    return;
                }
                let line = serde_json::json!({
                    "timestamp_us": item.timestamp_us,
                    "objects": item.state.len(),
                    "events": item.events,
                });
                if let Err(e) = writeln!(w, "{line}") {
                    io_err = Some(e);
                }
            })?;
            match io_err {
                // reader went away (e.g. `| head`): not an error
                Some(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                Some(e) => return Err(e.into()),
                None => {}
            }
        }
    }
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<i32> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let result = ScenarioDocument::from_json(&text).and_then(|doc| Scenegraph::load(&doc, Default::default()).map(|g| (doc, g)));
    Ok(match result {
        Ok((doc, g)) => {
            println!("ok: '{}' with {} actions, {} initially active", doc.name, g.node_ids().len(), g.frontier().len());
            0
        }
        Err(e) => {
            eprintln!("invalid: {e}");
            e.exit_code()
        }
    })
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let p = BenchParams {
        mesh: a.mesh.clone(),
        particles: a.particles,
        runs: a.runs,
        seed: a.seed,
        clients: a.clients,
        duration_s: a.duration_s,
        ticks: a.ticks,
        physics_objects: a.physics_objects,
    };
    let rows = run_bench(a.kind, &p)?;
    match &a.out {
        Some(path) => write_csv(&rows, fs::File::create(path)?)?,
        None => write_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_server(a: &ServerArgs) -> Result<()> {
    let listener = TcpListener::bind(&a.listen).with_context(|| format!("binding {}", a.listen))?;
    println!("physics server listening on {}", listener.local_addr()?);
    let server = Arc::new(Mutex::new(PhysicsServer::new(ServerConfig { dt: a.dt, session_capacity: a.capacity })));
    let stop = Arc::new(AtomicBool::new(false));
    let (s, st) = (server.clone(), stop.clone());
    let accept = std::thread::spawn(move || serve(listener, s, st));
    let started = Instant::now();
    loop {
        std::thread::sleep(Duration::from_secs(1));
        if let Some(path) = &a.metrics {
            let srv = server.lock().expect("server lock");
            srv.write_metrics_csv(fs::File::create(path)?)?;
        }
        if accept.is_finished() || a.duration_s.is_some_and(|d| started.elapsed().as_secs_f64() >= d) {
            break;
        }
    }
    stop.store(true, std::sync::atomic::Ordering::SeqCst);
    match accept.join() {
        Ok(r) => r?,
        Err(_) => bail!("accept thread panicked"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Cmd::Run(a) => {
            let out = sim::run(run_config(&a)?)?;
            write_outputs(&a, &out)?;
        }
        Cmd::Resume { recording, at_s, run } => {
            let rec = RecordedSession::load(&recording)?;
            let mut cfg = run_config(&run)?;
            // the continued session is recorded again if asked
            cfg.record = run.record.is_some();
            let out = sim::resume(cfg, &rec, (at_s * 1e6).round() as u64)?;
            write_outputs(&run, &out)?;
        }
        Cmd::Replay(a) => cmd_replay(&a)?,
        Cmd::Validate { scenario } => return cmd_validate(&scenario),
        Cmd::ScaffoldAction { prototype, objects } => {
            println!("{}", serde_json::to_string_pretty(&scaffold_action(&prototype, &objects)?)?);
        }
        Cmd::Bench(a) => cmd_bench(&a)?,
        Cmd::PhysicsServer(a) => cmd_server(&a)?,
    }
    Ok(0)
}

fn exit_code(e: &anyhow::Error) -> i32 {
    if let Some(s) = e.downcast_ref::<SimError>() {
        s.exit_code()
    } else if let Some(s) = e.downcast_ref::<SceneError>() {
        s.exit_code()
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
