use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use chrono::TimeDelta;
use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use patrol::channel::SyncChannel;
use patrol::clock::{millis, SystemClock};
use patrol::daemon::Daemon;
use patrol::datastore::Datastore;
use patrol::scenario::{run_script, ScenarioOptions};
use patrol::service::PatrolService;
use patrol_core::advisory::{default_ttl, render_advisory, route_advisory};
use patrol_core::map::{load_map, DEMO_MAP};
use patrol_core::{DetectionModel, SemanticLocation, SemanticMap};

#[derive(Debug, Parser)]
#[command(
    name = "patrol",
    version,
    about = "Crowd reports verified by a patrol robot"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the robot: wait for missions on the channel and publish updates.
    Robot {
        /// Semantic map file (built-in demo map if omitted).
        #[arg(long)]
        map: Option<PathBuf>,
        /// Ground-truth world file, re-read before every patrol.
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long, env = "PATROL_CHANNEL_DIR")]
        channel: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Detection model configuration (perfect detection if omitted).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Simulated travel time per grid step.
        #[arg(long, default_value_t = 100)]
        step_ms: u64,
        /// Handle one mission and exit.
        #[arg(long)]
        once: bool,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "PATROL_DB")]
        db: PathBuf,
        #[arg(long, env = "PATROL_CHANNEL_DIR")]
        channel: PathBuf,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        ttl_minutes: Option<i64>,
    },
    /// Run a scenario script in-process and print its transcript.
    Scenario {
        script: PathBuf,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        world: Option<PathBuf>,
        /// Keep channel files in this directory.
        #[arg(long)]
        channel: Option<PathBuf>,
    },
    /// Print the advisory for a route from a database file.
    Advise {
        /// Comma-separated semantic locations.
        #[arg(long)]
        route: String,
        #[arg(long, env = "PATROL_DB")]
        db: PathBuf,
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        ttl_minutes: Option<i64>,
    },
}

fn read_map(path: Option<&Path>) -> Result<SemanticMap> {
    match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            load_map(&text).with_context(|| format!("loading {}", p.display()))
        }
        None => Ok(load_map(DEMO_MAP)?),
    }
}

fn ttl(minutes: Option<i64>) -> Result<TimeDelta> {
    match minutes {
        None => Ok(default_ttl()),
        Some(m) if m > 0 => Ok(TimeDelta::minutes(m)),
        Some(_) => bail!("--ttl-minutes must be positive"),
    }
}

fn robot(
    map: Option<PathBuf>,
    world: Option<PathBuf>,
    channel: PathBuf,
    seed: u64,
    model: Option<PathBuf>,
    step_ms: u64,
    once: bool,
) -> Result<()> {
    let map = read_map(map.as_deref())?;
    let mut model = match model {
        Some(p) => DetectionModel::from_config(&std::fs::read_to_string(&p)?)
            .with_context(|| format!("loading {}", p.display()))?,
        None => DetectionModel::perfect(seed),
    };
    model.seed = seed;
    let channel = SyncChannel::create(&channel)?;
    let mut daemon = Daemon::new(channel, map, Arc::new(SystemClock))
        .with_model(model)
        .with_step(millis(step_ms));
    if let Some(w) = world {
        daemon = daemon.with_world_file(w);
    }
    if once {
        loop {
            if let Some(cycle) = daemon.run_once(Duration::from_secs(1))? {
                if let Some(log) = cycle.log {
                    print!("{}", log.to_text());
                }
                return Ok(());
            }
        }
    }
    let stop = AtomicBool::new(false);
    daemon.run(&stop, Duration::from_millis(500))?;
    Ok(())
}

async fn serve(
    db: PathBuf,
    channel: PathBuf,
    map: Option<PathBuf>,
    port: u16,
    ttl_minutes: Option<i64>,
) -> Result<()> {
    let service = PatrolService::new(
        Datastore::open(&db)?,
        SyncChannel::create(&channel)?,
        read_map(map.as_deref())?,
        Arc::new(SystemClock),
    )
    .with_ttl(ttl(ttl_minutes)?);
    let state = Arc::new(service);
    let poller = state.clone();
    tokio::spawn(async move {
        loop {
            tokio::time::sleep(Duration::from_millis(500)).await;
            let s = poller.clone();
            match tokio::task::spawn_blocking(move || s.sync_updates()).await {
                Ok(Err(e)) => tracing::warn!(error = %e, "update sync failed"),
                Err(e) => tracing::error!(error = %e, "update sync task failed"),
                Ok(Ok(_)) => {}
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, patrol::api::router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn advise(route: &str, db: PathBuf, map: Option<PathBuf>, ttl_minutes: Option<i64>) -> Result<()> {
    let map = read_map(map.as_deref())?;
    let store = Datastore::open(&db)?;
    let route: Vec<SemanticLocation> = route
        .split(',')
        .map(SemanticLocation::parse_lenient)
        .collect::<Result<_, _>>()?;
    let now = chrono::Utc::now();
    let advisory = store.read(|t| {
        route_advisory(t, &map, &route, now, ttl(ttl_minutes)?).map_err(anyhow::Error::from)
    })?;
    for line in render_advisory(&advisory) {
        println!("{line}");
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Robot {
            map,
            world,
            channel,
            seed,
            model,
            step_ms,
            once,
        } => robot(map, world, channel, seed, model, step_ms, once),
        Command::Serve {
            db,
            channel,
            map,
            port,
            ttl_minutes,
        } => tokio::runtime::Runtime::new()
            .map_err(anyhow::Error::from)
            .and_then(|rt| rt.block_on(serve(db, channel, map, port, ttl_minutes))),
        Command::Scenario {
            script,
            map,
            world,
            channel,
        } => {
            let text = match std::fs::read_to_string(&script) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {}: {e}", script.display());
                    return ExitCode::FAILURE;
                }
            };
            let opts = ScenarioOptions {
                base_dir: script.parent().map(Path::to_path_buf).unwrap_or_default(),
                map,
                world,
                channel,
            };
            return match run_script(&text, &opts) {
                Ok(run) => {
                    for line in run.transcript {
                        println!("{line}");
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    for line in &e.run.transcript {
                        println!("{line}");
                    }
                    eprintln!("{}:{e}", script.display());
                    ExitCode::FAILURE
                }
            };
        }
        Command::Advise {
            route,
            db,
            map,
            ttl_minutes,
        } => advise(&route, db, map, ttl_minutes),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
