use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tourguide_core::simulate::{run_simulation, SimulationScript};
use tourguide_core::transcript::{read_transcript, replay, TranscriptWriter};
use tourguide_core::turn::Speaker;
use tourguide_service::config::ServerConfig;
use tourguide_service::{manager_from_config, server};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "tourguide", version, about = "Phase-driven Kyoto travel-planning dialogue server")]
struct Cli {
    /// TOML configuration file
    #[arg(long, short, global = true, env = "TOURGUIDE_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP/WebSocket server
    Serve,
    /// Re-run a transcript and compare with its logged final state
    Replay {
        transcript: PathBuf,
        /// Backend retries used when the transcript was recorded
        #[arg(long)]
        max_retries: Option<u32>,
    },
    /// Run a scripted dialogue headless and print the plan
    Simulate {
        script: PathBuf,
        /// Also write the session transcript here
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Print the final session state as JSON
        #[arg(long)]
        json: bool,
    },
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let config = ServerConfig::resolve(cli.config.as_deref())?;
    match cli.command {
        Command::Serve => serve(config).await,
        Command::Replay { transcript, max_retries } => {
            let max_retries = max_retries.unwrap_or(config.backend.max_retries);
            tokio::task::spawn_blocking(move || run_replay(&config, transcript, max_retries)).await?
        }
        Command::Simulate { script, transcript, json } => {
            tokio::task::spawn_blocking(move || run_simulate(&config, script, transcript, json)).await?
        }
    }
}

async fn serve(config: ServerConfig) -> Result<()> {
    let manager = Arc::new(manager_from_config(&config)?);
    let listener = tokio::net::TcpListener::bind(config.listen).await.with_context(|| format!("binding {}", config.listen))?;
    tracing::info!(addr = %listener.local_addr()?, backend = ?config.backend.kind, "listening");
    axum::serve(listener, server::router(manager))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn run_replay(config: &ServerConfig, path: PathBuf, max_retries: u32) -> Result<()> {
    let records = read_transcript(&path).with_context(|| format!("reading {}", path.display()))?;
    let outcome = replay(Arc::new(config.scenario()?), &records, max_retries)?;
    let state = &outcome.state;
    println!("phase: {} ({})", state.current_phase.ordinal(), state.current_phase.name());
    println!("status: {:?}", state.status);
    println!("display: {}", serde_json::to_string(&outcome.display)?);
    if let Some(plan) = &state.final_plan {
        println!("plan:\n{}", plan.describe());
    }
    if !outcome.matches_log() {
        bail!("replayed state differs from the transcript's final snapshot");
    }
    println!("replay matches the transcript");
    Ok(())
}

fn run_simulate(config: &ServerConfig, script_path: PathBuf, transcript: Option<PathBuf>, json: bool) -> Result<()> {
    let script = SimulationScript::load(&script_path)?;
    let backend = script.backend().with_max_retries(config.backend.max_retries);
    let report = run_simulation(Arc::new(config.scenario()?), &script, backend, &mut |_| {})?;
    if let Some(path) = transcript {
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut writer = TranscriptWriter::new(BufWriter::new(file));
        for turn in &report.turns {
            writer.write_turn(turn)?;
        }
    }
    let state = &report.state;
    if json {
        println!("{}", serde_json::to_string_pretty(state)?);
        return Ok(());
    }
    for turn in &report.turns {
        for t in turn.customer_turn.iter().chain([&turn.system_turn]) {
            let label = match t.speaker {
                Speaker::System => "Shoko",
                Speaker::Customer => "Customer",
            };
            println!("[{}] {label}: {}", t.phase.ordinal(), t.text);
        }
        if turn.phase_after != turn.phase_before {
            println!("  -> phase {} ({:?})", turn.phase_after.ordinal(), turn.decision);
        }
    }
    println!("status: {:?}", state.status);
    match &state.final_plan {
        Some(plan) => println!("plan:\n{}", plan.describe()),
        None => println!("no plan"),
    }
    println!("elapsed: {:.3}s", report.elapsed.as_secs_f64());
    Ok(())
}
