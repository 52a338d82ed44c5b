use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use citysim::{parse_epoch, parse_scenario_with, run_scenario, RunOptions, Scenario, SimOverrides};
use citysim_gateway::server::{bind, wall_ms};
use citysim_gateway::{serve, Gateway, Session};
use clap::{Parser, Subcommand};
use log::info;

const EXIT_ASSERTION: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "citysim", version, about = "Deterministic smart-city simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario to completion, check its assertions and export telemetry.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep running at least until this virtual time.
        #[arg(long)]
        until_ms: Option<u64>,
        /// Wall-clock time of virtual zero, e.g. 2021-03-01T18:00:00.
        #[arg(long)]
        epoch: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Serve the operator gateway, paced against the wall clock.
    Serve {
        /// Scripted steps to play alongside live commands.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// On Ctrl-C, write the command log here as a replayable scenario.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

/// Failure with a message and an exit status.
struct Fail(u8, String);

fn load(path: &Path, overrides: &SimOverrides) -> Result<Scenario, Fail> {
    let text = std::fs::read_to_string(path).map_err(|e| Fail(EXIT_USAGE, format!("{}: {e}", path.display())))?;
    let scenario =
        parse_scenario_with(&text, overrides).map_err(|e| Fail(EXIT_USAGE, format!("{}: {e}", path.display())))?;
    for w in &scenario.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(scenario)
}

fn run(
    scenario: &Path,
    out: &Path,
    until_ms: Option<u64>,
    epoch: Option<String>,
    seed: Option<u64>,
) -> Result<(), Fail> {
    let epoch = epoch
        .map(|e| parse_epoch(&e))
        .transpose()
        .map_err(|m| Fail(EXIT_USAGE, m))?;
    let scenario = load(scenario, &SimOverrides { epoch, seed })?;
    let report =
        run_scenario(&scenario, Some(out), &RunOptions { until_ms }).map_err(|e| Fail(EXIT_USAGE, e.to_string()))?;
    for fault in report.city.faults() {
        eprintln!(
            "fault at {} ms on {}: {} ({})",
            fault.at.millis(),
            fault.target,
            fault.error,
            fault.kind
        );
    }
    let failed = report.failures().count();
    println!(
        "{} assertions, {} passed, {} failed; virtual time {} ms; output in {}",
        report.outcomes.len(),
        report.outcomes.len() - failed,
        failed,
        report.city.now().millis(),
        out.display()
    );
    if report.passed() {
        Ok(())
    } else {
        Err(Fail(EXIT_ASSERTION, report.failure_report().trim_end().to_string()))
    }
}

async fn serve_gateway(scenario: Option<PathBuf>, listen: SocketAddr, log_path: Option<PathBuf>) -> Result<(), Fail> {
    let scenario = match scenario {
        Some(p) => load(&p, &SimOverrides::default())?,
        None => Scenario::default(),
    };
    let session = Session::new(&scenario, wall_ms()).map_err(|e| Fail(EXIT_USAGE, e.to_string()))?;
    let (gateway, _task) = Gateway::spawn(session);
    let listener = bind(listen)
        .await
        .map_err(|e| Fail(EXIT_USAGE, format!("{listen}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| Fail(EXIT_USAGE, e.to_string()))?;
    println!("listening on http://{addr} (ws://{addr}/ws)");
    tokio::select! {
        r = serve(listener, gateway.clone()) => r.map_err(|e| Fail(EXIT_USAGE, e.to_string()))?,
        _ = tokio::signal::ctrl_c() => info!("shutting down"),
    }
    if let Some(path) = log_path {
        let log = gateway
            .command_log()
            .await
            .map_err(|e| Fail(EXIT_USAGE, e.to_string()))?;
        std::fs::write(&path, log).map_err(|e| Fail(EXIT_USAGE, format!("{}: {e}", path.display())))?;
        println!("command log written to {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            out,
            until_ms,
            epoch,
            seed,
        } => run(&scenario, &out, until_ms, epoch, seed),
        Command::Serve { scenario, listen, log } => match tokio::runtime::Runtime::new() {
            Ok(rt) => rt.block_on(serve_gateway(scenario, listen, log)),
            Err(e) => Err(Fail(EXIT_USAGE, e.to_string())),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Fail(code, msg)) => {
            eprintln!("{msg}");
            ExitCode::from(code)
        }
    }
}
