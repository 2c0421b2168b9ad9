use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use e112_gateway::{build_state, serve, Settings, StoreSpec};
use tracing_subscriber::EnvFilter;

/// Runs the e112 API with in-memory provider fakes.
#[derive(Debug, Parser)]
#[command(name = "e112-server", version)]
struct Args {
    /// Listen port.
    #[arg(long)]
    port: Option<u16>,
    /// `memory` or `file:<dir>`.
    #[arg(long)]
    store: Option<StoreSpec>,
    /// TOML settings file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Subscriber index cell size in degrees.
    #[arg(long)]
    cell_deg: Option<f64>,
    /// Mount /v1/_inspect and require registered push devices.
    #[arg(long)]
    fault_injection: bool,
    /// Provision this phone number as an operator. Repeatable.
    #[arg(long = "operator")]
    operators: Vec<String>,
}

fn settings(args: Args) -> Result<Settings, String> {
    let mut s = match &args.config {
        Some(path) => Settings::load(path).map_err(|e| e.to_string())?,
        None => Settings::default(),
    };
    if let Some(p) = args.port {
        s.port = p;
    }
    if let Some(store) = args.store {
        s.store = store;
    }
    if let Some(c) = args.cell_deg {
        s.service.cell_deg = c;
    }
    s.fault_injection |= args.fault_injection;
    s.operators.extend(args.operators);
    Ok(s)
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let settings = match settings(Args::parse()) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("e112-server: {e}");
            return ExitCode::from(2);
        }
    };
    let state = match build_state(&settings) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("e112-server: {e}");
            return ExitCode::FAILURE;
        }
    };
    let listener = match tokio::net::TcpListener::bind(("0.0.0.0", settings.port)).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("e112-server: cannot bind port {}: {e}", settings.port);
            return ExitCode::FAILURE;
        }
    };
    tracing::info!(
        addr = %listener.local_addr().map(|a| a.to_string()).unwrap_or_default(),
        store = %settings.store,
        fault_injection = settings.fault_injection,
        "listening"
    );
    let shutdown = async {
        tokio::signal::ctrl_c().await.ok();
        tracing::info!("shutting down");
    };
    match serve(listener, state, Duration::from_secs(settings.sweep_every_secs), shutdown).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("e112-server: {e}");
            ExitCode::FAILURE
        }
    }
}
