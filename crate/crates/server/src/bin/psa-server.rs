use std::net::SocketAddr;

use anyhow::Context;
use clap::Parser;
use psa_server::AppState;
use tracing_subscriber::EnvFilter;

/// Serve the simulation and optimizer over HTTP/JSON.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Default evaluation threads for evolve jobs.
    #[arg(long)]
    parallelism: Option<usize>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let args = Args::parse();
    let state = args
        .parallelism
        .map_or_else(AppState::default, AppState::new);
    let listener = tokio::net::TcpListener::bind(args.addr)
        .await
        .with_context(|| format!("binding {}", args.addr))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    psa_server::serve(listener, state).await?;
    Ok(())
}
