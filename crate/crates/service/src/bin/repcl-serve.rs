use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Parser;
use repcl_service::{serve, ServiceConfig};

/// Serve replay sessions over HTTP, plus the UI bundle if given.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory that `{"path": ...}` session requests are resolved against.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// Built UI bundle to serve at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Idle seconds before a session is dropped.
    #[arg(long, default_value_t = 1800)]
    ttl_secs: u64,
}

#[tokio::main]
async fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let a = Args::parse();
    let cfg = ServiceConfig {
        trace_dir: a.trace_dir,
        static_dir: a.static_dir,
        ttl: Some(Duration::from_secs(a.ttl_secs)),
    };
    let addr: SocketAddr = format!("{}:{}", a.host, a.port).parse().context("bad --host/--port")?;
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    log::info!("listening on http://{}", listener.local_addr()?);
    serve(listener, &cfg).await?;
    Ok(())
}
