use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use limes_gateway::{RuntimeManager, ServiceConfig};

/// Limes function runtime: REST API for registering, initializing,
/// invoking and stopping WebAssembly functions.
#[derive(Parser, Debug)]
#[command(name = "limes", version)]
struct Args {
    /// TCP port to listen on.
    #[arg(long, env = "LIMES_PORT")]
    port: Option<u16>,
    /// Registry data directory.
    #[arg(long, env = "LIMES_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Maximum number of invocations running at once.
    #[arg(long, env = "LIMES_MAX_CONCURRENCY")]
    max_concurrency: Option<usize>,
    /// Default invocation deadline in milliseconds.
    #[arg(long)]
    default_deadline_ms: Option<u64>,
    /// Directory whose files are copied into every invocation sandbox.
    #[arg(long)]
    seed_dir: Option<PathBuf>,
    /// Mount invocation sandboxes read-only.
    #[arg(long)]
    read_only: bool,
}

async fn shutdown_signal() {
    use tokio::signal::unix::{signal, SignalKind};
    let mut term = signal(SignalKind::terminate()).expect("install SIGTERM handler");
    tokio::select! {
        _ = tokio::signal::ctrl_c() => {}
        _ = term.recv() => {}
    }
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    let mut config = ServiceConfig::default();
    if let Some(p) = args.port {
        config.listen_port = p;
    }
    if let Some(d) = args.data_dir {
        config.data_dir = d;
    }
    if let Some(n) = args.max_concurrency {
        config.max_concurrent_invocations = n;
    }
    if let Some(ms) = args.default_deadline_ms {
        config.default_deadline_ms = ms;
    }
    config.seed_dir = args.seed_dir;
    config.allow_writes = !args.read_only;

    let manager = Arc::new(RuntimeManager::open(config)?);
    let listener = limes_gateway::bind(manager.config()).await?;
    log::info!(
        "listening on {} (data dir {})",
        listener.local_addr()?,
        manager.config().data_dir.display()
    );
    limes_gateway::serve(manager, listener, shutdown_signal()).await
}
