use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use trustzero_origin::{OriginConfig, OriginHandle};

/// Stub login server for trust-gateway experiments.
#[derive(Parser)]
struct Args {
    /// TOML config with listen_addr, login_paths and fixtures.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides listen_addr from the config.
    #[arg(long)]
    listen: Option<std::net::SocketAddr>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_env_filter(tracing_subscriber::EnvFilter::from_default_env()).init();
    let args = Args::parse();
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<OriginConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => OriginConfig::default(),
    };
    if let Some(addr) = args.listen {
        config.listen_addr = addr;
    }
    let origin = OriginHandle::spawn(config).await?;
    println!("origin listening on {}", origin.base_url());
    tokio::signal::ctrl_c().await?;
    origin.shutdown().await;
    Ok(())
}
