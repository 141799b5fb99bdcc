use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use trustzero_gateway::{render_snapshot, Gateway, GatewayConfig, GatewayHandle, ScoreTable};

#[derive(Parser)]
#[command(about = "Trust-token policy enforcement gateway")]
struct Args {
    #[arg(long, global = true, default_value = "gateway.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Serve until interrupted (default).
    Run,
    /// Replace the stored server key. Restart a running gateway to pick it up.
    RotateKey,
    /// Print the score table, highest score first.
    Scores,
    /// Print this gateway's directory entry as JSON.
    Pubkey,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_env_filter(tracing_subscriber::EnvFilter::from_default_env()).init();
    let args = Args::parse();
    let config = GatewayConfig::from_toml_file(&args.config).with_context(|| format!("loading {}", args.config.display()))?;

    match args.command.unwrap_or(Command::Run) {
        Command::Run => {
            let gateway = Gateway::new(&config)?;
            let handle = GatewayHandle::spawn(gateway, config.listen_addr).await?;
            println!("gateway {} listening on {} -> {}", config.server_id, handle.base_url(), config.upstream_base_url());
            tokio::signal::ctrl_c().await?;
            handle.shutdown().await;
        }
        Command::RotateKey => {
            if config.key_path.is_none() {
                bail!("rotate-key needs key_path in the config");
            }
            let gateway = Gateway::new(&config)?;
            gateway.rotate_server_key()?;
            println!("{}", serde_json::to_string_pretty(&gateway.export_directory_entry())?);
        }
        Command::Scores => {
            let Some(path) = &config.score_table_path else {
                bail!("scores needs score_table_path in the config");
            };
            print!("{}", render_snapshot(&ScoreTable::open(path)?.snapshot()));
        }
        Command::Pubkey => {
            if config.key_path.is_none() {
                bail!("pubkey needs key_path in the config");
            }
            let gateway = Gateway::new(&config)?;
            println!("{}", serde_json::to_string_pretty(&gateway.export_directory_entry())?);
        }
    }
    Ok(())
}
