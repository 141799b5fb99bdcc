use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use reqwest::Method;
use trustzero_client::{load_directory, save_directory, SendOptions, TamperSpec, TrustClient, Wallet, WalletLock};
use trustzero_core::SigAlgorithm;

#[derive(Parser)]
#[command(name = "tz", about = "Trust-token wallet and HTTP client")]
struct Cli {
    #[arg(long, global = true, default_value = "wallet.json")]
    wallet: PathBuf,
    #[arg(long, global = true, default_value = "directory.json")]
    directory: PathBuf,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a new identity.
    Init {
        #[arg(long, default_value = "RSA2048")]
        algorithm: SigAlgorithm,
        #[arg(long)]
        force: bool,
    },
    /// Send a request carrying the trust token and harvest any grant.
    Send {
        url: String,
        #[arg(short = 'X', long, default_value = "POST")]
        method: Method,
        /// Request body (JSON).
        #[arg(short = 'd', long)]
        data: Option<String>,
        /// Flip a byte of the outgoing token: pk:N, sig:N or sigK:N.
        #[arg(long)]
        tamper: Vec<TamperSpec>,
        /// Do not pin unknown issuers on first contact.
        #[arg(long)]
        no_tofu: bool,
        /// Sign the request with the wallet key (User-Key-PoP).
        #[arg(long)]
        pop: bool,
    },
    /// List attestations and the score under the pinned directory.
    Show,
    /// Drop attestations that no longer verify under the pinned directory.
    Prune,
    /// Manage the pinned directory of gateway keys.
    Directory {
        #[command(subcommand)]
        command: DirectoryCommand,
    },
}

#[derive(Subcommand)]
enum DirectoryCommand {
    /// Fetch and pin (or refresh) the published key of each gateway.
    Pin { urls: Vec<String> },
    /// Print the pinned directory.
    List,
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber_init();
    match run(Cli::parse()).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn tracing_subscriber_init() {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .init();
}

async fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Init { algorithm, force } => {
            let wallet = Wallet::init(algorithm, &cli.wallet, force)?;
            if cli.json {
                println!("{}", serde_json::json!({ "wallet": cli.wallet, "header": wallet.header_value() }));
            } else {
                println!("created {} identity in {}", algorithm, cli.wallet.display());
                println!("User-Key-Signatures: {}", wallet.header_value());
            }
        }
        Command::Send { url, method, data, tamper, no_tofu, pop } => {
            let _lock = WalletLock::acquire(&cli.wallet).context("locking wallet")?;
            let mut wallet = Wallet::load(&cli.wallet)?;
            let mut directory = load_directory(&cli.directory)?;
            let opts = SendOptions { tamper, harvest: true, tofu: !no_tofu, proof_of_possession: pop };
            let client = TrustClient::new();
            let outcome = client.send(&mut wallet, &mut directory, method, &url, data.map(String::into_bytes), &opts).await?;
            if outcome.granted {
                wallet.save()?;
            }
            if outcome.pinned.is_some() {
                save_directory(&cli.directory, &directory)?;
            }
            if cli.json {
                println!("{}", serde_json::to_string(&outcome)?);
            } else {
                println!("status {} in {:.4}s", outcome.status, outcome.latency_seconds);
                if let Some(rule) = &outcome.deny_rule {
                    println!("denied by {rule}: {}", outcome.deny_reason.as_deref().unwrap_or(""));
                }
                if let Some(score) = outcome.score {
                    println!("gateway score {score}");
                }
                if let Some(id) = &outcome.pinned {
                    println!("pinned key for {id}");
                }
                if outcome.granted {
                    println!("grant merged; wallet holds {} attestations", wallet.token().len());
                } else if let Some(why) = &outcome.grant_rejected {
                    println!("grant rejected: {why}");
                }
                if !outcome.body.is_empty() {
                    println!("{}", outcome.body);
                }
            }
            return Ok(if (200..300).contains(&outcome.status) { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
        Command::Show => {
            let wallet = Wallet::load(&cli.wallet)?;
            let directory = load_directory(&cli.directory)?;
            if cli.json {
                let report = trustzero_core::trust_score(wallet.token(), &directory);
                let rows: Vec<_> = report
                    .per_issuer
                    .iter()
                    .zip(wallet.token().attestations())
                    .map(|((id, v), a)| serde_json::json!({ "issuer": id, "fingerprint": trustzero_client::fingerprint(&a.signature), "verdict": v.as_str() }))
                    .collect();
                println!("{}", serde_json::json!({ "attestations": rows, "score": report.score }));
            } else {
                print!("{}", wallet.show(&directory));
            }
        }
        Command::Prune => {
            let _lock = WalletLock::acquire(&cli.wallet).context("locking wallet")?;
            let mut wallet = Wallet::load(&cli.wallet)?;
            let directory = load_directory(&cli.directory)?;
            let removed = wallet.prune_invalid(&directory);
            wallet.save()?;
            for id in removed {
                println!("removed {id}");
            }
        }
        Command::Directory { command: DirectoryCommand::Pin { urls } } => {
            if urls.is_empty() {
                bail!("directory pin needs at least one gateway URL");
            }
            let mut directory = load_directory(&cli.directory)?;
            let client = TrustClient::new();
            for url in urls {
                let key = client.fetch_published_key(&url).await?;
                let id = key.server_id.clone();
                let previous = directory.insert_published(key)?;
                println!("{} {}", if previous.is_some() { "refreshed" } else { "pinned" }, id);
            }
            save_directory(&cli.directory, &directory)?;
        }
        Command::Directory { command: DirectoryCommand::List } => {
            let directory = load_directory(&cli.directory)?;
            if cli.json {
                print!("{}", directory.to_json());
            } else {
                for key in directory.published() {
                    println!("{}  {}  {}", key.server_id, key.algorithm, key.public_key_b64url);
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
