use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, ValueEnum};
use trustzero_simnet::{
    run_latency_comparison, run_load_ramp, run_size_report, run_tamper_experiment, write_size_report, ExperimentConfig,
    ExperimentResult,
};

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Tamper,
    Latency,
    Ramp,
    Sizes,
}

#[derive(Parser)]
#[command(name = "simnet", about = "Run a trust-gateway experiment on local nodes")]
struct Args {
    experiment: Experiment,
    /// TOML experiment config; the experiment's preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .init();
    let args = Args::parse();
    let cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path).with_context(|| format!("loading {}", path.display()))?,
        None => match args.experiment {
            Experiment::Tamper => ExperimentConfig::tamper(),
            Experiment::Latency => ExperimentConfig::latency(),
            Experiment::Ramp | Experiment::Sizes => ExperimentConfig::ramp(),
        },
    };

    let result = match args.experiment {
        Experiment::Sizes => {
            let report = run_size_report(cfg.size_max_attestations);
            write_size_report(&report, &args.out)?;
            for fit in &report.fits {
                println!("{:8} slope {:>6} intercept {:>6}", fit.algorithm, fit.slope, fit.intercept);
            }
            println!("exact: {}", report.exact());
            return Ok(());
        }
        Experiment::Tamper => run_tamper_experiment(&cfg).await?,
        Experiment::Latency => run_latency_comparison(&cfg).await?,
        Experiment::Ramp => run_load_ramp(&cfg).await?,
    };
    result.write(&args.out)?;
    report(&result);
    Ok(())
}

fn report(r: &ExperimentResult) {
    let s = &r.summary;
    println!(
        "issued {} forwarded {} denied {} upstream_errors {} failed {}{}",
        s.issued,
        s.forwarded,
        s.denied,
        s.upstream_errors,
        s.failed,
        if s.truncated { " (truncated)" } else { "" }
    );
    for (name, p) in &s.phases {
        let b = &p.latency_seconds;
        print!("{name:10} n={:<6} mean {:.6}s median {:.6}s p95 {:.6}s", b.count, b.mean, b.median, b.p95);
        if let Some(v) = p.verify_ms_mean {
            print!(" verify {v:.4}ms");
        }
        println!();
    }
    for (i, seg) in s.trend_phases.iter().enumerate() {
        println!("trend phase {i}: [{}, {}) mean {:.6}s", seg.start, seg.end, seg.mean);
    }
    if let Some(c) = r.checks.origin_contacts_while_tampering {
        println!("origin contacts while tampering: {c}");
    }
    println!("score mismatches: {}, table mismatches: {}", r.checks.score_mismatches, r.checks.table_mismatches.len());
}
