use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use netimmse::commands::{run, Command};
use netimmse::config::{load_config, parse_units};
use netimmse_core::engine::Method;

/// Mutual-information gradients of linear network-coded Gaussian channels.
#[derive(Debug, Parser)]
#[command(name = "netimmse", version)]
struct Cli {
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Seeds random coefficients, Monte-Carlo draws and scenario draws.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, value_parser = ["mc", "quadrature"])]
    method: Option<String>,
    #[arg(long, value_parser = ["bits", "nats"])]
    units: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Relative gradient tolerance for the configured method.
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mut cfg, text) = match load_config(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", cli.config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    let seed = cfg.seed;
    match cli.method.as_deref() {
        Some("mc") if !cfg.engine_is_mc() => {
            cfg.engine.method = Method::MonteCarlo { samples: 100_000, seed }
        }
        Some("quadrature") if cfg.engine_is_mc() => cfg.engine.method = Method::Quadrature { nodes: None },
        _ => {}
    }
    match (&mut cfg.engine.method, cli.samples, cli.nodes) {
        (Method::MonteCarlo { samples, .. }, Some(n), _) => *samples = n,
        (Method::Quadrature { nodes }, _, Some(n)) => *nodes = Some(n),
        (_, None, None) => {}
        _ => {
            eprintln!("--samples applies to mc and --nodes to quadrature");
            return ExitCode::from(2);
        }
    }
    if let Some(u) = cli.units.as_deref().and_then(parse_units) {
        cfg.units = u;
    }
    if let Some(dir) = cli.out {
        cfg.out_dir = dir;
    }
    if let Some(t) = cli.tolerance {
        if !(t > 0.0 && t.is_finite()) {
            eprintln!("--tolerance must be positive");
            return ExitCode::from(2);
        }
        if cfg.engine_is_mc() {
            cfg.tolerances.mc_rel = t;
        } else {
            cfg.tolerances.gradient_rel = t;
        }
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("--workers must be at least 1");
            return ExitCode::from(2);
        }
        cfg.engine.workers = w;
    }
    let start = Instant::now();
    let report = run(&cfg, &text, cli.command);
    let (csv, txt) = match report.write(&cfg.out_dir, start.elapsed()) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot write {}: {e}", cfg.out_dir.display());
            return ExitCode::from(1);
        }
    };
    print!("{}", report.body());
    println!("wrote {} and {}", csv.display(), txt.display());
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
