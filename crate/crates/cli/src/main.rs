use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use kecone_cli::{emit, load_config, run_suite, SampleCounts, Selector};

/// Run the verification checks.
#[derive(Parser, Debug)]
#[command(name = "kecone", version)]
struct Args {
    /// `all`, or a comma-separated list of checks
    suite: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Use this sample count for every check
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long = "tol-tier2")]
    tol_tier2: Option<f64>,
    #[arg(long = "tol-tier4")]
    tol_tier4: Option<f64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let selector = match Selector::parse(&args.suite) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if let Some(k) = args.samples {
        cfg.samples = SampleCounts::uniform(k);
    }
    if let Some(t) = args.tol_tier2 {
        cfg.tier2 = t;
    }
    if let Some(t) = args.tol_tier4 {
        cfg.tier4 = t;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }

    let run = run_suite(&cfg, &selector);
    for c in &run.report.checks {
        let status = if c.passed { "ok  " } else { "FAIL" };
        let resid = c.max_residual.map(|v| format!("{v:.3e}")).unwrap_or_else(|| "-".into());
        let tol = c.tolerance.map(|v| format!("{v:.1e}")).unwrap_or_else(|| "-".into());
        println!("{status} {:<18} {resid:>11} / {tol:<8} {:>8.2}s", c.name, c.wall_time);
        if let Some(err) = &c.error {
            println!("     {err}");
        }
    }
    if let Err(e) = emit(&run, &cfg, &args.out) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if run.report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
