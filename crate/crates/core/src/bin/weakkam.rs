use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use weakkam_core::experiment::{is_usage_error, run, ExperimentConfig};

#[derive(Parser)]
#[command(name = "weakkam", version, about = "Weak KAM experiments on the flat torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed (overrides the config's seed).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
}

const USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run {
        config,
        out,
        seed,
        quiet,
    } = cli.command;

    let mut cfg = match ExperimentConfig::read(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(USAGE);
        }
    };
    if seed.is_some() {
        cfg.seed = seed;
    }
    let Some(dir) = out.or_else(|| cfg.output_dir.clone()) else {
        eprintln!("error: no output directory (use --out or output_dir)");
        return ExitCode::from(USAGE);
    };
    cfg.output_dir = Some(dir.clone());
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(USAGE);
    }

    let outcome = match run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(if is_usage_error(&e) { USAGE } else { 1 });
        }
    };
    if let Err(e) = outcome.write(&dir) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    if !quiet {
        let r = &outcome.report;
        for (k, v) in &r.hbar_estimates {
            println!("hbar[{k}] = {v:.6}");
        }
        for a in &r.assertions {
            println!(
                "{} {}: {:.3e} (limit {:.3e})",
                if a.passed { "PASS" } else { "FAIL" },
                a.name,
                a.value,
                a.limit
            );
        }
        if let Some(e) = &r.error {
            println!("FAIL run: {e}");
        }
        println!("artifacts in {}", dir.display());
    }
    ExitCode::from(outcome.exit_code() as u8)
}
