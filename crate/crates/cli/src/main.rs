//! Command-line interface for the invisible-colour Potts toolkit:
//! verification, exact enumeration, contour inspection, sampling, beta
//! sweeps and reporting.

mod checks;
mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Command, RunConfig};
use manifest::ManifestBuilder;

const EXIT_OK: u8 = 0;
const EXIT_CHECK_FAILURE: u8 = 1;
const EXIT_INCOMPLETE: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "qrpotts", version, about = "Potts model with invisible colours: exact identities, contours and cluster Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
    /// JSON configuration file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    q: Option<f64>,
    #[arg(long, global = true)]
    r: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// configuration-sweep cap: volumes with more bonds are refused
    #[arg(long = "cap-bonds", global = true)]
    cap_bonds: Option<usize>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// also run the slowest exhaustive verifications
    #[arg(long, global = true)]
    full: bool,
    /// test hook: corrupt one identity to prove the suite catches it
    #[arg(long = "corrupt-weights", global = true)]
    corrupt_weights: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum CliCommand {
    /// run the identity verification suite
    Verify,
    /// exact partition values at the configured parameters
    Exact,
    /// enumerate and weight the contours of a volume
    Contours,
    /// run one Monte Carlo chain
    Sample,
    /// beta grid of cluster chains with histograms and verdicts
    Sweep,
    /// summarize a previous sweep
    Report,
}

impl From<CliCommand> for Command {
    fn from(c: CliCommand) -> Command {
        match c {
            CliCommand::Verify => Command::Verify,
            CliCommand::Exact => Command::Exact,
            CliCommand::Contours => Command::Contours,
            CliCommand::Sample => Command::Sample,
            CliCommand::Sweep => Command::Sweep,
            CliCommand::Report => Command::Report,
        }
    }
}

fn build_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::minimal(cli.command.into()),
    };
    cfg.command = cli.command.into();
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(q) = cli.q {
        cfg.params.q = q;
    }
    if let Some(r) = cli.r {
        cfg.params.r = r;
    }
    if let Some(beta) = cli.beta {
        cfg.params.beta = beta;
    }
    if let Some(tau) = cli.tau {
        cfg.tau = tau;
    }
    if let Some(cap) = cli.cap_bonds {
        cfg.caps.volume_cap_bonds = cap;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = Some(threads);
    }
    if cli.full {
        cfg.full = true;
    }
    if cli.corrupt_weights {
        cfg.corrupt = Some("rc-weight".into());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cfg: &RunConfig) -> u8 {
    let mut manifest = ManifestBuilder::new(cfg);
    let code = match cfg.command {
        Command::Verify => {
            let results = checks::run_all(cfg);
            for c in &results {
                println!(
                    "{} {:<26} {}",
                    if c.pass {
                        "PASS"
                    } else if c.complete {
                        "FAIL"
                    } else {
                        "INCOMPLETE"
                    },
                    c.name,
                    c.detail
                );
                manifest.check(c.clone());
            }
            if let Some(first) = results.iter().find(|c| !c.pass && c.complete) {
                eprintln!("verification failed: {}", first.name);
                EXIT_CHECK_FAILURE
            } else if results.iter().any(|c| !c.complete) {
                eprintln!("incomplete enumeration");
                EXIT_INCOMPLETE
            } else {
                EXIT_OK
            }
        }
        Command::Exact => match commands::cmd_exact(cfg, &mut manifest) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("exact: {e:#}");
                classify_error(&e)
            }
        },
        Command::Contours => match commands::cmd_contours(cfg, &mut manifest) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("contours: {e:#}");
                classify_error(&e)
            }
        },
        Command::Sample => match commands::cmd_sample(cfg, &mut manifest) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("sample: {e:#}");
                classify_error(&e)
            }
        },
        Command::Sweep => match commands::cmd_sweep(cfg, &mut manifest) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("sweep: {e:#}");
                classify_error(&e)
            }
        },
        Command::Report => match commands::cmd_report(cfg, &mut manifest) {
            Ok(_) => {
                if manifest.all_checks_pass() {
                    EXIT_OK
                } else {
                    EXIT_CHECK_FAILURE
                }
            }
            Err(e) => {
                eprintln!("report: {e:#}");
                classify_error(&e)
            }
        },
    };
    if let Err(e) = manifest.write(&cfg.out) {
        eprintln!("manifest: {e:#}");
        return EXIT_CONFIG.max(code);
    }
    code
}

fn classify_error(e: &anyhow::Error) -> u8 {
    let text = format!("{e:#}");
    if text.contains("exceeds") && (text.contains("cap") || text.contains("states")) {
        EXIT_INCOMPLETE
    } else {
        EXIT_CONFIG
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(threads) = cfg.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    ExitCode::from(run(&cfg))
}
