use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedslop_cli::{parse_config, run_experiment, run_sweep, CliError, Result, DATA_DIR_ENV};

#[derive(Parser)]
#[command(name = "fedslop", version, about = "Run federated training experiments from TOML configs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Tiny run for checking a config end to end: at most 5 rounds, 2 clients.
    #[arg(long, global = true)]
    smoke: bool,

    /// Output directory (default: runs/<experiment name>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads shared by seeds, sweep points and clients.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of one config.
    Run { config: PathBuf },
    /// Run a config once per value (or value pair) of the given axes.
    Sweep {
        config: PathBuf,
        /// Config key to vary, e.g. `r`, `alpha`, `method`, `data.clients`. May repeat.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        /// Comma-separated values, one list per `--axis`.
        #[arg(long = "values", required = true)]
        values: Vec<String>,
    },
    /// Parse and check a config without running it.
    Validate { config: PathBuf },
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "sweep".into(), |s| s.to_string_lossy().into_owned())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, CliError::MissingData(_)) {
                eprintln!("hint: {DATA_DIR_ENV} defaults to data/mnist");
            }
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config {
                path: "--workers".into(),
                message: e.to_string(),
            })?;
    }
    match cli.command {
        Command::Validate { config } => {
            let cfg = parse_config(&config)?;
            println!(
                "ok: {} ({}, {} clients, {} rounds, seeds {:?})",
                cfg.name, cfg.method, cfg.data.clients, cfg.rounds, cfg.seeds
            );
        }
        Command::Run { config } => {
            let mut cfg = parse_config(&config)?;
            if cli.smoke {
                cfg = cfg.smoke();
            }
            let out = cli.out.unwrap_or_else(|| Path::new("runs").join(&cfg.name));
            let summary = run_experiment(&cfg, &out)?;
            let (acc, acc_sd) = summary.accuracy();
            let (gn, _) = summary.grad_norm();
            if summary.final_accuracies().is_empty() {
                println!("{}: mean averaged squared gradient norm {gn:.6e}", cfg.name);
            } else {
                println!("{}: final accuracy {acc:.4} ± {acc_sd:.4} over {} seeds", cfg.name, cfg.seeds.len());
            }
            println!("wrote {}", out.display());
        }
        Command::Sweep { config, axes, values } => {
            if axes.len() != values.len() {
                return Err(CliError::Config {
                    path: "--values".into(),
                    message: format!("{} axes but {} value lists", axes.len(), values.len()),
                });
            }
            let text = std::fs::read_to_string(&config).map_err(|e| CliError::Io {
                path: config.clone(),
                source: e,
            })?;
            let pairs: Vec<(String, Vec<String>)> = axes
                .into_iter()
                .zip(values)
                .map(|(a, v)| (a, v.split(',').map(str::to_string).collect()))
                .collect();
            let out = cli.out.unwrap_or_else(|| Path::new("runs").join(format!("{}_sweep", stem(&config))));
            let points = run_sweep(&text, &pairs, cli.smoke, &out)?;
            for p in &points {
                let (m, sd) = if p.summary.final_accuracies().is_empty() {
                    p.summary.grad_norm()
                } else {
                    p.summary.accuracy()
                };
                println!("{}: {m:.4} ± {sd:.4}", p.values.join(", "));
            }
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
