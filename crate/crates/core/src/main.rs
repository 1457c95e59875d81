use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ads::distill::StrategyKind;
use ads::harness::{export, run_experiment, run_sweep, ExperimentConfig, ExportKind};
use ads::{oracle, AdsError, Result};

#[derive(Parser)]
#[command(name = "ads", version, about = "Adaptive sharpening distillation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write its run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run every strategy under every seed and tabulate final test error.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated, e.g. `ads,me,sh,pl,ns,none`.
        #[arg(long)]
        strategies: String,
        /// Comma-separated integers.
        #[arg(long)]
        seeds: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the oracle property suite.
    Verify,
    /// Print plot-ready CSV from a run or sweep directory.
    Export {
        #[arg(long)]
        run: PathBuf,
        /// One of `curves`, `histograms`, `table`.
        #[arg(long)]
        what: String,
    },
}

fn load_config(path: &Path, output: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if output.is_some() {
        cfg.output_dir = output;
    }
    if cfg.output_dir.is_none() {
        let stem = path
            .file_stem()
            .map_or("run".into(), |s| s.to_string_lossy().into_owned());
        cfg.output_dir = Some(PathBuf::from("runs").join(stem));
    }
    Ok(cfg)
}

fn parse_list<T>(raw: &str, what: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).ok_or_else(|| AdsError::Config(format!("unknown {what} `{s}`"))))
        .collect()
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run { config, output } => {
            let cfg = load_config(&config, output)?;
            let history = run_experiment(&cfg)?;
            let last = history.last();
            println!(
                "epoch {} test_error={} p_bar_1={} m_bar={} -> {}",
                last.epoch,
                last.test_error,
                last.p_bar_1,
                last.m_bar,
                cfg.output_dir.as_deref().unwrap_or(Path::new(".")).display()
            );
            Ok(true)
        }
        Command::Sweep {
            config,
            strategies,
            seeds,
            output,
        } => {
            let cfg = load_config(&config, output)?;
            let kinds = parse_list(&strategies, "strategy", StrategyKind::parse)?;
            let seeds = parse_list(&seeds, "seed", |s| s.parse().ok())?;
            let table = run_sweep(&cfg, &kinds, &seeds)?;
            print!("{}", table.to_text());
            Ok(true)
        }
        Command::Verify => {
            let reports = oracle::run_all()?;
            let mut all = true;
            for r in &reports {
                println!("{r}");
                for c in &r.counterexamples {
                    println!("    counterexample: {c}");
                }
                all &= r.pass;
            }
            println!("{}", if all { "ALL PASS" } else { "SOME FAILED" });
            Ok(all)
        }
        Command::Export { run, what } => {
            let kind = ExportKind::parse(&what)
                .ok_or_else(|| AdsError::Config(format!("unknown export `{what}`; use curves, histograms or table")))?;
            print!("{}", export(&run, kind)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 2 } else { 1 })
        }
    }
}
