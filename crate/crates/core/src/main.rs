use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sc_hbf::cli::{
    parse_config, render_csv, run_nrf_sweep, run_snr_sweep, selftest, solve_once,
    ExperimentConfig,
};

/// Hybrid beamforming design and SC-FDE link experiments for broadband
/// mmWave MIMO.
#[derive(Parser)]
#[command(name = "sc-hbf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one hybrid beamforming instance and dump the channel and the
    /// solution as structured text.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Override the config root seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// BER vs SNR sweep over the configured schemes; writes ber_sweep.csv.
    BerSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the per-point trial count.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// BER vs RF-chain count at the configured SNR; writes nrf_sweep.csv.
    NrfSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run every invariant suite and print a per-suite verdict.
    Selftest {
        /// Root seed of the suites.
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load_config(path: &Path, seed: Option<u64>, trials: Option<usize>) -> sc_hbf::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_out(dir: &Path, name: &str, content: &str) -> sc_hbf::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, content)?;
    Ok(path)
}

fn run() -> sc_hbf::Result<()> {
    match Cli::parse().command {
        Command::Solve { config, out, seed } => {
            let cfg = load_config(&config, seed, None)?;
            let (channel_text, solution_text) = solve_once(&cfg)?;
            let ch_path = write_out(&out, "channel.txt", &channel_text)?;
            let sol_path = write_out(&out, "solution.txt", &solution_text)?;
            println!("wrote {}", ch_path.display());
            println!("wrote {}", sol_path.display());
        }
        Command::BerSweep {
            config,
            out,
            seed,
            trials,
        } => {
            let cfg = load_config(&config, seed, trials)?;
            let (rows, _) = run_snr_sweep(&cfg)?;
            let path = write_out(&out, "ber_sweep.csv", &render_csv(&cfg, &rows))?;
            println!("wrote {} ({} rows)", path.display(), rows.len());
        }
        Command::NrfSweep {
            config,
            out,
            seed,
            trials,
        } => {
            let cfg = load_config(&config, seed, trials)?;
            let (rows, _) = run_nrf_sweep(&cfg)?;
            let path = write_out(&out, "nrf_sweep.csv", &render_csv(&cfg, &rows))?;
            println!("wrote {} ({} rows)", path.display(), rows.len());
        }
        Command::Selftest { seed } => {
            let (outcomes, ok) = selftest(seed);
            for o in &outcomes {
                println!("{}", o.verdict_line());
            }
            if !ok {
                return Err(sc_hbf::Error::Config("selftest failed".into()));
            }
            println!("selftest: all suites passed");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
