//! Command-line front end: scenario execution, experiment presets, and
//! full chain re-verification.
//!
//! Set `RUST_LOG=info` (or `debug`) for progress logging.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use uavnet_core::ledger::{verify_chain, wire};
use uavnet_core::sim::{self, Scenario};

mod presets_out;

#[derive(Parser)]
#[command(
    name = "uavnet",
    version,
    about = "Multi-cluster UAV identity-management simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file and write report CSVs plus a manifest.
    Run {
        /// Scenario description (JSON).
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a named experiment preset.
    Preset {
        /// One of: robustness_table2, delay_election_fig6a, delay_auth_fig6b,
        /// energy_cluster_fig7a, energy_keylen_fig7b.
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-verify an exported chain file from raw bytes.
    VerifyChain {
        #[arg(long)]
        file: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { scenario, seed, out } => cmd_run(&scenario, seed, &out),
        Cmd::Preset { name, seed, out } => presets_out::cmd_preset(&name, seed, &out),
        Cmd::VerifyChain { file } => cmd_verify_chain(&file),
    }
}

fn cmd_run(path: &Path, seed: Option<u64>, out: &Path) -> ExitCode {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(1);
        }
    };
    let mut scenario: Scenario = match serde_json::from_str(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!(
                "error: {} line {} column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            );
            return ExitCode::from(1);
        }
    };
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    log::info!(
        "running scenario: {} clusters x {} UAVs, {} periods, seed {}",
        scenario.cluster_count,
        scenario.uavs_per_cluster,
        scenario.periods,
        scenario.seed
    );
    let report = match sim::run(&scenario) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match report.write_to_dir(out) {
        Ok(files) => {
            log::info!("wrote {} files to {}", files.len(), out.display());
            println!(
                "ok: {} periods, integrity {}, consensus {}",
                scenario.periods,
                if report.integrity_all_ok() { "ok" } else { "VIOLATED" },
                if report.consistency_ok { "ok" } else { "VIOLATED" },
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: writing outputs: {e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_verify_chain(file: &Path) -> ExitCode {
    let bytes = match std::fs::read(file) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", file.display());
            return ExitCode::from(1);
        }
    };
    let (header, blocks) = match wire::decode_chain_file(&bytes) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("parse error at byte {}: {}", e.offset, e.what);
            return ExitCode::from(1);
        }
    };
    match verify_chain(&header, &blocks) {
        Ok(()) => {
            let txs: usize = blocks.iter().map(|b| b.transactions.len()).sum();
            println!("OK: {} blocks, {txs} transactions verified", blocks.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            match e.tx_index {
                Some(i) => println!("INVALID: block {} tx {i}: {}", e.height, e.reason),
                None => println!("INVALID: block {}: {}", e.height, e.reason),
            }
            ExitCode::from(3)
        }
    }
}
