//! Command-line front end for the FD-NOMA small-cell simulator.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use fdnoma_core::baselines::SchedulerPolicy;
use fdnoma_core::config::ScenarioConfig;
use fdnoma_core::sim::{run_replication, run_sweep, SweepAxis};
use fdnoma_sim::{load_config, write_run_outputs, write_sweep_outputs};

#[derive(Parser)]
#[command(
    name = "fdnoma-sim",
    about = "Packet-level simulator for full-duplex NOMA small-cell scheduling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Scenario file (TOML, flat keys matching the configuration fields).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scheduling scheme.
    #[arg(long, default_value = "proposed")]
    scheme: SchedulerPolicy,
    /// Master RNG seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of subframes (overrides the config file).
    #[arg(long)]
    subframes: Option<usize>,
    /// Start from the full-size experiment setup (10 SBSs, 10 users/SBS,
    /// 4000 subframes) instead of the desk-scale defaults.
    #[arg(long)]
    paper_scale: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl CommonOpts {
    fn build_config(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None if self.paper_scale => ScenarioConfig::paper_scale(),
            None => ScenarioConfig::default(),
        };
        if self.paper_scale && self.config.is_some() {
            bail!("--paper-scale cannot be combined with --config; set the fields in the file");
        }
        if let Some(seed) = self.seed {
            cfg.rng_seed = seed;
        }
        if let Some(subframes) = self.subframes {
            cfg.num_subframes = subframes;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one replication and write report.json, topology.json,
    /// metrics.csv, cdf.csv and modes.csv.
    Run {
        #[command(flatten)]
        common: CommonOpts,
        /// Replication index (selects the topology/arrival/fading streams).
        #[arg(long, default_value_t = 0)]
        replication: u64,
    },
    /// Sweep one scenario axis and write sweep.json and summary.csv.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Swept axis: traffic (mean packet size, bits), density (number
        /// of SBSs) or si (self-interference cancellation, dB).
        #[arg(long)]
        axis: SweepAxis,
        /// Axis values, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Replications per value.
        #[arg(long, default_value_t = 5)]
        replications: u64,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            common,
            replication,
        } => {
            let cfg = common.build_config()?;
            let output = run_replication(&cfg, common.scheme, replication)?;
            write_run_outputs(&common.out, &output)?;
            println!(
                "{}: {} users, {} subframes, packet throughput {:.4e} bit/s, modes hd-oma {:.3} fd {:.3} ul-noma {:.3} dl-noma {:.3}",
                common.scheme,
                output.report.num_users,
                output.report.num_subframes,
                output.report.packet_throughput,
                output.report.mode_shares.hd_oma,
                output.report.mode_shares.fd,
                output.report.mode_shares.ul_noma,
                output.report.mode_shares.dl_noma,
            );
            println!("outputs in {}", common.out.display());
        }
        Command::Sweep {
            common,
            axis,
            values,
            replications,
        } => {
            let cfg = common.build_config()?;
            let points = run_sweep(&cfg, axis, &values, replications, common.scheme)?;
            write_sweep_outputs(&common.out, &points)?;
            for p in &points {
                println!(
                    "{} = {}: packet throughput {:.4e} ± {:.2e}, fd+noma share {:.4}",
                    match axis {
                        SweepAxis::Traffic => "packet size",
                        SweepAxis::Density => "SBS count",
                        SweepAxis::Si => "SI cancellation (dB)",
                    },
                    p.axis_value,
                    p.mean_packet_throughput,
                    p.stderr_packet_throughput,
                    p.mean_mode_shares.fd_plus_noma(),
                );
            }
            println!("outputs in {}", common.out.display());
        }
    }
    Ok(())
}
