//! Command-line front end: single simulation runs, parameter sweeps, mesh
//! fixed-point grids, and route inspection.
//!
//! Exit codes: `0` on success, `2` for missing or malformed inputs, `3`
//! when a requested route or region cannot be served by the topology.
//! Verbosity is controlled through `RUST_LOG` (for example,
//! `RUST_LOG=info` prints one line per replication).

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use leosim::congestion::PolicyKind;
use leosim::exp::{self, SweepOpts, SweepVariable};

#[derive(Parser)]
#[command(
    name = "leosim",
    version,
    about = "Datagram routing with congestion-aware forwarding on a polar satellite grid"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all replications of a simulation config and write a CSV report.
    Simulate {
        /// Simulation config file (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerun a config across a range of one variable, comparing policies
    /// on identical traffic.
    Sweep {
        /// Simulation config file (JSON) used as the base of every cell.
        #[arg(long)]
        config: PathBuf,
        /// Config field to sweep.
        #[arg(long, value_parser = ["lambda_in", "n_buffer"])]
        variable: String,
        /// Comma-separated values of the swept field, strictly increasing.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Replications per cell (defaults to the config's value).
        #[arg(long)]
        replications: Option<u32>,
        /// Queue threshold as a fraction of buffer capacity, applied on
        /// buffer sweeps.
        #[arg(long, default_value_t = 0.75)]
        threshold_ratio: f64,
        /// Policy to include (repeatable; default: both).
        #[arg(long = "policy", value_parser = ["threshold", "probabilistic"])]
        policies: Vec<String>,
    },
    /// Solve the queueing fixed point over a grid file and write a CSV
    /// report.
    MeshSolve {
        /// Grid of model inputs (JSON).
        #[arg(long)]
        grid: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the hop-minimal route between two nodes of an idle network.
    Route {
        /// Source node as `plane,slot`.
        #[arg(long)]
        src: String,
        /// Destination node as `plane,slot`.
        #[arg(long)]
        dst: String,
        /// Optional config whose constellation to use (default: the 12x24
        /// polar grid at 600 km).
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out } => exp::cmd_simulate(&config, &out),
        Command::Sweep {
            config,
            variable,
            values,
            out,
            replications,
            threshold_ratio,
            policies,
        } => {
            let variable =
                SweepVariable::parse(&variable).expect("argument values are pre-restricted");
            let policies = policies
                .iter()
                .map(|p| match p.as_str() {
                    "threshold" => PolicyKind::Threshold,
                    _ => PolicyKind::Probabilistic,
                })
                .collect();
            let opts = SweepOpts {
                variable,
                values,
                replications,
                threshold_ratio,
                policies,
            };
            exp::cmd_sweep(&config, &opts, &out)
        }
        Command::MeshSolve { grid, out } => exp::cmd_mesh_solve(&grid, &out),
        Command::Route { src, dst, config } => exp::cmd_route(&src, &dst, config.as_deref()),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
