//! `suitein`: simulate multi-device IMU data, train the shared/private
//! odometry network, evaluate trajectories and plot them.

mod data;
mod error;
mod eval;
mod plot;
mod run;
mod simulate;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "suitein",
    version,
    about = "Multi-device inertial odometry toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Simulate(simulate::SimulateArgs),
    /// Train a model on a dataset's train split.
    Train(train::TrainArgs),
    /// Reconstruct and score trajectories for one split.
    Eval(eval::EvalArgs),
    /// Render a predicted trajectory over ground truth as SVG.
    Plot(plot::PlotArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Plot(a) => plot::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
