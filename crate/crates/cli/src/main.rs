//! `cfverify` command-line front end.
//!
//! Exit codes: 0 pass, 1 fail, 2 numeric failure, 3 configuration error.
//! Results go to stdout as JSON or CSV; a one-line summary goes to stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cfverify::ensemble::SweepPoint;
use cfverify::Direction;

#[derive(Parser, Debug)]
#[command(name = "cfverify", version, about = "Characteristic-function safety verification of ReLU networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the safety constraint(s) of a problem file.
    Verify(Common),
    /// Write per-layer CDF curves as CSV.
    Propagate(PropagateArgs),
    /// Maximal safe threshold r for the first constraint.
    Quantile(QuantileArgs),
    /// CF estimate against Monte-Carlo for the first constraint.
    Compare(Common),
    /// Random-network accuracy/runtime sweep over (h, N, M) settings.
    Sweep(SweepArgs),
}

/// Problem file plus overrides of its fields.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Problem JSON file.
    pub config: PathBuf,
    /// HT step h.
    #[arg(long)]
    pub ht_step: Option<f64>,
    /// HT half-width M (2M+1 nodes).
    #[arg(long)]
    pub ht_terms: Option<usize>,
    /// Frequency grid points N (rounded up to odd).
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Frequency cutoff t_max.
    #[arg(long)]
    pub cutoff: Option<f64>,
    /// Risk level p.
    #[arg(long)]
    pub risk: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte-Carlo sample count.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Args, Debug)]
pub struct PropagateArgs {
    #[command(flatten)]
    pub common: Common,
    /// CSV output path (stdout when absent).
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Comma-separated 0-based components to keep.
    #[arg(long, value_delimiter = ',')]
    pub components: Option<Vec<usize>>,
    #[arg(long, default_value_t = -5.0, allow_negative_numbers = true)]
    pub x_min: f64,
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    pub x_max: f64,
    #[arg(long, default_value_t = 201)]
    pub x_points: usize,
}

#[derive(Args, Debug)]
pub struct QuantileArgs {
    #[command(flatten)]
    pub common: Common,
    /// Probability p; defaults to the risk level.
    #[arg(long)]
    pub p: Option<f64>,
    /// Defaults to the direction of the first constraint.
    #[arg(long, value_parser = parse_direction)]
    pub direction: Option<Direction>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// `h,N,M` setting; repeatable.
    #[arg(long = "point", default_values_t = [SweepPoint::new(0.5, 10_000, 5000), SweepPoint::new(0.7, 1000, 100)])]
    pub points: Vec<SweepPoint>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// CSV output path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_direction(s: &str) -> Result<Direction, String> {
    match s {
        "le" => Ok(Direction::Le),
        "ge" => Ok(Direction::Ge),
        _ => Err(format!("expected `le` or `ge`, got `{s}`")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Verify(c) => commands::verify(c),
        Command::Propagate(a) => commands::propagate(a),
        Command::Quantile(a) => commands::quantile(a),
        Command::Compare(c) => commands::compare(c),
        Command::Sweep(a) => commands::sweep(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.error);
            ExitCode::from(e.code)
        }
    }
}
