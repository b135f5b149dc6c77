use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shapesense::ShapeError;

mod commands;
mod config;
mod table;

/// Shape sensing and string-routing design for continuum robots.
#[derive(Debug, Parser)]
#[command(name = "shapesense", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Override the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for study commands (output does not depend on it).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Backbone poses for each coefficient row.
    Shape(commands::ShapeArgs),
    /// String length measurements for each coefficient row.
    Lengths(commands::LengthsArgs),
    /// Recover coefficients from measurement rows.
    Solve(commands::SolveArgs),
    /// Planar anchor tables and the elastic-rod convergence study.
    PlanarStudy(commands::PlanarArgs),
    /// Brute-force routing search over a design space.
    RoutingOpt(commands::RoutingArgs),
    /// Noise amplification over a grid of planar anchor pairs.
    SensitivityMap(commands::MapArgs),
    /// Reconstruction errors on synthetic spatial shapes.
    SpatialStudy(commands::SpatialArgs),
}

/// Raised for configurations outside the admissible workspace.
#[derive(Debug)]
pub struct Inadmissible(pub String);

impl std::fmt::Display for Inadmissible {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "inadmissible configuration: {}", self.0)
    }
}

impl std::error::Error for Inadmissible {}

const EXIT_CONFIG: u8 = 2;
const EXIT_INADMISSIBLE: u8 = 3;
const EXIT_SOLVER: u8 = 4;
const EXIT_USAGE: u8 = 64;

fn shape_error_code(e: &ShapeError) -> u8 {
    match e {
        ShapeError::NotRealizable { .. } => EXIT_INADMISSIBLE,
        ShapeError::SingularDesign { .. }
        | ShapeError::Underdetermined { .. }
        | ShapeError::NonConvergence { .. }
        | ShapeError::ShootingDivergence { .. }
        | ShapeError::LowAcceptance { .. }
        | ShapeError::EmptySamples => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Inadmissible>() {
            return EXIT_INADMISSIBLE;
        }
        if let Some(e) = cause.downcast_ref::<ShapeError>() {
            return shape_error_code(e);
        }
    }
    EXIT_CONFIG
}

pub struct Context {
    pub seed: Option<u64>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.global.jobs {
        anyhow::ensure!(n > 0, "--jobs must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let ctx = Context {
        seed: cli.global.seed,
    };
    match cli.command {
        Command::Shape(a) => commands::shape(&ctx, a),
        Command::Lengths(a) => commands::lengths(&ctx, a),
        Command::Solve(a) => commands::solve(&ctx, a),
        Command::PlanarStudy(a) => commands::planar_study(&ctx, a),
        Command::RoutingOpt(a) => commands::routing_opt(&ctx, a),
        Command::SensitivityMap(a) => commands::sensitivity_map(&ctx, a),
        Command::SpatialStudy(a) => commands::spatial_study(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let e = anyhow::Error::new(ShapeError::SingularDesign {
            aleph: 0.0,
            ratio: 0.0,
        })
        .context("solve");
        assert_eq!(exit_code(&e), EXIT_SOLVER);
        assert_eq!(exit_code(&anyhow::anyhow!("bad key")), EXIT_CONFIG);
        assert_eq!(
            exit_code(&anyhow::Error::new(Inadmissible("row 1".into()))),
            EXIT_INADMISSIBLE
        );
        let e = anyhow::Error::new(ShapeError::NotRealizable {
            string: 0,
            margin: -1.0,
            s: 0.1,
        });
        assert_eq!(exit_code(&e), EXIT_INADMISSIBLE);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
