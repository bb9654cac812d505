use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use doacert::commands::{self, Outcome, Overrides};
use doacert::{Archive, CliError, Config, Workflow};

/// Certified domain-of-attraction estimates for non-polynomial systems.
#[derive(Debug, Parser)]
#[command(name = "doacert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// System definition file.
    config: PathBuf,
    /// Enclosure degree, or one per distinct function (comma separated).
    #[arg(long, value_delimiter = ',')]
    degree: Option<Vec<u32>>,
    /// Bisection tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Seed for every sampled check.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the record and the archive.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FromArchive {
    archive: PathBuf,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Stage {
    Approx,
    Fixed,
    Search,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Enclose every transcendental term.
    Approx(Common),
    /// Build the uncertain polynomial system and check trajectory inclusion.
    Substitute {
        #[command(flatten)]
        common: Common,
        /// Which workflow's working box to use.
        #[arg(long, value_enum, default_value = "fixed")]
        workflow: Stage,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Largest certified level of the configured V, with an upper bound.
    CertifyFixed(Common),
    /// Smallest level with a numeric witness of non-decrease.
    UpperBound {
        #[command(flatten)]
        common: Common,
        /// Start of the bisection.
        #[arg(long, default_value_t = 0.0)]
        c_lo: f64,
    },
    /// Search for V maximizing the shape level.
    CertifySearch {
        #[command(flatten)]
        common: Common,
        /// Degree of V.
        #[arg(long)]
        deg_v: Option<u32>,
        /// Maximum number of alternations.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Simulate the true dynamics from the certified set of an archive.
    Validate {
        #[command(flatten)]
        from: FromArchive,
        /// Initial points drawn inside the certified set.
        #[arg(long)]
        samples: Option<usize>,
        /// Seed for the initial points.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-check an archive from scratch.
    Verify(FromArchive),
    /// Write the boundary of the certified set as CSV.
    Boundary {
        #[command(flatten)]
        from: FromArchive,
        /// Number of rays.
        #[arg(long, default_value_t = 360)]
        count: usize,
    },
}

fn load_config(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Config::parse(&text)
}

fn overrides(c: &Common) -> Overrides {
    Overrides {
        degree: c.degree.clone(),
        tol: c.tol,
        seed: c.seed,
        ..Default::default()
    }
}

fn run(cli: Cli) -> Result<(Outcome, PathBuf), CliError> {
    Ok(match cli.command {
        Command::Approx(c) => (commands::approx(&load_config(&c.config)?, &overrides(&c))?, c.out),
        Command::Substitute {
            common,
            workflow,
            samples,
        } => {
            let w = match workflow {
                Stage::Approx => Workflow::Approx,
                Stage::Fixed => Workflow::Fixed,
                Stage::Search => Workflow::Search,
            };
            let ov = Overrides {
                samples,
                ..overrides(&common)
            };
            (
                commands::substitute_cmd(&load_config(&common.config)?, w, &ov)?,
                common.out,
            )
        }
        Command::CertifyFixed(c) => (
            commands::certify_fixed(&load_config(&c.config)?, &overrides(&c))?,
            c.out,
        ),
        Command::UpperBound { common, c_lo } => (
            commands::upper_bound_cmd(&load_config(&common.config)?, &overrides(&common), c_lo)?,
            common.out,
        ),
        Command::CertifySearch { common, deg_v, budget } => {
            let ov = Overrides {
                deg_v,
                budget,
                ..overrides(&common)
            };
            (
                commands::certify_search(&load_config(&common.config)?, &ov)?,
                common.out,
            )
        }
        Command::Validate { from, samples, seed } => {
            let ov = Overrides {
                samples,
                seed,
                ..Default::default()
            };
            (commands::validate(&Archive::load(&from.archive)?, &ov)?, from.out)
        }
        Command::Verify(from) => (commands::verify(&Archive::load(&from.archive)?)?, from.out),
        Command::Boundary { from, count } => (commands::boundary(&Archive::load(&from.archive)?, count)?, from.out),
    })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn emit(outcome: &Outcome, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let command = &outcome.record.command;
    let record = outcome.record_json()?;
    write(&dir.join(format!("{}.json", command)), &record)?;
    if let Some(a) = &outcome.archive {
        write(&dir.join(format!("{}.archive.json", command)), &a.to_json()?)?;
    }
    if let Some(csv) = &outcome.csv {
        write(&dir.join("boundary.csv"), csv)?;
    }
    // a closed pipe on stdout is not an error worth reporting
    let _ = writeln!(std::io::stdout().lock(), "{}", record);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = run(cli).and_then(|(outcome, dir)| emit(&outcome, &dir).map(|_| outcome.exit_code()));
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
