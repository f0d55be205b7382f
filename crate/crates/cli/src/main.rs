use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rigidlab_cli::{
    cmd_eval, cmd_grid, cmd_leaf, cmd_shock, cmd_verify, configure_threads, emit, CliError, OutputFormat, Overrides,
    Report, RunConfig, Suite, EXIT_USAGE,
};

/// Evaluate the Burgers transform of a seed and check its identities.
#[derive(Parser)]
#[command(name = "rigidlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Seed, e.g. `delta:1`, `eps:0.5`, `exp`, `cauchy:1`, `affine:2,0,1`, `nonholo:1,0.2`.
    #[arg(long)]
    seed: Option<String>,
    /// JSON run configuration; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    common: Common,
    /// `x0:x1:nx,y0:y1:ny`
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve at one point and print the sample as JSON.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        x: f64,
        #[arg(long, allow_hyphen_values = true)]
        y: f64,
    },
    /// Sample a grid and export the field.
    Grid(GridArgs),
    /// Run a verification suite.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
    },
    /// Trace the shock locus inside a grid window.
    Shock(GridArgs),
    /// Export the Beltrami coefficients of a grid.
    Leaf(GridArgs),
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { config: self.config.clone(), seed: self.seed.clone(), out: self.out.clone(), ..Default::default() }
    }
}

impl GridArgs {
    fn overrides(&self) -> Overrides {
        Overrides { grid: self.grid.clone(), format: self.format, ..self.common.overrides() }
    }
}

fn run(cli: Cli) -> Result<i32, CliError> {
    configure_threads()?;
    let (cfg, report): (RunConfig, Report) = match cli.command {
        Command::Eval { common, x, y } => {
            let cfg = RunConfig::load(&common.overrides())?;
            let report = cmd_eval(&cfg, x, y);
            (cfg, report)
        }
        Command::Verify { common, suite } => {
            let cfg = RunConfig::load(&common.overrides())?;
            let report = cmd_verify(&cfg, suite);
            (cfg, report)
        }
        Command::Grid(args) => {
            let cfg = RunConfig::load(&args.overrides())?;
            let report = cmd_grid(&cfg)?;
            (cfg, report)
        }
        Command::Shock(args) => {
            let cfg = RunConfig::load(&args.overrides())?;
            let report = cmd_shock(&cfg)?;
            (cfg, report)
        }
        Command::Leaf(args) => {
            let cfg = RunConfig::load(&args.overrides())?;
            let report = cmd_leaf(&cfg)?;
            (cfg, report)
        }
    };
    emit(&report, cfg.output_path.as_deref())?;
    Ok(report.exit_code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("rigidlab: {e}");
            ExitCode::from(EXIT_USAGE as u8)
        }
    }
}
