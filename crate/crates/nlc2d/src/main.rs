use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlc2d::commands::{self, BiaxialArgs, CliError, CompactnessArgs};
use nlc2d::config::DiagnosticsBlock;
use nlc2d::{read_snapshot, RunConfig};
use nlc2d_core::TestFunction;

/// Nematic liquid crystal flows in two dimensions.
#[derive(Parser)]
#[command(name = "nlc2d", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file
    config: PathBuf,
    /// Overrides of the form section.key=value
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        Ok(RunConfig::load(&self.config, &self.overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Advance one simulation, writing snapshots and an energy CSV
    Run(ConfigArgs),
    /// Run the ε-sweep of the [sweep] block
    Sweep(ConfigArgs),
    /// Print a diagnostics report for a snapshot as JSON
    Diagnose {
        snapshot: PathBuf,
        /// Penalty parameter used for the energy terms
        #[arg(long)]
        eps: Option<f64>,
        /// Radius of the concentration balls
        #[arg(long, default_value_t = 0.1)]
        radius: f64,
        #[arg(long, default_value_t = nlc2d_core::diagnostics::DEFAULT_DELTA0_SQ)]
        delta0_sq: f64,
        /// Exponent of the Hopf norm
        #[arg(long, default_value_t = 1.5)]
        p: f64,
        /// Ball for the Hopf norm and penalty as x,y,r
        #[arg(long, value_delimiter = ',', num_args = 3)]
        ball: Option<Vec<f64>>,
    },
    /// L² and H¹-seminorm distances between two snapshots
    Compare { a: PathBuf, b: PathBuf },
    /// Defect measures and Hopf norms of a bubble family
    DemoCompactness {
        #[arg(long, default_value_t = 512)]
        nx: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.08,0.04,0.02")]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        stretch: f64,
        #[arg(long, value_delimiter = ',', num_args = 2, default_value = "0.5,0.5")]
        center: Vec<f64>,
        #[arg(long, default_value_t = 0.2)]
        inner: f64,
        #[arg(long, default_value_t = 0.4)]
        outer: f64,
        #[arg(long, default_value_t = 0.25)]
        hopf_radius: f64,
        #[arg(long, default_value = "compactness")]
        out: PathBuf,
    },
    /// Rotating frame evolved with both schemes
    DemoBiaxial {
        #[arg(long, default_value_t = 32)]
        nx: usize,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        #[arg(long, default_value_t = 0.01)]
        t_end: f64,
        #[arg(long, default_value_t = 1.0)]
        winding: f64,
        #[arg(long, default_value_t = 0.5)]
        cfl_safety: f64,
        #[arg(long, default_value = "biaxial")]
        out: PathBuf,
    },
    /// Check a configuration and print it with defaults resolved
    ValidateConfig(ConfigArgs),
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run(a) => {
            let out = commands::run(&a.load()?)?;
            println!("{} steps; energy in {}", out.steps, out.energy_csv.display());
        }
        Command::Sweep(a) => {
            let out = commands::sweep(&a.load()?)?;
            println!("{}", out.report);
            if out.failed_members > 0 {
                return Err(CliError::Numerics(format!("{} sweep members failed", out.failed_members)));
            }
        }
        Command::Diagnose { snapshot, eps, radius, delta0_sq, p, ball } => {
            let (ball_center, ball_radius) = match ball.as_deref() {
                Some([x, y, r]) => (Some([*x, *y]), Some(*r)),
                _ => (None, None),
            };
            let opts = DiagnosticsBlock { radius, delta0_sq, p, ball_center, ball_radius, test_function: None };
            println!("{}", commands::diagnose(&snapshot, eps, &opts)?);
        }
        Command::Compare { a, b } => {
            let report = commands::compare(&read_snapshot(&a)?, &read_snapshot(&b)?)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
        }
        Command::DemoCompactness { nx, eps, stretch, center, inner, outer, hopf_radius, out } => {
            let phi = TestFunction { center: (center[0], center[1]), inner, outer };
            println!("{}", commands::demo_compactness(&CompactnessArgs { nx, eps, stretch, phi, hopf_radius, out })?);
        }
        Command::DemoBiaxial { nx, eps, t_end, winding, cfl_safety, out } => {
            println!("{}", commands::demo_biaxial(&BiaxialArgs { nx, eps, t_end, winding, cfl_safety, out })?);
        }
        Command::ValidateConfig(a) => print!("{}", commands::validate_config(&a.load()?)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
