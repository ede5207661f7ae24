use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use incomedyn_cli::config::{ConfigError, RunConfig};
use incomedyn_cli::{execute, replay, CliError, Task};

/// Income-class kinetics with conservation-constrained noise.
#[derive(Parser, Debug)]
#[command(name = "incomedyn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump payment probabilities and transition coefficients as CSV.
    Coefficients {
        /// Also dump the tridiagonal noise-correction matrix.
        #[arg(long)]
        matrix_a: bool,
    },
    /// Relax to the stationary distribution with total income --mu.
    Equilibrate,
    /// Integrate one noisy trajectory from the equilibrium at --mu.
    Simulate,
    /// Run a realization ensemble and report the correlations.
    Ensemble,
    /// Run ensembles over a grid of initial incomes.
    Sweep,
    /// Produce every table and figure preset.
    Figures,
    /// Re-run a recorded manifest; flags given here override its values.
    Replay { manifest: PathBuf },
}

/// Flags override the config file, which overrides the defaults.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    n: Option<String>,
    #[arg(long, global = true)]
    delta_r: Option<String>,
    #[arg(long, global = true)]
    s_unit: Option<String>,
    #[arg(long, global = true)]
    gamma: Option<String>,
    #[arg(long, global = true)]
    dt: Option<String>,
    #[arg(long, global = true)]
    steps: Option<String>,
    #[arg(long, global = true)]
    realizations: Option<String>,
    /// Initial total income.
    #[arg(long, global = true)]
    mu: Option<String>,
    #[arg(long, global = true)]
    mu_lo: Option<String>,
    #[arg(long, global = true)]
    mu_hi: Option<String>,
    #[arg(long, global = true)]
    mu_points: Option<String>,
    /// Keep total income fixed as well as the population.
    #[arg(long, global = true)]
    conserve_income: bool,
    #[arg(long, global = true)]
    positivity_eps: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    stride: Option<String>,
    #[arg(long, global = true)]
    burn_in: Option<String>,
    /// truncate | clip
    #[arg(long, global = true)]
    sampling: Option<String>,
    /// se | sd
    #[arg(long, global = true)]
    spread: Option<String>,
    /// parallel | sequential
    #[arg(long, global = true)]
    execution: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), ConfigError> {
        let pairs = [
            ("n", &self.n),
            ("delta_r", &self.delta_r),
            ("s_unit", &self.s_unit),
            ("gamma", &self.gamma),
            ("dt", &self.dt),
            ("steps", &self.steps),
            ("realizations", &self.realizations),
            ("mu0", &self.mu),
            ("mu_lo", &self.mu_lo),
            ("mu_hi", &self.mu_hi),
            ("mu_points", &self.mu_points),
            ("positivity_eps", &self.positivity_eps),
            ("seed", &self.seed),
            ("stride", &self.stride),
            ("burn_in", &self.burn_in),
            ("sampling", &self.sampling),
            ("spread", &self.spread),
            ("execution", &self.execution),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.conserve_income {
            cfg.conserve_income = true;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(())
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let task = match cli.command {
        Command::Replay { manifest } => {
            return replay(&manifest, |cfg| {
                if let Some(path) = &cli.overrides.config {
                    cfg.apply_file(path)?;
                }
                cli.overrides.apply(cfg)
            });
        }
        Command::Coefficients { matrix_a } => Task::Coefficients { matrix_a },
        Command::Equilibrate => Task::Equilibrate,
        Command::Simulate => Task::Simulate,
        Command::Ensemble => Task::Ensemble,
        Command::Sweep => Task::Sweep,
        Command::Figures => Task::Figures,
    };
    let mut cfg = match &cli.overrides.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg)?;
    execute(&task, &cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(written) => {
            for path in written {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
