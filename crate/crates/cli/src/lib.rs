//! Command-line front end for interval-outcome average derivative estimation.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::{Command, RunConfig};
use config::{parse_centering, parse_covariate_law, parse_kernel, parse_multiplier, read_config_file, Settings};
use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "intervalad", version, about = "Support-function estimation with interval-censored outcomes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Estimate the identified set from a CSV sample.
    Estimate(CommonArgs),
    /// Estimate and add bootstrap confidence sets.
    Infer(CommonArgs),
    /// Run the Monte Carlo risk experiment.
    Simulate(CommonArgs),
    /// Compute the population set of the simulation design.
    Oracle(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Input CSV with header `y_lower,y_upper,z1,...,zL`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short = 'o')]
    pub output: PathBuf,
    /// Config file of `key = value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long = "h")]
    pub h: Option<f64>,
    #[arg(long)]
    pub htilde: Option<f64>,
    #[arg(long)]
    pub grid_m: Option<usize>,
    /// gaussian | higher_order
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub renormalize: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub bootstrap_draws: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// std_normal | rademacher
    #[arg(long)]
    pub multiplier: Option<String>,
    /// as_displayed | projection
    #[arg(long)]
    pub centering: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<usize>>,
    /// Comma-separated censoring constants.
    #[arg(long, value_delimiter = ',')]
    pub cs: Option<Vec<f64>>,
    /// Comma-separated bandwidths.
    #[arg(long, value_delimiter = ',')]
    pub hs: Option<Vec<f64>>,
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub oracle_draws: Option<usize>,
    #[arg(long)]
    pub e_max: Option<f64>,
    /// truncated_normal | standard_normal
    #[arg(long)]
    pub covariate_law: Option<String>,
}

impl CommonArgs {
    fn flag_settings(&self) -> CliResult<Settings> {
        Ok(Settings {
            h: self.h,
            htilde: self.htilde,
            grid_m: self.grid_m,
            kernel: self.kernel.as_deref().map(parse_kernel).transpose()?,
            renormalize: self.renormalize,
            seed: self.seed,
            bootstrap_draws: self.bootstrap_draws,
            alpha: self.alpha,
            multiplier: self.multiplier.as_deref().map(parse_multiplier).transpose()?,
            centering: self.centering.as_deref().map(parse_centering).transpose()?,
            reps: self.reps,
            ns: self.ns.clone(),
            cs: self.cs.clone(),
            hs: self.hs.clone(),
            c: self.c,
            oracle_draws: self.oracle_draws,
            e_max: self.e_max,
            covariate_law: self.covariate_law.as_deref().map(parse_covariate_law).transpose()?,
        })
    }
}

/// Resolves the parsed command line into a [`RunConfig`] and the thread count.
pub fn resolve(cli: Cli) -> CliResult<(RunConfig, Option<usize>)> {
    let (command, args) = match cli.command {
        CliCommand::Estimate(a) => (Command::Estimate, a),
        CliCommand::Infer(a) => (Command::Infer, a),
        CliCommand::Simulate(a) => (Command::Simulate, a),
        CliCommand::Oracle(a) => (Command::Oracle, a),
    };
    let file = match &args.config {
        Some(p) => Settings::from_map(&read_config_file(p)?)?,
        None => Settings::default(),
    };
    let settings = file.overridden_by(args.flag_settings()?);
    Ok((
        RunConfig {
            command,
            input: args.input.clone(),
            output: args.output.clone(),
            settings,
        },
        args.threads,
    ))
}

/// Runs a resolved configuration, optionally inside a dedicated thread pool.
pub fn execute(config: &RunConfig, threads: Option<usize>) -> CliResult<()> {
    match threads {
        None => commands::run(config),
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            pool.install(|| commands::run(config))
        }
    }
}
