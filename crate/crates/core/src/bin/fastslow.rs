use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fastslow::harness::{self, Command, ExperimentConfig, RunContext};

#[derive(Parser)]
#[command(
    name = "fastslow",
    version,
    about = "Fast-slow random ODEs on compact Lie groups"
)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, env = "FASTSLOW_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true, env = "FASTSLOW_SEED")]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "FASTSLOW_WORKERS")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "FASTSLOW_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Terminal slow states of the multiscale system.
    Simulate,
    /// Weak errors against the limit over eps_grid, with a rate fit.
    Converge,
    /// Empirical W1 against the limit over eps_grid, with the sampling floor.
    Wasserstein,
    /// Poisson solutions, averaged matrix and effective equation.
    Poisson,
    /// Bracket closure of the fast fields.
    Hormander,
    /// Law of large numbers for the fast time average.
    Lln,
    /// Itô-reduction identity.
    Identity,
    /// Backward-equation check on the limit equation.
    Backward,
    /// Built-in presets.
    Preset {
        #[command(subcommand)]
        action: PresetCmd,
    },
}

#[derive(Subcommand)]
enum PresetCmd {
    List,
    Show { name: String },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let command = match cli.command {
        Cmd::Preset { action } => {
            return match action {
                PresetCmd::List => {
                    print!("{}", harness::preset_list());
                    ExitCode::SUCCESS
                }
                PresetCmd::Show { name } => match harness::preset_show(&name) {
                    Ok(text) => {
                        print!("{text}");
                        ExitCode::SUCCESS
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        ExitCode::from(1)
                    }
                },
            };
        }
        Cmd::Simulate => Command::Simulate,
        Cmd::Converge => Command::Converge,
        Cmd::Wasserstein => Command::Wasserstein,
        Cmd::Poisson => Command::Poisson,
        Cmd::Hormander => Command::Hormander,
        Cmd::Lln => Command::Lln,
        Cmd::Identity => Command::Identity,
        Cmd::Backward => Command::Backward,
    };
    let Some(path) = cli.config else {
        eprintln!("error: --config is required for `{}`", command.name());
        return ExitCode::from(1);
    };
    let config = match ExperimentConfig::load(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let workers = cli.workers.or(config.workers);
    let ctx = RunContext::new(config, cli.seed, cli.out);
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = workers {
        pool = pool.num_threads(k.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = pool.install(|| harness::execute(command, &ctx));
    match &result {
        Ok(outcome) => print!("{}", outcome.report),
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(harness::exit_code(&result) as u8)
}
