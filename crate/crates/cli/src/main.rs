use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mpcorr_cli::verify::{self, Suite};
use mpcorr_cli::{CliError, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mpcorr", version, about = "Margin-propagation correlator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured experiment and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance criteria and print a pass/fail table.
    Verify {
        #[arg(long, default_value = "fast")]
        suite: String,
    },
    /// List experiment names with their default parameters.
    ListExperiments,
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, seed, out } => {
            let mut config = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(out) = out {
                config.output_dir = out;
            }
            let artifacts = mpcorr_cli::execute(&config)?;
            for line in artifacts.summary_lines() {
                println!("{line}");
            }
            println!(
                "wrote {} files to {}",
                artifacts.file_names().count(),
                config.output_dir.display()
            );
            Ok(())
        }
        Command::Verify { suite } => {
            let suite: Suite = suite.parse()?;
            let mut outcomes = Vec::new();
            for criterion in verify::CRITERIA {
                let outcome = criterion.run(suite);
                print!(
                    "{}",
                    verify::format_table(std::slice::from_ref(&outcome))
                        .lines()
                        .next()
                        .unwrap_or("")
                );
                println!();
                outcomes.push(outcome);
            }
            let failed = outcomes.iter().filter(|o| !o.passed).count();
            println!("{}/{} criteria passed", outcomes.len() - failed, outcomes.len());
            if failed > 0 {
                return Err(CliError::Numerical(format!("{failed} criteria failed")));
            }
            Ok(())
        }
        Command::ListExperiments => {
            for &e in Experiment::ALL {
                println!("{:<20} {}", e.name(), e.about());
                println!("{:<20} defaults: {}", "", e.defaults());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mpcorr: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
