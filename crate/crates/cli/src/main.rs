use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use krasov_cli::{batch_exit_code, run_batch, Command, Overrides};

/// Krasovskii-passivity controller: assumption checks, closed-loop runs and
/// variational audits from scenario files.
#[derive(Debug, Parser)]
#[command(name = "krasov", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Sample assumptions A1 to A3 and write <stem>.check.json.
    Check(Common),
    /// Run the closed loop and write <stem>.trace.csv and <stem>.summary.json.
    Simulate(Common),
    /// Run the prolonged system and write <stem>.variational.csv and .json.
    Variational {
        #[command(flatten)]
        common: Common,
        /// Initial variation, comma separated (defaults to 0.1 e1).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        delta_x0: Option<Vec<f64>>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario files (TOML).
    #[arg(required = true)]
    scenarios: Vec<PathBuf>,
    /// Directory for all outputs, overriding [output].dir.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// Seed for assumption sampling.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn overrides(&self, delta_x0: Option<Vec<f64>>) -> Overrides {
        Overrides {
            out_dir: self.out_dir.clone(),
            dt: self.dt,
            t_end: self.t_end,
            seed: self.seed,
            delta_x0,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KRASOV_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (command, common, delta_x0) = match cli.command {
        Cmd::Check(c) => (Command::Check, c, None),
        Cmd::Simulate(c) => (Command::Simulate, c, None),
        Cmd::Variational { common, delta_x0 } => (Command::Variational, common, delta_x0),
    };
    let outcomes = run_batch(command, &common.scenarios, &common.overrides(delta_x0));
    for o in &outcomes {
        let line = format!("{}: exit {}: {}", o.path.display(), o.code, o.message);
        if o.code == 0 {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    ExitCode::from(batch_exit_code(&outcomes) as u8)
}
