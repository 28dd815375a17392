use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ulrot::GradientMode;
use ulrot_cli::run::{cmd_eval, cmd_gridsearch, cmd_solve, Options, EXIT_INPUT};

/// Unbalanced low-rank optimal transport solvers
#[derive(Parser, Debug)]
#[command(name = "ulrot", version, about)]
struct Cli {
    /// Worker threads for grid search (default: all cores)
    #[arg(long, global = true, env = "ULROT_THREADS")]
    threads: Option<usize>,

    /// Write the per-iteration trace as trace.csv next to result.json
    #[arg(long, global = true)]
    emit_plot_data: bool,

    /// Gradient formulas: analytic or paper-literal
    #[arg(long, global = true)]
    gradient_mode: Option<GradientMode>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve one problem described by a config file
    Solve { config: PathBuf },
    /// Run the hyperparameter grid from a config file
    Gridsearch { config: PathBuf },
    /// Evaluate saved factors (Q.bin, R.bin, g.bin) against a config's data
    Eval { factors: PathBuf, data: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT as u8 } else { 0 });
        }
    };
    let opts = Options { threads: cli.threads, emit_plot_data: cli.emit_plot_data, gradient_mode: cli.gradient_mode };
    let outcome = match &cli.command {
        Command::Solve { config } => cmd_solve(config, &opts),
        Command::Gridsearch { config } => cmd_gridsearch(config, &opts),
        Command::Eval { factors, data } => cmd_eval(factors, data, &opts).map(|(code, out)| {
            println!("{out}");
            code
        }),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT as u8)
        }
    }
}
