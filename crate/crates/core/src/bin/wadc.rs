use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use wadc_core::cli::{self, Command, Format};

#[derive(Parser)]
#[command(name = "wadc", version, about = "Delay-aware damping assessment of wide-area control loops")]
struct Args {
    #[command(subcommand)]
    verb: Verb,
    /// JSON run configuration; built-in SMIB defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory (overrides output_dir in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single seed replacing the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Trapezoidal discretization of the plant.
    Discretize,
    /// Swing mode against fixed delay.
    Rootlocus,
    /// Simplified verdict, damping bounds and LMI certificates.
    Assess,
    /// Monte-Carlo closed-loop runs with random delays.
    Simulate,
    /// Replay a PMU packet trace through the concentrator.
    Pdc,
}

#[derive(ValueEnum, Clone, Copy)]
enum FormatArg {
    Csv,
    Doc,
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { cli::EXIT_CONFIG } else { 0 };
            return ExitCode::from(code as u8);
        }
    };
    let command = match args.verb {
        Verb::Discretize => Command::Discretize,
        Verb::Rootlocus => Command::Rootlocus,
        Verb::Assess => Command::Assess,
        Verb::Simulate => Command::Simulate,
        Verb::Pdc => Command::Pdc,
    };
    let format = match args.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Doc => Format::Doc,
    };
    let code = cli::execute(
        command,
        args.config.as_deref(),
        args.out,
        args.seed,
        format,
        &mut std::io::stdout(),
        &mut std::io::stderr(),
    );
    ExitCode::from(code as u8)
}
