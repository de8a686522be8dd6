use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use zefoz_cli::{parse_config, run, RunError};

/// Clock transitions, lambda systems and EIT spectra of rare-earth ions.
#[derive(Parser)]
#[command(name = "zefoz", version)]
struct Args {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Output file; overrides the `output` key. Standard output if neither is given.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fail(err: RunError) -> ExitCode {
    eprintln!("zefoz: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return fail(RunError::Config(format!("cannot read {}: {e}", args.config.display()))),
    };
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(errs) => {
            let lines: Vec<String> = errs.0.iter().map(|e| format!("{}: {e}", args.config.display())).collect();
            return fail(RunError::Config(lines.join("\n")));
        }
    };
    match run(&cfg, args.config.parent(), args.out.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
