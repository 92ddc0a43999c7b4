use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tad_cli::{parse_source, print, verify};
use tad_core::{derive, derive_jacobian, ElemFuncSpec};

/// Derive element-wise expressions for the derivatives of element-wise
/// defined tensor functions, and verify them numerically.
#[derive(Parser)]
#[command(name = "tad", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the adjoint expression of every argument.
    Derive {
        /// Input file (shape declarations plus one definition).
        file: PathBuf,
    },
    /// Print the Jacobian of the function with respect to one argument as a
    /// new element-wise definition.
    Jacobian {
        file: PathBuf,
        /// Argument name to differentiate with respect to.
        #[arg(long)]
        arg: String,
    },
    /// Check every derived adjoint and Jacobian against reference
    /// evaluation and finite differences on random inputs.
    Verify {
        file: PathBuf,
        /// Number of random trials.
        #[arg(long, default_value_t = 5)]
        trials: usize,
        /// Maximum tolerated relative error (absolute below the floor).
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        /// Seed for the random inputs.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Emit the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn load(file: &PathBuf) -> Result<ElemFuncSpec, String> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| format!("cannot read {}: {e}", file.display()))?;
    let spec =
        parse_source(&text).map_err(|e| format!("{}: {e}", file.display()))?;
    for w in spec.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(spec)
}

fn run() -> Result<ExitCode, String> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Derive { file } => {
            let spec = load(&file)?;
            let d = derive(&spec).map_err(|e| e.to_string())?;
            print!("{}", print::print_derivatives(&d));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Jacobian { file, arg } => {
            let spec = load(&file)?;
            let p = spec
                .arg_index(&arg)
                .ok_or_else(|| format!("`{arg}` is not an argument of {}", spec.name()))?;
            let jac = derive_jacobian(&spec, p).map_err(|e| e.to_string())?;
            print!("{}", print::print_spec(&jac));
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Verify { file, trials, tol, seed, json } => {
            let spec = load(&file)?;
            let report = verify::verify(&spec, trials, tol, seed).map_err(|e| e.to_string())?;
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.render_text());
            }
            Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
