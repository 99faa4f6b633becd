//! `nvqsim`: band scans, spectroscopy runs, phase-transition scans, Trotter
//! fidelity sweeps, timing reports and winding numbers.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nvqsim_core::Error;

use config::{ListFlags, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "nvqsim", version, about = "NV-register simulation of a thin-film topological insulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact band structure along ky.
    Bands(Overrides),
    /// Ancilla signal and extracted spectrum for one momentum.
    Spectrum(Overrides),
    /// Extracted bands and gap across field ratios.
    Qpt(Overrides),
    /// Stroboscopic Trotter fidelity and error scaling.
    Fidelity(Overrides),
    /// Duration breakdown of a full run.
    Timing(Overrides),
    /// Berry-phase winding number around a momentum loop.
    Winding(Overrides),
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter { .. } | Error::Nyquist { .. } | Error::DimensionMismatch { .. } => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, o, lists) = match &cli.command {
        Command::Bands(o) => ("bands", o, ListFlags { s: false, n: false }),
        Command::Spectrum(o) => ("spectrum", o, ListFlags { s: false, n: false }),
        Command::Qpt(o) => ("qpt", o, ListFlags { s: true, n: false }),
        Command::Fidelity(o) => ("fidelity", o, ListFlags { s: true, n: true }),
        Command::Timing(o) => ("timing", o, ListFlags { s: false, n: false }),
        Command::Winding(o) => ("winding", o, ListFlags { s: false, n: false }),
    };
    let config = match RunConfig::load(o, lists) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    if let Some(jobs) = o.jobs {
        if jobs == 0 {
            eprintln!("error: invalid parameter `jobs`: jobs ≥ 1 required");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().expect("thread pool configured once");
    }
    let run = match &cli.command {
        Command::Bands(_) => commands::bands(&config),
        Command::Spectrum(_) => commands::spectrum(&config),
        Command::Qpt(_) => commands::qpt(&config),
        Command::Fidelity(_) => commands::fidelity(&config),
        Command::Timing(_) => commands::timing(&config),
        Command::Winding(_) => commands::winding(&config),
    };
    let (mut files, summary) = match run {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    files.push(("config.json".into(), config.to_json() + "\n"));
    if let Err(e) = commands::write_outputs(&o.out, &files) {
        eprintln!("error: writing {}: {e}", o.out.display());
        return ExitCode::from(1);
    }
    println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "command": name, "summary": summary })).expect("serializable"));
    ExitCode::SUCCESS
}
