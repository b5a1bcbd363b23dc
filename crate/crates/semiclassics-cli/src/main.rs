//! `semiclassics` command-line runner.
//!
//! Exit codes: 0 when every check passes, 1 on a numerical failure or a failed check,
//! 2 when the configuration is rejected.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "semiclassics", version, about = "Semi-classical mean-field experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Thomas-Fermi minimiser and chemical potential
    TfSolve(Flags),
    /// Bathtub optimality of the Vlasov indicator
    VlasovCheck(Flags),
    /// Weyl asymptotics of spectral projectors
    Weyl(Flags),
    /// Husimi functions of Slater states
    Husimi(Flags),
    /// Wigner transforms
    Wigner(Flags),
    /// Exact phase-space identities
    CheckIdentities(Flags),
    /// Reduced Hartree-Fock energies against Thomas-Fermi
    RhfConverge(Flags),
    /// Lower bound for positive-definite pair interactions
    LiebOxford(Flags),
    /// Exact diagonalisation for two or three particles
    ExactSmall(Flags),
}

#[derive(Args)]
struct Flags {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory, overriding output.dir
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, value_name = "K", default_value_t = 1)]
    threads: usize,
}

impl Command {
    fn split(self) -> (&'static str, Flags) {
        match self {
            Command::TfSolve(f) => ("tf-solve", f),
            Command::VlasovCheck(f) => ("vlasov-check", f),
            Command::Weyl(f) => ("weyl", f),
            Command::Husimi(f) => ("husimi", f),
            Command::Wigner(f) => ("wigner", f),
            Command::CheckIdentities(f) => ("check-identities", f),
            Command::RhfConverge(f) => ("rhf-converge", f),
            Command::LiebOxford(f) => ("lieb-oxford", f),
            Command::ExactSmall(f) => ("exact-small", f),
        }
    }
}

fn main() -> ExitCode {
    let (name, flags) = Cli::parse().command.split();
    let text = match std::fs::read_to_string(&flags.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", flags.config.display());
            return ExitCode::from(2);
        }
    };
    let path = flags.config.display().to_string();
    let setup = match config::parse(&text, name).and_then(|cfg| config::setup(text, cfg)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {path}: {e}");
            return ExitCode::from(2);
        }
    };
    let args = run::RunArgs {
        out: flags.out,
        seed: flags.seed,
        threads: flags.threads,
    };
    match run::run(&setup, &args) {
        Ok(rep) => {
            for c in &rep.checks {
                println!(
                    "{} {}: value={} reference={} error={:e} tol={:e}",
                    if c.pass { "pass" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.reference,
                    c.error,
                    c.tol
                );
            }
            let failed: Vec<&str> = rep.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: {name}: failed criteria: {}", failed.join("; "));
                ExitCode::from(1)
            }
        }
        Err(run::Failure::Schema(e)) => {
            eprintln!("error: {path}: {e}");
            ExitCode::from(2)
        }
        Err(run::Failure::Numerical(m)) => {
            eprintln!("error: {name}: numerical failure: {m}");
            ExitCode::from(1)
        }
    }
}
