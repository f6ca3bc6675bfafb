use std::path::PathBuf;
use std::process::ExitCode;

use bvk_core::homology::set_basis_limit;
use bvk_core::pipeline::{emit_report, parse_spec, run_pipeline, run_until, Format, Stage};
use clap::{Parser, Subcommand};

/// Monomials allowed per basis enumeration for each MiB of budget.
const WORDS_PER_MIB: usize = 4096;
const MEMORY_ENV: &str = "BVK_MEMORY_MB";

const SCHEMA: &str = include_str!("../../../docs/report.schema.json");

#[derive(Parser)]
#[command(name = "bvk", version, about = "Koszul-Tate, Chevalley-Eilenberg and BV computations from problem files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline of a problem file and print the report.
    Run {
        spec: PathBuf,
        /// Write the report to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after this stage.
        #[arg(long)]
        stage: Option<Stage>,
        #[arg(long, default_value = "json")]
        format: Format,
    },
    /// Parse and validate a problem file without running it.
    Check { spec: PathBuf },
    /// Print the JSON schema of run reports.
    Schema,
}

fn memory_budget() -> Result<(), String> {
    match std::env::var(MEMORY_ENV) {
        Ok(v) => {
            let mb: usize = v.trim().parse().map_err(|_| format!("{MEMORY_ENV} must be a whole number of MiB, got `{v}`"))?;
            set_basis_limit(Some(mb.saturating_mul(WORDS_PER_MIB)));
            Ok(())
        }
        Err(_) => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = memory_budget() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match cli.command {
        Command::Schema => {
            print!("{SCHEMA}");
            ExitCode::SUCCESS
        }
        Command::Check { spec } => match parse_spec(&spec) {
            Ok(s) => {
                let names: Vec<&str> = s.pipeline.iter().map(|st| st.name()).collect();
                println!("{}: ok ({})", spec.display(), names.join(" -> "));
                ExitCode::SUCCESS
            }
            Err(errs) => {
                for e in &errs.0 {
                    eprintln!("{}:{e}", spec.display());
                }
                ExitCode::from(1)
            }
        },
        Command::Run { spec, out, stage, format } => {
            let parsed = match parse_spec(&spec) {
                Ok(s) => s,
                Err(errs) => {
                    for e in &errs.0 {
                        eprintln!("{}:{e}", spec.display());
                    }
                    return ExitCode::from(1);
                }
            };
            let report = match stage {
                Some(st) => match run_until(&parsed, st) {
                    Ok(r) => r,
                    Err(e) => {
                        eprintln!("error: {e}");
                        return ExitCode::from(1);
                    }
                },
                None => run_pipeline(&parsed),
            };
            let bytes = emit_report(&report, format);
            match out {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, &bytes) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return ExitCode::from(1);
                    }
                }
                None => print!("{}", String::from_utf8_lossy(&bytes)),
            }
            ExitCode::from(report.exit_code as u8)
        }
    }
}
