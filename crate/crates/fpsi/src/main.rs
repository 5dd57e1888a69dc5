use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fpsi::app::{self, MmsOptions, EXIT_OK, EXIT_USAGE};
use fpsi_core::timestepper::Scheme;

#[derive(Parser)]
#[command(name = "fpsi", version, about = "Coupled free-flow/poroelastic FEM solver with energy certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a configured problem and write the certificate, VTK and manifest.
    Run {
        config: PathBuf,
        /// Exit with status 3 when any certificate flag fails.
        #[arg(long)]
        strict: bool,
    },
    /// Convergence study on a manufactured solution.
    Mms {
        /// smooth-polynomial, smooth-trig or interface-compatible-trig
        case: String,
        /// Number of mesh levels, doubling from --coarsest.
        levels: usize,
        #[arg(long, default_value = "mms-out")]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        coarsest: usize,
        #[arg(long, default_value = "implicit-midpoint", value_parser = parse_scheme)]
        scheme: Scheme,
        #[arg(long, default_value_t = 2)]
        pore_degree: usize,
        /// Exit with status 3 when an observed rate falls short of the expected one.
        #[arg(long)]
        strict: bool,
    },
    /// Compute the constant table for the configured mesh sequence.
    Constants { config: PathBuf },
    /// Evaluate the small-data condition and the critical data scale.
    CheckSmallData {
        config: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Check a mesh file against the mesh rules.
    ValidateMesh { path: PathBuf },
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    Scheme::parse(s).ok_or_else(|| format!("unknown scheme '{s}' (implicit-euler or implicit-midpoint)"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let mut stdout = std::io::stdout().lock();
    let out: &mut dyn std::io::Write = &mut stdout;
    let result = match &cli.command {
        Command::Run { config, strict } => app::cmd_run(config, *strict, out),
        Command::Mms {
            case,
            levels,
            out: dir,
            coarsest,
            scheme,
            pore_degree,
            strict,
        } => {
            let opts = MmsOptions {
                out_dir: dir.clone(),
                coarsest: *coarsest,
                scheme: *scheme,
                pore_degree: *pore_degree,
                strict: *strict,
            };
            app::cmd_mms(case, *levels, &opts, out)
        }
        Command::Constants { config } => app::cmd_constants(config, out),
        Command::CheckSmallData { config, strict } => app::cmd_check_small_data(config, *strict, out),
        Command::ValidateMesh { path } => app::cmd_validate_mesh(path, out),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
