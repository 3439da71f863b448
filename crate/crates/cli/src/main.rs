use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use passiv_cli::report::Report;
use passiv_cli::run::{EXIT_FAILURE, EXIT_OK};
use passiv_cli::{parse_problem, run, summary, Command, Flags, ModeArg};

/// Robust stability certificates and passivity-index synthesis for
/// fixed-structure feedback loops.
#[derive(Parser, Debug)]
#[command(name = "passiv", version)]
struct Cli {
    command: Command,
    /// Problem file (JSON).
    #[arg(long)]
    input: PathBuf,
    /// Report file; the JSON goes to stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    tol_gap: Option<f64>,
    #[arg(long)]
    tol_feas: Option<f64>,
    #[arg(long)]
    bisect_tol: Option<f64>,
    #[arg(long)]
    mult_degree: Option<u32>,
    /// Grid-oracle resolution per parameter axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Skip the box-wide stability certificate; check stability at rho* only.
    #[arg(long)]
    direct: bool,
    /// Write every SDP in SDPA sparse format to this directory.
    #[arg(long, value_name = "DIR")]
    dump_sdp: Option<PathBuf>,
    /// `verify`: parameter to check (comma separated); defaults to the grid optimum.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    rho: Option<Vec<f64>>,
    /// `verify`: index to check.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

fn emit(report: &Report, output: Option<&PathBuf>) -> Result<(), String> {
    let json = serde_json::to_string_pretty(report).map_err(|e| e.to_string())? + "\n";
    match output {
        Some(p) => {
            std::fs::write(p, json).map_err(|e| format!("cannot write {}: {e}", p.display()))?;
            print!("{}", summary(report));
        }
        None => {
            eprint!("{}", summary(report));
            print!("{json}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let spec = match parse_problem(&cli.input) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            return ExitCode::from(EXIT_FAILURE as u8);
        }
    };
    let flags = Flags {
        tol_gap: cli.tol_gap,
        tol_feas: cli.tol_feas,
        bisect_tol: cli.bisect_tol,
        mult_degree: cli.mult_degree,
        grid: cli.grid,
        direct: cli.direct,
        dump_sdp: cli.dump_sdp,
        rho: cli.rho,
        mode: cli.mode,
    };
    let out = run(cli.command, &spec, &flags);
    if let Err(e) = emit(&out.report, cli.output.as_ref()) {
        eprintln!("error [io_error]: {e}");
        return ExitCode::from(EXIT_FAILURE as u8);
    }
    if out.exit_code == EXIT_OK {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(out.exit_code as u8)
    }
}
