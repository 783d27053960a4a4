//! Command line front end: mesh plumbing, form compilation and the
//! steady/transient solve drivers. Exit codes: 0 success, 1 usage,
//! 2 runtime failure with a diagnostic on standard error.

mod descriptor;
mod run;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "femkit", version, about = "A small automated finite element system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, refine and inspect meshes
    Mesh {
        #[command(subcommand)]
        command: MeshCommand,
    },
    /// Check a form file, print kernel pseudocode, optionally emit IR
    Compile(CompileArgs),
    /// Solve the problem a descriptor names
    Solve(SolveArgs),
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Mesh a unit interval, square or cube
    Generate(GenerateArgs),
    /// Uniformly refine a mesh file
    Refine(RefineArgs),
    /// Print mesh statistics
    Info(InfoArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    /// interval, square or cube
    #[arg(long)]
    pub shape: String,
    /// Cells per axis, comma separated, one entry per dimension
    #[arg(long, value_delimiter = ',', required = true)]
    pub divisions: Vec<usize>,
    /// Mesh file to write
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct RefineArgs {
    /// Mesh file to read
    #[arg(long)]
    pub mesh: PathBuf,
    /// Refinement rounds
    #[arg(long, default_value_t = 1)]
    pub times: usize,
    /// Mesh file to write
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct InfoArgs {
    /// Mesh file to read
    #[arg(long)]
    pub mesh: PathBuf,
}

#[derive(Args)]
pub struct CompileArgs {
    /// Form file
    pub forms: PathBuf,
    /// Override the polynomial degree of non-mixed elements
    #[arg(long)]
    pub degree: Option<usize>,
    /// Write the kernel IR of every form to this JSON file
    #[arg(long, value_name = "PATH")]
    pub emit_ir: Option<PathBuf>,
}

#[derive(Args)]
pub struct SolveArgs {
    /// Problem descriptor (JSON)
    pub problem: PathBuf,
    /// Output path; transient runs number it per step
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Replace the descriptor's mesh source with this mesh file
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Override the polynomial degree of non-mixed elements
    #[arg(long)]
    pub degree: Option<usize>,
    /// Linear solver
    #[arg(long, value_parser = ["cg", "bicgstab", "lu"])]
    pub solver: Option<String>,
    /// Relative tolerance of the linear solver
    #[arg(long)]
    pub rtol: Option<f64>,
    /// Iteration cap of the linear solver
    #[arg(long)]
    pub maxit: Option<usize>,
    /// Assembly worker threads; 0 or 1 is serial
    #[arg(long)]
    pub threads: Option<usize>,
    /// Also write the kernel IR of every form to this JSON file
    #[arg(long, value_name = "PATH")]
    pub emit_ir: Option<PathBuf>,
    /// Reassemble the matrix every transient step even when it is reusable
    #[arg(long)]
    pub no_reuse_matrix: bool,
}

/// Diagnostics chattiness, set once from FEMKIT_LOG.
pub mod log {
    use std::sync::OnceLock;

    #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
    pub enum Level {
        Quiet,
        Info,
        Debug,
    }

    static LEVEL: OnceLock<Level> = OnceLock::new();

    pub fn init(level: Level) {
        let _ = LEVEL.set(level);
    }

    fn level() -> Level {
        *LEVEL.get().unwrap_or(&Level::Info)
    }

    pub fn info(msg: impl AsRef<str>) {
        if level() >= Level::Info {
            eprintln!("{}", msg.as_ref());
        }
    }

    pub fn debug(msg: impl AsRef<str>) {
        if level() >= Level::Debug {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };

    match std::env::var("FEMKIT_LOG") {
        Ok(v) => match v.as_str() {
            "quiet" => log::init(log::Level::Quiet),
            "info" => log::init(log::Level::Info),
            "debug" => log::init(log::Level::Debug),
            other => {
                eprintln!("femkit: FEMKIT_LOG must be quiet, info or debug, not '{other}'");
                return ExitCode::from(1);
            }
        },
        Err(_) => log::init(log::Level::Info),
    }

    let result = match cli.command {
        Command::Mesh { command } => match command {
            MeshCommand::Generate(args) => run::mesh_generate(&args),
            MeshCommand::Refine(args) => run::mesh_refine(&args),
            MeshCommand::Info(args) => run::mesh_info(&args),
        },
        Command::Compile(args) => run::compile(&args),
        Command::Solve(args) => run::solve(&args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("femkit: {e}");
            ExitCode::from(2)
        }
    }
}
