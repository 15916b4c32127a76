use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wtot::solver::Mode;

mod commands;
mod output;
mod svg;

/// Optimal and worst transport between a density and a discrete measure.
#[derive(Debug, Parser)]
#[command(name = "wtot", version, about)]
struct Cli {
    /// Worker threads; 0 uses every core. 1 gives bit-identical reruns.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Manifest path (default: next to --out, or stderr).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct SolverArgs {
    #[arg(long, value_parser = parse_mode, default_value = "ot")]
    pub mode: Mode,
    #[arg(long, default_value_t = 1e-7)]
    pub epsilon: f64,
    #[arg(long = "max-iter", default_value_t = 100)]
    pub max_iter: usize,
}

#[derive(Debug, Args, Clone)]
pub struct SourceArgs {
    /// Density CSV (`x1,y1,x2,y2,x3,y3,density`) or a POFF template mesh.
    #[arg(long)]
    pub density: PathBuf,
    /// Domain ring CSV (`x,y`); must match the density's support.
    #[arg(long)]
    pub domain: Option<PathBuf>,
    /// Target measure CSV (`x,y,weight`).
    #[arg(long)]
    pub measure: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one transport problem.
    Solve {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Solution JSON (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also render the final diagram.
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long, default_value_t = 800)]
        px: u32,
    },
    /// Compare two groups of subject meshes against a template.
    Cohort {
        /// Template POFF mesh.
        #[arg(long)]
        template: PathBuf,
        /// Directory of group A subject meshes (*.poff).
        #[arg(long = "group-a")]
        group_a: PathBuf,
        /// Directory of group B subject meshes (*.poff).
        #[arg(long = "group-b")]
        group_b: PathBuf,
        #[arg(long = "n-perm", default_value_t = 50_000)]
        n_perm: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-7)]
        epsilon: f64,
        #[arg(long = "max-iter", default_value_t = 100)]
        max_iter: usize,
        /// Result JSON (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-subject table (default: next to --out).
        #[arg(long)]
        costs: Option<PathBuf>,
    },
    /// Brute-force transport costs on a discretized source.
    Oracle {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a solution as SVG.
    Render {
        /// Solution JSON written by `solve`.
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, default_value_t = 800)]
        px: u32,
        /// SVG path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic cohort of disk meshes.
    Synth {
        #[arg(long = "n-subjects", default_value_t = 20)]
        n_subjects: usize,
        #[arg(long, default_value_t = 0.2)]
        amplitude: f64,
        #[arg(long, default_value_t = 0.0)]
        nuisance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "subject")]
        prefix: String,
        /// Also write the flat template mesh here.
        #[arg(long)]
        template: Option<PathBuf>,
        /// Output directory for the subject meshes.
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: wtot::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WT_LOG", "warn"))
        .format_timestamp(None)
        .init();
    if let Err(e) = set_threads(cli.threads) {
        output::report_error(&e);
        return ExitCode::from(1);
    }
    let manifest = cli.manifest;
    let result = match cli.command {
        Command::Solve {
            source,
            solver,
            out,
            svg,
            px,
        } => commands::solve(&source, &solver, out, svg, px, manifest),
        Command::Cohort {
            template,
            group_a,
            group_b,
            n_perm,
            seed,
            epsilon,
            max_iter,
            out,
            costs,
        } => commands::cohort(commands::CohortArgs {
            template,
            group_a,
            group_b,
            n_perm,
            seed,
            epsilon,
            max_iter,
            out,
            costs,
            manifest,
        }),
        Command::Oracle { source, grid, out } => commands::oracle(&source, grid, out, manifest),
        Command::Render { solution, px, out } => commands::render(&solution, px, out, manifest),
        Command::Synth {
            n_subjects,
            amplitude,
            nuisance,
            seed,
            prefix,
            template,
            out,
        } => commands::synth(
            commands::SynthArgs {
                n_subjects,
                amplitude,
                nuisance,
                seed,
                prefix,
                template,
                out,
            },
            manifest,
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            output::report_error(&e);
            ExitCode::from(1)
        }
    }
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> wtot::Result<()> {
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| wtot::Error::InvalidInput(e.to_string()))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_: usize) -> wtot::Result<()> {
    Ok(())
}
