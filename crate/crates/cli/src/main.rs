mod report;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use isoshell::analysis::DEFAULT_TOL;
use isoshell::cell::{
    export_obj, generate_corrugation, generate_flat, generate_handle, generate_random, load_cell,
    punch_hole, save_cell, write_obj,
};
use isoshell::optimize::{minimize, MinimizeOptions, StepRule, Termination};
use isoshell::UnitCell;

use report::{analyze, AnalysisReport};

const EXIT_IO: u8 = 1;
const EXIT_AMBIGUOUS: u8 = 2;
const EXIT_STALLED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "isoshell",
    version,
    about = "Effective stiffness and macroscopic isometries of periodic triangulated shells"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a unit cell from a preset and write it as JSON.
    Generate(GenerateArgs),
    /// Compute the effective tensor of one or more cells and count its kernel.
    Analyze(AnalyzeArgs),
    /// Lower the membrane stiffness trace by moving nodal elevations.
    Optimize(OptimizeArgs),
    /// Write a periodically tiled cell as a Wavefront OBJ mesh.
    Export(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Flat,
    Corrugation,
    Random,
    Hole,
    Handle,
}

#[derive(Args)]
struct GenerateArgs {
    preset: Preset,
    #[arg(long, default_value_t = 4)]
    nx: usize,
    #[arg(long, default_value_t = 4)]
    ny: usize,
    /// Elevation amplitude (corrugation, random, hole).
    #[arg(long, default_value_t = 0.3)]
    h: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Height between the two layers of a handle cell.
    #[arg(long, default_value_t = 0.5)]
    gap: f64,
    /// Tube size of a handle cell, as a fraction of the grid spacing.
    #[arg(long, default_value_t = 0.4)]
    tube: f64,
    /// Node indices removed by the hole preset [default: the node at grid (1, 1)].
    #[arg(long, value_delimiter = ',')]
    remove: Vec<usize>,
    /// Output file; the cell goes to standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(required = true)]
    cells: Vec<PathBuf>,
    /// Relative eigenvalue cutoff of the kernel.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Report file; printed to standard output when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Worker threads for batch analysis.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Step {
    /// Barzilai-Borwein initial step.
    Bb,
    /// Last accepted step doubled.
    Adaptive,
}

#[derive(Args)]
struct OptimizeArgs {
    cell: PathBuf,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Box bound on every elevation change.
    #[arg(long)]
    bound: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "bb")]
    step: Step,
    /// Optimized cell.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV trace.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    cell: PathBuf,
    /// Number of copies, `N` or `NxM`.
    #[arg(long, default_value = "1", value_parser = parse_tiles)]
    tiles: [usize; 2],
    /// Mesh file; printed to standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_tiles(s: &str) -> Result<[usize; 2], String> {
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad tile count {t:?}: {e}"))
    };
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok([parse(a)?, parse(b)?]),
        None => {
            let n = parse(s)?;
            Ok([n, n])
        }
    }
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<isoshell::Error> for Failure {
    fn from(e: isoshell::Error) -> Self {
        Failure {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

fn load(path: &Path) -> Result<UnitCell, Failure> {
    load_cell(path).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            serde_json::to_writer_pretty(&mut w, value)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        None => {
            let mut w = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut w, value)?;
            w.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<u8, Failure> {
    let cell = match args.preset {
        Preset::Flat => generate_flat(args.nx, args.ny)?,
        Preset::Corrugation => generate_corrugation(args.nx, args.ny, args.h)?,
        Preset::Random => generate_random(args.nx, args.ny, args.h, args.seed)?,
        Preset::Hole => {
            let base = generate_random(args.nx, args.ny, args.h, args.seed)?;
            let ids: BTreeSet<usize> = if args.remove.is_empty() {
                BTreeSet::from([args.nx + 1])
            } else {
                args.remove.iter().copied().collect()
            };
            punch_hole(&base, &ids)?
        }
        Preset::Handle => generate_handle(args.nx, args.ny, args.gap, args.tube)?,
    };
    let summary = format!(
        "nodes {} bars {} area {}",
        cell.nodes.len(),
        cell.bars.len(),
        cell.area()
    );
    match &args.out {
        Some(path) => {
            save_cell(&cell, path)?;
            println!("{summary}");
        }
        None => {
            write_json(&cell, None)?;
            eprintln!("{summary}");
        }
    }
    Ok(0)
}

fn analyze_one(path: &Path, tol: f64) -> Result<AnalysisReport, Failure> {
    let cell = load(path)?;
    analyze(&cell, path, tol).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    })
}

fn analyze_cmd(args: AnalyzeArgs) -> Result<u8, Failure> {
    if !(args.tol > 0.0 && args.tol < 1.0) {
        return Err(Failure {
            code: EXIT_IO,
            message: format!("--tol must lie in (0, 1), got {}", args.tol),
        });
    }
    let jobs = args.jobs.clamp(1, args.cells.len());
    let mut results: Vec<Option<Result<AnalysisReport, Failure>>> =
        (0..args.cells.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunk = args.cells.len().div_ceil(jobs);
        for (paths, slots) in args.cells.chunks(chunk).zip(results.chunks_mut(chunk)) {
            let tol = args.tol;
            s.spawn(move || {
                for (path, slot) in paths.iter().zip(slots) {
                    *slot = Some(analyze_one(path, tol));
                }
            });
        }
    });
    let reports = results
        .into_iter()
        .map(|r| r.expect("every cell analyzed"))
        .collect::<Result<Vec<_>, _>>()?;

    for r in &reports {
        log::info!(
            "{}: kernel_dim {} gap {:e}{}",
            r.cell.path,
            r.kernel_dim,
            r.gap_ratio,
            if r.is_ambiguous() { " (ambiguous)" } else { "" }
        );
    }
    let ambiguous = reports.iter().any(AnalysisReport::is_ambiguous);
    if let [single] = reports.as_slice() {
        write_json(single, args.report.as_deref())?;
    } else {
        write_json(&reports, args.report.as_deref())?;
    }
    Ok(if ambiguous { EXIT_AMBIGUOUS } else { 0 })
}

fn optimize_cmd(args: OptimizeArgs) -> Result<u8, Failure> {
    let cell = load(&args.cell)?;
    let step = match args.step {
        Step::Bb => StepRule::default(),
        Step::Adaptive => StepRule::Adaptive {
            initial: 1.0,
            growth: 2.0,
        },
    };
    let opts = MinimizeOptions {
        iters: args.iters,
        step,
        bound: args.bound,
        seed: args.seed,
    };
    let (best, trace) = minimize(&cell, &opts)?;
    if let Some(path) = &args.out {
        save_cell(&best, path)?;
    }
    if let Some(path) = &args.log {
        trace.save_csv(path)?;
    }
    let first = trace.iterates.first().expect("initial iterate");
    let last = trace.iterates.last().expect("initial iterate");
    println!(
        "objective {:e} -> {:e} ratio {:e} iterations {} max_dz {:e} termination {:?}",
        first.objective,
        last.objective,
        trace.reduction(),
        last.iter,
        last.max_dz,
        trace.termination
    );
    Ok(if trace.termination == Termination::Stalled {
        EXIT_STALLED
    } else {
        0
    })
}

fn export_cmd(args: ExportArgs) -> Result<u8, Failure> {
    let cell = load(&args.cell)?;
    match &args.out {
        Some(path) => export_obj(&cell, args.tiles, path)?,
        None => write_obj(&cell, args.tiles, &mut std::io::stdout().lock())?,
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_IO)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Optimize(a) => optimize_cmd(a),
        Command::Export(a) => export_cmd(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
