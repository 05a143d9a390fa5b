mod bench;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use jigsaw_core::assembly::{trace_lines, Mode, VariantConfig};
use jigsaw_core::ingest::{add_noise, load_bundle, load_truth, save_bundle, scramble_type2, slice, Image, TypeTag};
use jigsaw_core::metrics::{score, FramePolicy};
use jigsaw_core::pipeline::{solve_puzzle, AssemblyFile};
use jigsaw_core::postprocess::render;

use crate::report::{write_rows, ReportRow};

/// Exit code for bad input: unreadable files, malformed bundles, bad flags.
const EXIT_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "jigsaw", version, about = "Square-piece jigsaw puzzle solver")]
struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cut an image into a scrambled puzzle bundle.
    Scramble(ScrambleArgs),
    /// Solve a bundle; writes assembly.json, assembled.png and trace.jsonl.
    Solve(SolveArgs),
    /// Score a solved assembly against the bundle's truth.json.
    Eval(EvalArgs),
    /// Scramble, solve and score every image in a directory.
    Bench(bench::BenchArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PuzzleType {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

impl From<PuzzleType> for TypeTag {
    fn from(t: PuzzleType) -> Self {
        match t {
            PuzzleType::One => TypeTag::Type1,
            PuzzleType::Two => TypeTag::Type2,
        }
    }
}

#[derive(Args)]
struct ScrambleArgs {
    image: PathBuf,
    /// Bundle directory to write.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 28)]
    piece_px: usize,
    #[arg(long = "type", value_enum, default_value = "1")]
    puzzle_type: PuzzleType,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Gaussian noise standard deviation on the 0..65535 scale.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// Centre-crop to a multiple of the piece size instead of failing.
    #[arg(long)]
    crop: bool,
}

/// Solver settings shared by `solve` and `bench`. Flags override the file.
#[derive(Args, Clone)]
struct SolverArgs {
    /// TOML or JSON file with solver settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Mode>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    reject_tol: Option<f64>,
}

impl SolverArgs {
    fn resolve(&self) -> Result<VariantConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                if path.extension().is_some_and(|e| e == "json") {
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                } else {
                    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
                }
            }
            None => VariantConfig::default(),
        };
        if let Some(mode) = self.variant {
            cfg.mode = mode;
        }
        if let Some(k) = self.max_iters {
            cfg.max_iters = k;
        }
        if let Some(tol) = self.reject_tol {
            cfg.reject_tol = tol;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SolveArgs {
    bundle: PathBuf,
    /// Output directory (default: the bundle directory).
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Also print each iteration record to stdout.
    #[arg(long)]
    trace: bool,
    /// Distance table cache; reused when it matches the bundle.
    #[arg(long)]
    cache_distances: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    bundle: PathBuf,
    /// Solver output (default: <bundle>/assembly.json).
    #[arg(long)]
    assembly: Option<PathBuf>,
    /// Score Type-2 results in the truth frame only.
    #[arg(long)]
    strict_frame: bool,
    /// Write the report as JSON here.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the report as a CSV row here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn scramble(args: &ScrambleArgs) -> Result<()> {
    let image = Image::load(&args.image)?;
    let image = if args.crop { image.center_crop(args.piece_px) } else { image };
    let mut bundle = slice(&image, args.piece_px, args.seed)?;
    if args.puzzle_type == PuzzleType::Two {
        bundle = scramble_type2(&bundle, args.seed);
    }
    if args.noise_sigma > 0.0 {
        bundle = add_noise(&bundle, args.noise_sigma, args.seed);
    }
    save_bundle(&bundle, &args.out)?;
    println!(
        "{} pieces ({} rows x {} cols, {} px), {:?}, seed {}, noise sigma {} -> {}",
        bundle.pieces.len(),
        bundle.spec.rows,
        bundle.spec.cols,
        bundle.spec.piece_px,
        bundle.type_tag,
        bundle.seed,
        bundle.noise_sigma,
        args.out.display()
    );
    Ok(())
}

fn solve(args: &SolveArgs) -> Result<()> {
    let cfg = args.solver.resolve()?;
    let bundle = load_bundle(&args.bundle)?;
    let out = args.out.clone().unwrap_or_else(|| args.bundle.clone());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let solution = solve_puzzle(&bundle, &cfg, args.cache_distances.as_deref())?;

    let trace = trace_lines(&solution.state.history);
    if args.trace {
        print!("{trace}");
    }
    std::fs::write(out.join("trace.jsonl"), &trace).context("writing trace.jsonl")?;
    let file = AssemblyFile::new(&solution, bundle.type_tag);
    write_json(&out.join("assembly.json"), &file)?;
    render(&solution.assembly, &bundle.pieces).save_png(&out.join("assembled.png"))?;

    let st = &solution.state;
    println!(
        "variant {}: {} iterations, converged {}, weighted L0 {:.4}{}",
        st.variant,
        st.iterations(),
        st.converged,
        st.l0_cost,
        if solution.cache_hit { ", distances from cache" } else { "" }
    );
    if let Some(h) = &st.hybrid {
        println!(
            "hybrid: kept {} (free L0 {:.4}, objective {:.4}; constrained L0 {:.4}, objective {:.4})",
            h.winner, h.free_l0, h.free_objective, h.constrained_l0, h.constrained_objective
        );
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn eval(args: &EvalArgs) -> Result<()> {
    let bundle = load_bundle(&args.bundle)?;
    let truth = load_truth(&args.bundle, &bundle.spec)?;
    let path = args.assembly.clone().unwrap_or_else(|| args.bundle.join("assembly.json"));
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let file: AssemblyFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if (file.assembly.rows, file.assembly.cols) != (bundle.spec.rows, bundle.spec.cols) {
        bail!(
            "assembly is {}x{} but the bundle is {}x{}",
            file.assembly.rows,
            file.assembly.cols,
            bundle.spec.rows,
            bundle.spec.cols
        );
    }
    let policy = if args.strict_frame { FramePolicy::Strict } else { FramePolicy::Best };
    let r = score(&file.assembly, Some(&file.components), &bundle.spec, &truth, bundle.type_tag, policy);
    let name = args
        .bundle
        .file_name()
        .map_or_else(|| args.bundle.display().to_string(), |n| n.to_string_lossy().into_owned());
    let row = ReportRow::single(&name, bundle.type_tag, file.variant, bundle.noise_sigma, &r, file.iterations, file.seconds);
    println!(
        "direct {:.4}  neighbor {:.4}  largest {:.4}  perfect {}",
        r.direct, r.neighbor, r.largest_component, r.perfect
    );
    if let Some(p) = &args.json {
        write_json(p, &row)?;
    }
    if let Some(p) = &args.csv {
        write_rows(p, std::slice::from_ref(&row))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Scramble(a) => scramble(a),
        Command::Solve(a) => solve(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench::run(a),
    }
}

/// Input problems exit with 2, anything else with 1.
fn exit_code(err: &anyhow::Error) -> u8 {
    use jigsaw_core::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::Fill(_) | E::InconsistentGroups(_) | E::OracleTooLarge { .. } | E::InvalidProblem(_)) => 1,
        Some(_) => EXIT_INPUT,
        None if err.downcast_ref::<std::io::Error>().is_some() || err.downcast_ref::<serde_json::Error>().is_some() => EXIT_INPUT,
        None if err.downcast_ref::<toml::de::Error>().is_some() => EXIT_INPUT,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
