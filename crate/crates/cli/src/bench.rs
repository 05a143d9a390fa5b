use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use jigsaw_core::ingest::{add_noise, scramble_type2, slice, Image, TypeTag};
use jigsaw_core::metrics::{score, FramePolicy};
use jigsaw_core::pipeline::solve_puzzle;
use rayon::prelude::*;

use crate::report::{write_rows, ReportRow};
use crate::{write_json, PuzzleType, SolverArgs};

#[derive(Args)]
pub struct BenchArgs {
    /// Directory of images; unreadable files are skipped.
    images: PathBuf,
    /// CSV file for per-run and average rows.
    #[arg(long, short)]
    out: PathBuf,
    /// Also write the rows as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long = "type", value_enum, default_value = "1")]
    puzzle_type: PuzzleType,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 28)]
    piece_px: usize,
    /// Noise standard deviations to sweep, 0..65535 scale.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    noise_grid: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    /// Seed per run; defaults to 0, 1, ... runs-1.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

pub fn run(args: &BenchArgs) -> Result<()> {
    let cfg = args.solver.resolve()?;
    let seeds: Vec<u64> = if args.seeds.is_empty() {
        (0..args.runs as u64).collect()
    } else {
        args.seeds.clone()
    };
    if seeds.is_empty() || args.noise_grid.is_empty() {
        bail!("need at least one run and one noise level");
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&args.images)
        .with_context(|| format!("reading {}", args.images.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut images = Vec::new();
    for path in paths {
        match Image::load(&path) {
            Ok(img) if img.width >= args.piece_px && img.height >= args.piece_px => {
                let name = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                images.push((name, img.center_crop(args.piece_px)));
            }
            Ok(_) => log::warn!("skipping {}: smaller than one piece", path.display()),
            Err(e) => log::warn!("skipping {}: {e}", path.display()),
        }
    }
    if images.is_empty() {
        bail!("no usable images in {}", args.images.display());
    }

    let type_tag = TypeTag::from(args.puzzle_type);
    let jobs: Vec<(usize, f64, usize)> = (0..images.len())
        .flat_map(|i| {
            let seeds = &seeds;
            args.noise_grid
                .iter()
                .flat_map(move |&sigma| (0..seeds.len()).map(move |r| (i, sigma, r)))
        })
        .collect();
    let results: Vec<Option<ReportRow>> = jobs
        .par_iter()
        .map(|&(i, sigma, r)| {
            let (name, img) = &images[i];
            let seed = seeds[r];
            let started = Instant::now();
            let solved = (|| -> jigsaw_core::Result<_> {
                let mut bundle = slice(img, args.piece_px, seed)?;
                if type_tag == TypeTag::Type2 {
                    bundle = scramble_type2(&bundle, seed);
                }
                let bundle = add_noise(&bundle, sigma, seed);
                let solution = solve_puzzle(&bundle, &cfg, None)?;
                Ok((bundle, solution))
            })();
            match solved {
                Ok((bundle, solution)) => {
                    let truth = bundle.truth.as_ref().expect("fresh bundles carry truth");
                    let report = score(&solution.assembly, Some(&solution.components()), &bundle.spec, truth, type_tag, FramePolicy::Best);
                    let mut row = ReportRow::single(
                        name,
                        type_tag,
                        cfg.mode,
                        sigma,
                        &report,
                        solution.state.iterations(),
                        started.elapsed().as_secs_f64(),
                    );
                    row.run = seed.to_string();
                    Some(row)
                }
                Err(e) => {
                    log::warn!("{name} sigma {sigma} seed {seed}: {e}");
                    None
                }
            }
        })
        .collect();
    if results.iter().all(Option::is_none) {
        bail!("every run failed");
    }

    let mut rows = Vec::new();
    for cell in results.chunks(seeds.len()) {
        let done: Vec<ReportRow> = cell.iter().flatten().cloned().collect();
        if done.is_empty() {
            continue;
        }
        let avg = ReportRow::average(&done);
        println!(
            "{:<20} sigma {:>7}: direct {:.4} neighbor {:.4} largest {:.4} perfect {:.2} ({:.2}s/run)",
            avg.image, avg.sigma, avg.direct, avg.neighbor, avg.largest, avg.perfect, avg.seconds
        );
        rows.extend(done);
        rows.push(avg);
    }
    write_rows(&args.out, &rows)?;
    if let Some(p) = &args.json {
        write_json(p, &rows)?;
    }
    Ok(())
}
