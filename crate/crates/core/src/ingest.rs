//! Images in, puzzle bundles out: slicing, scrambling, noise and the
//! on-disk bundle format.
//!
//! A bundle directory holds `manifest.json`, one 16-bit RGB
//! `piece_<id>.png` per piece and optionally `truth.json`. Loading a bundle
//! for solving never touches `truth.json`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::{rotate_piece, Piece, PuzzleSpec, Rotation, INTENSITY_MAX};

/// An RGB image on the 16-bit intensity scale, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u16; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<[u16; 3]>) -> Self {
        assert_eq!(pixels.len(), width * height);
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn pixel(&self, row: usize, col: usize) -> [u16; 3] {
        self.pixels[row * self.width + col]
    }

    /// Loads PNG or binary PPM, 8 or 16 bit. 8-bit values are scaled by 257.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let rgb = img.to_rgb16();
        let (width, height) = (rgb.width() as usize, rgb.height() as usize);
        let pixels = rgb.pixels().map(|p| p.0).collect();
        Ok(Self::new(width, height, pixels))
    }

    /// Writes a 16-bit RGB PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let buf = image::ImageBuffer::<image::Rgb<u16>, Vec<u16>>::from_fn(
            self.width as u32,
            self.height as u32,
            |x, y| image::Rgb(self.pixel(y as usize, x as usize)),
        );
        buf.save(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Largest centred crop whose sides are multiples of `piece_px`.
    pub fn center_crop(&self, piece_px: usize) -> Image {
        let w = self.width / piece_px * piece_px;
        let h = self.height / piece_px * piece_px;
        let (x0, y0) = ((self.width - w) / 2, (self.height - h) / 2);
        let pixels = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .map(|(r, c)| self.pixel(y0 + r, x0 + c))
            .collect();
        Image::new(w, h, pixels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeTag {
    Type1,
    Type2,
}

/// Where a scrambled piece belongs: its cell and the quarter turns that were
/// applied to it when scrambling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub row: usize,
    pub col: usize,
    pub rotation: Rotation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PuzzleBundle {
    pub spec: PuzzleSpec,
    /// Pieces in scrambled order; `pieces[k].id == k`.
    pub pieces: Vec<Piece>,
    /// Indexed by piece id.
    pub truth: Option<Vec<TruthEntry>>,
    pub type_tag: TypeTag,
    pub seed: u64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    spec: PuzzleSpec,
    type_tag: TypeTag,
    seed: u64,
    noise_sigma: f64,
    piece_count: usize,
}

/// Cuts `image` into `piece_px` squares and shuffles them with `seed`.
pub fn slice(image: &Image, piece_px: usize, seed: u64) -> Result<PuzzleBundle> {
    if piece_px < 2 || !image.width.is_multiple_of(piece_px) || !image.height.is_multiple_of(piece_px) || image.width == 0 || image.height == 0 {
        return Err(Error::DimensionMismatch {
            width: image.width,
            height: image.height,
            piece_px,
        });
    }
    let spec = PuzzleSpec::new(image.height / piece_px, image.width / piece_px, piece_px)?;
    let n = spec.piece_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut pieces = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for (id, &cell) in order.iter().enumerate() {
        let (row, col) = (cell / spec.cols, cell % spec.cols);
        let pixels = (0..piece_px)
            .flat_map(|r| (0..piece_px).map(move |c| (r, c)))
            .map(|(r, c)| image.pixel(row * piece_px + r, col * piece_px + c))
            .collect();
        pieces.push(Piece::new(id, piece_px, pixels)?);
        truth.push(TruthEntry {
            row,
            col,
            rotation: Rotation::NONE,
        });
    }
    Ok(PuzzleBundle {
        spec,
        pieces,
        truth: Some(truth),
        type_tag: TypeTag::Type1,
        seed,
        noise_sigma: 0.0,
    })
}

/// Rotates every piece by an independent uniformly drawn quarter turn.
pub fn scramble_type2(bundle: &PuzzleBundle, seed: u64) -> PuzzleBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7970_6532);
    let rotations: Vec<Rotation> = (0..bundle.pieces.len())
        .map(|_| Rotation::new(rng.gen_range(0..4)))
        .collect();
    apply_rotations(bundle, &rotations)
}

/// Rotates piece `k` by `rotations[k]` and records it in the truth.
pub fn apply_rotations(bundle: &PuzzleBundle, rotations: &[Rotation]) -> PuzzleBundle {
    assert_eq!(rotations.len(), bundle.pieces.len());
    let mut out = bundle.clone();
    for (piece, &q) in out.pieces.iter_mut().zip(rotations) {
        let mut turned = rotate_piece(piece, q.quarter_turns() as u32);
        turned.rotation = Rotation::NONE;
        *piece = turned;
    }
    if let Some(truth) = &mut out.truth {
        for (t, &q) in truth.iter_mut().zip(rotations) {
            t.rotation = t.rotation.compose(q);
        }
    }
    out.type_tag = TypeTag::Type2;
    out
}

/// The raw Gaussian draws `add_noise` uses, per piece, pixel and channel.
pub fn noise_field(bundle: &PuzzleBundle, sigma: f64, seed: u64) -> Vec<Vec<[f64; 3]>> {
    assert!(sigma >= 0.0, "sigma must be non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    bundle
        .pieces
        .iter()
        .map(|p| {
            (0..p.pixels().len())
                .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)])
                .collect()
        })
        .collect()
}

/// Adds i.i.d. Gaussian noise, then clamps to the intensity range and rounds.
pub fn add_noise(bundle: &PuzzleBundle, sigma: f64, seed: u64) -> PuzzleBundle {
    let mut out = bundle.clone();
    out.noise_sigma = sigma;
    if sigma == 0.0 {
        return out;
    }
    let field = noise_field(bundle, sigma, seed);
    for (piece, noise) in out.pieces.iter_mut().zip(field) {
        for (px, n) in piece.pixels_mut().iter_mut().zip(noise) {
            for c in 0..3 {
                px[c] = (px[c] as f64 + n[c]).clamp(0.0, INTENSITY_MAX as f64).round() as u16;
            }
        }
    }
    out
}

/// Puts every piece back where the truth says, undoing its rotation.
pub fn reassemble_by_truth(bundle: &PuzzleBundle) -> Option<Image> {
    let truth = bundle.truth.as_ref()?;
    let p = bundle.spec.piece_px;
    let (w, h) = (bundle.spec.cols * p, bundle.spec.rows * p);
    let mut pixels = vec![[0u16; 3]; w * h];
    for (piece, t) in bundle.pieces.iter().zip(truth) {
        let upright = rotate_piece(piece, t.rotation.inverse().quarter_turns() as u32);
        for r in 0..p {
            for c in 0..p {
                pixels[(t.row * p + r) * w + t.col * p + c] = upright.pixel(r, c);
            }
        }
    }
    Some(Image::new(w, h, pixels))
}

fn piece_image(piece: &Piece) -> Image {
    Image::new(piece.size(), piece.size(), piece.pixels().to_vec())
}

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::InvalidBundle {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `bundle` into `dir`, creating it if needed.
pub fn save_bundle(bundle: &PuzzleBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for piece in &bundle.pieces {
        piece_image(piece).save_png(&dir.join(format!("piece_{}.png", piece.id)))?;
    }
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            spec: bundle.spec,
            type_tag: bundle.type_tag,
            seed: bundle.seed,
            noise_sigma: bundle.noise_sigma,
            piece_count: bundle.pieces.len(),
        },
    )?;
    let truth_path = dir.join("truth.json");
    match &bundle.truth {
        Some(truth) => write_json(&truth_path, truth)?,
        None if truth_path.exists() => std::fs::remove_file(&truth_path).map_err(|e| Error::io(&truth_path, e))?,
        None => {}
    }
    Ok(())
}

/// Reads manifest and pieces. The returned bundle has no truth.
pub fn load_bundle(dir: &Path) -> Result<PuzzleBundle> {
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = read_json(&manifest_path)?;
    let spec = PuzzleSpec::new(manifest.spec.rows, manifest.spec.cols, manifest.spec.piece_px)
        .map_err(|e| bad(&manifest_path, e.to_string()))?;
    if manifest.piece_count != spec.piece_count() {
        return Err(bad(
            &manifest_path,
            format!("piece_count {} but spec has {} cells", manifest.piece_count, spec.piece_count()),
        ));
    }
    let mut pieces = Vec::with_capacity(manifest.piece_count);
    for id in 0..manifest.piece_count {
        let path = dir.join(format!("piece_{id}.png"));
        let img = Image::load(&path)?;
        if img.width != spec.piece_px || img.height != spec.piece_px {
            return Err(bad(
                &path,
                format!("expected {0}×{0} pixels, found {1}×{2}", spec.piece_px, img.width, img.height),
            ));
        }
        pieces.push(Piece::new(id, spec.piece_px, img.pixels)?);
    }
    Ok(PuzzleBundle {
        spec,
        pieces,
        truth: None,
        type_tag: manifest.type_tag,
        seed: manifest.seed,
        noise_sigma: manifest.noise_sigma,
    })
}

/// Reads and checks `truth.json` against the bundle's spec.
pub fn load_truth(dir: &Path, spec: &PuzzleSpec) -> Result<Vec<TruthEntry>> {
    let path = dir.join("truth.json");
    let truth: Vec<TruthEntry> = read_json(&path)?;
    check_truth(&truth, spec).map_err(|reason| bad(&path, reason))?;
    Ok(truth)
}

/// A truth table must map pieces one-to-one onto the grid cells.
pub fn check_truth(truth: &[TruthEntry], spec: &PuzzleSpec) -> std::result::Result<(), String> {
    if truth.len() != spec.piece_count() {
        return Err(format!("{} entries for {} pieces", truth.len(), spec.piece_count()));
    }
    let mut seen = vec![false; truth.len()];
    for (id, t) in truth.iter().enumerate() {
        if t.row >= spec.rows || t.col >= spec.cols {
            return Err(format!("piece {id} placed outside the grid"));
        }
        let cell = t.row * spec.cols + t.col;
        if std::mem::replace(&mut seen[cell], true) {
            return Err(format!("cell ({}, {}) claimed twice", t.row, t.col));
        }
    }
    Ok(())
}

/// Smooth colour gradients overlaid with value noise on a lattice finer
/// than the pieces, so every cell carries its own texture while the image
/// stays continuous across cell boundaries.
pub fn synthetic_image(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (lattice spacing in pixels, amplitude)
    let octaves = [(24.0, 14000.0), (9.0, 6000.0), (4.0, 2500.0)];
    let lattices: Vec<Vec<Vec<[f64; 3]>>> = octaves
        .iter()
        .map(|&(spacing, _)| {
            let gw = (width as f64 / spacing).ceil() as usize + 2;
            let gh = (height as f64 / spacing).ceil() as usize + 2;
            (0..gh)
                .map(|_| {
                    (0..gw)
                        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                        .collect()
                })
                .collect()
        })
        .collect();
    let phase: [f64; 3] = [rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3), rng.gen_range(0.0..6.3)];
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let mut pixels = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let (u, v) = (c as f64 / width as f64, r as f64 / height as f64);
            let base = [
                20000.0 + 25000.0 * u,
                20000.0 + 25000.0 * v,
                32000.0 + 12000.0 * (6.0 * u + 4.0 * v + phase[2]).sin(),
            ];
            let mut px = [0u16; 3];
            for ch in 0..3 {
                let mut value = base[ch] + 3000.0 * (5.0 * u + phase[ch]).cos();
                for ((spacing, amp), lattice) in octaves.iter().zip(&lattices) {
                    let (gx, gy) = (c as f64 / spacing, r as f64 / spacing);
                    let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
                    let (fx, fy) = (smooth(gx - ix as f64), smooth(gy - iy as f64));
                    let at = |y: usize, x: usize| lattice[y][x][ch];
                    let top = at(iy, ix) * (1.0 - fx) + at(iy, ix + 1) * fx;
                    let bottom = at(iy + 1, ix) * (1.0 - fx) + at(iy + 1, ix + 1) * fx;
                    value += amp * (top * (1.0 - fy) + bottom * fy);
                }
                px[ch] = value.clamp(0.0, INTENSITY_MAX as f64).round() as u16;
            }
            pixels.push(px);
        }
    }
    Image::new(width, height, pixels)
}
