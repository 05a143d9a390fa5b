//! Pairwise compatibility: Mahalanobis gradient distances between piece
//! boundaries, confidence weights, and per-slot active match selection.
//!
//! Every piece side is summarised by the gradients across its outermost
//! pixel line (boundary minus the adjacent inner line): their 3-channel
//! mean and regularised covariance. The distance between two facing sides
//! is the sum, over the pixels along the seam, of the squared Mahalanobis
//! distance of the cross-seam gradient under each side's model.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::puzzle::{Orientation, Piece, Rotation, INTENSITY_MAX};

/// Floor applied to distances before they are used as a divisor.
pub const D_MIN: f64 = 1e-12;
/// Cap on confidence weights.
pub const W_MAX: f64 = 1e6;
/// Ridge added to every gradient covariance: `1e-6 · (full scale)²`.
pub const COVARIANCE_RIDGE: f64 = 1e-6 * (INTENSITY_MAX as f64) * (INTENSITY_MAX as f64);

/// Piece sides in clockwise order. Side strips are stored in clockwise
/// traversal order, which makes them invariant under piece rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Top = 0,
    Right = 1,
    Bottom = 2,
    Left = 3,
}

impl Side {
    const ALL: [Side; 4] = [Side::Top, Side::Right, Side::Bottom, Side::Left];

    /// Which side of the unrotated piece ends up as `self` after `rotation`.
    fn source_side(self, rotation: Rotation) -> usize {
        (self as usize + rotation.quarter_turns() as usize) % 4
    }
}

/// Gradient statistics of one side of a piece.
#[derive(Debug, Clone)]
struct SideModel {
    boundary: Vec<[f64; 3]>,
    mean: [f64; 3],
    inv_cov: [[f64; 3]; 3],
}

impl SideModel {
    fn new(piece: &Piece, side: Side, ridge: f64) -> Self {
        let p = piece.size();
        let last = p - 1;
        // (boundary, inner) pixel coordinates at clockwise position k.
        let coords = |k: usize| -> ((usize, usize), (usize, usize)) {
            match side {
                Side::Top => ((0, k), (1, k)),
                Side::Right => ((k, last), (k, last - 1)),
                Side::Bottom => ((last, last - k), (last - 1, last - k)),
                Side::Left => ((last - k, 0), (last - k, 1)),
            }
        };
        let to_f = |px: [u16; 3]| [px[0] as f64, px[1] as f64, px[2] as f64];
        let mut boundary = Vec::with_capacity(p);
        let mut grads = Vec::with_capacity(p);
        for k in 0..p {
            let ((br, bc), (ir, ic)) = coords(k);
            let b = to_f(piece.pixel(br, bc));
            let i = to_f(piece.pixel(ir, ic));
            boundary.push(b);
            grads.push([b[0] - i[0], b[1] - i[1], b[2] - i[2]]);
        }
        let mut mean = [0.0; 3];
        for g in &grads {
            for c in 0..3 {
                mean[c] += g[c];
            }
        }
        for m in &mut mean {
            *m /= p as f64;
        }
        let mut cov = [[0.0; 3]; 3];
        for g in &grads {
            let d = [g[0] - mean[0], g[1] - mean[1], g[2] - mean[2]];
            for a in 0..3 {
                for b in 0..3 {
                    cov[a][b] += d[a] * d[b];
                }
            }
        }
        let denom = (p - 1) as f64;
        for (a, row) in cov.iter_mut().enumerate() {
            for (b, x) in row.iter_mut().enumerate() {
                *x /= denom;
                if a == b {
                    *x += ridge;
                }
            }
        }
        Self {
            boundary,
            mean,
            inv_cov: invert_spd3(&cov),
        }
    }

    /// `Σ_k (other_k - own_k - μ)ᵀ Σ⁻¹ (other_k - own_k - μ)` where the
    /// facing strip runs in the opposite direction.
    fn seam_cost(&self, other: &SideModel) -> f64 {
        let p = self.boundary.len();
        let s = &self.inv_cov;
        let mut total = 0.0;
        for k in 0..p {
            let own = self.boundary[k];
            let far = other.boundary[p - 1 - k];
            let d = [
                far[0] - own[0] - self.mean[0],
                far[1] - own[1] - self.mean[1],
                far[2] - own[2] - self.mean[2],
            ];
            total += d[0] * (s[0][0] * d[0] + s[0][1] * d[1] + s[0][2] * d[2])
                + d[1] * (s[1][0] * d[0] + s[1][1] * d[1] + s[1][2] * d[2])
                + d[2] * (s[2][0] * d[0] + s[2][1] * d[1] + s[2][2] * d[2]);
        }
        total
    }
}

fn invert_spd3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
    let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
    let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
    let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
    let inv_det = 1.0 / det;
    [
        [
            c00 * inv_det,
            (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det,
            (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det,
        ],
        [
            c01 * inv_det,
            (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det,
            (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det,
        ],
        [
            c02 * inv_det,
            (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det,
            (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det,
        ],
    ]
}

/// Symmetrised distance for a seam where `first` is the right (or bottom)
/// side of one piece and `second` the left (or top) side of the other.
fn seam_distance(first: &SideModel, second: &SideModel) -> f64 {
    first.seam_cost(second) + second.seam_cost(first)
}

/// Which sides meet for `(i, j, o)`, in canonical (left/top piece first)
/// order: `(first_is_i, first_side, second_side)`.
fn canonical_seam(o: Orientation) -> (bool, Side, Side) {
    match o {
        Orientation::Right => (true, Side::Right, Side::Left),
        Orientation::Left => (false, Side::Right, Side::Left),
        Orientation::Below => (true, Side::Bottom, Side::Top),
        Orientation::Above => (false, Side::Bottom, Side::Top),
    }
}

/// MGC distance for `pj` sitting at orientation `o` relative to `pi`.
///
/// Both pieces must have the same side length.
pub fn mgc_distance(pi: &Piece, pj: &Piece, o: Orientation) -> f64 {
    assert_eq!(pi.size(), pj.size(), "pieces differ in size");
    let (i_first, first_side, second_side) = canonical_seam(o);
    let (first, second) = if i_first { (pi, pj) } else { (pj, pi) };
    seam_distance(
        &SideModel::new(first, first_side, COVARIANCE_RIDGE),
        &SideModel::new(second, second_side, COVARIANCE_RIDGE),
    )
}

/// A puzzle element the table is built over: a scrambled piece, optionally
/// turned by a fixed rotation (rotation replicas for unknown-orientation
/// puzzles).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub piece: usize,
    pub rotation: Rotation,
}

/// `D(i, j, o)` for all ordered tile pairs. Self pairs and pairs of
/// replicas of the same piece are excluded and read as `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    n: usize,
    piece_px: usize,
    /// Layout `[o][i][j]`.
    data: Vec<f64>,
}

impl DistanceTable {
    /// Builds a table from a row-major `(i, j, o)` array; `o` runs over the
    /// labels 1..=4.
    pub fn from_raw(n: usize, piece_px: usize, raw: &[f64]) -> Result<Self> {
        if raw.len() != 4 * n * n {
            return Err(Error::Cache(format!(
                "expected {} entries for n = {n}, got {}",
                4 * n * n,
                raw.len()
            )));
        }
        let mut data = vec![f64::INFINITY; 4 * n * n];
        for i in 0..n {
            for j in 0..n {
                for o in 0..4 {
                    let value = raw[(i * n + j) * 4 + o];
                    if i != j {
                        data[(o * n + i) * n + j] = value;
                    }
                }
            }
        }
        Ok(Self { n, piece_px, data })
    }

    pub fn from_fn(n: usize, piece_px: usize, f: impl Fn(usize, usize, Orientation) -> f64) -> Self {
        let mut data = vec![f64::INFINITY; 4 * n * n];
        for o in Orientation::ALL {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        data[(o.slot() * n + i) * n + j] = f(i, j, o);
                    }
                }
            }
        }
        Self { n, piece_px, data }
    }

    pub fn len_tiles(&self) -> usize {
        self.n
    }

    pub fn piece_px(&self) -> usize {
        self.piece_px
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, o: Orientation) -> f64 {
        self.data[(o.slot() * self.n + i) * self.n + j]
    }

    pub fn contains(&self, i: usize, j: usize, o: Orientation) -> bool {
        self.get(i, j, o).is_finite()
    }

    /// Number of defined entries.
    pub fn entry_count(&self) -> usize {
        self.data.iter().filter(|d| d.is_finite()).count()
    }

    fn row(&self, i: usize, o: Orientation) -> &[f64] {
        let start = (o.slot() * self.n + i) * self.n;
        &self.data[start..start + self.n]
    }

    /// Entries in `(i, j, o)` row-major order, labels 1..=4 innermost.
    pub fn to_raw(&self) -> Vec<f64> {
        let n = self.n;
        let mut raw = vec![f64::INFINITY; 4 * n * n];
        for o in Orientation::ALL {
            for i in 0..n {
                for j in 0..n {
                    raw[(i * n + j) * 4 + o.slot()] = self.get(i, j, o);
                }
            }
        }
        raw
    }

    /// Writes the cache format: `u32 n`, `u32 piece_px` (little endian),
    /// then `4·n²` little-endian `f64` in `(i, j, o)` row-major order.
    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(8 + 8 * self.data.len());
        bytes.extend_from_slice(&(self.n as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.piece_px as u32).to_le_bytes());
        for v in self.to_raw() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read_cache(path: &Path, n: usize, piece_px: usize) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        if bytes.len() < 8 {
            return Err(Error::Cache("file shorter than its header".into()));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().unwrap()) as usize;
        let (file_n, file_px) = (word(0), word(4));
        if file_n != n || file_px != piece_px {
            return Err(Error::Cache(format!(
                "cache holds n = {file_n}, piece_px = {file_px}; expected {n}, {piece_px}"
            )));
        }
        let body = &bytes[8..];
        if body.len() != 8 * 4 * n * n {
            return Err(Error::Cache(format!("expected {} bytes of data, got {}", 32 * n * n, body.len())));
        }
        let raw: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_raw(n, piece_px, &raw)
    }
}

/// Distances between all pieces in their given orientation.
pub fn build_distance_table(pieces: &[Piece]) -> DistanceTable {
    let tiles: Vec<Tile> = (0..pieces.len())
        .map(|piece| Tile {
            piece,
            rotation: Rotation::NONE,
        })
        .collect();
    build_tile_table(pieces, &tiles)
}

/// Tiles for the four rotation replicas of every piece; tile `4·p + q` is
/// piece `p` turned `q` quarter turns counter-clockwise.
pub fn replica_tiles(piece_count: usize) -> Vec<Tile> {
    (0..piece_count)
        .flat_map(|piece| Rotation::ALL.map(|rotation| Tile { piece, rotation }))
        .collect()
}

/// Distances over arbitrary tiles of `pieces`. Pairs of tiles cut from the
/// same piece are excluded.
pub fn build_tile_table(pieces: &[Piece], tiles: &[Tile]) -> DistanceTable {
    build_with_ridge(pieces, tiles, COVARIANCE_RIDGE)
}

fn build_with_ridge(pieces: &[Piece], tiles: &[Tile], ridge: f64) -> DistanceTable {
    let n_pieces = pieces.len();
    let piece_px = pieces.first().map_or(0, Piece::size);
    assert!(pieces.iter().all(|p| p.size() == piece_px), "pieces differ in size");
    let models: Vec<[SideModel; 4]> = pieces
        .par_iter()
        .map(|p| Side::ALL.map(|s| SideModel::new(p, s, ridge)))
        .collect();

    let mut rotations: Vec<Rotation> = tiles.iter().map(|t| t.rotation).collect();
    rotations.sort();
    rotations.dedup();
    // Physical side pairs (first, second) any canonical seam can touch.
    let mut needed = [[false; 4]; 4];
    for &qa in &rotations {
        for &qb in &rotations {
            needed[Side::Right.source_side(qa)][Side::Left.source_side(qb)] = true;
            needed[Side::Bottom.source_side(qa)][Side::Top.source_side(qb)] = true;
        }
    }
    let mut seams: Vec<Option<Vec<f64>>> = vec![None; 16];
    for (sa, row) in needed.iter().enumerate() {
        for (sb, &need) in row.iter().enumerate() {
            if !need {
                continue;
            }
            let table: Vec<f64> = (0..n_pieces)
                .into_par_iter()
                .flat_map_iter(|a| {
                    let models = &models;
                    (0..n_pieces).map(move |b| {
                        if a == b {
                            f64::INFINITY
                        } else {
                            seam_distance(&models[a][sa], &models[b][sb])
                        }
                    })
                })
                .collect();
            seams[sa * 4 + sb] = Some(table);
        }
    }
    let seam = |first: Tile, fs: Side, second: Tile, ss: Side| -> f64 {
        let sa = fs.source_side(first.rotation);
        let sb = ss.source_side(second.rotation);
        seams[sa * 4 + sb].as_ref().expect("seam table computed")[first.piece * n_pieces + second.piece]
    };

    let n = tiles.len();
    let mut data = vec![f64::INFINITY; 4 * n * n];
    data.par_chunks_mut(n).enumerate().for_each(|(row, out)| {
        let o = Orientation::from_slot(row / n);
        let i = row % n;
        let (i_first, fs, ss) = canonical_seam(o);
        for (j, slot) in out.iter_mut().enumerate() {
            if tiles[i].piece == tiles[j].piece {
                continue;
            }
            let (first, second) = if i_first {
                (tiles[i], tiles[j])
            } else {
                (tiles[j], tiles[i])
            };
            *slot = seam(first, fs, second, ss);
        }
    });
    DistanceTable { n, piece_px, data }
}

/// Candidate matches still in play: `U^(k)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Universe {
    n: usize,
    alive: Vec<bool>,
    len: usize,
}

impl Universe {
    /// Every defined entry of the table.
    pub fn full(table: &DistanceTable) -> Self {
        let alive: Vec<bool> = table.data.iter().map(|d| d.is_finite()).collect();
        let len = alive.iter().filter(|&&a| a).count();
        Self {
            n: table.n,
            alive,
            len,
        }
    }

    pub fn contains(&self, i: usize, j: usize, o: Orientation) -> bool {
        self.alive[(o.slot() * self.n + i) * self.n + j]
    }

    /// Removes a match; returns whether it was present.
    pub fn remove(&mut self, i: usize, j: usize, o: Orientation) -> bool {
        let k = (o.slot() * self.n + i) * self.n + j;
        let was = std::mem::replace(&mut self.alive[k], false);
        self.len -= usize::from(was);
        was
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn row_alive(&self, i: usize, o: Orientation) -> &[bool] {
        let start = (o.slot() * self.n + i) * self.n;
        &self.alive[start..start + self.n]
    }
}

/// Key of an oriented match `(i, j, o)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatchKey {
    pub i: usize,
    pub j: usize,
    pub o: Orientation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedMatch {
    pub i: usize,
    pub j: usize,
    pub o: Orientation,
    pub weight: f64,
}

impl OrientedMatch {
    pub fn key(&self) -> MatchKey {
        MatchKey {
            i: self.i,
            j: self.j,
            o: self.o,
        }
    }
}

/// Smallest and second smallest value of a line, smallest index first on ties.
#[derive(Debug, Clone, Copy)]
struct BestTwo {
    best: f64,
    arg: usize,
    second: f64,
}

impl BestTwo {
    const EMPTY: BestTwo = BestTwo {
        best: f64::INFINITY,
        arg: usize::MAX,
        second: f64::INFINITY,
    };

    fn offer(&mut self, idx: usize, value: f64) {
        if value < self.best || (value == self.best && idx < self.arg) {
            self.second = self.best;
            self.best = value;
            self.arg = idx;
        } else if value < self.second {
            self.second = value;
        }
    }

    fn excluding(&self, idx: usize) -> f64 {
        if self.arg == idx {
            self.second
        } else {
            self.best
        }
    }
}

/// Confidence weights for one universe:
/// `w(i,j,o) = min(min_{k≠i} D(k,j,o), min_{k≠j} D(i,k,o)) / D(i,j,o)`,
/// with both minima taken over surviving matches.
#[derive(Debug, Clone)]
pub struct WeightTable {
    n: usize,
    /// Per `(o, i)`: best over `D(i, ·, o)`.
    rows: Vec<BestTwo>,
    /// Per `(o, j)`: best over `D(·, j, o)`.
    cols: Vec<BestTwo>,
}

pub fn build_weights(table: &DistanceTable, universe: &Universe) -> WeightTable {
    let n = table.n;
    let mut rows = vec![BestTwo::EMPTY; 4 * n];
    let mut cols = vec![BestTwo::EMPTY; 4 * n];
    for o in Orientation::ALL {
        for i in 0..n {
            let d = table.row(i, o);
            let alive = universe.row_alive(i, o);
            let r = &mut rows[o.slot() * n + i];
            for j in 0..n {
                if alive[j] {
                    r.offer(j, d[j]);
                    cols[o.slot() * n + j].offer(i, d[j]);
                }
            }
        }
    }
    WeightTable { n, rows, cols }
}

impl WeightTable {
    /// Weight of `(i, j, o)`. Infinite alternatives (no competitor left)
    /// and zero distances both saturate at [`W_MAX`].
    pub fn weight(&self, table: &DistanceTable, i: usize, j: usize, o: Orientation) -> f64 {
        let row_alt = self.rows[o.slot() * self.n + i].excluding(j);
        let col_alt = self.cols[o.slot() * self.n + j].excluding(i);
        let alternative = row_alt.min(col_alt);
        if !alternative.is_finite() {
            return W_MAX;
        }
        (alternative / table.get(i, j, o).max(D_MIN)).min(W_MAX)
    }

    /// `argmin_j D(i, j, o)` over the universe the table was built from.
    fn best(&self, i: usize, o: Orientation) -> Option<usize> {
        let b = self.rows[o.slot() * self.n + i];
        b.best.is_finite().then_some(b.arg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    pub matches: Vec<OrientedMatch>,
    /// `(i, o)` slots left without any surviving candidate.
    pub skipped_slots: usize,
}

/// `A^(k)`: for every piece and orientation the surviving candidate with
/// the smallest distance (smallest `j` on ties), weighted by `weights`.
pub fn active_set(table: &DistanceTable, universe: &Universe, weights: &WeightTable) -> ActiveSet {
    let selection = build_weights(table, universe);
    let mut matches = Vec::with_capacity(4 * table.n);
    let mut skipped_slots = 0;
    for i in 0..table.n {
        for o in Orientation::ALL {
            match selection.best(i, o) {
                Some(j) => matches.push(OrientedMatch {
                    i,
                    j,
                    o,
                    weight: weights.weight(table, i, j, o),
                }),
                None => skipped_slots += 1,
            }
        }
    }
    if skipped_slots > 0 {
        log::warn!("{skipped_slots} (piece, orientation) slots have no surviving candidate");
    }
    ActiveSet {
        matches,
        skipped_slots,
    }
}
