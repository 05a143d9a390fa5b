//! Domain types shared by the whole pipeline: pieces, orientations, offsets,
//! placements and assembled grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full-scale intensity. All pixel data lives on a 16-bit scale.
pub const INTENSITY_MAX: u16 = u16::MAX;

/// Grid geometry of a puzzle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuzzleSpec {
    pub rows: usize,
    pub cols: usize,
    /// Pixels per piece side.
    pub piece_px: usize,
}

impl PuzzleSpec {
    pub fn new(rows: usize, cols: usize, piece_px: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidSpec(format!(
                "puzzle needs at least one row and column, got {rows}x{cols}"
            )));
        }
        if piece_px < 2 {
            return Err(Error::InvalidSpec(format!(
                "piece side must be at least 2 pixels, got {piece_px}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            piece_px,
        })
    }

    pub fn piece_count(&self) -> usize {
        self.rows * self.cols
    }
}

/// Counter-clockwise quarter turns, always reduced modulo 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rotation(u8);

impl Rotation {
    pub const NONE: Rotation = Rotation(0);
    pub const ALL: [Rotation; 4] = [Rotation(0), Rotation(1), Rotation(2), Rotation(3)];

    pub fn new(quarter_turns: u32) -> Self {
        Rotation((quarter_turns % 4) as u8)
    }

    pub fn quarter_turns(self) -> u8 {
        self.0
    }

    pub fn degrees(self) -> u32 {
        self.0 as u32 * 90
    }

    pub fn compose(self, other: Rotation) -> Rotation {
        Rotation((self.0 + other.0) % 4)
    }

    pub fn inverse(self) -> Rotation {
        Rotation((4 - self.0) % 4)
    }
}

/// Configuration of an oriented pair `(i, j, o)`: where piece `j` sits
/// relative to piece `i`. The y axis points down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Orientation {
    /// `o = 1`: `j` directly above `i`.
    Above,
    /// `o = 2`: `j` directly right of `i`.
    Right,
    /// `o = 3`: `j` directly below `i`.
    Below,
    /// `o = 4`: `j` directly left of `i`.
    Left,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [
        Orientation::Above,
        Orientation::Right,
        Orientation::Below,
        Orientation::Left,
    ];

    /// The 1-based label `o ∈ {1, 2, 3, 4}`.
    pub fn label(self) -> u8 {
        self.slot() as u8 + 1
    }

    /// Zero-based index used for table layouts.
    pub fn slot(self) -> usize {
        match self {
            Orientation::Above => 0,
            Orientation::Right => 1,
            Orientation::Below => 2,
            Orientation::Left => 3,
        }
    }

    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            1 => Some(Orientation::Above),
            2 => Some(Orientation::Right),
            3 => Some(Orientation::Below),
            4 => Some(Orientation::Left),
            _ => None,
        }
    }

    pub fn from_slot(slot: usize) -> Self {
        Self::ALL[slot]
    }

    /// The same physical adjacency seen from `j`: `(i, j, o)` ≡ `(j, i, o.opposite())`.
    pub fn opposite(self) -> Self {
        match self {
            Orientation::Above => Orientation::Below,
            Orientation::Right => Orientation::Left,
            Orientation::Below => Orientation::Above,
            Orientation::Left => Orientation::Right,
        }
    }

    /// Desired `(x_i - x_j, y_i - y_j)` for this configuration.
    pub fn offsets(self) -> (i64, i64) {
        match self {
            Orientation::Above => (0, 1),
            Orientation::Right => (-1, 0),
            Orientation::Below => (0, -1),
            Orientation::Left => (1, 0),
        }
    }

    /// Orientation of the cell at grid displacement `(dx, dy)` from `i`,
    /// i.e. the inverse of [`Orientation::offsets`] negated.
    pub fn from_displacement(dx: i64, dy: i64) -> Option<Self> {
        match (dx, dy) {
            (0, -1) => Some(Orientation::Above),
            (1, 0) => Some(Orientation::Right),
            (0, 1) => Some(Orientation::Below),
            (-1, 0) => Some(Orientation::Left),
            _ => None,
        }
    }

    /// Orientation after turning the whole scene counter-clockwise.
    pub fn rotated(self, rotation: Rotation) -> Self {
        // CCW turn: right -> above -> left -> below -> right.
        Self::from_slot((self.slot() + 4 - rotation.quarter_turns() as usize) % 4)
    }
}

impl From<Orientation> for u8 {
    fn from(o: Orientation) -> u8 {
        o.label()
    }
}

impl TryFrom<u8> for Orientation {
    type Error = String;

    fn try_from(label: u8) -> std::result::Result<Self, Self::Error> {
        Orientation::from_label(label).ok_or_else(|| format!("orientation label {label} not in 1..=4"))
    }
}

/// `(δx_o, δy_o)` for an orientation.
pub fn offsets(o: Orientation) -> (i64, i64) {
    o.offsets()
}

/// A square block of RGB pixels on the 16-bit scale, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub id: usize,
    size: usize,
    pixels: Vec<[u16; 3]>,
    pub rotation: Rotation,
}

impl Piece {
    pub fn new(id: usize, size: usize, pixels: Vec<[u16; 3]>) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidSpec(format!(
                "piece side must be at least 2 pixels, got {size}"
            )));
        }
        if pixels.len() != size * size {
            return Err(Error::InvalidSpec(format!(
                "piece {id}: expected {} pixels, got {}",
                size * size,
                pixels.len()
            )));
        }
        Ok(Self {
            id,
            size,
            pixels,
            rotation: Rotation::NONE,
        })
    }

    /// Builds a piece with every pixel set to `rgb`.
    pub fn filled(id: usize, size: usize, rgb: [u16; 3]) -> Self {
        Self {
            id,
            size,
            pixels: vec![rgb; size * size],
            rotation: Rotation::NONE,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[[u16; 3]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[u16; 3]] {
        &mut self.pixels
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [u16; 3] {
        self.pixels[row * self.size + col]
    }
}

/// Rotates the pixel block counter-clockwise by `quarter_turns · 90°` and
/// advances the rotation tag by the same amount.
pub fn rotate_piece(piece: &Piece, quarter_turns: u32) -> Piece {
    let turns = quarter_turns % 4;
    let n = piece.size;
    let mut pixels = piece.pixels.clone();
    for _ in 0..turns {
        let src = pixels;
        pixels = (0..n * n)
            .map(|k| {
                let (r, c) = (k / n, k % n);
                // new[r][c] = old[c][n - 1 - r]
                src[c * n + (n - 1 - r)]
            })
            .collect();
    }
    Piece {
        id: piece.id,
        size: n,
        pixels,
        rotation: piece.rotation.compose(Rotation::new(turns)),
    }
}

/// Real-valued piece coordinates in grid units (x right, y down).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub objective: f64,
}

impl Placement {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// A piece as it sits in an assembled grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlacedPiece {
    pub piece_id: usize,
    /// Quarter turns applied to the scrambled piece before placing it.
    pub rotation: Rotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellSource {
    LpPlaced,
    FillPlaced,
    Empty,
}

/// A rows×cols arrangement of pieces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assembly {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Option<PlacedPiece>>,
    pub source: Vec<CellSource>,
}

impl Assembly {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            cells: vec![None; rows * cols],
            source: vec![CellSource::Empty; rows * cols],
        }
    }

    /// Builds a fully lp-placed assembly from row-major piece ids.
    pub fn from_ids(rows: usize, cols: usize, ids: &[usize]) -> Self {
        assert_eq!(ids.len(), rows * cols);
        Self {
            rows,
            cols,
            cells: ids
                .iter()
                .map(|&piece_id| {
                    Some(PlacedPiece {
                        piece_id,
                        rotation: Rotation::NONE,
                    })
                })
                .collect(),
            source: vec![CellSource::LpPlaced; rows * cols],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Option<PlacedPiece> {
        self.cells[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, piece: PlacedPiece, source: CellSource) {
        let k = row * self.cols + col;
        self.cells[k] = Some(piece);
        self.source[k] = source;
    }

    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(Option::is_some)
    }

    /// Whether no piece id occupies two cells.
    pub fn is_duplicate_free(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.cells.iter().flatten().all(|p| seen.insert(p.piece_id))
    }

    pub fn count(&self, source: CellSource) -> usize {
        self.source.iter().filter(|&&s| s == source).count()
    }

    /// The whole arrangement turned counter-clockwise; every piece turns with it.
    pub fn rotated(&self, rotation: Rotation) -> Assembly {
        let mut out = self.clone();
        for _ in 0..rotation.quarter_turns() {
            let (rows, cols) = (out.cols, out.rows);
            let mut next = Assembly::empty(rows, cols);
            for r in 0..rows {
                for c in 0..cols {
                    // new[r][c] = old[c][old_cols - 1 - r]
                    let k = c * out.cols + (out.cols - 1 - r);
                    next.cells[r * cols + c] = out.cells[k].map(|p| PlacedPiece {
                        piece_id: p.piece_id,
                        rotation: p.rotation.compose(Rotation::new(1)),
                    });
                    next.source[r * cols + c] = out.source[k];
                }
            }
            out = next;
        }
        out
    }
}
