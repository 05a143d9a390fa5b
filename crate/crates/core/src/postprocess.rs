//! From LP placement to a complete rectangular assembly: snap components to
//! the grid, pick the best window, then fill the remaining holes greedily.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::assembly::{Component, SolverState};
use crate::compat::{DistanceTable, Tile};
use crate::error::{Error, Result};
use crate::ingest::Image;
use crate::puzzle::{rotate_piece, Assembly, CellSource, Orientation, Piece, PlacedPiece, Placement, PuzzleSpec, Rotation};

/// Snapped pieces keyed by `(row, col)`, plus the pieces left over.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SparseGrid {
    pub cells: BTreeMap<(i64, i64), Tile>,
    /// Pieces (not tiles) without a cell, ascending.
    pub pool: Vec<usize>,
}

/// A piece as laid out in an LP component, in the component's own frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentCell {
    pub piece_id: usize,
    pub rotation: Rotation,
    pub dx: i64,
    pub dy: i64,
}

/// Components translated from tiles to pieces.
pub fn component_cells(components: &[Component], tiles: &[Tile]) -> Vec<Vec<ComponentCell>> {
    components
        .iter()
        .map(|c| {
            c.members
                .iter()
                .map(|m| ComponentCell {
                    piece_id: tiles[m.tile].piece,
                    rotation: tiles[m.tile].rotation,
                    dx: m.dx,
                    dy: m.dy,
                })
                .collect()
        })
        .collect()
}

/// Components ordered largest first, ties by smallest tile.
fn by_size(components: &[Component]) -> Vec<&Component> {
    let mut order: Vec<&Component> = components.iter().filter(|c| !c.is_empty()).collect();
    order.sort_by(|a, b| b.len().cmp(&a.len()).then(a.members[0].tile.cmp(&b.members[0].tile)));
    order
}

/// Keeps one replica per piece: the one in the largest component (ties:
/// component with the smaller first tile, then the smaller tile).
pub fn dedup_replicas(components: &[Component], tiles: &[Tile]) -> Vec<Component> {
    let mut claimed = BTreeSet::new();
    let mut out = Vec::new();
    for c in by_size(components) {
        let members: Vec<_> = c
            .members
            .iter()
            .filter(|m| claimed.insert(tiles[m.tile].piece))
            .copied()
            .collect();
        if !members.is_empty() {
            out.push(Component { members });
        }
    }
    out.sort_by_key(|c| c.members[0].tile);
    out
}

/// Lays every multi-tile component out at its rounded LP position.
///
/// A component's position is the rounded mean of `coordinate - offset`
/// over its members. Larger components are placed first (ties: smaller
/// first tile) and keep contested cells; losing tiles and singleton
/// components go to the pool.
pub fn snap_to_grid(placement: &Placement, components: &[Component], tiles: &[Tile]) -> SparseGrid {
    let mut cells = BTreeMap::new();
    let mut placed = BTreeSet::new();
    for c in by_size(components) {
        if c.len() < 2 {
            continue;
        }
        let k = c.len() as f64;
        let ox = (c.members.iter().map(|m| placement.x[m.tile] - m.dx as f64).sum::<f64>() / k).round() as i64;
        let oy = (c.members.iter().map(|m| placement.y[m.tile] - m.dy as f64).sum::<f64>() / k).round() as i64;
        for m in &c.members {
            let tile = tiles[m.tile];
            if placed.contains(&tile.piece) {
                continue;
            }
            if let std::collections::btree_map::Entry::Vacant(e) = cells.entry((oy + m.dy, ox + m.dx)) {
                e.insert(tile);
                placed.insert(tile.piece);
            }
        }
    }
    let pieces: BTreeSet<usize> = tiles.iter().map(|t| t.piece).collect();
    SparseGrid {
        cells,
        pool: pieces.difference(&placed).copied().collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub top: i64,
    pub left: i64,
    pub height: usize,
    pub width: usize,
    pub count: usize,
}

/// Splits sorted distinct values wherever a gap is at least `span`: no
/// window `span` wide can touch two such groups.
fn clusters(values: impl Iterator<Item = i64>, span: usize) -> Vec<(i64, i64)> {
    let sorted: BTreeSet<i64> = values.collect();
    let mut out: Vec<(i64, i64)> = Vec::new();
    for v in sorted {
        match out.last_mut() {
            Some(last) if v - last.1 < span as i64 => last.1 = v,
            _ => out.push((v, v)),
        }
    }
    out
}

/// The `height × width` window covering the most cells (ties: topmost,
/// then leftmost).
pub fn best_window(cells: &BTreeMap<(i64, i64), Tile>, height: usize, width: usize) -> Window {
    let mut best = Window {
        top: 0,
        left: 0,
        height,
        width,
        count: 0,
    };
    let key = |w: &Window| (std::cmp::Reverse(w.count), w.top, w.left);
    let row_groups = clusters(cells.keys().map(|k| k.0), height);
    let col_groups = clusters(cells.keys().map(|k| k.1), width);
    let mut first = true;
    for &(r0, r1) in &row_groups {
        for &(c0, c1) in &col_groups {
            let (bh, bw) = ((r1 - r0 + 1) as usize, (c1 - c0 + 1) as usize);
            // prefix[(r+1)*(bw+1) + c+1] = cells in [r0, r0+r] × [c0, c0+c].
            let mut prefix = vec![0usize; (bh + 1) * (bw + 1)];
            let mut any = false;
            for r in 0..bh {
                for c in 0..bw {
                    let here = usize::from(cells.contains_key(&(r0 + r as i64, c0 + c as i64)));
                    any |= here == 1;
                    prefix[(r + 1) * (bw + 1) + c + 1] =
                        here + prefix[r * (bw + 1) + c + 1] + prefix[(r + 1) * (bw + 1) + c] - prefix[r * (bw + 1) + c];
                }
            }
            if !any {
                continue;
            }
            let sum = |top: i64, left: i64| -> usize {
                let ra = (top - r0).clamp(0, bh as i64) as usize;
                let rb = (top + height as i64 - r0).clamp(0, bh as i64) as usize;
                let ca = (left - c0).clamp(0, bw as i64) as usize;
                let cb = (left + width as i64 - c0).clamp(0, bw as i64) as usize;
                prefix[rb * (bw + 1) + cb] + prefix[ra * (bw + 1) + ca]
                    - prefix[ra * (bw + 1) + cb]
                    - prefix[rb * (bw + 1) + ca]
            };
            for top in (r0 - height as i64 + 1)..=r1 {
                for left in (c0 - width as i64 + 1)..=c1 {
                    let w = Window {
                        top,
                        left,
                        height,
                        width,
                        count: sum(top, left),
                    };
                    if first || key(&w) < key(&best) {
                        best = w;
                        first = false;
                    }
                }
            }
        }
    }
    best
}

/// Tile lookup by `(piece, rotation)`.
struct TileIndex {
    of: HashMap<(usize, Rotation), usize>,
    /// Candidate tiles per piece, by ascending rotation.
    per_piece: BTreeMap<usize, Vec<usize>>,
}

impl TileIndex {
    fn new(tiles: &[Tile]) -> Self {
        let mut of = HashMap::new();
        let mut per_piece: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (idx, t) in tiles.iter().enumerate() {
            of.insert((t.piece, t.rotation), idx);
            per_piece.entry(t.piece).or_default().push(idx);
        }
        for v in per_piece.values_mut() {
            v.sort_by_key(|&idx| tiles[idx].rotation);
        }
        Self { of, per_piece }
    }
}

/// Cuts the best window out of `grid` and fills its holes from the pool.
///
/// With `allow_transposed` (unknown piece orientation) windows of shape
/// `cols × rows` compete too; a winning transposed window is turned a
/// quarter turn so the result is always `rows × cols`.
///
/// Holes are filled one at a time: among the holes with the most placed
/// neighbours, the (hole, piece, rotation) with the smallest summed
/// distance to those neighbours wins; ties go to the first hole in
/// row-major order, then the smaller piece id, then the smaller rotation.
pub fn trim_and_fill(
    grid: &SparseGrid,
    table: &DistanceTable,
    tiles: &[Tile],
    spec: &PuzzleSpec,
    allow_transposed: bool,
) -> Result<Assembly> {
    let mut window = best_window(&grid.cells, spec.rows, spec.cols);
    if allow_transposed && spec.rows != spec.cols {
        let other = best_window(&grid.cells, spec.cols, spec.rows);
        if other.count > window.count {
            window = other;
        }
    }
    let (h, w) = (window.height, window.width);
    let index = TileIndex::new(tiles);

    let mut slots: Vec<Option<usize>> = vec![None; h * w];
    let mut pool: BTreeSet<usize> = grid.pool.iter().copied().collect();
    for (&(r, c), &tile) in &grid.cells {
        let (dr, dc) = (r - window.top, c - window.left);
        if (0..h as i64).contains(&dr) && (0..w as i64).contains(&dc) {
            slots[dr as usize * w + dc as usize] = Some(index.of[&(tile.piece, tile.rotation)]);
        } else {
            pool.insert(tile.piece);
        }
    }
    let mut source: Vec<CellSource> = slots
        .iter()
        .map(|s| if s.is_some() { CellSource::LpPlaced } else { CellSource::Empty })
        .collect();

    let neighbours = |cell: usize| -> Vec<(usize, Orientation)> {
        let (r, c) = (cell / w, cell % w);
        let mut out = Vec::with_capacity(4);
        if r > 0 {
            out.push((cell - w, Orientation::Above));
        }
        if c + 1 < w {
            out.push((cell + 1, Orientation::Right));
        }
        if r + 1 < h {
            out.push((cell + w, Orientation::Below));
        }
        if c > 0 {
            out.push((cell - 1, Orientation::Left));
        }
        out
    };

    loop {
        let holes: Vec<usize> = (0..h * w).filter(|&k| slots[k].is_none()).collect();
        if holes.is_empty() {
            break;
        }
        if pool.is_empty() {
            return Err(Error::Fill(format!("{} holes left and no pieces to fill them", holes.len())));
        }
        let placed_around = |k: usize| neighbours(k).iter().filter(|(n, _)| slots[*n].is_some()).count();
        let most = holes.iter().map(|&k| placed_around(k)).max().unwrap_or(0);
        let mut best: Option<(f64, usize, usize)> = None;
        for &hole in holes.iter().filter(|&&k| placed_around(k) == most) {
            let around: Vec<(usize, Orientation)> = neighbours(hole)
                .into_iter()
                .filter_map(|(n, o)| slots[n].map(|t| (t, o)))
                .collect();
            for &piece in &pool {
                for &tile in &index.per_piece[&piece] {
                    let cost: f64 = around.iter().map(|&(nt, o)| table.get(tile, nt, o)).sum();
                    if best.is_none_or(|b| cost < b.0) {
                        best = Some((cost, hole, tile));
                    }
                }
            }
        }
        let (_, hole, tile) = best.expect("non-empty pool and holes");
        slots[hole] = Some(tile);
        source[hole] = CellSource::FillPlaced;
        pool.remove(&tiles[tile].piece);
    }

    let mut assembly = Assembly::empty(h, w);
    for (k, slot) in slots.iter().enumerate() {
        let t = tiles[slot.expect("filled")];
        assembly.set(
            k / w,
            k % w,
            PlacedPiece {
                piece_id: t.piece,
                rotation: t.rotation,
            },
            source[k],
        );
    }
    if (h, w) != (spec.rows, spec.cols) {
        assembly = assembly.rotated(Rotation::new(1));
    }
    Ok(assembly)
}

/// Snap, dedup, trim and fill for a finished solver state.
pub fn finish(state: &SolverState, table: &DistanceTable, spec: &PuzzleSpec) -> Result<Assembly> {
    let unknown_orientation = state.tiles.iter().any(|t| t.rotation != Rotation::NONE);
    let components = if unknown_orientation {
        dedup_replicas(&state.components, &state.tiles)
    } else {
        state.components.clone()
    };
    let grid = snap_to_grid(&state.placement, &components, &state.tiles);
    trim_and_fill(&grid, table, &state.tiles, spec, unknown_orientation)
}

/// Stitches piece pixels into an image, turning each piece as placed.
/// Empty cells stay black.
pub fn render(assembly: &Assembly, pieces: &[Piece]) -> Image {
    let p = pieces.first().map_or(0, Piece::size);
    let (w, h) = (assembly.cols * p, assembly.rows * p);
    let mut pixels = vec![[0u16; 3]; w * h];
    for r in 0..assembly.rows {
        for c in 0..assembly.cols {
            let Some(placed) = assembly.get(r, c) else {
                continue;
            };
            let piece = rotate_piece(&pieces[placed.piece_id], placed.rotation.quarter_turns() as u32);
            for pr in 0..p {
                for pc in 0..p {
                    pixels[(r * p + pr) * w + c * p + pc] = piece.pixel(pr, pc);
                }
            }
        }
    }
    Image::new(w, h, pixels)
}
