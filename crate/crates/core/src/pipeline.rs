//! Bundle in, assembly out.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assembly::{solve_with_table, type2_anchors, HybridChoice, Mode, SolverState, VariantConfig};
use crate::compat::{build_tile_table, replica_tiles, DistanceTable, Tile};
use crate::error::{Error, Result};
use crate::ingest::{PuzzleBundle, TypeTag};
use crate::postprocess::{component_cells, finish, ComponentCell};
use crate::puzzle::{Assembly, Rotation};

/// The LP variables for a bundle: pieces as they are, or every piece in all
/// four rotations when orientation is unknown.
pub fn tiles_for(bundle: &PuzzleBundle) -> Vec<Tile> {
    match bundle.type_tag {
        TypeTag::Type1 => (0..bundle.pieces.len())
            .map(|piece| Tile {
                piece,
                rotation: Rotation::NONE,
            })
            .collect(),
        TypeTag::Type2 => replica_tiles(bundle.pieces.len()),
    }
}

/// Builds the distance table, going through `cache` when given. Returns
/// whether the cache was used.
pub fn distance_table(bundle: &PuzzleBundle, tiles: &[Tile], cache: Option<&Path>) -> Result<(DistanceTable, bool)> {
    if let Some(path) = cache {
        if path.exists() {
            match DistanceTable::read_cache(path, tiles.len(), bundle.spec.piece_px) {
                Ok(table) => return Ok((table, true)),
                Err(e) => log::warn!("ignoring distance cache: {e}"),
            }
        }
    }
    let table = build_tile_table(&bundle.pieces, tiles);
    if let Some(path) = cache {
        table.write_cache(path)?;
    }
    Ok((table, false))
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub state: SolverState,
    pub assembly: Assembly,
    pub cache_hit: bool,
    pub table_seconds: f64,
    pub solve_seconds: f64,
}

impl Solution {
    pub fn components(&self) -> Vec<Vec<ComponentCell>> {
        component_cells(&self.state.components, &self.state.tiles)
    }
}

pub fn solve_puzzle(bundle: &PuzzleBundle, cfg: &VariantConfig, cache: Option<&Path>) -> Result<Solution> {
    cfg.validate()?;
    if bundle.pieces.len() < 3 {
        return Err(Error::InvalidSpec("need at least 3 pieces".into()));
    }
    let started = Instant::now();
    let tiles = tiles_for(bundle);
    let (table, cache_hit) = distance_table(bundle, &tiles, cache)?;
    let table_seconds = started.elapsed().as_secs_f64();
    let anchors = match bundle.type_tag {
        TypeTag::Type1 => BTreeMap::new(),
        TypeTag::Type2 => type2_anchors(&table, &tiles, cfg),
    };
    let state = solve_with_table(&table, tiles, anchors, cfg)?;
    let assembly = finish(&state, &table, &bundle.spec)?;
    let solve_seconds = started.elapsed().as_secs_f64() - table_seconds;
    log::info!(
        "solved {}x{} ({:?}): {} iterations, converged {}, table {:.2}s, solve {:.2}s",
        bundle.spec.rows,
        bundle.spec.cols,
        bundle.type_tag,
        state.iterations(),
        state.converged,
        table_seconds,
        solve_seconds
    );
    Ok(Solution {
        state,
        assembly,
        cache_hit,
        table_seconds,
        solve_seconds,
    })
}

/// What `solve` writes as `assembly.json`: the grid plus what scoring the
/// LP components needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyFile {
    #[serde(flatten)]
    pub assembly: Assembly,
    pub type_tag: TypeTag,
    pub variant: Mode,
    pub converged: bool,
    pub iterations: usize,
    /// Wall-clock time of table build plus solve.
    pub seconds: f64,
    pub hybrid: Option<HybridChoice>,
    pub components: Vec<Vec<ComponentCell>>,
}

impl AssemblyFile {
    pub fn new(solution: &Solution, type_tag: TypeTag) -> Self {
        Self {
            assembly: solution.assembly.clone(),
            type_tag,
            variant: solution.state.variant,
            converged: solution.state.converged,
            iterations: solution.state.iterations(),
            seconds: solution.table_seconds + solution.solve_seconds,
            hybrid: solution.state.hybrid.clone(),
            components: solution.components(),
        }
    }
}
