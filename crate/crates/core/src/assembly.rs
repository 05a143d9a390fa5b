//! The successive-LP loop: select active matches, solve both axis LPs,
//! reject inconsistent matches, repeat. Covers the free, constrained and
//! hybrid variants and the rotation-replica reduction for puzzles with
//! unknown piece orientation.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::compat::{
    active_set, build_distance_table, build_tile_table, build_weights, replica_tiles, DistanceTable, MatchKey,
    OrientedMatch, Tile, Universe,
};
use crate::error::{Error, Result};
use crate::ingest::{PuzzleBundle, TypeTag};
use crate::lpsolve::{collapse, solve_axis, Group, PlacementProblem, PlacementSolution};
use crate::puzzle::{Placement, Rotation};

pub const DEFAULT_MAX_ITERS: usize = 10;
pub const DEFAULT_REJECT_TOL: f64 = 1e-5;
pub const DEFAULT_ANCHOR_COORD: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Free,
    Constrained,
    Hybrid,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free" => Ok(Mode::Free),
            "constrained" => Ok(Mode::Constrained),
            "hybrid" => Ok(Mode::Hybrid),
            other => Err(Error::InvalidSpec(format!("unknown variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Free => "free",
            Mode::Constrained => "constrained",
            Mode::Hybrid => "hybrid",
        })
    }
}

/// How the piece whose replicas get pinned is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PinRule {
    /// The piece in the single highest-weight initial match.
    BestMatch,
    /// The piece with the largest summed weight over its initial matches.
    BestPiece,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariantConfig {
    pub mode: Mode,
    pub max_iters: usize,
    pub reject_tol: f64,
    pub type2_anchor_coord: f64,
    /// Keep the weights of the initial universe instead of recomputing the
    /// best-alternative minima over the surviving matches every iteration.
    pub fixed_weights: bool,
    pub pin_rule: PinRule,
}

impl Default for VariantConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Hybrid,
            max_iters: DEFAULT_MAX_ITERS,
            reject_tol: DEFAULT_REJECT_TOL,
            type2_anchor_coord: DEFAULT_ANCHOR_COORD,
            fixed_weights: false,
            pin_rule: PinRule::BestMatch,
        }
    }
}

impl VariantConfig {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reject_tol > 0.0) {
            return Err(Error::InvalidSpec(format!("reject_tol must be positive, got {}", self.reject_tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidSpec("max_iters must be at least 1".into()));
        }
        if !(self.type2_anchor_coord.is_finite() && self.type2_anchor_coord > 0.0) {
            return Err(Error::InvalidSpec("type2_anchor_coord must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentMember {
    pub tile: usize,
    pub dx: i64,
    pub dy: i64,
}

/// Tiles rigidly linked by residual-consistent matches, with integer grid
/// offsets. Members are sorted by tile and the first sits at `(0, 0)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub members: Vec<ComponentMember>,
}

impl Component {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// One pass of the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub variant: Mode,
    pub k: usize,
    pub universe: usize,
    pub active: usize,
    pub rejected: usize,
    pub objective_x: f64,
    pub objective_y: f64,
    /// Components with at least two tiles.
    pub components: usize,
    pub largest_component: usize,
    pub skipped_slots: usize,
    /// Weighted L0 cost of this iteration's placement over the initial
    /// active set.
    pub l0_cost: f64,
    #[serde(skip)]
    pub rejected_keys: Vec<MatchKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridChoice {
    pub winner: Mode,
    pub free_l0: f64,
    pub constrained_l0: f64,
    pub free_objective: f64,
    pub constrained_objective: f64,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    /// What each LP variable stands for.
    pub tiles: Vec<Tile>,
    /// Index of the iteration the placement comes from.
    pub k: usize,
    pub universe: Universe,
    pub active: Vec<OrientedMatch>,
    /// `A^(0)` with its weights; the reference set for L0 costs.
    pub initial_active: Vec<OrientedMatch>,
    pub placement: Placement,
    pub components: Vec<Component>,
    pub history: Vec<IterationRecord>,
    /// Whether the loop stopped with an empty rejection set.
    pub converged: bool,
    /// Free or constrained: the loop that produced the placement.
    pub variant: Mode,
    pub l0_cost: f64,
    pub anchors: BTreeMap<usize, (f64, f64)>,
    pub hybrid: Option<HybridChoice>,
}

impl SolverState {
    /// LP solves performed by the loop that produced the result.
    pub fn iterations(&self) -> usize {
        self.history.iter().filter(|r| r.variant == self.variant).count()
    }
}

/// Matches of `active` violated on either axis by more than `tol`.
pub fn reject_matches(active: &[OrientedMatch], placement: &Placement, tol: f64) -> Vec<MatchKey> {
    active
        .iter()
        .filter(|m| !consistent(m, placement, tol))
        .map(OrientedMatch::key)
        .collect()
}

fn consistent(m: &OrientedMatch, placement: &Placement, tol: f64) -> bool {
    let (dx, dy) = m.o.offsets();
    (placement.x[m.i] - placement.x[m.j] - dx as f64).abs() <= tol
        && (placement.y[m.i] - placement.y[m.j] - dy as f64).abs() <= tol
}

/// `Σ w·[|x_i - x_j - δx| > tol] + Σ w·[|y_i - y_j - δy| > tol]` over `matches`.
pub fn weighted_l0(matches: &[OrientedMatch], placement: &Placement, tol: f64) -> f64 {
    matches
        .iter()
        .map(|m| {
            let (dx, dy) = m.o.offsets();
            let bx = (placement.x[m.i] - placement.x[m.j] - dx as f64).abs() > tol;
            let by = (placement.y[m.i] - placement.y[m.j] - dy as f64).abs() > tol;
            m.weight * (f64::from(u8::from(bx)) + f64::from(u8::from(by)))
        })
        .sum()
}

struct ComponentBuilder {
    comp_of: Vec<usize>,
    offset: Vec<(i64, i64)>,
    members: Vec<Vec<usize>>,
    cells: Vec<HashMap<(i64, i64), usize>>,
}

impl ComponentBuilder {
    fn new(n: usize) -> Self {
        Self {
            comp_of: (0..n).collect(),
            offset: vec![(0, 0); n],
            members: (0..n).map(|t| vec![t]).collect(),
            cells: (0..n).map(|t| HashMap::from([((0, 0), t)])).collect(),
        }
    }

    /// Puts `j` at `offset(i) + d`, moving j's whole component. Refuses
    /// (returns false) on contradiction or if two tiles would share a cell.
    fn link(&mut self, i: usize, j: usize, d: (i64, i64)) -> bool {
        let (ci, cj) = (self.comp_of[i], self.comp_of[j]);
        let want = (self.offset[i].0 + d.0, self.offset[i].1 + d.1);
        if ci == cj {
            return self.offset[j] == want;
        }
        let shift = (want.0 - self.offset[j].0, want.1 - self.offset[j].1);
        // Move the smaller component into the larger one.
        let (keep, gone, shift) = if self.members[cj].len() <= self.members[ci].len() {
            (ci, cj, shift)
        } else {
            (cj, ci, (-shift.0, -shift.1))
        };
        let moved = |t: usize, off: &[(i64, i64)]| (off[t].0 + shift.0, off[t].1 + shift.1);
        if self.members[gone]
            .iter()
            .any(|&t| self.cells[keep].contains_key(&moved(t, &self.offset)))
        {
            return false;
        }
        let gone_members = std::mem::take(&mut self.members[gone]);
        self.cells[gone].clear();
        for &t in &gone_members {
            let cell = moved(t, &self.offset);
            self.offset[t] = cell;
            self.comp_of[t] = keep;
            self.cells[keep].insert(cell, t);
        }
        self.members[keep].extend(gone_members);
        true
    }

    fn finish(self) -> Vec<Component> {
        let mut out: Vec<Component> = self
            .members
            .iter()
            .filter(|m| !m.is_empty())
            .map(|m| {
                let mut tiles = m.clone();
                tiles.sort_unstable();
                let base = self.offset[tiles[0]];
                Component {
                    members: tiles
                        .into_iter()
                        .map(|t| ComponentMember {
                            tile: t,
                            dx: self.offset[t].0 - base.0,
                            dy: self.offset[t].1 - base.1,
                        })
                        .collect(),
                }
            })
            .collect();
        out.sort_by_key(|c| c.members[0].tile);
        out
    }
}

/// Connected components of the residual-consistent matches of `active`.
///
/// Matches are linked strongest first; a link that would put two tiles on
/// the same cell is dropped, so a collision inside a component breaks the
/// weaker of the conflicting matches. `seeds` (frozen components from
/// earlier iterations) are linked before any match. Every tile appears in
/// exactly one output component.
pub fn component_extraction(
    active: &[OrientedMatch],
    placement: &Placement,
    tol: f64,
    seeds: &[Component],
) -> Vec<Component> {
    let mut builder = ComponentBuilder::new(placement.len());
    for seed in seeds {
        let base = seed.members[0];
        for m in &seed.members[1..] {
            let linked = builder.link(base.tile, m.tile, (m.dx - base.dx, m.dy - base.dy));
            debug_assert!(linked, "frozen components overlap");
        }
    }
    let mut edges: Vec<&OrientedMatch> = active.iter().filter(|m| consistent(m, placement, tol)).collect();
    edges.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.key().cmp(&b.key())));
    for m in edges {
        let (dx, dy) = m.o.offsets();
        builder.link(m.i, m.j, (-dx, -dy));
    }
    builder.finish()
}

/// Solves both axis LPs for `matches`, optionally with `groups` fused into
/// rigid super-nodes.
fn solve_placement(
    n: usize,
    matches: &[OrientedMatch],
    anchors: &BTreeMap<usize, (f64, f64)>,
    groups: &[Component],
) -> Result<(Placement, f64, f64)> {
    let mut px = PlacementProblem::new(n);
    let mut py = PlacementProblem::new(n);
    for m in matches.iter().filter(|m| m.weight > 0.0) {
        let (dx, dy) = m.o.offsets();
        px.push(m.i, m.j, dx, m.weight);
        py.push(m.i, m.j, dy, m.weight);
    }
    for (&t, &(ax, ay)) in anchors {
        px.anchors.insert(t, ax);
        py.anchors.insert(t, ay);
    }
    let solve = |p: &PlacementProblem, axis_x: bool| -> Result<PlacementSolution> {
        if groups.is_empty() {
            return Ok(solve_axis(p));
        }
        let fused: Vec<Group> = groups
            .iter()
            .map(|c| {
                c.members
                    .iter()
                    .map(|m| (m.tile, if axis_x { m.dx } else { m.dy }))
                    .collect()
            })
            .collect();
        let collapsed = collapse(p, &fused)?;
        Ok(collapsed.expand(p, &solve_axis(&collapsed.problem)))
    };
    let (sx, sy) = rayon::join(|| solve(&px, true), || solve(&py, false));
    let (sx, sy) = (sx?, sy?);
    Ok((
        Placement {
            objective: sx.objective + sy.objective,
            x: sx.values,
            y: sy.values,
        },
        sx.objective,
        sy.objective,
    ))
}

struct Snapshot {
    k: usize,
    active: Vec<OrientedMatch>,
    placement: Placement,
    components: Vec<Component>,
    l0: f64,
}

/// Runs the free or constrained loop over a prebuilt table.
pub fn run_loop(
    table: &DistanceTable,
    tiles: Vec<Tile>,
    anchors: BTreeMap<usize, (f64, f64)>,
    variant: Mode,
    cfg: &VariantConfig,
) -> Result<SolverState> {
    cfg.validate()?;
    assert!(variant != Mode::Hybrid, "run_loop takes a single variant");
    let n = table.len_tiles();
    assert_eq!(tiles.len(), n);
    let tol = cfg.reject_tol;
    let mut universe = Universe::full(table);
    let w0 = build_weights(table, &universe);
    let a0 = active_set(table, &universe, &w0);
    let initial_active = a0.matches.clone();

    let mut history = Vec::new();
    let mut frozen: Vec<Component> = Vec::new();
    let mut best: Option<Snapshot> = None;
    for k in 0..cfg.max_iters {
        let active = if k == 0 {
            a0.clone()
        } else if cfg.fixed_weights {
            active_set(table, &universe, &w0)
        } else {
            active_set(table, &universe, &build_weights(table, &universe))
        };
        let (placement, objective_x, objective_y) = solve_placement(n, &active.matches, &anchors, &frozen)?;
        let rejected = reject_matches(&active.matches, &placement, tol);
        let components = component_extraction(&active.matches, &placement, tol, &frozen);
        let l0 = weighted_l0(&initial_active, &placement, tol);
        history.push(IterationRecord {
            variant,
            k,
            universe: universe.len(),
            active: active.matches.len(),
            rejected: rejected.len(),
            objective_x,
            objective_y,
            components: components.iter().filter(|c| c.len() > 1).count(),
            largest_component: components.iter().map(Component::len).max().unwrap_or(0),
            skipped_slots: active.skipped_slots,
            l0_cost: l0,
            rejected_keys: rejected.clone(),
        });
        log::debug!(
            "{variant} k={k} |U|={} |A|={} |R|={} obj=({objective_x:.3}, {objective_y:.3}) L0={l0:.3}",
            universe.len(),
            active.matches.len(),
            rejected.len()
        );
        let done = rejected.is_empty();
        if best.as_ref().is_none_or(|b| l0 <= b.l0) || done {
            best = Some(Snapshot {
                k,
                active: active.matches,
                placement,
                components: components.clone(),
                l0,
            });
        }
        if done {
            break;
        }
        for key in &rejected {
            universe.remove(key.i, key.j, key.o);
        }
        if variant == Mode::Constrained {
            frozen = components.into_iter().filter(|c| c.len() > 1).collect();
        }
    }
    let converged = history.last().is_some_and(|r| r.rejected == 0);
    if !converged {
        log::warn!("{variant} loop hit max_iters = {} with matches still rejected", cfg.max_iters);
    }
    let best = best.expect("at least one iteration");
    Ok(SolverState {
        tiles,
        k: best.k,
        universe,
        active: best.active,
        initial_active,
        placement: best.placement,
        components: best.components,
        history,
        converged,
        variant,
        l0_cost: best.l0,
        anchors,
        hybrid: None,
    })
}

/// Runs `cfg.mode`; hybrid runs both loops and keeps the one with the
/// smaller weighted L0 cost (free on ties).
pub fn solve_with_table(
    table: &DistanceTable,
    tiles: Vec<Tile>,
    anchors: BTreeMap<usize, (f64, f64)>,
    cfg: &VariantConfig,
) -> Result<SolverState> {
    match cfg.mode {
        Mode::Free | Mode::Constrained => run_loop(table, tiles, anchors, cfg.mode, cfg),
        Mode::Hybrid => {
            let (free, constrained) = rayon::join(
                || run_loop(table, tiles.clone(), anchors.clone(), Mode::Free, cfg),
                || run_loop(table, tiles.clone(), anchors.clone(), Mode::Constrained, cfg),
            );
            let (free, constrained) = (free?, constrained?);
            let choice = HybridChoice {
                winner: if constrained.l0_cost < free.l0_cost {
                    Mode::Constrained
                } else {
                    Mode::Free
                },
                free_l0: free.l0_cost,
                constrained_l0: constrained.l0_cost,
                free_objective: free.placement.objective,
                constrained_objective: constrained.placement.objective,
            };
            log::info!(
                "hybrid: free L0 {:.4}, constrained L0 {:.4}, keeping {}",
                choice.free_l0,
                choice.constrained_l0,
                choice.winner
            );
            let history = [free.history.clone(), constrained.history.clone()].concat();
            let mut kept = if choice.winner == Mode::Free { free } else { constrained };
            kept.history = history;
            kept.hybrid = Some(choice);
            Ok(kept)
        }
    }
}

/// Solves a puzzle whose pieces have their correct orientation.
pub fn solve_type1(bundle: &PuzzleBundle, cfg: &VariantConfig) -> Result<SolverState> {
    let table = build_distance_table(&bundle.pieces);
    solve_type1_with_table(&table, cfg)
}

pub fn solve_type1_with_table(table: &DistanceTable, cfg: &VariantConfig) -> Result<SolverState> {
    if table.len_tiles() < 3 {
        return Err(Error::InvalidSpec("need at least 3 pieces".into()));
    }
    let tiles = (0..table.len_tiles())
        .map(|piece| Tile {
            piece,
            rotation: Rotation::NONE,
        })
        .collect();
    solve_with_table(table, tiles, BTreeMap::new(), cfg)
}

/// Anchor coordinates of the four replicas of the pinned piece, in
/// rotation order.
pub fn replica_anchor_coords(a: f64) -> [(f64, f64); 4] {
    [(a, a), (a, -a), (-a, a), (-a, -a)]
}

/// Picks the piece whose replicas get pinned and returns the anchor map.
pub fn type2_anchors(table: &DistanceTable, tiles: &[Tile], cfg: &VariantConfig) -> BTreeMap<usize, (f64, f64)> {
    let universe = Universe::full(table);
    let weights = build_weights(table, &universe);
    let a0 = active_set(table, &universe, &weights).matches;
    let piece = match cfg.pin_rule {
        PinRule::BestMatch => {
            let best = a0
                .iter()
                .min_by(|a, b| b.weight.total_cmp(&a.weight).then(a.key().cmp(&b.key())))
                .expect("non-empty active set");
            tiles[best.i].piece
        }
        PinRule::BestPiece => {
            let mut total: BTreeMap<usize, f64> = BTreeMap::new();
            for m in &a0 {
                *total.entry(tiles[m.i].piece).or_default() += m.weight;
            }
            total
                .iter()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&p, _)| p)
                .expect("non-empty active set")
        }
    };
    let coords = replica_anchor_coords(cfg.type2_anchor_coord);
    tiles
        .iter()
        .enumerate()
        .filter(|(_, t)| t.piece == piece)
        .map(|(idx, t)| (idx, coords[t.rotation.quarter_turns() as usize]))
        .collect()
}

/// Solves a puzzle with unknown piece orientation as a Type-1 puzzle over
/// all four rotations of every piece, with one piece's replicas pinned far
/// apart so each grows its own copy of the image.
pub fn solve_type2(bundle: &PuzzleBundle, cfg: &VariantConfig) -> Result<SolverState> {
    let tiles = replica_tiles(bundle.pieces.len());
    let table = build_tile_table(&bundle.pieces, &tiles);
    solve_type2_with_table(&table, tiles, cfg)
}

pub fn solve_type2_with_table(table: &DistanceTable, tiles: Vec<Tile>, cfg: &VariantConfig) -> Result<SolverState> {
    cfg.validate()?;
    let anchors = type2_anchors(table, &tiles, cfg);
    solve_with_table(table, tiles, anchors, cfg)
}

pub fn solve_bundle(bundle: &PuzzleBundle, cfg: &VariantConfig) -> Result<SolverState> {
    match bundle.type_tag {
        TypeTag::Type1 => solve_type1(bundle, cfg),
        TypeTag::Type2 => solve_type2(bundle, cfg),
    }
}

/// Number of extra replicas of some piece sharing a component with another
/// replica of the same piece.
pub fn replica_conflicts(components: &[Component], tiles: &[Tile]) -> usize {
    components
        .iter()
        .map(|c| {
            let mut seen = std::collections::HashSet::new();
            c.members.iter().filter(|m| !seen.insert(tiles[m.tile].piece)).count()
        })
        .sum()
}

/// Iteration trace as JSON lines.
pub fn trace_lines(history: &[IterationRecord]) -> String {
    history
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialise") + "\n")
        .collect()
}

#[cfg(test)]
mod tests;
