//! Reconstruction scores against ground truth.
//!
//! Truth records where each piece came from and the rotation the scramble
//! applied to it, so the expected cell content is the piece turned back by
//! the inverse rotation. Type-2 results have no canonical frame: every score
//! is taken under the best of the four global rotations unless
//! [`FramePolicy::Strict`] is asked for.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::ingest::{TruthEntry, TypeTag};
use crate::postprocess::ComponentCell;
use crate::puzzle::{Assembly, CellSource, PlacedPiece, PuzzleSpec, Rotation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FramePolicy {
    /// Best of the four global rotations (Type 2 only).
    #[default]
    Best,
    /// The truth frame only.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub direct: f64,
    pub neighbor: f64,
    pub largest_component: f64,
    pub perfect: bool,
}

/// The solved puzzle as the truth says it should look.
pub fn expected_assembly(spec: &PuzzleSpec, truth: &[TruthEntry]) -> Assembly {
    let mut a = Assembly::empty(spec.rows, spec.cols);
    for (id, t) in truth.iter().enumerate() {
        a.set(
            t.row,
            t.col,
            PlacedPiece {
                piece_id: id,
                rotation: t.rotation.inverse(),
            },
            CellSource::LpPlaced,
        );
    }
    a
}

/// Expected assemblies for every admissible frame.
fn frames(expected: &Assembly, type_tag: TypeTag, policy: FramePolicy) -> Vec<Assembly> {
    match (type_tag, policy) {
        (TypeTag::Type2, FramePolicy::Best) => (0..4).map(|g| expected.rotated(Rotation::new(g))).collect(),
        _ => vec![expected.clone()],
    }
}

fn same_shape(a: &Assembly, b: &Assembly) -> bool {
    (a.rows, a.cols) == (b.rows, b.cols)
}

fn direct_in(assembly: &Assembly, expected: &Assembly) -> f64 {
    if !same_shape(assembly, expected) || expected.cells.is_empty() {
        return 0.0;
    }
    let hits = assembly
        .cells
        .iter()
        .zip(&expected.cells)
        .filter(|(a, e)| a.is_some() && a == e)
        .count();
    hits as f64 / expected.cells.len() as f64
}

/// Ordered adjacencies `(from, to)` with the offset of `to` relative to
/// `from`, enumerated over a grid.
fn ordered_pairs(a: &Assembly) -> Vec<(PlacedPiece, PlacedPiece, (i64, i64))> {
    let mut out = Vec::new();
    for r in 0..a.rows {
        for c in 0..a.cols {
            let Some(from) = a.get(r, c) else { continue };
            for (dr, dc) in [(-1i64, 0i64), (0, 1), (1, 0), (0, -1)] {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr < 0 || nc < 0 || nr >= a.rows as i64 || nc >= a.cols as i64 {
                    continue;
                }
                if let Some(to) = a.get(nr as usize, nc as usize) {
                    out.push((from, to, (dr, dc)));
                }
            }
        }
    }
    out
}

fn neighbor_in(assembly: &Assembly, expected: &Assembly) -> f64 {
    let truth_pairs = ordered_pairs(expected);
    if truth_pairs.is_empty() {
        return 0.0;
    }
    let found: HashSet<_> = ordered_pairs(assembly).into_iter().collect();
    let hits = truth_pairs.iter().filter(|p| found.contains(p)).count();
    hits as f64 / truth_pairs.len() as f64
}

/// Fraction of cells holding the right piece in the right rotation.
pub fn direct_score(assembly: &Assembly, expected: &Assembly, type_tag: TypeTag, policy: FramePolicy) -> f64 {
    frames(expected, type_tag, policy)
        .iter()
        .map(|e| direct_in(assembly, e))
        .fold(0.0, f64::max)
}

/// Fraction of the truth's ordered, oriented adjacencies that the assembly
/// reproduces, rotations included.
pub fn neighbor_score(assembly: &Assembly, expected: &Assembly, type_tag: TypeTag, policy: FramePolicy) -> f64 {
    frames(expected, type_tag, policy)
        .iter()
        .map(|e| neighbor_in(assembly, e))
        .fold(0.0, f64::max)
}

pub fn perfect_score(assembly: &Assembly, expected: &Assembly, type_tag: TypeTag, policy: FramePolicy) -> bool {
    frames(expected, type_tag, policy)
        .iter()
        .any(|e| same_shape(assembly, e) && assembly.cells == e.cells)
}

/// Largest 4-connected set among `cells`.
fn largest_cluster(cells: &HashSet<(i64, i64)>) -> usize {
    let mut seen = HashSet::new();
    let mut best = 0;
    for &start in cells {
        if !seen.insert(start) {
            continue;
        }
        let mut stack = vec![start];
        let mut size = 0;
        while let Some((r, c)) = stack.pop() {
            size += 1;
            for n in [(r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)] {
                if cells.contains(&n) && seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        best = best.max(size);
    }
    best
}

/// Size of the largest correctly arranged piece cluster over all
/// components, as a fraction of the piece count.
///
/// A member is correct for a component translation when it sits at its
/// truth cell, rotation included, once the component is slid by that
/// translation; so a component that is right but shifted still counts in
/// full.
pub fn largest_component_score(
    components: &[Vec<ComponentCell>],
    expected: &Assembly,
    type_tag: TypeTag,
    policy: FramePolicy,
) -> f64 {
    let n = expected.cells.iter().filter(|c| c.is_some()).count();
    if n == 0 {
        return 0.0;
    }
    let mut best = 0;
    for frame in frames(expected, type_tag, policy) {
        let mut at: HashMap<usize, (i64, i64, Rotation)> = HashMap::new();
        for r in 0..frame.rows {
            for c in 0..frame.cols {
                if let Some(p) = frame.get(r, c) {
                    at.insert(p.piece_id, (r as i64, c as i64, p.rotation));
                }
            }
        }
        for comp in components {
            let mut by_shift: BTreeMap<(i64, i64), HashSet<(i64, i64)>> = BTreeMap::new();
            for m in comp {
                if let Some(&(r, c, rot)) = at.get(&m.piece_id) {
                    if rot == m.rotation {
                        by_shift.entry((r - m.dy, c - m.dx)).or_default().insert((m.dy, m.dx));
                    }
                }
            }
            for cells in by_shift.values() {
                best = best.max(largest_cluster(cells));
            }
        }
    }
    best as f64 / n as f64
}

/// The assembly read as a single component.
pub fn assembly_as_component(assembly: &Assembly) -> Vec<ComponentCell> {
    let mut out = Vec::new();
    for r in 0..assembly.rows {
        for c in 0..assembly.cols {
            if let Some(p) = assembly.get(r, c) {
                out.push(ComponentCell {
                    piece_id: p.piece_id,
                    rotation: p.rotation,
                    dx: c as i64,
                    dy: r as i64,
                });
            }
        }
    }
    out
}

/// All four scores. Without solver components the largest-component score
/// falls back to the assembly itself.
pub fn score(
    assembly: &Assembly,
    components: Option<&[Vec<ComponentCell>]>,
    spec: &PuzzleSpec,
    truth: &[TruthEntry],
    type_tag: TypeTag,
    policy: FramePolicy,
) -> ScoreReport {
    let expected = expected_assembly(spec, truth);
    let whole = [assembly_as_component(assembly)];
    let components = components.unwrap_or(&whole);
    ScoreReport {
        direct: direct_score(assembly, &expected, type_tag, policy),
        neighbor: neighbor_score(assembly, &expected, type_tag, policy),
        largest_component: largest_component_score(components, &expected, type_tag, policy),
        perfect: perfect_score(assembly, &expected, type_tag, policy),
    }
}
