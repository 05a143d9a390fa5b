//! Exact solver for the one-axis weighted-L1 placement problem
//!
//! ```text
//! minimise  Σ w · |x_u - x_v - δ|   subject to  x_a = α_a  for anchored a
//! ```
//!
//! in its auxiliary-variable LP form. [`solve_axis`] solves the dual
//! min-cost circulation with a network simplex, so coordinates come out as
//! node potentials: sums of term deltas along basis paths, with crisp
//! residuals. [`oracle_solve`] solves the same LP with a dense tableau and
//! exists to cross-check the main path.

mod network;
mod oracle;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use oracle::{oracle_solve, ORACLE_MAX_TERMS, ORACLE_MAX_VARS};

/// One weighted difference constraint `w · |x_u - x_v - δ|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub u: usize,
    pub v: usize,
    pub delta: i64,
    pub weight: f64,
}

impl Term {
    pub fn new(u: usize, v: usize, delta: i64, weight: f64) -> Self {
        Self { u, v, delta, weight }
    }

    pub fn residual(&self, values: &[f64]) -> f64 {
        (values[self.u] - values[self.v] - self.delta as f64).abs()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlacementProblem {
    pub var_count: usize,
    pub terms: Vec<Term>,
    /// Variables pinned to fixed values.
    pub anchors: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementSolution {
    pub values: Vec<f64>,
    pub objective: f64,
    /// `|x_u - x_v - δ|` per term, in term order.
    pub residuals: Vec<f64>,
}

impl PlacementProblem {
    pub fn new(var_count: usize) -> Self {
        Self {
            var_count,
            ..Self::default()
        }
    }

    pub fn with_terms(var_count: usize, terms: Vec<Term>) -> Self {
        Self {
            var_count,
            terms,
            anchors: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, u: usize, v: usize, delta: i64, weight: f64) {
        self.terms.push(Term::new(u, v, delta, weight));
    }

    pub fn validate(&self) -> Result<()> {
        for (k, t) in self.terms.iter().enumerate() {
            if t.u >= self.var_count || t.v >= self.var_count {
                return Err(Error::InvalidProblem(format!(
                    "term {k} references variable outside 0..{}",
                    self.var_count
                )));
            }
            if t.u == t.v {
                return Err(Error::InvalidProblem(format!("term {k} links {} to itself", t.u)));
            }
            if !(t.weight > 0.0 && t.weight.is_finite()) {
                return Err(Error::InvalidProblem(format!(
                    "term {k} has non-positive or non-finite weight {}",
                    t.weight
                )));
            }
        }
        for (&a, &value) in &self.anchors {
            if a >= self.var_count || !value.is_finite() {
                return Err(Error::InvalidProblem(format!("bad anchor {a} = {value}")));
            }
        }
        Ok(())
    }

    /// `Σ w · |x_u - x_v - δ|` at `values`.
    pub fn objective(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.weight * t.residual(values)).sum()
    }

    /// Packages `values` with their residuals and objective.
    pub fn evaluate(&self, values: Vec<f64>) -> PlacementSolution {
        let residuals: Vec<f64> = self.terms.iter().map(|t| t.residual(&values)).collect();
        let objective = self
            .terms
            .iter()
            .zip(&residuals)
            .map(|(t, r)| t.weight * r)
            .sum();
        PlacementSolution {
            values,
            objective,
            residuals,
        }
    }

    /// Shifts every unanchored connected component so its minimum is 0.
    /// `extra_links` joins variables that must be treated as one component.
    pub(crate) fn normalize(&self, values: &mut [f64], extra_links: &[(usize, usize)]) {
        let mut uf = UnionFind::new(self.var_count);
        for t in &self.terms {
            uf.union(t.u, t.v);
        }
        for &(a, b) in extra_links {
            uf.union(a, b);
        }
        let mut anchored = vec![false; self.var_count];
        for &a in self.anchors.keys() {
            anchored[uf.find(a)] = true;
        }
        let mut min = vec![f64::INFINITY; self.var_count];
        for v in 0..self.var_count {
            let r = uf.find(v);
            min[r] = min[r].min(values[v]);
        }
        for v in 0..self.var_count {
            let r = uf.find(v);
            if !anchored[r] {
                values[v] -= min[r];
            }
        }
    }
}

/// Globally optimal solution of the weighted-L1 axis problem.
///
/// Anchored variables are eliminated before solving. Among multiple optima
/// the network simplex pivot order picks one deterministically, and every
/// unanchored component is translated so its minimum coordinate is 0.
///
/// # Panics
///
/// If `problem` fails [`PlacementProblem::validate`].
pub fn solve_axis(problem: &PlacementProblem) -> PlacementSolution {
    if let Err(e) = problem.validate() {
        panic!("solve_axis: {e}");
    }
    let n = problem.var_count;

    // Free variables get dense node ids; every anchored variable collapses
    // onto one ground node with its anchor value as a fixed shift.
    let mut node_of = vec![usize::MAX; n];
    let mut free = 0;
    for (v, slot) in node_of.iter_mut().enumerate() {
        if !problem.anchors.contains_key(&v) {
            *slot = free;
            free += 1;
        }
    }
    let ground = free;
    let has_ground = !problem.anchors.is_empty();
    let node_count = free + usize::from(has_ground);
    let endpoint = |v: usize| -> (usize, f64) {
        match problem.anchors.get(&v) {
            Some(&alpha) => (ground, alpha),
            None => (node_of[v], 0.0),
        }
    };

    let mut arcs = Vec::with_capacity(2 * problem.terms.len());
    for t in &problem.terms {
        let (a, shift_a) = endpoint(t.u);
        let (b, shift_b) = endpoint(t.v);
        if a == b {
            // Both ends pinned: the residual is a constant.
            continue;
        }
        let delta = t.delta as f64 - shift_a + shift_b;
        arcs.push(network::Arc {
            source: a,
            target: b,
            cost: delta,
            cap: t.weight,
        });
        arcs.push(network::Arc {
            source: b,
            target: a,
            cost: -delta,
            cap: t.weight,
        });
    }

    let circulation = network::solve(node_count, &arcs);
    log::trace!("network simplex: {} nodes, {} arcs, {} pivots", node_count, arcs.len(), circulation.pivots);
    let pi = &circulation.potential;
    let ground_pi = if has_ground { pi[ground] } else { 0.0 };
    let mut values: Vec<f64> = (0..n)
        .map(|v| match problem.anchors.get(&v) {
            Some(&alpha) => alpha,
            // x = -π relative to the ground node.
            None => ground_pi - pi[node_of[v]],
        })
        .collect();
    problem.normalize(&mut values, &[]);
    problem.evaluate(values)
}

/// One group of variables fused into a super-node: members with their
/// integer offsets from the group origin.
pub type Group = Vec<(usize, i64)>;

/// A placement problem rewritten over super-nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapsedProblem {
    pub problem: PlacementProblem,
    /// For every original variable: its super-node and offset.
    pub member_of: Vec<(usize, i64)>,
    /// Weighted residual of terms internal to a group that cannot be satisfied.
    pub constant: f64,
    /// Original term index for each term of `problem`.
    pub term_origin: Vec<usize>,
}

/// Rewrites `problem` so that every group becomes one variable,
/// `x_member = X_group + offset`.
///
/// Variables missing from `groups` become singleton groups. Terms inside a
/// group with zero adjusted residual are dropped; internal terms that the
/// offsets violate only contribute a constant.
pub fn collapse(problem: &PlacementProblem, groups: &[Group]) -> Result<CollapsedProblem> {
    let n = problem.var_count;
    let mut member_of = vec![(usize::MAX, 0i64); n];
    let mut group_count = 0;
    for group in groups {
        if group.is_empty() {
            continue;
        }
        for &(v, offset) in group {
            if v >= n {
                return Err(Error::InconsistentGroups(format!("variable {v} out of range")));
            }
            if member_of[v].0 != usize::MAX {
                return Err(Error::InconsistentGroups(format!(
                    "variable {v} assigned to two groups or twice to one"
                )));
            }
            member_of[v] = (group_count, offset);
        }
        group_count += 1;
    }
    for slot in member_of.iter_mut() {
        if slot.0 == usize::MAX {
            *slot = (group_count, 0);
            group_count += 1;
        }
    }

    let mut anchors = BTreeMap::new();
    for (&v, &alpha) in &problem.anchors {
        let (g, offset) = member_of[v];
        let value = alpha - offset as f64;
        if let Some(prev) = anchors.insert(g, value) {
            if prev != value {
                return Err(Error::InconsistentGroups(format!(
                    "group {g} pinned to both {prev} and {value}"
                )));
            }
        }
    }

    let mut terms = Vec::new();
    let mut term_origin = Vec::new();
    let mut constant = 0.0;
    for (k, t) in problem.terms.iter().enumerate() {
        let (gu, ou) = member_of[t.u];
        let (gv, ov) = member_of[t.v];
        // x_u - x_v - δ = X_gu - X_gv - (δ - o_u + o_v)
        let delta = t.delta - ou + ov;
        if gu == gv {
            constant += t.weight * (delta as f64).abs();
        } else {
            terms.push(Term::new(gu, gv, delta, t.weight));
            term_origin.push(k);
        }
    }

    Ok(CollapsedProblem {
        problem: PlacementProblem {
            var_count: group_count,
            terms,
            anchors,
        },
        member_of,
        constant,
        term_origin,
    })
}

impl CollapsedProblem {
    /// Maps a super-node solution back onto the original variables and
    /// re-evaluates it against `original`.
    pub fn expand(&self, original: &PlacementProblem, solution: &PlacementSolution) -> PlacementSolution {
        let mut values: Vec<f64> = self
            .member_of
            .iter()
            .map(|&(g, offset)| solution.values[g] + offset as f64)
            .collect();
        let mut first_member = vec![usize::MAX; self.problem.var_count];
        let mut links = Vec::new();
        for (v, &(g, _)) in self.member_of.iter().enumerate() {
            if first_member[g] == usize::MAX {
                first_member[g] = v;
            } else {
                links.push((first_member[g], v));
            }
        }
        original.normalize(&mut values, &links);
        original.evaluate(values)
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        // Smaller root wins so results do not depend on union order.
        if ra < rb {
            self.parent[rb] = ra;
        } else {
            self.parent[ra] = rb;
        }
        true
    }
}

#[cfg(test)]
mod tests;
