//! Dense-tableau simplex over the auxiliary-variable LP.
//!
//! Each term `e` becomes the row `x_u - x_v - p_e + q_e = δ_e` with
//! `p_e, q_e ≥ 0` and cost `w_e (p_e + q_e)`; free coordinates are split as
//! `x = x⁺ - x⁻`. Anchored coordinates are folded into the right-hand side.
//! The slack pair of each row gives an immediate feasible basis.

use super::{PlacementProblem, PlacementSolution};
use crate::error::{Error, Result};

pub const ORACLE_MAX_VARS: usize = 200;
pub const ORACLE_MAX_TERMS: usize = 1000;

const EPS: f64 = 1e-11;

pub fn oracle_solve(problem: &PlacementProblem) -> Result<PlacementSolution> {
    problem.validate()?;
    if problem.var_count > ORACLE_MAX_VARS || problem.terms.len() > ORACLE_MAX_TERMS {
        return Err(Error::OracleTooLarge {
            vars: problem.var_count,
            terms: problem.terms.len(),
            max_vars: ORACLE_MAX_VARS,
            max_terms: ORACLE_MAX_TERMS,
        });
    }

    let n = problem.var_count;
    let m = problem.terms.len();
    // Column layout: [x⁺_0..n | x⁻_0..n | p_0..m | q_0..m | rhs]
    let cols = 2 * n + 2 * m;
    let width = cols + 1;
    let p_col = |e: usize| 2 * n + e;
    let q_col = |e: usize| 2 * n + m + e;

    let mut tab = vec![0.0f64; m * width];
    let mut basis = vec![0usize; m];
    let mut cost = vec![0.0f64; cols];
    for (e, t) in problem.terms.iter().enumerate() {
        cost[p_col(e)] = t.weight;
        cost[q_col(e)] = t.weight;
        let row = &mut tab[e * width..(e + 1) * width];
        let mut rhs = t.delta as f64;
        match problem.anchors.get(&t.u) {
            Some(&a) => rhs -= a,
            None => {
                row[t.u] += 1.0;
                row[n + t.u] -= 1.0;
            }
        }
        match problem.anchors.get(&t.v) {
            Some(&a) => rhs += a,
            None => {
                row[t.v] -= 1.0;
                row[n + t.v] += 1.0;
            }
        }
        row[p_col(e)] = -1.0;
        row[q_col(e)] = 1.0;
        row[cols] = rhs;
        if rhs < 0.0 {
            for x in row.iter_mut() {
                *x = -*x;
            }
            basis[e] = p_col(e);
        } else {
            basis[e] = q_col(e);
        }
    }

    // Reduced-cost row: c_j - c_B · column_j.
    let mut reduced = cost.clone();
    for (r, &b) in basis.iter().enumerate() {
        let cb = cost[b];
        let row = &tab[r * width..r * width + cols];
        for (j, a) in row.iter().enumerate() {
            reduced[j] -= cb * a;
        }
    }

    let mut degenerate_run = 0usize;
    loop {
        // Dantzig pricing; after a run of degenerate pivots fall back to
        // Bland's rule, which cannot cycle.
        let bland = degenerate_run > 50;
        let mut entering = None;
        let mut best = -EPS;
        for (j, &rc) in reduced.iter().enumerate() {
            if rc < -EPS {
                if bland {
                    entering = Some(j);
                    break;
                }
                if rc < best {
                    best = rc;
                    entering = Some(j);
                }
            }
        }
        let Some(j) = entering else { break };

        let mut leave = None;
        let mut best_ratio = f64::INFINITY;
        for r in 0..m {
            let a = tab[r * width + j];
            if a > EPS {
                let ratio = tab[r * width + cols] / a;
                let better = match leave {
                    None => true,
                    Some(l) => {
                        ratio < best_ratio - EPS
                            || (ratio <= best_ratio + EPS && basis[r] < basis[l])
                    }
                };
                if better {
                    best_ratio = ratio;
                    leave = Some(r);
                }
            }
        }
        // The objective is bounded below by zero, so a blocking row exists.
        let r = leave.expect("oracle: unbounded direction in a bounded LP");
        if best_ratio <= EPS {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }

        let pivot = tab[r * width + j];
        for x in &mut tab[r * width..(r + 1) * width] {
            *x /= pivot;
        }
        let pivot_row: Vec<f64> = tab[r * width..(r + 1) * width].to_vec();
        for rr in 0..m {
            if rr == r {
                continue;
            }
            let factor = tab[rr * width + j];
            if factor != 0.0 {
                let row = &mut tab[rr * width..(rr + 1) * width];
                for (x, p) in row.iter_mut().zip(&pivot_row) {
                    *x -= factor * p;
                }
            }
        }
        let factor = reduced[j];
        for (x, p) in reduced.iter_mut().zip(&pivot_row[..cols]) {
            *x -= factor * p;
        }
        basis[r] = j;
    }

    let mut primal = vec![0.0f64; cols];
    for (r, &b) in basis.iter().enumerate() {
        primal[b] = tab[r * width + cols];
    }
    let mut values: Vec<f64> = (0..n)
        .map(|v| match problem.anchors.get(&v) {
            Some(&a) => a,
            None => primal[v] - primal[n + v],
        })
        .collect();
    problem.normalize(&mut values, &[]);
    Ok(problem.evaluate(values))
}
