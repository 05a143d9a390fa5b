use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_problem(seed: u64, vars: usize, terms: usize, anchored: bool) -> PlacementProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = PlacementProblem::new(vars);
    for _ in 0..terms {
        let u = rng.gen_range(0..vars);
        let mut v = rng.gen_range(0..vars - 1);
        if v >= u {
            v += 1;
        }
        p.push(u, v, rng.gen_range(-2..=2), rng.gen_range(0.05..5.0));
    }
    if anchored {
        for _ in 0..rng.gen_range(1..4) {
            let a = rng.gen_range(0..vars);
            p.anchors.insert(a, rng.gen_range(-20..20) as f64);
        }
    }
    p
}

#[test]
fn single_satisfiable_term() {
    let p = PlacementProblem::with_terms(3, vec![Term::new(1, 2, -1, 1.0)]);
    let s = solve_axis(&p);
    assert_eq!(s.values[1] - s.values[2], -1.0);
    assert_eq!(s.objective, 0.0);
    // Variable 0 is isolated and normalised to zero.
    assert_eq!(s.values[0], 0.0);
}

#[test]
fn contradictory_terms_follow_heavier_weight() {
    let p = PlacementProblem::with_terms(
        3,
        vec![Term::new(1, 2, -1, 3.0), Term::new(1, 2, 1, 1.0)],
    );
    let s = solve_axis(&p);
    assert_eq!(s.values[1] - s.values[2], -1.0);
    assert_eq!(s.objective, 2.0);
    assert_eq!(s.residuals, vec![0.0, 2.0]);
    let o = oracle_solve(&p).unwrap();
    assert!((o.objective - 2.0).abs() < 1e-12);
}

#[test]
fn oracle_trivial_cases() {
    let empty = PlacementProblem::new(4);
    let s = oracle_solve(&empty).unwrap();
    assert_eq!(s.values, vec![0.0; 4]);
    assert_eq!(s.objective, 0.0);

    let chain = PlacementProblem::with_terms(
        3,
        vec![Term::new(0, 1, 1, 1.0), Term::new(1, 2, 1, 2.0)],
    );
    let s = oracle_solve(&chain).unwrap();
    assert!(s.objective.abs() < 1e-12);
    assert!((s.values[0] - s.values[1] - 1.0).abs() < 1e-12);
    assert!((s.values[1] - s.values[2] - 1.0).abs() < 1e-12);
    let single = PlacementProblem::with_terms(3, vec![Term::new(1, 2, -1, 1.0)]);
    assert_eq!(oracle_solve(&single).unwrap().objective, 0.0);
}

#[test]
fn oracle_rejects_oversized_problems() {
    let p = PlacementProblem::new(ORACLE_MAX_VARS + 1);
    assert!(matches!(oracle_solve(&p), Err(Error::OracleTooLarge { .. })));
}

#[test]
fn malformed_problems_fail_validation() {
    let p = PlacementProblem::with_terms(2, vec![Term::new(1, 1, 0, 1.0)]);
    assert!(p.validate().is_err());
    let p = PlacementProblem::with_terms(2, vec![Term::new(0, 1, 0, 0.0)]);
    assert!(p.validate().is_err());
    let p = PlacementProblem::with_terms(2, vec![Term::new(0, 2, 0, 1.0)]);
    assert!(p.validate().is_err());
}

#[test]
fn matches_oracle_on_random_instances() {
    for seed in 0..120 {
        let p = random_problem(seed, 20, 60, seed % 3 == 0);
        let main = solve_axis(&p);
        let oracle = oracle_solve(&p).unwrap();
        assert!(
            (main.objective - oracle.objective).abs() < 1e-9,
            "seed {seed}: {} vs {}",
            main.objective,
            oracle.objective
        );
    }
}

#[test]
fn anchors_are_held_exactly() {
    let mut p = PlacementProblem::with_terms(
        3,
        vec![Term::new(0, 1, 1, 1.0), Term::new(1, 2, 1, 1.0), Term::new(0, 2, 5, 0.5)],
    );
    p.anchors.insert(0, 1e4);
    p.anchors.insert(2, -3.0);
    let s = solve_axis(&p);
    assert_eq!(s.values[0], 1e4);
    assert_eq!(s.values[2], -3.0);
    let o = oracle_solve(&p).unwrap();
    assert!((s.objective - o.objective).abs() < 1e-9);
}

#[test]
fn solutions_are_locally_optimal() {
    for seed in 200..230 {
        let p = random_problem(seed, 15, 40, seed % 2 == 0);
        let s = solve_axis(&p);
        for v in 0..p.var_count {
            if p.anchors.contains_key(&v) {
                continue;
            }
            for step in [1e-3, -1e-3] {
                let mut moved = s.values.clone();
                moved[v] += step;
                assert!(p.objective(&moved) >= s.objective - 1e-12);
            }
        }
    }
}

#[test]
fn integer_deltas_give_integer_gaps() {
    for seed in 300..320 {
        let p = random_problem(seed, 30, 90, false);
        let s = solve_axis(&p);
        for (t, r) in p.terms.iter().zip(&s.residuals) {
            let gap = s.values[t.u] - s.values[t.v];
            assert_eq!(gap, gap.round());
            assert_eq!(*r, r.round());
        }
    }
}

#[test]
fn solving_is_deterministic() {
    let p = random_problem(7, 25, 80, true);
    assert_eq!(solve_axis(&p), solve_axis(&p));
}

#[test]
fn collapse_identity_partition() {
    let p = random_problem(11, 10, 30, true);
    let groups: Vec<Group> = (0..10).map(|v| vec![(v, 0)]).collect();
    let c = collapse(&p, &groups).unwrap();
    assert_eq!(c.problem, p);
    assert_eq!(c.constant, 0.0);
    // Leaving variables out of the partition also yields singletons.
    let c = collapse(&p, &[]).unwrap();
    assert_eq!(c.problem, p);
}

#[test]
fn collapse_shifts_external_deltas() {
    // B sits one unit right of A: x_B = x_A + 1. External term B -> C.
    let (a, b, c) = (0, 1, 2);
    let p = PlacementProblem::with_terms(3, vec![Term::new(b, c, -1, 1.0), Term::new(a, b, -1, 2.0)]);
    let collapsed = collapse(&p, &[vec![(a, 0), (b, 1)]]).unwrap();
    assert_eq!(collapsed.problem.var_count, 2);
    // The internal A-B term is satisfied by the offsets and dropped.
    assert_eq!(collapsed.problem.terms.len(), 1);
    let t = collapsed.problem.terms[0];
    assert_eq!((t.u, t.v), (0, 1));
    // x_B - x_C + 1 = X_g + 1 - x_C + 1  ->  δ' = -1 - 1 = -2
    assert_eq!(t.delta, -2);
    assert_eq!(collapsed.constant, 0.0);
}

#[test]
fn collapse_rejects_conflicts() {
    let p = PlacementProblem::new(3);
    assert!(collapse(&p, &[vec![(0, 0), (0, 1)]]).is_err());
    assert!(collapse(&p, &[vec![(0, 0)], vec![(0, 0), (1, 1)]]).is_err());
    let mut anchored = PlacementProblem::new(3);
    anchored.anchors.insert(0, 0.0);
    anchored.anchors.insert(1, 0.0);
    assert!(collapse(&anchored, &[vec![(0, 0), (1, 1)]]).is_err());
    anchored.anchors.insert(1, 1.0);
    assert!(collapse(&anchored, &[vec![(0, 0), (1, 1)]]).is_ok());
}

/// Cross-check: collapsing a group must match enforcing the same offsets
/// with overwhelmingly heavy equality terms.
#[test]
fn collapsed_solve_matches_heavy_equality_terms() {
    const W_MAX: f64 = 1e6;
    for seed in 400..430 {
        let p = random_problem(seed, 16, 45, seed % 2 == 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Two disjoint groups with random integer offsets.
        let mut vars: Vec<usize> = (0..16).collect();
        for k in (1..vars.len()).rev() {
            vars.swap(k, rng.gen_range(0..=k));
        }
        let groups: Vec<Group> = vec![
            vars[0..4].iter().map(|&v| (v, rng.gen_range(-3..=3))).collect(),
            vars[4..7].iter().map(|&v| (v, rng.gen_range(-3..=3))).collect(),
        ];
        let Ok(c) = collapse(&p, &groups) else {
            continue; // two anchors landed in one group with clashing values
        };
        let expanded = c.expand(&p, &solve_axis(&c.problem));

        let mut heavy = p.clone();
        for g in &groups {
            let (root, root_off) = g[0];
            for &(v, off) in &g[1..] {
                // x_v - x_root = off - root_off
                heavy.push(v, root, off - root_off, W_MAX);
            }
        }
        let full = solve_axis(&heavy);
        let enforced: f64 = full.residuals[p.terms.len()..].iter().sum();
        assert_eq!(enforced, 0.0, "seed {seed}: heavy terms violated");
        assert!(
            (full.objective - expanded.objective).abs() < 1e-9,
            "seed {seed}: {} vs {}",
            full.objective,
            expanded.objective
        );
        assert!((expanded.objective - (solve_axis(&c.problem).objective + c.constant)).abs() < 1e-9);
    }
}

#[test]
fn debug_dump_round_trips_through_json() {
    let p = random_problem(3, 5, 8, true);
    let s = solve_axis(&p);
    let text = serde_json::to_string(&(&p, &s)).unwrap();
    let (p2, s2): (PlacementProblem, PlacementSolution) = serde_json::from_str(&text).unwrap();
    assert_eq!(p, p2);
    assert_eq!(s, s2);
}

proptest! {
    #[test]
    fn objective_is_weighted_residual_sum(seed in 0u64..10_000, vars in 2usize..12, terms in 0usize..30) {
        let p = random_problem(seed, vars, terms, seed % 2 == 1);
        let s = solve_axis(&p);
        let sum: f64 = p.terms.iter().zip(&s.residuals).map(|(t, r)| t.weight * r).sum();
        prop_assert!((s.objective - sum).abs() <= 1e-9 * s.objective.max(1.0));
        prop_assert!(s.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn translating_a_component_keeps_the_objective(seed in 0u64..10_000, shift in -50.0f64..50.0) {
        let p = random_problem(seed, 8, 20, false);
        let s = solve_axis(&p);
        let moved: Vec<f64> = s.values.iter().map(|v| v + shift).collect();
        prop_assert!((p.objective(&moved) - s.objective).abs() < 1e-9);
    }
}
