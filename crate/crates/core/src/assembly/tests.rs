use super::*;
use crate::ingest::{apply_rotations, slice, synthetic_image, Image};
use crate::lpsolve::oracle_solve;
use crate::puzzle::Orientation;

const FAR: f64 = 10.0;

/// Table for a `rows × cols` grid where tile `r * cols + c` sits at
/// `(r, c)`: true adjacencies cost 1, other pairs `FAR`, and slots facing
/// the border have no candidates at all.
fn grid_table(rows: usize, cols: usize) -> DistanceTable {
    let n = rows * cols;
    DistanceTable::from_fn(n, 2, |i, j, o| {
        let (ri, ci) = ((i / cols) as i64, (i % cols) as i64);
        let (dx, dy) = o.offsets();
        // j should sit at (x_i - dx, y_i - dy).
        let (rt, ct) = (ri - dy, ci - dx);
        if rt < 0 || ct < 0 || rt >= rows as i64 || ct >= cols as i64 {
            return f64::INFINITY;
        }
        if (rt * cols as i64 + ct) as usize == j {
            1.0
        } else {
            FAR
        }
    })
}

fn grid_placement(rows: usize, cols: usize) -> Placement {
    let n = rows * cols;
    Placement {
        x: (0..n).map(|t| (t % cols) as f64).collect(),
        y: (0..n).map(|t| (t / cols) as f64).collect(),
        objective: 0.0,
    }
}

fn m(i: usize, j: usize, o: Orientation, weight: f64) -> OrientedMatch {
    OrientedMatch { i, j, o, weight }
}

fn type1_tiles(n: usize) -> Vec<Tile> {
    (0..n)
        .map(|piece| Tile {
            piece,
            rotation: Rotation::NONE,
        })
        .collect()
}

#[test]
fn satisfied_matches_are_not_rejected() {
    let p = grid_placement(2, 2);
    let active = [
        m(0, 1, Orientation::Right, 1.0),
        m(1, 0, Orientation::Left, 1.0),
        m(0, 2, Orientation::Below, 1.0),
        m(3, 1, Orientation::Above, 1.0),
    ];
    assert!(reject_matches(&active, &p, DEFAULT_REJECT_TOL).is_empty());
}

#[test]
fn lighter_contradictory_match_is_rejected() {
    // 1 right of 0 (weight 3) against 0 right of 1 (weight 1).
    let active = [m(0, 1, Orientation::Right, 3.0), m(1, 0, Orientation::Right, 1.0)];
    let (p, ox, oy) = solve_placement(3, &active, &BTreeMap::new(), &[]).unwrap();
    assert_eq!((ox, oy), (2.0, 0.0));
    assert_eq!(
        reject_matches(&active, &p, DEFAULT_REJECT_TOL),
        vec![active[1].key()]
    );
}

#[test]
fn rejection_checks_both_axes() {
    let p = Placement {
        x: vec![0.0, 1.0],
        y: vec![0.0, 0.5],
        objective: 0.0,
    };
    assert_eq!(reject_matches(&[m(0, 1, Orientation::Right, 1.0)], &p, 1e-5).len(), 1);
}

#[test]
fn planted_weak_match_is_the_only_rejection() {
    // 3×3 grid; tile 2 (top right) gets a wrong candidate on its open right
    // side: tile 4, the centre.
    let base = grid_table(3, 3);
    let table = DistanceTable::from_fn(9, 2, |i, j, o| {
        if (i, j, o) == (2, 4, Orientation::Right) {
            FAR
        } else {
            base.get(i, j, o)
        }
    });
    let u = Universe::full(&table);
    let w = build_weights(&table, &u);
    let active = active_set(&table, &u, &w).matches;
    let planted = active.iter().find(|x| (x.i, x.j, x.o) == (2, 4, Orientation::Right)).unwrap();
    assert!(planted.weight <= 1.1, "{}", planted.weight);
    assert!(active.iter().filter(|x| x.key() != planted.key()).all(|x| x.weight >= 2.0));

    let (placement, _, _) = solve_placement(9, &active, &BTreeMap::new(), &[]).unwrap();
    assert_eq!(reject_matches(&active, &placement, 1e-5), vec![planted.key()]);

    // Same verdict from the dense oracle.
    let mut px = PlacementProblem::new(9);
    let mut py = PlacementProblem::new(9);
    for a in &active {
        let (dx, dy) = a.o.offsets();
        px.push(a.i, a.j, dx, a.weight);
        py.push(a.i, a.j, dy, a.weight);
    }
    let oracle = Placement {
        x: oracle_solve(&px).unwrap().values,
        y: oracle_solve(&py).unwrap().values,
        objective: 0.0,
    };
    assert_eq!(reject_matches(&active, &oracle, 1e-5), vec![planted.key()]);

    let state = run_loop(&table, type1_tiles(9), BTreeMap::new(), Mode::Free, &VariantConfig::default()).unwrap();
    assert_eq!(state.history[0].rejected_keys, vec![planted.key()]);
    assert!(state.converged);
    assert_eq!(state.iterations(), 2);
    assert_eq!(state.components.len(), 1);
}

#[test]
fn consistent_grid_is_one_component() {
    let p = grid_placement(2, 3);
    let active = [
        m(0, 1, Orientation::Right, 1.0),
        m(1, 2, Orientation::Right, 1.0),
        m(3, 4, Orientation::Right, 1.0),
        m(5, 4, Orientation::Left, 1.0),
        m(0, 3, Orientation::Below, 1.0),
    ];
    let comps = component_extraction(&active, &p, 1e-5, &[]);
    assert_eq!(comps.len(), 1);
    let c = &comps[0];
    assert_eq!(c.len(), 6);
    for mem in &c.members {
        assert_eq!((mem.dx, mem.dy), ((mem.tile % 3) as i64, (mem.tile / 3) as i64));
    }
}

#[test]
fn disjoint_matches_make_separate_components() {
    let p = grid_placement(2, 3);
    let active = [m(0, 1, Orientation::Right, 1.0), m(5, 2, Orientation::Above, 1.0)];
    let comps = component_extraction(&active, &p, 1e-5, &[]);
    let sizes: Vec<usize> = comps.iter().map(Component::len).collect();
    assert_eq!(sizes, vec![2, 2, 1, 1]);
}

#[test]
fn collision_drops_the_weaker_match() {
    // Both 1 and 2 claimed right of 0 and placed on the same spot.
    let p = Placement {
        x: vec![0.0, 1.0, 1.0, 1.0],
        y: vec![0.0, 0.0, 0.0, 1.0],
        objective: 0.0,
    };
    let active = [
        m(0, 2, Orientation::Right, 3.0),
        m(0, 1, Orientation::Right, 5.0),
        m(2, 3, Orientation::Below, 4.0),
    ];
    let comps = component_extraction(&active, &p, 1e-5, &[]);
    let sizes: Vec<Vec<usize>> = comps.iter().map(|c| c.members.iter().map(|m| m.tile).collect()).collect();
    assert_eq!(sizes, vec![vec![0, 1], vec![2, 3]]);
    for c in &comps {
        let mut cells: Vec<_> = c.members.iter().map(|m| (m.dx, m.dy)).collect();
        cells.sort();
        cells.dedup();
        assert_eq!(cells.len(), c.len());
    }
}

#[test]
fn seeds_keep_their_offsets() {
    let seed = Component {
        members: vec![
            ComponentMember { tile: 0, dx: 0, dy: 0 },
            ComponentMember { tile: 2, dx: 0, dy: 1 },
        ],
    };
    // The placement disagrees with the seed; the seed wins.
    let p = Placement {
        x: vec![0.0, 1.0, 5.0],
        y: vec![0.0, 0.0, 5.0],
        objective: 0.0,
    };
    let comps = component_extraction(&[m(0, 1, Orientation::Right, 1.0)], &p, 1e-5, &[seed]);
    assert_eq!(comps.len(), 1);
    assert_eq!(
        comps[0].members,
        vec![
            ComponentMember { tile: 0, dx: 0, dy: 0 },
            ComponentMember { tile: 1, dx: 1, dy: 0 },
            ComponentMember { tile: 2, dx: 0, dy: 1 },
        ]
    );
}

fn smooth_quadrants(piece_px: usize) -> Image {
    let size = 2 * piece_px;
    let pixels = (0..size)
        .flat_map(|r| (0..size).map(move |c| (r, c)))
        .map(|(r, c)| {
            let (u, v) = (c as f64 / size as f64, r as f64 / size as f64);
            [
                (5000.0 + 50000.0 * u) as u16,
                (5000.0 + 50000.0 * v) as u16,
                (30000.0 + 20000.0 * u * v) as u16,
            ]
        })
        .collect();
    Image::new(size, size, pixels)
}

#[test]
fn two_by_two_keeps_true_matches_and_exhausts_border_slots() {
    let bundle = slice(&smooth_quadrants(8), 8, 3).unwrap();
    let truth = bundle.truth.clone().unwrap();
    let table = build_distance_table(&bundle.pieces);
    let u = Universe::full(&table);
    let a0 = active_set(&table, &u, &build_weights(&table, &u)).matches;
    let at = |id: usize| (truth[id].col as i64, truth[id].row as i64);
    let is_true = |x: &OrientedMatch| {
        let (dx, dy) = x.o.offsets();
        let (pi, pj) = (at(x.i), at(x.j));
        pi.0 - pj.0 == dx && pi.1 - pj.1 == dy
    };
    assert_eq!(a0.iter().filter(|x| is_true(x)).count(), 8);

    let cfg = VariantConfig::with_mode(Mode::Free);
    let state = solve_type1(&bundle, &cfg).unwrap();
    // Slots facing the border always hold a wrong candidate until all
    // three are spent, so the first rejection set is never empty.
    assert_eq!(state.history[0].rejected, 8);
    assert!(state.converged);
    assert_eq!(state.iterations(), 4);
    assert_eq!(state.history.last().unwrap().skipped_slots, 8);
    for x in state.active.iter() {
        assert!(is_true(x));
    }
    assert_eq!(state.placement.objective, 0.0);
    assert_eq!(state.components.len(), 1);
}

fn synthetic_bundle(rows: usize, cols: usize, seed: u64) -> PuzzleBundle {
    slice(&synthetic_image(cols * 12, rows * 12, seed), 12, seed).unwrap()
}

#[test]
fn universe_shrinks_while_rejecting() {
    for mode in [Mode::Free, Mode::Constrained] {
        let state = solve_type1(&synthetic_bundle(5, 6, 2), &VariantConfig::with_mode(mode)).unwrap();
        for w in state.history.windows(2) {
            if w[0].rejected > 0 {
                assert_eq!(w[1].universe, w[0].universe - w[0].rejected);
            }
        }
        assert!(state.history.iter().all(|r| r.active + r.skipped_slots == 4 * 30));
    }
}

#[test]
fn hybrid_is_no_worse_than_either_variant() {
    for seed in 0..3 {
        let bundle = synthetic_bundle(4, 5, seed);
        let table = build_distance_table(&bundle.pieces);
        let cfg = |mode| VariantConfig {
            max_iters: 4,
            ..VariantConfig::with_mode(mode)
        };
        let free = solve_type1_with_table(&table, &cfg(Mode::Free)).unwrap();
        let constrained = solve_type1_with_table(&table, &cfg(Mode::Constrained)).unwrap();
        let hybrid = solve_type1_with_table(&table, &cfg(Mode::Hybrid)).unwrap();
        assert!(hybrid.l0_cost <= free.l0_cost.min(constrained.l0_cost));
        let choice = hybrid.hybrid.unwrap();
        assert_eq!(choice.free_l0, free.l0_cost);
        assert_eq!(choice.constrained_l0, constrained.l0_cost);
        assert_eq!(weighted_l0(&hybrid.initial_active, &hybrid.placement, 1e-5), hybrid.l0_cost);
    }
}

#[test]
fn constrained_components_stay_rigid() {
    let bundle = synthetic_bundle(5, 5, 7);
    let table = build_distance_table(&bundle.pieces);
    let mut previous: Option<Vec<Component>> = None;
    for iters in 1..=4 {
        let cfg = VariantConfig {
            max_iters: iters,
            ..VariantConfig::with_mode(Mode::Constrained)
        };
        let state = run_loop(&table, type1_tiles(25), BTreeMap::new(), Mode::Constrained, &cfg).unwrap();
        let current = state.components.clone();
        if let Some(prev) = previous {
            for c in prev.iter().filter(|c| c.len() > 1) {
                let holder = current
                    .iter()
                    .find(|d| d.members.iter().any(|m| m.tile == c.members[0].tile))
                    .unwrap();
                let pos = |t: usize| holder.members.iter().find(|m| m.tile == t).map(|m| (m.dx, m.dy)).unwrap();
                let base = pos(c.members[0].tile);
                for mem in &c.members {
                    let p = pos(mem.tile);
                    assert_eq!((p.0 - base.0, p.1 - base.1), (mem.dx, mem.dy));
                }
            }
        }
        if state.converged {
            break;
        }
        previous = Some(current);
    }
}

#[test]
fn transposed_puzzle_gives_transposed_objectives() {
    let img = synthetic_image(48, 36, 5);
    let transposed = Image::new(
        36,
        48,
        (0..48)
            .flat_map(|r| (0..36).map(move |c| (r, c)))
            .map(|(r, c)| img.pixel(c, r))
            .collect(),
    );
    let swap = |o: Orientation| match o {
        Orientation::Above => Orientation::Left,
        Orientation::Left => Orientation::Above,
        Orientation::Right => Orientation::Below,
        Orientation::Below => Orientation::Right,
    };
    let a = slice(&img, 12, 1).unwrap();
    let b = slice(&transposed, 12, 1).unwrap();
    let ta = build_distance_table(&a.pieces);
    let tb = build_distance_table(&b.pieces);
    // Slicing with the same seed shuffles cell indices identically, which
    // are not the same cells after transposing; relabel through the truth.
    let truth_a = a.truth.as_ref().unwrap();
    let truth_b = b.truth.as_ref().unwrap();
    let map: Vec<usize> = truth_a
        .iter()
        .map(|t| truth_b.iter().position(|s| (s.row, s.col) == (t.col, t.row)).unwrap())
        .collect();
    let tb = DistanceTable::from_fn(12, 12, |i, j, o| tb.get(map[i], map[j], o));
    for i in 0..12 {
        for j in 0..12 {
            for o in Orientation::ALL {
                if i != j {
                    assert!((ta.get(i, j, o) - tb.get(i, j, swap(o))).abs() <= 1e-9 * ta.get(i, j, o));
                }
            }
        }
    }
    let cfg = VariantConfig::with_mode(Mode::Free);
    let sa = solve_type1_with_table(&ta, &cfg).unwrap();
    let sb = solve_type1_with_table(&tb, &cfg).unwrap();
    let first = |s: &SolverState| (s.history[0].objective_x, s.history[0].objective_y);
    let (ax, ay) = first(&sa);
    let (bx, by) = first(&sb);
    assert!((ax - by).abs() < 1e-6 && (ay - bx).abs() < 1e-6, "{ax} {ay} vs {bx} {by}");
}

#[test]
fn type2_anchors_are_pinned_verbatim() {
    let bundle = apply_rotations(
        &synthetic_bundle(3, 3, 4),
        &[0, 1, 2, 3, 0, 1, 2, 3, 1].map(Rotation::new),
    );
    let tiles = replica_tiles(9);
    let table = build_tile_table(&bundle.pieces, &tiles);
    let cfg = VariantConfig::with_mode(Mode::Free);
    let anchors = type2_anchors(&table, &tiles, &cfg);
    assert_eq!(anchors.len(), 4);
    let piece = tiles[*anchors.keys().next().unwrap()].piece;
    let expected = [(1e4, 1e4), (1e4, -1e4), (-1e4, 1e4), (-1e4, -1e4)];
    for (q, want) in expected.iter().enumerate() {
        assert_eq!(anchors[&(4 * piece + q)], *want);
    }
    let state = solve_type2_with_table(&table, tiles, &cfg).unwrap();
    for (&t, &(x, y)) in &anchors {
        assert_eq!((state.placement.x[t], state.placement.y[t]), (x, y));
    }
}

#[test]
fn type2_two_by_two_grows_four_rotated_copies() {
    let base = slice(&smooth_quadrants(8), 8, 5).unwrap();
    let bundle = apply_rotations(&base, &[1, 0, 2, 3].map(Rotation::new));
    let state = solve_type2(&bundle, &VariantConfig::with_mode(Mode::Free)).unwrap();
    let big: Vec<&Component> = state.components.iter().filter(|c| c.len() == 4).collect();
    assert_eq!(big.len(), 4, "{:?}", state.components);
    assert_eq!(replica_conflicts(&state.components, &state.tiles), 0);
    // Each copy, turned back by its own frame rotation, must be the same
    // arrangement of physical pieces.
    let layout = |c: &Component| {
        let mut cells: Vec<(i64, i64, usize, u8)> = c
            .members
            .iter()
            .map(|m| {
                let t = state.tiles[m.tile];
                (m.dy, m.dx, t.piece, t.rotation.quarter_turns())
            })
            .collect();
        cells.sort();
        cells
    };
    let frames: Vec<u8> = big
        .iter()
        .map(|c| {
            let m0 = c.members[0];
            let t = state.tiles[m0.tile];
            (t.rotation.quarter_turns() + bundle.truth.as_ref().unwrap()[t.piece].rotation.quarter_turns()) % 4
        })
        .collect();
    let mut sorted = frames.clone();
    sorted.sort();
    assert_eq!(sorted, vec![0, 1, 2, 3]);
    for c in &big {
        let cells = layout(c);
        let truth = bundle.truth.as_ref().unwrap();
        // Every piece's rotation in the copy agrees with one global frame.
        let g: Vec<u8> = cells
            .iter()
            .map(|&(_, _, p, q)| (q + truth[p].rotation.quarter_turns()) % 4)
            .collect();
        assert!(g.iter().all(|&x| x == g[0]));
    }
}
