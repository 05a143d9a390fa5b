//! Primal network simplex for min-cost circulations.
//!
//! The weighted-L1 placement LP is the dual of a circulation problem: every
//! term `w·|x_u - x_v - δ|` becomes a pair of opposite arcs with capacity `w`
//! and costs `±δ`, and the optimal node potentials are the coordinates. The
//! tree structure follows the strongly feasible spanning tree scheme of the
//! LEMON library: all artificial arcs point into an extra root, are never
//! priced, and therefore never carry flow.

const STATE_UPPER: i8 = -1;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;

const PRICE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Arc {
    pub source: usize,
    pub target: usize,
    pub cost: f64,
    pub cap: f64,
}

/// Optimal circulation: flow per real arc and a potential per node with
/// `cost + π_source - π_target = 0` on every basic arc.
#[derive(Debug, Clone)]
pub(crate) struct Circulation {
    #[allow(dead_code)] // only the tests look at the primal side
    pub flow: Vec<f64>,
    pub potential: Vec<f64>,
    pub pivots: usize,
}

struct Simplex {
    node_count: usize,
    root: usize,
    real_arcs: usize,
    source: Vec<usize>,
    target: Vec<usize>,
    cost: Vec<f64>,
    cap: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<i8>,
    // Spanning tree.
    tree_adj: Vec<Vec<usize>>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    /// +1 when `pred[u]` points from `u` to its parent, -1 otherwise.
    pred_dir: Vec<i8>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    // Pricing.
    block_size: usize,
    next_arc: usize,
    // BFS scratch.
    queue: Vec<usize>,
}

pub(crate) fn solve(node_count: usize, arcs: &[Arc]) -> Circulation {
    let mut s = Simplex::new(node_count, arcs);
    let pivots = s.run();
    Circulation {
        flow: s.flow[..s.real_arcs].to_vec(),
        potential: s.pi[..node_count].to_vec(),
        pivots,
    }
}

impl Simplex {
    fn new(node_count: usize, arcs: &[Arc]) -> Self {
        let root = node_count;
        let real_arcs = arcs.len();
        let total = real_arcs + node_count;
        let mut source = Vec::with_capacity(total);
        let mut target = Vec::with_capacity(total);
        let mut cost = Vec::with_capacity(total);
        let mut cap = Vec::with_capacity(total);
        for a in arcs {
            debug_assert!(a.cap >= 0.0 && a.cost.is_finite());
            source.push(a.source);
            target.push(a.target);
            cost.push(a.cost);
            cap.push(a.cap);
        }
        let mut tree_adj = vec![Vec::new(); node_count + 1];
        for u in 0..node_count {
            let e = source.len();
            source.push(u);
            target.push(root);
            cost.push(0.0);
            cap.push(f64::INFINITY);
            tree_adj[u].push(e);
            tree_adj[root].push(e);
        }
        let mut state = vec![STATE_LOWER; total];
        for s in &mut state[real_arcs..] {
            *s = STATE_TREE;
        }
        let block_size = ((real_arcs as f64).sqrt().ceil() as usize).max(10);
        let mut parent = vec![root; node_count + 1];
        let mut pred = vec![usize::MAX; node_count + 1];
        let mut pred_dir = vec![1i8; node_count + 1];
        let mut depth = vec![1usize; node_count + 1];
        for u in 0..node_count {
            parent[u] = root;
            pred[u] = real_arcs + u;
            pred_dir[u] = 1;
        }
        depth[root] = 0;
        Self {
            node_count,
            root,
            real_arcs,
            source,
            target,
            cost,
            cap,
            flow: vec![0.0; total],
            state,
            tree_adj,
            parent,
            pred,
            pred_dir,
            depth,
            pi: vec![0.0; node_count + 1],
            block_size,
            next_arc: 0,
            queue: Vec::new(),
        }
    }

    fn reduced_cost(&self, e: usize) -> f64 {
        self.cost[e] + self.pi[self.source[e]] - self.pi[self.target[e]]
    }

    /// Block search pricing over the real arcs. Within a block the most
    /// violated arc wins; ties go to the lowest index.
    fn find_entering(&mut self) -> Option<usize> {
        let m = self.real_arcs;
        if m == 0 {
            return None;
        }
        let mut best: Option<usize> = None;
        let mut best_val = -PRICE_EPS;
        let mut scanned_in_block = 0;
        let start = self.next_arc;
        for step in 0..m {
            let e = (start + step) % m;
            let val = self.state[e] as f64 * self.reduced_cost(e);
            if val < best_val || (val == best_val && best.is_some_and(|b| e < b)) {
                best_val = val;
                best = Some(e);
            }
            scanned_in_block += 1;
            if scanned_in_block == self.block_size {
                if best.is_some() {
                    self.next_arc = (e + 1) % m;
                    return best;
                }
                scanned_in_block = 0;
            }
        }
        if best.is_some() {
            self.next_arc = start;
        }
        best
    }

    fn join(&self, mut u: usize, mut v: usize) -> usize {
        while u != v {
            if self.depth[u] > self.depth[v] {
                u = self.parent[u];
            } else if self.depth[v] > self.depth[u] {
                v = self.parent[v];
            } else {
                u = self.parent[u];
                v = self.parent[v];
            }
        }
        u
    }

    fn residual_down(&self, e: usize) -> f64 {
        // Room to increase the flow of `e`.
        self.cap[e] - self.flow[e]
    }

    fn pivot(&mut self, in_arc: usize) {
        let (first, second) = if self.state[in_arc] == STATE_LOWER {
            (self.source[in_arc], self.target[in_arc])
        } else {
            (self.target[in_arc], self.source[in_arc])
        };
        let join = self.join(first, second);

        let mut delta = self.cap[in_arc];
        let mut result = 0;
        let mut u_out = usize::MAX;
        // Whether the leaving arc's flow drops to its lower bound.
        let mut out_to_lower = false;

        let mut u = first;
        while u != join {
            let e = self.pred[u];
            let (d, to_lower) = if self.pred_dir[u] == -1 {
                (self.residual_down(e), false)
            } else {
                (self.flow[e], true)
            };
            if d < delta {
                delta = d;
                u_out = u;
                result = 1;
                out_to_lower = to_lower;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            let e = self.pred[u];
            let (d, to_lower) = if self.pred_dir[u] == 1 {
                (self.residual_down(e), false)
            } else {
                (self.flow[e], true)
            };
            if d <= delta {
                delta = d;
                u_out = u;
                result = 2;
                out_to_lower = to_lower;
            }
            u = self.parent[u];
        }
        assert!(
            delta.is_finite(),
            "unbounded circulation: arc {in_arc} closes a negative cycle of infinite capacity"
        );

        if delta > 0.0 {
            let val = self.state[in_arc] as f64 * delta;
            self.flow[in_arc] += val;
            let mut u = self.source[in_arc];
            while u != join {
                let e = self.pred[u];
                self.flow[e] -= self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
            let mut u = self.target[in_arc];
            while u != join {
                let e = self.pred[u];
                self.flow[e] += self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
        }

        if result == 0 {
            // The entering arc saturates itself: swap bounds, tree unchanged.
            if self.state[in_arc] == STATE_LOWER {
                self.state[in_arc] = STATE_UPPER;
                self.flow[in_arc] = self.cap[in_arc];
            } else {
                self.state[in_arc] = STATE_LOWER;
                self.flow[in_arc] = 0.0;
            }
            return;
        }

        let out_arc = self.pred[u_out];
        if out_to_lower {
            self.state[out_arc] = STATE_LOWER;
            self.flow[out_arc] = 0.0;
        } else {
            self.state[out_arc] = STATE_UPPER;
            self.flow[out_arc] = self.cap[out_arc];
        }
        self.state[in_arc] = STATE_TREE;

        let (u_in, v_in) = if result == 1 {
            (first, second)
        } else {
            (second, first)
        };
        let (a, b) = (self.source[out_arc], self.target[out_arc]);
        self.tree_adj[a].retain(|&e| e != out_arc);
        self.tree_adj[b].retain(|&e| e != out_arc);
        let (s, t) = (self.source[in_arc], self.target[in_arc]);
        self.tree_adj[s].push(in_arc);
        self.tree_adj[t].push(in_arc);

        self.rehang(u_in, v_in, in_arc);
    }

    /// Re-roots the detached subtree at `u_in`, hanging it below `v_in`
    /// through `arc`, and refreshes parents, depths and potentials inside it.
    fn rehang(&mut self, u_in: usize, v_in: usize, arc: usize) {
        self.attach(u_in, v_in, arc);
        self.queue.clear();
        self.queue.push(u_in);
        let mut head = 0;
        while head < self.queue.len() {
            let u = self.queue[head];
            head += 1;
            for k in 0..self.tree_adj[u].len() {
                let e = self.tree_adj[u][k];
                if e == self.pred[u] {
                    continue;
                }
                let child = if self.source[e] == u {
                    self.target[e]
                } else {
                    self.source[e]
                };
                self.attach(child, u, e);
                self.queue.push(child);
            }
        }
    }

    fn attach(&mut self, child: usize, parent: usize, e: usize) {
        self.parent[child] = parent;
        self.pred[child] = e;
        self.depth[child] = self.depth[parent] + 1;
        if self.source[e] == child {
            self.pred_dir[child] = 1;
            self.pi[child] = self.pi[parent] - self.cost[e];
        } else {
            self.pred_dir[child] = -1;
            self.pi[child] = self.pi[parent] + self.cost[e];
        }
    }

    fn run(&mut self) -> usize {
        let guard = 50 * (self.real_arcs + self.node_count + 1) * (self.node_count + 1) + 1000;
        let mut pivots = 0;
        while let Some(e) = self.find_entering() {
            self.pivot(e);
            pivots += 1;
            assert!(pivots < guard, "network simplex failed to terminate");
        }
        debug_assert!(self.flow[self.real_arcs..].iter().all(|&f| f == 0.0));
        debug_assert_eq!(self.parent[self.root], self.root);
        pivots
    }
}
