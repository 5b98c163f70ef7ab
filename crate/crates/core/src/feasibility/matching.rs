//! Bipartite b-matching between atoms (with multiplicities) and cells.
//!
//! Atom copies are collapsed into one node of capacity `kᵢ`, which turns
//! Hopcroft-Karp on copies into Dinic's algorithm on a unit-capacity-cell
//! network: the same phase structure, with `n·M` instead of `M²` edges.

use std::collections::VecDeque;

use crate::error::HallWitness;

struct Edge {
    to: usize,
    cap: usize,
}

struct Network {
    adj: Vec<Vec<usize>>,
    edges: Vec<Edge>,
}

impl Network {
    fn new(nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); nodes],
            edges: Vec::new(),
        }
    }

    fn add(&mut self, from: usize, to: usize, cap: usize) {
        self.adj[from].push(self.edges.len());
        self.edges.push(Edge { to, cap });
        self.adj[to].push(self.edges.len());
        self.edges.push(Edge { to: from, cap: 0 });
    }

    fn levels(&self, s: usize) -> Vec<usize> {
        let mut level = vec![usize::MAX; self.adj.len()];
        level[s] = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for &e in &self.adj[u] {
                let v = self.edges[e].to;
                if self.edges[e].cap > 0 && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level
    }

    fn augment(
        &mut self,
        u: usize,
        t: usize,
        limit: usize,
        level: &[usize],
        next: &mut [usize],
    ) -> usize {
        if u == t {
            return limit;
        }
        while next[u] < self.adj[u].len() {
            let e = self.adj[u][next[u]];
            let v = self.edges[e].to;
            if self.edges[e].cap > 0 && level[v] == level[u] + 1 {
                let pushed = self.augment(v, t, limit.min(self.edges[e].cap), level, next);
                if pushed > 0 {
                    self.edges[e].cap -= pushed;
                    self.edges[e ^ 1].cap += pushed;
                    return pushed;
                }
            }
            next[u] += 1;
        }
        0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> usize {
        let mut flow = 0;
        loop {
            let level = self.levels(s);
            if level[t] == usize::MAX {
                return flow;
            }
            let mut next = vec![0; self.adj.len()];
            loop {
                let pushed = self.augment(s, t, usize::MAX, &level, &mut next);
                if pushed == 0 {
                    break;
                }
                flow += pushed;
            }
        }
    }
}

/// Outcome of matching atom copies to cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Matching {
    /// Cells assigned to each atom, in increasing order.
    Perfect(Vec<Vec<usize>>),
    Deficient(HallWitness),
}

/// Matches `multiplicity[i]` copies of atom `i` to distinct cells, using only
/// the cells in `adjacency[i]`. Requires `Σ multiplicity = cells`.
pub fn match_atoms(multiplicity: &[usize], adjacency: &[Vec<usize>], cells: usize) -> Matching {
    let n = multiplicity.len();
    let (s, t) = (n + cells, n + cells + 1);
    let mut net = Network::new(n + cells + 2);
    for (i, &k) in multiplicity.iter().enumerate() {
        net.add(s, i, k);
        for &c in &adjacency[i] {
            net.add(i, n + c, 1);
        }
    }
    for c in 0..cells {
        net.add(n + c, t, 1);
    }
    let demand: usize = multiplicity.iter().sum();
    let flow = net.max_flow(s, t);
    if flow == demand && demand == cells {
        let assignment = (0..n)
            .map(|i| {
                let mut cs: Vec<usize> = net.adj[i]
                    .iter()
                    .filter(|&&e| {
                        e % 2 == 0
                            && net.edges[e].to >= n
                            && net.edges[e].to < n + cells
                            && net.edges[e].cap == 0
                    })
                    .map(|&e| net.edges[e].to - n)
                    .collect();
                cs.sort_unstable();
                cs
            })
            .collect();
        return Matching::Perfect(assignment);
    }
    // Atoms still reachable from the source in the residual network have
    // more copies than neighbouring cells.
    let level = net.levels(s);
    let atoms: Vec<usize> = (0..n).filter(|&i| level[i] != usize::MAX).collect();
    let mut reachable: Vec<usize> = atoms
        .iter()
        .flat_map(|&i| adjacency[i].iter().copied())
        .collect();
    reachable.sort_unstable();
    reachable.dedup();
    Matching::Deficient(HallWitness {
        demand: atoms.iter().map(|&i| multiplicity[i]).sum(),
        reachable_cells: reachable.len(),
        atoms,
    })
}
