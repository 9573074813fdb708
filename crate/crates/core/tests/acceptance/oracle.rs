// SPDX-License-Identifier: Apache-2.0

//! Brute-force reference computations straight from piece definitions.

use std::collections::{BTreeMap, BTreeSet};

use mmm_core::{Piece, PieceId};

/// Graph read directly off the pieces: incidence links, directed hops and
/// their undirected union.
pub struct Graph {
    pub ids: Vec<PieceId>,
    pub hops_out: BTreeMap<PieceId, BTreeSet<PieceId>>,
    pub hops_in: BTreeMap<PieceId, BTreeSet<PieceId>>,
    pub near: BTreeMap<PieceId, BTreeSet<PieceId>>,
}

impl Graph {
    pub fn of(pieces: &[Piece]) -> Graph {
        let ids: Vec<PieceId> = pieces.iter().map(|p| p.id).collect();
        let held: BTreeSet<PieceId> = ids.iter().copied().collect();
        let mut g = Graph {
            ids: ids.clone(),
            hops_out: ids.iter().map(|&i| (i, BTreeSet::new())).collect(),
            hops_in: ids.iter().map(|&i| (i, BTreeSet::new())).collect(),
            near: ids.iter().map(|&i| (i, BTreeSet::new())).collect(),
        };
        for p in pieces {
            let ends: Vec<PieceId> = p.endpoints().filter(|e| held.contains(e)).collect();
            for &end in ends.iter().filter(|&&e| e != p.id) {
                g.near.get_mut(&p.id).unwrap().insert(end);
                g.near.get_mut(&end).unwrap().insert(p.id);
            }
            if let (Some(s), Some(t)) = (p.source, p.target) {
                if s != t && held.contains(&s) && held.contains(&t) {
                    g.hops_out.get_mut(&s).unwrap().insert(t);
                    g.hops_in.get_mut(&t).unwrap().insert(s);
                    g.near.get_mut(&s).unwrap().insert(t);
                    g.near.get_mut(&t).unwrap().insert(s);
                }
            }
        }
        g
    }

    /// Longest simple path along `adj` starting at `v`, capped at `cap`,
    /// by enumerating every simple path.
    fn longest(adj: &BTreeMap<PieceId, BTreeSet<PieceId>>, v: PieceId, cap: usize) -> usize {
        fn go(adj: &BTreeMap<PieceId, BTreeSet<PieceId>>, v: PieceId, on: &mut Vec<PieceId>, cap: usize) -> usize {
            let mut best = on.len() - 1;
            if best >= cap {
                return cap;
            }
            for &u in &adj[&v] {
                if !on.contains(&u) {
                    on.push(u);
                    best = best.max(go(adj, u, on, cap));
                    on.pop();
                }
            }
            best
        }
        go(adj, v, &mut vec![v], cap)
    }

    pub fn depth(&self, v: PieceId, horizon: usize) -> usize {
        Self::longest(&self.hops_in, v, horizon)
    }

    pub fn utility(&self, v: PieceId, horizon: usize) -> usize {
        Self::longest(&self.hops_out, v, horizon)
    }

    /// All-pairs shortest `near` distances (Floyd–Warshall).
    #[allow(clippy::needless_range_loop)]
    pub fn distances(&self) -> BTreeMap<(PieceId, PieceId), usize> {
        let n = self.ids.len();
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        let index: BTreeMap<PieceId, usize> = self.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        for (i, id) in self.ids.iter().enumerate() {
            d[i][i] = 0;
            for u in &self.near[id] {
                d[i][index[u]] = 1;
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        let mut out = BTreeMap::new();
        for i in 0..n {
            for j in 0..n {
                if d[i][j] < inf {
                    out.insert((self.ids[i], self.ids[j]), d[i][j]);
                }
            }
        }
        out
    }

    /// Probability that a uniform-start walk of `steps` steps visits
    /// `target`, enumerating every walk with its probability.
    pub fn visibility(&self, target: PieceId, steps: usize) -> f64 {
        fn walk(g: &Graph, at: PieceId, left: usize, target: PieceId) -> f64 {
            if at == target {
                return 1.0;
            }
            if left == 0 {
                return 0.0;
            }
            let next = &g.near[&at];
            if next.is_empty() {
                return 0.0;
            }
            next.iter().map(|&u| walk(g, u, left - 1, target)).sum::<f64>() / next.len() as f64
        }
        self.ids.iter().map(|&s| walk(self, s, steps, target)).sum::<f64>() / self.ids.len() as f64
    }
}
