// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeSet, VecDeque};

use super::{IncidenceView, MeasureConfig, MeasureError};
use crate::ids::PieceId;

fn vertex(view: &IncidenceView, id: PieceId) -> Result<usize, MeasureError> {
    view.vertex(id).ok_or(MeasureError::UnknownPiece(id))
}

fn bfs(adj: &[Vec<usize>], start: usize, limit: Option<usize>) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].expect("queued vertices have a distance");
        if limit.is_some_and(|l| d >= l) {
            continue;
        }
        for &u in &adj[v] {
            if dist[u].is_none() {
                dist[u] = Some(d + 1);
                queue.push_back(u);
            }
        }
    }
    dist
}

/// Minimum number of steps between two pieces, ignoring direction. Crossing
/// an edge-piece from one endpoint to the other is one step; stepping onto
/// or off an edge-piece is one step. `None` when unreachable.
pub fn closeness(view: &IncidenceView, a: PieceId, b: PieceId) -> Result<Option<usize>, MeasureError> {
    let (va, vb) = (vertex(view, a)?, vertex(view, b)?);
    Ok(bfs(&view.near, va, None)[vb])
}

/// Connected components, each sorted, ordered by smallest member.
pub fn areas(view: &IncidenceView) -> Vec<Vec<PieceId>> {
    let n = view.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for v in 0..n {
        for &u in &view.incidence[v] {
            let (rv, ru) = (find(&mut parent, v), find(&mut parent, u));
            if rv != ru {
                parent[rv.max(ru)] = rv.min(ru);
            }
        }
    }
    let mut groups: Vec<Vec<PieceId>> = vec![Vec::new(); n];
    for v in 0..n {
        let root = find(&mut parent, v);
        groups[root].push(view.id_of(v));
    }
    groups.retain(|g| !g.is_empty());
    groups
}

/// Pieces within `radius` closeness steps of `seed`.
pub fn ball(view: &IncidenceView, seed: PieceId, radius: usize) -> Result<BTreeSet<PieceId>, MeasureError> {
    let v = vertex(view, seed)?;
    Ok(collect(view, &bfs(&view.near, v, Some(radius))))
}

/// Pieces within `radius` incidence steps of `seed`; hops across an edge
/// count two steps here (onto the edge, then off it).
pub fn incidence_ball(view: &IncidenceView, seed: PieceId, radius: usize) -> Result<BTreeSet<PieceId>, MeasureError> {
    let v = vertex(view, seed)?;
    Ok(collect(view, &bfs(&view.incidence, v, Some(radius))))
}

fn collect(view: &IncidenceView, dist: &[Option<usize>]) -> BTreeSet<PieceId> {
    dist.iter()
        .enumerate()
        .filter(|(_, d)| d.is_some())
        .map(|(v, _)| view.id_of(v))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Follow hops backwards: paths ending at the piece.
    Incoming,
    /// Follow hops forwards: paths starting at the piece.
    Outgoing,
}

/// Length of the longest simple directed hop path ending at (incoming) or
/// starting from (outgoing) `id`, capped at `horizon`.
pub fn longest_path_from(
    view: &IncidenceView,
    id: PieceId,
    direction: Direction,
    horizon: usize,
) -> Result<usize, MeasureError> {
    let start = vertex(view, id)?;
    let adj = match direction {
        Direction::Incoming => &view.hops_in,
        Direction::Outgoing => &view.hops_out,
    };
    // Every vertex of a path of length ≤ horizon lies within that distance.
    let dist = bfs(adj, start, Some(horizon));
    let in_range: Vec<bool> = dist.iter().map(Option::is_some).collect();
    match topological_order(adj, &in_range) {
        Some(order) => {
            // Acyclic: longest path by dynamic programming, sinks first.
            let mut longest = vec![0usize; adj.len()];
            for &v in order.iter().rev() {
                longest[v] = adj[v]
                    .iter()
                    .filter(|&&u| in_range[u])
                    .map(|&u| longest[u] + 1)
                    .max()
                    .unwrap_or(0);
            }
            Ok(longest[start].min(horizon))
        }
        None => {
            let mut on_path = vec![false; adj.len()];
            let mut best = 0;
            dfs_longest(adj, start, 0, horizon, &mut on_path, &mut best);
            Ok(best)
        }
    }
}

fn topological_order(adj: &[Vec<usize>], keep: &[bool]) -> Option<Vec<usize>> {
    let n = adj.len();
    let mut indegree = vec![0usize; n];
    for v in (0..n).filter(|&v| keep[v]) {
        for &u in adj[v].iter().filter(|&&u| keep[u]) {
            indegree[u] += 1;
        }
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| keep[v] && indegree[v] == 0).collect();
    let mut order = Vec::new();
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &u in adj[v].iter().filter(|&&u| keep[u]) {
            indegree[u] -= 1;
            if indegree[u] == 0 {
                queue.push_back(u);
            }
        }
    }
    (order.len() == keep.iter().filter(|k| **k).count()).then_some(order)
}

fn dfs_longest(adj: &[Vec<usize>], v: usize, len: usize, horizon: usize, on_path: &mut [bool], best: &mut usize) {
    *best = (*best).max(len);
    if *best >= horizon {
        return;
    }
    on_path[v] = true;
    for &u in &adj[v] {
        if !on_path[u] {
            dfs_longest(adj, u, len + 1, horizon, on_path, best);
            if *best >= horizon {
                break;
            }
        }
    }
    on_path[v] = false;
}

/// Longest incoming simple hop path (how deeply the piece is supported).
pub fn depth(view: &IncidenceView, id: PieceId, cfg: &MeasureConfig) -> Result<usize, MeasureError> {
    longest_path_from(view, id, Direction::Incoming, cfg.horizon)
}

/// Longest outgoing simple hop path (how much the piece builds on).
pub fn utility(view: &IncidenceView, id: PieceId, cfg: &MeasureConfig) -> Result<usize, MeasureError> {
    longest_path_from(view, id, Direction::Outgoing, cfg.horizon)
}

/// Weighted count of the edge-pieces attached to `id`: each contributes its
/// kind weight, scaled down when it has no label.
pub fn implantation(view: &IncidenceView, id: PieceId, cfg: &MeasureConfig) -> Result<f64, MeasureError> {
    let v = vertex(view, id)?;
    Ok(view.incident_edges[v]
        .iter()
        .map(|&e| {
            let edge = &view.pieces[e];
            let kind = edge.kind.edge_kind().expect("incident edges are edge pieces");
            let factor = if edge.is_labeled() { 1.0 } else { cfg.label_factor_unlabeled };
            cfg.kind_weight(kind) * factor
        })
        .sum())
}
