// SPDX-License-Identifier: Apache-2.0

//! Visibility: the probability that an undirected random walk of
//! `walk_length` steps, started at a uniformly chosen piece, visits a given
//! piece. A walk on a piece with no neighbours stays put.

use rand::Rng;

use super::{IncidenceView, MeasureConfig, MeasureError};
use crate::ids::PieceId;

/// Exact hitting probability by dynamic programming over walk length.
pub fn visibility_exact(view: &IncidenceView, id: PieceId, cfg: &MeasureConfig) -> Result<f64, MeasureError> {
    if view.is_empty() {
        return Err(MeasureError::EmptyView);
    }
    let k = view.vertex(id).ok_or(MeasureError::UnknownPiece(id))?;
    let n = view.len();
    // hit[v]: probability a walk from v reaches k within the steps so far.
    let mut hit: Vec<f64> = (0..n).map(|v| if v == k { 1.0 } else { 0.0 }).collect();
    for _ in 0..cfg.walk_length {
        let next: Vec<f64> = (0..n)
            .map(|v| {
                if v == k {
                    1.0
                } else if view.near[v].is_empty() {
                    hit[v]
                } else {
                    view.near[v].iter().map(|&u| hit[u]).sum::<f64>() / view.near[v].len() as f64
                }
            })
            .collect();
        hit = next;
    }
    Ok(hit.iter().sum::<f64>() / n as f64)
}

/// Monte-Carlo estimate over `cfg.walk_count` walks. Start pieces are
/// stratified: each full round of walks starts once from every piece, and
/// the remainder start from uniformly drawn pieces.
pub fn visibility<R: Rng + ?Sized>(
    view: &IncidenceView,
    id: PieceId,
    cfg: &MeasureConfig,
    rng: &mut R,
) -> Result<f64, MeasureError> {
    if view.is_empty() {
        return Err(MeasureError::EmptyView);
    }
    let k = view.vertex(id).ok_or(MeasureError::UnknownPiece(id))?;
    let n = view.len();
    let full_rounds = cfg.walk_count / n;
    let mut hits = 0usize;
    for w in 0..cfg.walk_count {
        let start = if w < full_rounds * n { w % n } else { rng.gen_range(0..n) };
        if walk_hits(view, start, k, cfg.walk_length, rng) {
            hits += 1;
        }
    }
    Ok(hits as f64 / cfg.walk_count.max(1) as f64)
}

fn walk_hits<R: Rng + ?Sized>(view: &IncidenceView, start: usize, k: usize, steps: usize, rng: &mut R) -> bool {
    let mut v = start;
    if v == k {
        return true;
    }
    for _ in 0..steps {
        let near = &view.near[v];
        if near.is_empty() {
            return false;
        }
        v = near[rng.gen_range(0..near.len())];
        if v == k {
            return true;
        }
    }
    false
}
