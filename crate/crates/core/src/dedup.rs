// SPDX-License-Identifier: Apache-2.0

//! Near-duplicate detection by token-set Jaccard similarity, and the default
//! choice of which piece survives a merge.

use std::collections::BTreeSet;

use crate::ids::PieceId;
use crate::piece::Piece;
use crate::territory::Territory;

pub const DEFAULT_TAU: f64 = 0.8;

/// Lowercases, replaces punctuation with spaces and collapses whitespace.
pub fn normalize(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn tokens(text: &str) -> BTreeSet<String> {
    normalize(text).split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// Jaccard similarity of the normalized token sets. Two texts that normalize
/// to the same string (including two empty texts) score 1.0.
pub fn similarity(a: &str, b: &str) -> f64 {
    if normalize(a) == normalize(b) {
        return 1.0;
    }
    let (ta, tb) = (tokens(a), tokens(b));
    let union = ta.union(&tb).count();
    if union == 0 {
        return 1.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct DuplicatePair {
    pub a: PieceId,
    pub b: PieceId,
    pub similarity: f64,
}

/// Same-kind node pairs with similarity ≥ `tau`, each pair once with
/// `a < b`, ordered by descending similarity then ids.
pub fn detect_duplicates(territory: &Territory, tau: f64) -> Vec<DuplicatePair> {
    let nodes: Vec<(&Piece, BTreeSet<String>, String)> = territory
        .pieces()
        .filter(|p| !p.is_edge())
        .map(|p| (p, tokens(&p.content), normalize(&p.content)))
        .collect();
    let mut pairs = Vec::new();
    for (i, (pa, ta, na)) in nodes.iter().enumerate() {
        for (pb, tb, nb) in &nodes[i + 1..] {
            if pa.kind != pb.kind {
                continue;
            }
            let s = if na == nb {
                1.0
            } else {
                let union = ta.union(tb).count();
                ta.intersection(tb).count() as f64 / union as f64
            };
            if s >= tau {
                pairs.push(DuplicatePair {
                    a: pa.id.min(pb.id),
                    b: pa.id.max(pb.id),
                    similarity: s,
                });
            }
        }
    }
    pairs.sort_by(|x, y| {
        y.similarity
            .total_cmp(&x.similarity)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    pairs
}

/// Which of two pieces to keep: earliest authorship, ties by smaller id.
/// Returns `(keep, absorb)`.
pub fn default_keep(a: &Piece, b: &Piece) -> (PieceId, PieceId) {
    let ka = (a.earliest_timestamp(), a.id);
    let kb = (b.earliest_timestamp(), b.id);
    if ka <= kb {
        (a.id, b.id)
    } else {
        (b.id, a.id)
    }
}
