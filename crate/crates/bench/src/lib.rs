// SPDX-License-Identifier: Apache-2.0

//! Synthetic territories for benchmarks.

use mmm_core::{AgentId, EdgeKind, NewPiece, PieceId, PieceKind, Territory, Timestamp};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NODE_KINDS: [PieceKind; 3] = [PieceKind::Narrative, PieceKind::Question, PieceKind::Existence];

/// `nodes` nodes joined by about `edges_per_node * nodes` random edges, each
/// pointing from a later node to an earlier one or to an earlier edge.
pub fn synthetic(nodes: usize, edges_per_node: usize, seed: u64) -> (Territory, Vec<PieceId>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let owner = AgentId::new("bench").unwrap();
    let mut t = Territory::new(owner.clone());
    let now = Timestamp::from_unix(1_704_067_200);
    let mut ids = Vec::with_capacity(nodes * (1 + edges_per_node));
    for i in 0..nodes {
        let kind = *NODE_KINDS.choose(&mut rng).unwrap();
        let node = t
            .create_piece(NewPiece::node(kind, format!("piece {i} about topic {}", i % 17)), &owner, now, &mut rng)
            .unwrap();
        if !ids.is_empty() {
            for _ in 0..edges_per_node {
                let target = ids[rng.gen_range(0..ids.len())];
                let kind = *EdgeKind::ALL.choose(&mut rng).unwrap();
                let mut new = NewPiece::edge(kind, node.id, target);
                if rng.gen_bool(0.7) {
                    new = new.with_label("because");
                }
                if let Ok(edge) = t.create_piece(new, &owner, now, &mut rng) {
                    ids.push(edge.id);
                }
            }
        }
        ids.push(node.id);
    }
    (t, ids)
}
