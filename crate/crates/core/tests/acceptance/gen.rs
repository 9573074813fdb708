// SPDX-License-Identifier: Apache-2.0

//! Random pieces, rules and worlds for the acceptance checks.

use mmm_core::{AgentId, Authorship, EdgeKind, Origin, Piece, PieceId, PieceKind, Territory, Timestamp};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EPOCH: Timestamp = Timestamp::from_unix(1_704_067_200);

const WORDS: [&str; 12] = [
    "sky", "blue", "water", "cloud", "light", "dust", "wave", "salt", "tide", "moon", "fog", "ice",
];
const AUTHORS: [&str; 5] = ["ann", "ben", "cat", "dan", "eve"];

pub fn who(name: &str) -> AgentId {
    AgentId::new(name).unwrap()
}

pub fn words(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=4);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn random_kind(rng: &mut ChaCha8Rng) -> PieceKind {
    [PieceKind::Narrative, PieceKind::Question, PieceKind::Existence][rng.gen_range(0..3)]
}

/// Between 1 and `max` pieces with ids from `base`. Edges connect earlier
/// pieces, edge-pieces included.
pub fn random_pieces(rng: &mut ChaCha8Rng, max: usize, base: u128) -> Vec<Piece> {
    let n = rng.gen_range(1..=max);
    let mut pieces: Vec<Piece> = Vec::with_capacity(n);
    for i in 0..n {
        let id = PieceId::from_u128(base + i as u128);
        let author = who(AUTHORS.choose(rng).unwrap());
        let mut piece = Piece {
            id,
            kind: random_kind(rng),
            content: words(rng),
            source: None,
            target: None,
            label: None,
            reverse_label: None,
            public: rng.gen_bool(0.2),
            authorships: vec![Authorship::single(author, EPOCH.plus_secs(i as i64))],
            aliases: vec![],
        };
        if i >= 2 && rng.gen_bool(0.5) {
            let a = rng.gen_range(0..i);
            let mut b = rng.gen_range(0..i - 1);
            if b >= a {
                b += 1;
            }
            piece.kind = PieceKind::Edge(EdgeKind::ALL[rng.gen_range(0..EdgeKind::ALL.len())]);
            piece.source = Some(pieces[a].id);
            piece.target = Some(pieces[b].id);
            piece.content = String::new();
            if rng.gen_bool(0.5) {
                piece.label = Some(words(rng));
            }
        }
        pieces.push(piece);
    }
    pieces
}

pub fn territory_of(owner: &str, pieces: &[Piece]) -> Territory {
    let mut t = Territory::new(who(owner));
    for p in pieces {
        t.apply_incoming(p, Origin::Authored, EPOCH);
    }
    t
}

fn random_atom(rng: &mut ChaCha8Rng, ids: &[PieceId]) -> String {
    let cmp = ["<", "<=", "==", ">=", ">"].choose(rng).unwrap().to_string();
    match rng.gen_range(0..8) {
        0 => {
            let kinds = [
                "narrative", "question", "existence", "edge", "answers", "relate", "details", "equates",
            ];
            let op = if rng.gen_bool(0.5) { "==" } else { "!=" };
            format!("kind {op} {}", kinds.choose(rng).unwrap())
        }
        1 => format!("flags {cmp} {}", rng.gen_range(0..3)),
        2 => format!("depth(ctx) {cmp} {}", rng.gen_range(0..4)),
        3 => format!("utility(ctx) {cmp} {}", rng.gen_range(0..4)),
        4 => format!("implantation(ctx) {cmp} {:.1}", rng.gen_range(0.0..3.0)),
        5 => format!("visibility(ctx) {cmp} {:.2}", rng.gen_range(0.0..0.8)),
        6 if !ids.is_empty() => format!("closeness(ctx, {}) {cmp} {}", ids.choose(rng).unwrap(), rng.gen_range(0..4)),
        _ => ["true", "false", "origin == accepted-share", "origin != authored"]
            .choose(rng)
            .unwrap()
            .to_string(),
    }
}

fn random_expr(rng: &mut ChaCha8Rng, ids: &[PieceId], depth: usize) -> String {
    if depth == 0 || rng.gen_bool(0.4) {
        return random_atom(rng, ids);
    }
    match rng.gen_range(0..3) {
        0 => format!("{} and {}", random_expr(rng, ids, depth - 1), random_expr(rng, ids, depth - 1)),
        1 => format!("({} or {})", random_expr(rng, ids, depth - 1), random_expr(rng, ids, depth - 1)),
        _ => format!("not {}", random_expr(rng, ids, depth - 1)),
    }
}

/// One to four random rules, one per line.
pub fn random_rules(rng: &mut ChaCha8Rng, ids: &[PieceId]) -> String {
    let n = rng.gen_range(1..=4);
    (0..n)
        .map(|_| {
            let verdict = ["accept", "reject", "quarantine"].choose(rng).unwrap();
            format!("{verdict} if {}", random_expr(rng, ids, 3))
        })
        .collect::<Vec<_>>()
        .join("\n")
}
