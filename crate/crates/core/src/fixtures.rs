// SPDX-License-Identifier: Apache-2.0

//! The sky-colour example graph: nine nodes and eight typed edges, used by
//! tests, benches and the CLI golden files.

use crate::ids::{AgentId, PieceId, Timestamp};
use crate::piece::{Authorship, EdgeKind, Piece, PieceKind};
use crate::territory::{Origin, Territory};

/// Handles to every piece of the example graph.
#[derive(Clone, Copy, Debug)]
pub struct SkyIds {
    /// "What colour is the sky?"
    pub n1: PieceId,
    /// "Blue"
    pub n2: PieceId,
    /// "Is the sky is blue?"
    pub n3: PieceId,
    /// "The sky is blue."
    pub n4: PieceId,
    /// "To be blue"
    pub n5: PieceId,
    /// "the colour of a cloudless daytime sky"
    pub n6: PieceId,
    /// "Turquoise"
    pub n7: PieceId,
    /// "bleu"
    pub n8: PieceId,
    /// "color"
    pub n9: PieceId,
    /// Blue relate To be blue (unlabeled)
    pub e1: PieceId,
    /// narrative answers the open question
    pub e2: PieceId,
    /// narrative answers the yes/no question, label "yes"
    pub e3: PieceId,
    /// Blue answers the open question (unlabeled)
    pub e4: PieceId,
    /// Blue instantiates color, label "is a"
    pub e5: PieceId,
    /// definition details Blue
    pub e6: PieceId,
    /// Blue differsFrom Turquoise, two-way labels
    pub e7: PieceId,
    /// bleu equates Blue
    pub e8: PieceId,
}

impl SkyIds {
    pub fn nodes(&self) -> [PieceId; 9] {
        [self.n1, self.n2, self.n3, self.n4, self.n5, self.n6, self.n7, self.n8, self.n9]
    }

    pub fn edges(&self) -> [PieceId; 8] {
        [self.e1, self.e2, self.e3, self.e4, self.e5, self.e6, self.e7, self.e8]
    }
}

pub struct Sky {
    pub territory: Territory,
    pub ids: SkyIds,
}

pub const SKY_IDS: SkyIds = SkyIds {
    n1: PieceId::from_u128(0x01),
    n2: PieceId::from_u128(0x02),
    n3: PieceId::from_u128(0x03),
    n4: PieceId::from_u128(0x04),
    n5: PieceId::from_u128(0x05),
    n6: PieceId::from_u128(0x06),
    n7: PieceId::from_u128(0x07),
    n8: PieceId::from_u128(0x08),
    n9: PieceId::from_u128(0x09),
    e1: PieceId::from_u128(0xe1),
    e2: PieceId::from_u128(0xe2),
    e3: PieceId::from_u128(0xe3),
    e4: PieceId::from_u128(0xe4),
    e5: PieceId::from_u128(0xe5),
    e6: PieceId::from_u128(0xe6),
    e7: PieceId::from_u128(0xe7),
    e8: PieceId::from_u128(0xe8),
};

/// Base instant of the fixture authorships.
pub const SKY_EPOCH: Timestamp = Timestamp::from_unix(1_704_067_200); // 2024-01-01T00:00:00Z

/// The example pieces. Each piece has a single author; `alice` wrote the
/// open question and `bob` wrote the narrative answer and its answers edge.
pub fn sky_pieces() -> Vec<Piece> {
    let ids = SKY_IDS;
    let mut minute = 0;
    let mut piece = |id: PieceId, kind: PieceKind, content: &str, author: &str| {
        minute += 1;
        Piece {
            id,
            kind,
            content: content.to_string(),
            source: None,
            target: None,
            label: None,
            reverse_label: None,
            public: false,
            authorships: vec![Authorship::single(
                AgentId::new(author).expect("fixture author"),
                SKY_EPOCH.plus_secs(60 * minute),
            )],
            aliases: Vec::new(),
        }
    };
    let edge = |mut p: Piece, source: PieceId, target: PieceId, label: Option<&str>| {
        p.source = Some(source);
        p.target = Some(target);
        p.label = label.map(str::to_string);
        p
    };

    let mut pieces = vec![
        piece(ids.n1, PieceKind::Question, "What colour is the sky?", "alice"),
        piece(ids.n2, PieceKind::Existence, "Blue", "carol"),
        piece(ids.n3, PieceKind::Question, "Is the sky is blue?", "dave"),
        piece(ids.n4, PieceKind::Narrative, "The sky is blue.", "bob"),
        piece(ids.n5, PieceKind::Existence, "To be blue", "erin"),
        piece(ids.n6, PieceKind::Existence, "the colour of a cloudless daytime sky", "frank"),
        piece(ids.n7, PieceKind::Existence, "Turquoise", "grace"),
        piece(ids.n8, PieceKind::Existence, "bleu", "heidi"),
        piece(ids.n9, PieceKind::Existence, "color", "ivan"),
    ];
    let e = |k| PieceKind::Edge(k);
    pieces.push(edge(piece(ids.e1, e(EdgeKind::Relate), "", "judy"), ids.n2, ids.n5, None));
    pieces.push(edge(piece(ids.e2, e(EdgeKind::Answers), "", "bob"), ids.n4, ids.n1, None));
    pieces.push(edge(piece(ids.e3, e(EdgeKind::Answers), "", "mallory"), ids.n4, ids.n3, Some("yes")));
    pieces.push(edge(piece(ids.e4, e(EdgeKind::Answers), "", "niaj"), ids.n2, ids.n1, None));
    pieces.push(edge(piece(ids.e5, e(EdgeKind::Instantiates), "", "olivia"), ids.n2, ids.n9, Some("is a")));
    pieces.push(edge(piece(ids.e6, e(EdgeKind::Details), "", "peggy"), ids.n6, ids.n2, Some("definition")));
    let mut e7 = edge(piece(ids.e7, e(EdgeKind::DiffersFrom), "", "rupert"), ids.n2, ids.n7, Some("add a bit of green"));
    e7.reverse_label = Some("remove some green".to_string());
    pieces.push(e7);
    pieces.push(edge(
        piece(ids.e8, e(EdgeKind::Equates), "", "sybil"),
        ids.n8,
        ids.n2,
        Some("language translation FR \u{2194} EN"),
    ));
    pieces
}

/// The example graph held in a territory owned by `alice`.
pub fn sky() -> Sky {
    let owner = AgentId::new("alice").expect("fixture owner");
    let mut territory = Territory::new(owner);
    for p in sky_pieces() {
        territory.apply_incoming(&p, Origin::Authored, SKY_EPOCH);
    }
    Sky {
        territory,
        ids: SKY_IDS,
    }
}
