// SPDX-License-Identifier: Apache-2.0

//! The piece-of-knowledge type system: three node kinds and eight edge kinds.
//! Edges are pieces too and can be the endpoints of other edges.

use std::fmt;
use std::str::FromStr;

use crate::ids::{AgentId, PieceId, Timestamp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Answers,
    Relate,
    Instantiates,
    Details,
    Nuances,
    Questions,
    Equates,
    DiffersFrom,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 8] = [
        EdgeKind::Answers,
        EdgeKind::Relate,
        EdgeKind::Instantiates,
        EdgeKind::Details,
        EdgeKind::Nuances,
        EdgeKind::Questions,
        EdgeKind::Equates,
        EdgeKind::DiffersFrom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::Answers => "answers",
            EdgeKind::Relate => "relate",
            EdgeKind::Instantiates => "instantiates",
            EdgeKind::Details => "details",
            EdgeKind::Nuances => "nuances",
            EdgeKind::Questions => "questions",
            EdgeKind::Equates => "equates",
            EdgeKind::DiffersFrom => "differsFrom",
        }
    }

    /// Whether a reverse label is shown for this kind (two-way readings).
    pub fn renders_reverse_label(self) -> bool {
        matches!(self, EdgeKind::DiffersFrom | EdgeKind::Equates)
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownKind(pub String);

impl fmt::Display for UnknownKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown kind {:?}", self.0)
    }
}

impl std::error::Error for UnknownKind {}

impl FromStr for EdgeKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EdgeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum PieceKind {
    #[default]
    Narrative,
    Question,
    Existence,
    Edge(EdgeKind),
}

impl PieceKind {
    pub fn is_edge(self) -> bool {
        matches!(self, PieceKind::Edge(_))
    }

    pub fn edge_kind(self) -> Option<EdgeKind> {
        match self {
            PieceKind::Edge(k) => Some(k),
            _ => None,
        }
    }

    /// Name as written in documents and rules: node kinds by name, edges by
    /// their edge kind.
    pub fn name(self) -> &'static str {
        match self {
            PieceKind::Narrative => "narrative",
            PieceKind::Question => "question",
            PieceKind::Existence => "existence",
            PieceKind::Edge(k) => k.name(),
        }
    }

    pub fn node_from_name(s: &str) -> Option<PieceKind> {
        match s {
            "narrative" => Some(PieceKind::Narrative),
            "question" => Some(PieceKind::Question),
            "existence" => Some(PieceKind::Existence),
            _ => None,
        }
    }
}

impl fmt::Display for PieceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PieceKind {
    type Err = UnknownKind;

    /// Accepts node kind names and bare edge kind names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(k) = PieceKind::node_from_name(s) {
            return Ok(k);
        }
        s.parse::<EdgeKind>().map(PieceKind::Edge)
    }
}

/// A team of authors and the instant they produced (or co-produced) a piece.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Authorship {
    pub authors: Vec<AgentId>,
    pub timestamp: Timestamp,
}

impl Authorship {
    pub fn single(author: AgentId, timestamp: Timestamp) -> Self {
        Authorship {
            authors: vec![author],
            timestamp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Piece {
    pub id: PieceId,
    pub kind: PieceKind,
    pub content: String,
    pub source: Option<PieceId>,
    pub target: Option<PieceId>,
    pub label: Option<String>,
    pub reverse_label: Option<String>,
    pub public: bool,
    pub authorships: Vec<Authorship>,
    /// Ids merged into this piece.
    pub aliases: Vec<PieceId>,
}

impl Piece {
    pub fn is_edge(&self) -> bool {
        self.kind.is_edge()
    }

    pub fn is_labeled(&self) -> bool {
        self.label.as_deref().is_some_and(|l| !l.is_empty())
    }

    /// Endpoints of an edge-piece (source, target); empty for nodes.
    pub fn endpoints(&self) -> impl Iterator<Item = PieceId> + '_ {
        self.source.iter().chain(self.target.iter()).copied()
    }

    /// Distinct agents over all authorships, sorted.
    pub fn agents(&self) -> Vec<AgentId> {
        let mut agents: Vec<AgentId> = self
            .authorships
            .iter()
            .flat_map(|a| a.authors.iter().cloned())
            .collect();
        agents.sort();
        agents.dedup();
        agents
    }

    pub fn earliest_timestamp(&self) -> Option<Timestamp> {
        self.authorships.iter().map(|a| a.timestamp).min()
    }

    /// Appends authorships not already present (exact match on authors and
    /// timestamp). Returns how many were added.
    pub fn absorb_authorships(&mut self, incoming: &[Authorship]) -> usize {
        let mut added = 0;
        for a in incoming {
            if !self.authorships.contains(a) {
                self.authorships.push(a.clone());
                added += 1;
            }
        }
        added
    }

    /// Checks the structural invariants that do not depend on a territory.
    pub fn check_shape(&self) -> Result<(), ShapeError> {
        if self.authorships.is_empty() {
            return Err(ShapeError::NoAuthorship);
        }
        if self.authorships.iter().any(|a| a.authors.is_empty()) {
            return Err(ShapeError::EmptyAuthorList);
        }
        if self.kind.is_edge() {
            let (Some(source), Some(target)) = (self.source, self.target) else {
                return Err(ShapeError::EdgeMissingEndpoint);
            };
            if source == self.id || target == self.id {
                return Err(ShapeError::EdgeReferencesItself);
            }
        } else if self.source.is_some() || self.target.is_some() || self.reverse_label.is_some() {
            return Err(ShapeError::NodeWithEndpoints);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ShapeError {
    #[error("piece has no authorship")]
    NoAuthorship,
    #[error("authorship with an empty author list")]
    EmptyAuthorList,
    #[error("edge piece without both endpoints")]
    EdgeMissingEndpoint,
    #[error("edge piece names itself as an endpoint")]
    EdgeReferencesItself,
    #[error("node piece with endpoints or a reverse label")]
    NodeWithEndpoints,
}
