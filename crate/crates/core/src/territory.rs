// SPDX-License-Identifier: Apache-2.0

//! A territory is one owner's local store of pieces plus local metadata.
//! Every mutation here affects this territory only.

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use thiserror::Error;

use crate::ids::{AgentId, PieceId, Timestamp};
use crate::piece::{Authorship, EdgeKind, Piece, PieceKind, ShapeError};

/// Flag code attached to the equates edge that records a content fork.
pub const CONTENT_FORK: &str = "CONTENT_FORK";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoreError {
    #[error("edge kinds need both a source and a target")]
    EdgeEndpointsMissing,
    #[error("node kinds take no endpoints")]
    NodeWithEndpoints,
    #[error("author name is empty")]
    EmptyAuthor,
    #[error("unknown anchor {0}")]
    UnknownAnchor(PieceId),
    #[error("unknown piece {0}")]
    UnknownPiece(PieceId),
    #[error("cannot merge a {keep} into a {absorb}")]
    KindMismatch { keep: PieceKind, absorb: PieceKind },
    #[error("cannot merge {0} with itself or with an edge attached to it")]
    SelfMerge(PieceId),
}

impl CoreError {
    pub fn code(&self) -> &'static str {
        match self {
            CoreError::EdgeEndpointsMissing => "EDGE_ENDPOINTS_MISSING",
            CoreError::NodeWithEndpoints => "NODE_WITH_ENDPOINTS",
            CoreError::EmptyAuthor => "EMPTY_AUTHOR",
            CoreError::UnknownAnchor(_) => "UNKNOWN_ANCHOR",
            CoreError::UnknownPiece(_) => "UNKNOWN_PIECE",
            CoreError::KindMismatch { .. } => "KIND_MISMATCH",
            CoreError::SelfMerge(_) => "SELF_MERGE",
        }
    }
}

/// Parses an agent name, mapping a blank name to `EMPTY_AUTHOR`.
pub fn agent(name: &str) -> Result<AgentId, CoreError> {
    AgentId::new(name).ok_or(CoreError::EmptyAuthor)
}

/// How a piece entered the territory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    Authored,
    AcceptedShare,
    WayfarerStep,
}

impl Origin {
    pub fn name(self) -> &'static str {
        match self {
            Origin::Authored => "authored",
            Origin::AcceptedShare => "accepted-share",
            Origin::WayfarerStep => "wayfarer-step",
        }
    }

    pub fn from_name(s: &str) -> Option<Origin> {
        match s {
            "authored" => Some(Origin::Authored),
            "accepted-share" => Some(Origin::AcceptedShare),
            "wayfarer-step" => Some(Origin::WayfarerStep),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RedFlag {
    pub agent: AgentId,
    pub at: Timestamp,
    pub code: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalMeta {
    pub accepted_at: Timestamp,
    pub origin: Origin,
    pub red_flags: Vec<RedFlag>,
}

impl LocalMeta {
    fn new(origin: Origin, accepted_at: Timestamp) -> Self {
        LocalMeta {
            accepted_at,
            origin,
            red_flags: Vec::new(),
        }
    }
}

/// What to create. Node kinds leave `source`/`target` empty.
#[derive(Clone, Debug, Default)]
pub struct NewPiece {
    pub kind: PieceKind,
    pub content: String,
    pub label: Option<String>,
    pub reverse_label: Option<String>,
    pub source: Option<PieceId>,
    pub target: Option<PieceId>,
}

impl NewPiece {
    pub fn node(kind: PieceKind, content: impl Into<String>) -> Self {
        NewPiece {
            kind,
            content: content.into(),
            ..Default::default()
        }
    }

    pub fn edge(kind: EdgeKind, source: PieceId, target: PieceId) -> Self {
        NewPiece {
            kind: PieceKind::Edge(kind),
            source: Some(source),
            target: Some(target),
            ..Default::default()
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_reverse_label(mut self, label: impl Into<String>) -> Self {
        self.reverse_label = Some(label.into());
        self
    }

    pub fn with_content(mut self, content: impl Into<String>) -> Self {
        self.content = content.into();
        self
    }
}

/// An annotation request: a new node attached to `anchor` by an edge of
/// `edge_kind` running from the new node to the anchor.
#[derive(Clone, Debug)]
pub struct Annotation {
    pub anchor: PieceId,
    pub edge_kind: EdgeKind,
    pub content: String,
    pub label: Option<String>,
    /// Kind of the new node. Defaults to `question` for `questions` edges
    /// and `narrative` otherwise.
    pub node_kind: Option<PieceKind>,
}

impl Annotation {
    pub fn new(anchor: PieceId, edge_kind: EdgeKind, content: impl Into<String>) -> Self {
        Annotation {
            anchor,
            edge_kind,
            content: content.into(),
            label: None,
            node_kind: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn with_node_kind(mut self, kind: PieceKind) -> Self {
        self.node_kind = Some(kind);
        self
    }
}

/// Result of folding a foreign copy of a piece into the territory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Applied {
    Inserted,
    Updated { authorships_added: usize, made_public: bool },
    Unchanged,
    /// Same id, different content: the foreign text was kept as `fork`,
    /// linked to the local piece by the flagged equates edge `edge`.
    Forked { fork: PieceId, edge: PieceId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Territory {
    owner: AgentId,
    pieces: BTreeMap<PieceId, Piece>,
    meta: BTreeMap<PieceId, LocalMeta>,
    alias_index: BTreeMap<PieceId, PieceId>,
}

impl Territory {
    pub fn new(owner: AgentId) -> Self {
        Territory {
            owner,
            pieces: BTreeMap::new(),
            meta: BTreeMap::new(),
            alias_index: BTreeMap::new(),
        }
    }

    /// Reassembles a territory from persisted parts. Metadata for missing
    /// pieces is dropped; pieces without metadata get `origin=authored` at
    /// their earliest authorship.
    pub fn from_parts(
        owner: AgentId,
        pieces: impl IntoIterator<Item = Piece>,
        meta: BTreeMap<PieceId, LocalMeta>,
        alias_index: BTreeMap<PieceId, PieceId>,
    ) -> Self {
        let pieces: BTreeMap<PieceId, Piece> = pieces.into_iter().map(|p| (p.id, p)).collect();
        let mut meta: BTreeMap<PieceId, LocalMeta> =
            meta.into_iter().filter(|(id, _)| pieces.contains_key(id)).collect();
        for (id, p) in &pieces {
            meta.entry(*id).or_insert_with(|| {
                LocalMeta::new(
                    Origin::Authored,
                    p.earliest_timestamp().unwrap_or(Timestamp::from_unix(0)),
                )
            });
        }
        let mut t = Territory {
            owner,
            pieces,
            meta,
            alias_index: BTreeMap::new(),
        };
        for (from, to) in alias_index {
            t.record_alias(from, to);
        }
        t
    }

    pub fn owner(&self) -> &AgentId {
        &self.owner
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn pieces(&self) -> impl Iterator<Item = &Piece> {
        self.pieces.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = PieceId> + '_ {
        self.pieces.keys().copied()
    }

    pub fn meta(&self, id: PieceId) -> Option<&LocalMeta> {
        self.meta.get(&self.resolve(id))
    }

    pub fn all_meta(&self) -> &BTreeMap<PieceId, LocalMeta> {
        &self.meta
    }

    pub fn alias_index(&self) -> &BTreeMap<PieceId, PieceId> {
        &self.alias_index
    }

    pub fn flag_count(&self, id: PieceId) -> usize {
        self.meta(id).map_or(0, |m| m.red_flags.len())
    }

    /// Follows the alias index to the canonical id. Ids that were never
    /// merged resolve to themselves, whether held locally or not.
    pub fn resolve(&self, id: PieceId) -> PieceId {
        // The index is kept flat, so one lookup suffices.
        self.alias_index.get(&id).copied().unwrap_or(id)
    }

    pub fn get(&self, id: PieceId) -> Option<&Piece> {
        self.pieces.get(&self.resolve(id))
    }

    pub fn contains(&self, id: PieceId) -> bool {
        self.get(id).is_some()
    }

    fn fresh_id<R: RngCore + ?Sized>(&self, rng: &mut R) -> PieceId {
        loop {
            let id = PieceId::random(rng);
            if !self.pieces.contains_key(&id) && !self.alias_index.contains_key(&id) {
                return id;
            }
        }
    }

    pub fn create_piece<R: RngCore + ?Sized>(
        &mut self,
        new: NewPiece,
        author: &AgentId,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<Piece, CoreError> {
        match (new.kind.is_edge(), new.source, new.target) {
            (true, Some(_), Some(_)) => {}
            (true, _, _) => return Err(CoreError::EdgeEndpointsMissing),
            (false, None, None) if new.reverse_label.is_none() => {}
            (false, _, _) => return Err(CoreError::NodeWithEndpoints),
        }
        let id = self.fresh_id(rng);
        let piece = Piece {
            id,
            kind: new.kind,
            content: new.content,
            source: new.source,
            target: new.target,
            label: new.label,
            reverse_label: new.reverse_label,
            public: false,
            authorships: vec![Authorship::single(author.clone(), now)],
            aliases: Vec::new(),
        };
        self.pieces.insert(id, piece.clone());
        self.meta.insert(id, LocalMeta::new(Origin::Authored, now));
        Ok(piece)
    }

    /// Creates a node holding the annotation text and an edge from it to the
    /// anchor. The anchor may be an edge-piece.
    pub fn annotate<R: RngCore + ?Sized>(
        &mut self,
        annotation: Annotation,
        author: &AgentId,
        now: Timestamp,
        rng: &mut R,
    ) -> Result<(Piece, Piece), CoreError> {
        let anchor = self.resolve(annotation.anchor);
        if !self.pieces.contains_key(&anchor) {
            return Err(CoreError::UnknownAnchor(annotation.anchor));
        }
        let node_kind = match annotation.node_kind {
            Some(k) if !k.is_edge() => k,
            Some(_) => return Err(CoreError::NodeWithEndpoints),
            None if annotation.edge_kind == EdgeKind::Questions => PieceKind::Question,
            None => PieceKind::Narrative,
        };
        let node = self.create_piece(
            NewPiece::node(node_kind, annotation.content),
            author,
            now,
            rng,
        )?;
        let mut edge = NewPiece::edge(annotation.edge_kind, node.id, anchor);
        edge.label = annotation.label;
        let edge = self.create_piece(edge, author, now, rng)?;
        Ok((node, edge))
    }

    /// Marks a piece public. There is deliberately no inverse.
    pub fn set_public(&mut self, id: PieceId) -> Result<Piece, CoreError> {
        let canonical = self.resolve(id);
        let piece = self
            .pieces
            .get_mut(&canonical)
            .ok_or(CoreError::UnknownPiece(id))?;
        piece.public = true;
        Ok(piece.clone())
    }

    pub fn delete_piece(&mut self, id: PieceId) -> Result<(), CoreError> {
        let canonical = self.resolve(id);
        if self.pieces.remove(&canonical).is_none() {
            return Err(CoreError::UnknownPiece(id));
        }
        self.meta.remove(&canonical);
        self.alias_index.retain(|_, to| *to != canonical);
        Ok(())
    }

    pub fn red_flag(
        &mut self,
        id: PieceId,
        flagger: &AgentId,
        now: Timestamp,
        code: &str,
    ) -> Result<LocalMeta, CoreError> {
        let canonical = self.resolve(id);
        let meta = self
            .meta
            .get_mut(&canonical)
            .ok_or(CoreError::UnknownPiece(id))?;
        meta.red_flags.push(RedFlag {
            agent: flagger.clone(),
            at: now,
            code: code.to_string(),
        });
        Ok(meta.clone())
    }

    /// Folds `absorb` into `keep`: edges are re-pointed, authorships and the
    /// public mark are united, and `absorb` becomes an alias of `keep`.
    pub fn merge(&mut self, keep: PieceId, absorb: PieceId) -> Result<Piece, CoreError> {
        let keep_id = self.resolve(keep);
        let absorb_id = self.resolve(absorb);
        let keep_piece = self.pieces.get(&keep_id).ok_or(CoreError::UnknownPiece(keep))?;
        let absorb_piece = self
            .pieces
            .get(&absorb_id)
            .ok_or(CoreError::UnknownPiece(absorb))?;
        if keep_id == absorb_id {
            return Err(CoreError::SelfMerge(keep_id));
        }
        if keep_piece.kind != absorb_piece.kind {
            return Err(CoreError::KindMismatch {
                keep: keep_piece.kind,
                absorb: absorb_piece.kind,
            });
        }
        // Re-pointing would make `keep` an endpoint of itself.
        if keep_piece.endpoints().any(|e| self.resolve(e) == absorb_id) {
            return Err(CoreError::SelfMerge(keep_id));
        }

        let absorbed = self.pieces.remove(&absorb_id).expect("checked above");
        let absorbed_meta = self.meta.remove(&absorb_id);

        for piece in self.pieces.values_mut() {
            if piece.source.is_some_and(|s| s == absorb_id || self.alias_index.get(&s) == Some(&absorb_id)) {
                piece.source = Some(keep_id);
            }
            if piece.target.is_some_and(|t| t == absorb_id || self.alias_index.get(&t) == Some(&absorb_id)) {
                piece.target = Some(keep_id);
            }
        }

        let kept = self.pieces.get_mut(&keep_id).expect("checked above");
        kept.absorb_authorships(&absorbed.authorships);
        kept.public |= absorbed.public;
        for alias in std::iter::once(absorb_id).chain(absorbed.aliases.iter().copied()) {
            if alias != keep_id && !kept.aliases.contains(&alias) {
                kept.aliases.push(alias);
            }
        }
        kept.aliases.sort();
        let kept = kept.clone();

        if let (Some(absorbed_meta), Some(meta)) = (absorbed_meta, self.meta.get_mut(&keep_id)) {
            meta.red_flags.extend(absorbed_meta.red_flags);
        }
        self.record_alias(absorb_id, keep_id);
        Ok(kept)
    }

    /// Inserts `from → to`, keeping the index flat and acyclic.
    fn record_alias(&mut self, from: PieceId, to: PieceId) {
        let to = self.alias_index.get(&to).copied().unwrap_or(to);
        if from == to {
            return;
        }
        for target in self.alias_index.values_mut() {
            if *target == from {
                *target = to;
            }
        }
        self.alias_index.insert(from, to);
    }

    /// Folds a foreign copy of a piece into the territory. New ids are
    /// inserted with `origin`; known ids gain missing authorships and the
    /// public mark; a content mismatch on a known id is kept as a visible
    /// fork.
    pub fn apply_incoming(&mut self, incoming: &Piece, origin: Origin, now: Timestamp) -> Applied {
        let canonical = self.resolve(incoming.id);
        let Some(local) = self.pieces.get_mut(&canonical) else {
            let mut piece = incoming.clone();
            piece.id = canonical;
            self.pieces.insert(canonical, piece);
            self.meta.insert(canonical, LocalMeta::new(origin, now));
            return Applied::Inserted;
        };

        let authorships_added = local.absorb_authorships(&incoming.authorships);
        let made_public = incoming.public && !local.public;
        local.public |= incoming.public;
        let is_direct = canonical == incoming.id;
        let conflict = is_direct && local.content != incoming.content;

        if conflict {
            let fork_id = PieceId::derived(
                "content-fork",
                &[&incoming.id.as_u128().to_be_bytes(), incoming.content.as_bytes()],
            );
            let edge_id = PieceId::derived("content-fork-edge", &[&fork_id.as_u128().to_be_bytes()]);
            if let std::collections::btree_map::Entry::Vacant(slot) = self.pieces.entry(fork_id) {
                let mut fork = incoming.clone();
                fork.id = fork_id;
                fork.aliases.clear();
                slot.insert(fork);
                self.meta.insert(fork_id, LocalMeta::new(origin, now));
            }
            if !self.pieces.contains_key(&edge_id) {
                let edge = Piece {
                    id: edge_id,
                    kind: PieceKind::Edge(EdgeKind::Equates),
                    content: String::new(),
                    source: Some(fork_id),
                    target: Some(canonical),
                    label: Some(CONTENT_FORK.to_string()),
                    reverse_label: None,
                    public: false,
                    authorships: vec![Authorship::single(self.owner.clone(), now)],
                    aliases: Vec::new(),
                };
                self.pieces.insert(edge_id, edge);
                let mut meta = LocalMeta::new(origin, now);
                meta.red_flags.push(RedFlag {
                    agent: self.owner.clone(),
                    at: now,
                    code: CONTENT_FORK.to_string(),
                });
                self.meta.insert(edge_id, meta);
                return Applied::Forked {
                    fork: fork_id,
                    edge: edge_id,
                };
            }
        }

        if authorships_added > 0 || made_public {
            Applied::Updated {
                authorships_added,
                made_public,
            }
        } else {
            Applied::Unchanged
        }
    }

    /// Inserts a piece authored elsewhere verbatim (used by importers).
    /// Returns the shape error if the piece is malformed.
    pub fn insert_checked(&mut self, piece: &Piece, origin: Origin, now: Timestamp) -> Result<Applied, ShapeError> {
        piece.check_shape()?;
        Ok(self.apply_incoming(piece, origin, now))
    }

    /// Ids referenced as endpoints but not held locally.
    pub fn external_refs(&self) -> BTreeSet<PieceId> {
        self.pieces
            .values()
            .flat_map(|p| p.endpoints())
            .filter(|e| !self.contains(*e))
            .collect()
    }
}
