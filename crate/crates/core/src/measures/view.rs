// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use crate::ids::PieceId;
use crate::piece::Piece;
use crate::territory::Territory;

/// Read-only graph over a set of pieces. Every piece is a vertex. An
/// edge-piece `e` from `a` to `b` contributes incidence links `e–a`, `e–b`
/// and a directed hop `a→b`. Endpoints outside the set are left out.
#[derive(Clone, Debug)]
pub struct IncidenceView {
    pub(crate) pieces: Vec<Piece>,
    pub(crate) index: HashMap<PieceId, usize>,
    pub(crate) flags: Vec<usize>,
    /// Resolved (source, target) vertex of each edge-piece vertex.
    pub(crate) endpoints: Vec<(Option<usize>, Option<usize>)>,
    /// Undirected incidence links, sorted and deduplicated.
    pub(crate) incidence: Vec<Vec<usize>>,
    pub(crate) hops_out: Vec<Vec<usize>>,
    pub(crate) hops_in: Vec<Vec<usize>>,
    /// Incidence links plus hops in both directions; closeness and walks
    /// move along these.
    pub(crate) near: Vec<Vec<usize>>,
    /// Edge-piece vertices incident to each vertex (as source or target).
    pub(crate) incident_edges: Vec<Vec<usize>>,
    /// Edge-piece vertices whose target is each vertex.
    pub(crate) incoming_edges: Vec<Vec<usize>>,
}

impl IncidenceView {
    /// Builds a view over `pieces`, resolving endpoint ids with `resolve`.
    /// Flag counts come from `flag_count`.
    pub fn build(
        pieces: impl IntoIterator<Item = Piece>,
        resolve: impl Fn(PieceId) -> PieceId,
        flag_count: impl Fn(PieceId) -> usize,
    ) -> Self {
        let mut pieces: Vec<Piece> = pieces.into_iter().collect();
        pieces.sort_by_key(|p| p.id);
        pieces.dedup_by_key(|p| p.id);
        let index: HashMap<PieceId, usize> = pieces.iter().enumerate().map(|(i, p)| (p.id, i)).collect();
        let n = pieces.len();
        let mut view = IncidenceView {
            flags: pieces.iter().map(|p| flag_count(p.id)).collect(),
            endpoints: vec![(None, None); n],
            incidence: vec![Vec::new(); n],
            hops_out: vec![Vec::new(); n],
            hops_in: vec![Vec::new(); n],
            near: vec![Vec::new(); n],
            incident_edges: vec![Vec::new(); n],
            incoming_edges: vec![Vec::new(); n],
            index,
            pieces,
        };
        for e in 0..n {
            if !view.pieces[e].is_edge() {
                continue;
            }
            let lookup = |id: Option<PieceId>| id.and_then(|id| view.index.get(&resolve(id)).copied());
            let source = lookup(view.pieces[e].source);
            let target = lookup(view.pieces[e].target);
            view.endpoints[e] = (source, target);
            for v in [source, target].into_iter().flatten() {
                if v != e {
                    view.incidence[e].push(v);
                    view.incidence[v].push(e);
                    view.incident_edges[v].push(e);
                }
            }
            if let Some(t) = target {
                view.incoming_edges[t].push(e);
            }
            if let (Some(a), Some(b)) = (source, target) {
                if a != b {
                    view.hops_out[a].push(b);
                    view.hops_in[b].push(a);
                }
            }
        }
        for v in 0..n {
            for list in [
                &mut view.incidence[v],
                &mut view.hops_out[v],
                &mut view.hops_in[v],
                &mut view.incident_edges[v],
                &mut view.incoming_edges[v],
            ] {
                list.sort_unstable();
                list.dedup();
            }
            let mut near: Vec<usize> = view.incidence[v]
                .iter()
                .chain(&view.hops_out[v])
                .chain(&view.hops_in[v])
                .copied()
                .filter(|&u| u != v)
                .collect();
            near.sort_unstable();
            near.dedup();
            view.near[v] = near;
        }
        view
    }

    pub fn from_territory(territory: &Territory) -> Self {
        Self::build(
            territory.pieces().cloned(),
            |id| territory.resolve(id),
            |id| territory.flag_count(id),
        )
    }

    /// The territory with `extra` pieces grafted on. Pieces already held
    /// locally keep their local copy.
    pub fn graft<'a>(territory: &Territory, extra: impl IntoIterator<Item = &'a Piece>) -> Self {
        let mut pieces: Vec<Piece> = territory.pieces().cloned().collect();
        pieces.extend(extra.into_iter().filter(|p| !territory.contains(p.id)).cloned());
        Self::build(pieces, |id| territory.resolve(id), |id| territory.flag_count(id))
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn contains(&self, id: PieceId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = PieceId> + '_ {
        self.pieces.iter().map(|p| p.id)
    }

    pub fn piece(&self, id: PieceId) -> Option<&Piece> {
        self.index.get(&id).map(|&i| &self.pieces[i])
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn flag_count(&self, id: PieceId) -> usize {
        self.index.get(&id).map_or(0, |&i| self.flags[i])
    }

    pub(crate) fn vertex(&self, id: PieceId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub(crate) fn id_of(&self, v: usize) -> PieceId {
        self.pieces[v].id
    }

    /// Ids one incidence step from `id` (an edge's endpoints, or the edges
    /// attached to a piece).
    pub fn incidence_neighbors(&self, id: PieceId) -> Vec<PieceId> {
        self.vertex(id)
            .map(|v| self.incidence[v].iter().map(|&u| self.id_of(u)).collect())
            .unwrap_or_default()
    }
}
