// SPDX-License-Identifier: Apache-2.0

//! Hop-by-hop exploration outward from a territory, and search that only
//! serves what can be reached from it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::gatekeeper::{decide, evaluate, Candidate, GateDecision, RuleSet, Verdict};
use crate::ids::{PieceId, Timestamp};
use crate::measures::{IncidenceView, Measure, MeasureConfig};
use crate::piece::Piece;
use crate::sharing::{find_matches, request_bundle, Preview, ProtocolMessage, SharingError, Transport};
use crate::territory::{Origin, Territory};

/// A piece one incidence step from something held locally.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontierEntry {
    pub remote: PieceId,
    pub via: PieceId,
    pub locator: String,
    pub preview: Preview,
}

/// A peer that could not be queried, and why.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeerFailure {
    pub locator: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Frontier {
    /// Ordered by via id, then remote id.
    pub entries: Vec<FrontierEntry>,
    pub errors: Vec<PeerFailure>,
}

/// Asks each peer which pieces sit next to `ids`. Pieces already held are
/// dropped; when several peers report the same (via, remote) pair the first
/// peer in `peers` order is kept.
fn adjacent_round(
    territory: &Territory,
    ids: &[PieceId],
    peers: &[String],
    transport: &dyn Transport,
    errors: &mut Vec<PeerFailure>,
) -> Vec<FrontierEntry> {
    let mut seen = BTreeSet::new();
    let mut entries = Vec::new();
    if ids.is_empty() {
        return entries;
    }
    for locator in peers {
        let replies = match transport.exchange(locator, &ProtocolMessage::Adjacent { ids: ids.to_vec() }) {
            Ok(r) => r,
            Err(e) => {
                errors.push(PeerFailure {
                    locator: locator.clone(),
                    message: e.to_string(),
                });
                continue;
            }
        };
        for reply in replies {
            let ProtocolMessage::AdjacentReply { previews } = reply else {
                continue;
            };
            for preview in previews {
                if territory.contains(territory.resolve(preview.remote)) || !seen.insert((preview.via, preview.remote)) {
                    continue;
                }
                entries.push(FrontierEntry {
                    remote: preview.remote,
                    via: preview.via,
                    locator: locator.clone(),
                    preview,
                });
            }
        }
    }
    entries.sort_by_key(|e| (e.via, e.remote));
    entries
}

pub fn frontier(territory: &Territory, peers: &[String], transport: &dyn Transport) -> Frontier {
    let ids: Vec<PieceId> = territory.ids().collect();
    let mut errors = Vec::new();
    let entries = adjacent_round(territory, &ids, peers, transport, &mut errors);
    Frontier { entries, errors }
}

/// Fetches the entry's piece alone and runs it through `rules`. Anything
/// short of reject is taken in with `origin=wayfarer-step`: stepping is the
/// owner's own act, so there is no one else to review a quarantine.
pub fn step(
    territory: &mut Territory,
    entry: &FrontierEntry,
    rules: &RuleSet,
    cfg: &MeasureConfig,
    transport: &dyn Transport,
    now: Timestamp,
) -> Result<GateDecision, SharingError> {
    let bundle = request_bundle(transport, &entry.locator, entry.remote, Some(0))?;
    bundle.check()?;
    let decision = evaluate(rules, &bundle.pieces, territory, cfg, Origin::WayfarerStep);
    let verdict = decision
        .get(entry.remote)
        .cloned()
        .unwrap_or_else(|| decision.overall());
    if verdict.verdict != Verdict::Reject {
        let mut next = territory.clone();
        for p in &bundle.pieces {
            next.apply_incoming(p, Origin::WayfarerStep, now);
        }
        *territory = next;
    }
    Ok(verdict)
}

#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum SearchResult {
    /// `path` runs from a held piece to the match; `locator` is `None` when
    /// the match is already held.
    Served {
        id: PieceId,
        locator: Option<String>,
        path: Vec<PieceId>,
        piece: Option<Piece>,
    },
    /// Reachable only by stepping: the frontier entries that start a
    /// shortest path toward a match. Empty when nothing connects.
    PathRequired { entries: Vec<FrontierEntry> },
    NoMatch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub result: SearchResult,
    pub errors: Vec<PeerFailure>,
}

/// Is a previewed piece one the local rules would let through?
pub fn admissible(preview: &Preview, local: &IncidenceView, rules: &RuleSet, cfg: &MeasureConfig) -> bool {
    let measures = preview
        .measures
        .iter()
        .filter_map(|(name, v)| name.parse::<Measure>().ok().map(|m| (m, *v)));
    let mut candidate = Candidate::from_measures(local, preview.remote, preview.kind, Origin::WayfarerStep, cfg, measures);
    decide(rules, &mut candidate).verdict != Verdict::Reject
}

pub fn hybrid_search(
    territory: &Territory,
    peers: &[String],
    query: &[String],
    rules: &RuleSet,
    cfg: &MeasureConfig,
    transport: &dyn Transport,
) -> SearchOutcome {
    let mut errors = Vec::new();
    let local_hit = find_matches(territory, query).into_iter().next();
    if let Some(id) = local_hit {
        return SearchOutcome {
            result: SearchResult::Served {
                id,
                locator: None,
                path: vec![id],
                piece: territory.get(id).cloned(),
            },
            errors,
        };
    }

    let mut matches: BTreeMap<PieceId, String> = BTreeMap::new();
    for locator in peers {
        match transport.exchange(locator, &ProtocolMessage::Find { tokens: query.to_vec() }) {
            Ok(replies) => {
                for r in replies {
                    if let ProtocolMessage::FindReply { ids } = r {
                        for id in ids {
                            matches.entry(id).or_insert_with(|| locator.clone());
                        }
                    }
                }
            }
            Err(e) => errors.push(PeerFailure {
                locator: locator.clone(),
                message: e.to_string(),
            }),
        }
    }
    if matches.is_empty() {
        return SearchOutcome {
            result: SearchResult::NoMatch,
            errors,
        };
    }

    let explored = explore(territory, peers, cfg.horizon, transport, &mut errors);
    let local_view = IncidenceView::from_territory(territory);
    let admissible: BTreeSet<PieceId> = explored
        .previews
        .iter()
        .filter(|(_, e)| admissible(&e.preview, &local_view, rules, cfg))
        .map(|(id, _)| *id)
        .collect();
    let starts: Vec<PieceId> = territory.ids().collect();
    let is_match = |id: &PieceId| matches.contains_key(id);

    let (dist, parent) = bfs(&starts, &explored.adj, |v| starts.contains(&v) || admissible.contains(&v));
    let served = matches
        .keys()
        .filter_map(|m| dist.get(m).map(|d| (*d, *m)))
        .min();
    if let Some((_, id)) = served {
        let mut path = vec![id];
        while let Some(&p) = parent.get(path.last().expect("non-empty")) {
            path.push(p);
        }
        path.reverse();
        let locator = matches[&id].clone();
        let piece = request_bundle(transport, &locator, id, Some(0))
            .ok()
            .and_then(|b| b.pieces.into_iter().find(|p| p.id == id));
        return SearchOutcome {
            result: SearchResult::Served {
                id,
                locator: Some(locator),
                path,
                piece,
            },
            errors,
        };
    }

    let (dist, _) = bfs(&starts, &explored.adj, |_| true);
    let nearest = matches.keys().filter_map(|m| dist.get(m)).min().copied();
    let entries = match nearest {
        None => Vec::new(),
        Some(d) => {
            let targets: Vec<PieceId> = matches.keys().filter(|m| dist.get(m) == Some(&d)).copied().collect();
            let (to_match, _) = bfs(&targets, &explored.adj, |v| !is_match(&v) || targets.contains(&v));
            let mut out: Vec<FrontierEntry> = explored
                .first_hops
                .iter()
                .filter(|e| to_match.get(&e.remote).is_some_and(|&r| r + 1 == d))
                .cloned()
                .collect();
            out.sort_by_key(|e| (e.via, e.remote));
            out
        }
    };
    SearchOutcome {
        result: SearchResult::PathRequired { entries },
        errors,
    }
}

struct Explored {
    adj: BTreeMap<PieceId, BTreeSet<PieceId>>,
    previews: BTreeMap<PieceId, FrontierEntry>,
    first_hops: Vec<FrontierEntry>,
}

/// Breadth-first walk of what peers report, up to `rounds` hops out.
fn explore(
    territory: &Territory,
    peers: &[String],
    rounds: usize,
    transport: &dyn Transport,
    errors: &mut Vec<PeerFailure>,
) -> Explored {
    let mut adj: BTreeMap<PieceId, BTreeSet<PieceId>> = BTreeMap::new();
    let mut previews: BTreeMap<PieceId, FrontierEntry> = BTreeMap::new();
    let mut first_hops = Vec::new();
    let mut layer: Vec<PieceId> = territory.ids().collect();
    for round in 0..rounds {
        let mut round_errors = Vec::new();
        let entries = adjacent_round(territory, &layer, peers, transport, &mut round_errors);
        if round == 0 {
            errors.extend(round_errors);
            first_hops = entries.clone();
        }
        let mut next = Vec::new();
        for e in entries {
            adj.entry(e.via).or_default().insert(e.remote);
            adj.entry(e.remote).or_default().insert(e.via);
            if let std::collections::btree_map::Entry::Vacant(slot) = previews.entry(e.remote) {
                next.push(e.remote);
                slot.insert(e);
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort();
        layer = next;
    }
    Explored {
        adj,
        previews,
        first_hops,
    }
}

/// Multi-source BFS; a vertex's neighbours are only explored when
/// `expand(vertex)` holds. Returns distances and one parent per vertex.
fn bfs(
    starts: &[PieceId],
    adj: &BTreeMap<PieceId, BTreeSet<PieceId>>,
    expand: impl Fn(PieceId) -> bool,
) -> (BTreeMap<PieceId, usize>, BTreeMap<PieceId, PieceId>) {
    let mut dist = BTreeMap::new();
    let mut parent = BTreeMap::new();
    let mut queue = VecDeque::new();
    for &s in starts {
        if dist.insert(s, 0).is_none() {
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        if !expand(v) {
            continue;
        }
        let d = dist[&v];
        for &u in adj.get(&v).into_iter().flatten() {
            if let std::collections::btree_map::Entry::Vacant(slot) = dist.entry(u) {
                slot.insert(d + 1);
                parent.insert(u, v);
                queue.push_back(u);
            }
        }
    }
    (dist, parent)
}
