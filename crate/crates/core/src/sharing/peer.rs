// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;

use super::{make_bundle, receive_bundle, Bundle, OfferOutcome, Preview, ProtocolMessage, SharingError, Transport};
use crate::dedup::tokens;
use crate::gatekeeper::RuleSet;
use crate::ids::{AgentId, PieceId, Timestamp};
use crate::measures::{unary, IncidenceView, Measure, MeasureConfig};
use crate::piece::Piece;
use crate::territory::{Origin, Territory};

/// Measures attached to frontier previews.
pub const PREVIEW_MEASURES: [Measure; 5] = [
    Measure::Depth,
    Measure::Utility,
    Measure::Implantation,
    Measure::Visibility,
    Measure::FlagCount,
];

/// Quarantined pieces of one offer, waiting for the owner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InboxEntry {
    pub offer_id: String,
    pub from: AgentId,
    pub received_at: Timestamp,
    pub bundle: Bundle,
    pub pending: Vec<PieceId>,
}

impl InboxEntry {
    pub fn pending_pieces(&self) -> impl Iterator<Item = &Piece> {
        self.bundle.pieces.iter().filter(|p| self.pending.contains(&p.id))
    }
}

/// An offer this peer sent and what came back so far.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PendingOffer {
    pub to: String,
    pub ids: Vec<PieceId>,
    pub accepted: Vec<PieceId>,
    pub rejected: Vec<PieceId>,
    pub reasons: Vec<String>,
}

/// Coordinates received in a relay.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct RelayNote {
    pub from: AgentId,
    pub id: PieceId,
    pub locator: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OfferReceipt {
    pub offer_id: String,
    pub replies: Vec<ProtocolMessage>,
}

/// A territory together with everything needed to take part in sharing.
#[derive(Clone, Debug)]
pub struct Peer {
    pub territory: Territory,
    pub rules: RuleSet,
    pub cfg: MeasureConfig,
    pub glue_radius: usize,
    /// Where other peers reach this one (`host:port`, or any locator the
    /// transport understands).
    pub address: String,
    pub inbox: Vec<InboxEntry>,
    pub relays: Vec<RelayNote>,
    pub sent: BTreeMap<String, PendingOffer>,
    /// Replies already given, per (sender, offer id). A repeated offer gets
    /// the same replies and changes nothing.
    pub handled: BTreeMap<(AgentId, String), Vec<ProtocolMessage>>,
}

impl Peer {
    pub fn new(territory: Territory, address: impl Into<String>) -> Self {
        Peer {
            territory,
            rules: RuleSet::default(),
            cfg: MeasureConfig::default(),
            glue_radius: 1,
            address: address.into(),
            inbox: Vec::new(),
            relays: Vec::new(),
            sent: BTreeMap::new(),
            handled: BTreeMap::new(),
        }
    }

    pub fn with_rules(mut self, rules: RuleSet) -> Self {
        self.rules = rules;
        self
    }

    pub fn owner(&self) -> &AgentId {
        self.territory.owner()
    }

    /// Answers one incoming message. Replies are returned in order.
    pub fn handle(&mut self, msg: &ProtocolMessage, now: Timestamp) -> Vec<ProtocolMessage> {
        match msg {
            ProtocolMessage::Offer { offer_id, from, bundle } => self.receive(offer_id, from, bundle, now),
            ProtocolMessage::Accept { offer_id, ids } => {
                if let Some(p) = self.sent.get_mut(offer_id) {
                    extend_unique(&mut p.accepted, ids);
                }
                Vec::new()
            }
            ProtocolMessage::Reject { offer_id, ids, reason } => {
                if let Some(p) = self.sent.get_mut(offer_id) {
                    extend_unique(&mut p.rejected, ids);
                    if !p.reasons.contains(reason) {
                        p.reasons.push(reason.clone());
                    }
                }
                Vec::new()
            }
            ProtocolMessage::Relay { from, id, locator } => {
                let note = RelayNote {
                    from: from.clone(),
                    id: *id,
                    locator: locator.clone(),
                };
                if !self.relays.contains(&note) {
                    self.relays.push(note);
                }
                Vec::new()
            }
            ProtocolMessage::Request { id, radius } => {
                match make_bundle(&self.territory, *id, radius.unwrap_or(self.glue_radius)) {
                    Ok(bundle) => vec![ProtocolMessage::Deliver { request_ref: *id, bundle }],
                    Err(_) => vec![ProtocolMessage::NotFound { id: *id }],
                }
            }
            ProtocolMessage::Adjacent { ids } => vec![ProtocolMessage::AdjacentReply {
                previews: self.adjacent(ids),
            }],
            ProtocolMessage::Find { tokens } => vec![ProtocolMessage::FindReply { ids: self.find(tokens) }],
            ProtocolMessage::Deliver { .. }
            | ProtocolMessage::NotFound { .. }
            | ProtocolMessage::AdjacentReply { .. }
            | ProtocolMessage::FindReply { .. } => Vec::new(),
        }
    }

    fn receive(&mut self, offer_id: &str, from: &AgentId, bundle: &Bundle, now: Timestamp) -> Vec<ProtocolMessage> {
        let key = (from.clone(), offer_id.to_string());
        if let Some(replies) = self.handled.get(&key) {
            return replies.clone();
        }
        let outcome = receive_bundle(
            &mut self.territory,
            offer_id,
            bundle,
            &self.rules,
            &self.cfg,
            Origin::AcceptedShare,
            now,
        );
        self.park(offer_id, from, bundle, &outcome, now);
        self.handled.insert(key, outcome.replies.clone());
        outcome.replies
    }

    fn park(&mut self, offer_id: &str, from: &AgentId, bundle: &Bundle, outcome: &OfferOutcome, now: Timestamp) {
        if outcome.quarantined.is_empty() || self.inbox.iter().any(|e| e.offer_id == offer_id && &e.from == from) {
            return;
        }
        self.inbox.push(InboxEntry {
            offer_id: offer_id.to_string(),
            from: from.clone(),
            received_at: now,
            bundle: bundle.clone(),
            pending: outcome.quarantined.clone(),
        });
    }

    /// Previews of pieces one incidence step from `ids`, skipping `ids`
    /// themselves. Unknown ids contribute nothing.
    pub fn adjacent(&self, ids: &[PieceId]) -> Vec<Preview> {
        let view = IncidenceView::from_territory(&self.territory);
        let asked: BTreeSet<PieceId> = ids.iter().map(|&id| self.territory.resolve(id)).collect();
        let mut out = Vec::new();
        for &via in ids {
            let canonical = self.territory.resolve(via);
            for remote in view.incidence_neighbors(canonical) {
                if asked.contains(&remote) {
                    continue;
                }
                let piece = view.piece(remote).expect("neighbour is in the view");
                let measures = PREVIEW_MEASURES
                    .iter()
                    .filter_map(|&m| unary(&view, m, remote, &self.cfg).ok().map(|v| (m.name().to_string(), v)))
                    .collect();
                out.push(Preview {
                    remote,
                    via,
                    kind: piece.kind,
                    labeled: piece.is_labeled(),
                    source: piece.source.map(|s| self.territory.resolve(s)),
                    target: piece.target.map(|t| self.territory.resolve(t)),
                    measures,
                });
            }
        }
        out.sort_by_key(|p| (p.via, p.remote));
        out.dedup_by_key(|p| (p.via, p.remote));
        out
    }

    pub fn find(&self, query: &[String]) -> Vec<PieceId> {
        find_matches(&self.territory, query)
    }

    /// A fresh offer id: 16 hex digits from `rng`.
    pub fn fresh_offer_id<R: RngCore + ?Sized>(rng: &mut R) -> String {
        format!("{:016x}", rng.next_u64())
    }

    /// Sends `bundle` to `to` and records the offer as pending.
    pub fn offer(
        &mut self,
        transport: &dyn Transport,
        to: &str,
        offer_id: &str,
        bundle: Bundle,
    ) -> Result<OfferReceipt, SharingError> {
        bundle.check()?;
        let msg = ProtocolMessage::Offer {
            offer_id: offer_id.to_string(),
            from: self.owner().clone(),
            bundle,
        };
        let ids = match &msg {
            ProtocolMessage::Offer { bundle, .. } => bundle.ids().collect(),
            _ => unreachable!(),
        };
        let replies = transport.exchange(to, &msg)?;
        self.sent.entry(offer_id.to_string()).or_insert_with(|| PendingOffer {
            to: to.to_string(),
            ids,
            ..PendingOffer::default()
        });
        for r in &replies {
            self.handle(r, Timestamp::from_unix(0));
        }
        Ok(OfferReceipt {
            offer_id: offer_id.to_string(),
            replies,
        })
    }

    /// Tells `to` where `id` can be fetched. Nothing but coordinates is sent.
    pub fn relay(&self, transport: &dyn Transport, id: PieceId, to: &str) -> Result<ProtocolMessage, SharingError> {
        let id = self.territory.resolve(id);
        if !self.territory.contains(id) {
            return Err(SharingError::UnknownPiece(id));
        }
        let msg = ProtocolMessage::Relay {
            from: self.owner().clone(),
            id,
            locator: self.address.clone(),
        };
        transport.exchange(to, &msg)?;
        Ok(msg)
    }

    /// Requests the bundle around `id` from `locator` and gatekeeps it like
    /// an offer. Quarantined pieces land in the inbox under `request:<id>`.
    pub fn fetch(
        &mut self,
        transport: &dyn Transport,
        locator: &str,
        id: PieceId,
        now: Timestamp,
    ) -> Result<OfferOutcome, SharingError> {
        let bundle = request_bundle(transport, locator, id, None)?;
        let offer_id = format!("request:{id}");
        let from = self
            .relays
            .iter()
            .find(|n| n.id == id && n.locator == locator)
            .map(|n| n.from.clone())
            .unwrap_or_else(|| self.owner().clone());
        let outcome = receive_bundle(
            &mut self.territory,
            &offer_id,
            &bundle,
            &self.rules,
            &self.cfg,
            Origin::AcceptedShare,
            now,
        );
        self.park(&offer_id, &from, &bundle, &outcome, now);
        Ok(outcome)
    }

    /// Owner decision on a parked offer. Accepting copies the pending pieces
    /// in; either way the entry leaves the inbox and the reply for the
    /// sender is returned.
    pub fn settle(&mut self, offer_id: &str, accept: bool, now: Timestamp) -> Result<ProtocolMessage, SharingError> {
        let pos = self
            .inbox
            .iter()
            .position(|e| e.offer_id == offer_id)
            .ok_or_else(|| SharingError::UnknownOffer(offer_id.to_string()))?;
        let entry = self.inbox.remove(pos);
        if accept {
            let mut next = self.territory.clone();
            for p in entry.pending_pieces() {
                next.apply_incoming(p, Origin::AcceptedShare, now);
            }
            self.territory = next;
            Ok(ProtocolMessage::Accept {
                offer_id: entry.offer_id,
                ids: entry.pending,
            })
        } else {
            Ok(ProtocolMessage::Reject {
                offer_id: entry.offer_id,
                ids: entry.pending,
                reason: "owner".to_string(),
            })
        }
    }
}

/// Ids of pieces whose normalized content contains every query token.
/// An empty query matches nothing.
pub fn find_matches(territory: &Territory, query: &[String]) -> Vec<PieceId> {
    let wanted: BTreeSet<String> = query.iter().flat_map(|q| tokens(q)).collect();
    if wanted.is_empty() {
        return Vec::new();
    }
    territory
        .pieces()
        .filter(|p| wanted.is_subset(&tokens(&p.content)))
        .map(|p| p.id)
        .collect()
}

fn extend_unique(into: &mut Vec<PieceId>, ids: &[PieceId]) {
    for id in ids {
        if !into.contains(id) {
            into.push(*id);
        }
    }
}

/// Request/Deliver round trip.
pub fn request_bundle(
    transport: &dyn Transport,
    locator: &str,
    id: PieceId,
    radius: Option<usize>,
) -> Result<Bundle, SharingError> {
    let replies = transport.exchange(locator, &ProtocolMessage::Request { id, radius })?;
    match replies.into_iter().next() {
        Some(ProtocolMessage::Deliver { bundle, .. }) => Ok(bundle),
        Some(ProtocolMessage::NotFound { id }) => Err(SharingError::NotFound(id)),
        Some(other) => Err(SharingError::UnexpectedReply(other.msg_type().to_string())),
        None => Err(SharingError::UnexpectedReply("no reply".to_string())),
    }
}
