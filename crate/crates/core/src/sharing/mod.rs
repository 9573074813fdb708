// SPDX-License-Identifier: Apache-2.0

//! Territory-to-territory sharing: bundles, offers, relays and the peer
//! runtime that answers protocol messages.
//!
//! A community server is an ordinary [`Peer`] whose owner is the community
//! agent and whose rules encode the community's bylaws.

mod frame;
mod message;
mod peer;
mod state;
mod transport;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::gatekeeper::{evaluate, BundleDecision, GateDecision, RuleSet, Verdict};
use crate::ids::{AgentId, PieceId, Timestamp};
use crate::measures::{incidence_ball, IncidenceView, MeasureConfig};
use crate::piece::Piece;
use crate::territory::{Origin, Territory};

pub use frame::{decode_frame, encode_frame, read_frame, write_frame, FrameError, MAX_FRAME_LEN};
pub use message::{bundle_from_value, bundle_value, preview_from_value, preview_value, Preview, ProtocolMessage};
pub use peer::{find_matches, request_bundle, InboxEntry, OfferReceipt, Peer, PendingOffer, RelayNote, PREVIEW_MEASURES};
pub use state::{decode_peer_state, encode_peer_state, inbox_entry_value, pending_offer_value, peer_state_value, relay_note_value};
pub use transport::{spawn_peer_server, LoopbackNetwork, TcpTransport, Transport, TransportError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SharingError {
    #[error("unknown piece {0}")]
    UnknownPiece(PieceId),
    #[error("malformed bundle: {0}")]
    MalformedBundle(String),
    #[error("peer unreachable: {0}")]
    PeerUnreachable(String),
    #[error("peer no longer holds {0}")]
    NotFound(PieceId),
    #[error("unknown offer {0:?}")]
    UnknownOffer(String),
    #[error("unexpected reply: {0}")]
    UnexpectedReply(String),
}

impl SharingError {
    pub fn code(&self) -> &'static str {
        match self {
            SharingError::UnknownPiece(_) => "UNKNOWN_PIECE",
            SharingError::MalformedBundle(_) => "MALFORMED_BUNDLE",
            SharingError::PeerUnreachable(_) => "PEER_UNREACHABLE",
            SharingError::NotFound(_) => "NOT_FOUND",
            SharingError::UnknownOffer(_) => "UNKNOWN_OFFER",
            SharingError::UnexpectedReply(_) => "UNEXPECTED_REPLY",
        }
    }
}

impl From<TransportError> for SharingError {
    fn from(e: TransportError) -> Self {
        SharingError::PeerUnreachable(e.to_string())
    }
}

/// A transferable set of pieces. Every edge endpoint is either one of the
/// pieces or listed in `external_refs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bundle {
    pub pieces: Vec<Piece>,
    pub external_refs: Vec<PieceId>,
}

impl Bundle {
    /// Wraps `pieces`, sorting them and computing the external references.
    pub fn new(mut pieces: Vec<Piece>) -> Self {
        pieces.sort_by_key(|p| p.id);
        let held: BTreeSet<PieceId> = pieces.iter().map(|p| p.id).collect();
        let external_refs: BTreeSet<PieceId> = pieces
            .iter()
            .flat_map(|p| p.endpoints())
            .filter(|e| !held.contains(e))
            .collect();
        Bundle {
            pieces,
            external_refs: external_refs.into_iter().collect(),
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = PieceId> + '_ {
        self.pieces.iter().map(|p| p.id)
    }

    pub fn check(&self) -> Result<(), SharingError> {
        let mut held = BTreeSet::new();
        for p in &self.pieces {
            if !held.insert(p.id) {
                return Err(SharingError::MalformedBundle(format!("duplicate id {}", p.id)));
            }
            p.check_shape()
                .map_err(|e| SharingError::MalformedBundle(format!("{}: {e}", p.id)))?;
        }
        let refs: BTreeSet<PieceId> = self.external_refs.iter().copied().collect();
        for p in &self.pieces {
            if let Some(e) = p.endpoints().find(|e| !held.contains(e) && !refs.contains(e)) {
                return Err(SharingError::MalformedBundle(format!(
                    "endpoint {e} of {} is neither bundled nor referenced",
                    p.id
                )));
            }
        }
        Ok(())
    }
}

/// The pieces within `glue_radius` incidence steps of `root`, plus closure
/// references. Radius 0 yields the root alone.
pub fn make_bundle(territory: &Territory, root: PieceId, glue_radius: usize) -> Result<Bundle, SharingError> {
    let root = territory.resolve(root);
    if !territory.contains(root) {
        return Err(SharingError::UnknownPiece(root));
    }
    let view = IncidenceView::from_territory(territory);
    let ids = incidence_ball(&view, root, glue_radius).map_err(|_| SharingError::UnknownPiece(root))?;
    let pieces = ids
        .into_iter()
        .filter_map(|id| territory.get(id).cloned())
        .collect();
    Ok(Bundle::new(pieces))
}

/// Result of running an offered bundle through the gatekeeper.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OfferOutcome {
    pub decision: BundleDecision,
    pub accepted: Vec<PieceId>,
    pub rejected: Vec<PieceId>,
    pub quarantined: Vec<PieceId>,
    pub replies: Vec<ProtocolMessage>,
}

/// Gatekeeps `bundle` against `territory` and copies accepted pieces in
/// with `origin`. The territory is updated in one step. Quarantined ids are
/// returned for the caller to park.
pub fn receive_bundle(
    territory: &mut Territory,
    offer_id: &str,
    bundle: &Bundle,
    rules: &RuleSet,
    cfg: &MeasureConfig,
    origin: Origin,
    now: Timestamp,
) -> OfferOutcome {
    if let Err(e) = bundle.check() {
        return OfferOutcome {
            decision: BundleDecision { decisions: Vec::new() },
            accepted: Vec::new(),
            rejected: bundle.ids().collect(),
            quarantined: Vec::new(),
            replies: vec![ProtocolMessage::Reject {
                offer_id: offer_id.to_string(),
                ids: bundle.ids().collect(),
                reason: format!("MALFORMED: {e}"),
            }],
        };
    }
    let decision = evaluate(rules, &bundle.pieces, territory, cfg, origin);
    let accepted: Vec<PieceId> = decision.with_verdict(Verdict::Accept).collect();
    let rejected: Vec<PieceId> = decision.with_verdict(Verdict::Reject).collect();
    let quarantined: Vec<PieceId> = decision.with_verdict(Verdict::Quarantine).collect();

    let mut next = territory.clone();
    for p in bundle.pieces.iter().filter(|p| accepted.contains(&p.id)) {
        next.apply_incoming(p, origin, now);
    }
    *territory = next;

    let mut replies = Vec::new();
    if !accepted.is_empty() {
        replies.push(ProtocolMessage::Accept {
            offer_id: offer_id.to_string(),
            ids: accepted.clone(),
        });
    }
    if !rejected.is_empty() {
        let mut paths: Vec<String> = decision
            .decisions
            .iter()
            .filter(|(_, d)| d.verdict == Verdict::Reject)
            .map(|(_, d)| reason_for(d, rules))
            .collect();
        paths.dedup();
        replies.push(ProtocolMessage::Reject {
            offer_id: offer_id.to_string(),
            ids: rejected.clone(),
            reason: paths.join("; "),
        });
    }
    OfferOutcome {
        decision,
        accepted,
        rejected,
        quarantined,
        replies,
    }
}

fn reason_for(d: &GateDecision, rules: &RuleSet) -> String {
    match d.fired_rule.and_then(|i| rules.rules.get(i)) {
        Some(rule) => format!("{}: {}", d.rule_path(), rule.text),
        None => d.rule_path(),
    }
}

/// Offer handling as seen by the recipient: the same as [`receive_bundle`]
/// with `origin=accepted-share`.
pub fn receive_offer(
    territory: &mut Territory,
    offer_id: &str,
    _from: &AgentId,
    bundle: &Bundle,
    rules: &RuleSet,
    cfg: &MeasureConfig,
    now: Timestamp,
) -> OfferOutcome {
    receive_bundle(territory, offer_id, bundle, rules, cfg, Origin::AcceptedShare, now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{sky, Sky};
    use crate::territory::NewPiece;
    use rand::SeedableRng;

    #[test]
    fn bundle_around_narrative() {
        let Sky { territory, ids } = sky();
        let b = make_bundle(&territory, ids.n4, 1).unwrap();
        assert_eq!(b.ids().collect::<Vec<_>>(), vec![ids.n4, ids.e2, ids.e3]);
        assert_eq!(b.external_refs, vec![ids.n1, ids.n3]);
        b.check().unwrap();
        let zero = make_bundle(&territory, ids.e2, 0).unwrap();
        assert_eq!(zero.ids().collect::<Vec<_>>(), vec![ids.e2]);
        assert_eq!(zero.external_refs, vec![ids.n1, ids.n4]);
    }

    #[test]
    fn bundle_of_isolated_piece() {
        let who = AgentId::new("a").unwrap();
        let mut t = Territory::new(who.clone());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p = t
            .create_piece(NewPiece::node(crate::PieceKind::Narrative, "x"), &who, Timestamp::from_unix(0), &mut rng)
            .unwrap();
        let b = make_bundle(&t, p.id, 2).unwrap();
        assert_eq!(b.pieces.len(), 1);
        assert!(b.external_refs.is_empty());
        assert_eq!(make_bundle(&t, PieceId::from_u128(5), 1).unwrap_err().code(), "UNKNOWN_PIECE");
    }

    #[test]
    fn broken_closure_is_malformed() {
        let Sky { territory, ids } = sky();
        let mut b = make_bundle(&territory, ids.n4, 1).unwrap();
        b.external_refs.clear();
        assert_eq!(b.check().unwrap_err().code(), "MALFORMED_BUNDLE");
    }
}
