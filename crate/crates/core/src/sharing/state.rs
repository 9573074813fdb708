// SPDX-License-Identifier: Apache-2.0

//! Persisted peer bookkeeping: inbox, relay notes, sent offers and the
//! replies already given to each offer.

use serde_json::{Map, Value};

use super::{bundle_from_value, bundle_value, InboxEntry, Peer, PendingOffer, ProtocolMessage, RelayNote};
use crate::codec::{ids_value, parse_json, to_canonical_bytes, DecodeError, Fields, MMM_VERSION};

pub fn inbox_entry_value(e: &InboxEntry) -> Value {
    let mut m = Map::new();
    m.insert("bundle".into(), bundle_value(&e.bundle));
    m.insert("from".into(), Value::String(e.from.to_string()));
    m.insert("offer_id".into(), Value::String(e.offer_id.clone()));
    m.insert("pending".into(), ids_value(e.pending.iter().copied()));
    m.insert("received_at".into(), Value::String(e.received_at.to_string()));
    Value::Object(m)
}

fn inbox_entry_from_value(v: &Value) -> Result<InboxEntry, DecodeError> {
    let f = Fields::of(v, "inbox entry")?;
    f.closed(&["bundle", "from", "offer_id", "pending", "received_at"])?;
    Ok(InboxEntry {
        offer_id: f.str("offer_id")?.to_string(),
        from: f.agent("from")?,
        received_at: f.timestamp("received_at")?,
        bundle: bundle_from_value(f.req("bundle")?)?,
        pending: f.ids("pending")?,
    })
}

pub fn relay_note_value(n: &RelayNote) -> Value {
    let mut m = Map::new();
    m.insert("from".into(), Value::String(n.from.to_string()));
    m.insert("id".into(), Value::String(n.id.to_string()));
    m.insert("locator".into(), Value::String(n.locator.clone()));
    Value::Object(m)
}

fn relay_note_from_value(v: &Value) -> Result<RelayNote, DecodeError> {
    let f = Fields::of(v, "relay note")?;
    f.closed(&["from", "id", "locator"])?;
    Ok(RelayNote {
        from: f.agent("from")?,
        id: f.id("id")?,
        locator: f.str("locator")?.to_string(),
    })
}

pub fn pending_offer_value(p: &PendingOffer) -> Value {
    let mut m = Map::new();
    m.insert("accepted".into(), ids_value(p.accepted.iter().copied()));
    m.insert("ids".into(), ids_value(p.ids.iter().copied()));
    m.insert(
        "reasons".into(),
        Value::Array(p.reasons.iter().cloned().map(Value::String).collect()),
    );
    m.insert("rejected".into(), ids_value(p.rejected.iter().copied()));
    m.insert("to".into(), Value::String(p.to.clone()));
    Value::Object(m)
}

fn pending_offer_from_value(v: &Value) -> Result<PendingOffer, DecodeError> {
    let f = Fields::of(v, "sent offer")?;
    f.closed(&["accepted", "ids", "reasons", "rejected", "to"])?;
    let reasons = f
        .array("reasons")?
        .iter()
        .map(|r| {
            r.as_str()
                .map(str::to_string)
                .ok_or_else(|| DecodeError::SchemaViolation("reasons are strings".into()))
        })
        .collect::<Result<_, _>>()?;
    Ok(PendingOffer {
        to: f.str("to")?.to_string(),
        ids: f.ids("ids")?,
        accepted: f.ids("accepted")?,
        rejected: f.ids("rejected")?,
        reasons,
    })
}

/// Everything in a [`Peer`] besides its territory, rules and configuration.
pub fn peer_state_value(peer: &Peer) -> Value {
    let mut m = Map::new();
    let handled = peer
        .handled
        .iter()
        .map(|((from, offer_id), replies)| {
            let mut e = Map::new();
            e.insert("from".into(), Value::String(from.to_string()));
            e.insert("offer_id".into(), Value::String(offer_id.clone()));
            e.insert("replies".into(), Value::Array(replies.iter().map(ProtocolMessage::to_value).collect()));
            Value::Object(e)
        })
        .collect();
    m.insert("handled".into(), Value::Array(handled));
    m.insert("inbox".into(), Value::Array(peer.inbox.iter().map(inbox_entry_value).collect()));
    m.insert("mmm_version".into(), Value::String(MMM_VERSION.into()));
    m.insert("relays".into(), Value::Array(peer.relays.iter().map(relay_note_value).collect()));
    let sent: Map<String, Value> = peer
        .sent
        .iter()
        .map(|(id, p)| (id.clone(), pending_offer_value(p)))
        .collect();
    m.insert("sent".into(), Value::Object(sent));
    Value::Object(m)
}

pub fn encode_peer_state(peer: &Peer) -> Vec<u8> {
    to_canonical_bytes(&peer_state_value(peer))
}

/// Restores the bookkeeping written by [`encode_peer_state`] into `peer`.
pub fn decode_peer_state(bytes: &[u8], peer: &mut Peer) -> Result<(), DecodeError> {
    let v = parse_json(bytes)?;
    let f = Fields::of(&v, "peer state")?;
    f.closed(&["handled", "inbox", "mmm_version", "relays", "sent"])?;
    let version = f.str("mmm_version")?;
    if version != MMM_VERSION {
        return Err(DecodeError::UnknownVersion(version.to_string()));
    }
    let inbox = f.array("inbox")?.iter().map(inbox_entry_from_value).collect::<Result<_, _>>()?;
    let relays = f.array("relays")?.iter().map(relay_note_from_value).collect::<Result<_, _>>()?;
    let mut sent = std::collections::BTreeMap::new();
    match f.req("sent")? {
        Value::Object(entries) => {
            for (id, p) in entries {
                sent.insert(id.clone(), pending_offer_from_value(p)?);
            }
        }
        _ => return Err(DecodeError::SchemaViolation("sent is an object".into())),
    }
    let mut handled = std::collections::BTreeMap::new();
    for h in f.array("handled")? {
        let hf = Fields::of(h, "handled offer")?;
        hf.closed(&["from", "offer_id", "replies"])?;
        let replies = hf
            .array("replies")?
            .iter()
            .map(ProtocolMessage::from_value)
            .collect::<Result<_, _>>()?;
        handled.insert((hf.agent("from")?, hf.str("offer_id")?.to_string()), replies);
    }
    peer.inbox = inbox;
    peer.relays = relays;
    peer.sent = sent;
    peer.handled = handled;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{sky, SKY_EPOCH, SKY_IDS};
    use crate::ids::AgentId;
    use crate::sharing::make_bundle;
    use crate::territory::Territory;

    #[test]
    fn state_round_trips() {
        let mut bob = Peer::new(Territory::new(AgentId::new("bob").unwrap()), "bob:1");
        let bundle = make_bundle(&sky().territory, SKY_IDS.n4, 1).unwrap();
        let offer = ProtocolMessage::Offer {
            offer_id: "o".into(),
            from: AgentId::new("alice").unwrap(),
            bundle,
        };
        bob.handle(&offer, SKY_EPOCH);
        bob.handle(
            &ProtocolMessage::Relay {
                from: AgentId::new("carol").unwrap(),
                id: SKY_IDS.n1,
                locator: "carol:1".into(),
            },
            SKY_EPOCH,
        );
        bob.sent.insert("mine".into(), PendingOffer { to: "x:1".into(), ids: vec![SKY_IDS.n2], ..Default::default() });
        let bytes = encode_peer_state(&bob);
        let mut fresh = Peer::new(Territory::new(AgentId::new("bob").unwrap()), "bob:1");
        decode_peer_state(&bytes, &mut fresh).unwrap();
        assert_eq!(fresh.inbox, bob.inbox);
        assert_eq!(fresh.relays, bob.relays);
        assert_eq!(fresh.sent, bob.sent);
        assert_eq!(fresh.handled, bob.handled);
        assert_eq!(encode_peer_state(&fresh), bytes);
    }
}
