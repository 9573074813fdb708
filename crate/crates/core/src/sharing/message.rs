// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use super::Bundle;
use crate::codec::{self, ids_value, parse_json, piece_to_value, DecodeError, Fields, MMM_VERSION};
use crate::ids::{AgentId, PieceId};
use crate::piece::{EdgeKind, PieceKind};

/// What a peer reveals about a piece next to one the asker holds: kind,
/// structure and measures, never content text.
#[derive(Clone, Debug, PartialEq)]
pub struct Preview {
    pub remote: PieceId,
    /// The asker's piece this one is attached to.
    pub via: PieceId,
    pub kind: PieceKind,
    pub labeled: bool,
    pub source: Option<PieceId>,
    pub target: Option<PieceId>,
    pub measures: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProtocolMessage {
    Offer { offer_id: String, from: AgentId, bundle: Bundle },
    Accept { offer_id: String, ids: Vec<PieceId> },
    Reject { offer_id: String, ids: Vec<PieceId>, reason: String },
    /// Coordinates only: who holds `id` and where to ask for it.
    Relay { from: AgentId, id: PieceId, locator: String },
    /// Ask for the bundle around `id`; `radius` defaults to the holder's
    /// configured glue radius.
    Request { id: PieceId, radius: Option<usize> },
    Deliver { request_ref: PieceId, bundle: Bundle },
    NotFound { id: PieceId },
    /// Which pieces are one incidence step from these ids?
    Adjacent { ids: Vec<PieceId> },
    AdjacentReply { previews: Vec<Preview> },
    /// Which pieces contain all these normalized tokens?
    Find { tokens: Vec<String> },
    FindReply { ids: Vec<PieceId> },
}

impl Eq for ProtocolMessage {}

impl ProtocolMessage {
    pub fn msg_type(&self) -> &'static str {
        match self {
            ProtocolMessage::Offer { .. } => "offer",
            ProtocolMessage::Accept { .. } => "accept",
            ProtocolMessage::Reject { .. } => "reject",
            ProtocolMessage::Relay { .. } => "relay",
            ProtocolMessage::Request { .. } => "request",
            ProtocolMessage::Deliver { .. } => "deliver",
            ProtocolMessage::NotFound { .. } => "not_found",
            ProtocolMessage::Adjacent { .. } => "adjacent",
            ProtocolMessage::AdjacentReply { .. } => "adjacent_reply",
            ProtocolMessage::Find { .. } => "find",
            ProtocolMessage::FindReply { .. } => "find_reply",
        }
    }

    pub fn to_value(&self) -> Value {
        let mut m = Map::new();
        m.insert("mmm_version".into(), Value::String(MMM_VERSION.into()));
        m.insert("msg_type".into(), Value::String(self.msg_type().into()));
        let s = |v: &str| Value::String(v.to_string());
        match self {
            ProtocolMessage::Offer { offer_id, from, bundle } => {
                m.insert("offer_id".into(), s(offer_id));
                m.insert("from".into(), s(from.as_str()));
                m.insert("bundle".into(), bundle_value(bundle));
            }
            ProtocolMessage::Accept { offer_id, ids } => {
                m.insert("offer_id".into(), s(offer_id));
                m.insert("ids".into(), ids_value(ids.iter().copied()));
            }
            ProtocolMessage::Reject { offer_id, ids, reason } => {
                m.insert("offer_id".into(), s(offer_id));
                m.insert("ids".into(), ids_value(ids.iter().copied()));
                m.insert("reason".into(), s(reason));
            }
            ProtocolMessage::Relay { from, id, locator } => {
                m.insert("from".into(), s(from.as_str()));
                m.insert("id".into(), s(&id.to_string()));
                m.insert("locator".into(), s(locator));
            }
            ProtocolMessage::Request { id, radius } => {
                m.insert("id".into(), s(&id.to_string()));
                if let Some(r) = radius {
                    m.insert("radius".into(), Value::from(*r as u64));
                }
            }
            ProtocolMessage::Deliver { request_ref, bundle } => {
                m.insert("request_ref".into(), s(&request_ref.to_string()));
                m.insert("bundle".into(), bundle_value(bundle));
            }
            ProtocolMessage::NotFound { id } => {
                m.insert("id".into(), s(&id.to_string()));
            }
            ProtocolMessage::Adjacent { ids } => {
                m.insert("ids".into(), ids_value(ids.iter().copied()));
            }
            ProtocolMessage::AdjacentReply { previews } => {
                m.insert("previews".into(), Value::Array(previews.iter().map(preview_value).collect()));
            }
            ProtocolMessage::Find { tokens } => {
                m.insert("tokens".into(), Value::Array(tokens.iter().map(|t| s(t)).collect()));
            }
            ProtocolMessage::FindReply { ids } => {
                m.insert("ids".into(), ids_value(ids.iter().copied()));
            }
        }
        Value::Object(m)
    }

    /// Canonical MMM-JSON bytes of the message.
    pub fn encode(&self) -> Vec<u8> {
        codec::to_canonical_bytes(&self.to_value())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        Self::from_value(&parse_json(bytes)?)
    }

    pub fn from_value(v: &Value) -> Result<Self, DecodeError> {
        let f = Fields::of(v, "message")?;
        match f.str("mmm_version")? {
            MMM_VERSION => {}
            other => return Err(DecodeError::UnknownVersion(other.to_string())),
        }
        let msg_type = f.str("msg_type")?;
        let fields: &[&str] = match msg_type {
            "offer" => &["offer_id", "from", "bundle"],
            "accept" => &["offer_id", "ids"],
            "reject" => &["offer_id", "ids", "reason"],
            "relay" => &["from", "id", "locator"],
            "request" => &["id", "radius"],
            "deliver" => &["request_ref", "bundle"],
            "not_found" => &["id"],
            "adjacent" => &["ids"],
            "adjacent_reply" => &["previews"],
            "find" => &["tokens"],
            "find_reply" => &["ids"],
            other => return Err(DecodeError::UnknownKind(other.to_string())),
        };
        let mut allowed = vec!["mmm_version", "msg_type"];
        allowed.extend_from_slice(fields);
        f.closed(&allowed)?;
        Ok(match msg_type {
            "offer" => ProtocolMessage::Offer {
                offer_id: f.str("offer_id")?.to_string(),
                from: f.agent("from")?,
                bundle: bundle_from_value(f.req("bundle")?)?,
            },
            "accept" => ProtocolMessage::Accept {
                offer_id: f.str("offer_id")?.to_string(),
                ids: f.ids("ids")?,
            },
            "reject" => ProtocolMessage::Reject {
                offer_id: f.str("offer_id")?.to_string(),
                ids: f.ids("ids")?,
                reason: f.str("reason")?.to_string(),
            },
            "relay" => ProtocolMessage::Relay {
                from: f.agent("from")?,
                id: f.id("id")?,
                locator: f.str("locator")?.to_string(),
            },
            "request" => ProtocolMessage::Request {
                id: f.id("id")?,
                radius: match f.opt("radius") {
                    None => None,
                    Some(_) => Some(f.u64("radius")? as usize),
                },
            },
            "deliver" => ProtocolMessage::Deliver {
                request_ref: f.id("request_ref")?,
                bundle: bundle_from_value(f.req("bundle")?)?,
            },
            "not_found" => ProtocolMessage::NotFound { id: f.id("id")? },
            "adjacent" => ProtocolMessage::Adjacent { ids: f.ids("ids")? },
            "adjacent_reply" => ProtocolMessage::AdjacentReply {
                previews: f
                    .array("previews")?
                    .iter()
                    .map(preview_from_value)
                    .collect::<Result<_, _>>()?,
            },
            "find" => ProtocolMessage::Find {
                tokens: f
                    .array("tokens")?
                    .iter()
                    .map(|t| {
                        t.as_str()
                            .map(str::to_string)
                            .ok_or_else(|| DecodeError::SchemaViolation("tokens are strings".into()))
                    })
                    .collect::<Result<_, _>>()?,
            },
            "find_reply" => ProtocolMessage::FindReply { ids: f.ids("ids")? },
            _ => unreachable!("msg_type checked above"),
        })
    }
}

pub fn bundle_value(b: &Bundle) -> Value {
    let mut m = Map::new();
    m.insert("external_refs".into(), ids_value(b.external_refs.iter().copied()));
    let mut pieces: Vec<_> = b.pieces.iter().collect();
    pieces.sort_by_key(|p| p.id);
    m.insert("pieces".into(), Value::Array(pieces.into_iter().map(piece_to_value).collect()));
    Value::Object(m)
}

pub fn bundle_from_value(v: &Value) -> Result<Bundle, DecodeError> {
    let f = Fields::of(v, "bundle")?;
    f.closed(&["external_refs", "pieces"])?;
    let pieces = f
        .array("pieces")?
        .iter()
        .map(codec::piece_from_value)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Bundle {
        pieces,
        external_refs: f.ids("external_refs")?,
    })
}

pub fn preview_value(p: &Preview) -> Value {
    let mut m = Map::new();
    let (kind, edge_kind) = match p.kind {
        PieceKind::Edge(k) => ("edge", Some(k)),
        other => (other.name(), None),
    };
    m.insert("kind".into(), Value::String(kind.into()));
    if let Some(k) = edge_kind {
        m.insert("edge_kind".into(), Value::String(k.name().into()));
    }
    m.insert("labeled".into(), Value::Bool(p.labeled));
    let measures: Map<String, Value> = p
        .measures
        .iter()
        .map(|(k, v)| (k.clone(), serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number)))
        .collect();
    m.insert("measures".into(), Value::Object(measures));
    m.insert("remote".into(), Value::String(p.remote.to_string()));
    if let Some(s) = p.source {
        m.insert("source".into(), Value::String(s.to_string()));
    }
    if let Some(t) = p.target {
        m.insert("target".into(), Value::String(t.to_string()));
    }
    m.insert("via".into(), Value::String(p.via.to_string()));
    Value::Object(m)
}

pub fn preview_from_value(v: &Value) -> Result<Preview, DecodeError> {
    let f = Fields::of(v, "preview")?;
    f.closed(&["kind", "edge_kind", "labeled", "measures", "remote", "source", "target", "via"])?;
    let kind = match (f.str("kind")?, f.opt_str("edge_kind")?) {
        ("edge", Some(ek)) => PieceKind::Edge(ek.parse::<EdgeKind>().map_err(|_| DecodeError::UnknownKind(ek.into()))?),
        (name, None) => PieceKind::node_from_name(name).ok_or_else(|| DecodeError::UnknownKind(name.into()))?,
        (name, Some(_)) => return Err(DecodeError::UnknownKind(name.into())),
    };
    let mut measures = BTreeMap::new();
    if let Some(Value::Object(entries)) = f.opt("measures") {
        for (k, v) in entries {
            let x = v
                .as_f64()
                .ok_or_else(|| DecodeError::SchemaViolation("measures are numbers".into()))?;
            measures.insert(k.clone(), x);
        }
    }
    Ok(Preview {
        remote: f.id("remote")?,
        via: f.id("via")?,
        kind,
        labeled: f.bool("labeled")?,
        source: f.opt_id("source")?,
        target: f.opt_id("target")?,
        measures,
    })
}
