// SPDX-License-Identifier: Apache-2.0

//! MMM-JSON: the canonical on-disk and on-wire form of pieces.
//!
//! Canonical form is UTF-8 with object keys in ascending byte order, two
//! space indentation, LF line endings and a trailing newline. Optional
//! fields are omitted when absent and pieces are sorted by id. The schema is
//! closed: unknown fields are rejected.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};
use thiserror::Error;

use crate::ids::{AgentId, PieceId, Timestamp};
use crate::measures::MeasureConfig;
use crate::piece::{Authorship, EdgeKind, Piece, PieceKind, ShapeError};
use crate::territory::{LocalMeta, Origin, RedFlag, Territory};

pub const MMM_VERSION: &str = "1.0";
pub const FILE_EXTENSION: &str = ".mmm.json";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("malformed syntax: {0}")]
    MalformedSyntax(String),
    #[error("unknown version {0:?}")]
    UnknownVersion(String),
    #[error("unknown field {0:?}")]
    UnknownField(String),
    #[error("unknown kind {0:?}")]
    UnknownKind(String),
    #[error("bad id {0:?}")]
    BadIdFormat(String),
    #[error("bad timestamp {0:?}")]
    BadTimestamp(String),
    #[error("edge piece {0} lacks an endpoint")]
    EdgeMissingEndpoint(String),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
}

impl DecodeError {
    pub fn code(&self) -> &'static str {
        match self {
            DecodeError::MalformedSyntax(_) => "MALFORMED_SYNTAX",
            DecodeError::UnknownVersion(_) => "UNKNOWN_VERSION",
            DecodeError::UnknownField(_) => "UNKNOWN_FIELD",
            DecodeError::UnknownKind(_) => "UNKNOWN_KIND",
            DecodeError::BadIdFormat(_) => "BAD_ID_FORMAT",
            DecodeError::BadTimestamp(_) => "BAD_TIMESTAMP",
            DecodeError::EdgeMissingEndpoint(_) => "EDGE_MISSING_ENDPOINT",
            DecodeError::SchemaViolation(_) => "SCHEMA_VIOLATION",
        }
    }
}

/// Renders a JSON value canonically. `serde_json::Map` is a `BTreeMap`, so
/// keys come out in byte order.
pub fn to_canonical_bytes(value: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("JSON values always serialize");
    out.push(b'\n');
    out
}

pub fn parse_json(bytes: &[u8]) -> Result<Value, DecodeError> {
    serde_json::from_slice(bytes).map_err(|e| DecodeError::MalformedSyntax(e.to_string()))
}

/// Read access to a JSON object that remembers which keys were consumed, so
/// leftovers can be reported as unknown fields.
pub(crate) struct Fields<'a> {
    map: &'a Map<String, Value>,
    context: &'static str,
}

impl<'a> Fields<'a> {
    pub(crate) fn of(value: &'a Value, context: &'static str) -> Result<Self, DecodeError> {
        match value {
            Value::Object(map) => Ok(Fields { map, context }),
            _ => Err(DecodeError::SchemaViolation(format!("{context} must be an object"))),
        }
    }

    /// Rejects any key outside `allowed`.
    pub(crate) fn closed(&self, allowed: &[&str]) -> Result<(), DecodeError> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(DecodeError::UnknownField(format!("{}.{k}", self.context))),
            None => Ok(()),
        }
    }

    pub(crate) fn opt(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key).filter(|v| !v.is_null())
    }

    pub(crate) fn req(&self, key: &str) -> Result<&'a Value, DecodeError> {
        self.opt(key)
            .ok_or_else(|| DecodeError::SchemaViolation(format!("{}.{key} is required", self.context)))
    }

    pub(crate) fn str(&self, key: &str) -> Result<&'a str, DecodeError> {
        self.req(key)?
            .as_str()
            .ok_or_else(|| DecodeError::SchemaViolation(format!("{}.{key} must be a string", self.context)))
    }

    pub(crate) fn opt_str(&self, key: &str) -> Result<Option<&'a str>, DecodeError> {
        match self.opt(key) {
            None => Ok(None),
            Some(v) => v
                .as_str()
                .map(Some)
                .ok_or_else(|| DecodeError::SchemaViolation(format!("{}.{key} must be a string", self.context))),
        }
    }

    pub(crate) fn bool(&self, key: &str) -> Result<bool, DecodeError> {
        self.req(key)?
            .as_bool()
            .ok_or_else(|| DecodeError::SchemaViolation(format!("{}.{key} must be a boolean", self.context)))
    }

    pub(crate) fn f64(&self, key: &str) -> Result<f64, DecodeError> {
        self.req(key)?
            .as_f64()
            .ok_or_else(|| DecodeError::SchemaViolation(format!("{}.{key} must be a number", self.context)))
    }

    pub(crate) fn u64(&self, key: &str) -> Result<u64, DecodeError> {
        self.req(key)?.as_u64().ok_or_else(|| {
            DecodeError::SchemaViolation(format!("{}.{key} must be a non-negative integer", self.context))
        })
    }

    pub(crate) fn array(&self, key: &str) -> Result<&'a Vec<Value>, DecodeError> {
        self.req(key)?
            .as_array()
            .ok_or_else(|| DecodeError::SchemaViolation(format!("{}.{key} must be an array", self.context)))
    }

    pub(crate) fn opt_array(&self, key: &str) -> Result<Option<&'a Vec<Value>>, DecodeError> {
        match self.opt(key) {
            None => Ok(None),
            Some(_) => self.array(key).map(Some),
        }
    }

    pub(crate) fn id(&self, key: &str) -> Result<PieceId, DecodeError> {
        parse_id(self.str(key)?)
    }

    pub(crate) fn opt_id(&self, key: &str) -> Result<Option<PieceId>, DecodeError> {
        self.opt_str(key)?.map(parse_id).transpose()
    }

    pub(crate) fn agent(&self, key: &str) -> Result<AgentId, DecodeError> {
        parse_agent(self.str(key)?)
    }

    pub(crate) fn timestamp(&self, key: &str) -> Result<Timestamp, DecodeError> {
        parse_timestamp(self.str(key)?)
    }

    pub(crate) fn ids(&self, key: &str) -> Result<Vec<PieceId>, DecodeError> {
        self.array(key)?
            .iter()
            .map(|v| {
                v.as_str()
                    .ok_or_else(|| DecodeError::SchemaViolation(format!("{}.{key} holds ids", self.context)))
                    .and_then(parse_id)
            })
            .collect()
    }
}

pub(crate) fn parse_id(s: &str) -> Result<PieceId, DecodeError> {
    s.parse().map_err(|_| DecodeError::BadIdFormat(s.to_string()))
}

pub(crate) fn parse_agent(s: &str) -> Result<AgentId, DecodeError> {
    AgentId::new(s).ok_or_else(|| DecodeError::SchemaViolation("agent names must be non-empty".into()))
}

pub(crate) fn parse_timestamp(s: &str) -> Result<Timestamp, DecodeError> {
    s.parse().map_err(|_| DecodeError::BadTimestamp(s.to_string()))
}

pub(crate) fn ids_value(ids: impl IntoIterator<Item = PieceId>) -> Value {
    Value::Array(ids.into_iter().map(|id| Value::String(id.to_string())).collect())
}

pub fn piece_to_value(p: &Piece) -> Value {
    let mut m = Map::new();
    if !p.aliases.is_empty() {
        let mut aliases = p.aliases.clone();
        aliases.sort();
        m.insert("aliases".into(), ids_value(aliases));
    }
    let authorships = p
        .authorships
        .iter()
        .map(|a| {
            let mut am = Map::new();
            am.insert(
                "authors".into(),
                Value::Array(a.authors.iter().map(|x| Value::String(x.to_string())).collect()),
            );
            am.insert("timestamp".into(), Value::String(a.timestamp.to_string()));
            Value::Object(am)
        })
        .collect();
    m.insert("authorships".into(), Value::Array(authorships));
    m.insert("content".into(), Value::String(p.content.clone()));
    match p.kind {
        PieceKind::Edge(k) => {
            m.insert("kind".into(), Value::String("edge".into()));
            m.insert("edge_kind".into(), Value::String(k.name().into()));
        }
        other => {
            m.insert("kind".into(), Value::String(other.name().into()));
        }
    }
    m.insert("id".into(), Value::String(p.id.to_string()));
    if let Some(label) = &p.label {
        m.insert("label".into(), Value::String(label.clone()));
    }
    m.insert("public".into(), Value::Bool(p.public));
    if let Some(label) = &p.reverse_label {
        m.insert("reverse_label".into(), Value::String(label.clone()));
    }
    if let Some(s) = p.source {
        m.insert("source".into(), Value::String(s.to_string()));
    }
    if let Some(t) = p.target {
        m.insert("target".into(), Value::String(t.to_string()));
    }
    Value::Object(m)
}

const PIECE_FIELDS: &[&str] = &[
    "aliases",
    "authorships",
    "content",
    "edge_kind",
    "id",
    "kind",
    "label",
    "public",
    "reverse_label",
    "source",
    "target",
];

pub fn piece_from_value(v: &Value) -> Result<Piece, DecodeError> {
    let f = Fields::of(v, "piece")?;
    f.closed(PIECE_FIELDS)?;
    let id = f.id("id")?;
    let kind_name = f.str("kind")?;
    let edge_kind = f.opt_str("edge_kind")?;
    let kind = match (kind_name, edge_kind) {
        ("edge", Some(ek)) => PieceKind::Edge(
            ek.parse::<EdgeKind>()
                .map_err(|_| DecodeError::UnknownKind(ek.to_string()))?,
        ),
        ("edge", None) => return Err(DecodeError::SchemaViolation(format!("edge {id} lacks edge_kind"))),
        (name, ek) => {
            let kind = PieceKind::node_from_name(name).ok_or_else(|| DecodeError::UnknownKind(name.to_string()))?;
            if ek.is_some() {
                return Err(DecodeError::SchemaViolation(format!("node {id} carries edge_kind")));
            }
            kind
        }
    };
    let mut authorships = Vec::new();
    for a in f.array("authorships")? {
        let af = Fields::of(a, "authorship")?;
        af.closed(&["authors", "timestamp"])?;
        let authors = af
            .array("authors")?
            .iter()
            .map(|x| {
                x.as_str()
                    .ok_or_else(|| DecodeError::SchemaViolation("authors are strings".into()))
                    .and_then(parse_agent)
            })
            .collect::<Result<Vec<_>, _>>()?;
        authorships.push(Authorship {
            authors,
            timestamp: af.timestamp("timestamp")?,
        });
    }
    let aliases = match f.opt_array("aliases")? {
        None => Vec::new(),
        Some(_) => f.ids("aliases")?,
    };
    let piece = Piece {
        id,
        kind,
        content: f.str("content")?.to_string(),
        source: f.opt_id("source")?,
        target: f.opt_id("target")?,
        label: f.opt_str("label")?.map(str::to_string),
        reverse_label: f.opt_str("reverse_label")?.map(str::to_string),
        public: f.bool("public")?,
        authorships,
        aliases,
    };
    piece.check_shape().map_err(|e| match e {
        ShapeError::EdgeMissingEndpoint => DecodeError::EdgeMissingEndpoint(id.to_string()),
        other => DecodeError::SchemaViolation(format!("piece {id}: {other}")),
    })?;
    Ok(piece)
}

fn pieces_value(pieces: &[Piece]) -> Value {
    let mut sorted: Vec<&Piece> = pieces.iter().collect();
    sorted.sort_by_key(|p| p.id);
    Value::Array(sorted.into_iter().map(piece_to_value).collect())
}

fn pieces_from_value(v: &Value, context: &'static str) -> Result<Vec<Piece>, DecodeError> {
    let arr = v
        .as_array()
        .ok_or_else(|| DecodeError::SchemaViolation(format!("{context} must be an array")))?;
    let pieces = arr.iter().map(piece_from_value).collect::<Result<Vec<_>, _>>()?;
    let mut seen = BTreeSet::new();
    if let Some(dup) = pieces.iter().find(|p| !seen.insert(p.id)) {
        return Err(DecodeError::SchemaViolation(format!("duplicate id {}", dup.id)));
    }
    Ok(pieces)
}

fn check_version(f: &Fields<'_>) -> Result<(), DecodeError> {
    let version = f.req("mmm_version")?;
    match version.as_str() {
        Some(MMM_VERSION) => Ok(()),
        Some(other) => Err(DecodeError::UnknownVersion(other.to_string())),
        None => Err(DecodeError::UnknownVersion(version.to_string())),
    }
}

pub fn document_value(pieces: &[Piece]) -> Value {
    let mut m = Map::new();
    m.insert("mmm_version".into(), Value::String(MMM_VERSION.into()));
    m.insert("pieces".into(), pieces_value(pieces));
    Value::Object(m)
}

/// Canonical MMM-JSON document holding `pieces`.
pub fn encode(pieces: &[Piece]) -> Vec<u8> {
    to_canonical_bytes(&document_value(pieces))
}

pub fn decode_value(v: &Value) -> Result<Vec<Piece>, DecodeError> {
    let f = Fields::of(v, "document")?;
    f.closed(&["mmm_version", "pieces"])?;
    check_version(&f)?;
    pieces_from_value(f.req("pieces")?, "pieces")
}

/// Parses a document in any whitespace or key order.
pub fn decode(bytes: &[u8]) -> Result<Vec<Piece>, DecodeError> {
    decode_value(&parse_json(bytes)?)
}

pub fn canonicalize(bytes: &[u8]) -> Result<Vec<u8>, DecodeError> {
    decode(bytes).map(|pieces| encode(&pieces))
}

/// Full territory snapshot: pieces plus owner, local metadata and aliases.
pub fn territory_value(t: &Territory) -> Value {
    let mut m = Map::new();
    let aliases: Map<String, Value> = t
        .alias_index()
        .iter()
        .map(|(from, to)| (from.to_string(), Value::String(to.to_string())))
        .collect();
    m.insert("aliases".into(), Value::Object(aliases));
    let meta: Map<String, Value> = t
        .all_meta()
        .iter()
        .map(|(id, meta)| (id.to_string(), meta_value(meta)))
        .collect();
    m.insert("meta".into(), Value::Object(meta));
    m.insert("mmm_version".into(), Value::String(MMM_VERSION.into()));
    m.insert("owner".into(), Value::String(t.owner().to_string()));
    let pieces: Vec<Piece> = t.pieces().cloned().collect();
    m.insert("pieces".into(), pieces_value(&pieces));
    Value::Object(m)
}

fn meta_value(meta: &LocalMeta) -> Value {
    let mut m = Map::new();
    m.insert("accepted_at".into(), Value::String(meta.accepted_at.to_string()));
    m.insert("origin".into(), Value::String(meta.origin.name().into()));
    let flags = meta
        .red_flags
        .iter()
        .map(|f| {
            let mut fm = Map::new();
            fm.insert("agent".into(), Value::String(f.agent.to_string()));
            fm.insert("at".into(), Value::String(f.at.to_string()));
            fm.insert("code".into(), Value::String(f.code.clone()));
            Value::Object(fm)
        })
        .collect();
    m.insert("red_flags".into(), Value::Array(flags));
    Value::Object(m)
}

fn meta_from_value(v: &Value) -> Result<LocalMeta, DecodeError> {
    let f = Fields::of(v, "meta")?;
    f.closed(&["accepted_at", "origin", "red_flags"])?;
    let origin_name = f.str("origin")?;
    let origin = Origin::from_name(origin_name)
        .ok_or_else(|| DecodeError::SchemaViolation(format!("unknown origin {origin_name:?}")))?;
    let mut red_flags = Vec::new();
    for flag in f.array("red_flags")? {
        let ff = Fields::of(flag, "red_flag")?;
        ff.closed(&["agent", "at", "code"])?;
        red_flags.push(RedFlag {
            agent: ff.agent("agent")?,
            at: ff.timestamp("at")?,
            code: ff.str("code")?.to_string(),
        });
    }
    Ok(LocalMeta {
        accepted_at: f.timestamp("accepted_at")?,
        origin,
        red_flags,
    })
}

pub fn encode_territory(t: &Territory) -> Vec<u8> {
    to_canonical_bytes(&territory_value(t))
}

pub fn decode_territory(bytes: &[u8]) -> Result<Territory, DecodeError> {
    let v = parse_json(bytes)?;
    let f = Fields::of(&v, "territory")?;
    f.closed(&["aliases", "meta", "mmm_version", "owner", "pieces"])?;
    check_version(&f)?;
    let owner = f.agent("owner")?;
    let pieces = pieces_from_value(f.req("pieces")?, "pieces")?;
    let mut meta = BTreeMap::new();
    if let Some(Value::Object(entries)) = f.opt("meta") {
        for (id, m) in entries {
            meta.insert(parse_id(id)?, meta_from_value(m)?);
        }
    }
    let mut aliases = BTreeMap::new();
    if let Some(Value::Object(entries)) = f.opt("aliases") {
        for (from, to) in entries {
            let to = to
                .as_str()
                .ok_or_else(|| DecodeError::SchemaViolation("alias targets are ids".into()))?;
            aliases.insert(parse_id(from)?, parse_id(to)?);
        }
    }
    Ok(Territory::from_parts(owner, pieces, meta, aliases))
}

/// Measure configuration as an object. Every field is written.
pub fn measure_config_value(cfg: &MeasureConfig) -> Value {
    let mut m = Map::new();
    m.insert("closeness_threshold".into(), Value::from(cfg.closeness_threshold as u64));
    m.insert("horizon".into(), Value::from(cfg.horizon as u64));
    m.insert(
        "kind_weights".into(),
        Value::Object(
            cfg.kind_weights
                .iter()
                .map(|(k, w)| (k.name().to_string(), Value::from(*w)))
                .collect(),
        ),
    );
    m.insert("label_factor_unlabeled".into(), Value::from(cfg.label_factor_unlabeled));
    m.insert("walk_count".into(), Value::from(cfg.walk_count as u64));
    m.insert("walk_length".into(), Value::from(cfg.walk_length as u64));
    Value::Object(m)
}

/// Reads a measure configuration; absent fields keep their defaults and
/// listed kind weights override the default ones.
pub fn measure_config_from_value(v: &Value) -> Result<MeasureConfig, DecodeError> {
    let f = Fields::of(v, "measures")?;
    f.closed(&[
        "closeness_threshold",
        "horizon",
        "kind_weights",
        "label_factor_unlabeled",
        "walk_count",
        "walk_length",
    ])?;
    let mut cfg = MeasureConfig::default();
    let usize_field = |key: &str, into: &mut usize| -> Result<(), DecodeError> {
        if f.opt(key).is_some() {
            *into = f.u64(key)? as usize;
        }
        Ok(())
    };
    usize_field("closeness_threshold", &mut cfg.closeness_threshold)?;
    usize_field("horizon", &mut cfg.horizon)?;
    usize_field("walk_count", &mut cfg.walk_count)?;
    usize_field("walk_length", &mut cfg.walk_length)?;
    if f.opt("label_factor_unlabeled").is_some() {
        cfg.label_factor_unlabeled = f.f64("label_factor_unlabeled")?;
    }
    if let Some(weights) = f.opt("kind_weights") {
        let w = Fields::of(weights, "kind_weights")?;
        for (name, value) in w.map {
            let kind: EdgeKind = name.parse().map_err(|_| DecodeError::UnknownKind(name.clone()))?;
            let weight = value
                .as_f64()
                .ok_or_else(|| DecodeError::SchemaViolation(format!("kind_weights.{name} must be a number")))?;
            cfg.kind_weights.insert(kind, weight);
        }
    }
    if !cfg.is_valid() {
        return Err(DecodeError::SchemaViolation("measure configuration out of range".into()));
    }
    Ok(cfg)
}
