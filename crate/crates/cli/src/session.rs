// SPDX-License-Identifier: Apache-2.0

//! One territory's operations as JSON-in, JSON-out calls. The command line
//! and the HTTP service both go through here, so they behave identically.

use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex, MutexGuard};

use mmm_core::codec::{self, document_value, encode_territory, piece_to_value, to_canonical_bytes, MMM_VERSION};
use mmm_core::dedup::detect_duplicates;
use mmm_core::gatekeeper::{GateDecision, RuleSet};
use mmm_core::measures::{closeness, topography, unary, visibility, IncidenceView, Measure};
use mmm_core::reward::{activity_profile, trickle};
use mmm_core::sharing::{
    encode_peer_state, inbox_entry_value, make_bundle, preview_value, OfferOutcome, Peer, ProtocolMessage, TcpTransport, Transport,
    TransportError,
};
use mmm_core::validate::validate;
use mmm_core::wayfarer::{frontier, hybrid_search, step, FrontierEntry, PeerFailure, SearchResult};
use mmm_core::{AgentId, Annotation, EdgeKind, NewPiece, Origin, PieceId, PieceKind, Timestamp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::store::{is_territory_dir, Store, LOCK_WAIT};

pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;
pub type SharedTransport = Arc<dyn Transport + Send + Sync>;

/// Reaches peers named by a locator: a territory directory on this machine
/// is opened, locked and answered in-process; anything else is `host:port`.
pub struct LocatorTransport {
    pub tcp: TcpTransport,
    pub clock: Clock,
    /// The caller's own directory, which it already holds locked.
    pub own: Option<String>,
}

impl LocatorTransport {
    pub fn new(clock: Clock) -> Self {
        LocatorTransport {
            tcp: TcpTransport::default(),
            clock,
            own: None,
        }
    }

    pub fn from_dir(mut self, address: String) -> Self {
        self.own = Some(address);
        self
    }
}

impl Transport for LocatorTransport {
    fn exchange(&self, address: &str, msg: &ProtocolMessage) -> Result<Vec<ProtocolMessage>, TransportError> {
        let path = Path::new(address);
        if !is_territory_dir(path) {
            return self.tcp.exchange(address, msg);
        }
        let fail = |e: CliError| TransportError::NoSuchPeer(format!("{address}: {e}"));
        let store = Store::open(path).map_err(fail)?;
        if self.own.as_deref() == Some(store.address().as_str()) {
            return Err(TransportError::NoSuchPeer(format!("{address} is this territory")));
        }
        let _lock = store.lock(LOCK_WAIT).map_err(fail)?;
        let mut peer = store.load().map_err(fail)?;
        // Round-trip through the wire encoding, exactly as over TCP.
        let msg = ProtocolMessage::decode(&msg.encode()).map_err(|e| TransportError::NoSuchPeer(e.to_string()))?;
        let replies = peer.handle(&msg, (self.clock)());
        store.save(&peer).map_err(fail)?;
        Ok(replies)
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("MMM_SEED").ok().and_then(|s| s.trim().parse::<u64>().ok())
}

/// Seeded from `MMM_SEED` and the territory owner when the variable is set,
/// so differently owned territories draw different ids; otherwise from the
/// OS.
pub fn rng_from_env(owner: &AgentId) -> ChaCha8Rng {
    match env_seed() {
        Some(seed) => {
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update(owner.as_str().as_bytes());
            ChaCha8Rng::from_seed(h.finalize().into())
        }
        None => ChaCha8Rng::from_entropy(),
    }
}

/// Fixed at `MMM_NOW` (unix seconds or `YYYY-MM-DDTHH:MM:SSZ`) when set.
/// Under `MMM_SEED` alone the clock stands still at 2024-01-01T00:00:00Z so
/// that output is reproducible; otherwise it is the wall clock.
pub fn clock_from_env() -> Clock {
    let fixed = std::env::var("MMM_NOW").ok().and_then(|s| {
        let s = s.trim();
        s.parse::<i64>().map(Timestamp::from_unix).ok().or_else(|| s.parse().ok())
    });
    match fixed.or_else(|| env_seed().map(|_| Timestamp::from_unix(1_704_067_200))) {
        Some(t) => Arc::new(move || t),
        None => Arc::new(Timestamp::now),
    }
}

pub struct Session {
    pub peer: Arc<Mutex<Peer>>,
    pub peers: Vec<String>,
    pub store: Option<Store>,
    transport: SharedTransport,
    rng: Mutex<ChaCha8Rng>,
    clock: Clock,
}

fn with_version(mut m: Map<String, Value>) -> Value {
    m.insert("mmm_version".into(), MMM_VERSION.into());
    Value::Object(m)
}

fn ids_value(ids: impl IntoIterator<Item = PieceId>) -> Value {
    Value::Array(ids.into_iter().map(|id| Value::String(id.to_string())).collect())
}

pub fn parse_id(s: &str) -> CliResult<PieceId> {
    PieceId::from_str(s).map_err(|e| CliError::new("BAD_ID_FORMAT", e.to_string()))
}

pub fn parse_agent(s: &str) -> CliResult<AgentId> {
    AgentId::new(s).ok_or_else(|| CliError::new("INVALID_AGENT", "agent id must not be empty"))
}

fn field<'a>(body: &'a Value, key: &str) -> Option<&'a Value> {
    body.get(key).filter(|v| !v.is_null())
}

fn req_str<'a>(body: &'a Value, key: &str) -> CliResult<&'a str> {
    opt_str(body, key)?.ok_or_else(|| CliError::bad_request(format!("missing field {key:?}")))
}

fn opt_str<'a>(body: &'a Value, key: &str) -> CliResult<Option<&'a str>> {
    match field(body, key) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(CliError::bad_request(format!("field {key:?} must be a string"))),
    }
}

fn req_id(body: &Value, key: &str) -> CliResult<PieceId> {
    parse_id(req_str(body, key)?)
}

fn opt_id(body: &Value, key: &str) -> CliResult<Option<PieceId>> {
    opt_str(body, key)?.map(parse_id).transpose()
}

fn opt_f64(body: &Value, key: &str) -> CliResult<Option<f64>> {
    match field(body, key) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| CliError::bad_request(format!("field {key:?} must be a number"))),
    }
}

fn opt_usize(body: &Value, key: &str) -> CliResult<Option<usize>> {
    match field(body, key) {
        None => Ok(None),
        Some(v) => v
            .as_u64()
            .map(|n| Some(n as usize))
            .ok_or_else(|| CliError::bad_request(format!("field {key:?} must be a count"))),
    }
}

fn parse_kind(s: &str) -> CliResult<PieceKind> {
    s.parse::<PieceKind>()
        .map_err(|_| CliError::new("UNKNOWN_KIND", format!("unknown kind {s:?}")))
}

fn parse_edge_kind(s: &str) -> CliResult<EdgeKind> {
    s.parse::<EdgeKind>()
        .map_err(|_| CliError::new("UNKNOWN_KIND", format!("unknown edge kind {s:?}")))
}

pub fn decision_value(d: &GateDecision, rules: &RuleSet) -> Value {
    let mut m = Map::new();
    m.insert(
        "rule".into(),
        match d.fired_rule.and_then(|i| rules.rules.get(i)) {
            Some(r) => Value::String(r.text.clone()),
            None => Value::Null,
        },
    );
    m.insert("rule_path".into(), Value::String(d.rule_path()));
    m.insert("verdict".into(), Value::String(d.verdict.name().into()));
    Value::Object(m)
}

pub fn frontier_entry_value(e: &FrontierEntry) -> Value {
    let mut m = Map::new();
    m.insert("locator".into(), Value::String(e.locator.clone()));
    m.insert("preview".into(), preview_value(&e.preview));
    m.insert("remote".into(), Value::String(e.remote.to_string()));
    m.insert("via".into(), Value::String(e.via.to_string()));
    Value::Object(m)
}

fn failures_value(errors: &[PeerFailure]) -> Value {
    Value::Array(
        errors
            .iter()
            .map(|f| {
                let mut m = Map::new();
                m.insert("locator".into(), Value::String(f.locator.clone()));
                m.insert("message".into(), Value::String(f.message.clone()));
                Value::Object(m)
            })
            .collect(),
    )
}

fn outcome_value(o: &OfferOutcome) -> Value {
    let mut m = Map::new();
    m.insert("accepted".into(), ids_value(o.accepted.iter().copied()));
    m.insert("quarantined".into(), ids_value(o.quarantined.iter().copied()));
    m.insert("rejected".into(), ids_value(o.rejected.iter().copied()));
    m.insert("replies".into(), Value::Array(o.replies.iter().map(ProtocolMessage::to_value).collect()));
    with_version(m)
}

/// Renders a document the way every command prints it.
pub fn render(v: &Value) -> Vec<u8> {
    to_canonical_bytes(v)
}

impl Session {
    pub fn new(peer: Peer, transport: SharedTransport, peers: Vec<String>, rng: ChaCha8Rng, clock: Clock) -> Self {
        Session {
            peer: Arc::new(Mutex::new(peer)),
            peers,
            store: None,
            transport,
            rng: Mutex::new(rng),
            clock,
        }
    }

    /// A session whose changes are written back to `store` after every
    /// mutation.
    pub fn persistent(mut self, store: Store) -> Self {
        self.store = Some(store);
        self
    }

    pub fn now(&self) -> Timestamp {
        (self.clock)()
    }

    fn lock(&self) -> MutexGuard<'_, Peer> {
        self.peer.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn commit(&self, peer: &Peer) -> CliResult<()> {
        match &self.store {
            Some(store) => store.save(peer),
            None => Ok(()),
        }
    }

    /// Runs `f` on the peer and persists the result if it succeeded.
    fn mutate<T>(&self, f: impl FnOnce(&mut Peer, &mut ChaCha8Rng) -> CliResult<T>) -> CliResult<T> {
        let mut peer = self.lock();
        let mut rng = self.rng.lock().unwrap_or_else(|p| p.into_inner());
        let out = f(&mut peer, &mut rng)?;
        self.commit(&peer)?;
        Ok(out)
    }

    // -- pieces -------------------------------------------------------------

    pub fn pieces(&self) -> Value {
        let peer = self.lock();
        let pieces: Vec<_> = peer.territory.pieces().cloned().collect();
        document_value(&pieces)
    }

    pub fn piece(&self, id: PieceId) -> CliResult<Value> {
        let peer = self.lock();
        peer.territory
            .get(id)
            .map(piece_to_value)
            .ok_or_else(|| CliError::new("UNKNOWN_PIECE", format!("unknown piece {id}")))
    }

    /// Body: `kind`, plus `content` for nodes or `source`/`target` for
    /// edges; optional `label`, `reverse_label`, `author`.
    pub fn create(&self, body: &Value) -> CliResult<Value> {
        let kind = parse_kind(req_str(body, "kind")?)?;
        let mut new = match kind {
            PieceKind::Edge(k) => NewPiece::edge(k, req_id(body, "source")?, req_id(body, "target")?),
            node => NewPiece::node(node, opt_str(body, "content")?.unwrap_or_default()),
        };
        if kind.is_edge() {
            if let Some(c) = opt_str(body, "content")? {
                new = new.with_content(c);
            }
        }
        if let Some(l) = opt_str(body, "label")? {
            new = new.with_label(l);
        }
        if let Some(l) = opt_str(body, "reverse_label")? {
            new = new.with_reverse_label(l);
        }
        let author = opt_str(body, "author")?.map(parse_agent).transpose()?;
        let now = self.now();
        self.mutate(|peer, rng| {
            let author = author.unwrap_or_else(|| peer.owner().clone());
            let p = peer.territory.create_piece(new, &author, now, rng)?;
            Ok(piece_to_value(&p))
        })
    }

    /// Body: `anchor`, `edge_kind`, `content`; optional `label`,
    /// `node_kind`, `author`.
    pub fn annotate(&self, body: &Value) -> CliResult<Value> {
        let mut a = Annotation::new(
            req_id(body, "anchor")?,
            parse_edge_kind(req_str(body, "edge_kind")?)?,
            req_str(body, "content")?,
        );
        if let Some(l) = opt_str(body, "label")? {
            a = a.with_label(l);
        }
        if let Some(k) = opt_str(body, "node_kind")? {
            a = a.with_node_kind(parse_kind(k)?);
        }
        let author = opt_str(body, "author")?.map(parse_agent).transpose()?;
        let now = self.now();
        self.mutate(|peer, rng| {
            let author = author.unwrap_or_else(|| peer.owner().clone());
            let (node, edge) = peer.territory.annotate(a, &author, now, rng)?;
            let mut m = Map::new();
            m.insert("edge".into(), piece_to_value(&edge));
            m.insert("node".into(), piece_to_value(&node));
            Ok(with_version(m))
        })
    }

    pub fn set_public(&self, id: PieceId) -> CliResult<Value> {
        self.mutate(|peer, _| Ok(piece_to_value(&peer.territory.set_public(id)?)))
    }

    pub fn delete(&self, id: PieceId) -> CliResult<Value> {
        self.mutate(|peer, _| {
            let canonical = peer.territory.resolve(id);
            peer.territory.delete_piece(id)?;
            let mut m = Map::new();
            m.insert("deleted".into(), Value::String(canonical.to_string()));
            Ok(with_version(m))
        })
    }

    pub fn flag(&self, id: PieceId, code: &str, by: Option<AgentId>) -> CliResult<Value> {
        let now = self.now();
        self.mutate(|peer, _| {
            let by = by.unwrap_or_else(|| peer.owner().clone());
            let meta = peer.territory.red_flag(id, &by, now, code)?;
            let mut m = Map::new();
            m.insert("flags".into(), (meta.red_flags.len() as u64).into());
            m.insert("id".into(), Value::String(peer.territory.resolve(id).to_string()));
            Ok(with_version(m))
        })
    }

    pub fn merge(&self, keep: PieceId, absorb: PieceId) -> CliResult<Value> {
        self.mutate(|peer, _| Ok(piece_to_value(&peer.territory.merge(keep, absorb)?)))
    }

    /// Imports an MMM-JSON document; returns the ids it carried.
    pub fn import(&self, bytes: &[u8]) -> CliResult<Value> {
        let pieces = codec::decode(bytes)?;
        let now = self.now();
        self.mutate(|peer, _| {
            let mut next = peer.territory.clone();
            for p in &pieces {
                next.insert_checked(p, Origin::Authored, now)
                    .map_err(|e| CliError::new("SCHEMA_VIOLATION", format!("{}: {e}", p.id)))?;
            }
            peer.territory = next;
            let mut m = Map::new();
            m.insert("imported".into(), ids_value(pieces.iter().map(|p| p.id)));
            Ok(with_version(m))
        })
    }

    pub fn export(&self) -> Vec<u8> {
        let peer = self.lock();
        let pieces: Vec<_> = peer.territory.pieces().cloned().collect();
        codec::encode(&pieces)
    }

    // -- structure and measures --------------------------------------------

    pub fn findings(&self) -> Value {
        let peer = self.lock();
        let findings = validate(&peer.territory)
            .iter()
            .map(|f| {
                let mut m = Map::new();
                m.insert("code".into(), Value::String(f.code.name().into()));
                m.insert("piece".into(), Value::String(f.piece.to_string()));
                m.insert("severity".into(), Value::String(f.severity.name().into()));
                Value::Object(m)
            })
            .collect();
        let mut m = Map::new();
        m.insert("findings".into(), Value::Array(findings));
        with_version(m)
    }

    /// Named measures of `id`. `closeness` needs `to`; `sampled` switches
    /// visibility to the Monte-Carlo estimate.
    pub fn measures(&self, id: PieceId, names: &[String], to: Option<PieceId>, sampled: bool) -> CliResult<Value> {
        let peer = self.lock();
        let view = IncidenceView::from_territory(&peer.territory);
        let id = peer.territory.resolve(id);
        let mut out = Map::new();
        for name in names {
            let m: Measure = name.parse()?;
            let v = match m {
                Measure::Closeness => {
                    let to = to.ok_or_else(|| CliError::bad_request("closeness needs a second piece"))?;
                    match closeness(&view, id, peer.territory.resolve(to))? {
                        Some(d) => Value::from(d as u64),
                        None => Value::Null,
                    }
                }
                Measure::Visibility if sampled => {
                    let mut rng = self.rng.lock().unwrap_or_else(|p| p.into_inner());
                    Value::from(visibility(&view, id, &peer.cfg, &mut *rng)?)
                }
                Measure::Depth | Measure::Utility | Measure::FlagCount => {
                    Value::from(unary(&view, m, id, &peer.cfg)? as u64)
                }
                _ => Value::from(unary(&view, m, id, &peer.cfg)?),
            };
            out.insert(m.name().into(), v);
        }
        let mut m = Map::new();
        m.insert("id".into(), Value::String(id.to_string()));
        m.insert("measures".into(), Value::Object(out));
        Ok(with_version(m))
    }

    pub fn topography(&self, measure: &str, seed: u64) -> CliResult<Value> {
        let peer = self.lock();
        let view = IncidenceView::from_territory(&peer.territory);
        let entries = topography(&view, &peer.cfg, measure, seed)?
            .iter()
            .map(|e| {
                let mut m = Map::new();
                m.insert("height".into(), e.height.into());
                m.insert("id".into(), Value::String(e.id.to_string()));
                m.insert("x".into(), e.x.into());
                m.insert("y".into(), e.y.into());
                Value::Object(m)
            })
            .collect();
        let mut m = Map::new();
        m.insert("entries".into(), Value::Array(entries));
        m.insert("measure".into(), Value::String(measure.into()));
        Ok(with_version(m))
    }

    pub fn duplicates(&self, tau: f64) -> CliResult<Value> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(CliError::bad_request(format!("tau must lie in [0, 1], got {tau}")));
        }
        let peer = self.lock();
        let pairs = detect_duplicates(&peer.territory, tau)
            .iter()
            .map(|p| {
                let mut m = Map::new();
                m.insert("a".into(), Value::String(p.a.to_string()));
                m.insert("b".into(), Value::String(p.b.to_string()));
                m.insert("similarity".into(), p.similarity.into());
                Value::Object(m)
            })
            .collect();
        let mut m = Map::new();
        m.insert("pairs".into(), Value::Array(pairs));
        m.insert("tau".into(), tau.into());
        Ok(with_version(m))
    }

    // -- rules --------------------------------------------------------------

    pub fn rules_text(&self) -> String {
        match &self.store {
            Some(store) => std::fs::read_to_string(store.dir().join(crate::store::RULES_FILE))
                .unwrap_or_else(|_| self.lock().rules.to_text()),
            None => self.lock().rules.to_text(),
        }
    }

    /// Replaces the rules. Nothing changes if any line fails to parse.
    pub fn set_rules(&self, text: &str) -> CliResult<Value> {
        let rules = RuleSet::parse(text)?;
        let mut peer = self.lock();
        if let Some(store) = &self.store {
            store.write_rules(text)?;
        }
        peer.rules = rules;
        let mut m = Map::new();
        m.insert("rules".into(), (peer.rules.len() as u64).into());
        Ok(with_version(m))
    }

    // -- sharing ------------------------------------------------------------

    pub fn offer(&self, id: PieceId, to: &str, radius: Option<usize>, offer_id: Option<String>) -> CliResult<Value> {
        let transport = self.transport.clone();
        self.mutate(|peer, rng| {
            let bundle = make_bundle(&peer.territory, id, radius.unwrap_or(peer.glue_radius))?;
            let offer_id = offer_id.unwrap_or_else(|| Peer::fresh_offer_id(rng));
            let receipt = peer.offer(transport.as_ref(), to, &offer_id, bundle)?;
            let mut m = Map::new();
            m.insert("offer_id".into(), Value::String(receipt.offer_id));
            m.insert(
                "replies".into(),
                Value::Array(receipt.replies.iter().map(ProtocolMessage::to_value).collect()),
            );
            Ok(with_version(m))
        })
    }

    pub fn inbox(&self) -> Value {
        let peer = self.lock();
        let mut m = Map::new();
        m.insert("inbox".into(), Value::Array(peer.inbox.iter().map(inbox_entry_value).collect()));
        m.insert(
            "relays".into(),
            Value::Array(peer.relays.iter().map(mmm_core::sharing::relay_note_value).collect()),
        );
        with_version(m)
    }

    pub fn settle(&self, offer_id: &str, accept: bool) -> CliResult<Value> {
        let now = self.now();
        self.mutate(|peer, _| Ok(peer.settle(offer_id, accept, now)?.to_value()))
    }

    pub fn relay(&self, id: PieceId, to: &str) -> CliResult<Value> {
        let transport = self.transport.clone();
        let peer = self.lock();
        Ok(peer.relay(transport.as_ref(), id, to)?.to_value())
    }

    /// Requests the bundle around `id` from `locator` and gatekeeps it.
    pub fn fetch(&self, id: PieceId, locator: &str) -> CliResult<Value> {
        let transport = self.transport.clone();
        let now = self.now();
        self.mutate(|peer, _| Ok(outcome_value(&peer.fetch(transport.as_ref(), locator, id, now)?)))
    }

    // -- wayfaring ----------------------------------------------------------

    pub fn frontier(&self) -> Value {
        let peer = self.lock();
        let f = frontier(&peer.territory, &self.peers, self.transport.as_ref());
        let mut m = Map::new();
        m.insert("entries".into(), Value::Array(f.entries.iter().map(frontier_entry_value).collect()));
        m.insert("errors".into(), failures_value(&f.errors));
        with_version(m)
    }

    /// Steps onto `remote`, optionally pinning the held piece it hangs off
    /// and the peer to fetch it from.
    pub fn step(&self, remote: PieceId, via: Option<PieceId>, locator: Option<&str>) -> CliResult<Value> {
        let transport = self.transport.clone();
        let now = self.now();
        self.mutate(|peer, _| {
            let f = frontier(&peer.territory, &self.peers, transport.as_ref());
            let entry = f
                .entries
                .iter()
                .find(|e| e.remote == remote && via.is_none_or(|v| e.via == v) && locator.is_none_or(|l| e.locator == l))
                .cloned()
                .ok_or_else(|| CliError::new("NOT_ON_FRONTIER", format!("{remote} is not on the frontier")))?;
            let (rules, cfg) = (peer.rules.clone(), peer.cfg.clone());
            let d = step(&mut peer.territory, &entry, &rules, &cfg, transport.as_ref(), now)?;
            let mut m = match decision_value(&d, &rules) {
                Value::Object(m) => m,
                _ => unreachable!(),
            };
            m.insert("entry".into(), frontier_entry_value(&entry));
            Ok(with_version(m))
        })
    }

    pub fn search(&self, query: &[String]) -> Value {
        let peer = self.lock();
        let out = hybrid_search(&peer.territory, &self.peers, query, &peer.rules, &peer.cfg, self.transport.as_ref());
        let mut m = Map::new();
        match &out.result {
            SearchResult::Served { id, locator, path, piece } => {
                m.insert("id".into(), Value::String(id.to_string()));
                m.insert("locator".into(), locator.clone().map_or(Value::Null, Value::String));
                m.insert("path".into(), ids_value(path.iter().copied()));
                m.insert("piece".into(), piece.as_ref().map_or(Value::Null, piece_to_value));
                m.insert("result".into(), "served".into());
            }
            SearchResult::PathRequired { entries } => {
                m.insert("entries".into(), Value::Array(entries.iter().map(frontier_entry_value).collect()));
                m.insert("result".into(), "path_required".into());
            }
            SearchResult::NoMatch => {
                m.insert("result".into(), "no_match".into());
            }
        }
        m.insert("errors".into(), failures_value(&out.errors));
        with_version(m)
    }

    // -- reward -------------------------------------------------------------

    pub fn trickle(&self, id: PieceId, total: f64, gamma: f64, horizon: usize) -> CliResult<Value> {
        let peer = self.lock();
        let view = IncidenceView::from_territory(&peer.territory);
        Ok(trickle(&view, peer.territory.resolve(id), total, gamma, horizon)?.to_value())
    }

    /// Body: `id`, optional `total` (1), `gamma` (0.5), `horizon` (4).
    pub fn trickle_request(&self, body: &Value) -> CliResult<Value> {
        self.trickle(
            req_id(body, "id")?,
            opt_f64(body, "total")?.unwrap_or(1.0),
            opt_f64(body, "gamma")?.unwrap_or(0.5),
            opt_usize(body, "horizon")?.unwrap_or(4),
        )
    }

    pub fn activity(&self, agent: &AgentId) -> Value {
        let peer = self.lock();
        let view = IncidenceView::from_territory(&peer.territory);
        activity_profile(&view, agent).to_value()
    }

    // -- request bodies used by the service -----------------------------------

    /// Body: `keep`, `absorb`.
    pub fn merge_request(&self, body: &Value) -> CliResult<Value> {
        self.merge(req_id(body, "keep")?, req_id(body, "absorb")?)
    }

    /// Body: optional `code` (default `flagged`) and `agent`.
    pub fn flag_request(&self, id: PieceId, body: &Value) -> CliResult<Value> {
        let code = opt_str(body, "code")?.unwrap_or("flagged");
        let by = opt_str(body, "agent")?.map(parse_agent).transpose()?;
        self.flag(id, code, by)
    }

    /// Body: `remote`, optional `via` and `locator`.
    pub fn step_request(&self, body: &Value) -> CliResult<Value> {
        self.step(req_id(body, "remote")?, opt_id(body, "via")?, opt_str(body, "locator")?)
    }

    /// Body: `id`, `to`, optional `radius` and `offer_id`.
    pub fn offer_request(&self, body: &Value) -> CliResult<Value> {
        self.offer(
            req_id(body, "id")?,
            req_str(body, "to")?,
            opt_usize(body, "radius")?,
            opt_str(body, "offer_id")?.map(str::to_string),
        )
    }

    /// Body: `id`, `to`.
    pub fn relay_request(&self, body: &Value) -> CliResult<Value> {
        self.relay(req_id(body, "id")?, req_str(body, "to")?)
    }

    /// Flushes the territory to its store, if any.
    pub fn flush(&self) -> CliResult<()> {
        let peer = self.lock();
        self.commit(&peer)
    }

    /// Flushes only if the territory or its bookkeeping changed since the
    /// state recorded in `last`.
    pub fn flush_if_changed(&self, last: &mut Vec<u8>) -> CliResult<()> {
        let peer = self.lock();
        let mut now = encode_territory(&peer.territory);
        now.extend(encode_peer_state(&peer));
        if now != *last {
            self.commit(&peer)?;
            *last = now;
        }
        Ok(())
    }
}
