// SPDX-License-Identifier: Apache-2.0

//! Deterministic multi-agent simulation of a commons of territories.
//!
//! Agents act once per tick in id order with a fresh attention budget;
//! unspent attention is lost. Cooperative agents produce, glue and only
//! then share. Free riders share what they produce right away. Relay-only
//! agents pass on identifiers and never content. Every transfer goes
//! through the recipient's gatekeeper over the loopback transport.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::codec::{self, measure_config_from_value, measure_config_value, parse_json, DecodeError, Fields};
use crate::dedup::{detect_duplicates, DEFAULT_TAU};
use crate::gatekeeper::RuleSet;
use crate::ids::{AgentId, PieceId, Timestamp};
use crate::measures::{visibility_exact, IncidenceView, MeasureConfig};
use crate::piece::{EdgeKind, Piece, PieceKind};
use crate::sharing::{make_bundle, LoopbackNetwork, Peer};
use crate::territory::{Annotation, NewPiece, Origin, Territory};

pub const SCENARIO_VERSION: &str = "1.0";

/// Rules cooperative agents use unless the scenario says otherwise: bare,
/// unsupported narratives are refused, everything else is taken.
pub const COOPERATIVE_RULES: &str =
    "reject if kind == narrative and depth(ctx) == 0 and implantation(ctx) < 1.0\naccept if true";
pub const OPEN_RULES: &str = "accept if true";

const SIM_EPOCH: Timestamp = Timestamp::from_unix(1_704_067_200);
const TICK_SECS: i64 = 60;
/// Upper bound on repeated actions per tick when an action costs nothing.
const MAX_ACTIONS: usize = 16;

const WORDS: [&str; 40] = [
    "sky", "blue", "light", "water", "cloud", "rain", "sun", "colour", "wave", "air", "ocean", "scatter", "green",
    "red", "dust", "night", "day", "morning", "storm", "ice", "glass", "prism", "shadow", "heat", "wind", "river",
    "stone", "tree", "leaf", "fire", "moon", "star", "orbit", "tide", "salt", "snow", "fog", "mist", "haze", "dawn",
];
const LABELS: [&str; 8] = ["because", "for example", "in short", "yes", "partly", "see also", "so", "unless"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("bad scenario: {0}")]
    BadScenario(String),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            SimError::BadScenario(_) => "BAD_SCENARIO",
        }
    }
}

impl From<DecodeError> for SimError {
    fn from(e: DecodeError) -> Self {
        SimError::BadScenario(format!("{} ({})", e, e.code()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    Cooperative,
    FreeRider,
    RelayOnly,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Cooperative, Strategy::FreeRider, Strategy::RelayOnly];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Cooperative => "cooperative",
            Strategy::FreeRider => "free_rider",
            Strategy::RelayOnly => "relay_only",
        }
    }

    pub fn from_name(s: &str) -> Option<Strategy> {
        Strategy::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentSpec {
    pub id: AgentId,
    pub strategy: Strategy,
    pub attention_budget_per_tick: u64,
    pub cost_produce: u64,
    pub cost_glue: u64,
    pub cost_annotate: u64,
    pub cost_relay: u64,
    /// Own attention a piece needs before it may be shared; 0 disables.
    pub seasonality_alpha: u64,
    /// Gatekeeper rules; defaults depend on the strategy.
    pub rules: Option<String>,
}

impl AgentSpec {
    pub fn rules_text(&self) -> &str {
        match (&self.rules, self.strategy) {
            (Some(r), _) => r,
            (None, Strategy::Cooperative) => COOPERATIVE_RULES,
            (None, _) => OPEN_RULES,
        }
    }
}

/// At `tick`, every agent deletes the `nth` piece `author` produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Purge {
    pub tick: u64,
    pub author: AgentId,
    pub nth: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub ticks: u64,
    /// Recipients per shared piece.
    pub fanout: usize,
    /// Glue edges a cooperative agent adds to a piece before sharing it.
    pub glue_per_piece: usize,
    pub annotate_probability: f64,
    pub measures: MeasureConfig,
    pub agents: Vec<AgentSpec>,
    pub purges: Vec<Purge>,
}

const AGENT_FIELDS: [&str; 10] = [
    "id",
    "count",
    "strategy",
    "attention_budget_per_tick",
    "cost_produce",
    "cost_glue",
    "cost_annotate",
    "cost_relay",
    "seasonality_alpha",
    "rules",
];

impl Scenario {
    pub fn decode(bytes: &[u8]) -> Result<Self, SimError> {
        Self::from_value(&parse_json(bytes)?)
    }

    /// Reads a scenario document. An agent entry with `count` expands to
    /// `count` agents named `<id>01`, `<id>02`, ...
    pub fn from_value(v: &Value) -> Result<Self, SimError> {
        let f = Fields::of(v, "scenario")?;
        f.closed(&[
            "scenario_version",
            "name",
            "seed",
            "ticks",
            "fanout",
            "glue_per_piece",
            "annotate_probability",
            "measures",
            "agents",
            "purges",
        ])?;
        match f.str("scenario_version")? {
            SCENARIO_VERSION => {}
            other => return Err(DecodeError::UnknownVersion(other.to_string()).into()),
        }
        let opt_u64 = |key: &str, default: u64| -> Result<u64, DecodeError> {
            match f.opt(key) {
                Some(_) => f.u64(key),
                None => Ok(default),
            }
        };
        let measures = match f.opt("measures") {
            Some(m) => measure_config_from_value(m)?,
            None => MeasureConfig::default(),
        };
        let mut agents = Vec::new();
        for a in f.array("agents")? {
            let g = Fields::of(a, "agent")?;
            g.closed(&AGENT_FIELDS)?;
            let strategy_name = g.str("strategy")?;
            let strategy = Strategy::from_name(strategy_name)
                .ok_or_else(|| SimError::BadScenario(format!("unknown strategy {strategy_name:?}")))?;
            let cost = |key: &str| -> Result<u64, DecodeError> {
                match g.opt(key) {
                    Some(_) => g.u64(key),
                    None => Ok(0),
                }
            };
            let base = g.str("id")?;
            let count = match g.opt("count") {
                Some(_) => Some(g.u64("count")? as usize),
                None => None,
            };
            let names: Vec<String> = match count {
                None => vec![base.to_string()],
                Some(n) => (1..=n).map(|i| format!("{base}{i:02}")).collect(),
            };
            let rules = g.opt_str("rules")?.map(str::to_string);
            if let Some(r) = &rules {
                RuleSet::parse(r).map_err(|e| SimError::BadScenario(format!("rules of {base}: {e}")))?;
            }
            for name in names {
                agents.push(AgentSpec {
                    id: AgentId::new(name).ok_or_else(|| SimError::BadScenario("empty agent id".into()))?,
                    strategy,
                    attention_budget_per_tick: g.u64("attention_budget_per_tick")?,
                    cost_produce: cost("cost_produce")?,
                    cost_glue: cost("cost_glue")?,
                    cost_annotate: cost("cost_annotate")?,
                    cost_relay: cost("cost_relay")?,
                    seasonality_alpha: cost("seasonality_alpha")?,
                    rules: rules.clone(),
                });
            }
        }
        let mut purges = Vec::new();
        for p in f.opt_array("purges")?.into_iter().flatten() {
            let g = Fields::of(p, "purge")?;
            g.closed(&["tick", "author", "nth"])?;
            purges.push(Purge {
                tick: g.u64("tick")?,
                author: g.agent("author")?,
                nth: match g.opt("nth") {
                    Some(_) => g.u64("nth")? as usize,
                    None => 0,
                },
            });
        }
        let annotate_probability = match f.opt("annotate_probability") {
            Some(_) => f.f64("annotate_probability")?,
            None => 0.3,
        };
        let scenario = Scenario {
            name: f.opt_str("name")?.unwrap_or("scenario").to_string(),
            seed: opt_u64("seed", 0)?,
            ticks: f.u64("ticks")?,
            fanout: opt_u64("fanout", 2)? as usize,
            glue_per_piece: opt_u64("glue_per_piece", 1)? as usize,
            annotate_probability,
            measures,
            agents,
            purges,
        };
        scenario.check()?;
        Ok(scenario)
    }

    pub fn check(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::BadScenario(m.to_string()));
        if self.agents.len() < 2 {
            return bad("at least two agents are needed");
        }
        let ids: BTreeSet<&AgentId> = self.agents.iter().map(|a| &a.id).collect();
        if ids.len() != self.agents.len() {
            return bad("agent ids must be unique");
        }
        if self.fanout == 0 {
            return bad("fanout must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.annotate_probability) {
            return bad("annotate_probability must lie in [0, 1]");
        }
        if self.ticks > 100_000 {
            return bad("too many ticks");
        }
        if let Some(p) = self.purges.iter().find(|p| !ids.contains(&p.author)) {
            return Err(SimError::BadScenario(format!("purge names unknown agent {}", p.author)));
        }
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        let mut m = Map::new();
        m.insert(
            "agents".into(),
            Value::Array(
                self.agents
                    .iter()
                    .map(|a| {
                        let mut e = Map::new();
                        e.insert("attention_budget_per_tick".into(), a.attention_budget_per_tick.into());
                        e.insert("cost_annotate".into(), a.cost_annotate.into());
                        e.insert("cost_glue".into(), a.cost_glue.into());
                        e.insert("cost_produce".into(), a.cost_produce.into());
                        e.insert("cost_relay".into(), a.cost_relay.into());
                        e.insert("id".into(), a.id.as_str().into());
                        if let Some(r) = &a.rules {
                            e.insert("rules".into(), r.as_str().into());
                        }
                        e.insert("seasonality_alpha".into(), a.seasonality_alpha.into());
                        e.insert("strategy".into(), a.strategy.name().into());
                        Value::Object(e)
                    })
                    .collect(),
            ),
        );
        m.insert("annotate_probability".into(), self.annotate_probability.into());
        m.insert("fanout".into(), (self.fanout as u64).into());
        m.insert("glue_per_piece".into(), (self.glue_per_piece as u64).into());
        m.insert("measures".into(), measure_config_value(&self.measures));
        m.insert("name".into(), self.name.as_str().into());
        m.insert(
            "purges".into(),
            Value::Array(
                self.purges
                    .iter()
                    .map(|p| {
                        let mut e = Map::new();
                        e.insert("author".into(), p.author.as_str().into());
                        e.insert("nth".into(), (p.nth as u64).into());
                        e.insert("tick".into(), p.tick.into());
                        Value::Object(e)
                    })
                    .collect(),
            ),
        );
        m.insert("scenario_version".into(), SCENARIO_VERSION.into());
        m.insert("seed".into(), self.seed.into());
        m.insert("ticks".into(), self.ticks.into());
        Value::Object(m)
    }
}

/// Canonical ids held anywhere, with aliases resolved through every
/// territory's alias index.
pub fn global_union<'a>(territories: impl IntoIterator<Item = &'a Territory>) -> BTreeSet<PieceId> {
    let territories: Vec<&Territory> = territories.into_iter().collect();
    let mut aliases: BTreeMap<PieceId, PieceId> = BTreeMap::new();
    for t in &territories {
        aliases.extend(t.alias_index().iter().map(|(a, k)| (*a, *k)));
    }
    let resolve = |mut id: PieceId| {
        // Each index is flat, so chains across territories are short.
        for _ in 0..=aliases.len() {
            match aliases.get(&id) {
                Some(&next) if next != id => id = next,
                _ => break,
            }
        }
        id
    };
    territories.iter().flat_map(|t| t.ids()).map(resolve).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AgentReport {
    pub id: String,
    pub strategy: &'static str,
    pub attention_spent: u64,
    pub produced: usize,
    pub annotated: usize,
    pub glue_edges: usize,
    /// Distinct pieces offered as bundle roots.
    pub shared: usize,
    /// Shared pieces that had less own attention than the threshold.
    pub shared_below_alpha: usize,
    pub relayed: usize,
    pub held: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioResult {
    pub name: String,
    pub seed: u64,
    pub ticks: u64,
    pub agents: Vec<AgentReport>,
    pub union_size: usize,
    pub mean_visibility: BTreeMap<&'static str, Option<f64>>,
    pub glued_count: usize,
    pub glued_visibility: Option<f64>,
    pub zero_glue_count: usize,
    pub zero_glue_visibility: Option<f64>,
    pub redundancy_ratio: f64,
    /// Pieces no territory holds any more, with the tick they vanished.
    pub extinct: Vec<(PieceId, u64)>,
    pub extinct_in_union: usize,
}

impl ScenarioResult {
    /// Glued pieces are strictly more visible than zero-glue ones. `None`
    /// when either group is empty.
    pub fn glued_beats_zero_glue(&self) -> Option<bool> {
        Some(self.glued_visibility? > self.zero_glue_visibility?)
    }

    /// No agent with a threshold shared a piece below it, or more pieces
    /// than it produced or annotated.
    pub fn seasonality_respected(&self, scenario: &Scenario) -> bool {
        self.agents.iter().zip(&scenario.agents).all(|(r, spec)| {
            spec.seasonality_alpha == 0 || (r.shared_below_alpha == 0 && r.shared <= r.produced + r.annotated)
        })
    }

    pub fn to_value(&self) -> Value {
        let num = |x: Option<f64>| x.map_or(Value::Null, Value::from);
        let mut m = Map::new();
        m.insert(
            "agents".into(),
            Value::Array(
                self.agents
                    .iter()
                    .map(|a| {
                        let mut e = Map::new();
                        e.insert("annotated".into(), (a.annotated as u64).into());
                        e.insert("attention_spent".into(), a.attention_spent.into());
                        e.insert("glue_edges".into(), (a.glue_edges as u64).into());
                        e.insert("held".into(), (a.held as u64).into());
                        e.insert("id".into(), a.id.as_str().into());
                        e.insert("produced".into(), (a.produced as u64).into());
                        e.insert("relayed".into(), (a.relayed as u64).into());
                        e.insert("shared".into(), (a.shared as u64).into());
                        e.insert("shared_below_alpha".into(), (a.shared_below_alpha as u64).into());
                        e.insert("strategy".into(), a.strategy.into());
                        Value::Object(e)
                    })
                    .collect(),
            ),
        );
        m.insert(
            "extinct".into(),
            Value::Array(
                self.extinct
                    .iter()
                    .map(|(id, tick)| {
                        let mut e = Map::new();
                        e.insert("id".into(), id.to_string().into());
                        e.insert("tick".into(), (*tick).into());
                        Value::Object(e)
                    })
                    .collect(),
            ),
        );
        m.insert("extinct_in_union".into(), (self.extinct_in_union as u64).into());
        m.insert("glued_count".into(), (self.glued_count as u64).into());
        m.insert("glued_visibility".into(), num(self.glued_visibility));
        m.insert(
            "mean_visibility".into(),
            Value::Object(
                self.mean_visibility
                    .iter()
                    .map(|(k, v)| (k.to_string(), num(*v)))
                    .collect(),
            ),
        );
        m.insert("mmm_version".into(), codec::MMM_VERSION.into());
        m.insert("name".into(), self.name.as_str().into());
        m.insert("redundancy_ratio".into(), self.redundancy_ratio.into());
        m.insert("seed".into(), self.seed.into());
        m.insert("ticks".into(), self.ticks.into());
        m.insert("union_size".into(), (self.union_size as u64).into());
        m.insert("zero_glue_count".into(), (self.zero_glue_count as u64).into());
        m.insert("zero_glue_visibility".into(), num(self.zero_glue_visibility));
        Value::Object(m)
    }

    pub fn encode(&self) -> Vec<u8> {
        codec::to_canonical_bytes(&self.to_value())
    }

    /// Flat `metric,value` table.
    pub fn to_csv(&self) -> String {
        let fmt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        let mut out = String::from("metric,value\n");
        let mut row = |k: &str, v: String| {
            let _ = writeln!(out, "{k},{v}");
        };
        row("name", self.name.clone());
        row("seed", self.seed.to_string());
        row("ticks", self.ticks.to_string());
        row("union_size", self.union_size.to_string());
        row("redundancy_ratio", self.redundancy_ratio.to_string());
        for (k, v) in &self.mean_visibility {
            row(&format!("mean_visibility.{k}"), fmt(*v));
        }
        row("glued_count", self.glued_count.to_string());
        row("glued_visibility", fmt(self.glued_visibility));
        row("zero_glue_count", self.zero_glue_count.to_string());
        row("zero_glue_visibility", fmt(self.zero_glue_visibility));
        row("extinct", self.extinct.len().to_string());
        row("extinct_in_union", self.extinct_in_union.to_string());
        for a in &self.agents {
            let p = format!("agent.{}", a.id);
            row(&format!("{p}.strategy"), a.strategy.to_string());
            row(&format!("{p}.attention_spent"), a.attention_spent.to_string());
            row(&format!("{p}.produced"), a.produced.to_string());
            row(&format!("{p}.annotated"), a.annotated.to_string());
            row(&format!("{p}.glue_edges"), a.glue_edges.to_string());
            row(&format!("{p}.shared"), a.shared.to_string());
            row(&format!("{p}.shared_below_alpha"), a.shared_below_alpha.to_string());
            row(&format!("{p}.relayed"), a.relayed.to_string());
            row(&format!("{p}.held"), a.held.to_string());
        }
        out
    }
}

struct Agent {
    spec: AgentSpec,
    address: String,
    peer: Arc<Mutex<Peer>>,
    invested: BTreeMap<PieceId, u64>,
    glue: BTreeMap<PieceId, u64>,
    glue_edges: BTreeMap<PieceId, usize>,
    /// Produced or annotated nodes, oldest first.
    own_nodes: Vec<PieceId>,
    produced: Vec<PieceId>,
    shared: BTreeSet<PieceId>,
    report: AgentReport,
}

struct World<'s> {
    scenario: &'s Scenario,
    net: LoopbackNetwork,
    clock: Arc<AtomicI64>,
    agents: Vec<Agent>,
    rng: ChaCha8Rng,
}

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(3..=6);
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).expect("non-empty")).collect();
    words.join(" ")
}

impl World<'_> {
    fn now(&self) -> Timestamp {
        Timestamp::from_unix(self.clock.load(Ordering::SeqCst))
    }

    fn recipients(&mut self, me: usize) -> Vec<String> {
        let mut others: Vec<usize> = (0..self.agents.len()).filter(|&i| i != me).collect();
        others.shuffle(&mut self.rng);
        others
            .into_iter()
            .take(self.scenario.fanout)
            .map(|i| self.agents[i].address.clone())
            .collect()
    }

    fn produce(&mut self, me: usize, kind: PieceKind) -> Option<PieceId> {
        let now = self.now();
        let content = sentence(&mut self.rng);
        let agent = &mut self.agents[me];
        let piece = agent
            .peer
            .lock()
            .expect("peer lock")
            .territory
            .create_piece(NewPiece::node(kind, content), &agent.spec.id, now, &mut self.rng)
            .ok()?;
        agent.invested.insert(piece.id, agent.spec.cost_produce);
        agent.own_nodes.push(piece.id);
        agent.produced.push(piece.id);
        agent.report.produced += 1;
        Some(piece.id)
    }

    /// Shares `id` with `fanout` others; returns false when not permitted.
    fn share(&mut self, me: usize, id: PieceId, radius: usize) -> bool {
        let agent = &self.agents[me];
        let alpha = agent.spec.seasonality_alpha;
        let invested = agent.invested.get(&id).copied().unwrap_or(0);
        if alpha > 0 && invested < alpha {
            return false;
        }
        let bundle = match make_bundle(&agent.peer.lock().expect("peer lock").territory, id, radius) {
            Ok(b) => b,
            Err(_) => return false,
        };
        for to in self.recipients(me) {
            let offer_id = Peer::fresh_offer_id(&mut self.rng);
            // A refused offer is an ordinary outcome of sharing.
            let _ = self.agents[me]
                .peer
                .lock()
                .expect("peer lock")
                .offer(&self.net, &to, &offer_id, bundle.clone());
        }
        let agent = &mut self.agents[me];
        if agent.shared.insert(id) {
            agent.report.shared += 1;
            if invested < alpha {
                agent.report.shared_below_alpha += 1;
            }
        }
        true
    }

    fn fetch_relayed(&mut self, me: usize) {
        let now = self.now();
        let agent = &self.agents[me];
        let mut peer = agent.peer.lock().expect("peer lock");
        let notes = std::mem::take(&mut peer.relays);
        for note in notes {
            if note.locator != agent.address && !peer.territory.contains(note.id) {
                let _ = peer.fetch(&self.net, &note.locator, note.id, now);
            }
        }
    }

    fn cooperative(&mut self, me: usize, budget: u64) -> u64 {
        let spec = self.agents[me].spec.clone();
        let mut spent = 0;
        if budget >= spec.cost_produce {
            let kind = match self.rng.gen_range(0..4) {
                0 | 1 => PieceKind::Narrative,
                2 => PieceKind::Question,
                _ => PieceKind::Existence,
            };
            if self.produce(me, kind).is_some() {
                spent += spec.cost_produce;
            }
        }

        let pending: Vec<PieceId> = {
            let a = &self.agents[me];
            a.own_nodes
                .iter()
                .rev()
                .filter(|id| !a.shared.contains(id))
                .filter(|id| a.glue_edges.get(id).copied().unwrap_or(0) < self.scenario.glue_per_piece)
                .copied()
                .collect()
        };
        'glue: for id in pending {
            let mut actions = 0;
            while self.agents[me].glue_edges.get(&id).copied().unwrap_or(0) < self.scenario.glue_per_piece {
                if spent + spec.cost_glue > budget || actions >= MAX_ACTIONS {
                    break 'glue;
                }
                actions += 1;
                if !self.glue(me, id) {
                    break;
                }
                spent += spec.cost_glue;
            }
        }

        if spent + spec.cost_annotate <= budget && self.rng.gen_bool(self.scenario.annotate_probability) && self.annotate(me) {
            spent += spec.cost_annotate;
        }

        let ready: Vec<PieceId> = {
            let a = &self.agents[me];
            a.own_nodes
                .iter()
                .filter(|id| !a.shared.contains(id))
                .filter(|id| a.glue_edges.get(id).copied().unwrap_or(0) >= self.scenario.glue_per_piece)
                .copied()
                .collect()
        };
        for id in ready {
            self.share(me, id, 1);
        }
        spent
    }

    /// Links `id` to another piece held locally with a labeled edge whose
    /// direction supports `id`.
    fn glue(&mut self, me: usize, id: PieceId) -> bool {
        let now = self.now();
        let agent = &mut self.agents[me];
        let mut peer = agent.peer.lock().expect("peer lock");
        let Some(piece) = peer.territory.get(id).cloned() else {
            return false;
        };
        let others: Vec<&Piece> = peer.territory.pieces().filter(|p| p.id != id && !p.is_edge()).collect();
        let Some(other) = others.choose(&mut self.rng).map(|p| (*p).clone()) else {
            return false;
        };
        let (kind, source, target) = match (piece.kind, other.kind) {
            (PieceKind::Narrative, PieceKind::Question) => (EdgeKind::Answers, id, other.id),
            (PieceKind::Question, PieceKind::Narrative) => (EdgeKind::Answers, other.id, id),
            (PieceKind::Existence, _) => (EdgeKind::Instantiates, other.id, id),
            _ => (EdgeKind::Details, other.id, id),
        };
        let label = *LABELS.choose(&mut self.rng).expect("non-empty");
        let edge = NewPiece::edge(kind, source, target).with_label(label);
        let Ok(edge) = peer.territory.create_piece(edge, &agent.spec.id, now, &mut self.rng) else {
            return false;
        };
        drop(peer);
        let cost = agent.spec.cost_glue;
        *agent.invested.entry(id).or_default() += cost;
        *agent.glue.entry(id).or_default() += cost;
        *agent.glue_edges.entry(id).or_default() += 1;
        agent.invested.insert(edge.id, cost);
        agent.report.glue_edges += 1;
        true
    }

    /// Adds a labeled remark to a piece someone else wrote.
    fn annotate(&mut self, me: usize) -> bool {
        let now = self.now();
        let content = sentence(&mut self.rng);
        let agent = &mut self.agents[me];
        let mut peer = agent.peer.lock().expect("peer lock");
        let foreign: Vec<PieceId> = peer
            .territory
            .pieces()
            .filter(|p| !p.agents().contains(&agent.spec.id))
            .map(|p| p.id)
            .collect();
        let Some(&anchor) = foreign.choose(&mut self.rng) else {
            return false;
        };
        let kind = [EdgeKind::Nuances, EdgeKind::Details, EdgeKind::Questions][self.rng.gen_range(0..3)];
        let label = *LABELS.choose(&mut self.rng).expect("non-empty");
        let Ok((node, _edge)) = peer.territory.annotate(
            Annotation::new(anchor, kind, content).with_label(label),
            &agent.spec.id,
            now,
            &mut self.rng,
        ) else {
            return false;
        };
        drop(peer);
        let cost = agent.spec.cost_annotate;
        agent.invested.insert(node.id, cost);
        agent.glue.insert(node.id, cost);
        agent.glue_edges.insert(node.id, 1);
        agent.own_nodes.push(node.id);
        agent.report.annotated += 1;
        true
    }

    fn free_rider(&mut self, me: usize, budget: u64) -> u64 {
        let cost = self.agents[me].spec.cost_produce;
        let mut spent = 0;
        for _ in 0..MAX_ACTIONS {
            if spent + cost > budget {
                break;
            }
            let Some(id) = self.produce(me, PieceKind::Narrative) else {
                break;
            };
            spent += cost;
            self.share(me, id, 0);
        }
        spent
    }

    fn relay_only(&mut self, me: usize, budget: u64) -> u64 {
        let cost = self.agents[me].spec.cost_relay;
        let mut spent = 0;
        for _ in 0..MAX_ACTIONS {
            if spent + cost > budget {
                break;
            }
            let held: Vec<PieceId> = self.agents[me].peer.lock().expect("peer lock").territory.ids().collect();
            let Some(&id) = held.choose(&mut self.rng) else {
                break;
            };
            let Some(to) = self.recipients(me).into_iter().next() else {
                break;
            };
            let sent = self.agents[me].peer.lock().expect("peer lock").relay(&self.net, id, &to);
            if sent.is_ok() {
                self.agents[me].report.relayed += 1;
            }
            spent += cost;
        }
        spent
    }

    fn purge(&mut self, p: &Purge) {
        let Some(author) = self.agents.iter().find(|a| a.spec.id == p.author) else {
            return;
        };
        let Some(&id) = author.produced.get(p.nth) else {
            return;
        };
        for a in &self.agents {
            let _ = a.peer.lock().expect("peer lock").territory.delete_piece(id);
        }
    }

    fn territories(&self) -> Vec<Territory> {
        self.agents
            .iter()
            .map(|a| a.peer.lock().expect("peer lock").territory.clone())
            .collect()
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Runs `scenario` with `seed` (overriding the scenario's own seed).
pub fn run_scenario(scenario: &Scenario, seed: u64) -> Result<ScenarioResult, SimError> {
    scenario.check()?;
    let mut specs = scenario.agents.clone();
    specs.sort_by(|a, b| a.id.cmp(&b.id));
    let clock = Arc::new(AtomicI64::new(SIM_EPOCH.unix()));
    let net = {
        let clock = clock.clone();
        LoopbackNetwork::with_clock(move || Timestamp::from_unix(clock.load(Ordering::SeqCst)))
    };
    let mut agents = Vec::new();
    for spec in specs {
        let rules = RuleSet::parse(spec.rules_text()).map_err(|e| SimError::BadScenario(e.to_string()))?;
        let address = format!("sim/{}", spec.id);
        let mut peer = Peer::new(Territory::new(spec.id.clone()), address.clone()).with_rules(rules);
        peer.cfg = scenario.measures.clone();
        let report = AgentReport {
            id: spec.id.to_string(),
            strategy: spec.strategy.name(),
            ..AgentReport::default()
        };
        agents.push(Agent {
            peer: net.add(peer),
            address,
            spec,
            invested: BTreeMap::new(),
            glue: BTreeMap::new(),
            glue_edges: BTreeMap::new(),
            own_nodes: Vec::new(),
            produced: Vec::new(),
            shared: BTreeSet::new(),
            report,
        });
    }
    let mut world = World {
        scenario,
        net,
        clock,
        agents,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };

    let mut ever: BTreeSet<PieceId> = BTreeSet::new();
    let mut extinct: Vec<(PieceId, u64)> = Vec::new();
    for tick in 0..scenario.ticks {
        world
            .clock
            .store(SIM_EPOCH.plus_secs(tick as i64 * TICK_SECS).unix(), Ordering::SeqCst);
        for p in scenario.purges.iter().filter(|p| p.tick == tick) {
            world.purge(p);
        }
        for me in 0..world.agents.len() {
            world.fetch_relayed(me);
            let budget = world.agents[me].spec.attention_budget_per_tick;
            let spent = match world.agents[me].spec.strategy {
                Strategy::Cooperative => world.cooperative(me, budget),
                Strategy::FreeRider => world.free_rider(me, budget),
                Strategy::RelayOnly => world.relay_only(me, budget),
            };
            world.agents[me].report.attention_spent += spent;
        }
        let union = global_union(&world.territories());
        let known: BTreeSet<PieceId> = extinct.iter().map(|(id, _)| *id).collect();
        for id in ever.difference(&union) {
            if !known.contains(id) {
                extinct.push((*id, tick));
            }
        }
        ever.extend(union);
    }

    let territories = world.territories();
    let union = global_union(&territories);
    let mut union_pieces: BTreeMap<PieceId, Piece> = BTreeMap::new();
    for t in &territories {
        for p in t.pieces() {
            union_pieces.entry(p.id).or_insert_with(|| p.clone());
        }
    }
    let view = IncidenceView::build(union_pieces.values().cloned(), |id| id, |_| 0);
    let vis = |id: PieceId| visibility_exact(&view, id, &scenario.measures).ok();

    let mut by_strategy: BTreeMap<&'static str, Vec<f64>> = Strategy::ALL.iter().map(|s| (s.name(), Vec::new())).collect();
    let (mut glued, mut bare) = (Vec::new(), Vec::new());
    for a in &world.agents {
        for &id in &a.own_nodes {
            let Some(v) = vis(id) else { continue };
            by_strategy.get_mut(a.spec.strategy.name()).expect("all strategies").push(v);
            if a.shared.contains(&id) {
                if a.glue.get(&id).copied().unwrap_or(0) > 0 {
                    glued.push(v);
                } else {
                    bare.push(v);
                }
            }
        }
    }

    let mut pooled = Territory::new(AgentId::new("commons").expect("non-empty"));
    for p in union_pieces.values() {
        pooled.apply_incoming(p, Origin::Authored, SIM_EPOCH);
    }
    let redundancy_ratio = if union.is_empty() {
        0.0
    } else {
        detect_duplicates(&pooled, DEFAULT_TAU).len() as f64 / union.len() as f64
    };

    let agents = world
        .agents
        .iter()
        .zip(&territories)
        .map(|(a, t)| AgentReport {
            held: t.len(),
            ..a.report.clone()
        })
        .collect();
    Ok(ScenarioResult {
        name: scenario.name.clone(),
        seed,
        ticks: scenario.ticks,
        agents,
        union_size: union.len(),
        mean_visibility: by_strategy.iter().map(|(k, v)| (*k, mean(v))).collect(),
        glued_count: glued.len(),
        glued_visibility: mean(&glued),
        zero_glue_count: bare.len(),
        zero_glue_visibility: mean(&bare),
        redundancy_ratio,
        extinct_in_union: extinct.iter().filter(|(id, _)| union.contains(id)).count(),
        extinct,
    })
}
