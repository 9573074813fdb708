// SPDX-License-Identifier: Apache-2.0

//! Authorship rewards: trickling a total back along contribution paths,
//! and activity counts per producer.

use std::collections::{BTreeMap, VecDeque};

use serde_json::{Map, Value};
use thiserror::Error;

use crate::codec::MMM_VERSION;
use crate::ids::{AgentId, PieceId};
use crate::measures::IncidenceView;
use crate::piece::{EdgeKind, PieceKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("unknown piece {0}")]
    UnknownPiece(PieceId),
    #[error("total must be a non-negative number, got {0}")]
    NegativeTotal(f64),
    #[error("gamma must lie in (0, 1), got {0}")]
    InvalidGamma(f64),
}

impl RewardError {
    pub fn code(&self) -> &'static str {
        match self {
            RewardError::UnknownPiece(_) => "UNKNOWN_PIECE",
            RewardError::NegativeTotal(_) => "NEGATIVE_TOTAL",
            RewardError::InvalidGamma(_) => "INVALID_GAMMA",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Contribution {
    pub id: PieceId,
    pub distance: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardDistribution {
    pub total: f64,
    pub shares: BTreeMap<AgentId, f64>,
    /// Every contributing piece in BFS order with its raw weight.
    pub contributions: Vec<Contribution>,
}

impl RewardDistribution {
    pub fn to_value(&self) -> Value {
        let mut m = Map::new();
        m.insert(
            "contributions".into(),
            Value::Array(
                self.contributions
                    .iter()
                    .map(|c| {
                        let mut e = Map::new();
                        e.insert("distance".into(), Value::from(c.distance as u64));
                        e.insert("id".into(), Value::String(c.id.to_string()));
                        e.insert("weight".into(), Value::from(c.weight));
                        Value::Object(e)
                    })
                    .collect(),
            ),
        );
        m.insert("mmm_version".into(), Value::String(MMM_VERSION.into()));
        m.insert(
            "shares".into(),
            Value::Object(
                self.shares
                    .iter()
                    .map(|(a, s)| (a.as_str().to_string(), Value::from(*s)))
                    .collect(),
            ),
        );
        m.insert("total".into(), Value::from(self.total));
        Value::Object(m)
    }
}

/// Distributes `total` over the authors of `k` and of everything `k` built
/// on. A step backward goes from a piece to an edge-piece targeting it, and
/// from an edge-piece to its source. Each piece counts once, at its nearest
/// distance `d <= horizon`, with weight `gamma^d` split evenly among its
/// agents.
pub fn trickle(
    view: &IncidenceView,
    k: PieceId,
    total: f64,
    gamma: f64,
    horizon: usize,
) -> Result<RewardDistribution, RewardError> {
    if !(total.is_finite() && total >= 0.0) {
        return Err(RewardError::NegativeTotal(total));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(RewardError::InvalidGamma(gamma));
    }
    let start = view.vertex(k).ok_or(RewardError::UnknownPiece(k))?;

    let mut dist = vec![usize::MAX; view.len()];
    dist[start] = 0;
    let mut order = vec![start];
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        if dist[v] == horizon {
            continue;
        }
        let back: Vec<usize> = match view.endpoints[v] {
            (Some(source), _) if view.pieces[v].kind.is_edge() => vec![source],
            _ => view.incoming_edges[v].clone(),
        };
        for u in back {
            if dist[u] == usize::MAX {
                dist[u] = dist[v] + 1;
                order.push(u);
                queue.push_back(u);
            }
        }
    }

    let mut raw: BTreeMap<AgentId, f64> = BTreeMap::new();
    let mut contributions = Vec::with_capacity(order.len());
    for &v in &order {
        let weight = gamma.powi(dist[v] as i32);
        let agents = view.pieces[v].agents();
        for a in &agents {
            *raw.entry(a.clone()).or_default() += weight / agents.len() as f64;
        }
        contributions.push(Contribution {
            id: view.id_of(v),
            distance: dist[v],
            weight,
        });
    }
    let sum: f64 = raw.values().sum();
    let mut shares: BTreeMap<AgentId, f64> = raw.into_iter().map(|(a, w)| (a, total * w / sum)).collect();
    // Push rounding residue onto the largest share so the sum is exact.
    let residue = total - shares.values().sum::<f64>();
    if let Some(largest) = shares
        .values_mut()
        .max_by(|a, b| a.partial_cmp(b).expect("finite shares"))
    {
        *largest = (*largest + residue).max(0.0);
    }
    Ok(RewardDistribution {
        total,
        shares,
        contributions,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ActivityProfile {
    pub agent: Option<AgentId>,
    pub questions_answered_by_others: usize,
    pub glue_authored: usize,
    pub bridges_authored: usize,
}

impl ActivityProfile {
    pub fn to_value(&self) -> Value {
        let mut m = Map::new();
        m.insert(
            "agent".into(),
            self.agent
                .as_ref()
                .map_or(Value::Null, |a| Value::String(a.as_str().to_string())),
        );
        m.insert("bridges_authored".into(), Value::from(self.bridges_authored as u64));
        m.insert("glue_authored".into(), Value::from(self.glue_authored as u64));
        m.insert("mmm_version".into(), Value::String(MMM_VERSION.into()));
        m.insert(
            "questions_answered_by_others".into(),
            Value::from(self.questions_answered_by_others as u64),
        );
        Value::Object(m)
    }
}

pub fn activity_profile(view: &IncidenceView, agent: &AgentId) -> ActivityProfile {
    let authored = |v: usize| view.pieces[v].agents().contains(agent);
    let mut profile = ActivityProfile {
        agent: Some(agent.clone()),
        ..ActivityProfile::default()
    };
    for v in 0..view.len() {
        if !authored(v) {
            continue;
        }
        let piece = &view.pieces[v];
        if piece.kind == PieceKind::Question {
            let answered = view.incoming_edges[v].iter().any(|&e| {
                view.pieces[e].kind == PieceKind::Edge(EdgeKind::Answers)
                    && view.pieces[e].agents().iter().any(|a| a != agent)
            });
            if answered {
                profile.questions_answered_by_others += 1;
            }
        }
        if piece.kind.is_edge() {
            profile.glue_authored += 1;
            if is_bridge(view, v) {
                profile.bridges_authored += 1;
            }
        }
    }
    profile
}

/// Would removing edge-piece `e` leave its two endpoints in different
/// components?
pub(crate) fn is_bridge(view: &IncidenceView, e: usize) -> bool {
    let (Some(a), Some(b)) = view.endpoints[e] else {
        return false;
    };
    if a == b {
        return false;
    }
    let mut seen = vec![false; view.len()];
    seen[e] = true;
    seen[a] = true;
    let mut queue = VecDeque::from([a]);
    while let Some(v) = queue.pop_front() {
        if v == b {
            return false;
        }
        for &u in &view.incidence[v] {
            if !seen[u] {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    true
}

/// Bridge edge-pieces in the view, by id.
pub fn bridges(view: &IncidenceView) -> Vec<PieceId> {
    (0..view.len())
        .filter(|&v| view.pieces[v].kind.is_edge() && is_bridge(view, v))
        .map(|v| view.id_of(v))
        .collect()
}
