// SPDX-License-Identifier: Apache-2.0

//! Graph measures over a territory: closeness, areas, depth, utility,
//! implantation, visibility and a 2D topography for display.

mod paths;
mod topography;
mod view;
mod visibility;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::ids::PieceId;
use crate::piece::EdgeKind;

pub use paths::{
    areas, ball, closeness, depth, implantation, incidence_ball, longest_path_from, utility, Direction,
};
pub use topography::{topography, TopoEntry};
pub use view::IncidenceView;
pub use visibility::{visibility, visibility_exact};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeasureError {
    #[error("unknown piece {0}")]
    UnknownPiece(PieceId),
    #[error("view is empty")]
    EmptyView,
    #[error("unknown measure {0:?}")]
    UnknownMeasure(String),
}

impl MeasureError {
    pub fn code(&self) -> &'static str {
        match self {
            MeasureError::UnknownPiece(_) => "UNKNOWN_PIECE",
            MeasureError::EmptyView => "EMPTY_VIEW",
            MeasureError::UnknownMeasure(_) => "UNKNOWN_MEASURE",
        }
    }
}

/// Measure names as they appear in rules, the API and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Measure {
    Depth,
    Utility,
    Implantation,
    Visibility,
    FlagCount,
    Closeness,
}

impl Measure {
    pub const ALL: [Measure; 6] = [
        Measure::Depth,
        Measure::Utility,
        Measure::Implantation,
        Measure::Visibility,
        Measure::FlagCount,
        Measure::Closeness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Depth => "depth",
            Measure::Utility => "utility",
            Measure::Implantation => "implantation",
            Measure::Visibility => "visibility",
            Measure::FlagCount => "flag_count",
            Measure::Closeness => "closeness",
        }
    }

    /// Measures that take a single piece and yield a number.
    pub fn is_unary(self) -> bool {
        self != Measure::Closeness
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = MeasureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Measure::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| MeasureError::UnknownMeasure(s.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureConfig {
    /// Longest path length considered by depth and utility.
    pub horizon: usize,
    pub kind_weights: BTreeMap<EdgeKind, f64>,
    /// Multiplier applied to edges without a label.
    pub label_factor_unlabeled: f64,
    /// Hop distance under which two pieces count as close.
    pub closeness_threshold: usize,
    pub walk_length: usize,
    pub walk_count: usize,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        let kind_weights = [
            (EdgeKind::Answers, 1.0),
            (EdgeKind::Details, 1.0),
            (EdgeKind::Nuances, 1.0),
            (EdgeKind::Questions, 1.0),
            (EdgeKind::Instantiates, 0.9),
            (EdgeKind::Equates, 0.8),
            (EdgeKind::DiffersFrom, 0.8),
            (EdgeKind::Relate, 0.4),
        ]
        .into_iter()
        .collect();
        MeasureConfig {
            horizon: 16,
            kind_weights,
            label_factor_unlabeled: 0.5,
            closeness_threshold: 2,
            walk_length: 4,
            walk_count: 10_000,
        }
    }
}

impl MeasureConfig {
    pub fn kind_weight(&self, kind: EdgeKind) -> f64 {
        self.kind_weights.get(&kind).copied().unwrap_or(0.0)
    }

    /// Checks weights are non-negative and the horizon is at least 1.
    pub fn is_valid(&self) -> bool {
        self.horizon >= 1
            && self.label_factor_unlabeled >= 0.0
            && self.kind_weights.values().all(|w| *w >= 0.0 && w.is_finite())
    }

    pub fn scaled_weights(&self, factor: f64) -> Self {
        let mut cfg = self.clone();
        for w in cfg.kind_weights.values_mut() {
            *w *= factor;
        }
        cfg
    }
}

/// Evaluates a unary measure deterministically (visibility uses the exact
/// evaluation).
pub fn unary(view: &IncidenceView, measure: Measure, id: PieceId, cfg: &MeasureConfig) -> Result<f64, MeasureError> {
    match measure {
        Measure::Depth => depth(view, id, cfg).map(|d| d as f64),
        Measure::Utility => utility(view, id, cfg).map(|d| d as f64),
        Measure::Implantation => implantation(view, id, cfg),
        Measure::Visibility => visibility_exact(view, id, cfg),
        Measure::FlagCount => {
            if view.contains(id) {
                Ok(view.flag_count(id) as f64)
            } else {
                Err(MeasureError::UnknownPiece(id))
            }
        }
        Measure::Closeness => Err(MeasureError::UnknownMeasure("closeness takes two pieces".into())),
    }
}
