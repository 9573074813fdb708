// SPDX-License-Identifier: Apache-2.0

//! Structural findings. These look at kinds, labels and endpoints only,
//! never at what the content says.

use std::fmt;

use crate::ids::PieceId;
use crate::piece::{EdgeKind, PieceKind};
use crate::territory::Territory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FindingCode {
    UnlabeledRelate,
    AnswersNonquestionTarget,
    DanglingEndpoint,
    EmptyContentNode,
}

impl FindingCode {
    pub fn name(self) -> &'static str {
        match self {
            FindingCode::UnlabeledRelate => "UNLABELED_RELATE",
            FindingCode::AnswersNonquestionTarget => "ANSWERS_NONQUESTION_TARGET",
            FindingCode::DanglingEndpoint => "DANGLING_ENDPOINT",
            FindingCode::EmptyContentNode => "EMPTY_CONTENT_NODE",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Warn,
    Error,
}

impl Severity {
    pub fn name(self) -> &'static str {
        match self {
            Severity::Warn => "warn",
            Severity::Error => "error",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct StructuralFinding {
    pub piece: PieceId,
    pub code: FindingCode,
    pub severity: Severity,
}

impl fmt::Display for StructuralFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.piece, self.code.name(), self.severity.name())
    }
}

/// Findings sorted by piece id, then code.
pub fn validate(territory: &Territory) -> Vec<StructuralFinding> {
    let mut findings = Vec::new();
    let mut push = |piece, code, severity| findings.push(StructuralFinding { piece, code, severity });

    for piece in territory.pieces() {
        match piece.kind {
            PieceKind::Edge(kind) => {
                if kind == EdgeKind::Relate && !piece.is_labeled() {
                    push(piece.id, FindingCode::UnlabeledRelate, Severity::Warn);
                }
                if piece.endpoints().any(|e| !territory.contains(e)) {
                    push(piece.id, FindingCode::DanglingEndpoint, Severity::Warn);
                }
                if kind == EdgeKind::Answers {
                    let target = piece.target.and_then(|t| territory.get(t));
                    if target.is_some_and(|t| t.kind != PieceKind::Question) {
                        push(piece.id, FindingCode::AnswersNonquestionTarget, Severity::Error);
                    }
                }
            }
            _ => {
                if piece.content.trim().is_empty() {
                    push(piece.id, FindingCode::EmptyContentNode, Severity::Warn);
                }
            }
        }
    }
    findings.sort();
    findings
}
