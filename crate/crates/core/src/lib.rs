// SPDX-License-Identifier: Apache-2.0

//! Mutual Mutable Medium: typed, annotatable knowledge graphs held in
//! per-owner territories and shared between them piece by piece.

pub mod codec;
pub mod dedup;
pub mod fixtures;
pub mod gatekeeper;
pub mod ids;
pub mod measures;
pub mod piece;
pub mod reward;
pub mod sharing;
pub mod sim;
pub mod territory;
pub mod validate;
pub mod wayfarer;

pub use ids::{AgentId, PieceId, Timestamp};
pub use piece::{Authorship, EdgeKind, Piece, PieceKind};
pub use territory::{Annotation, CoreError, LocalMeta, NewPiece, Origin, Territory};
