// SPDX-License-Identifier: Apache-2.0

//! Identifiers and instants shared by every module.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, Utc};
use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Identifier of a piece of knowledge. Copies of a piece held by different
/// territories carry the same id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PieceId(u128);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad piece id {0:?}: expected 32 lowercase hex characters")]
pub struct BadPieceId(pub String);

impl PieceId {
    pub const fn from_u128(value: u128) -> Self {
        PieceId(value)
    }

    pub fn as_u128(self) -> u128 {
        self.0
    }

    /// Draws a fresh id from `rng`.
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut bytes = [0u8; 16];
        rng.fill_bytes(&mut bytes);
        PieceId(u128::from_be_bytes(bytes))
    }

    /// Id derived from a namespace tag and a list of byte strings. Used where
    /// the same logical event must always yield the same id (content forks).
    pub fn derived(tag: &str, parts: &[&[u8]]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(tag.as_bytes());
        for part in parts {
            hasher.update((part.len() as u64).to_be_bytes());
            hasher.update(part);
        }
        let digest = hasher.finalize();
        let mut bytes = [0u8; 16];
        bytes.copy_from_slice(&digest[..16]);
        PieceId(u128::from_be_bytes(bytes))
    }
}

impl fmt::Display for PieceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl FromStr for PieceId {
    type Err = BadPieceId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let well_formed =
            s.len() == 32 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        if !well_formed {
            return Err(BadPieceId(s.to_string()));
        }
        u128::from_str_radix(s, 16)
            .map(PieceId)
            .map_err(|_| BadPieceId(s.to_string()))
    }
}

/// An agent: a knowledge producer/consumer, or a community acting through a
/// community server.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId(String);

impl AgentId {
    /// Returns `None` for an empty or all-whitespace name.
    pub fn new(name: impl Into<String>) -> Option<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            None
        } else {
            Some(AgentId(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A UTC instant with whole-second precision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad timestamp {0:?}: expected YYYY-MM-DDTHH:MM:SSZ")]
pub struct BadTimestamp(pub String);

impl Timestamp {
    pub const fn from_unix(secs: i64) -> Self {
        Timestamp(secs)
    }

    pub fn unix(self) -> i64 {
        self.0
    }

    pub fn now() -> Self {
        Timestamp(Utc::now().timestamp())
    }

    pub fn plus_secs(self, secs: i64) -> Self {
        Timestamp(self.0 + secs)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match DateTime::<Utc>::from_timestamp(self.0, 0) {
            Some(dt) => write!(f, "{}", dt.format("%Y-%m-%dT%H:%M:%SZ")),
            None => write!(f, "@{}", self.0),
        }
    }
}

impl FromStr for Timestamp {
    type Err = BadTimestamp;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%SZ")
            .map(|naive| Timestamp(naive.and_utc().timestamp()))
            .map_err(|_| BadTimestamp(s.to_string()))
    }
}
