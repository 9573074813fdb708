// SPDX-License-Identifier: Apache-2.0

//! A territory directory on disk:
//!
//! ```text
//! <dir>/territory.mmm.json   pieces, local metadata, alias index
//! <dir>/rules.txt            gatekeeper rules, one per line
//! <dir>/config.mmm.json      measure configuration and glue radius
//! <dir>/inbox.mmm.json       inbox, relay notes, sent and handled offers
//! <dir>/.lock                present while a process holds the territory
//! ```

use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use mmm_core::codec::{self, decode_territory, encode_territory, measure_config_from_value, measure_config_value, parse_json};
use mmm_core::gatekeeper::RuleSet;
use mmm_core::measures::MeasureConfig;
use mmm_core::sharing::{decode_peer_state, encode_peer_state, Peer};
use mmm_core::{AgentId, Territory};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub const TERRITORY_FILE: &str = "territory.mmm.json";
pub const RULES_FILE: &str = "rules.txt";
pub const CONFIG_FILE: &str = "config.mmm.json";
pub const STATE_FILE: &str = "inbox.mmm.json";
pub const LOCK_FILE: &str = ".lock";

/// How long to wait for another process to release a territory.
pub const LOCK_WAIT: Duration = Duration::from_secs(10);

#[derive(Clone, Debug)]
pub struct Store {
    dir: PathBuf,
}

/// Removes the lock file when dropped.
#[derive(Debug)]
pub struct LockGuard {
    path: PathBuf,
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub measures: MeasureConfig,
    pub glue_radius: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            measures: MeasureConfig::default(),
            glue_radius: 1,
        }
    }
}

impl Config {
    pub fn to_value(&self) -> Value {
        let mut m = Map::new();
        m.insert("glue_radius".into(), (self.glue_radius as u64).into());
        m.insert("measures".into(), measure_config_value(&self.measures));
        m.insert("mmm_version".into(), codec::MMM_VERSION.into());
        Value::Object(m)
    }

    pub fn from_value(v: &Value) -> CliResult<Config> {
        let obj = v
            .as_object()
            .ok_or_else(|| CliError::new("SCHEMA_VIOLATION", "config must be an object"))?;
        let mut cfg = Config::default();
        for (k, v) in obj {
            match k.as_str() {
                "mmm_version" => {}
                "glue_radius" => {
                    cfg.glue_radius = v
                        .as_u64()
                        .ok_or_else(|| CliError::new("SCHEMA_VIOLATION", "glue_radius must be a count"))?
                        as usize
                }
                "measures" => cfg.measures = measure_config_from_value(v)?,
                other => return Err(CliError::new("UNKNOWN_FIELD", format!("config field {other:?}"))),
            }
        }
        Ok(cfg)
    }
}

/// Whether `path` looks like a territory directory.
pub fn is_territory_dir(path: &Path) -> bool {
    path.join(TERRITORY_FILE).is_file()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Store {
    /// Creates an empty territory owned by `owner`.
    pub fn init(dir: impl Into<PathBuf>, owner: AgentId) -> CliResult<Store> {
        let dir = dir.into();
        if is_territory_dir(&dir) {
            return Err(CliError::new("ALREADY_EXISTS", format!("{} already holds a territory", dir.display())));
        }
        fs::create_dir_all(&dir)?;
        let store = Store { dir };
        let peer = Peer::new(Territory::new(owner), store.address());
        store.save(&peer)?;
        store.write_rules("")?;
        write_atomic(&store.dir.join(CONFIG_FILE), &codec::to_canonical_bytes(&Config::default().to_value()))?;
        Ok(store)
    }

    pub fn open(dir: impl Into<PathBuf>) -> CliResult<Store> {
        let dir = dir.into();
        if !is_territory_dir(&dir) {
            return Err(CliError::new("LOAD_FAILED", format!("{} is not a territory directory", dir.display())));
        }
        Ok(Store { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// The locator other territories use to reach this one.
    pub fn address(&self) -> String {
        fs::canonicalize(&self.dir)
            .unwrap_or_else(|_| self.dir.clone())
            .display()
            .to_string()
    }

    /// Takes the territory lock, waiting up to `wait` for another holder.
    pub fn lock(&self, wait: Duration) -> CliResult<LockGuard> {
        let path = self.dir.join(LOCK_FILE);
        let start = Instant::now();
        loop {
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = writeln!(f, "{}", std::process::id());
                    return Ok(LockGuard { path });
                }
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    if start.elapsed() >= wait {
                        return Err(CliError::new(
                            "LOCKED",
                            format!("{} is locked (remove {} if no process holds it)", self.dir.display(), path.display()),
                        ));
                    }
                    thread::sleep(Duration::from_millis(25));
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn config(&self) -> CliResult<Config> {
        match fs::read(self.dir.join(CONFIG_FILE)) {
            Ok(bytes) => Config::from_value(&parse_json(&bytes)?),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(Config::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn rules(&self) -> CliResult<RuleSet> {
        match fs::read_to_string(self.dir.join(RULES_FILE)) {
            Ok(text) => Ok(RuleSet::parse(&text)?),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(RuleSet::default()),
            Err(e) => Err(e.into()),
        }
    }

    /// Loads the territory with its rules, configuration and bookkeeping.
    pub fn load(&self) -> CliResult<Peer> {
        let bytes = fs::read(self.dir.join(TERRITORY_FILE))
            .map_err(|e| CliError::new("LOAD_FAILED", format!("{}: {e}", self.dir.display())))?;
        let territory = decode_territory(&bytes)?;
        let config = self.config()?;
        let mut peer = Peer::new(territory, self.address()).with_rules(self.rules()?);
        peer.cfg = config.measures;
        peer.glue_radius = config.glue_radius;
        match fs::read(self.dir.join(STATE_FILE)) {
            Ok(bytes) => decode_peer_state(&bytes, &mut peer)?,
            Err(e) if e.kind() == ErrorKind::NotFound => {}
            Err(e) => return Err(e.into()),
        }
        Ok(peer)
    }

    /// Writes territory and bookkeeping back in canonical form.
    pub fn save(&self, peer: &Peer) -> CliResult<()> {
        write_atomic(&self.dir.join(TERRITORY_FILE), &encode_territory(&peer.territory))?;
        write_atomic(&self.dir.join(STATE_FILE), &encode_peer_state(peer))?;
        Ok(())
    }

    /// Stores rule text verbatim, comments included.
    pub fn write_rules(&self, text: &str) -> CliResult<()> {
        write_atomic(&self.dir.join(RULES_FILE), text.as_bytes())
    }
}
