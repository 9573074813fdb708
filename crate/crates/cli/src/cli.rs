// SPDX-License-Identifier: Apache-2.0

//! The `mmm` command line. Territory commands take the territory directory
//! as their first argument.

use std::ffi::OsString;
use std::io::{self, Read, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use mmm_core::codec::MMM_VERSION;
use mmm_core::dedup::DEFAULT_TAU;
use mmm_core::sim::{run_scenario, Scenario};
use mmm_core::validate::{validate, Severity};
use mmm_core::{AgentId, PieceId};
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::service;
use crate::session::{clock_from_env, render, rng_from_env, LocatorTransport, Session};
use crate::store::{Store, LOCK_WAIT};

#[derive(Debug, Parser)]
#[command(name = "mmm", version, about = "A mutual mutable medium: territories of pieces, shared peer to peer")]
pub struct Cli {
    /// Peer locators (territory directories or host:port), comma separated.
    #[arg(long, global = true, env = "MMM_PEERS", value_delimiter = ',')]
    pub peers: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create an empty territory.
    Init {
        territory: PathBuf,
        #[arg(long, env = "MMM_OWNER", default_value = "owner")]
        owner: String,
    },
    /// Add a node piece.
    Add {
        territory: PathBuf,
        /// Node kind: narrative, question or existence.
        kind: String,
        content: String,
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        author: Option<String>,
    },
    /// Add an edge piece between two held pieces.
    Link {
        territory: PathBuf,
        /// Edge kind, e.g. answers, differsFrom.
        kind: String,
        source: PieceId,
        target: PieceId,
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        reverse_label: Option<String>,
        #[arg(long)]
        author: Option<String>,
    },
    /// Attach a new node to an existing piece through a new edge.
    Annotate {
        territory: PathBuf,
        anchor: PieceId,
        edge_kind: String,
        content: String,
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        node_kind: Option<String>,
        #[arg(long)]
        author: Option<String>,
    },
    /// Make a piece public. Irrevocable; repeating it is a no-op.
    Public { territory: PathBuf, id: PieceId },
    /// Delete a piece from this territory. Copies held elsewhere are unaffected.
    Delete { territory: PathBuf, id: PieceId },
    /// Red-flag a piece.
    Flag {
        territory: PathBuf,
        id: PieceId,
        #[arg(long, default_value = "flagged")]
        code: String,
        #[arg(long)]
        by: Option<String>,
    },
    /// Print structural findings; fails if any is an error.
    Validate { territory: PathBuf },
    /// Print measures of a piece.
    Measure {
        territory: PathBuf,
        id: PieceId,
        /// Measure names (default: depth).
        names: Vec<String>,
        /// Second piece for closeness.
        #[arg(long)]
        to: Option<PieceId>,
        /// Estimate visibility by sampling walks.
        #[arg(long)]
        sampled: bool,
        #[arg(long)]
        json: bool,
    },
    /// Print a 2D layout with heights as CSV.
    Topo {
        territory: PathBuf,
        #[arg(long, default_value = "depth")]
        measure: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Print likely duplicate pairs as CSV.
    Dup {
        territory: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long)]
        json: bool,
    },
    /// Merge `absorb` into `keep`.
    Merge { territory: PathBuf, keep: PieceId, absorb: PieceId },
    /// Show, replace or check gatekeeper rules.
    Rules {
        #[command(subcommand)]
        action: RulesAction,
    },
    /// Serve the HTTP API, and optionally the peer protocol.
    Serve {
        #[arg(required_unless_present = "territory_flag")]
        territory: Option<PathBuf>,
        #[arg(long = "territory", value_name = "TERRITORY", conflicts_with = "territory")]
        territory_flag: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Also answer the peer protocol on this address.
        #[arg(long)]
        listen: Option<SocketAddr>,
    },
    /// Offer a piece and its glue to a peer.
    Offer {
        territory: PathBuf,
        id: PieceId,
        #[arg(long)]
        to: String,
        #[arg(long)]
        radius: Option<usize>,
        #[arg(long)]
        offer_id: Option<String>,
    },
    /// List quarantined offers and relay notes.
    Inbox { territory: PathBuf },
    /// Accept a quarantined offer.
    Accept { territory: PathBuf, offer_id: String },
    /// Reject a quarantined offer.
    Reject { territory: PathBuf, offer_id: String },
    /// Tell a peer where a piece can be fetched.
    Relay {
        territory: PathBuf,
        id: PieceId,
        #[arg(long)]
        to: String,
    },
    /// Fetch a piece and its glue from a peer, through the gatekeeper.
    Fetch {
        territory: PathBuf,
        id: PieceId,
        #[arg(long)]
        from: String,
    },
    /// List remote pieces one hop from held pieces.
    Frontier { territory: PathBuf },
    /// Step onto a frontier piece.
    Step {
        territory: PathBuf,
        remote: PieceId,
        #[arg(long)]
        via: Option<PieceId>,
        #[arg(long)]
        locator: Option<String>,
    },
    /// Search held and frontier pieces.
    Search {
        territory: PathBuf,
        #[arg(required = true)]
        terms: Vec<String>,
    },
    /// Distribute a reward backwards from a piece.
    Trickle {
        territory: PathBuf,
        id: PieceId,
        #[arg(long, default_value_t = 1.0)]
        total: f64,
        #[arg(long, default_value_t = 0.5)]
        gamma: f64,
        #[arg(long, default_value_t = 4)]
        horizon: usize,
    },
    /// Summarise an agent's contributions.
    Activity { territory: PathBuf, agent: String },
    /// Run commons simulations.
    Sim {
        #[command(subcommand)]
        action: SimAction,
    },
    /// Import an MMM-JSON document (file or `-` for stdin).
    Import { territory: PathBuf, file: PathBuf },
    /// Export held pieces as an MMM-JSON document.
    Export {
        territory: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum RulesAction {
    /// Print the rules file.
    Get { territory: PathBuf },
    /// Replace the rules with a file (or `-` for stdin).
    Set { territory: PathBuf, file: PathBuf },
    /// Parse a rules file without installing it.
    Check { file: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum SimAction {
    /// Run a scenario file.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Print the full result document instead of CSV.
        #[arg(long)]
        json: bool,
    },
}

fn read_input(path: &PathBuf) -> CliResult<Vec<u8>> {
    if path.as_os_str() == "-" {
        let mut buf = Vec::new();
        io::stdin().read_to_end(&mut buf)?;
        Ok(buf)
    } else {
        std::fs::read(path).map_err(|e| CliError::new("IO_ERROR", format!("{}: {e}", path.display())))
    }
}

fn text(bytes: Vec<u8>) -> CliResult<String> {
    String::from_utf8(bytes).map_err(|_| CliError::bad_request("input must be UTF-8"))
}

fn agent(s: Option<String>) -> CliResult<Option<AgentId>> {
    s.map(|s| crate::session::parse_agent(&s)).transpose()
}

fn number(v: &Value) -> String {
    match v {
        Value::Null => "none".to_string(),
        other => other.to_string(),
    }
}

/// What a command produced.
enum Output {
    Json(Value),
    Text(String),
    Bytes(Vec<u8>),
}

fn csv<const N: usize>(header: [&str; N], rows: &[Value], fields: [&str; N]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = fields
            .iter()
            .map(|f| match &row[*f] {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Commands that need no territory.
fn run_standalone(cmd: &Command) -> Option<CliResult<Output>> {
    match cmd {
        Command::Init { territory, owner } => Some((|| {
            let owner = crate::session::parse_agent(owner)?;
            let store = Store::init(territory, owner)?;
            Ok(Output::Json(json!({"dir": store.address(), "mmm_version": MMM_VERSION})))
        })()),
        Command::Sim {
            action: SimAction::Run { scenario, seed, json },
        } => Some((|| {
            let s = Scenario::decode(&read_input(scenario)?)?;
            let result = run_scenario(&s, seed.unwrap_or(s.seed))?;
            Ok(if *json { Output::Bytes(result.encode()) } else { Output::Text(result.to_csv()) })
        })()),
        Command::Rules {
            action: RulesAction::Check { file },
        } => Some((|| {
            let rules = mmm_core::gatekeeper::RuleSet::parse(&text(read_input(file)?)?)?;
            Ok(Output::Json(json!({"mmm_version": MMM_VERSION, "rules": rules.len()})))
        })()),
        _ => None,
    }
}

fn run_with_session(cmd: Command, s: &Session) -> CliResult<Output> {
    use Output::*;
    Ok(match cmd {
        Command::Add { kind, content, label, author, .. } => Json(s.create(&json!({
            "kind": kind, "content": content, "label": label, "author": author,
        }))?),
        Command::Link { kind, source, target, label, reverse_label, author, .. } => Json(s.create(&json!({
            "kind": kind, "source": source.to_string(), "target": target.to_string(),
            "label": label, "reverse_label": reverse_label, "author": author,
        }))?),
        Command::Annotate { anchor, edge_kind, content, label, node_kind, author, .. } => Json(s.annotate(&json!({
            "anchor": anchor.to_string(), "edge_kind": edge_kind, "content": content,
            "label": label, "node_kind": node_kind, "author": author,
        }))?),
        Command::Public { id, .. } => Json(s.set_public(id)?),
        Command::Delete { id, .. } => Json(s.delete(id)?),
        Command::Flag { id, code, by, .. } => Json(s.flag(id, &code, agent(by)?)?),
        Command::Validate { .. } => {
            let findings = {
                let peer = s.peer.lock().unwrap_or_else(|p| p.into_inner());
                validate(&peer.territory)
            };
            let mut out = String::new();
            for f in &findings {
                out.push_str(&f.to_string());
                out.push('\n');
            }
            let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
            if errors > 0 {
                io::stdout().write_all(out.as_bytes())?;
                return Err(CliError::new("INVALID_TERRITORY", format!("{errors} structural error(s)")));
            }
            Text(out)
        }
        Command::Measure { id, mut names, to, sampled, json, .. } => {
            if names.is_empty() {
                names.push("depth".into());
            }
            let v = s.measures(id, &names, to, sampled)?;
            match v["measures"].as_object() {
                Some(m) if !json && m.len() == 1 => Text(format!("{}\n", number(m.values().next().unwrap()))),
                _ if !json => {
                    let mut out = String::new();
                    for (k, v) in v["measures"].as_object().into_iter().flatten() {
                        out.push_str(&format!("{k}\t{}\n", number(v)));
                    }
                    Text(out)
                }
                _ => Json(v),
            }
        }
        Command::Topo { measure, seed, json, .. } => {
            let v = s.topography(&measure, seed)?;
            if json {
                Json(v)
            } else {
                Text(csv(["id", "x", "y", "height"], v["entries"].as_array().unwrap(), ["id", "x", "y", "height"]))
            }
        }
        Command::Dup { tau, json, .. } => {
            let v = s.duplicates(tau)?;
            if json {
                Json(v)
            } else {
                Text(csv(["a", "b", "similarity"], v["pairs"].as_array().unwrap(), ["a", "b", "similarity"]))
            }
        }
        Command::Merge { keep, absorb, .. } => Json(s.merge(keep, absorb)?),
        Command::Rules { action: RulesAction::Get { .. } } => Text(s.rules_text()),
        Command::Rules { action: RulesAction::Set { file, .. } } => Json(s.set_rules(&text(read_input(&file)?)?)?),
        Command::Offer { id, to, radius, offer_id, .. } => Json(s.offer(id, &to, radius, offer_id)?),
        Command::Inbox { .. } => Json(s.inbox()),
        Command::Accept { offer_id, .. } => Json(s.settle(&offer_id, true)?),
        Command::Reject { offer_id, .. } => Json(s.settle(&offer_id, false)?),
        Command::Relay { id, to, .. } => Json(s.relay(id, &to)?),
        Command::Fetch { id, from, .. } => Json(s.fetch(id, &from)?),
        Command::Frontier { .. } => Json(s.frontier()),
        Command::Step { remote, via, locator, .. } => Json(s.step(remote, via, locator.as_deref())?),
        Command::Search { terms, .. } => Json(s.search(&terms)),
        Command::Trickle { id, total, gamma, horizon, .. } => Json(s.trickle(id, total, gamma, horizon)?),
        Command::Activity { agent, .. } => Json(s.activity(&crate::session::parse_agent(&agent)?)),
        Command::Import { file, .. } => Json(s.import(&read_input(&file)?)?),
        Command::Export { out, .. } => {
            let bytes = s.export();
            match out {
                Some(path) => {
                    std::fs::write(&path, &bytes)?;
                    Text(String::new())
                }
                None => Bytes(bytes),
            }
        }
        Command::Init { .. } | Command::Sim { .. } | Command::Serve { .. } | Command::Rules { .. } => {
            unreachable!("handled before a session is opened")
        }
    })
}

impl Command {
    /// The territory a command works on, if any.
    fn territory(&self) -> Option<&PathBuf> {
        use Command::*;
        match self {
            Add { territory, .. }
            | Link { territory, .. }
            | Annotate { territory, .. }
            | Public { territory, .. }
            | Delete { territory, .. }
            | Flag { territory, .. }
            | Validate { territory }
            | Measure { territory, .. }
            | Topo { territory, .. }
            | Dup { territory, .. }
            | Merge { territory, .. }
            | Offer { territory, .. }
            | Inbox { territory }
            | Accept { territory, .. }
            | Reject { territory, .. }
            | Relay { territory, .. }
            | Fetch { territory, .. }
            | Frontier { territory }
            | Step { territory, .. }
            | Search { territory, .. }
            | Trickle { territory, .. }
            | Activity { territory, .. }
            | Import { territory, .. }
            | Export { territory, .. }
            | Rules { action: RulesAction::Get { territory } | RulesAction::Set { territory, .. } } => Some(territory),
            Serve { territory, territory_flag, .. } => territory.as_ref().or(territory_flag.as_ref()),
            Init { .. } | Sim { .. } | Rules { action: RulesAction::Check { .. } } => None,
        }
    }
}

fn execute(cli: Cli) -> CliResult<Output> {
    if let Some(out) = run_standalone(&cli.command) {
        return out;
    }
    let dir = cli
        .command
        .territory()
        .ok_or_else(|| CliError::new("USAGE", "a territory directory is required"))?;
    let store = Store::open(dir)?;
    let _lock = store.lock(LOCK_WAIT)?;
    let peer = store.load()?;
    let clock = clock_from_env();
    let rng = rng_from_env(peer.owner());
    let transport = LocatorTransport::new(clock.clone()).from_dir(store.address());
    let session = Session::new(peer, Arc::new(transport), cli.peers, rng, clock).persistent(store);
    if let Command::Serve { bind, listen, .. } = cli.command {
        service::serve(session, bind, listen)?;
        return Ok(Output::Text(String::new()));
    }
    run_with_session(cli.command, &session)
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 on a domain error, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = execute(cli).and_then(|out| {
        let mut stdout = io::stdout().lock();
        match out {
            Output::Json(v) => stdout.write_all(&render(&v))?,
            Output::Text(t) => stdout.write_all(t.as_bytes())?,
            Output::Bytes(b) => stdout.write_all(&b)?,
        }
        stdout.flush()?;
        Ok(())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
