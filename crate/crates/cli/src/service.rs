// SPDX-License-Identifier: Apache-2.0

//! HTTP API over a [`Session`]. Bodies and responses are JSON except the
//! rules endpoints, which speak plain text.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use mmm_core::sharing::spawn_peer_server;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};
use crate::session::{parse_agent, parse_id, render, Session};

type Shared = Arc<Session>;

const FLUSH_EVERY: std::time::Duration = std::time::Duration::from_secs(1);
type Params = Query<HashMap<String, String>>;

impl IntoResponse for CliError {
    fn into_response(self) -> Response {
        let status = match self.code.as_str() {
            "UNKNOWN_PIECE" | "NOT_FOUND" | "UNKNOWN_OFFER" | "UNKNOWN_AGENT" => StatusCode::NOT_FOUND,
            "BAD_REQUEST" | "BAD_ID_FORMAT" | "SYNTAX_ERROR" | "INVALID_JSON" | "UNKNOWN_FIELD" => {
                StatusCode::BAD_REQUEST
            }
            "PEER_UNREACHABLE" => StatusCode::BAD_GATEWAY,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (status, json_body(&body)).into_response()
    }
}

fn json_body(v: &Value) -> ([(header::HeaderName, &'static str); 1], Vec<u8>) {
    ([(header::CONTENT_TYPE, "application/json")], render(v))
}

fn ok(v: Value) -> Response {
    json_body(&v).into_response()
}

fn created(v: Value) -> Response {
    (StatusCode::CREATED, json_body(&v)).into_response()
}

fn parse_body(bytes: &Bytes) -> CliResult<Value> {
    if bytes.is_empty() {
        return Ok(Value::Object(Default::default()));
    }
    serde_json::from_slice(bytes).map_err(|e| CliError::new("INVALID_JSON", e.to_string()))
}

/// Runs a session call off the async executor; sharing calls may block on
/// network or file locks.
async fn blocking<F>(s: Shared, f: F) -> Response
where
    F: FnOnce(&Session) -> CliResult<Response> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&s)).await {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => e.into_response(),
        Err(e) => CliError::new("INTERNAL", e.to_string()).into_response(),
    }
}

async fn list_pieces(State(s): State<Shared>) -> Response {
    blocking(s, |s| Ok(ok(s.pieces()))).await
}

async fn get_piece(State(s): State<Shared>, Path(id): Path<String>) -> Response {
    blocking(s, move |s| Ok(ok(s.piece(parse_id(&id)?)?))).await
}

async fn create_piece(State(s): State<Shared>, body: Bytes) -> Response {
    blocking(s, move |s| Ok(created(s.create(&parse_body(&body)?)?))).await
}

async fn annotate(State(s): State<Shared>, body: Bytes) -> Response {
    blocking(s, move |s| Ok(created(s.annotate(&parse_body(&body)?)?))).await
}

async fn set_public(State(s): State<Shared>, Path(id): Path<String>) -> Response {
    blocking(s, move |s| Ok(ok(s.set_public(parse_id(&id)?)?))).await
}

async fn delete_piece(State(s): State<Shared>, Path(id): Path<String>) -> Response {
    blocking(s, move |s| Ok(ok(s.delete(parse_id(&id)?)?))).await
}

async fn flag(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> Response {
    blocking(s, move |s| Ok(ok(s.flag_request(parse_id(&id)?, &parse_body(&body)?)?))).await
}

async fn findings(State(s): State<Shared>) -> Response {
    blocking(s, |s| Ok(ok(s.findings()))).await
}

async fn measures(State(s): State<Shared>, Path(id): Path<String>, Query(q): Params) -> Response {
    blocking(s, move |s| {
        let names: Vec<String> = q
            .get("names")
            .map(String::as_str)
            .unwrap_or("depth,utility,implantation,visibility")
            .split(',')
            .map(|n| n.trim().to_string())
            .filter(|n| !n.is_empty())
            .collect();
        let to = q.get("to").map(|t| parse_id(t)).transpose()?;
        let sampled = q.get("sampled").is_some_and(|v| v == "true" || v == "1");
        Ok(ok(s.measures(parse_id(&id)?, &names, to, sampled)?))
    })
    .await
}

async fn topography(State(s): State<Shared>, Query(q): Params) -> Response {
    blocking(s, move |s| {
        let measure = q.get("measure").map(String::as_str).unwrap_or("depth");
        let seed = match q.get("seed") {
            Some(v) => v.parse().map_err(|_| CliError::bad_request("seed must be an integer"))?,
            None => 0,
        };
        Ok(ok(s.topography(measure, seed)?))
    })
    .await
}

async fn duplicates(State(s): State<Shared>, Query(q): Params) -> Response {
    blocking(s, move |s| {
        let tau = match q.get("tau") {
            Some(v) => v.parse().map_err(|_| CliError::bad_request("tau must be a number"))?,
            None => mmm_core::dedup::DEFAULT_TAU,
        };
        Ok(ok(s.duplicates(tau)?))
    })
    .await
}

async fn merge(State(s): State<Shared>, body: Bytes) -> Response {
    blocking(s, move |s| Ok(ok(s.merge_request(&parse_body(&body)?)?))).await
}

async fn get_rules(State(s): State<Shared>) -> Response {
    blocking(s, |s| Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], s.rules_text()).into_response()))
        .await
}

async fn put_rules(State(s): State<Shared>, body: Bytes) -> Response {
    blocking(s, move |s| {
        let text = std::str::from_utf8(&body).map_err(|_| CliError::bad_request("rules must be UTF-8"))?;
        Ok(ok(s.set_rules(text)?))
    })
    .await
}

async fn frontier(State(s): State<Shared>) -> Response {
    blocking(s, |s| Ok(ok(s.frontier()))).await
}

async fn step(State(s): State<Shared>, body: Bytes) -> Response {
    blocking(s, move |s| Ok(ok(s.step_request(&parse_body(&body)?)?))).await
}

async fn search(State(s): State<Shared>, Query(q): Params) -> Response {
    blocking(s, move |s| {
        let query = q.get("q").ok_or_else(|| CliError::bad_request("missing query parameter q"))?;
        let terms: Vec<String> = query.split_whitespace().map(str::to_string).collect();
        Ok(ok(s.search(&terms)))
    })
    .await
}

async fn offer(State(s): State<Shared>, body: Bytes) -> Response {
    blocking(s, move |s| Ok(ok(s.offer_request(&parse_body(&body)?)?))).await
}

async fn inbox(State(s): State<Shared>) -> Response {
    blocking(s, |s| Ok(ok(s.inbox()))).await
}

async fn accept(State(s): State<Shared>, Path(offer_id): Path<String>) -> Response {
    blocking(s, move |s| Ok(ok(s.settle(&offer_id, true)?))).await
}

async fn reject(State(s): State<Shared>, Path(offer_id): Path<String>) -> Response {
    blocking(s, move |s| Ok(ok(s.settle(&offer_id, false)?))).await
}

async fn relay(State(s): State<Shared>, body: Bytes) -> Response {
    blocking(s, move |s| Ok(ok(s.relay_request(&parse_body(&body)?)?))).await
}

async fn trickle(State(s): State<Shared>, body: Bytes) -> Response {
    blocking(s, move |s| Ok(ok(s.trickle_request(&parse_body(&body)?)?))).await
}

async fn activity(State(s): State<Shared>, Path(agent): Path<String>) -> Response {
    blocking(s, move |s| Ok(ok(s.activity(&parse_agent(&agent)?)))).await
}

pub fn router(session: Shared) -> Router {
    Router::new()
        .route("/pieces", get(list_pieces).post(create_piece))
        .route("/pieces/{id}", get(get_piece).delete(delete_piece))
        .route("/pieces/{id}/public", post(set_public))
        .route("/pieces/{id}/flag", post(flag))
        .route("/annotate", post(annotate))
        .route("/findings", get(findings))
        .route("/measures/{id}", get(measures))
        .route("/topography", get(topography))
        .route("/duplicates", get(duplicates))
        .route("/merge", post(merge))
        .route("/rules", get(get_rules).put(put_rules))
        .route("/frontier", get(frontier))
        .route("/step", post(step))
        .route("/search", get(search))
        .route("/offer", post(offer))
        .route("/inbox", get(inbox))
        .route("/inbox/{offer_id}/accept", post(accept))
        .route("/inbox/{offer_id}/reject", post(reject))
        .route("/relay", post(relay))
        .route("/reward/trickle", post(trickle))
        .route("/activity/{agent}", get(activity))
        .with_state(session)
}

/// Serves the API on `http`, and the peer protocol on `listen` if given,
/// until interrupted. The territory is flushed before returning.
pub fn serve(session: Session, http: SocketAddr, listen: Option<SocketAddr>) -> CliResult<()> {
    let session = Arc::new(session);
    if let Some(addr) = listen {
        let listener = std::net::TcpListener::bind(addr)
            .map_err(|e| CliError::new("BIND_FAILED", format!("{addr}: {e}")))?;
        let clock = {
            let s = session.clone();
            move || s.now()
        };
        spawn_peer_server(listener, session.peer.clone(), clock);
        // Peer-protocol exchanges bypass the session, so persist them here.
        let s = session.clone();
        std::thread::spawn(move || {
            let mut last = Vec::new();
            loop {
                if let Err(e) = s.flush_if_changed(&mut last) {
                    eprintln!("flush failed: {e}");
                }
                std::thread::sleep(FLUSH_EVERY);
            }
        });
        eprintln!("peer protocol on {addr}");
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(http)
            .await
            .map_err(|e| CliError::new("BIND_FAILED", format!("{http}: {e}")))?;
        eprintln!("serving on http://{}", listener.local_addr()?);
        axum::serve(listener, router(session.clone()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok::<_, CliError>(())
    })?;
    session.flush()
}
