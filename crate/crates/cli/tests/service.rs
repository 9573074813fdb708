// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use mmm_cli::service::router;
use mmm_cli::session::{Clock, Session};
use mmm_core::codec::encode_territory;
use mmm_core::fixtures::sky;
use mmm_core::sharing::{LoopbackNetwork, Peer};
use mmm_core::{AgentId, Annotation, EdgeKind, NewPiece, PieceKind, Territory, Timestamp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

const N1: &str = "00000000000000000000000000000001";
const N2: &str = "00000000000000000000000000000002";

fn now() -> Timestamp {
    Timestamp::from_unix(1_704_067_200)
}

fn clock() -> Clock {
    Arc::new(now)
}

fn session(territory: Territory, net: Arc<LoopbackNetwork>) -> Arc<Session> {
    let peer = Peer::new(territory, "ann");
    Arc::new(Session::new(peer, net, vec![], ChaCha8Rng::seed_from_u64(5), clock()))
}

fn fixture_app() -> (Router, Arc<Session>) {
    let s = session(sky().territory, Arc::new(LoopbackNetwork::with_clock(now)));
    (router(s.clone()), s)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, v)
}

#[tokio::test]
async fn lists_and_reads_pieces() {
    let (app, _) = fixture_app();
    let (status, v) = call(&app, Method::GET, "/pieces", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["pieces"].as_array().unwrap().len(), 17);

    let (status, v) = call(&app, Method::GET, &format!("/pieces/{N1}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["content"], "What colour is the sky?");

    let (status, v) = call(&app, Method::GET, "/pieces/00000000000000000000000000000abc", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "UNKNOWN_PIECE");

    let (status, _) = call(&app, Method::GET, "/pieces/nope", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn creates_pieces_and_rejects_bad_bodies() {
    let (app, _) = fixture_app();
    let (status, v) = call(&app, Method::POST, "/pieces", Some(json!({"kind": "narrative", "content": "Azure"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["content"], "Azure");
    assert_eq!(v["authorships"][0]["authors"][0], "alice");

    let (status, v) = call(&app, Method::POST, "/pieces", Some(json!({"content": "no kind"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "BAD_REQUEST");

    let (status, v) = call(&app, Method::POST, "/pieces", Some(json!({"kind": "colour", "content": "x"}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"]["code"], "UNKNOWN_KIND");

    let (status, _) = call(&app, Method::GET, "/pieces", None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn public_twice_is_ok() {
    let (app, _) = fixture_app();
    let uri = format!("/pieces/{N2}/public");
    let (s1, v1) = call(&app, Method::POST, &uri, None).await;
    let (s2, v2) = call(&app, Method::POST, &uri, None).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(v1, v2);
    assert_eq!(v2["public"], true);
}

#[tokio::test]
async fn measures_rules_and_reward() {
    let (app, _) = fixture_app();
    let (status, v) = call(&app, Method::GET, &format!("/measures/{N1}?names=depth,utility"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["measures"]["depth"], 2);
    assert_eq!(v["measures"]["utility"], 0);

    let (_, v) = call(&app, Method::GET, &format!("/measures/{N1}?names=closeness&to={N2}"), None).await;
    assert!(v["measures"]["closeness"].is_u64());

    let (status, v) = call(&app, Method::GET, &format!("/measures/{N1}?names=closeness"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{v}");

    let (status, v) = call(&app, Method::GET, "/findings", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["findings"][0]["code"], "UNLABELED_RELATE");

    let (status, v) = call(&app, Method::GET, "/topography?measure=depth", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["entries"].as_array().unwrap().len(), 17);

    let (status, _) = call(&app, Method::GET, "/duplicates?tau=2", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let put = Request::builder()
        .method(Method::PUT)
        .uri("/rules")
        .body(Body::from("# open door\naccept if true\n"))
        .unwrap();
    assert_eq!(app.clone().oneshot(put).await.unwrap().status(), StatusCode::OK);
    let (status, text) = call(&app, Method::GET, "/rules", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(text, "accept if true\n");

    let bad = Request::builder().method(Method::PUT).uri("/rules").body(Body::from("accept if (")).unwrap();
    assert_eq!(app.clone().oneshot(bad).await.unwrap().status(), StatusCode::BAD_REQUEST);

    let (status, v) = call(&app, Method::POST, "/reward/trickle", Some(json!({"id": N1}))).await;
    assert_eq!(status, StatusCode::OK);
    let total: f64 = v["shares"].as_object().unwrap().values().map(|s| s.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9, "{v}");

    let (status, _) = call(&app, Method::GET, "/activity/alice", None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn sharing_over_the_api() {
    let net = Arc::new(LoopbackNetwork::with_clock(now));
    let bob = net.add(Peer::new(Territory::new(AgentId::new("bob").unwrap()), "bob"));
    let s = session(sky().territory, net.clone());
    let app = router(s);

    let (status, v) = call(&app, Method::POST, "/offer", Some(json!({"id": N2, "to": "bob"}))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let offer_id = v["offer_id"].as_str().unwrap().to_string();
    assert_eq!(bob.lock().unwrap().inbox.len(), 1);

    let (status, v) = call(&app, Method::POST, "/offer", Some(json!({"id": N2, "to": "carol"}))).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY, "{v}");

    // Bob settles through a separate service.
    let bob_app = router(Arc::new(Session::new(
        bob.lock().unwrap().clone(),
        net.clone(),
        vec![],
        ChaCha8Rng::seed_from_u64(1),
        clock(),
    )));
    let (status, v) = call(&bob_app, Method::GET, "/inbox", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["inbox"].as_array().unwrap().len(), 1);
    let (status, _) = call(&bob_app, Method::POST, &format!("/inbox/{offer_id}/accept"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, v) = call(&bob_app, Method::POST, &format!("/inbox/{offer_id}/reject"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND, "{v}");
    let (_, v) = call(&bob_app, Method::GET, &format!("/pieces/{N2}"), None).await;
    assert_eq!(v["content"], "Blue");
}

/// The same edits through the API and straight through the library must
/// leave byte-identical territories.
#[tokio::test]
async fn api_flow_matches_library_calls() {
    let owner = AgentId::new("ann").unwrap();
    let s = session(Territory::new(owner.clone()), Arc::new(LoopbackNetwork::new()));
    let app = router(s.clone());

    let (_, q) = call(&app, Method::POST, "/pieces", Some(json!({"kind": "question", "content": "Why is the sea salty?"}))).await;
    let (_, a) = call(&app, Method::POST, "/pieces", Some(json!({"kind": "narrative", "content": "Rivers carry minerals."}))).await;
    let (q, a) = (q["id"].as_str().unwrap().to_string(), a["id"].as_str().unwrap().to_string());
    let (status, _) = call(
        &app,
        Method::POST,
        "/pieces",
        Some(json!({"kind": "answers", "source": a, "target": q, "label": "because"})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, _) = call(
        &app,
        Method::POST,
        "/annotate",
        Some(json!({"anchor": a, "edge_kind": "nuances", "content": "Mostly sodium chloride."})),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    call(&app, Method::POST, &format!("/pieces/{a}/public"), None).await;
    call(&app, Method::POST, &format!("/pieces/{q}/flag"), Some(json!({"code": "vague", "agent": "zed"}))).await;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut t = Territory::new(owner.clone());
    let tq = t
        .create_piece(NewPiece::node(PieceKind::Question, "Why is the sea salty?"), &owner, now(), &mut rng)
        .unwrap();
    let ta = t
        .create_piece(NewPiece::node(PieceKind::Narrative, "Rivers carry minerals."), &owner, now(), &mut rng)
        .unwrap();
    t.create_piece(
        NewPiece::edge(EdgeKind::Answers, ta.id, tq.id).with_label("because"),
        &owner,
        now(),
        &mut rng,
    )
    .unwrap();
    t.annotate(Annotation::new(ta.id, EdgeKind::Nuances, "Mostly sodium chloride."), &owner, now(), &mut rng)
        .unwrap();
    t.set_public(ta.id).unwrap();
    t.red_flag(tq.id, &AgentId::new("zed").unwrap(), now(), "vague").unwrap();

    assert_eq!(tq.id.to_string(), q);
    let via_api = encode_territory(&s.peer.lock().unwrap().territory);
    assert_eq!(String::from_utf8(via_api).unwrap(), String::from_utf8(encode_territory(&t)).unwrap());
}
