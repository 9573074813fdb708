// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails or runs past its time limit.

mod gen;
mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use mmm_core::codec::{self, decode_territory, encode_territory};
use mmm_core::fixtures::{sky, sky_pieces, SKY_IDS};
use mmm_core::gatekeeper::{evaluate, RuleSet, Verdict};
use mmm_core::measures::{closeness, depth, utility, visibility, visibility_exact, IncidenceView, MeasureConfig};
use mmm_core::reward::trickle;
use mmm_core::sharing::{make_bundle, Bundle, LoopbackNetwork, Peer};
use mmm_core::sim::{run_scenario, Scenario};
use mmm_core::validate::{validate, FindingCode, Severity};
use mmm_core::wayfarer::{frontier, hybrid_search, step, SearchResult};
use mmm_core::{Authorship, EdgeKind, NewPiece, Origin, Piece, PieceId, PieceKind, Territory};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gen::{who, EPOCH};
use oracle::Graph;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

// ---------------------------------------------------------------------------

fn fixture_fidelity() -> Outcome {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/sky.mmm.json");
    let golden = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    ensure(codec::encode(&sky_pieces()) == golden, || "encoding differs from golden file".into())?;
    let decoded = codec::decode(&golden).map_err(|e| e.to_string())?;
    ensure(decoded == sky_pieces(), || "decoded pieces differ from fixture".into())?;
    ensure(codec::encode(&decoded) == golden, || "re-encoding is not byte-identical".into())?;

    let territory = sky().territory;
    let bytes = encode_territory(&territory);
    let again = decode_territory(&bytes).map_err(|e| e.to_string())?;
    ensure(encode_territory(&again) == bytes, || "territory file does not round-trip".into())?;

    let findings = validate(&territory);
    let unlabeled: Vec<_> = findings.iter().filter(|f| f.code == FindingCode::UnlabeledRelate).collect();
    let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
    ensure(unlabeled.len() == 1 && unlabeled[0].piece == SKY_IDS.e1, || {
        format!("expected one UNLABELED_RELATE on e1, got {findings:?}")
    })?;
    ensure(errors == 0, || format!("{errors} error findings"))?;
    Ok(format!("{} bytes, {} findings", golden.len(), findings.len()))
}

// ---------------------------------------------------------------------------

fn measure_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d65);
    let mut worst_exact = 0.0f64;
    let mut worst_mc = 0.0f64;
    let mut checked = 0usize;
    for case in 0..200 {
        let pieces = gen::random_pieces(&mut rng, 12, 0x1000);
        let t = gen::territory_of("m", &pieces);
        let view = IncidenceView::from_territory(&t);
        let g = Graph::of(&pieces);
        let dist = g.distances();
        let cfg = MeasureConfig {
            horizon: rng.gen_range(1..=6),
            walk_length: rng.gen_range(1..=4),
            walk_count: 10_000,
            ..MeasureConfig::default()
        };
        for &a in &g.ids {
            let got = depth(&view, a, &cfg).map_err(|e| e.to_string())?;
            let want = g.depth(a, cfg.horizon);
            ensure(got == want, || format!("case {case}: depth({a}) = {got}, oracle {want}"))?;
            let got = utility(&view, a, &cfg).map_err(|e| e.to_string())?;
            let want = g.utility(a, cfg.horizon);
            ensure(got == want, || format!("case {case}: utility({a}) = {got}, oracle {want}"))?;
            for &b in &g.ids {
                let got = closeness(&view, a, b).map_err(|e| e.to_string())?;
                let want = dist.get(&(a, b)).copied();
                ensure(got == want, || format!("case {case}: closeness({a}, {b}) = {got:?}, oracle {want:?}"))?;
            }
            let want = g.visibility(a, cfg.walk_length);
            let exact = visibility_exact(&view, a, &cfg).map_err(|e| e.to_string())?;
            let mc = visibility(&view, a, &cfg, &mut rng).map_err(|e| e.to_string())?;
            worst_exact = worst_exact.max((exact - want).abs());
            worst_mc = worst_mc.max((mc - want).abs());
            ensure((exact - want).abs() <= 1e-9, || format!("case {case}: exact visibility {exact}, oracle {want}"))?;
            ensure((mc - want).abs() <= 0.02, || format!("case {case}: sampled visibility {mc}, oracle {want}"))?;
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} pieces; max |exact - oracle| = {worst_exact:.1e}, max |sampled - oracle| = {worst_mc:.4}"
    ))
}

// ---------------------------------------------------------------------------

fn pick(t: &Territory, rng: &mut ChaCha8Rng) -> Option<PieceId> {
    let ids: Vec<PieceId> = t.ids().collect();
    ids.choose(rng).copied()
}

fn public_irrevocability() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7075);
    let rule_pool = ["accept if true", "", "quarantine if kind == edge\naccept if true", "reject if flags > 0\naccept if true"];
    let addrs = ["a:1", "b:1"];
    let mut observations = 0usize;
    let mut ops = 0usize;
    for trace in 0..60 {
        let net = LoopbackNetwork::with_clock(|| EPOCH);
        let peers: Vec<Arc<Mutex<Peer>>> = addrs
            .iter()
            .map(|addr| {
                let rules = RuleSet::parse(rule_pool.choose(&mut rng).unwrap()).unwrap();
                net.add(Peer::new(Territory::new(who(&addr[..1])), *addr).with_rules(rules))
            })
            .collect();
        let mut seen: Vec<BTreeSet<PieceId>> = vec![BTreeSet::new(); 2];
        for _ in 0..80 {
            let me = rng.gen_range(0..2);
            let other = 1 - me;
            let now = EPOCH.plus_secs(ops as i64);
            let op = rng.gen_range(0..12);
            match op {
                0 | 1 => {
                    let mut p = peers[me].lock().unwrap();
                    let owner = p.owner().clone();
                    let kind = gen::random_kind(&mut rng);
                    let text = gen::words(&mut rng);
                    p.territory.create_piece(NewPiece::node(kind, text), &owner, now, &mut rng).unwrap();
                }
                2 => {
                    let mut p = peers[me].lock().unwrap();
                    let owner = p.owner().clone();
                    if let (Some(a), Some(b)) = (pick(&p.territory, &mut rng), pick(&p.territory, &mut rng)) {
                        if a != b {
                            let kind = EdgeKind::ALL[rng.gen_range(0..EdgeKind::ALL.len())];
                            p.territory.create_piece(NewPiece::edge(kind, a, b), &owner, now, &mut rng).unwrap();
                        }
                    }
                }
                3 => {
                    let mut p = peers[me].lock().unwrap();
                    if let Some(id) = pick(&p.territory, &mut rng) {
                        p.territory.set_public(id).unwrap();
                    }
                }
                4 => {
                    let mut p = peers[me].lock().unwrap();
                    if let (Some(a), Some(b)) = (pick(&p.territory, &mut rng), pick(&p.territory, &mut rng)) {
                        let _ = p.territory.merge(a, b);
                    }
                }
                5 => {
                    let mut p = peers[me].lock().unwrap();
                    if let Some(id) = pick(&p.territory, &mut rng) {
                        let canonical = p.territory.resolve(id);
                        let t = &p.territory;
                        seen[me].retain(|s| t.resolve(*s) != canonical);
                        p.territory.delete_piece(id).unwrap();
                    }
                }
                6 => {
                    let mut p = peers[me].lock().unwrap();
                    p.territory = decode_territory(&encode_territory(&p.territory)).map_err(|e| e.to_string())?;
                }
                7 => {
                    let stale = {
                        let q = peers[other].lock().unwrap();
                        pick(&q.territory, &mut rng).and_then(|id| q.territory.get(id).cloned())
                    };
                    if let Some(mut piece) = stale {
                        piece.public = false;
                        peers[me].lock().unwrap().territory.apply_incoming(&piece, Origin::AcceptedShare, now);
                    }
                }
                8 | 9 => {
                    let mut p = peers[me].lock().unwrap();
                    if let Some(root) = pick(&p.territory, &mut rng) {
                        let mut bundle = make_bundle(&p.territory, root, rng.gen_range(0..=2)).unwrap();
                        if op == 9 {
                            for piece in &mut bundle.pieces {
                                piece.public = false;
                            }
                        }
                        let offer_id = Peer::fresh_offer_id(&mut rng);
                        p.offer(&net, addrs[other], &offer_id, bundle).map_err(|e| e.to_string())?;
                    }
                }
                10 => {
                    let mut p = peers[me].lock().unwrap();
                    if let Some(entry) = p.inbox.choose(&mut rng).map(|e| e.offer_id.clone()) {
                        p.settle(&entry, rng.gen_bool(0.5), now).map_err(|e| e.to_string())?;
                    }
                }
                _ => {
                    let wanted = pick(&peers[other].lock().unwrap().territory, &mut rng);
                    if let Some(id) = wanted {
                        peers[me].lock().unwrap().fetch(&net, addrs[other], id, now).map_err(|e| e.to_string())?;
                    }
                }
            }
            ops += 1;
            for (i, peer) in peers.iter().enumerate() {
                let p = peer.lock().unwrap();
                for id in &seen[i] {
                    if let Some(piece) = p.territory.get(*id) {
                        ensure(piece.public, || format!("trace {trace}, op {op}: {id} lost its public mark at {}", addrs[i]))?;
                        observations += 1;
                    }
                }
                seen[i].extend(p.territory.pieces().filter(|x| x.public).map(|x| x.id));
            }
        }
    }
    Ok(format!("{ops} operations, {observations} public observations"))
}

// ---------------------------------------------------------------------------

fn merge_safety() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d72);
    let mut merges = 0usize;
    let mut neighbours_checked = 0usize;
    let mut territories = 0usize;
    while merges < 200 {
        territories += 1;
        ensure(territories < 10_000, || "could not find enough mergeable pairs".into())?;
        let mut pieces = gen::random_pieces(&mut rng, 12, 0x5000);
        for p in &mut pieces {
            if rng.gen_bool(0.3) {
                let extra = who(["zoe", "yan", "ann"].choose(&mut rng).unwrap());
                p.authorships.push(Authorship::single(extra, EPOCH.plus_secs(rng.gen_range(0..100))));
            }
        }
        let mut t = gen::territory_of("m", &pieces);
        for _ in 0..3 {
            let nodes: Vec<Piece> = t.pieces().filter(|p| !p.is_edge()).cloned().collect();
            let (Some(keep), Some(absorb)) = (nodes.choose(&mut rng), nodes.choose(&mut rng)) else {
                break;
            };
            if keep.id == absorb.id || keep.kind != absorb.kind {
                continue;
            }
            let before_pieces: Vec<Piece> = t.pieces().cloned().collect();
            let before = Graph::of(&before_pieces);
            let dist = before.distances();
            let two_hop: Vec<PieceId> = before
                .ids
                .iter()
                .copied()
                .filter(|&u| u != absorb.id && dist.get(&(absorb.id, u)).is_some_and(|d| *d <= 2))
                .collect();
            let expected: BTreeSet<Authorship> =
                keep.authorships.iter().chain(&absorb.authorships).cloned().collect();
            let n = t.len();
            t.merge(keep.id, absorb.id).map_err(|e| format!("merge failed: {e}"))?;
            merges += 1;

            ensure(t.len() == n - 1, || format!("piece count {} after merge of {n}", t.len()))?;
            let kept = t.get(keep.id).ok_or("kept piece missing")?;
            let got: BTreeSet<Authorship> = kept.authorships.iter().cloned().collect();
            ensure(got == expected, || format!("authorships {got:?}, expected {expected:?}"))?;
            ensure(got.len() == kept.authorships.len(), || "duplicate authorship entries".into())?;

            let held: BTreeSet<PieceId> = t.ids().collect();
            for (from, to) in t.alias_index() {
                ensure(from != to, || format!("alias {from} points to itself"))?;
                ensure(!t.alias_index().contains_key(to), || format!("alias chain through {to}"))?;
                ensure(held.contains(to), || format!("alias target {to} not held"))?;
                ensure(!held.contains(from), || format!("alias {from} is still held"))?;
            }
            ensure(t.resolve(absorb.id) == keep.id, || "absorbed id does not resolve to kept id".into())?;

            let after_pieces: Vec<Piece> = t.pieces().cloned().collect();
            let after = Graph::of(&after_pieces);
            let dist = after.distances();
            for u in two_hop.iter().filter(|u| held.contains(u)) {
                let d = dist.get(&(keep.id, *u));
                ensure(d.is_some_and(|d| *d <= 2), || format!("{u} was 2 hops from the absorbed piece, now {d:?} from kept"))?;
                neighbours_checked += 1;
            }
            if merges == 200 {
                break;
            }
        }
    }
    Ok(format!("{merges} merges over {territories} territories, {neighbours_checked} neighbours checked"))
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum Event {
    Offer { offer_id: String, bundle: Bundle },
    Relay(PieceId),
    Settle { offer_id: String, accept: bool },
    Fetch(PieceId),
}

fn random_trace(rng: &mut ChaCha8Rng, sender: &Territory) -> Vec<Event> {
    let ids: Vec<PieceId> = sender.ids().collect();
    let mut offers: Vec<String> = Vec::new();
    let mut trace = Vec::new();
    for i in 0..rng.gen_range(4..14) {
        let root = *ids.choose(rng).unwrap();
        let event = match rng.gen_range(0..8) {
            0..=2 => {
                let bundle = make_bundle(sender, root, rng.gen_range(0..=2)).unwrap();
                Event::Offer { offer_id: format!("o{i}"), bundle }
            }
            3 => {
                // Variants of a piece the receiver may already hold.
                let mut piece = sender.get(root).unwrap().clone();
                match rng.gen_range(0..3) {
                    0 if !piece.is_edge() => piece.content = format!("{} {}", piece.content, gen::words(rng)),
                    1 => piece.authorships.push(Authorship::single(who("zed"), EPOCH.plus_secs(rng.gen_range(1..50)))),
                    _ => piece.public = true,
                }
                Event::Offer { offer_id: format!("o{i}"), bundle: Bundle::new(vec![piece]) }
            }
            4 => Event::Relay(root),
            5 | 6 if !offers.is_empty() => Event::Settle {
                offer_id: offers.choose(rng).unwrap().clone(),
                accept: rng.gen_bool(0.6),
            },
            _ => Event::Fetch(root),
        };
        match &event {
            Event::Offer { offer_id, .. } => offers.push(offer_id.clone()),
            Event::Fetch(id) => offers.push(format!("request:{id}")),
            _ => {}
        }
        trace.push(event);
    }
    trace
}

/// Copies of some offers and relays, each inserted somewhere after its
/// original.
fn with_delayed_duplicates(rng: &mut ChaCha8Rng, trace: &[Event]) -> Vec<Event> {
    let mut later: BTreeMap<usize, Vec<Event>> = BTreeMap::new();
    for (i, e) in trace.iter().enumerate() {
        if matches!(e, Event::Offer { .. } | Event::Relay(_)) {
            for _ in 0..rng.gen_range(0..=2) {
                later.entry(rng.gen_range(i..trace.len())).or_default().push(e.clone());
            }
        }
    }
    let mut out = Vec::new();
    for (i, e) in trace.iter().enumerate() {
        out.push(e.clone());
        out.extend(later.remove(&i).unwrap_or_default());
    }
    out
}

fn play(trace: &[Event], sender: &Territory, receiver: &Territory, rules: &RuleSet) -> (Vec<u8>, Vec<u8>, Vec<String>) {
    let net = LoopbackNetwork::with_clock(|| EPOCH.plus_secs(600));
    let a = net.add(Peer::new(sender.clone(), "a:1"));
    let b = net.add(Peer::new(receiver.clone(), "b:1").with_rules(rules.clone()));
    for e in trace {
        match e {
            Event::Offer { offer_id, bundle } => {
                let _ = a.lock().unwrap().offer(&net, "b:1", offer_id, bundle.clone());
            }
            Event::Relay(id) => {
                let _ = a.lock().unwrap().relay(&net, *id, "b:1");
            }
            Event::Settle { offer_id, accept } => {
                let _ = b.lock().unwrap().settle(offer_id, *accept, EPOCH.plus_secs(600));
            }
            Event::Fetch(id) => {
                let _ = b.lock().unwrap().fetch(&net, "a:1", *id, EPOCH.plus_secs(600));
            }
        }
    }
    let a = a.lock().unwrap();
    let b = b.lock().unwrap();
    (
        encode_territory(&a.territory),
        encode_territory(&b.territory),
        b.inbox.iter().map(|e| e.offer_id.clone()).collect(),
    )
}

fn protocol_idempotency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6964);
    let mut duplicates = 0usize;
    let mut nonempty = 0usize;
    for case in 0..100 {
        let pieces = gen::random_pieces(&mut rng, 12, 0x2000);
        let sender = gen::territory_of("alice", &pieces);
        let mut shared: Vec<Piece> = pieces.iter().filter(|_| rng.gen_bool(0.3)).cloned().collect();
        shared.extend(gen::random_pieces(&mut rng, 4, 0x3000));
        let receiver = gen::territory_of("bob", &shared);
        let ids: Vec<PieceId> = pieces.iter().map(|p| p.id).collect();
        let rules_text = match case % 3 {
            0 => "accept if true".to_string(),
            1 => String::new(),
            _ => gen::random_rules(&mut rng, &ids),
        };
        let rules = RuleSet::parse(&rules_text).map_err(|e| format!("{rules_text:?}: {e}"))?;
        let trace = random_trace(&mut rng, &sender);
        let noisy = with_delayed_duplicates(&mut rng, &trace);
        duplicates += noisy.len() - trace.len();
        let clean = play(&trace, &sender, &receiver, &rules);
        let dirty = play(&noisy, &sender, &receiver, &rules);
        if clean.1 != encode_territory(&receiver) {
            nonempty += 1;
        }
        ensure(clean.0 == dirty.0, || format!("case {case}: sender territories differ"))?;
        ensure(clean.1 == dirty.1, || format!("case {case}: receiver territories differ\nrules: {rules_text}"))?;
        ensure(clean.2 == dirty.2, || format!("case {case}: inboxes differ: {:?} vs {:?}", clean.2, dirty.2))?;
    }
    ensure(nonempty > 50, || format!("only {nonempty} traces changed the receiver"))?;
    Ok(format!("100 traces, {duplicates} duplicated messages, {nonempty} traces changed the receiver"))
}

// ---------------------------------------------------------------------------

struct KindRule {
    text: &'static str,
    rejects: fn(PieceKind) -> bool,
}

const KIND_RULES: [KindRule; 6] = [
    KindRule { text: "accept if true", rejects: |_| false },
    KindRule { text: "", rejects: |_| false },
    KindRule { text: "reject if kind == narrative\naccept if true", rejects: |k| k == PieceKind::Narrative },
    KindRule { text: "reject if kind == edge", rejects: |k| k.is_edge() },
    KindRule { text: "reject if kind == answers\naccept if true", rejects: |k| k == PieceKind::Edge(EdgeKind::Answers) },
    KindRule {
        text: "quarantine if kind == question\nreject if kind == details or kind == existence",
        rejects: |k| k == PieceKind::Edge(EdgeKind::Details) || k == PieceKind::Existence,
    },
];

/// Incidence links as the holder sees them.
fn incidence(pieces: &[Piece], held: &BTreeSet<usize>) -> BTreeSet<(usize, usize)> {
    let index: BTreeMap<PieceId, usize> = pieces.iter().enumerate().map(|(i, p)| (p.id, i)).collect();
    let mut links = BTreeSet::new();
    for &e in held {
        for end in pieces[e].endpoints() {
            let a = index[&end];
            if held.contains(&a) && a != e {
                links.insert((a.min(e), a.max(e)));
            }
        }
    }
    links
}

/// Whether some simple path from a local piece to `target` has only local or
/// non-rejected pieces inside it.
fn admissible_path_exists(
    adj: &BTreeMap<usize, BTreeSet<usize>>,
    local: &BTreeSet<usize>,
    ok: &dyn Fn(usize) -> bool,
    target: usize,
) -> bool {
    fn dfs(
        v: usize,
        target: usize,
        adj: &BTreeMap<usize, BTreeSet<usize>>,
        ok: &dyn Fn(usize) -> bool,
        local: &BTreeSet<usize>,
        on: &mut Vec<usize>,
    ) -> bool {
        if v == target {
            return true;
        }
        if !local.contains(&v) && !ok(v) {
            return false;
        }
        for &u in adj.get(&v).into_iter().flatten() {
            if !on.contains(&u) {
                on.push(u);
                if dfs(u, target, adj, ok, local, on) {
                    return true;
                }
                on.pop();
            }
        }
        false
    }
    local.iter().any(|&s| dfs(s, target, adj, ok, local, &mut vec![s]))
}

fn non_findability() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e66);
    let cfg = MeasureConfig::default();
    let (mut served, mut refused, mut stepped) = (0usize, 0usize, 0usize);
    for world in 0..100 {
        let mut pieces = gen::random_pieces(&mut rng, 12, 0x100);
        for (i, p) in pieces.iter_mut().enumerate() {
            p.content = format!("tok{i}");
        }
        let rule = &KIND_RULES[world % KIND_RULES.len()];
        let rules = RuleSet::parse(rule.text).unwrap();
        let ok = |i: usize| !(rule.rejects)(pieces[i].kind);

        let net = LoopbackNetwork::with_clock(|| EPOCH);
        let mut adj: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        let mut peers = Vec::new();
        let mut offered = BTreeSet::new();
        for h in 0..3 {
            let held: BTreeSet<usize> = (0..pieces.len()).filter(|_| rng.gen_bool(0.6)).collect();
            let mut t = Territory::new(who(&format!("p{h}")));
            for &i in &held {
                t.apply_incoming(&pieces[i], Origin::Authored, EPOCH);
            }
            for (a, b) in incidence(&pieces, &held) {
                adj.entry(a).or_default().insert(b);
                adj.entry(b).or_default().insert(a);
            }
            offered.extend(held);
            let addr = format!("p{h}:1");
            net.add(Peer::new(t, addr.clone()));
            peers.push(addr);
        }
        let local_set: BTreeSet<usize> = (0..pieces.len()).filter(|_| rng.gen_bool(0.25)).collect();
        let mut local = Territory::new(who("me"));
        for &i in &local_set {
            local.apply_incoming(&pieces[i], Origin::Authored, EPOCH);
        }
        let index: BTreeMap<PieceId, usize> = pieces.iter().enumerate().map(|(i, p)| (p.id, i)).collect();

        for target in (0..pieces.len()).filter(|t| !local_set.contains(t)) {
            let query = [format!("tok{target}")];
            let out = hybrid_search(&local, &peers, &query, &rules, &cfg, &net);
            let expected = admissible_path_exists(&adj, &local_set, &ok, target);
            match out.result {
                SearchResult::Served { id, path, .. } => {
                    ensure(id == pieces[target].id, || format!("world {world}: served {id} for tok{target}"))?;
                    ensure(expected, || format!("world {world}: served tok{target} without an admissible path"))?;
                    let steps: Vec<usize> = path.iter().map(|p| index[p]).collect();
                    ensure(steps.first().is_some_and(|s| local_set.contains(s)) && steps.last() == Some(&target), || {
                        format!("world {world}: bad path endpoints {path:?}")
                    })?;
                    for w in steps.windows(2) {
                        ensure(adj.get(&w[0]).is_some_and(|n| n.contains(&w[1])), || {
                            format!("world {world}: path {path:?} uses a missing link")
                        })?;
                    }
                    for &v in &steps[1..steps.len() - 1] {
                        ensure(local_set.contains(&v) || ok(v), || format!("world {world}: path crosses rejected piece"))?;
                    }
                    served += 1;

                    if path.len() > 2 {
                        let mut walker = local.clone();
                        for remote in &path[1..path.len() - 1] {
                            if walker.contains(*remote) {
                                continue;
                            }
                            let f = frontier(&walker, &peers, &net);
                            let entry = f
                                .entries
                                .iter()
                                .find(|e| e.remote == *remote)
                                .ok_or_else(|| format!("world {world}: {remote} not on the frontier"))?;
                            let d = step(&mut walker, entry, &rules, &cfg, &net, EPOCH).map_err(|e| e.to_string())?;
                            ensure(d.verdict != Verdict::Reject, || format!("world {world}: step onto {remote} rejected"))?;
                        }
                        let again = hybrid_search(&walker, &peers, &query, &rules, &cfg, &net);
                        match again.result {
                            SearchResult::Served { id, path, .. } if id == pieces[target].id && path.len() == 2 => stepped += 1,
                            other => return Err(format!("world {world}: after stepping, got {other:?}")),
                        }
                    }
                }
                SearchResult::PathRequired { .. } => {
                    ensure(!expected, || format!("world {world}: missed an admissible path to tok{target}"))?;
                    refused += 1;
                }
                SearchResult::NoMatch => {
                    ensure(!offered.contains(&target), || format!("world {world}: tok{target} reported missing"))?;
                }
            }
        }
    }
    ensure(served > 0 && refused > 0 && stepped > 0, || format!("degenerate run: {served}/{refused}/{stepped}"))?;
    Ok(format!("{served} served, {refused} refused, {stepped} served again after stepping"))
}

// ---------------------------------------------------------------------------

fn trickle_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7472);
    let mut worst = 0.0f64;
    for case in 0..500 {
        let mut pieces = gen::random_pieces(&mut rng, 12, 0x4000);
        for p in &mut pieces {
            if rng.gen_bool(0.3) {
                p.authorships[0].authors.push(who("zoe"));
            }
            if rng.gen_bool(0.2) {
                p.authorships.push(Authorship::single(who("yan"), EPOCH));
            }
        }
        let t = gen::territory_of("m", &pieces);
        let view = IncidenceView::from_territory(&t);
        let k = pieces.choose(&mut rng).unwrap().id;
        let total = rng.gen_range(0.0..1000.0);
        let gamma = rng.gen_range(0.05..0.95);
        let horizon = rng.gen_range(0..=6);
        let d = trickle(&view, k, total, gamma, horizon).map_err(|e| e.to_string())?;
        let sum: f64 = d.shares.values().sum();
        worst = worst.max((sum - total).abs());
        ensure((sum - total).abs() <= 1e-9, || format!("case {case}: shares sum to {sum}, total {total}"))?;
        ensure(d.shares.values().all(|s| *s >= 0.0), || format!("case {case}: negative share"))?;
    }

    let f = sky();
    let ids = &f.ids;
    let view = IncidenceView::from_territory(&f.territory);
    let d = trickle(&view, ids.n1, 1.0, 0.5, 4).map_err(|e| e.to_string())?;
    let hand: BTreeMap<PieceId, f64> = [
        (ids.n1, 1.0),
        (ids.e2, 0.5),
        (ids.e4, 0.5),
        (ids.n4, 0.25),
        (ids.n2, 0.25),
        (ids.e6, 0.125),
        (ids.e8, 0.125),
        (ids.n6, 0.0625),
        (ids.n8, 0.0625),
    ]
    .into_iter()
    .collect();
    let got: BTreeMap<PieceId, f64> = d.contributions.iter().map(|c| (c.id, c.weight)).collect();
    ensure(got.keys().eq(hand.keys()), || format!("fixture contributors {:?}", got.keys().collect::<Vec<_>>()))?;
    for (id, w) in &hand {
        ensure((got[id] - w).abs() <= 1e-9, || format!("fixture weight of {id}: {} vs {w}", got[id]))?;
    }
    let mut expected: BTreeMap<_, f64> = BTreeMap::new();
    for (id, w) in &hand {
        let agents = f.territory.get(*id).unwrap().agents();
        for a in &agents {
            *expected.entry(a.clone()).or_default() += w / 2.875 / agents.len() as f64;
        }
    }
    ensure(expected.len() == d.shares.len(), || format!("fixture shares {:?}", d.shares))?;
    for (a, s) in &expected {
        let got = d.shares.get(a).copied().unwrap_or(f64::NAN);
        ensure((got - s).abs() <= 1e-9, || format!("fixture share of {a}: {got} vs {s}"))?;
    }
    let n1_author = &f.territory.get(ids.n1).unwrap().agents()[0];
    Ok(format!(
        "500 views, max |sum - total| = {worst:.1e}; fixture share of {n1_author} = {:.4}",
        d.shares[n1_author]
    ))
}

// ---------------------------------------------------------------------------

fn gatekeeper_non_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6773);
    let mut verdicts: BTreeMap<&'static str, usize> = BTreeMap::new();
    for case in 0..500 {
        let all = gen::random_pieces(&mut rng, 14, 0x6000);
        let cut = rng.gen_range(0..all.len());
        let mut local = gen::territory_of("gk", &all[..cut]);
        for id in local.ids().collect::<Vec<_>>() {
            if rng.gen_bool(0.15) {
                local.red_flag(id, &who("ann"), EPOCH, "SPAM").unwrap();
            }
        }
        let bundle: Vec<Piece> = all[cut..].to_vec();
        let ids: Vec<PieceId> = all.iter().map(|p| p.id).collect();
        let text = gen::random_rules(&mut rng, &ids);
        let rules = RuleSet::parse(&text).map_err(|e| format!("{text:?}: {e}"))?;
        let cfg = MeasureConfig {
            walk_length: rng.gen_range(1..=4),
            ..MeasureConfig::default()
        };
        let origin = [Origin::AcceptedShare, Origin::WayfarerStep][rng.gen_range(0..2)];

        let rewritten: Vec<Piece> = bundle
            .iter()
            .map(|p| {
                let mut p = p.clone();
                if !p.is_edge() || !p.content.is_empty() {
                    p.content = format!("zz {} zz", gen::words(&mut rng));
                }
                if p.label.is_some() {
                    p.label = Some(format!("qq {}", gen::words(&mut rng)));
                }
                p
            })
            .collect();
        let before = evaluate(&rules, &bundle, &local, &cfg, origin);
        let after = evaluate(&rules, &rewritten, &local, &cfg, origin);
        ensure(before == after, || format!("case {case}: verdicts changed under rewriting\nrules:\n{text}"))?;
        for (_, d) in &before.decisions {
            *verdicts.entry(d.verdict.name()).or_default() += 1;
        }
    }
    ensure(verdicts.len() == 3, || format!("not every verdict exercised: {verdicts:?}"))?;
    Ok(format!("500 cases, verdicts {verdicts:?}"))
}

// ---------------------------------------------------------------------------

fn commons_dynamics() -> Outcome {
    let names = ["baseline", "freerider", "seasonality", "scarce_attention", "housekeeping"];
    let mut summary = Vec::new();
    for name in names {
        let path = repo_root().join("scenarios").join(format!("{name}.mmm.json"));
        let bytes = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let s = Scenario::decode(&bytes).map_err(|e| e.to_string())?;
        let r = run_scenario(&s, s.seed).map_err(|e| e.to_string())?;
        ensure(r.glued_beats_zero_glue() == Some(true), || {
            format!("{name}: glued {:?} vs zero-glue {:?}", r.glued_visibility, r.zero_glue_visibility)
        })?;
        ensure(r.seasonality_respected(&s), || format!("{name}: seasonality threshold broken"))?;
        for (agent, spec) in r.agents.iter().zip(&s.agents) {
            if spec.seasonality_alpha > 0 {
                ensure(agent.shared <= agent.produced + agent.annotated, || {
                    format!("{name}: {} shared {} of {} invested", agent.id, agent.shared, agent.produced + agent.annotated)
                })?;
            }
        }
        ensure(!r.extinct.is_empty(), || format!("{name}: nothing was deleted everywhere"))?;
        ensure(r.extinct_in_union == 0, || format!("{name}: {} extinct pieces still in the union", r.extinct_in_union))?;
        let again = run_scenario(&s, s.seed).map_err(|e| e.to_string())?;
        ensure(again.encode() == r.encode(), || format!("{name}: second run differs"))?;
        summary.push(format!(
            "{name} {:.3}>{:.3}",
            r.glued_visibility.unwrap(),
            r.zero_glue_visibility.unwrap()
        ));
    }
    Ok(summary.join(", "))
}

// ---------------------------------------------------------------------------

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "fixture fidelity", limit: Some(Duration::from_secs(1)), run: fixture_fidelity },
        Criterion { name: "measure oracle equivalence", limit: Some(Duration::from_secs(60)), run: measure_oracle },
        Criterion { name: "public-mark irrevocability", limit: Some(Duration::from_secs(30)), run: public_irrevocability },
        Criterion { name: "merge safety", limit: Some(Duration::from_secs(30)), run: merge_safety },
        Criterion { name: "protocol idempotency", limit: Some(Duration::from_secs(60)), run: protocol_idempotency },
        Criterion { name: "non-findability", limit: Some(Duration::from_secs(60)), run: non_findability },
        Criterion { name: "trickle conservation", limit: None, run: trickle_conservation },
        Criterion { name: "gatekeeper non-semantics", limit: None, run: gatekeeper_non_semantics },
        Criterion { name: "commons dynamics", limit: Some(Duration::from_secs(120)), run: commons_dynamics },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match (result, c.limit) {
            (Ok(_), Some(limit)) if elapsed > limit => Err(format!("took {elapsed:.2?}, limit {limit:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS  {:<28} {:>8.2}s  {detail}", c.name, elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:<28} {:>8.2}s  {why}", c.name, elapsed.as_secs_f64());
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
