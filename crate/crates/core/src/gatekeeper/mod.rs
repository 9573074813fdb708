// SPDX-License-Identifier: Apache-2.0

//! Owner-defined acceptance rules for incoming pieces. Rules see kinds,
//! origins, red flags and graph measures, and nothing else.
//!
//! A rule set is an ordered list; the first rule whose condition holds
//! decides. When none fires the piece is quarantined for the owner.

mod parse;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::ids::PieceId;
use crate::measures::{closeness, unary, IncidenceView, Measure, MeasureConfig};
use crate::piece::{Piece, PieceKind};
use crate::territory::{Origin, Territory};

pub use parse::parse_rule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Verdict {
    Accept,
    Quarantine,
    Reject,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Accept => "accept",
            Verdict::Quarantine => "quarantine",
            Verdict::Reject => "reject",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl Cmp {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Cmp::Lt => value < threshold,
            Cmp::Le => value <= threshold,
            Cmp::Eq => value == threshold,
            Cmp::Ge => value >= threshold,
            Cmp::Gt => value > threshold,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Eq => "==",
            Cmp::Ge => ">=",
            Cmp::Gt => ">",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KindMatch {
    Exact(PieceKind),
    AnyEdge,
}

impl KindMatch {
    fn matches(self, kind: PieceKind) -> bool {
        match self {
            KindMatch::Exact(k) => k == kind,
            KindMatch::AnyEdge => kind.is_edge(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(bool),
    All(Vec<Expr>),
    Any(Vec<Expr>),
    Not(Box<Expr>),
    Measure { measure: Measure, cmp: Cmp, threshold: f64 },
    /// Closeness from the candidate to a fixed piece; unreachable counts as
    /// infinitely far.
    Closeness { to: PieceId, cmp: Cmp, threshold: f64 },
    Kind { kind: KindMatch, negate: bool },
    Origin { origin: Origin, negate: bool },
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, terms: &[Expr], op: &str| -> fmt::Result {
            f.write_str("(")?;
            for (i, t) in terms.iter().enumerate() {
                if i > 0 {
                    write!(f, " {op} ")?;
                }
                write!(f, "{t}")?;
            }
            f.write_str(")")
        };
        match self {
            Expr::Const(b) => write!(f, "{b}"),
            Expr::All(terms) => join(f, terms, "and"),
            Expr::Any(terms) => join(f, terms, "or"),
            Expr::Not(e) => write!(f, "not {e}"),
            Expr::Measure {
                measure: Measure::FlagCount,
                cmp,
                threshold,
            } => write!(f, "flags {} {threshold}", cmp.symbol()),
            Expr::Measure { measure, cmp, threshold } => {
                write!(f, "{measure}(ctx) {} {threshold}", cmp.symbol())
            }
            Expr::Closeness { to, cmp, threshold } => {
                write!(f, "closeness(ctx, {to}) {} {threshold}", cmp.symbol())
            }
            Expr::Kind { kind, negate } => {
                let name = match kind {
                    KindMatch::Exact(k) => k.name(),
                    KindMatch::AnyEdge => "edge",
                };
                write!(f, "kind {} {name}", if *negate { "!=" } else { "==" })
            }
            Expr::Origin { origin, negate } => {
                write!(f, "origin {} {}", if *negate { "!=" } else { "==" }, origin.name())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub verdict: Verdict,
    pub condition: Expr,
    /// The rule as written.
    pub text: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleErrorCode {
    SyntaxError,
    UnknownMeasure,
    SemanticAtomRejected,
}

impl RuleErrorCode {
    pub fn name(self) -> &'static str {
        match self {
            RuleErrorCode::SyntaxError => "SYNTAX_ERROR",
            RuleErrorCode::UnknownMeasure => "UNKNOWN_MEASURE",
            RuleErrorCode::SemanticAtomRejected => "SEMANTIC_ATOM_REJECTED",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{}: {message} (at byte {position})", code.name())]
pub struct RuleError {
    pub code: RuleErrorCode,
    /// Byte offset of the offending token within the rule text.
    pub position: usize,
    pub message: String,
}

impl RuleError {
    pub fn code(&self) -> &'static str {
        self.code.name()
    }
}

/// An error in a multi-line rule file, with its 1-based line.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line}: {error}")]
pub struct RuleFileError {
    pub line: usize,
    pub error: RuleError,
}

/// An ordered rule set, stored one rule per line. Blank lines and lines
/// starting with `#` are ignored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

impl RuleSet {
    pub fn parse(text: &str) -> Result<Self, RuleFileError> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            rules.push(parse_rule(trimmed).map_err(|error| RuleFileError { line: i + 1, error })?);
        }
        Ok(RuleSet { rules })
    }

    /// One rule per line, as written.
    pub fn to_text(&self) -> String {
        self.rules.iter().map(|r| format!("{}\n", r.text)).collect()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateDecision {
    pub verdict: Verdict,
    /// Index of the rule that fired; `None` for the quarantine default.
    pub fired_rule: Option<usize>,
}

impl GateDecision {
    pub const DEFAULT: GateDecision = GateDecision {
        verdict: Verdict::Quarantine,
        fired_rule: None,
    };

    /// Human-readable rule path, e.g. `rule[2]` or `default`.
    pub fn rule_path(&self) -> String {
        match self.fired_rule {
            Some(i) => format!("rule[{i}]"),
            None => "default".to_string(),
        }
    }
}

/// What the rules can see about one candidate piece.
pub struct Candidate<'a> {
    pub view: &'a IncidenceView,
    pub id: PieceId,
    pub kind: PieceKind,
    pub origin: Origin,
    pub cfg: &'a MeasureConfig,
    cache: HashMap<Measure, f64>,
}

impl<'a> Candidate<'a> {
    pub fn new(view: &'a IncidenceView, piece: &Piece, origin: Origin, cfg: &'a MeasureConfig) -> Self {
        Candidate {
            view,
            id: piece.id,
            kind: piece.kind,
            origin,
            cfg,
            cache: HashMap::new(),
        }
    }

    /// A candidate known only by kind and holder-reported measures, e.g. a
    /// frontier preview. Measures not supplied are computed on `view`.
    pub fn from_measures(
        view: &'a IncidenceView,
        id: PieceId,
        kind: PieceKind,
        origin: Origin,
        cfg: &'a MeasureConfig,
        measures: impl IntoIterator<Item = (Measure, f64)>,
    ) -> Self {
        Candidate {
            view,
            id,
            kind,
            origin,
            cfg,
            cache: measures.into_iter().collect(),
        }
    }

    fn measure(&mut self, m: Measure) -> f64 {
        if let Some(v) = self.cache.get(&m) {
            return *v;
        }
        // The candidate is always part of the view it is evaluated on.
        let v = unary(self.view, m, self.id, self.cfg).unwrap_or(0.0);
        self.cache.insert(m, v);
        v
    }

    fn holds(&mut self, e: &Expr) -> bool {
        match e {
            Expr::Const(b) => *b,
            Expr::All(terms) => terms.iter().all(|t| self.holds(t)),
            Expr::Any(terms) => terms.iter().any(|t| self.holds(t)),
            Expr::Not(inner) => !self.holds(inner),
            Expr::Measure { measure, cmp, threshold } => cmp.holds(self.measure(*measure), *threshold),
            Expr::Closeness { to, cmp, threshold } => {
                let d = closeness(self.view, self.id, *to)
                    .ok()
                    .flatten()
                    .map_or(f64::INFINITY, |d| d as f64);
                cmp.holds(d, *threshold)
            }
            Expr::Kind { kind, negate } => kind.matches(self.kind) != *negate,
            Expr::Origin { origin, negate } => (*origin == self.origin) != *negate,
        }
    }
}

/// First matching rule wins; quarantine when none fires.
pub fn decide(rules: &RuleSet, candidate: &mut Candidate<'_>) -> GateDecision {
    for (i, rule) in rules.rules.iter().enumerate() {
        if candidate.holds(&rule.condition) {
            return GateDecision {
                verdict: rule.verdict,
                fired_rule: Some(i),
            };
        }
    }
    GateDecision::DEFAULT
}

/// Per-piece decisions for a candidate set of pieces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BundleDecision {
    pub decisions: Vec<(PieceId, GateDecision)>,
}

impl BundleDecision {
    pub fn get(&self, id: PieceId) -> Option<&GateDecision> {
        self.decisions.iter().find(|(p, _)| *p == id).map(|(_, d)| d)
    }

    pub fn with_verdict(&self, verdict: Verdict) -> impl Iterator<Item = PieceId> + '_ {
        self.decisions
            .iter()
            .filter(move |(_, d)| d.verdict == verdict)
            .map(|(id, _)| *id)
    }

    /// The most restrictive per-piece decision (reject over quarantine over
    /// accept); ties go to the first such piece.
    pub fn overall(&self) -> GateDecision {
        self.decisions
            .iter()
            .map(|(_, d)| d)
            .fold(None::<&GateDecision>, |acc, d| match acc {
                Some(a) if a.verdict >= d.verdict => Some(a),
                _ => Some(d),
            })
            .cloned()
            .unwrap_or(GateDecision::DEFAULT)
    }
}

/// Evaluates every candidate piece on the graft of `pieces` onto `local`.
pub fn evaluate(
    rules: &RuleSet,
    pieces: &[Piece],
    local: &Territory,
    cfg: &MeasureConfig,
    origin: Origin,
) -> BundleDecision {
    let view = IncidenceView::graft(local, pieces);
    evaluate_on(rules, pieces, &view, local, cfg, origin)
}

/// As [`evaluate`] on a prebuilt graft view.
pub fn evaluate_on(
    rules: &RuleSet,
    pieces: &[Piece],
    view: &IncidenceView,
    local: &Territory,
    cfg: &MeasureConfig,
    origin: Origin,
) -> BundleDecision {
    let decisions = pieces
        .iter()
        .map(|p| {
            let canonical = local.resolve(p.id);
            let mut candidate = Candidate::new(view, p, origin, cfg);
            if view.contains(canonical) {
                candidate.id = canonical;
            }
            (p.id, decide(rules, &mut candidate))
        })
        .collect();
    BundleDecision { decisions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{sky, sky_pieces, SKY_IDS};
    use crate::ids::{AgentId, Timestamp};

    const UNSUPPORTED_NARRATIVES: &str =
        "reject if kind == narrative and depth(ctx) == 0 and implantation(ctx) < 1.0";

    #[test]
    fn parses_the_unsupported_narrative_rule() {
        let rule = parse_rule(UNSUPPORTED_NARRATIVES).unwrap();
        assert_eq!(rule.verdict, Verdict::Reject);
        assert_eq!(
            rule.condition.to_string(),
            "(kind == narrative and depth(ctx) == 0 and implantation(ctx) < 1)"
        );
    }

    #[test]
    fn constant_accept() {
        let rule = parse_rule("accept if true").unwrap();
        assert_eq!(rule.condition, Expr::Const(true));
    }

    #[test]
    fn content_matching_is_not_expressible() {
        let err = parse_rule("reject if content contains \"vaccine\"").unwrap_err();
        assert_eq!(err.code(), "SYNTAX_ERROR");
        assert_eq!(parse_rule("reject if author == mallory").unwrap_err().code(), "SEMANTIC_ATOM_REJECTED");
        assert_eq!(parse_rule("reject if label == \"x\"").unwrap_err().code(), "SEMANTIC_ATOM_REJECTED");
        assert_eq!(parse_rule("reject if kind == \"vaccine\"").unwrap_err().code(), "SYNTAX_ERROR");
        assert_eq!(parse_rule("reject if \"vaccine\"").unwrap_err().code(), "SYNTAX_ERROR");
    }

    #[test]
    fn other_parse_errors() {
        assert_eq!(parse_rule("reject if beauty(ctx) > 1").unwrap_err().code(), "UNKNOWN_MEASURE");
        assert_eq!(parse_rule("reject if depth(ctx) >").unwrap_err().code(), "SYNTAX_ERROR");
        assert_eq!(parse_rule("drop if true").unwrap_err().code(), "SYNTAX_ERROR");
        assert_eq!(parse_rule("accept if (true").unwrap_err().code(), "SYNTAX_ERROR");
        assert_eq!(parse_rule("accept if true true").unwrap_err().code(), "SYNTAX_ERROR");
        let err = parse_rule("accept if depth(ctx) >= x").unwrap_err();
        assert_eq!(err.position, "accept if depth(ctx) >= ".len());
    }

    #[test]
    fn atoms_and_combinators() {
        for text in [
            "quarantine if flags > 2",
            "reject if not (kind == answers or kind != edge)",
            "accept if origin == wayfarer-step and utility(ctx) ≥ 1",
            "reject if closeness(ctx, 00000000000000000000000000000001) <= 1",
            "reject if visibility(ctx) < 0.1 and flag_count(ctx) >= 1",
            "accept if kind == \"question\"",
        ] {
            parse_rule(text).unwrap_or_else(|e| panic!("{text}: {e}"));
        }
    }

    #[test]
    fn rule_file_reports_line() {
        let err = RuleSet::parse("# comment\naccept if true\n\nreject if ???\n").unwrap_err();
        assert_eq!(err.line, 4);
        let set = RuleSet::parse("# c\naccept if true\n").unwrap();
        assert_eq!(set.to_text(), "accept if true\n");
    }

    fn rules(text: &str) -> RuleSet {
        RuleSet::parse(text).unwrap()
    }

    #[test]
    fn bare_narrative_is_rejected() {
        let local = sky().territory;
        let who = AgentId::new("mallory").unwrap();
        let bare = Piece {
            id: PieceId::from_u128(0xabc),
            kind: PieceKind::Narrative,
            content: "unsupported".into(),
            source: None,
            target: None,
            label: None,
            reverse_label: None,
            public: false,
            authorships: vec![crate::piece::Authorship::single(who, Timestamp::from_unix(0))],
            aliases: vec![],
        };
        let d = evaluate(&rules(UNSUPPORTED_NARRATIVES), &[bare], &local, &MeasureConfig::default(), Origin::AcceptedShare);
        assert_eq!(d.overall(), GateDecision { verdict: Verdict::Reject, fired_rule: Some(0) });
    }

    #[test]
    fn implanted_narrative_is_not_rejected() {
        // Local territory holds only the questions; the narrative arrives
        // with its two answers edges.
        let ids = SKY_IDS;
        let all = sky_pieces();
        let mut local = Territory::new(AgentId::new("alice").unwrap());
        for p in all.iter().filter(|p| p.id == ids.n1 || p.id == ids.n3) {
            local.apply_incoming(p, Origin::Authored, Timestamp::from_unix(0));
        }
        let bundle: Vec<Piece> = all.into_iter().filter(|p| [ids.n4, ids.e2, ids.e3].contains(&p.id)).collect();
        let cfg = MeasureConfig::default();
        let view = IncidenceView::graft(&local, &bundle);
        assert_eq!(crate::measures::depth(&view, ids.n1, &cfg).unwrap(), 1);
        let d = evaluate(&rules(UNSUPPORTED_NARRATIVES), &bundle, &local, &cfg, Origin::AcceptedShare);
        assert_ne!(d.get(ids.n4).unwrap().verdict, Verdict::Reject);
    }

    #[test]
    fn empty_rules_quarantine() {
        let local = sky().territory;
        let p = sky_pieces().remove(0);
        let d = evaluate(&RuleSet::default(), &[p], &local, &MeasureConfig::default(), Origin::AcceptedShare);
        assert_eq!(d.overall(), GateDecision::DEFAULT);
        assert_eq!(d.overall().rule_path(), "default");
    }

    #[test]
    fn first_match_wins() {
        let local = sky().territory;
        let p = sky_pieces().remove(0);
        let set = rules("accept if kind == question\nreject if true\n");
        let d = evaluate(&set, &[p], &local, &MeasureConfig::default(), Origin::AcceptedShare);
        assert_eq!(d.overall(), GateDecision { verdict: Verdict::Accept, fired_rule: Some(0) });
    }

    #[test]
    fn flags_come_from_local_meta() {
        let mut local = sky().territory;
        let who = AgentId::new("bob").unwrap();
        local.red_flag(SKY_IDS.e1, &who, Timestamp::from_unix(0), "shallow").unwrap();
        let view = IncidenceView::from_territory(&local);
        assert_eq!(view.flag_count(SKY_IDS.e1), 1);
        let e1 = local.get(SKY_IDS.e1).unwrap().clone();
        let set = rules("reject if flags >= 1");
        let d = evaluate(&set, &[e1], &local, &MeasureConfig::default(), Origin::AcceptedShare);
        assert_eq!(d.overall().verdict, Verdict::Reject);
    }
}
