// SPDX-License-Identifier: Apache-2.0

//! Lexer and recursive-descent parser for gatekeeper rules.
//!
//! ```text
//! rule    := verdict "if" expr
//! verdict := "accept" | "reject" | "quarantine"
//! expr    := and ("or" and)*
//! and     := unary ("and" unary)*
//! unary   := "not" unary | "(" expr ")" | "true" | "false" | atom
//! atom    := measure "(" "ctx" ")" cmp number
//!          | "closeness" "(" "ctx" "," piece-id ")" cmp number
//!          | "flags" cmp number
//!          | "kind" ("==" | "!=") kind-name
//!          | "origin" ("==" | "!=") origin-name
//! ```
//!
//! There is no token for content text, labels or authors, so rules cannot
//! match on what a piece says or who wrote it.

use super::{Cmp, Expr, KindMatch, Rule, RuleError, RuleErrorCode, Verdict};
use crate::ids::PieceId;
use crate::measures::Measure;
use crate::piece::PieceKind;
use crate::territory::Origin;

/// Field names that would make a rule depend on content or authorship.
const SEMANTIC_FIELDS: &[&str] = &[
    "content",
    "text",
    "label",
    "reverse_label",
    "title",
    "author",
    "authors",
    "authorship",
    "owner",
];

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Word(String),
    Number(String),
    Quoted(String),
    Cmp(Cmp),
    NotEq,
    LParen,
    RParen,
    Comma,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    at: usize,
}

fn syntax(at: usize, message: impl Into<String>) -> RuleError {
    RuleError {
        code: RuleErrorCode::SyntaxError,
        position: at,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<Spanned>, RuleError> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (at, c) = chars[i];
        let peek = chars.get(i + 1).map(|(_, c)| *c);
        let mut push = |tok, width| {
            out.push(Spanned { tok, at });
            i += width;
        };
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => push(Tok::LParen, 1),
            ')' => push(Tok::RParen, 1),
            ',' => push(Tok::Comma, 1),
            '≤' => push(Tok::Cmp(Cmp::Le), 1),
            '≥' => push(Tok::Cmp(Cmp::Ge), 1),
            '<' if peek == Some('=') => push(Tok::Cmp(Cmp::Le), 2),
            '>' if peek == Some('=') => push(Tok::Cmp(Cmp::Ge), 2),
            '=' if peek == Some('=') => push(Tok::Cmp(Cmp::Eq), 2),
            '!' if peek == Some('=') => push(Tok::NotEq, 2),
            '<' => push(Tok::Cmp(Cmp::Lt), 1),
            '>' => push(Tok::Cmp(Cmp::Gt), 1),
            '=' => push(Tok::Cmp(Cmp::Eq), 1),
            '"' => {
                let start = i + 1;
                let end = (start..chars.len())
                    .find(|&j| chars[j].1 == '"')
                    .ok_or_else(|| syntax(at, "unterminated string"))?;
                let s: String = chars[start..end].iter().map(|(_, c)| c).collect();
                out.push(Spanned { tok: Tok::Quoted(s), at });
                i = end + 1;
            }
            c if c.is_ascii_alphanumeric() || c == '_' || c == '.' => {
                let start = i;
                while i < chars.len() && {
                    let c = chars[i].1;
                    c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '-'
                } {
                    i += 1;
                }
                let word: String = chars[start..i].iter().map(|(_, c)| c).collect();
                let tok = if word.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
                    Tok::Number(word)
                } else {
                    Tok::Word(word)
                };
                out.push(Spanned { tok, at });
            }
            other => return Err(syntax(at, format!("unexpected character {other:?}"))),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn at(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |s| s.at)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        self.pos += 1;
        t
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(x)) if x == w)
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), RuleError> {
        let at = self.at();
        match self.next() {
            Some(t) if t == tok => Ok(()),
            _ => Err(syntax(at, format!("expected {what}"))),
        }
    }

    fn expect_word(&mut self, w: &str) -> Result<(), RuleError> {
        let at = self.at();
        match self.next() {
            Some(Tok::Word(x)) if x == w => Ok(()),
            _ => Err(syntax(at, format!("expected `{w}`"))),
        }
    }

    fn expr(&mut self) -> Result<Expr, RuleError> {
        let mut terms = vec![self.and()?];
        while self.is_word("or") {
            self.pos += 1;
            terms.push(self.and()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::Any(terms) })
    }

    fn and(&mut self) -> Result<Expr, RuleError> {
        let mut terms = vec![self.unary()?];
        while self.is_word("and") {
            self.pos += 1;
            terms.push(self.unary()?);
        }
        Ok(if terms.len() == 1 { terms.pop().unwrap() } else { Expr::All(terms) })
    }

    fn unary(&mut self) -> Result<Expr, RuleError> {
        if self.is_word("not") {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        let at = self.at();
        match self.next() {
            Some(Tok::LParen) => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Word(w)) => self.word_atom(&w, at),
            Some(_) => Err(syntax(at, "expected a condition")),
            None => Err(syntax(at, "unexpected end of rule")),
        }
    }

    fn cmp(&mut self) -> Result<Cmp, RuleError> {
        let at = self.at();
        match self.next() {
            Some(Tok::Cmp(c)) => Ok(c),
            _ => Err(syntax(at, "expected a comparator (<, <=, =, >=, >)")),
        }
    }

    fn number(&mut self) -> Result<f64, RuleError> {
        let at = self.at();
        match self.next() {
            Some(Tok::Number(n)) => n.parse().map_err(|_| syntax(at, format!("bad number {n:?}"))),
            _ => Err(syntax(at, "expected a number")),
        }
    }

    fn equality(&mut self) -> Result<bool, RuleError> {
        let at = self.at();
        match self.next() {
            Some(Tok::Cmp(Cmp::Eq)) => Ok(false),
            Some(Tok::NotEq) => Ok(true),
            _ => Err(syntax(at, "expected `==` or `!=`")),
        }
    }

    /// A bare or quoted name after `kind ==` / `origin ==`.
    fn name(&mut self) -> Result<(String, usize), RuleError> {
        let at = self.at();
        match self.next() {
            Some(Tok::Word(w)) | Some(Tok::Quoted(w)) => Ok((w, at)),
            _ => Err(syntax(at, "expected a name")),
        }
    }

    fn ctx_arg(&mut self) -> Result<(), RuleError> {
        self.expect(Tok::LParen, "`(`")?;
        self.expect_word("ctx")
    }

    fn word_atom(&mut self, word: &str, at: usize) -> Result<Expr, RuleError> {
        match word {
            "true" => Ok(Expr::Const(true)),
            "false" => Ok(Expr::Const(false)),
            "kind" => {
                let negate = self.equality()?;
                let (name, name_at) = self.name()?;
                let kind = if name == "edge" {
                    KindMatch::AnyEdge
                } else {
                    KindMatch::Exact(
                        name.parse::<PieceKind>()
                            .map_err(|_| syntax(name_at, format!("unknown kind {name:?}")))?,
                    )
                };
                Ok(Expr::Kind { kind, negate })
            }
            "origin" => {
                let negate = self.equality()?;
                let (name, name_at) = self.name()?;
                let origin =
                    Origin::from_name(&name).ok_or_else(|| syntax(name_at, format!("unknown origin {name:?}")))?;
                Ok(Expr::Origin { origin, negate })
            }
            "flags" => {
                let cmp = self.cmp()?;
                let threshold = self.number()?;
                Ok(Expr::Measure {
                    measure: Measure::FlagCount,
                    cmp,
                    threshold,
                })
            }
            "closeness" if self.peek() == Some(&Tok::LParen) => {
                self.ctx_arg()?;
                self.expect(Tok::Comma, "`,` and a piece id")?;
                let id_at = self.at();
                let to = match self.next() {
                    Some(Tok::Word(w)) | Some(Tok::Number(w)) => w
                        .parse::<PieceId>()
                        .map_err(|_| syntax(id_at, format!("bad piece id {w:?}")))?,
                    _ => return Err(syntax(id_at, "expected a piece id")),
                };
                self.expect(Tok::RParen, "`)`")?;
                let cmp = self.cmp()?;
                let threshold = self.number()?;
                Ok(Expr::Closeness { to, cmp, threshold })
            }
            w if SEMANTIC_FIELDS.contains(&w) => match self.peek() {
                Some(Tok::Cmp(_)) | Some(Tok::NotEq) | Some(Tok::LParen) => Err(RuleError {
                    code: RuleErrorCode::SemanticAtomRejected,
                    position: at,
                    message: format!("rules cannot inspect `{w}`; use measures and kinds"),
                }),
                _ => Err(syntax(at, format!("unexpected `{w}`"))),
            },
            w if self.peek() == Some(&Tok::LParen) => {
                let measure = match w.parse::<Measure>() {
                    Ok(m) if m.is_unary() => m,
                    _ => {
                        return Err(RuleError {
                            code: RuleErrorCode::UnknownMeasure,
                            position: at,
                            message: format!("unknown measure `{w}`"),
                        })
                    }
                };
                self.ctx_arg()?;
                self.expect(Tok::RParen, "`)`")?;
                let cmp = self.cmp()?;
                let threshold = self.number()?;
                Ok(Expr::Measure {
                    measure,
                    cmp,
                    threshold,
                })
            }
            w => Err(syntax(at, format!("unexpected `{w}`"))),
        }
    }
}

/// Parses one rule such as `reject if kind == narrative and depth(ctx) == 0`.
pub fn parse_rule(text: &str) -> Result<Rule, RuleError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let at = p.at();
    let verdict = match p.next() {
        Some(Tok::Word(w)) => match w.as_str() {
            "accept" => Verdict::Accept,
            "reject" => Verdict::Reject,
            "quarantine" => Verdict::Quarantine,
            _ => return Err(syntax(at, "a rule starts with accept, reject or quarantine")),
        },
        _ => return Err(syntax(at, "a rule starts with accept, reject or quarantine")),
    };
    p.expect_word("if")?;
    let condition = p.expr()?;
    if p.pos < p.toks.len() {
        return Err(syntax(p.at(), "unexpected trailing input"));
    }
    Ok(Rule {
        verdict,
        condition,
        text: text.trim().to_string(),
    })
}
