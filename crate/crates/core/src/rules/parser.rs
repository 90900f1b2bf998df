//! Recursive-descent parser for the scoring-rule language.
//!
//! Grammar (whitespace-insensitive, `#` comments):
//!
//! ```text
//! ruleset    := rule+
//! rule       := "rule" IDENT ("prescriptive" assertbody | "risk" riskbody)
//! assertbody := [whenclause] "assert" texpr
//! riskbody   := [whenclause] ("severity" LEVEL "if" texpr)+
//! whenclause := "when" bexpr                     # params/metadata only
//! texpr      := ("always"|"never"|"eventually") "(" bexpr ")" | bexpr
//! bexpr      := comparison {("and"|"or") comparison} | "not" bexpr | "(" bexpr ")"
//! comparison := aexpr ("<"|"<="|">"|">="|"=="|"!=") aexpr
//! aexpr      := NUMBER | chanref | "param" "(" STRING ")" | "meta" "(" STRING ")"
//!             | ("min"|"max") "(" aexpr ")" | "duration_where" "(" bexpr ")"
//!             | aexpr ("+"|"-"|"*"|"/") aexpr | "(" aexpr ")"
//! chanref    := IDENT "(" IDENT {"," IDENT} ")"
//! LEVEL      := "S0".."S3"
//! ```
//!
//! Channel references inside `always`/`never`/`eventually` are pointwise;
//! anywhere else they must be wrapped in `min`/`max`/`duration_where`.
//! `when` clauses may reference only `param(..)` and `meta(..)`. A bare
//! `param(..)`/`meta(..)` is accepted as a boolean meaning "nonzero"; the
//! string argument of `param`/`meta` may also be written as a bare
//! identifier.

use std::collections::BTreeSet;

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::ParseError;
use crate::catalogue::SeverityLevel;
use crate::trace::ChannelId;

/// Expression context: what channel references and reductions may appear.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ctx {
    /// Inside a temporal operator or reduction: channels are pointwise.
    Pointwise,
    /// Trace-level scalar: channels only under min/max/duration_where.
    Scalar,
    /// Applicability clause: parameters and metadata only.
    When,
}

const RESERVED: &[&str] = &[
    "rule",
    "prescriptive",
    "risk",
    "when",
    "assert",
    "severity",
    "if",
    "always",
    "never",
    "eventually",
    "and",
    "or",
    "not",
    "min",
    "max",
    "duration_where",
    "param",
    "meta",
];

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

/// Parse a complete ruleset and enforce its structural invariants:
/// unique rule names, distinct severity levels within each risk rule, and
/// the channel-context rules above.
pub fn parse_ruleset(text: &str) -> Result<RuleSet, ParseError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let mut rules = Vec::new();
    let mut names = BTreeSet::new();
    if p.at_end() {
        return Err(ParseError::new(1, 1, "empty ruleset".into()));
    }
    while !p.at_end() {
        let (line, col) = p.here();
        let rule = p.rule()?;
        if !names.insert(rule.name.clone()) {
            return Err(ParseError::new(line, col, format!("duplicate rule name `{}`", rule.name)));
        }
        rules.push(rule);
    }
    Ok(RuleSet { rules })
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn here(&self) -> (usize, usize) {
        match self.tokens.get(self.pos) {
            Some(t) => (t.line, t.col),
            None => self
                .tokens
                .last()
                .map(|t| (t.line, t.col + 1))
                .unwrap_or((1, 1)),
        }
    }

    fn error(&self, message: String) -> ParseError {
        let (line, col) = self.here();
        ParseError::new(line, col, message)
    }

    fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn peek_ident(&self) -> Option<&str> {
        match self.peek() {
            Some(TokenKind::Ident(s)) => Some(s.as_str()),
            _ => None,
        }
    }

    fn advance(&mut self) -> Option<&TokenKind> {
        let t = self.tokens.get(self.pos).map(|t| &t.kind);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek_ident() == Some(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{kw}`")))
        }
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&kind) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(TokenKind::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    fn rule(&mut self) -> Result<Rule, ParseError> {
        self.expect_keyword("rule")?;
        let name = self.ident("rule name")?;
        if RESERVED.contains(&name.as_str()) {
            return Err(self.error(format!("`{name}` is a reserved word")));
        }

        if self.eat_keyword("prescriptive") {
            let when = self.maybe_when()?;
            self.expect_keyword("assert")?;
            let assertion = self.texpr()?;
            Ok(Rule { name, when, body: RuleBody::Prescriptive { assertion } })
        } else if self.eat_keyword("risk") {
            let when = self.maybe_when()?;
            let mut clauses = Vec::new();
            let mut levels = BTreeSet::new();
            loop {
                let (line, col) = self.here();
                if !self.eat_keyword("severity") {
                    if clauses.is_empty() {
                        return Err(self.error("risk rule needs at least one `severity` clause".into()));
                    }
                    break;
                }
                let level = self.severity_level()?;
                if !levels.insert(level) {
                    return Err(ParseError::new(
                        line,
                        col,
                        format!("duplicate severity level {level}"),
                    ));
                }
                self.expect_keyword("if")?;
                let condition = self.texpr()?;
                clauses.push(RiskClause { level, condition });
            }
            Ok(Rule { name, when, body: RuleBody::Risk { clauses } })
        } else {
            Err(self.error("expected `prescriptive` or `risk`".into()))
        }
    }

    fn severity_level(&mut self) -> Result<SeverityLevel, ParseError> {
        let (line, col) = self.here();
        let name = self.ident("severity level S0..S3")?;
        match SeverityLevel::from_name(&name) {
            Some(SeverityLevel::SNone) | None => Err(ParseError::new(
                line,
                col,
                format!("expected severity level S0..S3, got `{name}`"),
            )),
            Some(level) => Ok(level),
        }
    }

    fn maybe_when(&mut self) -> Result<Option<BoolExpr>, ParseError> {
        if self.eat_keyword("when") {
            Ok(Some(self.bool_expr(Ctx::When)?))
        } else {
            Ok(None)
        }
    }

    fn texpr(&mut self) -> Result<TemporalExpr, ParseError> {
        for (kw, build) in [
            ("always", TemporalExpr::Always as fn(BoolExpr) -> TemporalExpr),
            ("never", TemporalExpr::Never as fn(BoolExpr) -> TemporalExpr),
            ("eventually", TemporalExpr::Eventually as fn(BoolExpr) -> TemporalExpr),
        ] {
            if self.peek_ident() == Some(kw) {
                self.pos += 1;
                self.expect(TokenKind::LParen, "`(`")?;
                let inner = self.bool_expr(Ctx::Pointwise)?;
                self.expect(TokenKind::RParen, "`)`")?;
                return Ok(build(inner));
            }
        }
        Ok(TemporalExpr::Scalar(self.bool_expr(Ctx::Scalar)?))
    }

    fn bool_expr(&mut self, ctx: Ctx) -> Result<BoolExpr, ParseError> {
        if self.eat_keyword("not") {
            // `not` binds the whole remaining boolean expression.
            return Ok(BoolExpr::Not(Box::new(self.bool_expr(ctx)?)));
        }
        let mut lhs = self.bool_operand(ctx)?;
        loop {
            if self.eat_keyword("and") {
                let rhs = self.bool_operand(ctx)?;
                lhs = BoolExpr::And(Box::new(lhs), Box::new(rhs));
            } else if self.eat_keyword("or") {
                let rhs = self.bool_operand(ctx)?;
                lhs = BoolExpr::Or(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn bool_operand(&mut self, ctx: Ctx) -> Result<BoolExpr, ParseError> {
        if self.eat_keyword("not") {
            return Ok(BoolExpr::Not(Box::new(self.bool_operand(ctx)?)));
        }
        if self.peek() == Some(&TokenKind::LParen) {
            // `(` may open a parenthesized boolean or an arithmetic group;
            // try the comparison route first and fall back.
            let saved = self.pos;
            match self.comparison(ctx) {
                Ok(e) => return Ok(e),
                Err(_) => self.pos = saved,
            }
            self.expect(TokenKind::LParen, "`(`")?;
            let inner = self.bool_expr(ctx)?;
            self.expect(TokenKind::RParen, "`)`")?;
            return Ok(inner);
        }
        self.comparison(ctx)
    }

    fn comparison(&mut self, ctx: Ctx) -> Result<BoolExpr, ParseError> {
        let lhs = self.arith(ctx)?;
        let op = match self.peek() {
            Some(TokenKind::Lt) => Some(CmpOp::Lt),
            Some(TokenKind::Le) => Some(CmpOp::Le),
            Some(TokenKind::Gt) => Some(CmpOp::Gt),
            Some(TokenKind::Ge) => Some(CmpOp::Ge),
            Some(TokenKind::EqEq) => Some(CmpOp::Eq),
            Some(TokenKind::Ne) => Some(CmpOp::Ne),
            _ => None,
        };
        match op {
            Some(op) => {
                self.pos += 1;
                let rhs = self.arith(ctx)?;
                Ok(BoolExpr::Cmp { op, lhs, rhs })
            }
            None => match lhs {
                // Bare parameter/metadata reference used as a boolean.
                NumExpr::Param(_) | NumExpr::Meta(_) => Ok(BoolExpr::Flag(lhs)),
                _ => Err(self.error("expected comparison operator".into())),
            },
        }
    }

    fn arith(&mut self, ctx: Ctx) -> Result<NumExpr, ParseError> {
        let mut lhs = self.term(ctx)?;
        loop {
            let op = match self.peek() {
                Some(TokenKind::Plus) => ArithOp::Add,
                Some(TokenKind::Minus) => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term(ctx)?;
            lhs = NumExpr::Arith { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
    }

    fn term(&mut self, ctx: Ctx) -> Result<NumExpr, ParseError> {
        let mut lhs = self.factor(ctx)?;
        loop {
            let op = match self.peek() {
                Some(TokenKind::Star) => ArithOp::Mul,
                Some(TokenKind::Slash) => ArithOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor(ctx)?;
            lhs = NumExpr::Arith { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
    }

    fn factor(&mut self, ctx: Ctx) -> Result<NumExpr, ParseError> {
        let (line, col) = self.here();
        match self.peek() {
            Some(TokenKind::Number(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(NumExpr::Number(v))
            }
            Some(TokenKind::LParen) => {
                self.pos += 1;
                let inner = self.arith(ctx)?;
                self.expect(TokenKind::RParen, "`)`")?;
                Ok(inner)
            }
            Some(TokenKind::Ident(_)) => {
                let name = self.ident("expression")?;
                match name.as_str() {
                    "param" | "meta" => {
                        self.expect(TokenKind::LParen, "`(`")?;
                        let arg = match self.advance() {
                            Some(TokenKind::Str(s)) => s.clone(),
                            Some(TokenKind::Ident(s)) => s.clone(),
                            _ => {
                                return Err(ParseError::new(
                                    line,
                                    col,
                                    format!("{name}(..) takes a quoted name"),
                                ))
                            }
                        };
                        self.expect(TokenKind::RParen, "`)`")?;
                        if name == "param" {
                            Ok(NumExpr::Param(arg))
                        } else {
                            Ok(NumExpr::Meta(arg))
                        }
                    }
                    "min" | "max" => {
                        if ctx == Ctx::When {
                            return Err(ParseError::new(
                                line,
                                col,
                                "trace reductions are not allowed in a when clause".into(),
                            ));
                        }
                        self.expect(TokenKind::LParen, "`(`")?;
                        let inner = self.arith(Ctx::Pointwise)?;
                        self.expect(TokenKind::RParen, "`)`")?;
                        if name == "min" {
                            Ok(NumExpr::Min(Box::new(inner)))
                        } else {
                            Ok(NumExpr::Max(Box::new(inner)))
                        }
                    }
                    "duration_where" => {
                        if ctx == Ctx::When {
                            return Err(ParseError::new(
                                line,
                                col,
                                "trace reductions are not allowed in a when clause".into(),
                            ));
                        }
                        self.expect(TokenKind::LParen, "`(`")?;
                        let inner = self.bool_expr(Ctx::Pointwise)?;
                        self.expect(TokenKind::RParen, "`)`")?;
                        Ok(NumExpr::DurationWhere(Box::new(inner)))
                    }
                    _ if RESERVED.contains(&name.as_str()) => {
                        Err(ParseError::new(line, col, format!("unexpected keyword `{name}`")))
                    }
                    _ => self.chanref(name, ctx, line, col),
                }
            }
            _ => Err(self.error("expected expression".into())),
        }
    }

    fn chanref(
        &mut self,
        name: String,
        ctx: Ctx,
        line: usize,
        col: usize,
    ) -> Result<NumExpr, ParseError> {
        if self.peek() != Some(&TokenKind::LParen) {
            return Err(ParseError::new(
                line,
                col,
                format!("`{name}` is not a value; channels take actor arguments, e.g. {name}(ego)"),
            ));
        }
        self.pos += 1;
        let mut actors = Vec::new();
        loop {
            match self.advance() {
                Some(TokenKind::Ident(a)) => actors.push(a.clone()),
                Some(TokenKind::Str(_)) | Some(TokenKind::Number(_)) => {
                    return Err(ParseError::new(line, col, format!("unknown function name `{name}`")));
                }
                _ => return Err(self.error("expected actor identifier".into())),
            }
            match self.peek() {
                Some(TokenKind::Comma) => {
                    self.pos += 1;
                }
                Some(TokenKind::RParen) => {
                    self.pos += 1;
                    break;
                }
                _ => return Err(self.error("expected `,` or `)`".into())),
            }
        }
        let id: ChannelId = format!("{name}:{}", actors.join(":"))
            .parse()
            .map_err(|e: String| ParseError::new(line, col, e))?;
        match ctx {
            Ctx::Pointwise => Ok(NumExpr::Channel(id)),
            Ctx::Scalar => Err(ParseError::new(
                line,
                col,
                format!(
                    "channel reference `{id}` outside always/never/eventually must be wrapped in min/max/duration_where"
                ),
            )),
            Ctx::When => Err(ParseError::new(
                line,
                col,
                format!("channel reference `{id}` is not allowed in a when clause"),
            )),
        }
    }
}
