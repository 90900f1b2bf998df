//! Abstract syntax of the scoring-rule language, plus a printer whose
//! output reparses to an equal tree.

use std::fmt;

use crate::catalogue::SeverityLevel;
use crate::trace::ChannelId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }

    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            ArithOp::Add => a + b,
            ArithOp::Sub => a - b,
            ArithOp::Mul => a * b,
            ArithOp::Div => a / b,
        }
    }
}

/// Arithmetic expression. `Channel` is only meaningful pointwise (inside a
/// temporal operator) or underneath `min`/`max`/`duration_where`.
#[derive(Debug, Clone, PartialEq)]
pub enum NumExpr {
    Number(f64),
    Channel(ChannelId),
    Param(String),
    Meta(String),
    /// Minimum of a pointwise expression over all trace rows.
    Min(Box<NumExpr>),
    /// Maximum of a pointwise expression over all trace rows.
    Max(Box<NumExpr>),
    /// Total time (seconds) during which a pointwise predicate holds.
    DurationWhere(Box<BoolExpr>),
    Arith { op: ArithOp, lhs: Box<NumExpr>, rhs: Box<NumExpr> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoolExpr {
    Cmp { op: CmpOp, lhs: NumExpr, rhs: NumExpr },
    And(Box<BoolExpr>, Box<BoolExpr>),
    Or(Box<BoolExpr>, Box<BoolExpr>),
    Not(Box<BoolExpr>),
    /// A bare `param(..)`/`meta(..)` used as a boolean: true iff nonzero.
    Flag(NumExpr),
}

/// Top-level body of an assertion or severity condition.
#[derive(Debug, Clone, PartialEq)]
pub enum TemporalExpr {
    /// Holds at every row (vacuously true on an empty trace).
    Always(BoolExpr),
    /// Holds at no row.
    Never(BoolExpr),
    /// Holds at some row.
    Eventually(BoolExpr),
    /// Trace-level scalar condition; channel references inside must be
    /// wrapped in `min`/`max`/`duration_where`.
    Scalar(BoolExpr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskClause {
    pub level: SeverityLevel,
    pub condition: TemporalExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleBody {
    Prescriptive { assertion: TemporalExpr },
    Risk { clauses: Vec<RiskClause> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: String,
    /// Applicability over concrete parameters and functional metadata;
    /// a rule whose `when` evaluates false is skipped for that run.
    pub when: Option<BoolExpr>,
    pub body: RuleBody,
}

impl Rule {
    pub fn is_prescriptive(&self) -> bool {
        matches!(self.body, RuleBody::Prescriptive { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

// Printing. Operands of `and`/`or` are parenthesized unless atomic, which
// keeps the output unambiguous under the parser's single-precedence
// boolean chain.

fn fmt_num(e: &NumExpr, f: &mut fmt::Formatter<'_>, parent_prec: u8) -> fmt::Result {
    let prec = match e {
        NumExpr::Arith { op: ArithOp::Add | ArithOp::Sub, .. } => 1,
        NumExpr::Arith { op: ArithOp::Mul | ArithOp::Div, .. } => 2,
        _ => 3,
    };
    let parens = prec < parent_prec;
    if parens {
        f.write_str("(")?;
    }
    match e {
        NumExpr::Number(v) => write!(f, "{v}")?,
        NumExpr::Channel(id) => {
            write!(f, "{}({})", id.name, id.actors.join(", "))?;
        }
        NumExpr::Param(name) => write!(f, "param(\"{name}\")")?,
        NumExpr::Meta(name) => write!(f, "meta(\"{name}\")")?,
        NumExpr::Min(inner) => {
            f.write_str("min(")?;
            fmt_num(inner, f, 0)?;
            f.write_str(")")?;
        }
        NumExpr::Max(inner) => {
            f.write_str("max(")?;
            fmt_num(inner, f, 0)?;
            f.write_str(")")?;
        }
        NumExpr::DurationWhere(inner) => {
            f.write_str("duration_where(")?;
            fmt_bool(inner, f, false)?;
            f.write_str(")")?;
        }
        NumExpr::Arith { op, lhs, rhs } => {
            // Left-associative: the right child needs parens at equal
            // precedence, the left does not.
            fmt_num(lhs, f, prec)?;
            write!(f, " {} ", op.symbol())?;
            fmt_num(rhs, f, prec + 1)?;
        }
    }
    if parens {
        f.write_str(")")?;
    }
    Ok(())
}

fn bool_is_atomic(e: &BoolExpr) -> bool {
    matches!(e, BoolExpr::Cmp { .. } | BoolExpr::Flag(_))
}

fn fmt_bool(e: &BoolExpr, f: &mut fmt::Formatter<'_>, operand: bool) -> fmt::Result {
    let parens = operand && !bool_is_atomic(e);
    if parens {
        f.write_str("(")?;
    }
    match e {
        BoolExpr::Cmp { op, lhs, rhs } => {
            fmt_num(lhs, f, 0)?;
            write!(f, " {} ", op.symbol())?;
            fmt_num(rhs, f, 0)?;
        }
        BoolExpr::And(lhs, rhs) => {
            fmt_bool(lhs, f, !matches!(**lhs, BoolExpr::And(..) | BoolExpr::Or(..)) && !bool_is_atomic(lhs))?;
            f.write_str(" and ")?;
            fmt_bool(rhs, f, true)?;
        }
        BoolExpr::Or(lhs, rhs) => {
            fmt_bool(lhs, f, !matches!(**lhs, BoolExpr::And(..) | BoolExpr::Or(..)) && !bool_is_atomic(lhs))?;
            f.write_str(" or ")?;
            fmt_bool(rhs, f, true)?;
        }
        BoolExpr::Not(inner) => {
            f.write_str("not ")?;
            fmt_bool(inner, f, true)?;
        }
        BoolExpr::Flag(inner) => fmt_num(inner, f, 0)?,
    }
    if parens {
        f.write_str(")")?;
    }
    Ok(())
}

impl fmt::Display for NumExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_num(self, f, 0)
    }
}

impl fmt::Display for BoolExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_bool(self, f, false)
    }
}

impl fmt::Display for TemporalExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TemporalExpr::Always(b) => {
                f.write_str("always(")?;
                fmt_bool(b, f, false)?;
                f.write_str(")")
            }
            TemporalExpr::Never(b) => {
                f.write_str("never(")?;
                fmt_bool(b, f, false)?;
                f.write_str(")")
            }
            TemporalExpr::Eventually(b) => {
                f.write_str("eventually(")?;
                fmt_bool(b, f, false)?;
                f.write_str(")")
            }
            TemporalExpr::Scalar(b) => fmt_bool(b, f, false),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.body {
            RuleBody::Prescriptive { assertion } => {
                writeln!(f, "rule {} prescriptive", self.name)?;
                if let Some(w) = &self.when {
                    writeln!(f, "  when {w}")?;
                }
                write!(f, "  assert {assertion}")
            }
            RuleBody::Risk { clauses } => {
                writeln!(f, "rule {} risk", self.name)?;
                if let Some(w) = &self.when {
                    writeln!(f, "  when {w}")?;
                }
                for (i, c) in clauses.iter().enumerate() {
                    if i > 0 {
                        writeln!(f)?;
                    }
                    write!(f, "  severity {} if {}", c.level, c.condition)?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, rule) in self.rules.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
                writeln!(f)?;
            }
            write!(f, "{rule}")?;
        }
        writeln!(f)
    }
}
