//! Evaluation of a parsed ruleset against one run: a trace, the concrete
//! scenario's parameter assignments and the functional scenario's
//! metadata.
//!
//! Arithmetic follows IEEE semantics (division by zero yields an
//! infinity; comparisons involving NaN are false). Reductions over an
//! empty trace use their identity elements: `min` is +inf, `max` is -inf,
//! `duration_where` is 0, `always`/`never` hold vacuously and
//! `eventually` does not.

use std::collections::BTreeMap;

use super::ast::*;
use super::{EvalError, RunOutcome};
use crate::catalogue::{ConcreteScenario, FunctionalScenario, SeverityLevel};
use crate::trace::Trace;

struct EvalCtx<'a> {
    trace: &'a Trace,
    params: &'a BTreeMap<String, f64>,
    meta: BTreeMap<&'static str, f64>,
}

/// Metadata fields exposed to `meta(..)`: `others_reasonable` (0 or 1)
/// and `demand_prior`.
fn metadata_of(fs: &FunctionalScenario) -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("others_reasonable", if fs.others_reasonable { 1.0 } else { 0.0 }),
        ("demand_prior", fs.demand_prior),
    ])
}

impl<'a> EvalCtx<'a> {
    fn num_point(&self, e: &NumExpr, row: usize) -> Result<f64, EvalError> {
        match e {
            NumExpr::Channel(id) => self
                .trace
                .channel(id)
                .map(|v| v[row])
                .ok_or_else(|| EvalError::unresolved_channel(id)),
            _ => self.num_common(e, Some(row)),
        }
    }

    fn num_scalar(&self, e: &NumExpr) -> Result<f64, EvalError> {
        match e {
            NumExpr::Channel(id) => Err(EvalError::unresolved_channel(id)),
            _ => self.num_common(e, None),
        }
    }

    fn num_common(&self, e: &NumExpr, row: Option<usize>) -> Result<f64, EvalError> {
        match e {
            NumExpr::Number(v) => Ok(*v),
            NumExpr::Channel(_) => unreachable!("handled by callers"),
            NumExpr::Param(name) => self
                .params
                .get(name)
                .copied()
                .ok_or_else(|| EvalError::unresolved_param(name)),
            NumExpr::Meta(name) => self
                .meta
                .get(name.as_str())
                .copied()
                .ok_or_else(|| EvalError::unresolved_meta(name)),
            NumExpr::Min(inner) => {
                let mut acc = f64::INFINITY;
                for i in 0..self.trace.len() {
                    acc = acc.min(self.num_point(inner, i)?);
                }
                Ok(acc)
            }
            NumExpr::Max(inner) => {
                let mut acc = f64::NEG_INFINITY;
                for i in 0..self.trace.len() {
                    acc = acc.max(self.num_point(inner, i)?);
                }
                Ok(acc)
            }
            NumExpr::DurationWhere(pred) => {
                let mut acc = 0.0;
                for i in 0..self.trace.len() {
                    if self.bool_point(pred, i)? {
                        acc += self.trace.row_duration(i);
                    }
                }
                Ok(acc)
            }
            NumExpr::Arith { op, lhs, rhs } => {
                let a = match row {
                    Some(r) => self.num_point(lhs, r)?,
                    None => self.num_scalar(lhs)?,
                };
                let b = match row {
                    Some(r) => self.num_point(rhs, r)?,
                    None => self.num_scalar(rhs)?,
                };
                Ok(op.apply(a, b))
            }
        }
    }

    fn bool_point(&self, e: &BoolExpr, row: usize) -> Result<bool, EvalError> {
        match e {
            BoolExpr::Cmp { op, lhs, rhs } => {
                Ok(op.apply(self.num_point(lhs, row)?, self.num_point(rhs, row)?))
            }
            BoolExpr::And(a, b) => Ok(self.bool_point(a, row)? && self.bool_point(b, row)?),
            BoolExpr::Or(a, b) => Ok(self.bool_point(a, row)? || self.bool_point(b, row)?),
            BoolExpr::Not(inner) => Ok(!self.bool_point(inner, row)?),
            BoolExpr::Flag(inner) => Ok(self.num_point(inner, row)? != 0.0),
        }
    }

    fn bool_scalar(&self, e: &BoolExpr) -> Result<bool, EvalError> {
        match e {
            BoolExpr::Cmp { op, lhs, rhs } => {
                Ok(op.apply(self.num_scalar(lhs)?, self.num_scalar(rhs)?))
            }
            BoolExpr::And(a, b) => Ok(self.bool_scalar(a)? && self.bool_scalar(b)?),
            BoolExpr::Or(a, b) => Ok(self.bool_scalar(a)? || self.bool_scalar(b)?),
            BoolExpr::Not(inner) => Ok(!self.bool_scalar(inner)?),
            BoolExpr::Flag(inner) => Ok(self.num_scalar(inner)? != 0.0),
        }
    }

    fn temporal(&self, t: &TemporalExpr) -> Result<bool, EvalError> {
        match t {
            TemporalExpr::Always(p) => {
                for i in 0..self.trace.len() {
                    if !self.bool_point(p, i)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            TemporalExpr::Never(p) => {
                for i in 0..self.trace.len() {
                    if self.bool_point(p, i)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            TemporalExpr::Eventually(p) => {
                for i in 0..self.trace.len() {
                    if self.bool_point(p, i)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            TemporalExpr::Scalar(b) => self.bool_scalar(b),
        }
    }
}

/// Evaluate a temporal expression against a bare trace with no scenario
/// context. Used for identity checks and by tests.
pub fn eval_temporal(
    t: &TemporalExpr,
    trace: &Trace,
    params: &BTreeMap<String, f64>,
) -> Result<bool, EvalError> {
    let ctx = EvalCtx { trace, params, meta: BTreeMap::new() };
    ctx.temporal(t)
}

/// Evaluate all rules of a set against one run.
///
/// Rules whose `when` clause is false for this run are skipped. Every
/// applicable prescriptive assertion is evaluated; if any is violated the
/// outcome is a prescriptive failure listing all violated rule names.
/// Otherwise the outcome is the maximum severity over applicable risk
/// rules, where each rule contributes the highest level whose condition
/// holds, and a run that triggers nothing scores `SNONE`.
pub fn evaluate_rules(
    rs: &RuleSet,
    trace: &Trace,
    cs: &ConcreteScenario,
    fs: &FunctionalScenario,
) -> Result<RunOutcome, EvalError> {
    let ctx = EvalCtx { trace, params: &cs.assignments, meta: metadata_of(fs) };

    let in_rule = |rule: &Rule| {
        let name = rule.name.clone();
        move |e: EvalError| e.in_rule(&name)
    };

    let mut violated = Vec::new();
    let mut severity = SeverityLevel::SNone;
    for rule in &rs.rules {
        if let Some(when) = &rule.when {
            if !ctx.bool_scalar(when).map_err(in_rule(rule))? {
                continue;
            }
        }
        match &rule.body {
            RuleBody::Prescriptive { assertion } => {
                if !ctx.temporal(assertion).map_err(in_rule(rule))? {
                    violated.push(rule.name.clone());
                }
            }
            RuleBody::Risk { clauses } => {
                for clause in clauses {
                    if clause.level > severity && ctx.temporal(&clause.condition).map_err(in_rule(rule))? {
                        severity = clause.level;
                    }
                }
            }
        }
    }

    if violated.is_empty() {
        Ok(RunOutcome::Scored { severity })
    } else {
        Ok(RunOutcome::PrescriptiveFailure { violated_rules: violated })
    }
}
