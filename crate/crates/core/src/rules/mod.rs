//! Outcome scoring rules: a small declarative language of prescriptive
//! assertions and risk-based severity conditions, evaluated per run
//! against a trace and the scenario's parameters and metadata.
//!
//! A ruleset file holds one or more rules:
//!
//! ```text
//! # A prescriptive rule: must hold on every run it applies to.
//! rule no_collision prescriptive
//!   when meta(others_reasonable)
//!   assert never(collision(ego, lead) > 0)
//!
//! # A risk rule: assigns the highest severity whose condition holds.
//! rule crash_severity risk
//!   severity S1 if eventually(collision(ego, lead) > 0)
//!   severity S3 if eventually(collision(ego, lead) > 0 and closing_speed(ego, lead) >= 11)
//! ```
//!
//! Semantics are sampled-time: temporal operators quantify over trace
//! rows, and `duration_where` sums row durations (the last row contributes
//! the nominal step). Severity across multiple risk rules combines by
//! maximum, so adding a rule can never lower a run's score, and a violated
//! prescriptive assertion dominates every risk score.

mod ast;
mod eval;
mod lexer;
mod parser;

pub use ast::{
    ArithOp, BoolExpr, CmpOp, NumExpr, RiskClause, Rule, RuleBody, RuleSet, TemporalExpr,
};
pub use eval::{eval_temporal, evaluate_rules};
pub use parser::parse_ruleset;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalogue::SeverityLevel;
use crate::trace::ChannelId;

/// Result of scoring one concrete run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunOutcome {
    /// At least one applicable prescriptive rule was violated.
    PrescriptiveFailure { violated_rules: Vec<String> },
    /// No prescriptive violation; the run's severity level.
    Scored { severity: SeverityLevel },
}

impl RunOutcome {
    pub fn severity(&self) -> Option<SeverityLevel> {
        match self {
            RunOutcome::Scored { severity } => Some(*severity),
            RunOutcome::PrescriptiveFailure { .. } => None,
        }
    }
}

/// Parse failure with source position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(line: usize, col: usize, message: String) -> ParseError {
        ParseError { line, col, message }
    }
}

/// Failure to resolve a reference while evaluating a rule.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("rule `{rule}`: unresolvable channel `{channel}`")]
    UnresolvedChannel { rule: String, channel: String },
    #[error("rule `{rule}`: unresolvable parameter `{name}`")]
    UnresolvedParam { rule: String, name: String },
    #[error("rule `{rule}`: unresolvable metadata field `{name}`")]
    UnresolvedMeta { rule: String, name: String },
}

impl EvalError {
    fn unresolved_channel(id: &ChannelId) -> EvalError {
        EvalError::UnresolvedChannel { rule: String::new(), channel: id.to_string() }
    }

    fn unresolved_param(name: &str) -> EvalError {
        EvalError::UnresolvedParam { rule: String::new(), name: name.to_string() }
    }

    fn unresolved_meta(name: &str) -> EvalError {
        EvalError::UnresolvedMeta { rule: String::new(), name: name.to_string() }
    }

    fn in_rule(mut self, rule_name: &str) -> EvalError {
        match &mut self {
            EvalError::UnresolvedChannel { rule, .. }
            | EvalError::UnresolvedParam { rule, .. }
            | EvalError::UnresolvedMeta { rule, .. } => {
                rule_name.clone_into(rule);
            }
        }
        self
    }
}

/// Collision-severity thresholds on the speed change at impact (m/s).
/// `delta_v` below `s1` bins to S0, below `s2` to S1, below `s3` to S2,
/// and everything else to S3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaVThresholds {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl Default for DeltaVThresholds {
    fn default() -> Self {
        DeltaVThresholds { s1: 1.0, s2: 4.0, s3: 11.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("delta-v must be nonnegative, got {0}")]
pub struct NegativeDeltaV(pub f64);

/// Bin a collision's speed change into a severity level.
pub fn severity_from_delta_v(
    delta_v_mps: f64,
    thresholds: &DeltaVThresholds,
) -> Result<SeverityLevel, NegativeDeltaV> {
    if delta_v_mps < 0.0 {
        return Err(NegativeDeltaV(delta_v_mps));
    }
    Ok(if delta_v_mps < thresholds.s1 {
        SeverityLevel::S0
    } else if delta_v_mps < thresholds.s2 {
        SeverityLevel::S1
    } else if delta_v_mps < thresholds.s3 {
        SeverityLevel::S2
    } else {
        SeverityLevel::S3
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalogue::{ConcreteScenario, Exposure, FunctionalScenario};
    use crate::trace::{ChannelId, Trace};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn functional(others_reasonable: bool) -> FunctionalScenario {
        FunctionalScenario {
            id: "fs".into(),
            description: String::new(),
            tags: vec![],
            exposure: Exposure::RatePerHour { value: 1.0 },
            others_reasonable,
            demand_prior: 1.0,
        }
    }

    fn concrete(assignments: &[(&str, f64)]) -> ConcreteScenario {
        ConcreteScenario {
            id: "c".into(),
            logical_id: "ls".into(),
            seed: 0,
            assignments: assignments.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn crash_trace() -> Trace {
        let n = 6;
        let dt = 0.1;
        let time: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let collision: Vec<f64> = (0..n).map(|i| if i >= 4 { 1.0 } else { 0.0 }).collect();
        Trace::new(
            dt,
            time,
            vec![
                (ChannelId::pair("collision", "ego", "lead"), collision),
                (ChannelId::pair("closing_speed", "ego", "lead"), vec![6.0; n]),
                (ChannelId::single("speed", "ego"), vec![20.0; n]),
            ],
        )
        .unwrap()
    }

    fn calm_trace() -> Trace {
        let n = 6;
        let dt = 0.1;
        let time: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        Trace::new(
            dt,
            time,
            vec![
                (ChannelId::pair("collision", "ego", "lead"), vec![0.0; n]),
                (ChannelId::pair("closing_speed", "ego", "lead"), vec![-1.0; n]),
                (ChannelId::single("speed", "ego"), vec![20.0; n]),
            ],
        )
        .unwrap()
    }

    const GUARDED_RULESET: &str = "\
rule no_collision prescriptive
  when meta(others_reasonable)
  assert never(collision(ego, lead) > 0)

rule crash_severity risk
  when not meta(others_reasonable)
  severity S1 if eventually(collision(ego, lead) > 0)
  severity S3 if eventually(collision(ego, lead) > 0 and closing_speed(ego, lead) >= 11)
";

    #[test]
    fn collision_with_reasonable_others_is_prescriptive_failure() {
        let rs = parse_ruleset(GUARDED_RULESET).unwrap();
        let out = evaluate_rules(&rs, &crash_trace(), &concrete(&[]), &functional(true)).unwrap();
        match out {
            RunOutcome::PrescriptiveFailure { violated_rules } => {
                assert_eq!(violated_rules, vec!["no_collision".to_string()]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn collision_with_unreasonable_others_scores_severity() {
        let rs = parse_ruleset(GUARDED_RULESET).unwrap();
        let out = evaluate_rules(&rs, &crash_trace(), &concrete(&[]), &functional(false)).unwrap();
        assert_eq!(out, RunOutcome::Scored { severity: SeverityLevel::S1 });
    }

    #[test]
    fn quiet_run_scores_snone() {
        let rs = parse_ruleset(GUARDED_RULESET).unwrap();
        let out = evaluate_rules(&rs, &calm_trace(), &concrete(&[]), &functional(false)).unwrap();
        assert_eq!(out, RunOutcome::Scored { severity: SeverityLevel::SNone });
    }

    #[test]
    fn prescriptive_dominates_risk() {
        let text = "\
rule no_collision prescriptive assert never(collision(ego, lead) > 0)
rule sev risk severity S0 if eventually(collision(ego, lead) > 0)
";
        let rs = parse_ruleset(text).unwrap();
        let out = evaluate_rules(&rs, &crash_trace(), &concrete(&[]), &functional(true)).unwrap();
        assert!(matches!(out, RunOutcome::PrescriptiveFailure { .. }));
    }

    #[test]
    fn all_violated_prescriptive_rules_are_collected() {
        let text = "\
rule a prescriptive assert never(collision(ego, lead) > 0)
rule b prescriptive assert always(speed(ego) < 5)
rule c prescriptive assert always(speed(ego) > 0)
";
        let rs = parse_ruleset(text).unwrap();
        let out = evaluate_rules(&rs, &crash_trace(), &concrete(&[]), &functional(true)).unwrap();
        match out {
            RunOutcome::PrescriptiveFailure { violated_rules } => {
                assert_eq!(violated_rules, vec!["a".to_string(), "b".to_string()]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unresolvable_channel_names_rule_and_reference() {
        let rs = parse_ruleset("rule r prescriptive assert always(gap(ego, ghost) > 1)").unwrap();
        let e = evaluate_rules(&rs, &calm_trace(), &concrete(&[]), &functional(true)).unwrap_err();
        match e {
            EvalError::UnresolvedChannel { rule, channel } => {
                assert_eq!(rule, "r");
                assert_eq!(channel, "gap:ego:ghost");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn params_feed_conditions() {
        let text = "rule r risk when param(v) >= 10 severity S0 if max(speed(ego)) > param(v)";
        let rs = parse_ruleset(text).unwrap();
        let hit = evaluate_rules(&rs, &calm_trace(), &concrete(&[("v", 15.0)]), &functional(true))
            .unwrap();
        assert_eq!(hit, RunOutcome::Scored { severity: SeverityLevel::S0 });
        // Applicability false: skipped entirely.
        let skip = evaluate_rules(&rs, &calm_trace(), &concrete(&[("v", 5.0)]), &functional(true))
            .unwrap();
        assert_eq!(skip, RunOutcome::Scored { severity: SeverityLevel::SNone });
    }

    #[test]
    fn adding_a_risk_rule_never_lowers_severity() {
        let base = "rule a risk severity S1 if eventually(collision(ego, lead) > 0)";
        let extended = "\
rule a risk severity S1 if eventually(collision(ego, lead) > 0)
rule b risk severity S0 if always(speed(ego) > 0)
";
        for tr in [crash_trace(), calm_trace()] {
            let lo = evaluate_rules(
                &parse_ruleset(base).unwrap(),
                &tr,
                &concrete(&[]),
                &functional(false),
            )
            .unwrap();
            let hi = evaluate_rules(
                &parse_ruleset(extended).unwrap(),
                &tr,
                &concrete(&[]),
                &functional(false),
            )
            .unwrap();
            assert!(hi.severity().unwrap() >= lo.severity().unwrap());
        }
    }

    #[test]
    fn delta_v_bins() {
        let t = DeltaVThresholds::default();
        assert_eq!(severity_from_delta_v(0.0, &t).unwrap(), SeverityLevel::S0);
        assert_eq!(severity_from_delta_v(5.0, &t).unwrap(), SeverityLevel::S2);
        assert_eq!(severity_from_delta_v(30.0, &t).unwrap(), SeverityLevel::S3);
        assert!(severity_from_delta_v(-0.1, &t).is_err());
    }

    #[test]
    fn duration_where_matches_total_duration_when_always_true() {
        let tr = calm_trace();
        let rs = parse_ruleset("rule r prescriptive assert duration_where(speed(ego) > 0) == 0.6")
            .unwrap();
        // 6 rows at dt 0.1: five steps of 0.1 plus the nominal step for
        // the final row.
        let total = tr.total_duration();
        assert!((total - 0.6).abs() < 1e-12);
        match &rs.rules[0].body {
            RuleBody::Prescriptive { assertion } => {
                assert!(eval_temporal(assertion, &tr, &BTreeMap::new()).unwrap());
            }
            _ => unreachable!(),
        }
    }

    // Randomized traces for the temporal identities.
    fn random_trace(seed: u64, rows: usize) -> Trace {
        let dt = 0.1;
        let time: Vec<f64> = (0..rows).map(|i| i as f64 * dt).collect();
        let speed: Vec<f64> = (0..rows)
            .map(|i| crate::sampling::unit_deviate(seed, i as u64, "speed") * 30.0)
            .collect();
        Trace::new(dt, time, vec![(ChannelId::single("speed", "ego"), speed)]).unwrap()
    }

    proptest! {
        #[test]
        fn temporal_identities(seed in any::<u64>(), rows in 0usize..40, threshold in 0.0f64..30.0) {
            let tr = random_trace(seed, rows);
            let p = BoolExpr::Cmp {
                op: CmpOp::Gt,
                lhs: NumExpr::Channel(ChannelId::single("speed", "ego")),
                rhs: NumExpr::Number(threshold),
            };
            let not_p = BoolExpr::Not(Box::new(p.clone()));
            let params = BTreeMap::new();

            let always = eval_temporal(&TemporalExpr::Always(p.clone()), &tr, &params).unwrap();
            let never = eval_temporal(&TemporalExpr::Never(p.clone()), &tr, &params).unwrap();
            let eventually = eval_temporal(&TemporalExpr::Eventually(p.clone()), &tr, &params).unwrap();
            let eventually_not = eval_temporal(&TemporalExpr::Eventually(not_p), &tr, &params).unwrap();

            // always(p) == not eventually(not p); never(p) == not eventually(p).
            prop_assert_eq!(always, !eventually_not);
            prop_assert_eq!(never, !eventually);
        }

        #[test]
        fn duration_where_is_bounded(seed in any::<u64>(), rows in 0usize..40, threshold in 0.0f64..30.0) {
            let tr = random_trace(seed, rows);
            let pred = BoolExpr::Cmp {
                op: CmpOp::Gt,
                lhs: NumExpr::Channel(ChannelId::single("speed", "ego")),
                rhs: NumExpr::Number(threshold),
            };
            let expr = TemporalExpr::Scalar(BoolExpr::Cmp {
                op: CmpOp::Le,
                lhs: NumExpr::DurationWhere(Box::new(pred)),
                rhs: NumExpr::Number(tr.total_duration()),
            });
            prop_assert!(eval_temporal(&expr, &tr, &BTreeMap::new()).unwrap());
        }

        #[test]
        fn evaluation_is_pure(seed in any::<u64>(), rows in 1usize..30) {
            let tr = random_trace(seed, rows);
            let rs = parse_ruleset(
                "rule r risk severity S0 if max(speed(ego)) > 15 severity S1 if max(speed(ego)) > 25",
            ).unwrap();
            let a = evaluate_rules(&rs, &tr, &concrete(&[]), &functional(true)).unwrap();
            let b = evaluate_rules(&rs, &tr, &concrete(&[]), &functional(true)).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    // Round-trip corpus: print(parse(text)) reparses to an equal RuleSet.
    const ROUND_TRIP_CORPUS: &str = "\
rule no_collision prescriptive
  when meta(others_reasonable)
  assert never(collision(ego, lead) > 0)

rule crash_severity risk
  when not meta(others_reasonable)
  severity S0 if eventually(collision(ego, lead) > 0)
  severity S1 if eventually(collision(ego, lead) > 0 and closing_speed(ego, lead) >= 1)
  severity S3 if eventually(collision(ego, lead) > 0 and closing_speed(ego, lead) >= 11)

rule ttc_margin risk
  severity S0 if duration_where(ttc(ego, lead) < 1.5) > 0.5

rule speed_limit prescriptive
  when meta(others_reasonable) and param(speed_limit) > 0
  assert always(speed(ego) <= param(speed_limit) + 0.5)

rule progress risk
  severity S0 if max(speed(ego)) < param(speed_limit) * 0.25

rule complex_margins risk
  severity S1 if min(gap(ego, lead) - speed(ego) * 0.5) < 0 or duration_where(ttc(ego, lead) < 1) > 2
";

    #[test]
    fn corpus_round_trips_through_printer() {
        let parsed = parse_ruleset(ROUND_TRIP_CORPUS).unwrap();
        assert_eq!(parsed.rules.len(), 6);
        let printed = parsed.to_string();
        let reparsed = parse_ruleset(&printed).unwrap();
        assert_eq!(parsed, reparsed, "printed form:\n{printed}");
    }

    #[test]
    fn printer_parenthesizes_mixed_boolean_chains() {
        // Or(a, And(b, c)) must not print as the left-associative chain.
        let text = "rule r prescriptive assert always(speed(ego) > 1 or (speed(ego) < 0 and speed(ego) > 0 - 5))";
        let parsed = parse_ruleset(text).unwrap();
        let reparsed = parse_ruleset(&parsed.to_string()).unwrap();
        assert_eq!(parsed, reparsed, "printed form:\n{parsed}");
    }
}
