//! Statistical evaluation of risk-based test outcomes: acceptable event
//! rates, cumulative severity counts, exact binomial hypothesis tests and
//! per-functional-scenario decisions.
//!
//! For each severity level with a tolerable rate λ (events per hour of
//! vehicle use), the acceptable proportion of concrete runs producing
//! severity ≥ that level is `l_acceptable = λ / e`, with `e` the
//! functional scenario's hourly exposure (a time-proportion exposure `q`
//! with mean instance duration `d` hours converts via `e = q / d`).
//! Two one-sided hypotheses are then tested against the observed count
//! `k` out of `n` runs:
//!
//! * rejecting "the true rate is at least `l_acceptable`" (small
//!   `P(X <= k)`) proves the system safer than the requirement;
//! * rejecting "the true rate is at most `l_acceptable`" (small
//!   `P(X >= k)`) proves it does not meet the requirement.
//!
//! Failing to prove unsafety is not the same as proving safety, so both
//! p-values are reported and a three-way status records which side, if
//! either, is rejected at the chosen significance level.
//!
//! A note on interpreting the p-values: the test uses one-sided tail
//! probabilities, not point probabilities. With `n = 10^7`,
//! `l_acceptable = 10^-7` and `k = 2` observed events, the tail
//! `P(X >= 2)` is 0.2642 while the point mass `P(X = 2)` is 0.1839
//! (both in the Poisson limit with mean 1). Quoting the point mass
//! understates how often a compliant system would look at least this
//! bad; the tail is the decision-relevant number and is what
//! [`binomial_tail_geq`] returns.
//!
//! Counts are cumulative in severity (a severity-S3 run counts toward
//! S0..S3 alike), so worsening any single outcome can never improve a
//! verdict.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalogue::{Exposure, FunctionalScenario, SeverityLevel};
use crate::rules::RunOutcome;
use crate::special::ln_choose;

/// Tolerability policy: per-level λ (events/hour), significance level and
/// how inconclusive evidence feeds the overall verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskPolicy {
    pub version: u32,
    #[serde(default = "default_significance")]
    pub significance: f64,
    #[serde(default)]
    pub decision_policy: DecisionPolicy,
    /// Tolerable rate per severity level; a level without an entry is not
    /// assessed.
    pub lambda_per_hour: BTreeMap<SeverityLevel, f64>,
}

fn default_significance() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionPolicy {
    /// Pass unless unsafety is proven.
    #[default]
    Permissive,
    /// Pass only when safety is proven at every assessed level.
    Strict,
}

impl Default for RiskPolicy {
    /// One requirement by default: life-threatening outcomes (S3) at most
    /// 1.7e-7 per hour of use, a figure in line with published fatal-crash
    /// rates per hour driven.
    fn default() -> Self {
        RiskPolicy {
            version: 1,
            significance: 0.05,
            decision_policy: DecisionPolicy::Permissive,
            lambda_per_hour: BTreeMap::from([(SeverityLevel::S3, 1.7e-7)]),
        }
    }
}

impl RiskPolicy {
    pub fn load(path: &Path) -> Result<RiskPolicy, RiskError> {
        let text = fs::read_to_string(path)
            .map_err(|source| RiskError::Io { path: path.to_path_buf(), source })?;
        let policy: RiskPolicy = serde_json::from_str(&text)
            .map_err(|source| RiskError::Malformed { path: path.to_path_buf(), source })?;
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(RiskError::InvalidPolicy(format!(
                "significance must be in (0,1), got {}",
                self.significance
            )));
        }
        if self.lambda_per_hour.contains_key(&SeverityLevel::SNone) {
            return Err(RiskError::InvalidPolicy(
                "SNONE cannot carry a tolerable rate".into(),
            ));
        }
        let mut prev: Option<(SeverityLevel, f64)> = None;
        for (&level, &lambda) in &self.lambda_per_hour {
            if !(lambda > 0.0) {
                return Err(RiskError::InvalidPolicy(format!(
                    "lambda for {level} must be positive, got {lambda}"
                )));
            }
            if let Some((plevel, plambda)) = prev {
                if lambda > plambda {
                    return Err(RiskError::InvalidPolicy(format!(
                        "lambda must not increase with severity: {level} ({lambda}) > {plevel} ({plambda})"
                    )));
                }
            }
            prev = Some((level, lambda));
        }
        Ok(())
    }
}

/// Statistical verdict for one severity level of one functional scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelDecision {
    pub level: SeverityLevel,
    pub n_tests: u64,
    /// Runs with severity greater than or equal to `level`.
    pub k_events: u64,
    /// Acceptable proportion of such runs; absent when no λ is set.
    pub l_acceptable: Option<f64>,
    /// `P(X <= k)` at the acceptable rate; small values prove safety.
    pub p_value_ha: Option<f64>,
    /// `P(X >= k)` at the acceptable rate; small values prove unsafety.
    pub p_value_hb: Option<f64>,
    pub status: LevelStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LevelStatus {
    ProvenSafe,
    ProvenUnsafe,
    Inconclusive,
    NotApplicable,
}

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed policy {path}: {source}")]
    Malformed {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("outcome list contains a prescriptive failure; filter before counting")]
    PrescriptiveFailurePresent,
}

/// Acceptable proportion of concrete runs with severity at or above the
/// level carrying `lambda_per_hour`, given the scenario's exposure.
pub fn acceptable_rate(lambda_per_hour: f64, exposure: &Exposure) -> f64 {
    assert!(lambda_per_hour > 0.0, "lambda must be positive");
    match exposure {
        Exposure::RatePerHour { value } => lambda_per_hour / value,
        // A proportion q with mean instance duration d hours is an
        // instance rate of q/d per hour.
        Exposure::TimeProportion { value, mean_duration_hours } => {
            lambda_per_hour * mean_duration_hours / value
        }
    }
}

/// Count outcomes with severity at or above each level S0..S3.
///
/// `SNONE` contributes to no count. Prescriptive failures carry no
/// severity and must be partitioned out before counting.
pub fn cumulative_counts(
    outcomes: &[RunOutcome],
) -> Result<BTreeMap<SeverityLevel, u64>, RiskError> {
    let mut counts: BTreeMap<SeverityLevel, u64> =
        SeverityLevel::COUNTED.iter().map(|&l| (l, 0)).collect();
    for outcome in outcomes {
        match outcome {
            RunOutcome::PrescriptiveFailure { .. } => {
                return Err(RiskError::PrescriptiveFailurePresent)
            }
            RunOutcome::Scored { severity } => {
                for level in SeverityLevel::COUNTED {
                    if *severity >= level {
                        *counts.get_mut(&level).expect("initialized") += 1;
                    }
                }
            }
        }
    }
    Ok(counts)
}

// P(X >= j) for X ~ Binomial(n, q), summed term by term from the
// boundary. `one_minus_q`, `ln_q` and `ln_1mq` are supplied by the caller
// so that complements of tiny probabilities keep full precision. Efficient
// when j is at or above the mean: past the mode the term ratios fall below
// one and the remaining tail is bounded by a geometric series.
fn right_tail_sum(n: u64, j: u64, q: f64, one_minus_q: f64, ln_q: f64, ln_1mq: f64) -> f64 {
    if j == 0 {
        return 1.0;
    }
    if j > n {
        return 0.0;
    }
    let nf = n as f64;
    let jf = j as f64;
    let mut term = (ln_choose(n, j) + jf * ln_q + (nf - jf) * ln_1mq).exp();

    // Kahan-compensated summation.
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut add = |sum: &mut f64, comp: &mut f64, x: f64| {
        let y = x - *comp;
        let t = *sum + y;
        *comp = (t - *sum) - y;
        *sum = t;
    };

    add(&mut sum, &mut comp, term);
    let mut i = j;
    while i < n {
        let ratio = ((n - i) as f64) * q / (((i + 1) as f64) * one_minus_q);
        term *= ratio;
        i += 1;
        if ratio < 1.0 {
            // Ratios are decreasing, so everything from this term on is
            // bounded by term / (1 - ratio).
            if term / (1.0 - ratio) < sum * 1e-18 {
                break;
            }
        }
        add(&mut sum, &mut comp, term);
    }
    sum.min(1.0)
}

/// Exact one-sided upper tail `P(X >= k)` for `X ~ Binomial(n, p)`.
///
/// Computed in log space from the boundary term with summation over the
/// smaller tail (complementing when the requested side holds the bulk of
/// the mass).
pub fn binomial_tail_geq(n: u64, k: u64, p: f64) -> f64 {
    assert!(k <= n, "binomial_tail_geq requires k <= n");
    assert!((0.0..=1.0).contains(&p), "p must be a probability");
    if k == 0 {
        return 1.0;
    }
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return 1.0;
    }
    let mean = n as f64 * p;
    if k as f64 > mean {
        right_tail_sum(n, k, p, 1.0 - p, p.ln(), (-p).ln_1p())
    } else {
        // P(X >= k) = 1 - P(Y >= n-k+1) with Y ~ Binomial(n, 1-p).
        1.0 - right_tail_sum(n, n - k + 1, 1.0 - p, p, (-p).ln_1p(), p.ln())
    }
}

/// Exact one-sided lower tail `P(X <= k)` for `X ~ Binomial(n, p)`.
pub fn binomial_tail_leq(n: u64, k: u64, p: f64) -> f64 {
    assert!(k <= n, "binomial_tail_leq requires k <= n");
    assert!((0.0..=1.0).contains(&p), "p must be a probability");
    if k == n {
        return 1.0;
    }
    if p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let mean = n as f64 * p;
    if (k as f64) < mean {
        // P(X <= k) = P(Y >= n-k) with Y ~ Binomial(n, 1-p).
        right_tail_sum(n, n - k, 1.0 - p, p, (-p).ln_1p(), p.ln())
    } else {
        1.0 - right_tail_sum(n, k + 1, p, 1.0 - p, p.ln(), (-p).ln_1p())
    }
}

/// One-sided upper confidence bound on the event proportion: the smallest
/// `p` whose lower tail `P(X <= k)` drops to `1 - confidence`, found by
/// bisection to 1e-12.
pub fn rate_upper_bound(n: u64, k: u64, confidence: f64) -> f64 {
    assert!(k <= n, "rate_upper_bound requires k <= n");
    assert!((0.0..1.0).contains(&confidence) || confidence < 1.0, "confidence must be in (0,1)");
    if k == n {
        return 1.0;
    }
    let target = 1.0 - confidence;
    let mut lo = 0.0f64; // P(X <= k | lo) > target
    let mut hi = 1.0f64; // P(X <= k | hi) <= target
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if binomial_tail_leq(n, k, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Decide every severity level of one functional scenario from its
/// cumulative counts.
///
/// Levels without a λ, or whose acceptable proportion reaches 1 (the
/// requirement cannot constrain anything), are `NOT_APPLICABLE`.
pub fn decide_functional(
    counts: &BTreeMap<SeverityLevel, u64>,
    n_tests: u64,
    fs: &FunctionalScenario,
    policy: &RiskPolicy,
) -> Vec<LevelDecision> {
    SeverityLevel::COUNTED
        .iter()
        .map(|&level| {
            let k_events = counts.get(&level).copied().unwrap_or(0);
            match policy.lambda_per_hour.get(&level) {
                None => LevelDecision {
                    level,
                    n_tests,
                    k_events,
                    l_acceptable: None,
                    p_value_ha: None,
                    p_value_hb: None,
                    status: LevelStatus::NotApplicable,
                },
                Some(&lambda) => {
                    let l_acc = acceptable_rate(lambda, &fs.exposure);
                    if l_acc >= 1.0 {
                        return LevelDecision {
                            level,
                            n_tests,
                            k_events,
                            l_acceptable: Some(l_acc),
                            p_value_ha: None,
                            p_value_hb: None,
                            status: LevelStatus::NotApplicable,
                        };
                    }
                    let p_ha = binomial_tail_leq(n_tests, k_events, l_acc);
                    let p_hb = binomial_tail_geq(n_tests, k_events, l_acc);
                    let status = if p_hb < policy.significance {
                        LevelStatus::ProvenUnsafe
                    } else if p_ha < policy.significance {
                        LevelStatus::ProvenSafe
                    } else {
                        LevelStatus::Inconclusive
                    };
                    LevelDecision {
                        level,
                        n_tests,
                        k_events,
                        l_acceptable: Some(l_acc),
                        p_value_ha: Some(p_ha),
                        p_value_hb: Some(p_hb),
                        status,
                    }
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: Poisson upper tail P(X >= k) with mean mu,
    /// accumulated from the probability mass recurrence.
    pub(crate) fn poisson_tail_geq(k: u64, mu: f64) -> f64 {
        if k == 0 {
            return 1.0;
        }
        let mut pmf = (-mu).exp();
        let mut below = 0.0;
        for i in 0..k {
            below += pmf;
            pmf *= mu / (i + 1) as f64;
        }
        (1.0 - below).max(0.0)
    }

    fn fs_with_rate(rate: f64) -> FunctionalScenario {
        FunctionalScenario {
            id: "fs".into(),
            description: String::new(),
            tags: vec![],
            exposure: Exposure::RatePerHour { value: rate },
            others_reasonable: true,
            demand_prior: 1.0,
        }
    }

    fn policy_with_s3(lambda: f64) -> RiskPolicy {
        RiskPolicy {
            version: 1,
            significance: 0.05,
            decision_policy: DecisionPolicy::Permissive,
            lambda_per_hour: BTreeMap::from([(SeverityLevel::S3, lambda)]),
        }
    }

    #[test]
    fn acceptable_rate_examples() {
        assert!((acceptable_rate(1e-7, &Exposure::RatePerHour { value: 1.0 }) - 1e-7).abs() < 1e-20);
        assert!((acceptable_rate(2e-6, &Exposure::RatePerHour { value: 0.5 }) - 4e-6).abs() < 1e-18);
        let prop = Exposure::TimeProportion { value: 0.1, mean_duration_hours: 0.01 };
        assert!((acceptable_rate(1e-5, &prop) - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn cumulative_counts_examples() {
        use SeverityLevel::*;
        let outcomes: Vec<RunOutcome> = [SNone, S1, S3, S0]
            .into_iter()
            .map(|severity| RunOutcome::Scored { severity })
            .collect();
        let counts = cumulative_counts(&outcomes).unwrap();
        assert_eq!(counts[&S0], 3);
        assert_eq!(counts[&S1], 2);
        assert_eq!(counts[&S2], 1);
        assert_eq!(counts[&S3], 1);

        let empty = cumulative_counts(&[]).unwrap();
        assert!(empty.values().all(|&c| c == 0));

        let all_s3: Vec<RunOutcome> =
            (0..5).map(|_| RunOutcome::Scored { severity: S3 }).collect();
        let counts = cumulative_counts(&all_s3).unwrap();
        assert!(counts.values().all(|&c| c == 5));

        let with_failure =
            vec![RunOutcome::PrescriptiveFailure { violated_rules: vec!["r".into()] }];
        assert!(matches!(
            cumulative_counts(&with_failure),
            Err(RiskError::PrescriptiveFailurePresent)
        ));
    }

    #[test]
    fn worked_example_tails() {
        let n = 10_000_000u64;
        let p = 1e-7;
        // Zero events: P(X >= 0) is 1, P(X <= 0) is (1-p)^n, close to 1/e.
        assert_eq!(binomial_tail_geq(n, 0, p), 1.0);
        let p_ha = binomial_tail_leq(n, 0, p);
        assert!((p_ha - 0.3679).abs() < 1e-3, "{p_ha}");
        // Two events: the tail is 1 - 2/e in the Poisson limit.
        let p_hb = binomial_tail_geq(n, 2, p);
        assert!((p_hb - 0.26424).abs() < 1e-4, "{p_hb}");
        // Four events: 1 - (8/3)/e.
        let p_hb4 = binomial_tail_geq(n, 4, p);
        assert!((p_hb4 - 0.018988).abs() < 1e-4, "{p_hb4}");
    }

    #[test]
    fn tails_match_poisson_oracle_closely() {
        let n = 10_000_000u64;
        let p = 1e-7;
        for k in 0..12u64 {
            let exact = binomial_tail_geq(n, k, p);
            let approx = poisson_tail_geq(k, n as f64 * p);
            assert!(
                (exact - approx).abs() <= n as f64 * p * p,
                "k={k}: {exact} vs {approx}"
            );
        }
    }

    #[test]
    fn safe_proof_needs_about_three_over_lambda_samples() {
        assert!(binomial_tail_leq(10_000_000, 0, 1e-7) > 0.05);
        let at_3e7 = binomial_tail_leq(30_000_000, 0, 1e-7);
        assert!(at_3e7 < 0.05, "{at_3e7}");
        assert!((at_3e7 - 0.0498).abs() < 1e-3, "{at_3e7}");
    }

    #[test]
    fn degenerate_tails() {
        assert_eq!(binomial_tail_leq(10, 10, 0.3), 1.0);
        assert_eq!(binomial_tail_geq(10, 0, 0.3), 1.0);
        assert_eq!(binomial_tail_leq(10, 3, 0.0), 1.0);
        assert_eq!(binomial_tail_geq(10, 3, 0.0), 0.0);
        assert_eq!(binomial_tail_leq(10, 3, 1.0), 0.0);
        assert_eq!(binomial_tail_geq(10, 3, 1.0), 1.0);
        assert_eq!(binomial_tail_leq(0, 0, 0.5), 1.0);
    }

    #[test]
    fn small_n_matches_direct_summation() {
        for &(n, p) in &[(10u64, 0.5f64), (25, 0.12), (40, 0.9), (7, 0.031)] {
            // Direct O(n) reference via the pmf recurrence.
            let mut pmf = (1.0 - p).powi(n as i32);
            let mut cdf = Vec::with_capacity(n as usize + 1);
            let mut acc = 0.0;
            for i in 0..=n {
                acc += pmf;
                cdf.push(acc);
                if i < n {
                    pmf *= ((n - i) as f64) * p / (((i + 1) as f64) * (1.0 - p));
                }
            }
            for k in 0..=n {
                let got = binomial_tail_leq(n, k, p);
                assert!(
                    (got - cdf[k as usize].min(1.0)).abs() < 1e-12,
                    "n={n} k={k} p={p}: {got} vs {}",
                    cdf[k as usize]
                );
            }
        }
    }

    #[test]
    fn rate_upper_bound_examples() {
        // Closed form for k = 0: 1 - (1 - confidence)^(1/n).
        let got = rate_upper_bound(10, 0, 0.95);
        let want = 1.0 - 0.05f64.powf(0.1);
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        assert!((got - 0.2589).abs() < 1e-4);

        let got = rate_upper_bound(10_000_000, 0, 0.95);
        assert!((got - 2.996e-7).abs() < 1e-9, "{got}");

        assert_eq!(rate_upper_bound(5, 5, 0.9), 1.0);
    }

    #[test]
    fn decision_statuses_for_the_worked_example() {
        let n = 10_000_000u64;
        let fs = fs_with_rate(1.0);
        let policy = policy_with_s3(1e-7);
        for k in 0..=3u64 {
            let counts = BTreeMap::from([(SeverityLevel::S3, k)]);
            let decisions = decide_functional(&counts, n, &fs, &policy);
            let s3 = decisions.iter().find(|d| d.level == SeverityLevel::S3).unwrap();
            assert_eq!(s3.status, LevelStatus::Inconclusive, "k={k}: {s3:?}");
        }
        let counts = BTreeMap::from([(SeverityLevel::S3, 4u64)]);
        let decisions = decide_functional(&counts, n, &fs, &policy);
        let s3 = decisions.iter().find(|d| d.level == SeverityLevel::S3).unwrap();
        assert_eq!(s3.status, LevelStatus::ProvenUnsafe);
        // Levels without a lambda are not assessed.
        let s0 = decisions.iter().find(|d| d.level == SeverityLevel::S0).unwrap();
        assert_eq!(s0.status, LevelStatus::NotApplicable);
        assert_eq!(s0.l_acceptable, None);
    }

    #[test]
    fn unconstraining_requirement_is_not_applicable() {
        // lambda 2/hr at exposure 1/hr: more than one event per test is
        // acceptable, nothing to check.
        let fs = fs_with_rate(1.0);
        let policy = policy_with_s3(2.0);
        let counts = BTreeMap::from([(SeverityLevel::S3, 3u64)]);
        let decisions = decide_functional(&counts, 10, &fs, &policy);
        let s3 = decisions.iter().find(|d| d.level == SeverityLevel::S3).unwrap();
        assert_eq!(s3.status, LevelStatus::NotApplicable);
        assert_eq!(s3.l_acceptable, Some(2.0));
    }

    #[test]
    fn policy_validation() {
        let mut p = RiskPolicy::default();
        p.significance = 0.0;
        assert!(p.validate().is_err());

        let mut p = RiskPolicy::default();
        p.lambda_per_hour.insert(SeverityLevel::S0, 1e-9); // S0 lambda below S3
        assert!(p.validate().is_err());

        let mut p = RiskPolicy::default();
        p.lambda_per_hour.insert(SeverityLevel::S0, 1e-3);
        p.lambda_per_hour.insert(SeverityLevel::S2, 1e-5);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn policy_round_trips_through_json() {
        let text = r#"{"version":1, "significance":0.05, "decision_policy":"permissive",
                       "lambda_per_hour":{"S3":1.0e-7, "S2":1.0e-5}}"#;
        let p: RiskPolicy = serde_json::from_str(text).unwrap();
        p.validate().unwrap();
        assert_eq!(p.lambda_per_hour[&SeverityLevel::S3], 1.0e-7);
        let back: RiskPolicy = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(p, back);
    }

    proptest! {
        #[test]
        fn complementarity(n in 1u64..200_000, k in 1u64..50, p in 1e-9f64..0.999) {
            prop_assume!(k <= n);
            let sum = binomial_tail_geq(n, k, p) + binomial_tail_leq(n, k - 1, p);
            prop_assert!((sum - 1.0).abs() < 1e-10, "n={n} k={k} p={p}: {sum}");
        }

        #[test]
        fn monotone_in_k_and_p(n in 1u64..10_000, k in 0u64..30, p in 1e-6f64..0.99) {
            prop_assume!(k + 1 <= n);
            let here = binomial_tail_geq(n, k, p);
            let next_k = binomial_tail_geq(n, k + 1, p);
            prop_assert!(next_k <= here + 1e-12);
            let bigger_p = binomial_tail_geq(n, k, (p * 1.5).min(1.0));
            prop_assert!(bigger_p + 1e-12 >= here);
        }

        #[test]
        fn le_cam_poisson_agreement(
            exp_n in 3u32..7, np in 0.1f64..10.0, k_off in 0i64..6,
        ) {
            let n = 10u64.pow(exp_n);
            let p = np / n as f64;
            prop_assume!(p <= 1e-3);
            let k = ((np as i64) + k_off - 2).max(0) as u64;
            let exact = binomial_tail_geq(n, k, p);
            let approx = poisson_tail_geq(k, np);
            prop_assert!(
                (exact - approx).abs() <= n as f64 * p * p,
                "n={n} k={k} p={p}: binom {exact} poisson {approx}"
            );
        }

        #[test]
        fn scale_invariance_of_acceptable_rate(
            lambda in 1e-9f64..1e-3, rate in 1e-3f64..100.0, scale in 1e-3f64..1e3,
        ) {
            let base = acceptable_rate(lambda, &Exposure::RatePerHour { value: rate });
            let scaled = acceptable_rate(
                scale * lambda,
                &Exposure::RatePerHour { value: scale * rate },
            );
            prop_assert!((base - scaled).abs() <= 1e-12 * base.abs().max(1e-300));
        }

        #[test]
        fn proportion_form_consistent_with_rate_form(
            lambda in 1e-9f64..1e-3, rate in 1e-3f64..50.0, duration in 1e-4f64..0.02,
        ) {
            // q = e * d must reproduce the rate-form result.
            let q = rate * duration;
            prop_assume!(q <= 1.0);
            let via_rate = acceptable_rate(lambda, &Exposure::RatePerHour { value: rate });
            let via_prop = acceptable_rate(
                lambda,
                &Exposure::TimeProportion { value: q, mean_duration_hours: duration },
            );
            prop_assert!((via_rate - via_prop).abs() <= 1e-12 * via_rate.max(1e-300));
        }

        #[test]
        fn statuses_never_move_backward_in_k(n in 100u64..100_000, l_exp in 1.0f64..4.0) {
            let l_acc = 10f64.powf(-l_exp);
            let fs = fs_with_rate(1.0);
            let policy = policy_with_s3(l_acc);
            let rank = |s: LevelStatus| match s {
                LevelStatus::ProvenSafe => 0,
                LevelStatus::Inconclusive => 1,
                LevelStatus::ProvenUnsafe => 2,
                LevelStatus::NotApplicable => unreachable!(),
            };
            let mut prev_rank = 0;
            for k in 0..20u64.min(n) {
                let counts = BTreeMap::from([(SeverityLevel::S3, k)]);
                let d = decide_functional(&counts, n, &fs, &policy);
                let s3 = d.iter().find(|d| d.level == SeverityLevel::S3).unwrap();
                let r = rank(s3.status);
                prop_assert!(r >= prev_rank, "k={k}: status went backward");
                prev_rank = r;
            }
        }

        #[test]
        fn raising_one_severity_never_helps(
            severities in proptest::collection::vec(0usize..5, 1..60),
            idx in 0usize..60,
            n_extra in 0u64..5,
        ) {
            use SeverityLevel::*;
            let levels = [SNone, S0, S1, S2, S3];
            prop_assume!(idx < severities.len());
            let outcomes: Vec<RunOutcome> = severities
                .iter()
                .map(|&s| RunOutcome::Scored { severity: levels[s] })
                .collect();
            let mut raised = severities.clone();
            raised[idx] = (raised[idx] + 1 + n_extra as usize).min(4);
            let outcomes_raised: Vec<RunOutcome> = raised
                .iter()
                .map(|&s| RunOutcome::Scored { severity: levels[s] })
                .collect();

            let before = cumulative_counts(&outcomes).unwrap();
            let after = cumulative_counts(&outcomes_raised).unwrap();
            for level in SeverityLevel::COUNTED {
                prop_assert!(after[&level] >= before[&level]);
            }

            // Higher counts mean lower p_hb, so a proven-unsafe level can
            // never recover by worsening an outcome.
            let fs = fs_with_rate(1.0);
            let policy = policy_with_s3(1e-3);
            let n = outcomes.len() as u64;
            let d_before = decide_functional(&before, n, &fs, &policy);
            let d_after = decide_functional(&after, n, &fs, &policy);
            for (b, a) in d_before.iter().zip(&d_after) {
                if b.status == LevelStatus::ProvenUnsafe {
                    prop_assert_eq!(a.status, LevelStatus::ProvenUnsafe);
                }
                if let (Some(pb), Some(pa)) = (b.p_value_hb, a.p_value_hb) {
                    prop_assert!(pa <= pb + 1e-12);
                }
            }
        }

        #[test]
        fn cumulative_counts_are_non_increasing_in_level(
            severities in proptest::collection::vec(0usize..5, 0..50),
        ) {
            use SeverityLevel::*;
            let levels = [SNone, S0, S1, S2, S3];
            let outcomes: Vec<RunOutcome> = severities
                .iter()
                .map(|&s| RunOutcome::Scored { severity: levels[s] })
                .collect();
            let counts = cumulative_counts(&outcomes).unwrap();
            prop_assert!(counts[&S0] >= counts[&S1]);
            prop_assert!(counts[&S1] >= counts[&S2]);
            prop_assert!(counts[&S2] >= counts[&S3]);
        }
    }
}
