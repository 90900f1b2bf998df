//! Deterministic generation of concrete scenarios from logical scenarios,
//! and allocation of a total test budget across functional scenarios.
//!
//! Unit deviates are derived by hashing `(seed, scenario index, parameter
//! name)` through a fixed 64-bit mixing function and mapping the result to
//! `[0, 1)`. Draws therefore depend on nothing but their coordinates: runs
//! reproduce bit-identically regardless of iteration order or thread
//! count, and the first `k` scenarios of a batch of `n` equal the batch of
//! `k` (prefix stability).

use std::collections::BTreeMap;

use thiserror::Error;

use crate::catalogue::{
    Catalogue, ConcreteScenario, Distribution, LogicalScenario,
};
use crate::special::{norm_cdf, norm_ppf};

/// How a total test budget is split across functional scenarios.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetPlan {
    pub total: u64,
    pub floor_per_functional: u64,
    pub allocations: BTreeMap<String, u64>,
}

#[derive(Debug, Error)]
pub enum SamplingError {
    #[error("budget total {total} cannot grant the floor of {floor} to {count} functional scenarios")]
    InfeasibleFloor { total: u64, floor: u64, count: u64 },
    #[error("catalogue has no functional scenarios to allocate to")]
    EmptyCatalogue,
}

// SplitMix64 finalizer: full-avalanche 64-bit mixing.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn absorb(state: u64, word: u64) -> u64 {
    mix64(state ^ word.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn absorb_str(mut state: u64, s: &str) -> u64 {
    let bytes = s.as_bytes();
    for chunk in bytes.chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        state = absorb(state, u64::from_le_bytes(word));
    }
    absorb(state, bytes.len() as u64)
}

/// A 64-bit hash of `(seed, index, name)`; the stable sampling contract.
pub fn coordinate_hash(seed: u64, index: u64, name: &str) -> u64 {
    let state = absorb(absorb(0x6a09_e667_f3bc_c908, seed), index);
    mix64(absorb_str(state, name))
}

/// Uniform deviate in `[0, 1)`, a pure function of its coordinates.
pub fn unit_deviate(seed: u64, index: u64, name: &str) -> f64 {
    // Top 53 bits scaled by 2^-53: exact in f64, identical on all targets.
    (coordinate_hash(seed, index, name) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Map a unit deviate through a distribution's inverse CDF.
pub fn inverse_cdf(dist: &Distribution, u: f64) -> f64 {
    debug_assert!((0.0..1.0).contains(&u));
    match dist {
        Distribution::Uniform { lo, hi } => lo + u * (hi - lo),
        Distribution::TruncNormal { mean, sd, lo, hi } => {
            let a = norm_cdf((lo - mean) / sd);
            let b = norm_cdf((hi - mean) / sd);
            let p = a + u * (b - a);
            // p can touch 0 or 1 through rounding; the clamp keeps the
            // value inside the declared support either way.
            let x = if p <= 0.0 {
                *lo
            } else if p >= 1.0 {
                *hi
            } else {
                mean + sd * norm_ppf(p)
            };
            x.clamp(*lo, *hi)
        }
        Distribution::Discrete { options } => {
            let mut acc = 0.0;
            for o in options {
                acc += o.probability;
                if u < acc {
                    return o.value;
                }
            }
            // Rounding in the cumulative sum can leave u just past the
            // final boundary; the last option owns the remainder.
            options.last().expect("validated non-empty").value
        }
    }
}

/// Draw `count` concrete scenarios from a logical scenario according to
/// its parameter distributions.
///
/// Assignment `i` of each parameter depends only on `(seed, i, name)`, so
/// output is reproducible across runs, platforms and thread counts, and
/// prefixes are stable.
pub fn sample_concrete(ls: &LogicalScenario, seed: u64, count: u64) -> Vec<ConcreteScenario> {
    assert!(count >= 1, "sample_concrete requires count >= 1");
    let width = (count.max(1) as f64).log10().floor() as usize + 1;
    (0..count)
        .map(|i| {
            let assignments: BTreeMap<String, f64> = ls
                .parameters
                .iter()
                .map(|p| {
                    let u = unit_deviate(seed, i, &p.name);
                    (p.name.clone(), inverse_cdf(&p.distribution, u))
                })
                .collect();
            ConcreteScenario {
                id: format!("{}-{:0width$}", ls.id, i),
                logical_id: ls.id.clone(),
                seed: coordinate_hash(seed, i, &ls.id),
                assignments,
            }
        })
        .collect()
}

/// Split `total` tests across functional scenarios proportionally to
/// `demand_prior`, subject to a per-scenario floor.
///
/// Scenarios whose proportional share would fall under the floor are
/// pinned to it and the remainder is re-apportioned among the others by
/// largest fractional part, ties broken by lexicographic id.
pub fn allocate_budget(
    cat: &Catalogue,
    total: u64,
    floor_per_functional: u64,
) -> Result<BudgetPlan, SamplingError> {
    let ids: Vec<&str> = {
        let mut v: Vec<&str> = cat.functional().iter().map(|f| f.id.as_str()).collect();
        v.sort_unstable();
        v
    };
    if ids.is_empty() {
        return Err(SamplingError::EmptyCatalogue);
    }
    let count = ids.len() as u64;
    if total < floor_per_functional * count {
        return Err(SamplingError::InfeasibleFloor { total, floor: floor_per_functional, count });
    }

    let prior = |id: &str| cat.functional_by_id(id).expect("validated").demand_prior;

    let mut pinned: BTreeMap<&str, u64> = BTreeMap::new();
    loop {
        let free: Vec<&str> = ids.iter().copied().filter(|id| !pinned.contains_key(id)).collect();
        if free.is_empty() {
            break;
        }
        let budget = total - floor_per_functional * pinned.len() as u64;
        let weight_sum: f64 = free.iter().map(|id| prior(id)).sum();
        let ideals: Vec<(&str, f64)> =
            free.iter().map(|id| (*id, budget as f64 * prior(id) / weight_sum)).collect();

        let under: Vec<&str> = ideals
            .iter()
            .filter(|(_, ideal)| *ideal < floor_per_functional as f64)
            .map(|(id, _)| *id)
            .collect();
        if !under.is_empty() {
            for id in under {
                pinned.insert(id, floor_per_functional);
            }
            continue;
        }

        // Largest-remainder apportionment of `budget` among the free set.
        let mut allocations: BTreeMap<&str, u64> = BTreeMap::new();
        let mut granted = 0u64;
        let mut fractions: Vec<(&str, f64)> = Vec::with_capacity(ideals.len());
        for (id, ideal) in &ideals {
            let base = ideal.floor() as u64;
            allocations.insert(id, base);
            granted += base;
            fractions.push((id, ideal - ideal.floor()));
        }
        // Ties on the fractional part go to the lexicographically first id.
        fractions.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
        for (id, _) in fractions.iter().take((budget - granted) as usize) {
            *allocations.get_mut(id).expect("present") += 1;
        }

        let mut out: BTreeMap<String, u64> =
            pinned.iter().map(|(id, n)| (id.to_string(), *n)).collect();
        for (id, n) in allocations {
            out.insert(id.to_string(), n);
        }
        return Ok(BudgetPlan { total, floor_per_functional, allocations: out });
    }

    // Everything pinned: only feasible when total == floor * count.
    Ok(BudgetPlan {
        total,
        floor_per_functional,
        allocations: ids.iter().map(|id| (id.to_string(), floor_per_functional)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalogue::{Exposure, FunctionalScenario, ParameterSpec};
    use proptest::prelude::*;

    fn uniform_logical(lo: f64, hi: f64) -> LogicalScenario {
        LogicalScenario {
            id: "ls".into(),
            functional_id: "fs".into(),
            parameters: vec![ParameterSpec {
                name: "x".into(),
                distribution: Distribution::Uniform { lo, hi },
            }],
            scene_template: crate::catalogue::SceneTemplate::FreeDrive {
                ego_speed: crate::catalogue::FieldValue::Param("x".into()),
                road_length: crate::catalogue::FieldValue::Const(100.0),
            },
            ruleset_ref: "unused.rules".into(),
        }
    }

    fn catalogue_with_priors(priors: &[(&str, f64)]) -> Catalogue {
        let functional = priors
            .iter()
            .map(|(id, prior)| FunctionalScenario {
                id: id.to_string(),
                description: String::new(),
                tags: vec![],
                exposure: Exposure::RatePerHour { value: 1.0 },
                others_reasonable: true,
                demand_prior: *prior,
            })
            .collect();
        // No logicals: allocation only looks at functional scenarios.
        Catalogue::from_parts(std::path::PathBuf::from("."), functional, vec![]).unwrap()
    }

    #[test]
    fn sampling_is_deterministic() {
        let ls = uniform_logical(0.0, 1.0);
        let a = sample_concrete(&ls, 42, 3);
        let b = sample_concrete(&ls, 42, 3);
        assert_eq!(a, b);
        let other = sample_concrete(&ls, 43, 3);
        assert_ne!(a, other);
    }

    #[test]
    fn degenerate_discrete_assigns_single_value() {
        let mut ls = uniform_logical(0.0, 1.0);
        ls.parameters[0].distribution = Distribution::Discrete {
            options: vec![crate::catalogue::DiscreteOption { value: 1.0, probability: 1.0 }],
        };
        for cs in sample_concrete(&ls, 9, 50) {
            assert_eq!(cs.assignments["x"], 1.0);
        }
    }

    #[test]
    fn uniform_mean_is_within_four_sigma() {
        // Uniform(10,20): variance 100/12, n = 1e4, so the 4-sigma band on
        // the sample mean is 4*sqrt(100/12/1e4) = 0.11547.
        let ls = uniform_logical(10.0, 20.0);
        let samples = sample_concrete(&ls, 42, 10_000);
        let mean: f64 =
            samples.iter().map(|c| c.assignments["x"]).sum::<f64>() / samples.len() as f64;
        assert!((mean - 15.0).abs() <= 0.11547, "mean {mean}");
    }

    #[test]
    fn prefix_stability() {
        let ls = uniform_logical(-3.0, 7.0);
        let long = sample_concrete(&ls, 7, 100);
        let short = sample_concrete(&ls, 7, 30);
        assert_eq!(&long[..30], &short[..]);
    }

    #[test]
    fn proportional_split_with_floor() {
        let cat = catalogue_with_priors(&[("A", 3.0), ("B", 1.0)]);
        let plan = allocate_budget(&cat, 100, 10).unwrap();
        assert_eq!(plan.allocations["A"], 75);
        assert_eq!(plan.allocations["B"], 25);
    }

    #[test]
    fn fractional_tie_goes_to_lexicographic_first() {
        let cat = catalogue_with_priors(&[("A", 1.0), ("B", 1.0)]);
        let plan = allocate_budget(&cat, 11, 0).unwrap();
        assert_eq!(plan.allocations["A"], 6);
        assert_eq!(plan.allocations["B"], 5);
    }

    #[test]
    fn floor_dominates_when_total_is_tight() {
        let cat = catalogue_with_priors(&[("A", 100.0), ("B", 1.0)]);
        let plan = allocate_budget(&cat, 20, 10).unwrap();
        assert_eq!(plan.allocations["A"], 10);
        assert_eq!(plan.allocations["B"], 10);
    }

    #[test]
    fn infeasible_floor_is_an_error() {
        let cat = catalogue_with_priors(&[("A", 1.0), ("B", 1.0)]);
        match allocate_budget(&cat, 5, 10) {
            Err(SamplingError::InfeasibleFloor { total: 5, floor: 10, count: 2 }) => {}
            other => panic!("expected infeasible floor, got {other:?}"),
        }
    }

    #[test]
    fn trunc_normal_stays_in_support() {
        let mut ls = uniform_logical(0.0, 1.0);
        ls.parameters[0].distribution =
            Distribution::TruncNormal { mean: 5.0, sd: 2.0, lo: 4.0, hi: 6.5 };
        for cs in sample_concrete(&ls, 1234, 2_000) {
            let v = cs.assignments["x"];
            assert!((4.0..=6.5).contains(&v), "{v} outside truncation");
        }
    }

    proptest! {
        #[test]
        fn budget_is_conserved(
            priors in proptest::collection::vec(0.01f64..100.0, 1..8),
            total in 0u64..5000,
            floor in 0u64..20,
        ) {
            let named: Vec<(String, f64)> =
                priors.iter().enumerate().map(|(i, p)| (format!("fs-{i:02}"), *p)).collect();
            let refs: Vec<(&str, f64)> = named.iter().map(|(s, p)| (s.as_str(), *p)).collect();
            let cat = catalogue_with_priors(&refs);
            prop_assume!(total >= floor * refs.len() as u64);
            let plan = allocate_budget(&cat, total, floor).unwrap();
            prop_assert_eq!(plan.allocations.values().sum::<u64>(), total);
            for n in plan.allocations.values() {
                prop_assert!(*n >= floor);
            }
        }

        #[test]
        fn allocation_is_monotone_in_own_prior(
            base in 0.1f64..10.0,
            other in 0.1f64..10.0,
            third in 0.1f64..10.0,
            bump in 0.01f64..5.0,
            total in 10u64..2000,
        ) {
            let before = allocate_budget(
                &catalogue_with_priors(&[("A", base), ("B", other), ("C", third)]),
                total, 0,
            ).unwrap();
            let after = allocate_budget(
                &catalogue_with_priors(&[("A", base + bump), ("B", other), ("C", third)]),
                total, 0,
            ).unwrap();
            prop_assert!(after.allocations["A"] >= before.allocations["A"],
                "prior {} -> {} dropped allocation {} -> {}",
                base, base + bump, before.allocations["A"], after.allocations["A"]);
        }

        #[test]
        fn unit_deviates_cover_the_unit_interval(seed in any::<u64>(), index in 0u64..1000) {
            let u = unit_deviate(seed, index, "param");
            prop_assert!((0.0..1.0).contains(&u));
        }
    }
}
