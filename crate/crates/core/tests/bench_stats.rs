mod common;

use std::fs;
use std::time::{Duration, Instant};

use guild_core::bench::{
    convergence_percentage, median_ci, median_ci_ranks, normalized_cost_curve, optimal_cost_reference, run_trial,
    run_trials, sample_efficiency, write_results, TrialEntry, TrialRecord, TrialSpec,
};
use guild_core::environments::{make_environment, EnvKind};
use guild_core::guild::SelectorKind;
use proptest::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};
use tempfile::TempDir;

/// Largest `l` with `P(l <= B <= n - l) >= confidence`, `B ~ Bin(n, 1/2)`,
/// from the library binomial CDF.
fn oracle_ranks(n: usize, confidence: f64) -> (usize, usize) {
    let bin = Binomial::new(0.5, n as u64).unwrap();
    let coverage = |l: usize| bin.cdf((n - l) as u64) - if l == 0 { 0.0 } else { bin.cdf(l as u64 - 1) };
    let l = (1..=n / 2).take_while(|&l| coverage(l) >= confidence).last().unwrap();
    (l, n + 1 - l)
}

#[test]
fn median_ci_ranks_match_binomial_oracle() {
    assert_eq!(oracle_ranks(100, 0.95), (40, 61));
    for n in 6..=400 {
        assert_eq!(median_ci_ranks(n, 0.95).unwrap(), oracle_ranks(n, 0.95), "n = {n}");
    }
    for n in [10, 50, 99, 250] {
        assert_eq!(median_ci_ranks(n, 0.9).unwrap(), oracle_ranks(n, 0.9), "n = {n}");
    }
    assert!(median_ci_ranks(5, 0.95).is_err());
}

fn record(costs: &[(usize, f64)], reference: f64) -> TrialRecord {
    TrialRecord {
        env: "t".into(),
        selector: SelectorKind::Uniform,
        seed: 0,
        entries: costs
            .iter()
            .enumerate()
            .map(|(i, &(samples, best_cost))| TrialEntry {
                iteration: i + 1,
                samples,
                best_cost,
                wall_time: Duration::ZERO,
            })
            .collect(),
        converged_at: None,
        reference,
    }
}

/// A non-increasing cost sequence at increasing sample counts, possibly
/// starting without a solution.
fn trial() -> impl Strategy<Value = TrialRecord> {
    (0usize..5, prop::collection::vec(0.0f64..0.5, 1..30)).prop_map(|(unsolved, drops)| {
        let mut cost = 2.0;
        let costs: Vec<(usize, f64)> = drops
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let c = if i < unsolved {
                    f64::INFINITY
                } else {
                    cost = (cost - d).max(1.0);
                    cost
                };
                ((i + 1) * 50, c)
            })
            .collect();
        record(&costs, 1.0)
    })
}

proptest! {
    #[test]
    fn curves_are_monotone(trials in prop::collection::vec(trial(), 1..20)) {
        let grid: Vec<usize> = (1..=40).map(|k| k * 40).collect();
        let conv = convergence_percentage(&trials, &grid);
        prop_assert!(conv.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(conv.iter().all(|&p| (0.0..=1.0).contains(&p)));
        let cost = normalized_cost_curve(&trials, &grid);
        let defined: Vec<f64> = cost.iter().flatten().copied().collect();
        prop_assert!(defined.windows(2).all(|w| w[0] >= w[1]));
        // Once defined, a point stays defined.
        if let Some(first) = cost.iter().position(Option::is_some) {
            prop_assert!(cost[first..].iter().all(Option::is_some));
        }
    }

    #[test]
    fn efficiency_is_first_closed_crossing(t in trial()) {
        let want = t.entries.iter().find(|e| e.best_cost <= 1.02).map(|e| e.samples);
        prop_assert_eq!(sample_efficiency(&t), want);
    }

    #[test]
    fn median_ci_endpoints_are_inputs_bracketing_the_median(values in prop::collection::vec(-1e3f64..1e3, 6..200)) {
        let (lo, hi) = median_ci(&values, 0.95).unwrap();
        prop_assert!(values.contains(&lo) && values.contains(&hi));
        let mut v = values.clone();
        let m = guild_core::bench::median(&mut v);
        prop_assert!(lo <= m && m <= hi);
    }
}

#[test]
fn identical_values_give_a_point_interval() {
    assert_eq!(median_ci(&[3.5; 17], 0.95).unwrap(), (3.5, 3.5));
}

fn results_bytes(trials: &[TrialRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    write_results(&mut out, trials).unwrap();
    out
}

#[test]
fn trials_are_reproducible_and_ordered_by_seed() {
    let env = make_environment(EnvKind::Trap, 1).unwrap();
    let spec = TrialSpec::new(SelectorKind::bandit(), 800);
    let a = run_trials(&env, &spec, 4, Some(12.0), 1).unwrap();
    let b = run_trials(&env, &spec, 4, Some(12.0), 3).unwrap();
    let sequential: Vec<TrialRecord> = (0..4).map(|s| run_trial(&env, &spec, s, Some(12.0)).unwrap()).collect();
    assert_eq!(results_bytes(&a), results_bytes(&b));
    assert_eq!(results_bytes(&a), results_bytes(&sequential));
    for (seed, t) in a.iter().enumerate() {
        assert_eq!(t.seed, seed as u64);
        assert!(t.entries.windows(2).all(|w| w[0].best_cost >= w[1].best_cost));
        assert_eq!(t.converged_at, sample_efficiency(t));
    }
}

#[test]
fn reference_on_empty_world_is_the_straight_line_and_cached() {
    let env = common::empty_square();
    let dir = TempDir::new().unwrap();
    let straight = common::norm(env.start.coords(), env.target.coords());
    let reference = optimal_cost_reference(&env, 10.0, Some(dir.path())).unwrap();
    assert!(reference >= straight && reference <= straight * 1.01, "{reference} vs {straight}");

    let started = Instant::now();
    let again = optimal_cost_reference(&env, 10.0, Some(dir.path())).unwrap();
    assert_eq!(again.to_bits(), reference.to_bits());
    assert!(started.elapsed() < Duration::from_secs(1));

    // The cache is what is read back: an edited entry is returned verbatim.
    let entry = fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
    let text = fs::read_to_string(&entry).unwrap();
    let edited = text.replace(&format!("{:016x}", reference.to_bits()), &format!("{:016x}", 42.5f64.to_bits()));
    assert_ne!(edited, text);
    fs::write(&entry, edited).unwrap();
    assert_eq!(optimal_cost_reference(&env, 10.0, Some(dir.path())).unwrap(), 42.5);

    assert!(optimal_cost_reference(&env, 5.0, None).is_err());
}
