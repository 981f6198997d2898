mod common;

use guild_core::environments::{make_environment, EnvKind};
use guild_core::guild::{exp3_probabilities, exp3_update, is_eligible, GuildSampler, SelectorKind};
use guild_core::planner::{Batch, Densifier, Planner, PlannerConfig};
use guild_core::sampling::{sample_hyperspheroid_in_bounds, ProlateHyperspheroid};
use guild_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Wraps a sampler and checks every batch against the planner state it
/// was drawn for.
struct Checked {
    inner: GuildSampler,
    checked_samples: usize,
    checked_selections: usize,
}

impl Densifier for Checked {
    fn densify<R: Rng + ?Sized>(&mut self, planner: &Planner<'_>, batch: usize, rng: &mut R) -> Result<Batch> {
        let before = self.inner.selections().to_vec();
        let out = self.inner.densify(planner, batch, rng)?;
        if !planner.has_solution() {
            return Ok(out);
        }
        let env = planner.env();
        let c = planner.best_cost();
        let t = env.space.translational_dimension();
        let (vs, vt) = (&env.start.coords()[..t], &env.target.coords()[..t]);
        for s in &out.states {
            let x = &s.coords()[..t];
            let through = common::norm(vs, x) + common::norm(x, vt);
            assert!(through <= c + 1e-9, "sample {x:?} lies outside the informed set: {through} > {c}");
        }
        self.checked_samples += out.states.len();
        let chosen: Vec<usize> =
            (0..before.len()).filter(|&i| self.inner.selections()[i] != before[i]).collect();
        assert_eq!(chosen.len(), 1, "exactly one beacon per batch");
        let b = &self.inner.beacons()[chosen[0]];
        assert!(is_eligible(env, planner.tree(), b, c), "selected beacon {} is not eligible", chosen[0]);
        assert!(planner.tree().is_expanded(b.vertex));
        self.checked_selections += 1;
        Ok(out)
    }

    fn observe(&mut self, previous_cost: f64, new_cost: f64) {
        self.inner.observe(previous_cost, new_cost);
    }
}

#[test]
fn samples_stay_in_the_informed_set_and_beacons_are_eligible() {
    let kinds = [SelectorKind::InformedSet, SelectorKind::Uniform, SelectorKind::Greedy, SelectorKind::bandit()];
    let worlds = [EnvKind::Forest, EnvKind::TwoWall, EnvKind::Trap, EnvKind::SE2Maze, EnvKind::ClutterRn(3)];
    for world in worlds {
        let env = make_environment(world, 4).unwrap();
        for kind in kinds {
            let mut planner = Planner::new(&env, PlannerConfig::for_env(&env)).unwrap();
            let inner = GuildSampler::new(&mut planner, kind, 30).unwrap();
            let mut sampler = Checked { inner, checked_samples: 0, checked_selections: 0 };
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            while planner.samples_drawn() < 1500 {
                planner.iterate(&mut sampler, &mut rng).unwrap();
            }
            assert!(planner.has_solution(), "{world} {kind}: no solution");
            assert!(sampler.checked_samples >= 500, "{world} {kind}: {} checked", sampler.checked_samples);
            assert_eq!(sampler.checked_samples, 50 * sampler.checked_selections);
        }
    }
}

#[test]
fn informed_set_selector_matches_direct_informed_sampling() {
    let env = make_environment(EnvKind::Forest, 2).unwrap();
    let mut planner = Planner::new(&env, PlannerConfig::for_env(&env)).unwrap();
    let mut sampler = GuildSampler::new(&mut planner, SelectorKind::InformedSet, 30).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    while !planner.has_solution() {
        planner.iterate(&mut sampler, &mut rng).unwrap();
    }
    let c = planner.best_cost();
    let n = 100_000;
    let ours = sampler.densify(&planner, n, &mut rng).unwrap().states;

    let phs = ProlateHyperspheroid::new(env.start.coords().to_vec(), env.target.coords().to_vec(), c).unwrap();
    let mut direct = Vec::with_capacity(n);
    while direct.len() < n {
        let s = sample_hyperspheroid_in_bounds(&phs, &env.space, &mut rng).unwrap();
        if env.is_state_valid(&s) {
            direct.push(s);
        }
    }
    let center = phs.center().to_vec();
    let features: [(&str, Box<dyn Fn(&[f64]) -> f64>); 4] = [
        ("x", Box::new(|p| p[0])),
        ("y", Box::new(|p| p[1])),
        ("focal sum", Box::new(|p| common::norm(p, env.start.coords()) + common::norm(p, env.target.coords()))),
        ("bearing", Box::new(|p| (p[1] - center[1]).atan2(p[0] - center[0]))),
    ];
    for (name, f) in &features {
        let mut a: Vec<f64> = ours.iter().map(|s| f(s.coords())).collect();
        let mut b: Vec<f64> = direct.iter().map(|s| f(s.coords())).collect();
        let d = common::ks_statistic(&mut a, &mut b);
        assert!(d < common::ks_critical(n, n), "{name}: KS statistic {d}");
    }
}

/// Textbook EXP3 over the eligible arms, weights kept as logarithms.
struct Exp3Oracle {
    log_weights: Vec<f64>,
    gamma: f64,
}

impl Exp3Oracle {
    fn probabilities(&self, eligible: &[usize]) -> Vec<f64> {
        let max = eligible.iter().map(|&i| self.log_weights[i]).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = eligible.iter().map(|&i| (self.log_weights[i] - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let k = eligible.len() as f64;
        w.iter().map(|x| (1.0 - self.gamma) * x / total + self.gamma / k).collect()
    }

    fn update(&mut self, arm: usize, reward: f64, p: f64, k: usize) {
        self.log_weights[arm] += self.gamma * reward / (p * k as f64);
    }
}

fn draw(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

#[test]
fn exp3_matches_oracle_with_changing_eligibility() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arms = 12;
        let gamma = rng.random_range(0.05..0.5);
        let mut weights = vec![1.0; arms];
        let mut oracle = Exp3Oracle { log_weights: vec![0.0; arms], gamma };
        let means: Vec<f64> = (0..arms).map(|_| rng.random_range(0.0..1.0)).collect();
        for round in 0..2000 {
            let eligible: Vec<usize> = (0..arms).filter(|&i| i == 0 || rng.random_bool(0.7)).collect();
            let ours = exp3_probabilities(&weights, &eligible, gamma);
            let want = oracle.probabilities(&eligible);
            for (a, b) in ours.iter().zip(&want) {
                assert!((a - b).abs() < 1e-9, "seed {seed} round {round}: {a} vs {b}");
            }
            let j = draw(&want, rng.random::<f64>());
            let arm = eligible[j];
            let reward = if rng.random_bool(means[arm]) { rng.random_range(0.0..1.0) } else { 0.0 };
            exp3_update(&mut weights, arm, reward, ours[j], gamma, eligible.len()).unwrap();
            oracle.update(arm, reward, want[j], eligible.len());
        }
    }
}

#[test]
fn exp3_prefers_a_consistently_rewarded_arm() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arms = 10;
        let gamma = 0.1;
        let good = rng.random_range(0..arms);
        let eligible: Vec<usize> = (0..arms).collect();
        let mut weights = vec![1.0; arms];
        for _ in 0..1000 {
            let p = exp3_probabilities(&weights, &eligible, gamma);
            let arm = draw(&p, rng.random::<f64>());
            let reward = if arm == good { 1.0 } else { 0.0 };
            exp3_update(&mut weights, arm, reward, p[arm], gamma, arms).unwrap();
        }
        let p = exp3_probabilities(&weights, &eligible, gamma);
        assert!(p[good] > 0.8, "seed {seed}: {}", p[good]);
    }
}
