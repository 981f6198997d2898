//! Densification through beacons.
//!
//! A beacon is a fixed vertex of the graph. Once a solution of cost `c`
//! exists and a beacon `b` has been expanded with cost-to-come `g(b)`, the
//! union `E(start, b, g(b)) ∪ E(b, target, c - g(b))` contains every state
//! that could still lie on an improving path through `b`, and it is never
//! larger than the informed set `E(start, target, c)`. Each batch picks one
//! beacon and samples its union.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::environments::Environment;
use crate::error::{invalid, Error, Result};
use crate::planner::{sample_free, Batch, Densifier, Planner, SearchTree, START};
use crate::sampling::{halton, sample_local_subsets, LocalSubsets, HALTON_MAX_DIMENSION};
use crate::statespace::State;

pub const DEFAULT_BEACON_COUNT: usize = 30;
pub const DEFAULT_GAMMA: f64 = 0.1;

/// Halton indices tried per requested beacon before giving up.
const HALTON_INDICES_PER_BEACON: u64 = 100;

/// Draw attempts per requested state inside the chosen subsets.
const ATTEMPTS_PER_STATE: usize = 10_000;

const WEIGHT_MIN: f64 = 1e-12;
const WEIGHT_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectorKind {
    /// Always the start, which reduces to informed-set sampling.
    InformedSet,
    Uniform,
    Greedy,
    /// EXP3 with exploration rate `gamma` in (0, 1].
    Bandit { gamma: f64 },
}

impl SelectorKind {
    pub fn bandit() -> Self {
        SelectorKind::Bandit { gamma: DEFAULT_GAMMA }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SelectorKind::InformedSet => "InformedSet",
            SelectorKind::Uniform => "Uniform",
            SelectorKind::Greedy => "Greedy",
            SelectorKind::Bandit { .. } => "Bandit",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let SelectorKind::Bandit { gamma } = *self {
            if !(gamma > 0.0 && gamma <= 1.0) {
                return Err(invalid(format!("bandit gamma must be in (0, 1], got {gamma}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    /// Accepts the selector names case-insensitively, plus `IS` and `EXP3`.
    /// Bandit gets the default gamma.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "informedset" | "informed_set" | "is" => Ok(SelectorKind::InformedSet),
            "uniform" => Ok(SelectorKind::Uniform),
            "greedy" => Ok(SelectorKind::Greedy),
            "bandit" | "exp3" => Ok(SelectorKind::bandit()),
            _ => Err(invalid(format!("unknown selector {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeaconState {
    pub state: State,
    pub vertex: u32,
    /// EXP3 weight.
    pub weight: f64,
}

/// Beacons from the Halton sequence, scaled to the bounds, skipping invalid
/// points. The start is beacon 0; the rest are inserted as graph vertices.
pub fn init_beacons(planner: &mut Planner<'_>, count: usize) -> Result<Vec<BeaconState>> {
    let env = planner.env();
    let points = halton_beacons(env, count)?;
    let mut beacons = Vec::with_capacity(count + 1);
    beacons.push(BeaconState { state: env.start.clone(), vertex: START, weight: 1.0 });
    for state in points {
        let vertex = planner.insert_vertex(&state);
        beacons.push(BeaconState { state, vertex, weight: 1.0 });
    }
    Ok(beacons)
}

/// The first `count` valid Halton states, indices starting at 1.
pub fn halton_beacons(env: &Environment, count: usize) -> Result<Vec<State>> {
    if count == 0 {
        return Err(invalid("beacon count must be at least 1"));
    }
    let space = &env.space;
    let dim = space.dimension();
    if dim > HALTON_MAX_DIMENSION {
        return Err(invalid(format!("beacons support at most {HALTON_MAX_DIMENSION} dimensions")));
    }
    let tdim = space.translational_dimension();
    let (lo, hi) = (space.lower_bounds(), space.upper_bounds());
    let mut out = Vec::with_capacity(count);
    let limit = HALTON_INDICES_PER_BEACON * count as u64;
    for index in 1..=limit {
        let u = halton(index, dim);
        let mut coords: Vec<f64> = (0..tdim).map(|i| lo[i] + u[i] * (hi[i] - lo[i])).collect();
        if space.is_se2() {
            coords.push(-std::f64::consts::PI + u[2] * std::f64::consts::TAU);
        }
        let state = space.state(coords)?;
        if env.is_state_valid(&state) {
            out.push(state);
            if out.len() == count {
                return Ok(out);
            }
        }
    }
    Err(Error::EnvironmentTooCluttered { found: out.len(), wanted: count })
}

/// Whether `b` may be used: expanded in the current tree, and its
/// beacon-target set is nonempty under the best cost.
pub fn is_eligible(env: &Environment, tree: &SearchTree, b: &BeaconState, best_cost: f64) -> bool {
    if !tree.is_expanded(b.vertex) {
        return false;
    }
    let h = env.space.heuristic_coords(b.state.coords(), env.target.coords());
    tree.cost_to_come(b.vertex) + h <= best_cost
}

/// The subsets beacon `b` induces, on translational coordinates.
pub fn local_subsets(env: &Environment, tree: &SearchTree, b: &BeaconState, best_cost: f64) -> Result<LocalSubsets> {
    let t = env.space.translational_dimension();
    LocalSubsets::new(
        &env.start.coords()[..t],
        &b.state.coords()[..t],
        &env.target.coords()[..t],
        tree.cost_to_come(b.vertex),
        best_cost,
    )
}

/// Greedy score: best possible improvement per unit of sampled measure.
pub fn greedy_score(env: &Environment, b: &BeaconState, best_cost: f64, measure: f64) -> f64 {
    let space = &env.space;
    let through = space.heuristic_coords(env.start.coords(), b.state.coords())
        + space.heuristic_coords(b.state.coords(), env.target.coords());
    (best_cost - through) / measure
}

/// Index of the highest-scoring candidate; ties go to the smaller vertex id.
/// Candidates with zero or non-finite measure are skipped.
pub fn greedy_argmax(candidates: &[(u32, f64, f64)]) -> Option<usize> {
    let mut best: Option<(usize, f64, u32)> = None;
    for (i, &(vertex, numerator, measure)) in candidates.iter().enumerate() {
        if !(measure > 0.0 && measure.is_finite()) {
            continue;
        }
        let score = numerator / measure;
        let better = match best {
            None => true,
            Some((_, s, v)) => score > s || (score == s && vertex < v),
        };
        if better {
            best = Some((i, score, vertex));
        }
    }
    best.map(|(i, _, _)| i)
}

/// EXP3 probabilities over `eligible` arms (indices into `weights`).
pub fn exp3_probabilities(weights: &[f64], eligible: &[usize], gamma: f64) -> Vec<f64> {
    let k = eligible.len() as f64;
    let total: f64 = eligible.iter().map(|&i| weights[i]).sum();
    eligible.iter().map(|&i| (1.0 - gamma) * weights[i] / total + gamma / k).collect()
}

/// EXP3 weight update for the chosen arm, then clamping: when a weight
/// leaves `[1e-12, 1e12]`, all weights are rescaled so the largest is 1 and
/// the rest are floored at 1e-12.
pub fn exp3_update(weights: &mut [f64], chosen: usize, reward: f64, probability: f64, gamma: f64, k_eligible: usize) -> Result<()> {
    if !(probability > 0.0) {
        return Err(Error::Internal(format!("bandit arm probability {probability} is not positive")));
    }
    let estimate = reward / probability;
    weights[chosen] *= (gamma * estimate / k_eligible as f64).exp();
    if weights.iter().any(|&w| !(WEIGHT_MIN..=WEIGHT_MAX).contains(&w)) {
        let max = weights.iter().copied().fold(0.0, f64::max);
        for w in weights.iter_mut() {
            *w = (*w / max).max(WEIGHT_MIN);
        }
    }
    Ok(())
}

/// Fractional improvement; zero when the cost did not drop.
pub fn bandit_reward(previous_cost: f64, new_cost: f64) -> f64 {
    if previous_cost.is_finite() && new_cost < previous_cost {
        (previous_cost - new_cost) / previous_cost
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PendingReward {
    arm: usize,
    probability: f64,
    k_eligible: usize,
}

/// Beacon-guided densification with one of the four selectors.
#[derive(Debug, Clone)]
pub struct GuildSampler {
    kind: SelectorKind,
    beacons: Vec<BeaconState>,
    pending: Option<PendingReward>,
    selections: Vec<u64>,
    fallbacks: u64,
}

impl GuildSampler {
    /// Builds the beacon set and inserts it into the planner's graph.
    pub fn new(planner: &mut Planner<'_>, kind: SelectorKind, beacon_count: usize) -> Result<Self> {
        kind.validate()?;
        let beacons = init_beacons(planner, beacon_count)?;
        let n = beacons.len();
        Ok(Self { kind, beacons, pending: None, selections: vec![0; n], fallbacks: 0 })
    }

    pub fn kind(&self) -> SelectorKind {
        self.kind
    }

    pub fn beacons(&self) -> &[BeaconState] {
        &self.beacons
    }

    /// Times each beacon has been selected.
    pub fn selections(&self) -> &[u64] {
        &self.selections
    }

    /// Batches that fell back to the informed set because the chosen
    /// beacon's subsets had zero measure.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    /// Indices of eligible beacons.
    pub fn eligible(&self, planner: &Planner<'_>) -> Vec<usize> {
        let c = planner.best_cost();
        (0..self.beacons.len())
            .filter(|&i| is_eligible(planner.env(), planner.tree(), &self.beacons[i], c))
            .collect()
    }

    /// Picks a beacon index. Requires a solution.
    pub fn select<R: Rng + ?Sized>(&mut self, planner: &Planner<'_>, rng: &mut R) -> Result<usize> {
        let c = planner.best_cost();
        if !c.is_finite() {
            return Err(Error::Internal("beacon selection before the first solution".into()));
        }
        let eligible = self.eligible(planner);
        if eligible.is_empty() {
            return Err(Error::Internal("no eligible beacon; the start should always be".into()));
        }
        let env = planner.env();
        let tree = planner.tree();
        let chosen = match self.kind {
            SelectorKind::InformedSet => 0,
            SelectorKind::Uniform => eligible[rng.random_range(0..eligible.len())],
            SelectorKind::Greedy => {
                let mut candidates = Vec::with_capacity(eligible.len());
                for &i in &eligible {
                    let b = &self.beacons[i];
                    let measure = local_subsets(env, tree, b, c)?.measure_sum();
                    let numerator = greedy_score(env, b, c, 1.0);
                    candidates.push((b.vertex, numerator, measure));
                }
                greedy_argmax(&candidates).map(|j| eligible[j]).unwrap_or(0)
            }
            SelectorKind::Bandit { gamma } => {
                let weights: Vec<f64> = self.beacons.iter().map(|b| b.weight).collect();
                let probs = exp3_probabilities(&weights, &eligible, gamma);
                let j = sample_index(&probs, rng);
                self.pending = Some(PendingReward {
                    arm: eligible[j],
                    probability: probs[j],
                    k_eligible: eligible.len(),
                });
                eligible[j]
            }
        };
        self.selections[chosen] += 1;
        Ok(chosen)
    }
}

/// Inverse-CDF draw from a discrete distribution.
fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

impl Densifier for GuildSampler {
    fn densify<R: Rng + ?Sized>(&mut self, planner: &Planner<'_>, batch: usize, rng: &mut R) -> Result<Batch> {
        let env = planner.env();
        if !planner.has_solution() {
            return sample_free(env, batch, rng);
        }
        let c = planner.best_cost();
        let chosen = self.select(planner, rng)?;
        let mut subsets = local_subsets(env, planner.tree(), &self.beacons[chosen], c)?;
        if !(subsets.measure_sum() > 0.0) {
            log::debug!("beacon {chosen} has degenerate subsets; sampling the informed set");
            self.fallbacks += 1;
            subsets = local_subsets(env, planner.tree(), &self.beacons[0], c)?;
        }
        let mut out = Batch::default();
        let cap = batch * ATTEMPTS_PER_STATE;
        let mut attempts = 0;
        while out.states.len() < batch {
            if attempts == cap {
                return Err(Error::SamplingStarved { attempts });
            }
            attempts += 1;
            let s = sample_local_subsets(&subsets, &env.space, rng)?;
            if env.is_state_valid(&s) {
                out.states.push(s);
            } else {
                out.rejected += 1;
            }
        }
        Ok(out)
    }

    fn observe(&mut self, previous_cost: f64, new_cost: f64) {
        let Some(p) = self.pending.take() else { return };
        let SelectorKind::Bandit { gamma } = self.kind else { return };
        let reward = bandit_reward(previous_cost, new_cost);
        let mut weights: Vec<f64> = self.beacons.iter().map(|b| b.weight).collect();
        // Probabilities recorded at selection are always positive.
        if exp3_update(&mut weights, p.arm, reward, p.probability, gamma, p.k_eligible).is_ok() {
            for (b, w) in self.beacons.iter_mut().zip(weights) {
                b.weight = w;
            }
        }
    }
}

/// The densification strategies a trial can use.
#[derive(Debug, Clone)]
pub enum Strategy {
    /// Uniform over the free space throughout.
    Uniform,
    Guild(GuildSampler),
}

impl Strategy {
    /// Sets up `kind` on `planner`; `None` means plain uniform densification.
    pub fn new(planner: &mut Planner<'_>, kind: Option<SelectorKind>, beacon_count: usize) -> Result<Self> {
        match kind {
            None => Ok(Strategy::Uniform),
            Some(kind) => Ok(Strategy::Guild(GuildSampler::new(planner, kind, beacon_count)?)),
        }
    }
}

impl Densifier for Strategy {
    fn densify<R: Rng + ?Sized>(&mut self, planner: &Planner<'_>, batch: usize, rng: &mut R) -> Result<Batch> {
        match self {
            Strategy::Uniform => sample_free(planner.env(), batch, rng),
            Strategy::Guild(g) => g.densify(planner, batch, rng),
        }
    }

    fn observe(&mut self, previous_cost: f64, new_cost: f64) {
        if let Strategy::Guild(g) = self {
            g.observe(previous_cost, new_cost);
        }
    }
}
