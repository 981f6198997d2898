//! Trials, convergence metrics, order-statistic confidence intervals and
//! sample heatmaps.

use std::fs;
use std::io::Write;
use std::path::{Path as FsPath, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environments::Environment;
use crate::error::{invalid, Error, Result};
use crate::guild::{GuildSampler, SelectorKind, DEFAULT_BEACON_COUNT};
use crate::planner::{IterationReport, Planner, PlannerConfig, DEFAULT_BATCH};

/// A trial counts as converged once its cost is within this fraction of the
/// reference cost (inclusive).
pub const CONVERGENCE_TOLERANCE: f64 = 0.02;

/// Seeds used for reference runs, disjoint from trial seeds `0..trials`.
pub const REFERENCE_SEEDS: [u64; 3] = [1 << 40, (1 << 40) + 1, (1 << 40) + 2];

pub const MIN_REFERENCE_SECONDS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSpec {
    pub selector: SelectorKind,
    pub beacon_count: usize,
    pub batch: usize,
    /// Stop once at least this many samples have been drawn.
    pub sample_budget: usize,
    /// Optional wall-clock cap; makes the trial machine-dependent.
    pub time_budget: Option<Duration>,
    /// Stop as soon as the reference cost is reached.
    pub stop_on_convergence: bool,
    /// Edge-checking resolution; `None` uses the environment default.
    pub resolution: Option<f64>,
}

impl TrialSpec {
    pub fn new(selector: SelectorKind, sample_budget: usize) -> Self {
        Self {
            selector,
            beacon_count: DEFAULT_BEACON_COUNT,
            batch: DEFAULT_BATCH,
            sample_budget,
            time_budget: None,
            stop_on_convergence: false,
            resolution: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialEntry {
    pub iteration: usize,
    pub samples: usize,
    pub best_cost: f64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub env: String,
    pub selector: SelectorKind,
    pub seed: u64,
    pub entries: Vec<TrialEntry>,
    pub converged_at: Option<usize>,
    /// Reference cost; infinite when none was supplied.
    pub reference: f64,
}

impl TrialRecord {
    pub fn final_cost(&self) -> f64 {
        self.entries.last().map_or(f64::INFINITY, |e| e.best_cost)
    }

    /// Best cost after at most `samples` samples.
    pub fn cost_at(&self, samples: usize) -> f64 {
        let k = self.entries.partition_point(|e| e.samples <= samples);
        if k == 0 {
            f64::INFINITY
        } else {
            self.entries[k - 1].best_cost
        }
    }

    /// Cost of the first solution, infinite if none.
    pub fn first_solution_cost(&self) -> f64 {
        self.entries.iter().map(|e| e.best_cost).find(|c| c.is_finite()).unwrap_or(f64::INFINITY)
    }
}

/// Whether `cost` is within the convergence tolerance of `reference`.
pub fn is_converged(cost: f64, reference: f64) -> bool {
    cost <= reference * (1.0 + CONVERGENCE_TOLERANCE)
}

/// One trial on `env`; a pure function of the environment, spec and seed
/// unless a time budget is set.
pub fn run_trial(env: &Environment, spec: &TrialSpec, seed: u64, reference: Option<f64>) -> Result<TrialRecord> {
    run_trial_observed(env, spec, seed, reference, |_, _, _| {})
}

/// [`run_trial`] calling `observe` after every iteration with the planner,
/// the sampler and the iteration's report.
pub fn run_trial_observed<F>(
    env: &Environment,
    spec: &TrialSpec,
    seed: u64,
    reference: Option<f64>,
    mut observe: F,
) -> Result<TrialRecord>
where
    F: FnMut(&Planner<'_>, &GuildSampler, &IterationReport),
{
    if spec.sample_budget < spec.batch {
        return Err(invalid("sample budget must be at least the batch size"));
    }
    let config = PlannerConfig {
        batch: spec.batch,
        resolution: spec.resolution.unwrap_or_else(|| env.default_resolution()),
    };
    let mut planner = Planner::new(env, config)?;
    let mut sampler = GuildSampler::new(&mut planner, spec.selector, spec.beacon_count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reference_cost = reference.unwrap_or(f64::INFINITY);
    let started = Instant::now();
    let mut record = TrialRecord {
        env: env.name.clone(),
        selector: spec.selector,
        seed,
        entries: Vec::new(),
        converged_at: None,
        reference: reference_cost,
    };
    while planner.samples_drawn() < spec.sample_budget {
        if spec.time_budget.is_some_and(|t| started.elapsed() >= t) {
            break;
        }
        let report = planner.iterate(&mut sampler, &mut rng)?;
        observe(&planner, &sampler, &report);
        record.entries.push(TrialEntry {
            iteration: report.iteration,
            samples: report.samples_drawn,
            best_cost: report.best_cost,
            wall_time: started.elapsed(),
        });
        if record.converged_at.is_none() && is_converged(report.best_cost, reference_cost) {
            record.converged_at = Some(report.samples_drawn);
            if spec.stop_on_convergence {
                break;
            }
        }
    }
    Ok(record)
}

/// Trials for seeds `0..trials`, run on `threads` workers (0 = all cores),
/// returned in seed order.
pub fn run_trials(
    env: &Environment,
    spec: &TrialSpec,
    trials: u64,
    reference: Option<f64>,
    threads: usize,
) -> Result<Vec<TrialRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|seed| run_trial(env, spec, seed, reference))
            .collect()
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct ReferenceEntry {
    env: String,
    geometry_hash: String,
    budget_seconds: f64,
    /// Bit pattern of the cost, so the cached value is bit-exact.
    cost_bits: String,
    cost: f64,
}

fn reference_cache_path(dir: &FsPath, env: &Environment) -> PathBuf {
    let hash = env.geometry_hash();
    let safe: String = env.name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    dir.join(format!("{safe}-{}.toml", &hash[..16]))
}

/// Near-optimal cost for `env`: informed-set runs on three seeds sharing
/// `budget_seconds` between them, minimum final cost. Cached in `cache_dir`
/// (when given) by environment name and geometry hash.
pub fn optimal_cost_reference(env: &Environment, budget_seconds: f64, cache_dir: Option<&FsPath>) -> Result<f64> {
    if !(budget_seconds >= MIN_REFERENCE_SECONDS) {
        return Err(invalid(format!("reference budget must be at least {MIN_REFERENCE_SECONDS} s")));
    }
    let hash = env.geometry_hash();
    let path = cache_dir.map(|d| reference_cache_path(d, env));
    if let Some(path) = &path {
        if let Ok(text) = fs::read_to_string(path) {
            if let Ok(entry) = toml::from_str::<ReferenceEntry>(&text) {
                if entry.env == env.name && entry.geometry_hash == hash {
                    if let Ok(bits) = u64::from_str_radix(&entry.cost_bits, 16) {
                        return Ok(f64::from_bits(bits));
                    }
                }
            }
        }
    }
    let per_seed = Duration::from_secs_f64(budget_seconds / REFERENCE_SEEDS.len() as f64);
    let mut spec = TrialSpec::new(SelectorKind::InformedSet, usize::MAX);
    spec.time_budget = Some(per_seed);
    let mut best = f64::INFINITY;
    for &seed in &REFERENCE_SEEDS {
        let record = run_trial(env, &spec, seed, None)?;
        log::info!(
            "reference run on {} seed {seed}: cost {} after {} samples",
            env.name,
            record.final_cost(),
            record.entries.last().map_or(0, |e| e.samples)
        );
        best = best.min(record.final_cost());
    }
    if !best.is_finite() {
        return Err(Error::ReferenceUnavailable(env.name.clone()));
    }
    if let Some(path) = &path {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let entry = ReferenceEntry {
            env: env.name.clone(),
            geometry_hash: hash,
            budget_seconds,
            cost_bits: format!("{:016x}", best.to_bits()),
            cost: best,
        };
        let text = toml::to_string(&entry).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(path, text)?;
    }
    Ok(best)
}

/// Samples drawn when the trial first reached its reference cost.
pub fn sample_efficiency(record: &TrialRecord) -> Option<usize> {
    record
        .entries
        .iter()
        .find(|e| is_converged(e.best_cost, record.reference))
        .map(|e| e.samples)
}

/// Fraction of trials converged by each grid point.
pub fn convergence_percentage(trials: &[TrialRecord], grid: &[usize]) -> Vec<f64> {
    let eff: Vec<Option<usize>> = trials.iter().map(sample_efficiency).collect();
    grid.iter()
        .map(|&s| {
            let hit = eff.iter().filter(|e| e.is_some_and(|e| e <= s)).count();
            if trials.is_empty() {
                0.0
            } else {
                hit as f64 / trials.len() as f64
            }
        })
        .collect()
}

/// Median normalized cost at each grid point. Trials without a solution
/// count as infinite, so the curve is non-increasing; a point is `None`
/// while the median is infinite, i.e. while too few trials have solutions.
pub fn normalized_cost_curve(trials: &[TrialRecord], grid: &[usize]) -> Vec<Option<f64>> {
    grid.iter()
        .map(|&s| {
            if trials.is_empty() {
                return None;
            }
            let mut v: Vec<f64> = trials
                .iter()
                .map(|t| t.cost_at(s) / t.reference)
                .map(|x| if x.is_nan() { f64::INFINITY } else { x })
                .collect();
            Some(median(&mut v)).filter(|m| m.is_finite())
        })
        .collect()
}

/// Median; the mean of the middle two for even counts. Sorts `values`.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        let (a, b) = (values[n / 2 - 1], values[n / 2]);
        if a == b {
            a
        } else {
            a / 2.0 + b / 2.0
        }
    }
}

/// 1-indexed order-statistic ranks `(l, n + 1 - l)` of the tightest
/// symmetric interval covering the median with at least `confidence`.
pub fn median_ci_ranks(n: usize, confidence: f64) -> Result<(usize, usize)> {
    if n < 6 {
        return Err(invalid(format!("median confidence interval needs at least 6 values, got {n}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(invalid("confidence must be in (0, 1)"));
    }
    let ln_half_n = n as f64 * 0.5f64.ln();
    let ln_choose = |k: usize| {
        libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
    };
    let pmf: Vec<f64> = (0..=n).map(|k| (ln_choose(k) + ln_half_n).exp()).collect();
    // Coverage of [x_(l), x_(n+1-l)] is P(l <= B <= n - l), B ~ Bin(n, 1/2).
    let mut best = None;
    for l in 1..=n / 2 {
        let coverage: f64 = pmf[l..=n - l].iter().sum();
        if coverage >= confidence {
            best = Some(l);
        } else {
            break;
        }
    }
    match best {
        Some(l) => Ok((l, n + 1 - l)),
        None => Err(invalid(format!("{n} values cannot reach {confidence} confidence"))),
    }
}

/// Distribution-free confidence interval for the median.
pub fn median_ci(values: &[f64], confidence: f64) -> Result<(f64, f64)> {
    let (l, u) = median_ci_ranks(values.len(), confidence)?;
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok((v[l - 1], v[u - 1]))
}

/// Per-selector summary of a batch of trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorSummary {
    pub selector: SelectorKind,
    pub trials: usize,
    pub converged: usize,
    /// Median sample efficiency; non-converged trials count as infinite.
    pub median_efficiency: f64,
    pub ci: Option<(f64, f64)>,
    pub convergence: Vec<f64>,
    pub normalized_cost: Vec<Option<f64>>,
}

pub fn efficiencies(trials: &[TrialRecord]) -> Vec<f64> {
    trials
        .iter()
        .map(|t| sample_efficiency(t).map_or(f64::INFINITY, |s| s as f64))
        .collect()
}

pub fn summarize(trials: &[TrialRecord], grid: &[usize]) -> Result<SelectorSummary> {
    let first = trials.first().ok_or_else(|| invalid("no trials to summarize"))?;
    let mut eff = efficiencies(trials);
    let ci = if trials.len() >= 6 {
        Some(median_ci(&eff, 0.95)?)
    } else {
        log::warn!("{} trials: too few for a confidence interval", trials.len());
        None
    };
    Ok(SelectorSummary {
        selector: first.selector,
        trials: trials.len(),
        converged: eff.iter().filter(|x| x.is_finite()).count(),
        median_efficiency: median(&mut eff),
        ci,
        convergence: convergence_percentage(trials, grid),
        normalized_cost: normalized_cost_curve(trials, grid),
    })
}

/// Header of the per-iteration results file.
pub const RESULTS_HEADER: [&str; 8] =
    ["env", "selector", "seed", "iteration", "samples", "best_cost", "reference", "converged"];

/// One row per (trial, iteration). Wall time is left out so reruns are
/// byte-identical.
pub fn write_results<W: Write>(out: W, trials: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for t in trials {
        for e in &t.entries {
            w.write_record([
                t.env.clone(),
                t.selector.to_string(),
                t.seed.to_string(),
                e.iteration.to_string(),
                e.samples.to_string(),
                e.best_cost.to_string(),
                t.reference.to_string(),
                u8::from(is_converged(e.best_cost, t.reference)).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Wall-clock times per (trial, iteration), kept apart from the results.
pub fn write_timings<W: Write>(out: W, trials: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["env", "selector", "seed", "iteration", "wall_seconds"])?;
    for t in trials {
        for e in &t.entries {
            w.write_record([
                t.env.clone(),
                t.selector.to_string(),
                t.seed.to_string(),
                e.iteration.to_string(),
                format!("{:.6}", e.wall_time.as_secs_f64()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Summary table: one row per selector, then curve rows per grid point.
pub fn write_summary<W: Write>(mut out: W, summaries: &[SelectorSummary], grid: &[usize]) -> Result<()> {
    let fmt_opt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| v.to_string());
    writeln!(out, "selector,trials,converged,median_sample_efficiency,ci_low,ci_high")?;
    for s in summaries {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.selector,
            s.trials,
            s.converged,
            s.median_efficiency,
            fmt_opt(s.ci.map(|c| c.0)),
            fmt_opt(s.ci.map(|c| c.1)),
        )?;
    }
    writeln!(out)?;
    writeln!(out, "selector,samples,convergence_percentage,median_normalized_cost")?;
    for s in summaries {
        for (i, &g) in grid.iter().enumerate() {
            writeln!(out, "{},{},{},{}", s.selector, g, s.convergence[i], fmt_opt(s.normalized_cost[i]))?;
        }
    }
    Ok(())
}

/// Evenly spaced sample counts `step, 2 step, ..., up to max`.
pub fn sample_grid(step: usize, max: usize) -> Vec<usize> {
    (1..=max / step.max(1)).map(|k| k * step).collect()
}

/// Counts of sample locations on a square grid over a planar region.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    resolution: usize,
    lower: [f64; 2],
    upper: [f64; 2],
    counts: Vec<u64>,
    total: u64,
}

impl HeatmapGrid {
    pub fn new(resolution: usize, lower: [f64; 2], upper: [f64; 2]) -> Result<Self> {
        if resolution == 0 {
            return Err(invalid("heatmap resolution must be positive"));
        }
        if !(lower[0] < upper[0] && lower[1] < upper[1]) {
            return Err(invalid("heatmap bounds are empty"));
        }
        Ok(Self {
            resolution,
            lower,
            upper,
            counts: vec![0; resolution * resolution],
            total: 0,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Count in column `ix` (along the first axis) and row `iy`.
    pub fn count(&self, ix: usize, iy: usize) -> u64 {
        self.counts[iy * self.resolution + ix]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Records one sample; points outside the bounds go to the nearest cell.
    pub fn add(&mut self, x: f64, y: f64) {
        let cell = |v: f64, lo: f64, hi: f64| {
            let t = ((v - lo) / (hi - lo) * self.resolution as f64).floor();
            t.clamp(0.0, (self.resolution - 1) as f64) as usize
        };
        let ix = cell(x, self.lower[0], self.upper[0]);
        let iy = cell(y, self.lower[1], self.upper[1]);
        self.counts[iy * self.resolution + ix] += 1;
        self.total += 1;
    }
}

/// Binary PPM bytes: one pixel per cell, first axis to the right, second
/// axis up. Intensity `ln(1 + n) / ln(1 + max)` fades white into red.
pub fn encode_heatmap(grid: &HeatmapGrid) -> Vec<u8> {
    let r = grid.resolution;
    let mut out = format!("P6\n{r} {r}\n255\n").into_bytes();
    let max = grid.max_count();
    let denom = (max as f64).ln_1p();
    for row in 0..r {
        let iy = r - 1 - row;
        for ix in 0..r {
            let n = grid.count(ix, iy);
            let t = if max == 0 { 0.0 } else { (n as f64).ln_1p() / denom };
            let fade = (255.0 * (1.0 - t)).round() as u8;
            out.extend_from_slice(&[255, fade, fade]);
        }
    }
    out
}

pub fn render_heatmap(grid: &HeatmapGrid, path: &FsPath) -> Result<()> {
    fs::write(path, encode_heatmap(grid))?;
    Ok(())
}
