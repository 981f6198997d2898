//! The anytime loop: densify the edge-implicit graph, search it from scratch,
//! emit the path whenever it beats the best cost so far.
//!
//! The graph stores vertices only. Two vertices are adjacent when their
//! distance is within the connection radius for the current vertex count;
//! edges are collision-checked lazily, the first time the search would use
//! them, and the verdict is memoized for the rest of the run. Edges of the
//! best path found so far stay in the graph even after the radius shrinks
//! below their length, so the search never loses a solution it has emitted.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rand::Rng;
use rustc_hash::FxHashMap;

use crate::environments::Environment;
use crate::error::{Error, Result};
use crate::kdtree::KdTree;
use crate::sampling::unit_ball_measure;
use crate::statespace::{Path, State};

/// Multiplier on the asymptotic-optimality radius constant.
pub const RADIUS_TUNING: f64 = 1.1;

pub const DEFAULT_BATCH: usize = 50;

/// A new solution must beat the best cost by more than this to count.
pub const IMPROVEMENT_EPSILON: f64 = 1e-12;

/// Draw attempts per requested state before uniform sampling gives up.
const UNIFORM_ATTEMPTS_PER_STATE: usize = 10_000;

/// Vertex index of the start.
pub const START: u32 = 0;
/// Vertex index of the target.
pub const TARGET: u32 = 1;

const NO_PARENT: u32 = u32::MAX;

/// Adjacency is pruned once the radius falls below this fraction of the
/// radius at the previous prune.
const PRUNE_FACTOR: f64 = 0.8;

/// `eta * gamma * (log n / n)^(1/d)` with
/// `gamma = 2 (1 + 1/d)^(1/d) (measure / unit_ball(d))^(1/d)`.
pub fn connection_radius(n: usize, d: usize, space_measure: f64) -> f64 {
    let n = n.max(2) as f64;
    let inv_d = 1.0 / d as f64;
    let gamma = 2.0 * (1.0 + inv_d).powf(inv_d) * (space_measure / unit_ball_measure(d)).powf(inv_d);
    RADIUS_TUNING * gamma * (n.ln() / n).powf(inv_d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerConfig {
    pub batch: usize,
    /// Edge collision-checking resolution along the metric.
    pub resolution: f64,
}

impl PlannerConfig {
    pub fn for_env(env: &Environment) -> Self {
        Self {
            batch: DEFAULT_BATCH,
            resolution: env.default_resolution(),
        }
    }
}

/// Vertices, their adjacency under the connection radius, and the
/// edge-validity memo.
///
/// The radius only shrinks as vertices are added, so adjacency is built
/// incrementally: each new vertex is linked to everything within the radius
/// at the time it is synced. Entries beyond the current radius are skipped
/// by readers and dropped once the radius has shrunk enough since the last
/// prune.
#[derive(Debug, Clone)]
pub struct Graph {
    stride: usize,
    tdim: usize,
    coords: Vec<f64>,
    adjacency: Vec<Vec<u32>>,
    /// Spatial index over vertices `0..indexed`; later ones are scanned.
    index: KdTree,
    indexed: usize,
    synced: usize,
    synced_radius: f64,
    pruned_radius: f64,
    memo: FxHashMap<u64, bool>,
    pinned: FxHashMap<u32, Vec<u32>>,
    resolution: f64,
    space_measure: f64,
    edge_checks: u64,
}

fn edge_key(u: u32, v: u32) -> u64 {
    let (a, b) = if u < v { (u, v) } else { (v, u) };
    ((a as u64) << 32) | b as u64
}

impl Graph {
    /// A graph holding only the start (vertex 0) and target (vertex 1).
    pub fn new(env: &Environment, resolution: f64) -> Self {
        let mut g = Self {
            stride: env.space.dimension(),
            tdim: env.space.translational_dimension(),
            coords: Vec::new(),
            adjacency: Vec::new(),
            index: KdTree::default(),
            indexed: 0,
            synced: 0,
            synced_radius: f64::INFINITY,
            pruned_radius: f64::INFINITY,
            memo: FxHashMap::default(),
            pinned: FxHashMap::default(),
            resolution,
            space_measure: env.space.measure(),
            edge_checks: 0,
        };
        g.add_vertex(&env.start);
        g.add_vertex(&env.target);
        g
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.stride
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn add_vertex(&mut self, s: &State) -> u32 {
        debug_assert_eq!(s.len(), self.stride);
        let id = self.len() as u32;
        self.coords.extend_from_slice(s.coords());
        id
    }

    pub fn vertex(&self, id: u32) -> &[f64] {
        let i = id as usize * self.stride;
        &self.coords[i..i + self.stride]
    }

    pub fn state(&self, id: u32) -> State {
        State::from_raw(self.vertex(id).to_vec())
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Number of collision checks performed (memo misses).
    pub fn edge_checks(&self) -> u64 {
        self.edge_checks
    }

    /// Connection radius for the current vertex count.
    pub fn radius(&self) -> f64 {
        connection_radius(self.len(), self.stride, self.space_measure)
    }

    /// Links vertices added since the last sync and drops adjacency entries
    /// that the radius has shrunk past.
    fn sync(&mut self, env: &Environment) {
        let n = self.len();
        if self.synced == n {
            return;
        }
        let radius = self.radius();
        if n - self.indexed > (n / 8).max(256) {
            self.index = KdTree::build(&self.coords, self.stride, self.tdim);
            self.indexed = n;
        }
        self.adjacency.resize_with(n, Vec::new);
        if radius < PRUNE_FACTOR * self.pruned_radius {
            self.pruned_radius = radius;
            let space = &env.space;
            let (stride, coords) = (self.stride, &self.coords);
            let at = |i: usize| &coords[i * stride..(i + 1) * stride];
            for (u, list) in self.adjacency[..self.synced].iter_mut().enumerate() {
                list.retain(|&v| space.distance_coords(at(u), at(v as usize)) <= radius);
            }
        }
        let mut found = Vec::new();
        let stride = self.stride;
        let coords = &self.coords;
        let at = |i: usize| &coords[i * stride..(i + 1) * stride];
        for u in self.synced..n {
            let here = at(u);
            found.clear();
            self.index.within_radius(&here[..self.tdim], radius, &mut found);
            found.sort_unstable();
            found.extend(self.indexed as u32..u as u32);
            for &v in &found {
                let vi = v as usize;
                // Pairs of new vertices are linked once, from the larger id.
                if vi >= u {
                    continue;
                }
                let d = env.space.distance_coords(at(vi), here);
                if d <= radius {
                    self.adjacency[u].push(v);
                    self.adjacency[vi].push(u as u32);
                }
            }
        }
        self.synced = n;
        self.synced_radius = radius;
    }

    /// All vertices other than `u` within the current radius of it.
    pub fn neighbors(&mut self, env: &Environment, u: u32) -> Vec<u32> {
        self.sync(env);
        let radius = self.synced_radius;
        let here = self.vertex(u);
        let mut out: Vec<u32> = self.adjacency[u as usize]
            .iter()
            .copied()
            .filter(|&v| env.space.distance_coords(here, self.vertex(v)) <= radius)
            .collect();
        out.sort_unstable();
        out
    }

    pub fn edge_valid(&mut self, env: &Environment, u: u32, v: u32) -> bool {
        let key = edge_key(u, v);
        if let Some(&known) = self.memo.get(&key) {
            return known;
        }
        self.edge_checks += 1;
        let ok = env.is_edge_valid_coords(self.vertex(u), self.vertex(v), self.resolution);
        self.memo.insert(key, ok);
        ok
    }

    /// Keeps the edges of `path` (vertex ids) adjacent regardless of radius.
    fn pin_path(&mut self, ids: &[u32]) {
        for w in ids.windows(2) {
            self.pinned.entry(w[0]).or_default().push(w[1]);
            self.pinned.entry(w[1]).or_default().push(w[0]);
        }
    }

    /// A* from the start to the target. Returns the search tree and, when the
    /// target is reached, the optimal path on the current graph.
    pub fn search(&mut self, env: &Environment) -> (SearchTree, Option<Path>) {
        self.sync(env);
        let radius = self.synced_radius;
        let n = self.len();
        let mut tree = SearchTree::new(n);
        let target = self.vertex(TARGET).to_vec();
        let h = |c: &[f64]| env.space.heuristic_coords(c, &target);
        let mut open = BinaryHeap::new();
        tree.g[START as usize] = 0.0;
        open.push(OpenEntry { f: h(self.vertex(START)), g: 0.0, id: START });
        let mut extra = Vec::new();
        while let Some(OpenEntry { g, id: u, .. }) = open.pop() {
            let ui = u as usize;
            if tree.expanded[ui] || g > tree.g[ui] {
                continue;
            }
            tree.expanded[ui] = true;
            if u == TARGET {
                break;
            }
            extra.clear();
            if let Some(pins) = self.pinned.get(&u) {
                extra.extend_from_slice(pins);
            }
            let list = std::mem::take(&mut self.adjacency[ui]);
            let pinned_from = list.len();
            for (k, &v) in list.iter().chain(extra.iter()).enumerate() {
                let vi = v as usize;
                if tree.expanded[vi] {
                    continue;
                }
                let d = env.space.distance_coords(self.vertex(u), self.vertex(v));
                if d > radius && k < pinned_from {
                    continue;
                }
                let candidate = g + d;
                if candidate < tree.g[vi] && self.edge_valid(env, u, v) {
                    tree.g[vi] = candidate;
                    tree.parent[vi] = u;
                    open.push(OpenEntry { f: candidate + h(self.vertex(v)), g: candidate, id: v });
                }
            }
            self.adjacency[ui] = list;
        }
        let path = tree.path_ids(TARGET).map(|ids| Path {
            states: ids.iter().map(|&i| self.state(i)).collect(),
            cost: tree.g[TARGET as usize],
        });
        (tree, path)
    }
}

#[derive(Debug, Clone, Copy)]
struct OpenEntry {
    f: f64,
    g: f64,
    id: u32,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenEntry {}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenEntry {
    /// Reversed so the max-heap pops the smallest `f`, then smallest `g`,
    /// then smallest id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g.total_cmp(&self.g))
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Per-vertex cost-to-come, parent and expansion flag from one search.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchTree {
    g: Vec<f64>,
    parent: Vec<u32>,
    expanded: Vec<bool>,
}

impl SearchTree {
    fn new(n: usize) -> Self {
        Self {
            g: vec![f64::INFINITY; n],
            parent: vec![NO_PARENT; n],
            expanded: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    /// Cost-to-come; infinite when unreached or unknown to this tree.
    pub fn cost_to_come(&self, v: u32) -> f64 {
        self.g.get(v as usize).copied().unwrap_or(f64::INFINITY)
    }

    pub fn parent(&self, v: u32) -> Option<u32> {
        self.parent.get(v as usize).copied().filter(|&p| p != NO_PARENT)
    }

    pub fn is_expanded(&self, v: u32) -> bool {
        self.expanded.get(v as usize).copied().unwrap_or(false)
    }

    pub fn is_reached(&self, v: u32) -> bool {
        self.cost_to_come(v).is_finite()
    }

    /// Vertex ids from the start to `v`, if `v` was reached.
    pub fn path_ids(&self, v: u32) -> Option<Vec<u32>> {
        if !self.is_reached(v) {
            return None;
        }
        let mut ids = vec![v];
        let mut cur = v;
        while let Some(p) = self.parent(cur) {
            ids.push(p);
            cur = p;
        }
        ids.reverse();
        Some(ids)
    }
}

/// A batch of collision-free states and how many draws were discarded.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub states: Vec<State>,
    pub rejected: usize,
}

/// A densification strategy.
pub trait Densifier {
    /// Draws `batch` collision-free states for the planner to add.
    fn densify<R: Rng + ?Sized>(&mut self, planner: &Planner<'_>, batch: usize, rng: &mut R) -> Result<Batch>;

    /// Called after each search with the best cost before and after it.
    fn observe(&mut self, _previous_cost: f64, _new_cost: f64) {}
}

/// Rejection sampling over the whole free space.
pub fn sample_free<R: Rng + ?Sized>(env: &Environment, batch: usize, rng: &mut R) -> Result<Batch> {
    let mut out = Batch::default();
    let cap = batch.max(1) * UNIFORM_ATTEMPTS_PER_STATE;
    let mut attempts = 0;
    while out.states.len() < batch {
        if attempts == cap {
            return Err(Error::SamplingStarved { attempts });
        }
        attempts += 1;
        let s = env.space.sample_uniform(rng);
        if env.is_state_valid(&s) {
            out.states.push(s);
        } else {
            out.rejected += 1;
        }
    }
    Ok(out)
}

/// Densifies uniformly over the free space regardless of the solution.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformDensifier;

impl Densifier for UniformDensifier {
    fn densify<R: Rng + ?Sized>(&mut self, planner: &Planner<'_>, batch: usize, rng: &mut R) -> Result<Batch> {
        sample_free(planner.env(), batch, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    /// Accepted (collision-free) densification samples so far.
    pub samples_drawn: usize,
    /// Discarded draws so far.
    pub rejected: usize,
    pub best_cost: f64,
    pub improved: bool,
    pub vertices: usize,
    pub elapsed: Duration,
}

/// One anytime planning run.
#[derive(Debug, Clone)]
pub struct Planner<'e> {
    env: &'e Environment,
    config: PlannerConfig,
    graph: Graph,
    tree: SearchTree,
    best_cost: f64,
    best_path: Option<Path>,
    samples_drawn: usize,
    rejected: usize,
    iteration: usize,
    started: Instant,
}

impl<'e> Planner<'e> {
    pub fn new(env: &'e Environment, config: PlannerConfig) -> Result<Self> {
        if config.batch == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if !(config.resolution > 0.0) {
            return Err(Error::InvalidArgument("resolution must be positive".into()));
        }
        Ok(Self {
            env,
            config,
            graph: Graph::new(env, config.resolution),
            tree: SearchTree::default(),
            best_cost: f64::INFINITY,
            best_path: None,
            samples_drawn: 0,
            rejected: 0,
            iteration: 0,
            started: Instant::now(),
        })
    }

    pub fn env(&self) -> &'e Environment {
        self.env
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    /// Tree from the most recent search (empty before the first).
    pub fn tree(&self) -> &SearchTree {
        &self.tree
    }

    pub fn best_cost(&self) -> f64 {
        self.best_cost
    }

    pub fn best_path(&self) -> Option<&Path> {
        self.best_path.as_ref()
    }

    pub fn has_solution(&self) -> bool {
        self.best_cost.is_finite()
    }

    pub fn samples_drawn(&self) -> usize {
        self.samples_drawn
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Adds a vertex that does not count as a densification sample.
    pub fn insert_vertex(&mut self, s: &State) -> u32 {
        self.graph.add_vertex(s)
    }

    /// Densify, search, and record an improvement if there is one.
    pub fn iterate<D: Densifier, R: Rng + ?Sized>(&mut self, densifier: &mut D, rng: &mut R) -> Result<IterationReport> {
        let batch = densifier.densify(self, self.config.batch, rng)?;
        self.add_batch(batch);
        Ok(self.search_and_update(densifier))
    }

    fn add_batch(&mut self, batch: Batch) {
        self.samples_drawn += batch.states.len();
        self.rejected += batch.rejected;
        for s in &batch.states {
            self.graph.add_vertex(s);
        }
    }

    fn search_and_update<D: Densifier>(&mut self, densifier: &mut D) -> IterationReport {
        let previous = self.best_cost;
        let (tree, path) = self.graph.search(self.env);
        let mut improved = false;
        if let Some(path) = path {
            if path.cost < self.best_cost - IMPROVEMENT_EPSILON {
                improved = true;
                self.best_cost = path.cost;
                if let Some(ids) = tree.path_ids(TARGET) {
                    self.graph.pin_path(&ids);
                }
                self.best_path = Some(path);
            }
        }
        self.tree = tree;
        self.iteration += 1;
        densifier.observe(previous, self.best_cost);
        IterationReport {
            iteration: self.iteration,
            samples_drawn: self.samples_drawn,
            rejected: self.rejected,
            best_cost: self.best_cost,
            improved,
            vertices: self.graph.len(),
            elapsed: self.started.elapsed(),
        }
    }

    /// Searches without densifying (e.g. after inserting beacons).
    pub fn search_only<D: Densifier>(&mut self, densifier: &mut D) -> IterationReport {
        self.search_and_update(densifier)
    }
}
