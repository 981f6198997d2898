//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use guild_core::environments::{Environment, Obstacle};
use guild_core::statespace::StateSpace;
use rand::Rng;

/// A valid beacon configuration: `g >= |vs - b|` and `g + |b - vt| <= c`.
#[derive(Debug, Clone)]
pub struct SubsetConfig {
    pub vs: Vec<f64>,
    pub vt: Vec<f64>,
    pub b: Vec<f64>,
    pub g: f64,
    pub c: f64,
}

pub fn norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Random configuration in `[0, 10]^d`. About one in ten has a tight
/// cost-to-come and one in ten a tight solution cost, so degenerate members
/// are exercised too.
pub fn random_config<R: Rng>(rng: &mut R, d: usize) -> SubsetConfig {
    let mut point = || (0..d).map(|_| rng.random_range(0.0..10.0)).collect::<Vec<f64>>();
    let (vs, vt, b) = (point(), point(), point());
    let to_beacon = norm(&vs, &b);
    let g = if rng.random_bool(0.1) { to_beacon } else { to_beacon * rng.random_range(1.0..1.6) };
    let lower = g + norm(&b, &vt);
    let c = if rng.random_bool(0.1) { lower } else { lower * rng.random_range(1.0..1.6) };
    SubsetConfig { vs, vt, b, g, c }
}

/// Shortest-path costs from vertex 0 with weights from `weight(u, v)`
/// (`None` = no edge), by textbook Dijkstra with costs accumulated along
/// each path in order.
pub fn dijkstra(n: usize, weight: impl Fn(usize, usize) -> Option<f64>) -> Vec<f64> {
    #[derive(PartialEq)]
    struct Entry(f64, usize);
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> Ordering {
            other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
        }
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[0] = 0.0;
    heap.push(Entry(0.0, 0));
    while let Some(Entry(d, u)) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for v in 0..n {
            if v == u || done[v] {
                continue;
            }
            if let Some(w) = weight(u, v) {
                if d + w < dist[v] {
                    dist[v] = d + w;
                    heap.push(Entry(d + w, v));
                }
            }
        }
    }
    dist
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Critical value of the two-sample KS test at significance 0.001.
pub fn ks_critical(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.95 * ((n + m) / (n * m)).sqrt()
}

/// Empty `[0, 10]^2` from `(0.5, 0.5)` to `(9.5, 9.5)`.
pub fn empty_square() -> Environment {
    let space = StateSpace::real_vector(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap();
    let s = space.state(vec![0.5, 0.5]).unwrap();
    let t = space.state(vec![9.5, 9.5]).unwrap();
    Environment::new("Empty", space, vec![], s, t, 0.0).unwrap()
}

/// `[0, 10]^2` with a few random boxes and circles that leave the start
/// `(0.5, 0.5)` and target `(9.5, 9.5)` free.
pub fn random_world<R: Rng>(rng: &mut R) -> Environment {
    let space = StateSpace::real_vector(vec![0.0, 0.0], vec![10.0, 10.0]).unwrap();
    let s = space.state(vec![0.5, 0.5]).unwrap();
    let t = space.state(vec![9.5, 9.5]).unwrap();
    let count = rng.random_range(0..8);
    let mut obstacles = Vec::new();
    while obstacles.len() < count {
        let o = if rng.random_bool(0.5) {
            let c = vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)];
            Obstacle::circle(c, rng.random_range(0.3..1.5)).unwrap()
        } else {
            let lo = [rng.random_range(0.0..9.0), rng.random_range(0.0..9.0)];
            let hi = vec![lo[0] + rng.random_range(0.2..3.0), lo[1] + rng.random_range(0.2..3.0)];
            Obstacle::aabb(lo.to_vec(), hi).unwrap()
        };
        if !o.collides(s.coords(), 0.0) && !o.collides(t.coords(), 0.0) {
            obstacles.push(o);
        }
    }
    Environment::new("Random", space, obstacles, s, t, 0.0).unwrap()
}

/// One search-oracle instance: a random world with `n <= 50` vertices
/// searched once by the planner. Returns the planner's cost and the cost
/// Dijkstra finds on the explicit radius graph with the same edge checks.
pub fn search_oracle_instance(seed: u64) -> (f64, f64) {
    use guild_core::planner::{Planner, PlannerConfig, UniformDensifier};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let env = random_world(&mut rng);
    let n = rng.random_range(2..=50);
    let mut planner = Planner::new(&env, PlannerConfig::for_env(&env)).unwrap();
    while planner.graph().len() < n {
        let s = env.space.sample_uniform(&mut rng);
        if env.is_state_valid(&s) {
            planner.insert_vertex(&s);
        }
    }
    planner.search_only(&mut UniformDensifier);
    let graph = planner.graph();
    let radius = graph.radius();
    let resolution = graph.resolution();
    let dist = dijkstra(n, |u, v| {
        let (a, b) = (graph.vertex(u as u32), graph.vertex(v as u32));
        let d = env.space.distance_coords(a, b);
        (d <= radius && env.is_edge_valid_coords(a, b, resolution)).then_some(d)
    });
    (planner.best_cost(), dist[1])
}
