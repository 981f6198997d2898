//! Obstacles, collision checking and the builtin benchmark worlds.
//!
//! Obstacles are closed sets: touching the boundary is a collision. The robot
//! is a disc (or hypersphere) of radius `robot_radius`; a point robot when
//! zero. SE(2) validity ignores the heading.
//!
//! Edges are checked at `2^k + 1` evenly spaced parameters, with `k` the
//! smallest integer such that the spacing along the metric is at most the
//! resolution. The power-of-two grid makes the checked point sets nested, so
//! halving the resolution never turns an invalid edge valid. The check is
//! evaluated per obstacle by computing the parameter interval inside the
//! (inflated) obstacle and asking whether a grid parameter falls into it,
//! which gives the same answer as testing every grid point.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::path::Path as FsPath;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::statespace::{euclidean, State, StateSpace, DEFAULT_ANGULAR_WEIGHT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Obstacle {
    /// A disc in the plane, a hypersphere in higher dimensions.
    Circle { center: Vec<f64>, radius: f64 },
    #[serde(rename = "box")]
    AxisAlignedBox { min: Vec<f64>, max: Vec<f64> },
}

impl Obstacle {
    pub fn circle(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid(format!("circle radius must be positive, got {radius}")));
        }
        Ok(Obstacle::Circle { center, radius })
    }

    pub fn aabb(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() || min.iter().zip(&max).any(|(a, b)| !(a < b)) {
            return Err(invalid("box corners must satisfy min < max on every axis"));
        }
        Ok(Obstacle::AxisAlignedBox { min, max })
    }

    fn dimension(&self) -> usize {
        match self {
            Obstacle::Circle { center, .. } => center.len(),
            Obstacle::AxisAlignedBox { min, .. } => min.len(),
        }
    }

    /// Whether a robot of radius `inflate` centered at `p` touches the obstacle.
    pub fn collides(&self, p: &[f64], inflate: f64) -> bool {
        match self {
            Obstacle::Circle { center, radius } => {
                let r = radius + inflate;
                let mut d2 = 0.0;
                for (a, b) in p.iter().zip(center) {
                    d2 += (a - b) * (a - b);
                }
                d2 <= r * r
            }
            Obstacle::AxisAlignedBox { min, max } => {
                if inflate == 0.0 {
                    p.iter().zip(min.iter().zip(max)).all(|(x, (lo, hi))| x >= lo && x <= hi)
                } else {
                    let mut d2 = 0.0;
                    for (x, (lo, hi)) in p.iter().zip(min.iter().zip(max)) {
                        let d = if x < lo {
                            lo - x
                        } else if x > hi {
                            x - hi
                        } else {
                            0.0
                        };
                        d2 += d * d;
                    }
                    d2 <= inflate * inflate
                }
            }
        }
    }

    /// Closed parameter interval of `a + t (b - a)`, `t` in `[0, 1]`, that
    /// collides. For an inflated box this is a superset (the inflated
    /// bounding box); callers confirm candidate points with [`collides`].
    fn segment_interval(&self, a: &[f64], b: &[f64], inflate: f64) -> Option<(f64, f64)> {
        match self {
            Obstacle::Circle { center, radius } => {
                let r = radius + inflate;
                let (mut qa, mut qb, mut qc) = (0.0, 0.0, 0.0);
                for ((ai, bi), ci) in a.iter().zip(b).zip(center) {
                    let d = bi - ai;
                    let m = ai - ci;
                    qa += d * d;
                    qb += 2.0 * d * m;
                    qc += m * m;
                }
                qc -= r * r;
                if qa == 0.0 {
                    return (qc <= 0.0).then_some((0.0, 1.0));
                }
                let disc = qb * qb - 4.0 * qa * qc;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let t0 = ((-qb - s) / (2.0 * qa)).max(0.0);
                let t1 = ((-qb + s) / (2.0 * qa)).min(1.0);
                (t0 <= t1).then_some((t0, t1))
            }
            Obstacle::AxisAlignedBox { min, max } => {
                let (mut t0, mut t1) = (0.0f64, 1.0f64);
                for ((ai, bi), (lo, hi)) in a.iter().zip(b).zip(min.iter().zip(max)) {
                    let lo = lo - inflate;
                    let hi = hi + inflate;
                    let d = bi - ai;
                    if d == 0.0 {
                        if *ai < lo || *ai > hi {
                            return None;
                        }
                        continue;
                    }
                    let (mut e0, mut e1) = ((lo - ai) / d, (hi - ai) / d);
                    if e0 > e1 {
                        std::mem::swap(&mut e0, &mut e1);
                    }
                    t0 = t0.max(e0);
                    t1 = t1.min(e1);
                    if t0 > t1 {
                        return None;
                    }
                }
                Some((t0, t1))
            }
        }
    }
}

/// Builtin worlds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Forest,
    TwoWall,
    Trap,
    SE2Maze,
    /// Cluttered `[0, 10]^n`, `2 <= n <= 7`.
    ClutterRn(usize),
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvKind::Forest => write!(f, "Forest"),
            EnvKind::TwoWall => write!(f, "TwoWall"),
            EnvKind::Trap => write!(f, "Trap"),
            EnvKind::SE2Maze => write!(f, "SE2Maze"),
            EnvKind::ClutterRn(n) => write!(f, "ClutterR{n}"),
        }
    }
}

impl FromStr for EnvKind {
    type Err = Error;

    /// Accepts the display names case-insensitively, plus `ClutterRn(7)`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "forest" => return Ok(EnvKind::Forest),
            "twowall" => return Ok(EnvKind::TwoWall),
            "trap" => return Ok(EnvKind::Trap),
            "se2maze" => return Ok(EnvKind::SE2Maze),
            _ => {}
        }
        let digits = lower
            .strip_prefix("clutterrn(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| lower.strip_prefix("clutterr"));
        if let Some(n) = digits.and_then(|d| d.parse::<usize>().ok()) {
            if (2..=7).contains(&n) {
                return Ok(EnvKind::ClutterRn(n));
            }
            return Err(invalid(format!("clutter dimension must be in 2..=7, got {n}")));
        }
        Err(invalid(format!("unknown environment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub name: String,
    pub space: StateSpace,
    pub obstacles: Vec<Obstacle>,
    pub start: State,
    pub target: State,
    pub robot_radius: f64,
}

/// Default edge-checking resolution: a thousandth of the space diagonal.
pub fn default_resolution(space: &StateSpace) -> f64 {
    0.01 * space.diagonal() / 10.0
}

impl Environment {
    /// Validates and assembles an environment.
    pub fn new(
        name: impl Into<String>,
        space: StateSpace,
        obstacles: Vec<Obstacle>,
        start: State,
        target: State,
        robot_radius: f64,
    ) -> Result<Self> {
        let tdim = space.translational_dimension();
        for (i, o) in obstacles.iter().enumerate() {
            if o.dimension() != tdim {
                return Err(invalid(format!(
                    "obstacle {i} has dimension {}, space has {tdim}",
                    o.dimension()
                )));
            }
            match o {
                Obstacle::Circle { radius, .. } if !(*radius > 0.0) => {
                    return Err(invalid(format!("obstacle {i}: radius must be positive")))
                }
                Obstacle::AxisAlignedBox { min, max } if min.iter().zip(max).any(|(a, b)| !(a < b)) => {
                    return Err(invalid(format!("obstacle {i}: min corner must be below max corner")))
                }
                _ => {}
            }
        }
        if !(robot_radius >= 0.0) {
            return Err(invalid("robot radius must be nonnegative"));
        }
        let start = space.state(start.into_coords())?;
        let target = space.state(target.into_coords())?;
        if start == target {
            return Err(invalid("start and target coincide"));
        }
        let env = Self {
            name: name.into(),
            space,
            obstacles,
            start,
            target,
            robot_radius,
        };
        if !env.is_state_valid(&env.start) {
            return Err(invalid("start state is in collision or out of bounds"));
        }
        if !env.is_state_valid(&env.target) {
            return Err(invalid("target state is in collision or out of bounds"));
        }
        Ok(env)
    }

    pub fn default_resolution(&self) -> f64 {
        default_resolution(&self.space)
    }

    pub fn is_state_valid(&self, x: &State) -> bool {
        self.is_valid_coords(x.coords())
    }

    /// Validity on raw coordinates (heading, if any, is ignored).
    pub fn is_valid_coords(&self, x: &[f64]) -> bool {
        let t = self.space.translational_dimension();
        let p = &x[..t];
        self.space.in_bounds(p) && !self.obstacles.iter().any(|o| o.collides(p, self.robot_radius))
    }

    /// Number of subdivisions used to check an edge of metric length `length`.
    pub fn edge_subdivisions(length: f64, resolution: f64) -> u64 {
        let ratio = length / resolution;
        if !(ratio > 1.0) {
            return 1;
        }
        let k = ratio.log2().ceil() as i32;
        let mut n = 1u64 << k.clamp(0, 62);
        // Guard against log2 rounding just below an exact power of two.
        while (n as f64) < ratio {
            n <<= 1;
        }
        n
    }

    pub fn is_edge_valid(&self, a: &State, b: &State, resolution: f64) -> bool {
        self.is_edge_valid_coords(a.coords(), b.coords(), resolution)
    }

    pub fn is_edge_valid_coords(&self, a: &[f64], b: &[f64], resolution: f64) -> bool {
        assert!(resolution > 0.0, "edge resolution must be positive");
        if !self.is_valid_coords(a) || !self.is_valid_coords(b) {
            return false;
        }
        let length = self.space.distance_coords(a, b);
        let n = Self::edge_subdivisions(length, resolution);
        let t = self.space.translational_dimension();
        let (pa, pb) = (&a[..t], &b[..t]);
        let nf = n as f64;
        let mut point = vec![0.0; t];
        for o in &self.obstacles {
            let Some((t0, t1)) = o.segment_interval(pa, pb, self.robot_radius) else {
                continue;
            };
            let k0 = (t0 * nf).ceil().max(0.0) as u64;
            let k1 = ((t1 * nf).floor() as u64).min(n);
            if k0 > k1 {
                continue;
            }
            let exact = matches!(o, Obstacle::Circle { .. }) || self.robot_radius == 0.0;
            if exact {
                return false;
            }
            for k in k0..=k1 {
                lerp(pa, pb, k as f64 / nf, &mut point);
                if o.collides(&point, self.robot_radius) {
                    return false;
                }
            }
        }
        true
    }

    /// Reference edge check that tests every grid point directly.
    pub fn is_edge_valid_dense(&self, a: &State, b: &State, resolution: f64) -> bool {
        let length = self.space.distance(a, b).unwrap_or(f64::INFINITY);
        let n = Self::edge_subdivisions(length, resolution);
        let mut buf = vec![0.0; self.space.dimension()];
        (0..=n).all(|k| {
            self.space.interpolate_into(a.coords(), b.coords(), k as f64 / n as f64, &mut buf);
            self.is_valid_coords(&buf)
        })
    }

    /// Serializes to the TOML environment schema.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&EnvironmentFile::from(self)).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: EnvironmentFile = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        file.into_environment()
    }

    pub fn save(&self, path: &FsPath) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Content hash of the geometry (hex SHA-256 of the serialized form).
    pub fn geometry_hash(&self) -> String {
        let text = self.to_toml().unwrap_or_default();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn lerp(a: &[f64], b: &[f64], t: f64, out: &mut [f64]) {
    if t >= 1.0 {
        out.copy_from_slice(b);
        return;
    }
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = x + t * (y - x);
    }
}

/// On-disk environment schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct EnvironmentFile {
    name: String,
    robot_radius: f64,
    start: Vec<f64>,
    target: Vec<f64>,
    space: SpaceFile,
    #[serde(default)]
    obstacles: Vec<Obstacle>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpaceFile {
    /// `real_vector` or `se2`.
    kind: String,
    lower: Vec<f64>,
    upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    angular_weight: Option<f64>,
}

impl From<&Environment> for EnvironmentFile {
    fn from(env: &Environment) -> Self {
        let se2 = env.space.is_se2();
        Self {
            name: env.name.clone(),
            robot_radius: env.robot_radius,
            start: env.start.coords().to_vec(),
            target: env.target.coords().to_vec(),
            space: SpaceFile {
                kind: if se2 { "se2" } else { "real_vector" }.to_string(),
                lower: env.space.lower_bounds().to_vec(),
                upper: env.space.upper_bounds().to_vec(),
                angular_weight: se2.then(|| env.space.angular_weight()),
            },
            obstacles: env.obstacles.clone(),
        }
    }
}

impl EnvironmentFile {
    fn into_environment(self) -> Result<Environment> {
        let space = match self.space.kind.as_str() {
            "real_vector" => StateSpace::real_vector(self.space.lower, self.space.upper)?,
            "se2" => {
                let (lo, hi) = (&self.space.lower, &self.space.upper);
                if lo.len() != 2 || hi.len() != 2 {
                    return Err(Error::Format("se2 bounds must have two entries".into()));
                }
                StateSpace::se2(
                    [lo[0], lo[1]],
                    [hi[0], hi[1]],
                    self.space.angular_weight.unwrap_or(DEFAULT_ANGULAR_WEIGHT),
                )?
            }
            other => return Err(Error::Format(format!("unknown space kind `{other}`"))),
        };
        let start = space.state(self.start)?;
        let target = space.state(self.target)?;
        Environment::new(self.name, space, self.obstacles, start, target, self.robot_radius)
    }
}

/// Builds a builtin world. Deterministic in `(kind, seed)`; seeds whose world
/// fails the feasibility check are redrawn as `seed + k * REDRAW_STRIDE`.
pub fn make_environment(kind: EnvKind, seed: u64) -> Result<Environment> {
    if let EnvKind::ClutterRn(n) = kind {
        if !(2..=7).contains(&n) {
            return Err(invalid(format!("clutter dimension must be in 2..=7, got {n}")));
        }
    }
    for attempt in 0..64u64 {
        let draw = seed.wrapping_add(attempt.wrapping_mul(REDRAW_STRIDE));
        let mut rng = ChaCha8Rng::seed_from_u64(draw ^ kind_salt(kind));
        let env = match kind {
            EnvKind::Forest => forest(&mut rng)?,
            EnvKind::TwoWall => two_wall(&mut rng)?,
            EnvKind::Trap => trap(&mut rng)?,
            EnvKind::SE2Maze => se2_maze(&mut rng)?,
            EnvKind::ClutterRn(n) => clutter(n, &mut rng)?,
        };
        if is_feasible(&env) {
            return Ok(env);
        }
        log::debug!("{kind} seed {draw} infeasible, redrawing");
    }
    Err(Error::Internal(format!("no feasible {kind} world near seed {seed}")))
}

pub const REDRAW_STRIDE: u64 = 1_000_003;

fn kind_salt(kind: EnvKind) -> u64 {
    match kind {
        EnvKind::Forest => 0x0F0F_0001,
        EnvKind::TwoWall => 0x0F0F_0002,
        EnvKind::Trap => 0x0F0F_0003,
        EnvKind::SE2Maze => 0x0F0F_0004,
        EnvKind::ClutterRn(n) => 0x0F0F_0100 + n as u64,
    }
}

fn unit_square() -> StateSpace {
    StateSpace::real_vector(vec![0.0, 0.0], vec![10.0, 10.0]).expect("static bounds")
}

/// Random circles avoiding the start, the target and any `keep_clear` boxes.
fn scatter_circles(
    rng: &mut ChaCha8Rng,
    count: usize,
    start: &[f64],
    target: &[f64],
    keep_clear: &[Obstacle],
) -> Vec<Obstacle> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let center = vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)];
        let radius = rng.random_range(0.2..0.5);
        let c = Obstacle::Circle { center: center.clone(), radius };
        if c.collides(start, 0.0) || c.collides(target, 0.0) {
            continue;
        }
        if keep_clear.iter().any(|k| k.collides(&center, radius)) {
            continue;
        }
        out.push(c);
    }
    out
}

fn forest(rng: &mut ChaCha8Rng) -> Result<Environment> {
    let space = unit_square();
    let start = space.state(vec![0.5, 0.5])?;
    let target = space.state(vec![9.5, 9.5])?;
    let obstacles = scatter_circles(rng, 40, start.coords(), target.coords(), &[]);
    Environment::new("Forest", space, obstacles, start, target, 0.0)
}

const WALL_THICKNESS: f64 = 0.4;
const GAP: f64 = 0.4;

/// A wall spanning `y` in `[0, 10]` at `x` with a gap starting at `gap_lo`,
/// plus the clearance box kept free of forest obstacles around the gap.
fn wall_with_gap(x: f64, gap_lo: f64, y_max: f64) -> Result<(Vec<Obstacle>, Obstacle)> {
    let (x0, x1) = (x - WALL_THICKNESS / 2.0, x + WALL_THICKNESS / 2.0);
    let walls = vec![
        Obstacle::aabb(vec![x0, 0.0], vec![x1, gap_lo])?,
        Obstacle::aabb(vec![x0, gap_lo + GAP], vec![x1, y_max])?,
    ];
    let clear = Obstacle::aabb(vec![x0 - 0.8, gap_lo - 0.2], vec![x1 + 0.8, gap_lo + GAP + 0.2])?;
    Ok((walls, clear))
}

/// Gaps lie within this distance of where the diagonal crosses each wall.
const TWO_WALL_GAP_REACH: f64 = 2.5;

fn two_wall(rng: &mut ChaCha8Rng) -> Result<Environment> {
    let space = unit_square();
    let start = space.state(vec![0.5, 0.5])?;
    let target = space.state(vec![9.5, 9.5])?;
    let mut obstacles = Vec::new();
    let mut clear = Vec::new();
    for x in [3.3, 6.6] {
        // Keep the gap off the start-target diagonal, which crosses the wall at y = x.
        let gap_lo = loop {
            let g = rng.random_range((x - TWO_WALL_GAP_REACH)..(x + TWO_WALL_GAP_REACH - GAP));
            if g + GAP < x - 0.5 || g > x + 0.5 {
                break g;
            }
        };
        let (walls, keep) = wall_with_gap(x, gap_lo, 10.0)?;
        obstacles.extend(walls);
        clear.push(keep);
    }
    let circles = scatter_circles(rng, 20, start.coords(), target.coords(), &clear);
    obstacles.extend(circles);
    Environment::new("TwoWall", space, obstacles, start, target, 0.0)
}

fn trap(rng: &mut ChaCha8Rng) -> Result<Environment> {
    let space = unit_square();
    let start = space.state(vec![0.5, 0.5])?;
    let target = space.state(vec![9.5, 0.5])?;
    // A thick wall left of the target and a roof over it, together with the
    // bounds forming a C that opens upwards on the far side. The only short
    // way in is a bent corridor through the wall: an entry slot, a vertical
    // shaft, and an exit slot one shaft-height up. No straight segment
    // crosses it.
    let (x0, x1) = (TRAP_WALL_X, TRAP_WALL_X + TRAP_WALL_THICKNESS);
    let w = TRAP_GAP;
    let (s0, s1) = (x0 + 0.7, x0 + 0.7 + w);
    let g = rng.random_range(1.0..2.5);
    let mut obstacles = vec![
        Obstacle::aabb(vec![x0, 0.0], vec![x1, g])?,
        Obstacle::aabb(vec![x0, g + w], vec![s0, TRAP_ROOF_TOP])?,
        Obstacle::aabb(vec![s1, g], vec![x1, g + 2.0 * w])?,
        Obstacle::aabb(vec![s0, g + 3.0 * w], vec![x1, TRAP_ROOF_TOP])?,
        Obstacle::aabb(vec![x0, TRAP_ROOF_TOP - 1.0], vec![TRAP_ROOF_END, TRAP_ROOF_TOP])?,
    ];
    let keep = Obstacle::aabb(vec![x0 - 0.8, g - 0.3], vec![x1 + 0.8, g + 3.0 * w + 0.3])?;
    obstacles.extend(scatter_circles(rng, 20, start.coords(), target.coords(), &[keep]));
    Environment::new("Trap", space, obstacles, start, target, 0.0)
}

const TRAP_WALL_X: f64 = 5.5;
const TRAP_WALL_THICKNESS: f64 = 2.0;
const TRAP_ROOF_TOP: f64 = 6.0;
const TRAP_ROOF_END: f64 = 8.5;
const TRAP_GAP: f64 = 0.4;

const MAZE_CELLS: usize = 4;
const MAZE_PITCH: f64 = 2.5;
const CORRIDOR: f64 = 1.2;

fn se2_maze(rng: &mut ChaCha8Rng) -> Result<Environment> {
    let space = StateSpace::se2([0.0, 0.0], [10.0, 10.0], DEFAULT_ANGULAR_WEIGHT)?;
    let n = MAZE_CELLS;
    let half = (MAZE_PITCH - CORRIDOR) / 2.0;
    // Randomized depth-first spanning tree over the cell grid.
    let mut open_east = vec![vec![false; n]; n];
    let mut open_north = vec![vec![false; n]; n];
    let mut visited = vec![vec![false; n]; n];
    let mut stack = vec![(0usize, 0usize)];
    visited[0][0] = true;
    while let Some(&(i, j)) = stack.last() {
        let mut options = Vec::new();
        if i + 1 < n && !visited[i + 1][j] {
            options.push((i + 1, j));
        }
        if i > 0 && !visited[i - 1][j] {
            options.push((i - 1, j));
        }
        if j + 1 < n && !visited[i][j + 1] {
            options.push((i, j + 1));
        }
        if j > 0 && !visited[i][j - 1] {
            options.push((i, j - 1));
        }
        if options.is_empty() {
            stack.pop();
            continue;
        }
        let (ni, nj) = options[rng.random_range(0..options.len())];
        if ni != i {
            open_east[i.min(ni)][j] = true;
        } else {
            open_north[i][j.min(nj)] = true;
        }
        visited[ni][nj] = true;
        stack.push((ni, nj));
    }
    let mut obstacles = Vec::new();
    let line = |k: usize| k as f64 * MAZE_PITCH;
    // Posts at every lattice corner.
    for a in 0..=n {
        for b in 0..=n {
            obstacles.push(Obstacle::aabb(
                vec![line(a) - half, line(b) - half],
                vec![line(a) + half, line(b) + half],
            )?);
        }
    }
    // Vertical walls between horizontally adjacent cells (and the border).
    for a in 0..=n {
        for j in 0..n {
            let open = a > 0 && a < n && open_east[a - 1][j];
            if !open {
                obstacles.push(Obstacle::aabb(
                    vec![line(a) - half, line(j) + half],
                    vec![line(a) + half, line(j + 1) - half],
                )?);
            }
        }
    }
    for b in 0..=n {
        for i in 0..n {
            let open = b > 0 && b < n && open_north[i][b - 1];
            if !open {
                obstacles.push(Obstacle::aabb(
                    vec![line(i) + half, line(b) - half],
                    vec![line(i + 1) - half, line(b) + half],
                )?);
            }
        }
    }
    let centre = |k: usize| (k as f64 + 0.5) * MAZE_PITCH;
    let start = space.state(vec![centre(0), centre(0), 0.0])?;
    let target = space.state(vec![centre(n - 1), centre(n - 1), 0.0])?;
    Environment::new("SE2Maze", space, obstacles, start, target, 0.25)
}

/// Per-axis offset of clutter centers from the diagonal.
const CLUTTER_SPREAD: f64 = 0.75;

fn clutter(n: usize, rng: &mut ChaCha8Rng) -> Result<Environment> {
    let space = StateSpace::real_vector(vec![0.0; n], vec![10.0; n])?;
    let start = space.state(vec![0.5; n])?;
    let target = space.state(vec![9.5; n])?;
    // Centers scatter around the start-target diagonal so the clutter sits
    // where short paths run.
    let mut obstacles = Vec::with_capacity(30);
    while obstacles.len() < 30 {
        let t = rng.random_range(0.15..0.85);
        let center: Vec<f64> = (0..n)
            .map(|_| (0.5 + 9.0 * t + rng.random_range(-CLUTTER_SPREAD..CLUTTER_SPREAD)).clamp(0.0, 10.0))
            .collect();
        let radius = rng.random_range(0.5..1.5);
        let o = Obstacle::Circle { center, radius };
        if o.collides(start.coords(), 0.0) || o.collides(target.coords(), 0.0) {
            continue;
        }
        obstacles.push(o);
    }
    Environment::new(format!("ClutterR{n}"), space, obstacles, start, target, 0.0)
}

/// Feasibility oracle: graph search over a lattice covering the translational
/// bounds, every lattice edge collision-checked. Planar worlds use spacing
/// 0.05; higher dimensions use the finest lattice with at most about two
/// million nodes. Nodes are visited best-first towards the goal, which only
/// changes the visiting order, not the reachability answer. Sound but not
/// complete.
pub fn is_feasible(env: &Environment) -> bool {
    let res = env.default_resolution();
    if env.is_edge_valid(&env.start, &env.target, res) {
        return true;
    }
    let space = &env.space;
    let dim = space.translational_dimension();
    let lo = space.lower_bounds();
    let hi = space.upper_bounds();
    let per_axis: Vec<usize> = if dim == 2 {
        lo.iter().zip(hi).map(|(l, h)| ((h - l) / 0.05).round() as usize + 1).collect()
    } else {
        let m = (2.0e6f64).powf(1.0 / dim as f64).floor().max(3.0) as usize;
        vec![m; dim]
    };
    let total: usize = per_axis.iter().product();
    let coord = |idx: usize, out: &mut Vec<f64>| {
        out.clear();
        let mut rem = idx;
        for a in 0..dim {
            let k = rem % per_axis[a];
            rem /= per_axis[a];
            let step = (hi[a] - lo[a]) / (per_axis[a] - 1) as f64;
            out.push(lo[a] + k as f64 * step);
        }
    };
    let with_heading = |p: &[f64], like: &State| {
        let mut v = p.to_vec();
        if space.is_se2() {
            v.push(like.coords()[2]);
        }
        v
    };
    let nearest = |x: &[f64]| {
        let mut idx = 0;
        let mut mul = 1;
        for a in 0..dim {
            let step = (hi[a] - lo[a]) / (per_axis[a] - 1) as f64;
            let k = (((x[a] - lo[a]) / step).round() as usize).min(per_axis[a] - 1);
            idx += k * mul;
            mul *= per_axis[a];
        }
        idx
    };
    let start_node = nearest(env.start.coords());
    let goal_node = nearest(env.target.coords());
    let mut buf = Vec::with_capacity(dim);
    coord(start_node, &mut buf);
    let s_node = with_heading(&buf, &env.start);
    if !env.is_edge_valid_coords(env.start.coords(), &s_node, res) {
        return false;
    }
    coord(goal_node, &mut buf);
    let g_node = with_heading(&buf, &env.target);
    if !env.is_edge_valid_coords(&g_node, env.target.coords(), res) {
        return false;
    }
    let goal_point = g_node[..dim].to_vec();
    let mut seen = vec![false; total];
    let mut queue = BinaryHeap::from([Reverse((0u64, start_node))]);
    seen[start_node] = true;
    let mut here = Vec::with_capacity(dim);
    let mut there = Vec::with_capacity(dim);
    while let Some(Reverse((_, u))) = queue.pop() {
        if u == goal_node {
            return true;
        }
        coord(u, &mut here);
        let mut mul = 1;
        for a in 0..dim {
            let k = (u / mul) % per_axis[a];
            for (ok, v) in [(k > 0, u.wrapping_sub(mul)), (k + 1 < per_axis[a], u + mul)] {
                if ok && !seen[v] {
                    coord(v, &mut there);
                    let pa = with_heading(&here, &env.start);
                    let pb = with_heading(&there, &env.start);
                    if env.is_edge_valid_coords(&pa, &pb, res) {
                        seen[v] = true;
                        // Nonnegative floats order like their bit patterns.
                        let key = euclidean(&there, &goal_point).to_bits();
                        queue.push(Reverse((key, v)));
                    }
                }
            }
            mul *= per_axis[a];
        }
    }
    false
}

/// Euclidean length of the straight start-target segment in translation.
pub fn straight_line_distance(env: &Environment) -> f64 {
    let t = env.space.translational_dimension();
    euclidean(&env.start.coords()[..t], &env.target.coords()[..t])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn empty_r2() -> Environment {
        let space = unit_square();
        let s = space.state(vec![0.5, 0.5]).unwrap();
        let t = space.state(vec![9.5, 9.5]).unwrap();
        Environment::new("empty", space, vec![], s, t, 0.0).unwrap()
    }

    fn with_obstacles(obstacles: Vec<Obstacle>) -> Environment {
        let space = unit_square();
        let s = space.state(vec![0.1, 0.1]).unwrap();
        let t = space.state(vec![9.9, 0.1]).unwrap();
        Environment::new("test", space, obstacles, s, t, 0.0).unwrap()
    }

    #[test]
    fn state_validity_examples() {
        let env = with_obstacles(vec![Obstacle::circle(vec![5.0, 5.0], 1.0).unwrap()]);
        let sp = &env.space;
        assert!(!env.is_state_valid(&sp.state(vec![5.0, 5.0]).unwrap()));
        assert!(env.is_state_valid(&sp.state(vec![0.0, 0.0]).unwrap()));
        assert!(!env.is_state_valid(&sp.state(vec![6.0, 5.0]).unwrap()));
        assert!(!env.is_state_valid(&sp.state(vec![10.5, 5.0]).unwrap()));
    }

    #[test]
    fn edge_validity_examples() {
        let env = with_obstacles(vec![
            Obstacle::circle(vec![5.0, 5.0], 1.0).unwrap(),
            Obstacle::aabb(vec![4.9, 7.0], vec![5.1, 10.0]).unwrap(),
        ]);
        let sp = &env.space;
        let a = sp.state(vec![4.8, 5.0]).unwrap();
        let b = sp.state(vec![5.2, 5.1]).unwrap();
        assert!(!env.is_edge_valid(&a, &b, 0.01));

        let empty = empty_r2();
        let a = sp.state(vec![0.0, 0.0]).unwrap();
        let b = sp.state(vec![10.0, 10.0]).unwrap();
        assert!(empty.is_edge_valid(&a, &b, 0.01));

        let wall = with_obstacles(vec![Obstacle::aabb(vec![4.9, 0.0], vec![5.1, 10.0]).unwrap()]);
        let a = sp.state(vec![0.0, 5.0]).unwrap();
        let b = sp.state(vec![10.0, 5.0]).unwrap();
        assert!(!wall.is_edge_valid(&a, &b, 0.01));
    }

    #[test]
    fn coarse_resolution_can_skip_thin_obstacles() {
        let wall = with_obstacles(vec![Obstacle::aabb(vec![4.9, 0.0], vec![5.1, 10.0]).unwrap()]);
        let sp = &wall.space;
        let a = sp.state(vec![0.0, 5.0]).unwrap();
        let b = sp.state(vec![9.0, 5.0]).unwrap();
        // Four subdivisions check x = 0, 2.25, 4.5, 6.75, 9.
        assert!(wall.is_edge_valid(&a, &b, 2.5));
        assert!(wall.is_edge_valid_dense(&a, &b, 2.5));
        assert!(!wall.is_edge_valid(&a, &b, 0.01));
    }

    #[test]
    fn subdivisions_are_powers_of_two() {
        assert_eq!(Environment::edge_subdivisions(0.0, 0.1), 1);
        assert_eq!(Environment::edge_subdivisions(0.1, 0.1), 1);
        assert_eq!(Environment::edge_subdivisions(0.3, 0.1), 4);
        assert_eq!(Environment::edge_subdivisions(0.4, 0.1), 4);
        assert_eq!(Environment::edge_subdivisions(1.0, 0.01), 128);
    }

    fn random_world(rng: &mut ChaCha8Rng, robot_radius: f64) -> Environment {
        let mut obstacles = Vec::new();
        for _ in 0..15 {
            let c = vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)];
            if rng.random_bool(0.5) {
                obstacles.push(Obstacle::circle(c, rng.random_range(0.1..1.0)).unwrap());
            } else {
                let w = rng.random_range(0.05..1.5);
                let h = rng.random_range(0.05..1.5);
                obstacles.push(Obstacle::aabb(c.clone(), vec![c[0] + w, c[1] + h]).unwrap());
            }
        }
        let space = StateSpace::se2([0.0, 0.0], [10.0, 10.0], 0.3).unwrap();
        Environment {
            name: "random".into(),
            start: space.state(vec![0.0, 0.0, 0.0]).unwrap(),
            target: space.state(vec![10.0, 10.0, 0.0]).unwrap(),
            space,
            obstacles,
            robot_radius,
        }
    }

    #[test]
    fn interval_check_matches_dense_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut invalid_seen = 0;
        for w in 0..20 {
            let env = random_world(&mut rng, if w % 2 == 0 { 0.0 } else { 0.25 });
            for _ in 0..500 {
                let a = env.space.sample_uniform(&mut rng);
                let b = if rng.random_bool(0.5) {
                    env.space.sample_uniform(&mut rng)
                } else {
                    let mut c = a.coords().to_vec();
                    c[0] += rng.random_range(-1.0..1.0);
                    c[1] += rng.random_range(-1.0..1.0);
                    env.space.state(c).unwrap()
                };
                let res = rng.random_range(0.005..0.5);
                let fast = env.is_edge_valid(&a, &b, res);
                assert_eq!(fast, env.is_edge_valid_dense(&a, &b, res));
                invalid_seen += usize::from(!fast);
            }
        }
        assert!(invalid_seen > 1000);
    }

    #[test]
    fn edge_check_is_symmetric_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let env = make_environment(EnvKind::Forest, 3).unwrap();
        for _ in 0..10_000 {
            let a = env.space.sample_uniform(&mut rng);
            let b = env.space.sample_uniform(&mut rng);
            assert_eq!(env.is_edge_valid(&a, &b, 0.01), env.is_edge_valid(&b, &a, 0.01));
        }
        let thin = random_world(&mut rng, 0.0);
        for _ in 0..1000 {
            let a = thin.space.sample_uniform(&mut rng);
            let b = thin.space.sample_uniform(&mut rng);
            let res = rng.random_range(0.05..2.0);
            if !thin.is_edge_valid(&a, &b, res) {
                assert!(!thin.is_edge_valid(&a, &b, res / 2.0));
            }
        }
    }

    #[test]
    fn builtin_worlds_are_deterministic_and_valid() {
        let kinds = [
            EnvKind::Forest,
            EnvKind::TwoWall,
            EnvKind::Trap,
            EnvKind::SE2Maze,
            EnvKind::ClutterRn(2),
            EnvKind::ClutterRn(7),
        ];
        for kind in kinds {
            for seed in [0u64, 7, 12] {
                let env = make_environment(kind, seed).unwrap();
                assert_eq!(env, make_environment(kind, seed).unwrap());
                assert!(env.is_state_valid(&env.start));
                assert!(env.is_state_valid(&env.target));
                assert!(is_feasible(&env), "{kind} {seed}");
            }
        }
        assert!(make_environment(EnvKind::ClutterRn(8), 0).is_err());
        assert!(make_environment(EnvKind::ClutterRn(1), 0).is_err());
    }

    #[test]
    fn walls_block_the_straight_line() {
        for seed in 0..30 {
            for kind in [EnvKind::TwoWall, EnvKind::Trap] {
                let env = make_environment(kind, seed).unwrap();
                assert!(!env.is_edge_valid(&env.start, &env.target, env.default_resolution()));
            }
        }
    }

    #[test]
    fn maze_is_se2_with_disc_robot() {
        let env = make_environment(EnvKind::SE2Maze, 4).unwrap();
        assert!(env.space.is_se2());
        assert_eq!(env.robot_radius, 0.25);
        let text = env.to_toml().unwrap();
        assert!(text.contains("kind = \"se2\""));
    }

    #[test]
    fn file_round_trip() {
        for kind in [EnvKind::Forest, EnvKind::SE2Maze, EnvKind::ClutterRn(7)] {
            let env = make_environment(kind, 7).unwrap();
            let back = Environment::from_toml(&env.to_toml().unwrap()).unwrap();
            assert_eq!(env, back);
            assert_eq!(env.geometry_hash(), back.geometry_hash());
        }
    }

    #[test]
    fn malformed_files_are_rejected() {
        let env = make_environment(EnvKind::Forest, 1).unwrap();
        let text = env.to_toml().unwrap();
        assert!(Environment::from_toml(&text.replace("real_vector", "torus")).is_err());
        assert!(Environment::from_toml("name = 3").is_err());
        // Start inside an obstacle.
        let bad = text.replacen("start = [0.5, 0.5]", "start = [20.0, 0.5]", 1);
        assert!(Environment::from_toml(&bad).is_err());
    }

    #[test]
    fn kind_names_parse() {
        assert_eq!("Forest".parse::<EnvKind>().unwrap(), EnvKind::Forest);
        assert_eq!("trap".parse::<EnvKind>().unwrap(), EnvKind::Trap);
        assert_eq!("ClutterRn(7)".parse::<EnvKind>().unwrap(), EnvKind::ClutterRn(7));
        assert_eq!("ClutterR7".parse::<EnvKind>().unwrap(), EnvKind::ClutterRn(7));
        assert!("Foo".parse::<EnvKind>().is_err());
        assert!("ClutterR9".parse::<EnvKind>().is_err());
    }
}
