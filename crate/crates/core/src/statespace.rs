//! Configuration spaces: Euclidean `R^n` and the planar rigid-body space SE(2).
//!
//! A [`State`] is a plain coordinate vector. For SE(2) the third coordinate is a
//! heading in radians, wrapped into `[-pi, pi)` when the state is built through
//! [`StateSpace::state`]. Cost is path length under [`StateSpace::distance`];
//! the admissible heuristic only looks at translational coordinates.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Default weight on angular distance in SE(2).
pub const DEFAULT_ANGULAR_WEIGHT: f64 = 0.3;

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut wrapped = theta - two_pi * ((theta + PI) / two_pi).floor();
    if wrapped >= PI {
        wrapped -= two_pi;
    }
    if wrapped < -PI {
        wrapped = -PI;
    }
    wrapped
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    coords: Vec<f64>,
}

impl State {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Wraps coordinates that are already known to be normalized.
    pub(crate) fn from_raw(coords: Vec<f64>) -> State {
        State { coords }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpaceKind {
    RealVector(usize),
    SE2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    kind: SpaceKind,
    lower: Vec<f64>,
    upper: Vec<f64>,
    angular_weight: f64,
}

impl StateSpace {
    /// An axis-aligned box in `R^n`.
    pub fn real_vector(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = lower.len();
        if n < 2 {
            return Err(invalid(format!("dimension must be at least 2, got {n}")));
        }
        Self::check_bounds(&lower, &upper)?;
        Ok(Self {
            kind: SpaceKind::RealVector(n),
            lower,
            upper,
            angular_weight: 0.0,
        })
    }

    /// SE(2) over a planar box; the heading is unbounded and wrapped.
    pub fn se2(lower: [f64; 2], upper: [f64; 2], angular_weight: f64) -> Result<Self> {
        if !(angular_weight >= 0.0) || !angular_weight.is_finite() {
            return Err(invalid(format!(
                "angular weight must be finite and nonnegative, got {angular_weight}"
            )));
        }
        Self::check_bounds(&lower, &upper)?;
        Ok(Self {
            kind: SpaceKind::SE2,
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            angular_weight,
        })
    }

    fn check_bounds(lower: &[f64], upper: &[f64]) -> Result<()> {
        if lower.len() != upper.len() {
            return Err(invalid("lower and upper bounds differ in length"));
        }
        for (i, (lo, hi)) in lower.iter().zip(upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(invalid(format!("bounds on axis {i} are not ordered: {lo} >= {hi}")));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn is_se2(&self) -> bool {
        self.kind == SpaceKind::SE2
    }

    /// Number of coordinates in a state.
    pub fn dimension(&self) -> usize {
        match self.kind {
            SpaceKind::RealVector(n) => n,
            SpaceKind::SE2 => 3,
        }
    }

    /// Number of translational coordinates (the ones the heuristic sees).
    pub fn translational_dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }

    pub fn angular_weight(&self) -> f64 {
        self.angular_weight
    }

    /// Builds a state, checking its length and wrapping the SE(2) heading.
    pub fn state(&self, coords: Vec<f64>) -> Result<State> {
        if coords.len() != self.dimension() {
            return Err(invalid(format!(
                "state has {} coordinates, space dimension is {}",
                coords.len(),
                self.dimension()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("state coordinates must be finite"));
        }
        Ok(self.wrap(coords))
    }

    pub(crate) fn wrap(&self, mut coords: Vec<f64>) -> State {
        if self.is_se2() {
            coords[2] = wrap_angle(coords[2]);
        }
        State { coords }
    }

    fn check_pair(&self, a: &State, b: &State) -> Result<()> {
        let n = self.dimension();
        if a.len() != n || b.len() != n {
            return Err(invalid(format!(
                "dimension mismatch: space {n}, states {} and {}",
                a.len(),
                b.len()
            )));
        }
        Ok(())
    }

    pub fn distance(&self, a: &State, b: &State) -> Result<f64> {
        self.check_pair(a, b)?;
        Ok(self.distance_coords(&a.coords, &b.coords))
    }

    pub fn heuristic(&self, a: &State, b: &State) -> Result<f64> {
        self.check_pair(a, b)?;
        Ok(self.heuristic_coords(&a.coords, &b.coords))
    }

    /// Metric on raw coordinates; lengths are the caller's responsibility.
    #[inline]
    pub fn distance_coords(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.kind {
            SpaceKind::RealVector(_) => euclidean(a, b),
            SpaceKind::SE2 => {
                let dx = a[0] - b[0];
                let dy = a[1] - b[1];
                (dx * dx + dy * dy).sqrt() + self.angular_weight * wrap_angle(a[2] - b[2]).abs()
            }
        }
    }

    #[inline]
    pub fn heuristic_coords(&self, a: &[f64], b: &[f64]) -> f64 {
        let t = self.translational_dimension();
        euclidean(&a[..t], &b[..t])
    }

    pub fn interpolate(&self, a: &State, b: &State, t: f64) -> Result<State> {
        self.check_pair(a, b)?;
        if !(0.0..=1.0).contains(&t) {
            return Err(invalid(format!("interpolation parameter {t} outside [0, 1]")));
        }
        let mut out = vec![0.0; self.dimension()];
        self.interpolate_into(&a.coords, &b.coords, t, &mut out);
        Ok(State { coords: out })
    }

    /// Straight-line interpolation on translation, shortest arc on heading.
    /// `t = 0` and `t = 1` reproduce the endpoints exactly.
    pub fn interpolate_into(&self, a: &[f64], b: &[f64], t: f64, out: &mut [f64]) {
        if t <= 0.0 {
            out.copy_from_slice(a);
            return;
        }
        if t >= 1.0 {
            out.copy_from_slice(b);
            return;
        }
        let tdim = self.translational_dimension();
        for i in 0..tdim {
            out[i] = a[i] + t * (b[i] - a[i]);
        }
        if self.is_se2() {
            let delta = wrap_angle(b[2] - a[2]);
            out[2] = wrap_angle(a[2] + t * delta);
        }
    }

    /// Whether translational coordinates lie inside the closed bounds.
    pub fn in_bounds(&self, coords: &[f64]) -> bool {
        coords
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(c, (lo, hi))| *c >= *lo && *c <= *hi)
    }

    /// Lebesgue measure of the space (heading contributes a factor of 2 pi).
    pub fn measure(&self) -> f64 {
        let area: f64 = self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product();
        if self.is_se2() {
            area * 2.0 * PI
        } else {
            area
        }
    }

    /// Length of the diagonal of the translational bounding box.
    pub fn diagonal(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        let mut coords: Vec<f64> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| rng.random_range(*l..*u))
            .collect();
        if self.is_se2() {
            coords.push(rng.random_range(-PI..PI));
        }
        State { coords }
    }

    /// Heading drawn uniformly from `[-pi, pi)`, used when only translation is
    /// sampled from a shaped set.
    pub(crate) fn complete_with_heading<R: Rng + ?Sized>(
        &self,
        mut translation: Vec<f64>,
        rng: &mut R,
    ) -> State {
        if self.is_se2() {
            translation.push(rng.random_range(-PI..PI));
        }
        State { coords: translation }
    }
}

#[inline]
pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub states: Vec<State>,
    pub cost: f64,
}

impl Path {
    pub fn from_states(space: &StateSpace, states: Vec<State>) -> Result<Self> {
        let mut cost = 0.0;
        for w in states.windows(2) {
            cost += space.distance(&w[0], &w[1])?;
        }
        Ok(Self { states, cost })
    }
}
