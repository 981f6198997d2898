//! Direct samplers for prolate hyperspheroids and unions of two of them,
//! plus the Halton sequence used to place beacons.
//!
//! A prolate hyperspheroid `E(a, b, d)` is the set of points whose summed
//! distances to the foci `a` and `b` do not exceed the transverse diameter
//! `d`. Sampling is analytic: a uniform point in the unit ball is stretched
//! by the radii, rotated onto the focal axis and moved to the center.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::statespace::{euclidean, State, StateSpace};

/// Attempts allowed per accepted union sample before giving up.
pub const UNION_RETRY_CAP: usize = 10_000;

/// Relative slack under which a diameter just below the focal distance is
/// treated as degenerate rather than malformed.
const DIAMETER_SLACK: f64 = 1e-9;

/// Measure of the unit ball in `d` dimensions.
pub fn unit_ball_measure(d: usize) -> f64 {
    let half = d as f64 / 2.0;
    PI.powf(half) / libm::tgamma(half + 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProlateHyperspheroid {
    focus_a: Vec<f64>,
    focus_b: Vec<f64>,
    diameter: f64,
    focal_distance: f64,
    center: Vec<f64>,
    /// Column-major `n x n`.
    rotation: Vec<f64>,
    radii: Vec<f64>,
}

impl ProlateHyperspheroid {
    pub fn new(focus_a: Vec<f64>, focus_b: Vec<f64>, diameter: f64) -> Result<Self> {
        let n = focus_a.len();
        if n != focus_b.len() {
            return Err(invalid("foci differ in dimension"));
        }
        if n < 2 {
            return Err(invalid(format!("hyperspheroid dimension must be at least 2, got {n}")));
        }
        if !diameter.is_finite() {
            return Err(invalid(format!("transverse diameter must be finite, got {diameter}")));
        }
        let focal_distance = euclidean(&focus_a, &focus_b);
        let mut diameter = diameter;
        if diameter < focal_distance {
            if focal_distance - diameter <= DIAMETER_SLACK * focal_distance.max(1.0) {
                diameter = focal_distance;
            } else {
                return Err(invalid(format!(
                    "transverse diameter {diameter} is below focal distance {focal_distance}"
                )));
            }
        }
        let center = focus_a.iter().zip(&focus_b).map(|(a, b)| 0.5 * (a + b)).collect();
        let rotation = rotation_to_world(&focus_a, &focus_b);
        let conjugate = (diameter * diameter - focal_distance * focal_distance).max(0.0).sqrt() / 2.0;
        let mut radii = vec![conjugate; n];
        radii[0] = diameter / 2.0;
        Ok(Self {
            focus_a,
            focus_b,
            diameter,
            focal_distance,
            center,
            rotation,
            radii,
        })
    }

    pub fn dimension(&self) -> usize {
        self.center.len()
    }

    pub fn focus_a(&self) -> &[f64] {
        &self.focus_a
    }

    pub fn focus_b(&self) -> &[f64] {
        &self.focus_b
    }

    pub fn transverse_diameter(&self) -> f64 {
        self.diameter
    }

    pub fn focal_distance(&self) -> f64 {
        self.focal_distance
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Column `j` of the rotation matrix.
    pub fn rotation_column(&self, j: usize) -> &[f64] {
        let n = self.dimension();
        &self.rotation[j * n..(j + 1) * n]
    }

    /// Zero-measure: the set collapses onto the focal segment.
    pub fn is_degenerate(&self) -> bool {
        self.diameter <= self.focal_distance
    }

    /// The defining inequality, evaluated exactly.
    pub fn contains(&self, x: &[f64]) -> bool {
        euclidean(&self.focus_a, x) + euclidean(x, &self.focus_b) <= self.diameter
    }

    /// Lebesgue measure `K a (a^2 - f^2)^((n-1)/2)` with
    /// `K = pi^(n/2) / (2^n Gamma(n/2 + 1))`.
    pub fn measure(&self) -> f64 {
        if self.is_degenerate() {
            return 0.0;
        }
        let n = self.dimension();
        let a = self.diameter;
        let f = self.focal_distance;
        let k = unit_ball_measure(n) / 2f64.powi(n as i32);
        k * a * (a * a - f * f).powf((n as f64 - 1.0) / 2.0)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dimension();
        let mut lo = self.center.clone();
        let mut hi = self.center.clone();
        for i in 0..n {
            let extent: f64 = (0..n).map(|j| (self.rotation[j * n + i] * self.radii[j]).abs()).sum();
            lo[i] -= extent;
            hi[i] += extent;
        }
        (lo, hi)
    }

    /// Uniform sample. A degenerate set yields a uniform point on the focal
    /// segment.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        if self.is_degenerate() {
            let t: f64 = rng.random();
            return self
                .focus_a
                .iter()
                .zip(&self.focus_b)
                .map(|(a, b)| a + t * (b - a))
                .collect();
        }
        let n = self.dimension();
        let ball = sample_unit_ball(n, rng);
        let mut out = self.center.clone();
        for (j, (&u, &r)) in ball.iter().zip(&self.radii).enumerate() {
            let s = u * r;
            let col = &self.rotation[j * n..(j + 1) * n];
            for (o, c) in out.iter_mut().zip(col) {
                *o += c * s;
            }
        }
        out
    }
}

/// Uniform point in the closed unit `n`-ball: Gaussian direction scaled by `U^(1/n)`.
pub fn sample_unit_ball<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        let scale = u.powf(1.0 / n as f64) / norm;
        return v.into_iter().map(|x| x * scale).collect();
    }
}

/// Orthonormal basis whose first column is the unit vector from `focus_a` to
/// `focus_b`. The remaining columns come from Gram-Schmidt over the unit axes
/// in order. Coincident foci give the identity. Column-major `n x n`.
pub fn rotation_to_world(focus_a: &[f64], focus_b: &[f64]) -> Vec<f64> {
    let n = focus_a.len();
    let mut identity = vec![0.0; n * n];
    for i in 0..n {
        identity[i * n + i] = 1.0;
    }
    let dir: Vec<f64> = focus_b.iter().zip(focus_a).map(|(b, a)| b - a).collect();
    let len = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    if len == 0.0 || !len.is_finite() {
        return identity;
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    basis.push(dir.iter().map(|x| x / len).collect());
    for axis in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = identity[axis * n..(axis + 1) * n].to_vec();
        // Two passes keep the result orthogonal to machine precision.
        for _ in 0..2 {
            for q in &basis {
                let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= dot * qi;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis.concat()
}

/// The two sets a beacon induces: `E(start, beacon, g)` and
/// `E(beacon, target, c - g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSubsets {
    pub start_beacon: ProlateHyperspheroid,
    pub beacon_target: ProlateHyperspheroid,
}

impl LocalSubsets {
    /// Coordinates are translational. `cost_to_come` is `g(beacon)` and
    /// `best_cost` the current solution cost.
    pub fn new(
        start: &[f64],
        beacon: &[f64],
        target: &[f64],
        cost_to_come: f64,
        best_cost: f64,
    ) -> Result<Self> {
        Ok(Self {
            start_beacon: ProlateHyperspheroid::new(start.to_vec(), beacon.to_vec(), cost_to_come)?,
            beacon_target: ProlateHyperspheroid::new(
                beacon.to_vec(),
                target.to_vec(),
                best_cost - cost_to_come,
            )?,
        })
    }

    /// Sum of member measures; an upper bound on the measure of the union.
    pub fn measure_sum(&self) -> f64 {
        self.start_beacon.measure() + self.beacon_target.measure()
    }
}

/// Uniform sample over the union of the two members, clipped to the space
/// bounds. Translational coordinates come from the union; an SE(2) heading
/// is drawn uniformly.
pub fn sample_local_subsets<R: Rng + ?Sized>(
    subsets: &LocalSubsets,
    space: &StateSpace,
    rng: &mut R,
) -> Result<State> {
    let members = [&subsets.start_beacon, &subsets.beacon_target];
    let m0 = members[0].measure();
    let m1 = members[1].measure();
    let total = m0 + m1;
    if !(total > 0.0) {
        return Err(Error::DegenerateSubset);
    }
    for _ in 0..UNION_RETRY_CAP {
        let pick = if rng.random::<f64>() * total < m0 { 0 } else { 1 };
        let x = members[pick].sample(rng);
        // The drawing member counts as containing its own sample.
        if members[1 - pick].contains(&x) && rng.random::<f64>() >= 0.5 {
            continue;
        }
        if !space.in_bounds(&x) {
            continue;
        }
        return Ok(space.complete_with_heading(x, rng));
    }
    Err(Error::SamplingStarved { attempts: UNION_RETRY_CAP })
}

/// Uniform sample of a single hyperspheroid clipped to the space bounds.
pub fn sample_hyperspheroid_in_bounds<R: Rng + ?Sized>(
    phs: &ProlateHyperspheroid,
    space: &StateSpace,
    rng: &mut R,
) -> Result<State> {
    for _ in 0..UNION_RETRY_CAP {
        let x = phs.sample(rng);
        if space.in_bounds(&x) {
            return Ok(space.complete_with_heading(x, rng));
        }
    }
    Err(Error::SamplingStarved { attempts: UNION_RETRY_CAP })
}

const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// Largest dimension [`halton`] supports.
pub const HALTON_MAX_DIMENSION: usize = PRIMES.len();

/// Radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

/// Halton point `index` in the unit hypercube, bases = first `dimension` primes.
///
/// # Panics
/// If `dimension` exceeds [`HALTON_MAX_DIMENSION`].
pub fn halton(index: u64, dimension: usize) -> Vec<f64> {
    assert!(
        dimension <= HALTON_MAX_DIMENSION,
        "halton supports at most {HALTON_MAX_DIMENSION} dimensions"
    );
    PRIMES[..dimension].iter().map(|&p| radical_inverse(index, p)).collect()
}
