//! Metric measure spaces `(X, d, μ)` with a bounded domain `Ω ⊂ X`.
//!
//! `X` is always an axis-aligned box in an ambient chart of dimension 1, 2
//! or 3. The metric is Euclidean, a diagonally weighted Euclidean norm, or the
//! Korányi gauge distance on the first Heisenberg group. The measure is
//! Lebesgue (Haar) or Lebesgue times a smooth positive density.

mod functions;
mod measure;

pub use functions::ScalarFunction;
pub use measure::{disk_rectangle_area, BallMass, Density, Measure};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};
use crate::rng;

pub const MAX_DIM: usize = 3;

/// A point of the ambient chart.
#[derive(Clone, Copy, PartialEq)]
pub struct Point {
    coords: [f64; MAX_DIM],
    dim: usize,
}

impl Point {
    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return usage(format!(
                "points need between 1 and {MAX_DIM} coordinates, got {}",
                coords.len()
            ));
        }
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Point {
            coords: c,
            dim: coords.len(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim]
    }

    pub fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords[..self.dim]
    }

    #[inline]
    pub fn get(&self, axis: usize) -> f64 {
        self.coords[axis]
    }

    /// Coordinate-wise affine combination `self + t (other - self)` in the chart.
    pub fn lerp(&self, other: &Point, t: f64) -> Point {
        let mut out = *self;
        for k in 0..self.dim {
            out.coords[k] = self.coords[k] + t * (other.coords[k] - self.coords[k]);
        }
        out
    }
}

impl<const N: usize> From<[f64; N]> for Point {
    fn from(c: [f64; N]) -> Self {
        assert!(N >= 1 && N <= MAX_DIM, "point dimension out of range");
        let mut coords = [0.0; MAX_DIM];
        coords[..N].copy_from_slice(&c);
        Point { coords, dim: N }
    }
}

impl std::fmt::Debug for Point {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Point::from_slice(&v).map_err(serde::de::Error::custom)
    }
}

/// Axis-aligned box `[lo, hi]` in chart coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Point,
    pub hi: Point,
}

impl Bounds {
    pub fn new(lo: Point, hi: Point) -> Result<Self> {
        if lo.dim() != hi.dim() {
            return usage("bounds corners have different dimensions");
        }
        for k in 0..lo.dim() {
            if !(lo.get(k) < hi.get(k)) || !lo.get(k).is_finite() || !hi.get(k).is_finite() {
                return usage(format!("degenerate bounds on axis {k}"));
            }
        }
        Ok(Bounds { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.dim()
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi.get(axis) - self.lo.get(axis)
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.extent(k)).product()
    }

    pub fn center(&self) -> Point {
        self.lo.lerp(&self.hi, 0.5)
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim()).all(|k| p.get(k) >= self.lo.get(k) && p.get(k) <= self.hi.get(k))
    }

    /// Corner points, in lexicographic order.
    pub fn corners(&self) -> Vec<Point> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| {
                let mut p = self.lo;
                for k in 0..d {
                    if mask & (1 << (d - 1 - k)) != 0 {
                        p.coords_mut()[k] = self.hi.get(k);
                    }
                }
                p
            })
            .collect()
    }

    pub fn sample_uniform(&self, rng: &mut rng::Rng) -> Point {
        let mut p = self.lo;
        for k in 0..self.dim() {
            p.coords_mut()[k] = rng.random_range(self.lo.get(k)..=self.hi.get(k));
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    /// `d(p, q) = sqrt(Σ w_k (p_k - q_k)²)`.
    WeightedEuclidean(Vec<f64>),
    /// Korányi gauge on the Heisenberg group with law
    /// `(x, y, t)(x', y', t') = (x + x', y + y', t + t' + (x y' - y x') / 2)`
    /// and gauge `((x² + y²)² + 16 t²)^{1/4}`.
    Koranyi,
}

impl Metric {
    #[inline]
    pub(crate) fn axis_weight(&self, axis: usize) -> f64 {
        match self {
            Metric::WeightedEuclidean(w) => w[axis],
            _ => 1.0,
        }
    }

    /// True for norm-induced metrics on the chart (Euclidean or weighted).
    pub fn is_euclidean_chart(&self) -> bool {
        !matches!(self, Metric::Koranyi)
    }
}

/// The domain `Ω`: an open box or an open metric ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Box(Bounds),
    Ball { center: Point, radius: f64 },
}

#[derive(Clone, Debug)]
pub struct Space {
    metric: Metric,
    measure: Measure,
    bounds: Bounds,
    domain: Domain,
    reference: Option<ScalarFunction>,
    /// Relative standard-error target for Monte Carlo ball measures.
    pub mc_rel_tol: f64,
    /// Base seed for Monte Carlo ball measures.
    pub mc_seed: u64,
}

/// Result of the complement-witness search performed by [`Space::new`].
#[derive(Clone, Debug)]
pub struct ComplementWitness {
    pub center: Point,
    pub radius: f64,
    pub mass: f64,
}

impl Space {
    pub fn new(metric: Metric, measure: Measure, bounds: Bounds, domain: Domain) -> Result<Self> {
        let space = Space {
            metric,
            measure,
            bounds,
            domain,
            reference: None,
            mc_rel_tol: 1e-3,
            mc_seed: 0,
        };
        space.validate()?;
        Ok(space)
    }

    pub fn with_reference(mut self, reference: Option<ScalarFunction>) -> Self {
        self.reference = reference;
        self
    }

    pub fn with_monte_carlo(mut self, rel_tol: f64, seed: u64) -> Self {
        self.mc_rel_tol = rel_tol;
        self.mc_seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        let dim = self.bounds.dim();
        match &self.metric {
            Metric::Koranyi if dim != 3 => {
                return usage("the Korányi metric needs a 3-dimensional chart");
            }
            Metric::WeightedEuclidean(w) => {
                if w.len() != dim || w.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                    return usage("metric weights must be positive, one per axis");
                }
            }
            _ => {}
        }
        if let Measure::Density(density) = &self.measure {
            density.validate(&self.bounds)?;
        }
        match &self.domain {
            Domain::Box(b) => {
                if matches!(self.metric, Metric::Koranyi) {
                    return usage("box domains are only supported on Euclidean charts");
                }
                if b.dim() != dim {
                    return usage("domain dimension differs from the space");
                }
                for k in 0..dim {
                    if b.lo.get(k) < self.bounds.lo.get(k) || b.hi.get(k) > self.bounds.hi.get(k) {
                        return usage("the domain must lie inside the space bounds");
                    }
                }
            }
            Domain::Ball { center, radius } => {
                if center.dim() != dim {
                    return usage("domain dimension differs from the space");
                }
                if !(*radius > 0.0) {
                    return usage("domain radius must be positive");
                }
                if !self.bounds.contains(center) {
                    return usage("the domain center must lie inside the space bounds");
                }
            }
        }
        self.complement_witness()?;
        Ok(())
    }

    /// Finds a ball of positive measure inside `X \ Ω`.
    pub fn complement_witness(&self) -> Result<ComplementWitness> {
        let mut best: Option<(f64, Point)> = None;
        for c in self.bounds.corners() {
            let m = self.domain_margin(&c);
            if m < 0.0 && best.as_ref().is_none_or(|(bm, _)| m < *bm) {
                best = Some((m, c));
            }
        }
        let Some((margin, center)) = best else {
            return usage("X \\ Ω must have positive measure (no exterior corner of X found)");
        };
        let radius = -margin;
        // Only positivity matters here, so an imprecise Monte Carlo estimate will do.
        let mass = match self.ball_measure(&center, radius) {
            Ok(m) => m.mass,
            Err(Error::MonteCarlo { estimate, .. }) => estimate,
            Err(e) => return Err(e),
        };
        if !(mass > 0.0) {
            return usage("X \\ Ω must have positive measure");
        }
        Ok(ComplementWitness {
            center,
            radius,
            mass,
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn reference(&self) -> Option<&ScalarFunction> {
        self.reference.as_ref()
    }

    pub fn check_point(&self, p: &Point) -> Result<()> {
        if p.dim() != self.dim() {
            return usage(format!(
                "point has dimension {} but the space has dimension {}",
                p.dim(),
                self.dim()
            ));
        }
        if p.coords().iter().any(|c| !c.is_finite()) {
            return usage("point coordinates must be finite");
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.bounds.contains(p)
    }

    /// Checked distance.
    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64> {
        self.check_point(p)?;
        self.check_point(q)?;
        Ok(self.dist(p, q))
    }

    /// Unchecked distance for hot loops; both points must have the space's dimension.
    #[inline]
    pub fn dist(&self, p: &Point, q: &Point) -> f64 {
        match &self.metric {
            Metric::Euclidean => {
                let mut s = 0.0;
                for k in 0..p.dim {
                    let d = p.coords[k] - q.coords[k];
                    s += d * d;
                }
                s.sqrt()
            }
            Metric::WeightedEuclidean(w) => {
                let mut s = 0.0;
                for k in 0..p.dim {
                    let d = p.coords[k] - q.coords[k];
                    s += w[k] * d * d;
                }
                s.sqrt()
            }
            Metric::Koranyi => {
                let x = p.coords[0] - q.coords[0];
                let y = p.coords[1] - q.coords[1];
                let t = (p.coords[2] - q.coords[2])
                    + 0.5 * (q.coords[1] * p.coords[0] - q.coords[0] * p.coords[1]);
                let h = x * x + y * y;
                (h * h + 16.0 * t * t).sqrt().sqrt()
            }
        }
    }

    /// Chart box containing the closed ball `B̄(center, radius)`, padded for rounding.
    pub fn ball_bbox(&self, center: &Point, radius: f64) -> ([f64; MAX_DIM], [f64; MAX_DIM]) {
        let pad = radius * 1e-8 + 1e-15;
        let mut lo = [0.0; MAX_DIM];
        let mut hi = [0.0; MAX_DIM];
        match &self.metric {
            Metric::Koranyi => {
                let (cx, cy) = (center.get(0), center.get(1));
                let ht = radius * radius / 4.0 + 0.5 * (cx.abs() + cy.abs()) * radius;
                let half = [radius, radius, ht];
                for k in 0..3 {
                    lo[k] = center.get(k) - half[k] - pad;
                    hi[k] = center.get(k) + half[k] + pad;
                }
            }
            m => {
                for k in 0..center.dim() {
                    let h = radius / m.axis_weight(k).sqrt();
                    lo[k] = center.get(k) - h - pad;
                    hi[k] = center.get(k) + h + pad;
                }
            }
        }
        (lo, hi)
    }

    /// Distance from `p` to the chart box `[lo, hi]` for norm metrics.
    pub(crate) fn dist_to_box(&self, p: &Point, lo: &[f64], hi: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..p.dim {
            let x = p.coords[k];
            let g = if x < lo[k] {
                lo[k] - x
            } else if x > hi[k] {
                x - hi[k]
            } else {
                0.0
            };
            s += self.metric.axis_weight(k) * g * g;
        }
        s.sqrt()
    }

    /// Metric diameter of a chart box with the given side lengths (norm metrics).
    pub(crate) fn box_diameter(&self, sides: &[f64]) -> f64 {
        sides
            .iter()
            .enumerate()
            .map(|(k, s)| self.metric.axis_weight(k) * s * s)
            .sum::<f64>()
            .sqrt()
    }

    /// Diameter of `X`, exact for norm metrics and the largest corner-to-corner
    /// distance for the Korányi gauge.
    pub fn diameter(&self) -> f64 {
        let corners = self.bounds.corners();
        let mut best = 0.0f64;
        for a in &corners {
            for b in &corners {
                best = best.max(self.dist(a, b));
            }
        }
        best
    }

    /// Signed distance to the complement of `Ω`: positive inside, `-dist(p, Ω)` outside.
    ///
    /// `B(p, ρ) ⊂ Ω` is decided by `domain_margin(p) >= ρ`. On the Korányi
    /// chart the ball-domain margin is the triangle-inequality bound
    /// `R - d(c, p)`, which never overstates the true distance.
    pub fn domain_margin(&self, p: &Point) -> f64 {
        match &self.domain {
            Domain::Box(b) => {
                let inside = (0..p.dim).all(|k| p.get(k) > b.lo.get(k) && p.get(k) < b.hi.get(k));
                if inside {
                    (0..p.dim)
                        .map(|k| {
                            let gap = (p.get(k) - b.lo.get(k)).min(b.hi.get(k) - p.get(k));
                            gap * self.metric.axis_weight(k).sqrt()
                        })
                        .fold(f64::INFINITY, f64::min)
                } else {
                    -self.dist_to_box(p, b.lo.coords(), b.hi.coords())
                }
            }
            Domain::Ball { center, radius } => radius - self.dist(center, p),
        }
    }

    pub fn in_domain(&self, p: &Point) -> bool {
        self.domain_margin(p) > 0.0
    }

    /// `μ(B(center, radius) ∩ X)`.
    pub fn ball_measure(&self, center: &Point, radius: f64) -> Result<BallMass> {
        self.check_point(center)?;
        if !(radius > 0.0) || !radius.is_finite() {
            return usage("ball radius must be positive and finite");
        }
        measure::ball_measure(self, center, radius)
    }

    /// Quadrature nodes and `μ`-weights for `B(center, radius) ∩ X`.
    ///
    /// Weights sum to `ball_measure(center, radius)`. One-dimensional charts use
    /// the midpoint rule on the clipped interval, planar Euclidean charts use an
    /// equal-area polar midpoint rule with a seeded angular offset, and other
    /// charts use seeded rejection sampling.
    pub fn sample_ball(
        &self,
        center: &Point,
        radius: f64,
        n: usize,
        seed: u64,
    ) -> Result<Vec<(Point, f64)>> {
        let mass = self.ball_measure(center, radius)?.mass;
        self.sample_ball_with_mass(center, radius, n, seed, mass)
    }

    pub(crate) fn sample_ball_with_mass(
        &self,
        center: &Point,
        radius: f64,
        n: usize,
        seed: u64,
        mass: f64,
    ) -> Result<Vec<(Point, f64)>> {
        if n == 0 {
            return usage("sample_ball needs at least one node");
        }
        if !(mass > 0.0) {
            return usage("ball does not meet X");
        }
        if n == 1 {
            return Ok(vec![(*center, mass)]);
        }
        let mut nodes = match (&self.metric, self.dim()) {
            (Metric::Koranyi, _) | (_, 3) => Vec::new(),
            (m, 1) => {
                let h = radius / m.axis_weight(0).sqrt();
                let a = (center.get(0) - h).max(self.bounds.lo.get(0));
                let b = (center.get(0) + h).min(self.bounds.hi.get(0));
                let step = (b - a) / n as f64;
                (0..n)
                    .map(|i| Point::from([a + (i as f64 + 0.5) * step]))
                    .filter(|p| self.dist(center, p) <= radius)
                    .collect()
            }
            (m, _) => {
                let mut rng = rng::stream(seed, 0x5A3);
                let offset: f64 = rng.random();
                let rings = ((n as f64 / 4.0).sqrt().floor() as usize).max(1);
                let sectors = (n / rings).max(1);
                let (s0, s1) = (m.axis_weight(0).sqrt(), m.axis_weight(1).sqrt());
                let mut out = Vec::with_capacity(rings * sectors);
                for i in 0..rings {
                    let rho = radius * ((i as f64 + 0.5) / rings as f64).sqrt();
                    for j in 0..sectors {
                        let theta = std::f64::consts::TAU * (j as f64 + offset) / sectors as f64;
                        let p = Point::from([
                            center.get(0) + rho * theta.cos() / s0,
                            center.get(1) + rho * theta.sin() / s1,
                        ]);
                        if self.contains(&p) && self.dist(center, &p) <= radius {
                            out.push(p);
                        }
                    }
                }
                out
            }
        };
        if nodes.is_empty() {
            nodes = self.rejection_sample(center, radius, n, seed)?;
        }
        let weights: Vec<f64> = nodes.iter().map(|p| self.measure.density_at(p)).collect();
        let total: f64 = weights.iter().sum();
        Ok(nodes
            .into_iter()
            .zip(weights)
            .map(|(p, w)| (p, mass * w / total))
            .collect())
    }

    /// Uniform points of `B(center, radius) ∩ X` by rejection from the ball's bounding box.
    pub(crate) fn rejection_sample(
        &self,
        center: &Point,
        radius: f64,
        n: usize,
        seed: u64,
    ) -> Result<Vec<Point>> {
        let (lo, hi) = self.clipped_bbox(center, radius);
        let mut rng = rng::stream(seed, 0x8E1);
        let mut out = Vec::with_capacity(n);
        let mut tries = 0usize;
        let mut p = *center;
        while out.len() < n {
            tries += 1;
            if tries > 10_000 + 1000 * n {
                return Err(Error::Numerical(
                    "rejection sampling of a ball failed to find interior points".into(),
                ));
            }
            for k in 0..self.dim() {
                p.coords_mut()[k] = rng.random_range(lo[k]..=hi[k]);
            }
            if self.dist(center, &p) <= radius {
                out.push(p);
            }
        }
        Ok(out)
    }

    pub(crate) fn clipped_bbox(&self, center: &Point, radius: f64) -> ([f64; MAX_DIM], [f64; MAX_DIM]) {
        let (mut lo, mut hi) = self.ball_bbox(center, radius);
        for k in 0..self.dim() {
            lo[k] = lo[k].max(self.bounds.lo.get(k));
            hi[k] = hi[k].min(self.bounds.hi.get(k));
        }
        (lo, hi)
    }

    /// Empirical doubling constant: the largest `μ(B(c, 2ρ)) / μ(B(c, ρ))` over
    /// `centers` random centers and a log-spaced radius grid.
    pub fn doubling_constant(&self, rho_min: f64, rho_max: f64, steps: usize, centers: usize, seed: u64) -> Result<f64> {
        let mut rng = rng::stream(seed, 0xD0B);
        let mut worst = 1.0f64;
        for _ in 0..centers {
            let c = self.bounds.sample_uniform(&mut rng);
            for s in 0..steps {
                let t = if steps > 1 { s as f64 / (steps - 1) as f64 } else { 0.0 };
                let rho = rho_min * (rho_max / rho_min).powf(t);
                let small = self.ball_measure(&c, rho)?.mass;
                let large = self.ball_measure(&c, 2.0 * rho)?.mass;
                worst = worst.max(large / small);
            }
        }
        Ok(worst)
    }

    /// Candidate-grid pitch per axis used by the greedy net construction.
    pub(crate) fn candidate_pitch(&self, r: f64) -> [f64; MAX_DIM] {
        // Slight inflation keeps grid points exactly `r` apart from tying with `r`.
        let h = 0.5 * r * (1.0 + 1e-11);
        match &self.metric {
            Metric::Koranyi => {
                // The group law shears the centre coordinate by up to
                // M·|Δx|/2 with M = max |x|, |y| on X; keep that below r²/10 so
                // cells touching the t-faces of the box are still covered.
                let m = (0..2)
                    .map(|k| self.bounds.lo.get(k).abs().max(self.bounds.hi.get(k).abs()))
                    .fold(0.0, f64::max);
                let hxy = if m > 0.0 { h.min(0.2 * r * r / m) } else { h };
                [hxy, hxy, 0.125 * r * r * (1.0 + 1e-11)]
            }
            m => {
                let mut out = [0.0; MAX_DIM];
                for (k, o) in out.iter_mut().enumerate().take(self.dim()) {
                    *o = h / m.axis_weight(k).sqrt();
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn interval(lo: f64, hi: f64, dlo: f64, dhi: f64) -> Space {
        Space::new(
            Metric::Euclidean,
            Measure::Lebesgue,
            Bounds::new(Point::from([lo]), Point::from([hi])).unwrap(),
            Domain::Box(Bounds::new(Point::from([dlo]), Point::from([dhi])).unwrap()),
        )
        .unwrap()
    }

    fn square_with_disk() -> Space {
        Space::new(
            Metric::Euclidean,
            Measure::Lebesgue,
            Bounds::new(Point::from([-1.0, -1.0]), Point::from([1.0, 1.0])).unwrap(),
            Domain::Ball {
                center: Point::from([0.0, 0.0]),
                radius: 0.4,
            },
        )
        .unwrap()
    }

    fn heisenberg() -> Space {
        Space::new(
            Metric::Koranyi,
            Measure::Lebesgue,
            Bounds::new(Point::from([-1.0, -1.0, -1.0]), Point::from([1.0, 1.0, 1.0])).unwrap(),
            Domain::Ball {
                center: Point::from([0.0, 0.0, 0.0]),
                radius: 0.5,
            },
        )
        .unwrap()
    }

    #[test]
    fn distance_examples() {
        let s = interval(0.0, 1.0, 0.2, 0.8);
        let d = s.distance(&Point::from([0.2]), &Point::from([0.9])).unwrap();
        assert!((d - 0.7).abs() < 1e-15);
        assert_eq!(s.distance(&Point::from([0.4]), &Point::from([0.4])).unwrap(), 0.0);

        let h = heisenberg();
        let d = h
            .distance(&Point::from([0.0, 0.0, 0.0]), &Point::from([1.0, 0.0, 0.0]))
            .unwrap();
        assert_eq!(d, 1.0);
        // pure vertical displacement: (16 t²)^{1/4} = 2 sqrt(t)
        let d = h
            .distance(&Point::from([0.0, 0.0, 0.0]), &Point::from([0.0, 0.0, 0.25]))
            .unwrap();
        assert!((d - 1.0).abs() < 1e-15);
    }

    #[test]
    fn distance_rejects_dimension_mismatch() {
        let s = interval(0.0, 1.0, 0.2, 0.8);
        let err = s.distance(&Point::from([0.2]), &Point::from([0.2, 0.3])).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn domain_margin_examples() {
        let s = interval(0.0, 1.0, 0.2, 0.8);
        assert!((s.domain_margin(&Point::from([0.5])) - 0.3).abs() < 1e-15);
        assert!((s.domain_margin(&Point::from([0.1])) + 0.1).abs() < 1e-15);
        let d = square_with_disk();
        assert!((d.domain_margin(&Point::from([0.1, 0.0])) - 0.3).abs() < 1e-15);
        assert!((d.domain_margin(&Point::from([0.7, 0.0])) + 0.3).abs() < 1e-15);
    }

    #[test]
    fn complement_must_have_positive_measure() {
        let err = Space::new(
            Metric::Euclidean,
            Measure::Lebesgue,
            Bounds::new(Point::from([0.0]), Point::from([1.0])).unwrap(),
            Domain::Box(Bounds::new(Point::from([0.0]), Point::from([1.0])).unwrap()),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn sample_ball_midpoint_rule() {
        let s = interval(0.0, 1.0, 0.2, 0.8);
        let nodes = s.sample_ball(&Point::from([0.5]), 0.1, 4, 0).unwrap();
        let xs: Vec<f64> = nodes.iter().map(|(p, _)| p.get(0)).collect();
        let expect = [0.425, 0.475, 0.525, 0.575];
        for (x, e) in xs.iter().zip(expect) {
            assert!((x - e).abs() < 1e-14);
        }
        for (_, w) in &nodes {
            assert!((w - 0.05).abs() < 1e-15);
        }
        let single = s.sample_ball(&Point::from([0.3]), 0.1, 1, 9).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].0, Point::from([0.3]));
        assert!((single[0].1 - 0.2).abs() < 1e-15);
    }

    #[test]
    fn sample_ball_weights_sum_to_mass() {
        let d = square_with_disk();
        for (c, rho) in [([0.0, 0.0], 0.1), ([-1.0, -0.95], 0.2), ([0.99, 0.0], 0.05)] {
            let c = Point::from(c);
            let mass = d.ball_measure(&c, rho).unwrap().mass;
            let nodes = d.sample_ball(&c, rho, 64, 3).unwrap();
            let total: f64 = nodes.iter().map(|(_, w)| w).sum();
            assert!((total - mass).abs() <= 1e-10 * mass);
            for (p, _) in &nodes {
                assert!(d.contains(p) && d.dist(&c, p) <= rho);
            }
        }
        let h = heisenberg();
        let c = Point::from([0.2, -0.3, 0.1]);
        let nodes = h.sample_ball(&c, 0.1, 32, 1).unwrap();
        assert_eq!(nodes.len(), 32);
        let mass = h.ball_measure(&c, 0.1).unwrap().mass;
        let total: f64 = nodes.iter().map(|(_, w)| w).sum();
        assert!((total - mass).abs() <= 1e-10 * mass);
    }

    #[test]
    fn sample_ball_is_deterministic() {
        let d = square_with_disk();
        let a = d.sample_ball(&Point::from([0.1, 0.2]), 0.05, 40, 17).unwrap();
        let b = d.sample_ball(&Point::from([0.1, 0.2]), 0.05, 40, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empirical_doubling_is_finite() {
        let d = square_with_disk();
        let c = d.doubling_constant(0.01, 0.5, 6, 10, 1).unwrap();
        // Clipped planar balls double with constant at most 16.
        assert!(c >= 1.0 && c <= 16.0 + 1e-9, "{c}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn koranyi_metric_axioms(a in proptest::array::uniform3(-1.0f64..1.0),
                                 b in proptest::array::uniform3(-1.0f64..1.0),
                                 c in proptest::array::uniform3(-1.0f64..1.0)) {
            let h = heisenberg();
            let (p, q, w) = (Point::from(a), Point::from(b), Point::from(c));
            prop_assert_eq!(h.dist(&p, &q), h.dist(&q, &p));
            prop_assert!(h.dist(&p, &q) <= h.dist(&p, &w) + h.dist(&w, &q) + 1e-12);
        }

        #[test]
        fn ball_measure_is_monotone(cx in -1.0f64..1.0, cy in -1.0f64..1.0, r1 in 0.01f64..1.0, f in 1.0f64..3.0) {
            let d = square_with_disk();
            let c = Point::from([cx, cy]);
            let small = d.ball_measure(&c, r1).unwrap().mass;
            let large = d.ball_measure(&c, r1 * f).unwrap().mass;
            prop_assert!(small <= large + 1e-15);
        }
    }
}
