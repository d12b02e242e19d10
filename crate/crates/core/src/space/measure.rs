use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Bounds, Metric, Point, Space, MAX_DIM};
use crate::error::{usage, Error, Result};
use crate::rng;

/// Lebesgue measure, or Lebesgue measure times a smooth positive density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Lebesgue,
    Density(Density),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Density {
    /// `offset + Σ slope_k (x_k - m_k)` with `m` the center of the bounds.
    Linear {
        offset: f64,
        slope: Vec<f64>,
        #[serde(skip)]
        center: Option<Point>,
    },
    /// `1 + amplitude · exp(-|x - center|² / (2 σ²))` (chart distance).
    Gaussian {
        amplitude: f64,
        center: Point,
        sigma: f64,
    },
}

impl Density {
    pub fn linear(offset: f64, slope: Vec<f64>, bounds: &Bounds) -> Self {
        Density::Linear {
            offset,
            slope,
            center: Some(bounds.center()),
        }
    }

    /// Fills in the bounds center for deserialized linear densities.
    pub fn anchored(self, bounds: &Bounds) -> Self {
        match self {
            Density::Linear { offset, slope, .. } => Density::linear(offset, slope, bounds),
            g => g,
        }
    }

    #[inline]
    pub fn eval(&self, p: &Point) -> f64 {
        match self {
            Density::Linear {
                offset,
                slope,
                center,
            } => {
                let c = center.expect("linear density must be anchored to the bounds");
                let mut v = *offset;
                for (k, s) in slope.iter().enumerate() {
                    v += s * (p.get(k) - c.get(k));
                }
                v
            }
            Density::Gaussian {
                amplitude,
                center,
                sigma,
            } => {
                let mut r2 = 0.0;
                for k in 0..p.dim() {
                    let d = p.get(k) - center.get(k);
                    r2 += d * d;
                }
                1.0 + amplitude * (-r2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    pub(crate) fn validate(&self, bounds: &Bounds) -> Result<()> {
        match self {
            Density::Linear { slope, center, .. } => {
                if slope.len() != bounds.dim() {
                    return usage("linear density needs one slope per axis");
                }
                if center.is_none() {
                    return usage("linear density is not anchored to the bounds");
                }
                // Affine, so positivity on the box is decided at the corners.
                if bounds.corners().iter().any(|c| !(self.eval(c) > 0.0)) {
                    return usage("density must be positive on X");
                }
            }
            Density::Gaussian {
                amplitude, sigma, ..
            } => {
                if !(*amplitude > -1.0) || !(*sigma > 0.0) {
                    return usage("gaussian density needs amplitude > -1 and sigma > 0");
                }
            }
        }
        Ok(())
    }
}

impl Measure {
    #[inline]
    pub fn density_at(&self, p: &Point) -> f64 {
        match self {
            Measure::Lebesgue => 1.0,
            Measure::Density(d) => d.eval(p),
        }
    }

    /// `μ(X)` when it has a closed form.
    pub fn total_mass(&self, bounds: &Bounds) -> Option<f64> {
        match self {
            Measure::Lebesgue => Some(bounds.volume()),
            // The linear part integrates to zero about the center of the box.
            Measure::Density(Density::Linear { offset, .. }) => Some(offset * bounds.volume()),
            Measure::Density(Density::Gaussian { .. }) => None,
        }
    }
}

/// A ball measure together with its standard error (zero for closed forms).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallMass {
    pub mass: f64,
    pub std_error: f64,
}

impl BallMass {
    fn exact(mass: f64) -> Self {
        BallMass {
            mass,
            std_error: 0.0,
        }
    }
}

/// Volume of `{|x - Ξ| ≤ ρ in the Korányi gauge}` for `ρ = 1` (Haar measure): `π²/8`.
const KORANYI_UNIT_BALL: f64 = std::f64::consts::PI * std::f64::consts::PI / 8.0;

const MC_MIN_SAMPLES: usize = 256;
const MC_MAX_SAMPLES: usize = 1 << 22;

pub(super) fn ball_measure(space: &Space, center: &Point, radius: f64) -> Result<BallMass> {
    let lebesgue = clipped_volume(space, center, radius);
    match (&space.measure, lebesgue) {
        (Measure::Lebesgue, Some(v)) => Ok(BallMass::exact(v)),
        (Measure::Density(_), Some(v)) => {
            if v <= 0.0 {
                return Ok(BallMass::exact(0.0));
            }
            // μ(B) = |B ∩ X| · mean of the density over B ∩ X.
            let mean = monte_carlo(space, center, radius, |p| space.measure.density_at(p))?;
            Ok(BallMass {
                mass: v * mean.mass,
                std_error: v * mean.std_error,
            })
        }
        (_, None) => {
            let (lo, hi) = space.clipped_bbox(center, radius);
            let box_volume: f64 = (0..space.dim()).map(|k| (hi[k] - lo[k]).max(0.0)).product();
            if box_volume <= 0.0 {
                return Ok(BallMass::exact(0.0));
            }
            let est = monte_carlo_box(space, center, radius, &lo, &hi, |p| {
                if space.dist(center, p) <= radius {
                    space.measure.density_at(p)
                } else {
                    0.0
                }
            })?;
            Ok(BallMass {
                mass: box_volume * est.mass,
                std_error: box_volume * est.std_error,
            })
        }
    }
}

/// Closed-form Lebesgue volume of `B(center, radius) ∩ X`, where available.
fn clipped_volume(space: &Space, center: &Point, radius: f64) -> Option<f64> {
    let b = space.bounds();
    match (space.metric(), space.dim()) {
        (Metric::Koranyi, _) => {
            let (lo, hi) = space.ball_bbox(center, radius);
            let inside = (0..3).all(|k| lo[k] >= b.lo.get(k) && hi[k] <= b.hi.get(k));
            inside.then(|| KORANYI_UNIT_BALL * radius.powi(4))
        }
        (m, 1) => {
            let h = radius / weight(m, 0).sqrt();
            let a = (center.get(0) - h).max(b.lo.get(0));
            let z = (center.get(0) + h).min(b.hi.get(0));
            Some((z - a).max(0.0))
        }
        (m, 2) => {
            // Scale each axis by sqrt(w_k) so the ball becomes a Euclidean disk.
            let s = [weight(m, 0).sqrt(), weight(m, 1).sqrt()];
            let area = disk_rectangle_area(
                [center.get(0) * s[0], center.get(1) * s[1]],
                radius,
                [b.lo.get(0) * s[0], b.hi.get(0) * s[0]],
                [b.lo.get(1) * s[1], b.hi.get(1) * s[1]],
            );
            Some(area / (s[0] * s[1]))
        }
        _ => None,
    }
}

fn weight(m: &Metric, axis: usize) -> f64 {
    match m {
        Metric::WeightedEuclidean(w) => w[axis],
        _ => 1.0,
    }
}

/// Area of the disk `|x - c| ≤ ρ` intersected with `[x0, x1] × [y0, y1]`.
///
/// Parametrizes `x = c_x + ρ sin θ`; the clipped chord length is piecewise of
/// the form `α + β ρ cos θ` between the breakpoints where the chord meets the
/// horizontal edges, and each piece integrates in closed form.
pub fn disk_rectangle_area(c: [f64; 2], rho: f64, xr: [f64; 2], yr: [f64; 2]) -> f64 {
    let xa = xr[0].max(c[0] - rho);
    let xb = xr[1].min(c[0] + rho);
    if xa >= xb || yr[0] >= yr[1] {
        return 0.0;
    }
    let angle = |x: f64| ((x - c[0]) / rho).clamp(-1.0, 1.0).asin();
    let (ta, tb) = (angle(xa), angle(xb));
    let dlo = yr[0] - c[1];
    let dhi = yr[1] - c[1];
    let mut breaks = vec![ta, tb, 0.0];
    for d in [dlo.abs(), dhi.abs()] {
        if d < rho {
            let t = (d / rho).acos();
            breaks.push(t);
            breaks.push(-t);
        }
    }
    breaks.retain(|t| *t >= ta && *t <= tb);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut area = 0.0;
    for w in breaks.windows(2) {
        let (t1, t2) = (w[0], w[1]);
        let tm = 0.5 * (t1 + t2);
        let half = rho * tm.cos();
        let top_is_chord = half < dhi;
        let bottom_is_chord = -half > dlo;
        let top = if top_is_chord { half } else { dhi };
        let bottom = if bottom_is_chord { -half } else { dlo };
        if top <= bottom {
            continue;
        }
        // length = α + β ρ cos θ
        let alpha = (if top_is_chord { 0.0 } else { dhi }) - (if bottom_is_chord { 0.0 } else { dlo });
        let beta = top_is_chord as u8 as f64 + bottom_is_chord as u8 as f64;
        let lin = alpha * rho * (t2.sin() - t1.sin());
        let quad = beta
            * rho
            * rho
            * (0.5 * (t2 - t1) + 0.25 * ((2.0 * t2).sin() - (2.0 * t1).sin()));
        area += lin + quad;
    }
    area
}

/// Adaptive Monte Carlo mean of `f` over uniform points of `B(center, radius) ∩ X`.
fn monte_carlo(
    space: &Space,
    center: &Point,
    radius: f64,
    f: impl Fn(&Point) -> f64,
) -> Result<BallMass> {
    let seed = rng::mix_f64(space.mc_seed, &[center.coords(), &[radius]].concat());
    let mut rng = rng::stream(seed, 0xBA11);
    let (lo, hi) = space.clipped_bbox(center, radius);
    run_adaptive(space.mc_rel_tol, &mut rng, |rng| loop {
        let p = draw(rng, center, &lo, &hi, space.dim());
        if space.dist(center, &p) <= radius {
            return f(&p);
        }
    })
}

/// Adaptive Monte Carlo mean of `f` over uniform points of the box `[lo, hi]`.
fn monte_carlo_box(
    space: &Space,
    center: &Point,
    radius: f64,
    lo: &[f64; MAX_DIM],
    hi: &[f64; MAX_DIM],
    f: impl Fn(&Point) -> f64,
) -> Result<BallMass> {
    let seed = rng::mix_f64(space.mc_seed ^ 0xB0C5, &[center.coords(), &[radius]].concat());
    let mut rng = rng::stream(seed, 0xBA12);
    run_adaptive(space.mc_rel_tol, &mut rng, |rng| {
        f(&draw(rng, center, lo, hi, space.dim()))
    })
}

fn draw(rng: &mut rng::Rng, template: &Point, lo: &[f64; MAX_DIM], hi: &[f64; MAX_DIM], dim: usize) -> Point {
    let mut p = *template;
    for k in 0..dim {
        p.coords_mut()[k] = if hi[k] > lo[k] {
            rng.random_range(lo[k]..hi[k])
        } else {
            lo[k]
        };
    }
    p
}

/// Doubles the sample count until the relative standard error meets `rel_tol`.
fn run_adaptive(
    rel_tol: f64,
    rng: &mut rng::Rng,
    mut sample: impl FnMut(&mut rng::Rng) -> f64,
) -> Result<BallMass> {
    let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
    let mut target = MC_MIN_SAMPLES;
    loop {
        while n < target {
            let x = sample(rng);
            n += 1;
            let delta = x - mean;
            mean += delta / n as f64;
            m2 += delta * (x - mean);
        }
        let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
        let se = (var / n as f64).sqrt();
        // a batch without a single hit says nothing about the relative error
        if mean != 0.0 && se <= rel_tol * mean.abs() {
            return Ok(BallMass {
                mass: mean,
                std_error: se,
            });
        }
        if target >= MC_MAX_SAMPLES {
            return Err(Error::MonteCarlo {
                estimate: mean,
                std_error: se,
                target: rel_tol,
            });
        }
        target *= 2;
    }
}
