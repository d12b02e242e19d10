//! Maximal `r`-separated nets, vertex weights `μ(B(x̄, r/4))` and the discrete
//! interior `Ω_r`.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};
use crate::index::GridIndex;
use crate::rng;
use crate::space::{Point, Space};

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

/// Default margin factor: `x̄ ∈ Ω_r` iff `B(x̄, 20 r) ⊂ Ω`.
pub const DEFAULT_MARGIN_FACTOR: f64 = 20.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetOptions {
    /// Random candidates tried after the lexicographic grid.
    pub extra_candidates: usize,
    pub margin_factor: f64,
}

impl Default for NetOptions {
    fn default() -> Self {
        NetOptions {
            extra_candidates: 256,
            margin_factor: DEFAULT_MARGIN_FACTOR,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Net {
    id: u64,
    r: f64,
    seed: u64,
    vertices: Vec<Point>,
    /// `μ_r({x̄}) = μ(B(x̄, r/4))`; empty until [`assign_weights`].
    pub weights: Vec<f64>,
    /// Membership in `Ω_r`; empty until [`discretize_domain`].
    pub interior: Vec<bool>,
    pub margin_factor: f64,
    index: GridIndex,
}

impl Net {
    /// Identity used to match fields and graphs to the net they were built on.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &Point {
        &self.vertices[i]
    }

    pub fn index(&self) -> &GridIndex {
        &self.index
    }

    pub fn interior_count(&self) -> usize {
        self.interior.iter().filter(|b| **b).count()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Vertices within distance `radius` of `p`.
    pub fn for_each_within(
        &self,
        space: &Space,
        p: &Point,
        radius: f64,
        inclusive: bool,
        f: impl FnMut(u32, f64),
    ) {
        self.index
            .for_each_within(space, &self.vertices, p, radius, inclusive, f);
    }

    /// The vertex whose closed ball `B̄(x̄, r/4)` contains `p`, if any.
    ///
    /// Balls of an `r`-separated net are disjoint, so at most one exists.
    pub fn ball_containing(&self, space: &Space, p: &Point) -> Option<u32> {
        let mut hit = None;
        self.for_each_within(space, p, 0.25 * self.r, true, |id, _| {
            if hit.is_none_or(|h| id < h) {
                hit = Some(id);
            }
        });
        hit
    }

    pub fn nearest(&self, space: &Space, p: &Point) -> Option<(u32, f64)> {
        self.index.nearest(space, &self.vertices, p, self.r)
    }

    /// Test-only constructor from an explicit vertex list.
    pub fn from_vertices(space: &Space, r: f64, vertices: Vec<Point>) -> Result<Self> {
        for v in &vertices {
            space.check_point(v)?;
        }
        let mut index = GridIndex::new(space, r);
        for (i, v) in vertices.iter().enumerate() {
            index.insert(i as u32, v);
        }
        Ok(Net {
            id: NEXT_NET_ID.fetch_add(1, Ordering::Relaxed),
            r,
            seed: 0,
            vertices,
            weights: Vec::new(),
            interior: Vec::new(),
            margin_factor: DEFAULT_MARGIN_FACTOR,
            index,
        })
    }
}

/// Greedy maximal `r`-separated subset of `X`.
///
/// Candidates are a grid of pitch `r/2` over the bounds (the Korányi chart
/// uses pitch `r²/4` along the center), visited in lexicographic order with
/// the far face of the box appended on every axis, followed by
/// `extra_candidates` seeded uniform points. A candidate is kept when every
/// kept vertex is at distance `≥ r`.
pub fn build_net(space: &Space, r: f64, seed: u64, opts: &NetOptions) -> Result<Net> {
    if !(r > 0.0) || !r.is_finite() {
        return usage("net scale r must be positive");
    }
    let diam = space.diameter();
    if r >= diam {
        return usage(format!("net scale r = {r} is not smaller than the diameter {diam} of X"));
    }
    let b = space.bounds();
    let dim = space.dim();
    let pitch = space.candidate_pitch(r);
    let axes: Vec<Vec<f64>> = (0..dim)
        .map(|k| {
            let (lo, hi) = (b.lo.get(k), b.hi.get(k));
            let mut v: Vec<f64> = (0..)
                .map(|i| lo + i as f64 * pitch[k])
                .take_while(|x| *x <= hi)
                .collect();
            if v.last().is_some_and(|x| *x < hi) {
                v.push(hi);
            }
            v
        })
        .collect();
    if axes.iter().any(|a| a.is_empty()) {
        return usage("no net candidates at this scale");
    }

    let mut index = GridIndex::new(space, r);
    let mut vertices: Vec<Point> = Vec::new();
    let try_insert = |p: Point, vertices: &mut Vec<Point>, index: &mut GridIndex| {
        let mut blocked = false;
        index.for_each_within(space, vertices, &p, r, false, |_, _| blocked = true);
        if !blocked {
            index.insert(vertices.len() as u32, &p);
            vertices.push(p);
        }
    };

    let mut idx = vec![0usize; dim];
    let mut p = b.lo;
    'grid: loop {
        for k in 0..dim {
            p.coords_mut()[k] = axes[k][idx[k]];
        }
        try_insert(p, &mut vertices, &mut index);
        let mut k = dim;
        loop {
            if k == 0 {
                break 'grid;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }

    let mut rng = rng::stream(seed, 0x4E7);
    for _ in 0..opts.extra_candidates {
        let q = b.sample_uniform(&mut rng);
        try_insert(q, &mut vertices, &mut index);
    }

    Ok(Net {
        id: NEXT_NET_ID.fetch_add(1, Ordering::Relaxed),
        r,
        seed,
        vertices,
        weights: Vec::new(),
        interior: Vec::new(),
        margin_factor: opts.margin_factor,
        index,
    })
}

/// Sets `μ_r({x̄}) = μ(B(x̄, r/4))` for every vertex.
pub fn assign_weights(space: &Space, mut net: Net) -> Result<Net> {
    let rho = 0.25 * net.r;
    net.weights = net
        .vertices
        .iter()
        .map(|v| space.ball_measure(v, rho).map(|m| m.mass))
        .collect::<Result<_>>()?;
    if let Some(i) = net.weights.iter().position(|w| !(*w > 0.0)) {
        return usage(format!("vertex {i} received a non-positive weight"));
    }
    log::debug!(
        "net r={} total weight {:.6e} over {} vertices",
        net.r,
        net.total_weight(),
        net.len()
    );
    Ok(net)
}

/// Marks `x̄ ∈ Ω_r` iff `domain_margin(x̄) ≥ margin_factor · r`.
pub fn discretize_domain(space: &Space, mut net: Net) -> Net {
    let need = net.margin_factor * net.r;
    net.interior = net
        .vertices
        .iter()
        .map(|v| space.domain_margin(v) >= need)
        .collect();
    if net.interior_count() == 0 {
        log::warn!(
            "discrete interior is empty at r = {} (margin {} r); the minimizer is the zero field",
            net.r,
            net.margin_factor
        );
    }
    net
}

/// Builds, weights and masks a net in one call.
pub fn build_full(space: &Space, r: f64, seed: u64, opts: &NetOptions) -> Result<Net> {
    let net = build_net(space, r, seed, opts)?;
    let net = assign_weights(space, net)?;
    Ok(discretize_domain(space, net))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverCertificate {
    pub probes: usize,
    pub max_nearest_distance: f64,
    pub uncovered: usize,
}

/// Nearest-vertex distances of seeded uniform probes of `X`; covered iff `< r`.
pub fn covering_certificate(space: &Space, net: &Net, probes: usize, seed: u64) -> CoverCertificate {
    let mut rng = rng::stream(seed, 0xC0F);
    let mut worst = 0.0f64;
    let mut uncovered = 0;
    for _ in 0..probes {
        let p = space.bounds().sample_uniform(&mut rng);
        let d = net.nearest(space, &p).map_or(f64::INFINITY, |(_, d)| d);
        worst = worst.max(d);
        if !(d < net.r) {
            uncovered += 1;
        }
    }
    CoverCertificate {
        probes,
        max_nearest_distance: worst,
        uncovered,
    }
}

/// Smallest distance between distinct vertices within a `2r` neighborhood
/// (`∞` when no such pair exists).
pub fn min_separation(space: &Space, net: &Net) -> f64 {
    let mut best = f64::INFINITY;
    for (i, v) in net.vertices.iter().enumerate() {
        net.for_each_within(space, v, 2.0 * net.r, true, |j, d| {
            if j as usize != i {
                best = best.min(d);
            }
        });
    }
    best
}
