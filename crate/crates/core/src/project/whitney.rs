//! Partition-of-unity projection over a lazily generated dyadic Whitney
//! decomposition of `O = X \ ⋃ B̄(x̄, r/4)`.
//!
//! Root cubes have metric side `r/2` and are anchored at the lower corner of
//! the bounds. A cube `Q` is admissible when `diam Q ≤ dist(Q, C)` with
//! `C = ⋃ B̄(x̄, r/4)`; Whitney cubes are the maximal admissible ones. Each
//! Whitney cube carries the bump `Π_k ψ(2(x_k - c_k) / ((1 + ε) s_k))`,
//! `ψ(t) = (1 - t²)²`, `ε = 1/4`, and the value of the vertex nearest its centre.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{usage, Result};
use crate::net::Net;
use crate::space::{Point, Space, MAX_DIM};

pub const DEFAULT_DEPTH_CAP: u32 = 40;
const DILATION: f64 = 0.25;
/// Whitney cubes whose dilation meets a point lie within this many levels of
/// the point's own cube.
const LEVEL_WINDOW: i32 = 3;
const CACHE_LIMIT: usize = 1 << 22;

/// `(vertex, weight)` pairs; the projected value is `Σ weight · u(vertex)`.
pub type Stencil = Vec<(u32, f64)>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct CubeKey {
    level: u32,
    idx: [i64; MAX_DIM],
}

#[derive(Clone, Copy, Debug)]
struct CubeInfo {
    admissible: bool,
    /// Nearest vertex to the centre, filled for Whitney cubes on demand.
    vertex: Option<u32>,
}

/// Per-thread memo of cube admissibility and values. Purely a cache: results
/// do not depend on its contents.
#[derive(Default)]
pub struct CubeCache {
    map: HashMap<CubeKey, CubeInfo>,
}

impl CubeCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

pub struct WhitneyProjection<'a> {
    space: &'a Space,
    net: &'a Net,
    root_side: [f64; MAX_DIM],
    depth_cap: u32,
    fallbacks: AtomicU64,
}

impl<'a> WhitneyProjection<'a> {
    pub fn new(space: &'a Space, net: &'a Net, depth_cap: u32) -> Result<Self> {
        if !space.metric().is_euclidean_chart() {
            return usage("the Whitney projection is only available on Euclidean charts");
        }
        if net.is_empty() {
            return usage("cannot project from an empty net");
        }
        let mut root_side = [0.0; MAX_DIM];
        for (k, side) in root_side.iter_mut().enumerate().take(space.dim()) {
            *side = 0.5 * net.r() / space.metric().axis_weight(k).sqrt();
        }
        Ok(WhitneyProjection {
            space,
            net,
            root_side,
            depth_cap: depth_cap.min(60),
            fallbacks: AtomicU64::new(0),
        })
    }

    pub fn space(&self) -> &'a Space {
        self.space
    }

    pub fn depth_cap(&self) -> u32 {
        self.depth_cap
    }

    /// Evaluations that hit the depth cap and fell back to the nearest ball.
    pub fn fallback_count(&self) -> u64 {
        self.fallbacks.load(Ordering::Relaxed)
    }

    fn dim(&self) -> usize {
        self.space.dim()
    }

    fn side(&self, level: u32, k: usize) -> f64 {
        self.root_side[k] * 0.5f64.powi(level as i32)
    }

    fn cube_box(&self, key: &CubeKey) -> ([f64; MAX_DIM], [f64; MAX_DIM], [f64; MAX_DIM]) {
        let lo0 = self.space.bounds().lo;
        let mut lo = [0.0; MAX_DIM];
        let mut hi = [0.0; MAX_DIM];
        let mut sides = [0.0; MAX_DIM];
        for k in 0..self.dim() {
            let s = self.side(key.level, k);
            lo[k] = lo0.get(k) + key.idx[k] as f64 * s;
            hi[k] = lo[k] + s;
            sides[k] = s;
        }
        (lo, hi, sides)
    }

    fn admissible_uncached(&self, key: &CubeKey) -> bool {
        let (lo, hi, sides) = self.cube_box(key);
        let dim = self.dim();
        let diam = self.space.box_diameter(&sides[..dim]);
        let need = diam + 0.25 * self.net.r();
        // vertices closer than `need` lie in the cube box padded by the ball half-widths
        let corner = Point::from_slice(&lo[..dim]).expect("finite");
        let (_, reach) = self.space.ball_bbox(&corner, need);
        let mut elo = lo;
        let mut ehi = hi;
        for k in 0..dim {
            let pad = reach[k] - lo[k];
            elo[k] = lo[k] - pad;
            ehi[k] = hi[k] + pad;
        }
        let vertices = self.net.vertices();
        !self.net.index().any_in_box(&elo, &ehi, |id| {
            self.space
                .dist_to_box(&vertices[id as usize], &lo[..dim], &hi[..dim])
                < need
        })
    }

    fn info(&self, key: CubeKey, cache: &mut CubeCache) -> CubeInfo {
        if let Some(info) = cache.map.get(&key) {
            return *info;
        }
        if cache.map.len() >= CACHE_LIMIT {
            cache.map.clear();
        }
        let info = CubeInfo {
            admissible: self.admissible_uncached(&key),
            vertex: None,
        };
        cache.map.insert(key, info);
        info
    }

    fn is_whitney(&self, key: CubeKey, cache: &mut CubeCache) -> bool {
        if !self.info(key, cache).admissible {
            return false;
        }
        if key.level == 0 {
            return true;
        }
        let mut parent = key;
        parent.level -= 1;
        for k in 0..self.dim() {
            parent.idx[k] = key.idx[k].div_euclid(2);
        }
        !self.info(parent, cache).admissible
    }

    fn cube_vertex(&self, key: CubeKey, cache: &mut CubeCache) -> u32 {
        if let Some(v) = cache.map.get(&key).and_then(|i| i.vertex) {
            return v;
        }
        let (lo, hi, _) = self.cube_box(&key);
        let dim = self.dim();
        let mut c = [0.0; MAX_DIM];
        for k in 0..dim {
            c[k] = 0.5 * (lo[k] + hi[k]);
        }
        let centre = Point::from_slice(&c[..dim]).expect("finite");
        let v = self.net.nearest(self.space, &centre).expect("net is not empty").0;
        if let Some(info) = cache.map.get_mut(&key) {
            info.vertex = Some(v);
        }
        v
    }

    fn key_at(&self, p: &Point, level: u32) -> CubeKey {
        let lo0 = self.space.bounds().lo;
        let mut idx = [0i64; MAX_DIM];
        for k in 0..self.dim() {
            idx[k] = ((p.get(k) - lo0.get(k)) / self.side(level, k)).floor() as i64;
        }
        CubeKey { level, idx }
    }

    /// Stencil of the projection at `p`. `p` must lie in `X`.
    pub fn stencil(&self, p: &Point, cache: &mut CubeCache) -> Stencil {
        if let Some(id) = self.net.ball_containing(self.space, p) {
            return vec![(id, 1.0)];
        }
        // descend to the Whitney cube containing p
        let mut level = 0;
        loop {
            let key = self.key_at(p, level);
            if self.info(key, cache).admissible {
                break;
            }
            if level >= self.depth_cap {
                self.fallbacks.fetch_add(1, Ordering::Relaxed);
                let v = self.net.nearest(self.space, p).expect("net is not empty").0;
                return vec![(v, 1.0)];
            }
            level += 1;
        }
        let dim = self.dim();
        let lo0 = self.space.bounds().lo;
        let half = 0.5 * (1.0 + DILATION);
        let mut stencil: Stencil = Vec::with_capacity(8);
        let mut total = 0.0;
        let first = (level as i32 - LEVEL_WINDOW).max(0) as u32;
        let last = (level + LEVEL_WINDOW as u32).min(self.depth_cap);
        for lv in first..=last {
            // per axis, the (at most two) cube indices whose dilation meets p
            let mut ranges = [(0i64, -1i64); MAX_DIM];
            let mut t = [0.0; MAX_DIM];
            for k in 0..dim {
                t[k] = (p.get(k) - lo0.get(k)) / self.side(lv, k);
                let a = (t[k] - 0.5 - half).floor() as i64 + 1;
                let b = (t[k] - 0.5 + half).ceil() as i64 - 1;
                ranges[k] = (a, b);
            }
            if ranges[..dim].iter().any(|(a, b)| a > b) {
                continue;
            }
            let mut idx = [0i64; MAX_DIM];
            for k in 0..dim {
                idx[k] = ranges[k].0;
            }
            'cubes: loop {
                let key = CubeKey { level: lv, idx };
                let mut w = 1.0;
                for k in 0..dim {
                    let s = (t[k] - idx[k] as f64 - 0.5) / half;
                    let q = 1.0 - s * s;
                    w *= if q > 0.0 { q * q } else { 0.0 };
                }
                if w > 0.0 && self.is_whitney(key, cache) {
                    let v = self.cube_vertex(key, cache);
                    stencil.push((v, w));
                    total += w;
                }
                let mut k = dim;
                loop {
                    if k == 0 {
                        break 'cubes;
                    }
                    k -= 1;
                    if idx[k] < ranges[k].1 {
                        idx[k] += 1;
                        for j in k + 1..dim {
                            idx[j] = ranges[j].0;
                        }
                        break;
                    }
                }
            }
        }
        debug_assert!(total > 0.0);
        stencil.sort_by_key(|(v, _)| *v);
        let mut merged: Stencil = Vec::with_capacity(stencil.len());
        for (v, w) in stencil {
            match merged.last_mut() {
                Some((lv, lw)) if *lv == v => *lw += w,
                _ => merged.push((v, w)),
            }
        }
        for (_, w) in merged.iter_mut() {
            *w /= total;
        }
        merged
    }

    pub fn eval_with(&self, p: &Point, values: &[f64], cache: &mut CubeCache) -> f64 {
        apply(&self.stencil(p, cache), values)
    }
}

pub fn apply(stencil: &Stencil, values: &[f64]) -> f64 {
    if let [(v, _)] = stencil.as_slice() {
        return values[*v as usize];
    }
    stencil.iter().map(|(v, w)| w * values[*v as usize]).sum()
}
