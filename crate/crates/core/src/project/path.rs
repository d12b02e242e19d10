//! McShane-type projection `P u(p) = min_x̄ u(x̄) + W(p, B̄(x̄, r/4))`, where `W`
//! is the distance weighted by `ḡ`, approximated by shortest paths on an
//! auxiliary lattice.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{usage, Error, Result};
use crate::graph::{graph_gradient, DiscreteField, Graph};
use crate::net::Net;
use crate::space::{Metric, Point, Space, MAX_DIM};

/// Lattice pitch as a fraction of `r`, and the coarsest one accepted.
pub const DEFAULT_PITCH_FACTOR: f64 = 0.125;
const MAX_PITCH_FACTOR: f64 = 0.125;
const NODE_CAP: usize = 1 << 22;

/// `ḡ(p) = 2 Σ_{d(w̄,p) < 3r} |∇_r u|(w̄)` for a fixed field.
pub struct GBar<'a> {
    space: &'a Space,
    net: &'a Net,
    grad: Vec<f64>,
    zero: bool,
}

impl<'a> GBar<'a> {
    pub fn new(space: &'a Space, graph: &Graph, net: &'a Net, u: &DiscreteField) -> Result<Self> {
        let grad = graph_gradient(graph, net, u)?.values;
        let zero = grad.iter().all(|g| *g == 0.0);
        Ok(GBar {
            space,
            net,
            grad,
            zero,
        })
    }

    pub fn eval(&self, p: &Point) -> f64 {
        if self.zero {
            return 0.0;
        }
        let mut s = 0.0;
        self.net
            .for_each_within(self.space, p, 3.0 * self.net.r(), false, |id, _| s += self.grad[id as usize]);
        2.0 * s
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// `|∇_r u|` per vertex.
    pub fn vertex_gradient(&self) -> &[f64] {
        &self.grad
    }
}

pub fn gbar(space: &Space, graph: &Graph, net: &Net, u: &DiscreteField, p: &Point) -> Result<f64> {
    space.check_point(p)?;
    Ok(GBar::new(space, graph, net, u)?.eval(p))
}

struct Lattice {
    values: Vec<f64>,
    /// `ḡ` at nodes (Korányi only).
    gnode: Vec<f64>,
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

pub struct PathIntegralProjection<'a> {
    space: &'a Space,
    net: &'a Net,
    values: Vec<f64>,
    gbar: GBar<'a>,
    pitch_factor: f64,
    shape: [usize; MAX_DIM],
    step: [f64; MAX_DIM],
    lattice: OnceLock<Lattice>,
}

impl<'a> PathIntegralProjection<'a> {
    /// `pitch_factor` is the lattice pitch in units of `r`; it must not exceed `1/8`.
    pub fn new(
        space: &'a Space,
        graph: &Graph,
        net: &'a Net,
        u: &DiscreteField,
        pitch_factor: f64,
    ) -> Result<Self> {
        if net.is_empty() {
            return usage("cannot project from an empty net");
        }
        if !(pitch_factor > 0.0) || !pitch_factor.is_finite() {
            return usage(format!("lattice pitch factor must be positive, got {pitch_factor}"));
        }
        if pitch_factor > MAX_PITCH_FACTOR * (1.0 + 1e-12) {
            return Err(Error::Accuracy(format!(
                "lattice pitch {pitch_factor}·r is coarser than r/8"
            )));
        }
        let gbar = GBar::new(space, graph, net, u)?;
        let h = pitch_factor * net.r();
        let dim = space.dim();
        let mut shape = [1usize; MAX_DIM];
        let mut step = [0.0; MAX_DIM];
        let mut total = 1usize;
        for k in 0..dim {
            let target = match space.metric() {
                Metric::Koranyi if k == 2 => h * h / 4.0,
                m => h / m.axis_weight(k).sqrt(),
            };
            let extent = space.bounds().extent(k);
            let n = (extent / target).ceil() as usize + 1;
            shape[k] = n.max(2);
            step[k] = extent / (shape[k] - 1) as f64;
            total = total.saturating_mul(shape[k]);
        }
        let half_total: usize = (0..dim).map(|k| 2 * shape[k] - 1).product();
        if total > NODE_CAP || (space.metric().is_euclidean_chart() && half_total > 4 * NODE_CAP) {
            return Err(Error::Accuracy(format!(
                "path-integral lattice would need {total} nodes (cap {NODE_CAP})"
            )));
        }
        Ok(PathIntegralProjection {
            space,
            net,
            values: u.values.clone(),
            gbar,
            pitch_factor,
            shape,
            step,
            lattice: OnceLock::new(),
        })
    }

    pub fn space(&self) -> &'a Space {
        self.space
    }

    /// Lattice pitch in metric units.
    pub fn lattice_pitch(&self) -> f64 {
        self.pitch_factor * self.net.r()
    }

    pub fn node_count(&self) -> usize {
        self.shape[..self.space.dim()].iter().product()
    }

    pub fn gbar(&self) -> &GBar<'a> {
        &self.gbar
    }

    fn node_point(&self, mut flat: usize) -> Point {
        let dim = self.space.dim();
        let lo = self.space.bounds().lo;
        let mut c = lo;
        for k in (0..dim).rev() {
            let i = flat % self.shape[k];
            flat /= self.shape[k];
            c.coords_mut()[k] = lo.get(k) + i as f64 * self.step[k];
        }
        c
    }

    fn unflatten(&self, mut flat: usize) -> [usize; MAX_DIM] {
        let mut idx = [0; MAX_DIM];
        for k in (0..self.space.dim()).rev() {
            idx[k] = flat % self.shape[k];
            flat /= self.shape[k];
        }
        idx
    }

    fn flatten(&self, idx: &[usize; MAX_DIM]) -> usize {
        let mut f = 0;
        for k in 0..self.space.dim() {
            f = f * self.shape[k] + idx[k];
        }
        f
    }

    fn offsets(&self) -> Vec<[i64; MAX_DIM]> {
        let dim = self.space.dim();
        let mut out = Vec::new();
        let count = 3usize.pow(dim as u32);
        for code in 0..count {
            let mut o = [0i64; MAX_DIM];
            let mut c = code;
            for slot in o.iter_mut().take(dim) {
                *slot = (c % 3) as i64 - 1;
                c /= 3;
            }
            if o.iter().any(|&x| x != 0) {
                out.push(o);
            }
        }
        out
    }

    fn lattice(&self) -> &Lattice {
        self.lattice.get_or_init(|| self.build_lattice())
    }

    fn build_lattice(&self) -> Lattice {
        let dim = self.space.dim();
        let total = self.node_count();
        let euclid = self.space.metric().is_euclidean_chart();
        if self.gbar.is_zero() {
            // every path is free: the value is the minimum vertex value
            let m = self.values.iter().copied().fold(f64::INFINITY, f64::min);
            return Lattice {
                values: vec![m; total],
                gnode: vec![0.0; if euclid { 0 } else { total }],
            };
        }
        let lo = self.space.bounds().lo;

        // ḡ on the half-pitch grid: edge midpoints for Euclidean charts, nodes otherwise
        let (half_shape, gsamples) = if euclid {
            let mut hs = [1usize; MAX_DIM];
            for k in 0..dim {
                hs[k] = 2 * self.shape[k] - 1;
            }
            let count: usize = hs[..dim].iter().product();
            let g: Vec<f64> = (0..count)
                .into_par_iter()
                .map(|mut f| {
                    let mut c = lo;
                    for k in (0..dim).rev() {
                        let i = f % hs[k];
                        f /= hs[k];
                        c.coords_mut()[k] = lo.get(k) + i as f64 * 0.5 * self.step[k];
                    }
                    self.gbar.eval(&c)
                })
                .collect();
            (hs, g)
        } else {
            let g: Vec<f64> = (0..total)
                .into_par_iter()
                .map(|f| self.gbar.eval(&self.node_point(f)))
                .collect();
            (self.shape, g)
        };

        let offsets = self.offsets();
        let lengths: Vec<f64> = offsets
            .iter()
            .map(|o| {
                let mut q = lo;
                for k in 0..dim {
                    q.coords_mut()[k] += o[k] as f64 * self.step[k];
                }
                self.space.dist(&lo, &q)
            })
            .collect();

        let mut dist = vec![f64::INFINITY; total];
        let mut heap = BinaryHeap::new();
        let r = self.net.r();
        let rho = 0.25 * r;
        let reach = rho + 2.0 * self.lattice_pitch();
        for (i, x) in self.net.vertices().iter().enumerate() {
            let (blo, bhi) = self.space.ball_bbox(x, reach);
            let mut a = [0usize; MAX_DIM];
            let mut z = [0usize; MAX_DIM];
            let mut empty = false;
            for k in 0..dim {
                let l = ((blo[k] - lo.get(k)) / self.step[k]).ceil().max(0.0);
                let h = ((bhi[k] - lo.get(k)) / self.step[k]).floor();
                let h = h.min((self.shape[k] - 1) as f64);
                if h < l {
                    empty = true;
                }
                a[k] = l as usize;
                z[k] = h.max(0.0) as usize;
            }
            if empty {
                continue;
            }
            for_each_index(dim, &a, &z, |idx| {
                let f = self.flatten(idx);
                let c = self.node_point(f);
                let d = self.space.dist(x, &c);
                if d > reach {
                    return;
                }
                let v = if d <= rho {
                    self.values[i]
                } else {
                    let g = if euclid {
                        self.gbar.eval(&x.lerp(&c, 0.5 * (rho + d) / d))
                    } else {
                        gsamples[f]
                    };
                    self.values[i] + (d - rho) * g
                };
                if v < dist[f] {
                    dist[f] = v;
                    heap.push(Reverse(Item(v, f)));
                }
            });
        }

        while let Some(Reverse(Item(v, f))) = heap.pop() {
            if v > dist[f] {
                continue;
            }
            let idx = self.unflatten(f);
            'nb: for (o, len) in offsets.iter().zip(&lengths) {
                let mut nb = [0usize; MAX_DIM];
                let mut half = [0usize; MAX_DIM];
                for k in 0..dim {
                    let j = idx[k] as i64 + o[k];
                    if j < 0 || j >= self.shape[k] as i64 {
                        continue 'nb;
                    }
                    nb[k] = j as usize;
                    half[k] = (2 * idx[k] as i64 + o[k]) as usize;
                }
                let g = self.flatten(&nb);
                let w = if euclid {
                    let mut hf = 0;
                    for k in 0..dim {
                        hf = hf * half_shape[k] + half[k];
                    }
                    len * gsamples[hf]
                } else {
                    // trapezoid rule; the chart segment is not a geodesic
                    let d = self.space.dist(&self.node_point(f), &self.node_point(g));
                    d * 0.5 * (gsamples[f] + gsamples[g])
                };
                let nv = v + w;
                if nv < dist[g] {
                    dist[g] = nv;
                    heap.push(Reverse(Item(nv, g)));
                }
            }
        }
        Lattice {
            values: dist,
            gnode: if euclid { Vec::new() } else { gsamples },
        }
    }

    pub fn eval(&self, p: &Point) -> Result<f64> {
        self.space.check_point(p)?;
        if !self.space.bounds().contains(p) {
            return usage(format!("projection point {p:?} lies outside X"));
        }
        Ok(self.eval_unchecked(p))
    }

    pub(crate) fn eval_unchecked(&self, p: &Point) -> f64 {
        if let Some(id) = self.net.ball_containing(self.space, p) {
            return self.values[id as usize];
        }
        let lat = self.lattice();
        let euclid = self.space.metric().is_euclidean_chart();
        let dim = self.space.dim();
        let lo = self.space.bounds().lo;
        let gp = if euclid { 0.0 } else { self.gbar.eval(p) };
        let mut base = [0usize; MAX_DIM];
        for k in 0..dim {
            let t = ((p.get(k) - lo.get(k)) / self.step[k]).floor();
            base[k] = (t.max(0.0) as usize).min(self.shape[k] - 2);
        }
        let mut best = f64::INFINITY;
        for corner in 0..(1usize << dim) {
            let mut idx = base;
            for (k, slot) in idx.iter_mut().enumerate().take(dim) {
                *slot += (corner >> k) & 1;
            }
            let f = self.flatten(&idx);
            let c = self.node_point(f);
            let d = self.space.dist(p, &c);
            let g = if euclid {
                self.gbar.eval(&p.lerp(&c, 0.5))
            } else {
                0.5 * (gp + lat.gnode[f])
            };
            best = best.min(lat.values[f] + d * g);
        }
        let rho = 0.25 * self.net.r();
        self.net
            .for_each_within(self.space, p, 1.25 * self.net.r(), true, |id, d| {
                let x = self.net.vertex(id as usize);
                let g = if euclid {
                    self.gbar.eval(&x.lerp(p, 0.5 * (rho + d) / d))
                } else {
                    gp
                };
                best = best.min(self.values[id as usize] + (d - rho).max(0.0) * g);
            });
        best
    }

    /// Parallel evaluation; the lattice is built at most once.
    pub fn eval_many(&self, points: &[Point]) -> Result<Vec<f64>> {
        for p in points {
            self.space.check_point(p)?;
            if !self.space.bounds().contains(p) {
                return usage(format!("projection point {p:?} lies outside X"));
            }
        }
        Ok(points.par_iter().map(|p| self.eval_unchecked(p)).collect())
    }
}

/// Odometer over the index box `[a, z]`, last axis fastest.
fn for_each_index(dim: usize, a: &[usize; MAX_DIM], z: &[usize; MAX_DIM], mut f: impl FnMut(&[usize; MAX_DIM])) {
    let mut idx = *a;
    loop {
        f(&idx);
        let mut k = dim;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            if idx[k] < z[k] {
                idx[k] += 1;
                idx[k + 1..dim].copy_from_slice(&a[k + 1..dim]);
                break;
            }
        }
    }
}

pub fn project_path_integral(
    space: &Space,
    graph: &Graph,
    net: &Net,
    u: &DiscreteField,
    p: &Point,
    lattice_pitch: f64,
) -> Result<f64> {
    PathIntegralProjection::new(space, graph, net, u, lattice_pitch / net.r())?.eval(p)
}
