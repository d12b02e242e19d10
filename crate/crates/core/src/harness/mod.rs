//! Experiment orchestration: canonical instances, r-sweeps and the
//! verification suite.

pub mod convergence;
pub mod instances;
pub mod suite;

use rand::Rng as _;

pub use convergence::{run_convergence, ConvergenceOptions, ExperimentReport, RungRecord};
pub use suite::{verify_suite, Check, CheckStatus, Fault, SuiteReport};

use crate::error::Result;
use crate::graph::{graph_energy, DiscreteField, Graph};
use crate::net::Net;
use crate::rng;
use crate::space::{Point, Space, MAX_DIM};

/// Cell centres of a tensor grid over `X` with per-axis pitch `pitch/√w_k`,
/// and their quadrature weights `ρ · volume`.
pub struct ProbeGrid {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
}

impl ProbeGrid {
    pub fn new(space: &Space, pitch: f64) -> Result<Self> {
        let dim = space.dim();
        let b = space.bounds();
        let mut n = [1usize; MAX_DIM];
        let mut h = [0.0; MAX_DIM];
        for k in 0..dim {
            let w = space.metric().axis_weight(k);
            n[k] = ((b.extent(k) * w.sqrt() / pitch).ceil() as usize).max(1);
            h[k] = b.extent(k) / n[k] as f64;
        }
        let total: usize = n[..dim].iter().product();
        if total > 1 << 24 {
            return Err(crate::Error::Accuracy(format!("probe grid would need {total} points")));
        }
        let vol: f64 = h[..dim].iter().product();
        let mut points = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        for mut flat in 0..total {
            let mut p = b.lo;
            for k in (0..dim).rev() {
                let i = flat % n[k];
                flat /= n[k];
                p.coords_mut()[k] = b.lo.get(k) + (i as f64 + 0.5) * h[k];
            }
            weights.push(space.measure().density_at(&p) * vol);
            points.push(p);
        }
        Ok(ProbeGrid { points, weights })
    }
}

/// Random fields supported on `Ω_r`: even indices i.i.d. uniform on the
/// interior, odd indices the smooth profile `(margin − m r)₊ (1 + a x_0)`.
pub fn random_compact_fields(space: &Space, net: &Net, count: usize, seed: u64) -> Vec<DiscreteField> {
    let mut rng = rng::stream(seed, 0xF1E1D);
    let cut = net.margin_factor * net.r();
    (0..count)
        .map(|k| {
            let a: f64 = 2.0 * rng.random::<f64>() - 1.0;
            let vals = net
                .vertices()
                .iter()
                .zip(&net.interior)
                .map(|(v, inside)| {
                    if !inside {
                        0.0
                    } else if k % 2 == 0 {
                        2.0 * rng.random::<f64>() - 1.0
                    } else {
                        (space.domain_margin(v) - cut).max(0.0) * (1.0 + a * v.get(0))
                    }
                })
                .collect();
            DiscreteField {
                net_id: net.id(),
                values: vals,
            }
        })
        .collect()
}

/// `max Σ u² μ_r / graph_energy(u)` over random fields supported on `Ω_r`;
/// `None` when `Ω_r` is empty.
pub fn mazya_constant(graph: &Graph, net: &Net, space: &Space, count: usize, seed: u64) -> Result<Option<f64>> {
    if net.interior_count() == 0 {
        return Ok(None);
    }
    let mut worst: Option<f64> = None;
    for u in random_compact_fields(space, net, count, seed) {
        let mass: f64 = u.values.iter().zip(&net.weights).map(|(v, w)| v * v * w).sum();
        let e = graph_energy(graph, net, &u)?;
        if mass == 0.0 {
            continue;
        }
        let c = if e > 0.0 { mass / e } else { f64::INFINITY };
        worst = Some(worst.map_or(c, |w| w.max(c)));
    }
    Ok(worst)
}
