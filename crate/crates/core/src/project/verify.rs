//! Checks of the projection properties: ball averages reproduce the field,
//! the gradient energy is dominated by the graph energy, compactly supported
//! fields vanish off the domain, and local Lipschitz bounds.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::fd::{fd_energies, FdGrid, DEFAULT_FD_PITCH_FACTOR};
use super::path::GBar;
use super::{whitney_stencils, CubeCache, ProjectedField, ProjectionKind, ProjectionOptions, WhitneyProjection};
use crate::error::Result;
use crate::graph::{discretize_function, graph_energy, DiscreteField, Graph};
use crate::net::Net;
use crate::rng;
use crate::space::{Point, Space};

/// Quadrature tolerance for ball averages of the projected field.
pub const CONSISTENCY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyOptions {
    /// Exterior probes for the vanishing check.
    pub probes: usize,
    pub seed: u64,
    pub quad_n: usize,
    /// Finite-difference pitch in units of `r`; `None` skips the energy estimate.
    pub fd_pitch_factor: Option<f64>,
    /// Random segments for the upper-gradient check (path-integral kind only).
    pub curves: usize,
    pub projection: ProjectionOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            probes: 1000,
            seed: 0,
            quad_n: 16,
            fd_pitch_factor: Some(DEFAULT_FD_PITCH_FACTOR),
            curves: 0,
            projection: ProjectionOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryReport {
    pub probes: usize,
    pub nonzero: usize,
    pub max_abs: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurveReport {
    pub curves: usize,
    /// Segments where `|ΔP|` exceeds `∫ ḡ ds` by more than 5%.
    pub violations: usize,
    /// Largest `|ΔP| / ∫ ḡ ds` seen.
    pub max_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectionReport {
    pub kind: ProjectionKind,
    pub consistency_max_error: f64,
    pub consistency_pass: bool,
    pub graph_energy: f64,
    pub fd_grad_energy: Option<f64>,
    /// `fd / graph`; absent when the graph energy vanishes.
    pub energy_ratio: Option<f64>,
    /// Present when `u` vanishes at every vertex outside the interior.
    pub boundary: Option<BoundaryReport>,
    pub upper_gradient: Option<CurveReport>,
    pub diagnostics: serde_json::Value,
}

impl ProjectionReport {
    pub fn boundary_pass(&self) -> Option<bool> {
        self.boundary.as_ref().map(|b| b.nonzero == 0)
    }
}

/// True when `u` vanishes on every vertex outside the interior set.
pub fn is_compactly_supported(net: &Net, u: &DiscreteField) -> bool {
    net.interior.len() == u.len() && u.values.iter().zip(&net.interior).all(|(v, inside)| *inside || *v == 0.0)
}

/// Uniform points of `X \ Ω` by rejection from the bounds.
pub fn exterior_probes(space: &Space, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = rng::stream(seed, 0xE7);
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count && tries < count.saturating_mul(10_000).max(1) {
        tries += 1;
        let p = space.bounds().sample_uniform(&mut rng);
        if !space.in_domain(&p) {
            out.push(p);
        }
    }
    out
}

/// Max-norm gap between the ball averages of the projection and `u`.
pub fn consistency_error(space: &Space, net: &Net, field: &ProjectedField, u: &DiscreteField, quad_n: usize, seed: u64) -> Result<f64> {
    let back = discretize_function(space, net, |p| field.eval(p).unwrap_or(f64::NAN), quad_n, seed)?;
    Ok(back
        .values
        .iter()
        .zip(&u.values)
        .map(|(a, b)| if a.is_nan() { f64::INFINITY } else { (a - b).abs() })
        .fold(0.0, f64::max))
}

pub fn verify_projection(
    space: &Space,
    graph: &Graph,
    net: &Net,
    u: &DiscreteField,
    kind: ProjectionKind,
    opts: &VerifyOptions,
) -> Result<ProjectionReport> {
    let field = ProjectedField::new(space, graph, net, u, kind, &opts.projection)?;
    let consistency = consistency_error(space, net, &field, u, opts.quad_n, rng::mix(opts.seed, 1))?;
    let ge = graph_energy(graph, net, u)?;

    let fd = match (opts.fd_pitch_factor, space.metric().is_euclidean_chart()) {
        (Some(f), true) => {
            let grid = FdGrid::new(space, f * net.r())?;
            let e = fd_energies(space, &grid, 1, |pts| Ok(vec![field.eval_many(pts)?]))?;
            Some(e.grad_sq[0])
        }
        _ => None,
    };
    let ratio = fd.and_then(|e| if ge > 0.0 { Some(e / ge) } else { None });

    let boundary = if is_compactly_supported(net, u) {
        let probes = exterior_probes(space, opts.probes, rng::mix(opts.seed, 2));
        let vals = field.eval_many(&probes)?;
        Some(BoundaryReport {
            probes: probes.len(),
            nonzero: vals.iter().filter(|v| **v != 0.0).count(),
            max_abs: vals.iter().fold(0.0, |m, v| m.max(v.abs())),
        })
    } else {
        None
    };

    let upper_gradient = if kind == ProjectionKind::PathIntegral && opts.curves > 0 {
        Some(curve_check(space, graph, net, u, &field, opts.curves, rng::mix(opts.seed, 3))?)
    } else {
        None
    };

    Ok(ProjectionReport {
        kind,
        consistency_max_error: consistency,
        consistency_pass: consistency <= CONSISTENCY_TOL,
        graph_energy: ge,
        fd_grad_energy: fd,
        energy_ratio: ratio,
        boundary,
        upper_gradient,
        diagnostics: field.diagnostics(),
    })
}

/// Random point pair `(x, y)` in `X` with `r/100 < d(x, y) < r`, the length
/// log-uniform.
fn close_pair(space: &Space, r: f64, rng: &mut rng::Rng) -> Option<(Point, Point, f64)> {
    let dim = space.dim();
    for _ in 0..1000 {
        let x = space.bounds().sample_uniform(rng);
        let mut dir = x;
        for k in 0..dim {
            dir.coords_mut()[k] = rng.sample::<f64, _>(StandardNormal);
        }
        let zero = Point::from_slice(&vec![0.0; dim]).ok()?;
        let len = space.dist(&zero, &dir);
        if !(len > 0.0) {
            continue;
        }
        let target = r * (0.01f64).powf(rng.random::<f64>());
        let mut y = x;
        for k in 0..dim {
            y.coords_mut()[k] = x.get(k) + dir.get(k) * target / len;
        }
        if !space.bounds().contains(&y) {
            continue;
        }
        let d = space.dist(&x, &y);
        if d > 0.0 && d < r {
            return Some((x, y, d));
        }
    }
    None
}

fn curve_check(
    space: &Space,
    graph: &Graph,
    net: &Net,
    u: &DiscreteField,
    field: &ProjectedField,
    curves: usize,
    seed: u64,
) -> Result<CurveReport> {
    let gb = GBar::new(space, graph, net, u)?;
    let mut rng = rng::stream(seed, 0xC7);
    let mut report = CurveReport {
        curves: 0,
        violations: 0,
        max_ratio: 0.0,
    };
    const PIECES: usize = 64;
    for _ in 0..curves {
        let Some((a, b, d)) = close_pair(space, net.r(), &mut rng) else {
            continue;
        };
        let integral: f64 = (0..PIECES)
            .map(|k| gb.eval(&a.lerp(&b, (k as f64 + 0.5) / PIECES as f64)))
            .sum::<f64>()
            * d
            / PIECES as f64;
        let diff = (field.eval(&a)? - field.eval(&b)?).abs();
        report.curves += 1;
        if diff > 0.0 {
            let ratio = if integral > 0.0 { diff / integral } else { f64::INFINITY };
            report.max_ratio = report.max_ratio.max(ratio);
            if ratio > 1.05 {
                report.violations += 1;
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzReport {
    pub pairs: usize,
    pub max_ratio: f64,
    /// Pairs with a vanishing local gradient bound but different values.
    pub violations: usize,
    pub cap: f64,
}

impl LipschitzReport {
    pub fn pass(&self) -> bool {
        self.violations == 0 && self.max_ratio <= self.cap
    }
}

pub const DEFAULT_LIPSCHITZ_CAP: f64 = 200.0;

/// `|P u(x) − P u(y)| / (sup_{w̄ ∈ B(x, 3r)} |∇_r u|(w̄) · d(x, y))` over
/// random close pairs, Whitney projection.
pub fn lipschitz_probe(
    space: &Space,
    graph: &Graph,
    net: &Net,
    u: &DiscreteField,
    pairs: usize,
    seed: u64,
    depth_cap: u32,
) -> Result<LipschitzReport> {
    let proj = WhitneyProjection::new(space, net, depth_cap)?;
    let gb = GBar::new(space, graph, net, u)?;
    let grad = gb.vertex_gradient();
    let mut rng = rng::stream(seed, 0x11);
    let mut cache = CubeCache::new();
    let mut report = LipschitzReport {
        pairs: 0,
        max_ratio: 0.0,
        violations: 0,
        cap: DEFAULT_LIPSCHITZ_CAP,
    };
    for _ in 0..pairs {
        let Some((x, y, d)) = close_pair(space, net.r(), &mut rng) else {
            continue;
        };
        let mut sup = 0.0f64;
        net.for_each_within(space, &x, 3.0 * net.r(), false, |id, _| sup = sup.max(grad[id as usize]));
        let diff = (proj.eval_with(&x, &u.values, &mut cache) - proj.eval_with(&y, &u.values, &mut cache)).abs();
        report.pairs += 1;
        if diff == 0.0 {
            continue;
        }
        if sup == 0.0 {
            report.violations += 1;
            continue;
        }
        report.max_ratio = report.max_ratio.max(diff / (sup * d));
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct LatticeConvergence {
    pub probes: usize,
    pub pitch_factors: Vec<f64>,
    /// `max |P_h − P_{h/2}| / max |P_h|` over the probes, for consecutive halvings.
    pub changes: Vec<f64>,
}

/// Path-integral values at random probes under repeated halving of the lattice pitch.
pub fn lattice_convergence(
    space: &Space,
    graph: &Graph,
    net: &Net,
    u: &DiscreteField,
    probes: usize,
    halvings: usize,
    seed: u64,
) -> Result<LatticeConvergence> {
    let mut rng = rng::stream(seed, 0x1A7);
    let pts: Vec<Point> = (0..probes).map(|_| space.bounds().sample_uniform(&mut rng)).collect();
    let mut factors = Vec::new();
    let mut changes = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    let mut f = super::path::DEFAULT_PITCH_FACTOR;
    for _ in 0..=halvings {
        let opts = ProjectionOptions {
            lattice_pitch_factor: f,
            ..ProjectionOptions::default()
        };
        let field = ProjectedField::new(space, graph, net, u, ProjectionKind::PathIntegral, &opts)?;
        let vals = field.eval_many(&pts)?;
        if let Some(p) = &prev {
            let c = p.iter().zip(&vals).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = p.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            changes.push(c / scale);
        }
        factors.push(f);
        prev = Some(vals);
        f *= 0.5;
    }
    Ok(LatticeConvergence {
        probes,
        pitch_factors: factors,
        changes,
    })
}

/// `∫ g²` for several fields sharing one Whitney stencil per grid point.
pub fn whitney_fd_energies(
    space: &Space,
    net: &Net,
    fields: &[&DiscreteField],
    pitch_factor: f64,
    depth_cap: u32,
) -> Result<super::fd::FdEnergies> {
    let proj = WhitneyProjection::new(space, net, depth_cap)?;
    for u in fields {
        u.check_net(net.id(), net.len())?;
    }
    let grid = FdGrid::new(space, pitch_factor * net.r())?;
    fd_energies(space, &grid, fields.len(), |pts| {
        let st = whitney_stencils(&proj, pts);
        Ok(fields
            .iter()
            .map(|u| st.iter().map(|s| super::whitney::apply(s, &u.values)).collect())
            .collect())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::net::{build_full, NetOptions};
    use crate::space::{Bounds, Domain, Measure, Metric};

    fn square() -> Space {
        Space::new(
            Metric::Euclidean,
            Measure::Lebesgue,
            Bounds::new(Point::from([0.0, 0.0]), Point::from([1.0, 1.0])).unwrap(),
            Domain::Box(Bounds::new(Point::from([0.05, 0.05]), Point::from([0.95, 0.95])).unwrap()),
        )
        .unwrap()
    }

    fn compact_field(net: &Net, seed: u64) -> DiscreteField {
        let mut rng = rng::stream(seed, 5);
        let vals = net
            .interior
            .iter()
            .map(|inside| if *inside { 2.0 * rng.random::<f64>() - 1.0 } else { 0.0 })
            .collect();
        DiscreteField::new(net, vals).unwrap()
    }

    #[test]
    fn whitney_report_on_compact_field() {
        let s = square();
        let opts = NetOptions {
            margin_factor: 2.0,
            ..NetOptions::default()
        };
        let net = build_full(&s, 0.05, 0, &opts).unwrap();
        let g = build_graph(&s, &net);
        let u = compact_field(&net, 1);
        assert!(is_compactly_supported(&net, &u));
        let rep = verify_projection(&s, &g, &net, &u, ProjectionKind::Whitney, &VerifyOptions::default()).unwrap();
        assert!(rep.consistency_pass, "{rep:?}");
        assert!(rep.energy_ratio.unwrap() < 1e3, "{rep:?}");
        assert_eq!(rep.boundary_pass(), Some(true), "{rep:?}");
        let multi = whitney_fd_energies(&s, &net, &[&u], DEFAULT_FD_PITCH_FACTOR, 40).unwrap();
        assert_eq!(multi.grad_sq[0], rep.fd_grad_energy.unwrap());
    }

    #[test]
    fn constant_field_has_no_ratio() {
        let s = square();
        let net = build_full(&s, 0.1, 0, &NetOptions::default()).unwrap();
        let g = build_graph(&s, &net);
        let u = DiscreteField::new(&net, vec![1.0; net.len()]).unwrap();
        for kind in [ProjectionKind::Whitney, ProjectionKind::PathIntegral] {
            let rep = verify_projection(&s, &g, &net, &u, kind, &VerifyOptions::default()).unwrap();
            assert_eq!(rep.consistency_max_error, 0.0);
            assert_eq!(rep.energy_ratio, None);
            // normalized bump weights reproduce constants up to rounding
            assert!(rep.fd_grad_energy.unwrap() < 1e-20);
            assert!(rep.boundary.is_none());
        }
    }

    #[test]
    fn lipschitz_ratios_are_bounded() {
        let s = square();
        let net = build_full(&s, 0.1, 0, &NetOptions::default()).unwrap();
        let g = build_graph(&s, &net);
        // alternating signs in lexicographic order
        let vals = (0..net.len()).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let u = DiscreteField::new(&net, vals).unwrap();
        let rep = lipschitz_probe(&s, &g, &net, &u, 500, 7, 40).unwrap();
        assert!(rep.pass(), "{rep:?}");
        assert!(rep.pairs > 400);
        let c = DiscreteField::new(&net, vec![4.0; net.len()]).unwrap();
        let rep = lipschitz_probe(&s, &g, &net, &c, 100, 7, 40).unwrap();
        assert_eq!(rep.max_ratio, 0.0);
    }

    #[test]
    fn path_integral_upper_gradient_and_lattice_halving() {
        let s = square();
        let net = build_full(&s, 0.1, 0, &NetOptions::default()).unwrap();
        let g = build_graph(&s, &net);
        let vals = net.vertices().iter().map(|v| (3.0 * v.get(0)).sin() * v.get(1)).collect();
        let u = DiscreteField::new(&net, vals).unwrap();
        let opts = VerifyOptions {
            curves: 200,
            ..VerifyOptions::default()
        };
        let rep = verify_projection(&s, &g, &net, &u, ProjectionKind::PathIntegral, &opts).unwrap();
        assert!(rep.consistency_pass);
        let curves = rep.upper_gradient.unwrap();
        assert_eq!(curves.violations, 0, "{curves:?}");
        let lc = lattice_convergence(&s, &g, &net, &u, 100, 2, 3).unwrap();
        assert!(lc.changes[0] <= 0.05 && lc.changes[1] <= 0.025, "{lc:?}");
    }
}
