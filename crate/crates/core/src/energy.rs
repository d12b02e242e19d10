//! The boundary-data energy `E_r(v) = Σ_x̄ Σ_{ȳ~x̄} |(v+f)(ȳ) - (v+f)(x̄)|² / r² · μ_r({x̄})`
//! over fields `v` vanishing off `Ω_r`, as an explicit quadratic form
//! `vᵀ A v + bᵀ v + c0` (no factor ½ on `A`).

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};
use crate::graph::{build_graph, discretize_function, energy_values, graph_energy, DiscreteField, Graph};
use crate::net::{build_full, Net, NetOptions};
use crate::rng;
use crate::space::{Point, Space};
use crate::sparse::{dot, CsrMatrix};

#[derive(Clone, Debug)]
pub struct QuadraticForm {
    net_id: u64,
    vertex_count: usize,
    /// Vertex ids of `Ω_r`, increasing; unknown `k` lives on vertex `interior_ids[k]`.
    pub interior_ids: Vec<u32>,
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    /// `E_r(0)`, the energy of the boundary data alone.
    pub c0: f64,
    pub r: f64,
}

/// Expands the energy symbolically. For an ordered pair `(x, y)` with
/// `c = μ_r({x})/r²` and `d = f(y) - f(x)` the term `c (v_y - v_x + d)²`
/// feeds `c d²` into `c0`, `c` into each interior diagonal, `-c` into the
/// interior off-diagonals and `±2 c d` into `b`. Summing both orientations of
/// an edge gives the per-row closed forms used below, and every off-diagonal
/// entry is the same expression `-(μ_x + μ_y)/r²` on both sides.
pub fn assemble_form(graph: &Graph, net: &Net, f: &DiscreteField) -> Result<QuadraticForm> {
    graph.check_net(net)?;
    f.check_net(net.id(), net.len())?;
    if net.weights.len() != net.len() || net.interior.len() != net.len() {
        return usage("net weights and interior mask must be set before assembly");
    }
    let r2 = net.r() * net.r();
    let w = &net.weights;
    let fv = &f.values;
    let mut slot = vec![u32::MAX; net.len()];
    let mut interior_ids = Vec::new();
    for (i, inside) in net.interior.iter().enumerate() {
        if *inside {
            slot[i] = interior_ids.len() as u32;
            interior_ids.push(i as u32);
        }
    }
    let mut rows = Vec::with_capacity(interior_ids.len());
    let mut b = Vec::with_capacity(interior_ids.len());
    for (k, &x) in interior_ids.iter().enumerate() {
        let x = x as usize;
        let mut diag = 0.0;
        let mut bx = 0.0;
        let mut row: Vec<(u32, f64)> = Vec::with_capacity(graph.degree(x) + 1);
        let mut diag_at = None;
        for &y in graph.neighbors(x) {
            let y = y as usize;
            let pair = (w[x] + w[y]) / r2;
            diag += pair;
            bx += 2.0 * pair * (fv[x] - fv[y]);
            let sy = slot[y];
            if sy != u32::MAX {
                if diag_at.is_none() && sy > k as u32 {
                    diag_at = Some(row.len());
                    row.push((k as u32, 0.0));
                }
                row.push((sy, -pair));
            }
        }
        let at = diag_at.unwrap_or_else(|| {
            row.push((k as u32, 0.0));
            row.len() - 1
        });
        row[at].1 = diag;
        rows.push(row);
        b.push(bx);
    }
    let c0 = energy_values(graph, w, net.r(), fv);
    Ok(QuadraticForm {
        net_id: net.id(),
        vertex_count: net.len(),
        interior_ids,
        a: CsrMatrix::from_rows(rows),
        b,
        c0,
        r: net.r(),
    })
}

impl QuadraticForm {
    pub fn net_id(&self) -> u64 {
        self.net_id
    }

    pub fn unknowns(&self) -> usize {
        self.interior_ids.len()
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.unknowns() {
            return usage(format!(
                "vector has {} entries but the form has {} unknowns",
                v.len(),
                self.unknowns()
            ));
        }
        Ok(())
    }

    /// `vᵀ A v + bᵀ v + c0`.
    pub fn evaluate(&self, v: &[f64]) -> Result<f64> {
        self.check_len(v)?;
        Ok(self.eval_unchecked(v))
    }

    pub(crate) fn eval_unchecked(&self, v: &[f64]) -> f64 {
        let av = self.a.mul_vec(v);
        dot(v, &av) + dot(&self.b, v) + self.c0
    }

    /// `∇E(v) = 2 A v + b`.
    pub fn gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v)?;
        let mut g = self.a.mul_vec(v);
        for (gi, bi) in g.iter_mut().zip(&self.b) {
            *gi = 2.0 * *gi + bi;
        }
        Ok(g)
    }

    /// Zero extension of interior values to the whole net.
    pub fn extend(&self, v: &[f64]) -> Result<DiscreteField> {
        self.check_len(v)?;
        let mut values = vec![0.0; self.vertex_count];
        for (k, &id) in self.interior_ids.iter().enumerate() {
            values[id as usize] = v[k];
        }
        Ok(DiscreteField {
            net_id: self.net_id,
            values,
        })
    }

    /// Interior values of a net field.
    pub fn restrict(&self, u: &DiscreteField) -> Result<Vec<f64>> {
        u.check_net(self.net_id, self.vertex_count)?;
        Ok(self.interior_ids.iter().map(|&i| u.values[i as usize]).collect())
    }
}

/// Random interior vector with entries uniform in `[-scale, scale]`.
pub fn random_vector(n: usize, scale: f64, rng: &mut rng::Rng) -> Vec<f64> {
    (0..n).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoercivityTrial {
    pub scale: f64,
    /// Energy of the zero-extended `v` alone.
    pub energy_v: f64,
    /// Energy of the boundary data alone.
    pub energy_f: f64,
    /// `E_r(v)`, the energy of `v + f`.
    pub energy_total: f64,
    /// `E_r(v)^{1/2} - (energy_v^{1/2} - energy_f^{1/2})₊`.
    pub slack: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub trials: Vec<CoercivityTrial>,
    pub tolerance: f64,
    pub holds: bool,
}

/// Checks `E_r(v)^{1/2} ≥ (E(v)^{1/2} - E(f)^{1/2})₊` on random `v` of growing norm.
pub fn coercivity_report(
    form: &QuadraticForm,
    graph: &Graph,
    net: &Net,
    f: &DiscreteField,
    trials: usize,
    seed: u64,
) -> Result<CoercivityReport> {
    let energy_f = graph_energy(graph, net, f)?;
    let mut rng = rng::stream(seed, 0xC0E);
    let tolerance = 1e-10;
    let mut out = Vec::with_capacity(trials);
    let mut holds = true;
    for t in 0..trials {
        let scale = 10f64.powf(-2.0 + 6.0 * t as f64 / trials.max(2).saturating_sub(1).max(1) as f64);
        let v = random_vector(form.unknowns(), scale, &mut rng);
        let ext = form.extend(&v)?;
        let energy_v = graph_energy(graph, net, &ext)?;
        let energy_total = graph_energy(graph, net, &ext.add(f)?)?;
        let slack = energy_total.sqrt() - (energy_v.sqrt() - energy_f.sqrt()).max(0.0);
        if slack < -tolerance * (1.0 + energy_v.sqrt() + energy_f.sqrt()) {
            holds = false;
        }
        out.push(CoercivityTrial {
            scale,
            energy_v,
            energy_f,
            energy_total,
            slack,
        });
    }
    Ok(CoercivityReport {
        trials: out,
        tolerance,
        holds,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparabilityRow {
    pub r: f64,
    pub vertex_count: usize,
    pub energy: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparabilityReport {
    pub grad_energy: f64,
    pub rows: Vec<ComparabilityRow>,
    /// `max / min` of the ratios over the ladder (`NaN` when any ratio is 0).
    pub spread: f64,
    /// Some ratio left `[1e-3, 1e3]`.
    pub flagged: bool,
}

/// Boundary-free graph energy of `u_r` against `∫|∇u|² dμ` across a ladder.
#[allow(clippy::too_many_arguments)]
pub fn comparability_report(
    space: &Space,
    u: impl Fn(&Point) -> f64 + Sync,
    grad_energy: f64,
    r_ladder: &[f64],
    seed: u64,
    opts: &NetOptions,
    quad_n: usize,
) -> Result<ComparabilityReport> {
    let mut rows = Vec::with_capacity(r_ladder.len());
    for &r in r_ladder {
        let net = build_full(space, r, seed, opts)?;
        let graph = build_graph(space, &net);
        let ur = discretize_function(space, &net, &u, quad_n, seed)?;
        let energy = graph_energy(&graph, &net, &ur)?;
        let ratio = if grad_energy > 0.0 { energy / grad_energy } else { 0.0 };
        rows.push(ComparabilityRow {
            r,
            vertex_count: net.len(),
            energy,
            ratio,
        });
    }
    Ok(summarize_comparability(grad_energy, rows))
}

pub fn summarize_comparability(grad_energy: f64, rows: Vec<ComparabilityRow>) -> ComparabilityReport {
    let max = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    let spread = if min > 0.0 { max / min } else { f64::NAN };
    let flagged = grad_energy > 0.0 && rows.iter().any(|r| !(1e-3..=1e3).contains(&r.ratio));
    ComparabilityReport {
        grad_energy,
        rows,
        spread,
        flagged,
    }
}
