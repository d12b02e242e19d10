//! r-sweeps of the full pipeline with error and constant bookkeeping.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{mazya_constant, ProbeGrid};
use crate::config::CheckConfig;
use crate::energy::assemble_form;
use crate::error::Result;
use crate::graph::{build_graph, discretize_function, graph_energy, DiscreteField, Graph};
use crate::net::{build_full, Net, NetOptions};
use crate::project::fd::{fd_energies, FdGrid};
use crate::project::verify::{consistency_error, exterior_probes, CONSISTENCY_TOL};
use crate::project::{ProjectedField, ProjectionKind, ProjectionOptions};
use crate::rng;
use crate::solver::{solve, SolveStatus, SolverOptions};
use crate::space::{ScalarFunction, Space};

pub const REPORT_VERSION: u32 = 1;

/// Slack allowed in `E_r(ū) ≤ E_r(0)`, relative to `max(1, E_r(0))`.
pub const MINIMALITY_SLACK: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct ConvergenceOptions {
    pub name: String,
    pub net: NetOptions,
    pub seed: u64,
    pub solver: SolverOptions,
    pub projection: ProjectionOptions,
    pub kinds: Vec<ProjectionKind>,
    pub checks: CheckConfig,
    /// Estimate `∫ g²` and `∫ P²` of the Whitney projection of `ū`.
    pub fd: bool,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        ConvergenceOptions {
            name: String::new(),
            net: NetOptions::default(),
            seed: 0,
            solver: SolverOptions::default(),
            projection: ProjectionOptions::default(),
            kinds: vec![ProjectionKind::Whitney, ProjectionKind::PathIntegral],
            checks: CheckConfig::default(),
            fd: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub net_ms: f64,
    pub graph_ms: f64,
    pub form_ms: f64,
    pub solve_ms: f64,
    pub project_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRecord {
    pub kind: ProjectionKind,
    pub consistency_max_error: f64,
    pub consistency_pass: bool,
    pub boundary_probes: usize,
    pub boundary_nonzero: usize,
    /// `‖P ū + f − reference‖_{L²(X)}` on the probe grid.
    pub l2_error: Option<f64>,
    pub sup_error: Option<f64>,
    pub fd_l2_sq: Option<f64>,
    pub fd_grad_sq: Option<f64>,
    /// `(∫ P² + ∫ g²)^{1/2}`.
    pub n12_norm: Option<f64>,
    /// `∫ g² / graph_energy(ū)`.
    pub energy_ratio: Option<f64>,
    pub diagnostics: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RungRecord {
    pub r: f64,
    pub vertex_count: usize,
    pub interior_count: usize,
    pub edge_count: usize,
    pub max_degree: usize,
    pub solve_iterations: usize,
    pub solve_status: Option<SolveStatus>,
    pub relative_residual: f64,
    /// `E_r(ū)`.
    pub energy_minimizer: f64,
    /// `E_r(0)`.
    pub energy_zero: f64,
    pub graph_energy_minimizer: f64,
    pub graph_energy_boundary: f64,
    pub minimality: bool,
    /// `graph_energy(f_r) / ∫|∇f|²` when the latter has a closed form.
    pub comparability: Option<f64>,
    pub mazya_constant: Option<f64>,
    pub projections: Vec<ProjectionRecord>,
    pub error: Option<String>,
    pub times: StageTimes,
}

impl RungRecord {
    fn empty(r: f64) -> Self {
        RungRecord {
            r,
            vertex_count: 0,
            interior_count: 0,
            edge_count: 0,
            max_degree: 0,
            solve_iterations: 0,
            solve_status: None,
            relative_residual: f64::NAN,
            energy_minimizer: f64::NAN,
            energy_zero: f64::NAN,
            graph_energy_minimizer: f64::NAN,
            graph_energy_boundary: f64::NAN,
            minimality: false,
            comparability: None,
            mazya_constant: None,
            projections: Vec::new(),
            error: None,
            times: StageTimes::default(),
        }
    }

    pub fn projection(&self, kind: ProjectionKind) -> Option<&ProjectionRecord> {
        self.projections.iter().find(|p| p.kind == kind)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub solver_tol: f64,
    pub consistency: f64,
    pub minimality_slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rungs_completed: usize,
    pub minimality_all: bool,
    pub consistency_all: bool,
    /// Largest Whitney `∫ g² / graph_energy(ū)` over the ladder.
    pub max_energy_ratio: Option<f64>,
    pub max_mazya_constant: Option<f64>,
    /// Every Whitney N^{1,2} surrogate norm is below 10× its value at the coarsest rung.
    pub n12_bounded: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub report_version: u32,
    pub name: String,
    pub space_hash: String,
    pub net_seed: u64,
    pub check_seed: u64,
    pub tolerances: Tolerances,
    pub ladder: Vec<f64>,
    pub doubling_constant: Option<f64>,
    pub records: Vec<RungRecord>,
    pub summary: Summary,
}

impl ExperimentReport {
    /// A copy with wall-clock fields zeroed, for reproducibility comparisons.
    pub fn without_timings(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.records {
            r.times = StageTimes::default();
        }
        out
    }
}

pub fn space_hash(space: &Space) -> String {
    hex::encode(Sha256::digest(format!("{space:?}").as_bytes()))
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs net → graph → form → solve → project at every rung. Failures at a
/// rung are recorded in its `error` field and the sweep continues.
pub fn run_convergence(
    space: &Space,
    f: &ScalarFunction,
    ladder: &[f64],
    opts: &ConvergenceOptions,
) -> Result<ExperimentReport> {
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] >= w[0]) {
        return crate::error::usage("the r ladder must be non-empty and strictly decreasing");
    }
    let r_min = *ladder.last().expect("non-empty");
    let probes = match space.reference() {
        Some(_) if space.metric().is_euclidean_chart() => Some(ProbeGrid::new(space, r_min / 4.0)?),
        _ => None,
    };
    let mut records = Vec::with_capacity(ladder.len());
    for &r in ladder {
        let mut rec = RungRecord::empty(r);
        if let Err(e) = run_rung(space, f, r, opts, probes.as_ref(), &mut rec) {
            log::warn!("rung r = {r}: {e}");
            rec.error = Some(e.to_string());
        }
        records.push(rec);
    }
    let doubling = space
        .doubling_constant(r_min, space.diameter() / 4.0, 4, 16, opts.seed)
        .ok();
    let summary = summarize(&records);
    Ok(ExperimentReport {
        report_version: REPORT_VERSION,
        name: opts.name.clone(),
        space_hash: space_hash(space),
        net_seed: opts.seed,
        check_seed: opts.checks.seed,
        tolerances: Tolerances {
            solver_tol: opts.solver.tol,
            consistency: CONSISTENCY_TOL,
            minimality_slack: MINIMALITY_SLACK,
        },
        ladder: ladder.to_vec(),
        doubling_constant: doubling,
        records,
        summary,
    })
}

/// Geometric ladder of four rungs with ratio 1/2. Without `start` it begins
/// at the largest dyadic fraction of the inradius bound with nonempty `Ω_r`.
pub fn default_ladder(space: &Space, net: &NetOptions, seed: u64, start: Option<f64>) -> Result<Vec<f64>> {
    let r0 = match start {
        Some(r) => r,
        None => {
            let grid = ProbeGrid::new(space, space.diameter() / 64.0)?;
            let inradius = grid.points.iter().map(|p| space.domain_margin(p)).fold(0.0f64, f64::max);
            if inradius <= 0.0 {
                return crate::error::usage("the domain has no interior");
            }
            let mut r = inradius / net.margin_factor.max(1.0);
            let mut found = None;
            for _ in 0..20 {
                if build_full(space, r, seed, net)?.interior_count() > 0 {
                    found = Some(r);
                    break;
                }
                r *= 0.5;
            }
            match found {
                Some(r) => r,
                None => return crate::error::usage("no scale with nonempty interior vertex set"),
            }
        }
    };
    Ok((0..4).map(|k| r0 / f64::from(1u32 << k)).collect())
}

fn summarize(records: &[RungRecord]) -> Summary {
    let done: Vec<&RungRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let whitney = |r: &RungRecord| r.projection(ProjectionKind::Whitney).cloned();
    let ratios: Vec<f64> = done.iter().filter_map(|r| whitney(r)?.energy_ratio).collect();
    let mazya: Vec<f64> = done.iter().filter_map(|r| r.mazya_constant).collect();
    let n12: Vec<f64> = done.iter().filter_map(|r| whitney(r)?.n12_norm).collect();
    Summary {
        rungs_completed: done.len(),
        minimality_all: done.iter().all(|r| r.minimality),
        consistency_all: done.iter().all(|r| r.projections.iter().all(|p| p.consistency_pass)),
        max_energy_ratio: ratios.iter().copied().reduce(f64::max),
        max_mazya_constant: mazya.iter().copied().reduce(f64::max),
        n12_bounded: n12.first().map(|first| n12.iter().all(|v| *v <= 10.0 * first)),
    }
}

fn run_rung(
    space: &Space,
    f: &ScalarFunction,
    r: f64,
    opts: &ConvergenceOptions,
    probes: Option<&ProbeGrid>,
    rec: &mut RungRecord,
) -> Result<()> {
    let checks = &opts.checks;
    let t = Instant::now();
    let net = build_full(space, r, opts.seed, &opts.net)?;
    rec.times.net_ms = ms(t);
    rec.vertex_count = net.len();
    rec.interior_count = net.interior_count();

    let t = Instant::now();
    let graph = build_graph(space, &net);
    rec.times.graph_ms = ms(t);
    rec.edge_count = graph.edge_count();
    rec.max_degree = graph.max_degree();

    let t = Instant::now();
    let fr = discretize_function(space, &net, |p| f.eval(p), checks.quad_n, opts.seed)?;
    let form = assemble_form(&graph, &net, &fr)?;
    rec.times.form_ms = ms(t);

    let t = Instant::now();
    let sol = solve(&form, &opts.solver)?;
    rec.times.solve_ms = ms(t);
    rec.solve_iterations = sol.iterations;
    rec.solve_status = Some(sol.status);
    rec.relative_residual = sol.relative_residual;
    rec.energy_minimizer = sol.energy_value;
    rec.energy_zero = form.c0;
    rec.minimality = sol.energy_value <= form.c0 + MINIMALITY_SLACK * form.c0.abs().max(1.0);
    rec.graph_energy_minimizer = graph_energy(&graph, &net, &sol.minimizer)?;
    rec.graph_energy_boundary = graph_energy(&graph, &net, &fr)?;
    rec.comparability = f
        .gradient_energy(space)
        .filter(|g| *g > 0.0)
        .map(|g| rec.graph_energy_boundary / g);
    rec.mazya_constant = mazya_constant(&graph, &net, space, checks.fields, rng::mix(checks.seed, r.to_bits()))?;

    let t = Instant::now();
    for &kind in &opts.kinds {
        if kind == ProjectionKind::Whitney && !space.metric().is_euclidean_chart() {
            continue;
        }
        rec.projections
            .push(project_record(space, &graph, &net, &sol.minimizer, f, kind, opts, probes)?);
    }
    rec.times.project_ms = ms(t);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn project_record(
    space: &Space,
    graph: &Graph,
    net: &Net,
    u: &DiscreteField,
    f: &ScalarFunction,
    kind: ProjectionKind,
    opts: &ConvergenceOptions,
    probes: Option<&ProbeGrid>,
) -> Result<ProjectionRecord> {
    let checks = &opts.checks;
    let field = ProjectedField::new(space, graph, net, u, kind, &opts.projection)?;
    let seed = rng::mix(checks.seed, net.r().to_bits());
    let consistency = consistency_error(space, net, &field, u, checks.quad_n, seed)?;
    let ext = exterior_probes(space, checks.probes, rng::mix(seed, 2));
    let ext_vals = field.eval_many(&ext)?;

    let (mut l2, mut sup) = (None, None);
    if let (Some(grid), Some(reference)) = (probes, space.reference()) {
        let vals = field.eval_many(&grid.points)?;
        let mut acc = 0.0;
        let mut worst = 0.0f64;
        for ((p, v), w) in grid.points.iter().zip(&vals).zip(&grid.weights) {
            let e = v + f.eval(p) - reference.eval(p);
            acc += w * e * e;
            worst = worst.max(e.abs());
        }
        l2 = Some(acc.sqrt());
        sup = Some(worst);
    }

    let (mut l2sq, mut g2) = (None, None);
    if opts.fd && kind == ProjectionKind::Whitney && space.metric().is_euclidean_chart() {
        let grid = FdGrid::new(space, checks.fd_pitch_factor * net.r())?;
        let e = fd_energies(space, &grid, 1, |pts| Ok(vec![field.eval_many(pts)?]))?;
        l2sq = Some(e.l2_sq[0]);
        g2 = Some(e.grad_sq[0]);
    }
    let ge = graph_energy(graph, net, u)?;
    Ok(ProjectionRecord {
        kind,
        consistency_max_error: consistency,
        consistency_pass: consistency <= CONSISTENCY_TOL,
        boundary_probes: ext.len(),
        boundary_nonzero: ext_vals.iter().filter(|v| **v != 0.0).count(),
        l2_error: l2,
        sup_error: sup,
        fd_l2_sq: l2sq,
        fd_grad_sq: g2,
        n12_norm: l2sq.zip(g2).map(|(a, b)| (a + b).sqrt()),
        energy_ratio: g2.filter(|_| ge > 0.0).map(|g| g / ge),
        diagnostics: field.diagnostics(),
    })
}
