//! Module invariants at one scale, collected into a pass/fail table.

use serde::{Deserialize, Serialize};

use super::{mazya_constant, random_compact_fields};
use crate::config::RunConfig;
use crate::energy::{assemble_form, coercivity_report, random_vector, QuadraticForm};
use crate::error::Result;
use crate::graph::{build_graph, build_graph_brute_force, discretize_function, graph_energy, DiscreteField, Graph};
use crate::net::{build_full, covering_certificate, min_separation, Net};
use crate::project::verify::{lattice_convergence, lipschitz_probe, verify_projection, VerifyOptions};
use crate::project::ProjectionKind;
use crate::rng;
use crate::solver::{connectivity_check, dense_solve, optimality_check, solve, SolveStatus};
use crate::space::Space;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    /// Hard checks count towards the exit status; the rest are diagnostics.
    pub asserted: bool,
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub r: f64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn hard_failures(&self) -> usize {
        self.checks
            .iter()
            .filter(|c| c.asserted && c.status == CheckStatus::Fail)
            .count()
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Plain-text table, one check per line.
    pub fn table(&self) -> String {
        let mut out = format!("{:<40} {:<8} {:<9} {:>14}  detail\n", "check", "status", "kind", "value");
        for c in &self.checks {
            let status = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Skipped => "SKIP",
            };
            let kind = if c.asserted { "asserted" } else { "reported" };
            let value = c.value.map(|v| format!("{v:.6e}")).unwrap_or_default();
            out.push_str(&format!("{:<40} {:<8} {:<9} {:>14}  {}\n", c.name, status, kind, value, c.detail));
        }
        out
    }
}

/// Deliberate corruption used to check that the suite notices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Negates the weight of vertex 0 after the net is built.
    NegativeWeight,
    /// Perturbs one off-diagonal entry of the assembled matrix.
    AsymmetricForm,
}

struct Table {
    checks: Vec<Check>,
}

impl Table {
    fn push(&mut self, name: &str, asserted: bool, ok: bool, value: Option<f64>, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            asserted,
            value,
            detail: detail.into(),
        });
    }

    fn skip(&mut self, name: &str, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            status: CheckStatus::Skipped,
            asserted: false,
            value: None,
            detail: detail.into(),
        });
    }

    fn error(&mut self, name: &str, e: &crate::Error) {
        self.push(name, true, false, None, format!("error: {e}"));
    }
}

/// Runs every module check at scale `cfg.r()`.
pub fn verify_suite(cfg: &RunConfig, fault: Option<Fault>) -> Result<SuiteReport> {
    let space = cfg.build_space()?;
    let r = cfg.r()?;
    let mut t = Table { checks: Vec::new() };
    let mut net = build_full(&space, r, cfg.net.seed, &cfg.net_options())?;
    if fault == Some(Fault::NegativeWeight) && !net.weights.is_empty() {
        net.weights[0] = -net.weights[0];
    }
    if let Err(e) = run_checks(&mut t, cfg, &space, &net, fault) {
        t.push("suite.completed", true, false, None, format!("aborted: {e}"));
    }
    Ok(SuiteReport {
        name: cfg.name.clone(),
        r,
        checks: t.checks,
    })
}

fn run_checks(t: &mut Table, cfg: &RunConfig, space: &Space, net: &Net, fault: Option<Fault>) -> Result<()> {
    let checks = &cfg.checks;
    let seed = checks.seed;
    let r = net.r();

    // net
    let sep = min_separation(space, net);
    t.push("net.separation", true, sep >= r, Some(sep), format!("min distance vs r = {r}"));
    let cert = covering_certificate(space, net, checks.probes.max(1000), seed);
    t.push(
        "net.covering",
        true,
        cert.uncovered == 0,
        Some(cert.max_nearest_distance),
        format!("{} of {} probes uncovered", cert.uncovered, cert.probes),
    );
    let bad = net.weights.iter().filter(|w| !(**w > 0.0) || !w.is_finite()).count();
    t.push("net.weights_positive", true, bad == 0, Some(bad as f64), "vertices with non-positive weight");
    t.push(
        "net.interior_nonempty",
        false,
        net.interior_count() > 0,
        Some(net.interior_count() as f64),
        "vertices of Ω_r",
    );

    // graph
    let graph = build_graph(space, net);
    if net.len() <= 20_000 {
        let brute = build_graph_brute_force(space, net);
        let same = (0..net.len()).all(|i| graph.neighbors(i) == brute.neighbors(i));
        t.push("graph.matches_brute_force", true, same, Some(graph.edge_count() as f64), "edges");
    } else {
        t.skip("graph.matches_brute_force", "net too large");
    }
    let conn = connectivity_check(&graph, net)?;
    t.push(
        "graph.components_anchored",
        true,
        !conn.singular,
        Some(conn.components.len() as f64),
        "components",
    );

    // boundary data and form
    let f = &cfg.space.boundary;
    let fr = discretize_function(space, net, |p| f.eval(p), checks.quad_n, seed)?;
    let mut form = assemble_form(&graph, net, &fr)?;
    if fault == Some(Fault::AsymmetricForm) {
        form = corrupt(form);
    }
    t.push("form.symmetric", true, form.a.is_symmetric(), Some(form.a.nnz() as f64), "nonzeros");
    form_checks(t, &form, &graph, net, &fr, checks.trials, seed);
    match coercivity_report(&form, &graph, net, &fr, checks.trials, seed) {
        Ok(c) => {
            let worst = c.trials.iter().map(|x| x.slack).fold(f64::INFINITY, f64::min);
            t.push("energy.coercivity_chain", true, c.holds, Some(worst), "smallest slack")
        }
        Err(e) => t.error("energy.coercivity_chain", &e),
    }

    // solver
    let sol = match solve(&form, &cfg.solver_options()) {
        Ok(s) => s,
        Err(e) => {
            t.error("solver.converged", &e);
            return Ok(());
        }
    };
    t.push(
        "solver.converged",
        true,
        sol.status == SolveStatus::Converged,
        Some(sol.relative_residual),
        format!("{} iterations", sol.iterations),
    );
    if form.unknowns() <= checks.dense_limit && form.unknowns() > 0 {
        match dense_solve(&form) {
            Ok(d) => {
                let num: f64 = d.iter().zip(&sol.interior).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let den = d.iter().map(|a| a * a).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                let rel = num / den;
                t.push("solver.matches_dense", true, rel <= 1e-8, Some(rel), "relative difference");
            }
            Err(e) => t.error("solver.matches_dense", &e),
        }
    } else {
        t.skip("solver.matches_dense", format!("{} unknowns", form.unknowns()));
    }
    let opt = optimality_check(&form, &sol, checks.trials, seed)?;
    t.push(
        "solver.optimality",
        true,
        opt.all_passed(),
        Some(opt.min_gain),
        format!("{}/{} perturbations", opt.passed, opt.trials),
    );
    let slack = 1e-12 * form.c0.abs().max(1.0);
    t.push(
        "solver.minimality",
        true,
        sol.energy_value <= form.c0 + slack,
        Some(sol.energy_value - form.c0),
        "E(ū) − E(0)",
    );

    // Maz'ya
    match mazya_constant(&graph, net, space, checks.fields, seed)? {
        Some(c) => t.push("harness.mazya_constant", false, c.is_finite(), Some(c), "Σu²μ / energy"),
        None => t.skip("harness.mazya_constant", "Ω_r is empty"),
    }

    projection_checks(t, cfg, space, &graph, net, &sol.minimizer)
}

fn corrupt(mut form: QuadraticForm) -> QuadraticForm {
    let mut rows: Vec<Vec<(u32, f64)>> = (0..form.a.n())
        .map(|i| {
            let (c, v) = form.a.row(i);
            c.iter().copied().zip(v.iter().copied()).collect()
        })
        .collect();
    if let Some(row) = rows.iter_mut().find(|r| r.len() > 1) {
        let i = row.iter().position(|(c, _)| row[0].0 != *c).unwrap_or(1);
        row[i].1 += 1.0;
    }
    form.a = crate::sparse::CsrMatrix::from_rows(rows);
    form
}

fn form_checks(t: &mut Table, form: &QuadraticForm, graph: &Graph, net: &Net, fr: &DiscreteField, trials: usize, seed: u64) {
    let n = form.unknowns();
    if n == 0 {
        t.skip("form.matches_direct_energy", "no unknowns");
        t.skip("form.gradient_finite_difference", "no unknowns");
        return;
    }
    let mut rng = rng::stream(seed, 0xF0);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let v = random_vector(n, 1.0, &mut rng);
        let direct = form
            .extend(&v)
            .and_then(|e| e.add(fr))
            .and_then(|u| graph_energy(graph, net, &u));
        match (form.evaluate(&v), direct) {
            (Ok(a), Ok(b)) => worst = worst.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE)),
            _ => worst = f64::INFINITY,
        }
    }
    t.push("form.matches_direct_energy", true, worst <= 1e-10, Some(worst), "relative gap");

    let v = random_vector(n, 1.0, &mut rng);
    let grad = match form.gradient(&v) {
        Ok(g) => g,
        Err(e) => return t.error("form.gradient_finite_difference", &e),
    };
    let mut gworst = 0.0f64;
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs())).max(f64::MIN_POSITIVE);
    for k in (0..n).step_by((n / 16).max(1)) {
        let h = 1e-4;
        let mut vp = v.clone();
        let mut vm = v.clone();
        vp[k] += h;
        vm[k] -= h;
        let fd = (form.evaluate(&vp).unwrap_or(f64::NAN) - form.evaluate(&vm).unwrap_or(f64::NAN)) / (2.0 * h);
        let e = (fd - grad[k]).abs() / scale;
        gworst = if e.is_nan() { f64::INFINITY } else { gworst.max(e) };
    }
    t.push("form.gradient_finite_difference", true, gworst <= 1e-6, Some(gworst), "relative gap");
}

fn projection_checks(t: &mut Table, cfg: &RunConfig, space: &Space, graph: &Graph, net: &Net, ubar: &DiscreteField) -> Result<()> {
    let checks = &cfg.checks;
    let euclid = space.metric().is_euclidean_chart();
    // boundary vanishing is only exact when ḡ vanishes near X \ Ω
    let vanishing_asserted = cfg.net.margin_factor >= 8.0;
    let mut fields = vec![ubar.clone()];
    fields.extend(random_compact_fields(space, net, 2, rng::mix(checks.seed, 9)));
    for kind in [ProjectionKind::Whitney, ProjectionKind::PathIntegral] {
        let prefix = format!("project.{}", kind.name());
        if kind == ProjectionKind::Whitney && !euclid {
            t.skip(&format!("{prefix}.consistency"), "Whitney projection needs a Euclidean chart");
            t.skip(&format!("{prefix}.boundary_vanishing"), "Whitney projection needs a Euclidean chart");
            t.skip("project.whitney.lipschitz", "Whitney projection needs a Euclidean chart");
            continue;
        }
        let opts = VerifyOptions {
            probes: checks.probes,
            seed: checks.seed,
            quad_n: checks.quad_n,
            fd_pitch_factor: None,
            curves: if kind == ProjectionKind::PathIntegral { 100 } else { 0 },
            projection: cfg.projection_options(),
        };
        let mut cons = 0.0f64;
        let mut nonzero = 0usize;
        let mut probes = 0usize;
        let mut curve_violations = 0usize;
        let mut err = None;
        for u in &fields {
            match verify_projection(space, graph, net, u, kind, &opts) {
                Ok(rep) => {
                    cons = cons.max(rep.consistency_max_error);
                    if let Some(b) = rep.boundary {
                        nonzero += b.nonzero;
                        probes += b.probes;
                    }
                    if let Some(c) = rep.upper_gradient {
                        curve_violations += c.violations;
                    }
                }
                Err(e) => err = Some(e),
            }
        }
        if let Some(e) = err {
            t.error(&format!("{prefix}.consistency"), &e);
            continue;
        }
        t.push(&format!("{prefix}.consistency"), true, cons <= 1e-8, Some(cons), "max ball-average gap");
        t.push(
            &format!("{prefix}.boundary_vanishing"),
            vanishing_asserted,
            nonzero == 0,
            Some(nonzero as f64),
            format!("nonzero values at {probes} exterior probes"),
        );
        if kind == ProjectionKind::PathIntegral {
            t.push(
                "project.path_integral.upper_gradient",
                false,
                curve_violations == 0,
                Some(curve_violations as f64),
                "segments with |ΔP| > 1.05 ∫ḡ",
            );
        }
    }
    if euclid {
        let rep = lipschitz_probe(space, graph, net, &fields[1.min(fields.len() - 1)], checks.lipschitz_pairs, checks.seed, cfg.project.cube_depth_cap)?;
        let ok = rep.violations == 0 && rep.max_ratio <= checks.lipschitz_cap;
        t.push(
            "project.whitney.lipschitz",
            true,
            ok,
            Some(rep.max_ratio),
            format!("cap {}, {} pairs", checks.lipschitz_cap, rep.pairs),
        );
        if ubar.max_abs() > 0.0 {
            match lattice_convergence(space, graph, net, ubar, 100, 2, checks.seed) {
                Ok(lc) => {
                    let ok = lc.changes[0] <= 0.05 && lc.changes[1] <= 0.025;
                    t.push(
                        "project.path_integral.lattice_halving",
                        false,
                        ok,
                        lc.changes.iter().copied().reduce(f64::max),
                        format!("relative changes {:?}", lc.changes),
                    );
                }
                Err(e) => t.skip("project.path_integral.lattice_halving", e.to_string()),
            }
        }
    }
    Ok(())
}
