//! Minimization of the assembled form over fields vanishing off `Ω_r`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::energy::{random_vector, QuadraticForm};
use crate::error::{Error, Result};
use crate::graph::{DiscreteField, Graph};
use crate::net::Net;
use crate::rng;
use crate::sparse::{dot, norm};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComponentInfo {
    /// Vertex ids of the component, increasing.
    pub vertices: Vec<u32>,
    /// Some member has an exterior neighbor.
    pub anchored: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub components: Vec<ComponentInfo>,
    /// Some component is unanchored, so constants on it lie in the kernel of `A`.
    pub singular: bool,
}

/// Connected components of the interior subgraph and whether each one
/// touches an exterior vertex.
pub fn connectivity_check(graph: &Graph, net: &Net) -> Result<ConnectivityReport> {
    graph.check_net(net)?;
    let n = net.len();
    if net.interior.len() != n {
        return Err(Error::Usage("interior mask has not been set".into()));
    }
    let mut seen = vec![false; n];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if !net.interior[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut vertices = Vec::new();
        let mut anchored = false;
        while let Some(x) = stack.pop() {
            vertices.push(x as u32);
            for &y in graph.neighbors(x) {
                let y = y as usize;
                if !net.interior[y] {
                    anchored = true;
                } else if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        vertices.sort_unstable();
        components.push(ComponentInfo { vertices, anchored });
    }
    let singular = components.iter().any(|c| !c.anchored);
    Ok(ConnectivityReport { components, singular })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    IndefiniteDetected,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    /// `None` selects `20 √n + 200`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

impl SolverOptions {
    pub fn max_iter_for(&self, n: usize) -> usize {
        self.max_iter
            .unwrap_or_else(|| (20.0 * (n as f64).sqrt()).ceil() as usize + 200)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveResult {
    /// `ū[r]` on the whole net, zero off `Ω_r`.
    pub minimizer: DiscreteField,
    /// Interior values of the minimizer.
    pub interior: Vec<f64>,
    pub iterations: usize,
    /// `‖2Aū + b‖ / ‖b‖`, or `0` when `b = 0`.
    pub relative_residual: f64,
    pub energy_value: f64,
    pub status: SolveStatus,
    /// Form value after every iteration when requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_trace: Option<Vec<f64>>,
}

/// Jacobi-preconditioned conjugate gradients on `2Aū = -b`.
pub fn solve(form: &QuadraticForm, opts: &SolverOptions) -> Result<SolveResult> {
    run_cg(form, opts, false)
}

/// As [`solve`], also recording the form value at every iterate.
pub fn solve_with_trace(form: &QuadraticForm, opts: &SolverOptions) -> Result<SolveResult> {
    run_cg(form, opts, true)
}

fn run_cg(form: &QuadraticForm, opts: &SolverOptions, trace: bool) -> Result<SolveResult> {
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return Err(Error::Usage("solver tolerance must lie in (0, 1)".into()));
    }
    let n = form.unknowns();
    let max_iter = opts.max_iter_for(n);
    let bnorm = norm(&form.b);
    let mut x = vec![0.0; n];
    let mut energies = trace.then(|| vec![form.c0]);
    let finish = |x: Vec<f64>, iterations: usize, res: f64, status: SolveStatus, energies: Option<Vec<f64>>| {
        let energy_value = form.eval_unchecked(&x);
        Ok(SolveResult {
            minimizer: form.extend(&x)?,
            interior: x,
            iterations,
            relative_residual: res,
            energy_value,
            status,
            energy_trace: energies,
        })
    };
    if bnorm == 0.0 {
        return finish(x, 0, 0.0, SolveStatus::Converged, energies);
    }
    // residual of 2A x = -b
    let mut res: Vec<f64> = form.b.iter().map(|b| -b).collect();
    let inv_diag: Vec<f64> = form
        .a
        .diagonal()
        .iter()
        .map(|d| if *d > 0.0 { 1.0 / (2.0 * d) } else { 1.0 })
        .collect();
    let mut z: Vec<f64> = res.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut rz = dot(&res, &z);
    let mut ap = vec![0.0; n];
    let mut rel = norm(&res) / bnorm;
    for it in 1..=max_iter {
        form.a.mul_vec_into(&p, &mut ap);
        ap.iter_mut().for_each(|v| *v *= 2.0);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return finish(x, it - 1, rel, SolveStatus::IndefiniteDetected, energies);
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            res[i] -= alpha * ap[i];
        }
        if let Some(e) = energies.as_mut() {
            e.push(form.eval_unchecked(&x));
        }
        rel = norm(&res) / bnorm;
        if rel <= opts.tol {
            // report the true residual rather than the recurrence
            let g = form.gradient(&x)?;
            return finish(x, it, norm(&g) / bnorm, SolveStatus::Converged, energies);
        }
        for i in 0..n {
            z[i] = res[i] * inv_diag[i];
        }
        let rz_next = dot(&res, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let g = form.gradient(&x)?;
    finish(x, max_iter, norm(&g) / bnorm, SolveStatus::MaxIterations, energies)
}

/// Dense Cholesky solve of `2Aū = -b`, the reference for [`solve`].
pub fn dense_solve(form: &QuadraticForm) -> Result<Vec<f64>> {
    let n = form.unknowns();
    if n == 0 {
        return Ok(Vec::new());
    }
    let a2 = form.a.to_dense() * 2.0;
    let chol = nalgebra::Cholesky::new(a2)
        .ok_or_else(|| Error::Numerical("form matrix is not positive definite".into()))?;
    let rhs = nalgebra::DVector::from_iterator(n, form.b.iter().map(|b| -b));
    Ok(chol.solve(&rhs).iter().copied().collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub trials: usize,
    pub passed: usize,
    /// Smallest `E(ū + δ) - E(ū)` seen.
    pub min_gain: f64,
    /// `‖2Aū + b‖`.
    pub stationarity_residual: f64,
}

impl OptimalityReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.trials
    }
}

/// Random perturbations of mixed scale `1e-3 … 1` never lower the energy.
pub fn optimality_check(form: &QuadraticForm, result: &SolveResult, trials: usize, seed: u64) -> Result<OptimalityReport> {
    let u = &result.interior;
    let e0 = form.evaluate(u)?;
    let mut rng = rng::stream(seed, 0x0B7);
    let mut passed = 0;
    let mut min_gain = f64::INFINITY;
    for _ in 0..trials {
        let scale = 10f64.powf(-3.0 * rng.random::<f64>());
        let delta = random_vector(u.len(), scale, &mut rng);
        let v: Vec<f64> = u.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let gain = form.evaluate(&v)? - e0;
        min_gain = min_gain.min(gain);
        if gain >= -1e-9 * (1.0 + e0.abs()) {
            passed += 1;
        }
    }
    Ok(OptimalityReport {
        trials,
        passed,
        min_gain,
        stationarity_residual: norm(&form.gradient(u)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::assemble_form;
    use crate::graph::{build_graph, discretize_function};
    use crate::net::{build_full, NetOptions};
    use crate::space::{Bounds, Domain, Measure, Metric, Point, Space};

    fn toy() -> (Net, Graph, QuadraticForm) {
        let s = Space::new(
            Metric::Euclidean,
            Measure::Lebesgue,
            Bounds::new(Point::from([-1.0]), Point::from([3.0])).unwrap(),
            Domain::Box(Bounds::new(Point::from([-0.5]), Point::from([0.5])).unwrap()),
        )
        .unwrap();
        let mut net = Net::from_vertices(&s, 1.0, vec![Point::from([0.0]), Point::from([1.0])]).unwrap();
        net.weights = vec![1.0, 1.0];
        net.interior = vec![true, false];
        let g = build_graph(&s, &net);
        let f = DiscreteField::new(&net, vec![0.0, 1.0]).unwrap();
        let q = assemble_form(&g, &net, &f).unwrap();
        (net, g, q)
    }

    fn chain(f: impl Fn(&Point) -> f64 + Sync) -> (Net, Graph, QuadraticForm) {
        let s = Space::new(
            Metric::Euclidean,
            Measure::Lebesgue,
            Bounds::new(Point::from([0.0]), Point::from([3.0])).unwrap(),
            Domain::Box(Bounds::new(Point::from([0.5]), Point::from([2.5])).unwrap()),
        )
        .unwrap();
        let net = build_full(&s, 0.01, 0, &NetOptions::default()).unwrap();
        let g = build_graph(&s, &net);
        let fr = discretize_function(&s, &net, f, 8, 0).unwrap();
        let q = assemble_form(&g, &net, &fr).unwrap();
        (net, g, q)
    }

    #[test]
    fn toy_minimizer() {
        let (_, _, q) = toy();
        let res = solve(&q, &SolverOptions::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Converged);
        assert_eq!(res.interior, vec![1.0]);
        assert_eq!(res.relative_residual, 0.0);
        assert_eq!(res.energy_value, 0.0);
        assert_eq!(res.minimizer.values, vec![1.0, 0.0]);
        let opt = optimality_check(&q, &res, 50, 1).unwrap();
        assert!(opt.all_passed());
        assert_eq!(q.evaluate(&[0.0]).unwrap(), 2.0);
    }

    #[test]
    fn zero_data_gives_zero_field() {
        let (_, _, q) = chain(|_| 0.0);
        let res = solve(&q, &SolverOptions::default()).unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.interior.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn chain_matches_dense_oracle() {
        let (net, g, q) = chain(|p| p.get(0));
        assert!(q.unknowns() > 0 && q.unknowns() <= 500, "{}", q.unknowns());
        assert!(!connectivity_check(&g, &net).unwrap().singular);
        let res = solve_with_trace(&q, &SolverOptions::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Converged);
        let dense = dense_solve(&q).unwrap();
        let diff: f64 = res.interior.iter().zip(&dense).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(diff <= 1e-8 * norm(&dense), "{diff}");
        let trace = res.energy_trace.as_ref().unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
        assert!(res.energy_value <= q.c0 + 1e-12);
        for (i, inside) in net.interior.iter().enumerate() {
            if !inside {
                assert_eq!(res.minimizer.values[i], 0.0);
            }
        }
        assert!(optimality_check(&q, &res, 100, 2).unwrap().all_passed());
    }

    #[test]
    fn connectivity_examples() {
        let s = Space::new(
            Metric::Euclidean,
            Measure::Lebesgue,
            Bounds::new(Point::from([0.0]), Point::from([1.0])).unwrap(),
            Domain::Box(Bounds::new(Point::from([0.2]), Point::from([0.8])).unwrap()),
        )
        .unwrap();
        let pts = [0.0, 0.3, 0.6, 0.9].map(|x| Point::from([x])).to_vec();
        let mut net = Net::from_vertices(&s, 0.3, pts).unwrap();
        net.weights = vec![0.15; 4];
        let g = build_graph(&s, &net);

        net.interior = vec![false, true, false, false];
        let rep = connectivity_check(&g, &net).unwrap();
        assert_eq!(rep.components.len(), 1);
        assert!(rep.components[0].anchored && !rep.singular);

        net.interior = vec![true; 4];
        assert!(connectivity_check(&g, &net).unwrap().singular);

        net.interior = vec![false; 4];
        assert!(connectivity_check(&g, &net).unwrap().components.is_empty());
    }

    #[test]
    fn unanchored_form_is_indefinite_or_fails_dense() {
        let s = Space::new(
            Metric::Euclidean,
            Measure::Lebesgue,
            Bounds::new(Point::from([0.0]), Point::from([1.0])).unwrap(),
            Domain::Box(Bounds::new(Point::from([0.2]), Point::from([0.8])).unwrap()),
        )
        .unwrap();
        let pts = [0.0, 0.3].map(|x| Point::from([x])).to_vec();
        let mut net = Net::from_vertices(&s, 0.3, pts).unwrap();
        net.weights = vec![0.15; 2];
        net.interior = vec![true; 2];
        let g = build_graph(&s, &net);
        let f = DiscreteField::new(&net, vec![0.0, 1.0]).unwrap();
        let q = assemble_form(&g, &net, &f).unwrap();
        assert!(dense_solve(&q).is_err());
    }
}
