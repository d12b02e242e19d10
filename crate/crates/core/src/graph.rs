//! The `3r`-adjacency graph over a net and the discrete calculus on it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};
use crate::net::Net;
use crate::rng;
use crate::space::{Point, Space};

/// Adjacency `x̄ ~ ȳ` iff `x̄ ≠ ȳ` and `d(x̄, ȳ) ≤ 3r`, stored as sorted CSR rows.
#[derive(Clone, Debug)]
pub struct Graph {
    net_id: u64,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    max_degree: usize,
}

impl Graph {
    fn from_rows(net_id: u64, rows: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let mut neighbors = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        let mut max_degree = 0;
        for row in rows {
            max_degree = max_degree.max(row.len());
            neighbors.extend_from_slice(&row);
            offsets.push(neighbors.len());
        }
        Graph {
            net_id,
            offsets,
            neighbors,
            max_degree,
        }
    }

    pub fn net_id(&self) -> u64 {
        self.net_id
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// Number of unordered edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Unordered edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        (0..self.len()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .filter(move |&&j| (j as usize) > i)
                .map(move |&j| (i as u32, j))
        })
    }

    pub(crate) fn check_net(&self, net: &Net) -> Result<()> {
        if net.id() != self.net_id || net.len() != self.len() {
            return usage("graph was built on a different net");
        }
        Ok(())
    }
}

/// Relative slack on the `3r` threshold. Decimal inputs such as `d = 0.9`,
/// `r = 0.3` would otherwise fail `d ≤ 3r` through representation error.
pub const ADJACENCY_SLACK: f64 = 1e-9;

#[inline]
pub(crate) fn reach(r: f64) -> f64 {
    3.0 * r * (1.0 + ADJACENCY_SLACK)
}

/// Builds the adjacency through the net's spatial index.
pub fn build_graph(space: &Space, net: &Net) -> Graph {
    let reach = reach(net.r());
    let rows: Vec<Vec<u32>> = (0..net.len())
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::new();
            net.for_each_within(space, net.vertex(i), reach, true, |j, _| {
                if j as usize != i {
                    row.push(j);
                }
            });
            row.sort_unstable();
            row
        })
        .collect();
    Graph::from_rows(net.id(), rows)
}

/// Reference `O(n²)` construction used to cross-check [`build_graph`].
pub fn build_graph_brute_force(space: &Space, net: &Net) -> Graph {
    let reach = reach(net.r());
    let n = net.len();
    let rows = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && space.dist(net.vertex(i), net.vertex(j)) <= reach)
                .map(|j| j as u32)
                .collect()
        })
        .collect();
    Graph::from_rows(net.id(), rows)
}

/// One real value per net vertex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteField {
    pub net_id: u64,
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn new(net: &Net, values: Vec<f64>) -> Result<Self> {
        if values.len() != net.len() {
            return usage(format!(
                "field has {} values but the net has {} vertices",
                values.len(),
                net.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return usage("field values must be finite");
        }
        Ok(DiscreteField {
            net_id: net.id(),
            values,
        })
    }

    pub fn zeros(net: &Net) -> Self {
        DiscreteField {
            net_id: net.id(),
            values: vec![0.0; net.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn check_net(&self, net_id: u64, len: usize) -> Result<()> {
        if self.net_id != net_id || self.values.len() != len {
            return usage("field lives on a different net");
        }
        Ok(())
    }

    /// `self + other` on the same net.
    pub fn add(&self, other: &DiscreteField) -> Result<DiscreteField> {
        other.check_net(self.net_id, self.len())?;
        Ok(DiscreteField {
            net_id: self.net_id,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn scale(&self, c: f64) -> DiscreteField {
        DiscreteField {
            net_id: self.net_id,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `u_r(x̄) = ⨍_{B(x̄, r/4)} u dμ` by `quad_n`-node quadrature.
pub fn discretize_function(
    space: &Space,
    net: &Net,
    u: impl Fn(&Point) -> f64 + Sync,
    quad_n: usize,
    seed: u64,
) -> Result<DiscreteField> {
    if net.weights.len() != net.len() {
        return usage("net weights have not been assigned");
    }
    let rho = 0.25 * net.r();
    let values = (0..net.len())
        .into_par_iter()
        .map(|i| {
            let mass = net.weights[i];
            let nodes = space.sample_ball_with_mass(net.vertex(i), rho, quad_n, rng::mix(seed, i as u64), mass)?;
            let total: f64 = nodes.iter().map(|(_, w)| w).sum();
            Ok(nodes.iter().map(|(p, w)| w * u(p)).sum::<f64>() / total)
        })
        .collect::<Result<Vec<f64>>>()?;
    DiscreteField::new(net, values)
}

/// `|∇_r u|(x̄) = Σ_{w̄ ~ x̄} |u(x̄) - u(w̄)| / r`.
pub fn graph_gradient(graph: &Graph, net: &Net, u: &DiscreteField) -> Result<DiscreteField> {
    graph.check_net(net)?;
    u.check_net(net.id(), net.len())?;
    let r = net.r();
    let values = (0..graph.len())
        .map(|i| {
            graph
                .neighbors(i)
                .iter()
                .map(|&j| (u.values[i] - u.values[j as usize]).abs())
                .sum::<f64>()
                / r
        })
        .collect();
    Ok(DiscreteField {
        net_id: net.id(),
        values,
    })
}

/// `Σ_x̄ Σ_{ȳ ~ x̄} |u(ȳ) - u(x̄)|² / r² · μ_r({x̄})`, summed in vertex order.
pub fn graph_energy(graph: &Graph, net: &Net, u: &DiscreteField) -> Result<f64> {
    graph.check_net(net)?;
    u.check_net(net.id(), net.len())?;
    if net.weights.len() != net.len() {
        return usage("net weights have not been assigned");
    }
    Ok(energy_values(graph, &net.weights, net.r(), &u.values))
}

pub(crate) fn energy_values(graph: &Graph, weights: &[f64], r: f64, u: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..graph.len() {
        let mut row = 0.0;
        for &j in graph.neighbors(i) {
            let d = u[j as usize] - u[i];
            row += d * d;
        }
        total += weights[i] * row;
    }
    total / (r * r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{assign_weights, build_full, NetOptions};
    use crate::space::{Bounds, Domain, Measure, Metric};
    use proptest::prelude::*;

    fn unit_interval() -> Space {
        Space::new(
            Metric::Euclidean,
            Measure::Lebesgue,
            Bounds::new(Point::from([0.0]), Point::from([1.0])).unwrap(),
            Domain::Box(Bounds::new(Point::from([0.2]), Point::from([0.8])).unwrap()),
        )
        .unwrap()
    }

    fn square() -> Space {
        Space::new(
            Metric::Euclidean,
            Measure::Lebesgue,
            Bounds::new(Point::from([0.0, 0.0]), Point::from([1.0, 1.0])).unwrap(),
            Domain::Box(Bounds::new(Point::from([0.1, 0.1]), Point::from([0.9, 0.9])).unwrap()),
        )
        .unwrap()
    }

    fn chain(points: &[f64], r: f64, weights: Vec<f64>) -> (Space, Net) {
        let s = Space::new(
            Metric::Euclidean,
            Measure::Lebesgue,
            Bounds::new(Point::from([-1.0]), Point::from([4.0])).unwrap(),
            Domain::Box(Bounds::new(Point::from([0.5]), Point::from([2.5])).unwrap()),
        )
        .unwrap();
        let mut net = Net::from_vertices(&s, r, points.iter().map(|x| Point::from([*x])).collect()).unwrap();
        net.weights = weights;
        (s, net)
    }

    #[test]
    fn greedy_interval_net_is_complete_graph() {
        let s = unit_interval();
        let net = build_full(&s, 0.3, 0, &NetOptions::default()).unwrap();
        assert_eq!(net.len(), 4);
        let g = build_graph(&s, &net);
        assert_eq!(g.edge_count(), 6);
        assert_eq!(g.max_degree(), 3);
        for i in 0..4 {
            assert_eq!(g.degree(i), 3);
        }
    }

    #[test]
    fn single_vertex_has_no_edges() {
        let (s, net) = chain(&[0.0], 1.0, vec![1.0]);
        let g = build_graph(&s, &net);
        assert_eq!(g.edge_count(), 0);
        assert!(g.neighbors(0).is_empty());
    }

    #[test]
    fn index_build_matches_brute_force() {
        let s = square();
        for r in [0.1, 0.045] {
            let net = build_full(&s, r, 3, &NetOptions::default()).unwrap();
            assert!(net.len() <= 2000);
            let a = build_graph(&s, &net);
            let b = build_graph_brute_force(&s, &net);
            assert_eq!(a.offsets, b.offsets);
            assert_eq!(a.neighbors, b.neighbors);
            for (i, j) in a.edges() {
                assert!(a.neighbors(j as usize).contains(&i));
            }
        }
    }

    #[test]
    fn gradient_examples() {
        let (s, net) = chain(&[0.0, 1.0], 1.0, vec![1.0, 1.0]);
        let g = build_graph(&s, &net);
        let u = DiscreteField::new(&net, vec![0.0, 1.0]).unwrap();
        assert_eq!(graph_gradient(&g, &net, &u).unwrap().values, vec![1.0, 1.0]);

        let (s, net) = chain(&[0.0, 0.3, 0.6, 0.9], 0.3, vec![1.0; 4]);
        let g = build_graph(&s, &net);
        let u = DiscreteField::new(&net, vec![0.0, 0.3, 0.6, 0.9]).unwrap();
        let grad = graph_gradient(&g, &net, &u).unwrap();
        assert!((grad.values[0] - 6.0).abs() < 1e-12);

        let c = DiscreteField::new(&net, vec![2.5; 4]).unwrap();
        assert!(graph_gradient(&g, &net, &c).unwrap().values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn energy_examples() {
        let (s, net) = chain(&[0.0, 1.0], 1.0, vec![1.0, 1.0]);
        let g = build_graph(&s, &net);
        let u = DiscreteField::new(&net, vec![0.0, 1.0]).unwrap();
        assert_eq!(graph_energy(&g, &net, &u).unwrap(), 2.0);
        let c = DiscreteField::new(&net, vec![7.0, 7.0]).unwrap();
        assert_eq!(graph_energy(&g, &net, &c).unwrap(), 0.0);

        let (s, net) = chain(&[0.0, 1.0], 1.0, vec![1.0, 3.0]);
        let g = build_graph(&s, &net);
        let u = DiscreteField::new(&net, vec![0.0, 1.0]).unwrap();
        assert_eq!(graph_energy(&g, &net, &u).unwrap(), 4.0);
    }

    #[test]
    fn field_from_other_net_is_rejected() {
        let (s, a) = chain(&[0.0, 1.0], 1.0, vec![1.0, 1.0]);
        let (_, b) = chain(&[0.0, 1.0], 1.0, vec![1.0, 1.0]);
        let g = build_graph(&s, &a);
        let u = DiscreteField::zeros(&b);
        assert!(graph_gradient(&g, &a, &u).is_err());
        assert!(graph_energy(&g, &b, &u).is_err());
    }

    #[test]
    fn discretization_examples() {
        let s = unit_interval();
        let net = Net::from_vertices(&s, 0.4, vec![Point::from([0.5])]).unwrap();
        let net = assign_weights(&s, net).unwrap();
        let c = discretize_function(&s, &net, |_| 3.25, 16, 0).unwrap();
        assert!((c.values[0] - 3.25).abs() < 1e-14);
        let lin = discretize_function(&s, &net, |p| p.get(0), 16, 0).unwrap();
        assert!((lin.values[0] - 0.5).abs() < 1e-14);
        // midpoint rule error for x² is h²/12 with h = 0.2 / n
        let sq = discretize_function(&s, &net, |p| p.get(0) * p.get(0), 256, 0).unwrap();
        assert!((sq.values[0] - (0.25 + 0.01 / 3.0)).abs() < 1e-6);
    }

    #[test]
    fn discretization_is_deterministic() {
        let s = square();
        let net = build_full(&s, 0.1, 1, &NetOptions::default()).unwrap();
        let f = |p: &Point| (3.0 * p.get(0)).sin() * p.get(1);
        let a = discretize_function(&s, &net, f, 16, 9).unwrap();
        let b = discretize_function(&s, &net, f, 16, 9).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn energy_is_a_quadratic_seminorm(
            u in proptest::collection::vec(-5.0f64..5.0, 6),
            v in proptest::collection::vec(-5.0f64..5.0, 6),
            c in -4.0f64..4.0,
        ) {
            let (s, net) = chain(&[0.0, 0.35, 0.7, 1.1, 1.5, 2.6], 0.35, vec![0.5, 1.0, 1.5, 0.7, 0.2, 1.1]);
            let g = build_graph(&s, &net);
            let fu = DiscreteField::new(&net, u).unwrap();
            let fv = DiscreteField::new(&net, v).unwrap();
            let eu = graph_energy(&g, &net, &fu).unwrap();
            let ev = graph_energy(&g, &net, &fv).unwrap();
            let ecu = graph_energy(&g, &net, &fu.scale(c)).unwrap();
            prop_assert!((ecu - c * c * eu).abs() <= 1e-10 * (1.0 + ecu.abs()));
            let esum = graph_energy(&g, &net, &fu.add(&fv).unwrap()).unwrap();
            prop_assert!(esum.sqrt() <= eu.sqrt() + ev.sqrt() + 1e-10);
        }
    }
}
