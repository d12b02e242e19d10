//! Finite-difference surrogates for `∫ g² dμ` and `∫ P² dμ` of fields given
//! pointwise on `X`, on a tensor grid streamed block by block along axis 0.

use serde::Serialize;

use crate::error::{usage, Error, Result};
use crate::space::{Point, Space, MAX_DIM};

/// Grid pitch in units of `r`.
pub const DEFAULT_FD_PITCH_FACTOR: f64 = 1.0 / 16.0;
const BLOCK_POINTS: usize = 1 << 14;
const NODE_CAP: usize = 1 << 26;

#[derive(Clone, Debug)]
pub struct FdGrid {
    dim: usize,
    shape: [usize; MAX_DIM],
    step: [f64; MAX_DIM],
    lo: Point,
    inv_weight: [f64; MAX_DIM],
}

impl FdGrid {
    /// Per-axis pitch `pitch / √w_k`, adjusted to divide the bounds evenly.
    pub fn new(space: &Space, pitch: f64) -> Result<Self> {
        if !space.metric().is_euclidean_chart() {
            return usage("finite-difference energies need a Euclidean chart");
        }
        if !(pitch > 0.0) || !pitch.is_finite() {
            return usage(format!("grid pitch must be positive, got {pitch}"));
        }
        let dim = space.dim();
        let mut shape = [1usize; MAX_DIM];
        let mut step = [0.0; MAX_DIM];
        let mut inv_weight = [0.0; MAX_DIM];
        let mut total = 1usize;
        for k in 0..dim {
            let w = space.metric().axis_weight(k);
            let extent = space.bounds().extent(k);
            shape[k] = ((extent * w.sqrt() / pitch).ceil() as usize).max(1) + 1;
            step[k] = extent / (shape[k] - 1) as f64;
            inv_weight[k] = 1.0 / w;
            total = total.saturating_mul(shape[k]);
        }
        if total > NODE_CAP {
            return Err(Error::Accuracy(format!(
                "finite-difference grid would need {total} nodes (cap {NODE_CAP})"
            )));
        }
        Ok(FdGrid {
            dim,
            shape,
            step,
            lo: space.bounds().lo,
            inv_weight,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.dim]
    }

    pub fn node_count(&self) -> usize {
        self.shape().iter().product()
    }

    fn row_len(&self) -> usize {
        self.shape[1..self.dim].iter().product()
    }

    fn push_row(&self, i: usize, out: &mut Vec<Point>) {
        let mut p = self.lo;
        p.coords_mut()[0] = self.lo.get(0) + i as f64 * self.step[0];
        match self.dim {
            1 => out.push(p),
            2 => {
                for j in 0..self.shape[1] {
                    p.coords_mut()[1] = self.lo.get(1) + j as f64 * self.step[1];
                    out.push(p);
                }
            }
            _ => {
                for j in 0..self.shape[1] {
                    p.coords_mut()[1] = self.lo.get(1) + j as f64 * self.step[1];
                    for k in 0..self.shape[2] {
                        p.coords_mut()[2] = self.lo.get(2) + k as f64 * self.step[2];
                        out.push(p);
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FdEnergies {
    /// `∫ g² dμ` per field.
    pub grad_sq: Vec<f64>,
    /// `∫ P² dμ` per field.
    pub l2_sq: Vec<f64>,
    pub nodes: usize,
}

/// Integrates every field over the cells of `grid`.
///
/// `eval` receives blocks of grid points and returns one value vector per
/// field. On each cell, `g²` is the mean over cell edges of the squared
/// difference quotients, and `P²` the mean over corners; both are weighted by
/// the density at the cell centre times the cell volume.
pub fn fd_energies(
    space: &Space,
    grid: &FdGrid,
    fields: usize,
    mut eval: impl FnMut(&[Point]) -> Result<Vec<Vec<f64>>>,
) -> Result<FdEnergies> {
    let dim = grid.dim;
    let row = grid.row_len();
    let rows_per_block = (BLOCK_POINTS / row).max(1);
    let vol: f64 = grid.step[..dim].iter().product();
    let corners = 1usize << dim;
    let mut grad_sq = vec![0.0; fields];
    let mut l2_sq = vec![0.0; fields];
    let mut prev: Option<Vec<Vec<f64>>> = None;
    let mut points = Vec::with_capacity(rows_per_block * row);
    let mut i0 = 0;
    while i0 < grid.shape[0] {
        let i1 = (i0 + rows_per_block).min(grid.shape[0]);
        points.clear();
        for i in i0..i1 {
            grid.push_row(i, &mut points);
        }
        let vals = eval(&points)?;
        if vals.len() != fields || vals.iter().any(|v| v.len() != points.len()) {
            return usage("field evaluator returned the wrong shape");
        }
        for i in i0..i1 {
            let cur: Vec<&[f64]> = vals.iter().map(|v| &v[(i - i0) * row..(i - i0 + 1) * row]).collect();
            if let Some(p) = &prev {
                let lower: Vec<&[f64]> = p.iter().map(Vec::as_slice).collect();
                accumulate_slab(space, grid, i - 1, &lower, &cur, vol, corners, &mut grad_sq, &mut l2_sq);
            } else if grid.shape[0] == 1 {
                break;
            }
            prev = Some(cur.iter().map(|s| s.to_vec()).collect());
        }
        i0 = i1;
    }
    Ok(FdEnergies {
        grad_sq,
        l2_sq,
        nodes: grid.node_count(),
    })
}

#[allow(clippy::too_many_arguments)]
fn accumulate_slab(
    space: &Space,
    grid: &FdGrid,
    i: usize,
    lower: &[&[f64]],
    upper: &[&[f64]],
    vol: f64,
    corners: usize,
    grad_sq: &mut [f64],
    l2_sq: &mut [f64],
) {
    let dim = grid.dim;
    let (n1, n2) = (grid.shape[1], grid.shape[2]);
    let cells1 = if dim >= 2 { n1 - 1 } else { 1 };
    let cells2 = if dim >= 3 { n2 - 1 } else { 1 };
    // in-row flat index of the corner with offsets (b1, b2)
    let at = |j: usize, k: usize, b1: usize, b2: usize| -> usize {
        match dim {
            1 => 0,
            2 => j + b1,
            _ => (j + b1) * n2 + k + b2,
        }
    };
    let edge_mean = (corners / 2) as f64;
    for j in 0..cells1 {
        for k in 0..cells2 {
            let mut centre = grid.lo;
            centre.coords_mut()[0] = grid.lo.get(0) + (i as f64 + 0.5) * grid.step[0];
            if dim >= 2 {
                centre.coords_mut()[1] = grid.lo.get(1) + (j as f64 + 0.5) * grid.step[1];
            }
            if dim >= 3 {
                centre.coords_mut()[2] = grid.lo.get(2) + (k as f64 + 0.5) * grid.step[2];
            }
            let w = space.measure().density_at(&centre) * vol;
            for f in 0..lower.len() {
                // corner values indexed by bits (b0, b1, b2)
                let mut c = [0.0; 8];
                for (bits, slot) in c.iter_mut().enumerate().take(corners) {
                    let rowv = if bits & 1 == 0 { lower[f] } else { upper[f] };
                    *slot = rowv[at(j, k, (bits >> 1) & 1, (bits >> 2) & 1)];
                }
                let mut g2 = 0.0;
                for axis in 0..dim {
                    let bit = 1 << axis;
                    let mut s = 0.0;
                    for (bits, lo_v) in c.iter().enumerate().take(corners) {
                        if bits & bit == 0 {
                            let d = (c[bits | bit] - lo_v) / grid.step[axis];
                            s += d * d;
                        }
                    }
                    g2 += s / edge_mean * grid.inv_weight[axis];
                }
                let p2 = c[..corners].iter().map(|v| v * v).sum::<f64>() / corners as f64;
                grad_sq[f] += w * g2;
                l2_sq[f] += w * p2;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Bounds, Density, Domain, Measure, Metric};

    fn space(metric: Metric, measure: Measure, dim: usize) -> Space {
        let lo = Point::from_slice(&vec![0.0; dim]).unwrap();
        let hi = Point::from_slice(&[1.0, 2.0, 0.5][..dim]).unwrap();
        let dlo = Point::from_slice(&vec![0.1; dim]).unwrap();
        let dhi = Point::from_slice(&vec![0.4; dim]).unwrap();
        Space::new(
            metric,
            measure,
            Bounds::new(lo, hi).unwrap(),
            Domain::Box(Bounds::new(dlo, dhi).unwrap()),
        )
        .unwrap()
    }

    fn affine(p: &Point) -> f64 {
        let a = [1.5, -2.0, 0.75];
        (0..p.dim()).map(|k| a[k] * p.get(k)).sum::<f64>() + 0.3
    }

    fn run(s: &Space, pitch: f64) -> FdEnergies {
        let grid = FdGrid::new(s, pitch).unwrap();
        fd_energies(s, &grid, 2, |pts| {
            Ok(vec![pts.iter().map(affine).collect(), vec![2.0; pts.len()]])
        })
        .unwrap()
    }

    #[test]
    fn affine_fields_are_exact() {
        let a: [f64; 3] = [1.5, -2.0, 0.75];
        for dim in 1..=3 {
            let s = space(Metric::Euclidean, Measure::Lebesgue, dim);
            let vol = s.bounds().volume();
            let e = run(&s, 0.05);
            let g2: f64 = a[..dim].iter().map(|x| x * x).sum();
            assert!((e.grad_sq[0] - g2 * vol).abs() < 1e-9 * g2 * vol, "dim {dim}: {:?}", e);
            assert_eq!(e.grad_sq[1], 0.0);
            assert!((e.l2_sq[1] - 4.0 * vol).abs() < 1e-10);
        }
    }

    #[test]
    fn weighted_metric_and_density() {
        let w = vec![4.0, 0.25];
        let s = space(Metric::WeightedEuclidean(w.clone()), Measure::Lebesgue, 2);
        let e = run(&s, 0.05);
        let expect = (1.5f64.powi(2) / 4.0 + 4.0 / 0.25) * 2.0;
        assert!((e.grad_sq[0] - expect).abs() < 1e-9 * expect);

        let b = Bounds::new(Point::from([0.0, 0.0]), Point::from([1.0, 2.0])).unwrap();
        let m = Measure::Density(Density::linear(1.0, vec![0.5, -0.25], &b));
        let s = space(Metric::Euclidean, m, 2);
        let e = run(&s, 0.05);
        // the linear part of the density integrates to zero about the centre
        let expect = (1.5f64.powi(2) + 4.0) * 2.0;
        assert!((e.grad_sq[0] - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn l2_of_coordinate_converges() {
        let s = space(Metric::Euclidean, Measure::Lebesgue, 1);
        let grid = FdGrid::new(&s, 0.001).unwrap();
        let e = fd_energies(&s, &grid, 1, |pts| Ok(vec![pts.iter().map(|p| p.get(0)).collect()])).unwrap();
        assert!((e.l2_sq[0] - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn koranyi_is_rejected() {
        let s = Space::new(
            Metric::Koranyi,
            Measure::Lebesgue,
            Bounds::new(Point::from([-0.5, -0.5, -0.25]), Point::from([0.5, 0.5, 0.25])).unwrap(),
            Domain::Ball {
                center: Point::from([0.0, 0.0, 0.0]),
                radius: 0.45,
            },
        )
        .unwrap();
        assert!(FdGrid::new(&s, 0.1).is_err());
    }
}
