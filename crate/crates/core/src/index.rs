use crate::space::{Point, Space, MAX_DIM};

/// Uniform bucket grid over the chart bounds.
#[derive(Clone, Debug)]
pub struct GridIndex {
    dim: usize,
    lo: [f64; MAX_DIM],
    cell: [f64; MAX_DIM],
    shape: [usize; MAX_DIM],
    buckets: Vec<Vec<u32>>,
}

const MAX_BUCKETS: usize = 1 << 22;

impl GridIndex {
    pub fn new(space: &Space, cell_size: f64) -> Self {
        let b = space.bounds();
        let dim = space.dim();
        let mut cell = [1.0; MAX_DIM];
        let mut shape = [1usize; MAX_DIM];
        let mut lo = [0.0; MAX_DIM];
        let mut size = cell_size;
        loop {
            let mut total = 1usize;
            for k in 0..dim {
                lo[k] = b.lo.get(k);
                cell[k] = size;
                shape[k] = ((b.extent(k) / size).ceil() as usize).max(1);
                total = total.saturating_mul(shape[k]);
            }
            if total <= MAX_BUCKETS {
                return GridIndex {
                    dim,
                    lo,
                    cell,
                    shape,
                    buckets: vec![Vec::new(); total],
                };
            }
            size *= 2.0;
        }
    }

    fn axis_cell(&self, k: usize, x: f64) -> usize {
        let i = ((x - self.lo[k]) / self.cell[k]).floor();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.shape[k] - 1)
        }
    }

    fn flat(&self, idx: &[usize; MAX_DIM]) -> usize {
        let mut f = 0;
        for k in 0..self.dim {
            f = f * self.shape[k] + idx[k];
        }
        f
    }

    pub fn insert(&mut self, id: u32, p: &Point) {
        let mut idx = [0usize; MAX_DIM];
        for (k, slot) in idx.iter_mut().enumerate().take(self.dim) {
            *slot = self.axis_cell(k, p.get(k));
        }
        let f = self.flat(&idx);
        self.buckets[f].push(id);
    }

    /// Visits every id stored in a bucket that meets the chart box `[lo, hi]`.
    pub fn for_each_in_box(&self, lo: &[f64; MAX_DIM], hi: &[f64; MAX_DIM], mut f: impl FnMut(u32)) {
        let mut a = [0usize; MAX_DIM];
        let mut z = [0usize; MAX_DIM];
        for k in 0..self.dim {
            a[k] = self.axis_cell(k, lo[k]);
            z[k] = self.axis_cell(k, hi[k]);
        }
        let mut idx = a;
        loop {
            for &id in &self.buckets[self.flat(&idx)] {
                f(id);
            }
            // odometer increment, last axis fastest
            let mut k = self.dim;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                if idx[k] < z[k] {
                    idx[k] += 1;
                    for j in k + 1..self.dim {
                        idx[j] = a[j];
                    }
                    break;
                }
            }
        }
    }

    /// True when `pred` holds for some id in a bucket meeting `[lo, hi]`; stops at the first hit.
    pub fn any_in_box(&self, lo: &[f64; MAX_DIM], hi: &[f64; MAX_DIM], mut pred: impl FnMut(u32) -> bool) -> bool {
        let mut a = [0usize; MAX_DIM];
        let mut z = [0usize; MAX_DIM];
        for k in 0..self.dim {
            a[k] = self.axis_cell(k, lo[k]);
            z[k] = self.axis_cell(k, hi[k]);
        }
        let mut idx = a;
        loop {
            if self.buckets[self.flat(&idx)].iter().any(|&id| pred(id)) {
                return true;
            }
            let mut k = self.dim;
            loop {
                if k == 0 {
                    return false;
                }
                k -= 1;
                if idx[k] < z[k] {
                    idx[k] += 1;
                    for j in k + 1..self.dim {
                        idx[j] = a[j];
                    }
                    break;
                }
            }
        }
    }

    /// Visits ids of stored points within metric distance `radius` of `p`
    /// (`inclusive` selects `≤` over `<`), in bucket order.
    pub fn for_each_within(
        &self,
        space: &Space,
        points: &[Point],
        p: &Point,
        radius: f64,
        inclusive: bool,
        mut f: impl FnMut(u32, f64),
    ) {
        let (lo, hi) = space.ball_bbox(p, radius);
        self.for_each_in_box(&lo, &hi, |id| {
            let d = space.dist(p, &points[id as usize]);
            if d < radius || (inclusive && d == radius) {
                f(id, d);
            }
        });
    }

    /// Nearest stored point to `p`, ties broken by lowest id.
    pub fn nearest(&self, space: &Space, points: &[Point], p: &Point, start_radius: f64) -> Option<(u32, f64)> {
        if points.is_empty() {
            return None;
        }
        let mut radius = start_radius.max(1e-300);
        loop {
            let mut best: Option<(u32, f64)> = None;
            self.for_each_within(space, points, p, radius, true, |id, d| {
                let better = match best {
                    None => true,
                    Some((bid, bd)) => d < bd || (d == bd && id < bid),
                };
                if better {
                    best = Some((id, d));
                }
            });
            if best.is_some() {
                return best;
            }
            if radius > 4.0 * space.diameter() + 1.0 {
                // `p` outside the bounds by a wide margin; fall back to a scan.
                return points
                    .iter()
                    .enumerate()
                    .map(|(i, q)| (i as u32, space.dist(p, q)))
                    .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            }
            radius *= 2.0;
        }
    }
}
