use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Density, Measure, Metric, Point, Space};

/// Closed-form test functions used as boundary data, references and
/// comparability probes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarFunction {
    Zero,
    Constant { value: f64 },
    /// `offset + Σ gradient_k x_k`.
    Affine { gradient: Vec<f64>, offset: f64 },
    /// `x_0² - x_1²`, harmonic in the plane.
    Saddle,
    /// `sin(π x_0) Π_{k≥1} cos(π x_k)`.
    SinCos,
    /// The coordinate `x_axis`.
    Coordinate { axis: usize },
}

impl Default for ScalarFunction {
    fn default() -> Self {
        ScalarFunction::Zero
    }
}

impl ScalarFunction {
    pub fn eval(&self, p: &Point) -> f64 {
        match self {
            ScalarFunction::Zero => 0.0,
            ScalarFunction::Constant { value } => *value,
            ScalarFunction::Affine { gradient, offset } => {
                offset + gradient.iter().enumerate().map(|(k, g)| g * p.get(k)).sum::<f64>()
            }
            ScalarFunction::Saddle => p.get(0) * p.get(0) - p.get(1) * p.get(1),
            ScalarFunction::SinCos => {
                let mut v = (PI * p.get(0)).sin();
                for k in 1..p.dim() {
                    v *= (PI * p.get(k)).cos();
                }
                v
            }
            ScalarFunction::Coordinate { axis } => p.get(*axis),
        }
    }

    /// `∫_X |∇u|_*² dμ` in closed form, where `|·|_*` is the dual norm of the
    /// chart metric. `None` when no closed form is implemented (Korányi
    /// charts, Gaussian densities).
    pub fn gradient_energy(&self, space: &Space) -> Option<f64> {
        let weights: Vec<f64> = match space.metric() {
            Metric::Euclidean => vec![1.0; space.dim()],
            Metric::WeightedEuclidean(w) => w.clone(),
            Metric::Koranyi => return None,
        };
        let b = space.bounds();
        let dim = space.dim();
        let (offset, slope) = match space.measure() {
            Measure::Lebesgue => (1.0, vec![0.0; dim]),
            Measure::Density(Density::Linear { offset, slope, .. }) => (*offset, slope.clone()),
            Measure::Density(Density::Gaussian { .. }) => return None,
        };
        let center = b.center();
        let axes: Vec<Axis> = (0..dim)
            .map(|k| Axis {
                a: b.lo.get(k),
                b: b.hi.get(k),
                c: center.get(k),
            })
            .collect();
        // ∫ Π_k f_k(x_k) ρ(x) dx for ρ = offset + Σ s_j (x_j - c_j).
        let integrate = |factors: &[Factor]| -> f64 {
            let plain: Vec<f64> = factors.iter().zip(&axes).map(|(f, ax)| ax.integral(*f, false)).collect();
            let mut total = offset * plain.iter().product::<f64>();
            for (j, s) in slope.iter().enumerate() {
                if *s == 0.0 {
                    continue;
                }
                let mut term = *s;
                for (k, ax) in axes.iter().enumerate() {
                    term *= if k == j { ax.integral(factors[k], true) } else { plain[k] };
                }
                total += term;
            }
            total
        };
        match self {
            ScalarFunction::Zero | ScalarFunction::Constant { .. } => Some(0.0),
            ScalarFunction::Affine { gradient, .. } => {
                let g2: f64 = gradient.iter().zip(&weights).map(|(g, w)| g * g / w).sum();
                Some(g2 * integrate(&vec![Factor::One; dim]))
            }
            ScalarFunction::Coordinate { axis } => Some(integrate(&vec![Factor::One; dim]) / weights[*axis]),
            ScalarFunction::Saddle => {
                if dim != 2 {
                    return None;
                }
                // |∇u|² = 4 x² / w_0 + 4 y² / w_1
                Some(
                    4.0 / weights[0] * integrate(&[Factor::Square, Factor::One])
                        + 4.0 / weights[1] * integrate(&[Factor::One, Factor::Square]),
                )
            }
            ScalarFunction::SinCos => {
                // ∂_0 u = π cos(πx_0) Π cos, ∂_k u = -π sin(πx_0) sin(πx_k) Π_{j≠0,k} cos
                let mut f0 = vec![Factor::Cos2; dim];
                f0[0] = Factor::Cos2;
                let mut total = PI * PI / weights[0] * integrate(&f0);
                for k in 1..dim {
                    let mut fk = vec![Factor::Cos2; dim];
                    fk[0] = Factor::Sin2;
                    fk[k] = Factor::Sin2;
                    total += PI * PI / weights[k] * integrate(&fk);
                }
                Some(total)
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Factor {
    One,
    Square,
    Cos2,
    Sin2,
}

struct Axis {
    a: f64,
    b: f64,
    c: f64,
}

impl Axis {
    /// `∫_a^b f(x) dx`, or `∫_a^b (x - c) f(x) dx` when `centered_moment`.
    fn integral(&self, f: Factor, centered_moment: bool) -> f64 {
        let plain = |x: f64| match f {
            Factor::One => x,
            Factor::Square => x * x * x / 3.0,
            Factor::Cos2 => x / 2.0 + (2.0 * PI * x).sin() / (4.0 * PI),
            Factor::Sin2 => x / 2.0 - (2.0 * PI * x).sin() / (4.0 * PI),
        };
        // antiderivatives of x f(x)
        let first = |x: f64| match f {
            Factor::One => x * x / 2.0,
            Factor::Square => x.powi(4) / 4.0,
            Factor::Cos2 => {
                x * x / 4.0 + x * (2.0 * PI * x).sin() / (4.0 * PI) + (2.0 * PI * x).cos() / (8.0 * PI * PI)
            }
            Factor::Sin2 => {
                x * x / 4.0 - x * (2.0 * PI * x).sin() / (4.0 * PI) - (2.0 * PI * x).cos() / (8.0 * PI * PI)
            }
        };
        let p = plain(self.b) - plain(self.a);
        if centered_moment {
            first(self.b) - first(self.a) - self.c * p
        } else {
            p
        }
    }
}
