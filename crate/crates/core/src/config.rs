//! TOML run configuration shared by the command-line tool and the harness.
//!
//! Every section has defaults; unknown keys are rejected. Dotted overrides
//! (`net.r=0.1`) are applied to the parsed table before deserialization.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{NetOptions, DEFAULT_MARGIN_FACTOR};
use crate::project::{ProjectionKind, ProjectionOptions};
use crate::solver::SolverOptions;
use crate::space::{Bounds, Density, Domain, Measure, Metric, Point, ScalarFunction, Space};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Euclidean,
    WeightedEuclidean,
    Koranyi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureConfig {
    Lebesgue,
    /// `offset + Σ slope_k (x_k − m_k)`, `m` the centre of the bounds.
    Linear { offset: f64, slope: Vec<f64> },
    Gaussian { amplitude: f64, center: Vec<f64>, sigma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

fn lebesgue() -> MeasureConfig {
    MeasureConfig::Lebesgue
}

fn default_mc_rel_tol() -> f64 {
    1e-3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub kind: MetricKind,
    /// Axis weights of a weighted Euclidean metric.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    #[serde(default = "lebesgue")]
    pub measure: MeasureConfig,
    pub domain: DomainConfig,
    /// Boundary data `f`.
    #[serde(default)]
    pub boundary: ScalarFunction,
    /// Analytic solution compared against in convergence runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ScalarFunction>,
    #[serde(default = "default_mc_rel_tol")]
    pub mc_rel_tol: f64,
    #[serde(default)]
    pub mc_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Single scale for `net`, `solve`, `project` and `verify`.
    pub r: Option<f64>,
    /// Strictly decreasing scales for `converge`.
    pub r_ladder: Option<Vec<f64>>,
    pub seed: u64,
    pub margin_factor: f64,
    pub extra_candidates: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            r: None,
            r_ladder: None,
            seed: 0,
            margin_factor: DEFAULT_MARGIN_FACTOR,
            extra_candidates: 256,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    /// `0` selects `20 √n + 200`.
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-10, max_iter: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectConfig {
    pub kind: ProjectionKind,
    pub lattice_pitch_factor: f64,
    pub cube_depth_cap: u32,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            kind: ProjectionKind::Whitney,
            lattice_pitch_factor: crate::project::path::DEFAULT_PITCH_FACTOR,
            cube_depth_cap: crate::project::whitney::DEFAULT_DEPTH_CAP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    pub out_dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig {
            out_dir: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

/// Sizes of the checks run by `verify` and `converge`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckConfig {
    /// Quadrature nodes per ball.
    pub quad_n: usize,
    /// Exterior probes for the vanishing check.
    pub probes: usize,
    /// Random fields per randomized check.
    pub fields: usize,
    /// Random vectors for form, coercivity and optimality checks.
    pub trials: usize,
    pub lipschitz_pairs: usize,
    pub lipschitz_cap: f64,
    /// Finite-difference pitch in units of `r`.
    pub fd_pitch_factor: f64,
    /// Largest unknown count compared against the dense solver.
    pub dense_limit: usize,
    pub seed: u64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            quad_n: 16,
            probes: 1000,
            fields: 20,
            trials: 100,
            lipschitz_pairs: 1000,
            lipschitz_cap: crate::project::verify::DEFAULT_LIPSCHITZ_CAP,
            fd_pitch_factor: crate::project::fd::DEFAULT_FD_PITCH_FACTOR,
            dense_limit: 500,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Free-form label copied into reports.
    #[serde(default)]
    pub name: String,
    pub space: SpaceConfig,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub project: ProjectConfig,
    #[serde(default)]
    pub io: IoConfig,
    #[serde(default)]
    pub checks: CheckConfig,
}

fn config_error(msg: impl std::fmt::Display) -> Error {
    Error::Config(msg.to_string())
}

/// Parses an override value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_error(format!("override {assignment:?} is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(config_error(format!("bad override key {key:?}")));
    }
    let mut cur = table;
    for part in &path[..path.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_error(format!("override {key:?}: {part:?} is not a table")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(config_error)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = if overrides.is_empty() {
            // keeps line numbers in error messages
            toml::from_str(text).map_err(config_error)?
        } else {
            RunConfig::deserialize(table).map_err(config_error)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    /// The configuration with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.space;
        if s.lo.len() != s.hi.len() || s.lo.is_empty() || s.lo.len() > 3 {
            return Err(config_error("space.lo and space.hi need the same length, between 1 and 3"));
        }
        if !(self.net.margin_factor > 0.0) {
            return Err(config_error("net.margin_factor must be positive"));
        }
        if let Some(r) = self.net.r {
            if !(r > 0.0) || !r.is_finite() {
                return Err(config_error("net.r must be positive"));
            }
        }
        if let Some(l) = &self.net.r_ladder {
            if l.is_empty() || l.iter().any(|r| !(*r > 0.0)) || l.windows(2).any(|w| w[1] >= w[0]) {
                return Err(config_error("net.r_ladder must be positive and strictly decreasing"));
            }
        }
        if !(self.project.lattice_pitch_factor > 0.0) {
            return Err(config_error("project.lattice_pitch_factor must be positive"));
        }
        if self.project.lattice_pitch_factor > 0.125 {
            log::warn!(
                "project.lattice_pitch_factor {} exceeds 1/8; path-integral projection will refuse it",
                self.project.lattice_pitch_factor
            );
        }
        if !(self.solver.tol > 0.0) {
            return Err(config_error("solver.tol must be positive"));
        }
        Ok(())
    }

    pub fn build_space(&self) -> Result<Space> {
        let s = &self.space;
        let lo = Point::from_slice(&s.lo)?;
        let hi = Point::from_slice(&s.hi)?;
        let bounds = Bounds::new(lo, hi)?;
        let metric = match s.kind {
            MetricKind::Euclidean => Metric::Euclidean,
            MetricKind::Koranyi => Metric::Koranyi,
            MetricKind::WeightedEuclidean => Metric::WeightedEuclidean(
                s.weights
                    .clone()
                    .ok_or_else(|| config_error("space.weights is required for weighted_euclidean"))?,
            ),
        };
        let measure = match &s.measure {
            MeasureConfig::Lebesgue => Measure::Lebesgue,
            MeasureConfig::Linear { offset, slope } => {
                Measure::Density(Density::linear(*offset, slope.clone(), &bounds))
            }
            MeasureConfig::Gaussian {
                amplitude,
                center,
                sigma,
            } => Measure::Density(Density::Gaussian {
                amplitude: *amplitude,
                center: Point::from_slice(center)?,
                sigma: *sigma,
            }),
        };
        let domain = match &s.domain {
            DomainConfig::Box { lo, hi } => Domain::Box(Bounds::new(Point::from_slice(lo)?, Point::from_slice(hi)?)?),
            DomainConfig::Ball { center, radius } => Domain::Ball {
                center: Point::from_slice(center)?,
                radius: *radius,
            },
        };
        let space = Space::new(metric, measure, bounds, domain)?;
        Ok(space
            .with_reference(s.reference.clone())
            .with_monte_carlo(s.mc_rel_tol, s.mc_seed))
    }

    /// The single scale, falling back to the first rung of the ladder.
    pub fn r(&self) -> Result<f64> {
        self.net
            .r
            .or_else(|| self.net.r_ladder.as_ref().and_then(|l| l.first().copied()))
            .ok_or_else(|| config_error("net.r (or net.r_ladder) is required"))
    }

    pub fn ladder(&self) -> Result<Vec<f64>> {
        match (&self.net.r_ladder, self.net.r) {
            (Some(l), _) => Ok(l.clone()),
            (None, Some(r)) => Ok(vec![r]),
            (None, None) => Err(config_error("net.r_ladder (or net.r) is required")),
        }
    }

    pub fn net_options(&self) -> NetOptions {
        NetOptions {
            extra_candidates: self.net.extra_candidates,
            margin_factor: self.net.margin_factor,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: (self.solver.max_iter > 0).then_some(self.solver.max_iter),
        }
    }

    pub fn projection_options(&self) -> ProjectionOptions {
        ProjectionOptions {
            depth_cap: self.project.cube_depth_cap,
            lattice_pitch_factor: self.project.lattice_pitch_factor,
        }
    }
}
