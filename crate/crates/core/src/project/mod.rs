//! Extensions of net functions back to the ambient space.

pub mod fd;
pub mod path;
pub mod verify;
pub mod whitney;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{usage, Result};
use crate::graph::{DiscreteField, Graph};
use crate::net::Net;
use crate::space::{Point, Space};

pub use path::{gbar, project_path_integral, GBar, PathIntegralProjection};
pub use whitney::{CubeCache, Stencil, WhitneyProjection};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    Whitney,
    PathIntegral,
}

impl ProjectionKind {
    pub fn name(self) -> &'static str {
        match self {
            ProjectionKind::Whitney => "whitney",
            ProjectionKind::PathIntegral => "path_integral",
        }
    }
}

impl std::str::FromStr for ProjectionKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitney" => Ok(ProjectionKind::Whitney),
            "path_integral" | "path-integral" => Ok(ProjectionKind::PathIntegral),
            _ => usage(format!("unknown projection kind {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionOptions {
    pub depth_cap: u32,
    /// Path-integral lattice pitch in units of `r`.
    pub lattice_pitch_factor: f64,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions {
            depth_cap: whitney::DEFAULT_DEPTH_CAP,
            lattice_pitch_factor: path::DEFAULT_PITCH_FACTOR,
        }
    }
}

/// A discrete field extended to `X` by one of the two constructions.
pub enum ProjectedField<'a> {
    Whitney {
        proj: WhitneyProjection<'a>,
        values: Vec<f64>,
    },
    PathIntegral(PathIntegralProjection<'a>),
}

impl<'a> ProjectedField<'a> {
    pub fn new(
        space: &'a Space,
        graph: &Graph,
        net: &'a Net,
        u: &DiscreteField,
        kind: ProjectionKind,
        opts: &ProjectionOptions,
    ) -> Result<Self> {
        graph.check_net(net)?;
        u.check_net(net.id(), net.len())?;
        match kind {
            ProjectionKind::Whitney => Ok(ProjectedField::Whitney {
                proj: WhitneyProjection::new(space, net, opts.depth_cap)?,
                values: u.values.clone(),
            }),
            ProjectionKind::PathIntegral => Ok(ProjectedField::PathIntegral(PathIntegralProjection::new(
                space,
                graph,
                net,
                u,
                opts.lattice_pitch_factor,
            )?)),
        }
    }

    pub fn kind(&self) -> ProjectionKind {
        match self {
            ProjectedField::Whitney { .. } => ProjectionKind::Whitney,
            ProjectedField::PathIntegral(_) => ProjectionKind::PathIntegral,
        }
    }

    fn space(&self) -> &Space {
        match self {
            ProjectedField::Whitney { proj, .. } => proj.space(),
            ProjectedField::PathIntegral(p) => p.space(),
        }
    }

    fn check(&self, p: &Point) -> Result<()> {
        let space = self.space();
        space.check_point(p)?;
        if !space.bounds().contains(p) {
            return usage(format!("projection point {p:?} lies outside X"));
        }
        Ok(())
    }

    pub fn eval(&self, p: &Point) -> Result<f64> {
        self.check(p)?;
        Ok(match self {
            ProjectedField::Whitney { proj, values } => proj.eval_with(p, values, &mut CubeCache::new()),
            ProjectedField::PathIntegral(pi) => pi.eval_unchecked(p),
        })
    }

    /// Evaluates at every point, in parallel; output order follows input order.
    pub fn eval_many(&self, points: &[Point]) -> Result<Vec<f64>> {
        for p in points {
            self.check(p)?;
        }
        Ok(match self {
            ProjectedField::Whitney { proj, values } => points
                .par_iter()
                .map_init(CubeCache::new, |cache, p| proj.eval_with(p, values, cache))
                .collect(),
            ProjectedField::PathIntegral(pi) => points.par_iter().map(|p| pi.eval_unchecked(p)).collect(),
        })
    }

    /// Construction parameters and counters for reports.
    pub fn diagnostics(&self) -> serde_json::Value {
        match self {
            ProjectedField::Whitney { proj, .. } => serde_json::json!({
                "kind": "whitney",
                "cube_depth_cap": proj.depth_cap(),
                "depth_cap_fallbacks": proj.fallback_count(),
            }),
            ProjectedField::PathIntegral(p) => serde_json::json!({
                "kind": "path_integral",
                "lattice_pitch": p.lattice_pitch(),
                "lattice_nodes": p.node_count(),
            }),
        }
    }
}

/// Whitney stencils for a batch of points, in input order.
pub fn whitney_stencils(proj: &WhitneyProjection, points: &[Point]) -> Vec<Stencil> {
    points
        .par_iter()
        .map_init(CubeCache::new, |cache, p| proj.stencil(p, cache))
        .collect()
}

pub fn project_whitney(space: &Space, graph: &Graph, net: &Net, u: &DiscreteField, p: &Point) -> Result<f64> {
    ProjectedField::new(space, graph, net, u, ProjectionKind::Whitney, &ProjectionOptions::default())?.eval(p)
}
