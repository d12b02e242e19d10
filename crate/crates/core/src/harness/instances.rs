//! The canonical desk-scale instances: an interval, a square and a disk, each
//! with Lebesgue measure and a linear density, plus a Heisenberg-group chart.

use crate::config::{DomainConfig, MeasureConfig, MetricKind, NetConfig, RunConfig, SpaceConfig};
use crate::space::ScalarFunction;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureChoice {
    Lebesgue,
    Linear,
}

impl MeasureChoice {
    fn suffix(self) -> &'static str {
        match self {
            MeasureChoice::Lebesgue => "lebesgue",
            MeasureChoice::Linear => "linear",
        }
    }
}

fn base(name: String, lo: Vec<f64>, hi: Vec<f64>, measure: MeasureConfig, domain: DomainConfig, f: ScalarFunction, ladder: Vec<f64>) -> RunConfig {
    RunConfig {
        name,
        space: SpaceConfig {
            kind: MetricKind::Euclidean,
            weights: None,
            lo,
            hi,
            measure,
            domain,
            boundary: f.clone(),
            reference: Some(f),
            mc_rel_tol: 1e-3,
            mc_seed: 0,
        },
        net: NetConfig {
            r: None,
            r_ladder: Some(ladder),
            ..NetConfig::default()
        },
        solver: Default::default(),
        project: Default::default(),
        io: Default::default(),
        checks: Default::default(),
    }
}

fn measure(choice: MeasureChoice, slope: f64, dim: usize) -> MeasureConfig {
    match choice {
        MeasureChoice::Lebesgue => MeasureConfig::Lebesgue,
        MeasureChoice::Linear => MeasureConfig::Linear {
            offset: 1.0,
            slope: vec![slope; dim],
        },
    }
}

/// `X = [0, 1]`, `Ω = (0.1, 0.9)`, `f(x) = x`.
pub fn interval(m: MeasureChoice) -> RunConfig {
    base(
        format!("interval-{}", m.suffix()),
        vec![0.0],
        vec![1.0],
        measure(m, 0.5, 1),
        DomainConfig::Box {
            lo: vec![0.1],
            hi: vec![0.9],
        },
        ScalarFunction::Coordinate { axis: 0 },
        vec![0.016, 0.008, 0.004, 0.002],
    )
}

/// `X = [0, 1]²`, `Ω = (0.05, 0.95)²`, `f = x² − y²`.
pub fn square(m: MeasureChoice) -> RunConfig {
    base(
        format!("square-{}", m.suffix()),
        vec![0.0, 0.0],
        vec![1.0, 1.0],
        measure(m, 0.5, 2),
        DomainConfig::Box {
            lo: vec![0.05, 0.05],
            hi: vec![0.95, 0.95],
        },
        ScalarFunction::Saddle,
        vec![0.02, 0.016, 0.0128, 0.01024],
    )
}

/// `X = [−1, 1]²`, `Ω` the disk of radius 0.9, `f = x² − y²`.
pub fn disk(m: MeasureChoice) -> RunConfig {
    base(
        format!("disk-{}", m.suffix()),
        vec![-1.0, -1.0],
        vec![1.0, 1.0],
        measure(m, 0.25, 2),
        DomainConfig::Ball {
            center: vec![0.0, 0.0],
            radius: 0.9,
        },
        ScalarFunction::Saddle,
        vec![0.04, 0.032, 0.0256, 0.02048],
    )
}

/// Heisenberg group with the Korányi gauge; `Ω` a gauge ball. The margin
/// factor is small so that `Ω_r` is non-empty at a scale the chart can afford.
pub fn koranyi() -> RunConfig {
    RunConfig {
        name: "koranyi".into(),
        space: SpaceConfig {
            kind: MetricKind::Koranyi,
            weights: None,
            lo: vec![-0.5, -0.5, -0.25],
            hi: vec![0.5, 0.5, 0.25],
            measure: MeasureConfig::Lebesgue,
            domain: DomainConfig::Ball {
                center: vec![0.0, 0.0, 0.0],
                radius: 0.45,
            },
            boundary: ScalarFunction::Coordinate { axis: 0 },
            reference: None,
            mc_rel_tol: 1e-2,
            mc_seed: 0,
        },
        net: NetConfig {
            r: None,
            r_ladder: Some(vec![0.25, 0.2]),
            seed: 0,
            margin_factor: 1.0,
            extra_candidates: 4000,
        },
        solver: Default::default(),
        project: Default::default(),
        io: Default::default(),
        checks: Default::default(),
    }
}

/// The six Euclidean instances.
pub fn euclidean_instances() -> Vec<RunConfig> {
    let mut out = Vec::new();
    for make in [interval, square, disk] {
        for m in [MeasureChoice::Lebesgue, MeasureChoice::Linear] {
            out.push(make(m));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_build_and_have_interior() {
        let mut all = euclidean_instances();
        all.push(koranyi());
        for cfg in all {
            cfg.validate().unwrap();
            let space = cfg.build_space().unwrap();
            let r = cfg.ladder().unwrap()[0];
            // the centre of Ω has margin beyond margin_factor · r at the coarsest rung
            let c = space.bounds().center();
            assert!(space.domain_margin(&c) > cfg.net.margin_factor * r, "{}", cfg.name);
        }
    }
}
