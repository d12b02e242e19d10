//! File output for nets, graphs, forms, solutions, probe values and reports.
//!
//! Tables are comma-separated with a header row; each has a small JSON
//! sidecar holding the metadata needed to interpret it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::config::Format;
use crate::energy::QuadraticForm;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::harness::convergence::space_hash;
use crate::harness::ExperimentReport;
use crate::net::Net;
use crate::solver::SolveResult;
use crate::space::{Point, Space};

/// Writes into one directory, creating it on first use.
pub struct Writer {
    dir: PathBuf,
    formats: Vec<Format>,
}

impl Writer {
    pub fn new(dir: impl Into<PathBuf>, formats: &[Format]) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let formats = if formats.is_empty() { vec![Format::Csv] } else { formats.to_vec() };
        Ok(Writer { dir, formats })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    /// Writes `stem.csv` and/or `stem.rows.json` depending on the formats.
    fn table(&self, stem: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        if self.formats.contains(&Format::Csv) {
            let mut w = csv::Writer::from_path(self.path(&format!("{stem}.csv")))?;
            w.write_record(header)?;
            for row in rows {
                w.write_record(row)?;
            }
            w.flush()?;
        }
        if self.formats.contains(&Format::Json) {
            let objs: Vec<serde_json::Map<String, serde_json::Value>> = rows
                .iter()
                .map(|row| {
                    header
                        .iter()
                        .zip(row)
                        .map(|(h, v)| (h.clone(), cell_json(v)))
                        .collect()
                })
                .collect();
            self.json(&format!("{stem}.rows.json"), &objs)?;
        }
        Ok(())
    }

    /// `net.csv` (id, coordinates, weight, interior) and `net.json`.
    pub fn net(&self, space: &Space, net: &Net) -> Result<()> {
        let mut header = vec!["id".to_string()];
        header.extend(coord_names(space.dim()));
        header.push("weight".into());
        header.push("interior".into());
        let rows: Vec<Vec<String>> = net
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut row = vec![i.to_string()];
                row.extend(v.coords().iter().map(f64::to_string));
                row.push(net.weights[i].to_string());
                row.push(u8::from(net.interior[i]).to_string());
                row
            })
            .collect();
        self.table("net", &header, &rows)?;
        self.json(
            "net.json",
            &json!({
                "r": net.r(),
                "seed": net.seed(),
                "space_hash": space_hash(space),
                "vertex_count": net.len(),
                "interior_count": net.interior_count(),
                "margin_factor": net.margin_factor,
            }),
        )?;
        Ok(())
    }

    /// `edges.csv` with one row per unordered edge `i < j`, and `edges.json`.
    pub fn graph(&self, graph: &Graph) -> Result<()> {
        let rows: Vec<Vec<String>> = graph.edges().map(|(i, j)| vec![i.to_string(), j.to_string()]).collect();
        self.table("edges", &["i".into(), "j".into()], &rows)?;
        self.json(
            "edges.json",
            &json!({ "edge_count": graph.edge_count(), "max_degree": graph.max_degree() }),
        )?;
        Ok(())
    }

    /// `form_a.mtx` (coordinate format, 1-based), `form_b.txt`, `form.json`.
    pub fn form(&self, form: &QuadraticForm) -> Result<()> {
        let n = form.a.n();
        let mut mtx = String::from("%%MatrixMarket matrix coordinate real general\n");
        mtx.push_str(&format!("{n} {n} {}\n", form.a.nnz()));
        for i in 0..n {
            let (cols, vals) = form.a.row(i);
            for (c, v) in cols.iter().zip(vals) {
                mtx.push_str(&format!("{} {} {}\n", i + 1, c + 1, v));
            }
        }
        fs::write(self.path("form_a.mtx"), mtx)?;
        let b: String = form.b.iter().map(|v| format!("{v}\n")).collect();
        fs::write(self.path("form_b.txt"), b)?;
        self.json(
            "form.json",
            &json!({
                "c0": form.c0,
                "interior_count": form.unknowns(),
                "r": form.r,
                "interior_ids": form.interior_ids,
            }),
        )?;
        Ok(())
    }

    /// `solution.csv` (id, coordinates, value, interior) and `solution.json`.
    pub fn solution(&self, space: &Space, net: &Net, sol: &SolveResult) -> Result<()> {
        let mut header = vec!["id".to_string()];
        header.extend(coord_names(space.dim()));
        header.push("value".into());
        header.push("interior".into());
        let rows: Vec<Vec<String>> = net
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut row = vec![i.to_string()];
                row.extend(v.coords().iter().map(f64::to_string));
                row.push(sol.minimizer.values[i].to_string());
                row.push(u8::from(net.interior[i]).to_string());
                row
            })
            .collect();
        self.table("solution", &header, &rows)?;
        self.json(
            "solution.json",
            &json!({
                "iterations": sol.iterations,
                "relative_residual": sol.relative_residual,
                "energy_value": sol.energy_value,
                "status": sol.status,
            }),
        )?;
        Ok(())
    }

    /// `values.csv`: the probe coordinates with an appended value column.
    pub fn probe_values(&self, points: &[Point], values: &[f64], sidecar: &serde_json::Value) -> Result<()> {
        let dim = points.first().map_or(0, Point::dim);
        let mut header = coord_names(dim);
        header.push("value".into());
        let rows: Vec<Vec<String>> = points
            .iter()
            .zip(values)
            .map(|(p, v)| {
                let mut row: Vec<String> = p.coords().iter().map(f64::to_string).collect();
                row.push(v.to_string());
                row
            })
            .collect();
        self.table("values", &header, &rows)?;
        self.json("values.json", sidecar)?;
        Ok(())
    }

    /// `report.json` in full and `summary.csv` with one row per rung.
    pub fn report(&self, report: &ExperimentReport) -> Result<()> {
        self.json("report.json", report)?;
        let header: Vec<String> = [
            "r",
            "vertex_count",
            "interior_count",
            "edge_count",
            "max_degree",
            "solve_iterations",
            "energy_minimizer",
            "energy_zero",
            "graph_energy_minimizer",
            "graph_energy_boundary",
            "minimality",
            "mazya_constant",
            "whitney_l2_error",
            "whitney_energy_ratio",
            "whitney_n12_norm",
            "path_integral_l2_error",
            "consistency_pass",
            "error",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        use crate::project::ProjectionKind::{PathIntegral, Whitney};
        let rows: Vec<Vec<String>> = report
            .records
            .iter()
            .map(|r| {
                let w = r.projection(Whitney);
                let p = r.projection(PathIntegral);
                vec![
                    r.r.to_string(),
                    r.vertex_count.to_string(),
                    r.interior_count.to_string(),
                    r.edge_count.to_string(),
                    r.max_degree.to_string(),
                    r.solve_iterations.to_string(),
                    r.energy_minimizer.to_string(),
                    r.energy_zero.to_string(),
                    r.graph_energy_minimizer.to_string(),
                    r.graph_energy_boundary.to_string(),
                    r.minimality.to_string(),
                    opt(r.mazya_constant),
                    opt(w.and_then(|x| x.l2_error)),
                    opt(w.and_then(|x| x.energy_ratio)),
                    opt(w.and_then(|x| x.n12_norm)),
                    opt(p.and_then(|x| x.l2_error)),
                    r.projections.iter().all(|x| x.consistency_pass).to_string(),
                    r.error.clone().unwrap_or_default(),
                ]
            })
            .collect();
        let mut w = csv::Writer::from_path(self.path("summary.csv"))?;
        w.write_record(&header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn coord_names(dim: usize) -> Vec<String> {
    (0..dim).map(|k| format!("x{k}")).collect()
}

fn cell_json(v: &str) -> serde_json::Value {
    if let Ok(i) = v.parse::<i64>() {
        return i.into();
    }
    match v.parse::<f64>() {
        Ok(x) => serde_json::Number::from_f64(x).map_or(serde_json::Value::Null, Into::into),
        Err(_) => v.into(),
    }
}

/// Reads probe points from a comma-separated file with `dim` leading
/// coordinate columns. A non-numeric first row is treated as a header.
pub fn read_probes(path: &Path, dim: usize) -> Result<Vec<Point>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)?;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() < dim {
            return Err(Error::Usage(format!(
                "{}: row {} has {} columns, expected {dim}",
                path.display(),
                line + 1,
                rec.len()
            )));
        }
        let coords: std::result::Result<Vec<f64>, _> = rec.iter().take(dim).map(str::parse::<f64>).collect();
        match coords {
            Ok(c) => out.push(Point::from_slice(&c)?),
            Err(_) if line == 0 => continue,
            Err(e) => {
                return Err(Error::Usage(format!("{}: row {}: {e}", path.display(), line + 1)));
            }
        }
    }
    Ok(out)
}
