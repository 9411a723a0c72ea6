//! CSV tables. Every table has a header row and a fixed column order;
//! floats carry 17 significant digits.

use std::io::Write;
use std::path::Path;

use xdiff_core::grid::SpaceTimeGrid;
use xdiff_core::model::CrossDiffusion;
use xdiff_core::solver::{ConvergenceTable, EntropyRow, StepStats};
use xdiff_core::verify::{CertificationReport, SubspaceKind};

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| float(*x)).collect::<Vec<_>>().join(";")
}

/// A CSV table held in memory until written.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn write_to<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.header)?;
        for r in &self.rows {
            out.write_record(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write(&self, path: &Path) -> csv::Result<()> {
        self.write_to(std::fs::File::create(path)?)
    }

    pub fn render(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

pub fn certification(reports: &[CertificationReport]) -> Table {
    let mut t = Table::new(&[
        "model",
        "condition",
        "subspace",
        "resolution",
        "samples",
        "epsilon",
        "target",
        "min_margin",
        "argmin",
        "hessian_min",
        "hessian_max",
        "near_diagonal_bound",
        "near_diagonal_mu",
        "operator_norm",
        "lipschitz_slack",
        "passed",
    ]);
    for r in reports {
        t.push(vec![
            r.model.clone(),
            r.condition().into(),
            match r.subspace {
                SubspaceKind::Full => "full".into(),
                SubspaceKind::ZeroSum => "zero-sum".into(),
            },
            r.resolution.to_string(),
            r.samples.to_string(),
            opt(r.epsilon),
            float(r.target),
            float(r.min_margin),
            list(&r.argmin),
            float(r.hessian_bounds.0),
            float(r.hessian_bounds.1),
            opt(r.near_diagonal.map(|p| p.0)),
            opt(r.near_diagonal.map(|p| p.1)),
            opt(r.operator_norm),
            float(r.lipschitz_slack),
            r.passed.to_string(),
        ]);
    }
    t
}

pub fn entropy(rows: &[EntropyRow]) -> Table {
    let mut t = Table::new(&["snapshot", "time", "entropy", "delta", "dissipation", "reaction"]);
    for r in rows {
        t.push(vec![r.snapshot.to_string(), float(r.time), float(r.entropy), float(r.delta), float(r.dissipation), float(r.reaction)]);
    }
    t
}

pub fn newton(stats: &[StepStats], t_start: f64, dt: f64) -> Table {
    let mut t = Table::new(&["step", "time", "iterations", "residual", "halvings"]);
    for (i, s) in stats.iter().enumerate() {
        let step = i + 1;
        t.push(vec![step.to_string(), float(t_start + step as f64 * dt), s.iterations.to_string(), float(s.residual), s.halvings.to_string()]);
    }
    t
}

/// Rows of a refinement study with the observed order between consecutive
/// rows (empty on the first).
pub fn convergence(refine: &str, extent: f64, table: &ConvergenceTable) -> Table {
    let mut t = Table::new(&["refine", "cells", "h", "dt", "error", "observed_order"]);
    let by_space = refine == "space";
    let mut prev: Option<(f64, f64)> = None;
    for r in &table.rows {
        let h = extent / r.cells as f64;
        let x = if by_space { h } else { r.dt };
        let order = prev.map(|(px, pe)| (r.error / pe).ln() / (x / px).ln());
        t.push(vec![refine.into(), r.cells.to_string(), float(h), float(r.dt), float(r.error), opt(order)]);
        prev = Some((x, r.error));
    }
    t
}

/// Last accepted state of a failed run.
pub fn state_dump(grid: &SpaceTimeGrid, model: &dyn CrossDiffusion, state: &[f64]) -> Table {
    let mut t = Table::new(&["cell", "x0", "x1", "species", "value"]);
    let n = model.n();
    for (c, chunk) in state.chunks(n).enumerate() {
        let x = grid.cell_center(c);
        for (s, v) in chunk.iter().enumerate() {
            t.push(vec![c.to_string(), float(x[0]), float(x[1]), s.to_string(), float(*v)]);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(float(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(float(0.1), "1.0000000000000001e-1");
    }

    #[test]
    fn header_row_comes_first() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        assert_eq!(t.render(), "a,b\n1,\"x,y\"\n");
    }
}
