//! Probe tables over a lattice of centres, evaluated in parallel.

use xdiff_core::entropy::GluedEntropy;
use xdiff_core::grid::{ParabolicCylinder, Point, Trajectory};
use xdiff_core::model::CrossDiffusion;
use xdiff_core::probe::{
    caccioppoli_ratio, campanato_ratio, candidate_at, excess_decay_curve, frozen_comparison, gradient_density, gradient_excess,
    poincare_ratio, reverse_holder_ratio, tilt_excess, Candidate, ProbeConfig,
};
use xdiff_core::Result;

use crate::parallel::ordered_map;
use crate::report::{float, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTables {
    pub ratios: Table,
    pub candidates: Table,
    pub slopes: Table,
    pub flagged: usize,
}

struct Row {
    quantity: &'static str,
    value: f64,
    degenerate: bool,
}

fn fits(traj: &Trajectory, cyl: &ParabolicCylinder) -> bool {
    cyl.check_inside(traj.grid()).is_ok()
}

fn quantities<M: CrossDiffusion + ?Sized>(
    traj: &Trajectory,
    model: &M,
    cfg: &ProbeConfig,
    frozen: Option<&GluedEntropy>,
    cyl: &ParabolicCylinder,
) -> Result<Vec<Row>> {
    let plain = |quantity, value| Row { quantity, value, degenerate: false };
    let mut rows = vec![
        plain("excess", tilt_excess(traj, cyl)?),
        plain("gradient_density", gradient_density(traj, cyl)?),
        plain("gradient_excess", gradient_excess(traj, cyl)?),
    ];
    let grid = traj.grid();
    let h = (0..grid.dim()).map(|a| grid.cell_size(a)).fold(f64::INFINITY, f64::min);
    if cfg.tau * cyl.radius >= h {
        rows.push(plain("campanato_ratio", campanato_ratio(traj, cyl, cfg.tau)?));
    }
    if fits(traj, &cyl.scaled(2.0)) {
        let c = caccioppoli_ratio(traj, model, cyl)?;
        rows.push(Row { quantity: "caccioppoli", value: c.ratio, degenerate: c.degenerate });
        let p = poincare_ratio(traj, model, cyl)?;
        rows.push(Row { quantity: "poincare", value: p.ratio, degenerate: p.degenerate });
    }
    if fits(traj, &cyl.scaled(4.0)) {
        rows.push(plain("reverse_holder", reverse_holder_ratio(traj, cyl, cfg.p)?));
    }
    if let (Some(glued), true) = (frozen, cyl.radius / 8.0 >= h) {
        let f = frozen_comparison(traj, model, glued, cyl)?;
        rows.push(plain("frozen_error_ratio", f.ratio));
    }
    Ok(rows)
}

/// Candidate map, excess-decay slopes and per-cylinder quantities at every
/// centre for every radius whose cylinder fits.
pub fn probe_tables<M: CrossDiffusion + ?Sized>(
    traj: &Trajectory,
    model: &M,
    cfg: &ProbeConfig,
    centers: &[Point],
    t0: f64,
    frozen: Option<&GluedEntropy>,
    threads: usize,
) -> Result<ProbeTables> {
    let pairs: Vec<(usize, f64)> = (0..centers.len()).flat_map(|c| cfg.radii.iter().map(move |&r| (c, r))).collect();
    let per_pair = ordered_map(pairs.len(), threads, |i| -> Result<Option<Vec<Row>>> {
        let (c, r) = pairs[i];
        let cyl = ParabolicCylinder::new(centers[c], t0, r)?;
        if !fits(traj, &cyl) {
            return Ok(None);
        }
        quantities(traj, model, cfg, frozen, &cyl).map(Some)
    });
    let per_center = ordered_map(centers.len(), threads, |c| -> Result<(Candidate, Vec<f64>, f64)> {
        let cand = candidate_at(traj, cfg, centers[c], t0)?;
        let radii: Vec<f64> = cfg
            .radii
            .iter()
            .copied()
            .filter(|&r| ParabolicCylinder::new(centers[c], t0, r).map(|cyl| fits(traj, &cyl)).unwrap_or(false))
            .collect();
        let slope = excess_decay_curve(traj, centers[c], t0, &radii)?.slope;
        Ok((cand, radii, slope))
    });

    let mut ratios = Table::new(&["x0", "x1", "t0", "radius", "quantity", "value", "degenerate"]);
    for (&(c, r), rows) in pairs.iter().zip(per_pair) {
        let Some(rows) = rows? else { continue };
        let x = centers[c];
        for row in rows {
            ratios.push(vec![
                float(x[0]),
                float(x[1]),
                float(t0),
                float(r),
                row.quantity.into(),
                float(row.value),
                row.degenerate.to_string(),
            ]);
        }
    }
    let mut candidates = Table::new(&["x0", "x1", "t0", "min_excess", "min_density", "radii_used", "flagged"]);
    let mut slopes = Table::new(&["x0", "x1", "t0", "radius_max", "radius_min", "slope", "alpha"]);
    let mut flagged = 0;
    for item in per_center {
        let (cand, radii, slope) = item?;
        flagged += usize::from(cand.flagged);
        let x = cand.center;
        candidates.push(vec![
            float(x[0]),
            float(x[1]),
            float(t0),
            float(cand.min_excess),
            float(cand.min_density),
            cand.radii_used.to_string(),
            cand.flagged.to_string(),
        ]);
        slopes.push(vec![
            float(x[0]),
            float(x[1]),
            float(t0),
            float(radii[0]),
            float(*radii.last().expect("a fitting radius")),
            float(slope),
            float(0.5 * slope),
        ]);
    }
    Ok(ProbeTables { ratios, candidates, slopes, flagged })
}
