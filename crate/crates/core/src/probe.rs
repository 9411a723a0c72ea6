//! Campanato-type diagnostics of a trajectory: tilt excess and its decay,
//! gradient densities, singular-set candidates, Caccioppoli, Poincaré and
//! reverse Hölder ratios, and the frozen-coefficient comparison.
//!
//! `liminf_{R→0}` is replaced by the minimum over the configured radii.
//! Integrals are midpoint sums with weight `cell volume · dt_snap`; `⨍` is the
//! plain average over covered cell/snapshot pairs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::entropy::GluedEntropy;
use crate::error::{Error, Result};
use crate::grid::{mean_over, weighted_mean, ParabolicCylinder, Point, Trajectory};
use crate::math::{abs, ln, powf, sqrt};
use crate::model::CrossDiffusion;
use crate::solver::{solve_frozen, FrozenProblem};

/// Right-hand sides below this are treated as vanishing.
pub const DEGENERATE_RHS: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    /// Strictly descending.
    pub radii: Vec<f64>,
    /// Excess threshold.
    pub eps0: f64,
    /// Gradient-density threshold.
    pub eps1: f64,
    /// Reverse Hölder exponent, `> 2`.
    pub p: f64,
    /// Campanato factor in `(0, 1/16]`.
    pub tau: f64,
}

impl ProbeConfig {
    pub fn new(radii: Vec<f64>) -> Result<Self> {
        let cfg = ProbeConfig { radii, eps0: 1e-2, eps1: 1e-2, p: 2.5, tau: 1.0 / 16.0 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() || self.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidArgument("probe radii must be positive and nonempty".into()));
        }
        if self.radii.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::InvalidArgument("probe radii must be strictly descending".into()));
        }
        if !(self.eps0 > 0.0) || !(self.eps1 > 0.0) {
            return Err(Error::InvalidArgument("thresholds must be positive".into()));
        }
        if !(self.p > 2.0) || !self.p.is_finite() {
            return Err(Error::InvalidArgument(format!("reverse Hölder exponent {} must exceed 2", self.p)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0 / 16.0) {
            return Err(Error::InvalidArgument(format!("Campanato factor {} must lie in (0, 1/16]", self.tau)));
        }
        Ok(())
    }
}

/// `largest, largest/2, …` down to the last radius `≥ 4·min_cell`.
pub fn dyadic_radii(largest: f64, min_cell: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = largest;
    while r >= 4.0 * min_cell * (1.0 - 1e-12) {
        out.push(r);
        r *= 0.5;
    }
    out
}

fn weight(traj: &Trajectory) -> f64 {
    traj.grid().cell_volume() * traj.grid().dt_snap()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `φ(z₀; R) = ⨍_{𝒞_R} |u − (u)_{z₀,R}|²`.
pub fn tilt_excess(traj: &Trajectory, cyl: &ParabolicCylinder) -> Result<f64> {
    let (cells, snaps) = cyl.coverage(traj.grid())?;
    let mean = mean_over(traj, &cells, &snaps);
    let mut acc = 0.0;
    for &k in &snaps {
        for &c in &cells {
            acc += sq_dist(traj.state(k, c), &mean);
        }
    }
    Ok(acc / (cells.len() * snaps.len()) as f64)
}

/// `⨍_{𝒞_R} |u − b|²` for a fixed vector `b`.
pub fn mean_square_deviation(traj: &Trajectory, cyl: &ParabolicCylinder, b: &[f64]) -> Result<f64> {
    let (cells, snaps) = cyl.coverage(traj.grid())?;
    let mut acc = 0.0;
    for &k in &snaps {
        for &c in &cells {
            acc += sq_dist(traj.state(k, c), b);
        }
    }
    Ok(acc / (cells.len() * snaps.len()) as f64)
}

fn gradient_integral(traj: &Trajectory, cells: &[usize], snaps: &[usize]) -> f64 {
    let mut acc = 0.0;
    for &k in snaps {
        for &c in cells {
            acc += traj.grad_sq(k, c);
        }
    }
    acc * weight(traj)
}

/// `R^{−d} ∫_{𝒞_R} |∇u|²`.
pub fn gradient_density(traj: &Trajectory, cyl: &ParabolicCylinder) -> Result<f64> {
    let (cells, snaps) = cyl.coverage(traj.grid())?;
    let d = traj.grid().dim() as i32;
    Ok(gradient_integral(traj, &cells, &snaps) / libm::pow(cyl.radius, d as f64))
}

/// `⨍_{𝒞_R} |∇u − (∇u)_{z₀,R}|²`.
pub fn gradient_excess(traj: &Trajectory, cyl: &ParabolicCylinder) -> Result<f64> {
    let (cells, snaps) = cyl.coverage(traj.grid())?;
    let grid = traj.grid();
    let (n, dim) = (grid.n_species(), grid.dim());
    let mut grads = Vec::with_capacity(cells.len() * snaps.len() * n * dim);
    for &k in &snaps {
        for &c in &cells {
            for s in 0..n {
                for a in 0..dim {
                    grads.push(traj.gradient(k, c, s, a));
                }
            }
        }
    }
    let width = n * dim;
    let count = (grads.len() / width) as f64;
    let mut mean = vec![0.0; width];
    for chunk in grads.chunks(width) {
        for (m, g) in mean.iter_mut().zip(chunk) {
            *m += g;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    Ok(grads.chunks(width).map(|g| sq_dist(g, &mean)).sum::<f64>() / count)
}

/// Excess-decay curve over a radii ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcessCurve {
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope of `log φ` against `log R` (`2α`); NaN when some
    /// `φ` vanishes.
    pub slope: f64,
}

impl ExcessCurve {
    pub fn alpha(&self) -> f64 {
        0.5 * self.slope
    }

    pub fn is_flat(&self) -> bool {
        self.slope.is_nan()
    }
}

pub fn excess_decay_curve(traj: &Trajectory, center: Point, t0: f64, radii: &[f64]) -> Result<ExcessCurve> {
    let mut points = Vec::with_capacity(radii.len());
    for &r in radii {
        points.push((r, tilt_excess(traj, &ParabolicCylinder::new(center, t0, r)?)?));
    }
    let slope = log_slope(&points);
    Ok(ExcessCurve { points, slope })
}

fn log_slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 || points.iter().any(|p| !(p.1 > 0.0)) {
        return f64::NAN;
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| ln(p.0)).collect();
    let ys: Vec<f64> = points.iter().map(|p| ln(p.1)).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// `φ(z₀; τR) / φ(z₀; R)`; NaN when `φ(z₀; R)` vanishes.
pub fn campanato_ratio(traj: &Trajectory, cyl: &ParabolicCylinder, tau: f64) -> Result<f64> {
    let outer = tilt_excess(traj, cyl)?;
    let inner = tilt_excess(traj, &cyl.scaled(tau))?;
    Ok(if outer > 0.0 { inner / outer } else { f64::NAN })
}

/// Minima over the radii at one lattice point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub center: Point,
    pub t0: f64,
    pub min_excess: f64,
    pub min_density: f64,
    /// Number of radii whose cylinder fit.
    pub radii_used: usize,
    pub flagged: bool,
}

/// Evaluates the smallness conditions at `z₀` over all radii whose cylinder
/// lies inside the trajectory.
pub fn candidate_at(traj: &Trajectory, cfg: &ProbeConfig, center: Point, t0: f64) -> Result<Candidate> {
    let mut min_excess = f64::INFINITY;
    let mut min_density = f64::INFINITY;
    let mut used = 0;
    for &r in &cfg.radii {
        let cyl = ParabolicCylinder::new(center, t0, r)?;
        if cyl.check_inside(traj.grid()).is_err() {
            continue;
        }
        min_excess = min_excess.min(tilt_excess(traj, &cyl)?);
        min_density = min_density.min(gradient_density(traj, &cyl)?);
        used += 1;
    }
    if used == 0 {
        return Err(Error::CylinderOutside);
    }
    let flagged = min_excess > cfg.eps0 || min_density > cfg.eps1;
    Ok(Candidate { center, t0, min_excess, min_density, radii_used: used, flagged })
}

/// Candidate map over `centers` at time `t0`.
pub fn singular_candidates(traj: &Trajectory, cfg: &ProbeConfig, centers: &[Point], t0: f64) -> Result<Vec<Candidate>> {
    centers.iter().map(|&c| candidate_at(traj, cfg, c, t0)).collect()
}

/// Cell centres (every `stride`-th cell per axis) whose ball of radius
/// `radius` lies in the box.
pub fn candidate_lattice(traj: &Trajectory, radius: f64, stride: usize) -> Vec<Point> {
    let grid = traj.grid();
    let stride = stride.max(1);
    (0..grid.n_cells())
        .filter(|&c| grid.cell_coords(c).iter().take(grid.dim()).all(|&i| i % stride == 0))
        .map(|c| grid.cell_center(c))
        .filter(|x| grid.ball_inside(x, radius))
        .collect()
}

/// A ratio `LHS / RHS`; `degenerate` marks a vanishing right-hand side, in
/// which case the ratio is reported as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub degenerate: bool,
}

impl Ratio {
    fn new(lhs: f64, rhs: f64) -> Self {
        if rhs < DEGENERATE_RHS {
            Ratio { lhs, rhs, ratio: 0.0, degenerate: true }
        } else {
            Ratio { lhs, rhs, ratio: lhs / rhs, degenerate: false }
        }
    }
}

/// `sup |f(u)|²` with the max-norm over components.
fn sup_reaction_sq<M: CrossDiffusion + ?Sized>(model: &M, traj: &Trajectory, cells: &[usize], snaps: &[usize]) -> f64 {
    let mut f = vec![0.0; model.n()];
    let mut sup = 0.0f64;
    for &k in snaps {
        for &c in cells {
            model.reaction(traj.state(k, c), &mut f);
            for v in &f {
                sup = sup.max(abs(*v));
            }
        }
    }
    sup * sup
}

/// `∫_{𝒞_R}|∇u|²` against
/// `R⁻² ∫_{𝒞_{2R}} |u − (ũ)_{x₀,R}(t)|² + R^{d+4} sup|f(u)|²`.
pub fn caccioppoli_ratio<M: CrossDiffusion + ?Sized>(traj: &Trajectory, model: &M, cyl: &ParabolicCylinder) -> Result<Ratio> {
    let grid = traj.grid();
    let (cells, snaps) = cyl.coverage(grid)?;
    let big = cyl.scaled(2.0);
    let (bcells, bsnaps) = big.coverage(grid)?;
    let lhs = gradient_integral(traj, &cells, &snaps);
    let r = cyl.radius;
    let mut osc = 0.0;
    for &k in &bsnaps {
        let wm = weighted_mean(traj, &cyl.center, r, k)?;
        for &c in &bcells {
            osc += sq_dist(traj.state(k, c), &wm);
        }
    }
    osc *= weight(traj);
    let d = grid.dim() as f64;
    let rhs = osc / (r * r) + powf(r, d + 4.0) * sup_reaction_sq(model, traj, &bcells, &bsnaps);
    Ok(Ratio::new(lhs, rhs))
}

/// `∫_{𝒞_R}|u − (u)_{z₀,R}|²` against `R² ∫_{𝒞_{2R}}|∇u|² + R^{d+6} sup|f(u)|²`.
pub fn poincare_ratio<M: CrossDiffusion + ?Sized>(traj: &Trajectory, model: &M, cyl: &ParabolicCylinder) -> Result<Ratio> {
    let grid = traj.grid();
    let (cells, snaps) = cyl.coverage(grid)?;
    let (bcells, bsnaps) = cyl.scaled(2.0).coverage(grid)?;
    let mean = mean_over(traj, &cells, &snaps);
    let mut lhs = 0.0;
    for &k in &snaps {
        for &c in &cells {
            lhs += sq_dist(traj.state(k, c), &mean);
        }
    }
    lhs *= weight(traj);
    let r = cyl.radius;
    let d = grid.dim() as f64;
    let rhs = r * r * gradient_integral(traj, &bcells, &bsnaps) + powf(r, d + 6.0) * sup_reaction_sq(model, traj, &bcells, &bsnaps);
    Ok(Ratio::new(lhs, rhs))
}

/// `(⨍_{𝒞_R}|∇u|^p)^{1/p} / ((⨍_{𝒞_{4R}}|∇u|²)^{1/2} + R)`.
pub fn reverse_holder_ratio(traj: &Trajectory, cyl: &ParabolicCylinder, p: f64) -> Result<f64> {
    if !(p > 2.0) {
        return Err(Error::InvalidArgument(format!("exponent {p} must exceed 2")));
    }
    let grid = traj.grid();
    let (cells, snaps) = cyl.coverage(grid)?;
    let (bcells, bsnaps) = cyl.scaled(4.0).coverage(grid)?;
    let mut lp = 0.0;
    for &k in &snaps {
        for &c in &cells {
            lp += powf(traj.grad_sq(k, c), 0.5 * p);
        }
    }
    lp /= (cells.len() * snaps.len()) as f64;
    let mut l2 = 0.0;
    for &k in &bsnaps {
        for &c in &bcells {
            l2 += traj.grad_sq(k, c);
        }
    }
    l2 /= (bcells.len() * bsnaps.len()) as f64;
    Ok(powf(lp, 1.0 / p) / (sqrt(l2) + cyl.radius))
}

/// Gradient energies of the frozen comparison on `𝒞_{R/8}(z₀)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenComparison {
    /// `∫ |∇(ū − u)|²`
    pub error_energy: f64,
    /// `∫ |∇u|²`
    pub gradient_energy: f64,
    pub ratio: f64,
    /// Linear-solve residual of the frozen problem.
    pub residual: f64,
}

/// Freezes `A` at `(u)_{z₀,R}`, solves on `𝒞_{R/8}(z₀)` with the
/// trajectory as Dirichlet data and compares gradients.
pub fn frozen_comparison<M: CrossDiffusion + ?Sized>(
    traj: &Trajectory,
    model: &M,
    glued: &GluedEntropy,
    cyl: &ParabolicCylinder,
) -> Result<FrozenComparison> {
    let frozen = FrozenProblem::build(model, glued, traj, cyl)?;
    let sol = solve_frozen(model, &frozen, traj)?;
    let grid = traj.grid();
    let n = grid.n_species();
    let mut local = vec![usize::MAX; grid.n_cells()];
    for (i, &c) in sol.cells.iter().enumerate() {
        local[c] = i;
    }
    let diff = |sp: usize, k: usize, c: usize, s: usize| -> f64 {
        if local[c] == usize::MAX {
            0.0
        } else {
            sol.state(sp, local[c])[s] - traj.state(k, c)[s]
        }
    };
    let mut err = 0.0;
    for (sp, &k) in sol.snapshots.iter().enumerate() {
        for &c in &sol.cells {
            for axis in 0..grid.dim() {
                let h = grid.cell_size(axis);
                let (Some(m), Some(p)) = (grid.neighbor(c, axis, -1), grid.neighbor(c, axis, 1)) else {
                    return Err(Error::CylinderOutside);
                };
                for s in 0..n {
                    let g = (diff(sp, k, p, s) - diff(sp, k, m, s)) / (2.0 * h);
                    err += g * g;
                }
            }
        }
    }
    err *= weight(traj);
    let energy = gradient_integral(traj, &sol.cells, &sol.snapshots);
    let ratio = if energy > 0.0 { err / energy } else { 0.0 };
    Ok(FrozenComparison { error_energy: err, gradient_energy: energy, ratio, residual: sol.residual })
}
