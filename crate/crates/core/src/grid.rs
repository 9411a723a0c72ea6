//! Uniform Cartesian space-time grids, cell-centered trajectories and
//! parabolic cylinders `B_R(x₀) × (t₀ − R², t₀]`.
//!
//! Cells belong to a ball iff their center does. Cylinder integrals are
//! midpoint sums `cell volume · dt_snap · Σ values`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{abs, sqrt};

/// Spatial point; only the first `dim` coordinates are meaningful.
pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeGrid {
    dim: usize,
    extent: Point,
    cells_per_axis: usize,
    dt_snap: f64,
    t_start: f64,
    snapshots: usize,
    n_species: usize,
}

impl SpaceTimeGrid {
    pub fn new(
        dim: usize,
        extent: &[f64],
        cells_per_axis: usize,
        dt_snap: f64,
        t_start: f64,
        snapshots: usize,
        n_species: usize,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidArgument(alloc::format!("spatial dimension {dim} not in {{1, 2}}")));
        }
        if extent.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: extent.len() });
        }
        if extent.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::InvalidArgument("extent must be positive".into()));
        }
        if cells_per_axis < 4 {
            return Err(Error::InvalidArgument("need at least 4 cells per axis".into()));
        }
        if !(dt_snap > 0.0) || !t_start.is_finite() {
            return Err(Error::InvalidArgument("snapshot spacing must be positive".into()));
        }
        if snapshots == 0 || n_species == 0 {
            return Err(Error::InvalidArgument("need at least one snapshot and one species".into()));
        }
        let mut ext = [0.0; 2];
        ext[..dim].copy_from_slice(extent);
        Ok(SpaceTimeGrid { dim, extent: ext, cells_per_axis, dt_snap, t_start, snapshots, n_species })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent[..self.dim]
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    pub fn dt_snap(&self) -> f64 {
        self.dt_snap
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn n_cells(&self) -> usize {
        self.cells_per_axis.pow(self.dim as u32)
    }

    pub fn cell_size(&self, axis: usize) -> f64 {
        self.extent[axis] / self.cells_per_axis as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.cell_size(a)).product()
    }

    /// Snapshot time `t_k = t_start + k · dt_snap`.
    pub fn snapshot_time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt_snap
    }

    pub fn t_end(&self) -> f64 {
        self.snapshot_time(self.snapshots - 1)
    }

    /// Per-axis integer coordinates of a cell; `x` varies fastest.
    pub fn cell_coords(&self, cell: usize) -> [usize; 2] {
        let n = self.cells_per_axis;
        if self.dim == 1 {
            [cell, 0]
        } else {
            [cell % n, cell / n]
        }
    }

    pub fn cell_index(&self, coords: [usize; 2]) -> usize {
        if self.dim == 1 {
            coords[0]
        } else {
            coords[1] * self.cells_per_axis + coords[0]
        }
    }

    pub fn cell_center(&self, cell: usize) -> Point {
        let c = self.cell_coords(cell);
        let mut p = [0.0; 2];
        for (a, pa) in p.iter_mut().enumerate().take(self.dim) {
            *pa = (c[a] as f64 + 0.5) * self.cell_size(a);
        }
        p
    }

    /// Neighbor of `cell` along `axis` in direction `dir` (−1 or +1), if any.
    pub fn neighbor(&self, cell: usize, axis: usize, dir: isize) -> Option<usize> {
        let mut c = self.cell_coords(cell);
        let v = c[axis] as isize + dir;
        if v < 0 || v >= self.cells_per_axis as isize {
            return None;
        }
        c[axis] = v as usize;
        Some(self.cell_index(c))
    }

    /// Index of the snapshot at time `t`, if `t` is a snapshot time.
    pub fn snapshot_at(&self, t: f64) -> Option<usize> {
        let k = (t - self.t_start) / self.dt_snap;
        let r = libm::round(k);
        if r < 0.0 || abs(k - r) > 1e-6 || r as usize >= self.snapshots {
            None
        } else {
            Some(r as usize)
        }
    }

    fn time_tol(&self) -> f64 {
        1e-9 * self.dt_snap
    }

    pub(crate) fn distance(&self, a: &Point, b: &Point) -> f64 {
        sqrt((0..self.dim).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum())
    }

    /// Cells whose centers lie in the closed ball `B_R(x₀)`.
    pub fn cells_in_ball(&self, center: &Point, radius: f64) -> Vec<usize> {
        (0..self.n_cells())
            .filter(|&c| self.distance(&self.cell_center(c), center) <= radius)
            .collect()
    }

    /// Whether `B_R(x₀)` lies inside the spatial box.
    pub fn ball_inside(&self, center: &Point, radius: f64) -> bool {
        (0..self.dim).all(|a| center[a] - radius >= -1e-12 && center[a] + radius <= self.extent[a] + 1e-12)
    }
}

/// Cell-centered values per (snapshot, cell, species), species fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: SpaceTimeGrid,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(grid: SpaceTimeGrid, values: Vec<f64>) -> Result<Self> {
        let expected = grid.snapshots() * grid.n_cells() * grid.n_species();
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("trajectory contains non-finite values".into()));
        }
        Ok(Trajectory { grid, values })
    }

    /// Builds a trajectory by sampling `f(x, t, out)` at cell centers and
    /// snapshot times.
    pub fn from_fn<F: Fn(&Point, f64, &mut [f64])>(grid: SpaceTimeGrid, f: F) -> Result<Self> {
        let n = grid.n_species();
        let mut values = vec![0.0; grid.snapshots() * grid.n_cells() * n];
        for k in 0..grid.snapshots() {
            let t = grid.snapshot_time(k);
            for c in 0..grid.n_cells() {
                let x = grid.cell_center(c);
                let off = (k * grid.n_cells() + c) * n;
                f(&x, t, &mut values[off..off + n]);
            }
        }
        Trajectory::new(grid, values)
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn state(&self, k: usize, cell: usize) -> &[f64] {
        let n = self.grid.n_species();
        let off = (k * self.grid.n_cells() + cell) * n;
        &self.values[off..off + n]
    }

    pub fn snapshot(&self, k: usize) -> &[f64] {
        let len = self.grid.n_cells() * self.grid.n_species();
        &self.values[k * len..(k + 1) * len]
    }

    /// Checks `Σ_i u_i ∈ [1 − tol, 1 + tol]` in every cell.
    pub fn check_volume_filling(&self, tol: f64) -> Result<()> {
        let n = self.grid.n_species();
        for chunk in self.values.chunks(n) {
            let s: f64 = chunk.iter().sum();
            if abs(s - 1.0) > tol {
                return Err(Error::DomainViolation { component: n, value: s });
            }
        }
        Ok(())
    }

    /// Centered difference of species `s` along `axis` at cell `c`
    /// (one-sided at box faces).
    pub fn gradient(&self, k: usize, cell: usize, s: usize, axis: usize) -> f64 {
        let h = self.grid.cell_size(axis);
        let plus = self.grid.neighbor(cell, axis, 1);
        let minus = self.grid.neighbor(cell, axis, -1);
        match (minus, plus) {
            (Some(m), Some(p)) => (self.state(k, p)[s] - self.state(k, m)[s]) / (2.0 * h),
            (None, Some(p)) => (self.state(k, p)[s] - self.state(k, cell)[s]) / h,
            (Some(m), None) => (self.state(k, cell)[s] - self.state(k, m)[s]) / h,
            (None, None) => 0.0,
        }
    }

    /// `|∇u|²` summed over species and axes.
    pub fn grad_sq(&self, k: usize, cell: usize) -> f64 {
        let mut acc = 0.0;
        for s in 0..self.grid.n_species() {
            for a in 0..self.grid.dim() {
                let g = self.gradient(k, cell, s, a);
                acc += g * g;
            }
        }
        acc
    }
}

/// `B_R(x₀) × (t₀ − R², t₀]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolicCylinder {
    pub center: Point,
    pub t0: f64,
    pub radius: f64,
}

impl ParabolicCylinder {
    pub fn new(center: Point, t0: f64, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::InvalidArgument("cylinder radius must be positive".into()));
        }
        Ok(ParabolicCylinder { center, t0, radius })
    }

    pub fn scaled(&self, factor: f64) -> ParabolicCylinder {
        ParabolicCylinder { center: self.center, t0: self.t0, radius: self.radius * factor }
    }

    /// Fails with `CylinderOutside` unless the cylinder lies in the grid's
    /// space-time box.
    pub fn check_inside(&self, grid: &SpaceTimeGrid) -> Result<()> {
        let tol = grid.time_tol();
        let r2 = self.radius * self.radius;
        if !grid.ball_inside(&self.center, self.radius)
            || self.t0 - r2 < grid.t_start() - tol
            || self.t0 > grid.t_end() + tol
        {
            return Err(Error::CylinderOutside);
        }
        Ok(())
    }

    pub fn cells(&self, grid: &SpaceTimeGrid) -> Vec<usize> {
        grid.cells_in_ball(&self.center, self.radius)
    }

    /// Snapshot indices with `t_k ∈ (t₀ − R², t₀]`.
    pub fn snapshots(&self, grid: &SpaceTimeGrid) -> Vec<usize> {
        let tol = grid.time_tol();
        let lo = self.t0 - self.radius * self.radius;
        (0..grid.snapshots())
            .filter(|&k| {
                let t = grid.snapshot_time(k);
                t > lo + tol && t <= self.t0 + tol
            })
            .collect()
    }

    /// Checks containment and returns the covered `(cells, snapshots)`.
    pub fn coverage(&self, grid: &SpaceTimeGrid) -> Result<(Vec<usize>, Vec<usize>)> {
        self.check_inside(grid)?;
        let cells = self.cells(grid);
        let snaps = self.snapshots(grid);
        if cells.is_empty() || snaps.is_empty() {
            return Err(Error::EmptyCylinder);
        }
        Ok((cells, snaps))
    }
}

/// Cutoff `χ_{x₀,R}`: 1 on `B_R`, 0 outside `B_{2R}`, cubic smoothstep in the
/// radial variable in between (`|∇χ| ≤ 1.5/R`).
pub fn cutoff_eval(center: &[f64], radius: f64, x: &[f64]) -> f64 {
    let r = sqrt(center.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum());
    if r <= radius {
        1.0
    } else if r >= 2.0 * radius {
        0.0
    } else {
        let t = (r - radius) / radius;
        1.0 - (3.0 * t * t - 2.0 * t * t * t)
    }
}

/// `max{|x₀ − x₁|, |t₀ − t₁|^{1/2}}`
pub fn parabolic_distance(x0: &[f64], t0: f64, x1: &[f64], t1: f64) -> f64 {
    let dx = sqrt(x0.iter().zip(x1).map(|(a, b)| (a - b) * (a - b)).sum());
    dx.max(sqrt(abs(t0 - t1)))
}

/// Arithmetic average `(u)_{z₀,R}` over covered cell/snapshot pairs.
pub fn mean_on_cylinder(traj: &Trajectory, cyl: &ParabolicCylinder) -> Result<Vec<f64>> {
    let (cells, snaps) = cyl.coverage(traj.grid())?;
    Ok(mean_over(traj, &cells, &snaps))
}

pub(crate) fn mean_over(traj: &Trajectory, cells: &[usize], snaps: &[usize]) -> Vec<f64> {
    // deviations from a reference state, so constant fields come out exact
    let pivot = traj.state(snaps[0], cells[0]).to_vec();
    let mut acc = vec![0.0; pivot.len()];
    for &k in snaps {
        for &c in cells {
            for ((a, v), p) in acc.iter_mut().zip(traj.state(k, c)).zip(&pivot) {
                *a += v - p;
            }
        }
    }
    let count = (cells.len() * snaps.len()) as f64;
    acc.iter().zip(&pivot).map(|(a, p)| p + a / count).collect()
}

/// Weighted average `(ũ)_{x₀,R}(t_k) = Σ u χ² / Σ χ²` at snapshot `k`.
pub fn weighted_mean(traj: &Trajectory, center: &Point, radius: f64, k: usize) -> Result<Vec<f64>> {
    let grid = traj.grid();
    if !(radius > 0.0) || !grid.ball_inside(center, 2.0 * radius) || k >= grid.snapshots() {
        return Err(Error::CylinderOutside);
    }
    let dim = grid.dim();
    let mut pivot: Option<&[f64]> = None;
    let mut acc = vec![0.0; grid.n_species()];
    let mut wsum = 0.0;
    for c in 0..grid.n_cells() {
        let x = grid.cell_center(c);
        let chi = cutoff_eval(&center[..dim], radius, &x[..dim]);
        let w = chi * chi;
        if w == 0.0 {
            continue;
        }
        wsum += w;
        let u = traj.state(k, c);
        let p = *pivot.get_or_insert(u);
        for ((a, v), q) in acc.iter_mut().zip(u).zip(p) {
            *a += w * (v - q);
        }
    }
    let Some(p) = pivot else {
        return Err(Error::ZeroWeight);
    };
    Ok(acc.iter().zip(p).map(|(a, q)| q + a / wsum).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_1d(cells: usize, snaps: usize) -> SpaceTimeGrid {
        SpaceTimeGrid::new(1, &[1.0], cells, 0.01, 0.0, snaps, 1).unwrap()
    }

    #[test]
    fn cutoff_examples() {
        assert_eq!(cutoff_eval(&[0.0], 1.0, &[0.0]), 1.0);
        assert_eq!(cutoff_eval(&[0.0], 1.0, &[2.0]), 0.0);
        assert_eq!(cutoff_eval(&[0.0, 0.0], 1.0, &[0.0, -2.0]), 0.0);
        assert!((cutoff_eval(&[0.0], 1.0, &[1.5]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn parabolic_distance_examples() {
        assert_eq!(parabolic_distance(&[0.3], 0.2, &[0.3], 0.2), 0.0);
        assert_eq!(parabolic_distance(&[0.0], 0.0, &[0.0], 4.0), 2.0);
        assert_eq!(parabolic_distance(&[0.0], 0.0, &[3.0], 4.0), 3.0);
    }

    #[test]
    fn mean_of_two_cells() {
        // cells of width 0.25; the ball of radius 0.2 at 0.5 covers the centers 0.375 and 0.625,
        // the window (−0.04, 0] holds only the second snapshot
        let grid = SpaceTimeGrid::new(1, &[1.0], 4, 0.04, -0.04, 2, 1).unwrap();
        let traj = Trajectory::new(grid, vec![7.0, 7.0, 7.0, 7.0, 0.0, 1.0, 3.0, 0.0]).unwrap();
        let cyl = ParabolicCylinder::new([0.5, 0.0], 0.0, 0.2).unwrap();
        assert_eq!(mean_on_cylinder(&traj, &cyl).unwrap(), vec![2.0]);
        let late = ParabolicCylinder::new([0.5, 0.0], 0.0, 0.3).unwrap();
        assert_eq!(mean_on_cylinder(&traj, &late), Err(Error::CylinderOutside));
    }

    #[test]
    fn mean_reproduces_constants_and_linear_fields() {
        let grid = grid_1d(64, 30);
        let c = Trajectory::from_fn(grid.clone(), |_, _, out| out[0] = 0.7).unwrap();
        let cyl = ParabolicCylinder::new([0.5, 0.0], 0.2, 0.15).unwrap();
        assert!((mean_on_cylinder(&c, &cyl).unwrap()[0] - 0.7).abs() < 1e-15);
        let lin = Trajectory::from_fn(grid, |x, _, out| out[0] = x[0]).unwrap();
        let cyl = ParabolicCylinder::new([0.5, 0.0], 0.2, 0.15).unwrap();
        assert!((mean_on_cylinder(&lin, &cyl).unwrap()[0] - 0.5).abs() < 1.0 / 64.0);
    }

    #[test]
    fn empty_cylinder_is_reported() {
        // radius smaller than half a cell centered on a face: no centers inside
        let grid = grid_1d(8, 5);
        let traj = Trajectory::from_fn(grid, |_, _, out| out[0] = 1.0).unwrap();
        let cyl = ParabolicCylinder::new([0.5, 0.0], 0.04, 0.01).unwrap();
        assert_eq!(mean_on_cylinder(&traj, &cyl), Err(Error::EmptyCylinder));
    }

    #[test]
    fn weighted_mean_hand_example() {
        // centers 0.25, 0.75, 1.25, 1.75; with R = 0.2 only the center cell is inside B_2R(0.75)
        let grid = SpaceTimeGrid::new(1, &[2.0], 4, 0.01, 0.0, 1, 1).unwrap();
        let traj = Trajectory::new(grid, vec![5.0, 7.0, 9.0, 11.0]).unwrap();
        let m = weighted_mean(&traj, &[0.75, 0.0], 0.2, 0).unwrap();
        assert_eq!(m, vec![7.0]);
        assert_eq!(weighted_mean(&traj, &[0.75, 0.0], 0.5, 0), Err(Error::CylinderOutside));
    }

    #[test]
    fn weighted_mean_cancels_odd_part() {
        let grid = grid_1d(100, 1);
        let traj = Trajectory::from_fn(grid, |x, _, out| out[0] = 2.0 + 3.0 * (x[0] - 0.505)).unwrap();
        let m = weighted_mean(&traj, &[0.505, 0.0], 0.2, 0).unwrap();
        assert!((m[0] - 2.0).abs() < 0.01);
        let c = Trajectory::from_fn(grid_1d(100, 1), |_, _, out| out[0] = -1.25).unwrap();
        assert!((weighted_mean(&c, &[0.5, 0.0], 0.2, 0).unwrap()[0] + 1.25).abs() < 1e-15);
    }

    #[test]
    fn two_dimensional_indexing_round_trips() {
        let grid = SpaceTimeGrid::new(2, &[1.0, 2.0], 8, 0.1, 0.0, 1, 1).unwrap();
        for c in 0..grid.n_cells() {
            assert_eq!(grid.cell_index(grid.cell_coords(c)), c);
        }
        assert_eq!(grid.cell_center(9), [0.1875, 0.375]);
        assert_eq!(grid.neighbor(0, 0, -1), None);
        assert_eq!(grid.neighbor(0, 1, 1), Some(8));
        assert_eq!(grid.cell_volume(), 0.125 * 0.25);
    }
}
