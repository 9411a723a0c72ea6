//! Implicit Euler / two-point flux finite volumes for
//! `M ∂_t u − ∇·A(u)∇u = f(u)` with no-flux boundaries, the entropy monitor,
//! manufactured-solution studies and the frozen-coefficient linear solve.
//!
//! Unknowns are ordered cell-major, species fastest (`cell · n + s`). Face
//! coefficients are arithmetic averages of `A` at the two adjacent cells;
//! boundary faces carry zero flux.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::entropy::{EntropyEval, GluedEntropy};
use crate::error::{Error, Result};
use crate::grid::{mean_on_cylinder, ParabolicCylinder, Point, SpaceTimeGrid, Trajectory};
use crate::linalg::{BandLu, BandMatrix, Matrix};
use crate::math::{abs, ln, max_abs, sqrt};
use crate::model::{CrossDiffusion, ReducedForm};
use crate::verify::{coercivity_margin, Subspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    /// Coloured finite differences of the residual.
    FiniteDifference,
    /// Closed-form flux derivatives supplied by the model; models without
    /// them fall back to finite differences.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    /// Tolerance on `dt · max|R|`.
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub damping_max_halvings: usize,
    pub jacobian: JacobianMode,
    /// Relative finite-difference step.
    pub fd_step: f64,
    /// Inflation of the closed domain box accepted for iterates.
    pub positivity_margin: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 1e-3,
            newton_tol: 1e-10,
            newton_max_iters: 50,
            damping_max_halvings: 40,
            jacobian: JacobianMode::FiniteDifference,
            fd_step: 1e-7,
            positivity_margin: 1e-14,
        }
    }
}

impl SolverConfig {
    pub fn with_dt(dt: f64) -> Self {
        SolverConfig { dt, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.dt > 0.0
            && self.newton_tol > 0.0
            && self.newton_max_iters > 0
            && self.fd_step > 0.0
            && self.positivity_margin >= 0.0
            && self.dt.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid solver configuration {self:?}")))
        }
    }
}

/// Uniform cell-centred spatial mesh of `[0, L_1] × … × [0, L_d]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh {
    pub dim: usize,
    pub extent: Point,
    pub cells_per_axis: usize,
}

impl Mesh {
    pub fn new(dim: usize, extent: &[f64], cells_per_axis: usize) -> Result<Self> {
        // validation shared with the space-time grid
        SpaceTimeGrid::new(dim, extent, cells_per_axis, 1.0, 0.0, 1, 1)?;
        let mut e = [0.0; 2];
        e[..dim].copy_from_slice(extent);
        Ok(Mesh { dim, extent: e, cells_per_axis })
    }

    pub fn n_cells(&self) -> usize {
        self.cells_per_axis.pow(self.dim as u32)
    }

    /// Space-time grid with this mesh.
    pub fn grid(&self, dt_snap: f64, t_start: f64, snapshots: usize, n_species: usize) -> Result<SpaceTimeGrid> {
        SpaceTimeGrid::new(self.dim, &self.extent[..self.dim], self.cells_per_axis, dt_snap, t_start, snapshots, n_species)
    }

    fn geometry(&self) -> SpaceTimeGrid {
        self.grid(1.0, 0.0, 1, 1).expect("mesh was validated")
    }

    /// Samples `f(x, out)` at cell centres.
    pub fn sample<F: Fn(&Point, &mut [f64])>(&self, n: usize, f: F) -> Vec<f64> {
        let g = self.geometry();
        let mut u = vec![0.0; g.n_cells() * n];
        for (c, chunk) in u.chunks_mut(n).enumerate() {
            f(&g.cell_center(c), chunk);
        }
        u
    }
}

#[derive(Debug, Clone, Copy)]
struct Face {
    left: usize,
    right: usize,
    inv_h2: f64,
}

/// Newton statistics of one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub iterations: usize,
    pub residual: f64,
    pub halvings: usize,
}

pub type SourceFn<'a> = &'a dyn Fn(&Point, f64, &mut [f64]);

/// One implicit Euler step of a model on a mesh.
pub struct Stepper<'a, M: CrossDiffusion + ?Sized> {
    model: &'a M,
    geometry: SpaceTimeGrid,
    cfg: SolverConfig,
    source: Option<SourceFn<'a>>,
    faces: Vec<Face>,
    /// Cells adjacent to each cell, itself first.
    stencil: Vec<Vec<usize>>,
    colours: Vec<Vec<usize>>,
    band: usize,
}

impl<'a, M: CrossDiffusion + ?Sized> Stepper<'a, M> {
    pub fn new(model: &'a M, mesh: &Mesh, mut cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.jacobian == JacobianMode::Analytic {
            let n = model.n();
            let probe: Vec<f64> = model.upper().iter().map(|d| d / (2 * n) as f64).collect();
            if !model.diffusion_derivative(&probe, 0, &mut Matrix::zeros(n, n)) {
                cfg.jacobian = JacobianMode::FiniteDifference;
            }
        }
        if let Some(d) = model.spatial_dim() {
            if d != mesh.dim {
                return Err(Error::InvalidArgument(format!("{} is posed in {d} space dimensions", model.name())));
            }
        }
        let geometry = mesh.geometry();
        let nc = geometry.n_cells();
        let mut faces = Vec::new();
        let mut stencil: Vec<Vec<usize>> = (0..nc).map(|c| vec![c]).collect();
        for c in 0..nc {
            for axis in 0..mesh.dim {
                if let Some(r) = geometry.neighbor(c, axis, 1) {
                    let h = geometry.cell_size(axis);
                    faces.push(Face { left: c, right: r, inv_h2: 1.0 / (h * h) });
                    stencil[c].push(r);
                    stencil[r].push(c);
                }
            }
        }
        let ncol = if mesh.dim == 1 { 3 } else { 9 };
        let mut colours = vec![Vec::new(); ncol];
        for c in 0..nc {
            let [i, j] = geometry.cell_coords(c);
            colours[(i % 3) + 3 * (j % 3) * (mesh.dim - 1)].push(c);
        }
        let n = model.n();
        let reach = if mesh.dim == 1 { 1 } else { mesh.cells_per_axis };
        let band = reach * n + n - 1;
        Ok(Stepper { model, geometry, cfg, source: None, faces, stencil, colours, band })
    }

    /// Adds a prescribed source `g(x, t)` to the right-hand side.
    pub fn with_source(mut self, source: SourceFn<'a>) -> Self {
        self.source = Some(source);
        self
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    fn n(&self) -> usize {
        self.model.n()
    }

    fn sources(&self, t: f64) -> Vec<f64> {
        let n = self.n();
        let mut g = vec![0.0; self.geometry.n_cells() * n];
        if let Some(src) = self.source {
            for (c, chunk) in g.chunks_mut(n).enumerate() {
                src(&self.geometry.cell_center(c), t, chunk);
            }
        }
        g
    }

    fn cell_matrices(&self, u: &[f64]) -> Result<Vec<Matrix>> {
        let n = self.n();
        let mut out = Vec::with_capacity(self.geometry.n_cells());
        let mut a = Matrix::zeros(n, n);
        for chunk in u.chunks(n) {
            self.model.diffusion(chunk, &mut a)?;
            out.push(a.clone());
        }
        Ok(out)
    }

    /// `R(u) = M(u − u_old)/dt − div_h(A∇_h u) − f(u) − g`.
    fn residual_with(&self, u: &[f64], u_old: &[f64], g: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.n();
        let mass = self.model.mass();
        let inv_dt = 1.0 / self.cfg.dt;
        let mut f = vec![0.0; n];
        for (c, ((r, uc), uo)) in out.chunks_mut(n).zip(u.chunks(n)).zip(u_old.chunks(n)).enumerate() {
            self.model.reaction(uc, &mut f);
            for s in 0..n {
                r[s] = mass[s] * (uc[s] - uo[s]) * inv_dt - f[s] - g[c * n + s];
            }
        }
        let a = self.cell_matrices(u)?;
        let mut du = vec![0.0; n];
        let mut flux = vec![0.0; n];
        for face in &self.faces {
            let (l, r) = (face.left, face.right);
            for s in 0..n {
                du[s] = (u[r * n + s] - u[l * n + s]) * face.inv_h2;
            }
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += 0.5 * (a[l][(i, j)] + a[r][(i, j)]) * du[j];
                }
                flux[i] = acc;
            }
            for s in 0..n {
                out[l * n + s] -= flux[s];
                out[r * n + s] += flux[s];
            }
        }
        Ok(())
    }

    /// Residual of the step `u_old → u` ending at `t_next`.
    pub fn residual(&self, u: &[f64], u_old: &[f64], t_next: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; u.len()];
        self.residual_with(u, u_old, &self.sources(t_next), &mut out)?;
        Ok(out)
    }

    fn fd_jacobian(&self, u: &[f64], u_old: &[f64], g: &[f64], r0: &[f64]) -> Result<BandMatrix> {
        let n = self.n();
        let dim = u.len();
        let upper = self.model.upper();
        let mut jac = BandMatrix::zeros(dim, self.band, self.band);
        let mut up = u.to_vec();
        let mut rp = vec![0.0; dim];
        let mut steps = vec![0.0; self.geometry.n_cells()];
        for colour in &self.colours {
            for k in 0..n {
                for &c in colour {
                    let v = u[c * n + k];
                    let mut h = self.cfg.fd_step * (1.0 + abs(v));
                    if v + h > upper[k] {
                        h = -h;
                    }
                    steps[c] = h;
                    up[c * n + k] = v + h;
                }
                self.residual_with(&up, u_old, g, &mut rp)?;
                for &c in colour {
                    up[c * n + k] = u[c * n + k];
                    let col = c * n + k;
                    for &row_cell in &self.stencil[c] {
                        for s in 0..n {
                            let row = row_cell * n + s;
                            let d = (rp[row] - r0[row]) / steps[c];
                            if d != 0.0 {
                                jac.add(row, col, d);
                            }
                        }
                    }
                }
            }
        }
        Ok(jac)
    }

    fn analytic_jacobian(&self, u: &[f64]) -> Result<BandMatrix> {
        let n = self.n();
        let dim = u.len();
        let mass = self.model.mass();
        let inv_dt = 1.0 / self.cfg.dt;
        let mut jac = BandMatrix::zeros(dim, self.band, self.band);
        let a = self.cell_matrices(u)?;
        let nc = self.geometry.n_cells();
        let mut da: Vec<Vec<Matrix>> = Vec::with_capacity(nc);
        let mut tmp = Matrix::zeros(n, n);
        for chunk in u.chunks(n) {
            let mut per = Vec::with_capacity(n);
            for k in 0..n {
                if !self.model.diffusion_derivative(chunk, k, &mut tmp) {
                    return Err(Error::InvalidArgument(format!("{} has no analytic diffusion derivative", self.model.name())));
                }
                per.push(tmp.clone());
            }
            da.push(per);
        }
        // mass and reaction blocks
        let mut f0 = vec![0.0; n];
        let mut f1 = vec![0.0; n];
        let upper = self.model.upper();
        for (c, uc) in u.chunks(n).enumerate() {
            self.model.reaction(uc, &mut f0);
            let mut y = uc.to_vec();
            for k in 0..n {
                let mut h = self.cfg.fd_step * (1.0 + abs(uc[k]));
                if uc[k] + h > upper[k] {
                    h = -h;
                }
                y[k] = uc[k] + h;
                self.model.reaction(&y, &mut f1);
                y[k] = uc[k];
                for s in 0..n {
                    let d = -(f1[s] - f0[s]) / h;
                    if d != 0.0 {
                        jac.add(c * n + s, c * n + k, d);
                    }
                }
                jac.add(c * n + k, c * n + k, mass[k] * inv_dt);
            }
        }
        let mut grad = vec![0.0; n];
        for face in &self.faces {
            let (l, r) = (face.left, face.right);
            for s in 0..n {
                grad[s] = (u[r * n + s] - u[l * n + s]) * face.inv_h2;
            }
            for k in 0..n {
                let dl = da[l][k].mul_vec(&grad);
                let dr = da[r][k].mul_vec(&grad);
                for i in 0..n {
                    let avg = 0.5 * (a[l][(i, k)] + a[r][(i, k)]) * face.inv_h2;
                    // flux_i derivatives with respect to u_l,k and u_r,k
                    let fl = 0.5 * dl[i] - avg;
                    let fr = 0.5 * dr[i] + avg;
                    jac.add(l * n + i, l * n + k, -fl);
                    jac.add(l * n + i, r * n + k, -fr);
                    jac.add(r * n + i, l * n + k, fl);
                    jac.add(r * n + i, r * n + k, fr);
                }
            }
        }
        Ok(jac)
    }

    fn admissible(&self, u: &[f64]) -> bool {
        let n = self.n();
        u.chunks(n).all(|c| self.model.admissible(c, self.cfg.positivity_margin))
    }

    /// Damped Newton solve of one implicit Euler step.
    pub fn advance(&self, u_old: &[f64], t_next: f64) -> Result<(Vec<f64>, StepStats)> {
        let dim = self.geometry.n_cells() * self.n();
        if u_old.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: u_old.len() });
        }
        let g = self.sources(t_next);
        let mut u = u_old.to_vec();
        let mut r = vec![0.0; dim];
        self.residual_with(&u, u_old, &g, &mut r)?;
        let mut res = self.cfg.dt * max_abs(&r);
        let mut stats = StepStats { iterations: 0, residual: res, halvings: 0 };
        let mut cand = vec![0.0; dim];
        let mut r_cand = vec![0.0; dim];
        for it in 0..self.cfg.newton_max_iters {
            if res <= self.cfg.newton_tol {
                stats.iterations = it;
                stats.residual = res;
                return Ok((u, stats));
            }
            let jac = match self.cfg.jacobian {
                JacobianMode::FiniteDifference => self.fd_jacobian(&u, u_old, &g, &r)?,
                JacobianMode::Analytic => self.analytic_jacobian(&u)?,
            };
            let lu = jac.factor()?;
            let mut delta: Vec<f64> = r.iter().map(|v| -v).collect();
            lu.solve(&mut delta);
            if delta.iter().any(|v| !v.is_finite()) {
                return Err(Error::LinearSolveFailed("non-finite Newton update".into()));
            }
            let mut theta = 1.0;
            let mut halvings = 0;
            loop {
                for ((c, &ui), &di) in cand.iter_mut().zip(&u).zip(&delta) {
                    *c = ui + theta * di;
                }
                if self.admissible(&cand) && self.residual_with(&cand, u_old, &g, &mut r_cand).is_ok() {
                    break;
                }
                halvings += 1;
                if halvings > self.cfg.damping_max_halvings {
                    return Err(Error::PositivityLost { halvings: self.cfg.damping_max_halvings });
                }
                theta *= 0.5;
            }
            stats.halvings += halvings;
            core::mem::swap(&mut u, &mut cand);
            core::mem::swap(&mut r, &mut r_cand);
            res = self.cfg.dt * max_abs(&r);
        }
        if res <= self.cfg.newton_tol {
            stats.iterations = self.cfg.newton_max_iters;
            stats.residual = res;
            return Ok((u, stats));
        }
        Err(Error::NewtonDiverged { iterations: self.cfg.newton_max_iters, residual: res })
    }
}

/// Time span of a run: `steps` implicit steps from `t_start`, a snapshot
/// every `save_every` steps (the initial state is snapshot 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSpec {
    pub t_start: f64,
    pub steps: usize,
    pub save_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub trajectory: Trajectory,
    pub stats: Vec<StepStats>,
}

/// A failed run: the step that failed, the last accepted state (full
/// unknowns) and the cause.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationFailure {
    pub step: usize,
    pub time: f64,
    pub state: Vec<f64>,
    pub error: Error,
}

impl From<Error> for SimulationFailure {
    fn from(error: Error) -> Self {
        SimulationFailure { step: 0, time: f64::NAN, state: Vec::new(), error }
    }
}

fn check_initial<M: CrossDiffusion + ?Sized>(model: &M, u: &[f64], margin: f64) -> Result<()> {
    let n = model.n();
    for chunk in u.chunks(n) {
        if !model.admissible(chunk, margin) {
            let (i, v) = chunk
                .iter()
                .enumerate()
                .find(|(i, &v)| !(v >= -margin && v <= model.upper()[*i] + margin))
                .map(|(i, &v)| (i, v))
                .unwrap_or((n, chunk.iter().sum()));
            return Err(Error::DomainViolation { component: i, value: v });
        }
    }
    Ok(())
}

fn drive<M: CrossDiffusion + ?Sized>(
    stepper: &Stepper<'_, M>,
    initial: Vec<f64>,
    spec: &RunSpec,
    mut save: impl FnMut(&[f64]),
) -> core::result::Result<Vec<StepStats>, SimulationFailure> {
    let dt = stepper.cfg.dt;
    let mut u = initial;
    let mut stats = Vec::with_capacity(spec.steps);
    save(&u);
    for step in 1..=spec.steps {
        let t = spec.t_start + step as f64 * dt;
        match stepper.advance(&u, t) {
            Ok((next, st)) => {
                u = next;
                stats.push(st);
            }
            Err(error) => {
                return Err(SimulationFailure { step, time: t, state: u, error });
            }
        }
        if step % spec.save_every == 0 {
            save(&u);
        }
    }
    Ok(stats)
}

/// Runs the model from `initial` (full unknowns, `cell · n + s`). Models with
/// a reduced form are stepped in it and expanded for output. A source, if
/// given, acts on the stepped unknowns.
pub fn simulate<M: CrossDiffusion + ?Sized>(
    model: &M,
    mesh: &Mesh,
    initial: &[f64],
    cfg: SolverConfig,
    spec: RunSpec,
    source: Option<SourceFn<'_>>,
) -> core::result::Result<Run, SimulationFailure> {
    if spec.save_every == 0 {
        return Err(Error::InvalidArgument("save_every must be positive".into()).into());
    }
    let n = model.n();
    let nc = mesh.n_cells();
    if initial.len() != nc * n {
        return Err(Error::DimensionMismatch { expected: nc * n, found: initial.len() }.into());
    }
    check_initial(model, initial, cfg.positivity_margin)?;
    let snapshots = spec.steps / spec.save_every + 1;
    let grid = mesh.grid(cfg.dt * spec.save_every as f64, spec.t_start, snapshots, n)?;
    let mut values = Vec::with_capacity(snapshots * nc * n);
    let stats = match model.reduced() {
        None => {
            let mut stepper = Stepper::new(model, mesh, cfg)?;
            if let Some(src) = source {
                stepper = stepper.with_source(src);
            }
            drive(&stepper, initial.to_vec(), &spec, |u| values.extend_from_slice(u))?
        }
        Some(reduced) => {
            let reduced: &dyn ReducedForm = &*reduced;
            let m = reduced.n();
            let mut start = vec![0.0; nc * m];
            for (full, red) in initial.chunks(n).zip(start.chunks_mut(m)) {
                reduced.reduce(full, red);
            }
            let mut stepper = Stepper::new(reduced, mesh, cfg)?;
            if let Some(src) = source {
                stepper = stepper.with_source(src);
            }
            let mut full = vec![0.0; n];
            let expand = |u: &[f64], values: &mut Vec<f64>, full: &mut [f64]| {
                for red in u.chunks(m) {
                    reduced.expand(red, full);
                    values.extend_from_slice(full);
                }
            };
            drive(&stepper, start, &spec, |u| expand(u, &mut values, &mut full)).map_err(|mut f| {
                let mut state = vec![0.0; nc * n];
                for (red, out) in f.state.chunks(m).zip(state.chunks_mut(n)) {
                    reduced.expand(red, out);
                }
                f.state = state;
                f
            })?
        }
    };
    let trajectory = Trajectory::new(grid, values)?;
    Ok(Run { trajectory, stats })
}

/// One row of the entropy monitor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyRow {
    pub snapshot: usize,
    pub time: f64,
    /// `H^k = Σ h_ε(u) · vol`
    pub entropy: f64,
    /// `H^k − H^{k−1}` (0 for the first row)
    pub delta: f64,
    /// `λ Σ |∇_h u|² · vol`
    pub dissipation: f64,
    /// `Σ f(u) · h_ε′(u) · vol`
    pub reaction: f64,
}

/// Entropy, dissipation proxy and reaction term per snapshot.
pub fn entropy_report<M: CrossDiffusion + ?Sized>(model: &M, glued: &GluedEntropy, traj: &Trajectory, lambda: f64) -> Result<Vec<EntropyRow>> {
    let grid = traj.grid();
    let n = grid.n_species();
    if n != model.n() || n != glued.n() {
        return Err(Error::DimensionMismatch { expected: model.n(), found: n });
    }
    let vol = grid.cell_volume();
    let mut rows = Vec::with_capacity(grid.snapshots());
    let mut f = vec![0.0; n];
    let mut dh = vec![0.0; n];
    let mut prev = None;
    for k in 0..grid.snapshots() {
        let (mut h, mut diss, mut reac) = (0.0, 0.0, 0.0);
        for c in 0..grid.n_cells() {
            let u = traj.state(k, c);
            h += glued.value(u)? * vol;
            glued.gradient(u, &mut dh)?;
            model.reaction(u, &mut f);
            reac += f.iter().zip(&dh).map(|(a, b)| a * b).sum::<f64>() * vol;
            diss += lambda * traj.grad_sq(k, c) * vol;
        }
        let delta = prev.map_or(0.0, |p: f64| h - p);
        prev = Some(h);
        rows.push(EntropyRow { snapshot: k, time: grid.snapshot_time(k), entropy: h, delta, dissipation: diss, reaction: reac });
    }
    Ok(rows)
}

/// Snapshots `k ≥ 1` where `H^k > H^{k−1} + tol · (1 + |H^{k−1}|)`.
pub fn monotonicity_violations(rows: &[EntropyRow], tol: f64) -> Vec<usize> {
    rows.windows(2)
        .filter(|w| w[1].entropy > w[0].entropy + tol * (1.0 + abs(w[0].entropy)))
        .map(|w| w[1].snapshot)
        .collect()
}

/// Step used in the manufactured-source differences.
const MMS_STEP: f64 = 1e-3;

fn central4(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// `g = M ∂_t u* − ∇·A(u*)∇u* − f(u*)` at `(x, t)` by fourth-order
/// differences of the target.
pub fn manufactured_source<M: CrossDiffusion + ?Sized>(
    model: &M,
    target: &dyn Fn(&Point, f64, &mut [f64]),
    dim: usize,
    x: &Point,
    t: f64,
    out: &mut [f64],
) -> Result<()> {
    let n = model.n();
    let h = MMS_STEP;
    let eval = |p: &Point, t: f64| {
        let mut v = vec![0.0; n];
        target(p, t, &mut v);
        v
    };
    let mass = model.mass();
    let mut u = vec![0.0; n];
    target(x, t, &mut u);
    let mut f = vec![0.0; n];
    model.reaction(&u, &mut f);
    let mut a = Matrix::zeros(n, n);
    // flux component s along axis at point p
    let flux = |p: &Point, axis: usize, s: usize, a: &mut Matrix| -> Result<f64> {
        let y = eval(p, t);
        model.diffusion(&y, a)?;
        let mut acc = 0.0;
        for j in 0..n {
            let dj = central4(
                |z| {
                    let mut q = *p;
                    q[axis] = z;
                    eval(&q, t)[j]
                },
                p[axis],
                h,
            );
            acc += a[(s, j)] * dj;
        }
        Ok(acc)
    };
    for s in 0..n {
        let dt = central4(|tau| eval(x, tau)[s], t, h);
        let mut div = 0.0;
        for axis in 0..dim {
            let mut vals = [0.0; 4];
            for (slot, off) in vals.iter_mut().zip([2.0, 1.0, -1.0, -2.0]) {
                let mut q = *x;
                q[axis] += off * h;
                *slot = flux(&q, axis, s, &mut a)?;
            }
            div += (-vals[0] + 8.0 * vals[1] - 8.0 * vals[2] + vals[3]) / (12.0 * h);
        }
        out[s] = mass[s] * dt - div - f[s];
    }
    Ok(())
}

/// Discrete `L²(space-time)` error of a trajectory against `target`, over
/// all snapshots after the first.
pub fn space_time_error(traj: &Trajectory, target: &dyn Fn(&Point, f64, &mut [f64])) -> f64 {
    let grid = traj.grid();
    let n = grid.n_species();
    let w = grid.cell_volume() * grid.dt_snap();
    let mut exact = vec![0.0; n];
    let mut acc = 0.0;
    for k in 1..grid.snapshots() {
        let t = grid.snapshot_time(k);
        for c in 0..grid.n_cells() {
            target(&grid.cell_center(c), t, &mut exact);
            acc += traj.state(k, c).iter().zip(&exact).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * w;
        }
    }
    sqrt(acc)
}

/// Runs the model against a manufactured solution: initial data
/// `u*(·, 0)`, source `g`, every step saved. Returns the space-time error.
pub fn manufactured_error<M: CrossDiffusion + ?Sized>(
    model: &M,
    mesh: &Mesh,
    target: &dyn Fn(&Point, f64, &mut [f64]),
    cfg: SolverConfig,
    t_end: f64,
) -> core::result::Result<f64, SimulationFailure> {
    let steps = libm::round(t_end / cfg.dt) as usize;
    let n = model.n();
    let initial = mesh.sample(n, |x, out| target(x, 0.0, out));
    let dim = mesh.dim;
    // the source must not fail inside the stepper; a failing model shows up
    // in the residual evaluation anyway
    let source = |x: &Point, t: f64, out: &mut [f64]| {
        if manufactured_source(model, target, dim, x, t, out).is_err() {
            out.iter_mut().for_each(|v| *v = f64::NAN);
        }
    };
    let run = simulate(model, mesh, &initial, cfg, RunSpec { t_start: 0.0, steps, save_every: 1 }, Some(&source))?;
    Ok(space_time_error(&run.trajectory, target))
}

/// Least-squares slope of `log err` against `log x`.
pub fn fitted_order(x: &[f64], err: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(err).map(|(a, b)| (ln(*a), ln(*b))).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub cells: usize,
    pub dt: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Fitted order in the refined parameter (`dt` or `h`).
    pub order: f64,
}

/// Refines `dt` at a fixed mesh.
pub fn time_convergence<M: CrossDiffusion + ?Sized>(
    model: &M,
    mesh: &Mesh,
    target: &dyn Fn(&Point, f64, &mut [f64]),
    base: SolverConfig,
    dts: &[f64],
    t_end: f64,
) -> core::result::Result<ConvergenceTable, SimulationFailure> {
    let mut rows = Vec::with_capacity(dts.len());
    for &dt in dts {
        let error = manufactured_error(model, mesh, target, SolverConfig { dt, ..base }, t_end)?;
        rows.push(ConvergenceRow { cells: mesh.cells_per_axis, dt, error });
    }
    let order = fitted_order(dts, &rows.iter().map(|r| r.error).collect::<Vec<_>>());
    Ok(ConvergenceTable { rows, order })
}

/// Refines the mesh with `dt ∝ h²` (`dt = dt_coarse · (h/h_coarse)²`).
pub fn space_convergence<M: CrossDiffusion + ?Sized>(
    model: &M,
    dim: usize,
    extent: &[f64],
    cells: &[usize],
    target: &dyn Fn(&Point, f64, &mut [f64]),
    base: SolverConfig,
    t_end: f64,
) -> core::result::Result<ConvergenceTable, SimulationFailure> {
    let mut rows = Vec::with_capacity(cells.len());
    let c0 = cells[0] as f64;
    for &nc in cells {
        let mesh = Mesh::new(dim, extent, nc)?;
        let ratio = c0 / nc as f64;
        let dt = base.dt * ratio * ratio;
        let error = manufactured_error(model, &mesh, target, SolverConfig { dt, ..base }, t_end)?;
        rows.push(ConvergenceRow { cells: nc, dt, error });
    }
    let hs: Vec<f64> = cells.iter().map(|&c| extent[0] / c as f64).collect();
    let order = fitted_order(&hs, &rows.iter().map(|r| r.error).collect::<Vec<_>>());
    Ok(ConvergenceTable { rows, order })
}

/// Constant-coefficient companion problem on `𝒞_{R/8}(z₀)` with the matrix
/// frozen at the mean over `𝒞_R(z₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenProblem {
    /// `A((u)_{z₀,R})`
    pub a0: Matrix,
    /// Diagonal of `B = sqrt(h_ε″((u)_{z₀,R}))`.
    pub symmetrizer: Vec<f64>,
    /// `(u)_{z₀,R}`
    pub mean: Vec<f64>,
    /// `𝒞_{R/8}(z₀)`
    pub cylinder: ParabolicCylinder,
}

impl FrozenProblem {
    pub fn build<M: CrossDiffusion + ?Sized>(model: &M, glued: &GluedEntropy, traj: &Trajectory, outer: &ParabolicCylinder) -> Result<Self> {
        let n = model.n();
        let mean = mean_on_cylinder(traj, outer)?;
        let mut a0 = Matrix::zeros(n, n);
        model.diffusion(&mean, &mut a0)?;
        let mut h = vec![0.0; n];
        glued.hessian_diag(&mean, &mut h)?;
        let symmetrizer: Vec<f64> = h.iter().map(|&v| sqrt(v)).collect();
        if symmetrizer.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(Error::InvalidArgument("symmetrizer must be positive".into()));
        }
        let frozen = FrozenProblem { a0, symmetrizer, mean, cylinder: outer.scaled(0.125) };
        let ones = vec![1.0; n];
        let margin = coercivity_margin(&ones, &frozen.conjugated(), &Subspace::for_model(model))?;
        if !(margin > 0.0) {
            return Err(Error::InvalidArgument(format!("frozen operator is not coercive (margin {margin:e})")));
        }
        Ok(frozen)
    }

    /// `B A₀ B⁻¹`
    pub fn conjugated(&self) -> Matrix {
        let n = self.symmetrizer.len();
        let mut m = self.a0.clone();
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] *= self.symmetrizer[i] / self.symmetrizer[j];
            }
        }
        m
    }
}

/// `ū` on the covered cells (ascending) and snapshots of `𝒞_{R/8}`, stored
/// `(snapshot, cell, species)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenSolution {
    pub cells: Vec<usize>,
    pub snapshots: Vec<usize>,
    pub values: Vec<f64>,
    /// Largest `‖K w − b‖_∞` over the linear solves.
    pub residual: f64,
}

impl FrozenSolution {
    pub fn state(&self, snap_pos: usize, cell_pos: usize) -> &[f64] {
        let n = self.values.len() / (self.cells.len() * self.snapshots.len());
        let off = (snap_pos * self.cells.len() + cell_pos) * n;
        &self.values[off..off + n]
    }
}

/// Implicit Euler for `∂_t w − ∇·(B A₀ B⁻¹)∇w = B f(u)` with `w = Bū`,
/// Dirichlet data `u` from the trajectory outside the ball and initial data
/// at the last snapshot before the cylinder. One banded factorization serves
/// every step.
pub fn solve_frozen<M: CrossDiffusion + ?Sized>(model: &M, frozen: &FrozenProblem, traj: &Trajectory) -> Result<FrozenSolution> {
    let grid = traj.grid();
    let n = grid.n_species();
    let (cells, snaps) = frozen.cylinder.coverage(grid)?;
    let r2 = frozen.cylinder.radius * frozen.cylinder.radius;
    let first = snaps[0];
    if first == 0 {
        return Err(Error::CylinderOutside);
    }
    let start = first - 1;
    if grid.snapshot_time(start) > frozen.cylinder.t0 - r2 + 1e-9 * grid.dt_snap() {
        return Err(Error::CylinderOutside);
    }
    let nc = grid.n_cells();
    let mut local = vec![usize::MAX; nc];
    for (i, &c) in cells.iter().enumerate() {
        local[c] = i;
    }
    let b = &frozen.symmetrizer;
    let op = frozen.conjugated();
    let inv_dt = 1.0 / grid.dt_snap();
    let mut band = n - 1;
    for &c in &cells {
        for axis in 0..grid.dim() {
            for dir in [-1isize, 1] {
                if let Some(nb) = grid.neighbor(c, axis, dir) {
                    if local[nb] != usize::MAX {
                        let d = (local[nb] as isize - local[c] as isize).unsigned_abs();
                        band = band.max(d * n + n - 1);
                    }
                }
            }
        }
    }
    let dim = cells.len() * n;
    let mut k = BandMatrix::zeros(dim, band, band);
    for (i, &c) in cells.iter().enumerate() {
        for s in 0..n {
            k.add(i * n + s, i * n + s, inv_dt);
        }
        for axis in 0..grid.dim() {
            let h2 = grid.cell_size(axis) * grid.cell_size(axis);
            for dir in [-1isize, 1] {
                let Some(nb) = grid.neighbor(c, axis, dir) else { continue };
                for p in 0..n {
                    for q in 0..n {
                        let w = op[(p, q)] / h2;
                        k.add(i * n + p, i * n + q, w);
                        if local[nb] != usize::MAX {
                            k.add(i * n + p, local[nb] * n + q, -w);
                        }
                    }
                }
            }
        }
    }
    let lu: BandLu = k.clone().factor()?;
    let mut w: Vec<f64> = Vec::with_capacity(dim);
    for &c in &cells {
        for s in 0..n {
            w.push(b[s] * traj.state(start, c)[s]);
        }
    }
    let mut values = Vec::with_capacity(snaps.len() * dim);
    let mut residual = 0.0f64;
    let mut f = vec![0.0; n];
    for &snap in &snaps {
        let mut rhs = vec![0.0; dim];
        for (i, &c) in cells.iter().enumerate() {
            model.reaction(traj.state(snap, c), &mut f);
            for s in 0..n {
                rhs[i * n + s] = w[i * n + s] * inv_dt + b[s] * f[s];
            }
            for axis in 0..grid.dim() {
                let h2 = grid.cell_size(axis) * grid.cell_size(axis);
                for dir in [-1isize, 1] {
                    let Some(nb) = grid.neighbor(c, axis, dir) else { continue };
                    if local[nb] != usize::MAX {
                        continue;
                    }
                    let u_nb = traj.state(snap, nb);
                    for p in 0..n {
                        let mut acc = 0.0;
                        for q in 0..n {
                            acc += op[(p, q)] * b[q] * u_nb[q];
                        }
                        rhs[i * n + p] += acc / h2;
                    }
                }
            }
        }
        let mut sol = rhs.clone();
        lu.solve(&mut sol);
        let check = k.mul_vec(&sol);
        residual = residual.max(check.iter().zip(&rhs).map(|(a, r)| abs(a - r)).fold(0.0, f64::max));
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolveFailed("non-finite frozen solution".into()));
        }
        for chunk in sol.chunks(n) {
            for s in 0..n {
                values.push(chunk[s] / b[s]);
            }
        }
        w = sol;
    }
    Ok(FrozenSolution { cells, snapshots: snaps, values, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entropy::EntropyDensity;
    use crate::math::{cos, exp};
    use crate::model::Model;
    use core::f64::consts::PI;

    fn mesh1(cells: usize) -> Mesh {
        Mesh::new(1, &[1.0], cells).unwrap()
    }

    #[test]
    fn constant_state_is_steady() {
        let model = Model::skt([[1.0; 3]; 2], [[0.0; 3]; 2], &[1.0, 1.0]).unwrap();
        let mesh = mesh1(16);
        let u0 = mesh.sample(2, |_, o| o.copy_from_slice(&[0.3, 0.6]));
        let stepper = Stepper::new(&model, &mesh, SolverConfig::with_dt(0.01)).unwrap();
        let (u1, stats) = stepper.advance(&u0, 0.01).unwrap();
        assert_eq!(u1, u0);
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn heat_step_decays_like_the_mode() {
        let model = Model::heat(1);
        let mesh = mesh1(128);
        let dt = 1e-4;
        let u0 = mesh.sample(1, |x, o| o[0] = 0.5 + 0.1 * cos(PI * x[0]));
        let stepper = Stepper::new(&model, &mesh, SolverConfig::with_dt(dt)).unwrap();
        let (u1, _) = stepper.advance(&u0, dt).unwrap();
        let g = mesh.geometry();
        for c in 0..g.n_cells() {
            let x = g.cell_center(c)[0];
            let exact = 0.5 + 0.1 * exp(-PI * PI * dt) * cos(PI * x);
            assert!((u1[c] - exact).abs() < 1e-6);
        }
    }

    #[test]
    fn analytic_and_difference_jacobians_agree() {
        let model = Model::skt([[1.0, 0.5, 2.0], [0.7, 1.5, 0.3]], [[1.0, 0.5, 0.2], [0.5, 0.1, 0.4]], &[1.0, 1.0]).unwrap();
        let mesh = Mesh::new(2, &[1.0, 1.0], 6).unwrap();
        let u0 = mesh.sample(2, |x, o| {
            o[0] = 0.4 + 0.2 * cos(PI * x[0]) * cos(PI * x[1]);
            o[1] = 0.5 + 0.1 * cos(2.0 * PI * x[1]);
        });
        let fd = Stepper::new(&model, &mesh, SolverConfig::with_dt(0.01)).unwrap();
        let an = Stepper::new(&model, &mesh, SolverConfig { jacobian: JacobianMode::Analytic, ..SolverConfig::with_dt(0.01) }).unwrap();
        let (a, _) = fd.advance(&u0, 0.01).unwrap();
        let (b, _) = an.advance(&u0, 0.01).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
        let g = fd.sources(0.01);
        let r0 = {
            let mut r = vec![0.0; u0.len()];
            fd.residual_with(&u0, &a, &g, &mut r).unwrap();
            r
        };
        let j1 = fd.fd_jacobian(&u0, &a, &g, &r0).unwrap();
        let j2 = an.analytic_jacobian(&u0).unwrap();
        for r in 0..u0.len() {
            for c in 0..u0.len() {
                let (x, y) = (j1.get(r, c), j2.get(r, c));
                assert!((x - y).abs() <= 1e-5 * (1.0 + y.abs()), "({r},{c}) {x} vs {y}");
            }
        }
    }

    #[test]
    fn reduced_maxwell_stefan_two_species_is_a_heat_equation() {
        let d = Matrix::from_rows(&[[0.0, 2.0], [2.0, 0.0]]);
        let model = Model::maxwell_stefan(d).unwrap();
        let mesh = mesh1(64);
        let init = mesh.sample(2, |x, o| {
            o[0] = 0.5 + 0.2 * cos(PI * x[0]);
            o[1] = 1.0 - o[0];
        });
        let spec = RunSpec { t_start: 0.0, steps: 10, save_every: 5 };
        let run = simulate(&model, &mesh, &init, SolverConfig::with_dt(1e-3), spec, None).unwrap();
        let heat = Model::constant(Matrix::from_diagonal(&[2.0]), &[1.0]).unwrap();
        let init1: Vec<f64> = init.chunks(2).map(|c| c[0]).collect();
        let reference = simulate(&heat, &mesh, &init1, SolverConfig::with_dt(1e-3), spec, None).unwrap();
        let traj = &run.trajectory;
        for k in 0..traj.grid().snapshots() {
            for c in 0..64 {
                let s = traj.state(k, c);
                assert!((s[0] - reference.trajectory.state(k, c)[0]).abs() < 1e-10);
                assert!((s[0] + s[1] - 1.0).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn frozen_solve_reproduces_constant_data() {
        let model = Model::heat(1);
        let grid = SpaceTimeGrid::new(1, &[1.0], 32, 1e-3, 0.0, 40, 1).unwrap();
        let traj = Trajectory::from_fn(grid, |_, _, o| o[0] = 0.4).unwrap();
        let glued = GluedEntropy::new(EntropyDensity::boltzmann(&[1.0]).unwrap(), 0.1).unwrap();
        let outer = ParabolicCylinder::new([0.5, 0.0], 0.039, 0.16).unwrap();
        let frozen = FrozenProblem::build(&model, &glued, &traj, &outer).unwrap();
        let sol = solve_frozen(&model, &frozen, &traj).unwrap();
        assert!(sol.values.iter().all(|v| (v - 0.4).abs() < 1e-13));
    }

    #[test]
    fn entropy_report_of_constant_trajectory() {
        let model = Model::heat(1);
        let grid = SpaceTimeGrid::new(1, &[1.0], 8, 1e-3, 0.0, 3, 1).unwrap();
        let traj = Trajectory::from_fn(grid, |_, _, o| o[0] = 0.4).unwrap();
        let glued = GluedEntropy::new(EntropyDensity::boltzmann(&[1.0]).unwrap(), 0.1).unwrap();
        let rows = entropy_report(&model, &glued, &traj, 1.0).unwrap();
        assert!(rows.iter().all(|r| r.delta == 0.0 && r.dissipation == 0.0));
    }

    #[test]
    fn fitted_order_of_power_law() {
        let x = [0.1, 0.05, 0.025];
        let e: Vec<f64> = x.iter().map(|v| 3.0 * v * v).collect();
        assert!((fitted_order(&x, &e) - 2.0).abs() < 1e-12);
    }
}
