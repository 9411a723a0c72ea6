//! Sampled certification of entropy coercivity, `ρ·h″(y)A(y)ρ ≥ λ|ρ|²`, on
//! a grid of states, and the search for a gluing parameter that keeps it.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::entropy::{BlowupClass, EntropyDensity, EntropyEval, GluedEntropy};
use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigenvalues, Matrix};
use crate::math::{abs, sqrt};
use crate::model::{ms_matrix, Constraint, CrossDiffusion};

/// Default coercivity target.
pub const DEFAULT_TARGET: f64 = 0.05;
/// Number of dyadic gluing parameters tried by [`glue_search`].
pub const GLUE_STEPS: i32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubspaceKind {
    Full,
    /// `{ρ : Σ ρ_i = 0}`
    ZeroSum,
}

/// Test directions: all of `ℝⁿ` or the zero-sum hyperplane, with an
/// orthonormal basis stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    kind: SubspaceKind,
    basis: Matrix,
}

impl Subspace {
    pub fn full(n: usize) -> Self {
        Subspace { kind: SubspaceKind::Full, basis: Matrix::identity(n) }
    }

    /// Helmert basis of the zero-sum hyperplane.
    pub fn zero_sum(n: usize) -> Self {
        assert!(n >= 2, "zero-sum subspace needs n >= 2");
        let mut basis = Matrix::zeros(n, n - 1);
        for j in 0..n - 1 {
            let k = (j + 1) as f64;
            let norm = sqrt(k * (k + 1.0));
            for i in 0..=j {
                basis[(i, j)] = 1.0 / norm;
            }
            basis[(j + 1, j)] = -k / norm;
        }
        Subspace { kind: SubspaceKind::ZeroSum, basis }
    }

    pub fn new(kind: SubspaceKind, n: usize) -> Self {
        match kind {
            SubspaceKind::Full => Self::full(n),
            SubspaceKind::ZeroSum => Self::zero_sum(n),
        }
    }

    /// Zero-sum for volume-filling models, full otherwise.
    pub fn for_model<M: CrossDiffusion + ?Sized>(model: &M) -> Self {
        match model.constraint() {
            Constraint::VolumeFilling => Self::zero_sum(model.n()),
            Constraint::None => Self::full(model.n()),
        }
    }

    pub fn kind(&self) -> SubspaceKind {
        self.kind
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn n(&self) -> usize {
        self.basis.rows()
    }
}

/// Smallest eigenvalue of `Pᵀ sym(diag(h)·A) P`.
pub fn coercivity_margin(h_diag: &[f64], a: &Matrix, sub: &Subspace) -> Result<f64> {
    if h_diag.len() != a.rows() || a.rows() != sub.n() {
        return Err(Error::DimensionMismatch { expected: sub.n(), found: a.rows() });
    }
    let mut ha = a.clone();
    ha.scale_rows(h_diag);
    if !ha.is_finite() {
        return Err(Error::NonFiniteMatrix);
    }
    let p = sub.basis();
    let reduced = p.transpose().mul(&ha.sym_part()).mul(p);
    Ok(symmetric_eigenvalues(&reduced.sym_part())[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Box,
    Simplex,
}

/// Sample states in lexicographic order: a tensor grid of the closed box, or
/// a barycentric lattice of the simplex for volume-filling models. Raw
/// entropies keep Case 1 axes away from 0.
#[derive(Debug, Clone)]
pub struct SampleGrid {
    n: usize,
    m: usize,
    layout: Layout,
    upper: Vec<f64>,
    lower: Vec<f64>,
    simplex: Vec<u16>,
    len: usize,
}

const MAX_SAMPLES: usize = 50_000_000;

impl SampleGrid {
    pub fn new<M, E>(model: &M, entropy: &E, m: usize) -> Result<Self>
    where
        M: CrossDiffusion + ?Sized,
        E: EntropyEval + ?Sized,
    {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("resolution {m} must be at least 2")));
        }
        let n = model.n();
        if entropy.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: entropy.n() });
        }
        let upper = model.upper().to_vec();
        let raw = !entropy.is_glued();
        let layout = match model.constraint() {
            Constraint::VolumeFilling => Layout::Simplex,
            Constraint::None => Layout::Box,
        };
        let lower = (0..n)
            .map(|i| if raw && entropy.class(i) == BlowupClass::Case1 { upper[i] / (2.0 * m as f64) } else { 0.0 })
            .collect();
        let mut grid = SampleGrid { n, m, layout, upper, lower, simplex: Vec::new(), len: 0 };
        match layout {
            Layout::Box => {
                let len = (m as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
                if len > MAX_SAMPLES as u128 {
                    return Err(Error::InvalidArgument(format!("{m}^{n} samples is too many")));
                }
                grid.len = len as usize;
            }
            Layout::Simplex => {
                let mut k = vec![0u16; n];
                compositions(&mut k, 0, (m - 1) as u16, &mut grid.simplex)?;
                grid.len = grid.simplex.len() / n;
            }
        }
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn resolution(&self) -> usize {
        self.m
    }

    /// Distance between neighbouring samples along one axis.
    pub fn spacing(&self) -> f64 {
        match self.layout {
            Layout::Box => self.upper.iter().map(|d| d / (self.m - 1) as f64).fold(0.0, f64::max),
            Layout::Simplex => 1.0 / (self.m - 1) as f64,
        }
    }

    pub fn point(&self, idx: usize, out: &mut [f64]) {
        let steps = (self.m - 1) as f64;
        match self.layout {
            Layout::Box => {
                let mut rest = idx;
                for i in (0..self.n).rev() {
                    let k = rest % self.m;
                    rest /= self.m;
                    let y = self.upper[i] * k as f64 / steps;
                    out[i] = y.max(self.lower[i]);
                }
            }
            Layout::Simplex => {
                let k = &self.simplex[idx * self.n..(idx + 1) * self.n];
                if self.lower.iter().any(|&l| l > 0.0) {
                    // shifted lattice: interior, still on the simplex
                    let total = steps + 0.5 * self.n as f64;
                    for (o, &ki) in out.iter_mut().zip(k) {
                        *o = (ki as f64 + 0.5) / total;
                    }
                } else {
                    for (o, &ki) in out.iter_mut().zip(k) {
                        *o = ki as f64 / steps;
                    }
                }
            }
        }
    }

    /// A forward neighbour of `y` along direction `axis`, if it stays in the
    /// sampled region.
    fn neighbour(&self, y: &[f64], axis: usize, out: &mut [f64]) -> bool {
        let h = self.spacing();
        out.copy_from_slice(y);
        match self.layout {
            Layout::Box => {
                out[axis] += self.upper[axis] / (self.m - 1) as f64;
                out[axis] <= self.upper[axis]
            }
            Layout::Simplex => {
                let last = self.n - 1;
                if axis == last {
                    return false;
                }
                out[axis] += h;
                out[last] -= h;
                out[last] >= self.lower[last].max(0.0) && out[axis] <= 1.0
            }
        }
    }
}

fn compositions(k: &mut [u16], pos: usize, rest: u16, out: &mut Vec<u16>) -> Result<()> {
    if pos == k.len() - 1 {
        k[pos] = rest;
        if out.len() / k.len() >= MAX_SAMPLES {
            return Err(Error::InvalidArgument("simplex lattice is too large".into()));
        }
        out.extend_from_slice(k);
        return Ok(());
    }
    for v in 0..=rest {
        k[pos] = v;
        compositions(k, pos + 1, rest - v, out)?;
    }
    Ok(())
}

/// Margin of one sample point.
pub fn margin_at<M, E>(model: &M, entropy: &E, sub: &Subspace, y: &[f64]) -> Result<f64>
where
    M: CrossDiffusion + ?Sized,
    E: EntropyEval + ?Sized,
{
    let n = model.n();
    let mut a = Matrix::zeros(n, n);
    let mut h = vec![0.0; n];
    model.diffusion(y, &mut a)?;
    entropy.hessian_diag(y, &mut h)?;
    coercivity_margin(&h, &a, sub)
}

/// Partial result over a contiguous range of sample indices. Shards merge in
/// any order to the same result.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub min_margin: f64,
    pub argmin_index: usize,
    pub argmin: Vec<f64>,
    pub hessian_min: f64,
    pub hessian_max: f64,
    pub lipschitz_a: f64,
    pub lipschitz_h: f64,
    pub operator_norm: Option<f64>,
    pub samples: usize,
}

impl Shard {
    fn empty() -> Self {
        Shard {
            min_margin: f64::INFINITY,
            argmin_index: usize::MAX,
            argmin: Vec::new(),
            hessian_min: f64::INFINITY,
            hessian_max: 0.0,
            lipschitz_a: 0.0,
            lipschitz_h: 0.0,
            operator_norm: None,
            samples: 0,
        }
    }

    pub fn merge(mut self, other: Shard) -> Shard {
        if other.min_margin < self.min_margin
            || (other.min_margin == self.min_margin && other.argmin_index < self.argmin_index)
        {
            self.min_margin = other.min_margin;
            self.argmin_index = other.argmin_index;
            self.argmin = other.argmin;
        }
        self.hessian_min = self.hessian_min.min(other.hessian_min);
        self.hessian_max = self.hessian_max.max(other.hessian_max);
        self.lipschitz_a = self.lipschitz_a.max(other.lipschitz_a);
        self.lipschitz_h = self.lipschitz_h.max(other.lipschitz_h);
        self.operator_norm = match (self.operator_norm, other.operator_norm) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.samples += other.samples;
        self
    }
}

fn max_abs_entry_diff(a: &Matrix, b: &Matrix) -> f64 {
    a.max_abs_diff(b)
}

/// Evaluates the margin on the samples `range` of `grid`.
pub fn certify_shard<M, E>(model: &M, entropy: &E, sub: &Subspace, grid: &SampleGrid, range: Range<usize>) -> Result<Shard>
where
    M: CrossDiffusion + ?Sized,
    E: EntropyEval + ?Sized,
{
    let n = model.n();
    let mut shard = Shard::empty();
    let mut y = vec![0.0; n];
    let mut yn = vec![0.0; n];
    let mut a = Matrix::zeros(n, n);
    let mut an = Matrix::zeros(n, n);
    let mut h = vec![0.0; n];
    let mut hn = vec![0.0; n];
    for idx in range {
        grid.point(idx, &mut y);
        model.diffusion(&y, &mut a)?;
        entropy.hessian_diag(&y, &mut h)?;
        let margin = coercivity_margin(&h, &a, sub)?;
        if margin < shard.min_margin {
            shard.min_margin = margin;
            shard.argmin_index = idx;
            shard.argmin = y.clone();
        }
        for &v in &h {
            shard.hessian_min = shard.hessian_min.min(v);
            shard.hessian_max = shard.hessian_max.max(v);
        }
        if let Some(m) = model.flux_gradient(&y) {
            let norm = m.spectral_norm();
            shard.operator_norm = Some(shard.operator_norm.map_or(norm, |o: f64| o.max(norm)));
        }
        for axis in 0..n {
            if !grid.neighbour(&y, axis, &mut yn) {
                continue;
            }
            let dist = sqrt(y.iter().zip(&yn).map(|(p, q)| (p - q) * (p - q)).sum());
            if model.diffusion(&yn, &mut an).is_err() || entropy.hessian_diag(&yn, &mut hn).is_err() {
                continue;
            }
            shard.lipschitz_a = shard.lipschitz_a.max(max_abs_entry_diff(&a, &an) / dist);
            let dh = h.iter().zip(&hn).map(|(p, q)| abs(p - q)).fold(0.0, f64::max);
            shard.lipschitz_h = shard.lipschitz_h.max(dh / dist);
        }
        shard.samples += 1;
    }
    Ok(shard)
}

/// Outcome of a sampled certification.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificationReport {
    pub model: String,
    pub subspace: SubspaceKind,
    pub resolution: usize,
    pub samples: usize,
    pub min_margin: f64,
    pub argmin: Vec<f64>,
    /// Hessian bounds `(λ′, Λ′)`: those of the glued entropy, or the sampled
    /// extremes for a raw entropy.
    pub hessian_bounds: (f64, f64),
    /// `(bound, μ)` of the near-diagonal comparison, when available.
    pub near_diagonal: Option<(f64, f64)>,
    /// Largest sampled `‖M(y)‖₂` of implicit volume-filling models.
    pub operator_norm: Option<f64>,
    pub epsilon: Option<f64>,
    pub target: f64,
    /// `L_A · L_H · spacing` with empirically measured constants.
    pub lipschitz_slack: f64,
    pub passed: bool,
}

impl CertificationReport {
    /// Condition label: glued or raw entropy on the full space or on the
    /// zero-sum hyperplane.
    pub fn condition(&self) -> &'static str {
        match (self.epsilon.is_some(), self.subspace) {
            (true, SubspaceKind::Full) => "glued-coercivity",
            (true, SubspaceKind::ZeroSum) => "glued-coercivity-zero-sum",
            (false, SubspaceKind::Full) => "entropy-coercivity",
            (false, SubspaceKind::ZeroSum) => "entropy-coercivity-zero-sum",
        }
    }
}

/// Folds merged shards into a report.
pub fn finish_report<M, E>(model: &M, entropy: &E, sub: &Subspace, grid: &SampleGrid, shard: Shard, target: f64, epsilon: Option<f64>) -> CertificationReport
where
    M: CrossDiffusion + ?Sized,
    E: EntropyEval + ?Sized,
{
    let near_diagonal = near_diagonal_bound(model, entropy, grid.resolution()).ok();
    CertificationReport {
        model: model.name(),
        subspace: sub.kind(),
        resolution: grid.resolution(),
        samples: shard.samples,
        min_margin: shard.min_margin,
        argmin: shard.argmin,
        hessian_bounds: (shard.hessian_min, shard.hessian_max),
        near_diagonal,
        operator_norm: shard.operator_norm,
        epsilon,
        target,
        lipschitz_slack: shard.lipschitz_a * shard.lipschitz_h * grid.spacing(),
        passed: shard.min_margin >= target,
    }
}

/// Evaluates the margin on the full sample grid.
pub fn sample_certify<M, E>(model: &M, entropy: &E, sub: &Subspace, m: usize, target: f64) -> Result<CertificationReport>
where
    M: CrossDiffusion + ?Sized,
    E: EntropyEval + ?Sized,
{
    let grid = SampleGrid::new(model, entropy, m)?;
    let shard = certify_shard(model, entropy, sub, &grid, 0..grid.len())?;
    Ok(finish_report(model, entropy, sub, &grid, shard, target, None))
}

/// Same as [`sample_certify`] for a glued entropy; the report carries `ε` and
/// the entropy's own Hessian bounds.
pub fn certify_glued<M>(model: &M, glued: &GluedEntropy, sub: &Subspace, m: usize, target: f64) -> Result<CertificationReport>
where
    M: CrossDiffusion + ?Sized,
{
    let mut report = sample_certify(model, glued, sub, m, target)?;
    report.epsilon = Some(glued.epsilon());
    report.hessian_bounds = (glued.lambda_prime(), glued.big_lambda_prime());
    Ok(report)
}

/// Dyadic gluing parameters `min_i d_i / 2 · 2⁻ʲ`, `j = 1..=20`, largest first.
pub fn glue_ladder(upper: &[f64]) -> Vec<f64> {
    let dmin = upper.iter().copied().fold(f64::INFINITY, f64::min);
    (1..=GLUE_STEPS).map(|j| 0.5 * dmin * libm::ldexp(1.0, -j)).collect()
}

/// Returns the largest dyadic `ε` whose glued entropy certifies at
/// `target`. `certify` runs the certification for one glued entropy.
pub fn glue_search_with<M, C>(model: &M, base: &EntropyDensity, target: f64, mut certify: C) -> Result<(f64, CertificationReport)>
where
    M: CrossDiffusion + ?Sized,
    C: FnMut(&GluedEntropy) -> Result<CertificationReport>,
{
    if !(target > 0.0) {
        return Err(Error::InvalidArgument(format!("coercivity target {target} must be positive")));
    }
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for eps in glue_ladder(model.upper()) {
        let glued = GluedEntropy::new(base.clone(), eps)?;
        let report = certify(&glued)?;
        if report.passed {
            return Ok((eps, report));
        }
        if report.min_margin > best.0 {
            best = (report.min_margin, eps);
        }
    }
    Err(Error::NoAdmissibleEpsilon { best_margin: best.0, best_epsilon: best.1 })
}

pub fn glue_search<M>(model: &M, base: &EntropyDensity, target: f64, sub: &Subspace, m: usize) -> Result<(f64, CertificationReport)>
where
    M: CrossDiffusion + ?Sized,
{
    glue_search_with(model, base, target, |g| certify_glued(model, g, sub, m, target))
}

/// `(bound, μ)`: the largest `|S_ij − a_i δ_ij|·h_i″(y_i)` over samples,
/// Case 1 rows `i` and all `j` (`S` the model's structure matrix), and the
/// smallest sampled `a_i` over Case 1 components.
pub fn near_diagonal_bound<M, E>(model: &M, entropy: &E, m: usize) -> Result<(f64, f64)>
where
    M: CrossDiffusion + ?Sized,
    E: EntropyEval + ?Sized,
{
    let n = model.n();
    let grid = SampleGrid::new(model, entropy, m)?;
    let mut y = vec![0.0; n];
    let mut a = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut s = Matrix::zeros(n, n);
    let mut bound = 0.0f64;
    let mut mu = f64::INFINITY;
    for idx in 0..grid.len() {
        grid.point(idx, &mut y);
        if !model.near_diagonal(&y, &mut a) {
            return Err(Error::MissingComparisonFunctions);
        }
        model.structure_matrix(&y, &mut s)?;
        entropy.hessian_diag(&y, &mut h)?;
        for i in (0..n).filter(|&i| entropy.class(i) == BlowupClass::Case1) {
            mu = mu.min(a[i]);
            for j in 0..n {
                let diag = if i == j { a[i] } else { 0.0 };
                bound = bound.max(abs(s[(i, j)] - diag) * h[i]);
            }
        }
    }
    Ok((bound, mu))
}

/// Both sides of `ρ·h″(y)M(y)ρ = ½ Σ_ij (y_i y_j / D_ij)(ρ_i/y_i − ρ_j/y_j)²`
/// for the Boltzmann entropy and the Maxwell-Stefan matrix.
pub fn hypocoercivity_identity(d: &Matrix, y: &[f64], rho: &[f64]) -> Result<(f64, f64)> {
    let n = d.rows();
    if let Some(i) = y.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::DomainViolation { component: i, value: y[i] });
    }
    let m = ms_matrix(d, y)?;
    let mr = m.mul_vec(rho);
    let lhs: f64 = (0..n).map(|i| rho[i] / y[i] * mr[i]).sum();
    let mut rhs = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let diff = rho[i] / y[i] - rho[j] / y[j];
                rhs += y[i] * y[j] / d[(i, j)] * diff * diff;
            }
        }
    }
    Ok((lhs, 0.5 * rhs))
}

/// Both sides of the semiconductor sum-of-squares identity
/// `ρ·h″A ρ = (μ₁ρ₁²/y₁ + μ₂ρ₂²/y₂ + μ₁μ₂(ρ₁+ρ₂)²) / (1 + μ₂y₁ + μ₁y₂)`.
pub fn semiconductor_identity(mu1: f64, mu2: f64, y: &[f64], rho: &[f64]) -> Result<(f64, f64)> {
    if let Some(i) = y.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::DomainViolation { component: i, value: y[i] });
    }
    let a = crate::model::sc_matrix(mu1, mu2, y);
    let ar = a.mul_vec(rho);
    let lhs = rho[0] / y[0] * ar[0] + rho[1] / y[1] * ar[1];
    let s = rho[0] + rho[1];
    let rhs = (mu1 * rho[0] * rho[0] / y[0] + mu2 * rho[1] * rho[1] / y[1] + mu1 * mu2 * s * s)
        / (1.0 + mu2 * y[0] + mu1 * y[1]);
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;

    #[test]
    fn zero_sum_basis_is_orthonormal() {
        for n in 2..7 {
            let p = Subspace::zero_sum(n);
            let gram = p.basis().transpose().mul(p.basis());
            assert!(gram.max_abs_diff(&Matrix::identity(n - 1)) < 1e-14);
            for j in 0..n - 1 {
                let s: f64 = (0..n).map(|i| p.basis()[(i, j)]).sum();
                assert!(s.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn coercivity_margin_examples() {
        let full = Subspace::full(2);
        assert_eq!(coercivity_margin(&[1.0, 1.0], &Matrix::identity(2), &full).unwrap(), 1.0);
        let a = Matrix::from_rows(&[[0.5, -0.5], [-0.5, 0.5]]);
        let m = coercivity_margin(&[2.0, 2.0], &a, &Subspace::zero_sum(2)).unwrap();
        assert!((m - 2.0).abs() < 1e-14);
        let skew = Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]);
        assert_eq!(coercivity_margin(&[1.0, 1.0], &skew, &full).unwrap(), 0.0);
        assert!(matches!(
            coercivity_margin(&[f64::INFINITY, 1.0], &Matrix::identity(2), &full),
            Err(Error::NonFiniteMatrix)
        ));
    }

    #[test]
    fn simplex_lattice_counts_and_order() {
        let model = Model::maxwell_stefan(Matrix::from_rows(&[[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]])).unwrap();
        let base = model.entropy().unwrap();
        let glued = GluedEntropy::new(base.clone(), 0.1).unwrap();
        let grid = SampleGrid::new(&model, &glued, 5).unwrap();
        assert_eq!(grid.len(), 15);
        let mut y = [0.0; 3];
        grid.point(0, &mut y);
        assert_eq!(y, [0.0, 0.0, 1.0]);
        for idx in 0..grid.len() {
            grid.point(idx, &mut y);
            assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        let raw = SampleGrid::new(&model, &base, 5).unwrap();
        for idx in 0..raw.len() {
            raw.point(idx, &mut y);
            assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(y.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn box_grid_is_lexicographic_and_clipped_for_raw() {
        let model = Model::heat(2);
        let base = model.entropy().unwrap();
        let grid = SampleGrid::new(&model, &base, 4).unwrap();
        assert_eq!(grid.len(), 16);
        let mut y = [0.0; 2];
        grid.point(1, &mut y);
        assert_eq!(y, [0.125, 1.0 / 3.0]);
        grid.point(4, &mut y);
        assert_eq!(y, [1.0 / 3.0, 0.125]);
    }

    #[test]
    fn negative_definite_model_fails() {
        let mut a = Matrix::identity(2);
        a.scale(-1.0);
        let model = Model::constant(a, &[1.0, 1.0]).unwrap();
        let base = model.entropy().unwrap();
        let report = sample_certify(&model, &base, &Subspace::full(2), 8, DEFAULT_TARGET).unwrap();
        assert!(report.min_margin < 0.0);
        assert!(!report.passed);
    }

    #[test]
    fn zero_model_has_no_admissible_epsilon() {
        let model = Model::constant(Matrix::zeros(2, 2), &[1.0, 1.0]).unwrap();
        let base = model.entropy().unwrap();
        let res = glue_search(&model, &base, DEFAULT_TARGET, &Subspace::full(2), 8);
        assert!(matches!(res, Err(Error::NoAdmissibleEpsilon { .. })));
    }

    #[test]
    fn maxwell_stefan_two_species_certifies_on_zero_sum() {
        let d = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let model = Model::maxwell_stefan(d).unwrap();
        let base = model.entropy().unwrap();
        let (eps, report) = glue_search(&model, &base, 0.1, &Subspace::zero_sum(2), 16).unwrap();
        assert_eq!(eps, 0.25);
        assert!(report.min_margin >= 1.0 - 1e-12);
        assert!(report.operator_norm.is_some());
    }

    #[test]
    fn near_diagonal_examples() {
        let skt = Model::skt([[1.0; 3]; 2], [[0.0; 3]; 2], &[1.0, 1.0]).unwrap();
        let (bound, mu) = near_diagonal_bound(&skt, &skt.entropy().unwrap(), 16).unwrap();
        // off-diagonal term α₁₂y₁/y₁ = 1, diagonal term 2α₁₁y₁/y₁ = 2
        assert!((bound - 2.0).abs() < 1e-12, "{bound}");
        // raw entropy samples start at y = 1/(2m)
        assert!((mu - (1.0 + 1.0 / 32.0)).abs() < 1e-15);
        let diag = Model::constant(Matrix::from_diagonal(&[2.0, 3.0]), &[1.0, 1.0]).unwrap();
        let (bound, _) = near_diagonal_bound(&diag, &diag.entropy().unwrap(), 8).unwrap();
        assert_eq!(bound, 0.0);
        let sc = Model::semiconductor(1.5, 2.0, &[1.0, 1.0]).unwrap();
        let (bound, _) = near_diagonal_bound(&sc, &sc.entropy().unwrap(), 16).unwrap();
        assert!(bound > 0.0 && bound <= 3.0 + 1e-12);
    }

    #[test]
    fn identity_examples() {
        let d = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        let (l, r) = hypocoercivity_identity(&d, &[0.5, 0.5], &[1.0, -1.0]).unwrap();
        assert!((l - 4.0).abs() < 1e-14 && (r - 4.0).abs() < 1e-14);
        let (l, r) = hypocoercivity_identity(&d, &[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert!(l.abs() < 1e-15 && r.abs() < 1e-15);
        assert!(matches!(hypocoercivity_identity(&d, &[0.0, 1.0], &[1.0, 0.0]), Err(Error::DomainViolation { .. })));
    }
}
