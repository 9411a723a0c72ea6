//! Cross-diffusion systems `M ∂_t u − ∇·A(u)∇u = f(u)` on a box of states.
//!
//! [`CrossDiffusion`] is the generic interface consumed by the verifier and
//! the solver. [`Model`] implements it for the built-in systems; the raw
//! matrix formulas are exposed as free functions.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::entropy::EntropyDensity;
use crate::error::{Error, Result};
use crate::linalg::{inverse_with_condition, Matrix};

/// Condition estimate above which the Maxwell-Stefan inversion is refused.
pub const MS_CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    None,
    /// States live on the simplex `Σ y_i = 1`.
    VolumeFilling,
}

/// A cross-diffusion system evaluated pointwise in state space.
pub trait CrossDiffusion: Sync {
    fn name(&self) -> String;

    fn n(&self) -> usize;

    /// Upper bounds `d_i` of the domain box `(0, d_1) × … × (0, d_n)`.
    fn upper(&self) -> &[f64];

    fn constraint(&self) -> Constraint {
        Constraint::None
    }

    /// Diagonal of the mass matrix in front of `∂_t u`.
    fn mass(&self) -> &[f64];

    fn diffusion(&self, y: &[f64], out: &mut Matrix) -> Result<()>;

    fn reaction(&self, y: &[f64], out: &mut [f64]);

    /// `∂A/∂y_k` at `y`. Returns `false` when the model has no closed form.
    fn diffusion_derivative(&self, _y: &[f64], _k: usize, _out: &mut Matrix) -> bool {
        false
    }

    /// Comparison functions `a_i(y)` of the near-diagonal hypothesis.
    /// Returns `false` when none are known.
    fn near_diagonal(&self, _y: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    /// Matrix the comparison functions are measured against. For
    /// Maxwell-Stefan this is the flux-gradient matrix `M`, otherwise `A`.
    fn structure_matrix(&self, y: &[f64], out: &mut Matrix) -> Result<()> {
        self.diffusion(y, out)
    }

    /// Flux-gradient matrix `M(y)` of implicit volume-filling systems.
    fn flux_gradient(&self, _y: &[f64]) -> Option<Matrix> {
        None
    }

    fn entropy(&self) -> Result<EntropyDensity>;

    /// Spatial dimension the model is restricted to, if any.
    fn spatial_dim(&self) -> Option<usize> {
        None
    }

    /// Whether `y` lies in the closed domain box inflated by `margin`.
    fn admissible(&self, y: &[f64], margin: f64) -> bool {
        y.iter().zip(self.upper()).all(|(&v, &d)| v.is_finite() && v >= -margin && v <= d + margin)
    }

    /// Reduced form used for time stepping, when the model has one.
    fn reduced(&self) -> Option<Box<dyn ReducedForm>> {
        None
    }
}

/// A model that is stepped in fewer unknowns than it reports.
pub trait ReducedForm: CrossDiffusion {
    fn full_n(&self) -> usize;
    fn reduce(&self, full: &[f64], out: &mut [f64]);
    fn expand(&self, reduced: &[f64], out: &mut [f64]);
}

fn check_symmetric_offdiag(name: &str, m: &Matrix, strict: bool) -> Result<()> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::BadCoefficients(format!("{name} must be square")));
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = m[(i, j)];
            if !v.is_finite() || v < 0.0 || (strict && v == 0.0) {
                return Err(Error::BadCoefficients(format!("{name}[{i}][{j}] = {v} is not admissible")));
            }
            if v != m[(j, i)] {
                return Err(Error::BadCoefficients(format!("{name} is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

fn check_len(n: usize, y: &[f64]) -> Result<()> {
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    Ok(())
}

/// Maxwell-Stefan flux-gradient matrix: diagonal `Σ_{k≠i} y_k/D_ik`,
/// off-diagonal `−y_i/D_ij`.
pub fn ms_matrix(d: &Matrix, y: &[f64]) -> Result<Matrix> {
    check_symmetric_offdiag("D", d, true)?;
    check_len(d.rows(), y)?;
    Ok(exchange_matrix(d.rows(), |i, j| 1.0 / d[(i, j)], y))
}

/// Size-exclusion (Hopf-Burger) matrix: diagonal `Σ_{k≠i} K_ik y_k`,
/// off-diagonal `−K_ij y_i`.
pub fn hb_matrix(k: &Matrix, y: &[f64]) -> Result<Matrix> {
    check_symmetric_offdiag("K", k, false)?;
    check_len(k.rows(), y)?;
    Ok(exchange_matrix(k.rows(), |i, j| k[(i, j)], y))
}

fn exchange_matrix(n: usize, rate: impl Fn(usize, usize) -> f64, y: &[f64]) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m[(i, i)] += rate(i, j) * y[j];
                m[(i, j)] = -rate(i, j) * y[i];
            }
        }
    }
    m
}

/// Reduced Maxwell-Stefan matrix `M₀(u′)` of size `(n−1)×(n−1)`.
pub fn ms_reduced(d: &Matrix, u: &[f64]) -> Result<Matrix> {
    check_symmetric_offdiag("D", d, true)?;
    let n = d.rows();
    check_len(n - 1, u)?;
    Ok(reduced_unchecked(d, u))
}

fn reduced_unchecked(d: &Matrix, u: &[f64]) -> Matrix {
    let n = d.rows();
    let last = n - 1;
    let mut m = Matrix::zeros(last, last);
    for i in 0..last {
        let inv_in = 1.0 / d[(i, last)];
        let mut diag = inv_in;
        for k in 0..last {
            if k != i {
                diag += (1.0 / d[(i, k)] - inv_in) * u[k];
            }
        }
        m[(i, i)] = diag;
        for j in 0..last {
            if j != i {
                m[(i, j)] = -(1.0 / d[(i, j)] - inv_in) * u[i];
            }
        }
    }
    m
}

/// `X = Id − e_n ⊗ (1, …, 1, 0)`.
pub fn ms_conjugation(n: usize) -> Matrix {
    let mut x = Matrix::identity(n);
    for j in 0..n - 1 {
        x[(n - 1, j)] = -1.0;
    }
    x
}

/// Effective diffusion matrix `X · blockdiag(M₀⁻¹, 0) · X⁻¹` on the simplex.
pub fn ms_effective_a(d: &Matrix, y: &[f64]) -> Result<Matrix> {
    check_symmetric_offdiag("D", d, true)?;
    check_len(d.rows(), y)?;
    effective_unchecked(d, y)
}

fn effective_unchecked(d: &Matrix, y: &[f64]) -> Result<Matrix> {
    let n = d.rows();
    let m0 = reduced_unchecked(d, &y[..n - 1]);
    let (inv, cond) = inverse_with_condition(&m0)?;
    if cond > MS_CONDITION_LIMIT {
        return Err(Error::IllConditioned { condition: cond });
    }
    // X·B·X⁻¹ with X⁻¹ = Id + e_n ⊗ (1,…,1,0): B has inv in its leading block
    let mut a = Matrix::zeros(n, n);
    for i in 0..n - 1 {
        for j in 0..n - 1 {
            a[(i, j)] = inv[(i, j)];
        }
    }
    let mut last_row = vec![0.0; n];
    for j in 0..n - 1 {
        last_row[j] = -(0..n - 1).map(|i| inv[(i, j)]).sum::<f64>();
    }
    for j in 0..n {
        a[(n - 1, j)] = last_row[j];
    }
    Ok(a)
}

/// Shigesada-Kawasaki-Teramoto matrix with `alpha[i] = (α_i0, α_i1, α_i2)`.
pub fn skt_matrix(alpha: &[[f64; 3]; 2], y: &[f64]) -> Matrix {
    let [a1, a2] = alpha;
    Matrix::from_rows(&[
        [a1[0] + 2.0 * a1[1] * y[0] + a1[2] * y[1], a1[2] * y[0]],
        [a2[1] * y[1], a2[0] + a2[1] * y[0] + 2.0 * a2[2] * y[1]],
    ])
}

/// Lotka-Volterra reaction `f_i = (β_i0 − β_i1 y_1 − β_i2 y_2) y_i`.
pub fn skt_reaction(beta: &[[f64; 3]; 2], y: &[f64]) -> [f64; 2] {
    let rate = |b: &[f64; 3]| b[0] - b[1] * y[0] - b[2] * y[1];
    [rate(&beta[0]) * y[0], rate(&beta[1]) * y[1]]
}

/// Semiconductor matrix with strong electron-hole scattering.
pub fn sc_matrix(mu1: f64, mu2: f64, y: &[f64]) -> Matrix {
    let p = 1.0 + mu2 * y[0] + mu1 * y[1];
    let mut a = Matrix::from_rows(&[
        [mu1 * (1.0 + mu2 * y[0]), mu1 * mu2 * y[0]],
        [mu1 * mu2 * y[1], mu2 * (1.0 + mu1 * y[1])],
    ]);
    a.scale(1.0 / p);
    a
}

/// Keller-Segel matrix with additional cross diffusion `[[1, −y₁], [δ, 1]]`.
pub fn pks_matrix(delta: f64, y: &[f64]) -> Matrix {
    Matrix::from_rows(&[[1.0, -y[0]], [delta, 1.0]])
}

/// Maxwell-Stefan comparison functions `m_i` built from the coefficients.
fn ms_comparison(rate_inv: impl Fn(usize, usize) -> f64, n: usize, y: &[f64], out: &mut [f64]) {
    let prod_except = |i: usize, skip: usize| -> f64 {
        (0..n).filter(|&k| k != i && k != skip).map(|k| rate_inv(i, k)).product()
    };
    for i in 0..n {
        let di = (0..n).filter(|&j| j != i).map(|j| prod_except(i, j)).fold(f64::INFINITY, f64::min);
        let denom: f64 = (0..n).filter(|&j| j != i).map(|j| rate_inv(i, j)).product();
        let num = di + (0..n).filter(|&j| j != i).map(|j| (prod_except(i, j) - di) * y[j]).sum::<f64>();
        out[i] = num / denom;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// `A` constant, `f = 0`.
    Constant { a: Matrix },
    Skt { alpha: [[f64; 3]; 2], beta: [[f64; 3]; 2] },
    Semiconductor { mu1: f64, mu2: f64 },
    /// Maxwell-Stefan in effective-`A` form.
    MaxwellStefan { d: Matrix },
    HopfBurger { k: Matrix },
    Pks { delta: f64, mu: f64, beta: f64 },
}

/// A built-in system together with its domain box and mass matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    kind: ModelKind,
    upper: Vec<f64>,
    mass: Vec<f64>,
}

fn check_uppers(n: usize, uppers: &[f64]) -> Result<Vec<f64>> {
    check_len(n, uppers)?;
    if let Some(d) = uppers.iter().find(|&&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::BadCoefficients(format!("domain bound {d} must be positive")));
    }
    Ok(uppers.to_vec())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::BadCoefficients(format!("{name} = {v} must be positive")));
    }
    Ok(())
}

impl Model {
    /// `A = a` constant, `f = 0`.
    pub fn constant(a: Matrix, uppers: &[f64]) -> Result<Self> {
        if a.rows() != a.cols() || !a.is_finite() {
            return Err(Error::BadCoefficients("constant diffusion matrix must be square and finite".into()));
        }
        let n = a.rows();
        Ok(Model { kind: ModelKind::Constant { a }, upper: check_uppers(n, uppers)?, mass: vec![1.0; n] })
    }

    /// `n` uncoupled heat equations on `(0, 1)ⁿ`.
    pub fn heat(n: usize) -> Self {
        Model { kind: ModelKind::Constant { a: Matrix::identity(n) }, upper: vec![1.0; n], mass: vec![1.0; n] }
    }

    pub fn skt(alpha: [[f64; 3]; 2], beta: [[f64; 3]; 2], uppers: &[f64]) -> Result<Self> {
        for (i, row) in alpha.iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                positive(&format!("alpha[{}][{j}]", i + 1), a)?;
            }
        }
        for row in &beta {
            if row.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
                return Err(Error::BadCoefficients("reaction coefficients must be nonnegative".into()));
            }
        }
        Ok(Model { kind: ModelKind::Skt { alpha, beta }, upper: check_uppers(2, uppers)?, mass: vec![1.0; 2] })
    }

    pub fn semiconductor(mu1: f64, mu2: f64, uppers: &[f64]) -> Result<Self> {
        positive("mu1", mu1)?;
        positive("mu2", mu2)?;
        Ok(Model { kind: ModelKind::Semiconductor { mu1, mu2 }, upper: check_uppers(2, uppers)?, mass: vec![1.0; 2] })
    }

    /// Maxwell-Stefan with symmetric positive off-diagonal coefficients `d`.
    pub fn maxwell_stefan(d: Matrix) -> Result<Self> {
        check_symmetric_offdiag("D", &d, true)?;
        let n = d.rows();
        if n < 2 {
            return Err(Error::BadCoefficients("Maxwell-Stefan needs at least two species".into()));
        }
        Ok(Model { kind: ModelKind::MaxwellStefan { d }, upper: vec![1.0; n], mass: vec![1.0; n] })
    }

    /// Size exclusion with full interaction (`K_ij > 0` for `i ≠ j`).
    pub fn hopf_burger(k: Matrix) -> Result<Self> {
        check_symmetric_offdiag("K", &k, true)?;
        let n = k.rows();
        if n < 2 {
            return Err(Error::BadCoefficients("size exclusion needs at least two species".into()));
        }
        Ok(Model { kind: ModelKind::HopfBurger { k }, upper: vec![1.0; n], mass: vec![1.0; n] })
    }

    /// Keller-Segel with additional cross diffusion; `β = 0` is the
    /// parabolic-elliptic variant.
    pub fn pks(delta: f64, mu: f64, beta: f64, uppers: &[f64]) -> Result<Self> {
        positive("delta", delta)?;
        positive("mu", mu)?;
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::BadCoefficients(format!("beta = {beta} must be nonnegative")));
        }
        Ok(Model { kind: ModelKind::Pks { delta, mu, beta }, upper: check_uppers(2, uppers)?, mass: vec![1.0, beta] })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    /// Whether the mass matrix has a zero entry (elliptic rows).
    pub fn is_parabolic_elliptic(&self) -> bool {
        self.mass.contains(&0.0)
    }
}

impl CrossDiffusion for Model {
    fn name(&self) -> String {
        match &self.kind {
            ModelKind::Constant { .. } => "constant".into(),
            ModelKind::Skt { .. } => "skt".into(),
            ModelKind::Semiconductor { .. } => "semiconductor".into(),
            ModelKind::MaxwellStefan { .. } => "maxwell-stefan".into(),
            ModelKind::HopfBurger { .. } => "size-exclusion".into(),
            ModelKind::Pks { .. } => "keller-segel".into(),
        }
    }

    fn n(&self) -> usize {
        self.upper.len()
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn constraint(&self) -> Constraint {
        match self.kind {
            ModelKind::MaxwellStefan { .. } | ModelKind::HopfBurger { .. } => Constraint::VolumeFilling,
            _ => Constraint::None,
        }
    }

    fn mass(&self) -> &[f64] {
        &self.mass
    }

    fn diffusion(&self, y: &[f64], out: &mut Matrix) -> Result<()> {
        check_len(self.n(), y)?;
        *out = match &self.kind {
            ModelKind::Constant { a } => a.clone(),
            ModelKind::Skt { alpha, .. } => skt_matrix(alpha, y),
            ModelKind::Semiconductor { mu1, mu2 } => sc_matrix(*mu1, *mu2, y),
            ModelKind::MaxwellStefan { d } => effective_unchecked(d, y)?,
            ModelKind::HopfBurger { k } => exchange_matrix(k.rows(), |i, j| k[(i, j)], y),
            ModelKind::Pks { delta, .. } => pks_matrix(*delta, y),
        };
        Ok(())
    }

    fn reaction(&self, y: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::Skt { beta, .. } => out.copy_from_slice(&skt_reaction(beta, y)),
            ModelKind::Pks { mu, .. } => {
                out[0] = 0.0;
                out[1] = mu * y[0] - y[1];
            }
            _ => out.iter_mut().for_each(|v| *v = 0.0),
        }
    }

    fn diffusion_derivative(&self, y: &[f64], k: usize, out: &mut Matrix) -> bool {
        let n = self.n();
        *out = Matrix::zeros(n, n);
        match &self.kind {
            ModelKind::Constant { .. } => {}
            ModelKind::Skt { alpha, .. } => {
                let [a1, a2] = alpha;
                *out = if k == 0 {
                    Matrix::from_rows(&[[2.0 * a1[1], a1[2]], [0.0, a2[1]]])
                } else {
                    Matrix::from_rows(&[[a1[2], 0.0], [a2[1], 2.0 * a2[2]]])
                };
            }
            ModelKind::Semiconductor { mu1, mu2 } => {
                let (m1, m2) = (*mu1, *mu2);
                let p = 1.0 + m2 * y[0] + m1 * y[1];
                let a = sc_matrix(m1, m2, y);
                let (dn, dp) = if k == 0 {
                    (Matrix::from_rows(&[[m1 * m2, m1 * m2], [0.0, 0.0]]), m2)
                } else {
                    (Matrix::from_rows(&[[0.0, 0.0], [m1 * m2, m1 * m2]]), m1)
                };
                *out = dn;
                out.add_scaled(&a, -dp);
                out.scale(1.0 / p);
            }
            ModelKind::MaxwellStefan { .. } => return false,
            ModelKind::HopfBurger { k: rates } => {
                for i in 0..n {
                    if i != k {
                        out[(i, i)] = rates[(i, k)];
                    }
                }
                for j in 0..n {
                    if j != k {
                        out[(k, j)] = -rates[(k, j)];
                    }
                }
            }
            ModelKind::Pks { .. } => {
                if k == 0 {
                    out[(0, 1)] = -1.0;
                }
            }
        }
        true
    }

    fn near_diagonal(&self, y: &[f64], out: &mut [f64]) -> bool {
        match &self.kind {
            ModelKind::Constant { a } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = a[(i, i)];
                }
            }
            ModelKind::Skt { alpha, .. } => {
                out[0] = alpha[0][0] + alpha[0][2] * y[1];
                out[1] = alpha[1][0] + alpha[1][1] * y[0];
            }
            ModelKind::Semiconductor { mu1, mu2 } => {
                let p = 1.0 + mu2 * y[0] + mu1 * y[1];
                out[0] = mu1 / p;
                out[1] = mu2 / p;
            }
            ModelKind::MaxwellStefan { d } => ms_comparison(|i, j| d[(i, j)], self.n(), y, out),
            ModelKind::HopfBurger { k } => ms_comparison(|i, j| 1.0 / k[(i, j)], self.n(), y, out),
            ModelKind::Pks { .. } => {
                out[0] = y[0] + 1.0;
                out[1] = 1.0;
            }
        }
        true
    }

    fn structure_matrix(&self, y: &[f64], out: &mut Matrix) -> Result<()> {
        match &self.kind {
            ModelKind::MaxwellStefan { d } => {
                check_len(self.n(), y)?;
                *out = exchange_matrix(d.rows(), |i, j| 1.0 / d[(i, j)], y);
                Ok(())
            }
            _ => self.diffusion(y, out),
        }
    }

    fn flux_gradient(&self, y: &[f64]) -> Option<Matrix> {
        match &self.kind {
            ModelKind::MaxwellStefan { d } => Some(exchange_matrix(d.rows(), |i, j| 1.0 / d[(i, j)], y)),
            _ => None,
        }
    }

    fn entropy(&self) -> Result<EntropyDensity> {
        match &self.kind {
            ModelKind::Skt { alpha, .. } => EntropyDensity::skt(alpha[0][2], alpha[1][1], &self.upper),
            // β = 0 carries no quadratic weight; the β = 1 weight stands in
            ModelKind::Pks { delta, beta, .. } => {
                let weight = if *beta > 0.0 { *beta } else { 1.0 };
                EntropyDensity::pks(weight, *delta, &self.upper)
            }
            _ => EntropyDensity::boltzmann(&self.upper),
        }
    }

    fn spatial_dim(&self) -> Option<usize> {
        match self.kind {
            ModelKind::Pks { .. } => Some(2),
            _ => None,
        }
    }

    fn reduced(&self) -> Option<Box<dyn ReducedForm>> {
        match &self.kind {
            ModelKind::MaxwellStefan { d } => Some(Box::new(ReducedMaxwellStefan::new(d.clone()).ok()?)),
            _ => None,
        }
    }
}

/// Maxwell-Stefan in the first `n − 1` fractions,
/// `∂_t u′ − ∇·M₀(u′)⁻¹∇u′ = f′`, with `u_n = 1 − Σ u′`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedMaxwellStefan {
    d: Matrix,
    upper: Vec<f64>,
    mass: Vec<f64>,
}

impl ReducedMaxwellStefan {
    pub fn new(d: Matrix) -> Result<Self> {
        check_symmetric_offdiag("D", &d, true)?;
        let m = d.rows() - 1;
        Ok(ReducedMaxwellStefan { d, upper: vec![1.0; m], mass: vec![1.0; m] })
    }
}

impl CrossDiffusion for ReducedMaxwellStefan {
    fn name(&self) -> String {
        "maxwell-stefan (reduced)".into()
    }

    fn n(&self) -> usize {
        self.upper.len()
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn mass(&self) -> &[f64] {
        &self.mass
    }

    fn diffusion(&self, y: &[f64], out: &mut Matrix) -> Result<()> {
        check_len(self.n(), y)?;
        let (inv, cond) = inverse_with_condition(&reduced_unchecked(&self.d, y))?;
        if cond > MS_CONDITION_LIMIT {
            return Err(Error::IllConditioned { condition: cond });
        }
        *out = inv;
        Ok(())
    }

    fn reaction(&self, _y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn entropy(&self) -> Result<EntropyDensity> {
        EntropyDensity::boltzmann(&self.upper)
    }

    fn admissible(&self, y: &[f64], margin: f64) -> bool {
        y.iter().all(|&v| v.is_finite() && v >= -margin && v <= 1.0 + margin) && y.iter().sum::<f64>() <= 1.0 + margin
    }
}

impl ReducedForm for ReducedMaxwellStefan {
    fn full_n(&self) -> usize {
        self.d.rows()
    }

    fn reduce(&self, full: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&full[..self.n()]);
    }

    fn expand(&self, reduced: &[f64], out: &mut [f64]) {
        let m = self.n();
        out[..m].copy_from_slice(reduced);
        out[m] = 1.0 - reduced.iter().sum::<f64>();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        a.max_abs_diff(b) <= tol
    }

    fn ones(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        m.as_mut_slice().iter_mut().for_each(|v| *v = 1.0);
        m
    }

    #[test]
    fn ms_matrix_examples() {
        let d = ones(2);
        let m = ms_matrix(&d, &[0.5, 0.5]).unwrap();
        assert!(close(&m, &Matrix::from_rows(&[[0.5, -0.5], [-0.5, 0.5]]), 0.0));
        let m = ms_matrix(&d, &[1.0, 0.0]).unwrap();
        assert!(close(&m, &Matrix::from_rows(&[[0.0, -1.0], [0.0, 1.0]]), 0.0));
        assert!(close(&ms_matrix(&ones(4), &[0.0; 4]).unwrap(), &Matrix::zeros(4, 4), 0.0));
    }

    #[test]
    fn ms_rejects_bad_coefficients() {
        let mut d = ones(3);
        d[(0, 1)] = 2.0;
        assert!(matches!(ms_matrix(&d, &[0.3, 0.3, 0.4]), Err(Error::BadCoefficients(_))));
        let mut d = ones(2);
        d[(0, 1)] = 0.0;
        d[(1, 0)] = 0.0;
        assert!(ms_matrix(&d, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn ms_reduced_examples() {
        assert!(close(&ms_reduced(&ones(3), &[0.1, 0.7]).unwrap(), &Matrix::identity(2), 0.0));
        let mut d = ones(2);
        d[(0, 1)] = 2.0;
        d[(1, 0)] = 2.0;
        assert_eq!(ms_reduced(&d, &[0.3]).unwrap().as_slice(), &[0.5]);
        let d = Matrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]]);
        let m = ms_reduced(&d, &[0.2, 0.3]).unwrap();
        assert!(close(&m, &Matrix::from_rows(&[[0.65, -0.1], [0.0, 1.0]]), 1e-15));
    }

    #[test]
    fn ms_effective_examples() {
        let a = ms_effective_a(&ones(2), &[0.3, 0.7]).unwrap();
        assert!(close(&a, &Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]), 1e-15));
        let x = ms_conjugation(3);
        assert!(close(&x, &Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, -1.0, 1.0]]), 0.0));
        let mut xinv = Matrix::identity(3);
        xinv[(2, 0)] = 1.0;
        xinv[(2, 1)] = 1.0;
        let expect = x.mul(&Matrix::from_diagonal(&[1.0, 1.0, 0.0])).mul(&xinv);
        assert!(close(&ms_effective_a(&ones(3), &[0.2, 0.5, 0.3]).unwrap(), &expect, 1e-15));
    }

    #[test]
    fn hb_matrix_examples() {
        let mut k = ones(2);
        k[(0, 1)] = 2.0;
        k[(1, 0)] = 2.0;
        let m = hb_matrix(&k, &[0.25, 0.75]).unwrap();
        assert!(close(&m, &Matrix::from_rows(&[[1.5, -0.5], [-1.5, 0.5]]), 1e-15));
        assert!(close(&hb_matrix(&ones(3), &[0.0; 3]).unwrap(), &Matrix::zeros(3, 3), 0.0));
        let mut bad = ones(2);
        bad[(0, 1)] = -1.0;
        bad[(1, 0)] = -1.0;
        assert!(hb_matrix(&bad, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn skt_examples() {
        let alpha = [[1.0; 3]; 2];
        assert!(close(&skt_matrix(&alpha, &[1.0, 1.0]), &Matrix::from_rows(&[[4.0, 1.0], [1.0, 4.0]]), 0.0));
        let alpha = [[2.0, 1.0, 1.0], [3.0, 1.0, 1.0]];
        assert!(close(&skt_matrix(&alpha, &[0.0, 0.0]), &Matrix::from_diagonal(&[2.0, 3.0]), 0.0));
        let beta = [[1.0, 1.0, 0.0], [0.0; 3]];
        assert_eq!(skt_reaction(&beta, &[0.5, 0.2])[0], 0.25);
        assert!(Model::skt([[1.0, 0.0, 1.0], [1.0; 3]], [[0.0; 3]; 2], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn sc_examples() {
        assert!(close(&sc_matrix(1.0, 1.0, &[0.0, 0.0]), &Matrix::identity(2), 0.0));
        let expect = Matrix::from_rows(&[[2.0 / 3.0, 1.0 / 3.0], [1.0 / 3.0, 2.0 / 3.0]]);
        assert!(close(&sc_matrix(1.0, 1.0, &[1.0, 1.0]), &expect, 1e-15));
        let expect = Matrix::from_rows(&[[2.0 / 3.0, 0.0], [2.0 / 3.0, 1.0]]);
        assert!(close(&sc_matrix(2.0, 1.0, &[0.0, 1.0]), &expect, 1e-15));
        assert!(Model::semiconductor(0.0, 1.0, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn pks_examples() {
        let m = Model::pks(0.5, 2.0, 0.0, &[3.0, 3.0]).unwrap();
        let mut a = Matrix::zeros(2, 2);
        m.diffusion(&[0.0, 1.7], &mut a).unwrap();
        assert!(close(&a, &Matrix::from_rows(&[[1.0, 0.0], [0.5, 1.0]]), 0.0));
        let mut f = [9.0; 2];
        m.reaction(&[1.0, 2.0], &mut f);
        assert_eq!(f, [0.0, 0.0]);
        assert_eq!(m.mass(), &[1.0, 0.0]);
        assert!(m.is_parabolic_elliptic());
        assert_eq!(m.spatial_dim(), Some(2));
        assert!(Model::pks(0.0, 1.0, 1.0, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let models = [
            Model::skt([[1.0, 0.5, 2.0], [0.7, 1.5, 0.3]], [[0.0; 3]; 2], &[1.0, 1.0]).unwrap(),
            Model::semiconductor(1.3, 0.6, &[1.0, 1.0]).unwrap(),
            Model::hopf_burger(Matrix::from_rows(&[[0.0, 1.0, 2.0], [1.0, 0.0, 0.5], [2.0, 0.5, 0.0]])).unwrap(),
            Model::pks(0.8, 1.0, 1.0, &[2.0, 2.0]).unwrap(),
        ];
        for m in &models {
            let n = m.n();
            let y: Vec<f64> = (0..n).map(|i| 0.2 + 0.15 * i as f64).collect();
            for k in 0..n {
                let mut exact = Matrix::zeros(n, n);
                assert!(m.diffusion_derivative(&y, k, &mut exact));
                let h = 1e-6;
                let (mut yp, mut ym) = (y.clone(), y.clone());
                yp[k] += h;
                ym[k] -= h;
                let (mut ap, mut am) = (Matrix::zeros(n, n), Matrix::zeros(n, n));
                m.diffusion(&yp, &mut ap).unwrap();
                m.diffusion(&ym, &mut am).unwrap();
                ap.add_scaled(&am, -1.0);
                ap.scale(0.5 / h);
                assert!(close(&ap, &exact, 1e-8), "{} k={k}", m.name());
            }
        }
    }

    #[test]
    fn comparison_functions_for_unit_coefficients() {
        let m = Model::maxwell_stefan(ones(3)).unwrap();
        let mut a = [0.0; 3];
        assert!(m.near_diagonal(&[0.2, 0.3, 0.5], &mut a));
        assert_eq!(a, [1.0; 3]);
    }

    #[test]
    fn reduced_form_round_trips() {
        let r = ReducedMaxwellStefan::new(ones(3)).unwrap();
        let mut full = [0.0; 3];
        r.expand(&[0.25, 0.5], &mut full);
        assert_eq!(full, [0.25, 0.5, 0.25]);
        let mut red = [0.0; 2];
        r.reduce(&full, &mut red);
        assert_eq!(red, [0.25, 0.5]);
        assert!(!r.admissible(&[0.7, 0.7], 1e-14));
    }
}
