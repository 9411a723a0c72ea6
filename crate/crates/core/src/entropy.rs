//! Separable entropy densities `h(y) = Σ h_i(y_i)`, their glued
//! regularization `h_ε` and relative entropies.
//!
//! A Case 1 component (`h_i″ → ∞` at 0) is glued: its Hessian is replaced by
//! `h_i″(g(y))` with `g(y) = ε η¹_ε(y) + y η²_ε(y)`, which freezes the
//! Hessian at `h_i″(ε)` below `ε` and leaves it untouched above `2ε`. Case 2
//! components (bounded Hessian) are kept as they are.

use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::math::{abs, ln};
use crate::quadrature::adaptive_simpson;

/// Quadrature tolerance on the transition layer `[ε, 2ε]`.
const GLUE_QUAD_TOL: f64 = 1e-10;
/// Negative round-off accepted (and clamped to 0) in glued evaluations.
const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlowupClass {
    /// `h″` blows up monotonically at 0.
    Case1,
    /// `h″` bounded above and below by positive constants.
    Case2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarKind {
    /// `w · y (ln y − 1)`
    Boltzmann { weight: f64 },
    /// `c · y²`
    Quadratic { coef: f64 },
}

/// One component `h_i` on `(0, d_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarEntropy {
    kind: ScalarKind,
    upper: f64,
}

impl ScalarEntropy {
    pub fn boltzmann(weight: f64, upper: f64) -> Result<Self> {
        if !(weight > 0.0) || !weight.is_finite() {
            return Err(Error::BadCoefficients(alloc::format!("Boltzmann weight {weight} must be positive")));
        }
        Self::with_upper(ScalarKind::Boltzmann { weight }, upper)
    }

    pub fn quadratic(coef: f64, upper: f64) -> Result<Self> {
        if !(coef > 0.0) || !coef.is_finite() {
            return Err(Error::BadCoefficients(alloc::format!("quadratic coefficient {coef} must be positive")));
        }
        Self::with_upper(ScalarKind::Quadratic { coef }, upper)
    }

    fn with_upper(kind: ScalarKind, upper: f64) -> Result<Self> {
        if !(upper > 0.0) || !upper.is_finite() {
            return Err(Error::BadCoefficients(alloc::format!("domain bound {upper} must be positive")));
        }
        Ok(ScalarEntropy { kind, upper })
    }

    pub fn kind(&self) -> ScalarKind {
        self.kind
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn class(&self) -> BlowupClass {
        match self.kind {
            ScalarKind::Boltzmann { .. } => BlowupClass::Case1,
            ScalarKind::Quadratic { .. } => BlowupClass::Case2,
        }
    }

    pub fn value(&self, y: f64) -> f64 {
        match self.kind {
            ScalarKind::Boltzmann { weight } => {
                if y == 0.0 {
                    0.0
                } else {
                    weight * y * (ln(y) - 1.0)
                }
            }
            ScalarKind::Quadratic { coef } => coef * y * y,
        }
    }

    pub fn d1(&self, y: f64) -> f64 {
        match self.kind {
            ScalarKind::Boltzmann { weight } => weight * ln(y),
            ScalarKind::Quadratic { coef } => 2.0 * coef * y,
        }
    }

    pub fn d2(&self, y: f64) -> f64 {
        match self.kind {
            ScalarKind::Boltzmann { weight } => weight / y,
            ScalarKind::Quadratic { coef } => 2.0 * coef,
        }
    }

    /// Largest sampled ratio `h″(ε)/h″(2ε)` over `ε = d·2⁻ᵏ`, `k = 2..40`
    /// (Case 1 doubling constant; 1 for Case 2).
    pub fn doubling_constant(&self) -> f64 {
        if self.class() == BlowupClass::Case2 {
            return 1.0;
        }
        (2..40)
            .map(|k| {
                let e = self.upper * libm::ldexp(1.0, -k);
                self.d2(e) / self.d2(2.0 * e)
            })
            .fold(0.0, f64::max)
    }

    /// `(min, max)` of `h″` on `[lo, d]`: three-point probe for Case 1
    /// (monotone), 1000-point grid for Case 2.
    fn hessian_bounds(&self, lo: f64) -> (f64, f64) {
        let samples: Vec<f64> = match self.class() {
            BlowupClass::Case1 => vec![self.d2(lo), self.d2(2.0 * lo), self.d2(self.upper)],
            BlowupClass::Case2 => (0..1000).map(|k| self.d2(self.upper * k as f64 / 999.0)).collect(),
        };
        let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }
}

/// Common interface of raw and glued entropy densities.
pub trait EntropyEval {
    fn n(&self) -> usize;
    fn upper(&self, i: usize) -> f64;
    fn class(&self, i: usize) -> BlowupClass;
    fn is_glued(&self) -> bool;
    fn value(&self, y: &[f64]) -> Result<f64>;
    fn gradient(&self, y: &[f64], out: &mut [f64]) -> Result<()>;
    /// Diagonal of the Hessian.
    fn hessian_diag(&self, y: &[f64], out: &mut [f64]) -> Result<()>;
}

/// `h(y) = Σ h_i(y_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyDensity {
    components: Vec<ScalarEntropy>,
}

impl EntropyDensity {
    pub fn new(components: Vec<ScalarEntropy>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("entropy needs at least one component".into()));
        }
        Ok(EntropyDensity { components })
    }

    /// `Σ y_i (ln y_i − 1)`
    pub fn boltzmann(uppers: &[f64]) -> Result<Self> {
        Self::new(uppers.iter().map(|&d| ScalarEntropy::boltzmann(1.0, d)).collect::<Result<_>>()?)
    }

    /// `y₁(ln y₁ − 1)/α₁₂ + y₂(ln y₂ − 1)/α₂₁`
    pub fn skt(alpha12: f64, alpha21: f64, uppers: &[f64]) -> Result<Self> {
        if uppers.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: uppers.len() });
        }
        Self::new(vec![
            ScalarEntropy::boltzmann(1.0 / alpha12, uppers[0])?,
            ScalarEntropy::boltzmann(1.0 / alpha21, uppers[1])?,
        ])
    }

    /// `y₁(ln y₁ − 1) + (β/2δ) y₂²`
    pub fn pks(beta: f64, delta: f64, uppers: &[f64]) -> Result<Self> {
        if uppers.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, found: uppers.len() });
        }
        Self::new(vec![
            ScalarEntropy::boltzmann(1.0, uppers[0])?,
            ScalarEntropy::quadratic(beta / (2.0 * delta), uppers[1])?,
        ])
    }

    pub fn components(&self) -> &[ScalarEntropy] {
        &self.components
    }

    fn check_len(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.components.len() {
            return Err(Error::DimensionMismatch { expected: self.components.len(), found: y.len() });
        }
        Ok(())
    }

    fn check_open(&self, y: &[f64]) -> Result<()> {
        self.check_len(y)?;
        for (i, (c, &v)) in self.components.iter().zip(y).enumerate() {
            let below = match c.class() {
                BlowupClass::Case1 => !(v > 0.0),
                BlowupClass::Case2 => v < 0.0,
            };
            if below || v > c.upper() || !v.is_finite() {
                return Err(Error::DomainViolation { component: i, value: v });
            }
        }
        Ok(())
    }
}

impl EntropyEval for EntropyDensity {
    fn n(&self) -> usize {
        self.components.len()
    }

    fn upper(&self, i: usize) -> f64 {
        self.components[i].upper()
    }

    fn class(&self, i: usize) -> BlowupClass {
        self.components[i].class()
    }

    fn is_glued(&self) -> bool {
        false
    }

    fn value(&self, y: &[f64]) -> Result<f64> {
        self.check_len(y)?;
        for (i, (c, &v)) in self.components.iter().zip(y).enumerate() {
            if v < 0.0 || v > c.upper() || !v.is_finite() {
                return Err(Error::DomainViolation { component: i, value: v });
            }
        }
        Ok(self.components.iter().zip(y).map(|(c, &v)| c.value(v)).sum())
    }

    fn gradient(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_open(y)?;
        for ((o, c), &v) in out.iter_mut().zip(&self.components).zip(y) {
            *o = c.d1(v);
        }
        Ok(())
    }

    fn hessian_diag(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_open(y)?;
        for ((o, c), &v) in out.iter_mut().zip(&self.components).zip(y) {
            *o = c.d2(v);
        }
        Ok(())
    }
}

/// Partition of unity `(η¹_ε, η²_ε)` subordinate to `(−∞, 2ε) ∪ (ε, ∞)`:
/// `η² = 3t² − 2t³` with `t = (y − ε)/ε` on `[ε, 2ε]`.
pub fn transition_weights(eps: f64, y: f64) -> (f64, f64) {
    let eta2 = if y <= eps {
        0.0
    } else if y >= 2.0 * eps {
        1.0
    } else {
        let t = (y - eps) / eps;
        t * t * (3.0 - 2.0 * t)
    };
    (1.0 - eta2, eta2)
}

/// `g(y) = ε η¹_ε(y) + y η²_ε(y)`, the argument fed to `h_i″`.
pub fn glued_arg(eps: f64, y: f64) -> f64 {
    let (e1, e2) = transition_weights(eps, y);
    eps * e1 + y * e2
}

#[derive(Debug, Clone, Copy)]
struct GluedComponent {
    base: ScalarEntropy,
    /// `h″(ε)`
    hess_eps: f64,
    /// `h_ε(2ε)` and `h_ε′(2ε)`
    value_2eps: f64,
    slope_2eps: f64,
}

impl GluedComponent {
    fn build(base: ScalarEntropy, eps: f64) -> Self {
        let hess_eps = base.d2(eps);
        let k = |s: f64| base.d2(glued_arg(eps, s));
        let two = 2.0 * eps;
        let slope_2eps = hess_eps * eps + adaptive_simpson(&k, eps, two, GLUE_QUAD_TOL);
        let value_2eps = 1.5 * hess_eps * eps * eps
            + adaptive_simpson(&|s: f64| (two - s) * k(s), eps, two, GLUE_QUAD_TOL);
        GluedComponent { base, hess_eps, value_2eps, slope_2eps }
    }

    fn d2(&self, eps: f64, y: f64) -> f64 {
        match self.base.class() {
            BlowupClass::Case1 => self.base.d2(glued_arg(eps, y)),
            BlowupClass::Case2 => self.base.d2(y),
        }
    }

    fn d1(&self, eps: f64, y: f64) -> f64 {
        if self.base.class() == BlowupClass::Case2 {
            return self.base.d1(y);
        }
        let two = 2.0 * eps;
        if y <= eps {
            self.hess_eps * y
        } else if y < two {
            let k = |s: f64| self.base.d2(glued_arg(eps, s));
            self.hess_eps * eps + adaptive_simpson(&k, eps, y, GLUE_QUAD_TOL)
        } else {
            self.slope_2eps + self.base.d1(y) - self.base.d1(two)
        }
    }

    fn value(&self, eps: f64, y: f64) -> f64 {
        if self.base.class() == BlowupClass::Case2 {
            return self.base.value(y);
        }
        let two = 2.0 * eps;
        if y <= eps {
            0.5 * self.hess_eps * y * y
        } else if y < two {
            let k = |s: f64| (y - s) * self.base.d2(glued_arg(eps, s));
            0.5 * self.hess_eps * eps * eps
                + self.hess_eps * eps * (y - eps)
                + adaptive_simpson(&k, eps, y, GLUE_QUAD_TOL)
        } else {
            let dy = y - two;
            self.value_2eps + self.slope_2eps * dy + self.base.value(y)
                - self.base.value(two)
                - self.base.d1(two) * dy
        }
    }
}

/// Glued entropy density `h_ε(y) = Σ h_{ε,i}(y_i)`, defined on the closed box.
#[derive(Debug)]
pub struct GluedEntropy {
    base: EntropyDensity,
    eps: f64,
    parts: Vec<GluedComponent>,
    lambda_lo: f64,
    lambda_hi: f64,
    clamped: AtomicUsize,
}

impl Clone for GluedEntropy {
    fn clone(&self) -> Self {
        GluedEntropy {
            base: self.base.clone(),
            eps: self.eps,
            parts: self.parts.clone(),
            lambda_lo: self.lambda_lo,
            lambda_hi: self.lambda_hi,
            clamped: AtomicUsize::new(self.clamped.load(Ordering::Relaxed)),
        }
    }
}

impl GluedEntropy {
    /// Requires `0 < ε < min_i d_i / 2`.
    pub fn new(base: EntropyDensity, eps: f64) -> Result<Self> {
        let dmin = base.components.iter().map(|c| c.upper()).fold(f64::INFINITY, f64::min);
        if !(eps > 0.0) || !(eps < 0.5 * dmin) {
            return Err(Error::InvalidArgument(alloc::format!(
                "gluing parameter {eps} must lie in (0, {})",
                0.5 * dmin
            )));
        }
        let parts: Vec<GluedComponent> = base.components.iter().map(|&c| GluedComponent::build(c, eps)).collect();
        let mut lambda_lo = f64::INFINITY;
        let mut lambda_hi = 0.0f64;
        for c in &base.components {
            let (lo, hi) = c.hessian_bounds(eps);
            lambda_lo = lambda_lo.min(lo);
            lambda_hi = lambda_hi.max(hi);
        }
        Ok(GluedEntropy { base, eps, parts, lambda_lo, lambda_hi, clamped: AtomicUsize::new(0) })
    }

    pub fn base(&self) -> &EntropyDensity {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    /// `λ′`: lower Hessian bound.
    pub fn lambda_prime(&self) -> f64 {
        self.lambda_lo
    }

    /// `Λ′`: upper Hessian bound.
    pub fn big_lambda_prime(&self) -> f64 {
        self.lambda_hi
    }

    /// Number of slightly negative inputs clamped to 0 so far.
    pub fn clamp_count(&self) -> usize {
        self.clamped.load(Ordering::Relaxed)
    }

    fn checked(&self, i: usize, v: f64) -> Result<f64> {
        let d = self.parts[i].base.upper();
        if !v.is_finite() || v < -CLAMP_TOL || v > d * (1.0 + CLAMP_TOL) {
            return Err(Error::DomainViolation { component: i, value: v });
        }
        if v < 0.0 {
            self.clamped.fetch_add(1, Ordering::Relaxed);
            return Ok(0.0);
        }
        Ok(v.min(d))
    }

    fn check_len(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.parts.len() {
            return Err(Error::DimensionMismatch { expected: self.parts.len(), found: y.len() });
        }
        Ok(())
    }

    /// Scalar pieces of component `i` at `y`: `(h_{ε,i}, h′_{ε,i}, h″_{ε,i})`.
    pub fn component(&self, i: usize, y: f64) -> Result<(f64, f64, f64)> {
        let v = self.checked(i, y)?;
        let p = &self.parts[i];
        Ok((p.value(self.eps, v), p.d1(self.eps, v), p.d2(self.eps, v)))
    }

    /// `(h_ε(y), ∇h_ε(y))`
    pub fn value_and_grad(&self, y: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_len(y)?;
        let mut grad = vec![0.0; y.len()];
        let mut value = 0.0;
        for (i, (&v, g)) in y.iter().zip(grad.iter_mut()).enumerate() {
            let v = self.checked(i, v)?;
            value += self.parts[i].value(self.eps, v);
            *g = self.parts[i].d1(self.eps, v);
        }
        Ok((value, grad))
    }
}

impl EntropyEval for GluedEntropy {
    fn n(&self) -> usize {
        self.parts.len()
    }

    fn upper(&self, i: usize) -> f64 {
        self.parts[i].base.upper()
    }

    fn class(&self, i: usize) -> BlowupClass {
        self.parts[i].base.class()
    }

    fn is_glued(&self) -> bool {
        true
    }

    fn value(&self, y: &[f64]) -> Result<f64> {
        self.check_len(y)?;
        let mut acc = 0.0;
        for (i, &v) in y.iter().enumerate() {
            let v = self.checked(i, v)?;
            acc += self.parts[i].value(self.eps, v);
        }
        Ok(acc)
    }

    fn gradient(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len(y)?;
        for (i, &v) in y.iter().enumerate() {
            let v = self.checked(i, v)?;
            out[i] = self.parts[i].d1(self.eps, v);
        }
        Ok(())
    }

    fn hessian_diag(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_len(y)?;
        for (i, &v) in y.iter().enumerate() {
            let v = self.checked(i, v)?;
            out[i] = self.parts[i].d2(self.eps, v);
        }
        Ok(())
    }
}

/// Diagonal of `h_ε″(y)` as a vector.
pub fn glued_hessian(glued: &GluedEntropy, y: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; y.len()];
    glued.hessian_diag(y, &mut out)?;
    Ok(out)
}

/// Bregman divergence `h(u) − h(v) − ⟨h′(v), u − v⟩`.
pub fn relative_entropy<E: EntropyEval + ?Sized>(entropy: &E, u: &[f64], v: &[f64]) -> Result<f64> {
    let hu = entropy.value(u)?;
    let hv = entropy.value(v)?;
    let mut grad = vec![0.0; v.len()];
    entropy.gradient(v, &mut grad)?;
    let lin: f64 = grad.iter().zip(u.iter().zip(v)).map(|(g, (a, b))| g * (a - b)).sum();
    let rel = hu - hv - lin;
    // cancellation noise only; genuine negativity is returned as is
    let noise = 1e-14 * (1.0 + abs(hu) + abs(hv) + abs(lin));
    if rel < 0.0 && rel > -noise {
        Ok(0.0)
    } else {
        Ok(rel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boltz(eps: f64) -> GluedEntropy {
        GluedEntropy::new(EntropyDensity::boltzmann(&[1.0]).unwrap(), eps).unwrap()
    }

    #[test]
    fn transition_weight_examples() {
        assert_eq!(transition_weights(0.1, 0.05), (1.0, 0.0));
        assert_eq!(transition_weights(0.1, 0.3), (0.0, 1.0));
        let (a, b) = transition_weights(0.1, 0.15);
        assert!((a - 0.5).abs() < 1e-15 && (b - 0.5).abs() < 1e-15);
    }

    #[test]
    fn glued_arg_examples() {
        assert_eq!(glued_arg(0.1, 0.0), 0.1);
        assert_eq!(glued_arg(0.1, 0.5), 0.5);
        assert!((glued_arg(0.1, 0.15) - 0.125).abs() < 1e-15);
        for k in 0..=1000 {
            let y = k as f64 * 1e-3;
            assert!(glued_arg(0.1, y) >= 0.1 - 1e-16);
        }
    }

    #[test]
    fn glued_hessian_examples() {
        let g = boltz(0.1);
        assert!((glued_hessian(&g, &[0.05]).unwrap()[0] - 10.0).abs() < 1e-12);
        assert!((glued_hessian(&g, &[0.5]).unwrap()[0] - 2.0).abs() < 1e-15);
        let q = GluedEntropy::new(EntropyDensity::new(vec![ScalarEntropy::quadratic(0.75, 1.0).unwrap()]).unwrap(), 0.1)
            .unwrap();
        assert_eq!(glued_hessian(&q, &[0.3]).unwrap(), vec![1.5]);
        assert!(matches!(glued_hessian(&g, &[1.5]), Err(Error::DomainViolation { .. })));
    }

    #[test]
    fn glued_value_and_grad_examples() {
        let g = boltz(0.1);
        let (v, d) = g.value_and_grad(&[0.05]).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-14);
        assert!((v - 0.0125).abs() < 1e-15);
        assert_eq!(g.value_and_grad(&[0.0]).unwrap(), (0.0, vec![0.0]));
        let q = GluedEntropy::new(EntropyDensity::new(vec![ScalarEntropy::quadratic(0.75, 2.0).unwrap()]).unwrap(), 0.1)
            .unwrap();
        assert_eq!(q.value_and_grad(&[1.0]).unwrap(), (0.75, vec![1.5]));
    }

    #[test]
    fn slightly_negative_input_is_clamped_and_counted() {
        let g = boltz(0.1);
        assert_eq!(g.value(&[-1e-13]).unwrap(), 0.0);
        assert_eq!(g.clamp_count(), 1);
        assert!(g.value(&[-1e-9]).is_err());
    }

    #[test]
    fn epsilon_must_be_below_half_the_domain() {
        assert!(GluedEntropy::new(EntropyDensity::boltzmann(&[1.0]).unwrap(), 0.5).is_err());
        assert!(GluedEntropy::new(EntropyDensity::boltzmann(&[1.0]).unwrap(), 0.0).is_err());
    }

    #[test]
    fn hessian_bounds_for_boltzmann() {
        let g = boltz(0.1);
        assert!((g.big_lambda_prime() - 10.0).abs() < 1e-12);
        assert!((g.lambda_prime() - 1.0).abs() < 1e-15);
        assert_eq!(ScalarEntropy::boltzmann(1.0, 1.0).unwrap().doubling_constant(), 2.0);
    }

    #[test]
    fn relative_entropy_examples() {
        let q = EntropyDensity::new(vec![ScalarEntropy::quadratic(0.7, 2.0).unwrap()]).unwrap();
        assert!((relative_entropy(&q, &[1.0], &[0.0]).unwrap() - 0.7).abs() < 1e-15);
        let g = boltz(0.1);
        assert_eq!(relative_entropy(&g, &[0.3], &[0.3]).unwrap(), 0.0);
    }

    #[test]
    fn builtin_entropies_match_closed_forms() {
        let y = [0.3, 0.6];
        let b = EntropyDensity::boltzmann(&[1.0, 1.0]).unwrap();
        let expect = 0.3 * (ln(0.3) - 1.0) + 0.6 * (ln(0.6) - 1.0);
        assert!((b.value(&y).unwrap() - expect).abs() < 1e-15);
        let s = EntropyDensity::skt(2.0, 4.0, &[1.0, 1.0]).unwrap();
        let expect = 0.3 / 2.0 * (ln(0.3) - 1.0) + 0.6 / 4.0 * (ln(0.6) - 1.0);
        assert!((s.value(&y).unwrap() - expect).abs() < 1e-15);
        let p = EntropyDensity::pks(1.5, 0.5, &[1.0, 1.0]).unwrap();
        let expect = 0.3 * (ln(0.3) - 1.0) + 1.5 / (2.0 * 0.5) * 0.36;
        assert!((p.value(&y).unwrap() - expect).abs() < 1e-15);
    }
}
