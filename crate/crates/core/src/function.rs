//! Twice-differentiable functions with declared smoothness constants.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::linalg;

/// Declared curvature bounds: `mu I <= hess <= l I`, and the Hessian is
/// `l_hess`-Lipschitz in the spectral norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothness {
    pub mu: f64,
    pub l: f64,
    pub l_hess: f64,
}

/// A scalar function on R^d with gradient and Hessian access.
///
/// Implementations must be pure: the same input always yields the same
/// output, and evaluation may happen from several threads at once.
pub trait SmoothFunction: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// Constants declared by the author of the function, if known.
    fn constants(&self) -> Option<Smoothness> {
        None
    }

    /// A good starting point for minimization, if one is known cheaply.
    fn minimizer_hint(&self) -> Option<DVector<f64>> {
        None
    }

    /// Downcast used by the closed-form oracles.
    fn as_quadratic(&self) -> Option<&Quadratic> {
        None
    }
}

pub type SharedFunction = Arc<dyn SmoothFunction>;

/// `f(x) = 1/2 ||A (x - z)||^2`, with Hessian `H = A^T A`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    factor: DMatrix<f64>,
    center: DVector<f64>,
    hessian: DMatrix<f64>,
    smoothness: Smoothness,
}

/// Builds `1/2 ||A (x - z)||^2` from a full-rank square factor `A`.
pub fn make_quadratic(a: DMatrix<f64>, z: DVector<f64>) -> Result<Quadratic> {
    if !a.is_square() || a.nrows() != z.len() || z.is_empty() {
        return Err(invalid(format!(
            "factor is {}x{} but center has length {}",
            a.nrows(),
            a.ncols(),
            z.len()
        )));
    }
    if a.iter().chain(z.iter()).any(|v| !v.is_finite()) {
        return Err(invalid("non-finite entry in quadratic"));
    }
    let sv = a.singular_values();
    let (smin, smax) = (sv.min(), sv.max());
    if !(smax > 0.0 && smin > 1e-12 * smax) {
        return Err(invalid(format!(
            "factor is rank deficient (singular values {smin:e} .. {smax:e})"
        )));
    }
    let hessian = linalg::symmetrize(&(a.transpose() * &a));
    let (mu, l) = linalg::eigen_range(&hessian);
    Ok(Quadratic {
        factor: a,
        center: z,
        hessian,
        smoothness: Smoothness { mu, l, l_hess: 0.0 },
    })
}

impl Quadratic {
    /// Builds the quadratic with Hessian `h` (symmetric positive definite)
    /// using its Cholesky factor, `A = L^T`.
    pub fn from_hessian(h: DMatrix<f64>, z: DVector<f64>) -> Result<Self> {
        if !h.is_square() {
            return Err(invalid("Hessian must be square"));
        }
        let scale = h.amax().max(f64::MIN_POSITIVE);
        if (&h - h.transpose()).amax() > 1e-12 * scale {
            return Err(invalid("Hessian must be symmetric"));
        }
        let chol = nalgebra::Cholesky::new(linalg::symmetrize(&h))
            .ok_or_else(|| invalid("Hessian must be positive definite"))?;
        make_quadratic(chol.l().transpose(), z)
    }

    /// `1/2 ||x - z||^2`.
    pub fn isotropic(z: DVector<f64>) -> Self {
        let d = z.len();
        make_quadratic(DMatrix::identity(d, d), z).expect("identity is full rank")
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn hessian_matrix(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn shared(self) -> SharedFunction {
        Arc::new(self)
    }
}

impl SmoothFunction for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * (&self.factor * (x - &self.center)).norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.hessian * (x - &self.center)
    }

    fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.hessian.clone()
    }

    fn constants(&self) -> Option<Smoothness> {
        Some(self.smoothness)
    }

    fn minimizer_hint(&self) -> Option<DVector<f64>> {
        Some(self.center.clone())
    }

    fn as_quadratic(&self) -> Option<&Quadratic> {
        Some(self)
    }
}

/// Largest value of `|s'''|` for the softplus `s(t) = ln(1 + e^t)`.
pub const SOFTPLUS_THIRD_DERIVATIVE_MAX: f64 = 0.096_225_044_864_937_63; // 1 / (6 sqrt 3)

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Non-quadratic built-in:
/// `f(x) = 1/2 (x - z)^T H (x - z) + w * sum_k softplus(x_k - s_k)`.
///
/// Strongly convex with `mu = lambda_min(H)`, `L = lambda_max(H) + w/4` and a
/// Hessian that is `w / (6 sqrt 3)`-Lipschitz.
#[derive(Debug, Clone)]
pub struct SoftplusQuadratic {
    quadratic: Quadratic,
    weight: f64,
    shift: DVector<f64>,
}

impl SoftplusQuadratic {
    pub fn new(quadratic: Quadratic, weight: f64, shift: DVector<f64>) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(invalid("softplus weight must be finite and nonnegative"));
        }
        if shift.len() != quadratic.dim() {
            return Err(invalid("softplus shift has the wrong dimension"));
        }
        Ok(Self {
            quadratic,
            weight,
            shift,
        })
    }

    pub fn quadratic(&self) -> &Quadratic {
        &self.quadratic
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }
}

impl SmoothFunction for SoftplusQuadratic {
    fn dim(&self) -> usize {
        self.quadratic.dim()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let barrier: f64 = x.iter().zip(self.shift.iter()).map(|(a, s)| softplus(a - s)).sum();
        self.quadratic.value(x) + self.weight * barrier
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = self.quadratic.gradient(x);
        for (k, gk) in g.iter_mut().enumerate() {
            *gk += self.weight * sigmoid(x[k] - self.shift[k]);
        }
        g
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut h = self.quadratic.hessian_matrix().clone();
        for k in 0..self.dim() {
            let s = sigmoid(x[k] - self.shift[k]);
            h[(k, k)] += self.weight * s * (1.0 - s);
        }
        h
    }

    fn constants(&self) -> Option<Smoothness> {
        let q = self.quadratic.smoothness;
        Some(Smoothness {
            mu: q.mu,
            l: q.l + 0.25 * self.weight,
            l_hess: self.weight * SOFTPLUS_THIRD_DERIVATIVE_MAX,
        })
    }

    fn minimizer_hint(&self) -> Option<DVector<f64>> {
        Some(self.quadratic.center.clone())
    }
}

/// The convex combination `f_beta = sum_i beta_i f_i`.
#[derive(Debug, Clone)]
pub struct Scalarized {
    objectives: Vec<SharedFunction>,
    weights: Vec<f64>,
    smoothness: Option<Smoothness>,
}

impl Scalarized {
    pub(crate) fn new(
        objectives: Vec<SharedFunction>,
        weights: Vec<f64>,
        smoothness: Option<Smoothness>,
    ) -> Self {
        Self {
            objectives,
            weights,
            smoothness,
        }
    }

    fn terms(&self) -> impl Iterator<Item = (f64, &SharedFunction)> {
        self.weights
            .iter()
            .copied()
            .zip(self.objectives.iter())
            .filter(|(w, _)| *w != 0.0)
    }
}

impl SmoothFunction for Scalarized {
    fn dim(&self) -> usize {
        self.objectives[0].dim()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.terms().map(|(w, f)| w * f.value(x)).sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.terms()
            .fold(DVector::zeros(self.dim()), |acc, (w, f)| acc + f.gradient(x) * w)
    }

    fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim();
        self.terms()
            .fold(DMatrix::zeros(d, d), |acc, (w, f)| acc + f.hessian(x) * w)
    }

    fn constants(&self) -> Option<Smoothness> {
        self.smoothness
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dvec;
    use approx::assert_relative_eq;

    #[test]
    fn identity_quadratic() {
        let f = make_quadratic(DMatrix::identity(2, 2), dvec(&[0.0, 0.0])).unwrap();
        let e1 = dvec(&[1.0, 0.0]);
        assert_eq!(f.value(&e1), 0.5);
        assert_eq!(f.gradient(&e1), e1);
        assert_eq!(f.hessian(&e1), DMatrix::identity(2, 2));
    }

    #[test]
    fn cholesky_factored_quadratic_gradient() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        let f = Quadratic::from_hessian(h.clone(), dvec(&[-1.0, 0.0])).unwrap();
        assert_relative_eq!(f.factor().transpose() * f.factor(), h, epsilon = 1e-14);
        let g = f.gradient(&dvec(&[0.0, 0.0]));
        assert_relative_eq!(g, dvec(&[1.0, 1.0]), epsilon = 1e-14);
    }

    #[test]
    fn scaled_identity_constants() {
        let f = make_quadratic(DMatrix::identity(2, 2) * 2.0, dvec(&[0.0, 1.0])).unwrap();
        let c = f.constants().unwrap();
        assert_relative_eq!(c.mu, 4.0, epsilon = 1e-14);
        assert_relative_eq!(c.l, 4.0, epsilon = 1e-14);
        assert_eq!(c.l_hess, 0.0);
        assert_relative_eq!(f.value(&dvec(&[0.0, 0.0])), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn rank_deficient_factor_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(make_quadratic(a, dvec(&[0.0, 0.0])).is_err());
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(Quadratic::from_hessian(h, dvec(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn softplus_is_stable_for_large_arguments() {
        assert_relative_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert_relative_eq!(softplus(0.0), std::f64::consts::LN_2);
        assert_relative_eq!(sigmoid(-800.0), 0.0);
        assert_relative_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn softplus_third_derivative_bound() {
        // s''' = p (1 - p)(1 - 2p) with p = sigmoid(t); scan p on a fine grid.
        let max = (0..=200_000)
            .map(|i| {
                let p = i as f64 / 200_000.0;
                (p * (1.0 - p) * (1.0 - 2.0 * p)).abs()
            })
            .fold(0.0, f64::max);
        assert_relative_eq!(max, SOFTPLUS_THIRD_DERIVATIVE_MAX, max_relative = 1e-9);
    }
}
