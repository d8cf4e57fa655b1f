//! Objective sets, preference problems and the constants derived from them.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::function::{Scalarized, SharedFunction, SmoothFunction, Smoothness};
use crate::linalg;
use crate::manifold::{minimize_smooth, InnerMethod, InnerSolver};
use crate::simplex::SimplexPoint;

/// The objectives `f_1..f_n` together with their shared curvature bounds and
/// cached minimizers.
#[derive(Debug, Clone)]
pub struct ObjectiveSet {
    objectives: Vec<SharedFunction>,
    smoothness: Smoothness,
    minimizers: Vec<DVector<f64>>,
    spread: f64,
}

impl ObjectiveSet {
    /// Builds the set, taking the curvature bounds from `declared` or, when
    /// absent, from the weakest bounds declared by the individual objectives.
    pub fn new(objectives: Vec<SharedFunction>, declared: Option<Smoothness>) -> Result<Self> {
        let first = objectives
            .first()
            .ok_or_else(|| invalid("at least one objective is required"))?;
        let d = first.dim();
        if d == 0 {
            return Err(invalid("objectives must have positive dimension"));
        }
        if let Some(bad) = objectives.iter().position(|f| f.dim() != d) {
            return Err(invalid(format!(
                "objective {bad} has dimension {} but objective 0 has {d}",
                objectives[bad].dim()
            )));
        }
        let smoothness = match declared {
            Some(s) => s,
            None => combine_declared(&objectives)?,
        };
        validate_smoothness(&smoothness)?;

        let solver = InnerSolver {
            tol: 1e-10 * smoothness.l,
            max_iters: 10_000,
            method: InnerMethod::Newton,
        };
        let minimizers = objectives
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let start = f.minimizer_hint().unwrap_or_else(|| DVector::zeros(d));
                let solve = minimize_smooth(f.as_ref(), &smoothness, start, &solver)
                    .map_err(|e| Error::Numerical(format!("minimizer of objective {i}: {e}")))?;
                check_curvature(f.as_ref(), &solve.x, &smoothness, i)?;
                Ok(solve.x)
            })
            .collect::<Result<Vec<_>>>()?;
        let spread = max_pairwise_distance(&minimizers);
        Ok(Self {
            objectives,
            smoothness,
            minimizers,
            spread,
        })
    }

    pub fn len(&self) -> usize {
        self.objectives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objectives.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.objectives[0].dim()
    }

    pub fn objectives(&self) -> &[SharedFunction] {
        &self.objectives
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn condition_number(&self) -> f64 {
        self.smoothness.l / self.smoothness.mu
    }

    pub fn minimizers(&self) -> &[DVector<f64>] {
        &self.minimizers
    }

    /// Largest distance between two individual minimizers.
    pub fn spread(&self) -> f64 {
        self.spread
    }

    /// The convex combination `sum_i beta_i f_i`.
    pub fn scalarize(&self, beta: &SimplexPoint) -> Result<Scalarized> {
        self.check_weights(beta)?;
        Ok(Scalarized::new(
            self.objectives.clone(),
            beta.weights().iter().copied().collect(),
            Some(self.smoothness),
        ))
    }

    /// `sum_i beta_i m_i`, the default starting point for inner solves.
    pub fn weighted_minimizer(&self, beta: &SimplexPoint) -> DVector<f64> {
        self.minimizers
            .iter()
            .zip(beta.weights().iter())
            .fold(DVector::zeros(self.dim()), |acc, (m, w)| acc + m * *w)
    }

    /// The d x n matrix whose columns are the objective gradients at `x`.
    pub fn gradient_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let cols: Vec<_> = self.objectives.iter().map(|f| f.gradient(x)).collect();
        DMatrix::from_columns(&cols)
    }

    pub(crate) fn check_weights(&self, beta: &SimplexPoint) -> Result<()> {
        if beta.len() != self.len() {
            return Err(invalid(format!(
                "weight vector has {} entries for {} objectives",
                beta.len(),
                self.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_point(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(invalid(format!(
                "point has dimension {} but the objectives live in R^{}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

fn combine_declared(objectives: &[SharedFunction]) -> Result<Smoothness> {
    let mut out = Smoothness {
        mu: f64::INFINITY,
        l: 0.0,
        l_hess: 0.0,
    };
    for (i, f) in objectives.iter().enumerate() {
        let c = f
            .constants()
            .ok_or_else(|| Error::Config(format!("objective {i} declares no smoothness constants")))?;
        out.mu = out.mu.min(c.mu);
        out.l = out.l.max(c.l);
        out.l_hess = out.l_hess.max(c.l_hess);
    }
    Ok(out)
}

fn validate_smoothness(s: &Smoothness) -> Result<()> {
    let ok = s.mu > 0.0 && s.mu.is_finite() && s.l >= s.mu && s.l.is_finite();
    if !ok || !(s.l_hess >= 0.0 && s.l_hess.is_finite()) {
        return Err(Error::Config(format!(
            "need 0 < mu <= L and L_H >= 0, got mu={}, L={}, L_H={}",
            s.mu, s.l, s.l_hess
        )));
    }
    Ok(())
}

/// Spot check of the declared bounds at one point.
fn check_curvature(f: &dyn SmoothFunction, x: &DVector<f64>, s: &Smoothness, i: usize) -> Result<()> {
    let (lo, hi) = linalg::eigen_range(&linalg::symmetrize(&f.hessian(x)));
    let slack = 1e-9 * s.l.max(1.0);
    if lo < s.mu - slack || hi > s.l + slack {
        return Err(Error::Config(format!(
            "objective {i} has Hessian spectrum [{lo}, {hi}] outside the declared [{}, {}]",
            s.mu, s.l
        )));
    }
    Ok(())
}

fn max_pairwise_distance(points: &[DVector<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            best = best.max((p - q).norm());
        }
    }
    best
}

/// Bounds derived from the curvature constants and the minimizer spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantBundle {
    /// Bound on the diameter of the Pareto set, `sqrt(kappa) * r`.
    pub radius: f64,
    /// Lipschitz constant of the solution map in the l1 -> l2 norm.
    pub m0: f64,
    /// Lipschitz constant of its derivative.
    pub m1: f64,
    /// Curvature of the majorizing surrogates, `n * L0 * M1`.
    pub mu_g: f64,
    /// `M1 / (2 M0)` in the closed form `kappa (1 + L_H R / mu)`, which stays
    /// defined when `R = 0`.
    pub estimator_ratio: f64,
}

pub fn derive_constants(objectives: &ObjectiveSet, l0: f64) -> Result<ConstantBundle> {
    if !(l0 > 0.0 && l0.is_finite()) {
        return Err(Error::Config(format!(
            "preference smoothness L0 must be positive, got {l0}"
        )));
    }
    Ok(bundle_from(
        objectives.smoothness(),
        objectives.spread(),
        objectives.len(),
        l0,
    ))
}

/// The constant formulas on raw inputs.
pub fn bundle_from(s: Smoothness, spread: f64, n: usize, l0: f64) -> ConstantBundle {
    let kappa = s.l / s.mu;
    let radius = kappa.sqrt() * spread;
    let m0 = kappa * radius;
    let m1 = 2.0 * kappa * kappa * radius * (1.0 + s.l_hess * radius / s.mu);
    ConstantBundle {
        radius,
        m0,
        m1,
        mu_g: n as f64 * l0 * m1,
        estimator_ratio: kappa * (1.0 + s.l_hess * radius / s.mu),
    }
}

/// Objectives plus the preference function `f0` to be minimized over their
/// Pareto set.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    objectives: ObjectiveSet,
    preference: SharedFunction,
    l0: f64,
    constants: ConstantBundle,
}

impl ProblemInstance {
    /// `l0` overrides the smoothness declared by the preference function.
    pub fn new(objectives: ObjectiveSet, preference: SharedFunction, l0: Option<f64>) -> Result<Self> {
        if preference.dim() != objectives.dim() {
            return Err(invalid(format!(
                "preference has dimension {} but the objectives live in R^{}",
                preference.dim(),
                objectives.dim()
            )));
        }
        let l0 = match l0 {
            Some(v) => v,
            None => {
                preference
                    .constants()
                    .ok_or_else(|| Error::Config("preference declares no smoothness constant".into()))?
                    .l
            }
        };
        let constants = derive_constants(&objectives, l0)?;
        Ok(Self {
            objectives,
            preference,
            l0,
            constants,
        })
    }

    pub fn objectives(&self) -> &ObjectiveSet {
        &self.objectives
    }

    pub fn preference(&self) -> &SharedFunction {
        &self.preference
    }

    pub fn l0(&self) -> f64 {
        self.l0
    }

    pub fn constants(&self) -> &ConstantBundle {
        &self.constants
    }

    pub fn num_objectives(&self) -> usize {
        self.objectives.len()
    }

    pub fn dim(&self) -> usize {
        self.objectives.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::Quadratic;
    use crate::linalg::dvec;
    use approx::assert_relative_eq;

    fn pair() -> ObjectiveSet {
        ObjectiveSet::new(
            vec![
                Quadratic::isotropic(dvec(&[-1.0, 0.0])).shared(),
                Quadratic::isotropic(dvec(&[1.0, 0.0])).shared(),
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn symmetric_pair_scalarizes_to_shifted_norm() {
        let f = pair().scalarize(&SimplexPoint::uniform(2)).unwrap();
        assert_relative_eq!(f.value(&dvec(&[0.0, 0.0])), 0.5);
        let x = dvec(&[0.3, -1.2]);
        assert_relative_eq!(f.value(&x), 0.5 * x.norm_squared() + 0.5, epsilon = 1e-14);
    }

    #[test]
    fn single_objective_scalarization_is_identity() {
        let q = Quadratic::from_hessian(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            dvec(&[0.1, 0.2]),
        )
        .unwrap();
        let set = ObjectiveSet::new(vec![q.clone().shared()], None).unwrap();
        let f = set.scalarize(&SimplexPoint::vertex(1, 0)).unwrap();
        let x = dvec(&[-0.4, 0.9]);
        assert_eq!(f.value(&x), q.value(&x));
        assert_eq!(f.gradient(&x), q.gradient(&x));
        assert_eq!(f.hessian(&x), q.hessian(&x));
    }

    #[test]
    fn weighted_gradient() {
        let beta = SimplexPoint::new(vec![0.25, 0.75]).unwrap();
        let g = pair().scalarize(&beta).unwrap().gradient(&dvec(&[0.0, 0.0]));
        assert_relative_eq!(g, dvec(&[-0.5, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn scalarize_rejects_wrong_length() {
        let beta = SimplexPoint::uniform(3);
        assert!(matches!(pair().scalarize(&beta), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn constants_of_identity_pair() {
        let c = derive_constants(&pair(), 1.0).unwrap();
        assert_relative_eq!(c.radius, 2.0);
        assert_relative_eq!(c.m0, 2.0);
        assert_relative_eq!(c.m1, 4.0);
        assert_relative_eq!(c.mu_g, 8.0);
    }

    #[test]
    fn constants_vanish_for_one_objective() {
        let set = ObjectiveSet::new(vec![Quadratic::isotropic(dvec(&[1.0, 2.0])).shared()], None).unwrap();
        let c = derive_constants(&set, 1.0).unwrap();
        assert_eq!((c.radius, c.m0, c.m1, c.mu_g), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(c.estimator_ratio, 1.0);
    }

    #[test]
    fn constants_from_raw_values() {
        let s = Smoothness {
            mu: 1.0,
            l: 4.0,
            l_hess: 0.0,
        };
        let c = bundle_from(s, 1.0, 2, 1.0);
        assert_relative_eq!(c.radius, 2.0);
        assert_relative_eq!(c.m0, 8.0);
        assert_relative_eq!(c.m1, 64.0);
        assert_relative_eq!(c.mu_g, 128.0);
        assert_relative_eq!(c.estimator_ratio, c.m1 / (2.0 * c.m0));
    }

    #[test]
    fn missing_preference_constant_is_a_config_error() {
        #[derive(Debug)]
        struct Bare;
        impl SmoothFunction for Bare {
            fn dim(&self) -> usize {
                2
            }
            fn value(&self, x: &DVector<f64>) -> f64 {
                x.norm_squared()
            }
            fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
                x * 2.0
            }
            fn hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
                DMatrix::identity(2, 2) * 2.0
            }
        }
        let err = ProblemInstance::new(pair(), std::sync::Arc::new(Bare), None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = ObjectiveSet::new(vec![std::sync::Arc::new(Bare)], None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn declared_bounds_are_spot_checked() {
        let loose = Smoothness {
            mu: 2.0,
            l: 3.0,
            l_hess: 0.0,
        };
        let err = ObjectiveSet::new(vec![Quadratic::isotropic(dvec(&[0.0])).shared()], Some(loose));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn cached_minimizers_are_accurate() {
        let q = crate::function::SoftplusQuadratic::new(
            Quadratic::from_hessian(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]), dvec(&[0.5, -0.5]))
                .unwrap(),
            0.8,
            dvec(&[0.0, 0.1]),
        )
        .unwrap();
        let set = ObjectiveSet::new(vec![std::sync::Arc::new(q.clone())], None).unwrap();
        let l = set.smoothness().l;
        assert!(q.gradient(&set.minimizers()[0]).norm() <= 1e-10 * l);
    }
}
