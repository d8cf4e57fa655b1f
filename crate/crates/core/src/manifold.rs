//! Points `(x, beta)` with `grad f_beta(x) = 0`, the solution map `beta -> x`
//! and its derivative.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::function::{SmoothFunction, Smoothness};
use crate::linalg;
use crate::problem::{ObjectiveSet, ProblemInstance};
use crate::simplex::SimplexPoint;

/// A primal point paired with weights, caching `||grad f_beta(x)||`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    pub x: DVector<f64>,
    pub beta: SimplexPoint,
    pub residual: f64,
}

impl ManifoldPoint {
    pub fn evaluate(objectives: &ObjectiveSet, x: DVector<f64>, beta: SimplexPoint) -> Result<Self> {
        objectives.check_point(&x)?;
        let residual = objectives.scalarize(&beta)?.gradient(&x).norm();
        Ok(Self { x, beta, residual })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianKind {
    Exact,
    Estimated,
}

/// A d x n derivative of the solution map, or its off-manifold estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
    pub kind: JacobianKind,
}

impl Jacobian {
    /// Operator norm from (R^n, l1) to (R^d, l2).
    pub fn norm_l1_l2(&self) -> f64 {
        linalg::norm_l1_l2(&self.matrix)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerMethod {
    /// Fixed step `1/L`; decreases the objective monotonically.
    GradientDescent,
    /// Damped Newton with backtracking; used where high accuracy is needed.
    Newton,
}

/// Stopping rule and method for unconstrained inner minimizations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolver {
    /// Target gradient norm.
    pub tol: f64,
    pub max_iters: usize,
    pub method: InnerMethod,
}

impl InnerSolver {
    pub fn gradient_descent(tol: f64) -> Self {
        Self {
            tol,
            max_iters: 200_000,
            method: InnerMethod::GradientDescent,
        }
    }

    pub fn newton(tol: f64) -> Self {
        Self {
            tol,
            max_iters: 500,
            method: InnerMethod::Newton,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InnerSolve {
    pub x: DVector<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
}

fn finite_gradient(f: &dyn SmoothFunction, x: &DVector<f64>) -> Result<DVector<f64>> {
    let g = f.gradient(x);
    if g.iter().all(|v| v.is_finite()) {
        Ok(g)
    } else {
        Err(Error::Numerical("non-finite gradient in inner solve".into()))
    }
}

/// Minimizes a strongly convex `f` from `x0` until `||grad f|| <= solver.tol`.
pub fn minimize_smooth(
    f: &dyn SmoothFunction,
    smoothness: &Smoothness,
    x0: DVector<f64>,
    solver: &InnerSolver,
) -> Result<InnerSolve> {
    if !(solver.tol > 0.0) {
        return Err(Error::InvalidArgument("inner tolerance must be positive".into()));
    }
    let mut x = x0;
    let mut g = finite_gradient(f, &x)?;
    let mut norm = g.norm();
    let mut best = (x.clone(), norm);
    for it in 0..solver.max_iters {
        if norm <= solver.tol {
            return Ok(InnerSolve {
                x,
                grad_norm: norm,
                iterations: it,
            });
        }
        x = match solver.method {
            InnerMethod::GradientDescent => &x - &g / smoothness.l,
            InnerMethod::Newton => newton_step(f, smoothness, &x, &g, norm)?,
        };
        g = finite_gradient(f, &x)?;
        norm = g.norm();
        if norm < best.1 {
            best = (x.clone(), norm);
        }
    }
    if norm <= solver.tol {
        return Ok(InnerSolve {
            x,
            grad_norm: norm,
            iterations: solver.max_iters,
        });
    }
    Err(Error::BudgetExceeded {
        solver: "inner minimization",
        iterations: solver.max_iters,
        best: best.0.iter().copied().collect(),
        measure: best.1,
    })
}

fn newton_step(
    f: &dyn SmoothFunction,
    smoothness: &Smoothness,
    x: &DVector<f64>,
    g: &DVector<f64>,
    norm: f64,
) -> Result<DVector<f64>> {
    let h = linalg::symmetrize(&f.hessian(x));
    let direction = -linalg::spd_factor(&h, 0.5 * smoothness.mu)?.solve(g);
    let fx = f.value(x);
    let slope = g.dot(&direction);
    let mut t = 1.0;
    for _ in 0..60 {
        let trial = x + &direction * t;
        // Near the optimum the value test drowns in rounding, so a halved
        // gradient norm also counts as progress.
        if f.value(&trial) <= fx + 1e-4 * t * slope || f.gradient(&trial).norm() <= 0.5 * norm {
            return Ok(trial);
        }
        t *= 0.5;
    }
    Ok(x - g / smoothness.l)
}

/// `x*(beta)` to gradient tolerance `solver.tol`, starting from `warm` or the
/// weighted average of the individual minimizers.
pub fn solve_x_star(
    objectives: &ObjectiveSet,
    beta: &SimplexPoint,
    solver: &InnerSolver,
    warm: Option<&DVector<f64>>,
) -> Result<ManifoldPoint> {
    solve_x_star_counted(objectives, beta, solver, warm).map(|(p, _)| p)
}

/// As [`solve_x_star`], also returning the number of inner iterations.
pub fn solve_x_star_counted(
    objectives: &ObjectiveSet,
    beta: &SimplexPoint,
    solver: &InnerSolver,
    warm: Option<&DVector<f64>>,
) -> Result<(ManifoldPoint, usize)> {
    let f = objectives.scalarize(beta)?;
    if objectives.len() == 1 {
        let x = objectives.minimizers()[0].clone();
        let residual = f.gradient(&x).norm();
        if residual <= solver.tol {
            return Ok((
                ManifoldPoint {
                    x,
                    beta: beta.clone(),
                    residual,
                },
                0,
            ));
        }
    }
    let start = match warm {
        Some(x) => {
            objectives.check_point(x)?;
            x.clone()
        }
        None => objectives.weighted_minimizer(beta),
    };
    let solve = minimize_smooth(&f, &objectives.smoothness(), start, solver)?;
    Ok((
        ManifoldPoint {
            x: solve.x,
            beta: beta.clone(),
            residual: solve.grad_norm,
        },
        solve.iterations,
    ))
}

fn implicit_jacobian(
    objectives: &ObjectiveSet,
    x: &DVector<f64>,
    beta: &SimplexPoint,
    kind: JacobianKind,
) -> Result<Jacobian> {
    objectives.check_point(x)?;
    let h = linalg::symmetrize(&objectives.scalarize(beta)?.hessian(x));
    let chol = linalg::spd_factor(&h, 0.5 * objectives.smoothness().mu)?;
    let matrix = -chol.solve(&objectives.gradient_matrix(x));
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite Jacobian".into()));
    }
    Ok(Jacobian { matrix, kind })
}

/// `-[hess f_beta(x)]^{-1} grad F(x)^T` at a point treated as on the manifold.
pub fn grad_x_star_exact(objectives: &ObjectiveSet, point: &ManifoldPoint) -> Result<Jacobian> {
    implicit_jacobian(objectives, &point.x, &point.beta, JacobianKind::Exact)
}

/// The same formula evaluated at an arbitrary `x`.
pub fn grad_x_star_estimate(objectives: &ObjectiveSet, x: &DVector<f64>, beta: &SimplexPoint) -> Result<Jacobian> {
    implicit_jacobian(objectives, x, beta, JacobianKind::Estimated)
}

/// Bound on the l1 -> l2 distance between the estimated and the true gradient
/// of `f0 o x*`, from the residual `||grad f_beta(x)||`. Zero for a single
/// objective, where the solution map is constant.
pub fn err_grad_f0(problem: &ProblemInstance, x: &DVector<f64>, beta: &SimplexPoint) -> Result<f64> {
    let objectives = problem.objectives();
    if objectives.len() == 1 {
        return Ok(0.0);
    }
    let residual = objectives.scalarize(beta)?.gradient(x).norm();
    Ok(err_from_residual(problem, x, residual))
}

pub(crate) fn err_from_residual(problem: &ProblemInstance, x: &DVector<f64>, residual: f64) -> f64 {
    if problem.num_objectives() == 1 {
        return 0.0;
    }
    let c = problem.constants();
    let mu = problem.objectives().smoothness().mu;
    let pref_grad = problem.preference().gradient(x).norm();
    (c.estimator_ratio * pref_grad + problem.l0() * c.m0) * residual / mu
}
