//! Comparison points for preference optimization: the Pareto navigating
//! gradient (PNG) dynamics, instances on which every first-order condition
//! is satisfied, and non-degeneracy checks for gradient configurations.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::function::{make_quadratic, Quadratic, SmoothFunction};
use crate::linalg;
use crate::problem::{ObjectiveSet, ProblemInstance};
use crate::simplex::{min_norm_point, SimplexPoint};

/// Largest number of objectives for the subset enumeration in [`png_vector`].
pub const PNG_MAX_OBJECTIVES: usize = 20;

/// Angle below which the PNG vector counts as parallel to the preference
/// gradient.
pub const PNG_ANGLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PngConfig {
    /// Required decrease rate `grad f_i^T v >= c` of every objective.
    pub c: f64,
    /// Initial step length.
    pub step: f64,
    /// Radius of the tube `min_beta ||grad f_beta(x)|| <= eps_stop` around the
    /// Pareto set.
    pub eps_stop: f64,
    pub max_iters: usize,
}

impl PngConfig {
    pub fn new(c: f64, eps_stop: f64) -> Result<Self> {
        let cfg = Self {
            c,
            step: 0.05,
            eps_stop,
            max_iters: 200_000,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(positive(self.c) && positive(self.step) && positive(self.eps_stop)) || self.max_iters == 0 {
            return Err(Error::Config(format!(
                "PNG needs positive c, step, eps_stop and max_iters, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Minimizer of `1/2 ||g0 - v||^2` subject to `G^T v >= c`, with the
/// multipliers of the constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct PngVector {
    pub v: DVector<f64>,
    pub multipliers: DVector<f64>,
}

/// Solves the PNG projection at `x` by enumerating active sets.
pub fn png_vector(objectives: &ObjectiveSet, f0: &dyn SmoothFunction, x: &DVector<f64>, c: f64) -> Result<PngVector> {
    objectives.check_point(x)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(invalid(format!("PNG level c must be positive, got {c}")));
    }
    project_onto_halfspaces(&objectives.gradient_matrix(x), &f0.gradient(x), c)
}

/// `argmin 1/2 ||g0 - v||^2` over `{v : G^T v >= c}`; columns of `g` are the
/// constraint normals.
pub fn project_onto_halfspaces(g: &DMatrix<f64>, g0: &DVector<f64>, c: f64) -> Result<PngVector> {
    let n = g.ncols();
    if n > PNG_MAX_OBJECTIVES {
        return Err(Error::SizeLimit(format!(
            "active-set enumeration supports at most {PNG_MAX_OBJECTIVES} objectives, got {n}"
        )));
    }
    let scale = g.amax().max(1.0) * (g0.amax() + c).max(1.0);
    // Near the Pareto set the solution is large and G^T v loses digits to
    // cancellation, so feasibility is judged relative to |g_i| |v|.
    let feasible = |v: &DVector<f64>| {
        g.column_iter()
            .all(|gi| gi.dot(v) >= c - 1e-9 * (c + gi.norm() * v.norm()))
    };
    let mut best: Option<(f64, PngVector)> = None;
    for mask in 0u32..(1u32 << n) {
        let active: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut multipliers = DVector::zeros(n);
        let v = if active.is_empty() {
            g0.clone()
        } else {
            let ga = g.select_columns(&active);
            let gram = ga.tr_mul(&ga);
            let rhs = DVector::from_element(active.len(), c) - ga.tr_mul(g0);
            let Some(chol) = gram.cholesky() else {
                continue;
            };
            let lambda = chol.solve(&rhs);
            if lambda.iter().any(|l| *l < -1e-12 * scale) {
                continue;
            }
            for (k, &i) in active.iter().enumerate() {
                multipliers[i] = lambda[k].max(0.0);
            }
            g0 + &ga * lambda
        };
        if !feasible(&v) {
            continue;
        }
        let objective = 0.5 * (g0 - &v).norm_squared();
        if best.as_ref().is_none_or(|(b, _)| objective < *b) {
            best = Some((objective, PngVector { v, multipliers }));
        }
    }
    best.map(|(_, p)| p).ok_or_else(|| {
        Error::Infeasible(format!(
            "no direction decreases every objective at rate {c}; the objective gradients conflict"
        ))
    })
}

/// Angle between `a` and `b` in radians, accurate for nearly parallel inputs.
fn angle_between(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let (ua, ub) = (a.normalize(), b.normalize());
    2.0 * (&ua - &ub).norm().atan2((&ua + &ub).norm())
}

/// Diagnostics of the PNG stationarity test at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PngTest {
    /// Upper estimate of `min_beta ||grad f_beta(x)||`.
    pub pareto_residual: f64,
    pub in_tube: bool,
    /// Angle between the PNG vector and `-grad f0`.
    pub angle: f64,
    /// Signed ratio `lambda` in `v = lambda grad f0`, as `-||v|| / ||grad f0||`
    /// when the two are opposed.
    pub lambda: f64,
    pub stationary: bool,
}

fn png_test(
    objectives: &ObjectiveSet,
    f0: &dyn SmoothFunction,
    x: &DVector<f64>,
    png: &PngVector,
    eps_stop: f64,
) -> Result<PngTest> {
    let tube = min_norm_point(&objectives.gradient_matrix(x), eps_stop, 100_000)?;
    let in_tube = tube.norm <= eps_stop;
    let g0 = f0.gradient(x);
    let g0_norm = g0.norm();
    let v_norm = png.v.norm();
    let scale = objectives.smoothness().l.max(1.0);
    let (angle, lambda, aligned) = if g0_norm <= 1e-12 * scale || v_norm == 0.0 {
        (0.0, 0.0, true)
    } else {
        let angle = angle_between(&png.v, &(-&g0));
        let lambda = if angle <= PNG_ANGLE_TOL {
            -v_norm / g0_norm
        } else {
            png.v.dot(&g0) / (g0_norm * g0_norm)
        };
        (angle, lambda, angle <= PNG_ANGLE_TOL && lambda <= 0.0)
    };
    Ok(PngTest {
        pareto_residual: tube.norm,
        in_tube,
        angle,
        lambda,
        stationary: in_tube && aligned,
    })
}

/// Evaluates the `(c, eps)`-PNG stationarity test at `x`.
pub fn png_stationarity(
    objectives: &ObjectiveSet,
    f0: &dyn SmoothFunction,
    x: &DVector<f64>,
    c: f64,
    eps_stop: f64,
) -> Result<PngTest> {
    let png = png_vector(objectives, f0, x, c)?;
    png_test(objectives, f0, x, &png, eps_stop)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PngStatus {
    Stationary,
    BudgetExceeded,
}

#[derive(Debug, Clone)]
pub struct PngRun {
    /// Visited points, starting with `x0`.
    pub trajectory: Vec<DVector<f64>>,
    pub point: DVector<f64>,
    pub status: PngStatus,
    pub last_test: PngTest,
}

/// PNG dynamics: outside the tube, step along `-v_c` with backtracking until
/// every objective decreases sufficiently; inside it, step along `-grad f0`.
/// Stops at the first point passing the PNG stationarity test.
pub fn png_descent(
    objectives: &ObjectiveSet,
    f0: &dyn SmoothFunction,
    x0: DVector<f64>,
    config: &PngConfig,
) -> Result<PngRun> {
    config.validate()?;
    objectives.check_point(&x0)?;
    let mut x = x0;
    let mut trajectory = vec![x.clone()];
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut stalled = 0;
    for _ in 0..config.max_iters {
        let png = png_vector(objectives, f0, &x, config.c)?;
        let test = png_test(objectives, f0, &x, &png, config.eps_stop)?;
        if test.stationary {
            return Ok(PngRun {
                point: x,
                trajectory,
                status: PngStatus::Stationary,
                last_test: test,
            });
        }
        if test.in_tube && test.lambda <= 0.0 {
            if best.as_ref().is_none_or(|(a, _)| test.angle < 0.99 * a) {
                best = Some((test.angle, x.clone()));
                stalled = 0;
            } else {
                stalled += 1;
            }
        }
        // The discrete iteration orbits a stationary point at a distance set
        // by the step length; once it stops improving, solve for it directly.
        if stalled >= STALL_WINDOW {
            stalled = 0;
            let start = best.as_ref().map(|(_, b)| b.clone()).unwrap_or_else(|| x.clone());
            if let Some((point, last_test)) = refine_stationary(objectives, f0, start, config)? {
                trajectory.push(point.clone());
                return Ok(PngRun {
                    point,
                    trajectory,
                    status: PngStatus::Stationary,
                    last_test,
                });
            }
        }
        x = if test.in_tube {
            preference_step(objectives, f0, &x, config)?
        } else {
            pareto_step(objectives, &x, &png.v, config)
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("PNG iterate became non-finite".into()));
        }
        trajectory.push(x.clone());
    }
    let png = png_vector(objectives, f0, &x, config.c)?;
    let last_test = png_test(objectives, f0, &x, &png, config.eps_stop)?;
    let status = if last_test.stationary {
        PngStatus::Stationary
    } else {
        PngStatus::BudgetExceeded
    };
    Ok(PngRun {
        point: x,
        trajectory,
        status,
        last_test,
    })
}

/// In-tube steps without progress before [`refine_stationary`] is tried.
const STALL_WINDOW: usize = 100;

/// Stationarity equations `v/|v| + g0/|g0| = 0` and `residual = eps`, scaled
/// to order one. The residual target sits just inside the tube.
fn stationarity_equations(
    objectives: &ObjectiveSet,
    f0: &dyn SmoothFunction,
    x: &DVector<f64>,
    config: &PngConfig,
) -> Result<DVector<f64>> {
    let png = png_vector(objectives, f0, x, config.c)?;
    let g0 = f0.gradient(x);
    let residual = min_norm_point(&objectives.gradient_matrix(x), config.eps_stop, 100_000)?.norm;
    let d = x.len();
    let mut out = DVector::zeros(d + 1);
    out.rows_mut(0, d).copy_from(&(png.v.normalize() + g0.normalize()));
    out[d] = residual / config.eps_stop - (1.0 - 1e-6);
    Ok(out)
}

/// Damped Gauss-Newton on [`stationarity_equations`] with a central-difference
/// Jacobian. Returns the point once it passes the stationarity test.
fn refine_stationary(
    objectives: &ObjectiveSet,
    f0: &dyn SmoothFunction,
    mut x: DVector<f64>,
    config: &PngConfig,
) -> Result<Option<(DVector<f64>, PngTest)>> {
    let eval = |x: &DVector<f64>| stationarity_equations(objectives, f0, x, config).ok();
    let Some(mut r) = eval(&x) else {
        return Ok(None);
    };
    for _ in 0..100 {
        let h = 1e-4 * config.eps_stop * x.amax().max(1.0);
        let mut jac = DMatrix::zeros(r.len(), x.len());
        for j in 0..x.len() {
            let mut e = DVector::zeros(x.len());
            e[j] = h;
            let (Some(fp), Some(fm)) = (eval(&(&x + &e)), eval(&(&x - &e))) else {
                return Ok(None);
            };
            jac.set_column(j, &((fp - fm) / (2.0 * h)));
        }
        let Ok(step) = jac.svd(true, true).solve(&r, 1e-14) else {
            return Ok(None);
        };
        let norm = r.norm();
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-6 {
            let trial = &x - &step * t;
            if let Some(rt) = eval(&trial) {
                if rt.norm() < norm {
                    x = trial;
                    r = rt;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        let test = png_stationarity(objectives, f0, &x, config.c, config.eps_stop)?;
        if test.stationary {
            return Ok(Some((x, test)));
        }
        if !moved {
            return Ok(None);
        }
    }
    Ok(None)
}

/// Gradient step on `f0`, halved until the iterate stays within `2 eps` of
/// Pareto stationarity. Longer steps leave the region where both
/// constraints bind and the iteration orbits instead of converging.
fn preference_step(
    objectives: &ObjectiveSet,
    f0: &dyn SmoothFunction,
    x: &DVector<f64>,
    config: &PngConfig,
) -> Result<DVector<f64>> {
    let g0 = f0.gradient(x);
    let mut t = config.step;
    for _ in 0..60 {
        let trial = x - &g0 * t;
        if min_norm_point(&objectives.gradient_matrix(&trial), config.eps_stop, 100_000)?.norm <= 2.0 * config.eps_stop {
            return Ok(trial);
        }
        t *= 0.5;
    }
    Ok(x - g0 * t)
}

fn pareto_step(objectives: &ObjectiveSet, x: &DVector<f64>, v: &DVector<f64>, config: &PngConfig) -> DVector<f64> {
    let values: Vec<f64> = objectives.objectives().iter().map(|f| f.value(x)).collect();
    let mut t = config.step;
    for _ in 0..80 {
        let trial = x - v * t;
        // Each objective decreases at rate at least c along -v; demanding
        // three quarters of that keeps a step from reaching the Pareto set.
        let decreased = objectives
            .objectives()
            .iter()
            .zip(&values)
            .all(|(f, &before)| f.value(&trial) <= before - 0.75 * t * config.c);
        if decreased {
            return trial;
        }
        t *= 0.5;
    }
    x - v * t
}

/// A unique convex combination of `vectors` equal to zero, if the vectors are
/// Pareto generic.
pub fn pareto_witness(vectors: &[DVector<f64>]) -> Option<SimplexPoint> {
    let n = vectors.len();
    if n < 2 || vectors.iter().any(|v| v.len() != vectors[0].len()) {
        return None;
    }
    let m = DMatrix::from_columns(vectors);
    if linalg::rank(&m, 1e-10) != n - 1 {
        return None;
    }
    let eig = nalgebra::SymmetricEigen::new(m.tr_mul(&m));
    let smallest = eig.eigenvalues.imin();
    let null = eig.eigenvectors.column(smallest).into_owned();
    let sum = null.sum();
    if sum.abs() <= 1e-12 * null.lp_norm(1) {
        return None;
    }
    let beta = null / sum;
    if beta.iter().any(|b| *b < -1e-12) {
        return None;
    }
    let scale = vectors.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if (&m * &beta).norm() > 1e-10 * scale {
        return None;
    }
    SimplexPoint::new(beta.iter().map(|b| b.max(0.0)).collect()).ok()
}

/// Zero is a convex combination of the vectors and they have rank `n - 1`.
pub fn is_pareto_generic(vectors: &[DVector<f64>]) -> bool {
    pareto_witness(vectors).is_some()
}

/// Pareto generic, with `v0` outside the span of the other vectors.
pub fn is_preference_generic(v0: &DVector<f64>, vectors: &[DVector<f64>]) -> bool {
    let n = vectors.len();
    let d = v0.len();
    if n < 2 || n > d || !is_pareto_generic(vectors) || vectors[0].len() != d {
        return false;
    }
    span_residual(v0, vectors).norm() > 1e-10 * v0.norm()
}

/// Component of `v` orthogonal to the span of `vectors`.
fn span_residual(v: &DVector<f64>, vectors: &[DVector<f64>]) -> DVector<f64> {
    let basis = linalg::column_span_basis(&DMatrix::from_columns(vectors), 1e-10);
    v - &basis * basis.tr_mul(v)
}

/// Positive definite map sending `span(vectors)` into the orthogonal
/// complement of `v0` (in the form `x -> H x` with `H^{-1}` symmetric).
///
/// Returns the symmetric inverse `G = I - v0 v0^T/|v0|^2 + p p^T/|p|^2`, where
/// `p` is the part of `v0` orthogonal to the span. It satisfies `G v0 = p`, so
/// `v0^T G u = 0` for every `u` in the span.
pub fn orthogonalizing_metric(v0: &DVector<f64>, vectors: &[DVector<f64>]) -> DMatrix<f64> {
    let d = v0.len();
    let p = span_residual(v0, vectors);
    DMatrix::identity(d, d) - v0 * v0.transpose() / v0.norm_squared() + &p * p.transpose() / p.norm_squared()
}

/// The map `Pi_V + Pi_{V^perp} Pi_{U^perp}` with `U = span(vectors)` and
/// `V = v0^perp`. It sends `U` into `V` and `x^T H x > 0` for `x != 0`, but
/// it is not symmetric, and its symmetric part does not send `U` into `V`.
pub fn positive_definite_rotation(v0: &DVector<f64>, vectors: &[DVector<f64>]) -> DMatrix<f64> {
    let d = v0.len();
    let unit = v0.normalize();
    let along_v0 = &unit * unit.transpose();
    let basis = linalg::column_span_basis(&DMatrix::from_columns(vectors), 1e-10);
    let off_span = DMatrix::identity(d, d) - &basis * basis.transpose();
    (DMatrix::identity(d, d) - &along_v0) + along_v0 * off_span
}

/// Shared-Hessian quadratic instance where every objective and the preference
/// have prescribed gradients at the origin and the origin is preference
/// optimal.
#[derive(Debug, Clone)]
pub struct ImpossibilityInstance {
    pub problem: ProblemInstance,
    pub hessian: DMatrix<f64>,
    pub centers: Vec<DVector<f64>>,
    /// Weights with `sum_i beta_i v_i = 0`; also `x*(beta) = 0`.
    pub witness: SimplexPoint,
}

/// Builds objectives `f_i = 1/2 (x - z_i)^T H (x - z_i)` with `grad f_i(0) = v_i`
/// and the preference `1/2 ||x + v0||^2`, for preference-generic inputs.
pub fn build_impossibility_instance(v0: &DVector<f64>, vectors: &[DVector<f64>]) -> Result<ImpossibilityInstance> {
    if !is_preference_generic(v0, vectors) {
        return Err(invalid(
            "vectors must be preference generic: 1 < n <= d, zero a unique convex combination, v0 off their span",
        ));
    }
    let witness = pareto_witness(vectors).expect("checked generic");
    let metric = linalg::symmetrize(&orthogonalizing_metric(v0, vectors));
    let chol = linalg::spd_factor(&metric, 0.0)?;
    let template = Quadratic::from_hessian(linalg::symmetrize(&chol.inverse()), DVector::zeros(v0.len()))?;
    // Gradients are evaluated with the Hessian rebuilt from the factor, so the
    // centers solve against that matrix, refined from `z = -G v`.
    let hessian = template.hessian_matrix().clone();
    let refine = linalg::spd_factor(&hessian, 0.0)?;
    let centers: Vec<DVector<f64>> = vectors
        .iter()
        .map(|v| {
            let mut z = -(&metric * v);
            for _ in 0..2 {
                z -= refine.solve(&(&hessian * &z + v));
            }
            z
        })
        .collect();
    let objectives = centers
        .iter()
        .map(|z| make_quadratic(template.factor().clone(), z.clone()).map(Quadratic::shared))
        .collect::<Result<Vec<_>>>()?;
    let problem = ProblemInstance::new(
        ObjectiveSet::new(objectives, None)?,
        Quadratic::isotropic(-v0).shared(),
        None,
    )?;
    Ok(ImpossibilityInstance {
        problem,
        hessian,
        centers,
        witness,
    })
}
