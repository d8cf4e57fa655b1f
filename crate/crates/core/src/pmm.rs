//! Majorization-minimization over the Pareto set.
//!
//! Each outer step builds a quadratic upper model of `beta -> f0(x*(beta))`
//! around the current weights, minimizes it over the simplex, and re-solves
//! the scalarized problem at the new weights. The loop stops as soon as the
//! current pair passes a computable approximate-stationarity test.

use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::function::Smoothness;
use crate::linalg;
use crate::manifold::{err_from_residual, grad_x_star_estimate, solve_x_star, InnerSolver, ManifoldPoint};
use crate::problem::{ConstantBundle, ProblemInstance};
use crate::simplex::{l1_stationarity_gap, minimize_quadratic_over_simplex, SimplexPoint, SimplexQuadratic};

/// Quadratic upper model around `anchor`, kept relative to its value there.
#[derive(Debug, Clone)]
pub struct SurrogateState {
    pub anchor: ManifoldPoint,
    /// `[grad f0(x)^T J]^T` with `J` the estimated Jacobian at the anchor.
    pub linear: DVector<f64>,
    pub curvature: f64,
    /// Bound on the error of `linear` as a gradient of `f0 o x*`.
    pub err_term: f64,
}

impl SurrogateState {
    /// Model value at `beta` minus model value at the anchor, excluding the
    /// constant error term.
    pub fn relative_value(&self, beta: &SimplexPoint) -> f64 {
        let step = beta.weights() - self.anchor.beta.weights();
        self.linear.dot(&step) + 0.5 * self.curvature * step.norm_squared()
    }

    /// Relative value plus the error term: an upper bound on
    /// `f0(x*(beta)) - f0(x*(anchor))`.
    pub fn majorant(&self, beta: &SimplexPoint) -> f64 {
        self.relative_value(beta) + self.err_term
    }

    pub fn quadratic(&self) -> Result<SimplexQuadratic> {
        SimplexQuadratic::new(self.anchor.beta.clone(), self.linear.clone(), self.curvature)
    }
}

/// Linear term of the surrogate at `(x, beta)`.
pub fn surrogate_linear(problem: &ProblemInstance, x: &DVector<f64>, beta: &SimplexPoint) -> Result<DVector<f64>> {
    let jac = grad_x_star_estimate(problem.objectives(), x, beta)?;
    Ok(jac.matrix.tr_mul(&problem.preference().gradient(x)))
}

pub fn build_surrogate(problem: &ProblemInstance, point: &ManifoldPoint) -> Result<SurrogateState> {
    let linear = surrogate_linear(problem, &point.x, &point.beta)?;
    let err_term = err_from_residual(problem, &point.x, point.residual);
    if !err_term.is_finite() {
        return Err(Error::Numerical(format!(
            "surrogate error term is {err_term} at x = {:?}",
            point.x.as_slice()
        )));
    }
    Ok(SurrogateState {
        anchor: point.clone(),
        linear,
        curvature: problem.constants().mu_g,
        err_term,
    })
}

/// How the per-step accuracy factors are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StepConstants {
    /// Recomputed from the current iterate every outer step.
    Auto,
    Fixed { c1: f64, c2: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Target stationarity level of the weights.
    pub eps0: f64,
    /// Target residual of the inner problem; at most `eps0^2`.
    pub eps: f64,
    /// Share of `eps0` given to the estimated gap; the rest bounds the error.
    pub alpha: f64,
    pub max_outer: usize,
    pub inner_max_iters: usize,
    pub simplex_max_iters: usize,
    pub step_constants: StepConstants,
}

impl SolverConfig {
    pub fn new(eps0: f64, eps: f64) -> Result<Self> {
        let cfg = Self {
            eps0,
            eps,
            alpha: 0.5,
            max_outer: 100_000,
            inner_max_iters: 200_000,
            simplex_max_iters: 10_000,
            step_constants: StepConstants::Auto,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let config = |msg: String| Err(Error::Config(msg));
        if !(self.eps0 > 0.0 && self.eps0 <= 1.0) {
            return config(format!("eps0 must lie in (0, 1], got {}", self.eps0));
        }
        if !(self.eps > 0.0) {
            return config(format!("eps must be positive, got {}", self.eps));
        }
        // Rounding in eps0^2 must not reject eps = eps0^2 written in decimal.
        if self.eps > self.eps0 * self.eps0 * (1.0 + 1e-12) {
            return config(format!(
                "eps = {} exceeds eps0^2 = {}; the solver requires eps <= eps0^2 <= 1",
                self.eps,
                self.eps0 * self.eps0
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return config(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.max_outer == 0 || self.inner_max_iters == 0 || self.simplex_max_iters == 0 {
            return config("iteration budgets must be positive".into());
        }
        if let StepConstants::Fixed { c1, c2 } = self.step_constants {
            if !(c1 > 0.0 && c1 <= 1.0 && c2 > 0.0 && c2 <= 1.0) {
                return config(format!("fixed step constants must lie in (0, 1], got c1={c1}, c2={c2}"));
            }
        }
        Ok(())
    }
}

/// The three numbers behind a stationarity decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    pub residual: f64,
    pub gap: f64,
    pub err: f64,
    pub residual_ok: bool,
    pub gap_ok: bool,
    pub err_ok: bool,
}

impl Certificate {
    pub fn certified(&self) -> bool {
        self.residual_ok && self.gap_ok && self.err_ok
    }
}

/// Checks, from computable quantities only, that `point` is an approximately
/// stationary pair: the residual is at most `eps`, the estimated gradient has
/// l1 gap at most `alpha * eps0`, and its error bound is at most
/// `(1 - alpha) * eps0`.
pub fn verify_preference_stationarity(
    problem: &ProblemInstance,
    point: &ManifoldPoint,
    eps0: f64,
    eps: f64,
    alpha: f64,
) -> Result<Certificate> {
    let linear = surrogate_linear(problem, &point.x, &point.beta)?;
    Ok(certificate_from(problem, point, &linear, eps0, eps, alpha))
}

fn certificate_from(
    problem: &ProblemInstance,
    point: &ManifoldPoint,
    linear: &DVector<f64>,
    eps0: f64,
    eps: f64,
    alpha: f64,
) -> Certificate {
    let gap = l1_stationarity_gap(linear, &point.beta);
    let err = err_from_residual(problem, &point.x, point.residual);
    Certificate {
        residual: point.residual,
        gap,
        err,
        residual_ok: point.residual <= eps,
        gap_ok: gap <= alpha * eps0,
        err_ok: err <= (1.0 - alpha) * eps0,
    }
}

/// Largest `(c1, c2)` meeting the step-size constraints, given the preference
/// gradient norm and the spectral norm of the objective gradient matrix at the
/// current iterate. A single objective has nothing to step over, so both are 1.
pub fn step_constants(
    s: Smoothness,
    bundle: &ConstantBundle,
    l0: f64,
    n: usize,
    pref_grad_norm: f64,
    gradients_norm: f64,
) -> (f64, f64) {
    if n < 2 || bundle.mu_g == 0.0 {
        return (1.0, 1.0);
    }
    let err_scale = bundle.estimator_ratio * pref_grad_norm + l0 * bundle.m0;
    let mu_g = bundle.mu_g;
    let c1_bound = (2.0 + 6.0 * s.l * pref_grad_norm / (s.mu * s.mu * mu_g))
        .max(12.0 / (s.mu * mu_g) * err_scale * gradients_norm);
    let c1 = 1.0 / c1_bound;
    let c2_bound = (2.0 / s.mu * err_scale * 2f64.max(mu_g / (c1 * c1))).max(1.0);
    (c1, 1.0 / c2_bound)
}

pub fn compute_c1_c2(problem: &ProblemInstance, x: &DVector<f64>) -> (f64, f64) {
    let objectives = problem.objectives();
    step_constants(
        objectives.smoothness(),
        problem.constants(),
        problem.l0(),
        objectives.len(),
        problem.preference().gradient(x).norm(),
        linalg::spectral_norm(&objectives.gradient_matrix(x)),
    )
}

/// One row of the iterate trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateRecord {
    pub k: usize,
    pub beta: Vec<f64>,
    pub x: Vec<f64>,
    pub residual: f64,
    pub f0: f64,
    pub gap: f64,
    pub err: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IterateTrace {
    pub records: Vec<IterateRecord>,
}

impl IterateTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterateRecord> {
        self.records.last()
    }

    /// Column names for `n` weights and `d` coordinates.
    pub fn header(n: usize, d: usize) -> Vec<String> {
        let mut cols = vec!["k".to_string()];
        cols.extend((0..n).map(|i| format!("beta_{i}")));
        cols.extend((0..d).map(|i| format!("x_{i}")));
        cols.extend(["residual", "f0", "gap", "err", "certified"].map(String::from));
        cols
    }

    pub fn write_csv<W: Write>(&self, n: usize, d: usize, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::Numerical(format!("writing trace: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(n, d)).map_err(io)?;
        for r in &self.records {
            let mut row = vec![r.k.to_string()];
            row.extend(r.beta.iter().chain(&r.x).map(f64::to_string));
            row.extend([r.residual, r.f0, r.gap, r.err].map(|v| v.to_string()));
            row.push(r.certified.to_string());
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Numerical(format!("writing trace: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Status {
    Certified,
    BudgetExceeded,
}

#[derive(Debug, Clone)]
pub struct PmmOutcome {
    pub point: ManifoldPoint,
    pub certificate: Certificate,
    pub trace: IterateTrace,
    pub status: Status,
    /// Smallest `c1` used over the run; enters the iteration bound.
    pub min_c1: f64,
}

impl PmmOutcome {
    /// Outer steps taken; the first trace record is the starting point.
    pub fn steps(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{error} (after {} recorded iterations)", trace.len())]
pub struct SolveFailure {
    #[source]
    pub error: Error,
    pub trace: IterateTrace,
}

/// Upper bound on outer steps before certification, given the spread
/// `f_max - f_min` of the preference over the Pareto set.
pub fn iteration_bound(mu_g: f64, f_spread: f64, c1: f64, eps0: f64) -> f64 {
    2.0 * mu_g * f_spread / (c1 * c1 * eps0 * eps0)
}

/// Runs the outer loop from `init = (x0, beta0)`, by default the uniform
/// weights and the matching average of minimizers. `x0` only warm-starts the
/// first inner solve.
pub fn pmm_solve(
    problem: &ProblemInstance,
    config: &SolverConfig,
    init: Option<(DVector<f64>, SimplexPoint)>,
) -> std::result::Result<PmmOutcome, SolveFailure> {
    let mut trace = IterateTrace::default();
    match run(problem, config, init, &mut trace) {
        Ok(out) => Ok(out),
        Err(error) => Err(SolveFailure { error, trace }),
    }
}

fn run(
    problem: &ProblemInstance,
    config: &SolverConfig,
    init: Option<(DVector<f64>, SimplexPoint)>,
    trace: &mut IterateTrace,
) -> Result<PmmOutcome> {
    config.validate()?;
    let objectives = problem.objectives();
    let (x0, beta0) = match init {
        Some((x, beta)) => {
            objectives.check_point(&x)?;
            objectives.check_weights(&beta)?;
            (x, beta)
        }
        None => {
            let beta = SimplexPoint::uniform(objectives.len());
            (objectives.weighted_minimizer(&beta), beta)
        }
    };
    let constants = |x: &DVector<f64>| match config.step_constants {
        StepConstants::Auto => compute_c1_c2(problem, x),
        StepConstants::Fixed { c1, c2 } => (c1, c2),
    };
    let inner = |tol: f64| InnerSolver {
        max_iters: config.inner_max_iters,
        ..InnerSolver::gradient_descent(tol)
    };
    let tube = problem.constants().radius + 2.0 * config.eps / objectives.smoothness().mu;

    let (_, c2) = constants(&x0);
    let mut point = solve_x_star(objectives, &beta0, &inner(c2 * config.eps), Some(&x0))?;
    let mut min_c1 = f64::INFINITY;
    for k in 1.. {
        let linear = surrogate_linear(problem, &point.x, &point.beta)?;
        let cert = certificate_from(problem, &point, &linear, config.eps0, config.eps, config.alpha);
        let f0 = problem.preference().value(&point.x);
        if !f0.is_finite() {
            return Err(Error::Numerical(format!("preference value is {f0} at step {k}")));
        }
        trace.records.push(IterateRecord {
            k,
            beta: point.beta.to_vec(),
            x: point.x.iter().copied().collect(),
            residual: point.residual,
            f0,
            gap: cert.gap,
            err: cert.err,
            certified: cert.certified(),
        });
        let farthest = objectives
            .minimizers()
            .iter()
            .map(|m| (&point.x - m).norm())
            .fold(0.0, f64::max);
        if farthest > tube * (1.0 + 1e-9) + 1e-12 {
            log::warn!("iterate {k} is {farthest} from a minimizer, beyond the tube radius {tube}");
        }
        log::debug!(
            "step {k}: f0={f0:.12e} gap={:.3e} err={:.3e} residual={:.3e}",
            cert.gap,
            cert.err,
            cert.residual
        );
        if cert.certified() || k > config.max_outer {
            return Ok(PmmOutcome {
                point,
                certificate: cert,
                trace: std::mem::take(trace),
                status: if cert.certified() {
                    Status::Certified
                } else {
                    Status::BudgetExceeded
                },
                min_c1: if min_c1.is_finite() { min_c1 } else { constants(&x0).0 },
            });
        }

        let (c1, c2) = constants(&point.x);
        min_c1 = min_c1.min(c1);
        let surrogate = SurrogateState {
            anchor: point.clone(),
            linear,
            curvature: problem.constants().mu_g,
            err_term: cert.err,
        };
        let (beta, _) = minimize_quadratic_over_simplex(
            &surrogate.quadratic()?,
            c1 * config.eps0,
            config.simplex_max_iters,
        )?;
        point = solve_x_star(objectives, &beta, &inner(c2 * config.eps), Some(&point.x))?;
    }
    unreachable!("the outer loop only exits by returning")
}
