//! Brute-force references: finite differences, exhaustive simplex lattices
//! and closed forms for shared-Hessian quadratics.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::manifold::{solve_x_star, InnerSolver, ManifoldPoint};
use crate::problem::{ObjectiveSet, ProblemInstance};
use crate::simplex::{min_norm_point, SimplexPoint};

/// Accuracy of oracle inner solves.
pub const ORACLE_TOL: f64 = 1e-12;

/// Largest lattice [`grid_search_preference_opt`] will enumerate.
pub const GRID_LIMIT: u64 = 10_000_000;

/// Largest number of objectives supported by the lattice oracle.
pub const GRID_MAX_OBJECTIVES: usize = 4;

/// `x*(beta)` by damped Newton to [`ORACLE_TOL`]. When rounding stalls Newton
/// just short of the tolerance, the best iterate is accepted if its residual
/// is below `100 * ORACLE_TOL`.
pub fn oracle_solve(
    objectives: &ObjectiveSet,
    beta: &SimplexPoint,
    warm: Option<&DVector<f64>>,
) -> Result<ManifoldPoint> {
    match solve_x_star(objectives, beta, &InnerSolver::newton(ORACLE_TOL), warm) {
        Err(Error::BudgetExceeded { best, measure, .. }) if measure <= 100.0 * ORACLE_TOL => {
            ManifoldPoint::evaluate(objectives, DVector::from_vec(best), beta.clone())
        }
        other => other,
    }
}

/// The `n x (n-1)` matrix of tangent directions `(e_i - e_n) / 2`, each of
/// unit l1 length.
pub fn tangent_directions(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n.saturating_sub(1), |r, c| {
        if r == c {
            0.5
        } else if r + 1 == n {
            -0.5
        } else {
            0.0
        }
    })
}

/// Central differences of `f` at `beta` along [`tangent_directions`], one
/// column per direction.
pub fn finite_difference_jacobian<F>(f: F, beta: &SimplexPoint, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&SimplexPoint) -> Result<DVector<f64>>,
{
    if !(h > 0.0) {
        return Err(invalid("finite-difference step must be positive"));
    }
    let n = beta.len();
    if beta.weights().iter().any(|b| *b < 2.0 * h) {
        return Err(invalid(format!(
            "weights must all be at least 2h = {} for central differences",
            2.0 * h
        )));
    }
    let dirs = tangent_directions(n);
    let mut cols = Vec::with_capacity(n.saturating_sub(1));
    for dir in dirs.column_iter() {
        let shifted = |sign: f64| SimplexPoint::new((beta.weights() + dir * (sign * h)).iter().copied().collect());
        let plus = f(&shifted(1.0)?)?;
        let minus = f(&shifted(-1.0)?)?;
        cols.push((plus - minus) / (2.0 * h));
    }
    if cols.is_empty() {
        let d = f(beta)?.len();
        return Ok(DMatrix::zeros(d, 0));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Number of points `C(m + n - 1, n - 1)` of the lattice with denominator `m`,
/// saturating at `u64::MAX`.
pub fn lattice_size(n: usize, m: usize) -> u64 {
    let k = n.saturating_sub(1) as u128;
    let total = (m as u128) + k;
    let mut out: u128 = 1;
    for i in 0..k {
        out = out * (total - i) / (i + 1);
        if out > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    out as u64
}

/// Calls `visit` on every composition of `m` into `n` parts in lexicographic
/// order, with the first part fixed to `first`.
fn for_each_composition(n: usize, m: usize, first: usize, mut visit: impl FnMut(&[usize])) {
    let mut parts = vec![0; n];
    parts[0] = first;
    fn rec(parts: &mut [usize], idx: usize, left: usize, visit: &mut dyn FnMut(&[usize])) {
        if idx + 1 == parts.len() {
            parts[idx] = left;
            visit(parts);
            return;
        }
        for k in 0..=left {
            parts[idx] = k;
            rec(parts, idx + 1, left - k, visit);
        }
    }
    if n == 1 {
        visit(&parts);
    } else {
        rec(&mut parts, 1, m - first, &mut visit);
    }
}

fn lattice_point(parts: &[usize], m: usize) -> SimplexPoint {
    SimplexPoint::new(parts.iter().map(|&k| k as f64 / m as f64).collect()).expect("lattice points are convex weights")
}

/// One evaluated lattice point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub beta: SimplexPoint,
    pub x: DVector<f64>,
    pub f0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearch {
    pub best: GridPoint,
    pub f_min: f64,
    pub f_max: f64,
    pub points: u64,
}

fn check_grid(problem: &ProblemInstance, m: usize) -> Result<u64> {
    let n = problem.num_objectives();
    if m == 0 {
        return Err(invalid("lattice resolution must be at least 1"));
    }
    if n > GRID_MAX_OBJECTIVES {
        return Err(Error::SizeLimit(format!(
            "the lattice oracle supports at most {GRID_MAX_OBJECTIVES} objectives, got {n}"
        )));
    }
    let size = lattice_size(n, m);
    if size > GRID_LIMIT {
        return Err(Error::SizeLimit(format!(
            "lattice with resolution {m} has {size} points, above the limit {GRID_LIMIT}"
        )));
    }
    Ok(size)
}

/// Evaluates `f0(x*(beta))` over one slice of the lattice, warm-starting each
/// solve from the previous point.
fn evaluate_slice(problem: &ProblemInstance, m: usize, first: usize, mut visit: impl FnMut(GridPoint)) -> Result<()> {
    let objectives = problem.objectives();
    let n = objectives.len();
    let mut warm: Option<DVector<f64>> = None;
    let mut failure = None;
    for_each_composition(n, m, first, |parts| {
        if failure.is_some() {
            return;
        }
        let beta = lattice_point(parts, m);
        match oracle_solve(objectives, &beta, warm.as_ref()) {
            Ok(p) => {
                let f0 = problem.preference().value(&p.x);
                warm = Some(p.x.clone());
                visit(GridPoint { beta, x: p.x, f0 });
            }
            Err(e) => failure = Some(e),
        }
    });
    failure.map_or(Ok(()), Err)
}

/// Minimizes `f0(x*(beta))` over the simplex lattice with denominator `m`,
/// also reporting the largest value seen. Slices of the lattice run in
/// parallel; ties go to the lexicographically first weights.
pub fn grid_search_preference_opt(problem: &ProblemInstance, m: usize) -> Result<GridSearch> {
    let points = check_grid(problem, m)?;
    let firsts: Vec<usize> = if problem.num_objectives() == 1 { vec![m] } else { (0..=m).collect() };
    let slices = firsts
        .par_iter()
        .map(|&first| {
            let mut acc: Option<(GridPoint, f64)> = None;
            evaluate_slice(problem, m, first, |p| {
                acc = Some(match acc.take() {
                    None => {
                        let f = p.f0;
                        (p, f)
                    }
                    Some((best, max)) => {
                        let max = max.max(p.f0);
                        if p.f0 < best.f0 {
                            (p, max)
                        } else {
                            (best, max)
                        }
                    }
                });
            })?;
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Option<(GridPoint, f64, f64)> = None;
    for (best, max) in slices.into_iter().flatten() {
        out = Some(match out {
            None => (best.clone(), best.f0, max),
            Some((b, lo, hi)) => {
                let (b, lo) = if best.f0 < lo { (best.clone(), best.f0) } else { (b, lo) };
                (b, lo, hi.max(max))
            }
        });
    }
    let (best, f_min, f_max) = out.expect("lattice is nonempty");
    Ok(GridSearch {
        best,
        f_min,
        f_max,
        points,
    })
}

/// Every lattice point with its preference value, in lexicographic order.
pub fn grid_values(problem: &ProblemInstance, m: usize) -> Result<Vec<GridPoint>> {
    check_grid(problem, m)?;
    let firsts: Vec<usize> = if problem.num_objectives() == 1 { vec![m] } else { (0..=m).collect() };
    let slices = firsts
        .par_iter()
        .map(|&first| {
            let mut pts = Vec::new();
            evaluate_slice(problem, m, first, |p| pts.push(p))?;
            Ok(pts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(slices.into_iter().flatten().collect())
}

/// Writes `beta_0..beta_{n-1},f0` rows for every lattice point.
pub fn write_grid_csv<W: Write>(problem: &ProblemInstance, m: usize, out: W) -> Result<usize> {
    let io = |e: csv::Error| Error::Numerical(format!("writing oracle CSV: {e}"));
    let points = grid_values(problem, m)?;
    let n = problem.num_objectives();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (0..n).map(|i| format!("beta_{i}")).collect();
    header.push("f0".into());
    w.write_record(&header).map_err(io)?;
    for p in &points {
        let row: Vec<String> = p.beta.weights().iter().chain(std::iter::once(&p.f0)).map(f64::to_string).collect();
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Numerical(format!("writing oracle CSV: {e}")))?;
    Ok(points.len())
}

/// Uniformly distributed weights on the simplex.
pub fn random_simplex_point<R: Rng + ?Sized>(rng: &mut R, n: usize) -> SimplexPoint {
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1) + 1e-300).collect();
    let sum: f64 = draws.iter().sum();
    SimplexPoint::new(draws.into_iter().map(|v| v / sum).collect()).expect("normalized draws")
}

/// Counts from [`hull_pareto_check`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HullReport {
    pub solution_checks: usize,
    pub solution_passes: usize,
    pub max_solution_error: f64,
    pub hull_checks: usize,
    pub hull_passes: usize,
    pub max_hull_residual: f64,
}

impl HullReport {
    pub fn all_passed(&self) -> bool {
        self.solution_passes == self.solution_checks && self.hull_passes == self.hull_checks
    }
}

/// For objectives sharing one Hessian, checks on random weights that
/// `x*(beta)` is the weighted average of the centers, and that random convex
/// combinations of the centers are Pareto stationary.
pub fn hull_pareto_check<R: Rng + ?Sized>(objectives: &ObjectiveSet, samples: usize, rng: &mut R) -> Result<HullReport> {
    let quads = objectives
        .objectives()
        .iter()
        .map(|f| f.as_quadratic())
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| invalid("hull check needs quadratic objectives"))?;
    let h0 = quads[0].hessian_matrix();
    let scale = h0.amax();
    if quads.iter().any(|q| (q.hessian_matrix() - h0).amax() > 1e-10 * scale) {
        return Err(invalid("hull check needs a Hessian shared by all objectives"));
    }
    let centers: Vec<&DVector<f64>> = quads.iter().map(|q| q.center()).collect();
    let combine = |beta: &SimplexPoint| {
        centers
            .iter()
            .zip(beta.weights().iter())
            .fold(DVector::zeros(objectives.dim()), |acc, (z, w)| acc + *z * *w)
    };
    let mut report = HullReport::default();
    for _ in 0..samples {
        let beta = random_simplex_point(rng, objectives.len());
        let x = oracle_solve(objectives, &beta, None)?.x;
        let err = (x - combine(&beta)).norm();
        report.solution_checks += 1;
        report.solution_passes += usize::from(err <= 1e-8);
        report.max_solution_error = report.max_solution_error.max(err);

        let y = combine(&random_simplex_point(rng, objectives.len()));
        let residual = min_norm_point(&objectives.gradient_matrix(&y), 1e-8, 100_000)?.norm;
        report.hull_checks += 1;
        report.hull_passes += usize::from(residual <= 1e-8);
        report.max_hull_residual = report.max_hull_residual.max(residual);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::function::Quadratic;
    use crate::linalg::dvec;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pair(h: DMatrix<f64>) -> ObjectiveSet {
        ObjectiveSet::new(
            vec![
                Quadratic::from_hessian(h.clone(), dvec(&[-1.0, 0.0])).unwrap().shared(),
                Quadratic::from_hessian(h, dvec(&[1.0, 0.0])).unwrap().shared(),
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn constant_map_has_zero_jacobian() {
        let j = finite_difference_jacobian(|_| Ok(dvec(&[3.0, 4.0])), &SimplexPoint::uniform(3), 1e-5).unwrap();
        assert_eq!(j, DMatrix::zeros(2, 2));
    }

    #[test]
    fn linear_map_difference_is_exact() {
        let (z1, z2) = (dvec(&[-1.0, 0.0]), dvec(&[1.0, 0.0]));
        let f = |b: &SimplexPoint| Ok(&z1 * b.weights()[0] + &z2 * b.weights()[1]);
        let j = finite_difference_jacobian(f, &SimplexPoint::uniform(2), 1e-5).unwrap();
        assert_relative_eq!(j.column(0).into_owned(), dvec(&[-1.0, 0.0]), epsilon = 1e-10);
    }

    #[test]
    fn boundary_weights_are_rejected() {
        let beta = SimplexPoint::new(vec![1e-6, 1.0 - 1e-6]).unwrap();
        assert!(finite_difference_jacobian(|_| Ok(dvec(&[0.0])), &beta, 1e-5).is_err());
    }

    #[test]
    fn lattice_counts() {
        assert_eq!(lattice_size(1, 7), 1);
        assert_eq!(lattice_size(2, 1000), 1001);
        assert_eq!(lattice_size(3, 30), 496);
        assert_eq!(lattice_size(4, 10), 286);
        let mut count = 0;
        for first in 0..=10 {
            for_each_composition(4, 10, first, |p| {
                assert_eq!(p.iter().sum::<usize>(), 10);
                count += 1;
            });
        }
        assert_eq!(count, 286);
    }

    #[test]
    fn grid_finds_origin_on_png_instance() {
        let problem = ProblemInstance::new(
            pair(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0])),
            Quadratic::isotropic(dvec(&[0.0, 1.0])).shared(),
            None,
        )
        .unwrap();
        let g = grid_search_preference_opt(&problem, 1000).unwrap();
        assert_relative_eq!(g.best.beta.weights()[0], 0.5, epsilon = 1e-12);
        assert!(g.best.x.norm() <= 1e-10);
        assert_relative_eq!(g.f_min, 0.5, epsilon = 1e-12);
        assert_relative_eq!(g.f_max, 1.0, epsilon = 1e-10);
        assert_eq!(g.points, 1001);
    }

    #[test]
    fn grid_on_identity_pair() {
        let problem = ProblemInstance::new(
            pair(DMatrix::identity(2, 2)),
            Quadratic::isotropic(dvec(&[0.0, 1.0])).shared(),
            None,
        )
        .unwrap();
        let g = grid_search_preference_opt(&problem, 10).unwrap();
        // f0(x_beta) = 1/2 (1 - 2 beta_1)^2 + 1/2, minimized at beta_1 = 1/2.
        assert_eq!(g.best.beta.weights()[0], 0.5);
        assert_relative_eq!(g.f_min, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn grid_with_one_objective() {
        let set = ObjectiveSet::new(vec![Quadratic::isotropic(dvec(&[1.0, 1.0])).shared()], None).unwrap();
        let problem = ProblemInstance::new(set, Quadratic::isotropic(dvec(&[0.0, 0.0])).shared(), None).unwrap();
        let g = grid_search_preference_opt(&problem, 5).unwrap();
        assert_eq!(g.points, 1);
        assert_eq!(g.f_min, g.f_max);
        assert_relative_eq!(g.f_min, 1.0);
    }

    #[test]
    fn grid_limits() {
        let set = ObjectiveSet::new(
            (0..5).map(|i| Quadratic::isotropic(dvec(&[i as f64, 0.0])).shared()).collect(),
            None,
        )
        .unwrap();
        let problem = ProblemInstance::new(set, Quadratic::isotropic(dvec(&[0.0, 0.0])).shared(), None).unwrap();
        assert!(matches!(grid_search_preference_opt(&problem, 2), Err(Error::SizeLimit(_))));
        assert_eq!(lattice_size(4, 400), 10_827_401);
    }

    #[test]
    fn hull_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]);
        let report = hull_pareto_check(&pair(h), 50, &mut rng).unwrap();
        assert!(report.all_passed(), "{report:?}");

        let triangle = ObjectiveSet::new(
            [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
                .iter()
                .map(|z| Quadratic::isotropic(dvec(z)).shared())
                .collect(),
            None,
        )
        .unwrap();
        let report = hull_pareto_check(&triangle, 100, &mut rng).unwrap();
        assert_eq!(report.solution_passes, 100);
        assert_eq!(report.hull_passes, 100);

        let single = ObjectiveSet::new(vec![Quadratic::isotropic(dvec(&[2.0])).shared()], None).unwrap();
        assert!(hull_pareto_check(&single, 10, &mut rng).unwrap().all_passed());
    }

    #[test]
    fn hull_check_rejects_different_hessians() {
        let set = ObjectiveSet::new(
            vec![
                Quadratic::isotropic(dvec(&[0.0, 0.0])).shared(),
                Quadratic::from_hessian(DMatrix::identity(2, 2) * 2.0, dvec(&[1.0, 0.0]))
                    .unwrap()
                    .shared(),
            ],
            None,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(hull_pareto_check(&set, 1, &mut rng), Err(Error::InvalidArgument(_))));
    }
}
