//! Property tests for the invariants the solver relies on. Instances come
//! from seeded generators, so proptest varies the seed and the sizes.

use nalgebra::{DMatrix, DVector};
use pareto_mm::baselines::{positive_definite_rotation, project_onto_halfspaces};
use pareto_mm::function::{Quadratic, SharedFunction, SmoothFunction, Smoothness, SoftplusQuadratic};
use pareto_mm::instances::{png_example, random_spd, seeded_rng, three_quadratics, Family};
use pareto_mm::linalg;
use pareto_mm::manifold::{
    err_grad_f0, grad_x_star_estimate, grad_x_star_exact, minimize_smooth, InnerSolver,
};
use pareto_mm::oracle::{grid_search_preference_opt, oracle_solve, random_simplex_point};
use pareto_mm::pmm::{compute_c1_c2, pmm_solve, verify_preference_stationarity, IterateTrace, SolverConfig, Status};
use pareto_mm::problem::{bundle_from, ProblemInstance};
use pareto_mm::problem_file::ProblemFile;
use pareto_mm::simplex::{l1_stationarity_gap, project_to_simplex, SimplexPoint};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

fn family() -> impl Strategy<Value = Family> {
    prop::sample::select(Family::ALL.to_vec())
}

fn instance(family: Family, seed: u64, n: usize, d: usize) -> (ProblemInstance, ChaCha8Rng) {
    let mut rng = seeded_rng(seed);
    let problem = family.generate(&mut rng, n, d).build().expect("generated instances build");
    (problem, rng)
}

fn random_function(rng: &mut ChaCha8Rng, d: usize, softplus: bool) -> SharedFunction {
    let q = Quadratic::from_hessian(random_spd(rng, d, 0.5, 3.0), normal_vec(rng, d)).unwrap();
    if softplus {
        let weight = rng.random_range(0.1..1.0);
        std::sync::Arc::new(SoftplusQuadratic::new(q, weight, normal_vec(rng, d)).unwrap())
    } else {
        q.shared()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_is_the_closest_simplex_point(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = seeded_rng(seed);
        let y = normal_vec(&mut rng, n) * 2.0;
        let p = project_to_simplex(&y).unwrap();
        let best = (p.weights() - &y).norm();
        for _ in 0..100 {
            let other = random_simplex_point(&mut rng, n);
            prop_assert!(best <= (other.weights() - &y).norm() + 1e-12);
        }
    }

    #[test]
    fn l1_gap_bounds_every_feasible_descent(seed in any::<u64>(), n in 2usize..7) {
        let mut rng = seeded_rng(seed);
        let v = normal_vec(&mut rng, n);
        let beta = if rng.random_bool(0.3) {
            SimplexPoint::vertex(n, rng.random_range(0..n))
        } else {
            random_simplex_point(&mut rng, n)
        };
        let gap = l1_stationarity_gap(&v, &beta);
        for _ in 0..50 {
            let other = random_simplex_point(&mut rng, n);
            let step = other.weights() - beta.weights();
            // The entries of a computed step sum to zero only up to an ulp.
            let rounding = 4.0 * f64::EPSILON * v.amax();
            prop_assert!(-v.dot(&step) <= (gap + 1e-12) * step.lp_norm(1) + rounding);
        }
    }

    #[test]
    fn scalarization_is_linear(family in family(), seed in any::<u64>(), n in 1usize..5, d in 1usize..5) {
        let (problem, mut rng) = instance(family, seed, n, d);
        let objectives = problem.objectives();
        let beta = random_simplex_point(&mut rng, n);
        let f = objectives.scalarize(&beta).unwrap();
        for _ in 0..10 {
            let x = normal_vec(&mut rng, d) * 2.0;
            let direct: f64 = objectives
                .objectives()
                .iter()
                .zip(beta.weights().iter())
                .map(|(fi, w)| w * fi.value(&x))
                .sum();
            prop_assert!((f.value(&x) - direct).abs() <= 1e-12 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn constants_grow_with_spread_and_conditioning(
        mu in 0.1f64..2.0,
        kappa in 1.0f64..20.0,
        l_hess in 0.0f64..1.0,
        spread in 0.0f64..5.0,
        grow in 1.0f64..3.0,
        n in 1usize..6,
    ) {
        let s = Smoothness { mu, l: kappa * mu, l_hess };
        let base = bundle_from(s, spread, n, 1.0);
        let wider = bundle_from(s, spread * grow, n, 1.0);
        let worse = bundle_from(Smoothness { l: kappa * grow * mu, ..s }, spread, n, 1.0);
        for other in [wider, worse] {
            prop_assert!(other.radius >= base.radius);
            prop_assert!(other.m0 >= base.m0);
            prop_assert!(other.m1 >= base.m1);
            prop_assert!(other.mu_g >= base.mu_g);
        }
    }

    #[test]
    fn derivatives_match_finite_differences(seed in any::<u64>(), d in 1usize..5, softplus in any::<bool>()) {
        let mut rng = seeded_rng(seed);
        let f = random_function(&mut rng, d, softplus);
        let h = 1e-6;
        for _ in 0..20 {
            let x = normal_vec(&mut rng, d) * 2.0;
            let g = f.gradient(&x);
            let hess = f.hessian(&x);
            for k in 0..d {
                let mut e = DVector::zeros(d);
                e[k] = h;
                let dv = (f.value(&(&x + &e)) - f.value(&(&x - &e))) / (2.0 * h);
                prop_assert!((dv - g[k]).abs() <= 1e-6 * g.amax().max(1.0), "gradient {k}: {dv} vs {}", g[k]);
                let dg = (f.gradient(&(&x + &e)) - f.gradient(&(&x - &e))) / (2.0 * h);
                prop_assert!((dg - hess.column(k)).amax() <= 1e-6 * hess.amax().max(1.0));
            }
            prop_assert!((&hess - hess.transpose()).amax() <= 1e-12 * hess.amax());
        }
    }

    #[test]
    fn objective_gradients_on_the_pareto_set_are_bounded(seed in any::<u64>(), n in 2usize..5, d in 1usize..5) {
        let (problem, mut rng) = instance(Family::Quadratic, seed, n, d);
        let objectives = problem.objectives();
        let bound = objectives.smoothness().l * problem.constants().radius;
        for _ in 0..10 {
            let beta = random_simplex_point(&mut rng, n);
            let x = oracle_solve(objectives, &beta, None).unwrap().x;
            let norm = linalg::norm_l1_l2(&objectives.gradient_matrix(&x));
            prop_assert!(norm <= bound + 1e-9, "{norm} > {bound}");
        }
    }

    #[test]
    fn solution_map_is_m0_lipschitz(family in family(), seed in any::<u64>(), n in 2usize..5, d in 1usize..5) {
        let (problem, mut rng) = instance(family, seed, n, d);
        let objectives = problem.objectives();
        for _ in 0..20 {
            let beta = random_simplex_point(&mut rng, n);
            let point = oracle_solve(objectives, &beta, None).unwrap();
            let norm = grad_x_star_exact(objectives, &point).unwrap().norm_l1_l2();
            prop_assert!(norm <= problem.constants().m0 + 1e-6);
        }
    }

    #[test]
    fn estimator_and_gradient_errors_are_bounded(family in family(), seed in any::<u64>(), n in 2usize..5, d in 1usize..5) {
        let (problem, mut rng) = instance(family, seed, n, d);
        let objectives = problem.objectives();
        let s = objectives.smoothness();
        let radius = problem.constants().radius;
        for _ in 0..20 {
            let beta = random_simplex_point(&mut rng, n);
            let on = oracle_solve(objectives, &beta, None).unwrap();
            let x = &on.x + normal_vec(&mut rng, d).normalize() * rng.random_range(0.0..=radius.max(1e-3));
            let residual = objectives.scalarize(&beta).unwrap().gradient(&x).norm();
            let exact = grad_x_star_exact(objectives, &on).unwrap().matrix;
            let estimate = grad_x_star_estimate(objectives, &x, &beta).unwrap().matrix;
            let gap = linalg::norm_l1_l2(&(&estimate - &exact));
            prop_assert!(gap <= problem.constants().estimator_ratio * residual / s.mu + 1e-9);

            let f0 = problem.preference();
            let sandwich = (exact.tr_mul(&f0.gradient(&on.x)) - estimate.tr_mul(&f0.gradient(&x))).amax();
            prop_assert!(sandwich <= err_grad_f0(&problem, &x, &beta).unwrap() + 1e-9);
        }
    }

    #[test]
    fn warm_gradient_descent_contracts(seed in any::<u64>(), n in 2usize..5, d in 1usize..5) {
        let (problem, mut rng) = instance(Family::Quadratic, seed, n, d);
        let objectives = problem.objectives();
        let beta = random_simplex_point(&mut rng, n);
        let f = objectives.scalarize(&beta).unwrap();
        let start = objectives.weighted_minimizer(&beta) + normal_vec(&mut rng, d) * 0.1;
        let initial = f.gradient(&start).norm();
        let tol = 1e-10;
        prop_assume!(initial > tol);
        let solve = minimize_smooth(&f, &objectives.smoothness(), start, &InnerSolver::gradient_descent(tol)).unwrap();
        let kappa = objectives.condition_number();
        let allowed = 2.0 * (kappa * (initial / tol).ln()).ceil();
        prop_assert!(solve.iterations as f64 <= allowed, "{} > {allowed}", solve.iterations);
    }

    #[test]
    fn png_projection_is_feasible_and_optimal(seed in any::<u64>(), n in 1usize..4, c in 0.1f64..2.0) {
        let mut rng = seeded_rng(seed);
        let d = 3;
        let g = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        // The dual reference converges at rate 1 - 1/cond(G^T G).
        let sv = g.singular_values();
        prop_assume!(sv.min() >= 0.05 * sv.max());
        let g0 = normal_vec(&mut rng, d);
        let png = project_onto_halfspaces(&g, &g0, c).unwrap();
        for gi in g.column_iter() {
            prop_assert!(gi.dot(&png.v) >= c - 1e-9);
        }
        // Independent check: projected gradient on the dual
        // min_{l >= 0} 1/2 |G l|^2 + l^T (G^T g0 - c), with v = g0 + G l.
        let gram = g.tr_mul(&g);
        let linear = g.tr_mul(&g0) - DVector::from_element(n, c);
        let step = 1.0 / linalg::spectral_norm(&gram);
        let mut lambda = DVector::<f64>::zeros(n);
        for _ in 0..200_000 {
            let next = (&lambda - (&gram * &lambda + &linear) * step).map(|l| l.max(0.0));
            let moved = (&next - &lambda).amax();
            lambda = next;
            if moved < 1e-15 {
                break;
            }
        }
        let dual_v = &g0 + &g * &lambda;
        prop_assert!((&dual_v - &png.v).amax() <= 1e-8 * dual_v.amax().max(1.0), "{dual_v} vs {}", png.v);
    }

    #[test]
    fn rotation_is_positive_and_maps_the_span_off_v0(seed in any::<u64>(), d in 2usize..6) {
        let mut rng = seeded_rng(seed);
        let n = rng.random_range(1..d);
        let vectors: Vec<DVector<f64>> = (0..n).map(|_| normal_vec(&mut rng, d)).collect();
        let v0 = normal_vec(&mut rng, d);
        let h = positive_definite_rotation(&v0, &vectors);
        for _ in 0..20 {
            let x = normal_vec(&mut rng, d);
            prop_assert!(x.dot(&(&h * &x)) > 0.0);
        }
        let basis = linalg::column_span_basis(&DMatrix::from_columns(&vectors), 1e-10);
        let unit = v0.normalize();
        for u in basis.column_iter() {
            prop_assert!(unit.dot(&(&h * u)).abs() <= 1e-10);
        }
    }

    #[test]
    fn generated_files_round_trip(family in family(), seed in any::<u64>(), n in 1usize..5, d in 1usize..5) {
        let file = family.generate(&mut seeded_rng(seed), n, d);
        let back = ProblemFile::from_json(&file.to_json()).unwrap();
        prop_assert_eq!(&back, &file);
        let (a, b) = (file.build().unwrap(), back.build().unwrap());
        let x = normal_vec(&mut seeded_rng(seed ^ 1), d);
        for (fa, fb) in a.objectives().objectives().iter().zip(b.objectives().objectives()) {
            prop_assert!((fa.value(&x) - fb.value(&x)).abs() <= 1e-15 * fa.value(&x).abs().max(1.0));
        }
    }
}

/// Checks every outer step of a run against the oracle: each step either
/// descends by the guaranteed amount or the iterate is already certified.
fn assert_descent_or_certify(problem: &ProblemInstance, trace: &IterateTrace, config: &SolverConfig) {
    let objectives = problem.objectives();
    let mu_g = problem.constants().mu_g;
    let mut warm: Option<DVector<f64>> = None;
    let mut values = Vec::with_capacity(trace.len());
    for r in &trace.records {
        let beta = SimplexPoint::new(r.beta.clone()).unwrap();
        let x = oracle_solve(objectives, &beta, warm.as_ref()).unwrap().x;
        values.push(problem.preference().value(&x));
        warm = Some(x);
    }
    for (k, pair) in trace.records.windows(2).enumerate() {
        let (c1, _) = compute_c1_c2(problem, &DVector::from_vec(pair[0].x.clone()));
        let required = -0.5 * c1 * c1 * config.eps0 * config.eps0 / mu_g;
        let change = values[k + 1] - values[k];
        let point = pareto_mm::manifold::ManifoldPoint::evaluate(
            objectives,
            DVector::from_vec(pair[0].x.clone()),
            SimplexPoint::new(pair[0].beta.clone()).unwrap(),
        )
        .unwrap();
        let cert = verify_preference_stationarity(problem, &point, config.eps0, config.eps, config.alpha).unwrap();
        assert!(
            change <= required + 1e-12 || cert.certified(),
            "step {}: change {change:e}, required {required:e}",
            pair[1].k
        );
    }
}

#[test]
fn every_step_descends_or_certifies() {
    let png = png_example().build().unwrap();
    let beta0 = SimplexPoint::new(vec![0.1, 0.9]).unwrap();
    let x0 = png.objectives().weighted_minimizer(&beta0);
    let config = SolverConfig::new(1e-2, 1e-4).unwrap();
    let out = pmm_solve(&png, &config, Some((x0, beta0))).unwrap();
    assert_eq!(out.status, Status::Certified);
    assert_descent_or_certify(&png, &out.trace, &config);

    let three = three_quadratics().build().unwrap();
    let out = pmm_solve(&three, &config, None).unwrap();
    assert_eq!(out.status, Status::Certified);
    assert_descent_or_certify(&three, &out.trace, &config);
}

#[test]
fn grid_optimum_is_no_worse_than_the_solver() {
    let m = 200;
    for (problem, eps0) in [(png_example().build().unwrap(), 1e-3), (three_quadratics().build().unwrap(), 1e-2)] {
        let grid = grid_search_preference_opt(&problem, m).unwrap();
        assert!((grid.f_max - grid.f_min).is_finite());
        let out = pmm_solve(&problem, &SolverConfig::new(eps0, eps0 * eps0).unwrap(), None).unwrap();
        let solved = problem.preference().value(&out.point.x);
        assert!(grid.best.f0 <= solved + 2.0 * eps0 * (2.0 / m as f64), "{} vs {solved}", grid.best.f0);
    }
}
