//! Named and randomly generated problem files.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::to_rows;
use crate::problem_file::{FunctionSpec, ProblemFile, SoftplusParams};

/// Seed used by tests, acceptance runs and the CLI's random sampling.
pub const DEFAULT_SEED: u64 = 0xC0FFEE;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn identity(d: usize) -> Vec<Vec<f64>> {
    to_rows(&DMatrix::identity(d, d))
}

fn pair_file(h: Vec<Vec<f64>>) -> ProblemFile {
    ProblemFile {
        dimension: 2,
        objectives: vec![
            FunctionSpec::quadratic(h.clone(), vec![-1.0, 0.0]),
            FunctionSpec::quadratic(h, vec![1.0, 0.0]),
        ],
        preference: FunctionSpec::quadratic(identity(2), vec![0.0, 1.0]),
        constants: None,
    }
}

/// Two quadratics with Hessian `[[1, 1], [1, 2]]` centered at `-e1` and `e1`,
/// and `f0 = 1/2 ||x - e2||^2`. The preference optimum is the origin.
pub fn png_example() -> ProblemFile {
    pair_file(vec![vec![1.0, 1.0], vec![1.0, 2.0]])
}

/// [`png_example`] with identity Hessians.
pub fn identity_pair() -> ProblemFile {
    pair_file(identity(2))
}

/// Three quadratics in the plane with different Hessians, whose Pareto set
/// is a curved triangle.
pub fn three_quadratics() -> ProblemFile {
    ProblemFile {
        dimension: 2,
        objectives: vec![
            FunctionSpec::quadratic(vec![vec![1.0, 0.0], vec![0.0, 8.0]], vec![-1.0, 0.0]),
            FunctionSpec::quadratic(vec![vec![8.0, 0.0], vec![0.0, 1.0]], vec![1.0, 0.0]),
            FunctionSpec::quadratic(vec![vec![2.0, 1.5], vec![1.5, 2.0]], vec![0.0, 1.5]),
        ],
        preference: FunctionSpec::quadratic(identity(2), vec![0.5, -1.0]),
        constants: None,
    }
}

/// Symmetric positive definite matrix with spectrum drawn from `[lo, hi]`
/// and a random eigenbasis.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = g.qr().q();
    let spectrum = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |_, _| rng.random_range(lo..=hi)));
    let h = &q * spectrum * q.transpose();
    (&h + h.transpose()) * 0.5
}

fn random_point<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn random_preference<R: Rng + ?Sized>(rng: &mut R, d: usize) -> FunctionSpec {
    FunctionSpec::quadratic(to_rows(&random_spd(rng, d, 0.5, 2.0)), random_point(rng, d))
}

/// Kinds of random instances the generator produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Quadratics sharing one Hessian; the Pareto set is the hull of the
    /// centers.
    SharedQuadratic,
    /// Quadratics with independent Hessians.
    Quadratic,
    /// Quadratics plus a softplus term, with nonzero Hessian Lipschitz
    /// constant.
    Softplus,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::SharedQuadratic, Family::Quadratic, Family::Softplus];

    pub fn name(self) -> &'static str {
        match self {
            Family::SharedQuadratic => "shared",
            Family::Quadratic => "quadratic",
            Family::Softplus => "softplus",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    /// A random instance with `n` objectives in `R^d`. Spectra lie in
    /// `[0.5, 3]`, centers and shifts are standard normal.
    pub fn generate<R: Rng + ?Sized>(self, rng: &mut R, n: usize, d: usize) -> ProblemFile {
        let shared = to_rows(&random_spd(rng, d, 0.5, 3.0));
        let objectives = (0..n)
            .map(|_| match self {
                Family::SharedQuadratic => FunctionSpec::quadratic(shared.clone(), random_point(rng, d)),
                Family::Quadratic => FunctionSpec::quadratic(to_rows(&random_spd(rng, d, 0.5, 3.0)), random_point(rng, d)),
                Family::Softplus => FunctionSpec::softplus(SoftplusParams {
                    h: to_rows(&random_spd(rng, d, 0.5, 3.0)),
                    z: random_point(rng, d),
                    weight: rng.random_range(0.1..=1.0),
                    shift: random_point(rng, d),
                }),
            })
            .collect();
        ProblemFile {
            dimension: d,
            objectives,
            preference: random_preference(rng, d),
            constants: None,
        }
    }
}
