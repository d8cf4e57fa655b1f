//! The probability simplex: projection, first-order stationarity gaps and
//! small quadratic programs over it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerated negative weight and sum defect before a vector is rejected
/// rather than cleaned up.
const WEIGHT_SLACK: f64 = 1e-9;

/// A vector of convex weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint {
    weights: DVector<f64>,
}

impl SimplexPoint {
    /// Accepts weights that are nonnegative and sum to one up to `1e-9`,
    /// then clamps and renormalizes them.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("simplex point needs at least one weight"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < -WEIGHT_SLACK) {
            return Err(invalid(format!("weights must be finite and nonnegative: {weights:?}")));
        }
        let sum: f64 = weights.iter().map(|w| w.max(0.0)).sum();
        if (sum - 1.0).abs() > WEIGHT_SLACK {
            return Err(invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self::normalized(DVector::from_iterator(
            weights.len(),
            weights.into_iter().map(|w| w.max(0.0)),
        )))
    }

    fn normalized(w: DVector<f64>) -> Self {
        let sum = w.sum();
        Self { weights: w / sum }
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "simplex needs at least one vertex");
        Self {
            weights: DVector::from_element(n, 1.0 / n as f64),
        }
    }

    pub fn vertex(n: usize, j: usize) -> Self {
        assert!(j < n, "vertex index out of range");
        let mut weights = DVector::zeros(n);
        weights[j] = 1.0;
        Self { weights }
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn l1_distance(&self, other: &SimplexPoint) -> f64 {
        (&self.weights - &other.weights).lp_norm(1)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.weights.iter().copied().collect()
    }
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Self {
        p.to_vec()
    }
}

/// Euclidean projection onto the simplex by sorting and thresholding.
pub fn project_to_simplex(y: &DVector<f64>) -> Result<SimplexPoint> {
    if y.is_empty() {
        return Err(invalid("cannot project an empty vector"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite vector passed to simplex projection".into()));
    }
    let mut sorted: Vec<f64> = y.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if v - candidate > 0.0 {
            threshold = candidate;
        }
    }
    Ok(SimplexPoint::normalized(y.map(|v| (v - threshold).max(0.0))))
}

/// Smallest `eps >= 0` such that `-v^T (b' - b) <= eps ||b' - b||_1` for all
/// `b'` in the simplex, together with the vertex to move weight toward
/// (lowest index on ties; `None` when the gap is zero).
///
/// Feasible directions form a cone and the ratio is scale invariant, so the
/// supremum is attained at an extreme point `(e_i - e_j)/2` of the unit l1
/// ball in that cone, with `b_j > 0`. Directions `e_i - b` alone are not
/// enough: from `b = (1/3, 1/3, 1/3)` with `v = (-1, -1, 2)` they give 3/4,
/// while `(e_1 - e_3)/2` gives 3/2.
pub fn l1_gap_with_vertex(v: &DVector<f64>, beta: &SimplexPoint) -> (f64, Option<usize>) {
    debug_assert_eq!(v.len(), beta.len());
    let b = beta.weights();
    let donor = (0..b.len())
        .filter(|&j| b[j] > 0.0)
        .map(|j| v[j])
        .fold(f64::NEG_INFINITY, f64::max);
    let (target, low) = v
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &vi)| if vi < best.1 { (i, vi) } else { best });
    let gap = 0.5 * (donor - low);
    if gap > 0.0 {
        (gap, Some(target))
    } else {
        (0.0, None)
    }
}

pub fn l1_stationarity_gap(v: &DVector<f64>, beta: &SimplexPoint) -> f64 {
    l1_gap_with_vertex(v, beta).0
}

/// `||P_T(-v)||_2` where `T` is the tangent cone of the simplex at `beta`:
/// zero-sum directions that do not decrease coordinates already at zero.
pub fn l2_tangent_gap(v: &DVector<f64>, beta: &SimplexPoint) -> f64 {
    tangent_projection(&(-v), beta).norm()
}

/// Projection of `w` onto the tangent cone at `beta`.
pub fn tangent_projection(w: &DVector<f64>, beta: &SimplexPoint) -> DVector<f64> {
    let b = beta.weights();
    let (free, mut pinned): (Vec<usize>, Vec<usize>) = (0..b.len()).partition(|&i| b[i] > 0.0);
    // Pinned coordinates enter the zero-sum constraint only while above the
    // common shift, so add them in decreasing order until consistent.
    pinned.sort_by(|&i, &j| w[j].total_cmp(&w[i]));
    let mut sum: f64 = free.iter().map(|&i| w[i]).sum();
    let mut count = free.len();
    let mut shift = sum / count as f64;
    for &i in &pinned {
        if w[i] <= shift {
            break;
        }
        sum += w[i];
        count += 1;
        shift = sum / count as f64;
    }
    DVector::from_iterator(
        b.len(),
        (0..b.len()).map(|i| {
            if b[i] > 0.0 {
                w[i] - shift
            } else {
                (w[i] - shift).max(0.0)
            }
        }),
    )
}

/// `offset + v^T (b' - anchor) + C/2 ||b' - anchor||^2` over the simplex.
#[derive(Debug, Clone)]
pub struct SimplexQuadratic {
    pub anchor: SimplexPoint,
    pub linear: DVector<f64>,
    pub curvature: f64,
    pub offset: f64,
}

impl SimplexQuadratic {
    pub fn new(anchor: SimplexPoint, linear: DVector<f64>, curvature: f64) -> Result<Self> {
        if linear.len() != anchor.len() {
            return Err(invalid("linear term and anchor differ in length"));
        }
        if !(curvature > 0.0 && curvature.is_finite()) {
            return Err(invalid(format!("curvature must be positive, got {curvature}")));
        }
        if linear.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite linear term".into()));
        }
        Ok(Self {
            anchor,
            linear,
            curvature,
            offset: 0.0,
        })
    }

    pub fn value(&self, beta: &SimplexPoint) -> f64 {
        let step = beta.weights() - self.anchor.weights();
        self.offset + self.linear.dot(&step) + 0.5 * self.curvature * step.norm_squared()
    }

    pub fn gradient(&self, beta: &SimplexPoint) -> DVector<f64> {
        &self.linear + (beta.weights() - self.anchor.weights()) * self.curvature
    }

    /// Larger of the l1 gap and the l2 tangent-cone gap at `beta`.
    pub fn stationarity_gap(&self, beta: &SimplexPoint) -> f64 {
        let g = self.gradient(beta);
        l1_stationarity_gap(&g, beta).max(l2_tangent_gap(&g, beta))
    }
}

/// Projected gradient descent with step `1/C` from the anchor. Stops once both
/// the l1 and l2 gaps are at most `tol_gap`.
pub fn minimize_quadratic_over_simplex(
    q: &SimplexQuadratic,
    tol_gap: f64,
    max_iters: usize,
) -> Result<(SimplexPoint, f64)> {
    if !(tol_gap > 0.0) {
        return Err(invalid("gap tolerance must be positive"));
    }
    let mut beta = q.anchor.clone();
    let mut gap = q.stationarity_gap(&beta);
    let mut value = q.value(&beta);
    for _ in 0..max_iters {
        if gap <= tol_gap {
            return Ok((beta, gap));
        }
        let trial = project_to_simplex(&(beta.weights() - q.gradient(&beta) / q.curvature))?;
        let trial_value = q.value(&trial);
        if trial_value > value + 1e-15 * value.abs().max(1.0) {
            break;
        }
        beta = trial;
        value = trial_value;
        gap = q.stationarity_gap(&beta);
    }
    if gap <= tol_gap {
        return Ok((beta, gap));
    }
    Err(Error::BudgetExceeded {
        solver: "simplex quadratic",
        iterations: max_iters,
        best: beta.to_vec(),
        measure: gap,
    })
}

/// Result of [`min_norm_point`].
#[derive(Debug, Clone)]
pub struct MinNormPoint {
    pub beta: SimplexPoint,
    /// `||G beta||` at the returned weights.
    pub norm: f64,
    /// Certified lower bound on the minimum norm over the simplex.
    pub lower_bound: f64,
}

/// Largest column count solved exactly by support enumeration in
/// [`min_norm_point`].
pub const MIN_NORM_EXACT_LIMIT: usize = 12;

/// Minimizes `||G beta||` over the simplex.
///
/// Up to [`MIN_NORM_EXACT_LIMIT`] columns the minimum is exact: every support
/// is tried and the affine minimizer kept when its weights are nonnegative.
/// Beyond that, projected gradient descent on `1/2 ||G beta||^2` runs until the
/// minimum is known to be above or below `target`, or the budget runs out.
pub fn min_norm_point(g: &DMatrix<f64>, target: f64, max_iters: usize) -> Result<MinNormPoint> {
    let n = g.ncols();
    if n == 0 {
        return Err(invalid("need at least one column"));
    }
    if n <= MIN_NORM_EXACT_LIMIT {
        Ok(min_norm_by_supports(g))
    } else {
        min_norm_by_descent(g, target, max_iters)
    }
}

fn min_norm_by_supports(g: &DMatrix<f64>) -> MinNormPoint {
    let n = g.ncols();
    let gram = g.tr_mul(g);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 1u32..(1u32 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let k = support.len();
        // Stationarity of the affine problem: [G_S^T G_S 1; 1^T 0] [b; nu] = [0; 1].
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = gram[(i, j)];
            }
            kkt[(a, k)] = 1.0;
            kkt[(k, a)] = 1.0;
        }
        let mut rhs = DVector::zeros(k + 1);
        rhs[k] = 1.0;
        let Some(sol) = kkt.lu().solve(&rhs) else {
            continue;
        };
        if sol.iter().any(|v| !v.is_finite()) || sol.rows(0, k).iter().any(|b| *b < -1e-12) {
            continue;
        }
        let mut beta = DVector::zeros(n);
        for (a, &i) in support.iter().enumerate() {
            beta[i] = sol[a].max(0.0);
        }
        beta /= beta.sum();
        let norm = (g * &beta).norm();
        if best.as_ref().is_none_or(|(b, _)| norm < *b) {
            best = Some((norm, beta));
        }
    }
    let (norm, beta) = best.expect("single-column supports are always solvable");
    MinNormPoint {
        beta: SimplexPoint::normalized(beta),
        norm,
        lower_bound: norm,
    }
}

fn min_norm_by_descent(g: &DMatrix<f64>, target: f64, max_iters: usize) -> Result<MinNormPoint> {
    let n = g.ncols();
    let gram = g.tr_mul(g);
    let step_curvature = crate::linalg::eigen_range(&gram).1.max(f64::MIN_POSITIVE);
    let mut beta = SimplexPoint::uniform(n);
    let mut out = MinNormPoint {
        beta: beta.clone(),
        norm: f64::INFINITY,
        lower_bound: 0.0,
    };
    for _ in 0..=max_iters {
        let w = beta.weights();
        let grad = &gram * w;
        let half_sq = 0.5 * w.dot(&grad);
        // Frank-Wolfe duality gap; the optimum is at least phi - gap.
        let fw_gap = w.dot(&grad) - grad.min();
        let lower = (half_sq - fw_gap).max(0.0);
        out.lower_bound = out.lower_bound.max((2.0 * lower).sqrt());
        let norm = (2.0 * half_sq).max(0.0).sqrt();
        if norm < out.norm {
            out.norm = norm;
            out.beta = beta.clone();
        }
        if out.norm <= target || out.lower_bound > target || fw_gap <= 1e-15 * half_sq.max(1e-300) {
            break;
        }
        beta = project_to_simplex(&(w - grad / step_curvature))?;
    }
    Ok(out)
}
