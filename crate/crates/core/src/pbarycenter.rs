//! The pointwise p-barycenter: for points `x_1, …, x_N`, weights `λ_i` and
//! exponent `1 < p < ∞`, the unique minimizer of
//! `F_p(z) = Σ_i λ_i |x_i − z|^p`, together with its convex-combination
//! representation, the Euler–Lagrange residual, and the `p → 1` / `p → ∞`
//! limits in one dimension.

use crate::vecmath::{diameter, dist, norm};
use crate::{Error, Result};

/// Iteration budget for the fixed-point solver. Strict convexity guarantees
/// a unique target; the budget is a safety valve for pathological
/// conditioning.
pub const MAX_ITERATIONS: usize = 10_000;

/// Default Euler–Lagrange residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Tolerance on the weight sum of a configuration.
const LAMBDA_SUM_TOL: f64 = 1e-12;

/// A weighted point configuration with exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfiguration {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    p: f64,
}

impl PointConfiguration {
    /// Validates dimensions, positive weights summing to one, and
    /// `p ∈ (1, ∞)`. The limit cases have dedicated operations.
    pub fn new(dim: usize, points: Vec<Vec<f64>>, weights: Vec<f64>, p: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("dimension must be positive".into()));
        }
        if points.is_empty() {
            return Err(Error::Invalid("need at least one point".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::Invalid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        for pt in &points {
            if pt.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: pt.len(),
                });
            }
        }
        if weights.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Invalid("weights must be strictly positive".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > LAMBDA_SUM_TOL {
            return Err(Error::Invalid(format!("weights sum to {sum}, not 1")));
        }
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::Invalid(format!("exponent {p} outside (1, inf)")));
        }
        Ok(Self {
            dim,
            points,
            weights,
            p,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exponent(&self) -> f64 {
        self.p
    }
}

/// Output of [`solve_point_barycenter`].
#[derive(Debug, Clone)]
pub struct BarycenterResult {
    /// The minimizer of `F_p`.
    pub z: Vec<f64>,
    /// Convex weights with `z = Σ η_i x_i`; see the conventions on
    /// [`solve_point_barycenter`] when `singular_set` is non-empty.
    pub eta: Vec<f64>,
    /// Euclidean norm of the Euler–Lagrange gradient at `z`.
    pub residual: f64,
    /// Indices `i` with `|x_i − z| ≤ tol^{1/(p-1)} · diameter`.
    pub singular_set: Vec<usize>,
    /// Iterations consumed.
    pub iterations: usize,
}

pub(crate) struct RawSolution {
    pub z: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

#[inline]
fn objective(points: &[&[f64]], weights: &[f64], p: f64, z: &[f64]) -> f64 {
    points
        .iter()
        .zip(weights)
        .map(|(x, &l)| l * dist(x, z).powf(p))
        .sum()
}

/// Gradient of `F_p`: `Σ λ_i p |z − x_i|^{p-2} (z − x_i)`; the term of a
/// coinciding point vanishes in the limit for every `p > 1` and is skipped.
fn gradient(points: &[&[f64]], weights: &[f64], p: f64, z: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (x, &l) in points.iter().zip(weights) {
        let r = dist(x, z);
        if r == 0.0 {
            continue;
        }
        let c = l * p * r.powf(p - 2.0);
        for (o, (&zk, &xk)) in out.iter_mut().zip(z.iter().zip(x.iter())) {
            *o += c * (zk - xk);
        }
    }
}

/// Gradient of the objective restricted away from point `skip`, evaluated at
/// `x_skip`. Vanishing of this reduced gradient is necessary and sufficient
/// for optimality of `z = x_skip`.
fn reduced_gradient(
    points: &[&[f64]],
    weights: &[f64],
    p: f64,
    at: &[f64],
    coincide_eps: f64,
    out: &mut [f64],
) {
    out.fill(0.0);
    for (x, &l) in points.iter().zip(weights) {
        let r = dist(x, at);
        if r <= coincide_eps {
            continue;
        }
        let c = l * p * r.powf(p - 2.0);
        for (o, (&ak, &xk)) in out.iter_mut().zip(at.iter().zip(x.iter())) {
            *o += c * (ak - xk);
        }
    }
}

/// 1D safeguarded bisection on the monotone derivative of `F_p`.
fn bisect_1d(points: &[&[f64]], weights: &[f64], p: f64) -> f64 {
    let mut lo = points.iter().map(|x| x[0]).fold(f64::INFINITY, f64::min);
    let mut hi = points.iter().map(|x| x[0]).fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return lo;
    }
    let deriv = |z: f64| -> f64 {
        let zz = [z];
        let mut g = [0.0];
        gradient(points, weights, p, &zz, &mut g);
        g[0]
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if deriv(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    // Of the bracket ends and midpoint, keep the smallest objective.
    let mut best = mid;
    let mut best_f = objective(points, weights, p, &[mid]);
    for cand in [lo, hi] {
        let f = objective(points, weights, p, &[cand]);
        if f < best_f {
            best_f = f;
            best = cand;
        }
    }
    best
}

/// Damped fixed-point iteration `z ← Σ η_i(z) x_i` with a bisection
/// safeguard in one dimension and a gradient-descent safeguard otherwise.
pub(crate) fn solve_raw(
    dim: usize,
    points: &[&[f64]],
    weights: &[f64],
    p: f64,
    tol: f64,
) -> Result<RawSolution> {
    let n = points.len();
    let scale = {
        let mut d = 0.0f64;
        for (k, a) in points.iter().enumerate() {
            for b in &points[k + 1..] {
                d = d.max(dist(a, b));
            }
        }
        d
    };
    // All points coincide: the minimizer is that common point, exactly.
    if scale == 0.0 {
        return Ok(RawSolution {
            z: points[0].to_vec(),
            residual: 0.0,
            iterations: 0,
        });
    }
    let coincide_eps = 1e-14 * scale;

    // Start from the weighted mean; for p = 2 this is already the minimizer.
    let mut z: Vec<f64> = vec![0.0; dim];
    for (x, &l) in points.iter().zip(weights) {
        for (zk, &xk) in z.iter_mut().zip(x.iter()) {
            *zk += l * xk;
        }
    }

    let mut grad = vec![0.0; dim];
    let mut target = vec![0.0; dim];
    let mut cand = vec![0.0; dim];
    let mut f_z = objective(points, weights, p, &z);

    for iter in 0..MAX_ITERATIONS {
        // Coincidence handling: if the iterate sits on (or next to) an input
        // point, decide optimality there via the reduced gradient; the full
        // gradient at that point equals it because Dh_p vanishes at zero.
        if let Some(i) = (0..n).find(|&i| dist(points[i], &z) <= coincide_eps) {
            reduced_gradient(points, weights, p, points[i], coincide_eps, &mut grad);
            let res = norm(&grad);
            if res <= tol {
                return Ok(RawSolution {
                    z: points[i].to_vec(),
                    residual: res,
                    iterations: iter,
                });
            }
            // Not optimal here. The minimizer sits where the own-point term
            // balances the rest, at distance ~ (res / (λ_i p))^{1/(p-1)};
            // escape along the descent direction at half that scale.
            let balance = (res / (weights[i] * p)).powf(1.0 / (p - 1.0));
            let mut step = (0.5 * balance).min(0.1 * scale);
            let f_at = objective(points, weights, p, &z);
            loop {
                for (c, (&zk, &gk)) in cand.iter_mut().zip(z.iter().zip(grad.iter())) {
                    *c = zk - step * gk / res.max(1e-300);
                }
                let f_c = objective(points, weights, p, &cand);
                if f_c < f_at || step < 1e-17 * scale {
                    break;
                }
                step *= 0.5;
            }
            z.copy_from_slice(&cand);
            f_z = objective(points, weights, p, &z);
            continue;
        }

        gradient(points, weights, p, &z, &mut grad);
        let res = norm(&grad);
        if res <= tol {
            return Ok(RawSolution {
                z,
                residual: res,
                iterations: iter,
            });
        }

        // Fixed-point target from the convex-combination identity.
        let mut wsum = 0.0;
        target.fill(0.0);
        for (x, &l) in points.iter().zip(weights) {
            let r = dist(x, &z);
            let w = l * p * r.powf(p - 2.0);
            wsum += w;
            for (t, &xk) in target.iter_mut().zip(x.iter()) {
                *t += w * xk;
            }
        }
        if !(wsum.is_finite() && wsum > 0.0) || target.iter().any(|t| !t.is_finite()) {
            // Degenerate weights this far from an atom indicate overflow in
            // r^{p-2}; fall back to the safeguards below.
            if dim == 1 {
                let zb = bisect_1d(points, weights, p);
                let zz = vec![zb];
                gradient(points, weights, p, &zz, &mut grad);
                return Ok(RawSolution {
                    residual: norm(&grad),
                    z: zz,
                    iterations: iter,
                });
            }
            return Err(Error::NonConvergence(MAX_ITERATIONS));
        }
        for t in target.iter_mut() {
            *t /= wsum;
        }

        // Damped step: halve until the objective decreases. Once objective
        // differences fall below float resolution the gradient norm takes
        // over as the progress measure; the step direction is the negative
        // gradient rescaled by the weight sum, so a small enough step always
        // shrinks it.
        let mut alpha = 1.0f64;
        let mut accepted = false;
        while alpha >= 1e-14 {
            for (c, (&zk, &tk)) in cand.iter_mut().zip(z.iter().zip(target.iter())) {
                *c = zk + alpha * (tk - zk);
            }
            let f_c = objective(points, weights, p, &cand);
            let take = if f_c < f_z {
                true
            } else if f_c <= f_z + 1e-14 * (1.0 + f_z.abs()) {
                // Objective differences at rounding level: require strict
                // gradient-norm progress instead.
                gradient(points, weights, p, &cand, &mut grad);
                norm(&grad) < res
            } else {
                false
            };
            if take {
                z.copy_from_slice(&cand);
                f_z = f_c;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // The fixed-point direction stalled.
            if dim == 1 {
                let zb = bisect_1d(points, weights, p);
                let zz = vec![zb];
                gradient(points, weights, p, &zz, &mut grad);
                return Ok(RawSolution {
                    residual: norm(&grad),
                    z: zz,
                    iterations: iter,
                });
            }
            // Backtracking step along the negative gradient, recomputed at
            // the current iterate.
            gradient(points, weights, p, &z, &mut grad);
            let mut step = 0.1 * scale / res.max(1e-300);
            let mut moved = false;
            while step * res >= 1e-17 * scale {
                for (c, (&zk, &gk)) in cand.iter_mut().zip(z.iter().zip(grad.iter())) {
                    *c = zk - step * gk;
                }
                let f_c = objective(points, weights, p, &cand);
                if f_c < f_z {
                    z.copy_from_slice(&cand);
                    f_z = f_c;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                // No float-representable descent left; report what we have.
                gradient(points, weights, p, &z, &mut grad);
                let res = norm(&grad);
                if res <= tol {
                    return Ok(RawSolution {
                        z,
                        residual: res,
                        iterations: iter,
                    });
                }
                return Err(Error::NonConvergence(MAX_ITERATIONS));
            }
        }
    }

    // Budget exhausted; in one dimension the bisection safeguard still
    // resolves the root.
    if dim == 1 {
        let zb = bisect_1d(points, weights, p);
        let zz = vec![zb];
        gradient(points, weights, p, &zz, &mut grad);
        return Ok(RawSolution {
            residual: norm(&grad),
            z: zz,
            iterations: MAX_ITERATIONS,
        });
    }
    gradient(points, weights, p, &z, &mut grad);
    let res = norm(&grad);
    if res <= tol {
        return Ok(RawSolution {
            z,
            residual: res,
            iterations: MAX_ITERATIONS,
        });
    }
    Err(Error::NonConvergence(MAX_ITERATIONS))
}

/// Solves the pointwise barycenter problem to Euler–Lagrange residual `tol`.
///
/// Conventions for `eta` when the singular set is non-empty: for `p < 2`
/// the weight concentrates on the coinciding indices (proportionally to
/// `λ`), for `p > 2` coinciding indices get weight zero, and for `p = 2`
/// the formula `η_i = λ_i` applies unchanged. These are the limits of the
/// defining formula and keep `z = Σ η_i x_i` valid.
pub fn solve_point_barycenter(cfg: &PointConfiguration, tol: f64) -> Result<BarycenterResult> {
    if !(tol > 0.0) {
        return Err(Error::Invalid(format!("tolerance {tol} must be positive")));
    }
    let refs: Vec<&[f64]> = cfg.points.iter().map(|p| p.as_slice()).collect();
    let raw = solve_raw(cfg.dim, &refs, &cfg.weights, cfg.p, tol)?;

    let diam = diameter(&cfg.points);
    let thresh = tol.powf(1.0 / (cfg.p - 1.0)) * diam;
    let dists: Vec<f64> = cfg.points.iter().map(|x| dist(x, &raw.z)).collect();
    let singular_set: Vec<usize> = (0..cfg.len()).filter(|&i| dists[i] <= thresh).collect();

    let eta = convex_weights(&cfg.weights, &dists, cfg.p, &singular_set);

    Ok(BarycenterResult {
        z: raw.z,
        eta,
        residual: raw.residual,
        singular_set,
        iterations: raw.iterations,
    })
}

fn convex_weights(lambda: &[f64], dists: &[f64], p: f64, singular: &[usize]) -> Vec<f64> {
    let n = lambda.len();
    if p == 2.0 {
        return lambda.to_vec();
    }
    if singular.is_empty() {
        let w: Vec<f64> = lambda
            .iter()
            .zip(dists)
            .map(|(&l, &r)| l * p * r.powf(p - 2.0))
            .collect();
        let s: f64 = w.iter().sum();
        return w.into_iter().map(|x| x / s).collect();
    }
    if p < 2.0 {
        let s: f64 = singular.iter().map(|&i| lambda[i]).sum();
        let mut eta = vec![0.0; n];
        for &i in singular {
            eta[i] = lambda[i] / s;
        }
        return eta;
    }
    // p > 2: coinciding points carry no weight in the limit.
    let mut w = vec![0.0; n];
    let mut s = 0.0;
    for i in 0..n {
        if !singular.contains(&i) {
            w[i] = lambda[i] * p * dists[i].powf(p - 2.0);
            s += w[i];
        }
    }
    if s > 0.0 {
        for x in w.iter_mut() {
            *x /= s;
        }
        w
    } else {
        lambda.to_vec()
    }
}

/// The cost `c_p = min_z Σ λ_i |x_i − z|^p`, evaluated at the solved
/// minimizer. Non-negative, and zero exactly when all points coincide.
pub fn cost_cp(cfg: &PointConfiguration) -> Result<f64> {
    let refs: Vec<&[f64]> = cfg.points.iter().map(|p| p.as_slice()).collect();
    let raw = solve_raw(cfg.dim, &refs, &cfg.weights, cfg.p, DEFAULT_TOL)?;
    Ok(objective(&refs, &cfg.weights, cfg.p, &raw.z))
}

/// Minimizer of `Σ λ_i |x_i − z|` in one dimension: the smallest point, in
/// coordinate order, at which the cumulative weight reaches one half. When
/// the minimizers form an interval this returns its left endpoint.
pub fn barycenter_limit_p1(points: &[f64], weights: &[f64]) -> Result<f64> {
    if points.is_empty() || points.len() != weights.len() {
        return Err(Error::Invalid("points and weights must match".into()));
    }
    if weights.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Invalid("weights must be strictly positive".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > LAMBDA_SUM_TOL {
        return Err(Error::Invalid(format!("weights sum to {sum}, not 1")));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
    let mut cum = 0.0;
    for &k in &order {
        cum += weights[k];
        if cum >= 0.5 - 1e-12 {
            return Ok(points[k]);
        }
    }
    Ok(points[*order.last().expect("nonempty")])
}

/// Minimizer of `max_i |x_i − z|` in one dimension: the midrange
/// `(min_i x_i + max_i x_i) / 2`.
pub fn barycenter_limit_pinf(points: &[f64]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::Invalid("need at least one point".into()));
    }
    let lo = points.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dim: usize, pts: &[&[f64]], w: &[f64], p: f64) -> PointConfiguration {
        PointConfiguration::new(
            dim,
            pts.iter().map(|x| x.to_vec()).collect(),
            w.to_vec(),
            p,
        )
        .unwrap()
    }

    #[test]
    fn p2_is_weighted_mean() {
        let c = cfg(1, &[&[0.0], &[1.0]], &[0.5, 0.5], 2.0);
        let r = solve_point_barycenter(&c, 1e-10).unwrap();
        assert_eq!(r.z[0], 0.5);
        assert_eq!(r.eta, vec![0.5, 0.5]);
        assert!(r.residual <= 1e-10);
        assert!(r.singular_set.is_empty());
    }

    #[test]
    fn coincident_points_are_singular() {
        for &p in &[1.5, 2.0, 3.0] {
            let c = cfg(2, &[&[2.0, -1.0], &[2.0, -1.0], &[2.0, -1.0]], &[0.2, 0.3, 0.5], p);
            let r = solve_point_barycenter(&c, 1e-10).unwrap();
            assert_eq!(r.z, vec![2.0, -1.0]);
            assert_eq!(r.singular_set, vec![0, 1, 2]);
            assert_eq!(r.residual, 0.0);
        }
    }

    #[test]
    fn p3_two_point_closed_form() {
        // Minimizing (1/3)z^3 + (2/3)(1-z)^3 on [0,1] gives z^2 = 2(1-z)^2,
        // i.e. z = sqrt(2)/(1+sqrt(2)); cross-checked by grid search.
        let c = cfg(1, &[&[0.0], &[1.0]], &[1.0 / 3.0, 2.0 / 3.0], 3.0);
        let r = solve_point_barycenter(&c, 1e-12).unwrap();
        let expect = 0.5857864376269051;
        assert!((r.z[0] - expect).abs() < 1e-9, "z = {}", r.z[0]);
        assert!((r.eta.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn p4_symmetric_pair_centers() {
        let c = cfg(1, &[&[-1.0], &[1.0]], &[0.5, 0.5], 4.0);
        let r = solve_point_barycenter(&c, 1e-10).unwrap();
        assert!(r.z[0].abs() < 1e-10);
    }

    #[test]
    fn convex_hull_containment_1d() {
        let c = cfg(1, &[&[-3.0], &[7.0], &[1.0]], &[0.2, 0.5, 0.3], 1.5);
        let r = solve_point_barycenter(&c, 1e-10).unwrap();
        assert!(r.z[0] >= -3.0 && r.z[0] <= 7.0);
        assert!(r.residual <= 1e-10);
    }

    #[test]
    fn convex_combination_identity_2d() {
        let c = cfg(
            2,
            &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]],
            &[0.3, 0.4, 0.3],
            3.0,
        );
        let r = solve_point_barycenter(&c, 1e-11).unwrap();
        assert!(r.singular_set.is_empty());
        for k in 0..2 {
            let combo: f64 = r
                .eta
                .iter()
                .zip(c.points())
                .map(|(&e, x)| e * x[k])
                .sum();
            assert!((combo - r.z[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn cost_examples() {
        let c = cfg(1, &[&[0.0], &[2.0]], &[0.5, 0.5], 2.0);
        assert!((cost_cp(&c).unwrap() - 1.0).abs() < 1e-12);
        let same = cfg(1, &[&[4.0], &[4.0]], &[0.5, 0.5], 3.0);
        assert_eq!(cost_cp(&same).unwrap(), 0.0);
    }

    #[test]
    fn p1_limit_weighted_median() {
        let w3 = [1.0 / 3.0; 3];
        assert_eq!(barycenter_limit_p1(&[0.0, 1.0, 10.0], &w3).unwrap(), 1.0);
        assert_eq!(barycenter_limit_p1(&[5.0], &[1.0]).unwrap(), 5.0);
        // Cumulative weight reaches 1/2 only at the second atom.
        assert_eq!(barycenter_limit_p1(&[0.0, 5.0], &[0.1, 0.9]).unwrap(), 5.0);
        // Exact half split: the smaller minimizing atom is returned.
        assert_eq!(barycenter_limit_p1(&[0.0, 1.0], &[0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn pinf_limit_midrange() {
        assert_eq!(barycenter_limit_pinf(&[0.0, 1.0, 10.0]).unwrap(), 5.0);
        assert_eq!(barycenter_limit_pinf(&[3.5]).unwrap(), 3.5);
        assert_eq!(barycenter_limit_pinf(&[-3.0, -1.0, 2.0, 7.0]).unwrap(), 2.0);
    }

    #[test]
    fn rejects_bad_configurations() {
        assert!(PointConfiguration::new(1, vec![vec![0.0]], vec![1.0], 1.0).is_err());
        assert!(PointConfiguration::new(1, vec![vec![0.0]], vec![0.5], 2.0).is_err());
        assert!(PointConfiguration::new(1, vec![vec![0.0, 1.0]], vec![1.0], 2.0).is_err());
        assert!(PointConfiguration::new(0, vec![], vec![], 2.0).is_err());
    }

    #[test]
    fn optimum_at_atom_when_reduced_gradient_vanishes() {
        // Symmetric flanks cancel, so the central atom is the minimizer for
        // every exponent and must be returned exactly.
        for &p in &[1.2, 1.5, 3.0] {
            let c = cfg(
                1,
                &[&[0.0], &[-1.0], &[1.0]],
                &[0.5, 0.25, 0.25],
                p,
            );
            let r = solve_point_barycenter(&c, 1e-10).unwrap();
            assert_eq!(r.z[0], 0.0, "p = {p}");
            assert_eq!(r.singular_set, vec![0], "p = {p}");
        }
    }

    #[test]
    fn near_atom_minimizer_small_p() {
        // Heavy atom at the origin, p < 2: the minimizer is close to but not
        // on the atom, at the distance where the gradient terms balance.
        let c = cfg(2, &[&[0.0, 0.0], &[1.0, 1.0]], &[0.85, 0.15], 1.2);
        let r = solve_point_barycenter(&c, 1e-10).unwrap();
        assert!(r.residual <= 1e-10);
        let d0 = dist(&r.z, &[0.0, 0.0]);
        assert!(d0 > 0.0 && d0 < 1e-3, "distance from heavy atom {d0}");
    }
}
