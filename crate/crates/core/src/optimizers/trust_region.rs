//! Box-constrained trust-region method with a dogleg step on a BFGS quadratic model.

use serde::{Deserialize, Serialize};

use super::{Incumbent, Method, Objective, OptimizeError, OptimizerConfig, OptimizerReport, Problem};
use crate::scalar::{clamp, dot, norm2, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(deny_unknown_fields)]
pub struct TrustRegionParams<T> {
    /// Initial radius as a fraction of the box width.
    pub initial_radius: T,
    /// Minimum actual-to-predicted reduction ratio for accepting a step.
    pub eta: T,
}

impl<T: Scalar> Default for TrustRegionParams<T> {
    fn default() -> Self {
        Self {
            initial_radius: T::lit(0.5),
            eta: T::lit(1e-4),
        }
    }
}

/// Trust-region minimization from the equal-weights point.
///
/// Each iteration fixes the variables held at a bound by the gradient, takes the dogleg step
/// of the model `g·p + ½ pᵀBp` on the remaining ones within the current radius, and projects
/// the trial point onto the box. The radius follows the ratio of actual to predicted
/// reduction; `B` is a BFGS approximation refreshed on accepted steps. Stops when the
/// projected gradient or the radius falls to the tolerance.
pub fn optimize_trust_region<T: Scalar>(
    objective: &dyn Objective<T>,
    config: &OptimizerConfig<T>,
) -> Result<OptimizerReport<T>, OptimizeError> {
    let problem = Problem::new(objective, config)?;
    let params = &config.params.trust_region;
    let m = problem.dim;
    let tol = config.tolerance;
    let quarter = T::lit(0.25);

    let mut x = problem.equal_point();
    let mut f = problem.value(&x)?;
    let mut g = vec![T::zero(); m];
    problem.gradient(&x, &mut g)?;
    let mut incumbent = Incumbent::new(x.clone(), f);

    let mut hessian = identity::<T>(m);
    let mut scaled = false;
    let max_radius = problem.span() * T::from_count(m).sqrt();
    let mut radius = params.initial_radius * problem.span();
    let mut g_trial = vec![T::zero(); m];

    let mut converged = false;
    let mut iteration = 0;
    while iteration < config.max_iterations {
        if problem.projected_gradient_norm(&x, &g) <= tol || radius <= tol {
            converged = true;
            break;
        }
        iteration += 1;

        let free: Vec<usize> = problem
            .free_mask(&x, &g)
            .into_iter()
            .enumerate()
            .filter_map(|(j, f)| f.then_some(j))
            .collect();
        let g_free: Vec<T> = free.iter().map(|&j| g[j]).collect();
        let b_free: Vec<T> = free
            .iter()
            .flat_map(|&r| free.iter().map(move |&c| (r, c)))
            .map(|(r, c)| hessian[r * m + c])
            .collect();
        let p_free = dogleg(&b_free, &g_free, radius);

        let mut trial = x.clone();
        for (&j, &pj) in free.iter().zip(&p_free) {
            trial[j] = clamp(x[j] + pj, problem.lo, problem.hi);
        }
        let step: Vec<T> = trial.iter().zip(&x).map(|(&t, &xj)| t - xj).collect();
        let step_norm = norm2(&step);
        if step_norm == T::zero() {
            radius *= quarter;
            continue;
        }

        let bs = mat_vec(&hessian, &step);
        let predicted = -(dot(&g, &step) + T::lit(0.5) * dot(&step, &bs));
        let f_trial = problem.value(&trial)?;
        let ratio = if predicted > T::zero() {
            (f - f_trial) / predicted
        } else {
            -T::one()
        };

        if ratio < quarter {
            radius = quarter * step_norm.min(radius);
        } else if ratio > T::lit(0.75) && step_norm >= T::lit(0.99) * radius {
            radius = (radius + radius).min(max_radius);
        }

        if ratio > params.eta && f_trial < f {
            problem.gradient(&trial, &mut g_trial)?;
            let y: Vec<T> = g_trial.iter().zip(&g).map(|(&a, &b)| a - b).collect();
            let sy = dot(&step, &y);
            if sy > T::epsilon().sqrt() * step_norm * norm2(&y) {
                if !scaled {
                    let scale = dot(&y, &y) / sy;
                    hessian = identity(m);
                    hessian.iter_mut().for_each(|h| *h *= scale);
                    scaled = true;
                }
                bfgs_update(&mut hessian, &step, &y, sy);
            }
            x = trial;
            f = f_trial;
            std::mem::swap(&mut g, &mut g_trial);
            incumbent.offer(iteration, &x, f);
        }
    }

    Ok(incumbent.into_report(Method::TrustRegion, config, &problem, iteration, converged))
}

fn identity<T: Scalar>(m: usize) -> Vec<T> {
    let mut a = vec![T::zero(); m * m];
    for i in 0..m {
        a[i * m + i] = T::one();
    }
    a
}

fn mat_vec<T: Scalar>(a: &[T], v: &[T]) -> Vec<T> {
    a.chunks_exact(v.len()).map(|row| dot(row, v)).collect()
}

/// `B ← B + yyᵀ/(yᵀs) − (Bs)(Bs)ᵀ/(sᵀBs)`.
fn bfgs_update<T: Scalar>(b: &mut [T], s: &[T], y: &[T], sy: T) {
    let m = s.len();
    let bs = mat_vec(b, s);
    let sbs = dot(s, &bs);
    if !(sbs > T::zero()) {
        return;
    }
    for r in 0..m {
        for c in 0..m {
            b[r * m + c] += y[r] * y[c] / sy - bs[r] * bs[c] / sbs;
        }
    }
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major). `None` when the
/// factorization breaks down.
pub(crate) fn cholesky_solve<T: Scalar>(a: &[T], b: &[T]) -> Option<Vec<T>> {
    let k = b.len();
    let mut l = vec![T::zero(); k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut sum = a[i * k + j];
            for p in 0..j {
                sum -= l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if !(sum > T::zero()) {
                    return None;
                }
                l[i * k + i] = sum.sqrt();
            } else {
                l[i * k + j] = sum / l[j * k + j];
            }
        }
    }
    let mut z = b.to_vec();
    for i in 0..k {
        for p in 0..i {
            z[i] = z[i] - l[i * k + p] * z[p];
        }
        z[i] /= l[i * k + i];
    }
    for i in (0..k).rev() {
        for p in i + 1..k {
            z[i] = z[i] - l[p * k + i] * z[p];
        }
        z[i] /= l[i * k + i];
    }
    z.iter().all(|v| v.is_finite()).then_some(z)
}

/// Dogleg minimizer of `g·p + ½ pᵀBp` subject to `‖p‖ ≤ radius`.
pub(crate) fn dogleg<T: Scalar>(b: &[T], g: &[T], radius: T) -> Vec<T> {
    let g_norm = norm2(g);
    if g_norm == T::zero() {
        return vec![T::zero(); g.len()];
    }
    let to_boundary = |v: &[T]| -> Vec<T> {
        let s = radius / norm2(v);
        v.iter().map(|&x| x * s).collect()
    };
    let steepest: Vec<T> = g.iter().map(|&x| -x).collect();
    let gbg = dot(g, &mat_vec(b, g));
    if !(gbg > T::zero()) {
        return to_boundary(&steepest);
    }
    let cauchy: Vec<T> = g.iter().map(|&x| -(g_norm * g_norm / gbg) * x).collect();
    let newton = match cholesky_solve(b, &steepest) {
        Some(p) => p,
        None => return to_boundary(&cauchy),
    };
    if norm2(&newton) <= radius {
        return newton;
    }
    let cauchy_norm = norm2(&cauchy);
    if cauchy_norm >= radius {
        return to_boundary(&cauchy);
    }
    let d: Vec<T> = newton.iter().zip(&cauchy).map(|(&n, &c)| n - c).collect();
    let a = dot(&d, &d);
    let bq = T::lit(2.0) * dot(&cauchy, &d);
    let c = cauchy_norm * cauchy_norm - radius * radius;
    let tau = (-bq + (bq * bq - T::lit(4.0) * a * c).sqrt()) / (a + a);
    cauchy.iter().zip(&d).map(|(&c, &dv)| c + tau * dv).collect()
}
