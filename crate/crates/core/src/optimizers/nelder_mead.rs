//! Nelder–Mead simplex search with candidate vertices clipped into the box.

use serde::{Deserialize, Serialize};

use super::{Incumbent, Method, Objective, OptimizeError, OptimizerConfig, OptimizerReport, Problem};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(deny_unknown_fields)]
pub struct NelderMeadParams<T> {
    pub reflection: T,
    pub expansion: T,
    pub contraction: T,
    pub shrink: T,
    /// Edge length of the initial simplex as a fraction of the box width.
    pub initial_step: T,
}

impl<T: Scalar> Default for NelderMeadParams<T> {
    fn default() -> Self {
        Self {
            reflection: T::one(),
            expansion: T::lit(2.0),
            contraction: T::lit(0.5),
            shrink: T::lit(0.5),
            initial_step: T::lit(0.05),
        }
    }
}

/// Simplex of `m + 1` vertices around the equal-weights point. Reflection and expansion
/// points are clipped into the box before evaluation; contraction and shrink points are
/// convex combinations of box points, so the simplex never leaves the box. Converges when
/// both the vertex spread and the objective spread fall to the tolerance.
pub fn optimize_nelder_mead<T: Scalar>(
    objective: &dyn Objective<T>,
    config: &OptimizerConfig<T>,
) -> Result<OptimizerReport<T>, OptimizeError> {
    let problem = Problem::new(objective, config)?;
    let p = &config.params.nelder_mead;
    let m = problem.dim;
    let tol = config.tolerance;

    let x0 = problem.equal_point();
    let step = p.initial_step * problem.span();
    let mut simplex = vec![x0.clone()];
    for j in 0..m {
        let mut v = x0.clone();
        v[j] = if v[j] + step <= problem.hi { v[j] + step } else { v[j] - step };
        simplex.push(v);
    }
    let mut values = problem.values(&simplex)?;
    let mut incumbent = Incumbent::new(x0, values[0]);

    let point = |from: &[T], to: &[T], coef: T| -> Vec<T> {
        let mut x: Vec<T> = from.iter().zip(to).map(|(&c, &t)| c + coef * (t - c)).collect();
        problem.project(&mut x);
        x
    };

    let mut converged = false;
    let mut iteration = 0;
    loop {
        sort_simplex(&mut simplex, &mut values);
        incumbent.offer(iteration, &simplex[0], values[0]);

        let x_spread = simplex[1..].iter().fold(T::zero(), |acc, v| {
            v.iter().zip(&simplex[0]).fold(acc, |a, (&x, &b)| a.max((x - b).abs()))
        });
        let f_spread = values[1..]
            .iter()
            .fold(T::zero(), |acc, &f| acc.max((f - values[0]).abs()));
        if x_spread <= tol && f_spread <= tol {
            converged = true;
            break;
        }
        if iteration >= config.max_iterations {
            break;
        }
        iteration += 1;

        let worst = m;
        let mut centroid = vec![T::zero(); m];
        for v in &simplex[..m] {
            for (c, &x) in centroid.iter_mut().zip(v) {
                *c += x;
            }
        }
        let inv = T::one() / T::from_count(m);
        centroid.iter_mut().for_each(|c| *c *= inv);

        let reflected = point(&centroid, &simplex[worst], -p.reflection);
        let f_r = problem.value(&reflected)?;

        if f_r < values[0] {
            let expanded = point(&centroid, &simplex[worst], -p.reflection * p.expansion);
            let f_e = problem.value(&expanded)?;
            if f_e < f_r {
                simplex[worst] = expanded;
                values[worst] = f_e;
            } else {
                simplex[worst] = reflected;
                values[worst] = f_r;
            }
            continue;
        }
        if f_r < values[m - 1] {
            simplex[worst] = reflected;
            values[worst] = f_r;
            continue;
        }

        let (candidate, accept_below) = if f_r < values[worst] {
            (point(&centroid, &reflected, p.contraction), f_r)
        } else {
            (point(&centroid, &simplex[worst], p.contraction), values[worst])
        };
        let f_c = problem.value(&candidate)?;
        if f_c <= accept_below {
            simplex[worst] = candidate;
            values[worst] = f_c;
            continue;
        }

        let best = simplex[0].clone();
        for v in simplex.iter_mut().skip(1) {
            for (x, &b) in v.iter_mut().zip(&best) {
                *x = b + p.shrink * (*x - b);
            }
        }
        let shrunk = problem.values(&simplex[1..])?;
        values[1..].copy_from_slice(&shrunk);
    }

    Ok(incumbent.into_report(Method::NelderMead, config, &problem, iteration, converged))
}

/// Stable sort of vertices by objective value.
fn sort_simplex<T: Scalar>(simplex: &mut Vec<Vec<T>>, values: &mut Vec<T>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite objective"));
    *simplex = order.iter().map(|&i| std::mem::take(&mut simplex[i])).collect();
    *values = order.iter().map(|&i| values[i]).collect();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::ValueFn;

    #[test]
    fn interior_and_bound_minima() {
        let obj = ValueFn(|x: &[f64]| (x[0] - 0.3).powi(2));
        let r = optimize_nelder_mead(&obj, &OptimizerConfig::new(1)).unwrap();
        assert!((r.best_weights[0] - 0.3).abs() < 1e-4, "{:?}", r.best_weights);
        assert!(r.converged);
        let obj = ValueFn(|x: &[f64]| (x[0] - 1.5).powi(2));
        let r = optimize_nelder_mead(&obj, &OptimizerConfig::new(1)).unwrap();
        assert_eq!(r.best_weights, vec![1.0]);
    }

    #[test]
    fn rosenbrock_in_box() {
        let obj = ValueFn(|x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let r = optimize_nelder_mead(&obj, &OptimizerConfig::new(2)).unwrap();
        assert!(r.best_objective < 1e-10, "{}", r.best_objective);
    }

    #[test]
    fn every_evaluated_point_stays_in_box() {
        use std::sync::Mutex;
        let seen = Mutex::new(Vec::new());
        let obj = ValueFn(|x: &[f64]| {
            seen.lock().unwrap().push(x.to_vec());
            x.iter().enumerate().map(|(j, v)| (v - 2.0 + 3.0 * (j % 2) as f64).powi(2)).sum()
        });
        let r = optimize_nelder_mead(&obj, &OptimizerConfig::new(4).with_max_iterations(500)).unwrap();
        assert!(seen.into_inner().unwrap().iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(r.best_weights, vec![1.0, 0.0, 1.0, 0.0]);
    }
}
