//! Limited-memory BFGS with bound constraints by gradient projection.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{projected_backtracking, Incumbent, Method, Objective, OptimizeError, OptimizerConfig, OptimizerReport, Problem};
use crate::scalar::{dot, norm_inf, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(deny_unknown_fields)]
pub struct LbfgsbParams<T> {
    /// Number of `(s, y)` correction pairs kept.
    pub history: usize,
    /// Sufficient-decrease constant of the projected backtracking search.
    pub armijo: T,
    pub max_backtracks: u32,
}

impl<T: Scalar> Default for LbfgsbParams<T> {
    fn default() -> Self {
        Self {
            history: 10,
            armijo: T::lit(1e-4),
            max_backtracks: 60,
        }
    }
}

struct Correction<T> {
    s: Vec<T>,
    y: Vec<T>,
    rho: T,
}

/// L-BFGS from the equal-weights point. The two-loop recursion runs on the variables not held
/// at a bound; the step is found by projected backtracking. Stops when the infinity norm of
/// the projected gradient reaches the tolerance.
pub fn optimize_lbfgsb<T: Scalar>(
    objective: &dyn Objective<T>,
    config: &OptimizerConfig<T>,
) -> Result<OptimizerReport<T>, OptimizeError> {
    let problem = Problem::new(objective, config)?;
    let params = &config.params.lbfgsb;
    let m = problem.dim;

    let mut x = problem.equal_point();
    let mut f = problem.value(&x)?;
    let mut g = vec![T::zero(); m];
    problem.gradient(&x, &mut g)?;
    let mut incumbent = Incumbent::new(x.clone(), f);
    let mut history: VecDeque<Correction<T>> = VecDeque::with_capacity(params.history);
    let mut g_new = vec![T::zero(); m];

    let mut converged = false;
    let mut iteration = 0;
    while iteration < config.max_iterations {
        if problem.projected_gradient_norm(&x, &g) <= config.tolerance {
            converged = true;
            break;
        }
        iteration += 1;

        let free = problem.free_mask(&x, &g);
        let mut direction = two_loop(&g, &free, &history);
        if dot(&g, &direction) >= T::zero() {
            history.clear();
            direction = g.iter().zip(&free).map(|(&gj, &fr)| if fr { -gj } else { T::zero() }).collect();
        }
        let initial_step = if history.is_empty() {
            T::one().min(problem.span() / norm_inf(&direction))
        } else {
            T::one()
        };

        let accepted = projected_backtracking(
            &problem,
            &x,
            f,
            &g,
            &direction,
            initial_step,
            params.armijo,
            params.max_backtracks,
        )?;
        let Some((x_new, f_new)) = accepted else {
            if history.is_empty() {
                break;
            }
            history.clear();
            continue;
        };

        problem.gradient(&x_new, &mut g_new)?;
        let s: Vec<T> = x_new.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = g_new.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::epsilon() * dot(&y, &y) {
            if history.len() == params.history {
                history.pop_front();
            }
            history.push_back(Correction { s, y, rho: T::one() / sy });
        }
        x = x_new;
        f = f_new;
        std::mem::swap(&mut g, &mut g_new);
        incumbent.offer(iteration, &x, f);
    }

    Ok(incumbent.into_report(Method::Lbfgsb, config, &problem, iteration, converged))
}

/// `-H g` restricted to the free variables, with `H` the L-BFGS inverse-Hessian estimate.
fn two_loop<T: Scalar>(g: &[T], free: &[bool], history: &VecDeque<Correction<T>>) -> Vec<T> {
    let masked_dot = |a: &[T], b: &[T]| -> T {
        (0..a.len()).filter(|&j| free[j]).map(|j| a[j] * b[j]).sum()
    };
    let mut q: Vec<T> = g.iter().zip(free).map(|(&gj, &fr)| if fr { gj } else { T::zero() }).collect();
    let mut alphas = Vec::with_capacity(history.len());
    for c in history.iter().rev() {
        let a = c.rho * masked_dot(&c.s, &q);
        for j in 0..q.len() {
            if free[j] {
                q[j] -= a * c.y[j];
            }
        }
        alphas.push(a);
    }
    let gamma = history
        .back()
        .map(|c| T::one() / (c.rho * dot(&c.y, &c.y)))
        .unwrap_or_else(T::one);
    q.iter_mut().for_each(|v| *v *= gamma);
    for (c, &a) in history.iter().zip(alphas.iter().rev()) {
        let b = c.rho * masked_dot(&c.y, &q);
        for j in 0..q.len() {
            if free[j] {
                q[j] += (a - b) * c.s[j];
            }
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::ValueGradFn;

    #[test]
    fn interior_and_bound_minima() {
        let obj = ValueGradFn(|x: &[f64]| (x[0] - 0.3).powi(2), |x: &[f64], g: &mut [f64]| g[0] = 2.0 * (x[0] - 0.3));
        let r = optimize_lbfgsb(&obj, &OptimizerConfig::new(1)).unwrap();
        assert!((r.best_weights[0] - 0.3).abs() < 1e-8, "{:?}", r.best_weights);
        assert!(r.converged);
        let obj = ValueGradFn(|x: &[f64]| (x[0] - 1.5).powi(2), |x: &[f64], g: &mut [f64]| g[0] = 2.0 * (x[0] - 1.5));
        let r = optimize_lbfgsb(&obj, &OptimizerConfig::new(1)).unwrap();
        assert_eq!(r.best_weights, vec![1.0]);
    }

    #[test]
    fn mixed_active_and_free_bounds() {
        // Minimizer (1, 0, 0.4): two coordinates pinned, one free.
        let target = [1.7, -0.3, 0.4];
        let obj = ValueGradFn(
            move |x: &[f64]| x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + x[0] * x[2],
            move |x: &[f64], g: &mut [f64]| {
                for j in 0..3 {
                    g[j] = 2.0 * (x[j] - target[j]);
                }
                g[0] += x[2];
                g[2] += x[0];
            },
        );
        let r = optimize_lbfgsb(&obj, &OptimizerConfig::new(3)).unwrap();
        assert!(r.converged);
        assert_eq!(r.best_weights[0], 1.0);
        assert_eq!(r.best_weights[1], 0.0);
        assert!((r.best_weights[2] + 0.1).abs() < 1e-8 || r.best_weights[2] == 0.0);
    }

    #[test]
    fn two_loop_without_history_is_steepest_descent() {
        let d = two_loop(&[1.0, -2.0, 3.0], &[true, false, true], &VecDeque::new());
        assert_eq!(d, vec![-1.0, 0.0, -3.0]);
    }
}
