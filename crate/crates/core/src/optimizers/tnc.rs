//! Truncated Newton: Newton steps from a truncated conjugate-gradient inner solve that only
//! touches the Hessian through finite-difference Hessian-vector products.

use serde::{Deserialize, Serialize};

use super::{projected_backtracking, Incumbent, Method, Objective, OptimizeError, OptimizerConfig, OptimizerReport, Problem};
use crate::scalar::{dot, norm2, norm_inf, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(deny_unknown_fields)]
pub struct TncParams<T> {
    /// Inner CG iteration cap; `None` means `min(2m, 50)`.
    pub max_cg_iterations: Option<usize>,
    pub armijo: T,
    pub max_backtracks: u32,
}

impl<T: Scalar> Default for TncParams<T> {
    fn default() -> Self {
        Self {
            max_cg_iterations: None,
            armijo: T::lit(1e-4),
            max_backtracks: 60,
        }
    }
}

/// Truncated Newton from the equal-weights point.
///
/// Variables at a bound whose gradient points out of the box are frozen for the iteration and
/// released as soon as the gradient turns inward. The inner CG stops at the iteration cap, on
/// a residual below `min(0.5, √‖g‖)·‖g‖`, or on non-positive curvature. Stops when the
/// projected gradient or the accepted step (infinity norm) reaches the tolerance.
pub fn optimize_tnc<T: Scalar>(
    objective: &dyn Objective<T>,
    config: &OptimizerConfig<T>,
) -> Result<OptimizerReport<T>, OptimizeError> {
    let problem = Problem::new(objective, config)?;
    let params = &config.params.tnc;
    let m = problem.dim;
    let max_cg = params.max_cg_iterations.unwrap_or_else(|| (2 * m).min(50)).max(1);

    let mut x = problem.equal_point();
    let mut f = problem.value(&x)?;
    let mut g = vec![T::zero(); m];
    problem.gradient(&x, &mut g)?;
    let mut incumbent = Incumbent::new(x.clone(), f);

    let mut converged = false;
    let mut iteration = 0;
    while iteration < config.max_iterations {
        if problem.projected_gradient_norm(&x, &g) <= config.tolerance {
            converged = true;
            break;
        }
        iteration += 1;

        let free = problem.free_mask(&x, &g);
        let steepest: Vec<T> = g.iter().zip(&free).map(|(&gj, &fr)| if fr { -gj } else { T::zero() }).collect();
        let newton = truncated_cg(&problem, &x, &g, &free, &steepest, max_cg)?;

        let mut accepted = None;
        for direction in [&newton, &steepest] {
            let scale = norm_inf(direction);
            if !(scale > T::zero()) || dot(&g, direction) >= T::zero() {
                continue;
            }
            let initial_step = T::one().min(problem.span() / scale);
            accepted = projected_backtracking(
                &problem,
                &x,
                f,
                &g,
                direction,
                initial_step,
                params.armijo,
                params.max_backtracks,
            )?;
            if accepted.is_some() {
                break;
            }
        }
        let Some((x_new, f_new)) = accepted else {
            break;
        };

        let step = x_new.iter().zip(&x).fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));
        problem.gradient(&x_new, &mut g)?;
        x = x_new;
        f = f_new;
        incumbent.offer(iteration, &x, f);
        if step <= config.tolerance {
            converged = true;
            break;
        }
    }

    Ok(incumbent.into_report(Method::Tnc, config, &problem, iteration, converged))
}

/// Approximately solves `H p = -g` on the free variables with CG.
fn truncated_cg<T: Scalar>(
    problem: &Problem<'_, T>,
    x: &[T],
    g: &[T],
    free: &[bool],
    steepest: &[T],
    max_iterations: usize,
) -> Result<Vec<T>, OptimizeError> {
    let m = x.len();
    let g_norm = norm2(steepest);
    let forcing = T::lit(0.5).min(g_norm.sqrt());
    let x_norm = norm2(x);

    let mut p = vec![T::zero(); m];
    let mut r = steepest.to_vec();
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    let mut probe = vec![T::zero(); m];
    let mut g_probe = vec![T::zero(); m];

    for i in 0..max_iterations {
        let h = T::epsilon().sqrt() * (T::one() + x_norm) / norm2(&d);
        for j in 0..m {
            probe[j] = x[j] + h * d[j];
        }
        problem.gradient(&probe, &mut g_probe)?;
        let hd: Vec<T> = (0..m)
            .map(|j| if free[j] { (g_probe[j] - g[j]) / h } else { T::zero() })
            .collect();
        let curvature = dot(&d, &hd);
        if curvature <= T::epsilon() * dot(&d, &d) {
            if i == 0 {
                p.copy_from_slice(steepest);
            }
            break;
        }
        let alpha = rr / curvature;
        for j in 0..m {
            p[j] += alpha * d[j];
            r[j] -= alpha * hd[j];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= forcing * g_norm {
            break;
        }
        let beta = rr_new / rr;
        for j in 0..m {
            d[j] = r[j] + beta * d[j];
        }
        rr = rr_new;
    }
    Ok(p)
}
