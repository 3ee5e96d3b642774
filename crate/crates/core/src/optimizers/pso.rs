//! Global-best particle swarm optimization.

use serde::{Deserialize, Serialize};

use super::{seeded_rng, unit, Incumbent, Method, Objective, OptimizeError, OptimizerConfig, OptimizerReport, Problem};
use crate::scalar::{clamp, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(deny_unknown_fields)]
pub struct PsoParams<T> {
    pub swarm_size: usize,
    pub inertia: T,
    pub cognitive: T,
    pub social: T,
    /// Stop once the global best has not improved by more than the tolerance for this many
    /// iterations; 0 disables the rule.
    pub stagnation_window: u64,
}

impl<T: Scalar> Default for PsoParams<T> {
    fn default() -> Self {
        Self {
            swarm_size: 300,
            inertia: T::lit(0.729),
            cognitive: T::lit(1.49445),
            social: T::lit(1.49445),
            stagnation_window: 250,
        }
    }
}

/// Synchronous global-best PSO. Particle 0 starts at the equal-weights point, the rest
/// uniformly in the box. Each iteration moves every particle, evaluates the swarm and then
/// updates personal and global bests in particle order.
pub fn optimize_pso<T: Scalar>(
    objective: &dyn Objective<T>,
    config: &OptimizerConfig<T>,
) -> Result<OptimizerReport<T>, OptimizeError> {
    let problem = Problem::new(objective, config)?;
    let params = &config.params.pso;
    let (lo, hi, span) = (problem.lo, problem.hi, problem.span());
    let mut rng = seeded_rng(config.seed);

    let mut positions: Vec<Vec<T>> = (0..params.swarm_size)
        .map(|i| {
            if i == 0 {
                problem.equal_point()
            } else {
                (0..problem.dim).map(|_| lo + unit::<T>(&mut rng) * span).collect()
            }
        })
        .collect();
    let mut velocities: Vec<Vec<T>> = positions
        .iter()
        .map(|x| {
            x.iter()
                .map(|&xj| (lo - xj) + unit::<T>(&mut rng) * span)
                .collect()
        })
        .collect();

    let values = problem.values(&positions)?;
    let mut personal_best = positions.clone();
    let mut personal_best_f = values;
    let mut global = argmin(&personal_best_f);
    let mut incumbent = Incumbent::new(personal_best[global].clone(), personal_best_f[global]);

    let mut last_progress = 0;
    let mut converged = false;
    let mut iteration = 0;
    while iteration < config.max_iterations {
        iteration += 1;
        let leader = personal_best[global].clone();
        for ((x, v), pbest) in positions.iter_mut().zip(&mut velocities).zip(&personal_best) {
            for j in 0..problem.dim {
                let r1: T = unit(&mut rng);
                let r2: T = unit(&mut rng);
                let vj = params.inertia * v[j]
                    + params.cognitive * r1 * (pbest[j] - x[j])
                    + params.social * r2 * (leader[j] - x[j]);
                v[j] = clamp(vj, -span, span);
                x[j] = clamp(x[j] + v[j], lo, hi);
            }
        }

        let values = problem.values(&positions)?;
        for (i, f) in values.into_iter().enumerate() {
            if f < personal_best_f[i] {
                personal_best_f[i] = f;
                personal_best[i].clone_from(&positions[i]);
            }
        }
        let previous = incumbent.f;
        global = argmin(&personal_best_f);
        incumbent.offer(iteration, &personal_best[global], personal_best_f[global]);
        if previous - incumbent.f > config.tolerance {
            last_progress = iteration;
        }
        if params.stagnation_window > 0 && iteration - last_progress >= params.stagnation_window {
            converged = true;
            break;
        }
    }

    Ok(incumbent.into_report(Method::Pso, config, &problem, iteration, converged))
}

/// Index of the smallest value; the first one on ties.
pub(crate) fn argmin<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizers::{ValueFn, ValueGradFn};

    fn small(dim: usize, seed: u64) -> OptimizerConfig<f64> {
        let mut c = OptimizerConfig::new(dim).with_seed(seed).with_max_iterations(300);
        c.params.pso.swarm_size = 40;
        c
    }

    #[test]
    fn interior_and_bound_minima() {
        let obj = ValueFn(|x: &[f64]| (x[0] - 0.3).powi(2));
        let r = optimize_pso(&obj, &small(1, 1)).unwrap();
        assert!((r.best_weights[0] - 0.3).abs() < 1e-3, "{:?}", r.best_weights);
        let obj = ValueFn(|x: &[f64]| (x[0] - 1.5).powi(2));
        let r = optimize_pso(&obj, &small(1, 1)).unwrap();
        assert_eq!(r.best_weights, vec![1.0]);
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let obj = ValueGradFn(
            |x: &[f64]| x.iter().enumerate().map(|(j, v)| (v - 0.1 * j as f64).powi(2)).sum(),
            |_: &[f64], _: &mut [f64]| {},
        );
        let a = optimize_pso(&obj, &small(4, 42)).unwrap();
        let b = optimize_pso(&obj, &small(4, 42)).unwrap();
        assert_eq!(a, b);
        let c = optimize_pso(&obj, &small(4, 43)).unwrap();
        assert_ne!(a.best_weights, c.best_weights);
    }

    #[test]
    fn stagnation_stops_early() {
        let obj = ValueFn(|_: &[f64]| 1.0);
        let mut c = small(2, 0);
        c.params.pso.stagnation_window = 5;
        let r = optimize_pso(&obj, &c).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 5);
        assert_eq!(r.function_evaluations, 40 * 6);
    }

    #[test]
    fn argmin_prefers_first() {
        assert_eq!(argmin(&[3.0, 1.0, 1.0]), 1);
    }
}
