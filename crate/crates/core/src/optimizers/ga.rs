//! Real-coded genetic algorithm.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::pso::argmin;
use super::{seeded_rng, unit, Incumbent, Method, Objective, OptimizeError, OptimizerConfig, OptimizerReport, Problem};
use crate::scalar::{clamp, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(deny_unknown_fields)]
pub struct GaParams<T> {
    pub population: usize,
    pub tournament_size: usize,
    pub crossover_rate: T,
    /// Per-gene mutation probability; `None` means `1/m`.
    pub mutation_rate: Option<T>,
    /// Standard deviation of the Gaussian mutation, as a fraction of the box width.
    pub mutation_sigma: T,
    pub max_generations: u64,
    /// Stop after this many generations without an improvement larger than the tolerance;
    /// 0 disables the rule.
    pub stagnation_window: u64,
}

impl<T: Scalar> Default for GaParams<T> {
    fn default() -> Self {
        Self {
            population: 100,
            tournament_size: 3,
            crossover_rate: T::lit(0.9),
            mutation_rate: None,
            mutation_sigma: T::lit(0.1),
            max_generations: 1000,
            stagnation_window: 100,
        }
    }
}

/// Generational GA: tournament selection, uniform crossover, per-gene Gaussian mutation
/// clipped to the box, and a single elite carried over unchanged. Individual 0 of the first
/// generation is the equal-weights point.
pub fn optimize_ga<T: Scalar>(
    objective: &dyn Objective<T>,
    config: &OptimizerConfig<T>,
) -> Result<OptimizerReport<T>, OptimizeError> {
    let problem = Problem::new(objective, config)?;
    let params = &config.params.ga;
    let (lo, hi, span) = (problem.lo, problem.hi, problem.span());
    let mutation_rate = params
        .mutation_rate
        .unwrap_or_else(|| T::one() / T::from_count(problem.dim));
    let sigma = params.mutation_sigma * span;
    let mut rng = seeded_rng(config.seed);

    let mut population: Vec<Vec<T>> = (0..params.population)
        .map(|i| {
            if i == 0 {
                problem.equal_point()
            } else {
                (0..problem.dim).map(|_| lo + unit::<T>(&mut rng) * span).collect()
            }
        })
        .collect();
    let mut fitness = problem.values(&population)?;
    let mut best = argmin(&fitness);
    let mut incumbent = Incumbent::new(population[best].clone(), fitness[best]);

    let generations = config.max_iterations.min(params.max_generations);
    let mut last_progress = 0;
    let mut converged = false;
    let mut generation = 0;
    while generation < generations {
        generation += 1;
        let mut offspring = Vec::with_capacity(params.population);
        while offspring.len() < params.population - 1 {
            let a = tournament(&fitness, params.tournament_size, &mut rng);
            let b = tournament(&fitness, params.tournament_size, &mut rng);
            let (mut c1, mut c2) = (population[a].clone(), population[b].clone());
            if unit::<T>(&mut rng) < params.crossover_rate {
                for j in 0..problem.dim {
                    if rng.random::<bool>() {
                        std::mem::swap(&mut c1[j], &mut c2[j]);
                    }
                }
            }
            for child in [&mut c1, &mut c2] {
                for gene in child.iter_mut() {
                    if unit::<T>(&mut rng) < mutation_rate {
                        let z: f64 = rng.sample(StandardNormal);
                        *gene = clamp(*gene + sigma * T::lit(z), lo, hi);
                    }
                }
            }
            offspring.push(c1);
            if offspring.len() < params.population - 1 {
                offspring.push(c2);
            }
        }
        let offspring_fitness = problem.values(&offspring)?;

        let elite = population.swap_remove(best);
        let elite_f = fitness[best];
        population.clear();
        population.push(elite);
        population.extend(offspring);
        fitness.clear();
        fitness.push(elite_f);
        fitness.extend(offspring_fitness);

        let previous = incumbent.f;
        best = argmin(&fitness);
        incumbent.offer(generation, &population[best], fitness[best]);
        if previous - incumbent.f > config.tolerance {
            last_progress = generation;
        }
        if params.stagnation_window > 0 && generation - last_progress >= params.stagnation_window {
            converged = true;
            break;
        }
    }

    Ok(incumbent.into_report(Method::Ga, config, &problem, generation, converged))
}

/// Draws `size` contestants uniformly with replacement; the fittest wins, lowest index on ties.
fn tournament<T: Scalar>(fitness: &[T], size: usize, rng: &mut ChaCha8Rng) -> usize {
    let mut winner = rng.random_range(0..fitness.len());
    for _ in 1..size {
        let c = rng.random_range(0..fitness.len());
        if fitness[c] < fitness[winner] || (fitness[c] == fitness[winner] && c < winner) {
            winner = c;
        }
    }
    winner
}
