use super::{Incumbent, Method, Objective, OptimizeError, OptimizerConfig, OptimizerReport, Problem};
use crate::scalar::Scalar;

/// Equal-weights baseline: every weight is `1/m`. The objective is evaluated once so the
/// report carries the baseline's fitness; no search takes place.
pub fn optimize_equal<T: Scalar>(
    objective: &dyn Objective<T>,
    config: &OptimizerConfig<T>,
) -> Result<OptimizerReport<T>, OptimizeError> {
    let problem = Problem::new(objective, config)?;
    let x = problem.equal_point();
    let f = problem.value(&x)?;
    Ok(Incumbent::new(x, f).into_report(Method::Equal, config, &problem, 0, true))
}
