//! Bound-constrained weight search over the box `[lower_bound, upper_bound]^m`.
//!
//! Every method returns an [`OptimizerReport`] whose `best_objective` is the objective
//! evaluated at `best_weights` (never an estimate), whose weights lie inside the box, and
//! whose trace of best-so-far values is non-increasing. Deterministic methods start at the
//! equal-weights point `1/m`; the population methods include it in their first generation.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{clamp, Scalar};

mod equal;
mod ga;
mod lbfgsb;
mod nelder_mead;
mod pso;
mod tnc;
mod trust_region;

pub use equal::optimize_equal;
pub use ga::{optimize_ga, GaParams};
pub use lbfgsb::{optimize_lbfgsb, LbfgsbParams};
pub use nelder_mead::{optimize_nelder_mead, NelderMeadParams};
pub use pso::{optimize_pso, PsoParams};
pub use tnc::{optimize_tnc, TncParams};
pub use trust_region::{optimize_trust_region, TrustRegionParams};

#[derive(Debug, Error)]
pub enum OptimizeError {
    #[error("objective is not finite ({value}) at {point:?}")]
    NonFinite { value: f64, point: Vec<f64> },
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown optimizer setting `{0}`")]
    UnknownSetting(String),
    #[error("invalid value `{value}` for optimizer setting `{key}`: {reason}")]
    InvalidSetting {
        key: String,
        value: String,
        reason: String,
    },
}

/// A function to minimize, with an optional analytic gradient.
///
/// `value` must be pure. Implementations without an analytic gradient get central finite
/// differences from the optimizers that need one.
pub trait Objective<T: Scalar>: Sync {
    /// Dimension the objective is defined for, when it is fixed.
    fn dimension(&self) -> Option<usize> {
        None
    }

    fn value(&self, x: &[T]) -> T;

    fn has_gradient(&self) -> bool {
        false
    }

    /// Writes the gradient at `x` into `out`. Only called when `has_gradient` is true.
    fn gradient(&self, _x: &[T], _out: &mut [T]) {
        unreachable!("objective has no analytic gradient")
    }
}

/// Objective from a value closure.
pub struct ValueFn<F>(pub F);

impl<T: Scalar, F: Fn(&[T]) -> T + Sync> Objective<T> for ValueFn<F> {
    fn value(&self, x: &[T]) -> T {
        (self.0)(x)
    }
}

/// Objective from a value closure and a gradient closure.
pub struct ValueGradFn<F, G>(pub F, pub G);

impl<T, F, G> Objective<T> for ValueGradFn<F, G>
where
    T: Scalar,
    F: Fn(&[T]) -> T + Sync,
    G: Fn(&[T], &mut [T]) + Sync,
{
    fn value(&self, x: &[T]) -> T {
        (self.0)(x)
    }

    fn has_gradient(&self) -> bool {
        true
    }

    fn gradient(&self, x: &[T], out: &mut [T]) {
        (self.1)(x, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Equal,
    Pso,
    Ga,
    NelderMead,
    TrustRegion,
    Lbfgsb,
    Tnc,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Equal,
        Method::TrustRegion,
        Method::Pso,
        Method::Ga,
        Method::Lbfgsb,
        Method::NelderMead,
        Method::Tnc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Equal => "equal",
            Method::Pso => "pso",
            Method::Ga => "ga",
            Method::NelderMead => "nelder-mead",
            Method::TrustRegion => "trust-region",
            Method::Lbfgsb => "lbfgsb",
            Method::Tnc => "tnc",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, Method::Pso | Method::Ga)
    }

    pub fn uses_gradient(self) -> bool {
        matches!(self, Method::TrustRegion | Method::Lbfgsb | Method::Tnc)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                format!(
                    "unknown method `{s}` (expected one of: {})",
                    Method::ALL.map(Method::name).join(", ")
                )
            })
    }
}

/// Per-method tuning; every field can be overridden with `method.field=value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(deny_unknown_fields)]
pub struct MethodParams<T> {
    pub pso: PsoParams<T>,
    pub ga: GaParams<T>,
    pub nelder_mead: NelderMeadParams<T>,
    pub trust_region: TrustRegionParams<T>,
    pub lbfgsb: LbfgsbParams<T>,
    pub tnc: TncParams<T>,
}

impl<T: Scalar> Default for MethodParams<T> {
    fn default() -> Self {
        Self {
            pso: PsoParams::default(),
            ga: GaParams::default(),
            nelder_mead: NelderMeadParams::default(),
            trust_region: TrustRegionParams::default(),
            lbfgsb: LbfgsbParams::default(),
            tnc: TncParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig<T> {
    pub dimension: usize,
    pub lower_bound: T,
    pub upper_bound: T,
    pub max_iterations: u64,
    pub tolerance: T,
    pub seed: u64,
    pub params: MethodParams<T>,
}

impl<T: Scalar> OptimizerConfig<T> {
    /// Defaults: box `[0, 1]`, 10000 iterations, tolerance `1e-8`, seed 0.
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            lower_bound: T::zero(),
            upper_bound: T::one(),
            max_iterations: 10_000,
            tolerance: T::lit(1e-8),
            seed: 0,
            params: MethodParams::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: u64) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_bounds(mut self, lower: T, upper: T) -> Self {
        self.lower_bound = lower;
        self.upper_bound = upper;
        self
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |msg: &str| Err(OptimizeError::InvalidConfig(msg.to_string()));
        if self.dimension == 0 {
            return bad("dimension must be at least 1");
        }
        if !(self.lower_bound.is_finite() && self.upper_bound.is_finite())
            || self.lower_bound >= self.upper_bound
        {
            return bad("lower_bound must be finite and below upper_bound");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.tolerance > T::zero()) {
            return bad("tolerance must be positive");
        }
        let p = &self.params;
        if p.pso.swarm_size == 0 {
            return bad("pso.swarm_size must be at least 1");
        }
        if p.ga.population < 2 || p.ga.tournament_size == 0 {
            return bad("ga.population must be at least 2 and ga.tournament_size at least 1");
        }
        if p.lbfgsb.history == 0 {
            return bad("lbfgsb.history must be at least 1");
        }
        Ok(())
    }

    /// Applies a `key=value` override, where `key` is a dotted path such as
    /// `pso.swarm_size` or `tolerance`. The value is read as JSON when it parses as JSON.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), OptimizeError> {
        let invalid = |reason: String| OptimizeError::InvalidSetting {
            key: key.to_string(),
            value: value.to_string(),
            reason,
        };
        if key == "dimension" {
            return Err(invalid("dimension is fixed by the data".into()));
        }
        let mut doc = serde_json::to_value(&*self).expect("config serializes");
        let mut parts: Vec<&str> = key.split('.').collect();
        if doc.get(parts[0]).is_none() {
            parts.insert(0, "params");
        }
        let mut slot = &mut doc;
        for part in parts {
            slot = match slot.as_object_mut().and_then(|o| o.get_mut(part)) {
                Some(v) => v,
                None => return Err(OptimizeError::UnknownSetting(key.to_string())),
            };
        }
        if slot.is_object() {
            return Err(OptimizeError::UnknownSetting(key.to_string()));
        }
        *slot = serde_json::from_str(value)
            .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        *self = serde_json::from_value(doc).map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct TracePoint<T> {
    pub iteration: u64,
    pub best_objective: T,
}

/// Result of one optimizer run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct OptimizerReport<T> {
    pub method: Method,
    pub seed: u64,
    pub config: OptimizerConfig<T>,
    pub best_weights: Vec<T>,
    pub best_objective: T,
    pub function_evaluations: u64,
    pub gradient_evaluations: u64,
    pub iterations: u64,
    pub converged: bool,
    /// `(iteration, best objective so far)` at the start, at every improvement and at the end.
    pub trace: Vec<TracePoint<T>>,
}

impl<T: Scalar> OptimizerReport<T> {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// The trace as CSV `iteration,best_objective`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,best_objective\n");
        for p in &self.trace {
            out.push_str(&format!("{},{}\n", p.iteration, p.best_objective));
        }
        out
    }
}

/// Runs `method` on `objective`.
pub fn optimize<T: Scalar>(
    method: Method,
    objective: &dyn Objective<T>,
    config: &OptimizerConfig<T>,
) -> Result<OptimizerReport<T>, OptimizeError> {
    match method {
        Method::Equal => optimize_equal(objective, config),
        Method::Pso => optimize_pso(objective, config),
        Method::Ga => optimize_ga(objective, config),
        Method::NelderMead => optimize_nelder_mead(objective, config),
        Method::TrustRegion => optimize_trust_region(objective, config),
        Method::Lbfgsb => optimize_lbfgsb(objective, config),
        Method::Tnc => optimize_tnc(objective, config),
    }
}

/// Counted, finiteness-checked access to the objective plus box geometry.
pub(crate) struct Problem<'a, T: Scalar> {
    objective: &'a dyn Objective<T>,
    pub lo: T,
    pub hi: T,
    pub dim: usize,
    fevals: AtomicU64,
    gevals: AtomicU64,
}

impl<'a, T: Scalar> Problem<'a, T> {
    pub fn new(objective: &'a dyn Objective<T>, config: &OptimizerConfig<T>) -> Result<Self, OptimizeError> {
        config.validate()?;
        if let Some(d) = objective.dimension() {
            if d != config.dimension {
                return Err(OptimizeError::InvalidConfig(format!(
                    "config dimension {} does not match objective dimension {d}",
                    config.dimension
                )));
            }
        }
        Ok(Self {
            objective,
            lo: config.lower_bound,
            hi: config.upper_bound,
            dim: config.dimension,
            fevals: AtomicU64::new(0),
            gevals: AtomicU64::new(0),
        })
    }

    pub fn span(&self) -> T {
        self.hi - self.lo
    }

    pub fn value(&self, x: &[T]) -> Result<T, OptimizeError> {
        self.fevals.fetch_add(1, Ordering::Relaxed);
        let f = self.objective.value(x);
        if !f.is_finite() {
            return Err(OptimizeError::NonFinite {
                value: f.as_f64(),
                point: x.iter().map(|v| v.as_f64()).collect(),
            });
        }
        Ok(f)
    }

    /// Evaluates all points, possibly in parallel; results and errors are reported in index
    /// order so the outcome does not depend on scheduling.
    pub fn values(&self, xs: &[Vec<T>]) -> Result<Vec<T>, OptimizeError> {
        let raw: Vec<T> = xs.par_iter().map(|x| self.objective.value(x)).collect();
        self.fevals.fetch_add(xs.len() as u64, Ordering::Relaxed);
        if let Some(i) = raw.iter().position(|f| !f.is_finite()) {
            return Err(OptimizeError::NonFinite {
                value: raw[i].as_f64(),
                point: xs[i].iter().map(|v| v.as_f64()).collect(),
            });
        }
        Ok(raw)
    }

    /// Analytic gradient when available, otherwise central differences.
    pub fn gradient(&self, x: &[T], out: &mut [T]) -> Result<(), OptimizeError> {
        if self.objective.has_gradient() {
            self.gevals.fetch_add(1, Ordering::Relaxed);
            self.objective.gradient(x, out);
        } else {
            let mut probe = x.to_vec();
            let step = T::epsilon().cbrt();
            for j in 0..x.len() {
                let h = step * (T::one() + x[j].abs());
                probe[j] = x[j] + h;
                let up = self.value(&probe)?;
                probe[j] = x[j] - h;
                let down = self.value(&probe)?;
                probe[j] = x[j];
                out[j] = (up - down) / (h + h);
            }
        }
        if let Some(j) = out.iter().position(|g| !g.is_finite()) {
            return Err(OptimizeError::NonFinite {
                value: out[j].as_f64(),
                point: x.iter().map(|v| v.as_f64()).collect(),
            });
        }
        Ok(())
    }

    pub fn project(&self, x: &mut [T]) {
        for v in x {
            *v = clamp(*v, self.lo, self.hi);
        }
    }

    /// The equal-weights point `1/m`, projected into the box.
    pub fn equal_point(&self) -> Vec<T> {
        let mut x = vec![T::one() / T::from_count(self.dim); self.dim];
        self.project(&mut x);
        x
    }

    /// Infinity norm of `P(x - g) - x`.
    pub fn projected_gradient_norm(&self, x: &[T], g: &[T]) -> T {
        x.iter().zip(g).fold(T::zero(), |acc, (&xi, &gi)| {
            acc.max((clamp(xi - gi, self.lo, self.hi) - xi).abs())
        })
    }

    /// Variables not held at a bound by a gradient pointing out of the box.
    pub fn free_mask(&self, x: &[T], g: &[T]) -> Vec<bool> {
        x.iter()
            .zip(g)
            .map(|(&xi, &gi)| !((xi <= self.lo && gi > T::zero()) || (xi >= self.hi && gi < T::zero())))
            .collect()
    }

    pub fn function_evaluations(&self) -> u64 {
        self.fevals.load(Ordering::Relaxed)
    }

    pub fn gradient_evaluations(&self) -> u64 {
        self.gevals.load(Ordering::Relaxed)
    }
}

/// Best point seen so far and the monotone trace of its value.
pub(crate) struct Incumbent<T> {
    pub x: Vec<T>,
    pub f: T,
    trace: Vec<TracePoint<T>>,
}

impl<T: Scalar> Incumbent<T> {
    pub fn new(x: Vec<T>, f: T) -> Self {
        Self {
            x,
            f,
            trace: vec![TracePoint {
                iteration: 0,
                best_objective: f,
            }],
        }
    }

    /// Replaces the incumbent when `f` is strictly better. Returns whether it did.
    pub fn offer(&mut self, iteration: u64, x: &[T], f: T) -> bool {
        if f < self.f {
            self.x.clear();
            self.x.extend_from_slice(x);
            self.f = f;
            self.trace.push(TracePoint {
                iteration,
                best_objective: f,
            });
            true
        } else {
            false
        }
    }

    pub fn into_report(
        mut self,
        method: Method,
        config: &OptimizerConfig<T>,
        problem: &Problem<'_, T>,
        iterations: u64,
        converged: bool,
    ) -> OptimizerReport<T> {
        if self.trace.last().map(|p| p.iteration) != Some(iterations) {
            self.trace.push(TracePoint {
                iteration: iterations,
                best_objective: self.f,
            });
        }
        OptimizerReport {
            method,
            seed: config.seed,
            config: config.clone(),
            best_weights: self.x,
            best_objective: self.f,
            function_evaluations: problem.function_evaluations(),
            gradient_evaluations: problem.gradient_evaluations(),
            iterations,
            converged,
            trace: self.trace,
        }
    }
}

/// The single random stream of a stochastic run.
pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw from `[0, 1)`; always consumes one `f64` so the stream is scalar-independent.
#[inline]
pub(crate) fn unit<T: Scalar>(rng: &mut ChaCha8Rng) -> T {
    T::lit(rng.random::<f64>())
}

/// Backtracking search along `direction` with projection onto the box; accepts the first
/// `α ∈ {α0, α0/2, ...}` with `f(P(x + αd)) ≤ f(x) + c · g·(P(x + αd) - x)`.
/// Returns the accepted point and its value, or `None` when no step decreased `f`.
pub(crate) fn projected_backtracking<T: Scalar>(
    problem: &Problem<'_, T>,
    x: &[T],
    f: T,
    g: &[T],
    direction: &[T],
    initial_step: T,
    armijo: T,
    max_backtracks: u32,
) -> Result<Option<(Vec<T>, T)>, OptimizeError> {
    let mut alpha = initial_step;
    let half = T::lit(0.5);
    let mut trial = vec![T::zero(); x.len()];
    for _ in 0..max_backtracks {
        for j in 0..x.len() {
            trial[j] = clamp(x[j] + alpha * direction[j], problem.lo, problem.hi);
        }
        let decrease: T = (0..x.len()).map(|j| g[j] * (trial[j] - x[j])).sum();
        if trial.iter().zip(x).all(|(a, b)| a == b) {
            return Ok(None);
        }
        let f_trial = problem.value(&trial)?;
        if f_trial < f && f_trial <= f + armijo * decrease {
            return Ok(Some((trial, f_trial)));
        }
        alpha *= half;
    }
    Ok(None)
}
