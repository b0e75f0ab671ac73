//! Alternating design of trigger and estimator bias, the symmetric baseline,
//! and the convergence diagnostics used to monitor the outer iteration.

use serde::{Deserialize, Serialize};

use crate::density::update_alpha;
use crate::dp::{bellman_backward, cost_of, AlphaMap, Policy, ValueTable};
use crate::error::{Error, Result};
use crate::instance::Instance;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_ALPHA0: f64 = 0.1;

/// Relative cost increase between passes that is reported as an error.
pub const COST_INCREASE_LIMIT: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// `J(f^i, α^i)`.
    pub cost: Vec<f64>,
    /// `|α^{i+1} − α^i|_∞`; one entry per bias update.
    pub alpha_delta: Vec<f64>,
    /// `|β^i|_∞` with `β^i` the scaled bias map of pass `i`.
    pub lyapunov: Vec<f64>,
    /// Number of null-event `(k, τ)` pairs in each bias update.
    pub degenerate_flags: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CodesignResult {
    /// Optimal trigger for `alpha`.
    pub policy: Policy,
    pub alpha: AlphaMap,
    pub value: ValueTable,
    /// `J(policy, alpha)`.
    pub cost: f64,
    pub trace: IterationTrace,
    pub converged: bool,
    /// Number of bias updates performed.
    pub iterations: usize,
}

/// Alternates `bellman_backward` and `update_alpha` from `alpha0` until the
/// bias map moves less than `tol` in sup norm, or `max_iter` updates ran.
///
/// The returned policy is re-optimized for the final bias map, so the pair is
/// consistent and `cost` is its exact quadrature cost.
pub fn iterate(
    inst: &Instance,
    alpha0: &AlphaMap,
    tol: f64,
    max_iter: usize,
) -> Result<CodesignResult> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be > 0")));
    }
    let alpha0 = AlphaMap::from_values(alpha0.horizon(), alpha0.values().to_vec())?;
    let a = inst.spec().a;
    let mut trace = IterationTrace::default();
    let mut alpha = alpha0;
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let (policy, value) = bellman_backward(&alpha, inst)?;
        let cost = cost_of(&value, inst.init_error());
        if let Some(&prev) = trace.cost.last() {
            if cost > prev + COST_INCREASE_LIMIT * prev.abs() {
                return Err(Error::NumericalInconsistency(format!(
                    "cost rose from {prev} to {cost} at pass {}",
                    trace.cost.len()
                )));
            }
        }
        trace.cost.push(cost);
        trace
            .lyapunov
            .push(lyapunov(&beta_transform(&alpha, a).values));
        if converged || iterations >= max_iter {
            return Ok(CodesignResult {
                policy,
                alpha,
                value,
                cost,
                trace,
                converged,
                iterations,
            });
        }
        let update = update_alpha(&policy, inst)?;
        let delta = update.alpha.sup_distance(&alpha);
        trace.alpha_delta.push(delta);
        trace.degenerate_flags.push(update.degenerate.len());
        alpha = update.alpha;
        iterations += 1;
        converged = delta < tol;
    }
}

/// Trigger optimized for the plain linear predictor (`α ≡ 0`) and its cost.
pub fn symmetric_baseline(inst: &Instance) -> Result<(Policy, f64)> {
    let (policy, value) = bellman_backward(&AlphaMap::zeros(inst.horizon()), inst)?;
    Ok((policy, cost_of(&value, inst.init_error())))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Beta {
    pub values: Vec<f64>,
    /// Some entry overflowed and was saturated to `±f64::MAX`.
    pub saturated: bool,
}

/// `β_{k,τ} = α_{k,τ} / a^k`.
pub fn beta_transform(alpha: &AlphaMap, a: f64) -> Beta {
    let mut saturated = false;
    let mut values = Vec::with_capacity(alpha.values().len());
    for k in 0..alpha.horizon() {
        let scale = a.powi(k as i32);
        for tau in -1..k as isize {
            let v = alpha.get(k, tau) / scale;
            values.push(if v.is_finite() {
                v
            } else {
                saturated = true;
                if v.is_nan() {
                    0.0
                } else {
                    v.signum() * f64::MAX
                }
            });
        }
    }
    Beta { values, saturated }
}

/// `V(β) = |β|_∞`.
pub fn lyapunov(beta: &[f64]) -> f64 {
    beta.iter().fold(0.0, |m, v| m.max(v.abs()))
}
