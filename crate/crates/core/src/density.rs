//! Conditional-density recursions for the error `e_k` under a fixed trigger,
//! the bias-map update, and a forward evaluation of the design cost.
//!
//! For each last-update time `τ` the error density evolves on its own chain:
//! it starts from `φ_{e_0}` (τ = −1) or `φ_w` (τ = k−1 after a transmission
//! at k−1), is truncated to the silent region of the trigger, and is pushed
//! through `e' = a e + w`. Shapes are kept normalized and the probability of
//! each `(k, τ)` event is carried alongside.

use crate::dp::{half_bounds, neighbour_weight, silent_moment, AlphaMap, Policy, EMPTY};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::kernel::TransitionKernel;
use crate::model::{Grid, TabulatedDensity};

/// Keep-region masses below this are treated as null events.
pub const RHO_MIN: f64 = 1e-12;

/// Largest tolerated probability of leaving the grid in one prediction.
pub const OVERFLOW_LIMIT: f64 = 1e-6;

/// Density of `a e + w` for `e ~ d` and `w ~ noise` (same grid), renormalized.
pub fn predict(d: &TabulatedDensity, a: f64, noise: &TabulatedDensity) -> Result<TabulatedDensity> {
    if d.grid() != noise.grid() {
        return Err(Error::Domain("density and noise must share a grid".into()));
    }
    let kernel = TransitionKernel::new(a, noise);
    let (out, lost) = kernel.predict(d);
    if lost >= OVERFLOW_LIMIT {
        return Err(Error::GridOverflow {
            lost,
            limit: OVERFLOW_LIMIT,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Truncation {
    /// Silent part of `d` lumped onto the nodes, renormalized; all of `d`
    /// when `degenerate`.
    pub density: TabulatedDensity,
    /// Probability of the silent spans.
    pub mass: f64,
    /// Mean over the silent spans, or over the whole grid when `degenerate`.
    pub mean: f64,
    pub degenerate: bool,
}

/// Silent part of `d` for the half-cell `spans` of a [`Policy`], with `d`
/// uniform over each cell. Returns the silent mass, its mean and the node
/// masses it hands to the transition kernel (each point's mass is split
/// linearly between its two nearest nodes).
///
/// Every node's share is assembled by the same symmetric formula, so even
/// inputs give a zero mean and mirrored node masses.
fn silent_part(d: &TabulatedDensity, spans: &[(f64, f64)]) -> (f64, f64, Vec<f64>) {
    let grid = d.grid();
    let h = grid.spacing();
    let n = grid.points();
    let p = d.values();
    // per node and side: (mass, first moment, mass sent to the neighbour)
    let half = |j: usize, side: usize| {
        let (lo, hi) = spans[2 * j + side];
        if lo >= hi {
            return (0.0, 0.0, 0.0);
        }
        let len = hi - lo;
        let theta = neighbour_weight(lo, hi, grid.node(j), side == 1, h);
        let mass = p[j] * len;
        (mass, mass * (0.5 * (lo + hi)), mass * theta)
    };
    let parts: Vec<[(f64, f64, f64); 2]> = (0..n).map(|j| [half(j, 0), half(j, 1)]).collect();
    let lumped: Vec<f64> = (0..n)
        .map(|j| {
            let [l, r] = parts[j];
            let own = (l.0 - l.2) + (r.0 - r.2);
            let from_below = if j > 0 { parts[j - 1][1].2 } else { 0.0 };
            let from_above = if j + 1 < n { parts[j + 1][0].2 } else { 0.0 };
            own + (from_below + from_above)
        })
        .collect();
    let c = grid.center();
    let (mut num, mut den) = (0.0, 0.0);
    let node = |j: usize| {
        let [l, r] = parts[j];
        (l.0 + r.0, l.1 + r.1)
    };
    for j in 0..c {
        let (mj, nj) = node(j);
        let (mm, nm) = node(grid.mirror(j));
        num += nj + nm;
        den += mj + mm;
    }
    let (mc, nc) = node(c);
    num += nc;
    den += mc;
    let mean = if den > 0.0 { num / den } else { 0.0 };
    (den, mean, lumped)
}

fn full_spans(grid: &Grid) -> Vec<(f64, f64)> {
    (0..2 * grid.points())
        .map(|h| {
            let b = half_bounds(grid, h);
            if b.0 < b.1 {
                b
            } else {
                EMPTY
            }
        })
        .collect()
}

/// Restricts `d` to the silent half-cell `spans` of a [`Policy`] slice.
///
/// The returned density is the silent mass as the kernel sees it, lumped
/// onto the nodes. A null silent set falls back to the whole of `d`.
pub fn truncate_normalize(d: &TabulatedDensity, spans: &[(f64, f64)]) -> Result<Truncation> {
    let grid = d.grid();
    if spans.len() != 2 * grid.points() {
        return Err(Error::Domain(format!(
            "{} half-cell spans for a {}-point grid",
            spans.len(),
            grid.points()
        )));
    }
    let (mass, mean, lumped) = silent_part(d, spans);
    let degenerate = mass < RHO_MIN;
    let (mean, lumped, norm) = if degenerate {
        let (all, mean, lumped) = silent_part(d, &full_spans(grid));
        (mean, lumped, all)
    } else {
        (mean, lumped, mass)
    };
    let values = lumped
        .iter()
        .enumerate()
        .map(|(j, m)| m / (norm * grid.weight(j)))
        .collect();
    Ok(Truncation {
        density: TabulatedDensity::from_parts_unchecked(*grid, values),
        mass,
        mean,
        degenerate,
    })
}

pub fn conditional_mean(d: &TabulatedDensity) -> f64 {
    d.mean()
}

/// The error distribution at one `(k, τ)` pair, before the stage-k decision.
#[derive(Clone, Debug, PartialEq)]
pub struct StageSlice {
    pub tau: isize,
    /// Normalized density of `e_k` given `τ_k = τ`.
    pub density: TabulatedDensity,
    /// `P(τ_k = τ)`.
    pub mass: f64,
    /// `P(δ_k = 0 | τ_k = τ)`.
    pub keep_fraction: f64,
    /// `E[e_k | τ_k = τ, δ_k = 0]`, or the untruncated mean when degenerate.
    pub kept_mean: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalDensitySet {
    pub stage: usize,
    /// Indexed by `τ + 1`.
    pub slices: Vec<StageSlice>,
    /// `P(δ_k = 1)`.
    pub transmitted_mass: f64,
}

impl ConditionalDensitySet {
    pub fn slice(&self, tau: isize) -> &StageSlice {
        &self.slices[(tau + 1) as usize]
    }

    /// `P(δ_k = 0)`.
    pub fn silent_mass(&self) -> f64 {
        self.slices.iter().map(|s| s.mass * s.keep_fraction).sum()
    }
}

/// Forward propagation of the joint `(e_k, τ_k)` distribution under `policy`.
pub fn propagate(policy: &Policy, inst: &Instance) -> Result<Vec<ConditionalDensitySet>> {
    let horizon = inst.horizon();
    if policy.horizon() != horizon || policy.grid() != inst.grid() {
        return Err(Error::Domain("policy does not match the instance".into()));
    }
    let mut history: Vec<ConditionalDensitySet> = Vec::with_capacity(horizon);
    let mut current: Vec<(TabulatedDensity, f64)> = vec![(inst.init_error().clone(), 1.0)];
    for k in 0..horizon {
        let mut slices = Vec::with_capacity(k + 1);
        let mut transmitted = 0.0;
        let mut next = Vec::with_capacity(k + 2);
        for (i, (density, mass)) in current.into_iter().enumerate() {
            let tau = i as isize - 1;
            let cut = truncate_normalize(&density, policy.spans(k, tau))?;
            let keep_fraction = cut.mass;
            let kept_mean = cut.mean;
            transmitted += mass * (1.0 - keep_fraction);
            if k + 1 < horizon {
                let (predicted, lost) = inst.kernel().predict(&cut.density);
                let kept_mass = mass * keep_fraction;
                if lost * kept_mass >= OVERFLOW_LIMIT {
                    return Err(Error::GridOverflow {
                        lost: lost * kept_mass,
                        limit: OVERFLOW_LIMIT,
                    });
                }
                next.push((predicted, kept_mass));
            }
            slices.push(StageSlice {
                tau,
                density,
                mass,
                keep_fraction,
                kept_mean,
                degenerate: cut.degenerate,
            });
        }
        if k + 1 < horizon {
            next.push((inst.noise().clone(), transmitted));
        }
        history.push(ConditionalDensitySet {
            stage: k,
            slices,
            transmitted_mass: transmitted,
        });
        current = next;
    }
    Ok(history)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaUpdate {
    pub alpha: AlphaMap,
    pub history: Vec<ConditionalDensitySet>,
    /// `(k, τ)` pairs whose silent region carries no mass.
    pub degenerate: Vec<(usize, isize)>,
}

/// `α_{k,τ} = E[e_k | τ_k = τ, δ_{τ+1} = … = δ_k = 0]` under `policy`.
pub fn update_alpha(policy: &Policy, inst: &Instance) -> Result<AlphaUpdate> {
    let history = propagate(policy, inst)?;
    let mut alpha = AlphaMap::zeros(inst.horizon());
    let mut degenerate = Vec::new();
    for set in &history {
        for s in &set.slices {
            alpha.set(set.stage, s.tau, s.kept_mean);
            if s.degenerate {
                degenerate.push((set.stage, s.tau));
            }
        }
    }
    Ok(AlphaUpdate {
        alpha,
        history,
        degenerate,
    })
}

/// Expected total cost of `(policy, alpha)` by forward propagation.
pub fn forward_cost(policy: &Policy, alpha: &AlphaMap, inst: &Instance) -> Result<f64> {
    if alpha.horizon() != inst.horizon() {
        return Err(Error::Domain("bias map does not match the instance".into()));
    }
    let history = propagate(policy, inst)?;
    Ok(stage_costs(&history, policy, alpha, inst).iter().sum())
}

/// Expected running cost of each stage.
pub fn stage_costs(
    history: &[ConditionalDensitySet],
    policy: &Policy,
    alpha: &AlphaMap,
    inst: &Instance,
) -> Vec<f64> {
    let grid = inst.grid();
    let lambda = inst.spec().lambda;
    history
        .iter()
        .map(|set| {
            set.slices
                .iter()
                .map(|s| {
                    let a = alpha.get(set.stage, s.tau);
                    let spans = policy.spans(set.stage, s.tau);
                    let per_node: Vec<f64> = s
                        .density
                        .values()
                        .iter()
                        .enumerate()
                        .map(|(j, p)| {
                            let (cl, ch) = grid.cell(j);
                            let mut silent = 0.0;
                            let mut len = 0.0;
                            for &(lo, hi) in &spans[2 * j..2 * j + 2] {
                                if lo < hi {
                                    silent += silent_moment(lo, hi, a);
                                    len += hi - lo;
                                }
                            }
                            let width = ch - cl;
                            p * grid.weight(j) * (silent + (width - len) * lambda) / width
                        })
                        .collect();
                    s.mass * per_node.iter().sum::<f64>()
                })
                .sum()
        })
        .collect()
}
