//! Independent reference solutions for small instances.
//!
//! `solve_one_step` handles a single stage with a continuous density by a
//! direct search over the bias. `solve_discrete_exact` enumerates trigger
//! decisions on every reachable atom of a discrete-noise problem with at most
//! three stages. Neither touches the grid DP or the density engine.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::model::TabulatedDensity;

pub const DEFAULT_ALPHA_STEP: f64 = 1e-3;

const MAX_ENUMERATED_ATOMS: usize = 20;
const WORK_BUDGET: u64 = 1 << 28;
const ATOM_MERGE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct OneStepSolution {
    pub alpha_star: f64,
    /// `[α* − √λ, α* + √λ]`, the silent region for `α*`.
    pub keep_interval: (f64, f64),
    pub cost: f64,
}

/// `∫ min(λ, (e − α)²) φ(e) de` by trapezoid quadrature on `density`'s grid.
pub fn one_step_cost(density: &TabulatedDensity, lambda: f64, alpha: f64) -> f64 {
    let grid = density.grid();
    density
        .values()
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let d = grid.node(j) - alpha;
            grid.weight(j) * p * lambda.min(d * d)
        })
        .sum()
}

/// Minimizes the single-stage cost over the bias by a grid scan followed by
/// golden-section refinement. Of two equally good optima the larger bias wins.
pub fn solve_one_step(
    density: &TabulatedDensity,
    lambda: f64,
    alpha_step: f64,
) -> Result<OneStepSolution> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda = {lambda} must be > 0")));
    }
    if !(alpha_step > 0.0) {
        return Err(Error::Domain(format!(
            "alpha step {alpha_step} must be > 0"
        )));
    }
    let l = density.grid().half_width();
    let cells = (2.0 * l / alpha_step).floor() as usize;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=cells {
        let alpha = l - i as f64 * alpha_step;
        let c = one_step_cost(density, lambda, alpha);
        if c < best.0 - 1e-12 * best.0.abs().min(1.0) {
            best = (c, alpha);
        }
    }
    let (mut cost, mut alpha_star) = best;
    let f = |a: f64| one_step_cost(density, lambda, a);
    let (refined, refined_cost) =
        golden_section(f, alpha_star - alpha_step, alpha_star + alpha_step, 1e-10);
    if refined_cost < cost {
        cost = refined_cost;
        alpha_star = refined;
    }
    let r = lambda.sqrt();
    Ok(OneStepSolution {
        alpha_star,
        keep_interval: (alpha_star - r, alpha_star + r),
        cost,
    })
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// A discrete-noise instance; the initial error has the noise's law.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteProblem {
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
    pub a: f64,
    pub lambda: f64,
    pub horizon: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BiasMode {
    /// Each `(k, τ)` bias is the conditional mean of its silent atoms.
    Optimal,
    /// Plain linear predictor, `α ≡ 0`.
    Zero,
}

/// Exact optimal cost with `a = 1`, optimizing trigger and bias jointly.
pub fn solve_discrete_exact(
    support: &[f64],
    probs: &[f64],
    lambda: f64,
    horizon: usize,
) -> Result<f64> {
    solve_discrete(
        &DiscreteProblem {
            support: support.to_vec(),
            probs: probs.to_vec(),
            a: 1.0,
            lambda,
            horizon,
        },
        BiasMode::Optimal,
    )
}

/// Exact optimal cost by enumeration.
///
/// After a transmission the error restarts from fresh noise, so each
/// last-update chain is solved on its own with the restart cost
/// `λ + V_k` taken from the chains that start later. Within a chain every
/// silent set of reachable atoms is enumerated, except at the final stage
/// where the optimal silent set is an interval of the sorted atoms.
pub fn solve_discrete(problem: &DiscreteProblem, mode: BiasMode) -> Result<f64> {
    let DiscreteProblem {
        support,
        probs,
        a,
        lambda,
        horizon,
    } = problem;
    if support.is_empty() || support.len() != probs.len() {
        return Err(Error::Domain(
            "support and probabilities must be non-empty and equally long".into(),
        ));
    }
    if support.len() > 5 || *horizon > 3 || *horizon == 0 {
        return Err(Error::OracleLimit(format!(
            "support of {} atoms over {horizon} stages (limit: 5 atoms, 1 to 3 stages)",
            support.len()
        )));
    }
    if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(
            "probabilities must be >= 0 and sum to 1".into(),
        ));
    }
    if !(*lambda >= 0.0) || *a == 0.0 || !a.is_finite() {
        return Err(Error::Domain(
            "need lambda >= 0 and a finite non-zero a".into(),
        ));
    }
    let mean: f64 = support.iter().zip(probs).map(|(s, p)| s * p).sum();
    if mean.abs() > 1e-12 {
        return Err(Error::Domain(format!(
            "noise must be zero-mean, got {mean}"
        )));
    }
    let noise = merge_atoms(support.iter().cloned().zip(probs.iter().cloned()).collect());
    let mut solver = ChainSolver {
        noise: &noise,
        a: *a,
        lambda: *lambda,
        horizon: *horizon,
        mode,
        restart: vec![0.0; *horizon],
        work: Cell::new(0),
    };
    for k in (0..horizon.saturating_sub(1)).rev() {
        let v = solver.chain(k + 1, &noise)?;
        solver.restart[k] = v;
    }
    solver.chain(0, &noise)
}

type Atoms = Vec<(f64, f64)>;

fn merge_atoms(mut atoms: Atoms) -> Atoms {
    atoms.retain(|(_, m)| *m > 0.0);
    atoms.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Atoms = Vec::with_capacity(atoms.len());
    for (v, m) in atoms {
        match out.last_mut() {
            Some(last) if (last.0 - v).abs() <= ATOM_MERGE_TOL * v.abs().max(1.0) => last.1 += m,
            _ => out.push((v, m)),
        }
    }
    out
}

struct ChainSolver<'a> {
    noise: &'a Atoms,
    a: f64,
    lambda: f64,
    horizon: usize,
    mode: BiasMode,
    /// `V_k`: optimal cost from stage k+1 on after a transmission at stage k.
    restart: Vec<f64>,
    work: Cell<u64>,
}

impl ChainSolver<'_> {
    fn charge(&self, units: u64) -> Result<()> {
        let w = self.work.get() + units;
        self.work.set(w);
        if w > WORK_BUDGET {
            return Err(Error::OracleLimit("enumeration budget exhausted".into()));
        }
        Ok(())
    }

    fn silent_cost(&self, kept: &[(f64, f64)]) -> f64 {
        let bias = match self.mode {
            BiasMode::Zero => 0.0,
            BiasMode::Optimal => {
                let m: f64 = kept.iter().map(|(_, m)| m).sum();
                if m > 0.0 {
                    kept.iter().map(|(v, m)| v * m).sum::<f64>() / m
                } else {
                    0.0
                }
            }
        };
        kept.iter().map(|(v, m)| m * (v - bias) * (v - bias)).sum()
    }

    /// Optimal cost of a chain whose (unnormalized) atoms sit at stage `k`.
    fn chain(&self, k: usize, atoms: &Atoms) -> Result<f64> {
        let restart = self.lambda + self.restart[k];
        let total: f64 = atoms.iter().map(|(_, m)| m).sum();
        if k + 1 == self.horizon {
            return Ok(match self.mode {
                BiasMode::Zero => atoms.iter().map(|(v, m)| m * (v * v).min(restart)).sum(),
                BiasMode::Optimal => {
                    self.charge((atoms.len() * atoms.len()) as u64 / 2 + 1)?;
                    let mut best = total * restart;
                    for i in 0..atoms.len() {
                        for j in i..atoms.len() {
                            let kept = &atoms[i..=j];
                            let kept_mass: f64 = kept.iter().map(|(_, m)| m).sum();
                            let c = self.silent_cost(kept) + (total - kept_mass) * restart;
                            best = best.min(c);
                        }
                    }
                    best
                }
            });
        }
        if atoms.len() > MAX_ENUMERATED_ATOMS {
            return Err(Error::OracleLimit(format!(
                "{} reachable atoms at stage {k}",
                atoms.len()
            )));
        }
        self.charge(1 << atoms.len())?;
        let mut best = f64::INFINITY;
        for mask in 0u64..(1 << atoms.len()) {
            let kept: Atoms = atoms
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, x)| *x)
                .collect();
            let kept_mass: f64 = kept.iter().map(|(_, m)| m).sum();
            let mut c = self.silent_cost(&kept) + (total - kept_mass) * restart;
            if !kept.is_empty() {
                let next = merge_atoms(
                    kept.iter()
                        .flat_map(|(v, m)| {
                            self.noise.iter().map(move |(w, p)| (self.a * v + w, m * p))
                        })
                        .collect(),
                );
                c += self.chain(k + 1, &next)?;
            }
            best = best.min(c);
        }
        Ok(best)
    }
}
