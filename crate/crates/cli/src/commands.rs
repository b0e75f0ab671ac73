//! Subcommand implementations.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use trigger_codesign::density::forward_cost;
use trigger_codesign::oracle::{solve_discrete, solve_one_step, BiasMode, DiscreteProblem};
use trigger_codesign::simulator::run_closed_loop;
use trigger_codesign::{
    iterate, symmetric_baseline, AlphaMap, Grid, Instance, IterationTrace, Policy, ProblemSpec,
    SimConfig,
};

use crate::config::{ExperimentConfig, McConfig};
use crate::output::{write_csv, write_json};
use crate::CliError;

/// `|α|_∞` below which a solution is reported as the symmetric design.
pub const SYMMETRIC_ALPHA_TOL: f64 = 1e-3;

/// Relative disagreement allowed between the backward and forward cost.
pub const COST_AGREEMENT_TOL: f64 = 1e-9;

/// Largest accepted `|mc_cost − forward_cost|` in standard errors.
pub const MC_Z_LIMIT: f64 = 3.0;

pub const SWEEP_HEADER: [&str; 6] = [
    "mu",
    "cost_symmetric",
    "cost_iterative",
    "reduction_pct",
    "iterations",
    "converged",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub spec: ProblemSpec,
    pub grid: Grid,
    pub alpha: AlphaMap,
    /// Silent intervals of each `(k, τ)` slice, rows in `AlphaMap` order.
    pub policy: Vec<Vec<(f64, f64)>>,
    pub cost: f64,
    pub cost_symmetric: f64,
    pub reduction_pct: f64,
    pub converged: bool,
    pub symmetric_design: bool,
    pub iterations: usize,
    pub trace: IterationTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub samples: usize,
    pub seed: u64,
    pub mc_cost: f64,
    pub std_error: f64,
    pub forward_cost: f64,
    pub z_score: f64,
    pub transmit_rate: f64,
    pub per_stage_cost: Vec<f64>,
    pub clamp_count: u64,
    pub max_identity_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub spec: ProblemSpec,
    pub grid: Grid,
    pub policy: Vec<Vec<(f64, f64)>>,
    pub cost: f64,
}

fn instance(cfg: &ExperimentConfig, spec: ProblemSpec) -> Result<Instance, CliError> {
    Ok(Instance::auto(spec, cfg.grid.k_sigma, cfg.grid.points)?)
}

fn reduction_pct(symmetric: f64, iterative: f64) -> f64 {
    100.0 * (symmetric - iterative) / symmetric
}

fn slices(horizon: usize) -> impl Iterator<Item = (usize, isize)> {
    (0..horizon).flat_map(|k| (-1..k as isize).map(move |tau| (k, tau)))
}

fn threshold_rows(policy: &Policy) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (k, tau) in slices(policy.horizon()) {
        for (lo, hi) in policy.keep_intervals(k, tau) {
            rows.push(vec![
                k.to_string(),
                tau.to_string(),
                lo.to_string(),
                hi.to_string(),
            ]);
        }
    }
    rows
}

pub fn solve(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let inst = instance(cfg, cfg.problem()?)?;
    let it = &cfg.iteration;
    let alpha0 = AlphaMap::constant(inst.horizon(), it.alpha0);
    let res = iterate(&inst, &alpha0, it.tol, it.max_iter)?;
    let forward = forward_cost(&res.policy, &res.alpha, &inst)?;
    if (forward - res.cost).abs() > COST_AGREEMENT_TOL * res.cost.abs().max(1.0) {
        return Err(CliError::Numerical(format!(
            "backward cost {} and forward cost {forward} disagree",
            res.cost
        )));
    }
    let (_, cost_symmetric) = symmetric_baseline(&inst)?;
    let record = SolutionRecord {
        spec: inst.spec().clone(),
        grid: *inst.grid(),
        alpha: res.alpha.clone(),
        policy: res.policy.to_intervals(),
        cost: res.cost,
        cost_symmetric,
        reduction_pct: reduction_pct(cost_symmetric, res.cost),
        converged: res.converged,
        symmetric_design: res.alpha.sup_norm() < SYMMETRIC_ALPHA_TOL,
        iterations: res.iterations,
        trace: res.trace,
    };
    write_json(&out.join("solution.json"), &record)?;
    write_csv(
        &out.join("thresholds.csv"),
        &["k", "tau", "keep_lo", "keep_hi"],
        &threshold_rows(&res.policy),
    )?;
    let alpha_rows: Vec<Vec<String>> = slices(inst.horizon())
        .map(|(k, tau)| {
            vec![
                k.to_string(),
                tau.to_string(),
                res.alpha.get(k, tau).to_string(),
            ]
        })
        .collect();
    write_csv(&out.join("alpha.csv"), &["k", "tau", "alpha"], &alpha_rows)?;
    let trace_rows: Vec<Vec<String>> = record
        .trace
        .cost
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let delta = record
                .trace
                .alpha_delta
                .get(i)
                .map_or(String::new(), f64::to_string);
            vec![
                i.to_string(),
                c.to_string(),
                delta,
                record.trace.lyapunov[i].to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("trace.csv"),
        &["pass", "cost", "alpha_delta", "lyapunov"],
        &trace_rows,
    )?;
    println!(
        "cost {:.6} (symmetric {:.6}, reduction {:.2}%), {} updates, converged={}, |alpha|={:.3e}{}",
        record.cost,
        record.cost_symmetric,
        record.reduction_pct,
        record.iterations,
        record.converged,
        record.alpha.sup_norm(),
        if record.symmetric_design { ", converged to symmetric design" } else { "" }
    );
    Ok(())
}

struct SweepRow {
    mu: f64,
    symmetric: f64,
    iterative: f64,
    iterations: usize,
    converged: bool,
}

fn sweep_one(cfg: &ExperimentConfig, mu: f64) -> Result<SweepRow, CliError> {
    let inst = instance(cfg, cfg.problem_for_mu(mu)?)?;
    let (_, symmetric) = symmetric_baseline(&inst)?;
    let it = &cfg.iteration;
    let res = iterate(
        &inst,
        &AlphaMap::constant(inst.horizon(), it.alpha0),
        it.tol,
        it.max_iter,
    )?;
    Ok(SweepRow {
        mu,
        symmetric,
        iterative: res.cost,
        iterations: res.iterations,
        converged: res.converged,
    })
}

pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let mus = &cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("missing [sweep] section".into()))?
        .mu;
    let rows: Vec<SweepRow> = mus
        .par_iter()
        .map(|&mu| {
            sweep_one(cfg, mu).unwrap_or_else(|e| {
                eprintln!("mu = {mu}: {e}");
                SweepRow {
                    mu,
                    symmetric: f64::NAN,
                    iterative: f64::NAN,
                    iterations: 0,
                    converged: false,
                }
            })
        })
        .collect();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.mu.to_string(),
                r.symmetric.to_string(),
                r.iterative.to_string(),
                reduction_pct(r.symmetric, r.iterative).to_string(),
                r.iterations.to_string(),
                r.converged.to_string(),
            ]
        })
        .collect();
    write_csv(&out.join("sweep.csv"), &SWEEP_HEADER, &table)?;
    for r in &rows {
        println!(
            "mu={}: symmetric {:.6}, iterative {:.6}, reduction {:.2}%",
            r.mu,
            r.symmetric,
            r.iterative,
            reduction_pct(r.symmetric, r.iterative)
        );
    }
    Ok(())
}

pub fn simulate(solution: &Path, mc: &McConfig, out: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(solution)
        .map_err(|e| CliError::Io(format!("cannot read solution {}: {e}", solution.display())))?;
    let record: SolutionRecord = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", solution.display())))?;
    let grid = Grid::new(record.grid.half_width(), record.grid.points())?;
    let inst = Instance::new(record.spec.clone(), grid)?;
    let policy = Policy::from_intervals(grid, inst.horizon(), &record.policy)?;
    let alpha = AlphaMap::from_values(record.alpha.horizon(), record.alpha.values().to_vec())?;
    let forward = forward_cost(&policy, &alpha, &inst)?;
    if (forward - record.cost).abs() > COST_AGREEMENT_TOL * record.cost.abs().max(1.0) {
        return Err(CliError::Numerical(format!(
            "recorded cost {} does not match the forward cost {forward} of the stored design",
            record.cost
        )));
    }
    let sim = run_closed_loop(
        &record.spec,
        &policy,
        &alpha,
        &SimConfig {
            samples: mc.samples,
            seed: mc.seed,
        },
    )?;
    let gap = (sim.mc_cost - forward).abs();
    let z_score = if sim.std_error > 0.0 {
        gap / sim.std_error
    } else if gap <= 1e-12 * forward.abs().max(1.0) {
        0.0
    } else {
        f64::INFINITY
    };
    let report = SimulationRecord {
        samples: sim.samples,
        seed: mc.seed,
        mc_cost: sim.mc_cost,
        std_error: sim.std_error,
        forward_cost: forward,
        z_score,
        transmit_rate: sim.transmit_rate,
        per_stage_cost: sim.per_stage_cost,
        clamp_count: sim.clamp_count,
        max_identity_gap: sim.max_identity_gap,
    };
    write_json(&out.join("simulation.json"), &report)?;
    println!(
        "mc {:.6} +- {:.2e}, forward {:.6}, z = {:.2}",
        report.mc_cost, report.std_error, forward, z_score
    );
    if !(z_score <= MC_Z_LIMIT) {
        return Err(CliError::Numerical(format!(
            "Monte Carlo cost is {z_score:.2} standard errors from the forward cost"
        )));
    }
    Ok(())
}

pub fn baseline(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let inst = instance(cfg, cfg.problem()?)?;
    let (policy, cost) = symmetric_baseline(&inst)?;
    let record = BaselineRecord {
        spec: inst.spec().clone(),
        grid: *inst.grid(),
        policy: policy.to_intervals(),
        cost,
    };
    write_json(&out.join("baseline.json"), &record)?;
    write_csv(
        &out.join("baseline_thresholds.csv"),
        &["k", "tau", "keep_lo", "keep_hi"],
        &threshold_rows(&policy),
    )?;
    println!("symmetric baseline cost {cost:.6}");
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub discrete: Option<DiscreteOracle>,
    pub one_step: Option<OneStepOracle>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteOracle {
    pub joint_cost: f64,
    pub zero_bias_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneStepOracle {
    pub alpha_star: f64,
    pub keep_interval: (f64, f64),
    pub cost: f64,
}

pub fn oracle(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let oc = cfg.oracle.as_ref();
    let mut record = OracleRecord::default();
    if let Some((support, probs)) = oc.and_then(|o| o.support.clone().zip(o.probs.clone())) {
        let problem = DiscreteProblem {
            support,
            probs,
            a: cfg.system.a,
            lambda: cfg.system.lambda,
            horizon: cfg.system.horizon,
        };
        record.discrete = Some(DiscreteOracle {
            joint_cost: solve_discrete(&problem, BiasMode::Optimal)?,
            zero_bias_cost: solve_discrete(&problem, BiasMode::Zero)?,
        });
    } else if oc.is_some_and(|o| o.support.is_some() || o.probs.is_some()) {
        return Err(CliError::Config(
            "oracle.support and oracle.probs go together".into(),
        ));
    }
    if cfg.system.horizon == 1 && cfg.noise.is_some() {
        let inst = instance(cfg, cfg.problem()?)?;
        let step = oc.map_or(trigger_codesign::oracle::DEFAULT_ALPHA_STEP, |o| {
            o.alpha_step
        });
        let sol = solve_one_step(inst.init_error(), cfg.system.lambda, step)?;
        record.one_step = Some(OneStepOracle {
            alpha_star: sol.alpha_star,
            keep_interval: sol.keep_interval,
            cost: sol.cost,
        });
    }
    if record.discrete.is_none() && record.one_step.is_none() {
        return Err(CliError::Config(
            "oracle needs [oracle] support/probs, or horizon = 1 with a [noise] section".into(),
        ));
    }
    write_json(&out.join("oracle.json"), &record)?;
    if let Some(d) = &record.discrete {
        println!(
            "discrete: joint {:.6}, zero bias {:.6}",
            d.joint_cost, d.zero_bias_cost
        );
    }
    if let Some(s) = &record.one_step {
        println!(
            "one step: alpha* {:.4}, keep [{:.4}, {:.4}], cost {:.6}",
            s.alpha_star, s.keep_interval.0, s.keep_interval.1, s.cost
        );
    }
    Ok(())
}
