//! Backward dynamic programming over the augmented state `(e_k, τ_k)` for a
//! fixed bias map.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::model::{Grid, TabulatedDensity};

/// Bias map `α_{k,τ}`, `k = 0..N−1`, `τ = −1..k−1`, stored flat with
/// `index(k, τ) = k(k+1)/2 + τ + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaMap {
    horizon: usize,
    values: Vec<f64>,
}

impl AlphaMap {
    pub fn len_for(horizon: usize) -> usize {
        horizon * (horizon + 1) / 2
    }

    pub fn index(k: usize, tau: isize) -> usize {
        debug_assert!(tau >= -1 && tau < k as isize);
        k * (k + 1) / 2 + (tau + 1) as usize
    }

    pub fn constant(horizon: usize, value: f64) -> Self {
        AlphaMap {
            horizon,
            values: vec![value; Self::len_for(horizon)],
        }
    }

    pub fn zeros(horizon: usize) -> Self {
        Self::constant(horizon, 0.0)
    }

    pub fn from_values(horizon: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != Self::len_for(horizon) {
            return Err(Error::Domain(format!(
                "bias map for horizon {horizon} needs {} entries, got {}",
                Self::len_for(horizon),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("bias map entries must be finite".into()));
        }
        Ok(AlphaMap { horizon, values })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, k: usize, tau: isize) -> f64 {
        self.values[Self::index(k, tau)]
    }

    pub fn set(&mut self, k: usize, tau: isize, value: f64) {
        self.values[Self::index(k, tau)] = value;
    }

    /// `|α|_∞`.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &AlphaMap) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Trigger for every `(k, τ)` slice, resolved below the grid spacing.
///
/// The error is modelled as uniform within each grid cell. Every half cell
/// stores the sub-interval where the sensor stays silent; outside it the
/// sensor transmits. Half cell `2j` is the left half of node `j`, `2j + 1`
/// the right half. An empty span is stored as `(0, 0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    grid: Grid,
    // [k][τ + 1][2j + side]
    keep: Vec<Vec<Vec<(f64, f64)>>>,
}

pub(crate) const EMPTY: (f64, f64) = (0.0, 0.0);

/// Bounds of half cell `h` (see [`Policy`]).
pub(crate) fn half_bounds(grid: &Grid, h: usize) -> (f64, f64) {
    grid.half_cell(h / 2, h % 2 == 1)
}

impl Policy {
    pub fn new(grid: Grid, keep: Vec<Vec<Vec<(f64, f64)>>>) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::Domain("policy needs at least one stage".into()));
        }
        for (k, stage) in keep.iter().enumerate() {
            if stage.len() != k + 1 {
                return Err(Error::Domain(format!(
                    "stage {k} has {} τ-slices, expected {}",
                    stage.len(),
                    k + 1
                )));
            }
            for slice in stage {
                if slice.len() != 2 * grid.points() {
                    return Err(Error::Domain(format!(
                        "stage {k} has a slice not matching the {}-point grid",
                        grid.points()
                    )));
                }
                for (h, &(lo, hi)) in slice.iter().enumerate() {
                    let (cl, ch) = half_bounds(&grid, h);
                    if lo < hi && !(lo >= cl && hi <= ch) {
                        return Err(Error::Domain(format!(
                            "silent span [{lo}, {hi}] leaves half cell [{cl}, {ch}]"
                        )));
                    }
                }
            }
        }
        let keep = keep
            .into_iter()
            .map(|stage| {
                stage
                    .into_iter()
                    .map(|s| {
                        s.into_iter()
                            .map(|sp| if sp.0 < sp.1 { sp } else { EMPTY })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Policy { grid, keep })
    }

    /// Node-resolved policy: `f(k, τ, e_j)` decides the whole cell of `e_j`.
    pub fn from_fn(grid: Grid, horizon: usize, f: impl Fn(usize, isize, f64) -> bool) -> Self {
        let keep = (0..horizon)
            .map(|k| {
                (-1..k as isize)
                    .map(|tau| {
                        (0..2 * grid.points())
                            .map(|h| {
                                let b = half_bounds(&grid, h);
                                if b.0 < b.1 && !f(k, tau, grid.node(h / 2)) {
                                    b
                                } else {
                                    EMPTY
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Policy { grid, keep }
    }

    pub fn always(grid: Grid, horizon: usize) -> Self {
        Self::from_fn(grid, horizon, |_, _, _| true)
    }

    pub fn never(grid: Grid, horizon: usize) -> Self {
        Self::from_fn(grid, horizon, |_, _, _| false)
    }

    /// Silent set of each slice given as sorted disjoint intervals, rows in
    /// `AlphaMap` index order. Inverse of [`Policy::to_intervals`].
    pub fn from_intervals(grid: Grid, horizon: usize, rows: &[Vec<(f64, f64)>]) -> Result<Self> {
        if rows.len() != AlphaMap::len_for(horizon) {
            return Err(Error::Domain(format!(
                "expected {} policy rows for horizon {horizon}, got {}",
                AlphaMap::len_for(horizon),
                rows.len()
            )));
        }
        let mut it = rows.iter();
        let mut keep = Vec::with_capacity(horizon);
        for k in 0..horizon {
            let mut stage = Vec::with_capacity(k + 1);
            for _ in 0..=k {
                let row = it.next().expect("row count checked");
                if row
                    .iter()
                    .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi))
                    || row.windows(2).any(|w| w[1].0 < w[0].1)
                {
                    return Err(Error::Domain(format!(
                        "policy row for stage {k} is not a sorted list of disjoint intervals"
                    )));
                }
                let mut slice = vec![EMPTY; 2 * grid.points()];
                for (h, span) in slice.iter_mut().enumerate() {
                    let (cl, ch) = half_bounds(&grid, h);
                    let mut hits = row
                        .iter()
                        .map(|&(lo, hi)| (lo.max(cl), hi.min(ch)))
                        .filter(|s| s.0 < s.1);
                    if let Some(hit) = hits.next() {
                        if hits.next().is_some() {
                            return Err(Error::Domain(format!(
                                "a half cell of stage {k} holds more than one silent interval"
                            )));
                        }
                        *span = hit;
                    }
                }
                stage.push(slice);
            }
            keep.push(stage);
        }
        Ok(Policy { grid, keep })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn horizon(&self) -> usize {
        self.keep.len()
    }

    /// Silent span of every half cell of slice `(k, τ)`.
    pub fn spans(&self, k: usize, tau: isize) -> &[(f64, f64)] {
        &self.keep[k][(tau + 1) as usize]
    }

    /// Silent fraction of every cell.
    pub fn keep_weights(&self, k: usize, tau: isize) -> Vec<f64> {
        let spans = self.spans(k, tau);
        (0..self.grid.points())
            .map(|j| {
                let (cl, ch) = self.grid.cell(j);
                let len = |sp: (f64, f64)| (sp.1 - sp.0).max(0.0);
                (len(spans[2 * j]) + len(spans[2 * j + 1])) / (ch - cl)
            })
            .collect()
    }

    /// `f_k(e, τ)` at an arbitrary error; points off the grid use the edge cell.
    pub fn transmits(&self, k: usize, tau: isize, e: f64) -> bool {
        let (j, _) = self.grid.nearest(e);
        let side = usize::from(e >= self.grid.node(j));
        let (lo, hi) = self.spans(k, tau)[2 * j + side];
        !(lo < hi && lo <= e && e <= hi)
    }

    /// `f_k(e_j, τ)` at node `j`.
    pub fn decide(&self, k: usize, tau: isize, j: usize) -> bool {
        let e = self.grid.node(j);
        let spans = self.spans(k, tau);
        let inside = |(lo, hi): (f64, f64)| lo < hi && lo <= e && e <= hi;
        !(inside(spans[2 * j]) || inside(spans[2 * j + 1]))
    }

    /// Node table of `f_k(·, τ)`; `true` means transmit.
    pub fn trigger_table(&self, k: usize, tau: isize) -> Vec<bool> {
        (0..self.grid.points())
            .map(|j| self.decide(k, tau, j))
            .collect()
    }

    /// Silent set of slice `(k, τ)` as maximal disjoint intervals.
    pub fn keep_intervals(&self, k: usize, tau: isize) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut open = false;
        for (h, &(lo, hi)) in self.spans(k, tau).iter().enumerate() {
            let (cl, ch) = half_bounds(&self.grid, h);
            if cl >= ch {
                continue;
            }
            if lo >= hi {
                open = false;
                continue;
            }
            match out.last_mut() {
                Some(last) if open && lo == cl => last.1 = hi,
                _ => out.push((lo, hi)),
            }
            open = hi == ch;
        }
        out
    }

    /// Every slice is mirror-symmetric about `e = 0`.
    pub fn is_even(&self) -> bool {
        let n = 2 * self.grid.points();
        self.keep.iter().flatten().all(|s| {
            (0..n / 2).all(|h| {
                let (a, b) = (s[h], s[n - 1 - h]);
                (a.0 >= a.1 && b.0 >= b.1) || (a.0 == -b.1 && a.1 == -b.0)
            })
        })
    }

    /// All τ-slices of each stage are identical.
    pub fn is_tau_independent(&self) -> bool {
        self.keep
            .iter()
            .all(|stage| stage.iter().all(|s| s == &stage[0]))
    }

    /// Rows for [`Policy::from_intervals`], in `AlphaMap` index order.
    pub fn to_intervals(&self) -> Vec<Vec<(f64, f64)>> {
        (0..self.horizon())
            .flat_map(|k| (-1..k as isize).map(move |tau| (k, tau)))
            .map(|(k, tau)| self.keep_intervals(k, tau))
            .collect()
    }
}

/// Value functions `J_k(e, τ)` for `k = 0..N−1`, averaged over each grid
/// cell; `J_N ≡ 0` is implicit.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable {
    grid: Grid,
    // [k][τ + 1][j]
    values: Vec<Vec<Vec<f64>>>,
    /// `C_k = E[J_{k+1}(w, k)]`, the continuation after a transmission at stage k.
    transmit_continuation: Vec<f64>,
}

impl ValueTable {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn slice(&self, k: usize, tau: isize) -> &[f64] {
        &self.values[k][(tau + 1) as usize]
    }

    pub fn stage(&self, k: usize) -> &[Vec<f64>] {
        &self.values[k]
    }

    pub fn transmit_continuation(&self, k: usize) -> f64 {
        self.transmit_continuation[k]
    }
}

/// Running cost `(1 − δ)(e − α)² + λ δ`.
pub fn stage_cost(e: f64, alpha: f64, transmit: bool, lambda: f64) -> f64 {
    if transmit {
        lambda
    } else {
        (e - alpha) * (e - alpha)
    }
}

/// `∫_lo^hi (e − α)² de`, arranged so mirrored spans give equal results.
pub(crate) fn silent_moment(lo: f64, hi: f64, alpha: f64) -> f64 {
    let (u, v) = (hi - alpha, lo - alpha);
    (hi - lo) * ((u * u + v * v) + u * v) / 3.0
}

/// Interpolation weight of the neighbour node for mass spread uniformly over
/// `[lo, hi]` in a half cell of node `e`.
pub(crate) fn neighbour_weight(lo: f64, hi: f64, e: f64, right: bool, h: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    if right {
        (mid - e) / h
    } else {
        (e - mid) / h
    }
}

/// Optimal silent spans of the two half cells of node `j` and the cell
/// average of the resulting value.
///
/// Inside a half cell the silent continuation interpolates linearly between
/// the node and its neighbour, so the silent set is a sublevel set of a
/// convex quadratic.
fn node_decision(
    grid: &Grid,
    j: usize,
    alpha: f64,
    cont: &[f64],
    transmit: f64,
) -> (f64, [(f64, f64); 2]) {
    let h = grid.spacing();
    let e = grid.node(j);
    let mut spans = [EMPTY; 2];
    let mut total = 0.0;
    let mut width = 0.0;
    for (side, span) in spans.iter_mut().enumerate() {
        let right = side == 1;
        let (hl, hh) = grid.half_cell(j, right);
        if hl >= hh {
            continue;
        }
        let hw = hh - hl;
        width += hw;
        let nb = if right { j + 1 } else { j - 1 };
        let (c0, c1) = (cont[j], cont[nb]);
        // C(x) = c0 + s (x − e) on this half
        let s = if right { (c1 - c0) / h } else { (c0 - c1) / h };
        let budget = transmit - c0 + s * (e - alpha) + 0.25 * s * s;
        let mut part = hw * transmit;
        if budget >= 0.0 {
            let r = budget.sqrt();
            let centre = alpha - 0.5 * s;
            let lo = (centre - r).max(hl);
            let hi = (centre + r).min(hh);
            if lo < hi {
                let len = hi - lo;
                let theta = neighbour_weight(lo, hi, e, right, h);
                part = silent_moment(lo, hi, alpha)
                    + len * ((1.0 - theta) * c0 + theta * c1)
                    + (hw - len) * transmit;
                *span = (lo, hi);
            }
        }
        total += part;
    }
    (total / width, spans)
}

/// Result of one Bellman step at stage `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct StageSolution {
    /// `J_k(·, τ)` for `τ = −1..k−1`, averaged over each cell.
    pub values: Vec<Vec<f64>>,
    /// Silent span of each half cell, per τ.
    pub keep: Vec<Vec<(f64, f64)>>,
    pub transmit_continuation: f64,
}

/// One application of the Bellman operator at stage `k`.
///
/// `next` holds `J_{k+1}(·, τ)` for `τ = −1..k` or is `None` for `J_N ≡ 0`.
/// The sensor stays silent exactly where `(e − α)² + E[J_{k+1} | silent]`,
/// with the continuation interpolated between nodes, does not exceed
/// `λ + C_k`; ties resolve to silence.
pub fn bellman_step(
    k: usize,
    next: Option<&[Vec<f64>]>,
    alpha: &AlphaMap,
    inst: &Instance,
) -> StageSolution {
    let grid = inst.grid();
    let lambda = inst.spec().lambda;
    let transmit_continuation = match next {
        Some(next) => {
            let after_transmit = &next[k + 1];
            let weighted: Vec<f64> = inst
                .noise()
                .values()
                .iter()
                .zip(after_transmit)
                .map(|(p, j)| p * j)
                .collect();
            grid.trapezoid(&weighted)
        }
        None => 0.0,
    };
    let transmit_value = lambda + transmit_continuation;
    let (values, keep): (Vec<Vec<f64>>, Vec<Vec<(f64, f64)>>) = (-1..k as isize)
        .into_par_iter()
        .map(|tau| {
            let a = alpha.get(k, tau);
            let silent_continuation = match next {
                Some(next) => inst.kernel().expect_next(&next[(tau + 1) as usize]),
                None => vec![0.0; grid.points()],
            };
            let mut values = Vec::with_capacity(grid.points());
            let mut keep = Vec::with_capacity(2 * grid.points());
            for j in 0..grid.points() {
                let (v, spans) = node_decision(grid, j, a, &silent_continuation, transmit_value);
                values.push(v);
                keep.extend(spans);
            }
            (values, keep)
        })
        .unzip();
    StageSolution {
        values,
        keep,
        transmit_continuation,
    }
}

/// Runs the Bellman recursion from `J_N ≡ 0` down to stage 0.
pub fn bellman_backward(alpha: &AlphaMap, inst: &Instance) -> Result<(Policy, ValueTable)> {
    let horizon = inst.horizon();
    if alpha.horizon() != horizon {
        return Err(Error::Domain(format!(
            "bias map horizon {} does not match problem horizon {horizon}",
            alpha.horizon()
        )));
    }
    let mut values: Vec<Vec<Vec<f64>>> = vec![Vec::new(); horizon];
    let mut keep: Vec<Vec<Vec<(f64, f64)>>> = vec![Vec::new(); horizon];
    let mut continuation = vec![0.0; horizon];
    for k in (0..horizon).rev() {
        let next = values.get(k + 1).map(|v| v.as_slice());
        let step = bellman_step(k, next, alpha, inst);
        values[k] = step.values;
        keep[k] = step.keep;
        continuation[k] = step.transmit_continuation;
    }
    let grid = *inst.grid();
    Ok((
        Policy { grid, keep },
        ValueTable {
            grid,
            values,
            transmit_continuation: continuation,
        },
    ))
}

/// `E[J_0(e_0, −1)]` by trapezoid quadrature.
pub fn cost_of(value: &ValueTable, init_error: &TabulatedDensity) -> f64 {
    let j0 = value.slice(0, -1);
    let weighted: Vec<f64> = init_error
        .values()
        .iter()
        .zip(j0)
        .map(|(p, j)| p * j)
        .collect();
    value.grid.trapezoid(&weighted)
}
