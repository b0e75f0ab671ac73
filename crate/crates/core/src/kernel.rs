//! Grid transition kernel of the silent-branch error dynamics `e' = a e + w`.
//!
//! Row `i` holds `P(i, j) = t_j φ_w(e_j − a e_i) / Z_i`, the probability of
//! moving from node `i` to node `j`, with `Z_i` the on-grid mass of the row.
//! The backward pass (expected continuation) and the forward pass (density
//! prediction) both use this one matrix, so they are exact adjoints.
//!
//! Dot products over node `j > c` run in reverse node order. For even noise
//! the terms of row `M−1−i` are then the terms of row `i` in the same order,
//! so mirrored results are bitwise equal.

use rayon::prelude::*;

use crate::model::{Grid, TabulatedDensity};

/// Entries below this fraction of the row maximum are dropped.
const RELATIVE_CUTOFF: f64 = 1e-17;

#[derive(Clone, Debug)]
struct Banded {
    n: usize,
    center: usize,
    data: Vec<f64>,
    lo: Vec<usize>,
    // exclusive
    hi: Vec<usize>,
}

impl Banded {
    fn row(&self, r: usize) -> (&[f64], usize, usize) {
        (
            &self.data[r * self.n..(r + 1) * self.n],
            self.lo[r],
            self.hi[r],
        )
    }

    fn dot(&self, r: usize, x: &[f64]) -> f64 {
        let (row, lo, hi) = self.row(r);
        if lo >= hi {
            return 0.0;
        }
        if r <= self.center {
            dot_forward(&row[lo..hi], &x[lo..hi])
        } else {
            dot_reverse(&row[lo..hi], &x[lo..hi])
        }
    }

    fn from_dense(n: usize, data: Vec<f64>) -> Self {
        let mut lo = vec![0; n];
        let mut hi = vec![0; n];
        for r in 0..n {
            let row = &data[r * n..(r + 1) * n];
            match row.iter().position(|v| *v != 0.0) {
                Some(first) => {
                    lo[r] = first;
                    hi[r] = n - row.iter().rev().position(|v| *v != 0.0).unwrap();
                }
                None => {
                    lo[r] = 0;
                    hi[r] = 0;
                }
            }
        }
        Banded {
            n,
            center: (n - 1) / 2,
            data,
            lo,
            hi,
        }
    }

    fn transpose(&self) -> Self {
        let n = self.n;
        let mut t = vec![0.0; n * n];
        for r in 0..n {
            for c in self.lo[r]..self.hi[r] {
                t[c * n + r] = self.data[r * n + c];
            }
        }
        Banded::from_dense(n, t)
    }
}

fn dot_forward(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    for (k, (x, y)) in ra.iter().zip(rb).enumerate() {
        acc[k] += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

// Same accumulation pattern as `dot_forward` applied to the reversed slices.
fn dot_reverse(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.rchunks_exact(4);
    let cb = b.rchunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[3] * y[3];
        acc[1] += x[2] * y[2];
        acc[2] += x[1] * y[1];
        acc[3] += x[0] * y[0];
    }
    for (k, (x, y)) in ra.iter().rev().zip(rb.iter().rev()).enumerate() {
        acc[k] += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

#[derive(Clone, Debug)]
pub struct TransitionKernel {
    grid: Grid,
    a: f64,
    forward: Banded,
    backward: Banded,
    leak: Vec<f64>,
}

impl TransitionKernel {
    /// Builds the kernel for `e' = a e + w` with `w ~ noise`, both on `noise`'s grid.
    pub fn new(a: f64, noise: &TabulatedDensity) -> Self {
        let grid = *noise.grid();
        let n = grid.points();
        let nodes = grid.nodes();
        let weights = grid.weights();
        let rows: Vec<(Vec<f64>, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let shift = a * nodes[i];
                let mut row: Vec<f64> = nodes
                    .iter()
                    .zip(&weights)
                    .map(|(e, t)| t * noise.eval(e - shift))
                    .collect();
                let peak = row.iter().cloned().fold(0.0, f64::max);
                row.iter_mut()
                    .filter(|v| **v < peak * RELATIVE_CUTOFF)
                    .for_each(|v| *v = 0.0);
                let ones = vec![1.0; n];
                let z = if i <= grid.center() {
                    dot_forward(&row, &ones)
                } else {
                    dot_reverse(&row, &ones)
                };
                if z > 0.0 {
                    row.iter_mut().for_each(|v| *v /= z);
                } else {
                    // Everything lands off the grid: send it to the nearest edge node.
                    let (j, _) = grid.nearest(shift);
                    row[j] = 1.0;
                }
                (row, (1.0 - z).max(0.0))
            })
            .collect();
        let mut data = Vec::with_capacity(n * n);
        let mut leak = Vec::with_capacity(n);
        for (row, l) in rows {
            data.extend_from_slice(&row);
            leak.push(l);
        }
        let forward = Banded::from_dense(n, data);
        let backward = forward.transpose();
        TransitionKernel {
            grid,
            a,
            forward,
            backward,
            leak,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Probability `P(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.forward.data[i * self.forward.n + j]
    }

    /// Fraction of the raw transition mass from node `i` that fell off the grid.
    pub fn leak(&self, i: usize) -> f64 {
        self.leak[i]
    }

    /// `E[J(a e_i + w)]` for every node `i`.
    pub fn expect_next(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.grid.points());
        (0..self.grid.points())
            .map(|i| self.forward.dot(i, values))
            .collect()
    }

    /// Pushes node probabilities one step forward; returns the new node
    /// probabilities and the probability that left the grid before clipping.
    pub fn push_forward(&self, masses: &[f64]) -> (Vec<f64>, f64) {
        debug_assert_eq!(masses.len(), self.grid.points());
        let out = (0..self.grid.points())
            .map(|j| self.backward.dot(j, masses))
            .collect();
        let lost = masses.iter().zip(&self.leak).map(|(p, l)| p * l).sum();
        (out, lost)
    }

    /// Density of `a e + w` for `e ~ d`, renormalized; also the off-grid mass fraction.
    pub fn predict(&self, d: &TabulatedDensity) -> (TabulatedDensity, f64) {
        let mass_in = d.integral();
        let (out, lost) = self.push_forward(&d.masses());
        let values: Vec<f64> = out
            .iter()
            .enumerate()
            .map(|(j, p)| p / self.grid.weight(j))
            .collect();
        let total = self.grid.trapezoid(&values);
        let values = if total > 0.0 {
            values.into_iter().map(|v| v / total).collect()
        } else {
            values
        };
        let lost_fraction = if mass_in > 0.0 { lost / mass_in } else { 0.0 };
        (
            TabulatedDensity::from_parts_unchecked(self.grid, values),
            lost_fraction,
        )
    }
}
