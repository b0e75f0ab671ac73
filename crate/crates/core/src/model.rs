//! Problem instances: system coefficients, densities and the error grid.
//!
//! Everything downstream works on densities tabulated over a uniform grid
//! `e_j = (j - c) h`, `c = (M - 1) / 2`. The grid always has an odd number
//! of nodes so that `e = 0` is a node and mirrored nodes are exact negatives
//! of each other, which keeps symmetric inputs bitwise symmetric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_K_SIGMA: f64 = 8.0;
pub const DEFAULT_POINTS: usize = 2001;

/// Largest tolerated `|E[w]|` of the discretized noise density.
pub const NOISE_MEAN_TOL: f64 = 1e-8;

const MIXTURE_WEIGHT_TOL: f64 = 1e-12;
const TABULATED_MASS_TOL: f64 = 1e-6;
const MIN_GRID_MASS: f64 = 1e-6;

/// A scalar probability density given either in closed form or as samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        sigmas: Vec<f64>,
    },
    /// Piecewise-linear density through `(abscissae[i], values[i])`, zero outside.
    Tabulated {
        abscissae: Vec<f64>,
        values: Vec<f64>,
    },
}

impl DensitySpec {
    pub fn gaussian(mean: f64, sigma: f64) -> Self {
        DensitySpec::GaussianMixture {
            weights: vec![1.0],
            means: vec![mean],
            sigmas: vec![sigma],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DensitySpec::GaussianMixture {
                weights,
                means,
                sigmas,
            } => {
                if weights.is_empty()
                    || weights.len() != means.len()
                    || weights.len() != sigmas.len()
                {
                    return Err(Error::InvalidSpec(
                        "mixture weights, means and sigmas must be non-empty and equally long"
                            .into(),
                    ));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(Error::InvalidSpec(
                        "mixture weights must be finite and >= 0".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > MIXTURE_WEIGHT_TOL {
                    return Err(Error::InvalidSpec(format!(
                        "mixture weights sum to {total}, expected 1"
                    )));
                }
                if means.iter().any(|m| !m.is_finite()) {
                    return Err(Error::InvalidSpec("mixture means must be finite".into()));
                }
                if sigmas.iter().any(|s| !s.is_finite() || *s <= 0.0) {
                    return Err(Error::InvalidSpec(
                        "mixture sigmas must be finite and > 0".into(),
                    ));
                }
                Ok(())
            }
            DensitySpec::Tabulated { abscissae, values } => {
                if abscissae.len() < 2 || abscissae.len() != values.len() {
                    return Err(Error::InvalidSpec(
                        "tabulated density needs at least two (abscissa, value) pairs".into(),
                    ));
                }
                if abscissae.iter().any(|x| !x.is_finite())
                    || abscissae.windows(2).any(|w| w[1] <= w[0])
                {
                    return Err(Error::InvalidSpec(
                        "tabulated abscissae must be finite and strictly increasing".into(),
                    ));
                }
                if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::InvalidSpec(
                        "tabulated values must be finite and >= 0".into(),
                    ));
                }
                let mass = trapezoid_nonuniform(abscissae, values, |_| 1.0);
                if (mass - 1.0).abs() > TABULATED_MASS_TOL {
                    return Err(Error::InvalidSpec(format!(
                        "tabulated density integrates to {mass}, expected 1"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Exact mirror symmetry of the parameters (not a numerical test).
    pub fn is_even(&self) -> bool {
        match self {
            DensitySpec::GaussianMixture {
                weights,
                means,
                sigmas,
            } => {
                let n = weights.len();
                let mut used = vec![false; n];
                (0..n).all(|i| {
                    let partner = (0..n).find(|&k| {
                        !used[k]
                            && weights[k] == weights[i]
                            && means[k] == -means[i]
                            && sigmas[k] == sigmas[i]
                    });
                    match partner {
                        Some(k) => {
                            used[k] = true;
                            true
                        }
                        None => false,
                    }
                })
            }
            DensitySpec::Tabulated { abscissae, values } => {
                let n = abscissae.len();
                (0..n).all(|i| {
                    abscissae[i] == -abscissae[n - 1 - i] && values[i] == values[n - 1 - i]
                })
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            DensitySpec::GaussianMixture {
                weights,
                means,
                sigmas,
            } => weights
                .iter()
                .zip(means)
                .zip(sigmas)
                .map(|((w, m), s)| w * normal_pdf(x, *m, *s))
                .sum(),
            DensitySpec::Tabulated { abscissae, values } => {
                let n = abscissae.len();
                if x < abscissae[0] || x > abscissae[n - 1] {
                    return 0.0;
                }
                let hi = abscissae.partition_point(|&a| a <= x).min(n - 1).max(1);
                let lo = hi - 1;
                let t = (x - abscissae[lo]) / (abscissae[hi] - abscissae[lo]);
                (1.0 - t) * values[lo] + t * values[hi]
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            DensitySpec::GaussianMixture { weights, means, .. } => {
                weights.iter().zip(means).map(|(w, m)| w * m).sum()
            }
            DensitySpec::Tabulated { abscissae, values } => {
                trapezoid_nonuniform(abscissae, values, |x| x)
                    / trapezoid_nonuniform(abscissae, values, |_| 1.0)
            }
        }
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        match self {
            DensitySpec::GaussianMixture {
                weights,
                means,
                sigmas,
            } => {
                weights
                    .iter()
                    .zip(means)
                    .zip(sigmas)
                    .map(|((w, m), s)| w * (s * s + m * m))
                    .sum::<f64>()
                    - mean * mean
            }
            DensitySpec::Tabulated { abscissae, values } => {
                trapezoid_nonuniform(abscissae, values, |x| (x - mean) * (x - mean))
                    / trapezoid_nonuniform(abscissae, values, |_| 1.0)
            }
        }
    }

    /// Density of `X - offset` where `X` has this density.
    pub fn shifted(&self, offset: f64) -> DensitySpec {
        match self {
            DensitySpec::GaussianMixture {
                weights,
                means,
                sigmas,
            } => DensitySpec::GaussianMixture {
                weights: weights.clone(),
                means: means.iter().map(|m| m - offset).collect(),
                sigmas: sigmas.clone(),
            },
            DensitySpec::Tabulated { abscissae, values } => DensitySpec::Tabulated {
                abscissae: abscissae.iter().map(|x| x - offset).collect(),
                values: values.clone(),
            },
        }
    }
}

fn normal_pdf(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn trapezoid_nonuniform(xs: &[f64], ys: &[f64], weight: impl Fn(f64) -> f64) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] * weight(x[0]) + y[1] * weight(x[1])))
        .sum()
}

/// Equal-weight two-kernel mixture `½N(μ, σ) + ½N(−μ, σ)` with `σ = √(1 − μ²)`,
/// so the variance is 1 for every `μ ∈ [0, 1)`.
pub fn make_bimodal_mixture(mu: f64) -> Result<DensitySpec> {
    if !(0.0..1.0).contains(&mu) {
        return Err(Error::Domain(format!(
            "mixture offset mu = {mu} must lie in [0, 1)"
        )));
    }
    let sigma = (1.0 - mu * mu).sqrt();
    Ok(DensitySpec::GaussianMixture {
        weights: vec![0.5, 0.5],
        means: vec![mu, -mu],
        sigmas: vec![sigma, sigma],
    })
}

/// Uniform grid on `[-half_width, half_width]` with an odd number of nodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    half_width: f64,
    points: usize,
}

impl Grid {
    pub fn new(half_width: f64, points: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Domain(format!(
                "grid half width {half_width} must be > 0"
            )));
        }
        if points < 3 || points % 2 == 0 {
            return Err(Error::Domain(format!(
                "grid point count {points} must be odd and >= 3"
            )));
        }
        Ok(Grid { half_width, points })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    /// Index of the node at `e = 0`.
    pub fn center(&self) -> usize {
        (self.points - 1) / 2
    }

    pub fn mirror(&self, j: usize) -> usize {
        self.points - 1 - j
    }

    pub fn node(&self, j: usize) -> f64 {
        (j as f64 - self.center() as f64) * self.spacing()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.node(j)).collect()
    }

    /// Trapezoid quadrature weight of node `j`.
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.points - 1 {
            0.5 * self.spacing()
        } else {
            self.spacing()
        }
    }

    /// Cell of node `j`: the span of its trapezoid weight. Mirrored cells
    /// have exactly negated bounds.
    pub fn cell(&self, j: usize) -> (f64, f64) {
        (self.half_cell(j, false).0, self.half_cell(j, true).1)
    }

    /// Left (`right == false`) or right half of the cell of node `j`; the
    /// outer halves of the edge nodes are empty.
    pub fn half_cell(&self, j: usize, right: bool) -> (f64, f64) {
        let e = self.node(j);
        match right {
            false if j == 0 => (e, e),
            false => (self.midpoint(j - 1), e),
            true if j == self.points - 1 => (e, e),
            true => (e, self.midpoint(j)),
        }
    }

    /// Boundary between the cells of nodes `j` and `j + 1`, shared bitwise
    /// by both neighbours.
    fn midpoint(&self, j: usize) -> f64 {
        (j as f64 - self.center() as f64 + 0.5) * self.spacing()
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.weight(j)).collect()
    }

    /// Nearest node to `x`, and whether `x` was outside the grid's cells.
    pub fn nearest(&self, x: f64) -> (usize, bool) {
        let h = self.spacing();
        let c = self.center() as f64;
        let pos = (x / h).round() + c;
        if pos < 0.0 {
            (0, true)
        } else if pos > (self.points - 1) as f64 {
            (self.points - 1, true)
        } else {
            (pos as usize, false)
        }
    }

    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.points);
        let inner: f64 = values[1..self.points - 1].iter().sum();
        self.spacing() * (inner + 0.5 * (values[0] + values[self.points - 1]))
    }

    /// Linear interpolation of a node table at `x`, zero outside the grid.
    ///
    /// Negative arguments are interpolated from the mirrored side with the
    /// same arithmetic as positive ones, so an even table gives bitwise
    /// `interp(v, -x) == interp(v, x)`.
    pub fn interp(&self, values: &[f64], x: f64) -> f64 {
        let h = self.spacing();
        let c = self.center();
        let u = x.abs() / h;
        if u > c as f64 {
            return 0.0;
        }
        let i0 = u.floor() as usize;
        let frac = u - i0 as f64;
        if x >= 0.0 {
            let lo = values[c + i0];
            let hi = if c + i0 + 1 < self.points {
                values[c + i0 + 1]
            } else {
                0.0
            };
            (1.0 - frac) * lo + frac * hi
        } else {
            let lo = values[c - i0];
            let hi = if i0 < c { values[c - i0 - 1] } else { 0.0 };
            (1.0 - frac) * lo + frac * hi
        }
    }

    /// Linear interpolation clamped to the boundary values outside the grid.
    pub fn interp_clamped(&self, values: &[f64], x: f64) -> f64 {
        let l = self.half_width;
        if x >= l {
            values[self.points - 1]
        } else if x <= -l {
            values[0]
        } else {
            self.interp(values, x)
        }
    }
}

/// Density sampled on the nodes of a [`Grid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedDensity {
    grid: Grid,
    values: Vec<f64>,
}

impl TabulatedDensity {
    /// Wraps node values without normalizing them.
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.points() {
            return Err(Error::Domain(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.points()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Domain(
                "density values must be finite and >= 0".into(),
            ));
        }
        Ok(TabulatedDensity { grid, values })
    }

    /// Wraps node values and rescales them to unit trapezoid mass.
    pub fn normalized(grid: Grid, values: Vec<f64>) -> Result<Self> {
        let mut d = TabulatedDensity::new(grid, values)?;
        let mass = d.integral();
        if !(mass >= MIN_GRID_MASS) {
            return Err(Error::DegenerateGrid { mass });
        }
        d.values.iter_mut().for_each(|v| *v /= mass);
        Ok(d)
    }

    pub(crate) fn from_parts_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        TabulatedDensity { grid, values }
    }

    /// All mass in the cell of node `j`.
    pub fn point_mass(grid: Grid, j: usize) -> Self {
        let mut values = vec![0.0; grid.points()];
        values[j] = 1.0 / grid.weight(j);
        TabulatedDensity { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn integral(&self) -> f64 {
        self.grid.trapezoid(&self.values)
    }

    /// Node probabilities `t_j d_j`.
    pub fn masses(&self) -> Vec<f64> {
        self.values
            .iter()
            .enumerate()
            .map(|(j, v)| self.grid.weight(j) * v)
            .collect()
    }

    /// `∫ e d(e) de / ∫ d(e) de`, summed in mirrored pairs so an even table
    /// has mean exactly zero.
    pub fn mean(&self) -> f64 {
        let g = &self.grid;
        let c = g.center();
        let mut num = 0.0;
        let mut den = 0.0;
        for j in 0..c {
            let m = g.mirror(j);
            let (pj, pm) = (g.weight(j) * self.values[j], g.weight(m) * self.values[m]);
            num += g.node(j) * pj + g.node(m) * pm;
            den += pj + pm;
        }
        den += g.weight(c) * self.values[c];
        num / den
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let g = &self.grid;
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, v) in self.values.iter().enumerate() {
            let p = g.weight(j) * v;
            let d = g.node(j) - mean;
            num += d * d * p;
            den += p;
        }
        num / den
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.grid.interp(&self.values, x)
    }

    /// Largest `|v_j − v_{M−1−j}|`.
    pub fn asymmetry(&self) -> f64 {
        (0..self.grid.center())
            .map(|j| (self.values[j] - self.values[self.grid.mirror(j)]).abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_distance(&self, other: &TabulatedDensity) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Evaluates `spec` at the grid nodes and renormalizes to unit mass.
///
/// An even `spec` is evaluated on `e ≤ 0` and mirrored, so its table is
/// exactly even.
pub fn discretize(spec: &DensitySpec, grid: &Grid) -> Result<TabulatedDensity> {
    let even = spec.is_even();
    let values: Vec<f64> = grid
        .nodes()
        .into_iter()
        .map(|x| spec.pdf(if even { -x.abs() } else { x }))
        .collect();
    TabulatedDensity::normalized(*grid, values)
}

/// System, penalty, horizon and the noise / initial-state densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub a: f64,
    pub lambda: f64,
    pub horizon: usize,
    pub noise: DensitySpec,
    /// Density of the initial state `x_0`.
    pub init: DensitySpec,
    /// Mean of `x_0`.
    pub init_mean: f64,
}

impl ProblemSpec {
    /// Instance whose noise and initial state both follow `make_bimodal_mixture(mu)`.
    pub fn bimodal(a: f64, lambda: f64, horizon: usize, mu: f64) -> Result<Self> {
        let noise = make_bimodal_mixture(mu)?;
        let spec = ProblemSpec {
            a,
            lambda,
            horizon,
            init: noise.clone(),
            noise,
            init_mean: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() || self.a == 0.0 {
            return Err(Error::InvalidSpec(format!(
                "system coefficient a = {} must be finite and non-zero",
                self.a
            )));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "penalty lambda = {} must be >= 0",
                self.lambda
            )));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidSpec("horizon must be >= 1".into()));
        }
        if !self.init_mean.is_finite() {
            return Err(Error::InvalidSpec("initial mean must be finite".into()));
        }
        self.noise.validate()?;
        self.init.validate()?;
        let var = self.noise.variance();
        if !var.is_finite() || var <= 0.0 {
            return Err(Error::InvalidSpec(
                "noise variance must be finite and positive".into(),
            ));
        }
        let init_sd = self.init.variance().sqrt();
        if (self.init.mean() - self.init_mean).abs() > 1e-6 * init_sd.max(1.0) {
            return Err(Error::InvalidSpec(format!(
                "initial density has mean {}, but init_mean = {}",
                self.init.mean(),
                self.init_mean
            )));
        }
        Ok(())
    }

    /// Density of `e_0 = x_0 − x̄_0`.
    pub fn init_error(&self) -> DensitySpec {
        self.init.shifted(self.init_mean)
    }

    /// Error variance at the last stage when nothing is ever transmitted.
    pub fn open_loop_variance(&self) -> f64 {
        let a2 = self.a * self.a;
        let n = self.horizon as i32;
        let noise_sum: f64 = (0..n - 1).map(|i| a2.powi(i)).sum();
        self.init.variance() * a2.powi(n - 1) + self.noise.variance() * noise_sum
    }
}

/// Grid wide enough for the open-loop error spread: `L = k_sigma · σ_max`.
pub fn auto_grid(spec: &ProblemSpec, k_sigma: f64, points: usize) -> Result<Grid> {
    if !(k_sigma >= 4.0) {
        return Err(Error::Domain(format!("k_sigma = {k_sigma} must be >= 4")));
    }
    Grid::new(k_sigma * spec.open_loop_variance().sqrt(), points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_gauss_spec(a: f64, horizon: usize) -> ProblemSpec {
        ProblemSpec {
            a,
            lambda: 0.5,
            horizon,
            noise: DensitySpec::gaussian(0.0, 1.0),
            init: DensitySpec::gaussian(0.0, 1.0),
            init_mean: 0.0,
        }
    }

    #[test]
    fn mixture_zero_is_standard_normal() {
        let spec = make_bimodal_mixture(0.0).unwrap();
        assert_abs_diff_eq!(spec.variance(), 1.0, epsilon = 1e-15);
        for x in [-2.0, -0.3, 0.0, 1.7] {
            assert_abs_diff_eq!(spec.pdf(x), normal_pdf(x, 0.0, 1.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn evenness_and_mirrored_tables() {
        assert!(make_bimodal_mixture(0.7).unwrap().is_even());
        let three = DensitySpec::GaussianMixture {
            weights: vec![0.25, 0.5, 0.25],
            means: vec![-1.2, 0.0, 1.2],
            sigmas: vec![0.3, 0.5, 0.3],
        };
        assert!(three.is_even());
        assert!(!DensitySpec::gaussian(0.1, 1.0).is_even());
        let lopsided = DensitySpec::GaussianMixture {
            weights: vec![0.5, 0.5],
            means: vec![-1.0, 1.0],
            sigmas: vec![0.3, 0.4],
        };
        assert!(!lopsided.is_even());
        let tab = DensitySpec::Tabulated {
            abscissae: vec![-1.0, 0.0, 1.0],
            values: vec![0.5, 1.0, 0.5],
        };
        assert!(tab.is_even());

        let grid = Grid::new(9.0, 301).unwrap();
        let d = discretize(&three, &grid).unwrap();
        assert_eq!(d.asymmetry(), 0.0);
    }

    #[test]
    fn mixture_sigma_formula() {
        let DensitySpec::GaussianMixture { sigmas, means, .. } =
            make_bimodal_mixture(0.95).unwrap()
        else {
            panic!("expected a mixture");
        };
        assert_abs_diff_eq!(sigmas[0], 0.0975f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(sigmas[0], 0.31225, epsilon = 1e-5);
        assert_eq!(means, vec![0.95, -0.95]);
    }

    #[test]
    fn mixture_rejects_out_of_range() {
        assert!(matches!(make_bimodal_mixture(1.0), Err(Error::Domain(_))));
        assert!(matches!(make_bimodal_mixture(-0.1), Err(Error::Domain(_))));
        assert!(make_bimodal_mixture(f64::NAN).is_err());
    }

    #[test]
    fn mixture_quadrature_variance_is_one() {
        for mu in [0.0, 0.5, 0.8, 0.95, 0.99] {
            let spec = ProblemSpec::bimodal(1.0, 0.5, 1, mu).unwrap();
            let grid = auto_grid(&spec, DEFAULT_K_SIGMA, DEFAULT_POINTS).unwrap();
            let d = discretize(&spec.noise, &grid).unwrap();
            assert_abs_diff_eq!(d.integral(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(d.mean(), 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(d.variance(), 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn discretize_standard_normal_peak() {
        let grid = Grid::new(8.0, 2001).unwrap();
        let d = discretize(&DensitySpec::gaussian(0.0, 1.0), &grid).unwrap();
        let peak = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert_abs_diff_eq!(d.values()[grid.center()], peak, epsilon = 1e-4);
    }

    #[test]
    fn discretize_mixture_is_exactly_symmetric() {
        let grid = Grid::new(8.0, 2001).unwrap();
        let d = discretize(&make_bimodal_mixture(0.95).unwrap(), &grid).unwrap();
        for j in 0..grid.points() {
            assert_eq!(d.values()[j], d.values()[grid.mirror(j)]);
        }
    }

    #[test]
    fn discretize_tabulated_is_idempotent() {
        let grid = Grid::new(6.0, 301).unwrap();
        let d = discretize(&make_bimodal_mixture(0.7).unwrap(), &grid).unwrap();
        let spec = DensitySpec::Tabulated {
            abscissae: grid.nodes(),
            values: d.values().to_vec(),
        };
        spec.validate().unwrap();
        let again = discretize(&spec, &grid).unwrap();
        assert!(again.sup_distance(&d) < 1e-12);
    }

    #[test]
    fn discretize_off_grid_density_is_degenerate() {
        let grid = Grid::new(1.0, 11).unwrap();
        let err = discretize(&DensitySpec::gaussian(100.0, 0.1), &grid).unwrap_err();
        assert!(matches!(err, Error::DegenerateGrid { .. }));
    }

    #[test]
    fn auto_grid_examples() {
        let g = auto_grid(&unit_gauss_spec(1.0, 10), 8.0, 2001).unwrap();
        assert_abs_diff_eq!(g.half_width(), 8.0 * 10f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(g.half_width(), 25.30, epsilon = 5e-3);

        let g = auto_grid(&unit_gauss_spec(1.0, 1), 8.0, 2001).unwrap();
        assert_abs_diff_eq!(g.half_width(), 8.0, epsilon = 1e-12);

        let g = auto_grid(&unit_gauss_spec(0.5, 2), 8.0, 2001).unwrap();
        assert_abs_diff_eq!(g.half_width(), 8.0 * 1.25f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(g.half_width(), 8.944, epsilon = 1e-3);

        assert!(auto_grid(&unit_gauss_spec(1.0, 1), 3.0, 2001).is_err());
    }

    #[test]
    fn grid_rejects_even_or_tiny() {
        assert!(Grid::new(1.0, 4).is_err());
        assert!(Grid::new(1.0, 1).is_err());
        assert!(Grid::new(0.0, 5).is_err());
        let g = Grid::new(2.0, 5).unwrap();
        assert_eq!(g.nodes(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(g.nearest(0.4), (2, false));
        assert_eq!(g.nearest(7.0), (4, true));
        assert_eq!(g.nearest(-2.4), (0, false));
    }

    #[test]
    fn interp_is_mirror_exact() {
        let grid = Grid::new(3.0, 61).unwrap();
        let d = discretize(&make_bimodal_mixture(0.6).unwrap(), &grid).unwrap();
        for x in [0.013, 0.77, 1.2345, 2.999] {
            assert_eq!(d.eval(x), d.eval(-x));
        }
        assert_eq!(d.eval(3.5), 0.0);
        assert_abs_diff_eq!(d.eval(grid.node(40)), d.values()[40], epsilon = 1e-15);
    }

    #[test]
    fn spec_validation() {
        let mut s = unit_gauss_spec(1.0, 3);
        s.a = 0.0;
        assert!(s.validate().is_err());
        let mut s = unit_gauss_spec(1.0, 3);
        s.lambda = -1.0;
        assert!(s.validate().is_err());
        let mut s = unit_gauss_spec(1.0, 3);
        s.horizon = 0;
        assert!(s.validate().is_err());
        let mut s = unit_gauss_spec(1.0, 3);
        s.init_mean = 2.0;
        assert!(s.validate().is_err());
        let bad = DensitySpec::GaussianMixture {
            weights: vec![0.5, 0.4],
            means: vec![0.0, 0.0],
            sigmas: vec![1.0, 1.0],
        };
        assert!(bad.validate().is_err());
        let ok = DensitySpec::Tabulated {
            abscissae: vec![0.0, 1.0],
            values: vec![1.0, 1.0],
        };
        assert!(ok.validate().is_ok());
        let bad = DensitySpec::Tabulated {
            abscissae: vec![0.0, 1.0],
            values: vec![1.0, 2.0],
        };
        assert!(bad.validate().is_err());
    }
}
