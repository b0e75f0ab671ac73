//! Monte Carlo simulation of the closed loop in original state coordinates:
//! plant, erasure channel, linear predictor and the biased estimator.
//!
//! Path `p` draws from a ChaCha stream selected by `(seed, p)`, and partial
//! sums are reduced in fixed blocks of paths, so reports do not depend on
//! the thread count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{AlphaMap, Policy};
use crate::error::{Error, Result};
use crate::model::{DensitySpec, ProblemSpec};

pub const DEFAULT_SAMPLES: usize = 100_000;

/// Largest tolerated fraction of policy lookups outside the grid.
pub const CLAMP_LIMIT: f64 = 1e-4;

const BLOCK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub samples: usize,
    pub mc_cost: f64,
    pub std_error: f64,
    pub transmit_rate: f64,
    pub per_stage_cost: Vec<f64>,
    pub clamp_count: u64,
    /// Largest `|(x_k − x̂_k)² − (e_k − ê_k)²|` over all paths and stages.
    pub max_identity_gap: f64,
}

/// Draws from a density description.
#[derive(Clone, Debug)]
pub enum Sampler {
    Mixture {
        cumulative: Vec<f64>,
        means: Vec<f64>,
        sigmas: Vec<f64>,
    },
    /// Tabulated densities are sampled as atoms at their abscissae, weighted
    /// by trapezoid cell mass.
    Atoms {
        points: Vec<f64>,
        cumulative: Vec<f64>,
    },
}

impl Sampler {
    pub fn new(spec: &DensitySpec) -> Self {
        match spec {
            DensitySpec::GaussianMixture {
                weights,
                means,
                sigmas,
            } => Sampler::Mixture {
                cumulative: cumulative(weights.iter().cloned()),
                means: means.clone(),
                sigmas: sigmas.clone(),
            },
            DensitySpec::Tabulated { abscissae, values } => {
                let n = abscissae.len();
                let cell = |i: usize| {
                    let left = if i > 0 {
                        abscissae[i] - abscissae[i - 1]
                    } else {
                        0.0
                    };
                    let right = if i + 1 < n {
                        abscissae[i + 1] - abscissae[i]
                    } else {
                        0.0
                    };
                    0.5 * (left + right)
                };
                Sampler::Atoms {
                    points: abscissae.clone(),
                    cumulative: cumulative((0..n).map(|i| cell(i) * values[i])),
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Mixture {
                cumulative,
                means,
                sigmas,
            } => {
                let i = pick(cumulative, rng.random::<f64>());
                let z: f64 = rng.sample(StandardNormal);
                means[i] + sigmas[i] * z
            }
            Sampler::Atoms { points, cumulative } => points[pick(cumulative, rng.random::<f64>())],
        }
    }
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    let total = acc;
    out.iter_mut().for_each(|c| *c /= total);
    out
}

fn pick(cumulative: &[f64], u: f64) -> usize {
    let i = cumulative.partition_point(|&c| c <= u);
    // skip zero-weight entries at the top end
    i.min(cumulative.len() - 1)
}

pub fn sample_density<R: Rng + ?Sized>(spec: &DensitySpec, rng: &mut R) -> f64 {
    Sampler::new(spec).sample(rng)
}

#[derive(Clone, Copy, Debug, Default)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    fn merge(&mut self, other: &Kahan) {
        self.add(other.sum);
        self.add(-other.comp);
    }
}

#[derive(Clone, Debug)]
struct Partial {
    cost: Kahan,
    cost_sq: Kahan,
    stage: Vec<Kahan>,
    transmissions: u64,
    clamps: u64,
    gap: f64,
}

impl Partial {
    fn new(horizon: usize) -> Self {
        Partial {
            cost: Kahan::default(),
            cost_sq: Kahan::default(),
            stage: vec![Kahan::default(); horizon],
            transmissions: 0,
            clamps: 0,
            gap: 0.0,
        }
    }

    fn merge(&mut self, other: &Partial) {
        self.cost.merge(&other.cost);
        self.cost_sq.merge(&other.cost_sq);
        for (a, b) in self.stage.iter_mut().zip(&other.stage) {
            a.merge(b);
        }
        self.transmissions += other.transmissions;
        self.clamps += other.clamps;
        self.gap = self.gap.max(other.gap);
    }
}

struct Loop<'a> {
    spec: &'a ProblemSpec,
    policy: &'a Policy,
    alpha: &'a AlphaMap,
    init: Sampler,
    noise: Sampler,
}

impl Loop<'_> {
    fn run_path(&self, seed: u64, path: u64, out: &mut Partial) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path);
        let grid = self.policy.grid();
        let a = self.spec.a;
        let lambda = self.spec.lambda;
        let mut x = self.init.sample(&mut rng);
        // a·x̂^LP_{k−1}, the estimator's prior before stage k
        let mut prior = self.spec.init_mean;
        let mut tau: isize = -1;
        let mut total = 0.0;
        for k in 0..self.policy.horizon() {
            let e = x - prior;
            let (_, clamped) = grid.nearest(e);
            if clamped {
                out.clamps += 1;
            }
            let transmit = self.policy.transmits(k, tau, e);
            let (cost, predictor) = if transmit {
                out.transmissions += 1;
                (lambda, x)
            } else {
                let bias = self.alpha.get(k, tau);
                let estimate = prior + bias;
                let err_x = (x - estimate) * (x - estimate);
                let err_e = (e - bias) * (e - bias);
                out.gap = out.gap.max((err_x - err_e).abs());
                (err_x, prior)
            };
            out.stage[k].add(cost);
            total += cost;
            if transmit {
                tau = k as isize;
            }
            x = a * x + self.noise.sample(&mut rng);
            prior = a * predictor;
        }
        out.cost.add(total);
        out.cost_sq.add(total * total);
    }
}

/// Simulates `cfg.samples` independent closed-loop paths.
pub fn run_closed_loop(
    spec: &ProblemSpec,
    policy: &Policy,
    alpha: &AlphaMap,
    cfg: &SimConfig,
) -> Result<SimReport> {
    spec.validate()?;
    let horizon = spec.horizon;
    if policy.horizon() != horizon || alpha.horizon() != horizon {
        return Err(Error::Domain(
            "policy and bias map must match the horizon".into(),
        ));
    }
    if cfg.samples == 0 {
        return Err(Error::Domain("at least one sample path is required".into()));
    }
    let sim = Loop {
        spec,
        policy,
        alpha,
        init: Sampler::new(&spec.init),
        noise: Sampler::new(&spec.noise),
    };
    let blocks = cfg.samples.div_ceil(BLOCK);
    let partials: Vec<Partial> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut part = Partial::new(horizon);
            let end = ((b + 1) * BLOCK).min(cfg.samples);
            for path in b * BLOCK..end {
                sim.run_path(cfg.seed, path as u64, &mut part);
            }
            part
        })
        .collect();
    let mut total = Partial::new(horizon);
    for p in &partials {
        total.merge(p);
    }
    let n = cfg.samples as f64;
    let mean = total.cost.sum / n;
    let var = if cfg.samples > 1 {
        ((total.cost_sq.sum - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let lookups = n * horizon as f64;
    let clamp_rate = total.clamps as f64 / lookups;
    if clamp_rate >= CLAMP_LIMIT {
        return Err(Error::ClampRate {
            rate: clamp_rate,
            limit: CLAMP_LIMIT,
        });
    }
    Ok(SimReport {
        samples: cfg.samples,
        mc_cost: mean,
        std_error: (var / n).sqrt(),
        transmit_rate: total.transmissions as f64 / lookups,
        per_stage_cost: total.stage.iter().map(|s| s.sum / n).collect(),
        clamp_count: total.clamps,
        max_identity_gap: total.gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_bimodal_mixture, Grid};

    fn moments(spec: &DensitySpec, n: usize, seed: u64) -> (f64, f64) {
        let sampler = Sampler::new(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        (mean, var)
    }

    #[test]
    fn gaussian_sample_moments() {
        let (mean, var) = moments(&make_bimodal_mixture(0.0).unwrap(), 1_000_000, 7);
        assert!(mean.abs() < 0.004, "{mean}");
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn bimodal_sample_variance() {
        let (_, var) = moments(&make_bimodal_mixture(0.95).unwrap(), 1_000_000, 11);
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }

    #[test]
    fn tabulated_point_mass_is_constant() {
        let grid = Grid::new(2.0, 21).unwrap();
        let mut values = vec![0.0; 21];
        values[13] = 1.0 / grid.spacing();
        let spec = DensitySpec::Tabulated {
            abscissae: grid.nodes(),
            values,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(sample_density(&spec, &mut rng), grid.node(13));
        }
    }

    #[test]
    fn always_trigger_costs_lambda_per_stage() {
        let spec = ProblemSpec::bimodal(1.0, 0.5, 10, 0.5).unwrap();
        let grid = Grid::new(30.0, 601).unwrap();
        let policy = Policy::always(grid, 10);
        let cfg = SimConfig {
            samples: 5000,
            seed: 9,
        };
        let r = run_closed_loop(&spec, &policy, &AlphaMap::zeros(10), &cfg).unwrap();
        assert_eq!(r.mc_cost, 5.0);
        assert_eq!(r.std_error, 0.0);
        assert_eq!(r.transmit_rate, 1.0);
    }

    #[test]
    fn reports_are_deterministic_and_identity_holds() {
        let spec = ProblemSpec::bimodal(1.0, 0.5, 6, 0.9).unwrap();
        let grid = Grid::new(25.0, 501).unwrap();
        let policy = Policy::from_fn(grid, 6, |_, _, e| !(-0.3..=1.2).contains(&e));
        let alpha = AlphaMap::constant(6, 0.4);
        let cfg = SimConfig {
            samples: 10_000,
            seed: 42,
        };
        let a = run_closed_loop(&spec, &policy, &alpha, &cfg).unwrap();
        let b = run_closed_loop(&spec, &policy, &alpha, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.max_identity_gap < 1e-9);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let c = pool
            .install(|| run_closed_loop(&spec, &policy, &alpha, &cfg))
            .unwrap();
        assert_eq!(a, c);
        let d = run_closed_loop(&spec, &policy, &alpha, &SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.mc_cost, d.mc_cost);
    }

    #[test]
    fn narrow_grid_trips_clamp_limit() {
        let spec = ProblemSpec::bimodal(1.0, 0.5, 5, 0.0).unwrap();
        let grid = Grid::new(1.0, 21).unwrap();
        let policy = Policy::never(grid, 5);
        let cfg = SimConfig {
            samples: 2000,
            seed: 1,
        };
        let err = run_closed_loop(&spec, &policy, &AlphaMap::zeros(5), &cfg).unwrap_err();
        assert!(matches!(err, Error::ClampRate { .. }));
    }
}
