use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::TransitionKernel;
use crate::model::{auto_grid, discretize, Grid, ProblemSpec, TabulatedDensity, NOISE_MEAN_TOL};

/// A problem spec discretized on a grid, with its transition kernel.
///
/// Cheap to clone; the kernel is shared.
#[derive(Clone, Debug)]
pub struct Instance {
    spec: ProblemSpec,
    grid: Grid,
    noise: TabulatedDensity,
    init_error: TabulatedDensity,
    kernel: Arc<TransitionKernel>,
}

impl Instance {
    pub fn new(spec: ProblemSpec, grid: Grid) -> Result<Self> {
        spec.validate()?;
        let noise = discretize(&spec.noise, &grid)?;
        let mean = noise.mean();
        if mean.abs() >= NOISE_MEAN_TOL {
            return Err(Error::InvalidSpec(format!(
                "noise must be zero-mean, discretized mean is {mean:e}"
            )));
        }
        let init_error = discretize(&spec.init_error(), &grid)?;
        let kernel = Arc::new(TransitionKernel::new(spec.a, &noise));
        Ok(Instance {
            spec,
            grid,
            noise,
            init_error,
            kernel,
        })
    }

    /// Discretizes on `auto_grid(spec, k_sigma, points)`.
    pub fn auto(spec: ProblemSpec, k_sigma: f64, points: usize) -> Result<Self> {
        spec.validate()?;
        let grid = auto_grid(&spec, k_sigma, points)?;
        Instance::new(spec, grid)
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }

    pub fn noise(&self) -> &TabulatedDensity {
        &self.noise
    }

    /// Tabulated density of `e_0 = x_0 − x̄_0`.
    pub fn init_error(&self) -> &TabulatedDensity {
        &self.init_error
    }

    pub fn kernel(&self) -> &TransitionKernel {
        &self.kernel
    }
}
