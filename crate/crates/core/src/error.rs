use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A problem or density description violates its invariants.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    /// Almost no probability mass landed on the grid.
    #[error("degenerate grid: only {mass:e} of the density's mass lies on the grid")]
    DegenerateGrid { mass: f64 },

    /// Propagation pushed a non-negligible amount of mass past the grid edge.
    #[error("grid overflow: {lost:e} of the mass left the grid (limit {limit:e})")]
    GridOverflow { lost: f64, limit: f64 },

    /// Monte Carlo paths left the grid too often for nearest-node policy lookup.
    #[error("simulation clamp rate {rate:e} exceeds {limit:e}")]
    ClampRate { rate: f64, limit: f64 },

    /// Two evaluations of the same quantity disagree (usually a grid that is too coarse).
    #[error("numerical inconsistency: {0}")]
    NumericalInconsistency(String),

    /// The exhaustive oracle refuses instances beyond its enumeration budget.
    #[error("oracle limit exceeded: {0}")]
    OracleLimit(String),
}
