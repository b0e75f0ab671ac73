//! Joint design of an event-trigger and a remote state estimator for the
//! scalar system `x_{k+1} = a x_k + w_k` over a finite horizon.
//!
//! The sensor decides at every stage whether to send `x_k` (cost `λ`) or stay
//! silent; the estimator adds a bias `α_{k,τ}` to the linear predictor while
//! no update arrives. [`codesign::iterate`] alternates backward dynamic
//! programming for the trigger ([`dp`]) with conditional-mean updates of the
//! bias ([`density`]). [`simulator`] and [`oracle`] provide independent checks.

pub mod codesign;
pub mod density;
pub mod dp;
pub mod error;
pub mod instance;
pub mod kernel;
pub mod model;
pub mod oracle;
pub mod simulator;

pub use codesign::{iterate, symmetric_baseline, CodesignResult, IterationTrace};
pub use dp::{AlphaMap, Policy, ValueTable};
pub use error::{Error, Result};
pub use instance::Instance;
pub use model::{DensitySpec, Grid, ProblemSpec, TabulatedDensity};
pub use simulator::{SimConfig, SimReport};
