//! Branch-misprediction laboratory for classic and dual-pivot Quicksort.
//!
//! * [`sorting`]: generalized Quicksort with pivot sampling and a branch
//!   event hook on every key comparison inside partitioning.
//! * [`predictor`]: 1-bit and 2-bit local branch predictors.
//! * [`analysis`]: exact leading-term coefficients of expected branch misses.
//! * [`oracles`]: quadrature, Markov chains, Dirichlet Monte Carlo, root finding.
//! * [`cost`]: combined bytecode plus branch-miss cost for classic Quicksort.
//! * [`experiment`]: seeded simulation runs and plot-data sweeps.

pub mod analysis;
pub mod cost;
pub mod error;
pub mod experiment;
pub mod oracles;
pub mod par;
pub mod predictor;
pub mod rng;
pub mod sorting;
pub mod verify;

pub use error::{Error, Result};
pub use predictor::{Outcome, PredictorState, PredictorTable, ResetPolicy, Scheme};
pub use sorting::{Algorithm, BranchSink, SamplingParam, SiteId, SortStats};
