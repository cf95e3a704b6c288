//! Estimating the number of classes in a population from
//! frequency-of-frequencies data under a zero-truncated Poisson mixture.
//!
//! The number of classes `c` is tied to the odds `θ` that a class goes
//! undetected through `c ≈ n (1 + θ)`. Because `θ` cannot be bounded above
//! from data, the crate provides identifiable lower bounds and one-sided
//! inference:
//!
//! - [`hankel`]: the increasing ladder `θ_1 < θ_2 < …` of moment-based lower
//!   bounds, its rank estimate `χ̂`, quadrature representations and
//!   delta-method standard errors;
//! - [`classical`]: closed-form coverage functionals and pseudo-MLEs for `c`;
//! - [`npmle`]: the nonparametric MLE of the mixing distribution;
//! - [`envelope`]: a conservative lower confidence limit for `θ` from a
//!   Kolmogorov band, solved as a linear program;
//! - [`affinity`]: the binomial/Poisson testing affinity that lower-bounds
//!   the chance an honest upper limit for `c` is infinite;
//! - [`pathology`]: a contamination family showing numerically that `θ` is
//!   discontinuous in total variation and Hellinger distance;
//! - [`montecarlo`]: simulation, model-based bootstrap and coverage runs;
//! - [`report`]: the end-to-end analysis bundle.

pub mod affinity;
pub mod classical;
pub mod envelope;
pub mod error;
pub mod hankel;
pub mod ingest;
pub mod linalg;
pub mod mixing;
pub mod montecarlo;
pub mod npmle;
pub mod pathology;
pub mod report;
pub mod simplex;

pub use error::{Error, Result};
pub use ingest::FrequencyData;
pub use mixing::{MixingDistribution, PopulationModel};
