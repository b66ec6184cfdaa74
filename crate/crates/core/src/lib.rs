//! Estimation of sensitivity and specificity of maternal-death reporting in
//! civil registration and vital statistics (CRVS) data.
//!
//! Deaths fall into six boxes by registration status and by true versus
//! reported maternal cause. Specialized studies reveal, for a country-period,
//! some of those boxes. A hierarchical model with bivariate random walks for
//! transformed sensitivity and specificity pools the studies across countries
//! and years; its posterior gives adjustment factors for reported proportions
//! maternal.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bmat;
pub mod completeness;
pub mod error;
pub mod io;
pub mod likelihood;
pub mod mcmc;
pub mod postprocess;
pub mod process;
pub mod rng;
pub mod simulator;
pub mod stats;
pub mod types;
pub mod validation;

pub use error::{Error, Result};
pub use likelihood::{GammaFour, StudyLikelihood};
pub use mcmc::{fit_global, McmcConfig, PosteriorSamples};
pub use process::{CountryPath, HyperParams};
pub use types::{CrvsYearRecord, Dataset, SixBoxCounts, StudyKind, StudyObservation};
