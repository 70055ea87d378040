//! Zero-inflated Poisson mixtures for estimating the ratio of a rare
//! component's rate to a common component's rate.
//!
//! Each site carries a latent component label shared across days, each
//! cell carries an independent "observable" indicator, and the recorded
//! count is the product of that indicator with a Poisson draw whose mean is
//! the day's exposure times the component rate.

pub mod bayes;
pub mod em;
pub mod em_mixture;
pub mod em_zipm;
pub mod error;
pub mod info;
pub mod integrated;
pub mod interval;
pub mod mcmc;
pub mod model;
pub mod numeric;
pub mod observed;
pub mod quadrature;
pub mod simulate;
pub mod ztp;

pub use error::{Error, Result};
pub use interval::IntervalEstimate;
pub use model::{Counts, DataSet, ExposureGrid, ModelParams, PiPrior, PriorSpec};
