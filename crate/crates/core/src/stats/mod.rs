//! Distribution functions, unit-checked parameter types and the random
//! sampling primitives the estimators and simulator build on.
//!
//! Internal units are seconds and vehicles per second. Conversions from
//! vehicles per hour and minutes happen in the constructors only.

mod normal;
mod poisson;
pub(crate) mod process;
mod rng;
mod units;

pub use normal::{normal_cdf, normal_quantile};
pub use poisson::{ln_gamma, poisson_cdf, poisson_interval_mass, poisson_pmf};
pub use process::{mark_probes, sample_poisson_process, TaggedArrival};
pub use rng::RandomStream;
pub use units::{ArrivalRate, ObservationWindow, ProbeFraction};
