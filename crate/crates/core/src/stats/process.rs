use serde::{Deserialize, Serialize};

use super::rng::RandomStream;
use super::units::{ArrivalRate, ProbeFraction};

/// One arrival with its probe tag; `time` is seconds from the window start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaggedArrival {
    pub time: f64,
    pub is_probe: bool,
}

/// Arrival times of a homogeneous Poisson process on `[0, duration)`.
pub fn sample_poisson_process(
    rate: ArrivalRate,
    duration: f64,
    rng: &mut RandomStream,
) -> Vec<f64> {
    sample_arrivals_between(rate, 0.0, duration, rng)
}

/// Arrival times on `[start, end)` of the absolute clock, built from
/// exponential gaps. Every returned `t` satisfies `start < t < end`.
pub(crate) fn sample_arrivals_between(
    rate: ArrivalRate,
    start: f64,
    end: f64,
    rng: &mut RandomStream,
) -> Vec<f64> {
    let mut times = Vec::new();
    if !(end > start) {
        return times;
    }
    let mut t = start;
    loop {
        t += rng.exponential(rate.value());
        if t >= end {
            break;
        }
        times.push(t);
    }
    times
}

/// Tags each arrival as a probe independently with probability `p`.
pub fn mark_probes(arrivals: &[f64], p: ProbeFraction, rng: &mut RandomStream) -> Vec<TaggedArrival> {
    arrivals
        .iter()
        .map(|&time| TaggedArrival {
            time,
            is_probe: p.value() >= 1.0 || rng.bernoulli(p.value()),
        })
        .collect()
}
