use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean vehicle arrival rate, stored in vehicles per second.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ArrivalRate(f64);

impl ArrivalRate {
    pub fn per_second(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(ArrivalRate(value))
        } else {
            Err(Error::invalid(format!(
                "arrival rate must be positive and finite, got {value} veh/s"
            )))
        }
    }

    pub fn from_vph(vph: f64) -> Result<Self> {
        Self::per_second(vph / 3600.0)
    }

    /// Vehicles per second.
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn vph(self) -> f64 {
        self.0 * 3600.0
    }
}

impl TryFrom<f64> for ArrivalRate {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::per_second(value)
    }
}

impl From<ArrivalRate> for f64 {
    fn from(rate: ArrivalRate) -> f64 {
        rate.0
    }
}

impl fmt::Display for ArrivalRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} veh/s", self.0)
    }
}

/// Fraction of vehicles that are probes. Zero is rejected: every estimator
/// either divides by `p` or conditions on probes existing.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ProbeFraction(f64);

impl ProbeFraction {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 && value <= 1.0 {
            Ok(ProbeFraction(value))
        } else {
            Err(Error::invalid(format!(
                "probe fraction must lie in (0, 1], got {value}"
            )))
        }
    }

    pub fn from_percent(percent: f64) -> Result<Self> {
        Self::new(percent / 100.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ProbeFraction {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ProbeFraction> for f64 {
    fn from(p: ProbeFraction) -> f64 {
        p.0
    }
}

/// Length of the interval over which probe data are accumulated, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ObservationWindow(f64);

impl ObservationWindow {
    pub fn from_seconds(seconds: f64) -> Result<Self> {
        if seconds.is_finite() && seconds > 0.0 {
            Ok(ObservationWindow(seconds))
        } else {
            Err(Error::invalid(format!(
                "observation window must be positive and finite, got {seconds} s"
            )))
        }
    }

    pub fn from_minutes(minutes: f64) -> Result<Self> {
        Self::from_seconds(minutes * 60.0)
    }

    pub fn seconds(self) -> f64 {
        self.0
    }

    pub fn minutes(self) -> f64 {
        self.0 / 60.0
    }
}

impl TryFrom<f64> for ObservationWindow {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::from_seconds(value)
    }
}

impl From<ObservationWindow> for f64 {
    fn from(w: ObservationWindow) -> f64 {
        w.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vph_conversion() {
        let rate = ArrivalRate::from_vph(1200.0).unwrap();
        assert!((rate.value() - 1.0 / 3.0).abs() < 1e-15);
        assert!((rate.vph() - 1200.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_out_of_domain() {
        assert!(ArrivalRate::per_second(0.0).is_err());
        assert!(ArrivalRate::per_second(f64::NAN).is_err());
        assert!(ArrivalRate::per_second(f64::INFINITY).is_err());
        assert!(ProbeFraction::new(0.0).is_err());
        assert!(ProbeFraction::new(1.0 + 1e-12).is_err());
        assert!(ProbeFraction::new(1.0).is_ok());
        assert!(ObservationWindow::from_seconds(-1.0).is_err());
        assert!(ObservationWindow::from_minutes(0.0).is_err());
    }

    #[test]
    fn minutes_round_trip() {
        let w = ObservationWindow::from_minutes(15.0).unwrap();
        assert_eq!(w.seconds(), 900.0);
        assert_eq!(w.minutes(), 15.0);
    }

    #[test]
    fn serde_validates() {
        assert!(serde_json::from_str::<ProbeFraction>("0.0").is_err());
        let p: ProbeFraction = serde_json::from_str("0.25").unwrap();
        assert_eq!(p.value(), 0.25);
    }
}
