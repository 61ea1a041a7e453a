//! Point estimators for the three information cases.
//!
//! Count-based estimators (one unknown): `λ̂ = N_p / (Δp)` and
//! `p̂ = N_p / (Δλ)`. Queue-based estimators (both unknown) use the red-phase
//! evidence of one signal cycle: the probe count `N_p`, the queue position
//! `L_p` of the last probe and the time `T_p` at which it joined the queue.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{ArrivalRate, ObservationWindow, ProbeFraction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    /// `N_p / (Δp)`.
    LambdaKnownP,
    /// `N_p / (Δλ)`.
    PKnownLambda,
    /// `N_p / L_p`.
    P1Naive,
    /// `L_p / T_p`.
    Lambda1Naive,
    /// `N_p / (L_p + (R − T_p)(L_p − N_p) / T_p)`.
    P2Corrected,
    /// `N_p / (Δ p̂₂)` with `N_p` counted over the whole window.
    LambdaJoint,
}

impl EstimatorId {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorId::LambdaKnownP => "lambda_known_p",
            EstimatorId::PKnownLambda => "p_known_lambda",
            EstimatorId::P1Naive => "p1_naive",
            EstimatorId::Lambda1Naive => "lambda1_naive",
            EstimatorId::P2Corrected => "p2_corrected",
            EstimatorId::LambdaJoint => "lambda_joint",
        }
    }

    pub fn estimates_probe_fraction(self) -> bool {
        matches!(
            self,
            EstimatorId::PKnownLambda | EstimatorId::P1Naive | EstimatorId::P2Corrected
        )
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What to do with a cycle (or replica) whose red phase saw no probe.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoProbePolicy {
    /// The cycle contributes an estimate of zero. Reproduces the published
    /// moment tables.
    #[default]
    ZeroFill,
    /// The cycle is dropped; estimates are conditional on `N_p ≥ 1`.
    Skip,
}

impl NoProbePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            NoProbePolicy::ZeroFill => "zero-fill",
            NoProbePolicy::Skip => "skip",
        }
    }
}

impl FromStr for NoProbePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero-fill" => Ok(NoProbePolicy::ZeroFill),
            "skip" => Ok(NoProbePolicy::Skip),
            other => Err(Error::invalid(format!(
                "unknown no-probe policy '{other}' (expected zero-fill or skip)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LastProbe {
    /// 1-based queue position counted from the stop bar.
    pub position: u32,
    /// Seconds from the start of red.
    pub time: f64,
}

/// Probe evidence collected during one red interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RedPhaseObservation {
    n_probes_red: u32,
    last_probe: Option<LastProbe>,
    red_duration: f64,
}

fn check_red_duration(red_duration: f64) -> Result<()> {
    if red_duration.is_finite() && red_duration > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "red duration must be positive and finite, got {red_duration}"
        )))
    }
}

impl RedPhaseObservation {
    pub fn without_probes(red_duration: f64) -> Result<Self> {
        check_red_duration(red_duration)?;
        Ok(RedPhaseObservation {
            n_probes_red: 0,
            last_probe: None,
            red_duration,
        })
    }

    pub fn new(
        n_probes_red: u32,
        last_probe_position: u32,
        last_probe_time: f64,
        red_duration: f64,
    ) -> Result<Self> {
        check_red_duration(red_duration)?;
        if n_probes_red == 0 {
            return Err(Error::invalid(
                "an observation with a last probe needs at least one probe",
            ));
        }
        if last_probe_position < n_probes_red {
            return Err(Error::invalid(format!(
                "last probe position {last_probe_position} is ahead of {n_probes_red} probes"
            )));
        }
        if !(last_probe_time > 0.0 && last_probe_time <= red_duration) {
            return Err(Error::invalid(format!(
                "last probe time {last_probe_time} outside (0, {red_duration}]"
            )));
        }
        Ok(RedPhaseObservation {
            n_probes_red,
            last_probe: Some(LastProbe {
                position: last_probe_position,
                time: last_probe_time,
            }),
            red_duration,
        })
    }

    pub fn n_probes_red(&self) -> u32 {
        self.n_probes_red
    }

    pub fn last_probe(&self) -> Option<LastProbe> {
        self.last_probe
    }

    pub fn last_probe_position(&self) -> Option<u32> {
        self.last_probe.map(|l| l.position)
    }

    pub fn last_probe_time(&self) -> Option<f64> {
        self.last_probe.map(|l| l.time)
    }

    pub fn red_duration(&self) -> f64 {
        self.red_duration
    }

    fn require_probe(&self) -> Result<LastProbe> {
        self.last_probe
            .ok_or_else(|| Error::not_estimable("no probe arrived during the red phase"))
    }
}

/// One full signal cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleRecord {
    pub red: RedPhaseObservation,
    pub n_probes_green: u32,
    /// Red-phase probes behind the last located probe (no queue position
    /// reported). Counted towards the window total only.
    pub n_probes_unlocated: u32,
    /// Simulator ground truth; absent for field data.
    pub n_arrivals_total: Option<u32>,
}

impl CycleRecord {
    pub fn new(red: RedPhaseObservation, n_probes_green: u32) -> Self {
        CycleRecord {
            red,
            n_probes_green,
            n_probes_unlocated: 0,
            n_arrivals_total: None,
        }
    }

    pub fn total_probes(&self) -> u64 {
        u64::from(self.red.n_probes_red) + u64::from(self.n_probes_green) + u64::from(self.n_probes_unlocated)
    }
}

/// A point estimate together with where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: EstimatorId,
    pub point: f64,
    pub theoretical_variance: Option<f64>,
    pub window: ObservationWindow,
    pub cycles_used: usize,
    pub cycles_skipped: usize,
    /// Set when a probe-fraction estimate exceeds one. The value is not clamped.
    pub out_of_range: bool,
}

/// `λ̂ = N_p / (Δp)`, in vehicles per second.
pub fn estimate_lambda_known_p(n_probes: u64, window: ObservationWindow, p: ProbeFraction) -> f64 {
    n_probes as f64 / (window.seconds() * p.value())
}

/// `p̂ = N_p / (Δλ)`. May exceed one in small samples.
pub fn estimate_p_known_lambda(n_probes: u64, window: ObservationWindow, lambda: ArrivalRate) -> f64 {
    n_probes as f64 / (window.seconds() * lambda.value())
}

/// `p̂₁ = N_p / L_p`.
pub fn estimate_p_naive(obs: &RedPhaseObservation) -> Result<f64> {
    let last = obs.require_probe()?;
    Ok(f64::from(obs.n_probes_red) / f64::from(last.position))
}

/// `λ̂₁ = L_p / T_p`, in vehicles per second.
pub fn estimate_lambda_naive(obs: &RedPhaseObservation) -> Result<f64> {
    let last = obs.require_probe()?;
    Ok(f64::from(last.position) / last.time)
}

/// `p̂₂ = N_p / (L_p + (R − T_p)(L_p − N_p) / T_p)`.
///
/// The second denominator term extrapolates the non-probe arrival rate seen
/// up to the last probe over the rest of the red interval.
pub fn estimate_p_corrected(obs: &RedPhaseObservation) -> Result<f64> {
    let last = obs.require_probe()?;
    let n = f64::from(obs.n_probes_red);
    let l = f64::from(last.position);
    let denom = l + (obs.red_duration - last.time) * (l - n) / last.time;
    Ok(n / denom)
}

/// `λ̂ = N_p / (Δ p̂)` with `N_p` counted over the whole window.
pub fn estimate_lambda_joint(n_probes_total: u64, window: ObservationWindow, p_hat: f64) -> Result<f64> {
    if !(p_hat.is_finite() && p_hat > 0.0) {
        return Err(Error::not_estimable(format!(
            "probe fraction estimate {p_hat} cannot scale a count"
        )));
    }
    Ok(n_probes_total as f64 / (window.seconds() * p_hat))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleDiagnostics {
    pub cycles_total: usize,
    pub cycles_without_probes: usize,
    /// Cycles left out of the p̂₂ average (non-zero only under `Skip`).
    pub cycles_skipped: usize,
    pub total_probes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointEstimate {
    pub p_hat: f64,
    /// Vehicles per second.
    pub lambda_hat: f64,
    pub diagnostics: CycleDiagnostics,
}

/// Aggregates per-cycle p̂₂ into one window estimate and scales the window's
/// probe total by it.
///
/// The aggregate is the unweighted mean of the per-cycle p̂₂. Cycles without
/// a red-phase probe either count as zero or are dropped, per `policy`.
pub fn combine_cycles(
    cycles: &[CycleRecord],
    window: ObservationWindow,
    policy: NoProbePolicy,
) -> Result<JointEstimate> {
    let mut sum = 0.0;
    let mut with_probes = 0usize;
    let mut total_probes = 0u64;
    for cycle in cycles {
        total_probes += cycle.total_probes();
        if let Ok(p2) = estimate_p_corrected(&cycle.red) {
            sum += p2;
            with_probes += 1;
        }
    }
    let without = cycles.len() - with_probes;
    let diagnostics = CycleDiagnostics {
        cycles_total: cycles.len(),
        cycles_without_probes: without,
        cycles_skipped: match policy {
            NoProbePolicy::ZeroFill => 0,
            NoProbePolicy::Skip => without,
        },
        total_probes,
    };
    if with_probes == 0 {
        return Err(Error::not_estimable(format!(
            "all {} cycles lack a red-phase probe",
            cycles.len()
        )));
    }
    let divisor = match policy {
        NoProbePolicy::ZeroFill => cycles.len(),
        NoProbePolicy::Skip => with_probes,
    };
    let p_hat = sum / divisor as f64;
    let lambda_hat = estimate_lambda_joint(total_probes, window, p_hat)?;
    Ok(JointEstimate {
        p_hat,
        lambda_hat,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs(n: u32, l: u32, t: f64, r: f64) -> RedPhaseObservation {
        RedPhaseObservation::new(n, l, t, r).unwrap()
    }

    #[test]
    fn count_estimators() {
        let hour = ObservationWindow::from_seconds(3600.0).unwrap();
        let lam = estimate_lambda_known_p(120, hour, ProbeFraction::new(0.10).unwrap());
        assert!((lam - 1.0 / 30.0 * 10.0).abs() < 1e-12);
        assert!((lam * 3600.0 - 1200.0).abs() < 1e-9);
        assert_eq!(estimate_lambda_known_p(0, hour, ProbeFraction::new(0.3).unwrap()), 0.0);

        let ten_min = ObservationWindow::from_seconds(600.0).unwrap();
        let p = estimate_p_known_lambda(60, ten_min, ArrivalRate::per_second(1.0 / 3.0).unwrap());
        assert!((p - 0.30).abs() < 1e-12);
        assert_eq!(estimate_p_known_lambda(0, ten_min, ArrivalRate::per_second(0.2).unwrap()), 0.0);
    }

    #[test]
    fn figure_example_queue() {
        // Three probes, the last one sixth in the queue.
        let o = obs(3, 6, 40.0, 60.0);
        assert_eq!(estimate_p_naive(&o).unwrap(), 0.5);
        assert!((estimate_lambda_naive(&o).unwrap() - 0.15).abs() < 1e-15);
        assert!((estimate_p_corrected(&o).unwrap() - 0.40).abs() < 1e-15);
    }

    #[test]
    fn all_probe_queue() {
        let o = obs(5, 5, 17.0, 60.0);
        assert_eq!(estimate_p_naive(&o).unwrap(), 1.0);
        assert_eq!(estimate_p_corrected(&o).unwrap(), 1.0);
    }

    #[test]
    fn naive_lambda_single_vehicle() {
        let o = obs(1, 1, 60.0, 60.0);
        assert_eq!(estimate_lambda_naive(&o).unwrap(), 1.0 / 60.0);
    }

    #[test]
    fn no_probe_is_not_estimable() {
        let o = RedPhaseObservation::without_probes(60.0).unwrap();
        assert!(matches!(estimate_p_naive(&o), Err(Error::NotEstimable(_))));
        assert!(matches!(estimate_lambda_naive(&o), Err(Error::NotEstimable(_))));
        assert!(matches!(estimate_p_corrected(&o), Err(Error::NotEstimable(_))));
    }

    #[test]
    fn observation_invariants() {
        assert!(RedPhaseObservation::new(0, 1, 1.0, 60.0).is_err());
        assert!(RedPhaseObservation::new(3, 2, 1.0, 60.0).is_err());
        assert!(RedPhaseObservation::new(1, 2, 0.0, 60.0).is_err());
        assert!(RedPhaseObservation::new(1, 2, 61.0, 60.0).is_err());
        assert!(RedPhaseObservation::without_probes(0.0).is_err());
    }

    #[test]
    fn joint_lambda() {
        let w = ObservationWindow::from_seconds(600.0).unwrap();
        assert!((estimate_lambda_joint(40, w, 0.20).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(estimate_lambda_joint(0, w, 0.2).unwrap(), 0.0);
        assert!(matches!(estimate_lambda_joint(10, w, 0.0), Err(Error::NotEstimable(_))));
    }

    fn cycle_with_p2(target: f64, green: u32) -> CycleRecord {
        // N_p = L_p·target with T_p = R so the correction vanishes.
        let l = 10;
        let n = (target * l as f64).round() as u32;
        CycleRecord::new(obs(n, l, 60.0, 60.0), green)
    }

    #[test]
    fn combine_two_cycles() {
        let a = cycle_with_p2(0.3, 21);
        let b = cycle_with_p2(0.5, 19);
        assert_eq!(a.total_probes() + b.total_probes(), 48);
        let w = ObservationWindow::from_seconds(240.0).unwrap();
        for policy in [NoProbePolicy::ZeroFill, NoProbePolicy::Skip] {
            let est = combine_cycles(&[a, b], w, policy).unwrap();
            assert!((est.p_hat - 0.4).abs() < 1e-15);
            assert!((est.lambda_hat - 0.5).abs() < 1e-15);
            assert_eq!(est.diagnostics.cycles_skipped, 0);
        }
    }

    #[test]
    fn combine_single_cycle_is_identity() {
        let c = CycleRecord::new(obs(3, 6, 40.0, 60.0), 4);
        let w = ObservationWindow::from_seconds(120.0).unwrap();
        let est = combine_cycles(&[c], w, NoProbePolicy::ZeroFill).unwrap();
        assert_eq!(est.p_hat, estimate_p_corrected(&c.red).unwrap());
        assert_eq!(est.lambda_hat, 7.0 / (120.0 * est.p_hat));
    }

    #[test]
    fn combine_policies_differ_on_empty_cycles() {
        let full = cycle_with_p2(0.4, 0);
        let empty = CycleRecord::new(RedPhaseObservation::without_probes(60.0).unwrap(), 2);
        let w = ObservationWindow::from_seconds(240.0).unwrap();
        let zf = combine_cycles(&[full, empty], w, NoProbePolicy::ZeroFill).unwrap();
        assert!((zf.p_hat - 0.2).abs() < 1e-15);
        assert_eq!(zf.diagnostics.cycles_without_probes, 1);
        assert_eq!(zf.diagnostics.cycles_skipped, 0);
        let sk = combine_cycles(&[full, empty], w, NoProbePolicy::Skip).unwrap();
        assert!((sk.p_hat - 0.4).abs() < 1e-15);
        assert_eq!(sk.diagnostics.cycles_skipped, 1);
        assert_eq!(sk.diagnostics.total_probes, 6);
    }

    #[test]
    fn combine_without_usable_cycles() {
        let empty = CycleRecord::new(RedPhaseObservation::without_probes(60.0).unwrap(), 3);
        let w = ObservationWindow::from_seconds(240.0).unwrap();
        for policy in [NoProbePolicy::ZeroFill, NoProbePolicy::Skip] {
            let err = combine_cycles(&[empty, empty], w, policy).unwrap_err();
            assert!(matches!(err, Error::NotEstimable(ref m) if m.contains("all 2 cycles")));
        }
        assert!(combine_cycles(&[], w, NoProbePolicy::ZeroFill).is_err());
    }

    #[test]
    fn policy_parse() {
        assert_eq!("skip".parse::<NoProbePolicy>().unwrap(), NoProbePolicy::Skip);
        assert_eq!("zero-fill".parse::<NoProbePolicy>().unwrap(), NoProbePolicy::ZeroFill);
        assert!("zero".parse::<NoProbePolicy>().is_err());
    }

    fn valid_observation() -> impl Strategy<Value = RedPhaseObservation> {
        (1u32..60, 0u32..60, 0.001f64..=1.0, 1.0f64..200.0).prop_map(|(n, extra, frac, r)| {
            RedPhaseObservation::new(n, n + extra, frac * r, r).unwrap()
        })
    }

    proptest! {
        #[test]
        fn naive_dominates_corrected(o in valid_observation()) {
            let p1 = estimate_p_naive(&o).unwrap();
            let p2 = estimate_p_corrected(&o).unwrap();
            prop_assert!(p1 >= p2);
            prop_assert!(p1 > 0.0 && p1 <= 1.0);
            prop_assert!(p2 > 0.0 && p2 <= 1.0);
            let last = o.last_probe().unwrap();
            if o.n_probes_red() == last.position || last.time == o.red_duration() {
                prop_assert_eq!(p1, p2);
            } else {
                prop_assert!(p1 > p2);
            }
        }

        #[test]
        fn count_estimators_mirror(n in 0u64..10_000, secs in 1.0f64..1e5, lam in 0.01f64..2.0, p in 0.01f64..=1.0) {
            let w = ObservationWindow::from_seconds(secs).unwrap();
            let l_hat = estimate_lambda_known_p(n, w, ProbeFraction::new(p).unwrap());
            let p_hat = estimate_p_known_lambda(n, w, ArrivalRate::per_second(lam).unwrap());
            prop_assert!((l_hat * p - p_hat * lam).abs() <= 1e-12 * (l_hat * p).max(1e-300));
        }
    }
}
