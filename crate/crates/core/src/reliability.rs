//! Reliability of the count-based estimators: variances, the probability of
//! missing the `±δ` band (exact Poisson and Normal approximation), the
//! required expected probe count, and the table generators built on them.
//!
//! Estimating `λ` with `p` known and `p` with `λ` known reduce to the same
//! event on `N_p ~ Poisson(λΔp)`, so both cases route through
//! [`probe_count_coverage`].

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{normal_cdf, normal_quantile, poisson_interval_mass, ArrivalRate, ObservationWindow, ProbeFraction};

/// Observation windows (minutes) of the standard reliability tables.
pub const DEFAULT_WINDOWS_MIN: [f64; 9] = [1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 30.0, 60.0, 120.0];

/// Probe fractions of the standard reliability tables.
pub const DEFAULT_P_GRID: [f64; 19] = [
    0.05, 0.06, 0.07, 0.08, 0.09, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.60, 0.70,
    0.80, 0.90, 1.00,
];

fn check_probability(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie in (0, 1), got {value}")))
    }
}

/// The analysis parameters `(α, δ, λ, Δ, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub alpha: f64,
    pub delta: f64,
    pub lambda: ArrivalRate,
    pub window: ObservationWindow,
    pub p: ProbeFraction,
}

impl ScenarioParams {
    pub fn new(alpha: f64, delta: f64, lambda: ArrivalRate, window: ObservationWindow, p: ProbeFraction) -> Result<Self> {
        check_probability("alpha", alpha)?;
        check_probability("delta", delta)?;
        Ok(ScenarioParams {
            alpha,
            delta,
            lambda,
            window,
            p,
        })
    }

    /// `E[N_p] = λΔp`.
    pub fn mean_probe_count(&self) -> f64 {
        self.lambda.value() * self.window.seconds() * self.p.value()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMethod {
    ExactPoisson,
    NormalApprox,
    SimulatedMoments,
}

impl CoverageMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CoverageMethod::ExactPoisson => "exact_poisson",
            CoverageMethod::NormalApprox => "normal_approx",
            CoverageMethod::SimulatedMoments => "simulated_moments",
        }
    }
}

/// Probability that an estimate lands outside `(1 ± δ)` of the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub outside_probability: f64,
    pub method: CoverageMethod,
    /// `λΔp`; absent for cells built from simulated moments.
    pub mean_probe_count: Option<f64>,
}

/// `Var[λ̂] = λ / (Δp)`, in (veh/s)².
pub fn variance_lambda_hat(params: &ScenarioParams) -> f64 {
    params.lambda.value() / (params.window.seconds() * params.p.value())
}

/// `Var[p̂] = p / (Δλ)`.
pub fn variance_p_hat(params: &ScenarioParams) -> f64 {
    params.p.value() / (params.window.seconds() * params.lambda.value())
}

// Smallest integer ≥ x, treating values within a relative 1e-9 above an
// integer as that integer (λΔp products rarely land exactly).
fn ceil_tolerant(x: f64) -> u64 {
    (x - 1e-9 * x.abs().max(1.0)).ceil().max(0.0) as u64
}

/// Integer range `[lo, hi]` of probe counts inside the band
/// `(1−δ)m ≤ N < (1+δ)m`. `None` when no integer falls inside.
///
/// The lower endpoint is included and the upper one excluded. With both
/// excluded (or both included) the cells where `(1±δ)m` is an integer move
/// by up to 0.04 away from the published exact tables; the half-open band
/// reproduces every printed cell.
pub fn acceptance_band(mean_probe_count: f64, delta: f64) -> Option<(u64, u64)> {
    let lo = ceil_tolerant((1.0 - delta) * mean_probe_count);
    let upper_excl = ceil_tolerant((1.0 + delta) * mean_probe_count);
    if upper_excl == 0 || upper_excl - 1 < lo {
        None
    } else {
        Some((lo, upper_excl - 1))
    }
}

/// Shared coverage computation for both count-based estimators.
pub fn probe_count_coverage(mean_probe_count: f64, delta: f64, method: CoverageMethod) -> Result<CoverageCell> {
    if !(mean_probe_count.is_finite() && mean_probe_count > 0.0) {
        return Err(Error::invalid(format!(
            "expected probe count must be positive, got {mean_probe_count}"
        )));
    }
    check_probability("delta", delta)?;
    let outside = match method {
        CoverageMethod::ExactPoisson => match acceptance_band(mean_probe_count, delta) {
            Some((lo, hi)) => 1.0 - poisson_interval_mass(lo, hi, mean_probe_count)?,
            None => 1.0,
        },
        // 1 − 2Φ(−δλ / √(λ/(Δp))) simplifies to 2Φ(−δ√(λΔp)).
        CoverageMethod::NormalApprox => 2.0 * normal_cdf(-delta * mean_probe_count.sqrt()),
        CoverageMethod::SimulatedMoments => {
            return Err(Error::invalid(
                "simulated-moment coverage needs a mean and variance; use coverage_from_moments",
            ))
        }
    };
    Ok(CoverageCell {
        outside_probability: outside.clamp(0.0, 1.0),
        method,
        mean_probe_count: Some(mean_probe_count),
    })
}

/// Exact Poisson probability that `λ̂ = N_p/(Δp)` misses `(1 ± δ)λ`.
pub fn coverage_exact(params: &ScenarioParams) -> CoverageCell {
    probe_count_coverage(params.mean_probe_count(), params.delta, CoverageMethod::ExactPoisson)
        .expect("validated scenario")
}

/// Normal-approximation counterpart of [`coverage_exact`].
pub fn coverage_normal(params: &ScenarioParams) -> CoverageCell {
    probe_count_coverage(params.mean_probe_count(), params.delta, CoverageMethod::NormalApprox)
        .expect("validated scenario")
}

/// Coverage when estimating `λ` with `p` known.
pub fn coverage_lambda_known_p(params: &ScenarioParams, method: CoverageMethod) -> Result<CoverageCell> {
    probe_count_coverage(params.mean_probe_count(), params.delta, method)
}

/// Coverage when estimating `p` with `λ` known. Same event, same code path.
pub fn coverage_p_known_lambda(params: &ScenarioParams, method: CoverageMethod) -> Result<CoverageCell> {
    probe_count_coverage(params.mean_probe_count(), params.delta, method)
}

/// Outside probability of a Normal with the given (possibly biased) mean and
/// variance against the band `(1 ± δ)·truth`.
pub fn coverage_from_moments(mean: f64, variance: f64, truth: f64, delta: f64) -> Result<CoverageCell> {
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::invalid(format!("variance must be positive, got {variance}")));
    }
    if !mean.is_finite() || !truth.is_finite() {
        return Err(Error::invalid("mean and truth must be finite"));
    }
    check_probability("delta", delta)?;
    let sd = variance.sqrt();
    let below = normal_cdf(((1.0 - delta) * truth - mean) / sd);
    let above = 1.0 - normal_cdf(((1.0 + delta) * truth - mean) / sd);
    Ok(CoverageCell {
        outside_probability: (below + above).clamp(0.0, 1.0),
        method: CoverageMethod::SimulatedMoments,
        mean_probe_count: None,
    })
}

/// Expected probe count needed for `P(outside) ≤ α` under the Normal
/// approximation: `z²_{α/2} / δ²`.
pub fn required_probe_count(alpha: f64, delta: f64) -> Result<f64> {
    check_probability("alpha", alpha)?;
    check_probability("delta", delta)?;
    let z = normal_quantile(alpha / 2.0)?;
    Ok(z * z / (delta * delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    #[serde(flatten)]
    pub cell: CoverageCell,
    /// `outside_probability < α`.
    pub highlighted: bool,
}

/// Outside probabilities on a window × probe-fraction grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub lambda_per_second: f64,
    pub lambda_vph: f64,
    pub delta: f64,
    pub alpha: f64,
    pub method: CoverageMethod,
    pub windows_min: Vec<f64>,
    pub p_grid: Vec<f64>,
    /// `rows[i][j]` is window `windows_min[i]`, fraction `p_grid[j]`.
    pub rows: Vec<Vec<TableCell>>,
}

impl CoverageTable {
    pub fn cell(&self, window_min: f64, p: f64) -> Option<&TableCell> {
        let i = self.windows_min.iter().position(|&w| (w - window_min).abs() < 1e-9)?;
        let j = self.p_grid.iter().position(|&q| (q - p).abs() < 1e-9)?;
        Some(&self.rows[i][j])
    }
}

pub(crate) fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid(format!("{name} grid is empty")));
    }
    Ok(())
}

pub fn generate_coverage_table(
    lambda: ArrivalRate,
    delta: f64,
    alpha: f64,
    windows_min: &[f64],
    p_grid: &[f64],
    method: CoverageMethod,
) -> Result<CoverageTable> {
    check_probability("alpha", alpha)?;
    check_probability("delta", delta)?;
    check_grid("window", windows_min)?;
    check_grid("probe fraction", p_grid)?;
    let windows = windows_min
        .iter()
        .map(|&m| ObservationWindow::from_minutes(m))
        .collect::<Result<Vec<_>>>()?;
    let fractions = p_grid.iter().map(|&p| ProbeFraction::new(p)).collect::<Result<Vec<_>>>()?;

    let rows = windows
        .par_iter()
        .map(|&window| {
            fractions
                .iter()
                .map(|&p| {
                    let params = ScenarioParams::new(alpha, delta, lambda, window, p)?;
                    let cell = coverage_lambda_known_p(&params, method)?;
                    Ok(TableCell {
                        highlighted: cell.outside_probability < alpha,
                        cell,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CoverageTable {
        lambda_per_second: lambda.value(),
        lambda_vph: lambda.vph(),
        delta,
        alpha,
        method,
        windows_min: windows_min.to_vec(),
        p_grid: p_grid.to_vec(),
        rows,
    })
}

/// One point of the required-count curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeRow {
    pub alpha: f64,
    pub delta: f64,
    pub required_probe_count: f64,
}

/// Required expected probe count over `alphas × deltas`, grouped by α.
pub fn sweep_required_count(delta_grid: &[f64], alpha_list: &[f64]) -> Result<Vec<SampleSizeRow>> {
    check_grid("delta", delta_grid)?;
    check_grid("alpha", alpha_list)?;
    let mut rows = Vec::with_capacity(delta_grid.len() * alpha_list.len());
    for &alpha in alpha_list {
        for &delta in delta_grid {
            rows.push(SampleSizeRow {
                alpha,
                delta,
                required_probe_count: required_probe_count(alpha, delta)?,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::poisson_pmf;

    fn scenario(vph: f64, minutes: f64, p: f64, delta: f64) -> ScenarioParams {
        ScenarioParams::new(
            0.10,
            delta,
            ArrivalRate::from_vph(vph).unwrap(),
            ObservationWindow::from_minutes(minutes).unwrap(),
            ProbeFraction::new(p).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn variances() {
        let s = ScenarioParams::new(
            0.1,
            0.15,
            ArrivalRate::per_second(0.1111).unwrap(),
            ObservationWindow::from_seconds(3600.0).unwrap(),
            ProbeFraction::new(0.1).unwrap(),
        )
        .unwrap();
        assert!((variance_lambda_hat(&s) - 3.086e-4).abs() < 1e-7);
        let doubled = ScenarioParams {
            window: ObservationWindow::from_seconds(7200.0).unwrap(),
            ..s
        };
        assert_eq!(variance_lambda_hat(&doubled) * 2.0, variance_lambda_hat(&s));

        let s = ScenarioParams::new(
            0.1,
            0.15,
            ArrivalRate::per_second(0.2222).unwrap(),
            ObservationWindow::from_seconds(900.0).unwrap(),
            ProbeFraction::new(0.2).unwrap(),
        )
        .unwrap();
        assert!((variance_p_hat(&s) - 1.0e-3).abs() < 1e-6);
        let tiny = ScenarioParams {
            p: ProbeFraction::new(1e-300).unwrap(),
            ..s
        };
        assert!(variance_p_hat(&tiny) < 1e-299);
    }

    #[test]
    fn exact_examples() {
        let cell = coverage_exact(&scenario(400.0, 120.0, 0.15, 0.15));
        assert!((cell.outside_probability - 0.10).abs() < 0.01);
        assert!((cell.mean_probe_count.unwrap() - 120.0).abs() < 1e-9);

        let m = 400.0 / 60.0;
        let oracle = 1.0 - poisson_pmf(6, m).unwrap() - poisson_pmf(7, m).unwrap();
        let cell = coverage_exact(&scenario(400.0, 1.0, 1.0, 0.15));
        assert!((cell.outside_probability - oracle).abs() < 1e-12);
        assert!((cell.outside_probability - 0.70).abs() < 0.01);
    }

    #[test]
    fn wide_band_covers_nearly_everything() {
        let cell = coverage_exact(&scenario(1200.0, 120.0, 1.0, 0.999));
        assert!(cell.outside_probability < 1e-12);
    }

    #[test]
    fn band_endpoints() {
        // m = 40, δ = 0.15: band is 34 ≤ N < 46.
        assert_eq!(acceptance_band(40.0, 0.15), Some((34, 45)));
        // Products that land one ulp off an integer behave like the integer.
        let m = 400.0 / 3600.0 * 15.0 * 60.0 * 0.6;
        assert_eq!(acceptance_band(m, 0.15), Some((51, 68)));
        // 0.283 ≤ N < 0.383 holds for no integer.
        assert_eq!(acceptance_band(1.0 / 3.0, 0.15), None);
        assert_eq!(acceptance_band(0.1, 0.15), None);
    }

    #[test]
    fn normal_examples() {
        let cell = coverage_normal(&scenario(400.0, 120.0, 0.05, 0.15));
        assert!((cell.outside_probability - 0.34).abs() < 0.005);
        let cell = coverage_normal(&scenario(400.0, 60.0, 0.30, 0.15));
        assert!((cell.outside_probability - 0.1004).abs() < 1e-4);
        let huge = probe_count_coverage(1e9, 0.15, CoverageMethod::NormalApprox).unwrap();
        assert_eq!(huge.outside_probability, 0.0);
    }

    #[test]
    fn moments_coverage() {
        let cell = coverage_from_moments(0.256, 0.012 / 30.0, 0.25, 0.15).unwrap();
        assert!((cell.outside_probability - 0.072).abs() < 0.001);
        assert!((cell.outside_probability - 0.08).abs() < 0.03);

        let sd = 0.15 / 1.644_853_626_951_472_2;
        let cell = coverage_from_moments(1.0, sd * sd, 1.0, 0.15).unwrap();
        assert!((cell.outside_probability - 0.10).abs() < 1e-9);

        let cell = coverage_from_moments(0.3, 1e-12, 0.3, 0.15).unwrap();
        assert_eq!(cell.outside_probability, 0.0);
        assert!(coverage_from_moments(0.3, 0.0, 0.3, 0.15).is_err());
        assert!(coverage_from_moments(0.3, -1.0, 0.3, 0.15).is_err());
    }

    #[test]
    fn required_counts() {
        assert!((required_probe_count(0.10, 0.15).unwrap() - 120.246_375_737_573_91).abs() < 1e-6);
        assert!((required_probe_count(0.05, 0.10).unwrap() - 384.145_882_069_412_55).abs() < 1e-6);
        assert!((required_probe_count(0.10, 0.05).unwrap() - 1_082.217_381_638_165).abs() < 1e-5);
        assert!(required_probe_count(0.0, 0.1).is_err());
        assert!(required_probe_count(0.1, 1.5).is_err());
    }

    #[test]
    fn sweep_rows() {
        let deltas = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30];
        let rows = sweep_required_count(&deltas, &[0.01, 0.05, 0.10]).unwrap();
        assert_eq!(rows.len(), 18);
        let r = rows.iter().find(|r| r.alpha == 0.10 && r.delta == 0.15).unwrap();
        assert!((r.required_probe_count - 120.25).abs() < 0.01);
        let r = rows.iter().find(|r| r.alpha == 0.10 && r.delta == 0.10).unwrap();
        assert!((r.required_probe_count - 270.55).abs() < 0.01);
        for chunk in rows.chunks(deltas.len()) {
            assert!(chunk.windows(2).all(|w| w[0].required_probe_count > w[1].required_probe_count));
        }
        assert!(sweep_required_count(&[], &[0.1]).is_err());
    }

    #[test]
    fn single_cell_table() {
        let lam = ArrivalRate::from_vph(400.0).unwrap();
        let t = generate_coverage_table(lam, 0.15, 0.10, &[60.0], &[0.30], CoverageMethod::NormalApprox).unwrap();
        assert_eq!(t.rows.len(), 1);
        let direct = coverage_normal(&scenario(400.0, 60.0, 0.30, 0.15));
        assert_eq!(t.rows[0][0].cell, direct);
        assert!(!t.rows[0][0].highlighted);
        let t = generate_coverage_table(lam, 0.15, 0.10, &[60.0], &[0.30], CoverageMethod::ExactPoisson).unwrap();
        assert_eq!(t.rows[0][0].cell, coverage_exact(&scenario(400.0, 60.0, 0.30, 0.15)));
    }

    #[test]
    fn table_rejects_bad_input() {
        let lam = ArrivalRate::from_vph(400.0).unwrap();
        assert!(generate_coverage_table(lam, 0.15, 0.10, &[], &[0.3], CoverageMethod::NormalApprox).is_err());
        assert!(generate_coverage_table(lam, 0.15, 0.10, &[1.0], &[0.0], CoverageMethod::NormalApprox).is_err());
        assert!(generate_coverage_table(lam, 0.15, 0.10, &[1.0], &[0.3], CoverageMethod::SimulatedMoments).is_err());
    }

    #[test]
    fn symmetric_cases_share_code() {
        let s = scenario(800.0, 20.0, 0.35, 0.15);
        for method in [CoverageMethod::ExactPoisson, CoverageMethod::NormalApprox] {
            let a = coverage_lambda_known_p(&s, method).unwrap();
            let b = coverage_p_known_lambda(&s, method).unwrap();
            assert_eq!(a.outside_probability.to_bits(), b.outside_probability.to_bits());
        }
    }
}
