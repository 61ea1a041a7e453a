// Statistical checks on the arrival sampler and probe thinning.

use probeflow::estimators::{EstimatorId, NoProbePolicy};
use probeflow::moments::RunningMoments;
use probeflow::sim::{estimator_moments, SimConfig};
use probeflow::stats::{mark_probes, normal_quantile, poisson_pmf, sample_poisson_process, RandomStream};
use probeflow::{ArrivalRate, ProbeFraction};

#[test]
fn poisson_counts_have_unit_dispersion() {
    let rate = ArrivalRate::per_second(0.5).unwrap();
    let mut rng = RandomStream::from_seed(11);
    let counts: RunningMoments = (0..200_000)
        .map(|_| sample_poisson_process(rate, 40.0, &mut rng).len() as f64)
        .collect();
    let z = (counts.mean() - 20.0) / counts.standard_error();
    assert!(z.abs() < 5.0, "mean {} (z = {z})", counts.mean());
    let dispersion = counts.sample_variance() / counts.mean();
    assert!((dispersion - 1.0).abs() < 0.02, "dispersion {dispersion}");
}

#[test]
fn arrival_times_stay_inside_and_increase() {
    let rate = ArrivalRate::from_vph(3600.0).unwrap();
    let mut rng = RandomStream::from_seed(5);
    for _ in 0..1000 {
        let t = sample_poisson_process(rate, 30.0, &mut rng);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
        assert!(t.iter().all(|&x| x > 0.0 && x < 30.0));
    }
}

/// Upper `q` quantile of chi-square with `df` degrees of freedom
/// (Wilson–Hilferty).
fn chi_square_critical(df: f64, q: f64) -> f64 {
    let z = normal_quantile(1.0 - q).unwrap();
    let a = 2.0 / (9.0 * df);
    df * (1.0 - a + z * a.sqrt()).powi(3)
}

#[test]
fn thinned_counts_are_poisson() {
    // λT = 30 arrivals thinned at p = 0.2 should be Poisson(6).
    let rate = ArrivalRate::per_second(1.0).unwrap();
    let p = ProbeFraction::new(0.2).unwrap();
    let mut rng = RandomStream::from_seed(2024);
    let n = 100_000usize;
    let mut hist = vec![0usize; 40];
    for _ in 0..n {
        let arrivals = sample_poisson_process(rate, 30.0, &mut rng);
        let k = mark_probes(&arrivals, p, &mut rng).iter().filter(|a| a.is_probe).count();
        hist[k.min(39)] += 1;
    }
    // Bins 0..=13 individually, the tail pooled.
    let mean = 6.0;
    let mut stat = 0.0;
    let mut expected_total = 0.0;
    for k in 0..=13u64 {
        let e = n as f64 * poisson_pmf(k, mean).unwrap();
        expected_total += e;
        stat += (hist[k as usize] as f64 - e).powi(2) / e;
    }
    let tail_obs: usize = hist[14..].iter().sum();
    let tail_exp = n as f64 - expected_total;
    stat += (tail_obs as f64 - tail_exp).powi(2) / tail_exp;
    let critical = chi_square_critical(14.0, 0.001);
    assert!(stat < critical, "chi-square {stat} over critical {critical}");
}

#[test]
fn no_probe_red_phase_fraction_is_exp_minus_one() {
    // λ R p = (1/3)·60·0.05 = 1.
    let config = SimConfig::new(
        ArrivalRate::from_vph(1200.0).unwrap(),
        ProbeFraction::new(0.05).unwrap(),
        200_000,
        9,
    );
    let skip = estimator_moments(&config.with_policy(NoProbePolicy::Skip), &[0.05]).unwrap();
    let fill = estimator_moments(&config, &[0.05]).unwrap();
    let skipped = skip.iter().find(|r| r.estimator == EstimatorId::P2Corrected).unwrap().skipped_replicas;
    let filled = fill.iter().find(|r| r.estimator == EstimatorId::P2Corrected).unwrap().zero_filled_replicas;
    assert_eq!(skipped, filled);
    let frac = skipped as f64 / 200_000.0;
    let target = (-1.0f64).exp();
    let se = (target * (1.0 - target) / 200_000.0).sqrt();
    assert!((frac - target).abs() < 5.0 * se, "{frac} vs {target}");
}
