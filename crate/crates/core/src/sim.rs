//! Monte Carlo model of one signalized approach with probe tagging.
//!
//! Vehicles arrive as a Poisson stream and queue vertically (FIFO, no
//! physical length, no residual queue carried across cycles). Red starts at
//! each cycle boundary. Green arrivals matter only as extra probe counts for
//! the window-level flow estimate.
//!
//! Replica `k` draws from `RandomStream::for_replica(master_seed, k)`.
//! Replicas are grouped into fixed-size shards whose accumulators are merged
//! in shard order, so results do not depend on the worker count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    combine_cycles, estimate_lambda_naive, estimate_p_corrected, estimate_p_naive, CycleRecord, EstimatorId,
    NoProbePolicy, RedPhaseObservation,
};
use crate::moments::RunningMoments;
use crate::reliability::{check_grid, coverage_from_moments, CoverageCell, CoverageMethod, CoverageTable, TableCell};
use crate::stats::{mark_probes, ArrivalRate, ObservationWindow, ProbeFraction, RandomStream, TaggedArrival};
use crate::stats::process::sample_arrivals_between;

const SHARD_SIZE: u64 = 4096;

/// Window lengths (minutes) of the published joint-estimation tables.
pub const DEFAULT_SIM_WINDOWS_MIN: [f64; 8] = [2.0, 4.0, 6.0, 8.0, 10.0, 20.0, 40.0, 60.0];

/// Probe fractions of the single-cycle moments table.
pub const DEFAULT_MOMENTS_P_GRID: [f64; 15] = [
    0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.60, 0.70, 0.80, 0.90, 1.00,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub cycle_length: f64,
    pub red_duration: f64,
    pub lambda: ArrivalRate,
    pub p: ProbeFraction,
    pub replicas: u64,
    pub master_seed: u64,
    pub no_probe_policy: NoProbePolicy,
    /// Worker threads; `None` uses the global rayon pool. Never changes results.
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl SimConfig {
    /// 120 s cycle with 60 s of red.
    pub fn new(lambda: ArrivalRate, p: ProbeFraction, replicas: u64, master_seed: u64) -> Self {
        SimConfig {
            cycle_length: 120.0,
            red_duration: 60.0,
            lambda,
            p,
            replicas,
            master_seed,
            no_probe_policy: NoProbePolicy::default(),
            workers: None,
        }
    }

    pub fn with_timing(mut self, cycle_length: f64, red_duration: f64) -> Self {
        self.cycle_length = cycle_length;
        self.red_duration = red_duration;
        self
    }

    pub fn with_p(mut self, p: ProbeFraction) -> Self {
        self.p = p;
        self
    }

    pub fn with_policy(mut self, policy: NoProbePolicy) -> Self {
        self.no_probe_policy = policy;
        self
    }

    pub fn with_workers(mut self, workers: Option<usize>) -> Self {
        self.workers = workers;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.red_duration.is_finite() && self.red_duration > 0.0) {
            return Err(Error::invalid(format!("red duration must be positive, got {}", self.red_duration)));
        }
        if !(self.cycle_length.is_finite() && self.cycle_length >= self.red_duration) {
            return Err(Error::invalid(format!(
                "cycle length {} must be at least the red duration {}",
                self.cycle_length, self.red_duration
            )));
        }
        if self.replicas == 0 {
            return Err(Error::invalid("at least one replica is required"));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("worker count must be at least one"));
        }
        Ok(())
    }

    /// Number of whole cycles in a window of `window_min` minutes.
    pub fn cycles_in_window(&self, window_min: f64) -> Result<usize> {
        let ratio = window_min * 60.0 / self.cycle_length;
        let cycles = ratio.round();
        if !(ratio.is_finite() && cycles >= 1.0 && (ratio - cycles).abs() <= 1e-9 * ratio.max(1.0)) {
            return Err(Error::invalid(format!(
                "window of {window_min} min is not a whole number of {} s cycles",
                self.cycle_length
            )));
        }
        Ok(cycles as usize)
    }
}

/// Red-phase outcome with the tagged arrivals behind it (absolute times).
#[derive(Debug, Clone, PartialEq)]
pub struct RedPhaseDetail {
    pub observation: RedPhaseObservation,
    pub arrivals: Vec<TaggedArrival>,
}

/// A simulated cycle with all tagged arrivals (absolute times).
#[derive(Debug, Clone, PartialEq)]
pub struct CycleDetail {
    pub record: CycleRecord,
    pub start: f64,
    pub red_arrivals: Vec<TaggedArrival>,
    pub green_arrivals: Vec<TaggedArrival>,
}

fn simulate_red_phase_at(config: &SimConfig, start: f64, rng: &mut RandomStream) -> RedPhaseDetail {
    let times = sample_arrivals_between(config.lambda, start, start + config.red_duration, rng);
    let arrivals = mark_probes(&times, config.p, rng);
    let mut n_probes = 0u32;
    let mut last = None;
    for (i, a) in arrivals.iter().enumerate() {
        if a.is_probe {
            n_probes += 1;
            last = Some((i as u32 + 1, a.time - start));
        }
    }
    let observation = match last {
        Some((position, t)) => RedPhaseObservation::new(n_probes, position, t, config.red_duration)
            .expect("simulated observation satisfies invariants"),
        None => RedPhaseObservation::without_probes(config.red_duration).expect("validated red duration"),
    };
    RedPhaseDetail { observation, arrivals }
}

/// One red interval starting at time zero. Queue position of the `i`-th
/// arrival is `i`; `L_p`, `T_p` come from the last probe.
pub fn simulate_red_phase(config: &SimConfig, rng: &mut RandomStream) -> RedPhaseObservation {
    simulate_red_phase_at(config, 0.0, rng).observation
}

/// Cycle `index` of a replica, on the clock `[index·C, (index+1)·C)`.
pub fn simulate_cycle_at(config: &SimConfig, index: u64, rng: &mut RandomStream) -> CycleDetail {
    let start = index as f64 * config.cycle_length;
    let red = simulate_red_phase_at(config, start, rng);
    let green_times = sample_arrivals_between(
        config.lambda,
        start + config.red_duration,
        start + config.cycle_length,
        rng,
    );
    let green_arrivals = mark_probes(&green_times, config.p, rng);
    let n_probes_green = green_arrivals.iter().filter(|a| a.is_probe).count() as u32;
    let record = CycleRecord {
        red: red.observation,
        n_probes_green,
        n_probes_unlocated: 0,
        n_arrivals_total: Some((red.arrivals.len() + green_arrivals.len()) as u32),
    };
    CycleDetail {
        record,
        start,
        red_arrivals: red.arrivals,
        green_arrivals,
    }
}

pub fn simulate_cycle(config: &SimConfig, rng: &mut RandomStream) -> CycleRecord {
    simulate_cycle_at(config, 0, rng).record
}

/// Runs `per_shard` over fixed replica ranges and returns the shard results
/// in shard order.
fn run_shards<A, F>(config: &SimConfig, per_shard: F) -> Result<Vec<A>>
where
    A: Send,
    F: Fn(std::ops::Range<u64>) -> A + Sync,
{
    let shards = config.replicas.div_ceil(SHARD_SIZE);
    let job = || -> Vec<A> {
        (0..shards)
            .into_par_iter()
            .map(|s| {
                let start = s * SHARD_SIZE;
                per_shard(start..(start + SHARD_SIZE).min(config.replicas))
            })
            .collect()
    };
    match config.workers {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Sampling moments of one estimator at one probe fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentsRow {
    pub p: f64,
    pub estimator: EstimatorId,
    pub mean: f64,
    pub variance: f64,
    /// Replicas entering the moments.
    pub usable_replicas: u64,
    /// Replicas left out (no-probe replicas under the skip policy).
    pub skipped_replicas: u64,
    /// No-probe replicas scored as zero (zero-fill policy).
    pub zero_filled_replicas: u64,
}

#[derive(Default, Clone, Copy)]
struct Tally {
    moments: RunningMoments,
    skipped: u64,
    zero_filled: u64,
}

impl Tally {
    fn record(&mut self, value: Option<f64>, policy: NoProbePolicy) {
        match (value, policy) {
            (Some(v), _) => self.moments.push(v),
            (None, NoProbePolicy::ZeroFill) => {
                self.moments.push(0.0);
                self.zero_filled += 1;
            }
            (None, NoProbePolicy::Skip) => self.skipped += 1,
        }
    }

    fn merge(&mut self, other: &Tally) {
        self.moments.merge(&other.moments);
        self.skipped += other.skipped;
        self.zero_filled += other.zero_filled;
    }

    fn row(&self, p: f64, estimator: EstimatorId) -> MomentsRow {
        MomentsRow {
            p,
            estimator,
            mean: self.moments.mean(),
            variance: self.moments.variance(),
            usable_replicas: self.moments.count(),
            skipped_replicas: self.skipped,
            zero_filled_replicas: self.zero_filled,
        }
    }
}

fn fractions(p_grid: &[f64]) -> Result<Vec<ProbeFraction>> {
    check_grid("probe fraction", p_grid)?;
    p_grid.iter().map(|&p| ProbeFraction::new(p)).collect()
}

/// Single-red-phase moments of `λ̂₁`, `p̂₁` and `p̂₂` for each probe fraction.
/// Rows come in `p_grid` order, three per fraction.
pub fn estimator_moments(config: &SimConfig, p_grid: &[f64]) -> Result<Vec<MomentsRow>> {
    config.validate()?;
    let ps = fractions(p_grid)?;
    let mut rows = Vec::with_capacity(ps.len() * 3);
    for p in ps {
        let cfg = config.with_p(p);
        let policy = cfg.no_probe_policy;
        let shards = run_shards(&cfg, |range| {
            let mut tallies = [Tally::default(); 3];
            for k in range {
                let mut rng = RandomStream::for_replica(cfg.master_seed, k);
                let obs = simulate_red_phase(&cfg, &mut rng);
                tallies[0].record(estimate_lambda_naive(&obs).ok(), policy);
                tallies[1].record(estimate_p_naive(&obs).ok(), policy);
                tallies[2].record(estimate_p_corrected(&obs).ok(), policy);
            }
            tallies
        })?;
        let mut total = [Tally::default(); 3];
        for shard in &shards {
            for (t, s) in total.iter_mut().zip(shard) {
                t.merge(s);
            }
        }
        rows.push(total[0].row(p.value(), EstimatorId::Lambda1Naive));
        rows.push(total[1].row(p.value(), EstimatorId::P1Naive));
        rows.push(total[2].row(p.value(), EstimatorId::P2Corrected));
    }
    Ok(rows)
}

/// Window-level moments of the aggregated `p̂₂` and the flow estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointMomentsCell {
    pub window_min: f64,
    pub cycles: usize,
    pub p2: MomentsRow,
    pub lambda: MomentsRow,
}

/// Simulates `cycles` consecutive cycles of replica `k` and combines them.
fn simulate_window(cfg: &SimConfig, k: u64, cycles: usize, window: ObservationWindow) -> Option<(f64, f64)> {
    let mut rng = RandomStream::for_replica(cfg.master_seed, k);
    let records: Vec<CycleRecord> = (0..cycles as u64)
        .map(|j| simulate_cycle_at(cfg, j, &mut rng).record)
        .collect();
    combine_cycles(&records, window, cfg.no_probe_policy)
        .ok()
        .map(|est| (est.p_hat, est.lambda_hat))
}

/// For each `(Δ, p)`: each replica simulates `Δ / C` cycles, applies
/// [`combine_cycles`], and the estimates are summarised across replicas.
/// Cells are ordered window-major.
pub fn joint_estimation_moments(
    config: &SimConfig,
    windows_min: &[f64],
    p_grid: &[f64],
) -> Result<Vec<JointMomentsCell>> {
    config.validate()?;
    check_grid("window", windows_min)?;
    let ps = fractions(p_grid)?;
    let cycle_counts = windows_min
        .iter()
        .map(|&w| config.cycles_in_window(w))
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::with_capacity(windows_min.len() * ps.len());
    for (&window_min, &cycles) in windows_min.iter().zip(&cycle_counts) {
        let window = ObservationWindow::from_seconds(cycles as f64 * config.cycle_length)?;
        for &p in &ps {
            let cfg = config.with_p(p);
            let policy = cfg.no_probe_policy;
            let shards = run_shards(&cfg, |range| {
                let mut tallies = [Tally::default(); 2];
                for k in range {
                    let est = simulate_window(&cfg, k, cycles, window);
                    tallies[0].record(est.map(|e| e.0), policy);
                    tallies[1].record(est.map(|e| e.1), policy);
                }
                tallies
            })?;
            let mut total = [Tally::default(); 2];
            for shard in &shards {
                total[0].merge(&shard[0]);
                total[1].merge(&shard[1]);
            }
            cells.push(JointMomentsCell {
                window_min,
                cycles,
                p2: total[0].row(p.value(), EstimatorId::P2Corrected),
                lambda: total[1].row(p.value(), EstimatorId::LambdaJoint),
            });
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimTarget {
    P2,
    LambdaJoint,
}

fn cell_from_moments(mean: f64, variance: f64, truth: f64, delta: f64) -> Result<CoverageCell> {
    if variance > 0.0 {
        return coverage_from_moments(mean, variance, truth, delta);
    }
    // Zero spread: the estimator is a point mass at its mean.
    let inside = mean >= (1.0 - delta) * truth && mean < (1.0 + delta) * truth;
    Ok(CoverageCell {
        outside_probability: if inside { 0.0 } else { 1.0 },
        method: CoverageMethod::SimulatedMoments,
        mean_probe_count: None,
    })
}

/// Outside probabilities from simulated (biased) moments, one per `(Δ, p)`.
pub fn sim_coverage_table(
    config: &SimConfig,
    windows_min: &[f64],
    p_grid: &[f64],
    delta: f64,
    alpha: f64,
    target: SimTarget,
) -> Result<CoverageTable> {
    let cells = joint_estimation_moments(config, windows_min, p_grid)?;
    coverage_table_from_moments(config, &cells, windows_min, p_grid, delta, alpha, target)
}

/// Builds the coverage table from already simulated window moments.
pub fn coverage_table_from_moments(
    config: &SimConfig,
    cells: &[JointMomentsCell],
    windows_min: &[f64],
    p_grid: &[f64],
    delta: f64,
    alpha: f64,
    target: SimTarget,
) -> Result<CoverageTable> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if cells.len() != windows_min.len() * p_grid.len() {
        return Err(Error::invalid("moment cells do not match the requested grid"));
    }
    let rows = cells
        .chunks(p_grid.len())
        .map(|row| {
            row.iter()
                .map(|c| {
                    let (m, truth) = match target {
                        SimTarget::P2 => (&c.p2, c.p2.p),
                        SimTarget::LambdaJoint => (&c.lambda, config.lambda.value()),
                    };
                    let cell = cell_from_moments(m.mean, m.variance, truth, delta)?;
                    Ok(TableCell {
                        highlighted: cell.outside_probability < alpha,
                        cell,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CoverageTable {
        lambda_per_second: config.lambda.value(),
        lambda_vph: config.lambda.vph(),
        delta,
        alpha,
        method: CoverageMethod::SimulatedMoments,
        windows_min: windows_min.to_vec(),
        p_grid: p_grid.to_vec(),
        rows,
    })
}

/// Raw per-cycle dump: `replica,cycle,n_probes_red,l_p,t_p,n_probes_green,n_arrivals`.
pub fn dump_replicas<W: Write>(config: &SimConfig, cycles: usize, out: &mut W) -> Result<()> {
    config.validate()?;
    writeln!(out, "replica,cycle,n_probes_red,l_p,t_p,n_probes_green,n_arrivals")?;
    for k in 0..config.replicas {
        let mut rng = RandomStream::for_replica(config.master_seed, k);
        for j in 0..cycles as u64 {
            let rec = simulate_cycle_at(config, j, &mut rng).record;
            let (l_p, t_p) = match rec.red.last_probe() {
                Some(last) => (last.position.to_string(), last.time.to_string()),
                None => (String::new(), String::new()),
            };
            writeln!(
                out,
                "{k},{j},{},{l_p},{t_p},{},{}",
                rec.red.n_probes_red(),
                rec.n_probes_green,
                rec.n_arrivals_total.unwrap_or(0)
            )?;
        }
    }
    Ok(())
}

/// Writes the probe events of replica `replica` over `cycles` cycles in the
/// probe-log CSV schema and returns the simulated cycle records.
///
/// Red-phase probes carry their queue position; green probes do not.
pub fn export_probe_log<W: Write>(
    config: &SimConfig,
    cycles: usize,
    replica: u64,
    out: &mut W,
) -> Result<Vec<CycleRecord>> {
    config.validate()?;
    writeln!(out, "time_s,queue_position,stop_distance_m,cycle_id")?;
    let mut rng = RandomStream::for_replica(config.master_seed, replica);
    let mut records = Vec::with_capacity(cycles);
    for j in 0..cycles as u64 {
        let detail = simulate_cycle_at(config, j, &mut rng);
        for (i, a) in detail.red_arrivals.iter().enumerate() {
            if a.is_probe {
                writeln!(out, "{},{},,{j}", a.time, i + 1)?;
            }
        }
        for a in detail.green_arrivals.iter().filter(|a| a.is_probe) {
            writeln!(out, "{},,,{j}", a.time)?;
        }
        records.push(detail.record);
    }
    Ok(records)
}
