//! Probe-event logs: parsing, windowing into observation intervals and
//! signal cycles, and dispatch to the estimator for the information case.
//!
//! Log schema (CSV, header required, LF or CRLF):
//!
//! ```text
//! time_s,queue_position,stop_distance_m,cycle_id
//! ```
//!
//! Only `time_s` is mandatory; the header may stop after any column but must
//! keep this order. A stop-bar distance is turned into a queue position as
//! `max(1, ceil(distance / average vehicle length))`. The event timestamp is
//! taken as the time the probe joined the back of the queue.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    combine_cycles, estimate_lambda_known_p, estimate_p_known_lambda, CycleRecord, EstimateReport, EstimatorId,
    NoProbePolicy, RedPhaseObservation,
};
use crate::reliability::required_probe_count;
use crate::stats::{ArrivalRate, ObservationWindow, ProbeFraction};

pub const LOG_COLUMNS: [&str; 4] = ["time_s", "queue_position", "stop_distance_m", "cycle_id"];

pub const DEFAULT_VEHICLE_LENGTH_M: f64 = 7.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeEvent {
    /// Seconds on the log's clock.
    pub time: f64,
    /// Queue position, reported directly or derived from `stop_distance`.
    pub queue_position: Option<u32>,
    /// Raw distance to the stop bar in metres, when that was what the row carried.
    pub stop_distance: Option<f64>,
    pub cycle_id: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParseOptions {
    /// Fail on the first bad row instead of collecting row errors.
    pub strict: bool,
    pub avg_vehicle_length: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            strict: false,
            avg_vehicle_length: DEFAULT_VEHICLE_LENGTH_M,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParsedLog {
    /// Accepted events, sorted by time (stable).
    pub events: Vec<ProbeEvent>,
    pub rejected: Vec<RowError>,
    /// Data rows read after the header; `events.len() + rejected.len()`.
    pub total_rows: usize,
}

fn distance_to_position(distance: f64, avg_vehicle_length: f64) -> u32 {
    let slots = (distance / avg_vehicle_length).ceil();
    slots.clamp(1.0, u32::MAX as f64) as u32
}

fn parse_row(fields: &[&str], opts: &ParseOptions) -> std::result::Result<ProbeEvent, String> {
    let field = |i: usize| fields.get(i).map(|s| s.trim()).filter(|s| !s.is_empty());

    let raw_time = field(0).ok_or("time_s is empty")?;
    let time: f64 = raw_time
        .parse()
        .map_err(|_| format!("time_s '{raw_time}' is not a number"))?;
    if !time.is_finite() || time < 0.0 {
        return Err(format!("time_s {raw_time} must be finite and nonnegative"));
    }

    let position = match field(1) {
        None => None,
        Some(raw) => match raw.parse::<u32>() {
            Ok(0) | Err(_) => return Err(format!("queue_position '{raw}' is not a positive integer")),
            Ok(n) => Some(n),
        },
    };

    let distance = match field(2) {
        None => None,
        Some(raw) => {
            let d: f64 = raw
                .parse()
                .map_err(|_| format!("stop_distance_m '{raw}' is not a number"))?;
            if !d.is_finite() || d < 0.0 {
                return Err(format!("stop_distance_m {raw} must be finite and nonnegative"));
            }
            Some(d)
        }
    };

    if position.is_some() && distance.is_some() {
        return Err("queue_position and stop_distance_m are mutually exclusive".into());
    }

    Ok(ProbeEvent {
        time,
        queue_position: position.or_else(|| distance.map(|d| distance_to_position(d, opts.avg_vehicle_length))),
        stop_distance: distance,
        cycle_id: field(3).map(str::to_owned),
    })
}

/// Reads a probe log. Bad rows are collected with their line numbers unless
/// `opts.strict` is set.
pub fn parse_probe_log<R: Read>(source: R, opts: &ParseOptions) -> Result<ParsedLog> {
    if !(opts.avg_vehicle_length.is_finite() && opts.avg_vehicle_length > 0.0) {
        return Err(Error::invalid(format!(
            "average vehicle length must be positive, got {}",
            opts.avg_vehicle_length
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);

    let mut records = reader.byte_records();
    let header = match records.next() {
        None => return Err(Error::Format("missing header (expected time_s,...)".into())),
        Some(Err(e)) => return Err(Error::Format(format!("unreadable header: {e}"))),
        Some(Ok(rec)) => rec,
    };
    let columns = header
        .iter()
        .enumerate()
        .map(|(i, raw)| {
            let s = std::str::from_utf8(raw).map_err(|_| Error::Format("header is not UTF-8".into()))?;
            let s = if i == 0 { s.trim_start_matches('\u{feff}') } else { s };
            Ok(s.trim().to_owned())
        })
        .collect::<Result<Vec<_>>>()?;
    if columns.is_empty() || columns.len() > LOG_COLUMNS.len() || columns.iter().zip(LOG_COLUMNS).any(|(c, want)| c != want) {
        return Err(Error::Format(format!(
            "bad header '{}' (expected a prefix of {})",
            columns.join(","),
            LOG_COLUMNS.join(",")
        )));
    }

    let mut log = ParsedLog::default();
    for record in records {
        log.total_rows += 1;
        let outcome = match record {
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Err(RowError {
                    line,
                    message: format!("unreadable row: {e}"),
                })
            }
            Ok(rec) => {
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                let row = if rec.len() != columns.len() {
                    Err(format!("expected {} fields, found {}", columns.len(), rec.len()))
                } else {
                    rec.iter()
                        .map(std::str::from_utf8)
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| "row is not UTF-8".to_string())
                        .and_then(|fields| parse_row(&fields, opts))
                };
                row.map_err(|message| RowError { line, message })
            }
        };
        match outcome {
            Ok(event) => log.events.push(event),
            Err(err) if opts.strict => return Err(Error::Format(err.to_string())),
            Err(err) => log.rejected.push(err),
        }
    }
    log.events.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationMode {
    KnownP,
    KnownLambda,
    Joint,
}

impl EstimationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimationMode::KnownP => "known-p",
            EstimationMode::KnownLambda => "known-lambda",
            EstimationMode::Joint => "joint",
        }
    }
}

impl FromStr for EstimationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "known-p" => Ok(EstimationMode::KnownP),
            "known-lambda" => Ok(EstimationMode::KnownLambda),
            "joint" => Ok(EstimationMode::Joint),
            other => Err(Error::invalid(format!("unknown mode '{other}'"))),
        }
    }
}

/// What to estimate and how to slice the log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationRequest {
    pub mode: EstimationMode,
    /// `p` in known-p mode, `λ` (veh/s) in known-lambda mode.
    pub known_value: Option<f64>,
    pub window: ObservationWindow,
    pub red_duration: Option<f64>,
    pub cycle_length: Option<f64>,
    pub avg_vehicle_length: f64,
    /// Clock time of the first red onset; windows are aligned to it too.
    pub red_offset: f64,
    /// Sufficiency check parameters.
    pub alpha: f64,
    pub delta: f64,
    pub no_probe_policy: NoProbePolicy,
}

impl EstimationRequest {
    fn base(mode: EstimationMode, window: ObservationWindow) -> Self {
        EstimationRequest {
            mode,
            known_value: None,
            window,
            red_duration: None,
            cycle_length: None,
            avg_vehicle_length: DEFAULT_VEHICLE_LENGTH_M,
            red_offset: 0.0,
            alpha: 0.10,
            delta: 0.15,
            no_probe_policy: NoProbePolicy::default(),
        }
    }

    pub fn known_p(p: ProbeFraction, window: ObservationWindow) -> Self {
        EstimationRequest {
            known_value: Some(p.value()),
            ..Self::base(EstimationMode::KnownP, window)
        }
    }

    pub fn known_lambda(lambda: ArrivalRate, window: ObservationWindow) -> Self {
        EstimationRequest {
            known_value: Some(lambda.value()),
            ..Self::base(EstimationMode::KnownLambda, window)
        }
    }

    pub fn joint(window: ObservationWindow, cycle_length: f64, red_duration: f64) -> Self {
        EstimationRequest {
            cycle_length: Some(cycle_length),
            red_duration: Some(red_duration),
            ..Self::base(EstimationMode::Joint, window)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let joint = self.mode == EstimationMode::Joint;
        if self.known_value.is_some() == joint {
            return Err(Error::invalid(if joint {
                "joint mode takes no known value"
            } else {
                "known-p and known-lambda modes need the known value"
            }));
        }
        match self.mode {
            EstimationMode::KnownP => {
                ProbeFraction::new(self.known_value.unwrap_or(f64::NAN))?;
            }
            EstimationMode::KnownLambda => {
                ArrivalRate::per_second(self.known_value.unwrap_or(f64::NAN))?;
            }
            EstimationMode::Joint => {}
        }
        if (self.red_duration.is_some() || self.cycle_length.is_some()) != joint {
            return Err(Error::invalid(if joint {
                "joint mode needs cycle length and red duration"
            } else {
                "signal timing applies to joint mode only"
            }));
        }
        if joint {
            let (cycle, red) = self.timing()?;
            if !(red.is_finite() && red > 0.0 && cycle.is_finite() && cycle >= red) {
                return Err(Error::invalid(format!(
                    "need 0 < red ({red}) <= cycle ({cycle})"
                )));
            }
            self.cycles_per_window()?;
        }
        if !(self.avg_vehicle_length.is_finite() && self.avg_vehicle_length > 0.0) {
            return Err(Error::invalid("average vehicle length must be positive"));
        }
        if !self.red_offset.is_finite() {
            return Err(Error::invalid("red offset must be finite"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0 && self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("alpha and delta must lie in (0, 1)"));
        }
        Ok(())
    }

    fn timing(&self) -> Result<(f64, f64)> {
        match (self.cycle_length, self.red_duration) {
            (Some(c), Some(r)) => Ok((c, r)),
            _ => Err(Error::invalid("joint mode needs cycle length and red duration")),
        }
    }

    fn cycles_per_window(&self) -> Result<u64> {
        let (cycle, _) = self.timing()?;
        let ratio = self.window.seconds() / cycle;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::invalid(format!(
                "window of {} s is not a whole number of {cycle} s cycles",
                self.window.seconds()
            )));
        }
        Ok(n as u64)
    }
}

/// Index `k` of the half-open interval `[origin + k·width, origin + (k+1)·width)`
/// containing `t`, consistent with the interval starts computed the same way.
fn bucket(t: f64, origin: f64, width: f64) -> i64 {
    let start = |k: i64| origin + k as f64 * width;
    let mut k = ((t - origin) / width).floor() as i64;
    while t < start(k) {
        k -= 1;
    }
    while t >= start(k + 1) {
        k += 1;
    }
    k
}

/// Probe evidence for one observation window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowedObservation {
    pub index: i64,
    pub start: f64,
    pub end: f64,
    pub n_probes: u64,
    /// Joint mode only.
    pub cycles: Vec<CycleRecord>,
    /// Cycle-level data problems (joint mode).
    pub issues: Vec<String>,
}

fn build_cycle(events: &[&ProbeEvent], start: f64, red: f64, cycle: f64, issues: &mut Vec<String>) -> CycleRecord {
    let red_end = start + red;
    let (red_events, green_events): (Vec<&ProbeEvent>, Vec<&ProbeEvent>) =
        events.iter().partition(|e| e.time < red_end);
    let _ = cycle;
    let last_located = red_events
        .iter()
        .rposition(|e| e.queue_position.is_some() && e.time > start);
    let (observation, unlocated) = match last_located {
        None => (None, red_events.len()),
        Some(i) => {
            let last = red_events[i];
            let n = (i + 1) as u32;
            let position = last.queue_position.expect("located");
            match RedPhaseObservation::new(n, position, last.time - start, red) {
                Ok(obs) => (Some(obs), red_events.len() - (i + 1)),
                Err(e) => {
                    issues.push(format!("cycle at {start} s: {e}"));
                    (None, red_events.len())
                }
            }
        }
    };
    let red_obs = observation.unwrap_or_else(|| RedPhaseObservation::without_probes(red).expect("validated timing"));
    CycleRecord {
        red: red_obs,
        n_probes_green: green_events.len() as u32,
        n_probes_unlocated: unlocated as u32,
        n_arrivals_total: None,
    }
}

/// Buckets sorted events into consecutive half-open windows of the requested
/// length, covering every window from the first event's to the last's.
/// In joint mode each window is further split into cycles with red first.
pub fn window_events(events: &[ProbeEvent], request: &EstimationRequest) -> Result<Vec<WindowedObservation>> {
    request.validate()?;
    if request.mode == EstimationMode::Joint && !events.iter().any(|e| e.queue_position.is_some()) {
        return Err(Error::not_estimable("joint mode needs queue positions and the log has none"));
    }
    let (Some(first), Some(last)) = (events.first(), events.last()) else {
        return Ok(Vec::new());
    };
    let origin = request.red_offset;
    let width = request.window.seconds();
    let lo = bucket(first.time, origin, width);
    let hi = bucket(last.time, origin, width);

    let mut windows: Vec<WindowedObservation> = (lo..=hi)
        .map(|k| WindowedObservation {
            index: k,
            start: origin + k as f64 * width,
            end: origin + (k + 1) as f64 * width,
            n_probes: 0,
            cycles: Vec::new(),
            issues: Vec::new(),
        })
        .collect();

    let mut per_window: Vec<Vec<&ProbeEvent>> = vec![Vec::new(); windows.len()];
    for e in events {
        let k = bucket(e.time, origin, width);
        per_window[(k - lo) as usize].push(e);
    }

    for (w, evs) in windows.iter_mut().zip(&per_window) {
        w.n_probes = evs.len() as u64;
        if request.mode != EstimationMode::Joint {
            continue;
        }
        let (cycle, red) = request.timing()?;
        let per = request.cycles_per_window()? as i64;
        let first_cycle = w.index * per;
        let mut per_cycle: Vec<Vec<&ProbeEvent>> = vec![Vec::new(); per as usize];
        for e in evs {
            let c = bucket(e.time, origin, cycle);
            // Window and cycle grids share the origin; clamp guards the
            // one-ulp disagreement between the two divisions.
            let slot = (c - first_cycle).clamp(0, per - 1) as usize;
            per_cycle[slot].push(*e);
        }
        for (j, evs) in per_cycle.iter().enumerate() {
            let start = origin + (first_cycle + j as i64) as f64 * cycle;
            let record = build_cycle(evs, start, red, cycle, &mut w.issues);
            w.cycles.push(record);
        }
    }
    Ok(windows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sufficiency {
    pub observed_probes: u64,
    pub required_probe_count: f64,
    /// Requirement rounded to the nearest whole probe; the comparison uses this.
    pub required_rounded: u64,
    pub alpha: f64,
    pub delta: f64,
    pub meets_requirement: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_index: i64,
    pub start_s: f64,
    pub end_s: f64,
    pub n_probes: u64,
    pub estimates: Vec<EstimateReport>,
    /// Why this window produced no estimate, or data problems seen in it.
    pub issues: Vec<String>,
    pub sufficiency: Sufficiency,
}

/// Applies the mode's estimator to every window. Windows that cannot be
/// estimated are reported with an issue; the run continues.
pub fn run_estimation(observations: &[WindowedObservation], request: &EstimationRequest) -> Result<Vec<WindowReport>> {
    request.validate()?;
    if observations.is_empty() {
        return Err(Error::not_estimable("no observation windows"));
    }
    let required = required_probe_count(request.alpha, request.delta)?;
    let required_rounded = required.round() as u64;
    let window = request.window;

    Ok(observations
        .iter()
        .map(|obs| {
            let mut issues = obs.issues.clone();
            let mut estimates = Vec::new();
            match request.mode {
                EstimationMode::KnownP => {
                    let p = ProbeFraction::new(request.known_value.unwrap_or(f64::NAN)).expect("validated");
                    let point = estimate_lambda_known_p(obs.n_probes, window, p);
                    estimates.push(EstimateReport {
                        estimator: EstimatorId::LambdaKnownP,
                        point,
                        theoretical_variance: Some(point / (window.seconds() * p.value())),
                        window,
                        cycles_used: 0,
                        cycles_skipped: 0,
                        out_of_range: false,
                    });
                }
                EstimationMode::KnownLambda => {
                    let lambda = ArrivalRate::per_second(request.known_value.unwrap_or(f64::NAN)).expect("validated");
                    let point = estimate_p_known_lambda(obs.n_probes, window, lambda);
                    estimates.push(EstimateReport {
                        estimator: EstimatorId::PKnownLambda,
                        point,
                        theoretical_variance: Some(point / (window.seconds() * lambda.value())),
                        window,
                        cycles_used: 0,
                        cycles_skipped: 0,
                        out_of_range: point > 1.0,
                    });
                }
                EstimationMode::Joint => match combine_cycles(&obs.cycles, window, request.no_probe_policy) {
                    Ok(est) => {
                        let d = est.diagnostics;
                        let used = d.cycles_total - d.cycles_skipped;
                        for (estimator, point) in
                            [(EstimatorId::P2Corrected, est.p_hat), (EstimatorId::LambdaJoint, est.lambda_hat)]
                        {
                            estimates.push(EstimateReport {
                                estimator,
                                point,
                                theoretical_variance: None,
                                window,
                                cycles_used: used,
                                cycles_skipped: d.cycles_skipped,
                                out_of_range: estimator.estimates_probe_fraction() && point > 1.0,
                            });
                        }
                    }
                    Err(e) => issues.push(e.to_string()),
                },
            }
            WindowReport {
                window_index: obs.index,
                start_s: obs.start,
                end_s: obs.end,
                n_probes: obs.n_probes,
                estimates,
                issues,
                sufficiency: Sufficiency {
                    observed_probes: obs.n_probes,
                    required_probe_count: required,
                    required_rounded,
                    alpha: request.alpha,
                    delta: request.delta,
                    meets_requirement: obs.n_probes >= required_rounded,
                },
            }
        })
        .collect())
}
