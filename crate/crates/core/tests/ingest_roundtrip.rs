use proptest::prelude::*;

use probeflow::estimators::EstimatorId;
use probeflow::ingest::{
    parse_probe_log, run_estimation, window_events, EstimationRequest, ParseOptions, ProbeEvent,
};
use probeflow::sim::{export_probe_log, joint_estimation_moments, SimConfig};
use probeflow::{ArrivalRate, ObservationWindow, ProbeFraction};

fn config(replicas: u64) -> SimConfig {
    SimConfig::new(
        ArrivalRate::from_vph(1200.0).unwrap(),
        ProbeFraction::new(0.3).unwrap(),
        replicas,
        77,
    )
}

fn joint_request() -> EstimationRequest {
    EstimationRequest::joint(ObservationWindow::from_minutes(20.0).unwrap(), 120.0, 60.0)
}

#[test]
fn joint_estimates_fall_inside_simulated_spread() {
    let cells = joint_estimation_moments(&config(20_000), &[20.0], &[0.3]).unwrap();
    let (mean, sd) = (cells[0].lambda.mean, cells[0].lambda.variance.sqrt());
    let request = joint_request();
    for replica in 0..40 {
        let mut log = Vec::new();
        export_probe_log(&config(1), 10, replica, &mut log).unwrap();
        let parsed = parse_probe_log(log.as_slice(), &ParseOptions::default()).unwrap();
        let reports = run_estimation(&window_events(&parsed.events, &request).unwrap(), &request).unwrap();
        assert_eq!(reports.len(), 1);
        let lambda = reports[0]
            .estimates
            .iter()
            .find(|e| e.estimator == EstimatorId::LambdaJoint)
            .unwrap()
            .point;
        assert!((lambda - mean).abs() < 5.0 * sd, "replica {replica}: {lambda} vs {mean} ± {sd}");
    }
}

#[test]
fn distances_and_crlf_give_the_same_observations() {
    let mut log = Vec::new();
    export_probe_log(&config(1), 30, 3, &mut log).unwrap();
    let text = String::from_utf8(log).unwrap();

    // Re-express every queue position as a distance inside its 7.5 m slot.
    let mut converted = String::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            converted.push_str(line);
        } else {
            let f: Vec<&str> = line.split(',').collect();
            let dist = f[1].parse::<f64>().map(|n| format!("{}", n * 7.5 - 2.5)).unwrap_or_default();
            converted.push_str(&format!("{},,{},{}", f[0], dist, f[3]));
        }
        converted.push_str("\r\n");
    }

    let request = joint_request();
    let a = parse_probe_log(text.as_bytes(), &ParseOptions::default()).unwrap();
    let b = parse_probe_log(converted.as_bytes(), &ParseOptions::default()).unwrap();
    assert!(b.rejected.is_empty());
    let wa = window_events(&a.events, &request).unwrap();
    let wb = window_events(&b.events, &request).unwrap();
    let ca: Vec<_> = wa.iter().flat_map(|w| w.cycles.clone()).collect();
    let cb: Vec<_> = wb.iter().flat_map(|w| w.cycles.clone()).collect();
    assert_eq!(ca, cb);
}

fn arb_event() -> impl Strategy<Value = ProbeEvent> {
    (0.0f64..10_000.0, proptest::option::of(1u32..40)).prop_map(|(time, queue_position)| ProbeEvent {
        time,
        queue_position,
        stop_distance: None,
        cycle_id: None,
    })
}

proptest! {
    #[test]
    fn windows_partition_events(mut events in proptest::collection::vec(arb_event(), 1..200), width in 1u32..50) {
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        let request = EstimationRequest::known_p(
            ProbeFraction::new(0.2).unwrap(),
            ObservationWindow::from_seconds(width as f64 * 60.0).unwrap(),
        );
        let windows = window_events(&events, &request).unwrap();
        let total: u64 = windows.iter().map(|w| w.n_probes).sum();
        prop_assert_eq!(total, events.len() as u64);
        for pair in windows.windows(2) {
            prop_assert_eq!(pair[0].end, pair[1].start);
        }
        for e in &events {
            let hits = windows.iter().filter(|w| e.time >= w.start && e.time < w.end).count();
            prop_assert_eq!(hits, 1);
        }
    }

    #[test]
    fn joint_cycles_account_for_every_probe(mut events in proptest::collection::vec(arb_event(), 1..200)) {
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        prop_assume!(events.iter().any(|e| e.queue_position.is_some()));
        let windows = window_events(&events, &joint_request()).unwrap();
        let total: u64 = windows.iter().flat_map(|w| &w.cycles).map(|c| c.total_probes()).sum();
        prop_assert_eq!(total, events.len() as u64);
        for w in &windows {
            prop_assert_eq!(w.cycles.len(), 10);
        }
    }

    #[test]
    fn row_accounting(rows in proptest::collection::vec("[0-9a-z.,-]{0,20}", 0..50)) {
        let text = format!("time_s,queue_position,stop_distance_m,cycle_id\n{}", rows.join("\n"));
        let log = parse_probe_log(text.as_bytes(), &ParseOptions::default()).unwrap();
        prop_assert_eq!(log.events.len() + log.rejected.len(), log.total_rows);
    }
}
