#![no_main]

use libfuzzer_sys::fuzz_target;
use probeflow::ingest::{parse_probe_log, window_events, EstimationRequest, ParseOptions};
use probeflow::ObservationWindow;

fuzz_target!(|data: &[u8]| {
    let Some((&flags, body)) = data.split_first() else {
        return;
    };
    let options = ParseOptions {
        strict: flags & 1 == 1,
        avg_vehicle_length: 1.0 + f64::from(flags >> 1),
    };
    let Ok(log) = parse_probe_log(body, &options) else {
        return;
    };
    assert_eq!(log.events.len() + log.rejected.len(), log.total_rows);
    assert!(log.events.windows(2).all(|w| w[0].time <= w[1].time));
    assert!(log.events.iter().all(|e| e.time.is_finite() && e.time >= 0.0));

    // Windowing must account for every event whenever it succeeds.
    let request = EstimationRequest::joint(ObservationWindow::from_seconds(240.0).unwrap(), 120.0, 60.0);
    if let Ok(windows) = window_events(&log.events, &request) {
        let counted: u64 = windows.iter().map(|w| w.n_probes).sum();
        assert_eq!(counted, log.events.len() as u64);
    }
});
