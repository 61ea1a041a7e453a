#![no_main]

// JSON documents the CLI writes are also read back by downstream tools;
// decoding must never panic and must be stable under re-encoding.

use libfuzzer_sys::fuzz_target;
use probeflow::cli::{EstimateOutput, SampleSizeSweep, SimulationOutput};
use probeflow::reliability::CoverageTable;

fn stable<T>(data: &[u8])
where
    T: serde::de::DeserializeOwned + serde::Serialize + PartialEq + std::fmt::Debug,
{
    if let Ok(value) = serde_json::from_slice::<T>(data) {
        let text = serde_json::to_string(&value).unwrap();
        let again: T = serde_json::from_str(&text).unwrap();
        assert_eq!(value, again);
    }
}

fuzz_target!(|data: &[u8]| {
    stable::<CoverageTable>(data);
    stable::<SimulationOutput>(data);
    stable::<EstimateOutput>(data);
    stable::<SampleSizeSweep>(data);
});
