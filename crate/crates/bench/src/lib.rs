//! Shared fixtures for the benchmarks.

use photostat_core::correlator::ChannelRoi;
use photostat_core::simsource::{simulate_timetag_run, PulsedSource, SimChannel, SourceModel, TimeTagSimConfig};
use photostat_core::{RawHit, StreamHeader};

/// Seven channels in a row across the sensor, coherent light at a few
/// percent occupancy per channel, dark counts on.
pub fn seven_channel_run(duration_s: f64) -> (StreamHeader, Vec<RawHit>, Vec<ChannelRoi>) {
    let channels = (0..7)
        .map(|i| SimChannel {
            roi: ChannelRoi::new(format!("s{}", i + 1), 30.0 + 30.0 * i as f64, 128.0, 10.0),
            collection: 0.9 / 7.0,
        })
        .collect();
    let mut cfg = TimeTagSimConfig::new(PulsedSource::new(SourceModel::Coherent { mean: 2.33 }), channels, 1);
    cfg.duration_s = duration_s;
    let rois = cfg.rois();
    let run = simulate_timetag_run(&cfg).expect("valid config");
    (run.header, run.hits, rois)
}
