//! Glue for the common end-to-end path: raw hits → photon events →
//! per-subset g⁽ⁿ⁾.

use crate::clusterer::{
    calibrate_time_walk, cluster_hits, pulse_reference_samples, reconstruct_events, timing_member, ClusterError,
    ClusterParams, TimeWalkTable,
};
use crate::correlator::{correlate_run, ChannelRoi, CorrelatorError, RunParams, RunReport};
use crate::eventstream::RawHit;

/// Time-walk calibration from a periodic source.
///
/// Each cluster's timing hit is tagged with the nearest pulse time; hits
/// further than `max_offset_ps` from any pulse (mostly dark counts) are
/// dropped before the per-bin means are taken.
pub fn calibrate_from_pulses(
    hits: &[RawHit],
    tick_ps: u32,
    params: ClusterParams,
    period_ps: f64,
    phase_ps: f64,
    max_offset_ps: f64,
    bin_width: u16,
) -> Result<TimeWalkTable, ClusterError> {
    let timing: Vec<RawHit> = cluster_hits(hits, params).iter().map(|c| *timing_member(c)).collect();
    let samples: Vec<_> = pulse_reference_samples(&timing, tick_ps, period_ps, phase_ps)
        .into_iter()
        .filter(|s| (s.hit.toa_ticks as f64 * tick_ps as f64 - s.true_time_ps).abs() <= max_offset_ps)
        .collect();
    calibrate_time_walk(&samples, tick_ps, bin_width)
}

/// Clusters `hits`, applies `walk`, and correlates folds `n_min..=n_max`.
#[allow(clippy::too_many_arguments)]
pub fn analyze_hits(
    hits: &[RawHit],
    tick_ps: u32,
    cluster: ClusterParams,
    walk: &TimeWalkTable,
    rois: &[ChannelRoi],
    params: &RunParams,
    n_min: usize,
    n_max: usize,
) -> Result<RunReport, CorrelatorError> {
    let events = reconstruct_events(hits, tick_ps, cluster, walk);
    correlate_run(&events, rois, params, n_min, n_max)
}
