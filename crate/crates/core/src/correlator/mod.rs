//! Channel assignment, background subtraction, n-fold coincidence counting
//! and the count-based g^(n) estimator
//!
//! ```text
//! g(n) = C(n) · (R·T)^(n−1) / Π S_i
//! ```
//!
//! with `C(n)` the n-fold coincidences, `R` the pulse repetition rate, `T`
//! the run duration and `S_i` the background-corrected singles.

mod coincidence;
mod export;
mod roi;

pub use coincidence::{count_coincidences, CoincidenceIndex};
pub use export::{fig2_csv, pair_records_csv, results_csv};
pub use roi::{validate_rois, ChannelRoi, DEFAULT_ROI_RADIUS};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clusterer::PhotonEvent;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrelatorError {
    #[error("ROIs {0} and {1} overlap")]
    OverlappingRois(String, String),
    #[error("invalid ROI: {0}")]
    InvalidRoi(String),
    #[error("fold {fold} is outside 2..={channels}")]
    FoldOutOfRange { fold: usize, channels: usize },
    #[error("singles for channel {0} are zero after background subtraction")]
    ZeroSingles(String),
    #[error("series {0} is not strictly increasing")]
    UnsortedSeries(usize),
    #[error("invalid run parameters: {0}")]
    InvalidParams(String),
}

pub const DEFAULT_REPETITION_RATE_HZ: f64 = 28_060.0;
pub const DEFAULT_GATE_NS: f64 = 25.0;
pub const DEFAULT_BACKGROUND_RATE: f64 = 4.3;
pub const DEFAULT_DURATION_S: f64 = 22.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    /// Pulse repetition rate R, Hz.
    pub repetition_rate_hz: f64,
    /// Acquisition time T, seconds.
    pub duration_s: f64,
    pub gate_ns: f64,
    /// Background photons per second per pixel.
    pub background_rate: f64,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            repetition_rate_hz: DEFAULT_REPETITION_RATE_HZ,
            duration_s: DEFAULT_DURATION_S,
            gate_ns: DEFAULT_GATE_NS,
            background_rate: DEFAULT_BACKGROUND_RATE,
        }
    }
}

impl RunParams {
    pub fn validate(&self) -> Result<(), CorrelatorError> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.repetition_rate_hz) || !pos(self.duration_s) || !pos(self.gate_ns) {
            return Err(CorrelatorError::InvalidParams("rate, duration and gate must be positive".into()));
        }
        if !(self.background_rate.is_finite() && self.background_rate >= 0.0) {
            return Err(CorrelatorError::InvalidParams("background rate must be >= 0".into()));
        }
        Ok(())
    }

    pub fn gate_ps(&self) -> i64 {
        (self.gate_ns * 1000.0).round() as i64
    }

    /// Number of pulses in the run, R·T.
    pub fn pulses(&self) -> f64 {
        self.repetition_rate_hz * self.duration_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSeries {
    pub roi: String,
    /// Strictly increasing arrival times, ps.
    pub times_ps: Vec<i64>,
    pub raw_singles: u64,
    pub corrected_singles: f64,
    pub pixel_count: u64,
    /// Set when the background estimate exceeded the raw count.
    pub background_floored: bool,
}

impl ChannelSeries {
    pub fn apply_background(&mut self, params: &RunParams) {
        let (c, floored) = subtract_background(self.raw_singles, params, self.pixel_count);
        self.corrected_singles = c;
        self.background_floored = floored;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelAssignment {
    /// One series per ROI, in ROI order.
    pub series: Vec<ChannelSeries>,
    /// Events outside every ROI.
    pub rejected: u64,
    /// Events dropped because an identical time already existed in the channel.
    pub duplicates: u64,
}

/// Sorts events into ROI discs (inclusive rim). Raw singles count the
/// distinct arrival times per channel; corrected singles start equal to raw.
pub fn assign_channels(events: &[PhotonEvent], rois: &[ChannelRoi]) -> Result<ChannelAssignment, CorrelatorError> {
    validate_rois(rois)?;
    let mut times: Vec<Vec<i64>> = vec![Vec::new(); rois.len()];
    let mut rejected = 0;
    for e in events {
        match rois.iter().position(|r| r.contains(e.cx, e.cy)) {
            Some(i) => times[i].push(e.toa_ps),
            None => rejected += 1,
        }
    }
    let mut duplicates = 0;
    let series = rois
        .iter()
        .zip(times)
        .map(|(roi, mut t)| {
            t.sort_unstable();
            let before = t.len();
            t.dedup();
            duplicates += (before - t.len()) as u64;
            let raw = t.len() as u64;
            ChannelSeries {
                roi: roi.id.clone(),
                times_ps: t,
                raw_singles: raw,
                corrected_singles: raw as f64,
                pixel_count: roi.pixel_count(),
                background_floored: false,
            }
        })
        .collect();
    Ok(ChannelAssignment { series, rejected, duplicates })
}

/// `raw − b·T·pixel_count`, floored at zero. The flag reports flooring.
pub fn subtract_background(raw_singles: u64, params: &RunParams, pixel_count: u64) -> (f64, bool) {
    let corrected = raw_singles as f64 - params.background_rate * params.duration_s * pixel_count as f64;
    if corrected < 0.0 {
        (0.0, true)
    } else {
        (corrected, false)
    }
}

/// Count-based g^(n) and its first-order Poisson uncertainty
/// `g·sqrt(1/C + Σ 1/S_i)`. With `C = 0` the uncertainty is evaluated at
/// `C = 1` so an empty subset still carries a finite one-count scale.
pub fn g_n(coincidences: u64, singles: &[f64], params: &RunParams) -> Result<(f64, f64), CorrelatorError> {
    if let Some(i) = singles.iter().position(|&s| !(s > 0.0)) {
        return Err(CorrelatorError::ZeroSingles(format!("#{i}")));
    }
    let n = singles.len() as i32;
    let scale = params.pulses().powi(n - 1) / singles.iter().product::<f64>();
    let g = coincidences as f64 * scale;
    let inv_s: f64 = singles.iter().map(|s| 1.0 / s).sum();
    let sigma =
        if coincidences == 0 { scale * (1.0 + inv_s).sqrt() } else { g * (1.0 / coincidences as f64 + inv_s).sqrt() };
    Ok((g, sigma))
}

/// All size-`n` index subsets of `0..channels`, lexicographic, for each
/// `n` in `n_min..=n_max`.
pub fn enumerate_folds(channels: usize, n_min: usize, n_max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for n in n_min..=n_max.min(channels) {
        if n == 0 {
            continue;
        }
        let mut idx: Vec<usize> = (0..n).collect();
        loop {
            out.push(idx.clone());
            let Some(i) = (0..n).rev().find(|&i| idx[i] != i + channels - n) else { break };
            idx[i] += 1;
            for j in i + 1..n {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub subset: Vec<String>,
    pub fold: usize,
    #[serde(rename = "C")]
    pub coincidences: u64,
    pub g: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetFailure {
    pub subset: Vec<String>,
    pub fold: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub params: RunParams,
    pub channels: Vec<ChannelSummary>,
    pub rejected_events: u64,
    pub duplicate_events: u64,
    pub results: Vec<CorrelationResult>,
    pub failures: Vec<SubsetFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub roi: String,
    pub raw_singles: u64,
    pub corrected_singles: f64,
    pub pixel_count: u64,
    pub background_floored: bool,
}

impl RunReport {
    pub fn fold_results(&self, fold: usize) -> impl Iterator<Item = &CorrelationResult> {
        self.results.iter().filter(move |r| r.fold == fold)
    }
}

/// Coincidences and g^(n) for every channel subset of the given folds.
pub fn correlate_series(
    series: &[ChannelSeries],
    params: &RunParams,
    n_min: usize,
    n_max: usize,
) -> Result<(Vec<CorrelationResult>, Vec<SubsetFailure>), CorrelatorError> {
    params.validate()?;
    if n_min < 2 || n_max < n_min || n_max > series.len() {
        return Err(CorrelatorError::FoldOutOfRange { fold: n_max.max(n_min), channels: series.len() });
    }
    let all: Vec<&[i64]> = series.iter().map(|s| s.times_ps.as_slice()).collect();
    let index = CoincidenceIndex::new(&all, params.gate_ps())?;
    let subsets = enumerate_folds(series.len(), n_min, n_max);
    let eval = |subset: &Vec<usize>| -> Result<CorrelationResult, SubsetFailure> {
        let names: Vec<String> = subset.iter().map(|&i| series[i].roi.clone()).collect();
        let fold = subset.len();
        let fail = |e: CorrelatorError| SubsetFailure { subset: names.clone(), fold, error: e.to_string() };
        if let Some(&i) = subset.iter().find(|&&i| !(series[i].corrected_singles > 0.0)) {
            return Err(fail(CorrelatorError::ZeroSingles(series[i].roi.clone())));
        }
        let c = index.count(subset, fold).map_err(fail)?;
        let singles: Vec<f64> = subset.iter().map(|&i| series[i].corrected_singles).collect();
        let (g, sigma) = g_n(c, &singles, params).map_err(fail)?;
        Ok(CorrelationResult { subset: names.clone(), fold, coincidences: c, g, sigma })
    };
    let outcomes: Vec<Result<CorrelationResult, SubsetFailure>> = if rayon::current_num_threads() > 1 {
        subsets.par_iter().map(eval).collect()
    } else {
        subsets.iter().map(eval).collect()
    };
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(f) => failures.push(f),
        }
    }
    Ok((results, failures))
}

/// Full pipeline: assign → subtract background → count per subset → g^(n)
/// for folds `n_min..=n_max`.
pub fn correlate_run(
    events: &[PhotonEvent],
    rois: &[ChannelRoi],
    params: &RunParams,
    n_min: usize,
    n_max: usize,
) -> Result<RunReport, CorrelatorError> {
    params.validate()?;
    let mut assignment = assign_channels(events, rois)?;
    for s in &mut assignment.series {
        s.apply_background(params);
    }
    let (results, failures) = correlate_series(&assignment.series, params, n_min, n_max)?;
    Ok(RunReport {
        params: *params,
        channels: assignment
            .series
            .iter()
            .map(|s| ChannelSummary {
                roi: s.roi.clone(),
                raw_singles: s.raw_singles,
                corrected_singles: s.corrected_singles,
                pixel_count: s.pixel_count,
                background_floored: s.background_floored,
            })
            .collect(),
        rejected_events: assignment.rejected,
        duplicate_events: assignment.duplicates,
        results,
        failures,
    })
}

/// Published two-channel measurement: integration time, two background
/// corrected singles and the coincidence count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub label: String,
    pub duration_s: f64,
    pub singles_1: f64,
    pub singles_2: f64,
    pub coincidences: u64,
}

impl PairRecord {
    pub fn g2(&self, repetition_rate_hz: f64) -> Result<(f64, f64), CorrelatorError> {
        let params = RunParams {
            repetition_rate_hz,
            duration_s: self.duration_s,
            gate_ns: DEFAULT_GATE_NS,
            background_rate: 0.0,
        };
        params.validate()?;
        g_n(self.coincidences, &[self.singles_1, self.singles_2], &params)
    }
}
