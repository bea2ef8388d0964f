use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::eventstream::RawHit;

/// Bins with fewer samples than this are filled from their neighbours.
pub const MIN_BIN_SAMPLES: usize = 20;

/// Empirical ToT → ToA offset lookup. ToT values past the last bin use the
/// last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeWalkTable {
    /// Bin width in ToT ticks.
    pub bin_width: u16,
    /// Mean (measured − true) arrival offset per bin, picoseconds.
    pub offsets_ps: Vec<f64>,
    /// Calibration samples that landed in each bin (empty if unknown).
    pub samples: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkSample {
    pub hit: RawHit,
    pub true_time_ps: f64,
}

impl TimeWalkTable {
    pub fn zero() -> Self {
        Self { bin_width: 1, offsets_ps: vec![0.0], samples: Vec::new() }
    }

    pub fn new(bin_width: u16, offsets_ps: Vec<f64>) -> Result<Self, ClusterError> {
        let t = Self { bin_width, offsets_ps, samples: Vec::new() };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<(), ClusterError> {
        if self.bin_width == 0 {
            return Err(ClusterError::InvalidTable("bin width must be >= 1".into()));
        }
        if self.offsets_ps.is_empty() {
            return Err(ClusterError::InvalidTable("table has no bins".into()));
        }
        if let Some(i) = self.offsets_ps.iter().position(|o| !o.is_finite()) {
            return Err(ClusterError::InvalidTable(format!("offset in bin {i} is not finite")));
        }
        Ok(())
    }

    #[inline]
    pub fn bin_of(&self, tot: u16) -> usize {
        ((tot / self.bin_width) as usize).min(self.offsets_ps.len() - 1)
    }

    #[inline]
    pub fn offset(&self, tot: u16) -> f64 {
        self.offsets_ps[self.bin_of(tot)]
    }

    /// Walk should shrink as ToT grows; a violation is reported, not fixed.
    pub fn monotonicity_violations(&self) -> Vec<usize> {
        self.offsets_ps.windows(2).enumerate().filter(|(_, w)| w[1] > w[0]).map(|(i, _)| i + 1).collect()
    }

    /// `tot_bin,offset_ps` where `tot_bin` is the lower ToT edge of the bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tot_bin,offset_ps\n");
        for (i, o) in self.offsets_ps.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i * self.bin_width as usize, o);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, ClusterError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let mut edges = Vec::new();
        let mut offsets = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| ClusterError::InvalidTable(e.to_string()))?;
            if rec.len() != 2 {
                return Err(ClusterError::InvalidTable(format!("expected 2 fields, found {}", rec.len())));
            }
            let edge: u32 =
                rec[0].parse().map_err(|_| ClusterError::InvalidTable(format!("bad tot_bin {:?}", &rec[0])))?;
            let off: f64 =
                rec[1].parse().map_err(|_| ClusterError::InvalidTable(format!("bad offset_ps {:?}", &rec[1])))?;
            edges.push(edge);
            offsets.push(off);
        }
        if edges.first() != Some(&0) {
            return Err(ClusterError::InvalidTable("first tot_bin must be 0".into()));
        }
        let width = if edges.len() > 1 { edges[1] } else { 1 };
        if width == 0 || width > u16::MAX as u32 {
            return Err(ClusterError::InvalidTable("bin width out of range".into()));
        }
        if edges.iter().enumerate().any(|(i, &e)| e != i as u32 * width) {
            return Err(ClusterError::InvalidTable("tot_bin edges must be evenly spaced".into()));
        }
        Self::new(width as u16, offsets)
    }
}

/// `toa_ticks · tick_ps − offset(tot)`.
#[inline]
pub fn apply_time_walk(hit: &RawHit, tick_ps: u32, table: &TimeWalkTable) -> f64 {
    hit.toa_ticks as f64 * tick_ps as f64 - table.offset(hit.tot)
}

/// Builds a per-bin mean-offset table from hits whose true emission time is
/// known. Sparse bins are linearly interpolated between the nearest
/// populated bins and held constant past the ends.
pub fn calibrate_time_walk(
    samples: &[WalkSample],
    tick_ps: u32,
    bin_width: u16,
) -> Result<TimeWalkTable, ClusterError> {
    if bin_width == 0 {
        return Err(ClusterError::InvalidTable("bin width must be >= 1".into()));
    }
    let Some(max_tot) = samples.iter().map(|s| s.hit.tot).max() else {
        return Err(ClusterError::InsufficientData);
    };
    let bins = (max_tot / bin_width) as usize + 1;
    let mut sum = vec![0.0f64; bins];
    let mut count = vec![0usize; bins];
    for s in samples {
        let b = (s.hit.tot / bin_width) as usize;
        sum[b] += s.hit.toa_ticks as f64 * tick_ps as f64 - s.true_time_ps;
        count[b] += 1;
    }
    let good: Vec<usize> = (0..bins).filter(|&b| count[b] >= MIN_BIN_SAMPLES).collect();
    if good.is_empty() {
        return Err(ClusterError::InsufficientData);
    }
    let mean = |b: usize| sum[b] / count[b] as f64;
    let mut offsets = vec![0.0; bins];
    for (b, slot) in offsets.iter_mut().enumerate() {
        let right = good.partition_point(|&g| g < b);
        *slot = match (right.checked_sub(1).map(|i| good[i]), good.get(right).copied()) {
            (_, Some(r)) if r == b => mean(b),
            (Some(l), Some(r)) => {
                let f = (b - l) as f64 / (r - l) as f64;
                mean(l) + f * (mean(r) - mean(l))
            }
            (Some(l), None) => mean(l),
            (None, Some(r)) => mean(r),
            (None, None) => unreachable!(),
        };
    }
    Ok(TimeWalkTable { bin_width, offsets_ps: offsets, samples: count })
}

/// Tags hits from a strictly periodic source with the nearest pulse time.
/// Valid while |walk + jitter| stays well under half the period.
pub fn pulse_reference_samples(hits: &[RawHit], tick_ps: u32, period_ps: f64, phase_ps: f64) -> Vec<WalkSample> {
    hits.iter()
        .map(|&hit| {
            let t = hit.toa_ticks as f64 * tick_ps as f64;
            let k = ((t - phase_ps) / period_ps).round();
            WalkSample { hit, true_time_ps: phase_ps + k * period_ps }
        })
        .collect()
}
