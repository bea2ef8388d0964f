use std::path::{Path, PathBuf};
use std::time::Instant;

use photostat_core::clusterer::{
    reconstruct_events, ClusterParams, PhotonEvent, TimeWalkTable, DEFAULT_SPATIAL_RADIUS, DEFAULT_TEMPORAL_WINDOW_NS,
};
use photostat_core::correlator::DEFAULT_REPETITION_RATE_HZ;
use photostat_core::pipeline::calibrate_from_pulses;
use photostat_core::RawHit;
use serde::Deserialize;

use super::{load_stream, overlay, summary};
use crate::error::{config, data, load_json, read_input_text, write_output, Result};

/// Calibration hits further than this from the nearest pulse are ignored.
const CALIBRATION_MAX_OFFSET_PS: f64 = 200_000.0;

#[derive(clap::Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterOpts {
    /// Chebyshev radius in pixels linking hits of one flash.
    #[arg(long)]
    pub radius: Option<u16>,
    /// Temporal window from a cluster's first hit, ns.
    #[arg(long)]
    pub window_ns: Option<f64>,
    /// Time-walk table CSV (`tot_bin,offset_ps`).
    #[arg(long)]
    pub walk: Option<PathBuf>,
    /// Calibrate time-walk against the pulse train before clustering.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub calibrate: Option<bool>,
    /// Pulse repetition rate used for calibration, Hz.
    #[arg(long)]
    pub rate_hz: Option<f64>,
    /// Time of pulse 0, ps.
    #[arg(long)]
    pub phase_ps: Option<f64>,
    /// ToT bin width of the calibrated table.
    #[arg(long)]
    pub walk_bin: Option<u16>,
    /// Where to save a calibrated table.
    #[arg(long)]
    pub walk_out: Option<PathBuf>,
}

impl ClusterOpts {
    pub fn overlay(self, file: ClusterOpts) -> ClusterOpts {
        overlay!(self, file, ClusterOpts { radius, window_ns, walk, calibrate, rate_hz, phase_ps, walk_bin, walk_out })
    }

    pub fn params(&self, tick_ps: u32) -> Result<ClusterParams> {
        let window = self.window_ns.unwrap_or(DEFAULT_TEMPORAL_WINDOW_NS);
        if !(window >= 0.0 && window.is_finite()) {
            return Err(config("window_ns must be >= 0"));
        }
        Ok(ClusterParams::from_ns(self.radius.unwrap_or(DEFAULT_SPATIAL_RADIUS), window, tick_ps))
    }

    /// The table to apply: calibrated, loaded, or zero.
    pub fn walk_table(&self, hits: &[RawHit], tick_ps: u32, params: ClusterParams) -> Result<TimeWalkTable> {
        if self.calibrate.unwrap_or(false) {
            if self.walk.is_some() {
                return Err(config("use either --walk or --calibrate, not both"));
            }
            let rate = self.rate_hz.unwrap_or(DEFAULT_REPETITION_RATE_HZ);
            if !(rate > 0.0) {
                return Err(config("rate_hz must be > 0"));
            }
            let table = calibrate_from_pulses(
                hits,
                tick_ps,
                params,
                1e12 / rate,
                self.phase_ps.unwrap_or(0.0),
                CALIBRATION_MAX_OFFSET_PS,
                self.walk_bin.unwrap_or(10),
            )
            .map_err(data)?;
            if let Some(p) = &self.walk_out {
                write_output(p, table.to_csv())?;
            }
            Ok(table)
        } else if let Some(p) = &self.walk {
            TimeWalkTable::from_csv(&read_input_text(p)?).map_err(|e| config(format!("{}: {e}", p.display())))
        } else {
            Ok(TimeWalkTable::zero())
        }
    }
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// `.phst` input.
    #[arg(long)]
    input: PathBuf,
    /// Events CSV output.
    #[arg(long)]
    out: PathBuf,
    /// JSON file with any of the clustering options below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    opts: ClusterOpts,
}

pub fn events_csv(events: &[PhotonEvent]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for e in events {
        w.serialize(e).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
}

pub fn read_events_csv(path: &Path) -> Result<Vec<PhotonEvent>> {
    let text = read_input_text(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .collect::<std::result::Result<Vec<PhotonEvent>, _>>()
        .map_err(|e| data(format!("{}: {e}", path.display())))
}

pub fn run(args: Args) -> Result<()> {
    let file = match &args.config {
        Some(p) => load_json(p)?,
        None => ClusterOpts::default(),
    };
    let opts = args.opts.overlay(file);
    let started = Instant::now();
    let (header, hits) = load_stream(&args.input)?;
    let tick = header.tick_picoseconds;
    let params = opts.params(tick)?;
    let walk = opts.walk_table(&hits, tick, params)?;
    let events = reconstruct_events(&hits, tick, params, &walk);
    write_output(&args.out, events_csv(&events))?;
    eprintln!("cluster: {} hits -> {} events", hits.len(), events.len());
    summary("cluster", hits.len(), "hits", started);
    Ok(())
}
