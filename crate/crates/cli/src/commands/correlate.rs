use std::path::{Path, PathBuf};
use std::time::Instant;

use photostat_core::clusterer::reconstruct_events;
use photostat_core::clusterer::PhotonEvent;
use photostat_core::correlator::{
    correlate_run, fig2_csv, pair_records_csv, results_csv, validate_rois, ChannelRoi, CorrelatorError, PairRecord,
    RunParams, DEFAULT_BACKGROUND_RATE, DEFAULT_DURATION_S, DEFAULT_GATE_NS, DEFAULT_REPETITION_RATE_HZ,
};
use serde::{Deserialize, Serialize};

use super::cluster::{read_events_csv, ClusterOpts};
use super::{load_stream, summary};
use crate::error::{config, data, load_json, read_input_text, to_json_pretty, write_output, Result};

#[derive(clap::Args, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrelateOpts {
    /// Raw `.phst` stream; clustered before correlation.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Events CSV from `photostat cluster`.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Two-channel count table (`set,integration_time_s,singles_1,singles_2,coincidences`).
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// JSON array of channel ROIs.
    #[arg(long)]
    rois: Option<PathBuf>,
    /// Directory for result files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Coincidence gate, ns.
    #[arg(long)]
    gate_ns: Option<f64>,
    /// Acquisition time T used to normalise singles, s.
    #[arg(long)]
    duration_s: Option<f64>,
    /// Background photons per second per pixel.
    #[arg(long)]
    background: Option<f64>,
    /// Lowest fold; defaults to 2.
    #[arg(long)]
    fold_min: Option<usize>,
    /// Highest fold; defaults to 5, or the channel count if smaller.
    #[arg(long)]
    fold_max: Option<usize>,
    /// Clustering options; `rate_hz` is also the repetition rate R.
    #[command(flatten)]
    #[serde(default)]
    cluster: ClusterOpts,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// JSON file with any of the options below; clustering options go in a
    /// nested `cluster` object.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    opts: CorrelateOpts,
}

#[derive(Deserialize)]
struct PairRow {
    set: String,
    integration_time_s: f64,
    singles_1: f64,
    singles_2: f64,
    coincidences: u64,
}

#[derive(Serialize)]
struct PairResult<'a> {
    #[serde(flatten)]
    record: &'a PairRecord,
    g2: f64,
    sigma: f64,
}

fn correlator_error(e: CorrelatorError) -> crate::error::CliError {
    match e {
        CorrelatorError::UnsortedSeries(_) => data(e),
        _ => config(e),
    }
}

fn load_rois(path: Option<&PathBuf>) -> Result<Vec<ChannelRoi>> {
    let path = path.ok_or_else(|| config("--rois is required unless --pairs is given"))?;
    let rois: Vec<ChannelRoi> = load_json(path)?;
    validate_rois(&rois).map_err(config)?;
    Ok(rois)
}

fn events_for(o: &CorrelateOpts) -> Result<Vec<PhotonEvent>> {
    if let Some(p) = &o.events {
        return read_events_csv(p);
    }
    let input = o.input.as_ref().expect("checked by caller");
    let (header, hits) = load_stream(input)?;
    let tick = header.tick_picoseconds;
    let params = o.cluster.params(tick)?;
    let walk = o.cluster.walk_table(&hits, tick, params)?;
    Ok(reconstruct_events(&hits, tick, params, &walk))
}

fn run_pairs(path: &Path, rate: f64, out_dir: &Path) -> Result<()> {
    let text = read_input_text(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<PairRow>, _>>()
        .map_err(|e| data(format!("{}: {e}", path.display())))?;
    let records: Vec<PairRecord> = rows
        .into_iter()
        .map(|r| PairRecord {
            label: r.set,
            duration_s: r.integration_time_s,
            singles_1: r.singles_1,
            singles_2: r.singles_2,
            coincidences: r.coincidences,
        })
        .collect();
    let mut results = Vec::new();
    for rec in &records {
        let (g2, sigma) = rec.g2(rate).map_err(|e| data(format!("set {}: {e}", rec.label)))?;
        results.push(PairResult { record: rec, g2, sigma });
        println!("{}: g2 = {g2:.4} ± {sigma:.4}", rec.label);
    }
    write_output(&out_dir.join("pairs_results.csv"), pair_records_csv(&records, rate))?;
    write_output(&out_dir.join("pairs_results.json"), to_json_pretty(&results))?;
    Ok(())
}

pub fn run(args: Args) -> Result<()> {
    let file = match &args.config {
        Some(p) => load_json(p)?,
        None => CorrelateOpts::default(),
    };
    let cli = args.opts;
    let o = CorrelateOpts {
        input: cli.input.or(file.input),
        events: cli.events.or(file.events),
        pairs: cli.pairs.or(file.pairs),
        rois: cli.rois.or(file.rois),
        out_dir: cli.out_dir.or(file.out_dir),
        gate_ns: cli.gate_ns.or(file.gate_ns),
        duration_s: cli.duration_s.or(file.duration_s),
        background: cli.background.or(file.background),
        fold_min: cli.fold_min.or(file.fold_min),
        fold_max: cli.fold_max.or(file.fold_max),
        cluster: cli.cluster.overlay(file.cluster),
    };
    let sources = [o.input.is_some(), o.events.is_some(), o.pairs.is_some()].iter().filter(|&&b| b).count();
    if sources != 1 {
        return Err(config("give exactly one of --input, --events or --pairs"));
    }
    let out_dir = o.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let rate = o.cluster.rate_hz.unwrap_or(DEFAULT_REPETITION_RATE_HZ);
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(config("rate_hz must be > 0"));
    }
    if let Some(p) = &o.pairs {
        return run_pairs(p, rate, &out_dir);
    }

    let params = RunParams {
        repetition_rate_hz: rate,
        duration_s: o.duration_s.unwrap_or(DEFAULT_DURATION_S),
        gate_ns: o.gate_ns.unwrap_or(DEFAULT_GATE_NS),
        background_rate: o.background.unwrap_or(DEFAULT_BACKGROUND_RATE),
    };
    params.validate().map_err(config)?;
    let rois = load_rois(o.rois.as_ref())?;
    let fold_min = o.fold_min.unwrap_or(2);
    let fold_max = o.fold_max.unwrap_or(5.min(rois.len()));
    if fold_min < 2 || fold_max < fold_min || fold_max > rois.len() {
        return Err(config(format!("fold range {fold_min}..={fold_max} does not fit {} channels", rois.len())));
    }

    let started = Instant::now();
    let events = events_for(&o)?;
    let report = correlate_run(&events, &rois, &params, fold_min, fold_max).map_err(correlator_error)?;
    write_output(&out_dir.join("gn_results.json"), to_json_pretty(&report))?;
    write_output(&out_dir.join("gn_results.csv"), results_csv(&report.results))?;
    write_output(&out_dir.join("fig2_data.csv"), fig2_csv(&report.results))?;
    for c in &report.channels {
        let flag = if c.background_floored { " (background floored)" } else { "" };
        eprintln!("channel {}: {} raw, {:.1} corrected{flag}", c.roi, c.raw_singles, c.corrected_singles);
    }
    for f in &report.failures {
        eprintln!("subset {}: {}", f.subset.join("-"), f.error);
    }
    summary("correlate", events.len(), "events", started);
    Ok(())
}
