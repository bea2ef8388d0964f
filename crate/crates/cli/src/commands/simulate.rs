use std::path::PathBuf;
use std::time::Instant;

use photostat_core::eventstream::{write_frames, write_stream};
use photostat_core::simsource::{simulate_frames, simulate_timetag_run, FrameSimConfig, TimeTagSimConfig};
use serde::Deserialize;

use super::summary;
use crate::error::{config, load_json, to_json_pretty, write_output, Result};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Simulation config: `{"timetag": {...}}` or `{"frames": {...}}`.
    #[arg(long)]
    config: PathBuf,
    /// Output `.phst` (time-tag) or `.phfr` (frames) file.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Time-tag runs: write the channel ROIs here, ready for `correlate`.
    #[arg(long)]
    rois_out: Option<PathBuf>,
    /// Time-tag runs: write generator counts (pulses, photons, darks) here.
    #[arg(long)]
    truth_out: Option<PathBuf>,
}

#[derive(Deserialize, Debug)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum SimulateConfig {
    Timetag(TimeTagSimConfig),
    Frames(FrameSimConfig),
}

pub fn run(args: Args) -> Result<()> {
    let started = Instant::now();
    match load_json::<SimulateConfig>(&args.config)? {
        SimulateConfig::Timetag(mut cfg) => {
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            let run = simulate_timetag_run(&cfg).map_err(config)?;
            let bytes = write_stream(&run.header, &run.hits).map_err(config)?;
            write_output(&args.out, bytes)?;
            if let Some(p) = &args.rois_out {
                write_output(p, to_json_pretty(&cfg.rois()))?;
            }
            if let Some(p) = &args.truth_out {
                write_output(p, to_json_pretty(&run.truth))?;
            }
            summary("simulate", run.hits.len(), "hits", started);
        }
        SimulateConfig::Frames(mut cfg) => {
            if args.rois_out.is_some() || args.truth_out.is_some() {
                return Err(config("--rois-out and --truth-out apply to time-tag runs only"));
            }
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            let stack = simulate_frames(&cfg).map_err(config)?;
            write_output(&args.out, write_frames(&stack).map_err(config)?)?;
            summary("simulate", stack.frame_count as usize, "frames", started);
        }
    }
    Ok(())
}
