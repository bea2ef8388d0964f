use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use photostat_core::eventstream::read_frames;
use photostat_core::pnrstats::{
    build_histogram, classify, compute_stats, fig3_csv, fig3c_csv, fit_model, histogram_csv, stats_table_csv,
    BootstrapConfig, Classification, ModelFit, ModelKind, PhotonNumberHistogram, PhotonNumberStats, Region, StatsRow,
};
use serde::{Deserialize, Serialize};

use super::summary;
use crate::error::{config, data, read_input, read_input_text, to_json_pretty, write_output, Result};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// One or more `.phfr` frame stacks.
    #[arg(long, num_args = 1.., required_unless_present = "moments")]
    input: Vec<PathBuf>,
    /// `brightest`, `all`, `pixel:X,Y`, `rect:X0,Y0,W,H` or `disc:CX,CY,R`.
    #[arg(long, default_value = "brightest", value_parser = parse_region)]
    region: Region,
    /// Half-open frame range `START:END`; either end may be omitted.
    #[arg(long)]
    frames: Option<String>,
    /// Bootstrap resamples for the g² and Q uncertainties; 0 disables.
    #[arg(long, default_value_t = BootstrapConfig::default().resamples)]
    bootstrap: u32,
    #[arg(long, default_value_t = BootstrapConfig::default().seed)]
    seed: u64,
    /// Published moments (`sample,mean,variance[,g2_uncertainty]`) to
    /// tabulate alongside or instead of frame data.
    #[arg(long)]
    moments: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn parse_region(s: &str) -> std::result::Result<Region, String> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let nums = |n: usize| -> std::result::Result<Vec<f64>, String> {
        let v: Vec<f64> = rest
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number {t:?} in region {s:?}")))
            .collect::<std::result::Result<_, _>>()?;
        if v.len() != n {
            return Err(format!("region {kind} takes {n} numbers, got {}", v.len()));
        }
        Ok(v)
    };
    let px = |v: f64| -> std::result::Result<u16, String> {
        if v >= 0.0 && v.fract() == 0.0 && v <= u16::MAX as f64 {
            Ok(v as u16)
        } else {
            Err(format!("{v} is not a pixel coordinate"))
        }
    };
    match kind {
        "brightest" if rest.is_empty() => Ok(Region::Brightest),
        "all" if rest.is_empty() => Ok(Region::All),
        "pixel" => {
            let v = nums(2)?;
            Ok(Region::Pixel { x: px(v[0])?, y: px(v[1])? })
        }
        "rect" => {
            let v = nums(4)?;
            Ok(Region::Rect { x0: px(v[0])?, y0: px(v[1])?, width: px(v[2])?, height: px(v[3])? })
        }
        "disc" => {
            let v = nums(3)?;
            Ok(Region::Disc { cx: v[0], cy: v[1], radius: v[2] })
        }
        _ => Err(format!("unknown region {s:?}")),
    }
}

fn parse_frames(spec: Option<&str>, total: usize) -> Result<Range<usize>> {
    let Some(spec) = spec else { return Ok(0..total) };
    let (a, b) = spec.split_once(':').ok_or_else(|| config(format!("frame range {spec:?} is not START:END")))?;
    let bound = |t: &str, default: usize| -> Result<usize> {
        if t.is_empty() {
            Ok(default)
        } else {
            t.parse().map_err(|_| config(format!("bad frame index {t:?}")))
        }
    };
    let r = bound(a, 0)?..bound(b, total)?;
    if r.start > r.end || r.end > total {
        return Err(config(format!("frame range {spec} does not fit {total} frames")));
    }
    Ok(r)
}

#[derive(Deserialize)]
struct MomentsRow {
    sample: String,
    mean: f64,
    variance: f64,
    g2_uncertainty: Option<f64>,
}

#[derive(Serialize)]
struct Run {
    sample: String,
    input: Option<PathBuf>,
    region: Option<String>,
    frames: Option<[usize; 2]>,
    stats: PhotonNumberStats,
    classification: Option<Classification>,
    fits: Vec<ModelFit>,
    fit_failures: Vec<String>,
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into())
}

fn fits(hist: &PhotonNumberHistogram) -> (Vec<ModelFit>, Vec<String>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for kind in [ModelKind::Poisson, ModelKind::BoseEinstein, ModelKind::MultimodeThermal] {
        match fit_model(hist, kind) {
            Ok(f) => ok.push(f),
            Err(e) => failed.push(format!("{kind:?}: {e}")),
        }
    }
    (ok, failed)
}

pub fn run(args: Args) -> Result<()> {
    let started = Instant::now();
    let boot = BootstrapConfig { resamples: args.bootstrap, seed: args.seed };
    let single = args.input.len() == 1;
    let mut runs = Vec::new();
    let mut samples = 0usize;
    for path in &args.input {
        let bytes = read_input(path)?;
        let stack = read_frames(&bytes).map_err(|e| data(format!("{}: {e}", path.display())))?;
        let frames = parse_frames(args.frames.as_deref(), stack.frame_count as usize)?;
        let hist = build_histogram(&stack, &args.region, frames.clone()).map_err(config)?;
        let stats = compute_stats(&hist, &boot).map_err(|e| data(format!("{}: {e}", path.display())))?;
        let (hist_name, fig_name) = if single {
            ("histogram.csv".to_string(), "fig3_data.csv".to_string())
        } else {
            (format!("histogram_{}.csv", stem(path)), format!("fig3_data_{}.csv", stem(path)))
        };
        write_output(&args.out_dir.join(hist_name), histogram_csv(&hist))?;
        write_output(&args.out_dir.join(fig_name), fig3_csv(&hist))?;
        let (fits, fit_failures) = fits(&hist);
        samples += hist.total_samples as usize;
        runs.push(Run {
            sample: stem(path),
            input: Some(path.clone()),
            region: Some(hist.region.clone()),
            frames: Some([frames.start, frames.end]),
            classification: classify(&stats).ok(),
            stats,
            fits,
            fit_failures,
        });
    }
    if let Some(p) = &args.moments {
        let text = read_input_text(p)?;
        let mut r = csv::Reader::from_reader(text.as_bytes());
        for row in r.deserialize::<MomentsRow>() {
            let row = row.map_err(|e| data(format!("{}: {e}", p.display())))?;
            let mut stats = PhotonNumberStats::from_moments(row.mean, row.variance)
                .map_err(|e| data(format!("{}: sample {}: {e}", p.display(), row.sample)))?;
            if let Some(s) = row.g2_uncertainty {
                stats = stats.with_g2_uncertainty(s);
            }
            runs.push(Run {
                sample: row.sample,
                input: None,
                region: None,
                frames: None,
                classification: classify(&stats).ok(),
                stats,
                fits: Vec::new(),
                fit_failures: Vec::new(),
            });
        }
    }

    let rows: Vec<StatsRow> = runs.iter().map(|r| StatsRow { sample: r.sample.clone(), stats: r.stats }).collect();
    write_output(&args.out_dir.join("stats.json"), to_json_pretty(&serde_json::json!({ "runs": runs })))?;
    write_output(&args.out_dir.join("stats_table.csv"), stats_table_csv(&rows))?;
    write_output(&args.out_dir.join("fig3c_data.csv"), fig3c_csv(&rows))?;
    for r in &runs {
        let s = &r.stats;
        let class = r.classification.map(|c| c.class.to_string()).unwrap_or_else(|| "unclassified".into());
        println!("{}: mean {:.4}, g2 {:.4}, Q {:.4}, {class}", r.sample, s.mean, s.g2, s.q);
    }
    if samples > 0 {
        summary("pnr", samples, "samples", started);
    }
    Ok(())
}
