use std::fmt::Write as _;
use std::path::PathBuf;

use photostat_core::correlator::RunReport;
use serde_json::Value;

use crate::error::{data, read_input_text, write_output, Result};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// `gn_results.json` from correlate or `stats.json` from pnr.
    #[arg(long)]
    input: PathBuf,
    /// Write the summary here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn correlation_summary(r: &RunReport) -> String {
    let mut s = String::new();
    let p = &r.params;
    writeln!(
        s,
        "R = {} Hz, T = {} s, gate = {} ns, background = {} /s/px",
        p.repetition_rate_hz, p.duration_s, p.gate_ns, p.background_rate
    )
    .unwrap();
    for c in &r.channels {
        writeln!(
            s,
            "  {:<8} raw {:>10}  corrected {:>12.1}  pixels {}",
            c.roi, c.raw_singles, c.corrected_singles, c.pixel_count
        )
        .unwrap();
    }
    writeln!(s, "rejected {} events, {} duplicates", r.rejected_events, r.duplicate_events).unwrap();
    let mut folds: Vec<usize> = r.results.iter().map(|x| x.fold).collect();
    folds.dedup();
    for f in folds {
        let gs: Vec<f64> = r.fold_results(f).map(|x| x.g).collect();
        let mean = gs.iter().sum::<f64>() / gs.len() as f64;
        writeln!(s, "g{f}: {} subsets, mean {mean:.4}", gs.len()).unwrap();
        for x in r.fold_results(f) {
            writeln!(s, "  {:<24} C {:>8}  g {:.4} ± {:.4}", x.subset.join("-"), x.coincidences, x.g, x.sigma).unwrap();
        }
    }
    for x in &r.failures {
        writeln!(s, "failed {}: {}", x.subset.join("-"), x.error).unwrap();
    }
    s
}

fn pnr_summary(runs: &[Value]) -> String {
    let mut s = String::new();
    let num = |v: &Value, k: &str| v["stats"][k].as_f64();
    for r in runs {
        let name = r["sample"].as_str().unwrap_or("?");
        let fmt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        writeln!(
            s,
            "{name}: mean {}, variance {}, g2 {} ± {}, Q {}, E {}",
            fmt(num(r, "mean")),
            fmt(num(r, "variance")),
            fmt(num(r, "g2")),
            fmt(num(r, "g2_uncertainty")),
            fmt(num(r, "q")),
            fmt(num(r, "e")),
        )
        .unwrap();
        if let Some(c) = r["classification"].as_object() {
            writeln!(
                s,
                "  {} ({:.1} σ)",
                c["class"].as_str().unwrap_or("?"),
                c["significance"].as_f64().unwrap_or(f64::NAN)
            )
            .unwrap();
        }
        for f in r["fits"].as_array().into_iter().flatten() {
            let modes = f["modes"].as_f64().map(|m| format!(", modes {m:.3}")).unwrap_or_default();
            let p = f["p_value"].as_f64().map(|p| format!("{p:.3e}")).unwrap_or_else(|| "-".into());
            writeln!(
                s,
                "  fit {}: mean {:.4}{modes}, chi2 {:.2} / {} dof, p {p}",
                f["model"].as_str().unwrap_or("?"),
                f["mean"].as_f64().unwrap_or(f64::NAN),
                f["chi_square"].as_f64().unwrap_or(f64::NAN),
                f["dof"].as_i64().unwrap_or(0),
            )
            .unwrap();
        }
    }
    s
}

pub fn run(args: Args) -> Result<()> {
    let text = read_input_text(&args.input)?;
    let bad = |e: serde_json::Error| data(format!("{}: {e}", args.input.display()));
    let value: Value = serde_json::from_str(&text).map_err(bad)?;
    let out = if value.get("results").is_some() {
        correlation_summary(&serde_json::from_value(value).map_err(bad)?)
    } else if let Some(runs) = value.get("runs").and_then(Value::as_array) {
        pnr_summary(runs)
    } else {
        return Err(data(format!("{}: neither correlation results nor photon-number stats", args.input.display())));
    };
    match &args.out {
        Some(p) => write_output(p, out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}
