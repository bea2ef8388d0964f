use std::path::PathBuf;
use std::time::Instant;

use photostat_core::eventstream::{import_csv, read_stream, write_stream, StreamHeader, DEFAULT_TICK_PS};
use photostat_core::RawHit;

use super::summary;
use crate::error::{config, data, read_input, Result};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// `.phst` stream, or `.csv` with rows `x,y,toa_ticks,tot`.
    #[arg(long)]
    input: PathBuf,
    /// Canonically sorted `.phst` output.
    #[arg(long)]
    out: PathBuf,
    /// CSV input only: tick length in picoseconds.
    #[arg(long, default_value_t = DEFAULT_TICK_PS)]
    tick_ps: u32,
    /// CSV input only: sensor size.
    #[arg(long, default_value_t = 256)]
    width: u16,
    #[arg(long, default_value_t = 256)]
    height: u16,
}

pub fn run(args: Args) -> Result<()> {
    let started = Instant::now();
    let bytes = read_input(&args.input)?;
    let is_csv = args.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let (header, mut hits) = if is_csv {
        let text = String::from_utf8(bytes).map_err(|_| data(format!("{}: not UTF-8 text", args.input.display())))?;
        let hits = import_csv(&text).map_err(|e| data(format!("{}: {e}", args.input.display())))?;
        let header = StreamHeader::new(args.tick_ps, args.width, args.height, hits.len() as u64);
        header.validate().map_err(config)?;
        if let Some((i, h)) = hits.iter().enumerate().find(|(_, h)| h.x >= args.width || h.y >= args.height) {
            return Err(data(format!(
                "row {}: pixel ({}, {}) outside a {}x{} sensor",
                i + 1,
                h.x,
                h.y,
                args.width,
                args.height
            )));
        }
        (header, hits)
    } else {
        read_stream(&bytes).map_err(|e| data(format!("{}: {e}", args.input.display())))?
    };
    hits.sort_unstable_by_key(RawHit::canonical_key);
    let out = write_stream(&header, &hits).map_err(data)?;
    crate::error::write_output(&args.out, out)?;
    if let (Some(first), Some(last)) = (hits.first(), hits.last()) {
        let span = (last.toa_ticks - first.toa_ticks) as f64 * header.tick_picoseconds as f64 * 1e-12;
        eprintln!("ingest: {} records spanning {span:.6} s", hits.len());
    }
    summary("ingest", hits.len(), "hits", started);
    Ok(())
}
