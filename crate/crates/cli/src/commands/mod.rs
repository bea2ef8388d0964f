pub mod cluster;
pub mod correlate;
pub mod ingest;
pub mod pnr;
pub mod report;
pub mod simulate;

use std::path::Path;
use std::time::Instant;

use photostat_core::eventstream::{read_stream, RawHit, StreamHeader};

use crate::error::{data, read_input, Result};

/// Fields present on the command line win over the config file.
macro_rules! overlay {
    ($cli:expr, $file:expr, $ty:ident { $($f:ident),* $(,)? }) => {
        $ty { $($f: $cli.$f.or($file.$f)),* }
    };
}
pub(crate) use overlay;

pub fn load_stream(path: &Path) -> Result<(StreamHeader, Vec<RawHit>)> {
    let bytes = read_input(path)?;
    read_stream(&bytes).map_err(|e| data(format!("{}: {e}", path.display())))
}

/// One-line progress summary on stderr, including throughput.
pub fn summary(what: &str, items: usize, unit: &str, started: Instant) {
    let secs = started.elapsed().as_secs_f64();
    let rate = if secs > 0.0 { items as f64 / secs } else { f64::INFINITY };
    eprintln!("{what}: {items} {unit} in {secs:.3} s ({rate:.3e} {unit}/s)");
}
