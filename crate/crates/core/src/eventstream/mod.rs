//! Binary interchange formats for raw time-tag streams (`.phst`) and
//! photon-number-resolving frame stacks (`.phfr`), plus a CSV importer for
//! small hand-made fixtures.
//!
//! All multi-byte integers are little-endian. Layouts are fixed, so two
//! writes of the same data are byte-identical.
//!
//! `.phst` layout (23-byte header followed by 14-byte records):
//!
//! | offset | size | field              |
//! |--------|------|--------------------|
//! | 0      | 4    | magic `PHST`       |
//! | 4      | 1    | version (1)        |
//! | 5      | 2    | reserved, zero     |
//! | 7      | 4    | tick_picoseconds   |
//! | 11     | 2    | sensor_width       |
//! | 13     | 2    | sensor_height      |
//! | 15     | 8    | record_count       |
//!
//! Record: `x: u16, y: u16, toa_ticks: u64, tot: u16`.
//!
//! `.phfr` layout (22-byte header followed by `u16` counts, frame-major,
//! then row-major within a frame):
//!
//! | offset | size | field                  |
//! |--------|------|------------------------|
//! | 0      | 4    | magic `PHFR`           |
//! | 4      | 1    | version (1)            |
//! | 5      | 1    | reserved, zero         |
//! | 6      | 2    | width                  |
//! | 8      | 2    | height                 |
//! | 10     | 4    | frame_count            |
//! | 14     | 8    | exposure_us (IEEE f64) |

mod csv_import;
mod frames;
mod stream;

pub use csv_import::import_csv;
pub use frames::{encoded_frames_len, read_frames, write_frames, FrameStack, FRAME_HEADER_LEN, PNR_COUNT_LIMIT};
pub use stream::{
    encoded_stream_len, read_header, read_stream, write_stream, RawHit, StreamHeader, DEFAULT_TICK_PS, RECORD_LEN,
    STREAM_HEADER_LEN,
};

use thiserror::Error;

pub const STREAM_MAGIC: [u8; 4] = *b"PHST";
pub const FRAME_MAGIC: [u8; 4] = *b"PHFR";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("bad magic at byte {offset}: expected {expected:?}, found {found:?}")]
    BadMagic { offset: usize, expected: [u8; 4], found: Vec<u8> },
    #[error("unsupported format version {version} at byte {offset} (max {FORMAT_VERSION})")]
    UnsupportedVersion { offset: usize, version: u8 },
    #[error("invalid header field at byte {offset}: {reason}")]
    InvalidHeader { offset: usize, reason: String },
    #[error("truncated header: {len} bytes available, {needed} required")]
    TruncatedHeader { len: usize, needed: usize },
    #[error("truncated record {index} at byte {offset}")]
    TruncatedRecord { offset: usize, index: u64 },
    #[error("{count} trailing bytes after declared payload at byte {offset}")]
    TrailingBytes { offset: usize, count: usize },
    #[error("hit {index} at ({x}, {y}) lies outside the {width}x{height} sensor")]
    HitOutOfBounds { index: usize, x: u16, y: u16, width: u16, height: u16 },
    #[error("truncated frame payload at byte {offset}: expected {expected} bytes")]
    TruncatedFrame { offset: usize, expected: usize },
    #[error("count {count} at index {index} exceeds the PNR limit of {PNR_COUNT_LIMIT}")]
    CountOverLimit { index: usize, count: u16 },
    #[error("frame stack holds {actual} counts, dimensions require {expected}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("malformed CSV row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
}

fn check_magic(bytes: &[u8], expected: [u8; 4]) -> Result<(), FormatError> {
    let found = &bytes[..bytes.len().min(4)];
    if found != expected {
        return Err(FormatError::BadMagic { offset: 0, expected, found: found.to_vec() });
    }
    Ok(())
}

#[inline]
fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

#[inline]
fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

#[inline]
fn le_u64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}
