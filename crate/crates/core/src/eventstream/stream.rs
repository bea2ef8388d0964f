use serde::{Deserialize, Serialize};

use super::{check_magic, le_u16, le_u32, le_u64, FormatError, FORMAT_VERSION, STREAM_MAGIC};

pub const STREAM_HEADER_LEN: usize = 23;
pub const RECORD_LEN: usize = 14;

/// Tick length used for synthetic data when nothing else is configured.
pub const DEFAULT_TICK_PS: u32 = 1562;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamHeader {
    pub version: u8,
    /// Duration of one ToA tick.
    pub tick_picoseconds: u32,
    pub sensor_width: u16,
    pub sensor_height: u16,
    pub record_count: u64,
}

impl StreamHeader {
    pub fn new(tick_picoseconds: u32, sensor_width: u16, sensor_height: u16, record_count: u64) -> Self {
        Self { version: FORMAT_VERSION, tick_picoseconds, sensor_width, sensor_height, record_count }
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        if self.version > FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion { offset: 4, version: self.version });
        }
        if self.tick_picoseconds == 0 {
            return Err(FormatError::InvalidHeader { offset: 7, reason: "tick_picoseconds must be > 0".into() });
        }
        if self.sensor_width == 0 || self.sensor_height == 0 {
            return Err(FormatError::InvalidHeader { offset: 11, reason: "sensor dimensions must be >= 1".into() });
        }
        Ok(())
    }
}

/// One detector pixel firing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct RawHit {
    pub x: u16,
    pub y: u16,
    pub toa_ticks: u64,
    /// Time-over-threshold, in ticks.
    pub tot: u16,
}

impl RawHit {
    pub fn new(x: u16, y: u16, toa_ticks: u64, tot: u16) -> Self {
        Self { x, y, toa_ticks, tot }
    }

    /// Total order used wherever hits need a canonical arrangement.
    #[inline]
    pub fn canonical_key(&self) -> (u64, u16, u16, u16) {
        (self.toa_ticks, self.y, self.x, self.tot)
    }
}

pub fn encoded_stream_len(record_count: usize) -> usize {
    STREAM_HEADER_LEN + record_count * RECORD_LEN
}

/// Serializes a header and its hits. The header's `record_count` is taken
/// from `hits.len()`.
pub fn write_stream(header: &StreamHeader, hits: &[RawHit]) -> Result<Vec<u8>, FormatError> {
    let header = StreamHeader { record_count: hits.len() as u64, ..*header };
    header.validate()?;
    for (index, h) in hits.iter().enumerate() {
        if h.x >= header.sensor_width || h.y >= header.sensor_height {
            return Err(FormatError::HitOutOfBounds {
                index,
                x: h.x,
                y: h.y,
                width: header.sensor_width,
                height: header.sensor_height,
            });
        }
    }

    let mut out = Vec::with_capacity(encoded_stream_len(hits.len()));
    out.extend_from_slice(&STREAM_MAGIC);
    out.push(header.version);
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&header.tick_picoseconds.to_le_bytes());
    out.extend_from_slice(&header.sensor_width.to_le_bytes());
    out.extend_from_slice(&header.sensor_height.to_le_bytes());
    out.extend_from_slice(&header.record_count.to_le_bytes());
    for h in hits {
        out.extend_from_slice(&h.x.to_le_bytes());
        out.extend_from_slice(&h.y.to_le_bytes());
        out.extend_from_slice(&h.toa_ticks.to_le_bytes());
        out.extend_from_slice(&h.tot.to_le_bytes());
    }
    Ok(out)
}

pub fn read_header(bytes: &[u8]) -> Result<StreamHeader, FormatError> {
    check_magic(bytes, STREAM_MAGIC)?;
    if bytes.len() >= 5 && bytes[4] > FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion { offset: 4, version: bytes[4] });
    }
    if bytes.len() < STREAM_HEADER_LEN {
        return Err(FormatError::TruncatedHeader { len: bytes.len(), needed: STREAM_HEADER_LEN });
    }
    if le_u16(bytes, 5) != 0 {
        return Err(FormatError::InvalidHeader { offset: 5, reason: "reserved bytes must be zero".into() });
    }
    let header = StreamHeader {
        version: bytes[4],
        tick_picoseconds: le_u32(bytes, 7),
        sensor_width: le_u16(bytes, 11),
        sensor_height: le_u16(bytes, 13),
        record_count: le_u64(bytes, 15),
    };
    header.validate()?;
    Ok(header)
}

/// Parses a `.phst` buffer. Records come back in file order.
pub fn read_stream(bytes: &[u8]) -> Result<(StreamHeader, Vec<RawHit>), FormatError> {
    let header = read_header(bytes)?;
    let payload = &bytes[STREAM_HEADER_LEN..];
    let available = (payload.len() / RECORD_LEN) as u64;
    if available < header.record_count {
        return Err(FormatError::TruncatedRecord {
            offset: STREAM_HEADER_LEN + available as usize * RECORD_LEN,
            index: available,
        });
    }
    let declared = header.record_count as usize * RECORD_LEN;
    if payload.len() > declared {
        return Err(FormatError::TrailingBytes {
            offset: STREAM_HEADER_LEN + declared,
            count: payload.len() - declared,
        });
    }

    let (w, h) = (header.sensor_width, header.sensor_height);
    let mut hits = Vec::with_capacity(header.record_count as usize);
    for (index, rec) in payload.chunks_exact(RECORD_LEN).enumerate() {
        let hit = RawHit { x: le_u16(rec, 0), y: le_u16(rec, 2), toa_ticks: le_u64(rec, 4), tot: le_u16(rec, 12) };
        if hit.x >= w || hit.y >= h {
            return Err(FormatError::HitOutOfBounds { index, x: hit.x, y: hit.y, width: w, height: h });
        }
        hits.push(hit);
    }
    Ok((header, hits))
}
