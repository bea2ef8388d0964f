use serde::{Deserialize, Serialize};

use super::{check_magic, le_u16, le_u32, FormatError, FORMAT_VERSION, FRAME_MAGIC};

pub const FRAME_HEADER_LEN: usize = 22;

/// Highest photon number the PNR camera reports per pixel.
pub const PNR_COUNT_LIMIT: u16 = 200;

/// Per-frame, per-pixel photon counts from a photon-number-resolving camera.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameStack {
    pub width: u16,
    pub height: u16,
    pub frame_count: u32,
    pub exposure_us: f64,
    /// Frame-major, then row-major: `counts[(f * height + y) * width + x]`.
    pub counts: Vec<u16>,
}

impl FrameStack {
    pub fn zeros(width: u16, height: u16, frame_count: u32, exposure_us: f64) -> Self {
        let len = width as usize * height as usize * frame_count as usize;
        Self { width, height, frame_count, exposure_us, counts: vec![0; len] }
    }

    #[inline]
    pub fn pixels_per_frame(&self) -> usize {
        self.width as usize * self.height as usize
    }

    #[inline]
    pub fn index(&self, frame: usize, x: u16, y: u16) -> usize {
        (frame * self.height as usize + y as usize) * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, frame: usize, x: u16, y: u16) -> u16 {
        self.counts[self.index(frame, x, y)]
    }

    pub fn frame(&self, frame: usize) -> &[u16] {
        let n = self.pixels_per_frame();
        &self.counts[frame * n..(frame + 1) * n]
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        let expected = self.pixels_per_frame() * self.frame_count as usize;
        if self.counts.len() != expected {
            return Err(FormatError::ShapeMismatch { expected, actual: self.counts.len() });
        }
        if !(self.exposure_us.is_finite() && self.exposure_us > 0.0) {
            return Err(FormatError::InvalidHeader { offset: 14, reason: "exposure_us must be positive".into() });
        }
        if let Some(index) = self.counts.iter().position(|&c| c > PNR_COUNT_LIMIT) {
            return Err(FormatError::CountOverLimit { index, count: self.counts[index] });
        }
        Ok(())
    }
}

pub fn encoded_frames_len(width: u16, height: u16, frame_count: u32) -> usize {
    FRAME_HEADER_LEN + 2 * width as usize * height as usize * frame_count as usize
}

pub fn write_frames(stack: &FrameStack) -> Result<Vec<u8>, FormatError> {
    stack.validate()?;
    let mut out = Vec::with_capacity(encoded_frames_len(stack.width, stack.height, stack.frame_count));
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(FORMAT_VERSION);
    out.push(0);
    out.extend_from_slice(&stack.width.to_le_bytes());
    out.extend_from_slice(&stack.height.to_le_bytes());
    out.extend_from_slice(&stack.frame_count.to_le_bytes());
    out.extend_from_slice(&stack.exposure_us.to_le_bytes());
    for c in &stack.counts {
        out.extend_from_slice(&c.to_le_bytes());
    }
    Ok(out)
}

pub fn read_frames(bytes: &[u8]) -> Result<FrameStack, FormatError> {
    check_magic(bytes, FRAME_MAGIC)?;
    if bytes.len() >= 5 && bytes[4] > FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion { offset: 4, version: bytes[4] });
    }
    if bytes.len() < FRAME_HEADER_LEN {
        return Err(FormatError::TruncatedHeader { len: bytes.len(), needed: FRAME_HEADER_LEN });
    }
    if bytes[5] != 0 {
        return Err(FormatError::InvalidHeader { offset: 5, reason: "reserved byte must be zero".into() });
    }
    let width = le_u16(bytes, 6);
    let height = le_u16(bytes, 8);
    let frame_count = le_u32(bytes, 10);
    let exposure_us = f64::from_le_bytes(bytes[14..22].try_into().unwrap());
    if width == 0 || height == 0 {
        return Err(FormatError::InvalidHeader { offset: 6, reason: "frame dimensions must be >= 1".into() });
    }

    let n = width as usize * height as usize * frame_count as usize;
    let payload = &bytes[FRAME_HEADER_LEN..];
    if payload.len() < 2 * n {
        return Err(FormatError::TruncatedFrame { offset: FRAME_HEADER_LEN + payload.len(), expected: 2 * n });
    }
    if payload.len() > 2 * n {
        return Err(FormatError::TrailingBytes { offset: FRAME_HEADER_LEN + 2 * n, count: payload.len() - 2 * n });
    }
    let counts: Vec<u16> = payload.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
    let stack = FrameStack { width, height, frame_count, exposure_us, counts };
    stack.validate()?;
    Ok(stack)
}
