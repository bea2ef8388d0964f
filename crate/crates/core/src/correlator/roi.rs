use serde::{Deserialize, Serialize};

use super::CorrelatorError;

pub const DEFAULT_ROI_RADIUS: f64 = 10.0;

/// Disc of pixels that collects one optical channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelRoi {
    pub id: String,
    pub center_x: f64,
    pub center_y: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_radius() -> f64 {
    DEFAULT_ROI_RADIUS
}

impl ChannelRoi {
    pub fn new(id: impl Into<String>, center_x: f64, center_y: f64, radius: f64) -> Self {
        Self { id: id.into(), center_x, center_y, radius }
    }

    /// Inclusive: a point exactly on the rim belongs to the ROI.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center_x;
        let dy = y - self.center_y;
        dx * dx + dy * dy <= self.radius * self.radius
    }

    /// Integer lattice points inside the disc.
    pub fn pixel_count(&self) -> u64 {
        let r = self.radius;
        let x0 = (self.center_x - r).floor() as i64;
        let x1 = (self.center_x + r).ceil() as i64;
        let y0 = (self.center_y - r).floor() as i64;
        let y1 = (self.center_y + r).ceil() as i64;
        let mut n = 0;
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.contains(x as f64, y as f64) {
                    n += 1;
                }
            }
        }
        n
    }

    pub fn pixels(&self) -> Vec<(i64, i64)> {
        let r = self.radius;
        let mut out = Vec::new();
        for y in (self.center_y - r).floor() as i64..=(self.center_y + r).ceil() as i64 {
            for x in (self.center_x - r).floor() as i64..=(self.center_x + r).ceil() as i64 {
                if self.contains(x as f64, y as f64) {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

/// Rejects non-positive radii, duplicate ids, and discs that touch or
/// overlap (a shared rim point would belong to both).
pub fn validate_rois(rois: &[ChannelRoi]) -> Result<(), CorrelatorError> {
    for roi in rois {
        if !(roi.radius.is_finite() && roi.radius > 0.0) {
            return Err(CorrelatorError::InvalidRoi(format!("{}: radius must be > 0", roi.id)));
        }
        if !(roi.center_x.is_finite() && roi.center_y.is_finite()) {
            return Err(CorrelatorError::InvalidRoi(format!("{}: centre must be finite", roi.id)));
        }
    }
    for (i, a) in rois.iter().enumerate() {
        for b in &rois[i + 1..] {
            if a.id == b.id {
                return Err(CorrelatorError::InvalidRoi(format!("duplicate ROI id {}", a.id)));
            }
            let d = (a.center_x - b.center_x).hypot(a.center_y - b.center_y);
            if d <= a.radius + b.radius {
                return Err(CorrelatorError::OverlappingRois(a.id.clone(), b.id.clone()));
            }
        }
    }
    Ok(())
}
