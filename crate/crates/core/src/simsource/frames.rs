use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{block_rng, invalid, DetectorModel, PhotonSampler, PulsedSource, SimError};
use crate::eventstream::{FrameStack, PNR_COUNT_LIMIT};

const FRAME_BLOCK: u64 = 256;

/// Intensity profile on the sensor: a Gaussian spot. `sigma_px = 0` puts
/// every photon in the pixel nearest the centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpot {
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub sigma_px: f64,
}

fn default_frames() -> u32 {
    10_000
}
fn default_exposure() -> f64 {
    172.8
}
fn default_phase() -> f64 {
    0.5
}

/// Photon-number camera run. Of the detector model only the sensor size,
/// the first QE entry and the dark rate apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSimConfig {
    pub source: PulsedSource,
    #[serde(default)]
    pub detector: DetectorModel,
    pub spot: FrameSpot,
    #[serde(default = "default_frames")]
    pub frame_count: u32,
    #[serde(default = "default_exposure")]
    pub exposure_us: f64,
    /// Pulse k fires at `(k + pulse_phase) · period`. Frames are back to
    /// back starting at 0, so with exposure equal to the period and phase
    /// strictly inside (0, 1) every frame sees exactly one pulse.
    #[serde(default = "default_phase")]
    pub pulse_phase: f64,
    #[serde(default)]
    pub seed: u64,
}

impl FrameSimConfig {
    pub fn new(source: PulsedSource, spot: FrameSpot, seed: u64) -> Self {
        Self {
            source,
            detector: DetectorModel::default(),
            spot,
            frame_count: default_frames(),
            exposure_us: default_exposure(),
            pulse_phase: default_phase(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.source.validate()?;
        self.detector.validate(1)?;
        if !(self.exposure_us > 0.0 && self.exposure_us.is_finite()) {
            return invalid("exposure_us must be > 0");
        }
        if !(0.0..1.0).contains(&self.pulse_phase) {
            return invalid("pulse_phase must lie in [0, 1)");
        }
        if !(self.spot.sigma_px >= 0.0) {
            return invalid("spot sigma must be >= 0");
        }
        Ok(())
    }

    /// Number of pulses falling inside frame `f`.
    pub fn pulses_in_frame(&self, f: u64) -> u64 {
        let r = self.exposure_us * 1e6 / self.source.period_ps();
        let first = (f as f64 * r - self.pulse_phase).ceil().max(0.0);
        let end = ((f + 1) as f64 * r - self.pulse_phase).ceil().max(0.0);
        (end - first) as u64
    }
}

/// Generates a stack of back-to-back exposures. Each frame integrates the
/// pulses that fall inside it; photons are thinned by the QE and spread
/// over the spot profile, dark counts are uniform over the sensor, and
/// pixel counts saturate at the format limit.
pub fn simulate_frames(cfg: &FrameSimConfig) -> Result<FrameStack, SimError> {
    cfg.validate()?;
    let det = &cfg.detector;
    let sampler = PhotonSampler::new(&cfg.source.model)?;
    let qe = det.qe(0);
    let (w, h) = (det.width as usize, det.height as usize);
    let spread = (cfg.spot.sigma_px > 0.0).then(|| Normal::new(0.0, cfg.spot.sigma_px).expect("sigma > 0"));
    let dark_mean = det.dark_rate * cfg.exposure_us * 1e-6 * (w * h) as f64;
    let dark = (dark_mean > 0.0).then(|| Poisson::new(dark_mean).expect("positive"));
    let frames = cfg.frame_count as u64;

    let block = |b: u64| -> Vec<u16> {
        let mut rng = block_rng(cfg.seed, b);
        let first = b * FRAME_BLOCK;
        let last = (first + FRAME_BLOCK).min(frames);
        let mut counts = vec![0u32; (last - first) as usize * w * h];
        for f in first..last {
            let frame = &mut counts[(f - first) as usize * w * h..][..w * h];
            for _ in 0..cfg.pulses_in_frame(f) {
                let n = sampler.sample(&mut rng);
                let kept = if qe >= 1.0 || n == 0 { n } else { Binomial::new(n, qe).expect("valid").sample(&mut rng) };
                for _ in 0..kept {
                    let (mut x, mut y) = (cfg.spot.cx, cfg.spot.cy);
                    if let Some(d) = &spread {
                        x += d.sample(&mut rng);
                        y += d.sample(&mut rng);
                    }
                    let (x, y) = (x.round(), y.round());
                    if x >= 0.0 && y >= 0.0 && (x as usize) < w && (y as usize) < h {
                        frame[y as usize * w + x as usize] += 1;
                    }
                }
            }
            if let Some(d) = &dark {
                for _ in 0..d.sample(&mut rng) as u64 {
                    frame[rng.random_range(0..w * h)] += 1;
                }
            }
        }
        counts.into_iter().map(|c| c.min(PNR_COUNT_LIMIT as u32) as u16).collect()
    };

    let blocks = frames.div_ceil(FRAME_BLOCK);
    let parts: Vec<Vec<u16>> = if rayon::current_num_threads() > 1 {
        (0..blocks).into_par_iter().map(block).collect()
    } else {
        (0..blocks).map(block).collect()
    };
    let mut stack = FrameStack::zeros(det.width, det.height, cfg.frame_count, cfg.exposure_us);
    stack.counts = parts.concat();
    Ok(stack)
}
