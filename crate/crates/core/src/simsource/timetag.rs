use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{block_rng, invalid, DetectorModel, PhotonSampler, PulsedSource, SimError};
use crate::correlator::{validate_rois, ChannelRoi};
use crate::eventstream::{RawHit, StreamHeader};

const PULSE_BLOCK: u64 = 4096;
const DARK_STREAM_BASE: u64 = 1 << 63;

/// Where dark counts land.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DarkRegion {
    /// Anywhere on the sensor.
    Sensor,
    /// Only inside channel ROIs, which is all the correlator sees and keeps
    /// large simulated runs small.
    #[default]
    Rois,
}

/// One optical channel: where its light lands and what fraction of the
/// emitted photons it collects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimChannel {
    pub roi: ChannelRoi,
    pub collection: f64,
}

fn default_duration() -> f64 {
    crate::correlator::DEFAULT_DURATION_S
}
fn default_spot() -> f64 {
    2.0
}
fn default_start() -> f64 {
    1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeTagSimConfig {
    pub source: PulsedSource,
    #[serde(default)]
    pub detector: DetectorModel,
    pub channels: Vec<SimChannel>,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    /// Spread of photon landing points around the ROI centre, truncated two
    /// pixels inside the ROI rim.
    #[serde(default = "default_spot")]
    pub spot_sigma_px: f64,
    #[serde(default)]
    pub dark_region: DarkRegion,
    /// Time of pulse 0; pulse k is emitted at `start_ps + k · period`.
    #[serde(default = "default_start")]
    pub start_ps: f64,
    #[serde(default)]
    pub seed: u64,
}

impl TimeTagSimConfig {
    pub fn new(source: PulsedSource, channels: Vec<SimChannel>, seed: u64) -> Self {
        Self {
            source,
            detector: DetectorModel::default(),
            channels,
            duration_s: default_duration(),
            spot_sigma_px: default_spot(),
            dark_region: DarkRegion::default(),
            start_ps: default_start(),
            seed,
        }
    }

    pub fn rois(&self) -> Vec<ChannelRoi> {
        self.channels.iter().map(|c| c.roi.clone()).collect()
    }

    pub fn pulse_count(&self) -> u64 {
        (self.duration_s * self.source.repetition_rate_hz).floor() as u64
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.source.validate()?;
        self.detector.validate(self.channels.len())?;
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return invalid("duration_s must be > 0");
        }
        if !(self.spot_sigma_px >= 0.0 && self.start_ps >= 0.0) {
            return invalid("spot_sigma_px and start_ps must be >= 0");
        }
        let rois = self.rois();
        validate_rois(&rois).map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
        for r in &rois {
            let inside = r.center_x - r.radius >= 0.0
                && r.center_y - r.radius >= 0.0
                && r.center_x + r.radius <= self.detector.width as f64 - 1.0
                && r.center_y + r.radius <= self.detector.height as f64 - 1.0;
            if !inside {
                return invalid(format!("ROI {} does not fit on the sensor", r.id));
            }
        }
        if self.channels.iter().any(|c| !(0.0..=1.0).contains(&c.collection)) {
            return invalid("collection efficiencies must lie in [0, 1]");
        }
        if self.channels.iter().map(|c| c.collection).sum::<f64>() > 1.0 + 1e-12 {
            return invalid("collection efficiencies sum to more than 1");
        }
        Ok(())
    }
}

/// What the simulator actually generated, for closure tests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub pulses: u64,
    pub emitted_photons: u64,
    /// Photons that reached and were detected in each channel.
    pub detected_photons: Vec<u64>,
    pub photon_hits: u64,
    pub dark_hits: u64,
}

impl SimTruth {
    fn absorb(&mut self, other: SimTruth) {
        self.pulses += other.pulses;
        self.emitted_photons += other.emitted_photons;
        for (a, b) in self.detected_photons.iter_mut().zip(other.detected_photons) {
            *a += b;
        }
        self.photon_hits += other.photon_hits;
        self.dark_hits += other.dark_hits;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeTagRun {
    pub header: StreamHeader,
    /// Canonically sorted.
    pub hits: Vec<RawHit>,
    pub truth: SimTruth,
}

struct Ctx<'a> {
    cfg: &'a TimeTagSimConfig,
    det: &'a DetectorModel,
    sampler: PhotonSampler,
    gain: Gamma<f64>,
    jitter: Option<Normal<f64>>,
    period: f64,
    /// Detection probability per channel (collection × QE).
    p_detect: Vec<f64>,
}

impl Ctx<'_> {
    fn tick(&self, t_ps: f64) -> u64 {
        (t_ps.max(0.0) / self.det.tick_ps as f64).floor() as u64
    }

    fn landing_point(&self, rng: &mut ChaCha8Rng, roi: &ChannelRoi) -> (f64, f64) {
        let s = self.cfg.spot_sigma_px;
        let limit = (roi.radius - 2.0).max(0.0);
        if s == 0.0 {
            return (roi.center_x, roi.center_y);
        }
        let n = Normal::new(0.0, s).expect("sigma > 0");
        loop {
            let (dx, dy): (f64, f64) = (n.sample(rng), n.sample(rng));
            if dx * dx + dy * dy <= limit * limit {
                return (roi.center_x + dx, roi.center_y + dy);
            }
        }
    }

    /// Writes the flash of one photon landing at (px, py) at `t_ps`.
    fn flash(&self, rng: &mut ChaCha8Rng, px: f64, py: f64, t_ps: f64, out: &mut Vec<RawHit>) -> u64 {
        let det = self.det;
        let gain = self.gain.sample(rng);
        let (cx, cy) = (px.round() as i64, py.round() as i64);
        let two_s2 = 2.0 * det.psf_sigma_px * det.psf_sigma_px;
        let mut written = 0;
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let (x, y) = (cx + dx, cy + dy);
                if x < 0 || y < 0 || x >= det.width as i64 || y >= det.height as i64 {
                    continue;
                }
                let d2 = (x as f64 - px).powi(2) + (y as f64 - py).powi(2);
                let w = if two_s2 > 0.0 { (-d2 / two_s2).exp() } else { (d2 == 0.0) as u8 as f64 };
                let mut tot = (gain * w).round().min(det.tot_max as f64) as u16;
                if dx == 0 && dy == 0 {
                    tot = tot.max(det.tot_threshold);
                } else if tot < det.tot_threshold {
                    continue;
                }
                out.push(RawHit::new(x as u16, y as u16, self.tick(t_ps + det.walk_ps(tot)), tot));
                written += 1;
            }
        }
        written
    }

    fn pulse_block(&self, block: u64, pulses: u64) -> (Vec<RawHit>, SimTruth) {
        let mut rng = block_rng(self.cfg.seed, block);
        let mut hits = Vec::new();
        let channels = self.cfg.channels.len();
        let mut truth = SimTruth { detected_photons: vec![0; channels], ..Default::default() };
        let first = block * PULSE_BLOCK;
        let last = (first + PULSE_BLOCK).min(pulses);
        let mut split = vec![0u64; channels];
        for k in first..last {
            truth.pulses += 1;
            let n = self.sampler.sample(&mut rng);
            truth.emitted_photons += n;
            // Multinomial split over channels by sequential binomials; the
            // remainder is never detected.
            let mut left = n;
            let mut mass = 1.0;
            for (c, slot) in split.iter_mut().enumerate() {
                let p = self.p_detect[c];
                *slot = if left == 0 || p <= 0.0 {
                    0
                } else if p >= mass {
                    left
                } else {
                    Binomial::new(left, p / mass).expect("valid").sample(&mut rng)
                };
                left -= *slot;
                mass -= p;
            }
            let t_pulse = self.cfg.start_ps + k as f64 * self.period;
            for (c, &m) in split.iter().enumerate() {
                truth.detected_photons[c] += m;
                for _ in 0..m {
                    let mut t = t_pulse + rng.random::<f64>() * self.cfg.source.pulse_width_ps;
                    if let Some(j) = &self.jitter {
                        t += j.sample(&mut rng);
                    }
                    let (px, py) = self.landing_point(&mut rng, &self.cfg.channels[c].roi);
                    truth.photon_hits += self.flash(&mut rng, px, py, t, &mut hits);
                }
            }
        }
        (hits, truth)
    }

    fn dark_slab(&self, slab: u64, span_ps: f64, end_ps: f64, pixels: &[(u16, u16)]) -> (Vec<RawHit>, u64) {
        let t0 = slab as f64 * span_ps;
        let t1 = (t0 + span_ps).min(end_ps);
        let expected = self.det.dark_rate * pixels.len() as f64 * (t1 - t0) * 1e-12;
        if expected <= 0.0 {
            return (Vec::new(), 0);
        }
        let mut rng = block_rng(self.cfg.seed, DARK_STREAM_BASE + slab);
        let n = Poisson::new(expected).expect("positive").sample(&mut rng) as u64;
        let mut hits = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let (x, y) = pixels[rng.random_range(0..pixels.len())];
            let t = t0 + rng.random::<f64>() * (t1 - t0);
            let tot = (self.gain.sample(&mut rng).round() as u64)
                .clamp(self.det.tot_threshold as u64, self.det.tot_max as u64) as u16;
            hits.push(RawHit::new(x, y, self.tick(t + self.det.walk_ps(tot)), tot));
        }
        (hits, n)
    }
}

fn map_blocks<T: Send>(n: u64, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    if rayon::current_num_threads() > 1 {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// Generates a pulsed run as seen by a time-tagging camera.
///
/// Each pulse draws a photon number from the source model and splits it
/// multinomially over the channels with probability collection × QE. A
/// detected photon lands near its ROI centre and fires a 3×3 flash with
/// Gaussian amplitude profile and Gamma-distributed gain; every pixel's
/// ToA carries the photon's emission time (uniform within the pulse),
/// Gaussian timing jitter, and a ToT-dependent walk. Dark counts are
/// single-pixel hits uniform in time over the run.
pub fn simulate_timetag_run(cfg: &TimeTagSimConfig) -> Result<TimeTagRun, SimError> {
    cfg.validate()?;
    let det = &cfg.detector;
    let sigma = det.jitter_sigma_ps();
    let ctx = Ctx {
        cfg,
        det,
        sampler: PhotonSampler::new(&cfg.source.model)?,
        gain: Gamma::new(det.gain_shape, det.gain_mean / det.gain_shape).expect("validated"),
        jitter: (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma > 0")),
        period: cfg.source.period_ps(),
        p_detect: (0..cfg.channels.len()).map(|c| cfg.channels[c].collection * det.qe(c)).collect(),
    };

    let pulses = cfg.pulse_count();
    let blocks = pulses.div_ceil(PULSE_BLOCK);
    let photon_parts = map_blocks(blocks, |b| ctx.pulse_block(b, pulses));

    let dark_pixels: Vec<(u16, u16)> = match cfg.dark_region {
        DarkRegion::Sensor => (0..det.height).flat_map(|y| (0..det.width).map(move |x| (x, y))).collect(),
        DarkRegion::Rois => {
            cfg.channels.iter().flat_map(|c| c.roi.pixels()).map(|(x, y)| (x as u16, y as u16)).collect()
        }
    };
    let end_ps = cfg.duration_s * 1e12;
    let span_ps = PULSE_BLOCK as f64 * ctx.period;
    let slabs = (end_ps / span_ps).ceil() as u64;
    let dark_parts = if dark_pixels.is_empty() {
        Vec::new()
    } else {
        map_blocks(slabs, |s| ctx.dark_slab(s, span_ps, end_ps, &dark_pixels))
    };

    let mut truth = SimTruth { detected_photons: vec![0; cfg.channels.len()], ..Default::default() };
    let total: usize =
        photon_parts.iter().map(|p| p.0.len()).sum::<usize>() + dark_parts.iter().map(|p| p.0.len()).sum::<usize>();
    let mut hits = Vec::with_capacity(total);
    for (h, t) in photon_parts {
        hits.extend(h);
        truth.absorb(t);
    }
    for (h, n) in dark_parts {
        hits.extend(h);
        truth.dark_hits += n;
    }
    // Equal keys mean identical hits, so an unstable sort is deterministic.
    if rayon::current_num_threads() > 1 {
        hits.par_sort_unstable_by_key(RawHit::canonical_key);
    } else {
        hits.sort_unstable_by_key(RawHit::canonical_key);
    }
    let header = StreamHeader::new(det.tick_ps, det.width, det.height, hits.len() as u64);
    Ok(TimeTagRun { header, hits, truth })
}
