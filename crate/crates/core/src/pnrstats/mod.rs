//! Photon-number-resolving statistics: per-pixel photon-number histograms
//! from frame stacks, their moments and figures of merit (Mandel Q, the
//! variance-to-mean ratio E, and g² from moments), model fits and a
//! classical/nonclassical verdict.

mod distributions;
mod export;
mod fit;

pub use distributions::{
    bose_einstein_pmf, ln_bose_einstein_pmf, ln_multimode_thermal_pmf, ln_poisson_pmf, multimode_modes_from_moments,
    multimode_thermal_pmf, multimode_variance, poisson_pmf,
};
pub use export::{fig3_csv, fig3c_csv, histogram_csv, stats_table_csv, StatsRow};
pub use fit::{fit_model, ModelFit, ModelKind, MODES_UPPER_BOUND};

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventstream::FrameStack;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PnrError {
    #[error("histogram holds {0} samples, at least 2 are required")]
    TooFewSamples(u64),
    #[error("mean photon number is zero")]
    DegenerateDistribution,
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("region selects no pixels")]
    EmptyRegion,
    #[error("pixel ({0}, {1}) lies outside the frame")]
    PixelOutOfFrame(u16, u16),
    #[error("frame range {0:?} exceeds the stack's {1} frames")]
    FrameRangeOutOfBounds(Range<usize>, usize),
    #[error("no uncertainty available for classification")]
    MissingUncertainty,
}

/// Which pixels contribute samples to a histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Region {
    All,
    Pixel {
        x: u16,
        y: u16,
    },
    /// The pixel with the largest summed count over the frame range; ties
    /// go to the lowest (y, x).
    Brightest,
    Rect {
        x0: u16,
        y0: u16,
        width: u16,
        height: u16,
    },
    Disc {
        cx: f64,
        cy: f64,
        radius: f64,
    },
}

impl Region {
    pub fn resolve(&self, stack: &FrameStack, frames: &Range<usize>) -> Result<Vec<(u16, u16)>, PnrError> {
        let (w, h) = (stack.width, stack.height);
        let pixels: Vec<(u16, u16)> = match *self {
            Region::All => (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).collect(),
            Region::Pixel { x, y } => {
                if x >= w || y >= h {
                    return Err(PnrError::PixelOutOfFrame(x, y));
                }
                vec![(x, y)]
            }
            Region::Brightest => {
                let mut sums = vec![0u64; stack.pixels_per_frame()];
                for f in frames.clone() {
                    for (s, &c) in sums.iter_mut().zip(stack.frame(f)) {
                        *s += c as u64;
                    }
                }
                // max_by_key keeps the last maximum; iterate in reverse so
                // the lowest (y, x) wins ties.
                let best = (0..sums.len()).rev().max_by_key(|&i| sums[i]).ok_or(PnrError::EmptyRegion)?;
                vec![((best % w as usize) as u16, (best / w as usize) as u16)]
            }
            Region::Rect { x0, y0, width, height } => {
                let x1 = (x0 as u32 + width as u32).min(w as u32) as u16;
                let y1 = (y0 as u32 + height as u32).min(h as u32) as u16;
                (y0..y1).flat_map(|y| (x0..x1).map(move |x| (x, y))).collect()
            }
            Region::Disc { cx, cy, radius } => (0..h)
                .flat_map(|y| (0..w).map(move |x| (x, y)))
                .filter(|&(x, y)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= radius * radius)
                .collect(),
        };
        if pixels.is_empty() {
            return Err(PnrError::EmptyRegion);
        }
        Ok(pixels)
    }

    pub fn label(&self) -> String {
        match self {
            Region::All => "all".into(),
            Region::Pixel { x, y } => format!("pixel:{x},{y}"),
            Region::Brightest => "brightest".into(),
            Region::Rect { x0, y0, width, height } => format!("rect:{x0},{y0},{width},{height}"),
            Region::Disc { cx, cy, radius } => format!("disc:{cx},{cy},{radius}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonNumberHistogram {
    /// `counts[n]` samples recorded exactly `n` photons.
    pub counts: Vec<u64>,
    pub total_samples: u64,
    pub region: String,
    pub pixels: Vec<(u16, u16)>,
    pub frame_start: usize,
    pub frame_end: usize,
}

impl PhotonNumberHistogram {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total_samples = counts.iter().sum();
        Self { counts, total_samples, region: "external".into(), pixels: Vec::new(), frame_start: 0, frame_end: 0 }
    }

    pub fn from_samples(samples: &[u16]) -> Self {
        let mut counts = Vec::new();
        for &s in samples {
            let s = s as usize;
            if counts.len() <= s {
                counts.resize(s + 1, 0);
            }
            counts[s] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.total_samples as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Adds another histogram's counts. Associative and commutative.
    pub fn merge(&mut self, other: &PhotonNumberHistogram) {
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total_samples += other.total_samples;
    }

    /// (Σ n·c_n, Σ n²·c_n) in exact integer arithmetic.
    fn power_sums(&self) -> (u128, u128) {
        self.counts.iter().enumerate().fold((0, 0), |(s1, s2), (n, &c)| {
            let (n, c) = (n as u128, c as u128);
            (s1 + n * c, s2 + n * n * c)
        })
    }

    pub fn mean(&self) -> f64 {
        self.power_sums().0 as f64 / self.total_samples as f64
    }

    /// Population (divisor N) variance, `(N·Σn² − (Σn)²) / N²`, with the
    /// numerator formed exactly.
    pub fn variance(&self) -> f64 {
        let (s1, s2) = self.power_sums();
        let n = self.total_samples as u128;
        let num = n * s2 - s1 * s1;
        num as f64 / (n as f64 * n as f64)
    }
}

/// One sample per (pixel, frame) for every pixel of `region` and every
/// frame in `frames`.
pub fn build_histogram(
    stack: &FrameStack,
    region: &Region,
    frames: Range<usize>,
) -> Result<PhotonNumberHistogram, PnrError> {
    if frames.end > stack.frame_count as usize || frames.start > frames.end {
        return Err(PnrError::FrameRangeOutOfBounds(frames, stack.frame_count as usize));
    }
    let pixels = region.resolve(stack, &frames)?;
    let offsets: Vec<usize> = pixels.iter().map(|&(x, y)| stack.index(0, x, y)).collect();
    let partial = |fr: Range<usize>| {
        let mut counts = vec![0u64; crate::eventstream::PNR_COUNT_LIMIT as usize + 1];
        for f in fr {
            let frame = stack.frame(f);
            for &o in &offsets {
                counts[frame[o] as usize] += 1;
            }
        }
        counts
    };
    let chunk = 256;
    let starts: Vec<usize> = frames.clone().step_by(chunk).collect();
    let parts: Vec<Vec<u64>> = if rayon::current_num_threads() > 1 {
        starts.par_iter().map(|&s| partial(s..(s + chunk).min(frames.end))).collect()
    } else {
        starts.iter().map(|&s| partial(s..(s + chunk).min(frames.end))).collect()
    };
    let mut counts = vec![0u64; crate::eventstream::PNR_COUNT_LIMIT as usize + 1];
    for p in parts {
        for (a, b) in counts.iter_mut().zip(p) {
            *a += b;
        }
    }
    while counts.len() > 1 && *counts.last().unwrap() == 0 {
        counts.pop();
    }
    let total_samples = counts.iter().sum();
    Ok(PhotonNumberHistogram {
        counts,
        total_samples,
        region: region.label(),
        pixels,
        frame_start: frames.start,
        frame_end: frames.end,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotonNumberStats {
    pub mean: f64,
    pub variance: f64,
    pub stdev: f64,
    /// Mandel Q = variance/mean − 1.
    pub q: f64,
    /// variance/mean.
    pub e: f64,
    /// 1 + (variance − mean)/mean².
    pub g2: f64,
    pub g2_uncertainty: Option<f64>,
    pub q_uncertainty: Option<f64>,
    pub samples: u64,
}

impl PhotonNumberStats {
    /// Figures of merit from moments alone; no uncertainty attached.
    pub fn from_moments(mean: f64, variance: f64) -> Result<Self, PnrError> {
        if !(mean > 0.0) {
            return Err(PnrError::DegenerateDistribution);
        }
        let e = variance / mean;
        Ok(Self {
            mean,
            variance,
            stdev: variance.max(0.0).sqrt(),
            q: e - 1.0,
            e,
            g2: 1.0 + (variance - mean) / (mean * mean),
            g2_uncertainty: None,
            q_uncertainty: None,
            samples: 0,
        })
    }

    /// Attaches a g² uncertainty; the Q uncertainty follows as mean·σ_g2.
    pub fn with_g2_uncertainty(mut self, sigma: f64) -> Self {
        self.g2_uncertainty = Some(sigma);
        self.q_uncertainty = Some(self.mean * sigma);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub resamples: u32,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { resamples: 1000, seed: 0x005E_ED0F_B007 }
    }
}

/// Draws a multinomial resample of the histogram by sequential binomials.
fn resample(counts: &[u64], total: u64, rng: &mut ChaCha8Rng, out: &mut [u64]) {
    let mut left_n = total;
    let mut left_mass = total;
    for (o, &c) in out.iter_mut().zip(counts) {
        if left_n == 0 || c == 0 {
            *o = 0;
            left_mass -= c;
            continue;
        }
        let p = (c as f64 / left_mass as f64).min(1.0);
        let k = if p >= 1.0 { left_n } else { Binomial::new(left_n, p).expect("valid binomial").sample(rng) };
        *o = k;
        left_n -= k;
        left_mass -= c;
    }
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Sample moments (population variance) and the derived figures of merit,
/// with bootstrap uncertainties on g² and Q.
pub fn compute_stats(hist: &PhotonNumberHistogram, bootstrap: &BootstrapConfig) -> Result<PhotonNumberStats, PnrError> {
    if hist.total_samples < 2 {
        return Err(PnrError::TooFewSamples(hist.total_samples));
    }
    let mut stats = PhotonNumberStats::from_moments(hist.mean(), hist.variance())?;
    stats.samples = hist.total_samples;

    if bootstrap.resamples >= 2 {
        let mut rng = ChaCha8Rng::seed_from_u64(bootstrap.seed);
        let mut buf = vec![0u64; hist.counts.len()];
        let mut g2s = Vec::with_capacity(bootstrap.resamples as usize);
        let mut qs = Vec::with_capacity(bootstrap.resamples as usize);
        for _ in 0..bootstrap.resamples {
            resample(&hist.counts, hist.total_samples, &mut rng, &mut buf);
            let h = PhotonNumberHistogram::from_counts(buf.clone());
            if let Ok(s) = PhotonNumberStats::from_moments(h.mean(), h.variance()) {
                g2s.push(s.g2);
                qs.push(s.q);
            }
        }
        stats.g2_uncertainty = Some(std_dev(&g2s));
        stats.q_uncertainty = Some(std_dev(&qs));
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightClass {
    SubPoissonian,
    Poissonian,
    SuperPoissonian,
}

impl std::fmt::Display for LightClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LightClass::SubPoissonian => "sub_poissonian",
            LightClass::Poissonian => "poissonian",
            LightClass::SuperPoissonian => "super_poissonian",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: LightClass,
    /// Q / σ_Q.
    pub significance: f64,
}

/// Minimum |Q|/σ_Q for a non-Poissonian verdict.
pub const CLASSIFY_SIGMA: f64 = 3.0;

pub fn classify(stats: &PhotonNumberStats) -> Result<Classification, PnrError> {
    let sigma = stats.q_uncertainty.filter(|s| s.is_finite() && *s > 0.0).ok_or(PnrError::MissingUncertainty)?;
    let z = stats.q / sigma;
    let class = if z <= -CLASSIFY_SIGMA {
        LightClass::SubPoissonian
    } else if z >= CLASSIFY_SIGMA {
        LightClass::SuperPoissonian
    } else {
        LightClass::Poissonian
    };
    Ok(Classification { class, significance: z })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_frames_single_pixel() {
        let mut s = FrameStack::zeros(2, 2, 3, 172.8);
        for (f, v) in [0u16, 1, 2].into_iter().enumerate() {
            let i = s.index(f, 1, 0);
            s.counts[i] = v;
        }
        let h = build_histogram(&s, &Region::Pixel { x: 1, y: 0 }, 0..3).unwrap();
        assert_eq!(h.counts, vec![1, 1, 1]);
        assert_eq!(h.total_samples, 3);
        let b = build_histogram(&s, &Region::Brightest, 0..3).unwrap();
        assert_eq!(b.pixels, vec![(1, 0)]);
    }

    #[test]
    fn all_zero_stack() {
        let s = FrameStack::zeros(4, 4, 10, 1.0);
        let h = build_histogram(&s, &Region::All, 0..10).unwrap();
        assert_eq!(h.probabilities(), vec![1.0]);
        assert_eq!(h.total_samples, 160);
        assert_eq!(compute_stats(&h, &BootstrapConfig::default()), Err(PnrError::DegenerateDistribution));
    }

    #[test]
    fn region_and_range_errors() {
        let s = FrameStack::zeros(4, 4, 10, 1.0);
        assert!(matches!(build_histogram(&s, &Region::All, 0..11), Err(PnrError::FrameRangeOutOfBounds(..))));
        assert!(matches!(
            build_histogram(&s, &Region::Pixel { x: 4, y: 0 }, 0..1),
            Err(PnrError::PixelOutOfFrame(4, 0))
        ));
        let r = Region::Disc { cx: 1.0, cy: 1.0, radius: 1.0 };
        assert_eq!(build_histogram(&s, &r, 0..2).unwrap().total_samples, 10);
        let r = Region::Rect { x0: 2, y0: 2, width: 10, height: 1 };
        assert_eq!(build_histogram(&s, &r, 0..2).unwrap().total_samples, 4);
    }

    #[test]
    fn table_row_examples() {
        let s = PhotonNumberStats::from_moments(5.36, 3.49).unwrap();
        assert!((s.g2 - 0.93).abs() < 0.01 && (s.q + 0.35).abs() < 0.01);
        assert!((s.e - 0.65).abs() < 0.01 && (s.stdev - 1.87).abs() < 0.01);
        let s = PhotonNumberStats::from_moments(2.64, 0.95).unwrap();
        assert!((s.g2 - 0.76).abs() < 0.01 && (s.q + 0.64).abs() < 0.01);
        assert!((s.e - 0.36).abs() < 0.01 && (s.stdev - 0.98).abs() < 0.01);
    }

    #[test]
    fn delta_distribution() {
        for k in 1..8u16 {
            let h = PhotonNumberHistogram::from_samples(&[k; 50]);
            let s = compute_stats(&h, &BootstrapConfig::default()).unwrap();
            assert_eq!(s.variance, 0.0);
            assert_eq!(s.q, -1.0);
            assert!((s.g2 - (1.0 - 1.0 / k as f64)).abs() < 1e-15);
            assert!(s.g2_uncertainty.unwrap() < 1e-12);
        }
    }

    #[test]
    fn too_few_samples() {
        let h = PhotonNumberHistogram::from_samples(&[3]);
        assert_eq!(compute_stats(&h, &BootstrapConfig::default()), Err(PnrError::TooFewSamples(1)));
    }

    #[test]
    fn classification() {
        let s = PhotonNumberStats::from_moments(5.36, 3.49).unwrap().with_g2_uncertainty(0.01);
        assert_eq!(classify(&s).unwrap().class, LightClass::SubPoissonian);
        let s = PhotonNumberStats::from_moments(4.0, 4.1).unwrap().with_g2_uncertainty(0.01);
        assert_eq!(classify(&s).unwrap().class, LightClass::Poissonian);
        let s = PhotonNumberStats::from_moments(4.0, 8.0).unwrap().with_g2_uncertainty(0.01);
        assert_eq!(classify(&s).unwrap().class, LightClass::SuperPoissonian);
        assert_eq!(classify(&PhotonNumberStats::from_moments(4.0, 8.0).unwrap()), Err(PnrError::MissingUncertainty));
    }

    #[test]
    fn bootstrap_is_seeded() {
        let samples: Vec<u16> = (0..5000).map(|i| ((i * 7919) % 11) as u16).collect();
        let h = PhotonNumberHistogram::from_samples(&samples);
        let a = compute_stats(&h, &BootstrapConfig { resamples: 200, seed: 1 }).unwrap();
        let b = compute_stats(&h, &BootstrapConfig { resamples: 200, seed: 1 }).unwrap();
        assert_eq!(a, b);
        let u = a.g2_uncertainty.unwrap();
        assert!(u > 0.0 && u < 0.05, "{u}");
    }

    proptest! {
        #[test]
        fn moments_match_two_pass_and_identities_hold(samples in prop::collection::vec(0u16..=200, 2..3000)) {
            let h = PhotonNumberHistogram::from_samples(&samples);
            let n = samples.len() as f64;
            let mean = samples.iter().map(|&s| s as f64).sum::<f64>() / n;
            let var = samples.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / n;
            prop_assert!((h.mean() - mean).abs() <= 1e-12 * mean.max(1.0));
            prop_assert!((h.variance() - var).abs() <= 1e-12 * var.max(1.0));
            if let Ok(s) = compute_stats(&h, &BootstrapConfig { resamples: 0, seed: 0 }) {
                prop_assert!((s.q - s.mean * (s.g2 - 1.0)).abs() <= 1e-12);
                prop_assert!((s.q - (s.e - 1.0)).abs() <= 1e-12);
            }
        }

        #[test]
        fn merge_is_order_free(a in prop::collection::vec(0u16..30, 0..200), b in prop::collection::vec(0u16..30, 0..200)) {
            let (ha, hb) = (PhotonNumberHistogram::from_samples(&a), PhotonNumberHistogram::from_samples(&b));
            let mut ab = ha.clone();
            ab.merge(&hb);
            let mut ba = hb.clone();
            ba.merge(&ha);
            let all: Vec<u16> = a.iter().chain(&b).copied().collect();
            let whole = PhotonNumberHistogram::from_samples(&all);
            prop_assert_eq!(&ab.counts[..whole.counts.len()], &whole.counts[..]);
            prop_assert_eq!(ab.counts, ba.counts);
            prop_assert_eq!(ab.total_samples, whole.total_samples);
        }
    }
}
