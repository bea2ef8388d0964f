//! Monte Carlo photon sources with known statistics and a detector chain
//! that turns them into time-tag streams or photon-number frame stacks.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`). A run's
//! 64-bit seed is expanded with `seed_from_u64`, and each block of work
//! (a run of pulses, a slab of dark counts, a run of frames) draws from its
//! own ChaCha stream selected with `set_stream`. Blocks therefore do not
//! depend on each other or on the thread count, and the same seed and
//! configuration always give the same bytes.

mod frames;
mod timetag;

pub use frames::{simulate_frames, FrameSimConfig, FrameSpot};
pub use timetag::{simulate_timetag_run, DarkRegion, SimChannel, SimTruth, TimeTagRun, TimeTagSimConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma, Geometric, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SimError> {
    Err(SimError::ConfigInvalid(msg.into()))
}

/// Photon-number statistics of one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SourceModel {
    Coherent {
        mean: f64,
    },
    ThermalSingleMode {
        mean: f64,
    },
    /// `modes` may be fractional; the count is drawn as Poisson with a
    /// Gamma-distributed intensity, which for integer `modes` equals a sum
    /// of that many single-mode draws.
    ThermalMultimode {
        mean: f64,
        modes: f64,
    },
    /// `n` photons per pulse, each kept with probability `eta`.
    FockAttenuated {
        n: u64,
        eta: f64,
    },
    /// Sub-Poissonian light with the given mean and Mandel Q (−1 < Q < 0).
    SbslLike {
        mean: f64,
        q: f64,
    },
}

/// Parameters of the thinned-Fock stand-in for sub-Poissonian light: the
/// emitted number is `floor` or `floor + 1` (the latter with probability
/// `frac`), and each photon survives with probability `eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbslParams {
    pub floor: u64,
    pub frac: f64,
    pub eta: f64,
}

/// Solves η(1 − f(1−f)/N̄) = −Q with N̄ = mean/η and f the fractional part
/// of N̄, so that the thinned two-point mixture hits both targets.
pub fn sbsl_params(mean: f64, q: f64) -> Result<SbslParams, SimError> {
    if !(mean > 0.0) || !(q > -1.0 && q < 0.0) {
        return invalid("sbsl_like needs mean > 0 and -1 < q < 0");
    }
    let mut eta = -q;
    for _ in 0..200 {
        let nbar = mean / eta;
        if !(eta <= 1.0 && nbar >= 1.0) {
            return invalid(format!("sbsl_like cannot reach mean {mean} with q {q}"));
        }
        let f = nbar - nbar.floor();
        let next = -q / (1.0 - f * (1.0 - f) / nbar);
        if (next - eta).abs() < 1e-15 {
            eta = next;
            break;
        }
        eta = next;
    }
    let nbar = mean / eta;
    if !(eta <= 1.0 && nbar >= 1.0) {
        return invalid(format!("sbsl_like cannot reach mean {mean} with q {q}"));
    }
    Ok(SbslParams { floor: nbar.floor() as u64, frac: nbar - nbar.floor(), eta })
}

impl SourceModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = match *self {
            SourceModel::Coherent { mean } | SourceModel::ThermalSingleMode { mean } => mean > 0.0 && mean.is_finite(),
            SourceModel::ThermalMultimode { mean, modes } => {
                mean > 0.0 && mean.is_finite() && modes >= 1.0 && modes.is_finite()
            }
            SourceModel::FockAttenuated { n, eta } => n >= 1 && eta > 0.0 && eta <= 1.0,
            SourceModel::SbslLike { mean, q } => return sbsl_params(mean, q).map(|_| ()),
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("source parameters out of range: {self:?}"))
        }
    }

    /// Exact (mean, variance) of the per-pulse photon number.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            SourceModel::Coherent { mean } => (mean, mean),
            SourceModel::ThermalSingleMode { mean } => (mean, mean + mean * mean),
            SourceModel::ThermalMultimode { mean, modes } => (mean, mean + mean * mean / modes),
            SourceModel::FockAttenuated { n, eta } => (n as f64 * eta, n as f64 * eta * (1.0 - eta)),
            SourceModel::SbslLike { mean, q } => (mean, mean * (1.0 + q)),
        }
    }
}

/// Expected g² of the per-pulse photon number, `1 + (var − mean)/mean²`.
pub fn analytic_g2(model: &SourceModel) -> f64 {
    match *model {
        SourceModel::Coherent { .. } => 1.0,
        SourceModel::ThermalSingleMode { .. } => 2.0,
        SourceModel::ThermalMultimode { modes, .. } => 1.0 + 1.0 / modes,
        SourceModel::FockAttenuated { n, .. } => 1.0 - 1.0 / n as f64,
        SourceModel::SbslLike { mean, q } => 1.0 + q / mean,
    }
}

/// A validated model with its distributions built once.
#[derive(Debug, Clone)]
pub struct PhotonSampler {
    inner: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Poisson(Poisson<f64>),
    Geometric(Geometric),
    GammaPoisson(Gamma<f64>),
    Binomial(Binomial),
    Sbsl(SbslParams),
}

impl PhotonSampler {
    pub fn new(model: &SourceModel) -> Result<Self, SimError> {
        model.validate()?;
        let inner = match *model {
            SourceModel::Coherent { mean } => SamplerKind::Poisson(Poisson::new(mean).expect("validated")),
            SourceModel::ThermalSingleMode { mean } => {
                SamplerKind::Geometric(Geometric::new(1.0 / (1.0 + mean)).expect("validated"))
            }
            SourceModel::ThermalMultimode { mean, modes } => {
                SamplerKind::GammaPoisson(Gamma::new(modes, mean / modes).expect("validated"))
            }
            SourceModel::FockAttenuated { n, eta } => SamplerKind::Binomial(Binomial::new(n, eta).expect("validated")),
            SourceModel::SbslLike { mean, q } => SamplerKind::Sbsl(sbsl_params(mean, q)?),
        };
        Ok(Self { inner })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match &self.inner {
            SamplerKind::Poisson(d) => d.sample(rng) as u64,
            SamplerKind::Geometric(d) => d.sample(rng),
            SamplerKind::GammaPoisson(g) => {
                let lambda = g.sample(rng);
                if lambda > 0.0 {
                    Poisson::new(lambda).expect("positive rate").sample(rng) as u64
                } else {
                    0
                }
            }
            SamplerKind::Binomial(d) => d.sample(rng),
            SamplerKind::Sbsl(p) => {
                let n = p.floor + rng.random_bool(p.frac) as u64;
                Binomial::new(n, p.eta).expect("valid").sample(rng)
            }
        }
    }
}

/// One photon-number draw. Builds the distribution on each call; use
/// [`PhotonSampler`] in loops.
pub fn sample_pulse_photon_count<R: Rng + ?Sized>(model: &SourceModel, rng: &mut R) -> Result<u64, SimError> {
    Ok(PhotonSampler::new(model)?.sample(rng))
}

/// Generator for block `stream` of a run seeded with `seed`.
pub fn block_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn default_pulse_width_ps() -> f64 {
    200.0
}

fn default_rate() -> f64 {
    crate::correlator::DEFAULT_REPETITION_RATE_HZ
}

/// A pulsed source: photon statistics plus timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulsedSource {
    pub model: SourceModel,
    /// Emission times are uniform within the pulse.
    #[serde(default = "default_pulse_width_ps")]
    pub pulse_width_ps: f64,
    #[serde(default = "default_rate")]
    pub repetition_rate_hz: f64,
}

impl PulsedSource {
    pub fn new(model: SourceModel) -> Self {
        Self { model, pulse_width_ps: default_pulse_width_ps(), repetition_rate_hz: default_rate() }
    }

    pub fn period_ps(&self) -> f64 {
        1e12 / self.repetition_rate_hz
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.model.validate()?;
        if !(self.repetition_rate_hz > 0.0 && self.repetition_rate_hz.is_finite()) {
            return invalid("repetition_rate_hz must be > 0");
        }
        if !(self.pulse_width_ps >= 0.0 && self.pulse_width_ps < self.period_ps()) {
            return invalid("pulse_width_ps must lie in [0, period)");
        }
        Ok(())
    }
}

fn default_width() -> u16 {
    256
}
fn default_qe() -> Vec<f64> {
    vec![0.05]
}
fn default_dark_rate() -> f64 {
    crate::correlator::DEFAULT_BACKGROUND_RATE
}
fn default_jitter() -> f64 {
    7000.0
}
fn default_psf() -> f64 {
    0.6
}
fn default_gain() -> f64 {
    150.0
}
fn default_gain_shape() -> f64 {
    4.0
}
fn default_tot_threshold() -> u16 {
    5
}
fn default_tot_max() -> u16 {
    1023
}
fn default_walk_a() -> f64 {
    1.5e6
}
fn default_walk_c() -> f64 {
    20.0
}
fn default_tick() -> u32 {
    crate::eventstream::DEFAULT_TICK_PS
}

/// Imaging detector: efficiency, noise, flash shape and timing response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    #[serde(default = "default_width")]
    pub width: u16,
    #[serde(default = "default_width")]
    pub height: u16,
    /// Per channel; a single entry applies to every channel.
    #[serde(default = "default_qe")]
    pub quantum_efficiency: Vec<f64>,
    /// Counts per second per pixel.
    #[serde(default = "default_dark_rate")]
    pub dark_rate: f64,
    #[serde(default = "default_jitter")]
    pub jitter_fwhm_ps: f64,
    /// Width of the flash a single photon leaves on the sensor.
    #[serde(default = "default_psf")]
    pub psf_sigma_px: f64,
    /// Mean flash amplitude in ToT units; per-photon gain is Gamma
    /// distributed with shape `gain_shape`.
    #[serde(default = "default_gain")]
    pub gain_mean: f64,
    #[serde(default = "default_gain_shape")]
    pub gain_shape: f64,
    /// Pixels below this ToT do not fire.
    #[serde(default = "default_tot_threshold")]
    pub tot_threshold: u16,
    #[serde(default = "default_tot_max")]
    pub tot_max: u16,
    /// Injected time-walk `walk_a_ps / (tot + walk_c)`.
    #[serde(default = "default_walk_a")]
    pub walk_a_ps: f64,
    #[serde(default = "default_walk_c")]
    pub walk_c: f64,
    #[serde(default = "default_tick")]
    pub tick_ps: u32,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            width: default_width(),
            height: default_width(),
            quantum_efficiency: default_qe(),
            dark_rate: default_dark_rate(),
            jitter_fwhm_ps: default_jitter(),
            psf_sigma_px: default_psf(),
            gain_mean: default_gain(),
            gain_shape: default_gain_shape(),
            tot_threshold: default_tot_threshold(),
            tot_max: default_tot_max(),
            walk_a_ps: default_walk_a(),
            walk_c: default_walk_c(),
            tick_ps: default_tick(),
        }
    }
}

impl DetectorModel {
    pub fn qe(&self, channel: usize) -> f64 {
        match self.quantum_efficiency.len() {
            1 => self.quantum_efficiency[0],
            _ => self.quantum_efficiency[channel],
        }
    }

    pub fn walk_ps(&self, tot: u16) -> f64 {
        self.walk_a_ps / (tot as f64 + self.walk_c)
    }

    pub fn jitter_sigma_ps(&self) -> f64 {
        self.jitter_fwhm_ps / (8.0 * std::f64::consts::LN_2).sqrt()
    }

    pub fn validate(&self, channels: usize) -> Result<(), SimError> {
        if self.width == 0 || self.height == 0 {
            return invalid("sensor dimensions must be >= 1");
        }
        if self.quantum_efficiency.is_empty()
            || (self.quantum_efficiency.len() != 1 && self.quantum_efficiency.len() != channels)
        {
            return invalid("quantum_efficiency needs one entry or one per channel");
        }
        if self.quantum_efficiency.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return invalid("quantum_efficiency must lie in [0, 1]");
        }
        let nonneg = [self.dark_rate, self.jitter_fwhm_ps, self.psf_sigma_px, self.walk_a_ps, self.walk_c];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return invalid("rates, widths and walk coefficients must be finite and >= 0");
        }
        if !(self.gain_mean > 0.0 && self.gain_shape > 0.0) {
            return invalid("gain_mean and gain_shape must be > 0");
        }
        if self.tot_threshold == 0 || self.tot_max < self.tot_threshold {
            return invalid("need 1 <= tot_threshold <= tot_max");
        }
        if self.tick_ps == 0 {
            return invalid("tick_ps must be >= 1");
        }
        Ok(())
    }
}
