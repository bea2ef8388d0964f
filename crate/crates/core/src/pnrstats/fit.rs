//! Maximum-likelihood fits of photon-number models to a histogram, with a
//! Pearson chi-square goodness-of-fit over pooled bins.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::distributions::{ln_bose_einstein_pmf, ln_multimode_thermal_pmf, ln_poisson_pmf};
use super::{PhotonNumberHistogram, PnrError};

/// Upper end of the mode-count search.
pub const MODES_UPPER_BOUND: f64 = 1e6;
const MODES_TOLERANCE: f64 = 1e-6;
const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Poisson,
    BoseEinstein,
    MultimodeThermal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub model: ModelKind,
    pub mean: f64,
    /// Fitted mode count, multimode model only.
    pub modes: Option<f64>,
    pub log_likelihood: f64,
    pub chi_square: f64,
    pub dof: i64,
    /// `None` when pooling leaves no degrees of freedom.
    pub p_value: Option<f64>,
}

impl ModelFit {
    fn ln_pmf(&self, n: u64) -> f64 {
        ln_pmf(self.model, n, self.mean, self.modes.unwrap_or(1.0))
    }

    pub fn pmf(&self, n: u64) -> f64 {
        self.ln_pmf(n).exp()
    }
}

fn ln_pmf(model: ModelKind, n: u64, mean: f64, modes: f64) -> f64 {
    match model {
        ModelKind::Poisson => ln_poisson_pmf(n, mean),
        ModelKind::BoseEinstein => ln_bose_einstein_pmf(n, mean),
        ModelKind::MultimodeThermal => ln_multimode_thermal_pmf(n, mean, modes),
    }
}

fn log_likelihood(hist: &PhotonNumberHistogram, model: ModelKind, mean: f64, modes: f64) -> f64 {
    hist.counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(n, &c)| c as f64 * ln_pmf(model, n as u64, mean, modes))
        .sum()
}

/// Golden-section maximisation of the multimode likelihood in ln N_m.
fn best_modes(hist: &PhotonNumberHistogram, mean: f64) -> f64 {
    let ll = |ln_m: f64| log_likelihood(hist, ModelKind::MultimodeThermal, mean, ln_m.exp());
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, MODES_UPPER_BOUND.ln());
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (ll(c), ll(d));
    for _ in 0..400 {
        if b.exp() - a.exp() < MODES_TOLERANCE {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = ll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = ll(d);
        }
    }
    ((a + b) / 2.0).exp()
}

/// Observed and expected counts, pooled left to right until each bin
/// expects at least five samples. The model's tail beyond the last
/// observed n is folded into the final bin.
fn pooled_bins(hist: &PhotonNumberHistogram, fit: &ModelFit) -> Vec<(f64, f64)> {
    let total = hist.total_samples as f64;
    let mut raw: Vec<(f64, f64)> =
        hist.counts.iter().enumerate().map(|(n, &c)| (c as f64, total * fit.pmf(n as u64))).collect();
    let covered: f64 = raw.iter().map(|b| b.1).sum();
    if let Some(last) = raw.last_mut() {
        last.1 += (total - covered).max(0.0);
    }
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (o, e) in raw {
        acc.0 += o;
        acc.1 += e;
        if acc.1 >= MIN_EXPECTED {
            out.push(acc);
            acc = (0.0, 0.0);
        }
    }
    if acc.0 > 0.0 || acc.1 > 0.0 {
        match out.last_mut() {
            Some(last) => {
                last.0 += acc.0;
                last.1 += acc.1;
            }
            None => out.push(acc),
        }
    }
    out
}

/// Fits `model` by maximum likelihood. Poisson and Bose-Einstein means
/// are the sample mean in closed form; the multimode fit keeps that mean
/// and searches the mode count over [1, 10⁶].
pub fn fit_model(hist: &PhotonNumberHistogram, model: ModelKind) -> Result<ModelFit, PnrError> {
    if hist.total_samples == 0 {
        return Err(PnrError::EmptyHistogram);
    }
    let mean = hist.mean();
    let modes = match model {
        ModelKind::MultimodeThermal if mean > 0.0 => Some(best_modes(hist, mean)),
        ModelKind::MultimodeThermal => Some(1.0),
        _ => None,
    };
    let params = if modes.is_some() { 2 } else { 1 };
    let mut fit = ModelFit {
        model,
        mean,
        modes,
        log_likelihood: log_likelihood(hist, model, mean, modes.unwrap_or(1.0)),
        chi_square: 0.0,
        dof: 0,
        p_value: None,
    };
    let bins = pooled_bins(hist, &fit);
    fit.chi_square = bins.iter().filter(|b| b.1 > 0.0).map(|(o, e)| (o - e) * (o - e) / e).sum();
    fit.dof = bins.len() as i64 - 1 - params;
    if fit.dof >= 1 {
        let dist = ChiSquared::new(fit.dof as f64).expect("positive dof");
        fit.p_value = Some(dist.sf(fit.chi_square));
    }
    Ok(fit)
}
