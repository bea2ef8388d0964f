//! Photon-number distributions, evaluated in log space so that n up to a
//! few hundred stays finite.

use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::ln_gamma;

/// `mean^n e^(−mean) / n!`
pub fn poisson_pmf(n: u64, mean: f64) -> f64 {
    ln_poisson_pmf(n, mean).exp()
}

pub fn ln_poisson_pmf(n: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    n as f64 * mean.ln() - mean - ln_factorial(n)
}

/// Single-mode thermal light: `mean^n / (1 + mean)^(n+1)`.
pub fn bose_einstein_pmf(n: u64, mean: f64) -> f64 {
    ln_bose_einstein_pmf(n, mean).exp()
}

pub fn ln_bose_einstein_pmf(n: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    n as f64 * mean.ln() - (n as f64 + 1.0) * mean.ln_1p()
}

/// Thermal light spread over `modes` equally populated modes (negative
/// binomial). `modes = 1` is Bose-Einstein; large `modes` tends to Poisson.
pub fn multimode_thermal_pmf(n: u64, mean: f64, modes: f64) -> f64 {
    ln_multimode_thermal_pmf(n, mean, modes).exp()
}

pub fn ln_multimode_thermal_pmf(n: u64, mean: f64, modes: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let per_mode = mean / modes;
    let nf = n as f64;
    ln_gamma(nf + modes) - ln_gamma(modes) - ln_factorial(n) + nf * per_mode.ln() - (nf + modes) * per_mode.ln_1p()
}

/// `mean + mean² / modes`; `modes = ∞` gives the Poisson variance.
pub fn multimode_variance(mean: f64, modes: f64) -> f64 {
    if modes.is_infinite() {
        mean
    } else {
        mean + mean * mean / modes
    }
}

/// Mode count implied by a (mean, variance) pair, or `None` when no
/// multimode thermal state with `modes ≥ 1` has those moments (which
/// includes every sub-Poissonian pair).
pub fn multimode_modes_from_moments(mean: f64, variance: f64) -> Option<f64> {
    if !(mean > 0.0) || variance <= mean {
        return None;
    }
    let modes = mean * mean / (variance - mean);
    (modes >= 1.0 - 1e-12).then_some(modes)
}
