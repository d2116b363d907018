//! Closed-form default fractions for the regimes where banks stay
//! independent, ensemble statistics, and checks of Monte Carlo output
//! against the closed forms.
//!
//! Without markets a bank defaults on a day when its shock falls below minus
//! its initial cash, so the daily default probability is `Φ(-1/σ)`. With a
//! frictionless bond market (η = 0) and no interbank lending the whole bond
//! holding is an extra buffer and the threshold becomes
//! `-(1 + p0·securities/initial_cash)`. Because every shock is reverted the
//! next day, days are independent and survival compounds:
//! `P(default by T) = 1 - (1 - q)^T`.
//!
//! [`Compounding::Printed`] keeps the alternative `1 - Φ(-k/σ)^T` form, which
//! raises the daily *default* probability to the power T and therefore tends
//! to 1 as σ → 0. It is there for comparison only.

use thiserror::Error;

use crate::balance::{Bank, BankId};
use crate::engine::SimulationResult;

/// Standard normal CDF, `Φ(x) = erfc(-x/√2)/2`, with `erfc` from `libm`
/// (musl's implementation, under one ulp over the whole real line). This
/// keeps full relative accuracy deep in the lower tail.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Compounding {
    /// `1 - (1 - Φ(-k/σ))^T`.
    #[default]
    Corrected,
    /// `1 - Φ(-k/σ)^T`.
    Printed,
}

/// Probability that one bank whose buffer is `threshold` multiples of its
/// initial cash defaults within `days` days.
pub fn default_probability(threshold: f64, sigma: f64, days: u32, form: Compounding) -> f64 {
    let daily = if sigma > 0.0 {
        normal_cdf(-threshold / sigma)
    } else {
        0.0
    };
    let t = f64::from(days);
    match form {
        Compounding::Corrected => -libm::expm1(t * libm::log1p(-daily)),
        Compounding::Printed => 1.0 - libm::pow(daily, t),
    }
}

/// Expected default fraction with both markets closed.
pub fn analytic_no_market_fraction(sigma: f64, days: u32, form: Compounding) -> f64 {
    default_probability(1.0, sigma, days, form)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("bank {0} has no initial cash; its default threshold is undefined")]
    ZeroInitialCash(BankId),
    #[error("no banks")]
    NoBanks,
}

/// Per-bank default probabilities with a frictionless bond market and no
/// interbank lending.
pub fn securities_default_probabilities(
    banks: &[Bank],
    price0: f64,
    sigma: f64,
    days: u32,
    form: Compounding,
) -> Result<Vec<f64>, AnalyticsError> {
    banks
        .iter()
        .map(|b| {
            if !(b.initial_cash > 0.0) {
                return Err(AnalyticsError::ZeroInitialCash(b.id));
            }
            let threshold = 1.0 + price0 * b.securities / b.initial_cash;
            Ok(default_probability(threshold, sigma, days, form))
        })
        .collect()
}

/// Expected default fraction with a frictionless bond market (η = 0) and no
/// interbank lending.
pub fn analytic_securities_fraction(
    banks: &[Bank],
    price0: f64,
    sigma: f64,
    days: u32,
    form: Compounding,
) -> Result<f64, AnalyticsError> {
    if banks.is_empty() {
        return Err(AnalyticsError::NoBanks);
    }
    let probs = securities_default_probabilities(banks, price0, sigma, days, form)?;
    Ok(probs.iter().sum::<f64>() / probs.len() as f64)
}

/// Defaulted banks at the horizon divided by all banks.
pub fn default_fraction(result: &SimulationResult) -> f64 {
    result.defaulted() as f64 / result.n_banks as f64
}

/// Ensemble summary of one curve point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub sigma: f64,
    pub config_id: String,
    pub mean_default_fraction: f64,
    pub std_error: f64,
    /// Realizations that completed.
    pub realizations: usize,
    /// Realizations that ended in a model error and were left out.
    pub failed: usize,
}

/// Mean and standard error (sample sd over √n) of per-realization default
/// fractions. Returns `None` when no realization completed.
pub fn aggregate_sweep(
    sigma: f64,
    config_id: &str,
    fractions: &[f64],
    failed: usize,
) -> Option<SweepPoint> {
    let n = fractions.len();
    if n == 0 {
        return None;
    }
    let mean = fractions.iter().sum::<f64>() / n as f64;
    let std_error = if n > 1 {
        let var = fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    Some(SweepPoint {
        sigma,
        config_id: config_id.to_string(),
        mean_default_fraction: mean,
        std_error,
        realizations: n,
        failed,
    })
}

/// Outcome of comparing a Monte Carlo point with a closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct Agreement {
    pub sigma: f64,
    pub observed: f64,
    pub expected: f64,
    /// Standard error used for the band: the larger of the sample SE and the
    /// SE the closed form predicts for independent banks.
    pub std_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Smallest band ever used, so that exact agreement (e.g. both sides 1)
/// is not failed by rounding.
const MIN_TOLERANCE: f64 = 1e-12;

/// Checks `|observed - expected| <= k * SE`. `bank_probabilities` are the
/// closed-form per-bank default probabilities; with independent banks the
/// per-realization fraction has variance `Σ p(1-p) / N²`.
pub fn check_agreement(point: &SweepPoint, expected: f64, bank_probabilities: &[f64], k: f64) -> Agreement {
    let n = bank_probabilities.len() as f64;
    let variance = bank_probabilities.iter().map(|p| p * (1.0 - p)).sum::<f64>() / (n * n);
    let predicted = (variance / point.realizations as f64).sqrt();
    let std_error = point.std_error.max(predicted);
    let tolerance = (k * std_error).max(MIN_TOLERANCE);
    let pass = (point.mean_default_fraction - expected).abs() <= tolerance;
    Agreement {
        sigma: point.sigma,
        observed: point.mean_default_fraction,
        expected,
        std_error,
        tolerance,
        pass,
    }
}
