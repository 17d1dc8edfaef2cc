//! Sequential robust estimation of the typical distribution.
//!
//! Quantiles are tracked with a Robbins–Monro style stochastic
//! approximation whose step size adapts to a running density estimate at
//! the current quantile. Three such trackers (lower quartile, median, upper
//! quartile) give a location/scale pair that is insensitive to anomalies.

use log::warn;

use crate::error::{Error, Result};

/// `Φ⁻¹(0.75)`, the upper quartile of the standard normal.
pub const NORMAL_Q75: f64 = 0.674_489_750_196_081_7;

/// Exponent of the step-size clamp `d₀ (i+1)^a`.
const CLAMP_EXPONENT: f64 = 0.25;

/// Empirical `alpha`-quantile of `sorted` with linear interpolation between
/// order statistics (R type 7).
///
/// `sorted` must be non-empty and sorted ascending.
pub fn empirical_quantile(sorted: &[f64], alpha: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * alpha;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Stochastic-approximation state for a single quantile.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileState {
    /// Target level in `(0, 1)`.
    pub alpha: f64,
    /// Current quantile estimate.
    pub xi: f64,
    /// Current step-size scale.
    pub d: f64,
    /// Initial scale, `1 / IQR` of the burn-in.
    pub d0: f64,
    /// Running density estimate at `xi`.
    pub f_hat: f64,
    /// Number of updates applied since initialization.
    pub i: u64,
}

impl QuantileState {
    /// Seeds the tracker from a burn-in sample.
    pub fn initial(burn_in: &[f64], alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Config(format!(
                "quantile level {alpha} outside (0, 1)"
            )));
        }
        if burn_in.len() < 4 {
            return Err(Error::TooFewValues {
                needed: 4,
                got: burn_in.len(),
            });
        }
        let sorted = sorted_copy(burn_in);
        let m = sorted.len() as f64;
        let xi = empirical_quantile(&sorted, alpha);
        let iqr = empirical_quantile(&sorted, 0.75) - empirical_quantile(&sorted, 0.25);
        if !(iqr > 0.0) {
            return Err(Error::ConstantBurnIn);
        }
        let d0 = 1.0 / iqr;
        let harmonic_root: f64 = (1..=sorted.len()).map(|i| (i as f64).powf(-0.5)).sum();
        let c = d0 / m * harmonic_root;
        let near = sorted
            .iter()
            .filter(|&&x| (x - xi).abs() <= c)
            .count()
            .max(1);
        let f_hat = near as f64 / (2.0 * c * m);
        Ok(Self {
            alpha,
            xi,
            d: d0,
            d0,
            f_hat,
            i: 0,
        })
    }

    /// Applies one observation.
    pub fn update(&mut self, x: f64) {
        let n = (self.i + 1) as f64;
        let below = if x <= self.xi { 1.0 } else { 0.0 };
        self.xi -= self.d / n * (below - self.alpha);
        // The density kernel is evaluated at the updated estimate.
        let hit = if (self.xi - x).abs() <= 1.0 / n.sqrt() {
            1.0
        } else {
            0.0
        };
        self.f_hat = (self.i as f64 * self.f_hat + n.sqrt() / 2.0 * hit) / n;
        self.d = (1.0 / self.f_hat).min(self.d0 * n.powf(CLAMP_EXPONENT));
        self.i += 1;
    }

    /// Upper bound on `d` after `i` updates.
    pub fn clamp_bound(&self) -> f64 {
        self.d0 * (self.i.max(1) as f64).powf(CLAMP_EXPONENT)
    }
}

/// Robust estimate of the typical mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub mu_hat: f64,
    pub sigma_hat: f64,
    pub q25: QuantileState,
    pub q50: QuantileState,
    pub q75: QuantileState,
    /// Number of updates after which the quartile estimates were crossed
    /// and the previous scale was kept.
    pub crossed_updates: u64,
}

impl Baseline {
    pub fn from_burn_in(burn_in: &[f64]) -> Result<Self> {
        let q25 = QuantileState::initial(burn_in, 0.25)?;
        let q50 = QuantileState::initial(burn_in, 0.5)?;
        let q75 = QuantileState::initial(burn_in, 0.75)?;
        Self::from_states(q25, q50, q75)
    }

    /// Assembles a baseline from three quantile trackers.
    pub fn from_states(q25: QuantileState, q50: QuantileState, q75: QuantileState) -> Result<Self> {
        if !(q75.xi > q25.xi) {
            return Err(Error::ConstantBurnIn);
        }
        let sigma_hat = (q75.xi - q25.xi) / (2.0 * NORMAL_Q75);
        Ok(Self {
            mu_hat: q50.xi,
            sigma_hat,
            q25,
            q50,
            q75,
            crossed_updates: 0,
        })
    }

    /// Feeds `x` to all three trackers and refreshes the estimates.
    ///
    /// Returns `false` when the quartiles crossed and `sigma_hat` was held.
    pub fn update(&mut self, x: f64) -> bool {
        self.q25.update(x);
        self.q50.update(x);
        self.q75.update(x);
        self.mu_hat = self.q50.xi;
        self.refresh_scale()
    }

    fn refresh_scale(&mut self) -> bool {
        let spread = self.q75.xi - self.q25.xi;
        if spread > 0.0 {
            self.sigma_hat = spread / (2.0 * NORMAL_Q75);
            true
        } else {
            self.crossed_updates += 1;
            false
        }
    }

    #[inline]
    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.mu_hat) / self.sigma_hat
    }
}

/// Lag-1 autocorrelation estimate, strictly inside `(-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1Estimate {
    pub phi_hat: f64,
}

impl Ar1Estimate {
    pub fn new(phi_hat: f64) -> Result<Self> {
        if phi_hat.abs() < 1.0 {
            Ok(Self { phi_hat })
        } else {
            Err(Error::Config(format!(
                "autocorrelation {phi_hat} outside (-1, 1)"
            )))
        }
    }
}

/// Largest magnitude returned by [`estimate_ar1`].
pub const AR1_CLAMP: f64 = 0.99;

/// Robust lag-1 autocorrelation: the sample autocorrelation of the values
/// winsorized at their 2.5% and 97.5% quantiles, clamped to ±0.99.
pub fn estimate_ar1(values: &[f64]) -> Result<Ar1Estimate> {
    if values.len() < 30 {
        return Err(Error::TooFewValues {
            needed: 30,
            got: values.len(),
        });
    }
    let sorted = sorted_copy(values);
    let lo = empirical_quantile(&sorted, 0.025);
    let hi = empirical_quantile(&sorted, 0.975);
    let w: Vec<f64> = values.iter().map(|x| x.clamp(lo, hi)).collect();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let denom: f64 = w.iter().map(|x| (x - mean).powi(2)).sum();
    if !(hi > lo && denom > 0.0) {
        warn!("autocorrelation requested for a constant series; using 0");
        return Ok(Ar1Estimate { phi_hat: 0.0 });
    }
    let num: f64 = w.windows(2).map(|p| (p[0] - mean) * (p[1] - mean)).sum();
    Ok(Ar1Estimate {
        phi_hat: (num / denom).clamp(-AR1_CLAMP, AR1_CLAMP),
    })
}
