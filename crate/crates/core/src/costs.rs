//! Penalised Gaussian costs for typical points, point anomalies and
//! collective segments, together with the penalty schemes that price each
//! kind of anomaly.
//!
//! All costs operate on standardized observations, so the typical
//! contribution of an observation is simply its square.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqstats::Ar1Estimate;

/// Default regularizer added to `x²` in the point-anomaly cost.
pub const DEFAULT_GAMMA: f64 = 1e-4;

/// Floor on the within-segment variance of a mean/variance segment.
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Substitute for `γ + x²` when both vanish.
pub const POINT_FLOOR: f64 = 1e-12;

/// Which parameters an anomaly is allowed to change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CostModel {
    /// Anomalies shift mean and variance; point anomalies are variance
    /// outliers regularized by `gamma`.
    MeanVariance { gamma: f64 },
    /// Anomalies shift the mean only; variance is known to be one.
    MeanOnly,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::MeanVariance {
            gamma: DEFAULT_GAMMA,
        }
    }
}

impl CostModel {
    pub fn mean_variance(gamma: f64) -> Result<Self> {
        if gamma >= 0.0 && gamma.is_finite() {
            Ok(CostModel::MeanVariance { gamma })
        } else {
            Err(Error::Config(format!(
                "gamma must be a finite non-negative number, got {gamma}"
            )))
        }
    }

    /// Shortest segment the model can price.
    pub fn min_segment_len(&self) -> usize {
        match self {
            CostModel::MeanVariance { .. } => 2,
            CostModel::MeanOnly => 1,
        }
    }

    /// True when the point cost of `x` needs [`POINT_FLOOR`].
    pub fn point_cost_is_guarded(&self, x: f64) -> bool {
        match *self {
            CostModel::MeanVariance { gamma } => !(gamma + x * x > 0.0),
            CostModel::MeanOnly => false,
        }
    }
}

/// How the collective penalty depends on segment length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyMode {
    /// `β_C(a) = 2 a/(a-1) (1 + λ + √(2λ))`, `β_O = 2λ`.
    LengthDependent,
    /// `β_C = β_O = 2λ`.
    Constant,
    /// `β_C = β_O = λ`: an anomaly is declared once its likelihood-ratio
    /// statistic exceeds `λ`, so that `log ARL ≈ λ/2` on Gaussian noise.
    Threshold,
}

/// Penalties indexed by a single parameter `lambda`, scaled by a
/// dependence inflation factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyScheme {
    pub lambda: f64,
    pub inflation: f64,
    pub mode: PenaltyMode,
    /// Replaces the point penalty when set, leaving `β_C` untouched.
    pub point_override: Option<f64>,
}

impl PenaltyScheme {
    pub fn new(lambda: f64, mode: PenaltyMode) -> Result<Self> {
        Self::inflated(lambda, 1.0, mode)
    }

    pub fn inflated(lambda: f64, inflation: f64, mode: PenaltyMode) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be finite and >= 0, got {lambda}"
            )));
        }
        if !(inflation > 0.0 && inflation.is_finite()) {
            return Err(Error::Config(format!(
                "inflation must be finite and > 0, got {inflation}"
            )));
        }
        Ok(Self {
            lambda,
            inflation,
            mode,
            point_override: None,
        })
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// Point-anomaly penalty `β_O`.
    pub fn beta_point(&self) -> f64 {
        if let Some(beta) = self.point_override {
            return beta;
        }
        match self.mode {
            PenaltyMode::LengthDependent | PenaltyMode::Constant => {
                self.inflation * 2.0 * self.lambda
            }
            PenaltyMode::Threshold => self.inflation * self.lambda,
        }
    }

    /// Collective-anomaly penalty `β_C(a)` for a segment of `a` points.
    pub fn beta_collective(&self, a: usize) -> Result<f64> {
        match self.mode {
            PenaltyMode::LengthDependent => {
                if a < 2 {
                    return Err(Error::PenaltyLength(a));
                }
                let a = a as f64;
                let lambda = self.lambda;
                Ok(self.inflation * 2.0 * a / (a - 1.0) * (1.0 + lambda + (2.0 * lambda).sqrt()))
            }
            PenaltyMode::Constant => Ok(self.inflation * 2.0 * self.lambda),
            PenaltyMode::Threshold => Ok(self.inflation * self.lambda),
        }
    }
}

/// Sufficient statistics of a run of standardized observations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SegmentSummary {
    pub len: usize,
    pub sum: f64,
    pub sumsq: f64,
}

impl SegmentSummary {
    pub fn from_values(values: &[f64]) -> Self {
        values.iter().fold(Self::default(), |acc, &x| acc.push(x))
    }

    pub fn push(self, x: f64) -> Self {
        Self {
            len: self.len + 1,
            sum: self.sum + x,
            sumsq: self.sumsq + x * x,
        }
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.len as f64
    }

    /// Maximum-likelihood variance `Σ(x - x̄)² / len`.
    pub fn variance(&self) -> f64 {
        let n = self.len as f64;
        ((self.sumsq - self.sum * self.sum / n) / n).max(0.0)
    }
}

impl std::ops::Add for SegmentSummary {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            len: self.len + rhs.len,
            sum: self.sum + rhs.sum,
            sumsq: self.sumsq + rhs.sumsq,
        }
    }
}

/// Cost of a standardized observation under the typical distribution.
#[inline]
pub fn typical_cost(x: f64) -> f64 {
    x * x
}

/// Cost of labelling `x` a point anomaly, penalty included.
#[inline]
pub fn point_cost(x: f64, model: CostModel, pen: &PenaltyScheme) -> f64 {
    point_cost_with(x, model, pen.beta_point())
}

#[inline]
pub(crate) fn point_cost_with(x: f64, model: CostModel, beta_point: f64) -> f64 {
    match model {
        CostModel::MeanVariance { gamma } => {
            let spread = gamma + x * x;
            let spread = if spread > 0.0 { spread } else { POINT_FLOOR };
            1.0 + spread.ln() + beta_point
        }
        CostModel::MeanOnly => beta_point,
    }
}

/// Cost of fitting a segment with its own parameters, penalty excluded.
pub fn segment_cost(s: &SegmentSummary, model: CostModel) -> Result<f64> {
    if s.len < model.min_segment_len() {
        return Err(Error::SegmentTooShort(s.len));
    }
    Ok(segment_cost_raw(s.len, s.sum, s.sumsq, model))
}

#[inline]
pub(crate) fn segment_cost_raw(len: usize, sum: f64, sumsq: f64, model: CostModel) -> f64 {
    let n = len as f64;
    let ss = sumsq - sum * sum / n;
    match model {
        CostModel::MeanVariance { .. } => n * ((ss / n).max(VARIANCE_FLOOR).ln() + 1.0),
        CostModel::MeanOnly => ss.max(0.0),
    }
}

/// `β_C(a)` under `pen`.
pub fn beta_collective(a: usize, pen: &PenaltyScheme) -> Result<f64> {
    pen.beta_collective(a)
}

/// Penalty multiplier `(1+φ)/(1-φ)` for AR(1) residuals, floored at one.
pub fn inflation_factor(phi: Ar1Estimate) -> f64 {
    inflation_factor_with(phi, false)
}

/// As [`inflation_factor`]; `allow_deflation` lets negative `φ` shrink the
/// penalties below their i.i.d. values.
pub fn inflation_factor_with(phi: Ar1Estimate, allow_deflation: bool) -> f64 {
    let k = (1.0 + phi.phi_hat) / (1.0 - phi.phi_hat);
    if allow_deflation {
        k
    } else {
        k.max(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn phi(v: f64) -> Ar1Estimate {
        Ar1Estimate::new(v).unwrap()
    }

    #[test]
    fn typical_cost_examples() {
        assert_eq!(typical_cost(1.5), 2.25);
        assert_eq!(typical_cost(0.0), 0.0);
        assert_eq!(typical_cost(-2.0), 4.0);
    }

    #[test]
    fn point_cost_examples() {
        let mut pen = PenaltyScheme::new(3.0, PenaltyMode::Constant).unwrap();
        assert_eq!(pen.beta_point(), 6.0);
        let c = point_cost(3.0, CostModel::MeanVariance { gamma: 0.0 }, &pen);
        assert!((c - (1.0 + 9f64.ln() + 6.0)).abs() < 1e-12);
        assert!((c - 9.19722).abs() < 1e-5);

        pen.lambda = 10.0;
        assert_eq!(point_cost(-41.0, CostModel::MeanOnly, &pen), 20.0);

        pen.lambda = 0.0;
        assert_eq!(
            point_cost(0.0, CostModel::MeanVariance { gamma: 1.0 }, &pen),
            1.0
        );
    }

    #[test]
    fn point_cost_guard() {
        let pen = PenaltyScheme::new(0.0, PenaltyMode::Constant).unwrap();
        let model = CostModel::MeanVariance { gamma: 0.0 };
        assert!(model.point_cost_is_guarded(0.0));
        assert!(!model.point_cost_is_guarded(0.1));
        let c = point_cost(0.0, model, &pen);
        assert!(c.is_finite());
        assert!((c - (1.0 + POINT_FLOOR.ln())).abs() < 1e-12);
    }

    #[test]
    fn segment_cost_examples() {
        let mv = CostModel::MeanVariance {
            gamma: DEFAULT_GAMMA,
        };
        let s = SegmentSummary::from_values(&[0.0, 2.0]);
        assert!((segment_cost(&s, mv).unwrap() - 2.0).abs() < 1e-12);

        let s = SegmentSummary::from_values(&[1.0, 3.0]);
        assert_eq!(segment_cost(&s, CostModel::MeanOnly).unwrap(), 2.0);

        let s = SegmentSummary::from_values(&[5.0, 5.0]);
        let c = segment_cost(&s, mv).unwrap();
        assert!((c - 2.0 * (VARIANCE_FLOOR.ln() + 1.0)).abs() < 1e-9);
        assert!((c + 34.84).abs() < 0.01);

        let s = SegmentSummary::from_values(&[5.0]);
        assert_eq!(segment_cost(&s, mv), Err(Error::SegmentTooShort(1)));
        assert_eq!(segment_cost(&s, CostModel::MeanOnly).unwrap(), 0.0);
    }

    #[test]
    fn beta_collective_examples() {
        let pen = PenaltyScheme::new(8.0, PenaltyMode::LengthDependent).unwrap();
        assert_eq!(beta_collective(2, &pen).unwrap(), 52.0);
        assert!((beta_collective(1_000_000, &pen).unwrap() - 26.0).abs() < 1e-3);
        assert!(beta_collective(1_000_000, &pen).unwrap() > 26.0);
        assert_eq!(beta_collective(1, &pen), Err(Error::PenaltyLength(1)));

        let lambda = 22_695f64.ln();
        let kappa = inflation_factor(phi(0.974));
        let pen = PenaltyScheme::inflated(lambda, kappa, PenaltyMode::Constant).unwrap();
        let beta = beta_collective(7, &pen).unwrap();
        assert!((beta - 1523.0).abs() < 0.5, "beta = {beta}");
        assert_eq!(beta, pen.beta_point());
    }

    #[test]
    fn threshold_mode_uses_lambda_directly() {
        let pen = PenaltyScheme::inflated(6.0, 2.0, PenaltyMode::Threshold).unwrap();
        assert_eq!(pen.beta_point(), 12.0);
        assert_eq!(pen.beta_collective(1).unwrap(), 12.0);
    }

    #[test]
    fn point_override_leaves_collective_alone() {
        let mut pen = PenaltyScheme::inflated(5.0, 3.0, PenaltyMode::Constant).unwrap();
        pen.point_override = Some(1e12);
        assert_eq!(pen.beta_point(), 1e12);
        assert_eq!(pen.beta_collective(4).unwrap(), 30.0);
    }

    #[test]
    fn inflation_examples() {
        assert_eq!(inflation_factor(phi(0.0)), 1.0);
        assert!((inflation_factor(phi(0.974)) - 75.923).abs() < 1e-3);
        assert!((inflation_factor(phi(0.3)) - 1.857).abs() < 1e-3);
        assert_eq!(inflation_factor(phi(-0.5)), 1.0);
        assert!((inflation_factor_with(phi(-0.5), true) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn summary_variance() {
        let s = SegmentSummary::from_values(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean(), 2.5);
        assert!((s.variance() - 1.25).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn beta_collective_monotone(lambda in 0.01f64..100.0, a in 2usize..5000) {
            let pen = PenaltyScheme::new(lambda, PenaltyMode::LengthDependent).unwrap();
            let here = pen.beta_collective(a).unwrap();
            prop_assert!(pen.beta_collective(a + 1).unwrap() < here);
            prop_assert!(pen.with_lambda(lambda * 1.01).beta_collective(a).unwrap() > here);
            prop_assert!(pen.with_lambda(lambda * 1.01).beta_point() > pen.beta_point());
            prop_assert!(here > 0.0);
        }

        #[test]
        fn mean_only_cost_matches_direct_sum(xs in prop::collection::vec(-50.0f64..50.0, 1..40)) {
            let s = SegmentSummary::from_values(&xs);
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let direct: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
            let c = segment_cost(&s, CostModel::MeanOnly).unwrap();
            prop_assert!((c - direct).abs() <= 1e-9 * direct.max(1.0));
        }

        #[test]
        fn segment_cost_ignores_order(mut xs in prop::collection::vec(-10.0f64..10.0, 2..30), rot in 0usize..30) {
            let model = CostModel::MeanVariance { gamma: DEFAULT_GAMMA };
            let before = segment_cost(&SegmentSummary::from_values(&xs), model).unwrap();
            let k = rot % xs.len();
            xs.rotate_left(k);
            xs.reverse();
            let after = segment_cost(&SegmentSummary::from_values(&xs), model).unwrap();
            prop_assert!((before - after).abs() <= 1e-7 * before.abs().max(1.0));
        }

        #[test]
        fn summaries_add(a in prop::collection::vec(-10.0f64..10.0, 0..20), b in prop::collection::vec(-10.0f64..10.0, 0..20)) {
            let joined: Vec<f64> = a.iter().chain(&b).copied().collect();
            let lhs = SegmentSummary::from_values(&a) + SegmentSummary::from_values(&b);
            let rhs = SegmentSummary::from_values(&joined);
            prop_assert_eq!(lhs.len, rhs.len);
            prop_assert!((lhs.sum - rhs.sum).abs() < 1e-9);
            prop_assert!((lhs.sumsq - rhs.sumsq).abs() < 1e-9);
            prop_assert!(rhs.len == 0 || rhs.sumsq + 1e-9 * rhs.len as f64 >= rhs.sum * rhs.sum / rhs.len as f64);
        }
    }
}
