//! Offline CAPA, an exhaustive oracle for tiny inputs, and the CUSUM-style
//! configuration that disables point anomalies.

use std::cmp::Ordering;

use crate::costs::{point_cost, segment_cost_raw, typical_cost, CostModel, VARIANCE_FLOOR};
use crate::detector::{AnomalyEvent, AnomalyKind, BaselineMode, DetectorConfig, Label};
use crate::error::{Error, Result};
use crate::seqstats::{empirical_quantile, NORMAL_Q75};

/// Point penalty that effectively forbids point anomalies.
pub const CUSUM_POINT_PENALTY: f64 = 1e12;

/// Longest series the exhaustive oracle accepts.
pub const BRUTE_FORCE_LIMIT: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineResult {
    /// Disjoint, time-ordered anomalies; `detected_at` is the series length.
    pub events: Vec<AnomalyEvent>,
    pub total_cost: f64,
    /// `(mu, sigma)` used to standardize the series.
    pub baseline_used: (f64, f64),
}

/// Whole-series median and IQR-based scale.
pub fn robust_location_scale(series: &[f64]) -> Result<(f64, f64)> {
    if series.is_empty() {
        return Err(Error::TooFewValues { needed: 1, got: 0 });
    }
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = empirical_quantile(&sorted, 0.75) - empirical_quantile(&sorted, 0.25);
    if !(iqr > 0.0) {
        return Err(Error::ConstantSeries);
    }
    Ok((empirical_quantile(&sorted, 0.5), iqr / (2.0 * NORMAL_Q75)))
}

fn offline_checks(series: &[f64], config: &DetectorConfig) -> Result<(f64, f64)> {
    // The burn-in plays no role offline.
    let mut probe = *config;
    probe.baseline = match config.baseline {
        BaselineMode::Sequential => BaselineMode::Known {
            mu0: 0.0,
            sigma0: 1.0,
        },
        known => known,
    };
    probe.validate()?;
    if let Some(&bad) = series.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(bad));
    }
    match config.baseline {
        BaselineMode::Known { mu0, sigma0 } => Ok((mu0, sigma0)),
        BaselineMode::Sequential => robust_location_scale(series),
    }
}

fn collective(id: u64, start: u64, end: u64, detected_at: u64, values: &[f64]) -> AnomalyEvent {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    AnomalyEvent {
        id,
        kind: AnomalyKind::Collective,
        start,
        end,
        detected_at,
        seg_mean: Some(mean),
        seg_var: Some(var),
    }
}

fn point(id: u64, t: u64, detected_at: u64) -> AnomalyEvent {
    AnomalyEvent {
        id,
        kind: AnomalyKind::Point,
        start: t,
        end: t,
        detected_at,
        seg_mean: None,
        seg_var: None,
    }
}

/// Exact minimizer of the penalised cost over the whole series.
///
/// A `Sequential` baseline is replaced by the median and IQR of the full
/// series; a `Known` baseline is used as given. Segment lengths are
/// limited to `[min_seg_len, max_seg_len]`; pass `max_seg_len >= n` for no
/// upper limit.
pub fn capa_offline(series: &[f64], config: &DetectorConfig) -> Result<OfflineResult> {
    let (mu, sigma) = offline_checks(series, config)?;
    let x: Vec<f64> = series.iter().map(|v| (v - mu) / sigma).collect();
    let n = x.len();
    let (l, m) = (config.min_seg_len, config.max_seg_len);
    let beta: Vec<f64> = (0..=n.min(m))
        .map(|a| {
            if a < l {
                Ok(f64::INFINITY)
            } else {
                config.penalty.beta_collective(a)
            }
        })
        .collect::<Result<_>>()?;

    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (t, v) in x.iter().enumerate() {
        s1[t + 1] = s1[t] + v;
        s2[t + 1] = s2[t] + v * v;
    }
    let variance_cost = matches!(config.model, CostModel::MeanVariance { .. });
    let mut cost = vec![0.0; n + 1];
    let mut label = vec![Label::Typical; n + 1];
    for t in 1..=n {
        let v = x[t - 1];
        let mut best = cost[t - 1] + typical_cost(v);
        let mut choice = Label::Typical;
        let c_point = cost[t - 1] + point_cost(v, config.model, &config.penalty);
        if c_point < best {
            best = c_point;
            choice = Label::Point;
        }
        if t >= l {
            for k in (t.saturating_sub(m)..=t - l).rev() {
                let a = t - k;
                let (sum, sq) = (s1[t] - s1[k], s2[t] - s2[k]);
                if variance_cost {
                    // Skip the logarithm when ln v >= 1 - 1/v already rules k out.
                    let n = a as f64;
                    let v = ((sq - sum * sum / n) / n).max(VARIANCE_FLOOR);
                    if cost[k] + beta[a] + n * (2.0 - 1.0 / v) > best + 1e-9 * (1.0 + best.abs()) {
                        continue;
                    }
                }
                let c = cost[k] + segment_cost_raw(a, sum, sq, config.model) + beta[a];
                if c < best {
                    best = c;
                    choice = Label::Collective {
                        start: k as u64 + 1,
                    };
                }
            }
        }
        cost[t] = best;
        label[t] = choice;
    }

    let mut events = Vec::new();
    let mut t = n;
    while t > 0 {
        match label[t] {
            Label::Typical => t -= 1,
            Label::Point => {
                events.push(point(0, t as u64, n as u64));
                t -= 1;
            }
            Label::Collective { start } => {
                let s = start as usize;
                events.push(collective(0, start, t as u64, n as u64, &x[s - 1..t]));
                t = s - 1;
            }
        }
    }
    events.reverse();
    for (i, e) in events.iter_mut().enumerate() {
        e.id = i as u64;
    }
    Ok(OfflineResult {
        events,
        total_cost: cost[n],
        baseline_used: (mu, sigma),
    })
}

/// One element of a labelling, in the detector's preference order:
/// typical before point before collective, shorter segments first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Token {
    Typical,
    Point,
    Collective(usize),
}

/// Cost of a segment by two-pass summation, independent of prefix sums.
fn direct_segment_cost(values: &[f64], model: CostModel) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    match model {
        CostModel::MeanOnly => ss,
        CostModel::MeanVariance { .. } => n * ((ss / n).max(VARIANCE_FLOOR).ln() + 1.0),
    }
}

struct Search<'a> {
    x: &'a [f64],
    config: &'a DetectorConfig,
    tokens: Vec<Token>,
    best: Option<(f64, Vec<Token>)>,
}

impl Search<'_> {
    fn explore(&mut self, pos: usize, acc: f64) {
        let n = self.x.len();
        if pos == n {
            self.offer(acc);
            return;
        }
        let v = self.x[pos];
        self.tokens.push(Token::Typical);
        self.explore(pos + 1, acc + typical_cost(v));
        self.tokens.pop();

        self.tokens.push(Token::Point);
        self.explore(
            pos + 1,
            acc + point_cost(v, self.config.model, &self.config.penalty),
        );
        self.tokens.pop();

        let longest = self.config.max_seg_len.min(n - pos);
        for a in self.config.min_seg_len..=longest {
            let seg = direct_segment_cost(&self.x[pos..pos + a], self.config.model);
            let beta = self.config.penalty.beta_collective(a).expect("validated");
            self.tokens.push(Token::Collective(a));
            self.explore(pos + a, acc + seg + beta);
            self.tokens.pop();
        }
    }

    fn offer(&mut self, cost: f64) {
        let better = match &self.best {
            None => true,
            Some((best, tokens)) => {
                let tol = 1e-9 * best.abs().max(1.0);
                if cost < best - tol {
                    true
                } else if cost <= best + tol {
                    // Tie: compare from the end, as the recursion decides.
                    self.tokens.iter().rev().cmp(tokens.iter().rev()) == Ordering::Less
                } else {
                    false
                }
            }
        };
        if better {
            self.best = Some((cost, self.tokens.clone()));
        }
    }
}

/// Exhaustive minimizer for short series with a known baseline.
///
/// Enumerates every labelling of the points as typical, point-anomalous or
/// members of disjoint collective segments with lengths in
/// `[min_seg_len, max_seg_len]`. Costs within `1e-9` (relative) are ties,
/// resolved as the detector resolves them.
pub fn brute_force_oracle(series: &[f64], config: &DetectorConfig) -> Result<OfflineResult> {
    if series.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::SeriesTooLong {
            len: series.len(),
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let BaselineMode::Known { mu0, sigma0 } = config.baseline else {
        return Err(Error::Config(
            "the brute-force oracle needs a known baseline".into(),
        ));
    };
    offline_checks(series, config)?;
    let x: Vec<f64> = series.iter().map(|v| (v - mu0) / sigma0).collect();
    let mut search = Search {
        x: &x,
        config,
        tokens: Vec::with_capacity(x.len()),
        best: None,
    };
    search.explore(0, 0.0);
    let (total_cost, tokens) = search
        .best
        .expect("at least the all-typical labelling exists");

    let n = x.len() as u64;
    let mut events = Vec::new();
    let mut pos = 0usize;
    for tok in tokens {
        match tok {
            Token::Typical => pos += 1,
            Token::Point => {
                events.push(point(events.len() as u64, pos as u64 + 1, n));
                pos += 1;
            }
            Token::Collective(a) => {
                let id = events.len() as u64;
                events.push(collective(
                    id,
                    pos as u64 + 1,
                    (pos + a) as u64,
                    n,
                    &x[pos..pos + a],
                ));
                pos += a;
            }
        }
    }
    Ok(OfflineResult {
        events,
        total_cost,
        baseline_used: (mu0, sigma0),
    })
}

/// The same configuration with point anomalies priced out, so that every
/// departure must be explained by a collective anomaly.
pub fn cusum_mode(config: &DetectorConfig) -> DetectorConfig {
    let mut out = *config;
    out.penalty.point_override = Some(CUSUM_POINT_PENALTY);
    out
}
