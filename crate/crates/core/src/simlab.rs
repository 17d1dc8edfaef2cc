//! Seeded Monte Carlo experiments: noise and anomaly generators, run-length
//! and delay estimators, and ROC curves.
//!
//! Every replication draws from its own generator, derived from the
//! experiment seed and the replication index, so results do not depend on
//! how the work is scheduled across threads. The same replication stream
//! is reused for every penalty value (common random numbers), which keeps
//! curves across `lambda` smooth.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Geometric, Normal, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::inflation_factor;
use crate::detector::{AnomalyEvent, AnomalyKind, Detection, Detector, DetectorConfig, EventLog};
use crate::error::{Error, Result};
use crate::reference::{capa_offline, cusum_mode};
use crate::seqstats::{empirical_quantile, Ar1Estimate};

/// Longest run simulated before a replication is reported as censored.
pub const DEFAULT_CAP: u64 = 10_000_000;

/// Bootstrap resamples behind each confidence interval.
pub const DEFAULT_BOOTSTRAP: usize = 1000;

const BOOTSTRAP_STREAM: u64 = u64::MAX;

/// Mean shift of unit-variance data with signal strength `delta`.
pub fn mu_from_strength(delta: f64) -> f64 {
    2.0 * delta.exp_m1().sqrt()
}

/// Signal strength `log(1 + mu²/4)` of a mean shift `mu`.
pub fn strength_from_mu(mu: f64) -> f64 {
    (mu * mu / 4.0).ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrengthSpec {
    pub delta: f64,
}

impl StrengthSpec {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!(
                "signal strength must be finite and > 0, got {delta}"
            )));
        }
        Ok(Self { delta })
    }

    pub fn mu(&self) -> f64 {
        mu_from_strength(self.delta)
    }
}

/// Generator for replication `rep` of an experiment seeded with `seed`.
pub fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Stationary AR(1) process with standard normal innovations.
#[derive(Debug, Clone)]
pub struct Ar1Noise {
    phi: f64,
    last: Option<f64>,
}

impl Ar1Noise {
    pub fn new(phi: f64) -> Result<Self> {
        if !(phi.abs() < 1.0) {
            return Err(Error::Config(format!(
                "AR(1) coefficient must lie in (-1, 1), got {phi}"
            )));
        }
        Ok(Self { phi, last: None })
    }

    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> f64 {
        let e: f64 = StandardNormal.sample(rng);
        let x = match self.last {
            None => e / (1.0 - self.phi * self.phi).sqrt(),
            Some(prev) => self.phi * prev + e,
        };
        self.last = Some(x);
        x
    }
}

pub fn gen_ar1(phi: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let mut noise = Ar1Noise::new(phi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| noise.next(&mut rng)).collect())
}

/// Number of failures before the `r`-th success in Bernoulli(`p`) trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegBinomial {
    pub r: u32,
    pub p: f64,
}

impl NegBinomial {
    pub fn mean(&self) -> f64 {
        self.r as f64 * (1.0 - self.p) / self.p
    }

    fn validate(&self) -> Result<()> {
        if self.r == 0 || !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::Config(format!(
                "invalid negative binomial NB({}, {})",
                self.r, self.p
            )));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let g = Geometric::new(self.p).expect("validated");
        (0..self.r).map(|_| g.sample(rng)).sum()
    }
}

/// Alternating typical and anomalous regimes with heavy-tailed point
/// anomalies in the typical state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiAnomalyConfig {
    pub typical_len: NegBinomial,
    pub anomaly_len: NegBinomial,
    /// Anomaly means are drawn from `N(mu_mean, mu_sd²)`.
    pub mu_mean: f64,
    pub mu_sd: f64,
    /// Anomaly standard deviations are drawn from `Gamma(shape, scale)`.
    pub sigma_shape: f64,
    pub sigma_scale: f64,
    /// Chance that a typical observation is replaced by a point anomaly.
    pub point_prob: f64,
    /// Degrees of freedom of the Student-t point anomalies.
    pub point_df: f64,
}

impl Default for MultiAnomalyConfig {
    fn default() -> Self {
        Self {
            typical_len: NegBinomial { r: 5, p: 0.01 },
            anomaly_len: NegBinomial { r: 5, p: 0.03 },
            mu_mean: 0.0,
            mu_sd: 2.0,
            sigma_shape: 1.0,
            sigma_scale: 1.0,
            point_prob: 0.01,
            point_df: 2.0,
        }
    }
}

impl MultiAnomalyConfig {
    pub fn with_points(self, point_prob: f64, point_df: f64) -> Self {
        Self {
            point_prob,
            point_df,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.typical_len.validate()?;
        self.anomaly_len.validate()?;
        let fail = |msg: String| Err(Error::Config(msg));
        if !(0.0..=1.0).contains(&self.point_prob) {
            return fail(format!(
                "point_prob must lie in [0, 1], got {}",
                self.point_prob
            ));
        }
        if !(self.point_df > 0.0) {
            return fail(format!("point_df must be > 0, got {}", self.point_df));
        }
        if !(self.mu_sd >= 0.0 && self.mu_sd.is_finite() && self.mu_mean.is_finite()) {
            return fail(format!(
                "invalid anomaly mean law N({}, {}²)",
                self.mu_mean, self.mu_sd
            ));
        }
        if !(self.sigma_shape > 0.0 && self.sigma_scale > 0.0) {
            return fail(format!(
                "invalid anomaly scale law Gamma({}, {})",
                self.sigma_shape, self.sigma_scale
            ));
        }
        Ok(())
    }
}

/// What generated each observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Typical,
    Point,
    /// Index into [`GroundTruth::segments`].
    Collective(usize),
}

/// Anomalies planted by [`gen_multi`], as 1-based inclusive indices.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub segments: Vec<(u64, u64)>,
    pub points: Vec<u64>,
}

impl GroundTruth {
    /// Regime of every index `1..=n`, in order.
    pub fn regimes(&self, n: usize) -> Vec<Regime> {
        let mut out = vec![Regime::Typical; n];
        for &p in &self.points {
            out[p as usize - 1] = Regime::Point;
        }
        for (k, &(s, e)) in self.segments.iter().enumerate() {
            for r in &mut out[s as usize - 1..e as usize] {
                *r = Regime::Collective(k);
            }
        }
        out
    }
}

pub fn gen_multi(
    config: &MultiAnomalyConfig,
    n: usize,
    seed: u64,
) -> Result<(Vec<f64>, GroundTruth)> {
    gen_multi_with(config, n, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn gen_multi_with<R: Rng + ?Sized>(
    config: &MultiAnomalyConfig,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, GroundTruth)> {
    config.validate()?;
    let mu_law = Normal::new(config.mu_mean, config.mu_sd).expect("validated");
    let sigma_law = Gamma::new(config.sigma_shape, config.sigma_scale).expect("validated");
    let t_law = StudentT::new(config.point_df).expect("validated");
    let mut series = Vec::with_capacity(n);
    let mut truth = GroundTruth::default();
    let mut typical = true;
    while series.len() < n {
        if typical {
            let len = config
                .typical_len
                .sample(rng)
                .min((n - series.len()) as u64);
            for _ in 0..len {
                if rng.random_bool(config.point_prob) {
                    series.push(t_law.sample(rng));
                    truth.points.push(series.len() as u64);
                } else {
                    series.push(StandardNormal.sample(rng));
                }
            }
        } else {
            let len = config
                .anomaly_len
                .sample(rng)
                .min((n - series.len()) as u64);
            let mu = mu_law.sample(rng);
            let sigma: f64 = sigma_law.sample(rng);
            if len > 0 {
                let start = series.len() as u64 + 1;
                for _ in 0..len {
                    let z: f64 = StandardNormal.sample(rng);
                    series.push(mu + sigma * z);
                }
                truth.segments.push((start, series.len() as u64));
            }
        }
        typical = !typical;
    }
    Ok((series, truth))
}

/// Settings shared by the run-length and delay experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloConfig {
    /// Detector template; `penalty.lambda` is replaced by each grid value.
    pub detector: DetectorConfig,
    /// Autocorrelation of the AR(1) noise, 0 for i.i.d. N(0, 1).
    pub phi: f64,
    pub cap: u64,
    pub bootstrap: usize,
}

impl MonteCarloConfig {
    pub fn new(detector: DetectorConfig) -> Self {
        Self {
            detector,
            phi: 0.0,
            cap: DEFAULT_CAP,
            bootstrap: DEFAULT_BOOTSTRAP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArlRow {
    pub lambda: f64,
    pub phi: f64,
    pub mean_rl: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub censored: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AddRow {
    pub lambda: f64,
    pub delta: f64,
    pub phi: f64,
    pub m: usize,
    pub mean_delay: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    #[serde(skip)]
    pub censored: usize,
}

/// Mean with a percentile-bootstrap 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub censored: usize,
}

/// Percentile-bootstrap 95% interval for the mean of `values`.
pub fn bootstrap_mean_ci<R: Rng + ?Sized>(
    values: &[f64],
    resamples: usize,
    rng: &mut R,
) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if resamples == 0 || n < 2 {
        return (mean, mean);
    }
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    (
        empirical_quantile(&means, 0.025),
        empirical_quantile(&means, 0.975),
    )
}

fn summarize(runs: &[Detection], resamples: usize, seed: u64) -> Estimate {
    let values: Vec<f64> = runs.iter().map(|d| d.value() as f64).collect();
    let censored = runs.iter().filter(|d| d.is_censored()).count();
    let (ci_lo, ci_hi) =
        bootstrap_mean_ci(&values, resamples, &mut rep_rng(seed, BOOTSTRAP_STREAM));
    Estimate {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        ci_lo,
        ci_hi,
        censored,
    }
}

/// Feeds `shift + noise` to a fresh detector after a noise-only burn-in and
/// waits for the first anomalous label.
pub fn first_alarm<R: Rng + ?Sized>(
    config: &DetectorConfig,
    phi: f64,
    shift: f64,
    cap: u64,
    rng: &mut R,
) -> Result<Detection> {
    let mut noise = Ar1Noise::new(phi)?;
    let burn: Vec<f64> = (0..config.burn_in).map(|_| noise.next(rng)).collect();
    let mut det = Detector::new(*config, &burn)?;
    for i in 1..=cap {
        if det.step(shift + noise.next(rng))?.label.is_anomalous() {
            return Ok(Detection::Delay(i));
        }
    }
    Ok(Detection::Censored(cap))
}

fn check_reps(reps: usize) -> Result<()> {
    if reps < 2 {
        return Err(Error::Config(format!(
            "need at least 2 replications, got {reps}"
        )));
    }
    Ok(())
}

fn replicate(
    config: &MonteCarloConfig,
    det: &DetectorConfig,
    shift: f64,
    reps: usize,
    seed: u64,
) -> Result<Estimate> {
    det.validate()?;
    let runs = (0..reps as u64)
        .into_par_iter()
        .map(|rep| first_alarm(det, config.phi, shift, config.cap, &mut rep_rng(seed, rep)))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(&runs, config.bootstrap, seed))
}

/// Average run length to the first false alarm on anomaly-free noise, for
/// each penalty in `lambdas`.
pub fn estimate_arl(
    config: &MonteCarloConfig,
    lambdas: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<ArlRow>> {
    check_reps(reps)?;
    lambdas
        .iter()
        .map(|&lambda| {
            let est = replicate(
                config,
                &config.detector.with_lambda(lambda),
                0.0,
                reps,
                seed,
            )?;
            Ok(ArlRow {
                lambda,
                phi: config.phi,
                mean_rl: est.mean,
                ci_lo: est.ci_lo,
                ci_hi: est.ci_hi,
                censored: est.censored,
            })
        })
        .collect()
}

/// Average delay in detecting a mean shift of strength `delta` that starts
/// right after the burn-in.
pub fn estimate_add(
    config: &MonteCarloConfig,
    lambdas: &[f64],
    deltas: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<AddRow>> {
    check_reps(reps)?;
    let mut rows = Vec::with_capacity(lambdas.len() * deltas.len());
    for &lambda in lambdas {
        for &delta in deltas {
            let mu = StrengthSpec::new(delta)?.mu();
            let est = replicate(config, &config.detector.with_lambda(lambda), mu, reps, seed)?;
            rows.push(AddRow {
                lambda,
                delta,
                phi: config.phi,
                m: config.detector.max_seg_len,
                mean_delay: est.mean,
                ci_lo: est.ci_lo,
                ci_hi: est.ci_hi,
                censored: est.censored,
            });
        }
    }
    Ok(rows)
}

/// Run lengths on AR(1) noise for each `phi`, with the penalties either
/// left alone or scaled by `(1+phi)/(1-phi)`.
pub fn arl_with_inflation(
    config: &MonteCarloConfig,
    phis: &[f64],
    lambdas: &[f64],
    inflate: bool,
    reps: usize,
    seed: u64,
) -> Result<Vec<ArlRow>> {
    let mut rows = Vec::new();
    for &phi in phis {
        let mut cfg = *config;
        cfg.phi = phi;
        cfg.detector.penalty.inflation = if inflate {
            inflation_factor(Ar1Estimate::new(phi)?)
        } else {
            1.0
        };
        rows.extend(estimate_arl(&cfg, lambdas, reps, seed)?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// The online detector.
    Scapa,
    /// The offline solver.
    Capa,
    /// The online detector with point anomalies disabled.
    Cusum,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Scapa => "scapa",
            Method::Capa => "capa",
            Method::Cusum => "cusum",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scapa" => Ok(Method::Scapa),
            "capa" => Ok(Method::Capa),
            "cusum" => Ok(Method::Cusum),
            other => Err(Error::Config(format!(
                "unknown method {other:?} (expected scapa, capa or cusum)"
            ))),
        }
    }
}

/// Collective anomalies found by `method` in `series`. The online methods
/// take their burn-in from the head of the series.
pub fn detect_collective(
    method: Method,
    config: &DetectorConfig,
    series: &[f64],
) -> Result<Vec<AnomalyEvent>> {
    let events = match method {
        Method::Capa => capa_offline(series, config)?.events,
        Method::Scapa | Method::Cusum => {
            let cfg = if method == Method::Cusum {
                cusum_mode(config)
            } else {
                *config
            };
            if series.len() < cfg.burn_in {
                return Err(Error::TooFewValues {
                    needed: cfg.burn_in,
                    got: series.len(),
                });
            }
            let (burn, rest) = series.split_at(cfg.burn_in);
            let mut det = Detector::new(cfg, burn)?;
            let mut log = EventLog::new();
            for &x in rest {
                log.apply(&det.step(x)?);
            }
            log.into_events()
        }
    };
    Ok(events
        .into_iter()
        .filter(|e| e.kind == AnomalyKind::Collective)
        .collect())
}

/// Detection rates of one labelling against the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    /// Share of true segments overlapped by a detection; `None` without
    /// true segments.
    pub tpr: Option<f64>,
    /// Share of typical-regime observations (point anomalies included)
    /// covered by a detection.
    pub fpr: f64,
}

pub fn score(events: &[AnomalyEvent], truth: &GroundTruth, regimes: &[Regime]) -> Score {
    let n = regimes.len();
    let mut covered = vec![false; n];
    for e in events {
        for c in &mut covered[e.start as usize - 1..(e.end as usize).min(n)] {
            *c = true;
        }
    }
    let hit = truth
        .segments
        .iter()
        .filter(|&&(s, e)| events.iter().any(|ev| ev.overlaps(s, e)))
        .count();
    let tpr = (!truth.segments.is_empty()).then(|| hit as f64 / truth.segments.len() as f64);
    let (mut typical, mut false_pos) = (0usize, 0usize);
    for (r, c) in regimes.iter().zip(&covered) {
        if !matches!(r, Regime::Collective(_)) {
            typical += 1;
            false_pos += *c as usize;
        }
    }
    Score {
        tpr,
        fpr: if typical == 0 {
            0.0
        } else {
            false_pos as f64 / typical as f64
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocConfig {
    /// Detector template; `penalty.lambda` is replaced by each grid value.
    pub detector: DetectorConfig,
    pub generator: MultiAnomalyConfig,
    /// Length of each simulated series.
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub lambda: f64,
    pub true_positive_rate: f64,
    pub false_positive_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocRow {
    pub method: String,
    pub lambda: f64,
    pub tpr: f64,
    pub fpr: f64,
}

pub fn roc_rows(method: Method, points: &[RocPoint]) -> Vec<RocRow> {
    points
        .iter()
        .map(|p| RocRow {
            method: method.label().to_string(),
            lambda: p.lambda,
            tpr: p.true_positive_rate,
            fpr: p.false_positive_rate,
        })
        .collect()
}

/// Rates averaged over `reps` simulated series for each penalty. Series
/// depend only on `(seed, rep)`, so methods run with the same seed see the
/// same data.
pub fn roc_curve(
    method: Method,
    config: &RocConfig,
    lambdas: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<RocPoint>> {
    check_reps(reps)?;
    config.generator.validate()?;
    let per_rep = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let (series, truth) =
                gen_multi_with(&config.generator, config.n, &mut rep_rng(seed, rep))?;
            let regimes = truth.regimes(series.len());
            lambdas
                .iter()
                .map(|&lambda| {
                    let events =
                        detect_collective(method, &config.detector.with_lambda(lambda), &series)?;
                    Ok(score(&events, &truth, &regimes))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    lambdas
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let tprs: Vec<f64> = per_rep.iter().filter_map(|r| r[i].tpr).collect();
            if tprs.is_empty() {
                return Err(Error::Config(
                    "no simulated series contained a collective anomaly".into(),
                ));
            }
            Ok(RocPoint {
                lambda,
                true_positive_rate: tprs.iter().sum::<f64>() / tprs.len() as f64,
                false_positive_rate: per_rep.iter().map(|r| r[i].fpr).sum::<f64>() / reps as f64,
            })
        })
        .collect()
}

/// Operating points not dominated by another (lower or equal false
/// positive rate with a higher true positive rate), plus `(0,0)` and
/// `(1,1)`, ordered by false positive rate. Different penalties can trade
/// rates non-monotonically, so only the best reachable trade-off counts.
pub fn roc_frontier(points: &[RocPoint]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.false_positive_rate, p.true_positive_rate))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    let mut out = vec![(0.0, 0.0)];
    for p in pts {
        if p.1 > out[out.len() - 1].1 {
            out.push(p);
        }
    }
    if out[out.len() - 1] != (1.0, 1.0) {
        out.push((1.0, 1.0));
    }
    out
}

/// Trapezoidal area under [`roc_frontier`].
pub fn auc(points: &[RocPoint]) -> f64 {
    roc_frontier(points)
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// Smallest false positive rate on [`roc_frontier`] reaching `tpr`,
/// interpolating linearly between operating points.
pub fn fpr_at_tpr(points: &[RocPoint], tpr: f64) -> f64 {
    let front = roc_frontier(points);
    for w in front.windows(2) {
        let ((f0, t0), (f1, t1)) = (w[0], w[1]);
        if t1 >= tpr {
            let s = ((tpr - t0) / (t1 - t0)).clamp(0.0, 1.0);
            return f0 + s * (f1 - f0);
        }
    }
    1.0
}

/// Writes `rows` as CSV with a header line.
pub fn write_csv<W: Write, T: Serialize>(writer: W, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{CostModel, PenaltyMode, PenaltyScheme};
    use crate::detector::BaselineMode;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn lag1(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let num: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        let den: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
        num / den
    }

    fn mean_only(lambda: f64, mode: PenaltyMode) -> DetectorConfig {
        DetectorConfig {
            min_seg_len: 2,
            max_seg_len: 100,
            burn_in: 0,
            model: CostModel::MeanOnly,
            penalty: PenaltyScheme::new(lambda, mode).unwrap(),
            baseline: BaselineMode::Known {
                mu0: 0.0,
                sigma0: 1.0,
            },
        }
    }

    #[test]
    fn strength_grid() {
        assert_abs_diff_eq!(mu_from_strength(0.05), 0.4528, epsilon = 1e-4);
        assert_abs_diff_eq!(mu_from_strength(0.2), 0.9411, epsilon = 1e-4);
        assert_abs_diff_eq!(
            strength_from_mu(mu_from_strength(0.1)),
            0.1,
            epsilon = 1e-12
        );
        assert!(StrengthSpec::new(0.0).is_err());
    }

    #[test]
    fn ar1_autocorrelation() {
        assert!(lag1(&gen_ar1(0.0, 100_000, 3).unwrap()).abs() <= 0.01);
        let r = lag1(&gen_ar1(0.4, 100_000, 3).unwrap());
        assert!((0.39..=0.41).contains(&r), "{r}");
        assert_eq!(gen_ar1(0.4, 500, 9).unwrap(), gen_ar1(0.4, 500, 9).unwrap());
        assert!(gen_ar1(1.0, 5, 0).is_err());
    }

    #[test]
    fn ar1_stationary_start() {
        // Var(x₁) = 1/(1-φ²) = 1.5625 for φ = 0.6.
        let firsts: Vec<f64> = (0..20_000)
            .map(|s| gen_ar1(0.6, 1, s).unwrap()[0])
            .collect();
        let var = firsts.iter().map(|x| x * x).sum::<f64>() / firsts.len() as f64;
        assert!((var - 1.5625).abs() < 0.05, "{var}");
    }

    #[test]
    fn negative_binomial_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (p, expected) in [(0.01, 495.0), (0.03, 5.0 * 0.97 / 0.03)] {
            let law = NegBinomial { r: 5, p };
            assert_abs_diff_eq!(law.mean(), expected, epsilon = 1e-9);
            let avg = (0..100_000)
                .map(|_| law.sample(&mut rng) as f64)
                .sum::<f64>()
                / 1e5;
            assert!((avg / expected - 1.0).abs() < 0.05, "{avg}");
        }
    }

    #[test]
    fn multi_without_points() {
        let cfg = MultiAnomalyConfig::default().with_points(0.0, 2.0);
        let (series, truth) = gen_multi(&cfg, 10_000, 4).unwrap();
        assert_eq!(series.len(), 10_000);
        assert!(truth.points.is_empty());
        assert!(!truth.segments.is_empty());
    }

    #[test]
    fn multi_deterministic() {
        let cfg = MultiAnomalyConfig::default();
        assert_eq!(
            gen_multi(&cfg, 10_000, 11).unwrap(),
            gen_multi(&cfg, 10_000, 11).unwrap()
        );
        assert!(gen_multi(&cfg.with_points(1.5, 2.0), 10, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn truth_partitions_indices(seed in any::<u64>(), n in 1usize..3000, prob in 0.0f64..0.5) {
            let cfg = MultiAnomalyConfig {
                typical_len: NegBinomial { r: 2, p: 0.05 },
                anomaly_len: NegBinomial { r: 2, p: 0.1 },
                ..MultiAnomalyConfig::default().with_points(prob, 3.0)
            };
            let (series, truth) = gen_multi(&cfg, n, seed).unwrap();
            prop_assert_eq!(series.len(), n);
            let mut seen = vec![0u32; n];
            for &(s, e) in &truth.segments {
                prop_assert!(1 <= s && s <= e && e as usize <= n);
                for i in s..=e { seen[i as usize - 1] += 1; }
            }
            for &p in &truth.points { seen[p as usize - 1] += 1; }
            prop_assert!(seen.iter().all(|&c| c <= 1));
            let regimes = truth.regimes(n);
            let points = regimes.iter().filter(|r| **r == Regime::Point).count();
            prop_assert_eq!(points, truth.points.len());
        }
    }

    #[test]
    fn zero_penalty_alarm_is_immediate() {
        let cfg = MonteCarloConfig::new(mean_only(0.0, PenaltyMode::LengthDependent));
        let rows = estimate_arl(&cfg, &[0.0], 100, 5).unwrap();
        assert_eq!(
            (
                rows[0].mean_rl,
                rows[0].ci_lo,
                rows[0].ci_hi,
                rows[0].censored
            ),
            (1.0, 1.0, 1.0, 0)
        );
    }

    #[test]
    fn censoring_is_reported() {
        let mut cfg = MonteCarloConfig::new(mean_only(200.0, PenaltyMode::Threshold));
        cfg.cap = 50;
        let rows = estimate_arl(&cfg, &[200.0], 10, 5).unwrap();
        assert_eq!((rows[0].mean_rl, rows[0].censored), (50.0, 10));
    }

    #[test]
    fn arl_deterministic_and_ordered() {
        let cfg = MonteCarloConfig::new(mean_only(0.0, PenaltyMode::Threshold));
        let a = estimate_arl(&cfg, &[2.0, 6.0], 50, 8).unwrap();
        assert_eq!(a, estimate_arl(&cfg, &[2.0, 6.0], 50, 8).unwrap());
        assert!(a[0].mean_rl < a[1].mean_rl);
        assert!(a[0].ci_lo <= a[0].mean_rl && a[0].mean_rl <= a[0].ci_hi);
    }

    #[test]
    fn zero_phi_inflation_is_identity() {
        let cfg = MonteCarloConfig::new(mean_only(0.0, PenaltyMode::Threshold));
        let on = arl_with_inflation(&cfg, &[0.0], &[4.0], true, 30, 2).unwrap();
        let off = arl_with_inflation(&cfg, &[0.0], &[4.0], false, 30, 2).unwrap();
        assert_eq!(on, off);
    }

    #[test]
    fn add_reports_grid() {
        let cfg = MonteCarloConfig::new(mean_only(0.0, PenaltyMode::Threshold));
        let rows = estimate_add(&cfg, &[4.0, 8.0], &[0.2], 40, 1).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].m, 100);
        assert!(rows[0].mean_delay <= rows[1].mean_delay);
        assert!(estimate_add(&cfg, &[4.0], &[0.0], 40, 1).is_err());
    }

    #[test]
    fn bootstrap_brackets_mean() {
        let values: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let (lo, hi) = bootstrap_mean_ci(&values, 500, &mut rep_rng(0, 0));
        assert!(lo < 99.5 && 99.5 < hi);
        assert!(hi - lo < 25.0);
    }

    #[test]
    fn separable_roc() {
        let generator = MultiAnomalyConfig {
            mu_mean: 100.0,
            mu_sd: 0.0,
            ..MultiAnomalyConfig::default()
        }
        .with_points(0.0, 2.0);
        let detector = DetectorConfig {
            min_seg_len: 2,
            max_seg_len: 400,
            burn_in: 0,
            model: CostModel::default(),
            penalty: PenaltyScheme::new(10.0, PenaltyMode::LengthDependent).unwrap(),
            baseline: BaselineMode::Known {
                mu0: 0.0,
                sigma0: 1.0,
            },
        };
        let cfg = RocConfig {
            detector,
            generator,
            n: 3000,
        };
        for method in [Method::Scapa, Method::Capa, Method::Cusum] {
            let pts = roc_curve(method, &cfg, &[10.0], 4, 3).unwrap();
            assert_eq!(pts[0].true_positive_rate, 1.0, "{method}");
            assert_eq!(pts[0].false_positive_rate, 0.0, "{method}");
        }
    }

    #[test]
    fn auc_and_matching() {
        let p = |lambda, tpr, fpr| RocPoint {
            lambda,
            true_positive_rate: tpr,
            false_positive_rate: fpr,
        };
        let perfect = [p(1.0, 1.0, 0.0)];
        assert_abs_diff_eq!(auc(&perfect), 1.0);
        assert_abs_diff_eq!(auc(&[]), 0.5);
        let curve = [p(1.0, 0.6, 0.1), p(2.0, 0.9, 0.3)];
        // (0,0)-(0.1,0.6)-(0.3,0.9)-(1,1)
        assert_abs_diff_eq!(auc(&curve), 0.03 + 0.15 + 0.665, epsilon = 1e-12);
        assert_abs_diff_eq!(
            fpr_at_tpr(&curve, 0.8),
            0.1 + 0.2 * (0.2 / 0.3),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(fpr_at_tpr(&curve, 0.3), 0.05, epsilon = 1e-12);

        // A dominated point changes nothing.
        let noisy = [curve[0], curve[1], p(3.0, 0.7, 0.5)];
        assert_eq!(roc_frontier(&noisy), roc_frontier(&curve));
        assert_eq!(auc(&noisy), auc(&curve));
    }

    #[test]
    fn method_names() {
        for m in [Method::Scapa, Method::Capa, Method::Cusum] {
            assert_eq!(m.label().parse::<Method>().unwrap(), m);
        }
        assert!("pelt".parse::<Method>().is_err());
    }

    #[test]
    fn csv_schemas() {
        let mut buf = Vec::new();
        let row = ArlRow {
            lambda: 4.0,
            phi: 0.0,
            mean_rl: 10.5,
            ci_lo: 9.0,
            ci_hi: 12.0,
            censored: 0,
        };
        write_csv(&mut buf, &[row]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "lambda,phi,mean_rl,ci_lo,ci_hi,censored\n4.0,0.0,10.5,9.0,12.0,0\n"
        );

        let mut buf = Vec::new();
        let row = AddRow {
            lambda: 4.0,
            delta: 0.2,
            phi: 0.0,
            m: 13,
            mean_delay: 3.0,
            ci_lo: 2.0,
            ci_hi: 4.0,
            censored: 0,
        };
        write_csv(&mut buf, &[row]).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("lambda,delta,phi,m,mean_delay,ci_lo,ci_hi\n"));

        let mut buf = Vec::new();
        write_csv(
            &mut buf,
            &roc_rows(
                Method::Capa,
                &[RocPoint {
                    lambda: 1.0,
                    true_positive_rate: 0.5,
                    false_positive_rate: 0.1,
                }],
            ),
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "method,lambda,tpr,fpr\ncapa,1.0,0.5,0.1\n"
        );
    }
}
