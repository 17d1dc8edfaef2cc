//! The online engine.
//!
//! Each observation is standardized once on arrival, then fed to a
//! dynamic programme that only looks back `max_seg_len` steps:
//!
//! ```text
//! C(t) = min { C(t-1) + x_t²,
//!              C(t-1) + point cost of x_t,
//!              min_{t-m <= k <= t-l} C(k) + cost(x_{k+1..t}) + β_C(t-k) }
//! ```
//!
//! Optimal costs and prefix sums of the standardized values live in ring
//! buffers of `m + 1` slots, so memory and per-step work are `O(m)`
//! regardless of how long the stream runs.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::costs::{
    point_cost_with, segment_cost_raw, CostModel, PenaltyMode, PenaltyScheme, VARIANCE_FLOOR,
};
use crate::error::{Error, Result};
use crate::seqstats::Baseline;

/// Stored costs are shifted once their magnitude passes this.
const RENORMALIZE_ABOVE: f64 = 1e9;
/// Prefix sums are rebased once the sum of squares passes this.
const REBASE_ABOVE: f64 = 1e6;
/// Relative margin that keeps the logarithm-free bound conservative
/// under rounding.
const PRUNE_SLACK: f64 = 1e-9;

/// Where the typical mean and scale come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BaselineMode {
    /// Tracked online from the burn-in onwards.
    Sequential,
    /// Fixed in advance.
    Known { mu0: f64, sigma0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Shortest admissible collective anomaly, `l`.
    pub min_seg_len: usize,
    /// Longest admissible collective anomaly, `m`.
    pub max_seg_len: usize,
    /// Number of leading observations assigned to the typical regime.
    pub burn_in: usize,
    pub model: CostModel,
    pub penalty: PenaltyScheme,
    pub baseline: BaselineMode,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let l = self.min_seg_len;
        if l < self.model.min_segment_len() {
            return fail(format!(
                "min_seg_len {l} too small for {:?} (need >= {})",
                self.model,
                self.model.min_segment_len()
            ));
        }
        if self.penalty.mode == PenaltyMode::LengthDependent && l < 2 {
            return fail("length-dependent collective penalty needs min_seg_len >= 2".into());
        }
        if self.max_seg_len < l {
            return fail(format!(
                "max_seg_len {} < min_seg_len {l}",
                self.max_seg_len
            ));
        }
        if let CostModel::MeanVariance { gamma } = self.model {
            if !(gamma >= 0.0 && gamma.is_finite()) {
                return fail(format!("gamma must be finite and >= 0, got {gamma}"));
            }
        }
        let lambda = self.penalty.lambda;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return fail(format!("lambda must be finite and >= 0, got {lambda}"));
        }
        match self.baseline {
            BaselineMode::Sequential => {
                if self.burn_in <= l || self.burn_in < 4 {
                    return fail(format!(
                        "sequential baseline needs burn_in > min_seg_len and >= 4, got {}",
                        self.burn_in
                    ));
                }
            }
            BaselineMode::Known { mu0, sigma0 } => {
                if !(sigma0 > 0.0 && sigma0.is_finite() && mu0.is_finite()) {
                    return fail(format!(
                        "known baseline needs finite mu0 and sigma0 > 0, got ({mu0}, {sigma0})"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.penalty.lambda = lambda;
        self
    }
}

/// Decision taken at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Typical,
    Point,
    /// The step closes a collective anomaly whose first observation is
    /// `start`.
    Collective {
        start: u64,
    },
}

impl Label {
    pub fn is_anomalous(&self) -> bool {
        !matches!(self, Label::Typical)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    Point,
    Collective,
}

/// A detected anomaly. Times are 1-based observation indices, burn-in
/// included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyEvent {
    /// Stable identity: updates to an event keep its id.
    pub id: u64,
    pub kind: AnomalyKind,
    pub start: u64,
    /// Last anomalous observation, inclusive.
    pub end: u64,
    pub detected_at: u64,
    /// Segment mean in standardized units (collective only).
    pub seg_mean: Option<f64>,
    /// Segment variance in standardized units (collective only).
    pub seg_var: Option<f64>,
}

impl AnomalyEvent {
    pub fn len(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, start: u64, end: u64) -> bool {
        self.start <= end && start <= self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub t: u64,
    pub label: Label,
    /// Events created or updated at this step.
    pub new_events: Vec<AnomalyEvent>,
    /// A previously emitted labelling was superseded.
    pub revised: bool,
    /// Ids of earlier events absorbed into one of `new_events`.
    pub superseded: Vec<u64>,
}

/// Counters for guarded numerical corner cases.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Updates after which the quartile estimates were crossed.
    pub crossed_quantiles: u64,
    /// Point costs that needed the `γ + x² = 0` guard.
    pub guarded_point_costs: u64,
}

#[derive(Debug, Clone)]
enum Standardizer {
    Sequential(Box<Baseline>),
    Known { mu0: f64, sigma0: f64 },
}

impl Standardizer {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Standardizer::Sequential(b) => b.standardize(x),
            Standardizer::Known { mu0, sigma0 } => (x - mu0) / sigma0,
        }
    }
}

/// Per-index storage for the last `cap` time steps.
#[derive(Debug, Clone)]
struct Window {
    cost: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    label: Vec<Label>,
}

impl Window {
    fn new(cap: usize) -> Self {
        Self {
            cost: vec![0.0; cap],
            s1: vec![0.0; cap],
            s2: vec![0.0; cap],
            label: vec![Label::Typical; cap],
        }
    }

    #[inline]
    fn cap(&self) -> usize {
        self.cost.len()
    }

    #[inline]
    fn slot(&self, t: u64) -> usize {
        (t % self.cap() as u64) as usize
    }
}

/// Streaming detector state.
#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    t: u64,
    window: Window,
    /// `β_C(a)` for `a` in `0..=m`; infinite below `min_seg_len`.
    beta_collective: Vec<f64>,
    beta_point: f64,
    standardizer: Standardizer,
    cost_offset: f64,
    recent: VecDeque<AnomalyEvent>,
    next_id: u64,
    diagnostics: Diagnostics,
}

impl Detector {
    /// Builds a detector from a burn-in of exactly `config.burn_in` raw
    /// values. The burn-in is allocated to the typical regime.
    pub fn new(config: DetectorConfig, burn_in: &[f64]) -> Result<Self> {
        config.validate()?;
        if burn_in.len() != config.burn_in {
            return Err(Error::Config(format!(
                "burn-in has {} values, configuration expects {}",
                burn_in.len(),
                config.burn_in
            )));
        }
        if let Some(&bad) = burn_in.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        let standardizer = match config.baseline {
            BaselineMode::Sequential => {
                Standardizer::Sequential(Box::new(Baseline::from_burn_in(burn_in)?))
            }
            BaselineMode::Known { mu0, sigma0 } => Standardizer::Known { mu0, sigma0 },
        };
        let m = config.max_seg_len;
        let mut beta_collective = vec![f64::INFINITY; m + 1];
        for (a, beta) in beta_collective
            .iter_mut()
            .enumerate()
            .skip(config.min_seg_len)
        {
            *beta = config.penalty.beta_collective(a)?;
        }
        let mut det = Self {
            config,
            t: 0,
            window: Window::new(m + 1),
            beta_collective,
            beta_point: config.penalty.beta_point(),
            standardizer,
            cost_offset: 0.0,
            recent: VecDeque::new(),
            next_id: 0,
            diagnostics: Diagnostics::default(),
        };
        for &raw in burn_in {
            let x = det.standardizer.apply(raw);
            let prev = det.window.slot(det.t);
            let (c, s1, s2) = (
                det.window.cost[prev],
                det.window.s1[prev],
                det.window.s2[prev],
            );
            det.t += 1;
            det.store(c + x * x, s1 + x, s2 + x * x, Label::Typical);
        }
        Ok(det)
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Index of the most recent observation (0 before any data).
    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn diagnostics(&self) -> Diagnostics {
        let mut d = self.diagnostics;
        if let Standardizer::Sequential(b) = &self.standardizer {
            d.crossed_quantiles = b.crossed_updates;
        }
        d
    }

    /// The sequential baseline, if one is being tracked.
    pub fn baseline(&self) -> Option<&Baseline> {
        match &self.standardizer {
            Standardizer::Sequential(b) => Some(b),
            Standardizer::Known { .. } => None,
        }
    }

    /// Current `(mu, sigma)` used for standardization.
    pub fn location_scale(&self) -> (f64, f64) {
        match &self.standardizer {
            Standardizer::Sequential(b) => (b.mu_hat, b.sigma_hat),
            Standardizer::Known { mu0, sigma0 } => (*mu0, *sigma0),
        }
    }

    /// Optimal penalised cost `C(t)` of everything seen so far.
    pub fn current_cost(&self) -> f64 {
        self.window.cost[self.window.slot(self.t)] + self.cost_offset
    }

    pub fn cost_offset(&self) -> f64 {
        self.cost_offset
    }

    /// Indices `k` whose optimal cost is still stored.
    pub fn window_range(&self) -> std::ops::RangeInclusive<u64> {
        self.t.saturating_sub(self.config.max_seg_len as u64)..=self.t
    }

    /// Stored `C(k)` for `k` in [`Self::window_range`], oldest first.
    pub fn window_costs(&self) -> Vec<f64> {
        self.window_range()
            .map(|k| self.window.cost[self.window.slot(k)] + self.cost_offset)
            .collect()
    }

    /// Number of values held, independent of stream length.
    pub fn footprint(&self) -> usize {
        4 * self.window.cap() + self.beta_collective.len() + self.recent.capacity()
    }

    #[inline]
    fn store(&mut self, cost: f64, s1: f64, s2: f64, label: Label) {
        let j = self.window.slot(self.t);
        self.window.cost[j] = cost;
        self.window.s1[j] = s1;
        self.window.s2[j] = s2;
        self.window.label[j] = label;
    }

    /// Processes one raw observation.
    pub fn step(&mut self, x_raw: f64) -> Result<StepOutput> {
        if !x_raw.is_finite() {
            return Err(Error::NonFinite(x_raw));
        }
        if let Standardizer::Sequential(b) = &mut self.standardizer {
            b.update(x_raw);
        }
        let x = self.standardizer.apply(x_raw);
        if self.config.model.point_cost_is_guarded(x) {
            self.diagnostics.guarded_point_costs += 1;
        }

        let t = self.t + 1;
        let prev = self.window.slot(self.t);
        let c_prev = self.window.cost[prev];
        let s1 = self.window.s1[prev] + x;
        let s2 = self.window.s2[prev] + x * x;

        let mut best = c_prev + x * x;
        let mut label = Label::Typical;
        let c_point = c_prev + point_cost_with(x, self.config.model, self.beta_point);
        if c_point < best {
            best = c_point;
            label = Label::Point;
        }
        if let Some((c_seg, k)) = self.best_segment(t, s1, s2, best) {
            if c_seg < best {
                best = c_seg;
                label = Label::Collective { start: k + 1 };
            }
        }

        self.t = t;
        self.store(best, s1, s2, label);
        if best.abs() > RENORMALIZE_ABOVE {
            self.renormalize();
        }
        if s2.abs() > REBASE_ABOVE || s1.abs() > REBASE_ABOVE {
            self.rebase_prefix_sums();
        }
        Ok(self.emit(label))
    }

    /// Minimum over admissible segment starts of
    /// `C(k) + cost(x_{k+1..t}) + β_C(t-k)`, scanning from the shortest
    /// segment so that ties keep the largest `k`.
    fn best_segment(&self, t: u64, s1: f64, s2: f64, incumbent: f64) -> Option<(f64, u64)> {
        let l = self.config.min_seg_len as u64;
        if t < l {
            return None;
        }
        let k_hi = t - l;
        let k_lo = t.saturating_sub(self.config.max_seg_len as u64);
        let w = &self.window;
        let cap = w.cap();
        let mut j = w.slot(k_hi);
        let mut best = f64::INFINITY;
        let mut best_k = None;
        let variance_cost = matches!(self.config.model, CostModel::MeanVariance { .. });
        for k in (k_lo..=k_hi).rev() {
            let a = (t - k) as usize;
            let (sum, sq) = (s1 - w.s1[j], s2 - w.s2[j]);
            let fixed = w.cost[j] + self.beta_collective[a];
            let c = if variance_cost {
                let n = a as f64;
                let v = ((sq - sum * sum / n) / n).max(VARIANCE_FLOOR);
                // ln v >= 1 - 1/v, so the logarithm is only needed when
                // this bound could still win.
                let bar = best.min(incumbent);
                let lower = fixed + n * (2.0 - 1.0 / v);
                if lower - PRUNE_SLACK * (1.0 + bar.abs()) > bar {
                    f64::INFINITY
                } else {
                    fixed + n * (v.ln() + 1.0)
                }
            } else {
                fixed + segment_cost_raw(a, sum, sq, CostModel::MeanOnly)
            };
            if c < best {
                best = c;
                best_k = Some(k);
            }
            j = if j == 0 { cap - 1 } else { j - 1 };
        }
        best_k.map(|k| (best, k))
    }

    /// Subtracts the smallest stored cost from every stored cost.
    pub fn renormalize(&mut self) {
        let range = self.window_range();
        let lo = range
            .clone()
            .map(|k| self.window.cost[self.window.slot(k)])
            .fold(f64::INFINITY, f64::min);
        for k in range {
            let j = self.window.slot(k);
            self.window.cost[j] -= lo;
        }
        self.cost_offset += lo;
    }

    fn rebase_prefix_sums(&mut self) {
        let range = self.window_range();
        let base = self.window.slot(*range.start());
        let (b1, b2) = (self.window.s1[base], self.window.s2[base]);
        for k in range {
            let j = self.window.slot(k);
            self.window.s1[j] -= b1;
            self.window.s2[j] -= b2;
        }
    }

    fn emit(&mut self, label: Label) -> StepOutput {
        let t = self.t;
        let horizon = self.config.max_seg_len as u64;
        // Anything ending before t - m + 1 can no longer be overlapped.
        while self.recent.front().is_some_and(|e| e.end + horizon <= t) {
            self.recent.pop_front();
        }
        let mut out = StepOutput {
            t,
            label,
            new_events: Vec::new(),
            revised: false,
            superseded: Vec::new(),
        };
        match label {
            Label::Typical => {}
            Label::Point => {
                let ev = AnomalyEvent {
                    id: self.fresh_id(),
                    kind: AnomalyKind::Point,
                    start: t,
                    end: t,
                    detected_at: t,
                    seg_mean: None,
                    seg_var: None,
                };
                self.recent.push_back(ev);
                out.new_events.push(ev);
            }
            Label::Collective { start } => {
                let (mean, var) = self.segment_stats(start, t);
                let mut keep: Option<AnomalyEvent> = None;
                let mut absorbed = 0usize;
                while let Some(back) = self.recent.back().copied() {
                    if back.end < start {
                        break;
                    }
                    self.recent.pop_back();
                    absorbed += 1;
                    match keep {
                        Some(k)
                            if back.kind == AnomalyKind::Collective
                                && back.detected_at <= k.detected_at =>
                        {
                            out.superseded.push(k.id);
                            keep = Some(back);
                        }
                        None if back.kind == AnomalyKind::Collective => keep = Some(back),
                        _ => out.superseded.push(back.id),
                    }
                }
                let ev = match keep {
                    Some(k) => {
                        out.revised = absorbed > 1 || k.start != start;
                        AnomalyEvent {
                            start,
                            end: t,
                            seg_mean: Some(mean),
                            seg_var: Some(var),
                            ..k
                        }
                    }
                    None => {
                        out.revised = absorbed > 0;
                        AnomalyEvent {
                            id: self.fresh_id(),
                            kind: AnomalyKind::Collective,
                            start,
                            end: t,
                            detected_at: t,
                            seg_mean: Some(mean),
                            seg_var: Some(var),
                        }
                    }
                };
                self.recent.push_back(ev);
                out.new_events.push(ev);
            }
        }
        out
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Mean and variance of the standardized values `start..=end`, both
    /// within the window.
    fn segment_stats(&self, start: u64, end: u64) -> (f64, f64) {
        let (j0, j1) = (self.window.slot(start - 1), self.window.slot(end));
        let n = (end - start + 1) as f64;
        let sum = self.window.s1[j1] - self.window.s1[j0];
        let sq = self.window.s2[j1] - self.window.s2[j0];
        let mean = sum / n;
        (mean, ((sq - sum * sum / n) / n).max(0.0))
    }

    /// Sum and sum of squares of the standardized values in `(k, t]`,
    /// recovered from the prefix sums.
    pub fn window_summary(&self, k: u64) -> Option<(f64, f64)> {
        if !self.window_range().contains(&k) {
            return None;
        }
        let (j0, j1) = (self.window.slot(k), self.window.slot(self.t));
        Some((
            self.window.s1[j1] - self.window.s1[j0],
            self.window.s2[j1] - self.window.s2[j0],
        ))
    }

    /// The optimal labelling of the stored window, recovered by following
    /// the back-pointers from the current time. Events carry
    /// `detected_at = t`.
    pub fn current_segmentation(&self) -> Vec<AnomalyEvent> {
        let oldest = *self.window_range().start();
        let mut out = Vec::new();
        let mut k = self.t;
        while k > oldest {
            match self.window.label[self.window.slot(k)] {
                Label::Typical => k -= 1,
                Label::Point => {
                    out.push(AnomalyEvent {
                        id: out.len() as u64,
                        kind: AnomalyKind::Point,
                        start: k,
                        end: k,
                        detected_at: self.t,
                        seg_mean: None,
                        seg_var: None,
                    });
                    k -= 1;
                }
                Label::Collective { start } => {
                    if start <= oldest {
                        break;
                    }
                    let (mean, var) = self.segment_stats(start, k);
                    out.push(AnomalyEvent {
                        id: out.len() as u64,
                        kind: AnomalyKind::Collective,
                        start,
                        end: k,
                        detected_at: self.t,
                        seg_mean: Some(mean),
                        seg_var: Some(var),
                    });
                    k = start - 1;
                }
            }
        }
        out.reverse();
        for (i, ev) in out.iter_mut().enumerate() {
            ev.id = i as u64;
        }
        out
    }

    /// Steps through `values`, collecting every output.
    pub fn run(&mut self, values: &[f64]) -> Result<Vec<StepOutput>> {
        values.iter().map(|&x| self.step(x)).collect()
    }
}

/// Folds a stream of [`StepOutput`]s into the current list of events,
/// applying updates and dropping superseded events.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    events: Vec<AnomalyEvent>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn apply(&mut self, out: &StepOutput) {
        if !out.superseded.is_empty() {
            self.events.retain(|e| !out.superseded.contains(&e.id));
        }
        for ev in &out.new_events {
            match self.events.iter_mut().rev().find(|e| e.id == ev.id) {
                Some(slot) => *slot = *ev,
                None => self.events.push(*ev),
            }
        }
    }

    pub fn events(&self) -> &[AnomalyEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<AnomalyEvent> {
        self.events
    }
}

/// Outcome of waiting for a detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detection {
    /// Observations from the change to the first anomalous label.
    Delay(u64),
    /// The stream ended after this many post-change observations without
    /// a detection.
    Censored(u64),
}

impl Detection {
    pub fn value(&self) -> u64 {
        match *self {
            Detection::Delay(d) | Detection::Censored(d) => d,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, Detection::Censored(_))
    }
}

/// Delay from `change_at` to the first non-typical label strictly after it.
pub fn detection_time<'a, I>(outputs: I, change_at: u64) -> Detection
where
    I: IntoIterator<Item = &'a StepOutput>,
{
    let mut last = change_at;
    for out in outputs {
        last = last.max(out.t);
        if out.t > change_at && out.label.is_anomalous() {
            return Detection::Delay(out.t - change_at);
        }
    }
    Detection::Censored(last - change_at)
}

/// Smallest maximum segment length that keeps the delay for a mean shift
/// of `mu_min` close to the unrestricted one: `⌈λ(1+ε)/μ²⌉`.
pub fn recommended_max_segment(lambda: f64, mu_min: f64, eps: f64) -> Result<usize> {
    if mu_min == 0.0 || !mu_min.is_finite() {
        return Err(Error::Config(format!(
            "mean shift must be finite and non-zero, got {mu_min}"
        )));
    }
    if eps < 0.0 {
        return Err(Error::Config(format!("slack must be >= 0, got {eps}")));
    }
    Ok((lambda / (mu_min * mu_min) * (1.0 + eps)).ceil() as usize)
}
