use std::collections::VecDeque;
use std::io::{Read, Write};

use scapa::costs::inflation_factor;
use scapa::reference::robust_location_scale;
use scapa::{
    estimate_ar1, AnomalyEvent, AnomalyKind, Ar1Estimate, BaselineMode, Detector, DetectorConfig,
    PenaltyScheme,
};
use serde::{Deserialize, Serialize};

use crate::args::{BaselineArg, StreamArgs};
use crate::error::CliError;
use crate::input::{RecordReader, StreamRecord, Timestamp};

/// One emitted or updated event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: AnomalyKind,
    pub start_ts: Timestamp,
    pub end_ts: Timestamp,
    pub detected_ts: Timestamp,
    pub revised: bool,
    pub seg_mean: Option<f64>,
    pub seg_var: Option<f64>,
}

impl EventRecord {
    pub fn new(ev: &AnomalyEvent, revised: bool, ts: impl Fn(u64) -> Timestamp) -> Self {
        Self {
            kind: ev.kind,
            start_ts: ts(ev.start),
            end_ts: ts(ev.end),
            detected_ts: ts(ev.detected_at),
            revised: revised && ev.kind == AnomalyKind::Collective,
            seg_mean: ev.seg_mean,
            seg_var: ev.seg_var,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamSummary {
    pub observations: u64,
    pub burn_in: usize,
    pub point_events: u64,
    pub collective_events: u64,
    pub revisions: u64,
}

/// `2 ln(target)`: the penalty whose false-alarm run length is about
/// `target` observations.
pub fn lambda_for_arl(target: f64) -> Result<f64, CliError> {
    if !(target > 1.0 && target.is_finite()) {
        return Err(CliError::Config(format!(
            "--arl-target must be finite and > 1, got {target}"
        )));
    }
    Ok(2.0 * target.ln())
}

/// Penalty multiplier from `--phi` or, with `--auto-phi`, from the
/// standardized burn-in. Also returns the coefficient used.
pub fn resolve_inflation(
    phi: Option<f64>,
    auto: bool,
    burn_in: &[f64],
) -> Result<(f64, Option<f64>), CliError> {
    let phi = match (phi, auto) {
        (Some(p), _) => Some(Ar1Estimate::new(p)?),
        (None, true) => {
            let (mu, sigma) = robust_location_scale(burn_in)?;
            let z: Vec<f64> = burn_in.iter().map(|x| (x - mu) / sigma).collect();
            Some(estimate_ar1(&z)?)
        }
        (None, false) => None,
    };
    Ok(phi.map_or((1.0, None), |p| (inflation_factor(p), Some(p.phi_hat))))
}

pub fn config_line(cfg: &DetectorConfig, seed: u64, extra: &str) -> String {
    let pen = &cfg.penalty;
    let beta_c = pen
        .beta_collective(cfg.min_seg_len.max(2))
        .map_or_else(|e| e.to_string(), |b| format!("{b:.6}"));
    let baseline = match cfg.baseline {
        BaselineMode::Sequential => "sequential".to_string(),
        BaselineMode::Known { mu0, sigma0 } => format!("known({mu0}, {sigma0})"),
    };
    let (model, gamma) = match cfg.model {
        scapa::CostModel::MeanVariance { gamma } => ("mean-variance", format!("{gamma}")),
        scapa::CostModel::MeanOnly => ("mean-only", "none".into()),
    };
    format!(
        "config: lambda={:.6} kappa={:.6} beta_point={:.6} beta_collective_mode={:?} beta_collective(l)={beta_c} \
         l={} m={} n0={} model={model} gamma={gamma} baseline={baseline} seed={seed}{extra}",
        pen.lambda,
        pen.inflation,
        pen.beta_point(),
        pen.mode,
        cfg.min_seg_len,
        cfg.max_seg_len,
        cfg.burn_in,
    )
}

/// Most recent timestamps, enough to label any event the detector can
/// still report.
struct TimestampRing {
    first: u64,
    items: VecDeque<Timestamp>,
    cap: usize,
}

impl TimestampRing {
    fn new(cap: usize) -> Self {
        Self {
            first: 1,
            items: VecDeque::with_capacity(cap),
            cap,
        }
    }

    fn push(&mut self, ts: Timestamp) {
        if self.items.len() == self.cap {
            self.items.pop_front();
            self.first += 1;
        }
        self.items.push_back(ts);
    }

    fn get(&self, t: u64) -> Timestamp {
        self.items[(t - self.first) as usize].clone()
    }
}

fn build_config(
    args: &StreamArgs,
    n0: usize,
    burn: &[f64],
) -> Result<(DetectorConfig, Option<f64>), CliError> {
    let lambda = match (args.lambda, args.arl_target) {
        (Some(l), _) => l,
        (None, Some(t)) => lambda_for_arl(t)?,
        (None, None) => {
            return Err(CliError::Config(
                "one of --lambda or --arl-target is required".into(),
            ))
        }
    };
    let (kappa, phi) = resolve_inflation(args.phi, args.auto_phi, burn)?;
    let cfg = DetectorConfig {
        min_seg_len: args.min_seg_len,
        max_seg_len: args.max_seg_len,
        burn_in: n0,
        model: args.cost_model()?,
        penalty: PenaltyScheme::inflated(lambda, kappa, args.penalty.into())?,
        baseline: match args.baseline {
            BaselineArg::Sequential => BaselineMode::Sequential,
            BaselineArg::Known => BaselineMode::Known {
                mu0: args.mu0,
                sigma0: args.sigma0,
            },
        },
    };
    cfg.validate()?;
    Ok((cfg, phi))
}

/// Runs the detector over `input`, writing one JSON line per emitted or
/// updated event to `out` and the configuration and summary to `log`.
pub fn cmd_stream<R: Read, W: Write, L: Write>(
    args: &StreamArgs,
    input: R,
    out: &mut W,
    log: &mut L,
) -> Result<StreamSummary, CliError> {
    let mut reader = RecordReader::new(input, args.index_time);
    let mut buffered: VecDeque<StreamRecord> = VecDeque::new();
    let n0 = match args.burn_in_frac {
        Some(frac) => {
            if !(frac > 0.0 && frac < 1.0) {
                return Err(CliError::Config(format!(
                    "--burn-in-frac must lie in (0, 1), got {frac}"
                )));
            }
            for rec in reader.by_ref() {
                buffered.push_back(rec?);
            }
            (frac * buffered.len() as f64).floor() as usize
        }
        None => args.burn_in,
    };
    while buffered.len() <= n0 {
        match reader.next() {
            Some(rec) => buffered.push_back(rec?),
            None => {
                return Err(CliError::Config(format!(
                    "burn-in of {n0} observations leaves nothing to monitor in a stream of {}",
                    buffered.len()
                )))
            }
        }
    }

    let burn: Vec<f64> = buffered.iter().take(n0).map(|r| r.value).collect();
    let (cfg, phi) = build_config(args, n0, &burn)?;
    let extra = phi.map_or(String::new(), |p| format!(" phi={p:.6}"));
    writeln!(log, "{}", config_line(&cfg, args.seed, &extra))?;
    let mut det = Detector::new(cfg, &burn)?;

    let mut times = TimestampRing::new(cfg.max_seg_len + 1);
    for rec in buffered.drain(..n0) {
        times.push(rec.timestamp);
    }
    let mut summary = StreamSummary {
        burn_in: n0,
        ..Default::default()
    };
    let records = buffered.into_iter().map(Ok).chain(reader);
    for rec in records {
        let rec = rec?;
        times.push(rec.timestamp);
        let step = det.step(rec.value)?;
        summary.observations += 1;
        for ev in &step.new_events {
            let record = EventRecord::new(ev, step.revised, |t| times.get(t));
            serde_json::to_writer(&mut *out, &record)?;
            out.write_all(b"\n")?;
            match ev.kind {
                AnomalyKind::Point => summary.point_events += 1,
                AnomalyKind::Collective => summary.collective_events += 1,
            }
        }
        summary.revisions += step.revised as u64;
    }
    out.flush()?;
    writeln!(
        log,
        "summary: observations={} burn_in={} point_events={} collective_events={} revisions={}",
        summary.observations,
        summary.burn_in,
        summary.point_events,
        summary.collective_events,
        summary.revisions
    )?;
    Ok(summary)
}
