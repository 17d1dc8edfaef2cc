//! The machine-temperature experiment from the Numenta Anomaly Benchmark.

use std::fs::File;
use std::io::{BufReader, Write};

use chrono::NaiveDateTime;
use log::warn;
use scapa::{
    AnomalyEvent, AnomalyKind, BaselineMode, CostModel, Detector, DetectorConfig, EventLog,
    PenaltyMode, PenaltyScheme,
};

use crate::args::NabArgs;
use crate::error::CliError;
use crate::input::{parse_datetime, read_all, Timestamp};
use crate::stream::{config_line, resolve_inflation, EventRecord};

/// Row count of `machine_temperature_system_failure.csv`.
pub const NAB_ROWS: usize = 22_695;

/// Hand-labelled anomaly windows: (start, end, reason).
pub const NAB_WINDOWS: [(&str, &str, &str); 3] = [
    (
        "2013-12-15 17:50:00",
        "2013-12-17 17:00:00",
        "planned shutdown",
    ),
    (
        "2014-01-27 14:20:00",
        "2014-01-29 13:30:00",
        "onset of problem",
    ),
    (
        "2014-02-07 14:55:00",
        "2014-02-09 14:05:00",
        "catastrophic system failure",
    ),
];

#[derive(Debug, Clone, PartialEq)]
pub struct WindowResult {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub reason: &'static str,
    /// Collective events overlapping the window.
    pub events: Vec<AnomalyEvent>,
    /// Earliest detection among them.
    pub first_detection: Option<NaiveDateTime>,
}

impl WindowResult {
    pub fn hit(&self) -> bool {
        !self.events.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NabReport {
    pub n: usize,
    pub burn_in: usize,
    pub phi_hat: Option<f64>,
    pub config: DetectorConfig,
    pub events: Vec<AnomalyEvent>,
    pub windows: Vec<WindowResult>,
    /// Events of either kind that overlap no window.
    pub outside: usize,
    /// Timestamps of every row, for mapping event indices.
    pub times: Vec<NaiveDateTime>,
}

impl NabReport {
    pub fn all_hit(&self) -> bool {
        self.windows.iter().all(WindowResult::hit)
    }

    pub fn time(&self, t: u64) -> NaiveDateTime {
        self.times[t as usize - 1]
    }
}

fn window(start: &str, end: &str) -> (NaiveDateTime, NaiveDateTime) {
    (
        parse_datetime(start).expect("valid constant"),
        parse_datetime(end).expect("valid constant"),
    )
}

/// Runs the experiment on parsed rows.
pub fn nab_report(
    times: Vec<NaiveDateTime>,
    values: &[f64],
    args: &NabArgs,
) -> Result<NabReport, CliError> {
    let n = values.len();
    if n != NAB_ROWS {
        warn!("expected {NAB_ROWS} rows, found {n}; proceeding");
    }
    if !(args.burn_in_frac > 0.0 && args.burn_in_frac < 1.0) {
        return Err(CliError::Config(format!(
            "--burn-in-frac must lie in (0, 1), got {}",
            args.burn_in_frac
        )));
    }
    let n0 = (args.burn_in_frac * n as f64).floor() as usize;
    if n0 >= n {
        return Err(CliError::Config(format!(
            "burn-in of {n0} rows leaves nothing to monitor"
        )));
    }
    let (kappa, phi_hat) = resolve_inflation(args.phi, args.phi.is_none(), &values[..n0])?;
    let config = DetectorConfig {
        min_seg_len: args.min_seg_len,
        max_seg_len: args.max_seg_len,
        burn_in: n0,
        model: CostModel::default(),
        penalty: PenaltyScheme::inflated((n as f64).ln(), kappa, PenaltyMode::Constant)?,
        baseline: BaselineMode::Sequential,
    };
    let mut det = Detector::new(config, &values[..n0])?;
    let mut log = EventLog::new();
    for &x in &values[n0..] {
        log.apply(&det.step(x)?);
    }
    let events = log.into_events();

    let time = |t: u64| times[t as usize - 1];
    let mut windows = Vec::new();
    for (s, e, reason) in NAB_WINDOWS {
        let (start, end) = window(s, e);
        let hits: Vec<AnomalyEvent> = events
            .iter()
            .filter(|ev| {
                ev.kind == AnomalyKind::Collective && time(ev.start) <= end && start <= time(ev.end)
            })
            .copied()
            .collect();
        let first_detection = hits.iter().map(|ev| time(ev.detected_at)).min();
        windows.push(WindowResult {
            start,
            end,
            reason,
            events: hits,
            first_detection,
        });
    }
    let outside = events
        .iter()
        .filter(|ev| {
            NAB_WINDOWS.iter().all(|(s, e, _)| {
                let (start, end) = window(s, e);
                time(ev.end) < start || end < time(ev.start)
            })
        })
        .count();
    Ok(NabReport {
        n,
        burn_in: n0,
        phi_hat,
        config,
        events,
        windows,
        outside,
        times,
    })
}

pub fn load_nab(args: &NabArgs) -> Result<(Vec<NaiveDateTime>, Vec<f64>), CliError> {
    let file = File::open(&args.path).map_err(|source| CliError::Missing {
        path: args.path.clone(),
        source,
    })?;
    let records = read_all(BufReader::new(file), false)?;
    let mut times = Vec::with_capacity(records.len());
    let mut values = Vec::with_capacity(records.len());
    for (i, rec) in records.into_iter().enumerate() {
        let parsed = match &rec.timestamp {
            Timestamp::Text(s) => parse_datetime(s),
            Timestamp::Index(_) => None,
        };
        let Some(t) = parsed else {
            return Err(CliError::Parse {
                line: i as u64 + 1,
                message: format!("timestamp {} is not a date", rec.timestamp),
            });
        };
        times.push(t);
        values.push(rec.value);
    }
    Ok((times, values))
}

pub fn write_report<W: Write>(report: &NabReport, out: &mut W) -> std::io::Result<()> {
    for (i, w) in report.windows.iter().enumerate() {
        match w.first_detection {
            Some(d) => writeln!(
                out,
                "window {} [{} .. {}] {}: hit, first detection {} ({} event(s))",
                i + 1,
                w.start,
                w.end,
                w.reason,
                d,
                w.events.len()
            )?,
            None => writeln!(
                out,
                "window {} [{} .. {}] {}: miss",
                i + 1,
                w.start,
                w.end,
                w.reason
            )?,
        }
    }
    writeln!(out, "events outside windows: {}", report.outside)?;
    writeln!(out, "total events: {}", report.events.len())
}

/// Runs the experiment on the file in `args`; returns the exit status
/// (0 when every window is hit, 1 otherwise).
pub fn cmd_nab<W: Write, L: Write>(
    args: &NabArgs,
    out: &mut W,
    log: &mut L,
) -> Result<i32, CliError> {
    let (times, values) = load_nab(args)?;
    let report = nab_report(times, &values, args)?;
    let extra = format!(
        " n={} ln(n)={:.4} phi_hat={}",
        report.n,
        (report.n as f64).ln(),
        report.phi_hat.map_or("given".into(), |p| format!("{p:.4}"))
    );
    writeln!(log, "{}", config_line(&report.config, 0, &extra))?;
    if args.events {
        let fmt = |t: u64| Timestamp::Text(report.time(t).format("%Y-%m-%d %H:%M:%S").to_string());
        for ev in &report.events {
            serde_json::to_writer(&mut *out, &EventRecord::new(ev, false, fmt))?;
            out.write_all(b"\n")?;
        }
    }
    write_report(&report, out)?;
    Ok(if report.all_hit() { 0 } else { 1 })
}
