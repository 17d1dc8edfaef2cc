//! Sequential detection and classification of point and collective
//! anomalies in a univariate stream.
//!
//! The crate is organised around four pieces:
//!
//! * [`seqstats`] tracks the typical mean and scale robustly from quantile
//!   estimates that are updated one observation at a time.
//! * [`costs`] prices typical observations, point anomalies and collective
//!   segments, and turns a single penalty parameter into per-anomaly
//!   penalties.
//! * [`detector`] runs the bounded-memory dynamic programme online.
//! * [`reference`] holds the offline solver and an exhaustive oracle used to
//!   check it, and [`simlab`] the Monte Carlo experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod costs;
pub mod detector;
mod error;
pub mod reference;
pub mod seqstats;
pub mod simlab;

pub use costs::{CostModel, PenaltyMode, PenaltyScheme, SegmentSummary};
pub use detector::{
    detection_time, recommended_max_segment, AnomalyEvent, AnomalyKind, BaselineMode, Detection,
    Detector, DetectorConfig, EventLog, Label, StepOutput,
};
pub use error::{Error, Result};
pub use reference::{brute_force_oracle, capa_offline, cusum_mode, OfflineResult};
pub use seqstats::{estimate_ar1, Ar1Estimate, Baseline, QuantileState};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/baseline.md")]
    mod baseline {}
    #[doc = include_str!("../../../book/src/costs.md")]
    mod costs {}
    #[doc = include_str!("../../../book/src/detector.md")]
    mod detector {}
    #[doc = include_str!("../../../book/src/offline.md")]
    mod offline {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
