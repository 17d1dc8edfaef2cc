use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use scapa::simlab::{
    arl_with_inflation, estimate_add, roc_curve, roc_rows, write_csv, Method, MonteCarloConfig,
    MultiAnomalyConfig, RocConfig,
};
use scapa::{BaselineMode, CostModel, DetectorConfig, PenaltyScheme};
use serde::Serialize;

use crate::args::{BaselineArg, ModelArg, PenaltyArg, SimulateArgs, Study};
use crate::error::CliError;
use crate::stream::config_line;

/// Parses `start:stop:step` (inclusive), a comma-separated list, or a
/// single number.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("invalid grid {spec:?}"));
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(bad)
    };
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if step.is_nan() || step <= 0.0 || stop < start {
                return Err(bad());
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| start + i as f64 * step).collect()
        }
        [list] => list.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(bad()),
    };
    if grid.is_empty() {
        return Err(bad());
    }
    Ok(grid)
}

fn detector(args: &SimulateArgs) -> Result<DetectorConfig, CliError> {
    let roc = args.study == Study::Roc;
    let model = match args.model.unwrap_or(if roc {
        ModelArg::MeanVariance
    } else {
        ModelArg::MeanOnly
    }) {
        ModelArg::MeanVariance => CostModel::default(),
        ModelArg::MeanOnly => CostModel::MeanOnly,
    };
    let penalty = args.penalty.unwrap_or(if roc {
        PenaltyArg::LengthDependent
    } else {
        PenaltyArg::Threshold
    });
    let baseline = match args.baseline.unwrap_or(if roc {
        BaselineArg::Sequential
    } else {
        BaselineArg::Known
    }) {
        BaselineArg::Sequential => BaselineMode::Sequential,
        BaselineArg::Known => BaselineMode::Known {
            mu0: 0.0,
            sigma0: 1.0,
        },
    };
    let cfg = DetectorConfig {
        min_seg_len: args.min_seg_len.unwrap_or(2),
        max_seg_len: args.max_seg_len.unwrap_or(if roc { 500 } else { 1000 }),
        burn_in: args.burn_in.unwrap_or(if roc { 100 } else { 1000 }),
        model,
        penalty: PenaltyScheme::new(1.0, penalty.into())?,
        baseline,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_table<T: Serialize>(dir: &PathBuf, name: &str, rows: &[T]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let file = File::create(&path)?;
    write_csv(BufWriter::new(file), rows)?;
    Ok(path)
}

/// Runs the requested study and writes its table into `args.out`.
/// Returns the path written.
pub fn cmd_simulate<W: Write, L: Write>(
    args: &SimulateArgs,
    out: &mut W,
    log: &mut L,
) -> Result<PathBuf, CliError> {
    let clock = Instant::now();
    let lambdas = parse_grid(&args.lambda)?;
    let phis = parse_grid(&args.phi)?;
    if lambdas.iter().any(|&l| l < 0.0) {
        return Err(CliError::Config("lambda values must be >= 0".into()));
    }
    let det = detector(args)?;
    writeln!(
        log,
        "{}",
        config_line(
            &det,
            args.seed,
            &format!(" study={:?} reps={}", args.study, args.reps)
        )
    )?;
    let mc = MonteCarloConfig {
        detector: det,
        phi: 0.0,
        cap: args.cap,
        bootstrap: args.bootstrap,
    };

    let (path, rows) = match args.study {
        Study::Arl => {
            let rows =
                arl_with_inflation(&mc, &phis, &lambdas, args.inflate, args.reps, args.seed)?;
            (write_table(&args.out, "arl.csv", &rows)?, rows.len())
        }
        Study::Inflation => {
            let rows =
                arl_with_inflation(&mc, &phis, &lambdas, args.inflate, args.reps, args.seed)?;
            (write_table(&args.out, "inflation.csv", &rows)?, rows.len())
        }
        Study::Add => {
            let deltas = parse_grid(&args.delta)?;
            let mut rows = Vec::new();
            for &phi in &phis {
                let mut cfg = mc;
                cfg.phi = phi;
                if args.inflate {
                    cfg.detector.penalty.inflation =
                        scapa::costs::inflation_factor(scapa::Ar1Estimate::new(phi)?);
                }
                rows.extend(estimate_add(&cfg, &lambdas, &deltas, args.reps, args.seed)?);
            }
            (write_table(&args.out, "add.csv", &rows)?, rows.len())
        }
        Study::Roc => {
            let methods = args
                .method
                .split(',')
                .map(|m| m.parse::<Method>().map_err(CliError::from))
                .collect::<Result<Vec<_>, _>>()?;
            let generator =
                MultiAnomalyConfig::default().with_points(args.point_prob, args.point_df);
            let cfg = RocConfig {
                detector: det,
                generator,
                n: args.n,
            };
            let mut rows = Vec::new();
            for method in methods {
                rows.extend(roc_rows(
                    method,
                    &roc_curve(method, &cfg, &lambdas, args.reps, args.seed)?,
                ));
            }
            (write_table(&args.out, "roc.csv", &rows)?, rows.len())
        }
    };
    writeln!(
        out,
        "wrote {} ({rows} rows) in {:.2}s",
        path.display(),
        clock.elapsed().as_secs_f64()
    )?;
    Ok(path)
}
