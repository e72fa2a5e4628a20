//! Trajectories, parameter grids and bisection for the transfer threshold.
//!
//! Every run of a sweep is seeded from `(base_seed, run index)` only, so the
//! same run sees the same jittered scenario at every grid point (common
//! random numbers). Runs execute on a rayon pool and are aggregated in run
//! order, so results never depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Scenario;
use crate::dynamics::advance;
use crate::error::{ConfigError, SimError, ValidationError};
use crate::metrics::{
    compute_frame, concentration_index, irreversibility_probability, sovereign, FrameOptions,
    MetricsFrame,
};
use crate::model::{SystemState, MAX_STEPS};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("tol must be > 0")]
    InvalidTolerance,
    #[error(
        "no bracket: {} (rate {rate_lo} at {lo}, {rate_hi} at {hi}, target {target})",
        no_bracket_reason(*rate_lo, *rate_hi, *target)
    )]
    NoBracket {
        lo: f64,
        hi: f64,
        rate_lo: f64,
        rate_hi: f64,
        target: f64,
    },
    #[error("transfer rate is not monotone on the bracket; measurements (value, rate): {measurements:?}")]
    NonMonotone { measurements: Vec<(f64, f64)> },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

fn no_bracket_reason(rate_lo: f64, rate_hi: f64, target: f64) -> String {
    if rate_lo == 0.0 && rate_hi == 0.0 {
        "transfer never occurs".into()
    } else if rate_lo < target && rate_hi < target {
        format!("transfer rate stays below {target}")
    } else {
        format!("transfer rate stays at or above {target}")
    }
}

/// Advances `horizon` times and returns a frame for every step, including
/// the initial one.
pub fn run_trajectory(state: &SystemState, horizon: u64) -> Result<Vec<MetricsFrame>, SimError> {
    run_trajectory_with(state, horizon, FrameOptions::default())
}

pub fn run_trajectory_with(
    state: &SystemState,
    horizon: u64,
    options: FrameOptions,
) -> Result<Vec<MetricsFrame>, SimError> {
    if horizon > MAX_STEPS {
        return Err(SimError::HorizonTooLong(horizon));
    }
    let mut frames = Vec::with_capacity(horizon as usize + 1);
    let mut current = state.clone();
    frames.push(compute_frame(&current, options));
    for _ in 0..horizon {
        current = advance(&current)?.0;
        frames.push(compute_frame(&current, options));
    }
    Ok(frames)
}

/// What a sweep keeps from one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// First step at which an AI node became the sovereignty node.
    pub first_transfer: Option<u64>,
    pub final_concentration: f64,
    pub final_p_irr: f64,
}

pub fn summarize_run(state: &SystemState, horizon: u64) -> Result<RunSummary, SimError> {
    if horizon > MAX_STEPS {
        return Err(SimError::HorizonTooLong(horizon));
    }
    let mut current = state.clone();
    let mut first_transfer = sovereign(&current).is_ai.then_some(current.step);
    for _ in 0..horizon {
        current = advance(&current)?.0;
        if first_transfer.is_none() && sovereign(&current).is_ai {
            first_transfer = Some(current.step);
        }
    }
    Ok(RunSummary {
        first_transfer,
        final_concentration: concentration_index(&current.shares()),
        final_p_irr: irreversibility_probability(&current).p_irr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Grid {
    Values { values: Vec<f64> },
    Linear { lo: f64, hi: f64, count: usize },
    Log { lo: f64, hi: f64, count: usize },
}

impl Grid {
    /// Parses `lo:hi:count` or `lo:hi:count:log`.
    pub fn parse(text: &str) -> Result<Grid, SweepError> {
        let bad = |m: &str| SweepError::InvalidGrid(format!("{m} (got {text:?})"));
        let parts: Vec<&str> = text.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(bad("expected lo:hi:count[:log]"));
        }
        let lo: f64 = parts[0]
            .trim()
            .parse()
            .map_err(|_| bad("lo is not a number"))?;
        let hi: f64 = parts[1]
            .trim()
            .parse()
            .map_err(|_| bad("hi is not a number"))?;
        let count: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| bad("count is not an integer"))?;
        let grid = match parts.get(3).map(|s| s.trim()) {
            None | Some("lin") | Some("linear") => Grid::Linear { lo, hi, count },
            Some("log") => Grid::Log { lo, hi, count },
            Some(_) => return Err(bad("scale must be lin or log")),
        };
        grid.points()?;
        Ok(grid)
    }

    pub fn points(&self) -> Result<Vec<f64>, SweepError> {
        let check = |lo: f64, hi: f64, count: usize| {
            if count < 1 {
                return Err(SweepError::InvalidGrid("count >= 1 required".into()));
            }
            if !(lo < hi) {
                return Err(SweepError::InvalidGrid("lo < hi required".into()));
            }
            Ok(())
        };
        match *self {
            Grid::Values { ref values } => {
                if values.is_empty() {
                    return Err(SweepError::InvalidGrid("count >= 1 required".into()));
                }
                Ok(values.clone())
            }
            Grid::Linear { lo, hi, count } => {
                check(lo, hi, count)?;
                Ok(linspace(lo, hi, count))
            }
            Grid::Log { lo, hi, count } => {
                check(lo, hi, count)?;
                if lo <= 0.0 {
                    return Err(SweepError::InvalidGrid("log grid needs lo > 0".into()));
                }
                Ok(linspace(lo.ln(), hi.ln(), count)
                    .into_iter()
                    .map(f64::exp)
                    .collect())
            }
        }
    }
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (count - 1) as f64;
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                lo + step * i as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter_path: String,
    pub grid: Grid,
    pub runs_per_point: usize,
    pub horizon: u64,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param_value: f64,
    pub transfer_rate: f64,
    /// NaN when no run transferred.
    pub mean_first_transfer_step: f64,
    pub final_concentration_mean: f64,
    pub final_p_irr_mean: f64,
    pub runs: usize,
}

/// Worker pool settings. `threads == 0` uses every core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Workers {
    pub threads: usize,
}

impl Workers {
    pub fn new(threads: usize) -> Self {
        Workers { threads }
    }

    /// Reads `SOVSIM_THREADS`; unset or unparsable means all cores.
    pub fn from_env() -> Self {
        let threads = std::env::var("SOVSIM_THREADS")
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(0);
        Workers { threads }
    }

    pub fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Result<Vec<R>, SweepError>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| SweepError::Pool(e.to_string()))?;
        Ok(pool.install(|| items.into_par_iter().map(f).collect()))
    }
}

pub fn run_seed(base_seed: u64, run: usize) -> u64 {
    derive_seed(&[base_seed, run as u64])
}

/// Runs `runs` jittered realizations of `scenario` with `path` set to
/// `value` and aggregates them.
pub fn evaluate_point(
    scenario: &Scenario,
    path: &str,
    value: f64,
    runs: usize,
    horizon: u64,
    base_seed: u64,
    workers: Workers,
) -> Result<SweepRow, SweepError> {
    if runs < 1 {
        return Err(SweepError::InvalidGrid(
            "runs_per_point >= 1 required".into(),
        ));
    }
    let sc = scenario.with_parameter(path, value)?;
    let summaries = workers.map(
        (0..runs).collect(),
        |run| -> Result<RunSummary, SweepError> {
            let state = sc.build(run_seed(base_seed, run))?;
            Ok(summarize_run(&state, horizon)?)
        },
    )?;
    let summaries = summaries.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(value, &summaries))
}

fn aggregate(value: f64, runs: &[RunSummary]) -> SweepRow {
    let n = runs.len() as f64;
    let firsts: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.first_transfer)
        .map(|s| s as f64)
        .collect();
    SweepRow {
        param_value: value,
        transfer_rate: firsts.len() as f64 / n,
        mean_first_transfer_step: if firsts.is_empty() {
            f64::NAN
        } else {
            firsts.iter().sum::<f64>() / firsts.len() as f64
        },
        final_concentration_mean: runs.iter().map(|r| r.final_concentration).sum::<f64>() / n,
        final_p_irr_mean: runs.iter().map(|r| r.final_p_irr).sum::<f64>() / n,
        runs: runs.len(),
    }
}

pub fn grid_sweep(
    spec: &SweepSpec,
    base: &Scenario,
    workers: Workers,
) -> Result<Vec<SweepRow>, SweepError> {
    let points = spec.grid.points()?;
    // Validate the path once before spawning any work.
    base.with_parameter(&spec.parameter_path, points[0])?;
    points
        .into_iter()
        .map(|v| {
            evaluate_point(
                base,
                &spec.parameter_path,
                v,
                spec.runs_per_point,
                spec.horizon,
                spec.base_seed,
                workers,
            )
        })
        .collect()
}

/// An empirical transfer-rate curve over one parameter.
pub trait TransferCurve {
    fn transfer_rate(&self, value: f64) -> Result<f64, SweepError>;
}

/// Wraps a plain function as a curve.
pub struct FnCurve<F>(pub F);

impl<F: Fn(f64) -> f64> TransferCurve for FnCurve<F> {
    fn transfer_rate(&self, value: f64) -> Result<f64, SweepError> {
        Ok((self.0)(value))
    }
}

/// The curve obtained by simulating a scenario.
pub struct SimulatedCurve<'a> {
    pub scenario: &'a Scenario,
    pub parameter_path: String,
    pub runs: usize,
    pub horizon: u64,
    pub base_seed: u64,
    pub workers: Workers,
}

impl TransferCurve for SimulatedCurve<'_> {
    fn transfer_rate(&self, value: f64) -> Result<f64, SweepError> {
        Ok(evaluate_point(
            self.scenario,
            &self.parameter_path,
            value,
            self.runs,
            self.horizon,
            self.base_seed,
            self.workers,
        )?
        .transfer_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Transfer rate rises with the parameter.
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub parameter_path: String,
    pub critical_value: f64,
    pub bracket: (f64, f64),
    /// Rate on the side of the bracket below the target.
    pub transfer_rate_below: f64,
    /// Rate on the side at or above the target.
    pub transfer_rate_above: f64,
    pub target: f64,
    pub orientation: Orientation,
    pub iterations: u32,
    pub measurements: Vec<(f64, f64)>,
}

/// Bisects for the parameter value at which the transfer rate crosses
/// `target`. Fails when `[lo, hi]` does not bracket the target or when the
/// measured rates are not monotone in the parameter.
pub fn bisect_threshold(
    curve: &impl TransferCurve,
    parameter_path: &str,
    lo: f64,
    hi: f64,
    target: f64,
    tol: f64,
) -> Result<ThresholdResult, SweepError> {
    if !(tol > 0.0) {
        return Err(SweepError::InvalidTolerance);
    }
    if !(lo < hi) {
        return Err(SweepError::InvalidGrid("lo < hi required".into()));
    }
    let rate_lo = curve.transfer_rate(lo)?;
    let rate_hi = curve.transfer_rate(hi)?;
    let orientation = if rate_lo < target && rate_hi >= target {
        Orientation::Increasing
    } else if rate_hi < target && rate_lo >= target {
        Orientation::Decreasing
    } else {
        return Err(SweepError::NoBracket {
            lo,
            hi,
            rate_lo,
            rate_hi,
            target,
        });
    };
    let mut measurements = vec![(lo, rate_lo), (hi, rate_hi)];
    let (mut a, mut b) = (lo, hi);
    let (mut rate_a, mut rate_b) = (rate_lo, rate_hi);
    let mut iterations = 0;
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let r = curve.transfer_rate(mid)?;
        iterations += 1;
        measurements.push((mid, r));
        check_monotone(&measurements, orientation)?;
        let above = r >= target;
        match (orientation, above) {
            (Orientation::Increasing, true) | (Orientation::Decreasing, false) => {
                b = mid;
                rate_b = r;
            }
            _ => {
                a = mid;
                rate_a = r;
            }
        }
    }
    let (below, above) = match orientation {
        Orientation::Increasing => (rate_a, rate_b),
        Orientation::Decreasing => (rate_b, rate_a),
    };
    Ok(ThresholdResult {
        parameter_path: parameter_path.to_string(),
        critical_value: 0.5 * (a + b),
        bracket: (a, b),
        transfer_rate_below: below,
        transfer_rate_above: above,
        target,
        orientation,
        iterations,
        measurements,
    })
}

fn check_monotone(measurements: &[(f64, f64)], orientation: Orientation) -> Result<(), SweepError> {
    let mut sorted = measurements.to_vec();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let ok = sorted.windows(2).all(|w| match orientation {
        Orientation::Increasing => w[1].1 >= w[0].1,
        Orientation::Decreasing => w[1].1 <= w[0].1,
    });
    if ok {
        Ok(())
    } else {
        Err(SweepError::NonMonotone {
            measurements: sorted,
        })
    }
}
