//! Penalty sweeps and time-step studies built from independent pipeline runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Rounding, RunConfig};
use crate::error::{AppError, AppResult};
use crate::pipeline::{load_instance, run_on_instance};

/// Environment variable capping the worker threads of sweeps.
pub const THREADS_ENV: &str = "QSWITCH_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Alpha,
    Beta,
}

/// `[10^-n, 10^-n+1]` in steps of `5 * 10^-n-1` for `n = 1..=4`, ascending,
/// without duplicates.
pub fn decade_grid() -> Vec<f64> {
    let mut v = Vec::new();
    for n in (1..=4).rev() {
        let lo = 10f64.powi(-n);
        for i in 0..=18 {
            let x = lo * (1.0 + 0.5 * i as f64);
            // decimal rounding keeps the grid points printable
            let x = (x * 1e8).round() / 1e8;
            if v.last().is_none_or(|&last: &f64| x > last) {
                v.push(x);
            }
        }
    }
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: f64,
    pub seed: u64,
    pub relaxed: f64,
    pub objective: f64,
    pub tv: f64,
    pub switches: usize,
    pub energy_gap: Option<f64>,
    pub first_excited_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub param: f64,
    pub runs: usize,
    pub mean_objective: f64,
    pub mean_tv: f64,
    pub mean_energy_gap: Option<f64>,
    /// Runs whose final energy lies below the first excited level.
    pub below_first_excited: Option<usize>,
}

/// Runs `f` on a pool sized by `QSWITCH_THREADS` when set.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> AppResult<T> {
    match std::env::var(THREADS_ENV) {
        Ok(s) => {
            let n: usize = s
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| AppError::config(format!("{THREADS_ENV} must be a positive integer, got '{s}'")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| AppError::config(e.to_string()))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

fn with_param(base: &RunConfig, param: SweepParam, value: f64) -> RunConfig {
    let mut cfg = base.clone();
    cfg.rounding = match param {
        SweepParam::Alpha => Rounding::Obj { alpha: value },
        SweepParam::Beta => Rounding::Cdiff { beta: value },
    };
    cfg.skip_round = false;
    cfg.skip_sto = false;
    cfg
}

/// One full pipeline per `(value, seed)`; the seed selects the random
/// instance and the relaxation start.
pub fn sweep(
    base: &RunConfig,
    param: SweepParam,
    values: &[f64],
    seeds: &[u64],
) -> AppResult<(Vec<SweepRow>, Vec<SweepSummary>)> {
    if values.is_empty() || seeds.is_empty() {
        return Err(AppError::config("sweep needs at least one parameter value and one seed"));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(AppError::config(format!("sweep values must be non-negative, got {v}")));
    }
    let points: Vec<(f64, u64)> = values
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let rows = with_pool(|| {
        points
            .par_iter()
            .map(|&(value, seed)| {
                let mut cfg = with_param(base, param, value);
                cfg.seed = seed;
                let inst = load_instance(&cfg)?;
                let (report, _) = run_on_instance(&cfg, inst)?;
                Ok(SweepRow {
                    param: value,
                    seed,
                    relaxed: report.continuous.objective,
                    objective: report.final_objective(),
                    tv: report.final_tv().unwrap_or(0.0),
                    switches: report.optimized.as_ref().map_or(0, |o| o.switches),
                    energy_gap: report.energy.as_ref().map(|e| e.obtained_gap),
                    first_excited_gap: report.energy.as_ref().and_then(|e| e.first_excited_gap),
                })
            })
            .collect::<AppResult<Vec<_>>>()
    })??;

    let summary = values
        .iter()
        .map(|&v| {
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.param == v).collect();
            let n = group.len() as f64;
            let gaps: Option<Vec<(f64, Option<f64>)>> = group
                .iter()
                .map(|r| r.energy_gap.map(|g| (g, r.first_excited_gap)))
                .collect();
            SweepSummary {
                param: v,
                runs: group.len(),
                mean_objective: group.iter().map(|r| r.objective).sum::<f64>() / n,
                mean_tv: group.iter().map(|r| r.tv).sum::<f64>() / n,
                mean_energy_gap: gaps.as_ref().map(|g| g.iter().map(|x| x.0).sum::<f64>() / n),
                below_first_excited: gaps.map(|g| {
                    g.iter()
                        .filter(|(gap, fe)| fe.is_some_and(|fe| *gap < fe))
                        .count()
                }),
            }
        })
        .collect();
    Ok((rows, summary))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimestepRow {
    pub steps: usize,
    pub relaxed: f64,
    pub binary: f64,
    pub objective: f64,
    pub tv: f64,
    pub seconds: f64,
}

/// Runs the pipeline at each number of time steps. Runs are sequential so
/// that the reported times are comparable.
pub fn timesteps_study(base: &RunConfig, steps: &[usize]) -> AppResult<Vec<TimestepRow>> {
    if steps.len() < 2 {
        return Err(AppError::config("a time-step study needs at least two values of T"));
    }
    if steps.contains(&0) {
        return Err(AppError::config("time steps must be positive"));
    }
    let inst = load_instance(base)?;
    steps
        .iter()
        .map(|&t| {
            let mut cfg = base.clone();
            cfg.steps = t;
            cfg.skip_round = false;
            cfg.skip_sto = false;
            let (report, _) = run_on_instance(&cfg, inst.clone())?;
            Ok(TimestepRow {
                steps: t,
                relaxed: report.continuous.objective,
                binary: report.binary.as_ref().map_or(f64::NAN, |b| b.objective),
                objective: report.final_objective(),
                tv: report.final_tv().unwrap_or(0.0),
                seconds: report.timings.total,
            })
        })
        .collect()
}
