//! Analytical timing and resource model of the pipelined rollout
//! accelerator.
//!
//! Iteration counts and asymptotic speedup follow directly from the pipeline
//! structure: a rollout over horizon H processed by a pipeline of stages
//! needs `k + H - 1` iterations for a k-item stream instead of `H * k`.
//! Wall-clock mapping: a stage of size `s` holds its item for `s` iteration
//! times, so the initiation interval is `s * t_iter`.
//!
//! LUT utilization is modeled as a per-stage-size linear law fit from
//! synthesis data; the per-instance cost differs strongly across stage
//! sizes, so coefficients are kept as data per stage size rather than a
//! single global law.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AccelConfig {
    /// Parallel pipeline instances P.
    pub num_pipelines: usize,
    /// Horizon length H (rollout iterations per trajectory).
    pub horizon: usize,
    /// Rollout iterations executed inside one stage.
    pub stage_size: usize,
    /// Time for one rollout iteration in one stage, s.
    pub iter_latency: f64,
    /// Host transfer overhead per control update, s.
    pub transfer_overhead: f64,
}

impl AccelConfig {
    pub fn stages(&self) -> usize {
        self.horizon.div_ceil(self.stage_size)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BatchBackendConfig {
    /// Parallel rollout lanes (e.g. GPU threads).
    pub num_lanes: usize,
    /// Time for one rollout iteration, s.
    pub iter_latency: f64,
    /// Host transfer overhead per control update, s.
    pub transfer_overhead: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct TimingReport {
    /// Time until the first complete result set, s.
    pub fill_latency: f64,
    /// Steady-state interval between control outputs, s.
    pub control_period: f64,
    /// Rollouts completed per control update.
    pub rollouts_per_update: usize,
    /// Steady-state throughput gain over a non-pipelined evaluation of the
    /// same stream.
    pub speedup_vs_sequential: f64,
}

/// Iterations for a k-item stream without pipelining: H * k.
pub fn sequential_iterations(k: u64, horizon: u64) -> u64 {
    horizon * k
}

/// Iterations for a k-item stream through an H-stage pipeline: k + H - 1.
pub fn pipelined_iterations(k: u64, horizon: u64) -> u64 {
    k + horizon - 1
}

/// H * k / (k + H - 1); approaches H for long streams.
pub fn speedup(k: u64, horizon: u64) -> f64 {
    sequential_iterations(k, horizon) as f64 / pipelined_iterations(k, horizon) as f64
}

/// Timing of the pipelined accelerator for a given stage partition.
pub fn pipeline_timing(config: &AccelConfig) -> Result<TimingReport> {
    if config.stage_size < 1 || config.num_pipelines < 1 || config.horizon < 1 {
        return Err(Error::InvalidConfig(
            "pipelines, horizon and stage size must be >= 1".into(),
        ));
    }
    if !(config.iter_latency > 0.0) {
        return Err(Error::InvalidConfig("iter_latency must be > 0".into()));
    }
    if config.stage_size > config.horizon {
        return Err(Error::StageExceedsHorizon {
            stage_size: config.stage_size,
            horizon: config.horizon,
        });
    }
    let stages = config.stages();
    let initiation_interval = config.stage_size as f64 * config.iter_latency;
    Ok(TimingReport {
        fill_latency: stages as f64 * initiation_interval + config.transfer_overhead,
        control_period: initiation_interval + config.transfer_overhead,
        rollouts_per_update: config.num_pipelines,
        speedup_vs_sequential: config.horizon as f64 / config.stage_size as f64,
    })
}

/// Timing of the batch (GPU-style) baseline: every update re-runs the full
/// horizon on all lanes.
pub fn batch_timing(config: &BatchBackendConfig, horizon: usize) -> TimingReport {
    let period = horizon as f64 * config.iter_latency + config.transfer_overhead;
    TimingReport {
        fill_latency: period,
        control_period: period,
        rollouts_per_update: config.num_lanes,
        speedup_vs_sequential: 1.0,
    }
}

/// One synthesis data point: a pipeline configuration and its measured LUT
/// utilization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UtilizationRow {
    pub pipelines: usize,
    pub stages: usize,
    pub stage_size: usize,
    pub utilization_percent: f64,
}

/// Linear coefficients for one stage size: utilization = base +
/// instances * per_instance, where instances = pipelines * stages.
#[derive(Clone, Copy, Debug)]
pub struct StageCoeff {
    pub base: f64,
    pub per_instance: f64,
}

/// Per-stage-size utilization law plus a feasibility budget.
#[derive(Clone, Debug)]
pub struct UtilizationModel {
    /// Fixed overhead shared by every configuration, percent.
    pub base_fraction: f64,
    pub stage_costs: BTreeMap<usize, StageCoeff>,
    /// Feasibility threshold, percent of LUTs.
    pub budget: f64,
}

impl UtilizationModel {
    /// Least-squares fit of (base, per_instance) per stage size. Stage sizes
    /// with a single data point get base 0 and an exactly-reproducing slope.
    pub fn fit(rows: &[UtilizationRow], budget: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidConfig("empty utilization table".into()));
        }
        let mut groups: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
        for r in rows {
            let instances = (r.pipelines * r.stages) as f64;
            groups
                .entry(r.stage_size)
                .or_default()
                .push((instances, r.utilization_percent));
        }
        let mut stage_costs = BTreeMap::new();
        for (s, points) in groups {
            let coeff = if points.len() == 1 {
                StageCoeff {
                    base: 0.0,
                    per_instance: points[0].1 / points[0].0,
                }
            } else {
                let n = points.len() as f64;
                let sx: f64 = points.iter().map(|p| p.0).sum();
                let sy: f64 = points.iter().map(|p| p.1).sum();
                let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
                let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
                let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
                StageCoeff {
                    base: (sy - slope * sx) / n,
                    per_instance: slope,
                }
            };
            stage_costs.insert(s, coeff);
        }
        Ok(Self {
            base_fraction: 0.0,
            stage_costs,
            budget,
        })
    }

    /// Estimated LUT utilization (percent, clamped at 0 below; values above
    /// 100 mean the design does not fit).
    pub fn estimate(&self, pipelines: usize, horizon: usize, stage_size: usize) -> Result<f64> {
        if pipelines < 1 || horizon < 1 || stage_size < 1 {
            return Err(Error::InvalidConfig(
                "pipelines, horizon and stage size must be >= 1".into(),
            ));
        }
        let coeff = self
            .stage_costs
            .get(&stage_size)
            .ok_or(Error::UnknownStageSize(stage_size))?;
        let stages = horizon.div_ceil(stage_size);
        let estimate = self.base_fraction
            + coeff.base
            + (pipelines * stages) as f64 * coeff.per_instance;
        Ok(estimate.max(0.0))
    }

    pub fn feasible(&self, pipelines: usize, horizon: usize, stage_size: usize) -> Result<bool> {
        Ok(self.estimate(pipelines, horizon, stage_size)? <= self.budget)
    }
}

/// Parse the plain-text synthesis table shipped with the repository.
/// Columns: pipelines, stages, stage_size, utilization_percent. `#` starts a
/// comment.
pub fn parse_utilization_table(path: &Path) -> Result<Vec<UtilizationRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::TableParse {
                path: path.into(),
                line: idx + 1,
                msg: format!("expected 4 columns, found {}", fields.len()),
            });
        }
        let parse_err = |msg: String| Error::TableParse {
            path: path.into(),
            line: idx + 1,
            msg,
        };
        rows.push(UtilizationRow {
            pipelines: fields[0]
                .parse()
                .map_err(|e| parse_err(format!("pipelines: {e}")))?,
            stages: fields[1]
                .parse()
                .map_err(|e| parse_err(format!("stages: {e}")))?,
            stage_size: fields[2]
                .parse()
                .map_err(|e| parse_err(format!("stage_size: {e}")))?,
            utilization_percent: fields[3]
                .parse()
                .map_err(|e| parse_err(format!("utilization: {e}")))?,
        });
    }
    Ok(rows)
}
