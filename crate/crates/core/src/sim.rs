//! Closed-loop simulation harness.
//!
//! Physics runs at a fine substep `dt_sim`; the controller fires whenever
//! simulated time crosses a multiple of the selected backend's control
//! period, which comes from the accelerator timing model. Between updates
//! the last control is held (zero-order hold). Rollout prediction always
//! uses the coarser horizon interval.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{UnitQuaternion, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::accel::{batch_timing, pipeline_timing, AccelConfig, BatchBackendConfig, TimingReport};
use crate::cost::{BoxObstacle, CostWeights, Reference, TrackingCosts};
use crate::dynamics::{self, hover_input, QuadrotorInput, QuadrotorParams, QuadrotorState};
use crate::mppi::{
    input_from_vector, mppi_step, vector_from_input, Dynamics, MppiConfig,
};
use crate::{Error, Result};

/// Serializable initial state; defaults to rest at the origin with identity
/// attitude.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Attitude quaternion as (w, x, y, z).
    pub orientation: [f64; 4],
    pub angular_velocity: Vector3<f64>,
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            orientation: [1.0, 0.0, 0.0, 0.0],
            angular_velocity: Vector3::zeros(),
        }
    }
}

impl InitialState {
    pub fn to_state(&self) -> QuadrotorState {
        let [w, x, y, z] = self.orientation;
        QuadrotorState {
            position: self.position,
            orientation: UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z)),
            linear_velocity: self.velocity,
            angular_velocity: self.angular_velocity,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Batch,
    Pipelined,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BackendKind::Batch => write!(f, "batch"),
            BackendKind::Pipelined => write!(f, "pipelined"),
        }
    }
}

/// Pipelined backend parameters as written in scenario files; the horizon
/// comes from the controller settings.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PipelinedSettings {
    pub num_pipelines: usize,
    pub stage_size: usize,
    pub iter_latency: f64,
    #[serde(default)]
    pub transfer_overhead: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BackendSelection {
    pub active: BackendKind,
    pub batch: BatchBackendConfig,
    pub pipelined: PipelinedSettings,
}

/// Controller settings as written in scenario files. `num_rollouts` defaults
/// to the active backend's lane/pipeline count.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MppiSettings {
    #[serde(default)]
    pub num_rollouts: Option<usize>,
    pub horizon: usize,
    pub horizon_dt: f64,
    pub sigma: Vector4<f64>,
    pub sharpness: f64,
    pub input_lower: Vector4<f64>,
    pub input_upper: Vector4<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub initial_state: InitialState,
    pub target_position: Vector3<f64>,
    #[serde(default)]
    pub obstacles: Vec<BoxObstacle>,
    #[serde(default = "default_sim_duration")]
    pub sim_duration: f64,
    #[serde(default = "default_dt_sim")]
    pub dt_sim: f64,
    pub mppi: MppiSettings,
    #[serde(default)]
    pub costs: CostWeights,
    #[serde(default)]
    pub quad: QuadrotorParams,
    pub backend: BackendSelection,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_sim_duration() -> f64 {
    10.0
}

fn default_dt_sim() -> f64 {
    0.002
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ScenarioConfig = toml::from_str(&text).map_err(|e| Error::ScenarioParse {
            path: path.into(),
            msg: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sim_duration > 0.0) {
            return Err(Error::InvalidConfig("sim_duration must be > 0".into()));
        }
        if !(self.dt_sim > 0.0) {
            return Err(Error::InvalidConfig("dt_sim must be > 0".into()));
        }
        let ratio = self.mppi.horizon_dt / self.dt_sim;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "horizon_dt must be a multiple of dt_sim".into(),
            ));
        }
        self.quad.validate()?;
        self.costs.validate()?;
        self.mppi_config()?.validate()
    }

    /// Timing report of the active backend.
    pub fn backend_timing(&self) -> Result<TimingReport> {
        match self.backend.active {
            BackendKind::Batch => Ok(batch_timing(&self.backend.batch, self.mppi.horizon)),
            BackendKind::Pipelined => pipeline_timing(&self.accel_config()),
        }
    }

    pub fn accel_config(&self) -> AccelConfig {
        AccelConfig {
            num_pipelines: self.backend.pipelined.num_pipelines,
            horizon: self.mppi.horizon,
            stage_size: self.backend.pipelined.stage_size,
            iter_latency: self.backend.pipelined.iter_latency,
            transfer_overhead: self.backend.pipelined.transfer_overhead,
        }
    }

    /// Concrete controller config; rollout count defaults to the active
    /// backend's parallel capacity.
    pub fn mppi_config(&self) -> Result<MppiConfig> {
        let default_n = match self.backend.active {
            BackendKind::Batch => self.backend.batch.num_lanes,
            BackendKind::Pipelined => self.backend.pipelined.num_pipelines,
        };
        Ok(MppiConfig {
            num_rollouts: self.mppi.num_rollouts.unwrap_or(default_n),
            horizon: self.mppi.horizon,
            sigma: self.mppi.sigma,
            sharpness: self.mppi.sharpness,
            input_lower: self.mppi.input_lower,
            input_upper: self.mppi.input_upper,
        })
    }
}

/// One physics-rate log record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub state: QuadrotorState,
    pub applied_input: QuadrotorInput,
}

/// One control-update log record.
#[derive(Clone, Copy, Debug)]
pub struct UpdateRecord {
    pub t: f64,
    pub control: Vector4<f64>,
    pub j_min: f64,
    pub j_max: f64,
    pub mean_cost: f64,
    pub period: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrajectoryLog {
    pub steps: Vec<StepRecord>,
    pub updates: Vec<UpdateRecord>,
    pub collision: bool,
    pub final_position_error: f64,
    /// Simulated time at which the run aborted on a non-finite state, if any.
    pub aborted_at: Option<f64>,
}

impl TrajectoryLog {
    /// Mean absolute control increment across successive updates, averaged
    /// over channels.
    pub fn input_smoothness(&self) -> f64 {
        if self.updates.len() < 2 {
            return 0.0;
        }
        let mut total = 0.0;
        for pair in self.updates.windows(2) {
            let d = pair[1].control - pair[0].control;
            total += d.abs().sum() / 4.0;
        }
        total / (self.updates.len() - 1) as f64
    }
}

struct ModelDynamics {
    params: QuadrotorParams,
}

impl Dynamics for ModelDynamics {
    fn next_state(&self, state: &QuadrotorState, input: &QuadrotorInput) -> QuadrotorState {
        dynamics::step(state, input, &self.params)
    }
}

/// splitmix64; decorrelates per-update controller seeds.
fn mix_seed(seed: u64, update_index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(update_index.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Run one closed-loop scenario under the active backend.
pub fn run_scenario(config: &ScenarioConfig) -> Result<TrajectoryLog> {
    config.validate()?;
    let timing = config.backend_timing()?;
    let control_period = timing.control_period;
    let mppi_config = config.mppi_config()?;

    // Prediction model integrates at the horizon interval, not at dt_sim.
    let rollout_dynamics = ModelDynamics {
        params: QuadrotorParams {
            dt_model: config.mppi.horizon_dt,
            ..config.quad
        },
    };
    let sim_params = QuadrotorParams {
        dt_model: config.dt_sim,
        ..config.quad
    };

    let hover = hover_input(&config.quad);
    let target_state = QuadrotorState::at_rest(config.target_position);
    let reference = Reference::constant(target_state, hover, config.mppi.horizon);
    let costs = TrackingCosts {
        weights: config.costs,
        obstacles: config.obstacles.clone(),
    };

    let mut state = config.initial_state.to_state();
    let mut held = vector_from_input(&hover);
    let mut log = TrajectoryLog::default();
    let steps = (config.sim_duration / config.dt_sim).round() as usize;
    let mut next_update = 0.0;
    let mut update_index: u64 = 0;

    for k in 0..=steps {
        let t = k as f64 * config.dt_sim;
        if k < steps && t + 1e-12 >= next_update {
            let nominal = Vector4::from_fn(|c, _| {
                held[c].clamp(mppi_config.input_lower[c], mppi_config.input_upper[c])
            });
            let seed = mix_seed(config.rng_seed, update_index);
            let (control, diag) = mppi_step(
                &mppi_config,
                &state,
                &reference,
                &nominal,
                seed,
                &rollout_dynamics,
                &costs,
            )?;
            held = control;
            log.updates.push(UpdateRecord {
                t,
                control,
                j_min: diag.j_min,
                j_max: diag.j_max,
                mean_cost: diag.mean_cost,
                period: control_period,
            });
            update_index += 1;
            next_update = update_index as f64 * control_period;
        }

        let input = input_from_vector(&held);
        log.steps.push(StepRecord {
            t,
            state,
            applied_input: input,
        });

        if k < steps {
            state = dynamics::step(&state, &input, &sim_params);
            if !state.is_finite() {
                log.aborted_at = Some((k + 1) as f64 * config.dt_sim);
                break;
            }
        }
    }

    log.collision = log.steps.iter().any(|rec| {
        config
            .obstacles
            .iter()
            .any(|o| o.contains(&rec.state.position))
    });
    if let Some(last) = log.steps.last() {
        log.final_position_error = (last.state.position - config.target_position).norm();
    }
    Ok(log)
}

/// Summary metrics of one closed-loop run.
#[derive(Clone, Copy, Debug)]
pub struct RunSummary {
    pub final_position_error: f64,
    pub input_smoothness: f64,
    pub update_count: usize,
    pub collision: bool,
    pub control_period: f64,
}

impl RunSummary {
    fn from_log(log: &TrajectoryLog, period: f64) -> Self {
        Self {
            final_position_error: log.final_position_error,
            input_smoothness: log.input_smoothness(),
            update_count: log.updates.len(),
            collision: log.collision,
            control_period: period,
        }
    }
}

/// Batch-vs-pipelined comparison on the same scenario.
#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub batch_log: TrajectoryLog,
    pub pipelined_log: TrajectoryLog,
    pub batch: RunSummary,
    pub pipelined: RunSummary,
}

impl ComparisonReport {
    pub fn update_count_ratio(&self) -> f64 {
        self.pipelined.update_count as f64 / self.batch.update_count as f64
    }
}

/// Run the scenario under both backends and collect summary metrics.
pub fn compare_backends(scenario: &ScenarioConfig) -> Result<ComparisonReport> {
    let mut batch_scenario = scenario.clone();
    batch_scenario.backend.active = BackendKind::Batch;
    let mut pipelined_scenario = scenario.clone();
    pipelined_scenario.backend.active = BackendKind::Pipelined;

    let batch_timing = batch_scenario.backend_timing()?;
    let pipelined_timing = pipelined_scenario.backend_timing()?;
    let batch_log = run_scenario(&batch_scenario)?;
    let pipelined_log = run_scenario(&pipelined_scenario)?;

    Ok(ComparisonReport {
        batch: RunSummary::from_log(&batch_log, batch_timing.control_period),
        pipelined: RunSummary::from_log(&pipelined_log, pipelined_timing.control_period),
        batch_log,
        pipelined_log,
    })
}

const CSV_HEADER: [&str; 18] = [
    "t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz", "thrust",
    "tx", "ty", "tz",
];

/// Write the physics-rate log as CSV. Floats are written in shortest
/// round-trip form, so re-parsing reproduces the log exactly.
pub fn export_csv(log: &TrajectoryLog, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(CSV_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for rec in &log.steps {
        let q = rec.state.orientation.quaternion();
        let row: [f64; 18] = [
            rec.t,
            rec.state.position.x,
            rec.state.position.y,
            rec.state.position.z,
            q.w,
            q.i,
            q.j,
            q.k,
            rec.state.linear_velocity.x,
            rec.state.linear_velocity.y,
            rec.state.linear_velocity.z,
            rec.state.angular_velocity.x,
            rec.state.angular_velocity.y,
            rec.state.angular_velocity.z,
            rec.applied_input.thrust,
            rec.applied_input.torque.x,
            rec.applied_input.torque.y,
            rec.applied_input.torque.z,
        ];
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writer.write_record(&fields).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Re-parse a CSV written by [`export_csv`] into physics-rate records.
pub fn import_csv(path: &Path) -> Result<Vec<StepRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut steps = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let f: Vec<f64> = record
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::ScenarioParse {
                path: path.into(),
                msg: format!("bad CSV field: {e}"),
            })?;
        if f.len() != 18 {
            return Err(Error::ScenarioParse {
                path: path.into(),
                msg: format!("expected 18 CSV columns, found {}", f.len()),
            });
        }
        steps.push(StepRecord {
            t: f[0],
            state: QuadrotorState {
                position: Vector3::new(f[1], f[2], f[3]),
                // Written quaternions are already unit; renormalizing here
                // would perturb the last ulp and break exact round-trips.
                orientation: UnitQuaternion::new_unchecked(nalgebra::Quaternion::new(
                    f[4], f[5], f[6], f[7],
                )),
                linear_velocity: Vector3::new(f[8], f[9], f[10]),
                angular_velocity: Vector3::new(f[11], f[12], f[13]),
            },
            applied_input: QuadrotorInput {
                thrust: f[14],
                torque: Vector3::new(f[15], f[16], f[17]),
            },
        });
    }
    Ok(steps)
}

/// Write per-control-update diagnostics as CSV.
pub fn export_updates_csv(log: &TrajectoryLog, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record([
            "t", "thrust", "tx", "ty", "tz", "j_min", "j_max", "mean_cost", "period",
        ])
        .map_err(|e| csv_error(path, e))?;
    for u in &log.updates {
        let row = [
            u.t, u.control.x, u.control.y, u.control.z, u.control.w, u.j_min, u.j_max,
            u.mean_cost, u.period,
        ];
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writer.write_record(&fields).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::ScenarioParse {
        path: PathBuf::from(path),
        msg: e.to_string(),
    }
}
