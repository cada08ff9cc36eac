use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use mppi_accel::accel::{pipeline_timing, AccelConfig, UtilizationModel};
use mppi_accel::plot::export_plots;
use mppi_accel::sim::{
    compare_backends, export_csv, export_updates_csv, run_scenario, BackendKind, RunSummary,
    ScenarioConfig, TrajectoryLog,
};

#[derive(Parser)]
#[command(name = "mppi-sim", about = "Closed-loop MPPI quadrotor simulation and accelerator modeling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario under a single backend and export logs and plots.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's active backend.
        #[arg(long)]
        backend: Option<BackendChoice>,
        /// Override the scenario's RNG seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one scenario under both backends and export a comparison.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the timing report of a pipelined accelerator configuration.
    Timing {
        #[arg(long)]
        pipelines: usize,
        #[arg(long = "stage-size")]
        stage_size: usize,
        #[arg(long, default_value_t = 25)]
        horizon: usize,
        /// Seconds per rollout iteration.
        #[arg(long = "iter-latency")]
        iter_latency: f64,
        #[arg(long = "transfer-overhead", default_value_t = 0.0)]
        transfer_overhead: f64,
    },
    /// Estimate LUT utilization from a synthesis table.
    Resources {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        pipelines: usize,
        #[arg(long = "stage-size")]
        stage_size: usize,
        #[arg(long, default_value_t = 25)]
        horizon: usize,
        /// Feasibility budget, percent of LUTs.
        #[arg(long, default_value_t = 100.0)]
        budget: f64,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum BackendChoice {
    Batch,
    Pipelined,
}

impl From<BackendChoice> for BackendKind {
    fn from(value: BackendChoice) -> Self {
        match value {
            BackendChoice::Batch => BackendKind::Batch,
            BackendChoice::Pipelined => BackendKind::Pipelined,
        }
    }
}

fn summarize(log: &TrajectoryLog, config: &ScenarioConfig) -> Result<String> {
    let timing = config.backend_timing()?;
    let mut text = String::new();
    text.push_str(&format!("scenario: {}\n", config.name));
    text.push_str(&format!("backend: {}\n", config.backend.active));
    text.push_str(&format!("control period [s]: {}\n", timing.control_period));
    text.push_str(&format!("control updates: {}\n", log.updates.len()));
    text.push_str(&format!(
        "final position error [m]: {:.6}\n",
        log.final_position_error
    ));
    text.push_str(&format!("collision: {}\n", log.collision));
    text.push_str(&format!(
        "input smoothness [mean |Δu|]: {:.6}\n",
        log.input_smoothness()
    ));
    if let Some(t) = log.aborted_at {
        text.push_str(&format!("ABORTED at t = {t} s (non-finite state)\n"));
    }
    Ok(text)
}

fn export_run(log: &TrajectoryLog, config: &ScenarioConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    export_csv(log, &out.join("log.csv"))?;
    export_updates_csv(log, &out.join("updates.csv"))?;
    export_plots(log, &config.obstacles, out)?;
    fs::write(out.join("summary.txt"), summarize(log, config)?)?;
    Ok(())
}

fn summary_block(label: &str, s: &RunSummary) -> String {
    format!(
        "{label}:\n  control period [s]: {}\n  control updates: {}\n  \
         final position error [m]: {:.6}\n  input smoothness [mean |Δu|]: {:.6}\n  \
         collision: {}\n",
        s.control_period, s.update_count, s.final_position_error, s.input_smoothness, s.collision
    )
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            scenario,
            backend,
            seed,
            out,
        } => {
            let mut config = ScenarioConfig::load(&scenario)?;
            if let Some(b) = backend {
                config.backend.active = b.into();
            }
            if let Some(s) = seed {
                config.rng_seed = s;
            }
            let log = run_scenario(&config)?;
            export_run(&log, &config, &out)?;
            print!("{}", summarize(&log, &config)?);
            Ok(log.aborted_at.is_none())
        }
        Command::Compare { scenario, out } => {
            let config = ScenarioConfig::load(&scenario)?;
            let report = compare_backends(&config)?;

            let mut batch_config = config.clone();
            batch_config.backend.active = BackendKind::Batch;
            export_run(&report.batch_log, &batch_config, &out.join("batch"))?;
            let mut pipelined_config = config.clone();
            pipelined_config.backend.active = BackendKind::Pipelined;
            export_run(&report.pipelined_log, &pipelined_config, &out.join("pipelined"))?;

            let text = format!(
                "{}{}update-count ratio pipelined/batch: {:.3}\n",
                summary_block("batch", &report.batch),
                summary_block("pipelined", &report.pipelined),
                report.update_count_ratio()
            );
            fs::create_dir_all(&out)?;
            fs::write(out.join("compare_summary.txt"), &text)?;
            print!("{text}");
            Ok(report.batch_log.aborted_at.is_none() && report.pipelined_log.aborted_at.is_none())
        }
        Command::Timing {
            pipelines,
            stage_size,
            horizon,
            iter_latency,
            transfer_overhead,
        } => {
            let report = pipeline_timing(&AccelConfig {
                num_pipelines: pipelines,
                horizon,
                stage_size,
                iter_latency,
                transfer_overhead,
            })?;
            println!("stages per pipeline: {}", horizon.div_ceil(stage_size));
            println!("fill latency [s]: {}", report.fill_latency);
            println!("control period [s]: {}", report.control_period);
            println!("rollouts per update: {}", report.rollouts_per_update);
            println!("steady-state speedup vs sequential: {}", report.speedup_vs_sequential);
            Ok(true)
        }
        Command::Resources {
            table,
            pipelines,
            stage_size,
            horizon,
            budget,
        } => {
            let rows = mppi_accel::accel::parse_utilization_table(&table)?;
            let model = UtilizationModel::fit(&rows, budget)?;
            let estimate = model.estimate(pipelines, horizon, stage_size)?;
            let feasible = estimate <= budget;
            println!("pipelines: {pipelines}");
            println!("stages per pipeline: {}", horizon.div_ceil(stage_size));
            println!("stage size: {stage_size}");
            println!("estimated LUT utilization [%]: {estimate:.2}");
            println!("budget [%]: {budget}");
            println!("feasible: {feasible}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
