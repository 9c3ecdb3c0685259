//! `simulate`, `validate` and `bench`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::Value;
use tractor_mpc::sim::{run_closed_loop, RunStatus};
use tractor_mpc::trajectory::{validate_trajectory, ValidationReport};

use crate::bench::{bench_run, BenchReport};
use crate::config::{load_config, RunConfigFile};
use crate::report::{summary, write_control_plot, write_error_plot, write_xy_plot};
use crate::steps_csv::write_steps;
use crate::CliError;

pub const STEPS_FILE: &str = "steps.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const PLOT_ERRORS_FILE: &str = "plot_errors.csv";
pub const PLOT_XY_FILE: &str = "plot_xy.csv";
pub const PLOT_CONTROLS_FILE: &str = "plot_controls.csv";

#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub out_dir: PathBuf,
    pub rows: usize,
    pub summary: Value,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Runs the configured experiment and writes its logs to `out_dir`. A run that
/// fails part way still writes everything recorded up to the failure, then
/// returns [`CliError::RunFailed`].
pub fn simulate(cfg: &RunConfigFile, out_dir: &Path) -> Result<SimulateOutcome, CliError> {
    let run = cfg.resolve()?;
    let output = run_closed_loop(&run.trajectory, &run.sim, &run.noise)?;
    fs::create_dir_all(out_dir).map_err(|source| CliError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    write_steps(create(&out_dir.join(STEPS_FILE))?, &output.records)?;
    let summary = summary(output.metrics.as_ref(), &output.status, run.noise.seed);
    let text = serde_json::to_string_pretty(&summary).expect("flat map serializes") + "\n";
    let path = out_dir.join(METRICS_FILE);
    fs::write(&path, text).map_err(|source| CliError::Io { path, source })?;
    if cfg.output.plot_data {
        write_error_plot(create(&out_dir.join(PLOT_ERRORS_FILE))?, &output.records)?;
        write_xy_plot(create(&out_dir.join(PLOT_XY_FILE))?, &output.records)?;
        write_control_plot(
            create(&out_dir.join(PLOT_CONTROLS_FILE))?,
            &output.records,
            run.sim.mpc.magnitude_bounds,
        )?;
    }
    match output.status {
        RunStatus::Completed => Ok(SimulateOutcome {
            out_dir: out_dir.to_path_buf(),
            rows: output.records.len(),
            summary,
        }),
        RunStatus::Failed { step, error } => Err(CliError::RunFailed { step, error }),
    }
}

/// `simulate --config <path> [--seed N] [--out <dir>]`.
pub fn cmd_simulate(
    config: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<SimulateOutcome, CliError> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.noise.seed = s;
    }
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    simulate(&cfg, &dir)
}

pub fn validate(cfg: &RunConfigFile) -> Result<ValidationReport, CliError> {
    let traj = cfg.trajectory()?;
    let sim = cfg.sim_config();
    Ok(validate_trajectory(&traj, &sim.params, &sim.validation))
}

/// `validate --config <path>`: the report, whether or not it passed.
pub fn cmd_validate(config: &Path) -> Result<ValidationReport, CliError> {
    validate(&load_config(config)?)
}

/// `bench [--reps N]`: times the controller step on states from the configured
/// run (defaults when no config is given).
pub fn cmd_bench(
    config: Option<&Path>,
    reps: usize,
    control_horizons: &[usize],
) -> Result<BenchReport, CliError> {
    let cfg = match config {
        Some(p) => load_config(p)?,
        None => RunConfigFile::default(),
    };
    let run = cfg.resolve()?;
    let horizons = if control_horizons.is_empty() {
        vec![run.sim.mpc.control_horizon]
    } else {
        control_horizons.to_vec()
    };
    bench_run(&run.trajectory, &run.sim, &run.noise, &horizons, reps)
}
