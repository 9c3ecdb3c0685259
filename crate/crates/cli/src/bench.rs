//! Timing of one MPC step (condensed QP build plus solve) over states drawn
//! from a closed-loop run.

use std::time::Instant;

use serde::Serialize;
use tractor_mpc::error_model::{
    discretize_zoh, linearize_about_reference, ErrorInput, ErrorState, LtvDiscrete,
};
use tractor_mpc::lmpc::{mpc_step, MpcConfig, MpcState};
use tractor_mpc::robust::tighten_input_bounds;
use tractor_mpc::sim::{run_closed_loop, NoiseConfig, SimConfig};
use tractor_mpc::trajectory::{sample_reference, ReferenceTrajectory};

use crate::CliError;

/// Controller inputs seen at one period of a run.
#[derive(Debug, Clone)]
pub struct BenchSample {
    pub z_e: ErrorState,
    pub model: LtvDiscrete,
    pub previous: ErrorInput,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchCase {
    pub control_horizon: usize,
    pub prediction_horizon: usize,
    pub decision_variables: usize,
    pub samples: usize,
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub reps: usize,
    pub cases: Vec<BenchCase>,
}

/// Runs the closed loop and keeps each period's error, model and previous `u_b`.
pub fn collect_samples(
    traj: &ReferenceTrajectory,
    sim: &SimConfig,
    noise: &NoiseConfig,
) -> Result<Vec<BenchSample>, CliError> {
    let run = run_closed_loop(traj, sim, noise)?;
    let mut previous = ErrorInput::default();
    let mut out = Vec::with_capacity(run.records.len());
    for r in &run.records {
        let reference = sample_reference(traj, r.t, &sim.params)?;
        let model = discretize_zoh(
            &linearize_about_reference(&reference, &sim.params),
            sim.mpc.ts,
        );
        out.push(BenchSample {
            z_e: r.z_e,
            model,
            previous,
        });
        previous = r.u_b;
    }
    Ok(out)
}

/// Controller configuration used for a given control horizon. The prediction
/// horizon grows with it when needed.
pub fn case_config(base: &MpcConfig, control_horizon: usize) -> MpcConfig {
    let mut cfg = base.clone();
    cfg.control_horizon = control_horizon;
    cfg.prediction_horizon = base.prediction_horizon.max(control_horizon);
    cfg
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Times `reps` steps per control horizon, cycling through `samples`.
pub fn run_bench(
    samples: &[BenchSample],
    base: &MpcConfig,
    control_horizons: &[usize],
    reps: usize,
) -> Result<BenchReport, CliError> {
    let mut cases = Vec::new();
    if reps == 0 || samples.is_empty() {
        return Ok(BenchReport { reps, cases });
    }
    for &nc in control_horizons {
        let cfg = case_config(base, nc);
        cfg.validate()?;
        let mut times = Vec::with_capacity(reps);
        for i in 0..reps {
            let s = &samples[i % samples.len()];
            let mut state = MpcState::new(&cfg);
            state.previous = s.previous;
            let started = Instant::now();
            let result = mpc_step(&s.z_e, &s.model, &cfg, &mut state);
            times.push(started.elapsed().as_secs_f64() * 1e3);
            result?;
        }
        let mean = times.iter().sum::<f64>() / reps as f64;
        times.sort_by(f64::total_cmp);
        cases.push(BenchCase {
            control_horizon: nc,
            prediction_horizon: cfg.prediction_horizon,
            decision_variables: cfg.num_decisions(),
            samples: reps,
            mean_ms: mean,
            p95_ms: percentile(&times, 0.95),
            max_ms: times[reps - 1],
        });
    }
    Ok(BenchReport { reps, cases })
}

/// Samples from `sim`, with the MPC bounds tightened as the run would use them.
pub fn bench_run(
    traj: &ReferenceTrajectory,
    sim: &SimConfig,
    noise: &NoiseConfig,
    control_horizons: &[usize],
    reps: usize,
) -> Result<BenchReport, CliError> {
    if reps == 0 {
        return Ok(BenchReport {
            reps,
            cases: Vec::new(),
        });
    }
    let samples = collect_samples(traj, sim, noise)?;
    let base = if sim.tighten {
        tighten_input_bounds(&sim.mpc, &sim.robust.gains)?
    } else {
        sim.mpc.clone()
    };
    run_bench(&samples, &base, control_horizons, reps)
}
