//! Closed-loop simulation: plant integration, sensor noise, the controller
//! at a fixed period, and tracking metrics.
//!
//! Every random draw comes from one ChaCha8 stream seeded by
//! [`NoiseConfig::seed`], consumed in a fixed order, so a run is a pure
//! function of its configuration.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::angle::{deg, normalize};
use crate::error::{invalid, Error, Result};
use crate::error_model::{
    discretize_zoh, linearize_about_reference, to_error_frame, ErrorInput, ErrorState,
};
use crate::lmpc::{Controller, MpcConfig};
use crate::qp::QpStatus;
use crate::robust::{
    combine_control, feedforward_action, tighten_input_bounds, RobustConfig, RobustController,
    UncertaintyVector,
};
use crate::trajectory::{
    sample_reference, validate_trajectory, ReferenceTrajectory, ValidationOptions,
};
use crate::vehicle::{dynamics_rhs, rk4_step, ControlInput, VehicleParams, VehicleState};

/// Sensor and actuator noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Radius of the uniform disc of GPS position errors, m.
    pub gps_position_bound: f64,
    /// Standard deviation of steering and hitch-angle errors, rad.
    pub steering_sigma: f64,
    /// Standard deviation of speed measurement errors, m/s.
    pub speed_sigma: f64,
    /// Standard deviation of yaw measurement errors, rad.
    pub yaw_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            gps_position_bound: 0.03,
            steering_sigma: deg(1.0),
            speed_sigma: 0.1,
            yaw_sigma: 0.0,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    /// All magnitudes zero.
    pub fn off(seed: u64) -> Self {
        Self {
            gps_position_bound: 0.0,
            steering_sigma: 0.0,
            speed_sigma: 0.0,
            yaw_sigma: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gps_position_bound", self.gps_position_bound),
            ("steering_sigma", self.steering_sigma),
            ("speed_sigma", self.speed_sigma),
            ("yaw_sigma", self.yaw_sigma),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which parts of `u = u_f - u_b + u_m` are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlToggles {
    pub feedforward: bool,
    pub feedback: bool,
    pub robust: bool,
}

impl Default for ControlToggles {
    fn default() -> Self {
        Self {
            feedforward: true,
            feedback: true,
            robust: true,
        }
    }
}

/// Initial pose perturbation relative to the reference at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InitialOffset {
    /// Along the tractor's reference heading, m.
    pub longitudinal: f64,
    /// Towards the tractor's reference left, m. Applied to both bodies.
    pub lateral: f64,
    /// Added to both yaw angles, rad.
    pub heading: f64,
}

/// Frame of the constant drift velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DriftDirection {
    /// Towards each body's left, perpendicular to its heading.
    BodyLeft,
    /// Fixed inertial direction, rad from the x axis.
    Inertial(f64),
    /// Inertial direction drawn uniformly per run from the noise seed, on a
    /// stream separate from the sensor noise.
    Seeded,
}

/// Constant velocity added to the plant's position rates (side slope or slip).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drift {
    /// m/s; zero disables the disturbance.
    pub speed: f64,
    pub direction: DriftDirection,
}

impl Default for Drift {
    fn default() -> Self {
        Self {
            speed: 0.0,
            direction: DriftDirection::Seeded,
        }
    }
}

/// Initial value of the nominal error model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NominalInit {
    /// The measured error at `t = 0`.
    Measured,
    /// Zero error: the nominal model starts on the reference.
    Reference,
}

/// Run length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RunLength {
    Seconds(f64),
    /// Multiples of the trajectory duration.
    Laps(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: VehicleParams,
    pub mpc: MpcConfig,
    pub robust: RobustConfig,
    /// Shrink the MPC magnitude bounds by the robust saturation amplitudes.
    pub tighten: bool,
    /// Plant integration step, s. The controller period is `mpc.ts`.
    pub dt: f64,
    pub length: RunLength,
    pub offset: InitialOffset,
    pub toggles: ControlToggles,
    pub drift: Drift,
    pub nominal_init: NominalInit,
    pub validation: ValidationOptions,
    /// Record wall-clock QP times; off keeps logs reproducible.
    pub record_solve_time: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            params: VehicleParams::default(),
            mpc: MpcConfig::default(),
            robust: RobustConfig::default(),
            tighten: true,
            dt: 0.01,
            length: RunLength::Laps(1.0),
            offset: InitialOffset::default(),
            toggles: ControlToggles::default(),
            drift: Drift::default(),
            nominal_init: NominalInit::Reference,
            validation: ValidationOptions::default(),
            record_solve_time: false,
        }
    }
}

impl SimConfig {
    /// Plant substeps per controller period.
    pub fn substeps(&self) -> Result<usize> {
        let ts = self.mpc.ts;
        if !(self.dt > 0.0 && self.dt.is_finite() && self.dt <= ts) {
            return Err(invalid(
                "dt",
                format!("must be in (0, Ts = {ts}], got {}", self.dt),
            ));
        }
        let n = (ts / self.dt).round();
        if (n * self.dt - ts).abs() > 1e-9 * ts {
            return Err(invalid(
                "dt",
                format!(
                    "controller period {ts} is not an integer multiple of {}",
                    self.dt
                ),
            ));
        }
        Ok(n as usize)
    }

    /// Number of controller periods for a trajectory.
    pub fn num_steps(&self, traj: &ReferenceTrajectory) -> Result<usize> {
        let seconds = match self.length {
            RunLength::Seconds(s) => s,
            RunLength::Laps(l) => l * traj.duration(),
        };
        if !(seconds >= 0.0 && seconds.is_finite()) {
            return Err(invalid(
                "length",
                format!("must be finite and >= 0, got {seconds}"),
            ));
        }
        let steps = (seconds / self.mpc.ts).round() as usize;
        if !traj.is_closed() && steps as f64 * self.mpc.ts > traj.duration() + 1e-9 {
            return Err(invalid(
                "length",
                format!(
                    "{seconds} s exceeds the open trajectory's {} s",
                    traj.duration()
                ),
            ));
        }
        Ok(steps)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.mpc.validate()?;
        self.robust.validate()?;
        self.substeps()?;
        if !self.drift.speed.is_finite() {
            return Err(invalid("drift", "speed must be finite"));
        }
        if let DriftDirection::Inertial(h) = self.drift.direction {
            if !h.is_finite() {
                return Err(invalid("drift", "direction must be finite"));
            }
        }
        Ok(())
    }
}

/// Segment class used for the metrics split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentClass {
    Straight,
    Curved,
    Blend,
}

impl SegmentClass {
    pub const ALL: [SegmentClass; 3] = [Self::Straight, Self::Curved, Self::Blend];

    /// `|k| < 1e-6` is straight, `|k|` at the trajectory maximum is curved, anything else is a blend.
    pub fn classify(curvature: f64, max_abs_curvature: f64) -> Self {
        let k = curvature.abs();
        if k < 1e-6 {
            Self::Straight
        } else if (k - max_abs_curvature).abs() <= 1e-9 * max_abs_curvature.max(1.0) {
            Self::Curved
        } else {
            Self::Blend
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Straight => "straight",
            Self::Curved => "curved",
            Self::Blend => "blend",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// QP report for one controller period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpRecord {
    pub status: QpStatus,
    pub iterations: usize,
    pub active_set_size: usize,
    pub objective: f64,
    /// Milliseconds; zero unless solve times are recorded.
    pub solve_ms: f64,
    pub held: bool,
}

/// Everything logged for one controller period.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub reference: VehicleState,
    pub curvature: f64,
    pub truth: VehicleState,
    pub measured: VehicleState,
    pub z_e: ErrorState,
    pub u_f: ControlInput,
    pub u_b: ErrorInput,
    pub u_m: ControlInput,
    /// Commanded `u_f - u_b + u_m` after actuator clamps.
    pub u: ControlInput,
    /// Input seen by the plant after actuator noise.
    pub applied: ControlInput,
    /// Drawbar angle `beta` of the plant.
    pub drawbar: f64,
    /// Trailer steering angle with `applied.relative_angle = drawbar + trailer_steer`.
    pub trailer_steer: f64,
    pub z_m: UncertaintyVector,
    pub z_m_rate: UncertaintyVector,
    pub qp: QpRecord,
    pub actuator_clamped: bool,
    pub mismatch_clamped: bool,
    pub nominal_resynced: bool,
    pub err_tractor: f64,
    pub err_trailer: f64,
    pub class: SegmentClass,
}

/// Per-class error and effort statistics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassMetrics {
    pub steps: usize,
    pub tractor_mean: f64,
    pub tractor_max: f64,
    pub trailer_mean: f64,
    pub trailer_max: f64,
    /// Mean `|u_m|` per channel.
    pub robust_mean_abs: [f64; 3],
    /// Mean `|u_b|` per channel.
    pub feedback_mean_abs: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMetrics {
    pub steps: usize,
    pub straight: ClassMetrics,
    pub curved: ClassMetrics,
    pub blend: ClassMetrics,
    pub tractor_mean: f64,
    pub tractor_max: f64,
    pub trailer_mean: f64,
    pub trailer_max: f64,
    pub qp_ms_mean: f64,
    pub qp_ms_max: f64,
    pub qp_iterations_mean: f64,
    /// Steps whose final working set was nonempty.
    pub constraint_active_steps: usize,
    /// Steps where the previous input was held after a QP failure.
    pub qp_failures: usize,
    pub actuator_clamp_steps: usize,
    pub mismatch_clamp_steps: usize,
    pub nominal_resyncs: usize,
}

impl RunMetrics {
    pub fn class(&self, c: SegmentClass) -> &ClassMetrics {
        match c {
            SegmentClass::Straight => &self.straight,
            SegmentClass::Curved => &self.curved,
            SegmentClass::Blend => &self.blend,
        }
    }
}

fn class_metrics<'a>(records: impl Iterator<Item = &'a StepRecord>) -> ClassMetrics {
    let mut m = ClassMetrics::default();
    for r in records {
        m.steps += 1;
        m.tractor_mean += r.err_tractor;
        m.trailer_mean += r.err_trailer;
        m.tractor_max = m.tractor_max.max(r.err_tractor);
        m.trailer_max = m.trailer_max.max(r.err_trailer);
        for (i, (um, ub)) in r.u_m.as_array().iter().zip(r.u_b.as_array()).enumerate() {
            m.robust_mean_abs[i] += um.abs();
            m.feedback_mean_abs[i] += ub.abs();
        }
    }
    if m.steps > 0 {
        let n = m.steps as f64;
        m.tractor_mean /= n;
        m.trailer_mean /= n;
        for i in 0..3 {
            m.robust_mean_abs[i] /= n;
            m.feedback_mean_abs[i] /= n;
        }
    }
    m
}

/// Aggregates a record stream. Errors on an empty stream.
pub fn compute_metrics(records: &[StepRecord]) -> Result<RunMetrics> {
    if records.is_empty() {
        return Err(invalid("records", "empty record list"));
    }
    let n = records.len() as f64;
    let all = class_metrics(records.iter());
    let of = |c| class_metrics(records.iter().filter(move |r| r.class == c));
    Ok(RunMetrics {
        steps: records.len(),
        straight: of(SegmentClass::Straight),
        curved: of(SegmentClass::Curved),
        blend: of(SegmentClass::Blend),
        tractor_mean: all.tractor_mean,
        tractor_max: all.tractor_max,
        trailer_mean: all.trailer_mean,
        trailer_max: all.trailer_max,
        qp_ms_mean: records.iter().map(|r| r.qp.solve_ms).sum::<f64>() / n,
        qp_ms_max: records.iter().map(|r| r.qp.solve_ms).fold(0.0, f64::max),
        qp_iterations_mean: records.iter().map(|r| r.qp.iterations as f64).sum::<f64>() / n,
        constraint_active_steps: records.iter().filter(|r| r.qp.active_set_size > 0).count(),
        qp_failures: records.iter().filter(|r| r.qp.held).count(),
        actuator_clamp_steps: records.iter().filter(|r| r.actuator_clamped).count(),
        mismatch_clamp_steps: records.iter().filter(|r| r.mismatch_clamped).count(),
        nominal_resyncs: records.iter().filter(|r| r.nominal_resynced).count(),
    })
}

/// Noise draws for one controller period.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct NoiseDraw {
    tractor_pos: (f64, f64),
    trailer_pos: (f64, f64),
    speed: f64,
    yaw: (f64, f64),
    drawbar: f64,
    steer: f64,
}

fn disc(rng: &mut ChaCha8Rng, radius: f64) -> (f64, f64) {
    if radius == 0.0 {
        return (0.0, 0.0);
    }
    let r = radius * rng.random::<f64>().sqrt();
    let th = 2.0 * PI * rng.random::<f64>();
    (r * th.cos(), r * th.sin())
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
}

fn draw(noise: &NoiseConfig, rng: &mut ChaCha8Rng) -> NoiseDraw {
    NoiseDraw {
        tractor_pos: disc(rng, noise.gps_position_bound),
        trailer_pos: disc(rng, noise.gps_position_bound),
        speed: gauss(rng, noise.speed_sigma),
        yaw: (gauss(rng, noise.yaw_sigma), gauss(rng, noise.yaw_sigma)),
        drawbar: gauss(rng, noise.steering_sigma),
        steer: gauss(rng, noise.steering_sigma),
    }
}

/// Position, speed and optional yaw noise applied to the true state.
pub fn inject_measurement_noise(
    truth: &VehicleState,
    noise: &NoiseConfig,
    rng: &mut ChaCha8Rng,
) -> VehicleState {
    apply_measurement(truth, &draw(noise, rng))
}

fn apply_measurement(truth: &VehicleState, d: &NoiseDraw) -> VehicleState {
    VehicleState {
        x_t: truth.x_t + d.tractor_pos.0,
        y_t: truth.y_t + d.tractor_pos.1,
        psi_t: truth.psi_t + d.yaw.0,
        x_i: truth.x_i + d.trailer_pos.0,
        y_i: truth.y_i + d.trailer_pos.1,
        psi_i: truth.psi_i + d.yaw.1,
        v: truth.v + d.speed,
    }
}

/// Why a run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// The controller or plant failed at the given step; records up to it are kept.
    Failed {
        step: usize,
        error: Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<StepRecord>,
    pub metrics: Option<RunMetrics>,
    pub status: RunStatus,
}

fn initial_state(reference: &VehicleState, offset: &InitialOffset) -> VehicleState {
    let (s, c) = reference.psi_t.sin_cos();
    let dx = offset.longitudinal * c - offset.lateral * s;
    let dy = offset.longitudinal * s + offset.lateral * c;
    VehicleState {
        x_t: reference.x_t + dx,
        y_t: reference.y_t + dy,
        psi_t: reference.psi_t + offset.heading,
        x_i: reference.x_i + dx,
        y_i: reference.y_i + dy,
        psi_i: reference.psi_i + offset.heading,
        v: reference.v,
    }
}

/// Offset separating the drift-direction stream from the noise stream.
const DRIFT_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// Inertial drift direction of a run, `None` for body-fixed drift.
pub fn drift_direction(drift: &Drift, seed: u64) -> Option<f64> {
    match drift.direction {
        DriftDirection::BodyLeft => None,
        DriftDirection::Inertial(h) => Some(h),
        DriftDirection::Seeded => {
            Some(ChaCha8Rng::seed_from_u64(seed ^ DRIFT_STREAM).random_range(0.0..2.0 * PI))
        }
    }
}

fn drift_rates(speed: f64, inertial: Option<f64>, heading: f64) -> (f64, f64) {
    let dir = inertial.unwrap_or(heading + PI / 2.0);
    (speed * dir.cos(), speed * dir.sin())
}

/// Runs the closed loop. Configuration errors are returned as `Err`; failures
/// during the run end it early with [`RunStatus::Failed`] and partial records.
pub fn run_closed_loop(
    traj: &ReferenceTrajectory,
    sim: &SimConfig,
    noise: &NoiseConfig,
) -> Result<RunOutput> {
    sim.validate()?;
    noise.validate()?;
    let report = validate_trajectory(traj, &sim.params, &sim.validation);
    if !report.passed() {
        return Err(Error::Construction(
            report.to_string().trim_end().to_string(),
        ));
    }
    let p = &sim.params;
    let ts = sim.mpc.ts;
    let substeps = sim.substeps()?;
    let dt = ts / substeps as f64;
    let steps = sim.num_steps(traj)?;
    let max_k = traj.max_abs_curvature();

    let mpc_cfg = if sim.tighten {
        tighten_input_bounds(&sim.mpc, &sim.robust.gains)?
    } else {
        sim.mpc.clone()
    };
    let mut mpc = Controller::new(mpc_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let drift_dir = drift_direction(&sim.drift, noise.seed);

    let r0 = sample_reference(traj, 0.0, p)?;
    let mut truth = initial_state(&r0.state, &sim.offset);
    let mut robust: Option<RobustController> = None;
    let mut records = Vec::with_capacity(steps + 1);

    let fail = |records: Vec<StepRecord>, step: usize, error: Error| {
        let metrics = compute_metrics(&records).ok();
        Ok(RunOutput {
            records,
            metrics,
            status: RunStatus::Failed { step, error },
        })
    };

    for k in 0..=steps {
        let t = k as f64 * ts;
        let reference = match sample_reference(traj, t, p) {
            Ok(r) => r,
            Err(e) => return fail(records, k, e),
        };
        let d = draw(noise, &mut rng);
        let measured = apply_measurement(&truth, &d);
        let z_e = to_error_frame(&reference.state, &measured);
        let model = discretize_zoh(&linearize_about_reference(&reference, p), ts);

        let drawbar = normalize(truth.psi_t - truth.psi_i);
        let drawbar_measured = drawbar + d.drawbar;

        let (u_b, qp) = if sim.toggles.feedback {
            match mpc.step(&z_e, &model) {
                Ok((u, diag)) => (
                    u,
                    QpRecord {
                        status: diag.status,
                        iterations: diag.iterations,
                        active_set_size: diag.active_set_size,
                        objective: diag.objective,
                        solve_ms: if sim.record_solve_time {
                            diag.solve_time.as_secs_f64() * 1e3
                        } else {
                            0.0
                        },
                        held: diag.held,
                    },
                ),
                Err(e) => return fail(records, k, e),
            }
        } else {
            (
                ErrorInput::default(),
                QpRecord {
                    status: QpStatus::Optimal,
                    iterations: 0,
                    active_set_size: 0,
                    objective: 0.0,
                    solve_ms: 0.0,
                    held: false,
                },
            )
        };

        let u_f = if sim.toggles.feedforward {
            match feedforward_action(&reference, drawbar_measured, p) {
                Ok(f) => f.control(),
                Err(e) => return fail(records, k, e),
            }
        } else {
            ControlInput::default()
        };

        let (u_m, z_m, z_m_rate, mismatch_clamped, nominal_resynced) = if sim.toggles.robust {
            let ctrl = match &mut robust {
                Some(c) => c,
                None => {
                    let init = match sim.nominal_init {
                        NominalInit::Measured => z_e,
                        NominalInit::Reference => ErrorState::default(),
                    };
                    robust.insert(RobustController::new(sim.robust, ts, init)?)
                }
            };
            let out = ctrl.evaluate(&z_e);
            ctrl.advance(&model, &u_b);
            (
                out.u_m,
                out.z_m,
                out.z_m_rate,
                out.clamp_engaged,
                out.resynced,
            )
        } else {
            (
                ControlInput::default(),
                UncertaintyVector::default(),
                UncertaintyVector::default(),
                false,
                false,
            )
        };

        let combined = combine_control(&u_f, &u_b, &u_m);
        let u = combined.input;
        // the trailer steering command is formed from the measured drawbar angle
        let trailer_steer = u.relative_angle - drawbar_measured;
        let applied = ControlInput::new(u.steer + d.steer, drawbar + trailer_steer, u.hydrostat);

        let err_tractor = (truth.x_t - reference.state.x_t).hypot(truth.y_t - reference.state.y_t);
        let err_trailer = (truth.x_i - reference.state.x_i).hypot(truth.y_i - reference.state.y_i);
        records.push(StepRecord {
            t,
            reference: reference.state,
            curvature: reference.curvature,
            truth,
            measured,
            z_e,
            u_f,
            u_b,
            u_m,
            u,
            applied,
            drawbar,
            trailer_steer,
            z_m,
            z_m_rate,
            qp,
            actuator_clamped: combined.clamped,
            mismatch_clamped,
            nominal_resynced,
            err_tractor,
            err_trailer,
            class: SegmentClass::classify(reference.curvature, max_k),
        });
        if k == steps {
            break;
        }

        for _ in 0..substeps {
            let next = rk4_step(&truth, dt, |s| {
                let mut ds = dynamics_rhs(s, &applied, p)?;
                if sim.drift.speed != 0.0 {
                    let (tx, ty) = drift_rates(sim.drift.speed, drift_dir, s.psi_t);
                    let (ix, iy) = drift_rates(sim.drift.speed, drift_dir, s.psi_i);
                    ds.x_t += tx;
                    ds.y_t += ty;
                    ds.x_i += ix;
                    ds.y_i += iy;
                }
                Ok(ds)
            });
            match next {
                Ok(s) => truth = s,
                Err(e) => return fail(records, k, e),
            }
        }
    }
    let metrics = compute_metrics(&records)?;
    Ok(RunOutput {
        records,
        metrics: Some(metrics),
        status: RunStatus::Completed,
    })
}

/// One entry of a batch sweep.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub trajectory: ReferenceTrajectory,
    pub sim: SimConfig,
    pub noise: NoiseConfig,
}

/// Runs independent simulations in parallel; results keep the input order.
pub fn run_batch(items: &[BatchItem]) -> Vec<Result<RunOutput>> {
    items
        .par_iter()
        .map(|it| run_closed_loop(&it.trajectory, &it.sim, &it.noise))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::build_figure_eight;
    use approx::assert_abs_diff_eq;

    fn figure8() -> ReferenceTrajectory {
        build_figure_eight(20.0, 10.0, 1.0, 2.0).unwrap()
    }

    fn quiet() -> NoiseConfig {
        NoiseConfig::off(0)
    }

    #[test]
    fn zero_noise_measures_truth() {
        let s = VehicleState {
            x_t: 1.0,
            y_t: 2.0,
            psi_t: 0.3,
            x_i: -1.0,
            y_i: 1.5,
            psi_i: 0.2,
            v: 0.9,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(inject_measurement_noise(&s, &quiet(), &mut rng), s);
    }

    #[test]
    fn gps_noise_stays_on_the_disc() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = NoiseConfig::default();
        let s = VehicleState::default();
        for _ in 0..10_000 {
            let m = inject_measurement_noise(&s, &noise, &mut rng);
            assert!(m.x_t.hypot(m.y_t) <= 0.03);
            assert!(m.x_i.hypot(m.y_i) <= 0.03);
            assert_eq!((m.psi_t, m.psi_i), (0.0, 0.0));
        }
    }

    #[test]
    fn speed_noise_standard_deviation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let noise = NoiseConfig::default();
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| inject_measurement_noise(&VehicleState::default(), &noise, &mut rng).v)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((sd - 0.1).abs() < 0.002, "sd {sd}");
    }

    #[test]
    fn classification() {
        assert_eq!(SegmentClass::classify(0.0, 0.1), SegmentClass::Straight);
        assert_eq!(SegmentClass::classify(-0.1, 0.1), SegmentClass::Curved);
        assert_eq!(SegmentClass::classify(0.05, 0.1), SegmentClass::Blend);
        for c in SegmentClass::ALL {
            assert_eq!(SegmentClass::parse(c.as_str()), Some(c));
        }
    }

    #[test]
    fn time_base() {
        let cfg = SimConfig::default();
        assert_eq!(cfg.substeps().unwrap(), 20);
        assert!(SimConfig {
            dt: 0.03,
            ..SimConfig::default()
        }
        .substeps()
        .is_err());
        assert!(SimConfig {
            dt: 0.0,
            ..SimConfig::default()
        }
        .substeps()
        .is_err());
        // t_k = k Ts is exact up to one rounding, with no accumulation
        let t = 10_000.0 * cfg.mpc.ts;
        assert_eq!(t, 2000.0);
    }

    fn record(class: SegmentClass, tractor: f64, trailer: f64) -> StepRecord {
        StepRecord {
            t: 0.0,
            reference: VehicleState::default(),
            curvature: 0.0,
            truth: VehicleState::default(),
            measured: VehicleState::default(),
            z_e: ErrorState::default(),
            u_f: ControlInput::default(),
            u_b: ErrorInput::default(),
            u_m: ControlInput::new(tractor, 0.0, 0.0),
            u: ControlInput::default(),
            applied: ControlInput::default(),
            drawbar: 0.0,
            trailer_steer: 0.0,
            z_m: UncertaintyVector::default(),
            z_m_rate: UncertaintyVector::default(),
            qp: QpRecord {
                status: QpStatus::Optimal,
                iterations: 1,
                active_set_size: 0,
                objective: 0.0,
                solve_ms: 0.0,
                held: false,
            },
            actuator_clamped: false,
            mismatch_clamped: false,
            nominal_resynced: false,
            err_tractor: tractor,
            err_trailer: trailer,
            class,
        }
    }

    #[test]
    fn metrics_per_class() {
        let recs = vec![
            record(SegmentClass::Straight, 0.1, 0.2),
            record(SegmentClass::Straight, 0.3, 0.2),
            record(SegmentClass::Curved, 0.5, 0.7),
            record(SegmentClass::Blend, 0.2, 0.1),
        ];
        let m = compute_metrics(&recs).unwrap();
        assert_abs_diff_eq!(m.straight.tractor_mean, 0.2, epsilon = 1e-15);
        assert_eq!(m.straight.tractor_max, 0.3);
        assert_eq!(m.curved.trailer_mean, 0.7);
        assert_eq!(m.blend.steps, 1);
        assert_abs_diff_eq!(m.tractor_mean, 0.275, epsilon = 1e-15);
        assert_abs_diff_eq!(m.curved.robust_mean_abs[0], 0.5, epsilon = 1e-15);
        assert_eq!(m.straight.steps + m.curved.steps + m.blend.steps, m.steps);
        assert!(compute_metrics(&[]).is_err());
    }

    #[test]
    fn rigid_offset_metrics() {
        let recs: Vec<_> = (0..5)
            .map(|_| record(SegmentClass::Straight, 0.1, 0.1))
            .collect();
        let m = compute_metrics(&recs).unwrap();
        assert_abs_diff_eq!(m.straight.tractor_mean, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn on_reference_run_is_exact_at_start() {
        let out = run_closed_loop(
            &figure8(),
            &SimConfig {
                length: RunLength::Seconds(1.0),
                ..Default::default()
            },
            &quiet(),
        )
        .unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        assert_eq!(out.records.len(), 6);
        assert_eq!(out.records[0].err_tractor, 0.0);
        assert_eq!(out.records[0].z_e, ErrorState::default());
    }

    #[test]
    fn hitch_angles_are_consistent() {
        let out = run_closed_loop(
            &figure8(),
            &SimConfig {
                length: RunLength::Seconds(60.0),
                ..Default::default()
            },
            &NoiseConfig {
                seed: 9,
                ..Default::default()
            },
        )
        .unwrap();
        for r in &out.records {
            assert!((r.applied.relative_angle - (r.drawbar + r.trailer_steer)).abs() <= 1e-12);
        }
    }

    #[test]
    fn identical_seeds_give_identical_records() {
        let cfg = SimConfig {
            length: RunLength::Seconds(30.0),
            ..Default::default()
        };
        let noise = NoiseConfig {
            seed: 17,
            ..Default::default()
        };
        let a = run_closed_loop(&figure8(), &cfg, &noise).unwrap();
        let b = run_closed_loop(&figure8(), &cfg, &noise).unwrap();
        assert_eq!(a, b);
        let c = run_closed_loop(&figure8(), &cfg, &NoiseConfig { seed: 18, ..noise }).unwrap();
        assert_ne!(a.records, c.records);
    }

    /// Tractor position error after driving `[s0, s1]` of the path at unit speed
    /// with the curvature the small-angle feedforward produces, `tan(L k) / L`,
    /// sampled and held every 0.2 m like the controller.
    fn small_angle_drift(
        traj: &ReferenceTrajectory,
        s0: f64,
        s1: f64,
        wheelbase: f64,
    ) -> (f64, f64) {
        let start = traj.pose_at_arclength(s0);
        let (mut x, mut y, mut th) = (start.x, start.y, start.heading);
        let n = ((s1 - s0) / 1e-3).ceil() as usize;
        let h = (s1 - s0) / n as f64;
        let rate = |s: f64| {
            let held = (s / 0.2 + 1e-9).floor() * 0.2;
            (wheelbase * traj.pose_at_arclength(held).curvature).tan() / wheelbase
        };
        for i in 0..n {
            let s = s0 + i as f64 * h;
            // midpoint rule on heading, exact chord for position
            let k1 = rate(s);
            let k2 = rate(s + 0.5 * h);
            let th_mid = th + 0.5 * h * k1;
            let th_next = th + h * k2;
            x += h * th_mid.cos();
            y += h * th_mid.sin();
            th = th_next;
        }
        let end = traj.pose_at_arclength(s1);
        (x - end.x, y - end.y)
    }

    #[test]
    fn feedforward_only_matches_the_small_angle_bias() {
        let traj = figure8();
        let cfg = SimConfig {
            toggles: ControlToggles {
                feedforward: true,
                feedback: false,
                robust: false,
            },
            ..Default::default()
        };
        let out = run_closed_loop(&traj, &cfg, &quiet()).unwrap();
        // the first straight (10 m) is driven exactly
        for r in out
            .records
            .iter()
            .take_while(|r| r.class == SegmentClass::Straight)
        {
            assert!(r.err_tractor < 1e-9, "t = {} err {}", r.t, r.err_tractor);
        }
        // through the first lobe the error is the steering-tangent bias alone
        let lobe_end = traj.segment_times()[4];
        let k = (lobe_end / 0.2).floor() as usize;
        let r = &out.records[k];
        let (dx, dy) = small_angle_drift(&traj, 10.0, r.t, 1.4);
        let oracle = dx.hypot(dy);
        assert!(
            (r.err_tractor - oracle).abs() < 5e-3,
            "sim {} oracle {}",
            r.err_tractor,
            oracle
        );
        assert!(oracle > 0.1);
    }

    #[test]
    fn noise_free_nominal_run_keeps_mismatch_inside_the_box() {
        let out = run_closed_loop(&figure8(), &SimConfig::default(), &quiet()).unwrap();
        let m = out.metrics.unwrap();
        assert_eq!(m.mismatch_clamp_steps, 0);
        assert_eq!(m.qp_failures, 0);
    }

    #[test]
    fn batch_preserves_order() {
        let items: Vec<BatchItem> = (0..4)
            .map(|s| BatchItem {
                trajectory: figure8(),
                sim: SimConfig {
                    length: RunLength::Seconds(10.0),
                    ..Default::default()
                },
                noise: NoiseConfig {
                    seed: s,
                    ..Default::default()
                },
            })
            .collect();
        let par = run_batch(&items);
        for (it, r) in items.iter().zip(par) {
            assert_eq!(
                r.unwrap(),
                run_closed_loop(&it.trajectory, &it.sim, &it.noise).unwrap()
            );
        }
    }

    #[test]
    fn drift_moves_a_stopped_vehicle() {
        let traj = figure8();
        let cfg = SimConfig {
            toggles: ControlToggles {
                feedforward: false,
                feedback: false,
                robust: false,
            },
            drift: Drift {
                speed: 0.05,
                direction: DriftDirection::Inertial(PI / 2.0),
            },
            length: RunLength::Seconds(0.2),
            ..Default::default()
        };
        let mut out = run_closed_loop(&traj, &cfg, &quiet()).unwrap();
        // zero hydrostat: the speed decays while the drift carries both bodies north
        let last = out.records.pop().unwrap();
        let first = &out.records[0];
        assert_abs_diff_eq!(
            last.truth.y_i - first.truth.y_i - (last.truth.y_t - first.truth.y_t),
            0.0,
            epsilon = 1e-9
        );
        let a = drift_direction(
            &Drift {
                speed: 0.05,
                direction: DriftDirection::Seeded,
            },
            3,
        )
        .unwrap();
        let b = drift_direction(
            &Drift {
                speed: 0.05,
                direction: DriftDirection::Seeded,
            },
            3,
        )
        .unwrap();
        assert_eq!(a, b);
        assert!((0.0..2.0 * PI).contains(&a));
        assert!(drift_direction(&Drift::default(), 0).is_some());
        assert_eq!(
            drift_direction(
                &Drift {
                    speed: 1.0,
                    direction: DriftDirection::BodyLeft
                },
                0
            ),
            None
        );
    }

    #[test]
    fn invalid_trajectory_rejected() {
        let unblended = build_figure_eight(20.0, 10.0, 1.0, 0.0).unwrap();
        assert!(run_closed_loop(&unblended, &SimConfig::default(), &quiet()).is_err());
    }
}
