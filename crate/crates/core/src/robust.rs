//! Feedforward inputs, the tube-style robust term and input composition.

use crate::error::{invalid, Error, Result};
use crate::error_model::{ErrorInput, ErrorState, LtvDiscrete};
use crate::lmpc::MpcConfig;
use crate::trajectory::ReferenceSample;
use crate::vehicle::{ControlInput, VehicleParams};

/// Physical steering limit for both the tractor wheels and the relative angle, rad.
pub const MAX_STEER: f64 = 35.0 * std::f64::consts::PI / 180.0;

/// Reference input `u_r = (delta_t, lambda, HP)` for a reference speed and
/// the two reference yaw rates, under the small-angle steering model.
pub fn reference_input(
    speed: f64,
    yaw_rate_tractor: f64,
    yaw_rate_trailer: f64,
    params: &VehicleParams,
) -> Result<ControlInput> {
    if speed == 0.0 {
        return Err(Error::SingularReference);
    }
    if params.speed_gain == 0.0 {
        return Err(invalid("speed_gain", "must be nonzero"));
    }
    Ok(ControlInput {
        steer: yaw_rate_tractor * params.wheelbase_tractor / speed,
        relative_angle: (yaw_rate_trailer * params.trailer_length
            - yaw_rate_tractor * params.drawbar_length)
            / speed,
        hydrostat: speed / params.speed_gain,
    })
}

/// Feedforward action with the relative angle split at the current drawbar angle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeedforwardAction {
    pub steer: f64,
    /// `delta_i_r = lambda_r - beta`.
    pub trailer_steer: f64,
    pub hydrostat: f64,
    /// `lambda_r`.
    pub relative_angle: f64,
}

impl FeedforwardAction {
    /// The action as a plant input in `(delta_t, lambda, HP)` form.
    pub fn control(&self) -> ControlInput {
        ControlInput::new(self.steer, self.relative_angle, self.hydrostat)
    }
}

pub fn feedforward_action(
    reference: &ReferenceSample,
    drawbar: f64,
    params: &VehicleParams,
) -> Result<FeedforwardAction> {
    let u = reference_input(
        reference.speed,
        reference.yaw_rate_tractor,
        reference.yaw_rate_trailer,
        params,
    )?;
    Ok(FeedforwardAction {
        steer: u.steer,
        trailer_steer: u.relative_angle - drawbar,
        hydrostat: u.hydrostat,
        relative_angle: u.relative_angle,
    })
}

/// Gains of the saturated PD law, ordered (tractor steer, trailer steer, hydrostat).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustGains {
    pub k_p: [f64; 3],
    pub k_d: [f64; 3],
    /// Saturation amplitudes in input units.
    pub k_s: [f64; 3],
}

impl Default for RobustGains {
    fn default() -> Self {
        Self {
            k_p: [2.0, 1.0, 10.0],
            k_d: [4.0, 2.0, 20.0],
            k_s: [0.2, 0.1, 0.10],
        }
    }
}

impl RobustGains {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            let (p, d, s) = (self.k_p[i], self.k_d[i], self.k_s[i]);
            if !(p > 0.0 && p.is_finite()) {
                return Err(invalid(
                    "k_p",
                    format!("entry {i} must be finite and > 0, got {p}"),
                ));
            }
            if !(d > p && d.is_finite()) {
                return Err(invalid(
                    "k_d",
                    format!("entry {i} must exceed k_p ({p}), got {d}"),
                ));
            }
            if !(s > 0.0 && s.is_finite()) {
                return Err(invalid(
                    "k_s",
                    format!("entry {i} must be finite and > 0, got {s}"),
                ));
            }
        }
        Ok(())
    }
}

/// Body-frame position mismatch between the measured and the nominal error,
/// `z_e - zbar_e`. This equals the nominal position minus the actual position
/// expressed in the body frame, so a positive entry asks for motion towards
/// positive body axes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UncertaintyVector {
    pub x_t: f64,
    pub y_t: f64,
    pub x_i: f64,
    pub y_i: f64,
}

impl UncertaintyVector {
    pub fn as_array(&self) -> [f64; 4] {
        [self.x_t, self.y_t, self.x_i, self.y_i]
    }

    fn from_array(a: [f64; 4]) -> Self {
        Self {
            x_t: a[0],
            y_t: a[1],
            x_i: a[2],
            y_i: a[3],
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_array(self.as_array().map(f))
    }

    pub fn max_abs(&self) -> f64 {
        self.as_array().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn raw_mismatch(nominal: &ErrorState, measured: &ErrorState) -> UncertaintyVector {
    UncertaintyVector {
        x_t: measured.x_t - nominal.x_t,
        y_t: measured.y_t - nominal.y_t,
        x_i: measured.x_i - nominal.x_i,
        y_i: measured.y_i - nominal.y_i,
    }
}

/// Nominal error-model state and the last mismatch with its filtered rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NominalModelState {
    pub z: ErrorState,
    pub z_m: UncertaintyVector,
    pub z_m_rate: UncertaintyVector,
}

/// One step of the disturbance-free linear error model.
pub fn propagate_nominal(
    nominal: &NominalModelState,
    model: &LtvDiscrete,
    input: &ErrorInput,
) -> NominalModelState {
    NominalModelState {
        z: model.step(&nominal.z, input),
        ..*nominal
    }
}

/// Position mismatch clamped to `[-1, 1]` per channel.
pub fn uncertainty_vector(nominal: &NominalModelState, measured: &ErrorState) -> UncertaintyVector {
    raw_mismatch(&nominal.z, measured).map(|v| v.clamp(-1.0, 1.0))
}

/// Saturated PD law. The trailer channel acts on the relative-angle input.
pub fn robust_action(
    z_m: &UncertaintyVector,
    z_m_rate: &UncertaintyVector,
    gains: &RobustGains,
) -> ControlInput {
    let law =
        |i: usize, e: f64, de: f64| gains.k_s[i] * (gains.k_p[i] * e + gains.k_d[i] * de).tanh();
    ControlInput {
        steer: law(0, z_m.y_t, z_m_rate.y_t),
        relative_angle: law(1, z_m.y_i, z_m_rate.y_i),
        hydrostat: law(2, z_m.x_t, z_m_rate.x_t),
    }
}

/// Plant input after the final actuator saturation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinedControl {
    pub input: ControlInput,
    /// Whether any actuator limit engaged.
    pub clamped: bool,
}

/// `u = u_f - u_b + u_m`, then `|delta_t|, |lambda| <= 35 deg`, `HP in [0, 1]`.
pub fn combine_control(
    u_f: &ControlInput,
    u_b: &ErrorInput,
    u_m: &ControlInput,
) -> CombinedControl {
    let raw = [
        u_f.steer - u_b.steer + u_m.steer,
        u_f.relative_angle - u_b.relative_angle + u_m.relative_angle,
        u_f.hydrostat - u_b.hydrostat + u_m.hydrostat,
    ];
    let out = [
        raw[0].clamp(-MAX_STEER, MAX_STEER),
        raw[1].clamp(-MAX_STEER, MAX_STEER),
        raw[2].clamp(0.0, 1.0),
    ];
    CombinedControl {
        input: ControlInput::new(out[0], out[1], out[2]),
        clamped: raw != out,
    }
}

/// Shrinks the error-input magnitude bounds by the robust saturation amplitudes.
///
/// A saturation equal to its bound leaves a zero-width channel, which the MPC
/// treats as fixed at zero; a saturation above its bound is an error.
pub fn tighten_input_bounds(cfg: &MpcConfig, gains: &RobustGains) -> Result<MpcConfig> {
    let mut out = cfg.clone();
    for i in 0..3 {
        let (bound, ks) = (cfg.magnitude_bounds[i], gains.k_s[i]);
        if ks > bound + 1e-12 {
            return Err(Error::EmptyTightenedSet {
                channel: i,
                saturation: ks,
                bound,
            });
        }
        out.magnitude_bounds[i] = (bound - ks).max(0.0);
    }
    Ok(out)
}

/// Settings of the stateful robust term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustConfig {
    pub gains: RobustGains,
    /// Low-pass time constant of the mismatch-rate estimate, s.
    pub rate_filter_time_constant: f64,
    /// Consecutive steps with every channel outside the clamp box before the
    /// nominal model is re-synchronised to the measurement.
    pub resync_steps: usize,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            gains: RobustGains::default(),
            rate_filter_time_constant: 0.4,
            resync_steps: 10,
        }
    }
}

impl RobustConfig {
    pub fn validate(&self) -> Result<()> {
        self.gains.validate()?;
        if !(self.rate_filter_time_constant >= 0.0 && self.rate_filter_time_constant.is_finite()) {
            return Err(invalid(
                "rate_filter_time_constant",
                "must be finite and >= 0",
            ));
        }
        if self.resync_steps == 0 {
            return Err(invalid("resync_steps", "must be >= 1"));
        }
        Ok(())
    }
}

/// Output of one robust-term evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustOutput {
    pub u_m: ControlInput,
    pub z_m: UncertaintyVector,
    pub z_m_rate: UncertaintyVector,
    /// Raw mismatch exceeded the clamp box on some channel.
    pub clamp_engaged: bool,
    /// The nominal model was re-synchronised before this evaluation.
    pub resynced: bool,
}

/// Nominal model, rate filter and re-synchronisation logic for one run.
#[derive(Debug, Clone)]
pub struct RobustController {
    cfg: RobustConfig,
    ts: f64,
    nominal: NominalModelState,
    previous: Option<UncertaintyVector>,
    outside_count: usize,
}

impl RobustController {
    /// Starts with the nominal error state at `initial`.
    pub fn new(cfg: RobustConfig, ts: f64, initial: ErrorState) -> Result<Self> {
        cfg.validate()?;
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(invalid("ts", format!("must be finite and > 0, got {ts}")));
        }
        Ok(Self {
            cfg,
            ts,
            nominal: NominalModelState {
                z: initial,
                ..Default::default()
            },
            previous: None,
            outside_count: 0,
        })
    }

    pub fn nominal(&self) -> &NominalModelState {
        &self.nominal
    }

    pub fn config(&self) -> &RobustConfig {
        &self.cfg
    }

    /// Evaluates `u_m` against the measured error at the current step.
    pub fn evaluate(&mut self, measured: &ErrorState) -> RobustOutput {
        let raw = raw_mismatch(&self.nominal.z, measured);
        let mut resynced = false;
        if raw.as_array().iter().all(|v| v.abs() > 1.0) {
            self.outside_count += 1;
        } else {
            self.outside_count = 0;
        }
        if self.outside_count >= self.cfg.resync_steps {
            self.nominal = NominalModelState {
                z: *measured,
                ..Default::default()
            };
            self.previous = None;
            self.outside_count = 0;
            resynced = true;
        }
        let z_m = uncertainty_vector(&self.nominal, measured);
        let rate = match self.previous {
            None => UncertaintyVector::default(),
            Some(prev) => {
                let gain = self.ts / (self.cfg.rate_filter_time_constant + self.ts);
                let p = prev.as_array();
                let z = z_m.as_array();
                let f = self.nominal.z_m_rate.as_array();
                UncertaintyVector::from_array(std::array::from_fn(|i| {
                    f[i] + gain * ((z[i] - p[i]) / self.ts - f[i])
                }))
            }
        };
        self.previous = Some(z_m);
        self.nominal.z_m = z_m;
        self.nominal.z_m_rate = rate;
        RobustOutput {
            u_m: robust_action(&z_m, &rate, &self.cfg.gains),
            z_m,
            z_m_rate: rate,
            clamp_engaged: raw.max_abs() > 1.0,
            resynced,
        }
    }

    /// Advances the nominal model with the nominal (feedback) error input.
    pub fn advance(&mut self, model: &LtvDiscrete, input: &ErrorInput) {
        self.nominal = propagate_nominal(&self.nominal, model, input);
    }
}
