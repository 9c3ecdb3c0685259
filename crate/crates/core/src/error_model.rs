//! Body-frame tracking error, its nonlinear dynamics, and the linear
//! time-varying prediction model used by the MPC.

use nalgebra::{SMatrix, SVector, Vector3};

use crate::angle::normalize;
use crate::error::Result;
use crate::trajectory::ReferenceSample;
use crate::vehicle::{checked_tan, trailer_yaw_rate, ControlInput, VehicleParams, VehicleState};

pub type Matrix7 = SMatrix<f64, 7, 7>;
pub type Matrix7x3 = SMatrix<f64, 7, 3>;
pub type Vector7 = SVector<f64, 7>;

/// Tracking error `z_e = T(psi_t, psi_i) (z_r - z)`, expressed in the tractor
/// and trailer body frames.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorState {
    pub x_t: f64,
    pub y_t: f64,
    pub psi_t: f64,
    pub x_i: f64,
    pub y_i: f64,
    pub psi_i: f64,
    pub v: f64,
}

impl ErrorState {
    pub fn to_vector(&self) -> Vector7 {
        Vector7::from([
            self.x_t, self.y_t, self.psi_t, self.x_i, self.y_i, self.psi_i, self.v,
        ])
    }

    pub fn from_vector(v: &Vector7) -> Self {
        Self {
            x_t: v[0],
            y_t: v[1],
            psi_t: v[2],
            x_i: v[3],
            y_i: v[4],
            psi_i: v[5],
            v: v[6],
        }
    }

    pub fn as_array(&self) -> [f64; 7] {
        [
            self.x_t, self.y_t, self.psi_t, self.x_i, self.y_i, self.psi_i, self.v,
        ]
    }
}

/// Input error `u_e = u_r - u` in plant-input layout `(delta_t, lambda, HP)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorInput {
    pub steer: f64,
    pub relative_angle: f64,
    pub hydrostat: f64,
}

impl ErrorInput {
    pub const fn new(steer: f64, relative_angle: f64, hydrostat: f64) -> Self {
        Self {
            steer,
            relative_angle,
            hydrostat,
        }
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.steer, self.relative_angle, self.hydrostat)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.steer, self.relative_angle, self.hydrostat]
    }
}

/// Continuous-time linearisation `z_e' = A z_e + B u_e`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtvContinuous {
    pub a: Matrix7,
    pub b: Matrix7x3,
}

/// Zero-order-hold discretisation `z_e(k+1) = A_d z_e(k) + B_d u_e(k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LtvDiscrete {
    pub a: Matrix7,
    pub b: Matrix7x3,
    pub ts: f64,
}

impl LtvDiscrete {
    pub fn step(&self, z: &ErrorState, u: &ErrorInput) -> ErrorState {
        ErrorState::from_vector(&(self.a * z.to_vector() + self.b * u.to_vector()))
    }
}

pub fn to_error_frame(reference: &VehicleState, state: &VehicleState) -> ErrorState {
    let (st, ct) = state.psi_t.sin_cos();
    let (si, ci) = state.psi_i.sin_cos();
    let (dxt, dyt) = (reference.x_t - state.x_t, reference.y_t - state.y_t);
    let (dxi, dyi) = (reference.x_i - state.x_i, reference.y_i - state.y_i);
    ErrorState {
        x_t: ct * dxt + st * dyt,
        y_t: -st * dxt + ct * dyt,
        psi_t: normalize(reference.psi_t - state.psi_t),
        x_i: ci * dxi + si * dyi,
        y_i: -si * dxi + ci * dyi,
        psi_i: normalize(reference.psi_i - state.psi_i),
        v: reference.v - state.v,
    }
}

/// Nonlinear error dynamics for actual input `input` and actual yaw rates.
///
/// The actual speed is recovered as `v = v_r - v_e`. The trailer position rows
/// couple to the trailer error states, matching the linear model.
pub fn error_dynamics_nonlinear(
    z_e: &ErrorState,
    input: &ControlInput,
    reference: &ReferenceSample,
    yaw_rate_tractor: f64,
    yaw_rate_trailer: f64,
    params: &VehicleParams,
) -> Result<ErrorState> {
    let tan_ref = checked_tan(reference.input.steer)?;
    let tan_act = checked_tan(input.steer)?;
    let v_r = reference.speed;
    let v = v_r - z_e.v;
    let tau = params.speed_time_constant;
    Ok(ErrorState {
        x_t: yaw_rate_tractor * z_e.y_t - v + v_r * z_e.psi_t.cos(),
        y_t: -yaw_rate_tractor * z_e.x_t + v_r * z_e.psi_t.sin(),
        psi_t: (v_r * tan_ref - v * tan_act) / params.wheelbase_tractor,
        x_i: yaw_rate_trailer * z_e.y_i - v + v_r * z_e.psi_i.cos(),
        y_i: -yaw_rate_trailer * z_e.x_i + v_r * z_e.psi_i.sin(),
        psi_i: trailer_yaw_rate(v_r, tan_ref, reference.input.relative_angle, params)
            - trailer_yaw_rate(v, tan_act, input.relative_angle, params),
        v: -z_e.v / tau + params.speed_gain / tau * (reference.input.hydrostat - input.hydrostat),
    })
}

/// Linear error model about the reference (small reference steering angles).
pub fn linearize_about_reference(
    reference: &ReferenceSample,
    params: &VehicleParams,
) -> LtvContinuous {
    let v_r = reference.speed;
    let (gt, gi) = (reference.yaw_rate_tractor, reference.yaw_rate_trailer);
    let (lt, li, ld) = (
        params.wheelbase_tractor,
        params.trailer_length,
        params.drawbar_length,
    );
    let mut a = Matrix7::zeros();
    a[(0, 1)] = gt;
    a[(1, 0)] = -gt;
    a[(1, 2)] = v_r;
    a[(0, 6)] = 1.0;
    a[(3, 4)] = gi;
    a[(4, 3)] = -gi;
    a[(4, 5)] = v_r;
    a[(3, 6)] = 1.0;
    a[(6, 6)] = -1.0 / params.speed_time_constant;
    let mut b = Matrix7x3::zeros();
    b[(2, 0)] = v_r / lt;
    b[(5, 0)] = v_r * ld / (lt * li);
    b[(5, 1)] = v_r / li;
    b[(6, 2)] = params.speed_gain / params.speed_time_constant;
    LtvContinuous { a, b }
}

/// Exact zero-order-hold discretisation via the exponential of the augmented
/// matrix `[[A, B], [0, 0]] * Ts`.
pub fn discretize_zoh(cont: &LtvContinuous, ts: f64) -> LtvDiscrete {
    let mut m = SMatrix::<f64, 10, 10>::zeros();
    m.fixed_view_mut::<7, 7>(0, 0).copy_from(&(cont.a * ts));
    m.fixed_view_mut::<7, 3>(0, 7).copy_from(&(cont.b * ts));
    let e = m.exp();
    LtvDiscrete {
        a: e.fixed_view::<7, 7>(0, 0).into_owned(),
        b: e.fixed_view::<7, 3>(0, 7).into_owned(),
        ts,
    }
}
