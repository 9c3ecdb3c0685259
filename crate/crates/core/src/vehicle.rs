//! Kinematic tricycle model of the tractor-trailer and its plant integrator.

use nalgebra::{SVector, Vector3};

use crate::error::{invalid, Error, Result};

/// Physical parameters of the tractor-trailer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Front-to-rear axle distance of the tractor, m.
    pub wheelbase_tractor: f64,
    /// Second hitch joint to trailer axle, m.
    pub trailer_length: f64,
    /// Tractor rear axle to second hitch joint, m.
    pub drawbar_length: f64,
    /// Time constant of the first-order speed model, s.
    pub speed_time_constant: f64,
    /// Steady-state speed per unit hydrostat position, m/s.
    pub speed_gain: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase_tractor: 1.4,
            trailer_length: 1.3,
            drawbar_length: 1.1,
            speed_time_constant: 2.05,
            speed_gain: 1.4,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("wheelbase_tractor", self.wheelbase_tractor),
            ("trailer_length", self.trailer_length),
            ("drawbar_length", self.drawbar_length),
            ("speed_time_constant", self.speed_time_constant),
            ("speed_gain", self.speed_gain),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(
                    name,
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        Ok(())
    }

    /// Drawbar plus trailer length: the along-path lag of the trailer behind the tractor.
    pub fn hitch_offset(&self) -> f64 {
        self.drawbar_length + self.trailer_length
    }
}

/// Plant state `(x_t, y_t, psi_t, x_i, y_i, psi_i, v)`.
///
/// Yaw angles are unwrapped; use [`crate::angle::normalize`] when forming differences.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub x_t: f64,
    pub y_t: f64,
    pub psi_t: f64,
    pub x_i: f64,
    pub y_i: f64,
    pub psi_i: f64,
    pub v: f64,
}

/// Time derivative of a [`VehicleState`], same component layout.
pub type StateDerivative = VehicleState;

impl VehicleState {
    pub fn to_vector(&self) -> SVector<f64, 7> {
        SVector::<f64, 7>::from([
            self.x_t, self.y_t, self.psi_t, self.x_i, self.y_i, self.psi_i, self.v,
        ])
    }

    pub fn from_vector(v: &SVector<f64, 7>) -> Self {
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
}

/// Plant input `(delta_t, lambda, HP)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    /// Tractor front-wheel steering angle, rad.
    pub steer: f64,
    /// Tractor-trailer relative angle, rad.
    pub relative_angle: f64,
    /// Hydrostat position, fraction of full range.
    pub hydrostat: f64,
}

impl ControlInput {
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

/// Decomposition of the relative angle into drawbar and trailer-steering parts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HitchAngles {
    /// Tractor-to-drawbar angle `beta`, rad.
    pub drawbar: f64,
    /// Trailer steering angle `delta_i`, rad.
    pub trailer_steer: f64,
}

impl HitchAngles {
    /// Splits a commanded relative angle given the drawbar angle.
    pub fn from_relative(relative_angle: f64, drawbar: f64) -> Self {
        Self {
            drawbar,
            trailer_steer: split_relative_angle(relative_angle, drawbar),
        }
    }

    pub fn relative_angle(&self) -> f64 {
        self.drawbar + self.trailer_steer
    }
}

/// Measured outputs `(x_t, y_t, x_i, y_i, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OutputVector {
    pub x_t: f64,
    pub y_t: f64,
    pub x_i: f64,
    pub y_i: f64,
    pub v: f64,
}

/// Smallest admissible `|cos(delta_t)|`.
const STEER_COS_MIN: f64 = 1e-6;

pub(crate) fn checked_tan(steer: f64) -> Result<f64> {
    if !steer.is_finite() || steer.cos().abs() < STEER_COS_MIN {
        return Err(Error::SingularSteering(steer));
    }
    Ok(steer.tan())
}

/// Trailer yaw rate for a given speed and input pair.
pub(crate) fn trailer_yaw_rate(
    v: f64,
    tan_steer: f64,
    relative_angle: f64,
    p: &VehicleParams,
) -> f64 {
    v / p.trailer_length
        * (relative_angle.sin()
            + p.drawbar_length / p.wheelbase_tractor * tan_steer * relative_angle.cos())
}

/// Right-hand side of the kinematic and speed model.
pub fn dynamics_rhs(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
) -> Result<StateDerivative> {
    let tan_steer = checked_tan(input.steer)?;
    let v = state.v;
    Ok(VehicleState {
        x_t: v * state.psi_t.cos(),
        y_t: v * state.psi_t.sin(),
        psi_t: v * tan_steer / params.wheelbase_tractor,
        x_i: v * state.psi_i.cos(),
        y_i: v * state.psi_i.sin(),
        psi_i: trailer_yaw_rate(v, tan_steer, input.relative_angle, params),
        v: -v / params.speed_time_constant
            + params.speed_gain / params.speed_time_constant * input.hydrostat,
    })
}

/// One classical RK4 step of `x' = f(x)`.
pub fn rk4_step<F>(state: &VehicleState, dt: f64, mut f: F) -> Result<VehicleState>
where
    F: FnMut(&VehicleState) -> Result<StateDerivative>,
{
    if dt == 0.0 {
        return Ok(*state);
    }
    let x = state.to_vector();
    let k1 = f(state)?.to_vector();
    let k2 = f(&VehicleState::from_vector(&(x + k1 * (dt / 2.0))))?.to_vector();
    let k3 = f(&VehicleState::from_vector(&(x + k2 * (dt / 2.0))))?.to_vector();
    let k4 = f(&VehicleState::from_vector(&(x + k3 * dt)))?.to_vector();
    Ok(VehicleState::from_vector(
        &(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)),
    ))
}

/// Advances the plant by `dt` with the input held constant.
pub fn step_rk4(
    state: &VehicleState,
    input: &ControlInput,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState> {
    if !(dt >= 0.0) {
        return Err(invalid("dt", format!("must be >= 0, got {dt}")));
    }
    rk4_step(state, dt, |s| dynamics_rhs(s, input, params))
}

pub fn output_map(state: &VehicleState) -> OutputVector {
    OutputVector {
        x_t: state.x_t,
        y_t: state.y_t,
        x_i: state.x_i,
        y_i: state.y_i,
        v: state.v,
    }
}

/// Trailer steering angle `delta_i = lambda - beta`.
pub fn split_relative_angle(relative_angle: f64, drawbar: f64) -> f64 {
    relative_angle - drawbar
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn straight_state() -> VehicleState {
        VehicleState {
            x_t: 0.0,
            y_t: 0.0,
            psi_t: 0.0,
            x_i: -2.4,
            y_i: 0.0,
            psi_i: 0.0,
            v: 1.0,
        }
    }

    #[test]
    fn default_params_are_identified_values() {
        let p = VehicleParams::default();
        assert_eq!(
            (
                p.wheelbase_tractor,
                p.trailer_length,
                p.drawbar_length,
                p.speed_time_constant,
                p.speed_gain
            ),
            (1.4, 1.3, 1.1, 2.05, 1.4)
        );
        assert!(p.validate().is_ok());
        let bad = VehicleParams {
            speed_gain: 0.0,
            ..p
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn straight_line_equilibrium() {
        let p = VehicleParams::default();
        let u = ControlInput::new(0.0, 0.0, 1.0 / 1.4);
        let d = dynamics_rhs(&straight_state(), &u, &p).unwrap();
        assert_eq!(
            (d.x_t, d.y_t, d.psi_t, d.x_i, d.y_i, d.psi_i),
            (1.0, 0.0, 0.0, 1.0, 0.0, 0.0)
        );
        assert_abs_diff_eq!(d.v, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn tractor_yaw_rate_on_circle() {
        let p = VehicleParams::default();
        let u = ControlInput::new(0.14f64.atan(), 0.0, 1.0 / 1.4);
        let d = dynamics_rhs(&straight_state(), &u, &p).unwrap();
        assert_abs_diff_eq!(d.psi_t, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn trailer_yaw_row_by_hand() {
        let p = VehicleParams::default();
        let u = ControlInput::new(0.14, 0.02, 0.5);
        let d = dynamics_rhs(&straight_state(), &u, &p).unwrap();
        let expected = (1.0 / 1.3) * (0.02f64.sin() + (1.1 / 1.4) * 0.14f64.tan() * 0.02f64.cos());
        assert_abs_diff_eq!(d.psi_i, expected, epsilon = 1e-15);
    }

    #[test]
    fn singular_steering_rejected() {
        let p = VehicleParams::default();
        for steer in [PI / 2.0, -PI / 2.0, PI / 2.0 - 1e-9, f64::NAN] {
            let u = ControlInput::new(steer, 0.0, 0.5);
            assert!(matches!(
                dynamics_rhs(&straight_state(), &u, &p),
                Err(Error::SingularSteering(_))
            ));
            assert!(step_rk4(&straight_state(), &u, &p, 0.1).is_err());
        }
    }

    #[test]
    fn rk4_straight_and_zero_dt() {
        let p = VehicleParams::default();
        let u = ControlInput::new(0.0, 0.0, 1.0 / 1.4);
        let s0 = straight_state();
        let s1 = step_rk4(&s0, &u, &p, 0.2).unwrap();
        assert_abs_diff_eq!(s1.x_t - s0.x_t, 0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(s1.x_i - s0.x_i, 0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(s1.y_t, 0.0);
        assert_abs_diff_eq!(s1.psi_t, 0.0);
        assert_abs_diff_eq!(s1.v, 1.0, epsilon = 1e-14);
        assert_eq!(step_rk4(&s0, &u, &p, 0.0).unwrap(), s0);
        assert!(step_rk4(&s0, &u, &p, -0.1).is_err());
    }

    #[test]
    fn rk4_closes_circle() {
        // Closed form: radius 1/0.1 = 10 m, period 2*pi/0.1.
        let p = VehicleParams::default();
        let u = ControlInput::new(0.14f64.atan(), 0.0, 1.0 / 1.4);
        let period = 2.0 * PI / 0.1;
        let n = 6284;
        let dt = period / n as f64;
        let mut s = straight_state();
        let mut max_radius_err: f64 = 0.0;
        for _ in 0..n {
            s = step_rk4(&s, &u, &p, dt).unwrap();
            let r = (s.x_t.powi(2) + (s.y_t - 10.0).powi(2)).sqrt();
            max_radius_err = max_radius_err.max((r - 10.0).abs());
        }
        assert!(s.x_t.abs() < 1e-9 && s.y_t.abs() < 1e-9, "{s:?}");
        assert_abs_diff_eq!(s.psi_t, 2.0 * PI, epsilon = 1e-9);
        assert!(max_radius_err < 1e-9);
    }

    #[test]
    fn speed_converges_within_five_time_constants() {
        let p = VehicleParams::default();
        for hp in [0.2, 0.5, 1.0] {
            let u = ControlInput::new(0.0, 0.0, hp);
            let mut s = VehicleState {
                v: 0.0,
                ..straight_state()
            };
            let dt = 0.01;
            let n = (5.0 * p.speed_time_constant / dt).ceil() as usize;
            for _ in 0..n {
                s = step_rk4(&s, &u, &p, dt).unwrap();
            }
            let target = p.speed_gain * hp;
            assert!((s.v - target).abs() < 0.01 * target);
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let p = VehicleParams::default();
        let u = ControlInput::new(0.3, 0.1, 0.8);
        let s0 = VehicleState {
            x_t: 1.0,
            y_t: -2.0,
            psi_t: 0.4,
            x_i: -1.0,
            y_i: -2.5,
            psi_i: 0.2,
            v: 0.7,
        };
        let reference = |h: f64| {
            let mut s = s0;
            for _ in 0..100 {
                s = step_rk4(&s, &u, &p, h / 100.0).unwrap();
            }
            s.to_vector()
        };
        let err = |h: f64| (step_rk4(&s0, &u, &p, h).unwrap().to_vector() - reference(h)).norm();
        let ratio = err(0.4) / err(0.2);
        // local error is O(h^5), so halving h gives ~32; global-order check needs >= 15.9
        assert!(ratio >= 15.9, "ratio {ratio}");
    }

    #[test]
    fn output_projection() {
        let z = VehicleState {
            x_t: 1.0,
            y_t: 2.0,
            psi_t: 0.3,
            x_i: 4.0,
            y_i: 5.0,
            psi_i: 0.6,
            v: 7.0,
        };
        assert_eq!(
            output_map(&z),
            OutputVector {
                x_t: 1.0,
                y_t: 2.0,
                x_i: 4.0,
                y_i: 5.0,
                v: 7.0
            }
        );
        assert_eq!(
            output_map(&VehicleState::default()),
            OutputVector::default()
        );
    }

    #[test]
    fn split_examples() {
        assert_abs_diff_eq!(split_relative_angle(0.02, 0.0), 0.02);
        assert_abs_diff_eq!(split_relative_angle(0.02, 0.02), 0.0);
        assert_abs_diff_eq!(split_relative_angle(0.10, 0.03), 0.07, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn split_inverts_sum(lambda in -1.0f64..1.0, beta in -1.0f64..1.0) {
            let h = HitchAngles::from_relative(lambda, beta);
            prop_assert!((h.relative_angle() - lambda).abs() <= 1e-15);
        }

        #[test]
        fn zero_steering_drives_straight(
            psi in -PI..PI, v in 0.1f64..1.4, hp in 0.0f64..1.0, steps in 1usize..200
        ) {
            let p = VehicleParams::default();
            let u = ControlInput::new(0.0, 0.0, hp);
            let s0 = VehicleState { x_t: 0.0, y_t: 0.0, psi_t: psi, x_i: 0.0, y_i: 0.0, psi_i: psi, v };
            let mut s = s0;
            for _ in 0..steps {
                s = step_rk4(&s, &u, &p, 0.05).unwrap();
            }
            prop_assert_eq!(s.psi_t, psi);
            prop_assert_eq!(s.psi_i, psi);
            // displacement stays on the initial heading line
            let cross = s.x_t * psi.sin() - s.y_t * psi.cos();
            prop_assert!(cross.abs() < 1e-9);
        }
    }
}
