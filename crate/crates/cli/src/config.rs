//! Run configuration file (TOML). Every physical quantity carries its unit in
//! the key name; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tractor_mpc::angle::deg;
use tractor_mpc::error_model::Matrix7;
use tractor_mpc::lmpc::MpcConfig;
use tractor_mpc::qp::QpSettings;
use tractor_mpc::robust::{RobustConfig, RobustGains};
use tractor_mpc::sim::{
    ControlToggles, Drift, DriftDirection, InitialOffset, NoiseConfig, NominalInit, RunLength,
    SimConfig,
};
use tractor_mpc::trajectory::{
    build_figure_eight, PathPose, PathSegment, ReferenceTrajectory, ValidationOptions,
};
use tractor_mpc::vehicle::VehicleParams;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub trajectory: TrajectorySection,
    pub vehicle: VehicleSection,
    pub mpc: MpcSection,
    pub robust: RobustSection,
    pub noise: NoiseSection,
    pub sim: SimSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryPreset {
    Figure8,
    Segments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectorySection {
    pub preset: TrajectoryPreset,
    pub straight_length_m: f64,
    pub radius_m: f64,
    pub speed_mps: f64,
    pub blend_length_m: f64,
    /// Used with `preset = "segments"`.
    pub start_x_m: f64,
    pub start_y_m: f64,
    pub start_heading_deg: f64,
    pub closed: bool,
    pub segments: Vec<SegmentSpec>,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        Self {
            preset: TrajectoryPreset::Figure8,
            straight_length_m: 20.0,
            radius_m: 10.0,
            speed_mps: 1.0,
            blend_length_m: 2.0,
            start_x_m: 0.0,
            start_y_m: 0.0,
            start_heading_deg: 0.0,
            closed: false,
            segments: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SegmentSpec {
    Straight {
        length_m: f64,
        speed_mps: f64,
    },
    Arc {
        length_m: f64,
        curvature_per_m: f64,
        speed_mps: f64,
    },
    Blend {
        length_m: f64,
        curvature_start_per_m: f64,
        curvature_end_per_m: f64,
        speed_mps: f64,
    },
    Dwell {
        duration_s: f64,
    },
}

impl SegmentSpec {
    fn to_segment(&self) -> PathSegment {
        match *self {
            Self::Straight {
                length_m,
                speed_mps,
            } => PathSegment::straight(length_m, speed_mps),
            Self::Arc {
                length_m,
                curvature_per_m,
                speed_mps,
            } => PathSegment::arc(length_m, curvature_per_m, speed_mps),
            Self::Blend {
                length_m,
                curvature_start_per_m,
                curvature_end_per_m,
                speed_mps,
            } => PathSegment::blend(
                length_m,
                curvature_start_per_m,
                curvature_end_per_m,
                speed_mps,
            ),
            Self::Dwell { duration_s } => PathSegment::dwell(duration_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleSection {
    pub wheelbase_tractor_m: f64,
    pub trailer_length_m: f64,
    pub drawbar_length_m: f64,
    pub speed_time_constant_s: f64,
    pub speed_gain_mps: f64,
}

impl Default for VehicleSection {
    fn default() -> Self {
        let p = VehicleParams::default();
        Self {
            wheelbase_tractor_m: p.wheelbase_tractor,
            trailer_length_m: p.trailer_length,
            drawbar_length_m: p.drawbar_length,
            speed_time_constant_s: p.speed_time_constant,
            speed_gain_mps: p.speed_gain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcSection {
    pub prediction_horizon_steps: usize,
    pub control_horizon_steps: usize,
    pub period_s: f64,
    /// Diagonal of the state weight, in `(x_t, y_t, psi_t, x_i, y_i, psi_i, v)` order.
    pub q_diag: [f64; 7],
    pub r_diag: [f64; 3],
    pub steer_bound_deg: f64,
    pub relative_angle_bound_deg: f64,
    pub hydrostat_bound: f64,
    pub steer_rate_bound_deg_per_s: f64,
    pub relative_angle_rate_bound_deg_per_s: f64,
    pub hydrostat_rate_bound_per_s: f64,
    pub qp_tolerance: f64,
    pub qp_max_iterations: usize,
    pub max_consecutive_failures: usize,
}

impl Default for MpcSection {
    fn default() -> Self {
        Self {
            prediction_horizon_steps: 8,
            control_horizon_steps: 3,
            period_s: 0.2,
            q_diag: [1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0],
            r_diag: [1.0, 1.0, 1.0],
            steer_bound_deg: 12.0,
            relative_angle_bound_deg: 6.0,
            hydrostat_bound: 0.10,
            steer_rate_bound_deg_per_s: 55.0,
            relative_angle_rate_bound_deg_per_s: 35.0,
            hydrostat_rate_bound_per_s: 0.30,
            qp_tolerance: 1e-8,
            qp_max_iterations: 200,
            max_consecutive_failures: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NominalInitSpec {
    Reference,
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustSection {
    pub k_p: [f64; 3],
    pub k_d: [f64; 3],
    /// Saturation amplitudes: steer rad, relative angle rad, hydrostat fraction.
    pub k_s: [f64; 3],
    pub tighten: bool,
    pub rate_filter_time_constant_s: f64,
    pub resync_steps: usize,
    pub nominal_init: NominalInitSpec,
}

impl Default for RobustSection {
    fn default() -> Self {
        let g = RobustGains::default();
        let c = RobustConfig::default();
        Self {
            k_p: g.k_p,
            k_d: g.k_d,
            k_s: g.k_s,
            tighten: true,
            rate_filter_time_constant_s: c.rate_filter_time_constant,
            resync_steps: c.resync_steps,
            nominal_init: NominalInitSpec::Reference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub enabled: bool,
    pub gps_position_bound_m: f64,
    pub steering_sigma_deg: f64,
    pub speed_sigma_mps: f64,
    pub yaw_sigma_deg: f64,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            enabled: true,
            gps_position_bound_m: 0.03,
            steering_sigma_deg: 1.0,
            speed_sigma_mps: 0.1,
            yaw_sigma_deg: 0.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftModeSpec {
    /// Inertial direction drawn from the run seed.
    Seeded,
    /// Inertial direction `drift_heading_deg`.
    Inertial,
    /// Perpendicular to each body, towards its left.
    BodyLeft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub plant_step_s: f64,
    /// Run length in seconds; overrides `laps` when set.
    pub duration_s: Option<f64>,
    pub laps: f64,
    pub initial_longitudinal_offset_m: f64,
    pub initial_lateral_offset_m: f64,
    pub initial_heading_offset_deg: f64,
    pub feedforward: bool,
    pub feedback: bool,
    pub robust: bool,
    pub drift_mps: f64,
    pub drift_mode: DriftModeSpec,
    pub drift_heading_deg: f64,
    pub require_c2: bool,
    pub record_solve_time: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            plant_step_s: 0.01,
            duration_s: None,
            laps: 1.0,
            initial_longitudinal_offset_m: 0.0,
            initial_lateral_offset_m: 0.0,
            initial_heading_offset_deg: 0.0,
            feedforward: true,
            feedback: true,
            robust: true,
            drift_mps: 0.0,
            drift_mode: DriftModeSpec::Seeded,
            drift_heading_deg: 90.0,
            require_c2: true,
            record_solve_time: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub plot_data: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            plot_data: true,
        }
    }
}

/// Everything a run needs, resolved from a config file.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub trajectory: ReferenceTrajectory,
    pub sim: SimConfig,
    pub noise: NoiseConfig,
}

/// Parses a config document. Errors name the offending key and its line.
pub fn parse_config(text: &str) -> Result<RunConfigFile, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<RunConfigFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

impl RunConfigFile {
    pub fn vehicle_params(&self) -> VehicleParams {
        let v = &self.vehicle;
        VehicleParams {
            wheelbase_tractor: v.wheelbase_tractor_m,
            trailer_length: v.trailer_length_m,
            drawbar_length: v.drawbar_length_m,
            speed_time_constant: v.speed_time_constant_s,
            speed_gain: v.speed_gain_mps,
        }
    }

    pub fn mpc_config(&self) -> MpcConfig {
        let m = &self.mpc;
        MpcConfig {
            prediction_horizon: m.prediction_horizon_steps,
            control_horizon: m.control_horizon_steps,
            q: Matrix7::from_diagonal(&m.q_diag.into()),
            r: nalgebra::Matrix3::from_diagonal(&m.r_diag.into()),
            ts: m.period_s,
            magnitude_bounds: [
                deg(m.steer_bound_deg),
                deg(m.relative_angle_bound_deg),
                m.hydrostat_bound,
            ],
            rate_bounds: [
                deg(m.steer_rate_bound_deg_per_s),
                deg(m.relative_angle_rate_bound_deg_per_s),
                m.hydrostat_rate_bound_per_s,
            ],
            qp: QpSettings {
                tol: m.qp_tolerance,
                max_iter: m.qp_max_iterations,
            },
            max_consecutive_failures: m.max_consecutive_failures,
        }
    }

    pub fn robust_config(&self) -> RobustConfig {
        let r = &self.robust;
        RobustConfig {
            gains: RobustGains {
                k_p: r.k_p,
                k_d: r.k_d,
                k_s: r.k_s,
            },
            rate_filter_time_constant: r.rate_filter_time_constant_s,
            resync_steps: r.resync_steps,
        }
    }

    pub fn noise_config(&self) -> NoiseConfig {
        let n = &self.noise;
        if !n.enabled {
            return NoiseConfig::off(n.seed);
        }
        NoiseConfig {
            gps_position_bound: n.gps_position_bound_m,
            steering_sigma: deg(n.steering_sigma_deg),
            speed_sigma: n.speed_sigma_mps,
            yaw_sigma: deg(n.yaw_sigma_deg),
            seed: n.seed,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        let s = &self.sim;
        let direction = match s.drift_mode {
            DriftModeSpec::Seeded => DriftDirection::Seeded,
            DriftModeSpec::Inertial => DriftDirection::Inertial(deg(s.drift_heading_deg)),
            DriftModeSpec::BodyLeft => DriftDirection::BodyLeft,
        };
        SimConfig {
            params: self.vehicle_params(),
            mpc: self.mpc_config(),
            robust: self.robust_config(),
            tighten: self.robust.tighten,
            dt: s.plant_step_s,
            length: match s.duration_s {
                Some(d) => RunLength::Seconds(d),
                None => RunLength::Laps(s.laps),
            },
            offset: InitialOffset {
                longitudinal: s.initial_longitudinal_offset_m,
                lateral: s.initial_lateral_offset_m,
                heading: deg(s.initial_heading_offset_deg),
            },
            toggles: ControlToggles {
                feedforward: s.feedforward,
                feedback: s.feedback,
                robust: s.robust,
            },
            drift: Drift {
                speed: s.drift_mps,
                direction,
            },
            nominal_init: match self.robust.nominal_init {
                NominalInitSpec::Reference => NominalInit::Reference,
                NominalInitSpec::Measured => NominalInit::Measured,
            },
            validation: ValidationOptions {
                require_c2: s.require_c2,
                ..Default::default()
            },
            record_solve_time: s.record_solve_time,
        }
    }

    pub fn trajectory(&self) -> Result<ReferenceTrajectory, CliError> {
        let t = &self.trajectory;
        let traj = match t.preset {
            TrajectoryPreset::Figure8 => build_figure_eight(
                t.straight_length_m,
                t.radius_m,
                t.speed_mps,
                t.blend_length_m,
            )?,
            TrajectoryPreset::Segments => {
                let start = PathPose {
                    x: t.start_x_m,
                    y: t.start_y_m,
                    heading: deg(t.start_heading_deg),
                    curvature: 0.0,
                };
                let segs = t.segments.iter().map(SegmentSpec::to_segment).collect();
                ReferenceTrajectory::new(start, segs, t.closed)?
            }
        };
        Ok(traj)
    }

    pub fn resolve(&self) -> Result<ResolvedRun, CliError> {
        Ok(ResolvedRun {
            trajectory: self.trajectory()?,
            sim: self.sim_config(),
            noise: self.noise_config(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(parse_config("").unwrap(), RunConfigFile::default());
    }

    #[test]
    fn defaults_map_to_library_defaults() {
        let c = RunConfigFile::default();
        assert_eq!(c.vehicle_params(), VehicleParams::default());
        let m = c.mpc_config();
        let d = MpcConfig::default();
        assert_eq!(
            (m.prediction_horizon, m.control_horizon, m.ts),
            (d.prediction_horizon, d.control_horizon, d.ts)
        );
        assert_eq!(m.q, d.q);
        assert_eq!(m.r, d.r);
        for i in 0..3 {
            assert!((m.magnitude_bounds[i] - d.magnitude_bounds[i]).abs() < 1e-15);
            assert!((m.rate_bounds[i] - d.rate_bounds[i]).abs() < 1e-15);
        }
        assert_eq!(c.robust_config(), RobustConfig::default());
        let s = c.sim_config();
        assert_eq!(s.dt, 0.01);
        assert_eq!(s.toggles, ControlToggles::default());
    }

    #[test]
    fn unknown_key_is_located() {
        let err = parse_config("[mpc]\nperiod_s = 0.2\nhorizon = 3\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("horizon"), "{err}");
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn segment_list() {
        let text = r#"
[trajectory]
preset = "segments"
start_heading_deg = 90.0

[[trajectory.segments]]
kind = "straight"
length_m = 5.0
speed_mps = 1.0

[[trajectory.segments]]
kind = "arc"
length_m = 3.0
curvature_per_m = 0.1
speed_mps = 1.0
"#;
        let c = parse_config(text).unwrap();
        let t = c.trajectory().unwrap();
        assert_eq!(t.segments().len(), 2);
        assert!((t.length() - 8.0).abs() < 1e-12);
        assert!(!t.is_closed());
    }

    #[test]
    fn wrong_type_is_rejected() {
        assert!(parse_config("[sim]\nlaps = \"two\"\n").is_err());
        assert!(parse_config("[trajectory]\npreset = \"circle\"\n").is_err());
    }
}
