#![no_main]

use libfuzzer_sys::fuzz_target;
use tractor_mpc::trajectory::{sample_reference, validate_trajectory};
use tractor_mpc_cli::config::{RunConfigFile, SegmentSpec, TrajectoryPreset};

/// Maps a byte to `[lo, hi]`.
fn scale(b: u8, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * f64::from(b) / 255.0
}

fuzz_target!(|data: &[u8]| {
    let Some((&head, body)) = data.split_first() else { return };
    let mut cfg = RunConfigFile::default();
    cfg.trajectory.preset = TrajectoryPreset::Segments;
    cfg.trajectory.closed = head & 1 == 1;
    cfg.trajectory.start_heading_deg = scale(head, -180.0, 180.0);
    cfg.sim.require_c2 = head & 2 == 2;
    for chunk in body.chunks_exact(4).take(16) {
        let length_m = scale(chunk[1], 0.0, 60.0);
        let speed_mps = scale(chunk[3], -0.5, 3.0);
        let spec = match chunk[0] % 4 {
            0 => SegmentSpec::Straight { length_m, speed_mps },
            1 => SegmentSpec::Arc { length_m, curvature_per_m: scale(chunk[2], -1.0, 1.0), speed_mps },
            2 => SegmentSpec::Blend {
                length_m,
                curvature_start_per_m: scale(chunk[2], -1.0, 1.0),
                curvature_end_per_m: scale(chunk[3], -1.0, 1.0),
                speed_mps: scale(chunk[2] ^ chunk[3], 0.0, 3.0),
            },
            _ => SegmentSpec::Dwell { duration_s: scale(chunk[2], 0.0, 10.0) },
        };
        cfg.trajectory.segments.push(spec);
    }
    let Ok(traj) = cfg.trajectory() else { return };
    let sim = cfg.sim_config();
    let _ = validate_trajectory(&traj, &sim.params, &sim.validation);
    let duration = traj.duration();
    for i in 0..=16 {
        let t = duration * f64::from(i) / 16.0;
        if let Ok(r) = sample_reference(&traj, t, &sim.params) {
            let s = r.state;
            assert!([s.x_t, s.y_t, s.psi_t, s.x_i, s.y_i, s.psi_i, s.v].iter().all(|x| x.is_finite()));
        }
    }
});
