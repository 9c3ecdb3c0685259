//! Run summary (`metrics.json`) and plot-data files.

use std::io::Write;

use serde_json::{Map, Value};
use tractor_mpc::sim::{ClassMetrics, RunMetrics, RunStatus, SegmentClass, StepRecord};

use crate::CliError;

const CHANNELS: [&str; 3] = ["steer", "relative_angle", "hydrostat"];

fn put(m: &mut Map<String, Value>, key: impl Into<String>, v: impl Into<Value>) {
    m.insert(key.into(), v.into());
}

fn put_class(m: &mut Map<String, Value>, name: &str, c: &ClassMetrics) {
    put(m, format!("{name}_steps"), c.steps);
    put(m, format!("{name}_tractor_mean_m"), c.tractor_mean);
    put(m, format!("{name}_tractor_max_m"), c.tractor_max);
    put(m, format!("{name}_trailer_mean_m"), c.trailer_mean);
    put(m, format!("{name}_trailer_max_m"), c.trailer_max);
    for (i, ch) in CHANNELS.iter().enumerate() {
        put(
            m,
            format!("{name}_robust_mean_abs_{ch}"),
            c.robust_mean_abs[i],
        );
        put(
            m,
            format!("{name}_feedback_mean_abs_{ch}"),
            c.feedback_mean_abs[i],
        );
    }
}

/// Flat key-value summary of a run. Keys are sorted; values are numbers or strings.
pub fn summary(metrics: Option<&RunMetrics>, status: &RunStatus, seed: u64) -> Value {
    let mut m = Map::new();
    put(&mut m, "seed", seed);
    match status {
        RunStatus::Completed => put(&mut m, "status", "completed"),
        RunStatus::Failed { step, error } => {
            put(&mut m, "status", "failed");
            put(&mut m, "failed_step", *step);
            put(&mut m, "failure", error.to_string());
        }
    }
    if let Some(r) = metrics {
        put(&mut m, "steps", r.steps);
        put(&mut m, "tractor_mean_m", r.tractor_mean);
        put(&mut m, "tractor_max_m", r.tractor_max);
        put(&mut m, "trailer_mean_m", r.trailer_mean);
        put(&mut m, "trailer_max_m", r.trailer_max);
        for c in SegmentClass::ALL {
            put_class(&mut m, c.as_str(), r.class(c));
        }
        put(&mut m, "qp_ms_mean", r.qp_ms_mean);
        put(&mut m, "qp_ms_max", r.qp_ms_max);
        put(&mut m, "qp_iterations_mean", r.qp_iterations_mean);
        put(&mut m, "constraint_active_steps", r.constraint_active_steps);
        put(&mut m, "qp_failures", r.qp_failures);
        put(&mut m, "actuator_clamp_steps", r.actuator_clamp_steps);
        put(&mut m, "mismatch_clamp_steps", r.mismatch_clamp_steps);
        put(&mut m, "nominal_resyncs", r.nominal_resyncs);
    }
    // serde_json cannot encode non-finite floats; they arrive as null
    Value::Object(m)
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_table<W: Write>(
    out: W,
    header: &[String],
    rows: impl Iterator<Item = Vec<f64>>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| CliError::Csv(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row.into_iter().map(float)).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Csv(e.to_string()))
}

/// Time against Euclidean and lateral errors of both bodies.
pub fn write_error_plot<W: Write>(out: W, records: &[StepRecord]) -> Result<(), CliError> {
    let header = [
        "t",
        "err_euclid_tractor",
        "err_euclid_trailer",
        "e_y_t",
        "e_y_i",
    ]
    .map(String::from);
    write_table(
        out,
        &header,
        records
            .iter()
            .map(|r| vec![r.t, r.err_tractor, r.err_trailer, r.z_e.y_t, r.z_e.y_i]),
    )
}

/// Reference, tractor and trailer paths.
pub fn write_xy_plot<W: Write>(out: W, records: &[StepRecord]) -> Result<(), CliError> {
    let header = [
        "x_t_ref", "y_t_ref", "x_i_ref", "y_i_ref", "x_t", "y_t", "x_i", "y_i",
    ]
    .map(String::from);
    write_table(
        out,
        &header,
        records.iter().map(|r| {
            let (a, b) = (&r.reference, &r.truth);
            vec![a.x_t, a.y_t, a.x_i, a.y_i, b.x_t, b.y_t, b.x_i, b.y_i]
        }),
    )
}

/// Control decomposition per channel with the band `u_f +- bound` that
/// confines `u_f - u_b`.
pub fn write_control_plot<W: Write>(
    out: W,
    records: &[StepRecord],
    bounds: [f64; 3],
) -> Result<(), CliError> {
    let mut header = vec!["t".to_string()];
    for ch in CHANNELS {
        for part in ["u_f", "u_b", "u_m", "u", "bound_lo", "bound_hi"] {
            header.push(format!("{part}_{ch}"));
        }
    }
    write_table(
        out,
        &header,
        records.iter().map(|r| {
            let mut row = vec![r.t];
            let (f, b, m, u) = (
                r.u_f.as_array(),
                r.u_b.as_array(),
                r.u_m.as_array(),
                r.u.as_array(),
            );
            for c in 0..3 {
                row.extend([f[c], b[c], m[c], u[c], f[c] - bounds[c], f[c] + bounds[c]]);
            }
            row
        }),
    )
}
