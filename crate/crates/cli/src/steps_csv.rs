//! `steps.csv`: one row per controller period, floats printed with 17
//! significant digits so a parse recovers them exactly.

use std::io::{Read, Write};

use tractor_mpc::sim::{SegmentClass, StepRecord};

use crate::CliError;

const STATE: [&str; 7] = ["x_t", "y_t", "psi_t", "x_i", "y_i", "psi_i", "v"];
const INPUT: [&str; 3] = ["steer", "relative_angle", "hydrostat"];

pub const NUM_COLUMNS: usize = 39;

/// Column names in file order.
pub fn header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(STATE.iter().map(|s| format!("{s}_ref")));
    h.extend(STATE.iter().map(|s| s.to_string()));
    h.extend(STATE.iter().map(|s| format!("e_{s}")));
    for prefix in ["u_f", "u_b", "u_m", "u"] {
        h.extend(INPUT.iter().map(|c| format!("{prefix}_{c}")));
    }
    h.extend(
        [
            "err_euclid_tractor",
            "err_euclid_trailer",
            "seg_class",
            "qp_ms",
            "qp_iters",
        ]
        .map(String::from),
    );
    h
}

/// The logged subset of a [`StepRecord`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepRow {
    pub t: f64,
    pub reference: [f64; 7],
    pub truth: [f64; 7],
    pub error: [f64; 7],
    pub u_f: [f64; 3],
    pub u_b: [f64; 3],
    pub u_m: [f64; 3],
    pub u: [f64; 3],
    pub err_tractor: f64,
    pub err_trailer: f64,
    pub class: SegmentClass,
    pub qp_ms: f64,
    pub qp_iters: usize,
}

fn state_array(s: &tractor_mpc::vehicle::VehicleState) -> [f64; 7] {
    [s.x_t, s.y_t, s.psi_t, s.x_i, s.y_i, s.psi_i, s.v]
}

impl From<&StepRecord> for StepRow {
    fn from(r: &StepRecord) -> Self {
        Self {
            t: r.t,
            reference: state_array(&r.reference),
            truth: state_array(&r.truth),
            error: r.z_e.as_array(),
            u_f: r.u_f.as_array(),
            u_b: r.u_b.as_array(),
            u_m: r.u_m.as_array(),
            u: r.u.as_array(),
            err_tractor: r.err_tractor,
            err_trailer: r.err_trailer,
            class: r.class,
            qp_ms: r.qp.solve_ms,
            qp_iters: r.qp.iterations,
        }
    }
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

impl StepRow {
    fn fields(&self) -> Vec<String> {
        let mut f = Vec::with_capacity(NUM_COLUMNS);
        f.push(float(self.t));
        for group in [
            &self.reference[..],
            &self.truth,
            &self.error,
            &self.u_f,
            &self.u_b,
            &self.u_m,
            &self.u,
        ] {
            f.extend(group.iter().copied().map(float));
        }
        f.push(float(self.err_tractor));
        f.push(float(self.err_trailer));
        f.push(self.class.as_str().to_string());
        f.push(float(self.qp_ms));
        f.push(self.qp_iters.to_string());
        f
    }

    fn parse(line: usize, rec: &csv::StringRecord) -> Result<Self, CliError> {
        if rec.len() != NUM_COLUMNS {
            return Err(CliError::Csv(format!(
                "line {line}: expected {NUM_COLUMNS} fields, found {}",
                rec.len()
            )));
        }
        let names = header();
        let num = |i: usize| -> Result<f64, CliError> {
            rec[i].trim().parse::<f64>().map_err(|e| {
                CliError::Csv(format!(
                    "line {line}, column `{}`: {e}: {:?}",
                    names[i], &rec[i]
                ))
            })
        };
        let arr = |start: usize| -> Result<[f64; 7], CliError> {
            let mut a = [0.0; 7];
            for (j, v) in a.iter_mut().enumerate() {
                *v = num(start + j)?;
            }
            Ok(a)
        };
        let arr3 = |start: usize| -> Result<[f64; 3], CliError> {
            Ok([num(start)?, num(start + 1)?, num(start + 2)?])
        };
        let class = SegmentClass::parse(rec[36].trim()).ok_or_else(|| {
            CliError::Csv(format!("line {line}: unknown seg_class {:?}", &rec[36]))
        })?;
        let qp_iters = rec[38].trim().parse::<usize>().map_err(|e| {
            CliError::Csv(format!(
                "line {line}, column `qp_iters`: {e}: {:?}",
                &rec[38]
            ))
        })?;
        Ok(Self {
            t: num(0)?,
            reference: arr(1)?,
            truth: arr(8)?,
            error: arr(15)?,
            u_f: arr3(22)?,
            u_b: arr3(25)?,
            u_m: arr3(28)?,
            u: arr3(31)?,
            class,
            err_tractor: num(34)?,
            err_trailer: num(35)?,
            qp_ms: num(37)?,
            qp_iters,
        })
    }
}

pub fn write_steps<W: Write>(out: W, records: &[StepRecord]) -> Result<(), CliError> {
    let rows: Vec<StepRow> = records.iter().map(StepRow::from).collect();
    write_rows(out, &rows)
}

pub fn write_rows<W: Write>(out: W, rows: &[StepRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::Csv(e.to_string());
    w.write_record(header()).map_err(io)?;
    for r in rows {
        w.write_record(r.fields()).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Csv(e.to_string()))
}

pub fn read_steps<R: Read>(input: R) -> Result<Vec<StepRow>, CliError> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let expected = header();
    let got = rd.headers().map_err(|e| CliError::Csv(e.to_string()))?;
    if got.iter().ne(expected.iter().map(String::as_str)) {
        return Err(CliError::Csv(format!(
            "unexpected header: {}",
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Csv(e.to_string()))?;
        rows.push(StepRow::parse(i + 2, &rec)?);
    }
    Ok(rows)
}
