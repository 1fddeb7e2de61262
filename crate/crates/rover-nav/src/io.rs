//! CSV ingestion and emission for every stream the pipeline touches.
//!
//! All files are UTF-8 with a mandatory header row and `.` decimal
//! separator. Floats are written with the shortest representation that
//! round-trips, so write-then-read is bit-exact. Schemas:
//!
//! * IMU:        `t,fx,fy,fz,wx,wy,wz` (s, m/s^2, rad/s)
//! * wheels:     `t,w_fl,w_fr,w_rl,w_rr` (s, rad/s)
//! * trajectory: `t,lat_deg,lon_deg,h,vn,ve,vd,roll_deg,pitch_deg,yaw_deg`
//! * slip:       `t,s,class,v_x,r_omega,s_truth,class_truth` (truth columns
//!   empty when unavailable)
//! * schedule:   `start_s,end_s`

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use crate::earth::{dcm_to_euler, euler_to_dcm, Euler, GeoPosition};
use crate::mech::{ImuSample, NavState};
use crate::sim::UpdateSchedule;
use crate::slip::{SlipClass, SlipRecord, WheelSample};
use crate::NavError;

/// Specific-force magnitude beyond which an IMU row is treated as corrupt.
pub const SPECIFIC_FORCE_SANITY_LIMIT: f64 = 50.0;

/// File-layer failures: every data problem carries the 1-based line number
/// (the header is line 1).
#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Data { path: String, line: usize, message: String },
}

impl IoError {
    fn data(path: &Path, line: usize, message: impl Into<String>) -> Self {
        IoError::Data {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }

    fn file(path: &Path, source: std::io::Error) -> Self {
        IoError::File { path: path.display().to_string(), source }
    }
}

/// One row of a trajectory or truth file: the navigation solution with the
/// attitude flattened to Euler angles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub position: GeoPosition,
    pub velocity: Vector3<f64>,
    pub euler: Euler,
}

impl TrajectoryRow {
    /// Flatten a navigation state; fails only at gimbal lock.
    pub fn from_state(state: &NavState) -> Result<Self, NavError> {
        Ok(TrajectoryRow {
            t: state.t,
            position: state.position,
            velocity: state.velocity,
            euler: dcm_to_euler(&state.attitude)?,
        })
    }

    pub fn to_state(&self) -> NavState {
        NavState::new(
            self.t,
            euler_to_dcm(&self.euler),
            self.velocity,
            self.position,
        )
    }
}

fn open_reader(path: &Path) -> Result<BufReader<File>, IoError> {
    File::open(path).map(BufReader::new).map_err(|e| IoError::file(path, e))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|e| IoError::file(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<(), IoError> {
    w.flush().map_err(|e| IoError::file(path, e))
}

/// Read lines, verify the header, and hand `(line_number, fields)` to the
/// row parser. Lines are split strictly on commas; a trailing `\r` is
/// tolerated for files written on other platforms.
fn parse_rows<T>(
    path: &Path,
    header: &str,
    mut parse: impl FnMut(usize, &[&str]) -> Result<T, IoError>,
) -> Result<Vec<T>, IoError> {
    let reader = open_reader(path)?;
    let expected_cols = header.split(',').count();
    let mut rows = Vec::new();
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(first))) if first.trim_end_matches('\r') == header => {}
        Some((_, Ok(first))) => {
            return Err(IoError::data(
                path,
                1,
                format!("expected header '{header}', found '{}'", first.trim_end()),
            ))
        }
        Some((_, Err(e))) => return Err(IoError::file(path, e)),
        None => return Err(IoError::data(path, 1, format!("empty file, expected header '{header}'"))),
    }
    for (idx, line) in lines {
        let line = line.map_err(|e| IoError::file(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let line_no = idx + 1;
        if fields.len() != expected_cols {
            return Err(IoError::data(
                path,
                line_no,
                format!("expected {expected_cols} fields, found {}", fields.len()),
            ));
        }
        rows.push(parse(line_no, &fields)?);
    }
    Ok(rows)
}

fn parse_f64(path: &Path, line: usize, name: &str, s: &str) -> Result<f64, IoError> {
    s.parse::<f64>()
        .map_err(|_| IoError::data(path, line, format!("field '{name}': cannot parse '{s}' as a number")))
}

fn check_monotonic(path: &Path, line: usize, prev: Option<f64>, t: f64) -> Result<(), IoError> {
    if let Some(p) = prev {
        if t <= p {
            return Err(IoError::data(
                path,
                line,
                format!("non-monotonic timestamp {t} after {p}"),
            ));
        }
    }
    Ok(())
}

const IMU_HEADER: &str = "t,fx,fy,fz,wx,wy,wz";
const WHEEL_HEADER: &str = "t,w_fl,w_fr,w_rl,w_rr";
const TRAJECTORY_HEADER: &str = "t,lat_deg,lon_deg,h,vn,ve,vd,roll_deg,pitch_deg,yaw_deg";
const SLIP_HEADER: &str = "t,s,class,v_x,r_omega,s_truth,class_truth";
const SCHEDULE_HEADER: &str = "start_s,end_s";

pub fn read_imu_csv(path: &Path) -> Result<Vec<ImuSample>, IoError> {
    let mut prev: Option<f64> = None;
    parse_rows(path, IMU_HEADER, |line, f| {
        let t = parse_f64(path, line, "t", f[0])?;
        check_monotonic(path, line, prev, t)?;
        prev = Some(t);
        let fx = parse_f64(path, line, "fx", f[1])?;
        let fy = parse_f64(path, line, "fy", f[2])?;
        let fz = parse_f64(path, line, "fz", f[3])?;
        let specific_force = Vector3::new(fx, fy, fz);
        if specific_force.norm() > SPECIFIC_FORCE_SANITY_LIMIT {
            return Err(IoError::data(
                path,
                line,
                format!(
                    "specific-force magnitude {:.1} m/s^2 exceeds the {SPECIFIC_FORCE_SANITY_LIMIT} m/s^2 sanity limit",
                    specific_force.norm()
                ),
            ));
        }
        Ok(ImuSample {
            t,
            specific_force,
            angular_rate: Vector3::new(
                parse_f64(path, line, "wx", f[4])?,
                parse_f64(path, line, "wy", f[5])?,
                parse_f64(path, line, "wz", f[6])?,
            ),
        })
    })
}

pub fn write_imu_csv(path: &Path, samples: &[ImuSample]) -> Result<(), IoError> {
    let mut w = create_writer(path)?;
    let write = |w: &mut BufWriter<File>, s: &ImuSample| {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.t,
            s.specific_force[0],
            s.specific_force[1],
            s.specific_force[2],
            s.angular_rate[0],
            s.angular_rate[1],
            s.angular_rate[2],
        )
    };
    writeln!(w, "{IMU_HEADER}").map_err(|e| IoError::file(path, e))?;
    for s in samples {
        write(&mut w, s).map_err(|e| IoError::file(path, e))?;
    }
    finish(w, path)
}

pub fn read_wheel_csv(path: &Path) -> Result<Vec<WheelSample>, IoError> {
    let mut prev: Option<f64> = None;
    parse_rows(path, WHEEL_HEADER, |line, f| {
        let t = parse_f64(path, line, "t", f[0])?;
        check_monotonic(path, line, prev, t)?;
        prev = Some(t);
        Ok(WheelSample::new(
            t,
            [
                parse_f64(path, line, "w_fl", f[1])?,
                parse_f64(path, line, "w_fr", f[2])?,
                parse_f64(path, line, "w_rl", f[3])?,
                parse_f64(path, line, "w_rr", f[4])?,
            ],
        ))
    })
}

pub fn write_wheel_csv(path: &Path, samples: &[WheelSample]) -> Result<(), IoError> {
    let mut w = create_writer(path)?;
    writeln!(w, "{WHEEL_HEADER}").map_err(|e| IoError::file(path, e))?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{}",
            s.t, s.rates[0], s.rates[1], s.rates[2], s.rates[3]
        )
        .map_err(|e| IoError::file(path, e))?;
    }
    finish(w, path)
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRow>, IoError> {
    let mut prev: Option<f64> = None;
    parse_rows(path, TRAJECTORY_HEADER, |line, f| {
        let t = parse_f64(path, line, "t", f[0])?;
        check_monotonic(path, line, prev, t)?;
        prev = Some(t);
        Ok(TrajectoryRow {
            t,
            position: GeoPosition::new(
                parse_f64(path, line, "lat_deg", f[1])?.to_radians(),
                parse_f64(path, line, "lon_deg", f[2])?.to_radians(),
                parse_f64(path, line, "h", f[3])?,
            ),
            velocity: Vector3::new(
                parse_f64(path, line, "vn", f[4])?,
                parse_f64(path, line, "ve", f[5])?,
                parse_f64(path, line, "vd", f[6])?,
            ),
            euler: Euler::new(
                parse_f64(path, line, "roll_deg", f[7])?.to_radians(),
                parse_f64(path, line, "pitch_deg", f[8])?.to_radians(),
                parse_f64(path, line, "yaw_deg", f[9])?.to_radians(),
            ),
        })
    })
}

pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryRow]) -> Result<(), IoError> {
    let mut w = create_writer(path)?;
    writeln!(w, "{TRAJECTORY_HEADER}").map_err(|e| IoError::file(path, e))?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.position.latitude.to_degrees(),
            r.position.longitude.to_degrees(),
            r.position.height,
            r.velocity[0],
            r.velocity[1],
            r.velocity[2],
            r.euler.roll.to_degrees(),
            r.euler.pitch.to_degrees(),
            r.euler.yaw.to_degrees(),
        )
        .map_err(|e| IoError::file(path, e))?;
    }
    finish(w, path)
}

pub fn read_slip_csv(path: &Path) -> Result<Vec<SlipRecord>, IoError> {
    let mut prev: Option<f64> = None;
    parse_rows(path, SLIP_HEADER, |line, f| {
        let t = parse_f64(path, line, "t", f[0])?;
        check_monotonic(path, line, prev, t)?;
        prev = Some(t);
        let class = SlipClass::from_label(f[2])
            .ok_or_else(|| IoError::data(path, line, format!("unknown slip class '{}'", f[2])))?;
        let truth_ratio = if f[5].is_empty() {
            None
        } else {
            Some(parse_f64(path, line, "s_truth", f[5])?)
        };
        let truth_class = if f[6].is_empty() {
            None
        } else {
            Some(SlipClass::from_label(f[6]).ok_or_else(|| {
                IoError::data(path, line, format!("unknown slip class '{}'", f[6]))
            })?)
        };
        Ok(SlipRecord {
            t,
            ratio: parse_f64(path, line, "s", f[1])?,
            class,
            v_x: parse_f64(path, line, "v_x", f[3])?,
            wheel_speed: parse_f64(path, line, "r_omega", f[4])?,
            truth_ratio,
            truth_class,
        })
    })
}

pub fn write_slip_csv(path: &Path, records: &[SlipRecord]) -> Result<(), IoError> {
    let mut w = create_writer(path)?;
    writeln!(w, "{SLIP_HEADER}").map_err(|e| IoError::file(path, e))?;
    for r in records {
        let s_truth = r.truth_ratio.map(|v| v.to_string()).unwrap_or_default();
        let c_truth = r.truth_class.map(|c| c.label().to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.t, r.ratio, r.class, r.v_x, r.wheel_speed, s_truth, c_truth
        )
        .map_err(|e| IoError::file(path, e))?;
    }
    finish(w, path)
}

/// Write a generic two-column numeric series (e.g. a heading-error curve
/// for plotting). `header` must be a comma-separated pair like
/// `"t,err_deg"`.
pub fn write_series_csv(
    path: &Path,
    header: &str,
    series: &[(f64, f64)],
) -> Result<(), IoError> {
    let mut w = create_writer(path)?;
    writeln!(w, "{header}").map_err(|e| IoError::file(path, e))?;
    for (x, y) in series {
        writeln!(w, "{x},{y}").map_err(|e| IoError::file(path, e))?;
    }
    finish(w, path)
}

pub fn read_schedule_csv(path: &Path) -> Result<UpdateSchedule, IoError> {
    let windows = parse_rows(path, SCHEDULE_HEADER, |line, f| {
        let start = parse_f64(path, line, "start_s", f[0])?;
        let end = parse_f64(path, line, "end_s", f[1])?;
        if end <= start {
            return Err(IoError::data(path, line, "window end must exceed start"));
        }
        Ok((start, end))
    })?;
    Ok(UpdateSchedule { windows })
}

pub fn write_schedule_csv(path: &Path, schedule: &UpdateSchedule) -> Result<(), IoError> {
    let mut w = create_writer(path)?;
    writeln!(w, "{SCHEDULE_HEADER}").map_err(|e| IoError::file(path, e))?;
    for (a, b) in &schedule.windows {
        writeln!(w, "{a},{b}").map_err(|e| IoError::file(path, e))?;
    }
    finish(w, path)
}

/// Adapter interface for bringing external dataset layouts into the CSV
/// schemas above. No converters ship with the toolkit; implement this for
/// a concrete dataset and feed the written files to the normal ingestion.
pub trait DatasetConverter {
    /// Human-readable name of the source format.
    fn format_name(&self) -> &str;
    /// Convert the source IMU log into the `t,fx,fy,fz,wx,wy,wz` schema.
    fn convert_imu(&self, source: &Path, destination: &Path) -> Result<(), IoError>;
    /// Convert the source encoder log into the `t,w_fl,w_fr,w_rl,w_rr` schema.
    fn convert_wheels(&self, source: &Path, destination: &Path) -> Result<(), IoError>;
    /// Convert the reference solution into the trajectory schema, if the
    /// dataset carries one.
    fn convert_truth(&self, source: &Path, destination: &Path) -> Result<(), IoError>;
}
