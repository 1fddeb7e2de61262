//! Scoring estimator logs against simulator truth: local-tangent position
//! errors, unwrapped heading comparison, velocity-error histograms, slip
//! confusion summaries, and the aggregate report document.
//!
//! Scoring is estimator-agnostic: the same calls grade the aided filter,
//! the direct-integration baseline, and the wheel-odometry baseline. Truth
//! is interpolated linearly to the estimate epochs; estimates are never
//! interpolated. The east/north/up frame is the local tangent plane at the
//! first truth epoch.

use nalgebra::Vector3;
use serde::Serialize;

use crate::earth::{dcm_to_euler, radii_of_curvature, EllipsoidModel, GeoPosition};
use crate::mech::NavState;
use crate::pipeline::RunStats;
use crate::sim::TruthLog;
use crate::slip::{classify_with_no_slip_band, slip_ratio, ConfusionMatrix, SlipRecord};
use crate::NavError;

/// Velocity errors beyond +/- this bound (m/s) land in the edge bins, so
/// bin counts always sum to the sample count.
pub const VELOCITY_HISTOGRAM_LIMIT: f64 = 0.5;

/// Number of velocity-error bins per axis (odd, so zero error sits in the
/// exact middle bin).
pub const VELOCITY_HISTOGRAM_BINS: usize = 101;

/// East/north/up offset of `pos` from `reference`, on the tangent plane at
/// `reference`.
pub fn enu_offset(
    pos: &GeoPosition,
    reference: &GeoPosition,
    model: &EllipsoidModel,
) -> Vector3<f64> {
    let (r_north, r_east) = radii_of_curvature(reference.latitude, model);
    let east = (pos.longitude - reference.longitude)
        * (r_east + reference.height)
        * reference.latitude.cos();
    let north = (pos.latitude - reference.latitude) * (r_north + reference.height);
    let up = pos.height - reference.height;
    Vector3::new(east, north, up)
}

/// Remove +/-2 pi jumps from a wrapped angle series: each step keeps the
/// representative of the new angle closest to its predecessor, so adjacent
/// deltas stay below pi in magnitude.
pub fn unwrap_angles(wrapped: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(wrapped.len());
    let mut prev_in = 0.0;
    let mut prev_out = 0.0;
    for (i, &a) in wrapped.iter().enumerate() {
        let next = if i == 0 {
            a
        } else {
            let mut delta = a - prev_in;
            delta -= (delta / std::f64::consts::TAU).round() * std::f64::consts::TAU;
            prev_out + delta
        };
        out.push(next);
        prev_in = a;
        prev_out = next;
    }
    out
}

/// Index of the interval containing `t` and the blend factor inside it.
/// `None` when `t` is outside the log's time span.
fn bracket(states: &[NavState], t: f64) -> Option<(usize, f64)> {
    if states.len() < 2 || t < states[0].t || t > states[states.len() - 1].t {
        return None;
    }
    // First index with time > t, so the interval starts one before it.
    let hi = states.partition_point(|s| s.t <= t);
    let i = hi.clamp(1, states.len() - 1) - 1;
    let span = states[i + 1].t - states[i].t;
    let alpha = if span > 0.0 { (t - states[i].t) / span } else { 0.0 };
    Some((i, alpha))
}

/// Truth position and velocity interpolated linearly to `t`.
fn interpolate_pose(states: &[NavState], t: f64) -> Option<(GeoPosition, Vector3<f64>)> {
    let (i, alpha) = bracket(states, t)?;
    let (a, b) = (&states[i], &states[i + 1]);
    let position = GeoPosition {
        latitude: a.position.latitude + alpha * (b.position.latitude - a.position.latitude),
        longitude: a.position.longitude + alpha * (b.position.longitude - a.position.longitude),
        height: a.position.height + alpha * (b.position.height - a.position.height),
    };
    let velocity = a.velocity + alpha * (b.velocity - a.velocity);
    Some((position, velocity))
}

/// Per-axis histogram of NED velocity errors with clamped edge bins.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VelocityErrorHistogram {
    /// Lower edge of the first bin (m/s).
    pub lower: f64,
    /// Upper edge of the last bin (m/s).
    pub upper: f64,
    pub counts_north: Vec<u64>,
    pub counts_east: Vec<u64>,
    pub counts_down: Vec<u64>,
    pub samples: u64,
}

impl VelocityErrorHistogram {
    pub fn new() -> Self {
        VelocityErrorHistogram {
            lower: -VELOCITY_HISTOGRAM_LIMIT,
            upper: VELOCITY_HISTOGRAM_LIMIT,
            counts_north: vec![0; VELOCITY_HISTOGRAM_BINS],
            counts_east: vec![0; VELOCITY_HISTOGRAM_BINS],
            counts_down: vec![0; VELOCITY_HISTOGRAM_BINS],
            samples: 0,
        }
    }

    pub fn bin_width(&self) -> f64 {
        (self.upper - self.lower) / self.counts_north.len() as f64
    }

    fn bin_index(&self, v: f64) -> usize {
        let bins = self.counts_north.len();
        let raw = ((v - self.lower) / self.bin_width()).floor();
        if raw < 0.0 {
            0
        } else {
            (raw as usize).min(bins - 1)
        }
    }

    /// Record one NED velocity-error vector.
    pub fn push(&mut self, error: &Vector3<f64>) {
        let n = self.bin_index(error[0]);
        let e = self.bin_index(error[1]);
        let d = self.bin_index(error[2]);
        self.counts_north[n] += 1;
        self.counts_east[e] += 1;
        self.counts_down[d] += 1;
        self.samples += 1;
    }
}

impl Default for VelocityErrorHistogram {
    fn default() -> Self {
        Self::new()
    }
}

/// Root-mean-square position error per tangent-plane axis (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnuRmse {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

/// How one trajectory log compares against truth.
#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryScore {
    pub rmse: EnuRmse,
    /// Signed final error of the unwrapped heading series (deg).
    pub final_heading_error_deg: f64,
    pub velocity_error_histogram: VelocityErrorHistogram,
    /// Estimate epochs that fell inside the truth window.
    pub samples: u64,
}

/// Signed heading-error series in degrees at the estimate epochs inside the
/// truth window. Both headings are unwrapped before differencing and the
/// estimate is aligned to the truth's starting turn count, so the series is
/// free of +/-2 pi artifacts.
pub fn heading_error_series(
    estimate: &[NavState],
    truth: &TruthLog,
) -> Result<Vec<(f64, f64)>, NavError> {
    let t_first = truth.states.first().map(|s| s.t).ok_or(NavError::EmptyOverlap)?;
    let t_last = truth.states.last().map(|s| s.t).ok_or(NavError::EmptyOverlap)?;

    let mut truth_yaw = Vec::with_capacity(truth.states.len());
    for s in &truth.states {
        truth_yaw.push(dcm_to_euler(&s.attitude)?.yaw);
    }
    let truth_unwrapped = unwrap_angles(&truth_yaw);

    let mut epochs = Vec::new();
    let mut est_yaw = Vec::new();
    for s in estimate {
        if s.t < t_first || s.t > t_last {
            continue;
        }
        epochs.push(s.t);
        est_yaw.push(dcm_to_euler(&s.attitude)?.yaw);
    }
    if epochs.is_empty() {
        return Err(NavError::EmptyOverlap);
    }
    let mut est_unwrapped = unwrap_angles(&est_yaw);

    let truth_at = |t: f64| -> f64 {
        // Epochs are clipped to the truth span, so the bracket exists.
        let (i, alpha) = bracket(&truth.states, t).expect("epoch inside truth span");
        truth_unwrapped[i] + alpha * (truth_unwrapped[i + 1] - truth_unwrapped[i])
    };

    // Align the estimate's starting turn count with the truth's.
    let shift = ((truth_at(epochs[0]) - est_unwrapped[0]) / std::f64::consts::TAU).round()
        * std::f64::consts::TAU;
    for y in &mut est_unwrapped {
        *y += shift;
    }

    Ok(epochs
        .iter()
        .zip(est_unwrapped.iter())
        .map(|(&t, &y)| (t, (y - truth_at(t)).to_degrees()))
        .collect())
}

/// Score one trajectory log against truth: tangent-plane RMSE about the
/// first truth epoch, final unwrapped heading error, and the NED
/// velocity-error histogram.
pub fn score_trajectory(
    estimate: &[NavState],
    truth: &TruthLog,
    model: &EllipsoidModel,
) -> Result<TrajectoryScore, NavError> {
    let reference = truth.states.first().map(|s| s.position).ok_or(NavError::EmptyOverlap)?;
    let mut sq = Vector3::zeros();
    let mut histogram = VelocityErrorHistogram::new();
    let mut samples = 0u64;
    for s in estimate {
        let Some((truth_pos, truth_vel)) = interpolate_pose(&truth.states, s.t) else {
            continue;
        };
        let est_enu = enu_offset(&s.position, &reference, model);
        let truth_enu = enu_offset(&truth_pos, &reference, model);
        let err = est_enu - truth_enu;
        sq += err.component_mul(&err);
        histogram.push(&(s.velocity - truth_vel));
        samples += 1;
    }
    if samples == 0 {
        return Err(NavError::EmptyOverlap);
    }
    let heading = heading_error_series(estimate, truth)?;
    let mean = sq / samples as f64;
    Ok(TrajectoryScore {
        rmse: EnuRmse { east: mean[0].sqrt(), north: mean[1].sqrt(), up: mean[2].sqrt() },
        final_heading_error_deg: heading.last().map(|&(_, e)| e).unwrap_or(0.0),
        velocity_error_histogram: histogram,
        samples,
    })
}

/// Fill the truth columns of slip records by a timestamp join against the
/// simulator's wheel truth: each record takes the nearest truth epoch
/// within `tolerance` seconds. Records with no match are left unlabeled.
pub fn attach_truth(
    records: &mut [SlipRecord],
    truth: &TruthLog,
    no_slip_band: f64,
    tolerance: f64,
) {
    let wt = &truth.wheel_truth;
    if wt.is_empty() {
        return;
    }
    let mut j = 0usize;
    for rec in records.iter_mut() {
        while j + 1 < wt.len() && (wt[j + 1].t - rec.t).abs() < (wt[j].t - rec.t).abs() {
            j += 1;
        }
        if (wt[j].t - rec.t).abs() <= tolerance {
            rec.truth_ratio = Some(wt[j].slip);
            rec.truth_class = Some(classify_with_no_slip_band(wt[j].slip, no_slip_band));
        }
    }
}

/// Fill the truth columns of slip records from a states-only truth log, for
/// truth files that carry no wheel kinematics. The reference forward speed is
/// interpolated to each record's epoch and combined with the record's own
/// measured wheel speed — the same construction used to derive reference slip
/// from a surveyed velocity plus encoder readings. Records outside the truth
/// time span are left unlabeled.
pub fn attach_truth_from_states(
    records: &mut [SlipRecord],
    truth_states: &[NavState],
    no_slip_band: f64,
) {
    let forward: Vec<f64> = truth_states
        .iter()
        .map(|s| (s.attitude.transposed() * s.velocity)[0])
        .collect();
    for rec in records.iter_mut() {
        let Some((i, alpha)) = bracket(truth_states, rec.t) else {
            continue;
        };
        let v_x = forward[i] + alpha * (forward[i + 1] - forward[i]);
        let s = slip_ratio(v_x, rec.wheel_speed);
        rec.truth_ratio = Some(s);
        rec.truth_class = Some(classify_with_no_slip_band(s, no_slip_band));
    }
}

/// Confusion matrix plus its derived headline numbers, report-ready.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConfusionSummary {
    /// `counts[predicted][truth]`.
    pub counts: [[u64; 5]; 5],
    /// Column-normalized percentages; populated columns sum to 100.
    pub column_percentages: [[f64; 5]; 5],
    /// Diagonal fraction of all labeled records, in [0, 1].
    pub overall_accuracy: f64,
    pub labeled_records: u64,
}

pub fn summarize_confusion(matrix: &ConfusionMatrix) -> ConfusionSummary {
    ConfusionSummary {
        counts: matrix.counts,
        column_percentages: matrix.column_percentages(),
        overall_accuracy: matrix.overall_accuracy(),
        labeled_records: matrix.total(),
    }
}

/// The estimator logs one evaluation covers. Baselines and slip records
/// are optional so partial runs can still be scored.
#[derive(Clone, Copy, Debug, Default)]
pub struct EstimateLogs<'a> {
    pub proposed: &'a [NavState],
    pub direct_integration: Option<&'a [NavState]>,
    pub wheel_odometry: Option<&'a [NavState]>,
    /// Slip records with truth columns already attached.
    pub slip: Option<&'a [SlipRecord]>,
    pub runtime: Option<RunStats>,
}

/// The full evaluation document, JSON-serializable.
#[derive(Clone, Debug, Serialize)]
pub struct EvaluationReport {
    pub proposed: TrajectoryScore,
    pub direct_integration: Option<TrajectoryScore>,
    pub wheel_odometry: Option<TrajectoryScore>,
    pub slip: Option<ConfusionSummary>,
    pub runtime: Option<RunStats>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Score every supplied log against the same truth.
pub fn evaluate(
    logs: &EstimateLogs,
    truth: &TruthLog,
    model: &EllipsoidModel,
) -> Result<EvaluationReport, NavError> {
    let proposed = score_trajectory(logs.proposed, truth, model)?;
    let direct_integration = match logs.direct_integration {
        Some(log) => Some(score_trajectory(log, truth, model)?),
        None => None,
    };
    let wheel_odometry = match logs.wheel_odometry {
        Some(log) => Some(score_trajectory(log, truth, model)?),
        None => None,
    };
    let slip = logs
        .slip
        .map(|records| summarize_confusion(&ConfusionMatrix::from_records(records)));
    Ok(EvaluationReport {
        proposed,
        direct_integration,
        wheel_odometry,
        slip,
        runtime: logs.runtime,
    })
}
