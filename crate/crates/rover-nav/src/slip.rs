//! Wheel-slip ratio estimation and classification.
//!
//! The slip ratio compares the longitudinal body velocity with the
//! circumferential wheel speed. Positive values mean the wheels spin faster
//! than the vehicle moves (traction slip, up to +1 for spinning in place);
//! negative values mean the vehicle moves faster than the wheels turn
//! (skid, down to -1 for sliding with locked wheels).

use serde::{Deserialize, Serialize};

/// Below this speed (m/s for the body, m/s circumferential for wheels) a
/// signal is treated as zero when forming the slip ratio, to keep the
/// quotients away from noise-dominated denominators.
pub const SLIP_SPEED_GUARD: f64 = 0.01;

/// One encoder epoch: angular rates for all four wheels in rad/s, ordered
/// front-left, front-right, rear-left, rear-right.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WheelSample {
    pub t: f64,
    pub rates: [f64; 4],
}

impl WheelSample {
    pub fn new(t: f64, rates: [f64; 4]) -> Self {
        WheelSample { t, rates }
    }
}

/// Mean circumferential speed of the four wheels (m/s).
pub fn wheel_speed(sample: &WheelSample, wheel_radius: f64) -> f64 {
    let mean_rate = sample.rates.iter().sum::<f64>() / 4.0;
    mean_rate * wheel_radius
}

/// Yaw rate implied by differential wheel speeds (rad/s), positive for a
/// clockwise-from-above (right-hand about down) turn: left wheels faster
/// than right. Left side is (front-left + rear-left)/2.
pub fn odometry_yaw_rate(sample: &WheelSample, wheel_radius: f64, track: f64) -> f64 {
    let left = 0.5 * (sample.rates[0] + sample.rates[2]);
    let right = 0.5 * (sample.rates[1] + sample.rates[3]);
    wheel_radius * (left - right) / track
}

/// Slip ratio from longitudinal velocity `v_x` and circumferential wheel
/// speed `r_omega`, both m/s.
///
/// * wheels faster (`r_omega > v_x`): `s = 1 - v_x / r_omega`
/// * vehicle faster (`v_x > r_omega`): `s = r_omega / v_x - 1`
/// * equal, or both below [`SLIP_SPEED_GUARD`]: `0`
///
/// Magnitudes below the guard are treated as exactly zero before the
/// comparison, and the result is clamped to [-1, 1].
pub fn slip_ratio(v_x: f64, r_omega: f64) -> f64 {
    let v = if v_x.abs() < SLIP_SPEED_GUARD { 0.0 } else { v_x };
    let w = if r_omega.abs() < SLIP_SPEED_GUARD { 0.0 } else { r_omega };
    if v == w {
        return 0.0;
    }
    let s = if w > v { 1.0 - v / w } else { w / v - 1.0 };
    s.clamp(-1.0, 1.0)
}

/// Slip severity bands over |s|.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SlipClass {
    /// |s| <= 0.01
    NoSlip,
    /// 0.01 < |s| <= 0.2
    Low,
    /// 0.2 < |s| <= 0.4
    Medium,
    /// 0.4 < |s| <= 0.7
    High,
    /// 0.7 < |s| <= 1
    Extreme,
}

/// All classes in severity order.
pub const SLIP_CLASSES: [SlipClass; 5] = [
    SlipClass::NoSlip,
    SlipClass::Low,
    SlipClass::Medium,
    SlipClass::High,
    SlipClass::Extreme,
];

impl SlipClass {
    /// Position in the severity order, 0..5.
    pub fn index(self) -> usize {
        match self {
            SlipClass::NoSlip => 0,
            SlipClass::Low => 1,
            SlipClass::Medium => 2,
            SlipClass::High => 3,
            SlipClass::Extreme => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SlipClass::NoSlip => "no-slip",
            SlipClass::Low => "low",
            SlipClass::Medium => "medium",
            SlipClass::High => "high",
            SlipClass::Extreme => "extreme",
        }
    }

    pub fn from_label(s: &str) -> Option<SlipClass> {
        SLIP_CLASSES.iter().copied().find(|c| c.label() == s)
    }
}

impl std::fmt::Display for SlipClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Band classification of a slip ratio. Upper boundaries belong to the
/// lower band (|s| = 0.2 is still `Low`).
pub fn classify(s: f64) -> SlipClass {
    classify_with_no_slip_band(s, 0.01)
}

/// Same bands with a configurable "approximately zero" threshold in place
/// of the default 0.01.
pub fn classify_with_no_slip_band(s: f64, no_slip_band: f64) -> SlipClass {
    let a = s.abs();
    if a <= no_slip_band {
        SlipClass::NoSlip
    } else if a <= 0.2 {
        SlipClass::Low
    } else if a <= 0.4 {
        SlipClass::Medium
    } else if a <= 0.7 {
        SlipClass::High
    } else {
        SlipClass::Extreme
    }
}

/// One slip estimate at a wheel-odometry epoch, optionally paired with the
/// simulator's truth for evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlipRecord {
    pub t: f64,
    /// Estimated slip ratio.
    pub ratio: f64,
    pub class: SlipClass,
    /// Longitudinal body velocity used (m/s).
    pub v_x: f64,
    /// Mean circumferential wheel speed used (m/s).
    pub wheel_speed: f64,
    pub truth_ratio: Option<f64>,
    pub truth_class: Option<SlipClass>,
}

/// Confusion matrix over the five slip classes: `counts[predicted][truth]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 5]; 5],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [[u64; 5]; 5]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn record(&mut self, predicted: SlipClass, truth: SlipClass) {
        self.counts[predicted.index()][truth.index()] += 1;
    }

    /// Tally every record that carries a truth label.
    pub fn from_records(records: &[SlipRecord]) -> Self {
        let mut m = Self::new();
        for r in records {
            if let Some(truth) = r.truth_class {
                m.record(r.class, truth);
            }
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Epochs per truth class.
    pub fn column_totals(&self) -> [u64; 5] {
        let mut totals = [0u64; 5];
        for pred_row in &self.counts {
            for (j, &c) in pred_row.iter().enumerate() {
                totals[j] += c;
            }
        }
        totals
    }

    /// Column-normalized percentages: each truth class's epochs distributed
    /// over the predicted classes. Empty columns give zeros.
    pub fn column_percentages(&self) -> [[f64; 5]; 5] {
        let totals = self.column_totals();
        let mut p = [[0.0f64; 5]; 5];
        for i in 0..5 {
            for j in 0..5 {
                if totals[j] > 0 {
                    p[i][j] = 100.0 * self.counts[i][j] as f64 / totals[j] as f64;
                }
            }
        }
        p
    }

    /// Fraction of all labeled epochs classified into their true band —
    /// i.e. the count-weighted mean of the per-column diagonal rates.
    pub fn overall_accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let diag: u64 = (0..5).map(|i| self.counts[i][i]).sum();
        diag as f64 / total as f64
    }

    /// Plain-text table: percentage rows (predicted) over truth columns,
    /// plus a final row of truth-class epoch counts.
    pub fn render(&self) -> String {
        let p = self.column_percentages();
        let totals = self.column_totals();
        let mut out = String::new();
        out.push_str(&format!("{:>10}", "pred\\truth"));
        for c in SLIP_CLASSES {
            out.push_str(&format!("{:>10}", c.label()));
        }
        out.push('\n');
        for i in 0..5 {
            out.push_str(&format!("{:>10}", SLIP_CLASSES[i].label()));
            for j in 0..5 {
                out.push_str(&format!("{:>9.1}%", p[i][j]));
            }
            out.push('\n');
        }
        out.push_str(&format!("{:>10}", "epochs"));
        for j in 0..5 {
            out.push_str(&format!("{:>10}", totals[j]));
        }
        out.push('\n');
        out.push_str(&format!(
            "overall accuracy: {:.1}% of {} epochs\n",
            100.0 * self.overall_accuracy(),
            self.total()
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn ratio_traction_and_skid() {
        // Wheels faster than the body: positive slip.
        assert_relative_eq!(slip_ratio(0.8, 1.0), 0.2, epsilon = 1e-15);
        // Body faster than the wheels: negative slip of equal magnitude.
        assert_relative_eq!(slip_ratio(1.0, 0.8), -0.2, epsilon = 1e-15);
        assert_eq!(slip_ratio(0.5, 0.5), 0.0);
    }

    #[test]
    fn ratio_guards_and_limits() {
        // Noise below the guard reads as a clean stop.
        assert_eq!(slip_ratio(0.005, -0.009), 0.0);
        // Spinning in place and full skid saturate the scale.
        assert_eq!(slip_ratio(0.0, 2.0), 1.0);
        assert_eq!(slip_ratio(1.0, 0.0), -1.0);
        // Out-of-range quotients clamp.
        assert_eq!(slip_ratio(-0.5, 1.0), 1.0);
        assert_eq!(slip_ratio(0.5, -1.0), -1.0);
    }

    #[test]
    fn classify_band_edges() {
        assert_eq!(classify(0.0), SlipClass::NoSlip);
        assert_eq!(classify(0.01), SlipClass::NoSlip);
        assert_eq!(classify(0.010000001), SlipClass::Low);
        assert_eq!(classify(0.2), SlipClass::Low);
        assert_eq!(classify(-0.2), SlipClass::Low);
        assert_eq!(classify(0.4), SlipClass::Medium);
        assert_eq!(classify(0.7), SlipClass::High);
        assert_eq!(classify(0.700001), SlipClass::Extreme);
        assert_eq!(classify(1.0), SlipClass::Extreme);
        assert_eq!(classify(-1.0), SlipClass::Extreme);
    }

    #[test]
    fn wheel_speed_is_mean_of_four() {
        let s = WheelSample::new(0.0, [1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(wheel_speed(&s, 0.12), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn odometry_yaw_rate_differential() {
        // Left wheels faster by 1 rad/s each: yaw rate r * 1 / track.
        let s = WheelSample::new(0.0, [5.0, 4.0, 5.0, 4.0]);
        assert_relative_eq!(
            odometry_yaw_rate(&s, 0.12, 0.685),
            0.12 / 0.685,
            epsilon = 1e-15
        );
        let straight = WheelSample::new(0.0, [5.0, 5.0, 5.0, 5.0]);
        assert_eq!(odometry_yaw_rate(&straight, 0.12, 0.685), 0.0);
    }

    #[test]
    fn class_labels_round_trip() {
        for c in SLIP_CLASSES {
            assert_eq!(SlipClass::from_label(c.label()), Some(c));
        }
        assert_eq!(SlipClass::from_label("bogus"), None);
    }

    #[test]
    fn confusion_matrix_percentages_and_accuracy() {
        let mut m = ConfusionMatrix::new();
        // Truth no-slip: 8 correct, 2 called low.
        for _ in 0..8 {
            m.record(SlipClass::NoSlip, SlipClass::NoSlip);
        }
        for _ in 0..2 {
            m.record(SlipClass::Low, SlipClass::NoSlip);
        }
        // Truth medium: 3 correct, 1 called high.
        for _ in 0..3 {
            m.record(SlipClass::Medium, SlipClass::Medium);
        }
        m.record(SlipClass::High, SlipClass::Medium);

        assert_eq!(m.total(), 14);
        assert_eq!(m.column_totals(), [10, 0, 4, 0, 0]);
        let p = m.column_percentages();
        assert_relative_eq!(p[0][0], 80.0, epsilon = 1e-12);
        assert_relative_eq!(p[1][0], 20.0, epsilon = 1e-12);
        assert_relative_eq!(p[2][2], 75.0, epsilon = 1e-12);
        // Each populated column sums to 100.
        for j in [0usize, 2] {
            let sum: f64 = (0..5).map(|i| p[i][j]).sum();
            assert_relative_eq!(sum, 100.0, epsilon = 1e-9);
        }
        // Empty columns stay zero.
        for j in [1usize, 3, 4] {
            assert!((0..5).all(|i| p[i][j] == 0.0));
        }
        assert_relative_eq!(m.overall_accuracy(), 11.0 / 14.0, epsilon = 1e-15);
        let rendered = m.render();
        assert!(rendered.contains("no-slip"));
        assert!(rendered.contains("overall accuracy"));
    }

    #[test]
    fn confusion_matrix_from_records_skips_unlabeled() {
        let records = [
            SlipRecord {
                t: 0.0,
                ratio: 0.0,
                class: SlipClass::NoSlip,
                v_x: 0.0,
                wheel_speed: 0.0,
                truth_ratio: Some(0.0),
                truth_class: Some(SlipClass::NoSlip),
            },
            SlipRecord {
                t: 0.1,
                ratio: 0.3,
                class: SlipClass::Medium,
                v_x: 0.7,
                wheel_speed: 1.0,
                truth_ratio: None,
                truth_class: None,
            },
        ];
        let m = ConfusionMatrix::from_records(&records);
        assert_eq!(m.total(), 1);
    }

    proptest! {
        #[test]
        fn ratio_antisymmetric(a in 0.02f64..10.0, b in 0.02f64..10.0) {
            prop_assert_eq!(slip_ratio(a, b), -slip_ratio(b, a));
        }

        #[test]
        fn ratio_scale_invariant(
            a in 0.02f64..10.0,
            b in 0.02f64..10.0,
            k in 1.0f64..100.0,
        ) {
            let s1 = slip_ratio(a, b);
            let s2 = slip_ratio(k * a, k * b);
            prop_assert!((s1 - s2).abs() <= 1e-12_f64.max(1e-12 * s1.abs()));
        }

        #[test]
        fn classify_monotone_in_magnitude(s1 in -1.0f64..1.0, s2 in -1.0f64..1.0) {
            let (lo, hi) = if s1.abs() <= s2.abs() { (s1, s2) } else { (s2, s1) };
            prop_assert!(classify(lo).index() <= classify(hi).index());
        }

        #[test]
        fn ratio_always_in_unit_interval(v in -20.0f64..20.0, w in -20.0f64..20.0) {
            let s = slip_ratio(v, w);
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }
}
