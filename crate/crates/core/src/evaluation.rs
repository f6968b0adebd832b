//! Trajectory accumulation and relative drift evaluation.

use std::fs;
use std::path::Path;

use nalgebra::UnitQuaternion;

use crate::dataset::tum::{format_pose, parse_trajectory};
use crate::error::{Error, Result};
use crate::geometry::{exp_twist, MotionTwist, RigidTransform};

/// Default drift interval, seconds.
pub const DRIFT_INTERVAL: f64 = 1.0;

/// Camera-to-world poses with strictly increasing timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    poses: Vec<(f64, RigidTransform<f64>)>,
}

impl Trajectory {
    pub fn new(poses: Vec<(f64, RigidTransform<f64>)>) -> Result<Self> {
        if poses.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::InvalidInput(
                "trajectory timestamps must strictly increase".into(),
            ));
        }
        if poses.iter().any(|(t, _)| !t.is_finite()) {
            return Err(Error::InvalidInput("trajectory timestamps must be finite".into()));
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[(f64, RigidTransform<f64>)] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Every pose left-multiplied by `g`.
    pub fn transformed(&self, g: &RigidTransform<f64>) -> Self {
        Self {
            poses: self.poses.iter().map(|(t, p)| (*t, g.compose(p))).collect(),
        }
    }

    /// Pose at `t` by linear translation and spherical rotation interpolation.
    /// Sample timestamps return the stored pose exactly.
    pub fn interpolate(&self, t: f64) -> Option<RigidTransform<f64>> {
        let first = self.poses.first()?;
        let last = self.poses.last()?;
        if t < first.0 || t > last.0 {
            return None;
        }
        let k = self.poses.partition_point(|(s, _)| *s < t);
        let (t1, p1) = &self.poses[k];
        if *t1 == t {
            return Some(*p1);
        }
        let (t0, p0) = &self.poses[k - 1];
        let s = (t - t0) / (t1 - t0);
        let q0 = UnitQuaternion::from_matrix(&p0.rotation);
        let q1 = UnitQuaternion::from_matrix(&p1.rotation);
        let q = q0.slerp(&q1, s);
        Some(RigidTransform {
            rotation: q.to_rotation_matrix().into_inner(),
            translation: p0.translation.lerp(&p1.translation, s),
        })
    }

    /// Writes `timestamp tx ty tz qx qy qz qw` lines.
    pub fn write_tum(&self, path: &Path) -> Result<()> {
        let mut text = String::from("# timestamp tx ty tz qx qy qz qw\n");
        for (t, pose) in &self.poses {
            text.push_str(&format!("{t:.6} {}\n", format_pose(pose)));
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_tum(path: &Path) -> Result<Self> {
        Self::new(parse_trajectory(path)?)
    }
}

/// Motion estimated between the frames at `t_first` and `t_second`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairEstimate {
    pub t_first: f64,
    pub t_second: f64,
    pub xi: MotionTwist<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Accumulated {
    pub trajectory: Trajectory,
    /// One message per pair whose time gap exceeded the limit.
    pub warnings: Vec<String>,
}

/// Chains pair estimates from an identity pose at the first timestamp.
///
/// `ξ` maps first-frame coordinates to second-frame coordinates, so each
/// camera-to-world pose is `P_{k+1} = P_k · exp(ξ)⁻¹`.
pub fn accumulate(estimates: &[PairEstimate], max_gap: f64) -> Result<Accumulated> {
    let Some(first) = estimates.first() else {
        return Err(Error::InvalidInput("no pair estimates to accumulate".into()));
    };
    let mut poses = vec![(first.t_first, RigidTransform::identity())];
    let mut warnings = Vec::new();
    for (i, e) in estimates.iter().enumerate() {
        let (t_prev, p_prev) = *poses.last().expect("non-empty");
        if e.t_first != t_prev {
            return Err(Error::InvalidInput(format!(
                "pair {i} starts at {} but the previous pair ended at {t_prev}",
                e.t_first
            )));
        }
        let gap = e.t_second - e.t_first;
        if gap > max_gap {
            let msg = format!("gap of {gap:.4} s between {} and {}", e.t_first, e.t_second);
            log::warn!("{msg}");
            warnings.push(msg);
        }
        poses.push((e.t_second, p_prev.compose(&exp_twist(&e.xi).inverse())));
    }
    Ok(Accumulated {
        trajectory: Trajectory::new(poses)?,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriftReport {
    /// Meters per second.
    pub rmse_drift: f64,
    /// `(timestamp, translational drift in m/s)`.
    pub per_frame_errors: Vec<(f64, f64)>,
    pub max_error: f64,
    /// Mean wall-clock time per alignment, when measured.
    pub mean_runtime_ms: Option<f64>,
}

/// Relative translational drift over `interval` seconds.
///
/// For each estimated sample `t` the partner is the estimated sample nearest
/// to `t + interval`; samples whose window leaves the estimate or the ground
/// truth are skipped.
pub fn drift_rmse(estimated: &Trajectory, ground_truth: &Trajectory, interval: f64) -> Result<DriftReport> {
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(Error::InvalidInput("drift interval must be positive".into()));
    }
    let est = estimated.poses();
    let Some(t_end) = est.last().map(|p| p.0) else {
        return Err(Error::Evaluation("estimated trajectory is empty".into()));
    };
    let slack = 1e-6 * interval.max(1.0);
    let mut errors = Vec::new();
    for (i, (t, p)) in est.iter().enumerate() {
        let target = t + interval;
        if target > t_end + slack {
            break;
        }
        let j = i + 1 + est[i + 1..].partition_point(|(s, _)| *s < target);
        let j = [j.saturating_sub(1), j]
            .into_iter()
            .filter(|&j| j > i && j < est.len())
            .min_by(|&a, &b| (est[a].0 - target).abs().total_cmp(&(est[b].0 - target).abs()))
            .expect("a later sample exists");
        let (t2, p2) = &est[j];
        let (Some(q1), Some(q2)) = (ground_truth.interpolate(*t), ground_truth.interpolate(*t2)) else {
            continue;
        };
        let rel_est = p.inverse().compose(p2);
        let rel_gt = q1.inverse().compose(&q2);
        let e = rel_gt.inverse().compose(&rel_est);
        errors.push((*t, e.translation.norm() / interval));
    }
    if errors.is_empty() {
        return Err(Error::Evaluation(format!(
            "no {interval} s window of the estimate overlaps the ground truth"
        )));
    }
    let mean_sq = errors.iter().map(|(_, e)| e * e).sum::<f64>() / errors.len() as f64;
    let max_error = errors.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(DriftReport {
        rmse_drift: mean_sq.sqrt(),
        per_frame_errors: errors,
        max_error,
        mean_runtime_ms: None,
    })
}

/// Run description written alongside the drift figures.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportMeta {
    pub sequence: String,
    pub method: String,
    pub lambda_mode: String,
    pub frames: usize,
}

const SUMMARY_HEADER: [&str; 7] = [
    "sequence",
    "method",
    "lambda_mode",
    "rmse_drift_mps",
    "max_error_mps",
    "mean_runtime_ms",
    "frames",
];
const ROW_HEADER: [&str; 2] = ["timestamp", "trans_error_mps"];

/// Nine significant digits.
fn sig9(v: f64) -> String {
    format!("{v:.8e}")
}

fn csv_error(e: csv::Error) -> Error {
    Error::Evaluation(format!("report csv: {e}"))
}

/// Report as CSV text: summary header and row, then per-frame header and rows.
pub fn format_report(report: &DriftReport, meta: &ReportMeta) -> Result<String> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER).map_err(csv_error)?;
    w.write_record([
        meta.sequence.clone(),
        meta.method.clone(),
        meta.lambda_mode.clone(),
        sig9(report.rmse_drift),
        sig9(report.max_error),
        report.mean_runtime_ms.map(sig9).unwrap_or_default(),
        meta.frames.to_string(),
    ])
    .map_err(csv_error)?;
    if !report.per_frame_errors.is_empty() {
        w.write_record(ROW_HEADER).map_err(csv_error)?;
        for (t, e) in &report.per_frame_errors {
            w.write_record([format!("{t:.6}"), sig9(*e)]).map_err(csv_error)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Evaluation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn emit_report(report: &DriftReport, meta: &ReportMeta, path: &Path) -> Result<()> {
    fs::write(path, format_report(report, meta)?).map_err(|e| Error::io(path, e))
}

/// Reads a report written by [`emit_report`].
pub fn parse_report(text: &str) -> Result<(DriftReport, ReportMeta)> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let records = r
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(csv_error)?;
    let bad = |msg: &str| Error::Evaluation(format!("malformed report: {msg}"));
    let number = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| bad(&format!("'{s}' is not a number")))
    };
    if records.len() < 2 || records[0].iter().ne(SUMMARY_HEADER) || records[1].len() != 7 {
        return Err(bad("missing summary"));
    }
    let s = &records[1];
    let meta = ReportMeta {
        sequence: s[0].to_owned(),
        method: s[1].to_owned(),
        lambda_mode: s[2].to_owned(),
        frames: s[6].parse().map_err(|_| bad("frame count"))?,
    };
    let mean_runtime_ms = if s[5].is_empty() {
        None
    } else {
        Some(number(&s[5])?)
    };
    let mut per_frame_errors = Vec::new();
    if records.len() > 2 {
        if records[2].iter().ne(ROW_HEADER) {
            return Err(bad("missing per-frame header"));
        }
        for row in &records[3..] {
            if row.len() != 2 {
                return Err(bad("per-frame row needs two fields"));
            }
            per_frame_errors.push((number(&row[0])?, number(&row[1])?));
        }
    }
    Ok((
        DriftReport {
            rmse_drift: number(&s[3])?,
            max_error: number(&s[4])?,
            per_frame_errors,
            mean_runtime_ms,
        },
        meta,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn translation(x: f64, y: f64, z: f64) -> RigidTransform<f64> {
        RigidTransform::from_translation(Vector3::new(x, y, z))
    }

    #[test]
    fn zero_twists_give_constant_trajectory() {
        let est: Vec<_> = (0..3)
            .map(|i| PairEstimate {
                t_first: i as f64,
                t_second: i as f64 + 1.0,
                xi: MotionTwist::zero(),
            })
            .collect();
        let acc = accumulate(&est, 10.0).unwrap();
        assert_eq!(acc.trajectory.len(), 4);
        assert!(acc
            .trajectory
            .poses()
            .iter()
            .all(|(_, p)| *p == RigidTransform::identity()));
    }

    #[test]
    fn two_forward_steps() {
        let xi = MotionTwist::from_translation(Vector3::new(0.0, 0.0, 0.1));
        let est = [
            PairEstimate {
                t_first: 0.0,
                t_second: 0.1,
                xi,
            },
            PairEstimate {
                t_first: 0.1,
                t_second: 0.2,
                xi,
            },
        ];
        let acc = accumulate(&est, 1.0).unwrap();
        // Scene points move +z in the camera, so the camera moves −z.
        let last = acc.trajectory.poses()[2].1;
        assert!((last.translation - Vector3::new(0.0, 0.0, -0.2)).norm() < 1e-15);
    }

    #[test]
    fn gaps_are_reported() {
        let est = [PairEstimate {
            t_first: 0.0,
            t_second: 0.5,
            xi: MotionTwist::zero(),
        }];
        assert_eq!(accumulate(&est, 0.1).unwrap().warnings.len(), 1);
        let broken = [
            est[0],
            PairEstimate {
                t_first: 0.7,
                t_second: 0.8,
                xi: MotionTwist::zero(),
            },
        ];
        assert!(accumulate(&broken, 1.0).is_err());
    }

    #[test]
    fn empty_report_has_summary_only() {
        let report = DriftReport {
            rmse_drift: 0.0,
            per_frame_errors: vec![],
            max_error: 0.0,
            mean_runtime_ms: None,
        };
        let meta = ReportMeta {
            sequence: "s".into(),
            method: "single".into(),
            lambda_mode: "fixed".into(),
            frames: 2,
        };
        let text = format_report(&report, &meta).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(parse_report(&text).unwrap(), (report, meta));
    }

    #[test]
    fn interpolation_midpoint() {
        let traj = Trajectory::new(vec![
            (0.0, translation(0.0, 0.0, 0.0)),
            (2.0, translation(2.0, 0.0, 0.0)),
        ])
        .unwrap();
        assert_eq!(traj.interpolate(1.0).unwrap().translation.x, 1.0);
        assert!(traj.interpolate(2.5).is_none());
    }
}
