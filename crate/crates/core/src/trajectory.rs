//! Trajectories, timestamp association, closed-form rigid alignment and the
//! ATE / RPE metrics.

use std::cmp::Ordering;

use nalgebra::{Isometry3, Matrix3, Quaternion, Translation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Default association window in seconds.
pub const DEFAULT_MAX_DT: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub timestamp: f64,
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(timestamp: f64, translation: Vector3<f64>, rotation: UnitQuaternion<f64>) -> Self {
        Self {
            timestamp,
            translation,
            rotation,
        }
    }

    /// Builds a pose from raw quaternion components `(qx, qy, qz, qw)`; the
    /// quaternion must be unit length within `1e-6` and is renormalized.
    pub fn from_components(timestamp: f64, t: [f64; 3], q: [f64; 4]) -> Result<Self> {
        let quat = Quaternion::new(q[3], q[0], q[1], q[2]);
        let norm = quat.norm();
        if !((norm - 1.0).abs() <= 1e-6) {
            return Err(Error::Config(format!(
                "quaternion {q:?} is not unit length (norm {norm})"
            )));
        }
        Ok(Self::new(
            timestamp,
            Vector3::from(t),
            UnitQuaternion::from_quaternion(quat),
        ))
    }

    pub fn from_isometry(timestamp: f64, iso: &Isometry3<f64>) -> Self {
        Self::new(timestamp, iso.translation.vector, iso.rotation)
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }
}

/// Time-ordered poses with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::Config(
                "trajectory must contain at least one pose".into(),
            ));
        }
        if let Some(w) = poses
            .windows(2)
            .find(|w| !(w[1].timestamp > w[0].timestamp))
        {
            return Err(Error::Config(format!(
                "timestamps must be strictly increasing ({} then {})",
                w[0].timestamp, w[1].timestamp
            )));
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.poses.iter().map(|p| p.timestamp)
    }

    /// Applies `left * pose` to every pose.
    pub fn transformed(&self, left: &Isometry3<f64>) -> Self {
        let poses = self
            .poses
            .iter()
            .map(|p| Pose::from_isometry(p.timestamp, &(left * p.isometry())))
            .collect();
        Self { poses }
    }
}

/// One-to-one timestamp matching. Candidate pairs within `max_dt` are taken
/// greedily by ascending time difference; the result is sorted by index
/// into `a`.
pub fn associate(a: &Trajectory, b: &Trajectory, max_dt: f64) -> Result<Vec<(usize, usize)>> {
    if !(max_dt > 0.0) {
        return Err(Error::Config(format!(
            "max_dt must be positive, got {max_dt}"
        )));
    }
    let tb: Vec<f64> = b.timestamps().collect();
    let mut candidates = Vec::new();
    for (i, ta) in a.timestamps().enumerate() {
        let start = tb.partition_point(|&t| t < ta - max_dt);
        for (j, &t) in tb.iter().enumerate().skip(start) {
            let dt = (t - ta).abs();
            if t > ta + max_dt {
                break;
            }
            if dt <= max_dt {
                candidates.push((dt, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .unwrap_or(Ordering::Equal)
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    Ok(pairs)
}

/// Least-squares rigid transform `(R, t)` minimizing `Σ |R est_i + t - ref_i|²`
/// (Horn / Umeyama without scale). `R` is always a proper rotation.
pub fn align_rigid(est: &[Vector3<f64>], reference: &[Vector3<f64>]) -> Result<Isometry3<f64>> {
    if est.len() != reference.len() {
        return Err(Error::Alignment(format!(
            "point sets differ in size ({} vs {})",
            est.len(),
            reference.len()
        )));
    }
    if est.len() < 3 {
        return Err(Error::Alignment(format!(
            "need at least 3 point pairs, got {}",
            est.len()
        )));
    }
    let n = est.len() as f64;
    let mean_e = est.iter().sum::<Vector3<f64>>() / n;
    let mean_r = reference.iter().sum::<Vector3<f64>>() / n;

    for (name, pts, mean) in [
        ("estimate", est, &mean_e),
        ("reference", reference, &mean_r),
    ] {
        let cov = pts
            .iter()
            .map(|p| (p - mean) * (p - mean).transpose())
            .sum::<Matrix3<f64>>();
        let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
        if !(ev[0] > 0.0) || ev[1] <= 1e-12 * ev[0] {
            return Err(Error::Alignment(format!(
                "{name} points are collinear or coincident"
            )));
        }
    }

    let cross = est
        .iter()
        .zip(reference)
        .map(|(e, r)| (r - mean_r) * (e - mean_e).transpose())
        .sum::<Matrix3<f64>>();
    let svd = cross.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Alignment("SVD did not converge".into())),
    };
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        // flip the direction of the smallest singular value
        let smallest = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(Ordering::Equal))
            .map(|(k, _)| k)
            .unwrap_or(2);
        d[(smallest, smallest)] = -1.0;
    }
    let r = u * d * v_t;
    let det = r.determinant();
    if !(det > 0.0) {
        return Err(Error::Alignment(format!(
            "alignment produced det(R) = {det}"
        )));
    }
    let rotation = UnitQuaternion::from_matrix(&r);
    let t = mean_r - rotation * mean_e;
    Ok(Isometry3::from_parts(Translation3::from(t), rotation))
}

/// Summary statistics of a set of errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub count: usize,
    pub rmse: f64,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl ErrorStats {
    pub fn from_errors(errors: &[f64]) -> Option<Self> {
        if errors.is_empty() {
            return None;
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
        let std = (errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n).sqrt();
        let mut sorted = errors.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        let mid = sorted.len() / 2;
        let median = if sorted.len().is_multiple_of(2) {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        } else {
            sorted[mid]
        };
        Some(Self {
            count: errors.len(),
            rmse,
            mean,
            median,
            std,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
        })
    }
}

#[derive(Debug, Clone)]
pub struct AteReport {
    /// Transform applied to the estimate to bring it onto the ground truth.
    pub alignment: Isometry3<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub errors: Vec<f64>,
    pub stats: ErrorStats,
}

/// Absolute trajectory error after association and rigid alignment.
pub fn ate(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<AteReport> {
    let pairs = associate(est, gt, max_dt)?;
    if pairs.is_empty() {
        return Err(Error::Metric(
            "no associations between the trajectories".into(),
        ));
    }
    if pairs.len() < 3 {
        return Err(Error::Metric(format!(
            "ATE needs at least 3 associated poses, got {}",
            pairs.len()
        )));
    }
    let e: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|&(i, _)| est.poses[i].translation)
        .collect();
    let g: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|&(_, j)| gt.poses[j].translation)
        .collect();
    let alignment = align_rigid(&e, &g).map_err(|err| Error::Metric(err.to_string()))?;
    let errors: Vec<f64> = e
        .iter()
        .zip(&g)
        .map(|(p, q)| (alignment * nalgebra::Point3::from(*p) - nalgebra::Point3::from(*q)).norm())
        .collect();
    let stats = ErrorStats::from_errors(&errors).expect("non-empty");
    Ok(AteReport {
        alignment,
        pairs,
        errors,
        stats,
    })
}

/// ATE as the RMSE of translational residuals, in meters.
pub fn ate_rmse(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<f64> {
    ate(est, gt, max_dt).map(|r| r.stats.rmse)
}

/// Step between the two poses of a relative motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RpeDelta {
    Frames(usize),
    Seconds(f64),
}

impl Default for RpeDelta {
    fn default() -> Self {
        RpeDelta::Frames(1)
    }
}

#[derive(Debug, Clone)]
pub struct RpeReport {
    /// Index pairs `(k, l)` into the association list.
    pub steps: Vec<(usize, usize)>,
    pub errors: Vec<f64>,
    pub stats: ErrorStats,
}

/// Relative pose error: translational magnitude of
/// `(Q_i⁻¹ Q_j)⁻¹ (P_i⁻¹ P_j)` over all associated steps, with `Q` the
/// ground truth and `P` the estimate.
pub fn rpe(est: &Trajectory, gt: &Trajectory, delta: RpeDelta, max_dt: f64) -> Result<RpeReport> {
    let pairs = associate(est, gt, max_dt)?;
    if pairs.is_empty() {
        return Err(Error::Metric(
            "no associations between the trajectories".into(),
        ));
    }
    let times: Vec<f64> = pairs.iter().map(|&(_, j)| gt.poses[j].timestamp).collect();
    let steps: Vec<(usize, usize)> = match delta {
        RpeDelta::Frames(0) => {
            return Err(Error::Config("RPE frame delta must be at least 1".into()))
        }
        RpeDelta::Frames(d) => (0..pairs.len().saturating_sub(d))
            .map(|k| (k, k + d))
            .collect(),
        RpeDelta::Seconds(s) if !(s > 0.0) => {
            return Err(Error::Config(format!(
                "RPE time delta must be positive, got {s}"
            )))
        }
        RpeDelta::Seconds(s) => (0..times.len())
            .filter_map(|k| {
                let target = times[k] + s;
                let idx = times.partition_point(|&t| t < target);
                let best = [idx.checked_sub(1), Some(idx)]
                    .into_iter()
                    .flatten()
                    .filter(|&l| l > k && l < times.len())
                    .min_by(|&a, &b| {
                        (times[a] - target)
                            .abs()
                            .partial_cmp(&(times[b] - target).abs())
                            .unwrap_or(Ordering::Equal)
                    })?;
                Some((k, best))
            })
            .collect(),
    };
    if steps.is_empty() {
        return Err(Error::Metric(format!(
            "no pose pairs {delta:?} apart among {} associated poses",
            pairs.len()
        )));
    }
    let errors: Vec<f64> = steps
        .iter()
        .map(|&(k, l)| {
            let (ei, gi) = pairs[k];
            let (ej, gj) = pairs[l];
            let gt_rel = gt.poses[gi].isometry().inverse() * gt.poses[gj].isometry();
            let est_rel = est.poses[ei].isometry().inverse() * est.poses[ej].isometry();
            (gt_rel.inverse() * est_rel).translation.vector.norm()
        })
        .collect();
    let stats = ErrorStats::from_errors(&errors).expect("non-empty");
    Ok(RpeReport {
        steps,
        errors,
        stats,
    })
}

/// Mean translational RPE in meters.
pub fn rpe_mean(est: &Trajectory, gt: &Trajectory, delta: RpeDelta, max_dt: f64) -> Result<f64> {
    rpe(est, gt, delta, max_dt).map(|r| r.stats.mean)
}
