use nalgebra::{DMatrix, Matrix6, Vector6};

use crate::math::{nearest_rotation, rotation_from_axis_angle, Mat3, Similarity, Vec3};
use crate::scene::CameraIntrinsics;

use super::{CorrespondenceSet, RegistrationError};

pub const MIN_CORRESPONDENCES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpSolution {
    /// Object-to-camera pose with unit scale.
    pub pose: Similarity,
    /// Root-mean-square reprojection error, pixels.
    pub rms: f64,
}

pub fn reprojection_rms(pose: &Similarity, corr: &CorrespondenceSet, cam: &CameraIntrinsics) -> f64 {
    let mut sum = 0.0;
    for (&(u, v), x) in corr.pixels.iter().zip(&corr.object_points) {
        let (pu, pv) = cam.project(&pose.apply(x));
        sum += (pu - u).powi(2) + (pv - v).powi(2);
    }
    (sum / corr.len().max(1) as f64).sqrt()
}

/// Pose from 2D-3D matches: normalized DLT, then Levenberg-Marquardt on the
/// pixel reprojection error.
pub fn solve_pnp(corr: &CorrespondenceSet, cam: &CameraIntrinsics) -> Result<PnpSolution, RegistrationError> {
    let n = corr.len();
    if n < MIN_CORRESPONDENCES {
        return Err(RegistrationError::InsufficientCorrespondences(n));
    }
    for &(u, v) in &corr.pixels {
        if !cam.contains_pixel(u, v) {
            return Err(RegistrationError::Degenerate(format!("pixel ({u}, {v}) outside the image")));
        }
    }
    let centroid: Vec3 = corr.object_points.iter().sum::<Vec3>() / n as f64;
    let mut cov = Mat3::zeros();
    for p in &corr.object_points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let sv = cov.symmetric_eigenvalues();
    let (smin, smax) = (sv.min().max(0.0), sv.max());
    if !(smax > 0.0) || (smin / smax).sqrt() < 1e-4 {
        return Err(RegistrationError::Degenerate("object points are coplanar".into()));
    }

    // Normalize: image points through K^-1, object points to zero mean and
    // RMS distance sqrt(3).
    let rms_dist = (corr
        .object_points
        .iter()
        .map(|p| (p - centroid).norm_squared())
        .sum::<f64>()
        / n as f64)
        .sqrt();
    let sigma = 3f64.sqrt() / rms_dist;
    let mut a = DMatrix::<f64>::zeros(2 * n, 12);
    for (i, (&(u, v), p)) in corr.pixels.iter().zip(&corr.object_points).enumerate() {
        let x = (u - cam.cx) / cam.fx;
        let y = (v - cam.cy) / cam.fy;
        let q = (p - centroid) * sigma;
        let h = [q.x, q.y, q.z, 1.0];
        for k in 0..4 {
            a[(2 * i, k)] = h[k];
            a[(2 * i, 8 + k)] = -x * h[k];
            a[(2 * i + 1, 4 + k)] = h[k];
            a[(2 * i + 1, 8 + k)] = -y * h[k];
        }
    }
    // Null vector of A from the eigen decomposition of AᵀA (12x12).
    let ata = a.transpose() * &a;
    let eig = ata.symmetric_eigen();
    let imin = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|e| e.0)
        .unwrap_or(0);
    let pvec = eig.eigenvectors.column(imin).into_owned();
    let mut m = Mat3::new(pvec[0], pvec[1], pvec[2], pvec[4], pvec[5], pvec[6], pvec[8], pvec[9], pvec[10]);
    let mut p4 = Vec3::new(pvec[3], pvec[7], pvec[11]);
    if m.determinant() < 0.0 {
        m = -m;
        p4 = -p4;
    }
    let svd = m.svd(false, false);
    let lambda = svd.singular_values.mean();
    if !(lambda > 0.0) {
        return Err(RegistrationError::Degenerate("projection matrix is singular".into()));
    }
    // x ~ M sigma (X - c) + p4 with M ≈ lambda R, so the camera point is
    // R X + (p4 - sigma M c) / (sigma lambda).
    let r = nearest_rotation(&m);
    let t = (p4 - sigma * (m * centroid)) / (sigma * lambda);
    let mut pose = Similarity::rigid(r, t);
    if corr
        .object_points
        .iter()
        .filter(|x| pose.apply(x).z <= 0.0)
        .count()
        * 2
        > n
    {
        return Err(RegistrationError::Degenerate("points project from behind the camera".into()));
    }
    pose = levenberg_marquardt(pose, corr, cam);
    let rms = reprojection_rms(&pose, corr, cam);
    Ok(PnpSolution { pose, rms })
}

fn residuals_and_jacobian(
    pose: &Similarity,
    corr: &CorrespondenceSet,
    cam: &CameraIntrinsics,
    jtj: &mut Matrix6<f64>,
    jtr: &mut Vector6<f64>,
) -> f64 {
    *jtj = Matrix6::zeros();
    *jtr = Vector6::zeros();
    let mut cost = 0.0;
    for (&(u, v), x) in corr.pixels.iter().zip(&corr.object_points) {
        let rx = pose.rotation * x;
        let p = rx + pose.translation;
        let iz = 1.0 / p.z;
        let ru = cam.fx * p.x * iz + cam.cx - u;
        let rv = cam.fy * p.y * iz + cam.cy - v;
        cost += ru * ru + rv * rv;
        // d p / d omega = -[rx]x, d p / d t = I
        let dp_dw = Mat3::new(0.0, rx.z, -rx.y, -rx.z, 0.0, rx.x, rx.y, -rx.x, 0.0);
        let du_dp = Vec3::new(cam.fx * iz, 0.0, -cam.fx * p.x * iz * iz);
        let dv_dp = Vec3::new(0.0, cam.fy * iz, -cam.fy * p.y * iz * iz);
        let ju_w = dp_dw.transpose() * du_dp;
        let jv_w = dp_dw.transpose() * dv_dp;
        let ju = Vector6::new(ju_w.x, ju_w.y, ju_w.z, du_dp.x, du_dp.y, du_dp.z);
        let jv = Vector6::new(jv_w.x, jv_w.y, jv_w.z, dv_dp.x, dv_dp.y, dv_dp.z);
        *jtj += ju * ju.transpose() + jv * jv.transpose();
        *jtr += ju * ru + jv * rv;
    }
    cost
}

fn cost(pose: &Similarity, corr: &CorrespondenceSet, cam: &CameraIntrinsics) -> f64 {
    let r = reprojection_rms(pose, corr, cam);
    r * r * corr.len() as f64
}

fn levenberg_marquardt(mut pose: Similarity, corr: &CorrespondenceSet, cam: &CameraIntrinsics) -> Similarity {
    let mut jtj = Matrix6::zeros();
    let mut jtr = Vector6::zeros();
    let mut lambda = 1e-3;
    let mut current = residuals_and_jacobian(&pose, corr, cam, &mut jtj, &mut jtr);
    for _ in 0..100 {
        if current < 1e-30 {
            break;
        }
        let mut damped = jtj;
        for i in 0..6 {
            damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
        }
        let Some(step) = damped.cholesky().map(|c| c.solve(&(-jtr))) else {
            lambda *= 10.0;
            continue;
        };
        let w = Vec3::new(step[0], step[1], step[2]);
        let dt = Vec3::new(step[3], step[4], step[5]);
        let cand = Similarity::rigid(
            nearest_rotation(&(rotation_from_axis_angle(&w) * pose.rotation)),
            pose.translation + dt,
        );
        let c = cost(&cand, corr, cam);
        if c < current {
            let improvement = (current - c) / current;
            pose = cand;
            lambda = (lambda * 0.1).max(1e-12);
            current = residuals_and_jacobian(&pose, corr, cam, &mut jtj, &mut jtr);
            if improvement < 1e-14 || step.norm() < 1e-15 {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    pose
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rotation_angle_between;

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480)
    }

    fn project_set(pose: &Similarity, pts: &[Vec3]) -> CorrespondenceSet {
        let c = cam();
        CorrespondenceSet::new(pts.iter().map(|x| c.project(&pose.apply(x))).collect(), pts.to_vec())
    }

    fn cube_corners() -> Vec<Vec3> {
        let mut v = Vec::new();
        for i in 0..8 {
            v.push(Vec3::new(
                if i & 1 == 0 { -0.5 } else { 0.5 },
                if i & 2 == 0 { -0.5 } else { 0.5 },
                if i & 4 == 0 { -0.5 } else { 0.5 },
            ));
        }
        v
    }

    #[test]
    fn recovers_identity_rotation_at_depth_five() {
        let truth = Similarity::rigid(Mat3::identity(), Vec3::new(0.0, 0.0, 5.0));
        let corr = project_set(&truth, &cube_corners());
        let sol = solve_pnp(&corr, &cam()).unwrap();
        assert!(rotation_angle_between(&sol.pose.rotation, &truth.rotation) < 1e-6);
        assert!((sol.pose.translation - truth.translation).norm() < 1e-6);
        assert!(sol.rms < 1e-6);
    }

    #[test]
    fn recovers_general_pose_and_is_a_fixed_point() {
        let truth = Similarity::rigid(
            rotation_from_axis_angle(&Vec3::new(0.4, -0.7, 0.2)),
            Vec3::new(0.3, -0.2, 4.0),
        );
        let corr = project_set(&truth, &cube_corners());
        let sol = solve_pnp(&corr, &cam()).unwrap();
        assert!(rotation_angle_between(&sol.pose.rotation, &truth.rotation) < 1e-6);
        let again = solve_pnp(&project_set(&sol.pose, &cube_corners()), &cam()).unwrap();
        assert!(rotation_angle_between(&again.pose.rotation, &sol.pose.rotation) < 1e-9);
        assert!((again.pose.translation - sol.pose.translation).norm() < 1e-9);
    }

    #[test]
    fn five_points_are_rejected() {
        let truth = Similarity::rigid(Mat3::identity(), Vec3::new(0.0, 0.0, 5.0));
        let corr = project_set(&truth, &cube_corners()[..5]);
        let err = solve_pnp(&corr, &cam()).unwrap_err();
        assert!(err.to_string().contains("insufficient correspondences"));
    }

    #[test]
    fn coplanar_points_are_rejected() {
        let truth = Similarity::rigid(Mat3::identity(), Vec3::new(0.0, 0.0, 5.0));
        let pts: Vec<Vec3> = (0..8).map(|i| Vec3::new(i as f64 * 0.1, (i * i) as f64 * 0.05, 0.0)).collect();
        let corr = project_set(&truth, &pts);
        assert!(matches!(solve_pnp(&corr, &cam()), Err(RegistrationError::Degenerate(_))));
    }
}
