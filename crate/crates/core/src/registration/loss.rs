use crate::math::{Similarity, Vec3};
use crate::raster::{Projection, Raster};
use crate::scene::{CameraIntrinsics, DepthImage, MaskImage, TriangleMesh};

use super::RegistrationError;

/// `s* = Σ⟨P, P'⟩ / Σ‖P'‖²`, the least-squares scale about the camera
/// origin taking `P'` onto `P`.
pub fn fit_scale_about_camera(scene: &[Vec3], object_cam: &[Vec3]) -> Result<f64, RegistrationError> {
    assert_eq!(scene.len(), object_cam.len(), "point lists differ in length");
    let num: f64 = scene.iter().zip(object_cam).map(|(p, q)| p.dot(q)).sum();
    let den: f64 = object_cam.iter().map(|q| q.norm_squared()).sum();
    if !(den > 0.0) {
        return Err(RegistrationError::ZeroScale);
    }
    Ok(num / den)
}

/// Scales a pose about the camera origin. Every point moves along its own
/// viewing ray, so its projection is unchanged.
pub fn scale_about_camera(pose: &Similarity, s: f64) -> Similarity {
    Similarity::new(pose.rotation, pose.translation * s, pose.scale * s)
}

/// Silhouette and nearest z-depth of a posed mesh.
pub fn rasterize_mask_depth(
    mesh: &TriangleMesh,
    pose: &Similarity,
    cam: &CameraIntrinsics,
) -> (MaskImage, DepthImage) {
    let verts: Vec<Vec3> = mesh.vertices.iter().map(|v| pose.apply(v)).collect();
    let mut r = Raster::new(cam.width, cam.height);
    r.draw_mesh(&Projection::perspective(cam), &verts, &mesh.triangles, 0);
    let mut mask = MaskImage::new(cam.width, cam.height);
    let mut depth = DepthImage::new_invalid(cam.width, cam.height);
    for i in 0..r.depth.len() {
        if r.covered(i) {
            mask.values[i] = true;
            depth.values[i] = r.depth[i];
        }
    }
    (mask, depth)
}

fn check_size(aw: u32, ah: u32, bw: u32, bh: u32) -> Result<(), RegistrationError> {
    if aw != bw || ah != bh {
        return Err(RegistrationError::SizeMismatch(aw, ah, bw, bh));
    }
    Ok(())
}

/// `1 - 2|A ∩ B| / (|A| + |B|)`.
pub fn dice_loss(a: &MaskImage, b: &MaskImage) -> Result<f64, RegistrationError> {
    check_size(a.width, a.height, b.width, b.height)?;
    let mut na = 0usize;
    let mut nb = 0usize;
    let mut both = 0usize;
    for (&x, &y) in a.values.iter().zip(&b.values) {
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    if na + nb == 0 {
        return Err(RegistrationError::EmptyMasks);
    }
    Ok(1.0 - 2.0 * both as f64 / (na + nb) as f64)
}

/// Mean squared depth difference over pixels of `mask_b` that are valid in
/// both depth images.
pub fn masked_depth_loss(
    mask_b: &MaskImage,
    z_a: &DepthImage,
    z_b: &DepthImage,
) -> Result<f64, RegistrationError> {
    check_size(mask_b.width, mask_b.height, z_a.width, z_a.height)?;
    check_size(mask_b.width, mask_b.height, z_b.width, z_b.height)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..mask_b.values.len() {
        if mask_b.values[i] && z_a.is_valid_index(i) && z_b.is_valid_index(i) {
            let d = z_a.values[i] - z_b.values[i];
            sum += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(RegistrationError::EmptyMask);
    }
    Ok(sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_fit_closed_form_cases() {
        let p: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 1.0, 3.0 + i as f64)).collect();
        assert!((fit_scale_about_camera(&p, &p).unwrap() - 1.0).abs() < 1e-15);
        let p2: Vec<Vec3> = p.iter().map(|x| 2.0 * x).collect();
        assert!((fit_scale_about_camera(&p2, &p).unwrap() - 2.0).abs() < 1e-15);
        assert!(fit_scale_about_camera(&p, &[Vec3::zeros(); 5]).is_err());
    }

    #[test]
    fn scaling_about_camera_preserves_projection() {
        let cam = CameraIntrinsics::new(300.0, 320.0, 100.0, 80.0, 200, 160);
        let pose = Similarity::new(
            crate::math::rotation_from_axis_angle(&Vec3::new(0.1, 0.2, 0.3)),
            Vec3::new(0.2, -0.1, 3.0),
            0.8,
        );
        let x = Vec3::new(0.3, 0.4, -0.2);
        let (u0, v0) = cam.project(&pose.apply(&x));
        for s in [0.1, 0.5, 2.0, 7.0] {
            let (u, v) = cam.project(&scale_about_camera(&pose, s).apply(&x));
            assert!((u - u0).abs() < 1e-9 && (v - v0).abs() < 1e-9);
        }
    }

    #[test]
    fn dice_three_pixel_fixture() {
        let a = MaskImage::from_fn(3, 1, |x, _| x < 2);
        let b = MaskImage::from_fn(3, 1, |x, _| x > 0);
        // |A| = |B| = 2, |A∩B| = 1 → 1 - 2/4
        assert_eq!(dice_loss(&a, &b).unwrap(), 0.5);
        assert_eq!(dice_loss(&b, &a).unwrap(), 0.5);
        assert_eq!(dice_loss(&a, &a).unwrap(), 0.0);
        let c = MaskImage::from_fn(3, 1, |x, _| x == 2);
        let d = MaskImage::from_fn(3, 1, |x, _| x == 0);
        assert_eq!(dice_loss(&c, &d).unwrap(), 1.0);
        assert!(dice_loss(&MaskImage::new(3, 1), &MaskImage::new(3, 1)).is_err());
    }

    #[test]
    fn depth_loss_three_pixel_fixture() {
        let m = MaskImage::from_fn(3, 1, |x, _| x < 2);
        let za = DepthImage::from_fn(3, 1, |x, _| [4.0, 5.0, 9.0][x as usize]);
        let zb = DepthImage::from_fn(3, 1, |x, _| [1.0, 1.0, 1.0][x as usize]);
        // diffs 3 and 4 on the masked pixels → (9 + 16) / 2
        assert_eq!(masked_depth_loss(&m, &za, &zb).unwrap(), 12.5);
        let m2 = MaskImage::from_fn(3, 1, |x, _| x == 0);
        let za2 = DepthImage::from_fn(3, 1, |x, _| [1.0, 1.0, 9.0][x as usize]);
        assert_eq!(masked_depth_loss(&m2, &za2, &zb).unwrap(), 0.0);
        assert!(masked_depth_loss(&MaskImage::new(3, 1), &za, &zb).is_err());
    }

    #[test]
    fn fronto_parallel_square_matches_pinhole_extent() {
        let cam = CameraIntrinsics::new(200.0, 200.0, 100.0, 100.0, 200, 200);
        let mesh = TriangleMesh::new(
            vec![
                Vec3::new(-0.5, -0.5, 0.0),
                Vec3::new(0.5, -0.5, 0.0),
                Vec3::new(0.5, 0.5, 0.0),
                Vec3::new(-0.5, 0.5, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        );
        let pose = Similarity::rigid(crate::math::Mat3::identity(), Vec3::new(0.0, 0.0, 2.0));
        let (mask, depth) = rasterize_mask_depth(&mesh, &pose, &cam);
        // width = fx * 1 / 2 = 100 px, from u = 50 to 150
        let row: Vec<u32> = (0..200).filter(|&x| mask.get(x, 100)).collect();
        assert_eq!(row.len(), 100);
        assert_eq!(*row.first().unwrap(), 50);
        assert_eq!(*row.last().unwrap(), 149);
        assert_eq!(mask.count(), 100 * 100);
        for i in 0..mask.values.len() {
            if mask.values[i] {
                assert!((depth.values[i] - 2.0).abs() < 1e-12);
            }
        }
        let behind = Similarity::rigid(crate::math::Mat3::identity(), Vec3::new(0.0, 0.0, -2.0));
        let (m, d) = rasterize_mask_depth(&mesh, &behind, &cam);
        assert_eq!(m.count(), 0);
        assert_eq!(d.valid_count(), 0);
    }
}
