use std::collections::VecDeque;

use crate::math::Vec3;
use crate::scene::{Camera, DepthImage, Heightfield};

use super::RenderError;

/// Ground heightfield over `[0, extent]²` reconstructed from the background
/// depth. Every valid pixel is unprojected into the world and binned to its
/// nearest node, where heights are averaged. Empty nodes copy the nearest
/// filled node (breadth-first, 4-connected), then interior nodes get one
/// Laplacian pass `h ← (h + mean₄) / 2`.
pub fn build_shadow_catcher(
    depth: &DepthImage,
    cam: &Camera,
    extent: f64,
    resolution: usize,
) -> Result<Heightfield, RenderError> {
    let total = depth.values.len();
    let valid = depth.valid_count();
    if total == 0 || 2 * valid < total {
        return Err(RenderError::TooFewValidDepth { valid, total });
    }
    let n = resolution.max(2);
    let mut hf = Heightfield::flat(n, extent, 0.0);
    let h = hf.spacing();
    let mut sum = vec![0.0; n * n];
    let mut count = vec![0u32; n * n];
    for y in 0..depth.height {
        for x in 0..depth.width {
            let Some(z) = depth.get(x, y) else { continue };
            let p = cam
                .camera_to_world
                .apply(&cam.intrinsics.unproject(x as f64 + 0.5, y as f64 + 0.5, z));
            let (gi, gj) = ((p.x / h).round(), (p.z / h).round());
            if gi < 0.0 || gj < 0.0 || gi > (n - 1) as f64 || gj > (n - 1) as f64 {
                continue;
            }
            let k = gj as usize * n + gi as usize;
            sum[k] += p.y;
            count[k] += 1;
        }
    }
    let mut filled: Vec<bool> = count.iter().map(|&c| c > 0).collect();
    if !filled.iter().any(|&f| f) {
        return Err(RenderError::CatcherOutsideDomain);
    }
    let mut queue = VecDeque::new();
    for k in 0..n * n {
        if filled[k] {
            hf.heights[k] = sum[k] / count[k] as f64;
            queue.push_back(k);
        }
    }
    while let Some(k) = queue.pop_front() {
        let (i, j) = (k % n, k / n);
        let mut visit = |ni: usize, nj: usize| {
            let nk = nj * n + ni;
            if !filled[nk] {
                filled[nk] = true;
                hf.heights[nk] = hf.heights[k];
                queue.push_back(nk);
            }
        };
        if i > 0 {
            visit(i - 1, j);
        }
        if i + 1 < n {
            visit(i + 1, j);
        }
        if j > 0 {
            visit(i, j - 1);
        }
        if j + 1 < n {
            visit(i, j + 1);
        }
    }
    let src = hf.heights.clone();
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let k = j * n + i;
            let mean = 0.25 * (src[k - 1] + src[k + 1] + src[k - n] + src[k + n]);
            hf.heights[k] = 0.5 * (src[k] + mean);
        }
    }
    Ok(hf)
}

/// Synthetic z-depth of a world-space heightfield seen by `cam`, found by
/// marching each pixel ray; pixels missing the surface are invalid.
pub fn depth_of_heightfield(hf: &Heightfield, cam: &Camera) -> DepthImage {
    let k = &cam.intrinsics;
    let origin = cam.eye();
    let reach = 4.0 * hf.extent + (origin - Vec3::new(hf.extent, 0.0, hf.extent) * 0.5).norm();
    let step = 0.25 * hf.spacing();
    let values = crate::par::par_map((k.width * k.height) as usize, |idx| {
        let (x, y) = ((idx as u32 % k.width) as f64 + 0.5, (idx as u32 / k.width) as f64 + 0.5);
        let dir_cam = k.unproject(x, y, 1.0);
        let dir = cam.camera_to_world.apply_vector(&dir_cam);
        let inside = |p: &Vec3| p.x >= 0.0 && p.z >= 0.0 && p.x <= hf.extent && p.z <= hf.extent;
        let above = |t: f64| {
            let p = origin + dir * t;
            p.y - hf.height_at(p.x, p.z)
        };
        let mut t = 0.0;
        let mut prev = above(0.0);
        while t < reach {
            let tn = t + step;
            let cur = above(tn);
            if prev > 0.0 && cur <= 0.0 && inside(&(origin + dir * tn)) {
                let (mut lo, mut hi) = (t, tn);
                for _ in 0..50 {
                    let mid = 0.5 * (lo + hi);
                    if above(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return 0.5 * (lo + hi);
            }
            prev = cur;
            t = tn;
        }
        f64::NAN
    });
    DepthImage {
        width: k.width,
        height: k.height,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::CameraIntrinsics;

    #[test]
    fn flat_ground_seen_obliquely() {
        let k = CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48);
        let cam = Camera::look_at(k, Vec3::new(1.0, 1.8, 0.0), Vec3::new(1.0, 0.2, 0.9), Vec3::y());
        let truth = Heightfield::flat(33, 2.0, 0.2);
        let d = depth_of_heightfield(&truth, &cam);
        let hf = build_shadow_catcher(&d, &cam, 2.0, 33).unwrap();
        assert!(hf.heights.iter().all(|h| (h - 0.2).abs() < 1e-6));
    }

    #[test]
    fn too_few_valid_pixels() {
        let k = CameraIntrinsics::new(10.0, 10.0, 2.0, 2.0, 4, 4);
        let d = DepthImage::new_invalid(4, 4);
        let e = build_shadow_catcher(&d, &Camera::at_origin(k), 2.0, 8).unwrap_err();
        assert_eq!(e, RenderError::TooFewValidDepth { valid: 0, total: 16 });
    }
}
