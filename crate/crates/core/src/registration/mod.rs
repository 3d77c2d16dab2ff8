//! Coarse-to-fine placement of object meshes in camera space: PnP from
//! 2D-3D matches, a scale/translation fit along viewing rays, then
//! derivative-free refinement of a mask-overlap plus depth objective.

mod files;
mod loss;
mod pnp;
mod refine;

pub use files::*;
pub use loss::*;
pub use pnp::*;
pub use refine::*;

use crate::math::{Similarity, Vec3};
use crate::scene::{CameraIntrinsics, DepthImage, MaskImage, SceneError, TriangleMesh};

#[derive(Debug, thiserror::Error)]
pub enum RegistrationError {
    #[error("insufficient correspondences: {0} given, at least 6 needed")]
    InsufficientCorrespondences(usize),
    #[error("degenerate correspondences: {0}")]
    Degenerate(String),
    #[error("scale fit undefined: object points are all at the camera origin")]
    ZeroScale,
    #[error("both masks are empty")]
    EmptyMasks,
    #[error("mask is empty")]
    EmptyMask,
    #[error("image sizes differ: {0}x{1} vs {2}x{3}")]
    SizeMismatch(u32, u32, u32, u32),
    #[error("initialization out of view")]
    OutOfView,
    #[error("no correspondence pixel has a valid observed depth")]
    NoDepth,
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Pixel `p_i` in the observed image matched to object-space point `P'_i`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet {
    pub pixels: Vec<(f64, f64)>,
    pub object_points: Vec<Vec3>,
}

impl CorrespondenceSet {
    pub fn new(pixels: Vec<(f64, f64)>, object_points: Vec<Vec3>) -> Self {
        assert_eq!(pixels.len(), object_points.len());
        Self {
            pixels,
            object_points,
        }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Scene-side points: each pixel lifted with the observed depth. Pixels
    /// without valid depth yield `None`.
    pub fn scene_points(&self, cam: &CameraIntrinsics, depth: &DepthImage) -> Vec<Option<Vec3>> {
        self.pixels
            .iter()
            .map(|&(u, v)| depth.sample(u, v).map(|z| cam.unproject(u, v, z)))
            .collect()
    }
}

/// Final pose plus the loss terms it achieved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    pub pose: Similarity,
    pub pnp_rms: f64,
    pub dice: f64,
    pub depth: f64,
    pub loss: f64,
}

/// PnP, then the scale fit about the camera, then refinement.
pub fn register_object(
    mesh: &TriangleMesh,
    cam: &CameraIntrinsics,
    corr: &CorrespondenceSet,
    depth_obs: &DepthImage,
    mask_obs: &MaskImage,
    opts: &RefineOptions,
) -> Result<Registration, RegistrationError> {
    let pnp = solve_pnp(corr, cam)?;
    let (scene, object) = scale_pairs(mesh, cam, corr, depth_obs, &pnp.pose);
    if scene.is_empty() {
        return Err(RegistrationError::NoDepth);
    }
    let s = fit_scale_about_camera(&scene, &object)?;
    let coarse = scale_about_camera(&pnp.pose, s);
    let refined = refine_pose(mesh, cam, mask_obs, depth_obs, &coarse, opts)?;
    if refined.dice > 0.2 {
        log::warn!(
            "registration ended with poor mask overlap (dice loss {:.3}); check the correspondences",
            refined.dice
        );
    }
    Ok(Registration {
        pose: refined.pose,
        pnp_rms: pnp.rms,
        dice: refined.dice,
        depth: refined.depth,
        loss: refined.loss,
    })
}

/// Lifted scene points paired with PnP-posed object points for the scale
/// fit. Only vertices the PnP pose leaves unoccluded take part, since the
/// observed depth at a hidden vertex's pixel belongs to another surface;
/// pairs whose depth ratio strays from the median (silhouette pixels that
/// lift onto the background) are dropped. Falls back to every pair with
/// valid depth when nothing survives.
fn scale_pairs(
    mesh: &TriangleMesh,
    cam: &CameraIntrinsics,
    corr: &CorrespondenceSet,
    depth_obs: &DepthImage,
    pose: &Similarity,
) -> (Vec<Vec3>, Vec<Vec3>) {
    let (_, own) = rasterize_mask_depth(mesh, pose, cam);
    let lifted = corr.scene_points(cam, depth_obs);
    let mut all = Vec::new();
    let mut visible = Vec::new();
    for ((p, x), &(u, v)) in lifted.iter().zip(&corr.object_points).zip(&corr.pixels) {
        let Some(p) = p else { continue };
        let q = pose.apply(x);
        all.push((*p, q));
        if own.sample(u, v).is_some_and(|z| q.z <= z * 1.02) {
            visible.push((*p, q));
        }
    }
    let mut ratios: Vec<f64> = visible.iter().map(|(p, q)| p.z / q.z).collect();
    ratios.sort_by(f64::total_cmp);
    if let Some(&med) = ratios.get(ratios.len() / 2) {
        visible.retain(|(p, q)| (p.z / q.z / med - 1.0).abs() < 0.05);
    }
    let pairs = if visible.is_empty() { all } else { visible };
    pairs.into_iter().unzip()
}

/// Evenly spread unit directions (golden-angle spiral).
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let th = golden * i as f64;
            Vec3::new(r * th.cos(), y, r * th.sin())
        })
        .collect()
}

pub const DEFAULT_VIEW_COUNT: usize = 64;
