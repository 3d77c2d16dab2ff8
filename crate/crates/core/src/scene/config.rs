//! The scene document: a strict TOML schema describing one experiment.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::math::{vec3, PoseRecord, Vec3};
use crate::registration::read_correspondences;
use crate::render::LightSpec;

use super::io;
use super::types::{
    Camera, CameraIntrinsics, ColliderMode, MaterialSpec, ScaleModel, SimParams, STANDARD_GRAVITY,
};
use super::SceneError;

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

/// Intrinsics plus where the camera sits in the simulator frame (y up).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    #[serde(default = "default_up")]
    pub up: [f64; 3],
}

impl CameraConfig {
    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }

    pub fn camera(&self) -> Camera {
        Camera::look_at(
            self.intrinsics(),
            vec3(self.position),
            vec3(self.look_at),
            vec3(self.up),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColliderKind {
    /// Horizontal plane `y = height`.
    Plane,
    /// Heightfield built from a background depth raster.
    Depth,
}

fn default_friction() -> f64 {
    0.3
}

fn default_collider_resolution() -> usize {
    128
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColliderConfig {
    pub kind: ColliderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Heightfield samples per axis.
    #[serde(default = "default_collider_resolution")]
    pub resolution: usize,
    #[serde(default = "default_friction")]
    pub friction: f64,
    #[serde(default)]
    pub mode: ColliderMode,
}

fn default_g0() -> f64 {
    STANDARD_GRAVITY
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleConfig {
    /// Explicit sim-size / real-size ratio. When absent it is derived from
    /// the objects' `real_size`, or 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default = "default_g0")]
    pub g0: f64,
}

impl Default for ScaleConfig {
    fn default() -> Self {
        Self {
            k: None,
            g0: STANDARD_GRAVITY,
        }
    }
}

fn default_shadow_map() -> usize {
    2048
}
fn default_threshold() -> f64 {
    0.25
}
fn default_dilation() -> usize {
    50
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderParams {
    #[serde(default = "default_shadow_map")]
    pub shadow_map_resolution: usize,
    /// Luma below which a pixel counts as shadow when building shadow masks.
    #[serde(default = "default_threshold")]
    pub shadow_threshold: f64,
    /// Square dilation kernel size for shadow masks, pixels.
    #[serde(default = "default_dilation")]
    pub dilation_kernel: usize,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            shadow_map_resolution: default_shadow_map(),
            shadow_threshold: default_threshold(),
            dilation_kernel: default_dilation(),
        }
    }
}

fn default_stride() -> usize {
    1
}
fn default_neighbors() -> usize {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackParams {
    #[serde(default = "default_stride")]
    pub stride: usize,
    /// Particles bound to each mesh vertex.
    #[serde(default = "default_neighbors")]
    pub neighbors: usize,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self {
            stride: default_stride(),
            neighbors: default_neighbors(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub id: String,
    pub mesh: PathBuf,
    pub material: MaterialSpec,
    /// Observed instance mask, same size as the camera image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    /// 2D-3D matches, lines of `u v X Y Z`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correspondences: Option<PathBuf>,
    /// Known camera-frame pose; skips registration when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseRecord>,
    /// Real-world velocity, m/s, in the simulator frame.
    #[serde(default)]
    pub initial_velocity: [f64; 3],
    /// Flat color for meshes without vertex colors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<[f64; 3]>,
    /// Real size of the object (largest bounding-box side), meters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real_size: Option<f64>,
}

impl ObjectConfig {
    pub fn initial_velocity(&self) -> Vec3 {
        vec3(self.initial_velocity)
    }
}

/// Full declarative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub camera: CameraConfig,
    /// Observed depth of the input image, used by registration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<PathBuf>,
    /// Object-free background the frames are composited over.
    pub background_plate: PathBuf,
    /// The original photograph; enables the tone-curve fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_image: Option<PathBuf>,
    pub collider: ColliderConfig,
    pub light: LightSpec,
    #[serde(default)]
    pub scale: ScaleConfig,
    #[serde(default)]
    pub sim: SimParams,
    #[serde(default)]
    pub render: RenderParams,
    #[serde(default)]
    pub track: TrackParams,
    pub objects: Vec<ObjectConfig>,
    /// Directory relative paths resolve against; not part of the document.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Parses a scene document, applies defaults and checks every invariant
/// that does not need the filesystem.
pub fn parse_scene_config(text: &str) -> Result<SceneConfig, SceneError> {
    let cfg: SceneConfig = toml::from_str(text).map_err(|e| SceneError::Parse(e.to_string()))?;
    if let Some(first) = cfg.type_violations().into_iter().next() {
        return Err(SceneError::Invalid(first));
    }
    Ok(cfg)
}

pub fn serialize_scene_config(cfg: &SceneConfig) -> Result<String, SceneError> {
    toml::to_string(cfg).map_err(|e| SceneError::Parse(e.to_string()))
}

/// Reads and parses a scene file; relative asset paths resolve against its
/// directory.
pub fn load_scene_config(path: &Path) -> Result<SceneConfig, SceneError> {
    let text = std::fs::read_to_string(path).map_err(|e| SceneError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut cfg = parse_scene_config(&text)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg)
}

impl SceneConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn camera(&self) -> Camera {
        self.camera.camera()
    }

    /// Scale model with an explicit `k`, or 1 when `k` must come from
    /// object sizes (see [`SceneConfig::resolve_scale`]).
    pub fn explicit_scale(&self) -> ScaleModel {
        ScaleModel::new(self.scale.k.unwrap_or(1.0), self.scale.g0)
    }

    /// `k` from explicit config, else the mean of `sim_size / real_size`
    /// over objects that declare a real size, else 1.
    pub fn resolve_scale(&self, sim_sizes: &[f64]) -> ScaleModel {
        if let Some(k) = self.scale.k {
            return ScaleModel::new(k, self.scale.g0);
        }
        let ratios: Vec<f64> = self
            .objects
            .iter()
            .zip(sim_sizes)
            .filter_map(|(o, &s)| o.real_size.map(|r| s / r))
            .collect();
        let k = if ratios.is_empty() {
            1.0
        } else {
            ratios.iter().sum::<f64>() / ratios.len() as f64
        };
        ScaleModel::new(k, self.scale.g0)
    }

    /// Invariant checks that need no file access.
    pub fn type_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        v.extend(self.camera.intrinsics().violations());
        if (vec3(self.camera.look_at) - vec3(self.camera.position)).norm() == 0.0 {
            v.push("camera look_at equals position".into());
        }
        if self.objects.is_empty() {
            v.push("scene needs at least one object".into());
        }
        let mut seen = HashSet::new();
        for o in &self.objects {
            if !seen.insert(o.id.as_str()) {
                v.push(format!("duplicate object id `{}`", o.id));
            }
            for m in o.material.violations() {
                v.push(format!("object `{}`: {}", o.id, m));
            }
            if let Some(r) = o.real_size {
                if !(r > 0.0) {
                    v.push(format!("object `{}`: real_size must be > 0", o.id));
                }
            }
            if let Some(p) = &o.pose {
                if !(p.scale > 0.0) {
                    v.push(format!("object `{}`: pose scale must be > 0", o.id));
                }
            }
            if o.pose.is_none() && o.correspondences.is_none() {
                v.push(format!(
                    "object `{}` needs either a pose or a correspondence file",
                    o.id
                ));
            }
        }
        if let Some(k) = self.scale.k {
            if !(k > 0.0) {
                v.push(format!("scale k must be > 0 (got {k})"));
            }
        }
        if !(self.scale.g0 >= 0.0) {
            v.push(format!("g0 must be >= 0 (got {})", self.scale.g0));
        }
        v.extend(self.sim.violations());
        match self.collider.kind {
            ColliderKind::Plane if self.collider.height.is_none() => {
                v.push("plane collider needs `height`".into())
            }
            ColliderKind::Depth if self.collider.path.is_none() => {
                v.push("depth collider needs `path`".into())
            }
            _ => {}
        }
        if self.collider.resolution < 2 {
            v.push("collider resolution must be >= 2".into());
        }
        if !(self.collider.friction >= 0.0) {
            v.push(format!("collider friction must be >= 0 (got {})", self.collider.friction));
        }
        v.extend(self.light.violations());
        if self.track.stride == 0 {
            v.push("track stride must be >= 1".into());
        }
        if self.track.neighbors == 0 {
            v.push("track neighbors must be >= 1".into());
        }
        if self.render.shadow_map_resolution < 16 {
            v.push("shadow_map_resolution must be >= 16".into());
        }
        v
    }

    /// Upper bound on particle speed used for the CFL check: the largest
    /// scaled initial speed plus free fall across the whole domain.
    pub fn speed_bound(&self) -> f64 {
        let scale = self.explicit_scale();
        let v0 = self
            .objects
            .iter()
            .map(|o| scale.scaled_velocity(&o.initial_velocity()).norm())
            .fold(0.0, f64::max);
        v0 + (2.0 * scale.scaled_gravity() * self.sim.domain_size).sqrt()
    }
}

/// All invariant violations of a scene, including unreadable or mismatched
/// assets. An empty list means every stage can run.
pub fn validate_scene(cfg: &SceneConfig) -> Vec<String> {
    let mut v = cfg.type_violations();
    let intr = cfg.camera.intrinsics();
    let (w, h) = (intr.width, intr.height);
    let check_size = |v: &mut Vec<String>, what: &str, path: &Path, iw: u32, ih: u32| {
        if iw != w || ih != h {
            v.push(format!(
                "{what} {} is {iw}x{ih}, camera is {w}x{h}",
                path.display()
            ));
        }
    };
    for o in &cfg.objects {
        let mesh = cfg.resolve(&o.mesh);
        if let Err(e) = io::read_mesh(&mesh) {
            v.push(format!("object `{}`: {}", o.id, e));
        }
        if let Some(m) = &o.mask {
            let p = cfg.resolve(m);
            match io::read_mask(&p) {
                Ok(mask) => check_size(&mut v, "mask", &p, mask.width, mask.height),
                Err(e) => v.push(format!("object `{}`: {}", o.id, e)),
            }
        }
        if let Some(c) = &o.correspondences {
            let p = cfg.resolve(c);
            if let Err(e) = read_correspondences(&p) {
                v.push(format!("object `{}`: {}", o.id, e));
            }
        }
    }
    let plate = cfg.resolve(&cfg.background_plate);
    match io::read_rgb(&plate) {
        Ok(img) => check_size(&mut v, "background plate", &plate, img.width(), img.height()),
        Err(e) => v.push(e.to_string()),
    }
    if let Some(s) = &cfg.source_image {
        let p = cfg.resolve(s);
        match io::read_rgb(&p) {
            Ok(img) => check_size(&mut v, "source image", &p, img.width(), img.height()),
            Err(e) => v.push(e.to_string()),
        }
    }
    for path in cfg.depth.iter().chain(cfg.collider.path.iter()) {
        let p = cfg.resolve(path);
        match io::read_depth(&p) {
            Ok(d) => check_size(&mut v, "depth", &p, d.width, d.height),
            Err(e) => v.push(e.to_string()),
        }
    }
    if let Some(msg) = cfg.sim.cfl_violation(cfg.speed_bound()) {
        v.push(msg);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
background_plate = "plate.png"

[camera]
fx = 200.0
fy = 200.0
cx = 80.0
cy = 60.0
width = 160
height = 120
position = [1.0, 1.0, 3.0]
look_at = [1.0, 0.5, 1.0]

[collider]
kind = "plane"
height = 0.2

[light]
kind = "directional"
direction = [0.0, -1.0, 0.0]

[[objects]]
id = "ball"
mesh = "ball.obj"
pose = { rotation = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], translation = [0.0, 0.0, 2.0] }
material = { density = 500.0, elasticity = "soft" }
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_scene_config(MINIMAL).unwrap();
        assert_eq!(cfg.sim.domain_size, 2.0);
        assert_eq!(cfg.sim.grid_resolution, 256);
        assert_eq!(cfg.scale.g0, 9.8);
        assert_eq!(cfg.objects[0].material.poisson_ratio, 0.2);
        assert_eq!(cfg.objects[0].material.youngs_modulus(), 5e4);
        assert_eq!(cfg.collider.mode, ColliderMode::Separate);
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = parse_scene_config(MINIMAL).unwrap();
        let text = serialize_scene_config(&cfg).unwrap();
        assert_eq!(parse_scene_config(&text).unwrap(), cfg);
    }

    #[test]
    fn poisson_half_is_rejected() {
        let text = MINIMAL.replace(
            "elasticity = \"soft\" }",
            "elasticity = \"soft\", poisson_ratio = 0.5 }",
        );
        let err = parse_scene_config(&text).unwrap_err().to_string();
        assert!(err.contains("poisson_ratio must be < 0.5"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = MINIMAL.replace("[collider]", "[collider]\nfriciton = 0.2");
        let err = parse_scene_config(&text).unwrap_err().to_string();
        assert!(err.contains("friciton"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn unknown_category_is_rejected() {
        let text = MINIMAL.replace("\"soft\"", "\"rigid\"");
        assert!(parse_scene_config(&text).is_err());
    }

    #[test]
    fn missing_files_are_named() {
        let cfg = parse_scene_config(MINIMAL).unwrap();
        let v = validate_scene(&cfg);
        assert!(v.iter().any(|m| m.contains("ball.obj")), "{v:?}");
        assert!(v.iter().any(|m| m.contains("plate.png")), "{v:?}");
    }

    #[test]
    fn cfl_violation_listed_for_large_dt() {
        let mut cfg = parse_scene_config(MINIMAL).unwrap();
        cfg.objects[0].initial_velocity = [0.0, 0.0, -5.0];
        // Δx = 2/256; bound = 5 + sqrt(2 * 9.8 * 2) ≈ 11.26 m/s
        let dx = cfg.sim.dx();
        let bound = cfg.speed_bound();
        assert!((bound - (5.0 + (39.2f64).sqrt())).abs() < 1e-12);
        cfg.sim.dt = 1.01 * dx / bound;
        assert!(cfg.sim.cfl_violation(bound).is_some());
        cfg.sim.dt = 0.99 * dx / bound;
        assert!(cfg.sim.cfl_violation(bound).is_none());
        cfg.sim.dt = 1e-2;
        assert!(validate_scene(&cfg).iter().any(|m| m.contains("CFL")));
    }
}
