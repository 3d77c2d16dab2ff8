use serde::{Deserialize, Serialize};

use crate::math::{Aabb, Mat3, Similarity, Vec3};

use super::SceneError;

/// Pinhole intrinsics. Camera frame: x right, y down, z forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.fx > 0.0 && self.fy > 0.0) {
            v.push(format!("camera focal lengths must be > 0 (fx={}, fy={})", self.fx, self.fy));
        }
        if self.width == 0 || self.height == 0 {
            v.push("camera width and height must be > 0".into());
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            v.push(format!("camera cx={} outside [0, {})", self.cx, self.width));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            v.push(format!("camera cy={} outside [0, {})", self.cy, self.height));
        }
        v
    }

    /// Pixel coordinates of a camera-frame point (`z > 0` assumed).
    #[inline]
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Camera-frame point at z-depth `z` on the ray through pixel `(u, v)`.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z)
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// Intrinsics plus the camera's placement in the world (simulator) frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub camera_to_world: Similarity,
}

impl Camera {
    /// Camera whose frame coincides with the world frame.
    pub fn at_origin(intrinsics: CameraIntrinsics) -> Self {
        Self {
            intrinsics,
            camera_to_world: Similarity::identity(),
        }
    }

    /// Camera at `eye` looking toward `target`; `up` only disambiguates roll.
    pub fn look_at(intrinsics: CameraIntrinsics, eye: Vec3, target: Vec3, up: Vec3) -> Self {
        let forward = (target - eye).normalize();
        let mut right = forward.cross(&up);
        if right.norm() < 1e-9 {
            // looking along `up`: pick any perpendicular
            let alt = if forward.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
            right = forward.cross(&alt);
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Mat3::from_columns(&[right, down, forward]);
        Self {
            intrinsics,
            camera_to_world: Similarity::rigid(rotation, eye),
        }
    }

    pub fn world_to_camera(&self) -> Similarity {
        self.camera_to_world.inverse()
    }

    pub fn eye(&self) -> Vec3 {
        self.camera_to_world.translation
    }
}

/// Indexed triangle mesh with optional per-vertex colors in `[0,1]³`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub colors: Option<Vec<Vec3>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Self {
        Self {
            vertices,
            triangles,
            colors: None,
        }
    }

    pub fn with_colors(mut self, colors: Vec<Vec3>) -> Self {
        self.colors = Some(colors);
        self
    }

    pub fn with_uniform_color(mut self, color: Vec3) -> Self {
        self.colors = Some(vec![color; self.vertices.len()]);
        self
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Signed volume; positive for closed, outward-oriented meshes.
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle(t);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(self.vertices.iter())
    }

    pub fn centroid(&self) -> Vec3 {
        let n = self.vertices.len().max(1) as f64;
        self.vertices.iter().sum::<Vec3>() / n
    }

    /// Checks index ranges and vertex count, then drops zero-area triangles.
    pub fn validated(mut self) -> Result<Self, SceneError> {
        if self.vertices.len() < 3 {
            return Err(SceneError::InvalidMesh(format!(
                "mesh has {} vertices, need at least 3",
                self.vertices.len()
            )));
        }
        let n = self.vertices.len() as u32;
        if let Some(t) = self.triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(SceneError::InvalidMesh(format!(
                "triangle {:?} references a vertex outside 0..{}",
                t, n
            )));
        }
        if let Some(c) = &self.colors {
            if c.len() != self.vertices.len() {
                return Err(SceneError::InvalidMesh("color count differs from vertex count".into()));
            }
        }
        let before = self.triangles.len();
        let verts = &self.vertices;
        self.triangles.retain(|&[a, b, c]| {
            let (a, b, c) = (verts[a as usize], verts[b as usize], verts[c as usize]);
            (b - a).cross(&(c - a)).norm_squared() > 0.0
        });
        if self.triangles.len() != before {
            log::warn!("dropped {} degenerate triangles", before - self.triangles.len());
        }
        if self.triangles.is_empty() {
            return Err(SceneError::InvalidMesh("mesh has no non-degenerate triangles".into()));
        }
        Ok(self)
    }

    pub fn transformed(&self, t: &Similarity) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| t.apply(v)).collect(),
            triangles: self.triangles.clone(),
            colors: self.colors.clone(),
        }
    }

    /// Area-weighted vertex normals (unit length where defined).
    pub fn vertex_normals(&self) -> Vec<Vec3> {
        let mut normals = vec![Vec3::zeros(); self.vertices.len()];
        for t in 0..self.triangles.len() {
            let [a, b, c] = self.triangle(t);
            let n = (b - a).cross(&(c - a));
            for &i in &self.triangles[t] {
                normals[i as usize] += n;
            }
        }
        for n in &mut normals {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        normals
    }

    /// Appends another mesh, offsetting its indices.
    pub fn append(&mut self, other: &TriangleMesh) {
        let off = self.vertices.len() as u32;
        let self_colored = self.colors.is_some() || self.vertices.is_empty();
        match (&mut self.colors, &other.colors) {
            (Some(c), Some(oc)) => c.extend_from_slice(oc),
            (Some(c), None) => c.extend(std::iter::repeat_n(Vec3::repeat(1.0), other.vertices.len())),
            (None, Some(oc)) if self_colored => self.colors = Some(oc.clone()),
            (None, Some(oc)) => {
                let mut c = vec![Vec3::repeat(1.0); self.vertices.len()];
                c.extend_from_slice(oc);
                self.colors = Some(c);
            }
            (None, None) => {}
        }
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + off, t[1] + off, t[2] + off]));
    }
}

/// Per-pixel z-depth (camera frame, scene units). Invalid pixels hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl DepthImage {
    pub fn new_invalid(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![f64::NAN; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> f64) -> Self {
        let mut values = Vec::with_capacity((width * height) as usize);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        (y * self.width + x) as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> Option<f64> {
        let v = self.values[self.index(x, y)];
        (v.is_finite() && v > 0.0).then_some(v)
    }

    #[inline]
    pub fn is_valid_index(&self, i: usize) -> bool {
        let v = self.values[i];
        v.is_finite() && v > 0.0
    }

    pub fn valid_count(&self) -> usize {
        (0..self.values.len()).filter(|&i| self.is_valid_index(i)).count()
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers at +0.5);
    /// falls back to the nearest pixel when a neighbor is invalid.
    pub fn sample(&self, u: f64, v: f64) -> Option<f64> {
        let fx = u - 0.5;
        let fy = v - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let tx = fx - x0;
        let ty = fy - y0;
        let (w, h) = (self.width as i64, self.height as i64);
        let at = |x: i64, y: i64| -> Option<f64> {
            if x < 0 || y < 0 || x >= w || y >= h {
                None
            } else {
                self.get(x as u32, y as u32)
            }
        };
        let (x0, y0) = (x0 as i64, y0 as i64);
        if let (Some(a), Some(b), Some(c), Some(d)) =
            (at(x0, y0), at(x0 + 1, y0), at(x0, y0 + 1), at(x0 + 1, y0 + 1))
        {
            return Some((a * (1.0 - tx) + b * tx) * (1.0 - ty) + (c * (1.0 - tx) + d * tx) * ty);
        }
        at(u.floor() as i64, v.floor() as i64)
    }
}

/// Binary image mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskImage {
    pub width: u32,
    pub height: u32,
    pub values: Vec<bool>,
}

impl MaskImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![false; (width * height) as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.values[(y * width + x) as usize] = f(x, y);
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.values[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.values[(y * self.width + x) as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn same_size(&self, w: u32, h: u32) -> bool {
        self.width == w && self.height == h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElasticityCategory {
    Soft,
    Medium,
    Hard,
}

impl std::str::FromStr for ElasticityCategory {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "soft" => Ok(Self::Soft),
            "medium" => Ok(Self::Medium),
            "hard" => Ok(Self::Hard),
            other => Err(SceneError::UnknownCategory(other.to_string())),
        }
    }
}

/// Young's modulus for a coarse stiffness class, in simulator units (Pa).
pub fn elasticity_from_category(category: ElasticityCategory) -> f64 {
    match category {
        ElasticityCategory::Soft => 5.0e4,
        ElasticityCategory::Medium => 5.0e5,
        ElasticityCategory::Hard => 5.0e6,
    }
}

/// String front end of [`elasticity_from_category`]; rejects anything
/// outside soft/medium/hard.
pub fn elasticity_from_name(name: &str) -> Result<f64, SceneError> {
    name.parse().map(elasticity_from_category)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstitutiveModel {
    #[default]
    Elastic,
    Sand,
}

pub const DEFAULT_POISSON_RATIO: f64 = 0.2;
pub const DEFAULT_FRICTION_ANGLE_DEG: f64 = 35.0;

fn default_poisson() -> f64 {
    DEFAULT_POISSON_RATIO
}

fn default_true() -> bool {
    true
}

fn default_friction_angle() -> f64 {
    DEFAULT_FRICTION_ANGLE_DEG
}

/// Physical material of one object. Exactly one of `elasticity` and
/// `youngs_modulus` is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub density: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elasticity: Option<ElasticityCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub youngs_modulus: Option<f64>,
    #[serde(default = "default_poisson")]
    pub poisson_ratio: f64,
    #[serde(default)]
    pub model: ConstitutiveModel,
    #[serde(default = "default_true")]
    pub requires_internal_fill: bool,
    /// Drucker-Prager friction angle for the sand model, degrees.
    #[serde(default = "default_friction_angle")]
    pub friction_angle_deg: f64,
}

impl MaterialSpec {
    pub fn from_category(density: f64, category: ElasticityCategory) -> Self {
        Self {
            density,
            elasticity: Some(category),
            youngs_modulus: None,
            poisson_ratio: DEFAULT_POISSON_RATIO,
            model: ConstitutiveModel::Elastic,
            requires_internal_fill: true,
            friction_angle_deg: DEFAULT_FRICTION_ANGLE_DEG,
        }
    }

    pub fn from_modulus(density: f64, youngs_modulus: f64, poisson_ratio: f64) -> Self {
        Self {
            density,
            elasticity: None,
            youngs_modulus: Some(youngs_modulus),
            poisson_ratio,
            model: ConstitutiveModel::Elastic,
            requires_internal_fill: true,
            friction_angle_deg: DEFAULT_FRICTION_ANGLE_DEG,
        }
    }

    /// Resolved Young's modulus (explicit value wins over the category).
    pub fn youngs_modulus(&self) -> f64 {
        match (self.youngs_modulus, self.elasticity) {
            (Some(e), _) => e,
            (None, Some(c)) => elasticity_from_category(c),
            (None, None) => f64::NAN,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.density > 0.0 && self.density.is_finite()) {
            v.push(format!("density must be > 0 (got {})", self.density));
        }
        match (self.elasticity, self.youngs_modulus) {
            (None, None) => v.push("material needs `elasticity` or `youngs_modulus`".into()),
            (Some(_), Some(_)) => {
                v.push("material gives both `elasticity` and `youngs_modulus`".into())
            }
            _ => {}
        }
        let e = self.youngs_modulus();
        if !e.is_nan() && !(e > 0.0 && e.is_finite()) {
            v.push(format!("youngs_modulus must be > 0 (got {e})"));
        }
        if self.poisson_ratio >= 0.5 {
            v.push(format!("poisson_ratio must be < 0.5 (got {})", self.poisson_ratio));
        } else if !(self.poisson_ratio >= 0.0) {
            v.push(format!("poisson_ratio must be >= 0 (got {})", self.poisson_ratio));
        }
        if self.model == ConstitutiveModel::Sand
            && !(self.friction_angle_deg > 0.0 && self.friction_angle_deg < 90.0)
        {
            v.push(format!(
                "friction_angle_deg must be in (0, 90) (got {})",
                self.friction_angle_deg
            ));
        }
        v
    }
}

/// Regular grid of ground heights `y(x, z)` over `[0, extent]²`, samples at
/// `i * extent / (res - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heightfield {
    pub resolution: usize,
    pub extent: f64,
    pub heights: Vec<f64>,
}

impl Heightfield {
    pub fn flat(resolution: usize, extent: f64, height: f64) -> Self {
        Self {
            resolution,
            extent,
            heights: vec![height; resolution * resolution],
        }
    }

    pub fn from_fn(resolution: usize, extent: f64, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut hf = Self::flat(resolution, extent, 0.0);
        for j in 0..resolution {
            for i in 0..resolution {
                let (x, z) = (hf.coord(i), hf.coord(j));
                hf.heights[j * resolution + i] = f(x, z);
            }
        }
        hf
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.extent / (self.resolution - 1) as f64
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.spacing()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.heights[j * self.resolution + i]
    }

    /// Bilinear height; coordinates are clamped to the covered square.
    pub fn height_at(&self, x: f64, z: f64) -> f64 {
        let h = self.spacing();
        let max = (self.resolution - 1) as f64;
        let gx = (x / h).clamp(0.0, max);
        let gz = (z / h).clamp(0.0, max);
        let i0 = (gx.floor() as usize).min(self.resolution - 2);
        let j0 = (gz.floor() as usize).min(self.resolution - 2);
        let tx = gx - i0 as f64;
        let tz = gz - j0 as f64;
        let a = self.at(i0, j0);
        let b = self.at(i0 + 1, j0);
        let c = self.at(i0, j0 + 1);
        let d = self.at(i0 + 1, j0 + 1);
        (a * (1.0 - tx) + b * tx) * (1.0 - tz) + (c * (1.0 - tx) + d * tx) * tz
    }

    /// Upward unit normal from central differences of the bilinear surface.
    pub fn normal_at(&self, x: f64, z: f64) -> Vec3 {
        let h = self.spacing();
        let dhdx = (self.height_at(x + h, z) - self.height_at(x - h, z)) / (2.0 * h);
        let dhdz = (self.height_at(x, z + h) - self.height_at(x, z - h)) / (2.0 * h);
        Vec3::new(-dhdx, 1.0, -dhdz).normalize()
    }

    /// Regular-grid triangulation (two triangles per cell).
    pub fn to_mesh(&self) -> TriangleMesh {
        let n = self.resolution;
        let mut vertices = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                vertices.push(Vec3::new(self.coord(i), self.at(i, j), self.coord(j)));
            }
        }
        let mut triangles = Vec::with_capacity(2 * (n - 1) * (n - 1));
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let a = (j * n + i) as u32;
                let b = a + 1;
                let c = a + n as u32;
                let d = c + 1;
                triangles.push([a, c, b]);
                triangles.push([b, c, d]);
            }
        }
        TriangleMesh::new(vertices, triangles)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColliderMode {
    /// Velocity below the surface loses its normal part; tangential motion
    /// is slowed by Coulomb friction. Nodes cannot lift off.
    Slip,
    /// Velocity below the surface is zeroed.
    Sticky,
    /// Only motion into the surface is blocked; separation is free.
    #[default]
    Separate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColliderShape {
    Plane { height: f64 },
    Heightfield(Heightfield),
}

/// Ground surface the simulated objects rest on.
#[derive(Debug, Clone, PartialEq)]
pub struct ColliderSurface {
    pub shape: ColliderShape,
    pub friction: f64,
    pub mode: ColliderMode,
}

impl ColliderSurface {
    pub fn plane(height: f64, friction: f64, mode: ColliderMode) -> Self {
        Self {
            shape: ColliderShape::Plane { height },
            friction,
            mode,
        }
    }

    #[inline]
    pub fn height_at(&self, x: f64, z: f64) -> f64 {
        match &self.shape {
            ColliderShape::Plane { height } => *height,
            ColliderShape::Heightfield(hf) => hf.height_at(x, z),
        }
    }

    #[inline]
    pub fn normal_at(&self, x: f64, z: f64) -> Vec3 {
        match &self.shape {
            ColliderShape::Plane { .. } => Vec3::y(),
            ColliderShape::Heightfield(hf) => hf.normal_at(x, z),
        }
    }

    pub fn violations(&self, domain_size: f64) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.friction >= 0.0) {
            v.push(format!("collider friction must be >= 0 (got {})", self.friction));
        }
        if let ColliderShape::Heightfield(hf) = &self.shape {
            if hf.resolution < 2 {
                v.push("heightfield needs at least 2 samples per axis".into());
            }
            if hf.extent < domain_size {
                v.push(format!(
                    "heightfield covers {} but the simulation domain is {}",
                    hf.extent, domain_size
                ));
            }
        }
        v
    }
}

/// Ratio of simulator size to real size, and real gravity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleModel {
    pub k: f64,
    pub g0: f64,
}

pub const STANDARD_GRAVITY: f64 = 9.8;

impl Default for ScaleModel {
    fn default() -> Self {
        Self {
            k: 1.0,
            g0: STANDARD_GRAVITY,
        }
    }
}

impl ScaleModel {
    pub fn new(k: f64, g0: f64) -> Self {
        Self { k, g0 }
    }

    /// `k = s' / s0`: simulated size over real size.
    pub fn from_sizes(sim_size: f64, real_size: f64, g0: f64) -> Self {
        Self {
            k: sim_size / real_size,
            g0,
        }
    }

    pub fn scaled_gravity(&self) -> f64 {
        self.k * self.g0
    }

    pub fn scaled_youngs_modulus(&self, e: f64) -> f64 {
        e / self.k
    }

    pub fn scaled_velocity(&self, v: &Vec3) -> Vec3 {
        self.k * v
    }
}

fn default_domain() -> f64 {
    2.0
}
fn default_resolution() -> usize {
    256
}
fn default_dt() -> f64 {
    2e-4
}
fn default_substeps() -> usize {
    200
}
fn default_frames() -> usize {
    50
}
fn default_gravity_dir() -> [f64; 3] {
    [0.0, -1.0, 0.0]
}
fn default_surface_density() -> f64 {
    8.0
}

/// Simulator configuration. Lengths are simulator units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    #[serde(default = "default_domain")]
    pub domain_size: f64,
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_substeps")]
    pub substeps_per_frame: usize,
    #[serde(default = "default_frames")]
    pub frame_count: usize,
    /// Direction of gravity; magnitude comes from the scale model.
    #[serde(default = "default_gravity_dir")]
    pub gravity_direction: [f64; 3],
    /// Clamp singular values of F to [0.1, 10] instead of aborting on inversion.
    #[serde(default)]
    pub clamp_singular_values: bool,
    /// Surface samples per grid-cell footprint (Δx²) before downsampling.
    #[serde(default = "default_surface_density")]
    pub surface_density: f64,
}

/// Width of the boundary band, in grid cells.
pub const BOUNDARY_CELLS: usize = 3;

impl Default for SimParams {
    fn default() -> Self {
        Self {
            domain_size: default_domain(),
            grid_resolution: default_resolution(),
            dt: default_dt(),
            substeps_per_frame: default_substeps(),
            frame_count: default_frames(),
            gravity_direction: default_gravity_dir(),
            clamp_singular_values: false,
            surface_density: default_surface_density(),
        }
    }
}

impl SimParams {
    #[inline]
    pub fn dx(&self) -> f64 {
        self.domain_size / self.grid_resolution as f64
    }

    pub fn frame_dt(&self) -> f64 {
        self.dt * self.substeps_per_frame as f64
    }

    /// Particles must stay inside `[margin, domain_size - margin]³`.
    pub fn margin(&self) -> f64 {
        BOUNDARY_CELLS as f64 * self.dx()
    }

    pub fn in_margin(&self, p: &Vec3) -> bool {
        let lo = self.margin();
        let hi = self.domain_size - lo;
        (0..3).all(|i| p[i] >= lo && p[i] <= hi)
    }

    pub fn gravity_unit(&self) -> Vec3 {
        let g = crate::math::vec3(self.gravity_direction);
        let n = g.norm();
        if n > 0.0 {
            g / n
        } else {
            g
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.dt > 0.0) {
            v.push(format!("dt must be > 0 (got {})", self.dt));
        }
        if self.grid_resolution < 8 {
            v.push(format!("grid_resolution must be >= 8 (got {})", self.grid_resolution));
        }
        if !(self.domain_size > 0.0) {
            v.push(format!("domain_size must be > 0 (got {})", self.domain_size));
        }
        if self.substeps_per_frame == 0 {
            v.push("substeps_per_frame must be >= 1".into());
        }
        if self.frame_count == 0 {
            v.push("frame_count must be >= 1".into());
        }
        if !(self.surface_density > 0.0) {
            v.push("surface_density must be > 0".into());
        }
        v
    }

    /// CFL guard: `max_speed * dt < Δx`.
    pub fn cfl_violation(&self, max_speed: f64) -> Option<String> {
        let dx = self.dx();
        (max_speed * self.dt >= dx).then(|| {
            format!(
                "CFL violated: speed bound {:.4} * dt {:.3e} = {:.4e} >= grid spacing {:.4e}",
                max_speed,
                self.dt,
                max_speed * self.dt,
                dx
            )
        })
    }
}
