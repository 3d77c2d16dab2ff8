use crate::math::{Aabb, Mat3, Vec3};
use crate::raster::{Projection, Raster, NEAR_PLANE};
use crate::scene::{Camera, TriangleMesh};

use super::{shade_with_map, LightKind, LightSpec, ObjectLayer, ShadowFactorImage};

pub const DEFAULT_SHADOW_MAP_RESOLUTION: u32 = 2048;

/// Widest half-angle tangent a point-light map will cover.
const MAX_TAN: f64 = 4.0;

/// Depth of the occluders as seen from the light. The map is framed around
/// the occluders' bounds, so points that project outside it are lit.
#[derive(Debug, Clone)]
pub struct ShadowMap {
    kind: LightKind,
    /// World to light frame (x right, y down, z along the light).
    rotation: Mat3,
    origin: Vec3,
    proj: Projection,
    resolution: u32,
    depth: Vec<f64>,
}

fn basis(forward: &Vec3) -> Mat3 {
    let alt = if forward.y.abs() < 0.9 { Vec3::y() } else { Vec3::x() };
    let right = forward.cross(&alt).normalize();
    let down = forward.cross(&right);
    Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()])
}

impl ShadowMap {
    /// Renders the depth pass. Returns `None` when there is nothing to cast
    /// a shadow.
    pub fn build(light: &LightSpec, occluders: &[&TriangleMesh], resolution: u32) -> Option<Self> {
        let bounds = Aabb::from_points(
            occluders.iter().filter(|m| !m.triangles.is_empty()).flat_map(|m| m.vertices.iter()),
        );
        if bounds.is_empty() {
            return None;
        }
        let res = resolution.max(1) as f64;
        let center = bounds.center();
        let (rotation, origin, proj) = match light.kind {
            LightKind::Directional => {
                let rot = basis(&light.unit_direction());
                let pts = bounds.corners().map(|c| rot * (c - center));
                let half = pts.iter().fold(0.0f64, |m, p| m.max(p.x.abs()).max(p.y.abs()));
                let f = 0.5 * res / (half * 1.02).max(1e-12);
                (rot, center, Projection::orthographic(f, f, 0.5 * res, 0.5 * res))
            }
            LightKind::Point => {
                let eye = light.position();
                if bounds.contains(&eye) {
                    log::warn!("point light sits inside the occluders' bounds; shadows will be clipped");
                }
                let fwd = center - eye;
                let rot = basis(&if fwd.norm() > 0.0 { fwd.normalize() } else { Vec3::new(0.0, -1.0, 0.0) });
                let mut tan = 0.0f64;
                for c in bounds.corners() {
                    let p = rot * (c - eye);
                    if p.z <= NEAR_PLANE {
                        tan = MAX_TAN;
                        break;
                    }
                    tan = tan.max(p.x.abs() / p.z).max(p.y.abs() / p.z);
                }
                let f = 0.5 * res / (tan.min(MAX_TAN) * 1.02).max(1e-12);
                (rot, eye, Projection::perspective_raw(f, f, 0.5 * res, 0.5 * res))
            }
        };
        let mut raster = Raster::new(resolution, resolution);
        for (id, m) in occluders.iter().enumerate() {
            let verts: Vec<Vec3> = m.vertices.iter().map(|v| rotation * (v - origin)).collect();
            raster.draw_mesh(&proj, &verts, &m.triangles, id as u32);
        }
        Some(Self {
            kind: light.kind,
            rotation,
            origin,
            proj,
            resolution,
            depth: raster.depth,
        })
    }

    /// World size of one texel at light depth `z`.
    pub fn texel_footprint(&self, z: f64) -> f64 {
        match self.kind {
            LightKind::Directional => 1.0 / self.proj.fx,
            LightKind::Point => z.abs() / self.proj.fx,
        }
    }

    /// Texel footprint at world point `p`.
    pub fn footprint_at(&self, p: &Vec3) -> f64 {
        self.texel_footprint((self.rotation * (p - self.origin)).z)
    }

    /// 1 if `p` sees the light, 0 if an occluder is closer to the light
    /// than `p` by more than two texel footprints.
    pub fn visibility(&self, p: &Vec3) -> f64 {
        let q = self.rotation * (p - self.origin);
        if self.kind == LightKind::Point && q.z <= NEAR_PLANE {
            return 1.0;
        }
        let (u, v, z) = self.proj.project(&q);
        let r = self.resolution as f64;
        if !(u >= 0.0 && v >= 0.0 && u < r && v < r) {
            return 1.0;
        }
        let d = self.depth[v as usize * self.resolution as usize + u as usize];
        if d < z - 2.0 * self.texel_footprint(z) {
            0.0
        } else {
            1.0
        }
    }
}

/// Two-pass hard shadows of `objects` on the catcher, seen through `cam`.
/// Pixels where the catcher is not the nearest surface get factor 1.
pub fn render_shadow_factor(
    catcher: &TriangleMesh,
    objects: &[&TriangleMesh],
    light: &LightSpec,
    cam: &Camera,
    shadow_resolution: u32,
) -> ShadowFactorImage {
    let map = ShadowMap::build(light, objects, shadow_resolution);
    shadow_factor_with_map(catcher, objects, light, cam, map.as_ref())
}

/// [`render_shadow_factor`] with a prebuilt shadow map of `objects`.
pub fn shadow_factor_with_map(
    catcher: &TriangleMesh,
    objects: &[&TriangleMesh],
    light: &LightSpec,
    cam: &Camera,
    map: Option<&ShadowMap>,
) -> ShadowFactorImage {
    let k = &cam.intrinsics;
    let mut out = ShadowFactorImage::ones(k.width, k.height);
    let Some(map) = map else {
        return out;
    };
    let w2c = cam.world_to_camera();
    let proj = Projection::perspective(k);
    let mut r = Raster::new(k.width, k.height);
    let view = |m: &TriangleMesh| m.vertices.iter().map(|v| w2c.apply(v)).collect::<Vec<_>>();
    r.draw_mesh(&proj, &view(catcher), &catcher.triangles, 0);
    for (i, m) in objects.iter().enumerate() {
        r.draw_mesh(&proj, &view(m), &m.triangles, i as u32 + 1);
    }
    let amb = light.ambient;
    out.values = crate::par::par_map(r.depth.len(), |i| {
        if r.mesh[i] != 0 {
            return 1.0;
        }
        let t = catcher.triangles[r.triangle[i] as usize];
        let b = r.bary[i];
        let p = catcher.vertices[t[0] as usize] * b[0]
            + catcher.vertices[t[1] as usize] * b[1]
            + catcher.vertices[t[2] as usize] * b[2];
        (amb + (1.0 - amb) * map.visibility(&p)).clamp(0.0, 1.0)
    });
    out
}

/// Object layer and catcher shadows of one frame, sharing one depth pass.
pub fn render_layers(
    catcher: &TriangleMesh,
    objects: &[&TriangleMesh],
    light: &LightSpec,
    cam: &Camera,
    shadow_resolution: u32,
) -> (ObjectLayer, ShadowFactorImage) {
    let map = ShadowMap::build(light, objects, shadow_resolution);
    (
        shade_with_map(objects, light, cam, map.as_ref()),
        shadow_factor_with_map(catcher, objects, light, cam, map.as_ref()),
    )
}
