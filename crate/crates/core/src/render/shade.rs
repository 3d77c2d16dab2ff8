use image::RgbImage;

use crate::math::Vec3;
use crate::raster::{Projection, Raster};
use crate::scene::{Camera, TriangleMesh};

use super::{LightSpec, ObjectLayer, ShadowMap};

/// Color used for meshes without vertex colors.
pub const DEFAULT_BASE_COLOR: f64 = 0.7;

/// Z-buffered Lambert shading of world-space meshes,
/// `base · intensity · (ambient + (1 − ambient) · max(0, n·l) · visible)`,
/// with visibility from a shadow map of the same meshes.
pub fn shade_objects(objects: &[&TriangleMesh], light: &LightSpec, cam: &Camera, shadow_resolution: u32) -> ObjectLayer {
    let map = ShadowMap::build(light, objects, shadow_resolution);
    shade_with_map(objects, light, cam, map.as_ref())
}

/// [`shade_objects`] with a prebuilt shadow map of the same meshes.
pub fn shade_with_map(objects: &[&TriangleMesh], light: &LightSpec, cam: &Camera, map: Option<&ShadowMap>) -> ObjectLayer {
    let k = &cam.intrinsics;
    let mut layer = ObjectLayer::empty(k.width, k.height);
    let w2c = cam.world_to_camera();
    let proj = Projection::perspective(k);
    let mut r = Raster::new(k.width, k.height);
    for (i, m) in objects.iter().enumerate() {
        let view: Vec<Vec3> = m.vertices.iter().map(|v| w2c.apply(v)).collect();
        r.draw_mesh(&proj, &view, &m.triangles, i as u32);
    }
    let normals: Vec<Vec<Vec3>> = objects.iter().map(|m| m.vertex_normals()).collect();
    let amb = light.ambient;
    let shaded = crate::par::par_map(r.depth.len(), |i| {
        if !r.covered(i) {
            return None;
        }
        let m = objects[r.mesh[i] as usize];
        let t = m.triangles[r.triangle[i] as usize].map(|v| v as usize);
        let b = r.bary[i];
        let lerp = |a: &[Vec3]| a[t[0]] * b[0] + a[t[1]] * b[1] + a[t[2]] * b[2];
        let p = lerp(&m.vertices);
        let nn = lerp(&normals[r.mesh[i] as usize]);
        let n = if nn.norm() > 0.0 {
            nn.normalize()
        } else {
            let [a, bb, c] = m.triangle(r.triangle[i] as usize);
            (bb - a).cross(&(c - a)).normalize()
        };
        let base = m
            .colors
            .as_ref()
            .map_or(Vec3::repeat(DEFAULT_BASE_COLOR), |c| lerp(c));
        let ndl = n.dot(&light.to_light(&p)).max(0.0);
        let vis = match map {
            Some(map) if ndl > 0.0 => {
                // offset along the normal so lit faces do not shadow themselves
                map.visibility(&(p + n * 2.0 * map.footprint_at(&p)))
            }
            _ => 1.0,
        };
        let c = base * light.intensity * (amb + (1.0 - amb) * ndl * vis);
        Some((c.map(|x| x.clamp(0.0, 1.0)), r.depth[i]))
    });
    for (i, s) in shaded.into_iter().enumerate() {
        if let Some((c, z)) = s {
            layer.color[i] = c;
            layer.alpha[i] = 1.0;
            layer.depth[i] = z;
        }
    }
    layer
}

/// Per-vertex colors sampled from `image` where the vertex is visible to
/// `cam`; hidden vertices take the average of their colored neighbours,
/// spreading outward ring by ring.
pub fn bake_vertex_colors(mesh: &TriangleMesh, cam: &Camera, image: &RgbImage) -> Vec<Vec3> {
    let k = &cam.intrinsics;
    let w2c = cam.world_to_camera();
    let view: Vec<Vec3> = mesh.vertices.iter().map(|v| w2c.apply(v)).collect();
    let mut r = Raster::new(k.width, k.height);
    r.draw_mesh(&Projection::perspective(k), &view, &mesh.triangles, 0);
    let (iw, ih) = image.dimensions();
    let n = mesh.vertices.len();
    let mut color: Vec<Option<Vec3>> = vec![None; n];
    for (v, p) in view.iter().enumerate() {
        if p.z <= 0.0 {
            continue;
        }
        let (u, w) = k.project(p);
        if !k.contains_pixel(u, w) || u >= iw as f64 || w >= ih as f64 {
            continue;
        }
        let (x, y) = (u as u32, w as u32);
        let d = r.depth[r.index(x, y)];
        // within a few texels of the nearest surface counts as visible
        let tol = 4.0 * p.z / k.fx + 1e-9;
        if p.z <= d + tol {
            let px = image.get_pixel(x, y).0;
            color[v] = Some(Vec3::new(px[0] as f64, px[1] as f64, px[2] as f64) / 255.0);
        }
    }
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for t in &mesh.triangles {
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
    }
    loop {
        let next: Vec<Option<Vec3>> = (0..n)
            .map(|v| {
                if color[v].is_some() {
                    return color[v];
                }
                let known: Vec<Vec3> = adj[v].iter().filter_map(|&u| color[u as usize]).collect();
                (!known.is_empty()).then(|| known.iter().sum::<Vec3>() / known.len() as f64)
            })
            .collect();
        let progressed = next.iter().zip(&color).any(|(a, b)| a.is_some() != b.is_some());
        color = next;
        if !progressed {
            break;
        }
    }
    let seen: Vec<Vec3> = color.iter().flatten().copied().collect();
    let fallback = if seen.is_empty() {
        Vec3::repeat(DEFAULT_BASE_COLOR)
    } else {
        seen.iter().sum::<Vec3>() / seen.len() as f64
    };
    color.into_iter().map(|c| c.unwrap_or(fallback)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::CameraIntrinsics;

    fn quad(z: f64, normal_toward_camera: bool) -> TriangleMesh {
        let v = vec![
            Vec3::new(-1.0, -1.0, z),
            Vec3::new(1.0, -1.0, z),
            Vec3::new(1.0, 1.0, z),
            Vec3::new(-1.0, 1.0, z),
        ];
        let t = if normal_toward_camera {
            vec![[0, 2, 1], [0, 3, 2]]
        } else {
            vec![[0, 1, 2], [0, 2, 3]]
        };
        TriangleMesh::new(v, t).with_uniform_color(Vec3::new(0.8, 0.4, 0.2))
    }

    #[test]
    fn lambert_limits() {
        let cam = Camera::at_origin(CameraIntrinsics::new(20.0, 20.0, 8.0, 8.0, 16, 16));
        let q = quad(4.0, true);
        assert!(q.vertex_normals()[0].z < 0.0);
        let head_on = LightSpec::directional(Vec3::new(0.0, 0.0, 1.0), 1.0, 0.0);
        let l = shade_objects(&[&q], &head_on, &cam, 64);
        let i = 8 * 16 + 8;
        assert_eq!(l.alpha[i], 1.0);
        assert!((l.color[i] - Vec3::new(0.8, 0.4, 0.2)).norm() < 1e-12);
        let grazing = LightSpec::directional(Vec3::new(1.0, 0.0, 0.0), 1.0, 0.2);
        let l = shade_objects(&[&q], &grazing, &cam, 64);
        assert!((l.color[i] - Vec3::new(0.8, 0.4, 0.2) * 0.2).norm() < 1e-12);
    }
}
