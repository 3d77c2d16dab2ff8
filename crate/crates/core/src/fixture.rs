//! Synthetic demo scene: three objects above a gently curved ground, with
//! every asset a real reconstruction would provide (plate, source photo,
//! depth, masks, correspondences) rendered from known geometry.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::math::{rotation_from_axis_angle, PoseRecord, Similarity, Vec3};
use crate::raster::{Projection, Raster};
use crate::registration::{format_correspondences, CorrespondenceSet};
use crate::render::{
    apply_tone_curve, composite_frame, depth_of_heightfield, render_layers, LightSpec, ToneCurve,
};
use crate::scene::io::{write_depth, write_mask, write_obj, write_rgb};
use crate::scene::{
    serialize_scene_config, CameraConfig, ColliderConfig, ColliderKind, ColliderMode, DepthImage, ElasticityCategory,
    Heightfield, MaskImage, MaterialSpec, ObjectConfig, RenderParams, ScaleConfig, SceneConfig, SceneError,
    SimParams, TrackParams, TriangleMesh,
};

/// Closed UV sphere of radius 1 with `rings` latitude bands.
pub fn uv_sphere(rings: usize, segments: usize) -> TriangleMesh {
    let mut v = vec![Vec3::new(0.0, 1.0, 0.0)];
    for i in 1..rings {
        let th = PI * i as f64 / rings as f64;
        for j in 0..segments {
            let ph = 2.0 * PI * j as f64 / segments as f64;
            v.push(Vec3::new(th.sin() * ph.cos(), th.cos(), th.sin() * ph.sin()));
        }
    }
    v.push(Vec3::new(0.0, -1.0, 0.0));
    let south = (v.len() - 1) as u32;
    let ring = |i: usize, j: usize| (1 + (i - 1) * segments + j % segments) as u32;
    let mut t = Vec::new();
    for j in 0..segments {
        t.push([0, ring(1, j + 1), ring(1, j)]);
        t.push([south, ring(rings - 1, j), ring(rings - 1, j + 1)]);
    }
    for i in 1..rings - 1 {
        for j in 0..segments {
            let (a, b, c, d) = (ring(i, j), ring(i, j + 1), ring(i + 1, j), ring(i + 1, j + 1));
            t.push([a, b, d]);
            t.push([a, d, c]);
        }
    }
    TriangleMesh::new(v, t)
}

/// Closed box `[-h, h]` per axis, subdivided `n` times per edge so it can
/// bend when deformed.
pub fn box_mesh(half: Vec3, n: usize) -> TriangleMesh {
    let n = n.max(1);
    let mut v = Vec::new();
    let mut t = Vec::new();
    // each face: fixed axis, sign, and the two in-plane axes ordered so
    // that (u × w) points outward
    let faces = [(0, 1.0, 1, 2), (0, -1.0, 2, 1), (1, 1.0, 2, 0), (1, -1.0, 0, 2), (2, 1.0, 0, 1), (2, -1.0, 1, 0)];
    for (axis, sign, u, w) in faces {
        let base = v.len() as u32;
        for i in 0..=n {
            for j in 0..=n {
                let mut p = Vec3::zeros();
                p[axis] = sign * half[axis];
                p[u] = half[u] * (2.0 * i as f64 / n as f64 - 1.0);
                p[w] = half[w] * (2.0 * j as f64 / n as f64 - 1.0);
                v.push(p);
            }
        }
        let id = |i: usize, j: usize| base + (i * (n + 1) + j) as u32;
        for i in 0..n {
            for j in 0..n {
                t.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                t.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
    }
    weld(TriangleMesh::new(v, t))
}

/// Merges coincident vertices.
fn weld(mesh: TriangleMesh) -> TriangleMesh {
    let key = |p: &Vec3| [p.x, p.y, p.z].map(|c| (c * 1e9).round() as i64);
    let mut index = std::collections::HashMap::new();
    let mut verts = Vec::new();
    let remap: Vec<u32> = mesh
        .vertices
        .iter()
        .map(|p| {
            *index.entry(key(p)).or_insert_with(|| {
                verts.push(*p);
                (verts.len() - 1) as u32
            })
        })
        .collect();
    let tris = mesh.triangles.iter().map(|t| t.map(|i| remap[i as usize])).collect();
    TriangleMesh::new(verts, tris)
}

/// Ground height of the demo scene.
pub fn ground_height(x: f64, z: f64) -> f64 {
    0.25 + 0.03 * (PI * x).sin() * (PI * 0.5 * z).cos()
}

struct DemoObject {
    id: &'static str,
    mesh: TriangleMesh,
    /// Object to world.
    world: Similarity,
    material: MaterialSpec,
    velocity: [f64; 3],
    color: Option<[f64; 3]>,
    register: bool,
}

/// `sim / real` size ratio of the demo objects.
pub const DEMO_K: f64 = 1.25;

fn demo_objects() -> Vec<DemoObject> {
    let mut soft = MaterialSpec::from_category(1000.0, ElasticityCategory::Soft);
    soft.poisson_ratio = 0.3;
    let hard = MaterialSpec::from_category(2500.0, ElasticityCategory::Hard);
    vec![
        DemoObject {
            id: "ball",
            mesh: uv_sphere(12, 20),
            world: Similarity::new(rotation_from_axis_angle(&Vec3::zeros()), Vec3::new(0.72, 0.62, 1.05), 0.085),
            material: soft,
            velocity: [0.4, 0.0, 0.0],
            color: Some([0.85, 0.25, 0.2]),
            register: false,
        },
        DemoObject {
            id: "crate",
            mesh: box_mesh(Vec3::new(0.5, 0.5, 0.5), 3),
            world: Similarity::new(
                rotation_from_axis_angle(&Vec3::new(0.15, 0.5, 0.1)),
                Vec3::new(1.22, 0.7, 1.15),
                0.15,
            ),
            material: hard,
            velocity: [-0.3, 0.5, 0.0],
            color: None,
            register: true,
        },
        DemoObject {
            id: "cushion",
            mesh: box_mesh(Vec3::new(0.5, 0.25, 0.5), 4),
            world: Similarity::new(
                rotation_from_axis_angle(&Vec3::new(0.0, -0.3, 0.2)),
                Vec3::new(1.0, 0.9, 0.8),
                0.17,
            ),
            material: soft,
            velocity: [0.0, 0.0, 0.35],
            color: Some([0.25, 0.45, 0.85]),
            register: false,
        },
    ]
}

fn demo_camera() -> CameraConfig {
    CameraConfig {
        fx: 200.0,
        fy: 200.0,
        cx: 80.0,
        cy: 60.0,
        width: 160,
        height: 120,
        position: [1.0, 1.7, 0.05],
        look_at: [1.0, 0.25, 1.05],
        up: [0.0, 1.0, 0.0],
    }
}

/// Depth and instance ids of meshes seen by the camera.
fn raster_view(cam: &crate::scene::Camera, meshes: &[&TriangleMesh]) -> Raster {
    let k = &cam.intrinsics;
    let w2c = cam.world_to_camera();
    let mut r = Raster::new(k.width, k.height);
    for (i, m) in meshes.iter().enumerate() {
        let view: Vec<Vec3> = m.vertices.iter().map(|v| w2c.apply(v)).collect();
        r.draw_mesh(&Projection::perspective(k), &view, &m.triangles, i as u32);
    }
    r
}

fn checker(p: &Vec3) -> Vec3 {
    let c = ((p.x * 8.0).floor() + (p.z * 8.0).floor()) as i64;
    if c.rem_euclid(2) == 0 {
        Vec3::new(0.78, 0.74, 0.66)
    } else {
        Vec3::new(0.62, 0.6, 0.55)
    }
}

fn to_rgb(c: &Vec3) -> Rgb<u8> {
    Rgb([c.x, c.y, c.z].map(|v| (v.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8))
}

/// Writes the demo scene (assets plus `scene.toml`) into `dir` and returns
/// the scene file path. Output is fully deterministic.
pub fn write_demo_scene(dir: &Path, frames: usize) -> Result<PathBuf, SceneError> {
    let io_err = |p: &Path, e: std::io::Error| SceneError::Io {
        path: p.to_path_buf(),
        message: e.to_string(),
    };
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let cam_cfg = demo_camera();
    let cam = cam_cfg.camera();
    let light = LightSpec::directional(Vec3::new(0.35, -1.0, 0.45), 1.0, 0.35);
    let hf = Heightfield::from_fn(64, 2.0, ground_height);
    let ground = hf.to_mesh();
    let objects = demo_objects();
    let world: Vec<TriangleMesh> = objects.iter().map(|o| o.mesh.transformed(&o.world)).collect();

    // background: lit checker ground, depth of the ground alone
    let bg_depth = depth_of_heightfield(&hf, &cam);
    write_depth(&dir.join("background_depth.dpth"), &bg_depth)?;
    let k = &cam.intrinsics;
    let to_light = light.to_light(&Vec3::zeros());
    let ground_color = |x: u32, y: u32| -> Vec3 {
        match bg_depth.get(x, y) {
            Some(z) => {
                let p = cam.camera_to_world.apply(&k.unproject(x as f64 + 0.5, y as f64 + 0.5, z));
                let n = hf.normal_at(p.x, p.z);
                checker(&p) * (light.ambient + (1.0 - light.ambient) * n.dot(&to_light).max(0.0))
            }
            None => Vec3::new(0.55, 0.7, 0.9),
        }
    };
    let plate = RgbImage::from_fn(k.width, k.height, |x, y| to_rgb(&ground_color(x, y)));
    write_rgb(&dir.join("plate.png"), &plate)?;

    // the "photograph": objects shaded with a mild tone curve over the plate
    let refs: Vec<&TriangleMesh> = world.iter().collect();
    let colored: Vec<TriangleMesh> = objects
        .iter()
        .zip(&world)
        .map(|(o, m)| {
            let c = o.color.unwrap_or([0.8, 0.65, 0.35]);
            m.clone().with_uniform_color(Vec3::new(c[0], c[1], c[2]))
        })
        .collect();
    let colored_refs: Vec<&TriangleMesh> = colored.iter().collect();
    let (mut layer, shadow) = render_layers(&ground, &colored_refs, &light, &cam, 1024);
    apply_tone_curve(&ToneCurve::new(0.12, -0.08), &mut layer.color);
    let photo = composite_frame(&plate, &layer, &shadow).map_err(|e| SceneError::Invalid(e.to_string()))?;
    write_rgb(&dir.join("source.png"), &photo)?;

    // observed depth and instance masks
    let mut all = vec![&ground];
    all.extend(refs.iter().copied());
    let r = raster_view(&cam, &all);
    let depth = DepthImage {
        width: k.width,
        height: k.height,
        values: r.depth.iter().map(|&d| if d.is_finite() { d } else { f64::NAN }).collect(),
    };
    write_depth(&dir.join("depth.dpth"), &depth)?;

    let w2c = cam.world_to_camera();
    let mut cfg_objects = Vec::new();
    for (i, (o, m)) in objects.iter().zip(&world).enumerate() {
        let mesh_path = format!("{}.obj", o.id);
        write_obj(&dir.join(&mesh_path), &o.mesh)?;
        let mask = MaskImage {
            width: k.width,
            height: k.height,
            values: r.mesh.iter().map(|&id| id == i as u32 + 1).collect(),
        };
        let mask_path = format!("{}_mask.png", o.id);
        write_mask(&dir.join(&mask_path), &mask)?;
        let cam_pose = w2c.compose(&o.world);
        let sim_size = m.bounds().extent().max();
        let mut oc = ObjectConfig {
            id: o.id.to_string(),
            mesh: mesh_path.into(),
            material: o.material,
            mask: Some(mask_path.into()),
            correspondences: None,
            pose: None,
            initial_velocity: o.velocity,
            color: o.color,
            real_size: Some(sim_size / DEMO_K),
        };
        if o.register {
            let (pixels, pts): (Vec<_>, Vec<_>) = o
                .mesh
                .vertices
                .iter()
                .map(|p| (k.project(&cam_pose.apply(p)), *p))
                .filter(|((u, v), _)| k.contains_pixel(*u, *v))
                .unzip();
            let corr = CorrespondenceSet::new(pixels, pts);
            let corr_path = format!("{}_corr.txt", o.id);
            let p = dir.join(&corr_path);
            fs::write(&p, format_correspondences(&corr)).map_err(|e| io_err(&p, e))?;
            oc.correspondences = Some(corr_path.into());
        } else {
            oc.pose = Some(PoseRecord::from(&cam_pose));
        }
        cfg_objects.push(oc);
    }

    let cfg = SceneConfig {
        camera: cam_cfg,
        depth: Some("depth.dpth".into()),
        background_plate: "plate.png".into(),
        source_image: Some("source.png".into()),
        collider: ColliderConfig {
            kind: ColliderKind::Depth,
            height: None,
            path: Some("background_depth.dpth".into()),
            resolution: 64,
            friction: 0.3,
            mode: ColliderMode::Separate,
        },
        light,
        scale: ScaleConfig::default(),
        sim: SimParams {
            grid_resolution: 128,
            dt: 2e-4,
            substeps_per_frame: 100,
            frame_count: frames,
            ..SimParams::default()
        },
        render: RenderParams {
            shadow_map_resolution: 1024,
            ..RenderParams::default()
        },
        track: TrackParams {
            stride: 10,
            ..TrackParams::default()
        },
        objects: cfg_objects,
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("scene.toml");
    fs::write(&path, serialize_scene_config(&cfg)?).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_are_closed_and_outward() {
        let s = uv_sphere(8, 12);
        assert!((s.signed_volume() - 4.0 / 3.0 * PI).abs() < 0.4);
        assert!(s.signed_volume() > 0.0);
        let b = box_mesh(Vec3::new(0.5, 0.25, 0.5), 3);
        assert!((b.signed_volume() - 0.5).abs() < 1e-12);
        // 8 corners, 2 per edge, 4 per face
        assert_eq!(b.vertices.len(), 8 + 12 * 2 + 6 * 4);
    }
}
