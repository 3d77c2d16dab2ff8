//! Turning registered meshes into simulation particles: surface sampling,
//! interior filling, floating-cluster removal and voxel downsampling.

mod clusters;
mod downsample;
mod fill;

use std::path::Path;

pub use clusters::*;
pub use downsample::*;
pub use fill::*;

use crate::math::{Mat3, Similarity, Vec3};
use crate::scene::io::{read_ply, write_ply, PlyData, PlyElement, PlyProperty, PlyScalar};
use crate::scene::{MaterialSpec, SceneError, SimParams, TriangleMesh};

#[derive(Debug, thiserror::Error)]
pub enum SamplingError {
    #[error("mesh not watertight enough to fill: axis votes disagree on {disagreeing} of {candidates} voxels")]
    NotWatertight { disagreeing: usize, candidates: usize },
    #[error("no voxel center lies inside the mesh")]
    NothingInside,
    #[error("object `{0}` produced no particles")]
    Empty(String),
    #[error("object `{object}` has a particle at ({x:.4}, {y:.4}, {z:.4}) outside the simulation domain margin")]
    OutsideDomain { object: String, x: f64, y: f64, z: f64 },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// Structure-of-arrays particle state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParticleCloud {
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
    pub mass: Vec<f64>,
    pub volume: Vec<f64>,
    pub f: Vec<Mat3>,
    pub c: Vec<Mat3>,
    /// Index into the material table handed to the simulator.
    pub material: Vec<u32>,
    pub object: Vec<u32>,
    pub surface: Vec<bool>,
    /// Accumulated plastic volume change (sand model only).
    pub plastic: Vec<f64>,
}

impl ParticleCloud {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(&mut self, x: Vec3, v: Vec3, mass: f64, volume: f64, material: u32, object: u32, surface: bool) {
        self.x.push(x);
        self.v.push(v);
        self.mass.push(mass);
        self.volume.push(volume);
        self.f.push(Mat3::identity());
        self.c.push(Mat3::zeros());
        self.material.push(material);
        self.object.push(object);
        self.surface.push(surface);
        self.plastic.push(0.0);
    }

    pub fn append(&mut self, other: &ParticleCloud) {
        self.x.extend_from_slice(&other.x);
        self.v.extend_from_slice(&other.v);
        self.mass.extend_from_slice(&other.mass);
        self.volume.extend_from_slice(&other.volume);
        self.f.extend_from_slice(&other.f);
        self.c.extend_from_slice(&other.c);
        self.material.extend_from_slice(&other.material);
        self.object.extend_from_slice(&other.object);
        self.surface.extend_from_slice(&other.surface);
        self.plastic.extend_from_slice(&other.plastic);
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn momentum(&self) -> Vec3 {
        self.mass.iter().zip(&self.v).map(|(m, v)| *m * v).sum()
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.mass.iter().zip(&self.v).map(|(m, v)| 0.5 * m * v.norm_squared()).sum()
    }

    pub fn max_speed(&self) -> f64 {
        self.v.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn center_of_mass(&self, object: Option<u32>) -> Vec3 {
        let mut m = 0.0;
        let mut s = Vec3::zeros();
        for i in 0..self.len() {
            if object.is_none_or(|o| self.object[i] == o) {
                m += self.mass[i];
                s += self.mass[i] * self.x[i];
            }
        }
        s / m
    }

    /// Broken invariants: positive mass, consistent lengths, and positions
    /// within the boundary margin.
    pub fn violations(&self, sim: &SimParams) -> Vec<String> {
        let n = self.len();
        let mut v = Vec::new();
        let lens = [
            self.v.len(),
            self.mass.len(),
            self.volume.len(),
            self.f.len(),
            self.c.len(),
            self.material.len(),
            self.object.len(),
            self.surface.len(),
            self.plastic.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            v.push("particle arrays differ in length".into());
            return v;
        }
        for i in 0..n {
            if !(self.mass[i] > 0.0) {
                v.push(format!("particle {i} has non-positive mass"));
            }
            if !sim.in_margin(&self.x[i]) {
                v.push(format!("particle {i} lies outside the domain margin"));
            }
        }
        v
    }
}

/// Deterministic area-proportional samples: each triangle is split into
/// `m²` congruent pieces (`m = ceil(sqrt(area * density))`) and every
/// piece contributes its centroid.
pub fn sample_surface(mesh: &TriangleMesh, density: f64) -> Vec<Vec3> {
    let mut out = Vec::new();
    for t in 0..mesh.triangles.len() {
        let [a, b, c] = mesh.triangle(t);
        let area = mesh.triangle_area(t);
        let m = ((area * density).sqrt().ceil() as usize).max(1);
        let mf = m as f64;
        let (ab, ac) = (b - a, c - a);
        for i in 0..m {
            for j in 0..m - i {
                let (u, w) = ((3 * i + 1) as f64 / (3.0 * mf), (3 * j + 1) as f64 / (3.0 * mf));
                out.push(a + ab * u + ac * w);
                if i + j + 1 < m {
                    let (u, w) = ((3 * i + 2) as f64 / (3.0 * mf), (3 * j + 2) as f64 / (3.0 * mf));
                    out.push(a + ab * u + ac * w);
                }
            }
        }
    }
    out
}

/// Knobs of [`mesh_to_particles`] that are not simulator parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingOptions {
    /// Link distance for floating-cluster removal, in grid cells.
    pub link_radius_cells: f64,
    pub min_cluster_fraction: f64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self {
            link_radius_cells: 2.0,
            min_cluster_fraction: 0.05,
        }
    }
}

/// Particle spacing used by the sampler: half a grid cell.
pub fn particle_cell(sim: &SimParams) -> f64 {
    0.5 * sim.dx()
}

/// Samples one object. `pose` maps object space into the simulator frame.
#[allow(clippy::too_many_arguments)]
pub fn mesh_to_particles(
    name: &str,
    mesh: &TriangleMesh,
    pose: &Similarity,
    material: &MaterialSpec,
    sim: &SimParams,
    initial_velocity: Vec3,
    object_index: u32,
    opts: &SamplingOptions,
) -> Result<ParticleCloud, SamplingError> {
    let world = mesh.transformed(pose);
    let dx = sim.dx();
    let cell = particle_cell(sim);
    let mut points = sample_surface(&world, sim.surface_density / (dx * dx));
    let mut surface = vec![true; points.len()];
    if material.requires_internal_fill {
        match fill_interior(&world, cell) {
            Ok(inner) => {
                surface.extend(std::iter::repeat_n(false, inner.len()));
                points.extend(inner);
            }
            Err(SamplingError::NothingInside) => {
                log::warn!("object `{name}` is too thin to fill; using surface samples only")
            }
            Err(e) => return Err(e),
        }
    }
    let kept = voxel_downsample(&points, &surface, cell);
    let pts: Vec<Vec3> = kept.iter().map(|&i| points[i]).collect();
    let srf: Vec<bool> = kept.iter().map(|&i| surface[i]).collect();
    let keep = floating_cluster_keep(&pts, opts.link_radius_cells * dx, opts.min_cluster_fraction);
    let volume = cell * cell * cell;
    let mass = material.density * volume;
    let mut cloud = ParticleCloud::default();
    for i in 0..pts.len() {
        if !keep[i] {
            continue;
        }
        let p = pts[i];
        if !sim.in_margin(&p) {
            return Err(SamplingError::OutsideDomain {
                object: name.to_string(),
                x: p.x,
                y: p.y,
                z: p.z,
            });
        }
        cloud.push(p, initial_velocity, mass, volume, object_index, object_index, srf[i]);
    }
    if cloud.is_empty() {
        return Err(SamplingError::Empty(name.to_string()));
    }
    Ok(cloud)
}

/// Writes a particle PLY: `x y z vx vy vz` (double), `object_id` (int),
/// `is_surface` (uchar). With `full_state`, `mass`, `volume` (double) and
/// `material` (int) follow so the file can seed a simulation.
pub fn write_particles(path: &Path, cloud: &ParticleCloud, full_state: bool) -> Result<(), SceneError> {
    let f64p = |n: &str| PlyProperty::Scalar {
        name: n.into(),
        ty: PlyScalar::F64,
    };
    let mut props = vec![f64p("x"), f64p("y"), f64p("z"), f64p("vx"), f64p("vy"), f64p("vz")];
    props.push(PlyProperty::Scalar {
        name: "object_id".into(),
        ty: PlyScalar::I32,
    });
    props.push(PlyProperty::Scalar {
        name: "is_surface".into(),
        ty: PlyScalar::U8,
    });
    if full_state {
        props.push(f64p("mass"));
        props.push(f64p("volume"));
        props.push(PlyProperty::Scalar {
            name: "material".into(),
            ty: PlyScalar::I32,
        });
    }
    let mut el = PlyElement::new("vertex", props);
    el.count = cloud.len();
    for k in 0..3 {
        el.scalars[k] = cloud.x.iter().map(|p| p[k]).collect();
        el.scalars[3 + k] = cloud.v.iter().map(|v| v[k]).collect();
    }
    el.scalars[6] = cloud.object.iter().map(|&o| o as f64).collect();
    el.scalars[7] = cloud.surface.iter().map(|&s| s as u8 as f64).collect();
    if full_state {
        el.scalars[8] = cloud.mass.clone();
        el.scalars[9] = cloud.volume.clone();
        el.scalars[10] = cloud.material.iter().map(|&m| m as f64).collect();
    }
    write_ply(path, &PlyData { elements: vec![el] })
}

/// Reads a particle PLY written by [`write_particles`]. Missing mass,
/// volume or material columns are zero (positions-only snapshots).
pub fn read_particles(path: &Path) -> Result<ParticleCloud, SceneError> {
    let data = read_ply(path)?;
    let fmt = |m: &str| SceneError::Format {
        path: path.to_path_buf(),
        message: m.to_string(),
    };
    let el = data.element("vertex").ok_or_else(|| fmt("no vertex element"))?;
    let col = |n: &str| el.column(n).ok_or_else(|| fmt(&format!("missing property `{n}`")));
    let (x, y, z) = (col("x")?, col("y")?, col("z")?);
    let (vx, vy, vz) = (col("vx")?, col("vy")?, col("vz")?);
    let obj = col("object_id")?;
    let srf = col("is_surface")?;
    let zeros = vec![0.0; el.count];
    let mass = el.column("mass").unwrap_or(&zeros);
    let volume = el.column("volume").unwrap_or(&zeros);
    let material = el.column("material").unwrap_or(obj);
    let mut cloud = ParticleCloud::default();
    for i in 0..el.count {
        cloud.push(
            Vec3::new(x[i], y[i], z[i]),
            Vec3::new(vx[i], vy[i], vz[i]),
            mass[i],
            volume[i],
            material[i] as u32,
            obj[i] as u32,
            srf[i] != 0.0,
        );
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn cube(min: f64, max: f64) -> TriangleMesh {
        let mut v = Vec::new();
        for i in 0..8 {
            v.push(Vec3::new(
                if i & 1 == 0 { min } else { max },
                if i & 2 == 0 { min } else { max },
                if i & 4 == 0 { min } else { max },
            ));
        }
        let t = vec![
            [0, 2, 1], [1, 2, 3], [4, 5, 6], [5, 7, 6],
            [0, 1, 4], [1, 5, 4], [2, 6, 3], [3, 6, 7],
            [0, 4, 2], [2, 4, 6], [1, 3, 5], [3, 7, 5],
        ];
        TriangleMesh::new(v, t)
    }

    #[test]
    fn unit_cube_has_27_interior_centers() {
        let pts = fill_interior(&cube(0.0, 1.0), 0.25).unwrap();
        assert_eq!(pts.len(), 27);
        assert!(pts.iter().all(|p| (0..3).all(|i| p[i] > 0.0 && p[i] < 1.0)));
    }

    #[test]
    fn single_triangle_cannot_be_filled() {
        let tri = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.3)],
            vec![[0, 1, 2]],
        );
        assert!(fill_interior(&tri, 0.05).is_err());
    }

    #[test]
    fn surface_samples_partition_each_triangle() {
        let tri = TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        );
        // area 0.5, density 50 → m = 5 → 25 samples, mean at the centroid
        let s = sample_surface(&tri, 50.0);
        assert_eq!(s.len(), 25);
        let mean: Vec3 = s.iter().sum::<Vec3>() / 25.0;
        assert!((mean - Vec3::new(1.0 / 3.0, 1.0 / 3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn downsample_prefers_surface_and_is_idempotent() {
        let pts = vec![
            Vec3::new(0.01, 0.0, 0.0),
            Vec3::new(0.3, 0.1, 0.2),
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 1.0),
        ];
        let surface = vec![false, true, false, false];
        let kept = voxel_downsample(&pts, &surface, 1.0);
        assert_eq!(kept, vec![1, 3]);
        let pts2: Vec<Vec3> = kept.iter().map(|&i| pts[i]).collect();
        let s2: Vec<bool> = kept.iter().map(|&i| surface[i]).collect();
        assert_eq!(voxel_downsample(&pts2, &s2, 1.0), vec![0, 1]);
        // no surface point: nearest to the center wins
        assert_eq!(voxel_downsample(&pts[..1], &[false], 1.0), vec![0]);
        let two = [pts[0], pts[2]];
        assert_eq!(voxel_downsample(&two, &[false, false], 1.0), vec![1]);
    }

    #[test]
    fn floating_points_are_removed() {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                for k in 0..10 {
                    pts.push(Vec3::new(i as f64, j as f64, k as f64) * 0.1);
                }
            }
        }
        let r = 0.15;
        for i in 0..3 {
            pts.push(Vec3::new(10.0 * r + 0.9 + i as f64 * 0.05, 0.0, 0.0));
        }
        let out = remove_floating_clusters(&pts, r, 0.05);
        assert_eq!(out.len(), 1000);
        assert_eq!(out, pts[..1000].to_vec());
    }

    #[test]
    fn equal_clusters_survive_half_fraction() {
        let a: Vec<Vec3> = (0..20).map(|i| Vec3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        let b: Vec<Vec3> = a.iter().map(|p| p + Vec3::new(0.0, 5.0, 0.0)).collect();
        let pts: Vec<Vec3> = a.iter().chain(&b).copied().collect();
        assert_eq!(remove_floating_clusters(&pts, 0.15, 0.5).len(), 40);
        assert!(remove_floating_clusters(&[], 0.1, 0.5).is_empty());
    }

    #[test]
    fn particle_ply_round_trip() {
        let mut c = ParticleCloud::default();
        c.push(Vec3::new(0.5, 0.6, 0.7), Vec3::new(1.0, -2.0, 3.0), 0.25, 1e-6, 1, 1, true);
        c.push(Vec3::new(0.1, 0.2, 0.3), Vec3::zeros(), 0.5, 2e-6, 0, 0, false);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.ply");
        write_particles(&p, &c, true).unwrap();
        assert_eq!(read_particles(&p).unwrap(), c);
    }
}
