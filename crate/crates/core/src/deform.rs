//! Carries particle motion back to mesh vertices and exports particle
//! tracks.
//!
//! Each vertex is bound to its `K` nearest same-object particles at frame 0
//! with normalized inverse-distance weights. A deformed vertex is its rest
//! position plus the weighted particle displacement, so global translations
//! are reproduced exactly and frame 0 returns the input mesh bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::math::Vec3;
use crate::mpm::Snapshot;
use crate::sampling::ParticleCloud;
use crate::scene::{SceneError, TriangleMesh};
use crate::spatial::HashGrid;

pub const DEFAULT_NEIGHBORS: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeformError {
    #[error("object {object} has {available} particles but {k} neighbours were requested; lower track.neighbors")]
    TooFewParticles { object: u32, available: usize, k: usize },
    #[error("neighbour count must be at least 1")]
    ZeroNeighbors,
    #[error("frame has {got} particles but the binding references index {index}")]
    MissingParticle { index: usize, got: usize },
    #[error("track stride must be at least 1")]
    ZeroStride,
}

/// Per-vertex particle neighbours and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexBinding {
    pub object: u32,
    pub k: usize,
    /// Rest positions the displacements are added to.
    pub rest: Vec<Vec3>,
    /// `k` particle indices per vertex, row-major.
    pub indices: Vec<u32>,
    pub weights: Vec<f64>,
    /// Frame-0 positions of the referenced particles, aligned with `indices`.
    pub anchors: Vec<Vec3>,
}

impl VertexBinding {
    pub fn vertex_count(&self) -> usize {
        self.rest.len()
    }

    pub fn neighbors(&self, vertex: usize) -> (&[u32], &[f64]) {
        let r = vertex * self.k..(vertex + 1) * self.k;
        (&self.indices[r.clone()], &self.weights[r])
    }
}

/// Binds `mesh` (already at its simulation-frame pose) to the particles of
/// `object`. `dx` sets the distance regulariser `1e-8 dx`.
pub fn bind_mesh(
    mesh: &TriangleMesh,
    particles: &ParticleCloud,
    object: u32,
    k: usize,
    dx: f64,
) -> Result<VertexBinding, DeformError> {
    if k == 0 {
        return Err(DeformError::ZeroNeighbors);
    }
    let ids: Vec<usize> = (0..particles.len()).filter(|&i| particles.object[i] == object).collect();
    if ids.len() < k {
        return Err(DeformError::TooFewParticles {
            object,
            available: ids.len(),
            k,
        });
    }
    let pts: Vec<Vec3> = ids.iter().map(|&i| particles.x[i]).collect();
    let grid = HashGrid::new(&pts, dx.max(f64::MIN_POSITIVE));
    let eps = 1e-8 * dx;
    let rows = crate::par::par_map(mesh.vertices.len(), |v| {
        let near = grid.knn(&pts, &mesh.vertices[v], k);
        let inv: Vec<f64> = near.iter().map(|&(_, d)| 1.0 / (d + eps)).collect();
        let total: f64 = inv.iter().sum();
        near.iter()
            .zip(inv)
            .map(|(&(j, _), w)| (ids[j] as u32, w / total, pts[j]))
            .collect::<Vec<_>>()
    });
    let mut b = VertexBinding {
        object,
        k,
        rest: mesh.vertices.clone(),
        indices: Vec::with_capacity(rows.len() * k),
        weights: Vec::with_capacity(rows.len() * k),
        anchors: Vec::with_capacity(rows.len() * k),
    };
    for row in rows {
        for (i, w, a) in row {
            b.indices.push(i);
            b.weights.push(w);
            b.anchors.push(a);
        }
    }
    Ok(b)
}

/// Vertex positions for one frame of particle positions.
pub fn deform_vertices(binding: &VertexBinding, x: &[Vec3]) -> Result<Vec<Vec3>, DeformError> {
    if let Some(&bad) = binding.indices.iter().find(|&&i| i as usize >= x.len()) {
        return Err(DeformError::MissingParticle {
            index: bad as usize,
            got: x.len(),
        });
    }
    let k = binding.k;
    Ok(crate::par::par_map(binding.vertex_count(), |v| {
        let disp = |j: usize| x[binding.indices[j] as usize] - binding.anchors[j];
        // Δ₀ + Σ w (Δ − Δ₀): a common displacement comes through unrounded
        let first = disp(v * k);
        let mut d = first;
        for j in v * k..(v + 1) * k {
            d += binding.weights[j] * (disp(j) - first);
        }
        if d == Vec3::zeros() {
            binding.rest[v]
        } else {
            binding.rest[v] + d
        }
    }))
}

/// `mesh` with its vertices replaced by the deformed positions.
pub fn deform_mesh(mesh: &TriangleMesh, binding: &VertexBinding, x: &[Vec3]) -> Result<TriangleMesh, DeformError> {
    let mut out = mesh.clone();
    out.vertices = deform_vertices(binding, x)?;
    Ok(out)
}

/// Positions of a fixed particle subset over every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSet {
    pub ids: Vec<u32>,
    pub frames: Vec<usize>,
    /// `positions[f][i]` is particle `ids[i]` at frame `frames[f]`.
    pub positions: Vec<Vec<Vec3>>,
}

impl TrackSet {
    pub fn track(&self, i: usize) -> impl Iterator<Item = &Vec3> + '_ {
        self.positions.iter().map(move |p| &p[i])
    }
}

/// Every `stride`-th particle, in index order, across all snapshots.
pub fn sample_tracks(snapshots: &[Snapshot], stride: usize) -> Result<TrackSet, DeformError> {
    if stride == 0 {
        return Err(DeformError::ZeroStride);
    }
    let n = snapshots.first().map_or(0, |s| s.x.len());
    let ids: Vec<u32> = (0..n).step_by(stride).map(|i| i as u32).collect();
    let positions = snapshots
        .iter()
        .map(|s| ids.iter().map(|&i| s.x[i as usize]).collect())
        .collect();
    Ok(TrackSet {
        ids,
        frames: snapshots.iter().map(|s| s.frame).collect(),
        positions,
    })
}

/// Incremental track writer used while a simulation streams frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackWriter {
    stride: usize,
    text: String,
}

pub const TRACK_HEADER: &str = "frame particle_id x y z";

impl TrackWriter {
    pub fn new(stride: usize) -> Result<Self, DeformError> {
        if stride == 0 {
            return Err(DeformError::ZeroStride);
        }
        Ok(Self {
            stride,
            text: format!("{TRACK_HEADER}\n"),
        })
    }

    pub fn push(&mut self, frame: usize, x: &[Vec3]) {
        for i in (0..x.len()).step_by(self.stride) {
            let p = x[i];
            let _ = writeln!(self.text, "{frame} {i} {:?} {:?} {:?}", p.x, p.y, p.z);
        }
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

pub fn format_tracks(tracks: &TrackSet) -> String {
    let mut out = format!("{TRACK_HEADER}\n");
    for (f, frame) in tracks.frames.iter().enumerate() {
        for (i, id) in tracks.ids.iter().enumerate() {
            let p = tracks.positions[f][i];
            let _ = writeln!(out, "{frame} {id} {:?} {:?} {:?}", p.x, p.y, p.z);
        }
    }
    out
}

pub fn write_tracks(path: &Path, tracks: &TrackSet) -> Result<(), SceneError> {
    std::fs::write(path, format_tracks(tracks)).map_err(|e| SceneError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Parses a tracks file back into a [`TrackSet`]. Rows must be grouped by
/// frame with the same ids in every frame.
pub fn parse_tracks(text: &str) -> Result<TrackSet, SceneError> {
    let bad = |line: usize, m: &str| SceneError::Parse(format!("tracks line {line}: {m}"));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACK_HEADER => {}
        _ => return Err(bad(1, "missing header")),
    }
    let mut set = TrackSet {
        ids: Vec::new(),
        frames: Vec::new(),
        positions: Vec::new(),
    };
    let mut ids_this: Vec<u32> = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(bad(n + 1, "expected 5 fields"));
        }
        let frame: usize = f[0].parse().map_err(|_| bad(n + 1, "bad frame"))?;
        let id: u32 = f[1].parse().map_err(|_| bad(n + 1, "bad particle id"))?;
        let mut p = Vec3::zeros();
        for k in 0..3 {
            p[k] = f[2 + k].parse().map_err(|_| bad(n + 1, "bad coordinate"))?;
        }
        if set.frames.last() != Some(&frame) {
            if set.frames.len() == 1 {
                set.ids = std::mem::take(&mut ids_this);
            } else if set.frames.len() > 1 && ids_this != set.ids {
                return Err(bad(n + 1, "particle ids differ between frames"));
            }
            ids_this.clear();
            set.frames.push(frame);
            set.positions.push(Vec::new());
        }
        ids_this.push(id);
        set.positions.last_mut().unwrap().push(p);
    }
    if set.frames.len() == 1 {
        set.ids = ids_this;
    } else if set.frames.len() > 1 && ids_this != set.ids {
        return Err(bad(text.lines().count(), "particle ids differ between frames"));
    }
    Ok(set)
}
