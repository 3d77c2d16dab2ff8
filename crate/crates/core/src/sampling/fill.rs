use crate::math::Vec3;
use crate::scene::TriangleMesh;

use super::SamplingError;

/// Largest fraction of candidate voxels on which the three axis votes may
/// disagree.
pub const MAX_VOTE_DISAGREEMENT: f64 = 0.05;

#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

#[inline]
fn owned(ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    if by != ay {
        ay > by
    } else {
        bx > ax
    }
}

/// Where the axis-`a` line through `(pb, pc)` crosses a triangle, if it does.
/// Points on a projected edge count for exactly one of the triangles
/// sharing it.
fn crossing(tri: &[Vec3; 3], a: usize, b: usize, c: usize, pb: f64, pc: f64) -> Option<f64> {
    let mut p = [(tri[0][b], tri[0][c]), (tri[1][b], tri[1][c]), (tri[2][b], tri[2][c])];
    let mut along = [tri[0][a], tri[1][a], tri[2][a]];
    let area = edge(p[0].0, p[0].1, p[1].0, p[1].1, p[2].0, p[2].1);
    if area == 0.0 {
        return None;
    }
    if area < 0.0 {
        p.swap(1, 2);
        along.swap(1, 2);
    }
    let e0 = edge(p[1].0, p[1].1, p[2].0, p[2].1, pb, pc);
    let e1 = edge(p[2].0, p[2].1, p[0].0, p[0].1, pb, pc);
    let e2 = edge(p[0].0, p[0].1, p[1].0, p[1].1, pb, pc);
    let inside = (e0 > 0.0 || (e0 == 0.0 && owned(p[1].0, p[1].1, p[2].0, p[2].1)))
        && (e1 > 0.0 || (e1 == 0.0 && owned(p[2].0, p[2].1, p[0].0, p[0].1)))
        && (e2 > 0.0 || (e2 == 0.0 && owned(p[0].0, p[0].1, p[1].0, p[1].1)));
    if !inside {
        return None;
    }
    let s = e0 + e1 + e2;
    Some((e0 * along[0] + e1 * along[1] + e2 * along[2]) / s)
}

/// Voxel centers `i * cell` strictly inside a closed mesh.
///
/// Each axis casts one line per column of voxel centers and decides
/// inside-ness by crossing parity; a voxel is inside when at least two axes
/// agree. A center lying on the surface is never inside.
pub fn fill_interior(mesh: &TriangleMesh, cell: f64) -> Result<Vec<Vec3>, SamplingError> {
    assert!(cell > 0.0, "cell must be positive");
    let bounds = mesh.bounds();
    if bounds.is_empty() {
        return Err(SamplingError::NothingInside);
    }
    let lo: [i64; 3] = std::array::from_fn(|i| (bounds.min[i] / cell).ceil() as i64);
    let hi: [i64; 3] = std::array::from_fn(|i| (bounds.max[i] / cell).floor() as i64);
    if (0..3).any(|i| hi[i] < lo[i]) {
        return Err(SamplingError::NothingInside);
    }
    let n: [usize; 3] = std::array::from_fn(|i| (hi[i] - lo[i] + 1) as usize);
    let total = n[0] * n[1] * n[2];
    let vidx = |i: usize, j: usize, k: usize| (i * n[1] + j) * n[2] + k;
    let mut votes = vec![0u8; total];
    let mut on_surface = vec![false; total];
    let tol = 1e-9 * cell;

    let tris: Vec<[Vec3; 3]> = (0..mesh.triangles.len()).map(|t| mesh.triangle(t)).collect();
    for a in 0..3 {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n[b] * n[c]];
        for tri in &tris {
            let bmin = tri.iter().map(|p| p[b]).fold(f64::INFINITY, f64::min);
            let bmax = tri.iter().map(|p| p[b]).fold(f64::NEG_INFINITY, f64::max);
            let cmin = tri.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
            let cmax = tri.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max);
            let j0 = ((bmin / cell).ceil() as i64).max(lo[b]);
            let j1 = ((bmax / cell).floor() as i64).min(hi[b]);
            let k0 = ((cmin / cell).ceil() as i64).max(lo[c]);
            let k1 = ((cmax / cell).floor() as i64).min(hi[c]);
            for j in j0..=j1 {
                for k in k0..=k1 {
                    if let Some(t) = crossing(tri, a, b, c, j as f64 * cell, k as f64 * cell) {
                        columns[(j - lo[b]) as usize * n[c] + (k - lo[c]) as usize].push(t);
                    }
                }
            }
        }
        for (col, xs) in columns.iter_mut().enumerate() {
            if xs.is_empty() {
                continue;
            }
            xs.sort_by(f64::total_cmp);
            let (jb, kc) = (col / n[c], col % n[c]);
            let mut below = 0usize;
            for ia in 0..n[a] {
                let t = (lo[a] + ia as i64) as f64 * cell;
                while below < xs.len() && xs[below] < t - tol {
                    below += 1;
                }
                let mut idx3 = [0usize; 3];
                idx3[a] = ia;
                idx3[b] = jb;
                idx3[c] = kc;
                let v = vidx(idx3[0], idx3[1], idx3[2]);
                if below < xs.len() && (xs[below] - t).abs() <= tol {
                    on_surface[v] = true;
                } else if below % 2 == 1 {
                    votes[v] += 1;
                }
            }
        }
    }

    let mut any_inside = 0usize;
    let mut disagree = 0usize;
    let mut out = Vec::new();
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let v = vidx(i, j, k);
                if on_surface[v] || votes[v] == 0 {
                    continue;
                }
                any_inside += 1;
                if votes[v] < 3 {
                    disagree += 1;
                }
                if votes[v] >= 2 {
                    out.push(Vec3::new(
                        (lo[0] + i as i64) as f64 * cell,
                        (lo[1] + j as i64) as f64 * cell,
                        (lo[2] + k as i64) as f64 * cell,
                    ));
                }
            }
        }
    }
    if any_inside > 0 && disagree as f64 > MAX_VOTE_DISAGREEMENT * any_inside as f64 {
        return Err(SamplingError::NotWatertight {
            disagreeing: disagree,
            candidates: any_inside,
        });
    }
    if out.is_empty() {
        return Err(SamplingError::NothingInside);
    }
    Ok(out)
}
