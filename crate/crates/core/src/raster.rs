//! Z-buffered triangle rasterizer shared by registration and rendering.
//!
//! Input vertices are in a view frame with x right, y down and z forward.
//! Pixel centers sit at half-integer coordinates. Shared edges are owned by
//! exactly one triangle, and equal depths keep the first triangle drawn.

use crate::math::Vec3;
use crate::scene::CameraIntrinsics;

/// Vertices closer than this to the eye plane are clipped away.
pub const NEAR_PLANE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Orthographic projections map `u = fx * x + cx` with no division.
    pub orthographic: bool,
}

impl Projection {
    pub fn perspective(k: &CameraIntrinsics) -> Self {
        Self {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            orthographic: false,
        }
    }

    pub fn perspective_raw(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            orthographic: false,
        }
    }

    pub fn orthographic(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            orthographic: true,
        }
    }

    /// Pixel coordinates and view depth.
    #[inline]
    pub fn project(&self, p: &Vec3) -> (f64, f64, f64) {
        if self.orthographic {
            (self.fx * p.x + self.cx, self.fy * p.y + self.cy, p.z)
        } else {
            (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy, p.z)
        }
    }
}

pub const NO_HIT: u32 = u32::MAX;

/// Per-pixel nearest fragment: depth, which mesh and triangle, and the
/// (perspective-correct) barycentric weights of the triangle's vertices.
#[derive(Debug, Clone)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub depth: Vec<f64>,
    pub mesh: Vec<u32>,
    pub triangle: Vec<u32>,
    pub bary: Vec<[f64; 3]>,
}

#[derive(Clone, Copy)]
struct ClipVert {
    p: Vec3,
    b: [f64; 3],
}

fn lerp_clip(a: &ClipVert, c: &ClipVert, t: f64) -> ClipVert {
    ClipVert {
        p: a.p + (c.p - a.p) * t,
        b: [
            a.b[0] + (c.b[0] - a.b[0]) * t,
            a.b[1] + (c.b[1] - a.b[1]) * t,
            a.b[2] + (c.b[2] - a.b[2]) * t,
        ],
    }
}

/// Edge owner for points exactly on the edge `a -> b` of a positively
/// oriented triangle; reversed edges get the opposite answer.
#[inline]
fn edge_owned(ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    if by != ay {
        ay > by
    } else {
        bx > ax
    }
}

#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

impl Raster {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            depth: vec![f64::INFINITY; n],
            mesh: vec![NO_HIT; n],
            triangle: vec![NO_HIT; n],
            bary: vec![[0.0; 3]; n],
        }
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn covered(&self, i: usize) -> bool {
        self.triangle[i] != NO_HIT
    }

    pub fn covered_count(&self) -> usize {
        self.triangle.iter().filter(|&&t| t != NO_HIT).count()
    }

    /// Draws every triangle of a mesh whose vertices are given in the view
    /// frame, in index order.
    pub fn draw_mesh(&mut self, proj: &Projection, view_verts: &[Vec3], tris: &[[u32; 3]], mesh_id: u32) {
        for (t, tri) in tris.iter().enumerate() {
            let v = [
                view_verts[tri[0] as usize],
                view_verts[tri[1] as usize],
                view_verts[tri[2] as usize],
            ];
            self.draw_triangle(proj, v, mesh_id, t as u32);
        }
    }

    pub fn draw_triangle(&mut self, proj: &Projection, v: [Vec3; 3], mesh_id: u32, tri_id: u32) {
        let verts = [
            ClipVert { p: v[0], b: [1.0, 0.0, 0.0] },
            ClipVert { p: v[1], b: [0.0, 1.0, 0.0] },
            ClipVert { p: v[2], b: [0.0, 0.0, 1.0] },
        ];
        if proj.orthographic {
            self.fill(proj, &verts, mesh_id, tri_id);
            return;
        }
        if verts.iter().all(|c| c.p.z >= NEAR_PLANE) {
            self.fill(proj, &verts, mesh_id, tri_id);
            return;
        }
        // Sutherland-Hodgman against z = NEAR_PLANE.
        let mut poly: Vec<ClipVert> = Vec::with_capacity(4);
        for i in 0..3 {
            let a = &verts[i];
            let c = &verts[(i + 1) % 3];
            let a_in = a.p.z >= NEAR_PLANE;
            let c_in = c.p.z >= NEAR_PLANE;
            if a_in {
                poly.push(*a);
            }
            if a_in != c_in {
                let t = (NEAR_PLANE - a.p.z) / (c.p.z - a.p.z);
                poly.push(lerp_clip(a, c, t));
            }
        }
        for k in 1..poly.len().saturating_sub(1) {
            self.fill(proj, &[poly[0], poly[k], poly[k + 1]], mesh_id, tri_id);
        }
    }

    fn fill(&mut self, proj: &Projection, tri: &[ClipVert; 3], mesh_id: u32, tri_id: u32) {
        let s: Vec<(f64, f64, f64)> = tri.iter().map(|c| proj.project(&c.p)).collect();
        let mut idx = [0usize, 1, 2];
        let area = edge(s[0].0, s[0].1, s[1].0, s[1].1, s[2].0, s[2].1);
        if area == 0.0 || !area.is_finite() {
            return;
        }
        if area < 0.0 {
            idx.swap(1, 2);
        }
        let area = area.abs();
        let (p0, p1, p2) = (s[idx[0]], s[idx[1]], s[idx[2]]);
        let minx = p0.0.min(p1.0).min(p2.0);
        let maxx = p0.0.max(p1.0).max(p2.0);
        let miny = p0.1.min(p1.1).min(p2.1);
        let maxy = p0.1.max(p1.1).max(p2.1);
        // pixel x covers center x + 0.5
        let x0 = ((minx - 0.5).ceil().max(0.0)) as i64;
        let x1 = ((maxx - 0.5).floor().min(self.width as f64 - 1.0)) as i64;
        let y0 = ((miny - 0.5).ceil().max(0.0)) as i64;
        let y1 = ((maxy - 0.5).floor().min(self.height as f64 - 1.0)) as i64;
        if x0 > x1 || y0 > y1 {
            return;
        }
        let own12 = edge_owned(p1.0, p1.1, p2.0, p2.1);
        let own20 = edge_owned(p2.0, p2.1, p0.0, p0.1);
        let own01 = edge_owned(p0.0, p0.1, p1.0, p1.1);
        let ortho = proj.orthographic;
        let (z0, z1, z2) = (p0.2, p1.2, p2.2);
        let (b0, b1, b2) = (tri[idx[0]].b, tri[idx[1]].b, tri[idx[2]].b);
        for py in y0..=y1 {
            let fy = py as f64 + 0.5;
            for px in x0..=x1 {
                let fx = px as f64 + 0.5;
                let e0 = edge(p1.0, p1.1, p2.0, p2.1, fx, fy);
                let e1 = edge(p2.0, p2.1, p0.0, p0.1, fx, fy);
                let e2 = edge(p0.0, p0.1, p1.0, p1.1, fx, fy);
                let inside = (e0 > 0.0 || (e0 == 0.0 && own12))
                    && (e1 > 0.0 || (e1 == 0.0 && own20))
                    && (e2 > 0.0 || (e2 == 0.0 && own01));
                if !inside {
                    continue;
                }
                let (l0, l1, l2) = (e0 / area, e1 / area, e2 / area);
                let (z, w0, w1, w2) = if ortho {
                    (l0 * z0 + l1 * z1 + l2 * z2, l0, l1, l2)
                } else {
                    let q0 = l0 / z0;
                    let q1 = l1 / z1;
                    let q2 = l2 / z2;
                    let inv = q0 + q1 + q2;
                    (1.0 / inv, q0 / inv, q1 / inv, q2 / inv)
                };
                let i = py as usize * self.width as usize + px as usize;
                if z < self.depth[i] {
                    self.depth[i] = z;
                    self.mesh[i] = mesh_id;
                    self.triangle[i] = tri_id;
                    self.bary[i] = [
                        w0 * b0[0] + w1 * b1[0] + w2 * b2[0],
                        w0 * b0[1] + w1 * b1[1] + w2 * b2[1],
                        w0 * b0[2] + w1 * b1[2] + w2 * b2[2],
                    ];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> Projection {
        Projection::perspective(&CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100))
    }

    #[test]
    fn shared_edge_pixels_are_drawn_once() {
        // A square split along its diagonal, both halves at the same depth;
        // the diagonal passes exactly through pixel centers.
        let p = Projection::orthographic(1.0, 1.0, 0.0, 0.0);
        let mut r = Raster::new(16, 16);
        let a = Vec3::new(2.5, 2.5, 1.0);
        let b = Vec3::new(12.5, 2.5, 1.0);
        let c = Vec3::new(12.5, 12.5, 1.0);
        let d = Vec3::new(2.5, 12.5, 1.0);
        let mut hits = vec![0u32; 256];
        for (t, tri) in [[a, b, c], [a, c, d]].into_iter().enumerate() {
            let mut single = Raster::new(16, 16);
            single.draw_triangle(&p, tri, 0, t as u32);
            for i in 0..256 {
                if single.covered(i) {
                    hits[i] += 1;
                }
            }
            r.draw_triangle(&p, tri, 0, t as u32);
        }
        assert!(hits.iter().all(|&h| h <= 1));
        // The closed square [2.5, 12.5]² contains 10 or 11 centers per axis
        // depending on edge ownership; in total it is filled without gaps.
        let covered = r.covered_count();
        assert!((100..=121).contains(&covered), "{covered}");
    }

    #[test]
    fn perspective_depth_is_exact_on_fronto_parallel_quad() {
        let mut r = Raster::new(100, 100);
        let z = 2.0;
        let v = [
            Vec3::new(-0.5, -0.5, z),
            Vec3::new(0.5, -0.5, z),
            Vec3::new(0.5, 0.5, z),
            Vec3::new(-0.5, 0.5, z),
        ];
        r.draw_mesh(&cam(), &v, &[[0, 1, 2], [0, 2, 3]], 0);
        // u spans 50 ± 25: centers 25.5..74.5 → 50 columns
        assert_eq!(r.covered_count(), 50 * 50);
        for i in 0..r.depth.len() {
            if r.covered(i) {
                assert!((r.depth[i] - z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn behind_camera_draws_nothing_and_straddling_is_clipped() {
        let mut r = Raster::new(100, 100);
        let tri = [
            Vec3::new(-1.0, -1.0, -2.0),
            Vec3::new(1.0, -1.0, -2.0),
            Vec3::new(0.0, 1.0, -2.0),
        ];
        r.draw_triangle(&cam(), tri, 0, 0);
        assert_eq!(r.covered_count(), 0);
        let tri = [
            Vec3::new(-0.2, 0.1, 1.0),
            Vec3::new(0.2, 0.1, 1.0),
            Vec3::new(0.0, 0.1, -1.0),
        ];
        r.draw_triangle(&cam(), tri, 0, 0);
        for i in 0..r.depth.len() {
            if r.covered(i) {
                assert!(r.depth[i] >= NEAR_PLANE - 1e-12);
            }
        }
    }

    #[test]
    fn nearer_triangle_wins() {
        let mut r = Raster::new(100, 100);
        let far = [
            Vec3::new(-1.0, -1.0, 2.0),
            Vec3::new(1.0, -1.0, 2.0),
            Vec3::new(0.0, 1.0, 2.0),
        ];
        let near = far.map(|p| Vec3::new(p.x * 0.5, p.y * 0.5, 1.0));
        r.draw_triangle(&cam(), far, 0, 0);
        r.draw_triangle(&cam(), near, 0, 1);
        let i = r.index(50, 50);
        assert_eq!(r.triangle[i], 1);
        assert!((r.depth[i] - 1.0).abs() < 1e-12);
    }
}
