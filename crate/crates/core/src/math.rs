//! Small linear-algebra vocabulary shared by every stage.

use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Rotation, translation and uniform scale: `x -> scale * rotation * x + translation`.
///
/// Used both for object poses (object space into camera space) and for the
/// rigid camera-to-world placement (scale fixed at 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub rotation: Mat3,
    pub translation: Vec3,
    pub scale: f64,
}

impl Default for Similarity {
    fn default() -> Self {
        Self::identity()
    }
}

impl Similarity {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
            scale: 1.0,
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3, scale: f64) -> Self {
        Self {
            rotation,
            translation,
            scale,
        }
    }

    pub fn rigid(rotation: Mat3, translation: Vec3) -> Self {
        Self::new(rotation, translation, 1.0)
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }

    #[inline]
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Similarity) -> Similarity {
        Similarity {
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
            scale: self.scale * other.scale,
        }
    }

    pub fn inverse(&self) -> Similarity {
        let rt = self.rotation.transpose();
        let inv_s = 1.0 / self.scale;
        Similarity {
            rotation: rt,
            translation: -(inv_s * (rt * self.translation)),
            scale: inv_s,
        }
    }

    /// Largest deviation of `RᵀR` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Mat3::identity()).amax()
    }
}

/// Rotation matrix from an axis-angle vector (direction = axis, norm = angle).
pub fn rotation_from_axis_angle(w: &Vec3) -> Mat3 {
    Rotation3::new(*w).into_inner()
}

/// Axis-angle vector of a rotation matrix.
pub fn axis_angle_from_rotation(r: &Mat3) -> Vec3 {
    Rotation3::from_matrix_unchecked(*r).scaled_axis()
}

/// Geodesic angle between two rotations, radians.
pub fn rotation_angle_between(a: &Mat3, b: &Mat3) -> f64 {
    let rel = a.transpose() * b;
    let c = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    c.acos()
}

/// Nearest proper rotation to `m` (Frobenius sense), via SVD.
pub fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u2 = u;
        // flip the column paired with the smallest singular value
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        for row in 0..3 {
            u2[(row, imin)] = -u2[(row, imin)];
        }
        r = u2 * v_t;
    }
    r
}

/// Rotation factor `R` of the polar decomposition `F = R S` for `det F > 0`,
/// by the scaled Newton iteration `R ← (γR + R⁻ᵀ/γ) / 2`. Falls back to the
/// SVD when the iteration does not settle.
pub fn polar_rotation(f: &Mat3) -> Mat3 {
    let mut r = *f;
    for _ in 0..40 {
        let Some(inv) = r.try_inverse() else { break };
        let inv_t = inv.transpose();
        let gamma = (inv.norm() / r.norm()).sqrt();
        let next = 0.5 * (gamma * r + inv_t / gamma);
        let delta = (next - r).norm();
        r = next;
        if delta <= 1e-13 * r.norm() {
            return 0.5 * (r + r.try_inverse().map_or(r, |i| i.transpose()));
        }
    }
    let (u, _, v) = rotation_variant_svd(f);
    u * v.transpose()
}

/// Full SVD `F = U diag(σ) Vᵀ` with `det U = det V = +1`; a reflection is
/// absorbed by negating the smallest singular value.
pub fn rotation_variant_svd(f: &Mat3) -> (Mat3, Vec3, Mat3) {
    let svd = f.svd(true, true);
    let mut u = svd.u.expect("svd u");
    let mut v = svd.v_t.expect("svd v_t").transpose();
    let mut sigma = svd.singular_values;
    // nalgebra does not promise an ordering; find the smallest.
    let imin = (0..3)
        .min_by(|&a, &b| sigma[a].partial_cmp(&sigma[b]).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(2);
    if u.determinant() < 0.0 {
        for row in 0..3 {
            u[(row, imin)] = -u[(row, imin)];
        }
        sigma[imin] = -sigma[imin];
    }
    if v.determinant() < 0.0 {
        for row in 0..3 {
            v[(row, imin)] = -v[(row, imin)];
        }
        sigma[imin] = -sigma[imin];
    }
    (u, sigma, v)
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.include(p);
        }
        b
    }

    pub fn include(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    pub fn center(&self) -> Vec3 {
        0.5 * (self.min + self.max)
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vec3::new(a.x, a.y, a.z),
            Vec3::new(b.x, a.y, a.z),
            Vec3::new(a.x, b.y, a.z),
            Vec3::new(b.x, b.y, a.z),
            Vec3::new(a.x, a.y, b.z),
            Vec3::new(b.x, a.y, b.z),
            Vec3::new(a.x, b.y, b.z),
            Vec3::new(b.x, b.y, b.z),
        ]
    }
}

/// `[f64; 3]` as used by the config and file formats.
pub fn vec3(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

pub fn arr3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

/// Row-major 3×3 in/out for text formats.
pub fn mat3_from_rows(rows: [[f64; 3]; 3]) -> Mat3 {
    Mat3::new(
        rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0],
        rows[2][1], rows[2][2],
    )
}

pub fn mat3_rows(m: &Mat3) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

/// Serializable mirror of [`Similarity`] with a row-major rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl From<&Similarity> for PoseRecord {
    fn from(s: &Similarity) -> Self {
        Self {
            rotation: mat3_rows(&s.rotation),
            translation: arr3(&s.translation),
            scale: s.scale,
        }
    }
}

impl From<&PoseRecord> for Similarity {
    fn from(r: &PoseRecord) -> Self {
        Similarity::new(mat3_from_rows(r.rotation), vec3(r.translation), r.scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polar_rotation_matches_svd() {
        let r0 = rotation_from_axis_angle(&Vec3::new(0.4, 1.1, -0.7));
        for s in [
            Mat3::identity(),
            Mat3::new(1.2, 0.1, 0.0, 0.1, 0.8, 0.05, 0.0, 0.05, 1.05),
            Mat3::new(3.0, 0.2, 0.1, 0.2, 0.1, 0.0, 0.1, 0.0, 1.0),
        ] {
            let f = r0 * s;
            let (u, _, v) = rotation_variant_svd(&f);
            assert_relative_eq!(polar_rotation(&f), u * v.transpose(), epsilon = 1e-13);
        }
    }

    #[test]
    fn similarity_inverse_round_trips() {
        let s = Similarity::new(
            rotation_from_axis_angle(&Vec3::new(0.3, -0.2, 0.9)),
            Vec3::new(1.0, 2.0, -3.0),
            1.7,
        );
        let p = Vec3::new(0.4, -0.5, 2.0);
        let q = s.inverse().apply(&s.apply(&p));
        assert_relative_eq!(p, q, epsilon = 1e-12);
        let id = s.compose(&s.inverse());
        assert_relative_eq!(id.rotation, Mat3::identity(), epsilon = 1e-12);
        assert_relative_eq!(id.scale, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn svd_keeps_proper_rotations() {
        let f = Mat3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        let (u, s, v) = rotation_variant_svd(&f);
        assert!(u.determinant() > 0.0 && v.determinant() > 0.0);
        let back = u * Mat3::from_diagonal(&s) * v.transpose();
        assert_relative_eq!(back, f, epsilon = 1e-12);
        assert!(nearest_rotation(&f).determinant() > 0.0);
    }

    #[test]
    fn axis_angle_round_trip() {
        let w = Vec3::new(0.1, 0.7, -0.4);
        let r = rotation_from_axis_angle(&w);
        assert_relative_eq!(axis_angle_from_rotation(&r), w, epsilon = 1e-12);
        assert_relative_eq!(rotation_angle_between(&Mat3::identity(), &r), w.norm(), epsilon = 1e-12);
    }
}
