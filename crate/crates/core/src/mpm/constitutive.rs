use crate::math::{polar_rotation, rotation_variant_svd, Mat3, Vec3};
use crate::scene::{ConstitutiveModel, MaterialSpec};

use super::MpmError;

/// First and second Lamé parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LameParams {
    pub lambda: f64,
    pub mu: f64,
}

/// `λ = Eν / ((1+ν)(1−2ν))`, `μ = E / (2(1+ν))`.
pub fn lame_parameters(e: f64, nu: f64) -> Result<LameParams, MpmError> {
    if !(e > 0.0) {
        return Err(MpmError::InvalidMaterial(format!("youngs_modulus must be > 0 (got {e})")));
    }
    if !(0.0..0.5).contains(&nu) {
        return Err(MpmError::InvalidMaterial(format!(
            "poisson_ratio must lie in [0, 0.5) (got {nu})"
        )));
    }
    Ok(LameParams {
        lambda: e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
        mu: e / (2.0 * (1.0 + nu)),
    })
}

/// Quadratic B-spline weights for the three nodes starting at
/// `base = floor(x/Δx − 0.5)`, where `fx = x/Δx − base`.
#[inline]
pub fn bspline_weights(fx: f64) -> Result<[f64; 3], MpmError> {
    if !(0.5..=1.5).contains(&fx) {
        return Err(MpmError::KernelRange(fx));
    }
    Ok(bspline_unchecked(fx))
}

#[inline]
pub(crate) fn bspline_unchecked(fx: f64) -> [f64; 3] {
    [
        0.5 * (1.5 - fx) * (1.5 - fx),
        0.75 - (fx - 1.0) * (fx - 1.0),
        0.5 * (fx - 0.5) * (fx - 0.5),
    ]
}

/// Corotated Kirchhoff stress `τ = 2μ(F − R)Fᵀ + λJ(J − 1)I` with `R` the
/// rotation of the polar decomposition.
pub fn particle_stress(f: &Mat3, lame: &LameParams) -> Result<Mat3, MpmError> {
    let j = f.determinant();
    if !(j > 0.0) {
        return Err(MpmError::Inversion { step: None, particle: None, det: j });
    }
    let r = polar_rotation(f);
    Ok(2.0 * lame.mu * (f - r) * f.transpose() + Mat3::from_diagonal_element(lame.lambda * j * (j - 1.0)))
}

/// Kirchhoff stress of the Hencky (log-strain) model used with sand.
pub fn hencky_stress(f: &Mat3, lame: &LameParams) -> Mat3 {
    let (u, sig, v) = rotation_variant_svd(f);
    let logs = sig.map(|s| s.abs().max(1e-6).ln());
    let tr = logs.sum();
    let center = Vec3::from_fn(|i, _| (2.0 * lame.mu * logs[i] + lame.lambda * tr) / sig[i]);
    u * Mat3::from_diagonal(&center) * v.transpose() * f.transpose()
}

/// Drucker-Prager `alpha` for a friction angle in degrees.
pub fn drucker_prager_alpha(friction_angle_deg: f64) -> f64 {
    let s = friction_angle_deg.to_radians().sin();
    (2.0f64 / 3.0).sqrt() * 2.0 * s / (3.0 - s)
}

/// Return-maps an elastic trial `F` onto the Drucker-Prager cone. `state`
/// carries the accumulated volume correction between steps.
pub fn sand_projection(f: &Mat3, state: &mut f64, lame: &LameParams, alpha: f64) -> Mat3 {
    let (u, sig, v) = rotation_variant_svd(f);
    let eps = sig.map(|s| s.abs().max(1e-4).ln());
    let tr = eps.sum() + *state;
    let eps_hat = eps - Vec3::repeat(tr / 3.0);
    let norm = eps_hat.norm() + 1e-20;
    let out = if tr >= 0.0 {
        *state = tr;
        Vec3::repeat(1.0)
    } else {
        *state = 0.0;
        let dg = norm + (3.0 * lame.lambda + 2.0 * lame.mu) / (2.0 * lame.mu) * tr * alpha;
        Vec3::from_fn(|i, _| (eps[i] - dg.max(0.0) / norm * eps_hat[i]).exp())
    };
    u * Mat3::from_diagonal(&out) * v.transpose()
}

/// Singular values of `F` clamped to `[lo, hi]`; a reflection is removed.
pub fn clamp_singular_values(f: &Mat3, lo: f64, hi: f64) -> Mat3 {
    let (u, sig, v) = rotation_variant_svd(f);
    u * Mat3::from_diagonal(&sig.map(|s| s.clamp(lo, hi))) * v.transpose()
}

/// Per-material constants the solver needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub lame: LameParams,
    pub model: ConstitutiveModel,
    pub alpha: f64,
}

impl MaterialParams {
    pub fn from_spec(spec: &MaterialSpec) -> Result<Self, MpmError> {
        Ok(Self {
            lame: lame_parameters(spec.youngs_modulus(), spec.poisson_ratio)?,
            model: spec.model,
            alpha: drucker_prager_alpha(spec.friction_angle_deg),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rotation_from_axis_angle;

    #[test]
    fn lame_closed_forms() {
        let l = lame_parameters(5e4, 0.2).unwrap();
        assert!((l.mu - 50000.0 / 2.4).abs() < 1e-9);
        assert!((l.lambda - 10000.0 / 0.72).abs() < 1e-9);
        let l0 = lame_parameters(3.0, 0.0).unwrap();
        assert_eq!(l0.lambda, 0.0);
        assert_eq!(l0.mu, 1.5);
        let l49 = lame_parameters(1.0, 0.49).unwrap();
        assert!((l49.lambda - 0.49 / (1.49 * 0.02)).abs() < 1e-12);
        assert!(lame_parameters(1.0, 0.5).is_err());
    }

    #[test]
    fn kernel_values() {
        assert_eq!(bspline_weights(1.0).unwrap(), [0.125, 0.75, 0.125]);
        assert_eq!(bspline_weights(0.5).unwrap(), [0.5, 0.5, 0.0]);
        for k in 0..=100 {
            let w = bspline_weights(0.5 + k as f64 / 100.0).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(bspline_weights(1.6).is_err());
        assert!(bspline_weights(0.49).is_err());
    }

    #[test]
    fn rest_and_rotations_are_stress_free() {
        let lame = LameParams { lambda: 3.0, mu: 2.0 };
        assert!(particle_stress(&Mat3::identity(), &lame).unwrap().norm() < 1e-14);
        let r = rotation_from_axis_angle(&Vec3::new(0.3, -1.1, 0.6));
        assert!(particle_stress(&r, &lame).unwrap().norm() < 1e-10);
        let bad = Mat3::from_diagonal(&Vec3::new(-1.0, 1.0, 1.0));
        assert!(particle_stress(&bad, &lame).is_err());
    }

    #[test]
    fn sand_at_rest_stays_put() {
        let lame = LameParams { lambda: 1e4, mu: 1e4 };
        let mut st = 0.0;
        let f = sand_projection(&Mat3::identity(), &mut st, &lame, drucker_prager_alpha(35.0));
        assert!((f - Mat3::identity()).norm() < 1e-12);
        // pure expansion is cohesionless: projected back to a rotation
        let mut st = 0.0;
        let f = sand_projection(&(Mat3::identity() * 1.1), &mut st, &lame, 0.3);
        assert!((f - Mat3::identity()).norm() < 1e-12);
        assert!(st > 0.0);
    }
}
