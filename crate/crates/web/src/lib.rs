//! Browser bindings: an elastic cube dropped on a floor, a live shadow
//! preview and tone-curve fitting. Each export wraps a plain Rust function
//! so the logic also runs in native tests.

use wasm_bindgen::prelude::*;

use physcene::fixture::{box_mesh, uv_sphere};
use physcene::math::{Mat3, Similarity, Vec3};
use physcene::mpm::{set_initial_velocity, SimSetup, SimState};
use physcene::render::{fit_tone_curve, render_shadow_factor, shade_objects, LightSpec, ToneCurve};
use physcene::sampling::{mesh_to_particles, SamplingOptions};
use physcene::scene::{
    Camera, CameraIntrinsics, ColliderMode, ColliderSurface, MaterialSpec, ScaleModel, SimParams, TriangleMesh,
};

const FLOOR: f64 = 0.2;

/// A 0.4 m cube released 1 m above a floor, simulated at resolution 32.
#[wasm_bindgen]
pub struct DropDemo {
    state: SimState,
}

impl DropDemo {
    pub fn build(youngs_modulus: f64, k: f64, vx: f64) -> Result<Self, String> {
        let params = SimParams {
            grid_resolution: 32,
            dt: 3e-4,
            substeps_per_frame: 30,
            ..SimParams::default()
        };
        let material = MaterialSpec::from_modulus(1000.0, youngs_modulus, 0.3);
        let pose = Similarity::new(Mat3::identity(), Vec3::new(0.8, 1.2, 1.0), 0.4);
        let mut cloud = mesh_to_particles(
            "cube",
            &box_mesh(Vec3::repeat(0.5), 2),
            &pose,
            &material,
            &params,
            Vec3::zeros(),
            0,
            &SamplingOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        let scale = ScaleModel::new(k, 9.8);
        set_initial_velocity(&mut cloud, 0, &Vec3::new(vx, 0.0, 0.0), &scale).map_err(|e| e.to_string())?;
        let setup = SimSetup {
            params,
            scale,
            materials: vec![material],
            collider: Some(ColliderSurface::plane(FLOOR, 0.3, ColliderMode::Separate)),
        };
        let state = setup.state(cloud).map_err(|e| e.to_string())?;
        Ok(Self { state })
    }

    pub fn advance(&mut self) -> Result<(), String> {
        for _ in 0..self.state.params.substeps_per_frame {
            self.state.step().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

#[wasm_bindgen]
impl DropDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(youngs_modulus: f64, k: f64, vx: f64) -> Result<DropDemo, JsError> {
        Self::build(youngs_modulus, k, vx).map_err(|e| JsError::new(&e))
    }

    /// One rendered frame worth of substeps.
    pub fn frame(&mut self) -> Result<(), JsError> {
        self.advance().map_err(|e| JsError::new(&e))
    }

    /// Side view: interleaved `x, y` per particle, in metres.
    pub fn positions(&self) -> Vec<f32> {
        self.state.particles.x.iter().flat_map(|p| [p.x as f32, p.y as f32]).collect()
    }

    pub fn time(&self) -> f64 {
        self.state.time
    }

    pub fn max_speed(&self) -> f64 {
        self.state.particles.max_speed()
    }

    pub fn floor(&self) -> f64 {
        FLOOR
    }
}

/// RGBA preview of a sphere casting onto a checker floor, seen from above.
/// `azimuth` and `elevation` are in degrees.
#[wasm_bindgen]
pub fn shadow_preview(size: u32, azimuth: f64, elevation: f64, ambient: f64) -> Vec<u8> {
    let (az, el) = (azimuth.to_radians(), elevation.clamp(5.0, 90.0).to_radians());
    let dir = -Vec3::new(el.cos() * az.cos(), el.sin(), el.cos() * az.sin());
    let light = LightSpec::directional(dir, 1.0, ambient.clamp(0.0, 1.0));
    let floor = TriangleMesh::new(
        vec![
            Vec3::new(-3.0, 0.0, -3.0),
            Vec3::new(3.0, 0.0, -3.0),
            Vec3::new(3.0, 0.0, 3.0),
            Vec3::new(-3.0, 0.0, 3.0),
        ],
        vec![[0, 2, 1], [0, 3, 2]],
    );
    let ball = uv_sphere(24, 48).transformed(&Similarity::new(Mat3::identity(), Vec3::new(0.0, 0.6, 0.0), 0.3));
    let half = size as f64 / 2.0;
    let cam = Camera::look_at(
        CameraIntrinsics::new(half * 1.2, half * 1.2, half, half, size, size),
        Vec3::new(0.0, 2.5, -0.01),
        Vec3::zeros(),
        Vec3::new(0.0, 1.0, 0.0),
    );
    let factor = render_shadow_factor(&floor, &[&ball], &light, &cam, 1024);
    let layer = shade_objects(&[&ball], &light, &cam, 1024);
    let mut out = Vec::with_capacity(factor.values.len() * 4);
    for (i, s) in factor.values.iter().enumerate() {
        let (x, y) = (i as u32 % size, i as u32 / size);
        let check = if ((x * 8 / size) + (y * 8 / size)).is_multiple_of(2) { 0.88 } else { 0.7 };
        let a = layer.alpha[i];
        let px = layer.color[i] * a + Vec3::repeat(check * s * (1.0 - a));
        out.extend(px.iter().map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8));
        out.push(255);
    }
    out
}

/// Least-squares tone curve through `(rendered, observed)` pairs, returned
/// as `[a, b, c]`.
pub fn fit_tone(rendered: &[f64], observed: &[f64]) -> Result<[f64; 3], String> {
    let c = fit_tone_curve(rendered, observed).map_err(|e| e.to_string())?;
    Ok([c.a, c.b, c.c])
}

#[wasm_bindgen(js_name = fitTone)]
pub fn fit_tone_js(rendered: &[f64], observed: &[f64]) -> Result<Vec<f64>, JsError> {
    fit_tone(rendered, observed).map(|c| c.to_vec()).map_err(|e| JsError::new(&e))
}

/// Evaluates the curve with cubic and quadratic weights `a`, `b` at each `x`.
#[wasm_bindgen(js_name = applyTone)]
pub fn apply_tone(a: f64, b: f64, xs: &[f64]) -> Vec<f64> {
    let c = ToneCurve::new(a, b);
    xs.iter().map(|&x| c.eval(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_falls_toward_the_floor() {
        let mut d = DropDemo::build(2e5, 1.0, 0.5).unwrap();
        let y0 = d.state.particles.center_of_mass(None).y;
        for _ in 0..5 {
            d.advance().unwrap();
        }
        let p = d.state.particles.center_of_mass(None);
        assert!(p.y < y0 && p.x > 0.8);
        assert_eq!(d.positions().len(), 2 * d.state.particles.len());
    }

    #[test]
    fn preview_has_a_shadow() {
        let img = shadow_preview(64, 30.0, 60.0, 0.3);
        assert_eq!(img.len(), 64 * 64 * 4);
        assert!(img.chunks(4).any(|p| p[0] < 100));
        let lit = shadow_preview(64, 30.0, 60.0, 1.0);
        assert!(lit.chunks(4).filter(|p| p[0] < 100).count() < img.chunks(4).filter(|p| p[0] < 100).count());
    }

    #[test]
    fn tone_round_trip() {
        let xs: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let ys = apply_tone(0.3, -0.2, &xs);
        let [a, b, c] = fit_tone(&xs, &ys).unwrap();
        assert!((a - 0.3).abs() < 1e-10 && (b + 0.2).abs() < 1e-10 && (a + b + c - 1.0).abs() < 1e-12);
    }
}
