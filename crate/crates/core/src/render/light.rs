use serde::{Deserialize, Serialize};

use crate::math::{vec3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightKind {
    Directional,
    Point,
}

fn default_intensity() -> f64 {
    1.0
}

fn default_ambient() -> f64 {
    0.3
}

/// A single light in the simulator frame. `direction` is the direction the
/// light travels (for the sun, pointing down).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightSpec {
    pub kind: LightKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 3]>,
    #[serde(default = "default_intensity")]
    pub intensity: f64,
    #[serde(default = "default_ambient")]
    pub ambient: f64,
}

impl LightSpec {
    pub fn directional(direction: Vec3, intensity: f64, ambient: f64) -> Self {
        Self {
            kind: LightKind::Directional,
            direction: Some([direction.x, direction.y, direction.z]),
            position: None,
            intensity,
            ambient,
        }
    }

    pub fn point(position: Vec3, intensity: f64, ambient: f64) -> Self {
        Self {
            kind: LightKind::Point,
            direction: None,
            position: Some([position.x, position.y, position.z]),
            intensity,
            ambient,
        }
    }

    /// Unit travel direction of a directional light.
    pub fn unit_direction(&self) -> Vec3 {
        vec3(self.direction.unwrap_or([0.0, -1.0, 0.0])).normalize()
    }

    pub fn position(&self) -> Vec3 {
        vec3(self.position.unwrap_or([0.0; 3]))
    }

    /// Unit vector from `p` toward the light.
    #[inline]
    pub fn to_light(&self, p: &Vec3) -> Vec3 {
        match self.kind {
            LightKind::Directional => -self.unit_direction(),
            LightKind::Point => (self.position() - p).normalize(),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        match self.kind {
            LightKind::Directional => match self.direction {
                Some(d) if vec3(d).norm() > 0.0 && d.iter().all(|c| c.is_finite()) => {}
                Some(_) => v.push("light direction must be a non-zero vector".into()),
                None => v.push("directional light needs `direction`".into()),
            },
            LightKind::Point => match self.position {
                Some(p) if p.iter().all(|c| c.is_finite()) => {}
                _ => v.push("point light needs a finite `position`".into()),
            },
        }
        if !(self.intensity >= 0.0) {
            v.push(format!("light intensity must be >= 0 (got {})", self.intensity));
        }
        if !(0.0..=1.0).contains(&self.ambient) {
            v.push(format!("light ambient must lie in [0, 1] (got {})", self.ambient));
        }
        v
    }
}
