//! Shading, shadow mapping onto a catcher surface, tone curves and
//! compositing over the background plate.

mod catcher;
mod composite;
mod light;
mod shade;
mod shadow;
mod tone;

pub use catcher::*;
pub use composite::*;
pub use light::*;
pub use shade::*;
pub use shadow::*;
pub use tone::*;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error("background depth has {valid} valid pixels of {total}; at least half are needed for a shadow catcher")]
    TooFewValidDepth { valid: usize, total: usize },
    #[error("no background depth point falls inside the simulation square")]
    CatcherOutsideDomain,
    #[error("tone curve fit: {0}")]
    ToneFit(String),
    #[error("image size mismatch: expected {expected:?}, got {got:?}")]
    SizeMismatch { expected: (u32, u32), got: (u32, u32) },
}

/// Per-pixel multiplier for the background, 1 where unshadowed.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowFactorImage {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

impl ShadowFactorImage {
    pub fn ones(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![1.0; width as usize * height as usize],
        }
    }

    /// 16-bit grayscale encoding, `round(65535 * factor)`.
    pub fn to_png16(&self) -> image::ImageBuffer<image::Luma<u16>, Vec<u16>> {
        image::ImageBuffer::from_fn(self.width, self.height, |x, y| {
            let v = self.values[(y * self.width + x) as usize];
            image::Luma([(v.clamp(0.0, 1.0) * 65535.0).round_ties_even() as u16])
        })
    }
}

/// Shaded objects as seen by the camera: linear color in `[0,1]`, coverage
/// and z-depth (infinite where uncovered).
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectLayer {
    pub width: u32,
    pub height: u32,
    pub color: Vec<crate::math::Vec3>,
    pub alpha: Vec<f64>,
    pub depth: Vec<f64>,
}

impl ObjectLayer {
    pub fn empty(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            color: vec![crate::math::Vec3::zeros(); n],
            alpha: vec![0.0; n],
            depth: vec![f64::INFINITY; n],
        }
    }
}
