use std::collections::VecDeque;

use image::RgbImage;

use crate::scene::MaskImage;

use super::{ObjectLayer, RenderError, ShadowFactorImage};

pub const DEFAULT_SHADOW_THRESHOLD: f64 = 0.25;
pub const DEFAULT_DILATION: usize = 50;

/// Rec. 601 luma of an 8-bit pixel, in `[0, 1]`.
#[inline]
pub fn luma(p: [u8; 3]) -> f64 {
    (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0
}

/// Region to inpaint when removing an object: dark pixels united with the
/// object mask, restricted to the largest 8-connected component that
/// touches the object, then dilated by a `kernel`-wide square.
pub fn extract_shadow_mask(
    image: &RgbImage,
    object_mask: &MaskImage,
    threshold: f64,
    kernel: usize,
) -> Result<MaskImage, RenderError> {
    let (w, h) = image.dimensions();
    if !object_mask.same_size(w, h) {
        return Err(RenderError::SizeMismatch {
            expected: (w, h),
            got: (object_mask.width, object_mask.height),
        });
    }
    let (wu, hu) = (w as usize, h as usize);
    let cand: Vec<bool> = (0..wu * hu)
        .map(|i| object_mask.values[i] || luma(image.get_pixel((i % wu) as u32, (i / wu) as u32).0) < threshold)
        .collect();
    let mut label = vec![u32::MAX; wu * hu];
    let mut best: Option<(usize, u32)> = None;
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..wu * hu {
        if !cand[start] || label[start] != u32::MAX {
            continue;
        }
        let (mut size, mut touches) = (0usize, false);
        label[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            touches |= object_mask.values[i];
            let (x, y) = ((i % wu) as i64, (i / wu) as i64);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= wu as i64 || ny >= hu as i64 {
                        continue;
                    }
                    let j = ny as usize * wu + nx as usize;
                    if cand[j] && label[j] == u32::MAX {
                        label[j] = next;
                        queue.push_back(j);
                    }
                }
            }
        }
        if touches && best.is_none_or(|(s, _)| size > s) {
            best = Some((size, next));
        }
        next += 1;
    }
    let mut out = MaskImage::new(w, h);
    if let Some((_, l)) = best {
        for i in 0..wu * hu {
            out.values[i] = label[i] == l;
        }
    }
    Ok(dilate_square(&out, kernel))
}

/// Binary dilation `{s + o}` by a `k × k` square of offsets
/// `o ∈ [−⌊k/2⌋, k − 1 − ⌊k/2⌋]²`.
pub fn dilate_square(mask: &MaskImage, k: usize) -> MaskImage {
    if k <= 1 {
        return mask.clone();
    }
    let (w, h) = (mask.width as usize, mask.height as usize);
    let lo = (k / 2) as i64;
    let hi = (k - 1 - k / 2) as i64;
    let pass = |src: &[bool], horizontal: bool| -> Vec<bool> {
        let mut dst = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                if !src[y * w + x] {
                    continue;
                }
                let (c, n) = if horizontal { (x as i64, w as i64) } else { (y as i64, h as i64) };
                for p in (c - lo).max(0)..=(c + hi).min(n - 1) {
                    let idx = if horizontal { y * w + p as usize } else { p as usize * w + x };
                    dst[idx] = true;
                }
            }
        }
        dst
    };
    let rows = pass(&mask.values, true);
    MaskImage {
        width: mask.width,
        height: mask.height,
        values: pass(&rows, false),
    }
}

/// `alpha · object + (1 − alpha) · background · shadow`, quantized to 8 bits
/// with round-half-to-even.
pub fn composite_frame(
    background: &RgbImage,
    objects: &ObjectLayer,
    shadow: &ShadowFactorImage,
) -> Result<RgbImage, RenderError> {
    let (w, h) = background.dimensions();
    for got in [(objects.width, objects.height), (shadow.width, shadow.height)] {
        if got != (w, h) {
            return Err(RenderError::SizeMismatch { expected: (w, h), got });
        }
    }
    let mut out = RgbImage::new(w, h);
    for (x, y, px) in out.enumerate_pixels_mut() {
        let i = (y * w + x) as usize;
        let bg = background.get_pixel(x, y).0;
        let a = objects.alpha[i];
        let s = shadow.values[i];
        for c in 0..3 {
            let v = a * objects.color[i][c] * 255.0 + (1.0 - a) * bg[c] as f64 * s;
            px.0[c] = v.clamp(0.0, 255.0).round_ties_even() as u8;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;

    #[test]
    fn dilation_offsets() {
        let mut m = MaskImage::new(60, 60);
        m.set(30, 30, true);
        let d = dilate_square(&m, 50);
        assert_eq!(d.count(), 50 * 50);
        assert!(d.get(5, 5) && d.get(54, 54) && !d.get(4, 30) && !d.get(55, 30));
    }

    #[test]
    fn composite_rules() {
        let bg = RgbImage::from_fn(3, 1, |x, _| image::Rgb([10 * x as u8 + 1, 200, 255]));
        let mut layer = ObjectLayer::empty(3, 1);
        let ones = ShadowFactorImage::ones(3, 1);
        assert_eq!(composite_frame(&bg, &layer, &ones).unwrap(), bg);
        layer.alpha[2] = 1.0;
        layer.color[2] = Vec3::new(1.0, 0.0, 0.5);
        let mut half = ShadowFactorImage::ones(3, 1);
        half.values = vec![0.5; 3];
        let out = composite_frame(&bg, &layer, &half).unwrap();
        // 1 * 0.5 and 255 * 0.5 tie to even
        assert_eq!(out.get_pixel(0, 0).0, [0, 100, 128]);
        assert_eq!(out.get_pixel(1, 0).0, [6, 100, 128]);
        assert_eq!(out.get_pixel(2, 0).0, [255, 0, 128]);
    }

    #[test]
    fn shadow_blob_joins_only_when_touching() {
        let img = RgbImage::from_fn(200, 100, |x, y| {
            let touching = (40..60).contains(&x) && (60..70).contains(&y);
            let far = (150..170).contains(&x) && (10..20).contains(&y);
            if touching || far {
                image::Rgb([10, 10, 10])
            } else {
                image::Rgb([230, 230, 230])
            }
        });
        let obj = MaskImage::from_fn(200, 100, |x, y| (40..60).contains(&x) && (40..60).contains(&y));
        let m = extract_shadow_mask(&img, &obj, 0.25, 1).unwrap();
        assert!(m.get(50, 65));
        assert!(!m.get(160, 15));
        assert_eq!(m.count(), 20 * 30);
    }
}
