use crate::math::Vec3;

use super::RenderError;

/// Cubic `y = a x³ + b x² + c x` with `a + b + c = 1`.
///
/// Evaluated as `x + a(x³ − x) + b(x² − x)` so `y(0) = 0` and `y(1) = 1`
/// hold exactly in floating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneCurve {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for ToneCurve {
    fn default() -> Self {
        Self::identity()
    }
}

impl ToneCurve {
    pub fn identity() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn new(a: f64, b: f64) -> Self {
        Self { a, b, c: 1.0 - a - b }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        x + self.a * (x * x * x - x) + self.b * (x * x - x)
    }

    /// `y′ = 3a x² + 2b x + c ≥ 0` on `[0, 1]`.
    pub fn is_monotone(&self) -> bool {
        let d = |x: f64| 3.0 * self.a * x * x + 2.0 * self.b * x + self.c;
        let mut ok = d(0.0) >= 0.0 && d(1.0) >= 0.0;
        if self.a != 0.0 {
            let v = -self.b / (3.0 * self.a);
            if (0.0..=1.0).contains(&v) {
                ok &= d(v) >= 0.0;
            }
        }
        ok
    }
}

/// Least-squares fit of `observed ≈ y(rendered)` over the two free
/// coefficients `(a, b)`.
pub fn fit_tone_curve(rendered: &[f64], observed: &[f64]) -> Result<ToneCurve, RenderError> {
    if rendered.len() != observed.len() {
        return Err(RenderError::ToneFit(format!(
            "{} rendered samples but {} observed",
            rendered.len(),
            observed.len()
        )));
    }
    if rendered.len() < 2 {
        return Err(RenderError::ToneFit(format!(
            "need at least 2 sample pairs, got {}",
            rendered.len()
        )));
    }
    let (lo, hi) = rendered
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    if hi - lo < 0.1 {
        return Err(RenderError::ToneFit(format!(
            "rendered values span only {:.3}; need at least 0.1",
            hi - lo
        )));
    }
    // r = y − x = a·p + b·q with p = x³ − x, q = x² − x
    let (mut spp, mut spq, mut sqq, mut spr, mut sqr) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in rendered.iter().zip(observed) {
        let (p, q, r) = (x * x * x - x, x * x - x, y - x);
        spp += p * p;
        spq += p * q;
        sqq += q * q;
        spr += p * r;
        sqr += q * r;
    }
    let det = spp * sqq - spq * spq;
    if !(det > 1e-12 * (spp * sqq).max(f64::MIN_POSITIVE)) {
        return Err(RenderError::ToneFit(
            "samples do not determine the curve; provide more distinct values".into(),
        ));
    }
    let a = (spr * sqq - sqr * spq) / det;
    let b = (spp * sqr - spq * spr) / det;
    let curve = ToneCurve::new(a, b);
    if !curve.is_monotone() {
        log::warn!("fitted tone curve (a={a:.4}, b={b:.4}) is not monotone on [0, 1]");
    }
    Ok(curve)
}

/// Applies the curve per channel and clamps to `[0, 1]`.
pub fn apply_tone_curve(curve: &ToneCurve, colors: &mut [Vec3]) {
    for c in colors {
        *c = c.map(|x| curve.eval(x).clamp(0.0, 1.0));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_cubic_values() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let c = fit_tone_curve(&xs, &xs).unwrap();
        assert!(c.a.abs() < 1e-14 && c.b.abs() < 1e-14 && (c.c - 1.0).abs() < 1e-14);
        let cube = ToneCurve::new(1.0, 0.0);
        assert_eq!(cube.eval(0.5), 0.125);
        assert_eq!(cube.eval(1.0), 1.0);
        assert!(fit_tone_curve(&[0.5], &[0.5]).is_err());
        assert!(fit_tone_curve(&[0.5, 0.55], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn two_distinct_interior_points_determine_the_curve() {
        let truth = ToneCurve::new(0.2, -0.1);
        let xs = [0.2, 0.7];
        let ys: Vec<f64> = xs.iter().map(|&x| truth.eval(x)).collect();
        let c = fit_tone_curve(&xs, &ys).unwrap();
        assert!((c.a - 0.2).abs() < 1e-10 && (c.b + 0.1).abs() < 1e-10);
        assert!(fit_tone_curve(&[0.0, 1.0], &[0.0, 1.0]).is_err());
    }
}
