//! Oriented ellipses.

use crate::error::{Error, Result};
use crate::region::RegionMask;

/// Center `(cx, cy)`, radius `a` along the rotated x axis, `b` along the
/// rotated y axis, orientation `theta` in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

impl Ellipse {
    pub fn new(cx: f64, cy: f64, a: f64, b: f64, theta: f64) -> Result<Self> {
        let e = Ellipse { cx, cy, a, b, theta };
        e.validate()?;
        Ok(e)
    }

    pub fn circle(cx: f64, cy: f64, r: f64) -> Result<Self> {
        Self::new(cx, cy, r, r, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.cx, self.cy, self.theta].iter().all(|v| v.is_finite());
        if !(self.a > 0.0 && self.b > 0.0 && self.a.is_finite() && self.b.is_finite() && finite) {
            return Err(Error::DegenerateEllipse { a: self.a, b: self.b });
        }
        Ok(())
    }

    /// Same ellipse with `a ≥ b` and `theta` in `[-π/2, π/2)`.
    pub fn canonical(&self) -> Ellipse {
        use std::f64::consts::{FRAC_PI_2, PI};
        let (mut a, mut b, mut theta) = (self.a, self.b, self.theta);
        if b > a {
            std::mem::swap(&mut a, &mut b);
            theta += FRAC_PI_2;
        }
        theta = (theta + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
        Ellipse { a, b, theta, ..*self }
    }

    /// Normalized quadratic form: negative inside, zero on the curve, `-1` at the center.
    #[inline]
    pub fn quadratic(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * c + dy * s;
        let v = dx * s - dy * c;
        u * u / (self.a * self.a) + v * v / (self.b * self.b) - 1.0
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.quadratic(x, y) <= 0.0
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.a * self.b
    }

    /// Both radii scaled by `factor`.
    pub fn enlarge(&self, factor: f64) -> Ellipse {
        Ellipse { a: self.a * factor, b: self.b * factor, ..*self }
    }

    /// Axis-aligned half-extents of the ellipse.
    pub fn half_extents(&self) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let hx = ((self.a * c).powi(2) + (self.b * s).powi(2)).sqrt();
        let hy = ((self.a * s).powi(2) + (self.b * c).powi(2)).sqrt();
        (hx, hy)
    }

    /// Pixels inside the ellipse.
    pub fn to_mask(&self, width: usize, height: usize) -> RegionMask {
        RegionMask::from_fn(width, height, |x, y| self.contains(x as f64, y as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_values() {
        let e = Ellipse::new(10.0, 8.0, 5.0, 3.0, 0.4).unwrap();
        assert_eq!(e.quadratic(10.0, 8.0), -1.0);
        let (s, c) = 0.4f64.sin_cos();
        assert!(e.quadratic(10.0 + 5.0 * c, 8.0 + 5.0 * s).abs() < 1e-12);
        assert!(e.quadratic(10.0 + 3.0 * s, 8.0 - 3.0 * c).abs() < 1e-12);
        assert!(Ellipse::new(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(Ellipse::new(0.0, 0.0, 1.0, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn mask_area_tracks_analytic_area() {
        let e = Ellipse::new(40.0, 40.0, 20.0, 12.0, 0.7).unwrap();
        let area = e.to_mask(80, 80).area() as f64;
        assert!((area - e.area()).abs() / e.area() < 0.02);
        let (hx, hy) = e.half_extents();
        let (x0, y0, x1, y1) = e.to_mask(80, 80).bounding_box().unwrap();
        assert!((x1 as f64 - x0 as f64) / 2.0 <= hx + 0.5 && (y1 as f64 - y0 as f64) / 2.0 <= hy + 0.5);
        assert_eq!(e.enlarge(1.2).a, 24.0);
    }

    #[test]
    fn canonical_form_describes_same_curve() {
        let e = Ellipse::new(5.0, 6.0, 3.0, 7.0, 2.9).unwrap();
        let c = e.canonical();
        assert!(c.a >= c.b);
        assert!(c.theta >= -std::f64::consts::FRAC_PI_2 && c.theta < std::f64::consts::FRAC_PI_2);
        for k in 0..36 {
            let t = k as f64 * 0.17;
            let (x, y) = (5.0 + 4.0 * t.cos(), 6.0 + 9.0 * t.sin());
            assert!((e.quadratic(x, y) - c.quadratic(x, y)).abs() < 1e-9);
        }
    }
}
