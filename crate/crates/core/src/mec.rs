//! Minimal enclosing circle by Welzl's randomized incremental algorithm.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

const EPS: f64 = 1e-9;

impl Circle {
    fn contains(&self, p: (f64, f64)) -> bool {
        (p.0 - self.cx).hypot(p.1 - self.cy) <= self.r + EPS * (1.0 + self.r)
    }

    fn from_two(a: (f64, f64), b: (f64, f64)) -> Circle {
        let (cx, cy) = ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
        Circle { cx, cy, r: (a.0 - b.0).hypot(a.1 - b.1) / 2.0 }
    }

    /// Circumcircle; `None` for collinear points.
    fn from_three(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> Option<Circle> {
        let (bx, by) = (b.0 - a.0, b.1 - a.1);
        let (qx, qy) = (c.0 - a.0, c.1 - a.1);
        let d = 2.0 * (bx * qy - by * qx);
        if d.abs() < 1e-12 {
            return None;
        }
        let b2 = bx * bx + by * by;
        let c2 = qx * qx + qy * qy;
        let ux = (qy * b2 - by * c2) / d;
        let uy = (bx * c2 - qx * b2) / d;
        Some(Circle { cx: a.0 + ux, cy: a.1 + uy, r: ux.hypot(uy) })
    }
}

/// Smallest circle containing every point. The shuffle is seeded, so the
/// result is deterministic. Returns `None` for an empty input.
pub fn minimal_enclosing_circle(points: &[(f64, f64)]) -> Option<Circle> {
    let mut pts = points.to_vec();
    if pts.is_empty() {
        return None;
    }
    pts.shuffle(&mut ChaCha8Rng::seed_from_u64(0x3EC));
    let mut c = Circle { cx: pts[0].0, cy: pts[0].1, r: 0.0 };
    for i in 1..pts.len() {
        if c.contains(pts[i]) {
            continue;
        }
        c = Circle { cx: pts[i].0, cy: pts[i].1, r: 0.0 };
        for j in 0..i {
            if c.contains(pts[j]) {
                continue;
            }
            c = Circle::from_two(pts[i], pts[j]);
            for k in 0..j {
                if c.contains(pts[k]) {
                    continue;
                }
                // Collinear triples: the two-point circle on the extreme pair.
                c = Circle::from_three(pts[i], pts[j], pts[k]).unwrap_or_else(|| {
                    [(pts[i], pts[j]), (pts[i], pts[k]), (pts[j], pts[k])]
                        .into_iter()
                        .map(|(a, b)| Circle::from_two(a, b))
                        .max_by(|a, b| a.r.total_cmp(&b.r))
                        .expect("three candidates")
                });
            }
        }
    }
    Some(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force over all pair and triple circles.
    fn brute_mec(pts: &[(f64, f64)]) -> f64 {
        let covers = |c: &Circle| pts.iter().all(|&p| c.contains(p));
        let mut best = f64::INFINITY;
        if pts.len() == 1 {
            return 0.0;
        }
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let c = Circle::from_two(pts[i], pts[j]);
                if covers(&c) {
                    best = best.min(c.r);
                }
                for k in j + 1..pts.len() {
                    if let Some(c) = Circle::from_three(pts[i], pts[j], pts[k]) {
                        if covers(&c) {
                            best = best.min(c.r);
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn single_point() {
        let c = minimal_enclosing_circle(&[(3.0, 4.0)]).unwrap();
        assert_eq!((c.cx, c.cy, c.r), (3.0, 4.0, 0.0));
        assert!(minimal_enclosing_circle(&[]).is_none());
    }

    #[test]
    fn square_corners() {
        let pts: Vec<(f64, f64)> = (0..10)
            .flat_map(|i| [(i as f64, 0.0), (i as f64, 9.0), (0.0, i as f64), (9.0, i as f64)])
            .collect();
        let c = minimal_enclosing_circle(&pts).unwrap();
        assert!((c.r - 9.0 * 2f64.sqrt() / 2.0).abs() < 1e-9);
        assert!((c.cx - 4.5).abs() < 1e-9 && (c.cy - 4.5).abs() < 1e-9);
    }

    #[test]
    fn collinear_points_use_farthest_pair() {
        let c = minimal_enclosing_circle(&[(0.0, 0.0), (1.0, 1.0), (4.0, 4.0)]).unwrap();
        assert!((c.r - 32f64.sqrt() / 2.0).abs() < 1e-12);
        assert!((c.cx - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_brute_force(pts in prop::collection::vec((0i32..40, 0i32..40), 1..25)) {
            let pts: Vec<(f64, f64)> = pts.into_iter().map(|(x, y)| (x as f64, y as f64)).collect();
            let c = minimal_enclosing_circle(&pts).unwrap();
            prop_assert!(pts.iter().all(|&p| c.contains(p)));
            prop_assert!((c.r - brute_mec(&pts)).abs() < 1e-7);
        }
    }
}
