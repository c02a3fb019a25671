//! Polygonal domains, the boundary distance `delta`, layers and cutoffs.

pub mod mesh;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use mesh::{layer_mask, triangulate, triangulate_with_cap, BoundaryEdge, Lattice, LayerTag, TriMesh};

pub type Point = [f64; 2];

pub const DOMAIN_PRESETS: &[&str] = &["square", "l-shape"];

/// A closed simple polygon, stored counterclockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonDomain {
    pub name: String,
    pub vertices: Vec<Point>,
    /// Diameter.
    pub r0: f64,
    /// Inradius.
    pub r00: f64,
    /// Layer constant `r00 / 10`.
    pub c0: f64,
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    (qx * qx + qy * qy).sqrt()
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let orient = |p: Point, q: Point, r: Point| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

impl PolygonDomain {
    pub fn new(name: &str, mut vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::invalid("a polygon needs at least 3 vertices"));
        }
        for i in 0..n {
            for j in i + 1..n {
                // skip adjacent edges, which share a vertex
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                if segments_cross(a, b, c, d) {
                    return Err(Error::invalid(format!("polygon edges {i} and {j} intersect")));
                }
            }
        }
        let mut dom = PolygonDomain {
            name: name.to_string(),
            vertices: vec![],
            r0: 0.0,
            r00: 0.0,
            c0: 0.0,
        };
        dom.vertices = vertices.clone();
        if dom.signed_area() < 0.0 {
            vertices.reverse();
            dom.vertices = vertices;
        }
        if dom.signed_area() <= 0.0 {
            return Err(Error::invalid("polygon has zero area"));
        }
        let mut r0 = 0.0f64;
        for a in &dom.vertices {
            for b in &dom.vertices {
                r0 = r0.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        dom.r0 = r0;
        dom.r00 = dom.compute_inradius();
        dom.c0 = dom.r00 / 10.0;
        Ok(dom)
    }

    /// `square` (unit square) or `l-shape`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "square" | "unit-square" => Self::new("square", vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
            "l-shape" | "lshape" => Self::new(
                "l-shape",
                vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.5, 1.0], [0.5, 0.5], [0.0, 0.5]],
            ),
            other => Err(Error::invalid(format!(
                "unknown domain `{other}` (known: {})",
                DOMAIN_PRESETS.join(", ")
            ))),
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn signed_area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a[0] * b[1] - b[0] * a[1]).sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges()
            .map(|(a, b)| ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt())
            .sum()
    }

    pub fn bbox(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for a in 0..2 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        (lo, hi)
    }

    /// Crossing-number test; points on the boundary may go either way.
    pub fn contains(&self, p: Point) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a[1] > p[1]) != (b[1] > p[1]) {
                let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if p[0] < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Distance to the boundary inside the domain, `0` outside.
    pub fn distance(&self, p: Point) -> f64 {
        if !self.contains(p) {
            return 0.0;
        }
        self.boundary_distance(p)
    }

    /// Unsigned distance to the boundary.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        self.edges()
            .map(|(a, b)| segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Piecewise-linear cutoff `clamp((delta - r) / r, 0, 1)`.
    pub fn cutoff(&self, r: f64, p: Point) -> f64 {
        cutoff_profile(self.distance(p), r)
    }

    fn compute_inradius(&self) -> f64 {
        let (lo, hi) = self.bbox();
        let n = 128;
        let mut best: Vec<(f64, Point)> = vec![];
        for i in 0..=n {
            for j in 0..=n {
                let p = [
                    lo[0] + (hi[0] - lo[0]) * i as f64 / n as f64,
                    lo[1] + (hi[1] - lo[1]) * j as f64 / n as f64,
                ];
                best.push((self.distance(p), p));
            }
        }
        best.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut r = 0.0f64;
        let step0 = (hi[0] - lo[0]).max(hi[1] - lo[1]) / n as f64;
        for &(v0, p0) in best.iter().take(8) {
            // compass search; delta is concave on convex pieces so this converges fast
            let (mut v, mut p) = (v0, p0);
            let mut step = step0;
            while step > 1e-12 {
                let mut moved = false;
                for (dx, dy) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (0.7, 0.7), (-0.7, 0.7), (0.7, -0.7), (-0.7, -0.7)] {
                    let q = [p[0] + step * dx, p[1] + step * dy];
                    let w = self.distance(q);
                    if w > v {
                        v = w;
                        p = q;
                        moved = true;
                    }
                }
                if !moved {
                    step *= 0.5;
                }
            }
            r = r.max(v);
        }
        r
    }
}

#[inline]
pub fn cutoff_profile(delta: f64, r: f64) -> f64 {
    ((delta - r) / r).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_distance_examples() {
        let s = PolygonDomain::preset("square").unwrap();
        assert_eq!(s.distance([0.5, 0.5]), 0.5);
        assert_eq!(s.distance([2.0, 2.0]), 0.0);
        assert!((s.r00 - 0.5).abs() < 1e-9);
        assert!((s.c0 - 0.05).abs() < 1e-10);
        assert!((s.r0 - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn l_shape_geometry() {
        let l = PolygonDomain::preset("l-shape").unwrap();
        assert!((l.distance([0.25, 0.25]) - 0.25).abs() < 1e-15);
        assert_eq!(l.distance([0.25, 0.75]), 0.0);
        let exact = 0.5 / (1.0 + 0.5f64.sqrt());
        assert!((l.r00 - exact).abs() < 1e-9, "{}", l.r00);
        assert!((l.area() - 0.75).abs() < 1e-15);
        assert!((l.perimeter() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let p = PolygonDomain::new("cw", vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!(p.signed_area() > 0.0);
    }

    #[test]
    fn self_intersection_is_rejected() {
        assert!(PolygonDomain::new("bow", vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]).is_err());
    }

    #[test]
    fn cutoff_profile_examples() {
        let r = 0.1;
        assert_eq!(cutoff_profile(2.0 * r, r), 1.0);
        assert_eq!(cutoff_profile(r, r), 0.0);
        assert!((cutoff_profile(1.5 * r, r) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn delta_and_cutoff_are_lipschitz() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for name in DOMAIN_PRESETS {
            let d = PolygonDomain::preset(name).unwrap();
            let r = 0.05;
            for _ in 0..2000 {
                let x: Point = [rng.random_range(-0.1..1.1), rng.random_range(-0.1..1.1)];
                let y = [x[0] + rng.random_range(-0.05..0.05), x[1] + rng.random_range(-0.05..0.05)];
                let dist = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
                assert!((d.distance(x) - d.distance(y)).abs() <= dist + 1e-15);
                assert!((d.cutoff(r, x) - d.cutoff(r, y)).abs() <= dist / r + 1e-12);
            }
        }
    }

    #[test]
    fn distance_gradient_has_unit_length_off_the_medial_axis() {
        let d = PolygonDomain::preset("square").unwrap();
        let h = 1e-6;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut checked = 0;
        for _ in 0..500 {
            let x: Point = [rng.random_range(0.01..0.99), rng.random_range(0.01..0.99)];
            // medial axis of the square: the two diagonals
            if (x[0] - x[1]).abs() < 0.01 || (x[0] + x[1] - 1.0).abs() < 0.01 {
                continue;
            }
            let gx = (d.distance([x[0] + h, x[1]]) - d.distance([x[0] - h, x[1]])) / (2.0 * h);
            let gy = (d.distance([x[0], x[1] + h]) - d.distance([x[0], x[1] - h])) / (2.0 * h);
            assert!(((gx * gx + gy * gy).sqrt() - 1.0).abs() < 1e-8);
            checked += 1;
        }
        assert!(checked > 400);
    }
}
