//! Triangle and edge quadrature rules.

/// Barycentric points and weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn centroid() -> Self {
        TriangleRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
        }
    }

    /// Exact for quadratics.
    pub fn order2() -> Self {
        let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
        TriangleRule {
            points: vec![[a, b, b], [b, a, b], [b, b, a]],
            weights: vec![1.0 / 3.0; 3],
        }
    }

    /// Six-point rule exact for quartics.
    pub fn order4() -> Self {
        let (a, wa) = (0.445_948_490_915_965, 0.223_381_589_678_011);
        let (b, wb) = (0.091_576_213_509_771, 0.109_951_743_655_322);
        let (ca, cb) = (1.0 - 2.0 * a, 1.0 - 2.0 * b);
        TriangleRule {
            points: vec![[a, a, ca], [a, ca, a], [ca, a, a], [b, b, cb], [b, cb, b], [cb, b, b]],
            weights: vec![wa, wa, wa, wb, wb, wb],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauss-Legendre points on `[0, 1]` with weights summing to one.
pub fn gauss_segment(n: usize) -> Vec<(f64, f64)> {
    match n {
        1 => vec![(0.5, 1.0)],
        2 => {
            let s = 0.5 / 3f64.sqrt();
            vec![(0.5 - s, 0.5), (0.5 + s, 0.5)]
        }
        _ => {
            let s = 0.5 * (0.6f64).sqrt();
            vec![(0.5 - s, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + s, 5.0 / 18.0)]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(rule: &TriangleRule, f: impl Fn(f64, f64) -> f64) -> f64 {
        // reference triangle (0,0), (1,0), (0,1), area 1/2
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(l, w)| w * f(l[1], l[2]))
            .sum::<f64>()
            * 0.5
    }

    #[test]
    fn exactness() {
        // int x^a y^b over the reference triangle = a! b! / (a + b + 2)!
        let fact = |n: u32| (1..=n).product::<u32>().max(1) as f64;
        let exact = |a: u32, b: u32| fact(a) * fact(b) / fact(a + b + 2);
        for (rule, deg) in [(TriangleRule::order2(), 2), (TriangleRule::order4(), 4)] {
            let s: f64 = rule.weights.iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
            for a in 0..=deg {
                for b in 0..=deg - a {
                    let got = integrate(&rule, |x, y| x.powi(a as i32) * y.powi(b as i32));
                    assert!((got - exact(a, b)).abs() < 1e-13, "{a} {b}");
                }
            }
        }
    }

    #[test]
    fn segment_rules() {
        for n in 1..=3 {
            let r = gauss_segment(n);
            for k in 0..2 * n {
                let got: f64 = r.iter().map(|(x, w)| w * x.powi(k as i32)).sum();
                assert!((got - 1.0 / (k as f64 + 1.0)).abs() < 1e-14);
            }
        }
    }
}
