//! Piecewise-linear vector fields on a [`TriMesh`].

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::coeff::ScalarFieldExpr;
use crate::domain::{Point, TriMesh};
use crate::error::{Error, Result};

/// Gradients of the three barycentric coordinates and the element area.
#[inline]
pub fn basis_gradients(v: [Point; 3]) -> ([[f64; 2]; 3], f64) {
    let [p, q, r] = v;
    let det = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let inv = 1.0 / det;
    (
        [
            [(q[1] - r[1]) * inv, (r[0] - q[0]) * inv],
            [(r[1] - p[1]) * inv, (p[0] - r[0]) * inv],
            [(p[1] - q[1]) * inv, (q[0] - p[0]) * inv],
        ],
        0.5 * det.abs(),
    )
}

#[inline]
pub fn bary_point(v: &[Point; 3], l: &[f64; 3]) -> Point {
    [
        l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
        l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
    ]
}

/// `m` nodal components per node, stored `node * m + alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct FemFunction {
    pub mesh: Arc<TriMesh>,
    pub m: usize,
    pub values: Vec<f64>,
}

impl FemFunction {
    pub fn zeros(mesh: Arc<TriMesh>, m: usize) -> Self {
        let n = mesh.node_count();
        FemFunction {
            mesh,
            m,
            values: vec![0.0; n * m],
        }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: Arc<TriMesh>, m: usize, f: impl Fn(Point, &mut [f64])) -> Self {
        let mut values = vec![0.0; mesh.node_count() * m];
        for (k, p) in mesh.nodes.iter().enumerate() {
            f(*p, &mut values[k * m..(k + 1) * m]);
        }
        FemFunction { mesh, m, values }
    }

    /// Nodal interpolant of one expression per component (variables `x1, x2`).
    pub fn from_exprs(mesh: Arc<TriMesh>, exprs: &[ScalarFieldExpr]) -> Result<Self> {
        let f = FemFunction::interpolate(mesh, exprs.len(), |p, out| {
            for (o, e) in out.iter_mut().zip(exprs) {
                *o = e.eval(&p);
            }
        });
        if let Some(k) = f.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                value: f.values[k],
                point: f.mesh.nodes[k / f.m].to_vec(),
            });
        }
        Ok(f)
    }

    #[inline]
    pub fn node_value(&self, node: usize, al: usize) -> f64 {
        self.values[node * self.m + al]
    }

    /// Value of component `al` at barycentric coordinates `l` of element `t`.
    #[inline]
    pub fn value_in(&self, t: usize, l: &[f64; 3], al: usize) -> f64 {
        let tri = self.mesh.triangles[t];
        (0..3).map(|k| l[k] * self.values[tri[k] as usize * self.m + al]).sum()
    }

    /// Constant gradient of component `al` on element `t`.
    #[inline]
    pub fn gradient_in(&self, t: usize, al: usize) -> [f64; 2] {
        let (g, _) = basis_gradients(self.mesh.vertices(t));
        let tri = self.mesh.triangles[t];
        let mut out = [0.0; 2];
        for k in 0..3 {
            let u = self.values[tri[k] as usize * self.m + al];
            out[0] += u * g[k][0];
            out[1] += u * g[k][1];
        }
        out
    }

    /// Point evaluation; `None` outside the mesh.
    pub fn eval(&self, p: Point) -> Option<Vec<f64>> {
        let lat = self.mesh.lattice.as_ref()?;
        let t = lat.locate(p)?;
        let l = barycentric(self.mesh.vertices(t), p);
        Some((0..self.m).map(|al| self.value_in(t, &l, al)).collect())
    }

    pub fn axpy(&mut self, a: f64, other: &FemFunction) {
        assert_eq!(self.values.len(), other.values.len());
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
    }

    pub fn sub(&self, other: &FemFunction) -> FemFunction {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Node table `x,y,u1,..,um`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y");
        for al in 0..self.m {
            write!(s, ",u{}", al + 1).unwrap();
        }
        s.push('\n');
        for (k, p) in self.mesh.nodes.iter().enumerate() {
            write!(s, "{:.17e},{:.17e}", p[0], p[1]).unwrap();
            for al in 0..self.m {
                write!(s, ",{:.17e}", self.values[k * self.m + al]).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Barycentric coordinates of `p` in the triangle `v`.
pub fn barycentric(v: [Point; 3], p: Point) -> [f64; 3] {
    let [a, b, c] = v;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (p[1] - a[1]) * (c[0] - a[0])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])) / det;
    [1.0 - l1 - l2, l1, l2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{parse_expr, Scope};
    use crate::domain::{triangulate, PolygonDomain};

    #[test]
    fn linear_functions_are_reproduced() {
        let d = PolygonDomain::preset("l-shape").unwrap();
        let mesh = Arc::new(triangulate(&d, 1.0 / 8.0).unwrap());
        let e = parse_expr("1+2*x1-3*x2", Scope::physical(2)).unwrap();
        let f = FemFunction::from_exprs(mesh.clone(), &[e]).unwrap();
        for t in 0..mesh.triangles.len() {
            let g = f.gradient_in(t, 0);
            assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 3.0).abs() < 1e-12);
        }
        let v = f.eval([0.77, 0.31]).unwrap();
        assert!((v[0] - (1.0 + 1.54 - 0.93)).abs() < 1e-12);
        assert!(f.eval([0.2, 0.9]).is_none());
    }

    #[test]
    fn csv_header_and_rows() {
        let d = PolygonDomain::preset("square").unwrap();
        let mesh = Arc::new(triangulate(&d, 0.5).unwrap());
        let f = FemFunction::zeros(mesh, 2);
        let csv = f.to_csv();
        assert!(csv.starts_with("x,y,u1,u2\n"));
        assert_eq!(csv.lines().count(), 10);
    }
}
