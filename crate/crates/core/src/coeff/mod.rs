//! Periodic coefficient tensors `A, V, B, c` and the scalar `lambda`.

pub mod expr;
pub mod grid;
pub mod presets;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use expr::{parse_expr, ScalarFieldExpr, Scope};
pub use grid::{pairwise_sum, pairwise_sum_mean, sample_field, CellGrid, PeriodicArray};
pub use presets::{preset, PRESETS};

use crate::error::{Error, Result};

/// Flat index helpers for the tensor layouts used throughout the crate.
///
/// `A` is stored as `a[i][j][alpha][beta]`, `V` and `B` as `v[i][alpha][beta]`
/// and `c` as `c[alpha][beta]`, all row-major and zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub dim: usize,
    pub m: usize,
}

impl Layout {
    #[inline]
    pub fn a(&self, i: usize, j: usize, al: usize, be: usize) -> usize {
        ((i * self.dim + j) * self.m + al) * self.m + be
    }
    #[inline]
    pub fn v(&self, i: usize, al: usize, be: usize) -> usize {
        (i * self.m + al) * self.m + be
    }
    #[inline]
    pub fn c(&self, al: usize, be: usize) -> usize {
        al * self.m + be
    }
    pub fn a_len(&self) -> usize {
        self.dim * self.dim * self.m * self.m
    }
    pub fn v_len(&self) -> usize {
        self.dim * self.m * self.m
    }
    pub fn c_len(&self) -> usize {
        self.m * self.m
    }
}

/// Coefficient values at one point, or constant (homogenized) tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffValues {
    pub a: Vec<f64>,
    pub v: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl CoeffValues {
    pub fn zeros(layout: Layout) -> Self {
        CoeffValues {
            a: vec![0.0; layout.a_len()],
            v: vec![0.0; layout.v_len()],
            b: vec![0.0; layout.v_len()],
            c: vec![0.0; layout.c_len()],
        }
    }

    /// Same role swap as [`CoefficientSet::adjoint`], for constant tensors.
    pub fn adjoint(&self, l: Layout) -> CoeffValues {
        let mut out = CoeffValues::zeros(l);
        for i in 0..l.dim {
            for al in 0..l.m {
                for be in 0..l.m {
                    for j in 0..l.dim {
                        out.a[l.a(i, j, al, be)] = self.a[l.a(j, i, be, al)];
                    }
                    out.v[l.v(i, al, be)] = self.b[l.v(i, be, al)];
                    out.b[l.v(i, al, be)] = self.v[l.v(i, be, al)];
                }
            }
        }
        for al in 0..l.m {
            for be in 0..l.m {
                out.c[l.c(al, be)] = self.c[l.c(be, al)];
            }
        }
        out
    }
}

/// The periodic coefficient set of `L_eps = -div(A grad + V) + B grad + c + lambda`.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub name: String,
    pub layout: Layout,
    pub a: Vec<ScalarFieldExpr>,
    pub v: Vec<ScalarFieldExpr>,
    pub b: Vec<ScalarFieldExpr>,
    pub c: Vec<ScalarFieldExpr>,
    pub lambda: f64,
    /// Configured bound on `V`, `B`, `c`; `None` accepts any observed value.
    pub kappa: Option<f64>,
    /// Declared symmetry `a_ij^{ab} = a_ji^{ba}`.
    pub symmetric_a: bool,
}

impl CoefficientSet {
    /// `A = identity`, everything else zero.
    pub fn identity(dim: usize, m: usize, lambda: f64) -> Self {
        let layout = Layout { dim, m };
        let s = Scope::cell(dim);
        let zero = ScalarFieldExpr::constant(0.0, s);
        let mut a = vec![zero.clone(); layout.a_len()];
        for i in 0..dim {
            for al in 0..m {
                a[layout.a(i, i, al, al)] = ScalarFieldExpr::constant(1.0, s);
            }
        }
        CoefficientSet {
            name: "identity".into(),
            layout,
            a,
            v: vec![zero.clone(); layout.v_len()],
            b: vec![zero.clone(); layout.v_len()],
            c: vec![zero; layout.c_len()],
            lambda,
            kappa: None,
            symmetric_a: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn m(&self) -> usize {
        self.layout.m
    }

    pub fn scope(&self) -> Scope {
        Scope::cell(self.layout.dim)
    }

    /// Evaluates every coefficient at the cell point `y` (reduced mod 1).
    pub fn eval_into(&self, y: &[f64], out: &mut CoeffValues) {
        for (o, e) in out.a.iter_mut().zip(&self.a) {
            *o = e.eval_periodic(y);
        }
        for (o, e) in out.v.iter_mut().zip(&self.v) {
            *o = e.eval_periodic(y);
        }
        for (o, e) in out.b.iter_mut().zip(&self.b) {
            *o = e.eval_periodic(y);
        }
        for (o, e) in out.c.iter_mut().zip(&self.c) {
            *o = e.eval_periodic(y);
        }
    }

    pub fn eval(&self, y: &[f64]) -> CoeffValues {
        let mut out = CoeffValues::zeros(self.layout);
        self.eval_into(y, &mut out);
        out
    }

    pub fn has_lower_order(&self) -> bool {
        self.v.iter().chain(&self.b).chain(&self.c).any(|e| !e.is_zero())
    }

    /// True when `V` and `B` vanish, so the bilinear form is symmetric
    /// whenever `A` and `c` are.
    pub fn first_order_free(&self) -> bool {
        self.v.iter().chain(&self.b).all(|e| e.is_zero())
    }

    /// Samples every field on `grid`.
    pub fn sample(&self, grid: CellGrid) -> Result<SampledCoefficients> {
        if grid.dim != self.dim() {
            return Err(Error::invalid("grid dimension does not match coefficients"));
        }
        let s = |v: &[ScalarFieldExpr]| -> Result<Vec<PeriodicArray>> {
            v.iter().map(|e| sample_field(e, grid)).collect()
        };
        Ok(SampledCoefficients {
            layout: self.layout,
            grid,
            a: s(&self.a)?,
            v: s(&self.v)?,
            b: s(&self.b)?,
            c: s(&self.c)?,
        })
    }

    /// Coefficients of the formal adjoint `L*`: `A*` has entries
    /// `a_ji^{ba}`, the divergence-form lower term is `B` transposed in the
    /// component indices, the first-order term is `V` transposed, and
    /// `c* = c^T`.
    pub fn adjoint(&self) -> CoefficientSet {
        let l = self.layout;
        let (d, m) = (l.dim, l.m);
        let mut a = self.a.clone();
        let mut v = self.v.clone();
        let mut b = self.b.clone();
        let mut c = self.c.clone();
        for i in 0..d {
            for j in 0..d {
                for al in 0..m {
                    for be in 0..m {
                        a[l.a(i, j, al, be)] = self.a[l.a(j, i, be, al)].clone();
                    }
                }
            }
            for al in 0..m {
                for be in 0..m {
                    v[l.v(i, al, be)] = self.b[l.v(i, be, al)].clone();
                    b[l.v(i, al, be)] = self.v[l.v(i, be, al)].clone();
                }
            }
        }
        for al in 0..m {
            for be in 0..m {
                c[l.c(al, be)] = self.c[l.c(be, al)].clone();
            }
        }
        CoefficientSet {
            name: format!("{}*", self.name),
            layout: l,
            a,
            v,
            b,
            c,
            lambda: self.lambda,
            kappa: self.kappa,
            symmetric_a: self.symmetric_a,
        }
    }

    /// Checks ellipticity, boundedness and declared symmetry on the sample
    /// grid (and its midpoints when `with_midpoints`).
    pub fn validate(&self, grid: CellGrid, with_midpoints: bool) -> Result<ValidationReport> {
        let g = if with_midpoints { grid.refined() } else { grid };
        let sampled = self.sample(g)?;
        validate_sampled(&sampled, self.kappa, self.symmetric_a)
    }
}

/// Coefficient fields sampled on a cell grid.
#[derive(Debug, Clone)]
pub struct SampledCoefficients {
    pub layout: Layout,
    pub grid: CellGrid,
    pub a: Vec<PeriodicArray>,
    pub v: Vec<PeriodicArray>,
    pub b: Vec<PeriodicArray>,
    pub c: Vec<PeriodicArray>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub mu_observed: f64,
    /// Largest eigenvalue of the symmetric part of `A` over the samples.
    pub upper_observed: f64,
    pub kappa_observed: f64,
    pub symmetric_a_observed: bool,
    /// Per-field maxima of `|V|`, `|B|`, `|c|`.
    pub detail: BTreeMap<String, f64>,
}

fn validate_sampled(
    s: &SampledCoefficients,
    kappa: Option<f64>,
    declared_symmetric: bool,
) -> Result<ValidationReport> {
    let l = s.layout;
    let (d, m) = (l.dim, l.m);
    let md = d * m;
    let mut mu = f64::INFINITY;
    let mut upper = f64::NEG_INFINITY;
    let mut worst_point = vec![];
    let mut symmetric = true;
    let mut scale = 0.0f64;
    for arr in &s.a {
        scale = scale.max(arr.max_abs());
    }
    let sym_tol = 1e-13 * scale.max(1.0);
    let mut mat = DMatrix::<f64>::zeros(md, md);
    for p in 0..s.grid.len() {
        for i in 0..d {
            for j in 0..d {
                for al in 0..m {
                    for be in 0..m {
                        let x = s.a[l.a(i, j, al, be)].data[p];
                        let y = s.a[l.a(j, i, be, al)].data[p];
                        if (x - y).abs() > sym_tol {
                            symmetric = false;
                        }
                        mat[(i * m + al, j * m + be)] = 0.5 * (x + y);
                    }
                }
            }
        }
        let eig = SymmetricEigen::new(mat.clone());
        let lo = eig.eigenvalues.min();
        let hi = eig.eigenvalues.max();
        if lo < mu {
            mu = lo;
            worst_point = s.grid.point(p)[..d].to_vec();
        }
        upper = upper.max(hi);
    }
    let mut detail = BTreeMap::new();
    let fmax = |v: &[PeriodicArray]| v.iter().fold(0.0f64, |m, a| m.max(a.max_abs()));
    detail.insert("V".to_string(), fmax(&s.v));
    detail.insert("B".to_string(), fmax(&s.b));
    detail.insert("c".to_string(), fmax(&s.c));
    let kappa_observed = detail.values().fold(0.0f64, |m, &v| m.max(v));
    if mu <= 0.0 {
        return Err(Error::Ellipticity {
            min_eig: mu,
            point: worst_point,
        });
    }
    if let Some(k) = kappa {
        if kappa_observed > k {
            return Err(Error::Boundedness {
                observed: kappa_observed,
                kappa: k,
            });
        }
    }
    if declared_symmetric && !symmetric {
        return Err(Error::invalid("A declared symmetric but a_ij^{ab} != a_ji^{ba} at a sample point"));
    }
    Ok(ValidationReport {
        mu_observed: mu,
        upper_observed: upper,
        kappa_observed,
        symmetric_a_observed: symmetric,
        detail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_entry(c: &mut CoefficientSet, i: usize, j: usize, src: &str) {
        let idx = c.layout.a(i, j, 0, 0);
        c.a[idx] = parse_expr(src, Scope::cell(2)).unwrap();
    }

    #[test]
    fn identity_validates() {
        let c = CoefficientSet::identity(2, 1, 0.0);
        let r = c.validate(CellGrid::new(16, 2).unwrap(), false).unwrap();
        assert!((r.mu_observed - 1.0).abs() < 1e-14);
        assert_eq!(r.kappa_observed, 0.0);
        assert!(r.symmetric_a_observed);
    }

    #[test]
    fn laminate_mu_is_one() {
        let mut c = CoefficientSet::identity(2, 1, 0.0);
        set_entry(&mut c, 0, 0, "2+sin(2*pi*y1)");
        set_entry(&mut c, 1, 1, "2+sin(2*pi*y1)");
        let r = c.validate(CellGrid::new(16, 2).unwrap(), false).unwrap();
        assert!((r.mu_observed - 1.0).abs() < 1e-14, "{}", r.mu_observed);
        assert!((r.upper_observed - 3.0).abs() < 1e-14);
    }

    #[test]
    fn sign_changing_entry_is_not_elliptic() {
        let mut c = CoefficientSet::identity(2, 1, 0.0);
        set_entry(&mut c, 0, 0, "sin(2*pi*y1)");
        assert!(matches!(
            c.validate(CellGrid::new(16, 2).unwrap(), false),
            Err(Error::Ellipticity { .. })
        ));
    }

    #[test]
    fn boundedness_against_configured_kappa() {
        let mut c = CoefficientSet::identity(2, 1, 0.0);
        c.v[0] = parse_expr("2*cos(2*pi*y2)", Scope::cell(2)).unwrap();
        c.kappa = Some(1.0);
        assert!(matches!(
            c.validate(CellGrid::new(16, 2).unwrap(), false),
            Err(Error::Boundedness { .. })
        ));
        c.kappa = Some(2.5);
        let r = c.validate(CellGrid::new(16, 2).unwrap(), false).unwrap();
        assert!((r.kappa_observed - 2.0).abs() < 1e-14);
        assert_eq!(r.detail["V"], r.kappa_observed);
    }

    #[test]
    fn scaling_a_scales_mu() {
        let base = presets::preset("smooth-trig", 0).unwrap();
        let g = CellGrid::new(16, 2).unwrap();
        let mu = base.validate(g, false).unwrap().mu_observed;
        let mut scaled = base.clone();
        for e in scaled.a.iter_mut() {
            *e = parse_expr(&format!("3*({e})"), Scope::cell(2)).unwrap();
        }
        let mu3 = scaled.validate(g, false).unwrap().mu_observed;
        assert!((mu3 - 3.0 * mu).abs() < 1e-12 * mu3);
    }

    #[test]
    fn adjoint_swaps_roles() {
        let mut c = CoefficientSet::identity(2, 1, 1.0);
        c.v[0] = ScalarFieldExpr::constant(1.0, Scope::cell(2));
        let adj = c.adjoint();
        assert_eq!(adj.v[0].as_constant(), Some(0.0));
        assert_eq!(adj.b[0].as_constant(), Some(1.0));
        assert_eq!(adj.lambda, 1.0);
        // symmetric scalar A with no lower-order terms is self-adjoint
        let lam = presets::preset("laminate", 0).unwrap();
        let adj = lam.adjoint();
        assert_eq!(adj.a, lam.a);
        assert_eq!(adj.v, lam.v);
        assert_eq!(adj.b, lam.b);
        assert_eq!(adj.c, lam.c);
    }

    #[test]
    fn adjoint_transposes_c_for_systems() {
        let c = presets::preset("coupled", 0).unwrap();
        let l = c.layout;
        let adj = c.adjoint();
        assert_eq!(adj.c[l.c(0, 1)], c.c[l.c(1, 0)]);
        assert_eq!(adj.c[l.c(1, 0)], c.c[l.c(0, 1)]);
        assert_ne!(c.c[l.c(0, 1)], c.c[l.c(1, 0)]);
        // adjoint of adjoint is the original
        let back = adj.adjoint();
        assert_eq!(back.a, c.a);
        assert_eq!(back.v, c.v);
        assert_eq!(back.b, c.b);
        assert_eq!(back.c, c.c);
    }
}
