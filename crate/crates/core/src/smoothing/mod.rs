//! The smoothing operator `S_eps f = f * zeta_eps` on zero-extended grids,
//! and checks of its plain and `delta`-weighted bounds.

use std::fmt::Write as _;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coeff::{CellGrid, ScalarFieldExpr};
use crate::domain::{Point, PolygonDomain, TriMesh};
use crate::error::{Error, Result};
use crate::fem::function::barycentric;
use crate::fem::FemFunction;

/// `zeta(x) = C exp(-1 / (1 - 4|x|^2))` on `B(0, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    pub c: f64,
}

/// `int_0^1 exp(-1/u) du` by composite Gauss-Legendre.
fn bump_integral() -> f64 {
    const NODES: [(f64, f64); 5] = [
        (0.0, 0.568_888_888_888_888_9),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let n = 2000;
    let hw = 0.5 / n as f64;
    let mut s = 0.0;
    for k in 0..n {
        let mid = (k as f64 + 0.5) / n as f64;
        for (x, w) in NODES {
            let u = mid + hw * x;
            s += w * hw * (-1.0 / u).exp();
        }
    }
    s
}

impl Mollifier {
    /// Normalized so that `int zeta = 1`: with `t = 4 rho^2` the radial
    /// integral becomes `(pi / 4) int_0^1 exp(-1/(1-t)) dt`.
    pub fn new() -> Self {
        static C: OnceLock<f64> = OnceLock::new();
        let c = *C.get_or_init(|| 4.0 / (std::f64::consts::PI * bump_integral()));
        Mollifier { c }
    }

    #[inline]
    pub fn eval(&self, x: Point) -> f64 {
        let r2 = 4.0 * (x[0] * x[0] + x[1] * x[1]);
        if r2 >= 1.0 {
            0.0
        } else {
            self.c * (-1.0 / (1.0 - r2)).exp()
        }
    }

    #[inline]
    pub fn gradient(&self, x: Point) -> [f64; 2] {
        let r2 = 4.0 * (x[0] * x[0] + x[1] * x[1]);
        if r2 >= 1.0 {
            return [0.0; 2];
        }
        let z = self.c * (-1.0 / (1.0 - r2)).exp();
        let f = -8.0 * z / ((1.0 - r2) * (1.0 - r2));
        [f * x[0], f * x[1]]
    }
}

impl Default for Mollifier {
    fn default() -> Self {
        Self::new()
    }
}

/// Samples on the points `origin + (i, j) s`, `0 <= i < nx`, `0 <= j < ny`,
/// stored `(j * nx + i) * m + alpha`; zero outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub origin: Point,
    pub s: f64,
    pub nx: usize,
    pub ny: usize,
    pub m: usize,
    pub data: Vec<f64>,
    /// The samples are a zero extension from the domain.
    pub zero_extended: bool,
}

/// Where [`to_grid`] keeps values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Support {
    Domain,
    /// `Sigma_r`, the points with `delta > r`.
    Sigma(f64),
}

impl GridFunction {
    /// Grid of spacing `<= s_max` covering the domain's bounding box.
    pub fn covering(domain: &PolygonDomain, s_max: f64, m: usize) -> Result<Self> {
        if !(s_max > 0.0) {
            return Err(Error::invalid(format!("grid spacing must be positive, got {s_max}")));
        }
        let (lo, hi) = domain.bbox();
        let nxc = ((hi[0] - lo[0]) / s_max - 1e-9).ceil().max(1.0) as usize;
        let s = (hi[0] - lo[0]) / nxc as f64;
        let nyc = ((hi[1] - lo[1]) / s - 1e-9).ceil().max(1.0) as usize;
        let (nx, ny) = (nxc + 1, nyc + 1);
        if (nx * ny * m) as f64 > 2e8 {
            return Err(Error::Resource(format!("smoothing grid of {nx}x{ny} points is too large")));
        }
        Ok(GridFunction {
            origin: lo,
            s,
            nx,
            ny,
            m,
            data: vec![0.0; nx * ny * m],
            zero_extended: true,
        })
    }

    pub fn zeros_like(&self, m: usize) -> Self {
        GridFunction {
            m,
            data: vec![0.0; self.nx * self.ny * m],
            ..*self
        }
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> Point {
        [self.origin[0] + i as f64 * self.s, self.origin[1] + j as f64 * self.s]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, al: usize) -> f64 {
        self.data[(j * self.nx + i) * self.m + al]
    }

    /// Fills every point from `f(point, out)`, in parallel over rows.
    pub fn fill(&mut self, f: impl Fn(Point, &mut [f64]) + Sync) {
        let (nx, m, s, o) = (self.nx, self.m, self.s, self.origin);
        self.data.par_chunks_mut(nx * m).enumerate().for_each(|(j, row)| {
            for i in 0..nx {
                f([o[0] + i as f64 * s, o[1] + j as f64 * s], &mut row[i * m..(i + 1) * m]);
            }
        });
    }

    /// Bilinear interpolation of component `al`; zero outside the grid.
    pub fn sample(&self, p: Point, al: usize) -> f64 {
        let fx = (p[0] - self.origin[0]) / self.s;
        let fy = (p[1] - self.origin[1]) / self.s;
        if fx < -1e-9 || fy < -1e-9 || fx > (self.nx - 1) as f64 + 1e-9 || fy > (self.ny - 1) as f64 + 1e-9 {
            return 0.0;
        }
        let i = (fx.floor().max(0.0) as usize).min(self.nx.saturating_sub(2));
        let j = (fy.floor().max(0.0) as usize).min(self.ny.saturating_sub(2));
        let (u, v) = ((fx - i as f64).clamp(0.0, 1.0), (fy - j as f64).clamp(0.0, 1.0));
        let g = |a: usize, b: usize| self.get((i + a).min(self.nx - 1), (j + b).min(self.ny - 1), al);
        (1.0 - u) * (1.0 - v) * g(0, 0) + u * (1.0 - v) * g(1, 0) + (1.0 - u) * v * g(0, 1) + u * v * g(1, 1)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `s^2 sum w(x) |f(x)|^2` over the points where `keep` holds.
    pub fn weighted_sq_sum(&self, keep: impl Fn(Point) -> Option<f64>) -> f64 {
        let mut total = 0.0;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let p = self.point(i, j);
                if let Some(w) = keep(p) {
                    let v: f64 = (0..self.m).map(|al| self.get(i, j, al).powi(2)).sum();
                    total += w * v;
                }
            }
        }
        total * self.s * self.s
    }

    /// Row `j` as CSV `x,y,f1,..,fm`.
    pub fn csv_slice(&self, j: usize) -> String {
        let mut out = String::from("x,y");
        for al in 0..self.m {
            write!(out, ",f{}", al + 1).unwrap();
        }
        out.push('\n');
        for i in 0..self.nx {
            let p = self.point(i, j);
            write!(out, "{:.17e},{:.17e}", p[0], p[1]).unwrap();
            for al in 0..self.m {
                write!(out, ",{:.17e}", self.get(i, j, al)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

fn in_support(domain: &PolygonDomain, support: Support, p: Point) -> bool {
    match support {
        Support::Domain => true,
        Support::Sigma(r) => domain.distance(p) > r,
    }
}

/// Samples `f(t, lambda, x)` of the mesh element containing each grid point,
/// zero outside the mesh and outside `support`.
pub fn sample_mesh(
    mesh: &TriMesh,
    domain: &PolygonDomain,
    s: f64,
    m: usize,
    support: Support,
    f: impl Fn(usize, &[f64; 3], Point, &mut [f64]) + Sync,
) -> Result<GridFunction> {
    let lat = mesh
        .lattice
        .as_ref()
        .ok_or_else(|| Error::Unsupported("grid sampling needs a lattice mesh".into()))?;
    let mut g = GridFunction::covering(domain, s, m)?;
    g.fill(|p, out| {
        if !in_support(domain, support, p) {
            return;
        }
        if let Some(t) = lat.locate(p) {
            let l = barycentric(mesh.vertices(t), p);
            f(t, &l, p, out);
        }
    });
    Ok(g)
}

/// Grid samples of a P1 field (exact for its nodal interpolation).
pub fn to_grid(u: &FemFunction, domain: &PolygonDomain, s: f64, support: Support) -> Result<GridFunction> {
    sample_mesh(&u.mesh, domain, s, u.m, support, |t, l, _, out| {
        for (al, o) in out.iter_mut().enumerate() {
            *o = u.value_in(t, l, al);
        }
    })
}

/// Grid samples of a function of the physical point, zero outside `Omega`
/// and outside `support`.
pub fn to_grid_fn(
    domain: &PolygonDomain,
    s: f64,
    m: usize,
    support: Support,
    f: impl Fn(Point, &mut [f64]) + Sync,
) -> Result<GridFunction> {
    let mut g = GridFunction::covering(domain, s, m)?;
    g.fill(|p, out| {
        if domain.distance(p) > 0.0 && in_support(domain, support, p) {
            f(p, out);
        }
    });
    Ok(g)
}

struct Stencil {
    offsets: Vec<(isize, isize)>,
    weights: Vec<f64>,
    grad: Vec<[f64; 2]>,
}

fn stencil(s: f64, eps: f64) -> Stencil {
    let z = Mollifier::new();
    let r = (0.5 * eps / s).ceil() as isize;
    let mut st = Stencil {
        offsets: vec![],
        weights: vec![],
        grad: vec![],
    };
    let scale = s * s / (eps * eps);
    for b in -r..=r {
        for a in -r..=r {
            let y = [a as f64 * s / eps, b as f64 * s / eps];
            let w = z.eval(y);
            if w > 0.0 {
                st.offsets.push((a, b));
                st.weights.push(w * scale);
                let g = z.gradient(y);
                st.grad.push([g[0] * scale / eps, g[1] * scale / eps]);
            }
        }
    }
    // trapezoidal sums of zeta_eps are accurate to far below the grid
    // error; renormalizing makes constants exact
    let total: f64 = st.weights.iter().sum();
    st.weights.iter_mut().for_each(|w| *w /= total);
    // likewise the gradient stencil must map affine f to its exact slope
    let moment: f64 = -st
        .offsets
        .iter()
        .zip(&st.grad)
        .map(|(&(a, _), g)| g[0] * a as f64 * s)
        .sum::<f64>();
    st.grad.iter_mut().for_each(|g| {
        g[0] /= moment;
        g[1] /= moment;
    });
    st
}

fn check_spacing(f: &GridFunction, eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("smoothing scale must be positive, got {eps}")));
    }
    if f.s > eps / 16.0 * (1.0 + 1e-9) {
        return Err(Error::invalid(format!(
            "grid spacing {} is coarser than eps/16 = {}",
            f.s,
            eps / 16.0
        )));
    }
    Ok(())
}

/// `out[oc](x) = sum_k w[k, wc] f[ic](x - offset_k)` with `(ic, wc) = comp(oc)`.
fn convolve(
    f: &GridFunction,
    offsets: &[(isize, isize)],
    weights: &[f64],
    out_m: usize,
    comp: impl Fn(usize) -> (usize, usize) + Sync,
) -> GridFunction {
    let mut out = f.zeros_like(out_m);
    let (nx, ny, m) = (f.nx as isize, f.ny as isize, f.m);
    let wcols = weights.len() / offsets.len();
    out.data.par_chunks_mut(f.nx * out_m).enumerate().for_each(|(j, row)| {
        let j = j as isize;
        for i in 0..nx {
            for (k, &(a, b)) in offsets.iter().enumerate() {
                let (si, sj) = (i - a, j - b);
                if si < 0 || sj < 0 || si >= nx || sj >= ny {
                    continue;
                }
                let base = (sj * nx + si) as usize * m;
                for oc in 0..out_m {
                    let (ic, wc) = comp(oc);
                    row[i as usize * out_m + oc] += weights[k * wcols + wc] * f.data[base + ic];
                }
            }
        }
    });
    out
}

/// `S_eps f` by direct summation over the mollifier stencil.
pub fn smooth(f: &GridFunction, eps: f64) -> Result<GridFunction> {
    check_spacing(f, eps)?;
    let st = stencil(f.s, eps);
    Ok(convolve(f, &st.offsets, &st.weights, f.m, |oc| (oc, 0)))
}

/// `grad S_eps f = f * grad zeta_eps`, components `alpha * 2 + i`.
pub fn smooth_gradient(f: &GridFunction, eps: f64) -> Result<GridFunction> {
    check_spacing(f, eps)?;
    let st = stencil(f.s, eps);
    let w: Vec<f64> = st.grad.iter().flat_map(|g| [g[0], g[1]]).collect();
    Ok(convolve(f, &st.offsets, &w, 2 * f.m, |oc| (oc / 2, oc % 2)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductBound {
    pub g: String,
    /// `1` for the `delta` weight, `-1` for `delta^-1`.
    pub power: i32,
    /// Observed `|g_eps S_eps f| / (|g|_{L^2(Y)} |f|)` in the weighted norms.
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedBoundsReport {
    pub epsilon: f64,
    pub samples: usize,
    /// `max S_eps(delta) / delta` over the sample points in `Sigma_2eps`.
    pub max_ratio_delta: f64,
    /// `max S_eps(delta^-1) / delta^-1`.
    pub max_ratio_inv_delta: f64,
    /// Both pointwise ratios are `<= 2` up to `1e-6`.
    pub pointwise_ok: bool,
    pub products: Vec<ProductBound>,
    /// Observed `|f - S_eps f|_{L^2(Sigma_2eps; delta)} / (eps |grad f|_{L^2(Sigma_eps; delta)})`.
    pub commutator_constant: f64,
    /// Largest `|S_eps f| / |f|` in sup norm.
    pub sup_contraction: f64,
    /// Observed `eps^{1/2} |S_eps f|_{L^2} / |f|_{L^{4/3}}`.
    pub lq_gain_constant: f64,
}

/// Default periodic factors for the product bounds.
pub fn default_factors() -> Vec<(String, ScalarFieldExpr)> {
    use crate::coeff::{parse_expr, Scope};
    ["1", "1+0.5*sin(2*pi*y1)*cos(2*pi*y2)", "2+sin(2*pi*y1)"]
        .iter()
        .map(|s| (s.to_string(), parse_expr(s, Scope::cell(2)).unwrap()))
        .collect()
}

/// Checks the pointwise and weighted bounds of `S_eps` on `domain`. The
/// test functions are `psi_2eps (1 + 0.5 sin(3 x1) cos(2 x2))`.
pub fn verify_weighted_bounds(
    domain: &PolygonDomain,
    eps: f64,
    factors: &[(String, ScalarFieldExpr)],
) -> Result<WeightedBoundsReport> {
    if !(eps > 0.0 && 2.0 * eps < domain.r00) {
        return Err(Error::invalid(format!("epsilon {eps} leaves Sigma_2eps empty")));
    }
    let s = eps / 16.0;
    let delta = |p: Point| domain.distance(p);
    let dg = to_grid_fn(domain, s, 1, Support::Domain, |p, o| o[0] = delta(p))?;
    let ig = to_grid_fn(domain, s, 1, Support::Sigma(eps), |p, o| o[0] = 1.0 / delta(p))?;
    let (sd, si) = (smooth(&dg, eps)?, smooth(&ig, eps)?);
    let (mut rd, mut ri, mut samples) = (0.0f64, 0.0f64, 0usize);
    for j in 0..dg.ny {
        for i in 0..dg.nx {
            let d = delta(dg.point(i, j));
            if d > 2.0 * eps {
                samples += 1;
                rd = rd.max(sd.get(i, j, 0) / d);
                ri = ri.max(si.get(i, j, 0) * d);
            }
        }
    }
    let bump = |p: Point| 1.0 + 0.5 * (3.0 * p[0]).sin() * (2.0 * p[1]).cos();
    let f2 = to_grid_fn(domain, s, 1, Support::Domain, |p, o| o[0] = domain.cutoff(2.0 * eps, p) * bump(p))?;
    let sf2 = smooth(&f2, eps)?;
    let cell = CellGrid::new(64, 2)?;
    let mut products = vec![];
    for (name, g) in factors {
        let gl2 = (0..cell.len())
            .map(|k| {
                let y = cell.point(k);
                g.eval_periodic(&y[..2]).powi(2)
            })
            .sum::<f64>()
            / cell.len() as f64;
        let gl2 = gl2.sqrt();
        let mut prod = sf2.clone();
        for j in 0..prod.ny {
            for i in 0..prod.nx {
                let p = prod.point(i, j);
                prod.data[j * prod.nx + i] = g.eval_periodic(&[p[0] / eps, p[1] / eps]) * sf2.get(i, j, 0);
            }
        }
        for power in [1, -1] {
            let w = |p: Point| {
                let d = delta(p);
                (d > 2.0 * eps).then(|| if power == 1 { d } else { 1.0 / d })
            };
            let lhs = prod.weighted_sq_sum(w).sqrt();
            let rhs = f2.weighted_sq_sum(w).sqrt();
            products.push(ProductBound {
                g: name.clone(),
                power,
                constant: lhs / (gl2 * rhs),
            });
        }
    }
    let (f1, sf1) = (&f2, &sf2);
    let mut diff = f1.clone();
    for (d, v) in diff.data.iter_mut().zip(&sf1.data) {
        *d -= v;
    }
    let lhs = diff
        .weighted_sq_sum(|p| {
            let d = delta(p);
            (d > 2.0 * eps).then_some(d)
        })
        .sqrt();
    // central differences of the sampled f
    let mut grad_sq = 0.0;
    for j in 1..f1.ny - 1 {
        for i in 1..f1.nx - 1 {
            let d = delta(f1.point(i, j));
            if d > eps {
                let gx = (f1.get(i + 1, j, 0) - f1.get(i - 1, j, 0)) / (2.0 * s);
                let gy = (f1.get(i, j + 1, 0) - f1.get(i, j - 1, 0)) / (2.0 * s);
                grad_sq += d * (gx * gx + gy * gy);
            }
        }
    }
    let rhs = eps * (grad_sq * s * s).sqrt();
    let sup_contraction = sf1.max_abs() / f1.max_abs();
    let l43 = (f1.data.iter().map(|v| v.abs().powf(4.0 / 3.0)).sum::<f64>() * s * s).powf(0.75);
    let lq_gain_constant = eps.sqrt() * sf1.weighted_sq_sum(|_| Some(1.0)).sqrt() / l43;
    Ok(WeightedBoundsReport {
        epsilon: eps,
        samples,
        max_ratio_delta: rd,
        max_ratio_inv_delta: ri,
        pointwise_ok: rd <= 2.0 + 1e-6 && ri <= 2.0 + 1e-6,
        products,
        commutator_constant: lhs / rhs,
        sup_contraction,
        lq_gain_constant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_matches_exponential_integral() {
        // int_0^1 exp(-1/u) du = e^-1 - E1(1)
        let e1 = 0.219_383_934_395_520_3;
        assert!((bump_integral() - ((-1.0f64).exp() - e1)).abs() < 1e-13);
        // 2D trapezoidal sums of a flat bump converge spectrally
        let z = Mollifier::new();
        let n = 400;
        let hs = 1.0 / n as f64;
        let mut s = 0.0;
        for a in 0..n {
            for b in 0..n {
                s += z.eval([a as f64 * hs - 0.5, b as f64 * hs - 0.5]) * hs * hs;
            }
        }
        assert!((s - 1.0).abs() < 1e-10, "{s}");
        assert!(z.eval([0.3, 0.1]) == z.eval([-0.3, -0.1]));
        assert_eq!(z.eval([0.5, 0.0]), 0.0);
    }

    fn square_grid(eps: f64, f: impl Fn(Point) -> f64 + Sync) -> (PolygonDomain, GridFunction) {
        let d = PolygonDomain::preset("square").unwrap();
        let g = to_grid_fn(&d, eps / 16.0, 1, Support::Domain, |p, o| o[0] = f(p)).unwrap();
        (d, g)
    }

    #[test]
    fn constants_and_affine_functions_are_kept_inside() {
        let eps = 1.0 / 16.0;
        let (d, g) = square_grid(eps, |p| 2.0 + 3.0 * p[0] - p[1]);
        let sg = smooth(&g, eps).unwrap();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let p = g.point(i, j);
                if d.distance(p) > eps / 2.0 + 1e-12 {
                    assert!((sg.get(i, j, 0) - g.get(i, j, 0)).abs() < 1e-12);
                }
            }
        }
        let mut c = g.clone();
        c.data.iter_mut().for_each(|v| *v = 1.5);
        let sc = smooth(&c, eps).unwrap();
        assert!((sc.get(c.nx / 2, c.ny / 2, 0) - 1.5).abs() < 1e-14);
        assert!(sg.max_abs() <= g.max_abs() + 1e-12);
    }

    #[test]
    fn support_is_dilated_by_half_eps() {
        let eps = 1.0 / 16.0;
        let d = PolygonDomain::preset("square").unwrap();
        let f = to_grid_fn(&d, eps / 16.0, 1, Support::Sigma(4.0 * eps), |_, o| o[0] = 1.0).unwrap();
        let sf = smooth(&f, eps).unwrap();
        for j in 0..f.ny {
            for i in 0..f.nx {
                if d.distance(f.point(i, j)) < 3.5 * eps - 1e-12 {
                    assert_eq!(sf.get(i, j, 0), 0.0);
                }
            }
        }
    }

    #[test]
    fn approximation_of_a_sine() {
        let eps = 1.0 / 16.0;
        let d = PolygonDomain::preset("square").unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        // a full-periodic grid avoids the zero extension at the box edges
        let f = to_grid_fn(&d, eps / 16.0, 1, Support::Domain, |p, o| o[0] = (tau * p[0]).sin()).unwrap();
        let sf = smooth(&f, eps).unwrap();
        let keep = |p: Point| (d.distance(p) > eps).then_some(1.0);
        let mut diff = f.clone();
        for (a, b) in diff.data.iter_mut().zip(&sf.data) {
            *a -= b;
        }
        let err = diff.weighted_sq_sum(keep).sqrt();
        // |grad f|_{L^2} = tau / sqrt(2) on the unit square
        let c = err / (eps * tau / 2f64.sqrt());
        assert!(c <= 1.0, "{c}");
    }

    #[test]
    fn gradient_of_smoothed_linear() {
        let eps = 1.0 / 8.0;
        let (d, g) = square_grid(eps, |p| 3.0 * p[0] - 2.0 * p[1]);
        let gg = smooth_gradient(&g, eps).unwrap();
        let (i, j) = (g.nx / 2, g.ny / 2);
        assert!(d.distance(g.point(i, j)) > eps);
        assert!((gg.get(i, j, 0) - 3.0).abs() < 1e-6, "{} {}", gg.get(i, j, 0), gg.get(i, j, 1));
        assert!((gg.get(i, j, 1) + 2.0).abs() < 1e-6);
    }

    #[test]
    fn sampling_respects_support_hint() {
        use crate::domain::triangulate;
        use std::sync::Arc;
        let d = PolygonDomain::preset("l-shape").unwrap();
        let mesh = Arc::new(triangulate(&d, 1.0 / 32.0).unwrap());
        let one = FemFunction::interpolate(mesh.clone(), 1, |_, o| o[0] = 1.0);
        let g = to_grid(&one, &d, 1.0 / 64.0, Support::Sigma(0.125)).unwrap();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let want = if d.distance(g.point(i, j)) > 0.125 { 1.0 } else { 0.0 };
                assert_eq!(g.get(i, j, 0), want);
            }
        }
        let lin = FemFunction::interpolate(mesh, 1, |p, o| o[0] = 2.0 * p[0] - p[1]);
        let g = to_grid(&lin, &d, 1.0 / 50.0, Support::Domain).unwrap();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let p = g.point(i, j);
                if d.distance(p) > 0.0 {
                    assert!((g.get(i, j, 0) - (2.0 * p[0] - p[1])).abs() < 1e-12);
                }
            }
        }
        // the removed quadrant is zero-extended
        assert_eq!(g.sample([0.25, 0.8], 0), 0.0);
    }

    #[test]
    fn coarse_grid_rejected() {
        let (_, g) = square_grid(0.25, |_| 1.0);
        assert!(smooth(&g, 0.125).is_err());
    }

    #[test]
    fn weighted_bounds_on_square() {
        let d = PolygonDomain::preset("square").unwrap();
        let r = verify_weighted_bounds(&d, 1.0 / 32.0, &default_factors()).unwrap();
        assert!(r.pointwise_ok, "{r:?}");
        assert!(r.max_ratio_delta <= 2.0);
        let unit = r.products.iter().find(|p| p.g == "1").unwrap();
        assert!(unit.constant <= 2.0);
        assert!(r.commutator_constant.is_finite() && r.commutator_constant > 0.0);
        assert!(r.sup_contraction <= 1.0 + 1e-12);
    }
}
