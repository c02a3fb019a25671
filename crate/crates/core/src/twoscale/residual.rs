//! The residual fields of `w_eps` and the weak and duality identities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::state::{chunked_sum, PhiAt, TwoScaleState};
use crate::coeff::{CoeffValues, ScalarFieldExpr};
use crate::domain::{Point, PolygonDomain, TriMesh};
use crate::error::{Error, Result};
use crate::fem::assemble::{assemble_matrix, Coefficients};
use crate::fem::function::bary_point;
use crate::fem::quadrature::{gauss_segment, TriangleRule};
use crate::fem::{BcKind, FemFunction};
use crate::linalg::krylov::dot;

/// The constituents and composites at one point; vector fields are stored
/// `alpha * d + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResidual {
    pub k: Vec<f64>,
    pub i: Vec<f64>,
    pub j: Vec<f64>,
    pub m: Vec<f64>,
    pub n: Vec<f64>,
    pub f: Vec<f64>,
    pub big_f: Vec<f64>,
}

impl PointResidual {
    fn zeros(m: usize, d: usize) -> Self {
        PointResidual {
            k: vec![0.0; m * d],
            i: vec![0.0; m * d],
            j: vec![0.0; m * d],
            m: vec![0.0; m],
            n: vec![0.0; m],
            f: vec![0.0; m * d],
            big_f: vec![0.0; m],
        }
    }
}

/// Per-thread buffers of the pointwise evaluation.
pub struct Scratch {
    cv: CoeffValues,
    cell: Vec<f64>,
    ph: PhiAt,
    chi_phi: Vec<f64>,
    chi_dphi: Vec<f64>,
    pub out: PointResidual,
}

impl<'a> TwoScaleState<'a> {
    pub fn scratch(&self) -> Scratch {
        let (d, m) = (self.cell.dim(), self.m());
        Scratch {
            cv: CoeffValues::zeros(self.coeffs.layout),
            cell: vec![0.0; self.packed.stride()],
            ph: self.phi_buffer(),
            chi_phi: vec![0.0; m],
            chi_dphi: vec![0.0; m * d],
            out: PointResidual::zeros(m, d),
        }
    }

    /// Evaluates `f~`, `F~` and their constituents at `x` in element `t`
    /// (barycentric `l`), into `sc.out`.
    pub fn residual_at(&self, t: usize, l: &[f64; 3], x: Point, sc: &mut Scratch) {
        let (d, m, eps) = (self.cell.dim(), self.m(), self.epsilon);
        let lay = self.coeffs.layout;
        let hats = &self.cell.hats;
        let pk = &self.packed;
        let y = [x[0] / eps, x[1] / eps];
        self.coeffs.eval_into(&y, &mut sc.cv);
        pk.eval(y, &mut sc.cell);
        self.phi_at(x, &mut sc.ph);
        let (cv, cell, phi, dphi) = (&sc.cv, &sc.cell, &sc.ph.phi, &sc.ph.grad);
        for be in 0..m {
            let (mut v, mut g) = (0.0, [0.0; 2]);
            for k in 0..=d {
                for ga in 0..m {
                    let c = cell[pk.chi(k, be, ga)];
                    v += c * phi[k * m + ga];
                    for j in 0..d {
                        g[j] += c * dphi[(k * m + ga) * 2 + j];
                    }
                }
            }
            sc.chi_phi[be] = v;
            sc.chi_dphi[be * d..(be + 1) * d].copy_from_slice(&g[..d]);
        }
        let out = &mut sc.out;
        for al in 0..m {
            for i in 0..d {
                let mut kk = 0.0;
                let mut jj = 0.0;
                for k in 0..=d {
                    for ga in 0..m {
                        kk += cell[pk.b(i, k, al, ga)] * phi[k * m + ga];
                        jj += cell[pk.theta_grad(k, i, al, ga)] * phi[k * m + ga];
                    }
                }
                let (mut ii, mut diff) = (0.0, 0.0);
                for be in 0..m {
                    let u0 = self.u0.value_in(t, l, be);
                    let gu0 = self.u0.gradient_in(t, be);
                    for j in 0..d {
                        let a = cv.a[lay.a(i, j, al, be)];
                        ii += a * sc.chi_dphi[be * d + j];
                        diff += (hats.a[lay.a(i, j, al, be)] - a) * (gu0[j] - phi[(j + 1) * m + be]);
                    }
                    let vv = cv.v[lay.v(i, al, be)];
                    ii += vv * sc.chi_phi[be];
                    diff += (hats.v[lay.v(i, al, be)] - vv) * (u0 - phi[be]);
                }
                out.k[al * d + i] = kk;
                out.i[al * d + i] = ii;
                out.j[al * d + i] = jj;
                out.f[al * d + i] = kk + diff - eps * (ii + jj);
            }
            let (mut mm, mut nn, mut diff) = (0.0, 0.0, 0.0);
            for k in 0..=d {
                for ga in 0..m {
                    for i in 0..d {
                        let mut coef = cell[pk.theta_grad(k, i, al, ga)];
                        for be in 0..m {
                            coef += cv.b[lay.v(i, al, be)] * cell[pk.chi(k, be, ga)];
                        }
                        mm += coef * dphi[(k * m + ga) * 2 + i];
                    }
                }
            }
            for be in 0..m {
                let c = cv.c[lay.c(al, be)];
                let shift = if al == be { self.coeffs.lambda } else { 0.0 };
                nn += (c + shift) * sc.chi_phi[be];
                let u0 = self.u0.value_in(t, l, be);
                let gu0 = self.u0.gradient_in(t, be);
                for i in 0..d {
                    diff += (hats.b[lay.v(i, al, be)] - cv.b[lay.v(i, al, be)]) * (gu0[i] - phi[(i + 1) * m + be]);
                }
                diff += (hats.c[lay.c(al, be)] - c) * (u0 - phi[be]);
            }
            out.m[al] = mm;
            out.n[al] = nn;
            out.big_f[al] = diff - eps * (mm + nn);
        }
    }

    /// `J` at `x` (no element needed).
    fn j_at(&self, x: Point, sc: &mut Scratch, out: &mut [f64]) {
        let (d, m, eps) = (self.cell.dim(), self.m(), self.epsilon);
        let pk = &self.packed;
        pk.eval([x[0] / eps, x[1] / eps], &mut sc.cell);
        self.phi_at(x, &mut sc.ph);
        for al in 0..m {
            for i in 0..d {
                let mut jj = 0.0;
                for k in 0..=d {
                    for ga in 0..m {
                        jj += sc.cell[pk.theta_grad(k, i, al, ga)] * sc.ph.phi[k * m + ga];
                    }
                }
                out[al * d + i] = jj;
            }
        }
    }
}

/// Every constituent at the order-4 quadrature points of every element.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualFields {
    pub points: Vec<Point>,
    /// Quadrature weights including the element area.
    pub weights: Vec<f64>,
    pub values: Vec<PointResidual>,
}

impl ResidualFields {
    /// `(|f~|_{L^2}, |F~|_{L^2})`.
    pub fn norms(&self) -> (f64, f64) {
        let mut s = (0.0, 0.0);
        for (w, v) in self.weights.iter().zip(&self.values) {
            s.0 += w * v.f.iter().map(|x| x * x).sum::<f64>();
            s.1 += w * v.big_f.iter().map(|x| x * x).sum::<f64>();
        }
        (s.0.sqrt(), s.1.sqrt())
    }
}

/// Evaluates the residual fields at all quadrature points. Memory grows
/// with the element count; the identity checks stream instead.
pub fn residual_fields(st: &TwoScaleState) -> ResidualFields {
    let mesh = &st.u0.mesh;
    let rule = TriangleRule::order4();
    let mut sc = st.scratch();
    let mut out = ResidualFields {
        points: vec![],
        weights: vec![],
        values: vec![],
    };
    for t in 0..mesh.triangles.len() {
        let v = mesh.vertices(t);
        let area = mesh.area(t);
        for (l, w) in rule.points.iter().zip(&rule.weights) {
            let x = bary_point(&v, l);
            st.residual_at(t, l, x, &mut sc);
            out.points.push(x);
            out.weights.push(w * area);
            out.values.push(sc.out.clone());
        }
    }
    out
}

/// Random smooth test functions `v = weight(x) sum c_pq trig(pi (p x1 + q x2))`,
/// with weight `delta` (vanishing on the boundary) or `1`.
pub fn test_functions(
    mesh: std::sync::Arc<TriMesh>,
    domain: &PolygonDomain,
    m: usize,
    count: usize,
    seed: u64,
    vanish: bool,
) -> Vec<FemFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let coef: Vec<[f64; 2]> = (0..9 * m).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            FemFunction::interpolate(mesh.clone(), m, |p, o| {
                let wt = if vanish { domain.distance(p) } else { 1.0 };
                for (al, oa) in o.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for pq in 0..9 {
                        let arg = std::f64::consts::PI * ((pq / 3) as f64 * p[0] + (pq % 3) as f64 * p[1]);
                        let c = coef[al * 9 + pq];
                        s += c[0] * arg.cos() + c[1] * arg.sin();
                    }
                    *oa = wt * s;
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakIdentityReport {
    pub preset: String,
    pub epsilon: f64,
    pub h: f64,
    pub variant: String,
    pub bc: BcKind,
    /// Per test function: `|B[w, v] - int f~ . grad v - int F~ v - bdry|`
    /// over `|v|_{H^1} max(|f~| + |F~|, |u_0|_{H^1})`.
    pub defects: Vec<f64>,
    pub max_defect: f64,
    pub f_l2: f64,
    pub big_f_l2: f64,
}

fn h1_norm(v: &FemFunction) -> f64 {
    let mesh = &v.mesh;
    let mut s = 0.0;
    for t in 0..mesh.triangles.len() {
        let area = mesh.area(t);
        for al in 0..v.m {
            let g = v.gradient_in(t, al);
            let c = [v.node_value(mesh.triangles[t][0] as usize, al), v.node_value(mesh.triangles[t][1] as usize, al), v.node_value(mesh.triangles[t][2] as usize, al)];
            // exact P1 mass on a triangle
            let sq = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2] + c[0] * c[1] + c[1] * c[2] + c[0] * c[2]) / 6.0;
            s += area * (g[0] * g[0] + g[1] * g[1] + sq);
        }
    }
    s.sqrt()
}

/// Streams `int f~ . grad v + F~ v` for every test, plus `|f~|^2, |F~|^2`.
fn residual_pairings(st: &TwoScaleState, tests: &[&FemFunction]) -> Vec<f64> {
    let mesh = &st.u0.mesh;
    let (d, m) = (st.cell.dim(), st.m());
    let rule = TriangleRule::order4();
    let nt = tests.len();
    chunked_sum(mesh.triangles.len(), nt + 2, |range, acc| {
        let mut sc = st.scratch();
        for t in range {
            let v = mesh.vertices(t);
            let area = mesh.area(t);
            for (l, wq) in rule.points.iter().zip(&rule.weights) {
                let x = bary_point(&v, l);
                st.residual_at(t, l, x, &mut sc);
                let w = wq * area;
                for (ti, tf) in tests.iter().enumerate() {
                    let mut s = 0.0;
                    for al in 0..m {
                        let g = tf.gradient_in(t, al);
                        for i in 0..d {
                            s += sc.out.f[al * d + i] * g[i];
                        }
                        s += sc.out.big_f[al] * tf.value_in(t, l, al);
                    }
                    acc[ti] += w * s;
                }
                acc[nt] += w * sc.out.f.iter().map(|x| x * x).sum::<f64>();
                acc[nt + 1] += w * sc.out.big_f.iter().map(|x| x * x).sum::<f64>();
            }
        }
    })
}

/// `eps int_{boundary} n . J v` for every test.
fn boundary_pairings(st: &TwoScaleState, tests: &[&FemFunction]) -> Vec<f64> {
    let mesh = &st.u0.mesh;
    let (d, m) = (st.cell.dim(), st.m());
    let mut sc = st.scratch();
    let mut jv = vec![0.0; m * d];
    let mut out = vec![0.0; tests.len()];
    for e in &mesh.boundary {
        let (a, b) = (mesh.nodes[e.nodes[0] as usize], mesh.nodes[e.nodes[1] as usize]);
        for (s, w) in gauss_segment(3) {
            let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
            st.j_at(x, &mut sc, &mut jv);
            for (ti, tf) in tests.iter().enumerate() {
                for al in 0..m {
                    let v = (1.0 - s) * tf.node_value(e.nodes[0] as usize, al) + s * tf.node_value(e.nodes[1] as usize, al);
                    let nj: f64 = (0..d).map(|i| e.normal[i] * jv[al * d + i]).sum();
                    out[ti] += st.epsilon * w * e.length * nj * v;
                }
            }
        }
    }
    out
}

fn vanishes_on_boundary(v: &FemFunction) -> bool {
    let on_b = v.mesh.boundary_nodes();
    let scale = v.values.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1e-300);
    on_b.iter()
        .enumerate()
        .filter(|(_, b)| **b)
        .all(|(n, _)| (0..v.m).all(|al| v.node_value(n, al).abs() <= 1e-12 * scale))
}

/// Tests `B_eps[w, v] = int f~ . grad v + int F~ v` (plus `eps int n . J v`
/// on the boundary for Neumann problems) for every test function.
pub fn check_weak_identity(st: &TwoScaleState, tests: &[FemFunction], bc: BcKind) -> Result<WeakIdentityReport> {
    let mesh = &st.u0.mesh;
    if bc == BcKind::Dirichlet && !tests.iter().all(vanishes_on_boundary) {
        return Err(Error::invalid("Dirichlet test functions must vanish on the boundary"));
    }
    let k = assemble_matrix(Coefficients::Periodic(st.coeffs), mesh, st.epsilon)?;
    let mut kw = vec![0.0; k.n_rows];
    k.matvec(&st.w.values, &mut kw);
    let refs: Vec<&FemFunction> = tests.iter().collect();
    let pair = residual_pairings(st, &refs);
    let nt = tests.len();
    let bdry = if bc == BcKind::Neumann {
        boundary_pairings(st, &refs)
    } else {
        vec![0.0; nt]
    };
    let (f_l2, big_f_l2) = (pair[nt].sqrt(), pair[nt + 1].sqrt());
    // the residuals vanish identically for constant coefficients; the size
    // of u_0 then sets the scale
    let scale = (f_l2 + big_f_l2).max(h1_norm(st.u0)).max(f64::MIN_POSITIVE);
    let defects: Vec<f64> = tests
        .iter()
        .enumerate()
        .map(|(ti, v)| {
            let lhs = dot(&v.values, &kw);
            (lhs - pair[ti] - bdry[ti]).abs() / (h1_norm(v).max(f64::MIN_POSITIVE) * scale)
        })
        .collect();
    Ok(WeakIdentityReport {
        preset: st.coeffs.name.clone(),
        epsilon: st.epsilon,
        h: mesh.h,
        variant: st.variant.label(),
        bc,
        max_defect: defects.iter().cloned().fold(0.0, f64::max),
        defects,
        f_l2,
        big_f_l2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    /// `int w_eps . Phi`.
    pub lhs: f64,
    /// `int f~ . grad phi_eps + int F~ . phi_eps`.
    pub rhs: f64,
    /// `|lhs - rhs| / max(|lhs| + |rhs|, 1e-6 int |u_0 Phi|)`.
    pub defect: f64,
}

/// Both sides of `int w Phi = int f~ . grad phi + int F~ phi` for the
/// Dirichlet-zero adjoint solution `phi_eps` with load `Phi`.
pub fn duality_pairing(st: &TwoScaleState, big_phi: &[ScalarFieldExpr], phi_eps: &FemFunction) -> Result<DualityReport> {
    let m = st.m();
    if big_phi.len() != m {
        return Err(Error::invalid(format!("Phi needs {m} components, got {}", big_phi.len())));
    }
    if !vanishes_on_boundary(phi_eps) {
        return Err(Error::invalid("the adjoint solution must vanish on the boundary"));
    }
    let mesh = &st.u0.mesh;
    let rule = TriangleRule::order4();
    let sums = chunked_sum(mesh.triangles.len(), 2, |range, acc| {
        for t in range {
            let v = mesh.vertices(t);
            let area = mesh.area(t);
            for (l, wq) in rule.points.iter().zip(&rule.weights) {
                let x = bary_point(&v, l);
                for (al, e) in big_phi.iter().enumerate() {
                    let p = e.eval(&x);
                    acc[0] += wq * area * st.w.value_in(t, l, al) * p;
                    acc[1] += wq * area * (st.u0.value_in(t, l, al) * p).abs();
                }
            }
        }
    });
    let lhs = sums[0];
    let rhs = residual_pairings(st, &[phi_eps])[0];
    // when w vanishes both sides are round-off; measure them against u_0
    let s = (lhs.abs() + rhs.abs()).max(1e-6 * sums[1]);
    Ok(DualityReport {
        lhs,
        rhs,
        defect: if s == 0.0 { 0.0 } else { (lhs - rhs).abs() / s },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBound {
    /// `|phi|_{L^2(layer 2eps)} + |grad u_0 - phi_vec| + |u_0 - phi_0| + eps |grad phi| + eps |phi|`.
    pub rhs: f64,
    /// `|w|_{H^1} / rhs`.
    pub constant: f64,
}

/// The computable right side of the energy estimate for `w_eps`, with all
/// periodic weights replaced by `1`, and the observed constant.
pub fn energy_bound(st: &TwoScaleState, w_h1: f64) -> EnergyBound {
    let mesh = &st.u0.mesh;
    let (d, m, eps) = (st.cell.dim(), st.m(), st.epsilon);
    let rule = TriangleRule::order4();
    let s = chunked_sum(mesh.triangles.len(), 5, |range, acc| {
        let mut ph = st.phi_buffer();
        for t in range {
            let v = mesh.vertices(t);
            let area = mesh.area(t);
            for (l, wq) in rule.points.iter().zip(&rule.weights) {
                let x = bary_point(&v, l);
                st.phi_at(x, &mut ph);
                let w = wq * area;
                let phi_sq: f64 = ph.phi.iter().map(|v| v * v).sum();
                if st.domain.distance(x) <= 2.0 * eps {
                    acc[0] += w * phi_sq;
                }
                for be in 0..m {
                    let g = st.u0.gradient_in(t, be);
                    for j in 0..d {
                        acc[1] += w * (g[j] - ph.phi[(j + 1) * m + be]).powi(2);
                    }
                    acc[2] += w * (st.u0.value_in(t, l, be) - ph.phi[be]).powi(2);
                }
                acc[3] += w * ph.grad.iter().map(|v| v * v).sum::<f64>();
                acc[4] += w * phi_sq;
            }
        }
    });
    let rhs = s[0].sqrt() + s[1].sqrt() + s[2].sqrt() + eps * (s[3].sqrt() + s[4].sqrt());
    EnergyBound {
        rhs,
        constant: if rhs > 0.0 { w_h1 / rhs } else { 0.0 },
    }
}

/// `|T + T'| / sum |terms|` where `T = sum int E_jik(x/eps) d_j phi_k d_i v`
/// and `T'` swaps `i` and `j` in `E`; zero for an antisymmetric `E`.
pub fn flux_antisymmetry(st: &TwoScaleState, v: &FemFunction) -> f64 {
    let mesh = &st.u0.mesh;
    let (d, m, eps) = (st.cell.dim(), st.m(), st.epsilon);
    let pk = &st.packed;
    let rule = TriangleRule::order4();
    let s = chunked_sum(mesh.triangles.len(), 2, |range, acc| {
        let mut buf = vec![0.0; pk.stride()];
        let mut ph = st.phi_buffer();
        for t in range {
            let vt = mesh.vertices(t);
            let area = mesh.area(t);
            for (l, wq) in rule.points.iter().zip(&rule.weights) {
                let x = bary_point(&vt, l);
                pk.eval([x[0] / eps, x[1] / eps], &mut buf);
                st.phi_at(x, &mut ph);
                let w = wq * area;
                for al in 0..m {
                    let gv = v.gradient_in(t, al);
                    for i in 0..d {
                        for j in 0..d {
                            for k in 0..=d {
                                for ga in 0..m {
                                    let dp = ph.grad[(k * m + ga) * 2 + j] * gv[i];
                                    let a = buf[pk.e(j, i, k, al, ga)] * dp;
                                    let b = buf[pk.e(i, j, k, al, ga)] * dp;
                                    acc[0] += w * (a + b);
                                    acc[1] += w * (a.abs() + b.abs());
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    if s[1] == 0.0 {
        0.0
    } else {
        s[0].abs() / s[1]
    }
}
