//! The corrected approximant `w_eps` and the smoothed fields it is built from.

use serde::{Deserialize, Serialize};

use super::sampler::PackedCell;
use crate::cell::CellData;
use crate::coeff::CoefficientSet;
use crate::domain::{Point, PolygonDomain};
use crate::error::{Error, Result};
use crate::fem::function::bary_point;
use crate::fem::quadrature::TriangleRule;
use crate::fem::FemFunction;
use crate::smoothing::{sample_mesh, smooth, smooth_gradient, GridFunction, Support};

/// Which smoothed fields enter `w_eps`: `phi_0 = S^n(psi_{r} u_0)` and
/// `phi_k = S^n(psi_{r} d_k u_0)` with `r = cutoff * eps` (no cutoff when
/// `cutoff` is `None`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub smoothings: u8,
    pub cutoff: Option<f64>,
}

impl Variant {
    /// `S_eps(psi_{4 eps} .)`, the choice behind the `H^1` estimate.
    pub const S_ONCE: Variant = Variant {
        smoothings: 1,
        cutoff: Some(4.0),
    };
    /// `S_eps^2(psi_{2 eps} .)`.
    pub const S_TWICE: Variant = Variant {
        smoothings: 2,
        cutoff: Some(2.0),
    };
    /// `S_eps(psi_{10 eps} .)`, used for the adjoint approximant.
    pub const ADJOINT_ONCE: Variant = Variant {
        smoothings: 1,
        cutoff: Some(10.0),
    };
    /// `S_eps^2(psi_{20 eps} .)`.
    pub const ADJOINT_TWICE: Variant = Variant {
        smoothings: 2,
        cutoff: Some(20.0),
    };
    /// `S_eps(psi_eps .)`: the shallowest cutoff that keeps `phi` zero on
    /// the boundary.
    pub const SHALLOW: Variant = Variant {
        smoothings: 1,
        cutoff: Some(1.0),
    };
    /// Smoothing of the zero extension, without a cutoff.
    pub const UNCUT: Variant = Variant {
        smoothings: 1,
        cutoff: None,
    };

    pub fn label(&self) -> String {
        match self.cutoff {
            Some(c) => format!("S{}-psi{}", self.smoothings, c),
            None => format!("S{}-uncut", self.smoothings),
        }
    }

    /// Inverse of [`Variant::label`]: `S<n>-psi<c>` or `S<n>-uncut`.
    pub fn parse(label: &str) -> Result<Variant> {
        let bad = || Error::invalid(format!("bad variant `{label}` (expected e.g. S1-psi4 or S1-uncut)"));
        let rest = label.strip_prefix('S').ok_or_else(bad)?;
        let (n, cut) = rest.split_once('-').ok_or_else(bad)?;
        let smoothings: u8 = n.parse().map_err(|_| bad())?;
        if !(1..=2).contains(&smoothings) {
            return Err(bad());
        }
        let cutoff = match cut {
            "uncut" => None,
            c => {
                let r: f64 = c.strip_prefix("psi").ok_or_else(bad)?.parse().map_err(|_| bad())?;
                if !(r > 0.0 && r.is_finite()) {
                    return Err(bad());
                }
                Some(r)
            }
        };
        Ok(Variant { smoothings, cutoff })
    }

    /// Depth outside of which every `phi` vanishes, in units of `eps`.
    pub fn support_depth(&self) -> Option<f64> {
        self.cutoff.map(|c| c - 0.5 * self.smoothings as f64)
    }
}

/// `u_eps`, `u_0`, the smoothed `phi` fields and the nodal `w_eps`.
pub struct TwoScaleState<'a> {
    pub cell: &'a CellData,
    pub coeffs: &'a CoefficientSet,
    pub domain: &'a PolygonDomain,
    pub u_eps: &'a FemFunction,
    pub u0: &'a FemFunction,
    pub epsilon: f64,
    pub variant: Variant,
    pub packed: PackedCell,
    /// `phi_k^gamma` at component `k * m + gamma`.
    pub phi: GridFunction,
    /// `d_j phi_k^gamma` at component `(k * m + gamma) * 2 + j`.
    pub grad_phi: GridFunction,
    pub w: FemFunction,
}

/// Values of the smoothed fields at one point.
pub struct PhiAt {
    pub phi: Vec<f64>,
    pub grad: Vec<f64>,
}

impl<'a> TwoScaleState<'a> {
    pub fn m(&self) -> usize {
        self.u0.m
    }

    pub fn phi_at(&self, p: Point, out: &mut PhiAt) {
        for (c, o) in out.phi.iter_mut().enumerate() {
            *o = self.phi.sample(p, c);
        }
        for (c, o) in out.grad.iter_mut().enumerate() {
            *o = self.grad_phi.sample(p, c);
        }
    }

    pub fn phi_buffer(&self) -> PhiAt {
        PhiAt {
            phi: vec![0.0; self.phi.m],
            grad: vec![0.0; self.grad_phi.m],
        }
    }

    /// Largest `|phi|` at grid points shallower than the claimed support.
    pub fn support_leak(&self) -> f64 {
        let Some(depth) = self.variant.support_depth() else {
            return 0.0;
        };
        let r = depth * self.epsilon;
        let mut leak = 0.0f64;
        for j in 0..self.phi.ny {
            for i in 0..self.phi.nx {
                if self.domain.distance(self.phi.point(i, j)) < r - 1e-12 {
                    for c in 0..self.phi.m {
                        leak = leak.max(self.phi.get(i, j, c).abs());
                    }
                }
            }
        }
        leak
    }
}

/// Builds `phi` and `w_eps = u_eps - u_0 - eps sum_k chi_k(x/eps) phi_k`
/// (nodal) for the given correctors. Passing the adjoint cell data and
/// adjoint solutions yields the adjoint approximants.
pub fn build_w<'a>(
    u_eps: &'a FemFunction,
    u0: &'a FemFunction,
    cell: &'a CellData,
    coeffs: &'a CoefficientSet,
    domain: &'a PolygonDomain,
    epsilon: f64,
    variant: Variant,
) -> Result<TwoScaleState<'a>> {
    if !std::sync::Arc::ptr_eq(&u_eps.mesh, &u0.mesh) && u_eps.mesh.nodes != u0.mesh.nodes {
        return Err(Error::invalid("u_eps and u_0 live on different meshes"));
    }
    let mesh = &u0.mesh;
    crate::fem::check_resolution(epsilon, mesh.h)?;
    if !(1..=2).contains(&variant.smoothings) {
        return Err(Error::invalid(format!("{} smoothings are not supported", variant.smoothings)));
    }
    let (d, m) = (cell.dim(), cell.m());
    if m != u0.m || m != u_eps.m {
        return Err(Error::invalid("component counts of the solutions and the cell data differ"));
    }
    let packed = PackedCell::new(cell)?;
    let nphi = m * (d + 1);
    let s = epsilon / 16.0;
    let f = sample_mesh(mesh, domain, s, nphi, Support::Domain, |t, l, p, out| {
        let psi = variant.cutoff.map_or(1.0, |c| domain.cutoff(c * epsilon, p));
        if psi == 0.0 {
            return;
        }
        for ga in 0..m {
            out[ga] = psi * u0.value_in(t, l, ga);
            let g = u0.gradient_in(t, ga);
            for k in 1..=d {
                out[k * m + ga] = psi * g[k - 1];
            }
        }
    })?;
    let (phi, grad_phi) = if variant.smoothings == 1 {
        (smooth(&f, epsilon)?, smooth_gradient(&f, epsilon)?)
    } else {
        let once = smooth(&f, epsilon)?;
        (smooth(&once, epsilon)?, smooth_gradient(&once, epsilon)?)
    };
    let mut w = u_eps.sub(u0);
    let mut buf = vec![0.0; packed.stride()];
    for (node, p) in mesh.nodes.iter().enumerate() {
        packed.eval([p[0] / epsilon, p[1] / epsilon], &mut buf);
        for be in 0..m {
            let mut corr = 0.0;
            for k in 0..=d {
                for ga in 0..m {
                    corr += buf[packed.chi(k, be, ga)] * phi.sample(*p, k * m + ga);
                }
            }
            w.values[node * m + be] -= epsilon * corr;
        }
    }
    Ok(TwoScaleState {
        cell,
        coeffs,
        domain,
        u_eps,
        u0,
        epsilon,
        variant,
        packed,
        phi,
        grad_phi,
        w,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WNorms {
    pub l2: f64,
    /// `|w|_{H^1}` with the corrector gradient taken from the cell fields.
    pub h1: f64,
    /// `|w|_{H^1}` of the nodal interpolant.
    pub h1_nodal: f64,
    /// `|u_eps - u_0|_{H^1}` for comparison.
    pub h1_plain: f64,
}

/// Norms of `w_eps` by element quadrature. The gradient of the corrector
/// term is `(grad_y chi_k)(x/eps) phi_k + eps chi_k(x/eps) grad phi_k`.
pub fn w_norms(st: &TwoScaleState) -> Result<WNorms> {
    let mesh = &st.u0.mesh;
    let (d, m, eps) = (st.cell.dim(), st.m(), st.epsilon);
    let rule = TriangleRule::order4();
    let pk = &st.packed;
    let sums = chunked_sum(mesh.triangles.len(), 4, |range, acc| {
        let mut buf = vec![0.0; pk.stride()];
        let mut ph = st.phi_buffer();
        for t in range {
            let v = mesh.vertices(t);
            let area = mesh.area(t);
            for (l, wq) in rule.points.iter().zip(&rule.weights) {
                let x = bary_point(&v, l);
                pk.eval([x[0] / eps, x[1] / eps], &mut buf);
                st.phi_at(x, &mut ph);
                let wt = wq * area;
                for be in 0..m {
                    let gu = st.u_eps.gradient_in(t, be);
                    let g0 = st.u0.gradient_in(t, be);
                    let gw = st.w.gradient_in(t, be);
                    let mut val = st.u_eps.value_in(t, l, be) - st.u0.value_in(t, l, be);
                    let mut gc = [0.0; 2];
                    for k in 0..=d {
                        for ga in 0..m {
                            let c = k * m + ga;
                            val -= eps * buf[pk.chi(k, be, ga)] * ph.phi[c];
                            for j in 0..2 {
                                gc[j] += buf[pk.chi_grad(k, j, be, ga)] * ph.phi[c]
                                    + eps * buf[pk.chi(k, be, ga)] * ph.grad[c * 2 + j];
                            }
                        }
                    }
                    acc[0] += wt * val * val;
                    for j in 0..2 {
                        acc[1] += wt * (gu[j] - g0[j] - gc[j]).powi(2);
                        acc[2] += wt * gw[j] * gw[j];
                        acc[3] += wt * (gu[j] - g0[j]).powi(2);
                    }
                }
            }
        }
    });
    let l2 = sums[0].sqrt();
    let plain_l2 = crate::fem::norm(&st.u_eps.sub(st.u0), None, crate::fem::NormKind::L2)?;
    Ok(WNorms {
        l2,
        h1: (sums[0] + sums[1]).sqrt(),
        h1_nodal: (crate::fem::norm(&st.w, None, crate::fem::NormKind::L2)?.powi(2) + sums[2]).sqrt(),
        h1_plain: (plain_l2 * plain_l2 + sums[3]).sqrt(),
    })
}

/// Sums `n_acc` accumulators over `0..n` in fixed chunks, in parallel but
/// with a run-independent summation order.
pub(crate) fn chunked_sum(
    n: usize,
    n_acc: usize,
    f: impl Fn(std::ops::Range<usize>, &mut [f64]) + Sync,
) -> Vec<f64> {
    use rayon::prelude::*;
    const CHUNK: usize = 2048;
    let parts: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; n_acc];
            f(c * CHUNK..((c + 1) * CHUNK).min(n), &mut acc);
            acc
        })
        .collect();
    let mut out = vec![0.0; n_acc];
    for p in parts {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}
