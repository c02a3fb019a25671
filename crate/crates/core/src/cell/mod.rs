//! Unit-cell problems: correctors, homogenized tensors, the auxiliary fields
//! `b`, `W`, `theta` and the antisymmetric flux corrector `E`.
//!
//! Corrector index `k` runs over `0..=d`: `k = 0` is the corrector driven by
//! `V`, `k >= 1` the one driven by column `k` of `A` (zero-based axis `k - 1`).

pub mod bundle;
pub mod spectral;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coeff::{pairwise_sum_mean, CellGrid, CoeffValues, CoefficientSet, Layout, SampledCoefficients};
use crate::error::{Error, Result};
use crate::linalg::krylov::{bicgstab, pcg, KrylovOptions, SolveStats};
pub use spectral::Spectral;

/// An `m x m` matrix of periodic fields, `comps[alpha * m + beta]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorField {
    pub m: usize,
    pub comps: Vec<Vec<f64>>,
}

impl TensorField {
    pub fn zeros(m: usize, len: usize) -> Self {
        TensorField {
            m,
            comps: vec![vec![0.0; len]; m * m],
        }
    }

    #[inline]
    pub fn get(&self, al: usize, be: usize) -> &[f64] {
        &self.comps[al * self.m + be]
    }

    #[inline]
    pub fn get_mut(&mut self, al: usize, be: usize) -> &mut Vec<f64> {
        &mut self.comps[al * self.m + be]
    }

    pub fn max_abs(&self) -> f64 {
        self.comps
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest component-wise root-mean-square value.
    pub fn rms(&self) -> f64 {
        self.comps.iter().map(|c| rms(c)).fold(0.0, f64::max)
    }

    /// Largest absolute component mean.
    pub fn max_abs_mean(&self) -> f64 {
        self.comps
            .iter()
            .map(|c| pairwise_sum_mean(c).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn rms(v: &[f64]) -> f64 {
    let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
    pairwise_sum_mean(&sq).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Also solve the adjoint correctors.
    pub adjoint: bool,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions {
            tol: 1e-10,
            max_iter: 5000,
            adjoint: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorSolve {
    pub k: usize,
    pub column: usize,
    pub adjoint: bool,
    pub iterations: usize,
    pub residual: f64,
}

/// Spectral Galerkin operator `u -> -D_i (a_ij D_j u)` on `m` stacked fields.
pub struct CellSolver<'a> {
    spec: &'a Spectral,
    sampled: &'a SampledCoefficients,
    /// Nonzero entries of `A` as `(i, j, alpha, gamma)`.
    entries: Vec<(usize, usize, usize, usize)>,
    /// Per-mode inverse of the mean-coefficient symbol, `m x m` row-major.
    pinv: Vec<f64>,
    symmetric: bool,
}

impl<'a> CellSolver<'a> {
    pub fn new(spec: &'a Spectral, sampled: &'a SampledCoefficients) -> Result<Self> {
        if spec.grid != sampled.grid {
            return Err(Error::invalid("spectral grid and sampled grid differ"));
        }
        let l = sampled.layout;
        let (d, m) = (l.dim, l.m);
        let n = spec.grid.len();
        let mut entries = vec![];
        let mut abar = vec![0.0; l.a_len()];
        let mut symmetric = true;
        for i in 0..d {
            for j in 0..d {
                for al in 0..m {
                    for ga in 0..m {
                        let f = &sampled.a[l.a(i, j, al, ga)].data;
                        if f.iter().any(|&x| x != 0.0) {
                            entries.push((i, j, al, ga));
                        }
                        abar[l.a(i, j, al, ga)] = pairwise_sum_mean(f);
                        let g = &sampled.a[l.a(j, i, ga, al)].data;
                        let scale = f.iter().fold(1.0f64, |s, x| s.max(x.abs()));
                        if f.iter().zip(g).any(|(x, y)| (x - y).abs() > 1e-13 * scale) {
                            symmetric = false;
                        }
                    }
                }
            }
        }
        let mut pinv = vec![0.0; n * m * m];
        let mut sym = DMatrix::<f64>::zeros(m, m);
        for p in 0..n {
            if spec.is_null_mode(p) {
                continue;
            }
            let w = spec.wave(p);
            for al in 0..m {
                for ga in 0..m {
                    let mut s = 0.0;
                    for i in 0..d {
                        for j in 0..d {
                            s += abar[l.a(i, j, al, ga)] * w[i] * w[j];
                        }
                    }
                    sym[(al, ga)] = s;
                }
            }
            let inv = if m == 1 {
                DMatrix::from_element(1, 1, 1.0 / sym[(0, 0)])
            } else {
                sym.clone().try_inverse().ok_or_else(|| {
                    Error::Ellipticity {
                        min_eig: 0.0,
                        point: vec![],
                    }
                })?
            };
            for al in 0..m {
                for ga in 0..m {
                    pinv[p * m * m + al * m + ga] = inv[(al, ga)];
                }
            }
        }
        Ok(CellSolver {
            spec,
            sampled,
            entries,
            pinv,
            symmetric,
        })
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// `out = -D_i (a_ij D_j u)` for `m` fields stacked in `u`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let l = self.sampled.layout;
        let (d, m) = (l.dim, l.m);
        let n = self.spec.grid.len();
        let grads: Vec<Vec<Vec<f64>>> = (0..m)
            .map(|g| self.spec.gradient(&u[g * n..(g + 1) * n]))
            .collect();
        for al in 0..m {
            let mut acc = vec![Complex64::new(0.0, 0.0); n];
            for i in 0..d {
                let mut flux = vec![0.0; n];
                let mut any = false;
                for &(ii, j, a2, ga) in &self.entries {
                    if ii != i || a2 != al {
                        continue;
                    }
                    any = true;
                    let a = &self.sampled.a[l.a(i, j, al, ga)].data;
                    let g = &grads[ga][j];
                    for p in 0..n {
                        flux[p] += a[p] * g[p];
                    }
                }
                if !any {
                    continue;
                }
                let mut h = self.spec.forward(&flux);
                self.spec.differentiate_hat(&mut h, i);
                for (s, v) in acc.iter_mut().zip(h) {
                    *s += v;
                }
            }
            let r = self.spec.inverse_real(acc);
            for (o, v) in out[al * n..(al + 1) * n].iter_mut().zip(r) {
                *o = -v;
            }
        }
    }

    /// Mean-coefficient inverse, zero on the null modes.
    pub fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let m = self.sampled.layout.m;
        let n = self.spec.grid.len();
        let hats: Vec<Vec<Complex64>> = (0..m)
            .map(|g| self.spec.forward(&r[g * n..(g + 1) * n]))
            .collect();
        for al in 0..m {
            let mut out = vec![Complex64::new(0.0, 0.0); n];
            for (p, o) in out.iter_mut().enumerate() {
                let row = &self.pinv[p * m * m + al * m..p * m * m + al * m + m];
                for ga in 0..m {
                    *o += hats[ga][p] * row[ga];
                }
            }
            z[al * n..(al + 1) * n].copy_from_slice(&self.spec.inverse_real(out));
        }
    }

    /// Solves `-D_i(a_ij D_j u) = D_i g_i` for the stacked `m` fields `u`.
    /// `g[i]` holds `m` stacked fields.
    pub fn solve_divergence(&self, g: &[Vec<f64>], opts: CellOptions) -> Result<(Vec<f64>, SolveStats)> {
        let m = self.sampled.layout.m;
        let n = self.spec.grid.len();
        let mut rhs = vec![0.0; m * n];
        for al in 0..m {
            let mut acc = vec![Complex64::new(0.0, 0.0); n];
            for (i, gi) in g.iter().enumerate() {
                let comp = &gi[al * n..(al + 1) * n];
                if comp.iter().all(|&x| x == 0.0) {
                    continue;
                }
                let mut h = self.spec.forward(comp);
                self.spec.differentiate_hat(&mut h, i);
                for (s, v) in acc.iter_mut().zip(h) {
                    *s += v;
                }
            }
            rhs[al * n..(al + 1) * n].copy_from_slice(&self.spec.inverse_real(acc));
        }
        let mut x = vec![0.0; m * n];
        let kopts = KrylovOptions {
            tol: opts.tol,
            max_iter: opts.max_iter,
        };
        // right-hand sides at roundoff level (e.g. constant V) give a zero corrector
        let scale: f64 = g.iter().map(|gi| rms(gi)).fold(0.0, f64::max);
        if rms(&rhs) <= 1e-14 * scale.max(f64::MIN_POSITIVE) * std::f64::consts::TAU {
            return Ok((x, SolveStats::default()));
        }
        let stats = if self.symmetric {
            pcg(
                |u, o| self.apply(u, o),
                |r, z| self.precondition(r, z),
                &rhs,
                &mut x,
                kopts,
            )?
        } else {
            bicgstab(
                |u, o| self.apply(u, o),
                |r, z| self.precondition(r, z),
                &rhs,
                &mut x,
                kopts,
            )?
        };
        // remove any drift into the null space
        for al in 0..m {
            let comp = &mut x[al * n..(al + 1) * n];
            let mut hat = self.spec.forward(comp);
            for (p, z) in hat.iter_mut().enumerate() {
                if self.spec.is_null_mode(p) {
                    *z = Complex64::new(0.0, 0.0);
                }
            }
            comp.copy_from_slice(&self.spec.inverse_real(hat));
        }
        Ok((x, stats))
    }

    /// Corrector `chi_k` (all `m` columns).
    pub fn corrector(&self, k: usize, opts: CellOptions) -> Result<(TensorField, Vec<SolveStats>)> {
        let l = self.sampled.layout;
        let (d, m) = (l.dim, l.m);
        if k > d {
            return Err(Error::invalid(format!("corrector index {k} exceeds dimension {d}")));
        }
        let n = self.spec.grid.len();
        let mut chi = TensorField::zeros(m, n);
        let mut stats = vec![];
        for be in 0..m {
            let g: Vec<Vec<f64>> = (0..d)
                .map(|i| {
                    let mut gi = vec![0.0; m * n];
                    for al in 0..m {
                        let src = if k == 0 {
                            &self.sampled.v[l.v(i, al, be)].data
                        } else {
                            &self.sampled.a[l.a(i, k - 1, al, be)].data
                        };
                        gi[al * n..(al + 1) * n].copy_from_slice(src);
                    }
                    gi
                })
                .collect();
            let (x, st) = self.solve_divergence(&g, opts)?;
            for al in 0..m {
                chi.get_mut(al, be).copy_from_slice(&x[al * n..(al + 1) * n]);
            }
            stats.push(st);
        }
        Ok((chi, stats))
    }
}

/// Solves the cell problem for corrector `k` of `coeffs` on `grid`.
pub fn solve_cell_corrector(
    coeffs: &CoefficientSet,
    grid: CellGrid,
    k: usize,
    opts: CellOptions,
) -> Result<TensorField> {
    let sampled = coeffs.sample(grid)?;
    let spec = Spectral::new(grid);
    let solver = CellSolver::new(&spec, &sampled)?;
    Ok(solver.corrector(k, opts)?.0)
}

/// Coefficients of the adjoint operator.
pub fn adjoint_coefficients(coeffs: &CoefficientSet) -> CoefficientSet {
    coeffs.adjoint()
}

/// Spectral gradients of every corrector, `[k][j]`.
pub fn corrector_gradients(spec: &Spectral, chi: &[TensorField]) -> Vec<Vec<TensorField>> {
    let d = spec.grid.dim;
    chi.iter()
        .map(|c| {
            let mut out = vec![TensorField::zeros(c.m, spec.grid.len()); d];
            for (idx, comp) in c.comps.iter().enumerate() {
                for (j, g) in spec.gradient(comp).into_iter().enumerate() {
                    out[j].comps[idx] = g;
                }
            }
            out
        })
        .collect()
}

/// Pointwise flux densities whose means are the homogenized tensors.
///
/// `flux[i * (d + 1) + k]` is `a_ik + a_ij D_j chi_k` (`V_i + a_ij D_j chi_0`
/// for `k = 0`) and `lower[k]` is `B_k + B_j D_j chi_k` (`c + B_i D_i chi_0`).
fn flux_densities(
    s: &SampledCoefficients,
    chi_grad: &[Vec<TensorField>],
) -> (Vec<TensorField>, Vec<TensorField>) {
    let l = s.layout;
    let (d, m) = (l.dim, l.m);
    let n = s.grid.len();
    let mut flux = Vec::with_capacity(d * (d + 1));
    for i in 0..d {
        for k in 0..=d {
            let mut f = TensorField::zeros(m, n);
            for al in 0..m {
                for be in 0..m {
                    let out = f.get_mut(al, be);
                    let base = if k == 0 {
                        &s.v[l.v(i, al, be)].data
                    } else {
                        &s.a[l.a(i, k - 1, al, be)].data
                    };
                    out.copy_from_slice(base);
                    for j in 0..d {
                        for ga in 0..m {
                            let a = &s.a[l.a(i, j, al, ga)].data;
                            let g = chi_grad[k][j].get(ga, be);
                            for p in 0..n {
                                out[p] += a[p] * g[p];
                            }
                        }
                    }
                }
            }
            flux.push(f);
        }
    }
    let mut lower = Vec::with_capacity(d + 1);
    for k in 0..=d {
        let mut f = TensorField::zeros(m, n);
        for al in 0..m {
            for be in 0..m {
                let out = f.get_mut(al, be);
                let base = if k == 0 {
                    &s.c[l.c(al, be)].data
                } else {
                    &s.b[l.v(k - 1, al, be)].data
                };
                out.copy_from_slice(base);
                for j in 0..d {
                    for ga in 0..m {
                        let b = &s.b[l.v(j, al, ga)].data;
                        let g = chi_grad[k][j].get(ga, be);
                        for p in 0..n {
                            out[p] += b[p] * g[p];
                        }
                    }
                }
            }
        }
        lower.push(f);
    }
    (flux, lower)
}

/// Homogenized `A, V, B, c` as Y-averages of the corrected fluxes.
pub fn homogenize(s: &SampledCoefficients, chi_grad: &[Vec<TensorField>]) -> Result<CoeffValues> {
    let l = s.layout;
    let d = l.dim;
    if chi_grad.len() != d + 1 {
        return Err(Error::Missing(format!(
            "homogenization needs {} corrector gradients, got {}",
            d + 1,
            chi_grad.len()
        )));
    }
    let (flux, lower) = flux_densities(s, chi_grad);
    Ok(hats_from_densities(l, &flux, &lower))
}

fn hats_from_densities(l: Layout, flux: &[TensorField], lower: &[TensorField]) -> CoeffValues {
    let (d, m) = (l.dim, l.m);
    let mut h = CoeffValues::zeros(l);
    for i in 0..d {
        for al in 0..m {
            for be in 0..m {
                for k in 1..=d {
                    h.a[l.a(i, k - 1, al, be)] = pairwise_sum_mean(flux[i * (d + 1) + k].get(al, be));
                }
                h.v[l.v(i, al, be)] = pairwise_sum_mean(flux[i * (d + 1)].get(al, be));
                h.b[l.v(i, al, be)] = pairwise_sum_mean(lower[i + 1].get(al, be));
            }
        }
    }
    for al in 0..m {
        for be in 0..m {
            h.c[l.c(al, be)] = pairwise_sum_mean(lower[0].get(al, be));
        }
    }
    h
}

/// The fields `b_ik` (indexed `i * (d + 1) + k`) and `W_k`.
pub fn build_flux_fields(
    s: &SampledCoefficients,
    chi_grad: &[Vec<TensorField>],
    hats: &CoeffValues,
) -> Result<(Vec<TensorField>, Vec<TensorField>)> {
    let l = s.layout;
    let (d, m) = (l.dim, l.m);
    if chi_grad.iter().flatten().any(|f| f.comps.iter().any(|c| c.len() != s.grid.len())) {
        return Err(Error::invalid("corrector gradients live on a different grid"));
    }
    let (mut flux, mut lower) = flux_densities(s, chi_grad);
    for i in 0..d {
        for k in 0..=d {
            let f = &mut flux[i * (d + 1) + k];
            for al in 0..m {
                for be in 0..m {
                    let hat = if k == 0 {
                        hats.v[l.v(i, al, be)]
                    } else {
                        hats.a[l.a(i, k - 1, al, be)]
                    };
                    for x in f.get_mut(al, be).iter_mut() {
                        *x = hat - *x;
                    }
                }
            }
        }
    }
    for (k, f) in lower.iter_mut().enumerate() {
        for al in 0..m {
            for be in 0..m {
                let hat = if k == 0 {
                    hats.c[l.c(al, be)]
                } else {
                    hats.b[l.v(k - 1, al, be)]
                };
                for x in f.get_mut(al, be).iter_mut() {
                    *x = hat - *x;
                }
            }
        }
    }
    Ok((flux, lower))
}

/// Mean-zero `theta_k` with `Laplace theta_k = W_k`.
pub fn solve_theta(spec: &Spectral, w: &[TensorField]) -> Result<Vec<TensorField>> {
    w.iter()
        .map(|wk| {
            let scale = wk.rms().max(1.0);
            let mean = wk.max_abs_mean();
            if mean > 1e-10 * scale {
                return Err(Error::invalid(format!(
                    "W has mean {mean:e}; the periodic Poisson problem is not solvable"
                )));
            }
            Ok(TensorField {
                m: wk.m,
                comps: wk.comps.iter().map(|c| spec.inverse_laplacian(c)).collect(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxCorrector {
    /// `Pi[i * (d + 1) + k]`.
    pub pi: Vec<TensorField>,
    /// `E[(j * d + i) * (d + 1) + k]`.
    pub e: Vec<TensorField>,
    /// Relative size of `D_i b_ik`.
    pub divergence_residual: f64,
    /// Relative size of `D_j E_jik - b_ik`.
    pub reconstruction_residual: f64,
    /// Set when `b` is not divergence-free to `1e-8`.
    pub warning: bool,
}

/// Divergence residual of `b` relative to its natural derivative scale.
pub fn divergence_residual(spec: &Spectral, b: &[TensorField]) -> f64 {
    let d = spec.grid.dim;
    let m = b[0].m;
    let bscale = b.iter().map(|f| f.rms()).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for k in 0..=d {
        for idx in 0..m * m {
            let mut div = vec![0.0; spec.grid.len()];
            let mut parts = 0.0;
            for i in 0..d {
                let di = spec.derivative(&b[i * (d + 1) + k].comps[idx], i);
                parts += rms(&di);
                for (s, v) in div.iter_mut().zip(&di) {
                    *s += v;
                }
            }
            let scale = parts.max(std::f64::consts::TAU * bscale);
            if scale > 0.0 {
                worst = worst.max(rms(&div) / scale);
            }
        }
    }
    worst
}

/// Potentials `Pi_ik = Laplace^{-1} b_ik` and `E_jik = D_j Pi_ik - D_i Pi_jk`.
pub fn build_flux_corrector(spec: &Spectral, b: &[TensorField]) -> Result<FluxCorrector> {
    let d = spec.grid.dim;
    if b.len() != d * (d + 1) {
        return Err(Error::invalid("b must hold d * (d + 1) fields"));
    }
    let m = b[0].m;
    let n = spec.grid.len();
    let divergence_residual = divergence_residual(spec, b);
    let pi: Vec<TensorField> = b
        .iter()
        .map(|f| TensorField {
            m,
            comps: f.comps.iter().map(|c| spec.inverse_laplacian(c)).collect(),
        })
        .collect();
    // gradients of Pi, [field][axis]
    let pi_grad: Vec<Vec<Vec<Vec<f64>>>> = pi
        .iter()
        .map(|f| f.comps.iter().map(|c| spec.gradient(c)).collect())
        .collect();
    let mut e = vec![TensorField::zeros(m, n); d * d * (d + 1)];
    for j in 0..d {
        for i in 0..d {
            for k in 0..=d {
                let f = &mut e[(j * d + i) * (d + 1) + k];
                for idx in 0..m * m {
                    let a = &pi_grad[i * (d + 1) + k][idx][j];
                    let c = &pi_grad[j * (d + 1) + k][idx][i];
                    f.comps[idx] = a.iter().zip(c).map(|(x, y)| x - y).collect();
                }
            }
        }
    }
    let bscale = b.iter().map(|f| f.rms()).fold(0.0, f64::max);
    let mut recon = 0.0f64;
    if bscale > 0.0 {
        for i in 0..d {
            for k in 0..=d {
                for idx in 0..m * m {
                    let mut s = vec![0.0; n];
                    for j in 0..d {
                        let dj = spec.derivative(&e[(j * d + i) * (d + 1) + k].comps[idx], j);
                        for (a, v) in s.iter_mut().zip(dj) {
                            *a += v;
                        }
                    }
                    let bk = &b[i * (d + 1) + k].comps[idx];
                    let diff: Vec<f64> = s.iter().zip(bk).map(|(x, y)| x - y).collect();
                    recon = recon.max(rms(&diff) / bscale);
                }
            }
        }
    }
    Ok(FluxCorrector {
        pi,
        e,
        divergence_residual,
        reconstruction_residual: recon,
        warning: divergence_residual > 1e-8,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDiagnostics {
    pub solves: Vec<CorrectorSolve>,
    /// Largest `|mean|` over `chi`, `chi_star`, `theta`, `Pi` relative to field scale.
    pub max_mean_potentials: f64,
    /// Largest `|mean|` over `b`, `W` relative to field scale.
    pub max_mean_fluxes: f64,
    pub e_antisymmetry: f64,
    pub e_residual: f64,
    pub b_divergence: f64,
    /// `|Laplace theta - W| / |W|`.
    pub theta_residual: f64,
    /// Smallest eigenvalue of the symmetric part of `A_hat` as an `md x md` form.
    pub a_hat_min_eig: f64,
    pub divergence_warning: bool,
}

/// Every Y-periodic object built from one coefficient set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellData {
    pub name: String,
    pub grid: CellGrid,
    pub layout: Layout,
    pub lambda: f64,
    pub chi: Vec<TensorField>,
    /// `chi_grad[k][j]`.
    pub chi_grad: Vec<Vec<TensorField>>,
    pub chi_star: Vec<TensorField>,
    pub chi_star_grad: Vec<Vec<TensorField>>,
    pub hats: CoeffValues,
    /// Homogenized tensors of the adjoint operator.
    pub hats_star: CoeffValues,
    /// `b[i * (d + 1) + k]`.
    pub b: Vec<TensorField>,
    pub w: Vec<TensorField>,
    pub theta: Vec<TensorField>,
    /// `theta_grad[k][i]`.
    pub theta_grad: Vec<Vec<TensorField>>,
    pub pi: Vec<TensorField>,
    /// `e[(j * d + i) * (d + 1) + k]`.
    pub e: Vec<TensorField>,
    pub diagnostics: CellDiagnostics,
}

fn solve_family(
    sampled: &SampledCoefficients,
    spec: &Spectral,
    opts: CellOptions,
    adjoint: bool,
) -> Result<(Vec<TensorField>, Vec<CorrectorSolve>)> {
    let solver = CellSolver::new(spec, sampled)?;
    let d = sampled.layout.dim;
    let results: Vec<Result<(TensorField, Vec<SolveStats>)>> =
        (0..=d).into_par_iter().map(|k| solver.corrector(k, opts)).collect();
    let mut chi = vec![];
    let mut log = vec![];
    for (k, r) in results.into_iter().enumerate() {
        let (c, st) = r?;
        chi.push(c);
        for (column, s) in st.into_iter().enumerate() {
            log.push(CorrectorSolve {
                k,
                column,
                adjoint,
                iterations: s.iterations,
                residual: s.residual,
            });
        }
    }
    Ok((chi, log))
}

pub(crate) fn min_eig_a(l: Layout, a: &[f64]) -> f64 {
    let md = l.dim * l.m;
    let mut mat = DMatrix::<f64>::zeros(md, md);
    for i in 0..l.dim {
        for j in 0..l.dim {
            for al in 0..l.m {
                for be in 0..l.m {
                    mat[(i * l.m + al, j * l.m + be)] =
                        0.5 * (a[l.a(i, j, al, be)] + a[l.a(j, i, be, al)]);
                }
            }
        }
    }
    SymmetricEigen::new(mat).eigenvalues.min()
}

impl CellData {
    /// Solves every cell problem for `coeffs` and assembles the derived fields.
    pub fn compute(coeffs: &CoefficientSet, grid: CellGrid, opts: CellOptions) -> Result<CellData> {
        coeffs.validate(grid, false)?;
        let spec = Spectral::new(grid);
        let sampled = coeffs.sample(grid)?;
        let l = sampled.layout;
        let d = l.dim;
        let (chi, mut solves) = solve_family(&sampled, &spec, opts, false)?;
        let chi_grad = corrector_gradients(&spec, &chi);
        let hats = homogenize(&sampled, &chi_grad)?;
        let (chi_star, chi_star_grad, hats_star) = if opts.adjoint {
            let adj = coeffs.adjoint().sample(grid)?;
            let (cs, log) = solve_family(&adj, &spec, opts, true)?;
            solves.extend(log);
            let g = corrector_gradients(&spec, &cs);
            let h = homogenize(&adj, &g)?;
            (cs, g, h)
        } else {
            (vec![], vec![], hats.adjoint(l))
        };
        let (b, w) = build_flux_fields(&sampled, &chi_grad, &hats)?;
        let theta = solve_theta(&spec, &w)?;
        let theta_grad = corrector_gradients(&spec, &theta);
        let fc = build_flux_corrector(&spec, &b)?;

        let rel_mean = |fs: &[TensorField]| {
            fs.iter()
                .map(|f| {
                    let s = f.rms();
                    if s > 0.0 {
                        f.max_abs_mean() / s.max(1.0)
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max)
        };
        let max_mean_potentials = rel_mean(&chi)
            .max(rel_mean(&chi_star))
            .max(rel_mean(&theta))
            .max(rel_mean(&fc.pi));
        let max_mean_fluxes = rel_mean(&b).max(rel_mean(&w));
        let mut anti = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                for k in 0..=d {
                    let x = &fc.e[(j * d + i) * (d + 1) + k];
                    let y = &fc.e[(i * d + j) * (d + 1) + k];
                    for (cx, cy) in x.comps.iter().zip(&y.comps) {
                        for (a, b) in cx.iter().zip(cy) {
                            anti = anti.max((a + b).abs());
                        }
                    }
                }
            }
        }
        let mut theta_residual = 0.0f64;
        let wscale = w.iter().map(|f| f.rms()).fold(0.0, f64::max);
        if wscale > 0.0 {
            for (t, wk) in theta.iter().zip(&w) {
                for (ct, cw) in t.comps.iter().zip(&wk.comps) {
                    let lap = spec.laplacian(ct);
                    let diff: Vec<f64> = lap.iter().zip(cw).map(|(a, b)| a - b).collect();
                    theta_residual = theta_residual.max(rms(&diff) / wscale);
                }
            }
        }
        let diagnostics = CellDiagnostics {
            solves,
            max_mean_potentials,
            max_mean_fluxes,
            e_antisymmetry: anti,
            e_residual: fc.reconstruction_residual,
            b_divergence: fc.divergence_residual,
            theta_residual,
            a_hat_min_eig: min_eig_a(l, &hats.a),
            divergence_warning: fc.warning,
        };
        Ok(CellData {
            name: coeffs.name.clone(),
            grid,
            layout: l,
            lambda: coeffs.lambda,
            chi,
            chi_grad,
            chi_star,
            chi_star_grad,
            hats,
            hats_star,
            b,
            w,
            theta,
            theta_grad,
            pi: fc.pi,
            e: fc.e,
            diagnostics,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn m(&self) -> usize {
        self.layout.m
    }

    #[inline]
    pub fn b_index(&self, i: usize, k: usize) -> usize {
        i * (self.layout.dim + 1) + k
    }

    #[inline]
    pub fn e_index(&self, j: usize, i: usize, k: usize) -> usize {
        let d = self.layout.dim;
        (j * d + i) * (d + 1) + k
    }
}
