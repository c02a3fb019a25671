//! Preconditioned Krylov iterations over user-supplied operators.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOptions {
    /// Relative residual target `|r| <= tol |b|`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions {
            tol: 1e-10,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final relative residual of the recurrence.
    pub residual: f64,
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators keep the summation order fixed and vectorizable
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Preconditioned conjugate gradients for symmetric positive (semi)definite
/// operators. `x` holds the initial guess on entry.
pub fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    opts: KrylovOptions,
) -> Result<SolveStats> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats::default());
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let mut res = norm(&r) / bnorm;
    if res <= opts.tol {
        return Ok(SolveStats {
            iterations: 0,
            residual: res,
        });
    }
    for it in 1..=opts.max_iter {
        apply(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            if res < 1e2 * opts.tol {
                return Ok(SolveStats {
                    iterations: it,
                    residual: res,
                });
            }
            return Err(Error::Indefinite(format!(
                "p^T A p = {pq:e} at CG iteration {it}"
            )));
        }
        let alpha = rz / pq;
        axpy(alpha, &p, x);
        axpy(-alpha, &q, &mut r);
        res = norm(&r) / bnorm;
        if res <= opts.tol {
            return Ok(SolveStats {
                iterations: it,
                residual: res,
            });
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: res,
    })
}

/// Right-preconditioned BiCGStab for general nonsingular operators.
pub fn bicgstab(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precond: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    opts: KrylovOptions,
) -> Result<SolveStats> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats::default());
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut res = norm(&r) / bnorm;
    if res <= opts.tol {
        return Ok(SolveStats {
            iterations: 0,
            residual: res,
        });
    }
    let mut r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=opts.max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 || omega == 0.0 {
            // breakdown: restart the shadow space from the current residual
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            v.iter_mut().for_each(|e| *e = 0.0);
            p.iter_mut().for_each(|e| *e = 0.0);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond(&p, &mut p_hat);
        apply(&p_hat, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            return Err(Error::Indefinite(format!("BiCGStab breakdown at iteration {it}")));
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = norm(&s) / bnorm;
        if snorm <= opts.tol {
            axpy(alpha, &p_hat, x);
            return Ok(SolveStats {
                iterations: it,
                residual: snorm,
            });
        }
        precond(&s, &mut s_hat);
        apply(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r) / bnorm;
        if res <= opts.tol {
            return Ok(SolveStats {
                iterations: it,
                residual: res,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(x: &[f64], y: &mut [f64], off_l: f64, off_r: f64) {
        let n = x.len();
        for i in 0..n {
            let mut v = 4.0 * x[i];
            if i > 0 {
                v += off_l * x[i - 1];
            }
            if i + 1 < n {
                v += off_r * x[i + 1];
            }
            y[i] = v;
        }
    }

    #[test]
    fn cg_solves_spd() {
        let n = 50;
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let st = pcg(
            |x, y| tridiag(x, y, -1.0, -1.0),
            |r, z| z.copy_from_slice(r),
            &b,
            &mut x,
            KrylovOptions::default(),
        )
        .unwrap();
        let mut ax = vec![0.0; n];
        tridiag(&x, &mut ax, -1.0, -1.0);
        let err: f64 = ax.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err} after {} its", st.iterations);
    }

    #[test]
    fn bicgstab_solves_nonsymmetric() {
        let n = 50;
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut x = vec![0.0; n];
        bicgstab(
            |x, y| tridiag(x, y, -1.5, -0.5),
            |r, z| {
                for (zi, ri) in z.iter_mut().zip(r) {
                    *zi = ri / 4.0;
                }
            },
            &b,
            &mut x,
            KrylovOptions::default(),
        )
        .unwrap();
        let mut ax = vec![0.0; n];
        tridiag(&x, &mut ax, -1.5, -0.5);
        let err: f64 = ax.iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn cg_flags_indefinite() {
        let b = vec![1.0, 1.0];
        let mut x = vec![0.0; 2];
        let r = pcg(
            |x, y| {
                y[0] = x[0];
                y[1] = -3.0 * x[1];
            },
            |r, z| z.copy_from_slice(r),
            &b,
            &mut x,
            KrylovOptions::default(),
        );
        assert!(matches!(r, Err(Error::Indefinite(_))));
    }
}
