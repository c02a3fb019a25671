//! Second derivatives of P1 fields by local least-squares quadratic fits.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use super::function::FemFunction;
use super::norms::{integrate, Region, Side, Weight};
use crate::domain::PolygonDomain;
use crate::error::{Error, Result};

/// Nodal Hessians `[u_11, u_12, u_22]` per component, `None` where the patch
/// was too small.
pub fn recover_hessians(u: &FemFunction, needed: &[bool]) -> Result<Vec<Option<Vec<[f64; 3]>>>> {
    let mesh = &u.mesh;
    let lat = mesh
        .lattice
        .as_ref()
        .ok_or_else(|| Error::Unsupported("recovery needs a lattice mesh".into()))?;
    let mut pos = vec![(0usize, 0usize); mesh.node_count()];
    for j in 0..=lat.ny {
        for i in 0..=lat.nx {
            if let Some(n) = lat.node(i, j) {
                pos[n] = (i, j);
            }
        }
    }
    let h = lat.h;
    let mut out = vec![None; mesh.node_count()];
    for node in 0..mesh.node_count() {
        if !needed[node] {
            continue;
        }
        let (i, j) = pos[node];
        let mut pts = Vec::with_capacity(25);
        for dj in -2i64..=2 {
            for di in -2i64..=2 {
                let (a, b) = (i as i64 + di, j as i64 + dj);
                if a < 0 || b < 0 || a > lat.nx as i64 || b > lat.ny as i64 {
                    continue;
                }
                if let Some(n) = lat.node(a as usize, b as usize) {
                    pts.push((di as f64, dj as f64, n));
                }
            }
        }
        if pts.len() < 12 {
            continue;
        }
        let mut ata = Matrix6::<f64>::zeros();
        for &(x, y, _) in &pts {
            let row = Vector6::new(1.0, x, y, x * x, x * y, y * y);
            ata += row * row.transpose();
        }
        let Some(chol) = ata.cholesky() else { continue };
        let mut hs = Vec::with_capacity(u.m);
        for al in 0..u.m {
            let mut atb = Vector6::<f64>::zeros();
            for &(x, y, n) in &pts {
                atb += Vector6::new(1.0, x, y, x * x, x * y, y * y) * u.node_value(n, al);
            }
            let c = chol.solve(&atb);
            hs.push([2.0 * c[3] / (h * h), c[4] / (h * h), 2.0 * c[5] / (h * h)]);
        }
        out[node] = Some(hs);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeminormReport {
    pub value: f64,
    pub skipped_nodes: usize,
}

/// `|grad^2 u|_{L^2(Sigma_r)}` (optionally `delta`-weighted) from recovered
/// nodal Hessians interpolated linearly on each element. Elements touching a
/// skipped node use the mean of their recovered vertices.
pub fn second_derivative_seminorm(u: &FemFunction, domain: &PolygonDomain, r: f64, weighted: bool) -> Result<SeminormReport> {
    let mesh = &u.mesh;
    if r < 2.0 * mesh.h {
        return Err(Error::invalid(format!("region depth {r} is below 2h = {}", 2.0 * mesh.h)));
    }
    let mut needed = vec![false; mesh.node_count()];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        // every element that can meet Sigma_r
        if domain.distance(mesh.barycenter(t)) + mesh.h >= r {
            for &v in tri {
                needed[v as usize] = true;
            }
        }
    }
    let hess = recover_hessians(u, &needed)?;
    let skipped = needed.iter().zip(&hess).filter(|(n, h)| **n && h.is_none()).count();
    let m = u.m;
    let sq = integrate(
        mesh,
        Some(domain),
        Region::Layer { r, side: Side::Interior },
        if weighted { Weight::Delta } else { Weight::One },
        |t, l, _| {
            let tri = mesh.triangles[t];
            let have: Vec<usize> = (0..3).filter(|&k| hess[tri[k] as usize].is_some()).collect();
            if have.is_empty() {
                return 0.0;
            }
            let mut s = 0.0;
            for al in 0..m {
                let mut hv = [0.0; 3];
                if have.len() == 3 {
                    for k in 0..3 {
                        let hk = hess[tri[k] as usize].as_ref().unwrap()[al];
                        for c in 0..3 {
                            hv[c] += l[k] * hk[c];
                        }
                    }
                } else {
                    for &k in &have {
                        let hk = hess[tri[k] as usize].as_ref().unwrap()[al];
                        for c in 0..3 {
                            hv[c] += hk[c] / have.len() as f64;
                        }
                    }
                }
                s += hv[0] * hv[0] + 2.0 * hv[1] * hv[1] + hv[2] * hv[2];
            }
            s
        },
    )?;
    Ok(SeminormReport {
        value: sq.sqrt(),
        skipped_nodes: skipped,
    })
}
