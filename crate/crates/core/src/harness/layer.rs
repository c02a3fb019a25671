//! Layer and co-layer norms of a homogenized solution over dyadic depths.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::fit::{fit_rate, Model, RateFit};
use crate::cell::{CellData, CellOptions};
use crate::coeff::{parse_expr, preset, CellGrid, Scope};
use crate::domain::{triangulate, PolygonDomain};
use crate::error::Result;
use crate::fem::{
    assemble, norm, second_derivative_seminorm, solve, BoundaryData, Coefficients, FemFunction, Load, NormKind,
    ProblemData, Side, SolveOptions,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub t: f64,
    /// `|u_0|_{H^1(Omega \ Sigma_t)}`.
    pub layer_h1: f64,
    /// `|u_0|_{H^1(Omega \ Sigma_t; delta)}`.
    pub weighted_layer_h1: f64,
    /// `|grad^2 u_0|_{L^2(Sigma_t)}`.
    pub colayer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub domain: String,
    pub h: f64,
    pub rows: Vec<LayerRow>,
    pub layer_h1: RateFit,
    pub weighted_layer_h1: RateFit,
    pub colayer: RateFit,
}

/// Fits the three norms of `u0` over the depths `ts`.
pub fn layer_study(u0: &FemFunction, domain: &PolygonDomain, ts: &[f64]) -> Result<LayerReport> {
    let side = Side::BoundaryLayer;
    let mut rows = vec![];
    for &t in ts {
        rows.push(LayerRow {
            t,
            layer_h1: norm(u0, Some(domain), NormKind::H1Layer { r: t, side })?,
            weighted_layer_h1: norm(u0, Some(domain), NormKind::H1Weighted { r: t, side, power: 1 })?,
            colayer: second_derivative_seminorm(u0, domain, t, false)?.value,
        });
    }
    let fit = |f: fn(&LayerRow) -> f64| {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, f(r))).collect();
        fit_rate(&pts, Model::Power)
    };
    Ok(LayerReport {
        domain: domain.name.clone(),
        h: u0.mesh.h,
        layer_h1: fit(|r| r.layer_h1)?,
        weighted_layer_h1: fit(|r| r.weighted_layer_h1)?,
        colayer: fit(|r| r.colayer)?,
        rows,
    })
}

/// The L-shape benchmark: homogenized laminate operator, `F = 1` and the
/// boundary trace `g = |x - (1/4, 0)|^0.6`, solved at mesh size `h`; depths
/// `t = 2^-3 .. 2^-7`.
pub fn l_shape_benchmark(h: f64) -> Result<LayerReport> {
    let domain = PolygonDomain::preset("l-shape")?;
    let c = preset("laminate", 0)?;
    let cell = CellData::compute(
        &c,
        CellGrid::new(128, 2)?,
        CellOptions {
            adjoint: false,
            ..Default::default()
        },
    )?;
    let mesh = Arc::new(triangulate(&domain, h)?);
    let x = Scope::physical(2);
    let g = parse_expr("((x1-0.25)^2+x2^2)^0.3", x)?;
    let data = ProblemData::dirichlet(Load::Expr(vec![parse_expr("1", x)?]), BoundaryData::Expr(vec![g]), 0.0);
    let hom = Coefficients::Constant {
        layout: c.layout,
        values: &cell.hats,
        lambda: c.lambda,
    };
    let sys = assemble(hom, mesh, &data, false)?;
    let (u0, _) = solve(
        &sys,
        SolveOptions {
            tol: 1e-11,
            ..Default::default()
        },
    )?;
    let ts: Vec<f64> = (3..=7).map(|k| 0.5f64.powi(k)).collect();
    layer_study(&u0, &domain, &ts)
}
