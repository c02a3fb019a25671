//! eps sweeps: per-row solves, norms, slope fits and the persisted report.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Config, ExperimentPlan, RowNorm};
use super::fit::{fit_rate, Model, RateFit};
use crate::cell::{CellData, CellOptions};
use crate::coeff::{CoeffValues, CoefficientSet};
use crate::domain::{triangulate, PolygonDomain};
use crate::error::{Error, Result};
use crate::fem::{
    assemble, check_resolution, estimate_lambda0, norm, second_derivative_seminorm, solve, Coefficients, FemFunction,
    NormKind, Side, SolveOptions,
};
use crate::twoscale::{build_w, w_norms, Variant};

/// One completed eps row. Norms that were not requested are `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub id: usize,
    pub eps: f64,
    pub h: f64,
    pub nodes: usize,
    /// `|u_eps - u_0|_{L^2}`.
    pub l2: f64,
    /// `|u_eps - u_0|_{L^p}`, `p = 2d / (d - 1)`.
    pub lp: f64,
    /// `|w_eps|_{H^1}`, one entry per plan variant.
    pub h1_w: Vec<f64>,
    /// `|u_eps - u_0|_{H^1}`.
    pub h1_plain: f64,
    /// `|u_0|_{H^1(Omega \ Sigma_t)}` at `t = layer_factor * eps`.
    pub layer_h1: f64,
    /// The same with weight `delta`.
    pub weighted_layer_h1: f64,
    /// `|grad^2 u_0|_{L^2(Sigma_t; delta)}`.
    pub weighted_hess: f64,
    pub u0_h1: f64,
    pub iterations: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFailure {
    pub id: usize,
    pub eps: f64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeEntry {
    pub column: String,
    /// Every value is at round-off level relative to `|u_0|_{H^1}`.
    pub degenerate: bool,
    pub fit: Option<RateFit>,
    pub error: Option<String>,
}

/// Pure power against `C eps ln(scale / eps)` for one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogComparison {
    pub column: String,
    pub power_residual: Option<f64>,
    /// Log model with the layer constant `c0`.
    pub log_c0: std::result::Result<RateFit, String>,
    /// Log model with the diameter `r0`.
    pub log_r0: std::result::Result<RateFit, String>,
}

/// Discretization pollution at the largest eps from an `(h, h/2)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Richardson {
    pub eps: f64,
    pub h: f64,
    pub l2: [f64; 2],
    pub h1_w: [f64; 2],
    /// Extrapolated discretization error over the `h/2` value (floored at
    /// round-off relative to `|u_0|_{H^1}`), assuming order 2 for `L^2` and
    /// order 1 for `H^1`.
    pub pollution_l2: f64,
    pub pollution_h1_w: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub plan: ExperimentPlan,
    pub coefficients: String,
    pub lambda: f64,
    pub hats: CoeffValues,
    pub p: f64,
    pub c0: f64,
    pub r0: f64,
    pub variants: Vec<String>,
    pub rows: Vec<RateRow>,
    pub failures: Vec<RowFailure>,
    pub slopes: Vec<SlopeEntry>,
    pub log_models: Vec<LogComparison>,
    pub richardson: Option<Richardson>,
    /// `l2` decreases along the eps list.
    pub monotone_l2: bool,
}

pub const RICHARDSON_LIMIT: f64 = 0.2;
const DEGENERATE: f64 = 1e-9;

impl RateReport {
    pub fn slope(&self, column: &str) -> Option<&SlopeEntry> {
        self.slopes.iter().find(|s| s.column == column)
    }

    /// Column names in CSV order.
    pub fn columns(&self) -> Vec<String> {
        let mut c: Vec<String> = ["l2", "lp", "h1_w", "layer_h1", "weighted_layer_h1", "weighted_hess", "h1_plain"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for v in self.variants.iter().skip(1) {
            c.push(alt_column(v));
        }
        c
    }

    pub fn column(&self, name: &str) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.eps, column_value(r, &self.variants, name))).collect()
    }

    pub fn to_csv(&self) -> String {
        let cols = self.columns();
        let mut s = format!("eps,{},h,nodes\n", cols.join(","));
        for r in &self.rows {
            let _ = write!(s, "{}", fmt(r.eps));
            for c in &cols {
                let _ = write!(s, ",{}", fmt(column_value(r, &self.variants, c)));
            }
            let _ = writeln!(s, ",{},{}", fmt(r.h), r.nodes);
        }
        s
    }

    /// Whitespace-separated columns for gnuplot.
    pub fn to_dat(&self) -> String {
        self.to_csv()
            .lines()
            .enumerate()
            .map(|(k, l)| {
                let l = l.replace(',', " ");
                if k == 0 {
                    format!("# {l}\n")
                } else {
                    format!("{l}\n")
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `rates.csv`, `rates.dat` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("rates.csv"), self.to_csv())?;
        std::fs::write(dir.join("rates.dat"), self.to_dat())?;
        std::fs::write(dir.join("report.json"), self.to_json()? + "\n")?;
        Ok(())
    }
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.12e}")
    }
}

fn alt_column(label: &str) -> String {
    format!("h1_w_{}", label.to_lowercase().replace(['-', '.'], "_"))
}

fn column_value(r: &RateRow, variants: &[String], name: &str) -> f64 {
    match name {
        "l2" => r.l2,
        "lp" => r.lp,
        "h1_w" => r.h1_w[0],
        "layer_h1" => r.layer_h1,
        "weighted_layer_h1" => r.weighted_layer_h1,
        "weighted_hess" => r.weighted_hess,
        "h1_plain" => r.h1_plain,
        other => variants
            .iter()
            .position(|v| alt_column(v) == other)
            .map_or(f64::NAN, |k| r.h1_w[k]),
    }
}

/// Everything shared by the rows of one plan.
pub struct PlanContext {
    pub config: Config,
    pub coeffs: CoefficientSet,
    pub cell: CellData,
    pub domain: PolygonDomain,
    pub variants: Vec<Variant>,
}

impl PlanContext {
    /// Validates the plan and the coefficients and solves the cell problems.
    pub fn new(config: &Config) -> Result<Self> {
        let plan = &config.plan;
        plan.validate()?;
        let coeffs = config.coefficients()?;
        if coeffs.dim() != 2 {
            return Err(Error::Unsupported("rate sweeps run in two dimensions".into()));
        }
        let domain = plan.domain()?;
        let cell = CellData::compute(&coeffs, config.cell_grid(2)?, CellOptions::default())?;
        let l0 = estimate_lambda0(&coeffs, plan.seed)?;
        if coeffs.lambda < l0.lambda0 {
            return Err(Error::Config(format!(
                "lambda = {} is below lambda0 = {}",
                coeffs.lambda, l0.lambda0
            )));
        }
        Ok(PlanContext {
            config: config.clone(),
            coeffs,
            cell,
            domain,
            variants: plan.variants()?,
        })
    }

    fn plan(&self) -> &ExperimentPlan {
        &self.config.plan
    }

    fn homogenized(&self) -> Coefficients<'_> {
        Coefficients::Constant {
            layout: self.coeffs.layout,
            values: &self.cell.hats,
            lambda: self.coeffs.lambda,
        }
    }

    /// `u_eps` and `u_0` on one mesh of size `h`.
    pub fn solve_pair(&self, eps: f64, h: f64) -> Result<(FemFunction, FemFunction, [usize; 2])> {
        check_resolution(eps, h)?;
        let mesh = Arc::new(triangulate(&self.domain, h)?);
        let data = self.plan().problem(&self.domain, self.coeffs.m(), eps)?;
        let opts = SolveOptions {
            tol: self.plan().solver_tol,
            ..Default::default()
        };
        let se = assemble(Coefficients::Periodic(&self.coeffs), mesh.clone(), &data, false)?;
        let (ue, st_e) = solve(&se, opts)?;
        drop(se);
        let s0 = assemble(self.homogenized(), mesh, &data, false)?;
        let (u0, st_0) = solve(&s0, opts)?;
        Ok((ue, u0, [st_e.iterations, st_0.iterations]))
    }

    /// `|w_eps|_{H^1}` per variant and `|u_eps - u_0|_{H^1}`.
    pub fn corrected_norms(&self, ue: &FemFunction, u0: &FemFunction, eps: f64) -> Result<(Vec<f64>, f64)> {
        let mut out = vec![];
        let mut plain = f64::NAN;
        for v in &self.variants {
            let st = build_w(ue, u0, &self.cell, &self.coeffs, &self.domain, eps, *v)?;
            let n = w_norms(&st)?;
            out.push(n.h1);
            plain = n.h1_plain;
        }
        Ok((out, plain))
    }

    pub fn row(&self, id: usize, eps: f64) -> Result<RateRow> {
        let plan = self.plan();
        let h = plan.mesh_size(eps);
        let (ue, u0, iterations) = self.solve_pair(eps, h)?;
        let wants = |n: RowNorm| plan.norms.contains(&n);
        let diff = ue.sub(&u0);
        let d = self.coeffs.dim() as f64;
        let p = 2.0 * d / (d - 1.0);
        let l2 = if wants(RowNorm::L2) { norm(&diff, None, NormKind::L2)? } else { f64::NAN };
        let lp = if wants(RowNorm::Lp) { norm(&diff, None, NormKind::Lp(p))? } else { f64::NAN };
        let (h1_w, h1_plain) = if wants(RowNorm::H1W) {
            self.corrected_norms(&ue, &u0, eps)?
        } else {
            (vec![f64::NAN; self.variants.len()], norm(&diff, None, NormKind::H1)?)
        };
        drop(diff);
        let t = plan.layer_factor * eps;
        let layer_ok = t < self.domain.r00;
        let side = Side::BoundaryLayer;
        let layer_h1 = if wants(RowNorm::LayerH1) && layer_ok {
            norm(&u0, Some(&self.domain), NormKind::H1Layer { r: t, side })?
        } else {
            f64::NAN
        };
        let (weighted_layer_h1, weighted_hess) = if wants(RowNorm::Weighted) && layer_ok {
            (
                norm(&u0, Some(&self.domain), NormKind::H1Weighted { r: t, side, power: 1 })?,
                second_derivative_seminorm(&u0, &self.domain, t, true)?.value,
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        Ok(RateRow {
            id,
            eps,
            h,
            nodes: ue.mesh.node_count(),
            l2,
            lp,
            h1_w,
            h1_plain,
            layer_h1,
            weighted_layer_h1,
            weighted_hess,
            u0_h1: norm(&u0, None, NormKind::H1)?,
            iterations,
        })
    }

    fn richardson(&self, first: &RateRow) -> Result<Richardson> {
        let h = first.h / 2.0;
        let (ue, u0, _) = self.solve_pair(first.eps, h)?;
        let l2 = norm(&ue.sub(&u0), None, NormKind::L2)?;
        let (h1, _) = self.corrected_norms(&ue, &u0, first.eps)?;
        let floor = DEGENERATE * first.u0_h1;
        let rel = |coarse: f64, fine: f64, order: i32| {
            let gain = 2f64.powi(order);
            (coarse - fine).abs() * gain / (gain - 1.0) / fine.abs().max(floor).max(f64::MIN_POSITIVE)
        };
        let pollution_l2 = rel(first.l2, l2, 2);
        let pollution_h1_w = rel(first.h1_w[0], h1[0], 1);
        Ok(Richardson {
            eps: first.eps,
            h,
            l2: [first.l2, l2],
            h1_w: [first.h1_w[0], h1[0]],
            pollution_l2,
            pollution_h1_w,
            ok: pollution_l2 <= RICHARDSON_LIMIT && pollution_h1_w <= RICHARDSON_LIMIT,
        })
    }
}

/// Runs every row of the plan in `config`, then fits.
pub fn run_plan(config: &Config) -> Result<RateReport> {
    run_plan_with(config, &|_| {})
}

/// [`run_plan`] reporting each finished row to `progress`.
pub fn run_plan_with(config: &Config, progress: &(dyn Fn(&str) + Sync)) -> Result<RateReport> {
    let ctx = PlanContext::new(config)?;
    let plan = ctx.plan();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| Error::Resource(e.to_string()))?;
    let results: Vec<Result<RateRow>> = pool.install(|| {
        plan.eps
            .par_iter()
            .enumerate()
            .map(|(id, &eps)| {
                let r = ctx.row(id, eps);
                match &r {
                    Ok(row) => progress(&format!("row {id}: eps = {eps}, h = {}, {} nodes", row.h, row.nodes)),
                    Err(e) => progress(&format!("row {id}: eps = {eps} failed: {e}")),
                }
                r
            })
            .collect()
    });
    let mut rows = vec![];
    let mut failures = vec![];
    for (id, r) in results.into_iter().enumerate() {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(RowFailure {
                id,
                eps: plan.eps[id],
                error: e.to_string(),
            }),
        }
    }
    let richardson = match rows.first() {
        Some(first) if plan.richardson && first.id == 0 && plan.norms.contains(&RowNorm::H1W) => {
            let r = pool.install(|| ctx.richardson(first));
            match r {
                Ok(r) => Some(r),
                Err(e) => {
                    failures.push(RowFailure {
                        id: 0,
                        eps: first.eps,
                        error: format!("richardson pair: {e}"),
                    });
                    None
                }
            }
        }
        _ => None,
    };
    let mut report = RateReport {
        plan: plan.clone(),
        coefficients: ctx.coeffs.name.clone(),
        lambda: ctx.coeffs.lambda,
        hats: ctx.cell.hats.clone(),
        p: 4.0,
        c0: ctx.domain.c0,
        r0: ctx.domain.r0,
        variants: ctx.variants.iter().map(Variant::label).collect(),
        monotone_l2: rows.windows(2).all(|w| w[1].l2 < w[0].l2),
        rows,
        failures,
        slopes: vec![],
        log_models: vec![],
        richardson,
    };
    fit_report(&mut report);
    Ok(report)
}

/// Fills the slope and model-comparison entries from the rows.
pub fn fit_report(report: &mut RateReport) {
    let scale = report.rows.iter().map(|r| r.u0_h1).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    report.slopes = report
        .columns()
        .into_iter()
        .map(|column| {
            // rows where the norm was not defined (layer deeper than r00) drop out
            let rows: Vec<(f64, f64)> = report.column(&column).into_iter().filter(|(_, v)| !v.is_nan()).collect();
            let recorded = !rows.is_empty();
            let degenerate = recorded && rows.iter().all(|(_, v)| v.abs() <= DEGENERATE * scale);
            let (fit, error) = if !recorded {
                (None, Some("not recorded".to_string()))
            } else if degenerate {
                (None, Some("degenerate: all values at round-off level".to_string()))
            } else {
                match fit_rate(&rows, Model::Power) {
                    Ok(f) => (Some(f), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            };
            SlopeEntry {
                column,
                degenerate,
                fit,
                error,
            }
        })
        .collect();
    report.log_models = ["l2", "lp"]
        .iter()
        .filter(|c| report.slope(c).is_some_and(|s| s.fit.is_some()))
        .map(|&c| {
            let rows: Vec<(f64, f64)> = report.column(c).into_iter().filter(|(_, v)| !v.is_nan()).collect();
            let log = |scale| fit_rate(&rows, Model::PowerLog { scale }).map_err(|e| e.to_string());
            LogComparison {
                column: c.to_string(),
                power_residual: report.slope(c).and_then(|s| s.fit.as_ref()).map(|f| f.residual),
                log_c0: log(report.c0),
                log_r0: log(report.r0),
            }
        })
        .collect();
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(f: impl Fn(f64) -> f64) -> RateReport {
        let eps = [0.125, 0.0625, 0.03125, 0.015625];
        let rows = eps
            .iter()
            .enumerate()
            .map(|(id, &e)| RateRow {
                id,
                eps: e,
                h: e / 32.0,
                nodes: 0,
                l2: f(e),
                lp: f(e),
                h1_w: vec![e.sqrt()],
                h1_plain: 1.0,
                layer_h1: f64::NAN,
                weighted_layer_h1: f64::NAN,
                weighted_hess: f64::NAN,
                u0_h1: 1.0,
                iterations: [0, 0],
            })
            .collect();
        let mut r = RateReport {
            plan: ExperimentPlan::default(),
            coefficients: "synthetic".into(),
            lambda: 0.0,
            hats: CoeffValues::zeros(crate::coeff::Layout { dim: 2, m: 1 }),
            p: 4.0,
            c0: 0.05,
            r0: 2f64.sqrt(),
            variants: vec!["S1-psi4".into()],
            rows,
            failures: vec![],
            slopes: vec![],
            log_models: vec![],
            richardson: None,
            monotone_l2: true,
        };
        fit_report(&mut r);
        r
    }

    #[test]
    fn injected_rows_fit_their_exponents() {
        let r = synthetic(|e| e);
        let l2 = r.slope("l2").unwrap().fit.as_ref().unwrap();
        assert!((l2.slope - 1.0).abs() < 1e-12);
        let h1 = r.slope("h1_w").unwrap().fit.as_ref().unwrap();
        assert!((h1.slope - 0.5).abs() < 1e-12);
        assert_eq!(r.slope("layer_h1").unwrap().error.as_deref(), Some("not recorded"));
        // the layer constant is too small for eps >= c0
        assert!(r.log_models[0].log_c0.is_err());
        assert!(r.log_models[0].log_r0.is_ok());
    }

    #[test]
    fn log_data_prefers_the_log_model() {
        let r0 = 2f64.sqrt();
        let r = synthetic(|e| e * (r0 / e).ln());
        let cmp = &r.log_models[0];
        let log = cmp.log_r0.as_ref().unwrap();
        assert!(log.residual < 1e-12);
        assert!(cmp.power_residual.unwrap() > 1e3 * log.residual.max(1e-15));
    }

    #[test]
    fn zero_rows_are_degenerate() {
        let r = synthetic(|_| 0.0);
        let s = r.slope("l2").unwrap();
        assert!(s.degenerate && s.fit.is_none());
    }

    #[test]
    fn csv_layout() {
        let r = synthetic(|e| e);
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "eps,l2,lp,h1_w,layer_h1,weighted_layer_h1,weighted_hess,h1_plain,h,nodes"
        );
        assert!(lines.next().unwrap().starts_with("1.250000000000e-1,1.250000000000e-1,"));
        assert!(r.to_dat().starts_with("# eps l2"));
    }
}
