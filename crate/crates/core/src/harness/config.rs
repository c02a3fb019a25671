//! TOML configuration: coefficients, cell grid and the experiment plan.
//!
//! ```toml
//! [plan]
//! preset = "laminate"        # coefficient preset; [coefficients] entries override it
//! domain = "square"
//! bc = "dirichlet"
//! eps = [0.125, 0.0625, 0.03125, 0.015625]
//! h_ratio = 32.0             # h = eps / h_ratio
//! load = ["1+x1*x2"]
//! boundary = { kind = "piecewise-linear", values = [[0], [1], [0.5], [-0.5]] }
//!
//! [coefficients]             # 1-based indices i,j,alpha,beta (A), i,alpha,beta (V, B), alpha,beta (c)
//! a = { "1,1,1,1" = "2+sin(2*pi*y1)" }
//!
//! [grid]
//! n = 128
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coeff::{parse_expr, preset, CellGrid, CoefficientSet, Scope};
use crate::domain::PolygonDomain;
use crate::error::{Error, Result};
use crate::fem::{BcKind, BoundaryData, Load, ProblemData};
use crate::twoscale::Variant;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub plan: ExperimentPlan,
    pub coefficients: CoefficientEntries,
    pub grid: GridSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientEntries {
    pub d: Option<usize>,
    pub m: Option<usize>,
    pub lambda: Option<f64>,
    pub kappa: Option<f64>,
    pub symmetric_a: Option<bool>,
    pub a: BTreeMap<String, String>,
    pub v: BTreeMap<String, String>,
    pub b: BTreeMap<String, String>,
    pub c: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection { n: 128 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowNorm {
    L2,
    Lp,
    H1W,
    LayerH1,
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundarySpec {
    Zero,
    /// One expression in `x1, x2` per component.
    Expr { exprs: Vec<String> },
    /// `values[edge][alpha]`.
    PiecewiseConstant { values: Vec<Vec<f64>> },
    /// `values[vertex][alpha]`.
    PiecewiseLinear { values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub preset: String,
    pub domain: String,
    pub bc: BcKind,
    /// Strictly decreasing.
    pub eps: Vec<f64>,
    /// `h = eps / h_ratio`, unless `h` is given.
    pub h_ratio: f64,
    /// Fixed mesh size for every row.
    pub h: Option<f64>,
    /// `F`, one expression per component or one for all.
    pub load: Vec<String>,
    /// Dirichlet `g` or Neumann `h`; a piecewise default when absent.
    pub boundary: Option<BoundarySpec>,
    pub norms: Vec<RowNorm>,
    /// Layer depth `t = layer_factor * eps` for the layer columns.
    pub layer_factor: f64,
    /// The first variant gives `h1_w`, the others extra columns.
    pub variants: Vec<String>,
    /// Solve the largest eps again at `h / 2`.
    pub richardson: bool,
    pub seed: u64,
    pub workers: usize,
    pub solver_tol: f64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            preset: "laminate".into(),
            domain: "square".into(),
            bc: BcKind::Dirichlet,
            eps: vec![0.125, 0.0625, 0.03125, 0.015625],
            h_ratio: 32.0,
            h: None,
            load: vec!["1+x1*x2".into()],
            boundary: None,
            norms: vec![RowNorm::L2, RowNorm::Lp, RowNorm::H1W, RowNorm::LayerH1, RowNorm::Weighted],
            layer_factor: 2.0,
            variants: vec!["S1-psi4".into(), "S1-psi1".into()],
            richardson: true,
            seed: 0,
            workers: 1,
            solver_tol: 1e-10,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Config> {
        Config::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn cell_grid(&self, dim: usize) -> Result<CellGrid> {
        CellGrid::new(self.grid.n, dim)
    }

    /// The preset with every `[coefficients]` entry applied.
    pub fn coefficients(&self) -> Result<CoefficientSet> {
        let e = &self.coefficients;
        let mut c = preset(&self.plan.preset, self.plan.seed)?;
        let (d, m) = (e.d.unwrap_or(c.dim()), e.m.unwrap_or(c.m()));
        if (d, m) != (c.dim(), c.m()) {
            // a different shape starts from the identity operator
            c = CoefficientSet::identity(d, m, c.lambda);
        }
        if let Some(l) = e.lambda {
            c.lambda = l;
        }
        if e.kappa.is_some() {
            c.kappa = e.kappa;
        }
        if let Some(s) = e.symmetric_a {
            c.symmetric_a = s;
        }
        let l = c.layout;
        let scope = Scope::cell(d);
        let table: [(&str, &BTreeMap<String, String>, usize); 4] = [("a", &e.a, 4), ("v", &e.v, 3), ("b", &e.b, 3), ("c", &e.c, 2)];
        for (which, entries, arity) in table {
            for (key, src) in entries {
                let idx = parse_index(key, arity, d, m).map_err(|msg| Error::Config(format!("{which}[{key}]: {msg}")))?;
                let expr = parse_expr(src, scope).map_err(|err| Error::Config(format!("{which}[{key}]: {err}")))?;
                let flat = match which {
                    "a" => l.a(idx[0], idx[1], idx[2], idx[3]),
                    "v" | "b" => l.v(idx[0], idx[1], idx[2]),
                    _ => l.c(idx[0], idx[1]),
                };
                match which {
                    "a" => c.a[flat] = expr,
                    "v" => c.v[flat] = expr,
                    "b" => c.b[flat] = expr,
                    _ => c.c[flat] = expr,
                }
            }
        }
        if e.a.values().chain(e.v.values()).chain(e.b.values()).chain(e.c.values()).next().is_some() {
            c.name = format!("{}+custom", c.name);
        }
        Ok(c)
    }
}

fn parse_index(key: &str, arity: usize, d: usize, m: usize) -> std::result::Result<Vec<usize>, String> {
    let parts: Vec<&str> = key.split(',').map(str::trim).collect();
    if parts.len() != arity {
        return Err(format!("expected {arity} comma-separated indices"));
    }
    let mut out = vec![];
    for (k, p) in parts.iter().enumerate() {
        let v: usize = p.parse().map_err(|_| format!("`{p}` is not an index"))?;
        // the leading indices of a, v, b are axes, the rest components
        let axes = match arity {
            4 => 2,
            3 => 1,
            _ => 0,
        };
        let bound = if k < axes { d } else { m };
        if v == 0 || v > bound {
            return Err(format!("index {v} outside 1..={bound}"));
        }
        out.push(v - 1);
    }
    Ok(out)
}

impl ExperimentPlan {
    pub fn domain(&self) -> Result<PolygonDomain> {
        PolygonDomain::preset(&self.domain)
    }

    pub fn mesh_size(&self, eps: f64) -> f64 {
        self.h.unwrap_or(eps / self.h_ratio)
    }

    pub fn variants(&self) -> Result<Vec<Variant>> {
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant is needed".into()));
        }
        self.variants.iter().map(|s| Variant::parse(s)).collect()
    }

    /// Structural checks that need no solve.
    pub fn validate(&self) -> Result<()> {
        if self.eps.is_empty() {
            return Err(Error::Config("empty eps list".into()));
        }
        for (k, e) in self.eps.iter().enumerate() {
            if !(*e > 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("row {k}: eps = {e} is not positive")));
            }
            if k > 0 && !(*e < self.eps[k - 1]) {
                return Err(Error::Config(format!("row {k}: eps list must be strictly decreasing")));
            }
        }
        if self.h.is_none() && !(self.h_ratio > 0.0) {
            return Err(Error::Config(format!("h_ratio = {} is not positive", self.h_ratio)));
        }
        if let Some(h) = self.h {
            if !(h > 0.0) {
                return Err(Error::Config(format!("h = {h} is not positive")));
            }
        }
        if !(self.layer_factor > 0.0) {
            return Err(Error::Config("layer_factor must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.variants()?;
        Ok(())
    }

    pub fn load_data(&self, m: usize) -> Result<Load> {
        // a single expression is used for every component
        let srcs: Vec<&String> = match self.load.len() {
            1 => vec![&self.load[0]; m],
            n if n == m => self.load.iter().collect(),
            n => return Err(Error::Config(format!("{n} load expressions for {m} components"))),
        };
        let exprs = srcs
            .into_iter()
            .map(|s| parse_expr(s, Scope::physical(2)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Load::Expr(exprs))
    }

    /// The boundary data, defaulting to a piecewise linear `g` or piecewise
    /// constant `h` cycling through `0, 1, 0.5, -0.5` resp. `1, -0.5, 0.25, 2`.
    pub fn boundary_data(&self, domain: &PolygonDomain, m: usize) -> Result<BoundaryData> {
        let n = domain.vertices.len();
        let cycle = |pattern: [f64; 4]| -> Vec<Vec<f64>> { (0..n).map(|k| vec![pattern[k % 4]; m]).collect() };
        let spec = self.boundary.clone().unwrap_or(match self.bc {
            BcKind::Dirichlet => BoundarySpec::PiecewiseLinear {
                values: cycle([0.0, 1.0, 0.5, -0.5]),
            },
            BcKind::Neumann => BoundarySpec::PiecewiseConstant {
                values: cycle([1.0, -0.5, 0.25, 2.0]),
            },
        });
        let check_m = |v: &Vec<Vec<f64>>| {
            if v.iter().any(|r| r.len() != m) {
                Err(Error::Config(format!("boundary values need {m} components each")))
            } else {
                Ok(())
            }
        };
        match spec {
            BoundarySpec::Zero => Ok(BoundaryData::Zero),
            BoundarySpec::Expr { exprs } => {
                if exprs.len() != m {
                    return Err(Error::Config(format!("{} boundary expressions for {m} components", exprs.len())));
                }
                let e = exprs
                    .iter()
                    .map(|s| parse_expr(s, Scope::physical(2)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(BoundaryData::Expr(e))
            }
            BoundarySpec::PiecewiseConstant { values } => {
                check_m(&values)?;
                BoundaryData::piecewise_constant(domain, values)
            }
            BoundarySpec::PiecewiseLinear { values } => {
                check_m(&values)?;
                BoundaryData::piecewise_linear(domain, values)
            }
        }
    }

    pub fn problem(&self, domain: &PolygonDomain, m: usize, eps: f64) -> Result<ProblemData> {
        let load = self.load_data(m)?;
        let bd = self.boundary_data(domain, m)?;
        Ok(match self.bc {
            BcKind::Dirichlet => ProblemData::dirichlet(load, bd, eps),
            BcKind::Neumann => ProblemData::neumann(load, bd, eps),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        let back = Config::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, back);
        c.plan.validate().unwrap();
        assert_eq!(c.plan.mesh_size(0.125), 0.125 / 32.0);
    }

    #[test]
    fn overrides_apply() {
        let c = Config::from_toml(
            r#"
            [plan]
            preset = "identity"
            eps = [0.25, 0.125, 0.0625]
            [coefficients]
            lambda = 3.0
            a = { "1,1,1,1" = "2+sin(2*pi*y1)" }
            c = { "1,1" = "0.5" }
            "#,
        )
        .unwrap();
        let k = c.coefficients().unwrap();
        assert_eq!(k.lambda, 3.0);
        assert!((k.a[0].eval_periodic(&[0.25, 0.0]) - 3.0).abs() < 1e-15);
        assert_eq!(k.c[0].as_constant(), Some(0.5));
        assert_eq!(c.plan.eps.len(), 3);
    }

    #[test]
    fn malformed_configs_are_refused() {
        assert!(Config::from_toml("[plan]\nbogus = 1").is_err());
        let c = Config::from_toml("[coefficients]\na = { \"1,1,3,1\" = \"1\" }").unwrap();
        assert!(matches!(c.coefficients(), Err(Error::Config(_))));
        let c = Config::from_toml("[coefficients]\na = { \"1,1,1,1\" = \"sin(y3)\" }").unwrap();
        assert!(c.coefficients().is_err());
        let mut p = ExperimentPlan::default();
        p.eps = vec![0.125, 0.25];
        assert!(p.validate().is_err());
        p.eps = vec![0.125];
        p.variants = vec!["S3-psi4".into()];
        assert!(p.validate().is_err());
    }

    #[test]
    fn default_boundary_cycles_over_vertices() {
        let p = ExperimentPlan::default();
        let l = PolygonDomain::preset("l-shape").unwrap();
        assert!(matches!(p.boundary_data(&l, 1).unwrap(), BoundaryData::PerVertex { ref values, .. } if values.len() == 6));
    }
}
