use serde::{Deserialize, Serialize};

use super::expr::ScalarFieldExpr;
use crate::error::{Error, Result};

/// Uniform periodic sampling of the unit cell `Y = [0,1)^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellGrid {
    pub n: usize,
    pub dim: usize,
}

impl CellGrid {
    pub fn new(n: usize, dim: usize) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::invalid(format!(
                "cell grid resolution must be a power of two >= 8, got {n}"
            )));
        }
        if !(2..=3).contains(&dim) {
            return Err(Error::Unsupported(format!("cell dimension {dim}")));
        }
        Ok(CellGrid { n, dim })
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Multi-index of a flat row-major index (first axis slowest).
    pub fn multi_index(&self, mut flat: usize) -> [usize; 3] {
        let mut k = [0usize; 3];
        for axis in (0..self.dim).rev() {
            k[axis] = flat % self.n;
            flat /= self.n;
        }
        k
    }

    pub fn flat_index(&self, k: &[usize]) -> usize {
        k.iter().take(self.dim).fold(0, |acc, &ki| acc * self.n + (ki % self.n))
    }

    /// Coordinates `k / N` of a flat index.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let k = self.multi_index(flat);
        let h = self.spacing();
        [k[0] as f64 * h, k[1] as f64 * h, k[2] as f64 * h]
    }

    /// Same grid at twice the resolution (sample points plus midpoints).
    pub fn refined(&self) -> Self {
        CellGrid {
            n: self.n * 2,
            dim: self.dim,
        }
    }
}

/// Samples of a periodic scalar field on a [`CellGrid`], row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicArray {
    pub grid: CellGrid,
    pub data: Vec<f64>,
}

impl PeriodicArray {
    pub fn zeros(grid: CellGrid) -> Self {
        PeriodicArray {
            grid,
            data: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: CellGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let data = (0..grid.len())
            .map(|i| {
                let p = grid.point(i);
                f(&p[..grid.dim])
            })
            .collect();
        PeriodicArray { grid, data }
    }

    /// Pairwise-summed mean over the cell.
    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.data) / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.data.iter().map(|v| v * v).collect();
        (pairwise_sum(&sq) / self.data.len() as f64).sqrt()
    }
}

/// Fixed-order pairwise summation so reductions are reproducible.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Pairwise-summed mean of a slice.
pub fn pairwise_sum_mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    pairwise_sum(v) / v.len() as f64
}

/// Samples `expr` at every grid point; any non-finite value is an error.
pub fn sample_field(expr: &ScalarFieldExpr, grid: CellGrid) -> Result<PeriodicArray> {
    if expr.scope().dim != grid.dim {
        return Err(Error::invalid(format!(
            "expression scope has dimension {}, grid has {}",
            expr.scope().dim,
            grid.dim
        )));
    }
    let mut data = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let p = grid.point(i);
        let v = expr.eval(&p[..grid.dim]);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                value: v,
                point: p[..grid.dim].to_vec(),
            });
        }
        data.push(v);
    }
    Ok(PeriodicArray { grid, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::expr::{parse_expr, Scope};
    use proptest::prelude::*;

    #[test]
    fn grid_rejects_bad_resolution() {
        assert!(CellGrid::new(4, 2).is_err());
        assert!(CellGrid::new(12, 2).is_err());
        assert!(CellGrid::new(16, 2).is_ok());
    }

    #[test]
    fn constant_samples() {
        let g = CellGrid::new(8, 2).unwrap();
        let a = sample_field(&parse_expr("1", Scope::cell(2)).unwrap(), g).unwrap();
        assert_eq!(a.data.len(), 64);
        assert!(a.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn sine_samples_along_axis_one() {
        // N = 4 is below the grid minimum, so sample N = 8 and read every other point.
        let g = CellGrid::new(8, 2).unwrap();
        let a = sample_field(&parse_expr("sin(2*pi*y1)", Scope::cell(2)).unwrap(), g).unwrap();
        let along: Vec<f64> = (0..8).step_by(2).map(|k| a.data[g.flat_index(&[k, 0])]).collect();
        let want = [0.0, 1.0, 0.0, -1.0];
        for (v, w) in along.iter().zip(want) {
            assert!((v - w).abs() < 1e-15, "{along:?}");
        }
    }

    #[test]
    fn pole_on_grid_is_rejected() {
        let g = CellGrid::new(8, 2).unwrap();
        let e = parse_expr("1/(y1-0.25)", Scope::cell(2)).unwrap();
        match sample_field(&e, g) {
            Err(Error::NonFinite { point, .. }) => assert_eq!(point[0], 0.25),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn index_round_trip() {
        let g = CellGrid::new(8, 3).unwrap();
        for i in [0, 7, 63, 100, 511] {
            let k = g.multi_index(i);
            assert_eq!(g.flat_index(&k), i);
        }
    }

    proptest! {
        #[test]
        fn sampling_is_linear(a in 0.1f64..3.0, b in 0.1f64..3.0) {
            let g = CellGrid::new(8, 2).unwrap();
            let s = Scope::cell(2);
            let e1 = parse_expr(&format!("{a}*sin(2*pi*y1)"), s).unwrap();
            let e2 = parse_expr(&format!("{b}*cos(2*pi*y2)*y1"), s).unwrap();
            let sum = parse_expr(&format!("{a}*sin(2*pi*y1)+{b}*cos(2*pi*y2)*y1"), s).unwrap();
            let (s1, s2, ss) = (sample_field(&e1, g).unwrap(), sample_field(&e2, g).unwrap(), sample_field(&sum, g).unwrap());
            for i in 0..g.len() {
                prop_assert!((s1.data[i] + s2.data[i] - ss.data[i]).abs() < 1e-12);
            }
        }
    }
}
