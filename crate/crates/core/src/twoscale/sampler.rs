//! Evaluation of Y-periodic cell fields at `x / eps`.

use crate::cell::{CellData, TensorField};
use crate::coeff::CellGrid;
use crate::error::{Error, Result};

/// Bilinear interpolation of a field on a 2D cell grid at `frac(y)`.
pub fn sample_periodic(field: &[f64], grid: CellGrid, y: [f64; 2]) -> f64 {
    let n = grid.n;
    let (i0, i1, u) = periodic_cell(y[0], n);
    let (j0, j1, v) = periodic_cell(y[1], n);
    (1.0 - u) * ((1.0 - v) * field[i0 * n + j0] + v * field[i0 * n + j1])
        + u * ((1.0 - v) * field[i1 * n + j0] + v * field[i1 * n + j1])
}

#[inline]
fn periodic_cell(y: f64, n: usize) -> (usize, usize, f64) {
    let t = (y - y.floor()) * n as f64;
    let i = (t.floor() as usize).min(n - 1);
    (i, (i + 1) % n, t - i as f64)
}

/// `field(x / eps)` at every point.
pub fn sample_periodic_at_scale(field: &[f64], grid: CellGrid, epsilon: f64, points: &[[f64; 2]]) -> Result<Vec<f64>> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if grid.dim != 2 || field.len() != grid.len() {
        return Err(Error::invalid("field does not match a 2D cell grid"));
    }
    Ok(points
        .iter()
        .map(|p| sample_periodic(field, grid, [p[0] / epsilon, p[1] / epsilon]))
        .collect())
}

/// The cell fields used by the two-scale residuals, interleaved per grid
/// point so that one bilinear gather yields all of them.
///
/// Slots, each an `m x m` block `alpha * m + gamma`:
/// `chi[k]`, `grad chi[k][j]`, `b[i][k]`, `grad theta[k][i]`, `E[j][i][k]`.
pub struct PackedCell {
    pub grid: CellGrid,
    pub dim: usize,
    pub m: usize,
    stride: usize,
    data: Vec<f64>,
}

impl PackedCell {
    pub fn new(cell: &CellData) -> Result<Self> {
        let (d, m) = (cell.dim(), cell.m());
        if d != 2 {
            return Err(Error::Unsupported("two-scale fields are implemented for d = 2".into()));
        }
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Missing(format!("cell data lacks {what}")))
            }
        };
        need(cell.chi.len() == d + 1, "correctors")?;
        need(cell.chi_grad.len() == d + 1, "corrector derivatives")?;
        need(cell.b.len() == d * (d + 1), "flux fields b")?;
        need(cell.theta_grad.len() == d + 1, "theta derivatives")?;
        need(cell.e.len() == d * d * (d + 1), "flux correctors E")?;
        let mut blocks: Vec<&TensorField> = vec![];
        blocks.extend(cell.chi.iter());
        for k in 0..=d {
            blocks.extend(cell.chi_grad[k].iter());
        }
        blocks.extend(cell.b.iter());
        for k in 0..=d {
            blocks.extend(cell.theta_grad[k].iter());
        }
        blocks.extend(cell.e.iter());
        let mm = m * m;
        let stride = blocks.len() * mm;
        let n = cell.grid.len();
        let mut data = vec![0.0; n * stride];
        for (bi, blk) in blocks.iter().enumerate() {
            for ab in 0..mm {
                let src = &blk.comps[ab];
                for p in 0..n {
                    data[p * stride + bi * mm + ab] = src[p];
                }
            }
        }
        Ok(PackedCell {
            grid: cell.grid,
            dim: d,
            m,
            stride,
            data,
        })
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    /// Bilinear values of every slot at `frac(y)`.
    pub fn eval(&self, y: [f64; 2], out: &mut [f64]) {
        let n = self.grid.n;
        let (i0, i1, u) = periodic_cell(y[0], n);
        let (j0, j1, v) = periodic_cell(y[1], n);
        let corners = [
            (i0 * n + j0, (1.0 - u) * (1.0 - v)),
            (i0 * n + j1, (1.0 - u) * v),
            (i1 * n + j0, u * (1.0 - v)),
            (i1 * n + j1, u * v),
        ];
        out[..self.stride].fill(0.0);
        for (p, w) in corners {
            let src = &self.data[p * self.stride..(p + 1) * self.stride];
            for (o, s) in out.iter_mut().zip(src) {
                *o += w * s;
            }
        }
    }

    #[inline]
    fn mm(&self) -> usize {
        self.m * self.m
    }

    #[inline]
    pub fn chi(&self, k: usize, al: usize, ga: usize) -> usize {
        k * self.mm() + al * self.m + ga
    }

    /// `d_{y_j} chi_k`, `j` an axis.
    #[inline]
    pub fn chi_grad(&self, k: usize, j: usize, al: usize, ga: usize) -> usize {
        let d = self.dim;
        ((d + 1) + k * d + j) * self.mm() + al * self.m + ga
    }

    /// `b_ik`, `i` an axis.
    #[inline]
    pub fn b(&self, i: usize, k: usize, al: usize, ga: usize) -> usize {
        let d = self.dim;
        ((d + 1) * (d + 1) + i * (d + 1) + k) * self.mm() + al * self.m + ga
    }

    /// `d_{y_i} theta_k`.
    #[inline]
    pub fn theta_grad(&self, k: usize, i: usize, al: usize, ga: usize) -> usize {
        let d = self.dim;
        ((d + 1) * (2 * d + 1) + k * d + i) * self.mm() + al * self.m + ga
    }

    /// `E_jik`.
    #[inline]
    pub fn e(&self, j: usize, i: usize, k: usize, al: usize, ga: usize) -> usize {
        let d = self.dim;
        ((d + 1) * (3 * d + 1) + (j * d + i) * (d + 1) + k) * self.mm() + al * self.m + ga
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{parse_expr, sample_field, Scope};

    #[test]
    fn constant_and_lattice_values() {
        let g = CellGrid::new(16, 2).unwrap();
        let one = vec![1.5; g.len()];
        for x in [[0.3, 0.7], [-1.2, 5.5]] {
            let v = sample_periodic_at_scale(&one, g, 0.125, &[x]).unwrap();
            assert!((v[0] - 1.5).abs() < 1e-15);
        }
        let s = sample_field(&parse_expr("sin(2*pi*y1)", Scope::cell(2)).unwrap(), g).unwrap();
        let v = sample_periodic_at_scale(&s.data, g, 0.125, &[[1.0 / 16.0, 0.0]]).unwrap();
        assert!(v[0].abs() < 1e-15);
        assert!(sample_periodic_at_scale(&s.data, g, 0.0, &[[0.0, 0.0]]).is_err());
    }

    #[test]
    fn bilinear_error_is_second_order() {
        let e = parse_expr("cos(2*pi*y1)*sin(2*pi*y2)+0.3*sin(4*pi*y1)", Scope::cell(2)).unwrap();
        let pts: Vec<[f64; 2]> = (0..200).map(|k| [0.013 * k as f64, 0.0071 * k as f64 + 0.1]).collect();
        let err = |n: usize| {
            let g = CellGrid::new(n, 2).unwrap();
            let s = sample_field(&e, g).unwrap();
            let v = sample_periodic_at_scale(&s.data, g, 1.0, &pts).unwrap();
            pts.iter()
                .zip(&v)
                .map(|(p, v)| (v - e.eval_periodic(p)).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e1 < 40.0 / (32.0 * 32.0));
        assert!((e1 / e2 - 4.0).abs() < 0.6, "{e1} {e2}");
    }
}
