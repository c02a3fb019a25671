//! Fourier collocation on the periodic cell grid.

use std::f64::consts::TAU;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::coeff::CellGrid;

/// FFT plans and wavenumbers for one [`CellGrid`].
///
/// First derivatives use the symbol `2 pi i k` with the Nyquist mode zeroed,
/// so the discrete gradient is real and skew-adjoint. The discrete Laplacian
/// is the composition `D_j D_j`; its null space consists of the modes whose
/// every component is `0` or `N/2`.
#[derive(Clone)]
pub struct Spectral {
    pub grid: CellGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Derivative symbol per 1D index (already multiplied by 2 pi, Nyquist 0).
    symbol: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

impl Spectral {
    pub fn new(grid: CellGrid) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.n;
        let symbol = (0..n)
            .map(|t| {
                if 2 * t == n {
                    0.0
                } else if t < n / 2 {
                    TAU * t as f64
                } else {
                    TAU * (t as f64 - n as f64)
                }
            })
            .collect();
        Spectral {
            grid,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            symbol,
        }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.grid.n;
        let d = self.grid.dim;
        let plan = if inverse { &self.inverse } else { &self.forward };
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for axis in 0..d {
            let stride = n.pow((d - 1 - axis) as u32);
            let outer = n.pow(axis as u32);
            if stride == 1 {
                for chunk in data.chunks_exact_mut(n) {
                    plan.process_with_scratch(chunk, &mut scratch);
                }
                continue;
            }
            for o in 0..outer {
                for inner in 0..stride {
                    let start = o * n * stride + inner;
                    for (t, l) in line.iter_mut().enumerate() {
                        *l = data[start + t * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (t, l) in line.iter().enumerate() {
                        data[start + t * stride] = *l;
                    }
                }
            }
        }
        if inverse {
            let scale = 1.0 / data.len() as f64;
            for v in data.iter_mut() {
                *v *= scale;
            }
        }
    }

    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut c, false);
        c
    }

    /// Inverse transform, keeping the real part.
    pub fn inverse_real(&self, mut c: Vec<Complex64>) -> Vec<f64> {
        self.transform(&mut c, true);
        c.into_iter().map(|z| z.re).collect()
    }

    /// Derivative symbols (times 2 pi) of a flat spectral index.
    #[inline]
    pub fn wave(&self, flat: usize) -> [f64; 3] {
        let k = self.grid.multi_index(flat);
        let mut w = [0.0; 3];
        for a in 0..self.grid.dim {
            w[a] = self.symbol[k[a]];
        }
        w
    }

    /// True for the modes annihilated by the discrete gradient.
    #[inline]
    pub fn is_null_mode(&self, flat: usize) -> bool {
        let w = self.wave(flat);
        w[..self.grid.dim].iter().all(|&x| x == 0.0)
    }

    /// Multiplies a spectrum by `i * symbol_axis` in place.
    pub fn differentiate_hat(&self, hat: &mut [Complex64], axis: usize) {
        for (p, z) in hat.iter_mut().enumerate() {
            let w = self.wave(p)[axis];
            *z = Complex64::new(-w * z.im, w * z.re);
        }
    }

    pub fn derivative(&self, f: &[f64], axis: usize) -> Vec<f64> {
        let mut hat = self.forward(f);
        self.differentiate_hat(&mut hat, axis);
        self.inverse_real(hat)
    }

    /// All first derivatives of `f`.
    pub fn gradient(&self, f: &[f64]) -> Vec<Vec<f64>> {
        let hat = self.forward(f);
        (0..self.grid.dim)
            .map(|a| {
                let mut h = hat.clone();
                self.differentiate_hat(&mut h, a);
                self.inverse_real(h)
            })
            .collect()
    }

    /// Mean-zero solution of `D_j D_j u = f` with null modes of `f` dropped.
    pub fn inverse_laplacian(&self, f: &[f64]) -> Vec<f64> {
        let mut hat = self.forward(f);
        for (p, z) in hat.iter_mut().enumerate() {
            let w = self.wave(p);
            let s: f64 = w[..self.grid.dim].iter().map(|x| x * x).sum();
            *z = if s == 0.0 { Complex64::new(0.0, 0.0) } else { *z / (-s) };
        }
        self.inverse_real(hat)
    }

    /// `D_j D_j f`.
    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        let mut hat = self.forward(f);
        for (p, z) in hat.iter_mut().enumerate() {
            let w = self.wave(p);
            let s: f64 = w[..self.grid.dim].iter().map(|x| x * x).sum();
            *z *= -s;
        }
        self.inverse_real(hat)
    }

    /// Norm of the part of `f` living on null modes (including the mean).
    pub fn null_mode_norm(&self, f: &[f64]) -> f64 {
        let hat = self.forward(f);
        let n = f.len() as f64;
        hat.iter()
            .enumerate()
            .filter(|(p, _)| self.is_null_mode(*p))
            .map(|(_, z)| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
            / n.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::PeriodicArray;

    #[test]
    fn derivative_of_sine() {
        let g = CellGrid::new(16, 2).unwrap();
        let s = Spectral::new(g);
        let f = PeriodicArray::from_fn(g, |y| (TAU * y[0]).sin() * (2.0 * TAU * y[1]).cos());
        let d1 = s.derivative(&f.data, 0);
        let d2 = s.derivative(&f.data, 1);
        for p in 0..g.len() {
            let y = g.point(p);
            let e1 = TAU * (TAU * y[0]).cos() * (2.0 * TAU * y[1]).cos();
            let e2 = -2.0 * TAU * (TAU * y[0]).sin() * (2.0 * TAU * y[1]).sin();
            assert!((d1[p] - e1).abs() < 1e-11);
            assert!((d2[p] - e2).abs() < 1e-11);
        }
    }

    #[test]
    fn single_mode_inversion() {
        let g = CellGrid::new(16, 2).unwrap();
        let s = Spectral::new(g);
        let w = PeriodicArray::from_fn(g, |y| (TAU * y[0]).cos());
        let th = s.inverse_laplacian(&w.data);
        for p in 0..g.len() {
            let y = g.point(p);
            let e = -(TAU * y[0]).cos() / (TAU * TAU);
            assert!((th[p] - e).abs() < 1e-15);
        }
    }

    #[test]
    fn three_dimensional_transform_round_trip() {
        let g = CellGrid::new(8, 3).unwrap();
        let s = Spectral::new(g);
        let f = PeriodicArray::from_fn(g, |y| (TAU * (y[0] + 2.0 * y[2])).sin() + y[1]);
        let back = s.inverse_real(s.forward(&f.data));
        for (a, b) in back.iter().zip(&f.data) {
            assert!((a - b).abs() < 1e-13);
        }
        let d = s.derivative(&f.data, 2);
        for p in 0..g.len() {
            let y = g.point(p);
            assert!((d[p] - 2.0 * TAU * (TAU * (y[0] + 2.0 * y[2])).cos()).abs() < 1e-11);
        }
    }

    #[test]
    fn gradient_is_skew_adjoint() {
        let g = CellGrid::new(16, 2).unwrap();
        let s = Spectral::new(g);
        let f = PeriodicArray::from_fn(g, |y| (y[0] * 7.0).sin() + y[1] * y[1]);
        let h = PeriodicArray::from_fn(g, |y| (y[1] * 3.0).cos() * y[0]);
        let df = s.derivative(&f.data, 0);
        let dh = s.derivative(&h.data, 0);
        let a: f64 = df.iter().zip(&h.data).map(|(x, y)| x * y).sum();
        let b: f64 = f.data.iter().zip(&dh).map(|(x, y)| x * y).sum();
        assert!((a + b).abs() < 1e-9 * a.abs().max(1.0));
    }
}
