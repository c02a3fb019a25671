//! Least-squares rate fits in log coordinates.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum Model {
    /// `e = C eps^s`, slope `s` and `C` free.
    Power,
    /// `e = C eps ln(scale / eps)`, only `C` free.
    PowerLog { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub model: Model,
    pub n: usize,
    /// Fitted exponent; fixed at 1 for the log model.
    pub slope: f64,
    pub coefficient: f64,
    /// 95% interval of the slope (power) or of the coefficient (log model).
    pub interval: [f64; 2],
    /// Root mean square of the log residuals.
    pub residual: f64,
    pub residuals: Vec<f64>,
}

fn t_quantile(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// Fits `rows = (eps, e)` under `model`.
pub fn fit_rate(rows: &[(f64, f64)], model: Model) -> Result<RateFit> {
    if rows.len() < 3 {
        return Err(Error::invalid(format!("a rate fit needs at least 3 rows, got {}", rows.len())));
    }
    if let Some(&(eps, e)) = rows.iter().find(|(eps, e)| !(*e > 0.0) || !(*eps > 0.0) || !e.is_finite()) {
        return Err(Error::invalid(format!("nonpositive value {e} at eps = {eps}")));
    }
    let n = rows.len();
    let x: Vec<f64> = rows.iter().map(|r| r.0.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
    match model {
        Model::Power => {
            let mx = x.iter().sum::<f64>() / n as f64;
            let my = y.iter().sum::<f64>() / n as f64;
            let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
            if sxx == 0.0 {
                return Err(Error::invalid("all rows share one eps"));
            }
            let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
            let slope = sxy / sxx;
            let icpt = my - slope * mx;
            let residuals: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - icpt - slope * a).collect();
            let ss: f64 = residuals.iter().map(|r| r * r).sum();
            let half = if n > 2 {
                t_quantile(n - 2) * (ss / (n - 2) as f64 / sxx).sqrt()
            } else {
                f64::INFINITY
            };
            Ok(RateFit {
                model,
                n,
                slope,
                coefficient: icpt.exp(),
                interval: [slope - half, slope + half],
                residual: (ss / n as f64).sqrt(),
                residuals,
            })
        }
        Model::PowerLog { scale } => {
            let mut g = Vec::with_capacity(n);
            for &(eps, _) in rows {
                let l = (scale / eps).ln();
                if !(l > 0.0) {
                    return Err(Error::invalid(format!(
                        "eps ln({scale} / eps) is not positive at eps = {eps}; the log model does not apply"
                    )));
                }
                g.push((eps * l).ln());
            }
            let d: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - b).collect();
            let log_c = d.iter().sum::<f64>() / n as f64;
            let residuals: Vec<f64> = d.iter().map(|v| v - log_c).collect();
            let ss: f64 = residuals.iter().map(|r| r * r).sum();
            let half = t_quantile(n - 1) * (ss / (n - 1) as f64 / n as f64).sqrt();
            Ok(RateFit {
                model,
                n,
                slope: 1.0,
                coefficient: log_c.exp(),
                interval: [(log_c - half).exp(), (log_c + half).exp()],
                residual: (ss / n as f64).sqrt(),
                residuals,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dyadic(f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
        (3..=6).map(|k| 0.5f64.powi(k)).map(|e| (e, f(e))).collect()
    }

    #[test]
    fn exact_power_laws() {
        let rows = [(0.125, 0.125), (0.0625, 0.0625), (0.03125, 0.03125)];
        let f = fit_rate(&rows, Model::Power).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        let f = fit_rate(&dyadic(f64::sqrt), Model::Power).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12);
        assert!((f.coefficient - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interval_covers_a_noisy_slope() {
        let noise = [1.03, 0.98, 1.02, 0.99];
        let rows: Vec<(f64, f64)> = dyadic(|e| 2.0 * e).into_iter().zip(noise).map(|((e, v), n)| (e, v * n)).collect();
        let f = fit_rate(&rows, Model::Power).unwrap();
        assert!(f.interval[0] < 1.0 && 1.0 < f.interval[1], "{f:?}");
        assert!(f.interval[1] - f.interval[0] < 0.2);
        assert!(f.residual > 0.0);
    }

    #[test]
    fn log_model_wins_on_log_data() {
        let rows = dyadic(|e| 0.7 * e * (1.0 / e).ln());
        let log = fit_rate(&rows, Model::PowerLog { scale: 1.0 }).unwrap();
        assert!((log.coefficient - 0.7).abs() < 1e-12);
        assert!(log.residual < 1e-12);
        let pow = fit_rate(&rows, Model::Power).unwrap();
        assert!(pow.residual > 1e3 * log.residual);
        assert!(pow.slope < 1.0);
    }

    #[test]
    fn bad_rows_are_refused() {
        assert!(fit_rate(&[(0.1, 1.0), (0.05, 0.5)], Model::Power).is_err());
        assert!(fit_rate(&[(0.1, 1.0), (0.05, 0.0), (0.025, 0.1)], Model::Power).is_err());
        assert!(fit_rate(&[(0.1, 1.0), (0.05, -1.0), (0.025, 0.1)], Model::Power).is_err());
        // ln(c0 / eps) < 0 for eps > c0
        assert!(fit_rate(&dyadic(|e| e), Model::PowerLog { scale: 0.05 }).is_err());
    }
}
