//! Zero-mean Gaussian process with a squared-exponential kernel on
//! standardized targets.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::{HyperoptError, Result};

pub const JITTER: f64 = 1e-6;

/// Candidate length scales for the marginal-likelihood grid search.
pub fn length_scale_grid() -> Vec<f64> {
    (0..25).map(|i| 10f64.powf(-2.0 + 3.0 * i as f64 / 24.0)).collect()
}

const SWEEPS: usize = 3;

#[derive(Debug, Clone)]
pub struct GaussianProcess {
    pub length_scales: Vec<f64>,
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_std: f64,
    chol: Vec<f64>,
    alpha: Vec<f64>,
}

fn kernel(a: &[f64], b: &[f64], ls: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).zip(ls).map(|((x, y), l)| ((x - y) / l).powi(2)).sum();
    (-0.5 * d2).exp()
}

/// Lower Cholesky factor of an `n x n` row-major matrix.
fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn forward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= l[i * n + k] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    x
}

fn backward_sub(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= l[k * n + i] * x[k];
        }
        x[i] /= l[i * n + i];
    }
    x
}

struct Fit {
    chol: Vec<f64>,
    alpha: Vec<f64>,
    log_ml: f64,
}

fn fit_fixed(x: &[Vec<f64>], y: &[f64], ls: &[f64]) -> Option<Fit> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            k[i * n + j] = kernel(&x[i], &x[j], ls);
        }
        k[i * n + i] += JITTER;
    }
    let chol = cholesky(&k, n)?;
    let alpha = backward_sub(&chol, n, &forward_sub(&chol, n, y));
    let data_fit: f64 = y.iter().zip(&alpha).map(|(a, b)| a * b).sum();
    let log_det: f64 = (0..n).map(|i| chol[i * n + i].ln()).sum::<f64>() * 2.0;
    let log_ml = -0.5 * data_fit - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    Some(Fit { chol, alpha, log_ml })
}

const REFINE_STEPS: usize = 3;

/// Iterative refinement of `alpha` toward the jitter-free system `K alpha = y`,
/// using the jittered factor as preconditioner, so the mean interpolates
/// observations beyond the jitter's `1e-6 * alpha` offset.
fn refine(x: &[Vec<f64>], y: &[f64], ls: &[f64], chol: &[f64], mut alpha: Vec<f64>) -> Vec<f64> {
    let n = x.len();
    for _ in 0..REFINE_STEPS {
        let resid: Vec<f64> = (0..n)
            .map(|i| y[i] - (0..n).map(|j| kernel(&x[i], &x[j], ls) * alpha[j]).sum::<f64>())
            .collect();
        let delta = backward_sub(chol, n, &forward_sub(chol, n, &resid));
        for (a, d) in alpha.iter_mut().zip(delta) {
            *a += d;
        }
    }
    alpha
}

impl GaussianProcess {
    /// Fits length scales by coordinate-wise grid search on the log marginal
    /// likelihood, then conditions on `(x, y)`.
    pub fn fit(x: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(HyperoptError::Gp("need matching non-empty inputs".into()));
        }
        let dims = x[0].len();
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / y.len() as f64;
        let y_std = if var > 0.0 { var.sqrt() } else { 1.0 };
        let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_std).collect();

        let grid = length_scale_grid();
        let mut ls = vec![0.3; dims];
        let mut best = fit_fixed(x, &ys, &ls).map(|f| f.log_ml).unwrap_or(f64::NEG_INFINITY);
        for _ in 0..SWEEPS {
            let mut changed = false;
            for d in 0..dims {
                for &g in &grid {
                    let mut trial = ls.clone();
                    trial[d] = g;
                    if let Some(f) = fit_fixed(x, &ys, &trial) {
                        if f.log_ml > best {
                            best = f.log_ml;
                            ls = trial;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let fit = fit_fixed(x, &ys, &ls).ok_or_else(|| HyperoptError::Gp("kernel matrix not positive definite".into()))?;
        let alpha = refine(x, &ys, &ls, &fit.chol, fit.alpha);
        Ok(Self {
            length_scales: ls,
            x: x.to_vec(),
            y_mean,
            y_std,
            chol: fit.chol,
            alpha,
        })
    }

    /// Posterior mean and variance of the latent function, original units.
    /// The jitter is treated as numerical noise and removed from the
    /// variance, so it is exactly 0 at observed points.
    pub fn predict(&self, p: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let k: Vec<f64> = self.x.iter().map(|xi| kernel(xi, p, &self.length_scales)).collect();
        let mean: f64 = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let v = forward_sub(&self.chol, n, &k);
        let var = (1.0 - v.iter().map(|x| x * x).sum::<f64>() - JITTER).max(0.0);
        (self.y_mean + self.y_std * mean, var * self.y_std * self.y_std)
    }

    /// Expected improvement below `best` (minimization), never negative.
    pub fn expected_improvement(&self, p: &[f64], best: f64) -> f64 {
        let (mu, var) = self.predict(p);
        let sigma = var.sqrt();
        let gain = best - mu;
        if sigma <= 0.0 {
            return gain.max(0.0);
        }
        let z = gain / sigma;
        let n = Normal::standard();
        (gain * n.cdf(z) + sigma * n.pdf(z)).max(0.0)
    }
}
