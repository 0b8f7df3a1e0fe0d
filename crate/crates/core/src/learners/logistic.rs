//! Logistic regression on z-scored features.
//!
//! Objective: mean log-loss + (1/C) * penalty, with penalty `0.5*||w||^2`
//! (l2) or `||w||_1` (l1). The intercept is never penalized.

use serde::{Deserialize, Serialize};

use super::{Dataset, Penalty};

const REL_TOL: f64 = 1e-8;
const MAX_ITER: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticState {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Coefficients on the standardized features.
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub iterations: u32,
    pub converged: bool,
    pub objective: f64,
}

impl LogisticState {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut z = self.intercept;
        for j in 0..self.coef.len() {
            z += self.coef[j] * (row[j] - self.mean[j]) / self.scale[j];
        }
        sigmoid(z)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn margins(x: &[f64], n_cols: usize, coef: &[f64], intercept: f64) -> Vec<f64> {
    x.chunks_exact(n_cols)
        .map(|r| intercept + r.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

fn mean_loss(z: &[f64], y: &[bool]) -> f64 {
    z.iter()
        .zip(y)
        .map(|(&z, &y)| softplus(z) - if y { z } else { 0.0 })
        .sum::<f64>()
        / z.len() as f64
}

fn penalty_value(coef: &[f64], penalty: Penalty) -> f64 {
    match penalty {
        Penalty::L2 => 0.5 * coef.iter().map(|w| w * w).sum::<f64>(),
        Penalty::L1 => coef.iter().map(|w| w.abs()).sum(),
    }
}

/// Gradient of the mean log-loss from precomputed margins.
fn loss_gradient(x: &[f64], n_cols: usize, z: &[f64], y: &[bool]) -> (Vec<f64>, f64) {
    let n = z.len() as f64;
    let mut g = vec![0.0; n_cols];
    let mut gb = 0.0;
    for (i, r) in x.chunks_exact(n_cols).enumerate() {
        let resid = sigmoid(z[i]) - if y[i] { 1.0 } else { 0.0 };
        gb += resid;
        for (gj, xj) in g.iter_mut().zip(r) {
            *gj += resid * xj;
        }
    }
    g.iter_mut().for_each(|v| *v /= n);
    (g, gb / n)
}

/// Full objective on an already standardized row-major matrix.
pub fn logistic_objective(x: &[f64], n_cols: usize, y: &[bool], coef: &[f64], intercept: f64, penalty: Penalty, c: f64) -> f64 {
    let z = margins(x, n_cols, coef, intercept);
    mean_loss(&z, y) + penalty_value(coef, penalty) / c
}

/// Gradient of [`logistic_objective`] as `(d/dcoef, d/dintercept)`. For l1
/// the penalty contributes `sign(w)/C`, which is the gradient away from zero.
pub fn logistic_gradient(x: &[f64], n_cols: usize, y: &[bool], coef: &[f64], intercept: f64, penalty: Penalty, c: f64) -> (Vec<f64>, f64) {
    let z = margins(x, n_cols, coef, intercept);
    let (mut g, gb) = loss_gradient(x, n_cols, &z, y);
    for (gj, &w) in g.iter_mut().zip(coef) {
        *gj += match penalty {
            Penalty::L2 => w / c,
            Penalty::L1 => w.signum() * (w != 0.0) as u8 as f64 / c,
        };
    }
    (g, gb)
}

fn standardize(data: &Dataset) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (n, p) = (data.n_rows(), data.n_cols);
    let mut mean = vec![0.0; p];
    for r in data.x.chunks_exact(p) {
        for j in 0..p {
            mean[j] += r[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; p];
    for r in data.x.chunks_exact(p) {
        for j in 0..p {
            let d = r[j] - mean[j];
            var[j] += d * d;
        }
    }
    let scale: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = (v / n as f64).sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let xs = data
        .x
        .chunks_exact(p)
        .flat_map(|r| (0..p).map(|j| (r[j] - mean[j]) / scale[j]).collect::<Vec<_>>())
        .collect();
    (xs, mean, scale)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Gradient descent (l2) or proximal gradient (l1), both with backtracking.
pub(crate) fn fit(data: &Dataset, penalty: Penalty, c: f64) -> LogisticState {
    let p = data.n_cols;
    let y = &data.y;
    let (xs, mean, scale) = standardize(data);
    let prior = y.iter().filter(|&&b| b).count() as f64 / y.len() as f64;
    let mut coef = vec![0.0; p];
    let mut intercept = (prior / (1.0 - prior)).ln();
    let mut z = margins(&xs, p, &coef, intercept);
    let mut smooth = mean_loss(&z, y);
    let mut f = smooth + penalty_value(&coef, penalty) / c;
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let (mut g, gb) = loss_gradient(&xs, p, &z, y);
        if penalty == Penalty::L2 {
            g.iter_mut().zip(&coef).for_each(|(gj, w)| *gj += w / c);
        }
        step *= 2.0;
        let accepted = loop {
            let new_coef: Vec<f64> = match penalty {
                Penalty::L2 => coef.iter().zip(&g).map(|(w, gj)| w - step * gj).collect(),
                Penalty::L1 => coef
                    .iter()
                    .zip(&g)
                    .map(|(w, gj)| soft_threshold(w - step * gj, step / c))
                    .collect(),
            };
            let new_b = intercept - step * gb;
            let new_z = margins(&xs, p, &new_coef, new_b);
            let new_smooth = mean_loss(&new_z, y);
            let ok = match penalty {
                Penalty::L2 => {
                    let sq = g.iter().map(|v| v * v).sum::<f64>() + gb * gb;
                    new_smooth + penalty_value(&new_coef, penalty) / c <= f - 0.5 * step * sq
                }
                Penalty::L1 => {
                    let mut lin = (new_b - intercept) * gb;
                    let mut sq = (new_b - intercept).powi(2);
                    for j in 0..p {
                        let d = new_coef[j] - coef[j];
                        lin += d * g[j];
                        sq += d * d;
                    }
                    new_smooth <= smooth + lin + sq / (2.0 * step)
                }
            };
            if ok {
                break Some((new_coef, new_b, new_z, new_smooth));
            }
            step *= 0.5;
            if step < 1e-20 {
                break None;
            }
        };
        let Some((new_coef, new_b, new_z, new_smooth)) = accepted else {
            converged = true;
            break;
        };
        let new_f = new_smooth + penalty_value(&new_coef, penalty) / c;
        let change = (f - new_f).abs() / f.abs().max(f64::MIN_POSITIVE);
        coef = new_coef;
        intercept = new_b;
        z = new_z;
        smooth = new_smooth;
        f = new_f;
        if change < REL_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("logistic regression stopped after {MAX_ITER} iterations without converging");
    }
    LogisticState {
        mean,
        scale,
        coef,
        intercept,
        iterations,
        converged,
        objective: f,
    }
}
