//! L2-regularized logistic regression fitted by damped Newton iterations.
//!
//! Features are standardized with training means and scales; the penalty
//! applies to the standardized weights, not to the intercept.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            l2: 1e-3,
            max_iter: 50,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub bias: f64,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticModel {
    /// A model acting on raw features (no standardization).
    pub fn from_weights(bias: f64, weights: Vec<f64>) -> Self {
        let n = weights.len();
        LogisticModel {
            bias,
            weights,
            means: vec![0.0; n],
            scales: vec![1.0; n],
        }
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        self.bias
            + x.iter()
                .zip(&self.weights)
                .zip(self.means.iter().zip(&self.scales))
                .map(|((xi, w), (m, s))| w * (xi - m) / s)
                .sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }
}

/// Mean log-loss plus `l2 / 2 * |w|^2` and its gradient, for parameters laid
/// out as `[bias, w_1, ..., w_d]` acting on `x` as given.
pub fn loss_and_gradient(params: &[f64], x: &[Vec<f64>], y: &[bool], l2: f64) -> (f64, Vec<f64>) {
    let d = params.len() - 1;
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (row, &label) in x.iter().zip(y) {
        let z = params[0] + row.iter().zip(&params[1..]).map(|(a, b)| a * b).sum::<f64>();
        let t = if label { 1.0 } else { 0.0 };
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        grad[0] += r;
        for j in 0..d {
            grad[j + 1] += r * row[j];
        }
    }
    loss /= n;
    for g in &mut grad {
        *g /= n;
    }
    for j in 1..=d {
        loss += 0.5 * l2 * params[j] * params[j];
        grad[j] += l2 * params[j];
    }
    (loss, grad)
}

fn hessian(params: &[f64], x: &[Vec<f64>], l2: f64) -> Vec<Vec<f64>> {
    let d = params.len();
    let n = x.len() as f64;
    let mut h = vec![vec![0.0; d]; d];
    let mut aug = vec![1.0; d];
    for row in x {
        aug[1..].copy_from_slice(row);
        let z: f64 = aug.iter().zip(params).map(|(a, b)| a * b).sum();
        let p = sigmoid(z);
        let w = p * (1.0 - p);
        for i in 0..d {
            let wi = w * aug[i];
            for j in 0..=i {
                h[i][j] += wi * aug[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            h[i][j] /= n;
            h[j][i] = h[i][j];
        }
        h[i][i] += if i == 0 { 1e-10 } else { l2 };
    }
    h
}

/// Solves `a x = b` for symmetric positive definite `a` by Cholesky.
fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = a[i][i] - s;
                if v <= 0.0 {
                    return None;
                }
                l[i][j] = v.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * z[k]).sum();
        z[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (z[i] - s) / l[i][i];
    }
    Some(x)
}

/// Fits the model; returns it with the training loss after each iteration.
pub fn fit(x: &[Vec<f64>], y: &[bool], params: &LogisticParams) -> Result<(LogisticModel, Vec<f64>)> {
    let d = x.first().map(Vec::len).unwrap_or(0);
    let n = x.len() as f64;
    let mut means = vec![0.0; d];
    for row in x {
        for j in 0..d {
            means[j] += row[j];
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut scales = vec![0.0; d];
    for row in x {
        for j in 0..d {
            scales[j] += (row[j] - means[j]).powi(2);
        }
    }
    for s in &mut scales {
        *s = (*s / n).sqrt();
        if !(*s > 1e-12) {
            *s = 1.0;
        }
    }
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|row| (0..d).map(|j| (row[j] - means[j]) / scales[j]).collect())
        .collect();

    let pos = y.iter().filter(|&&b| b).count() as f64;
    let prior = (pos / n).clamp(1e-6, 1.0 - 1e-6);
    let mut theta = vec![0.0; d + 1];
    theta[0] = (prior / (1.0 - prior)).ln();
    let (mut loss, mut grad) = loss_and_gradient(&theta, &z, y, params.l2);
    let mut log = vec![loss];
    for _ in 0..params.max_iter {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < params.tol {
            break;
        }
        let h = hessian(&theta, &z, params.l2);
        let step = cholesky_solve(&h, &grad)
            .ok_or_else(|| Error::InvalidInput("logistic Hessian is not positive definite".into()))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            let (l, g) = loss_and_gradient(&cand, &z, y, params.l2);
            if l <= loss {
                theta = cand;
                loss = l;
                grad = g;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        log.push(loss);
        if !accepted {
            break;
        }
    }
    Ok((
        LogisticModel {
            bias: theta[0],
            weights: theta[1..].to_vec(),
            means,
            scales,
        },
        log,
    ))
}
