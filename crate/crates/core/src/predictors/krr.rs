use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::encoding::OneHot;
use super::{check_rows, Predictor};
use crate::data::{Dataset, FeatureMeta, Observation};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KrrParams {
    /// RBF bandwidth; `None` uses 1 / (p * median pairwise squared distance).
    pub gamma: Option<f64>,
    pub lambda: f64,
}

impl Default for KrrParams {
    fn default() -> Self {
        KrrParams { gamma: None, lambda: 1e-3 }
    }
}

/// Kernel ridge regression with an RBF kernel `exp(-gamma * |a - b|^2)` on
/// one-hot encoded rows, fitted to centered targets:
/// `f(x) = mean(y) + sum_i alpha_i k(x_i, x)` with `(K + lambda I) alpha = y - mean(y)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelRidge {
    features: Vec<FeatureMeta>,
    encoder: OneHot,
    inputs: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    gamma: f64,
    lambda: f64,
    offset: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn median_pairwise_sq_dist(xs: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(xs.len() * xs.len().saturating_sub(1) / 2);
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            d.push(sq_dist(&xs[i], &xs[j]));
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

impl KernelRidge {
    pub fn fit(x: &Dataset, y: &[f64], params: &KrrParams) -> Result<KernelRidge> {
        if params.lambda < 0.0 || !params.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", params.lambda)));
        }
        let encoder = OneHot::new(x.features(), false);
        let inputs: Vec<Vec<f64>> = x.rows().iter().map(|r| encoder.encode(r)).collect();
        let n = inputs.len();
        let gamma = match params.gamma {
            Some(g) if g > 0.0 && g.is_finite() => g,
            Some(g) => return Err(Error::InvalidArgument(format!("gamma must be > 0, got {g}"))),
            None => {
                let med = median_pairwise_sq_dist(&inputs);
                if med > 0.0 {
                    1.0 / (encoder.width() as f64 * med)
                } else {
                    1.0
                }
            }
        };
        if params.lambda == 0.0 {
            for i in 0..n {
                if inputs[i + 1..].iter().any(|other| *other == inputs[i]) {
                    return Err(Error::Numeric("duplicate rows make the unregularized kernel system singular".into()));
                }
            }
        }

        let offset = y.iter().sum::<f64>() / n as f64;
        let mut k = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = (-gamma * sq_dist(&inputs[i], &inputs[j])).exp();
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] += params.lambda;
        }
        let rhs = DVector::from_iterator(n, y.iter().map(|v| v - offset));
        let chol = k.cholesky().ok_or_else(|| Error::Numeric("kernel system is not positive definite".into()))?;
        let alpha = chol.solve(&rhs);
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::Numeric("kernel solve produced non-finite coefficients".into()));
        }
        Ok(KernelRidge {
            features: x.features().to_vec(),
            encoder,
            inputs,
            alpha: alpha.iter().copied().collect(),
            gamma,
            lambda: params.lambda,
            offset,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dual_coefficients(&self) -> &[f64] {
        &self.alpha
    }
}

impl Predictor for KernelRidge {
    fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    fn predict_batch(&self, rows: &[Observation]) -> Result<Vec<f64>> {
        check_rows(&self.features, rows)?;
        Ok(rows
            .iter()
            .map(|r| {
                let z = self.encoder.encode(r);
                self.inputs
                    .iter()
                    .zip(&self.alpha)
                    .fold(self.offset, |acc, (xi, a)| acc + a * (-self.gamma * sq_dist(xi, &z)).exp())
            })
            .collect())
    }
}
