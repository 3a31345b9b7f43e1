use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::encoding::OneHot;
use super::{check_rows, Predictor};
use crate::data::{Dataset, FeatureMeta, Observation};
use crate::error::{Error, Result};

/// Ordinary least squares with intercept; categorical features use
/// reference (drop-first) dummy coding.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearModel {
    features: Vec<FeatureMeta>,
    encoder: OneHot,
    intercept: f64,
    coefficients: Vec<f64>,
}

impl LinearModel {
    pub fn fit(x: &Dataset, y: &[f64]) -> Result<LinearModel> {
        let encoder = OneHot::new(x.features(), true);
        let n = x.n();
        let k = encoder.width() + 1;
        if n < k {
            return Err(Error::Numeric(format!("singular design: {n} rows for {k} coefficients")));
        }
        let mut design = DMatrix::<f64>::zeros(n, k);
        for (i, row) in x.rows().iter().enumerate() {
            design[(i, 0)] = 1.0;
            for (j, v) in encoder.encode(row).into_iter().enumerate() {
                design[(i, j + 1)] = v;
            }
        }
        let svd = design.svd(true, true);
        let max_sv = svd.singular_values.max();
        let min_sv = svd.singular_values.min();
        if !(min_sv > 1e-10 * max_sv) {
            return Err(Error::Numeric("singular design matrix".into()));
        }
        let beta = svd.solve(&DVector::from_column_slice(y), 0.0).map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(LinearModel {
            features: x.features().to_vec(),
            encoder,
            intercept: beta[0],
            coefficients: beta.iter().skip(1).copied().collect(),
        })
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    /// Coefficients of the encoded columns.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
}

impl Predictor for LinearModel {
    fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    fn predict_batch(&self, rows: &[Observation]) -> Result<Vec<f64>> {
        check_rows(&self.features, rows)?;
        Ok(rows
            .iter()
            .map(|r| {
                self.encoder.encode(r).iter().zip(&self.coefficients).fold(self.intercept, |acc, (x, b)| acc + x * b)
            })
            .collect())
    }
}
