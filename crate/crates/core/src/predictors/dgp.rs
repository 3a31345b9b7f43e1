use serde::{Deserialize, Serialize};

use super::{check_rows, Predictor};
use crate::data::{FeatureMeta, Observation};
use crate::error::{Error, Result};

/// Closed-form simulation functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    /// `x` for `x < 0`, `5 sin(2x)` otherwise.
    Univariate,
    /// Univariate branch in `x1` plus `x2`.
    BivariateAdditive,
    /// Univariate branch in `x1` times `x2`.
    BivariateMultiplicative,
}

pub const DGP_NAMES: [&str; 3] = ["univariate", "bivariate_additive", "bivariate_multiplicative"];

/// Simulation domain of every input.
pub const DGP_DOMAIN: (f64, f64) = (-5.0, 5.0);

#[derive(Clone, Debug)]
pub struct Dgp {
    kind: DgpKind,
    features: Vec<FeatureMeta>,
}

fn branch(x: f64) -> f64 {
    if x < 0.0 {
        x
    } else {
        5.0 * (2.0 * x).sin()
    }
}

impl Dgp {
    pub fn new(kind: DgpKind) -> Self {
        let (lo, hi) = DGP_DOMAIN;
        let features = match kind {
            DgpKind::Univariate => vec![FeatureMeta::continuous("x", lo, hi)],
            DgpKind::BivariateAdditive | DgpKind::BivariateMultiplicative => {
                vec![FeatureMeta::continuous("x1", lo, hi), FeatureMeta::continuous("x2", lo, hi)]
            }
        };
        Dgp { kind, features }
    }

    pub fn kind(&self) -> DgpKind {
        self.kind
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self.kind {
            DgpKind::Univariate => branch(x[0]),
            DgpKind::BivariateAdditive => branch(x[0]) + x[1],
            DgpKind::BivariateMultiplicative => branch(x[0]) * x[1],
        }
    }
}

/// Looks up a registered simulation function by name.
pub fn dgp(name: &str) -> Result<Dgp> {
    let kind = match name {
        "univariate" => DgpKind::Univariate,
        "bivariate_additive" => DgpKind::BivariateAdditive,
        "bivariate_multiplicative" => DgpKind::BivariateMultiplicative,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown data-generating process {other:?}; registered: {}",
                DGP_NAMES.join(", ")
            )))
        }
    };
    Ok(Dgp::new(kind))
}

impl Predictor for Dgp {
    fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    fn predict_batch(&self, rows: &[Observation]) -> Result<Vec<f64>> {
        check_rows(&self.features, rows)?;
        Ok(rows
            .iter()
            .map(|r| {
                let v: Vec<f64> = r.iter().map(|v| v.as_f64().expect("checked")).collect();
                self.eval(&v)
            })
            .collect())
    }
}
