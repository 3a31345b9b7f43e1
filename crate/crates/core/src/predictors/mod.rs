//! Batch prediction functions.
//!
//! Everything the effect computations need from a model is the [`Predictor`]
//! trait: a schema and a pure `rows -> predictions` map. Built-in models,
//! closed-form simulation functions, closures and external processes all
//! implement it.

mod bagged;
mod dgp;
mod encoding;
mod external;
mod krr;
mod linear;
mod tree;

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{check_observation, Dataset, FeatureMeta, Observation, Value};
use crate::error::{Error, Result};

pub use bagged::BaggedTrees;
pub use dgp::{dgp, Dgp, DgpKind, DGP_DOMAIN, DGP_NAMES};
pub use external::{ExternalPredictor, DEFAULT_TIMEOUT};
pub use krr::{KernelRidge, KrrParams};
pub use linear::LinearModel;
pub use tree::{CartParams, SplitRule, TreeModel, TreeNode};

pub trait Predictor: Send + Sync {
    /// Features the predictor expects, in column order.
    fn features(&self) -> &[FeatureMeta];

    /// Predictions for `rows`, same length and order. Must be deterministic.
    fn predict_batch(&self, rows: &[Observation]) -> Result<Vec<f64>>;

    fn predict_one(&self, x: &[Value]) -> Result<f64> {
        Ok(self.predict_batch(&[x.to_vec()])?[0])
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn features(&self) -> &[FeatureMeta] {
        (**self).features()
    }

    fn predict_batch(&self, rows: &[Observation]) -> Result<Vec<f64>> {
        (**self).predict_batch(rows)
    }
}

impl<P: Predictor + ?Sized> Predictor for Arc<P> {
    fn features(&self) -> &[FeatureMeta] {
        (**self).features()
    }

    fn predict_batch(&self, rows: &[Observation]) -> Result<Vec<f64>> {
        (**self).predict_batch(rows)
    }
}

pub(crate) fn check_rows(features: &[FeatureMeta], rows: &[Observation]) -> Result<()> {
    rows.iter().try_for_each(|r| check_observation(features, r, true))
}

type RowFn = dyn Fn(&[Value]) -> f64 + Send + Sync;

/// Wraps a closure as a predictor.
pub struct FnPredictor {
    features: Vec<FeatureMeta>,
    f: Box<RowFn>,
}

impl FnPredictor {
    pub fn new(features: Vec<FeatureMeta>, f: impl Fn(&[Value]) -> f64 + Send + Sync + 'static) -> Self {
        FnPredictor { features, f: Box::new(f) }
    }

    /// All-continuous predictor over features named `names` (unbounded ranges).
    pub fn numeric(names: &[&str], f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        let features = names.iter().map(|n| FeatureMeta::continuous(*n, f64::MIN, f64::MAX)).collect();
        FnPredictor::new(features, move |x: &[Value]| {
            let v: Vec<f64> = x.iter().map(|v| v.as_f64().unwrap_or(f64::NAN)).collect();
            f(&v)
        })
    }

    pub fn with_features(mut self, features: Vec<FeatureMeta>) -> Self {
        self.features = features;
        self
    }
}

impl Predictor for FnPredictor {
    fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    fn predict_batch(&self, rows: &[Observation]) -> Result<Vec<f64>> {
        check_rows(&self.features, rows)?;
        Ok(rows.iter().map(|r| (self.f)(r)).collect())
    }
}

/// Fit recipe for the built-in models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Linear,
    Cart(CartParams),
    Bagged {
        #[serde(default = "default_trees")]
        trees: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default, flatten)]
        cart: CartParams,
    },
    Krr(KrrParams),
}

fn default_trees() -> usize {
    50
}

impl ModelSpec {
    pub fn from_name(name: &str) -> Result<ModelSpec> {
        Ok(match name {
            "linear" => ModelSpec::Linear,
            "cart" => ModelSpec::Cart(CartParams::default()),
            "bagged" => ModelSpec::Bagged { trees: default_trees(), seed: 0, cart: CartParams::default() },
            "krr" => ModelSpec::Krr(KrrParams::default()),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown model {other:?}; expected linear, cart, bagged or krr"
                )))
            }
        })
    }
}

/// A fitted built-in model; serializable so it can be stored and reloaded.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FittedModel {
    Linear(LinearModel),
    Cart(TreeModel),
    Bagged(BaggedTrees),
    Krr(KernelRidge),
}

impl FittedModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<FittedModel> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }

    fn inner(&self) -> &dyn Predictor {
        match self {
            FittedModel::Linear(m) => m,
            FittedModel::Cart(m) => m,
            FittedModel::Bagged(m) => m,
            FittedModel::Krr(m) => m,
        }
    }
}

impl Predictor for FittedModel {
    fn features(&self) -> &[FeatureMeta] {
        self.inner().features()
    }

    fn predict_batch(&self, rows: &[Observation]) -> Result<Vec<f64>> {
        self.inner().predict_batch(rows)
    }
}

/// Fits `spec` on `d`, predicting column `target` from all other columns.
pub fn fit_model(spec: &ModelSpec, d: &Dataset, target: &str) -> Result<FittedModel> {
    let (x, y) = d.split_target(target)?;
    if x.n() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 rows to fit, got {}", x.n())));
    }
    if x.p() == 0 {
        return Err(Error::InvalidArgument("no feature columns besides the target".into()));
    }
    Ok(match spec {
        ModelSpec::Linear => FittedModel::Linear(LinearModel::fit(&x, &y)?),
        ModelSpec::Cart(params) => FittedModel::Cart(TreeModel::fit(&x, &y, params)?),
        ModelSpec::Bagged { trees, seed, cart } => FittedModel::Bagged(BaggedTrees::fit(&x, &y, *trees, cart, *seed)?),
        ModelSpec::Krr(params) => FittedModel::Krr(KernelRidge::fit(&x, &y, params)?),
    })
}
