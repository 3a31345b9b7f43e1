use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_rows, CartParams, Predictor, TreeModel};
use crate::data::{Dataset, FeatureMeta, Observation};
use crate::error::{Error, Result};

/// Bootstrap-aggregated regression trees.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BaggedTrees {
    features: Vec<FeatureMeta>,
    members: Vec<TreeModel>,
}

impl BaggedTrees {
    pub fn fit(x: &Dataset, y: &[f64], trees: usize, params: &CartParams, seed: u64) -> Result<BaggedTrees> {
        if trees == 0 {
            return Err(Error::InvalidArgument("bagging needs at least one tree".into()));
        }
        let n = x.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut members = Vec::with_capacity(trees);
        for _ in 0..trees {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let rows: Vec<Observation> = idx.iter().map(|&i| x.rows()[i].clone()).collect();
            let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            members.push(TreeModel::fit_rows(x.features(), &rows, &ys, params)?);
        }
        Ok(BaggedTrees { features: x.features().to_vec(), members })
    }

    pub fn members(&self) -> &[TreeModel] {
        &self.members
    }
}

impl Predictor for BaggedTrees {
    fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    fn predict_batch(&self, rows: &[Observation]) -> Result<Vec<f64>> {
        check_rows(&self.features, rows)?;
        let mut sum = vec![0.0; rows.len()];
        for tree in &self.members {
            for (s, p) in sum.iter_mut().zip(tree.predict_batch(rows)?) {
                *s += p;
            }
        }
        let b = self.members.len() as f64;
        Ok(sum.into_iter().map(|s| s / b).collect())
    }
}
