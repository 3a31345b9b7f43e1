use serde::{Deserialize, Serialize};

use super::{check_rows, Predictor};
use crate::data::{Dataset, FeatureMeta, Observation, Value};
use crate::error::{Error, Result};
use crate::split::{self, ColumnData, NodeSearch, RawRule};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartParams {
    /// Minimum number of training rows in every leaf.
    pub min_node_size: usize,
    pub max_depth: usize,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams { min_node_size: 10, max_depth: 30 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// `x <= threshold` goes left.
    Threshold(f64),
    /// Listed categories go left, all others right.
    Categories(Vec<String>),
}

impl SplitRule {
    pub fn goes_left(&self, v: &Value) -> bool {
        match (self, v) {
            (SplitRule::Threshold(t), Value::Num(x)) => x <= t,
            (SplitRule::Categories(set), Value::Cat(c)) => set.contains(c),
            _ => false,
        }
    }

    pub(crate) fn from_raw(raw: &RawRule, meta: &FeatureMeta) -> SplitRule {
        match raw {
            RawRule::Threshold(t) => SplitRule::Threshold(*t),
            RawRule::Categories(set) => {
                let cats = meta.categories().unwrap_or(&[]);
                SplitRule::Categories(set.iter().filter_map(|&i| cats.get(i).cloned()).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf { value: f64, n: usize },
    Split { feature: usize, rule: SplitRule, left: usize, right: usize },
}

/// Regression tree with mean-of-leaf predictions, grown by greedy
/// variance-reduction splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    features: Vec<FeatureMeta>,
    nodes: Vec<TreeNode>,
}

impl TreeModel {
    pub fn fit(x: &Dataset, y: &[f64], params: &CartParams) -> Result<TreeModel> {
        TreeModel::fit_rows(x.features(), x.rows(), y, params)
    }

    pub(crate) fn fit_rows(
        features: &[FeatureMeta],
        rows: &[Observation],
        y: &[f64],
        params: &CartParams,
    ) -> Result<TreeModel> {
        if rows.len() != y.len() {
            return Err(Error::Schema(format!("{} rows but {} targets", rows.len(), y.len())));
        }
        if rows.is_empty() {
            return Err(Error::Empty("cannot fit a tree on zero rows".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite target value".into()));
        }
        check_rows(features, rows)?;
        let cols = split::columns(features, rows);
        let mut grower = Grower { cols: &cols, y, params: *params, features, nodes: Vec::new() };
        let all: Vec<usize> = (0..rows.len()).collect();
        grower.grow(&all, 0);
        Ok(TreeModel { features: features.to_vec(), nodes: grower.nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    /// Index of the leaf `x` falls into.
    pub fn leaf_index(&self, x: &[Value]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { .. } => return i,
                TreeNode::Split { feature, rule, left, right } => {
                    i = if rule.goes_left(&x[*feature]) { *left } else { *right }
                }
            }
        }
    }

    fn leaf_value(&self, x: &[Value]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            TreeNode::Leaf { value, .. } => value,
            TreeNode::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }
}

struct Grower<'a> {
    cols: &'a [ColumnData],
    y: &'a [f64],
    params: CartParams,
    features: &'a [FeatureMeta],
    nodes: Vec<TreeNode>,
}

impl Grower<'_> {
    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let local: Vec<f64> = rows.iter().map(|&r| self.y[r]).collect();
        let value = local.iter().sum::<f64>() / local.len() as f64;
        self.nodes.push(TreeNode::Leaf { value, n: rows.len() });

        let node_sse = split::sse(local.iter().copied());
        if depth >= self.params.max_depth || node_sse <= 0.0 {
            return id;
        }
        let Some(best) = NodeSearch::new(self.cols, rows, self.params.min_node_size).best(&local) else {
            return id;
        };
        if best.gain <= 1e-12 * node_sse {
            return id;
        }
        let (l, r) = split::partition(self.cols, rows, &best);
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature: best.feature,
            rule: SplitRule::from_raw(&best.rule, &self.features[best.feature]),
            left,
            right,
        };
        id
    }
}

impl Predictor for TreeModel {
    fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    fn predict_batch(&self, rows: &[Observation]) -> Result<Vec<f64>> {
        check_rows(&self.features, rows)?;
        Ok(rows.iter().map(|r| self.leaf_value(r)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::numeric;
    use proptest::prelude::*;

    fn one_split() -> CartParams {
        CartParams { min_node_size: 1, max_depth: 30 }
    }

    #[test]
    fn sign_data_gives_single_split() {
        let d = Dataset::from_numeric(&["x"], &[vec![-1.0], vec![1.0]]).unwrap();
        let t = TreeModel::fit(&d, &[-1.0, 1.0], &one_split()).unwrap();
        assert_eq!(t.n_leaves(), 2);
        match &t.nodes()[0] {
            TreeNode::Split { rule: SplitRule::Threshold(th), .. } => assert!(*th > -1.0 && *th <= 1.0),
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(t.predict_batch(&[numeric(&[-0.5]), numeric(&[3.0])]).unwrap(), [-1.0, 1.0]);
    }

    #[test]
    fn categorical_subset_split() {
        let rows: Vec<Observation> =
            ["a", "b", "c", "a", "b", "c"].iter().map(|c| vec![Value::Cat(c.to_string())]).collect();
        let d = Dataset::from_rows(&["c"], rows).unwrap();
        let t = TreeModel::fit(&d, &[1.0, 5.0, 1.0, 1.0, 5.0, 1.0], &one_split()).unwrap();
        let p = t.predict_batch(&[vec!["a".into()], vec!["b".into()], vec!["c".into()]]).unwrap();
        assert_eq!(p, [1.0, 5.0, 1.0]);
        assert!(t.predict_batch(&[vec!["z".into()]]).is_err());
    }

    #[test]
    fn depth_and_size_limits() {
        let rows: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..64).map(|i| (i * i) as f64).collect();
        let d = Dataset::from_numeric(&["x"], &rows).unwrap();
        let stump = TreeModel::fit(&d, &y, &CartParams { min_node_size: 1, max_depth: 1 }).unwrap();
        assert_eq!(stump.n_leaves(), 2);
        let t = TreeModel::fit(&d, &y, &CartParams { min_node_size: 10, max_depth: 30 }).unwrap();
        for node in t.nodes() {
            if let TreeNode::Leaf { n, .. } = node {
                assert!(*n >= 10);
            }
        }
    }

    proptest! {
        #[test]
        fn piecewise_constant_within_leaf(seed in 0u64..200, probe in -1.0f64..11.0, jitter in 0.0f64..1.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.random_range(0.0..10.0)]).collect();
            let y: Vec<f64> = rows.iter().map(|r| r[0].sin() + rng.random_range(-0.1..0.1)).collect();
            let d = Dataset::from_numeric(&["x"], &rows).unwrap();
            let t = TreeModel::fit(&d, &y, &CartParams { min_node_size: 3, max_depth: 8 }).unwrap();
            // find the cell around `probe` from the thresholds and move inside it
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            let x = numeric(&[probe]);
            let mut i = 0;
            while let TreeNode::Split { rule: SplitRule::Threshold(th), left, right, .. } = &t.nodes()[i] {
                if probe <= *th { hi = hi.min(*th); i = *left } else { lo = lo.max(*th); i = *right }
            }
            let lo = if lo.is_finite() { lo } else { probe - 1.0 };
            let hi = if hi.is_finite() { hi } else { probe + 1.0 };
            let moved = lo + (hi - lo) * jitter.max(1e-9);
            let moved = if moved <= lo { hi } else { moved };
            prop_assert_eq!(t.predict_one(&x).unwrap(), t.predict_one(&numeric(&[moved])).unwrap());
        }
    }
}
