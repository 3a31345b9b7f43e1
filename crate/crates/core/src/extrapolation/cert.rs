use serde::{Deserialize, Serialize};

use super::{Detection, Detector, Envelope};
use crate::data::{check_observation, Dataset, FeatureMeta, Value};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CertParams {
    /// Total uniform mass on the root box; defaults to the number of rows.
    pub uniform_budget: Option<usize>,
    /// Root box; defaults to the training envelope.
    pub support: Option<Vec<(f64, f64)>>,
    /// Minimum data-plus-expected count in every child.
    pub min_node_size: f64,
    pub max_depth: usize,
    /// Minimum Gini decrease, relative to the node's weighted impurity.
    pub min_gain: f64,
}

impl Default for CertParams {
    fn default() -> Self {
        CertParams { uniform_budget: None, support: None, min_node_size: 10.0, max_depth: 30, min_gain: 0.01 }
    }
}

/// Expected number of uniform points in a box: the budget times the box's
/// share of the root hypervolume. Zero-width root dimensions are ignored.
pub fn expected_uniform_count(budget: f64, node: &[(f64, f64)], root: &[(f64, f64)]) -> f64 {
    node.iter().zip(root).fold(
        budget,
        |acc, (&(lo, hi), &(rlo, rhi))| {
            if rhi > rlo {
                acc * (hi - lo) / (rhi - rlo)
            } else {
                acc
            }
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertNode {
    pub bounds: Vec<(f64, f64)>,
    pub n_data: usize,
    pub expected_uniform: f64,
    /// `(feature, threshold, left, right)`; `x <= threshold` goes left.
    pub split: Option<(usize, f64, usize, usize)>,
}

impl CertNode {
    pub fn risk(&self) -> f64 {
        let total = self.n_data as f64 + self.expected_uniform;
        if total > 0.0 {
            self.expected_uniform / total
        } else {
            1.0
        }
    }
}

/// Classification tree of data versus a uniform background whose counts are
/// never sampled: every node carries the analytic expected uniform count.
#[derive(Clone, Debug)]
pub struct CertTree {
    features: Vec<FeatureMeta>,
    envelope: Envelope,
    nodes: Vec<CertNode>,
}

/// Weighted Gini impurity `N * 2 p (1 - p)` of `n` data and `u` uniform points.
fn impurity(n: f64, u: f64) -> f64 {
    let total = n + u;
    if total > 0.0 {
        2.0 * n * u / total
    } else {
        0.0
    }
}

impl CertTree {
    pub fn fit(d: &Dataset, params: &CertParams) -> Result<CertTree> {
        if d.is_empty() {
            return Err(Error::Empty("cannot fit CERT on zero rows".into()));
        }
        if let Some(f) = d.features().iter().find(|f| !f.is_continuous()) {
            return Err(Error::InvalidArgument(format!(
                "CERT needs box geometry; feature {:?} is categorical",
                f.name
            )));
        }
        let budget = params.uniform_budget.unwrap_or(d.n());
        if budget == 0 {
            return Err(Error::InvalidArgument("uniform budget must be at least 1".into()));
        }
        let envelope = Envelope::from_dataset(d)?;
        let root: Vec<(f64, f64)> = match &params.support {
            Some(s) if s.len() == d.p() => s.clone(),
            Some(_) => return Err(Error::Schema("support does not match the data columns".into())),
            None => envelope.intervals().into_iter().map(|b| b.expect("continuous")).collect(),
        };
        let columns: Vec<Vec<f64>> = (0..d.p()).map(|j| d.column_f64(j)).collect::<Result<_>>()?;
        let mut grower = Grower { columns: &columns, params, nodes: Vec::new() };
        let all: Vec<usize> = (0..d.n()).collect();
        grower.grow(root, budget as f64, &all, 0);
        Ok(CertTree { features: d.features().to_vec(), envelope, nodes: grower.nodes })
    }

    pub fn nodes(&self) -> &[CertNode] {
        &self.nodes
    }

    pub fn leaf(&self, x: &[Value]) -> Result<&CertNode> {
        check_observation(&self.features, x, false)?;
        let mut i = 0;
        while let Some((j, t, l, r)) = self.nodes[i].split {
            let v = x[j].as_f64().expect("checked");
            i = if v <= t { l } else { r };
        }
        Ok(&self.nodes[i])
    }

    /// Background share of `x`'s leaf; 1 outside the training envelope.
    pub fn risk(&self, x: &[Value]) -> Result<f64> {
        if self.envelope.is_outside(x)? {
            return Ok(1.0);
        }
        Ok(self.leaf(x)?.risk())
    }
}

impl Detector for CertTree {
    fn detect(&self, x: &[Value]) -> Result<Detection> {
        Ok(Detection::from_risk(self.risk(x)?))
    }
}

struct Grower<'a> {
    columns: &'a [Vec<f64>],
    params: &'a CertParams,
    nodes: Vec<CertNode>,
}

impl Grower<'_> {
    fn grow(&mut self, bounds: Vec<(f64, f64)>, uniform: f64, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let n = rows.len() as f64;
        self.nodes.push(CertNode {
            bounds: bounds.clone(),
            n_data: rows.len(),
            expected_uniform: uniform,
            split: None,
        });
        let parent = impurity(n, uniform);
        if depth >= self.params.max_depth || parent <= 0.0 {
            return id;
        }

        let min_size = self.params.min_node_size;
        // (gain, feature, threshold)
        let mut best: Option<(f64, usize, f64)> = None;
        for (j, col) in self.columns.iter().enumerate() {
            let (lo, hi) = bounds[j];
            if !(hi > lo) {
                continue;
            }
            let mut values: Vec<f64> = rows.iter().map(|&r| col[r]).collect();
            values.sort_by(f64::total_cmp);
            let mut candidates: Vec<(f64, usize)> = Vec::new();
            // empty region below the smallest value
            if let Some(&first) = values.first() {
                if first > lo {
                    candidates.push((first.next_down().max(lo), 0));
                }
            }
            for k in 0..values.len() {
                if k + 1 < values.len() && values[k + 1] == values[k] {
                    continue;
                }
                if values[k] < hi {
                    candidates.push((values[k], k + 1));
                }
            }
            for (t, n_left) in candidates {
                let u_left = uniform * (t - lo) / (hi - lo);
                let u_right = uniform - u_left;
                let n_left = n_left as f64;
                let n_right = n - n_left;
                if n_left + u_left < min_size || n_right + u_right < min_size {
                    continue;
                }
                let gain = parent - impurity(n_left, u_left) - impurity(n_right, u_right);
                if best.is_none_or(|b| gain > b.0) {
                    best = Some((gain, j, t));
                }
            }
        }
        let Some((gain, j, t)) = best else { return id };
        if gain <= self.params.min_gain * parent {
            return id;
        }

        let (lo, hi) = bounds[j];
        let mut left_bounds = bounds.clone();
        left_bounds[j] = (lo, t);
        let mut right_bounds = bounds;
        right_bounds[j] = (t, hi);
        let u_left = uniform * (t - lo) / (hi - lo);
        let u_right = uniform - u_left;
        let (l_rows, r_rows): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| self.columns[j][r] <= t);
        let left = self.grow(left_bounds, u_left, &l_rows, depth + 1);
        let right = self.grow(right_bounds, u_right, &r_rows, depth + 1);
        self.nodes[id].split = Some((j, t, left, right));
        id
    }
}
