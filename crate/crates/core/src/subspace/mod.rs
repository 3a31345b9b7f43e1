//! Conditional average marginal effects on feature subspaces.
//!
//! A binary tree partitions the rows of an effect table so that fMEs within
//! each leaf are homogeneous. Splits are chosen greedily by variance
//! reduction and only kept when a within-node permutation test finds the
//! best split significant. Each node carries a summary: the conditional AME
//! (cAME), the spread of its fMEs, the conditional average NLM (cANLM) and
//! t-based confidence intervals.

mod export;
mod stats;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_observation, mean, sample_sd, Dataset, FeatureMeta, Value};
use crate::effects::EffectTable;
use crate::error::{Error, Result};
use crate::extrapolation::Envelope;
use crate::predictors::SplitRule;
use crate::split::{columns, partition, NodeSearch};

pub use stats::{confidence_interval, t_quantile};

/// |cAME| below this leaves the coefficient of variation undefined.
/// Relative RMS deviation below which a node's fMEs count as constant.
pub const CONSTANT_TOLERANCE: f64 = 1e-10;

pub const COV_EPSILON: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    /// Significance level of the permutation test.
    pub alpha: f64,
    /// Minimum number of rows in every leaf.
    pub min_node_size: usize,
    pub max_depth: usize,
    pub permutations: usize,
    pub seed: u64,
    /// Level of the leaf confidence intervals.
    pub ci_alpha: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { alpha: 0.05, min_node_size: 30, max_depth: 5, permutations: 199, seed: 0, ci_alpha: 0.05 }
    }
}

impl TreeParams {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(self.ci_alpha > 0.0 && self.ci_alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("ci_alpha must be in (0, 1), got {}", self.ci_alpha)));
        }
        if self.min_node_size == 0 {
            return Err(Error::InvalidArgument("min_node_size must be at least 1".into()));
        }
        if self.permutations == 0 {
            return Err(Error::InvalidArgument("permutations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Range of one feature within a subspace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureRange {
    Interval { min: f64, max: f64 },
    Categories(Vec<String>),
}

impl std::fmt::Display for FeatureRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureRange::Interval { min, max } => write!(f, "[{min}, {max}]"),
            FeatureRange::Categories(cs) => write!(f, "{{{}}}", cs.join(", ")),
        }
    }
}

/// Observed ranges of every feature of `d`.
pub fn global_ranges(d: &Dataset) -> Result<Vec<FeatureRange>> {
    let env = Envelope::from_dataset(d)?;
    Ok(env
        .bounds()
        .iter()
        .map(|b| match b {
            crate::extrapolation::Bound::Interval { min, max } => FeatureRange::Interval { min: *min, max: *max },
            crate::extrapolation::Bound::Categories(cs) => FeatureRange::Categories(cs.clone()),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceSummary {
    pub n: usize,
    pub came: f64,
    /// Sample standard deviation (n - 1 denominator); `None` for one row.
    pub sd_fme: Option<f64>,
    /// `sd_fme / |came|`; `None` when the cAME is (numerically) zero.
    pub cov_fme: Option<f64>,
    pub canlm: Option<f64>,
    /// Rows whose NLM was undefined and left out of the cANLM.
    pub nlm_dropped: usize,
    pub sd_nlm: Option<f64>,
    pub cov_nlm: Option<f64>,
    pub ranges: Vec<FeatureRange>,
    pub ci_came: Option<(f64, f64)>,
    pub ci_canlm: Option<(f64, f64)>,
}

fn cov(sd: Option<f64>, m: f64) -> Option<f64> {
    sd.filter(|_| m.abs() >= COV_EPSILON).map(|s| s / m.abs())
}

/// Summary of one subspace. `nlms` is `None` when no NLMs were computed;
/// otherwise undefined entries are dropped from the cANLM and counted.
pub fn summarize(
    fmes: &[f64],
    nlms: Option<&[Option<f64>]>,
    ranges: Vec<FeatureRange>,
    ci_alpha: f64,
) -> Result<SubspaceSummary> {
    if fmes.is_empty() {
        return Err(Error::Empty("summary of an empty subspace".into()));
    }
    let n = fmes.len();
    let came = mean(fmes);
    let sd_fme = sample_sd(fmes);
    let ci_came = match sd_fme {
        Some(sd) => Some(confidence_interval(came, sd, n, ci_alpha)?),
        None => None,
    };
    let (mut canlm, mut nlm_dropped, mut sd_nlm, mut ci_canlm) = (None, 0, None, None);
    if let Some(nlms) = nlms {
        let defined: Vec<f64> = nlms.iter().flatten().copied().collect();
        nlm_dropped = nlms.len() - defined.len();
        if !defined.is_empty() {
            let m = mean(&defined);
            canlm = Some(m);
            sd_nlm = sample_sd(&defined);
            if let Some(sd) = sd_nlm {
                ci_canlm = Some(confidence_interval(m, sd, defined.len(), ci_alpha)?);
            }
        }
    }
    Ok(SubspaceSummary {
        n,
        came,
        sd_fme,
        cov_fme: cov(sd_fme, came),
        canlm,
        nlm_dropped,
        sd_nlm,
        cov_nlm: canlm.and_then(|m| cov(sd_nlm, m)),
        ranges,
        ci_came,
        ci_canlm,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSplit {
    pub feature: usize,
    pub rule: SplitRule,
    pub left: usize,
    pub right: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionNode {
    pub depth: usize,
    /// Dataset row indices of the records in this node.
    pub rows: Vec<usize>,
    /// Permutation p-value of the best split found here, if one was tested.
    pub p_value: Option<f64>,
    pub split: Option<TreeSplit>,
    pub summary: SubspaceSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionTree {
    features: Vec<FeatureMeta>,
    params: TreeParams,
    nodes: Vec<PartitionNode>,
}

/// A routed observation: its leaf, the leaf's summary and whether the
/// observation lies outside the training envelope.
#[derive(Clone, Debug, PartialEq)]
pub struct Routed<'a> {
    pub leaf: usize,
    pub summary: &'a SubspaceSummary,
    pub caution: bool,
}

/// Fits a partition tree on the fMEs of `table`, whose records are rows of `d`.
pub fn fit_effect_tree(d: &Dataset, table: &EffectTable, params: &TreeParams) -> Result<PartitionTree> {
    params.validate()?;
    if table.feature_names.iter().map(String::as_str).ne(d.names()) {
        return Err(Error::Schema("effect table and dataset have different columns".into()));
    }
    let need = 2 * params.min_node_size;
    if table.records.len() < need {
        return Err(Error::Empty(format!(
            "{} evaluable records; the effect tree needs at least {need} (twice the minimum node size)",
            table.records.len()
        )));
    }
    let anchors: Vec<_> = table.records.iter().map(|r| r.anchor.clone()).collect();
    let cols = columns(d.features(), &anchors);
    let y: Vec<f64> = table.records.iter().map(|r| r.fme).collect();
    let nlms: Option<Vec<Option<f64>>> = if table.records.iter().any(|r| r.nlm.is_some()) {
        Some(table.records.iter().map(|r| r.nlm.as_ref().and_then(|n| n.nlm)).collect())
    } else {
        None
    };
    let mut grower = Grower {
        features: d.features(),
        cols: &cols,
        y: &y,
        nlms: nlms.as_deref(),
        record_rows: table.records.iter().map(|r| r.row).collect(),
        params,
        rng: ChaCha8Rng::seed_from_u64(params.seed),
        nodes: Vec::new(),
    };
    let all: Vec<usize> = (0..y.len()).collect();
    grower.grow(&all, global_ranges(d)?, 0)?;
    Ok(PartitionTree { features: d.features().to_vec(), params: params.clone(), nodes: grower.nodes })
}

struct Grower<'a> {
    features: &'a [FeatureMeta],
    cols: &'a [crate::split::ColumnData],
    y: &'a [f64],
    nlms: Option<&'a [Option<f64>]>,
    record_rows: Vec<usize>,
    params: &'a TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<PartitionNode>,
}

impl Grower<'_> {
    fn grow(&mut self, idx: &[usize], ranges: Vec<FeatureRange>, depth: usize) -> Result<usize> {
        let fmes: Vec<f64> = idx.iter().map(|&i| self.y[i]).collect();
        let nlms: Option<Vec<Option<f64>>> = self.nlms.map(|v| idx.iter().map(|&i| v[i]).collect());
        let summary = summarize(&fmes, nlms.as_deref(), ranges.clone(), self.params.ci_alpha)?;
        let id = self.nodes.len();
        self.nodes.push(PartitionNode {
            depth,
            rows: idx.iter().map(|&i| self.record_rows[i]).collect(),
            p_value: None,
            split: None,
            summary,
        });
        if depth >= self.params.max_depth {
            return Ok(id);
        }
        let search = NodeSearch::new(self.cols, idx, self.params.min_node_size);
        let Some(best) = search.best(&fmes) else {
            return Ok(id);
        };
        let node_sse = crate::split::sse(fmes.iter().copied());
        let scale = fmes.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // rounding noise of an effectively constant node is not heterogeneity
        if (node_sse / fmes.len() as f64).sqrt() <= CONSTANT_TOLERANCE * scale || !(best.gain > 1e-12 * node_sse) {
            return Ok(id);
        }

        let shuffles: Vec<Vec<f64>> = (0..self.params.permutations)
            .map(|_| {
                let mut p = fmes.clone();
                p.shuffle(&mut self.rng);
                p
            })
            .collect();
        let threshold = best.gain * (1.0 - 1e-12);
        let at_least = shuffles.par_iter().filter(|p| search.best(p).is_some_and(|c| c.gain >= threshold)).count();
        let p_value = (1 + at_least) as f64 / (self.params.permutations + 1) as f64;
        self.nodes[id].p_value = Some(p_value);
        if p_value > self.params.alpha {
            return Ok(id);
        }

        let rule = SplitRule::from_raw(&best.rule, &self.features[best.feature]);
        let (l_idx, r_idx) = partition(self.cols, idx, &best);
        let (l_ranges, r_ranges) = narrow(&ranges, best.feature, &rule);
        let left = self.grow(&l_idx, l_ranges, depth + 1)?;
        let right = self.grow(&r_idx, r_ranges, depth + 1)?;
        self.nodes[id].split = Some(TreeSplit { feature: best.feature, rule, left, right });
        Ok(id)
    }
}

fn narrow(ranges: &[FeatureRange], j: usize, rule: &SplitRule) -> (Vec<FeatureRange>, Vec<FeatureRange>) {
    let mut left = ranges.to_vec();
    let mut right = ranges.to_vec();
    match (rule, &ranges[j]) {
        (SplitRule::Threshold(t), FeatureRange::Interval { min, max }) => {
            left[j] = FeatureRange::Interval { min: *min, max: max.min(*t) };
            right[j] = FeatureRange::Interval { min: min.max(*t), max: *max };
        }
        (SplitRule::Categories(set), FeatureRange::Categories(cs)) => {
            left[j] = FeatureRange::Categories(cs.iter().filter(|c| set.contains(c)).cloned().collect());
            right[j] = FeatureRange::Categories(cs.iter().filter(|c| !set.contains(c)).cloned().collect());
        }
        _ => {}
    }
    (left, right)
}

impl PartitionTree {
    pub fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn nodes(&self) -> &[PartitionNode] {
        &self.nodes
    }

    pub fn root(&self) -> &PartitionNode {
        &self.nodes[0]
    }

    /// Leaf ids, left to right.
    pub fn leaves(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            match &self.nodes[i].split {
                Some(s) => {
                    stack.push(s.right);
                    stack.push(s.left);
                }
                None => out.push(i),
            }
        }
        out
    }

    pub fn node_summary(&self, node: usize) -> Result<&SubspaceSummary> {
        self.nodes
            .get(node)
            .map(|n| &n.summary)
            .ok_or_else(|| Error::InvalidArgument(format!("no node {node}; the tree has {}", self.nodes.len())))
    }

    /// Leaf of `x`; values equal to a threshold go left.
    pub fn leaf_of(&self, x: &[Value]) -> Result<usize> {
        check_observation(&self.features, x, false)?;
        let mut i = 0;
        while let Some(s) = &self.nodes[i].split {
            i = if s.rule.goes_left(&x[s.feature]) { s.left } else { s.right };
        }
        Ok(i)
    }

    /// Routes `x` to a leaf, with a caution flag when it lies outside `envelope`.
    pub fn route(&self, x: &[Value], envelope: &Envelope) -> Result<Routed<'_>> {
        let leaf = self.leaf_of(x)?;
        Ok(Routed { leaf, summary: &self.nodes[leaf].summary, caution: envelope.is_outside(x)? })
    }

    /// Names of the features used in at least one split.
    pub fn split_features(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for n in &self.nodes {
            if let Some(s) = &n.split {
                let name = self.features[s.feature].name.as_str();
                if !out.contains(&name) {
                    out.push(name);
                }
            }
        }
        out
    }

    /// Leaf id of every dataset row covered by the tree.
    pub fn leaf_assignment(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> =
            self.leaves().into_iter().flat_map(|l| self.nodes[l].rows.iter().map(move |&r| (r, l))).collect();
        out.sort_unstable();
        out
    }
}

/// Same as [`PartitionTree::route`].
pub fn route<'a>(tree: &'a PartitionTree, x: &[Value], envelope: &Envelope) -> Result<Routed<'a>> {
    tree.route(x, envelope)
}

impl FeatureRange {
    /// True when `other` is contained in this range.
    pub fn contains(&self, other: &FeatureRange) -> bool {
        match (self, other) {
            (FeatureRange::Interval { min, max }, FeatureRange::Interval { min: a, max: b }) => min <= a && b <= max,
            (FeatureRange::Categories(cs), FeatureRange::Categories(ds)) => ds.iter().all(|d| cs.contains(d)),
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests;
