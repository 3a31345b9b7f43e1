//! Greedy variance-reduction split search shared by the regression trees.
//!
//! Continuous candidates sit at midpoints between consecutive distinct values
//! (`<=` goes left). Categorical candidates are prefixes of the categories
//! ordered by node mean, which is optimal for squared error. Ties keep the
//! first candidate found: lowest feature index, then lowest threshold.

use crate::data::{FeatureKind, FeatureMeta, Observation, Value};

#[derive(Clone, Debug)]
pub(crate) enum ColumnData {
    Num(Vec<f64>),
    /// Category index into the feature's category list.
    Cat(Vec<usize>),
}

pub(crate) fn columns(features: &[FeatureMeta], rows: &[Observation]) -> Vec<ColumnData> {
    features
        .iter()
        .enumerate()
        .map(|(j, meta)| match &meta.kind {
            FeatureKind::Continuous { .. } => {
                ColumnData::Num(rows.iter().map(|r| r[j].as_f64().unwrap_or(f64::NAN)).collect())
            }
            FeatureKind::Categorical { categories } => ColumnData::Cat(
                rows.iter()
                    .map(|r| match &r[j] {
                        Value::Cat(c) => categories.iter().position(|k| k == c).unwrap_or(usize::MAX),
                        Value::Num(_) => usize::MAX,
                    })
                    .collect(),
            ),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum RawRule {
    Threshold(f64),
    /// Sorted category indices that go left.
    Categories(Vec<usize>),
}

impl RawRule {
    pub(crate) fn goes_left(&self, col: &ColumnData, row: usize) -> bool {
        match (self, col) {
            (RawRule::Threshold(t), ColumnData::Num(v)) => v[row] <= *t,
            (RawRule::Categories(set), ColumnData::Cat(v)) => set.binary_search(&v[row]).is_ok(),
            _ => false,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Candidate {
    pub feature: usize,
    pub rule: RawRule,
    /// Reduction of the within-node sum of squared errors.
    pub gain: f64,
}

pub(crate) fn partition(cols: &[ColumnData], rows: &[usize], c: &Candidate) -> (Vec<usize>, Vec<usize>) {
    rows.iter().partition(|&&r| c.rule.goes_left(&cols[c.feature], r))
}

pub(crate) fn sse(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, s) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return 0.0;
    }
    let m = s / n as f64;
    values.map(|v| (v - m) * (v - m)).sum()
}

/// Split search over one node; per-feature value orderings are computed once
/// so that repeated searches with permuted targets only pay for the sweep.
pub(crate) struct NodeSearch<'a> {
    cols: &'a [ColumnData],
    rows: &'a [usize],
    orders: Vec<Vec<usize>>,
    min_leaf: usize,
}

impl<'a> NodeSearch<'a> {
    pub(crate) fn new(cols: &'a [ColumnData], rows: &'a [usize], min_leaf: usize) -> Self {
        let orders = cols
            .iter()
            .map(|col| match col {
                ColumnData::Num(v) => {
                    let mut o: Vec<usize> = (0..rows.len()).collect();
                    o.sort_by(|&a, &b| v[rows[a]].total_cmp(&v[rows[b]]).then(a.cmp(&b)));
                    o
                }
                ColumnData::Cat(_) => Vec::new(),
            })
            .collect();
        NodeSearch { cols, rows, orders, min_leaf: min_leaf.max(1) }
    }

    /// Best split for node-local targets `y` (aligned with `rows`), if any
    /// admissible split has positive gain.
    pub(crate) fn best(&self, y: &[f64]) -> Option<Candidate> {
        let n = self.rows.len();
        debug_assert_eq!(y.len(), n);
        if n < 2 * self.min_leaf {
            return None;
        }
        let mean = y.iter().sum::<f64>() / n as f64;
        let c: Vec<f64> = y.iter().map(|v| v - mean).collect();
        let total: f64 = c.iter().sum();
        let base = total * total / n as f64;
        let gain_of = |s_left: f64, n_left: usize| {
            let s_right = total - s_left;
            let n_right = n - n_left;
            s_left * s_left / n_left as f64 + s_right * s_right / n_right as f64 - base
        };

        let mut best: Option<Candidate> = None;
        let mut consider = |feature: usize, rule: &dyn Fn() -> RawRule, gain: f64| {
            if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Candidate { feature, rule: rule(), gain });
            }
        };

        for (j, col) in self.cols.iter().enumerate() {
            match col {
                ColumnData::Num(v) => {
                    let order = &self.orders[j];
                    let mut s_left = 0.0;
                    for k in 0..n - 1 {
                        s_left += c[order[k]];
                        let n_left = k + 1;
                        if n_left < self.min_leaf || n - n_left < self.min_leaf {
                            continue;
                        }
                        let a = v[self.rows[order[k]]];
                        let b = v[self.rows[order[k + 1]]];
                        if a == b {
                            continue;
                        }
                        let gain = gain_of(s_left, n_left);
                        consider(j, &|| RawRule::Threshold(midpoint(a, b)), gain);
                    }
                }
                ColumnData::Cat(v) => {
                    let mut stats: Vec<(usize, f64, usize)> = Vec::new();
                    for (local, &row) in self.rows.iter().enumerate() {
                        let cat = v[row];
                        match stats.iter_mut().find(|s| s.0 == cat) {
                            Some(s) => {
                                s.1 += c[local];
                                s.2 += 1;
                            }
                            None => stats.push((cat, c[local], 1)),
                        }
                    }
                    stats.sort_by(|a, b| (a.1 / a.2 as f64).total_cmp(&(b.1 / b.2 as f64)).then(a.0.cmp(&b.0)));
                    let mut s_left = 0.0;
                    let mut n_left = 0;
                    for k in 0..stats.len().saturating_sub(1) {
                        s_left += stats[k].1;
                        n_left += stats[k].2;
                        if n_left < self.min_leaf || n - n_left < self.min_leaf {
                            continue;
                        }
                        let gain = gain_of(s_left, n_left);
                        consider(
                            j,
                            &|| {
                                let mut set: Vec<usize> = stats[..=k].iter().map(|s| s.0).collect();
                                set.sort_unstable();
                                RawRule::Categories(set)
                            },
                            gain,
                        );
                    }
                }
            }
        }
        best
    }
}

/// Midpoint of `a < b` that still separates them under `<=`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}
