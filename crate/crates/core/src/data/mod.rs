//! Tabular data: feature metadata, observations and the immutable [`Dataset`].
//!
//! Categorical values are carried as their text label. Category order is the
//! order of first appearance and is only used for display and tie-breaking.

mod io;
mod stats;
mod step;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_csv, load_schema, read_csv, write_csv, ColumnDecl, Schema};
pub use stats::{feature_stats, quantile_sorted, step_from_dispersion, DispersionRule, DispersionSummary};
pub(crate) use stats::{mean, sample_sd};
pub use step::{apply_step, BoundStep, Step, StepKind, StepVector};

/// A single cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Cat(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::Cat(_) => None,
        }
    }

    pub fn as_category(&self) -> Option<&str> {
        match self {
            Value::Num(_) => None,
            Value::Cat(c) => Some(c),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Num(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Cat(v.to_string())
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(v) => write!(f, "{v}"),
            Value::Cat(c) => f.write_str(c),
        }
    }
}

/// One row of feature values, in schema order.
pub type Observation = Vec<Value>;

/// Builds a purely numeric observation.
pub fn numeric(values: &[f64]) -> Observation {
    values.iter().copied().map(Value::Num).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous { min: f64, max: f64 },
    Categorical { categories: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureMeta {
    pub fn continuous(name: impl Into<String>, min: f64, max: f64) -> Self {
        FeatureMeta { name: name.into(), kind: FeatureKind::Continuous { min, max } }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, categories: impl IntoIterator<Item = S>) -> Self {
        FeatureMeta {
            name: name.into(),
            kind: FeatureKind::Categorical { categories: categories.into_iter().map(Into::into).collect() },
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, FeatureKind::Continuous { .. })
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        match self.kind {
            FeatureKind::Continuous { min, max } => Some((min, max)),
            FeatureKind::Categorical { .. } => None,
        }
    }

    pub fn categories(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Continuous { .. } => None,
            FeatureKind::Categorical { categories } => Some(categories),
        }
    }

    pub fn has_category(&self, c: &str) -> bool {
        self.categories().is_some_and(|cs| cs.iter().any(|x| x == c))
    }

    fn validate(&self) -> Result<()> {
        match &self.kind {
            FeatureKind::Continuous { min, max } => {
                if !(min <= max) {
                    return Err(Error::Schema(format!("feature {:?} has invalid range [{min}, {max}]", self.name)));
                }
            }
            FeatureKind::Categorical { categories } => {
                if categories.is_empty() {
                    return Err(Error::Schema(format!("feature {:?} has no categories", self.name)));
                }
                let mut seen = HashSet::new();
                for c in categories {
                    if !seen.insert(c.as_str()) {
                        return Err(Error::Schema(format!("feature {:?} lists category {c:?} twice", self.name)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Checks column count and value variants of `x` against `features`.
///
/// With `strict_categories`, categorical values must also be known categories.
pub fn check_observation(features: &[FeatureMeta], x: &[Value], strict_categories: bool) -> Result<()> {
    if x.len() != features.len() {
        return Err(Error::Schema(format!("expected {} values, got {}", features.len(), x.len())));
    }
    for (meta, v) in features.iter().zip(x) {
        match (&meta.kind, v) {
            (FeatureKind::Continuous { .. }, Value::Num(_)) => {}
            (FeatureKind::Categorical { categories }, Value::Cat(c)) => {
                if strict_categories && !categories.contains(c) {
                    return Err(Error::Schema(format!("unknown category {c:?} for feature {:?}", meta.name)));
                }
            }
            (FeatureKind::Continuous { .. }, Value::Cat(c)) => {
                return Err(Error::Schema(format!("feature {:?} is continuous but got {c:?}", meta.name)))
            }
            (FeatureKind::Categorical { .. }, Value::Num(v)) => {
                return Err(Error::Schema(format!("feature {:?} is categorical but got number {v}", meta.name)))
            }
        }
    }
    Ok(())
}

pub fn feature_index(features: &[FeatureMeta], name: &str) -> Result<usize> {
    features.iter().position(|f| f.name == name).ok_or_else(|| Error::UnknownFeature(name.to_string()))
}

/// An immutable table of complete observations with per-feature metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<FeatureMeta>,
    rows: Vec<Observation>,
}

impl Dataset {
    /// Validates rows against explicit metadata. Ranges must bracket the data
    /// (they may be wider, e.g. a declared simulation domain).
    pub fn new(features: Vec<FeatureMeta>, rows: Vec<Observation>) -> Result<Self> {
        let mut names = HashSet::new();
        for f in &features {
            if !names.insert(f.name.as_str()) {
                return Err(Error::DuplicateColumn(f.name.clone()));
            }
            f.validate()?;
        }
        for (i, row) in rows.iter().enumerate() {
            check_observation(&features, row, true).map_err(|e| Error::Schema(format!("row {}: {e}", i + 1)))?;
            for (meta, v) in features.iter().zip(row) {
                if let (Some((lo, hi)), Value::Num(v)) = (meta.range(), v) {
                    if !v.is_finite() {
                        return Err(Error::Schema(format!("row {}: non-finite value in {:?}", i + 1, meta.name)));
                    }
                    if *v < lo || *v > hi {
                        return Err(Error::Schema(format!(
                            "row {}: value {v} of {:?} outside declared range [{lo}, {hi}]",
                            i + 1,
                            meta.name
                        )));
                    }
                }
            }
        }
        Ok(Dataset { features, rows })
    }

    /// Infers metadata from the values: a column of numbers is continuous with
    /// its observed range, a column of labels is categorical.
    pub fn from_rows(names: &[&str], rows: Vec<Observation>) -> Result<Self> {
        let mut features = Vec::with_capacity(names.len());
        for (j, name) in names.iter().enumerate() {
            let column = rows
                .iter()
                .map(|r| r.get(j).ok_or_else(|| Error::Schema(format!("row too short for column {name:?}"))));
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            let mut categories: Vec<String> = Vec::new();
            let mut numeric = None;
            for v in column {
                match v? {
                    Value::Num(x) => {
                        if numeric == Some(false) {
                            return Err(Error::Schema(format!("column {name:?} mixes numbers and labels")));
                        }
                        numeric = Some(true);
                        min = min.min(*x);
                        max = max.max(*x);
                    }
                    Value::Cat(c) => {
                        if numeric == Some(true) {
                            return Err(Error::Schema(format!("column {name:?} mixes numbers and labels")));
                        }
                        numeric = Some(false);
                        if !categories.contains(c) {
                            categories.push(c.clone());
                        }
                    }
                }
            }
            let kind = match numeric {
                Some(false) => FeatureKind::Categorical { categories },
                Some(true) => FeatureKind::Continuous { min, max },
                None => return Err(Error::Empty("dataset has no rows".into())),
            };
            features.push(FeatureMeta { name: name.to_string(), kind });
        }
        Dataset::new(features, rows)
    }

    /// Convenience constructor for all-continuous data.
    pub fn from_numeric(names: &[&str], rows: &[Vec<f64>]) -> Result<Self> {
        Dataset::from_rows(names, rows.iter().map(|r| numeric(r)).collect())
    }

    pub fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn p(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        feature_index(&self.features, name)
    }

    pub fn feature(&self, name: &str) -> Result<&FeatureMeta> {
        Ok(&self.features[self.feature_index(name)?])
    }

    /// Values of a continuous column.
    pub fn column_f64(&self, j: usize) -> Result<Vec<f64>> {
        let meta = &self.features[j];
        if !meta.is_continuous() {
            return Err(Error::InvalidArgument(format!("feature {:?} is categorical", meta.name)));
        }
        Ok(self.rows.iter().map(|r| r[j].as_f64().unwrap_or(f64::NAN)).collect())
    }

    /// Removes the named continuous column, returning the remaining features
    /// and the column values. Metadata of remaining columns is kept as is.
    pub fn split_target(&self, target: &str) -> Result<(Dataset, Vec<f64>)> {
        let j = self.feature_index(target)?;
        let y =
            self.column_f64(j).map_err(|_| Error::InvalidArgument(format!("target {target:?} must be continuous")))?;
        let mut features = self.features.clone();
        features.remove(j);
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.remove(j);
                r
            })
            .collect();
        Ok((Dataset { features, rows }, y))
    }

    /// Keeps only the named columns, in the given order.
    pub fn select_columns(&self, names: &[&str]) -> Result<Dataset> {
        let idx = names.iter().map(|n| self.feature_index(n)).collect::<Result<Vec<_>>>()?;
        let features = idx.iter().map(|&j| self.features[j].clone()).collect();
        let rows = self.rows.iter().map(|r| idx.iter().map(|&j| r[j].clone()).collect()).collect();
        Ok(Dataset { features, rows })
    }

    /// Same metadata, different rows (validated).
    pub fn with_rows(&self, rows: Vec<Observation>) -> Result<Dataset> {
        Dataset::new(self.features.clone(), rows)
    }
}
