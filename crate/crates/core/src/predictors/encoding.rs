use serde::{Deserialize, Serialize};

use crate::data::{FeatureKind, FeatureMeta, Value};

/// Numeric encoding of mixed rows: continuous values pass through,
/// categorical values become indicator columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct OneHot {
    features: Vec<FeatureMeta>,
    /// Omit the first category's indicator (reference coding).
    drop_first: bool,
}

impl OneHot {
    pub(crate) fn new(features: &[FeatureMeta], drop_first: bool) -> Self {
        OneHot { features: features.to_vec(), drop_first }
    }

    pub(crate) fn width(&self) -> usize {
        self.features
            .iter()
            .map(|f| match &f.kind {
                FeatureKind::Continuous { .. } => 1,
                FeatureKind::Categorical { categories } => categories.len() - usize::from(self.drop_first),
            })
            .sum()
    }

    /// Encodes a row that already passed the schema check.
    pub(crate) fn encode(&self, x: &[Value]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        for (meta, v) in self.features.iter().zip(x) {
            match (&meta.kind, v) {
                (FeatureKind::Continuous { .. }, Value::Num(v)) => out.push(*v),
                (FeatureKind::Categorical { categories }, Value::Cat(c)) => {
                    let skip = usize::from(self.drop_first);
                    out.extend(categories[skip..].iter().map(|k| if k == c { 1.0 } else { 0.0 }));
                }
                _ => unreachable!("row checked against schema"),
            }
        }
        out
    }
}
