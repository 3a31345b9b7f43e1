use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_observation, feature_index, FeatureMeta, Observation, Value};
use crate::error::{Error, Result};

/// The change applied to one feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Step {
    /// Add `h` to a continuous feature.
    Shift(f64),
    /// Replace a categorical feature by this category.
    Category(String),
}

/// A feature-wise intervention, keyed by feature name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, Step>", into = "BTreeMap<String, Step>")]
pub struct StepVector {
    entries: BTreeMap<String, Step>,
}

impl TryFrom<BTreeMap<String, Step>> for StepVector {
    type Error = Error;

    fn try_from(entries: BTreeMap<String, Step>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidStep("step vector is empty".into()));
        }
        for (name, step) in &entries {
            if let Step::Shift(h) = step {
                if !h.is_finite() || *h == 0.0 {
                    return Err(Error::InvalidStep(format!("step for {name:?} must be finite and nonzero, got {h}")));
                }
            }
        }
        Ok(StepVector { entries })
    }
}

impl From<StepVector> for BTreeMap<String, Step> {
    fn from(s: StepVector) -> Self {
        s.entries
    }
}

impl StepVector {
    pub fn new<S: Into<String>>(entries: impl IntoIterator<Item = (S, Step)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (name, step) in entries {
            let name = name.into();
            if map.insert(name.clone(), step).is_some() {
                return Err(Error::InvalidStep(format!("feature {name:?} stepped twice")));
            }
        }
        map.try_into()
    }

    /// Single continuous step.
    pub fn shift(feature: impl Into<String>, h: f64) -> Result<Self> {
        StepVector::new([(feature.into(), Step::Shift(h))])
    }

    /// Multivariate continuous step.
    pub fn shifts<S: Into<String>>(entries: impl IntoIterator<Item = (S, f64)>) -> Result<Self> {
        StepVector::new(entries.into_iter().map(|(n, h)| (n, Step::Shift(h))))
    }

    /// Single categorical replacement.
    pub fn category(feature: impl Into<String>, target: impl Into<String>) -> Result<Self> {
        StepVector::new([(feature.into(), Step::Category(target.into()))])
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Step)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All continuous steps multiplied by `t`.
    pub fn scaled(&self, t: f64) -> Result<StepVector> {
        let entries = self
            .entries
            .iter()
            .map(|(n, s)| match s {
                Step::Shift(h) => Ok((n.clone(), Step::Shift(h * t))),
                Step::Category(_) => Err(Error::InvalidStep("categorical steps cannot be scaled".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        StepVector::new(entries)
    }

    /// Resolves feature names against a schema and checks step/feature kinds.
    pub fn bind(&self, features: &[FeatureMeta]) -> Result<BoundStep> {
        let mut entries = Vec::with_capacity(self.entries.len());
        for (name, step) in &self.entries {
            let j = feature_index(features, name)?;
            let meta = &features[j];
            match step {
                Step::Shift(_) if !meta.is_continuous() => {
                    return Err(Error::InvalidStep(format!("numeric step on categorical feature {name:?}")))
                }
                Step::Category(c) if meta.is_continuous() => {
                    return Err(Error::InvalidStep(format!("category {c:?} given for continuous feature {name:?}")))
                }
                Step::Category(c) if !meta.has_category(c) => {
                    return Err(Error::InvalidStep(format!("{c:?} is not a category of {name:?}")))
                }
                _ => {}
            }
            entries.push((j, step.clone()));
        }
        entries.sort_by_key(|(j, _)| *j);
        Ok(BoundStep { p: features.len(), entries })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    Continuous,
    Categorical,
    Mixed,
}

/// A [`StepVector`] resolved to column indices of a particular schema.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundStep {
    p: usize,
    entries: Vec<(usize, Step)>,
}

impl BoundStep {
    pub fn entries(&self) -> &[(usize, Step)] {
        &self.entries
    }

    pub fn kind(&self) -> StepKind {
        let cats = self.entries.iter().filter(|(_, s)| matches!(s, Step::Category(_))).count();
        match cats {
            0 => StepKind::Continuous,
            c if c == self.entries.len() => StepKind::Categorical,
            _ => StepKind::Mixed,
        }
    }

    /// Zero-padded shift vector over all columns; `None` if any step is categorical.
    pub fn direction(&self) -> Option<Vec<f64>> {
        let mut d = vec![0.0; self.p];
        for (j, s) in &self.entries {
            match s {
                Step::Shift(h) => d[*j] = *h,
                Step::Category(_) => return None,
            }
        }
        Some(d)
    }

    /// Euclidean length of the continuous shift.
    pub fn speed(&self) -> f64 {
        self.entries
            .iter()
            .map(|(_, s)| match s {
                Step::Shift(h) => h * h,
                Step::Category(_) => 0.0,
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn apply(&self, x: &[Value]) -> Result<Observation> {
        if x.len() != self.p {
            return Err(Error::Schema(format!("expected {} values, got {}", self.p, x.len())));
        }
        let mut out = x.to_vec();
        for (j, step) in &self.entries {
            match (step, &mut out[*j]) {
                (Step::Shift(h), Value::Num(v)) => *v += h,
                (Step::Category(c), Value::Cat(v)) => {
                    if v == c {
                        return Err(Error::InvalidStep(format!("observation is already at target category {c:?}")));
                    }
                    v.clone_from(c);
                }
                _ => return Err(Error::Schema(format!("value kind mismatch in column {j}"))),
            }
        }
        Ok(out)
    }
}

/// `(x_S + h_S, x_{-S})` for continuous steps, category replacement for
/// categorical ones.
pub fn apply_step(features: &[FeatureMeta], x: &[Value], step: &StepVector) -> Result<Observation> {
    check_observation(features, x, false)?;
    step.bind(features)?.apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::numeric;
    use proptest::prelude::*;

    fn schema() -> Vec<FeatureMeta> {
        vec![
            FeatureMeta::continuous("rm", 3.0, 9.0),
            FeatureMeta::categorical("chas", ["0", "1"]),
            FeatureMeta::continuous("age", 0.0, 100.0),
        ]
    }

    fn obs() -> Observation {
        vec![Value::Num(6.54), Value::Cat("0".into()), Value::Num(65.2)]
    }

    #[test]
    fn continuous_step_touches_only_its_feature() {
        let x = apply_step(&schema(), &obs(), &StepVector::shift("rm", 1.0).unwrap()).unwrap();
        assert_eq!(x[0], Value::Num(6.54 + 1.0));
        assert_eq!(x[1..], obs()[1..]);
        let f = vec![FeatureMeta::continuous("a", 0.0, 1.0), FeatureMeta::continuous("b", 0.0, 2.0)];
        let y = apply_step(&f, &numeric(&[1.0, 2.0]), &StepVector::shift("a", 0.5).unwrap()).unwrap();
        assert_eq!(y, numeric(&[1.5, 2.0]));
    }

    #[test]
    fn categorical_step_replaces_cell() {
        let x = apply_step(&schema(), &obs(), &StepVector::category("chas", "1").unwrap()).unwrap();
        assert_eq!(x[1], Value::Cat("1".into()));
        assert_eq!(x[0], obs()[0]);
        assert_eq!(x[2], obs()[2]);
        let err = apply_step(&schema(), &x, &StepVector::category("chas", "1").unwrap()).unwrap_err();
        assert!(matches!(err, Error::InvalidStep(_)));
    }

    #[test]
    fn invalid_steps() {
        assert!(StepVector::shift("rm", 0.0).is_err());
        assert!(StepVector::shift("rm", f64::NAN).is_err());
        assert!(StepVector::new(Vec::<(String, Step)>::new()).is_err());
        assert!(StepVector::new([("rm", Step::Shift(1.0)), ("rm", Step::Shift(2.0))]).is_err());
        let s = schema();
        assert!(matches!(StepVector::shift("zn", 1.0).unwrap().bind(&s), Err(Error::UnknownFeature(_))));
        assert!(StepVector::shift("chas", 1.0).unwrap().bind(&s).is_err());
        assert!(StepVector::category("chas", "2").unwrap().bind(&s).is_err());
        assert!(StepVector::category("rm", "1").unwrap().bind(&s).is_err());
    }

    #[test]
    fn kinds_and_direction() {
        let s = schema();
        let b = StepVector::shifts([("rm", 3.0), ("age", 4.0)]).unwrap().bind(&s).unwrap();
        assert_eq!(b.kind(), StepKind::Continuous);
        assert_eq!(b.direction().unwrap(), [3.0, 0.0, 4.0]);
        assert_eq!(b.speed(), 5.0);
        let m = StepVector::new([("rm", Step::Shift(1.0)), ("chas", Step::Category("1".into()))]).unwrap();
        assert_eq!(m.bind(&s).unwrap().kind(), StepKind::Mixed);
    }

    #[test]
    fn json_shape() {
        let s: StepVector = serde_json::from_str(r#"{"rm": 1.0, "chas": "1"}"#).unwrap();
        assert_eq!(s.len(), 2);
        assert!(serde_json::from_str::<StepVector>(r#"{"rm": 0.0}"#).is_err());
        assert_eq!(serde_json::to_string(&StepVector::shift("x", 2.0).unwrap()).unwrap(), r#"{"x":2.0}"#);
    }

    proptest! {
        #[test]
        fn step_then_reverse_restores(x in -1e3f64..1e3, y in -1e3f64..1e3, h in 1e-3f64..1e2) {
            let f = vec![FeatureMeta::continuous("a", -1e4, 1e4), FeatureMeta::continuous("b", -1e4, 1e4)];
            let fwd = StepVector::shifts([("a", h), ("b", -h)]).unwrap();
            let back = fwd.scaled(-1.0).unwrap();
            let z = apply_step(&f, &apply_step(&f, &numeric(&[x, y]), &fwd).unwrap(), &back).unwrap();
            prop_assert!((z[0].as_f64().unwrap() - x).abs() <= 1e-12);
            prop_assert!((z[1].as_f64().unwrap() - y).abs() <= 1e-12);
        }
    }
}
