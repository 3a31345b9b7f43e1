//! Extrapolation-point detection.
//!
//! Three detectors share the [`Detector`] interface: the axis-aligned
//! envelope of the training data, a Monte-Carlo classifier that separates
//! training rows from uniform background samples ([`Mcec`]), and a tree that
//! replaces the background sample by its expected counts ([`CertTree`]).
//! Risk-based detectors classify a point as an extrapolation when its risk
//! exceeds 0.5.

mod cert;
mod mcec;

use serde::{Deserialize, Serialize};

use crate::data::{check_observation, Dataset, FeatureKind, FeatureMeta, Value};
use crate::error::{Error, Result};

pub use cert::{expected_uniform_count, CertNode, CertParams, CertTree};
pub use mcec::{Mcec, McecParams};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub is_ep: bool,
    /// Extrapolation risk in `[0, 1]`, for risk-based detectors.
    pub risk: Option<f64>,
}

impl Detection {
    pub(crate) fn from_risk(risk: f64) -> Self {
        Detection { is_ep: risk > 0.5, risk: Some(risk) }
    }
}

pub trait Detector: Send + Sync {
    fn detect(&self, x: &[Value]) -> Result<Detection>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Interval { min: f64, max: f64 },
    Categories(Vec<String>),
}

/// Observed per-feature ranges and category sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    features: Vec<FeatureMeta>,
    bounds: Vec<Bound>,
}

impl Envelope {
    /// Envelope of the rows actually present in `d`.
    pub fn from_dataset(d: &Dataset) -> Result<Envelope> {
        if d.is_empty() {
            return Err(Error::Empty("envelope of an empty dataset".into()));
        }
        let bounds = d
            .features()
            .iter()
            .enumerate()
            .map(|(j, meta)| match meta.kind {
                FeatureKind::Continuous { .. } => {
                    let (min, max) = d
                        .rows()
                        .iter()
                        .filter_map(|r| r[j].as_f64())
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                    Bound::Interval { min, max }
                }
                FeatureKind::Categorical { .. } => {
                    let mut seen: Vec<String> = Vec::new();
                    for r in d.rows() {
                        if let Value::Cat(c) = &r[j] {
                            if !seen.contains(c) {
                                seen.push(c.clone());
                            }
                        }
                    }
                    Bound::Categories(seen)
                }
            })
            .collect();
        Ok(Envelope { features: d.features().to_vec(), bounds })
    }

    /// Envelope given by explicit metadata ranges and category sets, e.g. a
    /// domain expert's support.
    pub fn from_features(features: &[FeatureMeta]) -> Envelope {
        let bounds = features
            .iter()
            .map(|f| match &f.kind {
                FeatureKind::Continuous { min, max } => Bound::Interval { min: *min, max: *max },
                FeatureKind::Categorical { categories } => Bound::Categories(categories.clone()),
            })
            .collect();
        Envelope { features: features.to_vec(), bounds }
    }

    pub fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    pub fn bounds(&self) -> &[Bound] {
        &self.bounds
    }

    /// Continuous box `(min, max)` per feature; `None` for categorical ones.
    pub fn intervals(&self) -> Vec<Option<(f64, f64)>> {
        self.bounds
            .iter()
            .map(|b| match b {
                Bound::Interval { min, max } => Some((*min, *max)),
                Bound::Categories(_) => None,
            })
            .collect()
    }

    /// True when `x` lies outside the closed envelope or carries an unseen category.
    pub fn is_outside(&self, x: &[Value]) -> Result<bool> {
        check_observation(&self.features, x, false)?;
        Ok(self.bounds.iter().zip(x).any(|(b, v)| match (b, v) {
            (Bound::Interval { min, max }, Value::Num(v)) => *v < *min || *v > *max,
            (Bound::Categories(cs), Value::Cat(c)) => !cs.contains(c),
            _ => true,
        }))
    }
}

impl Detector for Envelope {
    fn detect(&self, x: &[Value]) -> Result<Detection> {
        Ok(Detection { is_ep: self.is_outside(x)?, risk: None })
    }
}

/// Same as `Envelope::is_outside`, as a free function.
pub fn envelope_check(e: &Envelope, x: &[Value]) -> Result<bool> {
    e.is_outside(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    #[default]
    Envelope,
    Mcec,
    Cert,
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "envelope" => Ok(DetectorKind::Envelope),
            "mcec" => Ok(DetectorKind::Mcec),
            "cert" => Ok(DetectorKind::Cert),
            other => {
                Err(Error::InvalidArgument(format!("unknown detector {other:?}; expected envelope, mcec or cert")))
            }
        }
    }
}

/// `{"detector": "envelope" | "mcec" | "cert", "uniform_budget": N, "seed": S}`
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub detector: DetectorKind,
    /// Number of background points; defaults to the number of training rows.
    pub uniform_budget: Option<usize>,
    pub seed: u64,
}

/// A fitted detector of any kind.
#[derive(Clone, Debug)]
pub enum FittedDetector {
    Envelope(Envelope),
    Mcec(Mcec),
    Cert(CertTree),
}

impl DetectorConfig {
    pub fn fit(&self, d: &Dataset) -> Result<FittedDetector> {
        Ok(match self.detector {
            DetectorKind::Envelope => FittedDetector::Envelope(Envelope::from_dataset(d)?),
            DetectorKind::Mcec => FittedDetector::Mcec(Mcec::fit(
                d,
                &McecParams { uniform_budget: self.uniform_budget, seed: self.seed, ..McecParams::default() },
            )?),
            DetectorKind::Cert => FittedDetector::Cert(CertTree::fit(
                d,
                &CertParams { uniform_budget: self.uniform_budget, ..CertParams::default() },
            )?),
        })
    }
}

impl Detector for FittedDetector {
    fn detect(&self, x: &[Value]) -> Result<Detection> {
        match self {
            FittedDetector::Envelope(e) => e.detect(x),
            FittedDetector::Mcec(m) => m.detect(x),
            FittedDetector::Cert(c) => c.detect(x),
        }
    }
}

/// Uniform entry point over any fitted detector.
pub fn detect(detector: &dyn Detector, x: &[Value]) -> Result<Detection> {
    detector.detect(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::numeric;

    fn training() -> Dataset {
        let rows: Vec<Vec<f64>> = (0..=20).map(|i| vec![-5.0 + i as f64 * 0.5]).collect();
        Dataset::from_numeric(&["x"], &rows).unwrap()
    }

    #[test]
    fn closed_interval_envelope() {
        let e = Envelope::from_dataset(&training()).unwrap();
        assert!(e.is_outside(&numeric(&[5.5])).unwrap());
        assert!(!e.is_outside(&numeric(&[5.0])).unwrap());
        assert!(!e.is_outside(&numeric(&[-5.0])).unwrap());
        assert!(e.is_outside(&numeric(&[-5.0001])).unwrap());
        assert!(e.is_outside(&numeric(&[1.0, 2.0])).is_err());
    }

    #[test]
    fn unseen_category_is_ep() {
        let d = Dataset::new(
            vec![FeatureMeta::categorical("c", ["a", "b", "c"])],
            vec![vec!["a".into()], vec!["b".into()]],
        )
        .unwrap();
        let e = Envelope::from_dataset(&d).unwrap();
        assert!(!e.is_outside(&["a".into()]).unwrap());
        // declared but never observed
        assert!(e.is_outside(&["c".into()]).unwrap());
        assert!(e.is_outside(&["zzz".into()]).unwrap());
    }

    #[test]
    fn training_rows_are_inside() {
        let d = training();
        let e = Envelope::from_dataset(&d).unwrap();
        assert!(d.rows().iter().all(|r| !e.is_outside(r).unwrap()));
    }

    #[test]
    fn config_json() {
        let c: DetectorConfig = serde_json::from_str(r#"{"detector":"mcec","uniform_budget":50,"seed":4}"#).unwrap();
        assert_eq!(c.detector, DetectorKind::Mcec);
        assert_eq!(c.uniform_budget, Some(50));
        let det = c.fit(&training()).unwrap();
        assert_eq!(detect(&det, &numeric(&[9.0])).unwrap().risk, Some(1.0));
        assert!("iforest".parse::<DetectorKind>().is_err());
    }

    #[test]
    fn every_backend_through_one_interface() {
        let d = training();
        for kind in [DetectorKind::Envelope, DetectorKind::Mcec, DetectorKind::Cert] {
            let det = DetectorConfig { detector: kind, uniform_budget: None, seed: 1 }.fit(&d).unwrap();
            assert!(det.detect(&numeric(&[5.5])).unwrap().is_ep, "{kind:?}");
        }
    }
}
