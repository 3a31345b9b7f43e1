//! Marginal effects of a black-box predictor.
//!
//! The central quantity is the forward marginal effect
//! `f(x_S + h_S, x_{-S}) - f(x)`: the exact change in prediction for a finite
//! step in one or more continuous features. Categorical features get an
//! observation-wise variant (switch the observed category to a target) and
//! the classic reference-category variant. Averages (AME, MEM, MER) and the
//! ICE / PD curves the effects relate to are here as well.

mod table;

use rayon::prelude::*;

use crate::data::{
    check_observation, feature_index, BoundStep, Dataset, FeatureKind, Observation, StepKind, StepVector, Value,
};
use crate::error::{Error, Result};
use crate::extrapolation::Detector;
use crate::predictors::Predictor;

pub use table::{EffectRecord, EffectTable, Excluded};

/// Rows per predictor call in batch computations.
pub(crate) const CHUNK: usize = 256;

pub const REASON_ANCHOR_EP: &str = "anchor extrapolates";
pub const REASON_AT_TARGET: &str = "already at target category";
pub const REASON_FORWARD_EP: &str = "forward point extrapolates";

pub(crate) fn bind_continuous(m: &dyn Predictor, step: &StepVector) -> Result<BoundStep> {
    let bound = step.bind(m.features())?;
    match bound.kind() {
        StepKind::Continuous => Ok(bound),
        StepKind::Categorical => {
            Err(Error::InvalidStep("categorical step; use the categorical marginal effects instead".into()))
        }
        StepKind::Mixed => Err(Error::InvalidStep("mixed continuous and categorical steps are not defined".into())),
    }
}

fn difference(m: &dyn Predictor, anchor: Observation, forward: Observation) -> Result<f64> {
    let p = m.predict_batch(&[anchor, forward])?;
    Ok(p[1] - p[0])
}

/// Forward marginal effect of a continuous (uni- or multivariate) step at `x`.
pub fn fme(m: &dyn Predictor, x: &[Value], step: &StepVector) -> Result<f64> {
    let bound = bind_continuous(m, step)?;
    check_observation(m.features(), x, true)?;
    let forward = bound.apply(x)?;
    difference(m, x.to_vec(), forward)
}

/// `f(c_h, x_{-j}) - f(x)` for an observation whose category differs from `target`.
pub fn categorical_me_observationwise(m: &dyn Predictor, x: &[Value], feature: &str, target: &str) -> Result<f64> {
    let bound = StepVector::category(feature, target)?.bind(m.features())?;
    check_observation(m.features(), x, true)?;
    let forward = bound.apply(x)?;
    difference(m, x.to_vec(), forward)
}

/// `f(c_l, x_{-j}) - f(c_r, x_{-j})` for every category `c_l != reference`,
/// in metadata order.
pub fn categorical_me_reference(
    m: &dyn Predictor,
    x: &[Value],
    feature: &str,
    reference: &str,
) -> Result<Vec<(String, f64)>> {
    let j = feature_index(m.features(), feature)?;
    let categories = match &m.features()[j].kind {
        FeatureKind::Categorical { categories } => categories.clone(),
        FeatureKind::Continuous { .. } => {
            return Err(Error::InvalidArgument(format!("feature {feature:?} is not categorical")))
        }
    };
    if !categories.iter().any(|c| c == reference) {
        return Err(Error::InvalidArgument(format!("{reference:?} is not a category of {feature:?}")));
    }
    check_observation(m.features(), x, true)?;
    let others: Vec<&String> = categories.iter().filter(|c| *c != reference).collect();
    let mut rows = Vec::with_capacity(others.len() + 1);
    let with = |c: &str| {
        let mut r = x.to_vec();
        r[j] = Value::Cat(c.to_string());
        r
    };
    rows.push(with(reference));
    rows.extend(others.iter().map(|c| with(c)));
    let p = m.predict_batch(&rows)?;
    Ok(others.into_iter().zip(&p[1..]).map(|(c, v)| (c.clone(), v - p[0])).collect())
}

/// Central finite-difference derivative. Without an explicit bandwidth,
/// `1e-5` times the feature's range is used.
pub fn dme_central(m: &dyn Predictor, x: &[Value], feature: &str, bandwidth: Option<f64>) -> Result<f64> {
    let j = feature_index(m.features(), feature)?;
    let meta = &m.features()[j];
    let h = match (bandwidth, meta.range()) {
        (Some(h), _) => h,
        (None, Some((lo, hi))) => 1e-5 * (hi - lo),
        (None, None) => return Err(Error::InvalidArgument(format!("feature {feature:?} is not continuous"))),
    };
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive and finite, got {h}")));
    }
    check_observation(m.features(), x, true)?;
    let xj = x[j].as_f64().ok_or_else(|| Error::InvalidArgument(format!("feature {feature:?} is not continuous")))?;
    let mut up = x.to_vec();
    let mut down = x.to_vec();
    up[j] = Value::Num(xj + h);
    down[j] = Value::Num(xj - h);
    Ok(difference(m, down, up)? / (2.0 * h))
}

fn check_same_schema(m: &dyn Predictor, d: &Dataset) -> Result<()> {
    let names: Vec<&str> = m.features().iter().map(|f| f.name.as_str()).collect();
    if names != d.names() {
        return Err(Error::Schema(format!("data columns {:?} do not match predictor features {:?}", d.names(), names)));
    }
    Ok(())
}

/// Effects of `step` for every row of `d`.
///
/// With a detector, rows whose anchor is an extrapolation point are
/// excluded; rows whose forward point is one are kept and flagged. A
/// categorical step skips rows already at the target category.
pub fn fme_batch(
    m: &dyn Predictor,
    d: &Dataset,
    step: &StepVector,
    detector: Option<&dyn Detector>,
) -> Result<EffectTable> {
    if d.is_empty() {
        return Err(Error::Empty("no observations to evaluate".into()));
    }
    check_same_schema(m, d)?;
    let bound = step.bind(m.features())?;
    let categorical = match bound.kind() {
        StepKind::Continuous => false,
        StepKind::Categorical if bound.entries().len() == 1 => true,
        StepKind::Categorical => {
            return Err(Error::InvalidStep("only one categorical feature can be switched at a time".into()))
        }
        StepKind::Mixed => {
            return Err(Error::InvalidStep("mixed continuous and categorical steps are not defined".into()))
        }
    };

    enum Prepared {
        Keep { anchor_ep: bool, forward: Observation, forward_ep: bool },
        Skip(&'static str),
    }

    let prepared: Vec<Prepared> = d
        .rows()
        .par_iter()
        .map(|x| -> Result<Prepared> {
            let anchor_ep = match detector {
                Some(det) => det.detect(x)?.is_ep,
                None => false,
            };
            if anchor_ep {
                return Ok(Prepared::Skip(REASON_ANCHOR_EP));
            }
            let forward = match bound.apply(x) {
                Ok(f) => f,
                Err(Error::InvalidStep(_)) if categorical => return Ok(Prepared::Skip(REASON_AT_TARGET)),
                Err(e) => return Err(e),
            };
            let forward_ep = match detector {
                Some(det) => det.detect(&forward)?.is_ep,
                None => false,
            };
            Ok(Prepared::Keep { anchor_ep, forward, forward_ep })
        })
        .collect::<Result<_>>()?;

    let mut kept: Vec<(usize, bool, Observation, bool)> = Vec::new();
    let mut excluded = Vec::new();
    for (row, p) in prepared.into_iter().enumerate() {
        match p {
            Prepared::Keep { anchor_ep, forward, forward_ep } => kept.push((row, anchor_ep, forward, forward_ep)),
            Prepared::Skip(reason) => excluded.push(Excluded { row, reason: reason.to_string() }),
        }
    }

    let records: Vec<EffectRecord> = kept
        .par_chunks(CHUNK)
        .map(|chunk| -> Result<Vec<EffectRecord>> {
            let mut points = Vec::with_capacity(2 * chunk.len());
            for (row, _, forward, _) in chunk {
                points.push(d.rows()[*row].clone());
                points.push(forward.clone());
            }
            let p = m.predict_batch(&points)?;
            Ok(chunk
                .iter()
                .enumerate()
                .map(|(k, (row, anchor_ep, forward, forward_ep))| EffectRecord {
                    row: *row,
                    anchor: d.rows()[*row].clone(),
                    forward: forward.clone(),
                    fme: p[2 * k + 1] - p[2 * k],
                    anchor_ep: *anchor_ep,
                    forward_ep: *forward_ep,
                    nlm: None,
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    Ok(EffectTable {
        step: step.clone(),
        feature_names: d.names().iter().map(|s| s.to_string()).collect(),
        records,
        excluded,
    })
}

/// Average marginal effect over the evaluable rows of `d`.
pub fn ame(m: &dyn Predictor, d: &Dataset, step: &StepVector, detector: Option<&dyn Detector>) -> Result<f64> {
    fme_batch(m, d, step, detector)?.ame()
}

/// Sample means of continuous features and modes of categorical ones
/// (ties go to the category listed first).
pub fn mean_point(d: &Dataset) -> Result<Observation> {
    if d.is_empty() {
        return Err(Error::Empty("mean of an empty dataset".into()));
    }
    Ok(d.features()
        .iter()
        .enumerate()
        .map(|(j, meta)| match &meta.kind {
            FeatureKind::Continuous { .. } => {
                Value::Num(d.rows().iter().filter_map(|r| r[j].as_f64()).sum::<f64>() / d.n() as f64)
            }
            FeatureKind::Categorical { categories } => {
                let counts: Vec<usize> = categories
                    .iter()
                    .map(|c| d.rows().iter().filter(|r| r[j].as_category() == Some(c)).count())
                    .collect();
                let max = counts.iter().copied().max().unwrap_or(0);
                let mode = counts.iter().position(|&c| c == max).unwrap_or(0);
                Value::Cat(categories[mode].clone())
            }
        })
        .collect())
}

/// Marginal effect at the mean point of `d`. Categorical steps are refused.
pub fn mem(m: &dyn Predictor, d: &Dataset, step: &StepVector) -> Result<f64> {
    check_same_schema(m, d)?;
    bind_continuous(m, step)?;
    fme(m, &mean_point(d)?, step)
}

/// Marginal effect at a fully specified representative point.
pub fn mer(m: &dyn Predictor, x_star: &[Value], step: &StepVector) -> Result<f64> {
    let p = m.features().len();
    if x_star.len() != p || x_star.iter().any(|v| matches!(v, Value::Num(x) if !x.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "representative point must specify all {p} features with finite values"
        )));
    }
    fme(m, x_star, step)
}

fn subset_indices(m: &dyn Predictor, features: &[&str], grid: &[Vec<Value>]) -> Result<Vec<usize>> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("grid is empty".into()));
    }
    let idx: Vec<usize> = features.iter().map(|f| feature_index(m.features(), f)).collect::<Result<_>>()?;
    let sub: Vec<_> = idx.iter().map(|&j| m.features()[j].clone()).collect();
    for g in grid {
        check_observation(&sub, g, true)?;
    }
    Ok(idx)
}

fn replaced(x: &[Value], idx: &[usize], g: &[Value]) -> Observation {
    let mut r = x.to_vec();
    for (&j, v) in idx.iter().zip(g) {
        r[j] = v.clone();
    }
    r
}

/// Individual conditional expectation: `f(g, x_{-S})` for each grid point `g`.
pub fn ice_curve(
    m: &dyn Predictor,
    x: &[Value],
    features: &[&str],
    grid: &[Vec<Value>],
) -> Result<Vec<(Vec<Value>, f64)>> {
    let idx = subset_indices(m, features, grid)?;
    check_observation(m.features(), x, true)?;
    let rows: Vec<Observation> = grid.iter().map(|g| replaced(x, &idx, g)).collect();
    let p = m.predict_batch(&rows)?;
    Ok(grid.iter().cloned().zip(p).collect())
}

/// Partial dependence: the ICE curves of all rows of `d`, averaged.
pub fn pd_curve(
    m: &dyn Predictor,
    d: &Dataset,
    features: &[&str],
    grid: &[Vec<Value>],
) -> Result<Vec<(Vec<Value>, f64)>> {
    if d.is_empty() {
        return Err(Error::Empty("partial dependence over an empty dataset".into()));
    }
    check_same_schema(m, d)?;
    let idx = subset_indices(m, features, grid)?;
    grid.par_iter()
        .map(|g| {
            let rows: Vec<Observation> = d.rows().iter().map(|x| replaced(x, &idx, g)).collect();
            let p = m.predict_batch(&rows)?;
            Ok((g.clone(), p.iter().sum::<f64>() / p.len() as f64))
        })
        .collect()
}
