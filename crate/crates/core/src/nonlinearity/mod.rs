//! Non-linearity measure (NLM) of a forward marginal effect.
//!
//! Along the straight path `γ(t) = x + t·h`, `t ∈ [0, 1]`, the prediction is
//! compared with the secant `g(t) = f(x) + t·fME`. With `f̄` the mean
//! prediction along the path,
//!
//! ```text
//! I   = ∫ (f(γ(t)) - g(t))² ‖γ'‖ dt
//! II  = ∫ (f(γ(t)) - f̄)²   ‖γ'‖ dt
//! NLM = 1 - I / II
//! ```
//!
//! An NLM of 1 means the prediction is linear along the path; values near or
//! below 0 mean the fME hides substantial non-linearity. All integrals use the
//! composite Simpson 3/8 rule on one shared set of predictions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_observation, Observation, StepVector, Value};
use crate::effects::{bind_continuous, EffectTable};
use crate::error::{Error, Result};
use crate::predictors::Predictor;

pub const DEFAULT_SUBINTERVALS: usize = 30;

/// Relative tolerance of the bisection in [`step_scale_search`].
pub const SEARCH_TOLERANCE: f64 = 1e-3;

const DEGENERATE: f64 = 1e-12;

fn check_subintervals(n: usize) -> Result<()> {
    if n < 3 || !n.is_multiple_of(3) {
        return Err(Error::InvalidArgument(format!(
            "Simpson 3/8 needs a positive multiple of 3 subintervals, got {n}"
        )));
    }
    Ok(())
}

/// Composite Simpson 3/8 rule from function values at `n + 1` equally
/// spaced nodes on `[0, 1]`.
pub fn simpson38_nodes(values: &[f64]) -> Result<f64> {
    let n = values.len().saturating_sub(1);
    check_subintervals(n)?;
    let mut sum = 0.0;
    for (k, v) in values.iter().enumerate() {
        let w = if k == 0 || k == n {
            1.0
        } else if k % 3 == 0 {
            2.0
        } else {
            3.0
        };
        sum += w * v;
    }
    Ok(sum * 3.0 / (8.0 * n as f64))
}

/// `∫₀¹ f` by the composite Simpson 3/8 rule.
pub fn simpson38(f: impl Fn(f64) -> f64, subintervals: usize) -> Result<f64> {
    check_subintervals(subintervals)?;
    let values: Vec<f64> = (0..=subintervals).map(|k| f(k as f64 / subintervals as f64)).collect();
    simpson38_nodes(&values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlmResult {
    /// `None` when the prediction is flat along the path but the secant
    /// deviation is not, so the ratio is undefined.
    pub nlm: Option<f64>,
    pub integral_i: f64,
    pub integral_ii: f64,
    pub mean_prediction: f64,
    pub quadrature_points: usize,
}

impl NlmResult {
    /// NLM from predictions at the `n + 1` equally spaced path nodes, the
    /// first at the anchor and the last at the forward point.
    pub fn from_nodes(values: &[f64], speed: f64) -> Result<NlmResult> {
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(Error::InvalidStep("step has zero length".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite prediction on the step path".into()));
        }
        let n = values.len().saturating_sub(1);
        check_subintervals(n)?;
        let f0 = values[0];
        let fme = values[n] - f0;
        let secant_dev: Vec<f64> = values
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let g = f0 + (k as f64 / n as f64) * fme;
                (v - g).powi(2)
            })
            .collect();
        let mean = simpson38_nodes(values)?;
        let mean_dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
        let integral_i = speed * simpson38_nodes(&secant_dev)?;
        let integral_ii = speed * simpson38_nodes(&mean_dev)?;
        let tol = DEGENERATE * speed;
        let nlm =
            if integral_ii < tol { (integral_i < tol).then_some(1.0) } else { Some(1.0 - integral_i / integral_ii) };
        Ok(NlmResult { nlm, integral_i, integral_ii, mean_prediction: mean, quadrature_points: values.len() })
    }

    /// Defined and at least `threshold`. Zero is the hard bound below which
    /// the secant explains less than the mean prediction does.
    pub fn at_least(&self, threshold: f64) -> bool {
        self.nlm.is_some_and(|v| v >= threshold)
    }
}

/// The path nodes `x + (k/n)·h`, `k = 0..=n`.
pub fn path_nodes(x: &[Value], direction: &[f64], subintervals: usize) -> Result<Vec<Observation>> {
    check_subintervals(subintervals)?;
    if x.len() != direction.len() {
        return Err(Error::Schema(format!("expected {} values, got {}", direction.len(), x.len())));
    }
    (0..=subintervals)
        .map(|k| {
            let t = k as f64 / subintervals as f64;
            x.iter()
                .zip(direction)
                .map(|(v, h)| match v {
                    Value::Num(a) if *h != 0.0 => Ok(Value::Num(a + t * h)),
                    Value::Cat(_) if *h != 0.0 => Err(Error::Schema("shift of a categorical value".into())),
                    other => Ok(other.clone()),
                })
                .collect()
        })
        .collect()
}

/// NLM of the continuous step `step` at `x`, from one batch of
/// `subintervals + 1` predictions.
pub fn nlm(m: &dyn Predictor, x: &[Value], step: &StepVector, subintervals: usize) -> Result<NlmResult> {
    let bound = bind_continuous(m, step)?;
    check_observation(m.features(), x, true)?;
    let direction = bound.direction().expect("continuous step");
    let nodes = path_nodes(x, &direction, subintervals)?;
    let values = m.predict_batch(&nodes)?;
    NlmResult::from_nodes(&values, bound.speed())
}

/// Fills the `nlm` field of every record, in parallel.
pub fn attach_nlm(m: &dyn Predictor, table: &mut EffectTable, subintervals: usize) -> Result<()> {
    let bound = bind_continuous(m, &table.step)?;
    let direction = bound.direction().expect("continuous step");
    let speed = bound.speed();
    table.records.par_iter_mut().try_for_each(|r| {
        let nodes = path_nodes(&r.anchor, &direction, subintervals)?;
        let values = m.predict_batch(&nodes)?;
        r.nlm = Some(NlmResult::from_nodes(&values, speed)?);
        Ok(())
    })
}

/// Number of equally spaced scales probed by [`step_scale_search`].
pub const SEARCH_GRID: usize = 16;

/// Largest scale `t ∈ (0, t_max]` such that the step `t·h` still has an NLM
/// of at least `threshold`.
///
/// The scales `t_max·k/16`, `k = 1..=16`, are probed; the boundary above the
/// largest qualifying one is then bisected to a relative tolerance of 1e-3.
/// Returns `None` if no probed scale qualifies.
pub fn step_scale_search(
    m: &dyn Predictor,
    x: &[Value],
    direction: &StepVector,
    threshold: f64,
    t_max: f64,
    subintervals: usize,
) -> Result<Option<f64>> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_max must be positive, got {t_max}")));
    }
    if !(threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!("NLM threshold must be at most 1, got {threshold}")));
    }
    bind_continuous(m, direction)?;
    check_observation(m.features(), x, true)?;
    let qualifies =
        |t: f64| -> Result<bool> { Ok(nlm(m, x, &direction.scaled(t)?, subintervals)?.at_least(threshold)) };

    let grid: Vec<f64> = (1..=SEARCH_GRID).map(|k| t_max * k as f64 / SEARCH_GRID as f64).collect();
    let passed = grid.par_iter().map(|&t| qualifies(t)).collect::<Result<Vec<bool>>>()?;
    let Some(k) = passed.iter().rposition(|&p| p) else {
        return Ok(None);
    };
    if k + 1 == grid.len() {
        return Ok(Some(t_max));
    }
    let (mut lo, mut hi) = (grid[k], grid[k + 1]);
    while hi - lo > SEARCH_TOLERANCE * hi {
        let mid = 0.5 * (lo + hi);
        if qualifies(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}
