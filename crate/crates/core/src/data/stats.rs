use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionSummary {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
    pub iqr: f64,
    /// Median absolute deviation from the median, unscaled.
    pub mad: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DispersionRule {
    Sd,
    HalfIqr,
    Mad,
}

/// Linear-interpolation quantile of ascending `sorted` values.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with the n - 1 denominator; `None` for n < 2.
pub(crate) fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

pub fn feature_stats(d: &Dataset, feature: &str) -> Result<DispersionSummary> {
    let j = d.feature_index(feature)?;
    let mut values = d.column_f64(j)?;
    if values.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "standard deviation of {feature:?} needs at least 2 rows, got {}",
            values.len()
        )));
    }
    // Sorting first makes every statistic independent of row order.
    values.sort_by(f64::total_cmp);
    let median = quantile_sorted(&values, 0.5);
    let iqr = quantile_sorted(&values, 0.75) - quantile_sorted(&values, 0.25);
    let mut deviations: Vec<f64> = values.iter().map(|v| (v - median).abs()).collect();
    deviations.sort_by(f64::total_cmp);
    Ok(DispersionSummary {
        mean: mean(&values),
        sd: sample_sd(&values).expect("n >= 2"),
        iqr,
        mad: quantile_sorted(&deviations, 0.5),
    })
}

/// A step of one dispersion unit in the direction of `sign`.
pub fn step_from_dispersion(d: &Dataset, feature: &str, rule: DispersionRule, sign: f64) -> Result<f64> {
    if sign != 1.0 && sign != -1.0 {
        return Err(Error::InvalidArgument(format!("sign must be +1 or -1, got {sign}")));
    }
    let s = feature_stats(d, feature)?;
    let value = match rule {
        DispersionRule::Sd => s.sd,
        DispersionRule::HalfIqr => 0.5 * s.iqr,
        DispersionRule::Mad => s.mad,
    };
    if value <= 0.0 {
        return Err(Error::DegenerateFeature(feature.to_string()));
    }
    Ok(sign * value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Value;
    use proptest::prelude::*;

    fn column(values: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = values.iter().map(|v| vec![*v]).collect();
        Dataset::from_numeric(&["x"], &rows).unwrap()
    }

    #[test]
    fn sd_uses_n_minus_one() {
        let s = feature_stats(&column(&[0.0, 2.0]), "x").unwrap();
        assert!((s.sd - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.mean, 1.0);
    }

    #[test]
    fn constant_column_has_no_dispersion() {
        let s = feature_stats(&column(&[5.0, 5.0, 5.0]), "x").unwrap();
        assert_eq!((s.sd, s.iqr, s.mad), (0.0, 0.0, 0.0));
    }

    #[test]
    fn mean_and_quantiles() {
        let s = feature_stats(&column(&[1.0, 2.0, 3.0, 4.0]), "x").unwrap();
        assert_eq!(s.mean, 2.5);
        // q25 = 1.75, q75 = 3.25; |x - 2.5| = {1.5, 0.5, 0.5, 1.5}
        assert_eq!(s.iqr, 1.5);
        assert_eq!(s.mad, 1.0);
    }

    #[test]
    fn errors() {
        assert!(feature_stats(&column(&[1.0]), "x").is_err());
        let d = Dataset::from_rows(&["c"], vec![vec![Value::Cat("a".into())], vec!["b".into()]]).unwrap();
        assert!(feature_stats(&d, "c").is_err());
        assert!(matches!(feature_stats(&d, "nope"), Err(Error::UnknownFeature(_))));
    }

    #[test]
    fn dispersion_steps() {
        let d = column(&[0.0, 2.0]);
        let up = step_from_dispersion(&d, "x", DispersionRule::Sd, 1.0).unwrap();
        let down = step_from_dispersion(&d, "x", DispersionRule::Sd, -1.0).unwrap();
        assert!((up - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(down, -up);
        assert_eq!(step_from_dispersion(&d, "x", DispersionRule::HalfIqr, 1.0).unwrap(), 0.5);
        assert!(matches!(
            step_from_dispersion(&column(&[3.0, 3.0]), "x", DispersionRule::Sd, 1.0),
            Err(Error::DegenerateFeature(_))
        ));
    }

    proptest! {
        #[test]
        fn permutation_invariant(values in proptest::collection::vec(-1e3f64..1e3, 2..30), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = values.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = feature_stats(&column(&values), "x").unwrap();
            let b = feature_stats(&column(&shuffled), "x").unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
