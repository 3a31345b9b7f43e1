use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Bound, Detection, Detector, Envelope};
use crate::data::{Dataset, Observation, Value};
use crate::error::{Error, Result};
use crate::predictors::{CartParams, Predictor, TreeModel};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct McecParams {
    /// Background sample size; defaults to the number of training rows.
    pub uniform_budget: Option<usize>,
    pub seed: u64,
    /// Support of the background distribution; defaults to the training envelope.
    pub support: Option<Envelope>,
    pub cart: CartParams,
}

/// Monte-Carlo extrapolation classifier: a classification tree separating
/// training rows (label 0) from uniform background samples (label 1). The
/// risk of a point is the background share of its leaf.
#[derive(Clone, Debug)]
pub struct Mcec {
    envelope: Envelope,
    support: Envelope,
    tree: TreeModel,
}

impl Mcec {
    pub fn fit(d: &Dataset, params: &McecParams) -> Result<Mcec> {
        let envelope = Envelope::from_dataset(d)?;
        let budget = params.uniform_budget.unwrap_or(d.n());
        if budget == 0 {
            return Err(Error::InvalidArgument("uniform budget must be at least 1".into()));
        }
        let support = params.support.clone().unwrap_or_else(|| envelope.clone());
        if support.features().len() != d.p() {
            return Err(Error::Schema("support does not match the data columns".into()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut rows: Vec<Observation> = d.rows().to_vec();
        let mut labels = vec![0.0; d.n()];
        for _ in 0..budget {
            let row = support
                .bounds()
                .iter()
                .map(|b| match b {
                    Bound::Interval { min, max } if max > min => Value::Num(rng.random_range(*min..=*max)),
                    Bound::Interval { min, .. } => Value::Num(*min),
                    Bound::Categories(cs) => Value::Cat(cs[rng.random_range(0..cs.len())].clone()),
                })
                .collect();
            rows.push(row);
            labels.push(1.0);
        }
        // Category lists of the schema must admit every sampled category.
        let features = d
            .features()
            .iter()
            .zip(support.features())
            .map(|(f, s)| if f.is_continuous() { f.clone() } else { s.clone() })
            .collect::<Vec<_>>();
        let tree = TreeModel::fit_rows(&features, &rows, &labels, &params.cart)?;
        Ok(Mcec { envelope, support, tree })
    }

    pub fn tree(&self) -> &TreeModel {
        &self.tree
    }

    /// Extrapolation risk in `[0, 1]`; 1 outside the training envelope or the support.
    pub fn risk(&self, x: &[Value]) -> Result<f64> {
        if self.envelope.is_outside(x)? || self.support.is_outside(x)? {
            return Ok(1.0);
        }
        self.tree.predict_one(x)
    }
}

impl Detector for Mcec {
    fn detect(&self, x: &[Value]) -> Result<Detection> {
        Ok(Detection::from_risk(self.risk(x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{numeric, FeatureMeta};

    fn uniform_data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        Dataset::from_numeric(&["a", "b"], &rows).unwrap()
    }

    #[test]
    fn budget_zero_rejected() {
        let p = McecParams { uniform_budget: Some(0), ..McecParams::default() };
        assert!(Mcec::fit(&uniform_data(10, 1), &p).is_err());
    }

    #[test]
    fn outside_box_risk_is_one() {
        let m = Mcec::fit(&uniform_data(200, 2), &McecParams::default()).unwrap();
        assert_eq!(m.risk(&numeric(&[1.5, 0.5])).unwrap(), 1.0);
        assert_eq!(m.risk(&numeric(&[0.5, -0.1])).unwrap(), 1.0);
    }

    #[test]
    fn risk_is_leafwise_proportion() {
        let m = Mcec::fit(&uniform_data(300, 3), &McecParams { seed: 9, ..McecParams::default() }).unwrap();
        for i in 0..50 {
            let x = numeric(&[(i as f64 * 0.37) % 1.0, (i as f64 * 0.61) % 1.0]);
            let r = m.risk(&x).unwrap();
            assert!((0.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn same_seed_same_tree() {
        let d = uniform_data(150, 4);
        let p = McecParams { seed: 11, ..McecParams::default() };
        assert_eq!(Mcec::fit(&d, &p).unwrap().tree(), Mcec::fit(&d, &p).unwrap().tree());
    }

    #[test]
    fn categorical_support() {
        let rows: Vec<Observation> = (0..40)
            .map(|i| vec![Value::Num(i as f64), Value::Cat(if i % 2 == 0 { "a" } else { "b" }.into())])
            .collect();
        let d = Dataset::new(
            vec![FeatureMeta::continuous("x", 0.0, 39.0), FeatureMeta::categorical("c", ["a", "b"])],
            rows,
        )
        .unwrap();
        let m = Mcec::fit(&d, &McecParams::default()).unwrap();
        assert!(m.risk(&[Value::Num(3.0), "a".into()]).unwrap() <= 1.0);
        assert_eq!(m.risk(&[Value::Num(3.0), "q".into()]).unwrap(), 1.0);
    }
}
