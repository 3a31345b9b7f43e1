use super::*;
use crate::data::{numeric, StepVector};
use crate::effects::fme_batch;
use crate::predictors::{dgp, FnPredictor};
use proptest::prelude::*;
use rand::Rng;

fn univariate_grid(n: usize, lo: f64, hi: f64) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1) as f64]).collect();
    Dataset::from_numeric(&["x"], &rows).unwrap()
}

fn bivariate_grid(k: usize) -> Dataset {
    let mut rows = Vec::new();
    for i in 0..k {
        for j in 0..k {
            let a = -5.0 + 10.0 * i as f64 / (k - 1) as f64;
            let b = -5.0 + 10.0 * j as f64 / (k - 1) as f64;
            rows.push(vec![a, b]);
        }
    }
    Dataset::from_numeric(&["x1", "x2"], &rows).unwrap()
}

fn check_invariants(tree: &PartitionTree, table: &EffectTable) {
    let mut rows: Vec<usize> = tree.leaves().iter().flat_map(|&l| tree.nodes()[l].rows.clone()).collect();
    rows.sort_unstable();
    let mut expected: Vec<usize> = table.records.iter().map(|r| r.row).collect();
    expected.sort_unstable();
    assert_eq!(rows, expected);

    let n = table.records.len() as f64;
    let weighted: f64 =
        tree.leaves().iter().map(|&l| tree.nodes()[l].summary.n as f64 * tree.nodes()[l].summary.came).sum::<f64>() / n;
    assert!((weighted - table.ame().unwrap()).abs() < 1e-10);

    for &l in &tree.leaves() {
        assert!(tree.nodes()[l].summary.n >= tree.params().min_node_size);
    }
    for node in tree.nodes() {
        if node.split.is_some() {
            assert!(node.p_value.unwrap() <= tree.params().alpha);
        }
    }
}

#[test]
fn summaries() {
    let r = vec![FeatureRange::Interval { min: 0.0, max: 1.0 }];
    let s = summarize(&[2.0, 2.0, 2.0], None, r.clone(), 0.05).unwrap();
    assert_eq!((s.came, s.sd_fme, s.cov_fme), (2.0, Some(0.0), Some(0.0)));
    assert_eq!(s.ci_came, Some((2.0, 2.0)));
    let s = summarize(&[1.0, 3.0], None, r.clone(), 0.05).unwrap();
    assert_eq!(s.came, 2.0);
    assert!((s.sd_fme.unwrap() - 2f64.sqrt()).abs() < 1e-15);
    assert!((s.cov_fme.unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    let zero = summarize(&[-1.0, 1.0], None, r.clone(), 0.05).unwrap();
    assert_eq!(zero.cov_fme, None);
    let with_nlm = summarize(&[1.0, 2.0, 3.0], Some(&[Some(0.5), None, Some(1.0)]), r, 0.05).unwrap();
    assert_eq!(with_nlm.canlm, Some(0.75));
    assert_eq!(with_nlm.nlm_dropped, 1);
}

#[test]
fn constant_effects_give_root_only() {
    let m = FnPredictor::numeric(&["x"], |x| 3.0 * x[0]);
    let d = univariate_grid(100, -5.0, 5.0);
    let t = fme_batch(&m, &d, &StepVector::shift("x", 1.0).unwrap(), None).unwrap();
    let tree = fit_effect_tree(&d, &t, &TreeParams::default()).unwrap();
    assert_eq!(tree.nodes().len(), 1);
    assert_eq!(tree.root().summary.came, 3.0);
    check_invariants(&tree, &t);
}

#[test]
fn too_few_records() {
    let m = FnPredictor::numeric(&["x"], |x| x[0]);
    let d = univariate_grid(59, -5.0, 5.0);
    let t = fme_batch(&m, &d, &StepVector::shift("x", 1.0).unwrap(), None).unwrap();
    assert!(matches!(fit_effect_tree(&d, &t, &TreeParams::default()), Err(Error::Empty(_))));
}

#[test]
fn univariate_regimes() {
    let m = dgp("univariate").unwrap();
    let d = univariate_grid(513, -5.0, 3.0);
    let t = fme_batch(&m, &d, &StepVector::shift("x", 2.0).unwrap(), None).unwrap();
    let tree = fit_effect_tree(&d, &t, &TreeParams::default()).unwrap();
    check_invariants(&tree, &t);
    let near_boundary = tree.nodes().iter().filter_map(|n| n.split.as_ref()).any(|s| match s.rule {
        SplitRule::Threshold(v) => (v + 2.0).abs() <= 0.25 || v.abs() <= 0.25,
        _ => false,
    });
    assert!(near_boundary);
    let linear_leaf = tree.leaves().into_iter().any(|l| {
        let s = &tree.nodes()[l].summary;
        matches!(s.ranges[0], FeatureRange::Interval { min, max } if min >= -5.0 && max <= -2.0)
            && s.came == 2.0
            && s.cov_fme == Some(0.0)
    });
    assert!(linear_leaf);
}

#[test]
fn multiplicative_splits_on_second_feature() {
    let m = dgp("bivariate_multiplicative").unwrap();
    let d = bivariate_grid(31);
    let t = fme_batch(&m, &d, &StepVector::shift("x1", 2.0).unwrap(), None).unwrap();
    let tree = fit_effect_tree(&d, &t, &TreeParams::default()).unwrap();
    assert!(tree.split_features().contains(&"x2"));
    check_invariants(&tree, &t);
}

#[test]
fn ranges_and_routing() {
    let m = FnPredictor::numeric(&["x1", "x2"], |x| if x[0] <= 0.0 { x[0] } else { 5.0 * x[0] });
    let d = bivariate_grid(15);
    let t = fme_batch(&m, &d, &StepVector::shift("x1", 0.5).unwrap(), None).unwrap();
    let tree = fit_effect_tree(&d, &t, &TreeParams::default()).unwrap();
    assert!(tree.nodes().len() > 1);
    assert_eq!(tree.split_features(), ["x1"]);
    let global = global_ranges(&d).unwrap();
    for l in tree.leaves() {
        let r = &tree.nodes()[l].summary.ranges;
        assert_eq!(r[1], global[1]);
        assert!(global[0].contains(&r[0]) && r[0] != global[0]);
    }

    let env = Envelope::from_dataset(&d).unwrap();
    let x = numeric(&[-4.0, 0.0]);
    let routed = tree.route(&x, &env).unwrap();
    assert!(!routed.caution);
    assert!(matches!(routed.summary.ranges[0], FeatureRange::Interval { min, max } if min <= -4.0 && -4.0 <= max));
    let far = tree.route(&numeric(&[-40.0, 0.0]), &env).unwrap();
    assert!(far.caution);
    assert_eq!(far.leaf, routed.leaf);

    let root_split = tree.root().split.as_ref().unwrap();
    let SplitRule::Threshold(th) = root_split.rule else { panic!() };
    let on = tree.leaf_of(&numeric(&[th, 0.0])).unwrap();
    let left_most = {
        let mut i = root_split.left;
        while let Some(s) = &tree.nodes()[i].split {
            i = if s.rule.goes_left(&Value::Num(th)) { s.left } else { s.right };
        }
        i
    };
    assert_eq!(on, left_most);
    assert!(tree.route(&numeric(&[0.0]), &env).is_err());
}

#[test]
fn seeded_fit_is_deterministic_and_exports() {
    let m = dgp("bivariate_additive").unwrap();
    let d = bivariate_grid(11);
    let t = fme_batch(&m, &d, &StepVector::shift("x1", 2.0).unwrap(), None).unwrap();
    let p = TreeParams { seed: 7, min_node_size: 10, ..TreeParams::default() };
    let a = fit_effect_tree(&d, &t, &p).unwrap();
    let b = fit_effect_tree(&d, &t, &p).unwrap();
    assert_eq!(a, b);
    let json = a.to_json_value();
    assert!(json["root"]["summary"]["came"].is_number());
    let mut buf = Vec::new();
    a.write_leaves_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("leaf,n,came,sd_fme,cov_fme,canlm,nlm_dropped,sd_nlm,cov_nlm,ci_came_lo,ci_came_hi,ci_canlm_lo,ci_canlm_hi,x1,x2\n"));
    assert_eq!(text.lines().count(), 1 + a.leaves().len());
}

#[test]
fn noise_rarely_splits() {
    let d = univariate_grid(60, 0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trials = 200;
    let mut splits = 0;
    for seed in 0..trials {
        let noise: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = FnPredictor::numeric(&["x"], |_| 0.0);
        let mut t = fme_batch(&m, &d, &StepVector::shift("x", 1.0).unwrap(), None).unwrap();
        for (r, e) in t.records.iter_mut().zip(&noise) {
            r.fme = *e;
        }
        let p = TreeParams { seed, min_node_size: 10, max_depth: 1, ..TreeParams::default() };
        if fit_effect_tree(&d, &t, &p).unwrap().nodes().len() > 1 {
            splits += 1;
        }
    }
    assert!((splits as f64) / (trials as f64) <= 0.1, "{splits}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn tree_invariants(c in prop::array::uniform3(-2.0..2.0f64), h in 0.5..2.0f64, min_node in 5usize..20) {
        let m = FnPredictor::numeric(&["x1", "x2"], move |x| c[0] * x[0] * x[0] + c[1] * x[0] * x[1] + c[2] * x[1].abs());
        let d = bivariate_grid(12);
        let t = fme_batch(&m, &d, &StepVector::shift("x1", h).unwrap(), None).unwrap();
        let tree = fit_effect_tree(&d, &t, &TreeParams { min_node_size: min_node, permutations: 49, ..TreeParams::default() }).unwrap();
        check_invariants(&tree, &t);
        let sse = |rows: &[usize]| {
            let v: Vec<f64> = rows.iter().map(|&r| t.records[r].fme).collect();
            crate::split::sse(v.into_iter())
        };
        let leaves: f64 = tree.leaves().iter().map(|&l| sse(&tree.nodes()[l].rows)).sum();
        prop_assert!(leaves <= sse(&tree.root().rows) * (1.0 + 1e-12) + 1e-12);
    }
}
