use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn synthetic(n: usize, p: usize, signal: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let norm = Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..p).map(|_| norm.sample(&mut rng)).collect();
        let z = signal * (row[0] + 0.5 * row[1]) + norm.sample(&mut rng);
        y.push(z > 0.0);
        x.extend(row);
    }
    Dataset::new(x, p, y, "test-schema").unwrap()
}

#[test]
fn gradient_matches_finite_differences() {
    let data = synthetic(60, 4, 1.0, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for penalty in [Penalty::L2, Penalty::L1] {
        for _ in 0..10 {
            let coef: Vec<f64> = (0..4)
                .map(|_| {
                    let v: f64 = rng.random_range(0.1..1.0);
                    if rng.random_bool(0.5) { v } else { -v }
                })
                .collect();
            let b = rng.random_range(-1.0..1.0);
            let c = 0.5;
            let (g, gb) = logistic_gradient(&data.x, 4, &data.y, &coef, b, penalty, c);
            let h = 1e-6;
            for j in 0..4 {
                let mut up = coef.clone();
                up[j] += h;
                let mut dn = coef.clone();
                dn[j] -= h;
                let fd = (logistic_objective(&data.x, 4, &data.y, &up, b, penalty, c)
                    - logistic_objective(&data.x, 4, &data.y, &dn, b, penalty, c))
                    / (2.0 * h);
                assert!((fd - g[j]).abs() < 1e-4, "{penalty:?} coef {j}: {fd} vs {}", g[j]);
            }
            let fd = (logistic_objective(&data.x, 4, &data.y, &coef, b + h, penalty, c)
                - logistic_objective(&data.x, 4, &data.y, &coef, b - h, penalty, c))
                / (2.0 * h);
            assert!((fd - gb).abs() < 1e-4);
        }
    }
}

#[test]
fn l2_fit_reaches_stationary_point() {
    let data = synthetic(400, 5, 1.5, 4);
    let m = train(&data, &HyperParams::scaled_logistic(Penalty::L2, 1.0)).unwrap();
    let ModelState::Logistic(s) = &m.state else { panic!() };
    assert!(s.converged);
    let xs: Vec<f64> = data
        .x
        .chunks_exact(5)
        .flat_map(|r| (0..5).map(|j| (r[j] - s.mean[j]) / s.scale[j]).collect::<Vec<_>>())
        .collect();
    let (g, gb) = logistic_gradient(&xs, 5, &data.y, &s.coef, s.intercept, Penalty::L2, 1.0);
    let norm = (g.iter().map(|v| v * v).sum::<f64>() + gb * gb).sqrt();
    assert!(norm < 1e-3, "gradient norm {norm}");
    assert!(s.coef[0] > s.coef[1] && s.coef[1] > 0.0);
}

#[test]
fn strong_l1_zeroes_noise_coefficients() {
    let data = synthetic(500, 6, 1.0, 5);
    let m = train(&data, &HyperParams::scaled_logistic(Penalty::L1, 0.0001)).unwrap();
    let ModelState::Logistic(s) = &m.state else { panic!() };
    assert!(s.coef[2..].iter().all(|&w| w == 0.0), "{:?}", s.coef);

    let m = train(&data, &HyperParams::scaled_logistic(Penalty::L1, 10.0)).unwrap();
    let ModelState::Logistic(s) = &m.state else { panic!() };
    assert!(s.coef[0] > 0.0);
}

#[test]
fn non_finite_features_rejected() {
    let mut data = synthetic(20, 2, 1.0, 6);
    data.x[7] = f64::NAN;
    for p in [HyperParams::scaled_logistic(Penalty::L2, 1.0), HyperParams::decision_tree(3, 2)] {
        assert!(matches!(train(&data, &p), Err(LearnError::NonFinite { row: 3, col: 1 })));
    }
}

#[test]
fn single_class_gives_constant_model() {
    let mut data = synthetic(30, 2, 1.0, 7);
    data.y.iter_mut().for_each(|b| *b = true);
    for p in [
        HyperParams::decision_tree(3, 2),
        HyperParams::random_forest(5, 3, 2),
        HyperParams::scaled_logistic(Penalty::L2, 1.0),
    ] {
        let m = train(&data, &p).unwrap();
        assert_eq!(m.state, ModelState::Constant { score: 1.0 });
        assert!(m.predict_rows(&data.x).unwrap().iter().all(|&s| s == 1.0));
    }
}

/// Exhaustive root-split oracle over midpoints of neighbouring distinct values.
fn oracle_root(data: &Dataset) -> Option<(usize, f64)> {
    let n = data.n_rows() as f64;
    let pos = data.y.iter().filter(|&&b| b).count() as f64;
    let parent = gini(pos, n);
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..data.n_cols {
        let mut vals: Vec<f64> = (0..data.n_rows()).map(|i| data.row(i)[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (mut nl, mut pl) = (0.0, 0.0);
            for i in 0..data.n_rows() {
                if data.row(i)[f] <= t {
                    nl += 1.0;
                    if data.y[i] {
                        pl += 1.0;
                    }
                }
            }
            let dec = parent - (nl / n) * gini(pl, nl) - ((n - nl) / n) * gini(pos - pl, n - nl);
            if dec > 1e-12 && best.is_none_or(|(d, _, _)| dec > d) {
                best = Some((dec, f, t));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

#[test]
fn gini_values() {
    assert_eq!(gini(0.0, 4.0), 0.0);
    assert_eq!(gini(2.0, 4.0), 0.5);
    assert!((gini(1.0, 3.0) - 4.0 / 9.0).abs() < 1e-15);
}

#[test]
fn tree_fits_separable_fixture() {
    let x = vec![1.0, 2.0, 3.0, 10.0, 11.0, 12.0];
    let data = Dataset::new(x, 1, vec![false, false, false, true, true, true], "s").unwrap();
    let m = train(&data, &HyperParams::decision_tree(5, 2)).unwrap();
    let ModelState::Trees { trees } = &m.state else { panic!() };
    assert_eq!(trees[0].root_split(), Some((0, 6.5)));
    assert_eq!(trees[0].leaf_count(), 2);
    assert_eq!(m.predict_rows(&[0.0, 6.5, 6.6, 100.0]).unwrap(), vec![0.0, 0.0, 1.0, 1.0]);
}

#[test]
fn depth_and_min_samples_split_respected() {
    let data = synthetic(500, 4, 0.5, 8);
    let m = train(&data, &HyperParams::decision_tree(3, 2)).unwrap();
    let ModelState::Trees { trees } = &m.state else { panic!() };
    assert!(trees[0].depth() <= 3);
    let m = train(&data, &HyperParams::decision_tree(50, 100)).unwrap();
    let ModelState::Trees { trees } = &m.state else { panic!() };
    for n in &trees[0].nodes {
        if n.feature.is_some() {
            assert!(n.weight >= 100.0);
        }
    }
}

#[test]
fn quantile_binning_still_splits_well() {
    let data = synthetic(3000, 3, 3.0, 10);
    let p = HyperParams {
        max_bins: 16,
        ..HyperParams::decision_tree(6, 2)
    };
    let m = train(&data, &p).unwrap();
    let s = m.predict_rows(&data.x).unwrap();
    assert!(auc(&s, &data.y).unwrap() > 0.85);
}

#[test]
fn single_unbootstrapped_tree_forest_equals_tree() {
    let data = synthetic(400, 5, 1.0, 11);
    let tree = train(&data, &HyperParams::decision_tree(6, 10)).unwrap();
    let forest = train(
        &data,
        &HyperParams {
            bootstrap: Some(false),
            max_features: MaxFeatures::All,
            ..HyperParams::random_forest(1, 6, 10)
        },
    )
    .unwrap();
    assert_eq!(tree.state, forest.state);
}

#[test]
fn forests_separate_strong_signal() {
    let train_set = synthetic(2000, 8, 3.0, 12);
    let test_set = synthetic(2000, 8, 3.0, 13);
    for p in [HyperParams::random_forest(50, 8, 10), HyperParams::extra_trees(50, 8, 10)] {
        let m = train(&train_set, &p.clone().with_seed(1)).unwrap();
        let a = auc(&m.predict_rows(&test_set.x).unwrap(), &test_set.y).unwrap();
        assert!(a > 0.85, "{:?} auc {a}", p.algorithm);
    }
}

#[test]
fn ensembles_are_seed_deterministic() {
    let data = synthetic(300, 6, 1.0, 14);
    let p = HyperParams::random_forest(8, 5, 2).with_seed(42);
    assert_eq!(train(&data, &p).unwrap(), train(&data, &p).unwrap());
    let q = HyperParams::extra_trees(8, 5, 2).with_seed(42);
    assert_eq!(train(&data, &q).unwrap(), train(&data, &q).unwrap());
    assert_ne!(train(&data, &p.clone().with_seed(43)).unwrap().state, train(&data, &p).unwrap().state);
}

#[test]
fn save_load_predict_bit_identical() {
    let data = synthetic(300, 5, 1.0, 15);
    let dir = tempfile::tempdir().unwrap();
    for p in [
        HyperParams::decision_tree(6, 2),
        HyperParams::random_forest(10, 6, 2),
        HyperParams::extra_trees(10, 6, 2),
        HyperParams::scaled_logistic(Penalty::L2, 1.0),
        HyperParams::scaled_logistic(Penalty::L1, 0.1),
    ] {
        let m = train(&data, &p).unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        assert_eq!(back, m);
        let a = m.predict_rows(&data.x).unwrap();
        let b = back.predict_rows(&data.x).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn version_and_schema_guards() {
    let data = synthetic(50, 2, 1.0, 16);
    let m = train(&data, &HyperParams::decision_tree(2, 2)).unwrap();
    assert!(matches!(m.check_schema("other"), Err(LearnError::SchemaMismatch { .. })));
    assert!(m.check_schema("test-schema").is_ok());
    let text = m.to_json().replace(MODEL_VERSION, "dwellcast-model/0");
    assert!(matches!(TrainedModel::from_json(&text), Err(LearnError::Version(_))));
    assert!(matches!(m.predict_rows(&[1.0, 2.0, 3.0]), Err(LearnError::Width { .. })));
}

#[test]
fn roc_example_has_five_points() {
    let r = roc_curve(&[0.9, 0.8, 0.4, 0.3], &[true, false, true, false]).unwrap();
    let t: Vec<f64> = r.points.iter().map(|p| p.threshold).collect();
    assert_eq!(t.len(), 5);
    assert_eq!(t[0], f64::INFINITY);
    assert!((t[1] - 0.85).abs() < 1e-12 && (t[2] - 0.6).abs() < 1e-12 && (t[3] - 0.35).abs() < 1e-12);
    assert_eq!(t[4], f64::NEG_INFINITY);
    assert!((r.auc() - 0.75).abs() < 1e-12);
}

#[test]
fn separating_scores_threshold_between_classes() {
    let t = youden_threshold(&[0.1, 0.2, 0.7, 0.9], &[false, false, true, true]).unwrap();
    assert!(t > 0.2 && t < 0.7);
    assert!(matches!(roc_curve(&[0.1, 0.2], &[true, true]), Err(LearnError::SingleClass)));
}

#[test]
fn null_scores_have_half_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let s: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
    let y: Vec<bool> = (0..20_000).map(|_| rng.random_bool(0.3)).collect();
    assert!((auc(&s, &y).unwrap() - 0.5).abs() < 0.02);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn root_split_matches_oracle(
        rows in prop::collection::vec((prop::collection::vec(0u8..6, 3), any::<bool>()), 2..=12)
    ) {
        let x: Vec<f64> = rows.iter().flat_map(|(r, _)| r.iter().map(|&v| v as f64 * 0.5)).collect();
        let y: Vec<bool> = rows.iter().map(|(_, b)| *b).collect();
        let data = Dataset::new(x, 3, y, "s").unwrap();
        let m = train(&data, &HyperParams::decision_tree(1, 2)).unwrap();
        let got = match &m.state {
            ModelState::Trees { trees } => trees[0].root_split(),
            ModelState::Constant { .. } => None,
            _ => unreachable!(),
        };
        let want = oracle_root(&data);
        match (got, want) {
            (None, None) => {}
            (Some((f, t)), Some((g, u))) => {
                prop_assert_eq!(f, g);
                prop_assert!((t - u).abs() < 1e-12);
            }
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn auc_equals_pair_probability(
        pairs in prop::collection::vec((0u8..8, any::<bool>()), 2..40)
    ) {
        let s: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 8.0).collect();
        let y: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        prop_assume!(y.iter().any(|&b| b) && y.iter().any(|&b| !b));
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] && !y[j] {
                    den += 1.0;
                    num += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        prop_assert!((auc(&s, &y).unwrap() - num / den).abs() < 1e-12);
    }

    #[test]
    fn youden_matches_enumeration(
        pairs in prop::collection::vec((0u8..10, any::<bool>()), 2..40)
    ) {
        let s: Vec<f64> = pairs.iter().map(|p| p.0 as f64 / 10.0).collect();
        let y: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let pos = y.iter().filter(|&&b| b).count() as f64;
        let neg = y.len() as f64 - pos;
        prop_assume!(pos > 0.0 && neg > 0.0);
        // Candidate cut "score >= c" for every distinct score, plus "nothing".
        let mut cands: Vec<f64> = s.clone();
        cands.push(f64::INFINITY);
        cands.sort_by(|a, b| b.total_cmp(a));
        cands.dedup();
        let j_of = |sel: &dyn Fn(f64) -> bool| {
            let tp = s.iter().zip(&y).filter(|(v, l)| **l && sel(**v)).count() as f64;
            let fp = s.iter().zip(&y).filter(|(v, l)| !**l && sel(**v)).count() as f64;
            tp / pos - fp / neg
        };
        let mut best = (f64::NEG_INFINITY, f64::INFINITY);
        for &c in &cands {
            let j = j_of(&|v| v >= c);
            if j > best.0 {
                best = (j, c);
            }
        }
        let t = youden_threshold(&s, &y).unwrap();
        prop_assert!((j_of(&|v| v > t) - best.0).abs() < 1e-12);
        for &v in &s {
            prop_assert_eq!(v > t, v >= best.1);
        }
    }
}
