mod common;

use common::{accuracy, blobs, gaussian_matrix, qp_oracle, rbf_kernel, xor};
use ndarray::{array, Array1, Array2, Axis};
use nocisense::features::StandardizationState;
use nocisense::models::knn::Knn;
use nocisense::models::linear::{GaussianNb, LinearModel};
use nocisense::models::svm::{solve_smo, SvmModel, SvmParams};
use nocisense::models::{
    read_model, train, write_model, Classifier, ModelError, TrainMeta, MODEL_FILE_VERSION,
};
use nocisense::{AlgorithmId, FeatureVector, Hyperparams, TrainedModel};
use proptest::prelude::*;

const NONLINEAR: [AlgorithmId; 5] =
    [AlgorithmId::SvmRbf, AlgorithmId::Knn, AlgorithmId::RandomForest, AlgorithmId::GradBoost, AlgorithmId::RegGradBoost];

#[test]
fn separable_blobs_are_learned_by_every_algorithm() {
    let (x, y) = blobs(200, 0.3, 1);
    for alg in AlgorithmId::ALL {
        let m = train(alg, x.view(), &y, &Hyperparams::default(), 3).unwrap();
        let acc = accuracy(&m.proba_rows(x.view()), &y);
        assert!(acc >= 0.95, "{alg}: {acc}");
    }
}

#[test]
fn xor_separates_linear_from_nonlinear() {
    let (x, y) = xor(400, 0.25, 2);
    let (xt, yt) = xor(400, 0.25, 3);
    for alg in AlgorithmId::ALL {
        let m = train(alg, x.view(), &y, &Hyperparams::default(), 5).unwrap();
        let acc = accuracy(&m.proba_rows(xt.view()), &yt);
        if NONLINEAR.contains(&alg) {
            assert!(acc >= 0.90, "{alg}: {acc}");
        } else if matches!(alg, AlgorithmId::LogisticRegression | AlgorithmId::LinearDiscriminant) {
            assert!((acc - 0.5).abs() <= 0.10, "{alg}: {acc}");
        }
    }
}

#[test]
fn naive_bayes_boundary_is_at_the_midpoint() {
    // class moments: mean 0 and 2, population variance 1, equal priors
    let x = array![[-1.0], [1.0], [1.0], [3.0]];
    let y = [0, 0, 1, 1];
    let nb = GaussianNb::train(x.view(), &y, 1e-9);
    let p = |v: f64| nb.proba(array![v].view());
    let (mut lo, mut hi) = (0.0, 2.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if p(mid) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((0.5 * (lo + hi) - 1.0).abs() <= 1e-6);
}

#[test]
fn smo_matches_dense_qp_oracle() {
    for seed in 0..5 {
        let (x, yl) = blobs(20, 0.9, 40 + seed);
        let y: Vec<f64> = yl.iter().map(|&c| if c == 1 { 1.0 } else { -1.0 }).collect();
        let k = rbf_kernel(&x, 0.5);
        let q = Array2::from_shape_fn((20, 20), |(i, j)| y[i] * y[j] * k[[i, j]]);
        for c in [0.5, 10.0] {
            let sol = solve_smo(k.view(), &y, &vec![c; 20], 1e-6, 1_000_000);
            let (_, oracle) = qp_oracle(&q, &y, c, 20_000);
            assert!((sol.objective - oracle).abs() <= 1e-4 * oracle.abs(), "C={c}: {} vs {oracle}", sol.objective);
            assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
            assert!(sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum::<f64>().abs() <= 1e-9);
        }
    }
}

#[test]
fn two_point_svm_bisects() {
    let x = array![[1.0, 0.0], [-1.0, 0.0]];
    let y = [1u8, 0];
    let m = SvmModel::train(x.view(), &y, &SvmParams { c: 1e3, gamma: Some(0.5), ..SvmParams::default() });
    assert_eq!(m.coef.len(), 2);
    assert!(m.decision(array![0.0, 0.0].view()).abs() < 1e-9);
    assert!(m.decision(array![0.0, 3.7].view()).abs() < 1e-9);
    assert!((m.proba(array![0.0, 0.0].view()) - 0.5).abs() <= 0.02);
    assert!(m.proba(array![1.0, 0.0].view()) > 0.5);
}

#[test]
fn duplicated_point_equals_doubled_budget() {
    let (x, yl) = blobs(16, 1.2, 9);
    let y: Vec<f64> = yl.iter().map(|&c| if c == 1 { 1.0 } else { -1.0 }).collect();
    let c = 1.0;
    let mut xd = x.clone();
    xd.push_row(x.row(3)).unwrap();
    let mut yd = y.clone();
    yd.push(y[3]);
    let dup = solve_smo(rbf_kernel(&xd, 0.3).view(), &yd, &vec![c; 17], 1e-12, 1_000_000);
    let mut budget = vec![c; 16];
    budget[3] = 2.0 * c;
    let single = solve_smo(rbf_kernel(&x, 0.3).view(), &y, &budget, 1e-12, 1_000_000);
    let queries = common::gaussian_matrix(50, 2, 4) * 2.0;
    let decision = |xs: &Array2<f64>, ys: &[f64], alpha: &[f64], rho: f64, q: ndarray::ArrayView1<f64>| -> f64 {
        xs.axis_iter(Axis(0))
            .zip(ys.iter().zip(alpha))
            .map(|(r, (y, a))| a * y * (-0.3 * r.iter().zip(q.iter()).map(|(u, v)| (u - v).powi(2)).sum::<f64>()).exp())
            .sum::<f64>()
            - rho
    };
    for q in queries.axis_iter(Axis(0)) {
        let a = decision(&xd, &yd, &dup.alpha, dup.rho, q);
        let b = decision(&x, &y, &single.alpha, single.rho, q);
        assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }
}

#[test]
fn knn_vote_fraction() {
    let x = array![[0.0], [0.1], [0.2], [0.3], [0.4], [5.0], [6.0]];
    let y = [1u8, 1, 0, 1, 1, 0, 0];
    let m = Knn::train(x.view(), &y, 5);
    assert_eq!(m.proba(array![0.2].view()), 0.8);
    // equidistant neighbours at 1.0 and 3.0: the lower index wins
    let m = Knn::train(array![[1.0], [3.0], [10.0]].view(), &[0, 1, 1], 1);
    assert_eq!(m.proba(array![2.0].view()), 0.0);
}

#[test]
fn logistic_is_a_sigmoid() {
    let m = LinearModel { weights: vec![0.5, -1.25, 2.0], bias: -0.3 };
    for x in [array![0.0, 0.0, 0.0], array![1.0, 2.0, 3.0], array![-4.0, 0.5, -1.0]] {
        let z: f64 = m.weights.iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>() + m.bias;
        assert!((m.proba(x.view()) - 1.0 / (1.0 + (-z).exp())).abs() <= 1e-12);
    }
}

#[test]
fn lda_direction_matches_closed_form() {
    let n = 400;
    let base = gaussian_matrix(n, 4, 21);
    let mix = array![[1.0, 0.3, 0.0, 0.1], [0.0, 1.0, 0.4, 0.0], [0.0, 0.0, 1.0, 0.2], [0.0, 0.0, 0.0, 1.0]];
    let mut x = base.dot(&mix);
    let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let shift = array![1.0, -0.5, 0.25, 0.8];
    for (mut r, &c) in x.axis_iter_mut(Axis(0)).zip(&y) {
        if c == 1 {
            r += &shift;
        }
    }
    let mut hp = Hyperparams::default();
    hp.apply_override("lda.shrinkage=0").unwrap();
    let Classifier::Linear(m) = train(AlgorithmId::LinearDiscriminant, x.view(), &y, &hp, 0).unwrap() else { panic!() };
    let mean = |c: u8| {
        let rows: Vec<usize> = (0..n).filter(|&i| y[i] == c).collect();
        x.select(Axis(0), &rows).mean_axis(Axis(0)).unwrap()
    };
    let (m0, m1) = (mean(0), mean(1));
    let mut s = nalgebra::DMatrix::<f64>::zeros(4, 4);
    for (r, &c) in x.axis_iter(Axis(0)).zip(&y) {
        let e: Array1<f64> = &r - if c == 1 { &m1 } else { &m0 };
        let ev = nalgebra::DVector::from_iterator(4, e.iter().copied());
        s += &ev * ev.transpose();
    }
    let dir = s.try_inverse().unwrap() * nalgebra::DVector::from_iterator(4, (&m1 - &m0).iter().copied());
    let w = nalgebra::DVector::from_vec(m.weights.clone());
    let cos = w.dot(&dir) / (w.norm() * dir.norm());
    assert!(cos.clamp(-1.0, 1.0).acos() <= 1e-6);
}

#[test]
fn boosting_loss_never_increases() {
    let (x, y) = xor(300, 0.5, 12);
    for alg in [AlgorithmId::GradBoost, AlgorithmId::RegGradBoost] {
        let Classifier::Boosted(m) = train(alg, x.view(), &y, &Hyperparams::default(), 0).unwrap() else { panic!() };
        assert!(m.train_loss.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{alg}");
    }
}

#[test]
fn training_errors() {
    let (x, _) = blobs(20, 0.3, 1);
    assert!(matches!(train(AlgorithmId::Knn, x.view(), &[1; 20], &Hyperparams::default(), 0), Err(ModelError::SingleClassData)));
    let mut bad = x.clone();
    bad[[4, 1]] = f64::NAN;
    let y: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
    assert!(matches!(
        train(AlgorithmId::SvmRbf, bad.view(), &y, &Hyperparams::default(), 0),
        Err(ModelError::NonFiniteFeature { row: 4, col: 1 })
    ));
    assert!("ninth_model".parse::<AlgorithmId>().is_err());
}

fn trained(alg: AlgorithmId, x: &Array2<f64>, y: &[u8]) -> TrainedModel {
    let standardization = StandardizationState::fit(x.view());
    let xs = standardization.apply_rows(x.view()).unwrap();
    TrainedModel {
        algorithm: alg,
        classifier: train(alg, xs.view(), y, &Hyperparams::default(), 11).unwrap(),
        standardization,
        manifest_hash: "abc".into(),
        hyperparams: Hyperparams::default(),
        meta: TrainMeta { seed: 11, fold: None, train_ms: 0.0, n_train: y.len() },
    }
}

#[test]
fn model_files_round_trip_and_detect_damage() {
    let x = gaussian_matrix(120, 6, 30);
    let y: Vec<u8> = (0..120).map(|i| u8::from(x[[i, 0]] + 0.5 * x[[i, 2]] > 0.0)).collect();
    let queries = gaussian_matrix(1000, 6, 31);
    for alg in AlgorithmId::ALL {
        let m = trained(alg, &x, &y);
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        let back = read_model(&buf[..]).unwrap();
        assert_eq!(back, m);
        for q in queries.axis_iter(Axis(0)) {
            let v = q.to_vec();
            assert_eq!(m.predict_proba_raw(&v).unwrap().to_bits(), back.predict_proba_raw(&v).unwrap().to_bits());
        }
        assert!(matches!(read_model(&buf[..buf.len() - 7]), Err(ModelError::CorruptPayload(_))));
        let mut flipped = buf.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 0x40;
        assert!(matches!(read_model(&flipped[..]), Err(ModelError::CorruptPayload(_))));
        let mut old = buf.clone();
        old[4] = MODEL_FILE_VERSION.wrapping_sub(1);
        assert!(matches!(read_model(&old[..]), Err(ModelError::VersionMismatch { .. })));
    }
}

#[test]
fn predict_checks_the_manifest() {
    let x = gaussian_matrix(40, 3, 2);
    let y: Vec<u8> = (0..40).map(|i| u8::from(x[[i, 1]] > 0.0)).collect();
    let m = trained(AlgorithmId::LogisticRegression, &x, &y);
    let mut v = FeatureVector {
        values: vec![0.1, 0.2, 0.3],
        imputed_mask: vec![false; 3],
        manifest_hash: "other".into(),
        label: None,
        subject_id: String::new(),
        flags: Default::default(),
    };
    assert!(matches!(m.predict_proba(&v), Err(ModelError::ManifestMismatch { .. })));
    v.manifest_hash = "abc".into();
    let p = m.predict_proba(&v).unwrap();
    assert_eq!(m.predict(&v, p).unwrap(), true);
    assert_eq!(m.predict(&v, p + 1e-9).unwrap(), false);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn training_is_deterministic_and_probabilities_bounded(seed in any::<u64>()) {
        let x = gaussian_matrix(60, 5, seed);
        let y: Vec<u8> = (0..60).map(|i| u8::from(x[[i, 0]] - x[[i, 3]] + 0.3 * x[[i, 1]] > 0.0)).collect();
        prop_assume!(y.iter().any(|&c| c == 1) && y.iter().any(|&c| c == 0));
        let queries = gaussian_matrix(50, 5, seed ^ 1) * 3.0;
        for alg in AlgorithmId::ALL {
            let a = train(alg, x.view(), &y, &Hyperparams::default(), seed).unwrap();
            let b = train(alg, x.view(), &y, &Hyperparams::default(), seed).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.proba_rows(queries.view()).iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn symmetric_data_gives_even_odds_at_the_centre(seed in any::<u64>()) {
        // mirrored pairs (x, 1) and (−x, 0); the origin is equidistant
        let half = gaussian_matrix(30, 3, seed) + 0.5;
        let mut x = half.clone();
        x.append(Axis(0), (-&half).view()).unwrap();
        let y: Vec<u8> = (0..60).map(|i| u8::from(i < 30)).collect();
        let origin = Array1::<f64>::zeros(3);
        for alg in [AlgorithmId::SvmRbf, AlgorithmId::LogisticRegression, AlgorithmId::LinearDiscriminant, AlgorithmId::GaussianNb] {
            let m = train(alg, x.view(), &y, &Hyperparams::default(), 0).unwrap();
            let p = m.proba(origin.view());
            prop_assert!((p - 0.5).abs() <= 0.05, "{}: {}", alg, p);
        }
    }
}
