use genlink::candidates::CandidateSet;
use genlink::evaluation::{GroundTruthLink, Split};
use genlink::features::{FeatureVector, N_FEATURES};
use genlink::learner::*;
use genlink::{Error, RecordIx, Role};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noisy_linear(n: usize, noise: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let y = x
        .iter()
        .map(|r| 1.5 * r[0] - r[1] + 0.5 * r[2] * r[3] + rng.gen_range(-noise..noise) > 0.0)
        .collect();
    (x, y)
}

fn config(kind: ModelKind) -> TrainConfig {
    TrainConfig {
        kind,
        seed: 11,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_toy_set_is_learned_exactly() {
    let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 3) as f64]).collect();
    let y: Vec<bool> = (0..40).map(|i| i >= 20).collect();
    for kind in [ModelKind::Logistic, ModelKind::Gbt] {
        let clf = train_rows(&x, &y, &config(kind)).unwrap();
        let p = clf.predict_many(&x).unwrap();
        assert!(p.iter().zip(&y).all(|(&p, &t)| (p > 0.5) == t), "{kind:?}");
    }
}

#[test]
fn held_out_auc_on_synthetic_signal() {
    let (x, y) = noisy_linear(3000, 1.0, 1);
    let (xt, yt) = noisy_linear(2000, 1.0, 2);
    for kind in [ModelKind::Logistic, ModelKind::Gbt] {
        let clf = train_rows(&x, &y, &config(kind)).unwrap();
        let auc = roc_auc(&clf.predict_many(&xt).unwrap(), &yt).unwrap();
        assert!(auc > 0.9, "{kind:?} auc {auc}");
    }
}

#[test]
fn pure_noise_gives_coin_flip_brier() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut draw = |n: usize| -> (Vec<Vec<f64>>, Vec<bool>) {
        let x = (0..n).map(|_| (0..3).map(|_| rng.gen::<f64>()).collect()).collect();
        let y = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        (x, y)
    };
    let (x, y) = draw(4000);
    let (xt, yt) = draw(4000);
    let clf = train_rows(&x, &y, &config(ModelKind::Logistic)).unwrap();
    let b = brier_score(&clf.predict_many(&xt).unwrap(), &yt).unwrap();
    assert!((b - 0.25).abs() <= 0.02, "brier {b}");
}

#[test]
fn platt_scaling_does_not_hurt_held_out_brier() {
    let (x, y) = noisy_linear(3000, 3.0, 4);
    let (xt, yt) = noisy_linear(3000, 3.0, 5);
    let raw = train_rows(&x, &y, &config(ModelKind::Gbt)).unwrap();
    let cal = train_rows(
        &x,
        &y,
        &TrainConfig {
            calibrate: true,
            ..config(ModelKind::Gbt)
        },
    )
    .unwrap();
    assert!(cal.calibration.is_some() && raw.calibration.is_none());
    let b_raw = brier_score(&raw.predict_many(&xt).unwrap(), &yt).unwrap();
    let b_cal = brier_score(&cal.predict_many(&xt).unwrap(), &yt).unwrap();
    assert!(b_cal <= b_raw + 0.005, "calibrated {b_cal} vs raw {b_raw}");
}

#[test]
fn training_is_bit_reproducible() {
    let (x, y) = noisy_linear(800, 1.0, 6);
    for kind in [ModelKind::Logistic, ModelKind::Gbt] {
        let cfg = TrainConfig {
            calibrate: true,
            ..config(kind)
        };
        let a = train_rows(&x, &y, &cfg).unwrap();
        let b = train_rows(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        let pa: Vec<u64> = a.predict_many(&x).unwrap().iter().map(|p| p.to_bits()).collect();
        let pb: Vec<u64> = b.predict_many(&x).unwrap().iter().map(|p| p.to_bits()).collect();
        assert_eq!(pa, pb);
    }
}

#[test]
fn gbt_loss_never_increases() {
    let (x, y) = noisy_linear(1000, 1.0, 7);
    let clf = train_rows(&x, &y, &config(ModelKind::Gbt)).unwrap();
    // Initial loss plus one entry per round.
    assert_eq!(clf.training_loss.len(), GbtParams::default().n_rounds + 1);
    assert!(clf.training_loss.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn width_mismatch_is_an_error() {
    let clf = Classifier::logistic(0.0, vec![0.0; 3]);
    assert!(matches!(
        clf.predict_proba(&[1.0, 2.0]),
        Err(Error::FeatureWidth { .. })
    ));
    assert_eq!(clf.predict_proba(&[1.0, -4.0, 9.0]).unwrap(), 0.5);
}

fn set(child: u32, role: Role, cands: &[u32]) -> CandidateSet {
    CandidateSet {
        child: RecordIx(child),
        role,
        candidates: cands.iter().map(|&c| RecordIx(c)).collect(),
        truncated: 0,
    }
}

#[test]
fn training_set_counts() {
    let sets = vec![
        [set(0, Role::Mother, &[1, 2, 3, 4]), set(0, Role::Father, &[5, 6])],
        [set(1, Role::Mother, &[]), set(1, Role::Father, &[5])],
    ];
    let link = |child, parent, role, split| GroundTruthLink {
        child: RecordIx(child),
        parent: RecordIx(parent),
        role,
        split,
    };
    let links = vec![
        link(0, 3, Role::Mother, Split::Train),
        link(0, 6, Role::Father, Split::Test),
        // True mother outside the candidate set.
        link(1, 2, Role::Mother, Split::Train),
    ];
    let feats = |_c: RecordIx, p: RecordIx, _r: Role| FeatureVector([p.0 as f64; N_FEATURES]);
    let ts = build_training_set(&links, &sets, 10, 0, feats);
    assert_eq!((ts.positives, ts.negatives, ts.blocking_misses), (1, 3, 1));
    assert_eq!(ts.examples.iter().filter(|e| e.label).count(), 1);
    assert!(ts.examples.iter().all(|e| e.role == Role::Mother));

    let capped = build_training_set(&links, &sets, 1, 0, feats);
    assert_eq!((capped.positives, capped.negatives), (1, 1));
    assert_eq!(capped.examples, build_training_set(&links, &sets, 1, 0, feats).examples);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn analytic_gradient_matches_finite_differences(seed in any::<u64>(), l2 in 0.0f64..0.1) {
        let (x, y) = noisy_linear(60, 1.0, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, grad) = logistic::loss_and_gradient(&w, &x, &y, l2);
        for k in 0..w.len() {
            let h = 1e-5;
            let mut up = w.clone();
            up[k] += h;
            let mut dn = w.clone();
            dn[k] -= h;
            let fd = (logistic::loss_and_gradient(&up, &x, &y, l2).0 - logistic::loss_and_gradient(&dn, &x, &y, l2).0) / (2.0 * h);
            let scale = grad[k].abs().max(fd.abs()).max(1e-6);
            prop_assert!((grad[k] - fd).abs() / scale < 1e-4, "k={} analytic {} numeric {}", k, grad[k], fd);
        }
    }

    #[test]
    fn predictions_are_probabilities(seed in any::<u64>()) {
        let (x, y) = noisy_linear(100, 2.0, seed);
        prop_assume!(y.iter().any(|&t| t) && y.iter().any(|&t| !t));
        let clf = train_rows(&x, &y, &TrainConfig { gbt: GbtParams { n_rounds: 20, ..GbtParams::default() }, ..config(ModelKind::Gbt) }).unwrap();
        for p in clf.predict_many(&x).unwrap() {
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
