use super::*;
use crate::graph::Tape;
use crate::semantics::{ground, SemanticsConfig, SemanticsKind};
use crate::training::adjusted_rand_index;

#[test]
fn valid_combo_examples() {
    assert_eq!(valid_combos(0).unwrap(), vec![[0, 0, 0, 0]]);
    assert_eq!(valid_combos(198).unwrap(), vec![[9, 9, 9, 9]]);
    assert!(valid_combos(130).unwrap().contains(&[3, 8, 9, 2]));
    assert!(valid_combos(199).is_err());
    // every 4-tuple has exactly one sum
    let total: usize = (0..=MAX_SUM).map(|n| valid_combos(n).unwrap().len()).sum();
    assert_eq!(total, 10_000);
    for n in [0, 57, 130, 198] {
        for [a, b, c, d] in valid_combos(n).unwrap() {
            assert_eq!(10 * a + b + 10 * c + d, n);
        }
    }
}

#[test]
fn sum_mask_layout() {
    let m = sum_mask(&[0, 198]).unwrap();
    assert_eq!(m.len(), 20_000);
    assert!(m[0] && m[19_999]);
    assert_eq!(m.iter().filter(|&&b| b).count(), 2);
}

#[test]
fn cluster_guard_density() {
    let task = ClusterTask::generate(&ClusterOptions::default(), 0).unwrap();
    let n = task.len();
    let close = task.close_mask().iter().filter(|&&b| b).count();
    // ordered pairs, diagonal excluded
    let density = close as f64 / (n * (n - 1)) as f64;
    assert!((density - 0.025).abs() < 0.001, "{density}");
    assert_eq!(task.labels.iter().filter(|&&l| l == 0).count(), n / 5);
}

#[test]
fn cluster_generation_is_seeded() {
    let a = ClusterTask::generate(&ClusterOptions::default(), 4).unwrap();
    let b = ClusterTask::generate(&ClusterOptions::default(), 4).unwrap();
    let c = ClusterTask::generate(&ClusterOptions::default(), 5).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_ne!(a.to_csv(), c.to_csv());
    let crowded = ClusterOptions {
        min_separation: 100.0,
        ..ClusterOptions::default()
    };
    assert!(ClusterTask::generate(&crowded, 0).is_err());
}

#[test]
fn cluster_kb_grounds_under_every_config() {
    let opts = ClusterOptions {
        points: 30,
        ..ClusterOptions::default()
    };
    let task = ClusterTask::generate(&opts, 1).unwrap();
    let (kb, env) = build_cluster_kb(&task, 0).unwrap();
    assert_eq!(kb.len(), 3);
    for kind in SemanticsKind::ALL {
        let cfg = SemanticsConfig::new(kind, 10);
        for nf in kb.formulas() {
            let f = &nf.formula;
            let f = if kind.is_log() {
                crate::nnf::to_nnf(f)
            } else {
                f.clone()
            };
            let mut tape = Tape::new();
            let t = ground(&f, &env, &cfg, 0, &mut tape).unwrap();
            assert!(tape.value(t.node).item().is_finite(), "{kind}");
        }
    }
}

#[test]
fn ari_of_true_labels_is_one() {
    let task = ClusterTask::generate(&ClusterOptions::default(), 2).unwrap();
    assert_eq!(adjusted_rand_index(&task.labels, &task.labels).unwrap(), 1.0);
}

#[test]
fn digit_model_outputs_distributions() {
    let task = DigitAddTask::generate(&DigitAddOptions::default(), 0).unwrap();
    let (kb, env) = build_digitadd_kb(&task.train[..4], &[8], 0).unwrap();
    assert_eq!(kb.len(), 1);
    let model = env.model("digit").unwrap();
    let mut total = vec![0.0; 5];
    for k in 0..DIGITS {
        let lp = crate::predicates::log_forward(model, &task.test_images, Some(k)).unwrap();
        for (t, v) in total.iter_mut().zip(lp) {
            *t += v.exp();
        }
    }
    for t in total {
        assert!((t - 1.0).abs() < 1e-12);
    }
}

#[test]
fn digit_features_are_standardized_and_separable() {
    let task = DigitAddTask::generate(&DigitAddOptions::default(), 3).unwrap();
    let d = task.dim();
    let rows: Vec<&Vec<f64>> = task.train.iter().flat_map(|s| s.images.iter()).collect();
    for k in 0..d {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64;
        let var = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / rows.len() as f64;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
    }
    // nearest class mean recovers the test labels
    let c = task.centers.data();
    let hits = task
        .test_images
        .data()
        .chunks(d)
        .zip(&task.test_labels)
        .filter(|(x, &l)| {
            let dist = |j: usize| (0..d).map(|k| (x[k] - c[j * d + k]).powi(2)).sum::<f64>();
            (0..DIGITS).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap() == l
        })
        .count();
    assert!(hits as f64 / task.test_labels.len() as f64 > 0.99);
}

#[test]
fn every_training_sum_has_a_valid_combo() {
    let task = DigitAddTask::generate(&DigitAddOptions::default(), 1).unwrap();
    for s in &task.train {
        assert!(valid_combos(s.sum).unwrap().contains(&s.digits));
    }
}

#[test]
fn feeder_cycles_through_epochs_deterministically() {
    let task = DigitAddTask::generate(&DigitAddOptions::default(), 0).unwrap();
    let mut a = DigitAddFeeder::new(&task.train, 32, 9);
    let mut b = DigitAddFeeder::new(&task.train, 32, 9);
    let n = task.train.len() / 32;
    let mut seen = 0;
    for _ in 0..n {
        let x = a.next_batch();
        assert_eq!(x, b.next_batch());
        seen += x.len();
    }
    assert_eq!(seen, task.train.len());
}
