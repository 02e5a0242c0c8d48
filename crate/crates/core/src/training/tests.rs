use super::*;
use crate::formula::{parse_kb, Knowledgebase};
use crate::graph::{Tape, Tensor};
use crate::predicates::{init_model, Constant, GroundingEnv, Head, ModelSpec, PredicateGrounding};
use crate::semantics::{SemanticsConfig, SemanticsKind};
use proptest::prelude::*;

fn atom_env(seed: u64) -> GroundingEnv {
    let mut env = GroundingEnv::new();
    env.add_constant("c", Constant::Features(vec![0.3, -0.8, 1.1]));
    env.add_constant("d", Constant::Features(vec![-0.5, 0.2, 0.4]));
    env.add_predicate(
        "P",
        PredicateGrounding::Neural(init_model("P", &ModelSpec::new(&[3, 8, 1], Head::Sigmoid), seed).unwrap()),
    );
    env
}

fn table_env(vals: &[f64]) -> GroundingEnv {
    let mut env = GroundingEnv::new();
    for i in 0..vals.len() {
        env.add_constant(&format!("k{i}"), Constant::Index(i));
    }
    env.add_predicate("T", PredicateGrounding::Table(Tensor::vector(vals.to_vec())));
    env
}

fn loss_value(kb: &Knowledgebase, env: &GroundingEnv, kind: SemanticsKind) -> f64 {
    let mut tape = Tape::new();
    let l = loss(kb, env, &SemanticsConfig::constant(kind, 1.0, 2.0), 0, &mut tape).unwrap();
    tape.value(l).item()
}

#[test]
fn loss_examples() {
    let eps = 1e-7;
    let squeeze = |x: f64| (1.0 - 2.0 * eps) * x + eps;
    let env = table_env(&[(-0.5f64).exp(), (-1.0f64).exp(), (-3.0f64).exp(), 1.0]);
    let one = parse_kb("T(@k0);").unwrap();
    let got = loss_value(&one, &env, SemanticsKind::LogLtn);
    assert!((got - -squeeze((-0.5f64).exp()).ln()).abs() < 1e-15);
    assert!((got - 0.5).abs() < 1e-6);
    let two = parse_kb("T(@k1); T(@k2);").unwrap();
    assert!((loss_value(&two, &env, SemanticsKind::LogLtn) - 2.0).abs() < 1e-5);
    let sat = parse_kb("T(@k3); T(@k3);").unwrap();
    assert!(loss_value(&sat, &env, SemanticsKind::LogLtn).abs() < 1e-6);
}

#[test]
fn adam_zero_gradient_and_constant_gradient() {
    let mut p = Tensor::vector(vec![1.0, -2.0]);
    let mut state = AdamState::for_params(std::slice::from_ref(&p));
    adam_step(&mut [&mut p], &[Tensor::vector(vec![0.5, -0.5])], &mut state, 0.01).unwrap();
    let m_before = state.first_moments()[0].clone();
    let before = p.clone();
    adam_step(&mut [&mut p], &[Tensor::zeros(&[2])], &mut state, 0.01).unwrap();
    // moments decay while the bias-corrected step continues in the old direction
    assert_eq!(state.first_moments()[0].data()[0], 0.9 * m_before.data()[0]);
    assert!(p.data()[0] < before.data()[0]);

    let mut q = Tensor::vector(vec![0.0]);
    let mut fresh = AdamState::for_params(std::slice::from_ref(&q));
    adam_step(&mut [&mut q], &[Tensor::zeros(&[1])], &mut fresh, 0.01).unwrap();
    assert_eq!(q.data()[0], 0.0);
    for i in 0..300 {
        let prev = q.data()[0];
        adam_step(&mut [&mut q], &[Tensor::vector(vec![3.0])], &mut fresh, 0.01).unwrap();
        if i >= 100 {
            assert!((prev - q.data()[0] - 0.01).abs() < 1e-3);
        }
    }
    let err = adam_step(&mut [&mut q], &[Tensor::zeros(&[2])], &mut fresh, 0.01);
    assert!(matches!(err, Err(TrainError::Shape(_))));
}

/// Rand index adjusted for chance, counting every pair explicitly.
fn ari_by_pairs(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let (mut both, mut only_a, mut only_b, mut total) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            total += 1.0;
            if sa && sb {
                both += 1.0;
            }
            if sa {
                only_a += 1.0;
            }
            if sb {
                only_b += 1.0;
            }
        }
    }
    let expected = only_a * only_b / total;
    let max = 0.5 * (only_a + only_b);
    if max == expected {
        return 1.0;
    }
    (both - expected) / (max - expected)
}

#[test]
fn ari_examples() {
    let t = [0, 0, 1, 1, 2, 2];
    assert_eq!(adjusted_rand_index(&t, &t).unwrap(), 1.0);
    assert_eq!(adjusted_rand_index(&[5, 5, 7, 7, 1, 1], &t).unwrap(), 1.0);
    assert_eq!(adjusted_rand_index(&[0; 6], &t).unwrap(), 0.0);
    assert!(adjusted_rand_index(&[0; 5], &t).is_err());
}

proptest! {
    #[test]
    fn ari_matches_pair_counting(
        labels in (1usize..=12).prop_flat_map(|n| (
            proptest::collection::vec(0usize..4, n),
            proptest::collection::vec(0usize..4, n),
        ))
    ) {
        let (a, b) = labels;
        let got = adjusted_rand_index(&a, &b).unwrap();
        prop_assert!((got - ari_by_pairs(&a, &b)).abs() < 1e-12);
        prop_assert!((-1.0..=1.0 + 1e-12).contains(&got));
    }
}

#[test]
fn single_atom_saturates() {
    let kb = parse_kb("P(@c);").unwrap();
    for seed in 0..10 {
        let mut env = atom_env(seed);
        let sem = SemanticsConfig::new(SemanticsKind::LogLtn, 200);
        let rec = train(&kb, &mut env, &sem, &TrainConfig::new(200, 0.01, seed)).unwrap();
        assert_eq!(rec.rows.len(), 200);
        assert!(
            rec.final_row().unwrap().sat > 0.99,
            "seed {seed}: {:?}",
            rec.final_row()
        );
        assert_eq!(rec.rows[0].alpha, 1.0);
        assert_eq!(rec.rows[199].alpha, 4.0);
    }
}

#[test]
fn training_is_deterministic() {
    let kb = parse_kb("a: P(@c); b: not P(@d);").unwrap();
    let sem = SemanticsConfig::new(SemanticsKind::LogLtn, 30);
    let run = || {
        let mut env = atom_env(3);
        train(&kb, &mut env, &sem, &TrainConfig::new(30, 0.01, 3))
            .unwrap()
            .to_csv()
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a.starts_with("step,loss,sat,alpha,p,sat_a,sat_b\n"));
    assert_eq!(a.lines().count(), 31);
}

#[test]
fn nan_aborts_naming_the_formula() {
    let kb = parse_kb("fine: P(@c); broken: Q(@c);").unwrap();
    let mut env = atom_env(0);
    let mut q = init_model("Q", &ModelSpec::new(&[3, 1], Head::Sigmoid), 1).unwrap();
    q.layers[0].bias.data_mut()[0] = f64::NAN;
    env.add_predicate("Q", PredicateGrounding::Neural(q));
    let sem = SemanticsConfig::new(SemanticsKind::LogLtn, 5);
    let err = train(&kb, &mut env, &sem, &TrainConfig::new(5, 0.01, 0)).unwrap_err();
    assert_eq!(
        err,
        TrainError::NonFinite {
            step: 0,
            formula: "broken".into()
        }
    );
}

#[test]
fn train_config_validation() {
    assert!(TrainConfig::new(0, 0.1, 0).validate().is_err());
    assert!(TrainConfig::new(5, -0.1, 0).validate().is_err());
    assert!(TrainConfig::new(5, 0.1, 0).validate().is_ok());
}

#[test]
fn full_cluster_loss_passes_gradcheck_under_every_config() {
    use crate::experiments::{build_cluster_kb, ClusterOptions, ClusterTask};
    use crate::semantics::SemanticsKind;
    let opts = ClusterOptions {
        points: 16,
        hidden: vec![4],
        ..ClusterOptions::default()
    };
    let task = ClusterTask::generate(&opts, 0).unwrap();
    let (kb, env) = build_cluster_kb(&task, 0).unwrap();
    for kind in SemanticsKind::ALL {
        let cfg = crate::semantics::SemanticsConfig::new(kind, 10);
        let r = loss_gradcheck(&kb, &env, &cfg, 3, 1e-6).unwrap();
        assert!(r.max_rel_error < 1e-4, "{kind}: {}", r.max_rel_error);
    }
}
