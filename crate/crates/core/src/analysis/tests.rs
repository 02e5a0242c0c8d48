use super::*;
use crate::graph::Precision;
use crate::semantics::{lme, lse};
use approx::assert_relative_eq;

#[test]
fn stability_pattern_in_f32() {
    let rows = stability_table(&STABILITY_INPUTS, Precision::f32());
    let values = [-0.69, -1e1, -1e2, -1e3, -1e4];
    let grads = [-0.5, -1.0, -1.0, -1.0, -1.0];
    for ((r, v), g) in rows.iter().zip(values).zip(grads) {
        assert!((r.fused_value - v).abs() <= 0.01 * v.abs(), "{r:?}");
        assert!((r.fused_grad - g).abs() <= 1e-3, "{r:?}");
        if r.x >= 100.0 {
            assert_eq!(r.naive_value, f64::NEG_INFINITY);
            assert!(r.naive_grad.is_nan());
        } else {
            assert!(r.naive_value.is_finite());
        }
    }
    let csv = stability_csv(&rows);
    assert!(csv.starts_with("x,naive_value"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn gap_examples() {
    assert_relative_eq!(demorgan_gap_and(&[0.5, 0.5]).unwrap(), 0.25);
    assert_relative_eq!(demorgan_gap_and(&[0.3, 0.8]).unwrap(), 0.06, epsilon = 1e-15);
    assert_eq!(demorgan_gap_and(&[0.0, 0.7, 0.2]).unwrap(), 0.0);
    assert_eq!(demorgan_gap_and(&[1.0, 1.0]).unwrap(), 0.0);
    assert_eq!(demorgan_gap_or(&[1.0, 0.4]).unwrap(), 0.0);
    assert_relative_eq!(
        demorgan_gap_or(&[0.7, 0.2]).unwrap(),
        demorgan_gap_and(&[0.3, 0.8]).unwrap(),
        epsilon = 1e-15
    );
    assert_eq!(demorgan_gap_and(&[1.2]), Err(AnalysisError::OutOfRange(1.2)));
    assert!(demorgan_gap_or(&[]).is_err());
}

#[test]
fn gaps_are_nonnegative() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let n = rng.random_range(1..=10);
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        assert!(demorgan_gap_and(&x).unwrap() >= -1e-12);
        assert!(demorgan_gap_or(&x).unwrap() >= -1e-12);
    }
}

#[test]
fn peak_matches_diagonal_grid_search() {
    let (x, g) = demorgan_peak(2).unwrap();
    assert_eq!((x, g), (0.5, 0.25));
    let (x, g) = demorgan_peak(8).unwrap();
    assert!((x - 0.743).abs() < 0.002 && (g - 0.650).abs() < 0.002, "{x} {g}");
    let (xo, go) = demorgan_peak_or(8).unwrap();
    assert_relative_eq!(xo, 1.0 - x);
    assert_eq!(go, g);
    for n in 2..=10 {
        let steps = 100_000;
        let best = (0..=steps)
            .map(|i| i as f64 / steps as f64)
            .max_by(|a, b| (a - a.powi(n)).total_cmp(&(b - b.powi(n))))
            .unwrap();
        assert!((best - demorgan_peak(n as usize).unwrap().0).abs() <= 1e-5, "n = {n}");
    }
    assert!(demorgan_peak(1).is_err());
}

/// Mean of `min - prod` over the grid from order statistics: the minimum
/// of `n` grid coordinates is at least `k/(N-1)` with probability
/// `((N-k)/N)^n`, and the product's mean factorizes.
fn grid_oracle(n: usize, points: usize) -> f64 {
    let nn = points as f64;
    let e_min: f64 = (1..points).map(|k| ((nn - k as f64) / nn).powi(n as i32)).sum::<f64>() / (nn - 1.0);
    e_min - 0.5f64.powi(n as i32)
}

#[test]
fn grid_average_matches_order_statistics() {
    for (n, points) in [(2, 7), (3, 5), (4, 4), (2, 1000)] {
        let got = demorgan_average_grid(n, points, GapKind::And).unwrap();
        assert_relative_eq!(got, grid_oracle(n, points), epsilon = 1e-12);
        let or = demorgan_average_grid(n, points, GapKind::Or).unwrap();
        assert_relative_eq!(or, got, epsilon = 1e-12);
    }
    // the published two-variable average
    assert!((grid_oracle(2, 1000) - 0.083167).abs() < 5e-7);
}

#[test]
fn grid_average_converges() {
    let a = demorgan_average_grid(2, 2000, GapKind::And).unwrap();
    let b = demorgan_average_grid(2, 4000, GapKind::And).unwrap();
    assert!((a - b).abs() < 1e-4);
    assert!((b - 1.0 / 12.0).abs() < 1e-4);
}

#[test]
fn monte_carlo_average_matches_continuous_mean() {
    // E[min of n uniforms] = 1/(n+1), E[prod] = 2^-n
    for n in [2usize, 8] {
        let (m, se) = demorgan_average_mc(n, 200_000, GapKind::And, 3).unwrap();
        let want = 1.0 / (n as f64 + 1.0) - 0.5f64.powi(n as i32);
        assert!((m - want).abs() < 4.0 * se, "n = {n}: {m} vs {want} (se {se})");
    }
}

#[test]
fn summary_and_grid_dump() {
    let s = demorgan_summary(2, GapKind::Or, 50, 1000, 0).unwrap();
    assert_eq!(s.peak_gap, 0.25);
    assert!(s.to_text().contains("kind = or"));
    let csv = demorgan_grid_csv(3, GapKind::And).unwrap();
    assert_eq!(csv.lines().count(), 10);
    assert!(csv.contains("0.5,0.5,0.25"));
}

#[test]
fn lme_bounds_hold() {
    let r = verify_lme_bounds(10_000, 20, (0.1, 10.0), 7, 1e-9).unwrap();
    assert_eq!(r.violations, 0);
    assert!(r.max_value <= 0.0);
    assert!(verify_lme_bounds(1, 2, (0.0, 1.0), 0, 0.0).is_err());
    assert_relative_eq!(lme(&[-0.4; 5], 3.0).unwrap(), -0.4, epsilon = 1e-15);
    assert_eq!(lme(&[-0.7], 2.0).unwrap(), -0.7);
    // LogSumExp is not bounded by zero
    assert!(lse(&[0.0, 0.0], 1.0).unwrap() > 0.0);
}

#[test]
fn exact_max_passes_gradient_to_one_entry_per_group() {
    use crate::formula::parse_formula;
    use crate::nnf::to_nnf;
    use crate::semantics::{SemanticsConfig, SemanticsKind};
    let task = crate::experiments::ClusterTask::generate(
        &crate::experiments::ClusterOptions {
            points: 20,
            ..Default::default()
        },
        0,
    )
    .unwrap();
    let (_, env) = crate::experiments::build_cluster_kb(&task, 0).unwrap();
    let f = to_nnf(&parse_formula("forall x (exists c C(x, c))").unwrap());
    let max = SemanticsConfig::new(SemanticsKind::LogLtnMax, 10);
    let s = existential_gradient_support(&f, &env, &max, 0).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].groups, 20);
    assert!(s[0].is_one_hot(), "{:?}", s[0]);
    let lme = SemanticsConfig::new(SemanticsKind::LogLtn, 10);
    let s = existential_gradient_support(&f, &env, &lme, 0).unwrap();
    assert_eq!(s[0].min_nonzero, 5);
}
