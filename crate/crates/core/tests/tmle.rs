use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsem_core::data::Dataset;
use tsem_core::learners::LearnerKind;
use tsem_core::numeric::{expit, logit};
use tsem_core::sim::{dgp_sample, Scenario, ScenarioId};
use tsem_core::tmle::*;

fn light_ate() -> AteOptions {
    let lib = vec![LearnerKind::Glm, LearnerKind::GlmInteraction];
    AteOptions {
        q_library: lib.clone(),
        g_library: lib,
        v_folds: 3,
        ..AteOptions::default()
    }
}

/// Minimizer of the loss on a fixed grid over [-5, 5].
fn grid_argmin(loss: impl Fn(f64) -> f64) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=100_000 {
        let eps = -5.0 + k as f64 * 1e-4;
        let l = loss(eps);
        if l < best.0 {
            best = (l, eps);
        }
    }
    best.1
}

fn random_problem(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let offset: Vec<f64> = (0..n).map(|_| logit(rng.gen_range(0.1..0.9))).collect();
    let g1: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..0.8)).collect();
    let a: Vec<f64> = g1.iter().map(|&g| f64::from(rng.gen::<f64>() < g)).collect();
    (y, offset, g1, a)
}

#[test]
fn fluctuation_matches_grid_search() {
    for seed in 0..3 {
        let (y, offset, g1, a) = random_problem(seed, 200);
        let h: Vec<f64> = a.iter().zip(&g1).map(|(&a, &g)| clever_covariate_ate(a, g)).collect();
        let fit = fit_fluctuation(&y, &offset, &h, None);
        assert!(fit.converged);
        let grid = grid_argmin(|e| fluctuation_loss(&y, &offset, &h, None, e));
        assert!((fit.epsilon - grid).abs() < 1e-3, "{} vs {grid}", fit.epsilon);
    }
}

#[test]
fn mediation_fluctuations_match_grid_search() {
    let (y, offset, g1, a) = random_problem(9, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let ratio: Vec<f64> = (0..200).map(|_| rng.gen_range(0.5..2.0)).collect();
    let c_y: Vec<f64> = (0..200).map(|i| clever_covariate_y(a[i], g1[i], ratio[i])).collect();
    let fit = fluctuate_qbar(&y, &offset, &c_y);
    let grid = grid_argmin(|e| fluctuation_loss(&y, &offset, &c_y, None, e));
    assert!((fit.epsilon - grid).abs() < 1e-3);

    let fit = fluctuate_em(&y, &offset, &a, &g1).unwrap();
    let w: Vec<f64> = a.iter().map(|&v| f64::from(v == 0.0)).collect();
    let c_m: Vec<f64> = g1.iter().map(|g| 1.0 / (1.0 - g)).collect();
    let grid = grid_argmin(|e| fluctuation_loss(&y, &offset, &c_m, Some(&w), e));
    assert!((fit.epsilon - grid).abs() < 1e-3);
}

#[test]
fn targeted_fit_solves_score_equation() {
    let (y, offset, g1, a) = random_problem(4, 300);
    let h: Vec<f64> = a.iter().zip(&g1).map(|(&a, &g)| clever_covariate_ate(a, g)).collect();
    let fit = fit_fluctuation(&y, &offset, &h, None);
    let score: f64 = (0..300).map(|i| h[i] * (y[i] - expit(offset[i] + fit.epsilon * h[i]))).sum::<f64>() / 300.0;
    assert!(score.abs() < 1e-9);
}

/// Balanced arms, known propensity 1/2 and an intercept-only outcome model:
/// the targeted plug-in reduces to the difference in arm means (the IPW estimate).
#[test]
fn constant_propensity_reduces_to_ipw() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 400;
    let a: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let w = DMatrix::from_fn(n, 2, |_, _| rng.gen::<f64>());
    let y: Vec<f64> = (0..n).map(|i| 1.0 + a[i] + w[(i, 0)] + rng.gen::<f64>()).collect();
    let d = Dataset::new(w, a.clone(), y.clone(), None, vec!["W1".into(), "W2".into()]).unwrap();
    let opts = AteOptions {
        g_constant: Some(0.5),
        q_library: vec![LearnerKind::MeanOnly],
        ..light_ate()
    };
    let r = estimate_ate(&d, &opts, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let ipw = (0..n).map(|i| a[i] * y[i] / 0.5 - (1.0 - a[i]) * y[i] / 0.5).sum::<f64>() / n as f64;
    assert!((r.psi_hat - ipw).abs() < 1e-8, "{} vs {ipw}", r.psi_hat);
}

fn ate_sample(n: usize, seed: u64) -> Dataset {
    dgp_sample(&Scenario::new(ScenarioId::AteCorrect, 0.5), n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn mean_eif_is_zero_after_targeting() {
    for seed in 0..3 {
        let d = ate_sample(500, seed);
        let r = estimate_ate(&d, &light_ate(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert!(r.mean_eif().abs() <= 1e-6, "{}", r.mean_eif());
        assert!(r.ci_lower <= r.psi_hat && r.psi_hat <= r.ci_upper);
    }
    let d = dgp_sample(&Scenario::mediation(ScenarioId::MedCorrect), 500, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let lib = vec![LearnerKind::Glm, LearnerKind::GlmInteraction];
    let opts = MediationOptions {
        q_library: lib.clone(),
        g_library: lib.clone(),
        a_library: lib.clone(),
        em_library: lib,
        v_folds: 3,
        ..MediationOptions::default()
    };
    let r = estimate_nde_nie(&d, &opts, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    for rep in [&r.nde, &r.nie, &r.te] {
        assert!(rep.mean_eif().abs() <= 1e-6);
    }
    assert!((r.nde.psi_hat + r.nie.psi_hat - r.te.psi_hat).abs() < 1e-10);
}

#[test]
fn full_stratum_equals_ate() {
    let d = ate_sample(300, 5);
    let a = estimate_ate(&d, &light_ate(), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    let b = estimate_cate_stratified(&d, |_| true, &light_ate(), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn binary_outcome_is_supported() {
    let mut d = ate_sample(300, 7);
    d.y = d.y.iter().map(|&v| f64::from(v > 2.0)).collect();
    let r = estimate_ate(&d, &light_ate(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(r.scale.is_none());
    assert!(r.psi_hat.abs() <= 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncation_is_monotone(g in prop::collection::vec(0.0f64..1.0, 1..50), lo in 0.001f64..0.1, hi in 0.1f64..0.45) {
        let mut a = g.clone();
        let mut b = g.clone();
        let ca = truncate_propensity(&mut a, lo);
        let cb = truncate_propensity(&mut b, hi);
        prop_assert!(ca <= cb);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(*y >= hi && *y <= 1.0 - hi);
            prop_assert!((y - 0.5).abs() <= (x - 0.5).abs() + 1e-15);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn estimate_is_scale_equivariant(scale in 0.1f64..20.0, shift in -50.0f64..50.0, seed in 0u64..1000) {
        let d = ate_sample(200, seed);
        let mut e = d.clone();
        e.y = d.y.iter().map(|v| scale * v + shift).collect();
        let r = estimate_ate(&d, &light_ate(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let s = estimate_ate(&e, &light_ate(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        // exact up to rounding amplified by the conditioning of the learner designs
        prop_assert!((s.psi_hat - scale * r.psi_hat).abs() < 1e-6 * scale * r.psi_hat.abs().max(1.0));
        prop_assert!((s.se - scale * r.se).abs() < 1e-6 * scale * r.se.max(1.0));
    }
}
