use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tsem_core::learners::LearnerKind;
use tsem_core::sim::*;
use tsem_core::tmle::ols;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn w2_has_its_bernoulli_mean() {
    let n = 100_000;
    let d = dgp_sample(&Scenario::new(ScenarioId::AteCorrect, 0.5), n, &mut rng(1)).unwrap();
    let j = d.column_index("W2").unwrap();
    let mean = d.w.column(j).mean();
    assert!((mean - 0.65).abs() < 3.0 * (0.65f64 * 0.35 / n as f64).sqrt(), "{mean}");
}

#[test]
fn mediator_regression_recovers_coefficients() {
    let n = 100_000;
    let d = dgp_sample(&Scenario::mediation(ScenarioId::MedCorrect), n, &mut rng(2)).unwrap();
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => d.a[i],
        _ => d.w[(i, 0)],
    });
    let fit = ols(&x, d.mediator().unwrap()).unwrap();
    for (j, truth) in [(1, 1.0), (2, 0.5)] {
        let se = fit.vcov[(j, j)].sqrt();
        assert!((fit.coef[j] - truth).abs() < 3.0 * se, "coef {j}: {}", fit.coef[j]);
    }
}

#[test]
fn sampling_is_reproducible() {
    for id in ScenarioId::ALL {
        let s = if id.is_mediation() { Scenario::mediation(id) } else { Scenario::new(id, 1.5) };
        let a = dgp_sample(&s, 200, &mut rng(7)).unwrap();
        let b = dgp_sample(&s, 200, &mut rng(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.column_names, s.covariate_names());
    }
    assert!(dgp_sample(&Scenario::new(ScenarioId::AteCorrect, 0.5), 49, &mut rng(1)).is_err());
}

#[test]
fn truth_table_examples() {
    let t = |s: Scenario, e| true_value(&s, e).unwrap();
    assert_eq!(t(Scenario::new(ScenarioId::AteCorrect, 0.5), Effect::Ate), 0.5);
    assert_eq!(t(Scenario::new(ScenarioId::Cate, 1.5), Effect::Cate), 2.0);
    assert_eq!(t(Scenario::mediation(ScenarioId::MedMisspecMWYW), Effect::Nie), 1.0);
    assert_eq!(t(Scenario::mediation(ScenarioId::MedCorrect), Effect::Te), 3.0);
    assert!(true_value(&Scenario::new(ScenarioId::AteCorrect, 0.5), Effect::Nde).is_err());
}

#[test]
fn small_oracle_agrees_with_truth() {
    // The full 10^7-draw comparison lives in the acceptance suite's fixture.
    for (s, e) in [
        (Scenario::new(ScenarioId::Cate, 0.5), Effect::Cate),
        (Scenario::mediation(ScenarioId::MedMisspecMWYW), Effect::Nde),
        (Scenario::mediation(ScenarioId::MedMisspecMWYW), Effect::Nie),
    ] {
        let o = oracle_contrast(&s, e, 200_000, &mut rng(3)).unwrap();
        let truth = true_value(&s, e).unwrap();
        assert!((o.mean - truth).abs() < 4.0 * o.se, "{} {e}: {} +- {}", s.label(), o.mean, o.se);
    }
}

fn spec(jobs: usize, n_sim: usize) -> GridSpec {
    GridSpec {
        scenarios: vec![Scenario::new(ScenarioId::AteCorrect, 0.5), Scenario::new(ScenarioId::Cate, 0.5)],
        methods: vec![Method::Tmle, Method::Regression],
        ns: vec![200, 300],
        n_sim,
        master_seed: 42,
        jobs,
        record_timing: false,
        config: EstimatorConfig::with_library(vec![LearnerKind::Glm, LearnerKind::GlmInteraction], 3),
    }
}

#[test]
fn grid_is_schedule_invariant() {
    let a = run_grid(&spec(1, 3)).unwrap();
    let b = run_grid(&spec(4, 3)).unwrap();
    assert_eq!(a.len(), 2 * 2 * 2 * 3);
    let bytes = |r: &[SimulationRecord]| {
        let mut buf = Vec::new();
        write_records(r, &mut buf).unwrap();
        buf
    };
    assert_eq!(bytes(&a), bytes(&b));
    let keys: Vec<_> = a.iter().map(|r| r.key()).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    for r in a.iter().filter(|r| r.method == "tmle") {
        assert!(r.mean_eif.unwrap().abs() <= 1e-6);
    }
}

#[test]
fn single_replication_single_cell() {
    let mut s = spec(1, 1);
    s.scenarios.truncate(1);
    s.methods = vec![Method::Regression];
    s.ns = vec![500];
    let r = run_grid(&s).unwrap();
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].effect, "ate");
    assert_eq!(r[0].seed, data_stream(&s.scenarios[0], 500, 0));
    let m = metrics_table(&r).unwrap();
    assert_eq!(m.len(), 1);
    assert_eq!(m[0].n_sim, 1);
}

#[test]
fn grid_rejects_unsupported_method() {
    let mut s = spec(1, 1);
    s.methods = vec![Method::Sem];
    assert!(run_grid(&s).is_err());
    let mut s = spec(1, 0);
    s.methods = vec![Method::Tmle];
    assert!(run_grid(&s).is_err());
}

#[test]
fn failed_estimates_are_recorded_and_excluded() {
    // n = 60 with W1 = 1 leaves roughly 30 rows, below the stratum minimum
    let mut s = spec(1, 2);
    s.scenarios = vec![Scenario::new(ScenarioId::Cate, 0.5)];
    s.methods = vec![Method::Tmle];
    s.ns = vec![60];
    let r = run_grid(&s).unwrap();
    assert_eq!(r.len(), 2);
    assert!(r.iter().all(|x| x.failed && x.estimate.is_nan()));
    let m = metrics_table(&r).unwrap();
    assert_eq!((m[0].n_sim, m[0].n_failed), (0, 2));
}

#[test]
fn mediation_cell_reports_three_effects() {
    let s = GridSpec {
        scenarios: vec![Scenario::mediation(ScenarioId::MedCorrect)],
        methods: vec![Method::Tmle, Method::Sem],
        ns: vec![300],
        n_sim: 1,
        master_seed: 1,
        jobs: 1,
        record_timing: false,
        config: EstimatorConfig {
            b_reps: 100,
            ..EstimatorConfig::with_library(vec![LearnerKind::Glm], 3)
        },
    };
    let r = run_grid(&s).unwrap();
    let effects: Vec<(&str, &str)> = r.iter().map(|x| (x.method.as_str(), x.effect.as_str())).collect();
    assert_eq!(
        effects,
        [("sem", "nde"), ("sem", "nie"), ("sem", "te"), ("tmle", "nde"), ("tmle", "nie"), ("tmle", "te")]
    );
    assert!(r.iter().all(|x| !x.failed && x.ci_lower <= x.ci_upper));
}
