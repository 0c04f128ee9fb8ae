use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tsem_core::error::Error;
use tsem_core::sem::optim::numeric_gradient;
use tsem_core::sem::*;
use tsem_core::tmle::ols;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// A random recursive model on `X0..X{k-1}` (edges only from lower to higher
/// index) with data simulated from it.
struct RandomModel {
    model: PathModel,
    data: PathData,
    parents: Vec<Vec<usize>>,
}

fn random_model(seed: u64, n: usize) -> RandomModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(3..=6);
    let names: Vec<String> = (0..k).map(|j| format!("X{j}")).collect();
    let mut parents = vec![Vec::new(); k];
    let mut coef = vec![Vec::new(); k];
    for to in 1..k {
        for from in 0..to {
            if rng.gen::<f64>() < 0.6 || from + 1 == to {
                parents[to].push(from);
                coef[to].push(rng.gen_range(-1.5..1.5));
            }
        }
    }
    let mut x = DMatrix::<f64>::zeros(n, k);
    for i in 0..n {
        for v in 0..k {
            let mut val = rng.gen_range(-1.0..1.0) * (v as f64) + normal(&mut rng) * (0.5 + 0.3 * v as f64);
            for (p, c) in parents[v].iter().zip(&coef[v]) {
                val += c * x[(i, *p)];
            }
            x[(i, v)] = val;
        }
    }
    let edges: Vec<(&str, &str)> = (0..k)
        .flat_map(|to| parents[to].iter().map(move |&from| (from, to)))
        .map(|(f, t)| (names[f].as_str(), names[t].as_str()))
        .collect();
    let model = PathModel::new(&edges, &[], &[]).unwrap();
    let data = PathData::new(names.clone(), x).unwrap();
    RandomModel { model, data, parents }
}

fn column(data: &PathData, name: &str) -> Vec<f64> {
    let j = data.names.iter().position(|c| c == name).unwrap();
    data.x.column(j).iter().copied().collect()
}

#[test]
fn ml_matches_equationwise_ols() {
    for seed in 0..20 {
        let rm = random_model(seed, 500);
        let fit = fit_path_model(
            &rm.model,
            &rm.data,
            FitOptions {
                start: StartValues::Naive,
                ..FitOptions::default()
            },
        )
        .unwrap();
        assert!(fit.converged, "seed {seed}");
        for (v, ps) in rm.parents.iter().enumerate() {
            if ps.is_empty() {
                continue;
            }
            let n = rm.data.n();
            let mut x = DMatrix::from_element(n, ps.len() + 1, 1.0);
            for (c, p) in ps.iter().enumerate() {
                let col = column(&rm.data, &format!("X{p}"));
                for i in 0..n {
                    x[(i, c + 1)] = col[i];
                }
            }
            let o = ols(&x, &column(&rm.data, &format!("X{v}"))).unwrap();
            for (c, p) in ps.iter().enumerate() {
                let ml = fit.param(&format!("X{p}"), &format!("X{v}")).unwrap();
                assert!((ml - o.coef[c + 1]).abs() < 1e-6, "seed {seed}: {ml} vs {}", o.coef[c + 1]);
            }
        }
    }
}

#[test]
fn saturated_fit_value_is_logdet_plus_k() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let k = 4;
        let names: Vec<String> = (0..k).map(|j| format!("V{j}")).collect();
        let edges: Vec<(&str, &str)> = (0..k)
            .flat_map(|t| (0..t).map(move |f| (f, t)))
            .map(|(f, t)| (names[f].as_str(), names[t].as_str()))
            .collect();
        let model = PathModel::new(&edges, &[], &[]).unwrap();
        let mix = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
        let z = DMatrix::from_fn(300, k, |_, _| normal(&mut rng));
        let data = PathData::new(names.clone(), z * mix).unwrap();
        let fit = fit_path_model(&model, &data, FitOptions::default()).unwrap();
        let s = SampleMoments::from_data(&model, &data).unwrap();
        let expected = s.s.determinant().ln() + k as f64;
        assert!((fit.fml - expected).abs() < 1e-6, "{} vs {expected}", fit.fml);
    }
}

#[test]
fn implied_moments_match_forward_simulation() {
    let model = PathModel::new(&[("A", "M"), ("A", "Y"), ("M", "Y")], &[], &[]).unwrap();
    // theta: edges A->M, A->Y, M->Y; intercepts M, Y; variances M, Y
    let theta = [0.7, -0.4, 1.2, 0.5, -1.0, 0.8, 1.5];
    let n = 400_000;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut x = DMatrix::<f64>::zeros(n, 3);
    for i in 0..n {
        let a = 1.0 + 2.0 * normal(&mut rng);
        let m = 0.5 + 0.7 * a + 0.8f64.sqrt() * normal(&mut rng);
        let y = -1.0 - 0.4 * a + 1.2 * m + 1.5f64.sqrt() * normal(&mut rng);
        x[(i, 0)] = a;
        x[(i, 1)] = m;
        x[(i, 2)] = y;
    }
    let data = PathData::new(vec!["A".into(), "M".into(), "Y".into()], x).unwrap();
    let s = SampleMoments::from_data(&model, &data).unwrap();
    let labels: Vec<String> = (0..model.n_free()).map(|j| model.param_label(j)).collect();
    assert_eq!(labels.len(), theta.len(), "{labels:?}");
    let (mu, sigma) = implied_moments(&model, &theta, &s);
    let order: Vec<usize> = ["A", "M", "Y"].iter().map(|v| model.var_index(v).unwrap()).collect();
    for (i, &vi) in order.iter().enumerate() {
        assert!((mu[vi] - s.ybar[vi]).abs() < 0.03, "mean of variable {i}");
        for &vj in &order {
            let tol = 0.03 * sigma[(vi, vi)].sqrt() * sigma[(vj, vj)].sqrt();
            assert!((sigma[(vi, vj)] - s.s[(vi, vj)]).abs() < tol);
        }
    }
}

#[test]
fn gradient_vanishes_at_optimum_and_matches_differences() {
    let rm = random_model(3, 400);
    let s = SampleMoments::from_data(&rm.model, &rm.data).unwrap();
    let fit = fit_path_moments(&rm.model, &s, FitOptions::default()).unwrap();
    let f = |t: &[f64]| fml_objective(&rm.model, t, &s);
    let g = numeric_gradient(&f, &fit.theta_hat);
    assert!(g.iter().all(|v| v.abs() < 1e-5), "{g:?}");

    // away from the optimum the numeric gradient agrees with a coarse secant
    let mut t = fit.theta_hat.clone();
    t[0] += 0.3;
    let g = numeric_gradient(&f, &t);
    let h = 1e-4;
    let mut tp = t.clone();
    let mut tm = t.clone();
    tp[0] += h;
    tm[0] -= h;
    let secant = (f(&tp) - f(&tm)) / (2.0 * h);
    assert!((g[0] - secant).abs() < 1e-5 * (1.0 + secant.abs()));
}

fn mediation_data(n: usize, seed: u64) -> PathData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::<f64>::zeros(n, 3);
    for i in 0..n {
        let a = f64::from(rng.gen::<f64>() < 0.5);
        let m = 0.5 * a + normal(&mut rng);
        let y = 0.3 * a + 0.8 * m + normal(&mut rng);
        x[(i, 0)] = a;
        x[(i, 1)] = m;
        x[(i, 2)] = y;
    }
    PathData::new(vec!["A".into(), "M".into(), "Y".into()], x).unwrap()
}

#[test]
fn wald_test_holds_size_under_null() {
    let model = PathModel::new(&[("A", "M"), ("A", "Y"), ("M", "Y")], &[], &[]).unwrap();
    let j = model.edge_param("A", "Y").unwrap().unwrap();
    let reps = 300;
    let mut rejections = 0;
    for r in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + r);
        let n = 1000;
        let mut x = DMatrix::<f64>::zeros(n, 3);
        for i in 0..n {
            let a = f64::from(rng.gen::<f64>() < 0.5);
            let m = 0.5 * a + normal(&mut rng);
            x[(i, 0)] = a;
            x[(i, 1)] = m;
            x[(i, 2)] = 0.8 * m + normal(&mut rng);
        }
        let data = PathData::new(vec!["A".into(), "M".into(), "Y".into()], x).unwrap();
        let fit = fit_path_model(&model, &data, FitOptions::default()).unwrap();
        let (_, p) = wald_test(&fit, j, 0.0);
        rejections += usize::from(p < 0.05);
    }
    let size = rejections as f64 / reps as f64;
    assert!((0.02..=0.09).contains(&size), "size {size}");
}

#[test]
fn bootstrap_rules() {
    let model = mediation_model(&[]).unwrap();
    let data = mediation_data(300, 1);
    let err = bootstrap_ci(&model, &data, |f| f.param("A", "Y"), 50, 0.95, &mut ChaCha8Rng::seed_from_u64(1));
    assert!(matches!(err, Err(Error::TooFewReplicates { got: 50, .. })));

    // delta method and bootstrap agree on the indirect effect
    let data = mediation_data(2000, 2);
    let fit = fit_path_model(&model, &data, FitOptions::default()).unwrap();
    let eff = effects_from_paths(&fit, "A", Some("M"), "Y").unwrap();
    let nie = eff.indirect.unwrap();
    let ci = bootstrap_ci(
        &model,
        &data,
        |f| Ok(f.param("A", "M")? * f.param("M", "Y")?),
        400,
        0.95,
        &mut ChaCha8Rng::seed_from_u64(3),
    )
    .unwrap();
    assert!((ci.se() / nie.se - 1.0).abs() < 0.2, "{} vs {}", ci.se(), nie.se);
    assert!(ci.lower < nie.estimate && nie.estimate < ci.upper);

    // same seed, same interval
    let again = bootstrap_ci(
        &model,
        &data,
        |f| Ok(f.param("A", "M")? * f.param("M", "Y")?),
        400,
        0.95,
        &mut ChaCha8Rng::seed_from_u64(3),
    )
    .unwrap();
    assert_eq!(ci, again);
}

#[test]
fn exact_linear_data_gives_degenerate_bootstrap() {
    // Y is an exact linear function of (A, M): every refit returns the same direct path.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 200;
    let mut x = DMatrix::<f64>::zeros(n, 3);
    for i in 0..n {
        let a = f64::from(rng.gen::<f64>() < 0.5);
        let m = 0.5 * a + normal(&mut rng);
        x[(i, 0)] = a;
        x[(i, 1)] = m;
        x[(i, 2)] = 0.3 * a + 0.8 * m + 1e-9 * normal(&mut rng);
    }
    let data = PathData::new(vec!["A".into(), "M".into(), "Y".into()], x).unwrap();
    let model = mediation_model(&[]).unwrap();
    let ci = bootstrap_ci(&model, &data, |f| f.param("A", "Y"), 100, 0.95, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!((ci.upper - ci.lower).abs() < 1e-6, "{:?}", (ci.lower, ci.upper));
    assert!((ci.lower - 0.3).abs() < 1e-6);
}

#[test]
fn effects_are_products_of_paths() {
    let model = mediation_model(&[]).unwrap();
    let fit = fit_path_model(&model, &mediation_data(1000, 9), FitOptions::default()).unwrap();
    let e = effects_from_paths(&fit, "A", Some("M"), "Y").unwrap();
    let (a, b, g) = (fit.param("A", "M").unwrap(), fit.param("M", "Y").unwrap(), fit.param("A", "Y").unwrap());
    assert_eq!(e.direct.estimate, g);
    assert!((e.indirect.unwrap().estimate - a * b).abs() < 1e-15);
    assert!((e.total.unwrap().estimate - (g + a * b)).abs() < 1e-15);
    // fixing the direct path removes it from the free parameters
    let fixed = PathModel::new(&[("A", "M"), ("A", "Y"), ("M", "Y")], &[(("A", "Y"), 0.0)], &[]).unwrap();
    assert_eq!(fixed.n_free(), model.n_free() - 1);
    let ff = fit_path_model(&fixed, &mediation_data(1000, 9), FitOptions::default()).unwrap();
    let ef = effects_from_paths(&ff, "A", Some("M"), "Y").unwrap();
    assert_eq!(ef.direct.estimate, 0.0);
    assert_eq!(ef.direct.se, 0.0);
}
