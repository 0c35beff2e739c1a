use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use svmcure::data::{standardize_covariates, Dataset, IntervalObservation};
use svmcure::em::{
    bootstrap_from_resamples, bootstrap_se, fit_em, initial_latency, EmConfig, IncidenceKind,
};
use svmcure::evaluation::run_dataset;
use svmcure::seeding::substream;
use svmcure::simulation::{generate_dataset, Scenario, ScenarioSpec};
use svmcure::svm::{tune_hyperparams, HyperParams, IncidenceSvm};

fn scenario_data(scenario: Scenario, n: usize, seed: u64) -> Dataset {
    generate_dataset(&ScenarioSpec::new(scenario, n), &mut substream(seed, 0)).unwrap()
}

fn quick_svm() -> EmConfig {
    EmConfig {
        grid: vec![HyperParams { c: 1.0, sigma2: 1.0 }],
        seed: 5,
        ..EmConfig::default()
    }
}

#[test]
fn single_iteration_cap() {
    let d = standardize_covariates(&scenario_data(Scenario::Linear, 80, 1)).unwrap();
    for cfg in [quick_svm(), quick_svm().with_incidence(IncidenceKind::Logistic)] {
        let fit = fit_em(&d, &EmConfig { max_iter: 1, ..cfg }).unwrap();
        assert_eq!(fit.trace.len(), 1);
        assert_eq!(fit.iterations, 1);
    }
}

#[test]
fn svm_fit_is_deterministic() {
    let d = standardize_covariates(&scenario_data(Scenario::Quadratic, 120, 2)).unwrap();
    let cfg = EmConfig {
        grid: vec![HyperParams { c: 1.0, sigma2: 1.0 }, HyperParams { c: 10.0, sigma2: 0.5 }],
        max_iter: 15,
        ..quick_svm()
    };
    let a = fit_em(&d, &cfg).unwrap();
    let b = fit_em(&d, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn fit_result_invariants() {
    let d = standardize_covariates(&scenario_data(Scenario::Trigonometric, 150, 3)).unwrap();
    for cfg in [quick_svm(), quick_svm().with_incidence(IncidenceKind::Logistic)] {
        let fit = fit_em(&d, &cfg).unwrap();
        assert!(fit.pi_hat.iter().all(|&p| p > 0.0 && p < 1.0));
        for (o, w) in d.observations.iter().zip(&fit.weights) {
            assert!((0.0..=1.0).contains(w));
            if o.event {
                assert_eq!(*w, 1.0);
            }
        }
        if fit.converged {
            assert!(fit.trace.last().unwrap().change < cfg.epsilon);
        }
    }
}

#[test]
fn logistic_branch_increases_likelihood() {
    for k in 0..5 {
        let d = scenario_data(Scenario::Linear, 200, 40 + k);
        let cfg = EmConfig::default().with_incidence(IncidenceKind::Logistic);
        let fit = fit_em(&d, &cfg).unwrap();
        for pair in fit.trace.windows(2) {
            assert!(
                pair[1].log_likelihood >= pair[0].log_likelihood - 1e-8,
                "dataset {k}: {} then {}",
                pair[0].log_likelihood,
                pair[1].log_likelihood
            );
        }
    }
}

#[test]
fn identical_resamples_have_zero_spread() {
    let d = scenario_data(Scenario::Linear, 100, 6);
    let cfg = EmConfig::default().with_incidence(IncidenceKind::Logistic);
    let mut rng = substream(6, 1);
    let idx: Vec<usize> = (0..d.len()).map(|_| rng.random_range(0..d.len())).collect();
    let s = bootstrap_from_resamples(&d, &cfg, &[idx.clone(), idx]).unwrap();
    assert_eq!(s.se_alpha, 0.0);
    assert!(s.se_gamma.iter().all(|&v| v == 0.0));
    assert_eq!(s.se_mean_pi, 0.0);
}

#[test]
fn resample_keeps_row_count() {
    let d = scenario_data(Scenario::Linear, 37, 7);
    let mut rng = substream(7, 1);
    for _ in 0..10 {
        let idx: Vec<usize> = (0..d.len()).map(|_| rng.random_range(0..d.len())).collect();
        assert_eq!(d.resample(&idx).len(), d.len());
    }
}

#[test]
fn bootstrap_se_matches_monte_carlo_spread() {
    let d = scenario_data(Scenario::Linear, 300, 8);
    let cfg = EmConfig {
        bootstrap_b: 200,
        seed: 8,
        ..EmConfig::default().with_incidence(IncidenceKind::Logistic)
    };
    let s = bootstrap_se(&d, &cfg).unwrap();
    assert_eq!(s.replicates.len() + s.failed, 200);
    let se = s.se_gamma[0];
    assert!((se - 0.143).abs() <= 0.5 * 0.143, "SE(gamma_1) = {se}");
    let again = bootstrap_se(&d, &cfg).unwrap();
    assert_eq!(s, again);
}

#[test]
fn starting_shape_recovers_exponential_data() {
    let mut rng = substream(9, 0);
    let obs: Vec<IntervalObservation> = (0..500)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            let t = -(1.0 - rng.random::<f64>()).ln();
            IntervalObservation::new(t, t + 1e-6, vec![x], vec![x]).unwrap()
        })
        .collect();
    let d = Dataset::new(obs, vec!["x".into()], vec!["x".into()]).unwrap();
    let p0 = initial_latency(&d).unwrap();
    assert!((p0.alpha - 1.0).abs() < 0.15, "alpha0 = {}", p0.alpha);
}

#[test]
fn imputation_with_true_status_tracks_truth() {
    let d = scenario_data(Scenario::Linear, 300, 10);
    let z = d.z_rows();
    let status: Vec<bool> = d.observations.iter().map(|o| o.true_status.unwrap()).collect();
    let w: Vec<f64> = status.iter().map(|&s| f64::from(u8::from(s))).collect();
    let tuned = tune_hyperparams(&status, &z, &svmcure::svm::default_grid(), 5).unwrap();
    let svm = IncidenceSvm::new(&z, tuned.best).unwrap();
    let out = svm.estimate(&w, 5, &mut substream(10, 1)).unwrap();
    let err = d
        .observations
        .iter()
        .zip(&out.pi)
        .map(|(o, p)| (p - o.true_pi.unwrap()).abs())
        .sum::<f64>()
        / d.len() as f64;
    assert!(err < 0.15, "mean absolute error {err}");
}

#[test]
fn tuning_reaches_high_accuracy_on_quadratic_scenario() {
    let d = scenario_data(Scenario::Quadratic, 200, 11);
    let status: Vec<bool> = d.observations.iter().map(|o| o.true_status.unwrap()).collect();
    let tuned = tune_hyperparams(&status, &d.z_rows(), &svmcure::svm::default_grid(), 5).unwrap();
    assert!(tuned.accuracy >= 0.85, "accuracy {}", tuned.accuracy);
}

#[test]
fn study_datasets_depend_only_on_seed_and_index() {
    let spec = ScenarioSpec::new(Scenario::Linear, 50);
    let (a, sa) = run_dataset(&spec, 3, 4).unwrap();
    let (b, sb) = run_dataset(&spec, 3, 4).unwrap();
    let (c, _) = run_dataset(&spec, 3, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    assert_ne!(a, c);
}

#[test]
fn simulated_cure_fraction_matches_probabilities() {
    let d = scenario_data(Scenario::Linear, 5000, 12);
    let n = d.len() as f64;
    let cured = d.observations.iter().filter(|o| o.true_status == Some(false)).count() as f64 / n;
    let expected = d.observations.iter().map(|o| 1.0 - o.true_pi.unwrap()).sum::<f64>() / n;
    assert!((cured - expected).abs() <= 0.03, "{cured} vs {expected}");
    for o in &d.observations {
        assert_eq!(o.event, o.right.is_finite());
        if o.true_status == Some(false) {
            assert!(!o.event);
        }
    }
}

#[test]
fn censoring_proportion_in_reported_range() {
    let d = scenario_data(Scenario::Linear, 5000, 13);
    let censored = d.censored_indices().len() as f64 / d.len() as f64;
    assert!((0.55..=0.80).contains(&censored), "{censored}");
}

#[test]
fn scenario_one_cure_probabilities_in_range() {
    let mut rng = substream(14, 0);
    let total: f64 = (0..100_000)
        .map(|_| {
            let z = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
            1.0 - svmcure::simulation::scenario_pi(Scenario::Linear, &z).unwrap()
        })
        .sum();
    let mean = total / 100_000.0;
    assert!((0.45..=0.70).contains(&mean), "mean cure fraction {mean}");
}
